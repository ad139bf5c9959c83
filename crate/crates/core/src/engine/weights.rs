//! Binary weight files.
//!
//! Main file, little-endian: `SPDN`, version `u32 = 1`, layer count `u32`, then
//! per layer `k, ci, co` as `u32`, a `u8` bias flag, `co*ci*k*k` weights as
//! `f32` in `(co, ci, ky, kx)` order and `co` biases when flagged.
//!
//! Batch-norm state goes to a sidecar `<path>.bn`: `SPBN`, version, layer
//! count, then per layer a `u8` presence flag and, when present, the channel
//! count followed by gamma, beta, running mean and running variance.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::batchnorm::BatchNorm;
use super::network::Network;
use super::tensor::Tensor;
use super::{EngineError, Real};

const MAGIC: &[u8; 4] = b"SPDN";
const BN_MAGIC: &[u8; 4] = b"SPBN";
const VERSION: u32 = 1;

fn format_err(msg: impl Into<String>) -> EngineError {
    EngineError::WeightsFormat(msg.into())
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_reals<T: Real>(out: &mut Vec<u8>, vs: &[T]) {
    for v in vs {
        let f = v.to_f32().unwrap_or(f32::NAN);
        out.extend_from_slice(&f.to_le_bytes());
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], EngineError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len());
        let end = end.ok_or_else(|| format_err("file is truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, EngineError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, EngineError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }

    fn reals<T: Real>(&mut self, n: usize) -> Result<Vec<T>, EngineError> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| format_err("size overflow"))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| T::from(f32::from_le_bytes(c.try_into().expect("four bytes"))).expect("f32 fits"))
            .collect())
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<usize, EngineError> {
        if self.take(4)? != magic {
            return Err(format_err(format!(
                "missing {} magic",
                String::from_utf8_lossy(magic)
            )));
        }
        let v = self.u32()?;
        if v != VERSION {
            return Err(format_err(format!("unsupported version {v}")));
        }
        Ok(self.u32()? as usize)
    }

    fn finish(&self) -> Result<(), EngineError> {
        if self.pos != self.buf.len() {
            return Err(format_err("trailing bytes after the last layer"));
        }
        Ok(())
    }
}

/// Serializes convolution weights and biases.
pub fn write_weights<T: Real>(net: &Network<T>, mut out: impl Write) -> Result<(), EngineError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, VERSION);
    put_u32(&mut buf, net.convs.len() as u32);
    for c in &net.convs {
        put_u32(&mut buf, c.kernel() as u32);
        put_u32(&mut buf, c.in_channels() as u32);
        put_u32(&mut buf, c.out_channels() as u32);
        buf.push(1);
        put_reals(&mut buf, c.weights.data());
        put_reals(&mut buf, &c.bias);
    }
    out.write_all(&buf)?;
    Ok(())
}

/// Loads weights into `net`, whose architecture must match the file.
pub fn read_weights<T: Real>(net: &mut Network<T>, mut input: impl Read) -> Result<(), EngineError> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    let mut cur = Cursor { buf: &buf, pos: 0 };
    let n = cur.header(MAGIC)?;
    if n != net.convs.len() {
        return Err(format_err(format!(
            "file has {n} layers, network has {}",
            net.convs.len()
        )));
    }
    for (i, c) in net.convs.iter_mut().enumerate() {
        let (k, ci, co) = (cur.u32()? as usize, cur.u32()? as usize, cur.u32()? as usize);
        if (k, ci, co) != (c.kernel(), c.in_channels(), c.out_channels()) {
            return Err(format_err(format!(
                "layer {i}: file has k={k} ci={ci} co={co}, network has k={} ci={} co={}",
                c.kernel(),
                c.in_channels(),
                c.out_channels()
            )));
        }
        let has_bias = cur.u8()?;
        c.weights = Tensor::from_vec([co, ci, k, k], cur.reals(co * ci * k * k)?)?;
        c.bias = match has_bias {
            0 => vec![T::zero(); co],
            1 => cur.reals(co)?,
            other => return Err(format_err(format!("bad bias flag {other}"))),
        };
    }
    cur.finish()
}

fn write_norms<T: Real>(net: &Network<T>) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(BN_MAGIC);
    put_u32(&mut buf, VERSION);
    put_u32(&mut buf, net.norms.len() as u32);
    for n in &net.norms {
        match n {
            None => buf.push(0),
            Some(bn) => {
                buf.push(1);
                put_u32(&mut buf, bn.channels() as u32);
                for v in [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var] {
                    put_reals(&mut buf, v);
                }
            }
        }
    }
    buf
}

fn read_norms<T: Real>(net: &mut Network<T>, buf: &[u8]) -> Result<(), EngineError> {
    let mut cur = Cursor { buf, pos: 0 };
    let n = cur.header(BN_MAGIC)?;
    if n != net.norms.len() {
        return Err(format_err("batch-norm sidecar layer count differs from the network"));
    }
    for (i, slot) in net.norms.iter_mut().enumerate() {
        let present = cur.u8()? == 1;
        match slot {
            Some(bn) if present => {
                let c = cur.u32()? as usize;
                if c != bn.channels() {
                    return Err(format_err(format!("layer {i}: batch-norm width {c}")));
                }
                *bn = BatchNorm {
                    gamma: cur.reals(c)?,
                    beta: cur.reals(c)?,
                    running_mean: cur.reals(c)?,
                    running_var: cur.reals(c)?,
                };
            }
            None if !present => {}
            _ => return Err(format_err(format!("layer {i}: batch-norm presence differs"))),
        }
    }
    cur.finish()
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".bn");
    PathBuf::from(s)
}

/// Writes `path`, plus `path.bn` when the network has batch norms.
pub fn save_weights<T: Real>(net: &Network<T>, path: &Path) -> Result<(), EngineError> {
    let mut buf = Vec::new();
    write_weights(net, &mut buf)?;
    fs::write(path, buf)?;
    if net.norms.iter().any(Option::is_some) {
        fs::write(sidecar(path), write_norms(net))?;
    }
    Ok(())
}

pub fn load_weights<T: Real>(net: &mut Network<T>, path: &Path) -> Result<(), EngineError> {
    read_weights(net, fs::File::open(path)?)?;
    if net.norms.iter().any(Option::is_some) {
        let side = sidecar(path);
        match fs::read(&side) {
            Ok(buf) => read_norms(net, &buf)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}
