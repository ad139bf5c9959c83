use super::tensor::Tensor;
use super::{shape_err, EngineError, Real};

/// Argmax positions recorded by [`maxpool2`]: for every pooled element, the
/// flat offset of the winning input pixel within its plane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolIndices {
    input_shape: [usize; 4],
    argmax: Vec<u32>,
}

impl PoolIndices {
    pub fn input_shape(&self) -> [usize; 4] {
        self.input_shape
    }

    pub fn pooled_shape(&self) -> [usize; 4] {
        let [b, c, h, w] = self.input_shape;
        [b, c, h / 2, w / 2]
    }

    pub fn argmax(&self) -> &[u32] {
        &self.argmax
    }
}

/// 2x2 stride-2 max pooling. Ties go to the first pixel in row-major order.
pub fn maxpool2<T: Real>(x: &Tensor<T>) -> Result<(Tensor<T>, PoolIndices), EngineError> {
    let [b, c, h, w] = x.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(EngineError::OddSpatialDim { height: h, width: w });
    }
    let (ph, pw) = (h / 2, w / 2);
    let mut out = Tensor::zeros([b, c, ph, pw]);
    let mut argmax = Vec::with_capacity(b * c * ph * pw);
    for bi in 0..b {
        for ch in 0..c {
            let src = x.plane(bi, ch);
            let dst = out.plane_mut(bi, ch);
            for y in 0..ph {
                for xx in 0..pw {
                    let mut best = (2 * y) * w + 2 * xx;
                    for cand in [best + 1, best + w, best + w + 1] {
                        if src[cand] > src[best] {
                            best = cand;
                        }
                    }
                    dst[y * pw + xx] = src[best];
                    argmax.push(best as u32);
                }
            }
        }
    }
    Ok((
        out,
        PoolIndices {
            input_shape: x.shape(),
            argmax,
        },
    ))
}

/// Scatters `values` back to the recorded argmax positions, zeros elsewhere.
/// Also the backward pass of [`maxpool2`].
pub fn unpool2<T: Real>(values: &Tensor<T>, idx: &PoolIndices) -> Result<Tensor<T>, EngineError> {
    if values.shape() != idx.pooled_shape() {
        return Err(shape_err(format!(
            "unpool input {:?} does not match recorded pooling {:?}",
            values.shape(),
            idx.pooled_shape()
        )));
    }
    let [b, c, _, _] = idx.input_shape;
    let mut out = Tensor::zeros(idx.input_shape);
    let n = values.plane_len();
    for bi in 0..b {
        for ch in 0..c {
            let base = (bi * c + ch) * n;
            let src = values.plane(bi, ch);
            let dst = out.plane_mut(bi, ch);
            for (j, v) in src.iter().enumerate() {
                dst[idx.argmax[base + j] as usize] = *v;
            }
        }
    }
    Ok(out)
}

/// Backward pass of [`unpool2`]: reads the gradient at each argmax position.
pub(crate) fn unpool2_backward<T: Real>(
    grad: &Tensor<T>,
    idx: &PoolIndices,
) -> Result<Tensor<T>, EngineError> {
    if grad.shape() != idx.input_shape {
        return Err(shape_err("unpool gradient does not match the recorded input shape"));
    }
    let [b, c, _, _] = idx.input_shape;
    let mut out = Tensor::zeros(idx.pooled_shape());
    let n = out.plane_len();
    for bi in 0..b {
        for ch in 0..c {
            let base = (bi * c + ch) * n;
            let src = grad.plane(bi, ch);
            for (j, v) in out.plane_mut(bi, ch).iter_mut().enumerate() {
                *v = src[idx.argmax[base + j] as usize];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix;

    #[test]
    fn picks_block_maximum() {
        let x = Tensor::from_vec([1, 1, 2, 2], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let (p, idx) = maxpool2(&x).unwrap();
        assert_eq!(p.data(), &[4.0]);
        assert_eq!(idx.argmax(), &[3]);
    }

    #[test]
    fn odd_sides_rejected() {
        let x = Tensor::<f32>::zeros([1, 1, 3, 4]);
        assert!(matches!(maxpool2(&x), Err(EngineError::OddSpatialDim { height: 3, width: 4 })));
    }

    #[test]
    fn unpool_lands_on_argmax() {
        let mut rng = SplitMix::new(4);
        let x = Tensor::from_fn([2, 3, 6, 8], |_| rng.next_f64() + 0.1);
        let (p, idx) = maxpool2(&x).unwrap();
        let u = unpool2(&p, &idx).unwrap();
        let mut nonzero = 0;
        for (i, v) in u.data().iter().enumerate() {
            if *v != 0.0 {
                nonzero += 1;
                assert_eq!(*v, x.data()[i]);
            }
        }
        assert_eq!(nonzero, p.len());
        let back = unpool2_backward(&u, &idx).unwrap();
        assert_eq!(back.data(), p.data());
    }
}
