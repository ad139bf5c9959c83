use rayon::prelude::*;
use rustfft::num_complex::Complex;

use super::fft::{mac, mac_conj, FftGrid};
use super::tensor::Tensor;
use super::{activate, activation_grad, shape_err, EngineError, Real};
use crate::network_spec::Activation;

/// Same-padded, stride-1 convolution with weights shaped `(co, ci, k, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T: Real> {
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

impl<T: Real> ConvLayer<T> {
    pub fn new(weights: Tensor<T>, bias: Vec<T>, activation: Activation) -> Result<Self, EngineError> {
        let [co, _, k, k2] = weights.shape();
        if k != k2 || k % 2 == 0 {
            return Err(shape_err(format!("kernel must be square and odd, got {k}x{k2}")));
        }
        if bias.len() != co {
            return Err(shape_err(format!("{} biases for {co} output channels", bias.len())));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn kernel(&self) -> usize {
        self.weights.shape()[2]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }
}

/// State kept by [`conv_forward_cached`] for [`conv_backward`].
#[derive(Debug, Clone)]
pub struct ConvCache<T: Real> {
    input: Tensor<T>,
    output: Tensor<T>,
    weights: Tensor<T>,
    activation: Activation,
}

#[derive(Debug, Clone)]
pub struct ConvGrads<T: Real> {
    pub grad_x: Tensor<T>,
    pub grad_w: Tensor<T>,
    pub grad_b: Vec<T>,
}

fn zero_spec<T: Real>(len: usize) -> Vec<Complex<T>> {
    vec![Complex::new(T::zero(), T::zero()); len]
}

/// Spectra of every plane of `x`, indexed `b * c + ch`.
fn plane_spectra<T: Real>(grid: &FftGrid<T>, x: &Tensor<T>) -> Vec<Vec<Complex<T>>> {
    let [b, c, _, _] = x.shape();
    (0..b * c)
        .into_par_iter()
        .map_init(
            || grid.scratch(),
            |s, i| {
                let mut out = zero_spec(grid.spectrum_len());
                grid.forward(x.plane(i / c, i % c), &mut out, s);
                out
            },
        )
        .collect()
}

/// Pre-activation cross-correlation of `x` with `weights` plus `bias`.
pub(crate) fn correlate<T: Real>(
    x: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &[T],
) -> Result<Tensor<T>, EngineError> {
    let [b, ci, h, w] = x.shape();
    let [co, wci, k, _] = weights.shape();
    if wci != ci {
        return Err(shape_err(format!("input has {ci} channels, layer expects {wci}")));
    }
    let grid = FftGrid::<T>::new(h, w, k);
    let xs = plane_spectra(&grid, x);
    let per_co: Vec<Vec<T>> = (0..co)
        .into_par_iter()
        .map_init(
            || grid.scratch(),
            |s, o| {
                let kspecs: Vec<_> = (0..ci)
                    .map(|i| {
                        let mut spec = zero_spec(grid.spectrum_len());
                        grid.forward_kernel(weights.plane(o, i), k, &mut spec, s);
                        spec
                    })
                    .collect();
                let mut planes = vec![T::zero(); b * h * w];
                for bi in 0..b {
                    let mut acc = std::mem::take(&mut s.acc);
                    acc.fill(Complex::new(T::zero(), T::zero()));
                    for (i, ks) in kspecs.iter().enumerate() {
                        mac_conj(&mut acc, &xs[bi * ci + i], ks);
                    }
                    let dst = &mut planes[bi * h * w..(bi + 1) * h * w];
                    grid.inverse_plane(&mut acc, dst, s);
                    s.acc = acc;
                    for v in dst.iter_mut() {
                        *v = *v + bias[o];
                    }
                }
                planes
            },
        )
        .collect();
    let mut out = Tensor::zeros([b, co, h, w]);
    for (o, planes) in per_co.iter().enumerate() {
        for bi in 0..b {
            out.plane_mut(bi, o)
                .copy_from_slice(&planes[bi * h * w..(bi + 1) * h * w]);
        }
    }
    Ok(out)
}

/// Gradients of [`correlate`] given the gradient of its output.
pub(crate) fn correlate_backward<T: Real>(
    grad: &Tensor<T>,
    x: &Tensor<T>,
    weights: &Tensor<T>,
) -> Result<ConvGrads<T>, EngineError> {
    let [b, ci, h, w] = x.shape();
    let [co, _, k, _] = weights.shape();
    if grad.shape() != [b, co, h, w] {
        return Err(shape_err(format!(
            "output gradient {:?} does not match {:?}",
            grad.shape(),
            [b, co, h, w]
        )));
    }
    let grid = FftGrid::<T>::new(h, w, k);
    let gs = plane_spectra(&grid, grad);
    let xs = plane_spectra(&grid, x);

    let grad_b: Vec<T> = (0..co)
        .map(|o| {
            let mut s = T::zero();
            for bi in 0..b {
                for v in grad.plane(bi, o) {
                    s = s + *v;
                }
            }
            s
        })
        .collect();

    let gx_per_ci: Vec<Vec<T>> = (0..ci)
        .into_par_iter()
        .map_init(
            || grid.scratch(),
            |s, i| {
                let kspecs: Vec<_> = (0..co)
                    .map(|o| {
                        let mut spec = zero_spec(grid.spectrum_len());
                        grid.forward_kernel(weights.plane(o, i), k, &mut spec, s);
                        spec
                    })
                    .collect();
                let mut planes = vec![T::zero(); b * h * w];
                for bi in 0..b {
                    let mut acc = std::mem::take(&mut s.acc);
                    acc.fill(Complex::new(T::zero(), T::zero()));
                    for (o, ks) in kspecs.iter().enumerate() {
                        mac(&mut acc, &gs[bi * co + o], ks);
                    }
                    grid.inverse_plane(&mut acc, &mut planes[bi * h * w..(bi + 1) * h * w], s);
                    s.acc = acc;
                }
                planes
            },
        )
        .collect();
    let mut grad_x = Tensor::zeros([b, ci, h, w]);
    for (i, planes) in gx_per_ci.iter().enumerate() {
        for bi in 0..b {
            grad_x
                .plane_mut(bi, i)
                .copy_from_slice(&planes[bi * h * w..(bi + 1) * h * w]);
        }
    }

    let kk = k * k;
    let gw: Vec<Vec<T>> = (0..co * ci)
        .into_par_iter()
        .map_init(
            || grid.scratch(),
            |s, idx| {
                let (o, i) = (idx / ci, idx % ci);
                let mut acc = std::mem::take(&mut s.acc);
                acc.fill(Complex::new(T::zero(), T::zero()));
                for bi in 0..b {
                    mac_conj(&mut acc, &xs[bi * ci + i], &gs[bi * co + o]);
                }
                let mut block = vec![T::zero(); kk];
                grid.inverse_kernel(&mut acc, k, &mut block, s);
                s.acc = acc;
                block
            },
        )
        .collect();
    let grad_w = Tensor::from_vec([co, ci, k, k], gw.concat())?;
    Ok(ConvGrads {
        grad_x,
        grad_w,
        grad_b,
    })
}

/// Convolution, bias and activation; returns the output and the backward cache.
pub fn conv_forward_cached<T: Real>(
    x: &Tensor<T>,
    layer: &ConvLayer<T>,
) -> Result<(Tensor<T>, ConvCache<T>), EngineError> {
    let pre = correlate(x, &layer.weights, &layer.bias)?;
    let out = pre.map(|v| activate(layer.activation, v));
    let cache = ConvCache {
        input: x.clone(),
        output: out.clone(),
        weights: layer.weights.clone(),
        activation: layer.activation,
    };
    Ok((out, cache))
}

pub fn conv_forward<T: Real>(x: &Tensor<T>, layer: &ConvLayer<T>) -> Result<Tensor<T>, EngineError> {
    conv_forward_cached(x, layer).map(|(out, _)| out)
}

pub fn conv_backward<T: Real>(
    grad_out: &Tensor<T>,
    cache: &ConvCache<T>,
) -> Result<ConvGrads<T>, EngineError> {
    if grad_out.shape() != cache.output.shape() {
        return Err(shape_err("output gradient shape differs from forward output"));
    }
    let mut grad_pre = grad_out.clone();
    for (g, y) in grad_pre.data_mut().iter_mut().zip(cache.output.data()) {
        *g = *g * activation_grad(cache.activation, *y);
    }
    correlate_backward(&grad_pre, &cache.input, &cache.weights)
}
