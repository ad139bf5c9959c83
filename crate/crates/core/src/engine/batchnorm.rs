use super::tensor::Tensor;
use super::{real, shape_err, EngineError, Real};

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPSILON: f64 = 1e-5;

/// Per-channel batch normalization with running statistics for inference.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T: Real> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache<T: Real> {
    xhat: Tensor<T>,
    inv_std: Vec<T>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, x: &Tensor<T>) -> Result<(), EngineError> {
        if x.channels() != self.channels() {
            return Err(shape_err(format!(
                "batch norm over {} channels applied to {}",
                self.channels(),
                x.channels()
            )));
        }
        Ok(())
    }

    /// Normalizes with batch statistics. When `update` is set the running
    /// statistics move towards them (unbiased variance).
    pub fn forward_train(
        &mut self,
        x: &Tensor<T>,
        update: bool,
    ) -> Result<(Tensor<T>, BatchNormCache<T>), EngineError> {
        self.check(x)?;
        let [b, c, _, _] = x.shape();
        let n = b * x.plane_len();
        let eps: T = real(BN_EPSILON);
        let mom: T = real(BN_MOMENTUM);
        let nt: T = real(n as f64);
        let mut y = Tensor::zeros(x.shape());
        let mut xhat = Tensor::zeros(x.shape());
        let mut inv_std = Vec::with_capacity(c);
        for ch in 0..c {
            let mut sum = T::zero();
            for bi in 0..b {
                sum = sum + x.plane(bi, ch).iter().copied().sum::<T>();
            }
            let mean = sum / nt;
            let mut sq = T::zero();
            for bi in 0..b {
                for v in x.plane(bi, ch) {
                    let d = *v - mean;
                    sq = sq + d * d;
                }
            }
            let var = sq / nt;
            let is = T::one() / (var + eps).sqrt();
            for bi in 0..b {
                let src = x.plane(bi, ch);
                let xh = xhat.plane_mut(bi, ch);
                for (o, v) in xh.iter_mut().zip(src) {
                    *o = (*v - mean) * is;
                }
                let dst = y.plane_mut(bi, ch);
                for (o, v) in dst.iter_mut().zip(xhat.plane(bi, ch)) {
                    *o = self.gamma[ch] * *v + self.beta[ch];
                }
            }
            inv_std.push(is);
            if update {
                let unbiased = if n > 1 { sq / real(n as f64 - 1.0) } else { var };
                self.running_mean[ch] = mom * self.running_mean[ch] + (T::one() - mom) * mean;
                self.running_var[ch] = mom * self.running_var[ch] + (T::one() - mom) * unbiased;
            }
        }
        Ok((y, BatchNormCache { xhat, inv_std }))
    }

    /// Normalizes with the running statistics.
    pub fn forward_eval(&self, x: &Tensor<T>) -> Result<Tensor<T>, EngineError> {
        self.check(x)?;
        let [b, c, _, _] = x.shape();
        let eps: T = real(BN_EPSILON);
        let mut y = x.clone();
        for ch in 0..c {
            let is = T::one() / (self.running_var[ch] + eps).sqrt();
            let scale = self.gamma[ch] * is;
            let shift = self.beta[ch] - self.running_mean[ch] * scale;
            for bi in 0..b {
                for v in y.plane_mut(bi, ch) {
                    *v = *v * scale + shift;
                }
            }
        }
        Ok(y)
    }

    /// Returns `(grad_x, grad_gamma, grad_beta)`.
    pub fn backward(
        &self,
        grad: &Tensor<T>,
        cache: &BatchNormCache<T>,
    ) -> Result<(Tensor<T>, Vec<T>, Vec<T>), EngineError> {
        if grad.shape() != cache.xhat.shape() {
            return Err(shape_err("batch norm gradient shape differs from forward input"));
        }
        let [b, c, _, _] = grad.shape();
        let nt: T = real((b * grad.plane_len()) as f64);
        let mut gx = Tensor::zeros(grad.shape());
        let mut gg = vec![T::zero(); c];
        let mut gb = vec![T::zero(); c];
        for ch in 0..c {
            let (mut sum_g, mut sum_gx) = (T::zero(), T::zero());
            for bi in 0..b {
                for (g, xh) in grad.plane(bi, ch).iter().zip(cache.xhat.plane(bi, ch)) {
                    sum_g = sum_g + *g;
                    sum_gx = sum_gx + *g * *xh;
                }
            }
            gb[ch] = sum_g;
            gg[ch] = sum_gx;
            let k = self.gamma[ch] * cache.inv_std[ch] / nt;
            for bi in 0..b {
                let xh = cache.xhat.plane(bi, ch);
                let g = grad.plane(bi, ch);
                for ((o, g), xh) in gx.plane_mut(bi, ch).iter_mut().zip(g).zip(xh) {
                    *o = k * (nt * *g - sum_g - *xh * sum_gx);
                }
            }
        }
        Ok((gx, gg, gb))
    }
}
