use super::tensor::Tensor;
use super::{real, shape_err, EngineError, Real};

/// Probability clamp applied before taking logarithms.
pub const BCE_EPSILON: f64 = 1e-7;

/// Probability above which a pixel is labelled foreground.
pub const DEFAULT_THRESHOLD: f64 = 0.45;

/// Mean binary cross-entropy over every element, with its gradient.
///
/// Predictions are clamped to `[eps, 1 - eps]`; the gradient is taken with
/// respect to the clamped value and passed straight through.
pub fn bce_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>), EngineError> {
    if pred.shape() != target.shape() {
        return Err(shape_err(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let eps: T = real(BCE_EPSILON);
    let hi = T::one() - eps;
    let n: T = real(pred.len() as f64);
    let mut total = 0.0f64;
    let mut grad = Tensor::zeros(pred.shape());
    for ((g, p), t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let p = p.max(eps).min(hi);
        let t = *t;
        let term = t * p.ln() + (T::one() - t) * (T::one() - p).ln();
        total -= term.to_f64().unwrap_or(f64::NAN);
        *g = -(t / p - (T::one() - t) / (T::one() - p)) / n;
    }
    let loss = real::<T>(total / pred.len() as f64).max(T::zero());
    Ok((loss, grad))
}

/// `1` where the map exceeds `threshold`, else `0`.
pub fn binarize<T: Real>(map: &Tensor<T>, threshold: T) -> Tensor<T> {
    map.map(|v| if v > threshold { T::one() } else { T::zero() })
}
