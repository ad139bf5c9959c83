use super::{real, shape_err, EngineError, Real};

pub const DEFAULT_LEARNING_RATE: f64 = 0.001;
pub const DEFAULT_MOMENTUM: f64 = 0.9;

/// Momentum buffers: one previous update per parameter tensor.
#[derive(Debug, Clone)]
pub struct OptimizerState<T: Real> {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Vec<Vec<T>>,
}

impl<T: Real> OptimizerState<T> {
    /// Zero velocity mirroring `params`.
    pub fn new(params: &[&[T]], learning_rate: f64, momentum: f64) -> Self {
        Self {
            learning_rate,
            momentum,
            velocity: params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
        }
    }

    pub fn velocity(&self) -> &[Vec<T>] {
        &self.velocity
    }
}

/// One heavy-ball step: `dw = -lr * g + momentum * dw`, then `w += dw`.
pub fn sgd_momentum_step<T: Real>(
    params: &mut [&mut [T]],
    grads: &[&[T]],
    state: &mut OptimizerState<T>,
) -> Result<(), EngineError> {
    if params.len() != grads.len() || params.len() != state.velocity.len() {
        return Err(shape_err("parameter, gradient and velocity lists differ in length"));
    }
    let lr: T = real(state.learning_rate);
    let mu: T = real(state.momentum);
    for ((w, g), v) in params.iter_mut().zip(grads).zip(state.velocity.iter_mut()) {
        if w.len() != g.len() || w.len() != v.len() {
            return Err(shape_err("parameter and gradient lengths differ"));
        }
        for ((w, g), v) in w.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
            *v = mu * *v - lr * *g;
            *w = *w + *v;
        }
    }
    Ok(())
}
