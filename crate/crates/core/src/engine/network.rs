use std::collections::HashMap;

use super::batchnorm::{BatchNorm, BatchNormCache};
use super::conv::{correlate, correlate_backward, ConvLayer};
use super::pool::{maxpool2, unpool2, unpool2_backward, PoolIndices};
use super::tensor::{concat_channels, split_channels, Tensor};
use super::{activate, activation_grad, shape_err, EngineError, Real};
use crate::network_spec::NetworkSpec;
use crate::rng::SplitMix;

/// A materialized [`NetworkSpec`]: one convolution (and optional batch norm)
/// per layer, in spec order.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T: Real> {
    spec: NetworkSpec,
    pub convs: Vec<ConvLayer<T>>,
    pub norms: Vec<Option<BatchNorm<T>>>,
}

/// Intermediate values of a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct Tape<T: Real> {
    conv_inputs: Vec<Tensor<T>>,
    activations: Vec<Tensor<T>>,
    norm_caches: Vec<Option<BatchNormCache<T>>>,
    pool_indices: HashMap<String, PoolIndices>,
    input_shape: [usize; 4],
}

impl<T: Real> Tape<T> {
    /// Post-activation values of every layer, before pooling.
    pub fn activations(&self) -> &[Tensor<T>] {
        &self.activations
    }

    /// Argmax record of a pooling layer.
    pub fn pool_indices(&self, layer: &str) -> Option<&PoolIndices> {
        self.pool_indices.get(layer)
    }
}

/// Gradients laid out like the parameters of a [`Network`].
#[derive(Debug, Clone)]
pub struct NetworkGrads<T: Real> {
    pub weights: Vec<Tensor<T>>,
    pub biases: Vec<Vec<T>>,
    pub gammas: Vec<Option<Vec<T>>>,
    pub betas: Vec<Option<Vec<T>>>,
    pub input: Tensor<T>,
}

impl<T: Real> NetworkGrads<T> {
    /// Flat views matching [`Network::parameters_mut`].
    pub fn as_slices(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for i in 0..self.weights.len() {
            out.push(self.weights[i].data());
            out.push(&self.biases[i]);
            if let (Some(g), Some(b)) = (&self.gammas[i], &self.betas[i]) {
                out.push(g);
                out.push(b);
            }
        }
        out
    }
}

/// Glorot-uniform weights, zero biases, identity batch norms.
pub fn build_network<T: Real>(spec: &NetworkSpec, seed: u64) -> Result<Network<T>, EngineError> {
    spec.validate()?;
    let mut rng = SplitMix::new(seed);
    let mut convs = Vec::with_capacity(spec.layers.len());
    let mut norms = Vec::with_capacity(spec.layers.len());
    for l in &spec.layers {
        let (ci, co, k) = (l.in_channels, l.out_channels, l.kernel);
        let kk = (k * k) as f64;
        let s = (6.0 / ((ci as f64 + co as f64) * kk)).sqrt();
        let w = Tensor::from_fn([co, ci, k, k], |_| {
            T::from(s * (2.0 * rng.next_f64() - 1.0)).expect("finite")
        });
        convs.push(ConvLayer::new(w, vec![T::zero(); co], l.activation)?);
        norms.push(l.batch_norm.then(|| BatchNorm::new(co)));
    }
    Ok(Network {
        spec: spec.clone(),
        convs,
        norms,
    })
}

impl<T: Real> Network<T> {
    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    /// Number of convolution weights (biases and batch-norm terms excluded).
    pub fn weight_count(&self) -> u64 {
        self.convs.iter().map(|c| c.weights.len() as u64).sum()
    }

    /// Every trainable value: weights, biases, then gammas and betas.
    pub fn parameter_count(&self) -> u64 {
        self.parameters().iter().map(|p| p.len() as u64).sum()
    }

    pub fn parameters(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for (c, n) in self.convs.iter().zip(&self.norms) {
            out.push(c.weights.data());
            out.push(&c.bias);
            if let Some(n) = n {
                out.push(&n.gamma);
                out.push(&n.beta);
            }
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for (c, n) in self.convs.iter_mut().zip(self.norms.iter_mut()) {
            out.push(c.weights.data_mut());
            out.push(&mut c.bias);
            if let Some(n) = n {
                out.push(&mut n.gamma);
                out.push(&mut n.beta);
            }
        }
        out
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(), EngineError> {
        if x.channels() != self.spec.input_channels {
            return Err(shape_err(format!(
                "network expects {} input channels, got {}",
                self.spec.input_channels,
                x.channels()
            )));
        }
        let m = 1usize << self.spec.pool_depth();
        if x.height() % m != 0 || x.width() % m != 0 {
            return Err(shape_err(format!(
                "input {}x{} is not divisible by {m}",
                x.height(),
                x.width()
            )));
        }
        Ok(())
    }

    fn gather_input(
        &self,
        i: usize,
        outputs: &HashMap<&str, Tensor<T>>,
        pools: &HashMap<String, PoolIndices>,
    ) -> Result<Tensor<T>, EngineError> {
        let l = &self.spec.layers[i];
        let parts: Vec<&Tensor<T>> = l
            .inputs
            .iter()
            .map(|s| outputs.get(s.as_str()).expect("validated spec order"))
            .collect();
        let x = if parts.len() == 1 {
            parts[0].clone()
        } else {
            concat_channels(&parts)?
        };
        match &l.unpool_from {
            Some(src) => unpool2(&x, &pools[src]),
            None => Ok(x),
        }
    }

    fn run(&mut self, x: &Tensor<T>, train: Option<bool>) -> Result<(Tensor<T>, Tape<T>), EngineError> {
        self.check_input(x)?;
        let n = self.spec.layers.len();
        let mut outputs: HashMap<&str, Tensor<T>> = HashMap::new();
        let mut tape = Tape {
            conv_inputs: Vec::with_capacity(n),
            activations: Vec::with_capacity(n),
            norm_caches: Vec::with_capacity(n),
            pool_indices: HashMap::new(),
            input_shape: x.shape(),
        };
        let spec = self.spec.clone();
        outputs.insert(&spec.input_id, x.clone());
        for (i, l) in spec.layers.iter().enumerate() {
            let input = self.gather_input(i, &outputs, &tape.pool_indices)?;
            let conv = &self.convs[i];
            let mut z = correlate(&input, &conv.weights, &conv.bias)?;
            let mut cache = None;
            if let Some(bn) = self.norms[i].as_mut() {
                z = match train {
                    Some(update) => {
                        let (y, c) = bn.forward_train(&z, update)?;
                        cache = Some(c);
                        y
                    }
                    None => bn.forward_eval(&z)?,
                };
            }
            let a = z.map(|v| activate(l.activation, v));
            let out = if l.pool {
                let (p, idx) = maxpool2(&a)?;
                tape.pool_indices.insert(l.id.clone(), idx);
                p
            } else {
                a.clone()
            };
            if !out.all_finite() {
                return Err(EngineError::NonFinite(format!("layer `{}`", l.id)));
            }
            if train.is_some() {
                tape.conv_inputs.push(input);
                tape.activations.push(a);
                tape.norm_caches.push(cache);
            }
            outputs.insert(&l.id, out);
        }
        let last = &spec.layers[n - 1].id;
        let out = outputs.remove(last.as_str()).expect("last layer ran");
        Ok((out, tape))
    }

    /// Inference-mode forward pass (batch norms use running statistics).
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>, EngineError> {
        // Inference never mutates; the clone only covers the batch-norm state.
        let mut me = self.clone();
        me.run(x, None).map(|(y, _)| y)
    }

    /// Training-mode forward pass using batch statistics. `update_stats`
    /// moves the running statistics.
    pub fn forward_train(
        &mut self,
        x: &Tensor<T>,
        update_stats: bool,
    ) -> Result<(Tensor<T>, Tape<T>), EngineError> {
        self.run(x, Some(update_stats))
    }

    pub fn backward(&self, tape: &Tape<T>, grad_out: &Tensor<T>) -> Result<NetworkGrads<T>, EngineError> {
        let layers = &self.spec.layers;
        let n = layers.len();
        if tape.activations.len() != n {
            return Err(shape_err("tape was not recorded in training mode"));
        }
        let mut widths: HashMap<&str, usize> = HashMap::new();
        widths.insert(&self.spec.input_id, self.spec.input_channels);
        for l in layers {
            widths.insert(&l.id, l.out_channels);
        }
        let mut grads: HashMap<&str, Tensor<T>> = HashMap::new();
        grads.insert(&layers[n - 1].id, grad_out.clone());
        let mut gw = vec![None; n];
        let mut gb = vec![Vec::new(); n];
        let mut gg = vec![None; n];
        let mut gbeta = vec![None; n];
        for i in (0..n).rev() {
            let l = &layers[i];
            let a = &tape.activations[i];
            let mut g = match grads.remove(l.id.as_str()) {
                Some(g) if l.pool => unpool2(&g, &tape.pool_indices[&l.id])?,
                Some(g) => g,
                None => Tensor::zeros(a.shape()),
            };
            if g.shape() != a.shape() {
                return Err(shape_err(format!("gradient for `{}` has the wrong shape", l.id)));
            }
            for (gv, y) in g.data_mut().iter_mut().zip(a.data()) {
                *gv = *gv * activation_grad(l.activation, *y);
            }
            if let (Some(bn), Some(cache)) = (&self.norms[i], &tape.norm_caches[i]) {
                let (gx, ggam, gbet) = bn.backward(&g, cache)?;
                g = gx;
                gg[i] = Some(ggam);
                gbeta[i] = Some(gbet);
            }
            let cg = correlate_backward(&g, &tape.conv_inputs[i], &self.convs[i].weights)?;
            gw[i] = Some(cg.grad_w);
            gb[i] = cg.grad_b;
            let mut gx = cg.grad_x;
            if let Some(src) = &l.unpool_from {
                gx = unpool2_backward(&gx, &tape.pool_indices[src])?;
            }
            let ws: Vec<usize> = l.inputs.iter().map(|s| widths[s.as_str()]).collect();
            let parts = if ws.len() == 1 { vec![gx] } else { split_channels(&gx, &ws)? };
            for (src, part) in l.inputs.iter().zip(parts) {
                match grads.get_mut(src.as_str()) {
                    Some(acc) => acc.add_assign(&part)?,
                    None => {
                        grads.insert(src.as_str(), part);
                    }
                }
            }
        }
        let input = grads
            .remove(self.spec.input_id.as_str())
            .unwrap_or_else(|| Tensor::zeros(tape.input_shape));
        Ok(NetworkGrads {
            weights: gw.into_iter().map(|w| w.expect("every layer visited")).collect(),
            biases: gb,
            gammas: gg,
            betas: gbeta,
            input,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network_spec::segnet_basic;
    use crate::param_budget::count_params;
    use crate::presets::merged13;

    #[test]
    fn same_seed_same_weights() {
        let spec = merged13(2);
        let a = build_network::<f32>(&spec, 42).unwrap();
        let b = build_network::<f32>(&spec, 42).unwrap();
        let c = build_network::<f32>(&spec, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.convs.iter().all(|l| l.bias.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn glorot_bounds() {
        let net = build_network::<f64>(&merged13(2), 1).unwrap();
        for (c, l) in net.convs.iter().zip(&net.spec().layers) {
            let s = (6.0 / ((l.in_channels + l.out_channels) as f64 * (l.kernel * l.kernel) as f64)).sqrt();
            assert!(c.weights.data().iter().all(|w| w.abs() <= s));
        }
    }

    #[test]
    fn weight_count_matches_budget_counter() {
        for spec in [merged13(10), merged13(3), segnet_basic()] {
            let net = build_network::<f32>(&spec, 0).unwrap();
            assert_eq!(net.weight_count(), count_params(&spec, false));
        }
        assert_eq!(build_network::<f32>(&merged13(10), 0).unwrap().weight_count(), 1_101_580);
    }

    #[test]
    fn untrained_output_is_a_probability_map() {
        let net = build_network::<f32>(&merged13(2), 3).unwrap();
        let mut rng = SplitMix::new(1);
        let x = Tensor::from_fn([2, 1, 24, 32], |_| rng.next_f64() as f32);
        let y = net.forward(&x).unwrap();
        assert_eq!(y.shape(), [2, 1, 24, 32]);
        assert!(y.data().iter().all(|v| *v > 0.0 && *v < 1.0));
    }

    #[test]
    fn segnet_restores_resolution() {
        let net = build_network::<f32>(&segnet_basic(), 3).unwrap();
        let x = Tensor::from_fn([1, 1, 32, 48], |i| (i % 7) as f32 / 7.0);
        assert_eq!(net.forward(&x).unwrap().shape(), [1, 1, 32, 48]);
        let bad = Tensor::<f32>::zeros([1, 1, 30, 48]);
        assert!(matches!(net.forward(&bad), Err(EngineError::ShapeMismatch(_))));
        let wrong_channels = Tensor::<f32>::zeros([1, 2, 32, 48]);
        assert!(net.forward(&wrong_channels).is_err());
    }

    #[test]
    fn every_merged_layer_preserves_size() {
        let mut net = build_network::<f64>(&merged13(1), 3).unwrap();
        let x = Tensor::from_fn([1, 1, 10, 14], |i| (i % 5) as f64);
        let (_, tape) = net.forward_train(&x, false).unwrap();
        for a in tape.activations() {
            assert_eq!((a.height(), a.width()), (10, 14));
        }
    }
}
