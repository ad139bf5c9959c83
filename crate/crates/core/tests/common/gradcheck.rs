//! Central finite-difference checks for whole networks, plus a generator of
//! small random networks exercising concatenation, pooling and batch norm.

#![allow(dead_code)]

use spdnn::engine::{build_network, Network, Tape, Tensor};
use spdnn::network_spec::{Activation, LayerSpec, NetworkSpec};
use spdnn::rng::SplitMix;

/// Small enough for batch norm over a few pixels, where the output bends
/// sharply once a channel's spread nears the epsilon.
pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Denominator floor: gradients smaller than this are compared absolutely,
/// to `TOLERANCE * REL_FLOOR`, which sits above the rounding noise of a
/// difference quotient with `STEP`.
pub const REL_FLOOR: f64 = 1e-5;

#[derive(Debug, Default, Clone)]
pub struct Report {
    pub checked: usize,
    pub skipped: usize,
    pub worst: f64,
    pub worst_at: String,
}

impl Report {
    fn record(&mut self, analytic: f64, numeric: f64, label: impl FnOnce() -> String) {
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR);
        self.checked += 1;
        if err > self.worst {
            self.worst = err;
            self.worst_at = format!("{} (analytic {analytic:e}, numeric {numeric:e})", label());
        }
    }

    pub fn merge(&mut self, other: Report) {
        self.checked += other.checked;
        self.skipped += other.skipped;
        if other.worst > self.worst {
            self.worst = other.worst;
            self.worst_at = other.worst_at;
        }
    }
}

/// ReLU on/off pattern and pooling winners; the objective is smooth only
/// while this stays fixed.
fn signature(net: &Network<f64>, tape: &Tape<f64>) -> Vec<u64> {
    let mut sig = Vec::new();
    for (l, a) in net.spec().layers.iter().zip(tape.activations()) {
        if l.activation == Activation::Relu {
            sig.extend(a.data().iter().map(|v| u64::from(*v > 0.0)));
        }
        if let Some(idx) = tape.pool_indices(&l.id) {
            sig.extend(idx.argmax().iter().map(|v| u64::from(*v)));
        }
    }
    sig
}

fn objective(net: &mut Network<f64>, x: &Tensor<f64>, r: &Tensor<f64>) -> (f64, Vec<u64>) {
    let (y, tape) = net.forward_train(x, false).expect("forward");
    let v = y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum();
    (v, signature(net, &tape))
}

/// Picks up to `limit` distinct indices below `n`.
fn sample_indices(n: usize, limit: usize, rng: &mut SplitMix) -> Vec<usize> {
    let mut all: Vec<usize> = (0..n).collect();
    if n > limit {
        rng.shuffle(&mut all);
        all.truncate(limit);
        all.sort_unstable();
    }
    all
}

/// Compares analytic gradients of `sum(r * net(x))` with central differences
/// for every parameter tensor and the input, sampling at most `limit`
/// coordinates per tensor.
pub fn check_network(net: &mut Network<f64>, x: &Tensor<f64>, rng: &mut SplitMix, limit: usize) -> Report {
    let (y, tape) = net.forward_train(x, false).expect("forward");
    let r = Tensor::from_fn(y.shape(), |_| rng.uniform(-1.0, 1.0));
    let base_sig = signature(net, &tape);
    let grads = net.backward(&tape, &r).expect("backward");
    let analytic: Vec<Vec<f64>> = grads.as_slices().iter().map(|s| s.to_vec()).collect();
    let mut report = Report::default();

    let tensors = analytic.len();
    for t in 0..tensors {
        let len = analytic[t].len();
        for i in sample_indices(len, limit, rng) {
            let orig = net.parameters()[t][i];
            net.parameters_mut()[t][i] = orig + STEP;
            let (fp, sp) = objective(net, x, &r);
            net.parameters_mut()[t][i] = orig - STEP;
            let (fm, sm) = objective(net, x, &r);
            net.parameters_mut()[t][i] = orig;
            if sp != base_sig || sm != base_sig {
                report.skipped += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * STEP);
            report.record(analytic[t][i], numeric, || format!("param tensor {t}[{i}]"));
        }
    }
    for i in sample_indices(x.len(), limit, rng) {
        let mut xp = x.clone();
        xp.data_mut()[i] += STEP;
        let mut xm = x.clone();
        xm.data_mut()[i] -= STEP;
        let (fp, sp) = objective(net, &xp, &r);
        let (fm, sm) = objective(net, &xm, &r);
        if sp != base_sig || sm != base_sig {
            report.skipped += 1;
            continue;
        }
        let numeric = (fp - fm) / (2.0 * STEP);
        report.record(grads.input.data()[i], numeric, || format!("input[{i}]"));
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Chain,
    Concat,
    PoolUnpool,
}

fn layer(id: &str, k: usize, inputs: &[(&str, usize)], co: usize, act: Activation) -> LayerSpec {
    LayerSpec {
        id: id.to_string(),
        kernel: k,
        in_channels: inputs.iter().map(|(_, c)| c).sum(),
        out_channels: co,
        activation: act,
        inputs: inputs.iter().map(|(s, _)| s.to_string()).collect(),
        pool: false,
        unpool_from: None,
        batch_norm: false,
    }
}

/// A random network of at most three layers, every tensor within
/// `2 x 4 x 8 x 8`, plus a matching random input.
pub fn micro_network(shape: Shape, rng: &mut SplitMix) -> (NetworkSpec, Tensor<f64>) {
    let pick = |rng: &mut SplitMix, xs: &[usize]| xs[rng.below(xs.len() as u64) as usize];
    let b = pick(rng, &[1, 2]);
    let h = pick(rng, &[4, 6, 8]);
    let w = pick(rng, &[4, 6, 8]);
    let cin = pick(rng, &[1, 2]);
    let k = |rng: &mut SplitMix| pick(rng, &[1, 3, 5]);
    let hidden = |rng: &mut SplitMix| pick(rng, &[1, 2]);
    let act = |rng: &mut SplitMix| if rng.below(4) == 0 { Activation::None } else { Activation::Relu };
    let mut layers = Vec::new();
    match shape {
        Shape::Chain => {
            let depth = 1 + rng.below(3) as usize;
            let mut prev = ("input".to_string(), cin);
            for d in 1..=depth {
                let id = format!("c{d}");
                let last = d == depth;
                let co = if last { 1 } else { 1 + rng.below(4) as usize };
                let a = if last { Activation::Sigmoid } else { act(rng) };
                let mut l = layer(&id, k(rng), &[(&prev.0, prev.1)], co, a);
                l.batch_norm = !last && rng.below(2) == 0;
                layers.push(l);
                prev = (id, co);
            }
        }
        Shape::Concat => {
            let c1 = hidden(rng);
            let c2 = hidden(rng);
            let mut l1 = layer("a", k(rng), &[("input", cin)], c1, act(rng));
            l1.batch_norm = rng.below(2) == 0;
            layers.push(l1);
            if rng.below(2) == 0 {
                layers.push(layer("b", k(rng), &[("a", c1)], c2, act(rng)));
                layers.push(layer("out", k(rng), &[("a", c1), ("b", c2), ("input", cin)], 1, Activation::Sigmoid));
            } else {
                layers.push(layer("b", k(rng), &[("input", cin)], c2, act(rng)));
                layers.push(layer("out", k(rng), &[("b", c2), ("a", c1)], 1, Activation::Sigmoid));
            }
        }
        Shape::PoolUnpool => {
            let c1 = hidden(rng) + 1;
            let mut l1 = layer("enc", k(rng), &[("input", cin)], c1, act(rng));
            l1.pool = true;
            l1.batch_norm = rng.below(2) == 0;
            layers.push(l1);
            let mut l2 = layer("dec", k(rng), &[("enc", c1)], 1 + rng.below(2) as usize, act(rng));
            l2.unpool_from = Some("enc".into());
            let c2 = l2.out_channels;
            if rng.below(2) == 0 {
                layers.push(l2);
                layers.push(layer("out", k(rng), &[("dec", c2), ("input", cin)], 1, Activation::Sigmoid));
            } else {
                l2.out_channels = 1;
                l2.activation = Activation::Sigmoid;
                layers.push(l2);
            }
        }
    }
    let spec = NetworkSpec {
        input_id: "input".into(),
        output_id: "output".into(),
        input_channels: cin,
        layers,
    };
    let x = Tensor::from_fn([b, cin, h, w], |_| rng.uniform(-1.0, 1.0));
    (spec, x)
}

/// Builds the network and perturbs biases and batch-norm affine terms away
/// from their neutral initial values so that they are exercised too.
pub fn materialize(spec: &NetworkSpec, rng: &mut SplitMix) -> Network<f64> {
    let mut net = build_network::<f64>(spec, rng.next_u64()).expect("valid micro network");
    for c in &mut net.convs {
        for b in &mut c.bias {
            *b = rng.uniform(-0.2, 0.2);
        }
    }
    for n in net.norms.iter_mut().flatten() {
        for g in &mut n.gamma {
            *g = rng.uniform(0.5, 1.5);
        }
        for b in &mut n.beta {
            *b = rng.uniform(-0.3, 0.3);
        }
    }
    net
}
