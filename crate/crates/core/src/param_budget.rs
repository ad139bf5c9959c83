//! Parameter counting and channel sizing against a weight budget.
//!
//! A layer mapping `ci` channels to `co` channels with a `k x k` kernel holds
//! `ci * co * k^2` weights (biases are not part of the budget). Every channel
//! width of a merged network is a multiple of one free base `Ch_p`, chosen
//! from the kernel size, so the total is a quadratic in `Ch_p`.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::arch_graph::{emission_order, emit_layers, ArchGraph, GraphError, OpKind};
use crate::network_spec::{segnet_basic, LayerSpec, NetworkSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BudgetError {
    #[error("layer `{0}` has a channel width that is neither a multiple of Ch_p nor a constant")]
    NonLinearChannel(String),
    #[error("no channel multiplier for a {0}x{0} kernel")]
    UnknownKernel(u32),
    #[error("polynomial has no positive growth in Ch_p")]
    Degenerate,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Weights of a `ci -> co` convolution with a `k x k` kernel.
pub fn f_map(ci: u64, co: u64, k: u64) -> u64 {
    ci * co * k * k
}

/// Convolution weights of SegNet-basic: one 1->64, six 64->64 and one 64->1
/// layer, all 7x7.
pub fn count_segnet_basic() -> u64 {
    f_map(1, 64, 7) + f_map(64, 1, 7) + 6 * f_map(64, 64, 7)
}

/// Kernel side to channel multiplier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelRule {
    multiplier_of_kernel: BTreeMap<u32, u64>,
}

impl Default for ChannelRule {
    fn default() -> Self {
        Self {
            multiplier_of_kernel: [(3, 1), (5, 1), (7, 2), (9, 2), (11, 3), (13, 3), (15, 4)]
                .into_iter()
                .collect(),
        }
    }
}

impl ChannelRule {
    pub fn new(multipliers: impl IntoIterator<Item = (u32, u64)>) -> Self {
        Self {
            multiplier_of_kernel: multipliers.into_iter().collect(),
        }
    }

    pub fn multiplier(&self, kernel: u32) -> Result<u64, BudgetError> {
        self.multiplier_of_kernel
            .get(&kernel)
            .copied()
            .ok_or(BudgetError::UnknownKernel(kernel))
    }
}

/// Channel width `base * Ch_p + constant`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ChannelExpr {
    pub base: u64,
    pub constant: u64,
}

impl ChannelExpr {
    pub const ONE: ChannelExpr = ChannelExpr {
        base: 0,
        constant: 1,
    };

    pub fn multiple(base: u64) -> Self {
        Self { base, constant: 0 }
    }

    pub fn eval(&self, chp: u64) -> u64 {
        self.base * chp + self.constant
    }

    fn is_pure(&self) -> bool {
        self.base == 0 || self.constant == 0
    }
}

impl std::ops::Add for ChannelExpr {
    type Output = ChannelExpr;
    fn add(self, rhs: Self) -> Self {
        ChannelExpr {
            base: self.base + rhs.base,
            constant: self.constant + rhs.constant,
        }
    }
}

impl fmt::Display for ChannelExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.base, self.constant) {
            (0, c) => write!(f, "{c}"),
            (1, 0) => write!(f, "Ch_p"),
            (m, 0) => write!(f, "{m}Ch_p"),
            (m, c) => write!(f, "{m}Ch_p+{c}"),
        }
    }
}

/// `a * Ch_p^2 + b * Ch_p + c` weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BudgetPolynomial {
    pub a: u64,
    pub b: u64,
    pub c: u64,
}

impl BudgetPolynomial {
    pub fn eval(&self, chp: u64) -> u64 {
        self.a * chp * chp + self.b * chp + self.c
    }
}

impl std::ops::Add for BudgetPolynomial {
    type Output = BudgetPolynomial;
    fn add(self, rhs: Self) -> Self {
        BudgetPolynomial {
            a: self.a + rhs.a,
            b: self.b + rhs.b,
            c: self.c + rhs.c,
        }
    }
}

impl fmt::Display for BudgetPolynomial {
    /// Nonzero terms only, e.g. `11014Ch_p^2 + 18Ch_p`; the zero polynomial prints `0`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms: Vec<String> = [(self.a, "Ch_p^2"), (self.b, "Ch_p"), (self.c, "")]
            .iter()
            .filter(|(k, _)| *k != 0)
            .map(|(k, unit)| format!("{k}{unit}"))
            .collect();
        if terms.is_empty() {
            f.write_str("0")
        } else {
            f.write_str(&terms.join(" + "))
        }
    }
}

/// Contribution of one template layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerTerm {
    pub id: String,
    pub kernel: u64,
    pub in_channels: ChannelExpr,
    pub out_channels: ChannelExpr,
    pub poly: BudgetPolynomial,
}

/// Per-layer symbolic weight counts of a template.
pub fn polynomial_terms(template: &NetworkSpec<ChannelExpr>) -> Result<Vec<LayerTerm>, BudgetError> {
    template
        .layers
        .iter()
        .map(|l| {
            if !l.in_channels.is_pure() || !l.out_channels.is_pure() {
                return Err(BudgetError::NonLinearChannel(l.id.clone()));
            }
            let k2 = (l.kernel * l.kernel) as u64;
            let (i, o) = (l.in_channels, l.out_channels);
            Ok(LayerTerm {
                id: l.id.clone(),
                kernel: l.kernel as u64,
                in_channels: i,
                out_channels: o,
                poly: BudgetPolynomial {
                    a: i.base * o.base * k2,
                    b: (i.base * o.constant + i.constant * o.base) * k2,
                    c: i.constant * o.constant * k2,
                },
            })
        })
        .collect()
}

/// Sums the template's per-layer counts into one polynomial in `Ch_p`.
pub fn budget_polynomial(template: &NetworkSpec<ChannelExpr>) -> Result<BudgetPolynomial, BudgetError> {
    Ok(polynomial_terms(template)?
        .into_iter()
        .fold(BudgetPolynomial::default(), |acc, t| acc + t.poly))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelBase {
    /// Positive real root of `poly(Ch_p) = budget`.
    pub root: f64,
    /// Root of the quadratic term alone, `sqrt(budget / a)`.
    pub leading_root: f64,
    /// Largest integer whose weight count stays within the budget.
    pub chosen: u64,
}

pub fn solve_channel_base(poly: &BudgetPolynomial, budget: u64) -> Result<ChannelBase, BudgetError> {
    let (a, b) = (poly.a as f64, poly.b as f64);
    let rhs = budget as f64 - poly.c as f64;
    let root = if poly.a > 0 {
        (-b + (b * b + 4.0 * a * rhs).sqrt()) / (2.0 * a)
    } else if poly.b > 0 {
        rhs / b
    } else {
        return Err(BudgetError::Degenerate);
    };
    let mut chosen = root.max(0.0).floor() as u64;
    while poly.eval(chosen + 1) <= budget {
        chosen += 1;
    }
    while chosen > 0 && poly.eval(chosen) > budget {
        chosen -= 1;
    }
    let leading_root = if poly.a > 0 { (rhs / a).sqrt() } else { root };
    Ok(ChannelBase {
        root,
        leading_root,
        chosen,
    })
}

/// Symbolic width of every node: `m(k) * Ch_p` for convolutions, the width of
/// the predecessor for pooling, 1 for the input and output, and 1 for a node
/// that alone feeds the output.
pub fn channel_exprs(g: &ArchGraph, rule: &ChannelRule) -> Result<BTreeMap<String, ChannelExpr>, BudgetError> {
    let sink_preds = g.predecessors(g.sink());
    let sole_output_layer = match sink_preds.as_slice() {
        [one] if *one != g.source() => Some(one.to_string()),
        _ => None,
    };
    let mut out = BTreeMap::new();
    for id in emission_order(g) {
        let expr = if id == g.source() || id == g.sink() || Some(&id) == sole_output_layer.as_ref()
        {
            ChannelExpr::ONE
        } else {
            let op = g.node(&id).and_then(|n| n.op).expect("internal nodes carry an op");
            match op.kind() {
                OpKind::Conv => ChannelExpr::multiple(rule.multiplier(op.size())?),
                OpKind::Pool => g
                    .predecessors(&id)
                    .iter()
                    .filter_map(|p| out.get(*p).copied())
                    .next()
                    .unwrap_or(ChannelExpr::ONE),
            }
        };
        out.insert(id, expr);
    }
    Ok(out)
}

/// Concrete channel counts for a given base.
pub fn assign_channels(g: &ArchGraph, rule: &ChannelRule, chp: u64) -> Result<BTreeMap<String, usize>, BudgetError> {
    Ok(channel_exprs(g, rule)?
        .into_iter()
        .map(|(id, e)| (id, e.eval(chp) as usize))
        .collect())
}

/// Symbolic network for a merged graph under a channel rule.
pub fn network_template(g: &ArchGraph, rule: &ChannelRule) -> Result<NetworkSpec<ChannelExpr>, BudgetError> {
    let exprs = channel_exprs(g, rule)?;
    Ok(emit_layers(
        g,
        &exprs,
        ChannelExpr::ONE,
        ChannelExpr::ONE,
        |c| *c == ChannelExpr::ONE,
        |w| w.iter().fold(ChannelExpr::default(), |acc, e| acc + *e),
    )?)
}

impl NetworkSpec<ChannelExpr> {
    pub fn instantiate(&self, chp: u64) -> NetworkSpec {
        let size = |e: &ChannelExpr| e.eval(chp) as usize;
        NetworkSpec {
            input_id: self.input_id.clone(),
            output_id: self.output_id.clone(),
            input_channels: size(&self.input_channels),
            layers: self
                .layers
                .iter()
                .map(|l| LayerSpec {
                    id: l.id.clone(),
                    kernel: l.kernel,
                    in_channels: size(&l.in_channels),
                    out_channels: size(&l.out_channels),
                    activation: l.activation,
                    inputs: l.inputs.clone(),
                    pool: l.pool,
                    unpool_from: l.unpool_from.clone(),
                    batch_norm: l.batch_norm,
                })
                .collect(),
        }
    }
}

/// Weight count of a sized network, using concatenated input widths. With
/// `include_bias`, adds one per output channel of every layer.
pub fn count_params(spec: &NetworkSpec, include_bias: bool) -> u64 {
    spec.layers
        .iter()
        .map(|l| {
            let w = f_map(l.in_channels as u64, l.out_channels as u64, l.kernel as u64);
            if include_bias {
                w + l.out_channels as u64
            } else {
                w
            }
        })
        .sum()
}

/// Budget of the built-in SegNet-basic spec, counted from its layers.
pub fn segnet_basic_budget() -> u64 {
    count_params(&segnet_basic(), false)
}
