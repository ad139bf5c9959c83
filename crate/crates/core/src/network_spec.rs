//! Sized layer lists consumed by the engine, plus their JSON encoding.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch_graph::OpLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    None,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::None => "none",
        })
    }
}

/// One convolution layer. Per layer the engine applies, in order: channel
/// concatenation of `inputs`, optional unpooling with the indices recorded by
/// `unpool_from`, the convolution, optional batch normalization, the
/// activation, and an optional 2x2 max-pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec<C = usize> {
    pub id: String,
    pub kernel: usize,
    pub in_channels: C,
    pub out_channels: C,
    pub activation: Activation,
    /// Layer ids (or the network input id) whose outputs are concatenated.
    pub inputs: Vec<String>,
    pub pool: bool,
    pub unpool_from: Option<String>,
    pub batch_norm: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec<C = usize> {
    pub input_id: String,
    pub output_id: String,
    pub input_channels: C,
    /// Topologically ordered.
    pub layers: Vec<LayerSpec<C>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("malformed network document: {0}")]
    Parse(String),
    #[error("layer `{layer}`: {reason}")]
    Invalid { layer: String, reason: String },
    #[error("network has no layers")]
    Empty,
}

fn invalid(layer: &str, reason: impl Into<String>) -> SpecError {
    SpecError::Invalid {
        layer: layer.to_string(),
        reason: reason.into(),
    }
}

impl NetworkSpec {
    /// Checks the structural invariants the engine relies on.
    pub fn validate(&self) -> Result<(), SpecError> {
        let last = self.layers.last().ok_or(SpecError::Empty)?;
        let mut widths: BTreeMap<&str, usize> = BTreeMap::new();
        let mut pooled: BTreeSet<&str> = BTreeSet::new();
        widths.insert(&self.input_id, self.input_channels);
        for layer in &self.layers {
            if widths.contains_key(layer.id.as_str()) {
                return Err(invalid(&layer.id, "duplicate layer id"));
            }
            if layer.kernel % 2 == 0 {
                return Err(invalid(&layer.id, "kernel size must be odd"));
            }
            if layer.inputs.is_empty() {
                return Err(invalid(&layer.id, "layer has no inputs"));
            }
            if layer.out_channels == 0 {
                return Err(invalid(&layer.id, "zero output channels"));
            }
            let mut sum = 0;
            for src in &layer.inputs {
                sum += widths
                    .get(src.as_str())
                    .ok_or_else(|| invalid(&layer.id, format!("unknown or later input `{src}`")))?;
            }
            if sum != layer.in_channels {
                return Err(invalid(
                    &layer.id,
                    format!(
                        "in_channels {} differs from concatenated width {sum}",
                        layer.in_channels
                    ),
                ));
            }
            if let Some(src) = &layer.unpool_from {
                if !pooled.contains(src.as_str()) {
                    return Err(invalid(
                        &layer.id,
                        format!("unpool source `{src}` is not an earlier pooling layer"),
                    ));
                }
            }
            widths.insert(&layer.id, layer.out_channels);
            if layer.pool {
                pooled.insert(&layer.id);
            }
        }
        if last.out_channels != 1 || last.activation != Activation::Sigmoid {
            return Err(invalid(
                &last.id,
                "final layer must produce one sigmoid channel",
            ));
        }
        Ok(())
    }

    /// Total 2x2 pooling depth; input sides must be divisible by `2^depth`.
    pub fn pool_depth(&self) -> usize {
        self.layers.iter().filter(|l| l.pool).count()
    }
}

impl<C: Clone> NetworkSpec<C> {
    pub fn layer(&self, id: &str) -> Option<&LayerSpec<C>> {
        self.layers.iter().find(|l| l.id == id)
    }
}

// ---------------------------------------------------------------------------
// JSON encoding: the architecture document plus channel and concat fields.

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LayerDoc {
    id: String,
    op: OpLabel,
    channels: usize,
    in_channels: usize,
    activation: Activation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    concat_inputs: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pool: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    unpool: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    batch_norm: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NetworkDoc {
    input: String,
    output: String,
    input_channels: usize,
    nodes: Vec<LayerDoc>,
    edges: Vec<(String, String)>,
}

impl NetworkSpec {
    pub fn to_json(&self) -> String {
        let mut edges = Vec::new();
        let nodes = self
            .layers
            .iter()
            .map(|l| {
                for src in &l.inputs {
                    edges.push((src.clone(), l.id.clone()));
                }
                LayerDoc {
                    id: l.id.clone(),
                    op: OpLabel::conv(l.kernel as u32).expect("validated kernels are odd"),
                    channels: l.out_channels,
                    in_channels: l.in_channels,
                    activation: l.activation,
                    concat_inputs: (l.inputs.len() > 1).then(|| l.inputs.clone()),
                    pool: l.pool,
                    unpool: l.unpool_from.clone(),
                    batch_norm: l.batch_norm,
                }
            })
            .collect();
        if let Some(last) = self.layers.last() {
            edges.push((last.id.clone(), self.output_id.clone()));
        }
        let doc = NetworkDoc {
            input: self.input_id.clone(),
            output: self.output_id.clone(),
            input_channels: self.input_channels,
            nodes,
            edges,
        };
        serde_json::to_string_pretty(&doc).expect("network documents serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, SpecError> {
        let doc: NetworkDoc =
            serde_json::from_str(text).map_err(|e| SpecError::Parse(e.to_string()))?;
        let mut preds: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (a, b) in &doc.edges {
            preds.entry(b.as_str()).or_default().push(a.as_str());
        }
        let layers = doc
            .nodes
            .iter()
            .map(|n| {
                if n.op.kind() != crate::arch_graph::OpKind::Conv {
                    return Err(invalid(&n.id, "only convolution layers are supported"));
                }
                let inputs = match &n.concat_inputs {
                    Some(list) => list.clone(),
                    None => match preds.get(n.id.as_str()).map(Vec::as_slice) {
                        Some([one]) => vec![one.to_string()],
                        _ => {
                            return Err(invalid(
                                &n.id,
                                "needs exactly one in-edge or an explicit concat_inputs list",
                            ))
                        }
                    },
                };
                Ok(LayerSpec {
                    id: n.id.clone(),
                    kernel: n.op.size() as usize,
                    in_channels: n.in_channels,
                    out_channels: n.channels,
                    activation: n.activation,
                    inputs,
                    pool: n.pool,
                    unpool_from: n.unpool.clone(),
                    batch_norm: n.batch_norm,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let spec = NetworkSpec {
            input_id: doc.input,
            output_id: doc.output,
            input_channels: doc.input_channels,
            layers,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Eight 7x7 convolutions with 64 channels: four encoder layers each followed
/// by 2x2 max-pooling, four decoder layers each preceded by unpooling with the
/// mirrored encoder's indices. Batch normalization on all but the output.
pub fn segnet_basic() -> NetworkSpec {
    const WIDTH: usize = 64;
    let mut layers = Vec::new();
    let mut prev = "input".to_string();
    for i in 1..=4 {
        let id = format!("enc{i}");
        layers.push(LayerSpec {
            id: id.clone(),
            kernel: 7,
            in_channels: if i == 1 { 1 } else { WIDTH },
            out_channels: WIDTH,
            activation: Activation::Relu,
            inputs: vec![prev],
            pool: true,
            unpool_from: None,
            batch_norm: true,
        });
        prev = id;
    }
    for i in 1..=4 {
        let id = format!("dec{i}");
        let last = i == 4;
        layers.push(LayerSpec {
            id: id.clone(),
            kernel: 7,
            in_channels: WIDTH,
            out_channels: if last { 1 } else { WIDTH },
            activation: if last {
                Activation::Sigmoid
            } else {
                Activation::Relu
            },
            inputs: vec![prev],
            pool: false,
            unpool_from: Some(format!("enc{}", 5 - i)),
            batch_norm: !last,
        });
        prev = id;
    }
    NetworkSpec {
        input_id: "input".into(),
        output_id: "output".into(),
        input_channels: 1,
        layers,
    }
}
