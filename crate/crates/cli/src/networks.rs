//! Resolving `--spec` arguments: built-in names, merged graphs or sized
//! network documents.

use std::path::Path;

use anyhow::{Context, Result};
use spdnn::arch_graph::ArchGraph;
use spdnn::network_spec::{segnet_basic, NetworkSpec};
use spdnn::param_budget::{
    budget_polynomial, network_template, segnet_basic_budget, solve_channel_base, ChannelExpr,
    ChannelRule,
};
use spdnn::presets::merged13_template;

use crate::files::read_text;
use crate::usage;

pub enum SpecSource {
    /// Channel widths still symbolic in the channel base.
    Template(NetworkSpec<ChannelExpr>),
    Sized(NetworkSpec),
}

pub fn load(arg: &str) -> Result<SpecSource> {
    match arg {
        "segnet-basic" => return Ok(SpecSource::Sized(segnet_basic())),
        "merged13" => return Ok(SpecSource::Template(merged13_template())),
        _ => {}
    }
    let path = Path::new(arg);
    if !path.exists() {
        return Err(usage(format!(
            "`{arg}` is neither a built-in network (segnet-basic, merged13) nor a file"
        )));
    }
    let text = read_text(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {arg}"))?;
    // Sized documents carry per-node widths; merged graphs do not.
    if value.get("input_channels").is_some() {
        let spec = NetworkSpec::from_json(&text).with_context(|| format!("loading {arg}"))?;
        return Ok(SpecSource::Sized(spec));
    }
    let graph = ArchGraph::from_json(&text).with_context(|| format!("loading {arg}"))?;
    let template = network_template(&graph, &ChannelRule::default())
        .with_context(|| format!("sizing {arg}"))?;
    Ok(SpecSource::Template(template))
}

/// Parses `--target`: a built-in network name or a plain weight count.
pub fn budget_target(arg: &str) -> Result<u64> {
    match arg {
        "segnet-basic" => Ok(segnet_basic_budget()),
        n => n
            .parse()
            .map_err(|_| usage(format!("budget target `{n}` is not segnet-basic or an integer"))),
    }
}

/// A sized network. Templates use `chp`, or the largest base that fits the
/// SegNet-basic budget when none is given.
pub fn resolve(arg: &str, chp: Option<u64>) -> Result<(NetworkSpec, Option<u64>)> {
    match load(arg)? {
        SpecSource::Sized(spec) => {
            if chp.is_some() {
                return Err(usage(format!("--chp does not apply to the sized network `{arg}`")));
            }
            Ok((spec, None))
        }
        SpecSource::Template(t) => {
            let chp = match chp {
                Some(0) => return Err(usage("--chp must be positive")),
                Some(c) => c,
                None => solve_channel_base(&budget_polynomial(&t)?, segnet_basic_budget())?.chosen,
            };
            Ok((t.instantiate(chp), Some(chp)))
        }
    }
}
