use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use spdnn::arch_graph::{emission_order, order_preservation_check, parse_parent_set, spdnn_merge};
use spdnn::param_budget::{
    budget_polynomial, network_template, segnet_basic_budget, solve_channel_base, ChannelRule,
};
use spdnn::presets::merged13_parents;

use crate::files::{read_text, sibling, write_text, Manifest};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Parent-set JSON, or `merged13` for the built-in four chains.
    #[arg(long)]
    parents: String,
    /// Where to write the merged architecture graph.
    #[arg(long)]
    out: PathBuf,
    /// Also write the sized layer list here.
    #[arg(long)]
    network_out: Option<PathBuf>,
    /// Channel base for `--network-out`; defaults to the SegNet-basic fit.
    #[arg(long, requires = "network_out")]
    chp: Option<u64>,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Serialize)]
struct Config {
    parents: String,
    out: String,
    network_out: Option<String>,
    chp: Option<u64>,
}

#[derive(Debug, Serialize)]
struct Summary {
    parents: usize,
    nodes: usize,
    edges: usize,
    order: Vec<String>,
    order_preserved: bool,
}

pub fn run(args: Args) -> Result<()> {
    let mut manifest = Manifest::new(
        "merge",
        None,
        Config {
            parents: args.parents.clone(),
            out: args.out.display().to_string(),
            network_out: args.network_out.as_ref().map(|p| p.display().to_string()),
            chp: args.chp,
        },
    );
    let parents = if args.parents == "merged13" {
        merged13_parents()
    } else {
        let path = Path::new(&args.parents);
        manifest.input(Path::new(""), path)?;
        parse_parent_set(&read_text(path)?).with_context(|| format!("loading {}", args.parents))?
    };
    let merged = spdnn_merge(&parents)?;
    write_text(&args.out, &(merged.to_json() + "\n"))?;
    manifest.output(Path::new(""), &args.out)?;

    if let Some(net_path) = &args.network_out {
        let template = network_template(&merged, &ChannelRule::default())?;
        let chp = match args.chp {
            Some(c) => c,
            None => solve_channel_base(&budget_polynomial(&template)?, segnet_basic_budget())?.chosen,
        };
        write_text(net_path, &(template.instantiate(chp).to_json() + "\n"))?;
        manifest.output(Path::new(""), net_path)?;
    }
    manifest.write(&sibling(&args.out, ".manifest.json"))?;

    let summary = Summary {
        parents: parents.len(),
        nodes: merged.node_count(),
        edges: merged.edge_count(),
        order: emission_order(&merged),
        order_preserved: order_preservation_check(&parents, &merged),
    };
    if args.json {
        outln!("{}", serde_json::to_string_pretty(&summary)?);
    } else {
        outln!("parents          {}", summary.parents);
        outln!("nodes            {}", summary.nodes);
        outln!("edges            {}", summary.edges);
        outln!("order preserved  {}", summary.order_preserved);
        outln!("layers           {}", summary.order.join(" "));
    }
    Ok(())
}
