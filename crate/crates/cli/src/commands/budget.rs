use anyhow::Result;
use serde::Serialize;
use spdnn::param_budget::{budget_polynomial, count_params, polynomial_terms, solve_channel_base, f_map};

use crate::networks::{budget_target, load, SpecSource};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Built-in network name or a merged-graph / network JSON file.
    #[arg(long, default_value = "merged13")]
    spec: String,
    /// Weight budget: `segnet-basic` or an explicit count.
    #[arg(long, default_value = "segnet-basic")]
    target: String,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Serialize)]
struct LayerRow {
    id: String,
    kernel: usize,
    in_channels: usize,
    out_channels: usize,
    weights: u64,
    /// Symbolic count, for templates.
    #[serde(skip_serializing_if = "Option::is_none")]
    term: Option<String>,
}

#[derive(Debug, Serialize)]
struct Polynomial {
    a: u64,
    b: u64,
    c: u64,
}

#[derive(Debug, Serialize)]
struct Report {
    target: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    polynomial: Option<Polynomial>,
    #[serde(skip_serializing_if = "Option::is_none")]
    root: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    leading_root: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    chosen: Option<u64>,
    layers: Vec<LayerRow>,
    total: u64,
    within_budget: bool,
}

pub fn run(args: Args) -> Result<()> {
    let target = budget_target(&args.target)?;
    let report = match load(&args.spec)? {
        SpecSource::Template(t) => {
            let poly = budget_polynomial(&t)?;
            let base = solve_channel_base(&poly, target)?;
            let terms = polynomial_terms(&t)?;
            let spec = t.instantiate(base.chosen);
            let layers = spec
                .layers
                .iter()
                .zip(&terms)
                .map(|(l, term)| LayerRow {
                    id: l.id.clone(),
                    kernel: l.kernel,
                    in_channels: l.in_channels,
                    out_channels: l.out_channels,
                    weights: f_map(l.in_channels as u64, l.out_channels as u64, l.kernel as u64),
                    term: Some(term.poly.to_string()),
                })
                .collect();
            let total = count_params(&spec, false);
            Report {
                target,
                polynomial: Some(Polynomial { a: poly.a, b: poly.b, c: poly.c }),
                root: Some(base.root),
                leading_root: Some(base.leading_root),
                chosen: Some(base.chosen),
                layers,
                total,
                within_budget: total <= target,
            }
        }
        SpecSource::Sized(spec) => {
            let layers = spec
                .layers
                .iter()
                .map(|l| LayerRow {
                    id: l.id.clone(),
                    kernel: l.kernel,
                    in_channels: l.in_channels,
                    out_channels: l.out_channels,
                    weights: f_map(l.in_channels as u64, l.out_channels as u64, l.kernel as u64),
                    term: None,
                })
                .collect();
            let total = count_params(&spec, false);
            Report {
                target,
                polynomial: None,
                root: None,
                leading_root: None,
                chosen: None,
                layers,
                total,
                within_budget: total <= target,
            }
        }
    };
    if args.json {
        outln!("{}", serde_json::to_string_pretty(&report)?);
        return Ok(());
    }
    outln!("target         {}", report.target);
    if let (Some(p), Some(root), Some(lead), Some(chosen)) =
        (&report.polynomial, report.root, report.leading_root, report.chosen)
    {
        let poly = spdnn::param_budget::BudgetPolynomial { a: p.a, b: p.b, c: p.c };
        outln!("polynomial     {poly}");
        outln!("root           {root:.6}");
        outln!("leading root   {lead:.4}");
        outln!("chosen Ch_p    {chosen}");
    }
    outln!();
    outln!("{:<10}{:>7}{:>6}{:>6}{:>11}  {}", "layer", "kernel", "in", "out", "weights", "term");
    for l in &report.layers {
        outln!(
            "{:<10}{:>7}{:>6}{:>6}{:>11}  {}",
            l.id,
            l.kernel,
            l.in_channels,
            l.out_channels,
            l.weights,
            l.term.as_deref().unwrap_or("")
        );
    }
    outln!("{:<29}{:>11}", "total", report.total);
    Ok(())
}
