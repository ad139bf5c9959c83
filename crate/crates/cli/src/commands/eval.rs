use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use spdnn::metrics::{aggregate, confusion, format_table, metrics, ConfusionCounts, MetricRow, Summary};
use spdnn::raster::BinaryMask;

use crate::files::{masks_by_stem, sibling, write_text, Manifest};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Directory of predicted masks.
    #[arg(long)]
    pred: PathBuf,
    /// Directory of ground-truth masks.
    #[arg(long)]
    gt: PathBuf,
    /// Also write the full JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Serialize)]
struct Config {
    pred: String,
    gt: String,
}

#[derive(Debug, Serialize)]
struct ImageScore {
    stem: String,
    counts: ConfusionCounts,
    metrics: MetricRow,
}

#[derive(Debug, Serialize)]
struct Report {
    images: Vec<ImageScore>,
    summary: Vec<Summary>,
}

pub fn run(args: Args) -> Result<()> {
    let preds = masks_by_stem(&args.pred)?;
    let gts = masks_by_stem(&args.gt)?;
    if gts.is_empty() {
        bail!("no ground-truth masks under `{}`", args.gt.display());
    }
    let missing: Vec<&str> = gts.keys().filter(|s| !preds.contains_key(*s)).map(String::as_str).collect();
    if !missing.is_empty() {
        bail!("no prediction for {}", missing.join(", "));
    }
    let mut manifest = Manifest::new(
        "eval",
        None,
        Config {
            pred: args.pred.display().to_string(),
            gt: args.gt.display().to_string(),
        },
    );
    let mut images = Vec::with_capacity(gts.len());
    for (stem, gt_rel) in &gts {
        let pred_rel = &preds[stem];
        let gt = BinaryMask::read(&args.gt.join(gt_rel))?;
        let pred = BinaryMask::read(&args.pred.join(pred_rel))?;
        let counts = confusion(&pred, &gt).with_context(|| format!("scoring {stem}"))?;
        images.push(ImageScore {
            stem: stem.clone(),
            counts,
            metrics: metrics(&counts),
        });
        manifest.input(&args.pred, pred_rel)?;
        manifest.input(&args.gt, gt_rel)?;
    }
    let rows: Vec<MetricRow> = images.iter().map(|s| s.metrics).collect();
    let aggregated = aggregate(&rows)?;
    let report = Report {
        summary: aggregated.summary.clone(),
        images,
    };
    if let Some(out) = &args.out {
        write_text(out, &(serde_json::to_string_pretty(&report)? + "\n"))?;
        manifest.output(std::path::Path::new(""), out)?;
        manifest.write(&sibling(out, ".manifest.json"))?;
    }
    if args.json {
        outln!("{}", serde_json::to_string_pretty(&report.summary)?);
    } else {
        outln!("{} images", report.images.len());
        crate::emit(&format_table(&aggregated));
    }
    Ok(())
}
