use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use spdnn::engine::{
    build_network, image_tensor, load_weights, mask_from_probabilities, predict, Real,
};
use spdnn::network_spec::NetworkSpec;
use spdnn::raster::GrayImage;

use crate::files::{ensure_parent, image_files, read_text, sibling, stem, Manifest, MASK_SUFFIX};
use crate::networks::resolve;
use crate::Precision;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Weights written by `train`.
    #[arg(long)]
    weights: PathBuf,
    /// Network layout; defaults to the one saved next to the weights.
    #[arg(long)]
    spec: Option<String>,
    #[arg(long)]
    chp: Option<u64>,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.45)]
    threshold: f64,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    precision: Precision,
}

#[derive(Debug, Serialize)]
struct Config {
    weights: String,
    spec: Option<String>,
    chp: Option<u64>,
    input: String,
    out: String,
    threshold: f64,
    precision: Precision,
}

fn segment<T: Real>(spec: &NetworkSpec, args: &Args, images: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut net = build_network::<T>(spec, 0)?;
    load_weights(&mut net, &args.weights)
        .with_context(|| format!("loading {}", args.weights.display()))?;
    images
        .par_iter()
        .map(|rel| {
            let img = GrayImage::read(&args.input.join(rel))?;
            let probs = predict(&net, &image_tensor::<T>(&img))
                .with_context(|| format!("segmenting {}", rel.display()))?;
            let mask = mask_from_probabilities(&probs, args.threshold);
            let dir = rel.parent().map(Path::to_path_buf).unwrap_or_default();
            let out_rel = dir.join(format!("{}{MASK_SUFFIX}", stem(rel)));
            ensure_parent(&args.out.join(&out_rel))?;
            mask.write(&args.out.join(&out_rel))?;
            Ok(out_rel)
        })
        .collect()
}

pub fn run(args: Args) -> Result<()> {
    let spec = match &args.spec {
        Some(s) => resolve(s, args.chp)?.0,
        None => {
            let path = sibling(&args.weights, ".net.json");
            NetworkSpec::from_json(&read_text(&path)?)
                .with_context(|| format!("loading {}", path.display()))?
        }
    };
    let images = image_files(&args.input)?;
    let written = match args.precision {
        Precision::F32 => segment::<f32>(&spec, &args, &images)?,
        Precision::F64 => segment::<f64>(&spec, &args, &images)?,
    };
    let mut manifest = Manifest::new(
        "infer",
        None,
        Config {
            weights: args.weights.display().to_string(),
            spec: args.spec.clone(),
            chp: args.chp,
            input: args.input.display().to_string(),
            out: args.out.display().to_string(),
            threshold: args.threshold,
            precision: args.precision,
        },
    );
    manifest.input(Path::new(""), &args.weights)?;
    for rel in &images {
        manifest.input(&args.input, rel)?;
    }
    for rel in &written {
        manifest.output(&args.out, rel)?;
    }
    manifest.write(&args.out.join("manifest.json"))?;
    outln!("wrote {} masks to {}", written.len(), args.out.display());
    Ok(())
}
