use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use spdnn::engine::{build_network, save_weights, train_with_progress, Real, Sample, TrainConfig};
use spdnn::network_spec::NetworkSpec;
use spdnn::raster::{BinaryMask, GrayImage, LabeledImage};

use crate::files::{ensure_parent, labelled_pairs, sibling, write_text, Manifest, Pair};
use crate::networks::resolve;
use crate::{usage, Precision};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Directory of `<stem>.*.pgm` images with `<stem>.mask.pgm` masks.
    #[arg(long)]
    data: PathBuf,
    /// Built-in network name or a merged-graph / network JSON file.
    #[arg(long, default_value = "merged13")]
    spec: String,
    /// Channel base for template networks.
    #[arg(long)]
    chp: Option<u64>,
    #[arg(long, default_value_t = 1000)]
    epochs: usize,
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 0.45)]
    threshold: f64,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    precision: Precision,
    /// Weights file to write; the log, network and manifest go next to it.
    #[arg(long)]
    out: PathBuf,
    /// Suppress per-epoch progress on stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Serialize)]
struct Config {
    data: String,
    spec: String,
    chp: Option<u64>,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    momentum: f64,
    threshold: f64,
    precision: Precision,
    out: String,
}

fn load_samples<T: Real>(root: &Path, pairs: &[Pair]) -> Result<Vec<Sample<T>>> {
    let mut out = Vec::with_capacity(pairs.len());
    let mut size = None;
    for p in pairs {
        let image = GrayImage::read(&root.join(&p.image))?;
        let mask = BinaryMask::read(&root.join(&p.mask))?;
        let labelled = LabeledImage::new(image, mask)
            .with_context(|| format!("pairing {}", p.image.display()))?;
        let dims = (labelled.width(), labelled.height());
        if *size.get_or_insert(dims) != dims {
            bail!(
                "`{}` is {}x{}, other images are {}x{}",
                p.image.display(),
                dims.0,
                dims.1,
                size.unwrap().0,
                size.unwrap().1
            );
        }
        out.push(Sample::from_labeled(&labelled));
    }
    Ok(out)
}

fn fit<T: Real>(
    spec: &NetworkSpec,
    samples: &[Sample<T>],
    cfg: &TrainConfig,
    out: &Path,
    quiet: bool,
) -> Result<String> {
    let mut net = build_network::<T>(spec, cfg.seed)?;
    let log = train_with_progress(&mut net, samples, cfg, |e| {
        if !quiet {
            eprintln!("epoch {:>5}  loss {:.6}", e.epoch, e.mean_loss);
        }
    })?;
    ensure_parent(out)?;
    save_weights(&net, out)?;
    Ok(log.iter().map(|e| e.line() + "\n").collect())
}

pub fn run(args: Args) -> Result<()> {
    let cfg = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        seed: args.seed,
        threshold: args.threshold,
        learning_rate: args.lr,
        momentum: args.momentum,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let (spec, chp) = resolve(&args.spec, args.chp)?;
    let pairs = labelled_pairs(&args.data)?;
    let log = match args.precision {
        Precision::F32 => fit::<f32>(&spec, &load_samples(&args.data, &pairs)?, &cfg, &args.out, args.quiet)?,
        Precision::F64 => fit::<f64>(&spec, &load_samples(&args.data, &pairs)?, &cfg, &args.out, args.quiet)?,
    };
    let log_path = sibling(&args.out, ".log");
    let net_path = sibling(&args.out, ".net.json");
    write_text(&log_path, &log)?;
    write_text(&net_path, &(spec.to_json() + "\n"))?;

    let mut manifest = Manifest::new(
        "train",
        Some(args.seed),
        Config {
            data: args.data.display().to_string(),
            spec: args.spec.clone(),
            chp,
            epochs: cfg.epochs,
            batch_size: cfg.batch_size,
            learning_rate: cfg.learning_rate,
            momentum: cfg.momentum,
            threshold: cfg.threshold,
            precision: args.precision,
            out: args.out.display().to_string(),
        },
    );
    for p in &pairs {
        manifest.input(&args.data, &p.image)?;
        manifest.input(&args.data, &p.mask)?;
    }
    let here = Path::new("");
    manifest.output(here, &args.out)?;
    let bn = sibling(&args.out, ".bn");
    if bn.exists() {
        manifest.output(here, &bn)?;
    }
    manifest.output(here, &log_path)?;
    manifest.output(here, &net_path)?;
    manifest.write(&sibling(&args.out, ".manifest.json"))?;
    if let Some(last) = log.lines().last() {
        outln!("trained {} epochs on {} images; last epoch,loss {last}", cfg.epochs, pairs.len());
    }
    Ok(())
}
