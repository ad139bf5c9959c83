use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use spdnn::augment::{apply, AugmentParams, TARGET_HEIGHT, TARGET_WIDTH};
use spdnn::raster::{BinaryMask, GrayImage, LabeledImage};
use spdnn::rng::SplitMix;

use crate::files::{ensure_parent, labelled_pairs, Manifest, MASK_SUFFIX};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    seed: u64,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Output width; sources must be at least this wide.
    #[arg(long, default_value_t = TARGET_WIDTH)]
    width: usize,
    #[arg(long, default_value_t = TARGET_HEIGHT)]
    height: usize,
}

#[derive(Debug, Serialize)]
struct Config {
    input: String,
    out: String,
    /// Parameters drawn for each image, in input order.
    params: Vec<Drawn>,
}

#[derive(Debug, Serialize)]
struct Drawn {
    image: String,
    #[serde(flatten)]
    params: AugmentParams,
}

pub fn run(args: Args) -> Result<()> {
    if args.width == 0 || args.height == 0 {
        return Err(crate::usage("output size must be positive"));
    }
    let pairs = labelled_pairs(&args.input)?;
    // Image i draws from the stream for (seed, i), in sorted path order.
    let results: Vec<(PathBuf, PathBuf, AugmentParams)> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, pair)| -> Result<_> {
            let image = GrayImage::read(&args.input.join(&pair.image))?;
            let mask = BinaryMask::read(&args.input.join(&pair.mask))?;
            let labelled = LabeledImage::new(image, mask)
                .with_context(|| format!("pairing {}", pair.image.display()))?;
            let mut params = AugmentParams::draw(&mut SplitMix::for_item(args.seed, i as u64));
            params.target_width = args.width;
            params.target_height = args.height;
            let out = apply(&labelled, &params)
                .with_context(|| format!("augmenting {}", pair.image.display()))?;
            let (dir, stem) = pair.key();
            let img_rel = dir.join(format!("{stem}.aug.pgm"));
            let mask_rel = dir.join(format!("{stem}{MASK_SUFFIX}"));
            ensure_parent(&args.out.join(&img_rel))?;
            out.image.write(&args.out.join(&img_rel))?;
            out.mask.write(&args.out.join(&mask_rel))?;
            Ok((img_rel, mask_rel, params))
        })
        .collect::<Result<_>>()?;

    let mut manifest = Manifest::new(
        "augment",
        Some(args.seed),
        Config {
            input: args.input.display().to_string(),
            out: args.out.display().to_string(),
            params: pairs
                .iter()
                .zip(&results)
                .map(|(p, r)| Drawn {
                    image: p.image.display().to_string(),
                    params: r.2,
                })
                .collect(),
        },
    );
    for p in &pairs {
        manifest.input(&args.input, &p.image)?;
        manifest.input(&args.input, &p.mask)?;
    }
    for (img, mask, _) in &results {
        manifest.output(&args.out, img)?;
        manifest.output(&args.out, mask)?;
    }
    manifest.write(&args.out.join(Path::new("manifest.json")))?;
    outln!("augmented {} images into {}", results.len(), args.out.display());
    Ok(())
}
