use std::path::{Path, PathBuf};

use anyhow::Result;
use rayon::prelude::*;
use serde::Serialize;
use spdnn::synth::generate_one;

use crate::files::{ensure_dir, Manifest, MASK_SUFFIX};
use crate::usage;

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    count: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 320)]
    width: usize,
    #[arg(long, default_value_t = 240)]
    height: usize,
}

#[derive(Debug, Serialize)]
struct Config {
    count: usize,
    width: usize,
    height: usize,
    out: String,
}

pub fn run(args: Args) -> Result<()> {
    if args.width < 16 || args.height < 16 {
        return Err(usage("images must be at least 16x16"));
    }
    ensure_dir(&args.out)?;
    let names: Vec<String> = (0..args.count).map(|i| format!("eye_{i:05}")).collect();
    names.par_iter().enumerate().try_for_each(|(i, name)| -> Result<()> {
        let img = generate_one(args.seed, i as u64, args.width, args.height);
        img.image.write(&args.out.join(format!("{name}.pgm")))?;
        img.mask.write(&args.out.join(format!("{name}{MASK_SUFFIX}")))?;
        Ok(())
    })?;
    let mut manifest = Manifest::new(
        "datagen",
        Some(args.seed),
        Config {
            count: args.count,
            width: args.width,
            height: args.height,
            out: args.out.display().to_string(),
        },
    );
    for name in &names {
        manifest.output(&args.out, Path::new(&format!("{name}.pgm")))?;
        manifest.output(&args.out, Path::new(&format!("{name}{MASK_SUFFIX}")))?;
    }
    manifest.write(&args.out.join("manifest.json"))?;
    outln!("wrote {} image/mask pairs to {}", args.count, args.out.display());
    Ok(())
}
