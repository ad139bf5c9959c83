//! Directory scanning, digests and run manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

pub const MASK_SUFFIX: &str = ".mask.pgm";

/// File name up to its first dot: `eye_00003.aug.pgm` has stem `eye_00003`.
pub fn stem(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default();
    name.split('.').next().unwrap_or_default().to_string()
}

fn is_mask(path: &Path) -> bool {
    path.to_string_lossy().ends_with(MASK_SUFFIX)
}

/// Every `.pgm` below `root`, as paths relative to it, sorted.
pub fn pgm_files(root: &Path) -> Result<Vec<PathBuf>> {
    if !root.is_dir() {
        bail!("`{}` is not a directory", root.display());
    }
    let mut out = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.with_context(|| format!("scanning {}", root.display()))?;
        let p = entry.path();
        if entry.file_type().is_file() && p.extension().is_some_and(|e| e == "pgm") {
            out.push(p.strip_prefix(root).expect("walk stays below root").to_path_buf());
        }
    }
    out.sort();
    Ok(out)
}

/// An image and its mask, both relative to the scanned root.
#[derive(Debug, Clone)]
pub struct Pair {
    pub image: PathBuf,
    pub mask: PathBuf,
}

impl Pair {
    /// Directory of the pair relative to the root, plus the shared stem.
    pub fn key(&self) -> (PathBuf, String) {
        let dir = self.mask.parent().map(Path::to_path_buf).unwrap_or_default();
        (dir, stem(&self.mask))
    }
}

/// Pairs every `<stem>.mask.pgm` with the one other `.pgm` sharing its stem
/// and directory.
pub fn labelled_pairs(root: &Path) -> Result<Vec<Pair>> {
    let mut groups: BTreeMap<(PathBuf, String), (Vec<PathBuf>, Option<PathBuf>)> = BTreeMap::new();
    for p in pgm_files(root)? {
        let dir = p.parent().map(Path::to_path_buf).unwrap_or_default();
        let slot = groups.entry((dir, stem(&p))).or_default();
        if is_mask(&p) {
            slot.1 = Some(p);
        } else {
            slot.0.push(p);
        }
    }
    let mut pairs = Vec::new();
    for ((dir, s), (images, mask)) in groups {
        let Some(mask) = mask else { continue };
        match images.as_slice() {
            [image] => pairs.push(Pair {
                image: image.clone(),
                mask,
            }),
            [] => bail!("mask `{}` has no image", mask.display()),
            _ => bail!("several images share stem `{s}` in `{}`", dir.display()),
        }
    }
    if pairs.is_empty() {
        bail!("no image/mask pairs under `{}`", root.display());
    }
    Ok(pairs)
}

/// `.pgm` files that are not masks.
pub fn image_files(root: &Path) -> Result<Vec<PathBuf>> {
    let files: Vec<_> = pgm_files(root)?.into_iter().filter(|p| !is_mask(p)).collect();
    if files.is_empty() {
        bail!("no images under `{}`", root.display());
    }
    Ok(files)
}

/// Mask files keyed by stem. Prefers `*.mask.pgm`; a directory without any
/// uses all of its `.pgm` files.
pub fn masks_by_stem(root: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let all = pgm_files(root)?;
    let masks: Vec<_> = all.iter().filter(|p| is_mask(p)).cloned().collect();
    let chosen = if masks.is_empty() { all } else { masks };
    let mut out = BTreeMap::new();
    for p in chosen {
        let s = stem(&p);
        if let Some(prev) = out.insert(s.clone(), p.clone()) {
            bail!("`{}` and `{}` share stem `{s}`", prev.display(), p.display());
        }
    }
    Ok(out)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => ensure_dir(p),
        _ => Ok(()),
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// `<path><suffix>`, e.g. `w.spdn` -> `w.spdn.manifest.json`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to repeat a run: resolved configuration, seed, tool
/// version and the digests of what went in and came out.
#[derive(Debug, Serialize)]
pub struct Manifest<C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: Option<u64>,
    pub config: C,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl<C: Serialize> Manifest<C> {
    pub fn new(command: &'static str, seed: Option<u64>, config: C) -> Self {
        Self {
            tool: "spdnn",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Records `path` (under `root`) with the digest of its current content.
    pub fn input(&mut self, root: &Path, rel: &Path) -> Result<()> {
        self.inputs.push(FileDigest {
            path: rel.to_string_lossy().into_owned(),
            sha256: digest_file(&root.join(rel))?,
        });
        Ok(())
    }

    pub fn output(&mut self, root: &Path, rel: &Path) -> Result<()> {
        self.outputs.push(FileDigest {
            path: rel.to_string_lossy().into_owned(),
            sha256: digest_file(&root.join(rel))?,
        });
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifests serialize");
        write_text(path, &(text + "\n"))
    }
}
