//! Procedural eye images with exact iris masks.
//!
//! Each scene is an iris disk with a pupil hole, set in a sclera band
//! bounded by two eyelid parabolas, surrounded by skin. The iris carries a
//! radial sinusoid texture plus smooth value noise, and a specular highlight
//! sits inside the pupil. Pixel intensities and the mask are evaluated from
//! the same geometry at pixel centres, so labels carry no rendering noise.

use rayon::prelude::*;

use crate::raster::{BinaryMask, GrayImage, LabeledImage};
use crate::rng::SplitMix;

/// Smallest vertical gap, in pixels, between an eyelid and the pupil.
const LID_CLEARANCE: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneParams {
    pub width: usize,
    pub height: usize,
    pub center: (f64, f64),
    pub iris_radius: f64,
    pub pupil_ratio: f64,
    pub iris_level: f64,
    pub texture_amplitude: f64,
    pub texture_frequency: f64,
    pub texture_phase: f64,
    pub noise_amplitude: f64,
    pub pupil_level: f64,
    pub sclera_level: f64,
    pub skin_level: f64,
    /// `(apex offset above the centre, curvature)` of the upper lid.
    pub upper_lid: (f64, f64),
    /// `(apex offset below the centre, curvature)` of the lower lid.
    pub lower_lid: (f64, f64),
    pub highlight: (f64, f64, f64),
    noise_seed: u64,
}

impl SceneParams {
    pub fn pupil_radius(&self) -> f64 {
        self.iris_radius * self.pupil_ratio
    }

    /// Upper and lower eyelid heights at column position `x`.
    pub fn lids_at(&self, x: f64) -> (f64, f64) {
        let (cx, cy) = self.center;
        let dx = x - cx;
        let (ua, uk) = self.upper_lid;
        let (la, lk) = self.lower_lid;
        (cy - ua + uk * dx * dx, cy + la - lk * dx * dx)
    }

    /// Whether the lids leave at least `LID_CLEARANCE` pixels around the pupil.
    fn lids_clear_pupil(&self) -> bool {
        let (cx, cy) = self.center;
        let pr = self.pupil_radius();
        (0..=64).all(|i| {
            let dx = pr * (2.0 * i as f64 / 64.0 - 1.0);
            let half = (pr * pr - dx * dx).max(0.0).sqrt();
            let (up, low) = self.lids_at(cx + dx);
            up <= cy - half - LID_CLEARANCE && low >= cy + half + LID_CLEARANCE
        })
    }

    pub fn draw(width: usize, height: usize, rng: &mut SplitMix) -> Self {
        let (w, h) = (width as f64, height as f64);
        let s = w.min(h);
        loop {
            let r = s * rng.uniform(0.17, 0.26);
            let center = (w * rng.uniform(0.4, 0.6), h * rng.uniform(0.42, 0.58));
            let pupil_ratio = rng.uniform(0.25, 0.45);
            let pr = r * pupil_ratio;
            let upper = (rng.uniform(0.55, 1.15) * r, rng.uniform(0.2, 1.2) / r);
            let lower = (rng.uniform(0.7, 1.3) * r, rng.uniform(0.2, 1.2) / r);
            let hl_r = (pr * rng.uniform(0.2, 0.35)).max(0.8);
            let hl_off = (pr - hl_r) * rng.uniform(0.0, 0.8);
            let hl_ang = rng.uniform(-std::f64::consts::PI, std::f64::consts::PI);
            let p = SceneParams {
                width,
                height,
                center,
                iris_radius: r,
                pupil_ratio,
                iris_level: rng.uniform(70.0, 130.0),
                texture_amplitude: rng.uniform(12.0, 30.0),
                texture_frequency: rng.uniform(8.0, 20.0).round(),
                texture_phase: rng.uniform(0.0, std::f64::consts::TAU),
                noise_amplitude: rng.uniform(8.0, 18.0),
                pupil_level: rng.uniform(12.0, 40.0),
                sclera_level: rng.uniform(170.0, 225.0),
                skin_level: rng.uniform(105.0, 165.0),
                upper_lid: upper,
                lower_lid: lower,
                highlight: (
                    center.0 + hl_off * hl_ang.cos(),
                    center.1 + hl_off * hl_ang.sin(),
                    hl_r,
                ),
                noise_seed: rng.next_u64(),
            };
            if p.lids_clear_pupil() {
                return p;
            }
        }
    }
}

/// Smoothly interpolated lattice noise in `[-1, 1]`.
struct ValueNoise {
    cell: f64,
    cols: usize,
    lattice: Vec<f64>,
}

impl ValueNoise {
    fn new(width: usize, height: usize, cell: f64, seed: u64) -> Self {
        let cols = (width as f64 / cell).ceil() as usize + 2;
        let rows = (height as f64 / cell).ceil() as usize + 2;
        let mut rng = SplitMix::new(seed);
        Self {
            cell,
            cols,
            lattice: (0..cols * rows).map(|_| rng.uniform(-1.0, 1.0)).collect(),
        }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        let (gx, gy) = (x / self.cell, y / self.cell);
        let (ix, iy) = (gx.floor() as usize, gy.floor() as usize);
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        let (tx, ty) = (smooth(gx - ix as f64), smooth(gy - iy as f64));
        let v = |cx: usize, cy: usize| self.lattice[cy * self.cols + cx];
        let top = v(ix, iy) * (1.0 - tx) + v(ix + 1, iy) * tx;
        let bottom = v(ix, iy + 1) * (1.0 - tx) + v(ix + 1, iy + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Region {
    Skin,
    Sclera,
    Iris,
    Pupil,
}

fn region(p: &SceneParams, x: f64, y: f64) -> Region {
    let (up, low) = p.lids_at(x);
    if y < up || y > low {
        return Region::Skin;
    }
    let d = (x - p.center.0).hypot(y - p.center.1);
    if d < p.pupil_radius() {
        Region::Pupil
    } else if d < p.iris_radius {
        Region::Iris
    } else {
        Region::Sclera
    }
}

/// Renders one scene.
pub fn render(p: &SceneParams) -> LabeledImage {
    let noise = ValueNoise::new(p.width, p.height, (p.iris_radius * 0.4).max(2.0), p.noise_seed);
    let mut pixels = Vec::with_capacity(p.width * p.height);
    let mut bits = Vec::with_capacity(p.width * p.height);
    for py in 0..p.height {
        for px in 0..p.width {
            let (x, y) = (px as f64 + 0.5, py as f64 + 0.5);
            let n = noise.at(x, y);
            let reg = region(p, x, y);
            let v = match reg {
                Region::Skin => p.skin_level + 0.6 * p.noise_amplitude * n,
                Region::Sclera => p.sclera_level + 0.4 * p.noise_amplitude * n,
                Region::Pupil => {
                    let (hx, hy, hr) = p.highlight;
                    if (x - hx).hypot(y - hy) < hr {
                        250.0
                    } else {
                        p.pupil_level
                    }
                }
                Region::Iris => {
                    let (dx, dy) = (x - p.center.0, y - p.center.1);
                    let theta = dy.atan2(dx);
                    let rho = (dx.hypot(dy) - p.pupil_radius())
                        / (p.iris_radius - p.pupil_radius());
                    let spokes = (p.texture_frequency * theta + p.texture_phase + 3.0 * rho).sin();
                    let limbus = -25.0 * rho.powi(4);
                    p.iris_level + p.texture_amplitude * spokes + p.noise_amplitude * n + limbus
                }
            };
            pixels.push(v.round().clamp(0.0, 255.0) as u8);
            bits.push(reg == Region::Iris);
        }
    }
    LabeledImage::new(
        GrayImage::new(p.width, p.height, pixels).expect("sized by construction"),
        BinaryMask::new(p.width, p.height, bits).expect("sized by construction"),
    )
    .expect("image and mask share a canvas")
}

/// Scene `index` of the set seeded by `seed`.
pub fn generate_one(seed: u64, index: u64, width: usize, height: usize) -> LabeledImage {
    let mut rng = SplitMix::for_item(seed, index);
    render(&SceneParams::draw(width, height, &mut rng))
}

/// `count` scenes in index order; generation runs in parallel.
pub fn generate(seed: u64, count: usize, width: usize, height: usize) -> Vec<LabeledImage> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| generate_one(seed, i, width, height))
        .collect()
}
