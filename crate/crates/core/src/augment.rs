//! Degrades clean eye images into low-quality samples: bilinear downscaling,
//! tanh contrast remapping outside and inside the iris, a horizontal shadow
//! ramp, and linear motion blur. Masks are only resized.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::raster::{BinaryMask, GrayImage, LabeledImage, RasterError};
use crate::rng::SplitMix;

pub const TARGET_WIDTH: usize = 128;
pub const TARGET_HEIGHT: usize = 96;
pub const CONTRAST_GAIN: f64 = 3.0;
pub const SHADOW_GAIN: f64 = 2.0;
/// Line samples per pixel of blur length.
pub const BLUR_SAMPLES_PER_PIXEL: f64 = 16.0;
/// Perpendicular offsets spanning a one-pixel-wide stroke.
const BLUR_WIDTH_OFFSETS: [f64; 4] = [-0.375, -0.125, 0.125, 0.375];

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("cannot downscale {from_w}x{from_h} to the larger {to_w}x{to_h}")]
    UpscaleRequest {
        from_w: usize,
        from_h: usize,
        to_w: usize,
        to_h: usize,
    },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Per-image degradation parameters, drawn in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AugmentParams {
    pub target_width: usize,
    pub target_height: usize,
    pub outside_offset: f64,
    pub inside_offset: f64,
    pub shadow_offset: f64,
    pub shadow_lift: f64,
    pub shadow_sign: i8,
    pub blur_length: f64,
    pub blur_angle: f64,
}

impl AugmentParams {
    pub fn draw(rng: &mut SplitMix) -> Self {
        let outside_offset = rng.uniform(-0.3, 0.3);
        let inside_offset = rng.uniform(0.0, 0.8);
        let shadow_offset = rng.uniform(-0.3, 0.3);
        let shadow_lift = rng.uniform(0.0, 0.1);
        let shadow_sign = if rng.next_f64() < 0.5 { 1 } else { -1 };
        let blur_length = rng.uniform(5.0, 10.0);
        // Maps [0, 1) onto (-pi, pi].
        let blur_angle = PI - 2.0 * PI * rng.next_f64();
        Self {
            target_width: TARGET_WIDTH,
            target_height: TARGET_HEIGHT,
            outside_offset,
            inside_offset,
            shadow_offset,
            shadow_lift,
            shadow_sign,
            blur_length,
            blur_angle,
        }
    }
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn bilinear_taps(out: usize, src: usize, dst: usize) -> (usize, usize, f64) {
    let s = ((out as f64 + 0.5) * src as f64 / dst as f64 - 0.5).clamp(0.0, (src - 1) as f64);
    let i0 = s.floor() as usize;
    let i1 = (i0 + 1).min(src - 1);
    (i0, i1, s - i0 as f64)
}

fn resample(w: usize, h: usize, tw: usize, th: usize, at: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(tw * th);
    for y in 0..th {
        let (y0, y1, fy) = bilinear_taps(y, h, th);
        for x in 0..tw {
            let (x0, x1, fx) = bilinear_taps(x, w, tw);
            let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
            let bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// Bilinear downscaling with half-pixel centres and edge clamping. The mask
/// is resampled the same way and re-thresholded at one half.
pub fn resize_bilinear(
    img: &LabeledImage,
    width: usize,
    height: usize,
) -> Result<LabeledImage, AugmentError> {
    let (w, h) = (img.width(), img.height());
    if width > w || height > h || width == 0 || height == 0 {
        return Err(AugmentError::UpscaleRequest {
            from_w: w,
            from_h: h,
            to_w: width,
            to_h: height,
        });
    }
    let pixels = resample(w, h, width, height, |x, y| f64::from(img.image.get(x, y)));
    let mask = resample(w, h, width, height, |x, y| f64::from(u8::from(img.mask.get(x, y))));
    Ok(LabeledImage::new(
        GrayImage::new(width, height, pixels.into_iter().map(to_u8).collect())?,
        BinaryMask::new(width, height, mask.into_iter().map(|v| v >= 0.5).collect())?,
    )?)
}

/// `255 * norm(tanh(gain * (x / 255 - 0.5) + offset))`, with `norm` mapping
/// the curve's values at `x = 0` and `x = 255` onto 0 and 1.
pub fn tanh_curve(x: f64, gain: f64, offset: f64) -> f64 {
    let lo = (-0.5 * gain + offset).tanh();
    let hi = (0.5 * gain + offset).tanh();
    let v = (gain * (x / 255.0 - 0.5) + offset).tanh();
    255.0 * (v - lo) / (hi - lo)
}

fn remap_where(img: &GrayImage, mask: &BinaryMask, want: bool, offset: f64) -> GrayImage {
    let lut: Vec<u8> = (0..=255)
        .map(|x| to_u8(tanh_curve(f64::from(x), CONTRAST_GAIN, offset)))
        .collect();
    let mut out = img.clone();
    for (p, m) in out.pixels_mut().iter_mut().zip(mask.values()) {
        if (*m != 0) == want {
            *p = lut[usize::from(*p)];
        }
    }
    out
}

/// Remaps non-iris pixels through the tanh curve shifted by `offset`.
pub fn contrast_outside(img: &GrayImage, mask: &BinaryMask, offset: f64) -> GrayImage {
    remap_where(img, mask, false, offset)
}

/// Remaps iris pixels through the tanh curve shifted by `-offset`.
pub fn contrast_inside(img: &GrayImage, mask: &BinaryMask, offset: f64) -> GrayImage {
    remap_where(img, mask, true, -offset)
}

/// Multiplier applied to column `c` of a `width`-column image.
pub fn shadow_coefficient(c: usize, width: usize, offset: f64, lift: f64, sign: i8) -> f64 {
    let s = f64::from(sign) * SHADOW_GAIN;
    let x = if width > 1 {
        c as f64 / (width - 1) as f64
    } else {
        0.5
    };
    let f = |x: f64| (s * (x - 0.5 + offset)).tanh();
    let (a, b) = (f(0.0), f(1.0));
    let (lo, hi) = (a.min(b), a.max(b));
    (f(x) - lo) / (hi - lo) + lift
}

/// Scales every column by its shadow coefficient, clipping at 255.
pub fn shadow(img: &GrayImage, offset: f64, lift: f64, sign: i8) -> GrayImage {
    let w = img.width();
    let coef: Vec<f64> = (0..w)
        .map(|c| shadow_coefficient(c, w, offset, lift, sign))
        .collect();
    let mut out = img.clone();
    for (i, p) in out.pixels_mut().iter_mut().enumerate() {
        *p = to_u8(f64::from(*p) * coef[i % w]);
    }
    out
}

/// Square blur kernel, row-major, centred at `(side / 2, side / 2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub side: usize,
    pub weights: Vec<f64>,
}

impl Kernel {
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.weights[y * self.side + x]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn nonzero(&self) -> usize {
        self.weights.iter().filter(|w| **w > 0.0).count()
    }

    /// The kernel turned by half a revolution.
    pub fn rotated_half_turn(&self) -> Kernel {
        Kernel {
            side: self.side,
            weights: self.weights.iter().rev().copied().collect(),
        }
    }
}

/// Rasterizes a one-pixel-wide segment of `length` pixels through the kernel
/// centre at `angle` radians (counter-clockwise from the +x axis, with image
/// rows growing downwards). Each cell's weight is the fraction of
/// supersamples that land in it.
pub fn motion_blur_kernel(length: f64, angle: f64) -> Kernel {
    let mut side = length.ceil() as usize + 1;
    if side % 2 == 0 {
        side += 1;
    }
    let c = (side / 2) as f64;
    let half = ((length * BLUR_SAMPLES_PER_PIXEL / 2.0).ceil() as usize).max(1);
    let step = length / (2 * half) as f64;
    let (dx, dy) = (angle.cos(), -angle.sin());
    let mut weights = vec![0.0; side * side];
    let mut hits = 0usize;
    for j in 0..half {
        let t = (j as f64 + 0.5) * step;
        for s in BLUR_WIDTH_OFFSETS {
            for t in [t, -t] {
                let px = t * dx - s * dy;
                let py = t * dy + s * dx;
                let (x, y) = (c + px.round(), c + py.round());
                if x >= 0.0 && y >= 0.0 && (x as usize) < side && (y as usize) < side {
                    weights[y as usize * side + x as usize] += 1.0;
                    hits += 1;
                }
            }
        }
    }
    let total = hits as f64;
    for w in &mut weights {
        *w /= total;
    }
    Kernel { side, weights }
}

/// 2-D convolution with edge replication, rounded back to 8 bits.
pub fn convolve_image(img: &GrayImage, kernel: &Kernel) -> GrayImage {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let c = (kernel.side / 2) as isize;
    let taps: Vec<(isize, isize, f64)> = (0..kernel.side)
        .flat_map(|ky| (0..kernel.side).map(move |kx| (kx, ky)))
        .filter_map(|(kx, ky)| {
            let v = kernel.at(kx, ky);
            (v != 0.0).then(|| (kx as isize - c, ky as isize - c, v))
        })
        .collect();
    let mut out = Vec::with_capacity(img.pixels().len());
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (dx, dy, v) in &taps {
                let sx = (x - dx).clamp(0, w - 1) as usize;
                let sy = (y - dy).clamp(0, h - 1) as usize;
                acc += v * f64::from(img.get(sx, sy));
            }
            out.push(to_u8(acc));
        }
    }
    GrayImage::new(img.width(), img.height(), out).expect("same canvas")
}

/// Applies every stage with explicit parameters.
pub fn apply(img: &LabeledImage, p: &AugmentParams) -> Result<LabeledImage, AugmentError> {
    let small = resize_bilinear(img, p.target_width, p.target_height)?;
    let mut pixels = contrast_outside(&small.image, &small.mask, p.outside_offset);
    pixels = contrast_inside(&pixels, &small.mask, p.inside_offset);
    pixels = shadow(&pixels, p.shadow_offset, p.shadow_lift, p.shadow_sign);
    pixels = convolve_image(&pixels, &motion_blur_kernel(p.blur_length, p.blur_angle));
    Ok(LabeledImage::new(pixels, small.mask)?)
}

/// Draws parameters from `rng` and applies every stage.
pub fn augment_pipeline(
    img: &LabeledImage,
    rng: &mut SplitMix,
) -> Result<(LabeledImage, AugmentParams), AugmentError> {
    let p = AugmentParams::draw(rng);
    Ok((apply(img, &p)?, p))
}

/// Augments a batch; image `i` uses the stream for `(seed, i)`.
pub fn augment_batch(
    images: &[LabeledImage],
    seed: u64,
) -> Vec<Result<(LabeledImage, AugmentParams), AugmentError>> {
    images
        .par_iter()
        .enumerate()
        .map(|(i, img)| augment_pipeline(img, &mut SplitMix::for_item(seed, i as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(w: usize, h: usize, f: impl Fn(usize, usize) -> u8) -> LabeledImage {
        let mut px = Vec::new();
        for y in 0..h {
            for x in 0..w {
                px.push(f(x, y));
            }
        }
        LabeledImage::new(
            GrayImage::new(w, h, px).unwrap(),
            BinaryMask::from_fn(w, h, |x, y| x + y < (w + h) / 2),
        )
        .unwrap()
    }

    #[test]
    fn resize_dimensions_and_constants() {
        let img = labeled(640, 480, |_, _| 77);
        let out = resize_bilinear(&img, 128, 96).unwrap();
        assert_eq!((out.width(), out.height()), (128, 96));
        assert!(out.image.pixels().iter().all(|p| *p == 77));
        assert!(matches!(
            resize_bilinear(&img, 700, 96),
            Err(AugmentError::UpscaleRequest { .. })
        ));
    }

    #[test]
    fn halving_averages_blocks() {
        let img = labeled(4, 4, |x, y| (10 * x + 40 * y) as u8);
        let out = resize_bilinear(&img, 2, 2).unwrap();
        // Each output pixel sits at the centre of a 2x2 block.
        assert_eq!(out.image.pixels(), &[25, 45, 105, 125]);
    }

    #[test]
    fn curve_reference_values() {
        assert!((tanh_curve(127.5, 3.0, 0.0) - 127.5).abs() < 1e-9);
        let want = 255.0 * (0.75f64.tanh() + 1.5f64.tanh()) / (2.0 * 1.5f64.tanh());
        assert!((tanh_curve(191.25, 3.0, 0.0) - want).abs() < 1e-9);
        assert!((want - 216.968).abs() < 1e-3);
        for o in [-0.3, 0.0, 0.17, 0.8] {
            assert!(tanh_curve(0.0, 3.0, o).abs() < 1e-9);
            assert!((tanh_curve(255.0, 3.0, o) - 255.0).abs() < 1e-9);
        }
    }

    #[test]
    fn curve_compresses_extremes_and_stretches_midtones() {
        let slope = |x: f64| tanh_curve(x + 0.5, 3.0, 0.0) - tanh_curve(x - 0.5, 3.0, 0.0);
        assert!(slope(1.0) < 1.0 && slope(254.0) < 1.0);
        assert!(slope(127.5) > 1.0);
        let ratio = (tanh_curve(200.0, 3.0, 0.0) - tanh_curve(55.0, 3.0, 0.0)) / 145.0;
        assert!((ratio - 1.3455).abs() < 1e-3);
    }

    #[test]
    fn contrast_regions() {
        let img = labeled(8, 8, |x, y| (x * 30 + y) as u8);
        let all_in = BinaryMask::from_fn(8, 8, |_, _| true);
        let all_out = BinaryMask::from_fn(8, 8, |_, _| false);
        assert_eq!(contrast_outside(&img.image, &all_in, 0.2), img.image);
        assert_eq!(contrast_inside(&img.image, &all_out, 0.5), img.image);
        assert_eq!(
            contrast_inside(&img.image, &all_in, 0.0),
            contrast_outside(&img.image, &all_out, 0.0)
        );
        let gray = GrayImage::filled(8, 8, 128);
        let dark = contrast_inside(&gray, &all_in, 0.8);
        assert!(dark.pixels().iter().all(|p| *p < 128));
    }

    #[test]
    fn shadow_coefficients() {
        assert!((shadow_coefficient(50, 101, 0.0, 0.0, 1) - 0.5).abs() < 1e-12);
        for sign in [1i8, -1] {
            let c: Vec<f64> = (0..64).map(|c| shadow_coefficient(c, 64, 0.1, 0.0, sign)).collect();
            let (first, last) = (c[0], c[63]);
            if sign == 1 {
                assert!(c.windows(2).all(|w| w[0] <= w[1]));
                assert_eq!((first, last), (0.0, 1.0));
            } else {
                assert!(c.windows(2).all(|w| w[0] >= w[1]));
                assert_eq!((first, last), (1.0, 0.0));
            }
        }
        let img = GrayImage::filled(10, 2, 250);
        let lifted = shadow(&img, -0.3, 0.1, 1);
        assert_eq!(lifted.get(9, 0), 255);
    }

    #[test]
    fn horizontal_blur_is_one_row() {
        let k = motion_blur_kernel(5.0, 0.0);
        assert_eq!(k.side, 7);
        assert!((k.sum() - 1.0).abs() < 1e-12);
        let rows: Vec<usize> = (0..7)
            .filter(|y| (0..7).any(|x| k.at(x, *y) > 0.0))
            .collect();
        assert_eq!(rows, vec![3]);
        assert!(k.nonzero() >= 5);
    }

    #[test]
    fn convolution_identities() {
        let k = motion_blur_kernel(7.3, 0.9);
        let flat = GrayImage::filled(20, 15, 100);
        assert_eq!(convolve_image(&flat, &k), flat);
        let mut delta = GrayImage::filled(21, 21, 0);
        delta.set(10, 10, 255);
        let h = motion_blur_kernel(5.0, 0.0);
        let out = convolve_image(&delta, &h);
        for x in 0..21 {
            let want = if (7..=13).contains(&x) {
                to_u8(255.0 * h.at(x - 7, 3))
            } else {
                0
            };
            assert_eq!(out.get(x, 10), want);
        }
    }

    #[test]
    fn draw_order_and_supports() {
        let mut a = SplitMix::new(99);
        let p = AugmentParams::draw(&mut a);
        let mut b = SplitMix::new(99);
        assert_eq!(p.outside_offset, b.uniform(-0.3, 0.3));
        assert_eq!(p.inside_offset, b.uniform(0.0, 0.8));
        for i in 0..1000 {
            let p = AugmentParams::draw(&mut SplitMix::for_item(1, i));
            assert!((-0.3..0.3).contains(&p.outside_offset));
            assert!((0.0..0.8).contains(&p.inside_offset));
            assert!((0.0..0.1).contains(&p.shadow_lift));
            assert!((5.0..10.0).contains(&p.blur_length));
            assert!(p.blur_angle > -PI && p.blur_angle <= PI);
            assert!(p.shadow_sign == 1 || p.shadow_sign == -1);
        }
    }
}
