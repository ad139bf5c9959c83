use std::f64::consts::PI;

use proptest::prelude::*;
use spdnn::augment::{
    augment_batch, augment_pipeline, contrast_inside, contrast_outside, convolve_image,
    motion_blur_kernel, resize_bilinear, shadow, shadow_coefficient, tanh_curve, AugmentParams,
    CONTRAST_GAIN,
};
use spdnn::raster::{BinaryMask, GrayImage};
use spdnn::rng::SplitMix;
use spdnn::synth::generate;

fn random_image(w: usize, h: usize, seed: u64) -> GrayImage {
    let mut rng = SplitMix::new(seed);
    GrayImage::new(w, h, (0..w * h).map(|_| rng.below(256) as u8).collect()).unwrap()
}

/// Straightforward clamped double loop, unrounded.
fn naive_convolve(img: &GrayImage, k: &spdnn::augment::Kernel) -> Vec<f64> {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let c = (k.side / 2) as i64;
    let mut out = vec![0.0; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for ky in 0..k.side as i64 {
                for kx in 0..k.side as i64 {
                    let sx = (x - (kx - c)).max(0).min(w - 1);
                    let sy = (y - (ky - c)).max(0).min(h - 1);
                    s += k.at(kx as usize, ky as usize) * img.get(sx as usize, sy as usize) as f64;
                }
            }
            out[(y * w + x) as usize] = s;
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn curve_is_pinned_and_increasing(offset in -0.8f64..0.8, a in 0.0f64..255.0, b in 0.0f64..255.0) {
        prop_assert!(tanh_curve(0.0, CONTRAST_GAIN, offset).abs() <= 1e-9);
        prop_assert!((tanh_curve(255.0, CONTRAST_GAIN, offset) - 255.0).abs() <= 1e-9);
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(tanh_curve(lo, CONTRAST_GAIN, offset) <= tanh_curve(hi, CONTRAST_GAIN, offset));
    }

    #[test]
    fn curve_symmetry_at_zero_offset(x in 0.0f64..=255.0) {
        let s = tanh_curve(x, CONTRAST_GAIN, 0.0) + tanh_curve(255.0 - x, CONTRAST_GAIN, 0.0);
        prop_assert!((s - 255.0).abs() <= 1e-9);
    }

    #[test]
    fn larger_inside_offset_never_brightens(x in 0.0f64..=255.0, o1 in 0.0f64..0.8, o2 in 0.0f64..0.8) {
        let (lo, hi) = (o1.min(o2), o1.max(o2));
        prop_assert!(tanh_curve(x, CONTRAST_GAIN, -hi) <= tanh_curve(x, CONTRAST_GAIN, -lo) + 1e-9);
    }

    #[test]
    fn shadow_is_monotone_per_sign(offset in -0.3f64..0.3, lift in 0.0f64..0.1, w in 2usize..200) {
        let up: Vec<f64> = (0..w).map(|c| shadow_coefficient(c, w, offset, lift, 1)).collect();
        let down: Vec<f64> = (0..w).map(|c| shadow_coefficient(c, w, offset, lift, -1)).collect();
        prop_assert!(up.windows(2).all(|p| p[0] <= p[1]));
        prop_assert!(down.windows(2).all(|p| p[0] >= p[1]));
        prop_assert!((up[0] - lift).abs() < 1e-12 && (up[w - 1] - 1.0 - lift).abs() < 1e-12);
    }

    #[test]
    fn unlifted_shadow_never_brightens(offset in -0.3f64..0.3, sign in prop::sample::select(vec![-1i8, 1]), seed in any::<u64>()) {
        let img = random_image(23, 7, seed);
        let out = shadow(&img, offset, 0.0, sign);
        prop_assert!(out.pixels().iter().zip(img.pixels()).all(|(a, b)| a <= b));
    }

    #[test]
    fn blur_kernels(length in 5.0f64..10.0, angle in -PI..PI) {
        let k = motion_blur_kernel(length, angle);
        prop_assert!(k.side % 2 == 1 && k.side >= length.ceil() as usize + 1);
        prop_assert!((k.sum() - 1.0).abs() <= 1e-9);
        prop_assert!(k.nonzero() >= length.ceil() as usize);
        prop_assert!(k.weights.iter().all(|w| *w >= 0.0));
        let flipped = k.rotated_half_turn();
        let diff = k.weights.iter().zip(&flipped.weights).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(diff <= 1e-12);
    }

    #[test]
    fn convolution_matches_naive_loops(length in 5.0f64..10.0, angle in -PI..PI, seed in any::<u64>()) {
        let img = random_image(19, 13, seed);
        let k = motion_blur_kernel(length, angle);
        let fast = convolve_image(&img, &k);
        for (a, b) in fast.pixels().iter().zip(naive_convolve(&img, &k)) {
            prop_assert!((*a as f64 - b).abs() <= 0.5 + 1e-9);
        }
    }
}

#[test]
fn inside_contrast_darkens_mid_gray() {
    let img = GrayImage::filled(10, 10, 128);
    let mask = BinaryMask::from_fn(10, 10, |x, _| x < 5);
    let out = contrast_inside(&img, &mask, 0.8);
    let mean = |im: &GrayImage| {
        let v: Vec<f64> = (0..10).flat_map(|y| (0..5).map(move |x| (x, y))).map(|(x, y)| im.get(x, y) as f64).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(mean(&out) < mean(&img));
}

#[test]
fn pipeline_is_reproducible_and_keeps_masks_crisp() {
    let clean = generate(3, 6, 320, 240);
    let a = augment_batch(&clean, 42);
    let b = augment_batch(&clean, 42);
    for ((ra, rb), src) in a.iter().zip(&b).zip(&clean) {
        let (ia, pa) = ra.as_ref().unwrap();
        let (ib, pb) = rb.as_ref().unwrap();
        assert_eq!(ia, ib);
        assert_eq!(pa, pb);
        assert_eq!((ia.width(), ia.height()), (128, 96));
        assert!(ia.mask.values().iter().all(|v| *v <= 1));
        assert_eq!(ia.mask, resize_bilinear(src, 128, 96).unwrap().mask);
    }
    let single = augment_pipeline(&clean[2], &mut SplitMix::for_item(42, 2)).unwrap();
    assert_eq!(&single, a[2].as_ref().unwrap());
    let other = augment_batch(&clean, 43);
    assert_ne!(a[0].as_ref().unwrap().0, other[0].as_ref().unwrap().0);
}

fn outside_variance(img: &GrayImage, mask: &BinaryMask) -> f64 {
    let vals: Vec<f64> = img
        .pixels()
        .iter()
        .zip(mask.values())
        .filter(|(_, m)| **m == 0)
        .map(|(p, _)| *p as f64)
        .collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

/// The column ramp spreads background intensities and the blur then pulls
/// them back together; both effects are visible over a batch.
#[test]
fn shadow_spreads_and_blur_smooths_the_background() {
    let clean = generate(11, 50, 320, 240);
    let (mut before, mut shadowed, mut blurred) = (0.0, 0.0, 0.0);
    for (i, img) in clean.iter().enumerate() {
        let p = AugmentParams::draw(&mut SplitMix::for_item(5, i as u64));
        let small = resize_bilinear(img, 128, 96).unwrap();
        let contrasted = contrast_inside(
            &contrast_outside(&small.image, &small.mask, p.outside_offset),
            &small.mask,
            p.inside_offset,
        );
        let s = shadow(&contrasted, p.shadow_offset, p.shadow_lift, p.shadow_sign);
        let b = convolve_image(&s, &motion_blur_kernel(p.blur_length, p.blur_angle));
        before += outside_variance(&contrasted, &small.mask);
        shadowed += outside_variance(&s, &small.mask);
        blurred += outside_variance(&b, &small.mask);
    }
    assert!(shadowed > before, "shadow {shadowed} vs {before}");
    assert!(blurred < shadowed, "blur {blurred} vs {shadowed}");
}
