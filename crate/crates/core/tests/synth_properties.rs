use std::collections::VecDeque;

use spdnn::raster::BinaryMask;
use spdnn::synth::{generate, generate_one};

/// Number of connected regions whose pixels equal `value`.
fn components(mask: &BinaryMask, value: bool, diagonal: bool) -> usize {
    let (w, h) = (mask.width() as isize, mask.height() as isize);
    let mut seen = vec![false; (w * h) as usize];
    let mut steps = vec![(1, 0), (-1, 0), (0, 1), (0, -1)];
    if diagonal {
        steps.extend([(1, 1), (1, -1), (-1, 1), (-1, -1)]);
    }
    let mut count = 0;
    for start in 0..(w * h) {
        let (sx, sy) = (start % w, start / w);
        if seen[start as usize] || mask.get(sx as usize, sy as usize) != value {
            continue;
        }
        count += 1;
        seen[start as usize] = true;
        let mut queue = VecDeque::from([(sx, sy)]);
        while let Some((x, y)) = queue.pop_front() {
            for (dx, dy) in &steps {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w || ny >= h {
                    continue;
                }
                let i = (ny * w + nx) as usize;
                if !seen[i] && mask.get(nx as usize, ny as usize) == value {
                    seen[i] = true;
                    queue.push_back((nx, ny));
                }
            }
        }
    }
    count
}

#[test]
fn masks_are_annuli_of_plausible_size() {
    for seed in 0..100 {
        let img = generate_one(seed, 0, 160, 120);
        let mask = &img.mask;
        assert_eq!(components(mask, true, false), 1, "seed {seed}: iris split");
        // Outside plus the pupil hole.
        assert_eq!(components(mask, false, true), 2, "seed {seed}: no enclosed pupil");
        let frac = mask.count_ones() as f64 / (160.0 * 120.0);
        assert!((0.02..=0.40).contains(&frac), "seed {seed}: area {frac}");
    }
}

#[test]
fn generation_is_reproducible() {
    let a = generate(77, 8, 96, 72);
    let b = generate(77, 8, 96, 72);
    assert_eq!(a, b);
    assert_eq!(a[5], generate_one(77, 5, 96, 72));
    assert_ne!(a[0], generate_one(78, 0, 96, 72));
}

#[test]
fn images_are_not_flat() {
    for img in generate(5, 10, 128, 96) {
        let px = img.image.pixels();
        let (lo, hi) = (px.iter().min().unwrap(), px.iter().max().unwrap());
        assert!(hi - lo > 60);
    }
}
