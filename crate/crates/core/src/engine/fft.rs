//! Same-padded 2-D cross-correlation through zero-padded real FFTs.
//!
//! A plane of `h x w` values is placed at the top-left of an `hp x wp` grid
//! with `hp >= h + p`, `wp >= w + p` and both at least `2p + 1`, where
//! `p = (k - 1) / 2`. Under those bounds circular correlation on the grid
//! equals zero-padded linear correlation on the `h x w` window, and every
//! kernel offset in `[-p, p]^2` maps to a distinct grid cell.
//!
//! Spectra are stored column-major: `wp / 2 + 1` frequency columns of `hp`
//! entries each.

use std::any::{Any, TypeId};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::Real;

struct Plans<T: Real> {
    r2c: Arc<dyn RealToComplex<T>>,
    c2r: Arc<dyn ComplexToReal<T>>,
    col_fwd: Arc<dyn Fft<T>>,
    col_inv: Arc<dyn Fft<T>>,
}

type PlanCache = Mutex<HashMap<(TypeId, usize, usize), Arc<dyn Any + Send + Sync>>>;

fn plan_cache() -> &'static PlanCache {
    static CACHE: OnceLock<PlanCache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn plans<T: Real>(hp: usize, wp: usize) -> Arc<Plans<T>> {
    let key = (TypeId::of::<T>(), hp, wp);
    let mut cache = plan_cache().lock().expect("plan cache poisoned");
    let entry = cache
        .entry(key)
        .or_insert_with(|| {
            let mut real = RealFftPlanner::<T>::new();
            let mut complex = FftPlanner::<T>::new();
            let plans: Arc<Plans<T>> = Arc::new(Plans {
                r2c: real.plan_fft_forward(wp),
                c2r: real.plan_fft_inverse(wp),
                col_fwd: complex.plan_fft_forward(hp),
                col_inv: complex.plan_fft_inverse(hp),
            });
            plans
        })
        .clone();
    entry
        .downcast::<Plans<T>>()
        .unwrap_or_else(|_| unreachable!("cache keyed by type id"))
}

/// Smallest `n >= target` whose only prime factors are 2, 3 and 5.
fn smooth_size(target: usize, even: bool) -> usize {
    let mut n = target.max(1);
    loop {
        let mut m = n;
        for p in [2, 3, 5] {
            while m % p == 0 {
                m /= p;
            }
        }
        if m == 1 && (!even || n % 2 == 0) {
            return n;
        }
        n += 1;
    }
}

#[derive(Clone)]
pub(crate) struct FftGrid<T: Real> {
    pub h: usize,
    pub w: usize,
    pub hp: usize,
    pub wp: usize,
    pub wc: usize,
    plans: Arc<Plans<T>>,
}

/// Per-worker buffers.
pub(crate) struct Scratch<T: Real> {
    row_real: Vec<T>,
    row_spec: Vec<Complex<T>>,
    r2c: Vec<Complex<T>>,
    c2r: Vec<Complex<T>>,
    col: Vec<Complex<T>>,
    pub acc: Vec<Complex<T>>,
}

impl<T: Real> FftGrid<T> {
    pub fn new(h: usize, w: usize, kernel: usize) -> Self {
        let pad = kernel / 2;
        let hp = smooth_size((h + pad).max(2 * pad + 1), false);
        let wp = smooth_size((w + pad).max(2 * pad + 1), true);
        Self {
            h,
            w,
            hp,
            wp,
            wc: wp / 2 + 1,
            plans: plans::<T>(hp, wp),
        }
    }

    pub fn spectrum_len(&self) -> usize {
        self.wc * self.hp
    }

    pub fn scratch(&self) -> Scratch<T> {
        let p = &self.plans;
        Scratch {
            row_real: vec![T::zero(); self.wp],
            row_spec: vec![Complex::new(T::zero(), T::zero()); self.wc],
            r2c: vec![Complex::new(T::zero(), T::zero()); p.r2c.get_scratch_len()],
            c2r: vec![Complex::new(T::zero(), T::zero()); p.c2r.get_scratch_len()],
            col: vec![
                Complex::new(T::zero(), T::zero());
                p.col_fwd
                    .get_inplace_scratch_len()
                    .max(p.col_inv.get_inplace_scratch_len())
            ],
            acc: vec![Complex::new(T::zero(), T::zero()); self.spectrum_len()],
        }
    }

    fn row_forward(&self, row: usize, out: &mut [Complex<T>], s: &mut Scratch<T>) {
        self.plans
            .r2c
            .process_with_scratch(&mut s.row_real, &mut s.row_spec, &mut s.r2c)
            .expect("buffer sizes come from the plan");
        for (c, v) in s.row_spec.iter().enumerate() {
            out[c * self.hp + row] = *v;
        }
    }

    /// Spectrum of an `h x w` plane.
    pub fn forward(&self, plane: &[T], out: &mut [Complex<T>], s: &mut Scratch<T>) {
        debug_assert_eq!(plane.len(), self.h * self.w);
        out.fill(Complex::new(T::zero(), T::zero()));
        for r in 0..self.h {
            s.row_real[..self.w].copy_from_slice(&plane[r * self.w..(r + 1) * self.w]);
            s.row_real[self.w..].fill(T::zero());
            self.row_forward(r, out, s);
        }
        self.plans.col_fwd.process_with_scratch(out, &mut s.col);
    }

    /// Spectrum of a `k x k` kernel with offset `(dy - p, dx - p)` placed at
    /// the wrapped grid cell.
    pub fn forward_kernel(&self, kernel: &[T], k: usize, out: &mut [Complex<T>], s: &mut Scratch<T>) {
        let p = k / 2;
        out.fill(Complex::new(T::zero(), T::zero()));
        for dy in 0..k {
            s.row_real.fill(T::zero());
            for dx in 0..k {
                s.row_real[(dx + self.wp - p) % self.wp] = kernel[dy * k + dx];
            }
            self.row_forward((dy + self.hp - p) % self.hp, out, s);
        }
        self.plans.col_fwd.process_with_scratch(out, &mut s.col);
    }

    /// Inverse transform of `spec` (overwritten). Calls `emit(row, values)`
    /// for each requested grid row with the `wp` normalized real values.
    pub fn inverse(
        &self,
        spec: &mut [Complex<T>],
        rows: impl Iterator<Item = usize>,
        s: &mut Scratch<T>,
        mut emit: impl FnMut(usize, &[T]),
    ) {
        self.plans.col_inv.process_with_scratch(spec, &mut s.col);
        let scale = T::one() / T::from_usize(self.hp * self.wp).expect("small integer");
        for r in rows {
            for c in 0..self.wc {
                s.row_spec[c] = spec[c * self.hp + r];
            }
            // Rows of a real signal's half-spectrum have real DC and Nyquist bins.
            s.row_spec[0].im = T::zero();
            if self.wp % 2 == 0 {
                s.row_spec[self.wc - 1].im = T::zero();
            }
            self.plans
                .c2r
                .process_with_scratch(&mut s.row_spec, &mut s.row_real, &mut s.c2r)
                .expect("buffer sizes come from the plan");
            for v in s.row_real.iter_mut() {
                *v = *v * scale;
            }
            emit(r, &s.row_real);
        }
    }

    /// Inverse transform cropped back to the `h x w` window.
    pub fn inverse_plane(&self, spec: &mut [Complex<T>], out: &mut [T], s: &mut Scratch<T>) {
        let w = self.w;
        self.inverse(spec, 0..self.h, s, |r, row| {
            out[r * w..(r + 1) * w].copy_from_slice(&row[..w]);
        });
    }

    /// Inverse transform sampled at kernel offsets, written as a `k x k` block.
    pub fn inverse_kernel(&self, spec: &mut [Complex<T>], k: usize, out: &mut [T], s: &mut Scratch<T>) {
        let p = k / 2;
        let (hp, wp) = (self.hp, self.wp);
        let rows: Vec<usize> = (0..k).map(|dy| (dy + hp - p) % hp).collect();
        self.inverse(spec, rows.iter().copied(), s, |r, row| {
            let dy = (r + p) % hp;
            for dx in 0..k {
                out[dy * k + dx] = row[(dx + wp - p) % wp];
            }
        });
    }
}

/// `acc += a * b`
pub(crate) fn mac<T>(acc: &mut [Complex<T>], a: &[Complex<T>], b: &[Complex<T>])
where
    T: Real,
{
    for ((o, x), y) in acc.iter_mut().zip(a).zip(b) {
        o.re = o.re + x.re * y.re - x.im * y.im;
        o.im = o.im + x.re * y.im + x.im * y.re;
    }
}

/// `acc += a * conj(b)`
pub(crate) fn mac_conj<T>(acc: &mut [Complex<T>], a: &[Complex<T>], b: &[Complex<T>])
where
    T: Real,
{
    for ((o, x), y) in acc.iter_mut().zip(a).zip(b) {
        o.re = o.re + x.re * y.re + x.im * y.im;
        o.im = o.im + x.im * y.re - x.re * y.im;
    }
}
