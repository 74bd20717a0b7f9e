//! Second-order IIR filters used for spectral augmentation.

use num_complex::Complex;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Coefficient bound for random filters; keeps both the poles and the zeros
/// strictly inside the unit circle.
pub const RANDOM_COEF_BOUND: f64 = 0.375;

/// `H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    pub fn identity() -> Self {
        Self {
            b: [1.0, 0.0, 0.0],
            a: [0.0, 0.0],
        }
    }

    /// Random filter with all four non-leading coefficients uniform in
    /// `[-0.375, 0.375]`, scaled to unit gain at a random anchor frequency.
    /// Returns the filter and the anchor (radians per sample).
    pub fn random<R: Rng>(rng: &mut R) -> (Self, f64) {
        let mut u = || rng.gen_range(-RANDOM_COEF_BOUND..=RANDOM_COEF_BOUND);
        let (b1, b2, a1, a2) = (u(), u(), u(), u());
        let anchor = rng.gen_range(0.0..std::f64::consts::PI);
        let mut f = Self {
            b: [1.0, b1, b2],
            a: [a1, a2],
        };
        let g = f.response(anchor).norm();
        f.b.iter_mut().for_each(|c| *c /= g);
        (f, anchor)
    }

    /// RBJ peaking equalizer.
    pub fn peaking(sample_rate: f64, freq_hz: f64, gain_db: f64, q: f64) -> Self {
        let a = 10f64.powf(gain_db / 40.0);
        let w0 = std::f64::consts::TAU * freq_hz / sample_rate;
        let alpha = w0.sin() / (2.0 * q);
        let a0 = 1.0 + alpha / a;
        Self {
            b: [(1.0 + alpha * a) / a0, -2.0 * w0.cos() / a0, (1.0 - alpha * a) / a0],
            a: [-2.0 * w0.cos() / a0, (1.0 - alpha / a) / a0],
        }
    }

    /// Frequency response at `w` radians per sample.
    pub fn response(&self, w: f64) -> Complex<f64> {
        let z1 = Complex::from_polar(1.0, -w);
        let z2 = z1 * z1;
        let num = self.b[0] + z1 * self.b[1] + z2 * self.b[2];
        let den = Complex::new(1.0, 0.0) + z1 * self.a[0] + z2 * self.a[1];
        num / den
    }

    /// Largest pole magnitude.
    pub fn pole_radius(&self) -> f64 {
        let [a1, a2] = self.a;
        let disc = Complex::new(a1 * a1 - 4.0 * a2, 0.0).sqrt();
        let p1 = (-a1 + disc) / 2.0;
        let p2 = (-a1 - disc) / 2.0;
        p1.norm().max(p2.norm())
    }

    /// Filters `x` from a zero state (transposed direct form II).
    pub fn process<T: Real>(&self, x: &[T]) -> Vec<T> {
        let (mut s1, mut s2) = (0.0f64, 0.0f64);
        x.iter()
            .map(|&v| {
                let v = v.as_f64();
                let y = self.b[0] * v + s1;
                s1 = self.b[1] * v - self.a[0] * y + s2;
                s2 = self.b[2] * v - self.a[1] * y;
                T::lit(y)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakingBand {
    pub freq_hz: f64,
    pub gain_db: f64,
    pub q: f64,
}

/// Draws 1-3 peaking bands with gains in +-6 dB, log-uniform center
/// frequencies between 60 Hz and 0.4 fs, and Q in 0.5-4.
pub fn random_eq<R: Rng>(rng: &mut R, sample_rate: u32) -> Vec<PeakingBand> {
    let n = rng.gen_range(1..=3);
    let (lo, hi) = (60f64.ln(), (0.4 * sample_rate as f64).ln());
    (0..n)
        .map(|_| PeakingBand {
            freq_hz: rng.gen_range(lo..hi).exp(),
            gain_db: rng.gen_range(-6.0..=6.0),
            q: rng.gen_range(0.5..4.0),
        })
        .collect()
}

pub fn apply_eq<T: Real>(x: &[T], bands: &[PeakingBand], sample_rate: u32) -> Vec<T> {
    bands.iter().fold(x.to_vec(), |acc, b| {
        Biquad::peaking(sample_rate as f64, b.freq_hz, b.gain_db, b.q).process(&acc)
    })
}

/// Applies one random second-order filter drawn from `seed`.
pub fn biquad_augment<T: Real>(signal: &[T], seed: u64) -> Vec<T> {
    let (f, _) = Biquad::random(&mut ChaCha8Rng::seed_from_u64(seed));
    f.process(signal)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_passes_through() {
        let x: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        assert_eq!(Biquad::identity().process(&x), x);
    }

    #[test]
    fn random_filters_are_stable_with_unit_anchor_gain() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let (f, anchor) = Biquad::random(&mut rng);
            assert!(f.pole_radius() < 1.0);
            assert!((f.response(anchor).norm() - 1.0).abs() < 1e-12);
            let mut imp = vec![0.0f64; 4000];
            imp[0] = 1.0;
            let h = f.process(&imp);
            let e: f64 = h.iter().map(|v| v * v).sum();
            assert!(e.is_finite());
            assert!(h[3990..].iter().all(|v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn same_seed_same_filter() {
        let x: Vec<f32> = (0..64).map(|i| (i as f32 * 0.7).cos()).collect();
        assert_eq!(biquad_augment(&x, 5), biquad_augment(&x, 5));
        assert_ne!(biquad_augment(&x, 5), biquad_augment(&x, 6));
    }

    #[test]
    fn peaking_gain_at_center() {
        let f = Biquad::peaking(48_000.0, 1000.0, 6.0, 1.0);
        let w = std::f64::consts::TAU * 1000.0 / 48_000.0;
        assert!((20.0 * f.response(w).norm().log10() - 6.0).abs() < 1e-9);
        assert!((f.response(0.0).norm() - 1.0).abs() < 1e-9);
    }
}
