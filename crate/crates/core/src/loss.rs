//! Training objectives: compressed spectral loss with its analytic gradient,
//! local SNR, the alpha gating loss and their weighted combination.
//!
//! Spectra are flat slices of complex bins (any frame layout, as long as `Y`
//! and `S` agree).

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::enhance::nb_df_bins;
use crate::error::{expect_len, Error, Result};
use crate::scalar::{norm_sqr, Real};
use crate::spectral::Spectrogram;

/// Floor for squared magnitudes in phase and magnitude derivatives.
pub const HARDENED_EPS: f64 = 1e-12;
pub const LSNR_MIN_DB: f64 = -35.0;
pub const LSNR_MAX_DB: f64 = 35.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    /// Magnitude compression exponent, `0 < c <= 1`.
    pub c: f64,
    pub lambda_spec: f64,
    pub lambda_alpha: f64,
    pub lsnr_lo: f64,
    pub lsnr_hi: f64,
    pub lsnr_window_ms: f64,
    pub f_df: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            c: 0.6,
            lambda_spec: 1.0,
            lambda_alpha: 0.05,
            lsnr_lo: -10.0,
            lsnr_hi: -5.0,
            lsnr_window_ms: 20.0,
            f_df: 5000.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c <= 1.0) {
            return Err(Error::config(format!("compression exponent {} outside (0, 1]", self.c)));
        }
        if !(self.lsnr_lo < self.lsnr_hi) {
            return Err(Error::config(format!(
                "LSNR thresholds must satisfy lo < hi (got {} / {})",
                self.lsnr_lo, self.lsnr_hi
            )));
        }
        if self.lambda_spec < 0.0 || self.lambda_alpha < 0.0 {
            return Err(Error::config("loss weights must be non-negative"));
        }
        Ok(())
    }
}

/// `|z|^c e^{j arg z}`, zero at the origin.
#[inline]
fn compress<T: Real>(z: Complex<T>, c: T) -> Complex<T> {
    let m = z.norm();
    if m == T::zero() {
        Complex::default()
    } else {
        z * m.powf(c - T::one())
    }
}

/// `sum (|Y|^c - |S|^c)^2 + sum ||Y|^c e^{j phi_Y} - |S|^c e^{j phi_S}|^2`.
pub fn spectral_loss<T: Real>(y: &[Complex<T>], s: &[Complex<T>], c: f64) -> Result<T> {
    expect_len("spectral loss inputs", y.len(), s.len())?;
    let c = T::lit(c);
    Ok(y.iter()
        .zip(s)
        .map(|(&y, &s)| {
            let mag = y.norm().powf(c) - s.norm().powf(c);
            mag * mag + norm_sqr(compress(y, c) - compress(s, c))
        })
        .sum())
}

/// Gradient of [`spectral_loss`] with respect to `Re Y` (in `.re`) and
/// `Im Y` (in `.im`). Every `1/|Y|^2` factor uses `max(|Y|^2, 1e-12)`, so
/// the result is finite for any input, including `Y = 0`.
pub fn spectral_loss_grad<T: Real>(y: &[Complex<T>], s: &[Complex<T>], c: f64) -> Result<Vec<Complex<T>>> {
    expect_len("spectral loss inputs", y.len(), s.len())?;
    let c = T::lit(c);
    let two = T::lit(2.0);
    let eps = T::lit(HARDENED_EPS);
    Ok(y.iter()
        .zip(s)
        .map(|(&y, &s)| {
            let (a, b) = (y.re, y.im);
            let m2 = a * a + b * b;
            let m = m2.sqrt();
            let mh2 = m2.max(eps);
            let p = m.powf(c);
            let q = s.norm().powf(c);
            // unit phasor and its quarter turn
            let u = if m > T::zero() { y / m } else { Complex::default() };
            let v = Complex::new(-u.im, u.re);
            let dp_da = c * p * a / mh2;
            let dp_db = c * p * b / mh2;
            let dyc_da = u * dp_da + v * (-p * b / mh2);
            let dyc_db = u * dp_db + v * (p * a / mh2);
            let d = compress(y, c) - compress(s, c);
            let re_part = |w: Complex<T>| d.re * w.re + d.im * w.im;
            Complex::new(
                two * (p - q) * dp_da + two * re_part(dyc_da),
                two * (p - q) * dp_db + two * re_part(dyc_db),
            )
        })
        .collect())
}

/// Local SNR per frame in dB: energy ratio of `s` to `z` over bins up to
/// `f_df`, pooled over frames within `window_ms / 2` on either side of each
/// frame, clamped to `[-35, 35]` dB.
pub fn lsnr<T: Real>(s: &Spectrogram<T>, z: &Spectrogram<T>, window_ms: f64, f_df: f64) -> Result<Vec<f64>> {
    s.ensure_same_shape(z)?;
    let cfg = s.config();
    let nb = nb_df_bins(f_df, cfg.fft_size(), cfg.sample_rate()).min(s.n_bins());
    let half = (window_ms / (2.0 * cfg.hop_ms())).round().max(0.0) as usize;
    let frame_energy = |spec: &Spectrogram<T>| -> Vec<f64> {
        (0..spec.n_frames())
            .map(|k| spec.frame(k)[..nb].iter().map(|&x| norm_sqr(x).as_f64()).sum())
            .collect()
    };
    let es = frame_energy(s);
    let ez = frame_energy(z);
    let n = es.len();
    Ok((0..n)
        .map(|k| {
            let r = k.saturating_sub(half)..(k + half + 1).min(n);
            let (ps, pz): (f64, f64) = (es[r.clone()].iter().sum(), ez[r].iter().sum());
            if pz == 0.0 {
                if ps == 0.0 {
                    LSNR_MIN_DB
                } else {
                    LSNR_MAX_DB
                }
            } else if ps == 0.0 {
                LSNR_MIN_DB
            } else {
                (10.0 * (ps / pz).log10()).clamp(LSNR_MIN_DB, LSNR_MAX_DB)
            }
        })
        .collect())
}

/// `sum_k (alpha_k 1[lsnr_k < lo])^2 + ((1 - alpha_k) 1[lsnr_k > hi])^2`.
pub fn alpha_loss<T: Real>(alpha: &[T], lsnr_db: &[f64], lo: f64, hi: f64) -> Result<f64> {
    expect_len("alpha loss inputs", alpha.len(), lsnr_db.len())?;
    Ok(alpha
        .iter()
        .zip(lsnr_db)
        .map(|(&a, &l)| {
            let a = a.as_f64();
            if l < lo {
                a * a
            } else if l > hi {
                (1.0 - a) * (1.0 - a)
            } else {
                0.0
            }
        })
        .sum())
}

/// `lambda_spec * spectral + lambda_alpha * alpha` loss.
pub fn combined_loss<T: Real>(
    y: &[Complex<T>],
    s: &[Complex<T>],
    alpha: &[T],
    lsnr_db: &[f64],
    config: &LossConfig,
) -> Result<f64> {
    config.validate()?;
    let spec = spectral_loss(y, s, config.c)?.as_f64();
    let a = alpha_loss(alpha, lsnr_db, config.lsnr_lo, config.lsnr_hi)?;
    Ok(config.lambda_spec * spec + config.lambda_alpha * a)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub trials: usize,
    /// Bins compared against finite differences (`|Y| > min_magnitude`).
    pub checked: usize,
    pub max_rel_error: f64,
    /// Whether every analytic gradient was finite, including at `Y = 0`.
    pub all_finite: bool,
}

/// Compares [`spectral_loss_grad`] against central finite differences on
/// random `frames x bins` spectra in `f64`. Each trial also zeroes a few bins
/// of `Y` to exercise the hardened path.
pub fn gradcheck(seed: u64, c: f64, trials: usize, frames: usize, bins: usize) -> Result<GradCheckReport> {
    const STEP: f64 = 1e-5;
    const MIN_MAGNITUDE: f64 = 1e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = frames * bins;
    let mut report = GradCheckReport {
        trials,
        checked: 0,
        max_rel_error: 0.0,
        all_finite: true,
    };
    for _ in 0..trials {
        let mut sample = || Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let mut y: Vec<Complex<f64>> = (0..n).map(|_| sample()).collect();
        let s: Vec<Complex<f64>> = (0..n).map(|_| sample()).collect();
        for _ in 0..n.min(3) {
            let i = rng.gen_range(0..n);
            y[i] = Complex::default();
        }
        let grad = spectral_loss_grad(&y, &s, c)?;
        report.all_finite &= grad.iter().all(|g| g.re.is_finite() && g.im.is_finite());
        for i in 0..n {
            if y[i].norm() <= MIN_MAGNITUDE {
                continue;
            }
            for (part, analytic) in [(0, grad[i].re), (1, grad[i].im)] {
                let probe = |h: f64| {
                    let mut yp = y[i];
                    if part == 0 {
                        yp.re += h;
                    } else {
                        yp.im += h;
                    }
                    spectral_loss(&[yp], &s[i..=i], c)
                };
                let numeric = (probe(STEP)? - probe(-STEP)?) / (2.0 * STEP);
                let denom = analytic.abs().max(numeric.abs()).max(1e-7);
                report.max_rel_error = report.max_rel_error.max((analytic - numeric).abs() / denom);
            }
            report.checked += 1;
        }
    }
    Ok(report)
}
