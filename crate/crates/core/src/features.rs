//! Network input features.
//!
//! * ERB features: band-mean log power in dB with an exponential running
//!   mean subtracted per band.
//! * DF features: low-frequency complex bins divided by an exponentially
//!   smoothed magnitude per bin (phase preserved).
//!
//! Running statistics start from the first frame's own values.

use num_complex::Complex;

use crate::erb::{apply_fb_into, ErbFilterBank};
use crate::error::{expect_len, Result};
use crate::scalar::{norm_sqr, Real};

pub const FEATURE_EPS: f64 = 1e-10;
pub const DEFAULT_NORM_DECAY_S: f64 = 1.0;

/// Smoothing coefficient for an exponential decay of `decay` seconds at the
/// given hop: `exp(-hop / (decay * sample_rate))`.
pub fn smoothing_coef(decay: f64, hop: usize, sample_rate: u32) -> f64 {
    debug_assert!(decay > 0.0);
    (-(hop as f64) / (decay * sample_rate as f64)).exp()
}

/// Per-stream normalization state.
#[derive(Debug, Clone)]
pub struct NormState<T: Real> {
    mean_state: Vec<T>,
    unit_state: Vec<T>,
    alpha: T,
    mean_ready: bool,
    unit_ready: bool,
    power_scratch: Vec<T>,
}

impl<T: Real> NormState<T> {
    pub fn new(n_bands: usize, n_df_bins: usize, alpha: f64) -> Self {
        Self {
            mean_state: vec![T::zero(); n_bands],
            unit_state: vec![T::zero(); n_df_bins],
            alpha: T::lit(alpha),
            mean_ready: false,
            unit_ready: false,
            power_scratch: Vec::new(),
        }
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn mean_state(&self) -> &[T] {
        &self.mean_state
    }

    pub fn unit_state(&self) -> &[T] {
        &self.unit_state
    }

    pub fn reset(&mut self) {
        self.mean_ready = false;
        self.unit_ready = false;
        self.mean_state.fill(T::zero());
        self.unit_state.fill(T::zero());
    }
}

/// Mean-normalized log-power ERB features for one frame.
pub fn erb_feat<T: Real>(
    spectrum: &[Complex<T>],
    fb: &ErbFilterBank,
    state: &mut NormState<T>,
) -> Result<Vec<T>> {
    let mut out = vec![T::zero(); fb.n_bands()];
    erb_feat_into(spectrum, fb, state, &mut out)?;
    Ok(out)
}

pub fn erb_feat_into<T: Real>(
    spectrum: &[Complex<T>],
    fb: &ErbFilterBank,
    state: &mut NormState<T>,
    out: &mut [T],
) -> Result<()> {
    expect_len("erb feature state", state.mean_state.len(), fb.n_bands())?;
    let mut power = std::mem::take(&mut state.power_scratch);
    power.clear();
    power.extend(spectrum.iter().map(|&z| norm_sqr(z)));
    let res = apply_fb_into(&power, fb, true, out);
    state.power_scratch = power;
    res?;

    let eps = T::lit(FEATURE_EPS);
    let ten = T::lit(10.0);
    let a = state.alpha;
    for (v, m) in out.iter_mut().zip(state.mean_state.iter_mut()) {
        let db = ten * (*v + eps).log10();
        *m = if state.mean_ready {
            a * *m + (T::one() - a) * db
        } else {
            db
        };
        *v = db - *m;
    }
    state.mean_ready = true;
    Ok(())
}

/// Unit-normalized complex DF features for one frame.
pub fn df_feat<T: Real>(spectrum: &[Complex<T>], state: &mut NormState<T>) -> Result<Vec<Complex<T>>> {
    let mut out = vec![Complex::default(); spectrum.len()];
    df_feat_into(spectrum, state, &mut out)?;
    Ok(out)
}

pub fn df_feat_into<T: Real>(
    spectrum: &[Complex<T>],
    state: &mut NormState<T>,
    out: &mut [Complex<T>],
) -> Result<()> {
    expect_len("df feature input", spectrum.len(), state.unit_state.len())?;
    expect_len("df feature output", out.len(), spectrum.len())?;
    let eps = T::lit(FEATURE_EPS);
    let a = state.alpha;
    for ((&x, u), dst) in spectrum
        .iter()
        .zip(state.unit_state.iter_mut())
        .zip(out.iter_mut())
    {
        let mag = x.norm();
        *u = if state.unit_ready {
            a * *u + (T::one() - a) * mag
        } else {
            mag
        };
        *dst = x / (*u * *u + eps).sqrt();
    }
    state.unit_ready = true;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::erb::build_erb_fb;

    #[test]
    fn smoothing_coef_examples() {
        assert!((smoothing_coef(1.0, 480, 48_000) - (-0.01f64).exp()).abs() < 1e-15);
        assert!((smoothing_coef(1.0, 480, 48_000) - 0.99005).abs() < 1e-5);
        assert!((smoothing_coef(480.0 / 48_000.0, 480, 48_000) - (-1f64).exp()).abs() < 1e-15);
        assert!(smoothing_coef(1e12, 480, 48_000) > 1.0 - 1e-9);
    }

    #[test]
    fn first_frame_is_zero_and_constant_input_stays_zero() {
        let fb = build_erb_fb(48_000, 960, 32, 2).unwrap();
        let mut st = NormState::<f64>::new(32, 101, 0.99);
        let frame: Vec<_> = (0..481).map(|i| Complex::new(i as f64 * 0.01, 0.3)).collect();
        for _ in 0..50 {
            let f = erb_feat(&frame, &fb, &mut st).unwrap();
            assert!(f.iter().all(|v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn step_response_follows_recurrence() {
        let fb = build_erb_fb(48_000, 960, 32, 2).unwrap();
        let alpha = 0.9;
        let mut st = NormState::<f64>::new(32, 101, alpha);
        let quiet = vec![Complex::new(0.1, 0.0); 481];
        // +10 dB in power
        let loud = vec![Complex::new(0.1 * 10f64.sqrt(), 0.0); 481];
        erb_feat(&quiet, &fb, &mut st).unwrap();
        // independent simulation of m <- a m + (1 - a) v, output v - m
        let mut m = 10.0 * (0.01f64 + 1e-10).log10();
        let v = 10.0 * (0.1f64 + 1e-10).log10();
        for _ in 0..20 {
            m = alpha * m + (1.0 - alpha) * v;
            let f = erb_feat(&loud, &fb, &mut st).unwrap();
            for x in f {
                assert!((x - (v - m)).abs() < 1e-9);
            }
        }
        let first_jump = alpha * 10.0;
        assert!(first_jump > 8.99 && first_jump < 9.01);
    }

    #[test]
    fn df_feat_preserves_phase_and_converges_to_unit() {
        let mut st = NormState::<f64>::new(1, 4, 0.95);
        let frame = [
            Complex::new(3.0, 4.0),
            Complex::new(-1.0, 0.5),
            Complex::new(0.0, -2.0),
            Complex::new(0.0, 0.0),
        ];
        let mut out = Vec::new();
        for _ in 0..200 {
            out = df_feat(&frame, &mut st).unwrap();
        }
        for (x, y) in frame.iter().zip(&out) {
            if x.norm() > 0.0 {
                assert!((x.arg() - y.arg()).abs() < 1e-12);
                assert!((y.norm() - 1.0).abs() < 1e-6);
            } else {
                assert_eq!(y.norm(), 0.0);
            }
        }
    }

    #[test]
    fn silence_is_finite() {
        let fb = build_erb_fb(48_000, 960, 32, 2).unwrap();
        let mut st = NormState::<f32>::new(32, 101, 0.99);
        let zeros = vec![Complex::new(0.0f32, 0.0); 481];
        for _ in 0..10 {
            assert!(erb_feat(&zeros, &fb, &mut st).unwrap().iter().all(|v| v.is_finite()));
            let d = df_feat(&zeros[..101], &mut st).unwrap();
            assert!(d.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
        }
    }
}
