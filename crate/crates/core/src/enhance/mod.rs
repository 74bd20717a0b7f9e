//! Stage-1 gain application, stage-2 deep filtering and the alpha blend.
//!
//! The deep filter at frame `k` is a per-bin complex FIR across frames:
//!
//! ```text
//! Y(k, f) = sum_{i=0}^{N-1} C(k, i, f) * X(k - i + l, f)
//! ```
//!
//! with order `N` taps and lookahead `l < N`. With `N = 1, l = 0` it reduces
//! to a complex ratio mask. The filter is applied to the gain-enhanced
//! spectrum `Y^G`, and only to the lowest `nb_df` bins.

mod stream;

pub use stream::{enhance_signal, EnhanceConfig, Enhancer};

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{expect_len, Error, Result};
use crate::scalar::Real;

/// Number of deep-filter bins below `f_df`: `floor(f_df * fft / sr) + 1`,
/// capped at the bin count.
pub fn nb_df_bins(f_df: f64, fft_size: usize, sample_rate: u32) -> usize {
    let n = (f_df * fft_size as f64 / sample_rate as f64).floor() as usize + 1;
    n.min(fft_size / 2 + 1)
}

/// Deep-filter coefficients, frames x order x nb_df.
#[derive(Debug, Clone, PartialEq)]
pub struct DfCoefficients<T: Real> {
    coefs: Vec<Complex<T>>,
    n_frames: usize,
    order: usize,
    lookahead: usize,
    nb_df: usize,
}

impl<T: Real> DfCoefficients<T> {
    pub fn zeros(n_frames: usize, order: usize, lookahead: usize, nb_df: usize) -> Result<Self> {
        validate_order(order, lookahead)?;
        Ok(Self {
            coefs: vec![Complex::default(); n_frames * order * nb_df],
            n_frames,
            order,
            lookahead,
            nb_df,
        })
    }

    /// Identity filter: a unit tap at `i = l` (the current frame) for every bin.
    pub fn identity(n_frames: usize, order: usize, lookahead: usize, nb_df: usize) -> Result<Self> {
        let mut c = Self::zeros(n_frames, order, lookahead, nb_df)?;
        for k in 0..n_frames {
            c.frame_mut(k)[lookahead * nb_df..(lookahead + 1) * nb_df]
                .fill(Complex::new(T::one(), T::zero()));
        }
        Ok(c)
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn lookahead(&self) -> usize {
        self.lookahead
    }

    pub fn nb_df(&self) -> usize {
        self.nb_df
    }

    /// Coefficients of frame `k`, laid out tap-major (`order x nb_df`).
    pub fn frame(&self, k: usize) -> &[Complex<T>] {
        let n = self.order * self.nb_df;
        &self.coefs[k * n..(k + 1) * n]
    }

    pub fn frame_mut(&mut self, k: usize) -> &mut [Complex<T>] {
        let n = self.order * self.nb_df;
        &mut self.coefs[k * n..(k + 1) * n]
    }

    #[inline]
    pub fn get(&self, k: usize, tap: usize, f: usize) -> Complex<T> {
        self.coefs[(k * self.order + tap) * self.nb_df + f]
    }

    #[inline]
    pub fn set(&mut self, k: usize, tap: usize, f: usize, value: Complex<T>) {
        self.coefs[(k * self.order + tap) * self.nb_df + f] = value;
    }
}

fn validate_order(order: usize, lookahead: usize) -> Result<()> {
    if order == 0 || lookahead >= order {
        return Err(Error::config(format!(
            "deep filter needs order >= 1 and lookahead < order (got order {order}, lookahead {lookahead})"
        )));
    }
    Ok(())
}

/// Per-frame blend weights, each within `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaTrack<T: Real>(Vec<T>);

impl<T: Real> AlphaTrack<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|a| !(**a >= T::zero() && **a <= T::one())) {
            return Err(Error::contract(format!("alpha {bad} outside [0, 1]")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }
}

/// Stage-1: pointwise real gains. Returns `Y^G`.
pub fn apply_gains<T: Real>(spectrum: &[Complex<T>], bin_gains: &[T]) -> Result<Vec<Complex<T>>> {
    expect_len("bin gains", bin_gains.len(), spectrum.len())?;
    Ok(spectrum
        .iter()
        .zip(bin_gains)
        .map(|(&x, &g)| x * g)
        .collect())
}

pub fn apply_gains_in_place<T: Real>(spectrum: &mut [Complex<T>], bin_gains: &[T]) -> Result<()> {
    expect_len("bin gains", bin_gains.len(), spectrum.len())?;
    for (x, &g) in spectrum.iter_mut().zip(bin_gains) {
        *x = *x * g;
    }
    Ok(())
}

/// Stage-2 deep filter for one output frame.
///
/// `frames` holds the `order` spectrum frames `k - N + 1 + l ..= k + l`,
/// oldest first; each must have at least `nb_df` bins. `coefs` is one frame
/// of [`DfCoefficients`] (`order x nb_df`, tap-major). Tap `i` multiplies
/// frame `k - i + l`, i.e. `frames[N - 1 - i]`.
pub fn apply_df<T: Real, F: AsRef<[Complex<T>]>>(
    frames: &[F],
    coefs: &[Complex<T>],
    order: usize,
    lookahead: usize,
) -> Result<Vec<Complex<T>>> {
    validate_order(order, lookahead)?;
    if frames.len() < order {
        return Err(Error::contract(format!(
            "deep filter of order {order} needs {order} buffered frames, got {}",
            frames.len()
        )));
    }
    if coefs.len() % order != 0 {
        return Err(Error::contract(format!(
            "coefficient frame of length {} is not a multiple of order {order}",
            coefs.len()
        )));
    }
    let nb_df = coefs.len() / order;
    let frames = &frames[frames.len() - order..];
    if let Some(short) = frames.iter().find(|f| f.as_ref().len() < nb_df) {
        return Err(Error::contract(format!(
            "buffered frame has {} bins, deep filter needs {nb_df}",
            short.as_ref().len()
        )));
    }
    let mut out = vec![Complex::default(); nb_df];
    for tap in 0..order {
        let x = frames[order - 1 - tap].as_ref();
        let c = &coefs[tap * nb_df..(tap + 1) * nb_df];
        for ((o, &ci), &xi) in out.iter_mut().zip(c).zip(x) {
            *o += ci * xi;
        }
    }
    Ok(out)
}

/// Convex per-frame blend `alpha * y_df + (1 - alpha) * y_g`.
pub fn blend<T: Real>(y_df: &[Complex<T>], y_g: &[Complex<T>], alpha: T) -> Result<Vec<Complex<T>>> {
    expect_len("blend inputs", y_df.len(), y_g.len())?;
    let beta = T::one() - alpha;
    Ok(y_df
        .iter()
        .zip(y_g)
        .map(|(&d, &g)| d * alpha + g * beta)
        .collect())
}

/// Writes the blended low band into a full-resolution `Y^G` frame in place;
/// bins at and above `y_df.len()` keep their stage-1 values.
pub fn blend_into_frame<T: Real>(frame: &mut [Complex<T>], y_df: &[Complex<T>], alpha: T) -> Result<()> {
    if y_df.len() > frame.len() {
        return Err(Error::contract("deep filter output wider than frame"));
    }
    let beta = T::one() - alpha;
    for (g, &d) in frame.iter_mut().zip(y_df) {
        *g = d * alpha + *g * beta;
    }
    Ok(())
}

/// Attenuation limit for predicted gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum AttenLimit {
    #[default]
    Unlimited,
    /// Maximum attenuation in dB (>= 0).
    Db(f64),
}

impl AttenLimit {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("off") || s.eq_ignore_ascii_case("none") {
            return Ok(AttenLimit::Unlimited);
        }
        let db: f64 = s
            .parse()
            .map_err(|_| Error::config(format!("attenuation limit '{s}' is neither dB nor 'off'")))?;
        if !(db >= 0.0) {
            return Err(Error::config(format!("attenuation limit must be >= 0 dB, got {db}")));
        }
        Ok(AttenLimit::Db(db))
    }

    /// Lowest permitted gain.
    pub fn min_gain(self) -> f64 {
        match self {
            AttenLimit::Unlimited => 0.0,
            AttenLimit::Db(db) => 10f64.powf(-db / 20.0),
        }
    }
}

impl std::fmt::Display for AttenLimit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AttenLimit::Unlimited => write!(f, "off"),
            AttenLimit::Db(db) => write!(f, "{db}"),
        }
    }
}

/// Raises every gain to at least `10^(-max_atten_db / 20)`.
pub fn clamp_gains<T: Real>(bin_gains: &[T], limit: AttenLimit) -> Vec<T> {
    let mut g = bin_gains.to_vec();
    clamp_gains_in_place(&mut g, limit);
    g
}

pub fn clamp_gains_in_place<T: Real>(bin_gains: &mut [T], limit: AttenLimit) {
    if let AttenLimit::Db(_) = limit {
        let floor = T::lit(limit.min_gain());
        for g in bin_gains {
            *g = g.max(floor);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn nb_df_default() {
        assert_eq!(nb_df_bins(5000.0, 960, 48_000), 101);
        assert_eq!(nb_df_bins(5000.0, 240, 48_000), 26);
    }

    #[test]
    fn gains_examples() {
        let x = vec![c(1.0, 2.0), c(-3.0, 0.5)];
        assert_eq!(apply_gains(&x, &[1.0, 1.0]).unwrap(), x);
        assert!(apply_gains(&x, &[0.0, 0.0]).unwrap().iter().all(|z| z.norm() == 0.0));
        let y = apply_gains(&x, &[0.25, 0.5]).unwrap();
        assert!((y[0].norm() - 0.25 * x[0].norm()).abs() < 1e-15);
        assert!((y[1].arg() - x[1].arg()).abs() < 1e-15);
        assert!(apply_gains(&x, &[1.0]).is_err());
    }

    #[test]
    fn df_examples() {
        let frame = vec![c(0.3, -0.7), c(2.0, 1.0)];
        let out = apply_df(&[frame.clone()], &[c(1.0, 0.0), c(1.0, 0.0)], 1, 0).unwrap();
        assert_eq!(out, frame);

        let prev = vec![c(1.0, 0.0)];
        let cur = vec![c(2.0, 0.0)];
        let out = apply_df(&[prev, cur], &[c(0.5, 0.0), c(0.5, 0.0)], 2, 0).unwrap();
        assert!((out[0] - c(1.5, 0.0)).norm() < 1e-15);

        // tap i = l reads the current frame, tap 0 the newest (lookahead) frame
        let frames = [vec![c(1.0, 0.0)], vec![c(10.0, 0.0)], vec![c(100.0, 0.0)]];
        let out = apply_df(&frames, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)], 3, 1).unwrap();
        assert_eq!(out[0], c(100.0, 0.0));
        let out = apply_df(&frames, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)], 3, 1).unwrap();
        assert_eq!(out[0], c(10.0, 0.0));
    }

    #[test]
    fn df_contract_errors() {
        let f = vec![c(1.0, 0.0); 4];
        assert!(matches!(
            apply_df(&[f.clone()], &[c(1.0, 0.0); 8], 2, 0),
            Err(Error::Contract(_))
        ));
        assert!(apply_df(&[f.clone(), f.clone()], &[c(1.0, 0.0); 8], 2, 2).is_err());
        assert!(apply_df(&[vec![c(1.0, 0.0)], f], &[c(1.0, 0.0); 8], 2, 0).is_err());
    }

    #[test]
    fn blend_examples() {
        let d = vec![c(2.0, 0.0)];
        let g = vec![c(0.0, 0.0)];
        assert_eq!(blend(&d, &g, 0.0).unwrap(), g);
        assert_eq!(blend(&d, &g, 1.0).unwrap(), d);
        assert_eq!(blend(&d, &g, 0.5).unwrap(), vec![c(1.0, 0.0)]);

        let mut frame = vec![c(1.0, 1.0); 4];
        blend_into_frame(&mut frame, &[c(3.0, 1.0); 2], 1.0).unwrap();
        assert_eq!(frame, vec![c(3.0, 1.0), c(3.0, 1.0), c(1.0, 1.0), c(1.0, 1.0)]);
    }

    #[test]
    fn clamp_examples() {
        let g = vec![0.0f64, 0.1, 0.7, 1.0];
        assert!(clamp_gains(&g, AttenLimit::Db(0.0)).iter().all(|&x| x == 1.0));
        let c6 = clamp_gains(&g, AttenLimit::Db(6.0));
        assert!((c6[1] - 0.501187).abs() < 1e-6);
        assert_eq!(c6[2], 0.7);
        assert_eq!(clamp_gains(&g, AttenLimit::Unlimited), g);
        assert_eq!(AttenLimit::parse("off").unwrap(), AttenLimit::Unlimited);
        assert_eq!(AttenLimit::parse("12").unwrap(), AttenLimit::Db(12.0));
        assert!(AttenLimit::parse("-3").is_err());
    }

    #[test]
    fn coefficient_layout_and_validation() {
        let id = DfCoefficients::<f64>::identity(3, 5, 1, 4).unwrap();
        assert_eq!(id.get(2, 1, 3), c(1.0, 0.0));
        assert_eq!(id.get(2, 0, 3), c(0.0, 0.0));
        assert!(DfCoefficients::<f64>::zeros(1, 2, 2, 4).is_err());
        assert!(AlphaTrack::new(vec![0.0, 0.5, 1.0]).is_ok());
        assert!(AlphaTrack::new(vec![1.5]).is_err());
        assert!(AlphaTrack::new(vec![f64::NAN]).is_err());
    }
}
