//! Rectangular ERB-scaled filterbank.
//!
//! Bands partition the FFT bins `[0, fft/2 + 1)` into contiguous runs whose
//! edges are equidistant on the ERB-rate scale
//! `erb(f) = 9.265 * ln(1 + f / (24.7 * 9.265))`. The DC bin belongs to band 0.
//!
//! Features are computed in the power domain ([`apply_fb`] on `|X|^2`);
//! predicted gains are amplitude gains widened with [`apply_inverse_fb`].

use std::fmt::Write as _;

use crate::error::{expect_len, Error, Result};
use crate::scalar::Real;

const ERB_Q: f64 = 9.265;
const ERB_L: f64 = 24.7;

pub const DEFAULT_MIN_BINS_PER_BAND: usize = 2;

pub fn hz_to_erb_rate(f: f64) -> f64 {
    ERB_Q * (1.0 + f / (ERB_L * ERB_Q)).ln()
}

pub fn erb_rate_to_hz(e: f64) -> f64 {
    ERB_L * ERB_Q * ((e / ERB_Q).exp() - 1.0)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErbFilterBank {
    edges: Vec<usize>,
    sample_rate: u32,
    fft_size: usize,
}

/// Builds the band partition.
///
/// Ideal edges are placed uniformly in ERB rate and rounded to bin indices.
/// A forward pass widens bands narrower than `min_bins_per_band`, a backward
/// pass keeps at least one bin for every band above, and all bins left over
/// at the top end up in the last band.
pub fn build_erb_fb(
    sample_rate: u32,
    fft_size: usize,
    n_erb: usize,
    min_bins_per_band: usize,
) -> Result<ErbFilterBank> {
    let n_bins = fft_size / 2 + 1;
    if n_erb == 0 || n_erb > n_bins {
        return Err(Error::config(format!(
            "cannot split {n_bins} bins into {n_erb} ERB bands"
        )));
    }
    if sample_rate == 0 {
        return Err(Error::config("sample rate must be positive"));
    }
    let min_width = min_bins_per_band.max(1);
    let bin_hz = sample_rate as f64 / fft_size as f64;
    let top = hz_to_erb_rate(sample_rate as f64 / 2.0);
    let step = top / n_erb as f64;

    let mut edges = vec![0usize; n_erb + 1];
    edges[n_erb] = n_bins;
    for b in 1..n_erb {
        let ideal = (erb_rate_to_hz(b as f64 * step) / bin_hz).round() as usize;
        edges[b] = ideal.max(edges[b - 1] + min_width);
    }
    for b in (1..n_erb).rev() {
        edges[b] = edges[b].min(edges[b + 1] - 1);
    }
    debug_assert!(edges.windows(2).all(|w| w[0] < w[1]));
    Ok(ErbFilterBank {
        edges,
        sample_rate,
        fft_size,
    })
}

impl ErbFilterBank {
    pub fn n_bands(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn n_bins(&self) -> usize {
        *self.edges.last().expect("at least one band")
    }

    /// `n_bands + 1` bin indices; band `b` covers `edges[b]..edges[b + 1]`.
    pub fn band_edges(&self) -> &[usize] {
        &self.edges
    }

    pub fn band_widths(&self) -> Vec<usize> {
        self.edges.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn band(&self, b: usize) -> std::ops::Range<usize> {
        self.edges[b]..self.edges[b + 1]
    }

    /// Band index of a bin.
    pub fn band_of(&self, bin: usize) -> Option<usize> {
        if bin >= self.n_bins() {
            return None;
        }
        Some(self.edges.partition_point(|&e| e <= bin) - 1)
    }

    /// CSV table of the band layout: `band,start_bin,end_bin,width,low_hz,high_hz`.
    pub fn to_csv(&self) -> String {
        let bin_hz = self.sample_rate as f64 / self.fft_size as f64;
        let mut out = String::from("band,start_bin,end_bin,width,low_hz,high_hz\n");
        for b in 0..self.n_bands() {
            let r = self.band(b);
            let _ = writeln!(
                out,
                "{b},{},{},{},{:.1},{:.1}",
                r.start,
                r.end - 1,
                r.len(),
                r.start as f64 * bin_hz,
                (r.end - 1) as f64 * bin_hz
            );
        }
        out
    }
}

/// Compresses a per-bin power spectrum into band values: the mean of member
/// bins when `normalize`, otherwise their sum.
pub fn apply_fb<T: Real>(power: &[T], fb: &ErbFilterBank, normalize: bool) -> Result<Vec<T>> {
    let mut out = vec![T::zero(); fb.n_bands()];
    apply_fb_into(power, fb, normalize, &mut out)?;
    Ok(out)
}

pub fn apply_fb_into<T: Real>(
    power: &[T],
    fb: &ErbFilterBank,
    normalize: bool,
    out: &mut [T],
) -> Result<()> {
    expect_len("filterbank input", power.len(), fb.n_bins())?;
    expect_len("filterbank output", out.len(), fb.n_bands())?;
    for (b, dst) in out.iter_mut().enumerate() {
        let r = fb.band(b);
        let width = r.len();
        let values = &power[r];
        *dst = if normalize {
            // offsets from the first member keep constant bands exact
            let first = values[0];
            first + values.iter().map(|&v| v - first).sum::<T>() / T::from_count(width)
        } else {
            values.iter().copied().sum()
        };
    }
    Ok(())
}

/// Widens band gains to bins (piecewise constant).
pub fn apply_inverse_fb<T: Real>(band_gains: &[T], fb: &ErbFilterBank) -> Result<Vec<T>> {
    let mut out = vec![T::zero(); fb.n_bins()];
    apply_inverse_fb_into(band_gains, fb, &mut out)?;
    Ok(out)
}

pub fn apply_inverse_fb_into<T: Real>(
    band_gains: &[T],
    fb: &ErbFilterBank,
    out: &mut [T],
) -> Result<()> {
    expect_len("band gains", band_gains.len(), fb.n_bands())?;
    expect_len("bin gains", out.len(), fb.n_bins())?;
    for (b, &g) in band_gains.iter().enumerate() {
        out[fb.band(b)].fill(g);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout_partitions_all_bins() {
        let fb = build_erb_fb(48_000, 960, 32, 2).unwrap();
        assert_eq!(fb.n_bands(), 32);
        assert_eq!(fb.band_widths().iter().sum::<usize>(), 481);
        assert_eq!(fb.band_edges()[0], 0);
        assert!(fb.band_widths().iter().all(|&w| w >= 2));
        let widths = fb.band_widths();
        assert!(widths[0] < widths[31] && widths[1] < widths[31]);
        for bin in 0..481 {
            let b = fb.band_of(bin).unwrap();
            assert!(fb.band(b).contains(&bin));
        }
        assert_eq!(fb.band_of(481), None);
    }

    #[test]
    fn unconstrained_edges_sit_on_the_erb_grid() {
        let fb = build_erb_fb(48_000, 960, 32, 2).unwrap();
        let step = hz_to_erb_rate(24_000.0) / 32.0;
        let e = fb.band_edges();
        // bands well above the min-width regime keep their rounded ideal edge
        for b in 14..32 {
            let ideal = (erb_rate_to_hz(b as f64 * step) / 50.0).round() as usize;
            assert_eq!(e[b], ideal, "edge {b}");
        }
    }

    #[test]
    fn finest_partition_is_one_bin_per_band() {
        let fb = build_erb_fb(48_000, 240, 121, 1).unwrap();
        assert!(fb.band_widths().iter().all(|&w| w == 1));
    }

    #[test]
    fn too_many_bands_is_an_error() {
        assert!(matches!(build_erb_fb(48_000, 240, 122, 1), Err(Error::Config(_))));
    }

    #[test]
    fn apply_fb_examples() {
        let fb = build_erb_fb(48_000, 960, 32, 2).unwrap();
        let flat = vec![1.0f64; 481];
        assert!(apply_fb(&flat, &fb, true).unwrap().iter().all(|&v| v == 1.0));
        let mut one_hot = vec![0.0f64; 481];
        one_hot[100] = 3.0;
        let bands = apply_fb(&one_hot, &fb, false).unwrap();
        let b = fb.band_of(100).unwrap();
        for (i, v) in bands.iter().enumerate() {
            assert_eq!(*v != 0.0, i == b);
        }
        assert!(apply_fb(&flat[..10], &fb, true).is_err());
    }

    #[test]
    fn inverse_examples() {
        let fb = build_erb_fb(48_000, 960, 32, 2).unwrap();
        let ones = apply_inverse_fb(&[1.0f32; 32], &fb).unwrap();
        assert!(ones.iter().all(|&g| g == 1.0));
        let mut hot = [0.0f32; 32];
        hot[7] = 0.5;
        let bins = apply_inverse_fb(&hot, &fb).unwrap();
        for (i, g) in bins.iter().enumerate() {
            assert_eq!(*g != 0.0, fb.band(7).contains(&i));
        }
        assert!(apply_inverse_fb(&[1.0f32; 31], &fb).is_err());
    }

    #[test]
    fn csv_has_one_row_per_band() {
        let fb = build_erb_fb(16_000, 320, 24, 2).unwrap();
        let csv = fb.to_csv();
        assert_eq!(csv.lines().count(), 25);
        assert!(csv.starts_with("band,start_bin"));
    }
}
