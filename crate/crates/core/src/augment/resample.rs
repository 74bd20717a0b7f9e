//! Windowed-sinc resampling with a precomputed polyphase table.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::scalar::Real;

const ZERO_CROSSINGS: usize = 16;
const PHASES: usize = 512;

/// Blackman-windowed sinc sampled at `PHASES` points per zero crossing.
fn kernel_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = ZERO_CROSSINGS * PHASES;
        (0..=n + 1)
            .map(|i| {
                let t = i as f64 / PHASES as f64;
                if t > ZERO_CROSSINGS as f64 {
                    return 0.0;
                }
                let sinc = if i == 0 { 1.0 } else { (PI * t).sin() / (PI * t) };
                let u = 0.5 + 0.5 * t / ZERO_CROSSINGS as f64;
                let w = 0.42 - 0.5 * (2.0 * PI * u).cos() + 0.08 * (4.0 * PI * u).cos();
                sinc * w
            })
            .collect()
    })
}

fn kernel(t: f64) -> f64 {
    let table = kernel_table();
    let pos = t.abs() * PHASES as f64;
    let i = pos as usize;
    if i + 1 >= table.len() {
        return 0.0;
    }
    let frac = pos - i as f64;
    table[i] * (1.0 - frac) + table[i + 1] * frac
}

/// Resamples by `ratio = output rate / input rate`. The output has
/// `round(len * ratio)` samples; downsampling lowers the cutoff to the new
/// Nyquist frequency.
pub fn resample<T: Real>(x: &[T], ratio: f64) -> Vec<T> {
    assert!(ratio > 0.0 && ratio.is_finite(), "resampling ratio must be positive");
    if ratio == 1.0 {
        return x.to_vec();
    }
    let out_len = (x.len() as f64 * ratio).round() as usize;
    let scale = ratio.min(1.0);
    let half = ZERO_CROSSINGS as f64 / scale;
    (0..out_len)
        .map(|n| {
            let center = n as f64 / ratio;
            let lo = (center - half).ceil().max(0.0) as usize;
            let hi = ((center + half).floor() as usize).min(x.len().saturating_sub(1));
            let mut acc = 0.0;
            for (j, v) in x.iter().enumerate().take(hi + 1).skip(lo) {
                acc += v.as_f64() * kernel((j as f64 - center) * scale);
            }
            T::lit(acc * scale)
        })
        .collect()
}
