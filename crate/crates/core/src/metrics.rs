//! Scale-invariant SDR and pairwise file evaluation.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::audio::read_wav;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Upper bound reported for (numerically) perfect estimates.
pub const SI_SDR_CAP_DB: f64 = 100.0;
/// Value reported for an all-zero estimate.
pub const SI_SDR_FLOOR_DB: f64 = -100.0;

/// `10 log10(|a s|^2 / |a s - x|^2)` with `a = <x, s> / |s|^2`, capped at
/// +100 dB. A silent estimate scores -100 dB; a silent reference is an error.
pub fn si_sdr<T: Real>(estimate: &[T], reference: &[T]) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::contract(format!(
            "SI-SDR inputs differ in length ({} vs {})",
            estimate.len(),
            reference.len()
        )));
    }
    let (mut ss, mut xs, mut xx) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &s) in estimate.iter().zip(reference) {
        let (x, s) = (x.as_f64(), s.as_f64());
        ss += s * s;
        xs += x * s;
        xx += x * x;
    }
    if ss == 0.0 {
        return Err(Error::SilentReference);
    }
    if xx == 0.0 {
        return Ok(SI_SDR_FLOOR_DB);
    }
    let a = xs / ss;
    let target = a * a * ss;
    let mut err = 0.0f64;
    for (&x, &s) in estimate.iter().zip(reference) {
        let d = a * s.as_f64() - x.as_f64();
        err += d * d;
    }
    if err <= 0.0 {
        return Ok(SI_SDR_CAP_DB);
    }
    Ok((10.0 * (target / err).log10()).clamp(SI_SDR_FLOOR_DB, SI_SDR_CAP_DB))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairScore {
    pub pair_id: String,
    pub si_sdr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    pub rows: Vec<PairScore>,
    /// Pairs that could not be scored, with the reason.
    pub skipped: Vec<(String, String)>,
    /// `None` when no pair was scored.
    pub mean_si_sdr_db: Option<f64>,
}

impl EvalResult {
    /// `pair_id,si_sdr_db,wb_pesq`; the PESQ column is left empty for an
    /// external tool to fill.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("pair_id,si_sdr_db,wb_pesq\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{:.6},", r.pair_id, r.si_sdr_db);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalPair {
    pub id: String,
    pub estimate: PathBuf,
    pub reference: PathBuf,
}

fn pair_id(estimate: &Path) -> String {
    estimate
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| estimate.display().to_string())
}

/// Parses a pair list: one `estimate reference` path pair per line; blank
/// lines and lines starting with `#` are ignored. Relative paths resolve
/// against the list's directory.
pub fn pairs_from_list(list: &Path) -> Result<Vec<EvalPair>> {
    let text = std::fs::read_to_string(list).map_err(|e| Error::io(list, e))?;
    let base = list.parent().unwrap_or(Path::new("."));
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let [est, reference] = parts[..] else {
            return Err(Error::config(format!(
                "{}:{}: expected 'estimate reference', got '{line}'",
                list.display(),
                n + 1
            )));
        };
        let estimate = base.join(est);
        pairs.push(EvalPair {
            id: pair_id(&estimate),
            estimate,
            reference: base.join(reference),
        });
    }
    Ok(pairs)
}

/// Pairs every `*.wav` in `dir/estimate_sub` with the same file name in
/// `dir/reference_sub`, sorted by name.
pub fn pairs_from_dir(dir: &Path, estimate_sub: &str, reference_sub: &str) -> Result<Vec<EvalPair>> {
    let est_dir = dir.join(estimate_sub);
    let entries = std::fs::read_dir(&est_dir).map_err(|e| Error::io(&est_dir, e))?;
    let mut names = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&est_dir, e))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
            names.push(path.file_name().expect("listed file has a name").to_os_string());
        }
    }
    names.sort();
    Ok(names
        .into_iter()
        .map(|name| {
            let estimate = est_dir.join(&name);
            EvalPair {
                id: pair_id(&estimate),
                reference: dir.join(reference_sub).join(&name),
                estimate,
            }
        })
        .collect())
}

fn score_pair(pair: &EvalPair) -> Result<f64> {
    let est = read_wav(&pair.estimate)?;
    let reference = read_wav(&pair.reference)?;
    if est.sample_rate != reference.sample_rate {
        return Err(Error::config(format!(
            "sample rates differ ({} vs {})",
            est.sample_rate, reference.sample_rate
        )));
    }
    if est.samples.len() != reference.samples.len() {
        return Err(Error::contract(format!(
            "length mismatch ({} vs {} samples)",
            est.samples.len(),
            reference.samples.len()
        )));
    }
    si_sdr(&est.samples, &reference.samples)
}

/// Scores all pairs in parallel. Failing pairs are skipped and reported;
/// row order follows the input order.
pub fn evaluate_pairs(pairs: &[EvalPair]) -> EvalResult {
    let scored: Vec<(String, Result<f64>)> = pairs.par_iter().map(|p| (p.id.clone(), score_pair(p))).collect();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (id, r) in scored {
        match r {
            Ok(v) => rows.push(PairScore { pair_id: id, si_sdr_db: v }),
            Err(e) => skipped.push((id, e.to_string())),
        }
    }
    let mean_si_sdr_db = (!rows.is_empty()).then(|| rows.iter().map(|r| r.si_sdr_db).sum::<f64>() / rows.len() as f64);
    EvalResult {
        rows,
        skipped,
        mean_si_sdr_db,
    }
}
