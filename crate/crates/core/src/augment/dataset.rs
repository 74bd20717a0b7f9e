//! Offline dataset synthesis from a JSON-lines manifest.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::filters::{apply_eq, random_eq, Biquad, PeakingBand};
use super::{attenuation_target, convolve_rir, fit_length, lowpass_match, mix, normalize_rir, resample};
use crate::audio::{read_wav, temp_sibling, write_wav_atomic, Audio};
use crate::error::{Error, Result};

pub const MAX_NOISES: usize = 5;
pub const DEFAULT_SNRS_DB: [f64; 6] = [-5.0, 0.0, 5.0, 10.0, 20.0, 40.0];
pub const DEFAULT_GAINS_DB: [f64; 3] = [-6.0, 0.0, 6.0];

/// One manifest line. Relative paths resolve against the manifest's
/// directory; `seed` overrides the run seed for this row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRow {
    pub speech: PathBuf,
    #[serde(default)]
    pub noises: Vec<PathBuf>,
    #[serde(default)]
    pub rir: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub sample_rate: u32,
    pub seed: u64,
    pub snrs_db: Vec<f64>,
    pub gains_db: Vec<f64>,
    /// Range for the attenuation-limited target's extra SNR; `None` skips
    /// writing targets.
    pub extra_snr_db: Option<(f64, f64)>,
    pub biquad: bool,
    pub eq: bool,
    pub resample_range: Option<(f64, f64)>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sample_rate: 48_000,
            seed: 0,
            snrs_db: DEFAULT_SNRS_DB.to_vec(),
            gains_db: DEFAULT_GAINS_DB.to_vec(),
            extra_snr_db: Some((6.0, 20.0)),
            biquad: true,
            eq: true,
            resample_range: Some((0.9, 1.1)),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.snrs_db.is_empty() || self.gains_db.is_empty() {
            return Err(Error::config("SNR and gain sets must be non-empty"));
        }
        if let Some((lo, hi)) = self.extra_snr_db {
            if !(0.0 <= lo && lo <= hi && hi.is_finite()) {
                return Err(Error::config(format!("bad extra SNR range {lo}..{hi}")));
            }
        }
        if let Some((lo, hi)) = self.resample_range {
            if !(0.0 < lo && lo <= hi && hi.is_finite()) {
                return Err(Error::config(format!("bad resampling range {lo}..{hi}")));
            }
        }
        Ok(())
    }
}

/// Every parameter needed to regenerate one example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    pub seed: u64,
    /// Manifest row, also the RNG stream.
    pub stream: u64,
    pub speech: PathBuf,
    pub noises: Vec<PathBuf>,
    pub noise_offsets: Vec<usize>,
    pub rir: Option<PathBuf>,
    pub snr_db: f64,
    pub gain_db: f64,
    pub speech_biquad: Option<Biquad>,
    pub noise_biquads: Vec<Biquad>,
    pub eq: Vec<PeakingBand>,
    pub resample_ratio: f64,
    /// Noise low-pass cutoff applied when the speech has a lower bandwidth.
    pub lowpass_hz: Option<f64>,
    pub extra_snr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexRecord {
    pub id: String,
    pub noisy: PathBuf,
    pub clean: PathBuf,
    pub target: Option<PathBuf>,
    pub spec: AugmentSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub row: usize,
    pub speech: Option<PathBuf>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSummary {
    pub records: Vec<IndexRecord>,
    pub failures: Vec<FailureRecord>,
    pub index_path: PathBuf,
    pub failures_path: PathBuf,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn to_model_rate(audio: Audio, model_rate: u32) -> Vec<f64> {
    let x: Vec<f64> = audio.samples.iter().map(|&v| f64::from(v)).collect();
    if audio.sample_rate == model_rate {
        x
    } else {
        resample(&x, model_rate as f64 / audio.sample_rate as f64)
    }
}

fn example_id(row: usize, speech: &Path) -> String {
    let stem = speech.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let stem: String = stem
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{row:06}_{stem}")
}

fn synthesize_row(
    row_idx: usize,
    row: &ManifestRow,
    cfg: &SynthConfig,
    base: &Path,
    out_dir: &Path,
) -> Result<IndexRecord> {
    if row.noises.is_empty() || row.noises.len() > MAX_NOISES {
        return Err(Error::config(format!(
            "row needs 1 to {MAX_NOISES} noises, has {}",
            row.noises.len()
        )));
    }
    let seed = row.seed.unwrap_or(cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row_idx as u64);

    // Fixed draw order so every parameter keeps its stream position.
    let snr_db = *cfg.snrs_db.choose(&mut rng).expect("validated non-empty");
    let gain_db = *cfg.gains_db.choose(&mut rng).expect("validated non-empty");
    let ratio = rng.gen_range(0.0..1.0);
    let extra = rng.gen_range(0.0..1.0);
    let (speech_biquad, _) = Biquad::random(&mut rng);
    let noise_biquads: Vec<Biquad> = row.noises.iter().map(|_| Biquad::random(&mut rng).0).collect();
    let offsets: Vec<u64> = row.noises.iter().map(|_| rng.gen()).collect();
    let eq = random_eq(&mut rng, cfg.sample_rate);

    let resample_ratio = cfg.resample_range.map_or(1.0, |(lo, hi)| lo + ratio * (hi - lo));
    let extra_snr_db = cfg.extra_snr_db.map(|(lo, hi)| lo + extra * (hi - lo));

    let speech_audio = read_wav(&resolve(base, &row.speech))?;
    let lowpass_hz = (speech_audio.sample_rate < cfg.sample_rate).then(|| speech_audio.sample_rate as f64 / 2.0);
    let mut speech = to_model_rate(speech_audio, cfg.sample_rate);
    if resample_ratio != 1.0 {
        speech = resample(&speech, resample_ratio);
    }
    if cfg.biquad {
        speech = speech_biquad.process(&speech);
    }
    if cfg.eq {
        speech = apply_eq(&speech, &eq, cfg.sample_rate);
    }
    let gain = 10f64.powf(gain_db / 20.0);
    speech.iter_mut().for_each(|v| *v *= gain);
    if let Some(rir_path) = &row.rir {
        let rir = to_model_rate(read_wav(&resolve(base, rir_path))?, cfg.sample_rate);
        speech = convolve_rir(&speech, &normalize_rir(&rir)?)?;
    }

    let mut noise_offsets = Vec::with_capacity(row.noises.len());
    let mut noises = Vec::with_capacity(row.noises.len());
    for ((path, bq), off) in row.noises.iter().zip(&noise_biquads).zip(&offsets) {
        let mut z = to_model_rate(read_wav(&resolve(base, path))?, cfg.sample_rate);
        if let Some(bw) = lowpass_hz {
            z = lowpass_match(&z, bw, cfg.sample_rate);
        }
        if z.is_empty() {
            return Err(Error::config(format!("noise {} is empty", path.display())));
        }
        let offset = (*off % z.len() as u64) as usize;
        let mut z = fit_length(&z, speech.len(), offset)?;
        if cfg.biquad {
            z = bq.process(&z);
        }
        noise_offsets.push(offset);
        noises.push(z);
    }

    let m = mix(&speech, &noises, snr_db, cfg.sample_rate)?;
    let target = extra_snr_db.map(|e| attenuation_target(&m.clean, &m.noise, e)).transpose()?;
    let to_f32 = |v: &[f64]| -> Vec<f32> { v.iter().map(|&x| x as f32).collect() };

    let id = example_id(row_idx, &row.speech);
    let file = format!("{id}.wav");
    let rel = |sub: &str| PathBuf::from(sub).join(&file);
    let clean = to_f32(&m.clean);
    let noise = to_f32(&m.noise);
    // noisy is rebuilt in f32 so the written files satisfy noisy = clean + noise
    let noisy: Vec<f32> = clean.iter().zip(&noise).map(|(s, z)| s + z).collect();
    write_wav_atomic(&out_dir.join(rel("noisy")), &noisy, cfg.sample_rate)?;
    write_wav_atomic(&out_dir.join(rel("clean")), &clean, cfg.sample_rate)?;
    if let Some(t) = &target {
        write_wav_atomic(&out_dir.join(rel("target")), &to_f32(t), cfg.sample_rate)?;
    }

    Ok(IndexRecord {
        id,
        noisy: rel("noisy"),
        clean: rel("clean"),
        target: target.is_some().then(|| rel("target")),
        spec: AugmentSpec {
            seed,
            stream: row_idx as u64,
            speech: row.speech.clone(),
            noises: row.noises.clone(),
            noise_offsets,
            rir: row.rir.clone(),
            snr_db,
            gain_db,
            speech_biquad: cfg.biquad.then_some(speech_biquad),
            noise_biquads: if cfg.biquad { noise_biquads } else { Vec::new() },
            eq: if cfg.eq { eq } else { Vec::new() },
            resample_ratio,
            lowpass_hz,
            extra_snr_db,
        },
    })
}

fn write_text_atomic(path: &Path, text: &str) -> Result<()> {
    let tmp = temp_sibling(path);
    std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn jsonl<S: Serialize>(rows: &[S]) -> Result<String> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r).map_err(|source| Error::Json {
            context: "serializing index".into(),
            source,
        })?);
        out.push('\n');
    }
    Ok(out)
}

/// Synthesizes every manifest row into `out_dir/{noisy,clean,target}/` and
/// writes `index.jsonl` (in manifest order) and `failures.jsonl`. Rows that
/// fail are reported and skipped; output is byte-identical for equal inputs.
/// Audio is stored as 32-bit float without peak normalization, so levels
/// above full scale are kept as is.
pub fn synthesize_dataset(manifest: &Path, out_dir: &Path, cfg: &SynthConfig) -> Result<SynthSummary> {
    cfg.validate()?;
    let text = std::fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    for sub in ["noisy", "clean", "target"] {
        let d = out_dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let results: Vec<std::result::Result<IndexRecord, FailureRecord>> = lines
        .par_iter()
        .enumerate()
        .map(|(i, line)| {
            let row: ManifestRow = serde_json::from_str(line).map_err(|e| FailureRecord {
                row: i,
                speech: None,
                error: format!("malformed manifest line: {e}"),
            })?;
            synthesize_row(i, &row, cfg, base, out_dir).map_err(|e| FailureRecord {
                row: i,
                speech: Some(row.speech.clone()),
                error: e.to_string(),
            })
        })
        .collect();
    let (mut records, mut failures) = (Vec::new(), Vec::new());
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(f) => failures.push(f),
        }
    }
    let index_path = out_dir.join("index.jsonl");
    let failures_path = out_dir.join("failures.jsonl");
    write_text_atomic(&index_path, &jsonl(&records)?)?;
    write_text_atomic(&failures_path, &jsonl(&failures)?)?;
    Ok(SynthSummary {
        records,
        failures,
        index_path,
        failures_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::write_wav;
    use crate::augment::measure_snr;

    fn write_inputs(dir: &Path) {
        let sr = 16_000;
        let speech: Vec<f32> = (0..sr)
            .map(|i| {
                let t = i as f32 / sr as f32;
                0.3 * (t * 2.0 * std::f32::consts::PI * 180.0).sin() * (0.6 + 0.4 * (t * 25.0).sin())
            })
            .collect();
        write_wav(&dir.join("speech.wav"), &speech, sr as u32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noise: Vec<f32> = (0..30_000).map(|_| rng.gen_range(-0.2..0.2)).collect();
        write_wav(&dir.join("noise.wav"), &noise, 48_000).unwrap();
        write_wav(&dir.join("silent.wav"), &vec![0.0; 8000], 48_000).unwrap();
        let rir: Vec<f32> = (0..2400).map(|i| (-(i as f32) / 300.0).exp() * if i % 7 == 0 { 1.0 } else { -0.3 }).collect();
        write_wav(&dir.join("rir.wav"), &rir, 48_000).unwrap();
        std::fs::write(
            dir.join("m.jsonl"),
            concat!(
                "{\"speech\":\"speech.wav\",\"noises\":[\"noise.wav\"]}\n",
                "{\"speech\":\"silent.wav\",\"noises\":[\"noise.wav\"]}\n",
                "{\"speech\":\"missing.wav\",\"noises\":[\"noise.wav\"]}\n",
                "{\"speech\":\"speech.wav\",\"noises\":[\"noise.wav\",\"noise.wav\"],\"rir\":\"rir.wav\",\"seed\":7}\n",
            ),
        )
        .unwrap();
    }

    #[test]
    fn dataset_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        write_inputs(dir.path());
        let cfg = SynthConfig::default();
        let out1 = dir.path().join("out1");
        let out2 = dir.path().join("out2");
        let a = synthesize_dataset(&dir.path().join("m.jsonl"), &out1, &cfg).unwrap();
        let b = synthesize_dataset(&dir.path().join("m.jsonl"), &out2, &cfg).unwrap();
        assert_eq!(a.records.len(), 2);
        assert_eq!(a.failures.len(), 2);
        assert_eq!(
            std::fs::read(&a.index_path).unwrap(),
            std::fs::read(&b.index_path).unwrap()
        );
        for rec in &a.records {
            let noisy = read_wav(&out1.join(&rec.noisy)).unwrap().samples;
            let clean = read_wav(&out1.join(&rec.clean)).unwrap().samples;
            assert_eq!(std::fs::read(out1.join(&rec.noisy)).unwrap(), std::fs::read(out2.join(&rec.noisy)).unwrap());
            let noise: Vec<f32> = noisy.iter().zip(&clean).map(|(x, s)| x - s).collect();
            let snr = measure_snr(&clean, &noise, 48_000).unwrap();
            assert!((snr - rec.spec.snr_db).abs() < 0.1, "{snr} vs {}", rec.spec.snr_db);
            assert_eq!(rec.spec.lowpass_hz, Some(8000.0));
        }
        assert_eq!(a.records[1].spec.seed, 7);
        assert!(a.records[1].spec.rir.is_some());
    }
}
