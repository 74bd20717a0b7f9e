//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any criterion fails.

use std::sync::Arc;
use std::time::{Duration, Instant};

use dfnet_core::audio::{read_wav, write_wav};
use dfnet_core::augment::{synthesize_dataset, SynthConfig};
use dfnet_core::enhance::{apply_df, enhance_signal, nb_df_bins, EnhanceConfig};
use dfnet_core::erb::{apply_fb, apply_inverse_fb, build_erb_fb};
use dfnet_core::loss::{spectral_loss, spectral_loss_grad};
use dfnet_core::metrics::si_sdr;
use dfnet_core::net::{complexity_report, ArchDescriptor, DfNet, NetworkWeights};
use dfnet_core::oracle::{oracle_df, run_fft_sweep, OracleMethod, SweepConfig};
use dfnet_core::spectral::{Overlap, Spectrogram, StftConfig};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_complex(r: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0))
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn stft_roundtrip() -> Outcome {
    let t = Instant::now();
    let mut r = rng(1);
    let x: Vec<f64> = (0..48_000).map(|_| r.gen_range(-1.0..1.0)).collect();
    let mut worst = 0.0f64;
    for fft in [240, 480, 960, 1440] {
        for ov in [Overlap::Half, Overlap::ThreeQuarters] {
            let cfg = StftConfig::<f64>::new(48_000, fft, ov).unwrap();
            let y = Spectrogram::analyze(&x, &cfg).synthesize(x.len());
            let num: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum();
            let den: f64 = x.iter().map(|a| a * a).sum();
            worst = worst.max((num / den).sqrt());
        }
    }
    let el = t.elapsed();
    Outcome {
        pass: worst < 1e-6 && within(el, 5.0),
        detail: format!("max relative L2 error {worst:.2e} (< 1e-6), {el:.2?}"),
    }
}

fn erb_roundtrip() -> Outcome {
    let t = Instant::now();
    let fb = build_erb_fb(48_000, 960, 32, 2).unwrap();
    let mut r = rng(2);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let g: Vec<f64> = (0..32).map(|_| r.gen_range(0.0..1.0)).collect();
        let back = apply_fb(&apply_inverse_fb(&g, &fb).unwrap(), &fb, true).unwrap();
        mismatches += back.iter().zip(&g).filter(|(a, b)| a != b).count();
    }
    let el = t.elapsed();
    Outcome {
        pass: mismatches == 0 && within(el, 1.0),
        detail: format!("{mismatches} inexact band values in 1000 vectors, {el:.2?}"),
    }
}

fn crm_specialization() -> Outcome {
    let t = Instant::now();
    let mut r = rng(3);
    let (frames, bins) = (1000, 100);
    let mut worst = 0.0f64;
    for _ in 0..frames {
        let x: Vec<Complex64> = (0..bins).map(|_| random_complex(&mut r)).collect();
        let c: Vec<Complex64> = (0..bins).map(|_| random_complex(&mut r)).collect();
        let y = apply_df(&[x.clone()], &c, 1, 0).unwrap();
        for ((yi, xi), ci) in y.iter().zip(&x).zip(&c) {
            let mask = Complex64::new(xi.re * ci.re - xi.im * ci.im, xi.re * ci.im + xi.im * ci.re);
            worst = worst.max((yi - mask).norm());
        }
    }
    let el = t.elapsed();
    Outcome {
        pass: worst <= 1e-12 && within(el, 1.0),
        detail: format!("max deviation {worst:.1e} over 1e5 bins, {el:.2?}"),
    }
}

fn gradient_verification() -> Outcome {
    let t = Instant::now();
    let (frames, bins, step) = (8, 16, 1e-5);
    let mut r = rng(4);
    let mut worst = 0.0f64;
    let mut finite = true;
    for c in [0.3, 0.6, 1.0] {
        for _ in 0..100 {
            let y: Vec<Complex64> = (0..frames * bins).map(|_| random_complex(&mut r)).collect();
            let s: Vec<Complex64> = (0..frames * bins).map(|_| random_complex(&mut r)).collect();
            let g = spectral_loss_grad(&y, &s, c).unwrap();
            for i in 0..y.len() {
                if y[i].norm() <= 1e-3 {
                    continue;
                }
                for (part, analytic) in [(0, g[i].re), (1, g[i].im)] {
                    // only the i-th term of the bin sum depends on y[i]
                    let probe = |h: f64| {
                        let mut yp = y[i];
                        if part == 0 {
                            yp.re += h;
                        } else {
                            yp.im += h;
                        }
                        spectral_loss(&[yp], &s[i..=i], c).unwrap()
                    };
                    let numeric = (probe(step) - probe(-step)) / (2.0 * step);
                    let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7);
                    worst = worst.max(rel);
                }
            }
            let zeros = vec![Complex64::new(0.0, 0.0); s.len()];
            finite &= spectral_loss_grad(&zeros, &s, c)
                .unwrap()
                .iter()
                .all(|z| z.re.is_finite() && z.im.is_finite());
        }
    }
    let el = t.elapsed();
    Outcome {
        pass: worst < 1e-4 && finite && within(el, 30.0),
        detail: format!("max relative error {worst:.2e} (< 1e-4), finite at Y=0: {finite}, {el:.2?}"),
    }
}

fn oracle_trend() -> Outcome {
    let t = Instant::now();
    let df = OracleMethod::Df { order: 5, lookahead: 1 };
    let cfg = SweepConfig {
        seed: 0,
        fft_sizes: vec![240, 480, 960],
        input_snrs: vec![0.0],
        methods: vec![df, OracleMethod::Crm],
        n_fixtures: 20,
        ..SweepConfig::default()
    };
    let report = run_fft_sweep(&cfg).unwrap();
    let gap = |fft| {
        report.find(fft, df, 0.0).unwrap().si_sdr - report.find(fft, OracleMethod::Crm, 0.0).unwrap().si_sdr
    };
    let gaps: Vec<f64> = cfg.fft_sizes.iter().map(|&f| gap(f)).collect();
    let df_wins = gaps.iter().all(|&g| g >= 0.0);
    let trend = gaps[0] > gaps[2];
    let el = t.elapsed();
    Outcome {
        pass: df_wins && trend && within(el, 120.0),
        detail: format!(
            "DF-CRM gap 240/480/960 = {:.2}/{:.2}/{:.2} dB; DF >= CRM everywhere: {df_wins}; gap(240) > gap(960): {trend}, {el:.2?}",
            gaps[0], gaps[1], gaps[2]
        ),
    }
}

fn oracle_recovery() -> Outcome {
    let cfg = StftConfig::<f64>::new(48_000, 480, Overlap::Half).unwrap();
    let mut r = rng(6);
    let n = 60;
    let x = Spectrogram::from_data(&cfg, n, (0..n * cfg.n_bins()).map(|_| random_complex(&mut r)).collect()).unwrap();
    let prev = |k: usize, f: usize| if k > 0 { x.get(k - 1, f) } else { Complex64::new(0.0, 0.0) };
    let mut s = Spectrogram::zeros(&cfg, n);
    for k in 0..n {
        for f in 0..cfg.n_bins() {
            s.set(k, f, 0.5 * x.get(k, f) + 0.5 * prev(k, f));
        }
    }
    let c = oracle_df(&x, &s, 2, 0, 9, cfg.n_bins()).unwrap();
    let mut coef_err = 0.0f64;
    let mut residual = 0.0f64;
    for k in 0..n {
        for f in 0..cfg.n_bins() {
            coef_err = coef_err.max((c.get(k, 0, f) - 0.5).norm()).max((c.get(k, 1, f) - 0.5).norm());
            let y = c.get(k, 0, f) * x.get(k, f) + c.get(k, 1, f) * prev(k, f);
            residual += (y - s.get(k, f)).norm_sqr();
        }
    }
    Outcome {
        pass: residual < 1e-8 && coef_err < 1e-6,
        detail: format!("residual {residual:.1e} (< 1e-8), max coefficient error {coef_err:.1e} (< 1e-6)"),
    }
}

fn identity_net(cfg: &EnhanceConfig) -> Arc<DfNet<f64>> {
    let d = ArchDescriptor::new(cfg.nb_erb, cfg.nb_df(), cfg.df_order, cfg.df_lookahead, cfg.conv_lookahead);
    Arc::new(DfNet::from_weights(&NetworkWeights::identity(&d).unwrap()).unwrap())
}

/// Delay of the raw streaming output measured from a single impulse.
fn impulse_delay(cfg: &EnhanceConfig) -> usize {
    let mut x = vec![0.0f64; 12_000];
    x[3001] = 1.0;
    let y = enhance_signal(&x, cfg, identity_net(cfg), false).unwrap();
    let peak = (0..y.len()).max_by(|&a, &b| y[a].abs().total_cmp(&y[b].abs())).unwrap();
    peak - 3001
}

fn causality_latency() -> Outcome {
    let cfg = EnhanceConfig::default();
    let hop = cfg.stft::<f64>().unwrap().hop_size();
    let formula = cfg.fft_size + cfg.conv_lookahead.max(cfg.df_lookahead) * hop;
    let measured = impulse_delay(&cfg);

    let d = ArchDescriptor::new(cfg.nb_erb, cfg.nb_df(), cfg.df_order, cfg.df_lookahead, cfg.conv_lookahead);
    let net = Arc::new(DfNet::<f64>::from_weights(&NetworkWeights::random(&d, 11).unwrap()).unwrap());
    let mut r = rng(7);
    let x: Vec<f64> = (0..24_000).map(|_| r.gen_range(-0.3..0.3)).collect();
    let t0 = 14_321;
    let mut x2 = x.clone();
    x2[t0..].iter_mut().for_each(|v| *v += r.gen_range(-0.3..0.3));
    let first_change = |a: &[f64], b: &[f64]| a.iter().zip(b).position(|(u, v)| u != v);
    let raw = first_change(
        &enhance_signal(&x, &cfg, net.clone(), false).unwrap(),
        &enhance_signal(&x2, &cfg, net.clone(), false).unwrap(),
    );
    let aligned = first_change(
        &enhance_signal(&x, &cfg, net.clone(), true).unwrap(),
        &enhance_signal(&x2, &cfg, net, true).unwrap(),
    );
    let causal = raw.is_some_and(|n| n >= t0) && aligned.is_some_and(|n| n + measured >= t0);

    let low = EnhanceConfig {
        fft_size: 240,
        df_lookahead: 0,
        conv_lookahead: 0,
        ..EnhanceConfig::default()
    };
    let low_ms = impulse_delay(&low) as f64 * 1000.0 / low.sample_rate as f64;
    Outcome {
        pass: causal && measured == formula && (low_ms - 5.0).abs() < 1e-9,
        detail: format!(
            "defaults: measured {measured} samples vs formula {formula}; perturbation at {t0} first changes raw output at {raw:?}, aligned output at {aligned:?}; fft 240 without lookahead: {low_ms} ms"
        ),
    }
}

fn grouping_sparsity() -> Outcome {
    let d = ArchDescriptor::new(32, nb_df_bins(5000.0, 960, 48_000), 5, 1, 2);
    let w = NetworkWeights::zeros(&d).unwrap();
    let half = complexity_report(&w, 48_000, 480).unwrap();
    let quarter = complexity_report(&w, 48_000, 240).unwrap();
    let per_matrix = 512 * 512 / 8;
    let mut checked = Vec::new();
    let mut ok = true;
    for l in &half.layers {
        let (Some(g), Some(dense)) = (l.grouped_weights, l.dense_weights) else {
            continue;
        };
        // a GRU holds six hidden-by-input matrices
        let matrices = if l.name.contains(".gru") { 6 } else { 1 };
        if dense == matrices * 512 * 512 {
            ok &= g == matrices * per_matrix && l.groups == 8;
            checked.push(format!("{}={}", l.name, g / matrices));
        }
    }
    let ratio = quarter.macs_per_second / half.macs_per_second;
    ok &= !checked.is_empty() && ratio == 2.0;
    Outcome {
        pass: ok,
        detail: format!(
            "512x512 grouped matrices: {} (expected {per_matrix} each); MACs/s ratio 75%/50% = {ratio}",
            checked.join(", ")
        ),
    }
}

/// Active-frame SNR computed independently of the library: 10 ms frames,
/// frames of `clean` with mean power at or above -50 dBFS.
fn measured_snr(clean: &[f32], noise: &[f32], sample_rate: u32) -> f64 {
    let frame = sample_rate as usize / 100;
    let (mut es, mut ez) = (0.0f64, 0.0f64);
    for (c, z) in clean.chunks(frame).zip(noise.chunks(frame)) {
        let p: f64 = c.iter().map(|v| f64::from(*v).powi(2)).sum();
        if p / c.len() as f64 >= 1e-5 {
            es += p;
            ez += z.iter().map(|v| f64::from(*v).powi(2)).sum::<f64>();
        }
    }
    10.0 * (es / ez).log10()
}

fn augmentation_fidelity() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(9);
    let mut manifest = String::new();
    for i in 0..6 {
        let sr = if i % 3 == 0 { 16_000 } else { 48_000 };
        let f0: f32 = r.gen_range(100.0..250.0);
        let speech: Vec<f32> = (0..sr)
            .map(|n| {
                let t = n as f32 / sr as f32;
                let env = if (t * 4.0).fract() < 0.7 { 1.0 } else { 0.0 };
                let tone: f32 = (1..8).map(|h| (std::f32::consts::TAU * f0 * h as f32 * t).sin() / h as f32).sum();
                0.2 * env * tone
            })
            .collect();
        write_wav(&dir.path().join(format!("s{i}.wav")), &speech, sr as u32).unwrap();
        let noise: Vec<f32> = (0..30_000).map(|_| r.gen_range(-0.3..0.3)).collect();
        write_wav(&dir.path().join(format!("n{i}.wav")), &noise, 48_000).unwrap();
        let noises: Vec<String> = (0..=i % 3).map(|j| format!("\"n{}.wav\"", (i + j) % 6)).collect();
        manifest += &format!("{{\"speech\":\"s{i}.wav\",\"noises\":[{}]}}\n", noises.join(","));
    }
    let m = dir.path().join("manifest.jsonl");
    std::fs::write(&m, manifest).unwrap();
    let out = dir.path().join("out");
    let cfg = SynthConfig {
        seed: 42,
        ..SynthConfig::default()
    };
    let summary = synthesize_dataset(&m, &out, &cfg).unwrap();
    let (mut worst_mix, mut worst_target) = (0.0f64, 0.0f64);
    let load = |p: &std::path::Path| read_wav(&out.join(p)).unwrap().samples;
    for rec in &summary.records {
        let noisy = load(&rec.noisy);
        let clean = load(&rec.clean);
        let target = load(rec.target.as_ref().unwrap());
        let minus_clean = |a: &[f32]| a.iter().zip(&clean).map(|(x, s)| x - s).collect::<Vec<f32>>();
        worst_mix = worst_mix.max((measured_snr(&clean, &minus_clean(&noisy), 48_000) - rec.spec.snr_db).abs());
        let want = rec.spec.snr_db + rec.spec.extra_snr_db.unwrap();
        worst_target = worst_target.max((measured_snr(&clean, &minus_clean(&target), 48_000) - want).abs());
    }
    Outcome {
        pass: summary.records.len() == 6 && worst_mix < 0.1 && worst_target < 0.1,
        detail: format!(
            "{} pairs; max SNR error {worst_mix:.2e} dB, max target SNR error {worst_target:.2e} dB (< 0.1)",
            summary.records.len()
        ),
    }
}

fn si_sdr_properties() -> Outcome {
    let mut r = rng(10);
    let s: Vec<f64> = (0..16_000).map(|_| r.gen_range(-1.0..1.0)).collect();
    let x: Vec<f64> = s.iter().map(|v| v + r.gen_range(-0.5..0.5)).collect();
    let base = si_sdr(&x, &s).unwrap();
    let mut scale_dev = 0.0f64;
    for a in [1e-3, 0.5, 2.0, 1e3, -1.0] {
        let xa: Vec<f64> = x.iter().map(|v| a * v).collect();
        scale_dev = scale_dev.max((si_sdr(&xa, &s).unwrap() - base).abs());
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
    let mut n: Vec<f64> = (0..s.len()).map(|_| r.gen_range(-1.0..1.0)).collect();
    let proj = dot(&n, &s) / dot(&s, &s);
    n.iter_mut().zip(&s).for_each(|(v, sv)| *v -= proj * sv);
    let g = (dot(&s, &s) / dot(&n, &n)).sqrt();
    let xo: Vec<f64> = s.iter().zip(&n).map(|(a, b)| a + g * b).collect();
    let ortho = si_sdr(&xo, &s).unwrap();
    Outcome {
        pass: scale_dev < 1e-9 && ortho.abs() < 0.01,
        detail: format!("scale deviation {scale_dev:.1e} dB (< 1e-9); orthogonal equal-energy noise {ortho:.2e} dB"),
    }
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "STFT round-trip", stft_roundtrip),
        (2, "ERB round-trip", erb_roundtrip),
        (3, "CRM specialization", crm_specialization),
        (4, "gradient verification", gradient_verification),
        (5, "oracle trend", oracle_trend),
        (6, "oracle DF recovery", oracle_recovery),
        (7, "causality and latency", causality_latency),
        (8, "grouping sparsity", grouping_sparsity),
        (9, "augmentation fidelity", augmentation_fidelity),
        (10, "SI-SDR properties", si_sdr_properties),
    ];
    let mut failed = Vec::new();
    for (id, name, run) in criteria {
        let o = run();
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!("AC{id:<2} {status} {name}: {}", o.detail);
        if !o.pass {
            failed.push(id);
        }
    }
    println!("acceptance: {}/10 criteria pass", 10 - failed.len());
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
