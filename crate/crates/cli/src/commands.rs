//! Subcommand implementations.

use std::path::Path;
use std::sync::Arc;

use dfnet_core::audio::{read_wav, write_wav_atomic};
use dfnet_core::augment::{synthesize_dataset, SynthConfig};
use dfnet_core::enhance::enhance_signal;
use dfnet_core::loss::gradcheck as run_gradcheck;
use dfnet_core::metrics::{evaluate_pairs, pairs_from_dir, pairs_from_list};
use dfnet_core::net::{complexity_report, ArchDescriptor, DfNet, NetworkWeights};
use dfnet_core::oracle::{run_fft_sweep, run_pair_sweep, OracleMethod, SweepConfig};
use dfnet_core::spectral::{Overlap, StftConfig};
use dfnet_core::Error;

use crate::{DescribeArgs, EnhanceArgs, EvalArgs, GradcheckArgs, InitArgs, SweepArgs, SynthArgs, WeightsKind};

type Result<T> = std::result::Result<T, Error>;

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn enhance(a: EnhanceArgs) -> Result<()> {
    let cfg = a.run.enhance_config()?;
    let weights = match &a.weights {
        Some(p) => NetworkWeights::load(p)?,
        None => {
            eprintln!("note: no --weights given, using a pass-through network");
            let desc = ArchDescriptor::new(cfg.nb_erb, cfg.nb_df(), cfg.df_order, cfg.df_lookahead, cfg.conv_lookahead);
            NetworkWeights::identity(&desc)?
        }
    };
    let net = Arc::new(DfNet::<f32>::from_weights(&weights)?);
    cfg.check_network(&net)?;
    let audio = read_wav(&a.input)?;
    if audio.sample_rate != cfg.sample_rate {
        return Err(Error::Config(format!(
            "{} is sampled at {} Hz, the model runs at {} Hz",
            a.input.display(),
            audio.sample_rate,
            cfg.sample_rate
        )));
    }
    let y = enhance_signal(&audio.samples, &cfg, net, !a.keep_latency)?;
    write_wav_atomic(&a.output, &y, cfg.sample_rate)?;
    eprintln!(
        "enhanced {} samples, engine latency {:.1} ms",
        y.len(),
        cfg.latency_samples()? as f64 * 1000.0 / cfg.sample_rate as f64
    );
    Ok(())
}

fn read_sweep_pairs(list: &Path, sample_rate: u32) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let text = std::fs::read_to_string(list).map_err(|source| Error::Io {
        path: list.to_path_buf(),
        source,
    })?;
    let base = list.parent().unwrap_or(Path::new("."));
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let [clean, noisy] = parts[..] else {
            return Err(Error::Config(format!("{}:{}: expected 'clean noisy'", list.display(), n + 1)));
        };
        let load = |p: &str| -> Result<Vec<f64>> {
            let audio = read_wav(&base.join(p))?;
            if audio.sample_rate != sample_rate {
                return Err(Error::Config(format!("{p}: sample rate {} != {sample_rate}", audio.sample_rate)));
            }
            Ok(audio.samples.iter().map(|&v| f64::from(v)).collect())
        };
        pairs.push((load(clean)?, load(noisy)?));
    }
    Ok(pairs)
}

pub fn oracle_sweep(a: SweepArgs) -> Result<()> {
    let methods = a.methods.iter().map(|m| OracleMethod::parse(m)).collect::<Result<Vec<_>>>()?;
    let cfg = SweepConfig {
        seed: a.seed,
        fft_sizes: a.fft,
        input_snrs: a.snr,
        methods,
        n_fixtures: a.fixtures,
        sample_rate: a.sample_rate,
        duration_s: a.duration,
        overlap: Overlap::from_percent(a.overlap)?,
        context: a.context,
        mag_cap: a.mag_cap,
    };
    let report = match &a.pairs {
        Some(list) => run_pair_sweep(&cfg, &read_sweep_pairs(list, cfg.sample_rate)?)?,
        None => run_fft_sweep(&cfg)?,
    };
    emit(a.out.as_deref(), &report.to_csv())
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        sample_rate: a.sample_rate,
        seed: a.seed,
        snrs_db: a.snr_set,
        gains_db: a.gain_set,
        extra_snr_db: (!a.no_target).then_some((a.extra_min, a.extra_max)),
        biquad: !a.no_biquad,
        eq: !a.no_eq,
        resample_range: (!a.no_resample).then_some((0.9, 1.1)),
        ..SynthConfig::default()
    };
    let summary = synthesize_dataset(&a.manifest, &a.out, &cfg)?;
    eprintln!(
        "wrote {} examples, {} failures (see {})",
        summary.records.len(),
        summary.failures.len(),
        summary.failures_path.display()
    );
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let pairs = match (&a.pairs, &a.dir) {
        (Some(list), _) => pairs_from_list(list)?,
        (None, Some(dir)) => pairs_from_dir(dir, &a.estimate_sub, &a.reference_sub)?,
        (None, None) => return Err(Error::Config("either --pairs or --dir is required".into())),
    };
    let result = evaluate_pairs(&pairs);
    for (id, why) in &result.skipped {
        eprintln!("skipped {id}: {why}");
    }
    match result.mean_si_sdr_db {
        Some(m) => eprintln!("mean SI-SDR over {} pairs: {m:.3} dB", result.rows.len()),
        None => eprintln!("no pairs scored; mean SI-SDR undefined"),
    }
    emit(a.out.as_deref(), &result.to_csv())
}

pub fn gradcheck(a: GradcheckArgs) -> Result<()> {
    let r = run_gradcheck(a.seed, a.c, a.trials, a.frames, a.bins)?;
    println!(
        "trials={} checked={} max_rel_error={:.3e} all_finite={}",
        r.trials, r.checked, r.max_rel_error, r.all_finite
    );
    if !r.all_finite || r.max_rel_error >= a.tolerance {
        return Err(Error::Contract(format!(
            "gradient check failed (max relative error {:.3e}, tolerance {:.1e}, finite {})",
            r.max_rel_error, a.tolerance, r.all_finite
        )));
    }
    Ok(())
}

fn default_descriptor(sample_rate: u32, fft_size: usize) -> ArchDescriptor {
    let nb_df = dfnet_core::enhance::nb_df_bins(5000.0, fft_size, sample_rate);
    ArchDescriptor::new(32, nb_df, 5, 1, 2)
}

pub fn describe_weights(a: DescribeArgs) -> Result<()> {
    let weights = match &a.weights {
        Some(p) => NetworkWeights::load(p)?,
        None => NetworkWeights::zeros(&default_descriptor(a.sample_rate, a.fft_size))?,
    };
    let stft = StftConfig::<f64>::new(a.sample_rate, a.fft_size, Overlap::from_percent(a.overlap)?)?;
    let report = complexity_report(&weights, a.sample_rate, stft.hop_size())?;
    let d = weights.descriptor();
    if a.json {
        let v = serde_json::json!({ "descriptor": d, "complexity": report });
        println!("{}", serde_json::to_string_pretty(&v).expect("serializable"));
        return Ok(());
    }
    println!("nb_erb: {}", d.nb_erb);
    println!("nb_df: {}", d.nb_df);
    println!("df_order: {}  df_lookahead: {}", d.df_order, d.df_lookahead);
    println!("conv_channels: {}  conv_kernel: {:?}  conv_lookahead: {}", d.conv_channels, d.conv_kernel, d.conv_lookahead);
    println!("groups: {}  hidden: {}", d.groups, d.hidden);
    println!(
        "gru layers: encoder {}, erb decoder {}, df decoder {}",
        d.enc_gru_layers, d.erb_dec_gru_layers, d.df_gru_layers
    );
    println!("tensors: {}", d.tensors.len());
    print!("{}", report.to_text());
    Ok(())
}

pub fn init_weights(a: InitArgs) -> Result<()> {
    let cfg = a.run.enhance_config()?;
    let desc = ArchDescriptor::new(cfg.nb_erb, cfg.nb_df(), cfg.df_order, cfg.df_lookahead, cfg.conv_lookahead);
    let weights = match a.kind {
        WeightsKind::Identity => NetworkWeights::identity(&desc)?,
        WeightsKind::ZeroGain => NetworkWeights::zero_gain(&desc)?,
        WeightsKind::Zeros => NetworkWeights::zeros(&desc)?,
        WeightsKind::Random => NetworkWeights::random(&desc, a.run.seed)?,
    };
    weights.save(&a.out)?;
    eprintln!("wrote {} ({} values)", a.out.display(), weights.stored_values());
    Ok(())
}
