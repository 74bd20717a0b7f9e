//! `dfnet`: speech enhancement, oracle experiments, dataset synthesis and
//! evaluation from the command line.

mod commands;
mod config_file;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dfnet_core::enhance::{AttenLimit, EnhanceConfig};
use dfnet_core::spectral::Overlap;
use dfnet_core::Error;

#[derive(Debug, Parser)]
#[command(name = "dfnet", version, about = "Two-stage ERB gain and deep filtering speech enhancement")]
pub struct Cli {
    /// Read `key = value` settings from a file; flags on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Enhance a WAV file with the streaming engine.
    Enhance(EnhanceArgs),
    /// Compare oracle deep filtering against oracle complex ratio masks over FFT sizes.
    OracleSweep(SweepArgs),
    /// Synthesize noisy/clean/target training triples from a manifest.
    Synth(SynthArgs),
    /// Score estimate/reference WAV pairs with SI-SDR.
    Eval(EvalArgs),
    /// Check the spectral loss gradient against finite differences.
    Gradcheck(GradcheckArgs),
    /// Print a weight file's architecture descriptor and complexity report.
    DescribeWeights(DescribeArgs),
    /// Write a weight file (identity, zero-gain, zeros or seeded random).
    InitWeights(InitArgs),
}

/// Signal and model configuration shared by the processing subcommands.
#[derive(Debug, Clone, Args)]
struct RunArgs {
    #[arg(long, default_value_t = 48_000)]
    sample_rate: u32,
    #[arg(long, default_value_t = 960)]
    fft_size: usize,
    /// Frame overlap in percent (50 or 75).
    #[arg(long, default_value_t = 50)]
    overlap: u32,
    /// Number of ERB bands.
    #[arg(long, default_value_t = 32)]
    n_erb: usize,
    /// Upper frequency of the deep-filtering region, Hz.
    #[arg(long, default_value_t = 5000.0)]
    f_df: f64,
    /// Deep filter order N.
    #[arg(long, default_value_t = 5)]
    df_order: usize,
    /// Deep filter lookahead in frames.
    #[arg(long, default_value_t = 1)]
    l_df: usize,
    /// Network (convolution) lookahead in frames.
    #[arg(long, default_value_t = 2)]
    l_dnn: usize,
    /// Maximum attenuation in dB, or `off`.
    #[arg(long, default_value = "off")]
    atten_limit: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl RunArgs {
    fn overlap(&self) -> Result<Overlap, Error> {
        Overlap::from_percent(self.overlap)
    }

    fn enhance_config(&self) -> Result<EnhanceConfig, Error> {
        if self.df_order == 0 {
            return Err(Error::Config("--df-order must be at least 1".into()));
        }
        if self.l_df >= self.df_order {
            return Err(Error::Config(format!(
                "--l-df ({}) must be smaller than --df-order ({})",
                self.l_df, self.df_order
            )));
        }
        let cfg = EnhanceConfig {
            sample_rate: self.sample_rate,
            fft_size: self.fft_size,
            overlap: self.overlap()?,
            nb_erb: self.n_erb,
            f_df: self.f_df,
            df_order: self.df_order,
            df_lookahead: self.l_df,
            conv_lookahead: self.l_dnn,
            atten_limit: AttenLimit::parse(&self.atten_limit)?,
            ..EnhanceConfig::default()
        };
        cfg.stft::<f64>()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct EnhanceArgs {
    /// Noisy input WAV (mono or downmixed).
    #[arg(long, short)]
    input: PathBuf,
    /// Enhanced output, written as 32-bit float WAV.
    #[arg(long, short)]
    output: PathBuf,
    /// Weight file; without it a pass-through (identity) network is used.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Keep the engine latency in the output instead of removing it.
    #[arg(long)]
    keep_latency: bool,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// FFT sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "240,480,960")]
    fft: Vec<usize>,
    /// Input SNRs in dB, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "0,5,10")]
    snr: Vec<f64>,
    /// Methods: `crm` or `df:N:l`, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "df:5:1,crm")]
    methods: Vec<String>,
    /// Number of synthetic fixtures.
    #[arg(long, default_value_t = 20)]
    fixtures: usize,
    /// Fixture duration in seconds.
    #[arg(long, default_value_t = 1.0)]
    duration: f64,
    #[arg(long, default_value_t = 48_000)]
    sample_rate: u32,
    #[arg(long, default_value_t = 50)]
    overlap: u32,
    /// Frames in the least-squares context window (odd).
    #[arg(long, default_value_t = dfnet_core::oracle::DEFAULT_CONTEXT_FRAMES)]
    context: usize,
    /// Magnitude cap of the ratio mask.
    #[arg(long, default_value_t = dfnet_core::oracle::DEFAULT_MAG_CAP)]
    mag_cap: f64,
    /// Use recorded pairs (`clean noisy` per line) instead of synthetic fixtures.
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// CSV output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// JSON-lines manifest: {"speech", "noises": [...], "rir"?, "seed"?}.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 48_000)]
    sample_rate: u32,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "-5,0,5,10,20,40")]
    snr_set: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "-6,0,6")]
    gain_set: Vec<f64>,
    /// Lower bound of the extra SNR of attenuation-limited targets, dB.
    #[arg(long, default_value_t = 6.0)]
    extra_min: f64,
    /// Upper bound of the extra SNR of attenuation-limited targets, dB.
    #[arg(long, default_value_t = 20.0)]
    extra_max: f64,
    /// Do not write attenuation-limited targets.
    #[arg(long)]
    no_target: bool,
    #[arg(long)]
    no_biquad: bool,
    #[arg(long)]
    no_eq: bool,
    #[arg(long)]
    no_resample: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// List of `estimate reference` path pairs.
    #[arg(long, conflicts_with = "dir", required_unless_present = "dir")]
    pairs: Option<PathBuf>,
    /// Directory with matching file names in two subdirectories.
    #[arg(long)]
    dir: Option<PathBuf>,
    #[arg(long, default_value = "enhanced")]
    estimate_sub: String,
    #[arg(long, default_value = "clean")]
    reference_sub: String,
    /// CSV output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Compression exponent of the spectral loss.
    #[arg(long, default_value_t = 0.6)]
    c: f64,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 8)]
    frames: usize,
    #[arg(long, default_value_t = 16)]
    bins: usize,
    /// Maximum accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Debug, Args)]
struct DescribeArgs {
    /// Weight file; the default architecture is described when omitted.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value_t = 48_000)]
    sample_rate: u32,
    #[arg(long, default_value_t = 960)]
    fft_size: usize,
    #[arg(long, default_value_t = 50)]
    overlap: u32,
    /// Print one JSON object instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum WeightsKind {
    Identity,
    ZeroGain,
    Zeros,
    Random,
}

#[derive(Debug, Args)]
struct InitArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = WeightsKind::Identity)]
    kind: WeightsKind,
    #[command(flatten)]
    run: RunArgs,
}

fn exit_code(err: &Error) -> u8 {
    if err.is_io() {
        2
    } else {
        1
    }
}

fn run(argv: Vec<OsString>) -> Result<(), Error> {
    let argv = config_file::apply_config(argv)?;
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match cli.command {
        Command::Enhance(a) => commands::enhance(a),
        Command::OracleSweep(a) => commands::oracle_sweep(a),
        Command::Synth(a) => commands::synth(a),
        Command::Eval(a) => commands::eval(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::DescribeWeights(a) => commands::describe_weights(a),
        Command::InitWeights(a) => commands::init_weights(a),
    }
}

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
