//! Command-line front end: WAV I/O, filter-bank round trips, losses,
//! decoding and benchmarking.
//!
//! Exit codes: 0 success, 1 I/O error, 2 validation or format error (a
//! failed benchmark ordering counts as a validation failure).

pub mod wav;

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use mbistft::bench::{compare_variants, BenchSpec};
use mbistft::decoder::{
    init_random_with_bank_filter, Decoder, DecoderConfig, DecoderVariant, DecoderWeights,
    LatentFeatures, Scale,
};
use mbistft::losses::{multires_stft_loss, subband_multires_loss, ResolutionSet};
use mbistft::pqmf::{
    analyze, optimize_cutoff, reconstruction_error_db, synthesize, FilterBank, PrototypeSpec,
};
use mbistft::{Execution, SAMPLE_RATE};

/// Largest MS-vs-MB difference accepted by `decode --compare`.
pub const COMPARE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    #[error("format error: {0}")]
    Format(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error(transparent)]
    Kernel(#[from] mbistft::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Kernel(mbistft::Error::Io(_)) => 1,
            _ => 2,
        }
    }
}

/// Attaches `path` to I/O failures coming out of the kernel.
fn at(path: &Path) -> impl Fn(mbistft::Error) -> CliError + '_ {
    move |e| match e {
        mbistft::Error::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => CliError::Kernel(other),
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "mbistft",
    version,
    about = "Multi-band iSTFT decoder kernel tools"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a WAV into pseudo-QMF sub-bands and recombine it.
    PqmfRoundtrip(PqmfRoundtripArgs),
    /// Write a pseudo-QMF filter bank as text.
    PqmfDesign(PqmfDesignArgs),
    /// Multi-resolution STFT loss between two WAVs.
    Loss(LossArgs),
    /// Write seeded random decoder weights.
    InitWeights(InitWeightsArgs),
    /// Write a seeded random latent file and its sidecar.
    RandomLatent(RandomLatentArgs),
    /// Decode a latent file to a WAV.
    Decode(DecodeArgs),
    /// Measure single-thread real-time factors and check the speed ordering.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScaleArg {
    Full,
    Mini,
}

impl From<ScaleArg> for Scale {
    fn from(s: ScaleArg) -> Self {
        match s {
            ScaleArg::Full => Scale::Full,
            ScaleArg::Mini => Scale::Mini,
        }
    }
}

#[derive(Debug, Args)]
pub struct BankArgs {
    #[arg(long, default_value_t = 4)]
    pub bands: usize,
    #[arg(long, default_value_t = 63)]
    pub taps: usize,
    #[arg(long, default_value_t = 9.0)]
    pub beta: f64,
    /// Prototype cutoff; searched with the reconstruction optimiser when
    /// omitted (0.142 is used directly for 4 bands and 63 taps).
    #[arg(long)]
    pub cutoff: Option<f64>,
}

impl BankArgs {
    fn bank(&self) -> Result<FilterBank, CliError> {
        let cutoff = match self.cutoff {
            Some(c) => c,
            None if self.bands == 4 && self.taps == 63 && self.beta == 9.0 => {
                PrototypeSpec::default().cutoff_ratio
            }
            None => optimize_cutoff(self.taps, self.bands, self.beta)?,
        };
        Ok(FilterBank::design(&PrototypeSpec {
            taps: self.taps,
            bands: self.bands,
            cutoff_ratio: cutoff,
            kaiser_beta: self.beta,
        })?)
    }
}

#[derive(Debug, Args)]
pub struct PqmfRoundtripArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub bank: BankArgs,
}

#[derive(Debug, Args)]
pub struct PqmfDesignArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub bank: BankArgs,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long = "gen")]
    pub generated: PathBuf,
    /// Evaluate on pseudo-QMF sub-bands.
    #[arg(long)]
    pub subband: bool,
    #[arg(long, default_value_t = 4)]
    pub bands: usize,
    /// Trim both signals to the shorter length instead of failing.
    #[arg(long)]
    pub trim: bool,
}

#[derive(Debug, Args)]
pub struct InitWeightsArgs {
    #[arg(long, value_parser = parse_variant)]
    pub variant: DecoderVariant,
    #[arg(long, value_enum, default_value = "full")]
    pub scale: ScaleArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RandomLatentArgs {
    #[arg(long)]
    pub frames: usize,
    #[arg(long, default_value_t = 192)]
    pub channels: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long, value_parser = parse_variant)]
    pub variant: DecoderVariant,
    #[arg(long, value_enum, default_value = "full")]
    pub scale: ScaleArg,
    /// Weight file; seeded random weights are used when omitted.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub latent: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// For `ms`: set the synthesis filter from the fixed bank and report the
    /// difference to the `mb` decoder sharing all other weights.
    #[arg(long)]
    pub compare: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', value_parser = parse_variant, default_value = "vits,istft,mb,ms")]
    pub variants: Vec<DecoderVariant>,
    #[arg(long, default_value_t = 10.0)]
    pub seconds: f64,
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    #[arg(long, default_value_t = 3)]
    pub warmup: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "full")]
    pub scale: ScaleArg,
    /// Print `key=value` lines instead of the table.
    #[arg(long)]
    pub key_values: bool,
}

fn parse_variant(s: &str) -> Result<DecoderVariant, String> {
    s.parse().map_err(|e: mbistft::Error| e.to_string())
}

/// Text to print and the process exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub stdout: String,
    pub exit_code: i32,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Self {
            stdout,
            exit_code: 0,
        }
    }
}

pub fn run(cli: Cli) -> Result<Outcome, CliError> {
    match cli.command {
        Command::PqmfRoundtrip(a) => pqmf_roundtrip(&a),
        Command::PqmfDesign(a) => pqmf_design(&a),
        Command::Loss(a) => loss(&a),
        Command::InitWeights(a) => init_weights(&a),
        Command::RandomLatent(a) => random_latent(&a),
        Command::Decode(a) => decode(&a),
        Command::Bench(a) => bench(&a),
    }
}

fn pqmf_roundtrip(a: &PqmfRoundtripArgs) -> Result<Outcome, CliError> {
    let x = wav::read(&a.input)?;
    if x.samples.is_empty() {
        return Err(CliError::Invalid(format!(
            "{} has no samples",
            a.input.display()
        )));
    }
    let bank = a.bank.bank()?;
    let y = synthesize(&analyze(&x.samples, x.sample_rate as f64, &bank), &bank)?;
    wav::write(&a.out, &y, x.sample_rate)?;
    let db = reconstruction_error_db(&x.samples, &y, bank.delay());
    Ok(Outcome::ok(format!(
        "bands={}\ntaps={}\ndelay={}\nreconstruction_error_db={db}\n",
        bank.bands(),
        bank.taps(),
        bank.delay()
    )))
}

fn pqmf_design(a: &PqmfDesignArgs) -> Result<Outcome, CliError> {
    let bank = a.bank.bank()?;
    std::fs::write(&a.out, bank.to_text()).map_err(|source| CliError::Io {
        path: a.out.clone(),
        source,
    })?;
    let cutoff = bank.spec().map_or(f64::NAN, |s| s.cutoff_ratio);
    Ok(Outcome::ok(format!("cutoff={cutoff}\n")))
}

fn loss(a: &LossArgs) -> Result<Outcome, CliError> {
    let r = wav::read(&a.reference)?;
    let g = wav::read(&a.generated)?;
    if r.sample_rate != g.sample_rate {
        return Err(CliError::Invalid(format!(
            "sample rates differ: {} vs {} Hz",
            r.sample_rate, g.sample_rate
        )));
    }
    let (mut rs, mut gs) = (r.samples, g.samples);
    if rs.len() != gs.len() {
        if !a.trim {
            return Err(CliError::Invalid(format!(
                "lengths differ: {} vs {} samples (pass --trim to cut to the shorter)",
                rs.len(),
                gs.len()
            )));
        }
        let n = rs.len().min(gs.len());
        rs.truncate(n);
        gs.truncate(n);
    }
    let res = ResolutionSet::subband_default();
    let report = if a.subband {
        let bank = BankArgs {
            bands: a.bands,
            taps: 63,
            beta: 9.0,
            cutoff: None,
        }
        .bank()?;
        subband_multires_loss(&rs, &gs, &bank, &res)?
    } else {
        multires_stft_loss(&rs, &gs, &res)?
    };
    Ok(Outcome::ok(report.to_text()))
}

fn init_weights(a: &InitWeightsArgs) -> Result<Outcome, CliError> {
    let config = DecoderConfig::with_scale(a.variant, a.scale.into());
    let w = init_random_with_bank_filter(&config, a.seed)?;
    w.save(&a.out).map_err(at(&a.out))?;
    Ok(Outcome::ok(format!(
        "variant={}\nparameters={}\nfingerprint={:016x}\n",
        a.variant,
        config.parameter_count(),
        config.fingerprint()
    )))
}

fn random_latent(a: &RandomLatentArgs) -> Result<Outcome, CliError> {
    let z = LatentFeatures::random(a.frames, a.channels, a.seed)?;
    z.save(&a.out).map_err(at(&a.out))?;
    Ok(Outcome::ok(format!(
        "frames={} channels={}\n",
        a.frames, a.channels
    )))
}

fn decode(a: &DecodeArgs) -> Result<Outcome, CliError> {
    let config = DecoderConfig::with_scale(a.variant, a.scale.into());
    if a.compare && a.variant != DecoderVariant::MultiStreamIstft {
        return Err(CliError::Invalid("--compare needs --variant ms".into()));
    }
    let mut weights = match &a.weights {
        Some(path) => DecoderWeights::load_for(path, &config).map_err(at(path))?,
        None => init_random_with_bank_filter(&config, a.seed)?,
    };
    let z = LatentFeatures::load(&a.latent).map_err(at(&a.latent))?;
    if z.channels() != config.latent_channels() {
        return Err(CliError::Invalid(format!(
            "latent has {} channels, the {} decoder expects {}",
            z.channels(),
            a.variant,
            config.latent_channels()
        )));
    }
    let mut out = String::new();
    let y = if a.compare {
        let mb_config = DecoderConfig::with_scale(DecoderVariant::MultiBandIstft, a.scale.into());
        let bank = FilterBank::design(mb_config.pqmf())?;
        weights.set_ms_filter_from_bank(&bank)?;
        let mut mb_weights = weights.clone();
        mb_weights.tensors.remove("ms_filter.weight");
        mb_weights.fingerprint = mb_config.fingerprint();
        let ms = Decoder::new(&config, &weights)?.forward(&z)?;
        let mb = Decoder::new(&mb_config, &mb_weights)?.forward(&z)?;
        let diff = ms
            .samples
            .iter()
            .zip(&mb.samples)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        let _ = writeln!(out, "compare_max_abs_diff={diff}");
        let _ = writeln!(
            out,
            "compare={}",
            if diff <= COMPARE_TOLERANCE {
                "pass"
            } else {
                "fail"
            }
        );
        if diff > COMPARE_TOLERANCE {
            wav::write(&a.out, &ms.samples, SAMPLE_RATE)?;
            return Ok(Outcome {
                stdout: out,
                exit_code: 2,
            });
        }
        ms
    } else {
        Decoder::new(&config, &weights)?
            .with_execution(Execution::Sequential)
            .forward(&z)?
    };
    wav::write(&a.out, &y.samples, SAMPLE_RATE)?;
    let _ = writeln!(out, "samples={}", y.len());
    let _ = writeln!(out, "sample_rate={SAMPLE_RATE}");
    Ok(Outcome::ok(out))
}

fn bench(a: &BenchArgs) -> Result<Outcome, CliError> {
    let mut variants = a.variants.clone();
    variants.dedup();
    let spec = BenchSpec {
        variants: variants
            .iter()
            .map(|&v| DecoderConfig::with_scale(v, a.scale.into()))
            .collect(),
        seconds: a.seconds,
        warmup_runs: a.warmup,
        measured_runs: a.runs,
        seed: a.seed,
        threads: 1,
    };
    let report = compare_variants(&spec)?;
    let stdout = if a.key_values {
        report.to_key_values()
    } else {
        report.to_table()
    };
    let passed = report.verdict.as_ref().is_none_or(|v| v.passed);
    Ok(Outcome {
        stdout,
        exit_code: if passed { 0 } else { 2 },
    })
}
