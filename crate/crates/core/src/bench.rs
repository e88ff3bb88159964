//! Real-time-factor measurement and variant comparison.
//!
//! An RTF is the wall time of one forward pass divided by the duration of
//! the audio it produced. Runs are pinned to one thread by default; the
//! median over the measured runs is the headline number.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use crate::decoder::{
    init_random_with_bank_filter, Decoder, DecoderConfig, DecoderVariant, DecoderWeights,
    LatentFeatures, StageTimes,
};
use crate::par::{with_threads, Execution};
use crate::{Error, Result, SAMPLES_PER_FRAME, SAMPLE_RATE};

pub const MIN_MEASURED_RUNS: usize = 5;
pub const MIN_SECONDS: f64 = 1.0;

/// Whole-model RTFs reported for the four variants on a single CPU thread,
/// printed as context under every report.
pub const REFERENCE_RTFS: [(DecoderVariant, f64); 4] = [
    (DecoderVariant::FullConv, 0.27),
    (DecoderVariant::Istft, 0.15),
    (DecoderVariant::MultiBandIstft, 0.078),
    (DecoderVariant::MultiStreamIstft, 0.066),
];

/// What to benchmark and how often.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchSpec {
    pub variants: Vec<DecoderConfig>,
    /// Synthetic audio per run, in seconds.
    pub seconds: f64,
    pub warmup_runs: usize,
    pub measured_runs: usize,
    pub seed: u64,
    pub threads: usize,
}

impl BenchSpec {
    /// 10 s of audio, 3 warmups, 10 measured runs, seed 0, one thread.
    pub fn new(variants: Vec<DecoderConfig>) -> Self {
        Self {
            variants,
            seconds: 10.0,
            warmup_runs: 3,
            measured_runs: 10,
            seed: 0,
            threads: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.measured_runs < MIN_MEASURED_RUNS {
            return Err(Error::invalid(format!(
                "{} measured runs requested, at least {MIN_MEASURED_RUNS} are required",
                self.measured_runs
            )));
        }
        if !(self.seconds >= MIN_SECONDS) || !self.seconds.is_finite() {
            return Err(Error::invalid(format!(
                "benchmark duration must be at least {MIN_SECONDS} s, got {}",
                self.seconds
            )));
        }
        if self.threads == 0 {
            return Err(Error::invalid("thread count must be at least 1"));
        }
        Ok(())
    }

    /// Latent frames per run: enough for `seconds` of audio.
    pub fn frames(&self) -> usize {
        ((self.seconds * SAMPLE_RATE as f64) / SAMPLES_PER_FRAME as f64).ceil() as usize
    }
}

/// Median, extremes and raw values of the measured RTFs.
#[derive(Debug, Clone, PartialEq)]
pub struct RtfStats {
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub runs: Vec<f64>,
}

impl RtfStats {
    fn from_runs(runs: Vec<f64>) -> Self {
        let mut sorted = runs.clone();
        sorted.sort_by(f64::total_cmp);
        Self {
            median: median_of_sorted(&sorted),
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            runs,
        }
    }
}

fn median_of_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Measurements of one variant.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantReport {
    pub variant: DecoderVariant,
    pub rtf: RtfStats,
    /// Stage split of the median-time run.
    pub stages: StageTimes,
    /// Wall time of the median-time run.
    pub wall: Duration,
    pub output_samples: usize,
    pub parameter_count: usize,
    pub multiply_accumulates: u64,
}

impl VariantReport {
    /// Fraction of the median run spent in the convolution stack.
    pub fn resblock_share(&self) -> f64 {
        self.stages.resblocks.as_secs_f64() / self.wall.as_secs_f64()
    }
}

/// Outcome of the speed-ordering check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub passed: bool,
    /// One line per compared pair.
    pub checks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub variants: Vec<VariantReport>,
    pub machine: String,
    pub threads: usize,
    /// `None` when fewer than two distinct variant kinds were measured.
    pub verdict: Option<Verdict>,
}

/// Times `spec.warmup_runs + spec.measured_runs` forward passes of
/// `config` over seeded random latents.
pub fn measure_rtf(
    config: &DecoderConfig,
    weights: &DecoderWeights,
    spec: &BenchSpec,
) -> Result<VariantReport> {
    spec.validate()?;
    let exec = if spec.threads == 1 {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let decoder = Decoder::new(config, weights)
        .map_err(|e| Error::invalid(format!("weights do not match config: {e}")))?
        .with_execution(exec);
    let frames = spec.frames();
    let z = LatentFeatures::random(frames, config.latent_channels(), spec.seed)?;
    let output_samples = frames * SAMPLES_PER_FRAME;
    let audio_secs = output_samples as f64 / SAMPLE_RATE as f64;

    let runs = with_threads(spec.threads, || -> Result<Vec<(Duration, StageTimes)>> {
        for _ in 0..spec.warmup_runs {
            decoder.forward(&z)?;
        }
        (0..spec.measured_runs)
            .map(|_| {
                let clock = Instant::now();
                let (y, stages) = decoder.forward_timed(&z)?;
                let wall = clock.elapsed();
                debug_assert_eq!(y.len(), output_samples);
                Ok((wall, stages))
            })
            .collect()
    })??;

    let mut by_wall = runs.clone();
    by_wall.sort_by_key(|r| r.0);
    let (wall, stages) = by_wall[by_wall.len() / 2];
    Ok(VariantReport {
        variant: config.variant(),
        rtf: RtfStats::from_runs(
            runs.iter()
                .map(|r| r.0.as_secs_f64() / audio_secs)
                .collect(),
        ),
        stages,
        wall,
        output_samples,
        parameter_count: config.parameter_count(),
        multiply_accumulates: config.multiply_accumulates(frames),
    })
}

/// Benchmarks every configured variant with shared seeds and checks the
/// ordering FullConv > Istft > max(MultiBand, MultiStream) on median RTF.
pub fn compare_variants(spec: &BenchSpec) -> Result<BenchReport> {
    spec.validate()?;
    if spec.variants.is_empty() {
        return Err(Error::invalid("no variants to benchmark"));
    }
    let variants = spec
        .variants
        .iter()
        .map(|config| {
            let weights = init_random_with_bank_filter(config, spec.seed)?;
            measure_rtf(config, &weights, spec)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchReport {
        verdict: ordering_verdict(&variants),
        variants,
        machine: machine_descriptor(),
        threads: spec.threads,
    })
}

/// Rank in the expected speed order; lower is slower.
fn tier(v: DecoderVariant) -> usize {
    match v {
        DecoderVariant::FullConv => 0,
        DecoderVariant::Istft => 1,
        DecoderVariant::MultiBandIstft | DecoderVariant::MultiStreamIstft => 2,
    }
}

/// Checks every pair of present variants in different tiers, on both median
/// RTF and static multiply-accumulate count.
pub fn ordering_verdict(reports: &[VariantReport]) -> Option<Verdict> {
    let mut kinds: Vec<_> = reports.iter().map(|r| r.variant).collect();
    kinds.sort();
    kinds.dedup();
    if kinds.len() < 2 {
        return None;
    }
    let mut checks = Vec::new();
    let mut passed = true;
    for slow in reports {
        for fast in reports {
            if tier(slow.variant) >= tier(fast.variant) {
                continue;
            }
            let rtf_ok = slow.rtf.median > fast.rtf.median;
            let mac_ok = slow.multiply_accumulates > fast.multiply_accumulates;
            passed &= rtf_ok && mac_ok;
            checks.push(format!(
                "{} > {}: rtf {:.4} vs {:.4} {}, macs {} vs {} {}",
                slow.variant,
                fast.variant,
                slow.rtf.median,
                fast.rtf.median,
                if rtf_ok { "ok" } else { "VIOLATED" },
                slow.multiply_accumulates,
                fast.multiply_accumulates,
                if mac_ok { "ok" } else { "VIOLATED" },
            ));
        }
    }
    Some(Verdict { passed, checks })
}

/// OS, architecture, CPU model (when readable) and hardware thread count.
pub fn machine_descriptor() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|info| {
            info.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".to_string());
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!(
        "{}-{}, {cpu}, {threads} hardware threads",
        std::env::consts::OS,
        std::env::consts::ARCH
    )
}

impl BenchReport {
    pub fn get(&self, variant: DecoderVariant) -> Option<&VariantReport> {
        self.variants.iter().find(|v| v.variant == variant)
    }

    /// Aligned plain-text table with the verdict and reference footer.
    pub fn to_table(&self) -> String {
        let ms = |d: Duration| format!("{:.1}", d.as_secs_f64() * 1e3);
        let mut rows = vec![[
            "variant".to_string(),
            "rtf_median".into(),
            "rtf_min".into(),
            "rtf_max".into(),
            "resblocks_ms".into(),
            "head_ms".into(),
            "istft_ms".into(),
            "combine_ms".into(),
            "params".into(),
            "gmacs".into(),
        ]];
        for v in &self.variants {
            rows.push([
                v.variant.to_string(),
                format!("{:.4}", v.rtf.median),
                format!("{:.4}", v.rtf.min),
                format!("{:.4}", v.rtf.max),
                ms(v.stages.resblocks),
                ms(v.stages.head),
                ms(v.stages.istft),
                ms(v.stages.band_combination),
                v.parameter_count.to_string(),
                format!("{:.2}", v.multiply_accumulates as f64 / 1e9),
            ]);
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        let _ = writeln!(out, "machine: {}", self.machine);
        let _ = writeln!(out, "threads: {}", self.threads);
        for row in &rows {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (cell, &w))| {
                    if i == 0 {
                        format!("{cell:<w$}")
                    } else {
                        format!("{cell:>w$}")
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        match &self.verdict {
            Some(v) => {
                let _ = writeln!(out, "ordering: {}", if v.passed { "PASS" } else { "FAIL" });
                for c in &v.checks {
                    let _ = writeln!(out, "  {c}");
                }
            }
            None => {
                let _ = writeln!(out, "ordering: not checked (single variant)");
            }
        }
        let refs: Vec<String> = REFERENCE_RTFS
            .iter()
            .map(|(v, r)| format!("{v} {r}"))
            .collect();
        let _ = writeln!(
            out,
            "reference whole-model RTFs (single CPU thread): {}",
            refs.join(", ")
        );
        out
    }

    /// Machine-readable `key=value` lines.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "machine={}", self.machine);
        let _ = writeln!(out, "threads={}", self.threads);
        for v in &self.variants {
            let p = v.variant.name();
            let _ = writeln!(out, "{p}.rtf_median={}", v.rtf.median);
            let _ = writeln!(out, "{p}.rtf_min={}", v.rtf.min);
            let _ = writeln!(out, "{p}.rtf_max={}", v.rtf.max);
            let _ = writeln!(out, "{p}.wall_secs={}", v.wall.as_secs_f64());
            let _ = writeln!(
                out,
                "{p}.resblocks_secs={}",
                v.stages.resblocks.as_secs_f64()
            );
            let _ = writeln!(out, "{p}.head_secs={}", v.stages.head.as_secs_f64());
            let _ = writeln!(out, "{p}.istft_secs={}", v.stages.istft.as_secs_f64());
            let _ = writeln!(
                out,
                "{p}.band_combination_secs={}",
                v.stages.band_combination.as_secs_f64()
            );
            let _ = writeln!(out, "{p}.output_samples={}", v.output_samples);
            let _ = writeln!(out, "{p}.parameters={}", v.parameter_count);
            let _ = writeln!(out, "{p}.multiply_accumulates={}", v.multiply_accumulates);
        }
        let verdict = match &self.verdict {
            Some(v) if v.passed => "pass",
            Some(_) => "fail",
            None => "none",
        };
        let _ = writeln!(out, "ordering={verdict}");
        for (v, r) in REFERENCE_RTFS {
            let _ = writeln!(out, "reference.{}.rtf={r}", v.name());
        }
        out
    }
}
