//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use mbistft::bench::{compare_variants, BenchSpec};
use mbistft::decoder::{
    forward, init_random, init_random_with_bank_filter, DecoderConfig, DecoderVariant,
    DecoderWeights, LatentFeatures, Scale,
};
use mbistft::dsp::{istft, rfft, stft, Complex64, FrameParams, IstftOptions};
use mbistft::losses::{multires_stft_loss, subband_multires_loss, Resolution, ResolutionSet};
use mbistft::pqmf::{
    analyze, optimize_cutoff, reconstruction_error_db, synthesize, FilterBank, PrototypeSpec,
};
use mbistft::with_threads;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const RECONSTRUCTION_DB: f64 = -36.0;
const ROUND_TRIP_REL_ERR: f64 = 1e-6;
const DFT_REL_ERR: f64 = 1e-9;
const LOSS_ORACLE_ERR: f64 = 1e-5;
const LENGTH_FRAMES: [usize; 4] = [1, 7, 100, 513];
const MS_MB_MAX_ABS: f64 = 1e-6;
const MIN_SPEEDUP_OVER_ISTFT: f64 = 1.5;
const MIN_CONV_SHARE: f64 = 0.9;
const FAST_LIMIT: Duration = Duration::from_secs(5);
const BENCH_LIMIT: Duration = Duration::from_secs(300);

type Outcome = Result<String, String>;

fn noise(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn pqmf_reconstruction() -> Outcome {
    let clock = Instant::now();
    let cutoff = optimize_cutoff(63, 4, 9.0).map_err(|e| e.to_string())?;
    let bank = FilterBank::design(&PrototypeSpec {
        cutoff_ratio: cutoff,
        ..PrototypeSpec::default()
    })
    .map_err(|e| e.to_string())?;
    let fs = 22050.0;
    let n = 22050;
    let chirp: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            // 50 Hz to 10 kHz linear sweep over one second
            (2.0 * PI * (50.0 * t + 0.5 * 9950.0 * t * t)).sin()
        })
        .collect();
    let multitone: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            [
                (140.0, 1.0),
                (523.0, 0.6),
                (1250.0, 0.4),
                (2900.0, 0.25),
                (6100.0, 0.15),
            ]
            .iter()
            .map(|&(f, a)| a * (2.0 * PI * f * t).sin())
            .sum()
        })
        .collect();
    let mut worst = f64::NEG_INFINITY;
    let mut parts = Vec::new();
    for (name, x) in [
        ("noise", noise(n, 1)),
        ("chirp", chirp),
        ("multitone", multitone),
    ] {
        let y = synthesize(&analyze(&x, fs, &bank), &bank).map_err(|e| e.to_string())?;
        let db = reconstruction_error_db(&x, &y, 62);
        worst = worst.max(db);
        parts.push(format!("{name} {db:.1} dB"));
    }
    let elapsed = clock.elapsed();
    check(
        worst <= RECONSTRUCTION_DB && elapsed < FAST_LIMIT,
        format!(
            "cutoff {cutoff:.5}; {}; limit {RECONSTRUCTION_DB} dB; {:.2} s",
            parts.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

fn stft_round_trip() -> Outcome {
    let clock = Instant::now();
    let x = noise(22050, 2);
    let peak = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    for (fft, hop, win) in [(16, 4, 16), (1024, 256, 1024)] {
        let params = FrameParams::hann(fft, hop, win).map_err(|e| e.to_string())?;
        for center in [false, true] {
            let spec = stft(&x, &params, center).map_err(|e| e.to_string())?;
            let opts = IstftOptions {
                center,
                target_len: Some(x.len()),
            };
            let y = istft(&spec.to_mag_phase(), &params, opts).map_err(|e| e.to_string())?;
            // uncentred frames leave one window of partially covered edge
            let range = if center {
                0..x.len()
            } else {
                win..x.len() - win
            };
            let err = range.map(|i| (y[i] - x[i]).abs()).fold(0.0, f64::max) / peak;
            worst = worst.max(err);
        }
    }
    let elapsed = clock.elapsed();
    check(
        worst <= ROUND_TRIP_REL_ERR && elapsed < FAST_LIMIT,
        format!(
            "max relative error {worst:.2e} (limit {ROUND_TRIP_REL_ERR:e}); {:.2} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn naive_dft(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n / 2 + 1)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(t, &v)| {
                    Complex64::from_polar(v, -2.0 * PI * ((k * t) % n) as f64 / n as f64)
                })
                .sum()
        })
        .collect()
}

fn dft_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in [16, 171, 384, 683, 1024] {
        let x = noise(n, n as u64);
        let fast = rfft(&x).map_err(|e| e.to_string())?;
        let slow = naive_dft(&x);
        let scale = slow.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let err = fast
            .iter()
            .zip(&slow)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
            / scale;
        worst = worst.max(err);
    }
    check(
        worst <= DFT_REL_ERR,
        format!("n in {{16, 171, 384, 683, 1024}}: max relative error {worst:.2e} (limit {DFT_REL_ERR:e})"),
    )
}

fn naive_magnitudes(x: &[f64], fft: usize, win: usize, hop: usize) -> Vec<f64> {
    let window: Vec<f64> = (0..win)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / win as f64).cos())
        .collect();
    let mut out = Vec::new();
    let mut start = 0;
    while start + win <= x.len() {
        let mut frame = vec![0.0; fft];
        for n in 0..win {
            frame[n] = x[start + n] * window[n];
        }
        out.extend(naive_dft(&frame).iter().map(|c| c.norm()));
        start += hop;
    }
    out
}

fn loss_correctness() -> Outcome {
    let res = ResolutionSet::subband_default();
    let bank = FilterBank::design(&PrototypeSpec::default()).map_err(|e| e.to_string())?;
    let x = noise(8000, 3);
    let y = noise(8000, 4);
    let zero_full = multires_stft_loss(&x, &x, &res)
        .map_err(|e| e.to_string())?
        .total;
    let zero_sub = subband_multires_loss(&x, &x, &bank, &res)
        .map_err(|e| e.to_string())?
        .total;

    let sub = subband_multires_loss(&x, &y, &bank, &res).map_err(|e| e.to_string())?;
    let xs = analyze(&x, 22050.0, &bank);
    let ys = analyze(&y, 22050.0, &bank);
    let manual = xs
        .bands
        .iter()
        .zip(&ys.bands)
        .map(|(r, g)| multires_stft_loss(r, g, &res).map(|rep| rep.total))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let composed = manual.iter().sum::<f64>() / manual.len() as f64;

    let single = ResolutionSet::new(vec![Resolution {
        fft_size: 64,
        win_length: 64,
        hop: 16,
    }])
    .map_err(|e| e.to_string())?;
    let (a, b) = (noise(256, 5), noise(256, 6));
    let report = multires_stft_loss(&a, &b, &single).map_err(|e| e.to_string())?;
    let (ma, mb) = (
        naive_magnitudes(&a, 64, 64, 16),
        naive_magnitudes(&b, 64, 64, 16),
    );
    let sc = ma
        .iter()
        .zip(&mb)
        .map(|(p, q)| (p - q).powi(2))
        .sum::<f64>()
        .sqrt()
        / ma.iter().map(|p| p * p).sum::<f64>().sqrt().max(1e-7);
    let mag = ma
        .iter()
        .zip(&mb)
        .map(|(p, q)| (p.max(1e-7).ln() - q.max(1e-7).ln()).abs())
        .sum::<f64>()
        / ma.len() as f64;
    let oracle_err = (report.spectral_convergence - sc)
        .abs()
        .max((report.log_magnitude - mag).abs());

    check(
        zero_full == 0.0 && zero_sub == 0.0 && sub.total == composed && oracle_err <= LOSS_ORACLE_ERR,
        format!(
            "identical {zero_full}/{zero_sub}; sub-band {} vs composed {composed}; oracle error {oracle_err:.2e} (limit {LOSS_ORACLE_ERR:e})",
            sub.total
        ),
    )
}

fn length_law() -> Outcome {
    let mut bad = Vec::new();
    for v in DecoderVariant::ALL {
        let c = DecoderConfig::new(v);
        let w = init_random_with_bank_filter(&c, 0).map_err(|e| e.to_string())?;
        for t in LENGTH_FRAMES {
            let z = LatentFeatures::random(t, c.latent_channels(), t as u64)
                .map_err(|e| e.to_string())?;
            let len = forward(&z, &c, &w).map_err(|e| e.to_string())?.len();
            if len != 256 * t {
                bad.push(format!("{v} T={t} gave {len}"));
            }
        }
    }
    let rejected = [
        DecoderConfig::builder(DecoderVariant::FullConv)
            .upsample_scales(vec![8, 8, 2])
            .build(),
        DecoderConfig::builder(DecoderVariant::Istft)
            .upsample_scales(vec![8, 4])
            .build(),
        DecoderConfig::builder(DecoderVariant::MultiBandIstft)
            .upsample_scales(vec![8, 8])
            .build(),
        DecoderConfig::builder(DecoderVariant::MultiStreamIstft)
            .bands(2)
            .build(),
    ]
    .iter()
    .filter(|r| r.is_err())
    .count();
    check(
        bad.is_empty() && rejected == 4,
        format!(
            "4 variants x T in {LENGTH_FRAMES:?}: {} mismatches; {rejected}/4 inconsistent budgets rejected {}",
            bad.len(),
            bad.join(", ")
        ),
    )
}

fn ms_embeds_mb() -> Outcome {
    let mb = DecoderConfig::new(DecoderVariant::MultiBandIstft);
    let ms = DecoderConfig::new(DecoderVariant::MultiStreamIstft);
    let mut worst: f64 = 0.0;
    for seed in [3, 17] {
        let w_mb = init_random(&mb, seed);
        let w_ms = init_random_with_bank_filter(&ms, seed).map_err(|e| e.to_string())?;
        let z = LatentFeatures::random(64, 192, seed + 1).map_err(|e| e.to_string())?;
        let a = forward(&z, &mb, &w_mb).map_err(|e| e.to_string())?;
        let b = forward(&z, &ms, &w_ms).map_err(|e| e.to_string())?;
        let d = a
            .samples
            .iter()
            .zip(&b.samples)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        worst = worst.max(d);
    }
    check(
        worst <= MS_MB_MAX_ABS,
        format!("max abs difference {worst:.2e} (limit {MS_MB_MAX_ABS:e})"),
    )
}

fn speed_and_bottleneck() -> (Outcome, Outcome) {
    let configs = DecoderVariant::ALL
        .iter()
        .map(|&v| DecoderConfig::with_scale(v, Scale::Mini))
        .collect();
    let spec = BenchSpec::new(configs);
    let clock = Instant::now();
    let report = match compare_variants(&spec) {
        Ok(r) => r,
        Err(e) => return (Err(e.to_string()), Err("bench did not run".into())),
    };
    let elapsed = clock.elapsed();
    print!("{}", report.to_table());

    let rtf = |v| report.get(v).map(|r| r.rtf.median).unwrap_or(f64::NAN);
    let istft = rtf(DecoderVariant::Istft);
    let speedup_mb = istft / rtf(DecoderVariant::MultiBandIstft);
    let speedup_ms = istft / rtf(DecoderVariant::MultiStreamIstft);
    let ordering = report.verdict.as_ref().is_some_and(|v| v.passed);
    let speed = check(
        ordering
            && speedup_mb >= MIN_SPEEDUP_OVER_ISTFT
            && speedup_ms >= MIN_SPEEDUP_OVER_ISTFT
            && elapsed < BENCH_LIMIT,
        format!(
            "rtf vits {:.4} > istft {istft:.4} > mb {:.4} / ms {:.4}; ordering (rtf and macs) {}; speedup over istft mb {speedup_mb:.2}x ms {speedup_ms:.2}x (min {MIN_SPEEDUP_OVER_ISTFT}x); {:.0} s (limit {} s)",
            rtf(DecoderVariant::FullConv),
            rtf(DecoderVariant::MultiBandIstft),
            rtf(DecoderVariant::MultiStreamIstft),
            if ordering { "ok" } else { "violated" },
            elapsed.as_secs_f64(),
            BENCH_LIMIT.as_secs()
        ),
    );
    let share = report
        .get(DecoderVariant::FullConv)
        .map(|r| r.resblock_share())
        .unwrap_or(0.0);
    let bottleneck = check(
        share >= MIN_CONV_SHARE,
        format!(
            "vits conv stack {:.1}% of decoder wall time (min {:.0}%)",
            100.0 * share,
            100.0 * MIN_CONV_SHARE
        ),
    );
    (speed, bottleneck)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let c = DecoderConfig::new(DecoderVariant::MultiBandIstft);
    let w = init_random(&c, 7);
    let path = dir.path().join("mb.mbiw");
    w.save(&path).map_err(|e| e.to_string())?;
    let back = DecoderWeights::load_for(&path, &c).map_err(|e| e.to_string())?;
    let bits = |w: &DecoderWeights| -> Vec<u32> {
        w.tensors
            .values()
            .flat_map(|t| t.values.iter().map(|v| v.to_bits()))
            .collect()
    };
    let weights_exact = back == w && bits(&back) == bits(&w);

    let mut outputs = Vec::new();
    for (i, v) in DecoderVariant::ALL.into_iter().enumerate() {
        let c = DecoderConfig::new(v);
        let z = LatentFeatures::random(9, 192, 5).map_err(|e| e.to_string())?;
        let run = |threads: usize| -> Result<Vec<u64>, String> {
            let w = init_random_with_bank_filter(&c, 7).map_err(|e| e.to_string())?;
            let y = with_threads(threads, || forward(&z, &c, &w))
                .map_err(|e| e.to_string())?
                .map_err(|e| e.to_string())?;
            Ok(y.samples.iter().map(|s| s.to_bits()).collect())
        };
        let first = run(1)?;
        outputs.push((i, first == run(1)? && first == run(2)?));
    }
    let decodes_exact = outputs.iter().all(|o| o.1);
    check(
        weights_exact && decodes_exact,
        format!(
            "weight file round trip bit-exact: {weights_exact}; repeated decodes byte-identical (all variants, 1 and 2 threads): {decodes_exact}"
        ),
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (
            1,
            "pseudo-QMF near-perfect reconstruction",
            pqmf_reconstruction(),
        ),
        (2, "iSTFT of STFT is the identity", stft_round_trip()),
        (3, "FFT paths match the naive DFT", dft_oracle()),
        (4, "loss correctness", loss_correctness()),
        (5, "length law", length_law()),
        (6, "multi-stream embeds multi-band", ms_embeds_mb()),
    ];
    let (speed, bottleneck) = speed_and_bottleneck();
    results.push((7, "speed ordering", speed));
    results.push((8, "conv-stack bottleneck", bottleneck));
    results.push((9, "determinism and portability", determinism()));

    let mut failed = 0;
    for (id, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS criterion {id}: {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {id}: {name}: {detail}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
