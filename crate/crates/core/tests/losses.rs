use std::f64::consts::PI;

use mbistft::losses::{
    log_stft_magnitude, multires_stft_loss, spectral_convergence, subband_multires_loss,
    Resolution, ResolutionSet,
};
use mbistft::pqmf::{analyze, synthesize, FilterBank, PrototypeSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn bank() -> FilterBank {
    FilterBank::design(&PrototypeSpec::default()).unwrap()
}

/// Brute-force magnitude STFT: periodic Hann of `win` samples, frames at
/// every `hop`, zero-padded to `fft`, naive DFT.
fn naive_magnitudes(x: &[f64], fft: usize, win: usize, hop: usize) -> Vec<f64> {
    let window: Vec<f64> = (0..win)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / win as f64).cos())
        .collect();
    let mut out = Vec::new();
    let mut start = 0;
    while start + win <= x.len() {
        for k in 0..fft / 2 + 1 {
            let (mut re, mut im) = (0.0, 0.0);
            for n in 0..win {
                let a = -2.0 * PI * ((k * n) % fft) as f64 / fft as f64;
                re += x[start + n] * window[n] * a.cos();
                im += x[start + n] * window[n] * a.sin();
            }
            out.push((re * re + im * im).sqrt());
        }
        start += hop;
    }
    out
}

fn naive_sc(r: &[f64], g: &[f64]) -> f64 {
    let d: f64 = r.iter().zip(g).map(|(a, b)| (a - b).powi(2)).sum();
    let n: f64 = r.iter().map(|a| a * a).sum();
    d.sqrt() / n.sqrt().max(1e-7)
}

fn naive_mag(r: &[f64], g: &[f64]) -> f64 {
    r.iter()
        .zip(g)
        .map(|(a, b)| (a.max(1e-7).ln() - b.max(1e-7).ln()).abs())
        .sum::<f64>()
        / r.len() as f64
}

#[test]
fn single_resolution_matches_brute_force() {
    let res = ResolutionSet::new(vec![Resolution {
        fft_size: 64,
        win_length: 64,
        hop: 16,
    }])
    .unwrap();
    for seed in 0..4 {
        let x = noise(256, seed);
        let y = noise(256, seed + 100);
        let report = multires_stft_loss(&x, &y, &res).unwrap();
        let rm = naive_magnitudes(&x, 64, 64, 16);
        let gm = naive_magnitudes(&y, 64, 64, 16);
        let (sc, mag) = (naive_sc(&rm, &gm), naive_mag(&rm, &gm));
        assert!((report.spectral_convergence - sc).abs() < 1e-5);
        assert!((report.log_magnitude - mag).abs() < 1e-5);
        assert!((report.total - (sc + mag)).abs() < 1e-5);
    }
}

#[test]
fn paper_resolutions_match_brute_force() {
    let res = ResolutionSet::subband_default();
    let x = noise(1200, 8);
    let y = noise(1200, 9);
    let report = multires_stft_loss(&x, &y, &res).unwrap();
    for (r, &(sc, mag)) in res.resolutions().iter().zip(&report.per_resolution) {
        let rm = naive_magnitudes(&x, r.fft_size, r.win_length, r.hop);
        let gm = naive_magnitudes(&y, r.fft_size, r.win_length, r.hop);
        assert!((sc - naive_sc(&rm, &gm)).abs() < 1e-5, "{r:?}");
        assert!((mag - naive_mag(&rm, &gm)).abs() < 1e-5, "{r:?}");
    }
}

#[test]
fn identical_signals_cost_nothing() {
    let res = ResolutionSet::subband_default();
    let x = noise(4096, 1);
    let full = multires_stft_loss(&x, &x, &res).unwrap();
    assert_eq!(full.total, 0.0);
    let sub = subband_multires_loss(&x, &x, &bank(), &res).unwrap();
    assert_eq!(sub.total, 0.0);
    let bands = sub.per_band.unwrap();
    assert_eq!(bands.len(), 4);
    assert!(bands.iter().all(|b| *b == (0.0, 0.0, 0.0)));
}

#[test]
fn report_is_directional() {
    let res = ResolutionSet::subband_default();
    let x = noise(4096, 2);
    let y: Vec<f64> = noise(4096, 3).iter().map(|v| 0.3 * v).collect();
    let fwd = multires_stft_loss(&x, &y, &res).unwrap();
    let rev = multires_stft_loss(&y, &x, &res).unwrap();
    assert!((fwd.spectral_convergence - rev.spectral_convergence).abs() > 1e-3);
}

#[test]
fn subband_loss_composes_exactly() {
    let res = ResolutionSet::subband_default();
    let b = bank();
    for seed in 0..3 {
        let x = noise(8000, 10 + seed);
        let y = noise(8000, 20 + seed);
        let report = subband_multires_loss(&x, &y, &b, &res).unwrap();
        let xs = analyze(&x, 22050.0, &b);
        let ys = analyze(&y, 22050.0, &b);
        let manual: Vec<_> = xs
            .bands
            .iter()
            .zip(&ys.bands)
            .map(|(r, g)| multires_stft_loss(r, g, &res).unwrap())
            .collect();
        let mean = |f: fn(&mbistft::losses::LossReport) -> f64| {
            manual.iter().map(f).sum::<f64>() / manual.len() as f64
        };
        assert_eq!(report.total, mean(|r| r.total));
        assert_eq!(
            report.spectral_convergence,
            mean(|r| r.spectral_convergence)
        );
        assert_eq!(report.log_magnitude, mean(|r| r.log_magnitude));
        for (band, m) in report.per_band.unwrap().iter().zip(&manual) {
            assert_eq!(band.2, m.total);
        }
    }
}

#[test]
fn dropping_a_band_raises_the_loss() {
    let res = ResolutionSet::subband_default();
    let b = bank();
    let x = noise(8000, 4);
    let mut s = analyze(&x, 22050.0, &b);
    let reference = synthesize(&s, &b).unwrap();
    s.bands[2].iter_mut().for_each(|v| *v = 0.0);
    let damaged = synthesize(&s, &b).unwrap();
    let same = subband_multires_loss(&reference, &reference, &b, &res).unwrap();
    let worse = subband_multires_loss(&reference, &damaged, &b, &res).unwrap();
    assert!(worse.total > same.total);
}

#[test]
fn text_report_round_trips_values() {
    let res = ResolutionSet::subband_default();
    let report = multires_stft_loss(&noise(2000, 1), &noise(2000, 2), &res).unwrap();
    let text = report.to_text();
    let total: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("total="))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(total, report.total);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn components_are_non_negative(seed in any::<u64>()) {
        let res = ResolutionSet::subband_default();
        let r = multires_stft_loss(&noise(1500, seed), &noise(1500, !seed), &res).unwrap();
        prop_assert!(r.spectral_convergence >= 0.0 && r.log_magnitude >= 0.0);
        prop_assert!(r.total.is_finite());
    }

    #[test]
    fn log_magnitude_of_scaled_copy_is_log_scale(seed in any::<u64>(), a in 0.05f64..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g: Vec<f64> = (0..64).map(|_| rng.gen_range(0.01..2.0)).collect();
        let r: Vec<f64> = g.iter().map(|v| a * v).collect();
        let m = log_stft_magnitude(&r, &g).unwrap();
        prop_assert!((m - a.ln().abs()).abs() < 1e-12);
    }

    #[test]
    fn spectral_convergence_zero_iff_equal(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r: Vec<f64> = (0..32).map(|_| rng.gen_range(0.0..1.0)).collect();
        prop_assert_eq!(spectral_convergence(&r, &r).unwrap(), 0.0);
        let mut g = r.clone();
        g[5] += 0.5;
        prop_assert!(spectral_convergence(&r, &g).unwrap() > 0.0);
    }
}
