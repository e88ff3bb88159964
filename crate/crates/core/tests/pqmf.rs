use std::f64::consts::PI;

use mbistft::pqmf::{
    analyze, build_filterbank, design_prototype, optimize_cutoff, reconstruction_error_db,
    synthesize, FilterBank, PrototypeSpec,
};
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

fn round_trip(x: &[f64], bank: &FilterBank) -> Vec<f64> {
    synthesize(&analyze(x, 22050.0, bank), bank).unwrap()
}

fn response(h: &[f64], w: f64) -> f64 {
    let (re, im) = h.iter().enumerate().fold((0.0, 0.0), |(re, im), (n, &c)| {
        (re + c * (w * n as f64).cos(), im - c * (w * n as f64).sin())
    });
    (re * re + im * im).sqrt()
}

#[test]
fn prototype_dc_gain_is_unity() {
    let p = design_prototype(&PrototypeSpec::default()).unwrap();
    let dc: f64 = p.iter().sum();
    assert!((dc - 1.0).abs() < 0.05, "sum p = {dc}");
    assert!((response(&p, 0.0) - dc).abs() < 1e-12);
}

#[test]
fn analysis_filters_centre_on_their_band() {
    let b = bank();
    let n = 4;
    let grid = 4096;
    for k in 0..n {
        let h = b.analysis(k);
        let samples: Vec<(f64, f64)> = (0..=grid)
            .map(|i| {
                let w = PI * i as f64 / grid as f64;
                (w, response(h, w).powi(2))
            })
            .collect();
        let energy: f64 = samples.iter().map(|s| s.1).sum();
        let centroid = samples.iter().map(|s| s.0 * s.1).sum::<f64>() / energy;
        let centre = PI * (k as f64 + 0.5) / n as f64;
        assert!(
            (centroid - centre).abs() <= PI / (8.0 * n as f64),
            "band {k}: centroid {centroid} vs {centre}"
        );
        let peak = samples.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
        let lo = PI * k as f64 / n as f64;
        let hi = PI * (k + 1) as f64 / n as f64;
        assert!(
            peak >= lo - 1e-9 && peak <= hi + 1e-9,
            "band {k}: peak {peak}"
        );
    }
}

#[test]
fn impulse_cascade_is_a_delay() {
    let b = bank();
    let mut x = vec![0.0; 256];
    x[0] = 1.0;
    let y = round_trip(&x, &b);
    let peak_at = (0..y.len())
        .max_by(|&i, &j| y[i].abs().total_cmp(&y[j].abs()))
        .unwrap();
    assert_eq!(peak_at, 62);
    assert!((y[62] - 1.0).abs() < 0.02);
    let residual = y
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != 62)
        .map(|(_, v)| v.abs())
        .fold(0.0, f64::max);
    assert!(residual <= 0.01 * y[62].abs(), "residual {residual}");
}

#[test]
fn white_noise_band_energies_are_balanced() {
    let b = bank();
    let s = analyze(&noise(44100, 3), 22050.0, &b);
    assert_eq!(s.band_rate, 22050.0 / 4.0);
    let energies: Vec<f64> = s
        .bands
        .iter()
        .map(|band| band.iter().map(|v| v * v).sum())
        .collect();
    let mean = energies.iter().sum::<f64>() / 4.0;
    for e in &energies {
        assert!((e - mean).abs() <= 0.25 * mean, "{energies:?}");
    }
}

#[test]
fn single_band_bank_is_a_near_delay_lowpass() {
    let spec = PrototypeSpec {
        bands: 1,
        cutoff_ratio: 0.5,
        ..PrototypeSpec::default()
    };
    let b = FilterBank::design(&spec).unwrap();
    assert_eq!(b.bands(), 1);
    let mut x = vec![0.0; 200];
    x[0] = 1.0;
    let y = round_trip(&x, &b);
    let peak_at = (0..y.len())
        .max_by(|&i, &j| y[i].abs().total_cmp(&y[j].abs()))
        .unwrap();
    assert_eq!(peak_at, 62);
}

#[test]
fn optimized_cutoff_reconstructs_noise() {
    let cutoff = optimize_cutoff(63, 4, 9.0).unwrap();
    assert!((cutoff - 0.142).abs() < 0.01, "cutoff {cutoff}");
    let b = FilterBank::design(&PrototypeSpec {
        cutoff_ratio: cutoff,
        ..PrototypeSpec::default()
    })
    .unwrap();
    let x = noise(22050, 5);
    assert!(reconstruction_error_db(&x, &round_trip(&x, &b), 62) <= -36.0);
    assert_eq!(optimize_cutoff(63, 4, 9.0).unwrap(), cutoff);
}

#[test]
fn two_band_optimum_sits_at_the_band_edge() {
    // the N=2 minimiser lies near 1/(2N) = 0.25, the same scaling as N=4
    let cutoff = optimize_cutoff(63, 2, 9.0).unwrap();
    assert!((cutoff - 0.25).abs() < 0.03, "cutoff {cutoff}");
}

#[test]
fn external_bank_round_trip() {
    let b = bank();
    let back = FilterBank::from_text(&b.to_text()).unwrap();
    let rebuilt = build_filterbank(b.prototype(), 4).unwrap();
    for k in 0..4 {
        assert_eq!(back.analysis(k), b.analysis(k));
        assert_eq!(rebuilt.synthesis(k), b.synthesis(k));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn analysis_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, c in -3.0f64..3.0) {
        let b = bank();
        let x = noise(301, seed);
        let y = noise(301, seed ^ 0xabcdef);
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + c * q).collect();
        let sx = analyze(&x, 1.0, &b);
        let sy = analyze(&y, 1.0, &b);
        let sm = analyze(&mix, 1.0, &b);
        for k in 0..4 {
            for j in 0..sm.band_len() {
                let want = a * sx.bands[k][j] + c * sy.bands[k][j];
                prop_assert!((sm.bands[k][j] - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn shapes_follow_the_band_count(len in 1usize..500, bands in 1usize..6) {
        let spec = PrototypeSpec {
            bands,
            cutoff_ratio: 0.5 / bands as f64,
            ..PrototypeSpec::default()
        };
        let b = FilterBank::design(&spec).unwrap();
        let x = noise(len, len as u64);
        let s = analyze(&x, 1.0, &b);
        prop_assert_eq!(s.band_count(), bands);
        prop_assert!(s.bands.iter().all(|band| band.len() == len.div_ceil(bands)));
        prop_assert_eq!(synthesize(&s, &b).unwrap().len(), bands * len.div_ceil(bands));
    }

    #[test]
    fn synthesis_reverses_analysis(taps in (4usize..40).prop_map(|t| 2 * t + 1), beta in 0.0f64..12.0) {
        let spec = PrototypeSpec { taps, bands: 4, cutoff_ratio: 0.13, kaiser_beta: beta };
        let b = FilterBank::design(&spec).unwrap();
        for k in 0..4 {
            let h = b.analysis(k);
            let g = b.synthesis(k);
            for n in 0..taps {
                prop_assert!((g[n] - h[taps - 1 - n]).abs() < 1e-15);
            }
        }
    }
}
