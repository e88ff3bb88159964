//! Pseudo-QMF cosine-modulated filter banks.
//!
//! A Kaiser-windowed sinc prototype `p` is modulated into `N` analysis
//! filters `h_k` and synthesis filters `g_k`:
//!
//! ```text
//! h_k[n] = 2 p[n] cos((pi / N)(k + 0.5)(n - (L - 1) / 2) + (-1)^k pi / 4)
//! g_k[n] = 2 p[n] cos((pi / N)(k + 0.5)(n - (L - 1) / 2) - (-1)^k pi / 4)
//! ```
//!
//! Analysis filters causally and keeps every `N`th sample; synthesis inserts
//! `N - 1` zeros between sub-band samples, filters with `N g_k` and sums the
//! bands. The cascade approximates a pure delay of `L - 1` samples.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::{Error, Result};

/// Prototype lowpass design parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrototypeSpec {
    /// Filter length; odd so the prototype has an integer centre tap.
    pub taps: usize,
    pub bands: usize,
    /// Cutoff as a fraction of Nyquist, so the passband edge is
    /// `pi * cutoff_ratio` rad/sample.
    pub cutoff_ratio: f64,
    pub kaiser_beta: f64,
}

impl Default for PrototypeSpec {
    fn default() -> Self {
        Self {
            taps: 63,
            bands: 4,
            cutoff_ratio: 0.142,
            kaiser_beta: 9.0,
        }
    }
}

impl PrototypeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.taps % 2 == 0 {
            return Err(Error::invalid(format!(
                "prototype length must be odd, got {}",
                self.taps
            )));
        }
        if self.bands == 0 {
            return Err(Error::invalid("bank needs at least one band"));
        }
        if self.taps < 2 * self.bands {
            return Err(Error::invalid(format!(
                "{} taps are too few for {} bands",
                self.taps, self.bands
            )));
        }
        if !(self.cutoff_ratio > 0.0 && self.cutoff_ratio < 1.0) {
            return Err(Error::invalid(format!(
                "cutoff ratio {} outside (0, 1)",
                self.cutoff_ratio
            )));
        }
        if !(self.kaiser_beta >= 0.0 && self.kaiser_beta.is_finite()) {
            return Err(Error::invalid(
                "kaiser beta must be finite and non-negative",
            ));
        }
        Ok(())
    }
}

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > sum * 1e-17 {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

/// Symmetric Kaiser window of `len` points.
pub fn kaiser_window(len: usize, beta: f64) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let denom = bessel_i0(beta);
    let m = (len - 1) as f64;
    (0..len)
        .map(|n| {
            let r = 2.0 * n as f64 / m - 1.0;
            bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / denom
        })
        .collect()
}

fn sinc(t: f64) -> f64 {
    if t == 0.0 {
        1.0
    } else {
        (PI * t).sin() / (PI * t)
    }
}

/// Kaiser-windowed sinc lowpass,
/// `p[n] = c sinc(c (n - (L - 1) / 2)) kaiser(n; beta)`.
pub fn design_prototype(spec: &PrototypeSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let centre = (spec.taps / 2) as isize;
    let window = kaiser_window(spec.taps, spec.kaiser_beta);
    let c = spec.cutoff_ratio;
    let half: Vec<f64> = (0..=centre as usize)
        .map(|n| c * sinc(c * (n as isize - centre) as f64) * window[n])
        .collect();
    // Mirror the first half so p[n] == p[L - 1 - n] bit for bit.
    Ok((0..spec.taps)
        .map(|n| {
            half[if n as isize <= centre {
                n
            } else {
                spec.taps - 1 - n
            }]
        })
        .collect())
}

/// Analysis and synthesis filters derived from one prototype.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    prototype: Vec<f64>,
    analysis: Vec<Vec<f64>>,
    synthesis: Vec<Vec<f64>>,
    bands: usize,
    delay: usize,
    design: Option<PrototypeSpec>,
}

/// Modulates `prototype` into an `bands`-band pseudo-QMF bank.
pub fn build_filterbank(prototype: &[f64], bands: usize) -> Result<FilterBank> {
    if prototype.is_empty() {
        return Err(Error::invalid("prototype is empty"));
    }
    if bands == 0 {
        return Err(Error::invalid("bank needs at least one band"));
    }
    let taps = prototype.len();
    let centre = (taps as f64 - 1.0) / 2.0;
    let modulate = |k: usize, sign: f64| -> Vec<f64> {
        let phase = if k % 2 == 0 { PI / 4.0 } else { -PI / 4.0 };
        prototype
            .iter()
            .enumerate()
            .map(|(n, &p)| {
                let arg = PI / bands as f64 * (k as f64 + 0.5) * (n as f64 - centre);
                2.0 * p * (arg + sign * phase).cos()
            })
            .collect()
    };
    Ok(FilterBank {
        prototype: prototype.to_vec(),
        analysis: (0..bands).map(|k| modulate(k, 1.0)).collect(),
        synthesis: (0..bands).map(|k| modulate(k, -1.0)).collect(),
        bands,
        delay: taps - 1,
        design: None,
    })
}

impl FilterBank {
    /// Designs the prototype from `spec` and modulates it.
    pub fn design(spec: &PrototypeSpec) -> Result<Self> {
        let prototype = design_prototype(spec)?;
        let mut bank = build_filterbank(&prototype, spec.bands)?;
        bank.design = Some(*spec);
        Ok(bank)
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn taps(&self) -> usize {
        self.prototype.len()
    }

    /// Delay in samples of analysis followed by synthesis.
    pub fn delay(&self) -> usize {
        self.delay
    }

    pub fn prototype(&self) -> &[f64] {
        &self.prototype
    }

    pub fn analysis(&self, band: usize) -> &[f64] {
        &self.analysis[band]
    }

    pub fn synthesis(&self, band: usize) -> &[f64] {
        &self.synthesis[band]
    }

    /// Design parameters, if the bank came from [`FilterBank::design`].
    pub fn spec(&self) -> Option<&PrototypeSpec> {
        self.design.as_ref()
    }

    /// Text form: a `pqmf v1 <taps> <N> <cutoff> <beta>` header, then the
    /// prototype, the `N` analysis and the `N` synthesis filters, one filter
    /// per line of whitespace-separated reals. Banks built from a bare
    /// prototype write `NaN` for the unknown cutoff and beta.
    pub fn to_text(&self) -> String {
        let (cutoff, beta) = self
            .design
            .map_or((f64::NAN, f64::NAN), |s| (s.cutoff_ratio, s.kaiser_beta));
        let mut out = format!(
            "pqmf v1 {} {} {} {}\n",
            self.taps(),
            self.bands,
            cutoff,
            beta
        );
        let rows = std::iter::once(&self.prototype)
            .chain(&self.analysis)
            .chain(&self.synthesis);
        for row in rows {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty filter-bank file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 6 || fields[0] != "pqmf" || fields[1] != "v1" {
            return Err(Error::Format(format!("bad filter-bank header `{header}`")));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Format(format!("`{s}` is not a number")))
        };
        let int = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::Format(format!("`{s}` is not a count")))
        };
        let taps = int(fields[2])?;
        let bands = int(fields[3])?;
        let (cutoff, beta) = (num(fields[4])?, num(fields[5])?);
        if taps == 0 || bands == 0 {
            return Err(Error::Format("taps and bands must be positive".into()));
        }
        let values = lines
            .flat_map(str::split_whitespace)
            .map(num)
            .collect::<Result<Vec<f64>>>()?;
        let expected = taps * (1 + 2 * bands);
        if values.len() != expected {
            return Err(Error::Format(format!(
                "expected {expected} coefficients, found {}",
                values.len()
            )));
        }
        let mut rows = values.chunks_exact(taps).map(<[f64]>::to_vec);
        let prototype = rows.next().unwrap_or_default();
        let analysis: Vec<Vec<f64>> = rows.by_ref().take(bands).collect();
        let synthesis: Vec<Vec<f64>> = rows.collect();
        let design = (!cutoff.is_nan() && !beta.is_nan()).then_some(PrototypeSpec {
            taps,
            bands,
            cutoff_ratio: cutoff,
            kaiser_beta: beta,
        });
        Ok(Self {
            prototype,
            analysis,
            synthesis,
            bands,
            delay: taps - 1,
            design,
        })
    }
}

/// `N` equal-length decimated band signals.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandSignals {
    pub bands: Vec<Vec<f64>>,
    pub band_rate: f64,
}

impl SubbandSignals {
    pub fn band_count(&self) -> usize {
        self.bands.len()
    }

    /// Samples per band.
    pub fn band_len(&self) -> usize {
        self.bands.first().map_or(0, Vec::len)
    }
}

/// Splits `x` into `N` sub-bands of `ceil(len / N)` samples each.
///
/// Band `k` sample `j` is the causal analysis output
/// `sum_m h_k[m] x[jN - m]`, with `x` zero-padded to a multiple of `N`.
pub fn analyze(x: &[f64], sample_rate: f64, bank: &FilterBank) -> SubbandSignals {
    let n_bands = bank.bands;
    let sub_len = x.len().div_ceil(n_bands);
    let bands = bank
        .analysis
        .iter()
        .map(|h| {
            (0..sub_len)
                .map(|j| {
                    let t = j * n_bands;
                    h.iter()
                        .take(t + 1)
                        .enumerate()
                        .filter_map(|(m, &c)| x.get(t - m).map(|&v| c * v))
                        .sum()
                })
                .collect()
        })
        .collect();
    SubbandSignals {
        bands,
        band_rate: sample_rate / n_bands as f64,
    }
}

/// Recombines sub-bands into a full-band signal of `N * band_len` samples.
///
/// Computes `sum_k (N g_k) * upsample_N(band_k)` without materialising the
/// zero-stuffed signal: only taps aligned with a non-zero sample contribute.
pub fn synthesize(s: &SubbandSignals, bank: &FilterBank) -> Result<Vec<f64>> {
    let n_bands = bank.bands;
    if s.bands.len() != n_bands {
        return Err(Error::invalid(format!(
            "{} sub-bands given to a {n_bands}-band bank",
            s.bands.len()
        )));
    }
    let sub_len = s.band_len();
    if s.bands.iter().any(|b| b.len() != sub_len) {
        return Err(Error::invalid("sub-bands differ in length"));
    }
    let gain = n_bands as f64;
    let mut out = vec![0.0; n_bands * sub_len];
    for (band, g) in s.bands.iter().zip(&bank.synthesis) {
        for (t, y) in out.iter_mut().enumerate() {
            // taps m with (t - m) a multiple of N and within the signal
            let mut acc = 0.0;
            let mut m = t % n_bands;
            while m < g.len() && m <= t {
                acc += g[m] * band[(t - m) / n_bands];
                m += n_bands;
            }
            *y += gain * acc;
        }
    }
    Ok(out)
}

/// Reconstruction error in dB of `y` against `x` delayed by `delay` samples,
/// `20 log10(||y - delay(x)|| / ||x||)` over the length of `y`.
pub fn reconstruction_error_db(x: &[f64], y: &[f64], delay: usize) -> f64 {
    let err: f64 = y
        .iter()
        .enumerate()
        .map(|(n, &v)| {
            let r = n
                .checked_sub(delay)
                .and_then(|i| x.get(i))
                .copied()
                .unwrap_or(0.0);
            (v - r) * (v - r)
        })
        .sum();
    let energy: f64 = x.iter().map(|v| v * v).sum();
    10.0 * (err / energy).log10()
}

/// Squared error of the cascade against a delayed unit impulse, summed over
/// the `N` impulse positions that exercise every decimation phase.
fn impulse_error(bank: &FilterBank) -> f64 {
    let n = bank.bands;
    let len = (bank.taps() * 2 + n).div_ceil(n) * n;
    (0..n)
        .map(|q| {
            let mut x = vec![0.0; len];
            x[q] = 1.0;
            let y = synthesize(&analyze(&x, 1.0, bank), bank).expect("band count matches");
            y.iter()
                .enumerate()
                .map(|(t, &v)| {
                    let want = if t == q + bank.delay { 1.0 } else { 0.0 };
                    (v - want) * (v - want)
                })
                .sum::<f64>()
        })
        .sum()
}

/// Grid search for the prototype cutoff that minimises impulse
/// reconstruction error through [`analyze`] and [`synthesize`].
///
/// A coarse grid spans `[0.5, 1.9] / (2N)` in steps of `1e-3`; the error
/// minimum is narrow (a few `1e-4` wide), so a second pass scans `1e-5`
/// steps within one coarse step of the coarse winner. The first minimum
/// wins ties, so the result is deterministic.
pub fn optimize_cutoff(taps: usize, bands: usize, kaiser_beta: f64) -> Result<f64> {
    PrototypeSpec {
        taps,
        bands,
        cutoff_ratio: 0.5 / bands.max(1) as f64,
        kaiser_beta,
    }
    .validate()?;
    let base = 1.0 / (2.0 * bands as f64);
    let coarse = grid_min(taps, bands, kaiser_beta, 0.5 * base, 1.9 * base, 1e-3)?;
    grid_min(taps, bands, kaiser_beta, coarse - 1e-3, coarse + 1e-3, 1e-5)
}

fn grid_min(
    taps: usize,
    bands: usize,
    kaiser_beta: f64,
    lo: f64,
    hi: f64,
    step: f64,
) -> Result<f64> {
    let steps = ((hi - lo) / step + 1e-9).floor() as usize;
    let mut best = (f64::INFINITY, lo);
    for i in 0..=steps {
        let cutoff = lo + i as f64 * step;
        if cutoff <= 0.0 || cutoff >= 1.0 {
            continue;
        }
        let bank = FilterBank::design(&PrototypeSpec {
            taps,
            bands,
            cutoff_ratio: cutoff,
            kaiser_beta,
        })?;
        let err = impulse_error(&bank);
        if err < best.0 {
            best = (err, cutoff);
        }
    }
    Ok(best.1)
}
