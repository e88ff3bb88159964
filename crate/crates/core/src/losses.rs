//! Multi-resolution STFT losses, full-band and per sub-band.
//!
//! Each resolution contributes a spectral-convergence term and a mean
//! absolute log-magnitude difference computed on Hann-windowed, uncentred
//! STFT magnitudes. Reports are directional: the reference comes first.

use std::fmt::Write as _;

use crate::dsp::{stft, FrameParams};
use crate::pqmf::{analyze, FilterBank};
use crate::{Error, Result};

/// Floor applied inside logarithms and norm denominators.
pub const MAGNITUDE_FLOOR: f64 = 1e-7;

/// One STFT resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resolution {
    pub fft_size: usize,
    pub win_length: usize,
    pub hop: usize,
}

/// STFT resolutions averaged by the multi-resolution loss, plus the term
/// weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolutionSet {
    resolutions: Vec<Resolution>,
    pub sc_weight: f64,
    pub mag_weight: f64,
}

impl ResolutionSet {
    pub fn new(resolutions: Vec<Resolution>) -> Result<Self> {
        if resolutions.is_empty() {
            return Err(Error::invalid("resolution set is empty"));
        }
        for r in &resolutions {
            if r.hop == 0 || r.win_length > r.fft_size || r.hop > r.win_length {
                return Err(Error::invalid(format!(
                    "resolution {r:?} needs 0 < hop <= win_length <= fft_size"
                )));
            }
        }
        Ok(Self {
            resolutions,
            sc_weight: 1.0,
            mag_weight: 1.0,
        })
    }

    /// The sub-band resolutions: FFT 683/384/171, window 300/150/60,
    /// hop 60/30/10.
    pub fn subband_default() -> Self {
        let r = |fft_size, win_length, hop| Resolution {
            fft_size,
            win_length,
            hop,
        };
        Self::new(vec![r(683, 300, 60), r(384, 150, 30), r(171, 60, 10)])
            .expect("constant resolutions are valid")
    }

    pub fn resolutions(&self) -> &[Resolution] {
        &self.resolutions
    }
}

/// Loss value with its per-resolution (and optionally per-band) breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub spectral_convergence: f64,
    pub log_magnitude: f64,
    pub total: f64,
    /// `(spectral_convergence, log_magnitude)` per resolution.
    pub per_resolution: Vec<(f64, f64)>,
    /// `(spectral_convergence, log_magnitude, total)` per band, sub-band
    /// losses only.
    pub per_band: Option<Vec<(f64, f64, f64)>>,
}

impl LossReport {
    /// Flat `key=value` lines in a fixed order. Values use Rust's shortest
    /// round-trip formatting, so equal reports render to equal text.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "total={}", self.total);
        let _ = writeln!(out, "spectral_convergence={}", self.spectral_convergence);
        let _ = writeln!(out, "log_magnitude={}", self.log_magnitude);
        let _ = writeln!(out, "resolutions={}", self.per_resolution.len());
        for (i, (sc, mag)) in self.per_resolution.iter().enumerate() {
            let _ = writeln!(out, "resolution.{i}.spectral_convergence={sc}");
            let _ = writeln!(out, "resolution.{i}.log_magnitude={mag}");
        }
        if let Some(bands) = &self.per_band {
            let _ = writeln!(out, "bands={}", bands.len());
            for (i, (sc, mag, total)) in bands.iter().enumerate() {
                let _ = writeln!(out, "band.{i}.spectral_convergence={sc}");
                let _ = writeln!(out, "band.{i}.log_magnitude={mag}");
                let _ = writeln!(out, "band.{i}.total={total}");
            }
        }
        out
    }
}

fn check_shapes(reference: &[f64], generated: &[f64]) -> Result<()> {
    if reference.len() != generated.len() {
        return Err(Error::invalid(format!(
            "magnitude shapes differ: {} vs {} cells",
            reference.len(),
            generated.len()
        )));
    }
    Ok(())
}

/// `||ref - gen||_F / max(||ref||_F, 1e-7)` over equally shaped magnitudes.
pub fn spectral_convergence(reference: &[f64], generated: &[f64]) -> Result<f64> {
    check_shapes(reference, generated)?;
    let diff: f64 = reference
        .iter()
        .zip(generated)
        .map(|(r, g)| (r - g) * (r - g))
        .sum();
    let norm: f64 = reference.iter().map(|r| r * r).sum();
    Ok(diff.sqrt() / norm.sqrt().max(MAGNITUDE_FLOOR))
}

/// Mean of `|log(max(ref, 1e-7)) - log(max(gen, 1e-7))|`; 0 for no cells.
pub fn log_stft_magnitude(reference: &[f64], generated: &[f64]) -> Result<f64> {
    check_shapes(reference, generated)?;
    if reference.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = reference
        .iter()
        .zip(generated)
        .map(|(r, g)| (r.max(MAGNITUDE_FLOOR).ln() - g.max(MAGNITUDE_FLOOR).ln()).abs())
        .sum();
    Ok(sum / reference.len() as f64)
}

fn magnitudes(x: &[f64], params: &FrameParams) -> Result<Vec<f64>> {
    Ok(stft(x, params, false)?.magnitude())
}

/// Spectral-convergence and log-magnitude terms averaged over `res`.
pub fn multires_stft_loss(
    reference: &[f64],
    generated: &[f64],
    res: &ResolutionSet,
) -> Result<LossReport> {
    if reference.len() != generated.len() {
        return Err(Error::invalid(format!(
            "signal lengths differ: {} vs {}",
            reference.len(),
            generated.len()
        )));
    }
    let per_resolution = res
        .resolutions
        .iter()
        .map(|r| {
            let params = FrameParams::hann(r.fft_size, r.hop, r.win_length)?;
            let ref_mag = magnitudes(reference, &params)?;
            let gen_mag = magnitudes(generated, &params)?;
            Ok((
                spectral_convergence(&ref_mag, &gen_mag)?,
                log_stft_magnitude(&ref_mag, &gen_mag)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = per_resolution.len() as f64;
    let sc = per_resolution.iter().map(|p| p.0).sum::<f64>() / n;
    let mag = per_resolution.iter().map(|p| p.1).sum::<f64>() / n;
    Ok(LossReport {
        spectral_convergence: sc,
        log_magnitude: mag,
        total: res.sc_weight * sc + res.mag_weight * mag,
        per_resolution,
        per_band: None,
    })
}

/// Multi-resolution loss on pseudo-QMF sub-bands, averaged over bands.
///
/// Both signals are analysed with `bank`; band `k` of the reference is
/// compared with band `k` of the generated signal. `per_resolution` holds
/// the band-averaged terms of each resolution.
pub fn subband_multires_loss(
    reference: &[f64],
    generated: &[f64],
    bank: &FilterBank,
    res: &ResolutionSet,
) -> Result<LossReport> {
    if reference.len() != generated.len() {
        return Err(Error::invalid(format!(
            "signal lengths differ: {} vs {}",
            reference.len(),
            generated.len()
        )));
    }
    let ref_bands = analyze(reference, 1.0, bank);
    let gen_bands = analyze(generated, 1.0, bank);
    let reports = ref_bands
        .bands
        .iter()
        .zip(&gen_bands.bands)
        .map(|(r, g)| multires_stft_loss(r, g, res))
        .collect::<Result<Vec<_>>>()?;
    let n = reports.len() as f64;
    let mean = |f: &dyn Fn(&LossReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let per_resolution = (0..res.resolutions.len())
        .map(|i| {
            (
                mean(&|r| r.per_resolution[i].0),
                mean(&|r| r.per_resolution[i].1),
            )
        })
        .collect();
    Ok(LossReport {
        spectral_convergence: mean(&|r| r.spectral_convergence),
        log_magnitude: mean(&|r| r.log_magnitude),
        total: mean(&|r| r.total),
        per_resolution,
        per_band: Some(
            reports
                .iter()
                .map(|r| (r.spectral_convergence, r.log_magnitude, r.total))
                .collect(),
        ),
    })
}
