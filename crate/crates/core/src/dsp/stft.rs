use num_complex::Complex64;

use super::fft::RealFft;
use super::window::hann_window;
use crate::{Error, Result};

/// Floor applied to the summed squared-window envelope before division.
pub const WINDOW_SUM_FLOOR: f64 = 1e-8;

/// Framing parameters shared by [`stft`] and [`istft`].
///
/// Frames of `win_length` samples start every `hop` samples, are multiplied
/// by `window` and zero-padded up to `fft_size` before the transform.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameParams {
    fft_size: usize,
    hop: usize,
    win_length: usize,
    window: Vec<f64>,
}

impl FrameParams {
    pub fn new(fft_size: usize, hop: usize, win_length: usize, window: Vec<f64>) -> Result<Self> {
        if fft_size == 0 || hop == 0 || win_length == 0 {
            return Err(Error::invalid(
                "fft_size, hop and win_length must be positive",
            ));
        }
        if win_length > fft_size {
            return Err(Error::invalid(format!(
                "win_length {win_length} exceeds fft_size {fft_size}"
            )));
        }
        if hop > win_length {
            return Err(Error::invalid(format!(
                "hop {hop} exceeds win_length {win_length}"
            )));
        }
        if window.len() != win_length {
            return Err(Error::invalid(format!(
                "window has {} values, expected {win_length}",
                window.len()
            )));
        }
        if window.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::invalid("window values must lie in [0, 1]"));
        }
        Ok(Self {
            fft_size,
            hop,
            win_length,
            window,
        })
    }

    /// Parameters with a periodic Hann window of `win_length` points.
    pub fn hann(fft_size: usize, hop: usize, win_length: usize) -> Result<Self> {
        Self::new(fft_size, hop, win_length, hann_window(win_length.max(1))?)
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn win_length(&self) -> usize {
        self.win_length
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Number of frames [`stft`] produces for `len` input samples.
    pub fn frame_count(&self, len: usize, center: bool) -> usize {
        let padded = if center && len > 0 {
            len + 2 * (self.fft_size / 2)
        } else {
            len
        };
        if padded < self.win_length {
            0
        } else {
            1 + (padded - self.win_length) / self.hop
        }
    }

    /// Smallest value of the steady-state squared-window overlap envelope.
    ///
    /// A value well above [`WINDOW_SUM_FLOOR`] means overlap-add synthesis
    /// is invertible for every sample covered by at least
    /// `win_length / hop` frames.
    pub fn min_overlap_envelope(&self) -> f64 {
        (0..self.hop)
            .map(|phase| {
                self.window
                    .iter()
                    .skip(phase)
                    .step_by(self.hop)
                    .map(|w| w * w)
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Frames x bins complex spectrum, frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub bins: usize,
    pub frames: usize,
    pub data: Vec<Complex64>,
}

impl ComplexSpectrogram {
    pub fn frame(&self, f: usize) -> &[Complex64] {
        &self.data[f * self.bins..(f + 1) * self.bins]
    }

    /// `|z|` per cell, frame-major.
    pub fn magnitude(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.norm()).collect()
    }

    pub fn to_mag_phase(&self) -> MagPhaseSpectrogram {
        MagPhaseSpectrogram {
            bins: self.bins,
            frames: self.frames,
            magnitude: self.magnitude(),
            phase: self.data.iter().map(|z| z.im.atan2(z.re)).collect(),
        }
    }
}

/// Frames x bins magnitude and phase, frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MagPhaseSpectrogram {
    pub bins: usize,
    pub frames: usize,
    pub magnitude: Vec<f64>,
    pub phase: Vec<f64>,
}

impl MagPhaseSpectrogram {
    pub fn zeros(bins: usize, frames: usize) -> Self {
        Self {
            bins,
            frames,
            magnitude: vec![0.0; bins * frames],
            phase: vec![0.0; bins * frames],
        }
    }

    pub fn to_complex(&self) -> ComplexSpectrogram {
        ComplexSpectrogram {
            bins: self.bins,
            frames: self.frames,
            data: self
                .magnitude
                .iter()
                .zip(&self.phase)
                .map(|(&m, &p)| Complex64::from_polar(m, p))
                .collect(),
        }
    }
}

/// Mono samples with their sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("waveform contains non-finite samples"));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Mirror index into `0..len` without repeating the edge sample.
fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = i.rem_euclid(period);
    if m < len as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

fn reflect_pad(x: &[f64], pad: usize) -> Vec<f64> {
    let len = x.len();
    (0..len + 2 * pad)
        .map(|i| x[reflect_index(i as isize - pad as isize, len)])
        .collect()
}

/// Short-time Fourier transform.
///
/// With `center`, the signal is reflect-padded by `fft_size / 2` on both ends
/// so frame `f` is centred on input sample `f * hop`. An empty input gives a
/// spectrogram with zero frames.
pub fn stft(x: &[f64], params: &FrameParams, center: bool) -> Result<ComplexSpectrogram> {
    let bins = params.bins();
    let frames = params.frame_count(x.len(), center);
    if frames == 0 {
        return Ok(ComplexSpectrogram {
            bins,
            frames: 0,
            data: Vec::new(),
        });
    }
    let padded;
    let signal = if center {
        padded = reflect_pad(x, params.fft_size / 2);
        &padded[..]
    } else {
        x
    };
    let plan = RealFft::new(params.fft_size)?;
    let mut buf = vec![0.0; params.fft_size];
    let mut data = vec![Complex64::new(0.0, 0.0); frames * bins];
    for (f, out) in data.chunks_exact_mut(bins).enumerate() {
        let seg = &signal[f * params.hop..f * params.hop + params.win_length];
        for ((b, s), w) in buf.iter_mut().zip(seg).zip(&params.window) {
            *b = s * w;
        }
        plan.forward(&buf, out)?;
    }
    Ok(ComplexSpectrogram { bins, frames, data })
}

/// Output shaping for [`istft`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IstftOptions {
    /// Drop the `fft_size / 2` leading samples a centred [`stft`] added.
    pub center: bool,
    /// Trim or zero-pad the result to exactly this many samples.
    pub target_len: Option<usize>,
}

/// Inverse STFT by weighted overlap-add.
///
/// Each frame is inverse transformed from `magnitude * e^{j phase}`, the
/// first `win_length` samples are windowed and overlap-added at `hop`, and
/// the sum is divided by the squared-window envelope (floored at
/// [`WINDOW_SUM_FLOOR`]). Without options the result has
/// `(frames - 1) * hop + win_length` samples.
pub fn istft(
    spec: &MagPhaseSpectrogram,
    params: &FrameParams,
    opts: IstftOptions,
) -> Result<Vec<f64>> {
    if spec.bins != params.bins() {
        return Err(Error::invalid(format!(
            "spectrogram has {} bins, fft size {} needs {}",
            spec.bins,
            params.fft_size,
            params.bins()
        )));
    }
    if spec.magnitude.len() != spec.bins * spec.frames || spec.phase.len() != spec.magnitude.len() {
        return Err(Error::invalid(
            "spectrogram data does not match frames x bins",
        ));
    }
    let mut out = overlap_add(spec, params)?;
    if opts.center {
        let cut = (params.fft_size / 2).min(out.len());
        out.drain(..cut);
    }
    if let Some(len) = opts.target_len {
        out.resize(len, 0.0);
    }
    Ok(out)
}

fn overlap_add(spec: &MagPhaseSpectrogram, params: &FrameParams) -> Result<Vec<f64>> {
    if spec.frames == 0 {
        return Ok(Vec::new());
    }
    let (hop, win) = (params.hop, params.win_length);
    let len = (spec.frames - 1) * hop + win;
    let plan = RealFft::new(params.fft_size)?;
    let mut acc = vec![0.0; len];
    let mut env = vec![0.0; len];
    let mut bins = vec![Complex64::new(0.0, 0.0); spec.bins];
    let mut frame = vec![0.0; params.fft_size];
    for f in 0..spec.frames {
        let cells = f * spec.bins..(f + 1) * spec.bins;
        for ((b, &m), &p) in bins
            .iter_mut()
            .zip(&spec.magnitude[cells.clone()])
            .zip(&spec.phase[cells])
        {
            *b = Complex64::from_polar(m, p);
        }
        plan.inverse(&bins, &mut frame)?;
        let start = f * hop;
        for (n, &w) in params.window.iter().enumerate() {
            acc[start + n] += frame[n] * w;
            env[start + n] += w * w;
        }
    }
    for (a, e) in acc.iter_mut().zip(&env) {
        *a /= e.max(WINDOW_SUM_FLOOR);
    }
    Ok(acc)
}
