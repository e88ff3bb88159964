//! Forward passes of the four decoder variants.
//!
//! Every variant starts with the same HiFi-GAN style stack: a 7-tap input
//! convolution, then per upsampling stage a leaky ReLU, a transposed
//! convolution that halves the channel count, and a multi-receptive-field
//! fusion (the mean of residual branches with kernel sizes 3, 7 and 11).
//! What follows depends on the variant:
//!
//! * [`DecoderVariant::FullConv`] projects to one channel and applies `tanh`.
//! * [`DecoderVariant::Istft`] projects to one magnitude/phase spectrogram
//!   and inverts it with a 16/4/16 iSTFT.
//! * [`DecoderVariant::MultiBandIstft`] projects to `N` spectrograms, inverts
//!   each and recombines the sub-bands with a fixed pseudo-QMF bank.
//! * [`DecoderVariant::MultiStreamIstft`] does the same, but recombines the
//!   zero-stuffed streams with a learned `N -> 1` causal filter.
//!
//! All variants emit exactly 256 samples per latent frame.

mod config;
mod conv;
mod latent;
mod weights;

use std::f64::consts::PI;
use std::time::{Duration, Instant};

pub use config::{DecoderConfig, DecoderConfigBuilder, DecoderVariant, IstftShape, Scale};
pub use conv::{conv1d, conv_transpose1d, Kernel, Padding, Signal};
pub use latent::LatentFeatures;
pub use weights::{init_random, init_random_with_bank_filter, DecoderWeights, Tensor};

use crate::dsp::{istft, FrameParams, IstftOptions, MagPhaseSpectrogram, Waveform};
use crate::par::Execution;
use crate::pqmf::{synthesize, FilterBank, SubbandSignals};
use crate::{Error, Result, SAMPLE_RATE};
use config::{POST_KERNEL, PRE_KERNEL};
use conv::{conv1d_with, conv_transpose1d_with};

/// Slope of the leaky ReLUs inside the stack.
const STACK_SLOPE: f64 = 0.1;
/// Slope of the leaky ReLU before the output projection.
const POST_SLOPE: f64 = 0.01;
/// Raw log-magnitudes are clamped to `[-LOG_MAG_LIMIT, LOG_MAG_LIMIT]`.
const LOG_MAG_LIMIT: f64 = 10.0;

/// Wall time spent in each part of one forward pass.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimes {
    /// Input convolution, upsampling and residual blocks.
    pub resblocks: Duration,
    /// Output projection (and `tanh` or the magnitude/phase mapping).
    pub head: Duration,
    pub istft: Duration,
    /// Sub-band or stream recombination.
    pub band_combination: Duration,
}

impl StageTimes {
    pub fn total(&self) -> Duration {
        self.resblocks + self.head + self.istft + self.band_combination
    }
}

struct Conv {
    kernel: Kernel,
    bias: Vec<f64>,
}

impl Conv {
    fn load(weights: &DecoderWeights, prefix: &str) -> Result<Self> {
        let w = weights.get(&format!("{prefix}.weight"))?;
        let b = weights.get(&format!("{prefix}.bias"))?;
        Ok(Self {
            kernel: Kernel::new([w.shape[0], w.shape[1], w.shape[2]], w.to_f64())?,
            bias: b.to_f64(),
        })
    }
}

struct Branch {
    kernel_size: usize,
    convs1: Vec<Conv>,
    convs2: Vec<Conv>,
}

struct Stage {
    scale: usize,
    up: Conv,
    branches: Vec<Branch>,
}

/// A decoder with its weights unpacked for computation.
///
/// Holds no mutable state; one instance can serve concurrent
/// [`forward`](Self::forward) calls.
pub struct Decoder {
    config: DecoderConfig,
    pre: Conv,
    stages: Vec<Stage>,
    post: Conv,
    frame_params: Option<FrameParams>,
    bank: Option<FilterBank>,
    /// Multi-stream filter as a transposed-convolution kernel, `[N][1][taps]`.
    ms_filter: Option<Kernel>,
    exec: Execution,
}

impl Decoder {
    /// Validates `weights` against `config` (layer plan first, then the
    /// fingerprint) and prepares the layers.
    pub fn new(config: &DecoderConfig, weights: &DecoderWeights) -> Result<Self> {
        weights.validate(config)?;
        let dilations = config.resblock_dilations();
        let stages = config
            .upsample_scales()
            .iter()
            .enumerate()
            .map(|(i, &scale)| {
                let branches = config
                    .resblock_kernel_sizes()
                    .iter()
                    .enumerate()
                    .map(|(j, &kernel_size)| {
                        let convs = |name: &str| {
                            (0..dilations.len())
                                .map(|d| {
                                    Conv::load(weights, &format!("resblocks.{i}.{j}.{name}.{d}"))
                                })
                                .collect::<Result<Vec<_>>>()
                        };
                        Ok(Branch {
                            kernel_size,
                            convs1: convs("convs1")?,
                            convs2: convs("convs2")?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Stage {
                    scale,
                    up: Conv::load(weights, &format!("ups.{i}"))?,
                    branches,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let variant = config.variant();
        let frame_params = if variant.uses_istft() {
            let s = config.istft();
            Some(FrameParams::hann(s.fft_size, s.hop, s.win_length)?)
        } else {
            None
        };
        let bank = if variant == DecoderVariant::MultiBandIstft {
            Some(FilterBank::design(config.pqmf())?)
        } else {
            None
        };
        let ms_filter = if variant == DecoderVariant::MultiStreamIstft {
            let w = weights.get("ms_filter.weight")?;
            Some(Kernel::new([w.shape[1], 1, w.shape[2]], w.to_f64())?)
        } else {
            None
        };

        Ok(Self {
            config: config.clone(),
            pre: Conv::load(weights, "conv_pre")?,
            stages,
            post: Conv::load(weights, "conv_post")?,
            frame_params,
            bank,
            ms_filter,
            exec: Execution::default(),
        })
    }

    /// Sets how tiles inside each convolution are scheduled. The output
    /// does not depend on it.
    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.config
    }

    pub fn execution(&self) -> Execution {
        self.exec
    }

    pub fn forward(&self, z: &LatentFeatures) -> Result<Waveform> {
        self.forward_timed(z).map(|(w, _)| w)
    }

    /// Forward pass plus the wall time of each stage.
    pub fn forward_timed(&self, z: &LatentFeatures) -> Result<(Waveform, StageTimes)> {
        if z.channels() != self.config.latent_channels() {
            return Err(Error::invalid(format!(
                "latent has {} channels, decoder expects {}",
                z.channels(),
                self.config.latent_channels()
            )));
        }
        let mut times = StageTimes::default();
        let clock = Instant::now();
        let input = Signal::new(z.channels(), z.frames(), z.transposed())?;
        let x = self.input_conv(&input)?;
        let x = self.resblock_stack(&x)?;
        times.resblocks = clock.elapsed();

        let samples = match self.config.variant() {
            DecoderVariant::FullConv => {
                let clock = Instant::now();
                let y = self.projection(&x)?;
                let out: Vec<f64> = y.data.iter().map(|v| v.tanh()).collect();
                times.head = clock.elapsed();
                out
            }
            _ => {
                let clock = Instant::now();
                let specs = self.mag_phase_head(&x)?;
                times.head = clock.elapsed();

                let clock = Instant::now();
                let bands = self.invert(&specs)?;
                times.istft = clock.elapsed();

                let clock = Instant::now();
                let out = self.combine(bands)?;
                times.band_combination = clock.elapsed();
                out
            }
        };
        Ok((Waveform::new(samples, SAMPLE_RATE)?, times))
    }

    fn input_conv(&self, input: &Signal) -> Result<Signal> {
        let pad = Padding::same(PRE_KERNEL, 1);
        conv1d_with(
            input,
            &self.pre.kernel,
            Some(&self.pre.bias),
            1,
            pad,
            None,
            self.exec,
        )
    }

    /// Upsampling stages over the input-convolution output: per stage a
    /// leaky ReLU, the transposed convolution and the residual-branch mean.
    pub fn resblock_stack(&self, features: &Signal) -> Result<Signal> {
        let expected = self.config.initial_channels();
        if features.channels != expected {
            return Err(Error::invalid(format!(
                "stack input has {} channels, stage plan starts with {expected}",
                features.channels
            )));
        }
        let mut x = features.clone();
        for stage in &self.stages {
            let s = stage.scale;
            x = conv_transpose1d_with(
                &x,
                &stage.up.kernel,
                Some(&stage.up.bias),
                s,
                s / 2,
                Some(STACK_SLOPE),
                self.exec,
            )?;
            x = self.fuse(&x, &stage.branches)?;
        }
        Ok(x)
    }

    fn fuse(&self, x: &Signal, branches: &[Branch]) -> Result<Signal> {
        let dilations = self.config.resblock_dilations();
        let mut sum = Signal::zeros(x.channels, x.frames);
        for branch in branches {
            let k = branch.kernel_size;
            let mut h = x.clone();
            for ((c1, c2), &d) in branch.convs1.iter().zip(&branch.convs2).zip(dilations) {
                let t = conv1d_with(
                    &h,
                    &c1.kernel,
                    Some(&c1.bias),
                    d,
                    Padding::same(k, d),
                    Some(STACK_SLOPE),
                    self.exec,
                )?;
                let t = conv1d_with(
                    &t,
                    &c2.kernel,
                    Some(&c2.bias),
                    1,
                    Padding::same(k, 1),
                    Some(STACK_SLOPE),
                    self.exec,
                )?;
                for (a, b) in h.data.iter_mut().zip(&t.data) {
                    *a += b;
                }
            }
            for (a, b) in sum.data.iter_mut().zip(&h.data) {
                *a += b;
            }
        }
        let n = branches.len() as f64;
        for v in &mut sum.data {
            *v /= n;
        }
        Ok(sum)
    }

    /// Final leaky ReLU and 7-tap projection. The spectral head pads by
    /// reflection, the waveform head with zeros.
    fn projection(&self, x: &Signal) -> Result<Signal> {
        let half = (POST_KERNEL - 1) / 2;
        let pad = if self.config.variant().uses_istft() {
            Padding::Reflect {
                left: half,
                right: half,
            }
        } else {
            Padding::Zero {
                left: half,
                right: half,
            }
        };
        conv1d_with(
            x,
            &self.post.kernel,
            Some(&self.post.bias),
            1,
            pad,
            Some(POST_SLOPE),
            self.exec,
        )
    }

    /// Projects stack features to one magnitude/phase spectrogram per band.
    ///
    /// The first half of the projected channels hold band-major raw
    /// log-magnitudes, mapped through `exp(clamp(raw, -10, 10))`; the
    /// second half hold raw phases, mapped through `pi * sin(raw)`.
    pub fn mag_phase_head(&self, features: &Signal) -> Result<Vec<MagPhaseSpectrogram>> {
        if !self.config.variant().uses_istft() {
            return Err(Error::invalid(
                "the convolutional decoder has no spectral head",
            ));
        }
        let raw = self.projection(features)?;
        Ok(raw_to_spectrograms(
            &raw,
            self.config.bands(),
            self.config.istft().bins(),
        ))
    }

    fn invert(&self, specs: &[MagPhaseSpectrogram]) -> Result<Vec<Vec<f64>>> {
        let params = self
            .frame_params
            .as_ref()
            .expect("iSTFT variants carry frame parameters");
        let s = self.config.istft();
        let offset = (s.win_length - s.hop) / 2;
        self.exec
            .map(specs.len(), |b| {
                let spec = &specs[b];
                let full = istft(spec, params, IstftOptions::default())?;
                Ok(full[offset..offset + spec.frames * s.hop].to_vec())
            })
            .into_iter()
            .collect()
    }

    fn combine(&self, mut bands: Vec<Vec<f64>>) -> Result<Vec<f64>> {
        match self.config.variant() {
            DecoderVariant::MultiBandIstft => {
                let bank = self
                    .bank
                    .as_ref()
                    .expect("multi-band decoder carries a bank");
                let sub = SubbandSignals {
                    bands,
                    band_rate: SAMPLE_RATE as f64 / bank.bands() as f64,
                };
                synthesize(&sub, bank)
            }
            DecoderVariant::MultiStreamIstft => {
                // Filtering the zero-stuffed streams only ever meets every
                // N-th tap, so it runs as a stride-N transposed convolution
                // cropped to the causal part.
                let filter = self
                    .ms_filter
                    .as_ref()
                    .expect("multi-stream decoder carries a filter");
                let n = bands.len();
                let frames = bands[0].len();
                let streams = Signal::new(n, frames, bands.concat())?;
                let mut y =
                    conv_transpose1d_with(&streams, filter, None, n, 0, None, self.exec)?.data;
                y.truncate(n * frames);
                Ok(y)
            }
            _ => Ok(bands.swap_remove(0)),
        }
    }
}

/// Splits raw head output (`N * 2 * bins` channels) into band spectrograms.
fn raw_to_spectrograms(raw: &Signal, bands: usize, bins: usize) -> Vec<MagPhaseSpectrogram> {
    let frames = raw.frames;
    (0..bands)
        .map(|b| {
            let mut spec = MagPhaseSpectrogram::zeros(bins, frames);
            for i in 0..bins {
                let mag = raw.channel(b * bins + i);
                let phase = raw.channel((bands + b) * bins + i);
                for f in 0..frames {
                    spec.magnitude[f * bins + i] =
                        mag[f].clamp(-LOG_MAG_LIMIT, LOG_MAG_LIMIT).exp();
                    spec.phase[f * bins + i] = PI * phase[f].sin();
                }
            }
            spec
        })
        .collect()
}

/// One-shot forward pass: validates, prepares and runs a [`Decoder`].
pub fn forward(
    z: &LatentFeatures,
    config: &DecoderConfig,
    weights: &DecoderWeights,
) -> Result<Waveform> {
    Decoder::new(config, weights)?.forward(z)
}
