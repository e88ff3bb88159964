//! Waveform-synthesis kernel for iSTFT-based neural decoders.
//!
//! The crate covers the signal path from latent frame features to audio:
//!
//! * [`dsp`]: Hann windows, a real FFT with a direct-DFT fallback for
//!   non-power-of-two sizes, STFT analysis and overlap-add iSTFT synthesis.
//! * [`pqmf`]: pseudo-QMF prototype design, cosine-modulated analysis and
//!   synthesis banks, decimation and zero-insertion.
//! * [`losses`]: spectral convergence and log-magnitude losses over several
//!   STFT resolutions, full-band or per sub-band.
//! * [`decoder`]: forward passes of four decoder variants (plain
//!   convolutional upsampler, single-band iSTFT, multi-band iSTFT with a
//!   fixed synthesis bank, multi-stream iSTFT with a learned synthesis filter).
//! * [`bench`]: real-time-factor measurement and variant comparison.
//!
//! Data-parallel inner loops run on rayon when the `parallel` feature is
//! enabled (the default); [`Execution::Sequential`] forces the single-thread
//! path either way, and both paths produce bit-identical results.

pub mod bench;
pub mod decoder;
pub mod dsp;
mod error;
pub mod losses;
mod par;
pub mod pqmf;

pub use error::{Error, Result};
pub use par::{with_threads, Execution};

/// Output sample rate of every decoder variant, in Hz.
pub const SAMPLE_RATE: u32 = 22_050;

/// Samples produced per latent frame (the preprocessing hop length).
pub const SAMPLES_PER_FRAME: usize = 256;
