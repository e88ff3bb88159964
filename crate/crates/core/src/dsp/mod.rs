//! Windows, real FFT, STFT analysis and iSTFT synthesis.

mod fft;
mod stft;
mod window;

pub use fft::{irfft, rfft, RealFft};
pub use num_complex::Complex64;
pub use stft::{
    istft, stft, ComplexSpectrogram, FrameParams, IstftOptions, MagPhaseSpectrogram, Waveform,
    WINDOW_SUM_FLOOR,
};
pub use window::hann_window;
