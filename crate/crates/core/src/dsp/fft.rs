//! Real-input FFT.
//!
//! Power-of-two sizes go through an iterative radix-2 transform of half
//! length (even and odd samples packed into one complex sequence). Any other
//! size uses a direct O(n^2) DFT driven by an exact twiddle table; the loss
//! resolutions (683, 384, 171 points) are small enough for that to be cheap.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::{Error, Result};

/// A planned real transform of length `n`, producing `n / 2 + 1` bins.
#[derive(Debug, Clone)]
pub struct RealFft {
    n: usize,
    kind: Kind,
}

#[derive(Debug, Clone)]
enum Kind {
    /// n == 1
    Trivial,
    /// Power of two, n >= 2. Holds the half-length complex plan and the
    /// `e^{-j 2 pi k / n}` post-processing twiddles for k in 0..n/2.
    Radix2 {
        half: ComplexFft,
        twiddles: Vec<Complex64>,
    },
    /// `cos` / `sin` of `2 pi m / n` for m in 0..n.
    Direct { cos: Vec<f64>, sin: Vec<f64> },
}

impl RealFft {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("transform length must be at least 1"));
        }
        let kind = if n == 1 {
            Kind::Trivial
        } else if n.is_power_of_two() {
            let h = n / 2;
            let twiddles = (0..h)
                .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
                .collect();
            Kind::Radix2 {
                half: ComplexFft::new(h),
                twiddles,
            }
        } else {
            let (cos, sin) = (0..n)
                .map(|m| {
                    let a = 2.0 * PI * m as f64 / n as f64;
                    (a.cos(), a.sin())
                })
                .unzip();
            Kind::Direct { cos, sin }
        };
        Ok(Self { n, kind })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bins(&self) -> usize {
        self.n / 2 + 1
    }

    /// True when the transform uses the direct DFT path.
    pub fn is_direct(&self) -> bool {
        matches!(self.kind, Kind::Direct { .. })
    }

    /// `output[k] = sum_t input[t] e^{-j 2 pi k t / n}` for k in 0..=n/2.
    pub fn forward(&self, input: &[f64], output: &mut [Complex64]) -> Result<()> {
        if input.len() != self.n || output.len() != self.bins() {
            return Err(Error::invalid(format!(
                "rfft of length {} needs {} inputs and {} outputs, got {} and {}",
                self.n,
                self.n,
                self.bins(),
                input.len(),
                output.len()
            )));
        }
        match &self.kind {
            Kind::Trivial => output[0] = Complex64::new(input[0], 0.0),
            Kind::Radix2 { half, twiddles } => {
                let h = self.n / 2;
                let mut z: Vec<Complex64> = (0..h)
                    .map(|m| Complex64::new(input[2 * m], input[2 * m + 1]))
                    .collect();
                half.transform(&mut z, false);
                for k in 0..=h {
                    let zk = z[k % h];
                    let zc = z[(h - k) % h].conj();
                    let even = (zk + zc) * 0.5;
                    let odd = (zk - zc) * Complex64::new(0.0, -0.5);
                    let w = if k < h {
                        twiddles[k]
                    } else {
                        Complex64::new(-1.0, 0.0)
                    };
                    output[k] = even + w * odd;
                }
            }
            Kind::Direct { cos, sin } => {
                let n = self.n;
                for (k, out) in output.iter_mut().enumerate() {
                    let (mut re, mut im) = (0.0, 0.0);
                    let mut m = 0usize;
                    for &x in input {
                        re += x * cos[m];
                        im -= x * sin[m];
                        m += k;
                        if m >= n {
                            m -= n;
                        }
                    }
                    *out = Complex64::new(re, im);
                }
            }
        }
        Ok(())
    }

    /// Inverse of [`forward`](Self::forward), including the `1/n` scale.
    /// The imaginary parts of the DC and (for even n) Nyquist bins are
    /// ignored, as a real signal cannot carry them.
    pub fn inverse(&self, input: &[Complex64], output: &mut [f64]) -> Result<()> {
        if input.len() != self.bins() || output.len() != self.n {
            return Err(Error::invalid(format!(
                "irfft of length {} needs {} bins and {} outputs, got {} and {}",
                self.n,
                self.bins(),
                self.n,
                input.len(),
                output.len()
            )));
        }
        let n = self.n;
        match &self.kind {
            Kind::Trivial => output[0] = input[0].re,
            Kind::Radix2 { half, twiddles } => {
                let h = n / 2;
                let fix = |k: usize| {
                    if k == 0 || k == h {
                        Complex64::new(input[k].re, 0.0)
                    } else {
                        input[k]
                    }
                };
                let mut z: Vec<Complex64> = (0..h)
                    .map(|k| {
                        let xk = fix(k);
                        let xc = fix(h - k).conj();
                        let even = (xk + xc) * 0.5;
                        let odd = (xk - xc) * 0.5 * twiddles[k].conj();
                        even + Complex64::new(0.0, 1.0) * odd
                    })
                    .collect();
                half.transform(&mut z, true);
                let scale = 1.0 / h as f64;
                for (m, v) in z.iter().enumerate() {
                    output[2 * m] = v.re * scale;
                    output[2 * m + 1] = v.im * scale;
                }
            }
            Kind::Direct { cos, sin } => {
                let bins = self.bins();
                let nyquist = if n % 2 == 0 { Some(bins - 1) } else { None };
                let scale = 1.0 / n as f64;
                for (t, out) in output.iter_mut().enumerate() {
                    let mut acc = input[0].re;
                    let mut m = t;
                    for (k, x) in input.iter().enumerate().skip(1) {
                        if m >= n {
                            m -= n;
                        }
                        let term = x.re * cos[m] - x.im * sin[m];
                        if Some(k) == nyquist {
                            acc += x.re * cos[m];
                        } else {
                            acc += 2.0 * term;
                        }
                        m += t;
                    }
                    *out = acc * scale;
                }
            }
        }
        Ok(())
    }
}

/// Forward real FFT of a whole frame.
pub fn rfft(frame: &[f64]) -> Result<Vec<Complex64>> {
    let plan = RealFft::new(frame.len())?;
    let mut out = vec![Complex64::new(0.0, 0.0); plan.bins()];
    plan.forward(frame, &mut out)?;
    Ok(out)
}

/// Inverse real FFT producing `n` samples from `n / 2 + 1` bins.
pub fn irfft(spectrum: &[Complex64], n: usize) -> Result<Vec<f64>> {
    let plan = RealFft::new(n)?;
    let mut out = vec![0.0; n];
    plan.inverse(spectrum, &mut out)?;
    Ok(out)
}

/// In-place iterative radix-2 complex FFT.
#[derive(Debug, Clone)]
struct ComplexFft {
    n: usize,
    bitrev: Vec<usize>,
    /// `e^{-j 2 pi k / n}` for k in 0..n/2.
    twiddles: Vec<Complex64>,
}

impl ComplexFft {
    fn new(n: usize) -> Self {
        debug_assert!(n.is_power_of_two());
        let bits = n.trailing_zeros();
        let bitrev = (0..n)
            .map(|i| {
                if bits == 0 {
                    0
                } else {
                    i.reverse_bits() >> (usize::BITS - bits)
                }
            })
            .collect();
        let twiddles = (0..n / 2)
            .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
            .collect();
        Self {
            n,
            bitrev,
            twiddles,
        }
    }

    /// Unscaled transform; `inverse` flips the twiddle sign.
    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        for i in 0..n {
            let j = self.bitrev[i];
            if i < j {
                data.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let stride = n / len;
            for start in (0..n).step_by(len) {
                for j in 0..half {
                    let mut w = self.twiddles[j * stride];
                    if inverse {
                        w = w.conj();
                    }
                    let a = data[start + j];
                    let b = data[start + j + half] * w;
                    data[start + j] = a + b;
                    data[start + j + half] = a - b;
                }
            }
            len *= 2;
        }
    }
}
