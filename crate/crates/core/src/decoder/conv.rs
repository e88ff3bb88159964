//! 1-D convolution and transposed convolution over channel-major signals.
//!
//! Both operators are evaluated as sums of small matrix products, one per
//! kernel tap, on strided views of the (padded) input. Output columns are
//! split into fixed-width tiles that are computed independently, which is
//! where the rayon parallelism lives.

use crate::par::Execution;
use crate::{Error, Result};

/// Output columns per tile.
const TILE: usize = 1024;

/// `channels x frames` signal, channel-major (each channel contiguous).
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub channels: usize,
    pub frames: usize,
    pub data: Vec<f64>,
}

impl Signal {
    pub fn new(channels: usize, frames: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * frames {
            return Err(Error::invalid(format!(
                "signal data has {} values, expected {channels} x {frames}",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            frames,
            data,
        })
    }

    pub fn zeros(channels: usize, frames: usize) -> Self {
        Self {
            channels,
            frames,
            data: vec![0.0; channels * frames],
        }
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.frames..(c + 1) * self.frames]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.frames..(c + 1) * self.frames]
    }
}

/// Convolution kernel, `[out][in][tap]` row-major.
///
/// For [`conv_transpose1d`] the first two axes are read as `[in][out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub dims: [usize; 3],
    pub data: Vec<f64>,
}

impl Kernel {
    pub fn new(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.iter().product::<usize>() {
            return Err(Error::invalid(format!(
                "kernel data has {} values, expected {dims:?}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn taps(&self) -> usize {
        self.dims[2]
    }
}

/// How the input is extended before a [`conv1d`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Zero { left: usize, right: usize },
    Reflect { left: usize, right: usize },
}

impl Padding {
    /// Zero padding that keeps the frame count for an odd `taps` kernel.
    pub fn same(taps: usize, dilation: usize) -> Self {
        let p = dilation * (taps - 1) / 2;
        Padding::Zero { left: p, right: p }
    }

    fn amounts(self) -> (usize, usize) {
        match self {
            Padding::Zero { left, right } | Padding::Reflect { left, right } => (left, right),
        }
    }
}

/// Copy of `x` with `left`/`right` padding, optionally passed through a
/// leaky ReLU of slope `act` first.
fn padded(x: &Signal, padding: Padding, act: Option<f64>) -> Result<(Vec<f64>, usize)> {
    let (left, right) = padding.amounts();
    let reflect = matches!(padding, Padding::Reflect { .. });
    if reflect && (left >= x.frames || right >= x.frames) {
        return Err(Error::invalid(format!(
            "reflect padding ({left}, {right}) needs more than {} frames",
            x.frames
        )));
    }
    let len = x.frames + left + right;
    let mut out = vec![0.0; x.channels * len];
    for c in 0..x.channels {
        let src = x.channel(c);
        let dst = &mut out[c * len..(c + 1) * len];
        match act {
            Some(slope) => {
                for (d, &s) in dst[left..left + x.frames].iter_mut().zip(src) {
                    *d = leaky(s, slope);
                }
            }
            None => dst[left..left + x.frames].copy_from_slice(src),
        }
        if reflect {
            for i in 0..left {
                dst[left - 1 - i] = dst[left + 1 + i];
            }
            let end = left + x.frames;
            for i in 0..right {
                dst[end + i] = dst[end - 2 - i];
            }
        }
    }
    Ok((out, len))
}

#[inline]
fn leaky(v: f64, slope: f64) -> f64 {
    if v >= 0.0 {
        v
    } else {
        v * slope
    }
}

/// Strided matrix view: element `(r, c)` is `data[offset + r * rs + c * cs]`.
#[derive(Clone, Copy)]
struct View<'a> {
    data: &'a [f64],
    offset: usize,
    rs: usize,
    cs: usize,
}

/// `c += a (m x k) * b (k x n)`, with `c` a dense row-major `m x n` buffer.
fn gemm_acc(m: usize, k: usize, n: usize, a: View, b: View, c: &mut [f64]) {
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    let last = |v: View, rows: usize, cols: usize| v.offset + (rows - 1) * v.rs + (cols - 1) * v.cs;
    assert!(last(a, m, k) < a.data.len(), "gemm: a view out of bounds");
    assert!(last(b, k, n) < b.data.len(), "gemm: b view out of bounds");
    assert!(c.len() >= m * n, "gemm: c buffer too small");
    // SAFETY: the asserts above bound every element the views address, and
    // `c` is exclusively borrowed for the duration of the call.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr().add(a.offset),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr().add(b.offset),
            b.rs as isize,
            b.cs as isize,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn check_bias(bias: Option<&[f64]>, out_ch: usize) -> Result<()> {
    match bias {
        Some(b) if b.len() != out_ch => Err(Error::invalid(format!(
            "bias has {} values for {out_ch} output channels",
            b.len()
        ))),
        _ => Ok(()),
    }
}

fn init_tile(bias: Option<&[f64]>, out_ch: usize, n: usize) -> Vec<f64> {
    match bias {
        Some(b) => b.iter().flat_map(|&v| std::iter::repeat_n(v, n)).collect(),
        None => vec![0.0; out_ch * n],
    }
}

/// Cross-correlation `y[o, t] = b[o] + sum_{i,k} w[o, i, k] x[i, t + k d]`
/// over the padded input. Output frames: `T + pad - d (K - 1)`.
pub fn conv1d(
    input: &Signal,
    kernel: &Kernel,
    bias: Option<&[f64]>,
    dilation: usize,
    padding: Padding,
) -> Result<Signal> {
    conv1d_with(
        input,
        kernel,
        bias,
        dilation,
        padding,
        None,
        Execution::default(),
    )
}

pub(crate) fn conv1d_with(
    input: &Signal,
    kernel: &Kernel,
    bias: Option<&[f64]>,
    dilation: usize,
    padding: Padding,
    act: Option<f64>,
    exec: Execution,
) -> Result<Signal> {
    let [out_ch, in_ch, taps] = kernel.dims;
    if in_ch != input.channels {
        return Err(Error::invalid(format!(
            "kernel expects {in_ch} input channels, signal has {}",
            input.channels
        )));
    }
    if dilation == 0 || taps == 0 {
        return Err(Error::invalid("dilation and kernel size must be positive"));
    }
    check_bias(bias, out_ch)?;
    let (xp, len) = padded(input, padding, act)?;
    let span = dilation * (taps - 1);
    if len <= span {
        return Err(Error::invalid(format!(
            "padded input of {len} frames is shorter than the kernel span {}",
            span + 1
        )));
    }
    let frames = len - span;
    let tiles = frames.div_ceil(TILE);
    let results = exec.map(tiles, |t| {
        let t0 = t * TILE;
        let n = TILE.min(frames - t0);
        let mut buf = init_tile(bias, out_ch, n);
        for k in 0..taps {
            let a = View {
                data: &kernel.data,
                offset: k,
                rs: in_ch * taps,
                cs: taps,
            };
            let b = View {
                data: &xp,
                offset: t0 + k * dilation,
                rs: len,
                cs: 1,
            };
            gemm_acc(out_ch, in_ch, n, a, b, &mut buf);
        }
        buf
    });
    let mut out = Signal::zeros(out_ch, frames);
    for (t, buf) in results.iter().enumerate() {
        let t0 = t * TILE;
        let n = buf.len() / out_ch.max(1);
        for o in 0..out_ch {
            out.data[o * frames + t0..o * frames + t0 + n]
                .copy_from_slice(&buf[o * n..(o + 1) * n]);
        }
    }
    Ok(out)
}

/// Transposed convolution with kernel `[in][out][tap]`:
/// `y[o, j s + k - p] += w[i, o, k] x[i, j]`, plus bias.
/// Output frames: `(T - 1) s - 2 p + K`, which is `T s` for `K = 2 s`,
/// `p = s / 2`.
pub fn conv_transpose1d(
    input: &Signal,
    kernel: &Kernel,
    bias: Option<&[f64]>,
    stride: usize,
    padding: usize,
) -> Result<Signal> {
    conv_transpose1d_with(
        input,
        kernel,
        bias,
        stride,
        padding,
        None,
        Execution::default(),
    )
}

pub(crate) fn conv_transpose1d_with(
    input: &Signal,
    kernel: &Kernel,
    bias: Option<&[f64]>,
    stride: usize,
    padding: usize,
    act: Option<f64>,
    exec: Execution,
) -> Result<Signal> {
    let [in_ch, out_ch, taps] = kernel.dims;
    if in_ch != input.channels {
        return Err(Error::invalid(format!(
            "kernel expects {in_ch} input channels, signal has {}",
            input.channels
        )));
    }
    if stride == 0 || taps == 0 || input.frames == 0 {
        return Err(Error::invalid(
            "stride, kernel size and input length must be positive",
        ));
    }
    check_bias(bias, out_ch)?;
    let raw = (input.frames - 1) * stride + taps;
    if raw <= 2 * padding {
        return Err(Error::invalid("padding removes the whole output"));
    }
    let frames = raw - 2 * padding;

    // Output phase r collects taps k = (r + p) mod s + m s, reading input
    // frame q + (r + p - k) / s for output t = q s + r.
    let phases: Vec<(usize, usize, Vec<(usize, isize)>)> = (0..stride.min(frames))
        .map(|r| {
            let count = (frames - r).div_ceil(stride);
            let taps_for_phase = ((r + padding) % stride..taps)
                .step_by(stride)
                .map(|k| {
                    (
                        k,
                        (r as isize + padding as isize - k as isize) / stride as isize,
                    )
                })
                .collect();
            (r, count, taps_for_phase)
        })
        .collect();
    let min_off = phases
        .iter()
        .flat_map(|p| p.2.iter().map(|t| t.1))
        .min()
        .unwrap_or(0);
    let left = min_off.min(0).unsigned_abs();
    let max_read = phases
        .iter()
        .flat_map(|p| p.2.iter().map(move |t| p.1 as isize - 1 + t.1))
        .max()
        .unwrap_or(0);
    let right = (max_read - (input.frames as isize - 1)).max(0) as usize;
    let (xp, len) = padded(input, Padding::Zero { left, right }, act)?;

    let jobs: Vec<(usize, usize)> = phases
        .iter()
        .enumerate()
        .flat_map(|(pi, p)| (0..p.1.div_ceil(TILE)).map(move |t| (pi, t)))
        .collect();
    let results = exec.map(jobs.len(), |j| {
        let (pi, t) = jobs[j];
        let (_, count, ref taps_for_phase) = phases[pi];
        let q0 = t * TILE;
        let n = TILE.min(count - q0);
        let mut buf = init_tile(bias, out_ch, n);
        for &(k, off) in taps_for_phase {
            let a = View {
                data: &kernel.data,
                offset: k,
                rs: taps,
                cs: out_ch * taps,
            };
            let b = View {
                data: &xp,
                offset: (q0 as isize + off + left as isize) as usize,
                rs: len,
                cs: 1,
            };
            gemm_acc(out_ch, in_ch, n, a, b, &mut buf);
        }
        buf
    });
    let mut out = Signal::zeros(out_ch, frames);
    for (&(pi, t), buf) in jobs.iter().zip(&results) {
        let r = phases[pi].0;
        let q0 = t * TILE;
        let n = buf.len() / out_ch.max(1);
        for o in 0..out_ch {
            let row = &mut out.data[o * frames..(o + 1) * frames];
            for (qq, &v) in buf[o * n..(o + 1) * n].iter().enumerate() {
                row[(q0 + qq) * stride + r] = v;
            }
        }
    }
    Ok(out)
}
