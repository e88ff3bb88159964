use std::f64::consts::PI;

use crate::{Error, Result};

/// Periodic Hann window, `w[n] = 0.5 - 0.5 cos(2 pi n / length)`.
pub fn hann_window(length: usize) -> Result<Vec<f64>> {
    if length == 0 {
        return Err(Error::invalid("window length must be at least 1"));
    }
    let step = 2.0 * PI / length as f64;
    Ok((0..length)
        .map(|n| 0.5 - 0.5 * (step * n as f64).cos())
        .collect())
}
