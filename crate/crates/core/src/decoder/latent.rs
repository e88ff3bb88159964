use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Latent frame features, `frames x channels` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentFeatures {
    frames: usize,
    channels: usize,
    data: Vec<f64>,
}

impl LatentFeatures {
    pub fn new(frames: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if frames == 0 || channels == 0 {
            return Err(Error::invalid(
                "latent features need at least one frame and channel",
            ));
        }
        if data.len() != frames * channels {
            return Err(Error::invalid(format!(
                "latent data has {} values, expected {frames} x {channels}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("latent features must be finite"));
        }
        Ok(Self {
            frames,
            channels,
            data,
        })
    }

    /// Standard-normal-like features (sum of uniforms) from a seeded stream.
    pub fn random(frames: usize, channels: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..frames * channels)
            .map(|_| {
                let v: f64 = (0..4).map(|_| rng.gen_range(-1.0..1.0)).sum::<f64>() * 0.866;
                // f32-representable so a save/load round trip is exact
                v as f32 as f64
            })
            .collect();
        Self::new(frames, channels, data)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Channel-major copy, as the convolutions consume it.
    pub(crate) fn transposed(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.data.len()];
        for t in 0..self.frames {
            for c in 0..self.channels {
                out[c * self.frames + t] = self.data[t * self.channels + c];
            }
        }
        out
    }

    /// Sidecar path: `<path>.meta`.
    pub fn meta_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".meta");
        PathBuf::from(s)
    }

    /// Writes raw little-endian f32 values plus the `frames=<T> channels=<C>`
    /// sidecar.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes: Vec<u8> = self
            .data
            .iter()
            .flat_map(|&v| (v as f32).to_le_bytes())
            .collect();
        fs::write(path, bytes)?;
        fs::write(
            Self::meta_path(path),
            format!("frames={} channels={}\n", self.frames, self.channels),
        )?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let meta = fs::read_to_string(Self::meta_path(path))?;
        let (frames, channels) = parse_meta(&meta)?;
        let bytes = fs::read(path)?;
        if bytes.len() != frames * channels * 4 {
            return Err(Error::Format(format!(
                "latent file has {} bytes, sidecar promises {frames} x {channels} f32 values",
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Self::new(frames, channels, data).map_err(|e| Error::Format(e.to_string()))
    }
}

fn parse_meta(text: &str) -> Result<(usize, usize)> {
    let mut frames = None;
    let mut channels = None;
    for field in text.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad sidecar field `{field}`")))?;
        let value: usize = value
            .parse()
            .map_err(|_| Error::Format(format!("bad sidecar value `{field}`")))?;
        match key {
            "frames" => frames = Some(value),
            "channels" => channels = Some(value),
            _ => return Err(Error::Format(format!("unknown sidecar key `{key}`"))),
        }
    }
    match (frames, channels) {
        (Some(f), Some(c)) => Ok((f, c)),
        _ => Err(Error::Format(
            "sidecar needs frames=<T> channels=<C>".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn meta_parsing() {
        assert_eq!(parse_meta("frames=3 channels=192\n").unwrap(), (3, 192));
        assert!(parse_meta("frames=3").is_err());
        assert!(parse_meta("frames=x channels=2").is_err());
        assert!(parse_meta("frames=1 channels=2 hop=4").is_err());
    }

    #[test]
    fn transpose_layout() {
        let z = LatentFeatures::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(z.transposed(), vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(LatentFeatures::new(1, 2, vec![0.0, f64::NAN]).is_err());
        assert!(LatentFeatures::new(0, 2, vec![]).is_err());
    }

    #[test]
    fn random_is_seeded() {
        let a = LatentFeatures::random(5, 4, 1).unwrap();
        assert_eq!(a, LatentFeatures::random(5, 4, 1).unwrap());
        assert_ne!(a, LatentFeatures::random(5, 4, 2).unwrap());
    }
}
