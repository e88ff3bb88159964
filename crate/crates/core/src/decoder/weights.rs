//! Named tensor store and its binary file format.
//!
//! Layout (little-endian throughout):
//!
//! ```text
//! "MBIW" | version u32 | fingerprint u64 | tensor count u32
//! per tensor: name length u32 | name bytes (UTF-8) | rank u32 | dims u32 x rank | f32 x prod(dims)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{DecoderConfig, DecoderVariant};
use crate::pqmf::FilterBank;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"MBIW";
const VERSION: u32 = 1;

/// One named tensor: shape plus row-major values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f32>) -> Result<Self> {
        if shape.iter().product::<usize>() != values.len() {
            return Err(Error::invalid(format!(
                "tensor of shape {shape:?} cannot hold {} values",
                values.len()
            )));
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            values: vec![0.0; n],
        }
    }

    pub(crate) fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }
}

/// Tensors of one decoder, keyed by layer-plan name, plus the fingerprint
/// of the config they were built for.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderWeights {
    pub tensors: BTreeMap<String, Tensor>,
    pub fingerprint: u64,
}

impl DecoderWeights {
    /// All-zero weights following `config`'s layer plan.
    pub fn zeros(config: &DecoderConfig) -> Self {
        Self {
            tensors: config
                .layer_plan()
                .into_iter()
                .map(|(name, shape)| (name, Tensor::zeros(shape)))
                .collect(),
            fingerprint: config.fingerprint(),
        }
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors.get(name).ok_or_else(|| Error::ShapePlan {
            tensor: name.to_string(),
            detail: "missing".to_string(),
        })
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors.get_mut(name).ok_or_else(|| Error::ShapePlan {
            tensor: name.to_string(),
            detail: "missing".to_string(),
        })
    }

    /// Checks the tensor set against `config`: every planned tensor exists
    /// with its exact shape, nothing else is present, then the fingerprint.
    pub fn validate(&self, config: &DecoderConfig) -> Result<()> {
        let plan = config.layer_plan();
        for (name, shape) in &plan {
            let t = self.get(name)?;
            if &t.shape != shape {
                return Err(Error::ShapePlan {
                    tensor: name.clone(),
                    detail: format!("expected shape {shape:?}, found {:?}", t.shape),
                });
            }
        }
        if self.tensors.len() != plan.len() {
            let extra = self
                .tensors
                .keys()
                .find(|k| !plan.iter().any(|(n, _)| n == *k))
                .expect("more tensors than planned implies an unplanned name");
            return Err(Error::ShapePlan {
                tensor: extra.clone(),
                detail: "not part of the layer plan".to_string(),
            });
        }
        if self.fingerprint != config.fingerprint() {
            return Err(Error::Fingerprint {
                expected: config.fingerprint(),
                found: self.fingerprint,
                config: config.canonical_text(),
            });
        }
        Ok(())
    }

    /// Sets the multi-stream synthesis filter so that stream `k` is filtered
    /// by `N g_k`, which makes the learned combination reproduce the fixed
    /// synthesis bank.
    pub fn set_ms_filter_from_bank(&mut self, bank: &FilterBank) -> Result<()> {
        let t = self.get_mut("ms_filter.weight")?;
        let (bands, taps) = (t.shape[1], t.shape[2]);
        if bank.bands() != bands || bank.taps() != taps {
            return Err(Error::invalid(format!(
                "{}-band {}-tap bank cannot fill a {bands} x {taps} filter",
                bank.bands(),
                bank.taps()
            )));
        }
        let gain = bands as f64;
        t.values = (0..bands)
            .flat_map(|k| bank.synthesis(k).iter().map(move |&g| (gain * g) as f32))
            .collect();
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.fingerprint.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in &t.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let header = |what: &str| Error::Format(format!("file ends inside the header ({what})"));
        if r.take(4).ok_or_else(|| header("magic"))? != MAGIC {
            return Err(Error::Format("bad magic, not a weight file".into()));
        }
        let version = r.u32().ok_or_else(|| header("version"))?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported weight file version {version} (expected {VERSION})"
            )));
        }
        let fingerprint = r.u64().ok_or_else(|| header("fingerprint"))?;
        let count = r.u32().ok_or_else(|| header("tensor count"))?;
        let mut tensors = BTreeMap::new();
        for index in 0..count {
            let truncated = |tensor: String, reason: &str| Error::Truncated {
                tensor,
                reason: reason.to_string(),
            };
            let unnamed = || format!("#{index}");
            let name_len = r.u32().ok_or_else(|| truncated(unnamed(), "name length"))?;
            let name_bytes = r
                .take(name_len as usize)
                .ok_or_else(|| truncated(unnamed(), "name"))?;
            let name = String::from_utf8(name_bytes.to_vec())
                .map_err(|_| Error::Format(format!("tensor #{index} name is not UTF-8")))?;
            let rank = r.u32().ok_or_else(|| truncated(name.clone(), "rank"))?;
            let shape = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| truncated(name.clone(), "dimensions"))?;
            let n: usize = shape.iter().product();
            let payload = n
                .checked_mul(4)
                .and_then(|len| r.take(len))
                .ok_or_else(|| truncated(name.clone(), "payload"))?;
            let values = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if tensors
                .insert(name.clone(), Tensor { shape, values })
                .is_some()
            {
                return Err(Error::Format(format!("tensor `{name}` appears twice")));
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after the last tensor",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            tensors,
            fingerprint,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Loads a file and checks it against `config`.
    pub fn load_for(path: impl AsRef<Path>, config: &DecoderConfig) -> Result<Self> {
        let w = Self::load(path)?;
        w.validate(config)?;
        Ok(w)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8)
            .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }
}

/// Seeded uniform initialisation in `[-k, k]`, `k = 1 / sqrt(fan_in)`.
///
/// Tensors are drawn in layer-plan order from one ChaCha8 stream, so two
/// configs that share a plan prefix (multi-band and multi-stream) get the
/// same values for the shared tensors. Weight fan-in is the product of all
/// axes but the output one; biases use the fan-in of their weight.
pub fn init_random(config: &DecoderConfig, seed: u64) -> DecoderWeights {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tensors = BTreeMap::new();
    let mut last_fan_in = 1;
    for (name, shape) in config.layer_plan() {
        let fan_in = if name.ends_with(".bias") {
            last_fan_in
        } else {
            let f = if name.starts_with("ups.") {
                // [in][out][tap]: the output axis is the second one
                shape[0] * shape[2]
            } else {
                shape[1..].iter().product()
            };
            last_fan_in = f;
            f
        };
        let k = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n = shape.iter().product();
        let values = (0..n).map(|_| rng.gen_range(-k..=k) as f32).collect();
        tensors.insert(name, Tensor { shape, values });
    }
    DecoderWeights {
        tensors,
        fingerprint: config.fingerprint(),
    }
}

/// Random weights for `config`; for the multi-stream variant the synthesis
/// filter is then overwritten from the configured pseudo-QMF bank.
pub fn init_random_with_bank_filter(config: &DecoderConfig, seed: u64) -> Result<DecoderWeights> {
    let mut w = init_random(config, seed);
    if config.variant() == DecoderVariant::MultiStreamIstft {
        let spec = crate::pqmf::PrototypeSpec {
            bands: config.bands(),
            taps: config.ms_filter_taps(),
            ..*config.pqmf()
        };
        w.set_ms_filter_from_bank(&FilterBank::design(&spec)?)?;
    }
    Ok(w)
}
