use std::fmt;
use std::str::FromStr;

use crate::pqmf::PrototypeSpec;
use crate::{Error, Result, SAMPLES_PER_FRAME};

/// Which decoder back end turns upsampled features into samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DecoderVariant {
    /// Convolutional upsampling all the way to the sample rate.
    FullConv,
    /// Two upsampling stages, then a single-band iSTFT.
    Istft,
    /// iSTFT per sub-band, recombined with a fixed pseudo-QMF synthesis bank.
    MultiBandIstft,
    /// iSTFT per stream, recombined with a learned synthesis filter.
    MultiStreamIstft,
}

impl DecoderVariant {
    pub const ALL: [DecoderVariant; 4] = [
        DecoderVariant::FullConv,
        DecoderVariant::Istft,
        DecoderVariant::MultiBandIstft,
        DecoderVariant::MultiStreamIstft,
    ];

    /// Short name used on the command line and in reports.
    pub fn name(self) -> &'static str {
        match self {
            DecoderVariant::FullConv => "vits",
            DecoderVariant::Istft => "istft",
            DecoderVariant::MultiBandIstft => "mb",
            DecoderVariant::MultiStreamIstft => "ms",
        }
    }

    pub fn uses_istft(self) -> bool {
        self != DecoderVariant::FullConv
    }

    pub fn is_multiband(self) -> bool {
        matches!(
            self,
            DecoderVariant::MultiBandIstft | DecoderVariant::MultiStreamIstft
        )
    }
}

impl fmt::Display for DecoderVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DecoderVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vits" | "fullconv" => Ok(DecoderVariant::FullConv),
            "istft" => Ok(DecoderVariant::Istft),
            "mb" => Ok(DecoderVariant::MultiBandIstft),
            "ms" => Ok(DecoderVariant::MultiStreamIstft),
            other => Err(Error::invalid(format!(
                "unknown decoder variant `{other}` (expected vits, istft, mb or ms)"
            ))),
        }
    }
}

/// Frame geometry of the decoder-side iSTFT.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IstftShape {
    pub fft_size: usize,
    pub hop: usize,
    pub win_length: usize,
}

impl IstftShape {
    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }
}

impl Default for IstftShape {
    fn default() -> Self {
        Self {
            fft_size: 16,
            hop: 4,
            win_length: 16,
        }
    }
}

/// Channel width preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scale {
    /// 192 latent channels, 512 initial decoder channels.
    #[default]
    Full,
    /// Halved widths: 96 latent channels, 256 initial decoder channels.
    Mini,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Scale::Full),
            "mini" => Ok(Scale::Mini),
            other => Err(Error::invalid(format!(
                "unknown scale `{other}` (expected full or mini)"
            ))),
        }
    }
}

/// Validated decoder architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderConfig {
    variant: DecoderVariant,
    latent_channels: usize,
    initial_channels: usize,
    upsample_scales: Vec<usize>,
    istft: IstftShape,
    bands: usize,
    resblock_kernel_sizes: Vec<usize>,
    resblock_dilations: Vec<usize>,
    ms_filter_taps: usize,
    pqmf: PrototypeSpec,
}

pub(crate) const PRE_KERNEL: usize = 7;
pub(crate) const POST_KERNEL: usize = 7;

impl DecoderConfig {
    /// Default architecture for `variant` at full width.
    pub fn new(variant: DecoderVariant) -> Self {
        Self::builder(variant)
            .build()
            .expect("defaults are consistent")
    }

    pub fn with_scale(variant: DecoderVariant, scale: Scale) -> Self {
        Self::builder(variant)
            .scale(scale)
            .build()
            .expect("defaults are consistent")
    }

    pub fn builder(variant: DecoderVariant) -> DecoderConfigBuilder {
        DecoderConfigBuilder::new(variant)
    }

    pub fn variant(&self) -> DecoderVariant {
        self.variant
    }

    pub fn latent_channels(&self) -> usize {
        self.latent_channels
    }

    pub fn initial_channels(&self) -> usize {
        self.initial_channels
    }

    pub fn upsample_scales(&self) -> &[usize] {
        &self.upsample_scales
    }

    pub fn istft(&self) -> IstftShape {
        self.istft
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn resblock_kernel_sizes(&self) -> &[usize] {
        &self.resblock_kernel_sizes
    }

    pub fn resblock_dilations(&self) -> &[usize] {
        &self.resblock_dilations
    }

    pub fn ms_filter_taps(&self) -> usize {
        self.ms_filter_taps
    }

    /// Prototype of the fixed synthesis bank (multi-band variants).
    pub fn pqmf(&self) -> &PrototypeSpec {
        &self.pqmf
    }

    /// Channel count after each upsampling stage, starting with the
    /// `conv_pre` output.
    pub fn stage_channels(&self) -> Vec<usize> {
        (0..=self.upsample_scales.len())
            .map(|i| self.initial_channels >> i)
            .collect()
    }

    /// Output channels of the final projection.
    pub fn head_channels(&self) -> usize {
        if self.variant.uses_istft() {
            self.bands * 2 * self.istft.bins()
        } else {
            1
        }
    }

    /// Canonical one-line description hashed into the weight-file
    /// fingerprint.
    pub fn canonical_text(&self) -> String {
        let list = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let mut s = format!(
            "variant={};latent={};initial={};ups={};resblock_kernels={};resblock_dilations={}",
            self.variant,
            self.latent_channels,
            self.initial_channels,
            list(&self.upsample_scales),
            list(&self.resblock_kernel_sizes),
            list(&self.resblock_dilations),
        );
        if self.variant.uses_istft() {
            s += &format!(
                ";istft={},{},{};bands={}",
                self.istft.fft_size, self.istft.hop, self.istft.win_length, self.bands
            );
        }
        if self.variant == DecoderVariant::MultiStreamIstft {
            s += &format!(";ms_taps={}", self.ms_filter_taps);
        }
        s
    }

    /// FNV-1a 64-bit hash of [`canonical_text`](Self::canonical_text).
    pub fn fingerprint(&self) -> u64 {
        self.canonical_text()
            .bytes()
            .fold(0xcbf2_9ce4_8422_2325, |h, b| {
                (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
            })
    }

    /// Every tensor the forward pass reads, in initialisation order.
    pub fn layer_plan(&self) -> Vec<(String, Vec<usize>)> {
        let ch = self.stage_channels();
        let mut plan = vec![
            (
                "conv_pre.weight".to_string(),
                vec![ch[0], self.latent_channels, PRE_KERNEL],
            ),
            ("conv_pre.bias".to_string(), vec![ch[0]]),
        ];
        for (i, &s) in self.upsample_scales.iter().enumerate() {
            plan.push((format!("ups.{i}.weight"), vec![ch[i], ch[i + 1], 2 * s]));
            plan.push((format!("ups.{i}.bias"), vec![ch[i + 1]]));
            let c = ch[i + 1];
            for (j, &k) in self.resblock_kernel_sizes.iter().enumerate() {
                for d in 0..self.resblock_dilations.len() {
                    for conv in ["convs1", "convs2"] {
                        let base = format!("resblocks.{i}.{j}.{conv}.{d}");
                        plan.push((format!("{base}.weight"), vec![c, c, k]));
                        plan.push((format!("{base}.bias"), vec![c]));
                    }
                }
            }
        }
        let last = *ch.last().expect("at least conv_pre channels");
        plan.push((
            "conv_post.weight".to_string(),
            vec![self.head_channels(), last, POST_KERNEL],
        ));
        plan.push(("conv_post.bias".to_string(), vec![self.head_channels()]));
        if self.variant == DecoderVariant::MultiStreamIstft {
            plan.push((
                "ms_filter.weight".to_string(),
                vec![1, self.bands, self.ms_filter_taps],
            ));
        }
        plan
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_plan()
            .iter()
            .map(|(_, shape)| shape.iter().product::<usize>())
            .sum()
    }

    /// Static multiply-accumulate count of one forward pass over `frames`
    /// latent frames: every convolution tap, plus the taps of the
    /// multi-stream filter that meet a non-zero sample of the zero-stuffed
    /// streams. Elementwise work, iSTFT and the fixed synthesis bank are not
    /// counted.
    pub fn multiply_accumulates(&self, frames: usize) -> u64 {
        let ch = self.stage_channels();
        let mut len = frames as u64;
        let mut macs = len * (ch[0] * self.latent_channels * PRE_KERNEL) as u64;
        for (i, &s) in self.upsample_scales.iter().enumerate() {
            // each input frame scatters into 2s taps
            macs += len * (ch[i] * ch[i + 1] * 2 * s) as u64;
            len *= s as u64;
            let c = ch[i + 1] as u64;
            let per_frame: u64 = self
                .resblock_kernel_sizes
                .iter()
                .map(|&k| 2 * self.resblock_dilations.len() as u64 * c * c * k as u64)
                .sum();
            macs += len * per_frame;
        }
        macs += len * (self.head_channels() * ch[ch.len() - 1] * POST_KERNEL) as u64;
        if self.variant == DecoderVariant::MultiStreamIstft {
            let samples = frames as u64 * SAMPLES_PER_FRAME as u64;
            macs += samples * self.ms_filter_taps as u64;
        }
        macs
    }
}

/// Builder for [`DecoderConfig`]; [`build`](Self::build) enforces the
/// upsampling budget.
#[derive(Debug, Clone)]
pub struct DecoderConfigBuilder {
    config: DecoderConfig,
}

impl DecoderConfigBuilder {
    fn new(variant: DecoderVariant) -> Self {
        let (scales, bands) = match variant {
            DecoderVariant::FullConv => (vec![8, 8, 2, 2], 1),
            DecoderVariant::Istft => (vec![8, 8], 1),
            DecoderVariant::MultiBandIstft | DecoderVariant::MultiStreamIstft => (vec![4, 4], 4),
        };
        Self {
            config: DecoderConfig {
                variant,
                latent_channels: 192,
                initial_channels: 512,
                upsample_scales: scales,
                istft: IstftShape::default(),
                bands,
                resblock_kernel_sizes: vec![3, 7, 11],
                resblock_dilations: vec![1, 3, 5],
                ms_filter_taps: 63,
                pqmf: PrototypeSpec {
                    bands,
                    ..PrototypeSpec::default()
                },
            },
        }
    }

    pub fn scale(mut self, scale: Scale) -> Self {
        let (latent, initial) = match scale {
            Scale::Full => (192, 512),
            Scale::Mini => (96, 256),
        };
        self.config.latent_channels = latent;
        self.config.initial_channels = initial;
        self
    }

    pub fn latent_channels(mut self, c: usize) -> Self {
        self.config.latent_channels = c;
        self
    }

    pub fn initial_channels(mut self, c: usize) -> Self {
        self.config.initial_channels = c;
        self
    }

    pub fn upsample_scales(mut self, scales: Vec<usize>) -> Self {
        self.config.upsample_scales = scales;
        self
    }

    pub fn istft(mut self, shape: IstftShape) -> Self {
        self.config.istft = shape;
        self
    }

    pub fn bands(mut self, bands: usize) -> Self {
        self.config.bands = bands;
        self.config.pqmf.bands = bands;
        self
    }

    pub fn resblocks(mut self, kernel_sizes: Vec<usize>, dilations: Vec<usize>) -> Self {
        self.config.resblock_kernel_sizes = kernel_sizes;
        self.config.resblock_dilations = dilations;
        self
    }

    pub fn ms_filter_taps(mut self, taps: usize) -> Self {
        self.config.ms_filter_taps = taps;
        self
    }

    pub fn pqmf(mut self, spec: PrototypeSpec) -> Self {
        self.config.pqmf = spec;
        self
    }

    pub fn build(self) -> Result<DecoderConfig> {
        let c = self.config;
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if c.latent_channels == 0 {
            return bad("latent channel count must be positive".into());
        }
        if c.upsample_scales.is_empty() || c.upsample_scales.iter().any(|&s| s == 0 || s % 2 != 0) {
            return bad(format!(
                "upsample scales must be non-empty and even, got {:?}",
                c.upsample_scales
            ));
        }
        let stages = c.upsample_scales.len();
        if c.initial_channels == 0 || c.initial_channels % (1 << stages) != 0 {
            return bad(format!(
                "{} initial channels cannot be halved {stages} times",
                c.initial_channels
            ));
        }
        if c.resblock_kernel_sizes.is_empty()
            || c.resblock_dilations.is_empty()
            || c.resblock_kernel_sizes.iter().any(|&k| k % 2 == 0)
            || c.resblock_dilations.contains(&0)
        {
            return bad("resblocks need odd kernel sizes and positive dilations".into());
        }
        let product: usize = c.upsample_scales.iter().product();
        let budget = if c.variant.uses_istft() {
            let s = c.istft;
            if s.fft_size == 0 || s.hop == 0 || s.win_length > s.fft_size || s.hop > s.win_length {
                return bad(format!("invalid iSTFT shape {s:?}"));
            }
            if (s.win_length - s.hop) % 2 != 0 {
                return bad(format!(
                    "iSTFT win_length - hop must be even to centre the output, got {s:?}"
                ));
            }
            product * s.hop * c.bands
        } else {
            if c.bands != 1 {
                return bad("the convolutional decoder is single-band".into());
            }
            product
        };
        if budget != SAMPLES_PER_FRAME {
            return bad(format!(
                "upsampling budget {budget} (scales {:?}, bands {}) must equal {SAMPLES_PER_FRAME}",
                c.upsample_scales, c.bands
            ));
        }
        match c.variant {
            DecoderVariant::Istft if c.bands != 1 => {
                return bad("the single-band iSTFT decoder needs bands = 1".into());
            }
            v if v.is_multiband() && c.bands < 2 => {
                return bad("multi-band decoders need at least 2 bands".into());
            }
            _ => {}
        }
        if c.variant == DecoderVariant::MultiStreamIstft && c.ms_filter_taps == 0 {
            return bad("multi-stream filter needs at least one tap".into());
        }
        if c.variant == DecoderVariant::MultiBandIstft {
            if c.pqmf.bands != c.bands {
                return bad("pseudo-QMF band count differs from decoder bands".into());
            }
            c.pqmf.validate()?;
        }
        Ok(c)
    }
}
