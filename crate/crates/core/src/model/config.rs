//! Backbone configurations and the named presets.

use std::fmt;
use std::str::FromStr;

use crate::autograd::conv::conv_out_extent;
use crate::error::{Error, Result};
use crate::layers::ActKind;
use crate::tensor::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MixerKind {
    DynamicFilter,
    GlobalFilter,
    SepConv,
    Attention,
}

impl MixerKind {
    pub fn short(self) -> &'static str {
        match self {
            MixerKind::DynamicFilter => "DF",
            MixerKind::GlobalFilter => "GF",
            MixerKind::SepConv => "CF",
            MixerKind::Attention => "AT",
        }
    }
}

impl FromStr for MixerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "df" | "dynamic" | "dynamic_filter" | "dynamicfilter" => Ok(MixerKind::DynamicFilter),
            "gf" | "global" | "global_filter" | "globalfilter" => Ok(MixerKind::GlobalFilter),
            "cf" | "sepconv" | "conv" => Ok(MixerKind::SepConv),
            "at" | "attention" | "attn" => Ok(MixerKind::Attention),
            _ => Err(Error::Build(format!("unknown mixer {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    DfFormer,
    CdfFormer,
    GfFormer,
    /// Separable convolution in every stage.
    ConvFormer,
    /// Self-attention in every stage; forward only.
    AttnFormer,
}

impl Family {
    pub fn mixers(self) -> [MixerKind; 4] {
        use MixerKind::*;
        match self {
            Family::DfFormer => [DynamicFilter; 4],
            Family::CdfFormer => [SepConv, SepConv, DynamicFilter, DynamicFilter],
            Family::GfFormer => [GlobalFilter; 4],
            Family::ConvFormer => [SepConv; 4],
            Family::AttnFormer => [Attention; 4],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::DfFormer => "dfformer",
            Family::CdfFormer => "cdfformer",
            Family::GfFormer => "gfformer",
            Family::ConvFormer => "convformer",
            Family::AttnFormer => "attnformer",
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dfformer" | "df" => Ok(Family::DfFormer),
            "cdfformer" | "cdf" => Ok(Family::CdfFormer),
            "gfformer" | "gf" => Ok(Family::GfFormer),
            "convformer" | "cf" | "conv" => Ok(Family::ConvFormer),
            "attnformer" | "attention" | "attn" | "at" => Ok(Family::AttnFormer),
            _ => Err(Error::Build(format!("unknown model family {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Size {
    S18,
    S36,
    M36,
    B36,
    /// Desk-scale configuration for tests and short training runs.
    Nano,
}

impl Size {
    pub fn depths(self) -> [usize; 4] {
        match self {
            Size::S18 => [3, 3, 9, 3],
            Size::S36 | Size::M36 | Size::B36 => [3, 12, 18, 3],
            Size::Nano => [1, 1, 2, 1],
        }
    }

    pub fn widths(self) -> [usize; 4] {
        match self {
            Size::S18 | Size::S36 => [64, 128, 320, 512],
            Size::M36 => [96, 192, 384, 576],
            Size::B36 => [128, 256, 512, 768],
            Size::Nano => [16, 32, 64, 128],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Size::S18 => "s18",
            Size::S36 => "s36",
            Size::M36 => "m36",
            Size::B36 => "b36",
            Size::Nano => "nano",
        }
    }
}

impl FromStr for Size {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s18" => Ok(Size::S18),
            "s36" => Ok(Size::S36),
            "m36" => Ok(Size::M36),
            "b36" => Ok(Size::B36),
            "nano" => Ok(Size::Nano),
            _ => Err(Error::Build(format!("unknown model size {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageConfig {
    pub depth: usize,
    pub width: usize,
    pub mixer: MixerKind,
    pub down_kernel: usize,
    pub down_stride: usize,
    pub down_pad: usize,
    pub res_scale: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub stages: Vec<StageConfig>,
    /// Input extents `(H, W)`.
    pub input: (usize, usize),
    pub in_channels: usize,
    pub num_classes: usize,
    pub mlp_ratio: usize,
    /// Classifier hidden width as a multiple of the last stage width.
    pub head_ratio: usize,
    pub num_filters: usize,
    pub routeing_ratio: Real,
    pub sepconv_kernel: usize,
    pub act: ActKind,
    /// Largest stochastic-depth rate; rates grow linearly with block index.
    pub drop_path: Real,
    /// Set by presets; building checks the stage mixers against it.
    pub family: Option<Family>,
}

impl ModelConfig {
    pub fn preset(family: Family, size: Size) -> Self {
        let (input, classes) = match size {
            Size::Nano => ((32, 32), 4),
            _ => ((224, 224), 1000),
        };
        let depths = size.depths();
        let widths = size.widths();
        let mixers = family.mixers();
        let stages = (0..4)
            .map(|i| StageConfig {
                depth: depths[i],
                width: widths[i],
                mixer: mixers[i],
                down_kernel: if i == 0 { 7 } else { 3 },
                down_stride: if i == 0 { 4 } else { 2 },
                down_pad: if i == 0 { 2 } else { 1 },
                res_scale: i >= 2,
            })
            .collect();
        ModelConfig {
            stages,
            input,
            in_channels: 3,
            num_classes: classes,
            mlp_ratio: 4,
            head_ratio: 4,
            num_filters: 4,
            routeing_ratio: 0.25,
            sepconv_kernel: 7,
            act: ActKind::StarRelu,
            drop_path: 0.0,
            family: Some(family),
        }
    }

    /// Parses names like `dfformer-s18`, `gfformer-b36` or `nano-df`.
    pub fn named(name: &str) -> Result<Self> {
        let lower = name.to_ascii_lowercase();
        let (a, b) = lower
            .split_once('-')
            .ok_or_else(|| Error::Build(format!("model name {name:?} is not of the form family-size")))?;
        if a == "nano" {
            return Ok(Self::preset(b.parse()?, Size::Nano));
        }
        Ok(Self::preset(a.parse()?, b.parse()?))
    }

    pub fn with_input(mut self, h: usize, w: usize) -> Self {
        self.input = (h, w);
        self
    }

    pub fn with_classes(mut self, n: usize) -> Self {
        self.num_classes = n;
        self
    }

    pub fn total_depth(&self) -> usize {
        self.stages.iter().map(|s| s.depth).sum()
    }

    /// Spatial extents after each downsampling step.
    pub fn stage_extents(&self) -> Result<Vec<(usize, usize)>> {
        let (mut h, mut w) = self.input;
        let mut out = Vec::with_capacity(self.stages.len());
        for (i, s) in self.stages.iter().enumerate() {
            if s.down_kernel == 0 || s.down_stride == 0 {
                return Err(Error::Build(format!("stage {i}: kernel and stride must be positive")));
            }
            if h % s.down_stride != 0 || w % s.down_stride != 0 {
                return Err(Error::Build(format!(
                    "stage {i}: stride {} does not divide the {h}×{w} input",
                    s.down_stride
                )));
            }
            let (Some(nh), Some(nw)) = (
                conv_out_extent(h, s.down_kernel, s.down_stride, s.down_pad),
                conv_out_extent(w, s.down_kernel, s.down_stride, s.down_pad),
            ) else {
                return Err(Error::Build(format!("stage {i}: downsampling does not fit {h}×{w}")));
            };
            h = nh;
            w = nw;
            out.push((h, w));
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.len() != 4 {
            return Err(Error::Build(format!("expected 4 stages, got {}", self.stages.len())));
        }
        if let Some(f) = self.family {
            let got: Vec<MixerKind> = self.stages.iter().map(|s| s.mixer).collect();
            if got[..] != f.mixers()[..] {
                let names: Vec<_> = got.iter().map(|m| m.short()).collect();
                return Err(Error::Build(format!(
                    "{} expects mixers {:?}, config has {names:?}",
                    f.name(),
                    f.mixers().map(MixerKind::short)
                )));
            }
        }
        if self.stages.iter().any(|s| s.depth == 0 || s.width == 0) {
            return Err(Error::Build("stage depth and width must be positive".into()));
        }
        if self.num_classes == 0 || self.in_channels == 0 || self.mlp_ratio == 0 {
            return Err(Error::Build("class count, input channels and mlp ratio must be positive".into()));
        }
        if self.sepconv_kernel.is_multiple_of(2) {
            return Err(Error::Build("separable convolution kernel must be odd".into()));
        }
        self.stage_extents().map(|_| ())
    }
}

impl fmt::Display for ModelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let depths: Vec<_> = self.stages.iter().map(|s| s.depth.to_string()).collect();
        let widths: Vec<_> = self.stages.iter().map(|s| s.width.to_string()).collect();
        let mixers: Vec<_> = self.stages.iter().map(|s| s.mixer.short()).collect();
        write!(
            f,
            "L={} C={} mixers={} input={}x{}",
            depths.join("-"),
            widths.join("-"),
            mixers.join(","),
            self.input.0,
            self.input.1
        )
    }
}
