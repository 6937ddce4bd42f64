//! Building blocks shared by every mixer: normalization, activations,
//! pointwise and depthwise convolutions, pooling, the channel MLP and
//! residual scaling. All maps are channel-last `[B, H, W, C]`.

use crate::autograd::{conv, ops, Tape, Var};
use crate::error::Result;
use crate::param::{Builder, Init, ParamId, ParamKind, ParamStore};
use crate::tensor::Real;

pub const WEIGHT_STD: Real = 0.02;
pub const LN_EPS: Real = 1e-6;

/// StarReLU scale and offset giving zero mean and unit variance for
/// standard normal input.
pub fn star_relu_defaults() -> (Real, Real) {
    let root = (1.25 as Real).sqrt();
    (1.0 / root, -0.5 / root)
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub scale: ParamId,
    pub shift: ParamId,
    pub eps: Real,
}

impl LayerNorm {
    pub fn new(b: &mut Builder, name: &str, c: usize) -> Result<Self> {
        Ok(LayerNorm {
            scale: b.param(&format!("{name}.scale"), &[c], ParamKind::Real, false, Init::Const(1.0))?,
            shift: b.param(&format!("{name}.shift"), &[c], ParamKind::Real, false, Init::Const(0.0))?,
            eps: LN_EPS,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let s = tape.param(store, self.scale);
        let t = tape.param(store, self.shift);
        ops::layer_norm(tape, x, s, t, self.eps)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ActKind {
    #[default]
    StarRelu,
    SquaredRelu,
    Relu,
    Gelu,
}

#[derive(Clone, Debug)]
pub enum Activation {
    StarRelu { s: ParamId, b: ParamId },
    SquaredRelu,
    Relu,
    Gelu,
}

impl Activation {
    pub fn new(b: &mut Builder, name: &str, kind: ActKind) -> Result<Self> {
        Ok(match kind {
            ActKind::StarRelu => {
                let (s0, b0) = star_relu_defaults();
                Activation::StarRelu {
                    s: b.param(&format!("{name}.s"), &[1], ParamKind::Real, false, Init::Const(s0))?,
                    b: b.param(&format!("{name}.b"), &[1], ParamKind::Real, false, Init::Const(b0))?,
                }
            }
            ActKind::SquaredRelu => Activation::SquaredRelu,
            ActKind::Relu => Activation::Relu,
            ActKind::Gelu => Activation::Gelu,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        Ok(match self {
            Activation::StarRelu { s, b } => {
                let s = tape.param(store, *s);
                let b = tape.param(store, *b);
                ops::star_relu(tape, x, s, b)?
            }
            Activation::SquaredRelu => ops::squared_relu(tape, x),
            Activation::Relu => ops::relu(tape, x),
            Activation::Gelu => ops::gelu(tape, x),
        })
    }
}

/// Per-pixel channel projection `[.., C_in] → [.., C_out]`, optionally with
/// a bias.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub c_in: usize,
    pub c_out: usize,
}

impl Linear {
    pub fn new(b: &mut Builder, name: &str, c_in: usize, c_out: usize, bias: bool) -> Result<Self> {
        let weight =
            b.param(&format!("{name}.weight"), &[c_in, c_out], ParamKind::Real, true, Init::TruncNormal(WEIGHT_STD))?;
        let bias = if bias {
            Some(b.param(&format!("{name}.bias"), &[c_out], ParamKind::Real, false, Init::Const(0.0))?)
        } else {
            None
        };
        Ok(Linear { weight, bias, c_in, c_out })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let y = ops::linear(tape, x, w)?;
        match self.bias {
            Some(id) => {
                let bias = tape.param(store, id);
                ops::add(tape, y, bias)
            }
            None => Ok(y),
        }
    }

    pub fn macs(&self, tokens: usize) -> u64 {
        (tokens * self.c_in * self.c_out) as u64
    }
}

/// Pointwise (1×1) convolution without bias: a per-pixel matmul.
pub fn pointwise_conv(tape: &mut Tape, x: Var, w: Var) -> Result<Var> {
    ops::linear(tape, x, w)
}

/// Spatial mean `[B, H, W, C] → [B, C]`.
pub fn global_avg_pool(tape: &mut Tape, x: Var) -> Result<Var> {
    ops::mean_hw(tape, x)
}

#[derive(Clone, Debug)]
pub struct DepthwiseConv {
    pub kernel: ParamId,
    pub size: usize,
}

impl DepthwiseConv {
    pub fn new(b: &mut Builder, name: &str, c: usize, size: usize) -> Result<Self> {
        let kernel =
            b.param(&format!("{name}.kernel"), &[c, size, size], ParamKind::Real, true, Init::TruncNormal(WEIGHT_STD))?;
        Ok(DepthwiseConv { kernel, size })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let k = tape.param(store, self.kernel);
        conv::depthwise_conv(tape, x, k)
    }
}

/// Strided dense convolution with an optional LayerNorm before it
/// (`pre_norm`) or after it (`post_norm`).
#[derive(Clone, Debug)]
pub struct Downsample {
    pub pre_norm: Option<LayerNorm>,
    pub weight: ParamId,
    pub post_norm: Option<LayerNorm>,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub c_in: usize,
    pub c_out: usize,
}

impl Downsample {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        b: &mut Builder,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        norm_after: bool,
    ) -> Result<Self> {
        let pre_norm = if norm_after { None } else { Some(LayerNorm::new(b, &format!("{name}.norm"), c_in)?) };
        let weight = b.param(
            &format!("{name}.conv.weight"),
            &[kernel, kernel, c_in, c_out],
            ParamKind::Real,
            true,
            Init::TruncNormal(WEIGHT_STD),
        )?;
        let post_norm = if norm_after { Some(LayerNorm::new(b, &format!("{name}.norm"), c_out)?) } else { None };
        Ok(Downsample { pre_norm, weight, post_norm, kernel, stride, pad, c_in, c_out })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, mut x: Var) -> Result<Var> {
        if let Some(n) = &self.pre_norm {
            x = n.forward(tape, store, x)?;
        }
        let w = tape.param(store, self.weight);
        x = conv::conv2d(tape, x, w, self.stride, self.pad)?;
        if let Some(n) = &self.post_norm {
            x = n.forward(tape, store, x)?;
        }
        Ok(x)
    }

    pub fn out_extent(&self, input: usize) -> Option<usize> {
        conv::conv_out_extent(input, self.kernel, self.stride, self.pad)
    }
}

/// `fc2(act(fc1(x)))` over the channel axis.
#[derive(Clone, Debug)]
pub struct ChannelMlp {
    pub fc1: Linear,
    pub act: Activation,
    pub fc2: Linear,
}

impl ChannelMlp {
    pub fn new(b: &mut Builder, name: &str, c: usize, hidden: usize, act: ActKind) -> Result<Self> {
        Ok(ChannelMlp {
            fc1: Linear::new(b, &format!("{name}.fc1"), c, hidden, false)?,
            act: Activation::new(b, &format!("{name}.act"), act)?,
            fc2: Linear::new(b, &format!("{name}.fc2"), hidden, c, false)?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.fc1.forward(tape, store, x)?;
        let h = self.act.forward(tape, store, h)?;
        self.fc2.forward(tape, store, h)
    }
}

/// Learnable per-channel multiplier, initialized to one.
#[derive(Clone, Debug)]
pub struct ResScale {
    pub scale: ParamId,
}

impl ResScale {
    pub fn new(b: &mut Builder, name: &str, c: usize) -> Result<Self> {
        Ok(ResScale { scale: b.param(name, &[c], ParamKind::Real, false, Init::Const(1.0))? })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let s = tape.param(store, self.scale);
        ops::mul(tape, x, s)
    }
}
