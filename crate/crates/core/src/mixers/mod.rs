//! Token mixers. Each mixer maps `[B, H, W, C]` to the same shape; the
//! spectral ones and the separable convolution expand to `C′ = 2C`
//! internally between two pointwise projections.

mod attention;
mod dynamic;
mod interp;

pub use attention::{attention_forward, Attention};
pub use dynamic::{dynamic_filter_forward, routeing_weights, DynamicFilter, RouteingMlp};
pub use interp::interpolate_filter_basis;

use crate::autograd::{fourier, Tape, Var};
use crate::error::{Error, Result};
use crate::layers::{ActKind, Activation, DepthwiseConv, Linear};
use crate::param::{Builder, Init, ParamId, ParamKind, ParamStore};
use crate::spectral::half_width;

/// Multiply-accumulate cost charged for one real 2D transform (either
/// direction) of an `h × w` map with `channels` channels:
/// `2.5·HW·log₂(HW)` per channel.
pub fn fft_macs(h: usize, w: usize, channels: usize) -> f64 {
    let hw = (h * w) as f64;
    2.5 * hw * hw.log2() * channels as f64
}

/// `irfft2(K ⊙ rfft2(x))` over the spatial axes of `[B, H, W, C]`.
///
/// `filter` is a pair tensor shaped `[H, ⌊W/2⌋+1, C, 2]` (shared by the
/// batch) or `[B, H, ⌊W/2⌋+1, C, 2]`. With the orthonormal transforms this
/// equals the cyclic convolution of `x` with `irfft2(K)` divided by `√(HW)`.
pub fn global_filter_forward(tape: &mut Tape, x: Var, filter: Var) -> Result<Var> {
    let [_, h, w, c] = tape.value(x).dims4("global_filter")?;
    let fs = tape.shape(filter);
    let n = fs.len();
    if n < 4 || fs[n - 4..] != [h, half_width(w), c, 2] {
        let fs = fs.to_vec();
        return Err(Error::shape("global_filter", tape.shape(x), &fs));
    }
    let spec = fourier::rfft2_hw(tape, x)?;
    let prod = fourier::complex_mul(tape, spec, filter)?;
    fourier::irfft2_hw(tape, prod, w)
}

/// Static per-channel spectral filter between two pointwise projections.
#[derive(Clone, Debug)]
pub struct GlobalFilter {
    pub pw1: Linear,
    pub act: Activation,
    /// Complex filter `[H, ⌊W/2⌋+1, C′, 2]`.
    pub filter: ParamId,
    pub pw2: Linear,
    pub height: usize,
    pub width: usize,
}

impl GlobalFilter {
    pub fn new(b: &mut Builder, name: &str, c: usize, height: usize, width: usize, act: ActKind) -> Result<Self> {
        let c_med = 2 * c;
        Ok(GlobalFilter {
            pw1: Linear::new(b, &format!("{name}.pw1"), c, c_med, false)?,
            act: Activation::new(b, &format!("{name}.act"), act)?,
            filter: b.param(
                &format!("{name}.filter"),
                &[height, half_width(width), c_med, 2],
                ParamKind::Complex,
                true,
                Init::Normal(0.02),
            )?,
            pw2: Linear::new(b, &format!("{name}.pw2"), c_med, c, false)?,
            height,
            width,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        if !tape.value(x).is_finite() {
            return Err(Error::contract("global_filter", "input contains non-finite values"));
        }
        dynamic::check_extents(tape, x, self.height, self.width)?;
        let h = self.pw1.forward(tape, store, x)?;
        let h = self.act.forward(tape, store, h)?;
        let k = tape.param(store, self.filter);
        let y = global_filter_forward(tape, h, k)?;
        self.pw2.forward(tape, store, y)
    }

    pub fn macs(&self, h: usize, w: usize) -> f64 {
        let hw = h * w;
        let c_med = self.pw1.c_out;
        self.pw1.macs(hw) as f64
            + 2.0 * fft_macs(h, w, c_med)
            + 4.0 * (h * half_width(w) * c_med) as f64
            + self.pw2.macs(hw) as f64
    }
}

/// `pw1 → act → depthwise k×k → pw2`.
#[derive(Clone, Debug)]
pub struct SepConv {
    pub pw1: Linear,
    pub act: Activation,
    pub dw: DepthwiseConv,
    pub pw2: Linear,
}

impl SepConv {
    pub fn new(b: &mut Builder, name: &str, c: usize, kernel: usize, act: ActKind) -> Result<Self> {
        let c_med = 2 * c;
        Ok(SepConv {
            pw1: Linear::new(b, &format!("{name}.pw1"), c, c_med, false)?,
            act: Activation::new(b, &format!("{name}.act"), act)?,
            dw: DepthwiseConv::new(b, &format!("{name}.dw"), c_med, kernel)?,
            pw2: Linear::new(b, &format!("{name}.pw2"), c_med, c, false)?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.pw1.forward(tape, store, x)?;
        let h = self.act.forward(tape, store, h)?;
        let h = self.dw.forward(tape, store, h)?;
        self.pw2.forward(tape, store, h)
    }

    pub fn macs(&self, h: usize, w: usize) -> f64 {
        let hw = h * w;
        let k = self.dw.size;
        (self.pw1.macs(hw) + (hw * k * k * self.pw1.c_out) as u64 + self.pw2.macs(hw)) as f64
    }
}

#[derive(Clone, Debug)]
pub enum Mixer {
    Dynamic(DynamicFilter),
    Global(GlobalFilter),
    SepConv(SepConv),
    Attention(Attention),
}

impl Mixer {
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        match self {
            Mixer::Dynamic(m) => m.forward(tape, store, x),
            Mixer::Global(m) => m.forward(tape, store, x),
            Mixer::SepConv(m) => m.forward(tape, store, x),
            Mixer::Attention(m) => m.forward(tape, store, x),
        }
    }

    pub fn macs(&self, h: usize, w: usize) -> f64 {
        match self {
            Mixer::Dynamic(m) => m.macs(h, w),
            Mixer::Global(m) => m.macs(h, w),
            Mixer::SepConv(m) => m.macs(h, w),
            Mixer::Attention(m) => m.macs(h, w),
        }
    }

    /// Spectral filter parameter bound to the stage extents, if any.
    pub fn spectral_param(&self) -> Option<ParamId> {
        match self {
            Mixer::Dynamic(m) => Some(m.basis),
            Mixer::Global(m) => Some(m.filter),
            _ => None,
        }
    }
}
