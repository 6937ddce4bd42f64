//! Dynamic filter: per-sample, per-channel spectral filters drawn as convex
//! combinations of a shared complex basis.

use crate::autograd::{fourier, ops, Tape, Var};
use crate::error::{Error, Result};
use crate::layers::{ActKind, Activation, LayerNorm, Linear};
use crate::param::{Builder, Init, ParamId, ParamKind, ParamStore};
use crate::spectral::half_width;
use crate::tensor::Real;

use super::{fft_macs, global_filter_forward};

/// `LN → W₁ → act → W₂` on the pooled input, producing `N·C′` logits.
#[derive(Clone, Debug)]
pub struct RouteingMlp {
    pub norm: LayerNorm,
    pub w1: Linear,
    pub act: Activation,
    pub w2: Linear,
    pub num_filters: usize,
    pub c_med: usize,
}

impl RouteingMlp {
    pub fn new(b: &mut Builder, name: &str, c: usize, ratio: Real, num_filters: usize, c_med: usize) -> Result<Self> {
        let hidden = ((ratio * c as Real) as usize).max(1);
        Ok(RouteingMlp {
            norm: LayerNorm::new(b, &format!("{name}.norm"), c)?,
            w1: Linear::new(b, &format!("{name}.fc1"), c, hidden, false)?,
            act: Activation::new(b, &format!("{name}.act"), ActKind::StarRelu)?,
            w2: Linear::new(b, &format!("{name}.fc2"), hidden, num_filters * c_med, false)?,
            num_filters,
            c_med,
        })
    }

    pub fn macs(&self) -> f64 {
        (self.w1.macs(1) + self.w2.macs(1)) as f64
    }
}

/// Softmax-normalized mixing coefficients `[B, N, C′]` computed from the
/// spatial mean of `x`.
pub fn routeing_weights(tape: &mut Tape, store: &ParamStore, x: Var, m: &RouteingMlp) -> Result<Var> {
    let shape = tape.shape(x).to_vec();
    let [b, _, _, c] = tape.value(x).dims4("routeing_weights")?;
    if c != m.w1.c_in {
        return Err(Error::shape("routeing_weights", &shape, &[m.w1.c_in]));
    }
    let pooled = ops::mean_hw(tape, x)?;
    let h = m.norm.forward(tape, store, pooled)?;
    let h = m.w1.forward(tape, store, h)?;
    let h = m.act.forward(tape, store, h)?;
    let logits = m.w2.forward(tape, store, h)?;
    let logits = ops::reshape(tape, logits, &[b, m.num_filters, m.c_med])?;
    ops::softmax(tape, logits, 1)
}

#[derive(Clone, Debug)]
pub struct DynamicFilter {
    pub routeing: RouteingMlp,
    pub pw1: Linear,
    pub act: Activation,
    /// Complex basis `[H, ⌊W/2⌋+1, N, 2]`.
    pub basis: ParamId,
    pub pw2: Linear,
    pub height: usize,
    pub width: usize,
    pub num_filters: usize,
}

impl DynamicFilter {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        b: &mut Builder,
        name: &str,
        c: usize,
        height: usize,
        width: usize,
        num_filters: usize,
        ratio: Real,
        act: ActKind,
    ) -> Result<Self> {
        if num_filters == 0 {
            return Err(Error::Build(format!("{name}: the filter basis needs at least one filter")));
        }
        let c_med = 2 * c;
        Ok(DynamicFilter {
            routeing: RouteingMlp::new(b, &format!("{name}.routeing"), c, ratio, num_filters, c_med)?,
            pw1: Linear::new(b, &format!("{name}.pw1"), c, c_med, false)?,
            act: Activation::new(b, &format!("{name}.act"), act)?,
            basis: b.param(
                &format!("{name}.basis"),
                &[height, half_width(width), num_filters, 2],
                ParamKind::Complex,
                true,
                Init::Normal(0.02),
            )?,
            pw2: Linear::new(b, &format!("{name}.pw2"), c_med, c, false)?,
            height,
            width,
            num_filters,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        dynamic_filter_forward(tape, store, x, self)
    }

    pub fn macs(&self, h: usize, w: usize) -> f64 {
        let hw = h * w;
        let c_med = self.pw1.c_out;
        let bins = (h * half_width(w)) as f64;
        self.routeing.macs()
            + self.pw1.macs(hw) as f64
            + 2.0 * fft_macs(h, w, c_med)
            + bins * (2 * self.num_filters * c_med) as f64
            + 4.0 * bins * c_med as f64
            + self.pw2.macs(hw) as f64
    }
}

pub fn check_extents(tape: &Tape, x: Var, height: usize, width: usize) -> Result<()> {
    let [_, h, w, _] = tape.value(x).dims4("spectral mixer")?;
    if (h, w) != (height, width) {
        return Err(Error::Extent { expected: (height, width), got: (h, w) });
    }
    Ok(())
}

/// Coefficients from the mixer input, then `pw1 → act → rfft2 → ⊙ Σλ·K →
/// irfft2 → pw2`.
pub fn dynamic_filter_forward(tape: &mut Tape, store: &ParamStore, x: Var, f: &DynamicFilter) -> Result<Var> {
    if !tape.value(x).is_finite() {
        return Err(Error::contract("dynamic_filter", "input contains non-finite values"));
    }
    check_extents(tape, x, f.height, f.width)?;
    let coeffs = routeing_weights(tape, store, x, &f.routeing)?;
    let h = f.pw1.forward(tape, store, x)?;
    let h = f.act.forward(tape, store, h)?;
    let basis = tape.param(store, f.basis);
    let filters = fourier::combine_basis(tape, coeffs, basis)?;
    let y = global_filter_forward(tape, h, filters)?;
    f.pw2.forward(tape, store, y)
}
