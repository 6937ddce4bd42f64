//! Multi-head self-attention over the spatial tokens. Forward only; it is
//! used for throughput comparisons and never trained.

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::layers::WEIGHT_STD;
use crate::param::{Builder, Init, ParamId, ParamKind, ParamStore};
use crate::tensor::{gemm_acc, Real, Tensor};

#[derive(Clone, Debug)]
pub struct Attention {
    /// `[C, 3C]`; columns hold Q, K, V in that order.
    pub qkv: ParamId,
    /// `[C, C]`.
    pub proj: ParamId,
    pub heads: usize,
    pub channels: usize,
}

impl Attention {
    pub fn new(b: &mut Builder, name: &str, c: usize, heads: usize) -> Result<Self> {
        if heads == 0 || !c.is_multiple_of(heads) {
            return Err(Error::Build(format!("{name}: {c} channels do not split into {heads} heads")));
        }
        let w = |b: &mut Builder, n: &str, s: &[usize]| {
            b.param(&format!("{name}.{n}"), s, ParamKind::Real, true, Init::TruncNormal(WEIGHT_STD))
        };
        Ok(Attention { qkv: w(b, "qkv.weight", &[c, 3 * c])?, proj: w(b, "proj.weight", &[c, c])?, heads, channels: c })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let (wq, wo) = (store.value(self.qkv).clone(), store.value(self.proj).clone());
        attention_forward(tape, x, &wq, &wo, self.heads)
    }

    pub fn macs(&self, h: usize, w: usize) -> f64 {
        let (t, c) = ((h * w) as f64, self.channels as f64);
        4.0 * t * c * c + 2.0 * t * t * c
    }
}

/// Scaled dot-product attention of every spatial token against all others,
/// with Q/K/V and output projections. Recorded without a backward rule.
pub fn attention_forward(tape: &mut Tape, x: Var, w_qkv: &Tensor, w_out: &Tensor, heads: usize) -> Result<Var> {
    let [b, h, w, c] = tape.value(x).dims4("attention")?;
    if heads == 0 || c % heads != 0 {
        return Err(Error::contract("attention", format!("{c} channels do not split into {heads} heads")));
    }
    if w_qkv.shape() != [c, 3 * c] || w_out.shape() != [c, c] {
        return Err(Error::shape("attention", w_qkv.shape(), w_out.shape()));
    }
    let t = h * w;
    let d = c / heads;
    let scale = 1.0 / (d as Real).sqrt();
    let xd = tape.value(x).data();
    let mut out = vec![0.0; b * t * c];
    let mut qkv = vec![0.0; t * 3 * c];
    let mut mixed = vec![0.0; t * c];
    let mut scores = vec![0.0; t];
    for n in 0..b {
        qkv.fill(0.0);
        gemm_acc(&xd[n * t * c..(n + 1) * t * c], w_qkv.data(), &mut qkv, t, c, 3 * c);
        mixed.fill(0.0);
        for hd in 0..heads {
            for i in 0..t {
                let q = &qkv[i * 3 * c + hd * d..i * 3 * c + hd * d + d];
                let mut max = Real::NEG_INFINITY;
                for (j, s) in scores.iter_mut().enumerate() {
                    let k = &qkv[j * 3 * c + c + hd * d..j * 3 * c + c + hd * d + d];
                    *s = q.iter().zip(k).map(|(a, b)| a * b).sum::<Real>() * scale;
                    max = max.max(*s);
                }
                let mut total = 0.0;
                for s in scores.iter_mut() {
                    *s = (*s - max).exp();
                    total += *s;
                }
                let dst = &mut mixed[i * c + hd * d..i * c + hd * d + d];
                for (j, s) in scores.iter().enumerate() {
                    let p = s / total;
                    let v = &qkv[j * 3 * c + 2 * c + hd * d..j * 3 * c + 2 * c + hd * d + d];
                    for (o, vv) in dst.iter_mut().zip(v) {
                        *o += p * vv;
                    }
                }
            }
        }
        gemm_acc(&mixed, w_out.data(), &mut out[n * t * c..(n + 1) * t * c], t, c, c);
    }
    let value = Tensor::new(vec![b, h, w, c], out)?;
    Ok(tape.push_opaque("attention", &[x], value))
}
