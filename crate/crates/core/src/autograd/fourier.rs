//! Spectral operations on channel-last feature maps.
//!
//! Spectra are `[B, H, W/2+1, C, 2]` real tensors (`(re, im)` pairs). With the
//! orthonormal scaling, the adjoint of the forward real transform is the
//! inverse transform with the paired columns halved, and the adjoint of the
//! inverse is the forward transform with the paired columns doubled; the
//! "paired" columns are those standing for a conjugate pair (not DC and not
//! the even-width Nyquist column).

use super::{Tape, Var};
use crate::error::{Error, Result};
use crate::spectral::{half_width, SpectralPlan};
use crate::tensor::{Cplx, Real, Tensor};

fn to_pairs(shape: Vec<usize>, data: &[Cplx]) -> Tensor {
    Tensor::from_parts(shape, data.iter().flat_map(|z| [z.re, z.im]).collect())
}

fn from_pairs(t: &Tensor) -> Vec<Cplx> {
    t.data().chunks_exact(2).map(|p| Cplx::new(p[0], p[1])).collect()
}

/// Multiplies each complex entry of a `[B, H, Wh, C]` spectrum by the
/// per-column factor.
fn weight_columns(spec: &mut [Cplx], plan: &SpectralPlan, b: usize, c: usize, paired: Real) {
    let (h, wh) = (plan.height(), plan.half_width());
    for n in 0..b * h {
        for l in 0..wh {
            if plan.is_paired_column(l) {
                for z in &mut spec[(n * wh + l) * c..(n * wh + l + 1) * c] {
                    *z *= paired;
                }
            }
        }
    }
}

/// Orthonormal `rfft2` over the spatial axes of `[B, H, W, C]`.
pub fn rfft2_hw(tape: &mut Tape, x: Var) -> Result<Var> {
    let [b, h, w, c] = tape.value(x).dims4("rfft2")?;
    let plan = SpectralPlan::cached(h, w)?;
    let spec = plan.forward_strided(tape.value(x).data(), b, c);
    let value = to_pairs(vec![b, h, plan.half_width(), c, 2], &spec);
    Ok(tape.push("rfft2", &[x], value, move |g| {
        let mut gs = from_pairs(g);
        weight_columns(&mut gs, &plan, b, c, 0.5);
        let gx = plan.inverse_strided(&gs, b, c);
        Ok(vec![Tensor::from_parts(vec![b, h, w, c], gx)])
    }))
}

/// Orthonormal `irfft2` of a `[B, H, W/2+1, C, 2]` spectrum to `[B, H, W, C]`.
pub fn irfft2_hw(tape: &mut Tape, spec: Var, width: usize) -> Result<Var> {
    let shape = tape.shape(spec).to_vec();
    let [b, h, wh, c, two] = shape[..] else {
        return Err(Error::contract("irfft2", format!("expected [B, H, Wh, C, 2], got {shape:?}")));
    };
    if two != 2 || wh != half_width(width) {
        return Err(Error::Plan { plan: (h, width), got: shape });
    }
    let plan = SpectralPlan::cached(h, width)?;
    let z = from_pairs(tape.value(spec));
    let value = Tensor::from_parts(vec![b, h, width, c], plan.inverse_strided(&z, b, c));
    Ok(tape.push("irfft2", &[spec], value, move |g| {
        let mut gs = plan.forward_strided(g.data(), b, c);
        weight_columns(&mut gs, &plan, b, c, 2.0);
        Ok(vec![to_pairs(vec![b, h, wh, c, 2], &gs)])
    }))
}

/// Elementwise complex product of pair tensors. `b` may be broadcast over
/// the leading axes of `a`.
pub fn complex_mul(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    let (ta, tb) = (tape.value(a).clone(), tape.value(b).clone());
    let (sa, sb) = (ta.shape(), tb.shape());
    let suffix_ok = sb.len() <= sa.len() && sa[sa.len() - sb.len()..] == *sb;
    if sa.last() != Some(&2) || !suffix_ok {
        return Err(Error::shape("complex_mul", sa, sb));
    }
    let za = from_pairs(&ta);
    let zb = from_pairs(&tb);
    let nb = zb.len();
    let prod: Vec<Cplx> = za.iter().enumerate().map(|(i, x)| x * zb[i % nb]).collect();
    let value = to_pairs(sa.to_vec(), &prod);
    Ok(tape.push("complex_mul", &[a, b], value, move |g| {
        let gz = from_pairs(g);
        let ga: Vec<Cplx> = gz.iter().enumerate().map(|(i, v)| v * zb[i % nb].conj()).collect();
        let mut gb = vec![Cplx::new(0.0, 0.0); nb];
        for (i, v) in gz.iter().enumerate() {
            gb[i % nb] += v * za[i].conj();
        }
        Ok(vec![to_pairs(ta.shape().to_vec(), &ga), to_pairs(tb.shape().to_vec(), &gb)])
    }))
}

/// Per-sample, per-channel filters `Σ_i λ[b,i,c]·K[h,l,i]` from coefficients
/// `[B, N, C′]` and a complex basis `[H, Wh, N, 2]`, giving `[B, H, Wh, C′, 2]`.
pub fn combine_basis(tape: &mut Tape, coeffs: Var, basis: Var) -> Result<Var> {
    let (tl, tk) = (tape.value(coeffs).clone(), tape.value(basis).clone());
    let (ls, ks) = (tl.shape().to_vec(), tk.shape().to_vec());
    let (&[b, n, c], &[h, wh, kn, 2]) = (&ls[..], &ks[..]) else {
        return Err(Error::shape("combine_basis", &ls, &ks));
    };
    if n != kn {
        return Err(Error::shape("combine_basis", &ls, &ks));
    }
    let (ld, kd) = (tl.data(), tk.data());
    let mut out = vec![0.0; b * h * wh * c * 2];
    for bi in 0..b {
        for px in 0..h * wh {
            let dst = &mut out[(bi * h * wh + px) * c * 2..(bi * h * wh + px + 1) * c * 2];
            for i in 0..n {
                let (kr, ki) = (kd[(px * n + i) * 2], kd[(px * n + i) * 2 + 1]);
                let lam = &ld[(bi * n + i) * c..(bi * n + i + 1) * c];
                for (ch, &lv) in lam.iter().enumerate() {
                    dst[2 * ch] += lv * kr;
                    dst[2 * ch + 1] += lv * ki;
                }
            }
        }
    }
    let value = Tensor::from_parts(vec![b, h, wh, c, 2], out);
    Ok(tape.push("combine_basis", &[coeffs, basis], value, move |g| {
        let gd = g.data();
        let (ld, kd) = (tl.data(), tk.data());
        let mut gl = vec![0.0; b * n * c];
        let mut gk = vec![0.0; h * wh * n * 2];
        for bi in 0..b {
            for px in 0..h * wh {
                let src = &gd[(bi * h * wh + px) * c * 2..(bi * h * wh + px + 1) * c * 2];
                for i in 0..n {
                    let (kr, ki) = (kd[(px * n + i) * 2], kd[(px * n + i) * 2 + 1]);
                    let lam = &ld[(bi * n + i) * c..(bi * n + i + 1) * c];
                    let glam = &mut gl[(bi * n + i) * c..(bi * n + i + 1) * c];
                    let (mut acc_r, mut acc_i) = (0.0, 0.0);
                    for ch in 0..c {
                        let (gr, gi) = (src[2 * ch], src[2 * ch + 1]);
                        glam[ch] += gr * kr + gi * ki;
                        acc_r += gr * lam[ch];
                        acc_i += gi * lam[ch];
                    }
                    gk[(px * n + i) * 2] += acc_r;
                    gk[(px * n + i) * 2 + 1] += acc_i;
                }
            }
        }
        Ok(vec![Tensor::from_parts(vec![b, n, c], gl), Tensor::from_parts(vec![h, wh, n, 2], gk)])
    }))
}
