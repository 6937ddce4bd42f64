//! Elementwise, reduction, matrix and normalization operations.
//!
//! Binary elementwise operations accept equal shapes, a single-element right
//! operand, or a right operand whose shape is a suffix of the left one
//! (broadcast over leading axes). Anything else must be reshaped explicitly.

use super::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{gemm_acc, gemm_nt_acc, gemm_tn_acc, Real, Tensor};

/// How many times `b` repeats to cover `a`.
fn repeats(op: &'static str, a: &[usize], b: &[usize]) -> Result<usize> {
    let na: usize = a.iter().product();
    let nb: usize = b.iter().product();
    if a == b {
        return Ok(1);
    }
    if nb == 1 || (b.len() <= a.len() && a[a.len() - b.len()..] == *b) {
        return Ok(na / nb);
    }
    Err(Error::shape(op, a, b))
}

/// Sums `g` (shaped like the broadcast result) back down to `shape`.
fn reduce_to(g: &Tensor, shape: &[usize]) -> Tensor {
    let nb: usize = shape.iter().product();
    if g.numel() == nb {
        return Tensor::from_parts(shape.to_vec(), g.data().to_vec());
    }
    let mut out = vec![0.0; nb];
    for chunk in g.data().chunks_exact(nb) {
        for (o, v) in out.iter_mut().zip(chunk) {
            *o += v;
        }
    }
    Tensor::from_parts(shape.to_vec(), out)
}

fn broadcast_binary(tape: &Tape, op: &'static str, a: Var, b: Var, f: impl Fn(Real, Real) -> Real) -> Result<Tensor> {
    let (ta, tb) = (tape.value(a), tape.value(b));
    let nb = tb.numel();
    repeats(op, ta.shape(), tb.shape())?;
    let bd = tb.data();
    let data = ta.data().iter().enumerate().map(|(i, &x)| f(x, bd[i % nb])).collect();
    Ok(Tensor::from_parts(ta.shape().to_vec(), data))
}

pub fn add(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    let value = broadcast_binary(tape, "add", a, b, |x, y| x + y)?;
    let b_shape = tape.shape(b).to_vec();
    Ok(tape.push("add", &[a, b], value, move |g| Ok(vec![g.clone(), reduce_to(g, &b_shape)])))
}

pub fn sub(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    let value = broadcast_binary(tape, "sub", a, b, |x, y| x - y)?;
    let b_shape = tape.shape(b).to_vec();
    Ok(tape.push("sub", &[a, b], value, move |g| Ok(vec![g.clone(), reduce_to(&g.scale(-1.0), &b_shape)])))
}

pub fn mul(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    let value = broadcast_binary(tape, "mul", a, b, |x, y| x * y)?;
    let (ta, tb) = (tape.value(a).clone(), tape.value(b).clone());
    Ok(tape.push("mul", &[a, b], value, move |g| {
        let nb = tb.numel();
        let (bd, ad, gd) = (tb.data(), ta.data(), g.data());
        let ga: Vec<Real> = gd.iter().enumerate().map(|(i, &v)| v * bd[i % nb]).collect();
        let mut gb = vec![0.0; nb];
        for (i, (&v, &x)) in gd.iter().zip(ad).enumerate() {
            gb[i % nb] += v * x;
        }
        Ok(vec![Tensor::from_parts(ta.shape().to_vec(), ga), Tensor::from_parts(tb.shape().to_vec(), gb)])
    }))
}

pub fn scale(tape: &mut Tape, a: Var, factor: Real) -> Var {
    let value = tape.value(a).scale(factor);
    tape.push("scale", &[a], value, move |g| Ok(vec![g.scale(factor)]))
}

/// Sum of all elements, as a rank-0 tensor.
pub fn sum(tape: &mut Tape, a: Var) -> Var {
    let ta = tape.value(a);
    let shape = ta.shape().to_vec();
    let value = Tensor::scalar(ta.sum());
    tape.push("sum", &[a], value, move |g| Ok(vec![Tensor::full(shape.clone(), g.data()[0])]))
}

pub fn mean(tape: &mut Tape, a: Var) -> Var {
    let n = tape.value(a).numel() as Real;
    let s = sum(tape, a);
    scale(tape, s, 1.0 / n)
}

pub fn reshape(tape: &mut Tape, a: Var, shape: &[usize]) -> Result<Var> {
    let value = tape.value(a).reshape(shape.to_vec())?;
    let orig = tape.shape(a).to_vec();
    Ok(tape.push("reshape", &[a], value, move |g| Ok(vec![g.reshape(orig.clone())?])))
}

/// `[m×k] · [k×n]`; backward `dA = dC·Bᵀ`, `dB = Aᵀ·dC`.
pub fn matmul(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    let (ta, tb) = (tape.value(a).clone(), tape.value(b).clone());
    let value = crate::tensor::matmul(&ta, &tb)?;
    let ([m, k], [_, n]) = (ta.dims2("matmul")?, tb.dims2("matmul")?);
    Ok(tape.push("matmul", &[a, b], value, move |g| {
        let mut ga = vec![0.0; m * k];
        gemm_nt_acc(g.data(), tb.data(), &mut ga, m, n, k);
        let mut gb = vec![0.0; k * n];
        gemm_tn_acc(ta.data(), g.data(), &mut gb, m, k, n);
        Ok(vec![Tensor::from_parts(vec![m, k], ga), Tensor::from_parts(vec![k, n], gb)])
    }))
}

/// Applies `w: [C_in, C_out]` to the trailing axis of `x: [..., C_in]`
/// (a bias-free pointwise convolution for channel-last maps).
pub fn linear(tape: &mut Tape, x: Var, w: Var) -> Result<Var> {
    let (tx, tw) = (tape.value(x).clone(), tape.value(w).clone());
    let [cin, cout] = tw.dims2("linear")?;
    if tx.last_dim() != cin || tx.rank() == 0 {
        return Err(Error::shape("linear", tx.shape(), tw.shape()));
    }
    let rows = tx.numel() / cin;
    let mut out = vec![0.0; rows * cout];
    gemm_acc(tx.data(), tw.data(), &mut out, rows, cin, cout);
    let mut shape = tx.shape().to_vec();
    *shape.last_mut().expect("rank checked") = cout;
    let value = Tensor::from_parts(shape, out);
    Ok(tape.push("linear", &[x, w], value, move |g| {
        let mut gx = vec![0.0; rows * cin];
        gemm_nt_acc(g.data(), tw.data(), &mut gx, rows, cout, cin);
        let mut gw = vec![0.0; cin * cout];
        gemm_tn_acc(tx.data(), g.data(), &mut gw, rows, cin, cout);
        Ok(vec![Tensor::from_parts(tx.shape().to_vec(), gx), Tensor::from_parts(vec![cin, cout], gw)])
    }))
}

pub fn relu(tape: &mut Tape, x: Var) -> Var {
    let tx = tape.value(x).clone();
    let value = tx.map(|v| v.max(0.0));
    tape.push("relu", &[x], value, move |g| Ok(vec![g.zip_map(&tx, |gv, v| if v > 0.0 { gv } else { 0.0 })?]))
}

/// `relu(x)²`
pub fn squared_relu(tape: &mut Tape, x: Var) -> Var {
    let tx = tape.value(x).clone();
    let value = tx.map(|v| {
        let r = v.max(0.0);
        r * r
    });
    tape.push("squared_relu", &[x], value, move |g| Ok(vec![g.zip_map(&tx, |gv, v| 2.0 * v.max(0.0) * gv)?]))
}

/// GELU, tanh approximation.
pub fn gelu(tape: &mut Tape, x: Var) -> Var {
    const K: Real = 0.797_884_560_802_865_4; // √(2/π)
    const A: Real = 0.044_715;
    let tx = tape.value(x).clone();
    let value = tx.map(|v| 0.5 * v * (1.0 + (K * (v + A * v * v * v)).tanh()));
    tape.push("gelu", &[x], value, move |g| {
        Ok(vec![g.zip_map(&tx, |gv, v| {
            let u = K * (v + A * v * v * v);
            let t = u.tanh();
            let du = K * (1.0 + 3.0 * A * v * v);
            gv * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du)
        })?])
    })
}

/// `s·relu(x)² + b` with single-element learnable `s` and `b`.
pub fn star_relu(tape: &mut Tape, x: Var, s: Var, b: Var) -> Result<Var> {
    let tx = tape.value(x).clone();
    let (sv, bv) = (tape.value(s).item()?, tape.value(b).item()?);
    let (s_shape, b_shape) = (tape.shape(s).to_vec(), tape.shape(b).to_vec());
    let value = tx.map(|v| {
        let r = v.max(0.0);
        sv * r * r + bv
    });
    Ok(tape.push("star_relu", &[x, s, b], value, move |g| {
        let mut gs = 0.0;
        let mut gb = 0.0;
        let gx = g
            .data()
            .iter()
            .zip(tx.data())
            .map(|(&gv, &v)| {
                let r = v.max(0.0);
                gs += gv * r * r;
                gb += gv;
                2.0 * sv * r * gv
            })
            .collect();
        Ok(vec![
            Tensor::from_parts(tx.shape().to_vec(), gx),
            Tensor::full(s_shape.clone(), gs),
            Tensor::full(b_shape.clone(), gb),
        ])
    }))
}

/// Spatial mean of `[B, H, W, C]`, giving `[B, C]`.
pub fn mean_hw(tape: &mut Tape, x: Var) -> Result<Var> {
    let [b, h, w, c] = tape.value(x).dims4("mean_hw")?;
    let tx = tape.value(x);
    let hw = h * w;
    let mut out = vec![0.0; b * c];
    for n in 0..b {
        let acc = &mut out[n * c..(n + 1) * c];
        for px in tx.data()[n * hw * c..(n + 1) * hw * c].chunks_exact(c) {
            for (a, v) in acc.iter_mut().zip(px) {
                *a += v;
            }
        }
        for a in acc.iter_mut() {
            *a /= hw as Real;
        }
    }
    let value = Tensor::from_parts(vec![b, c], out);
    Ok(tape.push("mean_hw", &[x], value, move |g| {
        let inv = 1.0 / hw as Real;
        let mut gx = Vec::with_capacity(b * hw * c);
        for n in 0..b {
            let row = &g.data()[n * c..(n + 1) * c];
            for _ in 0..hw {
                gx.extend(row.iter().map(|v| v * inv));
            }
        }
        Ok(vec![Tensor::from_parts(vec![b, h, w, c], gx)])
    }))
}

/// Layer normalization over the trailing (channel) axis with affine
/// `scale` and `shift` of length `C`. Uses the population variance.
#[allow(clippy::needless_range_loop)]
pub fn layer_norm(tape: &mut Tape, x: Var, scale: Var, shift: Var, eps: Real) -> Result<Var> {
    let tx = tape.value(x).clone();
    let (gamma, beta) = (tape.value(scale).clone(), tape.value(shift).clone());
    let c = tx.last_dim();
    if gamma.shape() != [c] || beta.shape() != [c] || tx.rank() == 0 {
        return Err(Error::shape("layer_norm", tx.shape(), gamma.shape()));
    }
    let rows = tx.numel() / c;
    let mut xhat = vec![0.0; tx.numel()];
    let mut inv_std = vec![0.0; rows];
    let mut out = vec![0.0; tx.numel()];
    for r in 0..rows {
        let row = &tx.data()[r * c..(r + 1) * c];
        let mu = row.iter().sum::<Real>() / c as Real;
        let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<Real>() / c as Real;
        let is = 1.0 / (var + eps).sqrt();
        inv_std[r] = is;
        for j in 0..c {
            let xh = (row[j] - mu) * is;
            xhat[r * c + j] = xh;
            out[r * c + j] = xh * gamma.data()[j] + beta.data()[j];
        }
    }
    let value = Tensor::from_parts(tx.shape().to_vec(), out);
    Ok(tape.push("layer_norm", &[x, scale, shift], value, move |g| {
        let gd = g.data();
        let mut gx = vec![0.0; gd.len()];
        let mut gg = vec![0.0; c];
        let mut gb = vec![0.0; c];
        for r in 0..rows {
            let mut mean_gxh = 0.0;
            let mut mean_gxh_xh = 0.0;
            for j in 0..c {
                let i = r * c + j;
                gg[j] += gd[i] * xhat[i];
                gb[j] += gd[i];
                let gxh = gd[i] * gamma.data()[j];
                mean_gxh += gxh;
                mean_gxh_xh += gxh * xhat[i];
            }
            mean_gxh /= c as Real;
            mean_gxh_xh /= c as Real;
            for j in 0..c {
                let i = r * c + j;
                let gxh = gd[i] * gamma.data()[j];
                gx[i] = inv_std[r] * (gxh - mean_gxh - xhat[i] * mean_gxh_xh);
            }
        }
        Ok(vec![
            Tensor::from_parts(tx.shape().to_vec(), gx),
            Tensor::from_parts(vec![c], gg),
            Tensor::from_parts(vec![c], gb),
        ])
    }))
}

/// Softmax along `axis`, max-subtracted.
pub fn softmax(tape: &mut Tape, x: Var, axis: usize) -> Result<Var> {
    let tx = tape.value(x);
    let shape = tx.shape().to_vec();
    if axis >= shape.len() {
        return Err(Error::contract("softmax", format!("axis {axis} out of range for {shape:?}")));
    }
    let n = shape[axis];
    let pre: usize = shape[..axis].iter().product();
    let post: usize = shape[axis + 1..].iter().product();
    let mut y = vec![0.0; tx.numel()];
    let xd = tx.data();
    for p in 0..pre {
        for q in 0..post {
            let at = |i: usize| (p * n + i) * post + q;
            let max = (0..n).map(|i| xd[at(i)]).fold(Real::NEG_INFINITY, Real::max);
            let mut total = 0.0;
            for i in 0..n {
                let e = (xd[at(i)] - max).exp();
                y[at(i)] = e;
                total += e;
            }
            for i in 0..n {
                y[at(i)] /= total;
            }
        }
    }
    let value = Tensor::from_parts(shape.clone(), y);
    let saved = value.clone();
    Ok(tape.push("softmax", &[x], value, move |g| {
        let (yd, gd) = (saved.data(), g.data());
        let mut gx = vec![0.0; gd.len()];
        for p in 0..pre {
            for q in 0..post {
                let at = |i: usize| (p * n + i) * post + q;
                let dot: Real = (0..n).map(|i| gd[at(i)] * yd[at(i)]).sum();
                for i in 0..n {
                    gx[at(i)] = yd[at(i)] * (gd[at(i)] - dot);
                }
            }
        }
        Ok(vec![Tensor::from_parts(shape.clone(), gx)])
    }))
}

/// Mean softmax cross-entropy of `[B, K]` logits against integer labels,
/// with optional label smoothing `ε` (target `(1−ε)·onehot + ε/K`).
pub fn cross_entropy(tape: &mut Tape, logits: Var, labels: &[usize], smoothing: Real) -> Result<Var> {
    let tl = tape.value(logits);
    let [b, k] = tl.dims2("cross_entropy")?;
    if labels.len() != b {
        return Err(Error::shape("cross_entropy", &[b, k], &[labels.len()]));
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::contract("cross_entropy", format!("label {bad} out of range for {k} classes")));
    }
    let mut probs = vec![0.0; b * k];
    let mut loss = 0.0;
    for r in 0..b {
        let row = &tl.data()[r * k..(r + 1) * k];
        let max = row.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<Real>().ln();
        for j in 0..k {
            let logp = row[j] - lse;
            probs[r * k + j] = logp.exp();
            let target = (1.0 - smoothing) * Real::from(u8::from(j == labels[r])) + smoothing / k as Real;
            loss -= target * logp;
        }
    }
    let value = Tensor::scalar(loss / b as Real);
    let labels = labels.to_vec();
    Ok(tape.push("cross_entropy", &[logits], value, move |g| {
        let scale = g.data()[0] / b as Real;
        let grad = (0..b * k)
            .map(|i| {
                let (r, j) = (i / k, i % k);
                let target = (1.0 - smoothing) * Real::from(u8::from(j == labels[r])) + smoothing / k as Real;
                (probs[i] - target) * scale
            })
            .collect();
        Ok(vec![Tensor::from_parts(vec![b, k], grad)])
    }))
}

/// Multiplies each slice along the leading axis by its own constant factor.
pub fn scale_rows(tape: &mut Tape, x: Var, factors: Vec<Real>) -> Result<Var> {
    let tx = tape.value(x);
    let lead = tx.shape().first().copied().unwrap_or(1);
    if factors.len() != lead {
        return Err(Error::shape("scale_rows", tx.shape(), &[factors.len()]));
    }
    let per = tx.numel() / lead;
    let apply = move |t: &Tensor, f: &[Real]| {
        let data = t.data().iter().enumerate().map(|(i, v)| v * f[i / per]).collect();
        Tensor::from_parts(t.shape().to_vec(), data)
    };
    let value = apply(tx, &factors);
    Ok(tape.push("scale_rows", &[x], value, move |g| Ok(vec![apply(g, &factors)])))
}
