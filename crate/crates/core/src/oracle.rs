//! Brute-force reference computations.
//!
//! Every routine here evaluates a definition directly, with no shared code
//! path into the fast implementations it is used to check.

use std::f64::consts::PI;

use crate::tensor::{Cplx, Real};

fn cis(angle: f64) -> Cplx {
    Cplx::new(angle.cos() as Real, angle.sin() as Real)
}

/// Full orthonormal 2D DFT by the double sum
/// `x̃(h′,w′) = Σ x(h,w)·e^{−2πi(hh′/H + ww′/W)} / √(HW)`.
pub fn dft2(x: &[Real], height: usize, width: usize) -> Vec<Cplx> {
    let norm = 1.0 / ((height * width) as f64).sqrt();
    let mut out = Vec::with_capacity(height * width);
    for kh in 0..height {
        for kw in 0..width {
            let mut acc = Cplx::new(0.0, 0.0);
            for h in 0..height {
                for w in 0..width {
                    let phase = ((h * kh) % height) as f64 / height as f64 + ((w * kw) % width) as f64 / width as f64;
                    acc += cis(-2.0 * PI * phase) * x[h * width + w];
                }
            }
            out.push(acc * norm as Real);
        }
    }
    out
}

/// Real signal from a stored half-spectrum `[H, W/2+1]`, evaluating
/// `y = Σ_{h′, w′<W/2+1} c_{w′}·Re(X·e^{+iθ}) / √(HW)` with `c = 2` on the
/// columns that stand for a conjugate pair and `c = 1` on DC / Nyquist.
pub fn idft2_half(half: &[Cplx], height: usize, width: usize) -> Vec<Real> {
    let wh = width / 2 + 1;
    let norm = 1.0 / ((height * width) as f64).sqrt();
    let mut out = vec![0.0; height * width];
    for h in 0..height {
        for w in 0..width {
            let mut acc = 0.0f64;
            for kh in 0..height {
                for kw in 0..wh {
                    let weight = if kw == 0 || 2 * kw == width { 1.0 } else { 2.0 };
                    let phase = ((h * kh) % height) as f64 / height as f64 + ((w * kw) % width) as f64 / width as f64;
                    let z = half[kh * wh + kw] * cis(2.0 * PI * phase);
                    acc += weight * z.re as f64;
                }
            }
            out[h * width + w] = (acc * norm) as Real;
        }
    }
    out
}

/// Cyclic (wrap-around) 2D convolution `(x ⊛ k)(h,w) = Σ x(a,b)·k(h−a, w−b)`.
pub fn cyclic_conv2d(x: &[Real], k: &[Real], height: usize, width: usize) -> Vec<Real> {
    let mut out = vec![0.0; height * width];
    for h in 0..height {
        for w in 0..width {
            let mut acc = 0.0;
            for a in 0..height {
                for b in 0..width {
                    let kh = (h + height - a) % height;
                    let kw = (w + width - b) % width;
                    acc += x[a * width + b] * k[kh * width + kw];
                }
            }
            out[h * width + w] = acc;
        }
    }
    out
}

/// Triple-loop matrix product.
pub fn matmul(a: &[Real], b: &[Real], m: usize, k: usize, n: usize) -> Vec<Real> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a[i * k + p] * b[p * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

/// Per-channel zero-padded cross-correlation on `[B, H, W, C]` with a
/// `[C, Kh, Kw]` kernel, stride one.
pub fn depthwise_conv(x: &[Real], dims: [usize; 4], k: &[Real], kh: usize, kw: usize) -> Vec<Real> {
    let [b, h, w, c] = dims;
    let (ph, pw) = ((kh - 1) / 2, (kw - 1) / 2);
    let mut out = vec![0.0; b * h * w * c];
    for n in 0..b {
        for y in 0..h {
            for xpos in 0..w {
                for ch in 0..c {
                    let mut acc = 0.0;
                    for i in 0..kh {
                        for j in 0..kw {
                            let sy = y as isize + i as isize - ph as isize;
                            let sx = xpos as isize + j as isize - pw as isize;
                            if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                continue;
                            }
                            let (sy, sx) = (sy as usize, sx as usize);
                            acc += x[((n * h + sy) * w + sx) * c + ch] * k[(ch * kh + i) * kw + j];
                        }
                    }
                    out[((n * h + y) * w + xpos) * c + ch] = acc;
                }
            }
        }
    }
    out
}

/// Catmull-Rom cubic convolution weight (`a = −0.5`).
pub fn cubic_weight(t: f64) -> f64 {
    let a = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a
    } else {
        0.0
    }
}

/// Bicubic resampling of a `[h, w]` plane to `[nh, nw]` by evaluating the
/// 4×4 tensor-product kernel at each output pixel. Half-pixel centres,
/// clamped borders.
pub fn bicubic_dense(plane: &[Real], h: usize, w: usize, nh: usize, nw: usize) -> Vec<Real> {
    let mut out = vec![0.0; nh * nw];
    for oy in 0..nh {
        let sy = (oy as f64 + 0.5) * h as f64 / nh as f64 - 0.5;
        let fy = sy.floor();
        for ox in 0..nw {
            let sx = (ox as f64 + 0.5) * w as f64 / nw as f64 - 0.5;
            let fx = sx.floor();
            let mut acc = 0.0f64;
            for dy in -1i64..=2 {
                let ty = fy as i64 + dy;
                let wy = cubic_weight(sy - ty as f64);
                let cy = ty.clamp(0, h as i64 - 1) as usize;
                for dx in -1i64..=2 {
                    let tx = fx as i64 + dx;
                    let wx = cubic_weight(sx - tx as f64);
                    let cx = tx.clamp(0, w as i64 - 1) as usize;
                    acc += wy * wx * plane[cy * w + cx] as f64;
                }
            }
            out[oy * nw + ox] = acc as Real;
        }
    }
    out
}

/// Unbiased HSIC of two `n × n` Gram matrices, written out entry by entry.
pub fn hsic_unbiased(k: &[f64], l: &[f64], n: usize) -> f64 {
    assert!(n >= 4, "unbiased HSIC needs n >= 4");
    let kt = |i: usize, j: usize| if i == j { 0.0 } else { k[i * n + j] };
    let lt = |i: usize, j: usize| if i == j { 0.0 } else { l[i * n + j] };
    let mut trace = 0.0;
    let mut sum_k = 0.0;
    let mut sum_l = 0.0;
    let mut sum_kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            trace += kt(i, j) * lt(j, i);
            sum_k += kt(i, j);
            sum_l += lt(i, j);
            for m in 0..n {
                sum_kl += kt(i, m) * lt(m, j);
            }
        }
    }
    let nf = n as f64;
    (trace + sum_k * sum_l / ((nf - 1.0) * (nf - 2.0)) - 2.0 / (nf - 2.0) * sum_kl) / (nf * (nf - 3.0))
}

/// Linear Gram matrix `X Xᵀ` of an `[n, d]` row set.
pub fn gram(x: &[Real], n: usize, d: usize) -> Vec<f64> {
    let mut g = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            g[i * n + j] = (0..d).map(|p| x[i * d + p] as f64 * x[j * d + p] as f64).sum();
        }
    }
    g
}

/// Dense multi-head attention over `[T, C]` tokens:
/// `softmax(Q Kᵀ / √d) V` per head, then the output projection.
pub fn attention(tokens: &[Real], t: usize, c: usize, heads: usize, w_qkv: &[Real], w_out: &[Real]) -> Vec<Real> {
    let d = c / heads;
    let qkv = matmul(tokens, w_qkv, t, c, 3 * c);
    let mut mixed = vec![0.0; t * c];
    for hd in 0..heads {
        for i in 0..t {
            let scores: Vec<f64> = (0..t)
                .map(|j| {
                    (0..d)
                        .map(|p| qkv[i * 3 * c + hd * d + p] as f64 * qkv[j * 3 * c + c + hd * d + p] as f64)
                        .sum::<f64>()
                        / (d as f64).sqrt()
                })
                .collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            for p in 0..d {
                let v: f64 = (0..t).map(|j| exps[j] / total * qkv[j * 3 * c + 2 * c + hd * d + p] as f64).sum();
                mixed[i * c + hd * d + p] = v as Real;
            }
        }
    }
    matmul(&mixed, w_out, t, c, c)
}
