//! Convolutions on channel-last `[B, H, W, C]` maps.

use super::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{gemm_acc, gemm_nt_acc, gemm_tn_acc, Real, Tensor};

/// Per-channel 2D cross-correlation with a `[C, Kh, Kw]` kernel, stride one,
/// zero padding `((Kh−1)/2, (Kw−1)/2)`. Kernel extents must be odd.
pub fn depthwise_conv(tape: &mut Tape, x: Var, kernel: Var) -> Result<Var> {
    let tx = tape.value(x).clone();
    let tk = tape.value(kernel).clone();
    let [b, h, w, c] = tx.dims4("depthwise_conv")?;
    let [kc, kh, kw] = match tk.shape()[..] {
        [a, p, q] => [a, p, q],
        _ => return Err(Error::shape("depthwise_conv", tx.shape(), tk.shape())),
    };
    if kc != c {
        return Err(Error::shape("depthwise_conv", tx.shape(), tk.shape()));
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::contract("depthwise_conv", format!("kernel extents must be odd, got {kh}×{kw}")));
    }
    let (ph, pw) = ((kh - 1) / 2, (kw - 1) / 2);
    // Tap-major copy of the kernel so the channel loop is contiguous.
    let mut taps = vec![0.0; kh * kw * c];
    for ch in 0..c {
        for t in 0..kh * kw {
            taps[t * c + ch] = tk.data()[ch * kh * kw + t];
        }
    }
    // Visits every (output pixel, tap) pair that lands inside the input.
    let for_each_tap = move |mut f: Box<dyn FnMut(usize, usize, usize) + '_>| {
        for n in 0..b {
            for y in 0..h {
                for xo in 0..w {
                    let out = ((n * h + y) * w + xo) * c;
                    for i in 0..kh {
                        let sy = y + i;
                        if sy < ph || sy - ph >= h {
                            continue;
                        }
                        for j in 0..kw {
                            let sx = xo + j;
                            if sx < pw || sx - pw >= w {
                                continue;
                            }
                            let src = ((n * h + sy - ph) * w + sx - pw) * c;
                            f(out, src, (i * kw + j) * c);
                        }
                    }
                }
            }
        }
    };
    let mut out = vec![0.0; tx.numel()];
    {
        let xd = tx.data();
        for_each_tap(Box::new(|o, s, t| {
            for ch in 0..c {
                out[o + ch] += xd[s + ch] * taps[t + ch];
            }
        }));
    }
    let value = Tensor::from_parts(tx.shape().to_vec(), out);
    Ok(tape.push("depthwise_conv", &[x, kernel], value, move |g| {
        let (gd, xd) = (g.data(), tx.data());
        let mut gx = vec![0.0; gd.len()];
        let mut gtaps = vec![0.0; kh * kw * c];
        for_each_tap(Box::new(|o, s, t| {
            for ch in 0..c {
                gx[s + ch] += gd[o + ch] * taps[t + ch];
                gtaps[t + ch] += gd[o + ch] * xd[s + ch];
            }
        }));
        let mut gk = vec![0.0; c * kh * kw];
        for ch in 0..c {
            for t in 0..kh * kw {
                gk[ch * kh * kw + t] = gtaps[t * c + ch];
            }
        }
        Ok(vec![Tensor::from_parts(vec![b, h, w, c], gx), Tensor::from_parts(vec![c, kh, kw], gk)])
    }))
}

/// Output extent of a strided convolution, or `None` when the window does
/// not fit.
pub fn conv_out_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Dense strided convolution with a `[K, K, C_in, C_out]` kernel.
pub fn conv2d(tape: &mut Tape, x: Var, weight: Var, stride: usize, pad: usize) -> Result<Var> {
    let tx = tape.value(x).clone();
    let tw = tape.value(weight).clone();
    let [b, h, w, cin] = tx.dims4("conv2d")?;
    let [k, k2, wcin, cout] = tw.dims4("conv2d")?;
    if k != k2 || wcin != cin {
        return Err(Error::shape("conv2d", tx.shape(), tw.shape()));
    }
    let (Some(ho), Some(wo)) = (conv_out_extent(h, k, stride, pad), conv_out_extent(w, k, stride, pad)) else {
        return Err(Error::contract("conv2d", format!("kernel {k} stride {stride} pad {pad} does not fit {h}×{w}")));
    };
    let patch = k * k * cin;
    let rows = b * ho * wo;
    // Maps (row, tap) to the source pixel offset, skipping padding.
    let gather = move |mut f: Box<dyn FnMut(usize, usize) + '_>| {
        for n in 0..b {
            for y in 0..ho {
                for xo in 0..wo {
                    let row = (n * ho + y) * wo + xo;
                    for i in 0..k {
                        let sy = (y * stride + i) as isize - pad as isize;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for j in 0..k {
                            let sx = (xo * stride + j) as isize - pad as isize;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            let src = ((n * h + sy as usize) * w + sx as usize) * cin;
                            f(row * patch + (i * k + j) * cin, src);
                        }
                    }
                }
            }
        }
    };
    let mut cols = vec![0.0; rows * patch];
    {
        let xd = tx.data();
        gather(Box::new(|dst, src| cols[dst..dst + cin].copy_from_slice(&xd[src..src + cin])));
    }
    let mut out = vec![0.0; rows * cout];
    gemm_acc(&cols, tw.data(), &mut out, rows, patch, cout);
    let value = Tensor::from_parts(vec![b, ho, wo, cout], out);
    Ok(tape.push("conv2d", &[x, weight], value, move |g| {
        let mut gcols = vec![0.0; rows * patch];
        gemm_nt_acc(g.data(), tw.data(), &mut gcols, rows, cout, patch);
        let mut gw = vec![0.0; patch * cout];
        gemm_tn_acc(&cols, g.data(), &mut gw, rows, patch, cout);
        let mut gx = vec![0.0 as Real; b * h * w * cin];
        gather(Box::new(|dst, src| {
            for (a, v) in gx[src..src + cin].iter_mut().zip(&gcols[dst..dst + cin]) {
                *a += v;
            }
        }));
        Ok(vec![Tensor::from_parts(vec![b, h, w, cin], gx), Tensor::from_parts(vec![k, k, cin, cout], gw)])
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_extents_follow_pyramid() {
        assert_eq!(conv_out_extent(224, 7, 4, 2), Some(56));
        assert_eq!(conv_out_extent(56, 3, 2, 1), Some(28));
        assert_eq!(conv_out_extent(7, 3, 2, 1), Some(4));
        assert_eq!(conv_out_extent(32, 7, 4, 2), Some(8));
        assert_eq!(conv_out_extent(1, 7, 4, 0), None);
    }

    #[test]
    fn even_kernel_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros([1, 4, 4, 2]));
        let k = tape.leaf(Tensor::zeros([2, 2, 3]));
        assert!(matches!(depthwise_conv(&mut tape, x, k), Err(Error::Contract { .. })));
    }

    #[test]
    fn pointlike_conv_matches_linear() {
        // A 1×1 stride-1 convolution is a per-pixel matmul.
        let mut tape = Tape::new();
        let xt = Tensor::from_fn([2, 3, 3, 4], |i| (i as Real * 0.31).cos());
        let wt = Tensor::from_fn([1, 1, 4, 5], |i| (i as Real * 0.17).sin());
        let x = tape.leaf(xt);
        let w = tape.leaf(wt.clone());
        let y = conv2d(&mut tape, x, w, 1, 0).unwrap();
        let w2 = tape.leaf(wt.reshape([4, 5]).unwrap());
        let z = crate::autograd::ops::linear(&mut tape, x, w2).unwrap();
        assert!(tape.value(y).max_abs_diff(tape.value(z)).unwrap() < 1e-14);
    }
}
