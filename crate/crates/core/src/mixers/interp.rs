//! Bicubic resampling of half-spectrum filters to new spatial extents.

use crate::error::{Error, Result};
use crate::spectral::half_width;
use crate::tensor::{Real, Tensor};

/// Catmull-Rom cubic convolution kernel (`a = −0.5`).
fn cubic(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        ((A + 2.0) * t - (A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((A * t - 5.0 * A) * t + 8.0 * A) * t - 4.0 * A
    } else {
        0.0
    }
}

/// Four clamped source taps and weights for each output index, using
/// half-pixel centres.
fn taps(input: usize, output: usize) -> Vec<([usize; 4], [f64; 4])> {
    (0..output)
        .map(|o| {
            let src = (o as f64 + 0.5) * input as f64 / output as f64 - 0.5;
            let base = src.floor();
            let mut idx = [0; 4];
            let mut wts = [0.0; 4];
            for k in 0..4 {
                let t = base as i64 + k as i64 - 1;
                idx[k] = t.clamp(0, input as i64 - 1) as usize;
                wts[k] = cubic(src - t as f64);
            }
            (idx, wts)
        })
        .collect()
}

/// Resamples a `[H, Wh, ...]` filter tensor (half-spectrum of width `W`) to
/// `[new_h, ⌊new_w/2⌋+1, ...]`. Every trailing component, real and
/// imaginary parts included, is an independent plane. Two separable passes,
/// rows first.
pub fn interpolate_filter_basis(basis: &Tensor, new_h: usize, new_w: usize) -> Result<Tensor> {
    if new_h == 0 || new_w == 0 {
        return Err(Error::contract(
            "interpolate_filter_basis",
            format!("target extents must be positive, got {new_h}×{new_w}"),
        ));
    }
    let shape = basis.shape();
    if shape.len() < 2 {
        return Err(Error::contract("interpolate_filter_basis", format!("expected [H, Wh, ...], got {shape:?}")));
    }
    let (h, wh) = (shape[0], shape[1]);
    let nwh = half_width(new_w);
    if (h, wh) == (new_h, nwh) {
        return Ok(basis.clone());
    }
    let planes: usize = shape[2..].iter().product();
    let src = basis.data();

    // Along the width axis: [h, wh, p] → [h, nwh, p].
    let tw = taps(wh, nwh);
    let mut mid = vec![0.0f64; h * nwh * planes];
    for y in 0..h {
        for (x, (idx, wts)) in tw.iter().enumerate() {
            let dst = &mut mid[(y * nwh + x) * planes..(y * nwh + x + 1) * planes];
            for k in 0..4 {
                let row = &src[(y * wh + idx[k]) * planes..(y * wh + idx[k] + 1) * planes];
                for (d, &v) in dst.iter_mut().zip(row) {
                    *d += wts[k] * v as f64;
                }
            }
        }
    }
    // Along the height axis: [h, nwh, p] → [new_h, nwh, p].
    let th = taps(h, new_h);
    let stride = nwh * planes;
    let mut out = vec![0.0 as Real; new_h * stride];
    for (y, (idx, wts)) in th.iter().enumerate() {
        let dst = &mut out[y * stride..(y + 1) * stride];
        for (j, d) in dst.iter_mut().enumerate() {
            let mut acc = 0.0f64;
            for k in 0..4 {
                acc += wts[k] * mid[idx[k] * stride + j];
            }
            *d = acc as Real;
        }
    }
    let mut new_shape = shape.to_vec();
    new_shape[0] = new_h;
    new_shape[1] = nwh;
    Tensor::new(new_shape, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_extents_are_bitwise_identity() {
        let t = Tensor::from_fn([7, 4, 3, 2], |i| (i as Real).sin());
        assert_eq!(interpolate_filter_basis(&t, 7, 7).unwrap(), t);
        assert_eq!(interpolate_filter_basis(&t, 7, 6).unwrap(), t);
    }

    #[test]
    fn constants_survive_resampling() {
        let t = Tensor::full([5, 3, 2, 2], 0.375);
        let r = interpolate_filter_basis(&t, 11, 17).unwrap();
        assert_eq!(r.shape(), &[11, 9, 2, 2]);
        assert!(r.data().iter().all(|v| (v - 0.375).abs() < 1e-14));
    }

    #[test]
    fn zero_extent_is_rejected() {
        let t = Tensor::ones([2, 2, 2]);
        assert!(interpolate_filter_basis(&t, 0, 4).is_err());
    }
}
