//! Orthonormal 2D real FFT.
//!
//! Forward and inverse transforms both scale by `1/√(HW)`, so the pair is
//! unitary on the space of real signals. Spectra are stored as the Hermitian
//! half `H × (⌊W/2⌋+1)`; the remaining columns follow from
//! `X(H−h, W−w) = conj(X(h, w))`.
//!
//! Power-of-two axes use iterative radix-2, every other length goes through
//! Bluestein's chirp-z reduction onto a power-of-two convolution.

mod fft1d;

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use fft1d::Fft1d;
pub use fft1d::{butterfly_count, reset_butterfly_count};

use crate::error::{Error, Result};
use crate::tensor::{ComplexTensor, Cplx, Real, Tensor};

/// Width of the stored half-spectrum for a real signal of width `w`.
pub fn half_width(w: usize) -> usize {
    w / 2 + 1
}

/// Precomputed transforms for one `(H, W)` pair.
#[derive(Debug)]
pub struct SpectralPlan {
    height: usize,
    width: usize,
    rows: Fft1d,
    cols: Fft1d,
    norm: Real,
}

impl SpectralPlan {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::contract("spectral plan", format!("extents must be positive, got {height}×{width}")));
        }
        Ok(SpectralPlan {
            height,
            width,
            rows: Fft1d::new(width),
            cols: Fft1d::new(height),
            norm: 1.0 / ((height * width) as Real).sqrt(),
        })
    }

    /// Shared plan for `(height, width)`, built once per process.
    pub fn cached(height: usize, width: usize) -> Result<Arc<SpectralPlan>> {
        type Plans = HashMap<(usize, usize), Arc<SpectralPlan>>;
        static CACHE: OnceLock<Mutex<Plans>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        if let Some(plan) = cache.lock().expect("plan cache poisoned").get(&(height, width)) {
            return Ok(Arc::clone(plan));
        }
        let plan = Arc::new(SpectralPlan::new(height, width)?);
        let mut guard = cache.lock().expect("plan cache poisoned");
        Ok(Arc::clone(guard.entry((height, width)).or_insert(plan)))
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn half_width(&self) -> usize {
        half_width(self.width)
    }

    /// Columns `l` of the half-spectrum that stand for a conjugate pair
    /// (everything except DC and, for even widths, Nyquist).
    pub fn is_paired_column(&self, l: usize) -> bool {
        l != 0 && 2 * l != self.width
    }

    /// Forward transform over the middle axes of a `[outer, H, W, inner]`
    /// buffer into `[outer, H, W/2+1, inner]`.
    pub(crate) fn forward_strided(&self, x: &[Real], outer: usize, inner: usize) -> Vec<Cplx> {
        let (h, w, wh) = (self.height, self.width, self.half_width());
        debug_assert_eq!(x.len(), outer * h * w * inner);
        let mut out = vec![Cplx::new(0.0, 0.0); outer * h * wh * inner];
        let mut row = vec![Cplx::new(0.0, 0.0); w];
        let mut col = vec![Cplx::new(0.0, 0.0); h];
        let mut half = vec![Cplx::new(0.0, 0.0); h * wh];
        for o in 0..outer {
            for c in 0..inner {
                for r in 0..h {
                    let base = (o * h + r) * w * inner + c;
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = Cplx::new(x[base + j * inner], 0.0);
                    }
                    self.rows.process(&mut row, false);
                    half[r * wh..(r + 1) * wh].copy_from_slice(&row[..wh]);
                }
                for l in 0..wh {
                    for (r, v) in col.iter_mut().enumerate() {
                        *v = half[r * wh + l];
                    }
                    self.cols.process(&mut col, false);
                    for (r, v) in col.iter().enumerate() {
                        out[((o * h + r) * wh + l) * inner + c] = v * self.norm;
                    }
                }
            }
        }
        out
    }

    /// Inverse of [`SpectralPlan::forward_strided`]. The stored half is
    /// authoritative: conjugate columns are rebuilt from it and the imaginary
    /// parts of the self-conjugate columns are ignored.
    pub(crate) fn inverse_strided(&self, spec: &[Cplx], outer: usize, inner: usize) -> Vec<Real> {
        let (h, w, wh) = (self.height, self.width, self.half_width());
        debug_assert_eq!(spec.len(), outer * h * wh * inner);
        let mut out = vec![0.0; outer * h * w * inner];
        let mut row = vec![Cplx::new(0.0, 0.0); w];
        let mut col = vec![Cplx::new(0.0, 0.0); h];
        let mut half = vec![Cplx::new(0.0, 0.0); h * wh];
        for o in 0..outer {
            for c in 0..inner {
                for l in 0..wh {
                    for (r, v) in col.iter_mut().enumerate() {
                        *v = spec[((o * h + r) * wh + l) * inner + c];
                    }
                    self.cols.process(&mut col, true);
                    for (r, v) in col.iter().enumerate() {
                        half[r * wh + l] = *v;
                    }
                }
                for r in 0..h {
                    row[..wh].copy_from_slice(&half[r * wh..(r + 1) * wh]);
                    for l in wh..w {
                        row[l] = row[w - l].conj();
                    }
                    row[0].im = 0.0;
                    if w % 2 == 0 {
                        row[w / 2].im = 0.0;
                    }
                    self.rows.process(&mut row, true);
                    let base = (o * h + r) * w * inner + c;
                    for (j, v) in row.iter().enumerate() {
                        out[base + j * inner] = v.re * self.norm;
                    }
                }
            }
        }
        out
    }

    fn check_trailing(&self, shape: &[usize], width: usize) -> Result<usize> {
        let n = shape.len();
        if n < 2 || shape[n - 2] != self.height || shape[n - 1] != width {
            return Err(Error::Plan { plan: (self.height, self.width), got: shape.to_vec() });
        }
        Ok(shape[..n - 2].iter().product())
    }
}

/// Orthonormal real 2D FFT over the two trailing axes.
pub fn rfft2(x: &Tensor, plan: &SpectralPlan) -> Result<ComplexTensor> {
    let outer = plan.check_trailing(x.shape(), plan.width)?;
    let data = plan.forward_strided(x.data(), outer, 1);
    let mut shape = x.shape().to_vec();
    *shape.last_mut().expect("rank checked") = plan.half_width();
    Ok(ComplexTensor::from_parts(shape, data))
}

/// Inverse of [`rfft2`]; the output is real with trailing extents `(H, W)`.
pub fn irfft2(spec: &ComplexTensor, plan: &SpectralPlan) -> Result<Tensor> {
    let outer = plan.check_trailing(spec.shape(), plan.half_width())?;
    let data = plan.inverse_strided(spec.data(), outer, 1);
    let mut shape = spec.shape().to_vec();
    *shape.last_mut().expect("rank checked") = plan.width;
    Ok(Tensor::from_parts(shape, data))
}

/// Expands a `[H, W/2+1]` half-spectrum to the full `[H, W]` grid.
pub fn hermitian_full(half: &[Cplx], height: usize, width: usize) -> Vec<Cplx> {
    let wh = half_width(width);
    debug_assert_eq!(half.len(), height * wh);
    let mut full = vec![Cplx::new(0.0, 0.0); height * width];
    for r in 0..height {
        for l in 0..width {
            full[r * width + l] =
                if l < wh { half[r * wh + l] } else { half[((height - r) % height) * wh + (width - l)].conj() };
        }
    }
    full
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn impulse_gives_flat_spectrum() {
        let mut x = Tensor::zeros([4, 4]);
        x.data_mut()[0] = 1.0;
        let plan = SpectralPlan::new(4, 4).unwrap();
        let spec = rfft2(&x, &plan).unwrap();
        assert_eq!(spec.shape(), &[4, 3]);
        for z in spec.data() {
            assert!((z.re - 0.25).abs() < 1e-15 && z.im.abs() < 1e-15, "{z}");
        }
    }

    #[test]
    fn constant_gives_dc_only() {
        let plan = SpectralPlan::new(2, 2).unwrap();
        let spec = rfft2(&Tensor::ones([2, 2]), &plan).unwrap();
        assert!((spec.data()[0] - Cplx::new(2.0, 0.0)).norm() < 1e-15);
        for z in &spec.data()[1..] {
            assert!(z.norm() < 1e-15);
        }
        let back = irfft2(&spec, &plan).unwrap();
        assert!(back.max_abs_diff(&Tensor::ones([2, 2])).unwrap() < 1e-15);
    }

    #[test]
    fn dc_only_spectrum_inverts_to_ones() {
        let plan = SpectralPlan::new(2, 2).unwrap();
        let mut spec = ComplexTensor::zeros([2, 2]);
        spec.data_mut()[0] = Cplx::new(2.0, 0.0);
        let x = irfft2(&spec, &plan).unwrap();
        assert!(x.max_abs_diff(&Tensor::ones([2, 2])).unwrap() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_a_plan_error() {
        let plan = SpectralPlan::new(4, 4).unwrap();
        let err = rfft2(&Tensor::zeros([4, 5]), &plan).unwrap_err();
        assert!(matches!(err, Error::Plan { .. }));
        let err = irfft2(&ComplexTensor::zeros([4, 4]), &plan).unwrap_err();
        assert!(matches!(err, Error::Plan { .. }));
    }

    #[test]
    fn cached_plans_are_shared() {
        let a = SpectralPlan::cached(6, 10).unwrap();
        let b = SpectralPlan::cached(6, 10).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
    }

    #[test]
    fn stored_half_is_authoritative() {
        // Imaginary DC residue is dropped rather than leaking into the output.
        let plan = SpectralPlan::new(3, 4).unwrap();
        let mut spec = ComplexTensor::zeros([3, 3]);
        spec.data_mut()[0] = Cplx::new(3.0, 5.0);
        let x = irfft2(&spec, &plan).unwrap();
        for v in x.data() {
            assert!((v - 3.0 / 12f64.sqrt() as Real).abs() < 1e-14);
        }
    }
}
