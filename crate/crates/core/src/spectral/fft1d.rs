use std::cell::Cell;
use std::f64::consts::PI;

use crate::tensor::{Cplx, Real};

thread_local! {
    static BUTTERFLIES: Cell<u64> = const { Cell::new(0) };
}

/// Radix-2 butterflies executed on this thread since the last reset.
pub fn butterfly_count() -> u64 {
    BUTTERFLIES.with(Cell::get)
}

pub fn reset_butterfly_count() {
    BUTTERFLIES.with(|c| c.set(0));
}

fn count_butterflies(n: u64) {
    BUTTERFLIES.with(|c| c.set(c.get() + n));
}

fn unit(angle: f64) -> Cplx {
    Cplx::new(angle.cos() as Real, angle.sin() as Real)
}

/// Unnormalized 1D complex DFT of a fixed length.
#[derive(Debug)]
pub(crate) enum Fft1d {
    Radix2 {
        n: usize,
        /// `e^{-2πi j/n}` for `j < n/2`.
        twiddles: Vec<Cplx>,
        bitrev: Vec<usize>,
    },
    Bluestein {
        n: usize,
        /// `e^{-πi k²/n}`.
        chirp: Vec<Cplx>,
        /// Transform of the conjugate chirp filter, pre-divided by the inner length.
        filter_hat: Vec<Cplx>,
        inner: Box<Fft1d>,
    },
}

impl Fft1d {
    pub(crate) fn new(n: usize) -> Self {
        assert!(n > 0, "transform length must be positive");
        if n.is_power_of_two() {
            Self::radix2(n)
        } else {
            Self::bluestein(n)
        }
    }

    fn radix2(n: usize) -> Self {
        let twiddles = (0..n / 2).map(|j| unit(-2.0 * PI * j as f64 / n as f64)).collect();
        let bits = n.trailing_zeros();
        let bitrev = (0..n).map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) }).collect();
        Fft1d::Radix2 { n, twiddles, bitrev }
    }

    fn bluestein(n: usize) -> Self {
        let m = (2 * n - 1).next_power_of_two();
        let inner = Self::radix2(m);
        // k² mod 2n keeps the chirp angle exact for large k.
        let two_n = 2 * n as u64;
        let chirp: Vec<Cplx> = (0..n as u64).map(|k| unit(-PI * ((k * k) % two_n) as f64 / n as f64)).collect();
        let mut filter = vec![Cplx::new(0.0, 0.0); m];
        filter[0] = chirp[0].conj();
        for k in 1..n {
            filter[k] = chirp[k].conj();
            filter[m - k] = chirp[k].conj();
        }
        inner.process(&mut filter, false);
        let scale = 1.0 / m as Real;
        for v in &mut filter {
            *v *= scale;
        }
        Fft1d::Bluestein { n, chirp, filter_hat: filter, inner: Box::new(inner) }
    }

    pub(crate) fn len(&self) -> usize {
        match self {
            Fft1d::Radix2 { n, .. } | Fft1d::Bluestein { n, .. } => *n,
        }
    }

    /// In-place transform; `inverse` flips the exponent sign. No scaling.
    pub(crate) fn process(&self, buf: &mut [Cplx], inverse: bool) {
        debug_assert_eq!(buf.len(), self.len());
        match self {
            Fft1d::Radix2 { n, twiddles, bitrev } => radix2_in_place(buf, *n, twiddles, bitrev, inverse),
            Fft1d::Bluestein { n, chirp, filter_hat, inner } => {
                if inverse {
                    // IDFT(x) = conj(DFT(conj(x)))
                    for v in buf.iter_mut() {
                        *v = v.conj();
                    }
                    bluestein_forward(buf, *n, chirp, filter_hat, inner);
                    for v in buf.iter_mut() {
                        *v = v.conj();
                    }
                } else {
                    bluestein_forward(buf, *n, chirp, filter_hat, inner);
                }
            }
        }
    }
}

fn radix2_in_place(buf: &mut [Cplx], n: usize, twiddles: &[Cplx], bitrev: &[usize], inverse: bool) {
    for (i, &j) in bitrev.iter().enumerate().take(n) {
        if i < j {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let stride = n / len;
        for start in (0..n).step_by(len) {
            for j in 0..half {
                let mut w = twiddles[j * stride];
                if inverse {
                    w = w.conj();
                }
                let t = buf[start + j + half] * w;
                let u = buf[start + j];
                buf[start + j] = u + t;
                buf[start + j + half] = u - t;
            }
        }
        count_butterflies((n / 2) as u64);
        len <<= 1;
    }
}

fn bluestein_forward(buf: &mut [Cplx], n: usize, chirp: &[Cplx], filter_hat: &[Cplx], inner: &Fft1d) {
    let m = inner.len();
    let mut work = vec![Cplx::new(0.0, 0.0); m];
    for k in 0..n {
        work[k] = buf[k] * chirp[k];
    }
    inner.process(&mut work, false);
    for (w, f) in work.iter_mut().zip(filter_hat) {
        *w *= f;
    }
    inner.process(&mut work, true);
    for k in 0..n {
        buf[k] = work[k] * chirp[k];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(x: &[Cplx], inverse: bool) -> Vec<Cplx> {
        let n = x.len();
        let sign = if inverse { 1.0 } else { -1.0 };
        (0..n)
            .map(|k| {
                x.iter().enumerate().map(|(j, &v)| v * unit(sign * 2.0 * PI * ((j * k) % n) as f64 / n as f64)).sum()
            })
            .collect()
    }

    #[test]
    fn matches_direct_sum_for_many_lengths() {
        for n in [1usize, 2, 3, 4, 5, 6, 7, 8, 12, 14, 16, 28, 29, 56] {
            let x: Vec<Cplx> =
                (0..n).map(|i| Cplx::new((i as Real * 0.37).sin(), (i as Real * 1.3).cos() - 0.2)).collect();
            let plan = Fft1d::new(n);
            for inverse in [false, true] {
                let mut y = x.clone();
                plan.process(&mut y, inverse);
                let want = naive(&x, inverse);
                for (a, b) in y.iter().zip(&want) {
                    assert!((a - b).norm() < 1e-11, "n={n} inverse={inverse}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn power_of_two_counts_half_n_log_n() {
        let plan = Fft1d::new(64);
        let mut buf = vec![Cplx::new(1.0, 0.0); 64];
        reset_butterfly_count();
        plan.process(&mut buf, false);
        assert_eq!(butterfly_count(), 32 * 6);
    }
}
