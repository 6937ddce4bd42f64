#![allow(clippy::unnecessary_cast)]

mod common;

use std::path::PathBuf;

use common::{gaussian, uniform};
use dfformer_core::analysis::{
    filter_ppm, gram, hsic_unbiased, linear_cka, log_amplitude_profile, visualize_filter, CkaAccumulator,
};
use dfformer_core::spectral::{half_width, rfft2, SpectralPlan};
use dfformer_core::{oracle, Real, Tensor};
use proptest::prelude::*;

/// Random orthogonal `d × d` matrix by Gram-Schmidt on Gaussian columns.
fn orthogonal(d: usize, seed: u64) -> Vec<f64> {
    let g = gaussian(&[d, d], seed, "q");
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(d);
    for j in 0..d {
        let mut v: Vec<f64> = (0..d).map(|i| g.data()[i * d + j] as f64).collect();
        for u in &q {
            let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(x, a)| *x -= dot * a);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        q.push(v.into_iter().map(|x| x / norm).collect());
    }
    (0..d * d).map(|k| q[k % d][k / d]).collect()
}

fn rotate(x: &Tensor, q: &[f64]) -> Tensor {
    let (n, d) = (x.shape()[0], x.shape()[1]);
    Tensor::from_fn([n, d], |k| {
        let (i, j) = (k / d, k % d);
        (0..d).map(|p| x.data()[i * d + p] as f64 * q[p * d + j]).sum::<f64>() as Real
    })
}

fn cka(x: &Tensor, y: &Tensor) -> f64 {
    let mut acc = CkaAccumulator::default();
    acc.update(x, y).unwrap();
    acc.value()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cka_with_itself_is_one(seed in any::<u64>(), n in 4usize..20, d in 1usize..12) {
        let x = gaussian(&[n, d], seed, "x");
        prop_assert!((cka(&x, &x) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn cka_ignores_orthogonal_maps_and_scale(seed in any::<u64>(), a in 0.01f64..100.0) {
        let x = gaussian(&[16, 10], seed, "x");
        let y = gaussian(&[16, 6], seed, "y");
        let base = cka(&x, &y);
        prop_assert!((cka(&rotate(&x, &orthogonal(10, seed)), &y) - base).abs() < 1e-6);
        prop_assert!((cka(&x.scale(a as Real), &y) - base).abs() < 1e-6);
    }

    #[test]
    fn hsic_matches_entrywise_formula(seed in any::<u64>(), n in 4usize..12) {
        let x = uniform(&[n, 5], seed, "x");
        let y = uniform(&[n, 3], seed, "y");
        let (k, l) = (gram(&x), gram(&y));
        prop_assert_eq!(&k, &oracle::gram(x.data(), n, 5));
        let fast = hsic_unbiased(&k, &l, n).unwrap();
        let slow = oracle::hsic_unbiased(&k, &l, n);
        prop_assert!((fast - slow).abs() < 1e-10 * slow.abs().max(1.0));
    }
}

#[test]
fn cka_matrix_sums_hsic_over_batches() {
    let layers_a: Vec<Vec<Tensor>> =
        (0..2).map(|l| (0..3).map(|t| uniform(&[8, 4 + l], t, &format!("a{l}"))).collect()).collect();
    let layers_b: Vec<Vec<Tensor>> = vec![(0..3).map(|t| uniform(&[8, 5], t, "b")).collect()];
    let r = linear_cka(&layers_a, &layers_b).unwrap();
    assert_eq!((r.rows, r.cols), (2, 1));
    for (i, la) in layers_a.iter().enumerate() {
        let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
        for t in 0..3 {
            let k = oracle::gram(la[t].data(), 8, 4 + i);
            let l = oracle::gram(layers_b[0][t].data(), 8, 5);
            xy += oracle::hsic_unbiased(&k, &l, 8);
            xx += oracle::hsic_unbiased(&k, &k, 8);
            yy += oracle::hsic_unbiased(&l, &l, 8);
        }
        assert!((r.get(i, 0) - xy / (xx * yy).sqrt()).abs() < 1e-10);
    }
    let self_sim = linear_cka(&layers_a, &layers_a).unwrap();
    assert!((self_sim.get(0, 0) - 1.0).abs() < 1e-6);
    assert!((self_sim.get(1, 1) - 1.0).abs() < 1e-6);
}

/// Half-spectrum of real spatial filters: `[H, W/2+1, N, 2]`.
fn spectrum_of_real_filters(h: usize, w: usize, n: usize, seed: u64) -> Tensor {
    let plan = SpectralPlan::new(h, w).unwrap();
    let wh = half_width(w);
    let mut out = vec![0.0; h * wh * n * 2];
    for f in 0..n {
        let k = uniform(&[h, w], seed, &format!("k{f}"));
        let spec = rfft2(&k, &plan).unwrap();
        for (p, z) in spec.data().iter().enumerate() {
            out[(p * n + f) * 2] = z.re;
            out[(p * n + f) * 2 + 1] = z.im;
        }
    }
    Tensor::new(vec![h, wh, n, 2], out).unwrap()
}

#[test]
fn real_filter_images_have_point_symmetry() {
    for s in [7usize, 8, 14] {
        let img = visualize_filter(&spectrum_of_real_filters(s, s, 3, s as u64)).unwrap();
        assert_eq!(img.shape(), &[s, s, 3]);
        // DC sits at (s/2, s/2); (c+dy, c+dx) pairs with (c−dy, c−dx).
        let c = s / 2;
        for y in 0..s {
            for x in 0..s {
                let (my, mx) = ((2 * c + s - y) % s, (2 * c + s - x) % s);
                for f in 0..3 {
                    let a = img.data()[(y * s + x) * 3 + f];
                    let b = img.data()[(my * s + mx) * 3 + f];
                    assert!((a - b).abs() < 1e-12, "{s}: ({y},{x}) vs ({my},{mx})");
                }
            }
        }
    }
}

/// A filter built from integer arithmetic, so its image depends only on
/// correctly rounded sqrt and division.
fn golden_filter(h: usize, wh: usize) -> Tensor {
    Tensor::from_fn([h, wh, 2, 2], |i| ((i * 37 + 11) % 101) as Real / 25.0 - 2.0)
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn filter_images_match_golden_files() {
    for (h, wh, name) in [(14, 8, "filter_14x14.ppm"), (7, 4, "filter_7x7.ppm")] {
        let img = visualize_filter(&golden_filter(h, wh)).unwrap();
        let ppm = filter_ppm(&img, 1).unwrap();
        let path = fixture(name);
        if std::env::var_os("DFFORMER_BLESS").is_some() {
            std::fs::write(&path, &ppm).unwrap();
        }
        let golden = std::fs::read(&path).unwrap();
        assert!(ppm == golden, "{name} differs from the stored image");
        // Same bytes on a second run.
        assert_eq!(filter_ppm(&visualize_filter(&golden_filter(h, wh)).unwrap(), 1).unwrap(), golden);
    }
}

#[test]
fn white_noise_profile_is_flat() {
    // B·C = 1024 independent maps.
    let x = gaussian(&[32, 16, 16, 32], 3, "noise");
    let p = log_amplitude_profile(&x, 0).unwrap();
    assert_eq!(p.freq.len(), 9);
    for (f, d) in p.freq.iter().zip(&p.delta_log_amp) {
        if *f >= 0.1 {
            assert!(d.abs() <= 0.2, "freq {f}: {d}");
        }
    }
}

#[test]
fn low_pass_filtered_noise_is_attenuated() {
    // Cyclic Gaussian blur, σ = 1.5 px.
    let (b, s, c) = (8, 16, 16);
    let noise = gaussian(&[b, s, s, c], 5, "noise");
    let kernel: Vec<Real> = (0..s * s)
        .map(|i| {
            let wrap = |v: usize| v.min(s - v) as f64;
            let (dy, dx) = (wrap(i / s), wrap(i % s));
            (-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5)).exp() as Real
        })
        .collect();
    let mut out = vec![0.0; b * s * s * c];
    for n in 0..b {
        for ch in 0..c {
            let plane: Vec<Real> = (0..s * s).map(|p| noise.data()[(n * s * s + p) * c + ch]).collect();
            for (p, v) in oracle::cyclic_conv2d(&plane, &kernel, s, s).into_iter().enumerate() {
                out[(n * s * s + p) * c + ch] = v;
            }
        }
    }
    let blurred = Tensor::new(vec![b, s, s, c], out).unwrap();
    let p = log_amplitude_profile(&blurred, 0).unwrap();
    let mut prev = 0.0;
    for (f, d) in p.freq.iter().zip(&p.delta_log_amp) {
        if *f > 0.25 {
            assert!(*d < -1.0, "freq {f}: {d}");
            assert!(*d < prev, "not decreasing at {f}");
        }
        prev = *d;
    }
}
