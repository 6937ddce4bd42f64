#![allow(clippy::unnecessary_cast)]

mod common;

use common::{gaussian, max_diff, uniform};
use dfformer_core::autograd::Tape;
use dfformer_core::layers::ActKind;
use dfformer_core::mixers::{
    global_filter_forward, interpolate_filter_basis, routeing_weights, Attention, DynamicFilter, GlobalFilter,
};
use dfformer_core::spectral::half_width;
use dfformer_core::{oracle, Builder, Error, ParamStore, Real, Tensor};
use proptest::prelude::*;

fn perturb(store: &mut ParamStore, seed: u64, std: Real) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let name = store.get(id).name.clone();
        let noise = gaussian(store.value(id).shape(), seed, &name).scale(std);
        let v = store.value(id).add(&noise).unwrap();
        store.set_value(id, v);
    }
}

#[test]
fn single_basis_dynamic_filter_is_a_global_filter() {
    let (c, h, w) = (3, 6, 7);
    let mut bd = Builder::new(5);
    let df = DynamicFilter::new(&mut bd, "m", c, h, w, 1, 0.25, ActKind::StarRelu).unwrap();
    let mut sd = bd.finish();
    perturb(&mut sd, 5, 0.5);
    let mut bg = Builder::new(5);
    let gf = GlobalFilter::new(&mut bg, "m", c, h, w, ActKind::StarRelu).unwrap();
    let mut sg = bg.finish();
    for (name, id) in [("m.pw1.weight", gf.pw1.weight), ("m.pw2.weight", gf.pw2.weight)] {
        sg.set_value(id, sd.value(sd.id(name).unwrap()).clone());
    }
    for name in ["m.act.s", "m.act.b"] {
        sg.set_value(sg.id(name).unwrap(), sd.value(sd.id(name).unwrap()).clone());
    }
    // One basis filter shared by every channel.
    let basis = sd.value(df.basis).clone();
    let wh = half_width(w);
    let filter = Tensor::from_fn([h, wh, 2 * c, 2], |i| {
        let (px, part) = (i / (4 * c), i % 2);
        basis.data()[px * 2 + part]
    });
    sg.set_value(gf.filter, filter);

    let x = uniform(&[2, h, w, c], 1, "x");
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let a = df.forward(&mut tape, &sd, xv).unwrap();
    let b = gf.forward(&mut tape, &sg, xv).unwrap();
    assert_eq!(tape.value(a), tape.value(b));
}

#[test]
fn routeing_coefficients_are_a_softmax_over_filters() {
    let mut b = Builder::new(2);
    let df = DynamicFilter::new(&mut b, "df", 8, 4, 4, 4, 0.25, ActKind::StarRelu).unwrap();
    let mut store = b.finish();
    perturb(&mut store, 2, 1.0);
    assert_eq!(df.routeing.w1.c_out, 2);
    let mut tape = Tape::new();
    let x = tape.leaf(uniform(&[3, 4, 4, 8], 0, "x"));
    let lam = routeing_weights(&mut tape, &store, x, &df.routeing).unwrap();
    let lam = tape.value(lam);
    assert_eq!(lam.shape(), &[3, 4, 16]);
    for n in 0..3 {
        for ch in 0..16 {
            let s: Real = (0..4).map(|i| lam.data()[(n * 4 + i) * 16 + ch]).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}

/// Dynamic filter output against the coefficient-weighted sum of
/// single-basis global filters applied to the same features.
fn linearity_error(n: usize, seed: u64) -> f64 {
    let (b, h, w, c) = (2, 5, 8, 3);
    let mut builder = Builder::new(seed);
    let f = DynamicFilter::new(&mut builder, "df", c, h, w, n, 1.0, ActKind::StarRelu).unwrap();
    let mut store = builder.finish();
    perturb(&mut store, seed, 0.5);
    let x = uniform(&[b, h, w, c], seed, "x");
    let mut tape = Tape::new();
    let xv = tape.leaf(x);
    let fast = f.forward(&mut tape, &store, xv).unwrap();
    let fast = tape.value(fast).clone();

    let lam = routeing_weights(&mut tape, &store, xv, &f.routeing).unwrap();
    let lam = tape.value(lam).clone();
    let hv = f.pw1.forward(&mut tape, &store, xv).unwrap();
    let hv = f.act.forward(&mut tape, &store, hv).unwrap();
    let cm = 2 * c;
    let wh = half_width(w);
    let basis = store.value(f.basis).clone();
    let mut mixed = vec![0.0; b * h * w * cm];
    for i in 0..n {
        let ki = Tensor::from_fn([h, wh, cm, 2], |j| basis.data()[((j / (cm * 2)) * n + i) * 2 + j % 2]);
        let kv = tape.leaf(ki);
        let yi = global_filter_forward(&mut tape, hv, kv).unwrap();
        for (j, m) in mixed.iter_mut().enumerate() {
            let (bi, ch) = (j / (h * w * cm), j % cm);
            *m += lam.data()[(bi * n + i) * cm + ch] * tape.value(yi).data()[j];
        }
    }
    let reference = oracle::matmul(&mixed, store.value(f.pw2.weight).data(), b * h * w, cm, c);
    max_diff(fast.data(), &reference)
}

#[test]
fn dynamic_filter_is_linear_in_its_basis() {
    for n in [1, 2, 4] {
        for seed in 0..10 {
            let e = linearity_error(n, seed);
            assert!(e < 1e-10, "N={n} seed {seed}: {e:e}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn linearity_for_random_seeds(n in 1usize..=6, seed in any::<u64>()) {
        prop_assert!(linearity_error(n, seed) < 1e-10);
    }
}

#[test]
fn attention_matches_dense_oracle() {
    let (t, c, heads) = (12, 8, 2);
    let mut b = Builder::new(3);
    let at = Attention::new(&mut b, "at", c, heads).unwrap();
    let mut store = b.finish();
    perturb(&mut store, 3, 0.3);
    let x = uniform(&[2, 3, 4, c], 7, "x");
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let y = at.forward(&mut tape, &store, xv).unwrap();
    let y = tape.value(y);
    for n in 0..2 {
        let tokens = &x.data()[n * t * c..(n + 1) * t * c];
        let reference = oracle::attention(tokens, t, c, heads, store.value(at.qkv).data(), store.value(at.proj).data());
        assert!(max_diff(&y.data()[n * t * c..(n + 1) * t * c], &reference) < 1e-12);
    }
}

#[test]
fn wrong_extents_name_the_resampler() {
    let mut b = Builder::new(0);
    let df = DynamicFilter::new(&mut b, "df", 2, 7, 7, 4, 0.25, ActKind::StarRelu).unwrap();
    let store = b.finish();
    let mut tape = Tape::new();
    let x = tape.leaf(uniform(&[1, 14, 14, 2], 0, "x"));
    match df.forward(&mut tape, &store, x) {
        Err(e @ Error::Extent { .. }) => assert!(e.to_string().contains("interpolate_filter_basis")),
        other => panic!("expected an extent error, got {other:?}"),
    }
}

#[test]
fn non_finite_input_is_rejected() {
    let mut b = Builder::new(0);
    let df = DynamicFilter::new(&mut b, "df", 2, 4, 4, 2, 0.25, ActKind::StarRelu).unwrap();
    let store = b.finish();
    let mut tape = Tape::new();
    let mut x = uniform(&[1, 4, 4, 2], 0, "x");
    x.data_mut()[5] = Real::NAN;
    let xv = tape.leaf(x);
    assert!(df.forward(&mut tape, &store, xv).is_err());
}

#[test]
fn bicubic_resampling_matches_dense_kernel() {
    // 7×7 map to 14×14: half grid [7, 4] → [14, 8], each (filter, part) plane on its own.
    let basis = uniform(&[7, 4, 3, 2], 11, "basis");
    let up = interpolate_filter_basis(&basis, 14, 14).unwrap();
    assert_eq!(up.shape(), &[14, 8, 3, 2]);
    for plane in 0..6 {
        let src: Vec<Real> = (0..28).map(|p| basis.data()[p * 6 + plane]).collect();
        let dense = oracle::bicubic_dense(&src, 7, 4, 14, 8);
        let got: Vec<Real> = (0..112).map(|p| up.data()[p * 6 + plane]).collect();
        assert!(max_diff(&got, &dense) < 1e-10, "plane {plane}");
    }
    // Downsampling uses the same kernel.
    let down = interpolate_filter_basis(&up, 5, 5).unwrap();
    let src: Vec<Real> = (0..112).map(|p| up.data()[p * 6]).collect();
    let dense = oracle::bicubic_dense(&src, 14, 8, 5, 3);
    let got: Vec<Real> = (0..15).map(|p| down.data()[p * 6]).collect();
    assert!(max_diff(&got, &dense) < 1e-10);
}
