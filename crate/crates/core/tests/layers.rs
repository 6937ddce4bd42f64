#![allow(clippy::unnecessary_cast)]

mod common;

use common::{max_diff, uniform};
use dfformer_core::autograd::{conv, ops, Tape};
use dfformer_core::layers::{ActKind, ChannelMlp, DepthwiseConv, Downsample, LayerNorm};
use dfformer_core::{oracle, Builder, Real, Tensor};
use proptest::prelude::*;

fn layer_norm(x: &Tensor) -> Tensor {
    let c = *x.shape().last().unwrap();
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let g = tape.leaf(Tensor::ones([c]));
    let b = tape.leaf(Tensor::zeros([c]));
    let y = ops::layer_norm(&mut tape, xv, g, b, 1e-6).unwrap();
    tape.value(y).clone()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn layer_norm_ignores_per_row_shift_and_positive_scale(seed in any::<u64>(), a in 0.5f64..4.0, s in -5.0f64..5.0) {
        let x = uniform(&[3, 8], seed, "x");
        let moved = x.map(|v| v * a as Real + s as Real);
        // Only eps breaks exact invariance. To first order the output moves
        // by |y|·eps/2·|1/var − 1/(a²·var)|.
        let min_var = x
            .data()
            .chunks(8)
            .map(|r| {
                let m = r.iter().map(|&v| v as f64).sum::<f64>() / 8.0;
                r.iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / 8.0
            })
            .fold(f64::INFINITY, f64::min);
        let y = layer_norm(&x);
        let bound = y.max_abs() as f64 * 1e-6 * (1.0 - 1.0 / (a * a)).abs() / (2.0 * min_var) * 1.05 + 1e-12;
        prop_assert!((y.max_abs_diff(&layer_norm(&moved)).unwrap() as f64) < bound);
    }

    #[test]
    fn layer_norm_rows_are_standardized(seed in any::<u64>()) {
        let y = layer_norm(&uniform(&[4, 16], seed, "x"));
        for row in y.data().chunks(16) {
            let mean: f64 = row.iter().map(|&v| v as f64).sum::<f64>() / 16.0;
            let var: f64 = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / 16.0;
            prop_assert!(mean.abs() < 1e-12);
            prop_assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn depthwise_matches_direct_loops(seed in any::<u64>(), h in 1usize..10, w in 1usize..10, k in prop::sample::select(vec![1usize, 3, 5, 7])) {
        let x = uniform(&[2, h, w, 3], seed, "x");
        let kern = uniform(&[3, k, k], seed, "k");
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let kv = tape.leaf(kern.clone());
        let y = conv::depthwise_conv(&mut tape, xv, kv).unwrap();
        let reference = oracle::depthwise_conv(x.data(), [2, h, w, 3], kern.data(), k, k);
        prop_assert!(max_diff(tape.value(y).data(), &reference) < 1e-12);
    }
}

#[test]
fn centred_impulse_kernel_is_identity() {
    let x = uniform(&[1, 9, 6, 4], 3, "x");
    let kern = Tensor::from_fn([4, 7, 7], |i| if i % 49 == 24 { 1.0 } else { 0.0 });
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let kv = tape.leaf(kern);
    let y = conv::depthwise_conv(&mut tape, xv, kv).unwrap();
    assert_eq!(tape.value(y), &x);
}

#[test]
fn off_centre_impulse_shifts_with_zero_fill() {
    // Kernel tap at (3, 4) on a 7×7 kernel reads x[y, x+1].
    let x = Tensor::from_fn([1, 3, 4, 1], |i| i as Real + 1.0);
    let kern = Tensor::from_fn([1, 7, 7], |i| if i == 3 * 7 + 4 { 1.0 } else { 0.0 });
    let mut tape = Tape::new();
    let xv = tape.leaf(x);
    let kv = tape.leaf(kern);
    let y = conv::depthwise_conv(&mut tape, xv, kv).unwrap();
    assert_eq!(tape.value(y).data(), &[2.0, 3.0, 4.0, 0.0, 6.0, 7.0, 8.0, 0.0, 10.0, 11.0, 12.0, 0.0]);
}

#[test]
fn downsampling_halves_extents_and_maps_channels() {
    let mut b = Builder::new(0);
    let stem = Downsample::new(&mut b, "stem", 3, 8, 7, 4, 2, true).unwrap();
    let down = Downsample::new(&mut b, "down", 8, 16, 3, 2, 1, false).unwrap();
    let store = b.finish();
    let mut tape = Tape::new();
    let x = tape.leaf(uniform(&[2, 32, 32, 3], 0, "x"));
    let y = stem.forward(&mut tape, &store, x).unwrap();
    assert_eq!(tape.shape(y), &[2, 8, 8, 8]);
    let z = down.forward(&mut tape, &store, y).unwrap();
    assert_eq!(tape.shape(z), &[2, 4, 4, 16]);
    assert_eq!(stem.out_extent(224), Some(56));
    assert_eq!(down.out_extent(7), Some(4));
}

#[test]
fn channel_mlp_and_depthwise_parameter_counts() {
    let mut b = Builder::new(0);
    ChannelMlp::new(&mut b, "mlp", 64, 256, ActKind::StarRelu).unwrap();
    DepthwiseConv::new(&mut b, "dw", 128, 7).unwrap();
    LayerNorm::new(&mut b, "ln", 64).unwrap();
    let store = b.finish();
    assert_eq!(store.count(), 2 * 64 * 256 + 2 + 128 * 49 + 2 * 64);
}
