//! Oracle and finite-difference suites shared by the `oracles` and
//! `gradcheck` subcommands.

use dfformer_core::analysis::{gram, hsic_unbiased, linear_cka};
use dfformer_core::autograd::{conv, fourier, ops, Tape, Var};
use dfformer_core::gradcheck::{random_projection, GradCheck, GradReport};
use dfformer_core::layers::{ActKind, LayerNorm};
use dfformer_core::mixers::{global_filter_forward, routeing_weights, DynamicFilter, GlobalFilter, SepConv};
use dfformer_core::model::{block_forward, build_model, Block, Forward, Model, ModelConfig};
use dfformer_core::rng::{named_stream, Stream};
use dfformer_core::spectral::{half_width, irfft2, rfft2, SpectralPlan};
use dfformer_core::{oracle, Builder, ComplexTensor, ParamKind, ParamStore, Real, Tensor};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed, detail: detail.into() }
    }
}

pub fn uniform(shape: &[usize], seed: u64, tag: &str) -> Tensor {
    let mut rng = named_stream(seed, Stream::Data, tag);
    Tensor::from_fn(shape.to_vec(), |_| rng.random::<f64>() as Real * 2.0 - 1.0)
}

pub fn gaussian(shape: &[usize], seed: u64, tag: &str, std: f64) -> Tensor {
    let mut rng = named_stream(seed, Stream::Data, tag);
    Tensor::from_fn(shape.to_vec(), |_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        (z * std) as Real
    })
}

/// Adds Gaussian noise to every parameter so checks do not sit at the
/// symmetric initial point.
pub fn jitter(store: &mut ParamStore, seed: u64, std: f64) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let name = store.get(id).name.clone();
        let noise = gaussian(store.value(id).shape(), seed, &name, std);
        let v = store.value(id).add(&noise).expect("same shape");
        store.set_value(id, v);
    }
}

// ---------------------------------------------------------------- spectral

pub const SPECTRAL_SIZES: [(usize, usize); 6] = [(2, 2), (4, 4), (7, 7), (7, 5), (14, 14), (56, 56)];

/// Forward and inverse transforms against the direct sums, plus round
/// trips, for each size.
pub fn spectral_exactness(seed: u64) -> Vec<Check> {
    SPECTRAL_SIZES
        .iter()
        .map(|&(h, w)| {
            let plan = SpectralPlan::new(h, w).expect("positive extents");
            let wh = half_width(w);
            let x = uniform(&[h, w], seed, &format!("spec.x.{h}x{w}"));
            let fast = rfft2(&x, &plan).expect("plan matches");
            let full = oracle::dft2(x.data(), h, w);
            let mut fwd: f64 = 0.0;
            for r in 0..h {
                for c in 0..wh {
                    fwd = fwd.max((fast.data()[r * wh + c] - full[r * w + c]).norm() as f64);
                }
            }
            let back = irfft2(&fast, &plan).expect("plan matches");
            let trip = back.max_abs_diff(&x).expect("same shape") as f64;
            let half = uniform(&[h, wh, 2], seed, &format!("spec.half.{h}x{w}"));
            let z = ComplexTensor::from_pairs(&half).expect("pair axis");
            let inv = irfft2(&z, &plan).expect("plan matches");
            let inv_ref = oracle::idft2_half(z.data(), h, w);
            let inv_err = inv.data().iter().zip(&inv_ref).map(|(a, b)| (a - b).abs() as f64).fold(0.0, f64::max);
            Check::new(
                format!("spectral {h}x{w}"),
                fwd < 1e-10 && inv_err < 1e-10 && trip < 1e-12,
                format!("forward {fwd:.2e}, inverse {inv_err:.2e}, round trip {trip:.2e}"),
            )
        })
        .collect()
}

/// Global filter with `K = rfft2(k)` against the brute-force cyclic
/// convolution with `k`. The orthonormal transforms make the filter output
/// `1/√(HW)` times the convolution.
pub fn convolution_theorem(seed: u64, trials: usize) -> Vec<Check> {
    [(7usize, 7usize), (8, 8)]
        .iter()
        .map(|&(h, w)| {
            let plan = SpectralPlan::new(h, w).expect("positive extents");
            let mut worst: f64 = 0.0;
            for t in 0..trials {
                let x = uniform(&[1, h, w, 1], seed, &format!("conv.x.{h}.{t}"));
                let k = uniform(&[h, w], seed, &format!("conv.k.{h}.{t}"));
                let kf = rfft2(&k, &plan).expect("plan matches").to_pairs();
                let kf = kf.reshape([h, half_width(w), 1, 2]).expect("same size");
                let mut tape = Tape::new();
                let xv = tape.leaf(x.clone());
                let kv = tape.leaf(kf);
                let y = global_filter_forward(&mut tape, xv, kv).expect("shapes match");
                let scaled = tape.value(y).scale(((h * w) as Real).sqrt());
                let reference = oracle::cyclic_conv2d(x.data(), k.data(), h, w);
                for (a, b) in scaled.data().iter().zip(&reference) {
                    worst = worst.max((a - b).abs() as f64);
                }
            }
            Check::new(
                format!("convolution theorem {h}x{w}"),
                worst < 1e-10,
                format!("{trials} trials, max deviation {worst:.2e}"),
            )
        })
        .collect()
}

fn sharpen_routeing(store: &mut ParamStore, f: &DynamicFilter, seed: u64) {
    // Widen the routeing weights so the coefficients are far from uniform.
    let id = f.routeing.w2.weight;
    let v = gaussian(store.value(id).shape(), seed, "routeing.sharp", 1.0);
    store.set_value(id, v);
}

/// Maximum deviation between the dynamic filter and the coefficient-
/// weighted sum of single-basis global filters, for one configuration.
pub fn dynamic_linearity_error(n: usize, seed: u64) -> f64 {
    let (b, h, w, c) = (2, 7, 6, 3);
    let mut builder = Builder::new(seed);
    let f = DynamicFilter::new(&mut builder, "df", c, h, w, n, 1.0, ActKind::StarRelu).expect("valid");
    let mut store = builder.finish();
    jitter(&mut store, seed, 0.3);
    sharpen_routeing(&mut store, &f, seed);
    let x = uniform(&[b, h, w, c], seed, "lin.x");

    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let y = f.forward(&mut tape, &store, xv).expect("forward");
    let fast = tape.value(y).clone();

    // Reference: features through pw1 and the activation, each basis filter
    // applied on its own, mixed per (sample, channel), then pw2.
    let mut tape = Tape::new();
    let xv = tape.leaf(x);
    let lam = routeing_weights(&mut tape, &store, xv, &f.routeing).expect("routeing");
    let lam = tape.value(lam).clone();
    let hv = f.pw1.forward(&mut tape, &store, xv).expect("pw1");
    let hv = f.act.forward(&mut tape, &store, hv).expect("act");
    let c_med = 2 * c;
    let wh = half_width(w);
    let basis = store.value(f.basis).clone();
    let mut mixed = vec![0.0 as Real; b * h * w * c_med];
    for i in 0..n {
        let ki = Tensor::from_fn([h, wh, c_med, 2], |j| {
            let (px, part) = (j / (c_med * 2), j % 2);
            basis.data()[(px * n + i) * 2 + part]
        });
        let kv = tape.leaf(ki);
        let yi = global_filter_forward(&mut tape, hv, kv).expect("global filter");
        let yd = tape.value(yi).data();
        for (j, m) in mixed.iter_mut().enumerate() {
            let (bi, ch) = (j / (h * w * c_med), j % c_med);
            *m += lam.data()[(bi * n + i) * c_med + ch] * yd[j];
        }
    }
    let pw2 = store.value(f.pw2.weight);
    let reference = oracle::matmul(&mixed, pw2.data(), b * h * w, c_med, c);
    fast.data().iter().zip(&reference).map(|(a, r)| (a - r).abs() as f64).fold(0.0, f64::max)
}

pub fn dynamic_linearity(seeds: usize) -> Vec<Check> {
    [1usize, 2, 4]
        .iter()
        .map(|&n| {
            let worst = (0..seeds as u64).map(|s| dynamic_linearity_error(n, s)).fold(0.0, f64::max);
            Check::new(
                format!("dynamic filter linearity N={n}"),
                worst < 1e-10,
                format!("{seeds} seeds, max deviation {worst:.2e}"),
            )
        })
        .collect()
}

fn orthogonal(d: usize, seed: u64) -> Vec<Real> {
    // Gram-Schmidt on a Gaussian matrix; rows are orthonormal.
    let g = gaussian(&[d, d], seed, "cka.q", 1.0);
    let mut q: Vec<Vec<f64>> = Vec::new();
    for r in 0..d {
        let mut v: Vec<f64> = g.data()[r * d..(r + 1) * d].iter().map(|&x| x as f64).collect();
        for u in &q {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            for (vi, ui) in v.iter_mut().zip(u) {
                *vi -= dot * ui;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        q.push(v.into_iter().map(|x| x / norm).collect());
    }
    q.into_iter().flatten().map(|x| x as Real).collect()
}

/// Self-similarity, orthogonal and scale invariance, and agreement with
/// the entry-by-entry HSIC formula.
pub fn cka_checks(seed: u64) -> Vec<Check> {
    let (n, d, batches) = (16, 6, 3);
    let layers: Vec<Vec<Tensor>> =
        (0..3).map(|l| (0..batches).map(|t| gaussian(&[n, d], seed, &format!("cka.{l}.{t}"), 1.0)).collect()).collect();
    let mut out = Vec::new();

    let selfsim = linear_cka(&layers, &layers).expect("valid batches");
    let diag = (0..3).map(|i| (selfsim.get(i, i) - 1.0).abs()).fold(0.0, f64::max);
    out.push(Check::new("cka self-similarity", diag < 1e-6, format!("max |diag − 1| {diag:.2e}")));

    let q = orthogonal(d, seed);
    let rotated: Vec<Vec<Tensor>> = layers
        .iter()
        .map(|l| {
            l.iter().map(|t| Tensor::new(vec![n, d], oracle::matmul(t.data(), &q, n, d, d)).expect("shape")).collect()
        })
        .collect();
    let rot = linear_cka(&layers, &rotated).expect("valid batches");
    let dev = selfsim.matrix.iter().zip(&rot.matrix).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    out.push(Check::new("cka orthogonal invariance", dev < 1e-6, format!("max change {dev:.2e}")));

    let scaled: Vec<Vec<Tensor>> = layers.iter().map(|l| l.iter().map(|t| t.scale(3.7)).collect()).collect();
    let sc = linear_cka(&layers, &scaled).expect("valid batches");
    let dev = selfsim.matrix.iter().zip(&sc.matrix).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    out.push(Check::new("cka scale invariance", dev < 1e-6, format!("max change {dev:.2e}")));

    let a = gaussian(&[8, 3], seed, "cka.a", 1.0);
    let b = gaussian(&[8, 3], seed, "cka.b", 1.0);
    let fast = hsic_unbiased(&gram(&a), &gram(&b), 8).expect("n >= 4");
    let slow = oracle::hsic_unbiased(&oracle::gram(a.data(), 8, 3), &oracle::gram(b.data(), 8, 3), 8);
    let err = (fast - slow).abs();
    out.push(Check::new("hsic scalar oracle 8x3", err < 1e-10, format!("deviation {err:.2e}")));
    out
}

pub fn oracle_suite(seed: u64) -> Vec<Check> {
    let mut all = spectral_exactness(seed);
    all.extend(convolution_theorem(seed, 20));
    all.extend(dynamic_linearity(10));
    all.extend(cka_checks(seed));
    all
}

// ----------------------------------------------------------- gradients

fn report_check(name: &str, r: dfformer_core::Result<GradReport>) -> Check {
    match r {
        Ok(r) => Check::new(name, r.passed(), format!("{} elements, max rel. error {:.2e}", r.checked, r.max_error)),
        Err(e) => Check::new(name, false, format!("error: {e}")),
    }
}

type InputFn = Box<dyn Fn(&mut Tape, &[Var]) -> dfformer_core::Result<Var>>;

fn op_cases(seed: u64) -> Vec<(&'static str, Vec<Tensor>, InputFn)> {
    let u = |s: &[usize], tag: &str| uniform(s, seed, tag);
    let proj = move |tape: &mut Tape, y: Var| random_projection(tape, y, seed);
    vec![
        (
            "matmul",
            vec![u(&[5, 7], "a"), u(&[7, 3], "b")],
            Box::new(move |t, v| {
                let y = ops::matmul(t, v[0], v[1])?;
                proj(t, y)
            }),
        ),
        (
            "broadcast add/sub/mul",
            vec![u(&[2, 3, 4], "a"), u(&[3, 4], "b")],
            Box::new(move |t, v| {
                let a = ops::add(t, v[0], v[1])?;
                let b = ops::mul(t, a, v[1])?;
                let c = ops::sub(t, b, v[0])?;
                proj(t, c)
            }),
        ),
        (
            "layer_norm",
            vec![u(&[4, 6], "x"), u(&[6], "g"), u(&[6], "b")],
            Box::new(move |t, v| {
                let y = ops::layer_norm(t, v[0], v[1], v[2], 1e-6)?;
                proj(t, y)
            }),
        ),
        (
            "star_relu",
            vec![u(&[3, 5], "x"), u(&[1], "s"), u(&[1], "b")],
            Box::new(move |t, v| {
                let y = ops::star_relu(t, v[0], v[1], v[2])?;
                proj(t, y)
            }),
        ),
        (
            "squared_relu and gelu",
            vec![u(&[4, 4], "x")],
            Box::new(move |t, v| {
                let a = ops::squared_relu(t, v[0]);
                let b = ops::gelu(t, a);
                proj(t, b)
            }),
        ),
        (
            "softmax",
            vec![u(&[2, 4, 3], "x")],
            Box::new(move |t, v| {
                let y = ops::softmax(t, v[0], 1)?;
                proj(t, y)
            }),
        ),
        ("cross_entropy", vec![u(&[3, 5], "x")], Box::new(|t, v| ops::cross_entropy(t, v[0], &[1, 4, 0], 0.1))),
        (
            "mean_hw",
            vec![u(&[2, 3, 3, 2], "x")],
            Box::new(move |t, v| {
                let y = ops::mean_hw(t, v[0])?;
                proj(t, y)
            }),
        ),
        (
            "pointwise conv",
            vec![u(&[2, 3, 3, 4], "x"), u(&[4, 5], "w")],
            Box::new(move |t, v| {
                let y = ops::linear(t, v[0], v[1])?;
                proj(t, y)
            }),
        ),
        (
            "depthwise conv 7x7",
            vec![u(&[1, 8, 8, 3], "x"), u(&[3, 7, 7], "k")],
            Box::new(move |t, v| {
                let y = conv::depthwise_conv(t, v[0], v[1])?;
                proj(t, y)
            }),
        ),
        (
            "strided conv",
            vec![u(&[1, 9, 9, 2], "x"), u(&[3, 3, 2, 4], "w")],
            Box::new(move |t, v| {
                let y = conv::conv2d(t, v[0], v[1], 2, 1)?;
                proj(t, y)
            }),
        ),
        (
            "rfft2 / irfft2 (even width)",
            vec![u(&[1, 4, 6, 2], "x")],
            Box::new(move |t, v| {
                let s = fourier::rfft2_hw(t, v[0])?;
                let s2 = ops::mul(t, s, s)?;
                let y = fourier::irfft2_hw(t, s2, 6)?;
                proj(t, y)
            }),
        ),
        (
            "rfft2 / irfft2 (odd extents)",
            vec![u(&[2, 5, 7, 1], "x"), u(&[2, 5, 4, 1, 2], "z")],
            Box::new(move |t, v| {
                let s = fourier::rfft2_hw(t, v[0])?;
                let y = fourier::irfft2_hw(t, v[1], 7)?;
                let a = proj(t, s)?;
                let b = proj(t, y)?;
                ops::add(t, a, b)
            }),
        ),
        (
            "complex product and basis mixing",
            vec![u(&[2, 3, 4, 2, 2], "spec"), u(&[2, 3, 2], "lam"), u(&[3, 4, 3, 2], "basis")],
            Box::new(move |t, v| {
                let k = fourier::combine_basis(t, v[1], v[2])?;
                let y = fourier::complex_mul(t, v[0], k)?;
                proj(t, y)
            }),
        ),
    ]
}

/// A parameter store whose loss is a random projection of `run`'s output
/// on a fixed input that is itself registered as a parameter, so input
/// gradients are checked too.
fn module_check(
    name: &str,
    seed: u64,
    input: &[usize],
    build: impl FnOnce(
        &mut Builder,
    ) -> dfformer_core::Result<Box<dyn Fn(&mut Tape, &ParamStore, Var) -> dfformer_core::Result<Var>>>,
    gc: &GradCheck,
) -> Check {
    let mut b = Builder::new(seed);
    let run = match build(&mut b) {
        Ok(r) => r,
        Err(e) => return Check::new(name, false, format!("build error: {e}")),
    };
    let mut store = b.finish();
    jitter(&mut store, seed, 0.2);
    let x = store.add("input", uniform(input, seed, name), ParamKind::Real, false).expect("fresh name");
    let r = gc.params(&store, |tape, st| {
        let xv = tape.param(st, x);
        let y = run(tape, st, xv)?;
        random_projection(tape, y, seed)
    });
    report_check(name, r)
}

fn layer_cases(seed: u64, gc: &GradCheck) -> Vec<Check> {
    let mut out = Vec::new();
    out.push(module_check(
        "layer norm module",
        seed,
        &[2, 3, 3, 5],
        |b| {
            let m = LayerNorm::new(b, "ln", 5)?;
            Ok(Box::new(move |t, s, x| m.forward(t, s, x)))
        },
        gc,
    ));
    out.push(module_check(
        "dynamic filter",
        seed,
        &[2, 6, 5, 4],
        |b| {
            let m = DynamicFilter::new(b, "df", 4, 6, 5, 4, 0.5, ActKind::StarRelu)?;
            Ok(Box::new(move |t, s, x| m.forward(t, s, x)))
        },
        gc,
    ));
    out.push(module_check(
        "global filter",
        seed,
        &[1, 7, 7, 3],
        |b| {
            let m = GlobalFilter::new(b, "gf", 3, 7, 7, ActKind::StarRelu)?;
            Ok(Box::new(move |t, s, x| m.forward(t, s, x)))
        },
        gc,
    ));
    out.push(module_check(
        "separable conv",
        seed,
        &[1, 8, 8, 3],
        |b| {
            let m = SepConv::new(b, "sep", 3, 7, ActKind::StarRelu)?;
            Ok(Box::new(move |t, s, x| m.forward(t, s, x)))
        },
        gc,
    ));
    out.push(module_check(
        "dfformer block 1x8x8x16",
        seed,
        &[1, 8, 8, 16],
        |b| {
            let blk = block_for_check(b, 16, 8)?;
            Ok(Box::new(move |t, s, x| {
                let (_, y) = block_forward(t, s, x, &blk, &mut Forward::default())?;
                Ok(y)
            }))
        },
        gc,
    ));
    out
}

fn block_for_check(b: &mut Builder, c: usize, size: usize) -> dfformer_core::Result<Block> {
    use dfformer_core::layers::{ChannelMlp, ResScale};
    use dfformer_core::mixers::Mixer;
    Ok(Block {
        norm1: LayerNorm::new(b, "blk.norm1", c)?,
        mixer: Mixer::Dynamic(DynamicFilter::new(b, "blk.mixer", c, size, size, 4, 0.25, ActKind::StarRelu)?),
        res_scale1: Some(ResScale::new(b, "blk.res_scale1", c)?),
        norm2: LayerNorm::new(b, "blk.norm2", c)?,
        mlp: ChannelMlp::new(b, "blk.mlp", c, 4 * c, ActKind::StarRelu)?,
        res_scale2: Some(ResScale::new(b, "blk.res_scale2", c)?),
        drop_rate: 0.0,
    })
}

/// Whole-model check: cross-entropy of a small batch through `cfg`.
pub fn model_gradcheck(cfg: &ModelConfig, seed: u64, gc: &GradCheck) -> Check {
    let name = format!("full model {cfg}");
    let model = match build_model(cfg, seed) {
        Ok(m) => m,
        Err(e) => return Check::new(name, false, format!("build error: {e}")),
    };
    let (h, w) = cfg.input;
    let x = uniform(&[2, h, w, cfg.in_channels], seed, "model.x");
    let labels = [0, cfg.num_classes - 1];
    let net = model.net.clone();
    let r = gc.params(&model.store, |tape, store| {
        let m = Model { cfg: cfg.clone(), net: net.clone(), store: store.clone() };
        let xv = tape.leaf(x.clone());
        let out = m.forward(tape, xv, &mut Forward::default())?;
        ops::cross_entropy(tape, out.logits, &labels, 0.0)
    });
    report_check(&name, r)
}

/// Every differentiable op and layer, then the full Nano DFFormer, once per
/// seed.
pub fn gradcheck_suite(cfg: &ModelConfig, seeds: &[u64], per_tensor: usize) -> Vec<Check> {
    let mut out = Vec::new();
    for &seed in seeds {
        let gc = GradCheck { per_tensor, seed, ..Default::default() };
        for (name, inputs, f) in op_cases(seed) {
            out.push(report_check(&format!("{name} (seed {seed})"), gc.inputs(&inputs, f)));
        }
        for c in layer_cases(seed, &gc) {
            out.push(Check::new(format!("{} (seed {seed})", c.name), c.passed, c.detail));
        }
        let c = model_gradcheck(cfg, seed, &gc);
        out.push(Check::new(format!("{} (seed {seed})", c.name), c.passed, c.detail));
    }
    out
}
