use std::path::PathBuf;

use dfformer_cli::config::{load_config, parse_config, Schedule, TrainConfig};
use dfformer_cli::data::{gen_synthetic, SyntheticSpec};
use dfformer_cli::optim::{lr_at, AdamW};
use dfformer_cli::train::train;
use dfformer_core::model::{build_model, Family, ModelConfig};
use dfformer_core::{ParamKind, ParamStore, Tensor};

#[test]
fn adamw_first_step_by_hand() {
    let mut store = ParamStore::new();
    let id = store.add("p", Tensor::full([1], 1.0), ParamKind::Real, true).unwrap();
    store.iter_mut().next().unwrap().grad = Tensor::full([1], 1.0);
    let cfg = TrainConfig { weight_decay: 0.0, ..Default::default() };
    let mut opt = AdamW::new(&store);
    opt.step(&mut store, 0.1, &cfg);
    // m = 0.1, v = 0.001; bias correction at t = 1 gives m̂ = v̂ = 1.
    let m_hat = (0.1 * 1.0) / (1.0 - 0.9);
    let v_hat = (0.001 * 1.0) / (1.0 - 0.999);
    let expect = 1.0 - 0.1 * m_hat / (f64::sqrt(v_hat) + 1e-8);
    assert!((store.value(id).data()[0] - expect).abs() < 1e-15);
    assert!((expect - 0.900_000_001).abs() < 1e-12);
}

#[test]
fn adamw_decay_respects_flags() {
    let mut store = ParamStore::new();
    let a = store.add("a", Tensor::full([2], 2.0), ParamKind::Real, true).unwrap();
    let b = store.add("b", Tensor::full([2], 2.0), ParamKind::Real, false).unwrap();
    let mut opt = AdamW::new(&store);
    opt.step(&mut store, 0.5, &TrainConfig::default());
    assert!((store.value(a).data()[0] - 2.0 * (1.0 - 0.5 * 0.05)).abs() < 1e-15);
    assert_eq!(store.value(b).data()[0], 2.0);
}

#[test]
fn schedule_is_continuous_and_starts_at_floor() {
    for warmup in [1.0, 2.0, 3.5] {
        let cfg = TrainConfig { warmup_epochs: warmup, ..Default::default() };
        assert_eq!(lr_at(0.0, &cfg), cfg.warmup_lr);
        let eps = 1e-12;
        assert!((lr_at(warmup - eps, &cfg) - lr_at(warmup, &cfg)).abs() < 1e-12);
        assert!((lr_at(warmup, &cfg) - cfg.lr).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for k in 0..=100 {
            let t = warmup + (cfg.epochs as f64 - warmup) * k as f64 / 100.0;
            let lr = lr_at(t, &cfg);
            assert!(lr <= prev && lr >= cfg.min_lr - 1e-18);
            prev = lr;
        }
    }
    let flat = TrainConfig { schedule: Schedule::Constant, ..Default::default() };
    assert_eq!(lr_at(20.0, &flat), flat.lr);
}

fn config_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn shipped_configs_parse() {
    let df = load_config(&config_dir().join("nano-df.toml")).unwrap();
    let gf = load_config(&config_dir().join("nano-gf.toml")).unwrap();
    assert_eq!(df.model_config().unwrap(), ModelConfig::named("nano-df").unwrap());
    assert_eq!(gf.model_config().unwrap().family, Some(Family::GfFormer));
    assert_eq!(df.train, TrainConfig::default());
    assert_eq!(df.data, gf.data);
}

#[test]
fn config_errors_carry_line_and_key() {
    let text = "seed = 0\n\n[model]\nfamily = \"dfformer\"\nsize = 3\n";
    let msg = parse_config(text, "bad.toml").unwrap_err().to_string();
    assert!(msg.contains("bad.toml") && msg.contains("line 5") && msg.contains("size"), "{msg}");

    let msg = parse_config("[data]\nnoise = 0.1\nnoize = 0.2\n", "x.toml").unwrap_err().to_string();
    assert!(msg.contains("line 3") && msg.contains("noize"), "{msg}");

    let bad_family = parse_config("[model]\nfamily = \"vit\"\n", "y").unwrap();
    assert!(bad_family.model_config().is_err());
}

fn short_run(seed: u64) -> Vec<f64> {
    let spec = SyntheticSpec::new(seed, 32, 4, 8);
    let ds = gen_synthetic(&spec, "train");
    let cfg = TrainConfig { epochs: 3, batch_size: 8, warmup_epochs: 1.0, ..Default::default() };
    let mut model = build_model(&ModelConfig::named("nano-df").unwrap(), seed).unwrap();
    let report = train(&mut model, &ds, None, &cfg, seed, |_| {}).unwrap();
    report.epochs.iter().flat_map(|e| [e.loss, e.train_acc, e.lr]).collect()
}

#[test]
fn loss_trajectory_is_reproducible() {
    let a = short_run(3);
    let b = short_run(3);
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_ne!(a, short_run(4));
}
