use std::path::Path;
use std::process::{Command, Output};

use dfformer_cli::commands::run;

fn dfformer(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dfformer")).args(args).current_dir(cwd).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(args: &[&str]) -> i32 {
    run(std::iter::once("dfformer").chain(args.iter().copied()))
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["--version"]), 0);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["params", "--dtype", "f16"]), 1);
    assert_eq!(code(&["params", "--model", "dfformer-xl"]), 2);
    assert_eq!(code(&["params", "--config", d.join("absent.toml").to_str().unwrap()]), 3);

    let bad = d.join("bad.toml");
    std::fs::write(&bad, "[train]\nepochs = \"many\"\n").unwrap();
    assert_eq!(code(&["params", "--config", bad.to_str().unwrap()]), 2);

    let out = d.join("o");
    let out = out.to_str().unwrap();
    assert_eq!(code(&["train", "--dataset", "idx", "--out", out]), 1);
    let missing = d.join("none.idx");
    let missing = missing.to_str().unwrap();
    assert_eq!(code(&["train", "--dataset", "idx", "--images", missing, "--labels", missing, "--out", out]), 3);
    assert_eq!(code(&["eval", "--checkpoint", missing, "--out", out]), 3);
}

#[test]
fn dtype_must_match_the_build() {
    let (ok, other) = if cfg!(feature = "f32") { ("f32", "f64") } else { ("f64", "f32") };
    assert_eq!(code(&["params", "--dtype", ok]), 0);
    assert_eq!(code(&["params", "--dtype", other]), 1);
}

#[test]
fn params_reports_published_size() {
    let dir = tempfile::tempdir().unwrap();
    let o = dfformer(&["params", "--model", "dfformer-s18"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    let n: f64 = text.split_whitespace().find_map(|w| w.parse().ok()).unwrap_or_else(|| panic!("no count in {text:?}"));
    assert!((n - 30e6).abs() <= 0.03 * 30e6, "{text}");

    let o = dfformer(&["flops", "--model", "cdfformer-s18", "--resolution", "224"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!stdout(&o).is_empty());
}

#[test]
fn gradcheck_and_oracles_pass() {
    let dir = tempfile::tempdir().unwrap();
    let o = dfformer(&["gradcheck", "--config", "nano", "--seeds", "1", "--per-tensor", "3"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let o = dfformer(&["oracles"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn train_then_analyse() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("run.toml"),
        "seed = 2\n[train]\nepochs = 2\nbatch_size = 16\n[data]\ntrain_per_class = 8\ntest_per_class = 8\n",
    )
    .unwrap();
    let common = ["--config", "run.toml", "--out", "run"];

    let o = dfformer(&[&["train"], &common[..]].concat(), d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("final train accuracy"));
    let csv = std::fs::read_to_string(d.join("run/train.csv")).unwrap();
    assert!(csv.starts_with("epoch,lr,loss,train_acc,test_acc\n"));
    assert_eq!(csv.lines().count(), 3);

    // Same config and seed: same trajectory.
    let again = dfformer(&["train", "--config", "run.toml", "--out", "again"], d);
    assert!(again.status.success());
    assert_eq!(csv, std::fs::read_to_string(d.join("again/train.csv")).unwrap());

    let ck = "run/model.dfck";
    let o = dfformer(&[&["eval", "--checkpoint", ck], &common[..]].concat(), d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let o = dfformer(&[&["spectrum", "--checkpoint", ck, "--samples", "8"], &common[..]].concat(), d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let spec = std::fs::read_to_string(d.join("run/spectrum.csv")).unwrap();
    assert!(spec.starts_with("freq,delta_log_amp,layer\n"));

    let o = dfformer(&[&["viz-filters", "--checkpoint", ck, "--limit", "2"], &common[..]].concat(), d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ppms = std::fs::read_dir(d.join("run"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "ppm"))
        .count();
    assert_eq!(ppms, 2 * 5);

    let o = dfformer(&[&["cka", "--a", ck, "--b", ck, "--batches", "2", "--batch-size", "8"], &common[..]].concat(), d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cka = std::fs::read_to_string(d.join("run/cka.csv")).unwrap();
    for line in cka.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f[0] == f[1] {
            let v: f64 = f[2].parse().unwrap();
            assert!((v - 1.0).abs() < 1e-6, "{line}");
        }
    }
}
