//! Subcommand dispatch. `run` returns the process exit code:
//! 0 success, 1 usage, 2 validation failure, 3 I/O.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use dfformer_core::analysis::{filter_ppm, linear_cka, log_amplitude_profile, profiles_csv, visualize_filter_width};
use dfformer_core::model::{
    build_model, count_flops, count_params, load_checkpoint, save_activations, save_checkpoint, Forward, Model,
    ModelConfig,
};
use dfformer_core::{Real, Tape, Tensor};
use thiserror::Error;

use crate::bench::{bench, bench_csv, BenchOptions};
use crate::config::{load_config, ConfigError, DataKind, RunConfig};
use crate::data::{gen_synthetic, load_idx, Dataset, IdxError, SyntheticSpec};
use crate::suites::{gradcheck_suite, oracle_suite, Check};
use crate::train::{evaluate, train};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<IdxError> for CliError {
    fn from(e: IdxError) -> Self {
        match e {
            IdxError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<dfformer_core::Error> for CliError {
    fn from(e: dfformer_core::Error) -> Self {
        match e {
            dfformer_core::Error::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Dtype {
    F32,
    F64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DatasetKind {
    Synthetic,
    Idx,
}

#[derive(Debug, Parser)]
#[command(name = "dfformer", version, about = "Dynamic-filter backbones at desk scale")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration, or the preset name `nano`.
    #[arg(long, global = true)]
    pub config: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Must match the width the binary was built with.
    #[arg(long, global = true, value_enum)]
    pub dtype: Option<Dtype>,
    /// Model name such as `nano-df`, `nano-gf` or `dfformer-s18`;
    /// replaces the configured family and size.
    #[arg(long, global = true)]
    pub model: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[arg(long, value_enum)]
    pub dataset: Option<DatasetKind>,
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub test_images: Option<PathBuf>,
    #[arg(long)]
    pub test_labels: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on the synthetic task or IDX files; writes train.csv and model.dfck.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Loss and accuracy of a checkpoint on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Finite-difference checks of every op, layer and the whole model.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        #[arg(long, default_value_t = 6)]
        per_tensor: usize,
    },
    /// Spectral, convolution, linearity and CKA oracle suites.
    Oracles {
        #[command(flatten)]
        common: Common,
    },
    /// Parameter count.
    Params {
        #[command(flatten)]
        common: Common,
    },
    /// Analytic multiply-accumulate count.
    Flops {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Forward time against input resolution; writes bench.csv.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Model names; bare family names (`df`, `cf`, `at`, `gf`) use Nano widths.
        #[arg(long, value_delimiter = ',', default_value = "df,cf,at")]
        models: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "64,128,256")]
        resolutions: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, default_value_t = 1)]
        batch: usize,
    },
    /// Relative log-amplitude profiles of every square feature map; writes spectrum.csv.
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        samples: usize,
    },
    /// PPM images of the spectral filters.
    VizFilters {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Images written per parameter.
        #[arg(long, default_value_t = 8)]
        limit: usize,
    },
    /// Layer-by-layer linear CKA between two checkpoints; writes cka.csv.
    Cka {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        a: Option<PathBuf>,
        #[arg(long)]
        b: Option<PathBuf>,
        /// Model of the second checkpoint, when it differs.
        #[arg(long)]
        model_b: Option<String>,
        #[arg(long, default_value_t = 4)]
        batches: usize,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

fn check_dtype(d: Option<Dtype>) -> Result<(), CliError> {
    let built = if std::mem::size_of::<Real>() == 4 { Dtype::F32 } else { Dtype::F64 };
    match d {
        Some(d) if d != built => Err(CliError::Usage(format!(
            "--dtype {:?} requested but this binary computes in {:?}; rebuild with{} the `f32` feature",
            d,
            built,
            if d == Dtype::F32 { "" } else { "out" }
        ))),
        _ => Ok(()),
    }
}

fn resolve(common: &Common) -> Result<(RunConfig, ModelConfig), CliError> {
    check_dtype(common.dtype)?;
    let mut run = match common.config.as_deref() {
        None | Some("nano") => RunConfig::default(),
        Some(p) => load_config(Path::new(p))?,
    };
    if let Some(s) = common.seed {
        run.seed = s;
    }
    if let Some(name) = &common.model {
        let named = ModelConfig::named(name)?;
        let family = named.family.ok_or_else(|| CliError::Validation(format!("{name}: no family")))?;
        run.model.family = family.name().to_string();
        run.model.size = name
            .to_ascii_lowercase()
            .split_once('-')
            .map(|(a, b)| if a == "nano" { "nano".to_string() } else { b.to_string() })
            .unwrap_or_default();
    }
    let cfg = run.model_config()?;
    Ok((run, cfg))
}

fn apply_data_args(run: &mut RunConfig, data: &DataArgs) {
    if let Some(k) = data.dataset {
        run.data.kind = match k {
            DatasetKind::Synthetic => DataKind::Synthetic,
            DatasetKind::Idx => DataKind::Idx,
        };
    }
    if data.images.is_some() || data.labels.is_some() {
        run.data.kind = DataKind::Idx;
    }
    for (dst, src) in [
        (&mut run.data.images, &data.images),
        (&mut run.data.labels, &data.labels),
        (&mut run.data.test_images, &data.test_images),
        (&mut run.data.test_labels, &data.test_labels),
    ] {
        if src.is_some() {
            dst.clone_from(src);
        }
    }
}

/// Training and (optional) test splits sized for `cfg`.
pub fn datasets(run: &RunConfig, cfg: &ModelConfig) -> Result<(Dataset, Option<Dataset>), CliError> {
    let d = &run.data;
    match d.kind {
        DataKind::Synthetic => {
            if cfg.input != (d.grid, d.grid) {
                return Err(CliError::Validation(format!(
                    "synthetic grid {} does not match model input {:?}",
                    d.grid, cfg.input
                )));
            }
            let mut tr = SyntheticSpec::new(run.seed, d.grid, d.classes, d.train_per_class);
            tr.noise = d.noise;
            let mut te = tr.clone();
            te.samples_per_class = d.test_per_class;
            let test = (d.test_per_class > 0).then(|| gen_synthetic(&te, "test"));
            Ok((gen_synthetic(&tr, "train"), test))
        }
        DataKind::Idx => {
            let (Some(i), Some(l)) = (&d.images, &d.labels) else {
                return Err(CliError::Usage("IDX data needs --images and --labels".into()));
            };
            if cfg.input.0 != cfg.input.1 {
                return Err(CliError::Validation("IDX loading needs a square model input".into()));
            }
            let train = load_idx(i, l, cfg.input.0)?;
            let test = match (&d.test_images, &d.test_labels) {
                (Some(i), Some(l)) => Some(load_idx(i, l, cfg.input.0)?),
                _ => None,
            };
            Ok((train, test))
        }
    }
}

fn check_classes(ds: &Dataset, cfg: &ModelConfig) -> Result<(), CliError> {
    if ds.classes > cfg.num_classes {
        return Err(CliError::Validation(format!(
            "data has {} classes but the model head has {}; set model.classes",
            ds.classes, cfg.num_classes
        )));
    }
    Ok(())
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn report(checks: &[Check]) -> Result<(), CliError> {
    let mut failed = 0;
    for c in checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        failed += usize::from(!c.passed);
    }
    println!("{} checks, {failed} failed", checks.len());
    if failed > 0 {
        Err(CliError::Validation(format!("{failed} checks outside tolerance")))
    } else {
        Ok(())
    }
}

fn checks_csv(checks: &[Check]) -> String {
    let mut s = String::from("check,passed,detail\n");
    for c in checks {
        writeln!(s, "\"{}\",{},\"{}\"", c.name, c.passed, c.detail).unwrap();
    }
    s
}

fn model_or_init(path: Option<&Path>, cfg: &ModelConfig, seed: u64) -> Result<Model, CliError> {
    match path {
        Some(p) => {
            if !p.exists() {
                return Err(CliError::Io(format!("{}: no such file", p.display())));
            }
            Ok(load_checkpoint(p, cfg)?)
        }
        None => Ok(build_model(cfg, seed)?),
    }
}

/// Feature maps of every tap for the samples `idx`.
fn taps(model: &Model, ds: &Dataset, idx: &[usize]) -> Result<Vec<Tensor>, CliError> {
    let (x, _) = ds.batch(idx);
    let mut tape = Tape::inference();
    let xv = tape.leaf(x);
    let out = model.forward(&mut tape, xv, &mut Forward::default())?;
    Ok(out.taps.iter().map(|&t| tape.value(t).clone()).collect())
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Train { common, data, epochs, batch_size, lr } => {
            let (mut run, cfg) = resolve(&common)?;
            apply_data_args(&mut run, &data);
            if let Some(e) = epochs {
                run.train.epochs = e;
            }
            if let Some(b) = batch_size {
                run.train.batch_size = b;
            }
            if let Some(l) = lr {
                run.train.lr = l;
            }
            let (tr, te) = datasets(&run, &cfg)?;
            check_classes(&tr, &cfg)?;
            let mut model = build_model(&cfg, run.seed)?;
            println!("model {cfg}: {} parameters, {} training samples", count_params(&model), tr.len());
            let report = train(&mut model, &tr, te.as_ref(), &run.train, run.seed, |e| {
                let test = e.test_acc.map(|a| format!(" test_acc {a:.4}")).unwrap_or_default();
                println!("epoch {:3} lr {:.3e} loss {:.4} train_acc {:.4}{test}", e.epoch, e.lr, e.loss, e.train_acc);
            })?;
            write_file(&common.out.join("train.csv"), report.to_csv())?;
            let ck = common.out.join("model.dfck");
            save_checkpoint(&model, &ck)?;
            println!("final train accuracy {:.4}", report.final_train_acc);
            if let Some(a) = report.final_test_acc {
                println!("final test accuracy {a:.4}");
            }
            println!("wrote {}", ck.display());
            Ok(())
        }
        Command::Eval { common, data, checkpoint } => {
            let (mut run, cfg) = resolve(&common)?;
            apply_data_args(&mut run, &data);
            let (tr, te) = datasets(&run, &cfg)?;
            let ds = te.unwrap_or(tr);
            check_classes(&ds, &cfg)?;
            let model = model_or_init(Some(&checkpoint), &cfg, run.seed)?;
            let (loss, acc) = evaluate(&model, &ds, run.train.batch_size)?;
            println!("{} samples: loss {loss:.4} accuracy {acc:.4}", ds.len());
            Ok(())
        }
        Command::Gradcheck { common, seeds, per_tensor } => {
            let (run, cfg) = resolve(&common)?;
            if std::mem::size_of::<Real>() != 8 {
                return Err(CliError::Usage("gradient checks need the 64-bit build".into()));
            }
            let seeds: Vec<u64> = (0..seeds).map(|s| run.seed + s).collect();
            let checks = gradcheck_suite(&cfg, &seeds, per_tensor);
            if common.out.exists() {
                write_file(&common.out.join("gradcheck.csv"), checks_csv(&checks))?;
            }
            report(&checks)
        }
        Command::Oracles { common } => {
            let (run, _) = resolve(&common)?;
            report(&oracle_suite(run.seed))
        }
        Command::Params { common } => {
            let (_, cfg) = resolve(&common)?;
            let n = dfformer_core::model::count_params_for(&cfg)?;
            println!("{cfg}: {n} parameters ({:.2}M)", n as f64 / 1e6);
            Ok(())
        }
        Command::Flops { common, resolution } => {
            let (_, cfg) = resolve(&common)?;
            let res = resolution.unwrap_or(cfg.input.0);
            let r = count_flops(&cfg, res)?;
            println!("{cfg} @ {res}²: {:.4} GMACs", r.total / 1e9);
            for (i, s) in r.stages.iter().enumerate() {
                println!("  stage {i}: {:.4} GMACs", s / 1e9);
            }
            println!("  head: {:.6} GMACs", r.head / 1e9);
            println!("  fft share: {:.4} GMACs", r.fft / 1e9);
            Ok(())
        }
        Command::Bench { common, models, resolutions, repeats, batch } => {
            check_dtype(common.dtype)?;
            let mut list = Vec::new();
            for m in &models {
                let name = if m.contains('-') { m.clone() } else { format!("nano-{m}") };
                list.push((m.clone(), ModelConfig::named(&name)?));
            }
            let rows = bench(&list, &resolutions, &BenchOptions { batch, repeats });
            let mut ok = Vec::new();
            for r in rows {
                match r {
                    Ok(row) => {
                        println!(
                            "{:>10} {:>5}²  {:.4e} s/img  {:.3e} MACs  {} bytes",
                            row.model, row.resolution, row.seconds_per_image, row.macs, row.est_bytes
                        );
                        ok.push(row);
                    }
                    Err(e) => eprintln!("skipped: {e}"),
                }
            }
            write_file(&common.out.join("bench.csv"), bench_csv(&ok))
        }
        Command::Spectrum { common, data, checkpoint, samples } => {
            let (mut run, cfg) = resolve(&common)?;
            apply_data_args(&mut run, &data);
            let (tr, te) = datasets(&run, &cfg)?;
            let ds = te.unwrap_or(tr);
            let model = model_or_init(checkpoint.as_deref(), &cfg, run.seed)?;
            let idx: Vec<usize> = (0..samples.min(ds.len())).collect();
            let maps = taps(&model, &ds, &idx)?;
            let mut profiles = Vec::new();
            for (i, m) in maps.iter().enumerate() {
                if m.shape()[1] == m.shape()[2] {
                    profiles.push(log_amplitude_profile(m, i)?);
                }
            }
            println!("{} profiles over {} samples", profiles.len(), idx.len());
            write_file(&common.out.join("spectrum.csv"), profiles_csv(&profiles))
        }
        Command::VizFilters { common, checkpoint, limit } => {
            let (run, cfg) = resolve(&common)?;
            let model = model_or_init(checkpoint.as_deref(), &cfg, run.seed)?;
            let mut written = 0;
            for (id, (_, w)) in model.spectral_params() {
                let p = model.store.get(id);
                let img = visualize_filter_width(&p.value, w)?;
                let n = img.shape()[2];
                for f in 0..n.min(limit) {
                    let path = common.out.join(format!("{}.{f}.ppm", p.name));
                    write_file(&path, filter_ppm(&img, f)?)?;
                    written += 1;
                }
            }
            println!("wrote {written} images to {}", common.out.display());
            Ok(())
        }
        Command::Cka { common, data, a, b, model_b, batches, batch_size } => {
            let (mut run, cfg_a) = resolve(&common)?;
            apply_data_args(&mut run, &data);
            let cfg_b = match &model_b {
                Some(name) => {
                    ModelConfig::named(name)?.with_input(cfg_a.input.0, cfg_a.input.1).with_classes(cfg_a.num_classes)
                }
                None => cfg_a.clone(),
            };
            let (tr, te) = datasets(&run, &cfg_a)?;
            let ds = te.unwrap_or(tr);
            let ma = model_or_init(a.as_deref(), &cfg_a, run.seed)?;
            let mb = model_or_init(b.as_deref().or(a.as_deref()), &cfg_b, run.seed)?;
            if batches * batch_size > ds.len() {
                return Err(CliError::Validation(format!(
                    "{batches} batches of {batch_size} need more than the {} samples available",
                    ds.len()
                )));
            }
            let (mut fa, mut fb): (Vec<Vec<Tensor>>, Vec<Vec<Tensor>>) = (Vec::new(), Vec::new());
            for t in 0..batches {
                let idx: Vec<usize> = (t * batch_size..(t + 1) * batch_size).collect();
                let (ta, tb) = (taps(&ma, &ds, &idx)?, taps(&mb, &ds, &idx)?);
                if t == 0 {
                    save_activations(&common.out.join("acts_a.dfck"), &ta)?;
                    save_activations(&common.out.join("acts_b.dfck"), &tb)?;
                }
                for (store, maps) in [(&mut fa, ta), (&mut fb, tb)] {
                    store.resize(maps.len(), Vec::new());
                    for (l, m) in maps.into_iter().enumerate() {
                        let n = m.shape()[0];
                        let d = m.numel() / n;
                        store[l].push(m.reshape([n, d])?);
                    }
                }
            }
            let res = linear_cka(&fa, &fb)?;
            println!("{}×{} CKA matrix over {} samples", res.rows, res.cols, batches * batch_size);
            write_file(&common.out.join("cka.csv"), res.to_csv())
        }
    }
}
