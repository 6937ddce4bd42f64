//! Forward-pass timing across input resolutions.

use std::fmt::Write;
use std::time::Instant;

use dfformer_core::model::{build_model, count_flops, Forward, ModelConfig};
use dfformer_core::{Real, Tape, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub model: String,
    pub resolution: usize,
    pub seconds_per_image: f64,
    pub macs: f64,
    /// Parameter bytes plus every activation the forward pass held.
    pub est_bytes: usize,
}

#[derive(Clone, Debug)]
pub struct BenchOptions {
    pub batch: usize,
    pub repeats: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions { batch: 1, repeats: 5 }
    }
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Median wall time of `repeats` forward passes over a `batch` of
/// `resolution²` inputs, plus the analytic and memory columns.
pub fn bench_one(name: &str, cfg: &ModelConfig, resolution: usize, opts: &BenchOptions) -> Result<BenchRow, String> {
    let cfg = cfg.clone().with_input(resolution, resolution);
    let model = build_model(&cfg, 0).map_err(|e| format!("{name} @ {resolution}: {e}"))?;
    let macs = count_flops(&cfg, resolution).map_err(|e| e.to_string())?.total;
    let x = Tensor::from_fn([opts.batch, resolution, resolution, cfg.in_channels], |i| ((i % 97) as Real) / 97.0 - 0.5);
    let mut times = Vec::with_capacity(opts.repeats);
    let mut act_bytes = 0;
    for _ in 0..opts.repeats.max(1) {
        let mut tape = Tape::inference();
        let start = Instant::now();
        let xv = tape.leaf(x.clone());
        let out =
            model.forward(&mut tape, xv, &mut Forward::default()).map_err(|e| format!("{name} @ {resolution}: {e}"))?;
        std::hint::black_box(tape.value(out.logits));
        times.push(start.elapsed().as_secs_f64());
        act_bytes = tape.value_bytes();
    }
    Ok(BenchRow {
        model: name.to_string(),
        resolution,
        seconds_per_image: median(times) / opts.batch as f64,
        macs,
        est_bytes: model.store.count() * std::mem::size_of::<Real>() + act_bytes,
    })
}

/// Every model at every resolution; failures are reported per row.
pub fn bench(
    models: &[(String, ModelConfig)],
    resolutions: &[usize],
    opts: &BenchOptions,
) -> Vec<Result<BenchRow, String>> {
    let mut rows = Vec::new();
    for (name, cfg) in models {
        for &r in resolutions {
            rows.push(bench_one(name, cfg, r, opts));
        }
    }
    rows
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("model,resolution,seconds_per_image,macs,est_bytes\n");
    for r in rows {
        writeln!(s, "{},{},{},{},{}", r.model, r.resolution, r.seconds_per_image, r.macs, r.est_bytes).unwrap();
    }
    s
}
