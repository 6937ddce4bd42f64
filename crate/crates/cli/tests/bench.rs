use dfformer_cli::bench::{bench, bench_csv, bench_one, median, BenchOptions};
use dfformer_core::model::{count_flops, ModelConfig};

// Timing checks share one test so nothing else runs beside them.
#[test]
fn bench_rows() {
    let df = ModelConfig::named("nano-df").unwrap();
    let opts = BenchOptions { batch: 1, repeats: 5 };

    let models = vec![("df".to_string(), df.clone()), ("at".to_string(), ModelConfig::named("nano-at").unwrap())];
    let rows = bench(&models, &[32, 30, 64, 128], &opts);
    assert_eq!(rows.len(), 8);
    // 30 does not fit the stride pyramid; the other rows still run.
    assert!(rows[1].is_err() && rows[5].is_err());
    let ok: Vec<_> = rows.into_iter().filter_map(Result::ok).collect();
    assert_eq!(ok.len(), 6);
    for r in &ok {
        let cfg = ModelConfig::named(&format!("nano-{}", r.model)).unwrap();
        assert_eq!(r.macs, count_flops(&cfg, r.resolution).unwrap().total);
        assert!(r.est_bytes > 0);
    }
    for m in ok.chunks(3) {
        assert!(m.windows(2).all(|w| w[1].seconds_per_image >= w[0].seconds_per_image), "{m:?}");
    }
    let csv = bench_csv(&ok);
    assert!(csv.starts_with("model,resolution,seconds_per_image,macs,est_bytes\n"));
    assert_eq!(csv.lines().count(), 7);

    // Doubling the batch doubles total time, within ±30%; median of 5 trials.
    let ratios: Vec<f64> = (0..5)
        .map(|_| {
            let one = bench_one("df", &df, 128, &BenchOptions { batch: 1, repeats: 5 }).unwrap();
            let two = bench_one("df", &df, 128, &BenchOptions { batch: 2, repeats: 5 }).unwrap();
            2.0 * two.seconds_per_image / one.seconds_per_image
        })
        .collect();
    let r = median(ratios.clone());
    assert!((1.4..=2.6).contains(&r), "{ratios:?}");
}

#[test]
fn median_of_even_and_odd() {
    assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
    assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
}
