//! Datasets: the synthetic oriented-carrier task and IDX image files.

use std::f64::consts::PI;
use std::path::Path;

use dfformer_core::rng::{named_stream, Stream};
use dfformer_core::spectral::{rfft2, SpectralPlan};
use dfformer_core::{Real, Tensor};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

/// Channel-last images with integer labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub images: Vec<Real>,
    pub labels: Vec<usize>,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn image_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn image(&self, i: usize) -> &[Real] {
        let n = self.image_len();
        &self.images[i * n..(i + 1) * n]
    }

    /// Stacks the selected samples into `[B, H, W, C]`.
    pub fn batch(&self, idx: &[usize]) -> (Tensor, Vec<usize>) {
        let mut data = Vec::with_capacity(idx.len() * self.image_len());
        for &i in idx {
            data.extend_from_slice(self.image(i));
        }
        let t = Tensor::new(vec![idx.len(), self.height, self.width, self.channels], data)
            .expect("batch shape is consistent");
        (t, idx.iter().map(|&i| self.labels[i]).collect())
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.classes];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }
}

/// Integer frequency vectors `(kx, ky)` whose radius lies in
/// `[r_lo, r_hi)` and whose angle lies in `[a_lo, a_hi)`, angles in `[0, π)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Band {
    pub radius: (f64, f64),
    pub angle: (f64, f64),
}

impl Band {
    /// Vectors of the band representable on a `grid × grid` map without
    /// reaching Nyquist.
    pub fn vectors(&self, grid: usize) -> Vec<(i64, i64)> {
        let lim = (grid / 2) as i64 - 1;
        let mut out = Vec::new();
        for ky in 0..=lim {
            for kx in -lim..=lim {
                if ky == 0 && kx <= 0 {
                    continue;
                }
                let r = ((kx * kx + ky * ky) as f64).sqrt();
                let a = (ky as f64).atan2(kx as f64);
                if r >= self.radius.0 && r < self.radius.1 && a >= self.angle.0 && a < self.angle.1 {
                    out.push((kx, ky));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub grid: usize,
    pub classes: usize,
    pub samples_per_class: usize,
    pub noise: f64,
    /// Band set per class; each sample draws one band, then one vector.
    pub bands: Vec<Vec<Band>>,
}

fn ring(grid: usize, classes: usize, i: usize) -> (f64, f64) {
    let (lo, hi) = (2.0, grid as f64 / 2.0 - 2.0);
    let step = (hi - lo) / classes as f64;
    (lo + step * i as f64, lo + step * (i + 1) as f64)
}

impl SyntheticSpec {
    /// Class `c` draws from ring `c` at orientations in `[0, π/2)` or from
    /// ring `c+1` at orientations in `[π/2, π)`, so neither radius nor
    /// orientation alone identifies the class.
    pub fn new(seed: u64, grid: usize, classes: usize, samples_per_class: usize) -> Self {
        let bands = (0..classes)
            .map(|c| {
                vec![
                    Band { radius: ring(grid, classes, c), angle: (0.0, PI / 2.0) },
                    Band { radius: ring(grid, classes, (c + 1) % classes), angle: (PI / 2.0, PI) },
                ]
            })
            .collect();
        SyntheticSpec { seed, grid, classes, samples_per_class, noise: 0.3, bands }
    }

    /// One full-circle ring per class.
    pub fn single_band(seed: u64, grid: usize, classes: usize, samples_per_class: usize) -> Self {
        let bands = (0..classes).map(|c| vec![Band { radius: ring(grid, classes, c), angle: (0.0, PI) }]).collect();
        SyntheticSpec { bands, ..Self::new(seed, grid, classes, samples_per_class) }
    }
}

/// Generates `split` ("train", "test", ...) of the task; each split uses
/// its own stream of the data seed.
pub fn gen_synthetic(spec: &SyntheticSpec, split: &str) -> Dataset {
    let g = spec.grid;
    let mut rng = named_stream(spec.seed, Stream::Data, &format!("synthetic.{split}"));
    let vectors: Vec<Vec<Vec<(i64, i64)>>> =
        spec.bands.iter().map(|bs| bs.iter().map(|b| b.vectors(g)).collect()).collect();
    for (c, bs) in vectors.iter().enumerate() {
        assert!(bs.iter().all(|v| !v.is_empty()), "class {c} has an empty band on a {g}-grid");
    }
    let n = spec.classes * spec.samples_per_class;
    let mut images = Vec::with_capacity(n * g * g * 3);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % spec.classes;
        let bs = &vectors[c];
        let band = &bs[rng.random_range(0..bs.len())];
        let (kx, ky) = band[rng.random_range(0..band.len())];
        let phase = rng.random::<f64>() * 2.0 * PI;
        for y in 0..g {
            for x in 0..g {
                let carrier = (2.0 * PI * (kx * x as i64 + ky * y as i64) as f64 / g as f64 + phase).sin();
                for _ in 0..3 {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    images.push((carrier + spec.noise * z) as Real);
                }
            }
        }
        labels.push(c);
    }
    Dataset { images, labels, height: g, width: g, channels: 3, classes: spec.classes }
}

/// Accuracy of the fixed probe that scores each class by the summed
/// spectral amplitude over its band vectors (channel-averaged image).
pub fn band_probe_accuracy(ds: &Dataset, spec: &SyntheticSpec) -> f64 {
    let g = spec.grid;
    let plan = SpectralPlan::new(g, g).expect("positive grid");
    let wh = g / 2 + 1;
    let class_bins: Vec<Vec<(usize, usize)>> = spec
        .bands
        .iter()
        .map(|bs| {
            bs.iter()
                .flat_map(|b| b.vectors(g))
                .map(|(kx, ky)| {
                    let (kx, ky) = if kx >= 0 { (kx, ky) } else { (-kx, -ky) };
                    (ky.rem_euclid(g as i64) as usize, kx as usize)
                })
                .collect()
        })
        .collect();
    let mut correct = 0;
    for i in 0..ds.len() {
        let img = ds.image(i);
        let mono = Tensor::from_fn([g, g], |p| img[p * 3..p * 3 + 3].iter().sum::<Real>() / 3.0);
        let spec_t = rfft2(&mono, &plan).expect("plan matches");
        let amp = |(r, c): (usize, usize)| spec_t.data()[r * wh + c].norm() as f64;
        let scores: Vec<f64> = class_bins.iter().map(|bins| bins.iter().map(|&b| amp(b)).sum()).collect();
        let pred = (0..scores.len()).max_by(|&a, &b| scores[a].total_cmp(&scores[b])).unwrap();
        correct += usize::from(pred == ds.labels[i]);
    }
    correct as f64 / ds.len() as f64
}

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: magic {got:#010x}, expected {expected:#010x}")]
    Magic { path: String, expected: u32, got: u32 },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: file truncated ({what})")]
    Truncated { path: String, what: &'static str },
}

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(buf: &[u8], at: usize, path: &str, what: &'static str) -> Result<u32, IdxError> {
    buf.get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or(IdxError::Truncated { path: path.to_string(), what })
}

/// Parses IDX image and label buffers into `target × target` three-channel
/// images scaled to `[0, 1]` (nearest-neighbour resize, grey replicated).
pub fn parse_idx(images: &[u8], labels: &[u8], target: usize, names: (&str, &str)) -> Result<Dataset, IdxError> {
    let (ip, lp) = names;
    let magic = be_u32(images, 0, ip, "header")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(IdxError::Magic { path: ip.into(), expected: IDX_IMAGES_MAGIC, got: magic });
    }
    let magic = be_u32(labels, 0, lp, "header")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(IdxError::Magic { path: lp.into(), expected: IDX_LABELS_MAGIC, got: magic });
    }
    let n = be_u32(images, 4, ip, "header")? as usize;
    let rows = be_u32(images, 8, ip, "header")? as usize;
    let cols = be_u32(images, 12, ip, "header")? as usize;
    let nl = be_u32(labels, 4, lp, "header")? as usize;
    if n != nl {
        return Err(IdxError::CountMismatch { images: n, labels: nl });
    }
    let pixels = images.get(16..16 + n * rows * cols).ok_or(IdxError::Truncated { path: ip.into(), what: "pixels" })?;
    let lab = labels.get(8..8 + n).ok_or(IdxError::Truncated { path: lp.into(), what: "labels" })?;
    let mut out = Vec::with_capacity(n * target * target * 3);
    for i in 0..n {
        let img = &pixels[i * rows * cols..(i + 1) * rows * cols];
        for y in 0..target {
            let sy = y * rows / target;
            for x in 0..target {
                let sx = x * cols / target;
                let v = img[sy * cols + sx] as Real / 255.0;
                out.extend_from_slice(&[v, v, v]);
            }
        }
    }
    let labels: Vec<usize> = lab.iter().map(|&l| l as usize).collect();
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    Ok(Dataset { images: out, labels, height: target, width: target, channels: 3, classes })
}

pub fn load_idx(images: &Path, labels: &Path, target: usize) -> Result<Dataset, IdxError> {
    let read = |p: &Path| std::fs::read(p).map_err(|source| IdxError::Io { path: p.display().to_string(), source });
    let (ib, lb) = (read(images)?, read(labels)?);
    parse_idx(&ib, &lb, target, (&images.display().to_string(), &labels.display().to_string()))
}
