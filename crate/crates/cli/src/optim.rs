//! AdamW with decoupled weight decay and the warmup/cosine schedule.

use std::f64::consts::PI;

use dfformer_core::{ParamStore, Real, Tensor};

use crate::config::{Schedule, TrainConfig};

/// Learning rate at fractional epoch `t`: linear from `warmup_lr` to `lr`
/// over the warmup, then cosine from `lr` down to `min_lr` at the end.
pub fn lr_at(t: f64, cfg: &TrainConfig) -> f64 {
    let warm = cfg.warmup_epochs;
    if t < warm {
        return cfg.warmup_lr + (cfg.lr - cfg.warmup_lr) * t / warm;
    }
    match cfg.schedule {
        Schedule::Constant => cfg.lr,
        Schedule::Cosine => {
            let span = (cfg.epochs as f64 - warm).max(f64::MIN_POSITIVE);
            let progress = ((t - warm) / span).min(1.0);
            cfg.min_lr + 0.5 * (cfg.lr - cfg.min_lr) * (1.0 + (PI * progress).cos())
        }
    }
}

pub struct AdamW {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    /// Steps taken so far.
    pub t: u64,
}

impl AdamW {
    pub fn new(store: &ParamStore) -> Self {
        let zeros = |p: &dfformer_core::Parameter| Tensor::zeros(p.value.shape().to_vec());
        AdamW { m: store.iter().map(zeros).collect(), v: store.iter().map(zeros).collect(), t: 0 }
    }

    /// One update from the gradients held in `store`:
    /// `p ← p − lr·wd·p − lr·m̂/(√v̂ + ε)`. Decay only touches parameters
    /// flagged for it.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let t = self.t as i32;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for (k, p) in store.iter_mut().enumerate() {
            let decay = if p.decay { lr * cfg.weight_decay } else { 0.0 };
            let g = p.grad.data().to_vec();
            let m = self.m[k].data_mut();
            let v = self.v[k].data_mut();
            let value = p.value.data_mut();
            for i in 0..value.len() {
                let gi = g[i] as f64;
                let mi = b1 * m[i] as f64 + (1.0 - b1) * gi;
                let vi = b2 * v[i] as f64 + (1.0 - b2) * gi * gi;
                m[i] = mi as Real;
                v[i] = vi as Real;
                let update = (mi / c1) / ((vi / c2).sqrt() + cfg.eps);
                let pi = value[i] as f64;
                value[i] = (pi - decay * pi - lr * update) as Real;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dfformer_core::ParamKind;

    fn store(v: Real) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("p", Tensor::full([3], v), ParamKind::Real, true).unwrap();
        s
    }

    #[test]
    fn zero_grad_without_decay_is_a_no_op() {
        let mut s = store(0.7);
        let cfg = TrainConfig { weight_decay: 0.0, ..Default::default() };
        let mut opt = AdamW::new(&s);
        opt.step(&mut s, 0.1, &cfg);
        assert_eq!(s.iter().next().unwrap().value, Tensor::full([3], 0.7));
    }

    #[test]
    fn zero_grad_with_decay_shrinks() {
        let mut s = store(2.0);
        let cfg = TrainConfig { weight_decay: 0.05, ..Default::default() };
        let mut opt = AdamW::new(&s);
        opt.step(&mut s, 0.1, &cfg);
        let expect = 2.0 * (1.0 - 0.1 * 0.05);
        assert!(s.iter().next().unwrap().value.data().iter().all(|&v| (v - expect).abs() < 1e-15));
    }

    #[test]
    fn schedule_endpoints() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_at(0.0, &cfg), cfg.warmup_lr);
        assert!((lr_at(cfg.epochs as f64, &cfg) - cfg.min_lr).abs() < 1e-15);
    }
}
