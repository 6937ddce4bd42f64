//! Mini-batch training and evaluation.

use std::fmt::Write;

use dfformer_core::autograd::ops;
use dfformer_core::model::{Forward, Model};
use dfformer_core::rng::{stream, Stream};
use dfformer_core::{Real, Tape};
use rand::seq::SliceRandom;

use crate::config::TrainConfig;
use crate::data::Dataset;
use crate::optim::{lr_at, AdamW};

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    /// Running accuracy over the epoch's training batches.
    pub train_acc: f64,
    pub test_acc: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// Accuracy of the final weights on the full training set.
    pub final_train_acc: f64,
    pub final_test_acc: Option<f64>,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,lr,loss,train_acc,test_acc\n");
        for e in &self.epochs {
            let test = e.test_acc.map(|a| a.to_string()).unwrap_or_default();
            writeln!(s, "{},{},{},{},{}", e.epoch, e.lr, e.loss, e.train_acc, test).unwrap();
        }
        s
    }
}

fn argmax(row: &[Real]) -> usize {
    (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap_or(0)
}

fn correct(logits: &[Real], labels: &[usize]) -> usize {
    let k = logits.len() / labels.len();
    labels.iter().enumerate().filter(|&(i, &l)| argmax(&logits[i * k..(i + 1) * k]) == l).count()
}

/// Mean loss and accuracy over `ds` without recording gradients.
pub fn evaluate(model: &Model, ds: &Dataset, batch: usize) -> dfformer_core::Result<(f64, f64)> {
    let (mut loss, mut hits) = (0.0, 0);
    let idx: Vec<usize> = (0..ds.len()).collect();
    for chunk in idx.chunks(batch.max(1)) {
        let (x, y) = ds.batch(chunk);
        let mut tape = Tape::inference();
        let xv = tape.leaf(x);
        let out = model.forward(&mut tape, xv, &mut Forward::default())?;
        let l = ops::cross_entropy(&mut tape, out.logits, &y, 0.0)?;
        loss += tape.value(l).item()? as f64 * chunk.len() as f64;
        hits += correct(tape.value(out.logits).data(), &y);
    }
    Ok((loss / ds.len() as f64, hits as f64 / ds.len() as f64))
}

/// Trains `model` in place. Shuffling and stochastic depth draw from
/// streams of `seed`; `on_epoch` sees each epoch's statistics as they land.
pub fn train(
    model: &mut Model,
    train: &Dataset,
    test: Option<&Dataset>,
    cfg: &TrainConfig,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochStats),
) -> dfformer_core::Result<TrainReport> {
    let mut shuffle = stream(seed, Stream::Shuffle);
    let mut drop_rng = stream(seed, Stream::DropPath);
    let mut opt = AdamW::new(&model.store);
    let steps = train.len().div_ceil(cfg.batch_size.max(1));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        let (mut loss_sum, mut hits) = (0.0, 0);
        let mut lr = 0.0;
        for (s, chunk) in order.chunks(cfg.batch_size.max(1)).enumerate() {
            lr = lr_at(epoch as f64 + s as f64 / steps as f64, cfg);
            let (x, y) = train.batch(chunk);
            let mut tape = Tape::new();
            let xv = tape.leaf(x);
            let mut fwd = Forward { drop_path: Some(&mut drop_rng) };
            let out = model.forward(&mut tape, xv, &mut fwd)?;
            let loss = ops::cross_entropy(&mut tape, out.logits, &y, cfg.label_smoothing as Real)?;
            loss_sum += tape.value(loss).item()? as f64 * chunk.len() as f64;
            hits += correct(tape.value(out.logits).data(), &y);
            model.store.zero_grads();
            tape.backward(loss, &mut model.store)?;
            opt.step(&mut model.store, lr, cfg);
        }
        let test_acc = match test {
            Some(t) => Some(evaluate(model, t, cfg.batch_size)?.1),
            None => None,
        };
        let stats = EpochStats {
            epoch: epoch + 1,
            lr,
            loss: loss_sum / train.len() as f64,
            train_acc: hits as f64 / train.len() as f64,
            test_acc,
        };
        on_epoch(&stats);
        epochs.push(stats);
    }
    let final_train_acc = evaluate(model, train, cfg.batch_size)?.1;
    let final_test_acc = epochs.last().and_then(|e| e.test_acc);
    Ok(TrainReport { epochs, final_train_acc, final_test_acc })
}
