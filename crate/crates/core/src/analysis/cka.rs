//! Mini-batch linear CKA from unbiased HSIC estimates.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Linear Gram matrix `XXᵀ` of the rows of `x` (leading axis = samples,
/// all other axes flattened).
pub fn gram(x: &Tensor) -> Vec<f64> {
    let n = x.shape()[0];
    let d = x.numel() / n;
    let xd = x.data();
    let mut g = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v: f64 = (0..d).map(|p| xd[i * d + p] as f64 * xd[j * d + p] as f64).sum();
            g[i * n + j] = v;
            g[j * n + i] = v;
        }
    }
    g
}

/// Unbiased HSIC estimate of two symmetric `n × n` Gram matrices; the
/// diagonals are ignored.
pub fn hsic_unbiased(k: &[f64], l: &[f64], n: usize) -> Result<f64> {
    if n < 4 {
        return Err(Error::contract("hsic", format!("unbiased HSIC needs at least 4 samples, got {n}")));
    }
    let off = |m: &[f64], i: usize, j: usize| if i == j { 0.0 } else { m[i * n + j] };
    let mut trace = 0.0;
    let (mut sk, mut sl) = (0.0, 0.0);
    let mut rk = vec![0.0; n];
    let mut rl = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (off(k, i, j), off(l, i, j));
            trace += a * b;
            rk[i] += a;
            rl[i] += b;
        }
        sk += rk[i];
        sl += rl[i];
    }
    let cross: f64 = rk.iter().zip(&rl).map(|(a, b)| a * b).sum();
    let nf = n as f64;
    Ok((trace + sk * sl / ((nf - 1.0) * (nf - 2.0)) - 2.0 / (nf - 2.0) * cross) / (nf * (nf - 3.0)))
}

/// Running sums of HSIC terms for one pair of layers.
#[derive(Clone, Debug, Default)]
pub struct CkaAccumulator {
    xy: f64,
    xx: f64,
    yy: f64,
}

impl CkaAccumulator {
    pub fn update(&mut self, x: &Tensor, y: &Tensor) -> Result<()> {
        let n = x.shape()[0];
        if y.shape()[0] != n {
            return Err(Error::contract("cka", format!("batch sizes differ: {} vs {}", n, y.shape()[0])));
        }
        let (k, l) = (gram(x), gram(y));
        self.xy += hsic_unbiased(&k, &l, n)?;
        self.xx += hsic_unbiased(&k, &k, n)?;
        self.yy += hsic_unbiased(&l, &l, n)?;
        Ok(())
    }

    pub fn value(&self) -> f64 {
        self.xy / (self.xx * self.yy).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CkaResult {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `[rows × cols]`.
    pub matrix: Vec<f64>,
}

impl CkaResult {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.cols + j]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("layer_a,layer_b,cka\n");
        for i in 0..self.rows {
            for j in 0..self.cols {
                s.push_str(&format!("{i},{j},{}\n", self.get(i, j)));
            }
        }
        s
    }
}

/// CKA between every layer of `a` and every layer of `b`. Both are indexed
/// `[layer][batch]`; each tensor's leading axis is the sample axis. HSIC
/// terms are summed over batches before normalizing.
pub fn linear_cka(a: &[Vec<Tensor>], b: &[Vec<Tensor>]) -> Result<CkaResult> {
    let batches = a.first().map_or(0, Vec::len);
    if batches == 0 || a.iter().chain(b).any(|l| l.len() != batches) {
        return Err(Error::contract("cka", "both activation sets need the same non-empty batch partition"));
    }
    for t in 0..batches {
        let n = a[0][t].shape()[0];
        if a.iter().chain(b).any(|l| l[t].shape()[0] != n) {
            return Err(Error::contract("cka", format!("batch {t} has differing sample counts")));
        }
        if n < 4 {
            return Err(Error::contract("cka", format!("batch {t} has {n} samples, need at least 4")));
        }
    }
    let grams =
        |set: &[Vec<Tensor>]| -> Vec<Vec<Vec<f64>>> { set.iter().map(|l| l.iter().map(gram).collect()).collect() };
    let (ga, gb) = (grams(a), grams(b));
    let self_terms = |g: &[Vec<Vec<f64>>], set: &[Vec<Tensor>]| -> Result<Vec<f64>> {
        g.iter().map(|l| (0..batches).map(|t| hsic_unbiased(&l[t], &l[t], set[0][t].shape()[0])).sum()).collect()
    };
    let (sa, sb) = (self_terms(&ga, a)?, self_terms(&gb, b)?);
    let mut matrix = Vec::with_capacity(a.len() * b.len());
    for (i, gi) in ga.iter().enumerate() {
        for (j, gj) in gb.iter().enumerate() {
            let mut xy = 0.0;
            for t in 0..batches {
                xy += hsic_unbiased(&gi[t], &gj[t], a[0][t].shape()[0])?;
            }
            matrix.push(xy / (sa[i] * sb[j]).sqrt());
        }
    }
    Ok(CkaResult { rows: a.len(), cols: b.len(), matrix })
}
