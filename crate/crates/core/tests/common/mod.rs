//! Independent oracles shared by the integration tests and the acceptance run.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::HashMap;

use ccasched_core::dataset::RoiMeasurement;
use ccasched_core::{
    Architecture, Configuration, CoreType, Dataset, EdpEstimator, HpcVector, Result, RoiId,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rows(x: &[Vec<f64>]) -> Vec<&[f64]> {
    x.iter().map(Vec::as_slice).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_matrix(n: usize, width: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| (0..width).map(|_| r.random::<f64>()).collect())
        .collect()
}

/// Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

/// `[intercept, w_1, .., w_p]` from the normal equations.
pub fn ols_oracle(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = x[0].len() + 1;
    let design: Vec<Vec<f64>> = x
        .iter()
        .map(|r| std::iter::once(1.0).chain(r.iter().copied()).collect())
        .collect();
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for (r, t) in design.iter().zip(y) {
        for i in 0..p {
            xty[i] += r[i] * t;
            for j in 0..p {
                xtx[i][j] += r[i] * r[j];
            }
        }
    }
    gauss_solve(xtx, xty)
}

/// Scans every midpoint of a one-attribute sample and returns the threshold
/// with the greatest gain, where `cost(left, right)` is the impurity left
/// after the split.
fn scan_split(x: &[f64], y: &[f64], min_leaf: usize, cost: impl Fn(&[f64], &[f64]) -> f64) -> f64 {
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = (f64::INFINITY, f64::NAN);
    for pos in min_leaf..=pairs.len() - min_leaf {
        if pairs[pos - 1].0 == pairs[pos].0 {
            continue;
        }
        let l: Vec<f64> = pairs[..pos].iter().map(|p| p.1).collect();
        let r: Vec<f64> = pairs[pos..].iter().map(|p| p.1).collect();
        let c = cost(&l, &r);
        if c < best.0 {
            best = (c, (pairs[pos - 1].0 + pairs[pos].0) / 2.0);
        }
    }
    best.1
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sse(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum()
}

/// Threshold maximising the standard-deviation reduction.
pub fn sdr_split_oracle(x: &[f64], y: &[f64], min_leaf: usize) -> f64 {
    let n = y.len() as f64;
    scan_split(x, y, min_leaf, |l, r| {
        let sd = |v: &[f64]| (sse(v) / v.len() as f64).sqrt();
        l.len() as f64 / n * sd(l) + r.len() as f64 / n * sd(r)
    })
}

/// Threshold maximising the variance reduction.
pub fn variance_split_oracle(x: &[f64], y: &[f64], min_leaf: usize) -> f64 {
    scan_split(x, y, min_leaf, |l, r| sse(l) + sse(r))
}

/// Largest gap between neighbouring sorted values.
pub fn max_gap(x: &[f64]) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    s.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
}

/// Plain loop over one ROI's measurements: best base, best composed, then the
/// threshold rule. Ties go to the first measurement met.
pub fn brute_force_choice(samples: &[RoiMeasurement], arch: &Architecture) -> Configuration {
    let mut best: [Option<(f64, Configuration)>; 2] = [None, None];
    for m in samples {
        let slot = match m.cfg.core {
            CoreType::Base => 0,
            CoreType::Composed => 1,
        };
        if m.cfg.threads > arch.max_threads(m.cfg.core) {
            continue;
        }
        let e = m.time_s * m.time_s * m.power_w;
        if best[slot].is_none_or(|(b, _)| e < b) {
            best[slot] = Some((e, m.cfg));
        }
    }
    let (base, comp) = (best[0].unwrap(), best[1].unwrap());
    if (base.0 - comp.0) / base.0 >= arch.variation_threshold {
        comp.1
    } else {
        base.1
    }
}

/// Returns the measured EDP of whichever ROI was profiled with `hpcs`.
pub struct LookupEstimator<'a> {
    ds: &'a Dataset,
    by_profile: HashMap<[u64; 12], RoiId>,
}

impl<'a> LookupEstimator<'a> {
    pub fn new(ds: &'a Dataset, arch: &Architecture) -> Self {
        let by_profile = ds
            .roi_ids()
            .map(|roi| (bits(&ds.aggressive(roi, arch).unwrap().hpcs), roi.clone()))
            .collect();
        Self { ds, by_profile }
    }
}

fn bits(h: &HpcVector) -> [u64; 12] {
    h.0.map(f64::to_bits)
}

impl EdpEstimator for LookupEstimator<'_> {
    fn estimate(&self, hpcs: &HpcVector, cfg: &Configuration) -> Result<f64> {
        let roi = &self.by_profile[&bits(hpcs)];
        Ok(self.ds.find(roi, cfg.key()).unwrap().edp().get())
    }
}
