//! Ordinary least squares and least-median-of-squares regression.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `intercept + Σ weights[j] · x[j]`. Unused attributes carry weight 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub weights: Vec<f64>,
}

impl LinearModel {
    pub fn constant(value: f64, width: usize) -> Self {
        Self {
            intercept: value,
            weights: vec![0.0; width],
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    /// Attributes with a non-zero weight.
    pub fn used_attributes(&self) -> Vec<usize> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(j, _)| j)
            .collect()
    }
}

/// Cholesky solve of `a · x = b` for symmetric positive definite `a`.
/// Returns `None` when a pivot falls below `1e-12 × max diagonal`.
fn cholesky_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let max_diag = (0..n).map(|i| a[i][i]).fold(0.0_f64, f64::max);
    let tol = 1e-12 * max_diag.max(f64::MIN_POSITIVE);
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= tol {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut z = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i][k] * z[k]).sum();
        z[i] = (b[i] - s) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k][i] * x[k]).sum();
        x[i] = (z[i] - s) / l[i][i];
    }
    Some(x)
}

/// Centred normal equations restricted to `attrs`.
fn normal_equations(
    x: &[&[f64]],
    y: &[f64],
    attrs: &[usize],
) -> (Vec<f64>, f64, Vec<Vec<f64>>, Vec<f64>) {
    let n = x.len() as f64;
    let means: Vec<f64> = attrs
        .iter()
        .map(|&j| x.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    let y_mean = y.iter().sum::<f64>() / n;
    let k = attrs.len();
    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    let mut centred = vec![0.0; k];
    for (row, &target) in x.iter().zip(y) {
        for (a, &j) in attrs.iter().enumerate() {
            centred[a] = row[j] - means[a];
        }
        let dy = target - y_mean;
        for a in 0..k {
            xty[a] += centred[a] * dy;
            for b in a..k {
                xtx[a][b] += centred[a] * centred[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            xtx[a][b] = xtx[b][a];
        }
    }
    (means, y_mean, xtx, xty)
}

fn assemble(
    width: usize,
    attrs: &[usize],
    means: &[f64],
    y_mean: f64,
    beta: &[f64],
) -> LinearModel {
    let mut weights = vec![0.0; width];
    let mut intercept = y_mean;
    for ((&j, &b), &m) in attrs.iter().zip(beta).zip(means) {
        weights[j] = b;
        intercept -= b * m;
    }
    LinearModel { intercept, weights }
}

/// Least squares with intercept on the listed attributes. A singular system
/// is retried with ridge jitter `1e-8 × max diagonal`.
pub fn fit_ols_on(x: &[&[f64]], y: &[f64], width: usize, attrs: &[usize]) -> LinearModel {
    if x.is_empty() {
        return LinearModel::constant(0.0, width);
    }
    let (means, y_mean, mut xtx, xty) = normal_equations(x, y, attrs);
    if attrs.is_empty() {
        return LinearModel::constant(y_mean, width);
    }
    let max_diag = (0..attrs.len()).map(|i| xtx[i][i]).fold(0.0_f64, f64::max);
    if max_diag == 0.0 {
        return LinearModel::constant(y_mean, width);
    }
    let beta = match cholesky_solve(&xtx, &xty) {
        Some(beta) => beta,
        None => {
            let lambda = 1e-8 * max_diag;
            for (i, row) in xtx.iter_mut().enumerate() {
                row[i] += lambda;
            }
            cholesky_solve(&xtx, &xty).unwrap_or_else(|| vec![0.0; attrs.len()])
        }
    };
    assemble(width, attrs, &means, y_mean, &beta)
}

/// Exact solve without jitter; `None` if the subset is degenerate.
fn fit_strict(x: &[&[f64]], y: &[f64], width: usize) -> Option<LinearModel> {
    let attrs: Vec<usize> = (0..width).collect();
    let (means, y_mean, xtx, xty) = normal_equations(x, y, &attrs);
    let beta = if width == 0 {
        Vec::new()
    } else {
        cholesky_solve(&xtx, &xty)?
    };
    Some(assemble(width, &attrs, &means, y_mean, &beta))
}

fn check_shape(x: &[&[f64]], y: &[f64]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::Domain(format!(
            "{} rows but {} targets",
            x.len(),
            y.len()
        )));
    }
    let width = x.first().map_or(0, |r| r.len());
    if let Some(bad) = x.iter().find(|r| r.len() != width) {
        return Err(Error::Width {
            expected: width,
            got: bad.len(),
        });
    }
    Ok(width)
}

/// Ordinary least squares with intercept over every column.
pub fn fit_ols(x: &[&[f64]], y: &[f64]) -> Result<LinearModel> {
    let width = check_shape(x, y)?;
    if x.len() <= width {
        return Err(Error::SingularFit(format!(
            "{} rows cannot determine {} coefficients",
            x.len(),
            width + 1
        )));
    }
    if x.iter().all(|r| *r == x[0]) {
        return Err(Error::SingularFit(
            "every row has identical features".into(),
        ));
    }
    Ok(fit_ols_on(x, y, width, &(0..width).collect::<Vec<_>>()))
}

pub fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    let mid = n / 2;
    let (_, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = values[..mid]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        (lower + upper) / 2.0
    }
}

pub fn median_squared_residual(model: &LinearModel, x: &[&[f64]], y: &[f64]) -> f64 {
    let mut sq: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(r, t)| {
            let e = model.predict(r) - t;
            e * e
        })
        .collect();
    median(&mut sq)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmsParams {
    pub n_subsets: usize,
    /// Defaults to features + 1 (an elemental subset).
    pub subset_size: Option<usize>,
    pub seed: u64,
}

impl Default for LmsParams {
    fn default() -> Self {
        Self {
            n_subsets: 500,
            subset_size: None,
            seed: 1,
        }
    }
}

/// `C(n, k)` if it does not exceed `cap`.
fn binomial_capped(n: usize, k: usize, cap: usize) -> Option<usize> {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
        if c > cap as u128 {
            return None;
        }
    }
    Some(c as usize)
}

/// Advances `idx` to the next k-combination of `0..n` in lexicographic order.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Least median of squares.
///
/// Candidates are the full-data OLS fit plus an OLS fit on each subset; the
/// candidate with the smallest median squared residual over all rows wins
/// (earliest on ties). When every subset can be listed within `n_subsets`
/// the search is exhaustive, otherwise subsets are drawn under `seed`.
pub fn fit_lms(x: &[&[f64]], y: &[f64], params: &LmsParams) -> Result<LinearModel> {
    let width = check_shape(x, y)?;
    let n = x.len();
    let h = params.subset_size.unwrap_or(width + 1);
    if h < width + 1 {
        return Err(Error::validation(
            "LeastSqMed hyperparameters",
            format!("subset_size must be at least features + 1 = {}", width + 1),
        ));
    }
    if n < h {
        return Err(Error::SingularFit(format!(
            "{n} rows are fewer than the subset size {h}"
        )));
    }
    if params.n_subsets == 0 {
        return Err(Error::validation(
            "LeastSqMed hyperparameters",
            "n_subsets must be at least 1",
        ));
    }

    let mut best: Option<(f64, LinearModel)> = None;
    let mut consider = |model: LinearModel| {
        let score = median_squared_residual(&model, x, y);
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((score, model));
        }
    };
    if n > width && !x.iter().all(|r| *r == x[0]) {
        consider(fit_ols_on(x, y, width, &(0..width).collect::<Vec<_>>()));
    }

    let mut fit_subset = |idx: &[usize]| {
        let xs: Vec<&[f64]> = idx.iter().map(|&i| x[i]).collect();
        let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        if let Some(m) = fit_strict(&xs, &ys, width) {
            consider(m);
        }
    };
    if binomial_capped(n, h, params.n_subsets).is_some() {
        let mut idx: Vec<usize> = (0..h).collect();
        loop {
            fit_subset(&idx);
            if !next_combination(&mut idx, n) {
                break;
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        for _ in 0..params.n_subsets {
            let mut idx = rand::seq::index::sample(&mut rng, n, h).into_vec();
            idx.sort_unstable();
            fit_subset(&idx);
        }
    }
    best.map(|(_, m)| m)
        .ok_or_else(|| Error::SingularFit("every candidate subset was degenerate".into()))
}
