//! Min-max scaling, correlation ranking and PCA over training tables.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{Counter, TrainTable};
use crate::error::{Error, Result};

/// Per-feature min-max scaler. Constant features map to 0; values outside the
/// fitted range extrapolate linearly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl Scaler {
    pub fn fit(table: &TrainTable) -> Result<Self> {
        Self::fit_rows(&table.x())
    }

    pub fn fit_rows(rows: &[&[f64]]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::Domain("cannot fit a scaler on an empty table".into()))?;
        let mut mins = first.to_vec();
        let mut maxs = first.to_vec();
        for row in &rows[1..] {
            if row.len() != mins.len() {
                return Err(Error::Width {
                    expected: mins.len(),
                    got: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                mins[j] = mins[j].min(v);
                maxs[j] = maxs[j].max(v);
            }
        }
        Ok(Self { mins, maxs })
    }

    pub fn width(&self) -> usize {
        self.mins.len()
    }

    pub fn apply(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.width() {
            return Err(Error::Width {
                expected: self.width(),
                got: row.len(),
            });
        }
        Ok(row
            .iter()
            .zip(self.mins.iter().zip(&self.maxs))
            .map(|(&v, (&lo, &hi))| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
            .collect())
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Pearson product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Domain(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Domain("correlation needs at least 2 samples".into()));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Domain(
            "correlation is undefined for a zero-variance input".into(),
        ));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaReport {
    /// Eigenvalues of the correlation matrix, descending.
    pub eigenvalues: Vec<f64>,
    pub explained_variance: Vec<f64>,
    /// `loadings[k]` is the unit eigenvector of component `k`.
    pub loadings: Vec<Vec<f64>>,
}

/// Columns centred and divided by their standard deviation; constant
/// columns become zero.
pub fn standardize(table: &TrainTable) -> Vec<Vec<f64>> {
    let n = table.len();
    let p = table.width();
    let mut z = vec![vec![0.0; p]; n];
    for j in 0..p {
        let col = table.column(j);
        let m = mean(&col);
        let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
        if sd > 0.0 {
            for (i, v) in col.iter().enumerate() {
                z[i][j] = (v - m) / sd;
            }
        }
    }
    z
}

/// Principal components of the standardized features, by cyclic Jacobi
/// rotation of the correlation matrix.
pub fn pca(table: &TrainTable) -> Result<PcaReport> {
    let n = table.len();
    let p = table.width();
    if n < 2 {
        return Err(Error::Domain("PCA needs at least 2 rows".into()));
    }
    if p < 2 {
        return Err(Error::Domain("PCA needs at least 2 features".into()));
    }
    let z = standardize(table);
    let mut corr = vec![vec![0.0; p]; p];
    for row in &z {
        for a in 0..p {
            for b in a..p {
                corr[a][b] += row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in a..p {
            corr[a][b] /= n as f64 - 1.0;
            corr[b][a] = corr[a][b];
        }
    }
    let (values, vectors) = jacobi_eigen(corr);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let eigenvalues: Vec<f64> = order
        .iter()
        .map(|&k| {
            if values[k] < 0.0 && values[k] > -1e-10 {
                0.0
            } else {
                values[k]
            }
        })
        .collect();
    if eigenvalues.iter().any(|&v| v < 0.0) {
        return Err(Error::Domain(
            "correlation matrix has a negative eigenvalue".into(),
        ));
    }
    let total: f64 = eigenvalues.iter().sum();
    if total <= 0.0 {
        return Err(Error::Domain("every feature is constant".into()));
    }
    Ok(PcaReport {
        explained_variance: eigenvalues.iter().map(|v| v / total).collect(),
        loadings: order
            .iter()
            .map(|&k| (0..p).map(|i| vectors[i][k]).collect())
            .collect(),
        eigenvalues,
    })
}

/// Eigen-decomposition of a symmetric matrix. Returns eigenvalues and a
/// matrix whose columns are the matching eigenvectors.
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let scale: f64 = a
        .iter()
        .flatten()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vkp, vkq) = (row[p], row[q]);
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Rank counters by |correlation| with the target.
    Auto,
    /// L1D access, L2 access, L2 miss, branch mispredictions.
    PaperFixed,
}

impl FromStr for SelectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(SelectionMode::Auto),
            "paper_fixed" | "fixed" => Ok(SelectionMode::PaperFixed),
            other => Err(Error::validation(
                "feature mode",
                format!("expected `auto` or `paper_fixed`, got `{other}`"),
            )),
        }
    }
}

pub const FIXED_COUNTERS: [Counter; 4] = [
    Counter::L1dAccess,
    Counter::L2Access,
    Counter::L2Miss,
    Counter::BrMispred,
];

/// Absolute correlation of each counter column with the target; `None`
/// where the correlation is undefined.
pub fn counter_correlations(table: &TrainTable) -> Vec<Option<f64>> {
    let y = table.targets();
    (0..table.hpc_indices.len())
        .map(|j| pearson(&table.column(j), &y).ok())
        .collect()
}

/// Returns counter indices (schema order), sorted ascending.
pub fn select_features(table: &TrainTable, k: usize, mode: SelectionMode) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::Domain("k must be at least 1".into()));
    }
    let n_counters = table.hpc_indices.len();
    if k > n_counters {
        return Err(Error::Domain(format!(
            "cannot select {k} of {n_counters} counter features"
        )));
    }
    match mode {
        SelectionMode::PaperFixed => {
            if k != FIXED_COUNTERS.len() {
                return Err(Error::Domain(format!(
                    "paper_fixed mode selects exactly {} counters, got k={k}",
                    FIXED_COUNTERS.len()
                )));
            }
            let mut out: Vec<usize> = FIXED_COUNTERS.iter().map(|c| c.index()).collect();
            out.sort_unstable();
            Ok(out)
        }
        SelectionMode::Auto => {
            let corr = counter_correlations(table);
            let mut order: Vec<usize> = (0..n_counters).collect();
            let strength = |j: usize| corr[j].map_or(0.0, f64::abs);
            order.sort_by(|&a, &b| strength(b).total_cmp(&strength(a)).then(a.cmp(&b)));
            let mut out: Vec<usize> = order[..k].iter().map(|&j| table.hpc_indices[j]).collect();
            out.sort_unstable();
            Ok(out)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterCorrelation {
    pub counter: String,
    pub pearson: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureReport {
    pub correlations: Vec<CounterCorrelation>,
    pub pca: Option<PcaReport>,
    pub pca_features: Vec<String>,
    pub mode: SelectionMode,
    pub selected: Vec<usize>,
    pub selected_names: Vec<String>,
}

/// Correlation ranking, PCA of the counter columns, and the selection.
pub fn feature_report(table: &TrainTable, k: usize, mode: SelectionMode) -> Result<FeatureReport> {
    let selected = select_features(table, k, mode)?;
    let counters = TrainTable {
        feature_names: table.feature_names[..table.hpc_indices.len()].to_vec(),
        hpc_indices: table.hpc_indices.clone(),
        config_encoded: false,
        rows: table
            .rows
            .iter()
            .map(|r| crate::dataset::TrainRow {
                features: r.features[..table.hpc_indices.len()].to_vec(),
                ..r.clone()
            })
            .collect(),
    };
    Ok(FeatureReport {
        correlations: table
            .hpc_indices
            .iter()
            .zip(counter_correlations(table))
            .map(|(&i, r)| CounterCorrelation {
                counter: Counter::ALL[i].name().to_string(),
                pearson: r,
            })
            .collect(),
        pca: pca(&counters).ok(),
        pca_features: counters.feature_names.clone(),
        mode,
        selected_names: selected
            .iter()
            .map(|&i| Counter::ALL[i].name().to_string())
            .collect(),
        selected,
    })
}
