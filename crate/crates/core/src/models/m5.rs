//! M5 model tree: standard-deviation-reduction splits, a linear model at
//! every node, pruning by adjusted error, and smoothing along the path.
//!
//! Leaf models start from every attribute. An interior node's model starts
//! from the attributes tested or modelled anywhere below it. Each model then
//! drops attributes greedily while its adjusted error does not grow.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::linear::{fit_ols_on, LinearModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct M5Params {
    pub min_leaf: usize,
    pub sd_stop_fraction: f64,
    /// Smoothing constant; 0 disables smoothing.
    pub smoothing_k: f64,
    pub prune: bool,
    /// A node model's output is held within the node's training target range
    /// widened by this share of it on each side. `None` lets models
    /// extrapolate freely.
    pub bound_margin: Option<f64>,
}

impl Default for M5Params {
    fn default() -> Self {
        Self {
            min_leaf: 4,
            sd_stop_fraction: 0.05,
            smoothing_k: 15.0,
            prune: true,
            bound_margin: Some(0.1),
        }
    }
}

impl M5Params {
    pub fn validate(&self) -> Result<()> {
        let bad = |r: &str| Err(Error::validation("M5Tree hyperparameters", r.to_string()));
        if self.min_leaf == 0 {
            return bad("min_leaf must be at least 1");
        }
        if !(0.0..1.0).contains(&self.sd_stop_fraction) {
            return bad("sd_stop_fraction must lie in [0, 1)");
        }
        if !(self.smoothing_k >= 0.0 && self.smoothing_k.is_finite()) {
            return bad("smoothing_k must be finite and >= 0");
        }
        if self
            .bound_margin
            .is_some_and(|m| !(m >= 0.0 && m.is_finite()))
        {
            return bad("bound_margin must be finite and >= 0");
        }
        Ok(())
    }
}

/// Closed interval a node model's output is clamped to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub const UNBOUNDED: Bounds = Bounds {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum M5Node {
    Leaf {
        n: usize,
        model: LinearModel,
        bounds: Bounds,
    },
    Split {
        attr: usize,
        threshold: f64,
        n: usize,
        model: LinearModel,
        bounds: Bounds,
        left: Box<M5Node>,
        right: Box<M5Node>,
    },
}

impl M5Node {
    pub fn n(&self) -> usize {
        match self {
            M5Node::Leaf { n, .. } | M5Node::Split { n, .. } => *n,
        }
    }

    pub fn model(&self) -> &LinearModel {
        match self {
            M5Node::Leaf { model, .. } | M5Node::Split { model, .. } => model,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct M5Tree {
    pub root: M5Node,
    pub smoothing_k: f64,
}

impl M5Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        predict_node(&self.root, x, self.smoothing_k)
    }

    pub fn n_leaves(&self) -> usize {
        fn count(n: &M5Node) -> usize {
            match n {
                M5Node::Leaf { .. } => 1,
                M5Node::Split { left, right, .. } => count(left) + count(right),
            }
        }
        count(&self.root)
    }

    pub fn depth(&self) -> usize {
        fn depth(n: &M5Node) -> usize {
            match n {
                M5Node::Leaf { .. } => 0,
                M5Node::Split { left, right, .. } => 1 + depth(left).max(depth(right)),
            }
        }
        depth(&self.root)
    }

    /// `(attribute, threshold)` of the root test, if the root is split.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        match &self.root {
            M5Node::Split {
                attr, threshold, ..
            } => Some((*attr, *threshold)),
            M5Node::Leaf { .. } => None,
        }
    }
}

fn predict_node(node: &M5Node, x: &[f64], k: f64) -> f64 {
    match node {
        M5Node::Leaf { model, bounds, .. } => bounds.clamp(model.predict(x)),
        M5Node::Split {
            attr,
            threshold,
            model,
            bounds,
            left,
            right,
            ..
        } => {
            let child = if x[*attr] <= *threshold { left } else { right };
            let below = predict_node(child, x, k);
            if k > 0.0 {
                let n = child.n() as f64;
                (n * below + k * bounds.clamp(model.predict(x))) / (n + k)
            } else {
                below
            }
        }
    }
}

enum Grown {
    Leaf(Vec<usize>),
    Split {
        attr: usize,
        threshold: f64,
        idx: Vec<usize>,
        left: Box<Grown>,
        right: Box<Grown>,
    },
}

struct Builder<'a> {
    x: &'a [&'a [f64]],
    y: &'a [f64],
    width: usize,
    params: &'a M5Params,
    sd_root: f64,
    tol: f64,
}

/// Population standard deviation.
fn sd_of(y: &[f64], idx: &[usize]) -> f64 {
    let n = idx.len() as f64;
    let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / n;
    (idx.iter().map(|&i| (y[i] - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Best `(attr, split position, threshold, sdr)` over sorted orders; the
/// left side takes the first `position` rows.
pub(crate) fn best_sdr_split(
    x: &[&[f64]],
    y: &[f64],
    idx: &[usize],
    width: usize,
    min_leaf: usize,
) -> Option<(usize, f64, f64)> {
    let n = idx.len();
    let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / n as f64;
    let total_sq: f64 = idx.iter().map(|&i| (y[i] - mean).powi(2)).sum();
    let sd_all = (total_sq / n as f64).sqrt();
    let mut best: Option<(usize, f64, f64)> = None;
    let mut order = idx.to_vec();
    for attr in 0..width {
        order.sort_by(|&a, &b| x[a][attr].total_cmp(&x[b][attr]).then(a.cmp(&b)));
        let (mut s, mut q) = (0.0, 0.0);
        for pos in 1..n {
            let d = y[order[pos - 1]] - mean;
            s += d;
            q += d * d;
            if pos < min_leaf || n - pos < min_leaf {
                continue;
            }
            let (lo, hi) = (x[order[pos - 1]][attr], x[order[pos]][attr]);
            if lo >= hi {
                continue;
            }
            let (nl, nr) = (pos as f64, (n - pos) as f64);
            let var_l = (q / nl - (s / nl).powi(2)).max(0.0);
            let (sr, qr) = (-s, total_sq - q);
            let var_r = (qr / nr - (sr / nr).powi(2)).max(0.0);
            let sdr = sd_all - (nl / n as f64) * var_l.sqrt() - (nr / n as f64) * var_r.sqrt();
            if best.is_none_or(|(_, _, b)| sdr > b) {
                best = Some((attr, (lo + hi) / 2.0, sdr));
            }
        }
    }
    best
}

impl Builder<'_> {
    fn grow(&self, idx: Vec<usize>) -> Grown {
        let n = idx.len();
        let min_leaf = self.params.min_leaf;
        if n < 2 * min_leaf || sd_of(self.y, &idx) < self.params.sd_stop_fraction * self.sd_root {
            return Grown::Leaf(idx);
        }
        match best_sdr_split(self.x, self.y, &idx, self.width, min_leaf) {
            Some((attr, threshold, sdr)) if sdr > 0.0 => {
                let (l, r): (Vec<usize>, Vec<usize>) =
                    idx.iter().partition(|&&i| self.x[i][attr] <= threshold);
                Grown::Split {
                    attr,
                    threshold,
                    idx,
                    left: Box::new(self.grow(l)),
                    right: Box::new(self.grow(r)),
                }
            }
            _ => Grown::Leaf(idx),
        }
    }

    fn adjusted_error(&self, model: &LinearModel, idx: &[usize], n_attrs: usize) -> f64 {
        let n = idx.len() as f64;
        let mae = idx
            .iter()
            .map(|&i| (model.predict(self.x[i]) - self.y[i]).abs())
            .sum::<f64>()
            / n;
        let v = (n_attrs + 1) as f64;
        if n > v {
            mae * (n + v) / (n - v)
        } else {
            mae * 10.0
        }
    }

    fn bounds(&self, idx: &[usize]) -> Bounds {
        let Some(margin) = self.params.bound_margin else {
            return Bounds::UNBOUNDED;
        };
        let (lo, hi) = idx
            .iter()
            .map(|&i| self.y[i])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| {
                (lo.min(y), hi.max(y))
            });
        let pad = margin * (hi - lo);
        Bounds {
            lo: lo - pad,
            hi: hi + pad,
        }
    }

    fn fit_model(&self, idx: &[usize], attrs: &BTreeSet<usize>) -> (LinearModel, f64) {
        let xs: Vec<&[f64]> = idx.iter().map(|&i| self.x[i]).collect();
        let ys: Vec<f64> = idx.iter().map(|&i| self.y[i]).collect();
        let mut current: Vec<usize> = attrs.iter().copied().collect();
        let mut model = fit_ols_on(&xs, &ys, self.width, &current);
        let mut err = self.adjusted_error(&model, idx, current.len());
        while !current.is_empty() {
            let mut best: Option<(usize, LinearModel, f64)> = None;
            for drop in 0..current.len() {
                let trial: Vec<usize> = current
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != drop)
                    .map(|(_, a)| *a)
                    .collect();
                let m = fit_ols_on(&xs, &ys, self.width, &trial);
                let e = self.adjusted_error(&m, idx, trial.len());
                if best.as_ref().is_none_or(|(_, _, b)| e < *b) {
                    best = Some((drop, m, e));
                }
            }
            let (drop, m, e) = best.expect("at least one candidate");
            if e <= err + self.tol {
                current.remove(drop);
                model = m;
                err = e;
            } else {
                break;
            }
        }
        (model, err)
    }

    /// Fits node models bottom-up and prunes. Returns the node, its error
    /// estimate, and the attributes referenced in its subtree.
    fn finish(&self, grown: Grown) -> (M5Node, f64, BTreeSet<usize>) {
        match grown {
            Grown::Leaf(idx) => {
                let all: BTreeSet<usize> = (0..self.width).collect();
                let (model, err) = self.fit_model(&idx, &all);
                let used = model.used_attributes().into_iter().collect();
                let node = M5Node::Leaf {
                    n: idx.len(),
                    model,
                    bounds: self.bounds(&idx),
                };
                (node, err, used)
            }
            Grown::Split {
                attr,
                threshold,
                idx,
                left,
                right,
            } => {
                let (left, el, al) = self.finish(*left);
                let (right, er, ar) = self.finish(*right);
                let mut attrs: BTreeSet<usize> = al.union(&ar).copied().collect();
                attrs.insert(attr);
                let (model, node_err) = self.fit_model(&idx, &attrs);
                let n = idx.len();
                let bounds = self.bounds(&idx);
                let subtree_err = (left.n() as f64 * el + right.n() as f64 * er) / n as f64;
                if self.params.prune && node_err <= subtree_err + self.tol {
                    let used = model.used_attributes().into_iter().collect();
                    (M5Node::Leaf { n, model, bounds }, node_err, used)
                } else {
                    let node = M5Node::Split {
                        attr,
                        threshold,
                        n,
                        model,
                        bounds,
                        left: Box::new(left),
                        right: Box::new(right),
                    };
                    (node, subtree_err, attrs)
                }
            }
        }
    }
}

pub fn fit_m5(x: &[&[f64]], y: &[f64], params: &M5Params) -> Result<M5Tree> {
    params.validate()?;
    if x.len() != y.len() {
        return Err(Error::Domain(format!(
            "{} rows but {} targets",
            x.len(),
            y.len()
        )));
    }
    if x.len() < params.min_leaf || x.is_empty() {
        return Err(Error::Domain(format!(
            "M5Tree needs at least min_leaf = {} rows, got {}",
            params.min_leaf,
            x.len()
        )));
    }
    let idx: Vec<usize> = (0..x.len()).collect();
    let sd_root = sd_of(y, &idx);
    let builder = Builder {
        x,
        y,
        width: x[0].len(),
        params,
        sd_root,
        tol: 1e-9 * sd_root,
    };
    let grown = builder.grow(idx);
    let (root, _, _) = builder.finish(grown);
    Ok(M5Tree {
        root,
        smoothing_k: params.smoothing_k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(x: &[Vec<f64>]) -> Vec<&[f64]> {
        x.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn constant_target_is_one_leaf() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, (i % 7) as f64]).collect();
        let y = vec![3.5; 30];
        let t = fit_m5(&rows(&x), &y, &M5Params::default()).unwrap();
        assert_eq!(t.n_leaves(), 1);
        assert!((t.predict(&[4.0, 2.0]) - 3.5).abs() < 1e-12);
    }

    #[test]
    fn too_few_rows() {
        let x = vec![vec![1.0]; 3];
        assert!(fit_m5(&rows(&x), &[1.0, 2.0, 3.0], &M5Params::default()).is_err());
    }

    #[test]
    fn unpruned_tree_keeps_splits() {
        let x: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64 / 100.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| 2.0 * r[0]).collect();
        let p = M5Params {
            prune: false,
            ..Default::default()
        };
        assert!(fit_m5(&rows(&x), &y, &p).unwrap().n_leaves() > 1);
        assert_eq!(
            fit_m5(&rows(&x), &y, &M5Params::default())
                .unwrap()
                .n_leaves(),
            1
        );
    }

    #[test]
    fn bounds_limit_extrapolation() {
        let x: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 / 49.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| 2.0 * r[0] + 1.0).collect();
        let bounded = fit_m5(&rows(&x), &y, &M5Params::default()).unwrap();
        assert!((bounded.predict(&[0.5]) - 2.0).abs() < 1e-9);
        // range [1, 3] widened by 10% on each side
        assert!((bounded.predict(&[10.0]) - 3.2).abs() < 1e-9);
        assert!((bounded.predict(&[-10.0]) - 0.8).abs() < 1e-9);
        let free = M5Params {
            bound_margin: None,
            ..Default::default()
        };
        let free = fit_m5(&rows(&x), &y, &free).unwrap();
        assert!((free.predict(&[10.0]) - 21.0).abs() < 1e-9);
    }
}
