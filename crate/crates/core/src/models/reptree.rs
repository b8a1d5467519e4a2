//! Regression tree grown by variance reduction and pruned against a holdout
//! (reduced-error pruning).
//!
//! Each attribute is sorted once at the root. Children inherit their sorted
//! orders by stable partition, so no node sorts again.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RepParams {
    pub min_leaf: usize,
    /// One fold of this many is held out for pruning.
    pub n_prune_folds: usize,
    /// `None` for unlimited depth.
    pub max_depth: Option<usize>,
    /// Nodes whose variance is below this share of the root's stay leaves.
    pub min_variance_prop: f64,
    pub prune: bool,
    pub seed: u64,
}

impl Default for RepParams {
    fn default() -> Self {
        Self {
            min_leaf: 2,
            n_prune_folds: 3,
            max_depth: None,
            min_variance_prop: 1e-3,
            prune: true,
            seed: 1,
        }
    }
}

impl RepParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |r: &str| Err(Error::validation("REPTree hyperparameters", r.to_string()));
        if self.min_leaf == 0 {
            return bad("min_leaf must be at least 1");
        }
        if self.prune && self.n_prune_folds < 2 {
            return bad("n_prune_folds must be at least 2");
        }
        if !(0.0..1.0).contains(&self.min_variance_prop) {
            return bad("min_variance_prop must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RepNode {
    Leaf {
        n: usize,
        value: f64,
    },
    Split {
        attr: usize,
        threshold: f64,
        n: usize,
        value: f64,
        left: Box<RepNode>,
        right: Box<RepNode>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepTree {
    pub root: RepNode,
}

impl RepTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                RepNode::Leaf { value, .. } => return *value,
                RepNode::Split {
                    attr,
                    threshold,
                    left,
                    right,
                    ..
                } => node = if x[*attr] <= *threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn depth(n: &RepNode) -> usize {
            match n {
                RepNode::Leaf { .. } => 0,
                RepNode::Split { left, right, .. } => 1 + depth(left).max(depth(right)),
            }
        }
        depth(&self.root)
    }

    pub fn n_leaves(&self) -> usize {
        fn count(n: &RepNode) -> usize {
            match n {
                RepNode::Leaf { .. } => 1,
                RepNode::Split { left, right, .. } => count(left) + count(right),
            }
        }
        count(&self.root)
    }

    pub fn root_split(&self) -> Option<(usize, f64)> {
        match &self.root {
            RepNode::Split {
                attr, threshold, ..
            } => Some((*attr, *threshold)),
            RepNode::Leaf { .. } => None,
        }
    }
}

struct Grower<'a> {
    x: &'a [&'a [f64]],
    y: &'a [f64],
    params: &'a RepParams,
    var_floor: f64,
    goes_left: Vec<bool>,
}

impl Grower<'_> {
    /// `sorted[j]` lists this node's rows ordered by attribute `j`.
    fn grow(&mut self, sorted: Vec<Vec<usize>>, depth: usize) -> RepNode {
        let rows = &sorted[0];
        let n = rows.len();
        let mean = rows.iter().map(|&i| self.y[i]).sum::<f64>() / n as f64;
        let sse: f64 = rows.iter().map(|&i| (self.y[i] - mean).powi(2)).sum();
        let leaf = RepNode::Leaf { n, value: mean };
        if n < 2 * self.params.min_leaf
            || sse / n as f64 <= self.var_floor
            || self.params.max_depth.is_some_and(|d| depth >= d)
        {
            return leaf;
        }

        let min_leaf = self.params.min_leaf;
        let mut best: Option<(usize, usize, f64, f64)> = None;
        for (attr, order) in sorted.iter().enumerate() {
            let (mut s, mut q) = (0.0, 0.0);
            for pos in 1..n {
                let d = self.y[order[pos - 1]] - mean;
                s += d;
                q += d * d;
                if pos < min_leaf || n - pos < min_leaf {
                    continue;
                }
                let (lo, hi) = (self.x[order[pos - 1]][attr], self.x[order[pos]][attr]);
                if lo >= hi {
                    continue;
                }
                let (nl, nr) = (pos as f64, (n - pos) as f64);
                let sse_l = q - s * s / nl;
                let sse_r = (sse - q) - s * s / nr;
                let gain = sse - sse_l - sse_r;
                if best.is_none_or(|(_, _, _, g)| gain > g) {
                    best = Some((attr, pos, (lo + hi) / 2.0, gain));
                }
            }
        }
        let Some((attr, pos, threshold, gain)) = best else {
            return leaf;
        };
        if gain <= 1e-12 * sse {
            return leaf;
        }

        for &i in &sorted[attr][..pos] {
            self.goes_left[i] = true;
        }
        let (mut left, mut right) = (
            Vec::with_capacity(sorted.len()),
            Vec::with_capacity(sorted.len()),
        );
        for order in &sorted {
            let (l, r): (Vec<usize>, Vec<usize>) = order.iter().partition(|&&i| self.goes_left[i]);
            left.push(l);
            right.push(r);
        }
        for &i in &sorted[attr][..pos] {
            self.goes_left[i] = false;
        }
        drop(sorted);
        RepNode::Split {
            attr,
            threshold,
            n,
            value: mean,
            left: Box::new(self.grow(left, depth + 1)),
            right: Box::new(self.grow(right, depth + 1)),
        }
    }
}

/// Replaces a subtree by a leaf when that does not raise holdout squared error.
fn prune(node: RepNode, holdout: &[usize], x: &[&[f64]], y: &[f64]) -> (RepNode, f64) {
    let sse_at = |value: f64| holdout.iter().map(|&i| (y[i] - value).powi(2)).sum::<f64>();
    match node {
        RepNode::Leaf { value, .. } => {
            let e = sse_at(value);
            (node, e)
        }
        RepNode::Split {
            attr,
            threshold,
            n,
            value,
            left,
            right,
        } => {
            let (hl, hr): (Vec<usize>, Vec<usize>) =
                holdout.iter().partition(|&&i| x[i][attr] <= threshold);
            let (left, el) = prune(*left, &hl, x, y);
            let (right, er) = prune(*right, &hr, x, y);
            let as_leaf = sse_at(value);
            if as_leaf <= el + er {
                (RepNode::Leaf { n, value }, as_leaf)
            } else {
                let node = RepNode::Split {
                    attr,
                    threshold,
                    n,
                    value,
                    left: Box::new(left),
                    right: Box::new(right),
                };
                (node, el + er)
            }
        }
    }
}

pub fn fit_reptree(x: &[&[f64]], y: &[f64], params: &RepParams) -> Result<RepTree> {
    params.validate()?;
    if x.len() != y.len() {
        return Err(Error::Domain(format!(
            "{} rows but {} targets",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 * params.min_leaf {
        return Err(Error::Domain(format!(
            "REPTree needs at least 2 × min_leaf = {} rows, got {}",
            2 * params.min_leaf,
            x.len()
        )));
    }
    let width = x[0].len();
    let mut all: Vec<usize> = (0..x.len()).collect();
    let (grow_rows, holdout) = if params.prune {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        all.shuffle(&mut rng);
        let n_hold = x.len() / params.n_prune_folds;
        let holdout = all[..n_hold].to_vec();
        let mut grow_rows = all[n_hold..].to_vec();
        grow_rows.sort_unstable();
        (grow_rows, holdout)
    } else {
        (all, Vec::new())
    };

    let mut sorted: Vec<Vec<usize>> = Vec::with_capacity(width.max(1));
    for attr in 0..width {
        let mut order = grow_rows.clone();
        order.sort_by(|&a, &b| x[a][attr].total_cmp(&x[b][attr]).then(a.cmp(&b)));
        sorted.push(order);
    }
    if sorted.is_empty() {
        sorted.push(grow_rows.clone());
    }
    let n = grow_rows.len() as f64;
    let mean = grow_rows.iter().map(|&i| y[i]).sum::<f64>() / n;
    let root_var = grow_rows
        .iter()
        .map(|&i| (y[i] - mean).powi(2))
        .sum::<f64>()
        / n;
    let mut grower = Grower {
        x,
        y,
        params,
        var_floor: params.min_variance_prop * root_var,
        goes_left: vec![false; x.len()],
    };
    let mut root = grower.grow(sorted, 0);
    if params.prune {
        root = prune(root, &holdout, x, y).0;
    }
    Ok(RepTree { root })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(x: &[Vec<f64>]) -> Vec<&[f64]> {
        x.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn constant_target_is_one_leaf() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64]).collect();
        let t = fit_reptree(&rows(&x), &[2.0; 40], &RepParams::default()).unwrap();
        assert_eq!(t.n_leaves(), 1);
        assert_eq!(t.predict(&[3.0]), 2.0);
    }

    #[test]
    fn precondition() {
        let x = vec![vec![1.0]; 3];
        assert!(fit_reptree(&rows(&x), &[1.0; 3], &RepParams::default()).is_err());
        let p = RepParams {
            n_prune_folds: 1,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn max_depth_is_respected() {
        let x: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..64).map(|i| i as f64).collect();
        let p = RepParams {
            max_depth: Some(2),
            prune: false,
            ..Default::default()
        };
        let t = fit_reptree(&rows(&x), &y, &p).unwrap();
        assert_eq!(t.depth(), 2);
        assert_eq!(t.n_leaves(), 4);
    }
}
