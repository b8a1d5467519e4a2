//! Input → sigmoid hidden layer → linear output, trained by full-batch
//! gradient descent with momentum on half mean squared error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpParams {
    pub hidden: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden: 4,
            learning_rate: 0.3,
            momentum: 0.2,
            epochs: 500,
            seed: 1,
        }
    }
}

impl MlpParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |r: &str| {
            Err(Error::validation(
                "MultiLayerPercep hyperparameters",
                r.to_string(),
            ))
        };
        if self.hidden == 0 {
            return bad("hidden must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        Ok(())
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    /// `hidden_weights[h][i]` connects input `i` to hidden unit `h`.
    pub hidden_weights: Vec<Vec<f64>>,
    pub hidden_bias: Vec<f64>,
    pub output_weights: Vec<f64>,
    pub output_bias: f64,
}

impl Mlp {
    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        Self {
            hidden_weights: vec![vec![0.0; inputs]; hidden],
            hidden_bias: vec![0.0; hidden],
            output_weights: vec![0.0; hidden],
            output_bias: 0.0,
        }
    }

    /// Weights uniform in [-0.5, 0.5].
    pub fn random(inputs: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || rng.random_range(-0.5..=0.5);
        let mut net = Self::zeros(inputs, hidden);
        for h in 0..hidden {
            for i in 0..inputs {
                net.hidden_weights[h][i] = draw();
            }
            net.hidden_bias[h] = draw();
        }
        for h in 0..hidden {
            net.output_weights[h] = draw();
        }
        net.output_bias = draw();
        net
    }

    pub fn inputs(&self) -> usize {
        self.hidden_weights.first().map_or(0, Vec::len)
    }

    pub fn hidden(&self) -> usize {
        self.hidden_bias.len()
    }

    fn activations(&self, x: &[f64]) -> Vec<f64> {
        self.hidden_weights
            .iter()
            .zip(&self.hidden_bias)
            .map(|(w, b)| sigmoid(b + w.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()))
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        let a = self.activations(x);
        self.output_bias
            + self
                .output_weights
                .iter()
                .zip(&a)
                .map(|(w, v)| w * v)
                .sum::<f64>()
    }

    /// Parameters flattened as hidden weights (row-major), hidden biases,
    /// output weights, output bias.
    pub fn params(&self) -> Vec<f64> {
        let mut p: Vec<f64> = self.hidden_weights.iter().flatten().copied().collect();
        p.extend(&self.hidden_bias);
        p.extend(&self.output_weights);
        p.push(self.output_bias);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let (n_in, n_h) = (self.inputs(), self.hidden());
        let mut it = p.iter().copied();
        for row in &mut self.hidden_weights {
            for w in row.iter_mut() {
                *w = it.next().expect("parameter count");
            }
        }
        for b in &mut self.hidden_bias {
            *b = it.next().expect("parameter count");
        }
        for w in &mut self.output_weights {
            *w = it.next().expect("parameter count");
        }
        self.output_bias = it.next().expect("parameter count");
        debug_assert_eq!(p.len(), n_h * n_in + 2 * n_h + 1);
    }

    /// Loss `1/(2N) Σ (out − y)²` and its gradient in [`Mlp::params`] order.
    pub fn loss_and_gradient(&self, x: &[&[f64]], y: &[f64]) -> (f64, Vec<f64>) {
        let (n_in, n_h) = (self.inputs(), self.hidden());
        let n = x.len() as f64;
        let mut grad = vec![0.0; n_h * n_in + 2 * n_h + 1];
        let mut loss = 0.0;
        let (gw1, rest) = grad.split_at_mut(n_h * n_in);
        let (gb1, rest) = rest.split_at_mut(n_h);
        let (gw2, gb2) = rest.split_at_mut(n_h);
        for (row, &target) in x.iter().zip(y) {
            let a = self.activations(row);
            let out = self.output_bias
                + self
                    .output_weights
                    .iter()
                    .zip(&a)
                    .map(|(w, v)| w * v)
                    .sum::<f64>();
            let err = out - target;
            loss += err * err;
            let delta = err / n;
            gb2[0] += delta;
            for h in 0..n_h {
                gw2[h] += delta * a[h];
                let dz = delta * self.output_weights[h] * a[h] * (1.0 - a[h]);
                gb1[h] += dz;
                for (i, v) in row.iter().enumerate() {
                    gw1[h * n_in + i] += dz * v;
                }
            }
        }
        (loss / (2.0 * n), grad)
    }
}

/// Trains on inputs already scaled to roughly [0, 1] and targets in [0, 1].
///
/// Returns the network and the loss history (epoch 0 is the untrained loss).
pub fn fit_mlp(x: &[&[f64]], y: &[f64], params: &MlpParams) -> Result<(Mlp, Vec<f64>)> {
    params.validate()?;
    if x.is_empty() {
        return Err(Error::Domain("cannot train on an empty table".into()));
    }
    let inputs = x[0].len();
    let mut net = Mlp::random(inputs, params.hidden, params.seed);
    let mut theta = net.params();
    let mut velocity = vec![0.0; theta.len()];
    let mut history = Vec::with_capacity(params.epochs + 1);
    for _ in 0..params.epochs {
        let (loss, grad) = net.loss_and_gradient(x, y);
        if !loss.is_finite() {
            return Err(Error::Divergence(format!(
                "loss became {loss}; try a lower learning rate than {}",
                params.learning_rate
            )));
        }
        history.push(loss);
        for ((t, v), g) in theta.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
            *v = params.momentum * *v - params.learning_rate * g;
            *t += *v;
        }
        net.set_params(&theta);
    }
    let (final_loss, _) = net.loss_and_gradient(x, y);
    if !final_loss.is_finite() || final_loss > history[0] {
        return Err(Error::Divergence(format!(
            "final loss {final_loss} exceeds initial loss {}; try a lower learning rate than {}",
            history[0], params.learning_rate
        )));
    }
    history.push(final_loss);
    Ok((net, history))
}
