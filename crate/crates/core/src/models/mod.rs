//! The five EDP regressors behind one train/predict contract.
//!
//! Every predictor min-max scales its inputs with a [`Scaler`] fitted on the
//! training table. The perceptron additionally maps targets to [0, 1]
//! internally; the other models train on raw EDP.

pub mod linear;
pub mod m5;
pub mod mlp;
pub mod reptree;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use linear::{fit_lms, fit_ols, LinearModel, LmsParams};
pub use m5::{fit_m5, M5Node, M5Params, M5Tree};
pub use mlp::{fit_mlp, Mlp, MlpParams};
pub use reptree::{fit_reptree, RepNode, RepParams, RepTree};

use crate::config_space::Configuration;
use crate::dataset::{EdpValue, HpcVector, TrainTable};
use crate::error::{Error, Result};
use crate::features::Scaler;
use crate::scheduler::EdpEstimator;

/// Serialization format version of [`Predictor`].
pub const MODEL_VERSION: u32 = 1;

#[allow(clippy::upper_case_acronyms)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    LinearReg,
    LeastSqMed,
    MultiLayerPercep,
    M5Tree,
    REPTree,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::LinearReg,
        Algorithm::LeastSqMed,
        Algorithm::MultiLayerPercep,
        Algorithm::M5Tree,
        Algorithm::REPTree,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::LinearReg => "LinearReg",
            Algorithm::LeastSqMed => "LeastSqMed",
            Algorithm::MultiLayerPercep => "MultiLayerPercep",
            Algorithm::M5Tree => "M5Tree",
            Algorithm::REPTree => "REPTree",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::validation(
                    "algorithm",
                    format!(
                        "unknown algorithm `{s}`; expected one of {}",
                        Algorithm::ALL.map(|a| a.name()).join(", ")
                    ),
                )
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", content = "params")]
pub enum Hyperparams {
    LinearReg,
    LeastSqMed(LmsParams),
    MultiLayerPercep(MlpParams),
    M5Tree(M5Params),
    #[allow(clippy::upper_case_acronyms)]
    REPTree(RepParams),
}

impl Hyperparams {
    pub fn default_for(algorithm: Algorithm) -> Self {
        match algorithm {
            Algorithm::LinearReg => Hyperparams::LinearReg,
            Algorithm::LeastSqMed => Hyperparams::LeastSqMed(LmsParams::default()),
            Algorithm::MultiLayerPercep => Hyperparams::MultiLayerPercep(MlpParams::default()),
            Algorithm::M5Tree => Hyperparams::M5Tree(M5Params::default()),
            Algorithm::REPTree => Hyperparams::REPTree(RepParams::default()),
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        match self {
            Hyperparams::LinearReg => Algorithm::LinearReg,
            Hyperparams::LeastSqMed(_) => Algorithm::LeastSqMed,
            Hyperparams::MultiLayerPercep(_) => Algorithm::MultiLayerPercep,
            Hyperparams::M5Tree(_) => Algorithm::M5Tree,
            Hyperparams::REPTree(_) => Algorithm::REPTree,
        }
    }

    /// Replaces the seed of seeded algorithms.
    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            Hyperparams::LeastSqMed(p) => p.seed = seed,
            Hyperparams::MultiLayerPercep(p) => p.seed = seed,
            Hyperparams::REPTree(p) => p.seed = seed,
            Hyperparams::LinearReg | Hyperparams::M5Tree(_) => {}
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Hyperparams::LinearReg => Ok(()),
            Hyperparams::LeastSqMed(p) if p.n_subsets == 0 => Err(Error::validation(
                "LeastSqMed hyperparameters",
                "n_subsets must be at least 1",
            )),
            Hyperparams::LeastSqMed(_) => Ok(()),
            Hyperparams::MultiLayerPercep(p) => p.validate(),
            Hyperparams::M5Tree(p) => p.validate(),
            Hyperparams::REPTree(p) => p.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Linear(LinearModel),
    Mlp {
        net: Mlp,
        target_min: f64,
        target_range: f64,
    },
    M5(M5Tree),
    RepTree(RepTree),
}

impl Model {
    fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Model::Linear(m) => m.predict(x),
            Model::Mlp {
                net,
                target_min,
                target_range,
            } => target_min + target_range * net.forward(x),
            Model::M5(t) => t.predict(x),
            Model::RepTree(t) => t.predict(x),
        }
    }
}

/// A trained EDP model with everything needed to score a configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictor {
    pub algorithm: Algorithm,
    pub version: u32,
    pub hyperparams: Hyperparams,
    pub scaler: Scaler,
    /// Counter indices feeding the leading features.
    pub selected: Vec<usize>,
    pub feature_names: Vec<String>,
    pub config_encoded: bool,
    pub model: Model,
}

impl Predictor {
    pub fn width(&self) -> usize {
        self.scaler.width()
    }

    /// EDP for a raw (unscaled) feature row, clamped at 0.
    pub fn predict_row(&self, features: &[f64]) -> Result<f64> {
        let scaled = self.scaler.apply(features)?;
        let v = self.model.predict(&scaled);
        if !v.is_finite() {
            return Err(Error::Domain(format!(
                "{} produced a non-finite prediction",
                self.algorithm
            )));
        }
        Ok(v.max(0.0))
    }

    /// EDP of `cfg` given the ROI's profiling counters.
    pub fn predict(&self, hpcs: &HpcVector, cfg: &Configuration) -> Result<EdpValue> {
        if !self.config_encoded {
            return Err(Error::Domain(
                "predictor was not trained on counter + configuration features".into(),
            ));
        }
        let mut row = hpcs.select(&self.selected);
        row.extend_from_slice(&cfg.encoding());
        self.predict_row(&row).map(EdpValue)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("predictor serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Predictor = serde_json::from_str(text)?;
        if p.version != MODEL_VERSION {
            return Err(Error::validation(
                "model file",
                format!(
                    "unsupported version {} (expected {MODEL_VERSION})",
                    p.version
                ),
            ));
        }
        if p.hyperparams.algorithm() != p.algorithm {
            return Err(Error::validation(
                "model file",
                "hyperparameters belong to another algorithm",
            ));
        }
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

impl EdpEstimator for Predictor {
    fn estimate(&self, hpcs: &HpcVector, cfg: &Configuration) -> Result<f64> {
        self.predict(hpcs, cfg).map(EdpValue::get)
    }
}

/// Trains `hp.algorithm()` on the table.
pub fn train(table: &TrainTable, hp: &Hyperparams) -> Result<Predictor> {
    hp.validate()?;
    if table.is_empty() {
        return Err(Error::Domain("cannot train on an empty table".into()));
    }
    if table
        .rows
        .iter()
        .any(|r| !r.target.is_finite() || r.target < 0.0)
    {
        return Err(Error::Domain("targets must be finite and >= 0".into()));
    }
    let scaler = Scaler::fit(table)?;
    let scaled: Vec<Vec<f64>> = table
        .rows
        .iter()
        .map(|r| scaler.apply(&r.features))
        .collect::<Result<_>>()?;
    let x: Vec<&[f64]> = scaled.iter().map(Vec::as_slice).collect();
    let y = table.targets();

    let model = match hp {
        Hyperparams::LinearReg => Model::Linear(fit_ols(&x, &y)?),
        Hyperparams::LeastSqMed(p) => Model::Linear(fit_lms(&x, &y, p)?),
        Hyperparams::MultiLayerPercep(p) => {
            let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let range = if hi > lo { hi - lo } else { 1.0 };
            let ys: Vec<f64> = y.iter().map(|v| (v - lo) / range).collect();
            let (net, _) = fit_mlp(&x, &ys, p)?;
            Model::Mlp {
                net,
                target_min: lo,
                target_range: range,
            }
        }
        Hyperparams::M5Tree(p) => Model::M5(fit_m5(&x, &y, p)?),
        Hyperparams::REPTree(p) => Model::RepTree(fit_reptree(&x, &y, p)?),
    };
    Ok(Predictor {
        algorithm: hp.algorithm(),
        version: MODEL_VERSION,
        hyperparams: hp.clone(),
        scaler,
        selected: table.hpc_indices.clone(),
        feature_names: table.feature_names.clone(),
        config_encoded: table.config_encoded,
        model,
    })
}

/// Relative mean absolute error, in percent.
pub fn rmae(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::Domain(format!(
            "{} predictions for {} actual values",
            predicted.len(),
            actual.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::Domain("RMAE needs at least one sample".into()));
    }
    let mut total = 0.0;
    for (p, a) in predicted.iter().zip(actual) {
        if *a <= 0.0 {
            return Err(Error::Domain(format!("actual value {a} must be positive")));
        }
        total += (p - a).abs() / a;
    }
    Ok(total / actual.len() as f64 * 100.0)
}

/// RMAE of the predictor over every row of the table.
pub fn evaluate(predictor: &Predictor, table: &TrainTable) -> Result<f64> {
    let predicted = table
        .rows
        .iter()
        .map(|r| predictor.predict_row(&r.features))
        .collect::<Result<Vec<_>>>()?;
    rmae(&predicted, &table.targets())
}
