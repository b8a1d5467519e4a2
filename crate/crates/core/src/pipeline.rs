//! End-to-end experiment: data → features → split → train → evaluate →
//! schedule → regret → reports.
//!
//! Every artifact is rendered in memory first and written only after all
//! stages succeed, so a failed run leaves nothing behind.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config_space::Architecture;
use crate::dataset::{
    build_training_table, generate_synthetic, split_rois, Dataset, OracleTable, SyntheticSpec,
    TrainTable,
};
use crate::error::{Error, Result};
use crate::features::{feature_report, FeatureReport, SelectionMode};
use crate::models::{evaluate, train, Algorithm, Hyperparams, Predictor};
use crate::report::{tradeoff, CostTable, TradeoffReport};
use crate::scheduler::{
    decisions_to_csv, distribution, oracle_table, regret, schedule_application, DecisionRecord,
    DistributionReport,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic {
        #[serde(default)]
        spec: SyntheticSpec,
    },
    Csv {
        measurements: PathBuf,
        /// Recomputed from the measurements when absent.
        #[serde(default)]
        oracle: Option<PathBuf>,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic {
            spec: SyntheticSpec::default(),
        }
    }
}

fn default_algorithms() -> Vec<String> {
    Algorithm::ALL
        .iter()
        .map(|a| a.name().to_string())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: DataSource,
    pub arch: Architecture,
    /// Algorithm tags; checked before any work starts.
    pub algorithms: Vec<String>,
    /// Seeds the split and every seeded learner.
    pub seed: u64,
    pub train_fraction: f64,
    /// Defaults to the paper's four counters.
    pub feature_mode: SelectionMode,
    pub k: usize,
    /// Replaces the default hyperparameters of the matching algorithm.
    pub hyperparams: Vec<Hyperparams>,
    /// Cost table for the trade-off report; the shipped table when absent.
    pub costs: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            data: DataSource::default(),
            arch: Architecture::default(),
            algorithms: default_algorithms(),
            seed: 42,
            train_fraction: 0.7,
            feature_mode: SelectionMode::PaperFixed,
            k: 4,
            hyperparams: Vec::new(),
            costs: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn algorithms(&self) -> Result<Vec<Algorithm>> {
        let mut out = Vec::with_capacity(self.algorithms.len());
        for tag in &self.algorithms {
            let a: Algorithm = tag.parse()?;
            if out.contains(&a) {
                return Err(Error::validation(
                    "pipeline config",
                    format!("algorithm {a} listed twice"),
                ));
            }
            out.push(a);
        }
        if out.is_empty() {
            return Err(Error::validation(
                "pipeline config",
                "no algorithms requested",
            ));
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        self.algorithms()?;
        self.arch.validate()?;
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::validation(
                "pipeline config",
                "train_fraction must lie in (0, 1)",
            ));
        }
        if self.k == 0 {
            return Err(Error::validation("pipeline config", "k must be at least 1"));
        }
        let mut seen = Vec::new();
        for hp in &self.hyperparams {
            hp.validate()?;
            if seen.contains(&hp.algorithm()) {
                return Err(Error::validation(
                    "pipeline config",
                    format!("hyperparameters for {} given twice", hp.algorithm()),
                ));
            }
            seen.push(hp.algorithm());
        }
        if let DataSource::Synthetic { spec } = &self.data {
            spec.validate()?;
        }
        Ok(())
    }

    /// Hyperparameters used for `algorithm`, seeded with the run seed unless
    /// overridden.
    pub fn hyperparams_for(&self, algorithm: Algorithm) -> Hyperparams {
        self.hyperparams
            .iter()
            .find(|hp| hp.algorithm() == algorithm)
            .cloned()
            .unwrap_or_else(|| Hyperparams::default_for(algorithm).with_seed(self.seed))
    }
}

/// Loads or generates the dataset and its oracle.
pub fn load_data(source: &DataSource, arch: &Architecture) -> Result<(Dataset, OracleTable)> {
    match source {
        DataSource::Synthetic { spec } => generate_synthetic(spec, arch),
        DataSource::Csv {
            measurements,
            oracle,
        } => {
            let ds = Dataset::load(measurements)?;
            let oracle = match oracle {
                Some(path) => OracleTable::load(path)?,
                None => oracle_table(&ds, arch)?,
            };
            Ok((ds, oracle))
        }
    }
}

/// Picks `k` counters on `ds` and builds the table restricted to them.
pub fn prepare_features(
    ds: &Dataset,
    arch: &Architecture,
    k: usize,
    mode: SelectionMode,
) -> Result<(FeatureReport, TrainTable)> {
    let full = build_training_table(
        ds,
        arch,
        &(0..crate::dataset::N_COUNTERS).collect::<Vec<_>>(),
    )?;
    let report = feature_report(&full, k, mode)?;
    let table = full.select_counters(&report.selected)?;
    Ok((report, table))
}

/// Trains each algorithm in parallel; results keep the input order.
pub fn train_all(table: &TrainTable, hyperparams: &[Hyperparams]) -> Result<Vec<Predictor>> {
    hyperparams
        .par_iter()
        .map(|hp| train(table, hp).map_err(|e| e.in_stage(hp.algorithm().name())))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub algorithm: Algorithm,
    pub rmae_pct: f64,
    pub accuracy_pct: f64,
    pub regret_pct: f64,
    pub distribution: DistributionReport,
    pub decisions: Vec<DecisionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub seed: u64,
    pub n_rois: usize,
    pub train_rois: usize,
    pub test_rois: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub feature_mode: SelectionMode,
    pub selected_features: Vec<String>,
    pub variation_threshold: f64,
    pub algorithms: Vec<AlgorithmSummary>,
    /// Distribution of the oracle's choices on the test ROIs.
    pub oracle_distribution: DistributionReport,
    pub tradeoff: TradeoffReport,
}

/// Everything a run produces, before anything touches the disk.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub summary: PipelineSummary,
    pub predictors: Vec<Predictor>,
    pub feature_report: FeatureReport,
    /// Relative path → file contents, in write order.
    pub artifacts: Vec<(PathBuf, String)>,
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

/// Runs every stage in memory.
pub fn execute(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let algorithms = cfg.algorithms()?;
    cfg.validate()?;
    let arch = &cfg.arch;

    let (ds, oracle) = load_data(&cfg.data, arch).map_err(|e| e.in_stage("load"))?;

    let roi_ids: Vec<_> = ds.roi_ids().cloned().collect();
    let (train_ids, test_ids) =
        split_rois(&roi_ids, cfg.train_fraction, cfg.seed).map_err(|e| e.in_stage("split"))?;
    let train_ds = ds.subset(&train_ids);
    let test_ds = ds.subset(&test_ids);

    let (feature_report, train_table) = prepare_features(&train_ds, arch, cfg.k, cfg.feature_mode)
        .map_err(|e| e.in_stage("features"))?;
    let test_table = build_training_table(&test_ds, arch, &feature_report.selected)
        .map_err(|e| e.in_stage("features"))?;

    let hyperparams: Vec<Hyperparams> =
        algorithms.iter().map(|&a| cfg.hyperparams_for(a)).collect();
    let predictors = train_all(&train_table, &hyperparams).map_err(|e| e.in_stage("train"))?;

    let scored: Vec<(f64, Vec<_>, f64)> = predictors
        .iter()
        .map(|p| {
            let rmae = evaluate(p, &test_table).map_err(|e| e.in_stage("evaluate"))?;
            let decisions =
                schedule_application(p, &test_ds, arch).map_err(|e| e.in_stage("schedule"))?;
            let regret = regret(&decisions, &oracle, &test_ds).map_err(|e| e.in_stage("regret"))?;
            Ok((rmae, decisions, regret))
        })
        .collect::<Result<_>>()?;

    let costs = match &cfg.costs {
        Some(path) => CostTable::load(path),
        None => Ok(CostTable::shipped()),
    }
    .map_err(|e| e.in_stage("report"))?;

    let mut artifacts = Vec::new();
    let mut summaries = Vec::new();
    let mut accuracies = BTreeMap::new();
    for (p, (rmae, decisions, regret)) in predictors.iter().zip(scored) {
        let accuracy = 100.0 - rmae;
        accuracies.insert(p.algorithm, accuracy.max(0.0));
        let chosen: Vec<_> = decisions.iter().map(|d| d.chosen).collect();
        let dist = distribution(&chosen, arch).map_err(|e| e.in_stage("report"))?;
        artifacts.push((
            PathBuf::from(format!("models/{}.json", p.algorithm)),
            p.to_json(),
        ));
        artifacts.push((
            PathBuf::from(format!("decisions_{}.csv", p.algorithm)),
            decisions_to_csv(&decisions),
        ));
        summaries.push(AlgorithmSummary {
            algorithm: p.algorithm,
            rmae_pct: rmae,
            accuracy_pct: accuracy,
            regret_pct: regret,
            distribution: dist,
            decisions: decisions.iter().map(DecisionRecord::from).collect(),
        });
    }
    let tradeoff = tradeoff(&accuracies, &costs).map_err(|e| e.in_stage("report"))?;

    let oracle_choices: Vec<_> = test_ids
        .iter()
        .map(|roi| {
            oracle
                .get(roi)
                .ok_or_else(|| Error::Data(format!("oracle has no entry for ROI {roi}")))
                .and_then(|e| e.config(arch))
        })
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("report"))?;
    let oracle_distribution =
        distribution(&oracle_choices, arch).map_err(|e| e.in_stage("report"))?;

    let summary = PipelineSummary {
        seed: cfg.seed,
        n_rois: ds.n_rois(),
        train_rois: train_ids.len(),
        test_rois: test_ids.len(),
        train_rows: train_table.len(),
        test_rows: test_table.len(),
        feature_mode: cfg.feature_mode,
        selected_features: feature_report.selected_names.clone(),
        variation_threshold: arch.variation_threshold,
        algorithms: summaries,
        oracle_distribution,
        tradeoff,
    };
    artifacts.push(("oracle.csv".into(), oracle.to_csv_string()));
    artifacts.push(("tradeoff.csv".into(), summary.tradeoff.to_csv_string()));
    artifacts.push(("feature_report.json".into(), to_json(&feature_report)));
    artifacts.push(("summary.json".into(), to_json(&summary)));

    Ok(PipelineOutput {
        summary,
        predictors,
        feature_report,
        artifacts,
    })
}

/// Writes artifacts under `out`; on failure removes whatever was written.
pub fn write_artifacts(out: &Path, artifacts: &[(PathBuf, String)]) -> Result<Vec<PathBuf>> {
    let mut written = Vec::with_capacity(artifacts.len());
    let mut created_dirs = Vec::new();
    let result = (|| -> Result<()> {
        for (rel, contents) in artifacts {
            let path = out.join(rel);
            if let Some(dir) = path.parent() {
                if !dir.exists() {
                    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                    created_dirs.push(dir.to_path_buf());
                }
            }
            std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        Ok(())
    })();
    match result {
        Ok(()) => Ok(written),
        Err(e) => {
            for path in &written {
                let _ = std::fs::remove_file(path);
            }
            for dir in created_dirs.iter().rev() {
                let _ = std::fs::remove_dir(dir);
            }
            Err(e.in_stage("write"))
        }
    }
}

/// Runs the pipeline and writes its artifacts under `out`.
pub fn run_pipeline(cfg: &PipelineConfig, out: &Path) -> Result<PipelineSummary> {
    let output = execute(cfg)?;
    write_artifacts(out, &output.artifacts)?;
    Ok(output.summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> PipelineConfig {
        PipelineConfig {
            data: DataSource::Synthetic {
                spec: SyntheticSpec {
                    n_workloads: 4,
                    rois_per_workload: 5,
                    ..Default::default()
                },
            },
            algorithms: vec!["LinearReg".into(), "REPTree".into()],
            ..Default::default()
        }
    }

    #[test]
    fn unknown_algorithm_is_rejected_up_front() {
        let text = r#"{"algorithms": ["LinearReg", "SVM"]}"#;
        assert!(matches!(
            PipelineConfig::from_json(text),
            Err(Error::Validation { .. })
        ));
        let mut cfg = small();
        cfg.algorithms.push("SVM".into());
        assert!(matches!(execute(&cfg), Err(Error::Validation { .. })));
    }

    #[test]
    fn twenty_rois_split_fourteen_six() {
        let out = execute(&small()).unwrap();
        assert_eq!(out.summary.n_rois, 20);
        assert_eq!(out.summary.train_rois, 14);
        assert_eq!(out.summary.test_rois, 6);
        assert_eq!(out.summary.algorithms.len(), 2);
        assert_eq!(out.summary.algorithms[0].decisions.len(), 6);
        assert_eq!(out.summary.selected_features.len(), 4);
    }

    #[test]
    fn stage_errors_name_the_stage() {
        let cfg = PipelineConfig {
            data: DataSource::Csv {
                measurements: "/nonexistent/m.csv".into(),
                oracle: None,
            },
            ..small()
        };
        match execute(&cfg) {
            Err(Error::Stage { stage, source }) => {
                assert_eq!(stage, "load");
                assert!(matches!(*source, Error::Io { .. }));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn failed_write_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("blocker")).unwrap();
        let artifacts = vec![
            (PathBuf::from("sub/a.txt"), "a".to_string()),
            // a directory already sits at this path
            (PathBuf::from("blocker"), "b".to_string()),
        ];
        assert!(write_artifacts(dir.path(), &artifacts).is_err());
        assert!(!dir.path().join("sub").exists());
    }
}
