use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Counter, Dataset, RoiId, N_COUNTERS};
use crate::config_space::{Architecture, Configuration};
use crate::error::{Error, Result};

/// Names of the configuration columns appended after the counter features.
pub const CONFIG_FEATURES: [&str; 3] = ["core", "freq_ghz", "threads"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRow {
    pub roi: RoiId,
    pub cfg: Option<Configuration>,
    pub features: Vec<f64>,
    pub target: f64,
}

/// Feature matrix with EDP targets. Rows built from a [`Dataset`] carry the
/// selected counters followed by the configuration encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTable {
    pub feature_names: Vec<String>,
    /// Counter indices behind the leading feature columns.
    pub hpc_indices: Vec<usize>,
    /// Whether the last three columns are the configuration encoding.
    pub config_encoded: bool,
    pub rows: Vec<TrainRow>,
}

impl TrainTable {
    /// A plain regression table; every row is its own group.
    pub fn from_xy(feature_names: Vec<String>, x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Domain(format!(
                "{} feature rows but {} targets",
                x.len(),
                y.len()
            )));
        }
        let width = feature_names.len();
        let rows = x
            .into_iter()
            .zip(y)
            .enumerate()
            .map(|(i, (features, target))| {
                if features.len() != width {
                    return Err(Error::Width {
                        expected: width,
                        got: features.len(),
                    });
                }
                if !target.is_finite() {
                    return Err(Error::Domain(format!(
                        "target on row {} is not finite",
                        i + 1
                    )));
                }
                Ok(TrainRow {
                    roi: RoiId::new("row", i as u32 + 1),
                    cfg: None,
                    features,
                    target,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            feature_names,
            hpc_indices: Vec::new(),
            config_encoded: false,
            rows,
        })
    }

    /// Unnamed columns `x0..x{width}`.
    pub fn from_matrix(x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        let width = x.first().map_or(0, Vec::len);
        let names = (0..width).map(|j| format!("x{j}")).collect();
        Self::from_xy(names, x, y)
    }

    pub fn width(&self) -> usize {
        self.feature_names.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn x(&self) -> Vec<&[f64]> {
        self.rows.iter().map(|r| r.features.as_slice()).collect()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.target).collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.features[j]).collect()
    }

    /// Distinct ROIs in first-appearance order.
    pub fn roi_ids(&self) -> Vec<RoiId> {
        let mut seen = HashSet::new();
        self.rows
            .iter()
            .filter(|r| seen.insert(&r.roi))
            .map(|r| r.roi.clone())
            .collect()
    }

    /// Projects the counter columns onto `selected` (indices into the counter
    /// schema), keeping the configuration encoding.
    pub fn select_counters(&self, selected: &[usize]) -> Result<TrainTable> {
        let positions = selected
            .iter()
            .map(|s| {
                self.hpc_indices.iter().position(|h| h == s).ok_or_else(|| {
                    Error::Domain(format!("counter index {s} is not a column of this table"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let n_hpc = self.hpc_indices.len();
        let tail: Vec<usize> = (n_hpc..self.width()).collect();
        let keep: Vec<usize> = positions.iter().copied().chain(tail).collect();
        Ok(TrainTable {
            feature_names: keep
                .iter()
                .map(|&j| self.feature_names[j].clone())
                .collect(),
            hpc_indices: selected.to_vec(),
            config_encoded: self.config_encoded,
            rows: self
                .rows
                .iter()
                .map(|r| TrainRow {
                    roi: r.roi.clone(),
                    cfg: r.cfg,
                    features: keep.iter().map(|&j| r.features[j]).collect(),
                    target: r.target,
                })
                .collect(),
        })
    }

    fn with_rows(&self, rows: Vec<TrainRow>) -> TrainTable {
        TrainTable {
            feature_names: self.feature_names.clone(),
            hpc_indices: self.hpc_indices.clone(),
            config_encoded: self.config_encoded,
            rows,
        }
    }
}

fn validate_selection(selected: &[usize]) -> Result<()> {
    let mut seen = HashSet::new();
    for &s in selected {
        if s >= N_COUNTERS {
            return Err(Error::Domain(format!("counter index {s} out of range")));
        }
        if !seen.insert(s) {
            return Err(Error::Domain(format!("counter index {s} selected twice")));
        }
    }
    Ok(())
}

/// One row per measurement. Counter features come from the ROI's aggressive
/// run, the configuration encoding and target from the measurement itself.
pub fn build_training_table(
    ds: &Dataset,
    arch: &Architecture,
    selected: &[usize],
) -> Result<TrainTable> {
    validate_selection(selected)?;
    let mut rows = Vec::with_capacity(ds.n_samples());
    for (roi, samples) in ds.iter() {
        let agg = ds.aggressive(roi, arch)?;
        let counters = agg.hpcs.select(selected);
        for m in samples {
            let mut features = counters.clone();
            features.extend_from_slice(&m.cfg.encoding());
            rows.push(TrainRow {
                roi: roi.clone(),
                cfg: Some(m.cfg),
                features,
                target: m.edp().get(),
            });
        }
    }
    let feature_names = selected
        .iter()
        .map(|&i| Counter::ALL[i].name().to_string())
        .chain(CONFIG_FEATURES.iter().map(|s| s.to_string()))
        .collect();
    Ok(TrainTable {
        feature_names,
        hpc_indices: selected.to_vec(),
        config_encoded: true,
        rows,
    })
}

/// Shuffles ROI ids and returns (train, test), both sorted.
///
/// The train side gets `round(train_fraction × n)` ROIs, clamped so that
/// neither side is empty.
pub fn split_rois(
    rois: &[RoiId],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<RoiId>, Vec<RoiId>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Domain(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut groups = rois.to_vec();
    groups.sort();
    groups.dedup();
    let n = groups.len();
    if n < 2 {
        return Err(Error::Data(format!(
            "cannot split {n} ROI(s); need at least 2"
        )));
    }
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    groups.shuffle(&mut rng);
    let mut test = groups.split_off(n_train);
    groups.sort();
    test.sort();
    Ok((groups, test))
}

/// Splits by ROI so that test regions are never seen in training.
pub fn split(
    table: &TrainTable,
    train_fraction: f64,
    seed: u64,
) -> Result<(TrainTable, TrainTable)> {
    let (train_ids, _) = split_rois(&table.roi_ids(), train_fraction, seed)?;
    let train_ids: HashSet<&RoiId> = train_ids.iter().collect();
    let (train, test): (Vec<TrainRow>, Vec<TrainRow>) = table
        .rows
        .iter()
        .cloned()
        .partition(|r| train_ids.contains(&r.roi));
    Ok((table.with_rows(train), table.with_rows(test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{HpcVector, RoiMeasurement};

    fn dataset(n_rois: u32, arch: &Architecture) -> Dataset {
        let mut rows = Vec::new();
        for r in 1..=n_rois {
            for (i, cfg) in arch.configs().into_iter().enumerate() {
                let mut h = [1.0; N_COUNTERS];
                h[0] = f64::from(r) * 100.0 + i as f64;
                rows.push(RoiMeasurement {
                    id: RoiId::new("app", r),
                    cfg,
                    time_s: 1.0 + i as f64 * 0.01,
                    power_w: 3.0,
                    hpcs: HpcVector(h),
                });
            }
        }
        Dataset::from_measurements(rows).unwrap()
    }

    #[test]
    fn table_shape_for_one_roi() {
        let arch = Architecture::default();
        let ds = dataset(1, &arch);
        let t = build_training_table(&ds, &arch, &[0, 4, 5, 11]).unwrap();
        assert_eq!(t.len(), 64);
        assert!(t.rows.iter().all(|r| r.features.len() == 7));
        assert_eq!(t.feature_names.len(), 7);
        assert_eq!(t.feature_names[3], "br_mispred");
        // every row carries the aggressive run's l1d_access
        let agg_index = arch
            .configs()
            .iter()
            .position(|c| c.key() == arch.aggressive_config().unwrap().key())
            .unwrap();
        assert!(t
            .rows
            .iter()
            .all(|r| r.features[0] == 100.0 + agg_index as f64));
        let r = &t.rows[9];
        assert_eq!(&r.features[4..], &r.cfg.unwrap().encoding());
        assert!((r.target - 3.0 * 1.09 * 1.09).abs() < 1e-12);
    }

    #[test]
    fn twenty_rois_give_1280_rows() {
        let arch = Architecture::default();
        let t = build_training_table(&dataset(20, &arch), &arch, &[0, 4, 5, 11]).unwrap();
        assert_eq!(t.len(), 1280);
    }

    #[test]
    fn missing_aggressive_run_names_roi() {
        let arch = Architecture::default();
        let agg = arch.aggressive_config().unwrap().key();
        let rows: Vec<_> = dataset(2, &arch)
            .measurements()
            .filter(|m| !(m.id.roi == 2 && m.cfg.key() == agg))
            .cloned()
            .collect();
        let ds = Dataset::from_measurements(rows).unwrap();
        let err = build_training_table(&ds, &arch, &[0])
            .unwrap_err()
            .to_string();
        assert!(err.contains("app#2"), "{err}");
    }

    #[test]
    fn split_by_roi() {
        let arch = Architecture::default();
        let t = build_training_table(&dataset(20, &arch), &arch, &[0]).unwrap();
        let (train, test) = split(&t, 0.7, 7).unwrap();
        assert_eq!(train.roi_ids().len(), 14);
        assert_eq!(test.roi_ids().len(), 6);
        assert_eq!(train.len(), 14 * 64);
        let train_ids: HashSet<_> = train.roi_ids().into_iter().collect();
        assert!(test.roi_ids().iter().all(|id| !train_ids.contains(id)));
        let (again, _) = split(&t, 0.7, 7).unwrap();
        assert_eq!(again, train);
    }

    #[test]
    fn split_edge_cases() {
        let arch = Architecture::default();
        let t = build_training_table(&dataset(2, &arch), &arch, &[0]).unwrap();
        let (a, b) = split(&t, 0.5, 1).unwrap();
        assert_eq!((a.roi_ids().len(), b.roi_ids().len()), (1, 1));
        let one = build_training_table(&dataset(1, &arch), &arch, &[0]).unwrap();
        assert!(matches!(split(&one, 0.7, 1), Err(Error::Data(_))));
        assert!(matches!(split(&t, 1.0, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn counter_projection() {
        let arch = Architecture::default();
        let full = build_training_table(
            &dataset(1, &arch),
            &arch,
            &(0..N_COUNTERS).collect::<Vec<_>>(),
        )
        .unwrap();
        let sub = full.select_counters(&[5, 0]).unwrap();
        assert_eq!(
            sub.feature_names,
            ["l2_miss", "l1d_access", "core", "freq_ghz", "threads"]
        );
        assert_eq!(sub.rows[0].features[1], full.rows[0].features[0]);
        assert!(sub.select_counters(&[3]).is_err());
    }
}
