use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ccasched_core::pipeline::{execute, DataSource};
use ccasched_core::*;

fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn small_config(n_rois: u32) -> PipelineConfig {
    PipelineConfig {
        data: DataSource::Synthetic {
            spec: SyntheticSpec {
                n_workloads: 2,
                rois_per_workload: n_rois / 2,
                ..Default::default()
            },
        },
        ..Default::default()
    }
}

#[test]
fn two_runs_write_identical_files() {
    let cfg = small_config(20);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_pipeline(&cfg, a.path()).unwrap();
    run_pipeline(&cfg, b.path()).unwrap();
    let (ta, tb) = (read_tree(a.path()), read_tree(b.path()));
    assert!(ta.contains_key("summary.json"));
    assert!(ta.keys().any(|k| k.starts_with("models")));
    assert_eq!(ta, tb);
}

#[test]
fn summary_covers_every_algorithm_and_test_region() {
    let out = execute(&small_config(20)).unwrap();
    let s = &out.summary;
    assert_eq!((s.train_rois, s.test_rois), (14, 6));
    assert_eq!(s.algorithms.len(), Algorithm::ALL.len());
    for a in &s.algorithms {
        assert_eq!(a.decisions.len(), 6);
        assert!((a.accuracy_pct - (100.0 - a.rmae_pct).max(0.0)).abs() < 1e-12);
    }
    assert_eq!(s.tradeoff.ranking.len(), Algorithm::ALL.len());
}

#[test]
fn csv_source_gives_the_same_summary_as_the_generator() {
    let cfg = small_config(10);
    let DataSource::Synthetic { spec } = &cfg.data else {
        unreachable!()
    };
    let (ds, oracle) = generate_synthetic(spec, &Architecture::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (m, o) = (dir.path().join("m.csv"), dir.path().join("o.csv"));
    fs::write(&m, ds.to_csv_string()).unwrap();
    fs::write(&o, oracle.to_csv_string()).unwrap();
    let from_csv = PipelineConfig {
        data: DataSource::Csv {
            measurements: m,
            oracle: Some(o),
        },
        ..cfg.clone()
    };
    let a = execute(&cfg).unwrap().summary;
    let b = execute(&from_csv).unwrap().summary;
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
}
