//! Fixtures shared by the benchmarks.

use ccasched_core::pipeline::prepare_features;
use ccasched_core::{
    generate_synthetic, Architecture, Dataset, SelectionMode, SyntheticSpec, TrainTable,
};

/// A synthetic suite of `n_rois` regions and its training table on the
/// paper's four counters.
pub fn suite(n_rois: u32, seed: u64) -> (Dataset, TrainTable) {
    let arch = Architecture::default();
    let spec = SyntheticSpec {
        n_workloads: 1,
        rois_per_workload: n_rois,
        seed,
        ..Default::default()
    };
    let (ds, _) = generate_synthetic(&spec, &arch).expect("default spec is valid");
    let (_, table) = prepare_features(&ds, &arch, 4, SelectionMode::PaperFixed).expect("features");
    (ds, table)
}
