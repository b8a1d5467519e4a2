//! Closed-form stand-in for a cycle-accurate simulator.
//!
//! Each ROI draws latent traits (parallel fraction `p`, memory intensity `m`,
//! branchiness `b`, floating-point mix). The composed-core IPC uplift falls
//! with branchiness. For a configuration at frequency `f`, voltage `V` and
//! `t` threads:
//!
//! ```text
//! time  = work / (ipc(core, m, u) · f_eff(f, m) · S(t, p))
//! S     = 1 / ((1 - p) + p / t)
//! f_eff = 1 / ((1 - m) / f + m / f_mem)
//! power = t · (c_dyn(core) · V² · f · (1 - a·m) + p_static(core))
//! ```
//!
//! Counters are per kilo-instruction and depend only on the latents and the
//! thread count (idle threads spin during the serial fraction), plus relative
//! Gaussian noise. Time and power are noiseless, so the oracle built from the
//! closed form matches the measured data exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    Counter, Dataset, HpcVector, OracleEntry, OracleTable, RoiId, RoiMeasurement, N_COUNTERS,
};
use crate::config_space::{feasible, Architecture, Configuration, CoreType};
use crate::error::{Error, Result};
use crate::scheduler;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn lerp(&self, t: f64) -> f64 {
        self.lo + (self.hi - self.lo) * t
    }

    fn check_fraction(&self, name: &str) -> Result<()> {
        let ok =
            (0.0..=1.0).contains(&self.lo) && (0.0..=1.0).contains(&self.hi) && self.lo <= self.hi;
        if ok {
            Ok(())
        } else {
            Err(Error::validation(
                "synthetic spec",
                format!(
                    "{name} must satisfy 0 <= lo <= hi <= 1, got [{}, {}]",
                    self.lo, self.hi
                ),
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_workloads: u32,
    pub rois_per_workload: u32,
    pub parallel_fraction: Range,
    pub memory_intensity: Range,
    pub composed_ipc_uplift: Range,
    /// Relative standard deviation of counter noise.
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_workloads: 10,
            rois_per_workload: 10,
            parallel_fraction: Range::new(0.5, 0.95),
            memory_intensity: Range::new(0.0, 0.4),
            composed_ipc_uplift: Range::new(0.2, 1.0),
            noise_sd: 0.05,
            seed: 42,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_workloads == 0 || self.rois_per_workload == 0 {
            return Err(Error::validation(
                "synthetic spec",
                "n_workloads and rois_per_workload must be at least 1",
            ));
        }
        self.parallel_fraction.check_fraction("parallel_fraction")?;
        self.memory_intensity.check_fraction("memory_intensity")?;
        self.composed_ipc_uplift
            .check_fraction("composed_ipc_uplift")?;
        if !(0.0..=1.0).contains(&self.noise_sd) {
            return Err(Error::validation(
                "synthetic spec",
                format!("noise_sd must lie in [0, 1], got {}", self.noise_sd),
            ));
        }
        Ok(())
    }

    /// Latent traits of every ROI, in ROI order. Depends only on the seed and ranges.
    pub fn latents(&self) -> Result<Vec<(RoiId, LatentRoi)>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let width = (self.n_workloads.max(1) - 1).to_string().len().max(2);
        let mut out = Vec::with_capacity((self.n_workloads * self.rois_per_workload) as usize);
        for w in 0..self.n_workloads {
            let workload = format!("w{w:0width$}");
            for r in 1..=self.rois_per_workload {
                let p = self.parallel_fraction.lerp(rng.random());
                let m = self.memory_intensity.lerp(rng.random());
                let b: f64 = rng.random();
                let fp_mix = 0.6 * rng.random::<f64>();
                let latent = LatentRoi {
                    parallel_fraction: p,
                    memory_intensity: m,
                    branchiness: b,
                    fp_mix,
                    composed_ipc_uplift: self.composed_ipc_uplift.lerp(1.0 - b),
                };
                out.push((RoiId::new(workload.clone(), r), latent));
            }
        }
        Ok(out)
    }
}

/// Hidden traits of one parallel region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentRoi {
    pub parallel_fraction: f64,
    pub memory_intensity: f64,
    pub branchiness: f64,
    pub fp_mix: f64,
    pub composed_ipc_uplift: f64,
}

/// Constants of the closed-form performance and power model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticModel {
    /// Instructions per ROI, in billions.
    pub work_ginst: f64,
    /// Frequency-equivalent rate of the memory-bound fraction, GHz.
    pub mem_freq_ghz: f64,
    pub base_ipc: f64,
    /// IPC loss per unit memory intensity.
    pub base_mem_penalty: f64,
    pub composed_mem_penalty: f64,
    /// Dynamic power coefficient, W / (GHz · V²).
    pub base_c_dyn: f64,
    pub composed_c_dyn: f64,
    pub base_static_w: f64,
    pub composed_static_w: f64,
    /// Switching-activity drop per unit memory intensity.
    pub activity_mem_drop: f64,
    /// Spin-loop instructions an idle thread retires per useful instruction
    /// of the serial fraction.
    pub spin_ratio: f64,
}

impl Default for SyntheticModel {
    fn default() -> Self {
        Self {
            work_ginst: 2.0,
            mem_freq_ghz: 2.0,
            base_ipc: 1.0,
            base_mem_penalty: 0.3,
            composed_mem_penalty: 0.15,
            base_c_dyn: 0.9,
            composed_c_dyn: 2.0,
            base_static_w: 0.25,
            composed_static_w: 0.6,
            activity_mem_drop: 0.4,
            spin_ratio: 3.0,
        }
    }
}

impl SyntheticModel {
    pub fn ipc(&self, roi: &LatentRoi, core: CoreType) -> f64 {
        let m = roi.memory_intensity;
        match core {
            CoreType::Base => self.base_ipc * (1.0 - self.base_mem_penalty * m),
            CoreType::Composed => {
                self.base_ipc
                    * (1.0 + roi.composed_ipc_uplift)
                    * (1.0 - self.composed_mem_penalty * m)
            }
        }
    }

    pub fn effective_freq(&self, roi: &LatentRoi, freq_ghz: f64) -> f64 {
        let m = roi.memory_intensity;
        1.0 / ((1.0 - m) / freq_ghz + m / self.mem_freq_ghz)
    }

    pub fn speedup(&self, roi: &LatentRoi, threads: u32) -> f64 {
        let p = roi.parallel_fraction;
        1.0 / ((1.0 - p) + p / f64::from(threads))
    }

    pub fn time(&self, roi: &LatentRoi, cfg: &Configuration) -> f64 {
        self.work_ginst
            / (self.ipc(roi, cfg.core)
                * self.effective_freq(roi, cfg.op.freq_ghz)
                * self.speedup(roi, cfg.threads))
    }

    pub fn power(&self, roi: &LatentRoi, cfg: &Configuration) -> f64 {
        let (c_dyn, p_static) = match cfg.core {
            CoreType::Base => (self.base_c_dyn, self.base_static_w),
            CoreType::Composed => (self.composed_c_dyn, self.composed_static_w),
        };
        let v = cfg.op.voltage_v;
        let activity = 1.0 - self.activity_mem_drop * roi.memory_intensity;
        f64::from(cfg.threads) * (c_dyn * v * v * cfg.op.freq_ghz * activity + p_static)
    }

    pub fn edp(&self, roi: &LatentRoi, cfg: &Configuration) -> f64 {
        let t = self.time(roi, cfg);
        self.power(roi, cfg) * t * t
    }

    /// Spin-loop instructions retired per useful instruction: idle threads
    /// spin while one thread runs the serial fraction.
    pub fn spin_per_useful(&self, roi: &LatentRoi, threads: u32) -> f64 {
        self.spin_ratio * f64::from(threads - 1) * (1.0 - roi.parallel_fraction)
    }

    /// Noiseless counters per kilo useful instruction: the region's own
    /// profile plus the events of the spin loop.
    pub fn counters(&self, roi: &LatentRoi, threads: u32) -> HpcVector {
        let m = roi.memory_intensity;
        let b = roi.branchiness;
        let x = self.spin_per_useful(roi, threads);
        let mut h = [0.0; N_COUNTERS];
        // The spin loop is a load and a fused compare-branch replayed from the
        // loop buffer, so it shows up only in L1D accesses and branches.
        let l1d_access = 280.0 + 120.0 * m + 333.0 * x;
        let l1i_access = 300.0 + 60.0 * b;
        let l1d_miss = (280.0 + 120.0 * m) * (0.01 + 0.12 * m);
        let l1i_miss = (300.0 + 60.0 * b) * (0.002 + 0.01 * b);
        let l2_access = l1d_miss + l1i_miss;
        let br_app = 80.0 + 140.0 * b;
        h[Counter::L1dAccess.index()] = l1d_access;
        h[Counter::L1dMiss.index()] = l1d_miss;
        h[Counter::L1iAccess.index()] = l1i_access;
        h[Counter::L1iMiss.index()] = l1i_miss;
        h[Counter::L2Access.index()] = l2_access;
        h[Counter::L2Miss.index()] = 15.0 * m;
        h[Counter::ItlbMiss.index()] = 0.05 + 0.4 * b;
        h[Counter::DtlbMiss.index()] = 0.2 + 4.0 * m;
        h[Counter::IntIssue.index()] = 700.0 * (1.0 - roi.fp_mix);
        h[Counter::FpIssue.index()] = 700.0 * roi.fp_mix;
        h[Counter::BrInst.index()] = br_app + 333.0 * x;
        h[Counter::BrMispred.index()] = 20.0 * b;
        HpcVector(h)
    }
}

fn perturb(clean: &HpcVector, noise_sd: f64, rng: &mut ChaCha8Rng) -> HpcVector {
    let mut h = clean.0;
    for v in h.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v = (*v * (1.0 + noise_sd * z)).max(0.0);
    }
    for (miss, access) in [
        (Counter::L1dMiss, Counter::L1dAccess),
        (Counter::L2Miss, Counter::L2Access),
        (Counter::BrMispred, Counter::BrInst),
    ] {
        h[miss.index()] = h[miss.index()].min(h[access.index()]);
    }
    HpcVector(h)
}

/// Simulates every feasible configuration of every ROI and records the
/// exhaustive-search decision per ROI.
pub fn generate_synthetic(
    spec: &SyntheticSpec,
    arch: &Architecture,
) -> Result<(Dataset, OracleTable)> {
    let latents = spec.latents()?;
    SyntheticModel::default().simulate(&latents, arch, spec.noise_sd, spec.seed)
}

impl SyntheticModel {
    /// Same as [`generate_synthetic`] but for explicit latent traits.
    pub fn simulate(
        &self,
        latents: &[(RoiId, LatentRoi)],
        arch: &Architecture,
        noise_sd: f64,
        seed: u64,
    ) -> Result<(Dataset, OracleTable)> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let configs: Vec<Configuration> = arch
            .configs()
            .into_iter()
            .filter(|c| feasible(c, arch))
            .collect();

        let mut rows = Vec::with_capacity(latents.len() * configs.len());
        let mut oracle = Vec::with_capacity(latents.len());
        for (id, latent) in latents {
            for cfg in &configs {
                let clean = self.counters(latent, cfg.threads);
                rows.push(RoiMeasurement {
                    id: id.clone(),
                    cfg: *cfg,
                    time_s: self.time(latent, cfg),
                    power_w: self.power(latent, cfg),
                    hpcs: perturb(&clean, noise_sd, &mut rng),
                });
            }
            let scores = configs.iter().map(|c| (*c, self.edp(latent, c)));
            let decision = scheduler::decide(id, scores, arch)?;
            oracle.push(OracleEntry::from_config(
                id,
                &decision.chosen,
                decision.predicted_edp,
            ));
        }
        Ok((
            Dataset::from_measurements(rows)?,
            OracleTable::from_entries(oracle),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn latent(p: f64, m: f64) -> LatentRoi {
        LatentRoi {
            parallel_fraction: p,
            memory_intensity: m,
            branchiness: 0.5,
            fp_mix: 0.2,
            composed_ipc_uplift: 0.6,
        }
    }

    #[test]
    fn spec_validation() {
        let mut spec = SyntheticSpec::default();
        assert!(spec.validate().is_ok());
        spec.memory_intensity = Range::new(0.5, 1.5);
        assert!(spec.validate().is_err());
        spec = SyntheticSpec {
            noise_sd: -0.1,
            ..Default::default()
        };
        assert!(spec.validate().is_err());
        spec = SyntheticSpec {
            n_workloads: 0,
            ..Default::default()
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let arch = Architecture::default();
        let spec = SyntheticSpec {
            n_workloads: 2,
            rois_per_workload: 3,
            noise_sd: 0.0,
            ..Default::default()
        };
        let (a, oa) = generate_synthetic(&spec, &arch).unwrap();
        let (b, ob) = generate_synthetic(&spec, &arch).unwrap();
        assert_eq!(a.to_csv_string(), b.to_csv_string());
        assert_eq!(oa.to_csv_string(), ob.to_csv_string());
        assert_eq!(a.n_rois(), 6);
        // 32 base + 16 composed feasible configurations per ROI on 8B/4C
        assert_eq!(a.n_samples(), 6 * 48);
    }

    #[test]
    fn noisy_counters_respect_invariants() {
        let arch = Architecture::four_base();
        let spec = SyntheticSpec {
            n_workloads: 3,
            rois_per_workload: 4,
            noise_sd: 0.5,
            ..Default::default()
        };
        let (ds, _) = generate_synthetic(&spec, &arch).unwrap();
        assert!(ds.measurements().all(|m| m.hpcs.validate().is_ok()));
    }

    #[test]
    fn miss_counters_scale_with_their_latent() {
        let model = SyntheticModel::default();
        let at = |m: f64, b: f64, t: u32| {
            let roi = LatentRoi {
                branchiness: b,
                ..latent(0.7, m)
            };
            model.counters(&roi, t)
        };
        let l2 = |h: HpcVector| h.0[Counter::L2Miss.index()];
        let br = |h: HpcVector| h.0[Counter::BrMispred.index()];
        assert_eq!(l2(at(0.0, 0.5, 4)), 0.0);
        assert!((l2(at(0.4, 0.5, 4)) - 2.0 * l2(at(0.2, 0.9, 1))).abs() < 1e-12);
        assert_eq!(br(at(0.3, 0.0, 4)), 0.0);
        assert!((br(at(0.3, 0.8, 2)) - 4.0 * br(at(0.1, 0.2, 8))).abs() < 1e-12);
        for m in [0.0, 0.5, 1.0] {
            for b in [0.0, 0.5, 1.0] {
                assert!(at(m, b, 8).validate().is_ok());
            }
        }
    }

    #[test]
    fn spin_grows_with_threads_and_serial_fraction() {
        let model = SyntheticModel::default();
        let l1d = |p: f64, t: u32| model.counters(&latent(p, 0.2), t).0[Counter::L1dAccess.index()];
        assert_eq!(l1d(0.5, 1), l1d(0.9, 1));
        assert_eq!(l1d(1.0, 8), l1d(1.0, 1));
        assert!(l1d(0.5, 4) > l1d(0.5, 2));
        assert!(l1d(0.5, 4) > l1d(0.9, 4));
    }

    #[test]
    fn time_and_power_directionality() {
        let model = SyntheticModel::default();
        let arch = Architecture::default();
        for (p, m) in [(0.0, 0.0), (0.5, 0.3), (0.9, 0.8), (1.0, 1.0)] {
            let roi = latent(p, m);
            for core in CoreType::ALL {
                for w in arch.dvfs.windows(2) {
                    let lo = Configuration::new(core, w[0], 2);
                    let hi = Configuration::new(core, w[1], 2);
                    assert!(model.time(&roi, &hi) <= model.time(&roi, &lo));
                    assert!(model.power(&roi, &hi) >= model.power(&roi, &lo));
                }
                for t in 1..8 {
                    let a = Configuration::new(core, arch.dvfs[1], t);
                    let b = Configuration::new(core, arch.dvfs[1], t + 1);
                    assert!(model.time(&roi, &b) <= model.time(&roi, &a));
                    assert!(model.power(&roi, &b) >= model.power(&roi, &a));
                }
            }
        }
    }
}
