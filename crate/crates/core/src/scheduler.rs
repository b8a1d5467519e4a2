//! Per-ROI configuration selection.
//!
//! Both the measured-data oracle and the predictive scheduler reduce to the
//! same step: find the lowest-EDP base and composed configurations, then
//! compose only when the relative EDP gain reaches the architecture's
//! variation threshold.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config_space::{
    classify_config, feasible, freq_mhz, Architecture, ConfigClass, Configuration, CoreType,
};
use crate::dataset::{
    check_header, Dataset, HpcVector, OracleEntry, OracleTable, RoiId, ORACLE_HEADER,
};
use crate::error::{Error, Result};

/// Anything that can put an EDP on a configuration given profiling counters.
pub trait EdpEstimator: Sync {
    fn estimate(&self, hpcs: &HpcVector, cfg: &Configuration) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rule {
    BaseByThreshold,
    ComposedByThreshold,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::BaseByThreshold => "base_by_threshold",
            Rule::ComposedByThreshold => "composed_by_threshold",
        })
    }
}

impl FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base_by_threshold" => Ok(Rule::BaseByThreshold),
            "composed_by_threshold" => Ok(Rule::ComposedByThreshold),
            other => Err(Error::validation("rule", format!("unknown rule `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub cfg: Configuration,
    pub edp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulingDecision {
    pub roi: RoiId,
    pub chosen: Configuration,
    pub predicted_edp: f64,
    pub best_base: Scored,
    pub best_comp: Scored,
    /// `None` when the best base EDP is zero and the ratio is undefined.
    pub variation: Option<f64>,
    pub rule: Rule,
}

/// Relative EDP gain of the best composed configuration over the best base one.
pub fn variation(best_base_edp: f64, best_comp_edp: f64) -> Result<f64> {
    if best_base_edp == 0.0 {
        return Err(Error::Domain(
            "variation is undefined when the best base EDP is 0".into(),
        ));
    }
    if !best_base_edp.is_finite() || !best_comp_edp.is_finite() {
        return Err(Error::Domain("variation needs finite EDP values".into()));
    }
    Ok((best_base_edp - best_comp_edp) / best_base_edp)
}

pub fn decide_core(var: f64, threshold: f64) -> CoreType {
    if var >= threshold {
        CoreType::Composed
    } else {
        CoreType::Base
    }
}

/// Applies the variation rule to scored configurations.
///
/// Infeasible configurations are skipped. Within each core type the lowest
/// score wins and exact ties go to the earlier configuration in enumeration
/// order, whatever order the scores arrive in.
pub fn decide(
    roi: &RoiId,
    scores: impl IntoIterator<Item = (Configuration, f64)>,
    arch: &Architecture,
) -> Result<SchedulingDecision> {
    let mut scored: Vec<Scored> = Vec::new();
    for (cfg, edp) in scores {
        if !feasible(&cfg, arch) {
            continue;
        }
        if !edp.is_finite() {
            return Err(Error::Domain(format!(
                "non-finite EDP {edp} for {cfg} in ROI {roi}"
            )));
        }
        scored.push(Scored { cfg, edp });
    }
    scored.sort_by_key(|s| s.cfg.key());

    let best = |core: CoreType| -> Result<Scored> {
        let mut best: Option<Scored> = None;
        for s in scored.iter().filter(|s| s.cfg.core == core) {
            if best.is_none_or(|b| s.edp < b.edp) {
                best = Some(*s);
            }
        }
        best.ok_or_else(|| Error::Data(format!("ROI {roi} has no feasible {core} configuration")))
    };
    let best_base = best(CoreType::Base)?;
    let best_comp = best(CoreType::Composed)?;

    let var = if best_base.edp == 0.0 {
        None
    } else {
        Some(variation(best_base.edp, best_comp.edp)?)
    };
    let core = var.map_or(CoreType::Base, |v| decide_core(v, arch.variation_threshold));
    let (chosen, rule) = match core {
        CoreType::Base => (best_base, Rule::BaseByThreshold),
        CoreType::Composed => (best_comp, Rule::ComposedByThreshold),
    };
    Ok(SchedulingDecision {
        roi: roi.clone(),
        chosen: chosen.cfg,
        predicted_edp: chosen.edp,
        best_base,
        best_comp,
        variation: var,
        rule,
    })
}

/// Decision from measured EDPs.
pub fn oracle_best(ds: &Dataset, roi: &RoiId, arch: &Architecture) -> Result<SchedulingDecision> {
    let samples = ds
        .samples(roi)
        .ok_or_else(|| Error::Data(format!("ROI {roi} is not in the dataset")))?;
    decide(roi, samples.iter().map(|m| (m.cfg, m.edp().get())), arch)
}

/// Oracle decisions for every ROI, as a table.
pub fn oracle_table(ds: &Dataset, arch: &Architecture) -> Result<OracleTable> {
    let entries = ds
        .roi_ids()
        .map(|roi| {
            let d = oracle_best(ds, roi, arch)?;
            Ok(OracleEntry::from_config(roi, &d.chosen, d.predicted_edp))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OracleTable::from_entries(entries))
}

/// Scores every feasible configuration with the estimator and applies the rule.
pub fn schedule_roi(
    estimator: &impl EdpEstimator,
    roi: &RoiId,
    aggressive_hpcs: &HpcVector,
    arch: &Architecture,
) -> Result<SchedulingDecision> {
    let scores = arch
        .feasible_configs()
        .into_iter()
        .map(|cfg| estimator.estimate(aggressive_hpcs, &cfg).map(|e| (cfg, e)))
        .collect::<Result<Vec<_>>>()?;
    decide(roi, scores, arch)
}

/// One independent decision per ROI, in ROI order.
pub fn schedule_application(
    estimator: &impl EdpEstimator,
    ds: &Dataset,
    arch: &Architecture,
) -> Result<Vec<SchedulingDecision>> {
    let profiles = ds
        .roi_ids()
        .map(|roi| ds.aggressive(roi, arch).map(|m| (roi, m.hpcs)))
        .collect::<Result<Vec<_>>>()?;
    profiles
        .par_iter()
        .map(|(roi, hpcs)| schedule_roi(estimator, roi, hpcs, arch))
        .collect()
}

/// Mean percentage by which the chosen configurations' measured EDP exceeds
/// the oracle optimum.
pub fn regret(decisions: &[SchedulingDecision], oracle: &OracleTable, ds: &Dataset) -> Result<f64> {
    if decisions.is_empty() {
        return Err(Error::Domain("regret needs at least one decision".into()));
    }
    let mut total = 0.0;
    for d in decisions {
        let best = oracle
            .get(&d.roi)
            .ok_or_else(|| Error::Data(format!("oracle has no entry for ROI {}", d.roi)))?;
        let chosen = ds.find(&d.roi, d.chosen.key()).ok_or_else(|| {
            Error::Data(format!("no measurement of {} for ROI {}", d.chosen, d.roi))
        })?;
        if best.edp <= 0.0 {
            return Err(Error::Domain(format!(
                "oracle EDP for ROI {} is not positive",
                d.roi
            )));
        }
        total += (chosen.edp().get() - best.edp) / best.edp * 100.0;
    }
    Ok(total / decisions.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionCell {
    pub class: ConfigClass,
    pub freq_ghz: f64,
    pub count: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTotal {
    pub count: usize,
    pub fraction: f64,
}

/// How chosen configurations spread over (class × frequency).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub total: usize,
    pub cells: Vec<DistributionCell>,
    pub classes: BTreeMap<ConfigClass, ClassTotal>,
}

impl DistributionReport {
    pub fn class_fraction(&self, class: ConfigClass) -> f64 {
        self.classes.get(&class).map_or(0.0, |c| c.fraction)
    }

    pub fn core_fraction(&self, core: CoreType) -> f64 {
        let count: usize = self
            .classes
            .iter()
            .filter(|(class, _)| class.core() == core)
            .map(|(_, t)| t.count)
            .sum();
        count as f64 / self.total as f64
    }
}

pub fn distribution(chosen: &[Configuration], arch: &Architecture) -> Result<DistributionReport> {
    if chosen.is_empty() {
        return Err(Error::Domain(
            "distribution needs at least one configuration".into(),
        ));
    }
    let mut cells: BTreeMap<(ConfigClass, u32), (f64, usize)> = BTreeMap::new();
    let mut classes: BTreeMap<ConfigClass, usize> =
        ConfigClass::ALL.iter().map(|c| (*c, 0)).collect();
    for cfg in chosen {
        let class = classify_config(cfg, arch)?;
        let cell = cells
            .entry((class, freq_mhz(cfg.op.freq_ghz)))
            .or_insert((cfg.op.freq_ghz, 0));
        cell.1 += 1;
        *classes.entry(class).or_default() += 1;
    }
    let total = chosen.len();
    let frac = |n: usize| n as f64 / total as f64;
    Ok(DistributionReport {
        total,
        cells: cells
            .into_iter()
            .map(|((class, _), (freq_ghz, count))| DistributionCell {
                class,
                freq_ghz,
                count,
                fraction: frac(count),
            })
            .collect(),
        classes: classes
            .into_iter()
            .map(|(class, count)| {
                (
                    class,
                    ClassTotal {
                        count,
                        fraction: frac(count),
                    },
                )
            })
            .collect(),
    })
}

pub const DECISION_HEADER: [&str; 8] = [
    "workload",
    "roi",
    "core_type",
    "freq_ghz",
    "threads",
    "predicted_edp",
    "variation",
    "rule",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub workload: String,
    pub roi: u32,
    pub core_type: String,
    pub freq_ghz: f64,
    pub threads: u32,
    pub predicted_edp: f64,
    pub variation: Option<f64>,
    pub rule: String,
}

impl From<&SchedulingDecision> for DecisionRecord {
    fn from(d: &SchedulingDecision) -> Self {
        Self {
            workload: d.roi.workload.clone(),
            roi: d.roi.roi,
            core_type: d.chosen.core.label().to_string(),
            freq_ghz: d.chosen.op.freq_ghz,
            threads: d.chosen.threads,
            predicted_edp: d.predicted_edp,
            variation: d.variation,
            rule: d.rule.to_string(),
        }
    }
}

pub fn write_decisions<W: std::io::Write>(
    decisions: &[SchedulingDecision],
    writer: W,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(writer);
    w.write_record(DECISION_HEADER)?;
    for d in decisions {
        w.serialize(DecisionRecord::from(d))?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn decisions_to_csv(decisions: &[SchedulingDecision]) -> String {
    let mut buf = Vec::new();
    write_decisions(decisions, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

#[derive(Deserialize)]
struct ChoiceRecord {
    workload: String,
    roi: u32,
    core_type: String,
    freq_ghz: f64,
    threads: u32,
}

/// Reads (ROI, chosen configuration) pairs from a decisions CSV or an oracle
/// CSV; both schemas share their first five columns.
pub fn read_decisions<R: std::io::Read>(
    reader: R,
    source: &str,
    arch: &Architecture,
) -> Result<Vec<(RoiId, Configuration)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() == ORACLE_HEADER.len() {
        check_header(&headers, &ORACLE_HEADER, source)?;
    } else {
        check_header(&headers, &DECISION_HEADER, source)?;
    }
    rdr.deserialize::<ChoiceRecord>()
        .enumerate()
        .map(|(i, rec)| {
            let load_err = |reason: String| Error::Load {
                path: source.to_string(),
                row: i + 1,
                reason,
            };
            let rec = rec.map_err(|e| load_err(e.to_string()))?;
            let core: CoreType = rec
                .core_type
                .parse()
                .map_err(|e: Error| load_err(e.to_string()))?;
            let op = arch
                .operating_point(rec.freq_ghz)
                .map_err(|e| load_err(e.to_string()))?;
            let cfg = Configuration::new(core, op, rec.threads);
            if !feasible(&cfg, arch) {
                return Err(load_err(format!(
                    "{cfg} is not feasible on this architecture"
                )));
            }
            Ok((RoiId::new(rec.workload, rec.roi), cfg))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch() -> Architecture {
        Architecture::default()
    }

    fn c(core: CoreType, freq: f64, threads: u32) -> Configuration {
        Configuration::new(core, arch().operating_point(freq).unwrap(), threads)
    }

    #[test]
    fn variation_values() {
        assert_eq!(variation(100.0, 100.0).unwrap(), 0.0);
        assert!((variation(100.0, 72.0).unwrap() - 0.28).abs() < 1e-12);
        assert!((variation(100.0, 180.0).unwrap() + 0.8).abs() < 1e-12);
        assert!(matches!(variation(0.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn core_decisions() {
        assert_eq!(decide_core(0.28, 0.2), CoreType::Composed);
        assert_eq!(decide_core(0.022, 0.2), CoreType::Base);
        assert_eq!(decide_core(-4.448, 0.2), CoreType::Base);
        assert_eq!(decide_core(0.2, 0.2), CoreType::Composed);
    }

    #[test]
    fn two_point_oracle() {
        let roi = RoiId::new("a", 1);
        let d = decide(
            &roi,
            [
                (c(CoreType::Base, 1.6, 1), 5.0),
                (c(CoreType::Composed, 1.6, 1), 3.0),
            ],
            &arch(),
        )
        .unwrap();
        assert!((d.variation.unwrap() - 0.4).abs() < 1e-12);
        assert_eq!(d.rule, Rule::ComposedByThreshold);
        assert_eq!(d.chosen.core, CoreType::Composed);
        assert_eq!(d.predicted_edp, 3.0);
    }

    #[test]
    fn composed_worse_everywhere() {
        let roi = RoiId::new("a", 1);
        let scores = arch().feasible_configs().into_iter().map(|cfg| {
            (
                cfg,
                if cfg.core == CoreType::Base {
                    1.0 + f64::from(cfg.threads)
                } else {
                    50.0
                },
            )
        });
        let d = decide(&roi, scores, &arch()).unwrap();
        assert_eq!(d.rule, Rule::BaseByThreshold);
        assert!(d.variation.unwrap() < 0.0);
        assert_eq!(d.chosen, d.best_base.cfg);
    }

    #[test]
    fn ties_go_to_enumeration_order() {
        let roi = RoiId::new("a", 1);
        let mut scores: Vec<_> = arch()
            .feasible_configs()
            .into_iter()
            .map(|c| (c, 7.0))
            .collect();
        scores.reverse();
        let d = decide(&roi, scores, &arch()).unwrap();
        assert_eq!(d.best_base.cfg.key(), (CoreType::Base, 1600, 1));
        assert_eq!(d.best_comp.cfg.key(), (CoreType::Composed, 1600, 1));
        assert_eq!(d.variation, Some(0.0));
        assert_eq!(d.rule, Rule::BaseByThreshold);
    }

    #[test]
    fn missing_side_is_an_error() {
        let roi = RoiId::new("a", 1);
        let err = decide(&roi, [(c(CoreType::Base, 2.0, 2), 1.0)], &arch()).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
        // infeasible composed entries do not count
        let err = decide(
            &roi,
            [
                (c(CoreType::Base, 2.0, 2), 1.0),
                (c(CoreType::Composed, 2.0, 6), 0.1),
            ],
            &arch(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn zero_base_edp_falls_back_to_base() {
        let roi = RoiId::new("a", 1);
        let d = decide(
            &roi,
            [
                (c(CoreType::Base, 2.0, 2), 0.0),
                (c(CoreType::Composed, 2.0, 2), 0.0),
            ],
            &arch(),
        )
        .unwrap();
        assert_eq!(d.variation, None);
        assert_eq!(d.rule, Rule::BaseByThreshold);
    }

    #[test]
    fn fig6_style_fractions() {
        let a = arch();
        let mut labels = vec![c(CoreType::Base, 2.4, 8); 10];
        labels.extend(vec![c(CoreType::Composed, 2.8, 4); 4]);
        labels.extend(vec![c(CoreType::Composed, 2.0, 3); 2]);
        let r = distribution(&labels, &a).unwrap();
        assert_eq!(r.class_fraction(ConfigClass::FullyBase), 0.625);
        assert_eq!(r.core_fraction(CoreType::Composed), 0.375);
        let total: f64 = r.cells.iter().map(|c| c.fraction).sum();
        assert!((total - 1.0).abs() < 1e-12);

        let same = distribution(&[c(CoreType::Base, 2.0, 3); 5], &a).unwrap();
        assert_eq!(same.cells.len(), 1);
        assert_eq!(same.cells[0].fraction, 1.0);

        assert!(distribution(&[], &a).is_err());
        assert!(distribution(&[c(CoreType::Composed, 2.0, 8)], &a).is_err());
    }

    #[test]
    fn decisions_csv_round_trip() {
        let roi = RoiId::new("radix", 2);
        let d = decide(
            &roi,
            [
                (c(CoreType::Base, 2.8, 8), 10.0),
                (c(CoreType::Composed, 2.4, 4), 5.0),
            ],
            &arch(),
        )
        .unwrap();
        let text = decisions_to_csv(std::slice::from_ref(&d));
        assert!(text
            .starts_with("workload,roi,core_type,freq_ghz,threads,predicted_edp,variation,rule\n"));
        assert!(
            text.contains("radix,2,comp,2.4,4,5.0,0.5,composed_by_threshold"),
            "{text}"
        );
        let back = read_decisions(text.as_bytes(), "d", &arch()).unwrap();
        assert_eq!(back, vec![(roi, d.chosen)]);
    }

    #[test]
    fn oracle_csv_reads_as_choices() {
        let roi = RoiId::new("fft", 1);
        let cfg = c(CoreType::Composed, 2.0, 3);
        let table = OracleTable::from_entries([OracleEntry::from_config(&roi, &cfg, 4.5)]);
        let back = read_decisions(table.to_csv_string().as_bytes(), "o", &arch()).unwrap();
        assert_eq!(back, vec![(roi, cfg)]);

        let bad = "workload,roi,core_type,freq_ghz,threads,edp\nfft,1,comp,2.0,8,1.0\n";
        assert!(matches!(
            read_decisions(bad.as_bytes(), "o", &arch()),
            Err(Error::Load { row: 1, .. })
        ));
    }
}
