//! Accuracy against hardware cost of the predictors.
//!
//! Costs are input data (latency, power and area of each predictor
//! synthesized in hardware). The shipped defaults live in `data/`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::check_header;
use crate::error::{Error, Result};
use crate::models::Algorithm;
use crate::scheduler::DistributionReport;

pub const COST_HEADER: [&str; 4] = ["algorithm", "latency_cycles", "power_w", "area_units"];
pub const ACCURACY_HEADER: [&str; 2] = ["algorithm", "accuracy_pct"];

const DEFAULT_COSTS: &str = include_str!("../data/hardware_costs.csv");
const DEFAULT_ACCURACY: &str = include_str!("../data/accuracy.csv");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cost {
    pub latency_cycles: u64,
    pub power_w: f64,
    pub area_units: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CostRecord {
    algorithm: String,
    latency_cycles: u64,
    power_w: f64,
    area_units: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CostTable {
    pub rows: BTreeMap<Algorithm, Cost>,
}

fn parse_algorithm(tag: &str, source: &str, row: usize) -> Result<Algorithm> {
    tag.parse().map_err(|e: Error| Error::Load {
        path: source.to_string(),
        row,
        reason: e.to_string(),
    })
}

impl CostTable {
    /// The shipped cost table.
    pub fn shipped() -> Self {
        Self::read_csv(DEFAULT_COSTS.as_bytes(), "<shipped costs>")
            .expect("shipped cost table is valid")
    }

    pub fn get(&self, algorithm: Algorithm) -> Option<&Cost> {
        self.rows.get(&algorithm)
    }

    pub fn read_csv<R: std::io::Read>(reader: R, source: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        check_header(&rdr.headers()?.clone(), &COST_HEADER, source)?;
        let mut rows = BTreeMap::new();
        for (i, rec) in rdr.deserialize::<CostRecord>().enumerate() {
            let row = i + 1;
            let load_err = |reason: String| Error::Load {
                path: source.to_string(),
                row,
                reason,
            };
            let rec = rec.map_err(|e| load_err(e.to_string()))?;
            let algorithm = parse_algorithm(&rec.algorithm, source, row)?;
            if rec.latency_cycles == 0
                || rec.area_units == 0
                || !(rec.power_w > 0.0 && rec.power_w.is_finite())
            {
                return Err(load_err("latency, power and area must be positive".into()));
            }
            let cost = Cost {
                latency_cycles: rec.latency_cycles,
                power_w: rec.power_w,
                area_units: rec.area_units,
            };
            if rows.insert(algorithm, cost).is_some() {
                return Err(load_err(format!("duplicate row for {algorithm}")));
            }
        }
        Ok(Self { rows })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, &path.display().to_string())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct AccuracyRecord {
    algorithm: String,
    accuracy_pct: f64,
}

/// Accuracy percent per algorithm, read from `algorithm,accuracy_pct` CSV.
pub fn read_accuracies<R: std::io::Read>(
    reader: R,
    source: &str,
) -> Result<BTreeMap<Algorithm, f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    check_header(&rdr.headers()?.clone(), &ACCURACY_HEADER, source)?;
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.deserialize::<AccuracyRecord>().enumerate() {
        let row = i + 1;
        let load_err = |reason: String| Error::Load {
            path: source.to_string(),
            row,
            reason,
        };
        let rec = rec.map_err(|e| load_err(e.to_string()))?;
        let algorithm = parse_algorithm(&rec.algorithm, source, row)?;
        if out.insert(algorithm, rec.accuracy_pct).is_some() {
            return Err(load_err(format!("duplicate row for {algorithm}")));
        }
    }
    Ok(out)
}

pub fn load_accuracies(path: impl AsRef<Path>) -> Result<BTreeMap<Algorithm, f64>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_accuracies(file, &path.display().to_string())
}

/// The shipped accuracy table. Only M5Tree has a published figure.
pub fn shipped_accuracies() -> BTreeMap<Algorithm, f64> {
    read_accuracies(DEFAULT_ACCURACY.as_bytes(), "<shipped accuracy>")
        .expect("shipped accuracy table is valid")
}

pub fn accuracies_to_csv(accuracies: &BTreeMap<Algorithm, f64>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(ACCURACY_HEADER).expect("writing to memory");
    for (a, pct) in accuracies {
        w.write_record([a.name().to_string(), pct.to_string()])
            .expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
}

/// Tidy `class,freq_ghz,count,fraction` rows of a distribution report.
pub fn distribution_to_csv(report: &DistributionReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for cell in &report.cells {
        w.serialize(cell).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub rank: usize,
    pub algorithm: Algorithm,
    pub accuracy_pct: f64,
    pub area_units: u64,
    pub ratio: f64,
    pub latency_cycles: u64,
    pub power_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffReport {
    /// Best accuracy per unit area first.
    pub ranking: Vec<TradeoffRow>,
}

impl TradeoffReport {
    pub fn order(&self) -> Vec<Algorithm> {
        self.ranking.iter().map(|r| r.algorithm).collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.ranking {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// Ranks algorithms by accuracy over area; ties go to the lower latency.
///
/// Cost rows without an accuracy are ignored.
pub fn tradeoff(
    accuracies: &BTreeMap<Algorithm, f64>,
    costs: &CostTable,
) -> Result<TradeoffReport> {
    if accuracies.is_empty() {
        return Err(Error::Domain(
            "trade-off needs at least one accuracy".into(),
        ));
    }
    let mut rows = Vec::with_capacity(accuracies.len());
    for (&algorithm, &accuracy_pct) in accuracies {
        if !(0.0..=100.0).contains(&accuracy_pct) {
            return Err(Error::Domain(format!(
                "accuracy of {algorithm} is {accuracy_pct}; expected a percentage in [0, 100]"
            )));
        }
        let cost = costs
            .get(algorithm)
            .ok_or_else(|| Error::Data(format!("cost table has no row for {algorithm}")))?;
        rows.push(TradeoffRow {
            rank: 0,
            algorithm,
            accuracy_pct,
            area_units: cost.area_units,
            ratio: accuracy_pct / cost.area_units as f64,
            latency_cycles: cost.latency_cycles,
            power_w: cost.power_w,
        });
    }
    rows.sort_by(|a, b| {
        b.ratio
            .total_cmp(&a.ratio)
            .then(a.latency_cycles.cmp(&b.latency_cycles))
            .then(a.algorithm.cmp(&b.algorithm))
    });
    for (i, row) in rows.iter_mut().enumerate() {
        row.rank = i + 1;
    }
    Ok(TradeoffReport { ranking: rows })
}
