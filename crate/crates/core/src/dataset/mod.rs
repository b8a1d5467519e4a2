//! Per-ROI measurements, EDP, and the CSV formats they travel in.

mod synthetic;
mod table;

pub use synthetic::{generate_synthetic, LatentRoi, Range, SyntheticModel, SyntheticSpec};
pub use table::{build_training_table, split, split_rois, TrainRow, TrainTable, CONFIG_FEATURES};

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config_space::{
    freq_mhz, Architecture, ConfigKey, Configuration, CoreType, OperatingPoint,
};
use crate::error::{Error, Result};

/// The twelve hardware performance counters, in schema order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Counter {
    L1dAccess,
    L1dMiss,
    L1iAccess,
    L1iMiss,
    L2Access,
    L2Miss,
    ItlbMiss,
    DtlbMiss,
    IntIssue,
    FpIssue,
    BrInst,
    BrMispred,
}

pub const N_COUNTERS: usize = 12;

impl Counter {
    pub const ALL: [Counter; N_COUNTERS] = [
        Counter::L1dAccess,
        Counter::L1dMiss,
        Counter::L1iAccess,
        Counter::L1iMiss,
        Counter::L2Access,
        Counter::L2Miss,
        Counter::ItlbMiss,
        Counter::DtlbMiss,
        Counter::IntIssue,
        Counter::FpIssue,
        Counter::BrInst,
        Counter::BrMispred,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Counter::L1dAccess => "l1d_access",
            Counter::L1dMiss => "l1d_miss",
            Counter::L1iAccess => "l1i_access",
            Counter::L1iMiss => "l1i_miss",
            Counter::L2Access => "l2_access",
            Counter::L2Miss => "l2_miss",
            Counter::ItlbMiss => "itlb_miss",
            Counter::DtlbMiss => "dtlb_miss",
            Counter::IntIssue => "int_issue",
            Counter::FpIssue => "fp_issue",
            Counter::BrInst => "br_inst",
            Counter::BrMispred => "br_mispred",
        }
    }

    pub fn from_index(i: usize) -> Option<Counter> {
        Self::ALL.get(i).copied()
    }
}

/// Counter values, indexed by [`Counter`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HpcVector(pub [f64; N_COUNTERS]);

impl HpcVector {
    pub fn get(&self, c: Counter) -> f64 {
        self.0[c.index()]
    }

    pub fn values(&self) -> &[f64; N_COUNTERS] {
        &self.0
    }

    pub fn select(&self, indices: &[usize]) -> Vec<f64> {
        indices.iter().map(|&i| self.0[i]).collect()
    }

    /// Non-negative, finite, and each miss count bounded by its access count.
    pub fn validate(&self) -> std::result::Result<(), String> {
        for c in Counter::ALL {
            let v = self.get(c);
            if !v.is_finite() || v < 0.0 {
                return Err(format!("{} must be finite and >= 0, got {v}", c.name()));
            }
        }
        for (miss, access) in [
            (Counter::L1dMiss, Counter::L1dAccess),
            (Counter::L2Miss, Counter::L2Access),
            (Counter::BrMispred, Counter::BrInst),
        ] {
            if self.get(miss) > self.get(access) {
                return Err(format!(
                    "{} ({}) exceeds {} ({})",
                    miss.name(),
                    self.get(miss),
                    access.name(),
                    self.get(access)
                ));
            }
        }
        Ok(())
    }
}

/// Energy-delay product in joule-seconds.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdpValue(pub f64);

impl EdpValue {
    pub fn get(self) -> f64 {
        self.0
    }
}

impl fmt::Display for EdpValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `power × time²`.
pub fn edp(time_s: f64, power_w: f64) -> Result<EdpValue> {
    if !(time_s > 0.0 && time_s.is_finite()) {
        return Err(Error::Domain(format!(
            "time must be positive, got {time_s}"
        )));
    }
    if !(power_w > 0.0 && power_w.is_finite()) {
        return Err(Error::Domain(format!(
            "power must be positive, got {power_w}"
        )));
    }
    Ok(EdpValue(power_w * time_s * time_s))
}

/// A parallel region: workload name plus 1-based region index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RoiId {
    pub workload: String,
    pub roi: u32,
}

impl RoiId {
    pub fn new(workload: impl Into<String>, roi: u32) -> Self {
        Self {
            workload: workload.into(),
            roi,
        }
    }
}

impl fmt::Display for RoiId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.workload, self.roi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiMeasurement {
    pub id: RoiId,
    pub cfg: Configuration,
    pub time_s: f64,
    pub power_w: f64,
    pub hpcs: HpcVector,
}

impl RoiMeasurement {
    pub fn edp(&self) -> EdpValue {
        EdpValue(self.power_w * self.time_s * self.time_s)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.id.roi == 0 {
            return Err("roi index must be >= 1".into());
        }
        if self.cfg.threads == 0 {
            return Err("threads must be >= 1".into());
        }
        if !(self.cfg.op.freq_ghz > 0.0 && self.cfg.op.voltage_v > 0.0) {
            return Err("frequency and voltage must be positive".into());
        }
        if !(self.time_s > 0.0 && self.time_s.is_finite()) {
            return Err(format!("time_s must be > 0, got {}", self.time_s));
        }
        if !(self.power_w > 0.0 && self.power_w.is_finite()) {
            return Err(format!("power_w must be > 0, got {}", self.power_w));
        }
        self.hpcs.validate()
    }
}

pub const MEASUREMENT_HEADER: [&str; 20] = [
    "workload",
    "roi",
    "core_type",
    "freq_ghz",
    "voltage_v",
    "threads",
    "time_s",
    "power_w",
    "l1d_access",
    "l1d_miss",
    "l1i_access",
    "l1i_miss",
    "l2_access",
    "l2_miss",
    "itlb_miss",
    "dtlb_miss",
    "int_issue",
    "fp_issue",
    "br_inst",
    "br_mispred",
];

pub const ORACLE_HEADER: [&str; 6] = ["workload", "roi", "core_type", "freq_ghz", "threads", "edp"];

#[derive(Debug, Serialize, Deserialize)]
struct MeasurementRecord {
    workload: String,
    roi: u32,
    core_type: String,
    freq_ghz: f64,
    voltage_v: f64,
    threads: u32,
    time_s: f64,
    power_w: f64,
    l1d_access: f64,
    l1d_miss: f64,
    l1i_access: f64,
    l1i_miss: f64,
    l2_access: f64,
    l2_miss: f64,
    itlb_miss: f64,
    dtlb_miss: f64,
    int_issue: f64,
    fp_issue: f64,
    br_inst: f64,
    br_mispred: f64,
}

impl From<&RoiMeasurement> for MeasurementRecord {
    fn from(m: &RoiMeasurement) -> Self {
        let h = &m.hpcs.0;
        Self {
            workload: m.id.workload.clone(),
            roi: m.id.roi,
            core_type: m.cfg.core.label().to_string(),
            freq_ghz: m.cfg.op.freq_ghz,
            voltage_v: m.cfg.op.voltage_v,
            threads: m.cfg.threads,
            time_s: m.time_s,
            power_w: m.power_w,
            l1d_access: h[0],
            l1d_miss: h[1],
            l1i_access: h[2],
            l1i_miss: h[3],
            l2_access: h[4],
            l2_miss: h[5],
            itlb_miss: h[6],
            dtlb_miss: h[7],
            int_issue: h[8],
            fp_issue: h[9],
            br_inst: h[10],
            br_mispred: h[11],
        }
    }
}

impl MeasurementRecord {
    fn into_measurement(self) -> std::result::Result<RoiMeasurement, String> {
        let core: CoreType = self.core_type.parse().map_err(|e: Error| e.to_string())?;
        Ok(RoiMeasurement {
            id: RoiId::new(self.workload, self.roi),
            cfg: Configuration::new(
                core,
                OperatingPoint::new(self.freq_ghz, self.voltage_v),
                self.threads,
            ),
            time_s: self.time_s,
            power_w: self.power_w,
            hpcs: HpcVector([
                self.l1d_access,
                self.l1d_miss,
                self.l1i_access,
                self.l1i_miss,
                self.l2_access,
                self.l2_miss,
                self.itlb_miss,
                self.dtlb_miss,
                self.int_issue,
                self.fp_issue,
                self.br_inst,
                self.br_mispred,
            ]),
        })
    }
}

/// Validated measurements grouped by ROI. Samples keep their input order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    rois: BTreeMap<RoiId, Vec<RoiMeasurement>>,
}

impl Dataset {
    pub fn from_measurements(
        measurements: impl IntoIterator<Item = RoiMeasurement>,
    ) -> Result<Self> {
        let mut ds = Dataset::default();
        let mut seen: HashSet<(RoiId, ConfigKey)> = HashSet::new();
        for (i, m) in measurements.into_iter().enumerate() {
            let row = i + 1;
            m.validate().map_err(|reason| Error::Load {
                path: "<memory>".into(),
                row,
                reason,
            })?;
            if !seen.insert((m.id.clone(), m.cfg.key())) {
                return Err(Error::Load {
                    path: "<memory>".into(),
                    row,
                    reason: format!("duplicate measurement for {} at {}", m.id, m.cfg),
                });
            }
            ds.rois.entry(m.id.clone()).or_default().push(m);
        }
        Ok(ds)
    }

    pub fn roi_ids(&self) -> impl Iterator<Item = &RoiId> {
        self.rois.keys()
    }

    pub fn n_rois(&self) -> usize {
        self.rois.len()
    }

    pub fn n_samples(&self) -> usize {
        self.rois.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rois.is_empty()
    }

    pub fn samples(&self, roi: &RoiId) -> Option<&[RoiMeasurement]> {
        self.rois.get(roi).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&RoiId, &[RoiMeasurement])> {
        self.rois.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn measurements(&self) -> impl Iterator<Item = &RoiMeasurement> {
        self.rois.values().flatten()
    }

    pub fn find(&self, roi: &RoiId, key: ConfigKey) -> Option<&RoiMeasurement> {
        self.samples(roi)?.iter().find(|m| m.cfg.key() == key)
    }

    /// The profiling run (composed, max frequency, all composed cores).
    pub fn aggressive(&self, roi: &RoiId, arch: &Architecture) -> Result<&RoiMeasurement> {
        let agg = arch
            .aggressive_config()
            .ok_or_else(|| Error::validation("architecture", "dvfs table must not be empty"))?;
        self.find(roi, agg.key()).ok_or_else(|| {
            Error::Data(format!(
                "ROI {roi} has no measurement at the aggressive configuration {agg}"
            ))
        })
    }

    /// Keeps only the listed ROIs.
    pub fn subset<'a>(&self, rois: impl IntoIterator<Item = &'a RoiId>) -> Dataset {
        let rois = rois
            .into_iter()
            .filter_map(|id| self.rois.get(id).map(|v| (id.clone(), v.clone())))
            .collect();
        Dataset { rois }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, &path.display().to_string())
    }

    pub fn read_csv<R: std::io::Read>(reader: R, source: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        check_header(&headers, &MEASUREMENT_HEADER, source)?;

        let mut ds = Dataset::default();
        let mut seen: HashSet<(RoiId, ConfigKey)> = HashSet::new();
        for (i, record) in rdr.records().enumerate() {
            let row = i + 1;
            let load_err = |reason: String| Error::Load {
                path: source.to_string(),
                row,
                reason,
            };
            let record = record.map_err(|e| load_err(e.to_string()))?;
            let rec: MeasurementRecord = record
                .deserialize(Some(&headers))
                .map_err(|e| load_err(e.to_string()))?;
            let m = rec.into_measurement().map_err(load_err)?;
            m.validate().map_err(load_err)?;
            if !seen.insert((m.id.clone(), m.cfg.key())) {
                return Err(load_err(format!(
                    "duplicate measurement for ({}, {}, {})",
                    m.id.workload, m.id.roi, m.cfg
                )));
            }
            ds.rois.entry(m.id.clone()).or_default().push(m);
        }
        Ok(ds)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(writer);
        w.write_record(MEASUREMENT_HEADER)?;
        for m in self.measurements() {
            w.serialize(MeasurementRecord::from(m))?;
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

pub(crate) fn check_header(
    headers: &csv::StringRecord,
    expected: &[&str],
    source: &str,
) -> Result<()> {
    let got: Vec<&str> = headers.iter().collect();
    if got == expected {
        return Ok(());
    }
    let reason = if let Some(missing) = expected.iter().find(|c| !got.contains(c)) {
        format!("missing column `{missing}`")
    } else if let Some(extra) = got.iter().find(|c| !expected.contains(c)) {
        format!("unexpected column `{extra}`")
    } else {
        format!("columns out of order; expected `{}`", expected.join(","))
    };
    Err(Error::Load {
        path: source.to_string(),
        row: 0,
        reason,
    })
}

/// Ground-truth best configuration of one ROI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleEntry {
    pub workload: String,
    pub roi: u32,
    pub core_type: CoreType,
    pub freq_ghz: f64,
    pub threads: u32,
    pub edp: f64,
}

impl OracleEntry {
    pub fn from_config(id: &RoiId, cfg: &Configuration, edp: f64) -> Self {
        Self {
            workload: id.workload.clone(),
            roi: id.roi,
            core_type: cfg.core,
            freq_ghz: cfg.op.freq_ghz,
            threads: cfg.threads,
            edp,
        }
    }

    pub fn id(&self) -> RoiId {
        RoiId::new(self.workload.clone(), self.roi)
    }

    pub fn key(&self) -> ConfigKey {
        (self.core_type, freq_mhz(self.freq_ghz), self.threads)
    }

    /// The configuration this entry names on `arch`.
    pub fn config(&self, arch: &Architecture) -> Result<Configuration> {
        Ok(Configuration::new(
            self.core_type,
            arch.operating_point(self.freq_ghz)?,
            self.threads,
        ))
    }
}

#[derive(Serialize, Deserialize)]
struct OracleRecord {
    workload: String,
    roi: u32,
    core_type: String,
    freq_ghz: f64,
    threads: u32,
    edp: f64,
}

/// Per-ROI optimum, ordered by ROI.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleTable {
    entries: BTreeMap<RoiId, OracleEntry>,
}

impl OracleTable {
    pub fn from_entries(entries: impl IntoIterator<Item = OracleEntry>) -> Self {
        Self {
            entries: entries.into_iter().map(|e| (e.id(), e)).collect(),
        }
    }

    pub fn get(&self, roi: &RoiId) -> Option<&OracleEntry> {
        self.entries.get(roi)
    }

    pub fn entries(&self) -> impl Iterator<Item = &OracleEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, &path.display().to_string())
    }

    pub fn read_csv<R: std::io::Read>(reader: R, source: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        check_header(&headers, &ORACLE_HEADER, source)?;
        let mut entries = BTreeMap::new();
        for (i, record) in rdr.deserialize::<OracleRecord>().enumerate() {
            let load_err = |reason: String| Error::Load {
                path: source.to_string(),
                row: i + 1,
                reason,
            };
            let r = record.map_err(|e| load_err(e.to_string()))?;
            let core_type: CoreType = r
                .core_type
                .parse()
                .map_err(|e: Error| load_err(e.to_string()))?;
            let e = OracleEntry {
                workload: r.workload,
                roi: r.roi,
                core_type,
                freq_ghz: r.freq_ghz,
                threads: r.threads,
                edp: r.edp,
            };
            if entries.insert(e.id(), e).is_some() {
                return Err(load_err("duplicate ROI".into()));
            }
        }
        Ok(Self { entries })
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(writer);
        w.write_record(ORACLE_HEADER)?;
        for e in self.entries.values() {
            w.serialize(OracleRecord {
                workload: e.workload.clone(),
                roi: e.roi,
                core_type: e.core_type.label().to_string(),
                freq_ghz: e.freq_ghz,
                threads: e.threads,
                edp: e.edp,
            })?;
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
