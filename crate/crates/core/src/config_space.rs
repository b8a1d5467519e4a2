//! The tuning space: core type, paired voltage/frequency operating points and
//! thread count, plus feasibility and classification against a composite-cores
//! machine.
//!
//! Voltage is not an independent axis. Each DVFS table pairs exactly one
//! voltage with each frequency, so the space is `2 × |dvfs| × max_threads`.

use std::cmp::Ordering;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of base cores fused into one composed core.
pub const COMPOSITION_RATIO: u32 = 2;

/// Default share of EDP improvement that composing must deliver.
pub const DEFAULT_VARIATION_THRESHOLD: f64 = 0.20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CoreType {
    Base,
    Composed,
}

impl CoreType {
    pub const ALL: [CoreType; 2] = [CoreType::Base, CoreType::Composed];

    /// Short label used in CSV files.
    pub fn label(self) -> &'static str {
        match self {
            CoreType::Base => "base",
            CoreType::Composed => "comp",
        }
    }
}

impl fmt::Display for CoreType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for CoreType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(CoreType::Base),
            "comp" => Ok(CoreType::Composed),
            other => Err(Error::validation(
                "core type",
                format!("expected `base` or `comp`, got `{other}`"),
            )),
        }
    }
}

/// Frequency rounded to whole MHz; used for equality and ordering so that
/// values parsed from text compare equal to table entries.
pub fn freq_mhz(freq_ghz: f64) -> u32 {
    (freq_ghz * 1000.0).round() as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub freq_ghz: f64,
    pub voltage_v: f64,
}

impl OperatingPoint {
    pub fn new(freq_ghz: f64, voltage_v: f64) -> Self {
        Self {
            freq_ghz,
            voltage_v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub core: CoreType,
    pub op: OperatingPoint,
    pub threads: u32,
}

/// Total order used for enumeration and tie-breaking:
/// core (Base first), then frequency ascending, then threads ascending.
pub type ConfigKey = (CoreType, u32, u32);

impl Configuration {
    pub fn new(core: CoreType, op: OperatingPoint, threads: u32) -> Self {
        Self { core, op, threads }
    }

    pub fn freq_ghz(&self) -> f64 {
        self.op.freq_ghz
    }

    pub fn key(&self) -> ConfigKey {
        (self.core, freq_mhz(self.op.freq_ghz), self.threads)
    }

    /// Model-input encoding: core as 0/1, frequency in GHz, threads.
    pub fn encoding(&self) -> [f64; 3] {
        let core = match self.core {
            CoreType::Base => 0.0,
            CoreType::Composed => 1.0,
        };
        [core, self.op.freq_ghz, f64::from(self.threads)]
    }

    pub fn enumeration_cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}GHz/{}T", self.core, self.op.freq_ghz, self.threads)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfigClass {
    FullyBase,
    PartiallyBase,
    FullyComposed,
    PartiallyComposed,
}

impl ConfigClass {
    pub const ALL: [ConfigClass; 4] = [
        ConfigClass::FullyBase,
        ConfigClass::PartiallyBase,
        ConfigClass::FullyComposed,
        ConfigClass::PartiallyComposed,
    ];

    pub fn core(self) -> CoreType {
        match self {
            ConfigClass::FullyBase | ConfigClass::PartiallyBase => CoreType::Base,
            ConfigClass::FullyComposed | ConfigClass::PartiallyComposed => CoreType::Composed,
        }
    }
}

impl fmt::Display for ConfigClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ConfigClass::FullyBase => "fully_base",
            ConfigClass::PartiallyBase => "partially_base",
            ConfigClass::FullyComposed => "fully_composed",
            ConfigClass::PartiallyComposed => "partially_composed",
        };
        f.write_str(s)
    }
}

/// A composite-cores machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ArchitectureDoc")]
pub struct Architecture {
    pub n_base: u32,
    pub n_composed: u32,
    pub dvfs: Vec<OperatingPoint>,
    pub variation_threshold: f64,
}

#[derive(Deserialize)]
struct ArchitectureDoc {
    n_base: u32,
    n_composed: u32,
    dvfs: Vec<OperatingPoint>,
    #[serde(default = "default_threshold")]
    variation_threshold: f64,
}

fn default_threshold() -> f64 {
    DEFAULT_VARIATION_THRESHOLD
}

impl TryFrom<ArchitectureDoc> for Architecture {
    type Error = Error;

    fn try_from(doc: ArchitectureDoc) -> Result<Self> {
        Architecture::new(
            doc.n_base,
            doc.n_composed,
            doc.dvfs,
            doc.variation_threshold,
        )
    }
}

/// The 1.6–2.8 GHz sweep in 400 MHz steps at 0.7–1.0 V.
pub fn default_dvfs() -> Vec<OperatingPoint> {
    vec![
        OperatingPoint::new(1.6, 0.7),
        OperatingPoint::new(2.0, 0.8),
        OperatingPoint::new(2.4, 0.9),
        OperatingPoint::new(2.8, 1.0),
    ]
}

impl Default for Architecture {
    fn default() -> Self {
        Self::eight_base()
    }
}

impl Architecture {
    /// Validates every invariant and names the first one violated.
    pub fn new(
        n_base: u32,
        n_composed: u32,
        dvfs: Vec<OperatingPoint>,
        variation_threshold: f64,
    ) -> Result<Self> {
        let arch = Self {
            n_base,
            n_composed,
            dvfs,
            variation_threshold,
        };
        arch.validate()?;
        Ok(arch)
    }

    /// 8 base cores, 4 composed cores, default DVFS table.
    pub fn eight_base() -> Self {
        Self {
            n_base: 8,
            n_composed: 4,
            dvfs: default_dvfs(),
            variation_threshold: DEFAULT_VARIATION_THRESHOLD,
        }
    }

    /// 4 base cores, 2 composed cores, default DVFS table.
    pub fn four_base() -> Self {
        Self {
            n_base: 4,
            n_composed: 2,
            dvfs: default_dvfs(),
            variation_threshold: DEFAULT_VARIATION_THRESHOLD,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| Err(Error::validation("architecture", reason));
        if self.n_base == 0 {
            return invalid("n_base must be at least 1".into());
        }
        if !self.n_base.is_multiple_of(COMPOSITION_RATIO)
            || self.n_composed * COMPOSITION_RATIO != self.n_base
        {
            return invalid(format!(
                "n_composed must equal n_base / {COMPOSITION_RATIO} (got n_base={}, n_composed={})",
                self.n_base, self.n_composed
            ));
        }
        if self.dvfs.is_empty() {
            return invalid("dvfs table must not be empty".into());
        }
        for op in &self.dvfs {
            if !(op.freq_ghz.is_finite() && op.freq_ghz > 0.0) {
                return invalid(format!(
                    "dvfs frequency must be positive, got {}",
                    op.freq_ghz
                ));
            }
            if !(op.voltage_v.is_finite() && op.voltage_v > 0.0) {
                return invalid(format!(
                    "dvfs voltage must be positive, got {}",
                    op.voltage_v
                ));
            }
        }
        for pair in self.dvfs.windows(2) {
            if freq_mhz(pair[1].freq_ghz) <= freq_mhz(pair[0].freq_ghz) {
                return invalid("dvfs must be sorted by strictly ascending frequency".into());
            }
            if pair[1].voltage_v <= pair[0].voltage_v {
                return invalid("dvfs voltage must strictly increase with frequency".into());
            }
        }
        if !(self.variation_threshold > 0.0 && self.variation_threshold < 1.0) {
            return invalid(format!(
                "variation_threshold must lie in (0, 1), got {}",
                self.variation_threshold
            ));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("architecture serializes")
    }

    pub fn max_threads(&self, core: CoreType) -> u32 {
        match core {
            CoreType::Base => self.n_base,
            CoreType::Composed => self.n_composed,
        }
    }

    pub fn max_freq(&self) -> Option<OperatingPoint> {
        self.dvfs.last().copied()
    }

    /// Composed core, highest frequency, every composed core busy.
    pub fn aggressive_config(&self) -> Option<Configuration> {
        self.max_freq()
            .map(|op| Configuration::new(CoreType::Composed, op, self.n_composed))
    }

    /// Full space with `max_threads = n_base`.
    pub fn configs(&self) -> Vec<Configuration> {
        enumerate_configs(self, self.n_base).unwrap_or_default()
    }

    /// The full space filtered by [`feasible`].
    pub fn feasible_configs(&self) -> Vec<Configuration> {
        self.configs()
            .into_iter()
            .filter(|c| feasible(c, self))
            .collect()
    }

    /// Finds the table entry for a frequency.
    pub fn operating_point(&self, freq_ghz: f64) -> Result<OperatingPoint> {
        let mhz = freq_mhz(freq_ghz);
        self.dvfs
            .iter()
            .find(|op| freq_mhz(op.freq_ghz) == mhz)
            .copied()
            .ok_or_else(|| {
                Error::Lookup(format!("frequency {freq_ghz} GHz is not in the DVFS table"))
            })
    }
}

/// Every (core, operating point, threads) combination in enumeration order.
pub fn enumerate_configs(arch: &Architecture, max_threads: u32) -> Result<Vec<Configuration>> {
    if arch.dvfs.is_empty() {
        return Err(Error::validation(
            "architecture",
            "dvfs table must not be empty",
        ));
    }
    if max_threads == 0 {
        return Err(Error::Domain("max_threads must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(CoreType::ALL.len() * arch.dvfs.len() * max_threads as usize);
    for core in CoreType::ALL {
        for op in &arch.dvfs {
            for threads in 1..=max_threads {
                out.push(Configuration::new(core, *op, threads));
            }
        }
    }
    Ok(out)
}

/// One thread per core: the thread count may not exceed the cores of the chosen type.
pub fn feasible(cfg: &Configuration, arch: &Architecture) -> bool {
    cfg.threads >= 1 && cfg.threads <= arch.max_threads(cfg.core)
}

pub fn classify_config(cfg: &Configuration, arch: &Architecture) -> Result<ConfigClass> {
    if !feasible(cfg, arch) {
        return Err(Error::Domain(format!(
            "configuration {cfg} is infeasible on {}B/{}C",
            arch.n_base, arch.n_composed
        )));
    }
    let full = cfg.threads == arch.max_threads(cfg.core);
    Ok(match (cfg.core, full) {
        (CoreType::Base, true) => ConfigClass::FullyBase,
        (CoreType::Base, false) => ConfigClass::PartiallyBase,
        (CoreType::Composed, true) => ConfigClass::FullyComposed,
        (CoreType::Composed, false) => ConfigClass::PartiallyComposed,
    })
}

pub fn dvfs_voltage(freq_ghz: f64, arch: &Architecture) -> Result<f64> {
    arch.operating_point(freq_ghz).map(|op| op.voltage_v)
}
