//! Scenario configuration, invariant campaigns, reports and the command line.

mod campaign;
mod checks;
mod cli;

pub use campaign::{run_campaign, simulate, time_series, verify, Campaign, TimeSeriesRow};
pub use checks::{
    check_area_law, check_chen, check_deeper, check_exhaustion, check_mass_gain, check_ordering,
    check_plane_contraction, check_potential, check_uniqueness, fit_contraction, physical_factor, ContractionFit,
};
pub use cli::run_cli;

use crate::error::{domain, Error, Result};
use crate::flow::{maximal_time, ChartSpec, DtSchedule};
use crate::geometry::SurfaceKind;
use crate::measure::{MeasureSpec, Mollifier, TestFunction};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

pub const SCENARIO_VERSION: u32 = 1;
pub const REPORT_VERSION: u32 = 1;

/// Invariant checks a scenario can request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    AreaLaw,
    Chen,
    Ordering,
    MassGain,
    PlaneContraction,
    Uniqueness,
    Exhaustion,
    Potential,
    Deeper,
}

impl CheckKind {
    pub fn name(&self) -> &'static str {
        match self {
            CheckKind::AreaLaw => "area_law",
            CheckKind::Chen => "chen",
            CheckKind::Ordering => "ordering",
            CheckKind::MassGain => "mass_gain",
            CheckKind::PlaneContraction => "plane_contraction",
            CheckKind::Uniqueness => "uniqueness",
            CheckKind::Exhaustion => "exhaustion",
            CheckKind::Potential => "potential",
            CheckKind::Deeper => "deeper",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(name.to_string()))
            .map_err(|_| Error::Parse(format!("unknown check `{name}`")))
    }
}

/// Tolerances the checks are judged against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// `‖Δφ − u‖_∞` on the sphere.
    pub elliptic_spectral: f64,
    /// `C` in `‖Δ_hφ − u‖_∞ ≤ C·Δx²·‖u‖_∞` on Cartesian charts.
    pub elliptic_fd_factor: f64,
    /// `C` in the evolution residual bound `C·dt`.
    pub evolution_dt_factor: f64,
    /// Relative error of `∫ψ Δφ₀` against `∫ψ dμ`.
    pub weak_identity_rel: f64,
    /// Relative error of the fitted area slope on spectral and cylinder charts.
    pub area_slope_rel: f64,
    /// Relative error of the fitted area slope on Cartesian charts.
    pub area_fd_rel: f64,
    /// `C` in the Chen defects `≤ C·dt`.
    pub defect_dt_factor: f64,
    /// Relative ordering violation attributed to the nonlinear solver.
    pub ordering: f64,
    /// Relative violation of the decrease in `R` of exhaustion flows.
    pub exhaustion: f64,
    /// Sup-relative distance between approximating families at the finest level.
    pub uniqueness_gap: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            elliptic_spectral: 1e-6,
            elliptic_fd_factor: 5.0,
            evolution_dt_factor: 5.0,
            weak_identity_rel: 1e-2,
            area_slope_rel: 1e-3,
            area_fd_rel: 1e-2,
            defect_dt_factor: 10.0,
            ordering: 1e-8,
            exhaustion: 1e-9,
            uniqueness_gap: 5e-3,
        }
    }
}

/// Radii of `Vol_t(B_R) ≤ (t − s)η + Vol_s(B_R̃)` and the size of the `(s, t)` grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MassGainParams {
    pub r: f64,
    pub r_tilde: f64,
    pub grid: usize,
}

impl Default for MassGainParams {
    fn default() -> Self {
        Self { r: 1.0, r_tilde: 2.0, grid: 5 }
    }
}

/// Exponent, radius and frozen constant of the plane contraction estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractionParams {
    pub m: f64,
    pub radius: f64,
    /// `c₀(m)`; absent on calibration runs, which fit it.
    #[serde(default)]
    pub c0: Option<f64>,
}

/// Probe of the uniqueness comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeParams {
    /// Probe time `t*`; defaults to `t_end`.
    pub time: Option<f64>,
    /// Fields are compared on `B_radius(0)` of planar charts.
    pub radius: f64,
}

impl Default for ProbeParams {
    fn default() -> Self {
        Self { time: None, radius: 2.0 }
    }
}

/// A campaign: one measure, its approximations and the checks to run.
///
/// Level `i` smooths at `h_list[i]` and starts at `delta_list[i]`; a single
/// start time is shared by all levels. Every level runs once per kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_version")]
    pub version: u32,
    pub name: String,
    pub measure: MeasureSpec,
    pub chart: ChartSpec,
    pub h_list: Vec<f64>,
    pub delta_list: Vec<f64>,
    #[serde(default = "default_kernels")]
    pub kernels: Vec<Mollifier>,
    pub schedule: DtSchedule,
    #[serde(default)]
    pub snapshots: Vec<f64>,
    /// End of the analysed window.
    pub t_end: f64,
    /// Continue sphere flows past `t_end` until extinction.
    #[serde(default)]
    pub run_to_extinction: bool,
    pub checks: Vec<CheckKind>,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Smaller measure for the ordering and contraction checks.
    #[serde(default)]
    pub lower: Option<MeasureSpec>,
    /// Exhaustion radii on a common spacing `exhaustion_dx`.
    #[serde(default)]
    pub radii: Vec<f64>,
    #[serde(default)]
    pub exhaustion_dx: Option<f64>,
    #[serde(default)]
    pub mass_gain: MassGainParams,
    #[serde(default)]
    pub contraction: Option<ContractionParams>,
    #[serde(default)]
    pub probe: ProbeParams,
    /// Test functions of the weak identity; a default suite when empty.
    #[serde(default)]
    pub test_functions: Vec<TestFunction>,
    /// `ε` values of the deeper bound, in normalized sphere time.
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
}

fn default_version() -> u32 {
    SCENARIO_VERSION
}

fn default_kernels() -> Vec<Mollifier> {
    vec![Mollifier::Bump]
}

fn default_epsilons() -> Vec<f64> {
    vec![0.02, 0.01, 0.005]
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Number of approximation levels.
    pub fn levels(&self) -> usize {
        self.h_list.len()
    }

    /// `(h, δ)` of level `i`.
    pub fn level(&self, i: usize) -> (f64, f64) {
        let d = if self.delta_list.len() == 1 { self.delta_list[0] } else { self.delta_list[i] };
        (self.h_list[i], d)
    }

    pub fn requests(&self, check: CheckKind) -> bool {
        self.checks.contains(&check)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCENARIO_VERSION {
            return Err(Error::Parse(format!(
                "scenario version {} is not supported (expected {SCENARIO_VERSION})",
                self.version
            )));
        }
        self.measure.validate()?;
        if self.h_list.is_empty() || self.delta_list.is_empty() || self.kernels.is_empty() || self.checks.is_empty() {
            return Err(Error::Parse("h_list, delta_list, kernels and checks must be nonempty".into()));
        }
        if self.delta_list.len() != 1 && self.delta_list.len() != self.h_list.len() {
            return Err(Error::Parse(format!(
                "delta_list has {} entries; give one shared start time or one per smoothing scale ({})",
                self.delta_list.len(),
                self.h_list.len()
            )));
        }
        if self.h_list.iter().any(|h| !(*h > 0.0)) || self.delta_list.iter().any(|d| !(*d >= 0.0)) {
            return domain("smoothing scales must be positive and start times nonnegative");
        }
        let mut seen = self.checks.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.checks.len() {
            return Err(Error::Parse("a check is requested twice".into()));
        }
        let latest = (0..self.levels()).map(|i| self.level(i).1).fold(0.0, f64::max);
        if !(self.t_end > latest) {
            return domain(format!("t_end = {} must exceed every start time", self.t_end));
        }
        let whole = matches!(self.chart, ChartSpec::LogPolar { .. } | ChartSpec::Sphere { .. });
        if whole {
            let big_t = maximal_time(&self.measure, self.measure.surface);
            if big_t == 0.0 {
                return domain("T = 0, no flow exists");
            }
            if !(self.t_end < big_t) {
                return domain(format!("t_end = {} is not below the maximal time T = {big_t}", self.t_end));
            }
        }
        if self.run_to_extinction && self.measure.surface != SurfaceKind::Sphere {
            return domain("run_to_extinction applies to sphere scenarios");
        }
        if (self.requests(CheckKind::Ordering) || self.requests(CheckKind::PlaneContraction)) && self.lower.is_none() {
            return Err(Error::Parse("ordering and plane_contraction need a `lower` measure".into()));
        }
        if let Some(lower) = &self.lower {
            lower.validate()?;
            if lower.surface != self.measure.surface {
                return domain("the lower measure lives on a different surface");
            }
            if whole && maximal_time(lower, lower.surface) == 0.0 {
                return domain("T = 0 for the lower measure, no flow exists");
            }
        }
        if self.requests(CheckKind::PlaneContraction) {
            let c = self.contraction.ok_or_else(|| Error::Parse("plane_contraction needs `contraction`".into()))?;
            if !(c.m > 0.0 && c.m < 1.0 && c.radius > 1.0) {
                return domain(format!("contraction needs m ∈ (0, 1) and R > 1, got {c:?}"));
            }
        }
        if self.requests(CheckKind::Exhaustion) {
            if self.radii.len() < 2 || self.exhaustion_dx.is_none() {
                return Err(Error::Parse("exhaustion needs at least two radii and exhaustion_dx".into()));
            }
        }
        if self.requests(CheckKind::Uniqueness) {
            let mut k = self.kernels.clone();
            k.sort_by_key(|m| *m as u8);
            k.dedup();
            if k.len() < 2 || self.levels() < 2 {
                return Err(Error::Parse("uniqueness needs two distinct kernels and at least two levels".into()));
            }
        }
        if self.requests(CheckKind::Deeper) && (self.measure.surface != SurfaceKind::Sphere || self.epsilons.is_empty())
        {
            return Err(Error::Parse("the deeper bound needs a sphere scenario and nonempty epsilons".into()));
        }
        let mg = self.mass_gain;
        if !(mg.r > 0.0 && mg.r_tilde > mg.r && mg.grid >= 2) {
            return domain(format!("mass gain needs 0 < R < R̃ and a grid of at least 2 times, got {mg:?}"));
        }
        Ok(())
    }
}

/// Outcome of one check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// A hypothesis of the check does not hold; the reason is in `note`.
    Skipped,
}

/// Report entry of one check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckEntry {
    pub name: String,
    pub status: Status,
    pub measured: BTreeMap<String, f64>,
    /// Predicted values the measurements are compared with.
    pub prediction: BTreeMap<String, f64>,
    pub tolerance: f64,
    #[serde(default)]
    pub note: String,
}

impl CheckEntry {
    pub fn new(kind: CheckKind, tolerance: f64) -> Self {
        Self {
            name: kind.name().to_string(),
            status: Status::Pass,
            measured: BTreeMap::new(),
            prediction: BTreeMap::new(),
            tolerance,
            note: String::new(),
        }
    }

    pub fn measure(&mut self, key: &str, value: f64) -> &mut Self {
        self.measured.insert(key.to_string(), value);
        self
    }

    pub fn predict(&mut self, key: &str, value: f64) -> &mut Self {
        self.prediction.insert(key.to_string(), value);
        self
    }

    /// Marks the entry failed unless `ok`, appending `why` to the note.
    pub fn require(&mut self, ok: bool, why: impl AsRef<str>) -> &mut Self {
        if !ok {
            if self.status != Status::Skipped {
                self.status = Status::Fail;
            }
            self.add_note(why.as_ref());
        }
        self
    }

    pub fn skip(mut self, why: impl Into<String>) -> Self {
        self.status = Status::Skipped;
        self.note = why.into();
        self
    }

    pub fn failed(kind: CheckKind, tolerance: f64, err: &Error) -> Self {
        let mut e = Self::new(kind, tolerance);
        e.status = Status::Fail;
        e.note = err.to_string();
        e
    }

    fn add_note(&mut self, s: &str) {
        if !self.note.is_empty() {
            self.note.push_str("; ");
        }
        self.note.push_str(s);
    }

    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }
}

/// Results of a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: u32,
    pub scenario: String,
    pub entries: Vec<CheckEntry>,
    pub runtime_seconds: f64,
    pub threads: usize,
    pub trajectories: usize,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.entries.iter().all(CheckEntry::passed)
    }

    pub fn entry(&self, name: &str) -> Option<&CheckEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Report = serde_json::from_str(text)?;
        if r.version != REPORT_VERSION {
            return Err(Error::Parse(format!("report version {} is not supported", r.version)));
        }
        Ok(r)
    }

    /// One line per entry: status, name, measured values and note.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let tag = match e.status {
                Status::Pass => "PASS",
                Status::Fail => "FAIL",
                Status::Skipped => "SKIP",
            };
            let vals: Vec<String> = e.measured.iter().map(|(k, v)| format!("{k}={v:.4e}")).collect();
            out.push_str(&format!("{tag} {:<18} tol={:.1e} {}", e.name, e.tolerance, vals.join(" ")));
            if !e.note.is_empty() {
                out.push_str(&format!(" ({})", e.note));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests;
