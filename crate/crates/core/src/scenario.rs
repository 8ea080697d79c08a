//! Corridor scenario model: vehicle classes, stations, segments, demand,
//! routing tables and detector sites, plus loading and validation.
//!
//! A scenario file is a nested key-value document (TOML; a structurally
//! equivalent JSON form is also accepted). The corridor is a single chain
//!
//! ```text
//! source -> segment -> station -> segment -> station -> ... -> sink
//! ```
//!
//! beginning with an entry segment and ending with either a segment or a
//! station. Validation accumulates every violated invariant with a field
//! path instead of failing on the first, so a fixture can be repaired in
//! one pass.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// 1-based lane index within a station.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LaneId(pub u32);

impl LaneId {
    /// Zero-based index for slice access.
    pub fn idx(self) -> usize {
        (self.0 - 1) as usize
    }

    pub fn from_idx(idx: usize) -> Self {
        LaneId(idx as u32 + 1)
    }
}

impl fmt::Display for LaneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Vehicle class identifiers.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum VehicleClassId {
    #[serde(rename = "RHV")]
    Rhv,
    Tourist,
}

impl fmt::Display for VehicleClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VehicleClassId::Rhv => write!(f, "RHV"),
            VehicleClassId::Tourist => write!(f, "Tourist"),
        }
    }
}

/// A vehicle class and its physical/route properties. `effective_length_m`
/// is vehicle length plus standstill gap and is what queue storage accounts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleClass {
    pub id: VehicleClassId,
    pub effective_length_m: f64,
    pub visits_weighbridge: bool,
    pub visits_tourist_checkin: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StationKind {
    PassportCheck,
    Weighbridge,
    Ticketing,
    SecurityCheck,
}

/// Service-time distribution at a station bay. All samples are strictly
/// positive; the truncated normal rejection-samples until the draw is > 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ServiceDistribution {
    NormalTruncated { mean_s: f64, sd_s: f64 },
    Deterministic { value_s: f64 },
    Exponential { mean_s: f64 },
}

/// Station service model: the base distribution plus an optional random
/// security check applied to a fraction of vehicles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceModel {
    pub distribution: ServiceDistribution,
    #[serde(default)]
    pub security_check_probability: f64,
    #[serde(default)]
    pub security_check_delay_s: f64,
}

/// How vehicles queue at a station: one FIFO queue per lane (lane choice
/// applies), or a single shared FIFO feeding all bays (first idle bay
/// serves the head; used for queueing-theory oracle scenarios).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QueueDiscipline {
    #[default]
    PerLane,
    Shared,
}

/// A multi-lane service station. `admissible` maps each class to the 1-based
/// lane indices it may use; a missing or empty entry means the class passes
/// the station without stopping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Station {
    pub id: String,
    pub kind: StationKind,
    pub lane_count: u32,
    /// Meters of queue storage per lane.
    pub approach_capacity_m: f64,
    pub service: ServiceModel,
    #[serde(default)]
    pub queue_discipline: QueueDiscipline,
    #[serde(default)]
    pub admissible: BTreeMap<VehicleClassId, Vec<u32>>,
}

/// A directed road link between two chain nodes ("source", "sink" or a
/// station id).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub id: String,
    pub from: String,
    pub to: String,
    pub free_flow_time_s: f64,
    pub storage_capacity_m: f64,
}

fn default_bin_width() -> f64 {
    120.0
}

/// Demand as per-bin vehicle counts per class. Counts are parsed as signed
/// integers so negative values surface as validation errors naming the bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandSpec {
    #[serde(default = "default_bin_width")]
    pub bin_width_s: f64,
    pub counts: BTreeMap<VehicleClassId, Vec<i64>>,
}

/// Flow-band labels, ordered by the rates they cover.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum FlowBandLabel {
    Low,
    Medium,
    High,
    VeryHigh,
}

impl fmt::Display for FlowBandLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowBandLabel::Low => write!(f, "low"),
            FlowBandLabel::Medium => write!(f, "medium"),
            FlowBandLabel::High => write!(f, "high"),
            FlowBandLabel::VeryHigh => write!(f, "very_high"),
        }
    }
}

impl std::str::FromStr for FlowBandLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "low" => Ok(FlowBandLabel::Low),
            "medium" => Ok(FlowBandLabel::Medium),
            "high" => Ok(FlowBandLabel::High),
            "very_high" => Ok(FlowBandLabel::VeryHigh),
            other => Err(format!("unknown flow band label {other:?}")),
        }
    }
}

/// One flow band of the routing/reference tables: observed lane shares for
/// rates in this band plus the observed mean trip time used as the
/// comparison reference. `max_rate_veh_h = None` marks the open-ended top
/// band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandSpec {
    pub label: FlowBandLabel,
    pub max_rate_veh_h: Option<f64>,
    pub shares: Vec<f64>,
    pub reference_trip_mean_s: f64,
}

/// Agent (driver) decision parameters used by the agent routing policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentProfileSpec {
    /// Permutation of the decision station's 1-based lane indices, most
    /// preferred first.
    pub preference: Vec<u32>,
    pub switch_threshold: u32,
    /// Queue state is observed only at the decision point.
    #[serde(default = "default_true")]
    pub lookahead: bool,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

fn default_true() -> bool {
    true
}

fn default_weight() -> f64 {
    1.0
}

/// Lane-routing configuration: the station where the policy under test
/// decides, the all-flows average share table, the per-band share tables,
/// and the agent profile mix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoutingSection {
    pub decision_station: String,
    pub average_shares: Vec<f64>,
    #[serde(default)]
    pub bands: Vec<BandSpec>,
    #[serde(default)]
    pub agent_profiles: Vec<AgentProfileSpec>,
}

/// Trip-time measurement endpoints, as measurement-point strings
/// (`entry`, `exit`, `enter:<station>`, `exit:<station>`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSection {
    pub trip_from: String,
    pub trip_to: String,
}

/// Per-vehicle wireless device count probabilities (0, 1 or 2 devices).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceCountDistribution {
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
}

impl Default for DeviceCountDistribution {
    fn default() -> Self {
        DeviceCountDistribution {
            p0: 0.25,
            p1: 0.60,
            p2: 0.15,
        }
    }
}

/// A partial-detection monitoring site on the corridor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    pub id: String,
    /// Measurement-point string, e.g. `exit:passport`.
    pub location: String,
    pub detection_probability: f64,
    #[serde(default)]
    pub device_count_distribution: DeviceCountDistribution,
}

fn default_comparison_duration() -> f64 {
    3600.0
}

/// Flow rates and per-rate run length for the policy-comparison experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonSection {
    pub rates_veh_h: Vec<f64>,
    #[serde(default = "default_comparison_duration")]
    pub duration_s: f64,
}

impl Default for ComparisonSection {
    fn default() -> Self {
        ComparisonSection {
            rates_veh_h: Vec::new(),
            duration_s: default_comparison_duration(),
        }
    }
}

fn default_drain() -> bool {
    true
}

fn default_warmup() -> f64 {
    900.0
}

/// Scenario header: id, run horizon and post-demand drain behaviour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioMeta {
    pub id: String,
    pub horizon_s: f64,
    #[serde(default = "default_drain")]
    pub drain: bool,
    #[serde(default = "default_warmup")]
    pub warmup_s: f64,
}

/// A complete parsed scenario document. `validate` (or [`validate_topology`])
/// checks every invariant and compiles the resolved [`NetworkTopology`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioMeta,
    pub class: Vec<VehicleClass>,
    pub station: Vec<Station>,
    pub segment: Vec<Segment>,
    pub demand: DemandSpec,
    pub routing: RoutingSection,
    pub measure: MeasureSection,
    #[serde(default)]
    pub detector: Vec<DetectorSpec>,
    #[serde(default)]
    pub comparison: ComparisonSection,
}

/// One violated invariant, with the config field path it concerns.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid scenario:\n{}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| format!("  - {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// A point on the corridor where passage times are measured (resolved
/// station indices).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasurePoint {
    /// Admission into the network (entry segment).
    Entry,
    /// Departure into the sink.
    Exit,
    /// Joining the station's queue (or passing it, for bypassing classes).
    StationEnter(usize),
    /// Leaving the station into the next segment (or sink).
    StationExit(usize),
}

/// A validated detector site with its location resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorSite {
    pub id: String,
    pub location: MeasurePoint,
    pub detection_probability: f64,
    /// P(vehicle carries 0, 1, 2 detectable devices).
    pub device_count_probs: [f64; 3],
}

/// The validated, index-resolved form of a scenario: a connected chain with
/// per-class lane sets and all cross-references resolved. Immutable after
/// validation; safe to share across concurrently executing runs.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    pub scenario_id: String,
    /// SHA-256 of the canonical serialization of the source config.
    pub scenario_hash: String,
    pub horizon_s: f64,
    pub drain: bool,
    pub warmup_s: f64,
    pub classes: Vec<VehicleClass>,
    pub stations: Vec<Station>,
    pub segments: Vec<Segment>,
    /// `admissible[station][class]` -> lanes the class may use (empty =
    /// bypass).
    pub admissible: Vec<Vec<Vec<LaneId>>>,
    /// Index of the station where the routing policy under test decides.
    pub decision_station: usize,
    pub demand_bin_width_s: f64,
    /// Validated demand counts in class declaration order.
    pub demand_counts: Vec<(VehicleClassId, Vec<u64>)>,
    pub routing: RoutingSection,
    pub trip_from: MeasurePoint,
    pub trip_to: MeasurePoint,
    pub detectors: Vec<DetectorSite>,
    pub comparison: ComparisonSection,
}

impl NetworkTopology {
    pub fn class_index(&self, id: VehicleClassId) -> Option<usize> {
        self.classes.iter().position(|c| c.id == id)
    }

    pub fn station_index(&self, id: &str) -> Option<usize> {
        self.stations.iter().position(|s| s.id == id)
    }

    pub fn detector(&self, id: &str) -> Option<&DetectorSite> {
        self.detectors.iter().find(|d| d.id == id)
    }

    /// True when the chain ends with a segment into the sink (otherwise the
    /// last station discharges straight into the sink).
    pub fn ends_with_segment(&self) -> bool {
        self.segments.len() == self.stations.len() + 1
    }

    /// Render a measurement point as its config string.
    pub fn point_name(&self, point: MeasurePoint) -> String {
        match point {
            MeasurePoint::Entry => "entry".to_string(),
            MeasurePoint::Exit => "exit".to_string(),
            MeasurePoint::StationEnter(i) => format!("enter:{}", self.stations[i].id),
            MeasurePoint::StationExit(i) => format!("exit:{}", self.stations[i].id),
        }
    }
}

impl ScenarioConfig {
    /// The canonical serialization used for round-trip tests and scenario
    /// hashing.
    pub fn to_canonical_string(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes to TOML")
    }

    /// SHA-256 hex digest of the canonical serialization.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_canonical_string().as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Validate every invariant, returning the compiled topology or the
    /// full list of violations.
    pub fn validate(&self) -> Result<NetworkTopology, ScenarioError> {
        validate_topology(self)
    }
}

/// Parse a scenario document (TOML, or JSON when the text starts with `{`).
/// Parsing alone; invariants are checked by [`validate_topology`].
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let trimmed = text.trim_start();
    if trimmed.is_empty() {
        return Err(ScenarioError::Parse("empty document".to_string()));
    }
    if trimmed.starts_with('{') {
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    } else {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }
}

/// Parse and validate a scenario document.
pub fn load_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let cfg = parse_scenario(text)?;
    validate_topology(&cfg)?;
    Ok(cfg)
}

/// Load and validate a scenario file.
pub fn load_scenario_path(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    load_scenario(&text)
}

struct Checker {
    violations: Vec<Violation>,
}

impl Checker {
    fn new() -> Self {
        Checker {
            violations: Vec::new(),
        }
    }

    fn fail(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            path: path.into(),
            message: message.into(),
        });
    }

    fn check(&mut self, ok: bool, path: &str, message: impl Into<String>) {
        if !ok {
            self.fail(path, message);
        }
    }
}

fn check_shares(c: &mut Checker, path: &str, shares: &[f64], lane_count: u32) {
    if shares.len() != lane_count as usize {
        c.fail(
            path,
            format!(
                "share vector has length {}, expected lane_count {}",
                shares.len(),
                lane_count
            ),
        );
        return;
    }
    for (i, &s) in shares.iter().enumerate() {
        if s.is_nan() || s < 0.0 {
            c.fail(format!("{path}[{i}]"), format!("share must be >= 0 (got {s})"));
        }
    }
    let sum: f64 = shares.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        c.fail(path, format!("shares must sum to 1.0 +/- 1e-9 (got {sum})"));
    }
}

fn check_service_model(c: &mut Checker, path: &str, model: &ServiceModel) {
    match &model.distribution {
        ServiceDistribution::NormalTruncated { mean_s, sd_s } => {
            c.check(*mean_s > 0.0, path, format!("normal mean must be > 0 (got {mean_s})"));
            c.check(*sd_s >= 0.0, path, format!("normal sd must be >= 0 (got {sd_s})"));
        }
        ServiceDistribution::Deterministic { value_s } => {
            c.check(
                *value_s > 0.0,
                path,
                format!("deterministic service must be > 0 (got {value_s})"),
            );
        }
        ServiceDistribution::Exponential { mean_s } => {
            c.check(
                *mean_s > 0.0,
                path,
                format!("exponential mean must be > 0 (got {mean_s})"),
            );
        }
    }
    c.check(
        (0.0..=1.0).contains(&model.security_check_probability),
        &format!("{path}.security_check_probability"),
        format!(
            "probability must be in [0, 1] (got {})",
            model.security_check_probability
        ),
    );
    c.check(
        model.security_check_delay_s >= 0.0,
        &format!("{path}.security_check_delay_s"),
        format!("delay must be >= 0 (got {})", model.security_check_delay_s),
    );
}

fn parse_measure_point(
    c: &mut Checker,
    path: &str,
    text: &str,
    stations: &[Station],
) -> Option<MeasurePoint> {
    let resolve = |c: &mut Checker, name: &str| -> Option<usize> {
        match stations.iter().position(|s| s.id == name) {
            Some(i) => Some(i),
            None => {
                c.fail(path, format!("unknown station {name:?}"));
                None
            }
        }
    };
    match text {
        "entry" => Some(MeasurePoint::Entry),
        "exit" => Some(MeasurePoint::Exit),
        other => {
            if let Some(name) = other.strip_prefix("enter:") {
                resolve(c, name).map(MeasurePoint::StationEnter)
            } else if let Some(name) = other.strip_prefix("exit:") {
                resolve(c, name).map(MeasurePoint::StationExit)
            } else {
                c.fail(
                    path,
                    format!("expected entry | exit | enter:<station> | exit:<station>, got {other:?}"),
                );
                None
            }
        }
    }
}

/// Check every invariant of a parsed config and compile the resolved
/// topology. All violations are reported, not just the first.
pub fn validate_topology(cfg: &ScenarioConfig) -> Result<NetworkTopology, ScenarioError> {
    let mut c = Checker::new();

    c.check(
        cfg.scenario.horizon_s > 0.0,
        "scenario.horizon_s",
        "horizon must be > 0",
    );
    c.check(
        cfg.scenario.warmup_s >= 0.0,
        "scenario.warmup_s",
        "warm-up must be >= 0",
    );

    // Classes.
    c.check(!cfg.class.is_empty(), "class", "at least one vehicle class required");
    for (i, class) in cfg.class.iter().enumerate() {
        let path = format!("class[{i}]");
        c.check(
            class.effective_length_m > 0.0,
            &format!("{path}.effective_length_m"),
            format!("must be > 0 (got {})", class.effective_length_m),
        );
        match class.id {
            VehicleClassId::Rhv => c.check(
                class.visits_weighbridge,
                &format!("{path}.visits_weighbridge"),
                "RHV must visit the weighbridge",
            ),
            VehicleClassId::Tourist => c.check(
                !class.visits_weighbridge,
                &format!("{path}.visits_weighbridge"),
                "Tourist must not visit the weighbridge",
            ),
        }
        if cfg.class.iter().take(i).any(|other| other.id == class.id) {
            c.fail(format!("{path}.id"), format!("duplicate class {}", class.id));
        }
    }

    // Stations.
    for (i, st) in cfg.station.iter().enumerate() {
        let path = format!("station[{i}] ({})", st.id);
        c.check(st.lane_count >= 1, &format!("{path}.lane_count"), "must be >= 1");
        c.check(
            st.approach_capacity_m > 0.0,
            &format!("{path}.approach_capacity_m"),
            "must be > 0",
        );
        check_service_model(&mut c, &format!("{path}.service"), &st.service);
        for (class_id, lanes) in &st.admissible {
            for &lane in lanes {
                if lane < 1 || lane > st.lane_count {
                    c.fail(
                        format!("{path}.admissible.{class_id}"),
                        format!("lane {lane} out of range 1..={}", st.lane_count),
                    );
                }
            }
            let mut sorted = lanes.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != lanes.len() {
                c.fail(
                    format!("{path}.admissible.{class_id}"),
                    "duplicate lane index".to_string(),
                );
            }
        }
        if st.kind == StationKind::Weighbridge {
            for class in &cfg.class {
                let lanes = st.admissible.get(&class.id).map(Vec::len).unwrap_or(0);
                if class.visits_weighbridge && lanes == 0 {
                    c.fail(
                        format!("{path}.admissible.{}", class.id),
                        "class must visit the weighbridge but has no admissible lanes",
                    );
                }
                if !class.visits_weighbridge && lanes != 0 {
                    c.fail(
                        format!("{path}.admissible.{}", class.id),
                        "class bypasses the weighbridge but has admissible lanes",
                    );
                }
            }
        }
        if cfg.station.iter().take(i).any(|other| other.id == st.id) {
            c.fail(format!("{path}.id"), "duplicate station id");
        }
    }

    // Segments and chain connectivity. The chain alternates
    // segment/station starting with the entry segment; segment i leads to
    // station i, and the chain ends with either a final segment to the sink
    // or the last station discharging into the sink.
    let n_st = cfg.station.len();
    let n_seg = cfg.segment.len();
    c.check(n_seg >= 1, "segment", "at least the entry segment is required");
    if n_seg != n_st && n_seg != n_st + 1 {
        c.fail(
            "segment",
            format!(
                "chain must alternate segment/station: expected {} or {} segments for {} stations, got {}",
                n_st,
                n_st + 1,
                n_st,
                n_seg
            ),
        );
    }
    for (i, seg) in cfg.segment.iter().enumerate() {
        let path = format!("segment[{i}] ({})", seg.id);
        c.check(
            seg.free_flow_time_s > 0.0,
            &format!("{path}.free_flow_time_s"),
            "must be > 0",
        );
        c.check(
            seg.storage_capacity_m > 0.0,
            &format!("{path}.storage_capacity_m"),
            "must be > 0",
        );
        let expected_from = if i == 0 {
            "source".to_string()
        } else {
            cfg.station
                .get(i - 1)
                .map(|s| s.id.clone())
                .unwrap_or_default()
        };
        if seg.from != expected_from {
            c.fail(
                format!("{path}.from"),
                format!("chain is disconnected: expected {expected_from:?}, got {:?}", seg.from),
            );
        }
        let expected_to = if i < n_st {
            cfg.station[i].id.clone()
        } else {
            "sink".to_string()
        };
        if seg.to != expected_to {
            c.fail(
                format!("{path}.to"),
                format!("chain is disconnected: expected {expected_to:?}, got {:?}", seg.to),
            );
        }
    }

    // Demand.
    c.check(
        cfg.demand.bin_width_s > 0.0,
        "demand.bin_width_s",
        "must be > 0",
    );
    let mut demand_counts: Vec<(VehicleClassId, Vec<u64>)> = Vec::new();
    let mut demand_span: f64 = 0.0;
    for class in &cfg.class {
        let counts = cfg.demand.counts.get(&class.id).cloned().unwrap_or_default();
        let mut validated = Vec::with_capacity(counts.len());
        for (bin, &count) in counts.iter().enumerate() {
            if count < 0 {
                c.fail(
                    format!("demand.counts.{}[{bin}]", class.id),
                    format!("count must be >= 0 (got {count})"),
                );
                validated.push(0);
            } else {
                validated.push(count as u64);
            }
        }
        demand_span = demand_span.max(counts.len() as f64 * cfg.demand.bin_width_s);
        demand_counts.push((class.id, validated));
    }
    for class_id in cfg.demand.counts.keys() {
        if !cfg.class.iter().any(|cl| cl.id == *class_id) {
            c.fail(
                format!("demand.counts.{class_id}"),
                "demand given for undeclared class",
            );
        }
    }
    c.check(
        cfg.scenario.horizon_s >= demand_span,
        "scenario.horizon_s",
        format!(
            "horizon {} is shorter than the demand span {}",
            cfg.scenario.horizon_s, demand_span
        ),
    );

    // Routing.
    let decision_station = cfg
        .station
        .iter()
        .position(|s| s.id == cfg.routing.decision_station);
    if decision_station.is_none() {
        c.fail(
            "routing.decision_station",
            format!("unknown station {:?}", cfg.routing.decision_station),
        );
    }
    if let Some(dsi) = decision_station {
        let lane_count = cfg.station[dsi].lane_count;
        check_shares(&mut c, "routing.average_shares", &cfg.routing.average_shares, lane_count);
        let mut prev_rate = 0.0;
        for (i, band) in cfg.routing.bands.iter().enumerate() {
            let path = format!("routing.bands[{i}] ({})", band.label);
            check_shares(&mut c, &format!("{path}.shares"), &band.shares, lane_count);
            c.check(
                band.reference_trip_mean_s > 0.0,
                &format!("{path}.reference_trip_mean_s"),
                "must be > 0",
            );
            match band.max_rate_veh_h {
                Some(rate) => {
                    if rate <= prev_rate {
                        c.fail(
                            format!("{path}.max_rate_veh_h"),
                            "band boundaries must be strictly ascending",
                        );
                    }
                    if i == cfg.routing.bands.len() - 1 {
                        c.fail(
                            format!("{path}.max_rate_veh_h"),
                            "last band must be open-ended (omit max_rate_veh_h)",
                        );
                    }
                    prev_rate = rate;
                }
                None => {
                    if i != cfg.routing.bands.len() - 1 {
                        c.fail(
                            format!("{path}.max_rate_veh_h"),
                            "only the last band may be open-ended",
                        );
                    }
                }
            }
        }
        for (i, profile) in cfg.routing.agent_profiles.iter().enumerate() {
            let path = format!("routing.agent_profiles[{i}]");
            let mut lanes: Vec<u32> = profile.preference.clone();
            lanes.sort_unstable();
            let expected: Vec<u32> = (1..=lane_count).collect();
            if lanes != expected {
                c.fail(
                    format!("{path}.preference"),
                    format!("must be a permutation of 1..={lane_count}"),
                );
            }
            c.check(profile.weight > 0.0, &format!("{path}.weight"), "must be > 0");
        }
    }

    // Measurement points and detectors.
    let trip_from = parse_measure_point(&mut c, "measure.trip_from", &cfg.measure.trip_from, &cfg.station);
    let trip_to = parse_measure_point(&mut c, "measure.trip_to", &cfg.measure.trip_to, &cfg.station);

    let mut detectors = Vec::new();
    for (i, det) in cfg.detector.iter().enumerate() {
        let path = format!("detector[{i}] ({})", det.id);
        c.check(
            (0.0..=1.0).contains(&det.detection_probability),
            &format!("{path}.detection_probability"),
            "must be in [0, 1]",
        );
        let d = &det.device_count_distribution;
        let sum = d.p0 + d.p1 + d.p2;
        c.check(
            d.p0 >= 0.0 && d.p1 >= 0.0 && d.p2 >= 0.0 && (sum - 1.0).abs() <= 1e-9,
            &format!("{path}.device_count_distribution"),
            format!("probabilities must be >= 0 and sum to 1 (got {sum})"),
        );
        if let Some(location) = parse_measure_point(&mut c, &format!("{path}.location"), &det.location, &cfg.station) {
            detectors.push(DetectorSite {
                id: det.id.clone(),
                location,
                detection_probability: det.detection_probability,
                device_count_probs: [d.p0, d.p1, d.p2],
            });
        }
    }

    for (i, &rate) in cfg.comparison.rates_veh_h.iter().enumerate() {
        c.check(
            rate > 0.0,
            &format!("comparison.rates_veh_h[{i}]"),
            "rate must be > 0",
        );
    }
    c.check(
        cfg.comparison.duration_s > 0.0,
        "comparison.duration_s",
        "must be > 0",
    );

    if !c.violations.is_empty() {
        return Err(ScenarioError::Invalid(c.violations));
    }

    // Resolve per-station, per-class admissible lane sets.
    let admissible: Vec<Vec<Vec<LaneId>>> = cfg
        .station
        .iter()
        .map(|st| {
            cfg.class
                .iter()
                .map(|class| {
                    let mut lanes: Vec<LaneId> = st
                        .admissible
                        .get(&class.id)
                        .map(|v| v.iter().map(|&l| LaneId(l)).collect())
                        .unwrap_or_default();
                    lanes.sort_unstable();
                    lanes
                })
                .collect()
        })
        .collect();

    Ok(NetworkTopology {
        scenario_id: cfg.scenario.id.clone(),
        scenario_hash: cfg.hash(),
        horizon_s: cfg.scenario.horizon_s,
        drain: cfg.scenario.drain,
        warmup_s: cfg.scenario.warmup_s,
        classes: cfg.class.clone(),
        stations: cfg.station.clone(),
        segments: cfg.segment.clone(),
        admissible,
        decision_station: decision_station.expect("validated"),
        demand_bin_width_s: cfg.demand.bin_width_s,
        demand_counts,
        routing: cfg.routing.clone(),
        trip_from: trip_from.expect("validated"),
        trip_to: trip_to.expect("validated"),
        detectors,
        comparison: cfg.comparison.clone(),
    })
}
