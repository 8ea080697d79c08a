//! The deterministic discrete-event core: seeded runs, multi-seed
//! replication, and run-result export.
//!
//! A run is a pure function of (scenario, policy, master seed). All
//! randomness flows through named substreams of the master seed; equal
//! inputs give byte-identical exported artifacts, and replications may
//! execute concurrently with results identical to sequential execution.

mod rng;
mod sim;

pub use rng::{RngStreams, Subsystem};
pub use sim::{FLOW_WINDOW_S, SERIES_DT_S};

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::arrivals::{arrivals_from_bins, ArrivalSchedule, DemandBins};
use crate::routing::PolicyKind;
use crate::scenario::{
    LaneId, MeasurePoint, NetworkTopology, ScenarioConfig, ScenarioError, ServiceDistribution,
    ServiceModel, VehicleClassId,
};

/// Discrete event kinds, in vehicle-lifecycle order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Arrival,
    AdmitFromStack,
    JoinQueue,
    BeginService,
    EndService,
    Exit,
}

/// Where an event happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    /// Outside the network, waiting for entry storage.
    Stack,
    Segment(u32),
    StationLane { station: u32, lane: LaneId },
    Sink,
}

/// One logged event. `(time_s, seq)` is unique and totally ordered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    pub time_s: f64,
    pub seq: u64,
    pub kind: EventKind,
    pub vehicle_id: u64,
    pub location: Location,
}

/// A vehicle's interaction with one station. `lane = None` with no service
/// stamps means the vehicle crossed without stopping; `depart_s` is the
/// physical leave time (after any downstream blocking).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationVisit {
    pub lane: Option<LaneId>,
    pub join_s: f64,
    pub begin_s: Option<f64>,
    pub end_s: Option<f64>,
    pub depart_s: Option<f64>,
}

impl StationVisit {
    pub fn stopped(&self) -> bool {
        self.begin_s.is_some()
    }
}

/// Per-vehicle trip record: admission, exit, the decision-station lane and
/// the per-station visit stamps.
#[derive(Debug, Clone, PartialEq)]
pub struct TripRecord {
    pub vehicle_id: u64,
    pub class: VehicleClassId,
    pub scheduled_s: f64,
    pub admitted_s: Option<f64>,
    pub exited_s: Option<f64>,
    pub decision_lane: Option<LaneId>,
    pub visits: Vec<Option<StationVisit>>,
}

impl TripRecord {
    /// Passage time at a measurement point, if the vehicle reached it.
    pub fn time_at(&self, point: MeasurePoint) -> Option<f64> {
        match point {
            MeasurePoint::Entry => self.admitted_s,
            MeasurePoint::Exit => self.exited_s,
            MeasurePoint::StationEnter(s) => self.visits.get(s)?.map(|v| v.join_s),
            MeasurePoint::StationExit(s) => self.visits.get(s)?.and_then(|v| v.depart_s),
        }
    }

    /// Admission-to-exit duration for completed trips.
    pub fn trip_s(&self) -> Option<f64> {
        Some(self.exited_s? - self.admitted_s?)
    }
}

/// Queue-length time series in meters, sampled on a fixed grid.
/// `per_station[s]` holds one vector per lane (a single vector for
/// shared-queue stations).
#[derive(Debug, Clone, PartialEq)]
pub struct QueueSeries {
    pub dt_s: f64,
    pub times: Vec<f64>,
    pub per_station: Vec<Vec<Vec<f64>>>,
}

impl QueueSeries {
    /// Total queued meters at a station per sample point.
    pub fn station_total(&self, station: usize) -> Vec<f64> {
        let lanes = &self.per_station[station];
        (0..self.times.len())
            .map(|i| lanes.iter().map(|lane| lane[i]).sum())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Record the full event log (sized ~8 events/vehicle; off by default).
    pub record_events: bool,
}

/// Everything a run produces. Equal (scenario, policy, seed) produce equal
/// results, including event order.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub scenario_id: String,
    pub scenario_hash: String,
    pub policy_name: String,
    pub seed: u64,
    pub warmup_s: f64,
    pub horizon_s: f64,
    pub station_ids: Vec<String>,
    pub trips: Vec<TripRecord>,
    /// Vehicles served per station lane over the whole run.
    pub lane_tallies: Vec<Vec<u64>>,
    pub queue_series: QueueSeries,
    /// Stacked-vehicle count at each sample point.
    pub stack_series: Vec<u32>,
    pub scheduled: u64,
    pub admitted: u64,
    pub exited: u64,
    pub stacked_at_end: u64,
    pub in_system_at_end: u64,
    /// Populated only when [`RunOptions::record_events`] is set.
    pub events: Vec<EventRecord>,
}

impl RunResult {
    /// The books must close exactly: scheduled = admitted + still stacked,
    /// admitted = exited + in system.
    pub fn check_conservation(&self) -> Result<(), String> {
        if self.scheduled != self.admitted + self.stacked_at_end {
            return Err(format!(
                "scheduled {} != admitted {} + stacked {}",
                self.scheduled, self.admitted, self.stacked_at_end
            ));
        }
        if self.admitted != self.exited + self.in_system_at_end {
            return Err(format!(
                "admitted {} != exited {} + in-system {}",
                self.admitted, self.exited, self.in_system_at_end
            ));
        }
        Ok(())
    }

    /// Durations between two measurement points for vehicles that passed
    /// both, restricted to trips whose from-passage is at or after
    /// `min_from_s` (warm-up exclusion).
    pub fn trip_times_between(
        &self,
        from: MeasurePoint,
        to: MeasurePoint,
        min_from_s: f64,
    ) -> Vec<f64> {
        self.trips
            .iter()
            .filter_map(|t| {
                let t_from = t.time_at(from)?;
                let t_to = t.time_at(to)?;
                (t_from >= min_from_s).then_some(t_to - t_from)
            })
            .collect()
    }

    fn artifact_header(&self) -> String {
        format!(
            "# scenario={} policy={} seed={}\n",
            self.scenario_hash, self.policy_name, self.seed
        )
    }

    /// Trips as CSV (`vehicle_id,class,lane_weighbridge,enter_s,exit_s,trip_s`).
    /// Vehicles that never reached a field leave it empty.
    pub fn trips_csv(&self) -> String {
        let mut out = self.artifact_header();
        out.push_str("vehicle_id,class,lane_weighbridge,enter_s,exit_s,trip_s\n");
        for trip in &self.trips {
            let lane = trip
                .decision_lane
                .map(|l| l.to_string())
                .unwrap_or_default();
            let enter = trip.admitted_s.map(|t| format!("{t:.3}")).unwrap_or_default();
            let exit = trip.exited_s.map(|t| format!("{t:.3}")).unwrap_or_default();
            let dur = trip.trip_s().map(|t| format!("{t:.3}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                trip.vehicle_id, trip.class, lane, enter, exit, dur
            ));
        }
        out
    }

    /// Queue series as CSV (`time_s,station,lane,queue_m`). Shared-queue
    /// stations report their pooled queue as lane 0.
    pub fn queue_series_csv(&self) -> String {
        let mut out = self.artifact_header();
        out.push_str("time_s,station,lane,queue_m\n");
        for (i, &t) in self.queue_series.times.iter().enumerate() {
            for (s, lanes) in self.queue_series.per_station.iter().enumerate() {
                let shared = lanes.len() == 1
                    && self.lane_tallies[s].len() > 1;
                for (l, series) in lanes.iter().enumerate() {
                    let lane_no = if shared { 0 } else { l + 1 };
                    out.push_str(&format!(
                        "{:.1},{},{},{:.3}\n",
                        t, self.station_ids[s], lane_no, series[i]
                    ));
                }
            }
        }
        out
    }

    /// The run manifest as structured text.
    pub fn manifest_toml(&self) -> String {
        #[derive(Serialize)]
        struct Manifest<'a> {
            scenario_id: &'a str,
            scenario_hash: &'a str,
            policy: &'a str,
            seed: u64,
            horizon_s: f64,
            warmup_s: f64,
            scheduled: u64,
            admitted: u64,
            exited: u64,
            stacked_at_end: u64,
            in_system_at_end: u64,
        }
        toml::to_string_pretty(&Manifest {
            scenario_id: &self.scenario_id,
            scenario_hash: &self.scenario_hash,
            policy: &self.policy_name,
            seed: self.seed,
            horizon_s: self.horizon_s,
            warmup_s: self.warmup_s,
            scheduled: self.scheduled,
            admitted: self.admitted,
            exited: self.exited,
            stacked_at_end: self.stacked_at_end,
            in_system_at_end: self.in_system_at_end,
        })
        .expect("manifest serializes")
    }
}

/// Strictly positive service-time sample from the configured distribution.
/// The truncated normal rejection-samples until the draw is positive.
pub fn sample_service_time(model: &ServiceModel, rng: &mut impl Rng) -> f64 {
    match model.distribution {
        ServiceDistribution::NormalTruncated { mean_s, sd_s } => {
            let dist = Normal::new(mean_s, sd_s).expect("validated parameters");
            loop {
                let x = dist.sample(rng);
                if x > 0.0 {
                    return x;
                }
            }
        }
        ServiceDistribution::Deterministic { value_s } => value_s,
        ServiceDistribution::Exponential { mean_s } => {
            let dist = Exp::new(1.0 / mean_s).expect("validated parameters");
            loop {
                let x = dist.sample(rng);
                if x > 0.0 {
                    return x;
                }
            }
        }
    }
}

/// Extra delay from the random security check. One Bernoulli draw is
/// consumed per call regardless of outcome, so the security substream stays
/// aligned across configurations.
pub fn security_check(model: &ServiceModel, rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.gen();
    if u < model.security_check_probability {
        model.security_check_delay_s
    } else {
        0.0
    }
}

/// Validate and run a scenario under a policy with the given master seed.
pub fn run(
    cfg: &ScenarioConfig,
    policy: &PolicyKind,
    seed: u64,
) -> Result<RunResult, ScenarioError> {
    let topo = cfg.validate()?;
    Ok(run_topology(&topo, policy, seed))
}

/// Run a validated topology.
pub fn run_topology(topo: &NetworkTopology, policy: &PolicyKind, seed: u64) -> RunResult {
    run_topology_with(topo, policy, seed, RunOptions::default())
}

pub fn run_topology_with(
    topo: &NetworkTopology,
    policy: &PolicyKind,
    seed: u64,
    options: RunOptions,
) -> RunResult {
    let streams = RngStreams::new(seed);
    let mut arrivals_rng = streams.stream(Subsystem::Arrivals);
    let schedule = arrivals_from_bins(&DemandBins::from_topology(topo), &mut arrivals_rng);
    sim::Engine::new(topo, policy, &schedule, &streams, options).run(&streams)
}

/// Run with an explicit arrival schedule (the arrivals substream is left
/// untouched). Vehicle ids must be dense.
pub fn run_with_schedule(
    topo: &NetworkTopology,
    policy: &PolicyKind,
    seed: u64,
    schedule: &ArrivalSchedule,
    options: RunOptions,
) -> RunResult {
    let streams = RngStreams::new(seed);
    sim::Engine::new(topo, policy, schedule, &streams, options).run(&streams)
}

/// Independent replications of one configuration across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationSet {
    pub runs: Vec<RunResult>,
}

impl ReplicationSet {
    pub fn len(&self) -> usize {
        self.runs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }
}

/// One run per seed, in seed order. Replications execute concurrently but
/// the result is identical to sequential execution.
pub fn replicate(
    cfg: &ScenarioConfig,
    policy: &PolicyKind,
    seeds: &[u64],
) -> Result<ReplicationSet, ScenarioError> {
    let topo = cfg.validate()?;
    Ok(replicate_topology(&topo, policy, seeds))
}

pub fn replicate_topology(
    topo: &NetworkTopology,
    policy: &PolicyKind,
    seeds: &[u64],
) -> ReplicationSet {
    assert!(!seeds.is_empty(), "at least one seed required");
    let runs = seeds
        .par_iter()
        .map(|&seed| run_topology(topo, policy, seed))
        .collect();
    ReplicationSet { runs }
}
