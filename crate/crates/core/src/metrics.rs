//! Evaluation quantities: lane occupancy shares, trip-time summaries,
//! occupancy error, seed-sensitivity spreads, and the policy x flow-rate
//! comparison grid with its qualitative scorecard.
//!
//! All computations are pure functions over immutable run results;
//! aggregation across replications is an associative, commutative merge of
//! per-run summaries.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::engine::{replicate_topology, RunResult};
use crate::fixtures::scenario_for_rate;
use crate::routing::{flow_band, OccupancyTable, PolicyKind};
use crate::scenario::{FlowBandLabel, MeasurePoint, ScenarioConfig, ScenarioError};
use crate::stats::SampleSummary;

/// Brittleness thresholds for the high-rate policy comparison: under bound
/// probabilistic routing the seed-to-seed coefficient of variation of mean
/// trip time must exceed the agent policy's by at least this factor, and
/// the mean trip time itself by [`BRITTLENESS_TRIP_INFLATION_MIN`].
pub const BRITTLENESS_COV_RATIO_MIN: f64 = 2.0;
pub const BRITTLENESS_TRIP_INFLATION_MIN: f64 = 1.5;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("station {0:?} not present in run result")]
    UnknownStation(String),
    #[error("share vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("at least {needed} replications required, got {got}")]
    TooFewReplications { needed: usize, got: usize },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("comparison needs a non-empty policy and rate grid")]
    EmptyGrid,
}

/// Vehicles served per lane at one station, with the resulting shares.
/// Shares are empty when nothing was served.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaneOccupancySummary {
    pub station: String,
    pub counts: Vec<u64>,
    pub shares: Vec<f64>,
}

/// Served vehicles per lane, counting services that began at or after the
/// warm-up boundary.
pub fn lane_occupancy(result: &RunResult, station: &str) -> Result<LaneOccupancySummary, MetricsError> {
    let station_idx = result
        .station_ids
        .iter()
        .position(|s| s == station)
        .ok_or_else(|| MetricsError::UnknownStation(station.to_string()))?;
    let lane_count = result.lane_tallies[station_idx].len();
    let mut counts = vec![0u64; lane_count];
    for trip in &result.trips {
        if let Some(visit) = &trip.visits[station_idx] {
            if let (Some(lane), Some(begin)) = (visit.lane, visit.begin_s) {
                if begin >= result.warmup_s {
                    counts[lane.idx()] += 1;
                }
            }
        }
    }
    let total: u64 = counts.iter().sum();
    let shares = if total == 0 {
        Vec::new()
    } else {
        counts.iter().map(|&c| c as f64 / total as f64).collect()
    };
    Ok(LaneOccupancySummary {
        station: station.to_string(),
        counts,
        shares,
    })
}

/// Trip-time summary between two measurement points (mean/median/sd/max and
/// quartiles). All zero when no vehicle passed both points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TripTimeSummary {
    pub n: usize,
    pub mean_s: f64,
    pub median_s: f64,
    pub sd_s: f64,
    pub max_s: f64,
    pub q1_s: f64,
    pub q3_s: f64,
}

impl TripTimeSummary {
    pub fn from_samples(samples: &[f64]) -> Self {
        match SampleSummary::from_samples(samples) {
            Some(s) => TripTimeSummary {
                n: s.n,
                mean_s: s.mean,
                median_s: s.median,
                sd_s: s.sd,
                max_s: s.max,
                q1_s: s.q1,
                q3_s: s.q3,
            },
            None => TripTimeSummary {
                n: 0,
                mean_s: 0.0,
                median_s: 0.0,
                sd_s: 0.0,
                max_s: 0.0,
                q1_s: 0.0,
                q3_s: 0.0,
            },
        }
    }
}

/// Summary over completed trips between two points, excluding vehicles that
/// did not pass both and trips starting inside the warm-up window.
pub fn trip_time_stats(result: &RunResult, from: MeasurePoint, to: MeasurePoint) -> TripTimeSummary {
    let samples = result.trip_times_between(from, to, result.warmup_s);
    TripTimeSummary::from_samples(&samples)
}

/// L1 distance between share vectors, in percentage points:
/// `sum_lanes |sim - obs| * 100`.
pub fn occupancy_error(sim: &[f64], observed: &[f64]) -> Result<f64, MetricsError> {
    if sim.len() != observed.len() {
        return Err(MetricsError::LengthMismatch(sim.len(), observed.len()));
    }
    Ok(sim
        .iter()
        .zip(observed)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        * 100.0)
}

/// Seed-sensitivity report across a replication set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpreadReport {
    /// Mean trip time per seed, in seed order.
    pub per_seed_trip_means: Vec<f64>,
    /// Maximum over sample points of the largest pairwise queue-length
    /// difference between seeds (meters), compared at identical 10 s
    /// sample points over the common series prefix.
    pub max_queue_diff_m: f64,
    /// Largest ratio between per-seed mean trip times (>= 1).
    pub max_trip_mean_ratio: f64,
    /// Coefficient of variation of the per-seed mean trip times.
    pub cov_trip_mean: f64,
}

/// Per-seed trip-time means plus the maximum time-aligned queue-length
/// spread at a station. Needs at least two replications.
pub fn seed_spread(
    reps: &[RunResult],
    station: &str,
    from: MeasurePoint,
    to: MeasurePoint,
) -> Result<SpreadReport, MetricsError> {
    if reps.len() < 2 {
        return Err(MetricsError::TooFewReplications {
            needed: 2,
            got: reps.len(),
        });
    }
    let station_idx = reps[0]
        .station_ids
        .iter()
        .position(|s| s == station)
        .ok_or_else(|| MetricsError::UnknownStation(station.to_string()))?;

    let per_seed_trip_means: Vec<f64> = reps
        .iter()
        .map(|r| {
            let samples = r.trip_times_between(from, to, r.warmup_s);
            if samples.is_empty() {
                0.0
            } else {
                samples.iter().sum::<f64>() / samples.len() as f64
            }
        })
        .collect();

    let totals: Vec<Vec<f64>> = reps
        .iter()
        .map(|r| r.queue_series.station_total(station_idx))
        .collect();
    let common = totals.iter().map(Vec::len).min().unwrap_or(0);
    let mut max_queue_diff_m: f64 = 0.0;
    for i in 0..common {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for series in &totals {
            lo = lo.min(series[i]);
            hi = hi.max(series[i]);
        }
        max_queue_diff_m = max_queue_diff_m.max(hi - lo);
    }

    let min_mean = per_seed_trip_means.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_mean = per_seed_trip_means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let max_trip_mean_ratio = if min_mean > 0.0 { max_mean / min_mean } else { f64::INFINITY };

    Ok(SpreadReport {
        cov_trip_mean: coefficient_of_variation(&per_seed_trip_means),
        per_seed_trip_means,
        max_queue_diff_m,
        max_trip_mean_ratio,
    })
}

/// sd / mean of a sample (0 for degenerate input).
pub fn coefficient_of_variation(values: &[f64]) -> f64 {
    match SampleSummary::from_samples(values) {
        Some(s) if s.mean != 0.0 => s.sd / s.mean,
        _ => 0.0,
    }
}

/// One cell of the policy x rate comparison grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonCell {
    pub policy: String,
    pub rate_veh_h: f64,
    pub band: FlowBandLabel,
    /// Mean lane shares at the decision station across seeds.
    pub mean_shares: Vec<f64>,
    /// L1 occupancy error vs. the band's reference shares, percentage points.
    pub occ_error_pp: f64,
    /// Grand mean of per-seed mean trip times.
    pub trip_mean_s: f64,
    /// Spread (sd) of per-seed mean trip times.
    pub trip_sd_s: f64,
    /// |trip_mean - band reference trip mean|, seconds.
    pub trip_error_s: f64,
    pub trip_mean_cov: f64,
    pub per_seed_trip_means: Vec<f64>,
}

/// The full grid plus the worst cell per metric and the reference data the
/// errors were measured against.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub cells: Vec<ComparisonCell>,
    pub seeds: Vec<u64>,
    /// (policy, band) with the largest lane-occupancy error.
    pub worst_occupancy: (String, FlowBandLabel),
    /// (policy, band) with the largest trip-time error.
    pub worst_trip: (String, FlowBandLabel),
    pub reference_bands: Vec<(FlowBandLabel, Vec<f64>, f64)>,
}

impl ComparisonReport {
    pub fn cell(&self, policy: &str, rate_veh_h: f64) -> Option<&ComparisonCell> {
        self.cells
            .iter()
            .find(|c| c.policy == policy && c.rate_veh_h == rate_veh_h)
    }

    /// Grid CSV: `policy,rate,occ_error_pp,trip_mean_s,trip_sd_s`.
    pub fn comparison_csv(&self) -> String {
        let mut out = String::from("policy,rate,occ_error_pp,trip_mean_s,trip_sd_s\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{:.0},{:.3},{:.3},{:.3}\n",
                c.policy, c.rate_veh_h, c.occ_error_pp, c.trip_mean_s, c.trip_sd_s
            ));
        }
        out
    }

    /// Plot-ready lane-share data: `policy,rate,lane,mean_share`.
    pub fn lane_shares_csv(&self) -> String {
        let mut out = String::from("policy,rate,lane,mean_share\n");
        for c in &self.cells {
            for (idx, share) in c.mean_shares.iter().enumerate() {
                out.push_str(&format!(
                    "{},{:.0},{},{:.6}\n",
                    c.policy,
                    c.rate_veh_h,
                    idx + 1,
                    share
                ));
            }
        }
        out
    }

    /// Plot-ready occupancy-error data: `policy,rate,occ_error_pp`.
    pub fn occupancy_error_csv(&self) -> String {
        let mut out = String::from("policy,rate,occ_error_pp\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{:.0},{:.3}\n",
                c.policy, c.rate_veh_h, c.occ_error_pp
            ));
        }
        out
    }

    /// Plot-ready trip-time data with the reference curve:
    /// `source,rate,trip_mean_s,trip_sd_s`.
    pub fn trip_times_csv(&self) -> String {
        let mut out = String::from("source,rate,trip_mean_s,trip_sd_s\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{:.0},{:.3},{:.3}\n",
                c.policy, c.rate_veh_h, c.trip_mean_s, c.trip_sd_s
            ));
        }
        let mut seen: Vec<f64> = Vec::new();
        for c in &self.cells {
            if seen.contains(&c.rate_veh_h) {
                continue;
            }
            seen.push(c.rate_veh_h);
            if let Some((_, _, trip_ref)) = self
                .reference_bands
                .iter()
                .find(|(label, _, _)| *label == c.band)
            {
                out.push_str(&format!("reference,{:.0},{:.3},0.000\n", c.rate_veh_h, trip_ref));
            }
        }
        out
    }

    /// Human-readable scorecard naming the worst cell per metric and the
    /// per-cell error ordering.
    pub fn scorecard(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "worst lane-occupancy error: {} @ {}\n",
            self.worst_occupancy.0, self.worst_occupancy.1
        ));
        out.push_str(&format!(
            "worst trip-time error: {} @ {}\n\n",
            self.worst_trip.0, self.worst_trip.1
        ));
        out.push_str("policy        rate  band       occ_err_pp  trip_mean_s  trip_err_s  trip_cov\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{:<12} {:>5.0}  {:<9} {:>11.1} {:>12.1} {:>11.1} {:>9.3}\n",
                c.policy, c.rate_veh_h, c.band.to_string(), c.occ_error_pp, c.trip_mean_s,
                c.trip_error_s, c.trip_mean_cov
            ));
        }
        out
    }
}

/// Run the policy x rate grid: for each cell, `seeds.len()` replications of
/// a constant-rate scenario derived from `base`, scored against the
/// scenario's reference band tables (occupancy shares and trip means).
pub fn policy_comparison(
    base: &ScenarioConfig,
    policy_names: &[&str],
    rates_veh_h: &[f64],
    seeds: &[u64],
) -> Result<ComparisonReport, MetricsError> {
    if policy_names.is_empty() || rates_veh_h.is_empty() || seeds.is_empty() {
        return Err(MetricsError::EmptyGrid);
    }
    let base_topo = base.validate()?;
    let decision_station = base_topo.stations[base_topo.decision_station].id.clone();
    let reference = OccupancyTable::flow_specific(&base_topo.routing.bands)
        .map_err(|e| MetricsError::Scenario(ScenarioError::Parse(e.to_string())))?;
    let reference_bands: Vec<(FlowBandLabel, Vec<f64>, f64)> = base_topo
        .routing
        .bands
        .iter()
        .map(|b| (b.label, b.shares.clone(), b.reference_trip_mean_s))
        .collect();

    let mut cells = Vec::new();
    for &rate in rates_veh_h {
        let cfg = scenario_for_rate(base, rate, base.comparison.duration_s);
        let topo = cfg.validate()?;
        let band = flow_band(rate, &reference.bands);
        let band_idx = reference
            .bands
            .iter()
            .position(|b| b.label == band.label)
            .expect("band in table");
        let ref_shares = &reference.shares[band_idx];
        let ref_trip = reference_bands[band_idx].2;

        for &policy_name in policy_names {
            let policy = PolicyKind::from_name(policy_name, &topo)
                .map_err(|e| MetricsError::Scenario(ScenarioError::Parse(e.to_string())))?;
            let runs: Vec<RunResult> = seeds
                .par_iter()
                .map(|&seed| crate::engine::run_topology(&topo, &policy, seed))
                .collect();

            let lane_count = ref_shares.len();
            let mut share_sums = vec![0.0; lane_count];
            let mut share_seeds = 0usize;
            let mut per_seed_trip_means = Vec::with_capacity(runs.len());
            for run in &runs {
                let occ = lane_occupancy(run, &decision_station)?;
                if !occ.shares.is_empty() {
                    for (sum, share) in share_sums.iter_mut().zip(&occ.shares) {
                        *sum += share;
                    }
                    share_seeds += 1;
                }
                let trips = run.trip_times_between(topo.trip_from, topo.trip_to, run.warmup_s);
                let mean = if trips.is_empty() {
                    0.0
                } else {
                    trips.iter().sum::<f64>() / trips.len() as f64
                };
                per_seed_trip_means.push(mean);
            }
            let mean_shares: Vec<f64> = if share_seeds == 0 {
                Vec::new()
            } else {
                share_sums.iter().map(|s| s / share_seeds as f64).collect()
            };
            let occ_error_pp = if mean_shares.is_empty() {
                f64::NAN
            } else {
                occupancy_error(&mean_shares, ref_shares)?
            };
            let trip_summary = SampleSummary::from_samples(&per_seed_trip_means)
                .expect("non-empty seed list");
            cells.push(ComparisonCell {
                policy: policy_name.to_string(),
                rate_veh_h: rate,
                band: band.label,
                mean_shares,
                occ_error_pp,
                trip_mean_s: trip_summary.mean,
                trip_sd_s: trip_summary.sd,
                trip_error_s: (trip_summary.mean - ref_trip).abs(),
                trip_mean_cov: coefficient_of_variation(&per_seed_trip_means),
                per_seed_trip_means,
            });
        }
    }

    let worst = |key: fn(&ComparisonCell) -> f64| -> (String, FlowBandLabel) {
        let cell = cells
            .iter()
            .filter(|c| key(c).is_finite())
            .max_by(|a, b| key(a).total_cmp(&key(b)))
            .expect("non-empty grid");
        (cell.policy.clone(), cell.band)
    };
    Ok(ComparisonReport {
        worst_occupancy: worst(|c| c.occ_error_pp),
        worst_trip: worst(|c| c.trip_error_s),
        cells,
        seeds: seeds.to_vec(),
        reference_bands,
    })
}

/// Replicate one derived constant-rate scenario (convenience used by the
/// CLI and the acceptance suite).
pub fn replicate_at_rate(
    base: &ScenarioConfig,
    policy_name: &str,
    rate_veh_h: f64,
    seeds: &[u64],
) -> Result<Vec<RunResult>, MetricsError> {
    let cfg = scenario_for_rate(base, rate_veh_h, base.comparison.duration_s);
    let topo = cfg.validate()?;
    let policy = PolicyKind::from_name(policy_name, &topo)
        .map_err(|e| MetricsError::Scenario(ScenarioError::Parse(e.to_string())))?;
    Ok(replicate_topology(&topo, &policy, seeds).runs)
}
