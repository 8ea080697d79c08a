//! Partial wireless detection at corridor sites: per-vehicle device models,
//! probabilistic registration, duplicate-signal removal, cross-site
//! matching, and trip-time distribution comparison against ground truth.
//!
//! The sampling layer never distorts time, only visibility: a detection's
//! timestamp is the vehicle's true passage time at the site, so matched
//! trip times equal ground-truth passage differences exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::engine::{RngStreams, RunResult, Subsystem};
use crate::metrics::TripTimeSummary;
use crate::scenario::{DetectorSite, MeasurePoint};
use crate::stats::{ks_two_sample, Histogram, KsOutcome};

/// Keep one signal out of each co-traveling group within this window.
pub const DEFAULT_DEDUPE_WINDOW_S: f64 = 5.0;

/// Longest plausible trip between the two sites; later re-sightings of a
/// device are treated as a new journey.
pub const DEFAULT_MAX_TRIP_S: f64 = 3600.0;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("detector location references station {0} not present in the run")]
    UnknownLocation(usize),
    #[error("source {0:?} has no samples")]
    EmptySource(String),
}

/// One device registration at a site. `vehicle_id` is the hidden ground
/// truth behind the observation, carried for validation only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectionEvent {
    pub device_id: u64,
    pub vehicle_id: u64,
    pub timestamp_s: f64,
}

/// All registrations at one site, sorted by (timestamp, device).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionLog {
    pub site: String,
    pub events: Vec<DetectionEvent>,
}

impl DetectionLog {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// CSV with columns `site,device_id,timestamp_s`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("site,device_id,timestamp_s\n");
        for e in &self.events {
            let _ = writeln!(out, "{},{},{:.3}", self.site, e.device_id, e.timestamp_s);
        }
        out
    }
}

/// A device seen at both sites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchedTrip {
    pub device_id: u64,
    pub t1_s: f64,
    pub t2_s: f64,
}

impl MatchedTrip {
    pub fn trip_s(&self) -> f64 {
        self.t2_s - self.t1_s
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct MatchedTrips {
    pub trips: Vec<MatchedTrip>,
}

impl MatchedTrips {
    pub fn len(&self) -> usize {
        self.trips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trips.is_empty()
    }

    pub fn trip_times(&self) -> Vec<f64> {
        self.trips.iter().map(MatchedTrip::trip_s).collect()
    }

    /// CSV with columns `device_id,t1_s,t2_s,trip_s`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("device_id,t1_s,t2_s,trip_s\n");
        for t in &self.trips {
            let _ = writeln!(out, "{},{:.3},{:.3},{:.3}", t.device_id, t.t1_s, t.t2_s, t.trip_s());
        }
        out
    }
}

fn site_tag(id: &str) -> u64 {
    // FNV-1a over the site id, for keying the detection substream.
    id.bytes()
        .fold(0xcbf29ce484222325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3))
}

/// Number of detectable devices a vehicle carries. Keyed by vehicle only, so
/// the count is the same at every site of a run.
fn device_count(streams: &RngStreams, probs: &[f64; 3], vehicle_id: u64) -> u32 {
    let mut rng = streams.derive(Subsystem::Detection, &[1, vehicle_id]);
    let u: f64 = rng.gen();
    if u < probs[0] {
        0
    } else if u < probs[0] + probs[1] {
        1
    } else {
        2
    }
}

/// Simulate one site's registrations over a finished run: for each vehicle
/// passing the site's location, each of its devices registers independently
/// with the site's detection probability at the true passage time.
pub fn simulate_detections(
    result: &RunResult,
    site: &DetectorSite,
    streams: &RngStreams,
) -> Result<DetectionLog, DetectError> {
    check_location(result, site.location)?;
    let tag = site_tag(&site.id);
    let mut events = Vec::new();
    for trip in &result.trips {
        let Some(t) = trip.time_at(site.location) else {
            continue;
        };
        let devices = device_count(streams, &site.device_count_probs, trip.vehicle_id);
        if devices == 0 {
            continue;
        }
        let mut rng = streams.derive(Subsystem::Detection, &[2, tag, trip.vehicle_id]);
        for k in 0..devices as u64 {
            let u: f64 = rng.gen();
            if u < site.detection_probability {
                events.push(DetectionEvent {
                    device_id: trip.vehicle_id * 2 + k,
                    vehicle_id: trip.vehicle_id,
                    timestamp_s: t,
                });
            }
        }
    }
    sort_events(&mut events);
    Ok(DetectionLog {
        site: site.id.clone(),
        events,
    })
}

/// A full-visibility capture at a location: every passing vehicle is seen
/// exactly once, identified by itself (device id = vehicle id).
pub fn camera_log(result: &RunResult, location: MeasurePoint, site: &str) -> Result<DetectionLog, DetectError> {
    check_location(result, location)?;
    let mut events: Vec<DetectionEvent> = result
        .trips
        .iter()
        .filter_map(|trip| {
            trip.time_at(location).map(|t| DetectionEvent {
                device_id: trip.vehicle_id,
                vehicle_id: trip.vehicle_id,
                timestamp_s: t,
            })
        })
        .collect();
    sort_events(&mut events);
    Ok(DetectionLog {
        site: site.to_string(),
        events,
    })
}

fn check_location(result: &RunResult, location: MeasurePoint) -> Result<(), DetectError> {
    let station = match location {
        MeasurePoint::StationEnter(s) | MeasurePoint::StationExit(s) => s,
        _ => return Ok(()),
    };
    if station >= result.station_ids.len() {
        return Err(DetectError::UnknownLocation(station));
    }
    Ok(())
}

fn sort_events(events: &mut [DetectionEvent]) {
    events.sort_by(|a, b| {
        a.timestamp_s
            .total_cmp(&b.timestamp_s)
            .then(a.device_id.cmp(&b.device_id))
    });
}

/// Drop all but the earliest of a vehicle's co-traveling signals that lie
/// within `window_s` of each other. Idempotent; output sorted.
pub fn dedupe(log: &DetectionLog, window_s: f64) -> DetectionLog {
    assert!(window_s >= 0.0, "window must be non-negative");
    let mut by_vehicle: BTreeMap<u64, Vec<DetectionEvent>> = BTreeMap::new();
    for e in &log.events {
        by_vehicle.entry(e.vehicle_id).or_default().push(*e);
    }
    let mut kept = Vec::with_capacity(log.events.len());
    for (_, mut group) in by_vehicle {
        group.sort_by(|a, b| {
            a.timestamp_s
                .total_cmp(&b.timestamp_s)
                .then(a.device_id.cmp(&b.device_id))
        });
        let mut last_kept: Option<f64> = None;
        for e in group {
            match last_kept {
                Some(t) if e.timestamp_s - t <= window_s => {}
                _ => {
                    last_kept = Some(e.timestamp_s);
                    kept.push(e);
                }
            }
        }
    }
    sort_events(&mut kept);
    DetectionLog {
        site: log.site.clone(),
        events: kept,
    }
}

/// Pair devices seen at both sites: per device, the earliest upstream
/// sighting matched to the earliest downstream sighting with
/// `0 < t2 - t1 <= max_trip_s`. One match per device.
pub fn match_trips(log1: &DetectionLog, log2: &DetectionLog, max_trip_s: f64) -> MatchedTrips {
    let mut downstream: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for e in &log2.events {
        downstream.entry(e.device_id).or_default().push(e.timestamp_s);
    }
    for times in downstream.values_mut() {
        times.sort_by(f64::total_cmp);
    }
    let mut upstream: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for e in &log1.events {
        upstream.entry(e.device_id).or_default().push(e.timestamp_s);
    }

    let mut trips = Vec::new();
    for (device, mut t1s) in upstream {
        let Some(t2s) = downstream.get(&device) else {
            continue;
        };
        t1s.sort_by(f64::total_cmp);
        'outer: for &t1 in &t1s {
            for &t2 in t2s {
                let gap = t2 - t1;
                if gap > 0.0 && gap <= max_trip_s {
                    trips.push(MatchedTrip {
                        device_id: device,
                        t1_s: t1,
                        t2_s: t2,
                    });
                    break 'outer;
                }
            }
        }
    }
    trips.sort_by(|a, b| a.t1_s.total_cmp(&b.t1_s).then(a.device_id.cmp(&b.device_id)));
    MatchedTrips { trips }
}

/// Normalized trip-time histogram (masses sum to 1 for non-empty input).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TripPdf {
    pub bin_width_s: f64,
    pub masses: Vec<f64>,
}

impl TripPdf {
    /// CSV with columns `bin_start_s,mass`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_start_s,mass\n");
        for (i, m) in self.masses.iter().enumerate() {
            let _ = writeln!(out, "{:.1},{:.6}", i as f64 * self.bin_width_s, m);
        }
        out
    }
}

pub fn trip_pdf(matches: &MatchedTrips, bin_s: f64) -> TripPdf {
    assert!(bin_s > 0.0, "bin width must be positive");
    let hist = Histogram::from_values(&matches.trip_times(), bin_s);
    TripPdf {
        bin_width_s: bin_s,
        masses: hist.masses(),
    }
}

/// One row of the source-comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceRow {
    pub source: String,
    pub summary: TripTimeSummary,
}

/// Pairwise two-sample KS comparison between sources.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourcePair {
    pub a: String,
    pub b: String,
    pub ks: KsOutcome,
}

/// Trip-time summaries per source plus pairwise KS distances and test
/// decisions at the given significance level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceComparison {
    pub rows: Vec<SourceRow>,
    pub pairs: Vec<SourcePair>,
    pub alpha: f64,
}

impl SourceComparison {
    pub fn pair(&self, a: &str, b: &str) -> Option<&SourcePair> {
        self.pairs
            .iter()
            .find(|p| (p.a == a && p.b == b) || (p.a == b && p.b == a))
    }

    /// Summary table in the shape of the published comparison: one column
    /// per source, rows mean/median/sd/max.
    pub fn table(&self) -> String {
        let mut out = String::from("metric");
        for row in &self.rows {
            let _ = write!(out, ",{}", row.source);
        }
        out.push('\n');
        type Getter = fn(&TripTimeSummary) -> f64;
        let lines: [(&str, Getter); 4] = [
            ("mean_s", |s| s.mean_s),
            ("median_s", |s| s.median_s),
            ("sd_s", |s| s.sd_s),
            ("max_s", |s| s.max_s),
        ];
        for (name, get) in lines {
            let _ = write!(out, "{name}");
            for row in &self.rows {
                let _ = write!(out, ",{:.1}", get(&row.summary));
            }
            out.push('\n');
        }
        for pair in &self.pairs {
            let _ = writeln!(
                out,
                "# ks {} vs {}: D={:.4} p={:.4} reject@{}={}",
                pair.a, pair.b, pair.ks.statistic, pair.ks.p_value, self.alpha, pair.ks.rejected
            );
        }
        out
    }
}

/// Compare trip-time samples from several sources: per-source summary rows
/// and pairwise two-sample KS decisions at significance `alpha`.
pub fn compare_trip_sources(
    sources: &[(&str, &[f64])],
    alpha: f64,
) -> Result<SourceComparison, DetectError> {
    for (name, samples) in sources {
        if samples.is_empty() {
            return Err(DetectError::EmptySource(name.to_string()));
        }
    }
    let rows = sources
        .iter()
        .map(|(name, samples)| SourceRow {
            source: name.to_string(),
            summary: TripTimeSummary::from_samples(samples),
        })
        .collect();
    let mut pairs = Vec::new();
    for i in 0..sources.len() {
        for j in i + 1..sources.len() {
            pairs.push(SourcePair {
                a: sources[i].0.to_string(),
                b: sources[j].0.to_string(),
                ks: ks_two_sample(sources[i].1, sources[j].1, alpha),
            });
        }
    }
    Ok(SourceComparison { rows, pairs, alpha })
}
