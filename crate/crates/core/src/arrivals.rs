//! Arrival-schedule generation and flow-profile analysis.
//!
//! Demand is specified as exact per-bin vehicle counts. Within a bin the
//! entry timestamps are the order statistics of independent uniforms, which
//! is the conditional law of a Poisson process given its bin count — the
//! construction produces exactly the configured number of vehicles per bin
//! while keeping Poisson within-bin dynamics.

use std::io::{Read, Write};

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::scenario::{NetworkTopology, VehicleClassId};
use crate::stats::Histogram;

/// Per-bin demand counts per class.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandBins {
    pub bin_width_s: f64,
    pub per_class: Vec<ClassBins>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassBins {
    pub class: VehicleClassId,
    pub counts: Vec<u64>,
}

impl DemandBins {
    pub fn single_class(class: VehicleClassId, bin_width_s: f64, counts: Vec<u64>) -> Self {
        DemandBins {
            bin_width_s,
            per_class: vec![ClassBins { class, counts }],
        }
    }

    pub fn from_topology(topo: &NetworkTopology) -> Self {
        DemandBins {
            bin_width_s: topo.demand_bin_width_s,
            per_class: topo
                .demand_counts
                .iter()
                .map(|(class, counts)| ClassBins {
                    class: *class,
                    counts: counts.clone(),
                })
                .collect(),
        }
    }

    pub fn total(&self) -> u64 {
        self.per_class
            .iter()
            .map(|c| c.counts.iter().sum::<u64>())
            .sum()
    }

    /// Time span covered by the longest class profile.
    pub fn span_s(&self) -> f64 {
        let bins = self
            .per_class
            .iter()
            .map(|c| c.counts.len())
            .max()
            .unwrap_or(0);
        bins as f64 * self.bin_width_s
    }
}

/// One scheduled network entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArrivalEntry {
    pub time_s: f64,
    pub class: VehicleClassId,
    pub vehicle_id: u64,
}

/// A sorted arrival schedule with dense vehicle ids `0..n`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ArrivalSchedule {
    pub entries: Vec<ArrivalEntry>,
}

impl ArrivalSchedule {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Windowed arrival counts.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSeries {
    pub window_s: f64,
    pub counts: Vec<u64>,
}

impl FlowSeries {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Peak-to-trough count ratio over the covered windows.
    pub fn max_min_ratio(&self) -> Option<f64> {
        let max = self.counts.iter().max()?;
        let min = self.counts.iter().min()?;
        if *min == 0 {
            None
        } else {
            Some(*max as f64 / *min as f64)
        }
    }
}

/// Generate the arrival schedule for the given demand. For each bin with
/// count N, exactly N timestamps are placed in the bin as sorted uniforms.
/// Ties are permitted and broken by vehicle id; ids are assigned densely in
/// timestamp order so output order is fully deterministic in (bins, seed).
pub fn arrivals_from_bins(bins: &DemandBins, rng: &mut impl Rng) -> ArrivalSchedule {
    // (time, class, generation index) — the generation index makes the sort
    // total even for exactly tied timestamps.
    let mut raw: Vec<(f64, VehicleClassId, u64)> = Vec::with_capacity(bins.total() as usize);
    let mut gen_index = 0u64;
    for class_bins in &bins.per_class {
        for (bin, &count) in class_bins.counts.iter().enumerate() {
            let start = bin as f64 * bins.bin_width_s;
            for _ in 0..count {
                let t = start + rng.gen::<f64>() * bins.bin_width_s;
                raw.push((t, class_bins.class, gen_index));
                gen_index += 1;
            }
        }
    }
    raw.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
    ArrivalSchedule {
        entries: raw
            .into_iter()
            .enumerate()
            .map(|(id, (time_s, class, _))| ArrivalEntry {
                time_s,
                class,
                vehicle_id: id as u64,
            })
            .collect(),
    }
}

/// Windowed arrival counts from time zero over the schedule span. The total
/// over all windows equals the schedule size for every window width.
pub fn rate_profile(schedule: &ArrivalSchedule, window_s: f64) -> FlowSeries {
    assert!(window_s > 0.0, "window must be positive");
    if schedule.is_empty() {
        return FlowSeries {
            window_s,
            counts: Vec::new(),
        };
    }
    let last = schedule.entries.last().unwrap().time_s;
    let n_windows = (last / window_s).floor() as usize + 1;
    let mut counts = vec![0u64; n_windows];
    for entry in &schedule.entries {
        let idx = ((entry.time_s / window_s).floor() as usize).min(n_windows - 1);
        counts[idx] += 1;
    }
    FlowSeries { window_s, counts }
}

/// Histogram of successive interarrival gaps. Counts sum to
/// `max(len - 1, 0)`.
pub fn interarrival_histogram(schedule: &ArrivalSchedule, bin_s: f64) -> Histogram {
    assert!(bin_s > 0.0, "bin width must be positive");
    let gaps: Vec<f64> = schedule
        .entries
        .windows(2)
        .map(|w| w[1].time_s - w[0].time_s)
        .collect();
    Histogram::from_values(&gaps, bin_s)
}

#[derive(Debug, Error)]
pub enum DemandCsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
}

/// Read demand bins from CSV with columns `bin_index,class,count`. Missing
/// bins default to zero; classes appear in first-seen order.
pub fn demand_bins_from_csv(reader: impl Read, bin_width_s: f64) -> Result<DemandBins, DemandCsvError> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut per_class: Vec<ClassBins> = Vec::new();
    for (i, record) in csv_reader.records().enumerate() {
        let record = record?;
        let row = i + 2; // 1-based, after the header
        let field = |idx: usize, name: &str| -> Result<String, DemandCsvError> {
            record
                .get(idx)
                .map(str::trim)
                .map(String::from)
                .ok_or_else(|| DemandCsvError::Row {
                    row,
                    message: format!("missing column {name}"),
                })
        };
        let bin_index: usize = field(0, "bin_index")?
            .parse()
            .map_err(|e| DemandCsvError::Row {
                row,
                message: format!("bad bin_index: {e}"),
            })?;
        let class_text = field(1, "class")?;
        let class = match class_text.as_str() {
            "RHV" => VehicleClassId::Rhv,
            "Tourist" => VehicleClassId::Tourist,
            other => {
                return Err(DemandCsvError::Row {
                    row,
                    message: format!("unknown class {other:?}"),
                })
            }
        };
        let count: u64 = field(2, "count")?
            .parse()
            .map_err(|e| DemandCsvError::Row {
                row,
                message: format!("bad count: {e}"),
            })?;
        let class_bins = match per_class.iter_mut().find(|c| c.class == class) {
            Some(existing) => existing,
            None => {
                per_class.push(ClassBins {
                    class,
                    counts: Vec::new(),
                });
                per_class.last_mut().unwrap()
            }
        };
        if class_bins.counts.len() <= bin_index {
            class_bins.counts.resize(bin_index + 1, 0);
        }
        class_bins.counts[bin_index] += count;
    }
    Ok(DemandBins {
        bin_width_s,
        per_class,
    })
}

/// Write a schedule as CSV with columns `timestamp_s,class,vehicle_id`.
pub fn schedule_to_csv(schedule: &ArrivalSchedule, mut writer: impl Write) -> std::io::Result<()> {
    writeln!(writer, "timestamp_s,class,vehicle_id")?;
    for entry in &schedule.entries {
        writeln!(writer, "{:.6},{},{}", entry.time_s, entry.class, entry.vehicle_id)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bins(counts: Vec<u64>) -> DemandBins {
        DemandBins::single_class(VehicleClassId::Rhv, 120.0, counts)
    }

    #[test]
    fn exact_counts_per_bin() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let schedule = arrivals_from_bins(&bins(vec![3, 0, 2]), &mut rng);
        assert_eq!(schedule.len(), 5);
        let in_range = |lo: f64, hi: f64| {
            schedule
                .entries
                .iter()
                .filter(|e| e.time_s >= lo && e.time_s < hi)
                .count()
        };
        assert_eq!(in_range(0.0, 120.0), 3);
        assert_eq!(in_range(120.0, 240.0), 0);
        assert_eq!(in_range(240.0, 360.0), 2);
    }

    #[test]
    fn same_seed_same_schedule() {
        let a = arrivals_from_bins(&bins(vec![5, 2, 7]), &mut ChaCha8Rng::seed_from_u64(42));
        let b = arrivals_from_bins(&bins(vec![5, 2, 7]), &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(a, b);
        let c = arrivals_from_bins(&bins(vec![5, 2, 7]), &mut ChaCha8Rng::seed_from_u64(43));
        assert_ne!(a, c);
    }

    #[test]
    fn timestamps_sorted_and_ids_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let schedule = arrivals_from_bins(&bins(vec![10, 20, 5, 0, 9]), &mut rng);
        for (i, pair) in schedule.entries.windows(2).enumerate() {
            assert!(pair[0].time_s <= pair[1].time_s, "unsorted at {i}");
        }
        for (i, e) in schedule.entries.iter().enumerate() {
            assert_eq!(e.vehicle_id, i as u64);
        }
    }

    #[test]
    fn rate_profile_preserves_totals() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let schedule = arrivals_from_bins(&bins(vec![4]), &mut rng);
        // 4 vehicles in [0, 120) with window 900 -> single window of 4.
        let series = rate_profile(&schedule, 900.0);
        assert_eq!(series.counts, vec![4]);
        for window in [10.0, 60.0, 450.0] {
            assert_eq!(rate_profile(&schedule, window).total(), 4);
        }
    }

    #[test]
    fn rate_profile_empty_schedule() {
        let series = rate_profile(&ArrivalSchedule::default(), 900.0);
        assert!(series.counts.is_empty());
    }

    #[test]
    fn interarrival_hand_example() {
        let schedule = ArrivalSchedule {
            entries: vec![
                ArrivalEntry { time_s: 0.0, class: VehicleClassId::Rhv, vehicle_id: 0 },
                ArrivalEntry { time_s: 10.0, class: VehicleClassId::Rhv, vehicle_id: 1 },
                ArrivalEntry { time_s: 30.0, class: VehicleClassId::Rhv, vehicle_id: 2 },
            ],
        };
        // Differences are {10, 20}: one count in [10, 20), one in [20, 30).
        let hist = interarrival_histogram(&schedule, 10.0);
        assert_eq!(hist.counts, vec![0, 1, 1]);
        assert_eq!(hist.total(), 2);
    }

    #[test]
    fn interarrival_single_vehicle_empty() {
        let schedule = ArrivalSchedule {
            entries: vec![ArrivalEntry {
                time_s: 5.0,
                class: VehicleClassId::Rhv,
                vehicle_id: 0,
            }],
        };
        assert!(interarrival_histogram(&schedule, 10.0).is_empty());
    }

    #[test]
    fn demand_csv_round_trip() {
        let csv_text = "bin_index,class,count\n0,RHV,3\n1,RHV,0\n2,RHV,2\n0,Tourist,1\n";
        let bins = demand_bins_from_csv(csv_text.as_bytes(), 120.0).unwrap();
        assert_eq!(bins.per_class.len(), 2);
        assert_eq!(bins.per_class[0].counts, vec![3, 0, 2]);
        assert_eq!(bins.per_class[1].counts, vec![1]);
    }

    #[test]
    fn schedule_csv_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let schedule = arrivals_from_bins(&bins(vec![2]), &mut rng);
        let mut out = Vec::new();
        schedule_to_csv(&schedule, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("timestamp_s,class,vehicle_id"));
        assert_eq!(lines.count(), 2);
    }

    /// A homogeneous profile (Poisson bin counts + conditional-uniform
    /// placement) is an exact Poisson process, so interarrival gaps must be
    /// exponential. Chi-square against the analytic per-bin masses.
    #[test]
    fn interarrivals_of_homogeneous_profile_are_exponential() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};

        let rate = 0.05; // per second
        let bin_width = 120.0;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut counts;
        loop {
            counts = crate::fixtures::poisson_counts(rate, bin_width, 2100, &mut rng);
            if counts.iter().sum::<u64>() > 10_000 {
                break;
            }
        }
        let schedule = arrivals_from_bins(
            &DemandBins::single_class(VehicleClassId::Rhv, bin_width, counts),
            &mut rng,
        );
        assert!(schedule.len() > 10_000);

        let hist_bin = 10.0;
        let hist = interarrival_histogram(&schedule, hist_bin);
        let n = hist.total() as f64;
        // Merge the tail so every expected count is comfortably large.
        let k_max = ((-(20.0f64 / n).ln()) / (rate * hist_bin)).floor() as usize;
        let mut observed = vec![0.0; k_max + 1];
        for (k, &count) in hist.counts.iter().enumerate() {
            observed[k.min(k_max)] += count as f64;
        }
        let mut chi2 = 0.0;
        for (k, &obs) in observed.iter().enumerate() {
            let p = if k < k_max {
                (-rate * hist_bin * k as f64).exp() - (-rate * hist_bin * (k + 1) as f64).exp()
            } else {
                (-rate * hist_bin * k as f64).exp()
            };
            let expected = n * p;
            chi2 += (obs - expected) * (obs - expected) / expected;
        }
        let dof = observed.len() as f64 - 1.0;
        let critical = ChiSquared::new(dof).unwrap().inverse_cdf(0.99);
        assert!(
            chi2 <= critical,
            "chi-square {chi2:.2} exceeds the 0.01-level critical value {critical:.2} (dof {dof})"
        );
    }

    proptest::proptest! {
        /// rate_profile preserves the schedule cardinality for every window.
        #[test]
        fn rate_profile_total_invariant(
            counts in proptest::collection::vec(0u64..6, 1..20),
            window in 1.0f64..2000.0,
            seed in 0u64..1000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let schedule = arrivals_from_bins(&bins(counts.clone()), &mut rng);
            let series = rate_profile(&schedule, window);
            proptest::prop_assert_eq!(series.total(), counts.iter().sum::<u64>());
        }
    }
}
