//! Bundled scenarios and demand-profile tooling.
//!
//! The real 2009 port dataset is not distributable; these fixtures carry its
//! published aggregates (weighbridge lane shares, flow-rate landmarks,
//! trip-time summaries) as synthetic stand-ins. Band share tables and
//! reference trip times are declared inputs for the comparison machinery,
//! not measurement claims.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::arrivals::DemandBins;
use crate::scenario::{
    AgentProfileSpec, BandSpec, ComparisonSection, DemandSpec, DetectorSpec,
    DeviceCountDistribution, FlowBandLabel, MeasureSection, RoutingSection, ScenarioConfig,
    ScenarioMeta, Segment, ServiceDistribution, ServiceModel, Station, StationKind,
    VehicleClass, VehicleClassId,
};

/// Observed 2009 weighbridge lane occupancy shares, lanes 1..5.
pub const OBSERVED_WEIGHBRIDGE_SHARES: [f64; 5] = [0.223, 0.254, 0.228, 0.156, 0.139];

/// The flow rates (veh/h) of the policy-comparison experiment.
pub const DOVER_FLOW_RATES: [f64; 6] = [30.0, 60.0, 90.0, 300.0, 600.0, 800.0];

/// Default effective lengths (vehicle + standstill gap), meters. The source
/// data never states lengths; these make queue-length-in-meters computable
/// and are scenario-overridable.
pub const RHV_EFFECTIVE_LENGTH_M: f64 = 17.0;
pub const TOURIST_EFFECTIVE_LENGTH_M: f64 = 6.0;

fn normal(mean_s: f64, sd_s: f64) -> ServiceModel {
    ServiceModel {
        distribution: ServiceDistribution::NormalTruncated { mean_s, sd_s },
        security_check_probability: 0.0,
        security_check_delay_s: 0.0,
    }
}

fn classes() -> Vec<VehicleClass> {
    vec![
        VehicleClass {
            id: VehicleClassId::Rhv,
            effective_length_m: RHV_EFFECTIVE_LENGTH_M,
            visits_weighbridge: true,
            visits_tourist_checkin: false,
        },
        VehicleClass {
            id: VehicleClassId::Tourist,
            effective_length_m: TOURIST_EFFECTIVE_LENGTH_M,
            visits_weighbridge: false,
            visits_tourist_checkin: true,
        },
    ]
}

fn admissible(entries: &[(VehicleClassId, &[u32])]) -> BTreeMap<VehicleClassId, Vec<u32>> {
    entries
        .iter()
        .map(|(class, lanes)| (*class, lanes.to_vec()))
        .collect()
}

fn dover_stations() -> Vec<Station> {
    vec![
        Station {
            id: "passport".to_string(),
            kind: StationKind::PassportCheck,
            lane_count: 6,
            approach_capacity_m: 120.0,
            // Service distribution is a configurable placeholder; the check
            // itself is documented but its timing is not.
            service: normal(12.0, 4.0),
            queue_discipline: Default::default(),
            admissible: admissible(&[
                (VehicleClassId::Rhv, &[1, 2, 3]),
                (VehicleClassId::Tourist, &[4, 5, 6]),
            ]),
        },
        Station {
            id: "weighbridge".to_string(),
            kind: StationKind::Weighbridge,
            lane_count: 5,
            approach_capacity_m: 250.0,
            service: normal(20.0, 2.0),
            queue_discipline: Default::default(),
            admissible: admissible(&[
                (VehicleClassId::Rhv, &[1, 2, 3, 4, 5]),
                (VehicleClassId::Tourist, &[]),
            ]),
        },
        Station {
            id: "ticketing".to_string(),
            kind: StationKind::Ticketing,
            lane_count: 16,
            approach_capacity_m: 100.0,
            // Uncalibrated placeholder, as for the passport check.
            service: normal(25.0, 6.0),
            queue_discipline: Default::default(),
            admissible: admissible(&[
                (VehicleClassId::Rhv, &[1, 2, 3, 4, 5, 6, 7, 8]),
                (VehicleClassId::Tourist, &[9, 10, 11, 12, 13, 14, 15, 16]),
            ]),
        },
    ]
}

fn dover_segments() -> Vec<Segment> {
    vec![
        Segment {
            id: "entry".to_string(),
            from: "source".to_string(),
            to: "passport".to_string(),
            free_flow_time_s: 45.0,
            storage_capacity_m: 600.0,
        },
        Segment {
            id: "passport-weighbridge".to_string(),
            from: "passport".to_string(),
            to: "weighbridge".to_string(),
            free_flow_time_s: 40.0,
            storage_capacity_m: 400.0,
        },
        Segment {
            id: "weighbridge-ticketing".to_string(),
            from: "weighbridge".to_string(),
            to: "ticketing".to_string(),
            free_flow_time_s: 35.0,
            storage_capacity_m: 400.0,
        },
        Segment {
            id: "ticketing-sink".to_string(),
            from: "ticketing".to_string(),
            to: "sink".to_string(),
            free_flow_time_s: 30.0,
            storage_capacity_m: 400.0,
        },
    ]
}

fn dover_routing() -> RoutingSection {
    RoutingSection {
        decision_station: "weighbridge".to_string(),
        average_shares: OBSERVED_WEIGHBRIDGE_SHARES.to_vec(),
        // Band boundaries sit midway between the named experiment rates;
        // per-band shares follow the qualitative low-flow concentration
        // pattern (exact per-band tables were never published). Reference
        // trip means are fixture declarations for the comparison reference.
        bands: vec![
            BandSpec {
                label: FlowBandLabel::Low,
                max_rate_veh_h: Some(90.0),
                shares: vec![0.38, 0.34, 0.16, 0.07, 0.05],
                reference_trip_mean_s: 62.0,
            },
            BandSpec {
                label: FlowBandLabel::Medium,
                max_rate_veh_h: Some(450.0),
                shares: vec![0.26, 0.28, 0.24, 0.12, 0.10],
                reference_trip_mean_s: 70.0,
            },
            BandSpec {
                label: FlowBandLabel::High,
                max_rate_veh_h: Some(700.0),
                shares: vec![0.228, 0.258, 0.230, 0.150, 0.134],
                reference_trip_mean_s: 80.0,
            },
            BandSpec {
                label: FlowBandLabel::VeryHigh,
                max_rate_veh_h: None,
                shares: vec![0.205, 0.21, 0.205, 0.19, 0.19],
                reference_trip_mean_s: 100.0,
            },
        ],
        agent_profiles: vec![AgentProfileSpec {
            preference: vec![1, 2, 3, 4, 5],
            switch_threshold: 2,
            lookahead: true,
            weight: 1.0,
        }],
    }
}

/// The bundled port-corridor fixture: passport check, five-lane weighbridge
/// with Normal(20 s, 2 s) service, ticketing, the observed-occupancy tables
/// and the demand profiles for the comparison flow rates. Base demand is a
/// synthetic 90-minute peak in 2-minute bins reaching ~800 veh/h.
pub fn default_dover_scenario() -> ScenarioConfig {
    let mut counts = BTreeMap::new();
    counts.insert(
        VehicleClassId::Rhv,
        peak_profile_counts().iter().map(|&c| c as i64).collect(),
    );
    counts.insert(VehicleClassId::Tourist, vec![3i64; 45]);
    ScenarioConfig {
        scenario: ScenarioMeta {
            id: "dover".to_string(),
            horizon_s: 7200.0,
            drain: true,
            warmup_s: 900.0,
        },
        class: classes(),
        station: dover_stations(),
        segment: dover_segments(),
        demand: DemandSpec {
            bin_width_s: 120.0,
            counts,
        },
        routing: dover_routing(),
        measure: MeasureSection {
            trip_from: "exit:passport".to_string(),
            trip_to: "exit:weighbridge".to_string(),
        },
        detector: vec![
            DetectorSpec {
                id: "site1".to_string(),
                location: "exit:passport".to_string(),
                detection_probability: 0.663,
                device_count_distribution: DeviceCountDistribution::default(),
            },
            DetectorSpec {
                id: "site2".to_string(),
                location: "exit:ticketing".to_string(),
                detection_probability: 0.104,
                device_count_distribution: DeviceCountDistribution::default(),
            },
        ],
        comparison: ComparisonSection {
            rates_veh_h: DOVER_FLOW_RATES.to_vec(),
            duration_s: 7200.0,
        },
    }
}

/// The 90-minute peak in 2-minute bins: a triangular ramp 10 -> 27 -> 10
/// vehicles per bin (300 -> 810 -> 300 veh/h).
fn peak_profile_counts() -> Vec<u64> {
    let mut counts = Vec::with_capacity(45);
    for bin in 0..45u64 {
        let distance = if bin <= 22 { bin } else { 44 - bin };
        counts.push(10 + (distance * 17 + 11) / 22);
    }
    counts
}

/// The trip-time validation fixture: four hours of wave-shaped mixed demand
/// with detector sites at both trip endpoints. Calibrated so the simulated
/// endpoint-to-endpoint trips land on the committed reference summary.
pub fn validation_scenario() -> ScenarioConfig {
    let mut cfg = default_dover_scenario();
    cfg.scenario.id = "dover-validation".to_string();
    cfg.scenario.horizon_s = 15000.0;
    // The capture-period corridor: a staffed security point between the
    // weighbridge and ticketing, two ticketing kiosks on freight duty, and
    // random secondary checks at the weighbridge.
    cfg.station = vec![
        cfg.station[0].clone(),
        Station {
            service: ServiceModel {
                distribution: ServiceDistribution::NormalTruncated { mean_s: 20.0, sd_s: 2.0 },
                security_check_probability: 0.07,
                security_check_delay_s: 230.0,
            },
            ..cfg.station[1].clone()
        },
        Station {
            id: "security".to_string(),
            kind: StationKind::SecurityCheck,
            lane_count: 2,
            approach_capacity_m: 150.0,
            service: normal(25.0, 6.0),
            queue_discipline: Default::default(),
            admissible: admissible(&[
                (VehicleClassId::Rhv, &[1, 2]),
                (VehicleClassId::Tourist, &[1, 2]),
            ]),
        },
        Station {
            service: normal(33.0, 8.0),
            admissible: admissible(&[
                (VehicleClassId::Rhv, &[1, 2]),
                (VehicleClassId::Tourist, &[9, 10, 11, 12, 13, 14, 15, 16]),
            ]),
            ..cfg.station[2].clone()
        },
    ];
    cfg.segment = vec![
        Segment {
            id: "entry".to_string(),
            from: "source".to_string(),
            to: "passport".to_string(),
            free_flow_time_s: 45.0,
            storage_capacity_m: 600.0,
        },
        Segment {
            id: "passport-weighbridge".to_string(),
            from: "passport".to_string(),
            to: "weighbridge".to_string(),
            free_flow_time_s: 70.0,
            storage_capacity_m: 700.0,
        },
        Segment {
            id: "weighbridge-security".to_string(),
            from: "weighbridge".to_string(),
            to: "security".to_string(),
            free_flow_time_s: 20.0,
            storage_capacity_m: 300.0,
        },
        Segment {
            id: "security-ticketing".to_string(),
            from: "security".to_string(),
            to: "ticketing".to_string(),
            free_flow_time_s: 20.0,
            storage_capacity_m: 300.0,
        },
        Segment {
            id: "ticketing-sink".to_string(),
            from: "ticketing".to_string(),
            to: "sink".to_string(),
            free_flow_time_s: 30.0,
            storage_capacity_m: 400.0,
        },
    ];
    let rhv = sine_wave_counts(210.0, 45.0, 2400.0, 120.0, 14400.0);
    let tourists = vec![2i64; 120];
    let mut counts = BTreeMap::new();
    counts.insert(VehicleClassId::Rhv, rhv.iter().map(|&c| c as i64).collect());
    counts.insert(VehicleClassId::Tourist, tourists);
    cfg.demand = DemandSpec {
        bin_width_s: 120.0,
        counts,
    };
    cfg.measure = MeasureSection {
        trip_from: "exit:passport".to_string(),
        trip_to: "exit:ticketing".to_string(),
    };
    cfg
}

/// Constant-rate per-bin counts by cumulative rounding: totals are exact for
/// any rate and the per-bin counts differ by at most one vehicle.
pub fn constant_rate_counts(rate_veh_h: f64, bin_width_s: f64, duration_s: f64) -> Vec<u64> {
    assert!(rate_veh_h >= 0.0 && bin_width_s > 0.0 && duration_s >= 0.0);
    let per_s = rate_veh_h / 3600.0;
    let bins = (duration_s / bin_width_s).round() as usize;
    let mut counts = Vec::with_capacity(bins);
    let mut prev = 0u64;
    for bin in 1..=bins {
        let cum = (per_s * bin_width_s * bin as f64).round() as u64;
        counts.push(cum - prev);
        prev = cum;
    }
    counts
}

/// Sine-wave demand counts (veh/h around `base` with amplitude `amp` and
/// the given period), discretized by cumulative rounding.
pub fn sine_wave_counts(
    base_veh_h: f64,
    amp_veh_h: f64,
    period_s: f64,
    bin_width_s: f64,
    duration_s: f64,
) -> Vec<u64> {
    assert!(amp_veh_h.abs() <= base_veh_h, "rate must stay non-negative");
    let bins = (duration_s / bin_width_s).round() as usize;
    let omega = std::f64::consts::TAU / period_s;
    // Closed-form integral of (base + amp*sin(omega t)) / 3600, in vehicles.
    let cum = |t: f64| (base_veh_h * t + amp_veh_h / omega * (1.0 - (omega * t).cos())) / 3600.0;
    let mut counts = Vec::with_capacity(bins);
    let mut prev = 0u64;
    for bin in 1..=bins {
        let c = cum(bin_width_s * bin as f64).round() as u64;
        counts.push(c.saturating_sub(prev));
        prev = c;
    }
    counts
}

/// Poisson-distributed per-bin counts at the given rate; combined with the
/// conditional-uniform placement this yields an exact homogeneous Poisson
/// arrival process.
pub fn poisson_counts(
    rate_per_s: f64,
    bin_width_s: f64,
    bins: usize,
    rng: &mut impl Rng,
) -> Vec<u64> {
    let dist = Poisson::new(rate_per_s * bin_width_s).expect("positive mean");
    (0..bins).map(|_| dist.sample(rng) as u64).collect()
}

/// A daily flow profile in 15-minute windows reproducing the published
/// landmarks: trough of 15 vehicles (60 veh/h) in the 02:00-02:15 window,
/// peak of 60 vehicles (240 veh/h) in the 15:15-15:30 window, a 4:1
/// peak-to-trough ratio.
pub fn day_profile_bins() -> DemandBins {
    const WINDOW_S: f64 = 900.0;
    const TROUGH_WINDOW: usize = 8; // 02:00
    const PEAK_WINDOW: usize = 61; // 15:15
    let rise = (PEAK_WINDOW - TROUGH_WINDOW) as f64;
    let fall = 96.0 - rise;
    let counts: Vec<u64> = (0..96)
        .map(|w| {
            let d = ((w + 96 - TROUGH_WINDOW) % 96) as f64;
            let shape = if d <= rise {
                (1.0 - (std::f64::consts::PI * d / rise).cos()) / 2.0
            } else {
                (1.0 + (std::f64::consts::PI * (d - rise) / fall).cos()) / 2.0
            };
            (15.0 + 45.0 * shape).round() as u64
        })
        .collect();
    DemandBins::single_class(VehicleClassId::Rhv, WINDOW_S, counts)
}

/// Derive a constant-rate RHV-only experiment scenario from a base config,
/// holding topology and routing fixed. Used by the policy-comparison grid.
pub fn scenario_for_rate(base: &ScenarioConfig, rate_veh_h: f64, duration_s: f64) -> ScenarioConfig {
    let mut cfg = base.clone();
    cfg.scenario.id = format!("{}-{}vph", base.scenario.id, rate_veh_h.round() as u64);
    cfg.scenario.horizon_s = duration_s.max(cfg.demand.bin_width_s);
    let counts = constant_rate_counts(rate_veh_h, cfg.demand.bin_width_s, duration_s)
        .iter()
        .map(|&c| c as i64)
        .collect();
    let mut demand = BTreeMap::new();
    demand.insert(VehicleClassId::Rhv, counts);
    cfg.demand.counts = demand;
    cfg
}

/// A single shared-queue station fed by one short entry segment, for
/// queueing-theory oracle runs (M/M/c when service is exponential).
pub fn shared_queue_station_scenario(
    bays: u32,
    service: ServiceDistribution,
    horizon_s: f64,
) -> ScenarioConfig {
    let mut counts = BTreeMap::new();
    counts.insert(VehicleClassId::Rhv, Vec::new());
    ScenarioConfig {
        scenario: ScenarioMeta {
            id: "single-station".to_string(),
            horizon_s,
            drain: true,
            warmup_s: 900.0,
        },
        class: classes(),
        station: vec![Station {
            id: "station".to_string(),
            kind: StationKind::Weighbridge,
            lane_count: bays,
            approach_capacity_m: 1.0e9,
            service: ServiceModel {
                distribution: service,
                security_check_probability: 0.0,
                security_check_delay_s: 0.0,
            },
            queue_discipline: crate::scenario::QueueDiscipline::Shared,
            admissible: admissible(&[
                (VehicleClassId::Rhv, &(1..=bays).collect::<Vec<_>>()),
                (VehicleClassId::Tourist, &[]),
            ]),
        }],
        segment: vec![
            Segment {
                id: "entry".to_string(),
                from: "source".to_string(),
                to: "station".to_string(),
                free_flow_time_s: 1.0,
                storage_capacity_m: 1.0e9,
            },
            Segment {
                id: "out".to_string(),
                from: "station".to_string(),
                to: "sink".to_string(),
                free_flow_time_s: 1.0,
                storage_capacity_m: 1.0e9,
            },
        ],
        demand: DemandSpec {
            bin_width_s: 120.0,
            counts,
        },
        routing: RoutingSection {
            decision_station: "station".to_string(),
            average_shares: vec![1.0 / bays as f64; bays as usize],
            bands: Vec::new(),
            agent_profiles: Vec::new(),
        },
        measure: MeasureSection {
            trip_from: "enter:station".to_string(),
            trip_to: "exit:station".to_string(),
        },
        detector: Vec::new(),
        comparison: Default::default(),
    }
}

// Committed trip-time sample fixtures carrying the published summary rows
// (mean/median/sd/max): simulation (319/291/110/729), wireless capture
// (358/301/181/1250), camera capture (343/306/137/860).

pub fn simulation_trip_samples() -> Vec<f64> {
    SIMULATION_TRIP_SAMPLES.to_vec()
}

pub fn bluetooth_trip_samples() -> Vec<f64> {
    BLUETOOTH_TRIP_SAMPLES.to_vec()
}

pub fn camera_trip_samples() -> Vec<f64> {
    CAMERA_TRIP_SAMPLES.to_vec()
}

const SIMULATION_TRIP_SAMPLES: [f64; 104] = [
    144.3, 158.6, 167.0, 173.4, 178.7, 183.3, 187.5, 191.3, 194.8, 198.2, 201.3, 204.4, 207.3,
    210.1, 212.8, 215.4, 218.0, 220.5, 223.0, 225.4, 227.8, 230.1, 232.4, 234.7, 237.0, 239.2,
    241.4, 243.6, 245.8, 248.0, 250.2, 252.4, 254.5, 256.7, 258.9, 261.0, 263.2, 265.3, 267.5,
    269.7, 271.9, 274.0, 276.2, 278.4, 280.7, 282.9, 285.1, 287.4, 289.7, 290.0, 290.1, 291.0,
    291.0, 301.4, 303.8, 306.3, 308.7, 311.3, 313.8, 316.4, 319.0, 321.7, 324.4, 327.1, 329.9,
    332.8, 335.7, 338.7, 341.7, 344.8, 348.0, 351.2, 354.5, 357.9, 361.5, 365.1, 368.8, 372.6,
    376.6, 380.7, 385.0, 389.4, 394.0, 398.8, 403.8, 409.0, 414.6, 420.4, 426.6, 433.1, 440.1,
    447.6, 455.7, 464.6, 474.2, 485.0, 497.1, 510.8, 526.9, 546.3, 570.5, 603.2, 653.2, 729.0,
];

const BLUETOOTH_TRIP_SAMPLES: [f64; 104] = [
    127.6, 141.5, 150.0, 156.8, 162.5, 167.5, 172.1, 176.4, 180.4, 184.3, 187.9, 191.4, 194.9,
    198.2, 201.4, 204.6, 207.7, 210.8, 213.8, 216.8, 219.7, 222.6, 225.5, 228.4, 231.3, 234.1,
    237.0, 239.8, 242.7, 245.5, 248.3, 251.2, 254.0, 256.9, 259.7, 262.6, 265.5, 268.4, 271.3,
    274.3, 277.2, 280.2, 283.2, 286.3, 289.3, 292.4, 295.5, 298.7, 299.6, 300.1, 300.8, 300.8,
    301.2, 318.5, 322.0, 325.5, 329.1, 332.8, 336.5, 340.3, 344.1, 348.1, 352.1, 356.2, 360.3,
    364.6, 369.0, 373.5, 378.1, 382.8, 387.7, 392.7, 397.8, 403.1, 408.6, 414.2, 420.1, 426.2,
    432.5, 439.0, 445.8, 453.0, 460.4, 468.2, 476.4, 485.1, 494.2, 504.0, 514.3, 525.4, 537.3,
    550.2, 564.2, 579.5, 596.6, 615.6, 637.2, 662.2, 691.7, 727.7, 773.7, 836.8, 936.4, 1250.0,
];

const CAMERA_TRIP_SAMPLES: [f64; 104] = [
    136.8, 152.2, 161.5, 168.5, 174.5, 179.6, 184.3, 188.6, 192.7, 196.5, 200.1, 203.5, 206.9,
    210.1, 213.2, 216.3, 219.2, 222.1, 225.0, 227.8, 230.6, 233.3, 236.0, 238.7, 241.4, 244.0,
    246.6, 249.2, 251.8, 254.4, 257.0, 259.5, 262.1, 264.7, 267.2, 269.8, 272.4, 275.0, 277.6,
    280.2, 282.8, 285.4, 288.0, 290.7, 293.3, 296.0, 298.8, 301.5, 304.3, 304.7, 305.0, 305.9,
    306.1, 318.5, 321.4, 324.4, 327.4, 330.5, 333.6, 336.8, 340.0, 343.3, 346.6, 350.0, 353.5,
    357.0, 360.6, 364.3, 368.0, 371.9, 375.8, 379.9, 384.0, 388.3, 392.7, 397.2, 401.8, 406.7,
    411.6, 416.8, 422.2, 427.8, 433.6, 439.7, 446.0, 452.7, 459.7, 467.2, 475.0, 483.4, 492.4,
    502.1, 512.6, 524.0, 536.5, 550.5, 566.2, 584.3, 605.4, 630.9, 663.1, 706.7, 774.2, 860.0,
];
