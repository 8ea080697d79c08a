//! Command-line runner: reproducible single runs, multi-seed replication,
//! the policy x flow-rate comparison experiment, and the partial-detection
//! trip-time validation pipeline.
//!
//! All randomness flows from `--seed`; equal invocations produce
//! byte-identical artifacts. Exit codes: 0 success, 2 user/config error,
//! 1 internal error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use corridor_sim::detect::{
    camera_log, compare_trip_sources, dedupe, match_trips, simulate_detections, trip_pdf,
    MatchedTrips, TripPdf, DEFAULT_DEDUPE_WINDOW_S, DEFAULT_MAX_TRIP_S,
};
use corridor_sim::engine::{replicate_topology, run_topology, RngStreams, RunResult};
use corridor_sim::fixtures;
use corridor_sim::metrics::{policy_comparison, seed_spread, trip_time_stats};
use corridor_sim::routing::PolicyKind;
use corridor_sim::scenario::{NetworkTopology, ScenarioConfig, ScenarioError};

#[derive(Parser)]
#[command(
    name = "corridor",
    about = "Deterministic port-corridor traffic microsimulator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Scenario file (TOML or JSON), or a builtin name: `dover`,
    /// `validation`. Defaults to `dover` (`validation` for the validate
    /// subcommand).
    #[arg(long)]
    scenario: Option<String>,

    /// Routing policy at the decision station.
    #[arg(long, default_value = "agent", value_parser = ["prob-avg", "prob-flow", "agent"])]
    policy: String,

    /// Master random seed (also the base seed for seed ranges).
    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Override the scenario's warm-up window, seconds.
    #[arg(long)]
    warmup: Option<f64>,

    /// Stop at the horizon instead of draining the system.
    #[arg(long)]
    no_drain: bool,
}

#[derive(Subcommand)]
enum Command {
    /// One seeded run: trips CSV, queue-series CSV and a run manifest.
    Run {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Replications over a seed range, plus a seed-sensitivity report.
    Replicate {
        #[command(flatten)]
        common: CommonArgs,

        /// Number of replications (seeds `--seed .. --seed + N - 1`).
        #[arg(long, default_value_t = 21)]
        seeds: u64,
    },
    /// The policy x flow-rate grid with scorecard and plot-ready CSVs.
    Compare {
        #[command(flatten)]
        common: CommonArgs,

        /// Replications per grid cell.
        #[arg(long, default_value_t = 21)]
        seeds: u64,

        /// Comma-separated policies to compare.
        #[arg(long, default_value = "prob-avg,prob-flow,agent", value_delimiter = ',')]
        policies: Vec<String>,

        /// Flow rates in veh/h (defaults to the scenario's comparison set).
        #[arg(long, value_delimiter = ',')]
        rates: Option<Vec<f64>>,
    },
    /// Partial-detection validation: detector logs, matches, trip-time
    /// summary table and PDFs.
    Validate {
        #[command(flatten)]
        common: CommonArgs,

        /// Duplicate-signal window, seconds; 0 disables deduplication.
        #[arg(long, default_value_t = DEFAULT_DEDUPE_WINDOW_S)]
        dedupe_window: f64,

        /// Longest plausible site-to-site trip, seconds.
        #[arg(long, default_value_t = DEFAULT_MAX_TRIP_S)]
        max_trip: f64,

        /// Trip-time PDF bin width, seconds.
        #[arg(long, default_value_t = 60.0)]
        pdf_bin: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.is::<ConfigError>() || err.downcast_ref::<ScenarioError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

/// User/configuration mistakes (exit code 2), as opposed to internal bugs.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_error(message: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(ConfigError(message.into()))
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { common } => cmd_run(&common),
        Command::Replicate { common, seeds } => cmd_replicate(&common, seeds),
        Command::Compare {
            common,
            seeds,
            policies,
            rates,
        } => cmd_compare(&common, seeds, &policies, rates),
        Command::Validate {
            common,
            dedupe_window,
            max_trip,
            pdf_bin,
        } => cmd_validate(&common, dedupe_window, max_trip, pdf_bin),
    }
}

fn load_scenario_arg(common: &CommonArgs, default_builtin: &str) -> Result<ScenarioConfig> {
    let name = common.scenario.as_deref().unwrap_or(default_builtin);
    let mut cfg = match name {
        "dover" => fixtures::default_dover_scenario(),
        "validation" => fixtures::validation_scenario(),
        path => {
            let path = Path::new(path);
            if !path.exists() {
                return Err(config_error(format!("scenario file {path:?} not found")));
            }
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading scenario {path:?}"))?;
            corridor_sim::scenario::load_scenario(&text)
                .map_err(|e| config_error(format!("invalid scenario {path:?}: {e}")))?
        }
    };
    if let Some(warmup) = common.warmup {
        cfg.scenario.warmup_s = warmup;
    }
    if common.no_drain {
        cfg.scenario.drain = false;
    }
    Ok(cfg)
}

fn validated(
    common: &CommonArgs,
    default_builtin: &str,
) -> Result<(ScenarioConfig, NetworkTopology, PolicyKind)> {
    let cfg = load_scenario_arg(common, default_builtin)?;
    let topo = cfg
        .validate()
        .map_err(|e| config_error(format!("invalid scenario: {e}")))?;
    let policy = PolicyKind::from_name(&common.policy, &topo)
        .map_err(|e| config_error(e.to_string()))?;
    Ok((cfg, topo, policy))
}

/// Write atomically: a temp file in the target directory, then rename.
/// Failures here are environment problems (unwritable directory), reported
/// as config errors.
fn write_artifact(dir: &Path, name: &str, bytes: &str) -> Result<()> {
    let io = |what: &str, e: std::io::Error| config_error(format!("{what}: {e}"));
    fs::create_dir_all(dir).map_err(|e| io(&format!("creating {dir:?}"), e))?;
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, bytes).map_err(|e| io(&format!("writing {tmp:?}"), e))?;
    let target = dir.join(name);
    fs::rename(&tmp, &target).map_err(|e| io(&format!("renaming into {target:?}"), e))?;
    Ok(())
}

fn write_run_artifacts(dir: &Path, result: &RunResult) -> Result<()> {
    write_artifact(dir, "trips.csv", &result.trips_csv())?;
    write_artifact(dir, "queues.csv", &result.queue_series_csv())?;
    write_artifact(dir, "manifest.toml", &result.manifest_toml())?;
    Ok(())
}

fn cmd_run(common: &CommonArgs) -> Result<()> {
    let (_, topo, policy) = validated(common, "dover")?;
    let result = run_topology(&topo, &policy, common.seed);
    result.check_conservation().map_err(|e| anyhow!(e))?;
    write_run_artifacts(&common.out, &result)?;
    let stats = trip_time_stats(&result, topo.trip_from, topo.trip_to);
    println!(
        "run complete: {} scheduled, {} served; trip mean {:.1} s over {} trips -> {:?}",
        result.scheduled, result.exited, stats.mean_s, stats.n, common.out
    );
    Ok(())
}

fn cmd_replicate(common: &CommonArgs, seeds: u64) -> Result<()> {
    if seeds == 0 {
        return Err(config_error("--seeds must be at least 1"));
    }
    let (_, topo, policy) = validated(common, "dover")?;
    let seed_list: Vec<u64> = (common.seed..common.seed + seeds).collect();
    let reps = replicate_topology(&topo, &policy, &seed_list);
    for result in &reps.runs {
        result.check_conservation().map_err(|e| anyhow!(e))?;
        write_run_artifacts(&common.out.join(format!("seed-{}", result.seed)), result)?;
    }
    if reps.len() >= 2 {
        let station = &topo.stations[topo.decision_station].id;
        let spread = seed_spread(&reps.runs, station, topo.trip_from, topo.trip_to)
            .map_err(|e| anyhow!(e))?;
        let header = format!(
            "# scenario={} policy={} seeds={}..{}\n",
            topo.scenario_hash,
            common.policy,
            seed_list.first().unwrap(),
            seed_list.last().unwrap()
        );
        let mut means = format!("{header}seed,trip_mean_s\n");
        for (seed, mean) in seed_list.iter().zip(&spread.per_seed_trip_means) {
            means.push_str(&format!("{seed},{mean:.3}\n"));
        }
        write_artifact(&common.out, "per_seed_trip_means.csv", &means)?;
        let report = format!(
            "{header}seeds = {}\nmax_queue_diff_m = {:.3}\nmax_trip_mean_ratio = {:.4}\ncov_trip_mean = {:.4}\n",
            reps.len(),
            spread.max_queue_diff_m,
            spread.max_trip_mean_ratio,
            spread.cov_trip_mean
        );
        write_artifact(&common.out, "spread.toml", &report)?;
        println!(
            "{} replications: max queue spread {:.1} m, trip-mean ratio {:.3}, cov {:.4} -> {:?}",
            reps.len(),
            spread.max_queue_diff_m,
            spread.max_trip_mean_ratio,
            spread.cov_trip_mean,
            common.out
        );
    } else {
        println!("1 replication -> {:?}", common.out);
    }
    Ok(())
}

fn cmd_compare(
    common: &CommonArgs,
    seeds: u64,
    policies: &[String],
    rates: Option<Vec<f64>>,
) -> Result<()> {
    if seeds == 0 {
        return Err(config_error("--seeds must be at least 1"));
    }
    let cfg = load_scenario_arg(common, "dover")?;
    cfg.validate()
        .map_err(|e| config_error(format!("invalid scenario: {e}")))?;
    let rates = rates.unwrap_or_else(|| cfg.comparison.rates_veh_h.clone());
    if rates.is_empty() {
        return Err(config_error(
            "no rates given and the scenario declares no comparison rates",
        ));
    }
    let policy_names: Vec<&str> = policies.iter().map(String::as_str).collect();
    let seed_list: Vec<u64> = (common.seed..common.seed + seeds).collect();
    let report = policy_comparison(&cfg, &policy_names, &rates, &seed_list)
        .map_err(|e| config_error(e.to_string()))?;

    let header = format!(
        "# scenario={} policies={} seeds={}..{}\n",
        cfg.hash(),
        policies.join("+"),
        seed_list.first().unwrap(),
        seed_list.last().unwrap()
    );
    write_artifact(&common.out, "comparison.csv", &format!("{header}{}", report.comparison_csv()))?;
    write_artifact(&common.out, "lane_shares.csv", &format!("{header}{}", report.lane_shares_csv()))?;
    write_artifact(
        &common.out,
        "occupancy_error.csv",
        &format!("{header}{}", report.occupancy_error_csv()),
    )?;
    write_artifact(&common.out, "trip_times.csv", &format!("{header}{}", report.trip_times_csv()))?;
    write_artifact(&common.out, "scorecard.txt", &format!("{header}{}", report.scorecard()))?;
    println!("{}", report.scorecard());
    println!("comparison artifacts -> {:?}", common.out);
    Ok(())
}

fn cmd_validate(common: &CommonArgs, dedupe_window: f64, max_trip: f64, pdf_bin: f64) -> Result<()> {
    // `validate` defaults to the bundled validation corridor rather than the
    // base scenario.
    let common = common.clone();
    let (cfg, topo, policy) = validated(&common, "validation")?;
    if topo.detectors.len() < 2 {
        return Err(config_error(format!(
            "validation needs two detector sites, scenario {:?} declares {}",
            cfg.scenario.id,
            topo.detectors.len()
        )));
    }
    let result = run_topology(&topo, &policy, common.seed);
    result.check_conservation().map_err(|e| anyhow!(e))?;
    let streams = RngStreams::new(common.seed);

    let site1 = &topo.detectors[0];
    let site2 = &topo.detectors[1];
    let raw1 = simulate_detections(&result, site1, &streams).map_err(|e| anyhow!(e))?;
    let raw2 = simulate_detections(&result, site2, &streams).map_err(|e| anyhow!(e))?;
    // Window 0 disables deduplication entirely.
    let (log1, log2) = if dedupe_window > 0.0 {
        (dedupe(&raw1, dedupe_window), dedupe(&raw2, dedupe_window))
    } else {
        (raw1, raw2)
    };
    let bluetooth = match_trips(&log1, &log2, max_trip);

    let cam1 = camera_log(&result, site1.location, "camera1").map_err(|e| anyhow!(e))?;
    let cam2 = camera_log(&result, site2.location, "camera2").map_err(|e| anyhow!(e))?;
    let camera = match_trips(&cam1, &cam2, max_trip);

    let simulated = result.trip_times_between(site1.location, site2.location, result.warmup_s);
    let bt_times = bluetooth.trip_times();
    let cam_times = camera.trip_times();
    let comparison = compare_trip_sources(
        &[
            ("simulation", &simulated),
            ("bluetooth", &bt_times),
            ("camera", &cam_times),
        ],
        0.05,
    )
    .map_err(|e| config_error(e.to_string()))?;

    let header = format!(
        "# scenario={} policy={} seed={}\n",
        topo.scenario_hash, common.policy, common.seed
    );
    let with_header = |body: String| format!("{header}{body}");
    write_artifact(&common.out, "site1_log.csv", &with_header(log1.to_csv()))?;
    write_artifact(&common.out, "site2_log.csv", &with_header(log2.to_csv()))?;
    write_artifact(&common.out, "matched_trips.csv", &with_header(bluetooth.to_csv()))?;
    write_artifact(&common.out, "summary.csv", &with_header(comparison.table()))?;
    write_artifact(&common.out, "pdf_bluetooth.csv", &with_header(trip_pdf(&bluetooth, pdf_bin).to_csv()))?;
    write_artifact(&common.out, "pdf_camera.csv", &with_header(trip_pdf(&camera, pdf_bin).to_csv()))?;
    write_artifact(&common.out, "pdf_simulation.csv", &with_header(pdf_of(&simulated, pdf_bin).to_csv()))?;
    write_artifact(&common.out, "manifest.toml", &result.manifest_toml())?;

    println!("{}", comparison.table());
    println!(
        "captured {} + {} detections, {} matched trips ({} camera) -> {:?}",
        log1.len(),
        log2.len(),
        bluetooth.len(),
        camera.len(),
        common.out
    );
    Ok(())
}

fn pdf_of(samples: &[f64], bin_s: f64) -> TripPdf {
    let trips = MatchedTrips {
        trips: samples
            .iter()
            .enumerate()
            .map(|(i, &t)| corridor_sim::detect::MatchedTrip {
                device_id: i as u64,
                t1_s: 0.0,
                t2_s: t,
            })
            .collect(),
    };
    trip_pdf(&trips, bin_s)
}
