use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{ensure, Context, Result};
use clap::Args;
use evsched_core::data::{
    generate, ingest_csv, peak_concurrency, ArrivalIntensity, CapacitySpec, GeneratorParams,
    IngestMapping, Metadata, Scenario, SCHEMA_VERSION,
};

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Built-in parameter preset to start from.
    #[arg(long, default_value = "synthetic-morning", value_parser = ["synthetic-morning", "synthetic-uniform"])]
    preset: String,
    /// JSON file of generator parameters; missing fields take the preset's
    /// built-in defaults, and flags override both.
    #[arg(long, value_name = "FILE", conflicts_with = "ingest")]
    config: Option<PathBuf>,
    /// Generator seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Expected number of arrivals over the horizon; 0 writes an empty
    /// scenario with a warning.
    #[arg(long, value_name = "N")]
    rate: Option<f64>,
    /// Peak-rate decay per kWh of stored charge (kW/kWh).
    #[arg(long, value_name = "KW_PER_KWH")]
    alpha: Option<f64>,
    /// Station capacity as a fraction of the nameplate rate times peak
    /// occupancy.
    #[arg(long, value_name = "RATIO")]
    congestion: Option<f64>,
    /// Number of timesteps.
    #[arg(long, value_name = "STEPS")]
    horizon: Option<usize>,
    /// Step length in hours.
    #[arg(long, value_name = "HOURS")]
    delta: Option<f64>,
    /// Nameplate peak charging rate (kW).
    #[arg(long, value_name = "KW")]
    u_star: Option<f64>,
    /// Fixed station capacity (kW), replacing the congestion-derived value.
    #[arg(long, value_name = "KW")]
    capacity: Option<f64>,
    /// Build the scenario from a session log (CSV) instead of generating one.
    #[arg(long, value_name = "FILE")]
    ingest: Option<PathBuf>,
    /// Arrival timestamp column in the ingested log.
    #[arg(long, value_name = "NAME", default_value = "connection_time")]
    arrival_col: String,
    /// Departure timestamp column in the ingested log.
    #[arg(long, value_name = "NAME", default_value = "disconnect_time")]
    departure_col: String,
    /// Requested-energy column in the ingested log (kWh).
    #[arg(long, value_name = "NAME", default_value = "kwh_delivered")]
    energy_col: String,
    /// Initial-charge column in the ingested log (kWh), if present.
    #[arg(long, value_name = "NAME")]
    x_initial_col: Option<String>,
    /// Initial charge assumed when the log has no such column (kWh).
    #[arg(long, value_name = "KWH", default_value_t = 0.0)]
    x_initial_default: f64,
    /// Output scenario file.
    #[arg(short, long, value_name = "FILE")]
    output: PathBuf,
}

pub fn execute(args: GenerateArgs) -> Result<ExitCode> {
    let scenario = match &args.ingest {
        Some(log) => from_log(&args, log)?,
        None => synthetic(&args)?,
    };
    scenario
        .save(&args.output)
        .with_context(|| format!("writing {}", args.output.display()))?;
    if scenario.sessions.is_empty() {
        eprintln!("warning: scenario has no sessions");
    }
    println!(
        "wrote {}: {} sessions, {} steps of {} h, capacity {}",
        args.output.display(),
        scenario.sessions.len(),
        scenario.horizon,
        scenario.delta,
        describe_capacity(&scenario.capacity),
    );
    Ok(ExitCode::SUCCESS)
}

fn synthetic(args: &GenerateArgs) -> Result<Scenario> {
    let mut params = match args.config {
        Some(ref path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<GeneratorParams>(&text)
                .with_context(|| format!("parsing {}", path.display()))?
        }
        None => match args.preset.as_str() {
            "synthetic-uniform" => GeneratorParams {
                intensity: ArrivalIntensity::Constant {
                    expected_total: 20.0,
                },
                ..GeneratorParams::default()
            },
            _ => GeneratorParams::default(),
        },
    };

    if let Some(seed) = args.seed {
        params.seed = seed;
    }
    if let Some(rate) = args.rate {
        set_expected_total(&mut params.intensity, rate)?;
    }
    if let Some(alpha) = args.alpha {
        params.alpha = alpha;
    }
    if let Some(ratio) = args.congestion {
        params.congestion_ratio = ratio;
    }
    if let Some(horizon) = args.horizon {
        params.horizon = horizon;
    }
    if let Some(delta) = args.delta {
        params.delta = delta;
    }
    if let Some(u_star) = args.u_star {
        params.u_star = u_star;
    }

    let mut scenario = generate(&params)?;
    if let Some(cap) = args.capacity {
        ensure!(
            cap.is_finite() && cap >= 0.0,
            "--capacity must be finite and nonnegative"
        );
        scenario.capacity = CapacitySpec::Constant(cap);
        scenario.metadata.congestion_ratio = None;
    }
    scenario.validate()?;
    Ok(scenario)
}

fn set_expected_total(intensity: &mut ArrivalIntensity, rate: f64) -> Result<()> {
    ensure!(
        rate.is_finite() && rate >= 0.0,
        "--rate must be finite and nonnegative"
    );
    match intensity {
        ArrivalIntensity::MorningPeak { expected_total }
        | ArrivalIntensity::Constant { expected_total } => *expected_total = rate,
        ArrivalIntensity::PerStep { rates } => {
            let sum: f64 = rates.iter().sum();
            ensure!(
                sum > 0.0 || rate == 0.0,
                "--rate cannot rescale an all-zero per-step intensity"
            );
            if sum > 0.0 {
                for r in rates.iter_mut() {
                    *r *= rate / sum;
                }
            }
        }
    }
    Ok(())
}

fn from_log(args: &GenerateArgs, log: &PathBuf) -> Result<Scenario> {
    let mapping = IngestMapping {
        arrival_col: args.arrival_col.clone(),
        departure_col: args.departure_col.clone(),
        energy_col: args.energy_col.clone(),
        x_initial_col: args.x_initial_col.clone(),
        u_star_default: args.u_star.unwrap_or(6.6),
        alpha_default: args.alpha.unwrap_or(0.0),
        x_initial_default: args.x_initial_default,
    };
    let delta = args.delta.unwrap_or(0.25);
    let report = ingest_csv(log, &mapping, delta, args.horizon)
        .with_context(|| format!("ingesting {}", log.display()))?;
    println!(
        "ingested {} of {} rows from {} ({} dropped)",
        report.rows_total - report.rows_dropped,
        report.rows_total,
        log.display(),
        report.rows_dropped,
    );

    let (capacity, ratio_used) = match args.capacity {
        Some(cap) => {
            ensure!(
                cap.is_finite() && cap >= 0.0,
                "--capacity must be finite and nonnegative"
            );
            (cap, None)
        }
        None => {
            let ratio = args.congestion.unwrap_or(0.5);
            ensure!(
                ratio.is_finite() && ratio > 0.0,
                "--congestion must be positive"
            );
            let peak = peak_concurrency(&report.sessions, report.horizon);
            (ratio * mapping.u_star_default * peak as f64, Some(ratio))
        }
    };

    let scenario = Scenario {
        schema_version: SCHEMA_VERSION,
        metadata: Metadata {
            name: None,
            seed: None,
            rng: None,
            congestion_ratio: ratio_used,
            source: Some(log.display().to_string()),
            generator: None,
        },
        delta,
        capacity: CapacitySpec::Constant(capacity),
        horizon: report.horizon,
        sessions: report.sessions,
    };
    scenario.validate()?;
    Ok(scenario)
}

fn describe_capacity(capacity: &CapacitySpec) -> String {
    match capacity {
        CapacitySpec::Constant(kw) => format!("{kw:.3} kW"),
        CapacitySpec::Profile(profile) => {
            let lo = profile.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = profile.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            format!("{lo:.3}-{hi:.3} kW profile")
        }
    }
}
