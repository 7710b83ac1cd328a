use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Args;
use evsched_core::data::{write_per_step_csv, RunRecord, Scenario};
use evsched_core::policies::{PolicyKind, RateLimitModel};
use evsched_core::sim::{compare, Aggregate, ScenarioResult};

use super::{parse_limit_model, parse_policy, SolverFlags};

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Scenario file to simulate.
    #[arg(short, long, value_name = "FILE")]
    scenario: PathBuf,
    /// Comma-separated policies to run.
    #[arg(
        short,
        long,
        value_name = "LIST",
        value_delimiter = ',',
        default_value = "es,edf,mpc,soc_mpc",
        value_parser = parse_policy
    )]
    policies: Vec<PolicyKind>,
    /// Rate limit the heuristic policies assume when allocating: "nominal"
    /// (nameplate) or "true-soc" (live peak rate).
    #[arg(long, value_name = "MODEL", default_value = "nominal", value_parser = parse_limit_model)]
    limit_model: RateLimitModel,
    #[command(flatten)]
    solver: SolverFlags,
    /// Directory for result files.
    #[arg(short, long, value_name = "DIR")]
    output: PathBuf,
}

/// One row of `summary.csv`; also the console table's data.
#[derive(serde::Serialize)]
struct SummaryRow {
    policy: String,
    delivered_kwh: f64,
    requested_kwh: f64,
    feasible_rate: f64,
    clipped_kwh: f64,
    targets_met: usize,
    vehicles: usize,
    violations: usize,
    mean_final_soc: f64,
    resolves: usize,
}

impl SummaryRow {
    fn new(policy: PolicyKind, agg: &Aggregate) -> Self {
        SummaryRow {
            policy: policy.as_str().to_string(),
            delivered_kwh: agg.delivered_kwh,
            requested_kwh: agg.requested_kwh,
            feasible_rate: agg.feasible_rate,
            clipped_kwh: agg.clipped_kwh,
            targets_met: agg.targets_met,
            vehicles: agg.vehicles,
            violations: agg.violation_count,
            mean_final_soc: agg.mean_final_soc,
            resolves: agg.resolve_count,
        }
    }
}

pub fn execute(args: RunArgs) -> Result<ExitCode> {
    let scenario = Scenario::load(&args.scenario)
        .with_context(|| format!("loading {}", args.scenario.display()))?;
    let config = scenario.station_config()?;
    let policies = super::dedupe_policies(&args.policies);
    let options = args.solver.to_options();

    std::fs::create_dir_all(&args.output)
        .with_context(|| format!("creating {}", args.output.display()))?;

    let plan: Vec<(PolicyKind, RateLimitModel)> =
        policies.iter().map(|&p| (p, args.limit_model)).collect();
    let results = compare(&scenario.sessions, &config, &plan, &options);

    let mut rows = Vec::new();
    let mut all_ok = true;
    for (&policy, result) in policies.iter().zip(results) {
        match result {
            Ok(res) => {
                if let Err(err) = persist(&args.output, &scenario, policy, &res) {
                    eprintln!("{policy}: writing results failed: {err:#}");
                    all_ok = false;
                    continue;
                }
                rows.push(SummaryRow::new(policy, &res.aggregate));
            }
            Err(err) => {
                eprintln!("{policy}: run failed: {err}");
                all_ok = false;
            }
        }
    }

    if let Err(err) = write_summary(&args.output.join("summary.csv"), &rows) {
        eprintln!("writing summary failed: {err:#}");
        all_ok = false;
    }
    print_table(&rows);
    println!("results in {}", args.output.display());

    Ok(if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

/// Writes `<policy>.json` (scenario plus full trace) and
/// `<policy>_steps.csv` (per-step table).
fn persist(
    dir: &Path,
    scenario: &Scenario,
    policy: PolicyKind,
    result: &ScenarioResult,
) -> Result<()> {
    let record = RunRecord::new(scenario.clone(), result.clone());
    let json_path = dir.join(format!("{policy}.json"));
    record
        .save(&json_path)
        .with_context(|| format!("writing {}", json_path.display()))?;
    let csv_path = dir.join(format!("{policy}_steps.csv"));
    write_per_step_csv(&csv_path, &result.per_step)
        .with_context(|| format!("writing {}", csv_path.display()))?;
    Ok(())
}

fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

fn print_table(rows: &[SummaryRow]) {
    println!(
        "{:<8} {:>14} {:>14} {:>13} {:>12}",
        "policy", "delivered_kwh", "feasible_rate", "clipped_kwh", "targets_met"
    );
    for row in rows {
        println!(
            "{:<8} {:>14.3} {:>14.3} {:>13.3} {:>7}/{:<4}",
            row.policy,
            row.delivered_kwh,
            row.feasible_rate,
            row.clipped_kwh,
            row.targets_met,
            row.vehicles
        );
    }
}
