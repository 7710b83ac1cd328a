use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use anyhow::{ensure, Context, Result};
use clap::Args;
use evsched_core::data::{generate, ArrivalIntensity, GeneratorParams};
use evsched_core::policies::{PolicyKind, RateLimitModel};
use evsched_core::sim::{self, Aggregate};

use super::{parse_policy, SolverFlags};

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Comma-separated peak-rate decay values (kW/kWh).
    #[arg(long, value_name = "LIST", value_delimiter = ',', default_value = "0,0.05,0.1")]
    alphas: Vec<f64>,
    /// Comma-separated congestion ratios.
    #[arg(long, value_name = "LIST", value_delimiter = ',', default_value = "0.5")]
    congestions: Vec<f64>,
    /// Generator seeds per grid cell.
    #[arg(long, value_name = "N", default_value_t = 10)]
    seeds: usize,
    /// First seed; cells use seed_base .. seed_base+seeds.
    #[arg(long, value_name = "SEED", default_value_t = 0)]
    seed_base: u64,
    /// Comma-separated policies to run in every cell.
    #[arg(
        short,
        long,
        value_name = "LIST",
        value_delimiter = ',',
        default_value = "es,edf,mpc,soc_mpc",
        value_parser = parse_policy
    )]
    policies: Vec<PolicyKind>,
    /// Worker threads (default: available cores).
    #[arg(short = 'j', long, value_name = "N")]
    workers: Option<usize>,
    /// Expected number of arrivals over the horizon.
    #[arg(long, value_name = "N", default_value_t = 20.0)]
    rate: f64,
    /// Number of timesteps.
    #[arg(long, value_name = "STEPS", default_value_t = 96)]
    horizon: usize,
    /// Step length in hours.
    #[arg(long, value_name = "HOURS", default_value_t = 0.25)]
    delta: f64,
    /// Nameplate peak charging rate (kW).
    #[arg(long, value_name = "KW", default_value_t = 6.6)]
    u_star: f64,
    #[command(flatten)]
    solver: SolverFlags,
    /// Directory for sweep output files.
    #[arg(short, long, value_name = "DIR")]
    output: PathBuf,
}

struct Job {
    alpha: f64,
    congestion: f64,
    seed: u64,
}

/// Aggregates from one (alpha, congestion, seed) cell, one entry per policy.
type JobOutput = Vec<(PolicyKind, Result<Aggregate, String>)>;

#[derive(serde::Serialize)]
struct SweepRow {
    alpha: f64,
    congestion: f64,
    policy: String,
    seeds: usize,
    mean_delivered_kwh: f64,
    std_delivered_kwh: f64,
    mean_feasible_rate: f64,
    mean_clipped_kwh: f64,
    mean_final_soc: f64,
}

#[derive(serde::Serialize)]
struct GainRow {
    alpha: f64,
    congestion: f64,
    seeds: usize,
    mean_gain_kwh: f64,
    std_gain_kwh: f64,
    /// Mean per-seed percentage gain; empty when a baseline delivered zero.
    mean_gain_pct: Option<f64>,
}

pub fn execute(args: SweepArgs) -> Result<ExitCode> {
    ensure!(args.seeds >= 1, "--seeds must be at least 1");
    ensure!(
        args.alphas.iter().all(|a| a.is_finite() && *a >= 0.0),
        "--alphas must be finite and nonnegative"
    );
    ensure!(
        args.congestions.iter().all(|c| c.is_finite() && *c > 0.0),
        "--congestions must be finite and positive"
    );
    let policies = super::dedupe_policies(&args.policies);
    let options = args.solver.to_options();

    std::fs::create_dir_all(&args.output)
        .with_context(|| format!("creating {}", args.output.display()))?;

    let mut jobs = Vec::new();
    for &alpha in &args.alphas {
        for &congestion in &args.congestions {
            for k in 0..args.seeds {
                jobs.push(Job {
                    alpha,
                    congestion,
                    seed: args.seed_base + k as u64,
                });
            }
        }
    }

    let worker_count = args
        .workers
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
        .clamp(1, jobs.len().max(1));

    let outputs = run_jobs(&jobs, &policies, &args, &options, worker_count);

    let mut all_ok = true;
    for (job, output) in jobs.iter().zip(&outputs) {
        for (policy, res) in output {
            if let Err(err) = res {
                eprintln!(
                    "alpha {} congestion {} seed {}: {policy} failed: {err}",
                    job.alpha, job.congestion, job.seed
                );
                all_ok = false;
            }
        }
    }

    let rows = aggregate_cells(&args, &policies, &jobs, &outputs);
    let gains = gain_rows(&args, &jobs, &outputs);

    write_csv(&args.output.join("sweep.csv"), &rows)?;
    write_csv(&args.output.join("gains.csv"), &gains)?;
    print_sweep(&rows);
    if !gains.is_empty() {
        print_gains(&gains);
    }
    println!("results in {}", args.output.display());

    Ok(if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cell_params(args: &SweepArgs, job: &Job) -> GeneratorParams {
    GeneratorParams {
        horizon: args.horizon,
        delta: args.delta,
        intensity: ArrivalIntensity::MorningPeak {
            expected_total: args.rate,
        },
        u_star: args.u_star,
        alpha: job.alpha,
        congestion_ratio: job.congestion,
        seed: job.seed,
        ..GeneratorParams::default()
    }
}

fn run_one(
    args: &SweepArgs,
    job: &Job,
    policies: &[PolicyKind],
    options: &evsched_core::solver::SolverOptions,
) -> JobOutput {
    let scenario = match generate(&cell_params(args, job)) {
        Ok(s) => s,
        Err(err) => {
            return policies
                .iter()
                .map(|&p| (p, Err(format!("generating scenario: {err}"))))
                .collect();
        }
    };
    let config = match scenario.station_config() {
        Ok(c) => c,
        Err(err) => {
            return policies
                .iter()
                .map(|&p| (p, Err(format!("station config: {err}"))))
                .collect();
        }
    };
    policies
        .iter()
        .map(|&policy| {
            let run = sim::run(
                &scenario.sessions,
                &config,
                policy,
                RateLimitModel::Nominal,
                options,
            );
            (policy, run.map(|r| r.aggregate).map_err(|e| e.to_string()))
        })
        .collect()
}

/// Executes jobs on a fixed-size worker pool; output order matches `jobs`
/// regardless of which worker finishes when.
fn run_jobs(
    jobs: &[Job],
    policies: &[PolicyKind],
    args: &SweepArgs,
    options: &evsched_core::solver::SolverOptions,
    worker_count: usize,
) -> Vec<JobOutput> {
    let next = AtomicUsize::new(0);
    let (sender, receiver) = mpsc::channel::<(usize, JobOutput)>();
    std::thread::scope(|scope| {
        for _ in 0..worker_count {
            let sender = sender.clone();
            let next = &next;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let out = run_one(args, &jobs[i], policies, options);
                if sender.send((i, out)).is_err() {
                    break;
                }
            });
        }
        drop(sender);
        let mut slots: Vec<Option<JobOutput>> = (0..jobs.len()).map(|_| None).collect();
        for (i, out) in receiver {
            slots[i] = Some(out);
        }
        slots
            .into_iter()
            .map(|s| s.expect("worker dropped a job"))
            .collect()
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

fn aggregate_cells(
    args: &SweepArgs,
    policies: &[PolicyKind],
    jobs: &[Job],
    outputs: &[JobOutput],
) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for &alpha in &args.alphas {
        for &congestion in &args.congestions {
            for &policy in policies {
                let aggs: Vec<&Aggregate> = jobs
                    .iter()
                    .zip(outputs)
                    .filter(|(job, _)| job.alpha == alpha && job.congestion == congestion)
                    .filter_map(|(_, out)| {
                        out.iter()
                            .find(|(p, _)| *p == policy)
                            .and_then(|(_, res)| res.as_ref().ok())
                    })
                    .collect();
                if aggs.is_empty() {
                    continue;
                }
                let delivered: Vec<f64> = aggs.iter().map(|a| a.delivered_kwh).collect();
                rows.push(SweepRow {
                    alpha,
                    congestion,
                    policy: policy.as_str().to_string(),
                    seeds: aggs.len(),
                    mean_delivered_kwh: mean(&delivered),
                    std_delivered_kwh: sample_std(&delivered),
                    mean_feasible_rate: mean(
                        &aggs.iter().map(|a| a.feasible_rate).collect::<Vec<_>>(),
                    ),
                    mean_clipped_kwh: mean(&aggs.iter().map(|a| a.clipped_kwh).collect::<Vec<_>>()),
                    mean_final_soc: mean(
                        &aggs.iter().map(|a| a.mean_final_soc).collect::<Vec<_>>(),
                    ),
                });
            }
        }
    }
    rows
}

/// Delivered-energy gain of the rollout planner over the fixed-bound planner,
/// per (alpha, congestion) cell, across the seeds where both ran.
fn gain_rows(args: &SweepArgs, jobs: &[Job], outputs: &[JobOutput]) -> Vec<GainRow> {
    let delivered = |out: &JobOutput, policy: PolicyKind| -> Option<f64> {
        out.iter()
            .find(|(p, _)| *p == policy)
            .and_then(|(_, res)| res.as_ref().ok())
            .map(|a| a.delivered_kwh)
    };
    let mut rows = Vec::new();
    for &alpha in &args.alphas {
        for &congestion in &args.congestions {
            let mut gains = Vec::new();
            let mut pcts = Vec::new();
            for (job, out) in jobs.iter().zip(outputs) {
                if job.alpha != alpha || job.congestion != congestion {
                    continue;
                }
                let (Some(soc), Some(mpc)) = (
                    delivered(out, PolicyKind::SocMpc),
                    delivered(out, PolicyKind::Mpc),
                ) else {
                    continue;
                };
                gains.push(soc - mpc);
                if mpc > 0.0 {
                    pcts.push(100.0 * (soc - mpc) / mpc);
                }
            }
            if gains.is_empty() {
                continue;
            }
            rows.push(GainRow {
                alpha,
                congestion,
                seeds: gains.len(),
                mean_gain_kwh: mean(&gains),
                std_gain_kwh: sample_std(&gains),
                mean_gain_pct: (pcts.len() == gains.len()).then(|| mean(&pcts)),
            });
        }
    }
    rows
}

fn write_csv<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut writer =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

fn print_sweep(rows: &[SweepRow]) {
    println!(
        "{:<7} {:<11} {:<8} {:>6} {:>15} {:>14} {:>14} {:>13}",
        "alpha", "congestion", "policy", "seeds", "mean_delivered", "std_delivered", "feasible_rate", "clipped_kwh"
    );
    for r in rows {
        println!(
            "{:<7} {:<11} {:<8} {:>6} {:>15.3} {:>14.3} {:>14.3} {:>13.3}",
            r.alpha,
            r.congestion,
            r.policy,
            r.seeds,
            r.mean_delivered_kwh,
            r.std_delivered_kwh,
            r.mean_feasible_rate,
            r.mean_clipped_kwh
        );
    }
}

fn print_gains(rows: &[GainRow]) {
    println!(
        "\n{:<7} {:<11} {:>6} {:>14} {:>13} {:>14}",
        "alpha", "congestion", "seeds", "mean_gain_kwh", "std_gain_kwh", "mean_gain_pct"
    );
    for r in rows {
        let pct = r
            .mean_gain_pct
            .map_or_else(|| "-".to_string(), |p| format!("{p:.2}"));
        println!(
            "{:<7} {:<11} {:>6} {:>14.3} {:>13.3} {:>14}",
            r.alpha, r.congestion, r.seeds, r.mean_gain_kwh, r.std_gain_kwh, pct
        );
    }
}
