pub mod generate;
pub mod run;
pub mod sweep;
pub mod validate;

use clap::Args;
use evsched_core::policies::{PolicyKind, RateLimitModel};
use evsched_core::solver::SolverOptions;

/// Clap value parser for policy names; rejection surfaces as a usage error.
pub fn parse_policy(name: &str) -> Result<PolicyKind, String> {
    name.parse::<PolicyKind>()
        .map_err(|_| format!("unknown policy {name:?} (expected es, edf, mpc, or soc_mpc)"))
}

pub fn parse_limit_model(name: &str) -> Result<RateLimitModel, String> {
    name.parse::<RateLimitModel>()
        .map_err(|_| format!("unknown limit model {name:?} (expected nominal or true-soc)"))
}

/// Solver overrides shared by `run` and `sweep`.
#[derive(Args, Debug, Clone)]
pub struct SolverFlags {
    /// Convergence tolerance on the solver's KKT residual.
    #[arg(long, value_name = "TOL")]
    pub kkt_tol: Option<f64>,
    /// Iteration cap per solve.
    #[arg(long, value_name = "N")]
    pub max_iters: Option<usize>,
    /// Additive shift inside the log utility (kW).
    #[arg(long, value_name = "KW")]
    pub eps_log: Option<f64>,
    /// Weight of the terminal shortfall penalty.
    #[arg(long, value_name = "W")]
    pub lambda: Option<f64>,
}

impl SolverFlags {
    pub fn to_options(&self) -> SolverOptions {
        let mut opts = SolverOptions::default();
        if let Some(v) = self.kkt_tol {
            opts.kkt_tol = v;
        }
        if let Some(v) = self.max_iters {
            opts.max_iters = v;
        }
        if let Some(v) = self.eps_log {
            opts.eps_log = v;
        }
        if let Some(v) = self.lambda {
            opts.lambda = v;
        }
        opts
    }
}

/// Keeps the first occurrence of each policy, preserving order.
pub fn dedupe_policies(policies: &[PolicyKind]) -> Vec<PolicyKind> {
    let mut out = Vec::new();
    for &p in policies {
        if !out.contains(&p) {
            out.push(p);
        }
    }
    out
}
