//! Convex dispatch programs and the interior-point method that solves them.
//!
//! A program maximizes proportional-fairness log utility minus a quadratic
//! target-tracking penalty over per-vehicle, per-step charging rates, subject
//! to shared station capacity and per-vehicle rate limits. [`solve`] returns
//! rates that satisfy every constraint (up to a tiny tolerance) regardless of
//! convergence status, so callers can always dispatch the result.

mod ipm;
pub mod program;

use serde::{Deserialize, Serialize};

pub use program::{
    build_mpc_program, build_soc_mpc_program, objective_gradient, objective_value, ConvexProgram,
    LinearRow, LinearTerm, VarMeta,
};

/// Tuning knobs for the interior-point solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Convergence threshold on the KKT residual (absolute).
    pub kkt_tol: f64,
    /// Hard cap on interior-point iterations.
    pub max_iters: usize,
    /// Additive offset inside the log terms; keeps the utility finite at zero
    /// rate and bounds the gradient.
    pub eps_log: f64,
    /// Weight of the quadratic penalty on missing the energy target.
    pub lambda: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            kkt_tol: 1e-6,
            max_iters: 500,
            eps_log: 1e-3,
            lambda: 10.0,
        }
    }
}

impl SolverOptions {
    pub fn is_valid(&self) -> bool {
        self.kkt_tol.is_finite()
            && self.kkt_tol > 0.0
            && self.max_iters > 0
            && self.eps_log.is_finite()
            && self.eps_log > 0.0
            && self.lambda.is_finite()
            && self.lambda >= 0.0
    }
}

/// How a solve ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    /// KKT residual fell below `kkt_tol`.
    Converged,
    /// Iteration cap hit first; the returned point is feasible but the
    /// objective may be off optimum.
    IterationLimit,
    /// The program contained non-finite data or a constraint no nonnegative
    /// rate vector can satisfy; the returned rates are all zero.
    InfeasibleInput,
}

/// Result of solving one dispatch program.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Solution {
    /// Optimal rates, one per program variable (kW).
    pub u: Vec<f64>,
    /// Objective at `u`, in maximize form (log utility minus penalty).
    pub objective_value: f64,
    /// Final KKT residual (max of dual, primal, and complementarity norms).
    pub kkt_residual: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

/// Solves a dispatch program. The returned rates always satisfy the program
/// constraints to within 1e-9 and are nonnegative to within 1e-12, even when
/// the status is not [`SolveStatus::Converged`].
pub fn solve(program: &ConvexProgram, options: &SolverOptions) -> Solution {
    ipm::solve_program(program, options)
}
