//! Assembly of the receding-horizon dispatch programs and the shared
//! objective/gradient they optimize.
//!
//! Both program kinds maximize proportional-fairness utility with a soft
//! departure-shortfall penalty,
//!
//! ```text
//!   sum_j log(u_j + eps_log)  -  lambda * sum_i (x_i(start) + delta*sum_t u_i(t) - x_final_i)^2
//! ```
//!
//! over one decision variable per (active vehicle, step) pair, subject to
//! `A u <= b` and `u >= 0`. The two kinds differ only in the per-vehicle rate
//! rows: the plain program bounds each rate by a fixed cap, while the
//! state-of-charge-aware program rolls the affine peak-rate decay forward so
//! each step's rate is charged against the energy the plan itself deposits:
//!
//! ```text
//!   u_i(t) + alpha_i * delta * sum_{s < t} u_i(s)  <=  u_star_i - alpha_i * x_i(start)
//! ```

use crate::error::{Error, Result};
use crate::model::{ActiveSet, BatteryState, SessionSpec, StationConfig};

/// Which (vehicle, timestep) pair a program column decides.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarMeta {
    /// Index into the session slice the program was built from.
    pub session: usize,
    /// Absolute timestep.
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearTerm {
    pub var: usize,
    pub coeff: f64,
}

/// One inequality `sum(coeff * u_var) <= rhs`. All coefficients produced by
/// the builders are strictly positive, and `u = 0` is feasible iff rhs >= 0.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub terms: Vec<LinearTerm>,
    pub rhs: f64,
}

/// Per-vehicle bookkeeping: which contiguous variable range and which
/// contiguous row range belong to one vehicle, plus the constant part of its
/// shortfall residual (`x at window start - x_final`).
#[derive(Debug, Clone, PartialEq)]
pub struct VarBlock {
    /// Index into the session slice.
    pub session: usize,
    pub var_start: usize,
    pub var_len: usize,
    /// First rate row of this vehicle (absolute index into `rows`).
    pub row_start: usize,
    pub row_len: usize,
    /// `x(window start) - x_final`; the vehicle's shortfall residual is
    /// `resid_const + delta * sum(u over the block)`.
    pub resid_const: f64,
}

/// A finite-dimensional concave maximization in inequality form.
///
/// Structural invariants the solver relies on:
/// - `vars` is vehicle-major: each block's variables are contiguous and
///   ordered by step, and the blocks partition `0..vars.len()`.
/// - `rows[..n_capacity_rows]` are the shared-capacity rows, one per step of
///   `t0..t_end`, in step order; the remaining rows are per-vehicle rate rows
///   grouped per `VarBlock`.
/// - every coefficient is positive and every row's variables are within
///   bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexProgram {
    pub vars: Vec<VarMeta>,
    pub rows: Vec<LinearRow>,
    pub n_capacity_rows: usize,
    pub blocks: Vec<VarBlock>,
    /// Hours per step; converts rates (kW) to energy (kWh).
    pub delta: f64,
    /// First step of the solve window (inclusive).
    pub t0: usize,
    /// End of the solve window (exclusive): max departure over the members.
    pub t_end: usize,
}

impl ConvexProgram {
    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }
}

enum RateRows {
    /// `u_i(t) <= cap_i` per step, one cap per active member.
    FixedBounds(Vec<f64>),
    /// Rolled-out decay rows charged against the plan's own deposits.
    SocRollout,
}

/// Program with fixed per-vehicle rate caps `u_star` (the plain
/// receding-horizon baseline: commands may exceed what the battery accepts
/// once charge accumulates, and get clipped downstream).
pub fn build_mpc_program(
    specs: &[SessionSpec],
    states: &[BatteryState],
    config: &StationConfig,
    active: &ActiveSet,
) -> Result<ConvexProgram> {
    let bounds = active
        .members
        .iter()
        .map(|&i| specs.get(i).map(|s| s.u_star).unwrap_or(f64::NAN))
        .collect();
    build_program(specs, states, config, active, RateRows::FixedBounds(bounds))
}

/// Program whose rate rows roll the peak-rate decay forward over the window,
/// so any feasible plan respects the battery limit along its own trajectory.
/// With `alpha = 0` everywhere this is coefficient-identical to
/// [`build_mpc_program`].
pub fn build_soc_mpc_program(
    specs: &[SessionSpec],
    states: &[BatteryState],
    config: &StationConfig,
    active: &ActiveSet,
) -> Result<ConvexProgram> {
    build_program(specs, states, config, active, RateRows::SocRollout)
}

fn build_program(
    specs: &[SessionSpec],
    states: &[BatteryState],
    config: &StationConfig,
    active: &ActiveSet,
    rate_rows: RateRows,
) -> Result<ConvexProgram> {
    if active.members.is_empty() {
        return Err(Error::NoActiveSessions);
    }
    if states.len() != specs.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} states for {} sessions",
            states.len(),
            specs.len()
        )));
    }
    let t0 = active.t;
    let mut t_end = t0;
    for &i in &active.members {
        let spec = specs.get(i).ok_or_else(|| {
            Error::DimensionMismatch(format!("active member {i} out of range"))
        })?;
        if !spec.is_live(t0) {
            return Err(Error::InvalidSession {
                id: spec.id,
                reason: format!("not live at step {t0}"),
            });
        }
        if !states[i].x.is_finite() {
            return Err(Error::NonFinite(format!("stored energy of session {}", spec.id)));
        }
        t_end = t_end.max(spec.t_depart);
    }
    if t_end > config.horizon {
        return Err(Error::DimensionMismatch(format!(
            "window end {t_end} exceeds horizon {}",
            config.horizon
        )));
    }

    let mut vars = Vec::new();
    let mut blocks = Vec::with_capacity(active.members.len());
    for &i in &active.members {
        let spec = &specs[i];
        let var_start = vars.len();
        for t in t0..spec.t_depart {
            vars.push(VarMeta { session: i, step: t });
        }
        blocks.push(VarBlock {
            session: i,
            var_start,
            var_len: spec.t_depart - t0,
            row_start: 0,
            row_len: 0,
            resid_const: states[i].x - spec.x_final,
        });
    }

    // Shared capacity rows, one per window step. Every step of the window is
    // covered by at least the longest-staying member, so no row is empty.
    let mut rows = Vec::new();
    for t in t0..t_end {
        let mut terms = Vec::new();
        for (k, &i) in active.members.iter().enumerate() {
            if t < specs[i].t_depart {
                terms.push(LinearTerm {
                    var: blocks[k].var_start + (t - t0),
                    coeff: 1.0,
                });
            }
        }
        rows.push(LinearRow {
            terms,
            rhs: config.capacity[t],
        });
    }
    let n_capacity_rows = rows.len();

    for (k, &i) in active.members.iter().enumerate() {
        let spec = &specs[i];
        let var_start = blocks[k].var_start;
        blocks[k].row_start = rows.len();
        match &rate_rows {
            RateRows::FixedBounds(bounds) => {
                for t in t0..spec.t_depart {
                    rows.push(LinearRow {
                        terms: vec![LinearTerm {
                            var: var_start + (t - t0),
                            coeff: 1.0,
                        }],
                        rhs: bounds[k],
                    });
                }
            }
            RateRows::SocRollout => {
                let rhs = spec.u_star - spec.alpha * states[i].x;
                let prefix_coeff = spec.alpha * config.delta;
                for t in t0..spec.t_depart {
                    let mut terms = Vec::with_capacity(t - t0 + 1);
                    // alpha == 0 contributes nothing; skipping the zero terms
                    // keeps the row list identical to the fixed-bound build.
                    if spec.alpha != 0.0 {
                        for s in t0..t {
                            terms.push(LinearTerm {
                                var: var_start + (s - t0),
                                coeff: prefix_coeff,
                            });
                        }
                    }
                    terms.push(LinearTerm {
                        var: var_start + (t - t0),
                        coeff: 1.0,
                    });
                    rows.push(LinearRow { terms, rhs });
                }
            }
        }
        blocks[k].row_len = rows.len() - blocks[k].row_start;
    }

    Ok(ConvexProgram {
        vars,
        rows,
        n_capacity_rows,
        blocks,
        delta: config.delta,
        t0,
        t_end,
    })
}

/// Utility of a rate vector: shifted-log fairness minus the weighted squared
/// departure shortfall. `u` must be entrywise > `-eps_log`.
pub fn objective_value(program: &ConvexProgram, u: &[f64], eps_log: f64, lambda: f64) -> f64 {
    debug_assert_eq!(u.len(), program.n_vars());
    let mut total = 0.0;
    for &uj in u {
        total += (uj + eps_log).ln();
    }
    for b in &program.blocks {
        let mut resid = b.resid_const;
        for j in b.var_start..b.var_start + b.var_len {
            resid += program.delta * u[j];
        }
        total -= lambda * resid * resid;
    }
    total
}

/// Gradient of [`objective_value`] with respect to `u`.
pub fn objective_gradient(
    program: &ConvexProgram,
    u: &[f64],
    eps_log: f64,
    lambda: f64,
) -> Vec<f64> {
    debug_assert_eq!(u.len(), program.n_vars());
    let mut grad = vec![0.0; u.len()];
    for b in &program.blocks {
        let mut resid = b.resid_const;
        for j in b.var_start..b.var_start + b.var_len {
            resid += program.delta * u[j];
        }
        let penalty_term = 2.0 * lambda * program.delta * resid;
        for j in b.var_start..b.var_start + b.var_len {
            grad[j] = 1.0 / (u[j] + eps_log) - penalty_term;
        }
    }
    grad
}
