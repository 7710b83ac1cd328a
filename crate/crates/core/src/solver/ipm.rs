//! Predictor–corrector primal–dual interior-point method for the dispatch
//! programs.
//!
//! The solve works on a presolved copy of the program: any row with a
//! nonpositive right-hand side pins all of its variables to zero (every
//! coefficient is positive), and the surviving rows/variables form a program
//! with a strictly feasible interior, so the iteration can start feasible and
//! keep exact primal feasibility throughout.
//!
//! Each Newton system is solved structurally rather than as one dense matrix:
//! the objective Hessian, the nonnegativity weights, and the per-vehicle rate
//! rows only couple variables of the same vehicle, giving a block-diagonal
//! core; the shared capacity rows couple vehicles but each variable appears in
//! exactly one of them, so their contribution is a low-rank update absorbed
//! with the Woodbury identity. Cost per iteration stays near the sum of the
//! per-vehicle block sizes cubed instead of the full dimension cubed.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::solver::program::{objective_value, ConvexProgram};
use crate::solver::{Solution, SolveStatus, SolverOptions};

const FRACTION_TO_BOUNDARY: f64 = 0.99;
/// Step lengths below this for several consecutive iterations abort the loop.
const STALL_STEP: f64 = 1e-12;
const MAX_STALLS: usize = 5;
/// Primal residuals below this relative level are rounding noise, not real
/// infeasibility. The iteration starts feasible and every step preserves
/// feasibility exactly in exact arithmetic, so anything at this scale must not
/// be fed back through the (potentially huge) complementarity weights.
const PRIMAL_NOISE_REL: f64 = 1e-13;
/// Upper bound on the complementarity weights z/s, purely to keep the Newton
/// matrix finite if a slack collapses to the denormal floor.
const WEIGHT_CAP: f64 = 1e32;

struct Row {
    terms: Vec<(usize, f64)>,
    rhs: f64,
}

struct Block {
    var_start: usize,
    var_len: usize,
    /// Range into `Reduced::veh_rows`.
    row_start: usize,
    row_len: usize,
    resid_const: f64,
}

/// The program restricted to variables not pinned to zero by presolve.
struct Reduced {
    n: usize,
    cap_rows: Vec<Row>,
    veh_rows: Vec<Row>,
    blocks: Vec<Block>,
    /// Capacity row (if any) each reduced variable appears in.
    caprow_of_var: Vec<Option<usize>>,
    /// Reduced index -> original variable index.
    keep: Vec<usize>,
}

enum Presolved {
    /// Some row has rhs < 0: no nonnegative vector can satisfy it.
    Infeasible,
    AllPinned,
    Program(Reduced),
}

fn presolve(p: &ConvexProgram) -> Presolved {
    let n_glob = p.vars.len();
    let mut pinned = vec![false; n_glob];
    for row in &p.rows {
        if row.rhs < 0.0 {
            return Presolved::Infeasible;
        }
        if row.rhs == 0.0 {
            for t in &row.terms {
                pinned[t.var] = true;
            }
        }
    }
    let keep: Vec<usize> = (0..n_glob).filter(|&j| !pinned[j]).collect();
    if keep.is_empty() {
        return Presolved::AllPinned;
    }
    let mut pos = vec![usize::MAX; n_glob];
    for (r, &g) in keep.iter().enumerate() {
        pos[g] = r;
    }

    let mut cap_rows = Vec::new();
    let mut orig_cap_new = vec![None; p.n_capacity_rows];
    for (orig, row) in p.rows[..p.n_capacity_rows].iter().enumerate() {
        let terms: Vec<(usize, f64)> = row
            .terms
            .iter()
            .filter(|t| !pinned[t.var])
            .map(|t| (pos[t.var], t.coeff))
            .collect();
        if terms.is_empty() {
            continue;
        }
        orig_cap_new[orig] = Some(cap_rows.len());
        cap_rows.push(Row { terms, rhs: row.rhs });
    }

    let mut veh_rows = Vec::new();
    let mut blocks = Vec::new();
    for b in &p.blocks {
        let kept: Vec<usize> = (b.var_start..b.var_start + b.var_len)
            .filter(|&g| !pinned[g])
            .collect();
        if kept.is_empty() {
            continue;
        }
        let row_start = veh_rows.len();
        for row in &p.rows[b.row_start..b.row_start + b.row_len] {
            let terms: Vec<(usize, f64)> = row
                .terms
                .iter()
                .filter(|t| !pinned[t.var])
                .map(|t| (pos[t.var], t.coeff))
                .collect();
            if !terms.is_empty() {
                veh_rows.push(Row { terms, rhs: row.rhs });
            }
        }
        blocks.push(Block {
            var_start: pos[kept[0]],
            var_len: kept.len(),
            row_start,
            row_len: veh_rows.len() - row_start,
            resid_const: b.resid_const,
        });
    }

    let caprow_of_var = keep
        .iter()
        .map(|&g| {
            let step = p.vars[g].step;
            let orig = step.wrapping_sub(p.t0);
            orig_cap_new.get(orig).copied().flatten()
        })
        .collect();

    Presolved::Program(Reduced {
        n: keep.len(),
        cap_rows,
        veh_rows,
        blocks,
        caprow_of_var,
        keep,
    })
}

fn row_dot(row: &Row, x: &[f64]) -> f64 {
    row.terms.iter().map(|&(j, c)| c * x[j]).sum()
}

/// Gradient of the minimization objective
/// `-sum log(v + eps) + lambda * sum residual^2`.
fn grad_min(r: &Reduced, v: &[f64], eps: f64, lambda: f64, delta: f64, out: &mut [f64]) {
    for b in &r.blocks {
        let mut resid = b.resid_const;
        for j in b.var_start..b.var_start + b.var_len {
            resid += delta * v[j];
        }
        let penalty = 2.0 * lambda * delta * resid;
        for j in b.var_start..b.var_start + b.var_len {
            out[j] = -1.0 / (v[j] + eps) + penalty;
        }
    }
}

/// `out[i] = (A x)_i` over capacity rows then vehicle rows.
fn a_apply(r: &Reduced, x: &[f64], out: &mut [f64]) {
    let k = r.cap_rows.len();
    for (i, row) in r.cap_rows.iter().enumerate() {
        out[i] = row_dot(row, x);
    }
    for (i, row) in r.veh_rows.iter().enumerate() {
        out[k + i] = row_dot(row, x);
    }
}

/// `out += A^T y` for `y` over capacity rows then vehicle rows.
fn at_add(r: &Reduced, y: &[f64], out: &mut [f64]) {
    let k = r.cap_rows.len();
    for (i, row) in r.cap_rows.iter().enumerate() {
        let yi = y[i];
        for &(j, c) in &row.terms {
            out[j] += c * yi;
        }
    }
    for (i, row) in r.veh_rows.iter().enumerate() {
        let yi = y[k + i];
        for &(j, c) in &row.terms {
            out[j] += c * yi;
        }
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

/// Largest step `a` with `x + a*dx >= 0` componentwise.
fn max_step(x: &[f64], dx: &[f64]) -> f64 {
    let mut a = f64::INFINITY;
    for i in 0..x.len() {
        if dx[i] < 0.0 {
            a = a.min(-x[i] / dx[i]);
        }
    }
    a
}

fn cholesky_with_ridge(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let n = m.nrows();
    let mut ridge = 0.0f64;
    loop {
        let mut trial = m.clone();
        if ridge > 0.0 {
            for i in 0..n {
                trial[(i, i)] += ridge;
            }
        }
        match Cholesky::new(trial) {
            Some(c) => return Some(c),
            None => {
                ridge = if ridge == 0.0 { 1e-12 } else { ridge * 100.0 };
                if ridge > 1e-3 {
                    return None;
                }
            }
        }
    }
}

struct Factor {
    inv_blocks: Vec<DMatrix<f64>>,
    cap_chol: Option<Cholesky<f64, Dyn>>,
    /// sqrt of the capacity-row weights.
    su: Vec<f64>,
}

/// Factorizes `M = H + G^T W G` where `G = [A; -I]` and `W = diag(w)`.
/// `w` is laid out as [capacity rows, vehicle rows, nonnegativity rows].
fn factorize(
    r: &Reduced,
    v: &[f64],
    w: &[f64],
    eps: f64,
    lambda: f64,
    delta: f64,
) -> Option<Factor> {
    let k = r.cap_rows.len();
    let m = k + r.veh_rows.len();
    let su: Vec<f64> = w[..k].iter().map(|&x| x.sqrt()).collect();
    let quad = 2.0 * lambda * delta * delta;

    let mut inv_blocks = Vec::with_capacity(r.blocks.len());
    for b in &r.blocks {
        let nb = b.var_len;
        let mut bb = DMatrix::from_element(nb, nb, quad);
        for l in 0..nb {
            let j = b.var_start + l;
            let vp = v[j] + eps;
            bb[(l, l)] += 1.0 / (vp * vp) + w[m + j];
        }
        for (ri, row) in r.veh_rows[b.row_start..b.row_start + b.row_len]
            .iter()
            .enumerate()
        {
            let wr = w[k + b.row_start + ri];
            for &(j1, c1) in &row.terms {
                let l1 = j1 - b.var_start;
                for &(j2, c2) in &row.terms {
                    bb[(l1, j2 - b.var_start)] += wr * c1 * c2;
                }
            }
        }
        inv_blocks.push(cholesky_with_ridge(&bb)?.inverse());
    }

    // Capacity coupling: K = I + U~^T B^{-1} U~ with U~ column r equal to
    // sqrt(w_r) times the indicator of the variables in capacity row r.
    let cap_chol = if k > 0 {
        let mut kk = DMatrix::identity(k, k);
        for (bi, b) in r.blocks.iter().enumerate() {
            let inv = &inv_blocks[bi];
            for l1 in 0..b.var_len {
                let Some(r1) = r.caprow_of_var[b.var_start + l1] else {
                    continue;
                };
                for l2 in 0..b.var_len {
                    let Some(r2) = r.caprow_of_var[b.var_start + l2] else {
                        continue;
                    };
                    kk[(r1, r2)] += su[r1] * su[r2] * inv[(l1, l2)];
                }
            }
        }
        Some(cholesky_with_ridge(&kk)?)
    } else {
        None
    };

    Some(Factor {
        inv_blocks,
        cap_chol,
        su,
    })
}

fn block_mul(f: &Factor, r: &Reduced, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; r.n];
    for (bi, b) in r.blocks.iter().enumerate() {
        let inv = &f.inv_blocks[bi];
        for l1 in 0..b.var_len {
            let mut acc = 0.0;
            for l2 in 0..b.var_len {
                acc += inv[(l1, l2)] * x[b.var_start + l2];
            }
            out[b.var_start + l1] = acc;
        }
    }
    out
}

/// `M^{-1} rhs` via the Woodbury identity.
fn solve_newton(f: &Factor, r: &Reduced, rhs: &[f64]) -> Vec<f64> {
    let t1 = block_mul(f, r, rhs);
    let Some(chol) = &f.cap_chol else {
        return t1;
    };
    let k = r.cap_rows.len();
    let mut y = DVector::zeros(k);
    for j in 0..r.n {
        if let Some(cr) = r.caprow_of_var[j] {
            y[cr] += f.su[cr] * t1[j];
        }
    }
    let q = chol.solve(&y);
    let mut shifted = rhs.to_vec();
    for j in 0..r.n {
        if let Some(cr) = r.caprow_of_var[j] {
            shifted[j] -= f.su[cr] * q[cr];
        }
    }
    block_mul(f, r, &shifted)
}

/// Clamp negatives to zero and, if any row is violated, scale the whole
/// vector back into the polytope. Valid because all row coefficients are
/// nonnegative: scaling down never violates another row. At a converged
/// iterate the point is already strictly interior and this is a no-op.
fn restore_feasible(p: &ConvexProgram, u: &mut [f64]) {
    for x in u.iter_mut() {
        if !(*x >= 0.0) {
            *x = 0.0;
        }
    }
    let mut theta = 1.0f64;
    for row in &p.rows {
        let lhs: f64 = row.terms.iter().map(|t| t.coeff * u[t.var]).sum();
        if lhs > row.rhs {
            theta = theta.min(if row.rhs > 0.0 {
                row.rhs * (1.0 - 1e-12) / lhs
            } else {
                0.0
            });
        }
    }
    if theta < 1.0 {
        for x in u.iter_mut() {
            *x *= theta;
        }
    }
}

fn program_is_finite(p: &ConvexProgram) -> bool {
    p.delta.is_finite()
        && p.delta > 0.0
        && p.rows
            .iter()
            .all(|r| r.rhs.is_finite() && r.terms.iter().all(|t| t.coeff.is_finite()))
        && p.blocks.iter().all(|b| b.resid_const.is_finite())
}

pub(crate) fn solve_program(p: &ConvexProgram, opts: &SolverOptions) -> Solution {
    let n_glob = p.vars.len();
    if !opts.is_valid() || !program_is_finite(p) {
        return Solution {
            u: vec![0.0; n_glob],
            objective_value: f64::NAN,
            kkt_residual: f64::INFINITY,
            iterations: 0,
            status: SolveStatus::InfeasibleInput,
        };
    }

    let r = match presolve(p) {
        Presolved::Infeasible => {
            return Solution {
                u: vec![0.0; n_glob],
                objective_value: f64::NAN,
                kkt_residual: f64::INFINITY,
                iterations: 0,
                status: SolveStatus::InfeasibleInput,
            };
        }
        Presolved::AllPinned => {
            let u = vec![0.0; n_glob];
            let objective = objective_value(p, &u, opts.eps_log, opts.lambda);
            return Solution {
                u,
                objective_value: objective,
                kkt_residual: 0.0,
                iterations: 0,
                status: SolveStatus::Converged,
            };
        }
        Presolved::Program(r) => r,
    };

    let eps = opts.eps_log;
    let lambda = opts.lambda;
    let delta = p.delta;
    let n = r.n;
    let k = r.cap_rows.len();
    let m = k + r.veh_rows.len();
    let mt = m + n;

    // Strictly interior start: a uniform positive rate below every row's
    // rhs-to-coefficient-sum ratio.
    let mut ratio = f64::INFINITY;
    for row in r.cap_rows.iter().chain(r.veh_rows.iter()) {
        let sum: f64 = row.terms.iter().map(|t| t.1).sum();
        ratio = ratio.min(row.rhs / sum);
    }
    let v0 = (0.9 * ratio).min(1.0);
    let mut v = vec![v0; n];
    let mut s = vec![0.0; mt];
    {
        let mut av = vec![0.0; m];
        a_apply(&r, &v, &mut av);
        let rhss = r.cap_rows.iter().chain(r.veh_rows.iter()).map(|row| row.rhs);
        for (i, rhs) in rhss.enumerate() {
            s[i] = rhs - av[i];
        }
        for j in 0..n {
            s[m + j] = v[j];
        }
    }
    let mut z = vec![1.0; mt];

    let mut status = SolveStatus::IterationLimit;
    let mut kkt = f64::INFINITY;
    let mut iterations = 0usize;
    let mut stalls = 0usize;

    let mut grad = vec![0.0; n];
    let mut r_d = vec![0.0; n];
    let mut r_p = vec![0.0; mt];
    let mut av = vec![0.0; m];
    let mut yv = vec![0.0; mt];
    let mut g_dv = vec![0.0; mt];

    for iter in 0..=opts.max_iters {
        iterations = iter;

        grad_min(&r, &v, eps, lambda, delta, &mut grad);
        r_d.copy_from_slice(&grad);
        at_add(&r, &z[..m], &mut r_d);
        for j in 0..n {
            r_d[j] -= z[m + j];
        }
        a_apply(&r, &v, &mut av);
        {
            let rhss = r.cap_rows.iter().chain(r.veh_rows.iter()).map(|row| row.rhs);
            for (i, rhs) in rhss.enumerate() {
                let raw = av[i] + s[i] - rhs;
                let noise = PRIMAL_NOISE_REL * (1.0 + av[i].abs() + rhs.abs() + s[i]);
                r_p[i] = if raw.abs() <= noise { 0.0 } else { raw };
            }
        }
        for j in 0..n {
            let raw = s[m + j] - v[j];
            let noise = PRIMAL_NOISE_REL * (1.0 + v[j].abs() + s[m + j]);
            r_p[m + j] = if raw.abs() <= noise { 0.0 } else { raw };
        }
        let comp = (0..mt).fold(0.0f64, |a, i| a.max(z[i] * s[i]));
        // Stationarity and complementarity are judged relative to the scale of
        // the gradient and the multipliers, as is standard for interior-point
        // stopping rules; primal feasibility is held near machine precision
        // throughout, so it stays an absolute measure.
        let scale = 1.0 + inf_norm(&grad) + inf_norm(&z);
        kkt = (inf_norm(&r_d).max(comp) / scale).max(inf_norm(&r_p));
        if !kkt.is_finite() {
            break;
        }
        if kkt <= opts.kkt_tol {
            status = SolveStatus::Converged;
            break;
        }
        if iter == opts.max_iters {
            break;
        }

        let mu = (0..mt).map(|i| s[i] * z[i]).sum::<f64>() / mt as f64;
        let w: Vec<f64> = (0..mt).map(|i| (z[i] / s[i]).min(WEIGHT_CAP)).collect();
        let Some(factor) = factorize(&r, &v, &w, eps, lambda, delta) else {
            break;
        };

        // Affine scaling step: complementarity target zero.
        for i in 0..mt {
            yv[i] = z[i] - w[i] * r_p[i];
        }
        let mut rhs: Vec<f64> = r_d.iter().map(|x| -x).collect();
        at_add(&r, &yv[..m], &mut rhs);
        for j in 0..n {
            rhs[j] -= yv[m + j];
        }
        let dv_aff = solve_newton(&factor, &r, &rhs);
        a_apply(&r, &dv_aff, &mut g_dv[..m]);
        for j in 0..n {
            g_dv[m + j] = -dv_aff[j];
        }
        let mut ds_aff = vec![0.0; mt];
        let mut dz_aff = vec![0.0; mt];
        for i in 0..mt {
            ds_aff[i] = -r_p[i] - g_dv[i];
            dz_aff[i] = w[i] * g_dv[i] - yv[i];
        }
        let a_p = max_step(&s, &ds_aff).min(1.0);
        let a_d = max_step(&z, &dz_aff).min(1.0);
        let mu_aff = (0..mt)
            .map(|i| (s[i] + a_p * ds_aff[i]) * (z[i] + a_d * dz_aff[i]))
            .sum::<f64>()
            / mt as f64;
        let sigma = ((mu_aff / mu).powi(3)).clamp(0.0, 1.0);
        // Keep complementarity from running ahead of stationarity: the dual
        // residual carries a second-order remainder from the log barrier that
        // only dies off over a few iterations, and slacks crushed too early
        // amplify roundoff in the dual recovery. Hold the center until
        // stationarity catches up.
        let sigma = if inf_norm(&r_d) > comp {
            sigma.max(0.5)
        } else {
            sigma
        };

        // Corrector: recenter and compensate the second-order term.
        for i in 0..mt {
            yv[i] = z[i] + (ds_aff[i] * dz_aff[i] - sigma * mu) / s[i] - w[i] * r_p[i];
        }
        let mut rhs: Vec<f64> = r_d.iter().map(|x| -x).collect();
        at_add(&r, &yv[..m], &mut rhs);
        for j in 0..n {
            rhs[j] -= yv[m + j];
        }
        let dv = solve_newton(&factor, &r, &rhs);
        a_apply(&r, &dv, &mut g_dv[..m]);
        for j in 0..n {
            g_dv[m + j] = -dv[j];
        }
        let mut ds = vec![0.0; mt];
        let mut dz = vec![0.0; mt];
        for i in 0..mt {
            ds[i] = -r_p[i] - g_dv[i];
            dz[i] = w[i] * g_dv[i] - yv[i];
        }
        let alpha = 1.0f64
            .min(FRACTION_TO_BOUNDARY * max_step(&s, &ds))
            .min(FRACTION_TO_BOUNDARY * max_step(&z, &dz));
        if !alpha.is_finite() || dv.iter().any(|x| !x.is_finite()) {
            break;
        }
        if alpha < STALL_STEP {
            stalls += 1;
            if stalls >= MAX_STALLS {
                break;
            }
        } else {
            stalls = 0;
        }
        for j in 0..n {
            v[j] += alpha * dv[j];
        }
        for i in 0..mt {
            s[i] = (s[i] + alpha * ds[i]).max(f64::MIN_POSITIVE);
            z[i] = (z[i] + alpha * dz[i]).max(f64::MIN_POSITIVE);
        }
    }

    let mut u = vec![0.0; n_glob];
    for (red, &g) in r.keep.iter().enumerate() {
        u[g] = v[red];
    }
    restore_feasible(p, &mut u);
    let objective = objective_value(p, &u, eps, lambda);
    Solution {
        u,
        objective_value: objective,
        kkt_residual: kkt,
        iterations,
        status,
    }
}
