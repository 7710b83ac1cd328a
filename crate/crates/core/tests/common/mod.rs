//! Shared test utilities: a brute-force lattice oracle for small dispatch
//! programs and a deterministic generator of small random instances.
#![allow(dead_code)]

use evsched_core::model::{ActiveSet, BatteryState, SessionSpec, StationConfig};
use evsched_core::solver::{objective_value, ConvexProgram};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Deterministic uniform draws for test instances.
pub struct Draw(ChaCha8Rng);

impl Draw {
    pub fn new(seed: u64) -> Self {
        Draw(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + self.unit() * (hi - lo)
    }

    pub fn pick(&mut self, n: usize) -> usize {
        ((self.unit() * n as f64) as usize).min(n - 1)
    }
}

/// Maximizes the program objective over the lattice `{0, grid, 2*grid, ...}`
/// by exhaustive search with feasibility pruning, refined coarse-to-fine down
/// to `final_grid`. Returns the best objective and the point attaining it.
///
/// The point is always feasible, so its objective is a lower bound on the
/// true optimum; the coarse-to-fine refinement (a box of ±5 fine cells
/// around the previous level's best) determines only how tight that bound
/// is.
pub fn lattice_max(
    program: &ConvexProgram,
    eps_log: f64,
    lambda: f64,
    final_grid: f64,
) -> (f64, Vec<f64>) {
    let n = program.vars.len();
    let mut var_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (r, row) in program.rows.iter().enumerate() {
        for t in &row.terms {
            var_rows[t.var].push((r, t.coeff));
        }
    }
    let block_of: Vec<usize> = {
        let mut b = vec![usize::MAX; n];
        for (bi, blk) in program.blocks.iter().enumerate() {
            for j in blk.var_start..blk.var_start + blk.var_len {
                b[j] = bi;
            }
        }
        b
    };

    // Static per-variable upper bound, ignoring the other variables.
    let ub = |j: usize| -> f64 {
        var_rows[j]
            .iter()
            .map(|&(r, c)| program.rows[r].rhs / c)
            .fold(f64::INFINITY, f64::min)
            .max(0.0)
    };
    let max_ub = (0..n).map(ub).fold(0.0f64, f64::max);

    // Coarsest grid: at most ~8 candidate values per variable.
    let mut levels = 0i32;
    while max_ub / (final_grid * 4f64.powi(levels)) > 8.0 {
        levels += 1;
    }

    struct Ctx<'a> {
        program: &'a ConvexProgram,
        var_rows: &'a [Vec<(usize, f64)>],
        block_of: &'a [usize],
        eps_log: f64,
        lambda: f64,
        grid: f64,
        lo: Vec<i64>,
        hi: Vec<i64>,
        remaining: Vec<f64>,
        deposits: Vec<f64>,
        log_sum: f64,
        k: Vec<i64>,
        best_obj: f64,
        best_k: Vec<i64>,
    }

    fn dfs(ctx: &mut Ctx, j: usize) {
        let n = ctx.k.len();
        if j == n {
            let mut obj = ctx.log_sum;
            for (bi, blk) in ctx.program.blocks.iter().enumerate() {
                let resid = blk.resid_const + ctx.program.delta * ctx.deposits[bi];
                obj -= ctx.lambda * resid * resid;
            }
            if obj > ctx.best_obj {
                ctx.best_obj = obj;
                ctx.best_k.copy_from_slice(&ctx.k);
            }
            return;
        }
        // Runtime bound from what the already-assigned variables left over.
        let mut bound = f64::INFINITY;
        for &(r, c) in &ctx.var_rows[j] {
            bound = bound.min(ctx.remaining[r] / c);
        }
        let hi = ctx.hi[j].min((bound / ctx.grid + 1e-9).floor() as i64);
        let saved: Vec<(usize, f64)> = ctx.var_rows[j]
            .iter()
            .map(|&(r, _)| (r, ctx.remaining[r]))
            .collect();
        let saved_log = ctx.log_sum;
        let bi = ctx.block_of[j];
        for k in ctx.lo[j]..=hi {
            let v = k as f64 * ctx.grid;
            for &(r, c) in &ctx.var_rows[j] {
                ctx.remaining[r] -= c * v;
            }
            ctx.log_sum = saved_log + (v + ctx.eps_log).ln();
            ctx.deposits[bi] += v;
            ctx.k[j] = k;
            dfs(ctx, j + 1);
            ctx.deposits[bi] -= v;
            for &(r, s) in &saved {
                ctx.remaining[r] = s;
            }
        }
        ctx.log_sum = saved_log;
    }

    let mut grid = final_grid * 4f64.powi(levels);
    let mut best_k: Vec<i64> = vec![0; n];
    let mut first = true;
    loop {
        let (lo, hi): (Vec<i64>, Vec<i64>) = if first {
            (vec![0; n], vec![i64::MAX / 2; n])
        } else {
            (
                best_k.iter().map(|&c| (c - 5).max(0)).collect(),
                best_k.iter().map(|&c| c + 5).collect(),
            )
        };
        let mut ctx = Ctx {
            program,
            var_rows: &var_rows,
            block_of: &block_of,
            eps_log,
            lambda,
            grid,
            lo,
            hi,
            remaining: program.rows.iter().map(|r| r.rhs).collect(),
            deposits: vec![0.0; program.blocks.len()],
            log_sum: 0.0,
            k: vec![0; n],
            best_obj: f64::NEG_INFINITY,
            best_k: vec![0; n],
        };
        dfs(&mut ctx, 0);
        assert!(
            ctx.best_obj.is_finite(),
            "lattice search found no feasible point"
        );
        best_k = ctx.best_k;
        if grid <= final_grid * 1.0000001 {
            break;
        }
        grid /= 4.0;
        for k in &mut best_k {
            *k *= 4;
        }
        first = false;
    }

    let u: Vec<f64> = best_k.iter().map(|&k| k as f64 * final_grid).collect();
    let obj = objective_value(program, &u, eps_log, lambda);
    (obj, u)
}

/// A complete small dispatch instance: up to 2 vehicles over up to 3 steps,
/// all live at step 0, with parameters drawn deterministically from `seed`.
pub struct SmallInstance {
    pub specs: Vec<SessionSpec>,
    pub states: Vec<BatteryState>,
    pub config: StationConfig,
    pub active: ActiveSet,
}

pub fn small_instance(seed: u64) -> SmallInstance {
    let mut d = Draw::new(seed);
    let n = 1 + d.pick(2);
    let horizon = 1 + d.pick(3);
    let delta = [0.25, 0.5, 1.0][d.pick(3)];
    let mut specs = Vec::new();
    let mut states = Vec::new();
    let mut u_star_sum = 0.0;
    for i in 0..n {
        let t_depart = 1 + d.pick(horizon);
        let u_star = d.range(3.0, 7.0);
        // Bounded so the peak rate stays positive at the largest possible
        // target (x_final <= 25).
        let alpha = if d.unit() < 0.3 { 0.0 } else { d.range(0.0, 0.05) };
        let x_initial = d.range(0.0, 15.0);
        let energy = d.range(1.0, 10.0);
        u_star_sum += u_star;
        specs.push(SessionSpec {
            id: i as u64,
            x_initial,
            x_final: x_initial + energy,
            t_arrival: 0,
            t_depart,
            u_star,
            alpha,
        });
        states.push(BatteryState {
            vehicle: i as u64,
            t: 0,
            x: x_initial,
        });
    }
    let capacity = d.range(0.3, 1.0) * u_star_sum;
    let config = StationConfig::constant(capacity, delta, horizon).unwrap();
    for s in &specs {
        s.validate(horizon).unwrap();
    }
    SmallInstance {
        specs,
        states,
        config,
        active: ActiveSet {
            t: 0,
            members: (0..n).collect(),
        },
    }
}
