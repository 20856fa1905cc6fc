//! Master-equation values by characteristics.
//!
//! `u(p, t)` is the initial adjoint `Phi_t` of the game restarted from
//! `(p, t)`. For two states the difference `w = u_1 - u_2` solves
//!
//! ```text
//! d_t w + theta'(x) H(h w) + Fbar'(x) + h theta(x) H'(h w) d_x w = 0,   w(x, T) = G(x)
//! ```
//!
//! whose characteristics are the reduced trajectories `w(x_s, s) = y_s`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mfg::{solve_mfg_fixedpoint, solve_potential_convex, MfgProblem, MfgSolution, Terminal};
use crate::twopoint::{default_start, game_root, game_root_from, GameGuess, TwoPointProblem};

/// Grid margin from the simplex boundary.
pub const GRID_MARGIN: f64 = 1e-3;
const FIXED_POINT_DAMPING: f64 = 0.5;

fn solve_from(prob: &MfgProblem, p: &[f64], t: f64, n_steps: usize, tol: f64) -> Result<MfgSolution> {
    let sub = prob.restarted(p, t)?;
    if sub.is_potential() {
        solve_potential_convex(&sub, n_steps, tol)
    } else {
        solve_mfg_fixedpoint(&sub, n_steps, FIXED_POINT_DAMPING, tol)
    }
}

/// `u(p, t)`: the adjoint at the start of the game restarted from `(p, t)`.
pub fn u_at(prob: &MfgProblem, p: &[f64], t: f64, n_steps: usize, tol: f64) -> Result<Vec<f64>> {
    let n = prob.graph().n();
    if p.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: p.len() });
    }
    if let Terminal::Pinned(_) = prob.terminal() {
        return Err(Error::InvalidArgument("master values need a terminal payoff".into()));
    }
    let (_, t_end) = prob.horizon();
    if t >= t_end {
        return Ok(prob.terminal_field(p));
    }
    Ok(solve_from(prob, p, t, n_steps, tol)?.phi.swap_remove(0))
}

/// `sup |u(p_r, r) - Phi_r|` for the game from `(p, t)`, with `r` snapped to
/// that solve's time grid.
pub fn semigroup_check(prob: &MfgProblem, p: &[f64], t: f64, r: f64, n_steps: usize, tol: f64) -> Result<f64> {
    let (_, t_end) = prob.horizon();
    if !(t < r && r < t_end) {
        return Err(Error::InvalidArgument(format!("need t < r < T, got {t}, {r}, {t_end}")));
    }
    let sol = solve_from(prob, p, t, n_steps, tol)?;
    let dt = sol.dt();
    let k = (((r - t) / dt).round() as usize).clamp(1, n_steps - 1);
    let again = u_at(prob, &sol.p[k], sol.times[k], n_steps - k, tol)?;
    Ok(again.iter().zip(&sol.phi[k]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

/// `U(q, p, t) = sum_i q_i u_i(p, t)`.
pub fn mixed_value(prob: &MfgProblem, q: &[f64], p: &[f64], t: f64, n_steps: usize, tol: f64) -> Result<f64> {
    let u = u_at(prob, p, t, n_steps, tol)?;
    if q.len() != u.len() {
        return Err(Error::DimensionMismatch { expected: u.len(), found: q.len() });
    }
    Ok(q.iter().zip(&u).map(|(a, b)| a * b).sum())
}

/// Options for [`reduced_master_grid`].
#[derive(Debug, Clone, Copy)]
pub struct MasterOptions {
    pub tol: f64,
    /// Time steps for the full-game fallback when shooting fails.
    pub lift_steps: usize,
    /// Re-solve every node from a perturbed start and flag disagreements.
    pub check_ambiguity: bool,
}

impl Default for MasterOptions {
    fn default() -> Self {
        MasterOptions { tol: 1e-10, lift_steps: 128, check_ambiguity: false }
    }
}

/// A grid node whose characteristic solve failed.
#[derive(Debug, Clone)]
pub struct NodeFailure {
    pub t_index: usize,
    pub x_index: usize,
    pub reason: String,
}

/// `w(x, t)` on a tensor grid, indexed `[t][x]`; failed nodes are holes.
#[derive(Debug, Clone)]
pub struct MasterField {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub w: Vec<Vec<Option<f64>>>,
    pub failures: Vec<NodeFailure>,
    /// Nodes where a perturbed restart converged to a different equilibrium.
    pub ambiguous: Vec<(usize, usize)>,
}

impl MasterField {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }

    /// Sup-norm residual of the reduced master equation, with forward
    /// differences in `t` and central differences in `x` at interior nodes.
    pub fn residual(&self, tp: &TwoPointProblem) -> Result<f64> {
        if !self.is_complete() {
            return Err(Error::InvalidArgument(format!("{} grid nodes are holes", self.failures.len())));
        }
        if self.x.len() < 3 || self.t.len() < 2 {
            return Err(Error::InvalidArgument("grid too small for a residual".into()));
        }
        let w = |it: usize, ix: usize| self.w[it][ix].expect("complete grid");
        let pair = tp.pair();
        let h = tp.h();
        let mut worst: f64 = 0.0;
        for it in 0..self.t.len() - 1 {
            let ddt = self.t[it + 1] - self.t[it];
            for ix in 1..self.x.len() - 1 {
                let x = self.x[ix];
                let v = w(it, ix);
                let wt = (w(it + 1, ix) - v) / ddt;
                let wx = (w(it, ix + 1) - w(it, ix - 1)) / (self.x[ix + 1] - self.x[ix - 1]);
                let r = wt
                    + tp.dtheta(x) * pair.h(h * v)
                    + tp.fbar_prime(x)
                    + h * tp.theta(x) * pair.h_prime(h * v) * wx;
                worst = worst.max(r.abs());
            }
        }
        Ok(worst)
    }
}

fn check_grid(name: &str, g: &[f64], lo: f64, hi: f64) -> Result<()> {
    if g.len() < 2 {
        return Err(Error::InvalidArgument(format!("{name} grid needs at least two points")));
    }
    if g.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument(format!("{name} grid must be strictly increasing")));
    }
    if g[0] < lo - 1e-12 || g[g.len() - 1] > hi + 1e-12 {
        return Err(Error::InvalidArgument(format!("{name} grid leaves [{lo}, {hi}]")));
    }
    Ok(())
}

/// `x` values spaced evenly on `[GRID_MARGIN, 1 - GRID_MARGIN]`.
pub fn interior_grid(points: usize) -> Vec<f64> {
    let span = 1.0 - 2.0 * GRID_MARGIN;
    (0..points).map(|k| GRID_MARGIN + span * k as f64 / (points - 1) as f64).collect()
}

enum NodeOutcome {
    Value(f64, bool),
    Failed(String),
}

fn solve_node(tp: &TwoPointProblem, x: f64, t: f64, opts: &MasterOptions) -> NodeOutcome {
    let (_, t_end) = tp.horizon();
    let duration = t_end - t;
    if duration <= 0.0 {
        return NodeOutcome::Value(tp.g_diff(x), false);
    }
    match game_root(tp, x, duration, opts.tol) {
        Ok(root) => {
            let ambiguous = opts.check_ambiguity && root.guess != GameGuess::Stationary && {
                let (xs, es) = default_start(tp, x, duration);
                let shifted = (x + 1.5 * (xs - x), es);
                match game_root_from(tp, x, duration, opts.tol, shifted, GameGuess::Euler) {
                    Ok(other) => (other.x_t - root.x_t).abs() > 1e-6,
                    Err(_) => false,
                }
            };
            NodeOutcome::Value(root.y0, ambiguous)
        }
        Err(shoot) => match tp.source() {
            Some(prob) => match u_at(prob, &[x, 1.0 - x], t, opts.lift_steps, opts.tol) {
                Ok(u) => NodeOutcome::Value(u[0] - u[1], false),
                Err(lift) => NodeOutcome::Failed(format!("shooting: {shoot}; lift: {lift}")),
            },
            None => NodeOutcome::Failed(shoot.to_string()),
        },
    }
}

/// Fills `w(x, t)` node by node from independent two-state solves.
pub fn reduced_master_grid(tp: &TwoPointProblem, x_grid: &[f64], t_grid: &[f64], opts: &MasterOptions) -> Result<MasterField> {
    let (t0, t_end) = tp.horizon();
    check_grid("x", x_grid, GRID_MARGIN, 1.0 - GRID_MARGIN)?;
    check_grid("t", t_grid, t0, t_end)?;
    let nx = x_grid.len();
    let outcomes: Vec<NodeOutcome> = (0..t_grid.len() * nx)
        .into_par_iter()
        .map(|k| solve_node(tp, x_grid[k % nx], t_grid[k / nx], opts))
        .collect();
    let mut w = vec![vec![None; nx]; t_grid.len()];
    let mut failures = Vec::new();
    let mut ambiguous = Vec::new();
    for (k, out) in outcomes.into_iter().enumerate() {
        let (it, ix) = (k / nx, k % nx);
        match out {
            NodeOutcome::Value(v, amb) => {
                w[it][ix] = Some(v);
                if amb {
                    ambiguous.push((it, ix));
                }
            }
            NodeOutcome::Failed(reason) => failures.push(NodeFailure { t_index: it, x_index: ix, reason }),
        }
    }
    Ok(MasterField { x: x_grid.to_vec(), t: t_grid.to_vec(), w, failures, ambiguous })
}

/// `u(x, t)` for a two-state game on a tensor grid, indexed `[t][x]`.
#[derive(Debug, Clone)]
pub struct UGrid {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub u: Vec<Vec<[f64; 2]>>,
}

/// Computes `u` at every node of a two-state grid.
pub fn master_u_grid(prob: &MfgProblem, x_grid: &[f64], t_grid: &[f64], n_steps: usize, tol: f64) -> Result<UGrid> {
    if prob.graph().n() != 2 {
        return Err(Error::WrongStateCount(prob.graph().n()));
    }
    let (t0, t_end) = prob.horizon();
    check_grid("x", x_grid, GRID_MARGIN, 1.0 - GRID_MARGIN)?;
    check_grid("t", t_grid, t0, t_end)?;
    let nx = x_grid.len();
    let values: Vec<[f64; 2]> = (0..t_grid.len() * nx)
        .into_par_iter()
        .map(|k| {
            let x = x_grid[k % nx];
            let u = u_at(prob, &[x, 1.0 - x], t_grid[k / nx], n_steps, tol)?;
            Ok([u[0], u[1]])
        })
        .collect::<Result<_>>()?;
    let u = values.chunks(nx).map(|row| row.to_vec()).collect();
    Ok(UGrid { x: x_grid.to_vec(), t: t_grid.to_vec(), u })
}

impl UGrid {
    /// Pointwise residual of the weighted equation
    /// `d_t U + sum_i q_i dH/dp_i + d_x U dx/dt` with `U = q . u`; `q = e_i`
    /// gives the equation for `u_i`.
    fn weighted_residual(&self, prob: &MfgProblem, q: [f64; 2]) -> f64 {
        let big_u = |it: usize, ix: usize| q[0] * self.u[it][ix][0] + q[1] * self.u[it][ix][1];
        let mut worst: f64 = 0.0;
        for it in 0..self.t.len() - 1 {
            let ddt = self.t[it + 1] - self.t[it];
            for ix in 1..self.x.len() - 1 {
                let x = self.x[ix];
                let p = [x, 1.0 - x];
                let u = self.u[it][ix];
                let dp = prob.hamiltonian_dp(&p, &u);
                let velocity = prob.hamiltonian_dphi(&p, &u)[0];
                let ut = (big_u(it + 1, ix) - big_u(it, ix)) / ddt;
                let ux = (big_u(it, ix + 1) - big_u(it, ix - 1)) / (self.x[ix + 1] - self.x[ix - 1]);
                let r = ut + q[0] * dp[0] + q[1] * dp[1] + ux * velocity;
                worst = worst.max(r.abs());
            }
        }
        worst
    }

    /// Sup-norm residuals of the two `u_i` equations.
    pub fn u_residuals(&self, prob: &MfgProblem) -> [f64; 2] {
        [self.weighted_residual(prob, [1.0, 0.0]), self.weighted_residual(prob, [0.0, 1.0])]
    }

    /// Sup-norm residual of the mixed equation for the individual law `q`.
    pub fn mixed_residual(&self, prob: &MfgProblem, q: [f64; 2]) -> f64 {
        self.weighted_residual(prob, q)
    }
}
