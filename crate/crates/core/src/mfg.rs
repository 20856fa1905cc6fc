//! Mean field games on a reversible-chain graph.
//!
//! Both solvers share one time discretization on a uniform grid
//! `t_0 < ... < t_N = T`:
//!
//! ```text
//! p_{k+1} = p_k - dt div( theta(p_k) H'(grad Phi_{k+1}) )
//! Phi_k   = Phi_{k+1} + dt [ sum_j H(grad Phi_{k+1})_ij dtheta_ij/dp_i(p_k) + F(p_k) ]
//! Phi_N   = G(p_N)
//! ```
//!
//! For potential games this is exactly the first-order optimality system of
//! the flux program solved by [`solve_potential_convex`], whose adjoint
//! variables are the `Phi_k` above; [`solve_mfg_fixedpoint`] iterates the
//! same two recursions directly.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, LU, Dyn};

use crate::activation::Activation;
use crate::coupling::{check_concave, check_potential_consistency, Coupling};
use crate::error::{Error, Result};
use crate::graph::{Density, MarkovGraph};
use crate::lagrangian::Lagrangians;

const CONVEX_MAX_ITER: usize = 100_000;
const FIXED_POINT_MAX_SWEEPS: usize = 10_000;
const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
const POSITIVITY_SLACK: f64 = 1e-12;

/// Terminal data: a payoff `G`, or a prescribed final density (transport).
#[derive(Clone)]
pub enum Terminal {
    Payoff(Arc<dyn Coupling>),
    Pinned(Density),
}

impl fmt::Debug for Terminal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Terminal::Payoff(g) => write!(f, "Payoff({})", g.describe()),
            Terminal::Pinned(p) => write!(f, "Pinned({:?})", p.as_slice()),
        }
    }
}

/// A finite-state mean field game on `[t0, T]`.
#[derive(Clone)]
pub struct MfgProblem {
    graph: MarkovGraph,
    activation: Activation,
    lagrangian: Lagrangians,
    running: Arc<dyn Coupling>,
    terminal: Terminal,
    t0: f64,
    t_end: f64,
    initial: Density,
}

impl fmt::Debug for MfgProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MfgProblem")
            .field("n", &self.graph.n())
            .field("activation", &self.activation.kind())
            .field("lagrangian", &self.lagrangian)
            .field("running", &self.running.describe())
            .field("terminal", &self.terminal)
            .field("horizon", &(self.t0, self.t_end))
            .field("initial", &self.initial.as_slice())
            .finish()
    }
}

impl MfgProblem {
    pub fn new(
        graph: MarkovGraph,
        activation: Activation,
        lagrangian: impl Into<Lagrangians>,
        running: Arc<dyn Coupling>,
        terminal: Terminal,
        horizon: (f64, f64),
        initial: Density,
    ) -> Result<Self> {
        let n = graph.n();
        let lagrangian = lagrangian.into();
        if let Lagrangians::PerEdge(v) = &lagrangian {
            if v.len() != graph.num_edges() {
                return Err(Error::DimensionMismatch { expected: graph.num_edges(), found: v.len() });
            }
        }
        if initial.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: initial.len() });
        }
        let (t0, t_end) = horizon;
        if !(t0 < t_end) || !t0.is_finite() || !t_end.is_finite() {
            return Err(Error::InvalidArgument(format!("horizon ({t0}, {t_end}) is not an interval")));
        }
        if running.field(initial.as_slice()).len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: running.field(initial.as_slice()).len() });
        }
        check_potential_consistency(running.as_ref(), n)?;
        match &terminal {
            Terminal::Payoff(g) => {
                if g.field(initial.as_slice()).len() != n {
                    return Err(Error::DimensionMismatch { expected: n, found: g.field(initial.as_slice()).len() });
                }
                check_potential_consistency(g.as_ref(), n)?;
            }
            Terminal::Pinned(p) => {
                if p.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, found: p.len() });
                }
            }
        }
        Ok(MfgProblem { graph, activation, lagrangian, running, terminal, t0, t_end, initial })
    }

    /// Same game started from `p` at time `t`.
    pub fn restarted(&self, p: &[f64], t: f64) -> Result<Self> {
        if !(t < self.t_end) {
            return Err(Error::InvalidArgument(format!("start time {t} is not before {}", self.t_end)));
        }
        let mut out = self.clone();
        out.initial = Density::new(p.to_vec())?;
        out.t0 = t;
        Ok(out)
    }

    pub fn graph(&self) -> &MarkovGraph {
        &self.graph
    }

    pub fn activation(&self) -> &Activation {
        &self.activation
    }

    pub fn lagrangian(&self) -> &Lagrangians {
        &self.lagrangian
    }

    pub fn running(&self) -> &Arc<dyn Coupling> {
        &self.running
    }

    pub fn terminal(&self) -> &Terminal {
        &self.terminal
    }

    pub fn horizon(&self) -> (f64, f64) {
        (self.t0, self.t_end)
    }

    pub fn initial(&self) -> &Density {
        &self.initial
    }

    /// Both `F` and (for payoff terminals) `G` derive from potentials.
    pub fn is_potential(&self) -> bool {
        self.running.has_potential()
            && match &self.terminal {
                Terminal::Payoff(g) => g.has_potential(),
                Terminal::Pinned(_) => true,
            }
    }

    /// `G(p)`; zero for pinned terminals.
    pub fn terminal_field(&self, p: &[f64]) -> Vec<f64> {
        match &self.terminal {
            Terminal::Payoff(g) => g.field(p),
            Terminal::Pinned(_) => vec![0.0; p.len()],
        }
    }

    fn terminal_potential(&self, p: &[f64]) -> Option<f64> {
        match &self.terminal {
            Terminal::Payoff(g) => g.potential(p),
            Terminal::Pinned(_) => Some(0.0),
        }
    }

    /// `grad Phi` on the edges.
    fn edge_gradient(&self, phi: &[f64]) -> Vec<f64> {
        self.graph.gradient_unchecked(phi)
    }

    /// One forward step of the continuity equation.
    pub(crate) fn forward_step(&self, p: &[f64], phi_next: &[f64], dt: f64) -> Vec<f64> {
        let grad = self.edge_gradient(phi_next);
        let flux: Vec<f64> = self
            .graph
            .edges()
            .iter()
            .enumerate()
            .map(|(e, edge)| self.activation.on_edge(&self.graph, p, edge) * self.lagrangian.on_edge(e).h_prime(grad[e]))
            .collect();
        let div = self.graph.divergence_unchecked(&flux);
        p.iter().zip(div).map(|(pk, d)| pk - dt * d).collect()
    }

    /// One backward step of the adjoint equation.
    pub(crate) fn backward_step(&self, p: &[f64], phi_next: &[f64], dt: f64) -> Vec<f64> {
        let grad = self.edge_gradient(phi_next);
        let f = self.running.field(p);
        let mut out: Vec<f64> = phi_next.iter().zip(&f).map(|(a, b)| a + dt * b).collect();
        for (e, edge) in self.graph.edges().iter().enumerate() {
            let h = self.lagrangian.on_edge(e).h(grad[e]);
            let (di, dj) = self.activation.on_edge_grad(&self.graph, p, edge);
            out[edge.i] += dt * h * di;
            out[edge.j] += dt * h * dj;
        }
        out
    }

    /// `sum_E H(grad Phi) theta(p)`, the kinetic part of the Hamiltonian.
    pub(crate) fn kinetic_hamiltonian(&self, p: &[f64], phi: &[f64]) -> f64 {
        let grad = self.edge_gradient(phi);
        self.graph
            .edges()
            .iter()
            .enumerate()
            .map(|(e, edge)| self.lagrangian.on_edge(e).h(grad[e]) * self.activation.on_edge(&self.graph, p, edge))
            .sum()
    }

    /// `dH/dp_i` summed over edges, plus `F_i`.
    pub(crate) fn hamiltonian_dp(&self, p: &[f64], phi: &[f64]) -> Vec<f64> {
        let grad = self.edge_gradient(phi);
        let mut out = self.running.field(p);
        for (e, edge) in self.graph.edges().iter().enumerate() {
            let h = self.lagrangian.on_edge(e).h(grad[e]);
            let (di, dj) = self.activation.on_edge_grad(&self.graph, p, edge);
            out[edge.i] += h * di;
            out[edge.j] += h * dj;
        }
        out
    }

    /// `-div(theta(p) H'(grad Phi))`, the continuity right-hand side.
    pub(crate) fn hamiltonian_dphi(&self, p: &[f64], phi: &[f64]) -> Vec<f64> {
        let next = self.forward_step(p, phi, 1.0);
        next.iter().zip(p).map(|(a, b)| a - b).collect()
    }
}

/// Edge fluxes `m_k = theta(p_k) v_k`, one row per time step.
#[derive(Debug, Clone)]
pub struct FluxVariables {
    pub m: Vec<Vec<f64>>,
}

/// Solver bookkeeping.
#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    pub solver: String,
    pub iterations: usize,
    /// Flux-gradient sup-norm (convex) or Picard update size (fixed point).
    pub residual: f64,
    pub converged: bool,
    /// Objective after each accepted ascent step (convex solver only).
    pub objective_history: Vec<f64>,
}

/// A time-gridded equilibrium `(p_k, Phi_k)`.
#[derive(Debug, Clone)]
pub struct MfgSolution {
    pub times: Vec<f64>,
    pub p: Vec<Vec<f64>>,
    pub phi: Vec<Vec<f64>>,
    /// Feedback velocity `H'(grad Phi_k)` on each edge.
    pub v: Vec<Vec<f64>>,
    pub flux: FluxVariables,
    pub hamiltonian_trace: Option<Vec<f64>>,
    /// Discrete payoff of the trajectory, for potential games.
    pub value: Option<f64>,
    pub diagnostics: Diagnostics,
}

impl MfgSolution {
    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    /// `sum_k dt sum_E theta L(m / theta)`, the transport action of the fluxes.
    pub fn action(&self, prob: &MfgProblem) -> f64 {
        let dt = self.dt();
        self.flux
            .m
            .iter()
            .zip(&self.p)
            .map(|(m, p)| dt * edge_cost(prob, p, m))
            .sum()
    }
}

fn edge_cost(prob: &MfgProblem, p: &[f64], m: &[f64]) -> f64 {
    prob.graph
        .edges()
        .iter()
        .enumerate()
        .map(|(e, edge)| prob.lagrangian.on_edge(e).perspective(m[e], prob.activation.on_edge(&prob.graph, p, edge)))
        .sum()
}

/// `H(p, Phi) = sum_E H(grad Phi) theta(p) + F(p)`.
pub fn hamiltonian_value(prob: &MfgProblem, p: &[f64], phi: &[f64]) -> Result<f64> {
    let f = prob.running.potential(p).ok_or(Error::NoPotentialStructure)?;
    Ok(prob.kinetic_hamiltonian(p, phi) + f)
}

fn uniform_grid(prob: &MfgProblem, n_steps: usize) -> Result<(Vec<f64>, f64)> {
    if n_steps == 0 {
        return Err(Error::InvalidArgument("need at least one time step".into()));
    }
    let dt = (prob.t_end - prob.t0) / n_steps as f64;
    let times = (0..=n_steps)
        .map(|k| if k == n_steps { prob.t_end } else { prob.t0 + k as f64 * dt })
        .collect();
    Ok((times, dt))
}

pub(crate) fn assemble(
    prob: &MfgProblem,
    times: Vec<f64>,
    p: Vec<Vec<f64>>,
    phi: Vec<Vec<f64>>,
    diagnostics: Diagnostics,
) -> MfgSolution {
    let n_steps = times.len() - 1;
    let dt = times[1] - times[0];
    let v: Vec<Vec<f64>> = phi
        .iter()
        .map(|f| {
            prob.edge_gradient(f)
                .iter()
                .enumerate()
                .map(|(e, &g)| prob.lagrangian.on_edge(e).h_prime(g))
                .collect()
        })
        .collect();
    let m: Vec<Vec<f64>> = (0..n_steps)
        .map(|k| {
            prob.graph
                .edges()
                .iter()
                .enumerate()
                .map(|(e, edge)| prob.activation.on_edge(&prob.graph, &p[k], edge) * v[k + 1][e])
                .collect()
        })
        .collect();
    let hamiltonian_trace = if prob.running.has_potential() {
        Some(p.iter().zip(&phi).map(|(pk, fk)| hamiltonian_value(prob, pk, fk).unwrap()).collect())
    } else {
        None
    };
    let value = if prob.is_potential() {
        let running: f64 = (0..n_steps)
            .map(|k| dt * (edge_cost(prob, &p[k], &m[k]) - prob.running.potential(&p[k]).unwrap()))
            .sum();
        Some(prob.terminal_potential(&p[n_steps]).unwrap() - running)
    } else {
        None
    };
    MfgSolution { times, p, phi, v, flux: FluxVariables { m }, hamiltonian_trace, value, diagnostics }
}

/// Eliminated-density flux program for potential games.
struct FluxProgram<'a> {
    prob: &'a MfgProblem,
    n_steps: usize,
    n_edges: usize,
    dt: f64,
    floor: f64,
    projector: Option<Projector>,
}

/// Orthogonal projection onto `sum_k D m_k = c` along `D^T`.
struct Projector {
    lu: LU<f64, Dyn, Dyn>,
    n_steps: usize,
}

impl Projector {
    fn new(graph: &MarkovGraph, n_steps: usize) -> Self {
        let n = graph.n();
        let mut a = -graph.laplacian_matrix();
        a += DMatrix::from_element(n, n, 1.0);
        Projector { lu: a.lu(), n_steps }
    }

    /// `mu` with `N D D^T mu = b`, `sum mu = 0`.
    fn multiplier(&self, b: &[f64]) -> Vec<f64> {
        let rhs = DVector::from_iterator(b.len(), b.iter().map(|v| v / self.n_steps as f64));
        self.lu.solve(&rhs).expect("graph Laplacian plus rank-one term is invertible").iter().copied().collect()
    }
}

impl<'a> FluxProgram<'a> {
    fn new(prob: &'a MfgProblem, n_steps: usize) -> Self {
        let dt = (prob.t_end - prob.t0) / n_steps as f64;
        let mut floor = prob.initial.iter().copied().fold(1e-10, f64::min);
        let projector = match &prob.terminal {
            Terminal::Pinned(target) => {
                floor = target.iter().copied().fold(floor, f64::min);
                Some(Projector::new(&prob.graph, n_steps))
            }
            Terminal::Payoff(_) => None,
        };
        FluxProgram { prob, n_steps, n_edges: prob.graph.num_edges(), dt, floor, projector }
    }

    fn row<'m>(&self, m: &'m [f64], k: usize) -> &'m [f64] {
        &m[k * self.n_edges..(k + 1) * self.n_edges]
    }

    fn densities(&self, m: &[f64]) -> Option<Vec<Vec<f64>>> {
        let g = &self.prob.graph;
        let mut ps = Vec::with_capacity(self.n_steps + 1);
        ps.push(self.prob.initial.to_vec());
        for k in 0..self.n_steps {
            let div = g.divergence_unchecked(self.row(m, k));
            let next: Vec<f64> = ps[k].iter().zip(div).map(|(p, d)| p - self.dt * d).collect();
            if next.iter().any(|&v| !(v >= self.floor - POSITIVITY_SLACK) ) {
                return None;
            }
            ps.push(next);
        }
        Some(ps)
    }

    fn objective(&self, m: &[f64], ps: &[Vec<f64>]) -> f64 {
        let mut j = self.prob.terminal_potential(&ps[self.n_steps]).unwrap();
        for (k, p) in ps.iter().take(self.n_steps).enumerate() {
            let f = self.prob.running.potential(p).unwrap();
            j -= self.dt * (edge_cost(self.prob, p, self.row(m, k)) - f);
        }
        j
    }

    /// Adjoint variables `lambda_k = dJ/dp_k` and the scaled flux gradient
    /// `r = (dJ/dm) / dt`.
    fn adjoint(&self, m: &[f64], ps: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let prob = self.prob;
        let g = &prob.graph;
        let mut lambda = vec![Vec::new(); self.n_steps + 1];
        lambda[self.n_steps] = prob.terminal_field(&ps[self.n_steps]);
        let mut r = vec![0.0; m.len()];
        for k in (0..self.n_steps).rev() {
            let next = &lambda[k + 1];
            let f = prob.running.field(&ps[k]);
            let mut lam: Vec<f64> = next.iter().zip(&f).map(|(a, b)| a + self.dt * b).collect();
            for (e, edge) in g.edges().iter().enumerate() {
                let pair = prob.lagrangian.on_edge(e);
                let theta = prob.activation.on_edge(g, &ps[k], edge);
                let mke = m[k * self.n_edges + e];
                let v = if theta > 0.0 { mke / theta } else { 0.0 };
                let lp = pair.l_prime(v);
                let dual = pair.l(v) - v * lp;
                let (di, dj) = prob.activation.on_edge_grad(g, &ps[k], edge);
                lam[edge.i] -= self.dt * dual * di;
                lam[edge.j] -= self.dt * dual * dj;
                r[k * self.n_edges + e] = edge.sqrt_omega * (next[edge.j] - next[edge.i]) - lp;
            }
            lambda[k] = lam;
        }
        (lambda, r)
    }

    /// Removes the component of `r` that would violate the pinned constraint,
    /// returning the multiplier.
    fn project(&self, r: &mut [f64]) -> Option<Vec<f64>> {
        let proj = self.projector.as_ref()?;
        let g = &self.prob.graph;
        let mut total = vec![0.0; self.n_edges];
        for k in 0..self.n_steps {
            for (t, v) in total.iter_mut().zip(self.row(r, k)) {
                *t += v;
            }
        }
        let mu = proj.multiplier(&g.divergence_unchecked(&total));
        let shift: Vec<f64> = g.edges().iter().map(|e| e.sqrt_omega * (mu[e.i] - mu[e.j])).collect();
        for k in 0..self.n_steps {
            for (e, s) in shift.iter().enumerate() {
                r[k * self.n_edges + e] -= s;
            }
        }
        Some(mu)
    }

    fn initial_flux(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n_steps * self.n_edges];
        if let (Some(proj), Terminal::Pinned(target)) = (&self.projector, &self.prob.terminal) {
            let c: Vec<f64> = self.prob.initial.iter().zip(target.iter()).map(|(a, b)| (a - b) / self.dt).collect();
            let mu = proj.multiplier(&c);
            for k in 0..self.n_steps {
                for (e, edge) in self.prob.graph.edges().iter().enumerate() {
                    m[k * self.n_edges + e] = edge.sqrt_omega * (mu[edge.i] - mu[edge.j]);
                }
            }
        }
        m
    }
}

struct Iterate {
    m: Vec<f64>,
    ps: Vec<Vec<f64>>,
    j: f64,
    lambda: Vec<Vec<f64>>,
    r: Vec<f64>,
    d: Vec<f64>,
    eta: Option<Vec<f64>>,
    res: f64,
}

fn evaluate(prog: &FluxProgram, m: Vec<f64>, ps: Vec<Vec<f64>>, j: f64) -> Iterate {
    let (lambda, r) = prog.adjoint(&m, &ps);
    let mut d = r.clone();
    let eta = prog.project(&mut d);
    let res = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Iterate { m, ps, j, lambda, r, d, eta, res }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Maximizes the discrete payoff over edge fluxes by preconditioned
/// gradient ascent (Barzilai-Borwein steps with Armijo backtracking).
pub fn solve_potential_convex(prob: &MfgProblem, n_steps: usize, tol: f64) -> Result<MfgSolution> {
    if !prob.is_potential() {
        return Err(Error::NoPotentialStructure);
    }
    if !prob.activation.is_concave() {
        return Err(Error::NotConcave("activation".into()));
    }
    let n = prob.graph.n();
    check_concave(prob.running.as_ref(), n, "running potential")?;
    if let Terminal::Payoff(g) = &prob.terminal {
        check_concave(g.as_ref(), n, "terminal potential")?;
    }
    let (times, _) = uniform_grid(prob, n_steps)?;
    let prog = FluxProgram::new(prob, n_steps);

    let m0 = prog.initial_flux();
    let ps0 = prog.densities(&m0).ok_or_else(|| {
        let (index, value) = prob.initial.iter().copied().enumerate().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        Error::PositivityLoss { time: prob.t0, index, value }
    })?;
    let j0 = prog.objective(&m0, &ps0);
    let mut it = evaluate(&prog, m0, ps0, j0);
    let mut history = vec![it.j];
    let mut step = 1.0;
    let mut iterations = 0;

    let finish = |it: Iterate, iterations: usize, history: Vec<f64>, converged: bool| {
        let phi: Vec<Vec<f64>> = match &it.eta {
            Some(eta) => it.lambda.iter().map(|l| l.iter().zip(eta).map(|(a, b)| a + b).collect()).collect(),
            None => it.lambda.clone(),
        };
        let diagnostics = Diagnostics {
            solver: "convex".into(),
            iterations,
            residual: it.res,
            converged,
            objective_history: history,
        };
        let mut sol = assemble(prob, times.clone(), it.ps, phi, diagnostics);
        sol.flux = FluxVariables { m: it.m.chunks(prog.n_edges.max(1)).map(|c| c.to_vec()).collect() };
        if prog.n_edges == 0 {
            sol.flux.m = vec![Vec::new(); n_steps];
        }
        sol.value = Some(it.j);
        sol
    };

    while it.res > tol {
        if iterations >= CONVEX_MAX_ITER {
            let residual = it.res;
            let partial = finish(it, iterations, history, false);
            return Err(Error::NonConvergence { iterations, residual, partial: Some(Box::new(partial)) });
        }
        iterations += 1;
        let slope = prog.dt * dot(&it.r, &it.d);
        let mut trial = step;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let m_new: Vec<f64> = it.m.iter().zip(&it.d).map(|(m, d)| m + trial * d).collect();
            if let Some(ps) = prog.densities(&m_new) {
                let j_new = prog.objective(&m_new, &ps);
                if j_new.is_finite() {
                    if j_new >= it.j + ARMIJO_C * trial * slope {
                        accepted = Some(evaluate(&prog, m_new, ps, j_new));
                        break;
                    }
                    // Near the optimum the objective change is below rounding;
                    // accept when the gradient still decreases.
                    if j_new >= it.j - 1e-13 * (1.0 + it.j.abs()) {
                        let cand = evaluate(&prog, m_new, ps, j_new);
                        if cand.res < it.res {
                            accepted = Some(cand);
                            break;
                        }
                    }
                }
            }
            trial *= 0.5;
        }
        let Some(next) = accepted else {
            let residual = it.res;
            let partial = finish(it, iterations, history, false);
            return Err(Error::NonConvergence { iterations, residual, partial: Some(Box::new(partial)) });
        };
        let s: Vec<f64> = next.m.iter().zip(&it.m).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next.d.iter().zip(&it.d).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        step = if sy < 0.0 { dot(&s, &s) / -sy } else { 2.0 * trial };
        step = step.clamp(1e-10, 1e10);
        history.push(next.j);
        it = next;
    }
    Ok(finish(it, iterations, history, true))
}

fn forward_sweep(prob: &MfgProblem, times: &[f64], phi: &[Vec<f64>], dt: f64) -> Result<Vec<Vec<f64>>> {
    let mut ps = Vec::with_capacity(phi.len());
    ps.push(prob.initial.to_vec());
    for k in 0..phi.len() - 1 {
        let next = prob.forward_step(&ps[k], &phi[k + 1], dt);
        if let Some((index, &value)) = next.iter().enumerate().find(|(_, v)| !(**v >= -POSITIVITY_SLACK)) {
            return Err(Error::PositivityLoss { time: times[k + 1], index, value });
        }
        ps.push(next);
    }
    Ok(ps)
}

fn backward_sweep(prob: &MfgProblem, ps: &[Vec<f64>], dt: f64) -> Vec<Vec<f64>> {
    let n_steps = ps.len() - 1;
    let mut phi = vec![Vec::new(); n_steps + 1];
    phi[n_steps] = prob.terminal_field(&ps[n_steps]);
    for k in (0..n_steps).rev() {
        phi[k] = prob.backward_step(&ps[k], &phi[k + 1], dt);
    }
    phi
}

/// Densities and potentials of one Picard iterate.
type Sweep = (Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Damped Picard iteration on the `Phi` trajectory: forward sweep for `p`,
/// backward sweep for `Phi`, relaxed update.
pub fn solve_mfg_fixedpoint(prob: &MfgProblem, n_steps: usize, damping: f64, tol: f64) -> Result<MfgSolution> {
    solve_mfg_fixedpoint_capped(prob, n_steps, damping, tol, FIXED_POINT_MAX_SWEEPS)
}

/// [`solve_mfg_fixedpoint`] with an explicit sweep cap.
pub fn solve_mfg_fixedpoint_capped(
    prob: &MfgProblem,
    n_steps: usize,
    damping: f64,
    tol: f64,
    max_sweeps: usize,
) -> Result<MfgSolution> {
    if matches!(prob.terminal, Terminal::Pinned(_)) {
        return Err(Error::InvalidArgument("fixed-point solver needs a terminal payoff".into()));
    }
    if !(damping > 0.0 && damping <= 1.0) {
        return Err(Error::InvalidArgument(format!("damping {damping} outside (0, 1]")));
    }
    let (times, dt) = uniform_grid(prob, n_steps)?;
    let start = prob.terminal_field(prob.initial.as_slice());
    let mut phi = vec![start; n_steps + 1];
    let mut residual = f64::INFINITY;
    // Last iterate whose forward sweep stayed on the simplex.
    let mut last: Option<Sweep> = None;
    let stalled = |sweeps: usize, residual: f64, last: Option<Sweep>| {
        let partial = last.map(|(ps, phi)| {
            let diagnostics = Diagnostics {
                solver: "fixed_point".into(),
                iterations: sweeps,
                residual,
                converged: false,
                objective_history: Vec::new(),
            };
            Box::new(assemble(prob, times.clone(), ps, phi, diagnostics))
        });
        Error::NonConvergence { iterations: sweeps, residual, partial }
    };
    for sweep in 1..=max_sweeps {
        let ps = match forward_sweep(prob, &times, &phi, dt) {
            Ok(ps) => ps,
            // A diverging iteration is a convergence failure; only the very
            // first sweep reports the domain error itself.
            Err(e) if last.is_none() => return Err(e),
            Err(_) => return Err(stalled(sweep - 1, residual, last)),
        };
        let target = backward_sweep(prob, &ps, dt);
        let mut next = phi.clone();
        let mut change: f64 = 0.0;
        for (cur, new) in next.iter_mut().zip(&target) {
            for (c, t) in cur.iter_mut().zip(new) {
                change = change.max((t - *c).abs());
                *c += damping * (t - *c);
            }
        }
        if !change.is_finite() {
            if last.is_none() {
                return Err(Error::NonFinite("fixed-point iterate".into()));
            }
            return Err(stalled(sweep - 1, residual, last));
        }
        last = Some((ps, phi));
        phi = next;
        residual = change;
        if residual <= tol {
            let ps = forward_sweep(prob, &times, &phi, dt)?;
            let diagnostics = Diagnostics { solver: "fixed_point".into(), iterations: sweep, residual, converged: true, objective_history: Vec::new() };
            return Ok(assemble(prob, times, ps, phi, diagnostics));
        }
    }
    let last = forward_sweep(prob, &times, &phi, dt).ok().map(|ps| (ps, phi.clone())).or(last);
    Err(stalled(max_sweeps, residual, last))
}

/// Sup over interior grid times of the continuity and adjoint residuals,
/// with central differences in time.
pub fn euler_lagrange_residual(prob: &MfgProblem, sol: &MfgSolution) -> (f64, f64) {
    let n_steps = sol.n_steps();
    let mut cont: f64 = 0.0;
    let mut adj: f64 = 0.0;
    for k in 1..n_steps {
        let h = sol.times[k + 1] - sol.times[k - 1];
        let dphi = prob.hamiltonian_dphi(&sol.p[k], &sol.phi[k]);
        let dp = prob.hamiltonian_dp(&sol.p[k], &sol.phi[k]);
        for i in 0..prob.graph.n() {
            let pdot = (sol.p[k + 1][i] - sol.p[k - 1][i]) / h;
            let phidot = (sol.phi[k + 1][i] - sol.phi[k - 1][i]) / h;
            cont = cont.max((pdot - dphi[i]).abs());
            adj = adj.max((phidot + dp[i]).abs());
        }
    }
    (cont, adj)
}

/// Trapezoid-rule payoff `G(p_T) - int (sum_E theta L(v) - F(p)) ds`.
pub fn value_of_trajectory(prob: &MfgProblem, sol: &MfgSolution) -> Result<f64> {
    if !prob.is_potential() {
        return Err(Error::NoPotentialStructure);
    }
    let integrand: Vec<f64> = sol
        .p
        .iter()
        .zip(&sol.v)
        .map(|(p, v)| {
            let cost: f64 = prob
                .graph
                .edges()
                .iter()
                .enumerate()
                .map(|(e, edge)| prob.activation.on_edge(&prob.graph, p, edge) * prob.lagrangian.on_edge(e).l(v[e]))
                .sum();
            cost - prob.running.potential(p).unwrap()
        })
        .collect();
    let n_steps = sol.n_steps();
    Ok(prob.terminal_potential(&sol.p[n_steps]).unwrap() - trapezoid(&sol.times, &integrand))
}

pub(crate) fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times.windows(2).zip(values.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum()
}

/// Value from the homogeneity identity
/// `G(p_T) - (beta - 1) H_0 (T - t) + beta int F`, where `H_0` is the time
/// average of the Hamiltonian trace.
pub fn homogeneous_value(prob: &MfgProblem, sol: &MfgSolution, beta: f64) -> Result<f64> {
    if !prob.is_potential() {
        return Err(Error::NoPotentialStructure);
    }
    let trace = sol.hamiltonian_trace.as_ref().ok_or(Error::NoPotentialStructure)?;
    let lo = trace.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = trace.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo > 1e-4 {
        return Err(Error::NonConstantHamiltonian { spread: hi - lo });
    }
    let duration = sol.times[sol.n_steps()] - sol.times[0];
    let h0 = trapezoid(&sol.times, trace) / duration;
    let f: Vec<f64> = sol.p.iter().map(|p| prob.running.potential(p).unwrap()).collect();
    let n_steps = sol.n_steps();
    Ok(prob.terminal_potential(&sol.p[n_steps]).unwrap() - (beta - 1.0) * h0 * duration + beta * trapezoid(&sol.times, &f))
}

/// Discrete value function `U(p, t)`: the optimal payoff of the game
/// restarted from `(p, t)`.
pub fn value_function(prob: &MfgProblem, p: &[f64], t: f64, n_steps: usize, tol: f64) -> Result<f64> {
    if t >= prob.t_end {
        return prob.terminal_potential(p).ok_or(Error::NoPotentialStructure);
    }
    let sub = prob.restarted(p, t)?;
    let sol = solve_potential_convex(&sub, n_steps, tol)?;
    Ok(sol.value.expect("potential games carry a value"))
}

/// `|d_t U + H(p, grad U)|` at `(p, t)`, by central differences of re-solved
/// values in time and along the simplex directions `e_i - e_j`.
pub fn hje_residual(
    prob: &MfgProblem,
    p: &[f64],
    t: f64,
    dt_fd: f64,
    dp_fd: f64,
    n_steps: usize,
    tol: f64,
) -> Result<f64> {
    if !prob.is_potential() {
        return Err(Error::NoPotentialStructure);
    }
    let u = |q: &[f64], s: f64| value_function(prob, q, s, n_steps, tol);
    let dudt = (u(p, t + dt_fd)? - u(p, t - dt_fd)?) / (2.0 * dt_fd);
    let g = &prob.graph;
    let mut kinetic = 0.0;
    for (e, edge) in g.edges().iter().enumerate() {
        let mut plus = p.to_vec();
        let mut minus = p.to_vec();
        plus[edge.i] += dp_fd;
        plus[edge.j] -= dp_fd;
        minus[edge.i] -= dp_fd;
        minus[edge.j] += dp_fd;
        // (d_i - d_j) U, i.e. U_i - U_j in potential form.
        let diff = (u(&plus, t)? - u(&minus, t)?) / (2.0 * dp_fd);
        let grad = -edge.sqrt_omega * diff;
        kinetic += prob.lagrangian.on_edge(e).h(grad) * prob.activation.on_edge(g, p, edge);
    }
    let f = prob.running.potential(p).unwrap();
    Ok((dudt + kinetic + f).abs())
}
