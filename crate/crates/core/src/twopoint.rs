//! Two-state reduction.
//!
//! With `x = p_1` and `y = Phi_1 - Phi_2` a two-state game becomes the planar
//! Hamiltonian system
//!
//! ```text
//! dx/ds =  h theta(x) H'(h y)
//! dy/ds = -H(h y) theta'(x) - Fbar'(x)
//! ```
//!
//! with first integral `H(h y) theta(x) + Fbar(x)`. At fixed energy `E` a
//! monotone path has speed `f(x; E) = h theta H'(H^{-1}((E - Fbar) / theta))`,
//! so planning and terminal-payoff problems reduce to scalar quadratures.

use std::fmt;
use std::sync::Arc;

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::lagrangian::LagrangianPair;
use crate::mfg::{assemble, Diagnostics, MfgProblem, MfgSolution};
use crate::quadrature::{adaptive_simpson, integrate_smoothstep, integrate_with_endpoints, MAX_INTERVALS};

type Scalar = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

const X_MIN: f64 = 1e-8;
const X_MAX: f64 = 1.0 - 1e-8;
const ENERGY_MAX: f64 = 1e6;
const W_TOL: f64 = 1e-10;
const TIME_TOL: f64 = 1e-12;
const MIDPOINT_ITERS: usize = 50;
const NEWTON_MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 30;
const TRAJECTORY_STEPS: usize = 256;
const TABLE_NODES: usize = 2048;
const FINE_SHOOTING_STEPS: usize = 16 * TRAJECTORY_STEPS;

/// The reduced data `(h, theta, H, Fbar, G)` of a two-state game.
#[derive(Clone)]
pub struct TwoPointProblem {
    h: f64,
    activation: Activation,
    pi: [f64; 2],
    pair: LagrangianPair,
    fbar: Scalar,
    fbar_prime: Scalar,
    g_diff: Scalar,
    horizon: (f64, f64),
    offset: f64,
    source: Option<Box<MfgProblem>>,
}

impl fmt::Debug for TwoPointProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TwoPointProblem")
            .field("h", &self.h)
            .field("activation", &self.activation.kind())
            .field("pi", &self.pi)
            .field("pair", &self.pair)
            .field("horizon", &self.horizon)
            .finish()
    }
}

impl TwoPointProblem {
    /// Pure transport: `Fbar = 0`, `G = 0`.
    pub fn new(h: f64, activation: Activation, pi: [f64; 2], pair: LagrangianPair, horizon: (f64, f64)) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidArgument(format!("h must be positive, got {h}")));
        }
        if !(pi[0] > 0.0 && pi[1] > 0.0) || (pi[0] + pi[1] - 1.0).abs() > 1e-12 {
            return Err(Error::NonPositiveMeasure { index: if pi[0] > 0.0 { 1 } else { 0 }, value: pi[0].min(pi[1]) });
        }
        let (t0, t_end) = horizon;
        if !(t0 < t_end) || !t0.is_finite() || !t_end.is_finite() {
            return Err(Error::InvalidArgument(format!("horizon ({t0}, {t_end}) is not an interval")));
        }
        let tp = TwoPointProblem {
            h,
            activation,
            pi,
            pair,
            fbar: Arc::new(|_| 0.0),
            fbar_prime: Arc::new(|_| 0.0),
            g_diff: Arc::new(|_| 0.0),
            horizon,
            offset: 0.0,
            source: None,
        };
        for k in 1..200 {
            let x = k as f64 / 200.0;
            let th = tp.theta(x);
            if !(th > 0.0) || !th.is_finite() {
                return Err(Error::InvalidArgument(format!("theta({x}) = {th:e} is not positive")));
            }
        }
        Ok(tp)
    }

    /// Sets the running potential. Without `fbar` the antiderivative of
    /// `fbar_prime` vanishing at 0 is tabulated.
    pub fn with_running(mut self, fbar_prime: Scalar, fbar: Option<Scalar>) -> Result<Self> {
        let fbar = match fbar {
            Some(f) => {
                let step = 1e-4;
                for k in 1..100 {
                    let x = k as f64 / 100.0;
                    let fd = (f(x + step) - f(x - step)) / (2.0 * step);
                    let exact = fbar_prime(x);
                    if (fd - exact).abs() > 1e-8 * (1.0 + exact.abs()) {
                        return Err(Error::InvalidArgument(format!(
                            "Fbar' disagrees with Fbar at x = {x}: {exact:e} vs {fd:e}"
                        )));
                    }
                }
                f
            }
            None => {
                let table = HermiteTable::build(fbar_prime.as_ref())?;
                Arc::new(move |x| table.eval(x))
            }
        };
        self.fbar = fbar;
        self.fbar_prime = fbar_prime;
        Ok(self)
    }

    /// Sets the terminal difference map `G(x) = G_1 - G_2`.
    pub fn with_terminal(mut self, g_diff: Scalar) -> Self {
        self.g_diff = g_diff;
        self
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn pair(&self) -> &LagrangianPair {
        &self.pair
    }

    pub fn horizon(&self) -> (f64, f64) {
        self.horizon
    }

    /// The unreduced game this was built from, if any.
    pub fn source(&self) -> Option<&MfgProblem> {
        self.source.as_deref()
    }

    /// `F(0, 1)`, the constant dropped by fixing `Fbar(0) = 0`.
    pub fn potential_offset(&self) -> f64 {
        self.offset
    }

    /// `theta_12(x, 1 - x)`.
    pub fn theta(&self, x: f64) -> f64 {
        self.activation.theta(x / self.pi[0], (1.0 - x) / self.pi[1])
    }

    /// `d theta / dp_1 - d theta / dp_2` at `(x, 1 - x)`.
    pub fn dtheta(&self, x: f64) -> f64 {
        let (a, b) = (x / self.pi[0], (1.0 - x) / self.pi[1]);
        self.activation.dtheta_dx(a, b) / self.pi[0] - self.activation.dtheta_dx(b, a) / self.pi[1]
    }

    pub fn fbar(&self, x: f64) -> f64 {
        (self.fbar)(x)
    }

    pub fn fbar_prime(&self, x: f64) -> f64 {
        (self.fbar_prime)(x)
    }

    pub fn g_diff(&self, x: f64) -> f64 {
        (self.g_diff)(x)
    }

    /// Speed `|dx/ds|` on the energy level `e`.
    pub fn speed(&self, x: f64, e: f64) -> f64 {
        let th = self.theta(x);
        let c = ((e - self.fbar(x)) / th).max(0.0);
        self.h * th * self.pair.h_prime(self.pair.h_inverse(c))
    }

    /// `y` on the energy level `e`, with the sign of the direction of motion.
    pub fn y_of_x(&self, x: f64, e: f64, direction: f64) -> f64 {
        let c = ((e - self.fbar(x)) / self.theta(x)).max(0.0);
        direction.signum() * self.pair.h_inverse(c) / self.h
    }

    fn rhs(&self, x: f64, y: f64) -> (f64, f64) {
        let b = self.h * y;
        (
            self.h * self.theta(x) * self.pair.h_prime(b),
            -self.pair.h(b) * self.dtheta(x) - self.fbar_prime(x),
        )
    }

    fn max_fbar(&self, a: f64, b: f64) -> f64 {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let samples = 64;
        let mut best = (lo, self.fbar(lo));
        for k in 1..=samples {
            let x = lo + (hi - lo) * k as f64 / samples as f64;
            let v = self.fbar(x);
            if v > best.1 {
                best = (x, v);
            }
        }
        // Golden-section polish around the best sample.
        let w = (hi - lo) / samples as f64;
        let (mut l, mut r) = ((best.0 - w).max(lo), (best.0 + w).min(hi));
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..60 {
            let m1 = r - g * (r - l);
            let m2 = l + g * (r - l);
            if self.fbar(m1) >= self.fbar(m2) {
                r = m2;
            } else {
                l = m1;
            }
        }
        best.1.max(self.fbar(0.5 * (l + r)))
    }

    /// Time to travel between `a` and `b` on the energy level `e`.
    fn travel_time(&self, a: f64, b: f64, e: f64) -> Result<f64> {
        if a == b {
            return Ok(0.0);
        }
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        integrate_smoothstep(|x| 1.0 / self.speed(x, e), lo, hi, TIME_TOL)
    }
}

/// Cubic Hermite interpolant of an antiderivative on `[0, 1]`.
struct HermiteTable {
    step: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl HermiteTable {
    fn build(f: &(dyn Fn(f64) -> f64 + Send + Sync)) -> Result<Self> {
        let step = 1.0 / TABLE_NODES as f64;
        let mut values = vec![0.0; TABLE_NODES + 1];
        let mut slopes = vec![0.0; TABLE_NODES + 1];
        for k in 0..=TABLE_NODES {
            slopes[k] = f(k as f64 * step);
            if !slopes[k].is_finite() {
                return Err(Error::NonFinite(format!("Fbar'({})", k as f64 * step)));
            }
            if k < TABLE_NODES {
                let seg = adaptive_simpson(f, k as f64 * step, (k + 1) as f64 * step, 1e-15, MAX_INTERVALS)?;
                values[k + 1] = values[k] + seg;
            }
        }
        Ok(HermiteTable { step, values, slopes })
    }

    fn eval(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        let k = ((x / self.step) as usize).min(TABLE_NODES - 1);
        let t = (x - k as f64 * self.step) / self.step;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.values[k]
            + h10 * self.step * self.slopes[k]
            + h01 * self.values[k + 1]
            + h11 * self.step * self.slopes[k + 1]
    }
}

/// Reduces a two-state game. `Fbar` is gauged so that `Fbar(0) = 0`.
pub fn reduce(prob: &MfgProblem) -> Result<TwoPointProblem> {
    let g = prob.graph();
    if g.n() != 2 {
        return Err(Error::WrongStateCount(g.n()));
    }
    let edge = &g.edges()[0];
    let pair = prob.lagrangian().on_edge(0).clone();
    let (t0, t_end) = prob.horizon();
    let pi = [g.pi()[0], g.pi()[1]];
    let mut tp = TwoPointProblem::new(edge.sqrt_omega, prob.activation().clone(), pi, pair, (t0, t_end))?;

    let running = prob.running().clone();
    let r = running.clone();
    let fbar_prime: Scalar = Arc::new(move |x| {
        let f = r.field(&[x, 1.0 - x]);
        f[0] - f[1]
    });
    let fbar: Option<Scalar> = match running.potential(&[0.0, 1.0]) {
        Some(base) => {
            tp.offset = base;
            let r = running.clone();
            Some(Arc::new(move |x| r.potential(&[x, 1.0 - x]).unwrap_or(f64::NAN) - base))
        }
        None => None,
    };
    let owner = prob.clone();
    let g_diff: Scalar = Arc::new(move |x| {
        let v = owner.terminal_field(&[x, 1.0 - x]);
        v[0] - v[1]
    });
    tp = tp.with_running(fbar_prime, fbar)?.with_terminal(g_diff);
    tp.source = Some(Box::new(prob.clone()));
    Ok(tp)
}

/// `H(h y) theta(x) + Fbar(x)`.
pub fn reduced_hamiltonian(tp: &TwoPointProblem, x: f64, y: f64) -> Result<f64> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::OutOfDomain { x });
    }
    Ok(tp.pair.h(tp.h * y) * tp.theta(x) + tp.fbar(x))
}

/// Samples of `(x_s, y_s)` with `s` measured from the start of the path.
#[derive(Debug, Clone)]
pub struct ReducedTrajectory {
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub hamiltonian: Vec<f64>,
}

impl ReducedTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `max_s |H(x_s, y_s) - H(x_0, y_0)|`.
    pub fn drift(&self) -> f64 {
        let h0 = self.hamiltonian[0];
        self.hamiltonian.iter().map(|h| (h - h0).abs()).fold(0.0, f64::max)
    }

    /// Lifts to a solution of the two-state game `prob` starting at
    /// `t_start`. `Phi_2` is recovered from its backward equation by the
    /// trapezoid rule and `Phi_1 = Phi_2 + y`. Requires uniform sampling.
    pub fn lift(&self, prob: &MfgProblem, t_start: f64) -> Result<MfgSolution> {
        if prob.graph().n() != 2 {
            return Err(Error::WrongStateCount(prob.graph().n()));
        }
        let n = self.len();
        if n < 2 {
            return Err(Error::InvalidArgument("trajectory has fewer than two samples".into()));
        }
        let p: Vec<Vec<f64>> = self.x.iter().map(|&x| vec![x, 1.0 - x]).collect();
        let rate: Vec<f64> = p
            .iter()
            .zip(&self.y)
            .map(|(pk, &y)| prob.hamiltonian_dp(pk, &[y, 0.0])[1])
            .collect();
        let mut phi2 = vec![0.0; n];
        phi2[n - 1] = prob.terminal_field(&p[n - 1])[1];
        for k in (0..n - 1).rev() {
            let ds = self.times[k + 1] - self.times[k];
            phi2[k] = phi2[k + 1] + 0.5 * ds * (rate[k] + rate[k + 1]);
        }
        let phi: Vec<Vec<f64>> = phi2.iter().zip(&self.y).map(|(&b, &y)| vec![b + y, b]).collect();
        let times: Vec<f64> = self.times.iter().map(|s| t_start + s).collect();
        let diagnostics = Diagnostics { solver: "twopoint".into(), converged: true, ..Default::default() };
        Ok(assemble(prob, times, p, phi, diagnostics))
    }
}

/// Implicit-midpoint integration of the reduced system over `[0, t_end]`.
pub fn integrate_reduced(tp: &TwoPointProblem, x0: f64, y0: f64, t_end: f64, dt: f64) -> Result<ReducedTrajectory> {
    if !(x0 > 0.0 && x0 < 1.0) {
        return Err(Error::OutOfDomain { x: x0 });
    }
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::InvalidArgument(format!("need dt > 0 and t_end >= 0, got {dt}, {t_end}")));
    }
    let steps = ((t_end / dt) - 1e-9).ceil().max(1.0) as usize;
    let dt = t_end / steps as f64;
    let mut out = ReducedTrajectory {
        times: vec![0.0],
        x: vec![x0],
        y: vec![y0],
        hamiltonian: vec![reduced_hamiltonian(tp, x0, y0)?],
    };
    let (mut x, mut y) = (x0, y0);
    for k in 0..steps {
        let s = (k + 1) as f64 * dt;
        let (fx, fy) = tp.rhs(x, y);
        let (mut x1, mut y1) = (x + dt * fx, y + dt * fy);
        let mut converged = false;
        for _ in 0..MIDPOINT_ITERS {
            let (xm, ym) = (0.5 * (x + x1), 0.5 * (y + y1));
            if !(xm > 0.0 && xm < 1.0) {
                return Err(Error::OutOfDomain { x: xm });
            }
            let (gx, gy) = tp.rhs(xm, ym);
            let (nx, ny) = (x + dt * gx, y + dt * gy);
            if !nx.is_finite() || !ny.is_finite() {
                return Err(Error::MidpointDivergence { time: s });
            }
            let change = (nx - x1).abs().max((ny - y1).abs());
            x1 = nx;
            y1 = ny;
            if change <= 1e-15 * (1.0 + x1.abs().max(y1.abs())) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::MidpointDivergence { time: s });
        }
        if !(x1 > 0.0 && x1 < 1.0) {
            return Err(Error::OutOfDomain { x: x1 });
        }
        x = x1;
        y = y1;
        out.times.push(s);
        out.x.push(x);
        out.y.push(y);
        out.hamiltonian.push(reduced_hamiltonian(tp, x, y)?);
    }
    Ok(out)
}

/// `(1/h) |int_{p0}^{p1} theta(x)^{-1/beta} dx|`, `beta = alpha / (alpha - 1)`.
pub fn wasserstein_alpha(tp: &TwoPointProblem, p0: f64, p1: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 1.0) || !alpha.is_finite() {
        return Err(Error::BadExponent(alpha));
    }
    for p in [p0, p1] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::OutOfDomain { x: p });
        }
    }
    if p0 == p1 {
        return Ok(0.0);
    }
    let beta = alpha / (alpha - 1.0);
    let (lo, hi) = if p0 < p1 { (p0, p1) } else { (p1, p0) };
    let integral = integrate_with_endpoints(
        |x| tp.theta(x).powf(-1.0 / beta),
        lo,
        hi,
        lo < X_MIN,
        hi > X_MAX,
        W_TOL,
    )?;
    Ok(integral / tp.h)
}

/// Rebuilds the monotone path from `p0` to `x_end` on the level `e`, sampled
/// uniformly in time over `[0, duration]`.
fn reconstruct(tp: &TwoPointProblem, p0: f64, x_end: f64, e: f64, duration: f64) -> Result<ReducedTrajectory> {
    let sigma = (x_end - p0).signum();
    let steps = TRAJECTORY_STEPS;
    let mut out = ReducedTrajectory { times: Vec::new(), x: Vec::new(), y: Vec::new(), hamiltonian: Vec::new() };
    let push = |out: &mut ReducedTrajectory, s: f64, x: f64| -> Result<()> {
        let y = tp.y_of_x(x, e, sigma);
        out.times.push(s);
        out.x.push(x);
        out.y.push(y);
        out.hamiltonian.push(reduced_hamiltonian(tp, x, y)?);
        Ok(())
    };
    push(&mut out, 0.0, p0)?;
    if sigma == 0.0 {
        for k in 1..=steps {
            push(&mut out, duration * k as f64 / steps as f64, p0)?;
        }
        return Ok(out);
    }
    // Arc length coordinate xi = sigma (x - p0) increases along the path.
    let xi_end = sigma * (x_end - p0);
    let at = |xi: f64| p0 + sigma * xi;
    let (mut xi_prev, mut s_prev) = (0.0, 0.0);
    for k in 1..steps {
        let s_k = duration * k as f64 / steps as f64;
        let gap = |xi: f64| -> Result<f64> { Ok(s_prev + tp.travel_time(at(xi_prev), at(xi), e)? - s_k) };
        let (mut lo, mut hi) = (xi_prev, xi_end);
        if gap(hi)? <= 0.0 {
            push(&mut out, s_k, x_end)?;
            xi_prev = xi_end;
            s_prev = s_k;
            continue;
        }
        let mut xi = xi_prev + (xi_end - xi_prev) / (steps - k + 1) as f64;
        for _ in 0..200 {
            let g = gap(xi)?;
            if g.abs() <= 1e-13 || hi - lo <= 1e-15 {
                break;
            }
            if g > 0.0 {
                hi = xi;
            } else {
                lo = xi;
            }
            let newton = xi - g * tp.speed(at(xi), e);
            xi = if newton > lo && newton < hi && newton != xi { newton } else { 0.5 * (lo + hi) };
        }
        push(&mut out, s_k, at(xi))?;
        s_prev = s_k;
        xi_prev = xi;
    }
    push(&mut out, duration, x_end)?;
    Ok(out)
}

/// Energy level of the monotone path from `p0` to `p1` in time `duration`,
/// and the path itself.
pub fn solve_planning(
    tp: &TwoPointProblem,
    p0: f64,
    p1: f64,
    duration: f64,
    tol: f64,
) -> Result<(f64, ReducedTrajectory)> {
    for p in [p0, p1] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::OutOfDomain { x: p });
        }
    }
    if p0 == p1 {
        return Err(Error::InvalidArgument("planning needs distinct endpoints".into()));
    }
    if !(duration > 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidArgument("duration and tol must be positive".into()));
    }
    let e_lo = tp.max_fbar(p0, p1);
    let time = |l: f64| tp.travel_time(p0, p1, e_lo + l.exp()).unwrap_or(f64::INFINITY);
    // Bracket in l = log(E - max Fbar); travel time decreases in l.
    let step = 4f64.ln();
    let mut l = 0.0;
    let mut t = time(l);
    let (mut l_lo, mut l_hi);
    if t > duration {
        l_lo = l;
        loop {
            l += step;
            if e_lo + l.exp() > ENERGY_MAX {
                return Err(Error::NewtonFailure { iterations: 0, residuals: vec![t - duration] });
            }
            t = time(l);
            if t <= duration {
                l_hi = l;
                break;
            }
            l_lo = l;
        }
    } else {
        l_hi = l;
        loop {
            l -= step;
            if l.exp() < 1e-14 * (1.0 + e_lo.abs()) {
                return Err(Error::NoMonotonePath(format!(
                    "travel time {t:e} at the lowest admissible energy is below {duration:e}; a turning point would be needed"
                )));
            }
            t = time(l);
            if t > duration {
                l_lo = l;
                break;
            }
            l_hi = l;
        }
    }
    let mut l = 0.5 * (l_lo + l_hi);
    let mut iterations = 0;
    loop {
        let r = time(l) - duration;
        if r.abs() <= tol {
            break;
        }
        iterations += 1;
        if iterations > 200 {
            return Err(Error::NewtonFailure { iterations, residuals: vec![r] });
        }
        if r > 0.0 {
            l_lo = l;
        } else {
            l_hi = l;
        }
        let dl = 1e-6;
        let slope = (time(l + dl) - time(l)) / dl;
        let newton = l - r / slope;
        l = if newton.is_finite() && newton > l_lo && newton < l_hi { newton } else { 0.5 * (l_lo + l_hi) };
        if l_hi - l_lo < 1e-15 {
            break;
        }
    }
    let e = e_lo + l.exp();
    Ok((e, reconstruct(tp, p0, p1, e, duration)?))
}

/// Which starting point the game Newton iteration converged from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GameGuess {
    Stationary,
    Euler,
    Shooting,
    /// Newton failed from both starts; the root comes from shooting with a
    /// fine midpoint integration, and the residuals are its integration
    /// error rather than quadrature residuals.
    Integrated,
}

/// Equilibrium of the reduced terminal-payoff game.
#[derive(Debug, Clone)]
pub struct GameSolution {
    pub x_t: f64,
    pub h0: f64,
    pub y0: f64,
    pub trajectory: ReducedTrajectory,
    pub iterations: usize,
    /// Time-equation and energy-equation residuals at the returned root.
    pub residuals: [f64; 2],
    /// Other equilibria may exist; this records where the search started.
    pub guess: GameGuess,
}

/// Residuals of the game system at `(x_T, E)`, or `None` outside the box.
fn game_residuals(tp: &TwoPointProblem, p0: f64, duration: f64, x_t: f64, e: f64) -> Option<[f64; 2]> {
    if !(X_MIN..=X_MAX).contains(&x_t) || !(e <= ENERGY_MAX) || !(e > tp.max_fbar(p0, x_t)) {
        return None;
    }
    let time = tp.travel_time(p0, x_t, e).ok()?;
    let g = tp.g_diff(x_t);
    let energy = tp.theta(x_t) * tp.pair.h(tp.h * g) + tp.fbar(x_t);
    let r = [time - duration, energy - e];
    r.iter().all(|v| v.is_finite()).then_some(r)
}

fn newton_game(
    tp: &TwoPointProblem,
    p0: f64,
    duration: f64,
    tol: f64,
    start: (f64, f64),
) -> Result<(f64, f64, usize, [f64; 2])> {
    let (mut x, mut e) = start;
    let mut r = game_residuals(tp, p0, duration, x, e)
        .ok_or_else(|| Error::NoMonotonePath(format!("starting point ({x}, {e}) is not admissible")))?;
    let norm = |r: &[f64; 2]| r[0].hypot(r[1]);
    for iter in 0..NEWTON_MAX_ITER {
        if r[0].abs() <= tol && r[1].abs() <= tol {
            return Ok((x, e, iter, r));
        }
        let gap = e - tp.max_fbar(p0, x);
        let dx = 1e-7;
        let de = 1e-6 * gap;
        let column = |px: f64, pe: f64, h: f64| -> Option<[f64; 2]> {
            let plus = game_residuals(tp, p0, duration, x + px * h, e + pe * h);
            let minus = game_residuals(tp, p0, duration, x - px * h, e - pe * h);
            match (plus, minus) {
                (Some(a), Some(b)) => Some([(a[0] - b[0]) / (2.0 * h), (a[1] - b[1]) / (2.0 * h)]),
                (Some(a), None) => Some([(a[0] - r[0]) / h, (a[1] - r[1]) / h]),
                (None, Some(b)) => Some([(r[0] - b[0]) / h, (r[1] - b[1]) / h]),
                (None, None) => None,
            }
        };
        let fail = || Error::NewtonFailure { iterations: iter, residuals: r.to_vec() };
        let jx = column(1.0, 0.0, dx).ok_or_else(fail)?;
        let je = column(0.0, 1.0, de).ok_or_else(fail)?;
        let det = jx[0] * je[1] - je[0] * jx[1];
        if !det.is_finite() || det == 0.0 {
            return Err(fail());
        }
        let step_x = -(je[1] * r[0] - je[0] * r[1]) / det;
        let step_e = -(-jx[1] * r[0] + jx[0] * r[1]) / det;
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let (nx, ne) = (x + lambda * step_x, e + lambda * step_e);
            if let Some(nr) = game_residuals(tp, p0, duration, nx, ne) {
                if norm(&nr) < (1.0 - 1e-4 * lambda) * norm(&r) {
                    accepted = Some((nx, ne, nr));
                    break;
                }
            }
            lambda *= 0.5;
        }
        let (nx, ne, nr) = accepted.ok_or_else(fail)?;
        x = nx;
        e = ne;
        r = nr;
    }
    if r[0].abs() <= tol && r[1].abs() <= tol {
        return Ok((x, e, NEWTON_MAX_ITER, r));
    }
    Err(Error::NewtonFailure { iterations: NEWTON_MAX_ITER, residuals: r.to_vec() })
}

/// Makes `(x, E)` admissible by lifting `E` above the running maximum.
fn admissible(tp: &TwoPointProblem, p0: f64, x: f64, e: f64) -> (f64, f64) {
    let mut x = x.clamp(X_MIN, X_MAX);
    if x == p0 {
        let push = if tp.g_diff(p0) != 0.0 { tp.g_diff(p0) } else { -tp.fbar_prime(p0) };
        x = (p0 + 1e-6 * push.signum()).clamp(X_MIN, X_MAX);
    }
    let floor = tp.max_fbar(p0, x);
    let e = if e > floor { e } else { floor + 1e-3 * (1.0 + floor.abs()) };
    (x, e)
}

fn euler_guess(tp: &TwoPointProblem, p0: f64, duration: f64) -> (f64, f64) {
    let steps = 200;
    let ds = duration / steps as f64;
    let g0 = tp.g_diff(p0);
    let b = tp.h * g0;
    let mut x = p0;
    for _ in 0..steps {
        let next = (x + ds * tp.h * tp.theta(x) * tp.pair.h_prime(b)).clamp(X_MIN, X_MAX);
        // Stop short of the zero of G: beyond it the direction check fails.
        if tp.g_diff(next) * g0 <= 0.0 {
            x = 0.5 * (x + next);
            break;
        }
        x = next;
    }
    // Energy of the start state: at the end of the Euler path G is near its
    // zero and the level would sit on the singular boundary.
    let e = tp.theta(p0) * tp.pair.h(b) + tp.fbar(p0);
    admissible(tp, p0, x, e)
}

/// Shooting on `y0` with the midpoint integrator over `steps` steps:
/// returns `(y0, x_T)` with `y_T = G(x_T)` up to integration error.
fn shoot(tp: &TwoPointProblem, p0: f64, duration: f64, steps: usize) -> Option<(f64, f64)> {
    let dt = duration / steps as f64;
    let mismatch = |y0: f64| -> Option<(f64, f64)> {
        let tr = integrate_reduced(tp, p0, y0, duration, dt).ok()?;
        let (xt, yt) = (*tr.x.last()?, *tr.y.last()?);
        Some((yt - tp.g_diff(xt), xt))
    };
    let mut scale = tp.g_diff(p0).abs() + duration * tp.fbar_prime(p0).abs() + 1e-3;
    for _ in 0..8 {
        let samples = 41;
        let ys: Vec<f64> = (0..samples).map(|k| scale * (2.0 * k as f64 / (samples - 1) as f64 - 1.0)).collect();
        let vals: Vec<Option<(f64, f64)>> = ys.iter().map(|&y| mismatch(y)).collect();
        for k in 0..samples - 1 {
            if let (Some((a, _)), Some((b, _))) = (vals[k], vals[k + 1]) {
                if a == 0.0 || a.signum() != b.signum() {
                    let (mut lo, mut hi, mut flo) = (ys[k], ys[k + 1], a);
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        match mismatch(mid) {
                            Some((m, _)) if m.signum() == flo.signum() && m != 0.0 => {
                                lo = mid;
                                flo = m;
                            }
                            Some(_) => hi = mid,
                            None => break,
                        }
                    }
                    let y0 = 0.5 * (lo + hi);
                    let (_, xt) = mismatch(y0)?;
                    return Some((y0, xt));
                }
            }
        }
        scale *= 4.0;
    }
    None
}

fn shooting_guess(tp: &TwoPointProblem, p0: f64, duration: f64) -> Option<(f64, f64)> {
    let (y0, xt) = shoot(tp, p0, duration, 200)?;
    let e = reduced_hamiltonian(tp, p0, y0).ok()?;
    Some(admissible(tp, p0, xt, e))
}

/// Root `(x_T, E)` of the game system without the reconstructed path.
#[derive(Debug, Clone, Copy)]
pub(crate) struct GameRoot {
    pub x_t: f64,
    pub e: f64,
    pub y0: f64,
    pub iterations: usize,
    pub residuals: [f64; 2],
    pub guess: GameGuess,
}

fn check_game_args(p0: f64, duration: f64, tol: f64) -> Result<()> {
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(Error::OutOfDomain { x: p0 });
    }
    if !(duration > 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidArgument("duration and tol must be positive".into()));
    }
    Ok(())
}

/// Newton from an explicit start, with the direction check applied.
pub(crate) fn game_root_from(
    tp: &TwoPointProblem,
    p0: f64,
    duration: f64,
    tol: f64,
    start: (f64, f64),
    guess: GameGuess,
) -> Result<GameRoot> {
    let (x, e) = admissible(tp, p0, start.0, start.1);
    let (x_t, e, iterations, residuals) = newton_game(tp, p0, duration, tol, (x, e))?;
    let sigma = (x_t - p0).signum();
    let g = tp.g_diff(x_t);
    if g != 0.0 && g.signum() != sigma {
        return Err(Error::NoMonotonePath(format!(
            "terminal payoff difference {g:e} points against the motion to {x_t}"
        )));
    }
    Ok(GameRoot { x_t, e, y0: tp.y_of_x(p0, e, sigma), iterations, residuals, guess })
}

pub(crate) fn game_root(tp: &TwoPointProblem, p0: f64, duration: f64, tol: f64) -> Result<GameRoot> {
    check_game_args(p0, duration, tol)?;
    if tp.g_diff(p0).abs() <= 1e-14 && tp.fbar_prime(p0).abs() <= 1e-14 {
        let e = tp.fbar(p0);
        return Ok(GameRoot { x_t: p0, e, y0: 0.0, iterations: 0, residuals: [0.0, 0.0], guess: GameGuess::Stationary });
    }
    let euler = game_root_from(tp, p0, duration, tol, euler_guess(tp, p0, duration), GameGuess::Euler);
    let err = match euler {
        Ok(root) => return Ok(root),
        Err(err) => err,
    };
    let err = match shooting_guess(tp, p0, duration) {
        Some(start) => match game_root_from(tp, p0, duration, tol, start, GameGuess::Shooting) {
            Ok(root) => return Ok(root),
            Err(e) => e,
        },
        None => err,
    };
    // Near a rest point E - Fbar is far below the rounding level of Fbar, so
    // the time quadrature is noise-limited; integrate instead.
    let (y0, x_t) = shoot(tp, p0, duration, FINE_SHOOTING_STEPS).ok_or(err)?;
    let e = reduced_hamiltonian(tp, p0, y0)?;
    let energy = tp.theta(x_t) * tp.pair.h(tp.h * tp.g_diff(x_t)) + tp.fbar(x_t);
    Ok(GameRoot { x_t, e, y0, iterations: 0, residuals: [0.0, energy - e], guess: GameGuess::Integrated })
}

/// Equilibrium of the two-state game started at `p0` with `duration` left:
/// solves the time equation and the terminal energy equation for
/// `(x_T, E)` by damped Newton.
pub fn solve_potential_game(tp: &TwoPointProblem, p0: f64, duration: f64, tol: f64) -> Result<GameSolution> {
    let root = game_root(tp, p0, duration, tol)?;
    let trajectory = if root.guess == GameGuess::Integrated {
        let fine = integrate_reduced(tp, p0, root.y0, duration, duration / FINE_SHOOTING_STEPS as f64)?;
        let pick = |v: &[f64]| v.iter().step_by(16).copied().collect::<Vec<f64>>();
        ReducedTrajectory {
            times: pick(&fine.times),
            x: pick(&fine.x),
            y: pick(&fine.y),
            hamiltonian: pick(&fine.hamiltonian),
        }
    } else {
        reconstruct(tp, p0, root.x_t, root.e, duration)?
    };
    Ok(GameSolution {
        x_t: root.x_t,
        h0: root.e,
        y0: root.y0,
        trajectory,
        iterations: root.iterations,
        residuals: root.residuals,
        guess: root.guess,
    })
}

/// The Euler starting point used by [`solve_potential_game`].
pub(crate) fn default_start(tp: &TwoPointProblem, p0: f64, duration: f64) -> (f64, f64) {
    euler_guess(tp, p0, duration)
}
