//! Acceptance suite: one line per criterion, non-zero exit on any failure.
//!
//! Every threshold below is pinned; none is tuned to observed values.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use mfgraph::activation::{Activation, ActivationKind, DissipationPsiStar, GeneratorPhi};
use mfgraph::coupling::{Coupling, QuadraticCoupling, ZeroCoupling};
use mfgraph::flow::{integrate_forward, integrate_generalized, integrate_onsager};
use mfgraph::master::{interior_grid, reduced_master_grid, semigroup_check, MasterOptions};
use mfgraph::mfg::{euler_lagrange_residual, hje_residual, solve_potential_convex, value_function};
use mfgraph::twopoint::{integrate_reduced, reduce, solve_planning, solve_potential_game, wasserstein_alpha};
use mfgraph::{DMatrix, Density, LagrangianPair, MarkovGraph, MfgProblem, Terminal, TwoPointProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const W_CLOSED_FORM_TOL: f64 = 1e-9;
const W_CONVEX_REL_TOL: f64 = 1e-2;
const C1_RUNTIME: Duration = Duration::from_secs(10);
const FIRST_INTEGRAL_REL_TOL: f64 = 1e-3;
const ALPHA_TWO_TOL: f64 = 1e-10;
const ALPHA_THREE_TOL: f64 = 1e-2;
const PSI_THETA_TOL: f64 = 1e-12;
const FLOW_DT: f64 = 1e-3;
const FLOW_AGREEMENT: f64 = 10.0 * FLOW_DT * FLOW_DT;
const EQUILIBRIUM_TOL: f64 = 1e-6;
const HESSIAN_FLOOR: f64 = -1e-7;
const EL_FACTOR: f64 = 5.0;
/// "Halving" under dt halving, with room for the next-order term.
const HALVING_RATIO: f64 = 1.6;
const SECOND_ORDER_RATIO: (f64, f64) = (3.0, 5.0);
const SEMIGROUP_TOL: f64 = 1e-3;
const C9_RUNTIME: Duration = Duration::from_secs(30);
const GAME_RESIDUAL_TOL: f64 = 1e-8;
const RESIMULATION_TOL: f64 = 1e-5;
const VALUE_GRADIENT_TOL: f64 = 1e-3;
const HJE_TOL: f64 = 1e-2;
const MASTER_TOL: f64 = 0.05;
const TRIANGLE_SLACK: f64 = 1e-10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn two_state_graph() -> MarkovGraph {
    MarkovGraph::from_weights(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]), &[0.5, 0.5]).unwrap()
}

fn quadratic(w: &[f64], b: Option<Vec<f64>>) -> Arc<dyn Coupling> {
    let n = (w.len() as f64).sqrt() as usize;
    Arc::new(QuadraticCoupling::new(DMatrix::from_row_slice(n, n, w), b).unwrap())
}

fn two_state_game(kind: ActivationKind, running: Arc<dyn Coupling>, terminal: Terminal, p0: f64) -> MfgProblem {
    MfgProblem::new(
        two_state_graph(),
        Activation::of_kind(kind),
        LagrangianPair::power(2.0).unwrap(),
        running,
        terminal,
        (0.0, 1.0),
        Density::new(vec![p0, 1.0 - p0]).unwrap(),
    )
    .unwrap()
}

/// Running coupling `F = W p` of the two-state game used throughout.
fn w_running() -> Arc<dyn Coupling> {
    quadratic(&[-0.2, 0.4, 0.4, 0.0], None)
}

/// Terminal payoff `-(3/4)(p_1 - 0.4)^2` up to a constant.
fn w_terminal() -> Terminal {
    Terminal::Payoff(quadratic(&[-1.5, 0.0, 0.0, 0.0], Some(vec![0.6, 0.0])))
}

fn transport(kind: ActivationKind) -> MfgProblem {
    MfgProblem::new(
        two_state_graph(),
        Activation::of_kind(kind),
        LagrangianPair::power(2.0).unwrap(),
        Arc::new(ZeroCoupling),
        Terminal::Pinned(Density::new(vec![0.8, 0.2]).unwrap()),
        (0.0, 1.0),
        Density::new(vec![0.2, 0.8]).unwrap(),
    )
    .unwrap()
}

/// Composite Simpson on a fixed uniform mesh, independent of the library
/// quadrature.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut s = f(a) + f(b);
    for k in 1..panels {
        s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Composite three-point Gauss-Legendre; never evaluates the endpoints.
fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let nodes = [(-(0.6f64).sqrt(), 5.0 / 9.0), (0.0, 8.0 / 9.0), ((0.6f64).sqrt(), 5.0 / 9.0)];
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|k| {
            let mid = a + (k as f64 + 0.5) * h;
            nodes.iter().map(|(x, w)| w * f(mid + 0.5 * h * x)).sum::<f64>() * 0.5 * h
        })
        .sum()
}

fn random_reversible(n: usize, rng: &mut ChaCha8Rng) -> MarkovGraph {
    let mut omega = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let w: f64 = rng.gen_range(0.2..1.5);
            omega[(i, j)] = w;
            omega[(j, i)] = w;
        }
    }
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
    let total: f64 = raw.iter().sum();
    let pi: Vec<f64> = raw.iter().map(|v| v / total).collect();
    // Rates Q_ij = omega_ij / pi_i, so the chain is reversible for pi.
    let mut q = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                q[(i, j)] = omega[(i, j)] / pi[i];
                q[(i, i)] -= q[(i, j)];
            }
        }
    }
    MarkovGraph::from_rates(q).unwrap()
}

fn c1() -> Outcome {
    let start = Instant::now();
    let tp = reduce(&transport(ActivationKind::Quadratic)).unwrap();
    let w = wasserstein_alpha(&tp, 0.2, 0.8, 2.0).unwrap();
    let prob = transport(ActivationKind::Quadratic);
    let sol = solve_potential_convex(&prob, 256, 1e-10).unwrap();
    let convex = (2.0 * sol.action(&prob)).sqrt();
    let rel = (convex - 0.6).abs() / 0.6;
    let elapsed = start.elapsed();
    check(
        (w - 0.6).abs() <= W_CLOSED_FORM_TOL && rel <= W_CONVEX_REL_TOL && elapsed < C1_RUNTIME,
        format!("W2 = {w:.12}, sqrt(2 action) = {convex:.6} (rel {rel:.1e}), {elapsed:.2?}"),
    )
}

fn c2() -> Outcome {
    let tp = reduce(&transport(ActivationKind::LogMean)).unwrap();
    let (_, tr) = solve_planning(&tp, 0.2, 0.8, 1.0, 1e-12).unwrap();
    let h0 = tr.hamiltonian.iter().sum::<f64>() / tr.len() as f64;
    let integral = simpson(|x| tp.theta(x).powf(-0.5), 0.2, 0.8, 20_000) / tp.h();
    let rel = ((2.0 * h0).sqrt() - integral).abs() / integral;
    check(rel <= FIRST_INTEGRAL_REL_TOL, format!("sqrt(2 H0) = {:.10}, quadrature = {integral:.10}, rel {rel:.1e}", (2.0 * h0).sqrt()))
}

fn c3() -> Outcome {
    let tp = reduce(&transport(ActivationKind::LogMean)).unwrap();
    let w2 = wasserstein_alpha(&tp, 0.2, 0.8, 2.0).unwrap();
    let generic = simpson(|x| tp.theta(x).powf(-1.0 / 2.0), 0.2, 0.8, 20_000) / tp.h();
    let d2 = (w2 - generic).abs();

    let (alpha, beta) = (3.0, 1.5);
    let tp3 = TwoPointProblem::new(tp.h(), Activation::of_kind(ActivationKind::LogMean), [0.5, 0.5], LagrangianPair::power(alpha).unwrap(), (0.0, 1.0)).unwrap();
    let (_, tr) = solve_planning(&tp3, 0.2, 0.8, 1.0, 1e-12).unwrap();
    let h0 = tr.hamiltonian.iter().sum::<f64>() / tr.len() as f64;
    let lhs = (beta * h0).powf(1.0 / alpha);
    let rhs = simpson(|x| tp3.theta(x).powf(-1.0 / beta), 0.2, 0.8, 20_000) / tp3.h();
    let d3 = (lhs - rhs).abs();
    check(
        d2 <= ALPHA_TWO_TOL && d3 <= ALPHA_THREE_TOL,
        format!("alpha=2 gap {d2:.1e}; alpha=3: {lhs:.8} vs {rhs:.8} (gap {d3:.1e})"),
    )
}

fn c4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pairs = [
        (ActivationKind::Arithmetic, DissipationPsiStar::log_cosh()),
        (ActivationKind::Geometric, DissipationPsiStar::cosh_half()),
        (ActivationKind::Harmonic, DissipationPsiStar::cosh()),
    ];
    let points: Vec<(f64, f64)> = (0..1000)
        .map(|_| (10.0 * (1.0 - rng.gen::<f64>()), 10.0 * (1.0 - rng.gen::<f64>())))
        .collect();
    let mut worst: f64 = 0.0;
    for (kind, psi) in &pairs {
        let a = Activation::of_kind(*kind);
        for &(x, y) in &points {
            let r = psi.derivative(x.ln() - y.ln()) * a.theta(x, y) - (x - y);
            worst = worst.max(r.abs());
        }
    }
    check(worst <= PSI_THETA_TOL, format!("max identity residual {worst:.2e}"))
}

fn c5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = random_reversible(5, &mut rng);
    let raw: Vec<f64> = (0..5).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let p0 = Density::new(raw.iter().map(|v| v / total).collect()).unwrap();
    let phi = GeneratorPhi::entropy();
    let t_end = 5.0;
    let raw_tr = integrate_forward(&g, &phi, &p0, t_end, FLOW_DT).unwrap();
    let mut trajectories = vec![(
        "onsager",
        integrate_onsager(&g, &Activation::of_kind(ActivationKind::LogMean), &phi, &p0, t_end, FLOW_DT).unwrap(),
    )];
    for (name, kind, psi) in [
        ("arithmetic", ActivationKind::Arithmetic, DissipationPsiStar::log_cosh()),
        ("geometric", ActivationKind::Geometric, DissipationPsiStar::cosh_half()),
        ("harmonic", ActivationKind::Harmonic, DissipationPsiStar::cosh()),
    ] {
        let a = Activation::of_kind(kind);
        trajectories.push((name, integrate_generalized(&g, &a, &phi, &psi, &p0, t_end, FLOW_DT).unwrap()));
    }
    let mut gap: f64 = 0.0;
    for (_, tr) in &trajectories {
        for (a, b) in tr.densities.iter().zip(&raw_tr.densities) {
            gap = gap.max(a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max));
        }
    }
    let rise = raw_tr.dissipation.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let long = 50.0 / g.spectral_gap();
    let settled = integrate_forward(&g, &phi, &p0, long, 1e-2).unwrap();
    let dist = settled.last().iter().zip(g.pi()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    check(
        gap <= FLOW_AGREEMENT && rise <= FLOW_AGREEMENT && dist <= EQUILIBRIUM_TOL,
        format!("sup gap {gap:.2e}, max dissipation rise {rise:.2e}, |p(50/gap) - pi| {dist:.2e}"),
    )
}

fn c6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let h = 1e-4;
    let mut worst = f64::INFINITY;
    for kind in [ActivationKind::LogMean, ActivationKind::Geometric, ActivationKind::Harmonic] {
        let a = Activation::of_kind(kind);
        let lambda = |v: [f64; 3]| v[0] * v[0] / a.theta(v[1], v[2]);
        for _ in 0..500 {
            let c = [rng.gen_range(-1.0..1.0), rng.gen_range(0.2..2.0), rng.gen_range(0.2..2.0)];
            let mut hess = nalgebra::Matrix3::<f64>::zeros();
            for i in 0..3 {
                for j in 0..3 {
                    let at = |si: f64, sj: f64| {
                        let mut v = c;
                        v[i] += si * h;
                        v[j] += sj * h;
                        lambda(v)
                    };
                    hess[(i, j)] = (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * h * h);
                }
            }
            let sym = 0.5 * (hess + hess.transpose());
            let min = sym.symmetric_eigenvalues().min();
            worst = worst.min(min);
        }
    }
    check(worst >= HESSIAN_FLOOR, format!("min Hessian eigenvalue {worst:.2e}"))
}

fn four_state_game() -> MfgProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let g = random_reversible(4, &mut rng);
    let w = [-0.6, 0.1, 0.0, 0.1, 0.1, -0.5, 0.1, 0.0, 0.0, 0.1, -0.7, 0.2, 0.1, 0.0, 0.2, -0.4];
    MfgProblem::new(
        g,
        Activation::of_kind(ActivationKind::LogMean),
        LagrangianPair::power(2.0).unwrap(),
        quadratic(&w, None),
        Terminal::Payoff(quadratic(
            &[-1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, -1.0],
            Some(vec![0.4, 0.1, 0.0, 0.2]),
        )),
        (0.0, 1.0),
        Density::new(vec![0.4, 0.3, 0.2, 0.1]).unwrap(),
    )
    .unwrap()
}

fn c7() -> Outcome {
    let instances = [
        ("2-state", two_state_game(ActivationKind::LogMean, w_running(), w_terminal(), 0.7)),
        ("4-state", four_state_game()),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, prob) in &instances {
        let mut res = Vec::new();
        for n in [128, 256] {
            let sol = solve_potential_convex(prob, n, 1e-10).unwrap();
            let (c, a) = euler_lagrange_residual(prob, &sol);
            res.push((c.max(a), sol.dt()));
        }
        let ratio = res[0].0 / res[1].0;
        pass &= res[0].0 <= EL_FACTOR * res[0].1 && ratio >= HALVING_RATIO;
        parts.push(format!("{name}: {:.2e} -> {:.2e} (x{ratio:.2})", res[0].0, res[1].0));
    }
    check(pass, parts.join("; "))
}

fn c8() -> Outcome {
    let prob = two_state_game(ActivationKind::LogMean, w_running(), w_terminal(), 0.7);
    let tp = reduce(&prob).unwrap();
    let d1 = integrate_reduced(&tp, 0.7, -0.5, 1.0, 0.02).unwrap().drift();
    let d2 = integrate_reduced(&tp, 0.7, -0.5, 1.0, 0.01).unwrap().drift();
    let mid_ratio = d1 / d2;
    let spread = |n: usize| {
        let tr = solve_potential_convex(&prob, n, 1e-10).unwrap().hamiltonian_trace.unwrap();
        let lo = tr.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = tr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    };
    let (s1, s2) = (spread(128), spread(256));
    let solver_ratio = s1 / s2;
    check(
        (SECOND_ORDER_RATIO.0..=SECOND_ORDER_RATIO.1).contains(&mid_ratio) && solver_ratio >= HALVING_RATIO,
        format!("midpoint drift {d1:.2e} -> {d2:.2e} (x{mid_ratio:.2}); solver trace spread {s1:.2e} -> {s2:.2e} (x{solver_ratio:.2})"),
    )
}

fn c9() -> Outcome {
    let start = Instant::now();
    let prob = two_state_game(ActivationKind::LogMean, w_running(), w_terminal(), 0.7);
    let mut worst: f64 = 0.0;
    for t in [0.2, 0.4, 0.6] {
        let r = 0.5 * (t + 1.0);
        worst = worst.max(semigroup_check(&prob, &[0.7, 0.3], t, r, 256, 1e-8).unwrap());
    }
    let elapsed = start.elapsed();
    check(worst <= SEMIGROUP_TOL && elapsed < C9_RUNTIME, format!("max semigroup gap {worst:.2e}, {elapsed:.2?}"))
}

/// Time-equation and energy-equation residuals of a game root, recomputed
/// with the independent composite rule.
fn algebraic_residuals(tp: &TwoPointProblem, p0: f64, x_t: f64, e: f64) -> (f64, f64) {
    let h = tp.h();
    let speed = |x: f64| {
        let th = tp.theta(x);
        h * th * (2.0 * (e - tp.fbar(x)) / th).sqrt()
    };
    // A path that ends at rest stops where F-bar reaches E; locate that point
    // directly so the quadrature does not see E - F-bar of either sign.
    let gap = |x: f64| e - tp.fbar(x);
    let dir = (x_t - p0).signum();
    let mut x_end = x_t;
    let beyond = x_t + dir * 1e-6;
    if gap(x_t) <= 1e-9 && gap(beyond) < 0.0 {
        let (mut a, mut b) = (p0, beyond);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if gap(m) > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        x_end = a;
    }
    // x = x_end + (p0 - x_end) s^2 removes the inverse square root at rest.
    let span = p0 - x_end;
    let time = gauss_legendre(|s| 2.0 * span.abs() * s / speed(x_end + span * s * s), 0.0, 1.0, 4000);
    let g = tp.g_diff(x_t);
    let energy = tp.theta(x_t) * 0.5 * (h * g).powi(2) + tp.fbar(x_t);
    ((time - 1.0).abs(), (energy - e).abs())
}

fn c10() -> Outcome {
    let instances = [
        (
            "F=0",
            two_state_game(ActivationKind::LogMean, Arc::new(ZeroCoupling), w_terminal(), 0.8),
            0.8,
        ),
        (
            "W only",
            two_state_game(ActivationKind::LogMean, w_running(), Terminal::Payoff(Arc::new(ZeroCoupling)), 0.8),
            0.8,
        ),
        ("W and G", two_state_game(ActivationKind::LogMean, w_running(), w_terminal(), 0.7), 0.7),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, prob, p0) in &instances {
        let tp = reduce(prob).unwrap();
        let sol = match solve_potential_game(&tp, *p0, 1.0, 1e-11) {
            Ok(s) => s,
            Err(e) => {
                pass = false;
                parts.push(format!("{name}: {e}"));
                continue;
            }
        };
        let (rt, re) = algebraic_residuals(&tp, *p0, sol.x_t, sol.h0);
        let sim = integrate_reduced(&tp, *p0, sol.y0, 1.0, 1e-4).unwrap();
        let miss = (sim.x.last().unwrap() - sol.x_t).abs();
        pass &= rt <= GAME_RESIDUAL_TOL && re <= GAME_RESIDUAL_TOL && miss <= RESIMULATION_TOL;
        parts.push(format!("{name}: x_T {:.6}, residuals {rt:.1e}/{re:.1e}, resim {miss:.1e}", sol.x_t));
    }
    check(pass, parts.join("; "))
}

fn c11() -> Outcome {
    let prob = two_state_game(ActivationKind::LogMean, w_running(), w_terminal(), 0.7);
    let (p, t, eps, n) = ([0.6, 0.4], 0.3, 1e-3, 128);
    let plus = value_function(&prob, &[p[0] + eps, p[1] - eps], t, n, 1e-11).unwrap();
    let minus = value_function(&prob, &[p[0] - eps, p[1] + eps], t, n, 1e-11).unwrap();
    let fd = (plus - minus) / (2.0 * eps);
    let sol = solve_potential_convex(&prob.restarted(&p, t).unwrap(), n, 1e-11).unwrap();
    let diff = sol.phi[0][0] - sol.phi[0][1];
    let gap = (fd - diff).abs();
    check(gap <= VALUE_GRADIENT_TOL, format!("tangential FD {fd:.8}, Phi_1 - Phi_2 {diff:.8}, gap {gap:.1e}"))
}

fn c12() -> Outcome {
    let prob = two_state_game(ActivationKind::Quadratic, w_running(), w_terminal(), 0.7);
    let p = [0.6, 0.4];
    let coarse = hje_residual(&prob, &p, 0.4, 1e-2, 1e-2, 128, 1e-11).unwrap();
    let fine = hje_residual(&prob, &p, 0.4, 1e-3, 1e-3, 256, 1e-11).unwrap();
    check(fine <= HJE_TOL && fine < coarse, format!("residual {coarse:.2e} -> {fine:.2e}"))
}

fn c13() -> Outcome {
    let prob = two_state_game(ActivationKind::Quadratic, w_running(), w_terminal(), 0.5);
    let tp = reduce(&prob).unwrap();
    let mut results = Vec::new();
    for n in [21, 41] {
        let ts: Vec<f64> = (0..n).map(|k| k as f64 / (n - 1) as f64).collect();
        let grid = reduced_master_grid(&tp, &interior_grid(n), &ts, &MasterOptions::default()).unwrap();
        let residual = if grid.is_complete() { grid.residual(&tp).unwrap() } else { f64::INFINITY };
        results.push((residual, grid.failures.len()));
    }
    let ratio = results[0].0 / results[1].0;
    check(
        results[1].0 <= MASTER_TOL && results[1].1 == 0 && results[0].1 == 0 && ratio >= HALVING_RATIO,
        format!("21x21 {:.3e}, 41x41 {:.3e} (x{ratio:.2}), holes {}", results[0].0, results[1].0, results[1].1),
    )
}

fn c14() -> Outcome {
    let tp = reduce(&transport(ActivationKind::LogMean)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let w = |a: f64, b: f64| wasserstein_alpha(&tp, a, b, 2.0).unwrap();
    let mut symmetric = true;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..200 {
        let (a, b, c): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
        symmetric &= w(a, b) == w(b, a);
        worst = worst.max(w(a, c) - w(a, b) - w(b, c));
    }
    check(symmetric && worst <= TRIANGLE_SLACK, format!("symmetric {symmetric}, max triangle excess {worst:.2e}"))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 14] = [
        ("closed-form Wasserstein", c1),
        ("first integral equals distance", c2),
        ("generalized distance reduction", c3),
        ("dissipation and activation identity", c4),
        ("gradient flow equivalence", c5),
        ("perspective convexity", c6),
        ("Euler-Lagrange residual", c7),
        ("Hamiltonian conservation", c8),
        ("semigroup consistency", c9),
        ("two-state game system", c10),
        ("value function gradient", c11),
        ("Hamilton-Jacobi residual", c12),
        ("reduced master equation", c13),
        ("metric sanity", c14),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let outcome = run();
        println!("criterion {:>2} {:<36} {}  {}", k + 1, name, if outcome.pass { "PASS" } else { "FAIL" }, outcome.detail);
        if !outcome.pass {
            failed += 1;
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
