use std::sync::Arc;

use approx::assert_abs_diff_eq;
use mfgraph::flow::integrate_onsager;
use mfgraph::mfg::{solve_mfg_fixedpoint, solve_potential_convex};
use mfgraph::twopoint::{reduce, solve_planning, wasserstein_alpha};
use mfgraph::{
    Activation, ActivationKind, DMatrix, Density, EdgeField, GeneratorPhi, LagrangianPair, MarkovGraph, MfgProblem,
    QuadraticCoupling, Terminal, ZeroCoupling,
};
use proptest::prelude::*;

/// A complete reversible chain from raw weights and raw measure.
fn chain(n: usize, weights: &[f64], measure: &[f64]) -> MarkovGraph {
    let mut omega = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            omega[(i, j)] = weights[k];
            omega[(j, i)] = weights[k];
            k += 1;
        }
    }
    let total: f64 = measure[..n].iter().sum();
    let pi: Vec<f64> = measure[..n].iter().map(|v| v / total).collect();
    MarkovGraph::from_weights(&omega, &pi).unwrap()
}

fn chain_strategy() -> impl Strategy<Value = (MarkovGraph, Vec<f64>)> {
    (2usize..6).prop_flat_map(|n| {
        (
            prop::collection::vec(0.1f64..2.0, n * (n - 1) / 2),
            prop::collection::vec(0.2f64..2.0, n),
            prop::collection::vec(0.05f64..1.0, n),
        )
            .prop_map(move |(w, m, p)| {
                let total: f64 = p.iter().sum();
                (chain(n, &w, &m), p.iter().map(|v| v / total).collect())
            })
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const MEANS: [ActivationKind; 4] =
    [ActivationKind::LogMean, ActivationKind::Arithmetic, ActivationKind::Geometric, ActivationKind::Harmonic];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn divergence_is_minus_adjoint_of_gradient((g, p) in chain_strategy(), seed in 0.0f64..1.0) {
        let v: Vec<f64> = (0..g.num_edges()).map(|e| (seed + e as f64).sin()).collect();
        let grad = g.gradient(&p).unwrap();
        let div = g.divergence(&EdgeField(v.clone())).unwrap();
        let lhs = dot(&grad.0, &v);
        let rhs = -dot(&p, &div.0);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn divergence_of_gradient_is_laplacian((g, p) in chain_strategy()) {
        let dg = g.divergence(&g.gradient(&p).unwrap()).unwrap();
        let lap = g.laplacian(&p).unwrap();
        for (a, b) in dg.0.iter().zip(&lap.0) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn rates_round_trip_through_weights((g, _) in chain_strategy()) {
        let again = MarkovGraph::from_rates(g.rates().clone()).unwrap();
        for (a, b) in again.pi().iter().zip(g.pi()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        let n = g.n();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let flux = g.rates()[(i, j)] * g.pi()[i];
                    prop_assert!((flux - g.omega(i, j)).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn mean_activations_are_symmetric_homogeneous_and_bounded(x in 1e-3f64..10.0, y in 1e-3f64..10.0, s in 0.1f64..10.0) {
        for kind in MEANS {
            let a = Activation::of_kind(kind);
            let t = a.theta(x, y);
            prop_assert!((t - a.theta(y, x)).abs() <= 1e-12 * t);
            prop_assert!((a.theta(s * x, s * y) - s * t).abs() <= 1e-11 * s * t);
            prop_assert!(t >= x.min(y) * (1.0 - 1e-12) && t <= x.max(y) * (1.0 + 1e-12), "{kind:?}");
        }
    }

    #[test]
    fn power_lagrangians_are_legendre_pairs(alpha in 1.2f64..4.0, a in -3.0f64..3.0) {
        let pair = LagrangianPair::power(alpha).unwrap();
        prop_assert!(pair.legendre_residual(a).abs() <= 1e-10 * (1.0 + pair.l(a).abs()));
        let b = pair.l_prime(a);
        prop_assert!((pair.h_prime(b) - a).abs() <= 1e-10 * (1.0 + a.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn onsager_flow_keeps_mass_and_positivity_and_dissipates((g, p) in chain_strategy()) {
        let a = Activation::of_kind(ActivationKind::LogMean);
        let tr = integrate_onsager(&g, &a, &GeneratorPhi::entropy(), &Density::new(p).unwrap(), 2.0, 1e-2).unwrap();
        for d in &tr.densities {
            prop_assert!((d.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(d.iter().all(|&v| v > 0.0));
        }
        for w in tr.dissipation.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn reduced_distance_is_a_metric(a in 0.01f64..0.99, b in 0.01f64..0.99, c in 0.01f64..0.99) {
        let tp = reduce(&transport(ActivationKind::LogMean, 0.3, 0.7)).unwrap();
        let w = |u: f64, v: f64| wasserstein_alpha(&tp, u, v, 2.0).unwrap();
        prop_assert_eq!(w(a, a), 0.0);
        prop_assert_eq!(w(a, b), w(b, a));
        prop_assert!(w(a, c) <= w(a, b) + w(b, c) + 1e-10);
    }
}

fn two_state() -> MarkovGraph {
    MarkovGraph::from_weights(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]), &[0.5, 0.5]).unwrap()
}

fn transport(kind: ActivationKind, p0: f64, p1: f64) -> MfgProblem {
    MfgProblem::new(
        two_state(),
        Activation::of_kind(kind),
        LagrangianPair::power(2.0).unwrap(),
        Arc::new(ZeroCoupling),
        Terminal::Pinned(Density::new(vec![p1, 1.0 - p1]).unwrap()),
        (0.0, 1.0),
        Density::new(vec![p0, 1.0 - p0]).unwrap(),
    )
    .unwrap()
}

#[test]
fn unit_time_planning_energy_matches_distance() {
    for kind in [ActivationKind::LogMean, ActivationKind::Geometric, ActivationKind::Harmonic] {
        let tp = reduce(&transport(kind, 0.25, 0.6)).unwrap();
        let w = wasserstein_alpha(&tp, 0.25, 0.6, 2.0).unwrap();
        let (e, tr) = solve_planning(&tp, 0.25, 0.6, 1.0, 1e-12).unwrap();
        assert_abs_diff_eq!((2.0 * e).sqrt(), w, epsilon = 1e-8);
        assert_abs_diff_eq!(*tr.x.last().unwrap(), 0.6, epsilon = 1e-9);
        // Constant speed in the metric means the action equals W^2 / 2.
        assert_abs_diff_eq!(e, 0.5 * w * w, epsilon = 1e-8);
    }
}

#[test]
fn convex_and_fixed_point_solvers_agree_on_a_potential_game() {
    let w = DMatrix::from_row_slice(3, 3, &[-0.5, 0.1, 0.0, 0.1, -0.4, 0.1, 0.0, 0.1, -0.6]);
    let prob = MfgProblem::new(
        chain(3, &[1.0, 0.5, 0.8], &[1.0, 1.0, 1.0]),
        Activation::of_kind(ActivationKind::LogMean),
        LagrangianPair::power(2.0).unwrap(),
        Arc::new(QuadraticCoupling::new(w.clone(), None).unwrap()),
        Terminal::Payoff(Arc::new(QuadraticCoupling::new(w, Some(vec![0.2, 0.0, -0.1])).unwrap())),
        (0.0, 0.5),
        Density::new(vec![0.5, 0.3, 0.2]).unwrap(),
    )
    .unwrap();
    let tol = 1e-10;
    let convex = solve_potential_convex(&prob, 64, tol).unwrap();
    let picard = solve_mfg_fixedpoint(&prob, 64, 0.5, tol).unwrap();
    let gap = convex
        .p
        .iter()
        .zip(&picard.p)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    // Both solve the same discrete system, so they agree to solver tolerance.
    assert!(gap <= 2.0 * tol, "density gap {gap:e}");
    assert!(convex.diagnostics.converged && picard.diagnostics.converged);
}
