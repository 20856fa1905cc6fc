//! Shared fixtures for the solver benchmarks.

use std::sync::Arc;

use mfgraph::{
    Activation, ActivationKind, DMatrix, Density, LagrangianPair, MarkovGraph, MfgProblem, QuadraticCoupling, Terminal,
    ZeroCoupling,
};

/// Ring graph on `n` states with uniform weights and invariant measure.
pub fn ring(n: usize) -> MarkovGraph {
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        let j = (i + 1) % n;
        q[i * n + j] = 1.0;
        q[j * n + i] = 1.0;
    }
    for i in 0..n {
        let s: f64 = (0..n).filter(|&j| j != i).map(|j| q[i * n + j]).sum();
        q[i * n + i] = -s;
    }
    MarkovGraph::from_rates(mfgraph_matrix(n, q)).expect("ring chain is reversible")
}

fn mfgraph_matrix(n: usize, data: Vec<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, n, &data)
}

/// Potential game on a ring: concave quadratic running and terminal payoffs.
pub fn ring_game(n: usize) -> MfgProblem {
    let graph = ring(n);
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        w[i * n + i] = -1.0;
    }
    let b: Vec<f64> = (0..n).map(|i| 0.1 * i as f64 / n as f64).collect();
    let p0: Vec<f64> = (0..n).map(|i| (i + 1) as f64).collect();
    let s: f64 = p0.iter().sum();
    MfgProblem::new(
        graph,
        Activation::of_kind(ActivationKind::LogMean),
        LagrangianPair::power(2.0).expect("alpha = 2 is valid"),
        Arc::new(ZeroCoupling),
        Terminal::Payoff(Arc::new(
            QuadraticCoupling::new(mfgraph_matrix(n, w), Some(b)).expect("square matrix"),
        )),
        (0.0, 1.0),
        Density::new(p0.iter().map(|v| v / s).collect()).expect("normalized"),
    )
    .expect("valid problem")
}

/// Two-state game with a concave quadratic running and terminal payoff.
pub fn two_state_game(p0: f64) -> MfgProblem {
    let graph = MarkovGraph::from_weights(&mfgraph_matrix(2, vec![0.0, 1.0, 1.0, 0.0]), &[0.5, 0.5])
        .expect("two-state weights are valid");
    MfgProblem::new(
        graph,
        Activation::of_kind(ActivationKind::LogMean),
        LagrangianPair::power(2.0).expect("alpha = 2 is valid"),
        Arc::new(QuadraticCoupling::new(mfgraph_matrix(2, vec![-0.2, 0.4, 0.4, 0.0]), None).expect("square matrix")),
        Terminal::Payoff(Arc::new(
            QuadraticCoupling::new(mfgraph_matrix(2, vec![-1.5, 0.0, 0.0, 0.0]), Some(vec![0.6, 0.0]))
                .expect("square matrix"),
        )),
        (0.0, 1.0),
        Density::new(vec![p0, 1.0 - p0]).expect("normalized"),
    )
    .expect("valid problem")
}
