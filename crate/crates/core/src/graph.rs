//! Weighted graphs induced by reversible Markov chains, and the discrete
//! calculus (gradient, divergence, Laplacian) that lives on them.
//!
//! A chain with rate matrix `Q` and invariant measure `pi` satisfying detailed
//! balance induces symmetric edge weights `omega_ij = Q_ij * pi_i`. Edges are
//! stored once, oriented `i < j`; antisymmetric edge fields therefore carry a
//! single value per edge and the reverse orientation is read with a sign flip.

use std::collections::VecDeque;
use std::ops::{Deref, Index};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-12;
const MEASURE_SUM_TOL: f64 = 1e-12;
const DETAILED_BALANCE_TOL: f64 = 1e-10;
const DENSITY_SUM_TOL: f64 = 1e-10;

/// One undirected edge `{i, j}` with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub omega: f64,
    pub sqrt_omega: f64,
}

/// Reversible chain `(Q, pi, omega)` plus its edge list.
#[derive(Debug, Clone)]
pub struct MarkovGraph {
    n: usize,
    q: DMatrix<f64>,
    pi: Vec<f64>,
    edges: Vec<Edge>,
    /// `neighbors[i]` lists `(j, edge index)` for every `j` adjacent to `i`.
    neighbors: Vec<Vec<(usize, usize)>>,
}

impl MarkovGraph {
    /// Builds the graph from a rate matrix, solving `pi Q = 0` for the
    /// invariant measure and checking detailed balance.
    pub fn from_rates(q: DMatrix<f64>) -> Result<Self> {
        let n = q.nrows();
        if q.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: q.ncols() });
        }
        if n == 0 {
            return Err(Error::InvalidArgument("empty rate matrix".into()));
        }
        for i in 0..n {
            let mut scale: f64 = 1.0;
            let mut sum = 0.0;
            for j in 0..n {
                let v = q[(i, j)];
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("Q[{i}][{j}]")));
                }
                if i != j && v < 0.0 {
                    return Err(Error::NegativeRate { i, j, value: v });
                }
                scale = scale.max(v.abs());
                sum += v;
            }
            if sum.abs() > ROW_SUM_TOL * scale {
                return Err(Error::NonConservativeRates { row: i, sum });
            }
        }
        if !is_connected(n, |i, j| q[(i, j)] > 0.0 || q[(j, i)] > 0.0) {
            return Err(Error::Irreducibility("transition graph is disconnected".into()));
        }

        let pi = stationary_measure(&q)?;

        for i in 0..n {
            for j in (i + 1)..n {
                let residual = (q[(i, j)] * pi[i] - q[(j, i)] * pi[j]).abs();
                if residual > DETAILED_BALANCE_TOL {
                    return Err(Error::DetailedBalanceViolation { i, j, residual });
                }
            }
        }

        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let omega = q[(i, j)] * pi[i];
                if omega > 0.0 {
                    edges.push(Edge { i, j, omega, sqrt_omega: omega.sqrt() });
                }
            }
        }
        Ok(Self::assemble(n, q, pi, edges))
    }

    /// Inverse construction from symmetric weights and a positive measure:
    /// `Q_ij = omega_ij / pi_i` off the diagonal.
    pub fn from_weights(omega: &DMatrix<f64>, pi: &[f64]) -> Result<Self> {
        let n = omega.nrows();
        if omega.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: omega.ncols() });
        }
        if pi.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: pi.len() });
        }
        for (index, &value) in pi.iter().enumerate() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::NonPositiveMeasure { index, value });
            }
        }
        let total: f64 = pi.iter().sum();
        if (total - 1.0).abs() > MEASURE_SUM_TOL {
            return Err(Error::NonPositiveMeasure { index: 0, value: total });
        }
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (omega[(i, j)], omega[(j, i)]);
                if (a - b).abs() > 1e-14 * a.abs().max(b.abs()) {
                    return Err(Error::AsymmetricWeights { i, j });
                }
                if a < 0.0 {
                    return Err(Error::NegativeRate { i, j, value: a });
                }
                if a > 0.0 {
                    edges.push(Edge { i, j, omega: a, sqrt_omega: a.sqrt() });
                }
            }
        }
        if !is_connected(n, |i, j| omega[(i, j)] > 0.0) {
            return Err(Error::Irreducibility("weight graph is disconnected".into()));
        }
        let mut q = DMatrix::zeros(n, n);
        for e in &edges {
            q[(e.i, e.j)] = e.omega / pi[e.i];
            q[(e.j, e.i)] = e.omega / pi[e.j];
        }
        for i in 0..n {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| q[(i, j)]).sum();
            q[(i, i)] = -off;
        }
        Ok(Self::assemble(n, q, pi.to_vec(), edges))
    }

    fn assemble(n: usize, q: DMatrix<f64>, pi: Vec<f64>, edges: Vec<Edge>) -> Self {
        let mut neighbors = vec![Vec::new(); n];
        for (k, e) in edges.iter().enumerate() {
            neighbors[e.i].push((e.j, k));
            neighbors[e.j].push((e.i, k));
        }
        MarkovGraph { n, q, pi, edges, neighbors }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rates(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.neighbors[i]
    }

    /// Index of the stored edge joining `i` and `j`, if any.
    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.n {
            return None;
        }
        self.neighbors[i].iter().find(|&&(k, _)| k == j).map(|&(_, e)| e)
    }

    /// `omega_ij`, zero when `i` and `j` are not adjacent.
    pub fn omega(&self, i: usize, j: usize) -> f64 {
        self.edge_index(i, j).map_or(0.0, |e| self.edges[e].omega)
    }

    /// The weight matrix with `omega_ii = -sum_j omega_ij`, i.e. the matrix
    /// of the combinatorial Laplacian.
    pub fn laplacian_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for e in &self.edges {
            m[(e.i, e.j)] = e.omega;
            m[(e.j, e.i)] = e.omega;
            m[(e.i, e.i)] -= e.omega;
            m[(e.j, e.j)] -= e.omega;
        }
        m
    }

    /// Spectral gap of the generator, from the symmetrised matrix
    /// `omega_ij / sqrt(pi_i pi_j)` (same spectrum as `Q` for reversible chains).
    pub fn spectral_gap(&self) -> f64 {
        let mut s = self.laplacian_matrix();
        for i in 0..self.n {
            for j in 0..self.n {
                s[(i, j)] /= (self.pi[i] * self.pi[j]).sqrt();
            }
        }
        let mut eig: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
        if eig.len() < 2 {
            return 0.0;
        }
        -eig[1]
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: len });
        }
        Ok(())
    }

    /// `(grad Phi)_ij = sqrt(omega_ij) (Phi_j - Phi_i)` on each stored edge.
    pub fn gradient(&self, phi: &[f64]) -> Result<EdgeField> {
        self.check_len(phi.len())?;
        Ok(EdgeField(self.gradient_unchecked(phi)))
    }

    pub(crate) fn gradient_unchecked(&self, phi: &[f64]) -> Vec<f64> {
        self.edges.iter().map(|e| e.sqrt_omega * (phi[e.j] - phi[e.i])).collect()
    }

    /// `div(v)_i = sum_{j ~ i} sqrt(omega_ij) v_ij`.
    pub fn divergence(&self, v: &EdgeField) -> Result<NodeFunction> {
        if v.len() != self.edges.len() {
            return Err(Error::DimensionMismatch { expected: self.edges.len(), found: v.len() });
        }
        Ok(NodeFunction(self.divergence_unchecked(v)))
    }

    pub(crate) fn divergence_unchecked(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (e, &val) in self.edges.iter().zip(v) {
            out[e.i] += e.sqrt_omega * val;
            out[e.j] -= e.sqrt_omega * val;
        }
        out
    }

    /// `(L Phi)_i = sum_{j ~ i} omega_ij (Phi_j - Phi_i)`.
    pub fn laplacian(&self, phi: &[f64]) -> Result<NodeFunction> {
        self.check_len(phi.len())?;
        let mut out = vec![0.0; self.n];
        for i in 0..self.n {
            out[i] = self.neighbors[i]
                .iter()
                .map(|&(j, e)| self.edges[e].omega * (phi[j] - phi[i]))
                .sum();
        }
        Ok(NodeFunction(out))
    }
}

/// Solves `pi Q = 0`, `sum pi = 1` by replacing the last equation of `Q^T pi = 0`
/// with the normalisation row.
fn stationary_measure(q: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = q.nrows();
    let mut a = q.transpose();
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Irreducibility("stationary system is singular".into()))?;
    if let Some((index, &value)) = pi.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::Irreducibility(format!("pi[{index}] = {value:e} is not positive")));
    }
    let total: f64 = pi.iter().sum();
    Ok(pi.iter().map(|v| v / total).collect())
}

fn is_connected(n: usize, adjacent: impl Fn(usize, usize) -> bool) -> bool {
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for (j, s) in seen.iter_mut().enumerate() {
            if !*s && j != i && adjacent(i, j) {
                *s = true;
                queue.push_back(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// A function on the vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFunction(pub Vec<f64>);

impl Deref for NodeFunction {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// An antisymmetric field on the edges, one slot per stored edge `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeField(pub Vec<f64>);

impl EdgeField {
    /// Value read in orientation `(a, b)`; the reverse orientation flips sign.
    pub fn oriented(&self, graph: &MarkovGraph, a: usize, b: usize) -> Result<f64> {
        let e = graph.edge_index(a, b).ok_or(Error::NotAnEdge { i: a, j: b })?;
        let v = self.0[e];
        Ok(if a < b { v } else { -v })
    }
}

impl Deref for EdgeField {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// A probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Density(Vec<f64>);

impl Density {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidDensity("empty vector".into()));
        }
        if let Some((i, v)) = p.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidDensity(format!("p[{i}] = {v:e}")));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > DENSITY_SUM_TOL {
            return Err(Error::InvalidDensity(format!("entries sum to {total}")));
        }
        Ok(Density(p))
    }

    pub fn uniform(n: usize) -> Self {
        Density(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_interior(&self) -> bool {
        self.0.iter().all(|&v| v > 0.0)
    }
}

impl Deref for Density {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for Density {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}
