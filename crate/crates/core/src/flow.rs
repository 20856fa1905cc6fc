//! Forward equation of a reversible chain in its raw, Onsager and
//! generalized gradient-flow forms, integrated with classical RK4.

use nalgebra::DMatrix;

use crate::activation::{Activation, DissipationPsiStar, GeneratorPhi};
use crate::error::{Error, Result};
use crate::graph::{Density, MarkovGraph};

/// Entries may dip to this value before a step is rejected.
const POSITIVITY_SLACK: f64 = 1e-12;
const MAX_HALVINGS: u32 = 20;

/// Densities and free energy sampled on a uniform time grid.
#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    pub times: Vec<f64>,
    pub densities: Vec<Vec<f64>>,
    pub dissipation: Vec<f64>,
}

impl FlowTrajectory {
    pub fn last(&self) -> &[f64] {
        self.densities.last().expect("trajectory has at least one sample")
    }
}

/// `D_phi(p || pi) = sum_i phi(p_i / pi_i) pi_i`.
pub fn phi_divergence(graph: &MarkovGraph, phi: &GeneratorPhi, p: &[f64]) -> Result<f64> {
    if p.len() != graph.n() {
        return Err(Error::DimensionMismatch { expected: graph.n(), found: p.len() });
    }
    Ok(p.iter().zip(graph.pi()).map(|(&pk, &pik)| phi.value(pk / pik) * pik).sum())
}

/// `K_ij = -omega_ij theta_ij(p)` off the diagonal, zero row sums.
pub fn onsager_matrix(graph: &MarkovGraph, a: &Activation, p: &[f64]) -> Result<DMatrix<f64>> {
    if p.len() != graph.n() {
        return Err(Error::DimensionMismatch { expected: graph.n(), found: p.len() });
    }
    let mut k = DMatrix::zeros(graph.n(), graph.n());
    for e in graph.edges() {
        let w = e.omega * a.on_edge(graph, p, e);
        k[(e.i, e.j)] = -w;
        k[(e.j, e.i)] = -w;
        k[(e.i, e.i)] += w;
        k[(e.j, e.j)] += w;
    }
    Ok(k)
}

/// The right-hand side being integrated.
enum Rhs<'a> {
    Raw,
    Onsager { a: &'a Activation, phi: &'a GeneratorPhi },
    Generalized { a: &'a Activation, phi: &'a GeneratorPhi, psi: &'a DissipationPsiStar },
}

impl Rhs<'_> {
    fn eval(&self, graph: &MarkovGraph, p: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let pi = graph.pi();
        match self {
            Rhs::Raw => {
                let q = graph.rates();
                for e in graph.edges() {
                    let f = q[(e.i, e.j)] * p[e.i] - q[(e.j, e.i)] * p[e.j];
                    out[e.i] -= f;
                    out[e.j] += f;
                }
            }
            Rhs::Onsager { a, phi } => {
                for e in graph.edges() {
                    let d = phi.derivative(p[e.i] / pi[e.i]) - phi.derivative(p[e.j] / pi[e.j]);
                    let f = e.omega * a.on_edge(graph, p, e) * d;
                    out[e.i] -= f;
                    out[e.j] += f;
                }
            }
            Rhs::Generalized { a, phi, psi } => {
                for e in graph.edges() {
                    let d = phi.derivative(p[e.i] / pi[e.i]) - phi.derivative(p[e.j] / pi[e.j]);
                    let f = e.omega * a.on_edge(graph, p, e) * psi.derivative(d);
                    out[e.i] -= f;
                    out[e.j] += f;
                }
            }
        }
    }
}

/// One RK4 step; `None` when a stage is non-finite or the result leaves the
/// simplex.
fn rk4_step(rhs: &Rhs, graph: &MarkovGraph, p: &[f64], h: f64) -> Option<Vec<f64>> {
    let n = p.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    rhs.eval(graph, p, &mut k1);
    for i in 0..n {
        tmp[i] = p[i] + 0.5 * h * k1[i];
    }
    rhs.eval(graph, &tmp, &mut k2);
    for i in 0..n {
        tmp[i] = p[i] + 0.5 * h * k2[i];
    }
    rhs.eval(graph, &tmp, &mut k3);
    for i in 0..n {
        tmp[i] = p[i] + h * k3[i];
    }
    rhs.eval(graph, &tmp, &mut k4);
    let next: Vec<f64> = (0..n)
        .map(|i| p[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    if next.iter().all(|v| v.is_finite() && *v >= -POSITIVITY_SLACK) {
        Some(next)
    } else {
        None
    }
}

fn integrate(
    rhs: Rhs,
    graph: &MarkovGraph,
    phi: &GeneratorPhi,
    p0: &Density,
    t_end: f64,
    dt: f64,
) -> Result<FlowTrajectory> {
    if p0.len() != graph.n() {
        return Err(Error::DimensionMismatch { expected: graph.n(), found: p0.len() });
    }
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::InvalidArgument(format!("need dt > 0 and t_end >= 0, got {dt}, {t_end}")));
    }
    let steps = (t_end / dt).round().max(if t_end > 0.0 { 1.0 } else { 0.0 }) as usize;
    let dt = if steps > 0 { t_end / steps as f64 } else { dt };

    let mut p = p0.to_vec();
    let mut times = vec![0.0];
    let mut dissipation = vec![phi_divergence(graph, phi, &p)?];
    let mut densities = vec![p.clone()];
    for k in 0..steps {
        let mut remaining = dt;
        let mut h = dt;
        let mut halvings = 0;
        while remaining > 0.0 {
            let step = h.min(remaining);
            match rk4_step(&rhs, graph, &p, step) {
                Some(next) => {
                    p = next;
                    remaining -= step;
                    if remaining < 1e-15 * dt {
                        remaining = 0.0;
                    }
                }
                None => {
                    halvings += 1;
                    if halvings > MAX_HALVINGS {
                        let (index, value) = p
                            .iter()
                            .copied()
                            .enumerate()
                            .min_by(|a, b| a.1.total_cmp(&b.1))
                            .unwrap();
                        return Err(Error::PositivityLoss { time: k as f64 * dt + (dt - remaining), index, value });
                    }
                    h *= 0.5;
                }
            }
        }
        times.push((k + 1) as f64 * dt);
        dissipation.push(phi_divergence(graph, phi, &p)?);
        densities.push(p.clone());
    }
    Ok(FlowTrajectory { times, densities, dissipation })
}

/// Integrates `dp/dt = Q^T p` directly.
pub fn integrate_forward(
    graph: &MarkovGraph,
    phi: &GeneratorPhi,
    p0: &Density,
    t_end: f64,
    dt: f64,
) -> Result<FlowTrajectory> {
    integrate(Rhs::Raw, graph, phi, p0, t_end, dt)
}

/// Integrates `dp/dt = -K(p) grad D_phi(p || pi)`.
pub fn integrate_onsager(
    graph: &MarkovGraph,
    a: &Activation,
    phi: &GeneratorPhi,
    p0: &Density,
    t_end: f64,
    dt: f64,
) -> Result<FlowTrajectory> {
    integrate(Rhs::Onsager { a, phi }, graph, phi, p0, t_end, dt)
}

/// Integrates `dp_i/dt = -sum_j omega_ij theta_ij (psi*)'(phi'_i - phi'_j)`,
/// after checking the triple identity at `p0`.
pub fn integrate_generalized(
    graph: &MarkovGraph,
    a: &Activation,
    phi: &GeneratorPhi,
    psi: &DissipationPsiStar,
    p0: &Density,
    t_end: f64,
    dt: f64,
) -> Result<FlowTrajectory> {
    if p0.len() != graph.n() {
        return Err(Error::DimensionMismatch { expected: graph.n(), found: p0.len() });
    }
    let pi = graph.pi();
    for e in graph.edges() {
        let (x, y) = (p0[e.i] / pi[e.i], p0[e.j] / pi[e.j]);
        if x <= 0.0 || y <= 0.0 || (x - y).abs() < 1e-7 * x.max(y) {
            continue;
        }
        let lhs = psi.derivative(phi.derivative(x) - phi.derivative(y)) * a.theta(x, y);
        let residual = (lhs - (x - y)).abs();
        if residual > 1e-8 * (1.0 + (x - y).abs()) {
            return Err(Error::InconsistentTriple { residual });
        }
    }
    integrate(Rhs::Generalized { a, phi, psi }, graph, phi, p0, t_end, dt)
}

/// Sup-norm gap between `-div(theta v)` with the gradient-flow velocity and
/// the direct right-hand side.
pub fn flux_form_check(
    graph: &MarkovGraph,
    a: &Activation,
    phi: &GeneratorPhi,
    psi: Option<&DissipationPsiStar>,
    p: &[f64],
) -> Result<f64> {
    let n = graph.n();
    if p.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: p.len() });
    }
    let pi = graph.pi();
    let dphi: Vec<f64> = (0..n).map(|i| phi.derivative(p[i] / pi[i])).collect();
    let grad = graph.gradient(&dphi)?;
    let flux: Vec<f64> = graph
        .edges()
        .iter()
        .zip(grad.iter())
        .map(|(e, &g)| {
            let v = match psi {
                Some(psi) => -e.sqrt_omega * psi.derivative(g / e.sqrt_omega),
                None => -g,
            };
            a.on_edge(graph, p, e) * v
        })
        .collect();
    let via_flux = graph.divergence_unchecked(&flux);

    let mut worst: f64 = 0.0;
    for i in 0..n {
        let mut direct = 0.0;
        for &(j, _) in graph.neighbors(i) {
            let theta = a.theta(p[i] / pi[i], p[j] / pi[j]);
            let d = dphi[i] - dphi[j];
            let s = match psi {
                Some(psi) => psi.derivative(d),
                None => d,
            };
            direct -= graph.omega(i, j) * theta * s;
        }
        worst = worst.max((-via_flux[i] - direct).abs());
    }
    Ok(worst)
}
