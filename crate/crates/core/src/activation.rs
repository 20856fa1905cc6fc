//! Activation functions `theta(x, y)` weighting edge velocities in the
//! discrete continuity equation, together with the free-energy generator
//! `phi` and dissipation potential `psi*` that induce them.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::{Edge, MarkovGraph};

/// Real function of one variable shared across threads.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Relative gap below which quotients switch to their diagonal limit.
const DIAGONAL_SWITCH: f64 = 1e-7;

/// Convex free-energy generator `phi` with its first two derivatives.
#[derive(Clone)]
pub struct GeneratorPhi {
    name: String,
    phi: ScalarFn,
    dphi: ScalarFn,
    d2phi: ScalarFn,
}

impl fmt::Debug for GeneratorPhi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneratorPhi").field("name", &self.name).finish()
    }
}

impl GeneratorPhi {
    pub fn new(name: impl Into<String>, phi: ScalarFn, dphi: ScalarFn, d2phi: ScalarFn) -> Self {
        GeneratorPhi { name: name.into(), phi, dphi, d2phi }
    }

    /// `phi(x) = x^2 / 2`.
    pub fn quadratic() -> Self {
        Self::new(
            "quadratic",
            Arc::new(|x| 0.5 * x * x),
            Arc::new(|x| x),
            Arc::new(|_| 1.0),
        )
    }

    /// `phi(x) = x log x - x + 1`, the generator of the KL divergence.
    pub fn entropy() -> Self {
        Self::new(
            "entropy",
            Arc::new(|x: f64| if x > 0.0 { x * x.ln() - x + 1.0 } else { 1.0 }),
            Arc::new(|x: f64| x.ln()),
            Arc::new(|x: f64| 1.0 / x),
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self, x: f64) -> f64 {
        (self.phi)(x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        (self.dphi)(x)
    }

    pub fn second(&self, x: f64) -> f64 {
        (self.d2phi)(x)
    }

    fn third_fd(&self, x: f64) -> f64 {
        let h = 1e-4 * x.abs().max(1e-8);
        ((self.d2phi)(x + h) - (self.d2phi)(x - h)) / (2.0 * h)
    }

    /// Checks `phi'' > 0` on a log-spaced grid over `[1e-6, 1e3]`.
    pub fn validate(&self) -> Result<()> {
        for k in 0..=180 {
            let x = 10f64.powf(-6.0 + 9.0 * k as f64 / 180.0);
            let value = self.second(x);
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::NonConvexGenerator { x, value });
            }
        }
        Ok(())
    }
}

/// Even convex dissipation potential `psi*` with `psi*(0) = 0`.
#[derive(Clone)]
pub struct DissipationPsiStar {
    name: String,
    psi: ScalarFn,
    dpsi: ScalarFn,
    d2psi: ScalarFn,
}

impl fmt::Debug for DissipationPsiStar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DissipationPsiStar").field("name", &self.name).finish()
    }
}

impl DissipationPsiStar {
    pub fn new(name: impl Into<String>, psi: ScalarFn, dpsi: ScalarFn, d2psi: ScalarFn) -> Self {
        DissipationPsiStar { name: name.into(), psi, dpsi, d2psi }
    }

    /// `psi*(xi) = xi^2 / 2`; recovers the Onsager form.
    pub fn quadratic() -> Self {
        Self::new("quadratic", Arc::new(|x| 0.5 * x * x), Arc::new(|x| x), Arc::new(|_| 1.0))
    }

    /// `psi*(xi) = 4 log cosh(xi / 2)`; pairs with the arithmetic mean.
    pub fn log_cosh() -> Self {
        Self::new(
            "log_cosh",
            Arc::new(|x: f64| {
                let a = (0.5 * x).abs();
                4.0 * (a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2)
            }),
            Arc::new(|x: f64| 2.0 * (0.5 * x).tanh()),
            Arc::new(|x: f64| 1.0 / (0.5 * x).cosh().powi(2)),
        )
    }

    /// `psi*(xi) = 4 cosh(xi / 2) - 4`; pairs with the geometric mean.
    pub fn cosh_half() -> Self {
        Self::new(
            "cosh_half",
            Arc::new(|x: f64| 4.0 * (0.5 * x).cosh() - 4.0),
            Arc::new(|x: f64| 2.0 * (0.5 * x).sinh()),
            Arc::new(|x: f64| (0.5 * x).cosh()),
        )
    }

    /// `psi*(xi) = cosh(xi) - 1`; pairs with the harmonic mean.
    pub fn cosh() -> Self {
        Self::new(
            "cosh",
            Arc::new(|x: f64| x.cosh() - 1.0),
            Arc::new(|x: f64| x.sinh()),
            Arc::new(|x: f64| x.cosh()),
        )
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "quadratic" => Ok(Self::quadratic()),
            "log_cosh" => Ok(Self::log_cosh()),
            "cosh_half" => Ok(Self::cosh_half()),
            "cosh" => Ok(Self::cosh()),
            other => Err(Error::UnknownKind(other.to_string())),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self, xi: f64) -> f64 {
        (self.psi)(xi)
    }

    pub fn derivative(&self, xi: f64) -> f64 {
        (self.dpsi)(xi)
    }

    pub fn second(&self, xi: f64) -> f64 {
        (self.d2psi)(xi)
    }

    /// Samples `xi (psi*)'(xi) > 0` for `xi != 0`.
    pub fn validate(&self) -> Result<()> {
        for k in 0..=160 {
            let mag = 10f64.powf(-6.0 + 8.0 * k as f64 / 160.0);
            for xi in [mag, -mag] {
                let d = self.derivative(xi);
                if !(d * xi > 0.0) || !d.is_finite() {
                    return Err(Error::DegenerateDissipation { xi });
                }
            }
        }
        if !(self.second(0.0) > 0.0) {
            return Err(Error::DegenerateDissipation { xi: 0.0 });
        }
        Ok(())
    }
}

/// Named activation families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationKind {
    /// `theta = 1`.
    Quadratic,
    /// `(x - y) / (log x - log y)`.
    LogMean,
    /// `(x + y) / 2`.
    Arithmetic,
    /// `sqrt(x y)`.
    Geometric,
    /// `2 / (1/x + 1/y)`.
    Harmonic,
    /// `(x - y) / (phi'(x) - phi'(y))` for a user generator.
    PhiInduced,
    /// `(x - y) / (psi*)'(phi'(x) - phi'(y))` for a user pair.
    PsiPhiInduced,
}

impl ActivationKind {
    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Quadratic => "quadratic",
            ActivationKind::LogMean => "log_mean",
            ActivationKind::Arithmetic => "arithmetic",
            ActivationKind::Geometric => "geometric",
            ActivationKind::Harmonic => "harmonic",
            ActivationKind::PhiInduced => "phi_induced",
            ActivationKind::PsiPhiInduced => "psi_phi_induced",
        }
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadratic" => Ok(ActivationKind::Quadratic),
            "log_mean" => Ok(ActivationKind::LogMean),
            "arithmetic" => Ok(ActivationKind::Arithmetic),
            "geometric" => Ok(ActivationKind::Geometric),
            "harmonic" => Ok(ActivationKind::Harmonic),
            other => Err(Error::UnknownKind(other.to_string())),
        }
    }
}

/// An activation function with its optional generating pair.
#[derive(Debug, Clone)]
pub struct Activation {
    kind: ActivationKind,
    phi: Option<GeneratorPhi>,
    psi_star: Option<DissipationPsiStar>,
}

impl Activation {
    /// One of the closed-form families, looked up by name.
    pub fn builtin(name: &str) -> Result<Self> {
        Ok(Self::of_kind(name.parse()?))
    }

    /// Closed-form family with its matching `(phi, psi*)` pair.
    ///
    /// # Panics
    /// For the two induced kinds, which need a user generator.
    pub fn of_kind(kind: ActivationKind) -> Self {
        let (phi, psi) = match kind {
            ActivationKind::Quadratic => (GeneratorPhi::quadratic(), DissipationPsiStar::quadratic()),
            ActivationKind::LogMean => (GeneratorPhi::entropy(), DissipationPsiStar::quadratic()),
            ActivationKind::Arithmetic => (GeneratorPhi::entropy(), DissipationPsiStar::log_cosh()),
            ActivationKind::Geometric => (GeneratorPhi::entropy(), DissipationPsiStar::cosh_half()),
            ActivationKind::Harmonic => (GeneratorPhi::entropy(), DissipationPsiStar::cosh()),
            ActivationKind::PhiInduced | ActivationKind::PsiPhiInduced => {
                panic!("induced activations are built with from_phi / from_phi_psi")
            }
        };
        Activation { kind, phi: Some(phi), psi_star: Some(psi) }
    }

    /// `theta(x, y) = (x - y) / (phi'(x) - phi'(y))`.
    pub fn from_phi(phi: GeneratorPhi) -> Result<Self> {
        phi.validate()?;
        Ok(Activation { kind: ActivationKind::PhiInduced, phi: Some(phi), psi_star: None })
    }

    /// `theta` defined through `(psi*)'(phi'(x) - phi'(y)) = (x - y) / theta(x, y)`.
    pub fn from_phi_psi(phi: GeneratorPhi, psi: DissipationPsiStar) -> Result<Self> {
        phi.validate()?;
        psi.validate()?;
        Ok(Activation { kind: ActivationKind::PsiPhiInduced, phi: Some(phi), psi_star: Some(psi) })
    }

    pub fn kind(&self) -> ActivationKind {
        self.kind
    }

    pub fn phi(&self) -> Option<&GeneratorPhi> {
        self.phi.as_ref()
    }

    pub fn psi_star(&self) -> Option<&DissipationPsiStar> {
        self.psi_star.as_ref()
    }

    /// Whether `theta(x, 0) = 0` (the boundary-vanishing property).
    pub fn vanishes_on_boundary(&self) -> bool {
        match self.kind {
            ActivationKind::Quadratic | ActivationKind::Arithmetic => false,
            ActivationKind::LogMean | ActivationKind::Geometric | ActivationKind::Harmonic => true,
            _ => self.theta(1.0, 0.0).abs() < 1e-14,
        }
    }

    /// Concavity of `theta` on the positive quadrant. Closed-form families are
    /// all concave; induced ones are checked on a sample grid.
    pub fn is_concave(&self) -> bool {
        match self.kind {
            ActivationKind::PhiInduced | ActivationKind::PsiPhiInduced => {
                let grid: Vec<f64> = (0..12).map(|k| 0.05 * 1.5f64.powi(k)).collect();
                grid.iter().all(|&x| {
                    grid.iter().all(|&y| {
                        let (hxx, hxy, hyy) = self.hessian_fd(x, y);
                        let tr = hxx + hyy;
                        let det = hxx * hyy - hxy * hxy;
                        let max_eig = 0.5 * tr + (0.25 * tr * tr - det).max(0.0).sqrt();
                        max_eig <= 1e-6 * (1.0 + self.theta(x, y).abs())
                    })
                })
            }
            _ => true,
        }
    }

    fn hessian_fd(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let h = 1e-3 * x.min(y);
        let (gx1, gy1) = self.grad(x + h, y);
        let (gx0, gy0) = self.grad(x - h, y);
        let (_, gy2) = self.grad(x, y + h);
        let (_, gy3) = self.grad(x, y - h);
        let hxx = (gx1 - gx0) / (2.0 * h);
        let hxy = 0.5 * ((gy1 - gy0) / (2.0 * h) + (gy1 - gy0) / (2.0 * h));
        let hyy = (gy2 - gy3) / (2.0 * h);
        (hxx, hxy, hyy)
    }

    fn grad(&self, x: f64, y: f64) -> (f64, f64) {
        (self.dtheta_dx(x, y), self.dtheta_dx(y, x))
    }

    /// `theta(x, y)` for `x, y >= 0`.
    pub fn theta(&self, x: f64, y: f64) -> f64 {
        // Evaluate in a fixed argument order so symmetry holds bit for bit.
        let (x, y) = if x >= y { (x, y) } else { (y, x) };
        let m = x.max(y);
        let near = (x - y).abs() < DIAGONAL_SWITCH * m;
        match self.kind {
            ActivationKind::Quadratic => 1.0,
            ActivationKind::Arithmetic => 0.5 * (x + y),
            ActivationKind::Geometric => (x * y).sqrt(),
            ActivationKind::Harmonic => {
                if x + y > 0.0 {
                    2.0 * x * y / (x + y)
                } else {
                    0.0
                }
            }
            ActivationKind::LogMean => {
                if x <= 0.0 || y <= 0.0 {
                    0.0
                } else if near {
                    let a = 0.5 * (x + y);
                    let d = x - y;
                    a - d * d / (12.0 * a)
                } else {
                    (x - y) / ((x - y) / y).ln_1p()
                }
            }
            ActivationKind::PhiInduced | ActivationKind::PsiPhiInduced => {
                let phi = self.phi.as_ref().expect("induced activation carries phi");
                let psi_scale = self.psi_star.as_ref().map_or(1.0, |p| p.second(0.0));
                if near {
                    let mid = 0.5 * (x + y);
                    return 1.0 / (phi.second(mid) * psi_scale);
                }
                let xi = phi.derivative(x) - phi.derivative(y);
                let denom = match &self.psi_star {
                    Some(psi) => psi.derivative(xi),
                    None => xi,
                };
                let t = (x - y) / denom;
                if t.is_nan() {
                    0.0
                } else {
                    t
                }
            }
        }
    }

    /// Partial derivative of `theta` in its first argument. The second
    /// partial is `dtheta_dx(y, x)` by symmetry.
    pub fn dtheta_dx(&self, x: f64, y: f64) -> f64 {
        let m = x.max(y);
        let near = (x - y).abs() < DIAGONAL_SWITCH * m;
        match self.kind {
            ActivationKind::Quadratic => 0.0,
            ActivationKind::Arithmetic => 0.5,
            ActivationKind::Geometric => {
                if x > 0.0 {
                    0.5 * (y / x).sqrt()
                } else if y > 0.0 {
                    f64::INFINITY
                } else {
                    0.5
                }
            }
            ActivationKind::Harmonic => {
                let s = x + y;
                if s > 0.0 {
                    2.0 * y * y / (s * s)
                } else {
                    0.5
                }
            }
            ActivationKind::LogMean => {
                if x <= 0.0 && y <= 0.0 {
                    0.5
                } else if x <= 0.0 {
                    f64::INFINITY
                } else if y <= 0.0 {
                    0.0
                } else if near {
                    let a = 0.5 * (x + y);
                    let d = x - y;
                    0.5 - d / (6.0 * a) + d * d / (24.0 * a * a)
                } else {
                    let l = ((x - y) / y).ln_1p();
                    (l - (x - y) / x) / (l * l)
                }
            }
            ActivationKind::PhiInduced | ActivationKind::PsiPhiInduced => {
                let phi = self.phi.as_ref().expect("induced activation carries phi");
                let psi_scale = self.psi_star.as_ref().map_or(1.0, |p| p.second(0.0));
                if near {
                    let mid = 0.5 * (x + y);
                    let s = phi.second(mid);
                    return -phi.third_fd(mid) / (2.0 * s * s * psi_scale);
                }
                let xi = phi.derivative(x) - phi.derivative(y);
                let d = match &self.psi_star {
                    Some(psi) => {
                        let dp = psi.derivative(xi);
                        (dp - (x - y) * psi.second(xi) * phi.second(x)) / (dp * dp)
                    }
                    None => (xi - (x - y) * phi.second(x)) / (xi * xi),
                };
                if d.is_nan() {
                    if x <= 0.0 {
                        f64::INFINITY
                    } else {
                        0.0
                    }
                } else {
                    d
                }
            }
        }
    }

    /// `theta_ij(p) = theta(p_i / pi_i, p_j / pi_j)` on a stored edge.
    pub(crate) fn on_edge(&self, graph: &MarkovGraph, p: &[f64], e: &Edge) -> f64 {
        let pi = graph.pi();
        self.theta(p[e.i] / pi[e.i], p[e.j] / pi[e.j])
    }

    /// `(d theta_ij / d p_i, d theta_ij / d p_j)` on a stored edge.
    pub(crate) fn on_edge_grad(&self, graph: &MarkovGraph, p: &[f64], e: &Edge) -> (f64, f64) {
        let pi = graph.pi();
        let (x, y) = (p[e.i] / pi[e.i], p[e.j] / pi[e.j]);
        (self.dtheta_dx(x, y) / pi[e.i], self.dtheta_dx(y, x) / pi[e.j])
    }

    /// `theta_ij(p)` for the edge joining `i` and `j`.
    pub fn theta_edge(&self, graph: &MarkovGraph, p: &[f64], i: usize, j: usize) -> Result<f64> {
        let e = graph.edge_index(i, j).ok_or(Error::NotAnEdge { i, j })?;
        if p.len() != graph.n() {
            return Err(Error::DimensionMismatch { expected: graph.n(), found: p.len() });
        }
        Ok(self.on_edge(graph, p, &graph.edges()[e]))
    }

    /// `d theta_ij / d p_k`; zero unless `k` is an endpoint of the edge.
    pub fn dtheta_dp(
        &self,
        graph: &MarkovGraph,
        p: &[f64],
        i: usize,
        j: usize,
        k: usize,
    ) -> Result<f64> {
        let e = graph.edge_index(i, j).ok_or(Error::NotAnEdge { i, j })?;
        if p.len() != graph.n() {
            return Err(Error::DimensionMismatch { expected: graph.n(), found: p.len() });
        }
        let edge = &graph.edges()[e];
        let (di, dj) = self.on_edge_grad(graph, p, edge);
        Ok(if k == edge.i {
            di
        } else if k == edge.j {
            dj
        } else {
            0.0
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const MEANS: [ActivationKind; 5] = [
        ActivationKind::Quadratic,
        ActivationKind::LogMean,
        ActivationKind::Arithmetic,
        ActivationKind::Geometric,
        ActivationKind::Harmonic,
    ];

    fn uniform_pair() -> MarkovGraph {
        MarkovGraph::from_rates(DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0])).unwrap()
    }

    #[test]
    fn builtin_examples() {
        let q = Activation::builtin("quadratic").unwrap();
        assert_eq!(q.theta(0.3, 7.0), 1.0);
        let lm = Activation::builtin("log_mean").unwrap();
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(lm.theta(e, 1.0), e - 1.0, epsilon = 1e-14);
        let am = Activation::builtin("arithmetic").unwrap();
        assert_abs_diff_eq!(am.theta(3.0, 1.0), 2.0, epsilon = 1e-15);
        assert!(matches!(Activation::builtin("stolarsky"), Err(Error::UnknownKind(_))));
    }

    #[test]
    fn phi_induced_examples() {
        let quad = Activation::from_phi(GeneratorPhi::quadratic()).unwrap();
        assert_abs_diff_eq!(quad.theta(0.2, 3.0), 1.0, epsilon = 1e-15);
        let ent = Activation::from_phi(GeneratorPhi::entropy()).unwrap();
        assert_abs_diff_eq!(ent.theta(4.0, 1.0), 3.0 / 4f64.ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(ent.theta(4.0, 1.0), 2.16404, epsilon = 1e-5);
        assert_abs_diff_eq!(ent.theta(2.0, 2.0), 2.0, epsilon = 1e-15);

        let concave_phi = GeneratorPhi::new(
            "bad",
            Arc::new(|x: f64| -x * x),
            Arc::new(|x: f64| -2.0 * x),
            Arc::new(|_| -2.0),
        );
        assert!(matches!(Activation::from_phi(concave_phi), Err(Error::NonConvexGenerator { .. })));
    }

    #[test]
    fn psi_induced_examples() {
        let ent = GeneratorPhi::entropy;
        let am = Activation::from_phi_psi(ent(), DissipationPsiStar::log_cosh()).unwrap();
        assert_abs_diff_eq!(am.theta(3.0, 1.0), 2.0, epsilon = 1e-13);
        let gm = Activation::from_phi_psi(ent(), DissipationPsiStar::cosh_half()).unwrap();
        assert_abs_diff_eq!(gm.theta(4.0, 1.0), 2.0, epsilon = 1e-13);
        let hm = Activation::from_phi_psi(ent(), DissipationPsiStar::cosh()).unwrap();
        assert_abs_diff_eq!(hm.theta(4.0, 1.0), 1.6, epsilon = 1e-13);

        let flat = DissipationPsiStar::new(
            "flat",
            Arc::new(|x: f64| if x.abs() < 1.0 { 0.5 * x * x } else { x.abs() - 0.5 }),
            Arc::new(|x: f64| if x.abs() < 1.0 { x } else { 0.0 }),
            Arc::new(|x: f64| if x.abs() < 1.0 { 1.0 } else { 0.0 }),
        );
        assert!(matches!(
            Activation::from_phi_psi(ent(), flat),
            Err(Error::DegenerateDissipation { .. })
        ));
    }

    #[test]
    fn edge_evaluation() {
        let g = uniform_pair();
        let lm = Activation::builtin("log_mean").unwrap();
        assert_abs_diff_eq!(lm.theta_edge(&g, &[0.5, 0.5], 0, 1).unwrap(), 1.0, epsilon = 1e-15);
        let expected = (1.6 - 0.4) / (1.6f64.ln() - 0.4f64.ln());
        assert_abs_diff_eq!(lm.theta_edge(&g, &[0.8, 0.2], 0, 1).unwrap(), expected, epsilon = 1e-14);
        assert_abs_diff_eq!(lm.theta_edge(&g, &[0.8, 0.2], 0, 1).unwrap(), 0.86562, epsilon = 1e-5);
        assert_eq!(lm.theta_edge(&g, &[1.0, 0.0], 1, 0).unwrap(), 0.0);

        let three = MarkovGraph::from_rates(DMatrix::from_row_slice(
            3,
            3,
            &[-1.0, 1.0, 0.0, 1.0, -2.0, 1.0, 0.0, 1.0, -1.0],
        ))
        .unwrap();
        assert!(matches!(
            lm.theta_edge(&three, &[0.3, 0.3, 0.4], 0, 2),
            Err(Error::NotAnEdge { .. })
        ));

        let quad = Activation::builtin("quadratic").unwrap();
        assert_eq!(quad.dtheta_dp(&g, &[0.3, 0.7], 0, 1, 0).unwrap(), 0.0);
        let am = Activation::builtin("arithmetic").unwrap();
        assert_abs_diff_eq!(am.dtheta_dp(&g, &[0.3, 0.7], 0, 1, 0).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(am.dtheta_dp(&three, &[0.3, 0.3, 0.4], 0, 1, 2).unwrap(), 0.0);
    }

    #[test]
    fn derivatives_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let omega = DMatrix::from_row_slice(3, 3, &[0.0, 0.4, 0.3, 0.4, 0.0, 0.2, 0.3, 0.2, 0.0]);
        let g = MarkovGraph::from_weights(&omega, &[0.2, 0.5, 0.3]).unwrap();
        let mut kinds: Vec<Activation> = MEANS.iter().map(|&k| Activation::of_kind(k)).collect();
        kinds.push(Activation::from_phi(GeneratorPhi::entropy()).unwrap());
        kinds.push(
            Activation::from_phi_psi(GeneratorPhi::entropy(), DissipationPsiStar::cosh()).unwrap(),
        );
        for a in &kinds {
            for _ in 0..200 {
                let raw: Vec<f64> = (0..3).map(|_| rng.gen_range(0.05..1.0)).collect();
                let s: f64 = raw.iter().sum();
                let p: Vec<f64> = raw.iter().map(|v| v / s).collect();
                for (i, j) in [(0, 1), (0, 2), (1, 2)] {
                    for k in [i, j] {
                        let h = 1e-6;
                        let mut plus = p.clone();
                        let mut minus = p.clone();
                        plus[k] += h;
                        minus[k] -= h;
                        let fd = (a.theta_edge(&g, &plus, i, j).unwrap()
                            - a.theta_edge(&g, &minus, i, j).unwrap())
                            / (2.0 * h);
                        let an = a.dtheta_dp(&g, &p, i, j, k).unwrap();
                        assert!((fd - an).abs() <= 1e-6 * (1.0 + an.abs()), "{:?}: {fd} vs {an}", a.kind());
                    }
                }
            }
        }
    }

    #[test]
    fn symmetry_and_diagonal_continuity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut all: Vec<Activation> = MEANS.iter().map(|&k| Activation::of_kind(k)).collect();
        all.push(Activation::from_phi(GeneratorPhi::entropy()).unwrap());
        for a in &all {
            for _ in 0..1000 {
                let x = rng.gen_range(1e-3..10.0);
                let y = rng.gen_range(1e-3..10.0);
                let (u, v) = (a.theta(x, y), a.theta(y, x));
                assert!((u - v).abs() <= 1e-14 * u.abs().max(1.0));
            }
            for x in [0.1, 1.0, 5.0] {
                let eps = 1e-5;
                assert!((a.theta(x, x + eps) - a.theta(x, x)).abs() <= eps);
            }
        }
    }

    #[test]
    fn psi_consistency_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (kind, psi) in [
            (ActivationKind::Arithmetic, DissipationPsiStar::log_cosh()),
            (ActivationKind::Geometric, DissipationPsiStar::cosh_half()),
            (ActivationKind::Harmonic, DissipationPsiStar::cosh()),
        ] {
            let a = Activation::of_kind(kind);
            for _ in 0..1000 {
                let x: f64 = rng.gen_range(1e-6..=10.0);
                let y: f64 = rng.gen_range(1e-6..=10.0);
                let lhs = psi.derivative(x.ln() - y.ln()) * a.theta(x, y);
                assert!((lhs - (x - y)).abs() <= 1e-12, "{kind:?}: {lhs} vs {}", x - y);
            }
        }
    }

    #[test]
    fn boundary_property_flags() {
        assert!(Activation::of_kind(ActivationKind::LogMean).vanishes_on_boundary());
        assert!(Activation::of_kind(ActivationKind::Geometric).vanishes_on_boundary());
        assert!(Activation::of_kind(ActivationKind::Harmonic).vanishes_on_boundary());
        assert!(!Activation::of_kind(ActivationKind::Arithmetic).vanishes_on_boundary());
        assert!(!Activation::of_kind(ActivationKind::Quadratic).vanishes_on_boundary());
        assert_eq!(Activation::of_kind(ActivationKind::Harmonic).theta(0.0, 0.0), 0.0);
        assert_abs_diff_eq!(Activation::of_kind(ActivationKind::Arithmetic).theta(2.0, 0.0), 1.0);
        assert!(Activation::from_phi(GeneratorPhi::entropy()).unwrap().vanishes_on_boundary());
        assert!(Activation::from_phi(GeneratorPhi::entropy()).unwrap().is_concave());
    }

    #[test]
    fn psi_builtins_are_even_with_zero_minimum() {
        for psi in [
            DissipationPsiStar::quadratic(),
            DissipationPsiStar::log_cosh(),
            DissipationPsiStar::cosh_half(),
            DissipationPsiStar::cosh(),
        ] {
            assert_eq!(psi.value(0.0), 0.0);
            for xi in [0.1, 1.0, 3.7, 30.0] {
                assert_abs_diff_eq!(psi.value(xi), psi.value(-xi), epsilon = 1e-12);
                assert_abs_diff_eq!(psi.derivative(xi), -psi.derivative(-xi), epsilon = 1e-12);
                let fd = (psi.value(xi + 1e-6) - psi.value(xi - 1e-6)) / 2e-6;
                assert!((fd - psi.derivative(xi)).abs() <= 1e-5 * (1.0 + fd.abs()));
            }
            psi.validate().unwrap();
        }
    }
}
