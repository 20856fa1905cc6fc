//! Running and terminal couplings `F_i(p)`, `G_i(p)`, optionally derived
//! from a scalar potential.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A vector field on densities, possibly the gradient of a scalar potential.
pub trait Coupling: Send + Sync {
    /// `F_i(p)` for every state.
    fn field(&self, p: &[f64]) -> Vec<f64>;

    /// The potential at `p`, when the field is a gradient.
    fn potential(&self, p: &[f64]) -> Option<f64>;

    /// Whether [`Coupling::potential`] returns values.
    fn has_potential(&self) -> bool;

    fn describe(&self) -> String {
        String::from("coupling")
    }
}

impl fmt::Debug for dyn Coupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

/// The zero field with zero potential.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroCoupling;

impl Coupling for ZeroCoupling {
    fn field(&self, p: &[f64]) -> Vec<f64> {
        vec![0.0; p.len()]
    }

    fn potential(&self, _p: &[f64]) -> Option<f64> {
        Some(0.0)
    }

    fn has_potential(&self) -> bool {
        true
    }

    fn describe(&self) -> String {
        "zero".into()
    }
}

/// `F(p) = W p + b`; a potential `p^T W p / 2 + b^T p` exists when `W` is
/// symmetric.
#[derive(Debug, Clone)]
pub struct QuadraticCoupling {
    w: DMatrix<f64>,
    b: DVector<f64>,
    symmetric: bool,
}

impl QuadraticCoupling {
    pub fn new(w: DMatrix<f64>, b: Option<Vec<f64>>) -> Result<Self> {
        let n = w.nrows();
        if w.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: w.ncols() });
        }
        let b = match b {
            Some(b) if b.len() != n => return Err(Error::DimensionMismatch { expected: n, found: b.len() }),
            Some(b) => DVector::from_vec(b),
            None => DVector::zeros(n),
        };
        let symmetric = (0..n).all(|i| (0..n).all(|j| w[(i, j)] == w[(j, i)]));
        Ok(QuadraticCoupling { w, b, symmetric })
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }
}

impl Coupling for QuadraticCoupling {
    fn field(&self, p: &[f64]) -> Vec<f64> {
        let p = DVector::from_column_slice(p);
        (&self.w * p + &self.b).iter().copied().collect()
    }

    fn potential(&self, p: &[f64]) -> Option<f64> {
        if !self.symmetric {
            return None;
        }
        let p = DVector::from_column_slice(p);
        Some(0.5 * p.dot(&(&self.w * &p)) + self.b.dot(&p))
    }

    fn has_potential(&self) -> bool {
        self.symmetric
    }

    fn describe(&self) -> String {
        format!("quadratic_W(symmetric = {})", self.symmetric)
    }
}

/// Two-state coupling tabulated on an `x = p_1` grid. The table holds
/// `d(x) = F_1 - F_2` at the nodes; between nodes `d` is linear. The field is
/// `(d(p_1), 0)` and the potential is `V(p_1) = int_0^{p_1} d`.
#[derive(Debug, Clone)]
pub struct TabulatedCoupling {
    x: Vec<f64>,
    d: Vec<f64>,
    /// `V` at the nodes.
    cumulative: Vec<f64>,
}

impl TabulatedCoupling {
    pub fn new(x: Vec<f64>, d: Vec<f64>) -> Result<Self> {
        if x.len() != d.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), found: d.len() });
        }
        if x.len() < 2 {
            return Err(Error::InvalidArgument("table needs at least two nodes".into()));
        }
        if x[0] != 0.0 || *x.last().unwrap() != 1.0 || x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("table grid must increase from 0 to 1".into()));
        }
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("table value".into()));
        }
        let mut cumulative = vec![0.0];
        for k in 1..x.len() {
            let prev = cumulative[k - 1];
            cumulative.push(prev + 0.5 * (x[k] - x[k - 1]) * (d[k] + d[k - 1]));
        }
        Ok(TabulatedCoupling { x, d, cumulative })
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let x = x.clamp(0.0, 1.0);
        let k = match self.x.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(k) => k.min(self.x.len() - 2),
            Err(k) => k.saturating_sub(1).min(self.x.len() - 2),
        };
        (k, x - self.x[k])
    }

    /// `d(x)` by linear interpolation.
    pub fn difference(&self, x: f64) -> f64 {
        let (k, s) = self.locate(x);
        let slope = (self.d[k + 1] - self.d[k]) / (self.x[k + 1] - self.x[k]);
        self.d[k] + slope * s
    }

    /// `V(x)`, exact for the piecewise-linear `d`.
    pub fn integral(&self, x: f64) -> f64 {
        let (k, s) = self.locate(x);
        let slope = (self.d[k + 1] - self.d[k]) / (self.x[k + 1] - self.x[k]);
        self.cumulative[k] + self.d[k] * s + 0.5 * slope * s * s
    }
}

impl Coupling for TabulatedCoupling {
    fn field(&self, p: &[f64]) -> Vec<f64> {
        vec![self.difference(p[0]), 0.0]
    }

    fn potential(&self, p: &[f64]) -> Option<f64> {
        Some(self.integral(p[0]))
    }

    fn has_potential(&self) -> bool {
        true
    }

    fn describe(&self) -> String {
        format!("custom_table({} nodes)", self.x.len())
    }
}

type FieldFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type PotentialFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Coupling given by closures.
#[derive(Clone)]
pub struct FnCoupling {
    field: FieldFn,
    potential: Option<PotentialFn>,
}

impl FnCoupling {
    pub fn new(field: FieldFn, potential: Option<PotentialFn>) -> Self {
        FnCoupling { field, potential }
    }
}

impl Coupling for FnCoupling {
    fn field(&self, p: &[f64]) -> Vec<f64> {
        (self.field)(p)
    }

    fn potential(&self, p: &[f64]) -> Option<f64> {
        self.potential.as_ref().map(|f| f(p))
    }

    fn has_potential(&self) -> bool {
        self.potential.is_some()
    }
}

/// Deterministic interior sample points of the simplex used by the checks.
pub(crate) fn sample_interior(n: usize, count: usize) -> Vec<Vec<f64>> {
    // Weyl sequence, irrational increments per coordinate.
    let alphas: Vec<f64> = (0..n).map(|i| ((i + 2) as f64).sqrt().fract()).collect();
    (1..=count)
        .map(|k| {
            let raw: Vec<f64> = alphas.iter().map(|a| 0.2 + (k as f64 * a).fract()).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|v| v / s).collect()
        })
        .collect()
}

/// Checks that `(d_i - d_j) potential` matches `F_i - F_j` by central
/// differences at sample points.
pub fn check_potential_consistency(c: &dyn Coupling, n: usize) -> Result<()> {
    if !c.has_potential() {
        return Ok(());
    }
    let h = 1e-5;
    for p in sample_interior(n, 10) {
        let f = c.field(&p);
        for i in 0..n {
            for j in (i + 1)..n {
                let mut plus = p.clone();
                let mut minus = p.clone();
                plus[i] += h;
                plus[j] -= h;
                minus[i] -= h;
                minus[j] += h;
                let fd = (c.potential(&plus).unwrap() - c.potential(&minus).unwrap()) / (2.0 * h);
                let exact = f[i] - f[j];
                if (fd - exact).abs() > 1e-6 * (1.0 + exact.abs()) {
                    return Err(Error::InvalidArgument(format!(
                        "potential gradient {fd} does not match field difference {exact} for {}",
                        c.describe()
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Concavity of the potential along simplex directions, from central
/// differences of the field.
pub fn check_concave(c: &dyn Coupling, n: usize, label: &str) -> Result<()> {
    let h = 1e-4;
    for p in sample_interior(n, 25) {
        for i in 0..n {
            for j in (i + 1)..n {
                let mut plus = p.clone();
                let mut minus = p.clone();
                plus[i] += h;
                plus[j] -= h;
                minus[i] -= h;
                minus[j] += h;
                let fp = c.field(&plus);
                let fm = c.field(&minus);
                let curvature = ((fp[i] - fp[j]) - (fm[i] - fm[j])) / (2.0 * h);
                if curvature > 1e-8 {
                    return Err(Error::NotConcave(format!(
                        "{label} has curvature {curvature:e} along e_{i} - e_{j}"
                    )));
                }
            }
        }
    }
    Ok(())
}
