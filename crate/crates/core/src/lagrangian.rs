//! Running cost `L` and its convex conjugate `H`.

use std::fmt;

use crate::activation::ScalarFn;
use crate::error::{Error, Result};

#[derive(Clone)]
enum Form {
    Power { alpha: f64, beta: f64 },
    Custom {
        l: ScalarFn,
        dl: ScalarFn,
        h: ScalarFn,
        dh: ScalarFn,
        h_inv: ScalarFn,
    },
}

/// A conjugate pair `(L, H)` with `H = L*`, both even.
#[derive(Clone)]
pub struct LagrangianPair {
    form: Form,
}

impl fmt::Debug for LagrangianPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.form {
            Form::Power { alpha, .. } => write!(f, "LagrangianPair::Power({alpha})"),
            Form::Custom { .. } => write!(f, "LagrangianPair::Custom"),
        }
    }
}

impl LagrangianPair {
    /// `L(a) = |a|^alpha / alpha`, `H(b) = |b|^beta / beta`.
    pub fn power(alpha: f64) -> Result<Self> {
        if !(alpha > 1.0) || !alpha.is_finite() {
            return Err(Error::BadExponent(alpha));
        }
        Ok(LagrangianPair { form: Form::Power { alpha, beta: alpha / (alpha - 1.0) } })
    }

    /// User-supplied pair. `h_inv` inverts `H` on `[0, inf)`. The contract is
    /// checked on a sample of points.
    pub fn custom(l: ScalarFn, dl: ScalarFn, h: ScalarFn, dh: ScalarFn, h_inv: ScalarFn) -> Result<Self> {
        let pair = LagrangianPair { form: Form::Custom { l, dl, h, dh, h_inv } };
        if pair.l(0.0).abs() > 1e-12 || pair.h(0.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument("L(0) and H(0) must vanish".into()));
        }
        for k in 1..=40 {
            let a = 0.1 * k as f64;
            if (pair.l(a) - pair.l(-a)).abs() > 1e-10 * (1.0 + pair.l(a).abs()) {
                return Err(Error::InvalidArgument(format!("L is not even at {a}")));
            }
            let r = pair.legendre_residual(a);
            if r > 1e-8 * (1.0 + pair.l(a).abs()) {
                return Err(Error::InvalidArgument(format!("Legendre identity fails at {a}: {r:e}")));
            }
            let c = pair.h(a);
            if (pair.h_inverse(c) - a).abs() > 1e-8 * (1.0 + a) {
                return Err(Error::InvalidArgument(format!("H inverse fails at {a}")));
            }
        }
        Ok(pair)
    }

    /// `alpha` for the power family.
    pub fn alpha(&self) -> Option<f64> {
        match self.form {
            Form::Power { alpha, .. } => Some(alpha),
            Form::Custom { .. } => None,
        }
    }

    /// Homogeneity degree of `H` for the power family.
    pub fn beta(&self) -> Option<f64> {
        match self.form {
            Form::Power { beta, .. } => Some(beta),
            Form::Custom { .. } => None,
        }
    }

    pub fn l(&self, a: f64) -> f64 {
        match &self.form {
            Form::Power { alpha, .. } => a.abs().powf(*alpha) / alpha,
            Form::Custom { l, .. } => l(a),
        }
    }

    pub fn l_prime(&self, a: f64) -> f64 {
        match &self.form {
            Form::Power { alpha, .. } => signed_pow(a, alpha - 1.0),
            Form::Custom { dl, .. } => dl(a),
        }
    }

    pub fn h(&self, b: f64) -> f64 {
        match &self.form {
            Form::Power { beta, .. } => b.abs().powf(*beta) / beta,
            Form::Custom { h, .. } => h(b),
        }
    }

    pub fn h_prime(&self, b: f64) -> f64 {
        match &self.form {
            Form::Power { beta, .. } => signed_pow(b, beta - 1.0),
            Form::Custom { dh, .. } => dh(b),
        }
    }

    /// Nonnegative inverse of `H`; `c` is clamped at zero.
    pub fn h_inverse(&self, c: f64) -> f64 {
        let c = c.max(0.0);
        match &self.form {
            Form::Power { beta, .. } => (beta * c).powf(1.0 / beta),
            Form::Custom { h_inv, .. } => h_inv(c),
        }
    }

    /// `|L(a) + H(L'(a)) - a L'(a)|`.
    pub fn legendre_residual(&self, a: f64) -> f64 {
        let b = self.l_prime(a);
        (self.l(a) + self.h(b) - a * b).abs()
    }

    /// Perspective `theta L(m / theta)` with the conventions `0 L(0/0) = 0`
    /// and `+inf` for `theta = 0, m != 0`.
    pub fn perspective(&self, m: f64, theta: f64) -> f64 {
        if theta > 0.0 {
            theta * self.l(m / theta)
        } else if m == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

fn signed_pow(x: f64, e: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum() * x.abs().powf(e)
    }
}

/// Edge-uniform or edge-dependent Lagrangians.
#[derive(Debug, Clone)]
pub enum Lagrangians {
    Uniform(LagrangianPair),
    PerEdge(Vec<LagrangianPair>),
}

impl Lagrangians {
    /// Pair attached to stored edge `e`.
    pub fn on_edge(&self, e: usize) -> &LagrangianPair {
        match self {
            Lagrangians::Uniform(p) => p,
            Lagrangians::PerEdge(v) => &v[e],
        }
    }

    /// Common power exponent `beta` if every edge uses the same power pair.
    pub fn common_beta(&self) -> Option<f64> {
        match self {
            Lagrangians::Uniform(p) => p.beta(),
            Lagrangians::PerEdge(v) => {
                let b = v.first()?.beta()?;
                v.iter().all(|p| p.beta() == Some(b)).then_some(b)
            }
        }
    }

    pub fn common_alpha(&self) -> Option<f64> {
        self.common_beta().map(|b| b / (b - 1.0))
    }
}

impl From<LagrangianPair> for Lagrangians {
    fn from(p: LagrangianPair) -> Self {
        Lagrangians::Uniform(p)
    }
}
