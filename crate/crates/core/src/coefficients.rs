//! Coefficient fields, the Cordes condition and the explicit constants of the
//! nonsymmetric and least-squares formulations.

use crate::error::{FemError, Result};
use crate::Point;

/// General (not necessarily symmetric) 2x2 matrix, row-major.
pub type Mat2 = [[f64; 2]; 2];

/// Symmetric 2x2 matrix stored by its three independent entries.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SymMatrix2 {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
}

impl SymMatrix2 {
    pub const IDENTITY: SymMatrix2 = SymMatrix2 {
        a11: 1.0,
        a12: 0.0,
        a22: 1.0,
    };

    pub const fn new(a11: f64, a12: f64, a22: f64) -> Self {
        Self { a11, a12, a22 }
    }

    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }

    /// Squared Frobenius norm `A:A`.
    pub fn frobenius_sq(&self) -> f64 {
        self.a11 * self.a11 + 2.0 * self.a12 * self.a12 + self.a22 * self.a22
    }

    pub fn frobenius(&self) -> f64 {
        self.frobenius_sq().sqrt()
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a12
    }

    pub fn scale(&self, t: f64) -> Self {
        Self::new(t * self.a11, t * self.a12, t * self.a22)
    }

    pub fn to_mat(&self) -> Mat2 {
        [[self.a11, self.a12], [self.a12, self.a22]]
    }

    /// Frobenius product `A:B` with a general matrix.
    pub fn contract(&self, b: &Mat2) -> f64 {
        self.a11 * b[0][0] + self.a12 * (b[0][1] + b[1][0]) + self.a22 * b[1][1]
    }

    /// Frobenius product with another symmetric matrix.
    pub fn contract_sym(&self, b: &SymMatrix2) -> f64 {
        self.a11 * b.a11 + 2.0 * self.a12 * b.a12 + self.a22 * b.a22
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let m = 0.5 * self.trace();
        let d = (0.25 * (self.a11 - self.a22).powi(2) + self.a12 * self.a12).sqrt();
        (m - d, m + d)
    }
}

/// `γ = tr A / |A|²`.
pub fn eval_gamma(a: &SymMatrix2) -> Result<f64> {
    let n2 = a.frobenius_sq();
    if n2 == 0.0 {
        return Err(FemError::Domain("gamma of the zero matrix".into()));
    }
    Ok(a.trace() / n2)
}

/// Largest `ε` for which the planar Cordes condition `|A|²/(tr A)² ≤ 1/(1+ε)`
/// holds at this matrix, i.e. `(tr A)²/|A|² − 1`, capped at 1.
///
/// The matrix satisfies the Cordes condition iff the result is positive.
pub fn cordes_epsilon(a: &SymMatrix2) -> Result<f64> {
    let n2 = a.frobenius_sq();
    if n2 == 0.0 {
        return Err(FemError::Domain("Cordes parameter of the zero matrix".into()));
    }
    let tr = a.trace();
    Ok((tr * tr / n2 - 1.0).min(1.0))
}

/// Built-in coefficient fields on Ω = (−1,1)².
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoefficientKind {
    Identity,
    /// `[[2, sign(x₁x₂)], [sign(x₁x₂), 2]]`.
    ExperimentSign,
    /// `ExperimentSign` composed with `φ(x) = (x₁+1/3, x₂−1/3+∛(x₁+1/3))`.
    Experiment3Transformed,
    /// Spatially constant matrix.
    Constant(SymMatrix2),
}

/// Sign with the convention `sign(0) = +1`; the coefficient is only defined
/// almost everywhere, so the sign lines get a fixed value.
fn sign_convention(t: f64) -> f64 {
    if t < 0.0 {
        -1.0
    } else {
        1.0
    }
}

fn experiment_sign_at(p: Point) -> SymMatrix2 {
    SymMatrix2::new(2.0, sign_convention(p[0] * p[1]), 2.0)
}

/// The nonlinear transform applied to the coordinates in the third benchmark.
pub fn experiment3_transform(p: Point) -> Point {
    let s = p[0] + 1.0 / 3.0;
    [s, p[1] - 1.0 / 3.0 + s.cbrt()]
}

pub fn builtin_coefficient(kind: CoefficientKind, p: Point) -> SymMatrix2 {
    match kind {
        CoefficientKind::Identity => SymMatrix2::IDENTITY,
        CoefficientKind::ExperimentSign => experiment_sign_at(p),
        CoefficientKind::Experiment3Transformed => experiment_sign_at(experiment3_transform(p)),
        CoefficientKind::Constant(a) => a,
    }
}

/// A coefficient field together with its ellipticity and Cordes data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientField {
    pub kind: CoefficientKind,
    pub epsilon: f64,
    /// `‖γ‖_∞`
    pub gamma_sup: f64,
    /// `‖A‖_∞`, measured as the largest entry modulus.
    pub a_sup: f64,
    pub alpha1: f64,
    pub alpha2: f64,
}

impl CoefficientField {
    pub fn identity() -> Self {
        Self {
            kind: CoefficientKind::Identity,
            epsilon: 1.0,
            gamma_sup: 1.0,
            a_sup: 1.0,
            alpha1: 1.0,
            alpha2: 1.0,
        }
    }

    fn experiment(kind: CoefficientKind) -> Self {
        // [[2,±1],[±1,2]] has eigenvalues 1 and 3, tr = 4 and |A|² = 10.
        Self {
            kind,
            epsilon: 0.6,
            gamma_sup: 0.4,
            a_sup: 2.0,
            alpha1: 1.0,
            alpha2: 3.0,
        }
    }

    pub fn experiment_sign() -> Self {
        Self::experiment(CoefficientKind::ExperimentSign)
    }

    pub fn experiment3_transformed() -> Self {
        Self::experiment(CoefficientKind::Experiment3Transformed)
    }

    /// Constant field; rejects matrices that are not uniformly elliptic.
    pub fn constant(a: SymMatrix2) -> Result<Self> {
        let (l1, l2) = a.eigenvalues();
        if l1 <= 0.0 {
            return Err(FemError::Domain(format!(
                "coefficient is not positive definite (smallest eigenvalue {l1})"
            )));
        }
        Ok(Self {
            kind: CoefficientKind::Constant(a),
            epsilon: cordes_epsilon(&a)?,
            gamma_sup: eval_gamma(&a)?,
            a_sup: a.a11.abs().max(a.a12.abs()).max(a.a22.abs()),
            alpha1: l1,
            alpha2: l2,
        })
    }

    #[inline]
    pub fn eval(&self, p: Point) -> SymMatrix2 {
        builtin_coefficient(self.kind, p)
    }
}

/// Choice of the test-function operator τ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Formulation {
    /// `τ(φ) = γ div φ`
    NonSymmetric,
    /// `τ(φ) = A:Dφ`
    LeastSquares,
}

impl Formulation {
    /// Applies τ to a field whose Jacobian at the point is `d`, with coefficient `a`.
    #[inline]
    pub fn test_operator(self, a: &SymMatrix2, d: &Mat2) -> f64 {
        match self {
            Formulation::LeastSquares => a.contract(d),
            Formulation::NonSymmetric => {
                let gamma = a.trace() / a.frobenius_sq();
                gamma * (d[0][0] + d[1][1])
            }
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Formulation::NonSymmetric => "ns",
            Formulation::LeastSquares => "ls",
        }
    }
}

/// Stabilization and coercivity constants of the mixed scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilizationParams {
    pub formulation: Formulation,
    pub lambda: f64,
    pub c_lambda: f64,
    pub sigma_lambda: f64,
    /// Young parameter of the nonsymmetric reliability bound.
    pub mu: f64,
    /// `c(γ,ε) = (1−√(1−ε))/‖γ‖_∞`
    pub c_coercivity: f64,
}

impl StabilizationParams {
    /// Guaranteed interval `[lower, upper]` for the efficiency index of the
    /// mixed least-squares estimator.
    pub fn mixed_efficiency_bounds(&self, a_sup: f64) -> (f64, f64) {
        let s2 = self.sigma_lambda * self.sigma_lambda;
        (self.c_lambda, (a_sup * a_sup + s2).sqrt())
    }
}

pub fn derived_constants(
    field: &CoefficientField,
    formulation: Formulation,
    lambda: f64,
) -> Result<StabilizationParams> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(FemError::Parameter(format!("lambda must be positive, got {lambda}")));
    }
    let eps = field.epsilon;
    let g = field.gamma_sup;
    let c_coercivity = (1.0 - (1.0 - eps).sqrt()) / g;
    let (c_lambda, sigma_lambda) = match formulation {
        Formulation::NonSymmetric => {
            if (lambda - 1.0).abs() >= eps.sqrt() {
                return Err(FemError::Parameter(format!(
                    "nonsymmetric stabilization requires |lambda-1| < sqrt(eps) = {:.6}, got lambda = {lambda}",
                    eps.sqrt()
                )));
            }
            let c2 = 1.0 - (lambda * lambda + 1.0 - eps) / (2.0 * lambda);
            (c2.sqrt(), (1.0 - lambda / 2.0).sqrt())
        }
        Formulation::LeastSquares => {
            let c = c_coercivity / (1.0 + lambda).sqrt();
            let extra = (1.0 + 1.0 / lambda) * (1.0 - eps) / ((1.0 + lambda) * g * g);
            (c, (c * c + extra).sqrt())
        }
    };
    Ok(StabilizationParams {
        formulation,
        lambda,
        c_lambda,
        sigma_lambda,
        mu: 2.0 * c_lambda * c_lambda / (g * g),
        c_coercivity,
    })
}
