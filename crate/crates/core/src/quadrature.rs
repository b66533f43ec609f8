//! Gauss quadrature on rectangles and triangles.
//!
//! Rectangle rules live on the reference square `[-1,1]²`, triangle rules on
//! the reference triangle with vertices `(0,0)`, `(1,0)`, `(0,1)`. Every point
//! of every rule lies strictly inside its reference domain.

use crate::error::{FemError, Result};
use crate::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    Rectangle,
    Triangle,
}

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub kind: DomainKind,
    /// Total degree (triangles) or per-direction degree (rectangles) integrated exactly.
    pub degree: usize,
}

/// Gauss–Legendre nodes and weights on `[-1,1]`, by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Tensor Gauss–Legendre rule with `n` points per direction.
pub fn gauss_rectangle(n: usize) -> Result<QuadratureRule> {
    if !(1..=10).contains(&n) {
        return Err(FemError::Parameter(format!(
            "rectangle rule needs 1..=10 points per direction, got {n}"
        )));
    }
    let (x, w) = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            points.push([x[i], x[j]]);
            weights.push(w[i] * w[j]);
        }
    }
    Ok(QuadratureRule {
        points,
        weights,
        kind: DomainKind::Rectangle,
        degree: 2 * n - 1,
    })
}

/// Triangle rule exact for polynomials of total degree `degree`.
///
/// Degrees 1 and 2 use the symmetric centroid and three-point rules; higher
/// degrees use a collapsed (Duffy) tensor Gauss rule.
pub fn gauss_triangle(degree: usize) -> Result<QuadratureRule> {
    if !(1..=10).contains(&degree) {
        return Err(FemError::Parameter(format!(
            "triangle rule degree must be in 1..=10, got {degree}"
        )));
    }
    let (points, weights) = match degree {
        1 => (vec![[1.0 / 3.0, 1.0 / 3.0]], vec![0.5]),
        2 => (
            vec![[1.0 / 6.0, 1.0 / 6.0], [2.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 2.0 / 3.0]],
            vec![1.0 / 6.0; 3],
        ),
        _ => {
            // (s,t) ∈ [0,1]² ↦ (s(1−t), t), Jacobian 1−t adds one degree in t.
            let n = (degree + 2).div_ceil(2);
            let (x, w) = gauss_legendre(n);
            let mut pts = Vec::with_capacity(n * n);
            let mut wts = Vec::with_capacity(n * n);
            for j in 0..n {
                let t = 0.5 * (x[j] + 1.0);
                for i in 0..n {
                    let s = 0.5 * (x[i] + 1.0);
                    pts.push([s * (1.0 - t), t]);
                    wts.push(0.25 * w[i] * w[j] * (1.0 - t));
                }
            }
            (pts, wts)
        }
    };
    Ok(QuadratureRule {
        points,
        weights,
        kind: DomainKind::Triangle,
        degree,
    })
}

/// Physical element over which a rule is applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ElementGeometry {
    /// Axis-aligned rectangle `[min.0, max.0] × [min.1, max.1]`.
    Rectangle { min: Point, max: Point },
    /// Triangle given by its vertices.
    Triangle([Point; 3]),
}

impl ElementGeometry {
    pub fn kind(&self) -> DomainKind {
        match self {
            ElementGeometry::Rectangle { .. } => DomainKind::Rectangle,
            ElementGeometry::Triangle(_) => DomainKind::Triangle,
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            ElementGeometry::Rectangle { min, max } => (max[0] - min[0]) * (max[1] - min[1]),
            ElementGeometry::Triangle([a, b, c]) => {
                0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs()
            }
        }
    }

    /// The four congruent children of a four-split.
    pub fn split4(&self) -> [ElementGeometry; 4] {
        match *self {
            ElementGeometry::Rectangle { min, max } => {
                let c = [0.5 * (min[0] + max[0]), 0.5 * (min[1] + max[1])];
                [
                    ElementGeometry::Rectangle { min, max: c },
                    ElementGeometry::Rectangle {
                        min: [c[0], min[1]],
                        max: [max[0], c[1]],
                    },
                    ElementGeometry::Rectangle { min: c, max },
                    ElementGeometry::Rectangle {
                        min: [min[0], c[1]],
                        max: [c[0], max[1]],
                    },
                ]
            }
            ElementGeometry::Triangle([a, b, c]) => {
                let mid = |p: Point, q: Point| [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
                let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
                [
                    ElementGeometry::Triangle([a, ab, ca]),
                    ElementGeometry::Triangle([ab, b, bc]),
                    ElementGeometry::Triangle([ca, bc, c]),
                    ElementGeometry::Triangle([bc, ca, ab]),
                ]
            }
        }
    }

    fn push_mapped(&self, rule: &QuadratureRule, out: &mut Vec<(Point, f64)>) {
        match *self {
            ElementGeometry::Rectangle { min, max } => {
                let hx = 0.5 * (max[0] - min[0]);
                let hy = 0.5 * (max[1] - min[1]);
                let jac = hx * hy;
                for (p, w) in rule.points.iter().zip(&rule.weights) {
                    out.push(([min[0] + hx * (p[0] + 1.0), min[1] + hy * (p[1] + 1.0)], w * jac));
                }
            }
            ElementGeometry::Triangle([a, b, c]) => {
                let e1 = [b[0] - a[0], b[1] - a[1]];
                let e2 = [c[0] - a[0], c[1] - a[1]];
                let jac = (e1[0] * e2[1] - e2[0] * e1[1]).abs();
                for (p, w) in rule.points.iter().zip(&rule.weights) {
                    out.push((
                        [a[0] + e1[0] * p[0] + e2[0] * p[1], a[1] + e1[1] * p[0] + e2[1] * p[1]],
                        w * jac,
                    ));
                }
            }
        }
    }

    /// Physical quadrature points and weights, optionally on `4^subdivision` children.
    pub fn quadrature_points(&self, rule: &QuadratureRule, subdivision: u32) -> Result<Vec<(Point, f64)>> {
        if rule.kind != self.kind() {
            return Err(FemError::Parameter(format!(
                "{:?} rule applied to {:?} element",
                rule.kind,
                self.kind()
            )));
        }
        let mut out = Vec::with_capacity(rule.points.len() * 4usize.pow(subdivision));
        self.collect(rule, subdivision, &mut out);
        Ok(out)
    }

    fn collect(&self, rule: &QuadratureRule, subdivision: u32, out: &mut Vec<(Point, f64)>) {
        if subdivision == 0 {
            self.push_mapped(rule, out);
        } else {
            for child in self.split4() {
                child.collect(rule, subdivision - 1, out);
            }
        }
    }
}

pub fn integrate<F: Fn(Point) -> f64>(
    f: F,
    geometry: &ElementGeometry,
    rule: &QuadratureRule,
    subdivision: u32,
) -> Result<f64> {
    Ok(geometry
        .quadrature_points(rule, subdivision)?
        .into_iter()
        .map(|(p, w)| w * f(p))
        .sum())
}

/// Rule orders used by assembly, estimation and error evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSettings {
    /// Gauss points per direction on rectangles.
    pub rect_points: usize,
    /// Total degree of the triangle rule.
    pub tri_degree: usize,
    /// Uniform subdivision level applied on every element.
    pub subdivision: u32,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self {
            rect_points: 5,
            tri_degree: 6,
            subdivision: 0,
        }
    }
}
