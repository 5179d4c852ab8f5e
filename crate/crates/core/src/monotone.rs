//! Maximal monotone operators with exact resolvents.
//!
//! The supported operators form a closed set: every variant has a closed-form
//! projection onto the domain closure, a closed-form resolvent
//! `J_λ = (I + λA)⁻¹`, and closed-form lower/upper boundary evaluations
//! `A_*(x, v)` and `A^*(x, v)` (liminf/limsup of `⟨ζ, w⟩` over `ζ ∈ A(x')`
//! as `(x', w) → (x, v)`).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance for domain membership.
pub const DOMAIN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MonotoneError {
    #[error("invalid operator: {0}")]
    Invalid(String),
    #[error("0 must lie strictly inside the domain of a {0} operator used for simulation")]
    ZeroNotInterior(&'static str),
    #[error("point lies outside the domain closure (distance {distance:.3e})")]
    OutsideDomain { distance: f64 },
    #[error("dimension mismatch: operator acts on R^{expected}, got R^{got}")]
    Dimension { expected: usize, got: usize },
    #[error("point is not strictly interior to the domain")]
    NotInterior,
    #[error("operation requires a normal-cone operator")]
    NotNormalCone,
}

/// Extended real value. Supports comparison only.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub enum ExtendedReal {
    NegInf,
    Finite(f64),
    PosInf,
}

impl ExtendedReal {
    pub fn finite(self) -> Option<f64> {
        match self {
            ExtendedReal::Finite(v) => Some(v),
            _ => None,
        }
    }
}

/// A maximal monotone operator on `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub enum MonotoneOp {
    /// `A ≡ {0}` with full domain.
    Zero,
    /// Normal cone of the box `[lower, upper]`.
    NormalConeBox { lower: Vec<f64>, upper: Vec<f64> },
    /// Normal cone of the closed ball `B(center, radius)`.
    NormalConeBall { center: Vec<f64>, radius: f64 },
    /// Subdifferential of `w|x|` on the real line.
    SubdiffAbs { weight: f64 },
    /// Gradient of `½ xᵀQx`, `Q` symmetric positive semidefinite.
    SubdiffQuadratic { q: DMatrix<f64> },
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl MonotoneOp {
    pub fn normal_cone_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, MonotoneError> {
        let op = MonotoneOp::NormalConeBox { lower, upper };
        op.validate()?;
        Ok(op)
    }

    pub fn normal_cone_ball(center: Vec<f64>, radius: f64) -> Result<Self, MonotoneError> {
        let op = MonotoneOp::NormalConeBall { center, radius };
        op.validate()?;
        Ok(op)
    }

    pub fn subdiff_abs(weight: f64) -> Result<Self, MonotoneError> {
        let op = MonotoneOp::SubdiffAbs { weight };
        op.validate()?;
        Ok(op)
    }

    pub fn subdiff_quadratic(q: DMatrix<f64>) -> Result<Self, MonotoneError> {
        let op = MonotoneOp::SubdiffQuadratic { q };
        op.validate()?;
        Ok(op)
    }

    /// Checks the structural invariants of the variant.
    pub fn validate(&self) -> Result<(), MonotoneError> {
        let bad = |s: &str| Err(MonotoneError::Invalid(s.to_string()));
        match self {
            MonotoneOp::Zero => Ok(()),
            MonotoneOp::NormalConeBox { lower, upper } => {
                if lower.is_empty() || lower.len() != upper.len() {
                    return bad("box bounds must be nonempty and of equal length");
                }
                if lower.iter().chain(upper).any(|v| !v.is_finite()) {
                    return bad("box bounds must be finite");
                }
                if lower.iter().zip(upper).any(|(l, u)| l >= u) {
                    return bad("box must have nonempty interior (lower < upper)");
                }
                Ok(())
            }
            MonotoneOp::NormalConeBall { center, radius } => {
                if center.is_empty() || center.iter().any(|v| !v.is_finite()) {
                    return bad("ball center must be a nonempty finite vector");
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return bad("ball radius must be positive");
                }
                Ok(())
            }
            MonotoneOp::SubdiffAbs { weight } => {
                if !(weight.is_finite() && *weight > 0.0) {
                    return bad("abs weight must be positive");
                }
                Ok(())
            }
            MonotoneOp::SubdiffQuadratic { q } => {
                if q.nrows() == 0 || q.nrows() != q.ncols() {
                    return bad("quadratic form must be a nonempty square matrix");
                }
                let scale = q.amax().max(1.0);
                if (q - q.transpose()).amax() > 1e-12 * scale {
                    return bad("quadratic form must be symmetric");
                }
                let eig = q.clone().symmetric_eigen();
                if eig.eigenvalues.min() < -1e-12 * scale {
                    return bad("quadratic form must be positive semidefinite");
                }
                Ok(())
            }
        }
    }

    /// Additionally requires `0 ∈ Int(D(A))`, needed for simulation.
    pub fn validate_for_simulation(&self) -> Result<(), MonotoneError> {
        self.validate()?;
        match self {
            MonotoneOp::NormalConeBox { lower, upper } => {
                if lower.iter().zip(upper).all(|(l, u)| *l < 0.0 && 0.0 < *u) {
                    Ok(())
                } else {
                    Err(MonotoneError::ZeroNotInterior("box"))
                }
            }
            MonotoneOp::NormalConeBall { center, radius } => {
                if norm(center) < *radius {
                    Ok(())
                } else {
                    Err(MonotoneError::ZeroNotInterior("ball"))
                }
            }
            _ => Ok(()),
        }
    }

    /// Dimension the operator is tied to, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            MonotoneOp::Zero => None,
            MonotoneOp::NormalConeBox { lower, .. } => Some(lower.len()),
            MonotoneOp::NormalConeBall { center, .. } => Some(center.len()),
            MonotoneOp::SubdiffAbs { .. } => Some(1),
            MonotoneOp::SubdiffQuadratic { q } => Some(q.nrows()),
        }
    }

    pub fn check_dim(&self, n: usize) -> Result<(), MonotoneError> {
        match self.dim() {
            Some(d) if d != n => Err(MonotoneError::Dimension {
                expected: d,
                got: n,
            }),
            _ => Ok(()),
        }
    }

    pub fn is_normal_cone(&self) -> bool {
        matches!(
            self,
            MonotoneOp::NormalConeBox { .. } | MonotoneOp::NormalConeBall { .. }
        )
    }

    /// Whether `D(A)` is the whole space.
    pub fn has_full_domain(&self) -> bool {
        !self.is_normal_cone()
    }

    /// Euclidean projection onto the closure of `D(A)`.
    pub fn project(&self, z: &[f64]) -> Vec<f64> {
        let mut out = z.to_vec();
        self.project_in_place(&mut out);
        out
    }

    pub fn project_in_place(&self, z: &mut [f64]) {
        match self {
            MonotoneOp::NormalConeBox { lower, upper } => {
                for ((zi, l), u) in z.iter_mut().zip(lower).zip(upper) {
                    *zi = zi.clamp(*l, *u);
                }
            }
            MonotoneOp::NormalConeBall { center, radius } => {
                let d: Vec<f64> = z.iter().zip(center).map(|(a, c)| a - c).collect();
                let r = norm(&d);
                // points a few ulps outside are already projections
                if r > *radius * (1.0 + 4.0 * f64::EPSILON) {
                    let s = radius / r;
                    for ((zi, c), di) in z.iter_mut().zip(center).zip(&d) {
                        *zi = c + s * di;
                    }
                }
            }
            _ => {}
        }
    }

    pub fn distance_to_domain(&self, z: &[f64]) -> f64 {
        let p = self.project(z);
        let d: Vec<f64> = z.iter().zip(&p).map(|(a, b)| a - b).collect();
        norm(&d)
    }

    pub fn in_domain_closure(&self, z: &[f64]) -> bool {
        self.distance_to_domain(z) <= DOMAIN_TOL
    }

    /// The resolvent `J_λ(z) = (I + λA)⁻¹ z`.
    pub fn resolvent(&self, lambda: f64, z: &[f64]) -> Vec<f64> {
        let mut out = z.to_vec();
        self.resolvent_in_place(lambda, &mut out);
        out
    }

    pub fn resolvent_in_place(&self, lambda: f64, z: &mut [f64]) {
        debug_assert!(lambda > 0.0);
        match self {
            MonotoneOp::Zero => {}
            MonotoneOp::NormalConeBox { .. } | MonotoneOp::NormalConeBall { .. } => {
                self.project_in_place(z)
            }
            MonotoneOp::SubdiffAbs { weight } => {
                let t = lambda * weight;
                let v = z[0];
                z[0] = v.signum() * (v.abs() - t).max(0.0);
            }
            MonotoneOp::SubdiffQuadratic { q } => {
                let n = q.nrows();
                let m = DMatrix::identity(n, n) + q * lambda;
                let rhs = DVector::from_column_slice(z);
                let sol = m
                    .cholesky()
                    .expect("I + λQ is positive definite for PSD Q")
                    .solve(&rhs);
                z.copy_from_slice(sol.as_slice());
            }
        }
    }

    /// Minimal-norm element of `A(x)`, or `None` when `x ∉ D(A)`.
    pub fn minimal_section(&self, x: &[f64]) -> Option<Vec<f64>> {
        match self {
            MonotoneOp::Zero | MonotoneOp::NormalConeBox { .. } | MonotoneOp::NormalConeBall { .. } => {
                self.in_domain_closure(x).then(|| vec![0.0; x.len()])
            }
            MonotoneOp::SubdiffAbs { weight } => {
                let v = if x[0] == 0.0 { 0.0 } else { weight * x[0].signum() };
                Some(vec![v])
            }
            MonotoneOp::SubdiffQuadratic { q } => {
                Some((q * DVector::from_column_slice(x)).as_slice().to_vec())
            }
        }
    }

    /// Draws `count` pairs `(x, y)` with `y ∈ A(x)`.
    ///
    /// Normal-cone samples mix interior points (with `y = 0`) and boundary
    /// points carrying random nonnegative multiples of outward normals.
    pub fn graph_sample(&self, dim: usize, seed: u64, count: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
        assert!(self.dim().is_none_or(|d| d == dim), "dimension mismatch");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| self.sample_pair(dim, &mut rng)).collect()
    }

    fn sample_pair<R: Rng>(&self, dim: usize, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let gauss = |rng: &mut R| -> f64 { 2.0 * rng.sample::<f64, _>(StandardNormal) };
        let magnitude = |rng: &mut R| -> f64 { 2.0 * rng.sample::<f64, _>(Exp1) };
        match self {
            MonotoneOp::Zero => ((0..dim).map(|_| gauss(rng)).collect(), vec![0.0; dim]),
            MonotoneOp::NormalConeBox { lower, upper } => {
                let mut x: Vec<f64> = lower
                    .iter()
                    .zip(upper)
                    .map(|(l, u)| l + (u - l) * rng.random::<f64>())
                    .collect();
                let mut y = vec![0.0; dim];
                if rng.random_bool(2.0 / 3.0) {
                    let mut any = false;
                    for i in 0..dim {
                        if rng.random_bool(0.5) || (i == dim - 1 && !any) {
                            any = true;
                            if rng.random_bool(0.5) {
                                x[i] = upper[i];
                                y[i] = magnitude(rng);
                            } else {
                                x[i] = lower[i];
                                y[i] = -magnitude(rng);
                            }
                        }
                    }
                }
                (x, y)
            }
            MonotoneOp::NormalConeBall { center, radius } => {
                let mut u: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                let un = norm(&u);
                u.iter_mut().for_each(|v| *v /= un);
                if rng.random_bool(0.5) {
                    let t = magnitude(rng);
                    let x = center.iter().zip(&u).map(|(c, d)| c + radius * d).collect();
                    let y = u.iter().map(|d| t * d).collect();
                    (x, y)
                } else {
                    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
                    let x = center.iter().zip(&u).map(|(c, d)| c + r * d).collect();
                    (x, vec![0.0; dim])
                }
            }
            MonotoneOp::SubdiffAbs { weight } => {
                if rng.random_bool(0.25) {
                    (vec![0.0], vec![weight * (2.0 * rng.random::<f64>() - 1.0)])
                } else {
                    let x = gauss(rng);
                    (vec![x], vec![weight * x.signum()])
                }
            }
            MonotoneOp::SubdiffQuadratic { q } => {
                let x: Vec<f64> = (0..dim).map(|_| gauss(rng)).collect();
                let y = (q * DVector::from_column_slice(&x)).as_slice().to_vec();
                (x, y)
            }
        }
    }

    fn require_domain(&self, x: &[f64]) -> Result<(), MonotoneError> {
        self.check_dim(x.len())?;
        let distance = self.distance_to_domain(x);
        if distance > DOMAIN_TOL {
            Err(MonotoneError::OutsideDomain { distance })
        } else {
            Ok(())
        }
    }

    /// `A_*(x, v)`: liminf of `⟨ζ, w⟩` for `ζ ∈ A(x')`, `(x', w) → (x, v)`.
    pub fn a_lower(&self, x: &[f64], v: &[f64]) -> Result<ExtendedReal, MonotoneError> {
        self.boundary_eval(x, v, false)
    }

    /// `A^*(x, v)`: limsup counterpart of [`MonotoneOp::a_lower`].
    pub fn a_upper(&self, x: &[f64], v: &[f64]) -> Result<ExtendedReal, MonotoneError> {
        self.boundary_eval(x, v, true)
    }

    fn boundary_eval(&self, x: &[f64], v: &[f64], upper_eval: bool) -> Result<ExtendedReal, MonotoneError> {
        self.require_domain(x)?;
        // along an outward normal n the cone values are t⟨n, w⟩, t ≥ 0
        let cone = |s: f64| -> ExtendedReal {
            if upper_eval {
                if s < 0.0 {
                    ExtendedReal::Finite(0.0)
                } else {
                    ExtendedReal::PosInf
                }
            } else if s > 0.0 {
                ExtendedReal::Finite(0.0)
            } else {
                ExtendedReal::NegInf
            }
        };
        let worst = if upper_eval {
            ExtendedReal::PosInf
        } else {
            ExtendedReal::NegInf
        };
        match self {
            MonotoneOp::Zero => Ok(ExtendedReal::Finite(0.0)),
            MonotoneOp::NormalConeBox { lower, upper } => {
                for i in 0..x.len() {
                    if upper[i] - x[i] <= DOMAIN_TOL && cone(v[i]) == worst {
                        return Ok(worst);
                    }
                    if x[i] - lower[i] <= DOMAIN_TOL && cone(-v[i]) == worst {
                        return Ok(worst);
                    }
                }
                Ok(ExtendedReal::Finite(0.0))
            }
            MonotoneOp::NormalConeBall { center, radius } => {
                let d: Vec<f64> = x.iter().zip(center).map(|(a, c)| a - c).collect();
                let r = norm(&d);
                if r >= radius - DOMAIN_TOL {
                    Ok(cone(dot(&d, v) / r))
                } else {
                    Ok(ExtendedReal::Finite(0.0))
                }
            }
            MonotoneOp::SubdiffAbs { weight } => {
                if x[0].abs() <= DOMAIN_TOL {
                    let bound = weight * v[0].abs();
                    Ok(ExtendedReal::Finite(if upper_eval { bound } else { -bound }))
                } else {
                    Ok(ExtendedReal::Finite(weight * x[0].signum() * v[0]))
                }
            }
            MonotoneOp::SubdiffQuadratic { q } => {
                let qx = q * DVector::from_column_slice(x);
                Ok(ExtendedReal::Finite(dot(qx.as_slice(), v)))
            }
        }
    }

    /// Distance from an interior point `a` to the boundary of a normal-cone domain.
    pub fn interior_margin(&self, a: &[f64]) -> Result<f64, MonotoneError> {
        let margin = match self {
            MonotoneOp::NormalConeBox { lower, upper } => a
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(ai, (l, u))| (ai - l).min(u - ai))
                .fold(f64::INFINITY, f64::min),
            MonotoneOp::NormalConeBall { center, radius } => {
                let d: Vec<f64> = a.iter().zip(center).map(|(x, c)| x - c).collect();
                radius - norm(&d)
            }
            _ => return Err(MonotoneError::NotNormalCone),
        };
        if margin > 0.0 {
            Ok(margin)
        } else {
            Err(MonotoneError::NotInterior)
        }
    }
}

/// JSON descriptor, e.g. `{"kind":"box","lower":[-1],"upper":[1]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorDesc {
    Zero,
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    Abs { weight: f64 },
    Quadratic { q: Vec<Vec<f64>> },
}

impl TryFrom<&OperatorDesc> for MonotoneOp {
    type Error = MonotoneError;

    fn try_from(desc: &OperatorDesc) -> Result<Self, Self::Error> {
        match desc {
            OperatorDesc::Zero => Ok(MonotoneOp::Zero),
            OperatorDesc::Box { lower, upper } => MonotoneOp::normal_cone_box(lower.clone(), upper.clone()),
            OperatorDesc::Ball { center, radius } => MonotoneOp::normal_cone_ball(center.clone(), *radius),
            OperatorDesc::Abs { weight } => MonotoneOp::subdiff_abs(*weight),
            OperatorDesc::Quadratic { q } => {
                let n = q.len();
                if q.iter().any(|row| row.len() != n) {
                    return Err(MonotoneError::Invalid("quadratic form must be square".into()));
                }
                let flat: Vec<f64> = q.iter().flatten().copied().collect();
                MonotoneOp::subdiff_quadratic(DMatrix::from_row_slice(n, n, &flat))
            }
        }
    }
}

impl From<&MonotoneOp> for OperatorDesc {
    fn from(op: &MonotoneOp) -> Self {
        match op {
            MonotoneOp::Zero => OperatorDesc::Zero,
            MonotoneOp::NormalConeBox { lower, upper } => OperatorDesc::Box {
                lower: lower.clone(),
                upper: upper.clone(),
            },
            MonotoneOp::NormalConeBall { center, radius } => OperatorDesc::Ball {
                center: center.clone(),
                radius: *radius,
            },
            MonotoneOp::SubdiffAbs { weight } => OperatorDesc::Abs { weight: *weight },
            MonotoneOp::SubdiffQuadratic { q } => OperatorDesc::Quadratic {
                q: q.row_iter().map(|r| r.iter().copied().collect()).collect(),
            },
        }
    }
}
