//! Runtime verifiers for discretised solutions and for the structural
//! assumptions on the fast coefficients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{norm, SimError, SlowFastPath, SystemSpec};
use crate::expr::CoeffField;
use crate::monotone::{MonotoneError, MonotoneOp};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViReport {
    pub max_violation: f64,
    /// Largest `|X − x|·(|dK| + |y|dt)` seen; sets the tolerance.
    pub scale: f64,
    pub pass: bool,
}

/// Discrete monotonicity pairing: for every step `k` and graph pair `(x, y)`,
/// `⟨X_{k+1} − x, dK_k − y dt⟩ ≥ 0` since `dK_k/dt ∈ A(X_{k+1})`.
pub fn verify_discrete_vi(path: &SlowFastPath, samples: &[(Vec<f64>, Vec<f64>)]) -> ViReport {
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    let mut diff = Vec::new();
    let mut incr = Vec::new();
    for (k, dk) in path.dk.iter().enumerate() {
        let dt = path.dt(k);
        let xk = &path.x[k + 1];
        for (x, y) in samples {
            diff.clear();
            diff.extend(xk.iter().zip(x).map(|(a, b)| a - b));
            incr.clear();
            incr.extend(dk.iter().zip(y).map(|(d, yi)| d - yi * dt));
            worst = worst.max(-dot(&diff, &incr));
            scale = scale.max(norm(&diff) * (norm(dk) + norm(y) * dt));
        }
    }
    ViReport {
        max_violation: worst,
        scale,
        pass: worst <= 1e-8 * (1.0 + scale),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InteriorReport {
    /// `Σ⟨X_{k+1} − a, dK_k⟩`
    pub lhs: f64,
    /// `M₁·Σ|dK_k|` with `M₁` the distance from `a` to the boundary.
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
}

/// Interior-point estimate for normal-cone operators.
pub fn verify_interior_estimate(path: &SlowFastPath, op: &MonotoneOp, a: &[f64]) -> Result<InteriorReport, MonotoneError> {
    if !op.is_normal_cone() {
        return Err(MonotoneError::NotNormalCone);
    }
    op.check_dim(a.len())?;
    let margin = op.interior_margin(a)?;
    let mut lhs = 0.0;
    let mut tv = 0.0;
    for (k, dk) in path.dk.iter().enumerate() {
        let xk = &path.x[k + 1];
        lhs += xk.iter().zip(a).zip(dk).map(|((x, ai), d)| (x - ai) * d).sum::<f64>();
        tv += norm(dk);
    }
    let rhs = margin * tv;
    Ok(InteriorReport {
        lhs,
        rhs,
        margin,
        pass: lhs >= rhs - 1e-8,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DissipativityReport {
    pub beta_hat: f64,
    pub l_hat: f64,
    /// `β̂ − 2L̂`, the contraction rate of the frozen equation when positive.
    pub alpha_hat: f64,
    /// Number of sampled triples with `2⟨Δy,Δb₂⟩ + ‖Δσ₂‖² > 0`.
    pub violations: usize,
    /// `β̂ ≤ 2L̂`.
    pub flagged: bool,
    pub samples: usize,
}

impl DissipativityReport {
    pub fn passed(&self) -> bool {
        !self.flagged
    }
}

/// Sampled estimates of the monotonicity constant `β` and the Lipschitz
/// constant of `(b₂, σ₂)`, with states drawn uniformly from the cube of
/// half-width `radius` around `(x₀, y₀)`.
pub fn verify_dissipativity_in(spec: &SystemSpec, sample_count: usize, seed: u64, radius: f64) -> Result<DissipativityReport, SimError> {
    if sample_count < 100 {
        return Err(SimError::InvalidConfig("dissipativity probe needs at least 100 samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |center: &[f64]| -> Vec<f64> {
        center.iter().map(|c| c + radius * (2.0 * rng.random::<f64>() - 1.0)).collect()
    };
    let mut beta = f64::INFINITY;
    let mut lip = 0.0f64;
    let mut violations = 0;
    for s in 0..sample_count {
        let x1 = draw(&spec.x0);
        // half the samples share x so the fast-variable constant is probed sharply
        let x2 = if s % 2 == 0 { x1.clone() } else { draw(&spec.x0) };
        let y1 = draw(&spec.y0);
        let y2 = draw(&spec.y0);
        let b_1 = spec.b2.eval(&x1, &y1)?;
        let b_2 = spec.b2.eval(&x2, &y2)?;
        let s_1 = spec.sigma2.eval(&x1, &y1)?;
        let s_2 = spec.sigma2.eval(&x2, &y2)?;
        let dy: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| a - b).collect();
        let dx2: f64 = x1.iter().zip(&x2).map(|(a, b)| (a - b).powi(2)).sum();
        let db: Vec<f64> = b_1.iter().zip(&b_2).map(|(a, b)| a - b).collect();
        let ds2: f64 = s_1.iter().zip(&s_2).map(|(a, b)| (a - b).powi(2)).sum();
        let dy2 = dot(&dy, &dy);
        if s % 2 == 0 && dy2 > 0.0 {
            let form = 2.0 * dot(&dy, &db) + ds2;
            if form > 0.0 {
                violations += 1;
            }
            beta = beta.min(-form / dy2);
        }
        if dx2 + dy2 > 0.0 {
            lip = lip.max((dot(&db, &db) + ds2) / (dx2 + dy2));
        }
    }
    Ok(DissipativityReport {
        beta_hat: beta,
        l_hat: lip,
        alpha_hat: beta - 2.0 * lip,
        violations,
        flagged: beta <= 2.0 * lip,
        samples: sample_count,
    })
}

/// [`verify_dissipativity_in`] on the cube of half-width 5.
pub fn verify_dissipativity(spec: &SystemSpec, sample_count: usize, seed: u64) -> Result<DissipativityReport, SimError> {
    verify_dissipativity_in(spec, sample_count, seed, 5.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovOptions {
    /// Finite-difference step for the generator.
    pub h: f64,
    /// Points within this distance of a detected kink are skipped.
    pub exclusion_radius: f64,
    /// Relative tolerance on the violation.
    pub tol: f64,
}

impl Default for LyapunovOptions {
    fn default() -> Self {
        LyapunovOptions {
            h: 1e-4,
            exclusion_radius: 1e-3,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovReport {
    /// Largest `ℒζ + L₁ζ − L₂·1_B` over checked points, scaled by `1 + |ζ| + |ℒζ|`.
    pub max_violation: f64,
    /// Point attaining it, `(x, y)`.
    pub worst_point: Option<(Vec<f64>, Vec<f64>)>,
    pub checked: usize,
    pub excluded: usize,
    pub pass: bool,
}

/// Generator of the frozen fast equation applied to `ζ` by central
/// differences: `⟨b₂, ∇ζ⟩ + ½ tr(σ₂σ₂ᵀ ∇²ζ)`.
pub fn frozen_generator(spec: &SystemSpec, zeta: &CoeffField, x: &[f64], y: &[f64], h: f64) -> Result<f64, SimError> {
    let m = spec.m;
    let z = |yy: &[f64]| -> Result<f64, SimError> { Ok(zeta.eval(x, yy)?[0]) };
    let b = spec.b2.eval(x, y)?;
    let s = spec.sigma2.eval(x, y)?;
    let d2 = spec.d2;
    let z0 = z(y)?;
    let mut yy = y.to_vec();
    let mut out = 0.0;
    for i in 0..m {
        yy[i] = y[i] + h;
        let zp = z(&yy)?;
        yy[i] = y[i] - h;
        let zm = z(&yy)?;
        yy[i] = y[i];
        let grad = (zp - zm) / (2.0 * h);
        let hess_ii = (zp - 2.0 * z0 + zm) / (h * h);
        let a_ii: f64 = (0..d2).map(|c| s[i * d2 + c].powi(2)).sum();
        out += b[i] * grad + 0.5 * a_ii * hess_ii;
        for j in (i + 1)..m {
            let a_ij: f64 = (0..d2).map(|c| s[i * d2 + c] * s[j * d2 + c]).sum();
            if a_ij == 0.0 {
                continue;
            }
            let mut corner = |si: f64, sj: f64| -> Result<f64, SimError> {
                yy[i] = y[i] + si * h;
                yy[j] = y[j] + sj * h;
                let v = z(&yy)?;
                yy[i] = y[i];
                yy[j] = y[j];
                Ok(v)
            };
            let mixed = (corner(1.0, 1.0)? - corner(1.0, -1.0)? - corner(-1.0, 1.0)? + corner(-1.0, -1.0)?) / (4.0 * h * h);
            out += a_ij * mixed;
        }
    }
    Ok(out)
}

/// Whether `ζ` looks non-smooth at `y`: second differences at steps `h` and
/// `2h` disagree by more than a smooth function allows.
fn looks_kinked(zeta: &CoeffField, x: &[f64], y: &[f64], h: f64) -> Result<bool, SimError> {
    let z = |yy: &[f64]| -> Result<f64, SimError> { Ok(zeta.eval(x, yy)?[0]) };
    let z0 = z(y)?;
    let mut yy = y.to_vec();
    for i in 0..y.len() {
        let mut at = |off: f64| -> Result<f64, SimError> {
            yy[i] = y[i] + off;
            let v = z(&yy)?;
            yy[i] = y[i];
            Ok(v)
        };
        let d1 = (at(h)? - 2.0 * z0 + at(-h)?) / (h * h);
        let d2 = (at(2.0 * h)? - 2.0 * z0 + at(-2.0 * h)?) / (4.0 * h * h);
        let noise = 1e3 * f64::EPSILON * z0.abs().max(1.0) / (h * h);
        if (d1 - d2).abs() > 1e-3 * (1.0 + d1.abs()) + noise {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Checks `ℒˣζ(y) ≤ −L₁ζ(y) + L₂·1_B(y)` on every `(x, y)` grid point, where
/// `B` is the closed ball `(center, radius)` in the fast variable.
pub fn verify_lyapunov(
    spec: &SystemSpec,
    zeta: &CoeffField,
    grid: &[(Vec<f64>, Vec<f64>)],
    l1: f64,
    l2: f64,
    ball: (&[f64], f64),
    opts: LyapunovOptions,
) -> Result<LyapunovReport, SimError> {
    if zeta.shape().len() != 1 {
        return Err(SimError::InvalidSpec("Lyapunov function must be scalar".into()));
    }
    let mut kinks: Vec<&[f64]> = Vec::new();
    for (x, y) in grid {
        if looks_kinked(zeta, x, y, opts.h)? {
            kinks.push(y);
        }
    }
    let near_kink = |y: &[f64]| {
        kinks.iter().any(|k| {
            let d: f64 = k.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
            d.sqrt() <= opts.exclusion_radius
        })
    };
    let (center, radius) = ball;
    let mut worst = f64::NEG_INFINITY;
    let mut worst_point = None;
    let (mut checked, mut excluded) = (0, 0);
    for (x, y) in grid {
        if near_kink(y) {
            excluded += 1;
            continue;
        }
        checked += 1;
        let gen = frozen_generator(spec, zeta, x, y, opts.h)?;
        let z = zeta.eval(x, y)?[0];
        let dist: f64 = y.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let indicator = if dist <= radius { 1.0 } else { 0.0 };
        let v = (gen + l1 * z - l2 * indicator) / (1.0 + z.abs() + gen.abs());
        if v > worst {
            worst = v;
            worst_point = Some((x.clone(), y.clone()));
        }
    }
    Ok(LyapunovReport {
        max_violation: worst,
        worst_point,
        checked,
        excluded,
        pass: checked > 0 && worst <= opts.tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{Dims, Params};
    use crate::simulate::{run_path, ScaleParams, SimConfig};

    fn spec(b1: &str, b2: &str, s2: &str, op: MonotoneOp) -> SystemSpec {
        let d = Dims::new(1, 1);
        let p = Params::new();
        SystemSpec::new(
            CoeffField::vector(&[b1], d, &p).unwrap(),
            CoeffField::matrix(&[vec!["0.3"]], d, &p).unwrap(),
            CoeffField::vector(&[b2], d, &p).unwrap(),
            CoeffField::matrix(&[vec![s2]], d, &p).unwrap(),
            op,
            vec![0.0],
            vec![0.0],
        )
        .unwrap()
    }

    fn unit_box() -> MonotoneOp {
        MonotoneOp::normal_cone_box(vec![-1.0], vec![1.0]).unwrap()
    }

    fn pushed_path() -> SlowFastPath {
        let s = spec("3", "-y0", "1", unit_box());
        let cfg = SimConfig::new(0.001, 2.0, 11, 1);
        run_path(&s, ScaleParams::new(0.5, 0.05).unwrap(), &cfg, 0).unwrap()
    }

    #[test]
    fn vi_zero_operator_is_exact() {
        let s = spec("1", "-y0", "1", MonotoneOp::Zero);
        let cfg = SimConfig::new(0.001, 0.5, 2, 1);
        let p = run_path(&s, ScaleParams::new(0.5, 0.05).unwrap(), &cfg, 0).unwrap();
        let samples = MonotoneOp::Zero.graph_sample(1, 1, 20);
        assert_eq!(verify_discrete_vi(&p, &samples).max_violation, 0.0);
    }

    #[test]
    fn vi_box_pass_and_corrupted_fail() {
        let mut p = pushed_path();
        assert!(p.total_variation() > 0.1);
        let samples = unit_box().graph_sample(1, 5, 50);
        assert!(verify_discrete_vi(&p, &samples).pass);
        p.dk.iter_mut().for_each(|d| d[0] = -d[0]);
        assert!(!verify_discrete_vi(&p, &samples).pass);
    }

    #[test]
    fn interior_estimate_box() {
        let p = pushed_path();
        let r = verify_interior_estimate(&p, &unit_box(), &[0.0]).unwrap();
        assert!(r.pass, "{r:?}");
        assert!((r.margin - 1.0).abs() < 1e-15);
        assert!(verify_interior_estimate(&p, &unit_box(), &[1.0]).is_err());
        assert!(verify_interior_estimate(&p, &MonotoneOp::Zero, &[0.0]).is_err());
    }

    #[test]
    fn dissipativity_linear_and_explosive() {
        let r = verify_dissipativity(&spec("0", "0.3 - y0/2", "0.5", MonotoneOp::Zero), 200, 1).unwrap();
        assert!((r.beta_hat - 1.0).abs() < 1e-9);
        assert!((r.l_hat - 0.25).abs() < 1e-9);
        assert!(!r.flagged);
        let r = verify_dissipativity(&spec("0", "y0", "0.5", MonotoneOp::Zero), 200, 1).unwrap();
        assert!(r.flagged && r.beta_hat < 0.0);
    }

    #[test]
    fn lyapunov_constant_fails_quadratic_passes() {
        let s = spec("0", "0.3 - y0/2", "0.5", MonotoneOp::Zero);
        let d = Dims::new(1, 1);
        let grid: Vec<_> = (0..=80).map(|i| (vec![0.0], vec![-4.0 + 0.1 * i as f64])).collect();
        let one = CoeffField::scalar("1", d, &Params::new()).unwrap();
        let r = verify_lyapunov(&s, &one, &grid, 0.5, 0.0, (&[0.6], 2.0), LyapunovOptions::default()).unwrap();
        assert!(!r.pass);
        let sq = CoeffField::scalar("y0^2", d, &Params::new()).unwrap();
        let r = verify_lyapunov(&s, &sq, &grid, 0.5, 0.5, (&[0.0], 2.0), LyapunovOptions::default()).unwrap();
        assert!(r.pass, "{r:?}");
        assert_eq!(r.excluded, 0);
    }
}
