//! Frozen invariant measures, averaged coefficients and the cell-problem
//! corrector.
//!
//! For a frozen slow state `x` the fast equation `dY = b₂(x,Y)dt + σ₂(x,Y)dW`
//! has a unique invariant law `μˣ` under the dissipativity assumption. The
//! averaged coefficients are
//!
//! ```text
//! b̄₁(x) = ∫ b₁(x,y) μˣ(dy),   ā₁(x) = ∫ σ₁σ₁ᵀ(x,y) μˣ(dy),   ā₁ = σ̄₁σ̄₁
//! ```
//!
//! with `σ̄₁` the symmetric PSD square root.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimate::{mean_stderr, BatchMeans, Estimate};
use crate::expr::Shape;
use crate::simulate::{verify_dissipativity, DissipativityReport, FrozenStepper, SimError, SystemSpec};

/// Eigenvalues above `-PSD_TOL` are treated as rounding noise.
pub const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AveragingError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("dissipativity check failed (beta_hat = {beta_hat:.4}, L_hat = {l_hat:.4}); pass the override flag to proceed")]
    NotDissipative { beta_hat: f64, l_hat: f64 },
    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    Asymmetric(f64),
    #[error("matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPsd(f64),
    #[error("no positive mixing rate available (alpha_hat = {0:.4})")]
    NoMixingRate(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Symmetric PSD square root by spectral decomposition.
pub fn sqrt_psd(a: &DMatrix<f64>) -> Result<DMatrix<f64>, AveragingError> {
    if !a.is_square() {
        return Err(AveragingError::InvalidConfig("matrix must be square".into()));
    }
    let scale = a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let asym = (a - a.transpose()).amax();
    if asym > 1e-12 * scale {
        return Err(AveragingError::Asymmetric(asym));
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -PSD_TOL {
        return Err(AveragingError::NotPsd(min));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    let r = v * DMatrix::from_diagonal(&roots) * v.transpose();
    Ok((&r + r.transpose()) * 0.5)
}

fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(a.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragingConfig {
    /// Euler step of the frozen equation.
    pub dt: f64,
    /// Burn-in time; `None` means `10/α̂` from the dissipativity probe.
    pub burn_in: Option<f64>,
    /// Sampling time after burn-in.
    pub horizon: f64,
    /// Keep every `thin`-th state.
    pub thin: usize,
    /// Number of batches for batch-means errors.
    pub batches: usize,
    pub seed: u64,
    /// Proceed even when the dissipativity probe fails.
    pub allow_non_dissipative: bool,
}

impl Default for AveragingConfig {
    fn default() -> Self {
        AveragingConfig {
            dt: 0.005,
            burn_in: None,
            horizon: 2000.0,
            thin: 1,
            batches: 50,
            seed: 0,
            allow_non_dissipative: false,
        }
    }
}

/// Checks the dissipativity precondition and returns the probe report.
pub fn precondition(spec: &SystemSpec, cfg: &AveragingConfig) -> Result<DissipativityReport, AveragingError> {
    let report = verify_dissipativity(spec, 1000, cfg.seed ^ 0x9e37_79b9_7f4a_7c15)?;
    if report.flagged && !cfg.allow_non_dissipative {
        return Err(AveragingError::NotDissipative {
            beta_hat: report.beta_hat,
            l_hat: report.l_hat,
        });
    }
    Ok(report)
}

fn burn_in_time(cfg: &AveragingConfig, alpha_hat: f64) -> Result<f64, AveragingError> {
    match cfg.burn_in {
        Some(b) if b >= 0.0 => Ok(b),
        Some(b) => Err(AveragingError::InvalidConfig(format!("burn-in {b} must be nonnegative"))),
        None if alpha_hat > 0.0 => Ok(10.0 / alpha_hat),
        None => Err(AveragingError::NoMixingRate(alpha_hat)),
    }
}

/// Runs one long frozen trajectory and feeds `f(y, out)` into batch means.
fn ergodic_average(
    spec: &SystemSpec,
    x: &[f64],
    cfg: &AveragingConfig,
    burn_in: f64,
    dim: usize,
    mut f: impl FnMut(&[f64], &mut [f64]) -> Result<(), SimError>,
) -> Result<BatchMeans, AveragingError> {
    if !(cfg.dt > 0.0) || cfg.thin == 0 || cfg.batches < 2 {
        return Err(AveragingError::InvalidConfig("need dt > 0, thin ≥ 1, batches ≥ 2".into()));
    }
    if x.len() != spec.n {
        return Err(AveragingError::InvalidConfig("slow state has wrong dimension".into()));
    }
    let burn_steps = (burn_in / cfg.dt).ceil() as usize;
    let samples = (cfg.horizon / cfg.dt) as usize / cfg.thin;
    let batch_size = samples / cfg.batches;
    if batch_size == 0 {
        return Err(AveragingError::InvalidConfig("horizon too short for the batch count".into()));
    }
    let mut stepper = FrozenStepper::new(spec, x, &spec.y0, cfg.dt, cfg.seed, 0);
    for _ in 0..burn_steps {
        stepper.step()?;
    }
    let mut bm = BatchMeans::new(dim, batch_size);
    let mut buf = vec![0.0; dim];
    for _ in 0..batch_size * cfg.batches {
        for _ in 0..cfg.thin {
            stepper.step()?;
        }
        f(stepper.state(), &mut buf)?;
        bm.push(&buf);
    }
    Ok(bm)
}

/// Moments of the frozen invariant measure `μˣ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantMeasureEstimate {
    pub x: Vec<f64>,
    pub mean: Estimate,
    /// Row-major `m×m`.
    pub covariance: Estimate,
    /// `∫|y|²μˣ(dy)`.
    pub second_moment: Estimate,
    /// Effective sample size of the first coordinate.
    pub n_effective: f64,
    pub burn_in: f64,
}

pub fn estimate_invariant(spec: &SystemSpec, x: &[f64], cfg: &AveragingConfig) -> Result<InvariantMeasureEstimate, AveragingError> {
    let report = precondition(spec, cfg)?;
    let burn_in = burn_in_time(cfg, report.alpha_hat)?;
    let m = spec.m;
    let bm = ergodic_average(spec, x, cfg, burn_in, m + m * m, |y, out| {
        out[..m].copy_from_slice(y);
        for i in 0..m {
            for j in 0..m {
                out[m + i * m + j] = y[i] * y[j];
            }
        }
        Ok(())
    })?;
    let all = bm.finish(Shape::Vector(m + m * m));
    let mean = Estimate {
        shape: Shape::Vector(m),
        value: all.value[..m].to_vec(),
        stderr: all.stderr[..m].to_vec(),
        n_samples: all.n_samples,
    };
    // covariance errors from the spread of per-batch covariances
    let batches = bm.batches();
    let per_batch: Vec<Vec<f64>> = batches
        .iter()
        .map(|b| {
            let mut c = vec![0.0; m * m];
            for i in 0..m {
                for j in 0..m {
                    c[i * m + j] = b[m + i * m + j] - b[i] * b[j];
                }
            }
            c
        })
        .collect();
    let mut cov = vec![0.0; m * m];
    let mut cov_err = vec![0.0; m * m];
    for k in 0..m * m {
        let i = k / m;
        let j = k % m;
        cov[k] = all.value[m + k] - all.value[i] * all.value[j];
        let col: Vec<f64> = per_batch.iter().map(|c| c[k]).collect();
        cov_err[k] = mean_stderr(&col).1;
    }
    let second: Vec<f64> = batches.iter().map(|b| (0..m).map(|i| b[m + i * m + i]).sum()).collect();
    let (sm, sm_err) = mean_stderr(&second);
    let iid_var = cov[0].max(0.0);
    let n_effective = if mean.stderr[0] > 0.0 {
        iid_var / mean.stderr[0].powi(2)
    } else {
        all.n_samples as f64
    };
    Ok(InvariantMeasureEstimate {
        x: x.to_vec(),
        mean,
        covariance: Estimate {
            shape: Shape::Matrix(m, m),
            value: cov,
            stderr: cov_err,
            n_samples: all.n_samples,
        },
        second_moment: Estimate::scalar(sm, sm_err, all.n_samples),
        n_effective,
        burn_in,
    })
}

/// Largest ratio `∫|y|²μˣ(dy) / (1 + |x|²)` over the given slow states.
pub fn second_moment_constant(spec: &SystemSpec, xs: &[Vec<f64>], cfg: &AveragingConfig) -> Result<f64, AveragingError> {
    let ests: Vec<_> = xs
        .par_iter()
        .map(|x| estimate_invariant(spec, x, cfg))
        .collect::<Result<_, _>>()?;
    Ok(ests
        .iter()
        .map(|e| e.second_moment.get() / (1.0 + e.x.iter().map(|v| v * v).sum::<f64>()))
        .fold(0.0, f64::max))
}

/// Averaged coefficients at one slow state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AveragedPoint {
    pub x: Vec<f64>,
    pub bbar: Estimate,
    /// Symmetrised, row-major `n×n`.
    pub abar: Estimate,
    /// Row-major `n×n`, `σ̄₁σ̄₁ = ā₁`.
    pub sigbar: Vec<f64>,
}

fn to_matrix(n: usize, v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, n, v)
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// Ergodic averages of `b₁(x,·)` and `σ₁σ₁ᵀ(x,·)` along one frozen path.
pub fn average_at(spec: &SystemSpec, x: &[f64], cfg: &AveragingConfig) -> Result<AveragedPoint, AveragingError> {
    let n = spec.n;
    let d1 = spec.d1;
    // y-free coefficients need no sampling
    if !spec.b1.uses_y() && !spec.sigma1.uses_y() {
        let b = spec.b1.eval(x, &spec.y0).map_err(SimError::from)?;
        let s = spec.sigma1.eval(x, &spec.y0).map_err(SimError::from)?;
        let s = DMatrix::from_row_slice(n, d1, &s);
        let a = &s * s.transpose();
        return finish_point(x, Estimate::exact(Shape::Vector(n), b), Estimate::exact(Shape::Matrix(n, n), row_major(&a)));
    }
    let report = precondition(spec, cfg)?;
    let burn_in = burn_in_time(cfg, report.alpha_hat)?;
    let mut b = vec![0.0; n];
    let mut s = vec![0.0; n * d1];
    let bm = ergodic_average(spec, x, cfg, burn_in, n + n * n, |y, out| {
        spec.b1.eval_into(x, y, &mut b)?;
        spec.sigma1.eval_into(x, y, &mut s)?;
        out[..n].copy_from_slice(&b);
        for i in 0..n {
            for j in 0..n {
                out[n + i * n + j] = (0..d1).map(|c| s[i * d1 + c] * s[j * d1 + c]).sum();
            }
        }
        Ok(())
    })?;
    let all = bm.finish(Shape::Vector(n + n * n));
    let bbar = Estimate {
        shape: Shape::Vector(n),
        value: all.value[..n].to_vec(),
        stderr: all.stderr[..n].to_vec(),
        n_samples: all.n_samples,
    };
    let abar = Estimate {
        shape: Shape::Matrix(n, n),
        value: all.value[n..].to_vec(),
        stderr: all.stderr[n..].to_vec(),
        n_samples: all.n_samples,
    };
    finish_point(x, bbar, abar)
}

fn finish_point(x: &[f64], bbar: Estimate, mut abar: Estimate) -> Result<AveragedPoint, AveragingError> {
    let n = bbar.value.len();
    let a = to_matrix(n, &abar.value);
    let a = (&a + a.transpose()) * 0.5;
    let min = min_eigenvalue(&a);
    if min < -PSD_TOL {
        return Err(AveragingError::NotPsd(min));
    }
    abar.value = row_major(&a);
    let sig = sqrt_psd(&a)?;
    Ok(AveragedPoint {
        x: x.to_vec(),
        bbar,
        abar,
        sigbar: row_major(&sig),
    })
}

/// `b̄₁(x)` with batch-means standard errors.
pub fn averaged_drift(spec: &SystemSpec, x: &[f64], cfg: &AveragingConfig) -> Result<Estimate, AveragingError> {
    Ok(average_at(spec, x, cfg)?.bbar)
}

/// `ā₁(x)`, symmetrised and checked for positive semidefiniteness.
pub fn averaged_diffusion(spec: &SystemSpec, x: &[f64], cfg: &AveragingConfig) -> Result<Estimate, AveragingError> {
    Ok(average_at(spec, x, cfg)?.abar)
}

/// Evaluation map `x ↦ (b̄₁(x), ā₁(x), σ̄₁(x))`.
///
/// Either constant in `x`, or a one-dimensional table interpolated linearly
/// and held constant beyond its end nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedCoeffs {
    n: usize,
    repr: Repr,
}

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    Constant { bbar: Vec<f64>, abar: Vec<f64>, sigbar: Vec<f64> },
    Table { xs: Vec<f64>, bbar: Vec<f64>, abar: Vec<f64> },
}

impl AveragedCoeffs {
    /// Constant coefficients; `abar` row-major `n×n`.
    pub fn constant(bbar: Vec<f64>, abar: Vec<f64>) -> Result<Self, AveragingError> {
        let n = bbar.len();
        if abar.len() != n * n {
            return Err(AveragingError::InvalidConfig("abar must be n×n".into()));
        }
        let sig = sqrt_psd(&to_matrix(n, &abar))?;
        Ok(AveragedCoeffs {
            n,
            repr: Repr::Constant {
                bbar,
                abar,
                sigbar: row_major(&sig),
            },
        })
    }

    /// 1D table from nodes `xs` (strictly increasing).
    pub fn table_1d(xs: Vec<f64>, bbar: Vec<f64>, abar: Vec<f64>) -> Result<Self, AveragingError> {
        if xs.is_empty() || xs.len() != bbar.len() || xs.len() != abar.len() {
            return Err(AveragingError::InvalidConfig("table columns must have equal nonzero length".into()));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(AveragingError::InvalidConfig("table nodes must be strictly increasing".into()));
        }
        if let Some(a) = abar.iter().find(|a| **a < -PSD_TOL) {
            return Err(AveragingError::NotPsd(*a));
        }
        Ok(AveragedCoeffs {
            n: 1,
            repr: Repr::Table { xs, bbar, abar },
        })
    }

    pub fn from_point(p: &AveragedPoint) -> Result<Self, AveragingError> {
        AveragedCoeffs::constant(p.bbar.value.clone(), p.abar.value.clone())
    }

    /// Estimates the coefficients of `spec`. When nothing depends on the slow
    /// state a single point suffices; otherwise `grid` supplies the 1D nodes.
    pub fn estimate(spec: &SystemSpec, cfg: &AveragingConfig, grid: Option<&[f64]>) -> Result<Self, AveragingError> {
        let x_free = !spec.b1.uses_x() && !spec.sigma1.uses_x() && !spec.b2.uses_x() && !spec.sigma2.uses_x();
        if x_free {
            return AveragedCoeffs::from_point(&average_at(spec, &spec.x0, cfg)?);
        }
        let Some(xs) = grid else {
            return Err(AveragingError::InvalidConfig("x-dependent coefficients need an averaging grid".into()));
        };
        if spec.n != 1 {
            return Err(AveragingError::InvalidConfig("tabulated averages support n = 1 only".into()));
        }
        let pts: Vec<AveragedPoint> = xs
            .par_iter()
            .map(|x| average_at(spec, &[*x], cfg))
            .collect::<Result<_, _>>()?;
        AveragedCoeffs::table_1d(
            xs.to_vec(),
            pts.iter().map(|p| p.bbar.value[0]).collect(),
            pts.iter().map(|p| p.abar.value[0]).collect(),
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.repr, Repr::Constant { .. })
    }

    fn interp(xs: &[f64], v: &[f64], x: f64) -> f64 {
        if x <= xs[0] {
            return v[0];
        }
        if x >= xs[xs.len() - 1] {
            return v[v.len() - 1];
        }
        let k = xs.partition_point(|t| *t <= x) - 1;
        let w = (x - xs[k]) / (xs[k + 1] - xs[k]);
        v[k] * (1.0 - w) + v[k + 1] * w
    }

    pub fn bbar(&self, x: &[f64]) -> Vec<f64> {
        match &self.repr {
            Repr::Constant { bbar, .. } => bbar.clone(),
            Repr::Table { xs, bbar, .. } => vec![Self::interp(xs, bbar, x[0])],
        }
    }

    /// Row-major `n×n`.
    pub fn abar(&self, x: &[f64]) -> Vec<f64> {
        match &self.repr {
            Repr::Constant { abar, .. } => abar.clone(),
            Repr::Table { xs, abar, .. } => vec![Self::interp(xs, abar, x[0]).max(0.0)],
        }
    }

    /// Row-major `n×n`.
    pub fn sigbar(&self, x: &[f64]) -> Vec<f64> {
        match &self.repr {
            Repr::Constant { sigbar, .. } => sigbar.clone(),
            Repr::Table { .. } => vec![self.abar(x)[0].sqrt()],
        }
    }

    /// `H̄(x,p) = ⟨b̄₁(x),p⟩ − ½⟨ā₁(x)p,p⟩`.
    pub fn hamiltonian(&self, x: &[f64], p: &[f64]) -> f64 {
        let n = self.n;
        let b = self.bbar(x);
        let a = self.abar(x);
        let lin: f64 = b.iter().zip(p).map(|(bi, pi)| bi * pi).sum();
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += p[i] * a[i * n + j] * p[j];
            }
        }
        lin - 0.5 * quad
    }

    /// Sup of `|b̄₁|` and `‖ā₁‖` at the table nodes or the constant values.
    pub fn bounds(&self) -> (f64, f64) {
        match &self.repr {
            Repr::Constant { bbar, abar, .. } => (
                bbar.iter().map(|v| v * v).sum::<f64>().sqrt(),
                abar.iter().map(|v| v * v).sum::<f64>().sqrt(),
            ),
            Repr::Table { bbar, abar, .. } => (
                bbar.iter().fold(0.0f64, |m, v| m.max(v.abs())),
                abar.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzReport {
    pub c_hat: f64,
    /// Standard error of the maximising ratio.
    pub c_stderr: f64,
    pub ratios: Vec<f64>,
}

/// Ratios `(|Δb̄₁| + ‖Δā₁‖_F)/|Δx|` over slow-state pairs. Both members of a
/// pair share the frozen noise.
pub fn lipschitz_probe(spec: &SystemSpec, pairs: &[(Vec<f64>, Vec<f64>)], cfg: &AveragingConfig) -> Result<LipschitzReport, AveragingError> {
    let rows: Vec<(f64, f64)> = pairs
        .par_iter()
        .map(|(x1, x2)| {
            for x in [x1, x2] {
                if !spec.op.in_domain_closure(x) {
                    return Err(AveragingError::InvalidConfig("probe point outside the domain closure".into()));
                }
            }
            let p1 = average_at(spec, x1, cfg)?;
            let p2 = average_at(spec, x2, cfg)?;
            let dx: f64 = x1.iter().zip(x2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if dx == 0.0 {
                return Err(AveragingError::InvalidConfig("probe pair with identical points".into()));
            }
            let diff = |a: &Estimate, b: &Estimate| -> (f64, f64) {
                let d = a.value.iter().zip(&b.value).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
                let e = a.stderr.iter().zip(&b.stderr).map(|(u, v)| u * u + v * v).sum::<f64>().sqrt();
                (d, e)
            };
            let (db, eb) = diff(&p1.bbar, &p2.bbar);
            let (da, ea) = diff(&p1.abar, &p2.abar);
            Ok(((db + da) / dx, (eb + ea) / dx))
        })
        .collect::<Result<_, _>>()?;
    let (c_hat, c_stderr) = rows
        .iter()
        .copied()
        .fold((0.0, 0.0), |best, r| if r.0 > best.0 { r } else { best });
    Ok(LipschitzReport {
        c_hat,
        c_stderr,
        ratios: rows.iter().map(|r| r.0).collect(),
    })
}

/// Synchronous-coupling diagnostic: `E|Y^{x,y₁}_t − Y^{x,y₂}_t|²` on a time
/// grid and its fitted exponential decay rate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingReport {
    pub times: Vec<f64>,
    pub mean_sq_distance: Vec<f64>,
    pub rate: f64,
}

pub fn coupling_decay(
    spec: &SystemSpec,
    x: &[f64],
    y1: &[f64],
    y2: &[f64],
    dt: f64,
    horizon: f64,
    n_paths: usize,
    seed: u64,
) -> Result<CouplingReport, AveragingError> {
    if !(dt > 0.0) || !(horizon > dt) || n_paths == 0 {
        return Err(AveragingError::InvalidConfig("need dt > 0, horizon > dt, n_paths ≥ 1".into()));
    }
    let steps = (horizon / dt).round() as usize;
    let every = (steps / 50).max(1);
    let per_path: Vec<Vec<f64>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut a = FrozenStepper::new(spec, x, y1, dt, seed, p);
            let mut b = FrozenStepper::new(spec, x, y2, dt, seed, p);
            let mut out = Vec::with_capacity(steps / every + 1);
            let d2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>();
            out.push(d2(a.state(), b.state()));
            for k in 1..=steps {
                a.step()?;
                b.step()?;
                if k % every == 0 {
                    out.push(d2(a.state(), b.state()));
                }
            }
            Ok(out)
        })
        .collect::<Result<_, SimError>>()?;
    let len = per_path[0].len();
    let msd: Vec<f64> = (0..len)
        .map(|i| per_path.iter().map(|p| p[i]).sum::<f64>() / n_paths as f64)
        .collect();
    let times: Vec<f64> = (0..len).map(|i| (i * every) as f64 * dt).collect();
    // least squares of log msd against t over entries far from underflow
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(&msd)
        .filter(|(_, m)| **m > 1e-250)
        .map(|(t, m)| (*t, m.ln()))
        .collect();
    let rate = if pts.len() >= 2 {
        let k = pts.len() as f64;
        let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let ml = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
        -sxy / sxx
    } else {
        f64::INFINITY
    };
    Ok(CouplingReport {
        times,
        mean_sq_distance: msd,
        rate,
    })
}

/// `Ψ(x,y,p) = ⟨b₁(x,y),p⟩ − ½|σ₁ᵀ(x,y)p|²`.
pub fn psi(spec: &SystemSpec, x: &[f64], y: &[f64], p: &[f64]) -> Result<f64, SimError> {
    let b = spec.b1.eval(x, y)?;
    let s = spec.sigma1.eval(x, y)?;
    Ok(psi_from(&b, &s, spec.d1, p))
}

fn psi_from(b: &[f64], s: &[f64], d1: usize, p: &[f64]) -> f64 {
    let lin: f64 = b.iter().zip(p).map(|(u, v)| u * v).sum();
    let quad: f64 = (0..d1)
        .map(|c| p.iter().enumerate().map(|(i, pi)| s[i * d1 + c] * pi).sum::<f64>().powi(2))
        .sum();
    lin - 0.5 * quad
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaConfig {
    pub dt: f64,
    /// Truncation time; `None` derives it from the mixing rate and `tol`.
    pub t_max: Option<f64>,
    /// Target contribution of the truncated tail.
    pub tol: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl Default for KappaConfig {
    fn default() -> Self {
        KappaConfig {
            dt: 0.02,
            t_max: None,
            tol: 1e-2,
            n_paths: 1000,
            seed: 0,
        }
    }
}

/// Truncation time with `∫_T^∞ C e^{−αt/2} dt = (2C/α) e^{−αT/2} ≤ tol`.
pub fn kappa_truncation(alpha: f64, c: f64, tol: f64) -> Result<f64, AveragingError> {
    if !(alpha > 0.0) {
        return Err(AveragingError::NoMixingRate(alpha));
    }
    if !(tol > 0.0) {
        return Err(AveragingError::InvalidConfig("tolerance must be positive".into()));
    }
    Ok(((2.0 / alpha) * (2.0 * c / (alpha * tol)).ln()).max(1.0 / alpha))
}

/// Corrector values `κ̂(x, y_i, p_j)` as `[i][j]`.
///
/// `psibar[j]` is `Ψ̄(x, p_j)`. Every `y_i` is started on the same noise
/// realisations, so differences in `y` are smooth.
pub fn kappa_table(
    spec: &SystemSpec,
    x: &[f64],
    ys: &[Vec<f64>],
    ps: &[Vec<f64>],
    psibar: &[f64],
    alpha: f64,
    cfg: &KappaConfig,
) -> Result<Vec<Vec<Estimate>>, AveragingError> {
    if ps.len() != psibar.len() {
        return Err(AveragingError::InvalidConfig("one Ψ̄ value per p is required".into()));
    }
    if !(cfg.dt > 0.0) || cfg.n_paths < 2 {
        return Err(AveragingError::InvalidConfig("need dt > 0 and at least two paths".into()));
    }
    let t_max = match cfg.t_max {
        Some(t) => {
            if !(alpha > 0.0) {
                return Err(AveragingError::NoMixingRate(alpha));
            }
            t
        }
        None => {
            let xs: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ymax = ys.iter().map(|y| y.iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max);
            let pmax = ps.iter().map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max);
            let c = (pmax + pmax * pmax).max(1e-12) * (1.0 + xs + ymax).powi(2);
            kappa_truncation(alpha, c, cfg.tol)?
        }
    };
    let steps = (t_max / cfg.dt).ceil() as usize;
    let (n, d1) = (spec.n, spec.d1);
    let np = ps.len();
    let per_path: Vec<Vec<f64>> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|path| {
            let mut out = vec![0.0; ys.len() * np];
            let mut b = vec![0.0; n];
            let mut s = vec![0.0; n * d1];
            for (i, y) in ys.iter().enumerate() {
                let mut st = FrozenStepper::new(spec, x, y, cfg.dt, cfg.seed, path);
                // trapezoidal rule in time
                for k in 0..=steps {
                    if k > 0 {
                        st.step()?;
                    }
                    let w = if k == 0 || k == steps { 0.5 * cfg.dt } else { cfg.dt };
                    spec.b1.eval_into(x, st.state(), &mut b)?;
                    spec.sigma1.eval_into(x, st.state(), &mut s)?;
                    for j in 0..np {
                        out[i * np + j] += w * (psi_from(&b, &s, d1, &ps[j]) - psibar[j]);
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_, SimError>>()?;
    let mut table = Vec::with_capacity(ys.len());
    for i in 0..ys.len() {
        let mut row = Vec::with_capacity(np);
        for j in 0..np {
            let col: Vec<f64> = per_path.iter().map(|v| v[i * np + j]).collect();
            let (m, e) = mean_stderr(&col);
            row.push(Estimate::scalar(m, e, cfg.n_paths));
        }
        table.push(row);
    }
    Ok(table)
}

/// Single corrector value `κ̂(x,y,p)`.
pub fn kappa(
    spec: &SystemSpec,
    x: &[f64],
    y: &[f64],
    p: &[f64],
    psibar: f64,
    alpha: f64,
    cfg: &KappaConfig,
) -> Result<Estimate, AveragingError> {
    let mut t = kappa_table(spec, x, &[y.to_vec()], &[p.to_vec()], &[psibar], alpha, cfg)?;
    Ok(t.remove(0).remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResidual {
    pub y: Vec<f64>,
    pub p: Vec<f64>,
    pub kappa: f64,
    /// `ℒˣκ̂ + Ψ − Ψ̄`
    pub residual: f64,
}

/// Applies the frozen generator to `κ̂` by central differences of step `h`
/// (common random numbers across the stencil) and reports the cell-equation
/// residual at every `(y, p)`.
#[allow(clippy::too_many_arguments)]
pub fn kappa_residual(
    spec: &SystemSpec,
    x: &[f64],
    ys: &[Vec<f64>],
    ps: &[Vec<f64>],
    psibar: &[f64],
    alpha: f64,
    h: f64,
    cfg: &KappaConfig,
) -> Result<Vec<CellResidual>, AveragingError> {
    let m = spec.m;
    // stencil: centre, ±h e_i, and the four diagonal corners for each pair i<j
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut layout = Vec::with_capacity(ys.len());
    for y in ys {
        let base = points.len();
        points.push(y.clone());
        for i in 0..m {
            for s in [1.0, -1.0] {
                let mut q = y.clone();
                q[i] += s * h;
                points.push(q);
            }
        }
        for i in 0..m {
            for j in (i + 1)..m {
                for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                    let mut q = y.clone();
                    q[i] += si * h;
                    q[j] += sj * h;
                    points.push(q);
                }
            }
        }
        layout.push(base);
    }
    // a common truncation for the whole stencil keeps the differences smooth
    let t_cfg = match cfg.t_max {
        Some(_) => *cfg,
        None => {
            let xs: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ymax = points.iter().map(|y| y.iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max);
            let pmax = ps.iter().map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max);
            let c = (pmax + pmax * pmax).max(1e-12) * (1.0 + xs + ymax).powi(2);
            KappaConfig {
                t_max: Some(kappa_truncation(alpha, c, cfg.tol)?),
                ..*cfg
            }
        }
    };
    let table = kappa_table(spec, x, &points, ps, psibar, alpha, &t_cfg)?;
    let mut out = Vec::new();
    for (yi, y) in ys.iter().enumerate() {
        let base = layout[yi];
        let b = spec.b2.eval(x, y).map_err(SimError::from)?;
        let s = spec.sigma2.eval(x, y).map_err(SimError::from)?;
        let d2 = spec.d2;
        let a = |i: usize, j: usize| -> f64 { (0..d2).map(|c| s[i * d2 + c] * s[j * d2 + c]).sum() };
        for (pj, p) in ps.iter().enumerate() {
            let k = |idx: usize| table[idx][pj].get();
            let k0 = k(base);
            let mut gen = 0.0;
            for i in 0..m {
                let kp = k(base + 1 + 2 * i);
                let km = k(base + 2 + 2 * i);
                gen += b[i] * (kp - km) / (2.0 * h) + 0.5 * a(i, i) * (kp - 2.0 * k0 + km) / (h * h);
            }
            let mut c = base + 1 + 2 * m;
            for i in 0..m {
                for j in (i + 1)..m {
                    let mixed = (k(c) - k(c + 1) - k(c + 2) + k(c + 3)) / (4.0 * h * h);
                    gen += a(i, j) * mixed;
                    c += 4;
                }
            }
            let residual = gen + psi(spec, x, y, p)? - psibar[pj];
            out.push(CellResidual {
                y: y.clone(),
                p: p.clone(),
                kappa: k0,
                residual,
            });
        }
    }
    Ok(out)
}

/// Growth envelope `(|p| + |p|²)(1 + |x| + |y|)`.
pub fn kappa_envelope(x: &[f64], y: &[f64], p: &[f64]) -> f64 {
    let nrm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let pn = nrm(p);
    (pn + pn * pn) * (1.0 + nrm(x) + nrm(y))
}

/// Bound constant fitted as 1.5 times the largest observed ratio
/// `|κ̂| / envelope`.
pub fn fit_kappa_bound(entries: &[(Vec<f64>, Vec<f64>, Vec<f64>, f64)]) -> f64 {
    1.5 * entries
        .iter()
        .filter_map(|(x, y, p, k)| {
            let e = kappa_envelope(x, y, p);
            (e > 0.0).then(|| k.abs() / e)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{CoeffField, Dims, Params};
    use crate::monotone::MonotoneOp;

    fn spec(b1: &str, s1: &str, b2: &str, s2: &str) -> SystemSpec {
        let d = Dims::new(1, 1);
        let p = Params::new();
        SystemSpec::new(
            CoeffField::vector(&[b1], d, &p).unwrap(),
            CoeffField::matrix(&[vec![s1]], d, &p).unwrap(),
            CoeffField::vector(&[b2], d, &p).unwrap(),
            CoeffField::matrix(&[vec![s2]], d, &p).unwrap(),
            MonotoneOp::Zero,
            vec![0.0],
            vec![0.6],
        )
        .unwrap()
    }

    #[test]
    fn sqrt_psd_examples() {
        let i = DMatrix::<f64>::identity(3, 3);
        assert!((sqrt_psd(&i).unwrap() - &i).amax() < 1e-14);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 9.0]));
        let r = sqrt_psd(&d).unwrap();
        assert!((r[(0, 0)] - 2.0).abs() < 1e-14 && (r[(1, 1)] - 3.0).abs() < 1e-14);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(sqrt_psd(&bad), Err(AveragingError::Asymmetric(_))));
        let neg = DMatrix::from_row_slice(1, 1, &[-1e-6]);
        assert!(matches!(sqrt_psd(&neg), Err(AveragingError::NotPsd(_))));
        let tiny = DMatrix::from_row_slice(1, 1, &[-1e-12]);
        assert_eq!(sqrt_psd(&tiny).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn y_free_coefficients_are_exact() {
        let s = spec("0.7", "2", "0.3 - y0/2", "0.5");
        let p = average_at(&s, &[0.0], &AveragingConfig::default()).unwrap();
        assert_eq!(p.bbar.value, vec![0.7]);
        assert_eq!(p.abar.value, vec![4.0]);
        assert_eq!(p.abar.stderr, vec![0.0]);
        assert!((p.sigbar[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn deterministic_contraction_is_point_mass() {
        // β = 2L exactly here, so the dissipativity gate must be overridden
        let s = spec("0", "1", "-y0", "0");
        let mut cfg = AveragingConfig {
            horizon: 100.0,
            burn_in: Some(50.0),
            ..Default::default()
        };
        assert!(estimate_invariant(&s, &[0.0], &cfg).is_err());
        cfg.allow_non_dissipative = true;
        let e = estimate_invariant(&s, &[0.0], &cfg).unwrap();
        assert!(e.covariance.value[0].abs() <= 1e-10);
        assert!(e.mean.value[0].abs() <= 1e-10);
    }

    #[test]
    fn explosive_fast_drift_rejected() {
        let s = spec("0", "cos(y0)", "y0", "0.5");
        let err = average_at(&s, &[0.0], &AveragingConfig::default()).unwrap_err();
        assert!(matches!(err, AveragingError::NotDissipative { .. }));
    }

    #[test]
    fn table_interpolation_and_hamiltonian() {
        let c = AveragedCoeffs::table_1d(vec![0.0, 1.0], vec![0.0, 2.0], vec![1.0, 4.0]).unwrap();
        assert_eq!(c.bbar(&[0.5]), vec![1.0]);
        assert_eq!(c.abar(&[2.0]), vec![4.0]);
        assert_eq!(c.sigbar(&[-1.0]), vec![1.0]);
        assert_eq!(c.hamiltonian(&[0.5], &[0.0]), 0.0);
        let k = AveragedCoeffs::constant(vec![0.0], vec![0.25]).unwrap();
        assert_eq!(k.hamiltonian(&[3.0], &[1.0]), -0.125);
        assert!(AveragedCoeffs::table_1d(vec![1.0, 0.0], vec![0.0; 2], vec![0.0; 2]).is_err());
    }

    #[test]
    fn kappa_trivial_cases() {
        let s = spec("0", "cos(y0)", "0.3 - y0/2", "0.5");
        let cfg = KappaConfig {
            n_paths: 20,
            ..Default::default()
        };
        let k = kappa(&s, &[0.0], &[1.0], &[0.0], 0.0, 0.5, &cfg).unwrap();
        assert_eq!(k.get(), 0.0);
        let s = spec("1", "2", "0.3 - y0/2", "0.5");
        let psibar = 1.0 - 0.5 * 4.0;
        let k = kappa(&s, &[0.0], &[1.0], &[1.0], psibar, 0.5, &cfg).unwrap();
        assert_eq!(k.get(), 0.0);
        assert!(matches!(
            kappa(&s, &[0.0], &[1.0], &[1.0], psibar, 0.0, &cfg),
            Err(AveragingError::NoMixingRate(_))
        ));
    }
}
