//! Time stepping of the slow–fast multivalued system
//!
//! ```text
//! dX ∈ −A(X)dt + b₁(X,Y)dt + √ε σ₁(X,Y)dW¹
//! dY = γ⁻¹ b₂(X,Y)dt + γ^{-1/2} σ₂(X,Y)dW²
//! ```
//!
//! The slow inclusion is discretised by resolvent splitting: an explicit
//! Euler–Maruyama predictor followed by `J_dt = (I + dt A)⁻¹`. The difference
//! between predictor and corrected state is the increment `dK` of the
//! finite-variation term, so every stored state lies in the closed domain.

mod checks;
mod noise;

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{CoeffField, ExprError, Shape};
use crate::monotone::{MonotoneError, MonotoneOp};

pub use checks::{
    frozen_generator, verify_discrete_vi, verify_dissipativity, verify_dissipativity_in,
    verify_interior_estimate, verify_lyapunov, DissipativityReport, InteriorReport,
    LyapunovOptions, LyapunovReport, ViReport,
};
pub use noise::{Channel, NoiseStream};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("coefficient evaluation failed: {0}")]
    Coeff(#[from] ExprError),
    #[error(transparent)]
    Operator(#[from] MonotoneError),
    #[error("invalid system: {0}")]
    InvalidSpec(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("fast-scale instability guard: dt = {dt} exceeds gamma/{factor} = {limit}")]
    Unstable { dt: f64, factor: f64, limit: f64 },
}

/// Full problem datum of the slow–fast system.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub n: usize,
    pub m: usize,
    pub d1: usize,
    pub d2: usize,
    pub b1: CoeffField,
    pub sigma1: CoeffField,
    pub b2: CoeffField,
    pub sigma2: CoeffField,
    pub op: MonotoneOp,
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
}

impl SystemSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        b1: CoeffField,
        sigma1: CoeffField,
        b2: CoeffField,
        sigma2: CoeffField,
        op: MonotoneOp,
        x0: Vec<f64>,
        y0: Vec<f64>,
    ) -> Result<Self, SimError> {
        let (n, m) = (x0.len(), y0.len());
        let d1 = match sigma1.shape() {
            Shape::Matrix(_, c) => c,
            Shape::Vector(_) | Shape::Scalar => 1,
        };
        let d2 = match sigma2.shape() {
            Shape::Matrix(_, c) => c,
            Shape::Vector(_) | Shape::Scalar => 1,
        };
        let spec = SystemSpec {
            n,
            m,
            d1,
            d2,
            b1,
            sigma1,
            b2,
            sigma2,
            op,
            x0,
            y0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |s: String| Err(SimError::InvalidSpec(s));
        if self.n == 0 || self.m == 0 {
            return bad("slow and fast dimensions must be positive".into());
        }
        let expect = [
            ("b1", &self.b1, self.n, 1),
            ("sigma1", &self.sigma1, self.n, self.d1),
            ("b2", &self.b2, self.m, 1),
            ("sigma2", &self.sigma2, self.m, self.d2),
        ];
        for (name, field, rows, cols) in expect {
            if field.shape().len() != rows * cols {
                return bad(format!(
                    "{name} has {} entries, expected {rows}x{cols}",
                    field.shape().len()
                ));
            }
            let d = field.dims();
            if d.n != self.n || d.m != self.m {
                return bad(format!("{name} declared for dims ({}, {})", d.n, d.m));
            }
        }
        self.op.check_dim(self.n)?;
        self.op.validate_for_simulation()?;
        let dist = self.op.distance_to_domain(&self.x0);
        if dist > crate::monotone::DOMAIN_TOL {
            return bad(format!("x0 lies outside the domain closure (distance {dist:.3e})"));
        }
        Ok(())
    }

    /// Same system with a different operator.
    pub fn with_operator(&self, op: MonotoneOp) -> Result<Self, SimError> {
        let mut s = self.clone();
        s.op = op;
        s.validate()?;
        Ok(s)
    }

    pub fn with_initial(&self, x0: Vec<f64>, y0: Vec<f64>) -> Result<Self, SimError> {
        let mut s = self.clone();
        s.x0 = x0;
        s.y0 = y0;
        s.validate()?;
        Ok(s)
    }
}

/// Scale separation parameters, both in `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams {
    pub epsilon: f64,
    pub gamma: f64,
}

impl ScaleParams {
    pub fn new(epsilon: f64, gamma: f64) -> Result<Self, SimError> {
        for (name, v) in [("epsilon", epsilon), ("gamma", gamma)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(SimError::InvalidConfig(format!("{name} = {v} must lie in (0, 1)")));
            }
        }
        Ok(ScaleParams { epsilon, gamma })
    }

    /// `γ = ε^exponent`.
    pub fn power_law(epsilon: f64, exponent: f64) -> Result<Self, SimError> {
        ScaleParams::new(epsilon, epsilon.powf(exponent))
    }
}

pub const DEFAULT_STABILITY_FACTOR: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub paths: usize,
    /// Require `dt ≤ γ / stability_factor`.
    #[serde(default = "default_stability")]
    pub stability_factor: f64,
}

fn default_stability() -> f64 {
    DEFAULT_STABILITY_FACTOR
}

impl SimConfig {
    pub fn new(dt: f64, horizon: f64, seed: u64, paths: usize) -> Self {
        SimConfig {
            dt,
            horizon,
            seed,
            paths,
            stability_factor: DEFAULT_STABILITY_FACTOR,
        }
    }

    /// Number of steps; rejects non-positive or non-dividing step sizes.
    pub fn steps(&self) -> Result<usize, SimError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::InvalidConfig(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.horizon >= self.dt) {
            return Err(SimError::InvalidConfig(format!(
                "horizon {} must be at least dt {}",
                self.horizon, self.dt
            )));
        }
        let steps = (self.horizon / self.dt).round();
        if (steps * self.dt - self.horizon).abs() > 1e-9 * self.horizon.max(1.0) {
            return Err(SimError::InvalidConfig(format!(
                "dt {} does not divide horizon {}",
                self.dt, self.horizon
            )));
        }
        Ok(steps as usize)
    }

    pub fn check_fast_stability(&self, gamma: f64) -> Result<(), SimError> {
        let limit = gamma / self.stability_factor;
        if self.dt > limit * (1.0 + 1e-12) {
            return Err(SimError::Unstable {
                dt: self.dt,
                factor: self.stability_factor,
                limit,
            });
        }
        Ok(())
    }
}

/// A discretised solution triple on a uniform grid.
///
/// `dk[k]` is the increment produced by the step from `times[k]` to
/// `times[k + 1]`; it lies in `dt·A(x[k + 1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlowFastPath {
    pub times: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub dk: Vec<Vec<f64>>,
}

impl SlowFastPath {
    /// Discrete total variation `Σ|dK_k|`.
    pub fn total_variation(&self) -> f64 {
        self.dk.iter().map(|d| norm(d)).sum()
    }

    pub fn max_domain_distance(&self, op: &MonotoneOp) -> f64 {
        self.x
            .iter()
            .map(|x| op.distance_to_domain(x))
            .fold(0.0, f64::max)
    }

    pub fn dt(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Reusable evaluation buffers for one path.
pub(crate) struct Scratch {
    b1: Vec<f64>,
    s1: Vec<f64>,
    b2: Vec<f64>,
    s2: Vec<f64>,
    dw1: Vec<f64>,
    dw2: Vec<f64>,
}

impl Scratch {
    pub(crate) fn new(spec: &SystemSpec) -> Self {
        Scratch {
            b1: vec![0.0; spec.n],
            s1: vec![0.0; spec.n * spec.d1],
            b2: vec![0.0; spec.m],
            s2: vec![0.0; spec.m * spec.d2],
            dw1: vec![0.0; spec.d1],
            dw2: vec![0.0; spec.d2],
        }
    }
}

fn mat_vec_add(mat: &[f64], cols: usize, v: &[f64], scale: f64, out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let row = &mat[i * cols..(i + 1) * cols];
        *o += scale * row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// One resolvent-splitting step of the slow component.
///
/// `dw1` holds Brownian increments over `dt`. Writes the new state into `x`
/// and the reflection increment into `dk`.
pub(crate) fn step_slow_in_place(
    spec: &SystemSpec,
    x: &mut [f64],
    y: &[f64],
    dt: f64,
    epsilon: f64,
    dw1: &[f64],
    scratch_b1: &mut [f64],
    scratch_s1: &mut [f64],
    dk: &mut [f64],
) -> Result<(), SimError> {
    spec.b1.eval_into(x, y, scratch_b1)?;
    spec.sigma1.eval_into(x, y, scratch_s1)?;
    for (xi, b) in x.iter_mut().zip(scratch_b1.iter()) {
        *xi += b * dt;
    }
    mat_vec_add(scratch_s1, spec.d1, dw1, epsilon.sqrt(), x);
    dk.copy_from_slice(x);
    spec.op.resolvent_in_place(dt, x);
    for (d, xi) in dk.iter_mut().zip(x.iter()) {
        *d -= xi;
    }
    Ok(())
}

/// Slow step from `(x, y)`: returns `(x_next, dK)`.
pub fn step_slow(
    spec: &SystemSpec,
    x: &[f64],
    y: &[f64],
    dt: f64,
    epsilon: f64,
    dw1: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), SimError> {
    if !(dt > 0.0) {
        return Err(SimError::InvalidConfig("dt must be positive".into()));
    }
    let mut xn = x.to_vec();
    let mut dk = vec![0.0; spec.n];
    let mut b1 = vec![0.0; spec.n];
    let mut s1 = vec![0.0; spec.n * spec.d1];
    step_slow_in_place(spec, &mut xn, y, dt, epsilon, dw1, &mut b1, &mut s1, &mut dk)?;
    Ok((xn, dk))
}

/// Drives one path of the coupled system, calling `visit(k, x, y, dk)` after
/// every step `k = 1..=steps`.
pub(crate) fn drive_path(
    spec: &SystemSpec,
    scales: ScaleParams,
    dt: f64,
    steps: usize,
    seed: u64,
    path: u64,
    mut visit: impl FnMut(usize, &[f64], &[f64], &[f64]),
) -> Result<(), SimError> {
    let mut w1 = NoiseStream::new(seed, path, Channel::Slow);
    let mut w2 = NoiseStream::new(seed, path, Channel::Fast);
    let mut sc = Scratch::new(spec);
    let mut x = spec.x0.clone();
    let mut y = spec.y0.clone();
    let mut dk = vec![0.0; spec.n];
    let sqrt_dt = dt.sqrt();
    let fast_drift = dt / scales.gamma;
    let fast_noise = 1.0 / scales.gamma.sqrt();
    for k in 1..=steps {
        w1.fill_increments(sqrt_dt, &mut sc.dw1);
        w2.fill_increments(sqrt_dt, &mut sc.dw2);
        // fast coefficients use the pre-step slow state
        spec.b2.eval_into(&x, &y, &mut sc.b2)?;
        spec.sigma2.eval_into(&x, &y, &mut sc.s2)?;
        step_slow_in_place(
            spec,
            &mut x,
            &y,
            dt,
            scales.epsilon,
            &sc.dw1,
            &mut sc.b1,
            &mut sc.s1,
            &mut dk,
        )?;
        for (yi, b) in y.iter_mut().zip(&sc.b2) {
            *yi += b * fast_drift;
        }
        mat_vec_add(&sc.s2, spec.d2, &sc.dw2, fast_noise, &mut y);
        visit(k, &x, &y, &dk);
    }
    Ok(())
}

fn prepare(spec: &SystemSpec, scales: ScaleParams, cfg: &SimConfig) -> Result<usize, SimError> {
    spec.validate()?;
    let steps = cfg.steps()?;
    cfg.check_fast_stability(scales.gamma)?;
    Ok(steps)
}

/// Simulates path number `path` and stores the full triple.
pub fn run_path(spec: &SystemSpec, scales: ScaleParams, cfg: &SimConfig, path: u64) -> Result<SlowFastPath, SimError> {
    let steps = prepare(spec, scales, cfg)?;
    let mut out = SlowFastPath {
        times: Vec::with_capacity(steps + 1),
        x: Vec::with_capacity(steps + 1),
        y: Vec::with_capacity(steps + 1),
        dk: Vec::with_capacity(steps),
    };
    out.times.push(0.0);
    out.x.push(spec.x0.clone());
    out.y.push(spec.y0.clone());
    drive_path(spec, scales, cfg.dt, steps, cfg.seed, path, |k, x, y, dk| {
        out.times.push(k as f64 * cfg.dt);
        out.x.push(x.to_vec());
        out.y.push(y.to_vec());
        out.dk.push(dk.to_vec());
    })?;
    Ok(out)
}

/// Simulates `cfg.paths` independent paths in parallel, in path order.
pub fn run_system(spec: &SystemSpec, scales: ScaleParams, cfg: &SimConfig) -> Result<Vec<SlowFastPath>, SimError> {
    prepare(spec, scales, cfg)?;
    (0..cfg.paths as u64)
        .into_par_iter()
        .map(|p| run_path(spec, scales, cfg, p))
        .collect()
}

/// Per-path reduction without storing trajectories: `init` builds the
/// accumulator, `visit` sees every step, `finish` maps it to the result.
pub fn map_paths<A, T, FI, FV, FF>(
    spec: &SystemSpec,
    scales: ScaleParams,
    cfg: &SimConfig,
    init: FI,
    visit: FV,
    finish: FF,
) -> Result<Vec<T>, SimError>
where
    T: Send,
    FI: Fn() -> A + Sync,
    FV: Fn(&mut A, usize, &[f64], &[f64], &[f64]) + Sync,
    FF: Fn(A) -> T + Sync,
{
    let steps = prepare(spec, scales, cfg)?;
    (0..cfg.paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut acc = init();
            drive_path(spec, scales, cfg.dt, steps, cfg.seed, p, |k, x, y, dk| {
                visit(&mut acc, k, x, y, dk)
            })?;
            Ok(finish(acc))
        })
        .collect()
}

/// Euler stepper for the frozen fast equation `dY = b₂(x,Y)dt + σ₂(x,Y)dW`.
pub struct FrozenStepper<'a> {
    spec: &'a SystemSpec,
    x: Vec<f64>,
    y: Vec<f64>,
    dt: f64,
    sqrt_dt: f64,
    noise: NoiseStream,
    b2: Vec<f64>,
    s2: Vec<f64>,
    dw: Vec<f64>,
}

impl<'a> FrozenStepper<'a> {
    /// Streams with equal `(seed, path)` share their noise, which gives the
    /// synchronous coupling of paths started from different points.
    pub fn new(spec: &'a SystemSpec, x: &[f64], y_init: &[f64], dt: f64, seed: u64, path: u64) -> Self {
        FrozenStepper {
            spec,
            x: x.to_vec(),
            y: y_init.to_vec(),
            dt,
            sqrt_dt: dt.sqrt(),
            noise: NoiseStream::new(seed, path, Channel::Frozen),
            b2: vec![0.0; spec.m],
            s2: vec![0.0; spec.m * spec.d2],
            dw: vec![0.0; spec.d2],
        }
    }

    pub fn state(&self) -> &[f64] {
        &self.y
    }

    pub fn frozen_x(&self) -> &[f64] {
        &self.x
    }

    pub fn step(&mut self) -> Result<&[f64], SimError> {
        self.noise.fill_increments(self.sqrt_dt, &mut self.dw);
        self.spec.b2.eval_into(&self.x, &self.y, &mut self.b2)?;
        self.spec.sigma2.eval_into(&self.x, &self.y, &mut self.s2)?;
        for (yi, b) in self.y.iter_mut().zip(&self.b2) {
            *yi += b * self.dt;
        }
        mat_vec_add(&self.s2, self.spec.d2, &self.dw, 1.0, &mut self.y);
        Ok(&self.y)
    }
}

/// Euler path of the frozen equation at slow state `x`, `steps + 1` states.
pub fn run_frozen(
    spec: &SystemSpec,
    x: &[f64],
    y_init: &[f64],
    dt: f64,
    steps: usize,
    seed: u64,
    path: u64,
) -> Result<Vec<Vec<f64>>, SimError> {
    if !(dt > 0.0) {
        return Err(SimError::InvalidConfig("dt must be positive".into()));
    }
    if x.len() != spec.n || y_init.len() != spec.m {
        return Err(SimError::InvalidConfig("state dimension mismatch".into()));
    }
    let mut stepper = FrozenStepper::new(spec, x, y_init, dt, seed, path);
    let mut out = Vec::with_capacity(steps + 1);
    out.push(y_init.to_vec());
    for _ in 0..steps {
        out.push(stepper.step()?.to_vec());
    }
    Ok(out)
}

/// Writes paths in long CSV format: `path_id,t,x0..,y0..,dk0..`.
///
/// The `dk` columns of row `k` hold the increment that produced state `k`
/// (zero on the initial row).
pub fn write_paths_csv<W: Write>(paths: &[SlowFastPath], mut w: W) -> io::Result<()> {
    let Some(first) = paths.first() else {
        return Ok(());
    };
    let n = first.x[0].len();
    let m = first.y[0].len();
    let mut header = vec!["path_id".to_string(), "t".to_string()];
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend((0..m).map(|i| format!("y{i}")));
    header.extend((0..n).map(|i| format!("dk{i}")));
    writeln!(w, "{}", header.join(","))?;
    let zeros = vec![0.0; n];
    for (id, p) in paths.iter().enumerate() {
        for k in 0..p.times.len() {
            let dk = if k == 0 { &zeros } else { &p.dk[k - 1] };
            let mut row = vec![id.to_string(), p.times[k].to_string()];
            row.extend(p.x[k].iter().map(f64::to_string));
            row.extend(p.y[k].iter().map(f64::to_string));
            row.extend(dk.iter().map(f64::to_string));
            writeln!(w, "{}", row.join(","))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{Dims, Params};

    fn spec_1d(b1: &str, s1: &str, b2: &str, s2: &str, op: MonotoneOp, x0: f64) -> SystemSpec {
        let d = Dims::new(1, 1);
        let p = Params::new();
        SystemSpec::new(
            CoeffField::vector(&[b1], d, &p).unwrap(),
            CoeffField::matrix(&[vec![s1]], d, &p).unwrap(),
            CoeffField::vector(&[b2], d, &p).unwrap(),
            CoeffField::matrix(&[vec![s2]], d, &p).unwrap(),
            op,
            vec![x0],
            vec![0.0],
        )
        .unwrap()
    }

    #[test]
    fn step_slow_examples() {
        let s = spec_1d("0", "0", "0", "0", MonotoneOp::Zero, 0.3);
        let (xn, dk) = step_slow(&s, &[0.3], &[0.0], 0.1, 0.5, &[0.7]).unwrap();
        assert_eq!((xn, dk), (vec![0.3], vec![0.0]));

        let b = MonotoneOp::normal_cone_box(vec![-1.0], vec![1.0]).unwrap();
        let s = spec_1d("10", "0", "0", "0", b, 0.0);
        let (xn, dk) = step_slow(&s, &[0.95], &[0.0], 0.01, 0.5, &[0.0]).unwrap();
        assert_eq!(xn, vec![1.0]);
        assert!((dk[0] - 0.05).abs() < 1e-14);

        let q = MonotoneOp::subdiff_quadratic(nalgebra::DMatrix::from_element(1, 1, 1.0)).unwrap();
        let s = spec_1d("0", "0", "0", "0", q, 0.0);
        let (xn, _) = step_slow(&s, &[1.0], &[0.0], 0.5, 0.5, &[0.0]).unwrap();
        assert!((xn[0] - 1.0 / 1.5).abs() < 1e-15);
    }

    #[test]
    fn zero_coefficients_freeze_state() {
        let s = spec_1d("0", "0", "0", "0", MonotoneOp::Zero, 0.4);
        let cfg = SimConfig::new(0.001, 0.1, 3, 1);
        let p = run_path(&s, ScaleParams::new(0.5, 0.1).unwrap(), &cfg, 0).unwrap();
        assert_eq!(p.x.len(), 101);
        assert!(p.x.iter().all(|x| x[0] == 0.4));
        assert!(p.y.iter().all(|y| y[0] == 0.0));
        assert_eq!(p.total_variation(), 0.0);
    }

    #[test]
    fn instability_guard() {
        let s = spec_1d("0", "0", "0", "0", MonotoneOp::Zero, 0.0);
        let cfg = SimConfig::new(0.1, 1.0, 3, 1);
        let err = run_path(&s, ScaleParams::new(0.5, 0.1).unwrap(), &cfg, 0).unwrap_err();
        assert!(matches!(err, SimError::Unstable { .. }));
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::new(0.3, 1.0, 0, 1).steps().is_err());
        assert!(SimConfig::new(2.0, 1.0, 0, 1).steps().is_err());
        assert_eq!(SimConfig::new(0.1, 1.0, 0, 1).steps().unwrap(), 10);
        assert!(ScaleParams::new(1.0, 0.5).is_err());
        assert!(ScaleParams::new(0.5, 0.0).is_err());
    }

    #[test]
    fn spec_rejects_bad_x0_and_shapes() {
        let d = Dims::new(1, 1);
        let p = Params::new();
        let b = MonotoneOp::normal_cone_box(vec![-1.0], vec![1.0]).unwrap();
        let v = |s: &str| CoeffField::vector(&[s], d, &p).unwrap();
        let mtx = |s: &str| CoeffField::matrix(&[vec![s]], d, &p).unwrap();
        assert!(SystemSpec::new(v("0"), mtx("0"), v("0"), mtx("0"), b.clone(), vec![1.5], vec![0.0]).is_err());
        assert!(SystemSpec::new(v("0"), mtx("0"), v("0"), mtx("0"), b.clone(), vec![1.0], vec![0.0]).is_ok());
        let two = CoeffField::vector(&["0", "1"], d, &p).unwrap();
        assert!(SystemSpec::new(two, mtx("0"), v("0"), mtx("0"), b, vec![0.0], vec![0.0]).is_err());
    }

    #[test]
    fn frozen_without_noise_is_constant() {
        let s = spec_1d("0", "0", "0", "0", MonotoneOp::Zero, 0.0);
        let ys = run_frozen(&s, &[0.0], &[1.25], 0.01, 50, 1, 0).unwrap();
        assert!(ys.iter().all(|y| y[0] == 1.25));
    }

    #[test]
    fn csv_layout() {
        let s = spec_1d("1", "0", "0", "0", MonotoneOp::Zero, 0.0);
        let cfg = SimConfig::new(0.5, 1.0, 0, 1);
        let p = run_path(&s, ScaleParams::new(0.5, 0.5).unwrap(), &SimConfig { stability_factor: 1.0, ..cfg }, 0).unwrap();
        let mut buf = Vec::new();
        write_paths_csv(&[p], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "path_id,t,x0,y0,dk0");
        assert_eq!(lines[1], "0,0,0,0,0");
        assert_eq!(lines[2], "0,0.5,0.5,0,0");
        assert_eq!(lines.len(), 4);
    }
}
