//! Rate function, variational value, Laplace functional and tightness probe.
//!
//! The rate function at time `t` is the minimal control energy
//!
//! ```text
//! I(x; x₀, t) = inf { ½∫₀ᵗ|z|² ds : X^z(t) = x },
//! dX^z ∈ −A(X^z)dt + b̄₁(X^z)dt + σ̄₁(X^z) z dt,   X^z(0) = x₀,
//! ```
//!
//! discretised with piecewise-constant controls and the same resolvent
//! splitting as the stochastic system.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::averaging::AveragedCoeffs;
use crate::estimate::Estimate;
use crate::expr::{CoeffField, Dims, ExprError, Params};
use crate::monotone::{MonotoneError, MonotoneOp, DOMAIN_TOL};
use crate::optim::{minimize, MinimizeOptions};
use crate::simulate::{map_paths, ScaleParams, SimConfig, SimError, SystemSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LdpError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Operator(#[from] MonotoneError),
    #[error("target is unreachable: averaged diffusion vanishes and the free path misses it by {gap:.3e}")]
    Unreachable { gap: f64 },
    #[error("importance weights degenerate (effective sample size {ess:.2}); epsilon is too small for the path budget")]
    DegenerateWeights { ess: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Piecewise-constant control on `N` equal steps of `[0, t]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlGrid {
    pub t: f64,
    pub dim: usize,
    /// Row `k` holds `z_k ∈ ℝⁿ`, flattened.
    pub z: Vec<f64>,
}

impl ControlGrid {
    pub fn zeros(t: f64, steps: usize, dim: usize) -> Self {
        ControlGrid {
            t,
            dim,
            z: vec![0.0; steps * dim],
        }
    }

    /// Same value `c` on every step.
    pub fn constant(t: f64, steps: usize, c: &[f64]) -> Self {
        ControlGrid {
            t,
            dim: c.len(),
            z: c.iter().copied().cycle().take(steps * c.len()).collect(),
        }
    }

    pub fn steps(&self) -> usize {
        self.z.len() / self.dim
    }

    pub fn dt(&self) -> f64 {
        self.t / self.steps() as f64
    }

    pub fn at(&self, k: usize) -> &[f64] {
        &self.z[k * self.dim..(k + 1) * self.dim]
    }

    /// Same control on a grid with twice as many steps.
    pub fn refined(&self) -> Self {
        let mut z = Vec::with_capacity(2 * self.z.len());
        for k in 0..self.steps() {
            z.extend_from_slice(self.at(k));
            z.extend_from_slice(self.at(k));
        }
        ControlGrid { t: self.t, dim: self.dim, z }
    }
}

/// `½ Σ|z_k|² dt`.
pub fn action(z: &ControlGrid) -> f64 {
    0.5 * z.z.iter().map(|v| v * v).sum::<f64>() * z.dt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlledPath {
    pub x: Vec<Vec<f64>>,
    pub dk: Vec<Vec<f64>>,
}

impl ControlledPath {
    pub fn terminal(&self) -> &[f64] {
        self.x.last().expect("path has at least the initial state")
    }
}

fn mat_vec(m: &[f64], n: usize, v: &[f64], out: &mut [f64]) {
    for i in 0..n {
        out[i] = (0..n).map(|j| m[i * n + j] * v[j]).sum();
    }
}

/// Resolvent-splitting Euler integration of the controlled averaged dynamics.
fn integrate_into(avg: &AveragedCoeffs, op: &MonotoneOp, x0: &[f64], z: &[f64], dim: usize, dt: f64, mut visit: impl FnMut(&[f64], &[f64])) -> Vec<f64> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut sz = vec![0.0; n];
    let mut pre = vec![0.0; n];
    let mut dk = vec![0.0; n];
    for zk in z.chunks(dim) {
        let b = avg.bbar(&x);
        let s = avg.sigbar(&x);
        mat_vec(&s, n, zk, &mut sz);
        for i in 0..n {
            pre[i] = x[i] + (b[i] + sz[i]) * dt;
        }
        x.copy_from_slice(&pre);
        op.resolvent_in_place(dt, &mut x);
        for i in 0..n {
            dk[i] = pre[i] - x[i];
        }
        visit(&x, &dk);
    }
    x
}

fn check_inputs(avg: &AveragedCoeffs, op: &MonotoneOp, x0: &[f64], dim: usize) -> Result<(), LdpError> {
    if x0.len() != avg.n() || dim != avg.n() {
        return Err(LdpError::Invalid(format!(
            "dimension mismatch: coefficients act on R^{}, state has {}, control has {}",
            avg.n(),
            x0.len(),
            dim
        )));
    }
    op.check_dim(avg.n())?;
    let d = op.distance_to_domain(x0);
    if d > DOMAIN_TOL {
        return Err(MonotoneError::OutsideDomain { distance: d }.into());
    }
    Ok(())
}

pub fn integrate_controlled(avg: &AveragedCoeffs, op: &MonotoneOp, x0: &[f64], z: &ControlGrid) -> Result<ControlledPath, LdpError> {
    check_inputs(avg, op, x0, z.dim)?;
    let mut path = ControlledPath {
        x: vec![x0.to_vec()],
        dk: Vec::with_capacity(z.steps()),
    };
    integrate_into(avg, op, x0, &z.z, z.dim, z.dt(), |x, dk| {
        path.x.push(x.to_vec());
        path.dk.push(dk.to_vec());
    });
    Ok(path)
}

fn terminal(avg: &AveragedCoeffs, op: &MonotoneOp, x0: &[f64], z: &[f64], dim: usize, dt: f64) -> Vec<f64> {
    integrate_into(avg, op, x0, z, dim, dt, |_, _| {})
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateOptions {
    /// Number of control steps.
    pub steps: usize,
    /// Required terminal accuracy.
    pub tol_gap: f64,
    /// First penalty weight; multiplied by 10 per level.
    pub mu0: f64,
    pub max_levels: usize,
    /// Relative value change tolerated between the last two levels.
    pub value_rtol: f64,
    /// Random starts in addition to the zero and straight-line controls.
    pub random_starts: usize,
    /// Re-solve once on a doubled grid and report the relative change.
    pub refine: bool,
    pub seed: u64,
}

impl Default for RateOptions {
    fn default() -> Self {
        RateOptions {
            steps: 32,
            tol_gap: 1e-3,
            mu0: 1.0,
            max_levels: 12,
            value_rtol: 1e-4,
            random_starts: 0,
            refine: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateResult {
    pub value: f64,
    pub control: ControlGrid,
    pub terminal: Vec<f64>,
    pub terminal_gap: f64,
    pub converged: bool,
    pub penalty_final: f64,
    /// Best value reached from each start.
    pub restart_values: Vec<f64>,
    /// Converged restarts disagree by more than 1%.
    pub possible_nonuniqueness: bool,
    /// Relative value change when the control grid is doubled.
    pub refinement_change: Option<f64>,
}

struct StartOutcome {
    z: Vec<f64>,
    value: f64,
    gap: f64,
    terminal: Vec<f64>,
    converged: bool,
    mu: f64,
}

fn penalty_continuation(
    avg: &AveragedCoeffs,
    op: &MonotoneOp,
    x0: &[f64],
    target: &[f64],
    t: f64,
    z0: Vec<f64>,
    opts: &RateOptions,
) -> StartOutcome {
    let n = x0.len();
    let dt = t / (z0.len() / n) as f64;
    let act = |z: &[f64]| 0.5 * z.iter().map(|v| v * v).sum::<f64>() * dt;
    let mut z = z0;
    let mut mu = opts.mu0;
    let mut prev: Option<f64> = None;
    let mut out = None;
    for level in 0..opts.max_levels {
        let f = |w: &[f64]| {
            let xt = terminal(avg, op, x0, w, n, dt);
            act(w) + 0.5 * mu * xt.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        };
        let mo = MinimizeOptions {
            grad_tol: 1e-10 * (1.0 + mu),
            ..MinimizeOptions::default()
        };
        let (zn, _) = minimize(f, z, mo);
        z = zn;
        let xt = terminal(avg, op, x0, &z, n, dt);
        let gap = dist(&xt, target);
        let value = act(&z);
        let stable = prev.is_some_and(|p| (value - p).abs() <= opts.value_rtol * value.abs().max(1e-12));
        let converged = gap <= opts.tol_gap && stable;
        out = Some((value, gap, xt, converged, mu));
        if converged || level + 1 == opts.max_levels {
            break;
        }
        prev = Some(value);
        mu *= 10.0;
    }
    let (value, gap, terminal, converged, mu) = out.expect("at least one penalty level");
    StartOutcome {
        z,
        value,
        gap,
        terminal,
        converged,
        mu,
    }
}

fn straight_line_start(avg: &AveragedCoeffs, x0: &[f64], target: &[f64], t: f64, steps: usize) -> Vec<f64> {
    let n = x0.len();
    let s = DMatrix::from_row_slice(n, n, &avg.sigbar(x0));
    let pinv = s.pseudo_inverse(1e-12).unwrap_or_else(|_| DMatrix::zeros(n, n));
    let d: Vec<f64> = target.iter().zip(x0).map(|(a, b)| (a - b) / t).collect();
    let mut c = vec![0.0; n];
    mat_vec(pinv.transpose().as_slice(), n, &d, &mut c);
    c.iter().copied().cycle().take(steps * n).collect()
}

/// Deterministic pseudo-random start with entries of order `scale`.
fn random_start(len: usize, scale: f64, seed: u64, index: u64) -> Vec<f64> {
    use crate::simulate::{Channel, NoiseStream};
    let mut s = NoiseStream::new(seed, index, Channel::Aux);
    (0..len).map(|_| scale * s.standard_normal()).collect()
}

fn solve_rate(
    avg: &AveragedCoeffs,
    op: &MonotoneOp,
    x0: &[f64],
    target: &[f64],
    t: f64,
    opts: &RateOptions,
    extra_start: Option<Vec<f64>>,
) -> Result<RateResult, LdpError> {
    let n = x0.len();
    let steps = opts.steps;
    let dt = t / steps as f64;
    let free = terminal(avg, op, x0, &vec![0.0; steps * n], n, dt);
    let free_gap = dist(&free, target);
    if free_gap <= opts.tol_gap {
        return Ok(RateResult {
            value: 0.0,
            control: ControlGrid::zeros(t, steps, n),
            terminal: free,
            terminal_gap: free_gap,
            converged: true,
            penalty_final: 0.0,
            restart_values: vec![0.0],
            possible_nonuniqueness: false,
            refinement_change: None,
        });
    }
    if avg.bounds().1 == 0.0 {
        return Err(LdpError::Unreachable { gap: free_gap });
    }
    let mut starts = vec![vec![0.0; steps * n], straight_line_start(avg, x0, target, t, steps)];
    let scale = starts[1].iter().fold(0.0f64, |m, v| m.max(v.abs())).max(0.1);
    for i in 0..opts.random_starts {
        starts.push(random_start(steps * n, scale, opts.seed, i as u64));
    }
    if let Some(s) = extra_start {
        starts.push(s);
    }
    let outcomes: Vec<StartOutcome> = starts
        .into_par_iter()
        .map(|z0| penalty_continuation(avg, op, x0, target, t, z0, opts))
        .collect();
    let restart_values: Vec<f64> = outcomes.iter().map(|o| o.value).collect();
    // prefer converged runs, then the smallest value
    let best = outcomes
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            (!a.converged, a.value)
                .partial_cmp(&(!b.converged, b.value))
                .expect("finite values")
        })
        .map(|(i, _)| i)
        .expect("at least one start");
    let conv: Vec<f64> = outcomes.iter().filter(|o| o.converged).map(|o| o.value).collect();
    let nonunique = conv.len() >= 2 && {
        let lo = conv.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = conv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        hi - lo > 0.01 * lo.abs().max(1e-12)
    };
    let o = &outcomes[best];
    Ok(RateResult {
        value: o.value,
        control: ControlGrid {
            t,
            dim: n,
            z: o.z.clone(),
        },
        terminal: o.terminal.clone(),
        terminal_gap: o.gap,
        converged: o.converged,
        penalty_final: o.mu,
        restart_values,
        possible_nonuniqueness: nonunique,
        refinement_change: None,
    })
}

/// Rate function `I(target; x₀, t)` by penalty continuation.
pub fn rate(avg: &AveragedCoeffs, op: &MonotoneOp, x0: &[f64], target: &[f64], t: f64, opts: &RateOptions) -> Result<RateResult, LdpError> {
    check_inputs(avg, op, x0, x0.len())?;
    if target.len() != x0.len() {
        return Err(LdpError::Invalid("target has wrong dimension".into()));
    }
    let d = op.distance_to_domain(target);
    if d > DOMAIN_TOL {
        return Err(MonotoneError::OutsideDomain { distance: d }.into());
    }
    if !(t > 0.0) || opts.steps == 0 {
        return Err(LdpError::Invalid("need t > 0 and at least one control step".into()));
    }
    let mut res = solve_rate(avg, op, x0, target, t, opts, None)?;
    if opts.refine && res.value > 0.0 {
        let fine = RateOptions {
            steps: 2 * opts.steps,
            random_starts: 0,
            ..*opts
        };
        let warm = res.control.refined().z;
        let fine_res = solve_rate(avg, op, x0, target, t, &fine, Some(warm))?;
        res.refinement_change = Some((fine_res.value - res.value).abs() / res.value.abs().max(1e-12));
    }
    Ok(res)
}

/// Bounded test function `h(x)` on the slow state space.
#[derive(Debug, Clone)]
pub struct TestFunction {
    field: CoeffField,
    source: String,
}

impl TestFunction {
    pub fn parse(source: &str, n: usize, params: &Params) -> Result<Self, LdpError> {
        let field = CoeffField::scalar(source, Dims::new(n, 1), params)?;
        if field.uses_y() {
            return Err(LdpError::Invalid("test function must not depend on the fast variable".into()));
        }
        Ok(TestFunction {
            field,
            source: source.to_string(),
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, LdpError> {
        Ok(self.field.eval(x, &[0.0])?[0])
    }

    /// `Some(c)` when `h ≡ c`.
    pub fn constant_value(&self) -> Option<f64> {
        if self.field.uses_x() {
            None
        } else {
            self.field.eval(&vec![0.0; self.field.dims().n], &[0.0]).ok().map(|v| v[0])
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariationalResult {
    pub value: f64,
    pub control: ControlGrid,
    pub terminal: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VariationalOptions {
    pub steps: usize,
    /// Straight-line starts aimed at this many points on each side of `x₀`.
    pub aim_points: usize,
    /// Half-width of the aim window in units of `σ̄₁√t`; at least 1.
    pub aim_width: f64,
}

impl Default for VariationalOptions {
    fn default() -> Self {
        VariationalOptions {
            steps: 32,
            aim_points: 4,
            aim_width: 3.0,
        }
    }
}

/// `u₀ʰ(t, x₀) = inf_z { ½∫|z|² + h(X^z(t)) }`.
pub fn variational_value(
    avg: &AveragedCoeffs,
    op: &MonotoneOp,
    x0: &[f64],
    t: f64,
    h: &TestFunction,
    opts: &VariationalOptions,
) -> Result<VariationalResult, LdpError> {
    let n = x0.len();
    check_inputs(avg, op, x0, n)?;
    if !(t > 0.0) || opts.steps == 0 {
        return Err(LdpError::Invalid("need t > 0 and at least one control step".into()));
    }
    let steps = opts.steps;
    let dt = t / steps as f64;
    if let Some(c) = h.constant_value() {
        let xt = terminal(avg, op, x0, &vec![0.0; steps * n], n, dt);
        return Ok(VariationalResult {
            value: c,
            control: ControlGrid::zeros(t, steps, n),
            terminal: xt,
        });
    }
    h.eval(x0)?;
    // aim at points along each axis around the free endpoint
    let free = terminal(avg, op, x0, &vec![0.0; steps * n], n, dt);
    let spread = (avg.bounds().1.sqrt() * t.sqrt()).max(1e-3) * opts.aim_width.max(1.0);
    let mut starts = vec![vec![0.0; steps * n]];
    for axis in 0..n {
        for k in 1..=opts.aim_points {
            for sign in [1.0, -1.0] {
                let mut aim = free.clone();
                aim[axis] += sign * spread * k as f64 / opts.aim_points as f64;
                op.project_in_place(&mut aim);
                starts.push(straight_line_start(avg, x0, &aim, t, steps));
            }
        }
    }
    let objective = |w: &[f64]| {
        let xt = terminal(avg, op, x0, w, n, dt);
        let a = 0.5 * w.iter().map(|v| v * v).sum::<f64>() * dt;
        a + h.eval(&xt).unwrap_or(f64::INFINITY)
    };
    let runs: Vec<(Vec<f64>, f64)> = starts
        .into_par_iter()
        .map(|z0| minimize(objective, z0, MinimizeOptions::default()))
        .collect();
    let (z, value) = runs
        .into_iter()
        .min_by(|a, b| a.1.partial_cmp(&b.1).expect("finite objective"))
        .expect("at least one start");
    if !value.is_finite() {
        return Err(LdpError::Invalid("test function undefined along every candidate path".into()));
    }
    let xt = terminal(avg, op, x0, &z, n, dt);
    Ok(VariationalResult {
        value,
        control: ControlGrid { t, dim: n, z },
        terminal: xt,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McConfig {
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
    /// Weights with a smaller effective sample size are rejected.
    pub min_ess: f64,
}

impl McConfig {
    pub fn new(paths: usize, dt: f64, seed: u64) -> Self {
        McConfig {
            paths,
            dt,
            seed,
            min_ess: 10.0,
        }
    }

    fn sim(&self, t: f64) -> SimConfig {
        SimConfig::new(self.dt, t, self.seed, self.paths)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaplaceResult {
    pub epsilon: f64,
    pub gamma: f64,
    pub estimate: Estimate,
    /// Effective sample size of the weights `exp(−h(X_t)/ε)`.
    pub ess: f64,
}

/// `−ε log E[exp(−h(X_t)/ε)]` from `paths` independent simulations.
pub fn laplace(spec: &SystemSpec, scales: ScaleParams, t: f64, h: &TestFunction, mc: &McConfig) -> Result<LaplaceResult, LdpError> {
    if mc.paths == 0 {
        return Err(LdpError::Invalid("need at least one path".into()));
    }
    let sim = mc.sim(t);
    sim.check_fast_stability(scales.gamma)?;
    if let Some(c) = h.constant_value() {
        return Ok(LaplaceResult {
            epsilon: scales.epsilon,
            gamma: scales.gamma,
            estimate: Estimate::scalar(c, 0.0, mc.paths),
            ess: mc.paths as f64,
        });
    }
    let terminals = map_paths(
        spec,
        scales,
        &sim,
        || Vec::new(),
        |acc: &mut Vec<f64>, _k, x, _y, _dk| {
            acc.clear();
            acc.extend_from_slice(x);
        },
        |acc| acc,
    )?;
    let eps = scales.epsilon;
    let logw: Vec<f64> = terminals
        .iter()
        .map(|x| h.eval(x).map(|v| -v / eps))
        .collect::<Result<_, _>>()?;
    let lmax = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - lmax).exp()).collect();
    let m = w.len() as f64;
    let sum: f64 = w.iter().sum();
    let sum2: f64 = w.iter().map(|v| v * v).sum();
    let ess = sum * sum / sum2;
    if ess < mc.min_ess.min(m) {
        return Err(LdpError::DegenerateWeights { ess });
    }
    let mean = sum / m;
    let value = -eps * (lmax + mean.ln());
    let stderr = if w.len() > 1 {
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
        eps * var.sqrt() / (mean * m.sqrt())
    } else {
        f64::INFINITY
    };
    Ok(LaplaceResult {
        epsilon: eps,
        gamma: scales.gamma,
        estimate: Estimate::scalar(value, stderr, mc.paths),
        ess,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TightnessRow {
    pub threshold: f64,
    pub exceed: usize,
    pub paths: usize,
    pub p_hat: f64,
    /// Binomial standard error of `p̂`.
    pub p_stderr: f64,
    /// `ε log p̂`; `None` when no path exceeded the threshold.
    pub eps_log_p: Option<f64>,
    /// `ε log` of the 95% Wilson interval.
    pub eps_log_lower: f64,
    pub eps_log_upper: f64,
    pub censored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TightnessReport {
    pub epsilon: f64,
    pub rows: Vec<TightnessRow>,
    /// Observed entries strictly decrease; censored entries act as upper bounds.
    pub decreasing: bool,
}

/// 95% Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    let z = 1.959_963_984_540_054;
    let n = n as f64;
    let p = k as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    let lo = if k == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if k as f64 == n { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// Fraction of paths with `sup_{s≤t}|X_s| > M` for each threshold `M`.
pub fn tightness_probe(spec: &SystemSpec, scales: ScaleParams, t: f64, thresholds: &[f64], mc: &McConfig) -> Result<TightnessReport, LdpError> {
    if thresholds.is_empty() || thresholds.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(LdpError::Invalid("thresholds must be nonempty and strictly increasing".into()));
    }
    let sim = mc.sim(t);
    let sup0: f64 = spec.x0.iter().map(|v| v * v).sum::<f64>().sqrt();
    let sups = map_paths(
        spec,
        scales,
        &sim,
        || sup0,
        |acc: &mut f64, _k, x, _y, _dk| {
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r > *acc {
                *acc = r;
            }
        },
        |acc| acc,
    )?;
    let eps = scales.epsilon;
    let n = sups.len();
    let rows: Vec<TightnessRow> = thresholds
        .iter()
        .map(|&m| {
            let k = sups.iter().filter(|s| **s > m).count();
            let p = k as f64 / n as f64;
            let (lo, hi) = wilson_interval(k, n);
            TightnessRow {
                threshold: m,
                exceed: k,
                paths: n,
                p_hat: p,
                p_stderr: (p * (1.0 - p) / n as f64).sqrt(),
                eps_log_p: (k > 0).then(|| eps * p.ln()),
                eps_log_lower: eps * lo.ln(),
                eps_log_upper: eps * hi.ln(),
                censored: k == 0,
            }
        })
        .collect();
    let decreasing = rows.windows(2).all(|w| match (w[0].eps_log_p, w[1].eps_log_p) {
        (Some(a), Some(b)) => b < a,
        (_, None) => true,
        (None, Some(_)) => false,
    });
    Ok(TightnessReport {
        epsilon: eps,
        rows,
        decreasing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(s: f64) -> AveragedCoeffs {
        AveragedCoeffs::constant(vec![0.0], vec![s * s]).unwrap()
    }

    #[test]
    fn action_examples() {
        assert_eq!(action(&ControlGrid::zeros(1.0, 8, 1)), 0.0);
        assert_eq!(action(&ControlGrid::constant(1.0, 10, &[2.0])), 2.0);
    }

    #[test]
    fn integrate_examples() {
        let z = ControlGrid::constant(2.0, 20, &[0.5]);
        let p = integrate_controlled(&flat(1.5), &MonotoneOp::Zero, &[0.1], &z).unwrap();
        assert!((p.terminal()[0] - (0.1 + 1.5 * 0.5 * 2.0)).abs() < 1e-12);
        let bx = MonotoneOp::normal_cone_box(vec![-1.0], vec![1.0]).unwrap();
        let z = ControlGrid::constant(1.0, 20, &[10.0]);
        let p = integrate_controlled(&flat(1.0), &bx, &[0.0], &z).unwrap();
        assert_eq!(p.terminal()[0], 1.0);
        assert!(p.dk.iter().map(|d| d[0]).sum::<f64>() > 0.0);
        let p = integrate_controlled(&flat(1.0), &bx, &[0.3], &ControlGrid::zeros(1.0, 5, 1)).unwrap();
        assert!(p.x.iter().all(|x| x[0] == 0.3));
    }

    #[test]
    fn rate_closed_form_and_trivial() {
        let r = rate(&flat(0.8), &MonotoneOp::Zero, &[0.0], &[0.0], 1.0, &RateOptions::default()).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.control.z.iter().all(|v| *v == 0.0));
        let r = rate(&flat(0.8), &MonotoneOp::Zero, &[0.0], &[0.5], 1.0, &RateOptions::default()).unwrap();
        let exact = 0.25 / (2.0 * 0.64);
        assert!(r.converged, "{r:?}");
        assert!((r.value - exact).abs() < 1e-3 * exact, "{} vs {exact}", r.value);
        let err = rate(&flat(0.0), &MonotoneOp::Zero, &[0.0], &[0.5], 1.0, &RateOptions::default()).unwrap_err();
        assert!(matches!(err, LdpError::Unreachable { .. }));
    }

    #[test]
    fn variational_constant_and_hopf_lax() {
        let h = TestFunction::parse("2.5", 1, &Params::new()).unwrap();
        let v = variational_value(&flat(0.8), &MonotoneOp::Zero, &[0.0], 1.0, &h, &VariationalOptions::default()).unwrap();
        assert_eq!(v.value, 2.5);
        let h = TestFunction::parse("(x0 - 1)^2", 1, &Params::new()).unwrap();
        let v = variational_value(&flat(0.8), &MonotoneOp::Zero, &[0.0], 1.0, &h, &VariationalOptions::default()).unwrap();
        // min_x x²/(2s²t) + (x−1)² with s²t = 0.64: x* = 1/(1 + 1/1.28)
        let xs = 1.0 / (1.0 + 1.0 / 1.28);
        let exact = xs * xs / 1.28 + (xs - 1.0) * (xs - 1.0);
        assert!((v.value - exact).abs() < 1e-6, "{} vs {exact}", v.value);
    }

    #[test]
    fn wilson_bounds() {
        let (lo, hi) = wilson_interval(0, 100);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.05);
        let (lo, hi) = wilson_interval(50, 100);
        assert!(lo < 0.5 && hi > 0.5);
    }
}
