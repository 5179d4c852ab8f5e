//! Explicit monotone scheme for the one-dimensional limit equation
//!
//! ```text
//! ∂ₜu ∈ H̄(x, ∂ₓu) − ⟨A(x), ∂ₓu⟩,   u(0, ·) = h,
//! H̄(x, p) = b̄₁(x)p − ½ā₁(x)p²
//! ```
//!
//! Interior nodes use a Lax–Friedrichs flux. On a box domain the endpoint
//! nodes use the Hamiltonian of the reflected control problem, in which the
//! velocity `b̄₁ + σ̄₁z` loses its outward component; this is the discrete
//! form of the normal-cone term and only uses the inward one-sided slope.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::averaging::AveragedCoeffs;
use crate::ldp::{LdpError, TestFunction};
use crate::monotone::MonotoneOp;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HjbError {
    #[error("CFL condition violated: dt = {dt:.3e} exceeds dx/theta = {limit:.3e}")]
    Cfl { dt: f64, limit: f64 },
    #[error("operator not supported by the 1D solver (use zero or a box)")]
    Unsupported,
    #[error("invalid grid: {0}")]
    Invalid(String),
    #[error(transparent)]
    TestFunction(#[from] LdpError),
}

/// `H̄(x,p) = ⟨b̄₁(x),p⟩ − ½⟨ā₁(x)p,p⟩`.
pub fn hamiltonian(avg: &AveragedCoeffs, x: &[f64], p: &[f64]) -> f64 {
    avg.hamiltonian(x, p)
}

/// `⟨b̄₁,p⟩ − sup_z {−⟨p, σ̄₁z⟩ − |z|²/2}` with the supremum taken over the
/// grid `z ∈ [−z_max, z_max]`, `nz` points (one-dimensional states only).
pub fn hamiltonian_by_sup(avg: &AveragedCoeffs, x: f64, p: f64, z_max: f64, nz: usize) -> f64 {
    let b = avg.bbar(&[x])[0];
    let s = avg.sigbar(&[x])[0];
    let sup = (0..nz)
        .map(|i| {
            let z = -z_max + 2.0 * z_max * i as f64 / (nz - 1) as f64;
            -p * s * z - 0.5 * z * z
        })
        .fold(f64::NEG_INFINITY, f64::max);
    b * p - sup
}

/// Right endpoint: velocity `min(b + s z, 0)`.
/// `inf_z {½z² + p·min(b + s z, 0)}`
fn reflected_right(b: f64, a: f64, p: f64) -> f64 {
    if a <= 0.0 {
        return p * b.min(0.0);
    }
    let phi = |v: f64| (v - b).powi(2) / (2.0 * a) + p * v.min(0.0);
    phi((b - a * p).min(0.0)).min(phi(b.max(0.0)))
}

/// Left endpoint: velocity `max(b + s z, 0)`.
fn reflected_left(b: f64, a: f64, p: f64) -> f64 {
    if a <= 0.0 {
        return p * b.max(0.0);
    }
    let phi = |v: f64| (v - b).powi(2) / (2.0 * a) + p * v.max(0.0);
    phi((b - a * p).max(0.0)).min(phi(b.min(0.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HjbConfig {
    pub dx: f64,
    /// Time step; `None` picks the largest stable one times `cfl_safety`.
    pub dt: Option<f64>,
    pub t_final: f64,
    /// Computational window for the zero operator. Ignored for boxes.
    pub window: (f64, f64),
    pub cfl_safety: f64,
}

impl HjbConfig {
    pub fn new(dx: f64, t_final: f64, window: (f64, f64)) -> Self {
        HjbConfig {
            dx,
            dt: None,
            t_final,
            window,
            cfl_safety: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSolution {
    pub xs: Vec<f64>,
    pub times: Vec<f64>,
    /// `values[n][j] = u(t_n, x_j)`.
    pub values: Vec<Vec<f64>>,
    pub dx: f64,
    pub dt: f64,
    /// Lax–Friedrichs viscosity coefficient.
    pub theta: f64,
    /// Slope range over which `theta` dominates `|∂ₚH̄|`.
    pub slope_bound: f64,
    /// Largest discrete slope seen during the run.
    pub max_slope: f64,
    /// Whether the endpoints carry the reflected boundary flux.
    pub reflecting: bool,
}

impl GridSolution {
    pub fn final_values(&self) -> &[f64] {
        self.values.last().expect("initial level is always stored")
    }

    /// Linear interpolation of the final level.
    pub fn interpolate(&self, x: f64) -> f64 {
        let u = self.final_values();
        let xs = &self.xs;
        if x <= xs[0] {
            return u[0];
        }
        if x >= xs[xs.len() - 1] {
            return u[u.len() - 1];
        }
        let k = (((x - xs[0]) / self.dx).floor() as usize).min(xs.len() - 2);
        let w = (x - xs[k]) / self.dx;
        u[k] * (1.0 - w) + u[k + 1] * w
    }

    /// `(t, x, u)` rows at `count` roughly equispaced time levels (first and
    /// last always included).
    pub fn snapshots(&self, count: usize) -> Vec<(f64, f64, f64)> {
        let last = self.times.len() - 1;
        let mut levels: Vec<usize> = (0..count.max(2)).map(|i| i * last / (count.max(2) - 1)).collect();
        levels.dedup();
        let mut rows = Vec::new();
        for n in levels {
            for (j, x) in self.xs.iter().enumerate() {
                rows.push((self.times[n], *x, self.values[n][j]));
            }
        }
        rows
    }
}

pub fn solve_1d(avg: &AveragedCoeffs, op: &MonotoneOp, h: &TestFunction, cfg: &HjbConfig) -> Result<GridSolution, HjbError> {
    if avg.n() != 1 {
        return Err(HjbError::Invalid("the grid solver is one-dimensional".into()));
    }
    let (lo, hi, reflecting) = match op {
        MonotoneOp::Zero => (cfg.window.0, cfg.window.1, false),
        MonotoneOp::NormalConeBox { lower, upper } if lower.len() == 1 => (lower[0], upper[0], true),
        _ => return Err(HjbError::Unsupported),
    };
    if !(cfg.dx > 0.0) || !(hi > lo) || !(cfg.t_final > 0.0) {
        return Err(HjbError::Invalid("need dx > 0, a nonempty window and t_final > 0".into()));
    }
    let cells = ((hi - lo) / cfg.dx).round() as usize;
    if cells < 2 || ((cells as f64) * cfg.dx - (hi - lo)).abs() > 1e-9 * (hi - lo) {
        return Err(HjbError::Invalid(format!("dx {} must divide the window length {}", cfg.dx, hi - lo)));
    }
    let dx = cfg.dx;
    let xs: Vec<f64> = (0..=cells).map(|j| lo + j as f64 * dx).collect();
    let u0: Vec<f64> = xs.iter().map(|x| h.eval(&[*x])).collect::<Result<_, _>>()?;
    let b: Vec<f64> = xs.iter().map(|x| avg.bbar(&[*x])[0]).collect();
    let a: Vec<f64> = xs.iter().map(|x| avg.abar(&[*x])[0]).collect();
    let slope0 = u0.windows(2).map(|w| ((w[1] - w[0]) / dx).abs()).fold(0.0, f64::max);
    // θ must dominate |∂ₚH̄| over the slopes that actually occur; start from
    // the slopes of h and enlarge if the run exceeds them
    let mut slope_bound = slope0;
    for _ in 0..20 {
        let run = march(&xs, &u0, &b, &a, slope_bound, reflecting, cfg)?;
        if run.max_slope <= slope_bound * (1.0 + 1e-9) + 1e-12 {
            let times = (0..run.values.len()).map(|n| n as f64 * run.dt).collect();
            return Ok(GridSolution {
                xs,
                times,
                values: run.values,
                dx,
                dt: run.dt,
                theta: run.theta,
                slope_bound,
                max_slope: run.max_slope,
                reflecting,
            });
        }
        slope_bound = 1.25 * run.max_slope;
    }
    Err(HjbError::Invalid("discrete slopes keep growing; refine the grid".into()))
}

struct March {
    values: Vec<Vec<f64>>,
    dt: f64,
    theta: f64,
    max_slope: f64,
}

fn march(xs: &[f64], u0: &[f64], b: &[f64], a: &[f64], slope_bound: f64, reflecting: bool, cfg: &HjbConfig) -> Result<March, HjbError> {
    let dx = cfg.dx;
    let theta = b
        .iter()
        .zip(a)
        .map(|(bi, ai)| bi.abs() + ai * slope_bound)
        .fold(0.0, f64::max)
        .max(1e-12);
    let limit = dx / theta;
    let (dt, steps) = match cfg.dt {
        Some(dt) => {
            if dt > limit * (1.0 + 1e-12) {
                return Err(HjbError::Cfl { dt, limit });
            }
            let steps = (cfg.t_final / dt).round() as usize;
            if steps == 0 || ((steps as f64) * dt - cfg.t_final).abs() > 1e-9 * cfg.t_final {
                return Err(HjbError::Invalid(format!("dt {dt} must divide t_final {}", cfg.t_final)));
            }
            (dt, steps)
        }
        None => {
            let steps = (cfg.t_final / (cfg.cfl_safety * limit)).ceil().max(1.0) as usize;
            (cfg.t_final / steps as f64, steps)
        }
    };
    let mut values = Vec::with_capacity(steps + 1);
    values.push(u0.to_vec());
    let mut max_slope = 0.0f64;
    let last = xs.len() - 1;
    for _ in 0..steps {
        let u = values.last().expect("nonempty");
        let next: Vec<f64> = (0..=last)
            .into_par_iter()
            .map(|j| {
                let pm = if j > 0 { (u[j] - u[j - 1]) / dx } else { 0.0 };
                let pp = if j < last { (u[j + 1] - u[j]) / dx } else { 0.0 };
                let rate = if reflecting && j == 0 {
                    reflected_left(b[j], a[j], pp)
                } else if reflecting && j == last {
                    reflected_right(b[j], a[j], pm)
                } else {
                    let p = 0.5 * (pp + pm);
                    b[j] * p - 0.5 * a[j] * p * p + 0.5 * theta * (pp - pm)
                };
                u[j] + dt * rate
            })
            .collect();
        let s = next.windows(2).map(|w| ((w[1] - w[0]) / dx).abs()).fold(0.0, f64::max);
        max_slope = max_slope.max(s);
        values.push(next);
    }
    Ok(March {
        values,
        dt,
        theta,
        max_slope,
    })
}
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    /// Largest `|∂ₜu − H̄(x, ∂ₓu)|` over checked points.
    pub max_residual: f64,
    pub checked: usize,
    pub excluded: usize,
}

/// Consistency residual at interior nodes where the discrete solution is
/// locally smooth. Nodes whose second difference exceeds `10·Δx²`, and their
/// neighbours in space and time, are skipped.
pub fn residual_check(sol: &GridSolution, avg: &AveragedCoeffs) -> ResidualReport {
    let nt = sol.values.len();
    let nx = sol.xs.len();
    let dx = sol.dx;
    let mut kink = vec![vec![false; nx]; nt];
    for (n, row) in sol.values.iter().enumerate() {
        for j in 1..nx - 1 {
            if (row[j + 1] - 2.0 * row[j] + row[j - 1]).abs() > 10.0 * dx * dx {
                kink[n][j] = true;
            }
        }
    }
    let near = |n: usize, j: usize| {
        (n.saturating_sub(1)..=(n + 1).min(nt - 1)).any(|m| (j - 1..=j + 1).any(|k| kink[m][k]))
    };
    let mut worst = 0.0f64;
    let (mut checked, mut excluded) = (0, 0);
    for n in 1..nt.saturating_sub(1) {
        for j in 2..nx.saturating_sub(2) {
            if near(n, j) {
                excluded += 1;
                continue;
            }
            checked += 1;
            let ut = (sol.values[n + 1][j] - sol.values[n - 1][j]) / (2.0 * sol.dt);
            let ux = (sol.values[n][j + 1] - sol.values[n][j - 1]) / (2.0 * dx);
            let r = (ut - avg.hamiltonian(&[sol.xs[j]], &[ux])).abs();
            worst = worst.max(r);
        }
    }
    ResidualReport {
        max_residual: worst,
        checked,
        excluded,
    }
}

/// `min_y {(x − y)²/(2ā t) + h(y)}` by scanning `ys` (constant `ā`, zero drift).
pub fn hopf_lax(abar: f64, t: f64, x: f64, h: impl Fn(f64) -> f64, ys: &[f64]) -> f64 {
    ys.iter()
        .map(|y| (x - y).powi(2) / (2.0 * abar * t) + h(*y))
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Params;

    fn flat(a: f64) -> AveragedCoeffs {
        AveragedCoeffs::constant(vec![0.0], vec![a]).unwrap()
    }

    #[test]
    fn hamiltonian_examples() {
        let c = flat(0.25);
        assert_eq!(hamiltonian(&c, &[0.3], &[0.0]), 0.0);
        assert_eq!(hamiltonian(&c, &[0.3], &[1.0]), -0.125);
        let by_sup = hamiltonian_by_sup(&c, 0.3, 1.0, 5.0, 10_001);
        assert!((by_sup + 0.125).abs() < 1e-3);
    }

    #[test]
    fn reflected_hamiltonian_limits() {
        // outward-pointing slope with inward drift: reflection inactive
        assert!((reflected_right(-1.0, 0.0, 2.0) + 2.0).abs() < 1e-15);
        // zero slope: staying put costs nothing
        assert_eq!(reflected_right(0.3, 0.5, 0.0), 0.0);
        assert_eq!(reflected_left(-0.3, 0.5, 0.0), 0.0);
        // p ≤ 0 at the right end: moving left never pays, value 0
        assert_eq!(reflected_right(0.0, 0.5, -1.0), 0.0);
        // p > 0 at the right end: same as the free Hamiltonian when the optimal
        // velocity points inward
        let (b, a, p) = (0.0, 0.5, 1.0);
        assert!((reflected_right(b, a, p) - (b * p - 0.5 * a * p * p)).abs() < 1e-15);
    }

    #[test]
    fn constants_preserved() {
        let h = TestFunction::parse("0.7", 1, &Params::new()).unwrap();
        let sol = solve_1d(&flat(0.6), &MonotoneOp::Zero, &h, &HjbConfig::new(0.05, 0.5, (-1.0, 1.0))).unwrap();
        assert!(sol.final_values().iter().all(|u| (*u - 0.7).abs() <= 1e-12));
        let bx = MonotoneOp::normal_cone_box(vec![-1.0], vec![1.0]).unwrap();
        let sol = solve_1d(&flat(0.6), &bx, &h, &HjbConfig::new(0.05, 0.5, (0.0, 0.0))).unwrap();
        assert!(sol.final_values().iter().all(|u| (*u - 0.7).abs() <= 1e-12));
        assert_eq!(residual_check(&sol, &flat(0.6)).max_residual, 0.0);
    }

    #[test]
    fn cfl_violation_rejected() {
        let h = TestFunction::parse("x0", 1, &Params::new()).unwrap();
        let mut cfg = HjbConfig::new(0.01, 0.5, (-1.0, 1.0));
        cfg.dt = Some(0.05);
        assert!(matches!(solve_1d(&flat(1.0), &MonotoneOp::Zero, &h, &cfg), Err(HjbError::Cfl { .. })));
    }

    #[test]
    fn matches_hopf_lax_in_the_interior() {
        let h = TestFunction::parse("min(1, abs(x0 - 0.4))", 1, &Params::new()).unwrap();
        let a = 0.6;
        let sol = solve_1d(&flat(a), &MonotoneOp::Zero, &h, &HjbConfig::new(0.01, 0.5, (-3.0, 3.8))).unwrap();
        let ys: Vec<f64> = (0..=80_000).map(|i| -4.0 + i as f64 * 1e-4).collect();
        let hf = |y: f64| (y - 0.4f64).abs().min(1.0);
        for x in [-0.5, 0.0, 0.4, 0.8, 1.5] {
            let exact = hopf_lax(a, 0.5, x, hf, &ys);
            assert!((sol.interpolate(x) - exact).abs() < 2e-2, "x={x}");
        }
    }
}
