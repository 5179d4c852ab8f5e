//! Quasi-Newton minimisation with finite-difference gradients.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub(crate) struct MinimizeOptions {
    pub max_iter: usize,
    /// Stop when `‖g‖∞ ≤ grad_tol`.
    pub grad_tol: f64,
    /// Relative step of the central differences, `h_i = rel_step·(1 + |z_i|)`.
    pub rel_step: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            max_iter: 400,
            grad_tol: 1e-10,
            rel_step: 1e-5,
        }
    }
}

pub(crate) fn central_gradient(f: &impl Fn(&[f64]) -> f64, z: &[f64], rel_step: f64, out: &mut [f64]) {
    let mut w = z.to_vec();
    for i in 0..z.len() {
        let h = rel_step * (1.0 + z[i].abs());
        w[i] = z[i] + h;
        let fp = f(&w);
        w[i] = z[i] - h;
        let fm = f(&w);
        w[i] = z[i];
        out[i] = (fp - fm) / (2.0 * h);
    }
}

/// BFGS on the inverse Hessian with Armijo backtracking. Returns the final
/// point and value.
pub(crate) fn minimize(f: impl Fn(&[f64]) -> f64, z0: Vec<f64>, opts: MinimizeOptions) -> (Vec<f64>, f64) {
    let n = z0.len();
    if n == 0 {
        let v = f(&z0);
        return (z0, v);
    }
    let mut z = DVector::from_vec(z0);
    let mut fz = f(z.as_slice());
    let mut g = DVector::zeros(n);
    central_gradient(&f, z.as_slice(), opts.rel_step, g.as_mut_slice());
    let mut hinv = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    for _ in 0..opts.max_iter {
        if g.amax() <= opts.grad_tol {
            break;
        }
        let mut d = -(&hinv * &g);
        let mut slope = g.dot(&d);
        if !(slope < 0.0) {
            hinv = DMatrix::identity(n, n);
            fresh = true;
            d = -g.clone();
            slope = g.dot(&d);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..80 {
            let trial = &z + &d * step;
            let ft = f(trial.as_slice());
            if ft.is_finite() && ft <= fz + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((zn, fnew)) = accepted else {
            if fresh {
                break;
            }
            // retry once along steepest descent
            hinv = DMatrix::identity(n, n);
            fresh = true;
            continue;
        };
        let mut gn = DVector::zeros(n);
        central_gradient(&f, zn.as_slice(), opts.rel_step, gn.as_mut_slice());
        let s = &zn - &z;
        let y = &gn - &g;
        let sy = s.dot(&y);
        let decrease = fz - fnew;
        z = zn;
        g = gn;
        fz = fnew;
        if sy > 1e-12 * s.norm() * y.norm() {
            if fresh {
                hinv *= sy / y.dot(&y);
                fresh = false;
            }
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            // H⁺ = H − ρ(s·Hyᵀ + Hy·sᵀ) + (ρ²·yᵀHy + ρ) s sᵀ
            hinv -= (&s * hy.transpose() + &hy * s.transpose()) * rho;
            hinv += (&s * s.transpose()) * (rho * rho * yhy + rho);
        }
        if decrease <= 1e-16 * fz.abs().max(1e-300) {
            break;
        }
    }
    (z.as_slice().to_vec(), fz)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |z: &[f64]| (1.0 - z[0]).powi(2) + 100.0 * (z[1] - z[0] * z[0]).powi(2);
        let (z, v) = minimize(f, vec![-1.2, 1.0], MinimizeOptions::default());
        assert!(v < 1e-10, "v={v}");
        assert!((z[0] - 1.0).abs() < 1e-4 && (z[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn ill_conditioned_quadratic() {
        let f = |z: &[f64]| 0.5 * z[0] * z[0] + 0.5e6 * (z[0] + z[1] - 1.0).powi(2);
        let (z, _) = minimize(f, vec![0.0, 0.0], MinimizeOptions::default());
        let g0 = z[0] + 1e6 * (z[0] + z[1] - 1.0);
        let g1 = 1e6 * (z[0] + z[1] - 1.0);
        assert!(g0.abs() < 1e-5 && g1.abs() < 1e-5, "{z:?}");
    }
}
