//! Resolvents against closed forms and the defining inclusion.

use mvldp::golden::{resolvent_ratio, sample_operators};
use mvldp::monotone::MonotoneOp;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn nonexpansive_on_ten_thousand_pairs() {
    for (name, op, dim) in sample_operators() {
        let r = resolvent_ratio(&op, dim, 10_000, 17);
        assert!(r <= 1.0 + 1e-12, "{name}: ratio {r}");
    }
}

/// `x = J_λ(x + λv)` for every `v ∈ A(x)`.
#[test]
fn resolvent_inverts_the_graph() {
    for (name, op, dim) in sample_operators() {
        for (i, (x, v)) in op.graph_sample(dim, 5, 500).into_iter().enumerate() {
            for lambda in [0.01, 0.3, 4.0] {
                let z: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + lambda * b).collect();
                let j = op.resolvent(lambda, &z);
                assert!(dist(&j, &x) <= 1e-10 * (1.0 + dist(&z, &x)), "{name} sample {i}: {j:?} vs {x:?}");
            }
        }
    }
}

proptest! {
    #[test]
    fn box_resolvent_is_clamp(z in prop::collection::vec(-5.0f64..5.0, 3), lambda in 0.01f64..10.0) {
        let op = MonotoneOp::normal_cone_box(vec![-1.0, 0.0, -2.0], vec![1.0, 0.5, 3.0]).unwrap();
        let lo = [-1.0, 0.0, -2.0];
        let hi = [1.0, 0.5, 3.0];
        let want: Vec<f64> = (0..3).map(|i| z[i].max(lo[i]).min(hi[i])).collect();
        prop_assert_eq!(op.resolvent(lambda, &z), want);
    }

    #[test]
    fn ball_resolvent_is_radial(z in prop::collection::vec(-5.0f64..5.0, 2), lambda in 0.01f64..10.0) {
        let c = [0.5, -0.25];
        let r = 1.5;
        let op = MonotoneOp::normal_cone_ball(c.to_vec(), r).unwrap();
        let d = dist(&z, &c);
        let want: Vec<f64> = if d <= r { z.clone() } else { (0..2).map(|i| c[i] + r * (z[i] - c[i]) / d).collect() };
        prop_assert!(dist(&op.resolvent(lambda, &z), &want) <= 1e-12);
    }

    #[test]
    fn abs_resolvent_is_soft_threshold(z in -5.0f64..5.0, lambda in 0.01f64..10.0, w in 0.1f64..3.0) {
        let op = MonotoneOp::subdiff_abs(w).unwrap();
        let t = lambda * w;
        let want = if z > t { z - t } else if z < -t { z + t } else { 0.0 };
        prop_assert!((op.resolvent(lambda, &[z])[0] - want).abs() <= 1e-12);
    }

    #[test]
    fn quadratic_resolvent_solves_linear_system(z in prop::collection::vec(-5.0f64..5.0, 2), lambda in 0.01f64..10.0) {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let op = MonotoneOp::subdiff_quadratic(q.clone()).unwrap();
        let j = DVector::from_vec(op.resolvent(lambda, &z));
        // residual of (I + λQ) j = z
        let res = &j + &q * &j * lambda - DVector::from_column_slice(&z);
        prop_assert!(res.norm() <= 1e-10 * (1.0 + j.norm()));
    }

    #[test]
    fn projection_is_idempotent(z in prop::collection::vec(-6.0f64..6.0, 3)) {
        for op in [
            MonotoneOp::normal_cone_box(vec![-1.0; 3], vec![0.5; 3]).unwrap(),
            MonotoneOp::normal_cone_ball(vec![0.2; 3], 1.3).unwrap(),
        ] {
            let p = op.project(&z);
            prop_assert_eq!(op.project(&p), p.clone());
            prop_assert!(op.in_domain_closure(&p));
        }
    }
}
