use osctrack::certify::{bound_constants, c1, c2, CertificateInputs, Provenance};
use osctrack::controller::{coefficients, Controller, ControllerParams};
use osctrack::linalg::Matrix;
use osctrack::metrics::tube_distance;
use osctrack::scenarios::{rear_wheel_car, underwater_vehicle, unicycle};
use osctrack::systems::{lie_bracket, BracketField, GainBasis};
use proptest::prelude::*;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter()
        .zip(b)
        .all(|(x, y)| (x - y).abs() <= tol * x.abs().max(y.abs()).max(1.0))
}

fn state(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.4f64..1.4, n)
}

proptest! {
    #[test]
    fn brackets_are_antisymmetric(x in state(6)) {
        let s = underwater_vehicle::<f64>();
        for i in 0..4 {
            for j in 0..4 {
                let fg = s.system.bracket(i, j, &x).unwrap();
                let gf = s.system.bracket(j, i, &x).unwrap();
                let neg: Vec<f64> = gf.iter().map(|v| -v).collect();
                prop_assert!(close(&fg, &neg, 1e-12));
            }
        }
    }

    #[test]
    fn jacobi_identity_holds(x in state(4)) {
        let s = rear_wheel_car::<f64>();
        let f = s.system.field(0).clone();
        let g = s.system.field(1).clone();
        let h = BracketField::new(f.clone(), g.clone()).unwrap().into_ref();
        let fg = BracketField::new(f.clone(), g.clone()).unwrap();
        let gh = BracketField::new(g.clone(), h.clone()).unwrap();
        let hf = BracketField::new(h.clone(), f.clone()).unwrap();
        let a = lie_bracket(&fg, h.as_ref(), &x).unwrap();
        let b = lie_bracket(&gh, f.as_ref(), &x).unwrap();
        let c = lie_bracket(&hf, g.as_ref(), &x).unwrap();
        let sum: Vec<f64> = (0..4).map(|k| a[k] + b[k] + c[k]).collect();
        let scale = norm(&a).max(norm(&b)).max(norm(&c)).max(1.0);
        prop_assert!(norm(&sum) <= 1e-6 * scale, "sum = {sum:?}");
    }

    #[test]
    fn lu_solve_round_trips(entries in prop::collection::vec(-1.0f64..1.0, 16), rhs in prop::collection::vec(-5.0f64..5.0, 4)) {
        let mut m = Matrix::zeros(4, 4);
        for i in 0..4 {
            for j in 0..4 {
                m[(i, j)] = entries[4 * i + j] + if i == j { 5.0 } else { 0.0 };
            }
        }
        let x = m.lu().solve(&rhs).unwrap();
        prop_assert!(close(&m.mul_vec(&x), &rhs, 1e-12));
    }

    #[test]
    fn coefficients_solve_the_gain_system(x in state(4), e in prop::collection::vec(-2.0f64..2.0, 4), alpha in 0.5f64..20.0) {
        let s = rear_wheel_car::<f64>();
        let basis = GainBasis::new(&s.system, &s.scheme).unwrap();
        let params = ControllerParams::new(alpha, 0.1).unwrap();
        let gamma: Vec<f64> = x.iter().zip(&e).map(|(a, b)| a - b).collect();
        let a = coefficients(&basis, &params, &x, &gamma).unwrap();
        let back = basis.matrix(&x).unwrap().mul_vec(&a);
        let target: Vec<f64> = e.iter().map(|v| -alpha * v).collect();
        prop_assert!(close(&back, &target, 1e-9));
    }

    #[test]
    fn control_magnitude_is_bounded(
        x in state(3),
        e in prop::collection::vec(-1.0f64..1.0, 3),
        t in 0.0f64..10.0,
        eps in 0.001f64..0.5,
        alpha in 0.5f64..20.0,
    ) {
        // unicycle: μ = 1, so Σ|u| ≤ C1‖e‖ + C2 √(‖e‖/ε)
        let s = unicycle::<f64>();
        let basis = GainBasis::new(&s.system, &s.scheme).unwrap();
        let c = Controller::new(basis, s.scheme.clone(), ControllerParams::new(alpha, eps).unwrap()).unwrap();
        let gamma: Vec<f64> = x.iter().zip(&e).map(|(a, b)| a - b).collect();
        let a = c.coefficients(&x, &gamma).unwrap();
        let u = c.control(t, &a);
        let total: f64 = u.iter().map(|v| v.abs()).sum();
        let en = norm(&e);
        let bound = c1(&s.scheme, alpha, 1.0) * en + c2(&s.scheme, alpha, 1.0) * (en / eps).sqrt();
        prop_assert!(total <= bound * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn tube_distance_is_one_lipschitz(
        x in prop::collection::vec(-3.0f64..3.0, 3),
        y in prop::collection::vec(-3.0f64..3.0, 3),
        g in prop::collection::vec(-3.0f64..3.0, 3),
        rho in 0.01f64..2.0,
    ) {
        let dx = norm(&x.iter().zip(&g).map(|(a, b)| a - b).collect::<Vec<_>>());
        let dy = norm(&y.iter().zip(&g).map(|(a, b)| a - b).collect::<Vec<_>>());
        let dxy = norm(&x.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>());
        prop_assert!((tube_distance(dx, rho) - tube_distance(dy, rho)).abs() <= dxy + 1e-12);
    }

    #[test]
    fn eps_hat_is_monotone(nu in 0.0f64..3.0, dnu in 0.0f64..1.0, rho in 0.35f64..0.95, drho in 0.0f64..0.04) {
        let s = unicycle::<f64>();
        let params = ControllerParams::new(15.0, 0.1).unwrap();
        let inputs = |nu: f64, rho: f64| CertificateInputs {
            r: f64::INFINITY,
            rho,
            rho_prime: 0.3,
            delta: 1.0,
            delta_prime: 1.5,
            nu,
            lambda: 1.0,
            bounds: s.analytic_bounds.unwrap(),
            provenance: Provenance::Analytic,
        };
        let hat = |nu: f64, rho: f64| {
            bound_constants(&s.scheme, &params, &inputs(nu, rho)).unwrap().certificate().unwrap().eps_hat
        };
        prop_assert!(hat(nu + dnu, rho) <= hat(nu, rho));
        prop_assert!(hat(nu, rho + drho) >= hat(nu, rho));
    }
}
