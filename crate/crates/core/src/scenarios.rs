//! Built-in example systems: unicycle, 3D underwater vehicle and rear-wheel
//! driving car, each with analytic fields and Jacobians.

use std::f64::consts::FRAC_PI_2;

use crate::certify::SupBounds;
use crate::controller::ControllerParams;
use crate::error::{Error, Result};
use crate::integrator::{default_substeps, MIN_SUBSTEPS};
use crate::linalg::Matrix;
use crate::systems::{BracketPair, BracketScheme, ControlSystem, FnField, NestedBracket};
use crate::Real;

pub const SCENARIO_NAMES: [&str; 3] = ["unicycle", "underwater", "car"];

/// A system with its bracket scheme and the defaults used for its reference run.
#[derive(Debug, Clone)]
pub struct Scenario<T> {
    pub name: String,
    pub system: ControlSystem<T>,
    pub scheme: BracketScheme,
    pub default_params: ControllerParams<T>,
    pub default_curve: String,
    pub default_x0: Vec<T>,
    pub horizon: T,
    /// Closed-form sup bounds, where they are known exactly.
    pub analytic_bounds: Option<SupBounds<T>>,
    /// Radius of the tube around the default curve used for rank checks.
    pub tube_radius: T,
    /// Floor on RK4 steps per interval, on top of the frequency rule.
    pub min_substeps: usize,
}

impl<T: Real> Scenario<T> {
    /// Default RK4 steps per sampling interval for this scenario.
    pub fn substeps(&self) -> usize {
        default_substeps(&self.scheme).max(self.min_substeps)
    }
}

fn jac<T: Real>(n: usize, entries: &[(usize, usize, T)]) -> Matrix<T> {
    let mut m = Matrix::zeros(n, n);
    for &(i, k, v) in entries {
        m[(i, k)] = v;
    }
    m
}

/// `ẋ₁ = u₁ cos x₃, ẋ₂ = u₁ sin x₃, ẋ₃ = u₂` with `S1 = {1, 2}`,
/// `S2 = {(1, 2)}`, `κ₁₂ = 1`, `α = 15`, `ε = 0.1`.
pub fn unicycle<T: Real>() -> Scenario<T> {
    let z = T::zero();
    let f1 = FnField::new(
        "f1",
        3,
        move |x: &[T]| vec![x[2].cos(), x[2].sin(), z],
        |x: &[T]| jac(3, &[(0, 2, -x[2].sin()), (1, 2, x[2].cos())]),
    );
    let f2 = FnField::new(
        "f2",
        3,
        move |_: &[T]| vec![z, z, T::one()],
        |_: &[T]| Matrix::zeros(3, 3),
    );
    let system = ControlSystem::new("unicycle", 3, vec![f1.into_ref(), f2.into_ref()])
        .expect("unicycle shape");
    Scenario {
        name: "unicycle".into(),
        system,
        scheme: BracketScheme::new(
            vec![0, 1],
            vec![BracketPair {
                first: 0,
                second: 1,
                kappa: 1,
            }],
        ),
        default_params: ControllerParams::new(T::lit(15.0), T::lit(0.1)).expect("valid defaults"),
        default_curve: "gamma1".into(),
        default_x0: vec![T::one(), -T::one(), z],
        horizon: T::lit(40.0),
        // |f_i| = 1, F orthogonal, Lie derivatives of unit size, L_{f2} L_{f2} f1 the only
        // non-zero second derivative.
        analytic_bounds: Some(SupBounds {
            m1: T::one(),
            m2: T::one(),
            m3: T::one() / T::lit(6.0),
            lipschitz: T::one(),
            mu: T::one(),
        }),
        tube_radius: T::one(),
        min_substeps: MIN_SUBSTEPS,
    }
}

/// Autonomous underwater vehicle on ℝ⁶ with four inputs, `S2 = {(1,3), (1,4)}`,
/// `κ₁₃ = 1`, `κ₁₄ = 2`, domain `|x₅| < π/2`.
pub fn underwater_vehicle<T: Real>() -> Scenario<T> {
    let z = T::zero();
    let one = T::one();
    let f1 = FnField::new(
        "f1",
        6,
        move |x: &[T]| {
            let (c5, s5, c6, s6) = (x[4].cos(), x[4].sin(), x[5].cos(), x[5].sin());
            vec![c5 * c6, c5 * s6, -s5, z, z, z]
        },
        |x: &[T]| {
            let (c5, s5, c6, s6) = (x[4].cos(), x[4].sin(), x[5].cos(), x[5].sin());
            jac(
                6,
                &[
                    (0, 4, -s5 * c6),
                    (0, 5, -c5 * s6),
                    (1, 4, -s5 * s6),
                    (1, 5, c5 * c6),
                    (2, 4, -c5),
                ],
            )
        },
    );
    let f2 = FnField::new(
        "f2",
        6,
        move |_: &[T]| vec![z, z, z, one, z, z],
        |_: &[T]| Matrix::zeros(6, 6),
    );
    let f3 = FnField::new(
        "f3",
        6,
        move |x: &[T]| {
            let (c4, s4) = (x[3].cos(), x[3].sin());
            let sec5 = one / x[4].cos();
            vec![z, z, z, s4 * x[4].tan(), c4, s4 * sec5]
        },
        |x: &[T]| {
            let (c4, s4) = (x[3].cos(), x[3].sin());
            let (t5, sec5) = (x[4].tan(), T::one() / x[4].cos());
            jac(
                6,
                &[
                    (3, 3, c4 * t5),
                    (3, 4, s4 * sec5 * sec5),
                    (4, 3, -s4),
                    (5, 3, c4 * sec5),
                    (5, 4, s4 * sec5 * t5),
                ],
            )
        },
    );
    let f4 = FnField::new(
        "f4",
        6,
        move |x: &[T]| {
            let (c4, s4) = (x[3].cos(), x[3].sin());
            let sec5 = one / x[4].cos();
            vec![z, z, z, c4 * x[4].tan(), -s4, c4 * sec5]
        },
        |x: &[T]| {
            let (c4, s4) = (x[3].cos(), x[3].sin());
            let (t5, sec5) = (x[4].tan(), T::one() / x[4].cos());
            jac(
                6,
                &[
                    (3, 3, -s4 * t5),
                    (3, 4, c4 * sec5 * sec5),
                    (4, 3, -c4),
                    (5, 3, -s4 * sec5),
                    (5, 4, c4 * sec5 * t5),
                ],
            )
        },
    );
    let half_pi = T::lit(FRAC_PI_2);
    let system = ControlSystem::new(
        "underwater",
        6,
        vec![f1.into_ref(), f2.into_ref(), f3.into_ref(), f4.into_ref()],
    )
    .expect("underwater shape")
    .with_domain(move |x: &[T]| x[4].abs() < half_pi);
    let q = T::lit(std::f64::consts::FRAC_PI_4);
    Scenario {
        name: "underwater".into(),
        system,
        scheme: BracketScheme::new(
            vec![0, 1, 2, 3],
            vec![
                BracketPair {
                    first: 0,
                    second: 2,
                    kappa: 1,
                },
                BracketPair {
                    first: 0,
                    second: 3,
                    kappa: 2,
                },
            ],
        ),
        default_params: ControllerParams::new(T::lit(15.0), T::lit(0.1)).expect("valid defaults"),
        default_curve: "gamma4_underwater".into(),
        default_x0: vec![z, z, -one, q, q, q],
        horizon: T::lit(40.0),
        analytic_bounds: None,
        tube_radius: T::lit(0.5),
        min_substeps: MIN_SUBSTEPS,
    }
}

/// Rear-wheel driving car with the default oscillators `k12 = 3`, `k1 = 1`,
/// `k2 = 2`.
pub fn rear_wheel_car<T: Real>() -> Scenario<T> {
    rear_wheel_car_with(3, 1, 2).expect("default car frequencies are valid")
}

/// Rear-wheel driving car, `F = (f1, f2, [f1, f2], [[f1, f2], f1])`, domain
/// `|x₃| < π/2`, with custom oscillator multipliers.
pub fn rear_wheel_car_with<T: Real>(k12: u32, k1: u32, k2: u32) -> Result<Scenario<T>> {
    let z = T::zero();
    let f1 = FnField::new(
        "f1",
        4,
        move |x: &[T]| vec![x[3].cos(), x[3].sin(), z, x[2].tan()],
        |x: &[T]| {
            let sec3 = T::one() / x[2].cos();
            jac(
                4,
                &[(0, 3, -x[3].sin()), (1, 3, x[3].cos()), (3, 2, sec3 * sec3)],
            )
        },
    );
    let f2 = FnField::new(
        "f2",
        4,
        move |_: &[T]| vec![z, z, T::one(), z],
        |_: &[T]| Matrix::zeros(4, 4),
    );
    let half_pi = T::lit(FRAC_PI_2);
    let system = ControlSystem::new("car", 4, vec![f1.into_ref(), f2.into_ref()])
        .expect("car shape")
        .with_domain(move |x: &[T]| x[2].abs() < half_pi);
    let scheme = BracketScheme::new(
        vec![0, 1],
        vec![BracketPair {
            first: 0,
            second: 1,
            kappa: k12,
        }],
    )
    .with_degree2(vec![NestedBracket {
        first: 0,
        second: 1,
        third: 0,
        k1,
        k2,
    }]);
    scheme.validate(4, 2)?;
    Ok(Scenario {
        name: "car".into(),
        system,
        scheme,
        default_params: ControllerParams::new(T::lit(5.0), T::lit(0.5)).expect("valid defaults"),
        default_curve: "gamma4_car".into(),
        default_x0: vec![T::lit(8.0), z, z, z],
        horizon: T::lit(60.0),
        analytic_bounds: None,
        tube_radius: T::lit(0.5),
        // the driving input reaches |u| ~ 10² from far-off starts at ε = 0.5
        min_substeps: 2 * MIN_SUBSTEPS,
    })
}

pub fn scenario_by_name<T: Real>(name: &str) -> Result<Scenario<T>> {
    match name {
        "unicycle" => Ok(unicycle()),
        "underwater" => Ok(underwater_vehicle()),
        "car" => Ok(rear_wheel_car()),
        other => Err(Error::Usage(format!(
            "unknown scenario {other:?}; available: {}",
            SCENARIO_NAMES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::curve_by_name;
    use crate::systems::{build_gain_matrix, check_rank_condition, lie_bracket, GainBasis};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn unicycle_fields_and_bracket() {
        let s = unicycle::<f64>();
        let f1 = s.system.field(0).eval(&[0.0, 0.0, PI / 2.0]);
        assert_relative_eq!(f1[0], 0.0, epsilon = 1e-16);
        assert_relative_eq!(f1[1], 1.0);
        for &th in &[0.0, 0.4, -2.0, 3.0] {
            let b = s.system.bracket(0, 1, &[0.3, -0.7, th]).unwrap();
            assert_relative_eq!(b[0], th.sin(), epsilon = 1e-15);
            assert_relative_eq!(b[1], -th.cos(), epsilon = 1e-15);
            assert_relative_eq!(b[2], 0.0);
        }
    }

    #[test]
    fn unicycle_gain_matrix_is_orthogonal() {
        let s = unicycle::<f64>();
        let f = build_gain_matrix(&s.system, &s.scheme, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(f.column(0), vec![1.0, 0.0, 0.0]);
        assert_eq!(f.column(1), vec![0.0, 0.0, 1.0]);
        assert_eq!(f.column(2), vec![0.0, -1.0, 0.0]);
        for &th in &[0.1, 1.3, -2.2, 5.9] {
            let f = build_gain_matrix(&s.system, &s.scheme, &[1.0, 2.0, th]).unwrap();
            let g = f.transpose().mul(&f).sub(&Matrix::identity(3));
            assert!(g.max_abs() < 1e-12);
        }
    }

    #[test]
    fn car_gain_matrix_at_initial_state() {
        // columns f1 = e1, f2 = e3, [f1,f2] = −sec²x3 e4, [[f1,f2],f1] = sec²x3(sin x4, −cos x4, 0, 0)
        let s = rear_wheel_car::<f64>();
        let f = build_gain_matrix(&s.system, &s.scheme, &[8.0, 0.0, 0.0, 0.0]).unwrap();
        let expect = [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, -1.0],
            [0.0, -1.0, 0.0, 0.0],
        ];
        for (j, col) in expect.iter().enumerate() {
            for i in 0..4 {
                assert_relative_eq!(f[(i, j)], col[i], epsilon = 1e-9);
            }
        }
        assert_relative_eq!(f.lu().determinant(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn car_brackets_match_hand_derivation() {
        let s = rear_wheel_car::<f64>();
        let x: [f64; 4] = [1.0, -2.0, 0.6, 0.9];
        let sec2 = 1.0 / x[2].cos().powi(2);
        let b = s.system.bracket(0, 1, &x).unwrap();
        assert_eq!(&b[..3], &[0.0, 0.0, 0.0]);
        assert_relative_eq!(b[3], -sec2, epsilon = 1e-14);
        let basis = GainBasis::new(&s.system, &s.scheme).unwrap();
        let nested = basis.columns()[3].eval(&x);
        let expect = [x[3].sin() * sec2, -x[3].cos() * sec2, 0.0, 0.0];
        for i in 0..4 {
            assert_relative_eq!(nested[i], expect[i], epsilon = 1e-8);
        }
    }

    #[test]
    fn car_domain_boundary() {
        let s = rear_wheel_car::<f64>();
        assert!(s.system.contains(&[0.0, 0.0, 1.5, 0.0]));
        assert!(!s.system.contains(&[0.0, 0.0, PI / 2.0, 0.0]));
        assert!(matches!(
            s.system.bracket(0, 1, &[0.0, 0.0, 1.6, 0.0]),
            Err(Error::Domain { .. })
        ));
        assert!(rear_wheel_car_with::<f64>(3, 2, 2).is_err());
    }

    #[test]
    fn underwater_fields() {
        let s = underwater_vehicle::<f64>();
        let f3 = s.system.field(2).eval(&[0.0, 0.0, 0.0, 0.0, 0.3, 0.2]);
        assert_eq!(f3, vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let x0 = s.default_x0.clone();
        let f = build_gain_matrix(&s.system, &s.scheme, &x0).unwrap();
        assert!(f.min_singular_value() > 1e-3);
    }

    #[test]
    fn underwater_near_singular_flag() {
        let s = underwater_vehicle::<f64>();
        let x = vec![0.0, 0.0, 0.0, 0.3, PI / 2.0 - 1e-9, 0.1];
        let report =
            check_rank_condition(&s.system, &s.scheme, &[x, s.default_x0.clone()]).unwrap();
        assert_eq!(report.near_singular, vec![0]);
    }

    #[test]
    fn underwater_bracket_vs_difference_oracle() {
        let s = underwater_vehicle::<f64>();
        let x = s.default_x0.clone();
        let h = 1e-5;
        // Dg·f via directional differences of the field values only
        let dd = |g: usize, f: usize| -> Vec<f64> {
            let fx = s.system.field(f).eval(&x);
            let xp: Vec<f64> = x.iter().zip(&fx).map(|(a, b)| a + h * b).collect();
            let xm: Vec<f64> = x.iter().zip(&fx).map(|(a, b)| a - h * b).collect();
            let gp = s.system.field(g).eval(&xp);
            let gm = s.system.field(g).eval(&xm);
            gp.iter()
                .zip(&gm)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect()
        };
        let a = dd(2, 0);
        let b = dd(0, 2);
        let oracle: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p - q).collect();
        let got = lie_bracket(s.system.field(0).as_ref(), s.system.field(2).as_ref(), &x).unwrap();
        for (g, o) in got.iter().zip(&oracle) {
            assert!((g - o).abs() < 1e-6);
        }
    }

    #[test]
    fn defaults_are_consistent() {
        for name in SCENARIO_NAMES {
            let s = scenario_by_name::<f64>(name).unwrap();
            assert!(s.system.contains(&s.default_x0));
            s.scheme.validate(s.system.n(), s.system.m()).unwrap();
            let curve = curve_by_name::<f64>(&s.default_curve, s.horizon).unwrap();
            assert_eq!(curve.dim(), s.system.n());
        }
        assert!(scenario_by_name::<f64>("boat").is_err());
    }
}
