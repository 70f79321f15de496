//! Reference curves `γ: ℝ⁺ → ℝⁿ` with analytic derivatives and a velocity
//! bound `ν ≥ sup‖γ̇‖`.

pub mod expr;

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::norm;
use crate::Real;

pub use expr::Expr;

/// Number of points used to estimate `sup‖γ̇‖` over a horizon.
pub const SPEED_SAMPLES: usize = 100_000;

/// Multiplicative margin applied to the sampled speed supremum.
pub const SPEED_MARGIN: f64 = 1.01;

/// Step of the heading integration for admissible curves.
pub const HEADING_STEP: f64 = 1e-4;

/// Planar speed squared below which the heading rate is undefined.
pub const MIN_PLANAR_SPEED_SQ: f64 = 1e-8;

/// Registry names of the built-in curves.
pub const CURVE_NAMES: [&str; 5] = [
    "gamma1",
    "gamma2",
    "gamma3",
    "gamma4_underwater",
    "gamma4_car",
];

pub trait ReferenceCurve<T: Real>: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, t: T) -> Vec<T>;

    fn deriv(&self, t: T) -> Vec<T>;

    /// Second derivative; central differences of `deriv` unless overridden.
    fn accel(&self, t: T) -> Vec<T> {
        let h = T::fd_step(1e-5) * t.abs().max(T::one());
        let p = self.deriv(t + h);
        let m = self.deriv(t - h);
        p.iter().zip(&m).map(|(&a, &b)| (a - b) / (h + h)).collect()
    }

    /// Declared bound on `‖γ̇(t)‖`.
    fn nu(&self) -> T;

    fn name(&self) -> String;
}

pub type CurveRef<T> = Arc<dyn ReferenceCurve<T>>;

/// Largest `‖γ̇(t)‖` over `samples` evenly spaced points of `[0, horizon]`.
pub fn sampled_speed_sup<T: Real>(deriv: impl Fn(T) -> Vec<T>, horizon: T, samples: usize) -> T {
    let last = T::lit((samples.max(2) - 1) as f64);
    (0..samples.max(2))
        .map(|k| norm(&deriv(horizon * T::lit(k as f64) / last)))
        .fold(T::zero(), T::max)
}

type CurveFn<T> = Arc<dyn Fn(T) -> Vec<T> + Send + Sync>;

/// Curve given by closed-form position, velocity and (optionally) acceleration.
#[derive(Clone)]
pub struct ClosedFormCurve<T> {
    name: String,
    dim: usize,
    pos: CurveFn<T>,
    vel: CurveFn<T>,
    acc: Option<CurveFn<T>>,
    nu: T,
}

impl<T: Real> ClosedFormCurve<T> {
    /// Builds the curve and sets `ν` from dense sampling over `[0, horizon]`
    /// with a 1% margin.
    pub fn new<P, V>(name: impl Into<String>, dim: usize, pos: P, vel: V, horizon: T) -> Self
    where
        P: Fn(T) -> Vec<T> + Send + Sync + 'static,
        V: Fn(T) -> Vec<T> + Send + Sync + 'static,
    {
        let nu = sampled_speed_sup(&vel, horizon, SPEED_SAMPLES) * T::lit(SPEED_MARGIN);
        ClosedFormCurve {
            name: name.into(),
            dim,
            pos: Arc::new(pos),
            vel: Arc::new(vel),
            acc: None,
            nu,
        }
    }

    pub fn with_accel(mut self, acc: impl Fn(T) -> Vec<T> + Send + Sync + 'static) -> Self {
        self.acc = Some(Arc::new(acc));
        self
    }

    /// Replaces the sampled bound with a known one.
    pub fn with_nu(mut self, nu: T) -> Self {
        self.nu = nu;
        self
    }

    pub fn into_ref(self) -> CurveRef<T> {
        Arc::new(self)
    }
}

impl<T: Real> ReferenceCurve<T> for ClosedFormCurve<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: T) -> Vec<T> {
        (self.pos)(t)
    }

    fn deriv(&self, t: T) -> Vec<T> {
        (self.vel)(t)
    }

    fn accel(&self, t: T) -> Vec<T> {
        match &self.acc {
            Some(a) => a(t),
            None => {
                let h = T::fd_step(1e-5) * t.abs().max(T::one());
                let p = (self.vel)(t + h);
                let m = (self.vel)(t - h);
                p.iter().zip(&m).map(|(&a, &b)| (a - b) / (h + h)).collect()
            }
        }
    }

    fn nu(&self) -> T {
        self.nu
    }

    fn name(&self) -> String {
        self.name.clone()
    }
}

impl<T: Real> fmt::Debug for ClosedFormCurve<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClosedFormCurve")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("nu", &self.nu)
            .finish()
    }
}

/// A constant curve `γ(t) ≡ p` (ν = 0).
pub fn stationary<T: Real>(p: Vec<T>) -> CurveRef<T> {
    let n = p.len();
    ClosedFormCurve {
        name: "stationary".into(),
        dim: n,
        pos: Arc::new(move |_| p.clone()),
        vel: Arc::new(move |_| vec![T::zero(); n]),
        acc: Some(Arc::new(move |_| vec![T::zero(); n])),
        nu: T::zero(),
    }
    .into_ref()
}

/// `γ⁽¹⁾(t) = (2cos(t/2)cos t, 2cos(t/2)sin t, cos(t/10))`.
pub fn curve_gamma1<T: Real>(horizon: T) -> CurveRef<T> {
    let two = T::lit(2.0);
    let half = T::lit(0.5);
    let tenth = T::lit(0.1);
    ClosedFormCurve::new(
        "gamma1",
        3,
        move |t: T| {
            let r = two * (t * half).cos();
            vec![r * t.cos(), r * t.sin(), (t * tenth).cos()]
        },
        move |t: T| {
            let r = two * (t * half).cos();
            let dr = -(t * half).sin();
            vec![
                dr * t.cos() - r * t.sin(),
                dr * t.sin() + r * t.cos(),
                -tenth * (t * tenth).sin(),
            ]
        },
        horizon,
    )
    .with_accel(move |t: T| {
        let r = two * (t * half).cos();
        let dr = -(t * half).sin();
        let ddr = -half * (t * half).cos();
        let (c, s) = (t.cos(), t.sin());
        vec![
            ddr * c - two * dr * s - r * c,
            ddr * s + two * dr * c - r * s,
            -tenth * tenth * (t * tenth).cos(),
        ]
    })
    .into_ref()
}

/// `γ⁽²⁾(t) = (3 − e^{1−t}, e^{−t²}, 0)`; its speed vanishes as `t → ∞`.
pub fn curve_gamma2<T: Real>(horizon: T) -> CurveRef<T> {
    let three = T::lit(3.0);
    let two = T::lit(2.0);
    ClosedFormCurve::new(
        "gamma2",
        3,
        move |t: T| vec![three - (T::one() - t).exp(), (-t * t).exp(), T::zero()],
        move |t: T| vec![(T::one() - t).exp(), -two * t * (-t * t).exp(), T::zero()],
        horizon,
    )
    .with_accel(move |t: T| {
        vec![
            -(T::one() - t).exp(),
            (two * two * t * t - two) * (-t * t).exp(),
            T::zero(),
        ]
    })
    .into_ref()
}

/// Underwater reference `(cos(t/4), t/4, sin(t/4), 0, 0, 0)`; unbounded in the
/// second coordinate.
pub fn curve_gamma4_underwater<T: Real>(horizon: T) -> CurveRef<T> {
    let q = T::lit(0.25);
    ClosedFormCurve::new(
        "gamma4_underwater",
        6,
        move |t: T| {
            let z = T::zero();
            vec![(t * q).cos(), t * q, (t * q).sin(), z, z, z]
        },
        move |t: T| {
            let z = T::zero();
            vec![-q * (t * q).sin(), q, q * (t * q).cos(), z, z, z]
        },
        horizon,
    )
    .with_accel(move |t: T| {
        let z = T::zero();
        vec![-q * q * (t * q).cos(), z, -q * q * (t * q).sin(), z, z, z]
    })
    .into_ref()
}

/// Car reference `(5 sin(t/4), 5 sin(t/4) cos(t/4), 0, 0)`.
pub fn curve_gamma4_car<T: Real>(horizon: T) -> CurveRef<T> {
    let q = T::lit(0.25);
    let five = T::lit(5.0);
    ClosedFormCurve::new(
        "gamma4_car",
        4,
        move |t: T| {
            let (s, c) = ((t * q).sin(), (t * q).cos());
            vec![five * s, five * s * c, T::zero(), T::zero()]
        },
        move |t: T| {
            // 5 sin cos = 2.5 sin(t/2)
            vec![
                five * q * (t * q).cos(),
                five * q * (t * T::lit(0.5)).cos(),
                T::zero(),
                T::zero(),
            ]
        },
        horizon,
    )
    .with_accel(move |t: T| {
        vec![
            -five * q * q * (t * q).sin(),
            -five * q * T::lit(0.5) * (t * T::lit(0.5)).sin(),
            T::zero(),
            T::zero(),
        ]
    })
    .into_ref()
}

/// Heading rate `(γ̇₁γ̈₂ − γ̇₂γ̈₁)/(γ̇₁² + γ̇₂²)` of a planar curve.
///
/// The denominator is the squared planar *speed*; with positions there the
/// rate would not be the turning rate of the velocity vector.
pub fn heading_rate<T: Real>(vel: &[T], acc: &[T]) -> (T, T) {
    let den = vel[0] * vel[0] + vel[1] * vel[1];
    ((vel[0] * acc[1] - vel[1] * acc[0]) / den, den)
}

/// Curve `(γ₁(t), γ₂(t), θ(t))` whose third component is the heading of the
/// base curve's planar velocity, integrated from `θ(0) = heading0`. With
/// `heading0` aligned to the initial velocity it is admissible for the
/// unicycle.
pub struct AdmissibleCurve<T> {
    base: CurveRef<T>,
    heading0: T,
    step: T,
    table: Vec<T>,
    nu: T,
}

impl<T: Real> AdmissibleCurve<T> {
    fn rate(&self, t: T) -> Result<T> {
        rate_of(self.base.as_ref(), t)
    }

    fn integrate(&self, t0: T, theta0: T, t1: T) -> T {
        let span = t1 - t0;
        let steps = (span.abs() / self.step)
            .ceil()
            .to_usize()
            .unwrap_or(1)
            .max(1);
        let h = span / T::lit(steps as f64);
        let mut theta = theta0;
        let f = |t: T| self.rate(t).unwrap_or_else(|_| T::nan());
        for k in 0..steps {
            let t = t0 + h * T::lit(k as f64);
            theta = rk4_scalar(&f, t, theta, h);
        }
        theta
    }

    fn heading(&self, t: T) -> T {
        let last = self.table.len() - 1;
        if t < T::zero() {
            return self.integrate(T::zero(), self.heading0, t);
        }
        let pos = t / self.step;
        let k = pos.floor().to_usize().unwrap_or(usize::MAX);
        if k >= last {
            let t_end = self.step * T::lit(last as f64);
            return self.integrate(t_end, self.table[last], t);
        }
        // cubic Hermite on the tabulated heading with exact rates at the nodes
        let (t0, t1) = (
            self.step * T::lit(k as f64),
            self.step * T::lit((k + 1) as f64),
        );
        let (y0, y1) = (self.table[k], self.table[k + 1]);
        let (d0, d1) = (
            self.rate(t0).unwrap_or(T::zero()),
            self.rate(t1).unwrap_or(T::zero()),
        );
        let h = t1 - t0;
        let s = (t - t0) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let h00 = two * s3 - three * s2 + T::one();
        let h10 = s3 - two * s2 + s;
        let h01 = -two * s3 + three * s2;
        let h11 = s3 - s2;
        h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
    }
}

fn rate_of<T: Real>(base: &dyn ReferenceCurve<T>, t: T) -> Result<T> {
    let (rate, den) = heading_rate(&base.deriv(t), &base.accel(t));
    if !(den >= T::lit(MIN_PLANAR_SPEED_SQ)) {
        return Err(Error::DegenerateCurve {
            t: t.to_f64_lossy(),
            value: den.to_f64_lossy(),
        });
    }
    Ok(rate)
}

fn rk4_scalar<T: Real>(f: &impl Fn(T) -> T, t: T, y: T, h: T) -> T {
    let half = T::lit(0.5);
    let k1 = f(t);
    let k2 = f(t + half * h);
    let k4 = f(t + h);
    // the right-hand side does not depend on y, so k3 = k2
    y + h / T::lit(6.0) * (k1 + T::lit(4.0) * k2 + k4)
}

impl<T: Real> ReferenceCurve<T> for AdmissibleCurve<T> {
    fn dim(&self) -> usize {
        3
    }

    fn eval(&self, t: T) -> Vec<T> {
        let b = self.base.eval(t);
        vec![b[0], b[1], self.heading(t)]
    }

    fn deriv(&self, t: T) -> Vec<T> {
        let b = self.base.deriv(t);
        vec![b[0], b[1], self.rate(t).unwrap_or_else(|_| T::nan())]
    }

    fn nu(&self) -> T {
        self.nu
    }

    fn name(&self) -> String {
        "gamma3".into()
    }
}

/// Integrates the heading of `base` over `[0, horizon]` with fixed-step RK4
/// (step `1e-4`). Fails when the planar speed of `base` nearly vanishes at a
/// grid or midpoint.
pub fn curve_gamma3_admissible<T: Real>(
    base: CurveRef<T>,
    heading0: T,
    horizon: T,
) -> Result<CurveRef<T>> {
    if base.dim() < 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: base.dim(),
        });
    }
    let step = T::lit(HEADING_STEP);
    let n = (horizon / step).ceil().to_usize().unwrap_or(0).max(1);
    let mut table = Vec::with_capacity(n + 1);
    let mut theta = heading0;
    table.push(theta);
    let half = T::lit(0.5);
    let mut prev = rate_of(base.as_ref(), T::zero())?;
    let mut speed_sup = T::zero();
    for k in 0..n {
        let t = step * T::lit(k as f64);
        let mid = rate_of(base.as_ref(), t + half * step)?;
        let next = rate_of(base.as_ref(), t + step)?;
        theta = theta + step / T::lit(6.0) * (prev + T::lit(4.0) * mid + next);
        table.push(theta);
        let v = base.deriv(t);
        speed_sup = speed_sup.max((v[0] * v[0] + v[1] * v[1] + prev * prev).sqrt());
        prev = next;
    }
    Ok(Arc::new(AdmissibleCurve {
        base,
        heading0,
        step,
        table,
        nu: speed_sup * T::lit(SPEED_MARGIN),
    }))
}

/// Curve whose components are parsed closed-form expressions in `t`.
#[derive(Debug, Clone)]
pub struct ExpressionCurve<T> {
    components: Vec<Expr>,
    nu: T,
}

impl<T: Real> ExpressionCurve<T> {
    pub fn parse<S: AsRef<str>>(components: &[S], horizon: T) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Expression(
                "a curve needs at least one component".into(),
            ));
        }
        let components = components
            .iter()
            .map(|s| Expr::parse(s.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let mut curve = ExpressionCurve {
            components,
            nu: T::zero(),
        };
        curve.nu =
            sampled_speed_sup(|t| curve.deriv(t), horizon, SPEED_SAMPLES) * T::lit(SPEED_MARGIN);
        Ok(curve)
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }
}

impl<T: Real> ReferenceCurve<T> for ExpressionCurve<T> {
    fn dim(&self) -> usize {
        self.components.len()
    }

    fn eval(&self, t: T) -> Vec<T> {
        self.components.iter().map(|e| e.eval(t)).collect()
    }

    fn deriv(&self, t: T) -> Vec<T> {
        self.components.iter().map(|e| e.eval_dual(t).d).collect()
    }

    fn nu(&self) -> T {
        self.nu
    }

    fn name(&self) -> String {
        let parts: Vec<String> = self.components.iter().map(|e| e.to_string()).collect();
        format!("expr[{}]", parts.join("; "))
    }
}

/// Heading of the planar velocity of `base` at `t = 0`.
pub fn initial_heading<T: Real>(base: &dyn ReferenceCurve<T>) -> T {
    let v = base.deriv(T::zero());
    v[1].atan2(v[0])
}

/// Looks up a built-in curve. `horizon` sets the window over which `ν` is
/// sampled (and over which the admissible heading is tabulated).
pub fn curve_by_name<T: Real>(name: &str, horizon: T) -> Result<CurveRef<T>> {
    match name {
        "gamma1" => Ok(curve_gamma1(horizon)),
        "gamma2" => Ok(curve_gamma2(horizon)),
        "gamma3" => {
            let base = curve_gamma1(horizon);
            let h0 = initial_heading(base.as_ref());
            curve_gamma3_admissible(base, h0, horizon)
        }
        "gamma4_underwater" => Ok(curve_gamma4_underwater(horizon)),
        "gamma4_car" => Ok(curve_gamma4_car(horizon)),
        other => Err(Error::Usage(format!(
            "unknown curve {other:?}; available: {}",
            CURVE_NAMES.join(", ")
        ))),
    }
}
