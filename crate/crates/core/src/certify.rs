//! Quantitative sampling-period certificates: control-magnitude constants,
//! remainder constant σ, thresholds ε1/ε2/ε3, sup-bound estimation, and the
//! numerical checks of the one-interval growth bound and remainder size.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::controller::{Controller, ControllerParams};
use crate::curves::ReferenceCurve;
use crate::error::{Error, Result};
use crate::integrator::integrate_interval;
use crate::scalar::{dist, norm};
use crate::systems::{BracketScheme, ControlSystem, GainBasis, SINGULAR_RATIO};
use crate::Real;

/// Safety factor applied to sampled sup bounds.
pub const SAMPLING_INFLATION: f64 = 1.1;

/// Floor for Lipschitz and field bounds so the formulas stay finite.
pub const BOUND_FLOOR: f64 = 1e-12;

/// Guard on the bisection for the σ–ε fixed point; adjacent floats are
/// reached long before this.
pub const MAX_BISECTION_STEPS: usize = 2048;

/// Sup bounds of the fields and their derivatives over the working tube.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SupBounds<T> {
    /// `sup ‖f_i‖`.
    pub m1: T,
    /// `sup ‖L_{f_j} f_i‖`.
    pub m2: T,
    /// `(1/6) sup Σ ‖L_{f_l} L_{f_j} f_i‖`.
    pub m3: T,
    /// Lipschitz constant of the fields.
    pub lipschitz: T,
    /// `sup ‖F⁻¹‖`.
    pub mu: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Closed-form bounds.
    Analytic,
    /// Sampled and inflated bounds.
    Empirical,
}

/// Tube radii, curve speed bound, decay target and sup bounds.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CertificateInputs<T> {
    /// Radius of the domain tube (may be infinite).
    pub r: T,
    pub rho: T,
    pub rho_prime: T,
    pub delta: T,
    pub delta_prime: T,
    pub nu: T,
    pub lambda: T,
    pub bounds: SupBounds<T>,
    pub provenance: Provenance,
}

impl<T: Real> CertificateInputs<T> {
    /// Checks `ν/α < ρ′ < ρ < δ < δ′ < r`, positivity and `λ ∈ (0, α − ν/ρ′)`.
    pub fn validate(&self, alpha: T) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.nu >= T::zero() && self.nu.is_finite()) {
            return bad(format!(
                "curve speed bound must be finite and non-negative, got {}",
                self.nu
            ));
        }
        let chain = [
            ("ν/α", self.nu / alpha),
            ("ρ′", self.rho_prime),
            ("ρ", self.rho),
            ("δ", self.delta),
            ("δ′", self.delta_prime),
            ("r", self.r),
        ];
        for w in chain.windows(2) {
            if !(w[0].1 < w[1].1) {
                return bad(format!(
                    "radii must satisfy ν/α < ρ′ < ρ < δ < δ′ < r, but {} = {} is not below {} = {}",
                    w[0].0, w[0].1, w[1].0, w[1].1
                ));
            }
        }
        if !self.delta_prime.is_finite() {
            return bad("δ′ must be finite".into());
        }
        let b = &self.bounds;
        for (name, v) in [("M1", b.m1), ("L", b.lipschitz), ("μ", b.mu)] {
            if !(v > T::zero() && v.is_finite()) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        for (name, v) in [("M2", b.m2), ("M3", b.m3)] {
            if !(v >= T::zero() && v.is_finite()) {
                return bad(format!("{name} must be non-negative and finite, got {v}"));
            }
        }
        let upper = alpha - self.nu / self.rho_prime;
        if !(self.lambda > T::zero() && self.lambda < upper) {
            return bad(format!("λ = {} must lie in (0, {upper})", self.lambda));
        }
        Ok(())
    }
}

/// Constants and thresholds certifying a sampling period.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Certificate<T> {
    pub c1: T,
    pub c2: T,
    pub d: T,
    /// Remainder constant at `eps_hat`.
    pub sigma: T,
    pub eps1: T,
    pub eps2: T,
    pub eps3: T,
    /// `min(eps1, eps2, eps3)`.
    pub eps_hat: T,
    /// Decay rate at sample instants.
    pub lambda: T,
    /// Decay rate of the continuous-time estimate, `λ/2`.
    pub lambda1: T,
    pub iterations: usize,
    pub provenance: Provenance,
    pub alpha: T,
    pub inputs: CertificateInputs<T>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CertificationFailure<T> {
    pub reason: String,
    pub c1: T,
    pub c2: T,
    pub eps1: T,
    pub eps3: T,
    pub iterations: usize,
    pub inputs: CertificateInputs<T>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Certification<T> {
    Certified(Certificate<T>),
    Failed(CertificationFailure<T>),
}

impl<T> Certification<T> {
    pub fn certificate(&self) -> Option<&Certificate<T>> {
        match self {
            Certification::Certified(c) => Some(c),
            Certification::Failed(_) => None,
        }
    }
}

/// `C1 = αμ√|S1|`.
pub fn c1<T: Real>(scheme: &BracketScheme, alpha: T, mu: T) -> T {
    alpha * mu * T::lit(scheme.s1.len() as f64).sqrt()
}

/// `C2 = 4√(πμα) (Σ κ^{2/3})^{3/4}`.
pub fn c2<T: Real>(scheme: &BracketScheme, alpha: T, mu: T) -> T {
    let sum = scheme.s2.iter().fold(T::zero(), |acc, p| {
        acc + T::lit(p.kappa as f64).powf(T::lit(2.0 / 3.0))
    });
    T::lit(4.0) * (T::PI() * mu * alpha).sqrt() * sum.powf(T::lit(0.75))
}

/// `Σ_{j} (Σ_{(q, j) ∈ S2} κ_{qj}^{-2/3})^{3/4}`, grouping pairs by their second channel.
fn kappa_channel_sum<T: Real>(scheme: &BracketScheme) -> T {
    let mut channels: Vec<usize> = scheme.s2.iter().map(|p| p.second).collect();
    channels.sort_unstable();
    channels.dedup();
    channels.into_iter().fold(T::zero(), |acc, j| {
        let inner = scheme
            .s2
            .iter()
            .filter(|p| p.second == j)
            .fold(T::zero(), |s, p| {
                s + T::lit(p.kappa as f64).powf(T::lit(-2.0 / 3.0))
            });
        acc + inner.powf(T::lit(0.75))
    })
}

/// Remainder constant σ at sampling period `eps`.
pub fn sigma_at<T: Real>(
    scheme: &BracketScheme,
    alpha: T,
    inputs: &CertificateInputs<T>,
    eps: T,
) -> T {
    let b = &inputs.bounds;
    let am = alpha * b.mu;
    let root = (eps * inputs.delta_prime).sqrt();
    let s1 = T::lit(scheme.s1.len() as f64).sqrt();
    let second = b.m2
        * (T::lit(2.0) * am.powf(T::lit(1.5)) * s1 * kappa_channel_sum::<T>(scheme)
            + T::lit(0.5) * root * am * am);
    let third = b.m3 * (c2(scheme, alpha, b.mu) + c1(scheme, alpha, b.mu) * root).powi(3);
    second + third
}

/// `ε1`: the interval stays within distance `d` of its start point and the
/// curve moves less than `(ρ − ρ′)/2`.
pub fn eps1<T: Real>(scheme: &BracketScheme, alpha: T, inputs: &CertificateInputs<T>) -> T {
    let b = &inputs.bounds;
    let two = T::lit(2.0);
    let d = (inputs.delta_prime - inputs.delta).min((inputs.rho - inputs.rho_prime) / two);
    let drift = if inputs.nu > T::zero() {
        (inputs.rho - inputs.rho_prime) / (two * inputs.nu)
    } else {
        T::infinity()
    };
    let (k1, k2) = (c1(scheme, alpha, b.mu), c2(scheme, alpha, b.mu));
    let l = b.lipschitz;
    let s = (d * l / b.m1).ln_1p() / l;
    // positive root of C1 y² + C2 y = s with y = √(εδ′), written without cancellation
    let y = two * s / ((k2 * k2 + T::lit(4.0) * s * k1).sqrt() + k2);
    drift.min(y * y / inputs.delta_prime)
}

/// `ε2(σ)`: the one-step contraction condition.
pub fn eps2<T: Real>(alpha: T, inputs: &CertificateInputs<T>, sigma: T) -> T {
    let rate = inputs.lambda + inputs.nu / inputs.rho_prime;
    let slack = alpha - rate;
    let first = if sigma > T::zero() {
        (slack / sigma).powi(2) / inputs.delta_prime
    } else {
        T::infinity()
    };
    first.min(rate.recip())
}

/// `ε3`: keeps the inter-sample excursion exponent below one.
pub fn eps3<T: Real>(scheme: &BracketScheme, alpha: T, inputs: &CertificateInputs<T>) -> T {
    let b = &inputs.bounds;
    let (k1, k2) = (c1(scheme, alpha, b.mu), c2(scheme, alpha, b.mu));
    // root of y² + (C2/C1) y = 1/L with y = √(εδ′)
    let c = k1 / b.lipschitz;
    let y = T::lit(2.0) * c / ((k2 * k2 + T::lit(4.0) * k1 * c).sqrt() + k2);
    y * y / inputs.delta_prime
}

/// Computes the certificate. σ grows with ε, so `eps_hat` is the largest
/// `ε ≤ min(ε1, ε3)` with `ε ≤ ε2(σ(ε))`.
pub fn bound_constants<T: Real>(
    scheme: &BracketScheme,
    params: &ControllerParams<T>,
    inputs: &CertificateInputs<T>,
) -> Result<Certification<T>> {
    let alpha = params.alpha;
    inputs.validate(alpha)?;
    let mu = inputs.bounds.mu;
    let (k1, k2) = (c1(scheme, alpha, mu), c2(scheme, alpha, mu));
    let (e1, e3) = (eps1(scheme, alpha, inputs), eps3(scheme, alpha, inputs));
    let fail = |reason: String, iterations| {
        Ok(Certification::Failed(CertificationFailure {
            reason,
            c1: k1,
            c2: k2,
            eps1: e1,
            eps3: e3,
            iterations,
            inputs: *inputs,
        }))
    };
    let cap = e1.min(e3);
    if !(cap > T::zero() && cap.is_finite()) {
        return fail(
            format!("ε1 = {e1}, ε3 = {e3} leave no admissible sampling period"),
            0,
        );
    }
    let gap = |eps: T| {
        let sigma = sigma_at(scheme, alpha, inputs, eps);
        (sigma, eps2(alpha, inputs, sigma))
    };
    let certified = |eps: T, sigma: T, e2: T, iterations| {
        let lambda = inputs.lambda;
        Ok(Certification::Certified(Certificate {
            c1: k1,
            c2: k2,
            d: (inputs.delta_prime - inputs.delta)
                .min((inputs.rho - inputs.rho_prime) / T::lit(2.0)),
            sigma,
            eps1: e1,
            eps2: e2,
            eps3: e3,
            eps_hat: eps,
            lambda,
            lambda1: lambda / T::lit(2.0),
            iterations,
            provenance: inputs.provenance,
            alpha,
            inputs: *inputs,
        }))
    };
    let (sigma, e2) = gap(cap);
    if !sigma.is_finite() || !(e2 > T::zero()) {
        return fail(format!("ε2 = {e2} is not positive at ε = {cap}"), 0);
    }
    if e2 >= cap {
        return certified(cap, sigma, e2, 0);
    }
    // ε ↦ ε2(σ(ε)) − ε is decreasing; bisect down to adjacent floats so the
    // result does not depend on where the bracket started
    let (mut lo, mut hi) = (T::zero(), cap);
    let mut best = None;
    for it in 1..=MAX_BISECTION_STEPS {
        let mid = lo + (hi - lo) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            return match best {
                Some((sigma, e2)) => certified(lo, sigma, e2, it - 1),
                None => fail(
                    format!("no positive ε satisfies ε ≤ ε2(σ(ε)) below {cap}"),
                    it - 1,
                ),
            };
        }
        let (sigma, e2) = gap(mid);
        if e2 >= mid {
            lo = mid;
            best = Some((sigma, e2));
        } else {
            hi = mid;
        }
    }
    fail(
        format!("σ–ε bisection did not settle within {MAX_BISECTION_STEPS} steps"),
        MAX_BISECTION_STEPS,
    )
}

/// Right-hand side of the one-step estimate
/// `‖x(ε) − γ(ε)‖ ≤ e0 (1 − ε(λ + ν/ρ′)) + εν`.
pub fn contraction_bound<T: Real>(inputs: &CertificateInputs<T>, eps: T, e0: T) -> T {
    e0 * (T::one() - eps * (inputs.lambda + inputs.nu / inputs.rho_prime)) + eps * inputs.nu
}

/// Where sup bounds are sampled.
pub enum SampleRegion<'a, T> {
    /// Union of balls of `radius` around the curve for `t ∈ [0, horizon]`.
    Tube {
        curve: &'a dyn ReferenceCurve<T>,
        radius: T,
        horizon: T,
    },
    Ball {
        center: &'a [T],
        radius: T,
    },
}

impl<T: Real> SampleRegion<'_, T> {
    fn dim(&self) -> usize {
        match self {
            SampleRegion::Tube { curve, .. } => curve.dim(),
            SampleRegion::Ball { center, .. } => center.len(),
        }
    }

    /// Deterministic sample set: half the points sit on a grid of centres,
    /// the rest are uniform in the balls.
    pub fn points(&self, samples: usize, seed: u64) -> Vec<Vec<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.dim();
        let mut out = Vec::with_capacity(samples);
        for k in 0..samples {
            let (center, radius) = match self {
                SampleRegion::Tube {
                    curve,
                    radius,
                    horizon,
                } => {
                    let frac = if k % 2 == 0 {
                        T::lit(k as f64 / samples.max(2).saturating_sub(1) as f64)
                    } else {
                        T::lit(rng.gen::<f64>())
                    };
                    (curve.eval(*horizon * frac.min(T::one())), *radius)
                }
                SampleRegion::Ball { center, radius } => (center.to_vec(), *radius),
            };
            if k % 2 == 0 && matches!(self, SampleRegion::Tube { .. }) || k == 0 {
                out.push(center);
                continue;
            }
            let offset = unit_ball_point(&mut rng, n);
            out.push(
                center
                    .iter()
                    .zip(&offset)
                    .map(|(&c, &o)| c + radius * T::lit(o))
                    .collect(),
            );
        }
        out
    }
}

fn unit_ball_point(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        if v.iter().map(|x| x * x).sum::<f64>() <= 1.0 {
            return v;
        }
    }
}

/// Field norm and Lipschitz bounds (`M1`, `L`) over a set of points, inflated.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct FieldBounds<T> {
    pub m1: T,
    pub lipschitz: T,
}

/// Sampled `M1` and `L` over the in-domain points of `points`.
pub fn field_bounds_at<T: Real>(system: &ControlSystem<T>, points: &[Vec<T>]) -> FieldBounds<T> {
    let mut m1 = T::zero();
    let mut l = T::zero();
    for x in points.iter().filter(|x| system.contains(x)) {
        for f in system.fields() {
            m1 = m1.max(norm(&f.eval(x)));
            l = l.max(f.jacobian(x).spectral_norm());
        }
    }
    let infl = T::lit(SAMPLING_INFLATION);
    let floor = T::lit(BOUND_FLOOR);
    FieldBounds {
        m1: (m1 * infl).max(floor),
        lipschitz: (l * infl).max(floor),
    }
}

/// Sampled sup bounds over `region`, inflated by 10%. Second Lie derivatives
/// use central differences of the first along the outer field.
pub fn estimate_sup_bounds<T: Real>(
    system: &ControlSystem<T>,
    scheme: &BracketScheme,
    region: &SampleRegion<'_, T>,
    samples: usize,
    seed: u64,
) -> Result<SupBounds<T>> {
    if samples == 0 {
        return Err(Error::Usage(
            "sup-bound estimation needs at least one sample".into(),
        ));
    }
    let basis = GainBasis::new(system, scheme)?;
    let points: Vec<Vec<T>> = region
        .points(samples, seed)
        .into_iter()
        .filter(|x| system.contains(x))
        .collect();
    if points.is_empty() {
        return Err(Error::Usage(
            "no sample point of the region lies in the domain".into(),
        ));
    }
    let fields = system.fields();
    let h = T::fd_step(1e-5);
    let (mut m2, mut m3, mut inv) = (T::zero(), T::zero(), T::zero());
    for x in &points {
        let f = basis.raw_matrix(x)?;
        let scale = f.max_column_norm();
        let smin = f.min_singular_value();
        if !(smin >= T::lit(SINGULAR_RATIO) * scale) || scale == T::zero() {
            return Err(Error::RankCondition {
                state: x.iter().map(|v| v.to_f64_lossy()).collect(),
                sigma_min: smin.to_f64_lossy(),
                scale: scale.to_f64_lossy(),
            });
        }
        inv = inv.max(smin.recip());
        let mut third = T::zero();
        for fi in fields {
            let jac_i = fi.jacobian(x);
            for fj in fields {
                // L_{f_j} f_i = Df_i · f_j
                m2 = m2.max(norm(&jac_i.mul_vec(&fj.eval(x))));
                let inner = |y: &[T]| fi.jacobian(y).mul_vec(&fj.eval(y));
                for fl in fields {
                    let dir = fl.eval(x);
                    let step = h * x.iter().fold(T::one(), |a, v| a.max(v.abs()));
                    let plus: Vec<T> = x.iter().zip(&dir).map(|(&a, &b)| a + step * b).collect();
                    let minus: Vec<T> = x.iter().zip(&dir).map(|(&a, &b)| a - step * b).collect();
                    let d: Vec<T> = inner(&plus)
                        .iter()
                        .zip(inner(&minus))
                        .map(|(&p, m)| (p - m) / (step + step))
                        .collect();
                    third = third + norm(&d);
                }
            }
        }
        m3 = m3.max(third / T::lit(6.0));
    }
    let fb = field_bounds_at(system, &points);
    let infl = T::lit(SAMPLING_INFLATION);
    Ok(SupBounds {
        m1: fb.m1,
        m2: m2 * infl,
        m3: m3 * infl,
        lipschitz: fb.lipschitz,
        mu: inv * infl,
    })
}

/// Remainder of the one-interval expansion against its bound.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct VolterraReport<T> {
    pub residual: Vec<T>,
    pub residual_norm: T,
    /// `σ ε^{3/2} ‖x⁰ − γ⁰‖^{3/2}`.
    pub bound: T,
    /// `‖R‖ / (ε^{3/2} ‖x⁰ − γ⁰‖^{3/2})`, comparable to σ.
    pub scaled: T,
    /// `bound − ‖R‖`.
    pub margin: T,
    pub sigma: T,
}

/// Compares `x(ε) − x⁰ + εα(x⁰ − γ⁰)` with `σ ε^{3/2} ‖x⁰ − γ⁰‖^{3/2}`.
pub fn volterra_residual<T: Real>(
    params: &ControllerParams<T>,
    x0: &[T],
    gamma0: &[T],
    x_end: &[T],
    sigma: T,
) -> VolterraReport<T> {
    let eps = params.epsilon;
    let residual: Vec<T> = (0..x0.len())
        .map(|i| x_end[i] - x0[i] + eps * params.alpha * (x0[i] - gamma0[i]))
        .collect();
    let residual_norm = norm(&residual);
    let scale = (eps * dist(x0, gamma0)).powf(T::lit(1.5));
    let bound = sigma * scale;
    let scaled = if scale > T::zero() {
        residual_norm / scale
    } else {
        T::zero()
    };
    VolterraReport {
        residual,
        residual_norm,
        bound,
        scaled,
        margin: bound - residual_norm,
        sigma,
    }
}

/// Simulates one interval from `(x0, gamma0)` and evaluates its remainder.
pub fn simulated_volterra_residual<T: Real>(
    controller: &Controller<T>,
    x0: &[T],
    gamma0: &[T],
    sigma: T,
    substeps: usize,
) -> Result<VolterraReport<T>> {
    let trace = integrate_interval(controller, x0, gamma0, T::zero(), substeps)?;
    Ok(volterra_residual(
        controller.params(),
        x0,
        gamma0,
        trace.end_state(),
        sigma,
    ))
}

/// `(M/L)(e^{ULt} − 1)`, with the `L → 0` limit `MUt`.
pub fn growth_bound<T: Real>(m: T, l: T, u: T, t: T) -> T {
    if l > T::zero() {
        m / l * (u * l * t).exp_m1()
    } else {
        m * u * t
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct GrowthReport<T> {
    /// `max Σ|u_i|` over the recorded controls.
    pub u_max: T,
    /// `max (‖x(t) − x(0)‖ − bound(t))`; non-positive when the bound holds.
    pub max_violation: T,
    pub max_displacement: T,
    pub final_bound: T,
}

impl<T: Real> GrowthReport<T> {
    pub fn holds(&self, slack: T) -> bool {
        self.max_violation <= slack
    }
}

/// Checks `‖x(t) − x(0)‖ ≤ (M/L)(e^{ULt} − 1)` at every recorded point of one interval.
pub fn lemma1_growth_check<T: Real>(
    times: &[T],
    states: &[Vec<T>],
    controls: &[Vec<T>],
    m1: T,
    lipschitz: T,
) -> GrowthReport<T> {
    let u_max = controls
        .iter()
        .map(|u| u.iter().fold(T::zero(), |a, v| a + v.abs()))
        .fold(T::zero(), T::max);
    let mut report = GrowthReport {
        u_max,
        max_violation: T::neg_infinity(),
        max_displacement: T::zero(),
        final_bound: T::zero(),
    };
    let (Some(&t0), Some(x0)) = (times.first(), states.first()) else {
        report.max_violation = T::zero();
        return report;
    };
    for (t, x) in times.iter().zip(states) {
        let lhs = dist(x, x0);
        let rhs = growth_bound(m1, lipschitz, u_max, *t - t0);
        report.max_violation = report.max_violation.max(lhs - rhs);
        report.max_displacement = report.max_displacement.max(lhs);
        report.final_bound = rhs;
    }
    report
}
