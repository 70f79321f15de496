//! Sampled (π_ε) closed-loop solutions.
//!
//! On every interval `I_j = [t_j, t_{j+1})`, `t_j = εj`, the feedback
//! coefficients are computed once from `(x(t_j), γ(t_j))` and frozen, while
//! the oscillating factors keep running in absolute time. Within an interval
//! the state is advanced by fixed-step classical RK4.

// failures hand back the partial trajectory by value
#![allow(clippy::result_large_err)]

use std::ops::Range;

use crate::controller::{CoefficientVector, Controller};
use crate::curves::ReferenceCurve;
use crate::error::{Error, Result};
use crate::scalar::{all_finite, dist};
use crate::systems::BracketScheme;
use crate::Real;

/// Minimum number of RK4 steps per sampling interval.
pub const MIN_SUBSTEPS: usize = 200;

/// Steps required per period of the fastest oscillation.
pub const STEPS_PER_PERIOD: usize = 40;

/// `max(200, 40 × fastest frequency multiplier)`.
pub fn default_substeps(scheme: &BracketScheme) -> usize {
    (STEPS_PER_PERIOD * scheme.max_frequency() as usize).max(MIN_SUBSTEPS)
}

/// Sampling period, horizon, and RK4 steps per interval.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SamplerGrid<T> {
    pub epsilon: T,
    pub horizon: T,
    pub substeps: usize,
}

impl<T: Real> SamplerGrid<T> {
    pub fn new(epsilon: T, horizon: T, substeps: usize) -> Result<Self> {
        if !(epsilon > T::zero() && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if !(horizon > T::zero() && horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if substeps == 0 {
            return Err(Error::InvalidParameter("substeps must be positive".into()));
        }
        Ok(SamplerGrid {
            epsilon,
            horizon,
            substeps,
        })
    }

    /// Grid with the default substep count for `scheme`.
    pub fn for_scheme(scheme: &BracketScheme, epsilon: T, horizon: T) -> Result<Self> {
        Self::new(epsilon, horizon, default_substeps(scheme))
    }

    /// Number of sampling intervals, rounding a partial last interval up.
    pub fn intervals(&self) -> usize {
        let ratio = self.horizon / self.epsilon;
        let n = (ratio - T::lit(1e-9) * ratio.max(T::one())).ceil();
        n.to_usize().unwrap_or(1).max(1)
    }

    /// Checks the resolution requirement against the fastest oscillator.
    pub fn validate_for(&self, scheme: &BracketScheme) -> Result<()> {
        let need = STEPS_PER_PERIOD * scheme.max_frequency() as usize;
        if self.substeps < need {
            return Err(Error::InvalidParameter(format!(
                "substeps = {} cannot resolve the fastest oscillation; need at least {need}",
                self.substeps
            )));
        }
        Ok(())
    }

    pub fn step(&self) -> T {
        self.epsilon / T::lit(self.substeps as f64)
    }

    /// Absolute time of substep `k` inside interval `j`.
    pub fn time(&self, j: usize, k: usize) -> T {
        self.epsilon * T::lit(j as f64) + self.step() * T::lit(k as f64)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct SimStats {
    /// How often `a(x, γ)` was solved for.
    pub coefficient_evaluations: usize,
    /// Sampling intervals completed.
    pub intervals: usize,
}

/// Closed-loop trace recorded on the substep grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub states: Vec<Vec<T>>,
    pub reference: Vec<Vec<T>>,
    /// Control applied at each time; the final point holds the left limit.
    pub controls: Vec<Vec<T>>,
    /// `‖x(t) − γ(t)‖`.
    pub dist: Vec<T>,
    /// Points per sampling interval (sample instants sit at multiples of it).
    pub substeps: usize,
    pub epsilon: T,
    pub stats: SimStats,
}

impl<T: Real> Trajectory<T> {
    fn with_capacity(cap: usize, substeps: usize, epsilon: T) -> Self {
        Trajectory {
            times: Vec::with_capacity(cap),
            states: Vec::with_capacity(cap),
            reference: Vec::with_capacity(cap),
            controls: Vec::with_capacity(cap),
            dist: Vec::with_capacity(cap),
            substeps,
            epsilon,
            stats: SimStats::default(),
        }
    }

    fn push(&mut self, t: T, x: &[T], gamma: Vec<T>, u: Vec<T>) {
        self.dist.push(dist(x, &gamma));
        self.times.push(t);
        self.states.push(x.to_vec());
        self.reference.push(gamma);
        self.controls.push(u);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<&[T]> {
        self.states.last().map(Vec::as_slice)
    }

    pub fn final_time(&self) -> Option<T> {
        self.times.last().copied()
    }

    /// Indices of the recorded sampling instants `t_j`.
    pub fn sample_indices(&self) -> Vec<usize> {
        (0..self.len()).step_by(self.substeps.max(1)).collect()
    }

    /// Number of complete sampling intervals recorded.
    pub fn interval_count(&self) -> usize {
        self.len().saturating_sub(1) / self.substeps.max(1)
    }

    /// Index range of points in `[t_j, t_{j+1}]`.
    pub fn interval_range(&self, j: usize) -> Range<usize> {
        let s = self.substeps;
        (j * s)..((j + 1) * s + 1).min(self.len())
    }

    /// Drops everything after `t_end` (within rounding).
    fn truncate_after(&mut self, t_end: T) {
        let tol = T::lit(1e-9) * t_end.abs().max(T::one());
        let keep = self.times.iter().take_while(|&&t| t <= t_end + tol).count();
        self.times.truncate(keep);
        self.states.truncate(keep);
        self.reference.truncate(keep);
        self.controls.truncate(keep);
        self.dist.truncate(keep);
    }
}

/// A simulation that stopped early, with everything recorded up to the failure.
#[derive(Debug, Clone)]
pub struct SimulationFailure<T> {
    pub error: Error,
    pub time: T,
    pub partial: Trajectory<T>,
}

impl<T: Real> std::fmt::Display for SimulationFailure<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "simulation stopped at t = {}: {}", self.time, self.error)
    }
}

impl<T: Real> std::error::Error for SimulationFailure<T> {}

/// What the per-interval hook sees at each sampling instant.
#[derive(Debug)]
pub struct SampleEvent<'a, T> {
    pub interval: usize,
    pub time: T,
    pub state: &'a [T],
    pub reference: &'a [T],
    pub coefficients: &'a [T],
}

fn rk4_step<T: Real>(f: impl Fn(T, &[T]) -> Result<Vec<T>>, t: T, x: &[T], h: T) -> Result<Vec<T>> {
    let half = T::lit(0.5);
    let axpy =
        |a: T, k: &[T]| -> Vec<T> { x.iter().zip(k).map(|(&xi, &ki)| xi + a * ki).collect() };
    let k1 = f(t, x)?;
    let k2 = f(t + half * h, &axpy(half * h, &k1))?;
    let k3 = f(t + half * h, &axpy(half * h, &k2))?;
    let k4 = f(t + h, &axpy(h, &k3))?;
    let sixth = h / T::lit(6.0);
    Ok((0..x.len())
        .map(|i| x[i] + sixth * (k1[i] + T::lit(2.0) * (k2[i] + k3[i]) + k4[i]))
        .collect())
}

/// One sampling interval starting at `t0` with coefficients frozen at
/// `(x0, gamma0)`. Returns times, states (`substeps + 1` points) and the
/// controls at the first `substeps` points.
pub fn integrate_interval<T: Real>(
    controller: &Controller<T>,
    x0: &[T],
    gamma0: &[T],
    t0: T,
    substeps: usize,
) -> Result<IntervalTrace<T>> {
    let system = controller.basis().system();
    system.check_state(x0)?;
    let coeffs = controller.coefficients(x0, gamma0)?;
    let h = controller.params().epsilon / T::lit(substeps as f64);
    let mut trace = IntervalTrace {
        times: vec![t0],
        states: vec![x0.to_vec()],
        controls: Vec::with_capacity(substeps),
        coefficients: coeffs,
    };
    let mut x = x0.to_vec();
    for k in 0..substeps {
        let t = t0 + h * T::lit(k as f64);
        trace
            .controls
            .push(controller.control(t, &trace.coefficients));
        x = rk4_step(
            |s, y| Ok(system.velocity(&controller.control(s, &trace.coefficients), y)),
            t,
            &x,
            h,
        )?;
        if !all_finite(&x) {
            return Err(Error::NonFinite {
                t: (t + h).to_f64_lossy(),
            });
        }
        if !system.contains(&x) {
            return Err(Error::domain(&x));
        }
        trace.times.push(t0 + h * T::lit((k + 1) as f64));
        trace.states.push(x.clone());
    }
    Ok(trace)
}

/// Result of [`integrate_interval`].
#[derive(Debug, Clone)]
pub struct IntervalTrace<T> {
    pub times: Vec<T>,
    pub states: Vec<Vec<T>>,
    pub controls: Vec<Vec<T>>,
    pub coefficients: CoefficientVector<T>,
}

impl<T: Real> IntervalTrace<T> {
    pub fn end_state(&self) -> &[T] {
        self.states.last().expect("interval has a start point")
    }
}

/// π_ε-solution of the closed loop from `x0` tracking `curve`.
pub fn simulate<T: Real>(
    controller: &Controller<T>,
    curve: &dyn ReferenceCurve<T>,
    x0: &[T],
    grid: &SamplerGrid<T>,
) -> Result<Trajectory<T>, SimulationFailure<T>> {
    simulate_with_hook(controller, curve, x0, grid, |_| {})
}

/// [`simulate`] with a callback invoked once per sampling instant, right
/// after the coefficients for that interval are computed.
pub fn simulate_with_hook<T: Real>(
    controller: &Controller<T>,
    curve: &dyn ReferenceCurve<T>,
    x0: &[T],
    grid: &SamplerGrid<T>,
    mut hook: impl FnMut(&SampleEvent<'_, T>),
) -> Result<Trajectory<T>, SimulationFailure<T>> {
    let system = controller.basis().system();
    let n_int = grid.intervals();
    let s = grid.substeps;
    let mut traj = Trajectory::with_capacity(n_int * s + 1, s, grid.epsilon);
    let fail = |error: Error, time: T, partial: Trajectory<T>| SimulationFailure {
        error,
        time,
        partial,
    };

    if let Err(e) = grid
        .validate_for(controller.scheme())
        .and_then(|_| check_setup(controller, curve, x0))
    {
        return Err(fail(e, T::zero(), traj));
    }

    let h = grid.step();
    let mut x = x0.to_vec();
    let mut coeffs = CoefficientVector::zeros(controller.scheme().len());
    for j in 0..n_int {
        let tj = grid.time(j, 0);
        let gamma_j = curve.eval(tj);
        coeffs = match controller.coefficients(&x, &gamma_j) {
            Ok(c) => c,
            Err(e) => return Err(fail(e, tj, traj)),
        };
        traj.stats.coefficient_evaluations += 1;
        hook(&SampleEvent {
            interval: j,
            time: tj,
            state: &x,
            reference: &gamma_j,
            coefficients: &coeffs,
        });
        let frozen = &coeffs;
        for k in 0..s {
            let t = grid.time(j, k);
            let gamma = if k == 0 {
                gamma_j.clone()
            } else {
                curve.eval(t)
            };
            traj.push(t, &x, gamma, controller.control(t, frozen));
            let next = rk4_step(
                |tau, y| Ok(system.velocity(&controller.control(tau, frozen), y)),
                t,
                &x,
                h,
            )
            .expect("frozen dynamics are infallible");
            let t_next = grid.time(j, k + 1);
            if !all_finite(&next) {
                return Err(fail(
                    Error::NonFinite {
                        t: t_next.to_f64_lossy(),
                    },
                    t_next,
                    traj,
                ));
            }
            if !system.contains(&next) {
                return Err(fail(Error::domain(&next), t_next, traj));
            }
            x = next;
        }
        traj.stats.intervals += 1;
    }
    let t_end = grid.time(n_int, 0);
    traj.push(
        t_end,
        &x,
        curve.eval(t_end),
        controller.control(t_end, &coeffs),
    );
    traj.truncate_after(grid.horizon);
    Ok(traj)
}

fn check_setup<T: Real>(
    controller: &Controller<T>,
    curve: &dyn ReferenceCurve<T>,
    x0: &[T],
) -> Result<()> {
    let system = controller.basis().system();
    if curve.dim() != system.n() {
        return Err(Error::DimensionMismatch {
            expected: system.n(),
            got: curve.dim(),
        });
    }
    system.check_state(x0)
}

/// Baseline with continuously evaluated feedback `h(t, x(t), γ(t))`: the
/// coefficients are recomputed at every RK4 stage instead of being frozen.
pub fn classic_solution_simulate<T: Real>(
    controller: &Controller<T>,
    curve: &dyn ReferenceCurve<T>,
    x0: &[T],
    grid: &SamplerGrid<T>,
) -> Result<Trajectory<T>, SimulationFailure<T>> {
    let system = controller.basis().system();
    let n_int = grid.intervals();
    let s = grid.substeps;
    let mut traj = Trajectory::with_capacity(n_int * s + 1, s, grid.epsilon);
    if let Err(e) = grid
        .validate_for(controller.scheme())
        .and_then(|_| check_setup(controller, curve, x0))
    {
        return Err(SimulationFailure {
            error: e,
            time: T::zero(),
            partial: traj,
        });
    }
    let h = grid.step();
    let evals = std::cell::Cell::new(0usize);
    let feedback = |t: T, y: &[T]| -> Result<Vec<T>> {
        let c = controller.coefficients(y, &curve.eval(t))?;
        evals.set(evals.get() + 1);
        Ok(controller.control(t, &c))
    };
    let mut x = x0.to_vec();
    for j in 0..=n_int {
        let steps = if j == n_int { 0 } else { s };
        for k in 0..steps.max(1) {
            let t = grid.time(j, k);
            let u = match feedback(t, &x) {
                Ok(u) => u,
                Err(error) => {
                    traj.stats.coefficient_evaluations = evals.get();
                    return Err(SimulationFailure {
                        error,
                        time: t,
                        partial: traj,
                    });
                }
            };
            traj.push(t, &x, curve.eval(t), u);
            if j == n_int {
                break;
            }
            let next = rk4_step(
                |tau, y| Ok(system.velocity(&feedback(tau, y)?, y)),
                t,
                &x,
                h,
            );
            let t_next = grid.time(j, k + 1);
            let error = match next {
                Ok(v) if !all_finite(&v) => Error::NonFinite {
                    t: t_next.to_f64_lossy(),
                },
                Ok(v) if !system.contains(&v) => Error::domain(&v),
                Ok(v) => {
                    x = v;
                    continue;
                }
                Err(e) => e,
            };
            traj.stats.coefficient_evaluations = evals.get();
            return Err(SimulationFailure {
                error,
                time: t_next,
                partial: traj,
            });
        }
        if j < n_int {
            traj.stats.intervals += 1;
        }
    }
    traj.stats.coefficient_evaluations = evals.get();
    traj.truncate_after(grid.horizon);
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::ControllerParams;
    use crate::curves::{curve_gamma1, stationary};
    use crate::scenarios::unicycle;
    use crate::systems::GainBasis;

    fn unicycle_controller(alpha: f64, eps: f64) -> Controller<f64> {
        let s = unicycle::<f64>();
        let basis = GainBasis::new(&s.system, &s.scheme).unwrap();
        Controller::new(basis, s.scheme, ControllerParams::new(alpha, eps).unwrap()).unwrap()
    }

    #[test]
    fn grid_counts() {
        let g = SamplerGrid::new(0.1, 40.0, 200).unwrap();
        assert_eq!(g.intervals(), 400);
        let g = SamplerGrid::new(0.3, 1.0, 200).unwrap();
        assert_eq!(g.intervals(), 4);
        assert!(SamplerGrid::new(0.0, 1.0, 10).is_err());
        assert!(SamplerGrid::new(0.1, 1.0, 0).is_err());
    }

    #[test]
    fn equilibrium_stays_put() {
        let c = unicycle_controller(15.0, 0.1);
        let p = vec![0.5, -0.25, 0.3];
        let curve = stationary(p.clone());
        let grid = SamplerGrid::new(0.1, 2.0, 200).unwrap();
        let traj = simulate(&c, curve.as_ref(), &p, &grid).unwrap();
        assert_eq!(traj.len(), 20 * 200 + 1);
        for x in &traj.states {
            assert!(dist(x, &p) <= 1e-9);
        }
        assert!(traj.controls.iter().flatten().all(|&u| u == 0.0));
        let classic = classic_solution_simulate(&c, curve.as_ref(), &p, &grid).unwrap();
        assert_eq!(classic.states, traj.states);
    }

    #[test]
    fn partial_interval_is_truncated() {
        let c = unicycle_controller(15.0, 0.1);
        let curve = stationary(vec![0.0; 3]);
        let grid = SamplerGrid::new(0.1, 0.25, 200).unwrap();
        let traj = simulate(&c, curve.as_ref(), &[0.1, 0.0, 0.0], &grid).unwrap();
        assert_eq!(traj.stats.intervals, 3);
        assert!((traj.final_time().unwrap() - 0.25).abs() < 1e-12);
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn one_coefficient_solve_per_interval() {
        let c = unicycle_controller(15.0, 0.1);
        let curve = curve_gamma1::<f64>(5.0);
        let grid = SamplerGrid::new(0.1, 5.0, 200).unwrap();
        let mut seen = Vec::new();
        let traj = simulate_with_hook(&c, curve.as_ref(), &[1.0, -1.0, 0.0], &grid, |ev| {
            seen.push((ev.interval, ev.state.to_vec(), ev.coefficients.to_vec()));
        })
        .unwrap();
        assert_eq!(traj.stats.coefficient_evaluations, 50);
        assert_eq!(seen.len(), 50);
        for (j, x, a) in &seen {
            let idx = j * 200;
            assert_eq!(&traj.states[idx], x);
            let gamma = curve.eval(0.1 * *j as f64);
            assert_eq!(&c.coefficients(x, &gamma).unwrap().0, a);
            // mid-interval states give different coefficients, so they were not used
            let mid = &traj.states[idx + 100];
            let a_mid = c.coefficients(mid, &traj.reference[idx + 100]).unwrap();
            assert_ne!(&a_mid.0, a);
            // the control recorded mid-interval is built from the frozen coefficients
            assert_eq!(
                traj.controls[idx + 100],
                c.control(traj.times[idx + 100], a)
            );
        }
    }

    #[test]
    fn domain_exit_returns_partial_trajectory() {
        use crate::scenarios::rear_wheel_car;
        let s = rear_wheel_car::<f64>();
        let basis = GainBasis::new(&s.system, &s.scheme).unwrap();
        // a huge gain with a coarse period throws the steering angle out of |x3| < π/2
        let c = Controller::new(
            basis,
            s.scheme.clone(),
            ControllerParams::new(200.0, 2.0).unwrap(),
        )
        .unwrap();
        let curve = stationary(vec![0.0, 0.0, 0.0, 0.0]);
        let grid = SamplerGrid::new(2.0, 20.0, 200).unwrap();
        let err = simulate(&c, curve.as_ref(), &[8.0, 3.0, 0.0, 0.0], &grid).unwrap_err();
        assert!(matches!(
            err.error,
            Error::Domain { .. } | Error::RankCondition { .. } | Error::NonFinite { .. }
        ));
        assert!(!err.partial.is_empty());
        assert!(err.partial.states.iter().all(|x| s.system.contains(x)));
    }

    #[test]
    fn start_outside_domain_is_rejected() {
        use crate::scenarios::rear_wheel_car;
        let s = rear_wheel_car::<f64>();
        let basis = GainBasis::new(&s.system, &s.scheme).unwrap();
        let c = Controller::new(basis, s.scheme.clone(), s.default_params).unwrap();
        let curve = stationary(vec![0.0; 4]);
        let grid = SamplerGrid::new(0.5, 1.0, 200).unwrap();
        let err = simulate(&c, curve.as_ref(), &[0.0, 0.0, 2.0, 0.0], &grid).unwrap_err();
        assert!(matches!(err.error, Error::Domain { .. }));
        assert!(err.partial.is_empty());
    }

    #[test]
    fn underresolved_grid_is_rejected() {
        let c = unicycle_controller(15.0, 0.1);
        let curve = stationary(vec![0.0; 3]);
        let grid = SamplerGrid::new(0.1, 1.0, 20).unwrap();
        assert!(simulate(&c, curve.as_ref(), &[0.0; 3], &grid).is_err());
    }

    #[test]
    fn frozen_interval_matches_finer_integration() {
        // a12 = 0 (pure heading error along f1 at x3 = 0 gives a = (−α e1, 0, 0))
        let c = unicycle_controller(2.0, 0.1);
        let x0 = [0.4, 0.0, 0.0];
        let g0 = [0.0, 0.0, 0.0];
        let coarse = integrate_interval(&c, &x0, &g0, 0.0, 200).unwrap();
        assert_eq!(coarse.coefficients[2], 0.0);
        let fine = integrate_interval(&c, &x0, &g0, 0.0, 2000).unwrap();
        for (a, b) in coarse.end_state().iter().zip(fine.end_state()) {
            assert!((a - b).abs() < 1e-8);
        }
        // constant speed −0.8 along x1
        assert!((coarse.end_state()[0] - (0.4 - 0.08)).abs() < 1e-12);
    }
}
