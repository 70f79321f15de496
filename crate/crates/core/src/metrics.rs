//! Stability measurements for the family of balls `B_ρ(γ(t))`.

use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::Real;

/// Fraction of the horizon used as the steady-state window.
pub const TAIL_FRACTION: f64 = 0.25;

/// Relative tolerance when deciding that the state stays inside the tube.
pub const PERSISTENCE_TOLERANCE: f64 = 1e-9;

/// Distance from a point at `dist` from the centre to a ball of radius `rho`.
pub fn tube_distance<T: Real>(dist: T, rho: T) -> T {
    (dist - rho).max(T::zero())
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct StabilityReport<T> {
    pub rho: T,
    /// Time from which the state stays within the tube; `None` if it never settles.
    pub entry_time: Option<T>,
    /// `sup ‖x − γ‖` over the last quarter of the horizon.
    pub steady_amplitude: T,
    pub tail_start: T,
    pub max_tube_distance: T,
    /// Decay rate of the sampled tube distance during the transient.
    pub fitted_lambda: Option<T>,
    pub fitted_c: Option<T>,
    pub fit_points: usize,
}

/// Least-squares fit of `values ≈ C e^{−λ t}` on the log. Needs at least two
/// strictly positive values at distinct times.
pub fn fit_exponential<T: Real>(times: &[T], values: &[T]) -> Option<(T, T)> {
    let pts: Vec<(T, T)> = times
        .iter()
        .zip(values)
        .filter(|(_, &v)| v > T::zero() && v.is_finite())
        .map(|(&t, &v)| (t, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = T::lit(pts.len() as f64);
    let mean_t = pts.iter().fold(T::zero(), |a, p| a + p.0) / n;
    let mean_y = pts.iter().fold(T::zero(), |a, p| a + p.1) / n;
    let (sxy, sxx) = pts
        .iter()
        .fold((T::zero(), T::zero()), |(sxy, sxx), &(t, y)| {
            let dt = t - mean_t;
            (sxy + dt * (y - mean_y), sxx + dt * dt)
        });
    if !(sxx > T::zero()) {
        return None;
    }
    let slope = sxy / sxx;
    Some(((mean_y - slope * mean_t).exp(), -slope))
}

/// `sup ‖x − γ‖` over recorded points with `from ≤ t ≤ to`.
pub fn tail_amplitude<T: Real>(traj: &Trajectory<T>, from: T, to: T) -> T {
    traj.times
        .iter()
        .zip(&traj.dist)
        .filter(|(&t, _)| t >= from && t <= to)
        .fold(T::zero(), |a, (_, &d)| a.max(d))
}

/// Entry time, tail amplitude and transient decay fit for a tube of radius `rho`.
pub fn dist_to_family<T: Real>(traj: &Trajectory<T>, rho: T) -> Result<StabilityReport<T>> {
    if traj.is_empty() {
        return Err(Error::Usage(
            "stability report needs a non-empty trajectory".into(),
        ));
    }
    if !(rho > T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "tube radius must be positive, got {rho}"
        )));
    }
    let limit = rho * (T::one() + T::lit(PERSISTENCE_TOLERANCE));
    let last_outside = traj.dist.iter().rposition(|&d| d > limit);
    let entry_time = match last_outside {
        None => Some(traj.times[0]),
        Some(k) if k + 1 < traj.len() => Some(traj.times[k + 1]),
        Some(_) => None,
    };
    let t0 = traj.times[0];
    let t_end = *traj.times.last().expect("non-empty");
    let tail_start = t_end - (t_end - t0) * T::lit(TAIL_FRACTION);
    let steady_amplitude = tail_amplitude(traj, tail_start, t_end);
    let max_tube_distance = traj
        .dist
        .iter()
        .fold(T::zero(), |a, &d| a.max(tube_distance(d, rho)));

    let transient_end = entry_time.unwrap_or(t_end);
    let (ts, ds): (Vec<T>, Vec<T>) = traj
        .sample_indices()
        .into_iter()
        .filter(|&k| traj.times[k] < transient_end)
        .map(|k| (traj.times[k], tube_distance(traj.dist[k], rho)))
        .filter(|&(_, d)| d > T::zero())
        .unzip();
    let fit = fit_exponential(&ts, &ds);
    Ok(StabilityReport {
        rho,
        entry_time,
        steady_amplitude,
        tail_start,
        max_tube_distance,
        fitted_lambda: fit.map(|f| f.1),
        fitted_c: fit.map(|f| f.0),
        fit_points: ts.len(),
    })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct GapReport<T> {
    pub tail_admissible: T,
    pub tail_nonadmissible: T,
    /// `tail_nonadmissible / tail_admissible`.
    pub ratio: T,
}

/// Compares steady amplitudes of two runs on the same horizon.
pub fn admissible_vs_nonadmissible_gap<T: Real>(
    adm: &Trajectory<T>,
    nonadm: &Trajectory<T>,
) -> Result<GapReport<T>> {
    let span = |t: &Trajectory<T>| match (t.times.first(), t.times.last()) {
        (Some(&a), Some(&b)) => Ok((a, b)),
        _ => Err(Error::Usage(
            "gap comparison needs non-empty trajectories".into(),
        )),
    };
    let (a0, a1) = span(adm)?;
    let (b0, b1) = span(nonadm)?;
    let tol = T::lit(1e-9) * a1.abs().max(b1.abs()).max(T::one());
    if (a0 - b0).abs() > tol || (a1 - b1).abs() > tol {
        return Err(Error::Usage(format!(
            "trajectories cover different horizons: [{a0}, {a1}] vs [{b0}, {b1}]"
        )));
    }
    let tail_start = a1 - (a1 - a0) * T::lit(TAIL_FRACTION);
    let tail_admissible = tail_amplitude(adm, tail_start, a1);
    let tail_nonadmissible = tail_amplitude(nonadm, tail_start, a1);
    let ratio = if tail_admissible == tail_nonadmissible {
        T::one()
    } else {
        tail_nonadmissible / tail_admissible
    };
    Ok(GapReport {
        tail_admissible,
        tail_nonadmissible,
        ratio,
    })
}
