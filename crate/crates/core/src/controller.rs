//! Oscillating feedback built from the coefficient vector `a = −α F⁻¹(x)(x − γ)`.
//!
//! Degree-one terms use amplitudes `√(4πκ|a|/ε)` so that, averaged over one
//! sampling period, each pair `(j1, j2)` moves the state along
//! `a_{j1j2}[f_{j1}, f_{j2}]`. The degree-two channel adds cube-root
//! amplitudes for nested brackets `[[f_{j1}, f_{j2}], f_{j1}]`.

use std::ops::Deref;

use crate::error::{Error, Result};
use crate::scalar::sub;
use crate::systems::{BracketScheme, GainBasis};
use crate::Real;

/// Gain `α` and sampling period `ε`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ControllerParams<T> {
    pub alpha: T,
    pub epsilon: T,
}

impl<T: Real> ControllerParams<T> {
    pub fn new(alpha: T, epsilon: T) -> Result<Self> {
        if !(alpha > T::zero() && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        if !(epsilon > T::zero() && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(ControllerParams { alpha, epsilon })
    }

    /// Whether `α > ν/ρ`, the gain needed for a tube of radius `ρ` around a
    /// curve with speed bound `ν`.
    pub fn satisfies_gain_condition(&self, nu: T, rho: T) -> bool {
        self.alpha > nu / rho
    }

    /// Human-readable warning when the gain condition fails.
    pub fn gain_warning(&self, nu: T, rho: T) -> Option<String> {
        (!self.satisfies_gain_condition(nu, rho)).then(|| {
            format!(
                "alpha = {} does not exceed nu/rho = {}/{} = {}",
                self.alpha,
                nu,
                rho,
                nu / rho
            )
        })
    }
}

/// Coefficients in column order of `F(x)`: S1 entries, then S2 pairs, then
/// nested brackets.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CoefficientVector<T>(pub Vec<T>);

impl<T> Deref for CoefficientVector<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

impl<T: Real> CoefficientVector<T> {
    pub fn zeros(n: usize) -> Self {
        CoefficientVector(vec![T::zero(); n])
    }
}

/// Solves `F(x)·a = −α(x − γ)` by LU with partial pivoting.
pub fn coefficients<T: Real>(
    basis: &GainBasis<T>,
    params: &ControllerParams<T>,
    x: &[T],
    gamma: &[T],
) -> Result<CoefficientVector<T>> {
    if gamma.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: gamma.len(),
        });
    }
    let f = basis.matrix(x)?;
    let rhs: Vec<T> = sub(x, gamma)
        .into_iter()
        .map(|e| -params.alpha * e)
        .collect();
    f.lu()
        .solve(&rhs)
        .map(CoefficientVector)
        .ok_or_else(|| Error::RankCondition {
            state: x.iter().map(|v| v.to_f64_lossy()).collect(),
            sigma_min: 0.0,
            scale: f.max_column_norm().to_f64_lossy(),
        })
}

fn check_len<T>(scheme: &BracketScheme, coeffs: &[T]) -> Result<()> {
    if coeffs.len() != scheme.len() {
        return Err(Error::DimensionMismatch {
            expected: scheme.len(),
            got: coeffs.len(),
        });
    }
    Ok(())
}

/// Degree-one controls at absolute time `t`:
///
/// `uᵢ = Σ_{j∈S1} δᵢⱼ aⱼ + √(4π/ε) Σ_{(j1,j2)∈S2} √(κ|a_{j1j2}|)
///        (δ_{ij1} cos(2πκt/ε) + δ_{ij2} sign(a_{j1j2}) sin(2πκt/ε))`.
///
/// Nested-bracket coefficients, if present, are ignored here.
pub fn control_degree1<T: Real>(
    scheme: &BracketScheme,
    params: &ControllerParams<T>,
    m: usize,
    t: T,
    coeffs: &[T],
) -> Result<Vec<T>> {
    check_len(scheme, coeffs)?;
    let mut u = vec![T::zero(); m];
    for (k, &i) in scheme.s1.iter().enumerate() {
        u[i] = u[i] + coeffs[k];
    }
    let offset = scheme.s1.len();
    let two_pi = T::TAU();
    let four_pi_over_eps = T::lit(4.0) * T::PI() / params.epsilon;
    for (k, pair) in scheme.s2.iter().enumerate() {
        let a = coeffs[offset + k];
        if a == T::zero() {
            continue;
        }
        let kappa = T::lit(pair.kappa as f64);
        let amp = (four_pi_over_eps * kappa * a.abs()).sqrt();
        let phase = two_pi * kappa * t / params.epsilon;
        u[pair.first] = u[pair.first] + amp * phase.cos();
        u[pair.second] = u[pair.second] + amp * a.sign0() * phase.sin();
    }
    Ok(u)
}

/// Degree-one controls plus the cube-root terms for nested brackets of the
/// `[[f_{j1}, f_{j2}], f_{j1}]` pattern:
///
/// channel `j1`: `∛(16π²(k2²−k1²)a/ε²)·cos(2πk1t/ε)(1 + sin(2πk2t/ε))`,
/// channel `j2`: `∛(16π²(k2²−k1²)a/ε²)·sin(2πk2t/ε)`.
pub fn control_degree2<T: Real>(
    scheme: &BracketScheme,
    params: &ControllerParams<T>,
    m: usize,
    t: T,
    coeffs: &[T],
) -> Result<Vec<T>> {
    check_degree2_pattern(scheme)?;
    let mut u = control_degree1(scheme, params, m, t, coeffs)?;
    let offset = scheme.s1.len() + scheme.s2.len();
    let two_pi = T::TAU();
    let scale = T::lit(16.0) * T::PI() * T::PI() / (params.epsilon * params.epsilon);
    for (k, triple) in scheme.degree2.iter().enumerate() {
        let a = coeffs[offset + k];
        if a == T::zero() {
            continue;
        }
        let (k1, k2) = (T::lit(triple.k1 as f64), T::lit(triple.k2 as f64));
        // cbrt keeps the sign of its argument
        let amp = (scale * (k2 * k2 - k1 * k1) * a).cbrt();
        let p1 = two_pi * k1 * t / params.epsilon;
        let p2 = two_pi * k2 * t / params.epsilon;
        let s2 = p2.sin();
        u[triple.first] = u[triple.first] + amp * p1.cos() * (T::one() + s2);
        u[triple.second] = u[triple.second] + amp * s2;
    }
    Ok(u)
}

pub(crate) fn check_degree2_pattern(scheme: &BracketScheme) -> Result<()> {
    match scheme.degree2.iter().find(|t| t.third != t.first) {
        Some(t) => Err(Error::UnsupportedScheme(format!(
            "nested bracket ({}, {}, {}) is not of the form [[f_j1, f_j2], f_j1]",
            t.first, t.second, t.third
        ))),
        None => Ok(()),
    }
}

/// Resolved feedback law for one system, scheme and parameter set.
#[derive(Clone)]
pub struct Controller<T> {
    basis: GainBasis<T>,
    scheme: BracketScheme,
    params: ControllerParams<T>,
}

impl<T: Real> Controller<T> {
    pub fn new(
        basis: GainBasis<T>,
        scheme: BracketScheme,
        params: ControllerParams<T>,
    ) -> Result<Self> {
        check_degree2_pattern(&scheme)?;
        if basis.columns().len() != scheme.len() {
            return Err(Error::InvalidScheme(
                "basis and scheme disagree on column count".into(),
            ));
        }
        Ok(Controller {
            basis,
            scheme,
            params,
        })
    }

    pub fn basis(&self) -> &GainBasis<T> {
        &self.basis
    }

    pub fn scheme(&self) -> &BracketScheme {
        &self.scheme
    }

    pub fn params(&self) -> &ControllerParams<T> {
        &self.params
    }

    pub fn m(&self) -> usize {
        self.basis.system().m()
    }

    pub fn coefficients(&self, x: &[T], gamma: &[T]) -> Result<CoefficientVector<T>> {
        coefficients(&self.basis, &self.params, x, gamma)
    }

    /// Control at absolute time `t` for coefficients frozen at the last
    /// sampling instant.
    pub fn control(&self, t: T, coeffs: &[T]) -> Vec<T> {
        let m = self.m();
        let u = if self.scheme.degree2.is_empty() {
            control_degree1(&self.scheme, &self.params, m, t, coeffs)
        } else {
            control_degree2(&self.scheme, &self.params, m, t, coeffs)
        };
        u.expect("scheme validated at construction")
    }
}
