//! Driftless control-affine systems `ẋ = Σ uᵢ fᵢ(x)`, Lie brackets, and the
//! bracket-generating gain matrix `F(x)`.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::norm;
use crate::Real;

/// Smallest singular value of `F(x)` below this fraction of the largest
/// column norm counts as a rank-condition violation.
pub const SINGULAR_RATIO: f64 = 1e-12;

/// Looser ratio used only to flag samples as close to losing rank.
pub const NEAR_SINGULAR_RATIO: f64 = 1e-6;

/// Base step of the central-difference Jacobian fallback (scaled by `max(1, ‖x‖)`).
pub const FD_JACOBIAN_STEP: f64 = 1e-6;

/// Step used to differentiate analytic Jacobians when assembling the
/// Jacobian of a bracket field.
pub const FD_SECOND_STEP: f64 = 1e-5;

/// A smooth vector field on ℝⁿ together with its Jacobian.
pub trait VectorField<T: Real>: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[T]) -> Vec<T>;

    /// `∂f/∂x`, row `i` column `k` holding `∂fᵢ/∂x_k`.
    fn jacobian(&self, x: &[T]) -> Matrix<T>;

    fn name(&self) -> String {
        "f".to_string()
    }
}

pub type FieldRef<T> = Arc<dyn VectorField<T>>;

type EvalFn<T> = Arc<dyn Fn(&[T]) -> Vec<T> + Send + Sync>;
type JacFn<T> = Arc<dyn Fn(&[T]) -> Matrix<T> + Send + Sync>;
type DomainFn<T> = Arc<dyn Fn(&[T]) -> bool + Send + Sync>;

/// Closure-backed vector field. Without an analytic Jacobian it falls back to
/// central differences with step `1e-6·max(1, ‖x‖)`.
#[derive(Clone)]
pub struct FnField<T> {
    name: String,
    dim: usize,
    eval: EvalFn<T>,
    jacobian: Option<JacFn<T>>,
}

impl<T: Real> FnField<T> {
    pub fn new<F, J>(name: impl Into<String>, dim: usize, eval: F, jacobian: J) -> Self
    where
        F: Fn(&[T]) -> Vec<T> + Send + Sync + 'static,
        J: Fn(&[T]) -> Matrix<T> + Send + Sync + 'static,
    {
        FnField {
            name: name.into(),
            dim,
            eval: Arc::new(eval),
            jacobian: Some(Arc::new(jacobian)),
        }
    }

    pub fn without_jacobian<F>(name: impl Into<String>, dim: usize, eval: F) -> Self
    where
        F: Fn(&[T]) -> Vec<T> + Send + Sync + 'static,
    {
        FnField {
            name: name.into(),
            dim,
            eval: Arc::new(eval),
            jacobian: None,
        }
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    pub fn into_ref(self) -> FieldRef<T> {
        Arc::new(self)
    }
}

impl<T: Real> VectorField<T> for FnField<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[T]) -> Vec<T> {
        (self.eval)(x)
    }

    fn jacobian(&self, x: &[T]) -> Matrix<T> {
        match &self.jacobian {
            Some(j) => j(x),
            None => {
                let h = T::fd_step(FD_JACOBIAN_STEP) * norm(x).max(T::one());
                central_difference_jacobian(|y| (self.eval)(y), x, h)
            }
        }
    }

    fn name(&self) -> String {
        self.name.clone()
    }
}

impl<T> fmt::Debug for FnField<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnField")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

/// Central-difference Jacobian of `f` at `x` with a fixed step.
pub fn central_difference_jacobian<T: Real>(
    f: impl Fn(&[T]) -> Vec<T>,
    x: &[T],
    h: T,
) -> Matrix<T> {
    let n = x.len();
    let mut jac: Option<Matrix<T>> = None;
    let mut xp = x.to_vec();
    for k in 0..n {
        xp[k] = x[k] + h;
        let fp = f(&xp);
        xp[k] = x[k] - h;
        let fm = f(&xp);
        xp[k] = x[k];
        let jac = jac.get_or_insert_with(|| Matrix::zeros(fp.len(), n));
        for i in 0..fp.len() {
            jac[(i, k)] = (fp[i] - fm[i]) / (h + h);
        }
    }
    jac.unwrap_or_else(|| Matrix::zeros(0, 0))
}

/// The derived field `[f, g] = Dg·f − Df·g`.
///
/// Its Jacobian needs second derivatives of `f` and `g`; those come from
/// central differences of their (analytic) Jacobians with step `1e-5`.
#[derive(Clone)]
pub struct BracketField<T> {
    f: FieldRef<T>,
    g: FieldRef<T>,
}

impl<T: Real> BracketField<T> {
    pub fn new(f: FieldRef<T>, g: FieldRef<T>) -> Result<Self> {
        if f.dim() != g.dim() {
            return Err(Error::DimensionMismatch {
                expected: f.dim(),
                got: g.dim(),
            });
        }
        Ok(BracketField { f, g })
    }

    pub fn into_ref(self) -> FieldRef<T> {
        Arc::new(self)
    }
}

impl<T: Real> VectorField<T> for BracketField<T> {
    fn dim(&self) -> usize {
        self.f.dim()
    }

    fn eval(&self, x: &[T]) -> Vec<T> {
        bracket_unchecked(self.f.as_ref(), self.g.as_ref(), x)
    }

    fn jacobian(&self, x: &[T]) -> Matrix<T> {
        let n = x.len();
        let fx = self.f.eval(x);
        let gx = self.g.eval(x);
        let jf = self.f.jacobian(x);
        let jg = self.g.jacobian(x);
        // Jg·Jf − Jf·Jg covers the first-derivative products.
        let mut out = jg.mul(&jf).sub(&jf.mul(&jg));
        let mut xp = x.to_vec();
        for k in 0..n {
            let h = T::fd_step(FD_SECOND_STEP) * x[k].abs().max(T::one());
            xp[k] = x[k] + h;
            let (jf_p, jg_p) = (self.f.jacobian(&xp), self.g.jacobian(&xp));
            xp[k] = x[k] - h;
            let (jf_m, jg_m) = (self.f.jacobian(&xp), self.g.jacobian(&xp));
            xp[k] = x[k];
            let inv = T::one() / (h + h);
            let djg = jg_p.sub(&jg_m).scale(inv);
            let djf = jf_p.sub(&jf_m).scale(inv);
            let col_g = djg.mul_vec(&fx);
            let col_f = djf.mul_vec(&gx);
            for i in 0..n {
                out[(i, k)] = out[(i, k)] + col_g[i] - col_f[i];
            }
        }
        out
    }

    fn name(&self) -> String {
        format!("[{},{}]", self.f.name(), self.g.name())
    }
}

fn bracket_unchecked<T: Real>(f: &dyn VectorField<T>, g: &dyn VectorField<T>, x: &[T]) -> Vec<T> {
    let fx = f.eval(x);
    let gx = g.eval(x);
    let a = g.jacobian(x).mul_vec(&fx);
    let b = f.jacobian(x).mul_vec(&gx);
    a.iter().zip(&b).map(|(&p, &q)| p - q).collect()
}

/// Lie bracket `[f, g](x) = L_f g(x) − L_g f(x) = Dg(x)·f(x) − Df(x)·g(x)`.
pub fn lie_bracket<T: Real>(
    f: &dyn VectorField<T>,
    g: &dyn VectorField<T>,
    x: &[T],
) -> Result<Vec<T>> {
    if f.dim() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            got: g.dim(),
        });
    }
    if x.len() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            got: x.len(),
        });
    }
    Ok(bracket_unchecked(f, g, x))
}

/// Lie derivative `L_g f(x) = Df(x)·g(x)`.
pub fn lie_derivative<T: Real>(g: &dyn VectorField<T>, f: &dyn VectorField<T>, x: &[T]) -> Vec<T> {
    f.jacobian(x).mul_vec(&g.eval(x))
}

/// `ẋ = Σ uᵢ fᵢ(x)` with `m < n` inputs, restricted to a domain `D`.
#[derive(Clone)]
pub struct ControlSystem<T> {
    name: String,
    n: usize,
    fields: Vec<FieldRef<T>>,
    domain: DomainFn<T>,
}

impl<T: Real> ControlSystem<T> {
    pub fn new(name: impl Into<String>, n: usize, fields: Vec<FieldRef<T>>) -> Result<Self> {
        let m = fields.len();
        if m == 0 || m >= n {
            return Err(Error::InvalidParameter(format!(
                "a control system needs 0 < m < n, got m = {m}, n = {n}"
            )));
        }
        if let Some(f) = fields.iter().find(|f| f.dim() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: f.dim(),
            });
        }
        Ok(ControlSystem {
            name: name.into(),
            n,
            fields,
            domain: Arc::new(|_| true),
        })
    }

    pub fn with_domain(mut self, domain: impl Fn(&[T]) -> bool + Send + Sync + 'static) -> Self {
        self.domain = Arc::new(domain);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.fields.len()
    }

    pub fn field(&self, i: usize) -> &FieldRef<T> {
        &self.fields[i]
    }

    pub fn fields(&self) -> &[FieldRef<T>] {
        &self.fields
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.len() == self.n && (self.domain)(x)
    }

    pub(crate) fn check_state(&self, x: &[T]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        if !(self.domain)(x) {
            return Err(Error::domain(x));
        }
        Ok(())
    }

    /// `[f_i, f_j](x)` with domain checking.
    pub fn bracket(&self, i: usize, j: usize, x: &[T]) -> Result<Vec<T>> {
        self.check_state(x)?;
        lie_bracket(self.fields[i].as_ref(), self.fields[j].as_ref(), x)
    }

    /// Right-hand side `Σ uᵢ fᵢ(x)`.
    pub fn velocity(&self, u: &[T], x: &[T]) -> Vec<T> {
        let mut v = vec![T::zero(); self.n];
        for (ui, f) in u.iter().zip(&self.fields) {
            if *ui == T::zero() {
                continue;
            }
            for (vk, fk) in v.iter_mut().zip(f.eval(x)) {
                *vk = *vk + *ui * fk;
            }
        }
        v
    }
}

impl<T> fmt::Debug for ControlSystem<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlSystem")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.fields.len())
            .finish()
    }
}

/// First-order bracket `[f_first, f_second]` with its oscillation multiplier κ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct BracketPair {
    pub first: usize,
    pub second: usize,
    pub kappa: u32,
}

/// Nested bracket `[[f_first, f_second], f_third]` driven by the two
/// frequency multipliers `(k1, k2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct NestedBracket {
    pub first: usize,
    pub second: usize,
    pub third: usize,
    pub k1: u32,
    pub k2: u32,
}

/// Which fields and brackets make up the columns of `F(x)`. Indices are
/// zero-based input channels.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct BracketScheme {
    pub s1: Vec<usize>,
    pub s2: Vec<BracketPair>,
    pub degree2: Vec<NestedBracket>,
}

impl BracketScheme {
    pub fn new(s1: Vec<usize>, s2: Vec<BracketPair>) -> Self {
        BracketScheme {
            s1,
            s2,
            degree2: Vec::new(),
        }
    }

    pub fn with_degree2(mut self, triples: Vec<NestedBracket>) -> Self {
        self.degree2 = triples;
        self
    }

    /// Number of columns of `F(x)`.
    pub fn len(&self) -> usize {
        self.s1.len() + self.s2.len() + self.degree2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Largest oscillation multiplier, counting the `k1 + k2` harmonic that
    /// the degree-two channel produces.
    pub fn max_frequency(&self) -> u32 {
        let first = self.s2.iter().map(|p| p.kappa);
        let second = self.degree2.iter().map(|t| t.k2.max(t.k1 + t.k2));
        first.chain(second).max().unwrap_or(0)
    }

    /// Checks the scheme against an `(n, m)` system.
    pub fn validate(&self, n: usize, m: usize) -> Result<()> {
        if self.len() != n {
            return Err(Error::InvalidScheme(format!(
                "|S1| + |S2| + |degree2| = {} but n = {n}",
                self.len()
            )));
        }
        let mut seen = HashSet::new();
        for &i in &self.s1 {
            if i >= m {
                return Err(Error::InvalidScheme(format!(
                    "S1 index {i} out of range for m = {m}"
                )));
            }
            if !seen.insert(i) {
                return Err(Error::InvalidScheme(format!("S1 index {i} repeated")));
            }
        }
        let mut kappas = HashSet::new();
        for p in &self.s2 {
            if p.first >= m || p.second >= m || p.first == p.second {
                return Err(Error::InvalidScheme(format!(
                    "bracket pair ({}, {}) invalid for m = {m}",
                    p.first, p.second
                )));
            }
            if p.kappa == 0 {
                return Err(Error::InvalidScheme("κ must be a positive integer".into()));
            }
            if !kappas.insert(p.kappa) {
                return Err(Error::InvalidScheme(format!(
                    "κ = {} repeated; multipliers must be pairwise distinct",
                    p.kappa
                )));
            }
        }
        for t in &self.degree2 {
            if t.first >= m || t.second >= m || t.third >= m || t.first == t.second {
                return Err(Error::InvalidScheme(format!(
                    "nested bracket ({}, {}, {}) invalid for m = {m}",
                    t.first, t.second, t.third
                )));
            }
            if t.k1 == 0 || t.k2 == 0 || t.k1 == t.k2 {
                return Err(Error::InvalidScheme(format!(
                    "degree-two frequencies must be positive and distinct, got ({}, {})",
                    t.k1, t.k2
                )));
            }
        }
        Ok(())
    }
}

/// The fields and brackets of a scheme resolved against a system, in column
/// order (S1 fields, S2 brackets, nested brackets).
#[derive(Clone)]
pub struct GainBasis<T> {
    system: ControlSystem<T>,
    columns: Vec<FieldRef<T>>,
}

impl<T: Real> GainBasis<T> {
    pub fn new(system: &ControlSystem<T>, scheme: &BracketScheme) -> Result<Self> {
        scheme.validate(system.n(), system.m())?;
        let f = |i: usize| system.field(i).clone();
        let mut columns: Vec<FieldRef<T>> = scheme.s1.iter().map(|&i| f(i)).collect();
        for p in &scheme.s2 {
            columns.push(BracketField::new(f(p.first), f(p.second))?.into_ref());
        }
        for t in &scheme.degree2 {
            let inner = BracketField::new(f(t.first), f(t.second))?.into_ref();
            columns.push(BracketField::new(inner, f(t.third))?.into_ref());
        }
        Ok(GainBasis {
            system: system.clone(),
            columns,
        })
    }

    pub fn system(&self) -> &ControlSystem<T> {
        &self.system
    }

    pub fn columns(&self) -> &[FieldRef<T>] {
        &self.columns
    }

    /// `F(x)` without the singularity check.
    pub fn raw_matrix(&self, x: &[T]) -> Result<Matrix<T>> {
        self.system.check_state(x)?;
        let cols: Vec<Vec<T>> = self.columns.iter().map(|c| c.eval(x)).collect();
        Ok(Matrix::from_columns(&cols))
    }

    /// `F(x)`, rejecting states where the rank condition fails.
    pub fn matrix(&self, x: &[T]) -> Result<Matrix<T>> {
        let m = self.raw_matrix(x)?;
        let scale = m.max_column_norm();
        let sigma_min = m.min_singular_value();
        if !(sigma_min >= T::lit(SINGULAR_RATIO) * scale) || scale == T::zero() {
            return Err(Error::RankCondition {
                state: x.iter().map(|v| v.to_f64_lossy()).collect(),
                sigma_min: sigma_min.to_f64_lossy(),
                scale: scale.to_f64_lossy(),
            });
        }
        Ok(m)
    }
}

/// `F(x) = (f_j(x) for j ∈ S1 | [f_j1, f_j2](x) for (j1, j2) ∈ S2 | nested brackets)`.
pub fn build_gain_matrix<T: Real>(
    system: &ControlSystem<T>,
    scheme: &BracketScheme,
    x: &[T],
) -> Result<Matrix<T>> {
    GainBasis::new(system, scheme)?.matrix(x)
}

/// Rank-condition diagnostics over a finite set of states.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RankReport<T> {
    /// Smallest singular value of `F(x)` per sample.
    pub sigma_min: Vec<T>,
    /// Largest column norm of `F(x)` per sample.
    pub scale: Vec<T>,
    pub min_sigma: T,
    /// Indices of samples failing the hard singularity threshold.
    pub singular: Vec<usize>,
    /// Indices of samples with `σ_min < 1e-6 · scale`.
    pub near_singular: Vec<usize>,
}

impl<T> RankReport<T> {
    pub fn passed(&self) -> bool {
        self.singular.is_empty()
    }
}

/// Evaluates the rank condition at every sample. The condition can only be
/// checked on finitely many states; samples outside the domain are errors.
pub fn check_rank_condition<T: Real>(
    system: &ControlSystem<T>,
    scheme: &BracketScheme,
    samples: &[Vec<T>],
) -> Result<RankReport<T>> {
    if samples.is_empty() {
        return Err(Error::Usage(
            "rank check needs at least one sample state".into(),
        ));
    }
    let basis = GainBasis::new(system, scheme)?;
    let mut report = RankReport {
        sigma_min: Vec::with_capacity(samples.len()),
        scale: Vec::with_capacity(samples.len()),
        min_sigma: T::infinity(),
        singular: Vec::new(),
        near_singular: Vec::new(),
    };
    for (k, x) in samples.iter().enumerate() {
        let m = basis.raw_matrix(x)?;
        let scale = m.max_column_norm();
        let s = m.min_singular_value();
        if !(s >= T::lit(SINGULAR_RATIO) * scale) || scale == T::zero() {
            report.singular.push(k);
        }
        if !(s >= T::lit(NEAR_SINGULAR_RATIO) * scale) {
            report.near_singular.push(k);
        }
        report.min_sigma = report.min_sigma.min(s);
        report.sigma_min.push(s);
        report.scale.push(scale);
    }
    Ok(report)
}
