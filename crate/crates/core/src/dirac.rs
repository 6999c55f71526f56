//! Dirac reduction of the Schrödinger flow onto a constraint surface.
//!
//! For constraints `Φ^α(x) = 0`, `α = 1…N` with `N` even, the engine forms
//!
//! * `ω^{αβ} = (∇Φ^α)ᵀ Ω ∇Φ^β` and its inverse `ω_{αβ}`,
//! * the multipliers `λ_α = ω_{βα} (∇Φ^β)ᵀ Ω ∇H`,
//! * the correction `Λ^{ab} = Ω^{ac} Ω^{bd} ω_{γδ} ∇_cΦ^γ ∇_dΦ^δ`,
//! * and the reduced field `ẋ = (Ω + Λ) ∇H`.
//!
//! All contractions are small dense products; nothing is cached between
//! points because the constraint gradients depend on the state.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::phase_space::{canonical_omega, hamiltonian_gradient, wrap_angle, EnergySpectrum, PhasePoint};

/// Condition number (1-norm) above which `ω^{αβ}` is treated as singular.
pub const MAX_OMEGA_CONDITION: f64 = 1e12;
/// Step used by [`validate_gradients`].
pub const FD_STEP: f64 = 1e-6;
/// Largest accepted relative gradient error in [`validate_gradients`].
pub const GRADIENT_TOL: f64 = 1e-5;

pub type ValueFn = dyn Fn(&PhasePoint) -> Result<DVector<f64>> + Send + Sync;
pub type GradientFn = dyn Fn(&PhasePoint) -> Result<DMatrix<f64>> + Send + Sync;

/// An even number of constraint functions on the phase space of an
/// `n`-level system, with analytic gradients.
///
/// Gradients are returned as an `N × (2n − 2)` matrix whose row `α` is
/// `∇Φ^α`. Angle-valued residuals are wrapped to `(−π, π]` by the value
/// function itself; [`ConstraintSet::with_angular`] records which rows those
/// are so finite differences can unwrap them.
#[derive(Clone)]
pub struct ConstraintSet {
    n_levels: usize,
    labels: Vec<String>,
    angular: Vec<bool>,
    value_fn: Arc<ValueFn>,
    grad_fn: Arc<GradientFn>,
}

impl fmt::Debug for ConstraintSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConstraintSet")
            .field("n_levels", &self.n_levels)
            .field("labels", &self.labels)
            .field("angular", &self.angular)
            .finish_non_exhaustive()
    }
}

impl ConstraintSet {
    pub fn new<V, G>(n_levels: usize, labels: Vec<String>, value_fn: V, grad_fn: G) -> Result<Self>
    where
        V: Fn(&PhasePoint) -> Result<DVector<f64>> + Send + Sync + 'static,
        G: Fn(&PhasePoint) -> Result<DMatrix<f64>> + Send + Sync + 'static,
    {
        if n_levels < 2 {
            return Err(Error::Domain(format!("need n >= 2 levels, got {n_levels}")));
        }
        if !labels.len().is_multiple_of(2) {
            return Err(Error::OddConstraintCount(labels.len()));
        }
        let angular = vec![false; labels.len()];
        Ok(Self {
            n_levels,
            labels,
            angular,
            value_fn: Arc::new(value_fn),
            grad_fn: Arc::new(grad_fn),
        })
    }

    /// The empty set: reduction leaves the unitary flow unchanged.
    pub fn unconstrained(n_levels: usize) -> Self {
        let m = n_levels.saturating_sub(1);
        Self::new(
            n_levels.max(2),
            Vec::new(),
            |_| Ok(DVector::zeros(0)),
            move |_| Ok(DMatrix::zeros(0, 2 * m)),
        )
        .expect("empty constraint set is valid")
    }

    /// Marks which constraints are wrapped angle differences.
    pub fn with_angular(mut self, mask: &[bool]) -> Self {
        assert_eq!(mask.len(), self.labels.len(), "angular mask length");
        self.angular = mask.to_vec();
        self
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }

    /// Number of constraints `N`.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn angular(&self) -> &[bool] {
        &self.angular
    }

    fn check_point(&self, pt: &PhasePoint) -> Result<()> {
        if pt.levels() != self.n_levels {
            return Err(Error::Dimension {
                expected: self.n_levels,
                found: pt.levels(),
            });
        }
        Ok(())
    }

    /// Residuals `Φ^α(x)`.
    pub fn values(&self, pt: &PhasePoint) -> Result<DVector<f64>> {
        self.check_point(pt)?;
        let v = (self.value_fn)(pt)?;
        debug_assert_eq!(v.len(), self.len());
        Ok(v)
    }

    /// Gradients, one row per constraint.
    pub fn gradients(&self, pt: &PhasePoint) -> Result<DMatrix<f64>> {
        self.check_point(pt)?;
        let g = (self.grad_fn)(pt)?;
        debug_assert_eq!(g.shape(), (self.len(), pt.dim()));
        Ok(g)
    }

    /// `max_α |Φ^α|`, zero for the empty set.
    pub fn residual(&self, pt: &PhasePoint) -> Result<f64> {
        Ok(self.values(pt)?.amax())
    }
}

/// `ω^{αβ}`, `ω_{αβ}`, `Λ^{ab}`, `Ω̃^{ab}` and `λ_α` at one phase point.
#[derive(Debug, Clone, PartialEq)]
pub struct ModifiedStructure {
    pub omega_small: DMatrix<f64>,
    pub omega_small_inv: DMatrix<f64>,
    pub lambda: DMatrix<f64>,
    pub omega_tilde: DMatrix<f64>,
    pub multipliers: DVector<f64>,
}

/// `ω^{αβ} = (∇Φ^α)ᵀ Ω ∇Φ^β`.
pub fn omega_matrix(cs: &ConstraintSet, pt: &PhasePoint) -> Result<DMatrix<f64>> {
    let g = cs.gradients(pt)?;
    Ok(omega_from_gradients(&g, &canonical_omega(cs.n_levels())))
}

fn omega_from_gradients(g: &DMatrix<f64>, om: &DMatrix<f64>) -> DMatrix<f64> {
    g * om * g.transpose()
}

/// Inverts `ω^{αβ}`, refusing matrices whose 1-norm condition number exceeds
/// [`MAX_OMEGA_CONDITION`].
pub fn invert_omega(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::Dimension {
            expected: n,
            found: m.ncols(),
        });
    }
    if !n.is_multiple_of(2) {
        return Err(Error::OddConstraintCount(n));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let inv = m.clone().lu().try_inverse().ok_or(Error::SingularOmega {
        condition: f64::INFINITY,
    })?;
    let condition = norm1(m) * norm1(&inv);
    if !condition.is_finite() || condition > MAX_OMEGA_CONDITION {
        return Err(Error::SingularOmega { condition });
    }
    Ok(inv)
}

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Everything the reduction needs at a point, computed once.
struct Reduction {
    omega: DMatrix<f64>,
    grads: DMatrix<f64>,
    omega_small: DMatrix<f64>,
    omega_small_inv: DMatrix<f64>,
    /// Columns `Ω ∇Φ^α`.
    hamiltonian_vectors: DMatrix<f64>,
}

impl Reduction {
    fn at(cs: &ConstraintSet, pt: &PhasePoint) -> Result<Self> {
        let omega = canonical_omega(cs.n_levels());
        let grads = cs.gradients(pt)?;
        let omega_small = omega_from_gradients(&grads, &omega);
        let omega_small_inv = invert_omega(&omega_small)?;
        let hamiltonian_vectors = &omega * grads.transpose();
        Ok(Self {
            omega,
            grads,
            omega_small,
            omega_small_inv,
            hamiltonian_vectors,
        })
    }

    fn lambda(&self) -> DMatrix<f64> {
        &self.hamiltonian_vectors * &self.omega_small_inv * self.hamiltonian_vectors.transpose()
    }

    fn multipliers(&self, grad_h: &DVector<f64>) -> DVector<f64> {
        // c^β = (∇Φ^β)ᵀ Ω ∇H, λ_α = ω_{βα} c^β
        let c = &self.grads * (&self.omega * grad_h);
        self.omega_small_inv.tr_mul(&c)
    }
}

/// Lagrange multipliers `λ_α = ω_{βα} (∇Φ^β)ᵀ Ω ∇H`.
pub fn lagrange_multipliers(cs: &ConstraintSet, pt: &PhasePoint, spec: &EnergySpectrum) -> Result<DVector<f64>> {
    let grad_h = hamiltonian_gradient(pt, spec)?;
    Ok(Reduction::at(cs, pt)?.multipliers(&grad_h))
}

/// The correction tensor `Λ^{ab}`.
pub fn lambda_tensor(cs: &ConstraintSet, pt: &PhasePoint) -> Result<DMatrix<f64>> {
    Ok(Reduction::at(cs, pt)?.lambda())
}

/// All reduction matrices at `pt`.
pub fn modified_structure(cs: &ConstraintSet, pt: &PhasePoint, spec: &EnergySpectrum) -> Result<ModifiedStructure> {
    let grad_h = hamiltonian_gradient(pt, spec)?;
    let red = Reduction::at(cs, pt)?;
    let lambda = red.lambda();
    let multipliers = red.multipliers(&grad_h);
    Ok(ModifiedStructure {
        omega_tilde: &red.omega + &lambda,
        lambda,
        multipliers,
        omega_small: red.omega_small,
        omega_small_inv: red.omega_small_inv,
    })
}

/// Reduced velocity `ẋ = Ω̃ ∇H`.
pub fn constrained_velocity(cs: &ConstraintSet, pt: &PhasePoint, spec: &EnergySpectrum) -> Result<DVector<f64>> {
    let grad_h = hamiltonian_gradient(pt, spec)?;
    let red = Reduction::at(cs, pt)?;
    Ok((&red.omega + red.lambda()) * grad_h)
}

/// Velocity from the multiplier form `ẋ = Ω∇H + λ_α Ω∇Φ^α`. Algebraically
/// equal to [`constrained_velocity`]; kept as an independent route.
pub fn multiplier_velocity(cs: &ConstraintSet, pt: &PhasePoint, spec: &EnergySpectrum) -> Result<DVector<f64>> {
    let grad_h = hamiltonian_gradient(pt, spec)?;
    let red = Reduction::at(cs, pt)?;
    let lam = red.multipliers(&grad_h);
    Ok(&red.omega * &grad_h + &red.hamiltonian_vectors * lam)
}

/// `max_α ‖Ω̃ ∇Φ^α‖∞`; zero for the empty set.
pub fn annihilation_check(cs: &ConstraintSet, pt: &PhasePoint) -> Result<f64> {
    if cs.is_empty() {
        return Ok(0.0);
    }
    let red = Reduction::at(cs, pt)?;
    let tilde = &red.omega + red.lambda();
    Ok((tilde * red.grads.transpose()).amax())
}

/// Central-difference gradients of the value function, unwrapping angular
/// rows across the `±π` cut.
pub fn finite_difference_gradients(cs: &ConstraintSet, pt: &PhasePoint, h: f64) -> Result<DMatrix<f64>> {
    let x = pt.to_flat();
    let mut out = DMatrix::zeros(cs.len(), x.len());
    for a in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[a] += h;
        xm[a] -= h;
        let fp = cs.values(&PhasePoint::from_flat_unchecked(xp.as_slice())?)?;
        let fm = cs.values(&PhasePoint::from_flat_unchecked(xm.as_slice())?)?;
        for alpha in 0..cs.len() {
            let mut d = fp[alpha] - fm[alpha];
            if cs.angular[alpha] {
                d = wrap_angle(d);
            }
            out[(alpha, a)] = d / (2.0 * h);
        }
    }
    Ok(out)
}

/// Outcome of [`validate_gradients`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub points: usize,
    /// Worst relative error per constraint over all points.
    pub max_rel_error: Vec<f64>,
}

/// Compares analytic gradients with central differences at every point.
///
/// The relative error of a row is `‖g_fd − g‖∞ / max(‖g‖∞, 1)`.
pub fn validate_gradients(cs: &ConstraintSet, pts: &[PhasePoint]) -> Result<GradientReport> {
    let mut worst = vec![0.0_f64; cs.len()];
    for pt in pts {
        let analytic = cs.gradients(pt)?;
        let numeric = finite_difference_gradients(cs, pt, FD_STEP)?;
        for (alpha, w) in worst.iter_mut().enumerate() {
            let scale = analytic.row(alpha).amax().max(1.0);
            let err = (analytic.row(alpha) - numeric.row(alpha)).amax() / scale;
            *w = w.max(err);
        }
    }
    if let Some((alpha, &e)) = worst.iter().enumerate().find(|(_, e)| **e > GRADIENT_TOL || e.is_nan()) {
        return Err(Error::GradientMismatch {
            constraint: alpha + 1,
            label: cs.labels[alpha].clone(),
            rel_error: e,
        });
    }
    Ok(GradientReport {
        points: pts.len(),
        max_rel_error: worst,
    })
}
