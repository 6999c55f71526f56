//! Time stepping of the reduced flow with drift monitoring and optional
//! Newton projection back onto the constraint surface.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dirac::{constrained_velocity, invert_omega, lagrange_multipliers, omega_matrix, ConstraintSet};
use crate::error::{Error, Result};
use crate::models::{spectrum_condition, ModelId};
use crate::phase_space::{
    canonical_omega, hamiltonian_gradient, hamiltonian_value, unitary_flow, EnergySpectrum, PhasePoint,
};

/// Newton iterations allowed in [`project_onto_surface`].
pub const MAX_PROJECTION_ITERATIONS: usize = 20;
/// Growth factor over `drift_tol` at which an unprojected run is stopped.
pub const DRIFT_ABORT_FACTOR: f64 = 1000.0;
/// Divergence below this counts as "flows coincide" in [`compare_flows`].
pub const ZERO_DIVERGENCE_TOL: f64 = 1e-10;
const MIN_ADAPTIVE_STEP: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Rk4,
    Rk45,
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rk4" => Ok(Scheme::Rk4),
            "rk45" => Ok(Scheme::Rk45),
            _ => Err(Error::InvalidConfig(format!(
                "unknown scheme '{s}' (expected rk4 or rk45)"
            ))),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Rk4 => "rk4",
            Scheme::Rk45 => "rk45",
        })
    }
}

/// When to pull the state back onto the surface. Written as `off`,
/// `every-step` or `threshold:<eps>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Projection {
    Off,
    EveryStep,
    Threshold(f64),
}

impl FromStr for Projection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "off" => return Ok(Projection::Off),
            "every-step" | "every_step" => return Ok(Projection::EveryStep),
            _ => {}
        }
        let eps = s
            .strip_prefix("threshold:")
            .or_else(|| s.strip_prefix("threshold="))
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown projection '{s}' (expected off, every-step or threshold:<eps>)"
                ))
            })?;
        let eps: f64 = eps
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad projection threshold '{eps}'")))?;
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "projection threshold must be positive, got {eps}"
            )));
        }
        Ok(Projection::Threshold(eps))
    }
}

impl fmt::Display for Projection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Projection::Off => f.write_str("off"),
            Projection::EveryStep => f.write_str("every-step"),
            Projection::Threshold(e) => write!(f, "threshold:{e:e}"),
        }
    }
}

impl TryFrom<String> for Projection {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Projection> for String {
    fn from(p: Projection) -> Self {
        p.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    /// Fixed step for RK4, initial step for RK45.
    pub dt: f64,
    /// Local error tolerance for RK45.
    pub tol: f64,
    pub t_end: f64,
    pub projection: Projection,
    /// Target residual of a projection.
    pub projection_tol: f64,
    /// Largest residual accepted at the start point.
    pub drift_tol: f64,
    /// Floor on `p_n` (and on `p₁p₄` in the disentangled chart).
    pub singularity_floor: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Rk4,
            dt: 1e-3,
            tol: 1e-10,
            t_end: 10.0,
            projection: Projection::Off,
            projection_tol: 1e-13,
            drift_tol: 1e-8,
            singularity_floor: 1e-12,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        };
        positive(self.dt, "dt")?;
        positive(self.tol, "tol")?;
        positive(self.drift_tol, "drift_tol")?;
        positive(self.projection_tol, "projection_tol")?;
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "t_end must be non-negative, got {}",
                self.t_end
            )));
        }
        if !(self.singularity_floor >= 0.0) {
            return Err(Error::InvalidConfig("singularity_floor must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum TrajectoryStatus {
    Completed,
    Truncated { reason: String, at: f64 },
}

impl TrajectoryStatus {
    pub fn is_completed(&self) -> bool {
        matches!(self, TrajectoryStatus::Completed)
    }
}

/// Accepted states of a run with diagnostics at each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<PhasePoint>,
    pub energies: Vec<f64>,
    /// `max_α |Φ^α|` at each point.
    pub residuals: Vec<f64>,
    pub constraint_values: Vec<Vec<f64>>,
    pub multipliers: Vec<Vec<f64>>,
    /// Number of steps after which a projection was applied.
    pub projections: usize,
    pub status: TrajectoryStatus,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &PhasePoint {
        self.points.last().expect("a trajectory holds at least its start point")
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    pub fn energy_drift(&self) -> f64 {
        let e0 = self.energies[0];
        self.energies.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max)
    }

    /// `max_t ‖p(t) − p(0)‖∞`.
    pub fn action_drift(&self) -> f64 {
        let p0 = self.points[0].p();
        self.points
            .iter()
            .flat_map(|x| x.p().iter().zip(p0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }
}

struct Diagnostics {
    energy: f64,
    values: DVector<f64>,
    multipliers: DVector<f64>,
}

fn diagnostics(cs: &ConstraintSet, spec: &EnergySpectrum, pt: &PhasePoint) -> Result<Diagnostics> {
    Ok(Diagnostics {
        energy: hamiltonian_value(pt, spec)?,
        values: cs.values(pt)?,
        multipliers: lagrange_multipliers(cs, pt, spec)?,
    })
}

struct Recorder<'a> {
    cs: &'a ConstraintSet,
    spec: &'a EnergySpectrum,
    traj: Trajectory,
}

impl Recorder<'_> {
    fn push(&mut self, t: f64, pt: PhasePoint) -> Result<()> {
        let d = diagnostics(self.cs, self.spec, &pt)?;
        self.traj.times.push(t);
        self.traj.points.push(pt);
        self.traj.energies.push(d.energy);
        self.traj.residuals.push(d.values.amax());
        self.traj.constraint_values.push(d.values.iter().copied().collect());
        self.traj.multipliers.push(d.multipliers.iter().copied().collect());
        Ok(())
    }
}

fn floor_check(cs: &ConstraintSet, pt: &PhasePoint, floor: f64) -> Result<()> {
    let pn = pt.p_last();
    if pn < floor {
        return Err(Error::ChartSingularity(format!(
            "p{} = {pn:e} is below the floor {floor:e}",
            cs.n_levels()
        )));
    }
    Ok(())
}

fn velocity(cs: &ConstraintSet, spec: &EnergySpectrum, x: &DVector<f64>) -> Result<DVector<f64>> {
    let pt = PhasePoint::from_flat_unchecked(x.as_slice())?;
    constrained_velocity(cs, &pt, spec)
}

fn rk4_step(cs: &ConstraintSet, spec: &EnergySpectrum, x: &DVector<f64>, h: f64) -> Result<DVector<f64>> {
    let k1 = velocity(cs, spec, x)?;
    let k2 = velocity(cs, spec, &(x + &k1 * (0.5 * h)))?;
    let k3 = velocity(cs, spec, &(x + &k2 * (0.5 * h)))?;
    let k4 = velocity(cs, spec, &(x + &k3 * h))?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

// Dormand–Prince 5(4) tableau.
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One Dormand–Prince attempt: fifth-order state and scaled error norm.
fn dp_step(
    cs: &ConstraintSet,
    spec: &EnergySpectrum,
    x: &DVector<f64>,
    h: f64,
    tol: f64,
) -> Result<(DVector<f64>, f64)> {
    debug_assert_eq!(DP_C.len(), 7);
    let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
    for (s, row) in DP_A.iter().enumerate() {
        let mut y = x.clone();
        for (j, a) in row.iter().enumerate().take(s) {
            if *a != 0.0 {
                y += &k[j] * (a * h);
            }
        }
        k.push(velocity(cs, spec, &y)?);
    }
    let mut x5 = x.clone();
    let mut err = DVector::zeros(x.len());
    for s in 0..7 {
        x5 += &k[s] * (DP_B5[s] * h);
        err += &k[s] * ((DP_B5[s] - DP_B4[s]) * h);
    }
    let norm = err
        .iter()
        .zip(x5.iter())
        .map(|(e, y)| e.abs() / (tol * y.abs().max(1.0)))
        .fold(0.0, f64::max);
    Ok((x5, norm))
}

/// Integrates the reduced flow from `pt0` up to `cfg.t_end`.
///
/// Fails up front if the configuration is invalid, `pt0` is off the surface
/// by more than `drift_tol`, or the reduction is singular at `pt0`. Failures
/// after the first step end the run early and are reported in the
/// trajectory's status.
pub fn integrate(
    cs: &ConstraintSet,
    spec: &EnergySpectrum,
    pt0: &PhasePoint,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    if pt0.levels() != cs.n_levels() || spec.n() != cs.n_levels() {
        return Err(Error::Dimension {
            expected: cs.n_levels(),
            found: if pt0.levels() != cs.n_levels() {
                pt0.levels()
            } else {
                spec.n()
            },
        });
    }
    pt0.check_simplex()?;
    floor_check(cs, pt0, cfg.singularity_floor)?;
    let r0 = cs.residual(pt0)?;
    if r0 > cfg.drift_tol {
        return Err(Error::DriftExceeded {
            residual: r0,
            limit: cfg.drift_tol,
        });
    }
    invert_omega(&omega_matrix(cs, pt0)?)?;

    let mut rec = Recorder {
        cs,
        spec,
        traj: Trajectory {
            times: Vec::new(),
            points: Vec::new(),
            energies: Vec::new(),
            residuals: Vec::new(),
            constraint_values: Vec::new(),
            multipliers: Vec::new(),
            projections: 0,
            status: TrajectoryStatus::Completed,
        },
    };
    rec.push(0.0, pt0.clone())?;

    let outcome = match cfg.scheme {
        Scheme::Rk4 => run_fixed(&mut rec, cfg),
        Scheme::Rk45 => run_adaptive(&mut rec, cfg),
    };
    if let Err((e, at)) = outcome {
        rec.traj.status = TrajectoryStatus::Truncated {
            reason: e.to_string(),
            at,
        };
    }
    Ok(rec.traj)
}

/// Post-step bookkeeping shared by both schemes: floor, projection, drift.
fn accept(rec: &mut Recorder<'_>, cfg: &IntegratorConfig, t: f64, x: DVector<f64>) -> Result<()> {
    let mut pt = PhasePoint::from_flat_unchecked(x.as_slice())?;
    floor_check(rec.cs, &pt, cfg.singularity_floor)?;
    let resid = rec.cs.residual(&pt)?;
    let project = match cfg.projection {
        Projection::Off => {
            let limit = DRIFT_ABORT_FACTOR * cfg.drift_tol;
            if resid > limit {
                return Err(Error::DriftExceeded { residual: resid, limit });
            }
            false
        }
        Projection::EveryStep => true,
        Projection::Threshold(eps) => resid > eps,
    };
    if project && !rec.cs.is_empty() {
        let (projected, iters) = project_with_count(rec.cs, &pt, cfg.projection_tol)?;
        if iters > 0 {
            rec.traj.projections += 1;
        }
        pt = projected;
        floor_check(rec.cs, &pt, cfg.singularity_floor)?;
    }
    rec.push(t, pt)
}

fn run_fixed(rec: &mut Recorder<'_>, cfg: &IntegratorConfig) -> std::result::Result<(), (Error, f64)> {
    let ratio = cfg.t_end / cfg.dt;
    let steps = if (ratio - ratio.round()).abs() < 1e-9 * ratio.max(1.0) {
        ratio.round() as usize
    } else {
        ratio.ceil() as usize
    };
    let mut t = 0.0;
    for k in 1..=steps {
        let t_next = if k == steps { cfg.t_end } else { k as f64 * cfg.dt };
        let x = rec.traj.last().to_flat();
        let step = rk4_step(rec.cs, rec.spec, &x, t_next - t).and_then(|y| accept(rec, cfg, t_next, y));
        step.map_err(|e| (e, t))?;
        t = t_next;
    }
    Ok(())
}

fn run_adaptive(rec: &mut Recorder<'_>, cfg: &IntegratorConfig) -> std::result::Result<(), (Error, f64)> {
    let mut t = 0.0;
    let mut h = cfg.dt.min(cfg.t_end.max(MIN_ADAPTIVE_STEP));
    while t < cfg.t_end {
        let last_step = t + h >= cfg.t_end;
        let h_try = if last_step { cfg.t_end - t } else { h };
        let x = rec.traj.last().to_flat();
        let (y, err) = dp_step(rec.cs, rec.spec, &x, h_try, cfg.tol).map_err(|e| (e, t))?;
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        if err <= 1.0 {
            let t_next = if last_step { cfg.t_end } else { t + h_try };
            accept(rec, cfg, t_next, y).map_err(|e| (e, t))?;
            t = t_next;
            h = h_try * factor;
        } else {
            h = h_try * factor;
            if h < MIN_ADAPTIVE_STEP {
                return Err((
                    Error::ChartSingularity(format!("adaptive step fell below {MIN_ADAPTIVE_STEP:e}")),
                    t,
                ));
            }
        }
    }
    Ok(())
}

/// Newton projection onto `Φ = 0` along the span of the constraint gradients,
/// `x ← x − Gᵀ(GGᵀ)⁻¹Φ`, stopping once `max|Φ| < tol`.
pub fn project_onto_surface(cs: &ConstraintSet, pt: &PhasePoint, tol: f64) -> Result<PhasePoint> {
    project_with_count(cs, pt, tol).map(|(p, _)| p)
}

/// [`project_onto_surface`] that also reports the number of Newton steps.
pub fn project_with_count(cs: &ConstraintSet, pt: &PhasePoint, tol: f64) -> Result<(PhasePoint, usize)> {
    let mut cur = pt.clone();
    let mut resid = cs.residual(&cur)?;
    for iter in 0..=MAX_PROJECTION_ITERATIONS {
        if resid < tol || cs.is_empty() {
            return Ok((cur, iter));
        }
        if iter == MAX_PROJECTION_ITERATIONS {
            break;
        }
        let phi = cs.values(&cur)?;
        let g = cs.gradients(&cur)?;
        let gram = &g * g.transpose();
        let Some(step) = gram.lu().solve(&phi) else {
            return Err(Error::ProjectionFailed {
                iterations: iter,
                residual: resid,
            });
        };
        let x = cur.to_flat() - g.transpose() * step;
        if x.iter().any(|v| !v.is_finite()) {
            break;
        }
        cur = PhasePoint::from_flat_unchecked(x.as_slice())?;
        resid = cs.residual(&cur)?;
    }
    Err(Error::ProjectionFailed {
        iterations: MAX_PROJECTION_ITERATIONS,
        residual: resid,
    })
}

/// Constrained versus unitary evolution from the same start point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowComparison {
    pub times: Vec<f64>,
    /// `‖x_constrained(t) − x_unitary(t)‖∞` with unwrapped angles.
    pub divergence: Vec<f64>,
    pub max_divergence: f64,
    /// `‖(Ω̃ − Ω)∇H‖∞` at the start point: the initial separation speed.
    pub initial_rate: f64,
    /// Final divergence over final time (zero when `t_end = 0`).
    pub mean_rate: f64,
    pub condition_holds: bool,
    /// The spectrum condition predicts identical flows and they are, or it
    /// does not.
    pub prediction_consistent: bool,
    pub status: TrajectoryStatus,
}

pub fn compare_flows(
    model: ModelId,
    spec: &EnergySpectrum,
    pt0: &PhasePoint,
    cfg: &IntegratorConfig,
) -> Result<FlowComparison> {
    let cs = model.constraint_set(spec.n())?;
    let condition_holds = spectrum_condition(spec, model)?;
    let traj = integrate(&cs, spec, pt0, cfg)?;
    let divergence = traj
        .times
        .iter()
        .zip(&traj.points)
        .map(|(&t, x)| {
            let u = unitary_flow(pt0, spec, t)?;
            Ok((x.to_flat() - u.to_flat()).amax())
        })
        .collect::<Result<Vec<f64>>>()?;
    let max_divergence = divergence.iter().copied().fold(0.0, f64::max);
    let free = canonical_omega(spec.n()) * hamiltonian_gradient(pt0, spec)?;
    let initial_rate = (constrained_velocity(&cs, pt0, spec)? - free).amax();
    let t_last = *traj.times.last().expect("start point recorded");
    let mean_rate = if t_last > 0.0 {
        divergence.last().unwrap() / t_last
    } else {
        0.0
    };
    let prediction_consistent = !condition_holds || max_divergence < ZERO_DIVERGENCE_TOL;
    Ok(FlowComparison {
        times: traj.times,
        divergence,
        max_divergence,
        initial_rate,
        mean_rate,
        condition_holds,
        prediction_consistent,
        status: traj.status,
    })
}
