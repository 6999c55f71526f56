//! Bloch-sphere coordinates for two-spin states, spherical equations of
//! motion and vector-field snapshots.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dirac::{constrained_velocity, ConstraintSet};
use crate::error::{Error, Result};
use crate::models::{disentangled_constraints, ex3_phase_from_product, ModelId, P1P4_FLOOR};
use crate::phase_space::{wrap_angle, EnergySpectrum, HilbertVector, PhasePoint};

/// Arguments this far outside their domain are treated as round-off and clamped.
pub const DOMAIN_CLAMP: f64 = 1e-12;
/// `sin θ` below this is a pole of the spherical chart.
pub const POLE_FLOOR: f64 = 1e-12;
/// Step of the numerical Jacobian of the Bloch → phase-space map.
pub const JACOBIAN_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochPoint {
    pub theta1: f64,
    pub phi1: f64,
    pub theta2: f64,
    pub phi2: f64,
}

impl BlochPoint {
    pub fn new(theta1: f64, phi1: f64, theta2: f64, phi2: f64) -> Self {
        Self {
            theta1,
            phi1,
            theta2,
            phi2,
        }
    }

    pub fn at_pole(&self) -> bool {
        self.theta1.sin().abs() < POLE_FLOOR || self.theta2.sin().abs() < POLE_FLOOR
    }

    /// Same sphere point with `θ ∈ [0, π]` and `φ ∈ (−π, π]`.
    pub fn canonical(self) -> Self {
        let fix = |t: f64, f: f64| {
            if t < 0.0 {
                (-t, wrap_angle(f + PI))
            } else {
                (t, wrap_angle(f))
            }
        };
        let (theta1, phi1) = fix(self.theta1, self.phi1);
        let (theta2, phi2) = fix(self.theta2, self.phi2);
        Self {
            theta1,
            phi1,
            theta2,
            phi2,
        }
    }
}

/// Time derivatives of the two sphere angles. `phi_dot` is `None` where the
/// chart degenerates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalVelocity {
    pub theta_dot: [f64; 2],
    pub phi_dot: [Option<f64>; 2],
}

impl SphericalVelocity {
    pub fn phi_dots(&self) -> Result<[f64; 2]> {
        match self.phi_dot {
            [Some(a), Some(b)] => Ok([a, b]),
            _ => Err(Error::PoleSingularity { floor: POLE_FLOOR }),
        }
    }
}

/// `cos ½θ |↑⟩ + sin ½θ e^{iφ} |↓⟩`.
pub fn bloch_spinor(theta: f64, phi: f64) -> [Complex64; 2] {
    let (s, c) = (0.5 * theta).sin_cos();
    [Complex64::new(c, 0.0), Complex64::from_polar(s, phi)]
}

/// `|ψ₁⟩|ψ₂⟩` in the spin basis `(|↑↑⟩, |↑↓⟩, |↓↑⟩, |↓↓⟩)`.
pub fn bloch_product_state(bp: &BlochPoint) -> HilbertVector {
    let a = HilbertVector::new(bloch_spinor(bp.theta1, bp.phi1).to_vec());
    let b = HilbertVector::new(bloch_spinor(bp.theta2, bp.phi2).to_vec());
    a.kron(&b)
}

fn clamp_unit(x: f64, what: &str, lo: f64) -> Result<f64> {
    if x < lo - DOMAIN_CLAMP || x > 1.0 + DOMAIN_CLAMP {
        return Err(Error::Domain(format!("{what} = {x} is outside [{lo}, 1]")));
    }
    Ok(x.clamp(lo, 1.0))
}

fn clamped_sqrt(x: f64, what: &str) -> Result<f64> {
    if x < -DOMAIN_CLAMP {
        return Err(Error::Domain(format!("{what} = {x} is negative")));
    }
    Ok(x.max(0.0).sqrt())
}

/// Sphere angles of a two-spin product point from its actions and first angle.
///
/// The `+` branch gives `(θ₁, φ₁)` and the `−` branch `(θ₂, φ₂)`; a negative
/// `θ` is folded back as `(−θ, φ + π)`.
pub fn phase_to_bloch_ex1(pt: &PhasePoint) -> Result<BlochPoint> {
    raw_ex1_angles(pt).map(BlochPoint::canonical)
}

fn raw_ex1_angles(pt: &PhasePoint) -> Result<BlochPoint> {
    if pt.levels() != 4 {
        return Err(Error::Dimension {
            expected: 4,
            found: pt.levels(),
        });
    }
    let (q, p) = (pt.q(), pt.p());
    let p4 = pt.p_last();
    let prod = p[0] * p4;
    if prod < P1P4_FLOOR {
        return Err(Error::ChartSingularity(format!(
            "p1*p4 = {prod:e} is below {P1P4_FLOOR:e}"
        )));
    }
    let s = prod.sqrt();
    let lat = clamp_unit(
        clamped_sqrt(p[1] + p[2] - 2.0 * s, "p2+p3-2sqrt(p1p4)")?,
        "asin argument",
        -1.0,
    )?
    .asin();
    let split = clamp_unit(clamped_sqrt(p[0] + p4 - s, "p1+p4-sqrt(p1p4)")?, "acos argument", -1.0)?.acos();
    let twist = clamp_unit(0.5 * (p[2] - p[1]) / s, "acos argument", -1.0)?.acos();
    Ok(BlochPoint::new(
        lat + split,
        -0.5 * (q[0] + twist),
        lat - split,
        -0.5 * (q[0] - twist),
    ))
}

/// Two-spin product flow on the spheres: latitudes fixed, both longitudes
/// rotating at a latitude-dependent rate.
pub fn spherical_velocity_ex1(bp: &BlochPoint, spec: &EnergySpectrum) -> Result<SphericalVelocity> {
    let w = four_level_frequencies(spec)?;
    let c = w[0] - w[1] - w[2];
    let h1 = (0.5 * bp.theta1).sin();
    let h2 = (0.5 * bp.theta2).sin();
    let rate = -0.5 * c * (h1 * h1 + h2 * h2) - 0.5 * (w[1] + w[2]);
    Ok(SphericalVelocity {
        theta_dot: [0.0, 0.0],
        phi_dot: [Some(rate), Some(rate)],
    })
}

/// Closed-form spherical equations proposed for the disentangled model, evaluated
/// term by term. `φ̇` is `None` when either `sin θ` is below [`POLE_FLOOR`].
pub fn spherical_velocity_ex3(bp: &BlochPoint, spec: &EnergySpectrum) -> Result<SphericalVelocity> {
    let w = four_level_frequencies(spec)?;
    let (w1, w2, w3) = (w[0], w[1], w[2]);
    let (s1, c1) = bp.theta1.sin_cos();
    let (s2, c2) = bp.theta2.sin_cos();
    let (sd, cd) = (bp.phi1 - bp.phi2).sin_cos();

    let theta1_dot = sd * s2 * ((w1 - w2) * c1 + w2 - w3);
    let theta2_dot = sd * s1 * ((w2 - w1) * c2 - w2 + w3);
    let phi_dot = if s1.abs() < POLE_FLOOR || s2.abs() < POLE_FLOOR {
        [None, None]
    } else {
        let k = cd / (s1 * s2);
        let diff = c1 * c1 - c2 * c2;
        let phi1_dot = 0.5
            * (-w1
                + (w2 - 0.5 * w1) * c2
                + (1.5 * w1 - w2 - 2.0 * w3) * c1
                + k * (2.0 * (w3 - w2) * s1 * s1 * c2 + (w1 - w2) * diff));
        let phi2_dot = 0.5
            * (-w1
                + (w2 - 0.5 * w1) * c1
                + (1.5 * w1 - w2 - 2.0 * w3) * c2
                + k * (2.0 * (w3 - w2) * c1 * s2 * s2 - (w1 - w2) * diff));
        [Some(phi1_dot), Some(phi2_dot)]
    };
    Ok(SphericalVelocity {
        theta_dot: [theta1_dot, theta2_dot],
        phi_dot,
    })
}

fn four_level_frequencies(spec: &EnergySpectrum) -> Result<&[f64]> {
    if spec.n() != 4 {
        return Err(Error::Dimension {
            expected: 4,
            found: spec.n(),
        });
    }
    Ok(spec.frequencies())
}

/// Disentangled-model phase point of a pair of Bloch vectors.
pub fn bloch_to_phase_ex3(bp: &BlochPoint) -> Result<PhasePoint> {
    ex3_phase_from_product(&bloch_product_state(bp))
}

/// Spherical velocity of the disentangled model obtained from the generic
/// reduction, pulled back through a central-difference Jacobian of
/// [`bloch_to_phase_ex3`] by least squares.
///
/// Returns the velocity and the largest component of the least-squares
/// residual (how far the phase-space velocity is from the image of the chart).
pub fn engine_spherical_velocity_ex3(bp: &BlochPoint, spec: &EnergySpectrum) -> Result<(SphericalVelocity, f64)> {
    four_level_frequencies(spec)?;
    if bp.at_pole() {
        return Err(Error::PoleSingularity { floor: POLE_FLOOR });
    }
    let cs: ConstraintSet = disentangled_constraints();
    let x = bloch_to_phase_ex3(bp)?;
    let v = constrained_velocity(&cs, &x, spec)?;

    let base = [bp.theta1, bp.phi1, bp.theta2, bp.phi2];
    let mut jac = DMatrix::zeros(6, 4);
    for k in 0..4 {
        let mut plus = base;
        let mut minus = base;
        plus[k] += JACOBIAN_STEP;
        minus[k] -= JACOBIAN_STEP;
        let a = bloch_to_phase_ex3(&BlochPoint::new(plus[0], plus[1], plus[2], plus[3]))?.to_flat();
        let b = bloch_to_phase_ex3(&BlochPoint::new(minus[0], minus[1], minus[2], minus[3]))?.to_flat();
        for r in 0..6 {
            let mut d = a[r] - b[r];
            if r < 3 {
                d = wrap_angle(d);
            }
            jac[(r, k)] = d / (2.0 * JACOBIAN_STEP);
        }
    }
    let svd = jac.clone().svd(true, true);
    let y: DVector<f64> = svd
        .solve(&v, 1e-10)
        .map_err(|e| Error::Domain(format!("least-squares pull-back failed: {e}")))?;
    let resid = (&jac * &y - &v).amax();
    Ok((
        SphericalVelocity {
            theta_dot: [y[0], y[2]],
            phi_dot: [Some(y[1]), Some(y[3])],
        },
        resid,
    ))
}

/// Angles of the second sphere held fixed in a field snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedAngles {
    pub theta2: f64,
    pub phi2: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleFlag {
    Ok,
    Pole,
    Error,
}

impl SampleFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleFlag::Ok => "ok",
            SampleFlag::Pole => "pole",
            SampleFlag::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub theta1: f64,
    pub phi1: f64,
    pub theta1_dot: Option<f64>,
    pub phi1_dot: Option<f64>,
    pub flag: SampleFlag,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub message: Option<String>,
}

/// `(θ̇₁, φ̇₁)` on a rectangular `(θ₁, φ₁)` grid, row-major in `θ₁`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldGrid {
    pub model: ModelId,
    pub fixed: FixedAngles,
    pub rows: usize,
    pub cols: usize,
    pub samples: Vec<FieldSample>,
}

impl FieldGrid {
    pub fn sample(&self, row: usize, col: usize) -> &FieldSample {
        &self.samples[row * self.cols + col]
    }
}

/// Snapshot of the first sphere's field with the second sphere frozen.
///
/// `θ₁` runs over `rows` evenly spaced values in `[0, π]` (poles included) and
/// `φ₁` over `cols` values `−π + 2π(j+1)/cols`, ending at `π`. Failures are
/// recorded per sample.
pub fn field_grid(
    model: ModelId,
    spec: &EnergySpectrum,
    fixed: FixedAngles,
    resolution: (usize, usize),
) -> Result<FieldGrid> {
    let (rows, cols) = resolution;
    if rows < 2 || cols < 2 {
        return Err(Error::InvalidConfig(format!(
            "field resolution must be at least 2x2, got {rows}x{cols}"
        )));
    }
    if !fixed.theta2.is_finite() || !(0.0..=PI).contains(&fixed.theta2) {
        return Err(Error::InvalidConfig(format!(
            "theta2 = {} is outside [0, pi]",
            fixed.theta2
        )));
    }
    let velocity: fn(&BlochPoint, &EnergySpectrum) -> Result<SphericalVelocity> = match model {
        ModelId::TwoSpinProduct => spherical_velocity_ex1,
        ModelId::TwoSpinDisentangled => spherical_velocity_ex3,
        other => {
            return Err(Error::InvalidConfig(format!("no spherical field for model {other}")));
        }
    };
    let phi2 = match (model, fixed.phi2) {
        (_, Some(f)) if !f.is_finite() => {
            return Err(Error::InvalidConfig(format!("phi2 = {f} is not finite")));
        }
        (ModelId::TwoSpinDisentangled, None) => {
            return Err(Error::InvalidConfig("phi2 must be fixed for this model".into()));
        }
        (_, f) => f.unwrap_or(0.0),
    };
    four_level_frequencies(spec)?;

    let samples = (0..rows * cols)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / cols, k % cols);
            let theta1 = PI * i as f64 / (rows - 1) as f64;
            let phi1 = -PI + 2.0 * PI * (j + 1) as f64 / cols as f64;
            let bp = BlochPoint::new(theta1, phi1, fixed.theta2, phi2);
            match velocity(&bp, spec) {
                Ok(v) => {
                    let pole = v.phi_dot[0].is_none();
                    FieldSample {
                        theta1,
                        phi1,
                        theta1_dot: Some(v.theta_dot[0]),
                        phi1_dot: v.phi_dot[0],
                        flag: if pole { SampleFlag::Pole } else { SampleFlag::Ok },
                        message: None,
                    }
                }
                Err(e) => FieldSample {
                    theta1,
                    phi1,
                    theta1_dot: None,
                    phi1_dot: None,
                    flag: SampleFlag::Error,
                    message: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(FieldGrid {
        model,
        fixed,
        rows,
        cols,
        samples,
    })
}
