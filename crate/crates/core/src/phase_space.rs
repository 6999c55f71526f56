//! Action-angle coordinates for pure states of an `n`-level system.
//!
//! A state is expanded in the energy eigenbasis as
//! `|ψ⟩ = Σ_{i<n} √p_i e^{−i q_i} |E_i⟩ + √(1 − Σp) |E_n⟩`, with the `|E_n⟩`
//! amplitude real and non-negative. Every vector and matrix over phase space
//! uses the flattened order `x = (q₁,…,q_{n−1}, p₁,…,p_{n−1})`; the only
//! places that build or split that order are [`PhasePoint::to_flat`] and
//! [`PhasePoint::from_flat`].

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed on the action simplex before a point is rejected.
pub const SIMPLEX_TOL: f64 = 1e-12;
/// Minimum gap between energy levels.
pub const DEGENERACY_GAP: f64 = 1e-12;
/// Below this modulus the `|E_n⟩` amplitude cannot fix the angle reference.
pub const CHART_FLOOR: f64 = 1e-12;

/// Wraps an angle to `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Energy levels `E₁…E_n` and the frequencies `ω_i = E_i − E_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySpectrum {
    levels: Vec<f64>,
    frequencies: Vec<f64>,
}

impl EnergySpectrum {
    /// Builds a spectrum from level values, rejecting degenerate pairs.
    pub fn from_levels(levels: Vec<f64>) -> Result<Self> {
        if levels.len() < 2 {
            return Err(Error::InvalidSpectrum(format!(
                "need at least 2 levels, got {}",
                levels.len()
            )));
        }
        if let Some(bad) = levels.iter().find(|e| !e.is_finite()) {
            return Err(Error::InvalidSpectrum(format!("non-finite level {bad}")));
        }
        for i in 0..levels.len() {
            for j in i + 1..levels.len() {
                if (levels[i] - levels[j]).abs() < DEGENERACY_GAP {
                    return Err(Error::DegenerateSpectrum {
                        i: i + 1,
                        j: j + 1,
                        value: levels[i],
                    });
                }
            }
        }
        Ok(Self::from_levels_unchecked(levels))
    }

    /// Builds a spectrum directly from the `n − 1` frequencies with `E_n = 0`.
    ///
    /// All dynamics depend on `ω` alone, so level coincidences that leave the
    /// frequencies well defined (e.g. `E₁ = E_n`) are admitted on this path.
    pub fn from_frequencies(frequencies: Vec<f64>) -> Result<Self> {
        if frequencies.is_empty() {
            return Err(Error::InvalidSpectrum("need at least 1 frequency".into()));
        }
        if let Some(bad) = frequencies.iter().find(|w| !w.is_finite()) {
            return Err(Error::InvalidSpectrum(format!("non-finite frequency {bad}")));
        }
        let mut levels = frequencies;
        levels.push(0.0);
        Ok(Self::from_levels_unchecked(levels))
    }

    /// Shifts every level so that `E_n = reference`; frequencies are unchanged.
    pub fn with_reference(self, reference: f64) -> Self {
        let shift = reference - self.reference();
        Self::from_levels_unchecked(self.levels.iter().map(|e| e + shift).collect())
    }

    fn from_levels_unchecked(levels: Vec<f64>) -> Self {
        let last = *levels.last().expect("non-empty levels");
        let frequencies = levels[..levels.len() - 1].iter().map(|e| e - last).collect();
        Self { levels, frequencies }
    }

    /// Number of levels `n`.
    pub fn n(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    /// `E_n`.
    pub fn reference(&self) -> f64 {
        self.levels[self.levels.len() - 1]
    }

    /// Returns a spectrum with every frequency multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self::from_levels_unchecked(self.levels.iter().map(|e| e * s).collect())
    }
}

/// Canonical coordinates of a pure state: `n − 1` unwrapped angles and
/// `n − 1` actions.
///
/// Serializes as the flat array `[q…, p…]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PhasePoint {
    q: Vec<f64>,
    p: Vec<f64>,
}

impl PhasePoint {
    /// Builds a point, checking `p_i ≥ 0` and `Σp ≤ 1` up to [`SIMPLEX_TOL`].
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        let pt = Self::unchecked(q, p)?;
        pt.check_simplex()?;
        Ok(pt)
    }

    /// Builds a point without the simplex check. Integrator stages and finite
    /// difference probes may step marginally outside the simplex.
    pub fn unchecked(q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if q.len() != p.len() {
            return Err(Error::Dimension {
                expected: q.len(),
                found: p.len(),
            });
        }
        if q.is_empty() {
            return Err(Error::Domain("a phase point needs at least one (q, p) pair".into()));
        }
        if q.iter().chain(p.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite coordinate".into()));
        }
        Ok(Self { q, p })
    }

    /// Splits a flat `[q…, p…]` slice. The length must be even.
    pub fn from_flat(x: &[f64]) -> Result<Self> {
        let pt = Self::from_flat_unchecked(x)?;
        pt.check_simplex()?;
        Ok(pt)
    }

    pub fn from_flat_unchecked(x: &[f64]) -> Result<Self> {
        if !x.len().is_multiple_of(2) {
            return Err(Error::Domain(format!(
                "flat phase point must have even length, got {}",
                x.len()
            )));
        }
        let m = x.len() / 2;
        Self::unchecked(x[..m].to_vec(), x[m..].to_vec())
    }

    pub fn to_flat(&self) -> DVector<f64> {
        DVector::from_iterator(2 * self.q.len(), self.q.iter().chain(self.p.iter()).copied())
    }

    pub fn check_simplex(&self) -> Result<()> {
        if let Some((i, v)) = self.p.iter().enumerate().find(|(_, v)| **v < -SIMPLEX_TOL) {
            return Err(Error::Domain(format!("p{} = {v} is negative", i + 1)));
        }
        let pn = self.p_last();
        if pn < -SIMPLEX_TOL {
            return Err(Error::Domain(format!("sum of actions exceeds 1 by {}", -pn)));
        }
        Ok(())
    }

    /// Number of levels `n`.
    pub fn levels(&self) -> usize {
        self.q.len() + 1
    }

    /// Real dimension `2n − 2` of the phase space.
    pub fn dim(&self) -> usize {
        2 * self.q.len()
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    /// `p_n = 1 − Σ p_i`.
    pub fn p_last(&self) -> f64 {
        1.0 - self.p.iter().sum::<f64>()
    }

    /// Actions including `p_n`.
    pub fn all_p(&self) -> Vec<f64> {
        let mut v = self.p.clone();
        v.push(self.p_last());
        v
    }
}

impl TryFrom<Vec<f64>> for PhasePoint {
    type Error = Error;

    fn try_from(x: Vec<f64>) -> Result<Self> {
        Self::from_flat(&x)
    }
}

impl From<PhasePoint> for Vec<f64> {
    fn from(pt: PhasePoint) -> Self {
        pt.q.into_iter().chain(pt.p).collect()
    }
}

/// State vector amplitudes in some orthonormal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct HilbertVector {
    pub amps: Vec<Complex64>,
}

impl HilbertVector {
    pub fn new(amps: Vec<Complex64>) -> Self {
        Self { amps }
    }

    pub fn from_real(amps: &[f64]) -> Self {
        Self::new(amps.iter().map(|&a| Complex64::new(a, 0.0)).collect())
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self::new(self.amps.iter().map(|a| a / n).collect())
    }

    /// Tensor product `self ⊗ other` with `self` as the most significant
    /// factor.
    pub fn kron(&self, other: &HilbertVector) -> Self {
        Self::new(
            self.amps
                .iter()
                .flat_map(|a| other.amps.iter().map(move |b| a * b))
                .collect(),
        )
    }

    /// `max_i |a_i − e^{iγ} b_i|` minimized over the global phase `γ`.
    pub fn distance_up_to_phase(&self, other: &HilbertVector) -> f64 {
        let overlap: Complex64 = self.amps.iter().zip(&other.amps).map(|(a, b)| b.conj() * a).sum();
        let phase = if overlap.norm() > 0.0 {
            overlap / overlap.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b * phase).norm())
            .fold(0.0, f64::max)
    }
}

fn check_levels(pt: &PhasePoint, spec: &EnergySpectrum) -> Result<()> {
    if pt.levels() != spec.n() {
        return Err(Error::Dimension {
            expected: spec.n(),
            found: pt.levels(),
        });
    }
    Ok(())
}

/// Energy-basis amplitudes of the state at `pt`.
pub fn build_state(pt: &PhasePoint) -> Result<HilbertVector> {
    pt.check_simplex()?;
    let mut amps: Vec<Complex64> = pt
        .q()
        .iter()
        .zip(pt.p())
        .map(|(&q, &p)| Complex64::from_polar(p.max(0.0).sqrt(), -q))
        .collect();
    amps.push(Complex64::new(pt.p_last().max(0.0).sqrt(), 0.0));
    Ok(HilbertVector::new(amps))
}

/// Inverse of [`build_state`] up to global phase.
pub fn hilbert_to_phase(v: &HilbertVector) -> Result<PhasePoint> {
    if v.len() < 2 {
        return Err(Error::Dimension {
            expected: 2,
            found: v.len(),
        });
    }
    let norm = v.norm();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::Domain(format!("state norm {norm} is not 1")));
    }
    let last = v.amps[v.len() - 1];
    if last.norm() <= CHART_FLOOR {
        return Err(Error::PhaseUndefined { amplitude: last.norm() });
    }
    let (q, p) = v.amps[..v.len() - 1]
        .iter()
        .map(|a| {
            let q = if a.norm() == 0.0 { 0.0 } else { -(a / last).arg() };
            (q, a.norm_sqr())
        })
        .unzip();
    PhasePoint::new(q, p)
}

/// `H(q, p) = E_n + Σ ω_i p_i`.
pub fn hamiltonian_value(pt: &PhasePoint, spec: &EnergySpectrum) -> Result<f64> {
    check_levels(pt, spec)?;
    Ok(spec.reference() + spec.frequencies().iter().zip(pt.p()).map(|(w, p)| w * p).sum::<f64>())
}

/// `∇H = (0,…,0, ω₁,…,ω_{n−1})`.
pub fn hamiltonian_gradient(pt: &PhasePoint, spec: &EnergySpectrum) -> Result<DVector<f64>> {
    check_levels(pt, spec)?;
    let m = spec.n() - 1;
    let mut g = DVector::zeros(2 * m);
    g.rows_mut(m, m).copy_from_slice(spec.frequencies());
    Ok(g)
}

/// The canonical symplectic matrix `[[0, I], [−I, 0]]` on the `2n − 2`
/// dimensional phase space of an `n`-level system.
pub fn canonical_omega(n: usize) -> DMatrix<f64> {
    assert!(n >= 2, "canonical_omega needs n >= 2, got {n}");
    let m = n - 1;
    let mut om = DMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        om[(i, m + i)] = 1.0;
        om[(m + i, i)] = -1.0;
    }
    om
}

/// Exact Schrödinger flow: `q(t) = q(0) + ω t`, `p(t) = p(0)`.
pub fn unitary_flow(pt0: &PhasePoint, spec: &EnergySpectrum, t: f64) -> Result<PhasePoint> {
    check_levels(pt0, spec)?;
    let q = pt0.q().iter().zip(spec.frequencies()).map(|(q, w)| q + w * t).collect();
    PhasePoint::unchecked(q, pt0.p().to_vec())
}
