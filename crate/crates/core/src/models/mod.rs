//! Worked constraint systems for two and three spin-½ particles.
//!
//! * [`ModelId::TwoSpinProduct`]: a pair of spins confined to the product
//!   quadric `ψ₁ψ₄ = ψ₂ψ₃` written in the energy basis.
//! * [`ModelId::ThreeSpinProduct`]: three spins on the Segre variety
//!   `P¹×P¹×P¹` in the energy basis.
//! * [`ModelId::TwoSpinDisentangled`]: a pair of spins kept disentangled in
//!   the `|↑↑⟩, |↑↓⟩, |↓↑⟩, |↓↓⟩` basis, with energy eigenstates taken from
//!   the Heisenberg Hamiltonian (triplets and singlet).

pub mod sampling;

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dirac::ConstraintSet;
use crate::error::{Error, Result};
use crate::phase_space::{build_state, hilbert_to_phase, wrap_angle, EnergySpectrum, HilbertVector, PhasePoint};

/// Floor on `p₁p₄` below which the disentanglement chart is singular.
pub const P1P4_FLOOR: f64 = 1e-12;
/// Absolute tolerance (scaled by `max(1, max|ω|)`) for spectrum relations.
pub const SPECTRUM_CONDITION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelId {
    TwoSpinProduct,
    ThreeSpinProduct,
    TwoSpinDisentangled,
    Unconstrained,
}

impl ModelId {
    pub const ALL: [ModelId; 4] = [
        ModelId::TwoSpinProduct,
        ModelId::ThreeSpinProduct,
        ModelId::TwoSpinDisentangled,
        ModelId::Unconstrained,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::TwoSpinProduct => "two-spin-product",
            ModelId::ThreeSpinProduct => "three-spin-product",
            ModelId::TwoSpinDisentangled => "two-spin-disentangled",
            ModelId::Unconstrained => "unconstrained",
        }
    }

    /// Level count fixed by the model, if any.
    pub fn required_levels(self) -> Option<usize> {
        match self {
            ModelId::TwoSpinProduct | ModelId::TwoSpinDisentangled => Some(4),
            ModelId::ThreeSpinProduct => Some(8),
            ModelId::Unconstrained => None,
        }
    }

    /// Constraint set of the model on an `n`-level system.
    pub fn constraint_set(self, n_levels: usize) -> Result<ConstraintSet> {
        if let Some(req) = self.required_levels() {
            if req != n_levels {
                return Err(Error::Dimension {
                    expected: req,
                    found: n_levels,
                });
            }
        }
        Ok(match self {
            ModelId::TwoSpinProduct => two_spin_product_constraints(),
            ModelId::ThreeSpinProduct => three_spin_product_constraints(),
            ModelId::TwoSpinDisentangled => disentangled_constraints(),
            ModelId::Unconstrained => ConstraintSet::unconstrained(n_levels),
        })
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelId::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::UnknownModel(s.to_string()))
    }
}

fn check_levels(pt: &PhasePoint, n: usize) -> Result<()> {
    if pt.levels() != n {
        return Err(Error::Dimension {
            expected: n,
            found: pt.levels(),
        });
    }
    Ok(())
}

/// `p_a p_b − p_c p_d` (1-based, index `n` meaning `p_n = 1 − Σp`) and its
/// gradient with respect to `(q, p)`.
fn bilinear(all_p: &[f64], ab: (usize, usize), cd: (usize, usize)) -> (f64, Vec<f64>) {
    let n = all_p.len();
    let m = n - 1;
    let p = |i: usize| all_p[i - 1];
    let mut grad = vec![0.0; 2 * m];
    let mut add = |i: usize, coeff: f64| {
        if i == n {
            for g in &mut grad[m..] {
                *g -= coeff;
            }
        } else {
            grad[m + i - 1] += coeff;
        }
    };
    add(ab.0, p(ab.1));
    add(ab.1, p(ab.0));
    add(cd.0, -p(cd.1));
    add(cd.1, -p(cd.0));
    (p(ab.0) * p(ab.1) - p(cd.0) * p(cd.1), grad)
}

/// Wrapped `Σ s_i q_i` and its constant gradient.
fn angle_relation(q: &[f64], terms: &[(usize, f64)]) -> (f64, Vec<f64>) {
    let m = q.len();
    let mut grad = vec![0.0; 2 * m];
    let mut v = 0.0;
    for &(i, s) in terms {
        v += s * q[i - 1];
        grad[i - 1] += s;
    }
    (wrap_angle(v), grad)
}

fn assemble(rows: Vec<(f64, Vec<f64>)>, m: usize) -> (DVector<f64>, DMatrix<f64>) {
    let n = rows.len();
    let values = DVector::from_iterator(n, rows.iter().map(|r| r.0));
    let grads = DMatrix::from_row_iterator(n, 2 * m, rows.into_iter().flat_map(|r| r.1));
    (values, grads)
}

fn two_spin_rows(pt: &PhasePoint) -> (DVector<f64>, DMatrix<f64>) {
    let all_p = pt.all_p();
    assemble(
        vec![
            angle_relation(pt.q(), &[(1, 1.0), (2, -1.0), (3, -1.0)]),
            bilinear(&all_p, (1, 4), (2, 3)),
        ],
        3,
    )
}

/// `Φ¹ = q₁ − q₂ − q₃` (wrapped), `Φ² = p₁p₄ − p₂p₃`.
pub fn two_spin_product_constraints() -> ConstraintSet {
    ConstraintSet::new(
        4,
        vec!["q1-q2-q3".into(), "p1p4-p2p3".into()],
        |pt| Ok(two_spin_rows(pt).0),
        |pt| Ok(two_spin_rows(pt).1),
    )
    .expect("two-spin constraint set")
    .with_angular(&[true, false])
}

/// Real and imaginary parts of `ψ₁ψ₄ − ψ₂ψ₃` in action-angle form:
/// `√(p₁p₄) cos q₁ − √(p₂p₃) cos(q₂+q₃)` and the same with `sin`.
pub fn raw_quadric_residual(pt: &PhasePoint) -> Result<[f64; 2]> {
    check_levels(pt, 4)?;
    let (q, p) = (pt.q(), pt.p());
    let a = (p[0] * pt.p_last()).max(0.0).sqrt();
    let b = (p[1] * p[2]).max(0.0).sqrt();
    Ok([
        a * q[0].cos() - b * (q[1] + q[2]).cos(),
        a * q[0].sin() - b * (q[1] + q[2]).sin(),
    ])
}

/// Index pairs `((a, b), (c, d))` of the bilinear relations `ψ_aψ_b = ψ_cψ_d`
/// (1-based) that cut out the three-spin product variety.
pub const THREE_SPIN_RELATIONS: [((usize, usize), (usize, usize)); 4] =
    [((1, 7), (3, 4)), ((2, 8), (5, 6)), ((1, 8), (2, 7)), ((3, 6), (4, 5))];

/// Spin configuration (0 = first basis state of each factor) of each
/// three-spin basis index, consistent with [`THREE_SPIN_RELATIONS`].
pub const THREE_SPIN_BITS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [0, 0, 1],
    [0, 1, 0],
    [1, 0, 0],
    [0, 1, 1],
    [1, 0, 1],
    [1, 1, 0],
    [1, 1, 1],
];

/// Largest modulus among the model's bilinear product-state relations.
///
/// For [`ModelId::TwoSpinDisentangled`] the vector must be given in the spin
/// product basis (see [`ex3_basis_map`]); for the product models, in the
/// energy basis.
pub fn segre_membership(v: &HilbertVector, model: ModelId) -> Result<f64> {
    let rel =
        |a: usize, b: usize, c: usize, d: usize| (v.amps[a - 1] * v.amps[b - 1] - v.amps[c - 1] * v.amps[d - 1]).norm();
    let need = |n: usize| {
        if v.len() != n {
            Err(Error::Dimension {
                expected: n,
                found: v.len(),
            })
        } else {
            Ok(())
        }
    };
    match model {
        ModelId::TwoSpinProduct | ModelId::TwoSpinDisentangled => {
            need(4)?;
            Ok(rel(1, 4, 2, 3))
        }
        ModelId::ThreeSpinProduct => {
            need(8)?;
            Ok(THREE_SPIN_RELATIONS
                .iter()
                .map(|&((a, b), (c, d))| rel(a, b, c, d))
                .fold(0.0, f64::max))
        }
        ModelId::Unconstrained => Ok(0.0),
    }
}

fn three_spin_rows(pt: &PhasePoint) -> (DVector<f64>, DMatrix<f64>) {
    let q = pt.q();
    let all_p = pt.all_p();
    let mut rows = vec![
        angle_relation(q, &[(2, 1.0), (5, -1.0), (6, -1.0)]),
        angle_relation(q, &[(1, 1.0), (7, 1.0), (3, -1.0), (4, -1.0)]),
        angle_relation(q, &[(1, 1.0), (2, -1.0), (7, -1.0)]),
        angle_relation(q, &[(3, 1.0), (6, 1.0), (4, -1.0), (5, -1.0)]),
    ];
    rows.extend([
        bilinear(&all_p, (2, 8), (5, 6)),
        bilinear(&all_p, (1, 7), (3, 4)),
        bilinear(&all_p, (1, 8), (2, 7)),
        bilinear(&all_p, (3, 6), (4, 5)),
    ]);
    assemble(rows, 7)
}

/// Four wrapped angle relations and four bilinear action relations
/// (with `p₈ = 1 − Σ₁⁷ p_i`).
pub fn three_spin_product_constraints() -> ConstraintSet {
    let labels = [
        "q2-q5-q6",
        "q1+q7-q3-q4",
        "q1-q2-q7",
        "q3+q6-q4-q5",
        "p2p8-p5p6",
        "p1p7-p3p4",
        "p1p8-p2p7",
        "p3p6-p4p5",
    ];
    ConstraintSet::new(
        8,
        labels.iter().map(|s| s.to_string()).collect(),
        |pt| Ok(three_spin_rows(pt).0),
        |pt| Ok(three_spin_rows(pt).1),
    )
    .expect("three-spin constraint set")
    .with_angular(&[true, true, true, true, false, false, false, false])
}

fn disentangled_values(pt: &PhasePoint) -> DVector<f64> {
    let (q, p) = (pt.q(), pt.p());
    let s = (p[0] * pt.p_last()).max(0.0).sqrt();
    let a = 2.0 * q[1] - q[0];
    let b = 2.0 * q[2] - q[0];
    DVector::from_vec(vec![
        2.0 * s - p[1] * a.cos() + p[2] * b.cos(),
        p[1] * a.sin() - p[2] * b.sin(),
    ])
}

fn disentangled_gradients(pt: &PhasePoint) -> Result<DMatrix<f64>> {
    let (q, p) = (pt.q(), pt.p());
    let p4 = pt.p_last();
    let prod = p[0] * p4;
    if prod < P1P4_FLOOR {
        return Err(Error::ChartSingularity(format!(
            "p1*p4 = {prod:e} is below {P1P4_FLOOR:e}"
        )));
    }
    let s = prod.sqrt();
    let a = 2.0 * q[1] - q[0];
    let b = 2.0 * q[2] - q[0];
    let (sa, ca, sb, cb) = (a.sin(), a.cos(), b.sin(), b.cos());
    Ok(DMatrix::from_row_slice(
        2,
        6,
        &[
            -p[1] * sa + p[2] * sb,
            2.0 * p[1] * sa,
            -2.0 * p[2] * sb,
            (p4 - p[0]) / s,
            -p[0] / s - ca,
            -p[0] / s + cb,
            //
            -p[1] * ca + p[2] * cb,
            2.0 * p[1] * ca,
            -2.0 * p[2] * cb,
            0.0,
            sa,
            -sb,
        ],
    ))
}

/// Real and imaginary parts of `√(p₁p₄) e^{−iq₁} = ½(p₂e^{−2iq₂} − p₃e^{−2iq₃})`
/// after multiplying through by `2e^{iq₁}`.
///
/// Values are defined everywhere; gradients report
/// [`Error::ChartSingularity`] when `p₁p₄ <` [`P1P4_FLOOR`].
pub fn disentangled_constraints() -> ConstraintSet {
    ConstraintSet::new(
        4,
        vec!["re-disentangled".into(), "im-disentangled".into()],
        |pt| Ok(disentangled_values(pt)),
        disentangled_gradients,
    )
    .expect("disentangled constraint set")
}

/// Closed-form reduced velocity of the two-spin product model:
/// `ṗ = 0` and `q̇` affine in `p` with slope `ω₁ − ω₂ − ω₃`.
pub fn closed_form_velocity_ex1(pt: &PhasePoint, spec: &EnergySpectrum) -> Result<DVector<f64>> {
    check_levels(pt, 4)?;
    if spec.n() != 4 {
        return Err(Error::Dimension {
            expected: 4,
            found: spec.n(),
        });
    }
    let w = spec.frequencies();
    let p = pt.p();
    let c = w[0] - w[1] - w[2];
    Ok(DVector::from_vec(vec![
        c * (2.0 * p[0] + p[1] + p[2]) + (w[1] + w[2]),
        c * (p[0] + p[2]) + w[1],
        c * (p[0] + p[1]) + w[2],
        0.0,
        0.0,
        0.0,
    ]))
}

/// Closed-form right-hand sides proposed for the disentangled model,
/// evaluated term by term.
///
/// These do not agree with the generic reduction, which is the reference
/// dynamics for this model; see the crate README.
pub fn closed_form_velocity_ex3(pt: &PhasePoint, spec: &EnergySpectrum) -> Result<DVector<f64>> {
    check_levels(pt, 4)?;
    if spec.n() != 4 {
        return Err(Error::Dimension {
            expected: 4,
            found: spec.n(),
        });
    }
    let (q, p) = (pt.q(), pt.p());
    let (q1, q2, q3) = (q[0], q[1], q[2]);
    let (p1, p2, p3) = (p[0], p[1], p[2]);
    let p4 = pt.p_last();
    if p1 * p4 <= P1P4_FLOOR {
        return Err(Error::ChartSingularity(format!(
            "p1*p4 = {:e} is below {P1P4_FLOOR:e}",
            p1 * p4
        )));
    }
    let s = (p1 * p4).sqrt();
    let (w1, w2, w3) = (spec.frequencies()[0], spec.frequencies()[1], spec.frequencies()[2]);
    let sin23 = (2.0 * (q2 - q3)).sin();
    let cos3 = (2.0 * q3 - q1).cos();

    let p1_dot = 2.0 * p2 * p3 * (w1 - w3) * sin23;
    let p2_dot = -2.0 * p2 * p3 * (w1 - 2.0 * w3) * sin23;
    let p3_dot = 2.0 * p2 * p3 * (w1 - 2.0 * w2) * sin23;
    let q1_dot = 2.0 * p3 * (1.0 - 2.0 * p1 - p2 - p3) * (w2 - w3) * cos3 / s
        + (w1 - 2.0 * w2) * (2.0 * p1 + p2 + p3)
        + 2.0 * w2;
    let q2_dot =
        2.0 * p1 * p3 * (w3 - w2) * cos3 / s + (w1 - 2.0 * w2) * (2.0 * p1 + p2) - p3 * (w1 - 2.0 * w3) + 2.0 * w2;
    let q3_dot = 2.0 * p1 * p3 * (w3 - w2) * cos3 / s
        + (w1 - 2.0 * w2) * (2.0 * p1 - p2 * (2.0 * (q2 - q3)).cos())
        + p3 * (w1 - 2.0 * w3)
        + 2.0 * w3;
    Ok(DVector::from_vec(vec![q1_dot, q2_dot, q3_dot, p1_dot, p2_dot, p3_dot]))
}

/// Whether the unconstrained Schrödinger flow already preserves the model's
/// constraint surface.
///
/// * two-spin product: `ω₁ = ω₂ + ω₃`, i.e. `E₁ − E₂ = E₃ − E₄`;
/// * three-spin product: `ω₁ = ω₂ + ω₇`, `ω₂ = ω₅ + ω₆`,
///   `ω₁ + ω₇ = ω₃ + ω₄`, `ω₃ + ω₆ = ω₄ + ω₅`;
/// * two-spin disentangled: `ω₂ = ω₃` and `ω₁ = ω₂ + ω₃` (the Hamiltonian is
///   a sum of single-spin terms);
/// * unconstrained: always.
pub fn spectrum_condition(spec: &EnergySpectrum, model: ModelId) -> Result<bool> {
    if let Some(n) = model.required_levels() {
        if spec.n() != n {
            return Err(Error::Dimension {
                expected: n,
                found: spec.n(),
            });
        }
    }
    let w = spec.frequencies();
    let scale = w.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let zero = |v: f64| v.abs() <= SPECTRUM_CONDITION_TOL * scale;
    let w = |i: usize| w[i - 1];
    Ok(match model {
        ModelId::TwoSpinProduct => zero(w(1) - w(2) - w(3)),
        ModelId::ThreeSpinProduct => {
            zero(w(1) - w(2) - w(7))
                && zero(w(2) - w(5) - w(6))
                && zero(w(1) + w(7) - w(3) - w(4))
                && zero(w(3) + w(6) - w(4) - w(5))
        }
        ModelId::TwoSpinDisentangled => zero(w(2) - w(3)) && zero(w(1) - w(2) - w(3)),
        ModelId::Unconstrained => true,
    })
}

/// Coupling `J` and field `B` of `−J σ⃗₁·σ⃗₂ − B(σᶻ₁ + σᶻ₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeisenbergParams {
    pub j: f64,
    pub b: f64,
}

/// Levels of the Heisenberg Hamiltonian in the order
/// `|↓↓⟩, triplet-0, singlet, |↑↑⟩`: `(−J+2B, −J, 3J, −J−2B)`.
pub fn heisenberg_spectrum(hp: HeisenbergParams) -> Result<EnergySpectrum> {
    let HeisenbergParams { j, b } = hp;
    EnergySpectrum::from_levels(vec![-j + 2.0 * b, -j, 3.0 * j, -j - 2.0 * b])
}

/// Heisenberg eigenvectors in the spin basis `(|↑↑⟩, |↑↓⟩, |↓↑⟩, |↓↓⟩)`,
/// in the level order of [`heisenberg_spectrum`].
pub fn heisenberg_eigenbasis() -> [HilbertVector; 4] {
    let s = FRAC_1_SQRT_2;
    [
        HilbertVector::from_real(&[0.0, 0.0, 0.0, 1.0]),
        HilbertVector::from_real(&[0.0, s, s, 0.0]),
        HilbertVector::from_real(&[0.0, -s, s, 0.0]),
        HilbertVector::from_real(&[1.0, 0.0, 0.0, 0.0]),
    ]
}

/// Spin-basis amplitudes of the state at `pt`, reading the action-angle
/// expansion in the Heisenberg eigenbasis.
pub fn ex3_basis_map(pt: &PhasePoint) -> Result<HilbertVector> {
    check_levels(pt, 4)?;
    let energy = build_state(pt)?;
    let basis = heisenberg_eigenbasis();
    let mut out = vec![Complex64::new(0.0, 0.0); 4];
    for (a, e) in energy.amps.iter().zip(&basis) {
        for (o, b) in out.iter_mut().zip(&e.amps) {
            *o += a * b;
        }
    }
    Ok(HilbertVector::new(out))
}

/// Inverse of [`ex3_basis_map`] (up to global phase).
pub fn ex3_phase_from_product(v: &HilbertVector) -> Result<PhasePoint> {
    if v.len() != 4 {
        return Err(Error::Dimension {
            expected: 4,
            found: v.len(),
        });
    }
    let basis = heisenberg_eigenbasis();
    let energy: Vec<Complex64> = basis
        .iter()
        .map(|e| e.amps.iter().zip(&v.amps).map(|(b, a)| b.conj() * a).sum())
        .collect();
    hilbert_to_phase(&HilbertVector::new(energy))
}
