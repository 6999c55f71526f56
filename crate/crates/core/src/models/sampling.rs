//! Random phase points, on-surface points and spectra for tests and checks.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use super::{ex3_phase_from_product, ModelId, THREE_SPIN_BITS};
use crate::bloch::bloch_spinor;
use crate::phase_space::{hilbert_to_phase, wrap_angle, EnergySpectrum, HilbertVector, PhasePoint};

fn uniform_angle<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    wrap_angle(rng.random_range(-PI..PI))
}

/// Uniform angles and simplex-uniform actions (all `p_i > 0`).
pub fn random_interior_point<R: Rng + ?Sized>(n_levels: usize, rng: &mut R) -> PhasePoint {
    let weights: Vec<f64> = (0..n_levels)
        .map(|_| -(1.0 - rng.random::<f64>()).ln() + f64::MIN_POSITIVE)
        .collect();
    let total: f64 = weights.iter().sum();
    let p = weights[..n_levels - 1].iter().map(|w| w / total).collect();
    let q = (0..n_levels - 1).map(|_| uniform_angle(rng)).collect();
    PhasePoint::unchecked(q, p).expect("finite interior point")
}

/// Uniformly distributed point on the Bloch sphere as `(θ, φ)`.
pub fn random_bloch_angles<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64) {
    let theta = (1.0 - 2.0 * rng.random::<f64>()).clamp(-1.0, 1.0).acos();
    (theta, uniform_angle(rng))
}

fn random_spinor<R: Rng + ?Sized>(rng: &mut R) -> [Complex64; 2] {
    let (t, f) = random_bloch_angles(rng);
    bloch_spinor(t, f)
}

/// Product of three random spinors laid out in the three-spin level order.
pub fn random_three_spin_product<R: Rng + ?Sized>(rng: &mut R) -> HilbertVector {
    let f = [random_spinor(rng), random_spinor(rng), random_spinor(rng)];
    HilbertVector::new(
        THREE_SPIN_BITS
            .iter()
            .map(|b| f[0][b[0]] * f[1][b[1]] * f[2][b[2]])
            .collect(),
    )
}

/// Two-spin product point: actions drawn on the quadric `p₁p₄ = p₂p₃` by
/// rejection on `(p₂, p₃)` plus the exact root for `p₁`, and `q₁ = q₂ + q₃`.
pub fn two_spin_surface_point<R: Rng + ?Sized>(rng: &mut R) -> PhasePoint {
    loop {
        let p2: f64 = rng.random();
        let p3: f64 = rng.random();
        let rest = 1.0 - p2 - p3;
        if rest <= 0.0 {
            continue;
        }
        let disc = rest * rest - 4.0 * p2 * p3;
        if disc < 0.0 {
            continue;
        }
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let p1 = 0.5 * (rest + sign * disc.sqrt());
        let q2 = uniform_angle(rng);
        let q3 = uniform_angle(rng);
        return PhasePoint::unchecked(vec![wrap_angle(q2 + q3), q2, q3], vec![p1, p2, p3])
            .expect("finite surface point");
    }
}

/// Three-spin product point from a random product of spinors.
pub fn three_spin_surface_point<R: Rng + ?Sized>(rng: &mut R) -> PhasePoint {
    loop {
        if let Ok(pt) = hilbert_to_phase(&random_three_spin_product(rng)) {
            return pt;
        }
    }
}

/// Disentangled point from a random pair of spinors, with `p₁p₄ ≥ min_p1p4`.
pub fn disentangled_surface_point<R: Rng + ?Sized>(rng: &mut R, min_p1p4: f64) -> PhasePoint {
    loop {
        let v = HilbertVector::new(random_spinor(rng).to_vec()).kron(&HilbertVector::new(random_spinor(rng).to_vec()));
        if let Ok(pt) = ex3_phase_from_product(&v) {
            if pt.p()[0] * pt.p_last() >= min_p1p4 {
                return pt;
            }
        }
    }
}

/// A point on the model's constraint surface.
pub fn on_surface_point<R: Rng + ?Sized>(model: ModelId, rng: &mut R) -> PhasePoint {
    match model {
        ModelId::TwoSpinProduct => two_spin_surface_point(rng),
        ModelId::ThreeSpinProduct => three_spin_surface_point(rng),
        ModelId::TwoSpinDisentangled => disentangled_surface_point(rng, 1e-6),
        ModelId::Unconstrained => random_interior_point(4, rng),
    }
}

/// Levels drawn uniformly from `[-scale, scale]`, rejecting near-degenerate draws.
pub fn generic_spectrum<R: Rng + ?Sized>(n_levels: usize, scale: f64, rng: &mut R) -> EnergySpectrum {
    loop {
        let levels: Vec<f64> = (0..n_levels).map(|_| rng.random_range(-scale..scale)).collect();
        if let Ok(s) = EnergySpectrum::from_levels(levels) {
            let mut sorted = s.levels().to_vec();
            sorted.sort_by(f64::total_cmp);
            if sorted.windows(2).all(|w| w[1] - w[0] > 1e-6 * scale) {
                return s;
            }
        }
    }
}

/// Non-interacting spectrum: each level is a sum of one `±h_k` per spin.
///
/// For two spins this is `{e₁, e₂, −e₂, −e₁}` with `e₁ = h₁ + h₂`,
/// `e₂ = h₁ − h₂`; for three spins the levels follow
/// [`THREE_SPIN_BITS`](super::THREE_SPIN_BITS).
pub fn product_compatible_spectrum<R: Rng + ?Sized>(model: ModelId, scale: f64, rng: &mut R) -> EnergySpectrum {
    let spins = match model {
        ModelId::TwoSpinProduct => 2,
        ModelId::ThreeSpinProduct => 3,
        _ => panic!("no product-compatible spectrum for {model}"),
    };
    loop {
        let h: Vec<f64> = (0..spins).map(|_| rng.random_range(-scale..scale)).collect();
        let levels: Vec<f64> = if spins == 2 {
            let (e1, e2) = (h[0] + h[1], h[0] - h[1]);
            vec![e1, e2, -e2, -e1]
        } else {
            THREE_SPIN_BITS
                .iter()
                .map(|b| (0..3).map(|k| if b[k] == 0 { h[k] } else { -h[k] }).sum())
                .collect()
        };
        if let Ok(s) = EnergySpectrum::from_levels(levels) {
            let mut sorted = s.levels().to_vec();
            sorted.sort_by(f64::total_cmp);
            if sorted.windows(2).all(|w| w[1] - w[0] > 1e-3 * scale) {
                return s;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{spectrum_condition, two_spin_product_constraints};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn interior_points_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [2, 4, 8] {
            for _ in 0..100 {
                let x = random_interior_point(n, &mut rng);
                assert!(x.check_simplex().is_ok());
                assert!(x.all_p().iter().all(|&p| p > 0.0));
            }
        }
    }

    #[test]
    fn surface_points_satisfy_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cs = two_spin_product_constraints();
        for _ in 0..100 {
            let x = two_spin_surface_point(&mut rng);
            assert!(x.check_simplex().is_ok());
            assert!(cs.residual(&x).unwrap() < 1e-14);
        }
        for model in [ModelId::ThreeSpinProduct, ModelId::TwoSpinDisentangled] {
            let cs = model.constraint_set(model.required_levels().unwrap()).unwrap();
            for _ in 0..100 {
                let x = on_surface_point(model, &mut rng);
                assert!(cs.residual(&x).unwrap() < 1e-12, "{model}");
            }
        }
    }

    #[test]
    fn compatible_spectra_satisfy_condition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for model in [ModelId::TwoSpinProduct, ModelId::ThreeSpinProduct] {
            for _ in 0..100 {
                let s = product_compatible_spectrum(model, 2.0, &mut rng);
                assert!(spectrum_condition(&s, model).unwrap());
                let g = generic_spectrum(s.n(), 2.0, &mut rng);
                assert!(!spectrum_condition(&g, model).unwrap());
            }
        }
    }
}
