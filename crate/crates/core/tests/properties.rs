use std::f64::consts::TAU;

use proptest::prelude::*;
use qdirac::dirac::{constrained_velocity, finite_difference_gradients, modified_structure, multiplier_velocity};
use qdirac::integrator::{integrate, project_onto_surface, IntegratorConfig, Scheme};
use qdirac::models::sampling::{generic_spectrum, on_surface_point, random_interior_point};
use qdirac::models::ModelId;
use qdirac::phase_space::{build_state, hamiltonian_gradient, hamiltonian_value, hilbert_to_phase, unitary_flow};
use qdirac::{EnergySpectrum, PhasePoint};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const MODELS: [ModelId; 3] = [
    ModelId::TwoSpinProduct,
    ModelId::ThreeSpinProduct,
    ModelId::TwoSpinDisentangled,
];

fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

fn interior(levels: usize, seed: u64) -> PhasePoint {
    random_interior_point(levels, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn model_case(index: usize, seed: u64) -> (ModelId, PhasePoint, EnergySpectrum) {
    let model = MODELS[index];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pt = on_surface_point(model, &mut rng);
    let spec = generic_spectrum(model.required_levels().unwrap(), 2.0, &mut rng);
    (model, pt, spec)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn states_are_normalised(levels in 2usize..9, seed in any::<u64>()) {
        let v = build_state(&interior(levels, seed)).unwrap();
        prop_assert!((v.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn state_round_trip(levels in 2usize..9, seed in any::<u64>()) {
        let pt = interior(levels, seed);
        prop_assume!(pt.p_last() > 1e-10);
        let back = hilbert_to_phase(&build_state(&pt).unwrap()).unwrap();
        for (a, b) in pt.p().iter().zip(back.p()) {
            prop_assert!((a - b).abs() < 1e-14);
        }
        for ((a, b), p) in pt.q().iter().zip(back.q()).zip(pt.p()) {
            if *p > 1e-10 {
                prop_assert!(angle_gap(*a, *b) < 1e-9);
            }
        }
    }

    #[test]
    fn unitary_flow_composes(seed in any::<u64>(), s in -5.0f64..5.0, t in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pt = random_interior_point(5, &mut rng);
        let spec = generic_spectrum(5, 3.0, &mut rng);
        let two_steps = unitary_flow(&unitary_flow(&pt, &spec, s).unwrap(), &spec, t).unwrap();
        let one_step = unitary_flow(&pt, &spec, s + t).unwrap();
        for (a, b) in two_steps.q().iter().zip(one_step.q()) {
            prop_assert!(angle_gap(*a, *b) < 1e-12);
        }
        prop_assert_eq!(two_steps.p(), one_step.p());
    }

    #[test]
    fn unitary_flow_matches_phase_rotation(seed in any::<u64>(), t in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pt = random_interior_point(4, &mut rng);
        let spec = generic_spectrum(4, 2.0, &mut rng);
        let v = build_state(&pt).unwrap();
        let rotated = qdirac::HilbertVector::new(
            v.amps
                .iter()
                .zip(spec.levels())
                .map(|(a, e)| a * num_complex::Complex64::from_polar(1.0, -e * t))
                .collect(),
        );
        let flowed = build_state(&unitary_flow(&pt, &spec, t).unwrap()).unwrap();
        prop_assert!(flowed.distance_up_to_phase(&rotated) < 1e-12);
    }

    #[test]
    fn hamiltonian_gradient_matches_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pt = random_interior_point(6, &mut rng);
        let spec = generic_spectrum(6, 2.0, &mut rng);
        let g = hamiltonian_gradient(&pt, &spec).unwrap();
        let x = pt.to_flat();
        let h = 1e-6;
        for k in 0..x.len() {
            let mut up = x.clone();
            let mut down = x.clone();
            up[k] += h;
            down[k] -= h;
            let fd = (hamiltonian_value(&PhasePoint::from_flat_unchecked(up.as_slice()).unwrap(), &spec).unwrap()
                - hamiltonian_value(&PhasePoint::from_flat_unchecked(down.as_slice()).unwrap(), &spec).unwrap())
                / (2.0 * h);
            prop_assert!((fd - g[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn modified_structure_is_antisymmetric(index in 0usize..3, seed in any::<u64>()) {
        let (model, pt, spec) = model_case(index, seed);
        let cs = model.constraint_set(spec.n()).unwrap();
        let m = modified_structure(&cs, &pt, &spec).unwrap();
        prop_assert!((&m.omega_tilde + m.omega_tilde.transpose()).amax() < 1e-9);
        prop_assert!((&m.omega_small + m.omega_small.transpose()).amax() < 1e-12);
    }

    #[test]
    fn reduced_velocity_is_tangent_and_conserves_energy(index in 0usize..3, seed in any::<u64>()) {
        let (model, pt, spec) = model_case(index, seed);
        let cs = model.constraint_set(spec.n()).unwrap();
        let v = constrained_velocity(&cs, &pt, &spec).unwrap();
        let g = cs.gradients(&pt).unwrap();
        let scale = 1.0 + v.amax();
        prop_assert!((&g * &v).amax() < 1e-9 * scale);
        let dh = hamiltonian_gradient(&pt, &spec).unwrap().dot(&v);
        prop_assert!(dh.abs() < 1e-10 * scale);
    }

    #[test]
    fn multiplier_form_agrees(index in 0usize..3, seed in any::<u64>()) {
        let (model, pt, spec) = model_case(index, seed);
        let cs = model.constraint_set(spec.n()).unwrap();
        let a = constrained_velocity(&cs, &pt, &spec).unwrap();
        let b = multiplier_velocity(&cs, &pt, &spec).unwrap();
        prop_assert!((&a - &b).amax() < 1e-9 * (1.0 + a.amax()));
    }

    #[test]
    fn analytic_gradients_match_differences(index in 0usize..3, seed in any::<u64>()) {
        let (model, pt, spec) = model_case(index, seed);
        let cs = model.constraint_set(spec.n()).unwrap();
        let analytic = cs.gradients(&pt).unwrap();
        let fd = finite_difference_gradients(&cs, &pt, 1e-6).unwrap();
        prop_assert!((&analytic - &fd).amax() < 1e-5 * (1.0 + analytic.amax()));
    }

    #[test]
    fn projection_returns_to_surface(index in 0usize..2, seed in any::<u64>(), eps in -1e-4f64..1e-4) {
        let (model, pt, spec) = model_case(index, seed);
        let cs = model.constraint_set(spec.n()).unwrap();
        let mut x = pt.to_flat();
        let m = x.len() / 2;
        for k in 0..m {
            x[k] += eps;
        }
        x[m] += eps * pt.p()[0];
        let nudged = PhasePoint::from_flat_unchecked(x.as_slice()).unwrap();
        let back = project_onto_surface(&cs, &nudged, 1e-13).unwrap();
        prop_assert!(cs.residual(&back).unwrap() < 1e-12);
    }
}

/// Error at `t_end` of a run against a run with a much finer step.
fn self_convergence(dt: f64, scheme: Scheme) -> f64 {
    let (model, pt, spec) = (
        ModelId::TwoSpinDisentangled,
        qdirac::models::ex3_phase_from_product(&qdirac::bloch::bloch_product_state(&qdirac::bloch::BlochPoint::new(
            1.0, 0.4, 2.0, -1.2,
        )))
        .unwrap(),
        EnergySpectrum::from_frequencies(vec![0.0, 0.5, -2.5]).unwrap(),
    );
    let cs = model.constraint_set(4).unwrap();
    let run = |dt: f64| {
        let cfg = IntegratorConfig {
            t_end: 1.0,
            dt,
            scheme,
            ..Default::default()
        };
        integrate(&cs, &spec, &pt, &cfg).unwrap().last().clone()
    };
    let reference = run(dt / 16.0);
    let end = run(dt);
    let dq = end
        .q()
        .iter()
        .zip(reference.q())
        .map(|(a, b)| angle_gap(*a, *b))
        .fold(0.0, f64::max);
    let dp = end
        .p()
        .iter()
        .zip(reference.p())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    dq.max(dp)
}

#[test]
fn rk4_converges_at_fourth_order_on_a_curved_flow() {
    let coarse = self_convergence(0.02, Scheme::Rk4);
    let fine = self_convergence(0.01, Scheme::Rk4);
    let ratio = coarse / fine;
    assert!((12.0..=20.0).contains(&ratio), "ratio {ratio} ({coarse:e} / {fine:e})");
}

#[test]
fn adaptive_scheme_meets_its_tolerance() {
    let (model, pt, spec) = model_case(2, 5);
    let cs = model.constraint_set(4).unwrap();
    let base = IntegratorConfig {
        t_end: 2.0,
        dt: 1e-4,
        ..Default::default()
    };
    let reference = integrate(&cs, &spec, &pt, &base).unwrap();
    let adaptive = integrate(
        &cs,
        &spec,
        &pt,
        &IntegratorConfig {
            scheme: Scheme::Rk45,
            dt: 0.05,
            tol: 1e-10,
            ..base
        },
    )
    .unwrap();
    assert!(adaptive.status.is_completed());
    assert!(adaptive.len() < reference.len() / 10);
    let (a, b) = (adaptive.last(), reference.last());
    for (x, y) in a.p().iter().zip(b.p()) {
        assert!((x - y).abs() < 1e-7);
    }
    for (x, y) in a.q().iter().zip(b.q()) {
        assert!(angle_gap(*x, *y) < 1e-7);
    }
    assert!((adaptive.times.last().unwrap() - 2.0).abs() < 1e-12);
}
