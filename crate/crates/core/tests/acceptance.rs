//! Acceptance criteria, one line each. Runs without the libtest harness so
//! every line is printed; exits non-zero if any criterion fails.

use std::f64::consts::{FRAC_PI_2, PI};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use qdirac::bloch::{field_grid, FixedAngles, SampleFlag};
use qdirac::dirac::{annihilation_check, constrained_velocity, lambda_tensor, omega_matrix};
use qdirac::integrator::{integrate, IntegratorConfig, Projection, Trajectory};
use qdirac::models::sampling::{
    disentangled_surface_point, generic_spectrum, on_surface_point, product_compatible_spectrum, random_interior_point,
    three_spin_surface_point, two_spin_surface_point,
};
use qdirac::models::{
    closed_form_velocity_ex1, closed_form_velocity_ex3, disentangled_constraints, spectrum_condition,
    three_spin_product_constraints, two_spin_product_constraints, ModelId,
};
use qdirac::phase_space::{canonical_omega, hamiltonian_gradient};
use qdirac::{EnergySpectrum, PhasePoint};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn reference_spectrum() -> EnergySpectrum {
    EnergySpectrum::from_frequencies(vec![0.0, 0.5, -2.5]).unwrap()
}

fn within(elapsed: Duration, limit: f64) -> bool {
    elapsed.as_secs_f64() < limit
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn unwrap_angles(xs: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut offset = 0.0;
    for (k, &x) in xs.iter().enumerate() {
        if k > 0 {
            let prev = xs[k - 1];
            let jump = x - prev;
            if jump > PI {
                offset -= 2.0 * PI;
            } else if jump < -PI {
                offset += 2.0 * PI;
            }
        }
        out.push(x + offset);
    }
    out
}

/// Largest deviation of `ys` from its least-squares line in `ts`.
fn line_fit_residual(ts: &[f64], ys: &[f64]) -> f64 {
    let n = ts.len() as f64;
    let tm = ts.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let sxy: f64 = ts.iter().zip(ys).map(|(t, y)| (t - tm) * (y - ym)).sum();
    let sxx: f64 = ts.iter().map(|t| (t - tm) * (t - tm)).sum();
    let slope = sxy / sxx;
    ts.iter()
        .zip(ys)
        .map(|(t, y)| (y - ym - slope * (t - tm)).abs())
        .fold(0.0, f64::max)
}

fn product_sphere_field() -> Outcome {
    let start = Instant::now();
    let fixed = FixedAngles {
        theta2: FRAC_PI_2,
        phi2: None,
    };
    let grid = field_grid(ModelId::TwoSpinProduct, &reference_spectrum(), fixed, (32, 64)).unwrap();
    let elapsed = start.elapsed();
    let mut theta_err: f64 = 0.0;
    let mut phi_err: f64 = 0.0;
    let mut phi_missing = 0;
    let mut missing = 0;
    for s in &grid.samples {
        match s.theta1_dot {
            Some(v) => theta_err = theta_err.max(v.abs()),
            None => missing += 1,
        }
        match s.phi1_dot {
            Some(v) => {
                let half = (0.5 * s.theta1).sin();
                phi_err = phi_err.max((v - (0.5 - half * half)).abs());
            }
            None => phi_missing += 1,
        }
    }
    let passed = missing == 0 && phi_missing == 0 && theta_err < 1e-12 && phi_err < 1e-10 && within(elapsed, 1.0);
    outcome(
        passed,
        format!(
            "max|theta1_dot| = {theta_err:.3e}, max phi1_dot error = {phi_err:.3e}, \
             {missing} missing theta1_dot, {phi_missing} missing phi1_dot, {:.3} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn disentangled_sphere_field() -> Outcome {
    let start = Instant::now();
    let fixed = FixedAngles {
        theta2: FRAC_PI_2,
        phi2: Some(FRAC_PI_2),
    };
    let grid = field_grid(ModelId::TwoSpinDisentangled, &reference_spectrum(), fixed, (32, 64)).unwrap();
    let elapsed = start.elapsed();
    let mut err: f64 = 0.0;
    let mut checked = 0;
    let mut bad = 0;
    for s in grid.samples.iter().filter(|s| s.theta1.sin() > 0.05) {
        checked += 1;
        let (t, f) = (s.theta1, s.phi1);
        let theta_ref = f.cos() * (0.5 * t.cos() - 3.0);
        let phi_ref = 0.25 * (9.0 * t.cos() - f.sin() * t.cos() * t.cos() / t.sin());
        match (s.flag, s.theta1_dot, s.phi1_dot) {
            (SampleFlag::Ok, Some(a), Some(b)) => err = err.max((a - theta_ref).abs()).max((b - phi_ref).abs()),
            _ => bad += 1,
        }
    }
    let passed = bad == 0 && checked > 0 && err < 1e-10 && within(elapsed, 1.0);
    outcome(
        passed,
        format!(
            "max error = {err:.3e} over {checked} samples ({bad} unusable), {:.3} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn omega_identity() -> Outcome {
    let cs = two_spin_product_constraints();
    let expected = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
    let mut r = rng(3);
    let mut err: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..1000 {
        let pt = random_interior_point(4, &mut r);
        match omega_matrix(&cs, &pt) {
            Ok(m) => err = err.max((m - &expected).amax()),
            Err(_) => failures += 1,
        }
    }
    outcome(
        failures == 0 && err < 1e-12,
        format!("max deviation = {err:.3e} over 1000 points ({failures} errors)"),
    )
}

/// Closed-form `q–p` block of `Λ` for the two-spin product model, built
/// directly from the actions.
fn lambda_block_oracle(pt: &PhasePoint) -> DMatrix<f64> {
    let p = pt.p();
    let p4 = pt.p_last();
    let rows = [p[0] - p4, p[0] + p[2], p[0] + p[1]];
    let cols = [1.0, -1.0, -1.0];
    DMatrix::from_fn(3, 3, |i, j| rows[i] * cols[j])
}

fn lambda_block() -> Outcome {
    let cs = two_spin_product_constraints();
    let mut r = rng(4);
    let mut err: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..1000 {
        let pt = random_interior_point(4, &mut r);
        match lambda_tensor(&cs, &pt) {
            Ok(l) => {
                let block = l.view((0, 3), (3, 3)).into_owned();
                err = err.max((block - lambda_block_oracle(&pt)).amax());
            }
            Err(_) => failures += 1,
        }
    }
    outcome(
        failures == 0 && err < 1e-12,
        format!("max deviation = {err:.3e} over 1000 points ({failures} errors)"),
    )
}

fn two_spin_velocity() -> Outcome {
    let cs = two_spin_product_constraints();
    let mut r = rng(5);
    let mut err: f64 = 0.0;
    let mut p_rate: f64 = 0.0;
    for k in 0..100 {
        let spec = if k % 2 == 0 {
            reference_spectrum()
        } else {
            generic_spectrum(4, 3.0, &mut r)
        };
        let pt = two_spin_surface_point(&mut r);
        let v = constrained_velocity(&cs, &pt, &spec).unwrap();
        let c = closed_form_velocity_ex1(&pt, &spec).unwrap();
        err = err.max((&v - &c).amax());
        p_rate = p_rate.max(v.rows(3, 3).amax());
    }
    outcome(
        err < 1e-10 && p_rate < 1e-13,
        format!("max deviation = {err:.3e}, max |p_dot| = {p_rate:.3e} over 100 points"),
    )
}

fn disentangled_velocity() -> Outcome {
    let cs = disentangled_constraints();
    let spec = reference_spectrum();
    let mut r = rng(6);
    let mut err: f64 = 0.0;
    for _ in 0..100 {
        let pt = disentangled_surface_point(&mut r, 1e-4);
        let v = constrained_velocity(&cs, &pt, &spec).unwrap();
        let c = closed_form_velocity_ex3(&pt, &spec).unwrap();
        err = err.max((&v - &c).amax());
    }
    outcome(err < 1e-8, format!("max deviation = {err:.3e} over 100 points"))
}

fn quasi_unitarity_run(model: ModelId, pt0: PhasePoint, spec: EnergySpectrum) -> (bool, String) {
    let cs = model.constraint_set(spec.n()).unwrap();
    let cfg = IntegratorConfig {
        t_end: 10.0,
        dt: 1e-3,
        ..Default::default()
    };
    let start = Instant::now();
    let traj = integrate(&cs, &spec, &pt0, &cfg).unwrap();
    let elapsed = start.elapsed();
    let drift = traj.action_drift();
    let m = pt0.levels() - 1;
    let fit = (0..m)
        .map(|i| {
            let qi: Vec<f64> = traj.points.iter().map(|x| x.q()[i]).collect();
            line_fit_residual(&traj.times, &unwrap_angles(&qi))
        })
        .fold(0.0, f64::max);
    let completed = traj.status.is_completed();
    let passed = completed && drift < 1e-8 && fit < 1e-6 && within(elapsed, 10.0);
    (
        passed,
        format!(
            "{model}: action drift = {drift:.3e}, q line-fit residual = {fit:.3e}, {}, {:.2} s",
            if completed { "completed" } else { "truncated" },
            elapsed.as_secs_f64()
        ),
    )
}

fn quasi_unitarity() -> Outcome {
    let mut r = rng(7);
    let two = quasi_unitarity_run(
        ModelId::TwoSpinProduct,
        two_spin_surface_point(&mut r),
        reference_spectrum(),
    );
    let three = quasi_unitarity_run(
        ModelId::ThreeSpinProduct,
        three_spin_surface_point(&mut r),
        generic_spectrum(8, 3.0, &mut r),
    );
    outcome(two.0 && three.0, format!("{}; {}", two.1, three.1))
}

fn velocity_gap(model: ModelId, pt: &PhasePoint, spec: &EnergySpectrum) -> f64 {
    let cs = model.constraint_set(spec.n()).unwrap();
    let v = constrained_velocity(&cs, pt, spec).unwrap();
    let u = canonical_omega(spec.n()) * hamiltonian_gradient(pt, spec).unwrap();
    (v - u).amax()
}

fn spectrum_condition_theorems() -> Outcome {
    let mut r = rng(8);
    let mut compatible_gap: f64 = 0.0;
    let mut generic_failures = 0;
    let mut generic_min_gap = f64::INFINITY;
    let mut generic_condition = 0;
    for model in [ModelId::TwoSpinProduct, ModelId::ThreeSpinProduct] {
        let n = model.required_levels().unwrap();
        for _ in 0..100 {
            let spec = product_compatible_spectrum(model, 2.0, &mut r);
            let pt = on_surface_point(model, &mut r);
            compatible_gap = compatible_gap.max(velocity_gap(model, &pt, &spec));
        }
        for _ in 0..100 {
            let spec = generic_spectrum(n, 2.0, &mut r);
            let pt = on_surface_point(model, &mut r);
            let gap = velocity_gap(model, &pt, &spec);
            if spectrum_condition(&spec, model).unwrap() {
                generic_condition += 1;
                if gap >= 1e-12 {
                    generic_failures += 1;
                }
            } else {
                generic_min_gap = generic_min_gap.min(gap);
                if gap <= 1e-8 {
                    generic_failures += 1;
                }
            }
        }
    }
    outcome(
        compatible_gap < 1e-12 && generic_failures == 0,
        format!(
            "compatible spectra: max gap = {compatible_gap:.3e}; generic spectra: min gap = {generic_min_gap:.3e}, \
             {generic_condition} satisfy the condition, {generic_failures} inconsistent"
        ),
    )
}

fn disentangled_run(projection: Projection) -> (Trajectory, f64) {
    let cs = disentangled_constraints();
    let spec = reference_spectrum();
    let pt0 = disentangled_surface_point(&mut rng(9), 1e-2);
    let cfg = IntegratorConfig {
        t_end: 5.0,
        dt: 1e-4,
        projection,
        ..Default::default()
    };
    let start = Instant::now();
    let traj = integrate(&cs, &spec, &pt0, &cfg).unwrap();
    (traj, start.elapsed().as_secs_f64())
}

fn conservation_and_tangency() -> Outcome {
    let (free, t_free) = disentangled_run(Projection::Off);
    let (proj, t_proj) = disentangled_run(Projection::Threshold(1e-11));
    let energy = free.energy_drift();
    let residual = free.max_residual();
    let projected = proj.max_residual();
    let completed = free.status.is_completed() && proj.status.is_completed();
    let passed = completed
        && energy < 1e-8
        && residual < 1e-6
        && projected < 1e-10
        && within(Duration::from_secs_f64(t_free + t_proj), 60.0);
    outcome(
        passed,
        format!(
            "projection off: |H - H0| = {energy:.3e}, max|Phi| = {residual:.3e}; \
             threshold projection: max|Phi| = {projected:.3e} ({} projections); {}; {:.2} s",
            proj.projections,
            if completed { "completed" } else { "truncated" },
            t_free + t_proj
        ),
    )
}

fn annihilation() -> Outcome {
    let mut r = rng(10);
    let mut parts = Vec::new();
    let mut passed = true;
    for (model, cs) in [
        (ModelId::TwoSpinProduct, two_spin_product_constraints()),
        (ModelId::ThreeSpinProduct, three_spin_product_constraints()),
        (ModelId::TwoSpinDisentangled, disentangled_constraints()),
    ] {
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let pt = on_surface_point(model, &mut r);
            worst = worst.max(annihilation_check(&cs, &pt).unwrap());
        }
        passed &= worst < 1e-10;
        parts.push(format!("{model} {worst:.3e}"));
    }
    outcome(passed, format!("max residual: {}", parts.join(", ")))
}

/// Endpoint error of RK4 against the exact two-spin solution: actions fixed,
/// angles advancing at the closed-form rates.
fn endpoint_error(dt: f64) -> f64 {
    let cs = two_spin_product_constraints();
    let spec = reference_spectrum();
    let pt0 = PhasePoint::new(vec![0.7, 0.2, 0.5], vec![0.36, 0.24, 0.24]).unwrap();
    let t_end = 10.0;
    let cfg = IntegratorConfig {
        t_end,
        dt,
        ..Default::default()
    };
    let traj = integrate(&cs, &spec, &pt0, &cfg).unwrap();
    let rate = closed_form_velocity_ex1(&pt0, &spec).unwrap();
    let end = traj.last();
    let exact_q: Vec<f64> = pt0.q().iter().enumerate().map(|(i, q)| q + rate[i] * t_end).collect();
    let dq = end
        .q()
        .iter()
        .zip(&exact_q)
        .map(|(a, b)| {
            let d = (a - b).rem_euclid(2.0 * PI);
            d.min(2.0 * PI - d)
        })
        .fold(0.0, f64::max);
    dq.max(max_abs_diff(end.p(), pt0.p()))
}

fn convergence_order() -> Outcome {
    let coarse = endpoint_error(1e-2);
    let fine = endpoint_error(5e-3);
    let ratio = coarse / fine;
    outcome(
        (8.0..=32.0).contains(&ratio),
        format!("error(dt=1e-2) = {coarse:.3e}, error(dt=5e-3) = {fine:.3e}, ratio = {ratio:.3}"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        (
            "two-spin product field on the sphere matches its closed form",
            product_sphere_field,
        ),
        (
            "disentangled field on the sphere matches its closed form",
            disentangled_sphere_field,
        ),
        (
            "two-spin product constraint bracket is the unit symplectic matrix",
            omega_identity,
        ),
        (
            "two-spin product correction tensor block matches its closed form",
            lambda_block,
        ),
        ("two-spin product velocity matches its closed form", two_spin_velocity),
        (
            "disentangled velocity matches its proposed closed form",
            disentangled_velocity,
        ),
        ("product-model flows are quasi-unitary", quasi_unitarity),
        (
            "spectrum condition decides whether constrained and free flows agree",
            spectrum_condition_theorems,
        ),
        (
            "disentangled flow conserves energy and stays on the surface",
            conservation_and_tangency,
        ),
        ("modified structure annihilates constraint gradients", annihilation),
        ("RK4 endpoint error shrinks at fourth order", convergence_order),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.passed {
            failed += 1;
        }
        println!(
            "[{}] {:>2}. {name}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            k + 1,
            o.detail
        );
    }
    println!(
        "{} of {} acceptance criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
