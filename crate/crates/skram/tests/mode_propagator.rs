//! Exact mode flows versus independent integrators and structural
//! invariants (group law, Liouville determinant, adjoint duality, energy
//! balance).

use num_complex::Complex64;
use skram::propagator::{
    heat_mode_decay, magnetic_group_apply, magnetic_mode_propagator, rotated_heat_mode_factor,
    wave_group_adjoint_apply, wave_group_apply, wave_mode_propagator, DampingBranch,
    MagneticModeCoeffs, WaveModeCoeffs,
};
use skram::quadrature::integrate_to_tol;
use skram::rng::NoiseStream;
use skram::spectral::{ModeField, PhaseState, SpectralBasis};

/// Independent check: classical RK4 on f' = g, g' = -(alpha f + g)/mu.
fn rk4_wave(mu: f64, alpha: f64, t: f64, u0: f64, v0: f64, n_steps: usize) -> (f64, f64) {
    let h = t / n_steps as f64;
    let rhs = |f: f64, g: f64| (g, -(alpha * f + g) / mu);
    let (mut f, mut g) = (u0, v0);
    for _ in 0..n_steps {
        let (k1f, k1g) = rhs(f, g);
        let (k2f, k2g) = rhs(f + 0.5 * h * k1f, g + 0.5 * h * k1g);
        let (k3f, k3g) = rhs(f + 0.5 * h * k2f, g + 0.5 * h * k2g);
        let (k4f, k4g) = rhs(f + h * k3f, g + h * k3g);
        f += h / 6.0 * (k1f + 2.0 * k2f + 2.0 * k3f + k4f);
        g += h / 6.0 * (k1g + 2.0 * k2g + 2.0 * k3g + k4g);
    }
    (f, g)
}

/// RK4 for the complex magnetic mode w' = v, v' = -(alpha w + (eps - i) v)/mu.
fn rk4_magnetic(
    mu: f64,
    eps: f64,
    alpha: f64,
    t: f64,
    w0: Complex64,
    v0: Complex64,
    n_steps: usize,
) -> (Complex64, Complex64) {
    let h = t / n_steps as f64;
    let b = Complex64::new(eps, -1.0);
    let rhs = |w: Complex64, v: Complex64| (v, -(w * alpha + b * v) / mu);
    let (mut w, mut v) = (w0, v0);
    for _ in 0..n_steps {
        let (k1w, k1v) = rhs(w, v);
        let (k2w, k2v) = rhs(w + k1w * (0.5 * h), v + k1v * (0.5 * h));
        let (k3w, k3v) = rhs(w + k2w * (0.5 * h), v + k2v * (0.5 * h));
        let (k4w, k4v) = rhs(w + k3w * h, v + k3v * h);
        w += (k1w + k2w * 2.0 + k3w * 2.0 + k4w) * (h / 6.0);
        v += (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0);
    }
    (w, v)
}

fn mat_mul(a: &WaveModeCoeffs, b: &WaveModeCoeffs) -> [f64; 4] {
    [
        a.f_u * b.f_u + a.f_v * b.g_u,
        a.f_u * b.f_v + a.f_v * b.g_v,
        a.g_u * b.f_u + a.g_v * b.g_u,
        a.g_u * b.f_v + a.g_v * b.g_v,
    ]
}

#[test]
fn critical_branch_closed_form() {
    // 4 alpha mu = 1 with mu = 1/2, alpha = 1/2; a = 1; t = 2
    let m = wave_mode_propagator(0.5, 0.5, 2.0).unwrap();
    assert_eq!(m.branch, DampingBranch::Critical);
    let e2 = (-2.0_f64).exp(); // 0.13533528...
    assert!((e2 - 0.135_335_3).abs() < 1e-7);
    assert!((m.f_u - 3.0 * e2).abs() < 1e-14);
    assert!((m.f_v - 2.0 * e2).abs() < 1e-14);
    assert!((m.g_u - (-2.0 * e2)).abs() < 1e-14);
    assert!((m.g_v - (-e2)).abs() < 1e-14);
}

#[test]
fn matches_rk4_reference_in_all_branches() {
    // (mu, alpha, t): underdamped, underdamped stiffer, overdamped
    for &(mu, alpha, t) in &[(0.5, 1.0, 1.2), (0.1, 4.0, 0.8), (2.0, 0.04, 3.0)] {
        let m = wave_mode_propagator(mu, alpha, t).unwrap();
        let n = (t / 1e-5).round() as usize;
        let (fu, gu) = rk4_wave(mu, alpha, t, 1.0, 0.0, n);
        let (fv, gv) = rk4_wave(mu, alpha, t, 0.0, 1.0, n);
        assert!((m.f_u - fu).abs() < 1e-8, "f_u at ({mu},{alpha},{t})");
        assert!((m.g_u - gu).abs() < 1e-8, "g_u at ({mu},{alpha},{t})");
        assert!((m.f_v - fv).abs() < 1e-8, "f_v at ({mu},{alpha},{t})");
        assert!((m.g_v - gv).abs() < 1e-8, "g_v at ({mu},{alpha},{t})");
    }
}

#[test]
fn branches_agree_across_the_critical_switch() {
    // alpha a hair away from 1/(4 mu) on both sides vs exactly critical
    let mu = 0.5;
    let t = 1.7;
    let ac = 1.0 / (4.0 * mu);
    let lo = wave_mode_propagator(mu, ac * (1.0 - 1e-7), t).unwrap();
    let hi = wave_mode_propagator(mu, ac * (1.0 + 1e-7), t).unwrap();
    let mid = wave_mode_propagator(mu, ac, t).unwrap();
    assert_eq!(lo.branch, DampingBranch::Overdamped);
    assert_eq!(hi.branch, DampingBranch::Underdamped);
    assert_eq!(mid.branch, DampingBranch::Critical);
    for (a, b) in [
        (lo.f_u, mid.f_u),
        (lo.f_v, mid.f_v),
        (lo.g_u, mid.g_u),
        (lo.g_v, mid.g_v),
        (hi.f_u, mid.f_u),
        (hi.f_v, mid.f_v),
        (hi.g_u, mid.g_u),
        (hi.g_v, mid.g_v),
    ] {
        assert!((a - b).abs() < 1e-5, "branch spread {a} vs {b}");
    }
}

#[test]
fn group_law_composition() {
    for &(mu, alpha) in &[(0.5, 1.0), (0.5, 0.5), (2.0, 0.04), (0.05, 9.0)] {
        let (t, s) = (0.4, 0.9);
        let mt = wave_mode_propagator(mu, alpha, t).unwrap();
        let ms = wave_mode_propagator(mu, alpha, s).unwrap();
        let mts = wave_mode_propagator(mu, alpha, t + s).unwrap();
        let prod = mat_mul(&mt, &ms);
        for (got, want) in prod.iter().zip([mts.f_u, mts.f_v, mts.g_u, mts.g_v]) {
            assert!((got - want).abs() < 1e-10, "group law at ({mu},{alpha})");
        }
    }
}

#[test]
fn liouville_determinant() {
    // det S_mu(t) = e^{-t/mu} in every branch
    for &(mu, alpha, t) in &[(0.5, 1.0, 2.0), (0.5, 0.5, 1.3), (0.5, 0.1, 2.0), (0.2, 9.0, 0.7)] {
        let m = wave_mode_propagator(mu, alpha, t).unwrap();
        let want = (-t / mu).exp();
        assert!(
            (m.det() - want).abs() <= 1e-10 * want,
            "det at ({mu},{alpha},{t}): {} vs {want}",
            m.det()
        );
    }
}

#[test]
fn long_time_decay_and_stiff_mode_safety() {
    let m = wave_mode_propagator(0.5, 1.0, 50.0).unwrap();
    for v in [m.f_u, m.f_v, m.g_u, m.g_v] {
        assert!(v.abs() < 1e-8);
        assert!(v.is_finite());
    }
    // extremely stiff: mu = 1e-8, alpha = 2500, t = 100 must not overflow
    let m = wave_mode_propagator(1e-8, 2500.0, 100.0).unwrap();
    for v in [m.f_u, m.f_v, m.g_u, m.g_v] {
        assert!(v.is_finite());
        assert!(v.abs() < 1.0 + 1e-12);
    }
}

#[test]
fn adjoint_duality_in_weighted_phase_pairing() {
    // <S(t) z, w> = <z, S*(t) w> in H^delta x H^{delta-1} (weight ratio alpha)
    let basis = SpectralBasis::standard(5).unwrap();
    let mut stream = NoiseStream::new(5, 0);
    let (mu, t) = (0.3, 0.9);
    for delta in [0.0, 1.0] {
        let z = PhaseState::new(
            ModeField::from_coeffs(&basis, stream.normals(5)).unwrap(),
            ModeField::from_coeffs(&basis, stream.normals(5)).unwrap(),
        )
        .unwrap();
        let w = PhaseState::new(
            ModeField::from_coeffs(&basis, stream.normals(5)).unwrap(),
            ModeField::from_coeffs(&basis, stream.normals(5)).unwrap(),
        )
        .unwrap();
        let lhs = wave_group_apply(mu, t, &z).unwrap().phase_inner(&w, delta).unwrap();
        let rhs = z.phase_inner(&wave_group_adjoint_apply(mu, t, &w).unwrap(), delta).unwrap();
        assert!(
            (lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()),
            "duality at delta {delta}: {lhs} vs {rhs}"
        );
    }
}

#[test]
fn adjoint_generator_from_small_time_flow() {
    // (S*(dt) z - z)/dt -> A* z = (-v/mu, alpha u - v/mu) per mode
    let basis = SpectralBasis::standard(3).unwrap();
    let mu = 0.4;
    let dt = 1e-6;
    let z = PhaseState::new(
        ModeField::from_coeffs(&basis, vec![0.7, -0.2, 0.4]).unwrap(),
        ModeField::from_coeffs(&basis, vec![-0.3, 0.5, 0.1]).unwrap(),
    )
    .unwrap();
    let fz = wave_group_adjoint_apply(mu, dt, &z).unwrap();
    for i in 0..3 {
        let (u, v) = (z.position.coeffs()[i], z.velocity.coeffs()[i]);
        let du = (fz.position.coeffs()[i] - u) / dt;
        let dv = (fz.velocity.coeffs()[i] - v) / dt;
        assert!((du - (-v / mu)).abs() < 1e-4 * (1.0 + (v / mu).abs()));
        assert!((dv - (basis.alpha(i) * u - v / mu)).abs() < 1e-4);
    }
}

#[test]
fn velocity_kernel_energy_is_bounded_by_mass_squared_over_alpha() {
    // int_0^t f_v(s)^2 ds <= mu^2/(2 alpha), with equality as t -> infinity
    for &(mu, alpha) in &[(0.5, 1.0), (0.1, 4.0), (0.02, 25.0), (1.0, 0.25)] {
        let bound = mu * mu / (2.0 * alpha);
        let at_5 = integrate_to_tol(
            0.0,
            5.0,
            |s| wave_mode_propagator(mu, alpha, s).unwrap().f_v.powi(2),
            1e-10,
        )
        .unwrap();
        assert!(at_5 <= bound * (1.0 + 1e-9), "({mu},{alpha}): {at_5} > {bound}");
        let t_long = 200.0 * mu.max(1.0 / alpha);
        let at_long = integrate_to_tol(
            0.0,
            t_long,
            |s| wave_mode_propagator(mu, alpha, s).unwrap().f_v.powi(2),
            1e-10,
        )
        .unwrap();
        assert!((at_long - bound).abs() < 1e-6 * bound, "saturation at ({mu},{alpha})");
    }
}

#[test]
fn magnetic_flow_matches_rk4_reference_grid() {
    let w0 = Complex64::new(0.8, -0.3);
    let v0 = Complex64::new(-0.1, 0.6);
    for &mu in &[0.1, 0.5] {
        for &eps in &[0.0, 0.2] {
            for &alpha in &[1.0, 4.0] {
                for &t in &[0.5, 5.0] {
                    let m = magnetic_mode_propagator(mu, eps, alpha, t).unwrap();
                    let (w, v) = m.apply(w0, v0);
                    let n = (t / 1e-5).round() as usize;
                    let (wr, vr) = rk4_magnetic(mu, eps, alpha, t, w0, v0, n);
                    assert!(
                        (w - wr).norm() < 1e-8,
                        "w at (mu={mu}, eps={eps}, alpha={alpha}, t={t}): {w} vs {wr}"
                    );
                    assert!(
                        (v - vr).norm() < 1e-8,
                        "v at (mu={mu}, eps={eps}, alpha={alpha}, t={t})"
                    );
                }
            }
        }
    }
}

#[test]
fn magnetic_energy_balance() {
    // mu |w'|^2 + alpha |w|^2 is conserved at eps = 0 and dissipated at rate
    // 2 eps int |w'|^2 for eps > 0
    let (mu, alpha) = (0.3, 2.0);
    let w0 = Complex64::new(1.0, 0.5);
    let v0 = Complex64::new(-0.2, 0.4);
    let energy = |w: Complex64, v: Complex64| mu * v.norm_sqr() + alpha * w.norm_sqr();
    let e0 = energy(w0, v0);
    for &t in &[0.3, 1.1, 2.9, 7.0] {
        let m = magnetic_mode_propagator(mu, 0.0, alpha, t).unwrap();
        let (w, v) = m.apply(w0, v0);
        assert!(
            (energy(w, v) - e0).abs() <= 1e-10 * e0,
            "conservation violated at t = {t}"
        );
    }
    let eps = 0.25;
    let t = 1.4;
    let m = magnetic_mode_propagator(mu, eps, alpha, t).unwrap();
    let (w, v) = m.apply(w0, v0);
    let dissipated = integrate_to_tol(
        0.0,
        t,
        |s| {
            let ms = magnetic_mode_propagator(mu, eps, alpha, s).unwrap();
            let (_, vs) = ms.apply(w0, v0);
            vs.norm_sqr()
        },
        1e-10,
    )
    .unwrap();
    assert!(
        (energy(w, v) + 2.0 * eps * dissipated - e0).abs() <= 1e-8 * e0,
        "dissipation balance"
    );
}

#[test]
fn magnetic_liouville_determinant() {
    // det = e^{-(eps - i) t / mu}
    let (mu, eps, alpha, t) = (0.3, 0.2, 2.0, 1.1);
    let m: MagneticModeCoeffs = magnetic_mode_propagator(mu, eps, alpha, t).unwrap();
    let det = m.w_w * m.v_v - m.w_v * m.v_w;
    let want = (-Complex64::new(eps, -1.0) * t / mu).exp();
    assert!((det - want).norm() < 1e-10 * want.norm());
}

#[test]
fn magnetic_group_apply_composes() {
    let basis = SpectralBasis::standard(3).unwrap();
    let z = PhaseState::new(
        ModeField::from_coeffs(
            &basis,
            vec![Complex64::new(0.5, 0.1), Complex64::new(-0.2, 0.3), Complex64::new(0.0, 0.7)],
        )
        .unwrap(),
        ModeField::from_coeffs(
            &basis,
            vec![Complex64::new(0.1, -0.4), Complex64::new(0.6, 0.0), Complex64::new(-0.3, 0.2)],
        )
        .unwrap(),
    )
    .unwrap();
    let (mu, eps) = (0.4, 0.15);
    let once = magnetic_group_apply(mu, eps, 1.3, &z).unwrap();
    let twice = magnetic_group_apply(mu, eps, 0.6, &magnetic_group_apply(mu, eps, 0.7, &z).unwrap())
        .unwrap();
    for i in 0..3 {
        assert!((once.position.coeffs()[i] - twice.position.coeffs()[i]).norm() < 1e-12);
        assert!((once.velocity.coeffs()[i] - twice.velocity.coeffs()[i]).norm() < 1e-12);
    }
}

#[test]
fn rotated_heat_factor_modulus_and_isometry() {
    // |factor| = e^{-eps alpha t/(1+eps^2)}: at eps = 1, alpha = 1, t = 1 -> e^{-1/2}
    let f = rotated_heat_mode_factor(1.0, 1.0, 1.0);
    assert!((f.norm() - (-0.5_f64).exp()).abs() < 1e-14);
    assert!(((-0.5_f64).exp() - 0.606_530_7).abs() < 1e-7);
    // eps = 0: pure rotation, an isometry, with phase -alpha t
    let f0 = rotated_heat_mode_factor(0.0, 3.0, 0.7);
    assert!((f0.norm() - 1.0).abs() < 1e-15);
    assert!((f0 - (Complex64::new(0.0, -2.1)).exp()).norm() < 1e-14);
}

#[test]
fn heat_decay_factor() {
    assert!((heat_mode_decay(2.0, 0.5) - (-1.0_f64).exp()).abs() < 1e-15);
    // semigroup property
    let a = heat_mode_decay(3.0, 0.4) * heat_mode_decay(3.0, 0.8);
    assert!((a - heat_mode_decay(3.0, 1.2)).abs() < 1e-15);
}
