//! Eigenbasis and mode-expansion invariants, checked against hand
//! calculations and independent quadrature.

use skram::quadrature::GaussLegendre;
use skram::rng::NoiseStream;
use skram::spectral::{ModeField, PhaseState, SpectralBasis};

#[test]
fn eigenvalues_on_standard_interval() {
    // alpha_k = k^2 on [0, pi]
    let basis = SpectralBasis::standard(5).unwrap();
    assert!((basis.alpha(2) - 9.0).abs() < 1e-13);
    assert!((basis.alpha(0) - 1.0).abs() < 1e-14);
    assert!((basis.alpha(4) - 25.0).abs() < 1e-13);
}

#[test]
fn eigenvalue_scaling_with_interval_length() {
    // alpha_k(2L) = alpha_k(L) / 4, exactly as written
    let a = SpectralBasis::new(1.7, 6).unwrap();
    let b = SpectralBasis::new(3.4, 6).unwrap();
    for i in 0..6 {
        assert!((b.alpha(i) - a.alpha(i) / 4.0).abs() <= 1e-14 * a.alpha(i));
    }
}

#[test]
fn sobolev_norms_of_unit_modes() {
    let basis = SpectralBasis::standard(4).unwrap();
    let e2 = ModeField::unit_mode(&basis, 1, 1.0).unwrap(); // k = 2, alpha = 4
    assert!((e2.sobolev_norm(1.0) - 2.0).abs() < 1e-14);
    assert!((e2.sobolev_norm(-1.0) - 0.5).abs() < 1e-14);
    assert!((e2.sobolev_norm(0.0) - 1.0).abs() < 1e-14);
}

#[test]
fn pointwise_evaluation_of_first_mode() {
    // e_1(pi/2) = sqrt(2/pi) sin(pi/2) = sqrt(2/pi)
    let basis = SpectralBasis::standard(3).unwrap();
    let e1 = ModeField::unit_mode(&basis, 0, 1.0).unwrap();
    let expect = (2.0 / std::f64::consts::PI).sqrt();
    assert!((e1.evaluate(std::f64::consts::PI / 2.0) - expect).abs() < 1e-14);
    // Dirichlet boundary
    assert!(e1.evaluate(0.0).abs() < 1e-14);
    assert!(e1.evaluate(std::f64::consts::PI).abs() < 1e-13);
}

#[test]
fn orthonormality_under_gauss_quadrature() {
    let basis = SpectralBasis::new(2.5, 6).unwrap();
    let rule = GaussLegendre::new(200);
    for j in 0..6 {
        for k in 0..6 {
            let val = rule.integrate(0.0, 2.5, |x| basis.eigenfunction(j, x) * basis.eigenfunction(k, x));
            let expect = if j == k { 1.0 } else { 0.0 };
            assert!(
                (val - expect).abs() < 1e-10,
                "modes {j},{k}: got {val}, want {expect}"
            );
        }
    }
}

#[test]
fn parseval_identity_against_quadrature() {
    let basis = SpectralBasis::standard(8).unwrap();
    let mut stream = NoiseStream::new(17, 0);
    let u = ModeField::from_coeffs(&basis, stream.normals(8)).unwrap();
    let v = ModeField::from_coeffs(&basis, stream.normals(8)).unwrap();
    let coeff_inner = u.inner(&v, 0.0).unwrap();
    let rule = GaussLegendre::new(400);
    let quad_inner =
        rule.integrate(0.0, std::f64::consts::PI, |x| u.evaluate(x) * v.evaluate(x));
    assert!((coeff_inner - quad_inner).abs() < 1e-8);
}

#[test]
fn phase_space_norm_combines_position_and_velocity_orders() {
    let basis = SpectralBasis::standard(4).unwrap();
    // z = (e_2, 3 e_1): |z|^2 in H^1 x L^2 = alpha_2 + 9 = 13
    let z = PhaseState::new(
        ModeField::unit_mode(&basis, 1, 1.0).unwrap(),
        ModeField::unit_mode(&basis, 0, 3.0).unwrap(),
    )
    .unwrap();
    assert!((z.phase_norm_sq(1.0) - 13.0).abs() < 1e-13);
    // in L^2 x H^{-1}: 1 + 9 / alpha_1 = 10
    assert!((z.phase_norm_sq(0.0) - 10.0).abs() < 1e-13);
}

#[test]
fn synthesis_then_projection_recovers_coefficients() {
    // project u(x) onto the basis by quadrature and compare to the stored
    // coefficients: the collocation route used by Nemytskii terms
    let basis = SpectralBasis::standard(6).unwrap();
    let mut stream = NoiseStream::new(23, 1);
    let u = ModeField::from_coeffs(&basis, stream.normals(6)).unwrap();
    let rule = GaussLegendre::new(64);
    for j in 0..6 {
        let proj = rule.integrate(0.0, std::f64::consts::PI, |x| {
            u.evaluate(x) * basis.eigenfunction(j, x)
        });
        assert!((proj - u.coeffs()[j]).abs() < 1e-12);
    }
}
