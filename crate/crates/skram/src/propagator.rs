//! Exact per-mode propagators.
//!
//! On each eigenmode the damped second-order dynamics with mass `mu`,
//!
//! ```text
//! f' = g,      mu g' = -alpha f - g,
//! ```
//!
//! has the closed-form flow matrix (a = 1/(2 mu), disc = 1 - 4 alpha mu)
//!
//! ```text
//! disc > 0:  gamma = sqrt(disc)/(2 mu)
//!            f(t) = e^{-at} [ (cosh + (a/gamma) sinh)(gamma t) u + sinh(gamma t)/gamma v ]
//!            g(t) = e^{-at} [ -(alpha/mu) sinh(gamma t)/gamma u + (cosh - (a/gamma) sinh)(gamma t) v ]
//! disc < 0:  same with cos/sin and omega = sqrt(-disc)/(2 mu)
//! disc = 0:  f(t) = e^{-at} [ (1 + a t) u + t v ],
//!            g(t) = e^{-at} [ -(t/(4 mu^2)) u + (1 - a t) v ]
//! ```
//!
//! All branches are evaluated in overflow-safe form: the overdamped case
//! combines exponents as e^{(gamma - a)t} and e^{-(gamma + a)t} (both
//! decaying for t >= 0), and near-critical sinh/sin ratios switch to series.
//! The determinant of the flow matrix is exactly e^{-t/mu} (Liouville).
//!
//! The magnetic variant couples two components through the rotation
//! J0 = [[0, 1], [-1, 0]] regularized as J_eps = J0 + eps I; packing the
//! pair as w = u1 + i u2 turns J_eps into multiplication by (eps - i) and
//! each mode into the complex-coefficient oscillator
//! `mu w'' + (eps - i) w' + alpha w = 0`.

use num_complex::Complex64;

use crate::error::{Result, SkramError};
use crate::spectral::{ModeField, PhaseState};

/// Which spectral regime a mode/mass pair falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DampingBranch {
    Overdamped,
    Critical,
    Underdamped,
}

/// Entries of the 2x2 mode flow matrix: (f, g)(t) = M (u, v).
#[derive(Debug, Clone, Copy)]
pub struct WaveModeCoeffs {
    pub f_u: f64,
    pub f_v: f64,
    pub g_u: f64,
    pub g_v: f64,
    pub branch: DampingBranch,
}

impl WaveModeCoeffs {
    pub fn apply(&self, u: f64, v: f64) -> (f64, f64) {
        (self.f_u * u + self.f_v * v, self.g_u * u + self.g_v * v)
    }

    pub fn det(&self) -> f64 {
        self.f_u * self.g_v - self.f_v * self.g_u
    }
}

/// sinh(x)/x with series for small |x|.
fn sinhc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 + x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sinh() / x
    }
}

/// sin(x)/x with series for small |x|.
fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// Threshold on |1 - 4 alpha mu| below which the critical branch is used.
pub const CRITICAL_SWITCH: f64 = 1e-9;

/// Exact mode flow over time `t` (any sign; backward flow may overflow to
/// infinity, which is the honest answer for a damped system run in reverse).
pub fn wave_mode_propagator(mu: f64, alpha: f64, t: f64) -> Result<WaveModeCoeffs> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(SkramError::Config(format!("mass must be positive, got {mu}")));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(SkramError::Config(format!("eigenvalue must be positive, got {alpha}")));
    }
    let a = 1.0 / (2.0 * mu);
    let disc = 1.0 - 4.0 * alpha * mu;
    let coeffs = if disc.abs() < CRITICAL_SWITCH {
        let e = (-a * t).exp();
        WaveModeCoeffs {
            f_u: e * (1.0 + a * t),
            f_v: e * t,
            g_u: -e * t / (4.0 * mu * mu),
            g_v: e * (1.0 - a * t),
            branch: DampingBranch::Critical,
        }
    } else if disc > 0.0 {
        let gamma = disc.sqrt() * a;
        // e^{-at} cosh(gamma t) and e^{-at} sinh(gamma t) via one-sided exponents
        let ep = ((gamma - a) * t).exp();
        let eq = (-(gamma + a) * t).exp();
        let ec = 0.5 * (ep + eq);
        let esg = if (gamma * t).abs() < 1e-4 {
            (-a * t).exp() * t * sinhc(gamma * t)
        } else {
            0.5 * (ep - eq) / gamma
        };
        WaveModeCoeffs {
            f_u: ec + a * esg,
            f_v: esg,
            g_u: -(alpha / mu) * esg,
            g_v: ec - a * esg,
            branch: DampingBranch::Overdamped,
        }
    } else {
        let omega = (-disc).sqrt() * a;
        let e = (-a * t).exp();
        let c = (omega * t).cos();
        let ssin = t * sinc(omega * t); // sin(omega t)/omega
        WaveModeCoeffs {
            f_u: e * (c + a * ssin),
            f_v: e * ssin,
            g_u: -(alpha / mu) * e * ssin,
            g_v: e * (c - a * ssin),
            branch: DampingBranch::Underdamped,
        }
    };
    Ok(coeffs)
}

/// Entrywise time integral of the flow matrix, int_0^t M(s) ds.
///
/// Integrating the mode ODE once gives these algebraically in terms of the
/// endpoint flow — no quadrature and no extra branch analysis:
///
/// ```text
/// int f_u = (1 - f_u(t) - mu g_u(t)) / alpha        int f_v = (mu (1 - g_v(t)) - f_v(t)) / alpha
/// int g_u = f_u(t) - 1                              int g_v = f_v(t)
/// ```
pub fn wave_mode_propagator_integral(mu: f64, alpha: f64, t: f64) -> Result<WaveModeCoeffs> {
    let m = wave_mode_propagator(mu, alpha, t)?;
    Ok(WaveModeCoeffs {
        f_u: (1.0 - m.f_u - mu * m.g_u) / alpha,
        f_v: (mu * (1.0 - m.g_v) - m.f_v) / alpha,
        g_u: m.f_u - 1.0,
        g_v: m.f_v,
        branch: m.branch,
    })
}

/// Apply the full linear flow S_mu(t) to a phase-space point, mode by mode.
pub fn wave_group_apply(mu: f64, t: f64, z: &PhaseState) -> Result<PhaseState> {
    let basis = z.basis().clone();
    let mut out = PhaseState::zeros(&basis);
    for i in 0..basis.n_modes() {
        let m = wave_mode_propagator(mu, basis.alpha(i), t)?;
        let (f, g) = m.apply(z.position.coeffs()[i], z.velocity.coeffs()[i]);
        out.position.coeffs_mut()[i] = f;
        out.velocity.coeffs_mut()[i] = g;
    }
    Ok(out)
}

/// Apply the adjoint flow S_mu(t)^* with respect to the H x H^{-1} pairing
/// (position paired with weight alpha, velocity with weight 1; equivalently
/// any H^delta x H^{delta-1} product, where the weight ratio is alpha).
///
/// Per mode the adjoint matrix is [[f_u, -f_v/mu], [-mu g_u, g_v]]; it
/// coincides with conjugating the flow by the reflection (u, v) -> (u, -v/mu)
/// componentwise.
pub fn wave_group_adjoint_apply(mu: f64, t: f64, z: &PhaseState) -> Result<PhaseState> {
    let basis = z.basis().clone();
    let mut out = PhaseState::zeros(&basis);
    for i in 0..basis.n_modes() {
        let m = wave_mode_propagator(mu, basis.alpha(i), t)?;
        let u = z.position.coeffs()[i];
        let v = z.velocity.coeffs()[i];
        out.position.coeffs_mut()[i] = m.f_u * u - m.f_v / mu * v;
        out.velocity.coeffs_mut()[i] = -mu * m.g_u * u + m.g_v * v;
    }
    Ok(out)
}

/// Heat-semigroup mode factor e^{-alpha t}.
pub fn heat_mode_decay(alpha: f64, t: f64) -> f64 {
    (-alpha * t).exp()
}

/// Apply the heat semigroup to a field mode by mode.
pub fn heat_apply(t: f64, u: &ModeField) -> ModeField {
    let basis = u.basis().clone();
    let mut out = ModeField::zeros(&basis);
    for i in 0..basis.n_modes() {
        out.coeffs_mut()[i] = u.coeffs()[i] * heat_mode_decay(basis.alpha(i), t);
    }
    out
}

/// Entries of the complex 2x2 magnetic mode flow: (w, w')(t) = M (w0, v0).
#[derive(Debug, Clone, Copy)]
pub struct MagneticModeCoeffs {
    pub w_w: Complex64,
    pub w_v: Complex64,
    pub v_w: Complex64,
    pub v_v: Complex64,
}

impl MagneticModeCoeffs {
    pub fn apply(&self, w: Complex64, v: Complex64) -> (Complex64, Complex64) {
        (self.w_w * w + self.w_v * v, self.v_w * w + self.v_v * v)
    }
}

/// Exact flow of `mu w'' + (eps - i) w' + alpha w = 0` over time `t >= 0`.
///
/// Characteristic roots r = (-(eps - i) +/- sqrt((eps - i)^2 - 4 mu alpha)) / (2 mu);
/// for eps = 0 they are purely imaginary (energy-conserving rotation), for
/// eps > 0 both have negative real part. The degenerate double-root branch
/// (|discriminant| < 1e-9) is kept for completeness even though it is
/// unreachable for eps >= 0, alpha > 0.
pub fn magnetic_mode_propagator(
    mu: f64,
    eps: f64,
    alpha: f64,
    t: f64,
) -> Result<MagneticModeCoeffs> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(SkramError::Config(format!("mass must be positive, got {mu}")));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(SkramError::Config(format!("eigenvalue must be positive, got {alpha}")));
    }
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(SkramError::Config(format!("friction must be >= 0, got {eps}")));
    }
    let b = Complex64::new(eps, -1.0);
    let disc = b * b - Complex64::new(4.0 * mu * alpha, 0.0);
    if disc.norm() < 1e-9 {
        let r = -b / (2.0 * mu);
        let e = (r * t).exp();
        return Ok(MagneticModeCoeffs {
            w_w: e * (Complex64::new(1.0, 0.0) - r * t),
            w_v: e * t,
            v_w: -e * r * r * t,
            v_v: e * (Complex64::new(1.0, 0.0) + r * t),
        });
    }
    let sq = disc.sqrt();
    let r_plus = (-b + sq) / (2.0 * mu);
    let r_minus = (-b - sq) / (2.0 * mu);
    let d = r_plus - r_minus;
    let e_plus = (r_plus * t).exp();
    let e_minus = (r_minus * t).exp();
    let w_v = (e_plus - e_minus) / d;
    Ok(MagneticModeCoeffs {
        w_w: (r_plus * e_minus - r_minus * e_plus) / d,
        w_v,
        v_w: -(alpha / mu) * w_v,
        v_v: (r_plus * e_plus - r_minus * e_minus) / d,
    })
}

/// Apply the magnetic flow to a complex phase-space point, mode by mode.
pub fn magnetic_group_apply(
    mu: f64,
    eps: f64,
    t: f64,
    z: &PhaseState<Complex64>,
) -> Result<PhaseState<Complex64>> {
    let basis = z.basis().clone();
    let mut out = PhaseState::zeros(&basis);
    for i in 0..basis.n_modes() {
        let m = magnetic_mode_propagator(mu, eps, basis.alpha(i), t)?;
        let (w, v) = m.apply(z.position.coeffs()[i], z.velocity.coeffs()[i]);
        out.position.coeffs_mut()[i] = w;
        out.velocity.coeffs_mut()[i] = v;
    }
    Ok(out)
}

/// Mode factor of the rotated first-order limit system
/// `J_eps u' = Delta u + ...`, i.e. `u' = -alpha J_eps^{-1} u` per mode:
/// exp(-alpha (eps + i) t / (1 + eps^2)).
///
/// Its modulus is e^{-eps alpha t / (1 + eps^2)}; at eps = 0 the factor is a
/// pure rotation e^{-i alpha t} (an L^2 isometry).
pub fn rotated_heat_mode_factor(eps: f64, alpha: f64, t: f64) -> Complex64 {
    let scale = 1.0 + eps * eps;
    (Complex64::new(-eps, -1.0) * (alpha * t / scale)).exp()
}
