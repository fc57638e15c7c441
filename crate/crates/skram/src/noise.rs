//! Diagonal noise covariances, summability flags, and exact step sampling.
//!
//! The driving noise is white in time with a covariance operator Q that is
//! diagonal in the eigenbasis: Q e_k = lambda_k e_k with
//!
//! ```text
//! lambda_k = c                      ("white")
//! lambda_k = c alpha_k^{-beta}      ("power_law")
//! ```
//!
//! Because the linear dynamics are solved exactly per mode, the noise felt by
//! one exact step of length h is a Gaussian vector whose covariance is a
//! convolution integral of the flow against the forcing direction. For the
//! damped wave mode the step covariance is
//!
//! ```text
//! Sigma(h) = (lambda/mu)^2 int_0^h Phi(s) e2 e2^T Phi(s)^T ds,
//! e2 = (0,1)^T,  Phi = mode flow matrix,
//! ```
//!
//! with stationary limit diag(lambda^2/(2 alpha), lambda^2/(2 mu)); the heat
//! mode has the closed form lambda^2 (1 - e^{-2 alpha h})/(2 alpha). Joint
//! versions couple a wave step, the matched heat step, and the raw Brownian
//! increment *driven by the same Brownian path*, which is what turns the
//! small-mass limit into a pathwise statement rather than one in law.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SkramError};
use crate::propagator::{
    magnetic_mode_propagator, wave_mode_propagator, wave_mode_propagator_integral,
};
use crate::quadrature::integrate_vec_to_tol;
use crate::rng::NoiseStream;
use crate::spectral::SpectralBasis;

const STEP_COV_REL_TOL: f64 = 1e-10;

/// Functional form of the diagonal covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    /// lambda_k = c for every mode (space-time white noise when c = 1).
    White,
    /// lambda_k = c alpha_k^{-beta}.
    PowerLaw,
}

/// Serializable description of Q.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    pub kind: CovarianceKind,
    pub c: f64,
    #[serde(default)]
    pub beta: f64,
    /// Spatial dimension used by the summability flags (the simulated domain
    /// is an interval, d = 1; higher d is accepted for flag reporting only).
    #[serde(default = "default_dim")]
    pub d: u32,
}

fn default_dim() -> u32 {
    1
}

impl CovarianceSpec {
    pub fn white(c: f64) -> Self {
        CovarianceSpec { kind: CovarianceKind::White, c, beta: 0.0, d: 1 }
    }

    pub fn power_law(c: f64, beta: f64) -> Self {
        CovarianceSpec { kind: CovarianceKind::PowerLaw, c, beta, d: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(SkramError::Config(format!(
                "covariance amplitude c must be positive, got {}",
                self.c
            )));
        }
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(SkramError::Config(format!(
                "covariance exponent beta must be >= 0, got {}",
                self.beta
            )));
        }
        if self.kind == CovarianceKind::White && self.beta != 0.0 {
            return Err(SkramError::Config(
                "white covariance requires beta = 0".into(),
            ));
        }
        if !(1..=3).contains(&self.d) {
            return Err(SkramError::Config(format!(
                "dimension d must be 1, 2 or 3, got {}",
                self.d
            )));
        }
        Ok(())
    }

    /// Mode amplitude lambda for eigenvalue alpha.
    pub fn lambda(&self, alpha: f64) -> f64 {
        match self.kind {
            CovarianceKind::White => self.c,
            CovarianceKind::PowerLaw => self.c * alpha.powf(-self.beta),
        }
    }

    /// lambda_k for every mode of a basis.
    pub fn lambdas(&self, basis: &SpectralBasis) -> Vec<f64> {
        basis.alphas().iter().map(|&a| self.lambda(a)).collect()
    }

    /// Effective power-law exponent (0 for white noise).
    fn eff_beta(&self) -> f64 {
        match self.kind {
            CovarianceKind::White => 0.0,
            CovarianceKind::PowerLaw => self.beta,
        }
    }

    /// Analytic summability flags for lambda_k ~ alpha_k^{-beta} with
    /// alpha_k ~ |k|^2 over the d-dimensional lattice. Each flag gates a
    /// family of limit theorems; violations are reported at configuration
    /// time rather than as silent divergences at run time.
    pub fn hypothesis_flags(&self) -> HypothesisFlags {
        let beta = self.eff_beta();
        let d = self.d as f64;
        // sum lambda^2 / alpha^{1-theta} < inf  <=>  theta < 2 beta + 1 - d/2
        let sup_theta = (2.0 * beta + 1.0 - d / 2.0).clamp(0.0, 1.0);
        HypothesisFlags {
            trace_class_negative_order: sup_theta > 0.0,
            sup_theta,
            inverse_laplacian_trace: beta > (d - 2.0) / 4.0,
            power_law_envelope: beta > (d - 2.0) / 4.0,
            square_summable: beta > d / 4.0,
        }
    }
}

/// Which summability conditions the covariance satisfies.
///
/// * `trace_class_negative_order`: sum lambda_k^2 / alpha_k^{1-theta} < inf
///   for some theta in (0,1) (with `sup_theta` the supremum of admissible
///   theta) — needed for function-valued stationary solutions;
/// * `inverse_laplacian_trace`: sum lambda_k^2 / alpha_k < inf — finite
///   stationary energy, well-posed invariant measure;
/// * `power_law_envelope`: beta > (d-2)/4 two-sided power-law envelope —
///   gates the exit-time asymptotics;
/// * `square_summable`: sum lambda_k^2 < inf — required for the zero-friction
///   rotation limit, where the stochastic convolution's L^2 norm grows like
///   t * sum lambda_k^2 and only a trace-class Q keeps it finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypothesisFlags {
    pub trace_class_negative_order: bool,
    pub sup_theta: f64,
    pub inverse_laplacian_trace: bool,
    pub power_law_envelope: bool,
    pub square_summable: bool,
}

/// int_0^h e^{-z s} ds = (1 - e^{-z h}) / z for complex z, with the series
/// branch for small |z h|.
fn i0c(z: Complex64, h: f64) -> Complex64 {
    let zh = z * h;
    if zh.norm() < 1e-6 {
        h * (Complex64::new(1.0, 0.0) - zh / 2.0 + zh * zh / 6.0)
    } else {
        (Complex64::new(1.0, 0.0) - (-zh).exp()) / z
    }
}

/// Exact covariance of the additive-noise increment of one wave mode step:
/// rows/cols ordered (position, velocity).
pub fn wave_step_covariance(mu: f64, alpha: f64, lambda: f64, h: f64) -> Result<[[f64; 2]; 2]> {
    let s = integrate_vec_to_tol(
        0.0,
        h,
        3,
        |t, out| {
            let m = wave_mode_propagator(mu, alpha, t).expect("validated parameters");
            out[0] = m.f_v * m.f_v;
            out[1] = m.f_v * m.g_v;
            out[2] = m.g_v * m.g_v;
        },
        STEP_COV_REL_TOL,
    )?;
    let r = (lambda / mu) * (lambda / mu);
    Ok([[r * s[0], r * s[1]], [r * s[1], r * s[2]]])
}

/// Exact variance of the heat mode step increment,
/// lambda^2 (1 - e^{-2 alpha h}) / (2 alpha).
pub fn heat_step_variance(alpha: f64, lambda: f64, h: f64) -> f64 {
    lambda * lambda * (-(-2.0 * alpha * h).exp_m1()) / (2.0 * alpha)
}

/// Joint covariance of (wave position, wave velocity, heat) increments over
/// one step when both systems are driven by the *same* Brownian mode path.
pub fn coupled_wave_heat_covariance(
    mu: f64,
    alpha: f64,
    lambda: f64,
    h: f64,
) -> Result<[[f64; 3]; 3]> {
    let w = wave_step_covariance(mu, alpha, lambda, h)?;
    let cross = integrate_vec_to_tol(
        0.0,
        h,
        2,
        |t, out| {
            let m = wave_mode_propagator(mu, alpha, t).expect("validated parameters");
            let e = (-alpha * t).exp();
            out[0] = m.f_v * e;
            out[1] = m.g_v * e;
        },
        STEP_COV_REL_TOL,
    )?;
    let r = lambda * lambda / mu;
    let hh = heat_step_variance(alpha, lambda, h);
    Ok([
        [w[0][0], w[0][1], r * cross[0]],
        [w[1][0], w[1][1], r * cross[1]],
        [r * cross[0], r * cross[1], hh],
    ])
}

/// Joint covariance of (wave position, wave velocity, Brownian increment):
/// lets a solver expose the raw driving increments alongside the exactly
/// sampled state, e.g. for weak-formulation residual diagnostics.
pub fn wave_brownian_covariance(
    mu: f64,
    alpha: f64,
    lambda: f64,
    h: f64,
) -> Result<[[f64; 3]; 3]> {
    let w = wave_step_covariance(mu, alpha, lambda, h)?;
    // E[eta dbeta] = (lambda/mu) int f_v, E[theta dbeta] = (lambda/mu) int g_v,
    // both closed-form via the propagator integral identities.
    let im = wave_mode_propagator_integral(mu, alpha, h)?;
    let r = lambda / mu;
    Ok([
        [w[0][0], w[0][1], r * im.f_v],
        [w[1][0], w[1][1], r * im.g_v],
        [r * im.f_v, r * im.g_v, h],
    ])
}

/// Hermitian covariance E[xi xi^*] of the magnetic mode step increment
/// (components: position w, velocity w'), driven by a circularly symmetric
/// complex Brownian motion with E[dB dBbar] = 2 dt.
pub fn magnetic_step_covariance(
    mu: f64,
    eps: f64,
    alpha: f64,
    lambda: f64,
    h: f64,
) -> Result<[[Complex64; 2]; 2]> {
    let s = integrate_vec_to_tol(
        0.0,
        h,
        4,
        |t, out| {
            let m = magnetic_mode_propagator(mu, eps, alpha, t).expect("validated parameters");
            let cross = m.w_v * m.v_v.conj();
            out[0] = m.w_v.norm_sqr();
            out[1] = m.v_v.norm_sqr();
            out[2] = cross.re;
            out[3] = cross.im;
        },
        STEP_COV_REL_TOL,
    )?;
    let r = 2.0 * (lambda / mu) * (lambda / mu);
    let c01 = Complex64::new(r * s[2], r * s[3]);
    Ok([
        [Complex64::new(r * s[0], 0.0), c01],
        [c01.conj(), Complex64::new(r * s[1], 0.0)],
    ])
}

/// E|xi|^2 of the rotated-heat mode step increment: the mode obeys
/// d zeta = -alpha c_eps zeta dt + lambda c_eps dB with c_eps = (eps+i)/(1+eps^2).
pub fn rotated_heat_step_variance(eps: f64, alpha: f64, lambda: f64, h: f64) -> f64 {
    let scale = 1.0 + eps * eps;
    let decay = eps * alpha / scale; // Re(alpha c_eps)
    let base = lambda * lambda / scale; // |lambda c_eps|^2
    if decay * h < 1e-14 {
        2.0 * base * h
    } else {
        base * (-(-2.0 * decay * h).exp_m1()) / decay
    }
}

/// Joint Hermitian covariance of (magnetic position, magnetic velocity,
/// rotated-heat) increments over one shared complex Brownian step.
pub fn coupled_magnetic_heat_covariance(
    mu: f64,
    eps: f64,
    alpha: f64,
    lambda: f64,
    h: f64,
) -> Result<[[Complex64; 3]; 3]> {
    let w = magnetic_step_covariance(mu, eps, alpha, lambda, h)?;
    let c_eps = Complex64::new(eps, 1.0) / (1.0 + eps * eps);
    let a_eps = c_eps * alpha;
    // E[xi_w,i xibar_h] = 2 (lambda^2/mu) conj(c_eps) int (Phi(s) e2)_i e^{-conj(a_eps) s} ds
    let cr = integrate_vec_to_tol(
        0.0,
        h,
        4,
        |t, out| {
            let m = magnetic_mode_propagator(mu, eps, alpha, t).expect("validated parameters");
            let e = (-a_eps.conj() * t).exp();
            let a = m.w_v * e;
            let b = m.v_v * e;
            out[0] = a.re;
            out[1] = a.im;
            out[2] = b.re;
            out[3] = b.im;
        },
        STEP_COV_REL_TOL,
    )?;
    let r = 2.0 * lambda * lambda / mu;
    let c0 = r * c_eps.conj() * Complex64::new(cr[0], cr[1]);
    let c1 = r * c_eps.conj() * Complex64::new(cr[2], cr[3]);
    let hh = Complex64::new(rotated_heat_step_variance(eps, alpha, lambda, h), 0.0);
    Ok([
        [w[0][0], w[0][1], c0],
        [w[1][0], w[1][1], c1],
        [c0.conj(), c1.conj(), hh],
    ])
}

/// Joint Hermitian covariance of the step increments of two rotated-heat
/// modes with frictions eps_a, eps_b sharing one complex Brownian path.
pub fn coupled_rotated_heat_pair_covariance(
    eps_a: f64,
    eps_b: f64,
    alpha: f64,
    lambda: f64,
    h: f64,
) -> [[Complex64; 2]; 2] {
    let ca = Complex64::new(eps_a, 1.0) / (1.0 + eps_a * eps_a);
    let cb = Complex64::new(eps_b, 1.0) / (1.0 + eps_b * eps_b);
    let aa = ca * alpha;
    let ab = cb * alpha;
    // E[xi_a xibar_b] = 2 lambda^2 ca conj(cb) int_0^h e^{-(aa + conj(ab)) s} ds
    let cross = 2.0 * lambda * lambda * ca * cb.conj() * i0c(aa + ab.conj(), h);
    let va = rotated_heat_step_variance(eps_a, alpha, lambda, h);
    let vb = rotated_heat_step_variance(eps_b, alpha, lambda, h);
    [
        [Complex64::new(va, 0.0), cross],
        [cross.conj(), Complex64::new(vb, 0.0)],
    ]
}

/// Dense lower-triangular Cholesky factor of a real PSD matrix with
/// rank-revealing pivot clamping: a pivot below -1e-10 * max-diagonal is an
/// error (genuinely indefinite input), while a pivot at or below
/// 1e-12 * its own marginal variance is treated as exactly zero — the
/// direction is deterministic given the earlier coordinates. Without the
/// positive-side clamp, exactly degenerate couplings (equal-friction pairs,
/// zero-mass limits) would inject phantom noise at the sqrt(ulp) ~ 1e-8
/// level from cancellation error in the pivot.
#[derive(Debug, Clone)]
pub struct GaussianStepKernel {
    dim: usize,
    l: Vec<f64>, // row-major lower triangle, full dim x dim storage
}

impl GaussianStepKernel {
    pub fn from_covariance(cov: &[f64], dim: usize) -> Result<Self> {
        assert_eq!(cov.len(), dim * dim);
        let scale = (0..dim).map(|i| cov[i * dim + i].abs()).fold(0.0_f64, f64::max).max(1e-300);
        let mut l = vec![0.0; dim * dim];
        for j in 0..dim {
            let mut pivot = cov[j * dim + j];
            for k in 0..j {
                pivot -= l[j * dim + k] * l[j * dim + k];
            }
            if pivot < -1e-10 * scale {
                return Err(SkramError::Numerics(format!(
                    "step covariance is not positive semidefinite (pivot {pivot:.3e} at {j})"
                )));
            }
            let piv = if pivot <= 1e-12 * cov[j * dim + j].abs() { 0.0 } else { pivot.sqrt() };
            l[j * dim + j] = piv;
            for i in (j + 1)..dim {
                if piv == 0.0 {
                    continue;
                }
                let mut s = cov[i * dim + j];
                for k in 0..j {
                    s -= l[i * dim + k] * l[j * dim + k];
                }
                l[i * dim + j] = s / piv;
            }
        }
        Ok(GaussianStepKernel { dim, l })
    }

    pub fn from_covariance_2(cov: [[f64; 2]; 2]) -> Result<Self> {
        Self::from_covariance(&[cov[0][0], cov[0][1], cov[1][0], cov[1][1]], 2)
    }

    pub fn from_covariance_3(cov: [[f64; 3]; 3]) -> Result<Self> {
        let flat: Vec<f64> = cov.iter().flat_map(|r| r.iter().copied()).collect();
        Self::from_covariance(&flat, 3)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Draw one increment vector; consumes exactly `dim` normals.
    pub fn sample_into(&self, stream: &mut NoiseStream, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        let mut z = [0.0f64; 8];
        let zs = &mut z[..self.dim.min(8)];
        if self.dim <= 8 {
            for zi in zs.iter_mut() {
                *zi = stream.normal();
            }
            for (i, slot) in out.iter_mut().enumerate().take(self.dim) {
                let mut acc = 0.0;
                for (k, zk) in zs.iter().enumerate().take(i + 1) {
                    acc += self.l[i * self.dim + k] * zk;
                }
                *slot = acc;
            }
        } else {
            let z: Vec<f64> = stream.normals(self.dim);
            for (i, slot) in out.iter_mut().enumerate().take(self.dim) {
                let mut acc = 0.0;
                for (k, zk) in z.iter().enumerate().take(i + 1) {
                    acc += self.l[i * self.dim + k] * zk;
                }
                *slot = acc;
            }
        }
    }

    /// The factor satisfies L L^T = covariance (up to pivot clamping).
    pub fn factor(&self) -> &[f64] {
        &self.l
    }
}

/// Complex analogue for Hermitian PSD covariances E[xi xi^*]; samples are
/// circularly symmetric (relation matrix E[xi xi^T] = 0). Consumes exactly
/// `2 dim` normals per draw. Pivot clamping follows the real kernel: a
/// conditional variance at or below 1e-12 of its own marginal variance is a
/// deterministic direction, not noise.
#[derive(Debug, Clone)]
pub struct ComplexGaussianStepKernel {
    dim: usize,
    l: Vec<Complex64>,
}

impl ComplexGaussianStepKernel {
    pub fn from_covariance(cov: &[Complex64], dim: usize) -> Result<Self> {
        assert_eq!(cov.len(), dim * dim);
        let scale = (0..dim).map(|i| cov[i * dim + i].re.abs()).fold(0.0_f64, f64::max).max(1e-300);
        let zero = Complex64::new(0.0, 0.0);
        let mut l = vec![zero; dim * dim];
        for j in 0..dim {
            let mut pivot = cov[j * dim + j].re;
            for k in 0..j {
                pivot -= l[j * dim + k].norm_sqr();
            }
            if pivot < -1e-10 * scale {
                return Err(SkramError::Numerics(format!(
                    "hermitian step covariance is not positive semidefinite (pivot {pivot:.3e} at {j})"
                )));
            }
            let piv =
                if pivot <= 1e-12 * cov[j * dim + j].re.abs() { 0.0 } else { pivot.sqrt() };
            l[j * dim + j] = Complex64::new(piv, 0.0);
            for i in (j + 1)..dim {
                if piv == 0.0 {
                    continue;
                }
                let mut s = cov[i * dim + j];
                for k in 0..j {
                    s -= l[i * dim + k] * l[j * dim + k].conj();
                }
                l[i * dim + j] = s / piv;
            }
        }
        Ok(ComplexGaussianStepKernel { dim, l })
    }

    pub fn from_covariance_2(cov: [[Complex64; 2]; 2]) -> Result<Self> {
        let flat: Vec<Complex64> = cov.iter().flat_map(|r| r.iter().copied()).collect();
        Self::from_covariance(&flat, 2)
    }

    pub fn from_covariance_3(cov: [[Complex64; 3]; 3]) -> Result<Self> {
        let flat: Vec<Complex64> = cov.iter().flat_map(|r| r.iter().copied()).collect();
        Self::from_covariance(&flat, 3)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sample_into(&self, stream: &mut NoiseStream, out: &mut [Complex64]) {
        debug_assert_eq!(out.len(), self.dim);
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        let mut z = [Complex64::new(0.0, 0.0); 8];
        debug_assert!(self.dim <= 8);
        for zi in z.iter_mut().take(self.dim) {
            *zi = Complex64::new(stream.normal(), stream.normal()) * inv_sqrt2;
        }
        for (i, slot) in out.iter_mut().enumerate().take(self.dim) {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, zk) in z.iter().enumerate().take(i + 1) {
                acc += self.l[i * self.dim + k] * zk;
            }
            *slot = acc;
        }
    }
}

/// Mode-pair convolution kernels for multiplicative noise. The noise
/// amplitude G(u) is frozen at the left endpoint of each step, so the step
/// increment is conditionally Gaussian with covariance assembled from these
/// u-independent integrals scaled by (G G^T)_{jl}:
///
/// ```text
/// k_ww[j,l] = int_0^h (Phi_j(s) e2) (Phi_l(s) e2)^T ds      (2x2 per pair)
/// k_wh[j,l] = int_0^h (Phi_j(s) e2) e^{-alpha_l s} ds       (2-vector per pair)
/// k_hh[j,l] = (1 - e^{-(alpha_j + alpha_l) h}) / (alpha_j + alpha_l)
/// ```
#[derive(Debug, Clone)]
pub struct MultiplicativeKernels {
    pub n: usize,
    /// ordered (j, l) at j*n+l: [ff, fg, gf, gg] with ff = int f_v^j f_v^l,
    /// fg = int f_v^j g_v^l, gf = int g_v^j f_v^l, gg = int g_v^j g_v^l.
    pub k_ww: Vec<[f64; 4]>,
    /// ordered (j, l) at j*n+l: [int f_v^j e^{-alpha_l s}, int g_v^j e^{-alpha_l s}].
    /// Empty unless built with `with_heat`.
    pub k_wh: Vec<[f64; 2]>,
    /// ordered (j, l) at j*n+l. Empty unless built with `with_heat`.
    pub k_hh: Vec<f64>,
}

pub fn multiplicative_kernels(
    basis: &SpectralBasis,
    mu: f64,
    h: f64,
    with_heat: bool,
) -> Result<MultiplicativeKernels> {
    let n = basis.n_modes();
    let zero4 = [0.0f64; 4];
    let mut k_ww = vec![zero4; n * n];
    for j in 0..n {
        for l in j..n {
            let (aj, al) = (basis.alpha(j), basis.alpha(l));
            let s = integrate_vec_to_tol(
                0.0,
                h,
                4,
                |t, out| {
                    let mj = wave_mode_propagator(mu, aj, t).expect("validated parameters");
                    let ml = wave_mode_propagator(mu, al, t).expect("validated parameters");
                    out[0] = mj.f_v * ml.f_v;
                    out[1] = mj.f_v * ml.g_v;
                    out[2] = mj.g_v * ml.f_v;
                    out[3] = mj.g_v * ml.g_v;
                },
                STEP_COV_REL_TOL,
            )?;
            k_ww[j * n + l] = [s[0], s[1], s[2], s[3]];
            // transpose for the mirrored pair
            k_ww[l * n + j] = [s[0], s[2], s[1], s[3]];
        }
    }
    let (mut k_wh, mut k_hh) = (Vec::new(), Vec::new());
    if with_heat {
        k_wh = vec![[0.0f64; 2]; n * n];
        k_hh = vec![0.0f64; n * n];
        for j in 0..n {
            for l in 0..n {
                let (aj, al) = (basis.alpha(j), basis.alpha(l));
                let s = integrate_vec_to_tol(
                    0.0,
                    h,
                    2,
                    |t, out| {
                        let mj = wave_mode_propagator(mu, aj, t).expect("validated parameters");
                        let e = (-al * t).exp();
                        out[0] = mj.f_v * e;
                        out[1] = mj.g_v * e;
                    },
                    STEP_COV_REL_TOL,
                )?;
                k_wh[j * n + l] = [s[0], s[1]];
                k_hh[j * n + l] = (-(-(aj + al) * h).exp_m1()) / (aj + al);
            }
        }
    }
    Ok(MultiplicativeKernels { n, k_ww, k_wh, k_hh })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariance_spec_validation() {
        assert!(CovarianceSpec::white(1.0).validate().is_ok());
        assert!(CovarianceSpec::white(0.0).validate().is_err());
        assert!(CovarianceSpec::power_law(1.0, -0.5).validate().is_err());
        let mut bad = CovarianceSpec::white(1.0);
        bad.beta = 0.3;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn flags_are_monotone_in_beta() {
        let mut prev = 0u32;
        for i in 0..20 {
            let beta = i as f64 * 0.05;
            let f = CovarianceSpec::power_law(1.0, beta).hypothesis_flags();
            let count = [
                f.trace_class_negative_order,
                f.inverse_laplacian_trace,
                f.power_law_envelope,
                f.square_summable,
            ]
            .iter()
            .filter(|&&b| b)
            .count() as u32;
            assert!(count >= prev, "flag satisfied at small beta but not larger");
            prev = count;
        }
    }

    #[test]
    fn white_noise_interval_flags() {
        // d = 1 white noise: stationary solution exists, but Q is not trace class
        let f = CovarianceSpec::white(1.0).hypothesis_flags();
        assert!(f.trace_class_negative_order);
        assert!((f.sup_theta - 0.5).abs() < 1e-15);
        assert!(f.inverse_laplacian_trace);
        assert!(f.power_law_envelope);
        assert!(!f.square_summable);
    }

    #[test]
    fn degenerate_covariance_samples_deterministically() {
        // rank-1 covariance: second component = 2 * first
        let cov = [1.0, 2.0, 2.0, 4.0];
        let k = GaussianStepKernel::from_covariance(&cov, 2).unwrap();
        let mut s = NoiseStream::new(9, 0);
        let mut out = [0.0; 2];
        for _ in 0..50 {
            k.sample_into(&mut s, &mut out);
            assert!((out[1] - 2.0 * out[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn indefinite_covariance_is_rejected() {
        let cov = [1.0, 2.0, 2.0, 1.0]; // eigenvalues 3, -1
        assert!(GaussianStepKernel::from_covariance(&cov, 2).is_err());
    }

    #[test]
    fn complex_kernel_matches_target_covariance_in_sample_moments() {
        let cov = [
            [Complex64::new(2.0, 0.0), Complex64::new(0.5, 0.7)],
            [Complex64::new(0.5, -0.7), Complex64::new(1.5, 0.0)],
        ];
        let k = ComplexGaussianStepKernel::from_covariance_2(cov).unwrap();
        let mut s = NoiseStream::new(11, 0);
        let mut out = [Complex64::new(0.0, 0.0); 2];
        let n = 200_000;
        let mut m00 = 0.0;
        let mut m11 = 0.0;
        let mut m01 = Complex64::new(0.0, 0.0);
        let mut rel = Complex64::new(0.0, 0.0); // E[xi0 xi0] should vanish
        for _ in 0..n {
            k.sample_into(&mut s, &mut out);
            m00 += out[0].norm_sqr();
            m11 += out[1].norm_sqr();
            m01 += out[0] * out[1].conj();
            rel += out[0] * out[0];
        }
        let nf = n as f64;
        assert!((m00 / nf - 2.0).abs() < 0.03);
        assert!((m11 / nf - 1.5).abs() < 0.03);
        assert!((m01 / nf - cov[0][1]).norm() < 0.03);
        assert!((rel / nf).norm() < 0.03);
    }
}
