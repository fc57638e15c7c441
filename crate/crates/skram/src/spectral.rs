//! Spectral basis and truncated mode expansions.
//!
//! Everything is built over the Dirichlet Laplacian on the interval [0, L]:
//!
//! ```text
//! alpha_k = (k pi / L)^2,      e_k(x) = sqrt(2/L) sin(k pi x / L),   k = 1, 2, ...
//! ```
//!
//! A field is stored as its first `n` coefficients in this basis (dense; the
//! mode counts used here never warrant an FFT). Fractional Sobolev norms are
//! diagonal in the basis,
//!
//! ```text
//! |h|_{H^delta}^2 = sum_k alpha_k^delta h_k^2,
//! ```
//!
//! and the phase space for the second-order dynamics is the product
//! `H^delta x H^{delta-1}` with the corresponding squared norm
//! `|u|_{H^delta}^2 + |v|_{H^{delta-1}}^2`.
//!
//! Public mode numbering: **index `i` (0-based) means wavenumber `k = i + 1`**.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Result, SkramError};

/// Dirichlet eigenbasis of -d^2/dx^2 on [0, L], truncated to `n` modes.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    l: f64,
    n: usize,
    alphas: Vec<f64>,
}

impl SpectralBasis {
    /// Basis on [0, L] with `n` modes. Requires `L > 0`, `n >= 1`.
    pub fn new(l: f64, n: usize) -> Result<Arc<Self>> {
        if !(l.is_finite() && l > 0.0) {
            return Err(SkramError::Config(format!(
                "interval length must be positive and finite, got {l}"
            )));
        }
        if n == 0 || n > 4096 {
            return Err(SkramError::Config(format!(
                "mode count must be in 1..=4096, got {n}"
            )));
        }
        let alphas = (1..=n)
            .map(|k| {
                let w = k as f64 * std::f64::consts::PI / l;
                w * w
            })
            .collect();
        Ok(Arc::new(SpectralBasis { l, n, alphas }))
    }

    /// Basis on [0, pi], where alpha_k = k^2.
    pub fn standard(n: usize) -> Result<Arc<Self>> {
        Self::new(std::f64::consts::PI, n)
    }

    pub fn interval_length(&self) -> f64 {
        self.l
    }

    pub fn n_modes(&self) -> usize {
        self.n
    }

    /// Eigenvalue alpha_{i+1} = ((i+1) pi / L)^2.
    pub fn alpha(&self, i: usize) -> f64 {
        self.alphas[i]
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// Eigenfunction e_{i+1}(x) = sqrt(2/L) sin((i+1) pi x / L).
    pub fn eigenfunction(&self, i: usize, x: f64) -> f64 {
        let k = (i + 1) as f64;
        (2.0 / self.l).sqrt() * (k * std::f64::consts::PI * x / self.l).sin()
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(SkramError::BasisMismatch(format!(
                "L = {} / {} modes vs L = {} / {} modes",
                self.l, self.n, other.l, other.n
            )))
        }
    }
}

/// Coefficient scalar: real fields use `f64`, the two-component magnetic
/// system uses `Complex64` (the pair (u1, u2) packed as u1 + i u2).
pub trait ModeScalar:
    Copy
    + std::fmt::Debug
    + PartialEq
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Neg<Output = Self>
    + std::ops::Mul<f64, Output = Self>
    + 'static
{
    const ZERO: Self;
    /// Squared modulus.
    fn abs_sq(self) -> f64;
    /// Re(self * conj(other)); the real inner product of the underlying
    /// one- or two-component values.
    fn re_dot(self, other: Self) -> f64;
}

impl ModeScalar for f64 {
    const ZERO: Self = 0.0;

    fn abs_sq(self) -> f64 {
        self * self
    }

    fn re_dot(self, other: Self) -> f64 {
        self * other
    }
}

impl ModeScalar for Complex64 {
    const ZERO: Self = Complex64::new(0.0, 0.0);

    fn abs_sq(self) -> f64 {
        self.norm_sqr()
    }

    fn re_dot(self, other: Self) -> f64 {
        (self * other.conj()).re
    }
}

/// A truncated eigenfunction expansion sum_i c_i e_{i+1}.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeField<S: ModeScalar = f64> {
    basis: Arc<SpectralBasis>,
    coeffs: Vec<S>,
}

impl<S: ModeScalar> ModeField<S> {
    pub fn zeros(basis: &Arc<SpectralBasis>) -> Self {
        ModeField { basis: Arc::clone(basis), coeffs: vec![S::ZERO; basis.n_modes()] }
    }

    /// Wrap a full coefficient vector (length must equal the mode count).
    pub fn from_coeffs(basis: &Arc<SpectralBasis>, coeffs: Vec<S>) -> Result<Self> {
        if coeffs.len() != basis.n_modes() {
            return Err(SkramError::Config(format!(
                "coefficient vector has length {}, basis has {} modes",
                coeffs.len(),
                basis.n_modes()
            )));
        }
        Ok(ModeField { basis: Arc::clone(basis), coeffs })
    }

    /// `amplitude * e_{i+1}`.
    pub fn unit_mode(basis: &Arc<SpectralBasis>, i: usize, amplitude: S) -> Result<Self> {
        if i >= basis.n_modes() {
            return Err(SkramError::Config(format!(
                "mode index {i} out of range for {} modes",
                basis.n_modes()
            )));
        }
        let mut f = Self::zeros(basis);
        f.coeffs[i] = amplitude;
        Ok(f)
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[S] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [S] {
        &mut self.coeffs
    }

    /// Pointwise value sum_i c_i e_{i+1}(x).
    pub fn evaluate(&self, x: f64) -> S {
        let mut acc = S::ZERO;
        for (i, c) in self.coeffs.iter().enumerate() {
            acc = acc + *c * self.basis.eigenfunction(i, x);
        }
        acc
    }

    /// |self|_{H^delta} = sqrt(sum alpha^delta |c|^2). delta = 0 is L^2.
    pub fn sobolev_norm(&self, delta: f64) -> f64 {
        self.sobolev_norm_sq(delta).sqrt()
    }

    pub fn sobolev_norm_sq(&self, delta: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| self.basis.alpha(i).powf(delta) * c.abs_sq())
            .sum()
    }

    /// H^delta inner product sum alpha^delta Re(c_i conj(d_i)).
    pub fn inner(&self, other: &Self, delta: f64) -> Result<f64> {
        self.basis.check_same(&other.basis)?;
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .enumerate()
            .map(|(i, (c, d))| self.basis.alpha(i).powf(delta) * c.re_dot(*d))
            .sum())
    }

    /// self += a * other.
    pub fn axpy(&mut self, a: f64, other: &Self) -> Result<()> {
        self.basis.check_same(&other.basis)?;
        for (c, d) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *c = *c + *d * a;
        }
        Ok(())
    }

    pub fn scale(&mut self, a: f64) {
        for c in self.coeffs.iter_mut() {
            *c = *c * a;
        }
    }

    /// max_i |c_i| (blow-up monitor).
    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.abs_sq().sqrt()).fold(0.0, f64::max)
    }
}

/// Phase-space point (position, velocity) over one shared basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState<S: ModeScalar = f64> {
    pub position: ModeField<S>,
    pub velocity: ModeField<S>,
}

impl<S: ModeScalar> PhaseState<S> {
    pub fn new(position: ModeField<S>, velocity: ModeField<S>) -> Result<Self> {
        position.basis().check_same(velocity.basis())?;
        Ok(PhaseState { position, velocity })
    }

    pub fn zeros(basis: &Arc<SpectralBasis>) -> Self {
        PhaseState { position: ModeField::zeros(basis), velocity: ModeField::zeros(basis) }
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        self.position.basis()
    }

    /// |z|^2 in H^delta x H^{delta-1}.
    pub fn phase_norm_sq(&self, delta: f64) -> f64 {
        self.position.sobolev_norm_sq(delta) + self.velocity.sobolev_norm_sq(delta - 1.0)
    }

    pub fn phase_norm(&self, delta: f64) -> f64 {
        self.phase_norm_sq(delta).sqrt()
    }

    /// Duality pairing on H^delta x H^{delta-1}: position parts pair with
    /// weight alpha^delta, velocity parts with alpha^{delta-1}.
    pub fn phase_inner(&self, other: &Self, delta: f64) -> Result<f64> {
        Ok(self.position.inner(&other.position, delta)?
            + self.velocity.inner(&other.velocity, delta - 1.0)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_rejects_bad_parameters() {
        assert!(SpectralBasis::new(-1.0, 4).is_err());
        assert!(SpectralBasis::new(1.0, 0).is_err());
        assert!(SpectralBasis::new(f64::NAN, 4).is_err());
    }

    #[test]
    fn mismatched_bases_refuse_to_combine() {
        let a = SpectralBasis::standard(4).unwrap();
        let b = SpectralBasis::new(2.0, 4).unwrap();
        let fa = ModeField::<f64>::zeros(&a);
        let fb = ModeField::<f64>::zeros(&b);
        assert!(fa.inner(&fb, 0.0).is_err());
    }

    #[test]
    fn complex_field_norm_counts_both_components() {
        let b = SpectralBasis::standard(3).unwrap();
        let f =
            ModeField::unit_mode(&b, 0, Complex64::new(3.0, 4.0)).unwrap();
        assert!((f.sobolev_norm(0.0) - 5.0).abs() < 1e-14);
    }
}
