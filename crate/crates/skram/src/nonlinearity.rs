//! Reaction drifts B(u), their Jacobians, and multiplicative noise
//! amplitudes.
//!
//! The drift acting on mode coefficients u is the projection of a pointwise
//! (Nemytskii) reaction b(x, u(x)) back onto the eigenbasis,
//!
//! ```text
//! B(u)_j = int_0^L b(x, u(x)) e_j(x) dx,
//! ```
//!
//! evaluated by Gauss–Legendre collocation (synthesize u at the nodes, apply
//! b, project). Two non-Nemytskii families are defined directly in mode
//! space: the noise-weighted gradient drift B(u) = -Q^2 DF(u) for quadratic
//! F (used by Boltzmann-type invariant measures) and a saturated
//! mode-rotation drift that is deliberately *not* a gradient (its Jacobian is
//! non-symmetric), with a certified global Lipschitz constant gamma0.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SkramError};
use crate::quadrature::GaussLegendre;
use crate::spectral::SpectralBasis;

/// Reaction-term families. All vanish at u = 0, so 0 is an equilibrium of
/// every drift used here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Nonlinearity {
    /// b = 0 (linear dynamics).
    Zero,
    /// b(x, sigma) = amp * sin(freq * sigma): bounded, Lipschitz amp*freq.
    Sine { amp: f64, freq: f64 },
    /// Odd-power (Klein–Gordon type) drift b(x, sigma) = -a |sigma|^{p-1} sigma
    /// with 1 < p <= 3, optionally truncated at level n by tangent-line
    /// extension:
    ///
    /// ```text
    /// sigma >  n: b(n)  + (sigma - n) b'(n)
    /// sigma < -n: b(-n) + (sigma + n) b'(-n)
    /// ```
    ///
    /// The extension keeps b' <= 0 (dissipative) and makes b_n globally
    /// Lipschitz with constant a p n^{p-1}.
    OddPower {
        a: f64,
        exponent: f64,
        #[serde(default)]
        truncation: Option<f64>,
    },
    /// Mode-space gradient drift B(u)_k = -lambda_k^2 kappa u_k, i.e.
    /// B = -Q^2 DF for F(u) = kappa |u|_{L^2}^2 / 2.
    GradientQuadratic { kappa: f64 },
    /// Saturated nearest-neighbor rotation
    /// B(u)_k = (gamma0/2) (tanh u_{k+1} - tanh u_{k-1}),
    /// with out-of-range neighbors read as 0. Global Lipschitz constant
    /// gamma0; the Jacobian is non-symmetric, so this is not a gradient of
    /// any potential.
    ModeRotation { gamma0: f64 },
}

impl Nonlinearity {
    pub fn validate(&self) -> Result<()> {
        match self {
            Nonlinearity::Zero => Ok(()),
            Nonlinearity::Sine { amp, freq } => {
                if !(amp.is_finite() && freq.is_finite() && *freq > 0.0) {
                    return Err(SkramError::Config(format!(
                        "sine drift needs finite amp and freq > 0, got amp={amp}, freq={freq}"
                    )));
                }
                Ok(())
            }
            Nonlinearity::OddPower { a, exponent, truncation } => {
                if !(*a > 0.0 && a.is_finite()) {
                    return Err(SkramError::Config(format!(
                        "odd-power drift needs a > 0, got {a}"
                    )));
                }
                if !(*exponent > 1.0 && *exponent <= 3.0) {
                    return Err(SkramError::Config(format!(
                        "odd-power exponent must lie in (1, 3], got {exponent}"
                    )));
                }
                if let Some(n) = truncation {
                    if !(*n > 0.0 && n.is_finite()) {
                        return Err(SkramError::Config(format!(
                            "truncation level must be positive, got {n}"
                        )));
                    }
                }
                Ok(())
            }
            Nonlinearity::GradientQuadratic { kappa } => {
                if !(kappa.is_finite() && *kappa >= 0.0) {
                    return Err(SkramError::Config(format!(
                        "quadratic potential needs kappa >= 0, got {kappa}"
                    )));
                }
                Ok(())
            }
            Nonlinearity::ModeRotation { gamma0 } => {
                if !(*gamma0 > 0.0 && gamma0.is_finite()) {
                    return Err(SkramError::Config(format!(
                        "mode rotation needs gamma0 > 0, got {gamma0}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Is this a Nemytskii (pointwise composition) drift?
    fn is_nemytskii(&self) -> bool {
        matches!(self, Nonlinearity::Sine { .. } | Nonlinearity::OddPower { .. })
    }

    /// Pointwise reaction value b(x, sigma) (x-independent families so far).
    pub fn pointwise(&self, sigma: f64) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Sine { amp, freq } => amp * (freq * sigma).sin(),
            Nonlinearity::OddPower { a, exponent, truncation } => {
                let bare = |s: f64| -a * s.abs().powf(exponent - 1.0) * s;
                let slope = |s: f64| -a * exponent * s.abs().powf(exponent - 1.0);
                match truncation {
                    Some(n) if sigma > *n => bare(*n) + (sigma - n) * slope(*n),
                    Some(n) if sigma < -*n => bare(-*n) + (sigma + n) * slope(-*n),
                    _ => bare(sigma),
                }
            }
            _ => panic!("pointwise value undefined for mode-space drifts"),
        }
    }

    /// Pointwise slope d b / d sigma.
    pub fn pointwise_slope(&self, sigma: f64) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Sine { amp, freq } => amp * freq * (freq * sigma).cos(),
            Nonlinearity::OddPower { a, exponent, truncation } => {
                let slope = |s: f64| -a * exponent * s.abs().powf(exponent - 1.0);
                match truncation {
                    Some(n) if sigma.abs() > *n => slope(*n),
                    _ => slope(sigma),
                }
            }
            _ => panic!("pointwise slope undefined for mode-space drifts"),
        }
    }

    /// Antiderivative Phi(sigma) = -int_0^sigma b(r) dr (>= 0 for the
    /// dissipative families), used to build gradient potentials.
    pub fn pointwise_potential(&self, sigma: f64) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Sine { amp, freq } => amp / freq * ((freq * sigma).cos() - 1.0),
            Nonlinearity::OddPower { a, exponent, truncation } => {
                let bare_phi = |s: f64| a * s.abs().powf(exponent + 1.0) / (exponent + 1.0);
                let bare = |s: f64| -a * s.abs().powf(exponent - 1.0) * s;
                let slope = |s: f64| -a * exponent * s.abs().powf(exponent - 1.0);
                match truncation {
                    Some(n) if sigma.abs() > *n => {
                        let d = sigma.abs() - n;
                        bare_phi(*n) - bare(*n) * d - 0.5 * slope(*n) * d * d
                    }
                    _ => bare_phi(sigma),
                }
            }
            _ => panic!("pointwise potential undefined for mode-space drifts"),
        }
    }
}

/// Gauss–Legendre collocation grid bound to one basis: synthesis of mode
/// fields at the nodes and projection of nodal values back to modes.
#[derive(Debug, Clone)]
pub struct CollocationGrid {
    basis: Arc<SpectralBasis>,
    points: Vec<f64>,
    weights: Vec<f64>,
    /// synth[q * n + j] = e_{j+1}(x_q)
    synth: Vec<f64>,
}

impl CollocationGrid {
    /// Grid with `factor * n_modes` nodes (minimum 8). factor = 4 resolves
    /// products of basis functions with plenty of margin.
    pub fn new(basis: &Arc<SpectralBasis>, factor: usize) -> Self {
        let n = basis.n_modes();
        let m = (factor.max(1) * n).max(8);
        let rule = GaussLegendre::new(m);
        let scaled = rule.scaled(0.0, basis.interval_length());
        let mut points = Vec::with_capacity(m);
        let mut weights = Vec::with_capacity(m);
        let mut synth = vec![0.0; m * n];
        for (q, (x, w)) in scaled.into_iter().enumerate() {
            points.push(x);
            weights.push(w);
            for j in 0..n {
                synth[q * n + j] = basis.eigenfunction(j, x);
            }
        }
        CollocationGrid { basis: Arc::clone(basis), points, weights, synth }
    }

    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// u(x_q) for all nodes q.
    pub fn synthesize(&self, modes: &[f64], out: &mut [f64]) {
        let n = self.basis.n_modes();
        debug_assert_eq!(modes.len(), n);
        debug_assert_eq!(out.len(), self.points.len());
        for (q, o) in out.iter_mut().enumerate() {
            let row = &self.synth[q * n..(q + 1) * n];
            *o = row.iter().zip(modes).map(|(e, c)| e * c).sum();
        }
    }

    /// Project nodal values onto the basis: out_j = sum_q w_q v_q e_j(x_q).
    pub fn project(&self, values: &[f64], out: &mut [f64]) {
        let n = self.basis.n_modes();
        debug_assert_eq!(values.len(), self.points.len());
        debug_assert_eq!(out.len(), n);
        out.fill(0.0);
        for (q, (v, w)) in values.iter().zip(&self.weights).enumerate() {
            let row = &self.synth[q * n..(q + 1) * n];
            let vw = v * w;
            for (o, e) in out.iter_mut().zip(row) {
                *o += vw * e;
            }
        }
    }

    /// Quadrature of a nodal function: sum_q w_q v_q.
    pub fn integrate_values(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// Weighted Gram matrix out[j*n+k] = sum_q w_q p_q e_j(x_q) e_k(x_q)
    /// for nodal weights p (used to assemble multiplicative noise matrices).
    pub fn weighted_gram(&self, pointwise: &[f64], out: &mut [f64]) {
        let n = self.basis.n_modes();
        debug_assert_eq!(out.len(), n * n);
        out.fill(0.0);
        for (q, (p, w)) in pointwise.iter().zip(&self.weights).enumerate() {
            let row = &self.synth[q * n..(q + 1) * n];
            let pw = p * w;
            for j in 0..n {
                let pwj = pw * row[j];
                for k in j..n {
                    out[j * n + k] += pwj * row[k];
                }
            }
        }
        for j in 0..n {
            for k in 0..j {
                out[j * n + k] = out[k * n + j];
            }
        }
    }
}

/// sech^2 in overflow-safe form.
fn sech2(x: f64) -> f64 {
    let e = (-x.abs()).exp();
    let s = 2.0 * e / (1.0 + e * e);
    s * s
}

/// A nonlinearity compiled against one basis and covariance: the mode-space
/// drift B(u), its Jacobian action, and (when the drift has the
/// noise-weighted gradient form B = -Q^2 DF) the potential F.
#[derive(Debug, Clone)]
pub struct Drift {
    kind: Nonlinearity,
    lambdas: Vec<f64>,
    white_amplitude: Option<f64>,
    grid: Option<CollocationGrid>,
    n: usize,
}

impl Drift {
    pub fn new(
        kind: &Nonlinearity,
        basis: &Arc<SpectralBasis>,
        lambdas: &[f64],
        collocation_factor: usize,
    ) -> Result<Self> {
        kind.validate()?;
        if lambdas.len() != basis.n_modes() {
            return Err(SkramError::Config(
                "lambda vector length does not match basis".into(),
            ));
        }
        if let Nonlinearity::ModeRotation { gamma0 } = kind {
            // contraction certificates require the Lipschitz bound to sit
            // strictly below the spectral gap
            if *gamma0 >= basis.alpha(0) {
                return Err(SkramError::Config(format!(
                    "mode rotation bound gamma0 = {gamma0} must stay below the first \
                     eigenvalue alpha_1 = {}",
                    basis.alpha(0)
                )));
            }
        }
        let grid = kind.is_nemytskii().then(|| CollocationGrid::new(basis, collocation_factor));
        let white_amplitude = {
            let first = lambdas[0];
            lambdas.iter().all(|&l| (l - first).abs() <= 1e-14 * first.abs()).then_some(first)
        };
        Ok(Drift {
            kind: kind.clone(),
            lambdas: lambdas.to_vec(),
            white_amplitude,
            grid,
            n: basis.n_modes(),
        })
    }

    pub fn kind(&self) -> &Nonlinearity {
        &self.kind
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, Nonlinearity::Zero)
    }

    /// B(u) in mode coordinates.
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        debug_assert_eq!(u.len(), self.n);
        debug_assert_eq!(out.len(), self.n);
        match &self.kind {
            Nonlinearity::Zero => out.fill(0.0),
            Nonlinearity::Sine { .. } | Nonlinearity::OddPower { .. } => {
                let grid = self.grid.as_ref().expect("nemytskii drift has a grid");
                let mut vals = vec![0.0; grid.n_points()];
                grid.synthesize(u, &mut vals);
                for v in vals.iter_mut() {
                    *v = self.kind.pointwise(*v);
                }
                grid.project(&vals, out);
            }
            Nonlinearity::GradientQuadratic { kappa } => {
                for ((o, x), l) in out.iter_mut().zip(u).zip(&self.lambdas) {
                    *o = -l * l * kappa * x;
                }
            }
            Nonlinearity::ModeRotation { gamma0 } => {
                let half = 0.5 * gamma0;
                for k in 0..self.n {
                    let up = if k + 1 < self.n { u[k + 1].tanh() } else { 0.0 };
                    let dn = if k > 0 { u[k - 1].tanh() } else { 0.0 };
                    out[k] = half * (up - dn);
                }
            }
        }
    }

    /// Jacobian action DB(u) x. For Nemytskii drifts this is the projection
    /// of b'(u(x)) x(x), a symmetric operator in mode space.
    pub fn jacobian_apply(&self, u: &[f64], x: &[f64], out: &mut [f64]) {
        match &self.kind {
            Nonlinearity::Zero => out.fill(0.0),
            Nonlinearity::Sine { .. } | Nonlinearity::OddPower { .. } => {
                let grid = self.grid.as_ref().expect("nemytskii drift has a grid");
                let m = grid.n_points();
                let mut uvals = vec![0.0; m];
                let mut xvals = vec![0.0; m];
                grid.synthesize(u, &mut uvals);
                grid.synthesize(x, &mut xvals);
                for (uv, xv) in uvals.iter_mut().zip(&xvals) {
                    *uv = self.kind.pointwise_slope(*uv) * xv;
                }
                grid.project(&uvals, out);
            }
            Nonlinearity::GradientQuadratic { kappa } => {
                for ((o, xi), l) in out.iter_mut().zip(x).zip(&self.lambdas) {
                    *o = -l * l * kappa * xi;
                }
            }
            Nonlinearity::ModeRotation { gamma0 } => {
                let half = 0.5 * gamma0;
                for k in 0..self.n {
                    let up = if k + 1 < self.n { sech2(u[k + 1]) * x[k + 1] } else { 0.0 };
                    let dn = if k > 0 { sech2(u[k - 1]) * x[k - 1] } else { 0.0 };
                    out[k] = half * (up - dn);
                }
            }
        }
    }

    /// Transposed Jacobian action DB(u)^T x (equals DB(u) x for the
    /// symmetric Nemytskii and diagonal families).
    pub fn jacobian_transpose_apply(&self, u: &[f64], x: &[f64], out: &mut [f64]) {
        match &self.kind {
            Nonlinearity::ModeRotation { gamma0 } => {
                let half = 0.5 * gamma0;
                for j in 0..self.n {
                    let lo = if j > 0 { x[j - 1] } else { 0.0 };
                    let hi = if j + 1 < self.n { x[j + 1] } else { 0.0 };
                    out[j] = half * sech2(u[j]) * (lo - hi);
                }
            }
            _ => self.jacobian_apply(u, x, out),
        }
    }

    /// Does B have the noise-weighted gradient form B = -Q^2 DF? True for
    /// the zero and quadratic families with any diagonal Q, and for the
    /// Nemytskii families exactly when Q is a multiple of the identity.
    pub fn is_gradient(&self) -> bool {
        match self.kind {
            Nonlinearity::Zero | Nonlinearity::GradientQuadratic { .. } => true,
            Nonlinearity::Sine { .. } | Nonlinearity::OddPower { .. } => {
                self.white_amplitude.is_some()
            }
            Nonlinearity::ModeRotation { .. } => false,
        }
    }

    /// The potential F with B = -Q^2 DF, when the gradient structure holds.
    pub fn potential(&self, u: &[f64]) -> Result<f64> {
        match &self.kind {
            Nonlinearity::Zero => Ok(0.0),
            Nonlinearity::GradientQuadratic { kappa } => {
                Ok(0.5 * kappa * u.iter().map(|x| x * x).sum::<f64>())
            }
            Nonlinearity::Sine { .. } | Nonlinearity::OddPower { .. } => {
                let c = self.white_amplitude.ok_or_else(|| {
                    SkramError::Config(
                        "pointwise drift is noise-weighted-gradient only for scalar Q".into(),
                    )
                })?;
                let grid = self.grid.as_ref().expect("nemytskii drift has a grid");
                let mut vals = vec![0.0; grid.n_points()];
                grid.synthesize(u, &mut vals);
                for v in vals.iter_mut() {
                    *v = self.kind.pointwise_potential(*v);
                }
                Ok(grid.integrate_values(&vals) / (c * c))
            }
            Nonlinearity::ModeRotation { .. } => Err(SkramError::Config(
                "mode rotation drift is not a gradient".into(),
            )),
        }
    }

    /// DF(u) in mode coordinates (only when the gradient structure holds):
    /// DF = -Q^{-2} B(u).
    pub fn potential_gradient(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        if !self.is_gradient() {
            return Err(SkramError::Config("drift is not a gradient".into()));
        }
        self.apply(u, out);
        for (o, l) in out.iter_mut().zip(&self.lambdas) {
            *o = -*o / (l * l);
        }
        Ok(())
    }

    /// Certified global Lipschitz bound of u -> B(u) in L^2.
    pub fn lipschitz_bound(&self) -> f64 {
        match &self.kind {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Sine { amp, freq } => (amp * freq).abs(),
            Nonlinearity::OddPower { a, exponent, truncation } => match truncation {
                Some(n) => a * exponent * n.powf(exponent - 1.0),
                None => f64::INFINITY,
            },
            Nonlinearity::GradientQuadratic { kappa } => {
                kappa * self.lambdas.iter().map(|l| l * l).fold(0.0, f64::max)
            }
            Nonlinearity::ModeRotation { gamma0 } => *gamma0,
        }
    }
}

/// Multiplicative noise amplitude g(x, sigma): bounded with bounded slope, so
/// the noise term g(x, u) dW/dt satisfies the usual Lipschitz hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NoiseAmplitude {
    /// g(x, sigma) = g0 (0.6 + 0.4 cos(freq sigma)): range [0.2 g0, g0],
    /// Lipschitz 0.4 g0 freq. Strictly positive, so the noise never
    /// degenerates.
    ShiftedCosine { g0: f64, freq: f64 },
}

impl NoiseAmplitude {
    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseAmplitude::ShiftedCosine { g0, freq } => {
                if !(*g0 > 0.0 && g0.is_finite() && freq.is_finite() && *freq > 0.0) {
                    return Err(SkramError::Config(format!(
                        "shifted cosine amplitude needs g0 > 0 and freq > 0, got g0={g0}, freq={freq}"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn pointwise(&self, sigma: f64) -> f64 {
        match self {
            NoiseAmplitude::ShiftedCosine { g0, freq } => g0 * (0.6 + 0.4 * (freq * sigma).cos()),
        }
    }

    pub fn sup_bound(&self) -> f64 {
        match self {
            NoiseAmplitude::ShiftedCosine { g0, .. } => *g0,
        }
    }

    pub fn lipschitz_bound(&self) -> f64 {
        match self {
            NoiseAmplitude::ShiftedCosine { g0, freq } => 0.4 * g0 * freq,
        }
    }
}
