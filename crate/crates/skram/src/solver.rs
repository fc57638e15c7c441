//! Trajectory integrators built on exact per-mode linear flows.
//!
//! Every stepper here is an exponential Euler scheme: over one step of
//! length h the linear part (flow and noise convolution) is applied
//! *exactly*, while the reaction term is frozen at the left endpoint and fed
//! through the exact forcing integral,
//!
//! ```text
//! z(h) = Phi(h) z(0) + [int_0^h Phi(s) ds e2] B(u(0))/mu + xi,
//! xi ~ N(0, Sigma(h)) drawn from the closed-form step covariance.
//! ```
//!
//! Consequences: with zero reaction the scheme reproduces the linear group
//! exactly (up to floating-point composition), there is no CFL-type
//! restriction from stiff modes, and the only discretization error is the
//! O(h) drift freezing. Coupled integrators (wave with its small-mass heat
//! limit, magnetic with its rotated-heat limit, two rotated-heat frictions)
//! draw the joint Gaussian of both systems' increments *under one shared
//! Brownian path*, so pathwise limit theorems can be tested directly.
//!
//! Multiplicative noise freezes the amplitude G(u) at the left endpoint as
//! well; the step covariance couples all modes and is re-assembled and
//! factorized each step from cached u-independent convolution kernels.
//!
//! Any state with a mode coefficient exceeding 1e12 in absolute value aborts
//! the run with a blow-up error rather than silently overflowing.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Result, SkramError};
use crate::noise::{
    coupled_magnetic_heat_covariance, coupled_rotated_heat_pair_covariance,
    coupled_wave_heat_covariance, heat_step_variance, magnetic_step_covariance,
    multiplicative_kernels, wave_brownian_covariance, wave_step_covariance,
    ComplexGaussianStepKernel, CovarianceSpec, GaussianStepKernel, MultiplicativeKernels,
};
use crate::nonlinearity::{CollocationGrid, Drift, NoiseAmplitude, Nonlinearity};
use crate::propagator::{
    heat_mode_decay, magnetic_mode_propagator, rotated_heat_mode_factor, wave_mode_propagator,
    wave_mode_propagator_integral, MagneticModeCoeffs, WaveModeCoeffs,
};
use crate::rng::NoiseStream;
use crate::spectral::SpectralBasis;

/// Mode magnitude beyond which a trajectory is declared blown up.
pub const BLOW_UP_LIMIT: f64 = 1e12;

/// Collocation nodes per mode used to project Nemytskii reaction terms.
pub const COLLOCATION_FACTOR: usize = 4;

/// (1 - e^{-a h}) / a with a series branch near a h = 0.
fn i0(a: f64, h: f64) -> f64 {
    let ah = a * h;
    if ah.abs() < 1e-8 {
        h * (1.0 - 0.5 * ah + ah * ah / 6.0)
    } else {
        -(-ah).exp_m1() / a
    }
}

fn max_abs(xs: &[f64]) -> f64 {
    // NaN maps to infinity so a poisoned state always trips the blow-up check
    xs.iter()
        .fold(0.0_f64, |m, x| if x.is_nan() { f64::INFINITY } else { m.max(x.abs()) })
}

fn max_abs_c(xs: &[Complex64]) -> f64 {
    xs.iter().fold(0.0_f64, |m, x| {
        if x.re.is_nan() || x.im.is_nan() {
            f64::INFINITY
        } else {
            m.max(x.re.abs()).max(x.im.abs())
        }
    })
}

fn check_finite_state(step: usize, mags: &[f64]) -> Result<()> {
    let mut m = 0.0_f64;
    for &x in mags {
        if x.is_nan() {
            m = f64::INFINITY;
        } else {
            m = m.max(x);
        }
    }
    if m > BLOW_UP_LIMIT {
        return Err(SkramError::BlowUp { step, magnitude: m });
    }
    Ok(())
}

/// What a simulation records. `every` counts steps between samples (the
/// initial state and the final step are always recorded); `noise_vectors`
/// and `increments` are per *step*, so they require `every == 1`.
#[derive(Debug, Clone)]
pub struct RecordSpec {
    pub every: usize,
    pub velocities: bool,
    pub noise_vectors: bool,
    pub increments: bool,
}

impl Default for RecordSpec {
    fn default() -> Self {
        RecordSpec { every: 1, velocities: false, noise_vectors: false, increments: false }
    }
}

impl RecordSpec {
    pub fn every(every: usize) -> Self {
        RecordSpec { every, ..Self::default() }
    }

    pub fn with_velocities(mut self) -> Self {
        self.velocities = true;
        self
    }

    pub fn with_noise_vectors(mut self) -> Self {
        self.noise_vectors = true;
        self
    }

    pub fn with_increments(mut self) -> Self {
        self.increments = true;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.every == 0 {
            return Err(SkramError::Config("record interval must be >= 1".into()));
        }
        if (self.noise_vectors || self.increments) && self.every != 1 {
            return Err(SkramError::Config(
                "per-step recording (noise vectors / increments) requires every = 1".into(),
            ));
        }
        Ok(())
    }
}

/// A recorded real-mode trajectory. `positions[i]` are the mode coefficients
/// at `times[i]`; velocities align with times when recorded; noise vectors
/// and Brownian increments are per step (length = n_steps).
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub h: f64,
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    pub velocities: Option<Vec<Vec<f64>>>,
    /// Per-step exact state-noise pairs (position part, velocity part).
    pub noise_vectors: Option<Vec<(Vec<f64>, Vec<f64>)>>,
    /// Per-step raw Brownian mode increments driving the run.
    pub increments: Option<Vec<Vec<f64>>>,
}

impl Trajectory {
    pub fn n_recorded(&self) -> usize {
        self.times.len()
    }

    pub fn final_position(&self) -> &[f64] {
        self.positions.last().expect("trajectory records at least t = 0")
    }

    pub fn final_velocity(&self) -> Option<&[f64]> {
        self.velocities.as_ref().map(|v| v.last().expect("nonempty").as_slice())
    }

    /// max over recorded times of the L^2 (coefficient Euclidean) distance.
    pub fn sup_l2_distance(&self, other: &Trajectory) -> f64 {
        assert_eq!(self.times.len(), other.times.len(), "trajectories share a time grid");
        self.positions
            .iter()
            .zip(&other.positions)
            .map(|(a, b)| {
                a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
            })
            .fold(0.0_f64, f64::max)
    }

    /// max over recorded times of the largest single-mode discrepancy.
    pub fn sup_mode_distance(&self, other: &Trajectory) -> f64 {
        assert_eq!(self.times.len(), other.times.len(), "trajectories share a time grid");
        self.positions
            .iter()
            .zip(&other.positions)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0_f64, f64::max))
            .fold(0.0_f64, f64::max)
    }
}

/// A recorded complex-mode trajectory (magnetic / rotated-heat systems).
#[derive(Debug, Clone)]
pub struct ComplexTrajectory {
    pub h: f64,
    pub times: Vec<f64>,
    pub positions: Vec<Vec<Complex64>>,
    pub velocities: Option<Vec<Vec<Complex64>>>,
}

impl ComplexTrajectory {
    pub fn n_recorded(&self) -> usize {
        self.times.len()
    }

    pub fn final_position(&self) -> &[Complex64] {
        self.positions.last().expect("trajectory records at least t = 0")
    }

    /// max over recorded times of the L^2 (coefficient) distance.
    pub fn sup_l2_distance(&self, other: &ComplexTrajectory) -> f64 {
        assert_eq!(self.times.len(), other.times.len(), "trajectories share a time grid");
        self.positions
            .iter()
            .zip(&other.positions)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt())
            .fold(0.0_f64, f64::max)
    }
}

struct Recorder {
    every: usize,
    times: Vec<f64>,
    positions: Vec<Vec<f64>>,
    velocities: Option<Vec<Vec<f64>>>,
    noise_vectors: Option<Vec<(Vec<f64>, Vec<f64>)>>,
    increments: Option<Vec<Vec<f64>>>,
}

impl Recorder {
    fn new(rec: &RecordSpec, n_steps: usize, has_velocity: bool) -> Result<Self> {
        rec.validate()?;
        let n_rec = n_steps / rec.every + 2;
        Ok(Recorder {
            every: rec.every,
            times: Vec::with_capacity(n_rec),
            positions: Vec::with_capacity(n_rec),
            velocities: (rec.velocities && has_velocity).then(|| Vec::with_capacity(n_rec)),
            noise_vectors: rec.noise_vectors.then(|| Vec::with_capacity(n_steps)),
            increments: rec.increments.then(|| Vec::with_capacity(n_steps)),
        })
    }

    fn wants(&self, step: usize, n_steps: usize) -> bool {
        step == 0 || step == n_steps || step.is_multiple_of(self.every)
    }

    fn push(&mut self, t: f64, u: &[f64], v: Option<&[f64]>) {
        self.times.push(t);
        self.positions.push(u.to_vec());
        if let Some(vs) = self.velocities.as_mut() {
            vs.push(v.expect("velocity recording requires a velocity state").to_vec());
        }
    }

    fn push_noise(&mut self, nu: &[f64], nv: &[f64]) {
        if let Some(ns) = self.noise_vectors.as_mut() {
            ns.push((nu.to_vec(), nv.to_vec()));
        }
    }

    fn push_increment(&mut self, db: &[f64]) {
        if let Some(is) = self.increments.as_mut() {
            is.push(db.to_vec());
        }
    }

    fn finish(self, h: f64) -> Trajectory {
        Trajectory {
            h,
            times: self.times,
            positions: self.positions,
            velocities: self.velocities,
            noise_vectors: self.noise_vectors,
            increments: self.increments,
        }
    }
}

enum WaveNoise {
    None,
    /// One 2x2 kernel per mode for (position, velocity) noise.
    Additive(Vec<GaussianStepKernel>),
    /// One 3x3 kernel per mode for (position, velocity, Brownian increment).
    AdditiveTracked(Vec<GaussianStepKernel>),
    /// State-dependent amplitude; covariance assembled and factored per step.
    Multiplicative {
        amplitude: NoiseAmplitude,
        lambda_sq: Vec<f64>,
        kernels: MultiplicativeKernels,
        grid: CollocationGrid,
    },
}

/// Exponential-Euler integrator for the damped wave system
/// `mu u_tt = Delta u - u_t + b(x, u) + g(x, u) dW/dt` in mode coordinates.
pub struct WaveSolver {
    basis: Arc<SpectralBasis>,
    mu: f64,
    h: f64,
    drift: Drift,
    flow: Vec<WaveModeCoeffs>,
    /// (int f_v, int g_v) over one step: forcing response of (u, v) to a
    /// constant unit velocity kick (to be scaled by B_k / mu).
    forcing: Vec<(f64, f64)>,
    noise: WaveNoise,
}

impl WaveSolver {
    /// `cov = None` disables noise entirely (deterministic dynamics).
    /// `amplitude = Some(g)` makes the noise multiplicative (requires `cov`).
    /// `track_increments` samples the raw Brownian increment jointly with
    /// the state noise so runs can expose their own driving path (additive
    /// noise only).
    pub fn new(
        basis: &Arc<SpectralBasis>,
        mu: f64,
        h: f64,
        cov: Option<&CovarianceSpec>,
        nonlinearity: &Nonlinearity,
        amplitude: Option<&NoiseAmplitude>,
        track_increments: bool,
    ) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(SkramError::Config(format!("mass mu must be positive, got {mu}")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(SkramError::Config(format!("step size must be positive, got {h}")));
        }
        if let Some(c) = cov {
            c.validate()?;
        }
        if amplitude.is_some() && cov.is_none() {
            return Err(SkramError::Config(
                "multiplicative amplitude requires a covariance spec".into(),
            ));
        }
        if track_increments && (cov.is_none() || amplitude.is_some()) {
            return Err(SkramError::Config(
                "increment tracking is supported for additive noise only".into(),
            ));
        }
        let n = basis.n_modes();
        let lambdas = match cov {
            Some(c) => c.lambdas(basis),
            None => vec![1.0; n],
        };
        let drift = Drift::new(nonlinearity, basis, &lambdas, COLLOCATION_FACTOR)?;
        let mut flow = Vec::with_capacity(n);
        let mut forcing = Vec::with_capacity(n);
        for k in 0..n {
            let alpha = basis.alpha(k);
            flow.push(wave_mode_propagator(mu, alpha, h)?);
            let im = wave_mode_propagator_integral(mu, alpha, h)?;
            forcing.push((im.f_v, im.g_v));
        }
        let noise = match (cov, amplitude) {
            (None, _) => WaveNoise::None,
            (Some(c), None) if track_increments => {
                let mut kernels = Vec::with_capacity(n);
                for k in 0..n {
                    let alpha = basis.alpha(k);
                    let cv = wave_brownian_covariance(mu, alpha, c.lambda(alpha), h)?;
                    kernels.push(GaussianStepKernel::from_covariance_3(cv)?);
                }
                WaveNoise::AdditiveTracked(kernels)
            }
            (Some(c), None) => {
                let mut kernels = Vec::with_capacity(n);
                for k in 0..n {
                    let alpha = basis.alpha(k);
                    let cv = wave_step_covariance(mu, alpha, c.lambda(alpha), h)?;
                    kernels.push(GaussianStepKernel::from_covariance_2(cv)?);
                }
                WaveNoise::Additive(kernels)
            }
            (Some(_), Some(g)) => {
                g.validate()?;
                WaveNoise::Multiplicative {
                    amplitude: g.clone(),
                    lambda_sq: lambdas.iter().map(|l| l * l).collect(),
                    kernels: multiplicative_kernels(basis, mu, h, false)?,
                    grid: CollocationGrid::new(basis, COLLOCATION_FACTOR),
                }
            }
        };
        Ok(WaveSolver { basis: Arc::clone(basis), mu, h, drift, flow, forcing, noise })
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    pub fn mass(&self) -> f64 {
        self.mu
    }

    pub fn drift(&self) -> &Drift {
        &self.drift
    }

    /// Flow + frozen reaction forcing, no noise. `b_buf` is scratch of
    /// length n_modes.
    fn deterministic_step(&self, u: &mut [f64], v: &mut [f64], b_buf: &mut [f64]) {
        self.drift.apply(u, b_buf);
        for (k, m) in self.flow.iter().enumerate() {
            let (nu, nv) = m.apply(u[k], v[k]);
            let scale = b_buf[k] / self.mu;
            u[k] = nu + self.forcing[k].0 * scale;
            v[k] = nv + self.forcing[k].1 * scale;
        }
    }

    /// One deterministic step plus caller-supplied state noise (used to
    /// replay or aggregate exact noise realizations across step sizes).
    pub fn step_with_noise(
        &self,
        u: &mut [f64],
        v: &mut [f64],
        noise_u: &[f64],
        noise_v: &[f64],
        b_buf: &mut [f64],
    ) {
        self.deterministic_step(u, v, b_buf);
        for k in 0..u.len() {
            u[k] += noise_u[k];
            v[k] += noise_v[k];
        }
    }

    /// Assemble, factor and sample the multiplicative step covariance for
    /// the amplitude frozen at `u`; fills noise_u/noise_v.
    #[allow(clippy::too_many_arguments)]
    fn sample_multiplicative(
        &self,
        amplitude: &NoiseAmplitude,
        lambda_sq: &[f64],
        kernels: &MultiplicativeKernels,
        grid: &CollocationGrid,
        u: &[f64],
        stream: &mut NoiseStream,
        noise_u: &mut [f64],
        noise_v: &mut [f64],
    ) -> Result<()> {
        let n = u.len();
        let mut vals = vec![0.0; grid.n_points()];
        grid.synthesize(u, &mut vals);
        for v in vals.iter_mut() {
            *v = amplitude.pointwise(*v);
        }
        let mut gram = vec![0.0; n * n];
        grid.weighted_gram(&vals, &mut gram);
        // P = G G^T with G = gram . diag(lambda): P_jl = sum_k l_k^2 gram_jk gram_lk
        let mut p = vec![0.0; n * n];
        for j in 0..n {
            for l in j..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += lambda_sq[k] * gram[j * n + k] * gram[l * n + k];
                }
                p[j * n + l] = acc;
                p[l * n + j] = acc;
            }
        }
        let inv_mu2 = 1.0 / (self.mu * self.mu);
        let dim = 2 * n;
        let mut cov = vec![0.0; dim * dim];
        for j in 0..n {
            for l in 0..n {
                let pk = p[j * n + l] * inv_mu2;
                let kw = &kernels.k_ww[j * n + l];
                cov[j * dim + l] = pk * kw[0];
                cov[j * dim + (n + l)] = pk * kw[1];
                cov[(n + j) * dim + l] = pk * kw[2];
                cov[(n + j) * dim + (n + l)] = pk * kw[3];
            }
        }
        let kernel = GaussianStepKernel::from_covariance(&cov, dim)?;
        let mut xi = vec![0.0; dim];
        kernel.sample_into(stream, &mut xi);
        noise_u.copy_from_slice(&xi[..n]);
        noise_v.copy_from_slice(&xi[n..]);
        Ok(())
    }

    /// Simulate `n_steps` from (u0, v0). Stream state advances
    /// deterministically with the number of modes and steps.
    pub fn simulate(
        &self,
        u0: &[f64],
        v0: &[f64],
        n_steps: usize,
        stream: &mut NoiseStream,
        rec: &RecordSpec,
    ) -> Result<Trajectory> {
        let n = self.basis.n_modes();
        if u0.len() != n || v0.len() != n {
            return Err(SkramError::BasisMismatch(format!(
                "initial state has {} position / {} velocity modes, basis has {n}",
                u0.len(),
                v0.len()
            )));
        }
        if rec.increments && !matches!(self.noise, WaveNoise::AdditiveTracked(_)) {
            return Err(SkramError::Config(
                "increment recording requires a solver built with track_increments".into(),
            ));
        }
        let mut recorder = Recorder::new(rec, n_steps, true)?;
        let mut u = u0.to_vec();
        let mut v = v0.to_vec();
        let mut b_buf = vec![0.0; n];
        let mut noise_u = vec![0.0; n];
        let mut noise_v = vec![0.0; n];
        let mut incr = vec![0.0; n];
        recorder.push(0.0, &u, Some(&v));
        for step in 1..=n_steps {
            // sample noise first where the amplitude must see the pre-step state
            match &self.noise {
                WaveNoise::None => {
                    noise_u.fill(0.0);
                    noise_v.fill(0.0);
                }
                WaveNoise::Additive(kernels) => {
                    let mut xi = [0.0; 2];
                    for (k, kern) in kernels.iter().enumerate() {
                        kern.sample_into(stream, &mut xi);
                        noise_u[k] = xi[0];
                        noise_v[k] = xi[1];
                    }
                }
                WaveNoise::AdditiveTracked(kernels) => {
                    let mut xi = [0.0; 3];
                    for (k, kern) in kernels.iter().enumerate() {
                        kern.sample_into(stream, &mut xi);
                        noise_u[k] = xi[0];
                        noise_v[k] = xi[1];
                        incr[k] = xi[2];
                    }
                }
                WaveNoise::Multiplicative { amplitude, lambda_sq, kernels, grid } => {
                    self.sample_multiplicative(
                        amplitude,
                        lambda_sq,
                        kernels,
                        grid,
                        &u,
                        stream,
                        &mut noise_u,
                        &mut noise_v,
                    )?;
                }
            }
            self.deterministic_step(&mut u, &mut v, &mut b_buf);
            for k in 0..n {
                u[k] += noise_u[k];
                v[k] += noise_v[k];
            }
            check_finite_state(step, &[max_abs(&u), max_abs(&v)])?;
            recorder.push_noise(&noise_u, &noise_v);
            if matches!(self.noise, WaveNoise::AdditiveTracked(_)) {
                recorder.push_increment(&incr);
            }
            if recorder.wants(step, n_steps) {
                recorder.push(step as f64 * self.h, &u, Some(&v));
            }
        }
        Ok(recorder.finish(self.h))
    }
}

/// Exponential-Euler integrator for the limiting heat system
/// `u_t = Delta u + b(x, u) + dW/dt` (additive noise) in mode coordinates.
pub struct HeatSolver {
    basis: Arc<SpectralBasis>,
    h: f64,
    drift: Drift,
    decay: Vec<f64>,
    forcing: Vec<f64>,
    noise_std: Option<Vec<f64>>,
}

impl HeatSolver {
    pub fn new(
        basis: &Arc<SpectralBasis>,
        h: f64,
        cov: Option<&CovarianceSpec>,
        nonlinearity: &Nonlinearity,
    ) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(SkramError::Config(format!("step size must be positive, got {h}")));
        }
        if let Some(c) = cov {
            c.validate()?;
        }
        let n = basis.n_modes();
        let lambdas = match cov {
            Some(c) => c.lambdas(basis),
            None => vec![1.0; n],
        };
        let drift = Drift::new(nonlinearity, basis, &lambdas, COLLOCATION_FACTOR)?;
        let decay: Vec<f64> = (0..n).map(|k| heat_mode_decay(basis.alpha(k), h)).collect();
        let forcing: Vec<f64> = (0..n).map(|k| i0(basis.alpha(k), h)).collect();
        let noise_std = cov.map(|c| {
            (0..n)
                .map(|k| {
                    let alpha = basis.alpha(k);
                    heat_step_variance(alpha, c.lambda(alpha), h).sqrt()
                })
                .collect()
        });
        Ok(HeatSolver { basis: Arc::clone(basis), h, drift, decay, forcing, noise_std })
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    fn deterministic_step(&self, u: &mut [f64], b_buf: &mut [f64]) {
        self.drift.apply(u, b_buf);
        for k in 0..u.len() {
            u[k] = self.decay[k] * u[k] + self.forcing[k] * b_buf[k];
        }
    }

    pub fn simulate(
        &self,
        u0: &[f64],
        n_steps: usize,
        stream: &mut NoiseStream,
        rec: &RecordSpec,
    ) -> Result<Trajectory> {
        let n = self.basis.n_modes();
        if u0.len() != n {
            return Err(SkramError::BasisMismatch(format!(
                "initial state has {} modes, basis has {n}",
                u0.len()
            )));
        }
        if rec.increments || rec.noise_vectors {
            return Err(SkramError::Config(
                "per-step noise recording is implemented for the wave solver only".into(),
            ));
        }
        let mut recorder = Recorder::new(rec, n_steps, false)?;
        let mut u = u0.to_vec();
        let mut b_buf = vec![0.0; n];
        recorder.push(0.0, &u, None);
        for step in 1..=n_steps {
            self.deterministic_step(&mut u, &mut b_buf);
            if let Some(stds) = &self.noise_std {
                for k in 0..n {
                    u[k] += stds[k] * stream.normal();
                }
            }
            check_finite_state(step, &[max_abs(&u)])?;
            if recorder.wants(step, n_steps) {
                recorder.push(step as f64 * self.h, &u, None);
            }
        }
        Ok(recorder.finish(self.h))
    }
}

enum CoupledNoise {
    /// Deterministic pair (no covariance supplied).
    NoiseFree,
    /// One 3x3 kernel per mode: (wave position, wave velocity, heat).
    Additive(Vec<GaussianStepKernel>),
    /// Amplitude frozen at each system's own pre-step state; joint
    /// (2n + n)-dimensional covariance assembled per step.
    Multiplicative {
        amplitude: NoiseAmplitude,
        lambda_sq: Vec<f64>,
        kernels: MultiplicativeKernels,
        grid: CollocationGrid,
    },
}

/// Wave system and its small-mass heat limit advanced under one shared
/// Brownian path: each step draws the exact joint Gaussian of both systems'
/// increments, so the recorded pair realizes the pathwise coupling.
pub struct CoupledWaveHeat {
    basis: Arc<SpectralBasis>,
    mu: f64,
    h: f64,
    drift: Drift,
    wave_flow: Vec<WaveModeCoeffs>,
    wave_forcing: Vec<(f64, f64)>,
    heat_decay: Vec<f64>,
    heat_forcing: Vec<f64>,
    noise: CoupledNoise,
}

impl CoupledWaveHeat {
    pub fn new(
        basis: &Arc<SpectralBasis>,
        mu: f64,
        h: f64,
        cov: Option<&CovarianceSpec>,
        nonlinearity: &Nonlinearity,
        amplitude: Option<&NoiseAmplitude>,
    ) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(SkramError::Config(format!("mass mu must be positive, got {mu}")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(SkramError::Config(format!("step size must be positive, got {h}")));
        }
        if let Some(c) = cov {
            c.validate()?;
        } else if amplitude.is_some() {
            return Err(SkramError::Config(
                "a state-dependent amplitude modulates a base covariance; supply one".into(),
            ));
        }
        let n = basis.n_modes();
        let lambdas = match cov {
            Some(c) => c.lambdas(basis),
            None => vec![1.0; n],
        };
        let drift = Drift::new(nonlinearity, basis, &lambdas, COLLOCATION_FACTOR)?;
        let mut wave_flow = Vec::with_capacity(n);
        let mut wave_forcing = Vec::with_capacity(n);
        for k in 0..n {
            let alpha = basis.alpha(k);
            wave_flow.push(wave_mode_propagator(mu, alpha, h)?);
            let im = wave_mode_propagator_integral(mu, alpha, h)?;
            wave_forcing.push((im.f_v, im.g_v));
        }
        let heat_decay: Vec<f64> = (0..n).map(|k| heat_mode_decay(basis.alpha(k), h)).collect();
        let heat_forcing: Vec<f64> = (0..n).map(|k| i0(basis.alpha(k), h)).collect();
        let noise = match (cov, amplitude) {
            (None, _) => CoupledNoise::NoiseFree,
            (Some(c), None) => {
                let mut kernels = Vec::with_capacity(n);
                for k in 0..n {
                    let alpha = basis.alpha(k);
                    let cv = coupled_wave_heat_covariance(mu, alpha, c.lambda(alpha), h)?;
                    kernels.push(GaussianStepKernel::from_covariance_3(cv)?);
                }
                CoupledNoise::Additive(kernels)
            }
            (Some(_), Some(g)) => {
                g.validate()?;
                CoupledNoise::Multiplicative {
                    amplitude: g.clone(),
                    lambda_sq: lambdas.iter().map(|l| l * l).collect(),
                    kernels: multiplicative_kernels(basis, mu, h, true)?,
                    grid: CollocationGrid::new(basis, COLLOCATION_FACTOR),
                }
            }
        };
        Ok(CoupledWaveHeat {
            basis: Arc::clone(basis),
            mu,
            h,
            drift,
            wave_flow,
            wave_forcing,
            heat_decay,
            heat_forcing,
            noise,
        })
    }

    /// Joint multiplicative step noise: wave amplitude frozen at `uw`,
    /// heat amplitude frozen at `uh`; output slices are the wave position,
    /// wave velocity and heat increments.
    #[allow(clippy::too_many_arguments)]
    fn sample_multiplicative(
        &self,
        amplitude: &NoiseAmplitude,
        lambda_sq: &[f64],
        kernels: &MultiplicativeKernels,
        grid: &CollocationGrid,
        uw: &[f64],
        uh: &[f64],
        stream: &mut NoiseStream,
        noise_wu: &mut [f64],
        noise_wv: &mut [f64],
        noise_h: &mut [f64],
    ) -> Result<()> {
        let n = uw.len();
        let m = grid.n_points();
        let mut vals = vec![0.0; m];
        let mut gram_w = vec![0.0; n * n];
        let mut gram_h = vec![0.0; n * n];
        grid.synthesize(uw, &mut vals);
        for v in vals.iter_mut() {
            *v = amplitude.pointwise(*v);
        }
        grid.weighted_gram(&vals, &mut gram_w);
        grid.synthesize(uh, &mut vals);
        for v in vals.iter_mut() {
            *v = amplitude.pointwise(*v);
        }
        grid.weighted_gram(&vals, &mut gram_h);
        // P_ab = Ga diag(lambda^2) Gb^T for the three block pairings
        let pair = |ga: &[f64], gb: &[f64], out: &mut [f64]| {
            for j in 0..n {
                for l in 0..n {
                    let mut acc = 0.0;
                    for k in 0..n {
                        acc += lambda_sq[k] * ga[j * n + k] * gb[l * n + k];
                    }
                    out[j * n + l] = acc;
                }
            }
        };
        let mut p_ww = vec![0.0; n * n];
        let mut p_wh = vec![0.0; n * n];
        let mut p_hh = vec![0.0; n * n];
        pair(&gram_w, &gram_w, &mut p_ww);
        pair(&gram_w, &gram_h, &mut p_wh);
        pair(&gram_h, &gram_h, &mut p_hh);
        let inv_mu = 1.0 / self.mu;
        let inv_mu2 = inv_mu * inv_mu;
        let dim = 3 * n;
        let mut cov = vec![0.0; dim * dim];
        for j in 0..n {
            for l in 0..n {
                let kw = &kernels.k_ww[j * n + l];
                let pww = p_ww[j * n + l] * inv_mu2;
                cov[j * dim + l] = pww * kw[0];
                cov[j * dim + (n + l)] = pww * kw[1];
                cov[(n + j) * dim + l] = pww * kw[2];
                cov[(n + j) * dim + (n + l)] = pww * kw[3];
                // wave j against heat l: kernels.k_wh[j, l]
                let kwh = &kernels.k_wh[j * n + l];
                let pwh = p_wh[j * n + l] * inv_mu;
                cov[j * dim + (2 * n + l)] = pwh * kwh[0];
                cov[(n + j) * dim + (2 * n + l)] = pwh * kwh[1];
                cov[(2 * n + l) * dim + j] = pwh * kwh[0];
                cov[(2 * n + l) * dim + (n + j)] = pwh * kwh[1];
                cov[(2 * n + j) * dim + (2 * n + l)] = p_hh[j * n + l] * kernels.k_hh[j * n + l];
            }
        }
        let kernel = GaussianStepKernel::from_covariance(&cov, dim)?;
        let mut xi = vec![0.0; dim];
        kernel.sample_into(stream, &mut xi);
        noise_wu.copy_from_slice(&xi[..n]);
        noise_wv.copy_from_slice(&xi[n..2 * n]);
        noise_h.copy_from_slice(&xi[2 * n..]);
        Ok(())
    }

    /// Simulate the coupled pair: wave from (u0, v0), heat from `heat0`
    /// (typically `u0`). Returns (wave trajectory, heat trajectory) on the
    /// same time grid.
    pub fn simulate(
        &self,
        u0: &[f64],
        v0: &[f64],
        heat0: &[f64],
        n_steps: usize,
        stream: &mut NoiseStream,
        rec: &RecordSpec,
    ) -> Result<(Trajectory, Trajectory)> {
        let n = self.basis.n_modes();
        if u0.len() != n || v0.len() != n || heat0.len() != n {
            return Err(SkramError::BasisMismatch(
                "initial states must match the basis mode count".into(),
            ));
        }
        if rec.increments || rec.noise_vectors {
            return Err(SkramError::Config(
                "per-step noise recording is implemented for the wave solver only".into(),
            ));
        }
        let mut rec_wave = Recorder::new(rec, n_steps, true)?;
        let mut rec_heat = Recorder::new(rec, n_steps, false)?;
        let mut uw = u0.to_vec();
        let mut vw = v0.to_vec();
        let mut uh = heat0.to_vec();
        let mut bw = vec![0.0; n];
        let mut bh = vec![0.0; n];
        let mut noise_wu = vec![0.0; n];
        let mut noise_wv = vec![0.0; n];
        let mut noise_h = vec![0.0; n];
        rec_wave.push(0.0, &uw, Some(&vw));
        rec_heat.push(0.0, &uh, None);
        for step in 1..=n_steps {
            match &self.noise {
                CoupledNoise::NoiseFree => {
                    noise_wu.fill(0.0);
                    noise_wv.fill(0.0);
                    noise_h.fill(0.0);
                }
                CoupledNoise::Additive(kernels) => {
                    let mut xi = [0.0; 3];
                    for (k, kern) in kernels.iter().enumerate() {
                        kern.sample_into(stream, &mut xi);
                        noise_wu[k] = xi[0];
                        noise_wv[k] = xi[1];
                        noise_h[k] = xi[2];
                    }
                }
                CoupledNoise::Multiplicative { amplitude, lambda_sq, kernels, grid } => {
                    self.sample_multiplicative(
                        amplitude, lambda_sq, kernels, grid, &uw, &uh, stream, &mut noise_wu,
                        &mut noise_wv, &mut noise_h,
                    )?;
                }
            }
            self.drift.apply(&uw, &mut bw);
            self.drift.apply(&uh, &mut bh);
            for k in 0..n {
                let (nu, nv) = self.wave_flow[k].apply(uw[k], vw[k]);
                let scale = bw[k] / self.mu;
                uw[k] = nu + self.wave_forcing[k].0 * scale + noise_wu[k];
                vw[k] = nv + self.wave_forcing[k].1 * scale + noise_wv[k];
                uh[k] = self.heat_decay[k] * uh[k] + self.heat_forcing[k] * bh[k] + noise_h[k];
            }
            check_finite_state(step, &[max_abs(&uw), max_abs(&vw), max_abs(&uh)])?;
            if rec_wave.wants(step, n_steps) {
                let t = step as f64 * self.h;
                rec_wave.push(t, &uw, Some(&vw));
                rec_heat.push(t, &uh, None);
            }
        }
        Ok((rec_wave.finish(self.h), rec_heat.finish(self.h)))
    }
}

/// Exact-flow integrator for the magnetic system per complex mode:
/// `mu w'' + (eps - i) w' + alpha w = B(w) + complex noise`. The reaction
/// acts componentwise on the two real field components (the real and
/// imaginary parts of the complexified state), frozen at the left endpoint
/// and integrated against the exact flow like the scalar wave case; the
/// forcing integral has the same algebraic closed form with complex
/// friction: int w_v = (mu (1 - v_v) - (eps - i) w_v) / alpha,
/// int v_v = w_v.
pub struct MagneticSolver {
    basis: Arc<SpectralBasis>,
    mu: f64,
    h: f64,
    drift: Drift,
    flow: Vec<MagneticModeCoeffs>,
    forcing: Vec<(Complex64, Complex64)>,
    kernels: Option<Vec<ComplexGaussianStepKernel>>,
}

impl MagneticSolver {
    pub fn new(
        basis: &Arc<SpectralBasis>,
        mu: f64,
        eps: f64,
        h: f64,
        cov: Option<&CovarianceSpec>,
        nonlinearity: &Nonlinearity,
    ) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(SkramError::Config(format!("mass mu must be positive, got {mu}")));
        }
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(SkramError::Config(format!("friction eps must be >= 0, got {eps}")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(SkramError::Config(format!("step size must be positive, got {h}")));
        }
        if let Some(c) = cov {
            c.validate()?;
        }
        let n = basis.n_modes();
        let lambdas = match cov {
            Some(c) => c.lambdas(basis),
            None => vec![1.0; n],
        };
        let drift = Drift::new(nonlinearity, basis, &lambdas, COLLOCATION_FACTOR)?;
        let b = Complex64::new(eps, -1.0);
        let mut flow = Vec::with_capacity(n);
        let mut forcing = Vec::with_capacity(n);
        for k in 0..n {
            let alpha = basis.alpha(k);
            let m = magnetic_mode_propagator(mu, eps, alpha, h)?;
            let one = Complex64::new(1.0, 0.0);
            forcing.push(((mu * (one - m.v_v) - b * m.w_v) / alpha, m.w_v));
            flow.push(m);
        }
        let kernels = match cov {
            None => None,
            Some(c) => {
                let mut ks = Vec::with_capacity(n);
                for k in 0..n {
                    let alpha = basis.alpha(k);
                    let cv = magnetic_step_covariance(mu, eps, alpha, c.lambda(alpha), h)?;
                    ks.push(ComplexGaussianStepKernel::from_covariance_2(cv)?);
                }
                Some(ks)
            }
        };
        Ok(MagneticSolver { basis: Arc::clone(basis), mu, h, drift, flow, forcing, kernels })
    }

    pub fn simulate(
        &self,
        w0: &[Complex64],
        v0: &[Complex64],
        n_steps: usize,
        stream: &mut NoiseStream,
        rec: &RecordSpec,
    ) -> Result<ComplexTrajectory> {
        let n = self.basis.n_modes();
        if w0.len() != n || v0.len() != n {
            return Err(SkramError::BasisMismatch(
                "initial states must match the basis mode count".into(),
            ));
        }
        if rec.increments || rec.noise_vectors {
            return Err(SkramError::Config(
                "per-step noise recording is implemented for the wave solver only".into(),
            ));
        }
        let mut recorder = ComplexRecorder::new(rec, n_steps, true)?;
        let mut w = w0.to_vec();
        let mut v = v0.to_vec();
        let mut xi = [Complex64::new(0.0, 0.0); 2];
        let with_drift = !self.drift.is_zero();
        let mut re = vec![0.0; n];
        let mut im = vec![0.0; n];
        let mut b_re = vec![0.0; n];
        let mut b_im = vec![0.0; n];
        recorder.push(0.0, &w, Some(&v));
        for step in 1..=n_steps {
            if with_drift {
                for k in 0..n {
                    re[k] = w[k].re;
                    im[k] = w[k].im;
                }
                self.drift.apply(&re, &mut b_re);
                self.drift.apply(&im, &mut b_im);
            }
            for k in 0..n {
                let (nw, nv) = self.flow[k].apply(w[k], v[k]);
                w[k] = nw;
                v[k] = nv;
                if with_drift {
                    let bk = Complex64::new(b_re[k], b_im[k]) / self.mu;
                    w[k] += self.forcing[k].0 * bk;
                    v[k] += self.forcing[k].1 * bk;
                }
                if let Some(kernels) = &self.kernels {
                    kernels[k].sample_into(stream, &mut xi);
                    w[k] += xi[0];
                    v[k] += xi[1];
                }
            }
            check_finite_state(step, &[max_abs_c(&w), max_abs_c(&v)])?;
            if recorder.wants(step, n_steps) {
                recorder.push(step as f64 * self.h, &w, Some(&v));
            }
        }
        Ok(recorder.finish(self.h))
    }
}

/// Magnetic system and its zero-mass rotated-heat limit under one shared
/// complex Brownian path. Linear dynamics only (B = 0): the double-limit
/// experiments quantify the noise-driven gap, which the reaction term would
/// only obscure.
pub struct CoupledMagneticHeat {
    basis: Arc<SpectralBasis>,
    h: f64,
    flow: Vec<MagneticModeCoeffs>,
    heat_factor: Vec<Complex64>,
    kernels: Option<Vec<ComplexGaussianStepKernel>>,
}

impl CoupledMagneticHeat {
    pub fn new(
        basis: &Arc<SpectralBasis>,
        mu: f64,
        eps: f64,
        h: f64,
        cov: Option<&CovarianceSpec>,
    ) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(SkramError::Config(format!("mass mu must be positive, got {mu}")));
        }
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(SkramError::Config(format!("friction eps must be >= 0, got {eps}")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(SkramError::Config(format!("step size must be positive, got {h}")));
        }
        if let Some(c) = cov {
            c.validate()?;
        }
        let n = basis.n_modes();
        let mut flow = Vec::with_capacity(n);
        let mut heat_factor = Vec::with_capacity(n);
        let mut kernels = cov.map(|_| Vec::with_capacity(n));
        for k in 0..n {
            let alpha = basis.alpha(k);
            flow.push(magnetic_mode_propagator(mu, eps, alpha, h)?);
            heat_factor.push(rotated_heat_mode_factor(eps, alpha, h));
            if let (Some(c), Some(ks)) = (cov, kernels.as_mut()) {
                let cv = coupled_magnetic_heat_covariance(mu, eps, alpha, c.lambda(alpha), h)?;
                ks.push(ComplexGaussianStepKernel::from_covariance_3(cv)?);
            }
        }
        Ok(CoupledMagneticHeat { basis: Arc::clone(basis), h, flow, heat_factor, kernels })
    }

    pub fn simulate(
        &self,
        w0: &[Complex64],
        v0: &[Complex64],
        heat0: &[Complex64],
        n_steps: usize,
        stream: &mut NoiseStream,
        rec: &RecordSpec,
    ) -> Result<(ComplexTrajectory, ComplexTrajectory)> {
        let n = self.basis.n_modes();
        if w0.len() != n || v0.len() != n || heat0.len() != n {
            return Err(SkramError::BasisMismatch(
                "initial states must match the basis mode count".into(),
            ));
        }
        if rec.increments || rec.noise_vectors {
            return Err(SkramError::Config(
                "per-step noise recording is implemented for the wave solver only".into(),
            ));
        }
        let mut rec_mag = ComplexRecorder::new(rec, n_steps, true)?;
        let mut rec_heat = ComplexRecorder::new(rec, n_steps, false)?;
        let mut w = w0.to_vec();
        let mut v = v0.to_vec();
        let mut z = heat0.to_vec();
        let mut xi = [Complex64::new(0.0, 0.0); 3];
        rec_mag.push(0.0, &w, Some(&v));
        rec_heat.push(0.0, &z, None);
        for step in 1..=n_steps {
            for k in 0..n {
                if let Some(kernels) = &self.kernels {
                    kernels[k].sample_into(stream, &mut xi);
                } else {
                    xi = [Complex64::new(0.0, 0.0); 3];
                }
                let (nw, nv) = self.flow[k].apply(w[k], v[k]);
                w[k] = nw + xi[0];
                v[k] = nv + xi[1];
                z[k] = self.heat_factor[k] * z[k] + xi[2];
            }
            check_finite_state(step, &[max_abs_c(&w), max_abs_c(&v), max_abs_c(&z)])?;
            if rec_mag.wants(step, n_steps) {
                let t = step as f64 * self.h;
                rec_mag.push(t, &w, Some(&v));
                rec_heat.push(t, &z, None);
            }
        }
        Ok((rec_mag.finish(self.h), rec_heat.finish(self.h)))
    }
}

/// Two rotated-heat systems with frictions `eps_a`, `eps_b` under one shared
/// complex Brownian path (used to quantify the zero-friction limit).
pub struct RotatedHeatPair {
    basis: Arc<SpectralBasis>,
    h: f64,
    factor_a: Vec<Complex64>,
    factor_b: Vec<Complex64>,
    kernels: Option<Vec<ComplexGaussianStepKernel>>,
}

impl RotatedHeatPair {
    pub fn new(
        basis: &Arc<SpectralBasis>,
        eps_a: f64,
        eps_b: f64,
        h: f64,
        cov: Option<&CovarianceSpec>,
    ) -> Result<Self> {
        if !(eps_a >= 0.0 && eps_a.is_finite() && eps_b >= 0.0 && eps_b.is_finite()) {
            return Err(SkramError::Config("frictions must be >= 0".into()));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(SkramError::Config(format!("step size must be positive, got {h}")));
        }
        if let Some(c) = cov {
            c.validate()?;
        }
        let n = basis.n_modes();
        let mut factor_a = Vec::with_capacity(n);
        let mut factor_b = Vec::with_capacity(n);
        let mut kernels = cov.map(|_| Vec::with_capacity(n));
        for k in 0..n {
            let alpha = basis.alpha(k);
            factor_a.push(rotated_heat_mode_factor(eps_a, alpha, h));
            factor_b.push(rotated_heat_mode_factor(eps_b, alpha, h));
            if let (Some(c), Some(ks)) = (cov, kernels.as_mut()) {
                let cv =
                    coupled_rotated_heat_pair_covariance(eps_a, eps_b, alpha, c.lambda(alpha), h);
                ks.push(ComplexGaussianStepKernel::from_covariance_2(cv)?);
            }
        }
        Ok(RotatedHeatPair { basis: Arc::clone(basis), h, factor_a, factor_b, kernels })
    }

    pub fn simulate(
        &self,
        z0: &[Complex64],
        n_steps: usize,
        stream: &mut NoiseStream,
        rec: &RecordSpec,
    ) -> Result<(ComplexTrajectory, ComplexTrajectory)> {
        let n = self.basis.n_modes();
        if z0.len() != n {
            return Err(SkramError::BasisMismatch(
                "initial state must match the basis mode count".into(),
            ));
        }
        if rec.increments || rec.noise_vectors {
            return Err(SkramError::Config(
                "per-step noise recording is implemented for the wave solver only".into(),
            ));
        }
        let mut rec_a = ComplexRecorder::new(rec, n_steps, false)?;
        let mut rec_b = ComplexRecorder::new(rec, n_steps, false)?;
        let mut za = z0.to_vec();
        let mut zb = z0.to_vec();
        let mut xi = [Complex64::new(0.0, 0.0); 2];
        rec_a.push(0.0, &za, None);
        rec_b.push(0.0, &zb, None);
        for step in 1..=n_steps {
            for k in 0..n {
                if let Some(kernels) = &self.kernels {
                    kernels[k].sample_into(stream, &mut xi);
                } else {
                    xi = [Complex64::new(0.0, 0.0); 2];
                }
                za[k] = self.factor_a[k] * za[k] + xi[0];
                zb[k] = self.factor_b[k] * zb[k] + xi[1];
            }
            check_finite_state(step, &[max_abs_c(&za), max_abs_c(&zb)])?;
            if rec_a.wants(step, n_steps) {
                let t = step as f64 * self.h;
                rec_a.push(t, &za, None);
                rec_b.push(t, &zb, None);
            }
        }
        Ok((rec_a.finish(self.h), rec_b.finish(self.h)))
    }
}

struct ComplexRecorder {
    every: usize,
    times: Vec<f64>,
    positions: Vec<Vec<Complex64>>,
    velocities: Option<Vec<Vec<Complex64>>>,
}

impl ComplexRecorder {
    fn new(rec: &RecordSpec, n_steps: usize, has_velocity: bool) -> Result<Self> {
        rec.validate()?;
        let n_rec = n_steps / rec.every + 2;
        Ok(ComplexRecorder {
            every: rec.every,
            times: Vec::with_capacity(n_rec),
            positions: Vec::with_capacity(n_rec),
            velocities: (rec.velocities && has_velocity).then(|| Vec::with_capacity(n_rec)),
        })
    }

    fn wants(&self, step: usize, n_steps: usize) -> bool {
        step == 0 || step == n_steps || step.is_multiple_of(self.every)
    }

    fn push(&mut self, t: f64, w: &[Complex64], v: Option<&[Complex64]>) {
        self.times.push(t);
        self.positions.push(w.to_vec());
        if let Some(vs) = self.velocities.as_mut() {
            vs.push(v.expect("velocity recording requires a velocity state").to_vec());
        }
    }

    fn finish(self, h: f64) -> ComplexTrajectory {
        ComplexTrajectory {
            h,
            times: self.times,
            positions: self.positions,
            velocities: self.velocities,
        }
    }
}
