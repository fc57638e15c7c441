//! Invariant-measure machinery: exact stationary covariances of the linear
//! damped wave flow, long-run empirical moments with autocorrelation-aware
//! effective sample sizes, a Boltzmann–Gibbs sampler for gradient reactions,
//! and the mass-independence comparison for the position marginal.
//!
//! The linear system's stationary law factorizes into a position Gaussian
//! with mode variances `lambda^2 / (2 alpha)` (mass-independent) and a
//! velocity Gaussian with mode variances `lambda^2 / (2 mu)`. On the phase
//! space (positions measured in L^2, velocities in H^{-1}) the total trace
//! is `(1 + 1/mu)/2 * sum_k lambda_k^2 / alpha_k`; summing the mode
//! variances must reproduce that closed form to near machine precision,
//! and every constructed [`StationarySpec`] enforces it.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Result, SkramError};
use crate::noise::CovarianceSpec;
use crate::nonlinearity::Nonlinearity;
use crate::rng::NoiseStream;
use crate::solver::{RecordSpec, Trajectory, WaveSolver};
use crate::spectral::SpectralBasis;

/// Stationary variances of one linear damped-wave mode:
/// `(lambda^2 / (2 alpha), lambda^2 / (2 mu))`. The position variance does
/// not depend on the mass; the velocity variance does not depend on the
/// stiffness (equipartition at temperature `lambda^2 / 2`).
pub fn exact_mode_stationary_cov(mu: f64, alpha: f64, lambda: f64) -> Result<(f64, f64)> {
    if !(mu > 0.0 && mu.is_finite() && alpha > 0.0 && alpha.is_finite()) {
        return Err(SkramError::Config(format!(
            "mass and stiffness must be positive, got mu={mu}, alpha={alpha}"
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(SkramError::Config(format!(
            "noise amplitude must be non-negative, got {lambda}"
        )));
    }
    Ok((lambda * lambda / (2.0 * alpha), lambda * lambda / (2.0 * mu)))
}

/// A linear stationary problem: basis, covariance, mass. Construction checks
/// the phase-space trace identity, so a successfully built spec is already
/// internally consistent.
#[derive(Debug, Clone)]
pub struct StationarySpec {
    pub basis: Arc<SpectralBasis>,
    pub covariance: CovarianceSpec,
    pub mu: f64,
}

impl StationarySpec {
    pub fn new(basis: Arc<SpectralBasis>, covariance: CovarianceSpec, mu: f64) -> Result<Self> {
        covariance.validate()?;
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(SkramError::Config(format!("mass must be positive, got {mu}")));
        }
        let spec = StationarySpec { basis, covariance, mu };
        let summed = spec.trace_from_modes()?;
        let closed = spec.trace_closed_form();
        if (summed - closed).abs() > 1e-12 * closed.max(1.0) {
            return Err(SkramError::Numerics(format!(
                "stationary trace identity violated: mode sum {summed} vs closed form {closed}"
            )));
        }
        Ok(spec)
    }

    /// Per-mode stationary variances `(var_u, var_v)` in L^2 coordinates.
    pub fn mode_variances(&self) -> Result<Vec<(f64, f64)>> {
        let lambdas = self.covariance.lambdas(&self.basis);
        self.basis
            .alphas()
            .iter()
            .zip(&lambdas)
            .map(|(&alpha, &lambda)| exact_mode_stationary_cov(self.mu, alpha, lambda))
            .collect()
    }

    /// Phase-space trace assembled mode by mode: positions contribute their
    /// L^2 variances, velocities their H^{-1} variances (`var_v / alpha`).
    pub fn trace_from_modes(&self) -> Result<f64> {
        let mut acc = 0.0;
        for (k, (var_u, var_v)) in self.mode_variances()?.into_iter().enumerate() {
            acc += var_u + var_v / self.basis.alpha(k);
        }
        Ok(acc)
    }

    /// The same trace in closed form: `(1 + 1/mu)/2 * sum_k lambda_k^2/alpha_k`.
    pub fn trace_closed_form(&self) -> f64 {
        let lambdas = self.covariance.lambdas(&self.basis);
        let base: f64 = self
            .basis
            .alphas()
            .iter()
            .zip(&lambdas)
            .map(|(&a, &l)| l * l / a)
            .sum();
        0.5 * (1.0 + 1.0 / self.mu) * base
    }
}

// ---------------------------------------------------------------------------
// Long-run empirical moments
// ---------------------------------------------------------------------------

/// Moments of one scalar time series, with an effective sample size from the
/// integrated autocorrelation time (initial-positive-pair truncation).
#[derive(Debug, Clone, Serialize)]
pub struct SeriesMoments {
    pub mean: f64,
    pub var: f64,
    pub ess: f64,
}

/// Long-run moments of a trajectory past burn-in.
#[derive(Debug, Clone, Serialize)]
pub struct LongRunMoments {
    pub position: Vec<SeriesMoments>,
    pub velocity: Option<Vec<SeriesMoments>>,
    pub n_used: usize,
    /// Any component's effective sample size fell below 100 (also logged).
    pub ess_warning: bool,
}

fn series_moments(x: &[f64]) -> SeriesMoments {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let c0 = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let var = if n > 1 { c0 * n as f64 / (n - 1) as f64 } else { 0.0 };
    if c0 <= 0.0 {
        // Constant series: every point is as good as independent.
        return SeriesMoments { mean, var: 0.0, ess: n as f64 };
    }
    let rho = |lag: usize| -> f64 {
        let mut acc = 0.0;
        for i in 0..n - lag {
            acc += (x[i] - mean) * (x[i + lag] - mean);
        }
        acc / (n as f64 * c0)
    };
    // Integrated autocorrelation time 1 + 2 sum rho_l, truncated where the
    // pair sums rho_{2m-1} + rho_{2m} first turn non-positive.
    let mut tau = 1.0;
    let mut lag = 1;
    while lag + 1 < n / 2 {
        let pair = rho(lag) + rho(lag + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    SeriesMoments { mean, var, ess: n as f64 / tau }
}

/// Time-average moments of every mode past `burn_in_fraction` of the
/// trajectory, for positions and (when recorded) velocities. Logs a warning
/// when any effective sample size drops below 100 — the averages are then
/// dominated by autocorrelation, not data.
pub fn empirical_long_run_moments(
    traj: &Trajectory,
    burn_in_fraction: f64,
) -> Result<LongRunMoments> {
    if !(0.0..1.0).contains(&burn_in_fraction) {
        return Err(SkramError::Config(format!(
            "burn-in fraction must lie in [0, 1), got {burn_in_fraction}"
        )));
    }
    let total = traj.positions.len();
    let start = (total as f64 * burn_in_fraction).floor() as usize;
    let n_used = total - start;
    if n_used < 2 {
        return Err(SkramError::Config(format!(
            "trajectory leaves {n_used} points after burn-in; need at least 2"
        )));
    }
    let n_modes = traj.positions[0].len();
    let mut buf = vec![0.0; n_used];
    let collect = |rows: &Vec<Vec<f64>>, k: usize, buf: &mut Vec<f64>| {
        for (i, row) in rows[start..].iter().enumerate() {
            buf[i] = row[k];
        }
    };
    let mut position = Vec::with_capacity(n_modes);
    for k in 0..n_modes {
        collect(&traj.positions, k, &mut buf);
        position.push(series_moments(&buf));
    }
    let velocity = match &traj.velocities {
        Some(rows) => {
            let mut v = Vec::with_capacity(n_modes);
            for k in 0..n_modes {
                collect(rows, k, &mut buf);
                v.push(series_moments(&buf));
            }
            Some(v)
        }
        None => None,
    };
    let min_ess = position
        .iter()
        .chain(velocity.iter().flatten())
        .map(|m| m.ess)
        .fold(f64::INFINITY, f64::min);
    let ess_warning = min_ess < 100.0;
    if ess_warning {
        eprintln!(
            "warning: long-run moments have effective sample size {min_ess:.1} (< 100); \
             extend the run or thin less aggressively"
        );
    }
    Ok(LongRunMoments { position, velocity, n_used, ess_warning })
}

// ---------------------------------------------------------------------------
// Boltzmann–Gibbs sampling
// ---------------------------------------------------------------------------

/// Potential value F(u) for the gradient reactions: zero for the linear
/// system, `kappa/2 |u|^2` for the quadratic gradient drift (whose reaction
/// is `-kappa Q^2 u`, so the Boltzmann density tilts the reference Gaussian
/// by `exp(-2F)`). Other reactions have no potential in this registry.
pub fn potential_value(nl: &Nonlinearity, u: &[f64]) -> Result<f64> {
    match nl {
        Nonlinearity::Zero => Ok(0.0),
        Nonlinearity::GradientQuadratic { kappa } => {
            Ok(0.5 * kappa * u.iter().map(|x| x * x).sum::<f64>())
        }
        _ => Err(SkramError::Config(
            "Boltzmann sampling requires a gradient reaction (zero or quadratic potential)"
                .into(),
        )),
    }
}

/// Acceptance probability of the autoregressive (preconditioned
/// Crank–Nicolson) move `u -> u_prop`: `min(1, exp(-2 (F(u_prop) - F(u))))`.
/// The proposal is reversible for the reference Gaussian, so this factor
/// alone enforces detailed balance for the tilted measure.
pub fn boltzmann_acceptance(nl: &Nonlinearity, u: &[f64], u_prop: &[f64]) -> Result<f64> {
    let df = potential_value(nl, u_prop)? - potential_value(nl, u)?;
    Ok((-2.0 * df).exp().min(1.0))
}

/// Tuning knobs for the Boltzmann chain.
#[derive(Debug, Clone)]
pub struct McmcOptions {
    /// Proposal mixing parameter in (0, 1]; 1 proposes independent draws.
    pub step: f64,
    /// Keep every `thin`-th state.
    pub thin: usize,
    /// Fraction of the total chain discarded before collecting.
    pub burn_in_fraction: f64,
}

impl Default for McmcOptions {
    fn default() -> Self {
        McmcOptions { step: 0.3, thin: 10, burn_in_fraction: 0.2 }
    }
}

/// A thinned sample set from the Boltzmann chain.
#[derive(Debug, Clone)]
pub struct McmcOutput {
    /// One row per kept sample, columns = mode coefficients.
    pub samples: Vec<Vec<f64>>,
    /// Acceptance rate over the collection phase.
    pub acceptance: f64,
    /// Final proposal step (after any auto-retune).
    pub step: f64,
    pub retuned: bool,
}

/// Draw `n_samples` independent fields from the reference Gaussian (mode
/// standard deviations `lambda_k / sqrt(2 alpha_k)`).
pub fn sample_reference_gaussian(
    covariance: &CovarianceSpec,
    basis: &Arc<SpectralBasis>,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    covariance.validate()?;
    let sigmas = reference_sigmas(covariance, basis);
    let mut stream = NoiseStream::new(seed, 0);
    Ok((0..n_samples)
        .map(|_| sigmas.iter().map(|s| s * stream.normal()).collect())
        .collect())
}

fn reference_sigmas(covariance: &CovarianceSpec, basis: &Arc<SpectralBasis>) -> Vec<f64> {
    covariance
        .lambdas(basis)
        .iter()
        .zip(basis.alphas())
        .map(|(&l, &a)| l / (2.0 * a).sqrt())
        .collect()
}

/// One sweep of `iters` autoregressive Metropolis moves; returns the
/// acceptance fraction and optionally collects every `thin`-th state.
fn chain_segment(
    u: &mut [f64],
    iters: usize,
    s: f64,
    sigmas: &[f64],
    nl: &Nonlinearity,
    stream: &mut NoiseStream,
    mut sink: Option<(&mut Vec<Vec<f64>>, usize)>,
) -> Result<f64> {
    let keep = (1.0 - s * s).max(0.0).sqrt();
    let mut accepted = 0usize;
    let mut prop = vec![0.0; u.len()];
    let mut f_current = potential_value(nl, u)?;
    for it in 1..=iters {
        for (p, (&cur, &sig)) in prop.iter_mut().zip(u.iter().zip(sigmas)) {
            *p = keep * cur + s * sig * stream.normal();
        }
        let f_prop = potential_value(nl, &prop)?;
        if stream.uniform() < (-2.0 * (f_prop - f_current)).exp().min(1.0) {
            u.copy_from_slice(&prop);
            f_current = f_prop;
            accepted += 1;
        }
        if let Some((samples, thin)) = sink.as_mut() {
            if it % *thin == 0 {
                samples.push(u.to_vec());
            }
        }
    }
    Ok(accepted as f64 / iters.max(1) as f64)
}

/// Metropolis–Hastings chain for the position Boltzmann measure
/// `Z^{-1} exp(-2 F(u)) N(0, reference)`: autoregressive proposals around
/// the reference Gaussian, acceptance `min(1, exp(-2 dF))`. A short pilot
/// phase retunes the proposal step (with a logged warning) whenever the
/// acceptance rate leaves [0.1, 0.9]; the collection phase runs at a frozen
/// step, preserving detailed balance. Fixed seeds reproduce chains exactly.
pub fn boltzmann_mcmc_sample(
    potential: &Nonlinearity,
    covariance: &CovarianceSpec,
    basis: &Arc<SpectralBasis>,
    n_samples: usize,
    seed: u64,
    opts: &McmcOptions,
) -> Result<McmcOutput> {
    covariance.validate()?;
    if n_samples == 0 {
        return Err(SkramError::Config("need at least one sample".into()));
    }
    if !(opts.step > 0.0 && opts.step <= 1.0) {
        return Err(SkramError::Config(format!(
            "proposal step must lie in (0, 1], got {}",
            opts.step
        )));
    }
    if opts.thin == 0 {
        return Err(SkramError::Config("thinning must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&opts.burn_in_fraction) {
        return Err(SkramError::Config(format!(
            "burn-in fraction must lie in [0, 1), got {}",
            opts.burn_in_fraction
        )));
    }
    if let Nonlinearity::GradientQuadratic { kappa } = potential {
        if *kappa < 0.0 {
            return Err(SkramError::Config(
                "the Boltzmann density needs a non-negative potential; \
                 the quadratic coefficient is negative"
                    .into(),
            ));
        }
    }
    // Fail early on unsupported reactions.
    potential_value(potential, &vec![0.0; basis.n_modes()])?;
    let sigmas = reference_sigmas(covariance, basis);
    let mut stream = NoiseStream::new(seed, 0);
    let mut u = vec![0.0; basis.n_modes()];
    let mut s = opts.step;
    let mut retuned = false;
    for _ in 0..8 {
        let acc = chain_segment(&mut u, 500, s, &sigmas, potential, &mut stream, None)?;
        if (0.1..=0.9).contains(&acc) || (acc > 0.9 && s >= 1.0) {
            break;
        }
        retuned = true;
        let new_s = if acc < 0.1 { (s * 0.5).max(1e-4) } else { (s * 1.8).min(1.0) };
        eprintln!(
            "warning: Boltzmann chain acceptance {acc:.3} outside [0.1, 0.9] at step {s:.4}; \
             retuning to {new_s:.4}"
        );
        if new_s == s {
            break;
        }
        s = new_s;
    }
    let keep_iters = n_samples * opts.thin;
    let burn =
        ((opts.burn_in_fraction / (1.0 - opts.burn_in_fraction)) * keep_iters as f64).ceil()
            as usize;
    chain_segment(&mut u, burn, s, &sigmas, potential, &mut stream, None)?;
    let mut samples = Vec::with_capacity(n_samples);
    let acceptance = chain_segment(
        &mut u,
        keep_iters,
        s,
        &sigmas,
        potential,
        &mut stream,
        Some((&mut samples, opts.thin)),
    )?;
    Ok(McmcOutput { samples, acceptance, step: s, retuned })
}

// ---------------------------------------------------------------------------
// Mass independence of the position marginal
// ---------------------------------------------------------------------------

/// Configuration for the two-mass comparison run.
#[derive(Debug, Clone)]
pub struct MarginalTestConfig {
    pub basis: Arc<SpectralBasis>,
    pub covariance: CovarianceSpec,
    pub nonlinearity: Nonlinearity,
    pub h: f64,
    pub t_final: f64,
    pub burn_in_fraction: f64,
    /// Boltzmann chain length for the gradient-case cross-check; 0 skips it.
    pub mcmc_samples: usize,
}

/// Result of comparing the long-run laws at two masses.
#[derive(Debug, Clone, Serialize)]
pub struct MarginalComparison {
    pub mu_a: f64,
    pub mu_b: f64,
    pub a: LongRunMoments,
    pub b: LongRunMoments,
    /// max_k |var_u_a - var_u_b| / sqrt(se_a^2 + se_b^2), the headline
    /// statistic: large values reject mass independence of the position law.
    pub max_position_discrepancy: f64,
    /// Per-mode velocity variance ratios var_v_a / var_v_b (exactly
    /// mu_b / mu_a in the linear stationary law).
    pub velocity_variance_ratio: Vec<f64>,
    /// Gradient-case only: per-mode position variances of an independent
    /// Boltzmann chain targeting the shared invariant position marginal.
    pub boltzmann_variance: Option<Vec<f64>>,
}

fn variance_se(m: &SeriesMoments) -> f64 {
    m.var * (2.0 / m.ess.max(1.0)).sqrt()
}

/// Run the damped wave flow at two masses under independent noise and
/// compare their long-run laws: position moments must agree (the invariant
/// position marginal does not see the mass), velocity variances must scale
/// inversely with the mass. For gradient reactions an independent Boltzmann
/// chain supplies a third, time-discretization-free route to the same
/// position marginal.
pub fn marginal_mu_independence_test(
    mu_a: f64,
    mu_b: f64,
    cfg: &MarginalTestConfig,
    seed: u64,
) -> Result<MarginalComparison> {
    cfg.covariance.validate()?;
    let n = cfg.basis.n_modes();
    let n_steps = crate::sk::steps_for(cfg.t_final, cfg.h);
    if n_steps < 10 {
        return Err(SkramError::Config(
            "the comparison needs a long run; increase the final time".into(),
        ));
    }
    let rec = RecordSpec::every(1).with_velocities();
    let run = |mu: f64, stream_index: u64| -> Result<LongRunMoments> {
        let solver =
            WaveSolver::new(&cfg.basis, mu, cfg.h, Some(&cfg.covariance), &cfg.nonlinearity, None, false)?;
        let mut stream = NoiseStream::new(seed, stream_index);
        let traj =
            solver.simulate(&vec![0.0; n], &vec![0.0; n], n_steps, &mut stream, &rec)?;
        empirical_long_run_moments(&traj, cfg.burn_in_fraction)
    };
    let a = run(mu_a, 0)?;
    let b = run(mu_b, 1)?;
    let mut max_disc: f64 = 0.0;
    for (ma, mb) in a.position.iter().zip(&b.position) {
        let se = (variance_se(ma).powi(2) + variance_se(mb).powi(2)).sqrt();
        if se > 0.0 {
            max_disc = max_disc.max((ma.var - mb.var).abs() / se);
        } else if ma.var != mb.var {
            max_disc = f64::INFINITY;
        }
    }
    let velocity_variance_ratio = match (&a.velocity, &b.velocity) {
        (Some(va), Some(vb)) => va
            .iter()
            .zip(vb)
            .map(|(x, y)| if y.var > 0.0 { x.var / y.var } else { f64::NAN })
            .collect(),
        _ => Vec::new(),
    };
    let boltzmann_variance = if cfg.mcmc_samples > 0
        && matches!(
            cfg.nonlinearity,
            Nonlinearity::Zero | Nonlinearity::GradientQuadratic { .. }
        ) {
        let out = boltzmann_mcmc_sample(
            &cfg.nonlinearity,
            &cfg.covariance,
            &cfg.basis,
            cfg.mcmc_samples,
            seed.wrapping_add(2),
            &McmcOptions::default(),
        )?;
        let mut vars = vec![0.0; n];
        for k in 0..n {
            let mean =
                out.samples.iter().map(|row| row[k]).sum::<f64>() / out.samples.len() as f64;
            vars[k] = out
                .samples
                .iter()
                .map(|row| (row[k] - mean) * (row[k] - mean))
                .sum::<f64>()
                / (out.samples.len() - 1) as f64;
        }
        Some(vars)
    } else {
        None
    };
    Ok(MarginalComparison {
        mu_a,
        mu_b,
        a,
        b,
        max_position_discrepancy: max_disc,
        velocity_variance_ratio,
        boltzmann_variance,
    })
}
