//! Limit-experiment drivers: coupled small-mass convergence tables, the
//! weak-formulation residual diagnostic, the oscillatory stochastic-integral
//! variance table, and the magnetic double-limit matrix.
//!
//! Every driver couples its systems through shared noise streams (one
//! counter-addressable stream per path, identical across table cells), so
//! rerunning a table with the same master seed reproduces it bitwise, and
//! ladders are compared path by path rather than in distribution.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, SkramError};
use crate::noise::CovarianceSpec;
use crate::nonlinearity::{Drift, NoiseAmplitude, Nonlinearity};
use crate::rng::NoiseStream;
use crate::solver::{
    CoupledMagneticHeat, CoupledWaveHeat, RecordSpec, RotatedHeatPair, Trajectory,
};
use crate::spectral::SpectralBasis;
use num_complex::Complex64;

/// Number of bootstrap resamples behind every reported confidence interval.
pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// Convert a final time into a whole number of steps, tolerating the usual
/// floating-point slop in T/h.
pub fn steps_for(t_final: f64, h: f64) -> usize {
    ((t_final / h) + 1e-9).floor() as usize
}

/// Robust summary of one table cell: distances over the successful paths,
/// a percentile-bootstrap 95% interval for the median, and the number of
/// paths that blew up (reported, never silently dropped).
#[derive(Debug, Clone, Serialize)]
pub struct CellStats {
    pub median: f64,
    pub p90: f64,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_ok: usize,
    pub blow_ups: usize,
}

/// Linear-interpolation quantile of an ascending slice.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            let w = pos - lo as f64;
            if sorted[lo] == sorted[hi] {
                sorted[lo]
            } else {
                sorted[lo] * (1.0 - w) + sorted[hi] * w
            }
        }
    }
}

/// Summarize per-path distances into a [`CellStats`]. The bootstrap uses the
/// supplied stream, so the interval is reproducible for a fixed master seed.
pub fn summarize_distances(
    distances: &[f64],
    blow_ups: usize,
    stream: &mut NoiseStream,
) -> CellStats {
    let mut sorted = distances.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n == 0 {
        return CellStats {
            median: f64::NAN,
            p90: f64::NAN,
            mean: f64::NAN,
            ci_low: f64::NAN,
            ci_high: f64::NAN,
            n_ok: 0,
            blow_ups,
        };
    }
    let median = quantile_sorted(&sorted, 0.5);
    let p90 = quantile_sorted(&sorted, 0.9);
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let mut medians = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let mut buf = vec![0.0; n];
    for _ in 0..BOOTSTRAP_RESAMPLES {
        for slot in buf.iter_mut() {
            let idx = ((stream.uniform() * n as f64) as usize).min(n - 1);
            *slot = sorted[idx];
        }
        buf.sort_by(f64::total_cmp);
        medians.push(quantile_sorted(&buf, 0.5));
    }
    medians.sort_by(f64::total_cmp);
    CellStats {
        median,
        p90,
        mean,
        ci_low: quantile_sorted(&medians, 0.025),
        ci_high: quantile_sorted(&medians, 0.975),
        n_ok: n,
        blow_ups,
    }
}

/// Run one closure per path (stream index = path index, in ascending order)
/// and split the outcomes into successful distances and blow-up counts.
/// Non-blow-up errors abort: they indicate a configuration problem, not a
/// sample-path event.
fn collect_distances<F>(n_paths: usize, seed: u64, run: F) -> Result<(Vec<f64>, usize)>
where
    F: Fn(&mut NoiseStream) -> Result<f64> + Sync,
{
    let results: Vec<Result<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut stream = NoiseStream::new(seed, p as u64);
            run(&mut stream)
        })
        .collect();
    let mut ok = Vec::with_capacity(n_paths);
    let mut blow_ups = 0;
    for r in results {
        match r {
            Ok(d) => ok.push(d),
            Err(SkramError::BlowUp { .. }) => blow_ups += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((ok, blow_ups))
}

fn validate_decreasing_ladder(name: &str, ladder: &[f64], strictly_positive: bool) -> Result<()> {
    if ladder.is_empty() {
        return Err(SkramError::Config(format!("{name} ladder must not be empty")));
    }
    for &v in ladder {
        if !v.is_finite() || v < 0.0 || (strictly_positive && v == 0.0) {
            return Err(SkramError::Config(format!(
                "{name} ladder entries must be {} finite numbers, got {v}",
                if strictly_positive { "positive" } else { "non-negative" }
            )));
        }
    }
    if ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(SkramError::Config(format!(
            "{name} ladder must be strictly decreasing"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Small-mass convergence table
// ---------------------------------------------------------------------------

/// Everything a coupled wave/heat convergence run needs besides the mass.
#[derive(Debug, Clone)]
pub struct SkRunSpec {
    pub basis: Arc<SpectralBasis>,
    /// `None` runs the deterministic pair.
    pub covariance: Option<CovarianceSpec>,
    pub nonlinearity: Nonlinearity,
    /// State-dependent amplitude (requires a base covariance).
    pub amplitude: Option<NoiseAmplitude>,
    pub u0: Vec<f64>,
    pub v0: Vec<f64>,
    pub t_final: f64,
    pub h: f64,
}

impl SkRunSpec {
    pub fn n_steps(&self) -> usize {
        steps_for(self.t_final, self.h)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.basis.n_modes();
        if self.u0.len() != n || self.v0.len() != n {
            return Err(SkramError::BasisMismatch(
                "initial states must match the basis mode count".into(),
            ));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(SkramError::Config(format!(
                "final time must be positive, got {}",
                self.t_final
            )));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(SkramError::Config(format!(
                "step size must be positive, got {}",
                self.h
            )));
        }
        if self.n_steps() == 0 {
            return Err(SkramError::Config(
                "final time must cover at least one step".into(),
            ));
        }
        if matches!(self.nonlinearity, Nonlinearity::ModeRotation { .. }) {
            return Err(SkramError::Config(
                "the small-mass convergence driver supports pointwise and gradient \
                 reactions; the mode-rotation drift is outside its contract"
                    .into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SkConvergenceRow {
    pub mu: f64,
    #[serde(flatten)]
    pub stats: CellStats,
}

#[derive(Debug, Clone, Serialize)]
pub struct SkConvergenceTable {
    pub rows: Vec<SkConvergenceRow>,
    pub n_paths: usize,
    pub seed: u64,
}

/// One row per mass: the distribution of `sup_t |u_wave - u_heat|_{L^2}`
/// over `n_paths` coupled runs. Paths share their noise streams across the
/// whole ladder (stream index = path index), so rows are compared under
/// common random numbers; blow-ups are counted per row without aborting.
pub fn run_sk_convergence(
    mu_ladder: &[f64],
    spec: &SkRunSpec,
    n_paths: usize,
    seed: u64,
) -> Result<SkConvergenceTable> {
    spec.validate()?;
    validate_decreasing_ladder("mass", mu_ladder, true)?;
    if n_paths == 0 {
        return Err(SkramError::Config("need at least one path".into()));
    }
    let n_steps = spec.n_steps();
    let rec = RecordSpec::every(1);
    let mut rows = Vec::with_capacity(mu_ladder.len());
    for (row_idx, &mu) in mu_ladder.iter().enumerate() {
        let solver = CoupledWaveHeat::new(
            &spec.basis,
            mu,
            spec.h,
            spec.covariance.as_ref(),
            &spec.nonlinearity,
            spec.amplitude.as_ref(),
        )?;
        let (distances, blow_ups) = collect_distances(n_paths, seed, |stream| {
            let (wave, heat) =
                solver.simulate(&spec.u0, &spec.v0, &spec.u0, n_steps, stream, &rec)?;
            Ok(wave.sup_l2_distance(&heat))
        })?;
        let mut boot = NoiseStream::new(seed, u64::MAX - row_idx as u64);
        rows.push(SkConvergenceRow {
            mu,
            stats: summarize_distances(&distances, blow_ups, &mut boot),
        });
    }
    Ok(SkConvergenceTable { rows, n_paths, seed })
}

// ---------------------------------------------------------------------------
// Weak-formulation residual
// ---------------------------------------------------------------------------

/// Test function `phi(t, x) = sum_k p_k(t) e_k(x)` with polynomial time
/// coefficients: `coeffs[k][j]` multiplies `t^j` on mode `k`. Such functions
/// are smooth in time, vanish on the boundary (every sine mode does), and
/// their time derivatives are exact, so the residual evaluation carries no
/// differentiation error.
#[derive(Debug, Clone)]
pub struct TestFunction {
    coeffs: Vec<Vec<f64>>,
    d1: Vec<Vec<f64>>,
    d2: Vec<Vec<f64>>,
}

fn poly_eval(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * t + a)
}

fn poly_deriv(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(j, &a)| j as f64 * a).collect()
}

impl TestFunction {
    pub fn new(coeffs: Vec<Vec<f64>>) -> Self {
        let d1: Vec<Vec<f64>> = coeffs.iter().map(|c| poly_deriv(c)).collect();
        let d2: Vec<Vec<f64>> = d1.iter().map(|c| poly_deriv(c)).collect();
        TestFunction { coeffs, d1, d2 }
    }

    /// Single-mode test function: `poly(t) e_mode(x)`.
    pub fn single_mode(mode: usize, poly: &[f64]) -> Self {
        let mut coeffs = vec![Vec::new(); mode + 1];
        coeffs[mode] = poly.to_vec();
        Self::new(coeffs)
    }

    pub fn n_modes(&self) -> usize {
        self.coeffs.len()
    }

    /// p_k(t)
    pub fn value(&self, k: usize, t: f64) -> f64 {
        poly_eval(&self.coeffs[k], t)
    }

    /// p_k'(t)
    pub fn dt(&self, k: usize, t: f64) -> f64 {
        poly_eval(&self.d1[k], t)
    }

    /// p_k''(t)
    pub fn dtt(&self, k: usize, t: f64) -> f64 {
        poly_eval(&self.d2[k], t)
    }
}

/// A wave trajectory plus the data the residual terms need: the mass, the
/// reaction drift the run used, and the per-mode noise amplitudes (all zero
/// or empty for deterministic runs). The trajectory must be recorded every
/// step with velocities (the initial velocity enters the boundary term) and,
/// when any amplitude is nonzero, with Brownian increments.
#[derive(Debug)]
pub struct ResidualInput<'a> {
    pub basis: &'a Arc<SpectralBasis>,
    pub trajectory: &'a Trajectory,
    pub mu: f64,
    pub drift: &'a Drift,
    pub lambdas: &'a [f64],
}

/// The residual time series along the trajectory grid, plus a half-resolution
/// self-check: `coarse_rel_change` is the maximum change (relative to the
/// series scale) when every second grid point is dropped, and the warning
/// fires above 5% — the stored grid is then too coarse for the exponential
/// kernel being integrated.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub coarse_rel_change: f64,
    pub grid_warning: bool,
}

/// Evaluate the weak-formulation residual on one stored grid. The three
/// kernel-weighted time integrals use the trapezoid rule on the grid (the
/// exponential weight factors across steps, so the running form below *is*
/// the grid trapezoid sum, evaluated stably without large exponentials), and
/// the stochastic term is the left-point sum of the recorded increments.
#[allow(clippy::too_many_arguments)]
fn eval_residual_series(
    mu: f64,
    h: f64,
    positions: &[&[f64]],
    v0: &[f64],
    increments: Option<&[Vec<f64>]>,
    drift: &Drift,
    lambdas: &[f64],
    alphas: &[f64],
    phi: &TestFunction,
) -> Vec<f64> {
    let m = positions.len();
    let n_modes = positions[0].len();
    let n_phi = phi.n_modes();
    let decay = (-h / mu).exp();
    // Grid samples of the two deterministic integrands:
    //   M(s)  = <u(s), Lap phi(s)> + <B(u(s)), phi(s)>
    //   A(s)  = <u(0), dphi/dt(0)> - <u(s), dphi/dt(s)> + int_0^s <u, d2phi/dt2>
    let mut mm = vec![0.0; m];
    let mut aa = vec![0.0; m];
    let mut b = vec![0.0; n_modes];
    let a0: f64 = (0..n_phi).map(|k| positions[0][k] * phi.dt(k, 0.0)).sum();
    let mut v_run = 0.0;
    let mut g_prev = 0.0;
    for j in 0..m {
        let t = j as f64 * h;
        let u = positions[j];
        drift.apply(u, &mut b);
        let mut m_val = 0.0;
        let mut u_phi_t = 0.0;
        let mut g_val = 0.0;
        for k in 0..n_phi {
            let p = phi.value(k, t);
            m_val += (b[k] - alphas[k] * u[k]) * p;
            u_phi_t += u[k] * phi.dt(k, t);
            g_val += u[k] * phi.dtt(k, t);
        }
        if j > 0 {
            v_run += 0.5 * h * (g_prev + g_val);
        }
        g_prev = g_val;
        mm[j] = m_val;
        aa[j] = a0 - u_phi_t + v_run;
    }
    let t1_pair: f64 = (0..n_phi).map(|k| v0[k] * phi.value(k, 0.0)).sum();
    let mut out = vec![0.0; m];
    let (mut jm, mut ka, mut st) = (0.0, 0.0, 0.0);
    out[0] = 0.0; // mu (1 - e^0) <v0, phi(0)>, with every integral over [0,0]
    for i in 1..m {
        jm = decay * jm + 0.5 * h * (decay * mm[i - 1] + mm[i]);
        ka = decay * ka + 0.5 * h * (decay * aa[i - 1] + aa[i]);
        if let Some(incs) = increments {
            let t_prev = (i - 1) as f64 * h;
            let f: f64 = (0..n_phi)
                .map(|k| lambdas[k] * phi.value(k, t_prev) * incs[i - 1][k])
                .sum();
            st = decay * (st + f);
        }
        let t = i as f64 * h;
        out[i] = mu * (1.0 - (-t / mu).exp()) * t1_pair - jm - ka - st;
    }
    out
}

/// Residual time series of a wave run against a mode-polynomial test
/// function, with the half-resolution grid check described on
/// [`ResidualSeries`].
pub fn residual_diagnostic(input: &ResidualInput, phi: &TestFunction) -> Result<ResidualSeries> {
    let traj = input.trajectory;
    let n_modes = input.basis.n_modes();
    let m = traj.times.len();
    if m < 2 {
        return Err(SkramError::Config("the residual needs at least one step".into()));
    }
    if traj.positions[0].len() != n_modes || input.lambdas.len() != n_modes {
        return Err(SkramError::BasisMismatch(
            "trajectory, basis and noise amplitudes must share one mode count".into(),
        ));
    }
    if !(input.mu > 0.0 && input.mu.is_finite()) {
        return Err(SkramError::Config(format!(
            "mass must be positive, got {}",
            input.mu
        )));
    }
    if phi.n_modes() > n_modes {
        return Err(SkramError::Config(format!(
            "test function uses {} modes but the basis has {}",
            phi.n_modes(),
            n_modes
        )));
    }
    let h = traj.h;
    for w in traj.times.windows(2) {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1.0) {
            return Err(SkramError::Config(
                "the residual diagnostic requires every-step recording".into(),
            ));
        }
    }
    let v0 = traj
        .velocities
        .as_ref()
        .ok_or_else(|| {
            SkramError::Config(
                "record velocities: the residual's boundary term uses the initial velocity"
                    .into(),
            )
        })?[0]
        .as_slice();
    let noisy = input.lambdas.iter().any(|&l| l != 0.0);
    let increments: Option<&[Vec<f64>]> = if noisy {
        Some(traj.increments.as_ref().ok_or_else(|| {
            SkramError::Config(
                "record Brownian increments: the residual's stochastic term replays them"
                    .into(),
            )
        })?)
    } else {
        None
    };
    let alphas = input.basis.alphas();
    let fine_rows: Vec<&[f64]> = traj.positions.iter().map(|p| p.as_slice()).collect();
    let values = eval_residual_series(
        input.mu,
        h,
        &fine_rows,
        v0,
        increments,
        input.drift,
        input.lambdas,
        alphas,
        phi,
    );
    // Half-resolution check: every second node, adjacent increments summed.
    let (coarse_rel_change, grid_warning) = if m >= 3 {
        let n_coarse_steps = (m - 1) / 2;
        let coarse_rows: Vec<&[f64]> =
            (0..=n_coarse_steps).map(|j| traj.positions[2 * j].as_slice()).collect();
        let paired: Option<Vec<Vec<f64>>> = increments.map(|incs| {
            (0..n_coarse_steps)
                .map(|j| {
                    (0..n_modes)
                        .map(|k| incs[2 * j][k] + incs[2 * j + 1][k])
                        .collect()
                })
                .collect()
        });
        let coarse = eval_residual_series(
            input.mu,
            2.0 * h,
            &coarse_rows,
            v0,
            paired.as_deref(),
            input.drift,
            input.lambdas,
            alphas,
            phi,
        );
        let scale = values.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
        let max_diff = coarse
            .iter()
            .enumerate()
            .map(|(j, &c)| (c - values[2 * j]).abs())
            .fold(0.0_f64, f64::max);
        let rel = if scale > 0.0 { max_diff / scale } else { 0.0 };
        (rel, rel > 0.05)
    } else {
        (0.0, false)
    };
    if grid_warning {
        eprintln!(
            "warning: residual grid too coarse — dropping every second node changes \
             the series by {:.1}% (> 5%); store the trajectory at a finer step",
            100.0 * coarse_rel_change
        );
    }
    Ok(ResidualSeries {
        times: traj.times.clone(),
        values,
        coarse_rel_change,
        grid_warning,
    })
}

// ---------------------------------------------------------------------------
// Oscillatory stochastic-integral variance
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct OscillationRow {
    pub mu: f64,
    /// Closed-form variance t/2 - (mu/4) sin(2t/mu).
    pub exact: f64,
    /// Composite Gauss-Legendre quadrature of sin^2(s/mu), resolved per
    /// oscillation period.
    pub quadrature: f64,
    /// Sample variance of exactly-sampled Ito sums over `n_paths` paths.
    pub monte_carlo: f64,
}

/// Variance table of `int_0^t sin(s/mu) dB(s)` down a mass ladder. Each
/// Monte Carlo path sums per-step Gaussians with the exact step variances
/// (the antiderivative of sin^2 is closed-form), so the only estimation
/// error is statistical. The closed form shows the variance converges to
/// t/2 as mu -> 0 instead of vanishing — the oscillation leaves a
/// non-degenerate stochastic contribution behind.
pub fn sin_oscillation_variance(
    mu_ladder: &[f64],
    t: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<OscillationRow>> {
    validate_decreasing_ladder("mass", mu_ladder, true)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(SkramError::Config(format!("final time must be positive, got {t}")));
    }
    if n_steps == 0 || n_paths < 2 {
        return Err(SkramError::Config(
            "need at least one step and two paths".into(),
        ));
    }
    let rule = crate::quadrature::GaussLegendre::new(16);
    let mut rows = Vec::with_capacity(mu_ladder.len());
    for &mu in mu_ladder {
        let anti = |s: f64| 0.5 * s - 0.25 * mu * (2.0 * s / mu).sin();
        let exact = anti(t);
        let panels = ((t / (std::f64::consts::PI * mu)).ceil() as usize).clamp(8, 65536);
        let mut quadrature = 0.0;
        for p in 0..panels {
            let a = t * p as f64 / panels as f64;
            let b = t * (p + 1) as f64 / panels as f64;
            quadrature += rule.integrate(a, b, |s| {
                let v = (s / mu).sin();
                v * v
            });
        }
        let h = t / n_steps as f64;
        let sigmas: Vec<f64> = (0..n_steps)
            .map(|j| (anti((j + 1) as f64 * h) - anti(j as f64 * h)).max(0.0).sqrt())
            .collect();
        let samples: Vec<f64> = (0..n_paths)
            .into_par_iter()
            .map(|p| {
                let mut stream = NoiseStream::new(seed, p as u64);
                sigmas.iter().map(|s| s * stream.normal()).sum::<f64>()
            })
            .collect();
        let mean = samples.iter().sum::<f64>() / n_paths as f64;
        let monte_carlo = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
            / (n_paths - 1) as f64;
        rows.push(OscillationRow { mu, exact, quadrature, monte_carlo });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Magnetic double limit
// ---------------------------------------------------------------------------

/// Shared setup for the magnetic double-limit matrix (the systems are
/// linear: the matrix quantifies the noise-driven gaps).
#[derive(Debug, Clone)]
pub struct MagneticRunSpec {
    pub basis: Arc<SpectralBasis>,
    /// `None` runs the deterministic flows.
    pub covariance: Option<CovarianceSpec>,
    pub w0: Vec<Complex64>,
    pub v0: Vec<Complex64>,
    pub t_final: f64,
    pub h: f64,
}

impl MagneticRunSpec {
    pub fn n_steps(&self) -> usize {
        steps_for(self.t_final, self.h)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.basis.n_modes();
        if self.w0.len() != n || self.v0.len() != n {
            return Err(SkramError::BasisMismatch(
                "initial states must match the basis mode count".into(),
            ));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite() && self.h > 0.0 && self.h.is_finite())
        {
            return Err(SkramError::Config(
                "final time and step size must be positive".into(),
            ));
        }
        if self.n_steps() == 0 {
            return Err(SkramError::Config(
                "final time must cover at least one step".into(),
            ));
        }
        Ok(())
    }
}

/// `cells[i][j]` summarizes `sup_t |w_{mu_i}^{eps_j} - u_{eps_j}|_{L^2}`
/// over the matched paths; `friction_limit[j]` (when requested) summarizes
/// `sup_t |u_{eps_j} - u_0|_{L^2}`, the gap between the friction-`eps_j`
/// first-order system and its zero-friction limit under the same noise.
#[derive(Debug, Clone, Serialize)]
pub struct MagneticDoubleLimitTable {
    pub mu_ladder: Vec<f64>,
    pub eps_ladder: Vec<f64>,
    pub cells: Vec<Vec<CellStats>>,
    pub friction_limit: Option<Vec<CellStats>>,
    pub n_paths: usize,
    pub seed: u64,
}

/// Build the double-limit matrix. Fixed-friction cells require the
/// covariance to be trace class at some negative order (the stochastic
/// convolution must be function-valued); the zero-friction limit column
/// additionally requires square summability — without it the zero-friction
/// convolution has `E |.|^2 = 2 t sum_k lambda_k^2` (both real components
/// counted), which grows without bound, and no limit object exists.
pub fn run_magnetic_double_limit(
    mu_ladder: &[f64],
    eps_ladder: &[f64],
    spec: &MagneticRunSpec,
    n_paths: usize,
    seed: u64,
    include_friction_limit: bool,
) -> Result<MagneticDoubleLimitTable> {
    spec.validate()?;
    validate_decreasing_ladder("mass", mu_ladder, true)?;
    validate_decreasing_ladder("friction", eps_ladder, false)?;
    if n_paths == 0 {
        return Err(SkramError::Config("need at least one path".into()));
    }
    if let Some(cov) = &spec.covariance {
        let flags = cov.hypothesis_flags();
        if !flags.trace_class_negative_order {
            return Err(SkramError::Hypothesis(
                "fixed-friction runs need sum_k lambda_k^2 / alpha_k^{1-theta} < inf for \
                 some theta in (0,1); this covariance decays too slowly for the \
                 stochastic convolution to be function-valued"
                    .into(),
            ));
        }
        if include_friction_limit && !flags.square_summable {
            return Err(SkramError::Hypothesis(
                "the zero-friction limit column needs a square-summable amplitude: \
                 the zero-friction convolution variance grows linearly in time, \
                 E|.|^2 = 2 t sum_k lambda_k^2 over both real components, so a \
                 divergent sum leaves no limit object"
                    .into(),
            ));
        }
    }
    let n_steps = spec.n_steps();
    let rec = RecordSpec::every(1);
    let n_eps = eps_ladder.len();
    let mut cells = Vec::with_capacity(mu_ladder.len());
    for (i, &mu) in mu_ladder.iter().enumerate() {
        let mut row = Vec::with_capacity(n_eps);
        for (j, &eps) in eps_ladder.iter().enumerate() {
            let solver =
                CoupledMagneticHeat::new(&spec.basis, mu, eps, spec.h, spec.covariance.as_ref())?;
            let (distances, blow_ups) = collect_distances(n_paths, seed, |stream| {
                let (mag, heat) =
                    solver.simulate(&spec.w0, &spec.v0, &spec.w0, n_steps, stream, &rec)?;
                Ok(mag.sup_l2_distance(&heat))
            })?;
            let mut boot = NoiseStream::new(seed, u64::MAX - (i * n_eps + j) as u64);
            row.push(summarize_distances(&distances, blow_ups, &mut boot));
        }
        cells.push(row);
    }
    let friction_limit = if include_friction_limit {
        let mut column = Vec::with_capacity(n_eps);
        for (j, &eps) in eps_ladder.iter().enumerate() {
            let pair =
                RotatedHeatPair::new(&spec.basis, eps, 0.0, spec.h, spec.covariance.as_ref())?;
            let (distances, blow_ups) = collect_distances(n_paths, seed, |stream| {
                let (a, b) = pair.simulate(&spec.w0, n_steps, stream, &rec)?;
                Ok(a.sup_l2_distance(&b))
            })?;
            let mut boot = NoiseStream::new(seed, u64::MAX - 10_000 - j as u64);
            column.push(summarize_distances(&distances, blow_ups, &mut boot));
        }
        Some(column)
    } else {
        None
    };
    Ok(MagneticDoubleLimitTable {
        mu_ladder: mu_ladder.to_vec(),
        eps_ladder: eps_ladder.to_vec(),
        cells,
        friction_limit,
        n_paths,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate_linearly() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert!((quantile_sorted(&v, 0.9) - 3.7).abs() < 1e-12);
        assert!(quantile_sorted(&[], 0.5).is_nan());
    }

    #[test]
    fn summaries_of_identical_values_are_degenerate() {
        let mut stream = NoiseStream::new(7, 0);
        let stats = summarize_distances(&[0.0; 16], 0, &mut stream);
        assert_eq!(stats.median, 0.0);
        assert_eq!(stats.p90, 0.0);
        assert_eq!(stats.ci_low, 0.0);
        assert_eq!(stats.ci_high, 0.0);
        assert_eq!(stats.n_ok, 16);
    }

    #[test]
    fn ladders_must_decrease() {
        assert!(validate_decreasing_ladder("mass", &[0.5, 0.1, 0.02], true).is_ok());
        assert!(validate_decreasing_ladder("mass", &[0.1, 0.5], true).is_err());
        assert!(validate_decreasing_ladder("mass", &[0.1, 0.1], true).is_err());
        assert!(validate_decreasing_ladder("mass", &[], true).is_err());
        assert!(validate_decreasing_ladder("friction", &[0.5, 0.0], false).is_ok());
        assert!(validate_decreasing_ladder("mass", &[0.5, 0.0], true).is_err());
    }

    #[test]
    fn polynomial_derivatives_are_exact() {
        // p(t) = 2 - t + 3 t^2
        let phi = TestFunction::single_mode(1, &[2.0, -1.0, 3.0]);
        assert_eq!(phi.n_modes(), 2);
        assert_eq!(phi.value(1, 2.0), 12.0);
        assert_eq!(phi.dt(1, 2.0), 11.0);
        assert_eq!(phi.dtt(1, 2.0), 6.0);
        assert_eq!(phi.value(0, 5.0), 0.0);
    }
}
