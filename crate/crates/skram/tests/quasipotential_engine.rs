//! Transition costs and their minimizers against hand-derived values.
//!
//! Oracles, written down before the module: (1) in the noise-weighted
//! gradient case the minimal cost of reaching `u` with arrival velocity `v`
//! is `sum_k alpha_k u_k^2/lambda_k^2 + 2 F(u) + mu sum_k v_k^2/lambda_k^2`
//! (complete the square in the residual; the cross term telescopes to the
//! boundary); (2) the continuum minimizers are time-reversed dissipative
//! flows, so sampled reversed flows must price out at the closed form up to
//! quadrature error; (3) forward flows have zero residual, hence ~zero cost;
//! (4) the second-order cost splits algebraically as heat part + mass
//! remainder with the remainder linear in the mass on a fixed path.

#![allow(clippy::needless_range_loop)]
// Oracle code follows the written formulas index-by-index on purpose.

use std::f64::consts::PI;
use std::sync::Arc;

use skram::action::{
    action_decomposition, action_gradient, action_heat, action_wave,
    compare_mass_quasipotentials, gradient_quasipotential, minimize_action, ActionMode,
    DiscretePath, MinimizeOptions,
};
use skram::noise::CovarianceSpec;
use skram::nonlinearity::{Drift, Nonlinearity};
use skram::propagator::wave_mode_propagator;
use skram::rng::NoiseStream;
use skram::solver::COLLOCATION_FACTOR;
use skram::spectral::SpectralBasis;

fn basis(n: usize) -> Arc<SpectralBasis> {
    SpectralBasis::new(PI, n).unwrap()
}

/// Smooth decaying test path: mode k gets a*e^{b t} + c*t*e^{0.8 t} on a
/// grid of nonpositive times (so everything shrinks toward -T).
fn smooth_positions(times: &[f64], coeffs: &[(f64, f64, f64)]) -> Vec<Vec<f64>> {
    times
        .iter()
        .map(|&t| {
            coeffs
                .iter()
                .map(|&(a, b, c)| a * (b * t).exp() + c * t * (0.8 * t).exp())
                .collect()
        })
        .collect()
}

#[test]
fn closed_form_cost_matches_hand_values() {
    let b2 = basis(2);
    let unit = CovarianceSpec::white(1.0);
    let zero = Nonlinearity::Zero;

    // nothing to pay for staying at the rest point
    let v0 =
        gradient_quasipotential(&b2, &unit, &zero, &[0.0, 0.0], &[0.0, 0.0], 0.7).unwrap();
    assert_eq!(v0, 0.0);

    // first mode, unit amplitude, unit noise: alpha_1 = 1 so the cost is 1
    let v1 = gradient_quasipotential(&b2, &unit, &zero, &[1.0, 0.0], &[0.0, 0.0], 0.0).unwrap();
    assert!((v1 - 1.0).abs() < 1e-12, "got {v1}");

    // an arrival velocity costs mu |v|^2 / lambda^2 on top
    let v_mu =
        gradient_quasipotential(&b2, &unit, &zero, &[1.0, 0.0], &[1.0, 0.0], 0.5).unwrap();
    assert!((v_mu - 1.5).abs() < 1e-12, "got {v_mu}");
    assert!(v1 <= v_mu, "the infimum over arrival velocities sits at v = 0");

    // quadratic potential: reaching c*e_1 costs c^2 (alpha_1/lambda^2 + kappa)
    let b3 = basis(3);
    let cov = CovarianceSpec::white(0.7);
    let quad = Nonlinearity::GradientQuadratic { kappa: 0.8 };
    let c = 0.9;
    let got =
        gradient_quasipotential(&b3, &cov, &quad, &[c, 0.0, 0.0], &[0.0; 3], 0.0).unwrap();
    let expected = c * c * (1.0 / (0.7 * 0.7) + 0.8);
    assert!(
        (got - expected).abs() <= 1e-12 * expected,
        "got {got}, expected {expected}"
    );

    // no closed form without the gradient structure
    let rot = Nonlinearity::ModeRotation { gamma0: 0.5 };
    assert!(gradient_quasipotential(&b3, &cov, &rot, &[0.1; 3], &[0.0; 3], 0.1).is_err());

    // pointwise drifts lose the gradient structure under colored noise
    let colored = CovarianceSpec::power_law(0.8, 0.5);
    let sine = Nonlinearity::Sine { amp: 0.3, freq: 1.0 };
    assert!(
        gradient_quasipotential(&b3, &colored, &sine, &[0.1; 3], &[0.0; 3], 0.1).is_err()
    );

    // negative mass is rejected
    assert!(
        gradient_quasipotential(&b2, &unit, &zero, &[1.0, 0.0], &[0.0; 2], -0.1).is_err()
    );
}

#[test]
fn heat_cost_oracles() {
    // the zero path costs nothing, exactly
    let b2 = basis(2);
    let cov = CovarianceSpec::white(0.8);
    let sine = Nonlinearity::Sine { amp: 0.3, freq: 1.0 };
    let times = DiscretePath::geometric_grid(2.0, 16, 1.0).unwrap();
    let zero_path =
        DiscretePath::new(times.clone(), vec![vec![0.0; 2]; times.len()], None).unwrap();
    assert_eq!(action_heat(&b2, &cov, &sine, &zero_path).unwrap(), 0.0);

    // a forward dissipative flow has zero residual: its cost is pure
    // discretization error, far below the path's own size
    let lambdas = cov.lambdas(&b2);
    let drift = Drift::new(&sine, &b2, &lambdas, COLLOCATION_FACTOR).unwrap();
    let u0 = [0.9, -0.5];
    let t_span = 1.5;
    let m = 600;
    let subs = 8; // RK4 substeps per grid interval
    let h = t_span / (m * subs) as f64;
    let mut state = u0.to_vec();
    let mut flow = Vec::with_capacity(m + 1);
    flow.push(state.clone());
    let deriv = |x: &[f64]| {
        let mut out = vec![0.0; 2];
        drift.apply(x, &mut out);
        for k in 0..2 {
            out[k] -= b2.alpha(k) * x[k];
        }
        out
    };
    for step in 0..m * subs {
        let k1 = deriv(&state);
        let s2: Vec<f64> = (0..2).map(|i| state[i] + 0.5 * h * k1[i]).collect();
        let k2 = deriv(&s2);
        let s3: Vec<f64> = (0..2).map(|i| state[i] + 0.5 * h * k2[i]).collect();
        let k3 = deriv(&s3);
        let s4: Vec<f64> = (0..2).map(|i| state[i] + h * k3[i]).collect();
        let k4 = deriv(&s4);
        for i in 0..2 {
            state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if (step + 1) % subs == 0 {
            flow.push(state.clone());
        }
    }
    let grid: Vec<f64> = (0..=m).map(|j| -t_span + t_span * j as f64 / m as f64).collect();
    let flow_path = DiscretePath::new(grid, flow, None).unwrap();
    let cost = action_heat(&b2, &cov, &sine, &flow_path).unwrap();
    let size: f64 = u0.iter().map(|x| x * x).sum();
    eprintln!("forward-flow heat cost: {cost:.3e} vs size {size:.3}");
    assert!(cost >= 0.0);
    assert!(cost <= 1e-4 * size, "flow cost {cost:.3e} should be negligible");

    // reversed exponential in one mode: phi(t) = c e^{alpha t} prices out at
    // alpha c^2 / lambda^2 (the mode's closed-form cost)
    let colored = CovarianceSpec::power_law(0.8, 0.6);
    let lam = colored.lambdas(&b2);
    let alpha = b2.alpha(1); // = 4
    let c = 0.7;
    let m2 = 200;
    let t2 = 2.0;
    let grid2: Vec<f64> = (0..=m2).map(|j| -t2 + t2 * j as f64 / m2 as f64).collect();
    let pos2: Vec<Vec<f64>> =
        grid2.iter().map(|&t| vec![0.0, c * (alpha * t).exp()]).collect();
    let path2 = DiscretePath::new(grid2, pos2, None).unwrap();
    let got = action_heat(&b2, &colored, &Nonlinearity::Zero, &path2).unwrap();
    let expected = alpha * c * c / (lam[1] * lam[1]);
    eprintln!("reversed-mode heat cost: {got:.6} vs closed form {expected:.6}");
    assert!(
        (got - expected).abs() <= 0.01 * expected,
        "got {got}, expected {expected}"
    );

    // the gradient entry point reports the same value
    let (val, _) = action_gradient(&b2, &colored, &Nonlinearity::Zero, &path2, ActionMode::Heat)
        .unwrap();
    assert!((val - got).abs() <= 1e-15 * got);
}

#[test]
fn wave_cost_oracles() {
    let b4 = basis(4);
    let cov = CovarianceSpec::white(0.9);
    let quad = Nonlinearity::GradientQuadratic { kappa: 0.6 };
    let lam = cov.lambdas(&b4);

    // zero path, zero cost
    let times = DiscretePath::geometric_grid(3.0, 24, 1.0).unwrap();
    let zeros = DiscretePath::new(times.clone(), vec![vec![0.0; 4]; times.len()], None).unwrap();
    assert_eq!(action_wave(&b4, &cov, &quad, &zeros, 0.3).unwrap(), 0.0);

    // time-reversed damped flow from (u, -v) arrives at (u, v) and must
    // price out at the closed form, for each mass
    let u = [0.8, 0.4, 0.8 / 3.0, 0.2];
    let v = [0.5, -0.5, 0.5, -0.5];
    let grid = DiscretePath::geometric_grid(12.0, 400, 50.0).unwrap();
    for &mu in &[0.1, 0.5] {
        let mut positions = vec![vec![0.0; 4]; grid.len()];
        for (j, &t) in grid.iter().enumerate() {
            for k in 0..4 {
                let a_eff = b4.alpha(k) + 0.6 * lam[k] * lam[k];
                let coeffs = wave_mode_propagator(mu, a_eff, -t).unwrap();
                let (p, _) = coeffs.apply(u[k], -v[k]);
                positions[j][k] = p;
            }
        }
        let path = DiscretePath::new(grid.clone(), positions, None).unwrap();
        let got = action_wave(&b4, &cov, &quad, &path, mu).unwrap();
        let expected = gradient_quasipotential(&b4, &cov, &quad, &u, &v, mu).unwrap();
        let rel = (got - expected).abs() / expected;
        eprintln!("mu {mu}: reversed-flow wave cost {got:.6} vs closed form {expected:.6} (rel {rel:.2e})");
        assert!(rel <= 0.02, "mu {mu}: got {got}, expected {expected}");
    }

    // at tiny mass the second-order cost of a smooth path approaches its
    // first-order cost
    let b2 = basis(2);
    let cov2 = CovarianceSpec::white(0.8);
    let sine = Nonlinearity::Sine { amp: 0.3, freq: 1.0 };
    let grid2: Vec<f64> = (0..=500).map(|j| -10.0 + 10.0 * j as f64 / 500.0).collect();
    let pos2 = smooth_positions(&grid2, &[(0.8, 0.7, 0.2), (-0.5, 1.1, 0.3)]);
    let path2 = DiscretePath::new(grid2, pos2, None).unwrap();
    let heat = action_heat(&b2, &cov2, &sine, &path2).unwrap();
    let wave = action_wave(&b2, &cov2, &sine, &path2, 0.01).unwrap();
    let diff = (wave - heat).abs();
    eprintln!("smooth path: heat {heat:.6}, wave(mu=0.01) {wave:.6}, diff {diff:.3e}");
    assert!(diff <= 0.02 * (1.0 + heat), "diff {diff} too large vs heat {heat}");
}

#[test]
fn wave_cost_splits_into_heat_part_plus_mass_remainder() {
    let b3 = basis(3);
    let cov = CovarianceSpec::power_law(0.9, 0.3);
    let sine = Nonlinearity::Sine { amp: 0.25, freq: 1.2 };
    let times = DiscretePath::geometric_grid(8.0, 160, 10.0).unwrap();
    let pos = smooth_positions(
        &times,
        &[(0.9, 0.6, -0.3), (-0.6, 1.0, 0.25), (0.4, 1.4, 0.1)],
    );
    let path = DiscretePath::new(times, pos, None).unwrap();

    // the split is algebraic: heat part + remainder rebuilds the wave cost
    // to rounding, for any mass
    for &mu in &[0.0, 0.05, 0.37, 1.4] {
        let wave = action_wave(&b3, &cov, &sine, &path, mu).unwrap();
        let (heat_part, remainder) = action_decomposition(&b3, &cov, &sine, &path, mu).unwrap();
        let gap = (heat_part + remainder - wave).abs();
        eprintln!("mu {mu}: wave {wave:.6}, heat part {heat_part:.6}, remainder {remainder:.3e}, identity gap {gap:.3e}");
        assert!(gap <= 1e-8 * (1.0 + wave), "identity fails at mu = {mu}");
        if mu == 0.0 {
            assert_eq!(remainder, 0.0, "no mass, no remainder");
            assert_eq!(heat_part, wave);
        }
    }

    // on a fixed path the remainder scales linearly in the mass: slope 1 in
    // log-log over two decades
    let mus: Vec<f64> = (0..5).map(|j| 1e-3 * 10f64.powf(j as f64 / 2.0)).collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &mu in &mus {
        let (_, remainder) = action_decomposition(&b3, &cov, &sine, &path, mu).unwrap();
        assert!(remainder.abs() > 0.0, "need a nonzero remainder to fit");
        xs.push(mu.ln());
        ys.push(remainder.abs().ln());
    }
    let n = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    let slope = sxy / sxx;
    eprintln!("remainder log-log slope over mu in [1e-3, 1e-1]: {slope:.4}");
    assert!(
        (slope - 1.0).abs() <= 0.1,
        "remainder should vanish linearly in the mass, slope {slope}"
    );
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    let b2 = basis(2);
    let times = DiscretePath::geometric_grid(3.0, 24, 5.0).unwrap();
    let mut stream = NoiseStream::new(4711, 0);
    let z = stream.normals(8);
    let pos = smooth_positions(
        &times,
        &[(0.6 * z[0], 0.5 + 0.2 * z[1].abs(), 0.3 * z[2]),
          (0.6 * z[3], 0.5 + 0.2 * z[4].abs(), 0.3 * z[5])],
    );

    let check = |cov: &CovarianceSpec, nl: &Nonlinearity, mode: ActionMode, label: &str| {
        let path = DiscretePath::new(times.clone(), pos.clone(), None).unwrap();
        let (value, grad) = action_gradient(&b2, cov, nl, &path, mode).unwrap();
        let evaluate = |p: &DiscretePath| match mode {
            ActionMode::Heat => action_heat(&b2, cov, nl, p).unwrap(),
            ActionMode::Wave { mu } => action_wave(&b2, cov, nl, p, mu).unwrap(),
        };
        let gmax = grad
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0_f64, |m, g| m.max(g.abs()));
        let mut worst = 0.0_f64;
        for j in 0..times.len() {
            for k in 0..2 {
                let eps = 1e-6 * (1.0 + pos[j][k].abs());
                let mut plus = pos.clone();
                plus[j][k] += eps;
                let mut minus = pos.clone();
                minus[j][k] -= eps;
                let fp = evaluate(&DiscretePath::new(times.clone(), plus, None).unwrap());
                let fm = evaluate(&DiscretePath::new(times.clone(), minus, None).unwrap());
                let fd = (fp - fm) / (2.0 * eps);
                let denom = grad[j][k].abs().max(1e-3 * gmax).max(1e-8);
                worst = worst.max((fd - grad[j][k]).abs() / denom);
            }
        }
        eprintln!("{label}: value {value:.4e}, worst fd mismatch {worst:.3e}");
        assert!(worst < 1e-5, "{label}: fd mismatch {worst:.3e}");
    };

    let colored = CovarianceSpec::power_law(0.7, 0.4);
    let white = CovarianceSpec::white(0.8);
    check(
        &colored,
        &Nonlinearity::Sine { amp: 0.25, freq: 1.3 },
        ActionMode::Heat,
        "heat + sine drift",
    );
    check(
        &colored,
        &Nonlinearity::GradientQuadratic { kappa: 0.9 },
        ActionMode::Heat,
        "heat + quadratic potential",
    );
    // the mode-rotation drift has a genuinely non-symmetric linearization:
    // this is the case that catches a transpose mix-up
    check(
        &white,
        &Nonlinearity::ModeRotation { gamma0: 0.5 },
        ActionMode::Wave { mu: 0.3 },
        "wave + rotation drift",
    );
    check(
        &colored,
        &Nonlinearity::Sine { amp: 0.25, freq: 1.3 },
        ActionMode::Wave { mu: 0.3 },
        "wave + sine drift",
    );
}

#[test]
fn minimizer_reaches_closed_form_values() {
    // resting endpoint: nothing to minimize
    let b2 = basis(2);
    let unit = CovarianceSpec::white(1.0);
    let zero = Nonlinearity::Zero;
    let opts = MinimizeOptions::default();
    let rest = minimize_action(&b2, &unit, &zero, ActionMode::Heat, &[0.0, 0.0], None, &opts)
        .unwrap();
    assert_eq!(rest.value, 0.0);
    assert!(rest.converged);
    assert_eq!(rest.iterations, 0);

    // first-order cost of the first unit mode is alpha_1 = 1
    let res = minimize_action(&b2, &unit, &zero, ActionMode::Heat, &[1.0, 0.0], None, &opts)
        .unwrap();
    eprintln!(
        "heat e1: value {:.6} (iters {}, penalty share {:.1e}, decay {:.1e})",
        res.value, res.iterations, res.penalty_share, res.decay_ratio
    );
    assert!(res.converged);
    assert!(res.iterations <= 5, "linear problems should be Newton-fast");
    assert!((res.value - 1.0).abs() <= 0.02, "got {}", res.value);
    assert!(res.penalty_share < 1e-3);
    assert!(res.decay_ratio < 1e-3);
    assert_eq!(res.minimizer.endpoint(), &[1.0, 0.0]);

    // second-order, velocity pinned: matches the closed form at both masses
    let b4 = basis(4);
    let cov = CovarianceSpec::white(0.9);
    let quad = Nonlinearity::GradientQuadratic { kappa: 0.6 };
    let u = [0.8, 0.4, 0.8 / 3.0, 0.2];
    let v = [0.5, -0.5, 0.5, -0.5];
    for &mu in &[0.1, 0.5] {
        let pinned = minimize_action(
            &b4,
            &cov,
            &quad,
            ActionMode::Wave { mu },
            &u,
            Some(&v),
            &opts,
        )
        .unwrap();
        let expected = gradient_quasipotential(&b4, &cov, &quad, &u, &v, mu).unwrap();
        let rel = (pinned.value - expected).abs() / expected;
        eprintln!(
            "mu {mu} pinned: value {:.6} vs closed form {expected:.6} (rel {rel:.2e}, iters {})",
            pinned.value, pinned.iterations
        );
        assert!(pinned.converged);
        assert!(pinned.iterations <= 10);
        assert!(rel <= 0.02, "mu {mu}: got {}, expected {expected}", pinned.value);

        // velocity freed: the infimum sits at v = 0 and loses the mass term
        let free = minimize_action(&b4, &cov, &quad, ActionMode::Wave { mu }, &u, None, &opts)
            .unwrap();
        let expected_free = gradient_quasipotential(&b4, &cov, &quad, &u, &[0.0; 4], mu).unwrap();
        let rel_free = (free.value - expected_free).abs() / expected_free;
        eprintln!(
            "mu {mu} free-v: value {:.6} vs closed form {expected_free:.6} (rel {rel_free:.2e})",
            free.value
        );
        assert!(free.converged);
        assert!(rel_free <= 0.02);
        assert!(
            free.value <= pinned.value + 1e-9,
            "relaxing the arrival velocity cannot cost more"
        );
    }

    // a terminal velocity makes no sense for the first-order dynamics
    assert!(minimize_action(
        &b2,
        &unit,
        &zero,
        ActionMode::Heat,
        &[1.0, 0.0],
        Some(&[0.0, 0.0]),
        &opts
    )
    .is_err());
}

#[test]
fn minimizer_is_grid_stable_and_init_independent() {
    let b2 = basis(2);
    let cov = CovarianceSpec::white(0.8);
    let sine = Nonlinearity::Sine { amp: 0.3, freq: 1.0 };
    let u = [0.7, -0.4];

    // doubling the grid moves the value by less than 1%
    let coarse_opts = MinimizeOptions {
        t_horizon: 10.0,
        m: 200,
        grid_span: 30.0,
        ..MinimizeOptions::default()
    };
    let fine_opts = MinimizeOptions { m: 400, ..coarse_opts.clone() };
    let coarse =
        minimize_action(&b2, &cov, &sine, ActionMode::Heat, &u, None, &coarse_opts).unwrap();
    let fine =
        minimize_action(&b2, &cov, &sine, ActionMode::Heat, &u, None, &fine_opts).unwrap();
    assert!(coarse.converged && fine.converged);
    let drift_rel = (coarse.value - fine.value).abs() / fine.value;
    eprintln!(
        "grid doubling: {:.6} -> {:.6} (rel move {drift_rel:.2e})",
        coarse.value, fine.value
    );
    assert!(drift_rel <= 0.01, "value moved {drift_rel:.2e} under grid doubling");

    // 32 random starts all land on the same minimum
    let base_opts = MinimizeOptions {
        t_horizon: 10.0,
        m: 120,
        grid_span: 20.0,
        ..MinimizeOptions::default()
    };
    let baseline =
        minimize_action(&b2, &cov, &sine, ActionMode::Heat, &u, None, &base_opts).unwrap();
    assert!(baseline.converged);
    let times = DiscretePath::geometric_grid(10.0, 120, 20.0).unwrap();
    let mut stream = NoiseStream::new(2718, 0);
    let mut worst = 0.0_f64;
    for trial in 0..32 {
        let z = stream.normals(6);
        let positions: Vec<Vec<f64>> = times
            .iter()
            .map(|&t| {
                (0..2)
                    .map(|k| {
                        let rate = 0.3 + 0.5 * z[2 * k + 1].abs();
                        z[2 * k] * (rate * t).exp() * (1.0 + 0.2 * (3.0 * t + z[4 + k]).sin())
                    })
                    .collect()
            })
            .collect();
        let init = DiscretePath::new(times.clone(), positions, None).unwrap();
        let opts = MinimizeOptions { init: Some(init), ..base_opts.clone() };
        let run = minimize_action(&b2, &cov, &sine, ActionMode::Heat, &u, None, &opts).unwrap();
        assert!(run.converged, "start {trial} did not converge");
        worst = worst.max((run.value - baseline.value).abs() / baseline.value);
    }
    eprintln!(
        "32 random starts: baseline {:.6}, worst relative spread {worst:.2e}",
        baseline.value
    );
    assert!(worst <= 0.01, "minima disagree by {worst:.2e}");

    // a starved iteration budget is reported honestly
    let z = stream.normals(4);
    let far: Vec<Vec<f64>> = times
        .iter()
        .map(|&t| (0..2).map(|k| 3.0 * z[k] * (0.4 * t).exp() + 0.5 * z[2 + k]).collect())
        .collect();
    let init = DiscretePath::new(times.clone(), far, None).unwrap();
    let starved_opts =
        MinimizeOptions { max_iters: 2, init: Some(init.clone()), ..base_opts.clone() };
    let starved =
        minimize_action(&b2, &cov, &sine, ActionMode::Heat, &u, None, &starved_opts).unwrap();
    assert!(!starved.converged);
    assert!(starved.value.is_finite());
    assert!(starved.gradient_norm_at_exit.is_finite());

    // an init living on a different grid is rejected
    let other = DiscretePath::geometric_grid(9.0, 120, 20.0).unwrap();
    let bad = DiscretePath::new(other.clone(), vec![vec![0.0; 2]; other.len()], None).unwrap();
    let bad_opts = MinimizeOptions { init: Some(bad), ..base_opts };
    assert!(
        minimize_action(&b2, &cov, &sine, ActionMode::Heat, &u, None, &bad_opts).is_err()
    );
}

#[test]
fn mass_ladder_comparison_converges_to_heat_value() {
    let opts = MinimizeOptions::default();

    // gradient case: the relaxed-velocity second-order value equals the
    // first-order value at every mass, up to discretization
    let b3 = basis(3);
    let cov = CovarianceSpec::white(0.75);
    let quad = Nonlinearity::GradientQuadratic { kappa: 0.5 };
    let u = [0.6, 0.3, 0.2];
    let ladder = [0.4, 0.2, 0.1, 0.05];
    let rows = compare_mass_quasipotentials(&b3, &cov, &quad, &u, &ladder, &opts).unwrap();
    let closed = gradient_quasipotential(&b3, &cov, &quad, &u, &[0.0; 3], 0.0).unwrap();
    assert_eq!(rows.len(), 4);
    let heat_rel = (rows[0].heat_value - closed).abs() / closed;
    eprintln!("gradient ladder: heat {:.6} vs closed {closed:.6} (rel {heat_rel:.2e})", rows[0].heat_value);
    assert!(heat_rel <= 0.01);
    for row in &rows {
        let rel_gap = row.gap / row.heat_value;
        eprintln!(
            "  mu {:>5}: wave {:.6}, gap share {rel_gap:.2e}",
            row.mu, row.wave_value
        );
        assert!(row.wave_converged, "mass {} did not converge", row.mu);
        assert!(rel_gap <= 0.02, "mass {}: gap share {rel_gap:.2e}", row.mu);
    }

    // non-gradient drift: no identity at fixed mass, but the gap must close
    // as the mass vanishes
    let rot = Nonlinearity::ModeRotation { gamma0: 0.5 };
    let cov2 = CovarianceSpec::white(0.8);
    let u2 = [0.5, -0.3, 0.2];
    let rows2 = compare_mass_quasipotentials(&b3, &cov2, &rot, &u2, &ladder, &opts).unwrap();
    for row in &rows2 {
        eprintln!(
            "  rotation mu {:>5}: wave {:.6}, heat {:.6}, gap {:.4e}",
            row.mu, row.wave_value, row.heat_value, row.gap
        );
        assert!(row.wave_converged);
    }
    let first = &rows2[0];
    let last = &rows2[rows2.len() - 1];
    assert!(
        last.gap <= first.gap,
        "gap should shrink down the ladder: {} -> {}",
        first.gap,
        last.gap
    );
    assert!(
        last.gap <= 0.10 * last.heat_value,
        "smallest-mass gap {} too large vs heat value {}",
        last.gap,
        last.heat_value
    );

    // a zero endpoint prices at zero on every rung
    let rows0 =
        compare_mass_quasipotentials(&b3, &cov2, &rot, &[0.0; 3], &[0.2, 0.1], &opts).unwrap();
    for row in &rows0 {
        assert_eq!(row.wave_value, 0.0);
        assert_eq!(row.heat_value, 0.0);
        assert_eq!(row.gap, 0.0);
    }

    // malformed ladders are rejected
    assert!(compare_mass_quasipotentials(&b3, &cov2, &rot, &u2, &[], &opts).is_err());
    assert!(compare_mass_quasipotentials(&b3, &cov2, &rot, &u2, &[0.1, 0.2], &opts).is_err());
    assert!(compare_mass_quasipotentials(&b3, &cov2, &rot, &u2, &[0.2, -0.1], &opts).is_err());
}

#[test]
fn decomposition_identity_holds_on_optimizer_paths() {
    let b2 = basis(2);
    let cov = CovarianceSpec::white(0.8);
    let sine = Nonlinearity::Sine { amp: 0.3, freq: 1.0 };
    let mu = 0.2;
    let u = [0.7, -0.4];
    let opts = MinimizeOptions {
        t_horizon: 8.0,
        m: 64,
        grid_span: 10.0,
        ..MinimizeOptions::default()
    };

    let check_identity = |path: &DiscretePath, label: &str| {
        let wave = action_wave(&b2, &cov, &sine, path, mu).unwrap();
        let (heat_part, remainder) =
            action_decomposition(&b2, &cov, &sine, path, mu).unwrap();
        let gap = (heat_part + remainder - wave).abs();
        eprintln!("{label}: wave {wave:.6e}, identity gap {gap:.3e}");
        assert!(gap <= 1e-8 * (1.0 + wave), "{label}: identity gap {gap:.3e}");
    };

    // a rough hand-built start
    let times = DiscretePath::geometric_grid(8.0, 64, 10.0).unwrap();
    let rough = smooth_positions(&times, &[(1.2, 0.4, -0.5), (-0.8, 0.9, 0.4)]);
    let rough_path = DiscretePath::new(times.clone(), rough, None).unwrap();
    check_identity(&rough_path, "hand-built start");

    // a partially optimized path
    let partial_opts = MinimizeOptions {
        max_iters: 3,
        init: Some(rough_path),
        ..opts.clone()
    };
    let partial =
        minimize_action(&b2, &cov, &sine, ActionMode::Wave { mu }, &u, None, &partial_opts)
            .unwrap();
    check_identity(&partial.minimizer, "after three steps");

    // the converged minimizer
    let full =
        minimize_action(&b2, &cov, &sine, ActionMode::Wave { mu }, &u, None, &opts).unwrap();
    assert!(full.converged);
    check_identity(&full.minimizer, "at the minimizer");
}

#[test]
fn velocity_estimates_recover_smooth_derivatives() {
    // centered differences on an exponential: interior error O(h^2)
    let m = 200;
    let times: Vec<f64> = (0..=m).map(|j| -4.0 + 4.0 * j as f64 / m as f64).collect();
    let rate = 1.3;
    let positions: Vec<Vec<f64>> =
        times.iter().map(|&t| vec![0.9 * (rate * t).exp()]).collect();
    let path = DiscretePath::new(times.clone(), positions, None).unwrap();
    let est = path.velocity_estimates();
    for (j, &t) in times.iter().enumerate().skip(1).take(m - 1) {
        let exact = 0.9 * rate * (rate * t).exp();
        let rel = (est[j][0] - exact).abs() / exact.abs();
        assert!(rel < 2e-3, "node {j}: estimate {} vs exact {exact}", est[j][0]);
    }
    // stored velocities win over differences
    let stored = vec![vec![7.0]; times.len()];
    let with_v =
        DiscretePath::new(times.clone(), path.positions().to_vec(), Some(stored)).unwrap();
    assert_eq!(with_v.velocity_estimates()[m / 2][0], 7.0);

    // decay check distinguishes decayed from undecayed starts
    assert!(path.check_decay(1e-2).is_ok());
    assert!(path.check_decay(1e-3).is_err());
}
