//! skram — spectral-Galerkin toolkit for damped stochastic wave equations
//! and their small-mass (Smoluchowski–Kramers) limits.
//!
//! The library simulates, on the Dirichlet interval [0, L],
//!
//! * the damped stochastic wave equation
//!   `mu u_tt = Delta u - u_t + b(x, u) + g(x, u) dW/dt`,
//! * its mu -> 0 limit, the stochastic heat equation
//!   `u_t = Delta u + b(x, u) + g(x, u) dW/dt`,
//! * the magnetic / rotational variant in which the friction matrix is a
//!   regularized rotation `J_eps = J0 + eps I`, and its eps, mu limits,
//!
//! and analyzes the objects that the limits preserve or deform: invariant
//! measures, large-deviation action functionals, quasi-potentials, and mean
//! exit times from a domain. Everything is resolved per eigenmode: linear
//! flows and step-noise covariances are computed exactly (closed forms plus
//! controlled quadrature), so discretization error enters only through the
//! nonlinearity, and coupled systems can literally share one Brownian path.
//!
//! Modules, bottom up:
//!
//! * [`rng`] — counter-addressable Gaussian streams (reproducible ensembles);
//! * [`quadrature`] — Gauss–Legendre panels with tolerance control;
//! * [`spectral`] — eigenbasis, mode fields, Sobolev/phase norms;
//! * [`propagator`] — exact 2x2 mode flows (wave, magnetic, heat);
//! * [`noise`] — covariance specs, hypothesis flags, exact step sampling;
//! * [`nonlinearity`] — reaction terms and multiplicative amplitudes;
//! * [`solver`] — exponential-Euler trajectory integrators, coupled pairs;
//! * [`sk`] — small-mass convergence experiments and residual diagnostics;
//! * [`stationary`] — invariant measures: exact Gaussian laws, long-run
//!   moments, Boltzmann–Gibbs samplers;
//! * [`action`] — discrete action functionals and quasi-potential
//!   minimization;
//! * [`exit`] — small-noise exit times and boundary quasi-potentials;
//! * [`report`] — CSV/JSON artifact writers and run manifests;
//! * [`config`], [`runner`] — experiment configuration and orchestration.

pub mod action;
pub mod error;
pub mod noise;
pub mod nonlinearity;
pub mod propagator;
pub mod quadrature;
pub mod rng;
pub mod sk;
pub mod solver;
pub mod spectral;
pub mod stationary;

pub use error::{Result, SkramError};
