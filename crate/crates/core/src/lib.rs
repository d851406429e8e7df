//! Multi-fidelity Bayesian optimization for tuning a trajectory-tracking
//! lateral controller.
//!
//! The crate is organised bottom-up:
//!
//! * [`gp`] single-fidelity Gaussian process regression with a Matérn-5/2 ARD
//!   kernel, marginal likelihood gradients and MAP hyperparameter fitting.
//! * [`multifidelity`] two-level auto-regressive (AR1) co-kriging and its
//!   nonlinear NARGP variant.
//! * [`bayesopt`] acquisition functions, the acquisition maximizer and the
//!   two-stage frozen-low campaign.
//! * [`vehicle`] the closed-loop single-track simulator that acts as the
//!   black-box objective.
//! * [`study`] benchmark, sweep and replica studies plus artifact emission.
//!
//! Data-parallel inner loops (candidate scoring, restarts, sweeps, trials) go
//! through [`par`], which uses rayon when the `parallel` feature is enabled
//! and falls back to plain iteration otherwise. Every reduction is index
//! ordered, so results do not depend on the feature.

pub mod bayesopt;
pub mod gp;
pub mod lowdisc;
pub mod multifidelity;
pub mod optim;
pub mod par;
pub mod study;
pub mod vehicle;
