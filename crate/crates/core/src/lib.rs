//! Nonparametric Bayesian drift estimation for 1-periodic diffusions.
//!
//! The drift of `dX_t = b(X_t) dt + dW_t` is modelled as a randomly truncated,
//! randomly scaled Faber-Schauder series with Gaussian coefficients. Because
//! the basis functions are piecewise linear with compact support, the
//! coefficient posterior is conjugate Gaussian given the truncation level and
//! scale, and the marginal likelihood over those two hyperparameters is
//! available in closed form. That structure drives everything here:
//!
//! * [`basis`] — hat-function basis, expansions, exact `L^p` norms;
//! * [`prior`] — coefficient covariance models (independent and periodic
//!   Ornstein-Uhlenbeck), truncation and scale hyperpriors;
//! * [`sdesim`] — Euler-Maruyama path simulation, log-likelihood, occupation
//!   density;
//! * [`inference`] — sufficient statistics, conjugate posteriors, marginal
//!   Metropolis-within-Gibbs over truncation and scale;
//! * [`experiments`] — contraction-rate studies for the diffusion and
//!   fixed-design regression models;
//! * [`verify`] — executable certification of the covariance bounds and the
//!   supporting analytic inequalities.
//!
//! All randomness flows from a single `u64` seed through [`seeding`]; with the
//! `parallel` feature (default) data-parallel sections run on a rayon pool but
//! produce bit-identical results for any worker count.

pub mod basis;
pub mod error;
pub mod experiments;
pub mod inference;
pub mod par;
pub mod prior;
pub mod sdesim;
pub mod seeding;
pub mod verify;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
