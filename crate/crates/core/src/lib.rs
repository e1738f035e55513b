//! Relative abundance indices from longline catch records.
//!
//! Hooks on a longline compete: once a hook loses its bait it cannot catch, so
//! abundant non-target species suppress the target catch. The multinomial exponential
//! models (MEM1, MEM2) and simple exponential models (SEM1, SEM2) correct for that
//! competition and for empty hooks; CPUE does not.
//!
//! ```
//! use longline::data::PooledCounts;
//! use longline::indices::fit_mem1;
//!
//! let pooled = PooledCounts::from_outcomes(50, 25, 20, 5, 1.0, 1).unwrap();
//! let fit = fit_mem1(&pooled).unwrap();
//! assert!((fit.lambda_target - 0.5 * 2f64.ln()).abs() < 1e-12);
//! ```

pub mod bayes;
pub mod data;
pub mod error;
pub mod fd;
pub mod indices;
pub mod likelihood;
pub mod numeric;
pub mod optim;
pub mod plot;
mod par;
pub mod rng;
pub mod sim;
pub mod study;
pub mod uncertainty;

pub use data::{Dataset, PooledCounts, SetRecord};
pub use error::{DataError, EstimateError};
pub use indices::{EstimateResult, Method};
