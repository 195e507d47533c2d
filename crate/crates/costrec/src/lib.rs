//! Cost-recovering mechanism reductions.
//!
//! Starting from an arbitrary allocation algorithm for an excludable public
//! service (a cost function over served sets plus independent per-agent value
//! priors), this crate builds mechanisms whose expected payments cover the
//! expected service cost while losing only a bounded factor in social cost
//! (service cost plus the value of excluded agents).
//!
//! The main entry points:
//!
//! * [`model`] — valuation profiles, value distributions, product priors,
//!   cost functions, and exact enumeration over discrete supports.
//! * [`interim`] — interim allocation curves on a uniform value grid, exact or
//!   Monte Carlo estimated, plus truncated interim payments and the unbiased
//!   one-draw payment sampler.
//! * [`monotone`] — wrappers that repair non-monotone interim curves: pooled
//!   resampling (pool-adjacent-violators over the grid) and the blatant
//!   single-agent lottery mix.
//! * [`bic`] — threshold schedules that scan doubling or adaptively spaced
//!   price floors until truncated payments cover expected cost, and the
//!   mechanism built from the selected threshold.
//! * [`expost`] — per-profile reductions with posted prices (binary values,
//!   doubling prices, explicit support lists) that recover cost ex post.
//! * [`audit`] — independent checks: curve monotonicity, incentive
//!   compatibility on discrete grids, per-profile truthfulness, cost
//!   recovery, social-cost ratios, and the equal-revenue lower-bound
//!   experiment.
//! * [`config`] / [`report`] — strict TOML experiment configs and
//!   deterministic CSV/JSON emission used by the `costrec` binary.

pub mod algorithms;
pub mod audit;
pub mod bic;
pub mod config;
pub mod error;
pub mod expost;
pub mod interim;
pub mod mechanism;
pub mod model;
pub mod monotone;
pub mod report;
pub mod rng;

pub use error::{Error, Result};
