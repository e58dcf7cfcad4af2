//! Threshold policies for the secretary problem with known, independent
//! (or negatively dependent) distributions.
//!
//! The policy accepts the `i`-th presented value iff it is the largest so far
//! and exceeds `tau_i`, where `Pr[max of all draws <= tau_i] = d_i^n` for
//! decision numbers `d_i` that are optimal in the IID case. Its success
//! probability is at least the IID optimum, which decreases to
//! `gamma ~ 0.5801` as `n` grows.
//!
//! Modules:
//! - [`distributions`]: laws, quantiles, the law of the maximum, augmentation.
//! - [`decision`]: decision numbers, the success formula, `c` and `gamma`.
//! - [`strategy`]: thresholds and the online policy.
//! - [`simulate`]: seeded parallel Monte Carlo and the random-subset bound.
//! - [`negdep`]: exact balls-into-bins verification of the dependent case.
//! - [`samples`]: thresholds from samples and sample-size planning.

pub mod decision;
pub mod distributions;
pub mod error;
pub mod negdep;
pub mod rng;
pub mod samples;
pub mod simulate;
pub mod strategy;

pub use decision::{gamma_limit, optimal_decision_numbers, solve_c, success_probability, DecisionNumbers, LimitConstants};
pub use distributions::{AugmentedValue, Distribution};
pub use error::{Error, Result};
pub use negdep::BallsBinsModel;
pub use rng::RandomStream;
pub use samples::{EstimationParams, SampleSet, SampleTable, SlackSchedule};
pub use simulate::{run_experiment, ExperimentConfig, Mode, SimulationResult};
pub use strategy::{EpisodeOutcome, Thresholds};
