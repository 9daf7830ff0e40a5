//! Exact and learning solvers for tabular average-reward Markov decision
//! processes, up to Blackwell optimality.
//!
//! * [`model`]: instances, policies and action masks.
//! * [`eval`] and [`chain`]: gain, biases of every order, gaps, hitting times.
//! * [`hopi`]: higher order policy iteration, exact or with a soft argmax.
//! * [`oracle`]: brute-force optimal and Bellman optimal sets.
//! * [`transforms`]: builtin instances, generators and the shattering steps.
//! * [`certificates`]: uniqueness tests and the stopping thresholds.
//! * [`sim`] and [`experiment`]: the learning loop and batch runs.
//! * [`io`]: JSON formats.

pub mod certificates;
pub mod chain;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod hopi;
pub mod io;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod sim;
pub mod transforms;

pub use error::{Error, Result};
pub use model::{mdp_distance, support_covers, Action, ActionMask, MdpModel, Policy, RewardDist};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/hopi.md")]
    mod hopi {}
    #[doc = include_str!("../../../book/src/certificates.md")]
    mod certificates {}
    #[doc = include_str!("../../../book/src/shattering.md")]
    mod shattering {}
    #[doc = include_str!("../../../book/src/learning.md")]
    mod learning {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
