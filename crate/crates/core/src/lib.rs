//! Oracle-efficient online multi-group learning.
//!
//! A learner faces a stream of contexts and must keep its regret small on
//! every group of a (possibly large) group class at once, touching the
//! hypothesis and group classes only through optimization oracles.

pub mod amf;
pub mod baselines;
pub mod env;
pub mod error;
pub mod ftpl;
pub mod gftpl;
pub mod harness;
pub mod hplayer;
pub mod instance;
pub mod learner;
pub mod ledger;
pub mod minimax;
pub mod oracle;
pub mod play;
pub mod rng;
pub mod trace;

pub use error::{MgolError, Result};
