use serde::{Deserialize, Serialize};

use crate::error::{MgolError, Result};
use crate::instance::{ActionLabel, Context};

/// One protocol round plus the learner's diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: usize,
    pub x: Context,
    pub y_hat: ActionLabel,
    pub y: ActionLabel,
    /// Weight the learner put on action index 0 (the `+1` action in binary mode).
    pub bernoulli_p: Option<f64>,
    /// Value of the learner's zero-sum game.
    pub lp_value: Option<f64>,
    pub gh_calls: u64,
    pub h_calls: u64,
    pub amf_value: Option<f64>,
    pub epsilon_estimate: Option<f64>,
}

impl RoundRecord {
    pub fn new(t: usize, x: Context, y_hat: ActionLabel, y: ActionLabel) -> Self {
        Self {
            t,
            x,
            y_hat,
            y,
            bernoulli_p: None,
            lp_value: None,
            gh_calls: 0,
            h_calls: 0,
            amf_value: None,
            epsilon_estimate: None,
        }
    }
}

/// The history of a run; round indices start at 1 and strictly increase.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    rounds: Vec<RoundRecord>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_rounds(rounds: Vec<RoundRecord>) -> Result<Self> {
        let mut trace = Self::new();
        for r in rounds {
            trace.push(r)?;
        }
        Ok(trace)
    }

    pub fn push(&mut self, record: RoundRecord) -> Result<()> {
        let last = self.rounds.last().map_or(0, |r| r.t);
        if record.t <= last {
            return Err(MgolError::OutOfOrderRound {
                last,
                got: record.t,
            });
        }
        self.rounds.push(record);
        Ok(())
    }

    pub fn rounds(&self) -> &[RoundRecord] {
        &self.rounds
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn last_t(&self) -> usize {
        self.rounds.last().map_or(0, |r| r.t)
    }
}
