//! Pieces shared by the `(G, H)`-players: the tallied history they optimize
//! against and the empirical play they hand to the learner.

use serde::{Deserialize, Serialize};

use crate::error::{MgolError, Result};
use crate::instance::{Context, GroupHypothesisPair, ProblemInstance};
use crate::oracle::RegretRecord;
use crate::rng::SeedStream;
use crate::trace::Trace;

/// `M` pairs sampled from the player's implicit distribution at one round.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmpiricalPlay {
    pairs: Vec<GroupHypothesisPair>,
}

impl EmpiricalPlay {
    pub fn new(pairs: Vec<GroupHypothesisPair>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(MgolError::InvalidConfig(
                "an empirical play needs at least one pair".into(),
            ));
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[GroupHypothesisPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Mean of `l~_x(pair, (pred, truth))` over the play, on action indices.
    pub fn mean_regret(
        &self,
        instance: &ProblemInstance,
        x: usize,
        pred: usize,
        truth: usize,
    ) -> f64 {
        let total: f64 = self
            .pairs
            .iter()
            .map(|&p| instance.instant_regret(p, x, pred, truth))
            .sum();
        total / self.pairs.len() as f64
    }
}

/// Past rounds folded into counts of `(x, y_hat, y)`. The `(G, H)` objective
/// is a weighted sum over rounds, so equal rounds merge into one record whose
/// weight is the count.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HistoryTally {
    k: usize,
    counts: Vec<u64>,
    rounds: usize,
}

impl HistoryTally {
    pub fn new(instance: &ProblemInstance) -> Self {
        let k = instance.action_count();
        Self {
            k,
            counts: vec![0; instance.m() * k * k],
            rounds: 0,
        }
    }

    pub fn from_trace(instance: &ProblemInstance, trace: &Trace) -> Result<Self> {
        let mut tally = Self::new(instance);
        for r in trace.rounds() {
            let x = instance.context(r.x.0)?.0;
            tally.record(
                x,
                instance.action_index(r.y_hat)?,
                instance.action_index(r.y)?,
            );
        }
        Ok(tally)
    }

    pub fn record(&mut self, x: usize, pred: usize, truth: usize) {
        self.counts[(x * self.k + pred) * self.k + truth] += 1;
        self.rounds += 1;
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    /// Nonzero cells as regret records, in `(x, pred, truth)` order.
    pub fn regret_records(&self, instance: &ProblemInstance) -> Vec<RegretRecord> {
        let k = self.k;
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, c)| **c > 0)
            .map(|(i, &c)| RegretRecord {
                x: Context(i / (k * k)),
                y_pred: instance.action_label((i / k) % k),
                y_true: instance.action_label(i % k),
                weight: c as f64,
            })
            .collect()
    }
}

/// A `(G, H)`-player: produces the round's empirical play from the history.
pub trait PairPlayer: Send {
    /// `M` pairs for round `t`. `stream` is private to this round.
    fn play(
        &mut self,
        history: &HistoryTally,
        t: usize,
        stream: SeedStream,
    ) -> Result<EmpiricalPlay>;

    /// `opt_gh` calls this player makes per round.
    fn gh_calls_per_round(&self) -> u64;
}
