//! The learner's side of each round: find a hypothesis realizing each action
//! at `x_t`, build the payoff matrix of the empirical play against those
//! realizers, solve it, and draw the action.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::instance::{ActionLabel, Context, LossTable, ProblemInstance};
use crate::minimax::{solve_zero_sum, MixedStrategy};
use crate::oracle::{LabeledRecord, Oracle};
use crate::play::EmpiricalPlay;

/// `entries[k][y]`: summed instantaneous regret of the play when the learner
/// plays the action of realizer `k` and the truth is `y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GameMatrix {
    pub entries: Vec<Vec<f64>>,
}

/// One hypothesis per action index; `h'_k` is `opt_h` on the singleton
/// `{(x, k)}` under zero-one loss. When no hypothesis outputs `k` at `x`,
/// `h'_k(x)` is some other action.
pub fn realizable_actions(
    oracle: &dyn Oracle,
    instance: &ProblemInstance,
    x: usize,
) -> Result<Vec<usize>> {
    let k = instance.action_count();
    let zero_one = LossTable::zero_one(k);
    (0..k)
        .map(|a| {
            let record = LabeledRecord {
                x: Context(x),
                y: instance.action_label(a),
                weight: 1.0,
            };
            oracle.opt_h(&[record], &zero_one)
        })
        .collect()
}

pub fn build_game_matrix(
    instance: &ProblemInstance,
    play: &EmpiricalPlay,
    x: usize,
    realizers: &[usize],
) -> GameMatrix {
    let k = instance.action_count();
    let entries = realizers
        .iter()
        .map(|&h| {
            let pred = instance.predict(h, x);
            (0..k)
                .map(|y| {
                    play.pairs()
                        .iter()
                        .map(|&pair| instance.instant_regret(pair, x, pred, y))
                        .sum()
                })
                .collect()
        })
        .collect();
    GameMatrix { entries }
}

pub fn solve_game(gm: &GameMatrix) -> Result<MixedStrategy> {
    solve_zero_sum(&gm.entries)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Action {
    /// Row drawn from the strategy.
    pub index: usize,
    /// The realizer of that row.
    pub hypothesis: usize,
    /// Its label at `x`, which differs from `index` when the row's action is
    /// not realizable there.
    pub y_hat: usize,
}

impl Action {
    pub fn label(&self, instance: &ProblemInstance) -> ActionLabel {
        instance.action_label(self.y_hat)
    }
}

pub fn act<R: Rng + ?Sized>(
    strategy: &MixedStrategy,
    realizers: &[usize],
    instance: &ProblemInstance,
    x: usize,
    rng: &mut R,
) -> Action {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut index = None;
    for (k, &p) in strategy.probs.iter().enumerate() {
        acc += p;
        if u < acc {
            index = Some(k);
            break;
        }
    }
    // rounding can leave the cumulative sum just below u
    let index = index.unwrap_or_else(|| strategy.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0));
    let hypothesis = realizers[index];
    Action {
        index,
        hypothesis,
        y_hat: instance.predict(hypothesis, x),
    }
}
