//! Diagnostics for the adversary-moves-first view of a round: the value of
//! the round's game when Nature commits to a label distribution first, the
//! regret against those values, and how far an empirical play of `M` pairs
//! sits from the distribution it samples.

use serde::{Deserialize, Serialize};

use crate::error::{MgolError, Result};
use crate::ftpl::{empirical_play, FtplConfig};
use crate::instance::ProblemInstance;
use crate::minimax::solve_zero_sum;
use crate::oracle::{ExactOracle, Oracle, OracleQuery};
use crate::play::{EmpiricalPlay, HistoryTally};
use crate::rng::SeedStream;
use crate::trace::Trace;

pub const DEFAULT_GAMMA_GRID: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmfRoundDiagnostic {
    pub t: usize,
    pub amf_value: f64,
    pub lp_value: f64,
    pub epsilon_estimate: f64,
}

/// Labels some hypothesis outputs at `x`, as action indices in order.
fn achievable_actions(instance: &ProblemInstance, x: usize) -> Vec<usize> {
    let mut seen = vec![false; instance.action_count()];
    for h in 0..instance.hypothesis_count() {
        seen[instance.predict(h, x)] = true;
    }
    (0..seen.len()).filter(|&a| seen[a]).collect()
}

/// Label probabilities `gamma` where two achievable actions have equal
/// expected loss; the inner game changes its optimal response there.
fn breakpoints(instance: &ProblemInstance, actions: &[usize]) -> Vec<f64> {
    let loss = instance.loss();
    // expected loss of a is loss(a, -1) + gamma * (loss(a, +1) - loss(a, -1))
    let line = |a: usize| (loss.get(a, 1), loss.get(a, 0) - loss.get(a, 1));
    let mut out = Vec::new();
    for (i, &a) in actions.iter().enumerate() {
        for &b in &actions[i + 1..] {
            let (ia, sa) = line(a);
            let (ib, sb) = line(b);
            if sa != sb {
                let g = (ib - ia) / (sa - sb);
                if (0.0..=1.0).contains(&g) {
                    out.push(g);
                }
            }
        }
    }
    out
}

/// The inner game at a fixed label probability `gamma` of `+1`: rows are the
/// learner's achievable actions, columns the benchmark types `(g(x), h(x))`.
/// Every pair with `g(x) = 0` pays 0, and a benchmark with `g(x) = 1` and
/// `h(x) = b` pays `L(a) - L(b)`, with `L` the expected loss.
fn inner_value(
    instance: &ProblemInstance,
    actions: &[usize],
    has_inactive: bool,
    gamma: f64,
) -> Result<f64> {
    let loss = instance.loss();
    let expected = |a: usize| gamma * loss.get(a, 0) + (1.0 - gamma) * loss.get(a, 1);
    let matrix: Vec<Vec<f64>> = actions
        .iter()
        .map(|&a| {
            let mut row: Vec<f64> = actions.iter().map(|&b| expected(a) - expected(b)).collect();
            if has_inactive {
                row.push(0.0);
            }
            row
        })
        .collect();
    Ok(solve_zero_sum(&matrix)?.value)
}

/// The adversary-moves-first value of a round at context `x`, binary labels
/// only. Searches the label probability on a uniform grid with `grid`
/// intervals plus the breakpoints.
pub fn amf_value_with_grid(instance: &ProblemInstance, x: usize, grid: usize) -> Result<f64> {
    if !instance.is_binary() {
        return Err(MgolError::Unsupported(
            "the adversary-moves-first value is computed for binary labels".into(),
        ));
    }
    if grid == 0 {
        return Err(MgolError::InvalidConfig(
            "the label-probability grid needs at least one interval".into(),
        ));
    }
    let x = instance.context(x)?.0;
    let actions = achievable_actions(instance, x);
    let has_inactive = (0..instance.group_count()).any(|g| !instance.in_group(g, x));
    let mut candidates: Vec<f64> = (0..=grid).map(|i| i as f64 / grid as f64).collect();
    candidates.extend(breakpoints(instance, &actions));
    let mut best = f64::NEG_INFINITY;
    for gamma in candidates {
        best = best.max(inner_value(instance, &actions, has_inactive, gamma)?);
    }
    Ok(best)
}

pub fn amf_value(instance: &ProblemInstance, x: usize) -> Result<f64> {
    amf_value_with_grid(instance, x, DEFAULT_GAMMA_GRID)
}

/// `max over (g, h)` of the summed realized regret minus the summed values.
/// The sum of values does not depend on the pair, so one exact search over
/// `G x H` suffices.
pub fn amf_regret(
    instance: &ProblemInstance,
    evaluator: &ExactOracle,
    trace: &Trace,
    values: &[f64],
) -> Result<f64> {
    if values.len() != trace.len() {
        return Err(MgolError::InvalidConfig(format!(
            "{} values for {} rounds",
            values.len(),
            trace.len()
        )));
    }
    let history = HistoryTally::from_trace(instance, trace)?;
    let query = OracleQuery {
        regret_records: history.regret_records(instance),
        ..Default::default()
    };
    let best = evaluator.opt_gh(&query)?.objective;
    Ok(best - values.iter().sum::<f64>())
}

/// `|mean of a - mean of b|` of the instantaneous regret at `x` for the
/// fixed `(pred, truth)`.
pub fn play_gap(
    instance: &ProblemInstance,
    a: &EmpiricalPlay,
    b: &EmpiricalPlay,
    x: usize,
    labels: (usize, usize),
) -> f64 {
    let (pred, truth) = labels;
    (a.mean_regret(instance, x, pred, truth) - b.mean_regret(instance, x, pred, truth)).abs()
}

/// `|mean over an M_small play - mean over an M_large play|` at the fixed
/// labels, both plays drawn for the same history from independent streams.
#[allow(clippy::too_many_arguments)]
pub fn epsilon_gap(
    oracle: &dyn Oracle,
    instance: &ProblemInstance,
    history: &HistoryTally,
    cfg: &FtplConfig,
    m_small: usize,
    m_large: usize,
    x: usize,
    labels: (usize, usize),
    stream: SeedStream,
) -> Result<f64> {
    if m_small == 0 || m_large < 10 * m_small {
        return Err(MgolError::InvalidConfig(format!(
            "need M_large >= 10 M_small, got {m_small} and {m_large}"
        )));
    }
    let small = FtplConfig {
        m_calls: m_small,
        ..*cfg
    };
    let large = FtplConfig {
        m_calls: m_large,
        ..*cfg
    };
    let a = empirical_play(oracle, instance, history, &small, stream.child(0))?;
    let b = empirical_play(oracle, instance, history, &large, stream.child(1))?;
    Ok(play_gap(instance, &a, &b, x, labels))
}

/// Per-round stand-in for the sampling error of a play, with no extra oracle
/// calls: half the largest gap, over label pairs, between the means of the
/// two halves of the play. `None` for a single-pair play.
pub fn split_half_epsilon(
    instance: &ProblemInstance,
    play: &EmpiricalPlay,
    x: usize,
) -> Option<f64> {
    let n = play.len() / 2;
    if n == 0 {
        return None;
    }
    let (a, b) = play.pairs().split_at(n);
    let b = &b[..n];
    let k = instance.action_count();
    let mut worst: f64 = 0.0;
    for pred in 0..k {
        for truth in 0..k {
            let mean = |s: &[_]| {
                s.iter()
                    .map(|&p| instance.instant_regret(p, x, pred, truth))
                    .sum::<f64>()
                    / n as f64
            };
            worst = worst.max((mean(a) - mean(b)).abs() / 2.0);
        }
    }
    Some(worst)
}
