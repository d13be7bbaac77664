//! Optimization oracles over `H` and over `G x H`.
//!
//! The `(G, H)` objective of a query is
//!
//! ```text
//! sum_r w_r * g(x_r) * (loss(pred_r, true_r) - loss(h(x_r), true_r))
//!   + sum_c w_c * g(z_c) * h(z_c)
//! ```
//!
//! The exact oracle folds every record into a per-context, per-action score
//! table, so a pair's objective is the sum of `score[x][h(x)]` over the
//! members of `g`. Hypotheses are visited in order of an upper bound on their
//! best group, and those whose bound cannot reach the incumbent are skipped.
//!
//! Ties are broken by the canonical pair order: group index first, then
//! hypothesis index. Two objectives within [`tie_tolerance`] of the maximum
//! are treated as tied, so summation order never decides the winner.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{MgolError, Result};
use crate::instance::{
    AccessRole, ActionLabel, Context, Group, GroupHypothesisPair, LossTable, ProblemInstance,
};

/// One `l~` term of the objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretRecord {
    pub x: Context,
    pub y_pred: ActionLabel,
    pub y_true: ActionLabel,
    pub weight: f64,
}

/// One `w * g(z) * h(z)` perturbation term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRecord {
    pub z: Context,
    pub weight: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleQuery {
    pub regret_records: Vec<RegretRecord>,
    pub correlation_records: Vec<CorrelationRecord>,
    pub alpha: f64,
}

/// One weighted labelled example for the `H` oracle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub x: Context,
    pub y: ActionLabel,
    pub weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleAnswer {
    pub pair: GroupHypothesisPair,
    pub objective: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleCalls {
    pub gh: u64,
    pub h: u64,
}

impl std::ops::Sub for OracleCalls {
    type Output = OracleCalls;

    fn sub(self, rhs: Self) -> Self {
        OracleCalls {
            gh: self.gh - rhs.gh,
            h: self.h - rhs.h,
        }
    }
}

/// Width of the tie band below a maximum `v`.
#[inline]
pub fn tie_tolerance(v: f64) -> f64 {
    1e-10 * (1.0 + v.abs())
}

/// Access to `H` and `G x H` through optimization calls only.
pub trait Oracle: Send + Sync {
    /// Additive approximation error of [`Oracle::opt_gh`].
    fn alpha(&self) -> f64;

    /// A pair whose objective is within `alpha` of the supremum over `G x H`.
    fn opt_gh(&self, query: &OracleQuery) -> Result<OracleAnswer>;

    /// A hypothesis minimizing `sum_i w_i * loss(h(x_i), y_i)`.
    fn opt_h(&self, records: &[LabeledRecord], loss: &LossTable) -> Result<usize>;

    fn calls(&self) -> OracleCalls;
}

/// Exact enumeration over finite classes (`alpha = 0`).
#[derive(Debug)]
pub struct ExactOracle {
    instance: Arc<ProblemInstance>,
    gh_calls: AtomicU64,
    h_calls: AtomicU64,
}

impl ExactOracle {
    pub fn new(instance: Arc<ProblemInstance>) -> Self {
        Self {
            instance,
            gh_calls: AtomicU64::new(0),
            h_calls: AtomicU64::new(0),
        }
    }

    pub fn instance(&self) -> &Arc<ProblemInstance> {
        &self.instance
    }

    /// The aggregated objective of `pair`, the same arithmetic `opt_gh` uses.
    pub fn objective(&self, query: &OracleQuery, pair: GroupHypothesisPair) -> Result<f64> {
        let scores = ScoreTable::build(&self.instance, query)?;
        let s = scores.for_hypothesis(&self.instance, pair.hypothesis);
        Ok(match self.instance.group(pair.group) {
            Group::Interval { lo, hi } => s[*lo..=*hi].iter().sum(),
            Group::Set { members } => members.iter().map(|&x| s[x]).sum(),
        })
    }
}

/// `score[x * K + a]`: the objective contribution of context `x` for a pair
/// whose group contains `x` and whose hypothesis predicts action `a` there.
struct ScoreTable {
    k: usize,
    scores: Vec<f64>,
}

impl ScoreTable {
    fn build(instance: &ProblemInstance, query: &OracleQuery) -> Result<Self> {
        let (m, k) = (instance.m(), instance.action_count());
        let loss = instance.loss();
        let mut scores = vec![0.0; m * k];
        for r in &query.regret_records {
            check_weight(r.weight)?;
            let x = instance.context(r.x.0)?.0;
            let pred = instance.action_index(r.y_pred)?;
            let truth = instance.action_index(r.y_true)?;
            if r.weight == 0.0 {
                continue;
            }
            let learner = loss.get(pred, truth);
            for a in 0..k {
                scores[x * k + a] += r.weight * (learner - loss.get(a, truth));
            }
        }
        for c in &query.correlation_records {
            check_weight(c.weight)?;
            let z = instance.context(c.z.0)?.0;
            if c.weight == 0.0 {
                continue;
            }
            for a in 0..k {
                scores[z * k + a] += c.weight * instance.action_value(a);
            }
        }
        Ok(Self { k, scores })
    }

    fn for_hypothesis(&self, instance: &ProblemInstance, h: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(instance.m());
        self.fill(instance, h, &mut out);
        out
    }

    fn fill(&self, instance: &ProblemInstance, h: usize, out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..instance.m()).map(|x| self.scores[x * self.k + instance.predict(h, x)]));
    }
}

fn check_weight(w: f64) -> Result<()> {
    if w.is_finite() {
        Ok(())
    } else {
        Err(MgolError::InvalidConfig(format!(
            "record weight {w} is not finite"
        )))
    }
}

/// Largest sum over a nonempty contiguous run.
fn max_run_sum(s: &[f64]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    let mut run = 0.0;
    for &v in s {
        run = if run > 0.0 { run + v } else { v };
        best = best.max(run);
    }
    best
}

impl Oracle for ExactOracle {
    fn alpha(&self) -> f64 {
        0.0
    }

    fn opt_gh(&self, query: &OracleQuery) -> Result<OracleAnswer> {
        self.gh_calls.fetch_add(1, Ordering::Relaxed);
        let inst = &*self.instance;
        let scores = ScoreTable::build(inst, query)?;
        let groups = inst.groups(AccessRole::Oracle);
        let has_sets = groups.iter().any(|g| matches!(g, Group::Set { .. }));
        let n_h = inst.hypothesis_count();

        let mut per_h = Vec::with_capacity(inst.m());
        let mut bounds: Vec<(f64, usize)> = (0..n_h)
            .map(|h| {
                scores.fill(inst, h, &mut per_h);
                let positive: f64 = per_h.iter().filter(|v| **v > 0.0).sum();
                let bound = if has_sets {
                    positive
                } else {
                    max_run_sum(&per_h)
                };
                // the bound is exact up to summation order, so pad it
                (bound + tie_tolerance(bound), h)
            })
            .collect();
        bounds.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

        let mut best = f64::NEG_INFINITY;
        let mut evaluated: Vec<(usize, Vec<f64>)> = Vec::new();
        let mut prefix = vec![0.0; inst.m() + 1];
        for &(bound, h) in &bounds {
            if bound < best - tie_tolerance(best) {
                break;
            }
            scores.fill(inst, h, &mut per_h);
            for (x, v) in per_h.iter().enumerate() {
                prefix[x + 1] = prefix[x] + v;
            }
            let values: Vec<f64> = groups
                .iter()
                .map(|g| match g {
                    Group::Interval { lo, hi } => prefix[hi + 1] - prefix[*lo],
                    Group::Set { members } => members.iter().map(|&x| per_h[x]).sum(),
                })
                .collect();
            best = values.iter().copied().fold(best, f64::max);
            evaluated.push((h, values));
        }

        let threshold = best - tie_tolerance(best);
        let mut answer: Option<OracleAnswer> = None;
        for (h, values) in &evaluated {
            if let Some(g) = values.iter().position(|v| *v >= threshold) {
                let pair = GroupHypothesisPair::new(g, *h);
                if answer.is_none_or(|a| pair < a.pair) {
                    answer = Some(OracleAnswer {
                        pair,
                        objective: values[g],
                    });
                }
            }
        }
        Ok(answer.expect("at least one hypothesis attains the maximum"))
    }

    fn opt_h(&self, records: &[LabeledRecord], loss: &LossTable) -> Result<usize> {
        self.h_calls.fetch_add(1, Ordering::Relaxed);
        let inst = &*self.instance;
        let (m, k) = (inst.m(), loss.action_count());
        if k != inst.action_count() {
            return Err(MgolError::InvalidConfig(format!(
                "loss table has {k} actions, instance has {}",
                inst.action_count()
            )));
        }
        let mut per_action = vec![0.0; m * k];
        for r in records {
            check_weight(r.weight)?;
            let x = inst.context(r.x.0)?.0;
            let y = inst.action_index(r.y)?;
            if r.weight == 0.0 {
                continue;
            }
            for a in 0..k {
                per_action[x * k + a] += r.weight * loss.get(a, y);
            }
        }
        let totals: Vec<f64> = (0..inst.hypothesis_count())
            .map(|h| (0..m).map(|x| per_action[x * k + inst.predict(h, x)]).sum())
            .collect();
        let best = totals.iter().copied().fold(f64::INFINITY, f64::min);
        let cutoff = best + tie_tolerance(best);
        Ok(totals
            .iter()
            .position(|v| *v <= cutoff)
            .expect("H is nonempty"))
    }

    fn calls(&self) -> OracleCalls {
        OracleCalls {
            gh: self.gh_calls.load(Ordering::Relaxed),
            h: self.h_calls.load(Ordering::Relaxed),
        }
    }
}

/// Objective of `pair` evaluated record by record, without aggregation.
pub fn direct_objective(
    instance: &ProblemInstance,
    query: &OracleQuery,
    pair: GroupHypothesisPair,
) -> Result<f64> {
    let mut total = 0.0;
    for r in &query.regret_records {
        let pred = instance.action_index(r.y_pred)?;
        let truth = instance.action_index(r.y_true)?;
        let x = instance.context(r.x.0)?.0;
        total += r.weight * instance.instant_regret(pair, x, pred, truth);
    }
    for c in &query.correlation_records {
        let z = instance.context(c.z.0)?.0;
        if instance.in_group(pair.group, z) {
            total += c.weight * instance.action_value(instance.predict(pair.hypothesis, z));
        }
    }
    Ok(total)
}

/// Exhaustive scan of `G x H` with [`direct_objective`]; returns the
/// canonical maximizer and its objective. Test and diagnostic use only.
pub fn brute_force_opt_gh(
    instance: &ProblemInstance,
    query: &OracleQuery,
) -> Result<(GroupHypothesisPair, f64)> {
    let n_g = instance.groups(AccessRole::Evaluation).len();
    let n_h = instance.hypothesis_count();
    let mut values = Vec::with_capacity(n_g * n_h);
    for g in 0..n_g {
        for h in 0..n_h {
            values.push(direct_objective(
                instance,
                query,
                GroupHypothesisPair::new(g, h),
            )?);
        }
    }
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let threshold = best - tie_tolerance(best);
    let idx = values
        .iter()
        .position(|v| *v >= threshold)
        .expect("G x H is nonempty");
    Ok((GroupHypothesisPair::new(idx / n_h, idx % n_h), values[idx]))
}
