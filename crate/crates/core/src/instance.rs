//! Problem instances: the finite context universe, the hypothesis and group
//! classes, the loss table, and the single-round group regret that every
//! player consumes.
//!
//! Actions are addressed internally by index. In binary mode the action order
//! is `[+1, -1]`, so index 0 is the `+1` label; in K-class mode index `k` is
//! label `k`. Loss tables, game matrices and mixed strategies all follow this
//! order.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{MgolError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionLabel(pub i32);

impl fmt::Display for ActionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A point of the finite universe `{0, .., m-1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Context(pub usize);

impl Context {
    pub fn index(self) -> usize {
        self.0
    }

    /// Position of the context in `[0, 1)`.
    pub fn embedding(self, m: usize) -> f64 {
        self.0 as f64 / m as f64
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hypothesis {
    /// `polarity` on contexts with index `>= theta`, `-polarity` below it.
    Threshold { theta: usize, polarity: i32 },
    /// One label per context.
    Table { labels: Vec<ActionLabel> },
}

impl Hypothesis {
    pub fn threshold(theta: usize, polarity: i32) -> Self {
        Hypothesis::Threshold { theta, polarity }
    }

    pub fn table(labels: impl IntoIterator<Item = i32>) -> Self {
        Hypothesis::Table {
            labels: labels.into_iter().map(ActionLabel).collect(),
        }
    }

    /// Both polarities of every threshold `0..=m`, threshold-major.
    pub fn thresholds(m: usize) -> Vec<Hypothesis> {
        (0..=m)
            .flat_map(|theta| [1, -1].map(|polarity| Hypothesis::Threshold { theta, polarity }))
            .collect()
    }

    pub fn eval(&self, x: Context) -> Result<ActionLabel> {
        match self {
            Hypothesis::Threshold { theta, polarity } => Ok(ActionLabel(if x.0 >= *theta {
                *polarity
            } else {
                -*polarity
            })),
            Hypothesis::Table { labels } => {
                labels
                    .get(x.0)
                    .copied()
                    .ok_or(MgolError::ContextOutOfRange {
                        index: x.0,
                        m: labels.len(),
                    })
            }
        }
    }
}

/// Evaluates `h` at `x`. Table lookups past the end report a malformed instance.
pub fn eval_hypothesis(h: &Hypothesis, x: Context) -> Result<ActionLabel> {
    h.eval(x)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Group {
    /// Contexts `lo..=hi`.
    Interval { lo: usize, hi: usize },
    /// Strictly increasing member indices.
    Set { members: Vec<usize> },
}

impl Group {
    pub fn interval(lo: usize, hi: usize) -> Self {
        Group::Interval { lo, hi }
    }

    pub fn set(members: impl IntoIterator<Item = usize>) -> Self {
        Group::Set {
            members: members.into_iter().collect(),
        }
    }

    /// Every interval `[lo, hi]` of `{0, .., m-1}`, ordered by `(lo, hi)`.
    pub fn intervals(m: usize) -> Vec<Group> {
        (0..m)
            .flat_map(|lo| (lo..m).map(move |hi| Group::Interval { lo, hi }))
            .collect()
    }

    pub fn contains(&self, x: Context) -> bool {
        match self {
            Group::Interval { lo, hi } => *lo <= x.0 && x.0 <= *hi,
            Group::Set { members } => members.binary_search(&x.0).is_ok(),
        }
    }

    fn covers_universe(&self, m: usize) -> bool {
        match self {
            Group::Interval { lo, hi } => *lo == 0 && *hi + 1 == m,
            Group::Set { members } => members.len() == m,
        }
    }
}

/// `g(x)` as a 0/1 indicator.
pub fn group_indicator(g: &Group, x: Context) -> u8 {
    u8::from(g.contains(x))
}

/// `entries[pred][truth] = loss(pred, truth)`, indexed in action order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LossTable {
    entries: Vec<Vec<f64>>,
}

impl LossTable {
    pub fn new(entries: Vec<Vec<f64>>) -> Result<Self> {
        let k = entries.len();
        if k < 2 {
            return Err(MgolError::InvalidInstance(
                "loss table needs at least two actions".into(),
            ));
        }
        for row in &entries {
            if row.len() != k {
                return Err(MgolError::InvalidInstance(format!(
                    "loss table must be square, found a row of length {} in a {k}-row table",
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(MgolError::InvalidInstance(format!(
                    "loss entry {v} outside [0, 1]"
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn zero_one(k: usize) -> Self {
        let entries = (0..k)
            .map(|p| (0..k).map(|y| if p == y { 0.0 } else { 1.0 }).collect())
            .collect();
        Self { entries }
    }

    pub fn action_count(&self) -> usize {
        self.entries.len()
    }

    #[inline]
    pub fn get(&self, pred: usize, truth: usize) -> f64 {
        self.entries[pred][truth]
    }

    pub fn entries(&self) -> &[Vec<f64>] {
        &self.entries
    }
}

/// `(g, h)` by position in the instance's group and hypothesis lists.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupHypothesisPair {
    pub group: usize,
    pub hypothesis: usize,
}

impl GroupHypothesisPair {
    pub fn new(group: usize, hypothesis: usize) -> Self {
        Self { group, hypothesis }
    }
}

/// Who is reading the full group list. Learners never enumerate `G`; only the
/// oracle and evaluation code may.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AccessRole {
    Learner,
    Oracle,
    Evaluation,
}

#[derive(Debug, Default)]
pub struct GroupAccessCounts {
    learner: AtomicU64,
    oracle: AtomicU64,
    evaluation: AtomicU64,
}

impl GroupAccessCounts {
    fn slot(&self, role: AccessRole) -> &AtomicU64 {
        match role {
            AccessRole::Learner => &self.learner,
            AccessRole::Oracle => &self.oracle,
            AccessRole::Evaluation => &self.evaluation,
        }
    }

    pub fn get(&self, role: AccessRole) -> u64 {
        self.slot(role).load(Ordering::Relaxed)
    }
}

/// Serialized form of a [`ProblemInstance`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDescription {
    pub universe_size: usize,
    pub action_count: usize,
    pub hypotheses: Vec<Hypothesis>,
    pub groups: Vec<Group>,
    pub loss: LossTable,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vc_hint: Option<usize>,
}

#[derive(Debug)]
pub struct ProblemInstance {
    desc: InstanceDescription,
    actions: Vec<ActionLabel>,
    // labels[h * m + x] is the action index of hypothesis h at context x
    labels: Vec<u8>,
    // membership[g * m + x]
    membership: Vec<bool>,
    access: GroupAccessCounts,
}

impl ProblemInstance {
    pub fn new(desc: InstanceDescription) -> Result<Self> {
        let m = desc.universe_size;
        let k = desc.action_count;
        if m == 0 {
            return Err(MgolError::InvalidInstance(
                "universe_size must be positive".into(),
            ));
        }
        if k < 2 || k > u8::MAX as usize {
            return Err(MgolError::InvalidInstance(format!(
                "action_count must be in 2..=255, got {k}"
            )));
        }
        if desc.loss.action_count() != k {
            return Err(MgolError::InvalidInstance(format!(
                "loss table has {} actions, instance declares {k}",
                desc.loss.action_count()
            )));
        }
        if desc.hypotheses.is_empty() || desc.groups.is_empty() {
            return Err(MgolError::InvalidInstance(
                "hypothesis and group lists must be nonempty".into(),
            ));
        }
        let actions: Vec<ActionLabel> = if k == 2 {
            vec![ActionLabel(1), ActionLabel(-1)]
        } else {
            (0..k as i32).map(ActionLabel).collect()
        };
        let index_of = |label: ActionLabel| actions.iter().position(|a| *a == label);

        let mut labels = Vec::with_capacity(desc.hypotheses.len() * m);
        for (i, h) in desc.hypotheses.iter().enumerate() {
            match h {
                Hypothesis::Threshold { theta, polarity } => {
                    if k != 2 {
                        return Err(MgolError::InvalidInstance(format!(
                            "hypothesis {i}: thresholds need binary actions"
                        )));
                    }
                    if *theta > m || polarity.abs() != 1 {
                        return Err(MgolError::InvalidInstance(format!(
                            "hypothesis {i}: threshold {theta} / polarity {polarity} out of range"
                        )));
                    }
                }
                Hypothesis::Table { labels: t } if t.len() != m => {
                    return Err(MgolError::InvalidInstance(format!(
                        "hypothesis {i}: table has {} entries for a universe of {m}",
                        t.len()
                    )));
                }
                Hypothesis::Table { .. } => {}
            }
            for x in 0..m {
                let label = h.eval(Context(x))?;
                let idx = index_of(label).ok_or_else(|| {
                    MgolError::InvalidInstance(format!(
                        "hypothesis {i}: label {label} is not an action"
                    ))
                })?;
                labels.push(idx as u8);
            }
        }

        let mut membership = Vec::with_capacity(desc.groups.len() * m);
        for (i, g) in desc.groups.iter().enumerate() {
            match g {
                Group::Interval { lo, hi } if lo > hi || *hi >= m => {
                    return Err(MgolError::InvalidInstance(format!(
                        "group {i}: interval [{lo}, {hi}] invalid for universe {m}"
                    )));
                }
                Group::Set { members }
                    if members.windows(2).any(|w| w[0] >= w[1])
                        || members.last().is_some_and(|&x| x >= m) =>
                {
                    return Err(MgolError::InvalidInstance(format!(
                        "group {i}: members must be strictly increasing and below {m}"
                    )));
                }
                _ => {}
            }
            membership.extend((0..m).map(|x| g.contains(Context(x))));
        }
        if !desc.groups.iter().any(|g| g.covers_universe(m)) {
            return Err(MgolError::InvalidInstance(
                "the group covering the whole universe must be present".into(),
            ));
        }

        Ok(Self {
            desc,
            actions,
            labels,
            membership,
            access: GroupAccessCounts::default(),
        })
    }

    /// Both-polarity thresholds and every interval over `m` contexts, zero-one loss.
    pub fn thresholds_and_intervals(m: usize) -> Result<Self> {
        Self::new(InstanceDescription {
            universe_size: m,
            action_count: 2,
            hypotheses: Hypothesis::thresholds(m),
            groups: Group::intervals(m),
            loss: LossTable::zero_one(2),
            vc_hint: Some(2),
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Self::new(serde_json::from_str(s)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.desc).expect("instance description serializes")
    }

    pub fn description(&self) -> &InstanceDescription {
        &self.desc
    }

    pub fn m(&self) -> usize {
        self.desc.universe_size
    }

    pub fn action_count(&self) -> usize {
        self.desc.action_count
    }

    pub fn is_binary(&self) -> bool {
        self.desc.action_count == 2
    }

    pub fn actions(&self) -> &[ActionLabel] {
        &self.actions
    }

    pub fn action_index(&self, label: ActionLabel) -> Result<usize> {
        self.actions
            .iter()
            .position(|a| *a == label)
            .ok_or_else(|| MgolError::InvalidLabel {
                label: label.0,
                actions: self.actions.iter().map(|a| a.0).collect(),
            })
    }

    pub fn action_label(&self, index: usize) -> ActionLabel {
        self.actions[index]
    }

    /// Real-line embedding of an action, used by the `g(z) h(z)` perturbation term.
    #[inline]
    pub fn action_value(&self, index: usize) -> f64 {
        self.actions[index].0 as f64
    }

    pub fn context(&self, index: usize) -> Result<Context> {
        if index < self.m() {
            Ok(Context(index))
        } else {
            Err(MgolError::ContextOutOfRange { index, m: self.m() })
        }
    }

    pub fn loss(&self) -> &LossTable {
        &self.desc.loss
    }

    pub fn vc_hint(&self) -> Option<usize> {
        self.desc.vc_hint
    }

    pub fn hypothesis_count(&self) -> usize {
        self.desc.hypotheses.len()
    }

    pub fn group_count(&self) -> usize {
        self.desc.groups.len()
    }

    pub fn pair_count(&self) -> usize {
        self.group_count() * self.hypothesis_count()
    }

    pub fn hypotheses(&self) -> &[Hypothesis] {
        &self.desc.hypotheses
    }

    pub fn hypothesis(&self, h: usize) -> &Hypothesis {
        &self.desc.hypotheses[h]
    }

    pub fn group(&self, g: usize) -> &Group {
        &self.desc.groups[g]
    }

    /// The full group list. Every call is counted against `role`.
    pub fn groups(&self, role: AccessRole) -> &[Group] {
        self.access.slot(role).fetch_add(1, Ordering::Relaxed);
        &self.desc.groups
    }

    pub fn group_access(&self) -> &GroupAccessCounts {
        &self.access
    }

    /// Action index of hypothesis `h` at context `x`.
    #[inline]
    pub fn predict(&self, h: usize, x: usize) -> usize {
        self.labels[h * self.m() + x] as usize
    }

    pub fn predict_label(&self, h: usize, x: Context) -> ActionLabel {
        self.actions[self.predict(h, x.0)]
    }

    #[inline]
    pub fn in_group(&self, g: usize, x: usize) -> bool {
        self.membership[g * self.m() + x]
    }

    /// Membership row of group `g` over the universe.
    pub fn group_row(&self, g: usize) -> &[bool] {
        let m = self.m();
        &self.membership[g * m..(g + 1) * m]
    }

    /// `g(x) (loss(pred, truth) - loss(h(x), truth))` on action indices.
    #[inline]
    pub fn instant_regret(
        &self,
        pair: GroupHypothesisPair,
        x: usize,
        pred: usize,
        truth: usize,
    ) -> f64 {
        if !self.in_group(pair.group, x) {
            return 0.0;
        }
        let loss = self.loss();
        loss.get(pred, truth) - loss.get(self.predict(pair.hypothesis, x), truth)
    }
}

/// Single-round regret of a prediction against `pair` on context `x`:
/// `g(x) (loss(y_pred, y_true) - loss(h(x), y_true))`, in `[-1, 1]`.
pub fn instant_group_regret(
    instance: &ProblemInstance,
    pair: GroupHypothesisPair,
    x: Context,
    y_pred: ActionLabel,
    y_true: ActionLabel,
) -> Result<f64> {
    instance.context(x.0)?;
    let pred = instance.action_index(y_pred)?;
    let truth = instance.action_index(y_true)?;
    Ok(instance.instant_regret(pair, x.0, pred, truth))
}
