//! Reference learners: follow-the-leader over `H`, and an online wrapper that
//! retrains a batch multi-group learner on all past rounds.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{MgolError, Result};
use crate::instance::{ActionLabel, Context, ProblemInstance};
use crate::learner::{Decision, Learner};
use crate::oracle::{LabeledRecord, Oracle, OracleCalls};
use crate::rng::SeedStream;
use crate::trace::Trace;

/// Follow-the-leader: the label at `x` of an empirical risk minimizer on the
/// whole history. With no history the oracle sees no records and returns the
/// first hypothesis.
pub fn ftl_predict(
    oracle: &dyn Oracle,
    instance: &ProblemInstance,
    history: &Trace,
    x: Context,
) -> Result<ActionLabel> {
    let records = history
        .rounds()
        .iter()
        .map(|r| LabeledRecord {
            x: r.x,
            y: r.y,
            weight: 1.0,
        })
        .collect::<Vec<_>>();
    let h = oracle.opt_h(&records, instance.loss())?;
    Ok(instance.predict_label(h, instance.context(x.0)?))
}

/// FTL as an online learner. Past labels are kept as counts per `(x, y)`.
pub struct FtlLearner {
    oracle: Arc<dyn Oracle>,
    instance: Arc<ProblemInstance>,
    counts: Vec<u64>,
}

impl FtlLearner {
    pub fn new(oracle: Arc<dyn Oracle>, instance: Arc<ProblemInstance>) -> Self {
        let counts = vec![0; instance.m() * instance.action_count()];
        Self {
            oracle,
            instance,
            counts,
        }
    }
}

impl Learner for FtlLearner {
    fn decide(&mut self, x: usize, _t: usize, _stream: SeedStream) -> Result<Decision> {
        let k = self.instance.action_count();
        let records: Vec<LabeledRecord> = self
            .counts
            .iter()
            .enumerate()
            .filter(|(_, c)| **c > 0)
            .map(|(i, &c)| LabeledRecord {
                x: Context(i / k),
                y: self.instance.action_label(i % k),
                weight: c as f64,
            })
            .collect();
        let h = self.oracle.opt_h(&records, self.instance.loss())?;
        Ok(Decision::pure(self.instance.predict(h, x)))
    }

    fn observe(&mut self, x: usize, _y_hat: usize, y: usize) {
        self.counts[x * self.instance.action_count() + y] += 1;
    }

    fn calls_per_round(&self) -> OracleCalls {
        OracleCalls { gh: 0, h: 1 }
    }
}

/// A predictor defined on every context of the universe.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Predictor {
    labels: Vec<usize>,
}

impl Predictor {
    pub fn from_fn(instance: &ProblemInstance, f: impl Fn(usize) -> usize) -> Self {
        Self {
            labels: (0..instance.m()).map(f).collect(),
        }
    }

    /// Action index at `x`.
    pub fn predict(&self, x: usize) -> usize {
        self.labels[x]
    }
}

/// Declared guarantees of a batch learner; carried along, never enforced.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchContract {
    pub name: String,
    /// Claimed per-group excess risk, e.g. as a function of the group's mass.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excess_risk: Option<String>,
}

/// A batch multi-group learner: from a sample, a predictor over the universe.
pub trait BatchMultiGroupLearner: Send {
    fn fit(&mut self, samples: &[(Context, ActionLabel)]) -> Result<Predictor>;

    fn contract(&self) -> BatchContract;

    fn calls_per_fit(&self) -> OracleCalls;
}

/// Empirical risk minimization over `H` through the oracle.
pub struct ErmAdapter {
    oracle: Arc<dyn Oracle>,
    instance: Arc<ProblemInstance>,
}

impl ErmAdapter {
    pub fn new(oracle: Arc<dyn Oracle>, instance: Arc<ProblemInstance>) -> Self {
        Self { oracle, instance }
    }
}

impl BatchMultiGroupLearner for ErmAdapter {
    fn fit(&mut self, samples: &[(Context, ActionLabel)]) -> Result<Predictor> {
        let records: Vec<LabeledRecord> = samples
            .iter()
            .map(|&(x, y)| LabeledRecord { x, y, weight: 1.0 })
            .collect();
        let h = self.oracle.opt_h(&records, self.instance.loss())?;
        Ok(Predictor::from_fn(&self.instance, |x| {
            self.instance.predict(h, x)
        }))
    }

    fn contract(&self) -> BatchContract {
        BatchContract {
            name: "erm".into(),
            excess_risk: None,
        }
    }

    fn calls_per_fit(&self) -> OracleCalls {
        OracleCalls { gh: 0, h: 1 }
    }
}

/// Predicts one label everywhere.
pub struct ConstantLearner {
    instance: Arc<ProblemInstance>,
    label: ActionLabel,
}

impl ConstantLearner {
    pub fn new(instance: Arc<ProblemInstance>, label: ActionLabel) -> Result<Self> {
        instance.action_index(label)?;
        Ok(Self { instance, label })
    }
}

impl BatchMultiGroupLearner for ConstantLearner {
    fn fit(&mut self, _samples: &[(Context, ActionLabel)]) -> Result<Predictor> {
        let a = self.instance.action_index(self.label)?;
        Ok(Predictor::from_fn(&self.instance, |_| a))
    }

    fn contract(&self) -> BatchContract {
        BatchContract {
            name: format!("constant({})", self.label),
            excess_risk: None,
        }
    }

    fn calls_per_fit(&self) -> OracleCalls {
        OracleCalls::default()
    }
}

/// Retrain on `samples` (rounds before the current one) and predict at `x`.
pub fn online_batch_wrapper<B: BatchMultiGroupLearner + ?Sized>(
    learner: &mut B,
    samples: &[(Context, ActionLabel)],
    x: Context,
) -> Result<usize> {
    let predictor = learner.fit(samples)?;
    predictor
        .labels
        .get(x.0)
        .copied()
        .ok_or_else(|| MgolError::Learner(format!("predictor is undefined at context {}", x.0)))
}

/// The online outer loop: one fit per round on every earlier round.
pub struct OnlineBatchWrapper<B: BatchMultiGroupLearner> {
    inner: B,
    instance: Arc<ProblemInstance>,
    samples: Vec<(Context, ActionLabel)>,
    retrains: usize,
}

impl<B: BatchMultiGroupLearner> OnlineBatchWrapper<B> {
    pub fn new(inner: B, instance: Arc<ProblemInstance>) -> Self {
        Self {
            inner,
            instance,
            samples: Vec::new(),
            retrains: 0,
        }
    }

    pub fn retrain_count(&self) -> usize {
        self.retrains
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: BatchMultiGroupLearner> Learner for OnlineBatchWrapper<B> {
    fn decide(&mut self, x: usize, _t: usize, _stream: SeedStream) -> Result<Decision> {
        self.retrains += 1;
        let y_hat = online_batch_wrapper(&mut self.inner, &self.samples, Context(x))?;
        Ok(Decision::pure(y_hat))
    }

    fn observe(&mut self, x: usize, _y_hat: usize, y: usize) {
        self.samples
            .push((Context(x), self.instance.action_label(y)));
    }

    fn calls_per_round(&self) -> OracleCalls {
        self.inner.calls_per_fit()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::ExactOracle;
    use crate::trace::RoundRecord;

    fn setup(m: usize) -> (Arc<ProblemInstance>, Arc<ExactOracle>) {
        let inst = Arc::new(ProblemInstance::thresholds_and_intervals(m).unwrap());
        let oracle = Arc::new(ExactOracle::new(inst.clone()));
        (inst, oracle)
    }

    fn trace(rounds: &[(usize, i32)]) -> Trace {
        let mut t = Trace::new();
        for (i, &(x, y)) in rounds.iter().enumerate() {
            t.push(RoundRecord::new(
                i + 1,
                Context(x),
                ActionLabel(1),
                ActionLabel(y),
            ))
            .unwrap();
        }
        t
    }

    #[test]
    fn ftl_on_empty_history_uses_first_hypothesis() {
        let (inst, oracle) = setup(4);
        for x in 0..4 {
            let y = ftl_predict(&*oracle, &inst, &Trace::new(), Context(x)).unwrap();
            assert_eq!(y, inst.predict_label(0, Context(x)));
        }
    }

    #[test]
    fn ftl_follows_a_perfectly_fitting_hypothesis() {
        let (inst, oracle) = setup(6);
        // labels of threshold 3 with polarity -1: +1 below 3, -1 from 3 on
        let t = trace(&[(0, 1), (1, 1), (2, 1), (3, -1), (4, -1), (5, -1)]);
        for x in 0..6 {
            let y = ftl_predict(&*oracle, &inst, &t, Context(x)).unwrap();
            assert_eq!(y, ActionLabel(if x >= 3 { -1 } else { 1 }));
        }
    }

    #[test]
    fn ftl_breaks_ties_toward_lower_index() {
        let (inst, oracle) = setup(4);
        // polarity +1 with theta 0, 1 or 3 each make one mistake
        let t = trace(&[(1, 1), (2, -1), (3, 1), (3, 1)]);
        let brute = (0..inst.hypothesis_count())
            .min_by(|&a, &b| {
                let loss = |h: usize| {
                    t.rounds()
                        .iter()
                        .filter(|r| inst.predict_label(h, r.x) != r.y)
                        .count()
                };
                loss(a).cmp(&loss(b)).then(a.cmp(&b))
            })
            .unwrap();
        for x in 0..4 {
            assert_eq!(
                ftl_predict(&*oracle, &inst, &t, Context(x)).unwrap(),
                inst.predict_label(brute, Context(x))
            );
        }
    }

    #[test]
    fn constant_stub_always_predicts_its_label() {
        let (inst, _) = setup(5);
        let stub = ConstantLearner::new(inst.clone(), ActionLabel(1)).unwrap();
        let mut w = OnlineBatchWrapper::new(stub, inst.clone());
        for t in 1..=20 {
            let x = t % 5;
            let d = w.decide(x, t, SeedStream::new(0)).unwrap();
            assert_eq!(inst.action_label(d.y_hat), ActionLabel(1));
            w.observe(x, d.y_hat, 1);
        }
        assert_eq!(w.retrain_count(), 20);
        assert!(ConstantLearner::new(inst, ActionLabel(0)).is_err());
    }

    #[test]
    fn erm_wrapper_matches_ftl() {
        let (inst, oracle) = setup(8);
        let mut ftl = FtlLearner::new(oracle.clone(), inst.clone());
        let mut wrap =
            OnlineBatchWrapper::new(ErmAdapter::new(oracle.clone(), inst.clone()), inst.clone());
        for t in 1..=200usize {
            let x = (t * 37 + t / 3) % 8;
            let y = if (t * 13) % 7 < 3 { 0 } else { 1 };
            let a = ftl.decide(x, t, SeedStream::new(0)).unwrap();
            let b = wrap.decide(x, t, SeedStream::new(0)).unwrap();
            assert_eq!(a, b, "round {t}");
            ftl.observe(x, a.y_hat, y);
            wrap.observe(x, b.y_hat, y);
        }
        assert_eq!(wrap.retrain_count(), 200);
        assert_eq!(ftl.calls_per_round(), wrap.calls_per_round());
    }
}
