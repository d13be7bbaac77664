//! Follow-the-perturbed-leader over `G x H` for smoothed contexts.
//!
//! Each oracle call draws `n` hallucinated contexts from the uniform base
//! measure with standard Gaussian weights. The perturbation of a pair is
//! `sum_j eta * gamma_j * g(z_j) * h(z_j) / sqrt(n)`, handed to the oracle as
//! correlation records next to the unweighted history.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{MgolError, Result};
use crate::instance::{Context, GroupHypothesisPair, ProblemInstance};
use crate::oracle::{CorrelationRecord, Oracle, OracleAnswer, OracleQuery};
use crate::play::{EmpiricalPlay, HistoryTally, PairPlayer};
use crate::rng::SeedStream;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hallucination {
    pub z: Context,
    pub gamma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FtplConfig {
    /// Perturbation strength.
    pub eta: f64,
    /// Hallucinated examples per oracle call.
    pub n: usize,
    /// Oracle calls per round.
    #[serde(rename = "M")]
    pub m_calls: usize,
}

impl FtplConfig {
    pub fn new(eta: f64, n: usize, m_calls: usize) -> Result<Self> {
        let cfg = Self { eta, n, m_calls };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(MgolError::InvalidConfig(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if self.n == 0 || self.m_calls == 0 {
            return Err(MgolError::InvalidConfig(
                "n and M must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// `n` independent `(z, gamma)` draws: `z` uniform over the universe, `gamma ~ N(0, 1)`.
pub fn draw_hallucinations<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Vec<Hallucination> {
    (0..n)
        .map(|_| Hallucination {
            z: Context(rng.random_range(0..m)),
            gamma: rng.sample(StandardNormal),
        })
        .collect()
}

pub fn perturbation_value(
    instance: &ProblemInstance,
    pair: GroupHypothesisPair,
    hs: &[Hallucination],
    eta: f64,
) -> f64 {
    let scale = eta / (hs.len() as f64).sqrt();
    hs.iter()
        .filter(|h| instance.in_group(pair.group, h.z.0))
        .map(|h| scale * h.gamma * instance.action_value(instance.predict(pair.hypothesis, h.z.0)))
        .sum()
}

/// History records (weight = count) plus one correlation record per hallucination.
pub fn ftpl_query(
    instance: &ProblemInstance,
    history: &HistoryTally,
    hs: &[Hallucination],
    eta: f64,
    alpha: f64,
) -> OracleQuery {
    let scale = eta / (hs.len() as f64).sqrt();
    OracleQuery {
        regret_records: history.regret_records(instance),
        correlation_records: hs
            .iter()
            .map(|h| CorrelationRecord {
                z: h.z,
                weight: scale * h.gamma,
            })
            .collect(),
        alpha,
    }
}

/// One perturbed-leader draw.
pub fn ftpl_sample<R: Rng + ?Sized>(
    oracle: &dyn Oracle,
    instance: &ProblemInstance,
    history: &HistoryTally,
    cfg: &FtplConfig,
    rng: &mut R,
) -> Result<OracleAnswer> {
    let hs = draw_hallucinations(cfg.n, instance.m(), rng);
    oracle.opt_gh(&ftpl_query(instance, history, &hs, cfg.eta, oracle.alpha()))
}

/// `M` independent draws; call `i` uses the stream `stream.child(i)`.
pub fn empirical_play(
    oracle: &dyn Oracle,
    instance: &ProblemInstance,
    history: &HistoryTally,
    cfg: &FtplConfig,
    stream: SeedStream,
) -> Result<EmpiricalPlay> {
    let pairs = (0..cfg.m_calls)
        .map(|i| {
            let mut rng = stream.child(i as u64).rng();
            ftpl_sample(oracle, instance, history, cfg, &mut rng).map(|a| a.pair)
        })
        .collect::<Result<Vec<_>>>()?;
    EmpiricalPlay::new(pairs)
}

/// The smoothed-setting `(G, H)`-player.
pub struct SmoothFtplPlayer {
    oracle: Arc<dyn Oracle>,
    instance: Arc<ProblemInstance>,
    cfg: FtplConfig,
}

impl SmoothFtplPlayer {
    pub fn new(
        oracle: Arc<dyn Oracle>,
        instance: Arc<ProblemInstance>,
        cfg: FtplConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            oracle,
            instance,
            cfg,
        })
    }

    pub fn config(&self) -> &FtplConfig {
        &self.cfg
    }
}

impl PairPlayer for SmoothFtplPlayer {
    fn play(
        &mut self,
        history: &HistoryTally,
        _t: usize,
        stream: SeedStream,
    ) -> Result<EmpiricalPlay> {
        empirical_play(&*self.oracle, &self.instance, history, &self.cfg, stream)
    }

    fn gh_calls_per_round(&self) -> u64 {
        self.cfg.m_calls as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{ActionLabel, Group, Hypothesis};
    use crate::oracle::{brute_force_opt_gh, ExactOracle};
    use std::collections::HashMap;

    fn setup(m: usize) -> (Arc<ProblemInstance>, ExactOracle) {
        let inst = Arc::new(ProblemInstance::thresholds_and_intervals(m).unwrap());
        let oracle = ExactOracle::new(inst.clone());
        (inst, oracle)
    }

    #[test]
    fn hallucination_draws() {
        let s = SeedStream::new(1);
        let a = draw_hallucinations(3, 8, &mut s.rng());
        assert_eq!(a.len(), 3);
        assert_eq!(a, draw_hallucinations(3, 8, &mut s.rng()));
        assert!(a.iter().all(|h| h.z.0 < 8));

        let draws = draw_hallucinations(100_000, 4, &mut SeedStream::new(2).rng());
        let mean = draws.iter().map(|h| h.gamma).sum::<f64>() / draws.len() as f64;
        assert!(mean.abs() < 0.02, "gaussian mean {mean}");
    }

    #[test]
    fn perturbation_value_examples() {
        let (inst, _) = setup(4);
        let g = inst
            .description()
            .groups
            .iter()
            .position(|g| *g == Group::interval(0, 2))
            .unwrap();
        let h = inst
            .hypotheses()
            .iter()
            .position(|h| *h == Hypothesis::threshold(2, 1))
            .unwrap();
        let pair = GroupHypothesisPair::new(g, h);
        // g(z) h(z) = (1, 1, 0, -1) for z = (2, 2, 3, 0)
        let hs: Vec<_> = [(2, 1.0), (2, -1.0), (3, 1.0), (0, 1.0)]
            .into_iter()
            .map(|(z, gamma)| Hallucination {
                z: Context(z),
                gamma,
            })
            .collect();
        assert_eq!(perturbation_value(&inst, pair, &hs, 2.0), -1.0);
        let negated: Vec<_> = hs
            .iter()
            .map(|h| Hallucination {
                gamma: -h.gamma,
                ..*h
            })
            .collect();
        assert_eq!(perturbation_value(&inst, pair, &negated, 2.0), 1.0);
        assert_eq!(perturbation_value(&inst, pair, &hs, 4.0), -2.0);

        let outside = GroupHypothesisPair::new(g, h);
        let far: Vec<_> = [3, 3]
            .map(|z| Hallucination {
                z: Context(z),
                gamma: 1.3,
            })
            .into();
        assert_eq!(perturbation_value(&inst, outside, &far, 2.0), 0.0);
    }

    #[test]
    fn sample_on_empty_history_with_vanishing_eta() {
        let (inst, oracle) = setup(4);
        let cfg = FtplConfig::new(1e-14, 8, 1).unwrap();
        let a = ftpl_sample(
            &oracle,
            &inst,
            &HistoryTally::new(&inst),
            &cfg,
            &mut SeedStream::new(3).rng(),
        )
        .unwrap();
        assert_eq!(a.pair, GroupHypothesisPair::new(0, 0));
    }

    #[test]
    fn sample_matches_brute_force_on_the_same_query() {
        let (inst, oracle) = setup(5);
        let mut tally = HistoryTally::new(&inst);
        tally.record(1, 0, 1);
        tally.record(3, 1, 0);
        for seed in 0..20 {
            let hs = draw_hallucinations(6, 5, &mut SeedStream::new(seed).rng());
            let q = ftpl_query(&inst, &tally, &hs, 1.5, 0.0);
            let a = oracle.opt_gh(&q).unwrap();
            let (pair, value) = brute_force_opt_gh(&inst, &q).unwrap();
            assert_eq!(a.pair, pair);
            assert!((a.objective - value).abs() < 1e-12);
            // the achieved objective is history regret plus the perturbation
            let hist: f64 = [(1, 0, 1), (3, 1, 0)]
                .iter()
                .map(|&(x, p, y)| inst.instant_regret(a.pair, x, p, y))
                .sum();
            let total = hist + perturbation_value(&inst, a.pair, &hs, 1.5);
            assert!((total - a.objective).abs() < 1e-12);
        }
    }

    #[test]
    fn two_round_hand_trace_without_noise() {
        let (inst, oracle) = setup(4);
        // round 1: x=1, learner +1, truth -1; round 2: x=2, learner -1, truth +1
        let rounds = [
            (1usize, ActionLabel(1), ActionLabel(-1)),
            (2, ActionLabel(-1), ActionLabel(1)),
        ];
        let mut tally = HistoryTally::new(&inst);
        for (x, p, y) in rounds {
            tally.record(
                x,
                inst.action_index(p).unwrap(),
                inst.action_index(y).unwrap(),
            );
        }
        // cumulative l~ table by direct enumeration of G x H
        let mut best = (f64::NEG_INFINITY, GroupHypothesisPair::new(0, 0));
        for g in 0..inst.group_count() {
            for h in 0..inst.hypothesis_count() {
                let mut v = 0.0;
                for (x, p, y) in rounds {
                    if inst.group(g).contains(Context(x)) {
                        let hx = inst.hypothesis(h).eval(Context(x)).unwrap();
                        let l = |a: ActionLabel| if a == y { 0.0 } else { 1.0 };
                        v += l(p) - l(hx);
                    }
                }
                if v > best.0 {
                    best = (v, GroupHypothesisPair::new(g, h));
                }
            }
        }
        assert_eq!(best.0, 2.0);
        let cfg = FtplConfig::new(1e-14, 4, 1).unwrap();
        let a = ftpl_sample(&oracle, &inst, &tally, &cfg, &mut SeedStream::new(9).rng()).unwrap();
        assert_eq!(a.pair, best.1);
    }

    #[test]
    fn empirical_play_shapes() {
        let (inst, oracle) = setup(4);
        let tally = HistoryTally::new(&inst);
        let one = empirical_play(
            &oracle,
            &inst,
            &tally,
            &FtplConfig::new(1.0, 4, 1).unwrap(),
            SeedStream::new(0),
        )
        .unwrap();
        assert_eq!(one.len(), 1);

        let mut tally = HistoryTally::new(&inst);
        tally.record(2, 0, 1);
        let still = FtplConfig::new(1e-14, 4, 7).unwrap();
        let play = empirical_play(&oracle, &inst, &tally, &still, SeedStream::new(5)).unwrap();
        assert_eq!(play.len(), 7);
        assert!(play.pairs().iter().all(|p| *p == play.pairs()[0]));
    }

    #[test]
    fn empirical_frequencies_stabilize() {
        let (inst, oracle) = setup(4);
        let mut tally = HistoryTally::new(&inst);
        tally.record(1, 0, 1);
        let cfg = FtplConfig::new(1.0, 8, 10_000).unwrap();
        let freq = |seed| {
            let play = empirical_play(&oracle, &inst, &tally, &cfg, SeedStream::new(seed)).unwrap();
            let mut f: HashMap<GroupHypothesisPair, f64> = HashMap::new();
            for p in play.pairs() {
                *f.entry(*p).or_default() += 1.0 / cfg.m_calls as f64;
            }
            f
        };
        let (a, b) = (freq(11), freq(12));
        for key in a.keys().chain(b.keys()) {
            let (fa, fb) = (
                a.get(key).copied().unwrap_or(0.0),
                b.get(key).copied().unwrap_or(0.0),
            );
            assert!((fa - fb).abs() <= 0.05, "{key:?}: {fa} vs {fb}");
        }
    }

    #[test]
    fn config_validation() {
        assert!(FtplConfig::new(0.0, 1, 1).is_err());
        assert!(FtplConfig::new(1.0, 0, 1).is_err());
        assert!(FtplConfig::new(1.0, 1, 0).is_err());
    }
}
