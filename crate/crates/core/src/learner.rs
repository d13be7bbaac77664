//! Online learners: a `(G, H)`-player composed with the H-player, plus the
//! common interface the run loop drives.

use std::sync::Arc;

use crate::error::Result;
use crate::hplayer::{act, build_game_matrix, realizable_actions, solve_game};
use crate::instance::ProblemInstance;
use crate::oracle::{Oracle, OracleCalls};
use crate::play::{EmpiricalPlay, HistoryTally, PairPlayer};
use crate::rng::{tags, SeedStream};

/// What the learner committed to at one round, on action indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub y_hat: usize,
    /// Probability of the first action (`+1` in binary mode).
    pub bernoulli_p: Option<f64>,
    pub lp_value: Option<f64>,
    pub play: Option<EmpiricalPlay>,
}

impl Decision {
    pub fn pure(y_hat: usize) -> Self {
        Self {
            y_hat,
            bernoulli_p: None,
            lp_value: None,
            play: None,
        }
    }
}

pub trait Learner: Send {
    /// Commit to a prediction at `x` for round `t`. `stream` is private to the round.
    fn decide(&mut self, x: usize, t: usize, stream: SeedStream) -> Result<Decision>;

    /// Reveal the round's outcome.
    fn observe(&mut self, x: usize, y_hat: usize, y: usize);

    /// Oracle calls one round costs.
    fn calls_per_round(&self) -> OracleCalls;
}

/// A `(G, H)`-player plus the H-player: the multi-group learner.
pub struct MultiGroupLearner<P: PairPlayer> {
    player: P,
    oracle: Arc<dyn Oracle>,
    instance: Arc<ProblemInstance>,
    history: HistoryTally,
}

impl<P: PairPlayer> MultiGroupLearner<P> {
    pub fn new(player: P, oracle: Arc<dyn Oracle>, instance: Arc<ProblemInstance>) -> Self {
        let history = HistoryTally::new(&instance);
        Self {
            player,
            oracle,
            instance,
            history,
        }
    }

    pub fn history(&self) -> &HistoryTally {
        &self.history
    }

    pub fn player(&self) -> &P {
        &self.player
    }
}

impl<P: PairPlayer> Learner for MultiGroupLearner<P> {
    fn decide(&mut self, x: usize, t: usize, stream: SeedStream) -> Result<Decision> {
        let inst = &*self.instance;
        let play = self
            .player
            .play(&self.history, t, stream.child(tags::PLAYER))?;
        let realizers = realizable_actions(&*self.oracle, inst, x)?;
        let strategy = solve_game(&build_game_matrix(inst, &play, x, &realizers))?;
        let action = act(
            &strategy,
            &realizers,
            inst,
            x,
            &mut stream.child(tags::ACTION).rng(),
        );
        Ok(Decision {
            y_hat: action.y_hat,
            bernoulli_p: inst.is_binary().then(|| strategy.probs[0]),
            lp_value: Some(strategy.value),
            play: Some(play),
        })
    }

    fn observe(&mut self, x: usize, y_hat: usize, y: usize) {
        self.history.record(x, y_hat, y);
    }

    fn calls_per_round(&self) -> OracleCalls {
        OracleCalls {
            gh: self.player.gh_calls_per_round(),
            h: self.instance.action_count() as u64,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ftpl::{FtplConfig, SmoothFtplPlayer};
    use crate::instance::AccessRole;
    use crate::oracle::ExactOracle;

    fn learner(m: usize) -> (MultiGroupLearner<SmoothFtplPlayer>, Arc<ExactOracle>) {
        let inst = Arc::new(ProblemInstance::thresholds_and_intervals(m).unwrap());
        let oracle = Arc::new(ExactOracle::new(inst.clone()));
        let cfg = FtplConfig::new(2.0, 16, 5).unwrap();
        let player = SmoothFtplPlayer::new(oracle.clone(), inst.clone(), cfg).unwrap();
        (MultiGroupLearner::new(player, oracle.clone(), inst), oracle)
    }

    #[test]
    fn one_round_costs_m_gh_calls_and_two_h_calls() {
        let (mut l, oracle) = learner(8);
        let before = oracle.calls();
        let d = l.decide(3, 1, SeedStream::new(1)).unwrap();
        assert_eq!(oracle.calls() - before, OracleCalls { gh: 5, h: 2 });
        assert_eq!(l.calls_per_round(), OracleCalls { gh: 5, h: 2 });
        assert_eq!(d.play.as_ref().unwrap().len(), 5);
        let p = d.bernoulli_p.unwrap();
        assert!((0.0..=1.0).contains(&p));
        assert!(d.lp_value.unwrap() <= 1e-9);
    }

    #[test]
    fn learner_never_reads_the_group_list() {
        let (mut l, oracle) = learner(8);
        for t in 1..=20 {
            let x = (t * 5) % 8;
            let d = l.decide(x, t, SeedStream::new(t as u64)).unwrap();
            l.observe(x, d.y_hat, t % 2);
        }
        let access = oracle.instance().group_access();
        assert_eq!(access.get(AccessRole::Learner), 0);
        assert!(access.get(AccessRole::Oracle) > 0);
    }

    #[test]
    fn decisions_are_reproducible() {
        let run = || {
            let (mut l, _) = learner(6);
            (1..=15)
                .map(|t| {
                    let x = (t * 7) % 6;
                    let d = l.decide(x, t, SeedStream::new(99).child(t as u64)).unwrap();
                    l.observe(x, d.y_hat, (t / 2) % 2);
                    (d.y_hat, d.bernoulli_p.unwrap().to_bits(), d.play.unwrap())
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn observe_feeds_the_history() {
        let (mut l, _) = learner(4);
        l.observe(2, 0, 1);
        l.observe(2, 0, 1);
        assert_eq!(l.history().rounds(), 2);
    }
}
