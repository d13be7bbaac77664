//! Nature: context distributions, smoothed and transductive adversaries, and
//! label policies.

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Bernoulli, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{MgolError, Result};
use crate::instance::{ActionLabel, Context, Group, Hypothesis, ProblemInstance};
use crate::trace::Trace;

const SUM_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContextDistribution {
    probs: Vec<f64>,
}

impl ContextDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(MgolError::InvalidConfig(
                "context distribution is empty".into(),
            ));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(MgolError::InvalidConfig(
                "context probabilities must be nonnegative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(MgolError::InvalidConfig(format!(
                "context probabilities sum to {total}"
            )));
        }
        Ok(Self { probs })
    }

    pub fn uniform(m: usize) -> Self {
        Self {
            probs: vec![1.0 / m as f64; m],
        }
    }

    pub fn point_mass(m: usize, x: usize) -> Self {
        let mut probs = vec![0.0; m];
        probs[x] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn m(&self) -> usize {
        self.probs.len()
    }
}

pub fn sample_context<R: Rng + ?Sized>(dist: &ContextDistribution, rng: &mut R) -> Context {
    let index = WeightedIndex::new(&dist.probs).expect("validated distribution");
    Context(index.sample(rng))
}

/// Whether the density against the uniform base measure stays below `1 / sigma`.
pub fn validate_smoothness(dist: &ContextDistribution, sigma: f64) -> bool {
    let m = dist.m() as f64;
    dist.probs
        .iter()
        .all(|p| p * m <= 1.0 / sigma + SUM_TOLERANCE)
}

/// Scale `weights` and clip at `cap` so the result sums to 1: the largest
/// weights saturate at the cap and the rest share the remainder in proportion.
fn water_fill(weights: &[f64], cap: f64) -> Vec<f64> {
    let m = weights.len();
    let mut capped = vec![false; m];
    loop {
        let free: f64 = (0..m).filter(|&i| !capped[i]).map(|i| weights[i]).sum();
        let n_capped = capped.iter().filter(|c| **c).count();
        let remaining = 1.0 - cap * n_capped as f64;
        if free <= 0.0 || remaining <= 0.0 {
            // everything left has zero weight or no mass is left: spread evenly
            let rest = m - n_capped;
            return (0..m)
                .map(|i| {
                    if capped[i] {
                        cap
                    } else if rest > 0 {
                        remaining.max(0.0) / rest as f64
                    } else {
                        0.0
                    }
                })
                .collect();
        }
        let scale = remaining / free;
        let mut changed = false;
        for i in 0..m {
            if !capped[i] && weights[i] * scale > cap {
                capped[i] = true;
                changed = true;
            }
        }
        if !changed {
            return (0..m)
                .map(|i| if capped[i] { cap } else { weights[i] * scale })
                .collect();
        }
    }
}

/// How strongly the smoothed adversary tilts toward contexts where the learner
/// has been doing badly.
pub const DEFAULT_TILT: f64 = 0.5;
pub const DEFAULT_WINDOW: usize = 200;

/// A `sigma`-smooth distribution tilted toward the contexts where the learner
/// lost the most, over the last `window` rounds, relative to the best fixed
/// label at that context. The weight of `x` is `exp(tilt * regret(x))`; the
/// result is clipped at density `1 / sigma` and renormalized.
pub fn adaptive_smooth_adversary(
    instance: &ProblemInstance,
    history: &Trace,
    sigma: f64,
    window: usize,
    tilt: f64,
) -> Result<ContextDistribution> {
    if !(sigma > 0.0 && sigma <= 1.0) {
        return Err(MgolError::InvalidConfig(format!(
            "sigma must lie in (0, 1], got {sigma}"
        )));
    }
    let m = instance.m();
    let rounds = history.rounds();
    if sigma == 1.0 || rounds.is_empty() {
        return Ok(ContextDistribution::uniform(m));
    }
    let k = instance.action_count();
    let loss = instance.loss();
    let mut learner = vec![0.0; m];
    let mut by_label = vec![vec![0.0; k]; m];
    for r in &rounds[rounds.len().saturating_sub(window)..] {
        let x = instance.context(r.x.0)?.0;
        let truth = instance.action_index(r.y)?;
        learner[x] += loss.get(instance.action_index(r.y_hat)?, truth);
        for (a, total) in by_label[x].iter_mut().enumerate() {
            *total += loss.get(a, truth);
        }
    }
    let weights: Vec<f64> = (0..m)
        .map(|x| {
            let best = by_label[x].iter().copied().fold(f64::INFINITY, f64::min);
            (tilt * (learner[x] - best)).exp()
        })
        .collect();
    let probs = water_fill(&weights, 1.0 / (sigma * m as f64));
    Ok(ContextDistribution { probs })
}

/// Contexts revealed before the first round, with optional sampling weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransductiveSet {
    pub contexts: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl TransductiveSet {
    pub fn validate(&self, m: usize) -> Result<()> {
        if self.contexts.is_empty() {
            return Err(MgolError::InvalidConfig(
                "the transductive set is empty".into(),
            ));
        }
        let mut seen = vec![false; m];
        for &x in &self.contexts {
            if x >= m {
                return Err(MgolError::ContextOutOfRange { index: x, m });
            }
            if std::mem::replace(&mut seen[x], true) {
                return Err(MgolError::InvalidConfig(format!(
                    "context {x} listed twice in the transductive set"
                )));
            }
        }
        if let Some(w) = &self.weights {
            if w.len() != self.contexts.len() || w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(MgolError::InvalidConfig(
                    "transductive weights must be nonnegative, one per context".into(),
                ));
            }
            if w.iter().sum::<f64>() <= 0.0 {
                return Err(MgolError::InvalidConfig(
                    "transductive weights are all zero".into(),
                ));
            }
        }
        Ok(())
    }

    /// Distribution over the universe supported on the set.
    pub fn distribution(&self, m: usize) -> Result<ContextDistribution> {
        self.validate(m)?;
        let n = self.contexts.len();
        let w = self.weights.clone().unwrap_or_else(|| vec![1.0; n]);
        let total: f64 = w.iter().sum();
        let mut probs = vec![0.0; m];
        for (&x, v) in self.contexts.iter().zip(&w) {
            probs[x] = v / total;
        }
        ContextDistribution::new(probs)
    }

    pub fn contains(&self, x: usize) -> bool {
        self.contexts.contains(&x)
    }
}

/// How contexts are chosen each round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ContextAdversary {
    Uniform,
    Fixed {
        probs: ContextDistribution,
    },
    SmoothAdaptive {
        sigma: f64,
        #[serde(default = "default_window")]
        window: usize,
        #[serde(default = "default_tilt")]
        tilt: f64,
    },
    Transductive {
        set: TransductiveSet,
    },
}

fn default_window() -> usize {
    DEFAULT_WINDOW
}

fn default_tilt() -> f64 {
    DEFAULT_TILT
}

impl ContextAdversary {
    pub fn validate(&self, m: usize) -> Result<()> {
        match self {
            Self::Uniform => Ok(()),
            Self::Fixed { probs } => {
                ContextDistribution::new(probs.probs.clone())?;
                if probs.m() != m {
                    return Err(MgolError::InvalidConfig(format!(
                        "context distribution has {} entries for a universe of {m}",
                        probs.m()
                    )));
                }
                Ok(())
            }
            Self::SmoothAdaptive {
                sigma,
                window,
                tilt,
            } => {
                if !(*sigma > 0.0 && *sigma <= 1.0) {
                    return Err(MgolError::InvalidConfig(format!(
                        "sigma must lie in (0, 1], got {sigma}"
                    )));
                }
                if *window == 0 || !tilt.is_finite() || *tilt < 0.0 {
                    return Err(MgolError::InvalidConfig(
                        "window must be positive and tilt nonnegative".into(),
                    ));
                }
                Ok(())
            }
            Self::Transductive { set } => set.validate(m),
        }
    }

    /// The smoothness level the adversary promises, if any.
    pub fn sigma(&self) -> Option<f64> {
        match self {
            Self::Uniform => Some(1.0),
            Self::SmoothAdaptive { sigma, .. } => Some(*sigma),
            _ => None,
        }
    }

    pub fn transductive_set(&self) -> Option<&TransductiveSet> {
        match self {
            Self::Transductive { set } => Some(set),
            _ => None,
        }
    }

    pub fn distribution(
        &self,
        instance: &ProblemInstance,
        history: &Trace,
    ) -> Result<ContextDistribution> {
        let m = instance.m();
        match self {
            Self::Uniform => Ok(ContextDistribution::uniform(m)),
            Self::Fixed { probs } => Ok(probs.clone()),
            Self::SmoothAdaptive {
                sigma,
                window,
                tilt,
            } => adaptive_smooth_adversary(instance, history, *sigma, *window, *tilt),
            Self::Transductive { set } => set.distribution(m),
        }
    }
}

/// How the label of each round is chosen. Only the post-hoc policy looks at
/// the learner's prediction for the round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LabelPolicy {
    FixedConcept {
        concept: Hypothesis,
        #[serde(default)]
        noise: f64,
    },
    GroupDependentConcept {
        /// Target outside every region.
        default: Hypothesis,
        /// The first region containing `x` decides the target.
        regions: Vec<ConceptRegion>,
        #[serde(default)]
        noise: f64,
    },
    /// Plays against the learner's most frequent recent prediction at `x`.
    HistoryAdaptiveWorstCase {
        #[serde(default = "default_window")]
        window: usize,
    },
    /// Picks the label the learner's actual prediction loses most on. Breaks
    /// the protocol order; for stress tests only.
    PostHocWorstCase,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptRegion {
    pub group: Group,
    pub concept: Hypothesis,
}

impl LabelPolicy {
    pub fn validate(&self, instance: &ProblemInstance) -> Result<()> {
        let check_noise = |noise: f64| {
            if (0.0..0.5).contains(&noise) {
                Ok(())
            } else {
                Err(MgolError::InvalidConfig(format!(
                    "noise rate must lie in [0, 1/2), got {noise}"
                )))
            }
        };
        let check_concept = |h: &Hypothesis| -> Result<()> {
            for x in 0..instance.m() {
                instance.action_index(h.eval(Context(x))?)?;
            }
            Ok(())
        };
        match self {
            Self::FixedConcept { concept, noise } => {
                check_noise(*noise)?;
                check_concept(concept)
            }
            Self::GroupDependentConcept {
                default,
                regions,
                noise,
            } => {
                check_noise(*noise)?;
                check_concept(default)?;
                regions.iter().try_for_each(|r| check_concept(&r.concept))
            }
            Self::HistoryAdaptiveWorstCase { window } => {
                if *window == 0 {
                    return Err(MgolError::InvalidConfig("window must be positive".into()));
                }
                Ok(())
            }
            Self::PostHocWorstCase => Ok(()),
        }
    }

    pub fn sees_prediction(&self) -> bool {
        matches!(self, Self::PostHocWorstCase)
    }
}

fn with_noise<R: Rng + ?Sized>(
    instance: &ProblemInstance,
    label: ActionLabel,
    noise: f64,
    rng: &mut R,
) -> Result<ActionLabel> {
    if noise == 0.0 {
        return Ok(label);
    }
    let flip = Bernoulli::new(noise)
        .map_err(|e| MgolError::InvalidConfig(e.to_string()))?
        .sample(rng);
    if !flip {
        return Ok(label);
    }
    let k = instance.action_count();
    let own = instance.action_index(label)?;
    // any other label, uniformly
    let other = (own + rng.random_range(1..k)) % k;
    Ok(instance.action_label(other))
}

/// The label for round `t`, chosen from the past rounds and `x` only.
pub fn choose_label<R: Rng + ?Sized>(
    policy: &LabelPolicy,
    instance: &ProblemInstance,
    history: &Trace,
    x: Context,
    rng: &mut R,
) -> Result<ActionLabel> {
    match policy {
        LabelPolicy::FixedConcept { concept, noise } => {
            with_noise(instance, concept.eval(x)?, *noise, rng)
        }
        LabelPolicy::GroupDependentConcept {
            default,
            regions,
            noise,
        } => {
            let concept = regions
                .iter()
                .find(|r| r.group.contains(x))
                .map_or(default, |r| &r.concept);
            with_noise(instance, concept.eval(x)?, *noise, rng)
        }
        LabelPolicy::HistoryAdaptiveWorstCase { window } => {
            let k = instance.action_count();
            let loss = instance.loss();
            let rounds = history.rounds();
            let mut freq = vec![0.0; k];
            for r in &rounds[rounds.len().saturating_sub(*window)..] {
                if r.x == x {
                    freq[instance.action_index(r.y_hat)?] += 1.0;
                }
            }
            // expected loss of the recent prediction mix against each label
            let scores: Vec<f64> = (0..k)
                .map(|y| (0..k).map(|p| freq[p] * loss.get(p, y)).sum())
                .collect();
            let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let ties: Vec<usize> = (0..k).filter(|&y| scores[y] == best).collect();
            Ok(instance.action_label(ties[rng.random_range(0..ties.len())]))
        }
        LabelPolicy::PostHocWorstCase => Err(MgolError::Unsupported(
            "the post-hoc policy needs the round's prediction; use choose_label_post_hoc".into(),
        )),
    }
}

/// The label after seeing the learner's prediction. Only the post-hoc policy
/// uses `y_hat`; the others ignore it.
pub fn choose_label_post_hoc<R: Rng + ?Sized>(
    policy: &LabelPolicy,
    instance: &ProblemInstance,
    history: &Trace,
    x: Context,
    y_hat: ActionLabel,
    rng: &mut R,
) -> Result<ActionLabel> {
    match policy {
        LabelPolicy::PostHocWorstCase => {
            let k = instance.action_count();
            let pred = instance.action_index(y_hat)?;
            let loss = instance.loss();
            let best = (0..k)
                .map(|y| loss.get(pred, y))
                .fold(f64::NEG_INFINITY, f64::max);
            let ties: Vec<usize> = (0..k).filter(|&y| loss.get(pred, y) == best).collect();
            Ok(instance.action_label(ties[rng.random_range(0..ties.len())]))
        }
        _ => choose_label(policy, instance, history, x, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;
    use crate::trace::RoundRecord;
    use proptest::prelude::*;

    #[test]
    fn point_mass_always_sampled() {
        let d = ContextDistribution::point_mass(6, 3);
        let mut rng = SeedStream::new(1).rng();
        assert!((0..1000).all(|_| sample_context(&d, &mut rng) == Context(3)));
    }

    #[test]
    fn uniform_frequencies() {
        let d = ContextDistribution::uniform(4);
        let mut rng = SeedStream::new(2).rng();
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[sample_context(&d, &mut rng).0] += 1;
        }
        for c in counts {
            let f = c as f64 / n as f64;
            assert!(f > 0.24 && f < 0.26, "{f}");
        }
    }

    #[test]
    fn smoothness_examples() {
        assert!(validate_smoothness(&ContextDistribution::uniform(4), 1.0));
        for s in [0.1, 0.5, 0.9] {
            assert!(validate_smoothness(&ContextDistribution::uniform(9), s));
        }
        assert!(!validate_smoothness(
            &ContextDistribution::point_mass(4, 0),
            0.5
        ));
        let half = ContextDistribution::new(vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        assert!(validate_smoothness(&half, 0.5));
        assert!(!validate_smoothness(&half, 0.51));
    }

    #[test]
    fn malformed_distributions_rejected() {
        assert!(ContextDistribution::new(vec![]).is_err());
        assert!(ContextDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(ContextDistribution::new(vec![1.5, -0.5]).is_err());
    }

    fn mistakes_at(x: usize, n: usize) -> Trace {
        let mut t = Trace::new();
        for i in 1..=n {
            t.push(RoundRecord::new(
                i,
                Context(x),
                ActionLabel(1),
                ActionLabel(-1),
            ))
            .unwrap();
        }
        t
    }

    #[test]
    fn adaptive_adversary_fallbacks() {
        let inst = ProblemInstance::thresholds_and_intervals(8).unwrap();
        let busy = mistakes_at(2, 30);
        assert_eq!(
            adaptive_smooth_adversary(&inst, &busy, 1.0, 50, 1.0).unwrap(),
            ContextDistribution::uniform(8)
        );
        assert_eq!(
            adaptive_smooth_adversary(&inst, &Trace::new(), 0.5, 50, 1.0).unwrap(),
            ContextDistribution::uniform(8)
        );
    }

    #[test]
    fn adaptive_adversary_tilts_to_the_cap() {
        let inst = ProblemInstance::thresholds_and_intervals(8).unwrap();
        let d = adaptive_smooth_adversary(&inst, &mistakes_at(2, 30), 0.25, 50, 1.0).unwrap();
        assert!(validate_smoothness(&d, 0.25));
        // the cap is 1 / (sigma m) = 0.5
        assert!((d.probs()[2] - 0.5).abs() < 1e-15);
        assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn water_fill_by_hand() {
        // cap 0.4: the big weight saturates, the others split 0.6 as 1:2
        let p = water_fill(&[10.0, 1.0, 2.0], 0.4);
        assert_eq!(p[0], 0.4);
        assert!((p[1] - 0.2).abs() < 1e-15 && (p[2] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn noiseless_concept() {
        let inst = ProblemInstance::thresholds_and_intervals(8).unwrap();
        let h = Hypothesis::threshold(3, 1);
        let p = LabelPolicy::FixedConcept {
            concept: h.clone(),
            noise: 0.0,
        };
        let mut rng = SeedStream::new(0).rng();
        for x in 0..8 {
            assert_eq!(
                choose_label(&p, &inst, &Trace::new(), Context(x), &mut rng).unwrap(),
                h.eval(Context(x)).unwrap()
            );
        }
    }

    #[test]
    fn noise_flip_frequency() {
        let inst = ProblemInstance::thresholds_and_intervals(8).unwrap();
        let h = Hypothesis::threshold(3, 1);
        let p = LabelPolicy::FixedConcept {
            concept: h.clone(),
            noise: 0.3,
        };
        let mut rng = SeedStream::new(4).rng();
        let n = 100_000;
        let truth = h.eval(Context(5)).unwrap();
        let flips = (0..n)
            .filter(|_| {
                choose_label(&p, &inst, &Trace::new(), Context(5), &mut rng).unwrap() != truth
            })
            .count();
        let f = flips as f64 / n as f64;
        assert!(f > 0.29 && f < 0.31, "{f}");
    }

    #[test]
    fn group_dependent_concept() {
        let inst = ProblemInstance::thresholds_and_intervals(8).unwrap();
        let h_a = Hypothesis::threshold(0, -1);
        let h_b = Hypothesis::threshold(0, 1);
        let p = LabelPolicy::GroupDependentConcept {
            default: h_b.clone(),
            regions: vec![ConceptRegion {
                group: Group::interval(2, 4),
                concept: h_a.clone(),
            }],
            noise: 0.0,
        };
        let mut rng = SeedStream::new(0).rng();
        assert_eq!(
            choose_label(&p, &inst, &Trace::new(), Context(3), &mut rng).unwrap(),
            ActionLabel(-1)
        );
        assert_eq!(
            choose_label(&p, &inst, &Trace::new(), Context(6), &mut rng).unwrap(),
            ActionLabel(1)
        );
    }

    #[test]
    fn adaptive_label_opposes_recent_predictions() {
        let inst = ProblemInstance::thresholds_and_intervals(8).unwrap();
        let p = LabelPolicy::HistoryAdaptiveWorstCase { window: 10 };
        let mut rng = SeedStream::new(0).rng();
        // the learner said +1 at context 2 every time
        let y = choose_label(&p, &inst, &mistakes_at(2, 5), Context(2), &mut rng).unwrap();
        assert_eq!(y, ActionLabel(-1));
        assert!(choose_label(
            &LabelPolicy::PostHocWorstCase,
            &inst,
            &Trace::new(),
            Context(2),
            &mut rng
        )
        .is_err());
        let y = choose_label_post_hoc(
            &LabelPolicy::PostHocWorstCase,
            &inst,
            &Trace::new(),
            Context(2),
            ActionLabel(-1),
            &mut rng,
        )
        .unwrap();
        assert_eq!(y, ActionLabel(1));
    }

    #[test]
    fn invalid_policies_rejected() {
        let inst = ProblemInstance::thresholds_and_intervals(8).unwrap();
        let p = LabelPolicy::FixedConcept {
            concept: Hypothesis::threshold(1, 1),
            noise: 0.5,
        };
        assert!(p.validate(&inst).is_err());
        let p = LabelPolicy::FixedConcept {
            concept: Hypothesis::table([0; 8]),
            noise: 0.0,
        };
        assert!(p.validate(&inst).is_err());
    }

    #[test]
    fn transductive_set_support() {
        let set = TransductiveSet {
            contexts: vec![1, 4, 6],
            weights: Some(vec![1.0, 2.0, 1.0]),
        };
        let d = set.distribution(8).unwrap();
        assert_eq!(d.probs()[4], 0.5);
        let mut rng = SeedStream::new(3).rng();
        assert!((0..2000).all(|_| set.contains(sample_context(&d, &mut rng).0)));
        assert!(TransductiveSet {
            contexts: vec![],
            weights: None
        }
        .validate(8)
        .is_err());
        assert!(TransductiveSet {
            contexts: vec![9],
            weights: None
        }
        .validate(8)
        .is_err());
        assert!(TransductiveSet {
            contexts: vec![1, 1],
            weights: None
        }
        .validate(8)
        .is_err());
    }

    #[test]
    fn adversary_config_json() {
        let a: ContextAdversary =
            serde_json::from_str(r#"{"kind": "smooth-adaptive", "sigma": 0.5}"#).unwrap();
        assert_eq!(
            a,
            ContextAdversary::SmoothAdaptive {
                sigma: 0.5,
                window: DEFAULT_WINDOW,
                tilt: DEFAULT_TILT
            }
        );
        let p: LabelPolicy =
            serde_json::from_str(r#"{"kind": "fixed-concept", "concept": {"kind": "threshold", "theta": 3, "polarity": 1}, "noise": 0.1}"#)
                .unwrap();
        assert!(matches!(p, LabelPolicy::FixedConcept { noise, .. } if noise == 0.1));
    }

    proptest! {
        #[test]
        fn adaptive_adversary_is_always_smooth(
            rounds in prop::collection::vec((0usize..12, prop::bool::ANY, prop::bool::ANY), 0..80),
            sigma in 0.05f64..=1.0,
            tilt in 0.0f64..5.0,
        ) {
            let inst = ProblemInstance::thresholds_and_intervals(12).unwrap();
            let mut t = Trace::new();
            for (i, &(x, a, b)) in rounds.iter().enumerate() {
                let lab = |v: bool| ActionLabel(if v { 1 } else { -1 });
                t.push(RoundRecord::new(i + 1, Context(x), lab(a), lab(b))).unwrap();
            }
            let d = adaptive_smooth_adversary(&inst, &t, sigma, 30, tilt).unwrap();
            prop_assert!(validate_smoothness(&d, sigma));
            prop_assert!((d.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(d.probs().iter().all(|p| *p >= 0.0));
        }

        #[test]
        fn water_fill_respects_cap(
            weights in prop::collection::vec(0.0f64..100.0, 1..30),
            slack in 1.0f64..4.0,
        ) {
            let m = weights.len();
            let cap = slack / m as f64;
            let p = water_fill(&weights, cap);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(p.iter().all(|v| *v <= cap + 1e-15 && *v >= 0.0));
        }
    }
}
