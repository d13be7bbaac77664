//! Generalized FTPL over `G x H` with Laplace noise and an adaptive
//! learning rate, for the transductive setting.
//!
//! The perturbation of a pair is `<Gamma[(g, h)], nu / eta_t>`. Each column of
//! `Gamma` is stored as a small dataset of fake examples whose weighted
//! instantaneous regret equals the column entry for every pair, so the noise
//! reaches the oracle as extra regret records.

use std::sync::Arc;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{MgolError, Result};
use crate::instance::{ActionLabel, Context, GroupHypothesisPair, ProblemInstance};
use crate::oracle::{Oracle, OracleAnswer, OracleQuery, RegretRecord};
use crate::play::{EmpiricalPlay, HistoryTally, PairPlayer};
use crate::rng::{tags, SeedStream};

/// A weighted fake example `(w, x, y, y')`; it contributes
/// `w * l~_x((g, h), (y', y))` to a pair's column entry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FakeExample {
    pub weight: f64,
    pub x: Context,
    pub y_true: ActionLabel,
    pub y_pred: ActionLabel,
}

/// The `(x, y, y')` a transductive column stands for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnKey {
    pub x: Context,
    pub y_true: ActionLabel,
    pub y_pred: ActionLabel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaColumn {
    pub id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<ColumnKey>,
    pub dataset: Vec<FakeExample>,
}

/// Read access to the entries of a perturbation matrix.
pub trait GammaEntries {
    fn column_count(&self) -> usize;
    fn entry(&self, instance: &ProblemInstance, pair: GroupHypothesisPair, j: usize)
        -> Result<f64>;
    fn key(&self, j: usize) -> Option<ColumnKey>;
}

/// `Gamma` as column datasets; entries are computed on demand.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PerturbationMatrix {
    pub columns: Vec<GammaColumn>,
}

impl PerturbationMatrix {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("perturbation matrix serializes")
    }

    pub fn validate(&self, instance: &ProblemInstance) -> Result<()> {
        for (j, col) in self.columns.iter().enumerate() {
            if col.id != j {
                return Err(MgolError::InvalidConfig(format!(
                    "column {j} carries id {}",
                    col.id
                )));
            }
            for ex in &col.dataset {
                instance.context(ex.x.0)?;
                instance.action_index(ex.y_true)?;
                instance.action_index(ex.y_pred)?;
                if !ex.weight.is_finite() {
                    return Err(MgolError::InvalidConfig(format!(
                        "column {j} has a non-finite weight"
                    )));
                }
            }
        }
        Ok(())
    }

    /// The column's datasets as regret records, each scaled by `scale[j]`.
    pub fn noise_records(&self, scale: &[f64]) -> Vec<RegretRecord> {
        self.columns
            .iter()
            .zip(scale)
            .flat_map(|(col, &s)| {
                col.dataset.iter().map(move |ex| RegretRecord {
                    x: ex.x,
                    y_pred: ex.y_pred,
                    y_true: ex.y_true,
                    weight: s * ex.weight,
                })
            })
            .collect()
    }
}

impl GammaEntries for PerturbationMatrix {
    fn column_count(&self) -> usize {
        self.columns.len()
    }

    fn entry(
        &self,
        instance: &ProblemInstance,
        pair: GroupHypothesisPair,
        j: usize,
    ) -> Result<f64> {
        let mut total = 0.0;
        for ex in &self.columns[j].dataset {
            let x = instance.context(ex.x.0)?.0;
            let pred = instance.action_index(ex.y_pred)?;
            let truth = instance.action_index(ex.y_true)?;
            total += ex.weight * instance.instant_regret(pair, x, pred, truth);
        }
        Ok(total)
    }

    fn key(&self, j: usize) -> Option<ColumnKey> {
        self.columns[j].key
    }
}

/// A materialized `Gamma`, one row per pair in canonical order.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseGamma {
    pub rows: Vec<Vec<f64>>,
    pub keys: Vec<Option<ColumnKey>>,
}

impl DenseGamma {
    pub fn materialize(pm: &PerturbationMatrix, instance: &ProblemInstance) -> Result<Self> {
        let n_h = instance.hypothesis_count();
        let rows = (0..instance.pair_count())
            .map(|i| {
                let pair = GroupHypothesisPair::new(i / n_h, i % n_h);
                (0..pm.column_count())
                    .map(|j| pm.entry(instance, pair, j))
                    .collect()
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            rows,
            keys: pm.columns.iter().map(|c| c.key).collect(),
        })
    }
}

impl GammaEntries for DenseGamma {
    fn column_count(&self) -> usize {
        self.keys.len()
    }

    fn entry(
        &self,
        instance: &ProblemInstance,
        pair: GroupHypothesisPair,
        j: usize,
    ) -> Result<f64> {
        Ok(self.rows[pair.group * instance.hypothesis_count() + pair.hypothesis][j])
    }

    fn key(&self, j: usize) -> Option<ColumnKey> {
        self.keys[j]
    }
}

/// One column per `(x, y, y')` with `x` in `contexts`, ordered by `x`, then
/// `y`, then `y'`; each column is the single fake example `(1, x, y, y')`.
pub fn build_transductive_gamma(
    contexts: &[usize],
    instance: &ProblemInstance,
) -> Result<PerturbationMatrix> {
    if contexts.is_empty() {
        return Err(MgolError::InvalidConfig(
            "the transductive set is empty".into(),
        ));
    }
    let actions = instance.actions();
    let mut columns = Vec::with_capacity(contexts.len() * actions.len() * actions.len());
    for &x in contexts {
        let x = instance.context(x)?;
        for &y_true in actions {
            for &y_pred in actions {
                columns.push(GammaColumn {
                    id: columns.len(),
                    key: Some(ColumnKey { x, y_true, y_pred }),
                    dataset: vec![FakeExample {
                        weight: 1.0,
                        x,
                        y_true,
                        y_pred,
                    }],
                });
            }
        }
    }
    Ok(PerturbationMatrix { columns })
}

/// Worst slack of the approximability inequality with the coordinate vector
/// of each keyed column as the loss direction:
///
/// ```text
/// min over (g,h), (g',h'), j of
///   Gamma[(g,h)][j] - Gamma[(g',h')][j] - (l~_x((g,h),(y',y)) - l~_x((g',h'),(y',y)))
/// ```
///
/// The expression splits as `d(g,h) - d(g',h')` with `d = Gamma - l~`, so the
/// minimum over row pairs is `min d - max d` per column. Unkeyed columns are
/// skipped. Evaluates every pair, so use it on small instances.
pub fn check_approximability<G: GammaEntries + ?Sized>(
    gamma: &G,
    instance: &ProblemInstance,
) -> Result<f64> {
    let n_h = instance.hypothesis_count();
    let mut worst = f64::INFINITY;
    for j in 0..gamma.column_count() {
        let Some(key) = gamma.key(j) else { continue };
        let x = instance.context(key.x.0)?.0;
        let pred = instance.action_index(key.y_pred)?;
        let truth = instance.action_index(key.y_true)?;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..instance.pair_count() {
            let pair = GroupHypothesisPair::new(i / n_h, i % n_h);
            let d = gamma.entry(instance, pair, j)? - instance.instant_regret(pair, x, pred, truth);
            lo = lo.min(d);
            hi = hi.max(d);
        }
        worst = worst.min(lo - hi);
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GftplConfig {
    /// Approximability constant of `Gamma` (1 for the transductive builder).
    #[serde(rename = "gamma")]
    pub gamma_approx: f64,
    /// Learning-rate constant.
    #[serde(rename = "C")]
    pub c: f64,
    /// Oracle calls per round for the empirical play.
    #[serde(rename = "M")]
    pub m_calls: usize,
}

impl GftplConfig {
    pub fn new(gamma_approx: f64, c: f64, m_calls: usize) -> Result<Self> {
        let cfg = Self {
            gamma_approx,
            c,
            m_calls,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.gamma_approx) || !positive(self.c) {
            return Err(MgolError::InvalidConfig(format!(
                "gamma and C must be positive, got {} and {}",
                self.gamma_approx, self.c
            )));
        }
        if self.m_calls == 0 {
            return Err(MgolError::InvalidConfig("M must be at least 1".into()));
        }
        Ok(())
    }
}

/// `min(1 / gamma, C / sqrt(L* + 1))`.
pub fn learning_rate(cfg: &GftplConfig, l_star_prev: f64) -> f64 {
    (1.0 / cfg.gamma_approx).min(cfg.c / (l_star_prev.max(0.0) + 1.0).sqrt())
}

/// Best cumulative instantaneous regret of any pair against the realized
/// history, floored at 0. One unperturbed `opt_gh` call.
pub fn best_gain_so_far(
    oracle: &dyn Oracle,
    instance: &ProblemInstance,
    history: &HistoryTally,
) -> Result<f64> {
    let query = OracleQuery {
        regret_records: history.regret_records(instance),
        correlation_records: Vec::new(),
        alpha: oracle.alpha(),
    };
    Ok(oracle.opt_gh(&query)?.objective.max(0.0))
}

/// Unit Laplace draws, one per column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaplaceNoise {
    pub nu: Vec<f64>,
}

impl LaplaceNoise {
    /// The difference of two unit exponentials is unit Laplace.
    pub fn draw<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let nu = (0..n)
            .map(|_| {
                let a: f64 = rng.sample(Exp1);
                let b: f64 = rng.sample(Exp1);
                a - b
            })
            .collect();
        Self { nu }
    }

    pub fn zeros(n: usize) -> Self {
        Self { nu: vec![0.0; n] }
    }
}

/// History records plus every column dataset scaled by `nu_j / eta_t`.
pub fn gftpl_query(
    instance: &ProblemInstance,
    history: &HistoryTally,
    pm: &PerturbationMatrix,
    noise: &LaplaceNoise,
    eta_t: f64,
    alpha: f64,
) -> OracleQuery {
    let scale: Vec<f64> = noise.nu.iter().map(|v| v / eta_t).collect();
    let mut regret_records = history.regret_records(instance);
    regret_records.extend(pm.noise_records(&scale));
    OracleQuery {
        regret_records,
        correlation_records: Vec::new(),
        alpha,
    }
}

pub fn gftpl_sample_with_noise(
    oracle: &dyn Oracle,
    instance: &ProblemInstance,
    history: &HistoryTally,
    pm: &PerturbationMatrix,
    noise: &LaplaceNoise,
    eta_t: f64,
) -> Result<OracleAnswer> {
    if !(eta_t > 0.0 && eta_t.is_finite()) {
        return Err(MgolError::InvalidConfig(format!(
            "learning rate must be positive, got {eta_t}"
        )));
    }
    if noise.nu.len() != pm.column_count() {
        return Err(MgolError::InvalidConfig(format!(
            "noise has {} coordinates for {} columns",
            noise.nu.len(),
            pm.column_count()
        )));
    }
    oracle.opt_gh(&gftpl_query(
        instance,
        history,
        pm,
        noise,
        eta_t,
        oracle.alpha(),
    ))
}

/// One draw: fresh Laplace noise, then the perturbed-leader call. Returns the
/// noise alongside the answer.
pub fn gftpl_sample<R: Rng + ?Sized>(
    oracle: &dyn Oracle,
    instance: &ProblemInstance,
    history: &HistoryTally,
    pm: &PerturbationMatrix,
    eta_t: f64,
    rng: &mut R,
) -> Result<(OracleAnswer, LaplaceNoise)> {
    let noise = LaplaceNoise::draw(pm.column_count(), rng);
    let answer = gftpl_sample_with_noise(oracle, instance, history, pm, &noise, eta_t)?;
    Ok((answer, noise))
}

/// `M` draws at one learning rate, computed once from the best gain so far.
/// With `frozen` set every call reuses that noise instead of drawing fresh.
pub fn gftpl_empirical_play(
    oracle: &dyn Oracle,
    instance: &ProblemInstance,
    history: &HistoryTally,
    pm: &PerturbationMatrix,
    cfg: &GftplConfig,
    stream: SeedStream,
    frozen: Option<&LaplaceNoise>,
) -> Result<(EmpiricalPlay, f64)> {
    let eta_t = learning_rate(cfg, best_gain_so_far(oracle, instance, history)?);
    let pairs = (0..cfg.m_calls)
        .map(|i| {
            let answer = match frozen {
                Some(noise) => {
                    gftpl_sample_with_noise(oracle, instance, history, pm, noise, eta_t)?
                }
                None => {
                    let mut rng = stream.child(i as u64).rng();
                    gftpl_sample(oracle, instance, history, pm, eta_t, &mut rng)?.0
                }
            };
            Ok(answer.pair)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((EmpiricalPlay::new(pairs)?, eta_t))
}

/// The transductive small-loss `(G, H)`-player.
pub struct GftplPlayer {
    oracle: Arc<dyn Oracle>,
    instance: Arc<ProblemInstance>,
    gamma: PerturbationMatrix,
    cfg: GftplConfig,
    frozen: Option<LaplaceNoise>,
    last_rate: Option<f64>,
}

impl GftplPlayer {
    pub fn new(
        oracle: Arc<dyn Oracle>,
        instance: Arc<ProblemInstance>,
        gamma: PerturbationMatrix,
        cfg: GftplConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        gamma.validate(&instance)?;
        Ok(Self {
            oracle,
            instance,
            gamma,
            cfg,
            frozen: None,
            last_rate: None,
        })
    }

    /// Draw the noise once from `stream` and reuse it for every call of the run.
    pub fn freeze_noise(&mut self, stream: SeedStream) {
        let mut rng = stream.child(tags::FROZEN_NOISE).rng();
        self.frozen = Some(LaplaceNoise::draw(self.gamma.column_count(), &mut rng));
    }

    pub fn gamma(&self) -> &PerturbationMatrix {
        &self.gamma
    }

    pub fn config(&self) -> &GftplConfig {
        &self.cfg
    }

    pub fn last_learning_rate(&self) -> Option<f64> {
        self.last_rate
    }
}

impl PairPlayer for GftplPlayer {
    fn play(
        &mut self,
        history: &HistoryTally,
        _t: usize,
        stream: SeedStream,
    ) -> Result<EmpiricalPlay> {
        let (play, rate) = gftpl_empirical_play(
            &*self.oracle,
            &self.instance,
            history,
            &self.gamma,
            &self.cfg,
            stream,
            self.frozen.as_ref(),
        )?;
        self.last_rate = Some(rate);
        Ok(play)
    }

    fn gh_calls_per_round(&self) -> u64 {
        self.cfg.m_calls as u64 + 1
    }
}
