//! Experiment runner: configuration, the per-round protocol loop, reports and
//! sweeps.
//!
//! Each round: Nature picks a context distribution and draws `x_t`, the
//! learner commits to `y_hat_t`, Nature reveals `y_t`, the ledger records the
//! round. Every random draw comes from a stream derived from the run seed and
//! the round index, so a run is a pure function of its config and seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amf::{amf_value, split_half_epsilon};
use crate::baselines::{ConstantLearner, ErmAdapter, FtlLearner, OnlineBatchWrapper};
use crate::env::{
    choose_label, choose_label_post_hoc, sample_context, validate_smoothness, ContextAdversary,
    LabelPolicy,
};
use crate::error::{MgolError, Result};
use crate::ftpl::{FtplConfig, SmoothFtplPlayer};
use crate::gftpl::{build_transductive_gamma, GftplConfig, GftplPlayer};
use crate::instance::{
    AccessRole, ActionLabel, Group, Hypothesis, InstanceDescription, LossTable, ProblemInstance,
};
use crate::learner::{Learner, MultiGroupLearner};
use crate::ledger::{export_csv, worst_group_regret, write_rounds_csv, GroupLedgerEntry, Ledger};
use crate::oracle::{ExactOracle, Oracle, OracleCalls};
use crate::rng::{tags, SeedStream};
use crate::trace::{RoundRecord, Trace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    FtplSmooth,
    GftplTransductive,
    Ftl,
    OnlineBatchWrapper,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HypothesisFamily {
    /// Both polarities of every threshold.
    #[default]
    Thresholds,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupFamily {
    /// Every interval, the full universe included.
    #[default]
    Intervals,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InstanceSpec {
    Generated {
        m: usize,
        #[serde(default)]
        hypotheses: HypothesisFamily,
        #[serde(default)]
        groups: GroupFamily,
        /// Appended after the generated groups.
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        extra_groups: Vec<Group>,
    },
    Inline {
        description: InstanceDescription,
    },
    File {
        path: PathBuf,
    },
}

impl InstanceSpec {
    pub fn build(&self) -> Result<ProblemInstance> {
        match self {
            Self::Generated {
                m,
                hypotheses,
                groups,
                extra_groups,
            } => {
                let HypothesisFamily::Thresholds = hypotheses;
                let GroupFamily::Intervals = groups;
                let mut g = Group::intervals(*m);
                g.extend(extra_groups.iter().cloned());
                ProblemInstance::new(InstanceDescription {
                    universe_size: *m,
                    action_count: 2,
                    hypotheses: Hypothesis::thresholds(*m),
                    groups: g,
                    loss: LossTable::zero_one(2),
                    vc_hint: Some(2),
                })
            }
            Self::Inline { description } => ProblemInstance::new(description.clone()),
            Self::File { path } => ProblemInstance::from_json_str(&std::fs::read_to_string(path)?),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySpec {
    pub contexts: ContextAdversary,
    pub labels: LabelPolicy,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BatchLearnerKind {
    #[default]
    Erm,
    ConstantPlus,
}

pub const DEFAULT_M: usize = 50;
pub const DEFAULT_N: usize = 64;

/// Algorithm parameters; unset values take the defaults below.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub m_calls: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default)]
    pub batch_learner: BatchLearnerKind,
    /// Draw the GFTPL noise once per run instead of once per oracle call.
    #[serde(default)]
    pub freeze_noise: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_run_id")]
    pub run_id: String,
    pub instance: InstanceSpec,
    pub algorithm: Algorithm,
    pub adversary: AdversarySpec,
    pub horizon: usize,
    #[serde(default)]
    pub params: AlgorithmParams,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Per-round adversary-moves-first values and sampling-error estimates.
    #[serde(default)]
    pub diagnostics: bool,
    /// Allow label policies that see the round's prediction.
    #[serde(default)]
    pub allow_post_hoc_labels: bool,
}

fn default_run_id() -> String {
    "run".into()
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Check everything that can be checked before any round runs.
    pub fn validate(&self) -> Result<Arc<ProblemInstance>> {
        if self.horizon == 0 {
            return Err(MgolError::InvalidConfig(
                "horizon must be at least 1".into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(MgolError::InvalidConfig(
                "at least one seed is required".into(),
            ));
        }
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) {
            return Err(MgolError::InvalidConfig(format!(
                "run_id {:?} is not a file name",
                self.run_id
            )));
        }
        let inst = Arc::new(self.instance.build()?);
        self.adversary.contexts.validate(inst.m())?;
        self.adversary.labels.validate(&inst)?;
        if self.adversary.labels.sees_prediction() && !self.allow_post_hoc_labels {
            return Err(MgolError::InvalidConfig(
                "this label policy sees the prediction; set allow_post_hoc_labels to use it".into(),
            ));
        }
        match self.algorithm {
            Algorithm::FtplSmooth => {
                self.ftpl_config()?;
            }
            Algorithm::GftplTransductive => {
                self.gftpl_config()?;
                if self.adversary.contexts.transductive_set().is_none() {
                    return Err(MgolError::InvalidConfig(
                        "gftpl-transductive needs a transductive context adversary".into(),
                    ));
                }
            }
            Algorithm::Ftl | Algorithm::OnlineBatchWrapper => {}
        }
        if self.diagnostics && !inst.is_binary() {
            return Err(MgolError::Unsupported(
                "diagnostics are computed for binary labels only".into(),
            ));
        }
        Ok(inst)
    }

    /// The smoothness level used to size the default parameters.
    pub fn sigma(&self) -> f64 {
        self.adversary.contexts.sigma().unwrap_or(1.0)
    }

    pub fn ftpl_config(&self) -> Result<FtplConfig> {
        let p = &self.params;
        let cfg = FtplConfig {
            eta: p
                .eta
                .unwrap_or_else(|| default_eta(self.horizon, self.sigma())),
            n: p.n.unwrap_or(DEFAULT_N),
            m_calls: p.m_calls.unwrap_or(DEFAULT_M),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn gftpl_config(&self) -> Result<GftplConfig> {
        let p = &self.params;
        GftplConfig::new(
            p.gamma.unwrap_or(1.0),
            p.c.unwrap_or(1.0),
            p.m_calls.unwrap_or(DEFAULT_M),
        )
    }
}

/// Default perturbation strength: `sqrt(T / sigma)`.
pub fn default_eta(horizon: usize, sigma: f64) -> f64 {
    (horizon as f64 / sigma).sqrt()
}

/// Parameter values the regret analysis asks for; reported, never enforced.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    pub horizon: usize,
    pub sigma: f64,
    pub actions: usize,
    /// Lower bound on the exponent excess of `M`.
    pub delta: f64,
    #[serde(rename = "M")]
    pub m_calls: f64,
    pub n: f64,
    pub eta: f64,
}

/// `delta = log(2 log K + log(T) / 2) / (2 log T)`, `M = T^(1 + delta)`,
/// `n = T / sqrt(sigma)`, `eta = sqrt(T log(T / sigma) / sigma)`.
pub fn theory_params(horizon: usize, sigma: f64, actions: usize) -> Result<TheoryParams> {
    if horizon < 2 || !(sigma > 0.0 && sigma <= 1.0) || actions < 2 {
        return Err(MgolError::InvalidConfig(format!(
            "need T >= 2, sigma in (0, 1], K >= 2; got T={horizon}, sigma={sigma}, K={actions}"
        )));
    }
    let t = horizon as f64;
    let delta = (2.0 * (actions as f64).ln() + 0.5 * t.ln()).ln() / (2.0 * t.ln());
    Ok(TheoryParams {
        horizon,
        sigma,
        actions,
        delta,
        m_calls: t.powf(1.0 + delta),
        n: t / sigma.sqrt(),
        eta: (t * (t / sigma).ln() / sigma).sqrt(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorstGroup {
    pub group: usize,
    pub description: Group,
    pub regret: f64,
    pub t_g: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub run_id: String,
    pub rounds: usize,
    pub worst_group: WorstGroup,
    pub learner_loss: f64,
    pub oracle_calls: OracleCalls,
    pub learner_group_reads: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_lp_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_amf_value: Option<f64>,
    pub wall_seconds: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub files: Vec<PathBuf>,
    /// Full per-group ledger; kept in memory, written to the groups CSV.
    #[serde(skip)]
    pub groups: Vec<GroupLedgerEntry>,
    #[serde(skip)]
    pub trace: Trace,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub algorithm: Algorithm,
    pub horizon: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ftpl: Option<FtplConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gftpl: Option<GftplConfig>,
    /// What the analysis would ask for at this horizon, next to what ran.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theory: Option<TheoryParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transductive_set: Option<Vec<usize>>,
    pub seeds: Vec<SeedReport>,
    pub mean_worst_group_regret: f64,
}

impl RunReport {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn build_learner(
    cfg: &ExperimentConfig,
    inst: &Arc<ProblemInstance>,
    oracle: &Arc<ExactOracle>,
    seed: SeedStream,
) -> Result<Box<dyn Learner>> {
    let dyn_oracle: Arc<dyn Oracle> = oracle.clone();
    Ok(match cfg.algorithm {
        Algorithm::FtplSmooth => {
            let player =
                SmoothFtplPlayer::new(dyn_oracle.clone(), inst.clone(), cfg.ftpl_config()?)?;
            Box::new(MultiGroupLearner::new(player, dyn_oracle, inst.clone()))
        }
        Algorithm::GftplTransductive => {
            let set = cfg.adversary.contexts.transductive_set().ok_or_else(|| {
                MgolError::InvalidConfig("gftpl-transductive needs a transductive set".into())
            })?;
            let gamma = build_transductive_gamma(&set.contexts, inst)?;
            let mut player =
                GftplPlayer::new(dyn_oracle.clone(), inst.clone(), gamma, cfg.gftpl_config()?)?;
            if cfg.params.freeze_noise {
                player.freeze_noise(seed);
            }
            Box::new(MultiGroupLearner::new(player, dyn_oracle, inst.clone()))
        }
        Algorithm::Ftl => Box::new(FtlLearner::new(dyn_oracle, inst.clone())),
        Algorithm::OnlineBatchWrapper => match cfg.params.batch_learner {
            BatchLearnerKind::Erm => Box::new(OnlineBatchWrapper::new(
                ErmAdapter::new(dyn_oracle, inst.clone()),
                inst.clone(),
            )),
            BatchLearnerKind::ConstantPlus => Box::new(OnlineBatchWrapper::new(
                ConstantLearner::new(inst.clone(), ActionLabel(1))?,
                inst.clone(),
            )),
        },
    })
}

struct RoundOutcome {
    record: RoundRecord,
    y_hat: usize,
    y: usize,
}

#[allow(clippy::too_many_arguments)]
fn play_round(
    cfg: &ExperimentConfig,
    inst: &ProblemInstance,
    oracle: &ExactOracle,
    learner: &mut dyn Learner,
    trace: &Trace,
    amf_cache: &mut [Option<f64>],
    t: usize,
    round: SeedStream,
) -> Result<RoundOutcome> {
    let adversary = &cfg.adversary;
    let dist = adversary.contexts.distribution(inst, trace)?;
    if let Some(sigma) = adversary.contexts.sigma() {
        if !validate_smoothness(&dist, sigma) {
            return Err(MgolError::InvalidConfig(format!(
                "round {t}: context distribution is not {sigma}-smooth"
            )));
        }
    }
    let x = sample_context(&dist, &mut round.child(tags::CONTEXT).rng());
    if let Some(set) = adversary.contexts.transductive_set() {
        if !set.contains(x.0) {
            return Err(MgolError::InvalidConfig(format!(
                "round {t}: context {} outside the revealed set",
                x.0
            )));
        }
    }

    let before = oracle.calls();
    let decision = learner.decide(x.0, t, round)?;
    let calls = oracle.calls() - before;
    let expected = learner.calls_per_round();
    if calls != expected {
        return Err(MgolError::InvalidConfig(format!(
            "round {t}: learner made {calls:?} oracle calls, expected {expected:?}"
        )));
    }

    let y_hat_label = inst.action_label(decision.y_hat);
    let mut label_rng = round.child(tags::LABEL).rng();
    let y_label = if adversary.labels.sees_prediction() {
        choose_label_post_hoc(
            &adversary.labels,
            inst,
            trace,
            x,
            y_hat_label,
            &mut label_rng,
        )?
    } else {
        choose_label(&adversary.labels, inst, trace, x, &mut label_rng)?
    };
    let y = inst.action_index(y_label)?;

    let mut record = RoundRecord::new(t, x, y_hat_label, y_label);
    record.bernoulli_p = decision.bernoulli_p;
    record.lp_value = decision.lp_value;
    record.gh_calls = calls.gh;
    record.h_calls = calls.h;
    if cfg.diagnostics {
        let v = match amf_cache[x.0] {
            Some(v) => v,
            None => {
                let v = amf_value(inst, x.0)?;
                amf_cache[x.0] = Some(v);
                v
            }
        };
        record.amf_value = Some(v);
        record.epsilon_estimate = decision
            .play
            .as_ref()
            .and_then(|p| split_half_epsilon(inst, p, x.0));
    }
    Ok(RoundOutcome {
        record,
        y_hat: decision.y_hat,
        y,
    })
}

/// One seed of an experiment. On a failed round the partial trace is written
/// next to the other outputs before the error is returned.
pub fn run_seed(
    cfg: &ExperimentConfig,
    inst: &Arc<ProblemInstance>,
    seed: u64,
) -> Result<SeedReport> {
    let start = Instant::now();
    let root = SeedStream::new(seed);
    let oracle = Arc::new(ExactOracle::new(inst.clone()));
    let mut learner = build_learner(cfg, inst, &oracle, root.child(tags::FROZEN_NOISE))?;
    let mut ledger = Ledger::new(inst.clone());
    let mut amf_cache = vec![None; inst.m()];
    let run_id = format!("{}_seed{seed}", cfg.run_id);
    let learner_reads_before = inst.group_access().get(AccessRole::Learner);

    for t in 1..=cfg.horizon {
        let round = root.child(tags::ADVERSARY).child(t as u64);
        let outcome = match play_round(
            cfg,
            inst,
            &oracle,
            &mut *learner,
            ledger.trace(),
            &mut amf_cache,
            t,
            round,
        ) {
            Ok(o) => o,
            Err(e) => {
                if let Some(dir) = &cfg.out_dir {
                    std::fs::create_dir_all(dir)?;
                    let path = dir.join(format!("{run_id}_partial_rounds.csv"));
                    write_rounds_csv(&path, ledger.trace(), cfg.diagnostics)?;
                }
                return Err(e);
            }
        };
        let x = outcome.record.x.0;
        ledger.record_round(outcome.record)?;
        learner.observe(x, outcome.y_hat, outcome.y);
    }

    let learner_group_reads = inst.group_access().get(AccessRole::Learner) - learner_reads_before;
    if learner_group_reads != 0 {
        return Err(MgolError::InvalidConfig(format!(
            "learner code read the group list {learner_group_reads} times"
        )));
    }

    let groups = ledger.entries()?;
    let (g, regret) = worst_group_regret(&groups)
        .ok_or_else(|| MgolError::InvalidInstance("no groups".into()))?;
    let trace = ledger.trace().clone();
    let full = groups.iter().map(|e| e.t_g).max().unwrap_or(0);
    let learner_loss = (0..groups.len())
        .find(|&i| groups[i].t_g == full)
        .map_or(0.0, |i| groups[i].learner_loss);
    let files = match &cfg.out_dir {
        Some(dir) => {
            let (a, b) = export_csv(dir, &run_id, &trace, &groups, cfg.diagnostics)?;
            vec![a, b]
        }
        None => Vec::new(),
    };
    let max_of = |f: fn(&RoundRecord) -> Option<f64>| {
        trace
            .rounds()
            .iter()
            .filter_map(f)
            .fold(None, |acc: Option<f64>, v| {
                Some(acc.map_or(v, |a| a.max(v)))
            })
    };
    Ok(SeedReport {
        seed,
        run_id,
        rounds: trace.len(),
        worst_group: WorstGroup {
            group: g,
            description: inst.group(g).clone(),
            regret,
            t_g: groups[g].t_g,
        },
        learner_loss,
        oracle_calls: oracle.calls(),
        learner_group_reads,
        max_lp_value: max_of(|r| r.lp_value),
        max_amf_value: max_of(|r| r.amf_value),
        wall_seconds: start.elapsed().as_secs_f64(),
        files,
        groups,
        trace,
    })
}

/// Every seed of the config, in parallel; results come back in seed order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    let inst = cfg.validate()?;
    let seeds = cfg
        .seeds
        .par_iter()
        .map(|&s| run_seed(cfg, &inst, s))
        .collect::<Result<Vec<_>>>()?;
    let mean = seeds.iter().map(|s| s.worst_group.regret).sum::<f64>() / seeds.len() as f64;
    let sigma = cfg.sigma();
    let report = RunReport {
        run_id: cfg.run_id.clone(),
        algorithm: cfg.algorithm,
        horizon: cfg.horizon,
        ftpl: (cfg.algorithm == Algorithm::FtplSmooth)
            .then(|| cfg.ftpl_config())
            .transpose()?,
        gftpl: (cfg.algorithm == Algorithm::GftplTransductive)
            .then(|| cfg.gftpl_config())
            .transpose()?,
        theory: theory_params(cfg.horizon, sigma, inst.action_count()).ok(),
        transductive_set: cfg
            .adversary
            .contexts
            .transductive_set()
            .map(|s| s.contexts.clone()),
        seeds,
        mean_worst_group_regret: mean,
    };
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(
            dir.join(format!("{}_report.json", cfg.run_id)),
            report.to_json_string(),
        )?;
    }
    Ok(report)
}

/// A base config plus axes; each axis sets one field, named by its
/// dot-separated path in the config JSON, to each of its values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: ExperimentConfig,
    pub axes: BTreeMap<String, Vec<serde_json::Value>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cell: usize,
    pub settings: BTreeMap<String, serde_json::Value>,
    pub seed: Option<u64>,
    pub horizon: usize,
    pub worst_group_regret: Option<f64>,
    pub sqrt_t: f64,
    pub error: Option<String>,
}

fn set_path(value: &mut serde_json::Value, path: &str, new: serde_json::Value) -> Result<()> {
    let mut cur = value;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur.as_object_mut().ok_or_else(|| {
            MgolError::InvalidConfig(format!("sweep axis {path}: {part} is not inside an object"))
        })?;
        if i + 1 == parts.len() {
            obj.insert((*part).to_owned(), new);
            return Ok(());
        }
        cur = obj.entry(*part).or_insert_with(|| serde_json::json!({}));
    }
    Ok(())
}

/// The cross product of the axes, in lexicographic axis order.
pub fn sweep_cells(
    sweep: &SweepConfig,
) -> Result<Vec<(BTreeMap<String, serde_json::Value>, ExperimentConfig)>> {
    if sweep.axes.is_empty() {
        return Err(MgolError::InvalidConfig(
            "a sweep needs at least one axis".into(),
        ));
    }
    if let Some((k, _)) = sweep.axes.iter().find(|(_, v)| v.is_empty()) {
        return Err(MgolError::InvalidConfig(format!("sweep axis {k} is empty")));
    }
    let base = serde_json::to_value(&sweep.base)?;
    let mut cells = vec![(BTreeMap::new(), base)];
    for (path, values) in &sweep.axes {
        let mut next = Vec::with_capacity(cells.len() * values.len());
        for (settings, cfg) in &cells {
            for v in values {
                let mut cfg = cfg.clone();
                set_path(&mut cfg, path, v.clone())?;
                let mut settings = settings.clone();
                settings.insert(path.clone(), v.clone());
                next.push((settings, cfg));
            }
        }
        cells = next;
    }
    cells
        .into_iter()
        .enumerate()
        .map(|(i, (settings, v))| {
            let mut cfg: ExperimentConfig = serde_json::from_value(v)?;
            cfg.run_id = format!("{}_cell{i}", sweep.base.run_id);
            Ok((settings, cfg))
        })
        .collect()
}

/// Run every cell; a failing cell is recorded and the sweep moves on.
pub fn sweep(sweep: &SweepConfig) -> Result<Vec<SweepRow>> {
    let cells = sweep_cells(sweep)?;
    let mut rows = Vec::new();
    for (i, (settings, cfg)) in cells.into_iter().enumerate() {
        let sqrt_t = (cfg.horizon as f64).sqrt();
        match run_experiment(&cfg) {
            Ok(report) => rows.extend(report.seeds.iter().map(|s| SweepRow {
                cell: i,
                settings: settings.clone(),
                seed: Some(s.seed),
                horizon: cfg.horizon,
                worst_group_regret: Some(s.worst_group.regret),
                sqrt_t,
                error: None,
            })),
            Err(e) => rows.push(SweepRow {
                cell: i,
                settings,
                seed: None,
                horizon: cfg.horizon,
                worst_group_regret: None,
                sqrt_t,
                error: Some(e.to_string()),
            }),
        }
    }
    if let Some(dir) = &sweep.base.out_dir {
        write_sweep_csv(
            &dir.join(format!("{}_sweep.csv", sweep.base.run_id)),
            sweep,
            &rows,
        )?;
    }
    Ok(rows)
}

pub fn write_sweep_csv(path: &Path, sweep: &SweepConfig, rows: &[SweepRow]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["cell".to_owned()];
    header.extend(sweep.axes.keys().cloned());
    header.extend(["seed", "horizon", "worst_group_regret", "sqrt_t", "error"].map(String::from));
    w.write_record(&header)?;
    for r in rows {
        let mut row = vec![r.cell.to_string()];
        row.extend(sweep.axes.keys().map(|k| r.settings[k].to_string()));
        row.push(r.seed.map(|s| s.to_string()).unwrap_or_default());
        row.push(r.horizon.to_string());
        row.push(
            r.worst_group_regret
                .map(|v| v.to_string())
                .unwrap_or_default(),
        );
        row.push(r.sqrt_t.to_string());
        row.push(r.error.clone().unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::TransductiveSet;

    fn config(algorithm: Algorithm, horizon: usize) -> ExperimentConfig {
        ExperimentConfig {
            run_id: "t".into(),
            instance: InstanceSpec::Generated {
                m: 8,
                hypotheses: HypothesisFamily::Thresholds,
                groups: GroupFamily::Intervals,
                extra_groups: vec![],
            },
            algorithm,
            adversary: AdversarySpec {
                contexts: if algorithm == Algorithm::GftplTransductive {
                    ContextAdversary::Transductive {
                        set: TransductiveSet {
                            contexts: vec![1, 3, 6],
                            weights: None,
                        },
                    }
                } else {
                    ContextAdversary::Uniform
                },
                labels: LabelPolicy::FixedConcept {
                    concept: Hypothesis::threshold(4, 1),
                    noise: 0.1,
                },
            },
            horizon,
            params: AlgorithmParams {
                m_calls: Some(5),
                n: Some(8),
                ..Default::default()
            },
            seeds: vec![1],
            out_dir: None,
            diagnostics: true,
            allow_post_hoc_labels: false,
        }
    }

    #[test]
    fn theory_param_examples() {
        let p = theory_params(100, 1.0, 2).unwrap();
        assert_eq!(p.n, 100.0);
        assert_eq!(theory_params(100, 0.25, 2).unwrap().n, 200.0);
        let t = 100f64;
        let s = 0.25f64;
        let eta = (t * (t / s).ln() / s).sqrt();
        assert!((theory_params(100, 0.25, 2).unwrap().eta - eta).abs() < 1e-9);
        let delta = (2.0 * 2f64.ln() + 0.5 * t.ln()).ln() / (2.0 * t.ln());
        assert!((p.delta - delta).abs() < 1e-15);
        assert!((p.m_calls - t.powf(1.0 + delta)).abs() < 1e-9);
        assert!(theory_params(1, 1.0, 2).is_err());
        assert!(theory_params(10, 0.0, 2).is_err());
        assert!(theory_params(10, 1.0, 1).is_err());
    }

    #[test]
    fn single_round_runs_for_every_algorithm() {
        for a in [
            Algorithm::FtplSmooth,
            Algorithm::GftplTransductive,
            Algorithm::Ftl,
            Algorithm::OnlineBatchWrapper,
        ] {
            let report = run_experiment(&config(a, 1)).unwrap();
            assert_eq!(report.seeds[0].rounds, 1);
            assert_eq!(report.seeds[0].learner_group_reads, 0);
            let json = report.to_json_string();
            let back: serde_json::Value = serde_json::from_str(&json).unwrap();
            assert_eq!(back["seeds"][0]["rounds"], 1);
        }
    }

    #[test]
    fn per_round_calls_are_recorded() {
        let report = run_experiment(&config(Algorithm::FtplSmooth, 10)).unwrap();
        let s = &report.seeds[0];
        assert!(s
            .trace
            .rounds()
            .iter()
            .all(|r| r.gh_calls == 5 && r.h_calls == 2));
        assert_eq!(s.oracle_calls, OracleCalls { gh: 50, h: 20 });
        let report = run_experiment(&config(Algorithm::GftplTransductive, 10)).unwrap();
        assert!(report.seeds[0]
            .trace
            .rounds()
            .iter()
            .all(|r| r.gh_calls == 6 && r.h_calls == 2));
        assert!(report.seeds[0]
            .trace
            .rounds()
            .iter()
            .all(|r| [1, 3, 6].contains(&r.x.0)));
    }

    #[test]
    fn invalid_configs_are_rejected_up_front() {
        let mut c = config(Algorithm::FtplSmooth, 0);
        assert!(run_experiment(&c).is_err());
        c.horizon = 5;
        c.seeds.clear();
        assert!(run_experiment(&c).is_err());
        let mut c = config(Algorithm::FtplSmooth, 5);
        c.params.eta = Some(-1.0);
        assert!(c.validate().is_err());
        let mut c = config(Algorithm::GftplTransductive, 5);
        c.adversary.contexts = ContextAdversary::Uniform;
        assert!(c.validate().is_err());
        let mut c = config(Algorithm::FtplSmooth, 5);
        c.adversary.labels = LabelPolicy::FixedConcept {
            concept: Hypothesis::threshold(1, 1),
            noise: 0.7,
        };
        assert!(c.validate().is_err());
        let mut c = config(Algorithm::Ftl, 5);
        c.adversary.labels = LabelPolicy::PostHocWorstCase;
        assert!(c.validate().is_err());
        c.allow_post_hoc_labels = true;
        let report = run_experiment(&c).unwrap();
        assert!(report.seeds[0]
            .trace
            .rounds()
            .iter()
            .all(|r| r.y != r.y_hat));
    }

    #[test]
    fn config_json_round_trip_and_defaults() {
        let json = r#"{
            "instance": {"kind": "generated", "m": 8},
            "algorithm": "ftpl-smooth",
            "adversary": {
                "contexts": {"kind": "smooth-adaptive", "sigma": 0.5},
                "labels": {"kind": "fixed-concept", "concept": {"kind": "threshold", "theta": 2, "polarity": -1}}
            },
            "horizon": 20,
            "seeds": [3]
        }"#;
        let c = ExperimentConfig::from_json_str(json).unwrap();
        assert_eq!(c.run_id, "run");
        let f = c.ftpl_config().unwrap();
        assert_eq!((f.n, f.m_calls), (DEFAULT_N, DEFAULT_M));
        assert_eq!(f.eta, default_eta(20, 0.5));
        let back = ExperimentConfig::from_json_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(
            ExperimentConfig::from_json_str(&json.replace("\"horizon\"", "\"horizn\"")).is_err()
        );
    }

    #[test]
    fn sweep_grid_shape() {
        let base = config(Algorithm::Ftl, 1);
        let mut axes = BTreeMap::new();
        axes.insert("horizon".to_owned(), vec![5.into(), 10.into(), 20.into()]);
        let s = SweepConfig { base, axes };
        let rows = sweep(&s).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[2].horizon, 20);
        assert!((rows[1].sqrt_t - 10f64.sqrt()).abs() < 1e-15);

        let mut bad = s.clone();
        bad.axes.insert("params.M".into(), vec![]);
        assert!(sweep(&bad).is_err());
        let mut failing = s.clone();
        failing
            .axes
            .insert("params.eta".into(), vec![serde_json::json!(-1.0)]);
        failing.base.algorithm = Algorithm::FtplSmooth;
        let rows = sweep(&failing).unwrap();
        assert!(rows.iter().all(|r| r.error.is_some()));
    }
}
