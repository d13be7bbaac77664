//! Per-group regret accounting and CSV export.
//!
//! The regret of the learner on group `g` is its cumulative loss on the
//! rounds where `g(x_t) = 1` minus the loss of the best single hypothesis on
//! those rounds. The ledger belongs to the evaluation side and may enumerate
//! the group class.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{MgolError, Result};
use crate::instance::{AccessRole, ActionLabel, Context, ProblemInstance};
use crate::oracle::{tie_tolerance, ExactOracle, LabeledRecord, Oracle};
use crate::trace::{RoundRecord, Trace};

pub const ROUNDS_SCHEMA: &str = "# schema: mgol-rounds/v1";
pub const GROUPS_SCHEMA: &str = "# schema: mgol-groups/v1";
pub const ROUNDS_HEADER: [&str; 8] = ["t", "x", "y_hat", "y", "p", "lambda", "gh_calls", "h_calls"];
pub const DIAGNOSTIC_HEADER: [&str; 2] = ["amf_value", "epsilon"];
pub const GROUPS_HEADER: [&str; 6] = [
    "group_id",
    "t_g",
    "learner_loss",
    "best_loss",
    "regret",
    "regret_per_sqrt_tg",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupLedgerEntry {
    pub group: usize,
    pub t_g: u64,
    pub learner_loss: f64,
    pub best_loss: f64,
    pub regret: f64,
}

impl GroupLedgerEntry {
    /// `regret / sqrt(T_g)`, 0 for a group that never appeared.
    pub fn regret_per_sqrt_tg(&self) -> f64 {
        if self.t_g == 0 {
            0.0
        } else {
            self.regret / (self.t_g as f64).sqrt()
        }
    }
}

pub struct Ledger {
    instance: Arc<ProblemInstance>,
    evaluator: ExactOracle,
    trace: Trace,
    learner_loss: Vec<f64>,
    t_g: Vec<u64>,
    // label counts per (x, y), for the best-in-hindsight side
    label_counts: Vec<u64>,
}

impl Ledger {
    pub fn new(instance: Arc<ProblemInstance>) -> Self {
        let g = instance.groups(AccessRole::Evaluation).len();
        let counts = instance.m() * instance.action_count();
        Self {
            evaluator: ExactOracle::new(instance.clone()),
            instance,
            trace: Trace::new(),
            learner_loss: vec![0.0; g],
            t_g: vec![0; g],
            label_counts: vec![0; counts],
        }
    }

    pub fn instance(&self) -> &Arc<ProblemInstance> {
        &self.instance
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn record_round(&mut self, record: RoundRecord) -> Result<()> {
        let inst = &*self.instance;
        let x = inst.context(record.x.0)?.0;
        let pred = inst.action_index(record.y_hat)?;
        let truth = inst.action_index(record.y)?;
        self.trace.push(record)?;
        let loss = inst.loss().get(pred, truth);
        for g in 0..self.t_g.len() {
            if inst.in_group(g, x) {
                self.t_g[g] += 1;
                self.learner_loss[g] += loss;
            }
        }
        self.label_counts[x * inst.action_count() + truth] += 1;
        Ok(())
    }

    pub fn t_g(&self, g: usize) -> u64 {
        self.t_g[g]
    }

    pub fn learner_loss(&self, g: usize) -> f64 {
        self.learner_loss[g]
    }

    /// Loss of the best hypothesis on the rounds in `g`, via `opt_h` with
    /// weights `g(x_t)`.
    pub fn best_loss(&self, g: usize) -> Result<f64> {
        let inst = &*self.instance;
        let k = inst.action_count();
        let records: Vec<LabeledRecord> = self
            .label_counts
            .iter()
            .enumerate()
            .filter(|&(i, &c)| c > 0 && inst.in_group(g, i / k))
            .map(|(i, &c)| LabeledRecord {
                x: Context(i / k),
                y: inst.action_label(i % k),
                weight: c as f64,
            })
            .collect();
        if records.is_empty() {
            return Ok(0.0);
        }
        let h = self.evaluator.opt_h(&records, inst.loss())?;
        Ok(records
            .iter()
            .map(|r| {
                r.weight
                    * inst.loss().get(
                        inst.predict(h, r.x.0),
                        inst.action_index(r.y).expect("own label"),
                    )
            })
            .sum())
    }

    pub fn entry(&self, g: usize) -> Result<GroupLedgerEntry> {
        let best_loss = self.best_loss(g)?;
        Ok(GroupLedgerEntry {
            group: g,
            t_g: self.t_g[g],
            learner_loss: self.learner_loss[g],
            best_loss,
            regret: self.learner_loss[g] - best_loss,
        })
    }

    pub fn entries(&self) -> Result<Vec<GroupLedgerEntry>> {
        (0..self.t_g.len()).map(|g| self.entry(g)).collect()
    }
}

/// Regret on group `g` recomputed from the trace alone.
pub fn group_regret(
    instance: &ProblemInstance,
    oracle: &dyn Oracle,
    g: usize,
    trace: &Trace,
) -> Result<f64> {
    let mut learner = 0.0;
    let mut records = Vec::new();
    for r in trace.rounds() {
        let x = instance.context(r.x.0)?.0;
        if instance.in_group(g, x) {
            learner += instance
                .loss()
                .get(instance.action_index(r.y_hat)?, instance.action_index(r.y)?);
            records.push(LabeledRecord {
                x: r.x,
                y: r.y,
                weight: 1.0,
            });
        }
    }
    if records.is_empty() {
        return Ok(0.0);
    }
    let h = oracle.opt_h(&records, instance.loss())?;
    let mut best = 0.0;
    for r in &records {
        best += instance
            .loss()
            .get(instance.predict(h, r.x.0), instance.action_index(r.y)?);
    }
    Ok(learner - best)
}

/// The group with the largest regret; ties go to the lowest index.
pub fn worst_group_regret(entries: &[GroupLedgerEntry]) -> Option<(usize, f64)> {
    let max = entries
        .iter()
        .map(|e| e.regret)
        .fold(f64::NEG_INFINITY, f64::max);
    entries
        .iter()
        .find(|e| e.regret >= max - tie_tolerance(max))
        .map(|e| (e.group, e.regret))
}

/// Worst group of a finished ledger, enumerating every group.
pub fn worst_group(ledger: &Ledger) -> Result<(usize, f64)> {
    let entries = ledger.entries()?;
    worst_group_regret(&entries).ok_or_else(|| MgolError::InvalidInstance("no groups".into()))
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn parse<T: std::str::FromStr>(field: &str, what: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| MgolError::MalformedCsv(format!("bad {what}: {field:?}")))
}

fn parse_opt(field: &str, what: &str) -> Result<Option<f64>> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse(field, what).map(Some)
    }
}

pub fn write_rounds_csv(path: &Path, trace: &Trace, diagnostics: bool) -> Result<()> {
    let mut file = File::create(path)?;
    writeln!(file, "{ROUNDS_SCHEMA}")?;
    let mut w = csv::Writer::from_writer(file);
    let mut header: Vec<&str> = ROUNDS_HEADER.to_vec();
    if diagnostics {
        header.extend(DIAGNOSTIC_HEADER);
    }
    w.write_record(&header)?;
    for r in trace.rounds() {
        let mut row = vec![
            r.t.to_string(),
            r.x.0.to_string(),
            r.y_hat.0.to_string(),
            r.y.0.to_string(),
            opt(r.bernoulli_p),
            opt(r.lp_value),
            r.gh_calls.to_string(),
            r.h_calls.to_string(),
        ];
        if diagnostics {
            row.push(opt(r.amf_value));
            row.push(opt(r.epsilon_estimate));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_groups_csv(path: &Path, entries: &[GroupLedgerEntry]) -> Result<()> {
    let mut file = File::create(path)?;
    writeln!(file, "{GROUPS_SCHEMA}")?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(GROUPS_HEADER)?;
    for e in entries {
        w.write_record([
            e.group.to_string(),
            e.t_g.to_string(),
            e.learner_loss.to_string(),
            e.best_loss.to_string(),
            e.regret.to_string(),
            e.regret_per_sqrt_tg().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn open_versioned(path: &Path, schema: &str) -> Result<csv::Reader<BufReader<File>>> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    if first.trim_end() != schema {
        return Err(MgolError::MalformedCsv(format!(
            "{} starts with {:?}, expected {schema:?}",
            path.display(),
            first.trim_end()
        )));
    }
    Ok(csv::Reader::from_reader(reader))
}

pub fn read_rounds_csv(path: &Path) -> Result<Trace> {
    let mut r = open_versioned(path, ROUNDS_SCHEMA)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    let diagnostics = match header.len() {
        8 => false,
        10 => true,
        n => {
            return Err(MgolError::MalformedCsv(format!(
                "rounds file has {n} columns"
            )))
        }
    };
    let expected: Vec<&str> = ROUNDS_HEADER
        .iter()
        .chain(
            DIAGNOSTIC_HEADER
                .iter()
                .take(if diagnostics { 2 } else { 0 }),
        )
        .copied()
        .collect();
    if header != expected {
        return Err(MgolError::MalformedCsv(format!(
            "unexpected rounds header {header:?}"
        )));
    }
    let mut trace = Trace::new();
    for row in r.records() {
        let row = row?;
        let mut rec = RoundRecord::new(
            parse(&row[0], "t")?,
            Context(parse(&row[1], "x")?),
            ActionLabel(parse(&row[2], "y_hat")?),
            ActionLabel(parse(&row[3], "y")?),
        );
        rec.bernoulli_p = parse_opt(&row[4], "p")?;
        rec.lp_value = parse_opt(&row[5], "lambda")?;
        rec.gh_calls = parse(&row[6], "gh_calls")?;
        rec.h_calls = parse(&row[7], "h_calls")?;
        if diagnostics {
            rec.amf_value = parse_opt(&row[8], "amf_value")?;
            rec.epsilon_estimate = parse_opt(&row[9], "epsilon")?;
        }
        trace.push(rec)?;
    }
    Ok(trace)
}

pub fn read_groups_csv(path: &Path) -> Result<Vec<GroupLedgerEntry>> {
    let mut r = open_versioned(path, GROUPS_SCHEMA)?;
    if r.headers()?.iter().ne(GROUPS_HEADER) {
        return Err(MgolError::MalformedCsv("unexpected groups header".into()));
    }
    r.records()
        .map(|row| {
            let row = row?;
            Ok(GroupLedgerEntry {
                group: parse(&row[0], "group_id")?,
                t_g: parse(&row[1], "t_g")?,
                learner_loss: parse(&row[2], "learner_loss")?,
                best_loss: parse(&row[3], "best_loss")?,
                regret: parse(&row[4], "regret")?,
            })
        })
        .collect()
}

/// Write `{run_id}_rounds.csv` and `{run_id}_groups.csv` into `dir`.
pub fn export_csv(
    dir: &Path,
    run_id: &str,
    trace: &Trace,
    entries: &[GroupLedgerEntry],
    diagnostics: bool,
) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let rounds = dir.join(format!("{run_id}_rounds.csv"));
    let groups = dir.join(format!("{run_id}_groups.csv"));
    write_rounds_csv(&rounds, trace, diagnostics)?;
    write_groups_csv(&groups, entries)?;
    Ok((rounds, groups))
}
