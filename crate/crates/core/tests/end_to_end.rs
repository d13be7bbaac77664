use mgol::env::{ContextAdversary, LabelPolicy, TransductiveSet};
use mgol::harness::{
    run_experiment, AdversarySpec, Algorithm, AlgorithmParams, ExperimentConfig, GroupFamily,
    HypothesisFamily, InstanceSpec,
};
use mgol::instance::{Group, Hypothesis};
use mgol::ledger::{read_groups_csv, read_rounds_csv};

fn config(algorithm: Algorithm, contexts: ContextAdversary) -> ExperimentConfig {
    ExperimentConfig {
        run_id: "e2e".into(),
        instance: InstanceSpec::Generated {
            m: 12,
            hypotheses: HypothesisFamily::Thresholds,
            groups: GroupFamily::Intervals,
            extra_groups: vec![Group::set([1, 5, 9])],
        },
        algorithm,
        adversary: AdversarySpec {
            contexts,
            labels: LabelPolicy::FixedConcept {
                concept: Hypothesis::threshold(6, -1),
                noise: 0.2,
            },
        },
        horizon: 150,
        params: AlgorithmParams {
            m_calls: Some(8),
            n: Some(16),
            ..Default::default()
        },
        seeds: vec![4, 5],
        out_dir: None,
        diagnostics: true,
        allow_post_hoc_labels: false,
    }
}

fn smooth(sigma: f64) -> ContextAdversary {
    ContextAdversary::SmoothAdaptive {
        sigma,
        window: 50,
        tilt: 0.5,
    }
}

fn transductive() -> ContextAdversary {
    ContextAdversary::Transductive {
        set: TransductiveSet {
            contexts: vec![0, 3, 5, 8, 11],
            weights: Some(vec![0.1, 0.3, 0.2, 0.2, 0.2]),
        },
    }
}

#[test]
fn ledger_matches_a_recount_from_the_trace() {
    let cfg = config(Algorithm::FtplSmooth, smooth(0.5));
    let inst = cfg.instance.build().unwrap();
    let report = run_experiment(&cfg).unwrap();
    for seed in &report.seeds {
        assert_eq!(seed.groups.len(), inst.group_count());
        for (g, entry) in seed.groups.iter().enumerate() {
            let active: Vec<_> = seed
                .trace
                .rounds()
                .iter()
                .filter(|r| inst.group(g).contains(r.x))
                .collect();
            assert_eq!(entry.t_g as usize, active.len());
            let mistakes = active.iter().filter(|r| r.y_hat != r.y).count();
            assert_eq!(entry.learner_loss, mistakes as f64);
            let best = inst
                .hypotheses()
                .iter()
                .map(|h| {
                    active
                        .iter()
                        .filter(|r| h.eval(r.x).unwrap() != r.y)
                        .count()
                })
                .min()
                .unwrap_or(0);
            assert_eq!(entry.best_loss, best as f64, "group {g}");
            assert_eq!(entry.regret, entry.learner_loss - entry.best_loss);
            assert!(entry.regret <= entry.t_g as f64);
        }
        let worst = seed
            .groups
            .iter()
            .map(|e| e.regret)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(seed.worst_group.regret, worst);
    }
}

#[test]
fn every_algorithm_keeps_its_call_budget_and_never_reads_groups() {
    let cases = [
        (Algorithm::FtplSmooth, smooth(0.5), (8, 2)),
        (Algorithm::GftplTransductive, transductive(), (9, 2)),
        (Algorithm::Ftl, ContextAdversary::Uniform, (0, 1)),
        (
            Algorithm::OnlineBatchWrapper,
            ContextAdversary::Uniform,
            (0, 1),
        ),
    ];
    for (algorithm, contexts, (gh, h)) in cases {
        let report = run_experiment(&config(algorithm, contexts)).unwrap();
        for seed in &report.seeds {
            assert_eq!(seed.learner_group_reads, 0);
            assert!(seed
                .trace
                .rounds()
                .iter()
                .all(|r| r.gh_calls == gh && r.h_calls == h));
            assert_eq!(seed.oracle_calls.gh, 150 * gh);
            assert_eq!(seed.oracle_calls.h, 150 * h);
        }
    }
}

#[test]
fn batch_wrapper_over_erm_reproduces_ftl() {
    let a = run_experiment(&config(Algorithm::Ftl, ContextAdversary::Uniform)).unwrap();
    let b = run_experiment(&config(
        Algorithm::OnlineBatchWrapper,
        ContextAdversary::Uniform,
    ))
    .unwrap();
    for (x, y) in a.seeds.iter().zip(&b.seeds) {
        assert_eq!(x.trace, y.trace);
    }
}

#[test]
fn diagnostics_stay_nonpositive_and_smoothness_holds() {
    let report = run_experiment(&config(Algorithm::FtplSmooth, smooth(0.25))).unwrap();
    for seed in &report.seeds {
        for r in seed.trace.rounds() {
            assert!(r.lp_value.unwrap() <= 1e-9);
            assert!(r.amf_value.unwrap() <= 1e-9);
            let eps = r.epsilon_estimate.unwrap();
            assert!((0.0..=1.0).contains(&eps));
            let p = r.bernoulli_p.unwrap();
            assert!((0.0..=1.0).contains(&p));
        }
    }
}

#[test]
fn transductive_runs_stay_on_the_revealed_set() {
    let report = run_experiment(&config(Algorithm::GftplTransductive, transductive())).unwrap();
    for seed in &report.seeds {
        assert!(seed
            .trace
            .rounds()
            .iter()
            .all(|r| [0, 3, 5, 8, 11].contains(&r.x.0)));
    }
}

#[test]
fn frozen_noise_changes_the_run_but_stays_deterministic() {
    let fresh = config(Algorithm::GftplTransductive, transductive());
    let mut frozen = fresh.clone();
    frozen.params.freeze_noise = true;
    let a = run_experiment(&fresh).unwrap();
    let b = run_experiment(&frozen).unwrap();
    let c = run_experiment(&frozen).unwrap();
    assert_ne!(a.seeds[0].trace, b.seeds[0].trace);
    assert_eq!(b.seeds[0].trace, c.seeds[0].trace);
}

#[test]
fn csv_outputs_reload_exactly_and_repeat_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(Algorithm::FtplSmooth, smooth(0.5));
    cfg.out_dir = Some(dir.path().join("a"));
    let report = run_experiment(&cfg).unwrap();
    let seed = &report.seeds[0];
    let rounds = dir.path().join("a/e2e_seed4_rounds.csv");
    let groups = dir.path().join("a/e2e_seed4_groups.csv");
    assert_eq!(read_rounds_csv(&rounds).unwrap(), seed.trace);
    assert_eq!(read_groups_csv(&groups).unwrap(), seed.groups);
    assert!(dir.path().join("a/e2e_report.json").exists());

    cfg.out_dir = Some(dir.path().join("b"));
    run_experiment(&cfg).unwrap();
    for name in [
        "e2e_seed4_rounds.csv",
        "e2e_seed4_groups.csv",
        "e2e_seed5_rounds.csv",
    ] {
        assert_eq!(
            std::fs::read(dir.path().join("a").join(name)).unwrap(),
            std::fs::read(dir.path().join("b").join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn seeds_give_different_runs() {
    let report = run_experiment(&config(Algorithm::FtplSmooth, smooth(0.5))).unwrap();
    assert_ne!(report.seeds[0].trace, report.seeds[1].trace);
}
