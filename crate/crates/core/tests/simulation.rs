use robust_sparse::lasso::SolverOptions;
use robust_sparse::selection::{full_pipeline, preliminary_stage, PipelineConfig, PrelimVariant};
use robust_sparse::simulation::{
    evaluate, generate, lasso_baseline, replication_seed, run_monte_carlo, run_replication, summarize, write_summary_csv,
    Experiment, Reproduction, Scenario, SUMMARY_HEADER,
};
use robust_sparse::ThresholdingRule;

#[test]
fn preliminary_screens_truth_at_low_contamination() {
    let config = PipelineConfig::default();
    let mut covered = 0;
    for k in 0..50 {
        let sc = Scenario::with_outlier_pct(200, 200, 10, 5.0, replication_seed(11, k));
        let (ds, truth) = generate(&sc).unwrap();
        let pre = preliminary_stage(&ds, &config).unwrap();
        if evaluate(&pre.beta_tilde, Some(&pre), &truth).coverage == Some(true) {
            covered += 1;
        }
    }
    assert!(covered >= 45, "coverage {covered}/50");
}

#[test]
fn selected_fit_finds_all_true_coefficients() {
    let config = PipelineConfig::default();
    let mut hits = 0;
    for k in 0..20 {
        let sc = Scenario::with_outlier_pct(200, 200, 10, 5.0, replication_seed(12, k));
        let (ds, truth) = generate(&sc).unwrap();
        let res = full_pipeline(&ds, &ThresholdingRule::default_scad(), &config).unwrap();
        let m = evaluate(&res.selected.fit.beta, Some(&res.prelim), &truth);
        assert!(m.tp <= 10 && m.fp <= 190);
        if m.tp == 10 {
            hits += 1;
        }
    }
    assert!(hits >= 19, "TP = 10 in {hits}/20 runs");
}

#[test]
fn lasso_recovers_support_on_clean_data() {
    for k in 0..5 {
        let (ds, truth) = generate(&Scenario::new(100, 50, 5, 0, replication_seed(13, k))).unwrap();
        let b = lasso_baseline(&ds, 20, &SolverOptions::default()).unwrap();
        let m = evaluate(&b, None, &truth);
        assert_eq!(m.tp, 5);
        assert!(m.fp <= 10, "fp {}", m.fp);
        assert!(m.sq_l2_error < 0.5, "error {}", m.sq_l2_error);
    }
}

#[test]
fn coverage_is_monotone_under_enlargement() {
    let (ds, truth) = generate(&Scenario::new(60, 20, 3, 4, 3)).unwrap();
    let pre = preliminary_stage(&ds, &PipelineConfig::default()).unwrap();
    let before = evaluate(&pre.beta_tilde, Some(&pre), &truth).coverage.unwrap();
    let mut bigger = pre.clone();
    bigger.beta_tilde.mapv_inplace(|v| if v == 0.0 { 1e-3 } else { v });
    bigger.gamma_tilde.mapv_inplace(|v| if v == 0.0 { 1e-3 } else { v });
    let after = evaluate(&bigger.beta_tilde, Some(&bigger), &truth).coverage.unwrap();
    assert!(after);
    assert!(after >= before);
}

fn small_experiment(reps: usize) -> Experiment {
    Experiment {
        rules: vec![ThresholdingRule::Soft, ThresholdingRule::Hard],
        variants: vec![PrelimVariant::Pre, PrelimVariant::ThPre],
        prelim_rows: true,
        baselines: true,
        ..Experiment::new(Scenario::new(50, 20, 3, 5, 99), reps)
    }
}

#[test]
fn single_replication_equals_direct_pipeline() {
    let exp = Experiment {
        rules: vec![ThresholdingRule::Hard],
        ..Experiment::new(Scenario::new(50, 20, 3, 5, 99), 1)
    };
    let rows = run_monte_carlo(&exp).unwrap();
    let sc = Scenario {
        seed: replication_seed(99, 0),
        ..exp.scenario.clone()
    };
    let (ds, truth) = generate(&sc).unwrap();
    let res = full_pipeline(&ds, &ThresholdingRule::Hard, &PipelineConfig::default()).unwrap();
    let m = evaluate(&res.selected.fit.beta, Some(&res.prelim), &truth);
    let row = rows.iter().find(|r| r.rule == "hard").unwrap();
    assert_eq!(row.sq_l2_error, m.sq_l2_error);
    assert_eq!(row.tp, m.tp as f64);
    assert_eq!(row.fp, m.fp as f64);
    assert_eq!(row.replications, 1);
}

#[test]
fn summary_ignores_replication_order_and_thread_count() {
    let exp = small_experiment(6);
    let reps: Vec<_> = (0..6).map(|i| run_replication(&exp, i)).collect();
    let forward = summarize(&exp, &reps);
    let mut reversed = reps.clone();
    reversed.reverse();
    let backward = summarize(&exp, &reversed);
    assert_eq!(forward.len(), backward.len());
    for (a, b) in forward.iter().zip(&backward) {
        assert_eq!((&a.prelim, &a.rule), (&b.prelim, &b.rule));
        assert!((a.sq_l2_error - b.sq_l2_error).abs() <= 1e-12 * a.sq_l2_error.max(1.0));
        assert!((a.support_size - b.support_size).abs() <= 1e-12 * a.support_size.max(1.0));
    }

    let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let wide = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = serial.install(|| run_monte_carlo(&exp)).unwrap();
    let b = wide.install(|| run_monte_carlo(&exp)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, forward);
}

#[test]
fn summary_csv_layout() {
    let rows = run_monte_carlo(&small_experiment(2)).unwrap();
    // 2 variants x (prelim + 2 rules) + lasso + oracle
    assert_eq!(rows.len(), 8);
    let mut buf = Vec::new();
    write_summary_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), SUMMARY_HEADER.join(","));
    assert_eq!(lines.count(), 8);
    for r in &rows {
        assert_eq!(r.failures, 0);
        assert_eq!(r.coverage.is_none(), r.prelim == "-");
    }
}

#[test]
fn reproduction_plans_have_documented_shapes() {
    let t2 = Reproduction::Table2.experiments(1, 0, false);
    assert_eq!((t2[0].scenario.n, t2[0].scenario.p, t2[0].scenario.s_star), (100, 200, 10));
    let t2full = Reproduction::Table2.experiments(1, 0, true);
    assert_eq!((t2full[0].scenario.n, t2full[0].scenario.p, t2full[0].scenario.s_star), (200, 400, 20));
    let f1 = Reproduction::Figure1.experiments(1, 0, false);
    assert_eq!(f1.len(), 8);
    assert!(f1.iter().all(|e| e.prelim_rows && e.rules.is_empty()));
    for e in Reproduction::Table1.experiments(1, 0, false) {
        assert_eq!(e.rules.len(), 4);
        assert_eq!(e.variants.len(), 2);
        assert!(e.baselines);
    }
}
