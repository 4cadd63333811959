use enda::experiments::{
    read_replicates_csv, run_twin, sweep_localization, ExperimentConfig, Manifest, Method, Problem, ReferenceArchive,
    TwinSetup,
};

fn small(problem: Problem, method: Method) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(problem, method, 7, "unused");
    c.ensemble_sizes = vec![12, 30];
    c.replicates = 2;
    c.grid_n = 8;
    if method.is_localized() {
        c.localization_radius = Some(0.4);
    }
    c
}

#[test]
fn every_method_runs_on_its_problems() {
    let cases = [
        (Problem::Cubic, Method::Is),
        (Problem::Cubic, Method::Etkf),
        (Problem::Cubic, Method::Etpf),
        (Problem::FiveParam, Method::Is),
        (Problem::FiveParam, Method::Etkf),
        (Problem::FiveParam, Method::Etpf),
        (Problem::KlField, Method::Etkf),
        (Problem::KlField, Method::Etpf),
        (Problem::KlField, Method::Letkf),
        (Problem::KlField, Method::Letpf),
    ];
    for (p, m) in cases {
        let run = run_twin(&small(p, m)).unwrap();
        assert_eq!(run.results.len(), 4, "{p:?} {m}");
        for r in &run.results {
            assert!(r.is_ok(), "{p:?} {m}: {:?}", r.error);
            assert!(r.rmse_after.unwrap().is_finite());
            assert!(r.misfit_after.unwrap().is_finite());
        }
        assert_eq!(run.summary.len(), 2);
        assert_eq!(run.wall_times.len(), 4);
    }
}

#[test]
fn runs_are_reproducible() {
    let cfg = small(Problem::FiveParam, Method::Etpf);
    let a = run_twin(&cfg).unwrap();
    let b = run_twin(&cfg).unwrap();
    assert_eq!(a.results, b.results);
    assert_eq!(a.manifest, b.manifest);
}

#[test]
fn different_seeds_change_the_prior() {
    let cfg = small(Problem::Cubic, Method::Etkf);
    let mut other = cfg.clone();
    other.seed = 8;
    assert_ne!(run_twin(&cfg).unwrap().results, run_twin(&other).unwrap().results);
}

#[test]
fn noise_free_truth_has_zero_misfit() {
    let mut cfg = small(Problem::FiveParam, Method::Etkf);
    cfg.observation.noise_std = Some(0.0);
    cfg.observation.likelihood_std = Some(0.09);
    let setup = TwinSetup::prepare(&cfg).unwrap();
    let truth = enda::priors::raw_to_transformed(&setup.truth_report()).unwrap();
    let y = setup.forward(&truth).unwrap();
    let diff: f64 = y.iter().zip(setup.obs.y_obs.iter()).map(|(a, b)| (a - b).abs()).sum();
    assert!(diff < 1e-12, "{diff}");
}

#[test]
fn truncated_field_runs_stay_in_the_span() {
    let mut cfg = small(Problem::KlField, Method::Letkf);
    cfg.truncation = Some(5);
    let run = run_twin(&cfg).unwrap();
    assert!(run.results.iter().all(|r| r.is_ok()));
    assert!(run.results.iter().all(|r| r.mode_sq_error_1.is_some()));
}

#[test]
fn outputs_are_written_and_read_back() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(Problem::Cubic, Method::Etpf);
    let run = run_twin(&cfg).unwrap();
    run.write(dir.path()).unwrap();
    for f in [
        "replicates.csv",
        "summary.csv",
        "run-manifest.toml",
        "timings.csv",
        "pdf_u.csv",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    assert_eq!(
        read_replicates_csv(&dir.path().join("replicates.csv")).unwrap(),
        run.results
    );
    assert_eq!(
        Manifest::read(&dir.path().join("run-manifest.toml")).unwrap(),
        run.manifest
    );
    assert_eq!(run.manifest.config_sha256, cfg.hash().unwrap());
}

#[test]
fn reference_archive_feeds_kl_divergences() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(Problem::Cubic, Method::Etpf);
    let setup = TwinSetup::prepare(&cfg).unwrap();
    let archive = setup.reference_is(2000).unwrap();
    let path = dir.path().join("ref.bin");
    archive.write(&path).unwrap();
    assert_eq!(ReferenceArchive::read(&path).unwrap(), archive);

    cfg.reference = Some(path);
    let run = run_twin(&cfg).unwrap();
    for r in &run.results {
        assert_eq!(r.kl_divergences.0.len(), 1);
        assert!(r.kl_divergences.0[0] >= 0.0);
    }
    assert_eq!(run.summary[0].mean_kl_divergence.len(), 1);
}

#[test]
fn reference_for_another_problem_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let setup = TwinSetup::prepare(&small(Problem::Cubic, Method::Is)).unwrap();
    let path = dir.path().join("ref.bin");
    setup.reference_is(50).unwrap().write(&path).unwrap();
    let mut cfg = small(Problem::FiveParam, Method::Etkf);
    cfg.reference = Some(path);
    assert!(run_twin(&cfg).is_err());
}

#[test]
fn sweep_picks_a_listed_radius() {
    let cfg = small(Problem::KlField, Method::Letkf);
    let radii = [0.2, 0.5, 1.0];
    let s = sweep_localization(&cfg, &radii).unwrap();
    assert_eq!(s.rows.len(), radii.len() * cfg.ensemble_sizes.len());
    assert!(radii.contains(&s.best));
    assert_eq!(s.best_by_size.len(), cfg.ensemble_sizes.len());
    let best_mean = |r: f64| {
        let v: Vec<f64> = s
            .rows
            .iter()
            .filter(|x| x.radius == r)
            .filter_map(|x| x.mean_rmse_after)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    for r in radii {
        assert!(best_mean(s.best) <= best_mean(r) + 1e-12);
    }
    assert!(sweep_localization(&small(Problem::KlField, Method::Etkf), &radii).is_err());
}

#[test]
fn basis_cache_is_reused_and_checked() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(Problem::KlField, Method::Etkf);
    cfg.kl.basis_cache = Some(dir.path().join("basis.bin"));
    let a = run_twin(&cfg).unwrap();
    assert!(dir.path().join("basis.bin").exists());
    let b = run_twin(&cfg).unwrap();
    assert_eq!(a.results, b.results);
    cfg.grid_n = 9;
    assert!(run_twin(&cfg).is_err());
}

#[test]
fn prior_at_truth_with_perfect_data_has_zero_misfit() {
    let mut cfg = small(Problem::FiveParam, Method::Etpf);
    cfg.observation.noise_std = Some(0.0);
    cfg.observation.likelihood_std = Some(0.09);
    let setup = TwinSetup::prepare(&cfg).unwrap();
    let truth = enda::priors::raw_to_transformed(&setup.truth_report()).unwrap();
    let prior = enda::Ensemble::from_rows(&[truth]).unwrap();
    let mut c = cfg.clone();
    c.method = Method::Is;
    let (row, _) = TwinSetup::prepare(&c).unwrap().evaluate(&prior, 0, None, None).unwrap();
    assert!(row.misfit_after.unwrap().abs() < 1e-20);
    assert!(row.rmse_after.unwrap() < 1e-12);
    // The filters need at least two members.
    assert!(matches!(
        setup.evaluate(&prior, 0, None, None),
        Err(enda::EndaError::Precondition(_))
    ));
}

#[test]
fn importance_sampling_leaves_samples_untouched() {
    let setup = TwinSetup::prepare(&small(Problem::FiveParam, Method::Is)).unwrap();
    let prior = setup.sample_prior(setup.prior_seed(12, 0), 12).unwrap();
    let y = setup.predict(&prior).unwrap();
    let (post, w) = setup.assimilate(Method::Is, &prior, &y, None).unwrap();
    assert_eq!(post, prior);
    assert!(w.is_some());
    let archive = setup.reference_is(40).unwrap();
    assert_eq!(archive.samples, setup.sample_prior(archive.seed, 40).unwrap());
}

#[test]
fn vanishing_radius_leaves_rmse_unchanged() {
    for method in [Method::Letkf, Method::Letpf] {
        let cfg = small(Problem::KlField, method);
        let s = sweep_localization(&cfg, &[1e-6]).unwrap();
        assert_eq!(s.best, 1e-6);
        let setup = TwinSetup::prepare(&cfg).unwrap();
        let prior = setup.sample_prior(setup.prior_seed(12, 0), 12).unwrap();
        let (row, _) = setup.evaluate(&prior, 0, Some(1e-6), None).unwrap();
        assert_eq!(row.rmse_after, row.rmse_before, "{method}");
    }
}

#[test]
fn cubic_importance_sampling_concentrates_near_the_truth() {
    let mut cfg = small(Problem::Cubic, Method::Is);
    cfg.ensemble_sizes = vec![100_000];
    cfg.replicates = 1;
    let run = run_twin(&cfg).unwrap();
    let mean = run.results[0].analysis_mean.0[0];
    assert!((mean - 6.0).abs() < 0.5, "{mean}");
    assert!(run.results[0].analysis_std.0[0] < 0.5);
}
