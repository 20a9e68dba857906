use staploc_core::harness::{
    aed_svg, build_scenarios, chordal_csv, decode_dataset, emit_report, encode_dataset, errors_csv, load_dataset,
    parse_chordal_csv, parse_errors_csv, run_experiment, save_dataset, spearman, ExperimentConfig, SceneContext,
};
use staploc_core::scene::ScenarioTag;
use staploc_core::Error;

fn overrides(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

fn small_config() -> ExperimentConfig {
    ExperimentConfig::load(
        None,
        &overrides(&[
            ("displacements.directions", "N, S"),
            ("experiment.scnr_db", "-20, 20"),
            ("experiment.train_count", "96"),
            ("experiment.test_count", "48"),
            ("experiment.fsl_count", "16"),
            ("experiment.calibration_count", "64"),
            ("train.conv_channels", "4, 8, 8"),
            ("train.hidden_units", "16"),
            ("train.epochs", "3"),
            ("fsl.epochs", "3"),
        ]),
    )
    .unwrap()
}

#[test]
fn config_text_roundtrips() {
    let cfg = small_config();
    let back = ExperimentConfig::from_ini_str(&cfg.to_ini_string()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn config_file_then_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.ini");
    std::fs::write(&path, "[experiment]\nseed = 7\ntrain_count = 100\n[train]\nepochs = 4\n").unwrap();
    let cfg = ExperimentConfig::load(Some(&path), &overrides(&[("train.epochs", "9")])).unwrap();
    assert_eq!(cfg.seed, 7);
    assert_eq!(cfg.train_count, 100);
    assert_eq!(cfg.train.epochs, 9);
    assert_eq!(cfg.fsl_count, 64);
}

#[test]
fn config_rejects_unknown_and_bad_values() {
    for (k, v) in [("train.nope", "1"), ("experiment.seed", "abc"), ("experiment.train_count", "0"), ("experiment.scnr_db", "")] {
        match ExperimentConfig::load(None, &overrides(&[(k, v)])) {
            Err(e @ Error::Config { .. }) => assert_eq!(e.exit_code(), 2),
            other => panic!("{k}={v}: expected a config error, got {other:?}"),
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.ini");
    assert!(matches!(ExperimentConfig::load(Some(&missing), &[]), Err(Error::Io(_))));
}

#[test]
fn datasets_roundtrip_and_reject_damage() {
    let cfg = small_config();
    let scenarios = build_scenarios(&cfg).unwrap();
    let ctx = SceneContext::new(&scenarios[0], &cfg.covariance, 64, 11).unwrap();
    let data = ctx.generate(5, 10.0, 3).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.hmt");
    save_dataset(&path, &data).unwrap();
    let back = load_dataset(&path).unwrap();
    assert_eq!(back.len(), data.len());
    for (a, b) in data.iter().zip(&back) {
        assert_eq!(a.values, b.values);
        assert_eq!(a.label, b.label);
        assert_eq!(a.output_scnr_db, b.output_scnr_db);
        assert_eq!(b.scenario_id, "");
    }

    let bytes = encode_dataset(&data).unwrap();
    let per = (bytes.len() - 28) / data.len();
    match decode_dataset(&bytes[..bytes.len() - 10]) {
        Err(Error::Format { offset, .. }) => assert_eq!(offset as usize, 28 + 4 * per),
        other => panic!("expected a format error, got {:?}", other.map(|v| v.len())),
    }
    assert!(matches!(decode_dataset(&[]), Err(Error::Format { offset: 0, .. })));
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(decode_dataset(&bad), Err(Error::Format { offset: 0, .. })));
    let mut long = bytes;
    long.push(0);
    assert!(decode_dataset(&long).is_err());

    let empty = encode_dataset(&[]).unwrap();
    assert!(decode_dataset(&empty).unwrap().is_empty());
}

#[test]
fn generation_is_seeded_and_calibrated() {
    let cfg = small_config();
    let scenarios = build_scenarios(&cfg).unwrap();
    let ctx = SceneContext::new(&scenarios[1], &cfg.covariance, 256, 5).unwrap();
    let a = ctx.generate(256, 5.0, 99).unwrap();
    let b = ctx.generate(256, 5.0, 99).unwrap();
    assert_eq!(a, b);
    // A prefix of a larger draw is the smaller draw.
    let c = ctx.generate(8, 5.0, 99).unwrap();
    assert_eq!(&a[..8], &c[..]);

    let mean = a.iter().map(|t| t.output_scnr_db as f64).sum::<f64>() / a.len() as f64;
    assert!((mean - 5.0).abs() <= 1.0, "mean output SCNR {mean} dB");
}

#[test]
fn spearman_reference_values() {
    assert_eq!(spearman(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 30.0, 40.0]), Some(1.0));
    assert_eq!(spearman(&[1.0, 2.0, 3.0, 4.0], &[4.0, 3.0, 2.0, 1.0]), Some(-1.0));
    // Ties take average ranks, matching scipy.stats.spearmanr.
    let r = spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
    assert!((r - 0.9486832980505138).abs() < 1e-12, "{r}");
    assert_eq!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), None);
    assert_eq!(spearman(&[1.0], &[1.0]), None);
}

#[test]
fn small_experiment_report_is_complete() {
    let mut cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    cfg.output_dir = dir.path().to_path_buf();
    let report = run_experiment(&cfg).unwrap();

    assert_eq!(report.errors.len(), 3 * 2);
    assert_eq!(report.chordal.len(), 2);
    assert_eq!(report.top_scnr_db, 20.0);
    for r in &report.errors {
        assert!(r.err_namf_m > 0.0 && r.err_cnn_m > 0.0 && r.err_cnn_fsl_m > 0.0);
        assert!((r.gain - r.err_namf_m / r.err_cnn_m).abs() < 1e-12);
    }
    for c in &report.chordal {
        assert!(c.distance_raw >= 0.0 && c.distance_normalized <= 1.0);
    }
    assert!(report.quantization_floor_m > 20.0 && report.quantization_floor_m < 35.0);

    let errors = errors_csv(&report.errors).unwrap();
    assert!(errors.starts_with("scenario,scnr_db,err_namf_m,err_cnn_m,err_cnn_fsl_m,gain,gain_fsl\n"));
    assert_eq!(parse_errors_csv(&errors).unwrap(), report.errors);
    let chordal = chordal_csv(&report.chordal).unwrap();
    assert!(chordal.starts_with("scenario,distance_raw,distance_normalized,gain_at_top_scnr\n"));
    assert_eq!(parse_chordal_csv(&chordal).unwrap(), report.chordal);

    let rows: Vec<_> = report.errors.iter().filter(|r| r.scenario == "N").collect();
    let svg = aed_svg("N", &rows);
    assert_eq!(svg.matches("<polyline").count(), 3);

    let files = emit_report(&report, dir.path()).unwrap();
    let names: Vec<String> = files
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    for expected in ["errors.csv", "chordal.csv", "summary.txt", "aed_N.svg", "aed_S.svg"] {
        assert!(names.iter().any(|n| n == expected), "missing {expected} in {names:?}");
    }
    assert!(!names.iter().any(|n| n == "aed_O.svg"));
    let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("spearman"));
}

#[test]
fn scenario_list_follows_directions() {
    let cfg = small_config();
    let tags: Vec<ScenarioTag> = build_scenarios(&cfg).unwrap().iter().map(|s| s.tag).collect();
    assert_eq!(tags, vec![ScenarioTag::O, ScenarioTag::N, ScenarioTag::S]);
    let full = ExperimentConfig::default();
    assert_eq!(build_scenarios(&full).unwrap().len(), 9);
    assert_eq!(full.scnr_db.len() * 9, 81);
}
