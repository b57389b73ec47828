mod common;

use std::collections::BTreeSet;

use sds_core::asf::{self, AsfConfig, AsfMode};
use sds_core::embedding::BackendKind;
use sds_core::manifest;
use sds_core::pcs::PcsConfig;
use sds_core::pipeline::{self, artifacts, errors_by_stage, RunConfig};
use sds_core::synth::{Fixture, SamplePlan};
use sds_core::SdsError;

fn ten_fixture(dir: &std::path::Path) -> Fixture {
    Fixture::write(dir, &common::ten_sample_plans(), 3, &PcsConfig::default()).unwrap()
}

#[test]
fn ten_sample_fixture_counts() {
    let dir = tempfile::tempdir().unwrap();
    let fx = ten_fixture(dir.path());
    let out = dir.path().join("out");
    let cfg = fx.run_config(&out, PcsConfig::default(), AsfConfig::default(), 1);
    let (report, curated) = pipeline::run_select(&cfg).unwrap();

    assert_eq!(
        (report.input_count, report.pcs.accepted, report.final_count),
        (10, 7, 5)
    );
    assert_eq!((report.pcs.rejected, report.pcs.errored), (3, 0));
    assert_eq!((report.asf.rejected, report.asf.errored), (2, 0));
    assert_eq!(
        report.pcs.accepted - report.asf.rejected - report.asf.errored,
        report.final_count
    );
    let ids: Vec<&str> = curated.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, common::TEN_SELECTED);

    let groups: Vec<(String, usize, usize)> = report
        .groups
        .iter()
        .map(|g| (g.group.clone(), g.size, g.kept))
        .collect();
    assert_eq!(
        groups,
        vec![
            ("by_count:1".into(), 6, 4),
            ("by_count:2".into(), 1, 1),
            ("by_class:1".into(), 4, 3),
            ("by_class:2".into(), 3, 2),
            ("by_class:3".into(), 1, 1),
        ]
    );
    let class1 = &report.class_retention[0];
    assert_eq!((class1.input, class1.pcs_accepted, class1.selected), (5, 4, 3));

    for name in [
        artifacts::SELECTED_MANIFEST,
        artifacts::REPORT_JSON,
        artifacts::REPORT_TEXT,
        artifacts::PCS_SCORES,
        artifacts::ASF_SCORES,
        artifacts::PCS_HISTOGRAM,
        artifacts::ASF_GROUPS,
        artifacts::CLASS_RETENTION,
    ] {
        assert!(out.join(name).is_file(), "{name}");
    }
    let groups_csv = std::fs::read_to_string(out.join(artifacts::ASF_GROUPS)).unwrap();
    assert!(groups_csv.starts_with(&format!("# config_hash={} seed=0\n", report.config_hash)));
    let text = std::fs::read_to_string(out.join(artifacts::REPORT_TEXT)).unwrap();
    assert!(text.contains("final            5 (50.0%)"), "{text}");

    // Curated paths resolve from the output directory.
    let table = manifest::ClassTable::load(&fx.class_table).unwrap();
    for r in manifest::load_manifest(&out.join(artifacts::SELECTED_MANIFEST), &table).unwrap() {
        assert!(r.image_path(&out).is_file());
        assert!(r.annotation_path(&out).is_file());
    }
}

#[test]
fn per_mode_selection_on_ten_samples() {
    let dir = tempfile::tempdir().unwrap();
    let fx = ten_fixture(dir.path());
    let mut sizes = Vec::new();
    for mode in [AsfMode::Direct, AsfMode::RuleA, AsfMode::RuleB, AsfMode::Both] {
        let asf = AsfConfig {
            mode,
            ..AsfConfig::default()
        };
        let cfg = fx.run_config(&dir.path().join(mode.to_string()), PcsConfig::default(), asf, 2);
        sizes.push(pipeline::run_select(&cfg).unwrap().0.final_count);
    }
    // direct: ceil(.6*7) = 5; rule_a: 4 + 1; rule_b: 3 + 2 + 1 over {p00,p01,p05,p03,p06}.
    assert_eq!(sizes, vec![5, 5, 5, 5]);
}

#[test]
fn stages_composed_by_hand_match_full_run() {
    let dir = tempfile::tempdir().unwrap();
    let fx = ten_fixture(dir.path());

    let full = dir.path().join("full");
    pipeline::run_select(&fx.run_config(&full, PcsConfig::default(), AsfConfig::default(), 3)).unwrap();

    let staged = dir.path().join("staged");
    let cfg = fx.run_config(&staged, PcsConfig::default(), AsfConfig::default(), 1);
    let inputs = pipeline::Inputs::load(&cfg).unwrap();
    pipeline::pcs_stage(&cfg, &inputs).unwrap();
    pipeline::asf_from_files(&cfg).unwrap();
    pipeline::report_from_files(&cfg).unwrap();

    assert_eq!(common::read_outputs(&full), common::read_outputs(&staged));
}

#[test]
fn rerun_reuses_and_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let fx = ten_fixture(dir.path());
    let out = dir.path().join("out");
    let cfg = fx.run_config(&out, PcsConfig::default(), AsfConfig::default(), 2);
    pipeline::run_select(&cfg).unwrap();
    let first = common::read_outputs(&out);
    pipeline::run_select(&cfg).unwrap();
    assert_eq!(first, common::read_outputs(&out));
}

#[test]
fn stale_scores_are_recomputed_or_refused() {
    let dir = tempfile::tempdir().unwrap();
    let fx = ten_fixture(dir.path());
    let out = dir.path().join("out");
    let cfg = fx.run_config(&out, PcsConfig::default(), AsfConfig::default(), 1);
    pipeline::run_select(&cfg).unwrap();

    let mut loose = cfg.clone();
    loose.pcs.tau_pcs = -3.0;
    loose.pcs.tau_s = -1.0;
    // Explicit stage commands refuse score files from another config.
    assert!(matches!(
        pipeline::report_from_files(&loose),
        Err(SdsError::StaleArtifact { .. })
    ));
    assert!(matches!(
        pipeline::asf_from_files(&loose),
        Err(SdsError::StaleArtifact { .. })
    ));
    // A full run recomputes.
    let (report, _) = pipeline::run_select(&loose).unwrap();
    assert_eq!(report.pcs.accepted, 10);
    let (_, pcs) =
        artifacts::read_pcs_scores(&out.join(artifacts::PCS_SCORES), None).unwrap();
    assert_eq!(pcs.accepted(), 10);
}

#[test]
fn missing_reference_and_image_become_sample_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut plans = common::ten_sample_plans();
    plans[1].write_reference = false;
    let fx = Fixture::write(dir.path(), &plans, 3, &PcsConfig::default()).unwrap();
    std::fs::remove_file(dir.path().join("data/images/p03.png")).unwrap();
    let out = dir.path().join("out");
    let (report, curated) =
        pipeline::run_select(&fx.run_config(&out, PcsConfig::default(), AsfConfig::default(), 4)).unwrap();

    assert_eq!(report.pcs.errored, 1);
    assert_eq!(report.asf.errored, 1);
    let errs = errors_by_stage(&report);
    assert_eq!(errs["pcs"], vec!["p03"]);
    assert_eq!(errs["asf"], vec!["p01"]);
    assert!(curated.iter().all(|r| r.id != "p01" && r.id != "p03"));
    assert_eq!(
        report.pcs.accepted - report.asf.rejected - report.asf.errored,
        report.final_count
    );
    let scores = std::fs::read_to_string(out.join(artifacts::PCS_SCORES)).unwrap();
    assert!(scores.lines().last().unwrap().contains("\"kind\":\"error\""));
}

#[test]
fn embedding_store_backend_matches_mock() {
    let dir = tempfile::tempdir().unwrap();
    let fx = ten_fixture(dir.path());
    let pcs = PcsConfig::default();
    fx.write_store(&dir.path().join("store"), &pcs).unwrap();

    let (mock_report, mock_curated) =
        pipeline::run_select(&fx.run_config(&dir.path().join("a"), pcs.clone(), AsfConfig::default(), 1)).unwrap();
    let mut cfg = fx.run_config(&dir.path().join("b"), pcs.clone(), AsfConfig::default(), 1);
    cfg.backend.kind = BackendKind::FileStore;
    cfg.backend.path = dir.path().join("store");
    let (store_report, store_curated) = pipeline::run_select(&cfg).unwrap();
    assert_eq!(mock_curated, store_curated);
    assert_eq!(mock_report.pcs, store_report.pcs);

    // A store built for another seed is refused up front.
    let mut other = cfg.clone();
    other.seed = 9;
    other.sync_seed();
    assert!(pipeline::run_select(&other).is_err());
}

#[test]
fn config_file_round_trip_runs() {
    let dir = tempfile::tempdir().unwrap();
    let fx = ten_fixture(dir.path());
    let cfg = fx.run_config(&dir.path().join("out"), PcsConfig::default(), AsfConfig::default(), 2);
    let path = dir.path().join("run.toml");
    std::fs::write(&path, cfg.to_toml()).unwrap();
    let loaded = RunConfig::load(&path).unwrap();
    assert_eq!(loaded, cfg);
    assert_eq!(pipeline::run_select(&loaded).unwrap().0.final_count, 5);
}

#[test]
fn invalid_config_aborts() {
    let dir = tempfile::tempdir().unwrap();
    let fx = ten_fixture(dir.path());
    let mut cfg = fx.run_config(&dir.path().join("out"), PcsConfig::default(), AsfConfig::default(), 1);
    cfg.asf.keep_fraction = 0.0;
    assert!(pipeline::run_select(&cfg).is_err());
    let mut cfg = fx.run_config(&dir.path().join("out"), PcsConfig::default(), AsfConfig::default(), 1);
    cfg.reference_masks = dir.path().join("nowhere");
    assert!(pipeline::run_select(&cfg).is_err());
    assert!(!dir.path().join("out").exists());
}

#[test]
fn blank_annotation_scores_zero_and_sinks() {
    let dir = tempfile::tempdir().unwrap();
    let plans = vec![
        SamplePlan::new("a", &[1], 0.9, 0.5, 0),
        SamplePlan::new("b", &[1], 0.9, 0.5, 0),
        SamplePlan::new("c", &[1], 0.9, 0.5, 3),
    ];
    let fx = Fixture::write(dir.path(), &plans, 2, &PcsConfig::default()).unwrap();
    // Blank the synthetic mask of b: no foreground left.
    sds_core::maskmetrics::SegMask::filled(32, 32, 0)
        .unwrap()
        .save_png(&dir.path().join("data/masks/b.png"))
        .unwrap();
    let cfg = fx.run_config(&dir.path().join("out"), PcsConfig::default(), AsfConfig::default(), 1);
    let (report, curated) = pipeline::run_select(&cfg).unwrap();
    let (_, asf_run) =
        artifacts::read_asf_scores(&dir.path().join("out").join(artifacts::ASF_SCORES), None).unwrap();
    let b = asf_run.scored.iter().find(|s| s.sample_id == "b").unwrap();
    // Grouped by its manifest classes, ranked last.
    assert_eq!((b.miou, b.classes.clone()), (0.0, vec![1]));
    let ids: BTreeSet<&str> = curated.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, BTreeSet::from(["a", "c"]));
    assert_eq!(report.final_count, asf::keep_count(3, 0.6));
}
