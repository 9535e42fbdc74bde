use std::fs;
use std::path::Path;

use sms_langevin::error::Error;
use sms_langevin::model::Model;
use sms_langevin::runner::config::{DataSource, ExperimentKind, SamplerKind};
use sms_langevin::runner::{
    build_model, ensemble_sms_ubu, load_csv, load_data, load_idx, run_experiment, ExperimentConfig, PipelineSettings,
};

fn idx_images(n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
    let mut b = Vec::new();
    for v in [0x803u32, n, rows, cols] {
        b.extend_from_slice(&v.to_be_bytes());
    }
    b.extend_from_slice(pixels);
    b
}

fn idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut b = Vec::new();
    for v in [0x801u32, labels.len() as u32] {
        b.extend_from_slice(&v.to_be_bytes());
    }
    b.extend_from_slice(labels);
    b
}

#[test]
fn idx_fixture_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = (dir.path().join("img"), dir.path().join("lab"));
    fs::write(&img, idx_images(3, 2, 2, &[0, 255, 51, 102, 1, 2, 3, 4, 255, 255, 0, 0])).unwrap();
    fs::write(&lab, idx_labels(&[9, 0, 4])).unwrap();
    let d = load_idx(&img, &lab).unwrap();
    assert_eq!((d.len(), d.num_features(), d.num_classes()), (3, 4, 10));
    assert_eq!(d.row(0), &[0.0, 1.0, 0.2, 0.4]);
    assert_eq!(d.labels(), &[9, 0, 4]);
}

#[test]
fn idx_errors_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = (dir.path().join("img"), dir.path().join("lab"));
    fs::write(&img, idx_images(2, 2, 2, &[0; 7])).unwrap();
    fs::write(&lab, idx_labels(&[1, 2])).unwrap();
    match load_idx(&img, &lab) {
        Err(Error::Format { detail, .. }) => assert!(detail.contains("expected 24 bytes"), "{detail}"),
        other => panic!("{other:?}"),
    }
    fs::write(&img, idx_images(2, 2, 2, &[0; 8])).unwrap();
    fs::write(&lab, idx_labels(&[1, 10])).unwrap();
    match load_idx(&img, &lab) {
        Err(Error::Format { detail, .. }) => assert!(detail.contains("label 10 at offset 9"), "{detail}"),
        other => panic!("{other:?}"),
    }
    fs::write(&lab, idx_labels(&[1, 2])[..6].to_vec()).unwrap();
    assert!(matches!(load_idx(&img, &lab), Err(Error::Format { .. })));
    assert!(matches!(load_idx(&dir.path().join("missing"), &lab), Err(Error::Io { .. })));
}

#[test]
fn csv_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.csv");
    fs::write(&p, "f1,label,f2\n0.5,7,1.0\n-1,3,2\n2.5,7,0\n").unwrap();
    let d = load_csv(&p, "label").unwrap();
    assert_eq!((d.len(), d.num_features(), d.num_classes()), (3, 2, 2));
    assert_eq!(d.labels(), &[1, 0, 1]);
    assert_eq!(d.row(1), &[-1.0, 2.0]);
    assert_eq!(load_csv(&p, "1").unwrap().labels(), d.labels());

    fs::write(&p, "x,label\n1,2\n3,2\n").unwrap();
    match load_csv(&p, "label") {
        Err(Error::Format { detail, .. }) => assert!(detail.contains("only one class"), "{detail}"),
        other => panic!("{other:?}"),
    }
    fs::write(&p, "x,label\n1,0\nabc,1\n").unwrap();
    match load_csv(&p, "label") {
        Err(Error::Format { detail, .. }) => assert!(detail.contains("line 3"), "{detail}"),
        other => panic!("{other:?}"),
    }
    assert!(load_csv(&p, "nope").is_err());
}

#[test]
fn synthetic_data_is_truncated_to_whole_batches() {
    let mut cfg = ExperimentConfig::default();
    cfg.data.n_train = 1050;
    cfg.data.batch_size = 200;
    let d = load_data(&cfg.data, 3).unwrap();
    assert_eq!(d.train.len(), 1000);
    cfg.data.max_train = Some(450);
    assert_eq!(load_data(&cfg.data, 3).unwrap().train.len(), 400);
    cfg.data.source = DataSource::Idx;
    assert!(load_data(&cfg.data, 3).is_err());
}

fn small_pipeline() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.data.n_train = 60;
    cfg.data.n_test = 40;
    cfg.data.batch_size = 20;
    cfg.sampler.h = 0.01;
    cfg.sampler.epochs = 6.0;
    cfg.sampler.burn_in_epochs = 2.0;
    cfg.optimizer.epochs = 3;
    cfg.swa.epochs = 2;
    cfg
}

#[test]
fn ensemble_members_stay_inside_and_differ() {
    let cfg = small_pipeline();
    let data = load_data(&cfg.data, 1).unwrap();
    let model = build_model(&cfg, &data).unwrap();
    let s = PipelineSettings::from_config(&cfg);

    let one = ensemble_sms_ubu(&*model, 1, &s, 1).unwrap();
    assert_eq!(one.len(), 1);
    assert_eq!(one[0].trace.len(), 4 * 3);
    assert_eq!(one[0].trace.dim(), model.dim());

    let three = ensemble_sms_ubu(&*model, 3, &s, 1).unwrap();
    for m in &three {
        assert!(m.trace.samples().all(|x| x.iter().zip(&m.x_swa).all(|(a, c)| (a - c).abs() <= s.rho_max)));
    }
    assert_ne!(three[0].x_swa, three[1].x_swa);
    assert_ne!(three[1].x_swa, three[2].x_swa);
    assert_eq!(three[0].x_swa, one[0].x_swa);
    assert!(ensemble_sms_ubu(&*model, 0, &s, 1).is_err());
}

fn run_into(mut cfg: ExperimentConfig, dir: &Path) -> Vec<(String, String)> {
    cfg.out_dir = dir.to_path_buf();
    run_experiment(&cfg, None).unwrap().results
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn experiments_are_byte_reproducible() {
    let mut cfg = small_pipeline();
    cfg.kind = ExperimentKind::Ensemble;
    cfg.ensemble.members = 2;
    cfg.ensemble.rhat_chains = 2;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_into(cfg.clone(), a.path());
    let rb = run_into(cfg, b.path());
    assert_eq!(ra, rb);
    let (ca, cb) = (dir_contents(a.path()), dir_contents(b.path()));
    assert!(ca.iter().any(|(n, _)| n == "manifest.toml"));
    assert!(ca.iter().any(|(n, _)| n == "metrics.csv"));
    // manifests differ only through out_dir
    for ((na, ba), (nb, bb)) in ca.iter().zip(&cb) {
        assert_eq!(na, nb);
        if na != "manifest.toml" {
            assert_eq!(ba, bb, "{na} differs");
        }
    }
}

#[test]
fn every_experiment_kind_runs_small() {
    let dir = tempfile::tempdir().unwrap();
    let base = small_pipeline();

    let mut c = base.clone();
    c.kind = ExperimentKind::Sample;
    c.sampler.kind = SamplerKind::SgBaoab;
    let r = run_into(c.clone(), &dir.path().join("sample"));
    assert!(r.iter().any(|(k, _)| k == "nll"));
    c.sampler.kind = SamplerKind::SmsGhmc;
    c.ghmc.h = 1e-3;
    c.ghmc.iterations = 20;
    let r = run_into(c, &dir.path().join("ghmc"));
    assert!(r.iter().any(|(k, _)| k == "acceptance_rate"));

    let mut c = base.clone();
    c.kind = ExperimentKind::Contraction;
    c.contraction.pairs = 4;
    c.contraction.steps = 20;
    run_into(c, &dir.path().join("contraction"));
    assert!(dir.path().join("contraction/contraction.csv").exists());

    let mut c = base.clone();
    c.kind = ExperimentKind::Calibrate;
    c.ensemble.members = 2;
    c.ensemble.repeats = 2;
    run_into(c, &dir.path().join("calibrate"));
    assert!(dir.path().join("calibrate/calibration_runs.csv").exists());

    let mut c = base.clone();
    c.kind = ExperimentKind::Diagnose;
    c.diagnose.runs = 2;
    c.diagnose.power_iters = 20;
    run_into(c, &dir.path().join("diagnose"));
    assert!(dir.path().join("diagnose/hessian_norms.csv").exists());

    let mut c = base;
    c.kind = ExperimentKind::BiasStudy;
    c.data.n_test = 5;
    c.bias.samplers = vec![SamplerKind::SmsUbu, SamplerKind::SgUbu];
    c.bias.levels = 3;
    c.bias.base_epochs = 20.0;
    c.bias.test_functions = 5;
    c.model.prior_variance = 1.0;
    let r = run_into(c, &dir.path().join("bias"));
    assert!(r.iter().any(|(k, _)| k == "h0"));
    let manifest = fs::read_to_string(dir.path().join("bias/manifest.toml")).unwrap();
    assert!(manifest.contains("content_hash"));
    assert!(manifest.contains("bias.levels"));
}

#[test]
fn model_dimensions_follow_the_data() {
    let cfg = small_pipeline();
    let data = load_data(&cfg.data, 2).unwrap();
    let m = build_model(&cfg, &data).unwrap();
    assert_eq!(m.num_terms(), 60);
    assert_eq!(m.dim(), cfg.data.classes * (cfg.data.features + 1));
}
