//! End-to-end runner behavior: CSV shapes, file-format pipelines, sweep
//! plumbing and the documented error cases.

use std::fs;
use std::io::Write as _;

use cause_core::error::CauseError;
use cause_core::experiment::{
    parse_config, run_experiment, run_injection_sweep, run_sweep, ConfigOverlay, ExperimentConfig,
};
use cause_core::ingest::{
    gen_synthetic, read_split_manifest, write_split_manifest, SplitMeta, SyntheticConfig,
};
use cause_core::metrics::CSV_HEADER;
use cause_core::model_io::{load_model, VariantTag};

fn small_synth_overlay(dir: &std::path::Path) -> ConfigOverlay {
    let mut overlay = ConfigOverlay::default();
    for (key, value) in [
        ("dataset", "synthetic"),
        ("synth_users", "30"),
        ("synth_items", "15"),
        ("synth_events_per_user", "40"),
        ("dim", "4"),
        ("epochs", "3"),
        ("seed", "9"),
    ] {
        overlay.set(key, value).unwrap();
    }
    overlay.set("output_dir", dir.to_str().unwrap()).unwrap();
    overlay
}

#[test]
fn run_writes_model_and_csv_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut overlay = small_synth_overlay(dir.path());
    overlay.set("method", "sp2v-blend").unwrap();
    let config = ExperimentConfig::resolve(overlay).unwrap();
    let outcome = run_experiment(&config).unwrap();

    assert!(outcome.model_path.exists());
    let (emb, tag) = load_model(&outcome.model_path).unwrap();
    assert_eq!(tag, VariantTag::Sp2v);
    assert!(emb.all_finite());

    let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), CSV_HEADER);
    assert_eq!(lines.next().unwrap(), outcome.csv_row);
    assert!(outcome.report.mse.is_some());
    assert!(outcome.report.nll.is_some());
    assert!(outcome.validation_report.is_some());
}

#[test]
fn ranking_method_reports_auc_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut overlay = small_synth_overlay(dir.path());
    overlay.set("method", "bpr-blend").unwrap();
    let config = ExperimentConfig::resolve(overlay).unwrap();
    let outcome = run_experiment(&config).unwrap();

    assert!(outcome.report.mse.is_none());
    assert!(outcome.report.nll.is_none());
    assert!(outcome.report.auc > 0.0 && outcome.report.auc < 1.0);
    let fields: Vec<&str> = outcome.csv_row.split(',').collect();
    assert_eq!(fields[5], "");
    assert_eq!(fields[6], "");
    assert_eq!(fields[7], "");
    assert_eq!(fields[8], "");
    assert!(!fields[9].is_empty());
}

#[test]
fn ratings_file_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let data_path = dir.path().join("ratings.dat");
    let mut file = fs::File::create(&data_path).unwrap();
    // 40 users x 25 items grid with deterministic pseudo-ratings.
    for u in 0..40usize {
        for i in 0..25usize {
            if (u * 7 + i * 3) % 5 == 0 {
                continue;
            }
            let rating = 1 + (u * 13 + i * 11) % 5;
            writeln!(file, "u{u}::m{i}::{rating}::{}", 1000 + u * 100 + i).unwrap();
        }
    }

    let mut overlay = ConfigOverlay::default();
    overlay.set("dataset", data_path.to_str().unwrap()).unwrap();
    overlay.set("format", "double_colon").unwrap();
    overlay.set("method", "sp2v-blend").unwrap();
    overlay.set("dim", "4").unwrap();
    overlay.set("epochs", "3").unwrap();
    overlay.set("seed", "3").unwrap();
    overlay.set("s_t_injection", "0.2").unwrap();
    overlay
        .set("output_dir", dir.path().join("runs").to_str().unwrap())
        .unwrap();
    let config = ExperimentConfig::resolve(overlay).unwrap();
    assert_eq!(config.dataset_name, "ratings");
    let outcome = run_experiment(&config).unwrap();
    assert!(outcome.report.n_events > 0);
    assert!(outcome.report.avg_cr > 0.0 && outcome.report.avg_cr < 1.0);
}

#[test]
fn manifest_round_trip_through_runner() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SyntheticConfig {
        num_users: 25,
        num_items: 12,
        events_per_user: 40,
        seed: 5,
        ..SyntheticConfig::default()
    };
    let (split, _) = gen_synthetic(&cfg).unwrap();
    let manifest_path = dir.path().join("bench.split");
    let meta = SplitMeta {
        seed: 5,
        fractions: cfg.fractions,
        s_t_injection: cfg.s_t_injection,
    };
    write_split_manifest(&manifest_path, &split, &meta).unwrap();
    assert_eq!(read_split_manifest(&manifest_path).unwrap(), split);

    let mut overlay = ConfigOverlay::default();
    overlay
        .set("manifest", manifest_path.to_str().unwrap())
        .unwrap();
    overlay.set("method", "wsp2v-blend").unwrap();
    overlay.set("dim", "4").unwrap();
    overlay.set("epochs", "2").unwrap();
    overlay.set("lr_start", "0.002").unwrap();
    overlay.set("lr_end", "0.0002").unwrap();
    overlay.set("normalize_weights", "true").unwrap();
    overlay
        .set(
            "export_propensities",
            dir.path().join("propensities.txt").to_str().unwrap(),
        )
        .unwrap();
    overlay
        .set("output_dir", dir.path().join("runs").to_str().unwrap())
        .unwrap();
    let config = ExperimentConfig::resolve(overlay).unwrap();
    let outcome = run_experiment(&config).unwrap();
    assert_eq!(outcome.report.dataset, "bench");

    // Exported propensities: one positive probability per line, summing to 1.
    let text = fs::read_to_string(dir.path().join("propensities.txt")).unwrap();
    let probs: Vec<f64> = text.lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(probs.len(), 12);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!(probs.iter().all(|p| *p > 0.0));
}

#[test]
fn sweep_summarizes_each_method() {
    let dir = tempfile::tempdir().unwrap();
    let mut overlay = small_synth_overlay(dir.path());
    overlay.set("methods", "sp2v-no,bpr-blend").unwrap();
    overlay.set("num_seeds", "2").unwrap();
    let config = ExperimentConfig::resolve(overlay).unwrap();
    let outcome = run_sweep(&config).unwrap();

    assert_eq!(outcome.reports.len(), 4);
    assert_eq!(outcome.summaries.len(), 2);
    assert_eq!(outcome.summaries[0].method, "sp2v-no");
    assert!(outcome.summaries[0].mse_lift_mean.is_some());
    assert_eq!(outcome.summaries[1].method, "bpr-blend");
    assert!(outcome.summaries[1].mse_lift_mean.is_none());
    let summary = fs::read_to_string(outcome.summary_path).unwrap();
    assert_eq!(summary.lines().count(), 3);
}

#[test]
fn injection_sweep_row_count_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let mut overlay = small_synth_overlay(dir.path());
    overlay.set("methods", "sp2v-blend,cause-prod-c").unwrap();
    overlay.set("num_seeds", "1").unwrap();
    let config = ExperimentConfig::resolve(overlay).unwrap();

    let outcome = run_injection_sweep(&config, &[0.05, 0.2]).unwrap();
    assert_eq!(outcome.rows.len(), 4); // fractions x methods
    let csv = fs::read_to_string(outcome.csv_path).unwrap();
    assert_eq!(csv.lines().count(), 5);

    assert!(run_injection_sweep(&config, &[]).is_err());
    assert!(run_injection_sweep(&config, &[0.2, 0.1]).is_err());
    assert!(run_injection_sweep(&config, &[0.2, 0.6]).is_err());

    // Ranking-only methods carry no MSE lift.
    let mut overlay = small_synth_overlay(dir.path());
    overlay.set("methods", "bpr-blend").unwrap();
    let config = ExperimentConfig::resolve(overlay).unwrap();
    assert!(run_injection_sweep(&config, &[0.05, 0.2]).is_err());
}

#[test]
fn zero_injection_breaks_test_adaptation() {
    let dir = tempfile::tempdir().unwrap();
    let mut overlay = small_synth_overlay(dir.path());
    overlay.set("method", "sp2v-test").unwrap();
    overlay.set("s_t_injection", "0").unwrap();
    let config = ExperimentConfig::resolve(overlay).unwrap();
    let err = run_experiment(&config).unwrap_err();
    assert!(
        matches!(err.root(), CauseError::Data(_)),
        "expected a data error, got {err}"
    );
    assert!(err.to_string().contains("train"), "missing stage label: {err}");
}

#[test]
fn config_file_drives_a_full_run() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("exp.conf");
    fs::write(
        &config_path,
        format!(
            "# desk benchmark\ndataset=synthetic\nsynth_users=30\nsynth_items=15\n\
             synth_events_per_user=40\nmethod=cause-avg\ndim=4\nepochs=3\nseed=12\n\
             output_dir={}\n",
            dir.path().join("runs").display()
        ),
    )
    .unwrap();
    let config = parse_config(&config_path).unwrap();
    let outcome = run_experiment(&config).unwrap();
    let (emb, tag) = load_model(&outcome.model_path).unwrap();
    assert_eq!(tag, VariantTag::Avg);
    // The pooled treatment matrix has identical rows.
    let first = emb.theta_t.row(0).to_vec();
    for j in 1..emb.theta_t.rows() {
        assert_eq!(emb.theta_t.row(j), &first[..]);
    }
}
