//! Binary-level tests: exit codes, the manifest pipeline and run-to-run
//! determinism of produced files.

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::process::{Command, Output};

fn cause(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cause"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn assert_exit(output: &Output, code: i32) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

const TINY_SYNTH: &[&str] = &[
    "synth",
    "--users",
    "20",
    "--items",
    "10",
    "--events-per-user",
    "30",
    "--seed",
    "3",
    "--out",
    "bench.split",
];

#[test]
fn synth_train_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    assert_exit(&cause(TINY_SYNTH, dir.path()), 0);
    assert!(dir.path().join("bench.split").exists());
    assert!(dir.path().join("bench.split.meta").exists());

    let train = cause(
        &[
            "train",
            "--manifest",
            "bench.split",
            "--method",
            "sp2v-blend",
            "--dim",
            "4",
            "--epochs",
            "2",
            "--seed",
            "5",
            "--output-dir",
            "runs",
        ],
        dir.path(),
    );
    assert_exit(&train, 0);
    let model = dir.path().join("runs/sp2v-blend-seed5.model");
    assert!(model.exists());
    assert!(dir.path().join("runs/results.csv").exists());

    let eval = cause(
        &[
            "eval",
            "--model",
            "runs/sp2v-blend-seed5.model",
            "--manifest",
            "bench.split",
            "--output-dir",
            "runs",
        ],
        dir.path(),
    );
    assert_exit(&eval, 0);
    // Train and eval agree on the test metrics for the same model.
    let train_out = String::from_utf8_lossy(&train.stdout).to_string();
    let eval_out = String::from_utf8_lossy(&eval.stdout).to_string();
    let metrics = |s: &str| {
        s.lines()
            .find(|l| l.starts_with("test"))
            .and_then(|l| l.split_once(':').map(|(_, m)| m.to_string()))
            .unwrap()
    };
    assert_eq!(metrics(&train_out), metrics(&eval_out));
}

#[test]
fn repeated_runs_write_identical_models() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "train",
        "--dataset",
        "synthetic",
        "--synth-users",
        "20",
        "--synth-items",
        "10",
        "--synth-events-per-user",
        "30",
        "--method",
        "cause-prod-c",
        "--dim",
        "4",
        "--epochs",
        "2",
        "--seed",
        "11",
    ];
    let mut a = args.to_vec();
    a.extend(["--output-dir", "runs_a"]);
    let mut b = args.to_vec();
    b.extend(["--output-dir", "runs_b"]);
    assert_exit(&cause(&a, dir.path()), 0);
    assert_exit(&cause(&b, dir.path()), 0);

    let bytes_a = fs::read(dir.path().join("runs_a/cause-prod-c-seed11.model")).unwrap();
    let bytes_b = fs::read(dir.path().join("runs_b/cause-prod-c-seed11.model")).unwrap();
    assert_eq!(bytes_a, bytes_b);
    let csv_a = fs::read_to_string(dir.path().join("runs_a/results.csv")).unwrap();
    let csv_b = fs::read_to_string(dir.path().join("runs_b/results.csv")).unwrap();
    assert_eq!(csv_a, csv_b);
}

#[test]
fn skew_pipeline_from_rating_log() {
    let dir = tempfile::tempdir().unwrap();
    let mut file = fs::File::create(dir.path().join("ratings.dat")).unwrap();
    for u in 0..30usize {
        for i in 0..12usize {
            if (u + i) % 4 == 0 {
                continue;
            }
            let rating = 1 + (u * 7 + i * 5) % 5;
            writeln!(file, "u{u}::m{i}::{rating}::{}", 500 + u * 50 + i).unwrap();
        }
    }
    drop(file);

    let skew = cause(
        &[
            "skew",
            "--input",
            "ratings.dat",
            "--format",
            "double_colon",
            "--seed",
            "2",
            "--injection",
            "0.2",
            "--out",
            "ml.split",
        ],
        dir.path(),
    );
    assert_exit(&skew, 0);

    let train = cause(
        &[
            "train",
            "--manifest",
            "ml.split",
            "--method",
            "cause-prod-c",
            "--dim",
            "4",
            "--epochs",
            "2",
            "--seed",
            "2",
            "--output-dir",
            "runs",
        ],
        dir.path(),
    );
    assert_exit(&train, 0);
}

#[test]
fn config_error_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = cause(&["train", "--method", "banditnet"], dir.path());
    assert_exit(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("unsupported method"));

    // Unknown config key in a file.
    fs::write(dir.path().join("bad.conf"), "learning_rate=0.1\n").unwrap();
    let out = cause(&["train", "--config", "bad.conf"], dir.path());
    assert_exit(&out, 2);
}

#[test]
fn data_error_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = cause(
        &["train", "--dataset", "no-such-file.dat", "--epochs", "1"],
        dir.path(),
    );
    assert_exit(&out, 3);

    let out = cause(
        &["eval", "--model", "missing.model", "--manifest", "missing.split"],
        dir.path(),
    );
    assert_exit(&out, 3);
}

#[test]
fn divergence_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = cause(
        &[
            "train",
            "--dataset",
            "synthetic",
            "--synth-users",
            "20",
            "--synth-items",
            "10",
            "--synth-events-per-user",
            "30",
            "--dim",
            "4",
            "--epochs",
            "1",
            "--lr-start",
            "1e9",
            "--lr-end",
            "1e9",
        ],
        dir.path(),
    );
    assert_exit(&out, 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("divergence"));
}

#[test]
fn inject_sweep_writes_plot_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = cause(
        &[
            "inject-sweep",
            "--dataset",
            "synthetic",
            "--synth-users",
            "20",
            "--synth-items",
            "10",
            "--synth-events-per-user",
            "30",
            "--method",
            "sp2v-blend",
            "--dim",
            "4",
            "--epochs",
            "2",
            "--num-seeds",
            "2",
            "--fractions",
            "0.05,0.2",
            "--output-dir",
            "runs",
        ],
        dir.path(),
    );
    assert_exit(&out, 0);
    let csv = fs::read_to_string(dir.path().join("runs/injection_sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3); // header + fractions x methods
}

#[test]
fn sweep_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("exp.conf"),
        "dataset=synthetic\nsynth_users=20\nsynth_items=10\nsynth_events_per_user=30\n\
         methods=sp2v-no,sp2v-blend\nnum_seeds=2\ndim=4\nepochs=2\noutput_dir=runs\n",
    )
    .unwrap();
    let out = cause(&["sweep", "--config", "exp.conf"], dir.path());
    assert_exit(&out, 0);
    let summary = fs::read_to_string(dir.path().join("runs/sweep_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    // Flags win over the config file: restrict to one method.
    let out = cause(
        &["sweep", "--config", "exp.conf", "--methods", "sp2v-no", "--output-dir", "runs2"],
        dir.path(),
    );
    assert_exit(&out, 0);
    let summary = fs::read_to_string(dir.path().join("runs2/sweep_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
}
