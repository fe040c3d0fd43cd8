use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cmdp_core::envgen::EnvDocument;
use cmdp_core::harness::{aggregate, read_regret_csv, Summary};

fn cmdp(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmdp"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

const SMALL: &[&str] = &[
    "run",
    "--experiment",
    "custom",
    "--m",
    "2",
    "--n",
    "2",
    "--ds",
    "2",
    "--H",
    "3",
    "--K",
    "60",
    "--reps",
    "3",
    "--seed",
    "11",
];

fn small_run(dir: &Path, out: &str, jobs: &str) -> Vec<u8> {
    let mut args = SMALL.to_vec();
    args.extend(["--out", out, "--jobs", jobs]);
    ok(&cmdp(&args, dir));
    fs::read(dir.join(out).join("regret.csv")).unwrap()
}

#[test]
fn regret_table_is_identical_across_invocations_and_widths() {
    let dir = tempfile::tempdir().unwrap();
    let a = small_run(dir.path(), "a", "1");
    let b = small_run(dir.path(), "b", "1");
    let c = small_run(dir.path(), "c", "8");
    assert_eq!(a, b);
    assert_eq!(a, c);
    // Overwriting an existing output directory gives the same bytes.
    assert_eq!(small_run(dir.path(), "a", "2"), a);
    for name in ["summary.json", "plot.svg"] {
        assert!(dir.path().join("a").join(name).is_file());
    }
}

#[test]
fn summary_matches_the_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = small_run(dir.path(), "o", "2");
    let (experiment, records) = read_regret_csv(csv.as_slice()).unwrap();
    assert_eq!(experiment.as_deref(), Some("custom"));
    assert_eq!(records.len(), 4 * 3);
    let summary: Summary =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o/summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary.schema, 1);
    assert_eq!(summary.config.episodes, 60);
    assert_eq!(summary.runs.len(), 12);
    assert_eq!(aggregate(&records).unwrap(), summary.series);
}

#[test]
fn config_file_overlays_the_preset() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("exp.toml"),
        "experiment = \"exp2\"\nepisodes = 10\nreps = 1\nalgos = [\"c-ucbvi\"]\n\
         [sweep]\naxis = \"m\"\nvalues = [2, 3]\n",
    )
    .unwrap();
    ok(&cmdp(
        &["run", "--config", "exp.toml", "--H", "1", "--out", "o"],
        dir.path(),
    ));
    let summary: Summary =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o/summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary.config.horizon, 1);
    assert_eq!(summary.config.n, 3);
    assert_eq!(summary.final_regret.len(), 2);
}

#[test]
fn scale_divides_the_budget() {
    let dir = tempfile::tempdir().unwrap();
    let out = cmdp(
        &[
            "run",
            "--experiment",
            "exp1",
            "--H",
            "1",
            "--ds",
            "1",
            "--n",
            "1",
            "--m",
            "2",
            "--scale",
            "500",
            "--algos",
            "ucbvi",
            "--out",
            "o",
        ],
        dir.path(),
    );
    ok(&out);
    let summary: Summary =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o/summary.json")).unwrap())
            .unwrap();
    assert_eq!((summary.config.episodes, summary.config.reps), (10, 1));
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["run", "--experiment", "exp2", "--algos", "lsvi-ucb"][..],
        &["run", "--experiment", "exp9"][..],
        &["run", "--reps", "0"][..],
        &["run", "--config", "missing.toml"][..],
    ] {
        let out = cmdp(args, dir.path());
        assert!(!out.status.success(), "{args:?} should fail");
        assert!(!String::from_utf8_lossy(&out.stderr).contains("panicked"));
    }
}

#[test]
fn gen_env_writes_a_readable_fixture() {
    let dir = tempfile::tempdir().unwrap();
    ok(&cmdp(
        &[
            "gen-env", "--m", "3", "--n", "2", "--ds", "2", "--seed", "4", "--out", "env.json",
        ],
        dir.path(),
    ));
    let doc = EnvDocument::read(&dir.path().join("env.json")).unwrap();
    let out = cmdp(
        &[
            "gen-env", "--m", "3", "--n", "2", "--ds", "2", "--seed", "4",
        ],
        dir.path(),
    );
    ok(&out);
    let from_stdout = EnvDocument::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(doc, from_stdout);

    let out = cmdp(&["gen-env", "--linear", "--d", "3"], dir.path());
    ok(&out);
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .contains("causal-linear"));
}

#[test]
fn verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = cmdp(&["verify"], dir.path());
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 6);
    assert!(!text.contains("FAIL"));
}
