use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tabdp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tabdp")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_table(path: &Path, n: usize, offset: usize) {
    let mut s = String::from("age,hours,job,income\n");
    for i in offset..offset + n {
        let rich = i % 3 == 0;
        let age = 25.0 + (i * 7 % 40) as f64 + if rich { 10.0 } else { 0.0 };
        let hours = 30.0 + (i * 13 % 20) as f64;
        let job = ["clerk", "nurse", "pilot"][i * 5 % 3];
        writeln!(s, "{age},{hours},{job},{}", if rich { ">50K" } else { "<=50K" }).unwrap();
    }
    fs::write(path, s).unwrap();
}

#[test]
fn calibrate_prints_sigma() {
    let out = tabdp(&["calibrate", "--epsilon", "1", "--rows", "1000", "--batch-size", "100", "--epochs", "10"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout);
    let eps: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("epsilon = "))
        .expect("epsilon line")
        .parse()
        .unwrap();
    assert!(eps <= 1.0 && eps > 0.95, "{text}");
    assert!(text.contains("steps = 100"));
}

#[test]
fn calibrate_warns_on_loose_budget() {
    let out = tabdp(&["calibrate", "--epsilon", "1e6", "--rows", "1000"]);
    assert_eq!(code(&out), 0);
    assert!(stderr(&out).contains("warning"), "{}", stderr(&out));
}

#[test]
fn calibrate_rejects_bad_epsilon() {
    let out = tabdp(&["calibrate", "--epsilon=-1", "--rows", "1000"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn unreachable_budget_exits_3() {
    let out = tabdp(&["calibrate", "--epsilon", "1e-4", "--rows", "100", "--batch-size", "100", "--epochs", "1000"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn train_without_table_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = tabdp(&["train", "--output-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn conflicting_budget_keys_are_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[data]\ntrain = \"t.csv\"\n[privacy]\nepsilon = 1.0\nsigma = 2.0\n").unwrap();
    let out = tabdp(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn missing_table_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = tabdp(&["train", "--train", missing.to_str().unwrap(), "--numeric", "a"]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
}

#[test]
fn undeclared_column_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.csv");
    write_table(&train, 50, 0);
    let out = tabdp(&["fit-schema", "--train", train.to_str().unwrap(), "--numeric", "age,hours", "--label", "income"]);
    assert_ne!(code(&out), 0);
    assert!(stderr(&out).contains("job"), "{}", stderr(&out));
}

#[test]
fn train_generate_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    write_table(&dir.path().join("train.csv"), 300, 0);
    write_table(&dir.path().join("test.csv"), 150, 1000);
    let run = p("run");
    let common = [
        "--train", &p("train.csv"), "--numeric", "age,hours", "--categorical", "job", "--label", "income",
        "--output-dir", &run, "--hidden", "16", "--d-time", "8", "--steps", "20", "--batch-size", "32",
        "--epsilon", "5",
    ];

    let mut args = vec!["train"];
    args.extend(common);
    args.extend(["--epochs", "3", "--stop-after", "2"]);
    let out = tabdp(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let ckpt = format!("{run}/model.ckpt");
    let out = tabdp(&["train", "--resume", &ckpt]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("training complete"));
    let log = fs::read_to_string(format!("{run}/train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 4, "{log}");
    assert!(Path::new(&format!("{run}/schema.json")).exists());
    assert!(Path::new(&format!("{run}/config.toml")).exists());

    let synth = p("synth.csv");
    let out = tabdp(&["generate", "--checkpoint", &ckpt, "-n", "120", "--labels", "fixed:>50K", "--out", &synth]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let table = fs::read_to_string(&synth).unwrap();
    assert_eq!(table.lines().count(), 121);
    assert_eq!(table.lines().next().unwrap(), "age,hours,job,income");
    assert!(table.lines().skip(1).all(|l| l.ends_with(",>50K")));

    let out = tabdp(&["generate", "--checkpoint", &ckpt, "-n", "10", "--labels", "fixed:maybe", "--out", &synth]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    let out = tabdp(&["generate", "--checkpoint", &ckpt, "-n", "200", "--out", &synth]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let report = p("report");
    let out = tabdp(&[
        "evaluate", "--train", &p("train.csv"), "--synth", &synth, "--test", &p("test.csv"), "--schema",
        &format!("{run}/schema.json"), "--attacks", "50", "--out", &report,
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(format!("{report}/report.csv")).unwrap();
    for key in ["omega_total", "phi", "sor", "lr", "ir"] {
        assert!(csv.contains(key), "{key} missing from {csv}");
    }

    let out = tabdp(&[
        "evaluate", "--train", &p("train.csv"), "--synth", &synth, "--schema", &format!("{run}/schema.json"),
        "--families", "fidelity,bogus", "--out", &report,
    ]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));

    let mut args = vec!["diagnose"];
    args.extend(common);
    args.extend(["--rows", "64", "--t-grid", "1,10,20", "--out", &report]);
    let out = tabdp(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in ["grad_norms.csv", "signal.csv", "sampler_pmf.csv"] {
        assert!(Path::new(&format!("{report}/{f}")).exists(), "{f}");
    }
}
