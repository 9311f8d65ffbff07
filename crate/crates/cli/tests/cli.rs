use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_olle");

fn olle(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A small synthetic corpus: 24 countries of 1500 users.
fn corpus(dir: &Path, seed: &str) -> PathBuf {
    let out = dir.join(format!("synth-{seed}"));
    let o = olle(&[
        "synth",
        "--countries",
        "24",
        "--users",
        "1500",
        "--seed",
        seed,
        "-o",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

fn header_line(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string()
}

#[test]
fn synth_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = corpus(dir.path(), "4");
    let b = dir.path().join("again");
    std::fs::create_dir_all(&b).unwrap();
    let o = olle(&[
        "synth",
        "--countries",
        "24",
        "--users",
        "1500",
        "--seed",
        "4",
        "-o",
        s(&b),
    ]);
    assert!(o.status.success());
    for f in [
        "posts.jsonl",
        "benchmark.csv",
        "truth.json",
        "lexicons/en.txt",
    ] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let c = corpus(dir.path(), "5");
    assert_ne!(
        std::fs::read(a.join("posts.jsonl")).unwrap(),
        std::fs::read(c.join("posts.jsonl")).unwrap()
    );
    let h = header_line(&a.join("posts.jsonl"));
    assert!(
        h.starts_with("# olle ") && h.contains("command=synth") && h.ends_with("seed=4"),
        "{h}"
    );
}

#[test]
fn pipeline_runs_end_to_end_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let syn = corpus(dir.path(), "7");
    let cfg = syn.join("olle.toml");
    let results = syn.join("results");

    let o = olle(&["detect-loff", "-c", s(&cfg), "--languages", "en"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ranges: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(results.join("loff_ranges.json")).unwrap())
            .unwrap();
    assert_eq!(ranges["header"]["command"], "detect-loff");
    assert_eq!(ranges["languages"][0]["status"], "ok");
    assert!(results.join("curves/en.csv").exists());

    // the generator's band stands in for detection on synthetic text
    let truth = syn.join("true_ranges.json");
    let est_args = [
        "estimate",
        "-c",
        s(&cfg),
        "--ranges",
        s(&truth),
        "--replicates",
        "100",
    ];
    let o = olle(&est_args);
    assert!(o.status.success(), "{}", stderr(&o));
    let first = std::fs::read(results.join("estimate.json")).unwrap();
    let olle_csv = std::fs::read(results.join("olle.csv")).unwrap();
    let o = olle(&[&["--jobs", "3"][..], &est_args[..]].concat());
    assert!(o.status.success());
    assert_eq!(std::fs::read(results.join("estimate.json")).unwrap(), first);
    assert_eq!(std::fs::read(results.join("olle.csv")).unwrap(), olle_csv);

    let est: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(est["header"]["seed"], 7);
    let rho = est["calibration"]["metrics"]["rho"].as_f64().unwrap();
    assert!(rho > 0.7, "OOS rho {rho}");
    let countries = std::fs::read_to_string(results.join("countries.csv")).unwrap();
    assert_eq!(countries.lines().count(), 2 + 24);

    let o = olle(&[
        "gaps",
        "-c",
        s(&cfg),
        "--ranges",
        s(&truth),
        "--replicates",
        "50",
        "--min-group-size",
        "300",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let gaps = std::fs::read_to_string(results.join("gender_gap.csv")).unwrap();
    assert!(gaps
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("country,language,raw_gap"));
    assert!(gaps.lines().count() > 2);
    assert!(header_line(&results.join("regional_disparity.csv")).contains("command=gaps"));

    let tex = dir.path().join("cal.tex");
    let o = olle(&[
        "report",
        "--estimate",
        s(&results.join("estimate.json")),
        "-o",
        s(&tex),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&tex).unwrap();
    assert!(text.starts_with("% olle "));
    assert!(text.contains(" est. literacy & ") && text.contains("OOS correlation $\\rho$"));
}

#[test]
fn regressions_and_weights() {
    let dir = tempfile::tempdir().unwrap();
    let syn = corpus(dir.path(), "9");
    let cfg = syn.join("olle.toml");
    let truth = syn.join("true_ranges.json");
    let o = olle(&[
        "estimate",
        "-c",
        s(&cfg),
        "--ranges",
        s(&truth),
        "--replicates",
        "50",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let bench = std::fs::read_to_string(syn.join("benchmark.csv")).unwrap();
    let countries: Vec<&str> = bench
        .lines()
        .skip(2)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    let mut cov = String::from("country,civic,internet\n");
    let mut weights = String::from("country,weight\n");
    for (i, c) in countries.iter().enumerate() {
        cov.push_str(&format!(
            "{c},{},{}\n",
            (i * 7 % 11) as f64 / 10.0,
            0.2 + (i * 5 % 13) as f64 / 20.0
        ));
        weights.push_str(&format!("{c},{}\n", i + 1));
    }
    std::fs::write(dir.path().join("cov.csv"), cov).unwrap();
    std::fs::write(dir.path().join("w.csv"), weights).unwrap();
    let good = r#"[{"name": "m1", "dv": "gender_gap", "ivs": ["civic", "internet"], "interactions": [["civic", "internet"]]}]"#;
    std::fs::write(dir.path().join("good.json"), good).unwrap();
    let bad = r#"[{"name": "m2", "dv": "gender_gap", "ivs": ["civics"]}]"#;
    std::fs::write(dir.path().join("bad.json"), bad).unwrap();

    let run = |spec: &str| {
        olle(&[
            "gaps",
            "-c",
            s(&cfg),
            "--ranges",
            s(&truth),
            "--replicates",
            "50",
            "--min-group-size",
            "300",
            "--covariates",
            s(&dir.path().join("cov.csv")),
            "--regressions",
            s(&dir.path().join(spec)),
            "--population-weights",
            s(&dir.path().join("w.csv")),
        ])
    };
    let o = run("bad.json");
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("bad.json") && err.contains("civics"), "{err}");

    let o = run("good.json");
    assert!(o.status.success(), "{}", stderr(&o));
    let results = syn.join("results");
    let reg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(results.join("regression_m1.json")).unwrap())
            .unwrap();
    assert_eq!(reg["n"], 24);
    assert!(results.join("marginal_m1_civic_by_internet.csv").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(results.join("gaps_summary.json")).unwrap())
            .unwrap();
    assert!(summary["weighted_z_gap"].is_number());
    assert_eq!(summary["unweighted_countries"].as_array().unwrap().len(), 0);

    let o = olle(&[
        "report",
        "--regression",
        s(&results.join("regression_m1.json")),
    ]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("(civic):(internet)"));
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let syn = corpus(dir.path(), "2");
    let cfg = syn.join("olle.toml");
    let truth = syn.join("true_ranges.json");

    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let o = olle(&["detect-loff", "-c", s(&cfg), "--posts", s(&empty)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no users"));

    let o = olle(&[
        "estimate",
        "-c",
        s(&cfg),
        "--ranges",
        s(&truth),
        "--min-group-size",
        "1000000",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).contains("every group is suppressed (24 suppressed groups"),
        "{}",
        stderr(&o)
    );

    let o = olle(&[
        "estimate",
        "-c",
        s(&cfg),
        "--ranges",
        s(&truth),
        "--benchmark",
        "/no/such.csv",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = olle(&["estimate", "-c", s(&cfg), "--sensitivity", "-1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = olle(&["estimate", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));

    // gaps with nothing releasable: header-only files and success
    let o = olle(&[
        "estimate",
        "-c",
        s(&cfg),
        "--ranges",
        s(&truth),
        "--replicates",
        "20",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = olle(&[
        "gaps",
        "-c",
        s(&cfg),
        "--ranges",
        s(&truth),
        "--min-group-size",
        "1000000",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("warning"));
    let gaps = std::fs::read_to_string(syn.join("results/gender_gap.csv")).unwrap();
    assert_eq!(gaps.lines().count(), 2);
}

#[test]
fn report_renders_a_table_description() {
    let dir = tempfile::tempdir().unwrap();
    let spec = r#"{"dv_label": "y", "models": [{"label": "(a)", "coefficients": [
        {"name": "x", "estimate": 0.5, "ci_low": 0.1, "ci_high": 0.9, "p_value": 0.02},
        {"name": "(Intercept)", "estimate": -1.0, "ci_low": -2.0, "ci_high": 0.0, "p_value": 0.2}],
        "n": 40, "r_squared": 0.3, "adj_r_squared": 0.28, "aic": 10.0, "bic": 12.0, "residual_se": 1.0,
        "df_resid": 38, "f_statistic": 5.0, "f_df": [1, 38], "f_p_value": 0.03}]}"#;
    let p = dir.path().join("t.json");
    std::fs::write(&p, spec).unwrap();
    let o = olle(&["report", "--table", s(&p)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(
        text.contains(" est. literacy & 0.50$^{**}$ (0.10, 0.90) \\\\"),
        "{text}"
    );
    assert!(text.contains(" Constant & $-$1.00 ($-$2.00, 0.00) \\\\"));
    assert_eq!(olle(&["report"]).status.code(), Some(2));
}
