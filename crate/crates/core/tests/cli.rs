//! The command line tool: outputs and exit codes.

use std::process::Command;

fn predtrig(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_predtrig"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
    )
}

#[test]
fn bandwidth_prints_budget() {
    let (code, text) = predtrig(&["bandwidth", "--m-a", "18", "--mode", "predictive"]);
    assert_eq!(code, 0);
    assert!(text.contains("M_C = 2 aggregate = 5 bytes"), "{text}");
    let (code, text) = predtrig(&["bandwidth", "--m-a", "10", "--mode", "periodic"]);
    assert_eq!(code, 0);
    assert!(text.contains("M_C = 11"), "{text}");
}

#[test]
fn usage_and_config_errors_exit_1() {
    assert_eq!(predtrig(&["bandwidth"]).0, 1);
    assert_eq!(predtrig(&["no-such-command"]).0, 1);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "schema_version = 99\n").unwrap();
    assert_eq!(predtrig(&["run", "-c", bad.to_str().unwrap()]).0, 1);
}

#[test]
fn run_recompute_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let gains = p("gains.txt");
    assert_eq!(predtrig(&["synthesize", "--rounds", "300", "-o", &gains]).0, 0);
    let run = |mode: &str, trace: &str, summary: &str| {
        predtrig(&[
            "run",
            "--rounds",
            "300",
            "--mode",
            mode,
            "--gains",
            &gains,
            "--trace",
            trace,
            "--summary",
            summary,
        ])
        .0
    };
    assert_eq!(run("predictive", &p("pred.csv"), &p("pred.json")), 0);
    assert_eq!(run("periodic", &p("per.csv"), &p("per.json")), 0);

    let audit = |trace: &str, summary: &str| {
        predtrig(&["recompute", "--rounds", "300", "--trace", trace, "--summary", summary])
    };
    let (code, text) = audit(&p("pred.csv"), &p("pred.json"));
    assert_eq!(code, 0, "{text}");
    // a summary from another run does not match
    let (code, text) = audit(&p("pred.csv"), &p("per.json"));
    assert_eq!(code, 3);
    assert!(text.contains("mismatch"));

    let pred = format!("predictive={}", p("pred.csv"));
    let per = format!("periodic={}", p("per.csv"));
    let (code, _) = predtrig(&["plot", "--trace", &pred, "--trace", &per, "-o", &p("figs")]);
    assert_eq!(code, 0);
    for f in ["cost.svg", "allocation.svg", "priorities.svg"] {
        assert!(dir.path().join("figs").join(f).exists());
    }
}

#[test]
fn verify_passes_undisturbed_and_flags_open_loop() {
    let (code, text) = predtrig(&["verify", "--no-disturbance", "--samples", "2000"]);
    assert_eq!(code, 0, "{text}");
    assert!(text.contains("verdict: PASS"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("open.toml");
    let reference = include_str!("../scenarios/reference.toml");
    std::fs::write(
        &cfg,
        reference.replacen("controller = \"lqr\"", "controller = \"open_loop\"", 1),
    )
    .unwrap();
    let (code, text) = predtrig(&[
        "verify",
        "-c",
        cfg.to_str().unwrap(),
        "--no-disturbance",
        "--samples",
        "2000",
    ]);
    assert_eq!(code, 3, "{text}");
    assert!(text.contains("UNBOUNDED"), "{text}");
}

#[test]
fn short_trace_has_no_boundedness_verdict() {
    let (code, text) = predtrig(&["verify", "--rounds", "200", "--no-disturbance", "--samples", "2000"]);
    assert_eq!(code, 0, "{text}");
    assert!(text.contains("msb: no verdict"));
}
