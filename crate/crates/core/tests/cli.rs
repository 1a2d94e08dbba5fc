use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_recovery-diffusion"));
    c.env_remove("RECOVERY_DIFFUSION_THREADS");
    c
}

fn run(out: &Path, args: &[&str]) -> Output {
    bin().arg("-o").arg(out).args(args).output().unwrap()
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = run(out, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn synth(dir: &Path, n: &str, seed: &str) {
    ok(
        dir,
        &[
            "synth", "--n", n, "--seed", seed, "--seed-fraction", "0.1", "--threshold-low", "0.4",
            "--threshold-high", "1.0", "--allow-incomplete",
        ],
    );
}

#[test]
fn ga_multipliers_match_brute_force_on_small_graph() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    for seed in ["1", "2", "5"] {
        let inst = d.join(format!("inst{seed}"));
        synth(&inst, "12", seed);
        let common = |sub: &str| {
            vec![
                "multipliers".to_string(),
                "--edges".into(),
                inst.join("edges.csv").to_str().unwrap().into(),
                "--nodes".into(),
                inst.join("nodes.csv").to_str().unwrap().into(),
                "--thresholds".into(),
                inst.join("planted_thresholds.csv").to_str().unwrap().into(),
                "--N".into(),
                "3".into(),
                "-o".into(),
                inst.join(sub).to_str().unwrap().into(),
            ]
        };
        let mut ga = common("ga");
        ga.extend(["--max-iterations", "300", "--seed", "4"].map(String::from));
        let mut bf = common("bf");
        bf.push("--brute-force".into());
        for args in [&ga, &bf] {
            let o = bin().args(args).output().unwrap();
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        }
        let a = json(&inst.join("ga/multipliers.json"));
        let b = json(&inst.join("bf/multipliers.json"));
        assert_eq!(a[0]["recovered_with"], b[0]["recovered_with"], "instance {seed}");
        assert_eq!(a[0]["recovered_without"], b[0]["recovered_without"]);
        let selection = fs::read_to_string(inst.join("ga/multipliers_N3.csv")).unwrap();
        assert_eq!(selection.lines().filter(|l| l.ends_with(",true")).count(), 3);
    }
}

#[test]
fn build_graph_reports_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    synth(&d.join("inst"), "9", "0");
    let stdout = ok(
        &d.join("g"),
        &["build-graph", "--geometry", d.join("inst/units.geojson").to_str().unwrap(), "--rule", "rook"],
    );
    // 3x3 grid: 12 shared sides
    assert!(stdout.contains("n = 9"), "{stdout}");
    assert!(stdout.contains("m = 12"), "{stdout}");
    let edges = fs::read_to_string(d.join("g/edges.csv")).unwrap();
    assert_eq!(edges.lines().count(), 13);
    let manifest = json(&d.join("g/build-graph.manifest.json"));
    assert_eq!(manifest["command"], "build-graph");
}

#[test]
fn durations_from_daily_visits() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let mut csv = String::from("id,day,visits\n");
    for day in 0..120 {
        // a: closed for two weeks after day 7, b never returns
        let a = if (7..21).contains(&day) { 0 } else { 100 };
        let b = if day < 7 { 100 } else { 10 };
        csv.push_str(&format!("a,{day},{a}\nb,{day},{b}\n"));
    }
    let visits = d.join("visits.csv");
    fs::write(&visits, csv).unwrap();
    ok(
        d,
        &[
            "durations", "--visits", visits.to_str().unwrap(), "--baseline-start", "0", "--baseline-end", "6",
            "--recovery-start", "7", "--ma-halfwidth", "0",
        ],
    );
    let out = fs::read_to_string(d.join("durations.csv")).unwrap();
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows[0], "id,duration_weeks");
    assert_eq!(rows[1], "a,2.0");
    assert_eq!(rows[2], "b,14.0");
}

#[test]
fn exit_codes_by_failure_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();

    let o = bin().args(["build-graph", "--no-such-flag"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));

    let config = d.join("bad.toml");
    fs::write(&config, "horizon = 14\nnot_a_key = 1\n").unwrap();
    let o = run(d, &["--config", config.to_str().unwrap(), "build-graph", "--edges", "x.csv"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));

    let o = run(d, &["build-graph", "--edges", d.join("missing.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));

    let edges = d.join("loop.csv");
    fs::write(&edges, "src,dst\na,a\n").unwrap();
    let o = run(d, &["build-graph", "--edges", edges.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("self-loop"));

    let o = bin().arg("--version").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
}
