use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use crowdmi_core::{MetricsSeries, RunResult, Scenario};

fn crowdmi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crowdmi"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Bundled station scenario cut down to `max_time_s` seconds.
fn short_station(dir: &Path, name: &str, max_time_s: f64) -> PathBuf {
    let mut s = Scenario::bundled(name).unwrap();
    s.max_time_s = max_time_s;
    let path = dir.join(format!("{name}.json"));
    fs::write(&path, s.to_json_pretty()).unwrap();
    path
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn validate_bundled_and_broken() {
    let o = crowdmi(&["validate", "station_realistic"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("OK"));

    let dir = tempfile::tempdir().unwrap();
    let mut text = Scenario::bundled("station_idealised").unwrap().to_json_pretty();
    text = text.replacen("\"population\": 450", "\"population\": 451", 1);
    let bad = dir.path().join("bad.json");
    fs::write(&bad, text).unwrap();
    let o = crowdmi(&["validate", p(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("population"), "{}", stderr(&o));

    let o = crowdmi(&["validate", p(&dir.path().join("missing.json"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bad_flags_exit_1() {
    assert_eq!(crowdmi(&["run"]).status.code(), Some(1));
    assert_eq!(crowdmi(&["frobnicate"]).status.code(), Some(1));
    let o = crowdmi(&["run", "station_idealised", "--bins-x", "1"]);
    assert_eq!(o.status.code(), Some(1));
    let o = crowdmi(&["run", "station_idealised", "--sustain", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(crowdmi(&["--help"]).status.code(), Some(0));
}

#[test]
fn run_then_analyze_reproduces_series() {
    let dir = tempfile::tempdir().unwrap();
    let scen = short_station(dir.path(), "station_realistic", 12.0);
    let out = dir.path().join("out");
    let o = crowdmi(&["run", p(&scen), "--seed", "3", "--dump-trajectory", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("evacuation incomplete"));

    let stem = out.join("station_realistic_seed3");
    let series_csv = fs::read_to_string(stem.with_extension("series.csv")).unwrap();
    let run: RunResult = RunResult::from_json(&fs::read_to_string(stem.with_extension("run.json")).unwrap(), "run").unwrap();
    assert_eq!(run.seed, 3);
    assert_eq!(run.series.to_csv(), series_csv);
    assert_eq!(run.series.records.len(), 12);

    let rebuilt = out.join("rebuilt.csv");
    let o = crowdmi(&[
        "analyze",
        p(&stem.with_extension("trajectory.csv")),
        "--steps",
        p(&stem.with_extension("steps.csv")),
        "--scenario",
        p(&scen),
        "--out",
        p(&rebuilt),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&rebuilt).unwrap(), series_csv);

    // Without the sidecar the MI column still matches.
    let o = crowdmi(&[
        "analyze",
        p(&stem.with_extension("trajectory.csv")),
        "--scenario",
        p(&scen),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let partial = MetricsSeries::from_csv(&stdout(&o), "stdout").unwrap();
    assert_eq!(partial.mi_values(), run.series.mi_values());
}

#[test]
fn identical_argv_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let scen = short_station(dir.path(), "station_idealised", 4.0);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = crowdmi(&["run", p(&scen), "--bins-x", "16", "--bins-y", "16", "--out", p(out)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for name in ["station_idealised_seed1.series.csv", "station_idealised_seed1.run.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn trapped_population_exits_2_with_partial_results() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = Scenario::bundled("station_idealised").unwrap();
    s.max_time_s = 20.0;
    for id in ["main", "main_bar", "kitchen", "stage"] {
        s.events.push(serde_json::from_str(&format!(r#"{{ "time_s": 2.0, "action": {{ "close_exit": "{id}" }} }}"#)).unwrap());
    }
    let scen = dir.path().join("trap.json");
    fs::write(&scen, s.to_json_pretty()).unwrap();
    let out = dir.path().join("out");
    let o = crowdmi(&["run", p(&scen), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("trapped"), "{}", stderr(&o));
    let run = RunResult::from_json(&fs::read_to_string(out.join("station_idealised_seed1.run.json")).unwrap(), "run").unwrap();
    assert!(run.halt.is_some());
    assert!(run.series.records.len() >= 1);
}

#[test]
fn sweep_correlate_compare() {
    let dir = tempfile::tempdir().unwrap();
    let scen = short_station(dir.path(), "station_realistic", 6.0);
    let out = dir.path().join("sweep");
    let o = crowdmi(&["sweep", p(&scen), "--seeds", "1,2", "--jobs", "2", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = fs::read_to_string(out.join("station_realistic_sweep.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("1,incomplete,") && rows[2].starts_with("2,incomplete,"));

    // A sweep run matches the same seed run on its own.
    let single = dir.path().join("single");
    let o = crowdmi(&["run", p(&scen), "--seed", "2", "--out", p(&single)]);
    assert_eq!(o.status.code(), Some(0));
    let name = "station_realistic_seed2.run.json";
    assert_eq!(fs::read(out.join(name)).unwrap(), fs::read(single.join(name)).unwrap());

    let s1 = out.join("station_realistic_seed1.series.csv");
    let s2 = out.join("station_realistic_seed2.series.csv");
    let corr = dir.path().join("corr");
    let o = crowdmi(&["correlate", p(&s1), p(&s2), "--out", p(&corr)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("r = ") && text.contains("p = ") && text.contains("n = 12"), "{text}");
    let scatter = fs::read_to_string(corr.join("scatter.csv")).unwrap();
    assert_eq!(scatter.lines().count(), 13);
    assert!(scatter.starts_with("avg_force_N,mi_bits\n"));

    let r1 = out.join("station_realistic_seed1.run.json");
    let r2 = out.join("station_realistic_seed2.run.json");
    let cmp = dir.path().join("cmp.json");
    let o = crowdmi(&["compare", p(&r1), p(&r1), "--window", "0", "6", "--out", p(&cmp)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("b less ordered: false"));
    let o = crowdmi(&["compare", p(&r1), p(&r2), "--window", "0", "6"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = crowdmi(&["compare", p(&r1), p(&r2), "--window", "6", "0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn correlate_rejects_malformed_csv() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "t,x\n1,2\n").unwrap();
    let o = crowdmi(&["correlate", p(&bad), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
}
