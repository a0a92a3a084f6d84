use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crowdmi_core::analysis::{analyze_trajectory, detect_crush, TrajectoryWriter};
use crowdmi_core::stats::scatter_csv;
use crowdmi_core::{
    compare_runs, correlate_series, load_scenario, run_multi, DetectorConfig, Error, MetricsSeries,
    MiConfig, RunResult, Scenario, SfmParams,
};
use rayon::prelude::*;

use crate::args::{AnalyzeArgs, Cli, Command, CompareArgs, CorrelateArgs, RunArgs, SweepArgs};

/// A failed command: message for stderr plus the process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }

    fn halt(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_runtime_halt() {
            Failure::halt(e.to_string())
        } else {
            Failure::input(e.to_string())
        }
    }
}

type CmdResult = Result<(), Failure>;

pub fn dispatch(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Validate { scenario } => validate(&scenario),
        Command::Run(a) => run(a),
        Command::Analyze(a) => analyze(a),
        Command::Correlate(a) => correlate(a),
        Command::Compare(a) => compare(a),
        Command::Sweep(a) => sweep(a),
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::input(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> CmdResult {
    fs::write(path, contents).map_err(io_err(path))
}

fn read_file(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn ensure_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn load_params(path: Option<&Path>) -> Result<SfmParams, Failure> {
    Ok(match path {
        Some(p) => SfmParams::load(p)?,
        None => SfmParams::bundled(),
    })
}

fn check_configs(mi: &MiConfig, det: &DetectorConfig) -> CmdResult {
    mi.check()?;
    if !(det.mi_threshold_bits.is_finite() && det.mi_threshold_bits >= 0.0) {
        return Err(Failure::input("--mi-threshold must be a non-negative number of bits"));
    }
    if !(det.sustain_s.is_finite() && det.sustain_s > 0.0) {
        return Err(Failure::input("--sustain must be a positive number of seconds"));
    }
    Ok(())
}

fn validate(path: &Path) -> CmdResult {
    let s = load_scenario(path)?;
    println!("OK {s}");
    Ok(())
}

/// File stem shared by every output of one run.
fn run_stem(s: &Scenario) -> String {
    format!("{}_seed{}", s.id, s.rng_seed)
}

fn summary_line(r: &RunResult) -> String {
    let evac = match r.total_evac_time_s.seconds() {
        Some(t) => format!("{t:.2} s"),
        None => "incomplete".into(),
    };
    format!(
        "{} seed {}: evacuation {evac}, peak force {:.2} N at {} s, {} alarm(s)",
        r.scenario_id,
        r.seed,
        r.peak_force_n,
        r.peak_force_t_s,
        r.alarms.len()
    )
}

/// Run one scenario, write `<stem>.series.csv` and `<stem>.run.json` into
/// `out`, and return the result.
fn run_one(
    scenario: &Scenario,
    params: &SfmParams,
    mi: &MiConfig,
    det: &DetectorConfig,
    out: &Path,
    dump: bool,
) -> Result<RunResult, Failure> {
    let stem = run_stem(scenario);
    let result = if dump {
        let exit_ids: Vec<String> = scenario.floorplan.exits.iter().map(|e| e.id.clone()).collect();
        let rows_path = out.join(format!("{stem}.trajectory.csv"));
        let steps_path = out.join(format!("{stem}.steps.csv"));
        let rows = BufWriter::new(File::create(&rows_path).map_err(io_err(&rows_path))?);
        let steps = BufWriter::new(File::create(&steps_path).map_err(io_err(&steps_path))?);
        let mut writer = TrajectoryWriter::new(rows, steps, &exit_ids, scenario.dt_s).map_err(io_err(&rows_path))?;
        let r = run_multi(scenario, params, std::slice::from_ref(mi), det, |f| writer.write_frame(f))?;
        writer.finish().map_err(io_err(&rows_path))?;
        r
    } else {
        run_multi(scenario, params, std::slice::from_ref(mi), det, |_| Ok(()))?
    };
    let result = result.into_iter().next().expect("one result per config");
    write_file(&out.join(format!("{stem}.series.csv")), &result.series.to_csv())?;
    write_file(&out.join(format!("{stem}.run.json")), &(result.to_json() + "\n"))?;
    Ok(result)
}

fn run(a: RunArgs) -> CmdResult {
    let mut scenario = load_scenario(&a.scenario)?;
    if let Some(seed) = a.seed {
        scenario.rng_seed = seed;
    }
    let params = load_params(a.params.as_deref())?;
    let (mi, det) = (a.mi.config(), a.detector.config());
    check_configs(&mi, &det)?;
    ensure_dir(&a.out)?;
    let r = run_one(&scenario, &params, &mi, &det, &a.out, a.dump_trajectory)?;
    println!("{}", summary_line(&r));
    match r.halt {
        Some(h) => Err(Failure::halt(format!("{h} (partial results written)"))),
        None => Ok(()),
    }
}

fn analyze(a: AnalyzeArgs) -> CmdResult {
    let scenario = load_scenario(&a.scenario)?;
    let (mi, det) = (a.mi.config(), a.detector.config());
    check_configs(&mi, &det)?;
    let traj = BufReader::new(File::open(&a.trajectory).map_err(io_err(&a.trajectory))?);
    let steps = match &a.steps {
        Some(p) => Some(BufReader::new(File::open(p).map_err(io_err(p))?)),
        None => None,
    };
    let series = analyze_trajectory(traj, steps, &mi, &scenario.floorplan.bounds, scenario.dt_s)?;
    let alarms = detect_crush(&series, &det);
    match &a.out {
        Some(p) => write_file(p, &series.to_csv())?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(series.to_csv().as_bytes())
                .map_err(|e| Failure::input(format!("stdout: {e}")))?;
        }
    }
    eprintln!("{} records, {} alarm(s)", series.records.len(), alarms.len());
    for al in &alarms {
        eprintln!("  alarm {} s .. {} s", al.start_s, al.end_s);
    }
    Ok(())
}

fn correlate(a: CorrelateArgs) -> CmdResult {
    let series: Vec<MetricsSeries> = a
        .series
        .iter()
        .map(|p| Ok(MetricsSeries::from_csv(&read_file(p)?, &p.display().to_string())?))
        .collect::<Result<_, Failure>>()?;
    let refs: Vec<&MetricsSeries> = series.iter().collect();
    let report = correlate_series(&refs, a.alpha)?;
    ensure_dir(&a.out)?;
    write_file(&a.out.join("scatter.csv"), &scatter_csv(&refs))?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(&a.out.join("correlation.json"), &(json + "\n"))?;
    println!("r = {:.6}", report.r_p);
    println!("p = {:.6e}", report.p_value);
    println!("n = {}", report.n);
    println!(
        "{} at alpha = {}",
        if report.significant() { "significant" } else { "not significant" },
        report.alpha
    );
    Ok(())
}

fn load_run(path: &PathBuf) -> Result<RunResult, Failure> {
    Ok(RunResult::from_json(&read_file(path)?, &path.display().to_string())?)
}

fn compare(a: CompareArgs) -> CmdResult {
    let (lo, hi) = (a.window[0], a.window[1]);
    if !(lo <= hi) {
        return Err(Failure::input(format!("empty window [{lo}, {hi}]")));
    }
    let (ra, rb) = (load_run(&a.a)?, load_run(&a.b)?);
    if ra.mi_config != rb.mi_config {
        eprintln!("warning: runs use different MI configurations");
    }
    let c = compare_runs(&ra, &rb, (lo, hi));
    let fmt_mi = |m: Option<f64>| m.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    println!("window [{lo}, {hi}] s");
    println!("mean MI   a {} b {} bits", fmt_mi(c.mean_mi_a), fmt_mi(c.mean_mi_b));
    println!(
        "peak force a {:.2} N at {} s, b {:.2} N at {} s",
        c.peak_force_a.0, c.peak_force_a.1, c.peak_force_b.0, c.peak_force_b.1
    );
    println!("b less ordered: {}", c.b_less_ordered);
    println!("b higher peak force: {}", c.b_higher_peak_force);
    println!("b slower: {}", c.b_slower);
    if let Some(p) = &a.out {
        let json = serde_json::to_string_pretty(&c).expect("comparison serializes");
        write_file(p, &(json + "\n"))?;
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> CmdResult {
    let base = load_scenario(&a.scenario)?;
    let params = load_params(a.params.as_deref())?;
    let (mi, det) = (a.mi.config(), a.detector.config());
    check_configs(&mi, &det)?;
    ensure_dir(&a.out)?;

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = a.jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Failure::input(format!("thread pool: {e}")))?;
    // Each seed owns its scenario copy; runs share nothing mutable.
    let results: Vec<Result<RunResult, Failure>> = pool.install(|| {
        a.seeds
            .0
            .par_iter()
            .map(|&seed| {
                let mut s = base.clone();
                s.rng_seed = seed;
                run_one(&s, &params, &mi, &det, &a.out, false)
            })
            .collect()
    });

    let mut summary =
        String::from("seed,total_evac_time_s,peak_force_N,peak_force_t_s,alarms,first_alarm_s,halt\n");
    let mut halted = 0;
    for r in results {
        let r = r?;
        println!("{}", summary_line(&r));
        let evac = r
            .total_evac_time_s
            .seconds()
            .map_or("incomplete".to_string(), |t| t.to_string());
        let first = r.alarms.first().map_or(String::new(), |al| al.start_s.to_string());
        if r.halt.is_some() {
            halted += 1;
        }
        summary.push_str(&format!(
            "{},{evac},{},{},{},{first},{}\n",
            r.seed,
            r.peak_force_n,
            r.peak_force_t_s,
            r.alarms.len(),
            r.halt.as_deref().unwrap_or("").replace(',', ";")
        ));
    }
    write_file(&a.out.join(format!("{}_sweep.csv", base.id)), &summary)?;
    if halted > 0 {
        return Err(Failure::halt(format!("{halted} run(s) halted; see the sweep summary")));
    }
    Ok(())
}
