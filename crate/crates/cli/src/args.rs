use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use crowdmi_core::{DetectorConfig, MiConfig};

#[derive(Debug, Parser)]
#[command(name = "crowdmi", version, about = "Evacuation simulation with a mutual-information crush detector")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a scenario file (or bundled scenario name) and print OK.
    Validate {
        scenario: PathBuf,
    },
    /// Run one simulation and write the series CSV and run result.
    Run(RunArgs),
    /// Rebuild the metrics series from a trajectory dump.
    Analyze(AnalyzeArgs),
    /// Pearson correlation of force against MI over one or more series CSVs.
    Correlate(CorrelateArgs),
    /// Compare two run results over a time window.
    Compare(CompareArgs),
    /// Run a scenario over many seeds in parallel.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct MiArgs {
    #[arg(long, default_value_t = 8)]
    pub bins_x: usize,
    #[arg(long, default_value_t = 8)]
    pub bins_y: usize,
    #[arg(long, default_value_t = 8)]
    pub bins_theta: usize,
}

impl MiArgs {
    pub fn config(&self) -> MiConfig {
        MiConfig {
            x_bins: self.bins_x,
            y_bins: self.bins_y,
            theta_bins: self.bins_theta,
            ..MiConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DetectorArgs {
    /// Alarm when the per-second MI stays below this many bits...
    #[arg(long, default_value_t = 0.1)]
    pub mi_threshold: f64,
    /// ...for at least this many seconds.
    #[arg(long, default_value_t = 10.0)]
    pub sustain: f64,
}

impl DetectorArgs {
    pub fn config(&self) -> DetectorConfig {
        DetectorConfig {
            mi_threshold_bits: self.mi_threshold,
            sustain_s: self.sustain,
            ..DetectorConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario file, or `station_idealised` / `station_realistic`.
    pub scenario: PathBuf,
    /// Override the scenario's RNG seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Social-force parameter file (defaults to the bundled set).
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[command(flatten)]
    pub mi: MiArgs,
    #[command(flatten)]
    pub detector: DetectorArgs,
    /// Also write the per-step trajectory and its steps sidecar.
    #[arg(long)]
    pub dump_trajectory: bool,
    /// Output directory (created if missing).
    #[arg(short, long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Trajectory CSV with columns `t,id,x,y,theta`.
    pub trajectory: PathBuf,
    /// Scenario the trajectory came from (supplies bounds and time step).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Per-step sidecar written next to the trajectory by `run`; without it
    /// the force and exit columns are left empty.
    #[arg(long)]
    pub steps: Option<PathBuf>,
    #[command(flatten)]
    pub mi: MiArgs,
    #[command(flatten)]
    pub detector: DetectorArgs,
    /// Series CSV destination (stdout if omitted).
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    /// Series CSVs whose complete records are pooled.
    #[arg(required = true)]
    pub series: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    /// Directory for `scatter.csv` and `correlation.json`.
    #[arg(short, long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Baseline run result (JSON written by `run`).
    pub a: PathBuf,
    /// Run compared against the baseline.
    pub b: PathBuf,
    /// Window for the mean-MI comparison, in seconds.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [40.0, 110.0])]
    pub window: Vec<f64>,
    /// Write the full comparison (including per-second deltas) as JSON.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub scenario: PathBuf,
    /// Seeds as a list (`1,2,7`) or an inclusive range (`1..=5`, `1..5`).
    #[arg(long, value_parser = parse_seeds, default_value = "1..=5")]
    pub seeds: SeedList,
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[command(flatten)]
    pub mi: MiArgs,
    #[command(flatten)]
    pub detector: DetectorArgs,
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(short, long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedList(pub Vec<u64>);

fn parse_seeds(s: &str) -> Result<SeedList, String> {
    let num = |t: &str| t.trim().parse::<u64>().map_err(|e| format!("bad seed '{t}': {e}"));
    let seeds: Vec<u64> = if let Some((lo, hi)) = s.split_once("..=") {
        (num(lo)?..=num(hi)?).collect()
    } else if let Some((lo, hi)) = s.split_once("..") {
        (num(lo)?..num(hi)?).collect()
    } else {
        s.split(',').map(num).collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err(format!("'{s}' selects no seeds"));
    }
    Ok(SeedList(seeds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn clap_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("1..=3").unwrap().0, vec![1, 2, 3]);
        assert_eq!(parse_seeds("1..3").unwrap().0, vec![1, 2]);
        assert_eq!(parse_seeds("4, 9,2").unwrap().0, vec![4, 9, 2]);
        assert!(parse_seeds("3..3").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn defaults_match_core() {
        let cli = Cli::try_parse_from(["crowdmi", "run", "station_idealised"]).unwrap();
        let Command::Run(r) = cli.command else { panic!() };
        assert_eq!(r.mi.config(), MiConfig::default());
        assert_eq!(r.detector.config(), DetectorConfig::default());
        assert!(!r.dump_trajectory);
    }
}
