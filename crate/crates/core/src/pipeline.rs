//! One complete evacuation run: step the engine, measure order parameter and
//! force every step, fold into per-second records, and summarise.

use serde::{Deserialize, Serialize};

use crate::analysis::{
    crowd_order_parameter, detect_crush, AlarmInterval, DetectorConfig, MetricsSeries, MiConfig,
    SeriesBuilder,
};
use crate::engine::{average_contact_force, SimFrame, Simulation};
use crate::error::Result;
use crate::params::SfmParams;
use crate::scenario::Scenario;

/// Total evacuation time, or `"incomplete"` when the time cap was reached
/// (or the run halted) with agents still inside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvacTime {
    Complete(f64),
    Incomplete,
}

impl EvacTime {
    pub fn seconds(self) -> Option<f64> {
        match self {
            EvacTime::Complete(t) => Some(t),
            EvacTime::Incomplete => None,
        }
    }
}

impl Serialize for EvacTime {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            EvacTime::Complete(t) => s.serialize_f64(*t),
            EvacTime::Incomplete => s.serialize_str("incomplete"),
        }
    }
}

impl<'de> Deserialize<'de> for EvacTime {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(t) => Ok(EvacTime::Complete(t)),
            Raw::Text(s) if s == "incomplete" => Ok(EvacTime::Incomplete),
            Raw::Text(s) => Err(serde::de::Error::custom(format!("unexpected value '{s}'"))),
        }
    }
}

/// Cumulative evacuees per exit at each record time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeavingProfile {
    pub exit_ids: Vec<String>,
    pub t_s: Vec<f64>,
    /// `counts[exit][k]` is the cumulative count through `exit` at `t_s[k]`.
    pub counts: Vec<Vec<usize>>,
}

impl LeavingProfile {
    fn from_series(series: &MetricsSeries) -> Self {
        let n = series.exit_ids.len();
        LeavingProfile {
            exit_ids: series.exit_ids.clone(),
            t_s: series.records.iter().map(|r| r.t_s).collect(),
            counts: (0..n)
                .map(|e| series.records.iter().map(|r| r.exits_cumulative[e]).collect())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub scenario_id: String,
    pub params_id: String,
    pub seed: u64,
    pub population: usize,
    pub mi_config: MiConfig,
    pub detector: DetectorConfig,
    pub series: MetricsSeries,
    pub leaving_profile: LeavingProfile,
    pub total_evac_time_s: EvacTime,
    pub alarms: Vec<AlarmInterval>,
    pub peak_force_n: f64,
    pub peak_force_t_s: f64,
    /// Set when the engine halted (trapped population, non-finite force);
    /// everything above then covers the run up to the halt.
    pub halt: Option<String>,
}

impl RunResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run result serializes")
    }

    pub fn from_json(text: &str, context: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| crate::error::Error::json(context, e))
    }

    /// Mean of the defined per-second MI values with `lo <= t_s <= hi`.
    pub fn mean_mi_between(&self, lo: f64, hi: f64) -> Option<f64> {
        let v: Vec<f64> = self
            .series
            .records
            .iter()
            .filter(|r| r.t_s >= lo && r.t_s <= hi)
            .filter_map(|r| r.mi_bits)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Run with the default crush detector.
pub fn run(scenario: &Scenario, params: &SfmParams, mi_cfg: &MiConfig) -> Result<RunResult> {
    let mut results = run_multi(
        scenario,
        params,
        std::slice::from_ref(mi_cfg),
        &DetectorConfig::default(),
        |_| Ok(()),
    )?;
    Ok(results.remove(0))
}

/// Run once, measuring the order parameter under several MI configurations,
/// and call `on_frame` after every step (e.g. to dump the trajectory).
///
/// Returns one result per configuration; they share the same trajectory.
pub fn run_multi<F>(
    scenario: &Scenario,
    params: &SfmParams,
    mi_cfgs: &[MiConfig],
    detector: &DetectorConfig,
    mut on_frame: F,
) -> Result<Vec<RunResult>>
where
    F: FnMut(&SimFrame) -> std::io::Result<()>,
{
    for cfg in mi_cfgs {
        cfg.check()?;
    }
    let mut sim = Simulation::new(scenario, params)?;
    let exit_ids: Vec<String> = scenario.floorplan.exits.iter().map(|e| e.id.clone()).collect();
    let bounds = scenario.floorplan.bounds;
    let mut builders: Vec<SeriesBuilder> = mi_cfgs
        .iter()
        .map(|c| SeriesBuilder::new(exit_ids.clone(), c.window_steps, scenario.dt_s))
        .collect();

    let mut halt = None;
    while !sim.is_finished() {
        if let Err(e) = sim.step() {
            if e.is_runtime_halt() {
                halt = Some(e.to_string());
                break;
            }
            return Err(e);
        }
        let frame = sim.frame();
        on_frame(frame).map_err(|e| crate::error::Error::io("trajectory", e))?;
        let force = average_contact_force(frame);
        for (b, cfg) in builders.iter_mut().zip(mi_cfgs) {
            let mi = crowd_order_parameter(
                frame
                    .agents
                    .iter()
                    .map(|a| (a.position.x, a.position.y, a.heading)),
                cfg,
                &bounds,
            );
            b.push(mi, Some(force), frame.agents.len(), &frame.exits_log);
        }
    }

    let frame = sim.frame();
    let total_evac_time_s = if frame.agents.is_empty() && halt.is_none() {
        EvacTime::Complete(frame.t)
    } else {
        EvacTime::Incomplete
    };
    Ok(builders
        .into_iter()
        .zip(mi_cfgs)
        .map(|(b, cfg)| {
            let series = b.finish();
            let (peak_force_n, peak_force_t_s) = series
                .records
                .iter()
                .filter_map(|r| r.avg_force_n.map(|f| (f, r.t_s)))
                .fold((0.0, 0.0), |best, x| if x.0 > best.0 { x } else { best });
            RunResult {
                scenario_id: scenario.id.clone(),
                params_id: params.id.clone(),
                seed: scenario.rng_seed,
                population: scenario.population,
                mi_config: *cfg,
                detector: *detector,
                alarms: detect_crush(&series, detector),
                leaving_profile: LeavingProfile::from_series(&series),
                series,
                total_evac_time_s,
                peak_force_n,
                peak_force_t_s,
                halt: halt.clone(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesDelta {
    pub t_s: f64,
    /// `b - a`; `None` when either side is a gap or missing.
    pub mi_bits: Option<f64>,
    pub avg_force_n: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunComparison {
    pub window_s: (f64, f64),
    pub deltas: Vec<SeriesDelta>,
    pub mean_mi_a: Option<f64>,
    pub mean_mi_b: Option<f64>,
    pub peak_force_a: (f64, f64),
    pub peak_force_b: (f64, f64),
    pub evac_time_a: EvacTime,
    pub evac_time_b: EvacTime,
    /// Mean MI over the window is lower in `b`.
    pub b_less_ordered: bool,
    /// Peak average force is higher in `b`.
    pub b_higher_peak_force: bool,
    /// `b` takes longer to empty the building (an incomplete run counts as
    /// longer than a complete one).
    pub b_slower: bool,
}

/// Align two runs record by record and summarise how `b` differs from `a`
/// over the window `[lo, hi]` seconds.
pub fn compare_runs(a: &RunResult, b: &RunResult, window_s: (f64, f64)) -> RunComparison {
    let n = a.series.records.len().max(b.series.records.len());
    let deltas = (0..n)
        .map(|k| {
            let ra = a.series.records.get(k);
            let rb = b.series.records.get(k);
            let diff = |f: fn(&crate::analysis::MetricsRecord) -> Option<f64>| {
                Some(f(rb?)? - f(ra?)?)
            };
            SeriesDelta {
                t_s: ra.or(rb).map(|r| r.t_s).unwrap_or_default(),
                mi_bits: diff(|r| r.mi_bits),
                avg_force_n: diff(|r| r.avg_force_n),
            }
        })
        .collect();
    let (lo, hi) = window_s;
    let mean_mi_a = a.mean_mi_between(lo, hi);
    let mean_mi_b = b.mean_mi_between(lo, hi);
    let b_slower = match (a.total_evac_time_s, b.total_evac_time_s) {
        (EvacTime::Complete(ta), EvacTime::Complete(tb)) => tb > ta,
        (EvacTime::Complete(_), EvacTime::Incomplete) => true,
        _ => false,
    };
    RunComparison {
        window_s,
        deltas,
        b_less_ordered: matches!((mean_mi_a, mean_mi_b), (Some(x), Some(y)) if y < x),
        mean_mi_a,
        mean_mi_b,
        peak_force_a: (a.peak_force_n, a.peak_force_t_s),
        peak_force_b: (b.peak_force_n, b.peak_force_t_s),
        evac_time_a: a.total_evac_time_s,
        evac_time_b: b.total_evac_time_s,
        b_higher_peak_force: b.peak_force_n > a.peak_force_n,
        b_slower,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_station(max_time_s: f64) -> Scenario {
        let mut s = Scenario::bundled("station_realistic").unwrap();
        s.max_time_s = max_time_s;
        s
    }

    #[test]
    fn population_zero_gives_empty_series() {
        let mut s = Scenario::bundled("station_idealised").unwrap();
        s.spawn_regions.iter_mut().for_each(|r| r.agent_count = 0);
        s.population = 0;
        let r = run(&s, &SfmParams::bundled(), &MiConfig::default()).unwrap();
        assert!(r.series.records.is_empty());
        assert_eq!(r.total_evac_time_s, EvacTime::Complete(0.0));
        assert!(r.alarms.is_empty());
    }

    #[test]
    fn short_run_records_and_conservation() {
        let s = small_station(5.0);
        let r = run(&s, &SfmParams::bundled(), &MiConfig::default()).unwrap();
        assert_eq!(r.series.records.len(), 5);
        for (k, rec) in r.series.records.iter().enumerate() {
            assert_eq!(rec.t_s, (k + 1) as f64);
            assert_eq!(rec.agents_remaining + rec.exits_cumulative.iter().sum::<usize>(), 450);
            assert!(rec.mi_bits.unwrap() >= 0.0);
            assert!(rec.avg_force_n.unwrap() >= 0.0);
        }
        assert_eq!(r.total_evac_time_s, EvacTime::Incomplete);
        assert_eq!(r.leaving_profile.counts.len(), 4);
    }

    #[test]
    fn comparing_a_run_with_itself() {
        let s = small_station(3.0);
        let r = run(&s, &SfmParams::bundled(), &MiConfig::default()).unwrap();
        let c = compare_runs(&r, &r, (0.0, 3.0));
        assert!(c.deltas.iter().all(|d| d.mi_bits == Some(0.0) && d.avg_force_n == Some(0.0)));
        assert!(!c.b_less_ordered && !c.b_higher_peak_force && !c.b_slower);
    }

    #[test]
    fn run_result_json_round_trip_is_exact() {
        let s = small_station(4.0);
        let r = run(&s, &SfmParams::bundled(), &MiConfig::default()).unwrap();
        let back = RunResult::from_json(&r.to_json(), "rt").unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_json(), r.to_json());
    }

    #[test]
    fn evac_time_json_forms() {
        assert_eq!(serde_json::to_string(&EvacTime::Complete(12.5)).unwrap(), "12.5");
        assert_eq!(serde_json::to_string(&EvacTime::Incomplete).unwrap(), "\"incomplete\"");
        let back: EvacTime = serde_json::from_str("\"incomplete\"").unwrap();
        assert_eq!(back, EvacTime::Incomplete);
        assert!(serde_json::from_str::<EvacTime>("\"later\"").is_err());
    }
}
