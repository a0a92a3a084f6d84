//! Mutual-information order parameter, per-second series and crush alarms.
//!
//! The order parameter of a crowd is the mean of `I(X, Theta)` and
//! `I(Y, Theta)` in bits, where `X`, `Y` are binned positions and `Theta` the
//! binned heading of every agent present at one instant. Probabilities are
//! plain empirical frequencies.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Rect;

/// Logarithm base of every MI value reported by this crate.
pub const LOG_BASE: f64 = 2.0;

/// Joint counts of two discrete channels, row-major `a_bins x b_bins`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointHistogram {
    a_bins: usize,
    b_bins: usize,
    joint: Vec<u64>,
    n: u64,
}

impl JointHistogram {
    pub fn new(a_bins: usize, b_bins: usize) -> Self {
        Self {
            a_bins,
            b_bins,
            joint: vec![0; a_bins * b_bins],
            n: 0,
        }
    }

    /// Build from a row-major count table.
    pub fn from_counts(a_bins: usize, b_bins: usize, counts: &[u64]) -> Self {
        assert_eq!(counts.len(), a_bins * b_bins, "count table has wrong size");
        Self {
            a_bins,
            b_bins,
            joint: counts.to_vec(),
            n: counts.iter().sum(),
        }
    }

    pub fn add(&mut self, a: usize, b: usize) {
        self.joint[a * self.b_bins + b] += 1;
        self.n += 1;
    }

    pub fn a_bins(&self) -> usize {
        self.a_bins
    }

    pub fn b_bins(&self) -> usize {
        self.b_bins
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn count(&self, a: usize, b: usize) -> u64 {
        self.joint[a * self.b_bins + b]
    }

    pub fn a_marginal(&self) -> Vec<u64> {
        self.joint.chunks(self.b_bins).map(|row| row.iter().sum()).collect()
    }

    pub fn b_marginal(&self) -> Vec<u64> {
        (0..self.b_bins)
            .map(|b| (0..self.a_bins).map(|a| self.count(a, b)).sum())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = JointHistogram::new(self.b_bins, self.a_bins);
        for a in 0..self.a_bins {
            for b in 0..self.b_bins {
                t.joint[b * self.a_bins + a] = self.count(a, b);
            }
        }
        t.n = self.n;
        t
    }

    /// Relabel bins: row `a` moves to `row_perm[a]`, column `b` to `col_perm[b]`.
    pub fn permuted(&self, row_perm: &[usize], col_perm: &[usize]) -> Self {
        let mut p = JointHistogram::new(self.a_bins, self.b_bins);
        for a in 0..self.a_bins {
            for b in 0..self.b_bins {
                p.joint[row_perm[a] * self.b_bins + col_perm[b]] = self.count(a, b);
            }
        }
        p.n = self.n;
        p
    }
}

/// Sum the terms in ascending order so the result does not depend on the
/// order the bins were visited in.
fn ordered_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

fn entropy_of(counts: &[u64], n: u64, log_base: f64) -> f64 {
    let nf = n as f64;
    let terms = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / nf;
            -p * p.ln()
        })
        .collect();
    ordered_sum(terms) / log_base.ln()
}

/// Entropy of the first channel, `None` for an empty histogram.
pub fn entropy_a(h: &JointHistogram, log_base: f64) -> Option<f64> {
    (h.n > 0).then(|| entropy_of(&h.a_marginal(), h.n, log_base))
}

/// Entropy of the second channel, `None` for an empty histogram.
pub fn entropy_b(h: &JointHistogram, log_base: f64) -> Option<f64> {
    (h.n > 0).then(|| entropy_of(&h.b_marginal(), h.n, log_base))
}

/// Plug-in mutual information of the two channels of `h`.
///
/// Empty cells contribute nothing and the result is clamped at zero. Returns
/// `None` for an empty histogram.
pub fn mutual_information(h: &JointHistogram, log_base: f64) -> Option<f64> {
    if h.n == 0 {
        return None;
    }
    let pa = h.a_marginal();
    let pb = h.b_marginal();
    let nf = h.n as f64;
    let mut terms = Vec::new();
    for (a, &ca) in pa.iter().enumerate() {
        if ca == 0 {
            continue;
        }
        for (b, &cb) in pb.iter().enumerate() {
            let c = h.count(a, b);
            if c == 0 {
                continue;
            }
            let c = c as f64;
            // p(a,b) log p(a,b) / (p(a) p(b)) with counts: c/n log(c n / (ca cb))
            terms.push(c / nf * (c * nf / (ca as f64 * cb as f64)).ln());
        }
    }
    Some((ordered_sum(terms) / log_base.ln()).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MiConfig {
    pub x_bins: usize,
    pub y_bins: usize,
    pub theta_bins: usize,
    /// Per-step values are averaged over windows of this many steps.
    pub window_steps: usize,
    /// Fewer agents than this make the per-step order parameter undefined.
    pub min_agents: usize,
}

impl Default for MiConfig {
    fn default() -> Self {
        Self {
            x_bins: 8,
            y_bins: 8,
            theta_bins: 8,
            window_steps: 100,
            min_agents: 10,
        }
    }
}

impl MiConfig {
    pub fn with_bins(bins: usize) -> Self {
        Self {
            x_bins: bins,
            y_bins: bins,
            theta_bins: bins,
            ..Self::default()
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.x_bins < 2 || self.y_bins < 2 || self.theta_bins < 2 || self.window_steps < 1 {
            return Err(Error::Validation(vec![crate::error::Violation::new(
                "mi_config",
                "bin counts must be >= 2 and window_steps >= 1",
            )]));
        }
        Ok(())
    }
}

/// Uniform bin index of `v` in `[lo, hi)`, clamped into range.
pub fn bin_index(v: f64, lo: f64, hi: f64, bins: usize) -> usize {
    let k = ((v - lo) / (hi - lo) * bins as f64).floor();
    if k <= 0.0 {
        0
    } else {
        (k as usize).min(bins - 1)
    }
}

pub fn heading_bin(theta: f64, bins: usize) -> usize {
    use std::f64::consts::PI;
    bin_index(theta, -PI, PI, bins)
}

/// Order parameter `(I(X, Theta) + I(Y, Theta)) / 2` in bits for one crowd
/// snapshot of `(x, y, heading)` triples.
///
/// `None` when fewer than `cfg.min_agents` agents are present.
pub fn crowd_order_parameter<I>(agents: I, cfg: &MiConfig, bounds: &Rect) -> Option<f64>
where
    I: IntoIterator<Item = (f64, f64, f64)>,
{
    let mut hx = JointHistogram::new(cfg.x_bins, cfg.theta_bins);
    let mut hy = JointHistogram::new(cfg.y_bins, cfg.theta_bins);
    for (x, y, theta) in agents {
        let t = heading_bin(theta, cfg.theta_bins);
        hx.add(bin_index(x, bounds.min.x, bounds.max.x, cfg.x_bins), t);
        hy.add(bin_index(y, bounds.min.y, bounds.max.y, cfg.y_bins), t);
    }
    if hx.n() < cfg.min_agents.max(1) as u64 {
        return None;
    }
    let ix = mutual_information(&hx, LOG_BASE)?;
    let iy = mutual_information(&hy, LOG_BASE)?;
    Some((ix + iy) / 2.0)
}

fn window_mean(values: &[Option<f64>]) -> Option<f64> {
    let (sum, count) = values
        .iter()
        .flatten()
        .fold((0.0, 0usize), |(s, c), &v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Mean of each consecutive window of `window_steps` per-step values.
///
/// Undefined entries are left out of the mean; a window with no defined
/// entry is itself undefined. A trailing partial window is averaged over the
/// entries it has.
pub fn windowed_series(values: &[Option<f64>], window_steps: usize) -> Vec<Option<f64>> {
    values.chunks(window_steps.max(1)).map(window_mean).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub t_s: f64,
    pub mi_bits: Option<f64>,
    pub avg_force_n: Option<f64>,
    pub agents_remaining: usize,
    pub exits_cumulative: Vec<usize>,
}

/// Per-window (normally per-second) record of order parameter and force.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsSeries {
    /// Column names for `exits_cumulative`.
    pub exit_ids: Vec<String>,
    pub records: Vec<MetricsRecord>,
}

impl MetricsSeries {
    pub fn mi_values(&self) -> Vec<Option<f64>> {
        self.records.iter().map(|r| r.mi_bits).collect()
    }

    /// CSV with header `t_s,mi_bits,avg_force_N,agents_remaining,<exit ids>`;
    /// undefined values are empty cells.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_s,mi_bits,avg_force_N,agents_remaining");
        for id in &self.exit_ids {
            out.push(',');
            out.push_str(id);
        }
        out.push('\n');
        for r in &self.records {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            let _ = write!(
                out,
                "{},{},{},{}",
                r.t_s,
                opt(r.mi_bits),
                opt(r.avg_force_n),
                r.agents_remaining
            );
            for c in &r.exits_cumulative {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, context: &str) -> Result<Self> {
        let csv_err = |line: usize, message: String| Error::Csv {
            context: context.to_string(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| csv_err(1, "empty file".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.len() < 4 || cols[..4] != ["t_s", "mi_bits", "avg_force_N", "agents_remaining"] {
            return Err(csv_err(1, format!("unexpected header '{header}'")));
        }
        let exit_ids: Vec<String> = cols[4..].iter().map(|s| s.to_string()).collect();
        let mut records = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != cols.len() {
                return Err(csv_err(i + 1, format!("expected {} cells, got {}", cols.len(), cells.len())));
            }
            let num = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|e| csv_err(i + 1, format!("bad number '{s}': {e}")))
            };
            let opt = |s: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    num(s).map(Some)
                }
            };
            let int = |s: &str| -> Result<usize> {
                s.parse::<usize>()
                    .map_err(|e| csv_err(i + 1, format!("bad count '{s}': {e}")))
            };
            records.push(MetricsRecord {
                t_s: num(cells[0])?,
                mi_bits: opt(cells[1])?,
                avg_force_n: opt(cells[2])?,
                agents_remaining: int(cells[3])?,
                exits_cumulative: cells[4..].iter().map(|c| int(c)).collect::<Result<_>>()?,
            });
        }
        Ok(MetricsSeries { exit_ids, records })
    }
}

/// Sequential fold of per-step observations into a [`MetricsSeries`].
#[derive(Debug, Clone)]
pub struct SeriesBuilder {
    window_steps: usize,
    window_s: f64,
    mi: Vec<Option<f64>>,
    force: Vec<Option<f64>>,
    last: Option<(usize, Vec<usize>)>,
    series: MetricsSeries,
}

impl SeriesBuilder {
    pub fn new(exit_ids: Vec<String>, window_steps: usize, dt_s: f64) -> Self {
        Self {
            window_steps,
            window_s: window_steps as f64 * dt_s,
            mi: Vec::with_capacity(window_steps),
            force: Vec::with_capacity(window_steps),
            last: None,
            series: MetricsSeries {
                exit_ids,
                records: Vec::new(),
            },
        }
    }

    pub fn push(
        &mut self,
        mi_bits: Option<f64>,
        avg_force_n: Option<f64>,
        agents_remaining: usize,
        exits_cumulative: &[usize],
    ) {
        self.mi.push(mi_bits);
        self.force.push(avg_force_n);
        self.last = Some((agents_remaining, exits_cumulative.to_vec()));
        if self.mi.len() == self.window_steps {
            self.flush();
        }
    }

    fn flush(&mut self) {
        let Some((agents_remaining, exits_cumulative)) = self.last.clone() else {
            return;
        };
        if self.mi.is_empty() {
            return;
        }
        let k = self.series.records.len() + 1;
        self.series.records.push(MetricsRecord {
            t_s: k as f64 * self.window_s,
            mi_bits: window_mean(&self.mi),
            avg_force_n: window_mean(&self.force),
            agents_remaining,
            exits_cumulative,
        });
        self.mi.clear();
        self.force.clear();
    }

    /// Emit any trailing partial window and return the series.
    pub fn finish(mut self) -> MetricsSeries {
        self.flush();
        self.series
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub mi_threshold_bits: f64,
    pub sustain_s: f64,
    /// Records with fewer agents than this are the end-of-run tail and never
    /// alarm.
    pub min_agents: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            mi_threshold_bits: 0.1,
            sustain_s: 10.0,
            min_agents: 10,
        }
    }
}

/// Closed interval of record times `[start_s, end_s]` during which the order
/// parameter stayed below threshold. Each record covers the window ending
/// at its `t_s`, so the alarm spans `end_s - start_s + window` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlarmInterval {
    pub start_s: f64,
    pub end_s: f64,
}

impl AlarmInterval {
    pub fn intersects(&self, lo: f64, hi: f64) -> bool {
        self.start_s <= hi && self.end_s >= lo
    }
}

/// Maximal runs of consecutive records with `mi_bits < threshold` lasting at
/// least `sustain_s`. Gaps and the low-population tail break a run.
pub fn detect_crush(series: &MetricsSeries, cfg: &DetectorConfig) -> Vec<AlarmInterval> {
    let recs = &series.records;
    let window = match recs.first() {
        Some(r) => r.t_s,
        None => return Vec::new(),
    };
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let close = |s: usize, e: usize, out: &mut Vec<AlarmInterval>| {
        let duration = recs[e].t_s - recs[s].t_s + window;
        if duration + 1e-9 >= cfg.sustain_s {
            out.push(AlarmInterval {
                start_s: recs[s].t_s,
                end_s: recs[e].t_s,
            });
        }
    };
    for (i, r) in recs.iter().enumerate() {
        let low = r.agents_remaining >= cfg.min_agents
            && r.mi_bits.is_some_and(|m| m < cfg.mi_threshold_bits);
        match (low, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                close(s, i - 1, &mut out);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        close(s, recs.len() - 1, &mut out);
    }
    out
}

/// Writes the per-step trajectory dump (`t,id,x,y,theta`) and its per-step
/// sidecar (`t,avg_force_N,agents_remaining,<exit ids>`).
pub struct TrajectoryWriter<W: Write, S: Write> {
    rows: W,
    steps: S,
    decimals: usize,
}

impl<W: Write, S: Write> TrajectoryWriter<W, S> {
    pub fn new(mut rows: W, mut steps: S, exit_ids: &[String], dt_s: f64) -> std::io::Result<Self> {
        writeln!(rows, "t,id,x,y,theta")?;
        write!(steps, "t,avg_force_N,agents_remaining")?;
        for id in exit_ids {
            write!(steps, ",{id}")?;
        }
        writeln!(steps)?;
        let decimals = (-dt_s.log10()).ceil().max(0.0) as usize + 1;
        Ok(Self {
            rows,
            steps,
            decimals,
        })
    }

    pub fn write_frame(&mut self, frame: &crate::engine::SimFrame) -> std::io::Result<()> {
        let t = format!("{:.*}", self.decimals, frame.t);
        for a in &frame.agents {
            writeln!(
                self.rows,
                "{t},{},{},{},{}",
                a.id, a.position.x, a.position.y, a.heading
            )?;
        }
        write!(
            self.steps,
            "{t},{},{}",
            crate::engine::average_contact_force(frame),
            frame.agents.len()
        )?;
        for c in &frame.exits_log {
            write!(self.steps, ",{c}")?;
        }
        writeln!(self.steps)
    }

    /// Flush and hand back both sinks.
    pub fn into_inner(mut self) -> std::io::Result<(W, S)> {
        self.rows.flush()?;
        self.steps.flush()?;
        Ok((self.rows, self.steps))
    }

    pub fn finish(mut self) -> std::io::Result<()> {
        self.rows.flush()?;
        self.steps.flush()
    }
}

struct StepInfo {
    avg_force: f64,
    agents: usize,
    exits: Vec<usize>,
}

fn parse_steps<R: BufRead>(r: R, dt_s: f64) -> Result<(Vec<String>, Vec<StepInfo>)> {
    let err = |line: usize, message: String| Error::Csv {
        context: "steps".into(),
        line,
        message,
    };
    let mut lines = r.lines().enumerate();
    let header = match lines.next() {
        Some((_, l)) => l.map_err(|e| err(1, e.to_string()))?,
        None => return Err(err(1, "empty file".into())),
    };
    let cols: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    if cols.len() < 3 || cols[..3] != ["t", "avg_force_N", "agents_remaining"] {
        return Err(err(1, format!("unexpected header '{header}'")));
    }
    let mut out: Vec<StepInfo> = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| err(i + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != cols.len() {
            return Err(err(i + 1, "wrong number of cells".into()));
        }
        let t: f64 = cells[0].parse().map_err(|e| err(i + 1, format!("{e}")))?;
        let step = (t / dt_s).round() as usize;
        if step != out.len() + 1 {
            return Err(err(i + 1, format!("expected step {}, found t = {t}", out.len() + 1)));
        }
        out.push(StepInfo {
            avg_force: cells[1].parse().map_err(|e| err(i + 1, format!("{e}")))?,
            agents: cells[2].parse().map_err(|e| err(i + 1, format!("{e}")))?,
            exits: cells[3..]
                .iter()
                .map(|c| c.parse().map_err(|e| err(i + 1, format!("{e}"))))
                .collect::<Result<_>>()?,
        });
    }
    Ok((cols[3..].to_vec(), out))
}

/// Rebuild the metrics series from a trajectory dump.
///
/// With the per-step sidecar the result is identical to the series produced
/// in-process by the run that wrote the dump. Without it, force and exit
/// columns are unavailable and the step count is taken from the last frame
/// present in the trajectory.
pub fn analyze_trajectory<R: BufRead, S: BufRead>(
    trajectory: R,
    steps: Option<S>,
    cfg: &MiConfig,
    bounds: &Rect,
    dt_s: f64,
) -> Result<MetricsSeries> {
    cfg.check()?;
    let err = |line: usize, message: String| Error::Csv {
        context: "trajectory".into(),
        line,
        message,
    };
    let (exit_ids, step_info) = match steps {
        Some(s) => {
            let (ids, info) = parse_steps(s, dt_s)?;
            (ids, Some(info))
        }
        None => (Vec::new(), None),
    };

    let mut builder = SeriesBuilder::new(exit_ids, cfg.window_steps, dt_s);
    let mut current: Option<usize> = None;
    let mut next_step = 1usize;
    let mut frame: Vec<(f64, f64, f64)> = Vec::new();
    let emit = |builder: &mut SeriesBuilder, step: usize, frame: &[(f64, f64, f64)]| {
        let mi = crowd_order_parameter(frame.iter().copied(), cfg, bounds);
        match &step_info {
            Some(info) => {
                let s = &info[step - 1];
                builder.push(mi, Some(s.avg_force), s.agents, &s.exits);
            }
            None => builder.push(mi, None, frame.len(), &[]),
        }
    };

    let mut lines = trajectory.lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h.trim() == "t,id,x,y,theta" => {}
        Some((_, Ok(h))) => return Err(err(1, format!("unexpected header '{h}'"))),
        Some((_, Err(e))) => return Err(err(1, e.to_string())),
        None => return Err(err(1, "empty file".into())),
    }
    for (i, line) in lines {
        let line = line.map_err(|e| err(i + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 5 {
            return Err(err(i + 1, format!("expected 5 cells, got {}", cells.len())));
        }
        let num = |s: &str| -> Result<f64> { s.parse().map_err(|e| err(i + 1, format!("bad number '{s}': {e}"))) };
        let step = (num(cells[0])? / dt_s).round() as usize;
        match current {
            Some(c) if step == c => {}
            Some(c) if step < c => {
                return Err(err(i + 1, "rows must be in non-decreasing time order".into()));
            }
            _ => {
                if step == 0 {
                    return Err(err(i + 1, "frames start at the first step (t = dt)".into()));
                }
                if let Some(c) = current {
                    emit(&mut builder, c, &frame);
                    frame.clear();
                    next_step = c + 1;
                }
                for s in next_step..step {
                    emit(&mut builder, s, &[]);
                }
                current = Some(step);
            }
        }
        frame.push((num(cells[2])?, num(cells[3])?, num(cells[4])?));
    }
    if let Some(c) = current {
        emit(&mut builder, c, &frame);
        next_step = c + 1;
    }
    if let Some(info) = &step_info {
        for s in next_step..=info.len() {
            emit(&mut builder, s, &[]);
        }
    }
    Ok(builder.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn diag(k: usize) -> JointHistogram {
        let mut h = JointHistogram::new(k, k);
        for i in 0..k {
            for _ in 0..5 {
                h.add(i, i);
            }
        }
        h
    }

    #[test]
    fn diagonal_histograms_give_log2_k() {
        for k in [2usize, 4, 8, 16] {
            let mi = mutual_information(&diag(k), LOG_BASE).unwrap();
            assert!((mi - (k as f64).log2()).abs() < 1e-12, "k={k} mi={mi}");
        }
    }

    #[test]
    fn factorable_joint_is_zero() {
        let a = [1u64, 3, 2];
        let b = [2u64, 1, 4, 1];
        let counts: Vec<u64> = a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect();
        let h = JointHistogram::from_counts(3, 4, &counts);
        assert!(mutual_information(&h, LOG_BASE).unwrap().abs() < 1e-12);
    }

    #[test]
    fn empty_histogram_is_undefined() {
        assert_eq!(mutual_information(&JointHistogram::new(3, 3), LOG_BASE), None);
        assert_eq!(entropy_a(&JointHistogram::new(3, 3), LOG_BASE), None);
    }

    #[test]
    fn single_heading_bin_gives_zero() {
        let bounds = Rect {
            min: Vec2::new(0.0, 0.0),
            max: Vec2::new(10.0, 10.0),
        };
        let agents = (0..50).map(|i| (i as f64 * 0.2, 10.0 - i as f64 * 0.2, 0.3));
        let mi = crowd_order_parameter(agents, &MiConfig::default(), &bounds).unwrap();
        assert_eq!(mi, 0.0);
    }

    #[test]
    fn split_halves_give_half_a_bit() {
        let bounds = Rect {
            min: Vec2::new(0.0, 0.0),
            max: Vec2::new(8.0, 8.0),
        };
        // left half heads east, right half heads west; every y bin holds the
        // same number of agents of each heading.
        let mut agents = Vec::new();
        for yb in 0..8 {
            for xb in 0..8 {
                let heading = if xb < 4 { 0.1 } else { PI - 0.1 };
                agents.push((xb as f64 + 0.5, yb as f64 + 0.5, heading));
            }
        }
        let mi = crowd_order_parameter(agents, &MiConfig::default(), &bounds).unwrap();
        assert!((mi - 0.5).abs() < 1e-12, "{mi}");
    }

    #[test]
    fn too_few_agents_is_a_gap() {
        let bounds = Rect {
            min: Vec2::new(0.0, 0.0),
            max: Vec2::new(1.0, 1.0),
        };
        let agents = (0..9).map(|i| (0.1 * i as f64, 0.5, 0.0));
        assert_eq!(crowd_order_parameter(agents, &MiConfig::default(), &bounds), None);
    }

    #[test]
    fn binning_edges() {
        assert_eq!(bin_index(0.0, 0.0, 1.0, 4), 0);
        assert_eq!(bin_index(1.0, 0.0, 1.0, 4), 3);
        assert_eq!(bin_index(-0.5, 0.0, 1.0, 4), 0);
        assert_eq!(bin_index(0.25, 0.0, 1.0, 4), 1);
        assert_eq!(heading_bin(-PI, 8), 0);
        assert_eq!(heading_bin(PI - 1e-9, 8), 7);
    }

    #[test]
    fn window_means() {
        assert_eq!(windowed_series(&[Some(2.5); 300], 100), vec![Some(2.5); 3]);
        let alt: Vec<Option<f64>> = (0..100).map(|i| Some((i % 2) as f64)).collect();
        assert_eq!(windowed_series(&alt, 100), vec![Some(0.5)]);
        let mut gappy = vec![None; 100];
        gappy.extend([Some(1.0), None, Some(3.0)]);
        assert_eq!(windowed_series(&gappy, 100), vec![None, Some(2.0)]);
    }

    fn record(t: f64, mi: Option<f64>, agents: usize) -> MetricsRecord {
        MetricsRecord {
            t_s: t,
            mi_bits: mi,
            avg_force_n: Some(0.0),
            agents_remaining: agents,
            exits_cumulative: vec![],
        }
    }

    #[test]
    fn detector_intervals() {
        let mut recs: Vec<MetricsRecord> = (1..=60).map(|t| record(t as f64, Some(0.5), 100)).collect();
        assert!(detect_crush(&MetricsSeries { exit_ids: vec![], records: recs.clone() }, &DetectorConfig::default()).is_empty());
        // 12 s low run, a 9 s low run, and a low run broken by a gap
        for t in 10..22 {
            recs[t - 1].mi_bits = Some(0.05);
        }
        for t in 30..39 {
            recs[t - 1].mi_bits = Some(0.05);
        }
        for t in 45..60 {
            recs[t - 1].mi_bits = if t == 50 { None } else { Some(0.0) };
        }
        let series = MetricsSeries { exit_ids: vec![], records: recs.clone() };
        let alarms = detect_crush(&series, &DetectorConfig::default());
        assert_eq!(alarms, vec![AlarmInterval { start_s: 10.0, end_s: 21.0 }]);
        // the low-population tail never alarms
        for r in &mut recs[44..] {
            r.agents_remaining = 5;
        }
        recs[49].mi_bits = Some(0.0);
        let series = MetricsSeries { exit_ids: vec![], records: recs };
        assert_eq!(detect_crush(&series, &DetectorConfig::default()).len(), 1);
    }

    #[test]
    fn series_csv_round_trip_with_gaps() {
        let series = MetricsSeries {
            exit_ids: vec!["main".into(), "kitchen".into()],
            records: vec![
                MetricsRecord {
                    t_s: 1.0,
                    mi_bits: Some(0.123456789012345),
                    avg_force_n: Some(12.5),
                    agents_remaining: 448,
                    exits_cumulative: vec![2, 0],
                },
                MetricsRecord {
                    t_s: 2.0,
                    mi_bits: None,
                    avg_force_n: Some(0.0),
                    agents_remaining: 3,
                    exits_cumulative: vec![440, 7],
                },
            ],
        };
        let csv = series.to_csv();
        assert!(csv.starts_with("t_s,mi_bits,avg_force_N,agents_remaining,main,kitchen\n"));
        assert!(csv.contains("\n2,,0,3,440,7\n"));
        assert_eq!(MetricsSeries::from_csv(&csv, "x").unwrap(), series);
        assert!(MetricsSeries::from_csv("a,b\n", "x").is_err());
    }

    fn hist_strategy() -> impl Strategy<Value = JointHistogram> {
        (1usize..7, 1usize..7).prop_flat_map(|(a, b)| {
            proptest::collection::vec(0u64..20, a * b)
                .prop_filter("non-empty", |c| c.iter().sum::<u64>() > 0)
                .prop_map(move |c| JointHistogram::from_counts(a, b, &c))
        })
    }

    proptest! {
        #[test]
        fn mi_symmetric_nonnegative_bounded(h in hist_strategy()) {
            let mi = mutual_information(&h, LOG_BASE).unwrap();
            prop_assert!(mi >= 0.0);
            prop_assert_eq!(mi, mutual_information(&h.transpose(), LOG_BASE).unwrap());
            let ha = entropy_a(&h, LOG_BASE).unwrap();
            let hb = entropy_b(&h, LOG_BASE).unwrap();
            prop_assert!(mi <= ha.min(hb) + 1e-12);
        }

        #[test]
        fn mi_invariant_under_relabelling(h in hist_strategy(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut rows: Vec<usize> = (0..h.a_bins()).collect();
            let mut cols: Vec<usize> = (0..h.b_bins()).collect();
            rows.shuffle(&mut rng);
            cols.shuffle(&mut rng);
            let p = h.permuted(&rows, &cols);
            prop_assert_eq!(
                mutual_information(&h, LOG_BASE).unwrap(),
                mutual_information(&p, LOG_BASE).unwrap()
            );
        }
    }
}
