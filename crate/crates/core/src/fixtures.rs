//! Reference implementations and checked-in oracle values.
//!
//! Nothing in here is used by the simulation. Each oracle is written the
//! slow, obvious way with its own arithmetic so that it can be compared
//! against the optimised code in [`analysis`](crate::analysis),
//! [`engine`](crate::engine), [`navigation`](crate::navigation) and
//! [`stats`](crate::stats).
//!
//! The JSON files under `crates/core/fixtures/` hold oracle outputs.
//! [`regenerate_oracles`] recomputes them and reports any drift; set
//! `CROWDMI_BLESS=1` to overwrite the files instead.

use std::collections::BinaryHeap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Segment, Vec2};
use crate::params::SfmParams;

/// Directory holding the checked-in oracle files.
pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

// ---------------------------------------------------------------------------
// Mutual information

/// Plug-in MI of paired bin labels, by brute force: every cell and every
/// marginal is recounted from the raw samples.
pub fn mi_from_samples(samples: &[(usize, usize)], a_bins: usize, b_bins: usize, base: f64) -> f64 {
    let n = samples.len() as f64;
    let mut total = 0.0;
    for i in 0..a_bins {
        for j in 0..b_bins {
            let mut joint = 0usize;
            let mut pa = 0usize;
            let mut pb = 0usize;
            for &(a, b) in samples {
                if a == i && b == j {
                    joint += 1;
                }
                if a == i {
                    pa += 1;
                }
                if b == j {
                    pb += 1;
                }
            }
            if joint > 0 {
                let pj = joint as f64 / n;
                total += pj * (pj / ((pa as f64 / n) * (pb as f64 / n))).ln();
            }
        }
    }
    (total / base.ln()).max(0.0)
}

fn oracle_bin(v: f64, lo: f64, hi: f64, bins: usize) -> usize {
    let width = (hi - lo) / bins as f64;
    let mut k = 0;
    while k + 1 < bins && v >= lo + (k + 1) as f64 * width {
        k += 1;
    }
    k
}

/// Order parameter of `(x, y, theta)` samples over `[min, max]` bounds, in
/// bits.
pub fn order_parameter_oracle(
    agents: &[(f64, f64, f64)],
    bins: (usize, usize, usize),
    min: (f64, f64),
    max: (f64, f64),
) -> f64 {
    use std::f64::consts::PI;
    let (bx, by, bt) = bins;
    let xt: Vec<(usize, usize)> = agents
        .iter()
        .map(|&(x, _, t)| (oracle_bin(x, min.0, max.0, bx), oracle_bin(t, -PI, PI, bt)))
        .collect();
    let yt: Vec<(usize, usize)> = agents
        .iter()
        .map(|&(_, y, t)| (oracle_bin(y, min.1, max.1, by), oracle_bin(t, -PI, PI, bt)))
        .collect();
    (mi_from_samples(&xt, bx, bt, 2.0) + mi_from_samples(&yt, by, bt, 2.0)) / 2.0
}

/// Synthetic crowd snapshot: `n` agents uniform in the box, headings drawn
/// from a position-dependent mixture so the MI is neither 0 nor maximal.
pub fn synthetic_crowd(seed: u64, n: usize, min: (f64, f64), max: (f64, f64)) -> Vec<(f64, f64, f64)> {
    use std::f64::consts::PI;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x = rng.gen_range(min.0..max.0);
            let y = rng.gen_range(min.1..max.1);
            let theta = if rng.gen_bool(0.5) {
                let mean = (x - min.0) / (max.0 - min.0) * 2.0 * PI - PI;
                let t = mean + rng.gen_range(-0.5..0.5);
                if t >= PI {
                    t - 2.0 * PI
                } else if t < -PI {
                    t + 2.0 * PI
                } else {
                    t
                }
            } else {
                rng.gen_range(-PI..PI)
            };
            (x, y, theta)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderParameterCase {
    pub seed: u64,
    pub agents: usize,
    pub bins: (usize, usize, usize),
    pub min: (f64, f64),
    pub max: (f64, f64),
    pub mi_bits: f64,
}

/// Twenty seeded crowds of 100 to 1000 agents with their oracle MI.
pub fn order_parameter_cases() -> Vec<OrderParameterCase> {
    (0..20u64)
        .map(|k| {
            let seed = 1000 + k;
            let agents = 100 + (k as usize * 47) % 901;
            let b = [4, 8, 16][k as usize % 3];
            let bins = (b, b + k as usize % 2, b);
            let (min, max) = ((0.0, 0.0), (24.0, 18.0));
            let crowd = synthetic_crowd(seed, agents, min, max);
            OrderParameterCase {
                seed,
                agents,
                bins,
                min,
                max,
                mi_bits: order_parameter_oracle(&crowd, bins, min, max),
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Forces

/// Plain-data agent for [`all_pairs_forces`].
#[derive(Debug, Clone, Copy)]
pub struct OracleAgent {
    pub id: u32,
    pub pos: (f64, f64),
    pub vel: (f64, f64),
    pub radius: f64,
    pub mass: f64,
    pub desired_speed: f64,
    pub direction: (f64, f64),
}

fn dist_point_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> ((f64, f64), f64) {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let mut s = if len2 > 0.0 {
        ((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2
    } else {
        0.0
    };
    s = s.clamp(0.0, 1.0);
    let c = (a.0 + s * dx, a.1 + s * dy);
    (c, ((p.0 - c.0).powi(2) + (p.1 - c.1).powi(2)).sqrt())
}

/// Net force and compressive contact magnitude on every agent, summing all
/// ordered pairs directly.
pub fn all_pairs_forces(
    agents: &[OracleAgent],
    walls: &[((f64, f64), (f64, f64))],
    p: &SfmParams,
) -> Vec<((f64, f64), f64)> {
    agents
        .iter()
        .map(|a| {
            let k = a.mass / p.relaxation_time_s;
            let mut fx = (a.direction.0 * a.desired_speed - a.vel.0) * k;
            let mut fy = (a.direction.1 * a.desired_speed - a.vel.1) * k;
            let mut contact = 0.0;
            for b in agents {
                if b.id == a.id {
                    continue;
                }
                let (dx, dy) = (a.pos.0 - b.pos.0, a.pos.1 - b.pos.1);
                let d = (dx * dx + dy * dy).sqrt();
                if d > p.cutoff_m {
                    continue;
                }
                let (nx, ny) = if d > 1e-12 {
                    (dx / d, dy / d)
                } else if a.id < b.id {
                    (1.0, 0.0)
                } else {
                    (-1.0, 0.0)
                };
                let overlap = a.radius + b.radius - d;
                let social = p.social_strength_n * (overlap / p.social_range_m).exp();
                fx += social * nx;
                fy += social * ny;
                if overlap > 0.0 {
                    let body = p.body_stiffness * overlap;
                    let (tx, ty) = (-ny, nx);
                    let dvt = (b.vel.0 - a.vel.0) * tx + (b.vel.1 - a.vel.1) * ty;
                    fx += body * nx + p.friction * overlap * dvt * tx;
                    fy += body * ny + p.friction * overlap * dvt * ty;
                    contact += body;
                }
            }
            for &(w0, w1) in walls {
                let (c, d) = dist_point_segment(a.pos, w0, w1);
                if d > p.cutoff_m || d == 0.0 {
                    continue;
                }
                let (nx, ny) = ((a.pos.0 - c.0) / d, (a.pos.1 - c.1) / d);
                let overlap = a.radius - d;
                let social = p.social_strength_n * (overlap / p.social_range_m).exp();
                fx += social * nx;
                fy += social * ny;
                if overlap > 0.0 {
                    let body = p.body_stiffness * overlap;
                    let (tx, ty) = (-ny, nx);
                    let vt = a.vel.0 * tx + a.vel.1 * ty;
                    fx += body * nx - p.friction * overlap * vt * tx;
                    fy += body * ny - p.friction * overlap * vt * ty;
                    contact += body;
                }
            }
            ((fx, fy), contact)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Navigation

/// Shortest path on a square grid of free cells.
#[derive(Debug, Clone)]
pub struct GridPath {
    /// Length of the 8-connected cell path in metres.
    pub grid_length: f64,
    /// Cell centres from start to goal.
    pub cells: Vec<Vec2>,
}

impl GridPath {
    /// Unit vector from `from` to the furthest path cell in direct line of
    /// sight, i.e. the first leg of the string-pulled path.
    pub fn first_leg(&self, from: Vec2, walls: &[Segment], clearance: f64) -> Option<Vec2> {
        let visible = |q: Vec2| clear_line(from, q, walls, clearance);
        let target = self.cells.iter().rev().find(|&&q| visible(q))?;
        let d = *target - from;
        let n = d.norm();
        (n > 1e-9).then(|| d * (1.0 / n))
    }
}

fn clear_line(a: Vec2, b: Vec2, walls: &[Segment], clearance: f64) -> bool {
    let steps = ((a.distance(b) / 0.05).ceil() as usize).max(1);
    (0..=steps).all(|k| {
        let q = a + (b - a) * (k as f64 / steps as f64);
        walls.iter().all(|w| w.distance_to(q) >= clearance)
    })
}

#[derive(PartialEq)]
struct Entry(f64, usize);
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Entry {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
    }
}

/// Dijkstra over a `cell`-metre grid covering `[min, max]`. Cells whose
/// centre is closer than `clearance` to a wall are blocked, and a move is
/// allowed only when its straight segment stays clear as well.
pub fn grid_shortest_path(
    min: Vec2,
    max: Vec2,
    walls: &[Segment],
    start: Vec2,
    goal: Vec2,
    cell: f64,
    clearance: f64,
) -> Option<GridPath> {
    let nx = ((max.x - min.x) / cell).floor() as usize;
    let ny = ((max.y - min.y) / cell).floor() as usize;
    let centre = |i: usize| {
        Vec2::new(
            min.x + (i % nx) as f64 * cell + cell / 2.0,
            min.y + (i / nx) as f64 * cell + cell / 2.0,
        )
    };
    let free: Vec<bool> = (0..nx * ny)
        .map(|i| walls.iter().all(|w| w.distance_to(centre(i)) >= clearance))
        .collect();
    let nearest_free = |p: Vec2| {
        (0..nx * ny)
            .filter(|&i| free[i] && clear_line(p, centre(i), walls, 0.0))
            .min_by(|&a, &b| centre(a).distance(p).total_cmp(&centre(b).distance(p)))
    };
    let (s, g) = (nearest_free(start)?, nearest_free(goal)?);

    let mut dist = vec![f64::INFINITY; nx * ny];
    let mut prev = vec![usize::MAX; nx * ny];
    let mut heap = BinaryHeap::new();
    dist[s] = 0.0;
    heap.push(Entry(0.0, s));
    while let Some(Entry(d, i)) = heap.pop() {
        if d > dist[i] {
            continue;
        }
        if i == g {
            break;
        }
        let (ix, iy) = ((i % nx) as isize, (i / nx) as isize);
        for dy in -1..=1isize {
            for dx in -1..=1isize {
                let (jx, jy) = (ix + dx, iy + dy);
                if (dx, dy) == (0, 0) || jx < 0 || jy < 0 || jx >= nx as isize || jy >= ny as isize {
                    continue;
                }
                let j = jy as usize * nx + jx as usize;
                if !free[j] || !clear_line(centre(i), centre(j), walls, clearance) {
                    continue;
                }
                let nd = d + cell * ((dx * dx + dy * dy) as f64).sqrt();
                if nd < dist[j] {
                    dist[j] = nd;
                    prev[j] = i;
                    heap.push(Entry(nd, j));
                }
            }
        }
    }
    if !dist[g].is_finite() {
        return None;
    }
    let mut cells = vec![centre(g)];
    let mut i = g;
    while i != s {
        i = prev[i];
        cells.push(centre(i));
    }
    cells.reverse();
    Some(GridPath {
        grid_length: dist[g],
        cells,
    })
}

// ---------------------------------------------------------------------------
// Student t distribution

/// Γ((ν + 1) / 2) / Γ(ν / 2) for a positive integer ν, by the half-integer
/// recurrence from Γ(1/2) = √π and Γ(1) = 1.
fn gamma_half_ratio(nu: u32) -> f64 {
    let sqrt_pi = std::f64::consts::PI.sqrt();
    // r(ν) = Γ((ν+1)/2) / Γ(ν/2); r(1) = 1/√π, r(2) = √π/2, r(ν+2) = r(ν)·(ν+1)/ν.
    let mut r = if nu % 2 == 1 { 1.0 / sqrt_pi } else { sqrt_pi / 2.0 };
    let mut k = if nu % 2 == 1 { 1 } else { 2 };
    while k < nu {
        r *= (k + 1) as f64 / k as f64;
        k += 2;
    }
    r
}

/// Two-tailed tail probability of Student's t with `df` degrees of freedom,
/// by composite Simpson quadrature of the density over the upper tail
/// (substituting x = t/u so the range is finite).
pub fn t_two_tailed_quadrature(t: f64, df: u32) -> f64 {
    let nu = df as f64;
    let c = gamma_half_ratio(df) / (nu * std::f64::consts::PI).sqrt();
    let t = t.abs();
    let density = |x: f64| c * (1.0 + x * x / nu).powf(-(nu + 1.0) / 2.0);
    let g = |u: f64| {
        if u <= 0.0 {
            // The integrand vanishes at u = 0 for df >= 2 and tends to
            // c·t^-ν·ν^((ν+1)/2)·t for df = 1.
            if df == 1 {
                c / t
            } else {
                0.0
            }
        } else {
            let x = t / u;
            density(x) * t / (u * u)
        }
    };
    let n = 200_000;
    let h = 1.0 / n as f64;
    let mut sum = g(0.0) + g(1.0);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * g(k as f64 * h);
    }
    2.0 * sum * h / 3.0
}

/// Published two-tailed critical values of Student's t:
/// `(df, two-tailed alpha, t)`.
pub const T_TABLE: [(u32, f64, f64); 10] = [
    (1, 0.05, 12.706205),
    (2, 0.05, 4.302653),
    (3, 0.05, 3.182446),
    (5, 0.05, 2.570582),
    (10, 0.05, 2.228139),
    (30, 0.05, 2.042272),
    (120, 0.05, 1.979930),
    (5, 0.01, 4.032143),
    (20, 0.01, 2.845340),
    (1, 0.10, 6.313752),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueCase {
    /// Sample size for the correlation test (`df + 2`).
    pub n: usize,
    /// Correlation with the tabulated t statistic: r = t / sqrt(t² + df).
    pub r: f64,
    /// The table's two-tailed significance level.
    pub published_p: f64,
    /// Quadrature p-value at `r`.
    pub oracle_p: f64,
}

pub fn p_value_cases() -> Vec<PValueCase> {
    T_TABLE
        .iter()
        .map(|&(df, alpha, t)| PValueCase {
            n: df as usize + 2,
            r: t / (t * t + df as f64).sqrt(),
            published_p: alpha,
            oracle_p: t_two_tailed_quadrature(t, df),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Checked-in files

const ORDER_PARAMETER_FILE: &str = "order_parameter.json";
const P_VALUE_FILE: &str = "p_values.json";

/// Tolerance used when comparing regenerated oracle numbers with the files.
const DRIFT_TOL: f64 = 1e-12;

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("fixture serializes") + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_order_parameter_cases() -> Result<Vec<OrderParameterCase>> {
    read_json(&fixtures_dir().join(ORDER_PARAMETER_FILE))
}

pub fn load_p_value_cases() -> Result<Vec<PValueCase>> {
    read_json(&fixtures_dir().join(P_VALUE_FILE))
}

/// Recompute every oracle file in `dir` and describe any difference from
/// what is stored there. With `bless`, overwrite the files instead and
/// return no differences.
pub fn regenerate_oracles(dir: &Path, bless: bool) -> Result<Vec<String>> {
    let op = order_parameter_cases();
    let pv = p_value_cases();
    if bless {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(&dir.join(ORDER_PARAMETER_FILE), &op)?;
        write_json(&dir.join(P_VALUE_FILE), &pv)?;
        return Ok(Vec::new());
    }
    let mut drift = Vec::new();
    let stored: Vec<OrderParameterCase> = read_json(&dir.join(ORDER_PARAMETER_FILE))?;
    if stored.len() != op.len() {
        drift.push(format!("{ORDER_PARAMETER_FILE}: {} cases stored, {} generated", stored.len(), op.len()));
    }
    for (s, g) in stored.iter().zip(&op) {
        if (s.seed, s.agents, s.bins) != (g.seed, g.agents, g.bins) || (s.mi_bits - g.mi_bits).abs() > DRIFT_TOL {
            drift.push(format!("{ORDER_PARAMETER_FILE}: seed {} stored {:?}, generated {:?}", g.seed, s, g));
        }
    }
    let stored: Vec<PValueCase> = read_json(&dir.join(P_VALUE_FILE))?;
    if stored.len() != pv.len() {
        drift.push(format!("{P_VALUE_FILE}: {} cases stored, {} generated", stored.len(), pv.len()));
    }
    for (s, g) in stored.iter().zip(&pv) {
        if s.n != g.n || (s.r - g.r).abs() > DRIFT_TOL || (s.oracle_p - g.oracle_p).abs() > DRIFT_TOL {
            drift.push(format!("{P_VALUE_FILE}: n={} stored {:?}, generated {:?}", g.n, s, g));
        }
    }
    Ok(drift)
}
