//! Evacuation scenarios: geometry, population, exit knowledge and timed door
//! events.
//!
//! Scenarios are stored as JSON (see `docs/scenario-format.md`). Spawning is a
//! pure function of the scenario and its `rng_seed`; the random stream is
//! ChaCha8 seeded with `ChaCha8Rng::seed_from_u64(rng_seed)` and consumed in a
//! fixed order (placement region by region, then exact-count knowledge rules,
//! then fraction rules agent by agent).

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::AgentState;
use crate::error::{Error, Result, Violation};
use crate::geometry::{
    convex_contains, convex_inner_distance, polygon_is_convex, polygon_signed_area, Rect, Segment,
    Vec2,
};
use crate::params::SfmParams;

const STATION_IDEALISED: &str = include_str!("../data/station_idealised.json");
const STATION_REALISTIC: &str = include_str!("../data/station_realistic.json");

/// Names of the scenarios compiled into the crate.
pub const BUNDLED_SCENARIOS: [&str; 2] = ["station_idealised", "station_realistic"];

/// Upper bound on agent body radius used for the spawn density check.
pub const MAX_BODY_RADIUS_M: f64 = 0.35;
/// Largest fraction of a spawn polygon that agent discs may cover.
pub const MAX_SPAWN_COVERAGE: f64 = 0.7;
const BOUNDARY_TOL_M: f64 = 1e-6;
const MAX_PLACEMENT_ATTEMPTS: usize = 20_000;
const MAX_KNOWLEDGE_REDRAWS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exit {
    pub id: String,
    pub segment: Segment,
    #[serde(default = "default_true")]
    pub open: bool,
    pub capacity_width: f64,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Floorplan {
    pub bounds: Rect,
    pub walls: Vec<Segment>,
    pub exits: Vec<Exit>,
}

impl Floorplan {
    pub fn exit_index(&self, id: &str) -> Option<usize> {
        self.exits.iter().position(|e| e.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpawnRegion {
    #[serde(default)]
    pub name: String,
    pub polygon: Vec<Vec2>,
    pub agent_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventAction {
    CloseExit(String),
    OpenExit(String),
}

impl EventAction {
    pub fn exit_id(&self) -> &str {
        match self {
            EventAction::CloseExit(id) | EventAction::OpenExit(id) => id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimedEvent {
    pub time_s: f64,
    pub action: EventAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnowledgeMode {
    /// Each agent learns the exit independently with probability `p`.
    Fraction(f64),
    /// Exactly `k` agents, drawn without replacement, learn the exit.
    ExactCount(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnowledgeRule {
    pub exit_id: String,
    pub mode: KnowledgeMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub id: String,
    pub floorplan: Floorplan,
    pub spawn_regions: Vec<SpawnRegion>,
    #[serde(default)]
    pub events: Vec<TimedEvent>,
    #[serde(default)]
    pub knowledge_rules: Vec<KnowledgeRule>,
    pub population: usize,
    pub dt_s: f64,
    pub max_time_s: f64,
    pub rng_seed: u64,
}

/// Set of exits an agent knows about, as a bitmask over floorplan exit indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct KnowledgeSet(u64);

impl KnowledgeSet {
    pub const MAX_EXITS: usize = 64;

    pub fn all(n_exits: usize) -> Self {
        if n_exits >= 64 {
            KnowledgeSet(u64::MAX)
        } else {
            KnowledgeSet((1u64 << n_exits) - 1)
        }
    }

    pub fn contains(self, exit: usize) -> bool {
        self.0 >> exit & 1 == 1
    }

    pub fn insert(&mut self, exit: usize) {
        self.0 |= 1 << exit;
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..64).filter(move |&i| self.contains(i))
    }

    pub fn bits(self) -> u64 {
        self.0
    }
}

/// Open/closed state of every exit, indexed like `Floorplan::exits`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DoorStates(Vec<bool>);

impl DoorStates {
    pub fn initial(floorplan: &Floorplan) -> Self {
        DoorStates(floorplan.exits.iter().map(|e| e.open).collect())
    }

    pub fn is_open(&self, exit: usize) -> bool {
        self.0[exit]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn any_open(&self) -> bool {
        self.0.iter().any(|&o| o)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} ({} agents, {} exits, {} events, dt {} s)",
            self.id,
            self.population,
            self.floorplan.exits.len(),
            self.events.len(),
            self.dt_s
        )
    }
}

impl Scenario {
    /// Parse a scenario from JSON text and validate it.
    pub fn from_json_str(text: &str, context: &str) -> Result<Self> {
        let mut s: Scenario = serde_json::from_str(text).map_err(|e| Error::json(context, e))?;
        if s.id.is_empty() {
            s.id = context.to_string();
        }
        let violations = validate_scenario(&s);
        if violations.is_empty() {
            Ok(s)
        } else {
            Err(Error::Validation(violations))
        }
    }

    /// One of [`BUNDLED_SCENARIOS`].
    pub fn bundled(name: &str) -> Option<Self> {
        let text = match name {
            "station_idealised" => STATION_IDEALISED,
            "station_realistic" => STATION_REALISTIC,
            _ => return None,
        };
        Some(Self::from_json_str(text, name).expect("bundled scenario is valid"))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Steps per simulated second (`1 / dt_s`, a whole number for valid
    /// scenarios).
    pub fn steps_per_second(&self) -> usize {
        (1.0 / self.dt_s).round() as usize
    }

    pub fn max_steps(&self) -> usize {
        (self.max_time_s / self.dt_s).round() as usize
    }
}

/// Load a scenario from a file path, or by bundled name when `path` names one
/// of [`BUNDLED_SCENARIOS`] and no such file exists.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    if !path.exists() {
        if let Some(s) = path.to_str().and_then(Scenario::bundled) {
            return Ok(s);
        }
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("scenario");
    Scenario::from_json_str(&text, stem)
}

/// Check every scenario invariant; an empty list means the scenario is valid.
pub fn validate_scenario(s: &Scenario) -> Vec<Violation> {
    let mut v = Vec::new();
    let fp = &s.floorplan;
    let b = fp.bounds;

    if !(b.max.x > b.min.x && b.max.y > b.min.y) {
        v.push(Violation::new("floorplan.bounds", "max must exceed min on both axes"));
    }
    for (i, w) in fp.walls.iter().enumerate() {
        if !(w.length() > 0.0) {
            v.push(Violation::new(
                format!("floorplan.walls[{i}]"),
                "wall must have strictly positive length",
            ));
        }
        if !b.contains(w.a) || !b.contains(w.b) {
            v.push(Violation::new(
                format!("floorplan.walls[{i}]"),
                "wall endpoints must lie inside bounds",
            ));
        }
    }

    if fp.exits.len() > KnowledgeSet::MAX_EXITS {
        v.push(Violation::new("floorplan.exits", "at most 64 exits are supported"));
    }
    for (i, e) in fp.exits.iter().enumerate() {
        let field = format!("floorplan.exits[{i}] ({})", e.id);
        if fp.exits[..i].iter().any(|o| o.id == e.id) {
            v.push(Violation::new(&field, "exit ids must be unique"));
        }
        let len = e.segment.length();
        if !(e.capacity_width > 0.0) || (e.capacity_width - len).abs() > BOUNDARY_TOL_M {
            v.push(Violation::new(
                &field,
                format!(
                    "capacity_width ({}) must equal segment length ({len}) and be > 0",
                    e.capacity_width
                ),
            ));
        }
        if !exit_on_boundary(fp, &e.segment) {
            v.push(Violation::new(
                &field,
                "exit segment must lie on a wall line or the outer bounds",
            ));
        }
    }

    let mut total = 0usize;
    for (i, r) in s.spawn_regions.iter().enumerate() {
        let field = format!("spawn_regions[{i}] ({})", r.name);
        total += r.agent_count;
        if r.polygon.len() < 3 || !polygon_is_convex(&r.polygon) {
            v.push(Violation::new(&field, "polygon must be convex with >= 3 vertices"));
            continue;
        }
        if r.polygon.iter().any(|&p| !b.contains(p)) {
            v.push(Violation::new(&field, "polygon must lie inside bounds"));
        }
        if fp.walls.iter().any(|w| wall_enters_polygon(w, &r.polygon)) {
            v.push(Violation::new(&field, "polygon must lie in walkable space (a wall crosses it)"));
        }
        let area = polygon_signed_area(&r.polygon).abs();
        let needed = r.agent_count as f64 * PI * MAX_BODY_RADIUS_M * MAX_BODY_RADIUS_M;
        if needed > MAX_SPAWN_COVERAGE * area {
            v.push(Violation::new(
                &field,
                format!(
                    "agent_count x pi r_max^2 = {needed:.2} m^2 exceeds {MAX_SPAWN_COVERAGE} x area ({:.2} m^2)",
                    MAX_SPAWN_COVERAGE * area
                ),
            ));
        }
    }
    if total != s.population {
        v.push(Violation::new(
            "population",
            format!("sum of spawn_regions agent_count ({total}) must equal population ({})", s.population),
        ));
    }

    for (i, ev) in s.events.iter().enumerate() {
        let field = format!("events[{i}]");
        if !(ev.time_s >= 0.0 && ev.time_s.is_finite()) {
            v.push(Violation::new(&field, "time_s must be finite and >= 0"));
        }
        if fp.exit_index(ev.action.exit_id()).is_none() {
            v.push(Violation::new(
                &field,
                format!("references unknown exit '{}'", ev.action.exit_id()),
            ));
        }
    }

    for (i, rule) in s.knowledge_rules.iter().enumerate() {
        let field = format!("knowledge_rules[{i}] ({})", rule.exit_id);
        if fp.exit_index(&rule.exit_id).is_none() {
            v.push(Violation::new(&field, "references unknown exit"));
        }
        if s.knowledge_rules[..i].iter().any(|o| o.exit_id == rule.exit_id) {
            v.push(Violation::new(&field, "at most one rule per exit"));
        }
        match rule.mode {
            KnowledgeMode::Fraction(p) if !(0.0..=1.0).contains(&p) => {
                v.push(Violation::new(&field, "fraction must be in [0, 1]"));
            }
            KnowledgeMode::ExactCount(k) if k > s.population => {
                v.push(Violation::new(&field, "exact_count must not exceed population"));
            }
            _ => {}
        }
    }

    if !(s.dt_s > 0.0 && s.dt_s.is_finite()) {
        v.push(Violation::new("dt_s", "must be > 0"));
    } else {
        let inv = 1.0 / s.dt_s;
        if (inv - inv.round()).abs() > 1e-9 * inv.max(1.0) {
            v.push(Violation::new("dt_s", "1 / dt_s must be a whole number"));
        }
    }
    if !(s.max_time_s >= 1.0 && s.max_time_s.is_finite()) {
        v.push(Violation::new("max_time_s", "must be >= 1 s"));
    }
    v
}

fn exit_on_boundary(fp: &Floorplan, seg: &Segment) -> bool {
    let on_line = |line: &Segment| {
        line.line_distance(seg.a) <= BOUNDARY_TOL_M && line.line_distance(seg.b) <= BOUNDARY_TOL_M
    };
    let on_edge = |edge: &Segment| {
        edge.distance_to(seg.a) <= BOUNDARY_TOL_M && edge.distance_to(seg.b) <= BOUNDARY_TOL_M
    };
    fp.walls.iter().any(on_line) || fp.bounds.edges().iter().any(on_edge)
}

fn wall_enters_polygon(w: &Segment, poly: &[Vec2]) -> bool {
    let n = poly.len();
    let crosses_edge = (0..n).any(|i| Segment::new(poly[i], poly[(i + 1) % n]).intersects(w));
    crosses_edge || convex_contains(poly, w.a) || convex_contains(poly, w.b)
}

/// Apply every event with `time_s <= t`, in time order, to `doors`.
pub fn apply_events(s: &Scenario, t: f64, doors: &DoorStates) -> DoorStates {
    let mut out = doors.clone();
    let mut due: Vec<&TimedEvent> = s.events.iter().filter(|e| e.time_s <= t).collect();
    due.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
    for ev in due {
        if let Some(i) = s.floorplan.exit_index(ev.action.exit_id()) {
            out.0[i] = matches!(ev.action, EventAction::OpenExit(_));
        }
    }
    out
}

/// Place the initial population and assign exit knowledge.
///
/// Body radius and desired speed are drawn uniformly from the ranges in
/// `params`. Exits without a knowledge rule are known to every agent.
pub fn spawn_population(s: &Scenario, params: &SfmParams) -> Result<Vec<AgentState>> {
    let mut rng = ChaCha8Rng::seed_from_u64(s.rng_seed);
    let walls = &s.floorplan.walls;
    let mut agents: Vec<AgentState> = Vec::with_capacity(s.population);

    for (ri, region) in s.spawn_regions.iter().enumerate() {
        let poly = &region.polygon;
        let (lo, hi) = poly.iter().fold(
            (Vec2::new(f64::INFINITY, f64::INFINITY), Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY)),
            |(lo, hi), p| (Vec2::new(lo.x.min(p.x), lo.y.min(p.y)), Vec2::new(hi.x.max(p.x), hi.y.max(p.y))),
        );
        for k in 0..region.agent_count {
            let radius = rng.gen_range(params.radius_min_m..=params.radius_max_m);
            let desired_speed = rng.gen_range(params.desired_speed_min..=params.desired_speed_max);
            let mut placed = None;
            for _ in 0..MAX_PLACEMENT_ATTEMPTS {
                let p = Vec2::new(rng.gen_range(lo.x..=hi.x), rng.gen_range(lo.y..=hi.y));
                if convex_inner_distance(poly, p) < radius {
                    continue;
                }
                if walls.iter().any(|w| w.distance_to(p) < radius) {
                    continue;
                }
                if agents
                    .iter()
                    .any(|a| a.position.distance(p) < a.radius + radius)
                {
                    continue;
                }
                placed = Some(p);
                break;
            }
            let position = placed.ok_or(Error::Placement {
                region: ri,
                agent: k,
                attempts: MAX_PLACEMENT_ATTEMPTS,
            })?;
            agents.push(AgentState::new(
                agents.len() as u32,
                position,
                radius,
                params.mass_kg,
                desired_speed,
            ));
        }
    }

    let n_exits = s.floorplan.exits.len();
    let ruled: Vec<Option<KnowledgeMode>> = (0..n_exits)
        .map(|i| {
            s.knowledge_rules
                .iter()
                .find(|r| r.exit_id == s.floorplan.exits[i].id)
                .map(|r| r.mode)
        })
        .collect();
    for (exit, mode) in ruled.iter().enumerate() {
        match mode {
            None => agents.iter_mut().for_each(|a| a.knowledge.insert(exit)),
            Some(KnowledgeMode::ExactCount(k)) => {
                for i in index::sample(&mut rng, agents.len(), *k).into_vec() {
                    agents[i].knowledge.insert(exit);
                }
            }
            Some(KnowledgeMode::Fraction(_)) => {}
        }
    }
    let fractions: Vec<(usize, f64)> = ruled
        .iter()
        .enumerate()
        .filter_map(|(i, m)| match m {
            Some(KnowledgeMode::Fraction(p)) => Some((i, *p)),
            _ => None,
        })
        .collect();
    for (ai, agent) in agents.iter_mut().enumerate() {
        let base = agent.knowledge;
        let mut tries = 0;
        loop {
            let mut k = base;
            for &(exit, p) in &fractions {
                if rng.gen_bool(p) {
                    k.insert(exit);
                }
            }
            if !k.is_empty() {
                agent.knowledge = k;
                break;
            }
            tries += 1;
            if tries >= MAX_KNOWLEDGE_REDRAWS || fractions.iter().all(|&(_, p)| p == 0.0) {
                return Err(Error::NoKnowledge { agent: ai });
            }
        }
    }
    Ok(agents)
}
