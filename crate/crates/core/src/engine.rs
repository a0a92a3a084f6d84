//! Social-force crowd dynamics with compressive contact-force tracking.
//!
//! Each agent feels a driving term `m (v0 e - v) / tau` towards its route
//! waypoint, and for every neighbour and wall within the cutoff a normal
//! term `A exp((r - d) / B) + k g(r - d)` plus sliding friction
//! `kappa g(r - d) dv_t`, with `g(x) = max(x, 0)`. The crush metric only sees
//! the compressive `k g(r - d)` part. Integration is semi-implicit Euler.

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Segment, Vec2};
use crate::navigation::Navigator;
use crate::params::SfmParams;
use crate::scenario::{apply_events, spawn_population, DoorStates, KnowledgeSet, Scenario};
use crate::spatial::NeighborGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: u32,
    pub position: Vec2,
    pub velocity: Vec2,
    /// Heading in `[-pi, pi)`.
    pub heading: f64,
    pub desired_speed: f64,
    pub radius: f64,
    pub mass: f64,
    pub knowledge: KnowledgeSet,
    /// Heading held while the agent is (nearly) stationary.
    pub last_heading: f64,
}

impl AgentState {
    pub fn new(id: u32, position: Vec2, radius: f64, mass: f64, desired_speed: f64) -> Self {
        Self {
            id,
            position,
            velocity: Vec2::ZERO,
            heading: 0.0,
            desired_speed,
            radius,
            mass,
            knowledge: KnowledgeSet::default(),
            last_heading: 0.0,
        }
    }

    fn set_heading(&mut self, theta: f64) {
        self.heading = wrap_angle(theta);
        self.last_heading = self.heading;
    }

    fn update_heading(&mut self, min_speed: f64) {
        if self.velocity.norm() >= min_speed {
            self.set_heading(self.velocity.angle());
        } else {
            self.heading = self.last_heading;
        }
    }
}

/// Complete simulation state at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SimFrame {
    pub t: f64,
    pub step: u64,
    pub agents: Vec<AgentState>,
    pub doors: DoorStates,
    /// Sum over present agents of the compressive contact force they bear.
    pub per_step_contact_force_sum: f64,
    /// Cumulative evacuees per exit, indexed like `Floorplan::exits`.
    pub exits_log: Vec<usize>,
}

/// Mean compressive contact force per present agent (0 when empty).
pub fn average_contact_force(frame: &SimFrame) -> f64 {
    if frame.agents.is_empty() {
        return 0.0;
    }
    frame.per_step_contact_force_sum / frame.agents.len() as f64
}

/// Force exerted on `i` by `j`, and the compressive magnitude of the contact.
///
/// Antisymmetric in its arguments: `pair_force(j, i) == -pair_force(i, j)`.
pub fn pair_force(i: &AgentState, j: &AgentState, p: &SfmParams) -> (Vec2, f64) {
    let diff = i.position - j.position;
    let d = diff.norm();
    let n = if d > 1e-12 {
        diff * (1.0 / d)
    } else if i.id < j.id {
        Vec2::new(1.0, 0.0)
    } else {
        Vec2::new(-1.0, 0.0)
    };
    let overlap = i.radius + j.radius - d;
    let mut f = n * (p.social_strength_n * (overlap / p.social_range_m).exp());
    let mut contact = 0.0;
    if overlap > 0.0 {
        contact = p.body_stiffness * overlap;
        let t = n.perp();
        let dv_t = (j.velocity - i.velocity).dot(t);
        f += n * contact + t * (p.friction * overlap * dv_t);
    }
    (f, contact)
}

/// Force of wall `w` on agent `a`, and the compressive contact magnitude.
pub fn wall_force(a: &AgentState, w: &Segment, p: &SfmParams) -> (Vec2, f64) {
    let c = w.closest_point(a.position);
    let diff = a.position - c;
    let d = diff.norm();
    let Some(n) = diff.normalized() else {
        return (Vec2::ZERO, 0.0);
    };
    let overlap = a.radius - d;
    let mut f = n * (p.social_strength_n * (overlap / p.social_range_m).exp());
    let mut contact = 0.0;
    if overlap > 0.0 {
        contact = p.body_stiffness * overlap;
        let t = n.perp();
        f += n * contact - t * (p.friction * overlap * a.velocity.dot(t));
    }
    (f, contact)
}

pub fn driving_force(a: &AgentState, direction: Vec2, p: &SfmParams) -> Vec2 {
    (direction * a.desired_speed - a.velocity) * (a.mass / p.relaxation_time_s)
}

/// Total force on `agent` and the compressive contact magnitude it bears.
///
/// `neighbors` may contain `agent` itself and agents beyond the cutoff; both
/// are skipped.
pub fn social_and_contact_forces(
    agent: &AgentState,
    direction: Vec2,
    neighbors: &[&AgentState],
    walls: &[Segment],
    p: &SfmParams,
) -> (Vec2, f64) {
    let mut total = driving_force(agent, direction, p);
    let mut contact = 0.0;
    for other in neighbors {
        if other.id == agent.id || agent.position.distance(other.position) > p.cutoff_m {
            continue;
        }
        let (f, c) = pair_force(agent, other, p);
        total += f;
        contact += c;
    }
    for w in walls {
        if w.distance_to(agent.position) > p.cutoff_m {
            continue;
        }
        let (f, c) = wall_force(agent, w, p);
        total += f;
        contact += c;
    }
    (total, contact)
}

/// Per-agent force breakdown, see [`Simulation::current_forces`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentForce {
    pub direction: Vec2,
    pub force: Vec2,
    pub contact: f64,
}

/// A running simulation of one scenario.
#[derive(Debug, Clone)]
pub struct Simulation {
    scenario: Scenario,
    params: SfmParams,
    nav: Navigator,
    grid: NeighborGrid,
    frame: SimFrame,
    directions: Vec<Vec2>,
    forces: Vec<Vec2>,
    contacts: Vec<f64>,
}

impl Simulation {
    /// Spawn the scenario's population and set up routing.
    pub fn new(scenario: &Scenario, params: &SfmParams) -> Result<Self> {
        let agents = spawn_population(scenario, params)?;
        Self::with_agents(scenario, params, agents)
    }

    /// Start from an explicit population (headings are initialised to face
    /// each agent's chosen route).
    pub fn with_agents(
        scenario: &Scenario,
        params: &SfmParams,
        agents: Vec<AgentState>,
    ) -> Result<Self> {
        let doors = apply_events(scenario, 0.0, &DoorStates::initial(&scenario.floorplan));
        let mut sim = Simulation {
            scenario: scenario.clone(),
            params: params.clone(),
            nav: Navigator::new(&scenario.floorplan),
            grid: NeighborGrid::new(scenario.floorplan.bounds, params.cutoff_m),
            frame: SimFrame {
                t: 0.0,
                step: 0,
                agents,
                doors,
                per_step_contact_force_sum: 0.0,
                exits_log: vec![0; scenario.floorplan.exits.len()],
            },
            directions: Vec::new(),
            forces: Vec::new(),
            contacts: Vec::new(),
        };
        for i in 0..sim.frame.agents.len() {
            let dir = sim.desired_direction(i)?;
            sim.frame.agents[i].set_heading(dir.angle());
        }
        Ok(sim)
    }

    pub fn frame(&self) -> &SimFrame {
        &self.frame
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn params(&self) -> &SfmParams {
        &self.params
    }

    pub fn navigator(&self) -> &Navigator {
        &self.nav
    }

    pub fn is_finished(&self) -> bool {
        self.frame.agents.is_empty() || self.frame.step as usize >= self.scenario.max_steps()
    }

    /// Unit vector towards the next waypoint on the shortest route to the
    /// nearest open exit the agent knows.
    ///
    /// If every known exit is closed the agent adopts the nearest open exit
    /// (and from then on knows it).
    pub fn desired_direction(&mut self, agent: usize) -> Result<Vec2> {
        let doors = &self.frame.doors;
        let a = &self.frame.agents[agent];
        let best_over = |allowed: &dyn Fn(usize) -> bool| {
            (0..doors.as_slice().len())
                .filter(|&e| doors.is_open(e) && allowed(e))
                .filter_map(|e| self.nav.route(e, a.position).map(|r| (e, r)))
                .min_by(|x, y| x.1.distance.total_cmp(&y.1.distance))
        };
        let known = a.knowledge;
        let choice = match best_over(&|e| known.contains(e)) {
            Some(c) => Some(c),
            None => {
                let fallback = best_over(&|_| true);
                if let Some((e, _)) = fallback {
                    self.frame.agents[agent].knowledge.insert(e);
                }
                fallback
            }
        };
        let Some((exit, route)) = choice else {
            return Err(Error::Trapped {
                t_s: self.frame.t,
                remaining: self.frame.agents.len(),
            });
        };
        let pos = self.frame.agents[agent].position;
        Ok((route.waypoint - pos)
            .normalized()
            .or_else(|| (self.nav.exit_target(exit) - pos).normalized())
            .unwrap_or(Vec2::new(1.0, 0.0)))
    }

    /// Walls as seen by one agent: the static walls plus every exit it cannot
    /// use (closed, or unknown to it).
    fn blocked_exits(&self, known: KnowledgeSet) -> impl Iterator<Item = &Segment> {
        let doors = &self.frame.doors;
        self.scenario
            .floorplan
            .exits
            .iter()
            .enumerate()
            .filter(move |(e, _)| !doors.is_open(*e) || !known.contains(*e))
            .map(|(_, x)| &x.segment)
    }

    /// Desired direction, net force and contact magnitude of every agent in
    /// the current frame, as the next [`step`](Self::step) would use them.
    pub fn current_forces(&mut self) -> Result<Vec<AgentForce>> {
        self.accumulate_forces()?;
        Ok((0..self.frame.agents.len())
            .map(|i| AgentForce {
                direction: self.directions[i],
                force: self.forces[i],
                contact: self.contacts[i],
            })
            .collect())
    }

    fn accumulate_forces(&mut self) -> Result<()> {
        let n = self.frame.agents.len();
        self.directions.clear();
        for i in 0..n {
            let d = self.desired_direction(i)?;
            self.directions.push(d);
        }

        let p = &self.params;
        let agents = &self.frame.agents;
        self.forces.clear();
        self.contacts.clear();
        for (a, &dir) in agents.iter().zip(&self.directions) {
            let mut f = driving_force(a, dir, p);
            let mut c = 0.0;
            for w in self.scenario.floorplan.walls.iter().chain(self.blocked_exits(a.knowledge)) {
                if w.distance_to(a.position) > p.cutoff_m {
                    continue;
                }
                let (wf, wc) = wall_force(a, w, p);
                f += wf;
                c += wc;
            }
            self.forces.push(f);
            self.contacts.push(c);
        }

        self.grid.rebuild(agents.iter().map(|a| a.position));
        let cutoff_sq = p.cutoff_m * p.cutoff_m;
        let (forces, contacts) = (&mut self.forces, &mut self.contacts);
        self.grid.for_each_candidate_pair(|i, j| {
            let (i, j) = (i.min(j), i.max(j));
            if (agents[i].position - agents[j].position).norm_sq() > cutoff_sq {
                return;
            }
            let (f, c) = pair_force(&agents[i], &agents[j], p);
            forces[i] += f;
            forces[j] -= f;
            contacts[i] += c;
            contacts[j] += c;
        });

        for (i, f) in self.forces.iter().enumerate() {
            if !f.is_finite() || !self.contacts[i].is_finite() {
                return Err(Error::NonFiniteForce {
                    agent: agents[i].id,
                    t_s: self.frame.t,
                });
            }
        }
        Ok(())
    }

    /// Advance one time step.
    pub fn step(&mut self) -> Result<()> {
        let n = self.frame.agents.len();
        let dt = self.scenario.dt_s;
        self.accumulate_forces()?;
        let p = &self.params;

        let exits = &self.scenario.floorplan.exits;
        let doors = &self.frame.doors;
        let mut contact_sum = 0.0;
        let mut kept = Vec::with_capacity(n);
        for (i, mut a) in std::mem::take(&mut self.frame.agents).into_iter().enumerate() {
            a.velocity += self.forces[i] * (dt / a.mass);
            let speed = a.velocity.norm();
            if speed > p.max_speed {
                a.velocity = a.velocity * (p.max_speed / speed);
            }
            a.position += a.velocity * dt;
            a.update_heading(p.heading_min_speed);

            let left_by = (0..exits.len()).find(|&e| {
                doors.is_open(e)
                    && a.knowledge.contains(e)
                    && exits[e].segment.distance_to(a.position) < a.radius
            });
            match left_by {
                Some(e) => self.frame.exits_log[e] += 1,
                None => {
                    contact_sum += self.contacts[i];
                    kept.push(a);
                }
            }
        }
        self.frame.agents = kept;
        self.frame.per_step_contact_force_sum = contact_sum;
        self.frame.step += 1;
        self.frame.t = self.frame.step as f64 * dt;
        self.frame.doors = apply_events(&self.scenario, self.frame.t, &self.frame.doors);
        Ok(())
    }
}
