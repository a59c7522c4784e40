//! Friction-less 2D simulation of homogeneous differential-drive swarms with
//! binary line-of-sight sensors.
//!
//! Each tick every agent reads its sensors against the pre-step world, then
//! all agents move together. Overlapping bodies are pushed apart along the
//! contact normal in one pairwise pass, and finally clamped inside the walls,
//! which makes agents slide along whatever they hit.

use std::f64::consts::TAU;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controller::{Controller, SensorKind};
use crate::error::{Error, Result};

/// Placement attempts per agent before a rollout gives up.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub x: f64,
    pub y: f64,
    /// Heading in `[0, 2π)`.
    pub theta: f64,
}

impl AgentState {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        AgentState {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }
}

/// Agent body and drive geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapabilityModel {
    pub sensors: SensorKind,
    pub wheel_radius: f64,
    pub agent_radius: f64,
    pub dt: f64,
}

impl CapabilityModel {
    pub fn new(sensors: SensorKind) -> Self {
        CapabilityModel {
            sensors,
            wheel_radius: 2.0,
            agent_radius: 5.0,
            dt: 1.0,
        }
    }

    pub fn single_sensor() -> Self {
        Self::new(SensorKind::Single)
    }

    pub fn two_sensor() -> Self {
        Self::new(SensorKind::Two)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wheel_radius > 0.0 && self.agent_radius > 0.0 && self.dt > 0.0) {
            return Err(Error::contract(
                "wheel radius, agent radius and dt must be positive",
            ));
        }
        Ok(())
    }
}

/// World dimensions and swarm size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Environment {
    pub width: f64,
    pub height: f64,
    pub agents: usize,
}

impl Default for Environment {
    fn default() -> Self {
        Environment {
            width: 500.0,
            height: 500.0,
            agents: 24,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub agents: Vec<AgentState>,
    pub width: f64,
    pub height: f64,
    pub tick: u64,
}

impl WorldState {
    pub fn new(agents: Vec<AgentState>, width: f64, height: f64) -> Self {
        WorldState {
            agents,
            width,
            height,
            tick: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `horizon + 1` snapshots; `frames[0]` is the seeded initial state.
    pub frames: Vec<WorldState>,
    pub controller: Controller,
    pub model: CapabilityModel,
    pub seed: u64,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.frames.len().saturating_sub(1)
    }

    /// Debug export: one `tick,agent,x,y,theta` row per agent per frame.
    pub fn write_csv<W: Write>(&self, out: W) -> std::result::Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["tick", "agent", "x", "y", "theta"])?;
        for frame in &self.frames {
            for (i, a) in frame.agents.iter().enumerate() {
                w.serialize((frame.tick, i, a.x, a.y, a.theta))?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn normalize_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    // rem_euclid rounds tiny negatives up to exactly TAU
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Differential-drive kinematics for one step.
pub fn step_agent(state: AgentState, v_l: f64, v_r: f64, model: &CapabilityModel) -> AgentState {
    let forward = model.wheel_radius / 2.0 * (v_l + v_r) * model.dt;
    let turn = (v_l - v_r) / (2.0 * model.agent_radius) * model.dt;
    AgentState {
        x: state.x + forward * state.theta.cos(),
        y: state.y + forward * state.theta.sin(),
        theta: normalize_angle(state.theta + turn),
    }
}

/// Binary reading of a ray cast from agent `index` at `heading + offset`.
///
/// Fires when the ray meets another agent's body disk at a strictly positive
/// distance. Range is unbounded and walls are invisible.
pub fn sense(world: &WorldState, index: usize, offset: f64, agent_radius: f64) -> bool {
    let me = world.agents[index];
    let (dy, dx) = (me.theta + offset).sin_cos();
    let r2 = agent_radius * agent_radius;
    world.agents.iter().enumerate().any(|(j, other)| {
        if j == index {
            return false;
        }
        let wx = other.x - me.x;
        let wy = other.y - me.y;
        let along = wx * dx + wy * dy;
        let dist2 = wx * wx + wy * wy;
        let perp2 = dist2 - along * along;
        if perp2 > r2 {
            return false;
        }
        // far intersection; positive whenever any part of the chord is ahead
        along + (r2 - perp2).max(0.0).sqrt() > 0.0
    })
}

fn readings(
    world: &WorldState,
    index: usize,
    controller: &Controller,
    model: &CapabilityModel,
) -> ([bool; 2], usize) {
    let forward = sense(world, index, 0.0, model.agent_radius);
    match controller.sensor_angle() {
        None => ([forward, false], 1),
        Some(angle) => (
            [
                forward,
                sense(world, index, angle.radians(), model.agent_radius),
            ],
            2,
        ),
    }
}

/// Advances the whole swarm by one tick.
pub fn step_world(
    world: &WorldState,
    controller: &Controller,
    model: &CapabilityModel,
) -> Result<WorldState> {
    if controller.kind() != model.sensors {
        return Err(Error::contract(format!(
            "{}-sensor controller on a {}-sensor model",
            controller.kind().sensor_count(),
            model.sensors.sensor_count()
        )));
    }
    let wheels: Vec<(f64, f64)> = (0..world.agents.len())
        .map(|i| {
            let (r, n) = readings(world, i, controller, model);
            controller.select_velocities(&r[..n])
        })
        .collect::<Result<_>>()?;

    let mut agents: Vec<AgentState> = world
        .agents
        .iter()
        .zip(&wheels)
        .map(|(a, &(l, r))| step_agent(*a, l, r, model))
        .collect();

    separate_overlaps(&mut agents, model.agent_radius);
    for a in &mut agents {
        clamp_to_walls(a, world.width, world.height, model.agent_radius);
    }

    Ok(WorldState {
        agents,
        width: world.width,
        height: world.height,
        tick: world.tick + 1,
    })
}

/// One pass of symmetric minimal-translation separation over all pairs.
fn separate_overlaps(agents: &mut [AgentState], radius: f64) {
    let min_dist = 2.0 * radius;
    for i in 0..agents.len() {
        for j in i + 1..agents.len() {
            let dx = agents[j].x - agents[i].x;
            let dy = agents[j].y - agents[i].y;
            let d2 = dx * dx + dy * dy;
            if d2 >= min_dist * min_dist {
                continue;
            }
            let d = d2.sqrt();
            // coincident centers have no normal; split along x
            let (nx, ny) = if d > 0.0 { (dx / d, dy / d) } else { (1.0, 0.0) };
            let push = (min_dist - d) / 2.0;
            agents[i].x -= nx * push;
            agents[i].y -= ny * push;
            agents[j].x += nx * push;
            agents[j].y += ny * push;
        }
    }
}

fn clamp_to_walls(a: &mut AgentState, width: f64, height: f64, radius: f64) {
    a.x = a.x.clamp(radius.min(width / 2.0), (width - radius).max(width / 2.0));
    a.y = a.y.clamp(radius.min(height / 2.0), (height - radius).max(height / 2.0));
}

/// Uniform non-overlapping placement with uniform headings.
pub fn initial_world<R: Rng + ?Sized>(
    env: &Environment,
    model: &CapabilityModel,
    rng: &mut R,
) -> Result<WorldState> {
    let r = model.agent_radius;
    if env.width <= 2.0 * r || env.height <= 2.0 * r {
        return Err(Error::contract("environment smaller than one agent body"));
    }
    let mut agents: Vec<AgentState> = Vec::with_capacity(env.agents);
    for index in 0..env.agents {
        let mut placed = false;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let x = rng.random_range(r..=env.width - r);
            let y = rng.random_range(r..=env.height - r);
            let clear = agents
                .iter()
                .all(|a| (a.x - x).powi(2) + (a.y - y).powi(2) >= (2.0 * r).powi(2));
            if clear {
                let theta = rng.random_range(0.0..TAU);
                agents.push(AgentState { x, y, theta });
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Placement {
                agent: index,
                attempts: MAX_PLACEMENT_ATTEMPTS,
            });
        }
    }
    Ok(WorldState::new(agents, env.width, env.height))
}

/// Simulates `horizon` steps from a seeded initial placement.
pub fn rollout(
    controller: &Controller,
    model: &CapabilityModel,
    env: &Environment,
    seed: u64,
    horizon: usize,
) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(Error::contract("rollout horizon must be at least 1"));
    }
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = initial_world(env, model, &mut rng)?;
    rollout_from(start, controller, model, seed, horizon)
}

/// Simulates `horizon` steps from an explicit initial world.
pub fn rollout_from(
    start: WorldState,
    controller: &Controller,
    model: &CapabilityModel,
    seed: u64,
    horizon: usize,
) -> Result<Trajectory> {
    let mut frames = Vec::with_capacity(horizon + 1);
    frames.push(start);
    for _ in 0..horizon {
        let next = step_world(frames.last().expect("nonempty"), controller, model)?;
        frames.push(next);
    }
    Ok(Trajectory {
        frames,
        controller: controller.clone(),
        model: *model,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::examples;
    use std::f64::consts::PI;

    fn model() -> CapabilityModel {
        CapabilityModel::single_sensor()
    }

    #[test]
    fn straight_line_step() {
        let s = step_agent(AgentState::new(0.0, 0.0, 0.0), 1.0, 1.0, &model());
        assert_eq!((s.x, s.y, s.theta), (2.0, 0.0, 0.0));
    }

    #[test]
    fn zero_velocity_step_is_identity() {
        let a = AgentState::new(3.0, 4.0, 1.0);
        assert_eq!(step_agent(a, 0.0, 0.0, &model()), a);
    }

    #[test]
    fn spin_in_place() {
        let s = step_agent(AgentState::new(0.0, 0.0, 0.0), 1.0, -1.0, &model());
        assert_eq!((s.x, s.y), (0.0, 0.0));
        assert_eq!(s.theta, 0.2);
    }

    #[test]
    fn heading_wraps_into_range() {
        let s = step_agent(AgentState::new(0.0, 0.0, 0.1), -1.0, 1.0, &model());
        assert!((s.theta - (TAU - 0.1)).abs() < 1e-12);
        assert_eq!(normalize_angle(-1e-18), 0.0);
    }

    fn two_agent_world(theta0: f64) -> WorldState {
        WorldState::new(
            vec![
                AgentState::new(0.0, 0.0, theta0),
                AgentState::new(100.0, 0.0, 0.0),
            ],
            500.0,
            500.0,
        )
    }

    #[test]
    fn sensor_sees_agent_ahead() {
        assert!(sense(&two_agent_world(0.0), 0, 0.0, 5.0));
    }

    #[test]
    fn sensor_ignores_agent_behind() {
        assert!(!sense(&two_agent_world(PI), 0, 0.0, 5.0));
    }

    #[test]
    fn lone_agent_senses_nothing() {
        let w = WorldState::new(vec![AgentState::new(250.0, 250.0, 0.0)], 500.0, 500.0);
        assert!(!sense(&w, 0, 0.0, 5.0));
        for k in 0..16 {
            assert!(!sense(&w, 0, k as f64 * PI / 8.0, 5.0));
        }
    }

    #[test]
    fn sensor_grazes_disk_edge() {
        let mut w = two_agent_world(0.0);
        w.agents[1].y = 4.999;
        assert!(sense(&w, 0, 0.0, 5.0));
        w.agents[1].y = 5.001;
        assert!(!sense(&w, 0, 0.0, 5.0));
    }

    #[test]
    fn angled_sensor_offset() {
        let w = WorldState::new(
            vec![
                AgentState::new(100.0, 100.0, 0.0),
                AgentState::new(100.0, 200.0, 0.0),
            ],
            500.0,
            500.0,
        );
        assert!(!sense(&w, 0, 0.0, 5.0));
        assert!(sense(&w, 0, PI / 2.0, 5.0));
        assert!(!sense(&w, 0, -PI / 2.0, 5.0));
    }

    #[test]
    fn wall_clamp_keeps_sliding() {
        let c = Controller::single([1.0, 1.0, 1.0, 1.0]).unwrap();
        let theta = PI / 4.0;
        let start = WorldState::new(vec![AgentState::new(495.0, 100.0, theta)], 500.0, 500.0);
        let next = step_world(&start, &c, &model()).unwrap();
        let free = step_agent(start.agents[0], 1.0, 1.0, &model());
        assert_eq!(next.agents[0].x, 495.0);
        assert_eq!(next.agents[0].y, free.y);
        assert!(next.agents[0].y > 100.0);
        assert_eq!(next.tick, 1);
    }

    #[test]
    fn overlapping_pair_is_separated() {
        let c = Controller::single([0.0; 4]).unwrap();
        let start = WorldState::new(
            vec![
                AgentState::new(200.0, 200.0, 0.0),
                AgentState::new(208.0, 200.0, 0.0),
            ],
            500.0,
            500.0,
        );
        let next = step_world(&start, &c, &model()).unwrap();
        let d = (next.agents[1].x - next.agents[0].x).hypot(next.agents[1].y - next.agents[0].y);
        assert!(d >= 10.0 - 1e-9, "{d}");
        // symmetric push
        assert!((next.agents[0].x - 199.0).abs() < 1e-12);
        assert!((next.agents[1].x - 209.0).abs() < 1e-12);
    }

    #[test]
    fn coincident_agents_split_along_x() {
        let c = Controller::single([0.0; 4]).unwrap();
        let start = WorldState::new(
            vec![AgentState::new(200.0, 200.0, 0.0), AgentState::new(200.0, 200.0, 1.0)],
            500.0,
            500.0,
        );
        let next = step_world(&start, &c, &model()).unwrap();
        assert_eq!(next.agents[0].x, 195.0);
        assert_eq!(next.agents[1].x, 205.0);
    }

    #[test]
    fn lone_agent_moves_per_kinematics() {
        let c = Controller::single([0.5, 0.3, -1.0, 1.0]).unwrap();
        let start = WorldState::new(vec![AgentState::new(250.0, 250.0, 0.7)], 500.0, 500.0);
        let next = step_world(&start, &c, &model()).unwrap();
        assert_eq!(next.agents[0], step_agent(start.agents[0], 0.5, 0.3, &model()));
    }

    #[test]
    fn model_mismatch_is_rejected() {
        let c = examples::nested_cycle();
        let w = WorldState::new(vec![AgentState::new(10.0, 10.0, 0.0)], 500.0, 500.0);
        assert!(step_world(&w, &c, &model()).is_err());
    }

    #[test]
    fn rollout_zero_horizon_is_an_error() {
        let c = Controller::single(examples::MILLING).unwrap();
        let r = rollout(&c, &model(), &Environment::default(), 1, 0);
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn overcrowded_environment_fails_placement() {
        let env = Environment {
            width: 30.0,
            height: 30.0,
            agents: 24,
        };
        let c = Controller::single(examples::MILLING).unwrap();
        assert!(matches!(
            rollout(&c, &model(), &env, 1, 5),
            Err(Error::Placement { .. })
        ));
    }

    #[test]
    fn initial_placement_has_no_overlaps() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = initial_world(&Environment::default(), &model(), &mut rng).unwrap();
        assert_eq!(w.agents.len(), 24);
        for (i, a) in w.agents.iter().enumerate() {
            assert!(a.x >= 5.0 && a.x <= 495.0 && a.y >= 5.0 && a.y <= 495.0);
            assert!((0.0..TAU).contains(&a.theta));
            for b in &w.agents[i + 1..] {
                assert!((a.x - b.x).hypot(a.y - b.y) >= 10.0);
            }
        }
    }

    #[test]
    fn csv_export_has_one_row_per_agent_frame() {
        let c = Controller::single(examples::MILLING).unwrap();
        let env = Environment {
            agents: 3,
            ..Environment::default()
        };
        let t = rollout(&c, &model(), &env, 2, 4).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 5 * 3);
        assert!(text.starts_with("tick,agent,x,y,theta\n0,0,"));
    }
}
