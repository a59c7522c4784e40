//! Behavior vectors and the hand-crafted five-feature baseline mapping
//! (average speed, angular momentum, radial variance, scatter, group
//! rotation).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{Trajectory, WorldState};

pub const BEHAVIOR_DIM: usize = 5;

/// Mapping id of the hand-crafted features.
pub const HAND_MAPPING: &str = "hand";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorVector {
    pub values: Vec<f64>,
    pub mapping_id: String,
}

impl BehaviorVector {
    pub fn new(values: Vec<f64>, mapping_id: impl Into<String>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("behavior vector has non-finite entries"));
        }
        Ok(BehaviorVector {
            values,
            mapping_id: mapping_id.into(),
        })
    }

    pub fn distance(&self, other: &BehaviorVector) -> f64 {
        euclidean(&self.values, &other.values)
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Named view of the five hand-crafted features.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HandFeatures {
    pub average_speed: f64,
    pub angular_momentum: f64,
    pub radial_variance: f64,
    pub scatter: f64,
    pub group_rotation: f64,
}

impl HandFeatures {
    pub fn to_array(self) -> [f64; 5] {
        [
            self.average_speed,
            self.angular_momentum,
            self.radial_variance,
            self.scatter,
            self.group_rotation,
        ]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        HandFeatures {
            average_speed: a[0],
            angular_momentum: a[1],
            radial_variance: a[2],
            scatter: a[3],
            group_rotation: a[4],
        }
    }
}

/// z-component of the 2D cross product.
fn cross(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    ax * by - ay * bx
}

/// Features of one frame. `v_i` is the displacement from `prev` over `dt`;
/// `radius` is the normalizer `R`. Agents sitting exactly on the centroid
/// contribute nothing to group rotation.
pub fn frame_features(prev: &WorldState, cur: &WorldState, dt: f64, radius: f64) -> HandFeatures {
    let n = cur.agents.len();
    if n == 0 {
        return HandFeatures::default();
    }
    let nf = n as f64;
    let mx = cur.agents.iter().map(|a| a.x).sum::<f64>() / nf;
    let my = cur.agents.iter().map(|a| a.y).sum::<f64>() / nf;

    let mut speed = 0.0;
    let mut momentum = 0.0;
    let mut rotation = 0.0;
    let mut spread_sq = 0.0;
    let mut dists = Vec::with_capacity(n);
    for (p, c) in prev.agents.iter().zip(&cur.agents) {
        let vx = (c.x - p.x) / dt;
        let vy = (c.y - p.y) / dt;
        let rx = c.x - mx;
        let ry = c.y - my;
        let d = rx.hypot(ry);
        speed += vx.hypot(vy);
        momentum += cross(vx, vy, rx, ry);
        if d > 0.0 {
            rotation += cross(vx, vy, rx / d, ry / d);
        }
        spread_sq += d * d;
        dists.push(d);
    }
    let mean_d = dists.iter().sum::<f64>() / nf;
    let radial = dists.iter().map(|d| (d - mean_d).powi(2)).sum::<f64>();

    HandFeatures {
        average_speed: speed / nf,
        angular_momentum: momentum / (radius * nf),
        radial_variance: radial / (radius * radius * nf),
        scatter: spread_sq / (radius * radius * nf),
        group_rotation: rotation / (radius * nf),
    }
}

/// Normalizer `R`: half the environment's side.
pub fn normalization_radius(world: &WorldState) -> f64 {
    world.width.max(world.height) / 2.0
}

/// Mean features over frames `start..start + count`. Each frame needs its
/// predecessor, so `start >= 1`.
pub fn hand_features_over(traj: &Trajectory, start: usize, count: usize) -> Result<HandFeatures> {
    if start == 0 || count == 0 || start + count > traj.frames.len() {
        return Err(Error::contract(format!(
            "feature window {start}..{} needs frames 1..={} of a {}-frame trajectory",
            start + count,
            traj.frames.len().saturating_sub(1),
            traj.frames.len()
        )));
    }
    let radius = normalization_radius(&traj.frames[0]);
    let mut sum = [0.0; 5];
    for t in start..start + count {
        let f = frame_features(&traj.frames[t - 1], &traj.frames[t], traj.model.dt, radius);
        for (s, v) in sum.iter_mut().zip(f.to_array()) {
            *s += v;
        }
    }
    Ok(HandFeatures::from_array(sum.map(|s| s / count as f64)))
}

/// Hand-crafted behavior vector averaged over the final `window` frames.
pub fn hand_crafted_embed(traj: &Trajectory, window: usize) -> Result<BehaviorVector> {
    if traj.frames.len() < window + 1 {
        return Err(Error::contract(format!(
            "hand-crafted window {window} needs {} frames, trajectory has {}",
            window + 1,
            traj.frames.len()
        )));
    }
    let f = hand_features_over(traj, traj.frames.len() - window, window)?;
    BehaviorVector::new(f.to_array().to_vec(), HAND_MAPPING)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::Controller;
    use crate::sim::{AgentState, CapabilityModel};
    use proptest::prelude::*;

    fn world(pts: &[(f64, f64)]) -> WorldState {
        WorldState::new(
            pts.iter().map(|&(x, y)| AgentState::new(x, y, 0.0)).collect(),
            500.0,
            500.0,
        )
    }

    fn traj(frames: Vec<WorldState>) -> Trajectory {
        Trajectory {
            frames,
            controller: Controller::single([0.0; 4]).unwrap(),
            model: CapabilityModel::single_sensor(),
            seed: 0,
        }
    }

    #[test]
    fn stationary_swarm_has_no_motion_features() {
        let w = world(&[(100.0, 100.0), (200.0, 150.0), (300.0, 400.0)]);
        let b = hand_crafted_embed(&traj(vec![w; 200]), 160).unwrap();
        assert_eq!(b.values[0], 0.0);
        assert_eq!(b.values[1], 0.0);
        assert_eq!(b.values[4], 0.0);
        assert!(b.values[3] > 0.0);
        assert!(b.values[2] >= 0.0);
    }

    #[test]
    fn coincident_swarm_is_degenerate() {
        let w = world(&[(250.0, 250.0); 4]);
        let b = hand_crafted_embed(&traj(vec![w; 170]), 160).unwrap();
        assert_eq!(b.values, vec![0.0; 5]);
    }

    #[test]
    fn window_longer_than_trajectory_is_rejected() {
        let w = world(&[(250.0, 250.0)]);
        assert!(hand_crafted_embed(&traj(vec![w; 160]), 160).is_err());
    }

    #[test]
    fn rigid_rotation_values() {
        // two agents on a circle of radius 10 rotating counter-clockwise by 0.1 rad
        let at = |phi: f64| {
            world(&[
                (250.0 + 10.0 * phi.cos(), 250.0 + 10.0 * phi.sin()),
                (250.0 - 10.0 * phi.cos(), 250.0 - 10.0 * phi.sin()),
            ])
        };
        let f = frame_features(&at(0.0), &at(0.1), 1.0, 250.0);
        let chord = 2.0 * 10.0 * (0.05f64).sin();
        assert!((f.average_speed - chord).abs() < 1e-12);
        assert!((f.scatter - 100.0 / 62_500.0).abs() < 1e-12);
        assert!(f.radial_variance.abs() < 1e-12);
        // velocity is perpendicular-ish to the radius; v x r is negative for ccw motion
        assert!(f.angular_momentum < 0.0);
        assert!(f.group_rotation < 0.0);
        assert!((f.angular_momentum - f.group_rotation * 10.0).abs() < 1e-12);
    }

    fn arb_pair() -> impl Strategy<Value = (Vec<(f64, f64)>, Vec<(f64, f64)>)> {
        prop::collection::vec((0.0f64..500.0, 0.0f64..500.0, -2.0f64..2.0, -2.0f64..2.0), 2..12)
            .prop_map(|v| {
                let prev = v.iter().map(|&(x, y, _, _)| (x, y)).collect();
                let cur = v.iter().map(|&(x, y, dx, dy)| (x + dx, y + dy)).collect();
                (prev, cur)
            })
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
    }

    proptest! {
        #[test]
        fn translation_invariance((prev, cur) in arb_pair(), tx in -100.0f64..100.0, ty in -100.0f64..100.0) {
            let shift = |p: &[(f64, f64)]| p.iter().map(|&(x, y)| (x + tx, y + ty)).collect::<Vec<_>>();
            let a = frame_features(&world(&prev), &world(&cur), 1.0, 250.0).to_array();
            let b = frame_features(&world(&shift(&prev)), &world(&shift(&cur)), 1.0, 250.0).to_array();
            for (x, y) in a.iter().zip(b) {
                prop_assert!(close(*x, y), "{x} vs {y}");
            }
        }

        #[test]
        fn rotation_invariance((prev, cur) in arb_pair(), phi in 0.0f64..std::f64::consts::TAU) {
            let (s, c) = phi.sin_cos();
            let rot = |p: &[(f64, f64)]| p.iter().map(|&(x, y)| (c * x - s * y, s * x + c * y)).collect::<Vec<_>>();
            let a = frame_features(&world(&prev), &world(&cur), 1.0, 250.0).to_array();
            let b = frame_features(&world(&rot(&prev)), &world(&rot(&cur)), 1.0, 250.0).to_array();
            for (x, y) in a.iter().zip(b) {
                prop_assert!((x - y).abs() < 1e-9, "{x} vs {y}");
            }
        }

        #[test]
        fn scaling_behavior((prev, cur) in arb_pair(), s in 0.1f64..3.0) {
            let scale = |p: &[(f64, f64)]| p.iter().map(|&(x, y)| (x * s, y * s)).collect::<Vec<_>>();
            let a = frame_features(&world(&prev), &world(&cur), 1.0, 250.0);
            let b = frame_features(&world(&scale(&prev)), &world(&scale(&cur)), 1.0, 250.0);
            prop_assert!(close(b.average_speed, a.average_speed * s));
            prop_assert!(close(b.scatter, a.scatter * s * s));
            prop_assert!(close(b.radial_variance, a.radial_variance * s * s));
            prop_assert!((b.angular_momentum - a.angular_momentum * s * s).abs() < 1e-9 * (1.0 + a.angular_momentum.abs() * s * s));
            prop_assert!((b.group_rotation - a.group_rotation * s).abs() < 1e-9 * (1.0 + a.group_rotation.abs() * s));
        }
    }
}
