//! Controller representations for the single- and two-sensor capability
//! models, uniform sampling and the discretized enumeration.

pub mod heuristic;

use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use heuristic::{
    heuristic_metrics, heuristic_score, BoundaryConvention, HeuristicReport, Metrics, Thresholds,
};

/// Number of values per velocity axis on the 0.1 grid.
pub const GRID_STEPS: usize = 21;

/// Discrete placements of the second sensor, ascending. Adjacent entries are
/// one mutation step apart.
pub const SENSOR_ANGLES: [f64; 10] = [
    -2.0 * PI / 3.0,
    -PI / 2.0,
    -PI / 3.0,
    -PI / 4.0,
    -PI / 6.0,
    PI / 6.0,
    PI / 4.0,
    PI / 3.0,
    PI / 2.0,
    2.0 * PI / 3.0,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SensorKind {
    Single,
    Two,
}

impl SensorKind {
    pub fn sensor_count(self) -> usize {
        match self {
            SensorKind::Single => 1,
            SensorKind::Two => 2,
        }
    }

    /// Number of wheel velocities in a controller for this model.
    pub fn velocity_count(self) -> usize {
        2 << self.sensor_count()
    }
}

impl fmt::Display for SensorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SensorKind::Single => "single",
            SensorKind::Two => "two",
        })
    }
}

impl std::str::FromStr for SensorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" | "1" => Ok(SensorKind::Single),
            "two" | "2" => Ok(SensorKind::Two),
            other => Err(Error::contract(format!("unknown capability kind {other:?}"))),
        }
    }
}

/// Index into [`SENSOR_ANGLES`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct SensorAngle(u8);

impl SensorAngle {
    pub fn new(index: u8) -> Result<Self> {
        if (index as usize) < SENSOR_ANGLES.len() {
            Ok(SensorAngle(index))
        } else {
            Err(Error::contract(format!("sensor angle index {index} out of range")))
        }
    }

    /// Looks up the discrete angle equal to `radians` (within 1e-9).
    pub fn from_radians(radians: f64) -> Result<Self> {
        SENSOR_ANGLES
            .iter()
            .position(|a| (a - radians).abs() < 1e-9)
            .map(|i| SensorAngle(i as u8))
            .ok_or_else(|| Error::contract(format!("{radians} rad is not a discrete sensor angle")))
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn radians(self) -> f64 {
        SENSOR_ANGLES[self.0 as usize]
    }
}

impl TryFrom<u8> for SensorAngle {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        SensorAngle::new(v)
    }
}

impl From<SensorAngle> for u8 {
    fn from(a: SensorAngle) -> u8 {
        a.0
    }
}

/// A homogeneous swarm policy: one `(v_l, v_r)` pair per combination of
/// sensor readings, plus the second sensor's placement for the two-sensor
/// model.
///
/// Serialized as the flat value list `[v1, .., v4]` or `[v1, .., v8, angle]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Controller {
    velocities: Vec<f64>,
    sensor_angle: Option<SensorAngle>,
}

impl TryFrom<Vec<f64>> for Controller {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Controller::from_values(&values)
    }
}

impl From<Controller> for Vec<f64> {
    fn from(c: Controller) -> Vec<f64> {
        c.values()
    }
}

impl Controller {
    pub fn single(velocities: [f64; 4]) -> Result<Self> {
        Self::new(velocities.to_vec(), None)
    }

    pub fn two(velocities: [f64; 8], angle: SensorAngle) -> Result<Self> {
        Self::new(velocities.to_vec(), Some(angle))
    }

    pub fn new(velocities: Vec<f64>, sensor_angle: Option<SensorAngle>) -> Result<Self> {
        let expected = if sensor_angle.is_some() { 8 } else { 4 };
        if velocities.len() != expected {
            return Err(Error::contract(format!(
                "controller needs {expected} velocities, got {}",
                velocities.len()
            )));
        }
        if let Some(v) = velocities.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::contract(format!("velocity {v} outside [-1, 1]")));
        }
        Ok(Controller {
            velocities,
            sensor_angle,
        })
    }

    /// Parses the flat textual form: 4 velocities, or 8 velocities followed
    /// by the sensor angle in radians.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        match values.len() {
            4 => Self::new(values.to_vec(), None),
            9 => Self::new(values[..8].to_vec(), Some(SensorAngle::from_radians(values[8])?)),
            n => Err(Error::contract(format!("controller needs 4 or 9 values, got {n}"))),
        }
    }

    pub fn kind(&self) -> SensorKind {
        if self.sensor_angle.is_some() {
            SensorKind::Two
        } else {
            SensorKind::Single
        }
    }

    pub fn velocities(&self) -> &[f64] {
        &self.velocities
    }

    pub fn sensor_angle(&self) -> Option<SensorAngle> {
        self.sensor_angle
    }

    /// Flat value list, the inverse of [`Controller::from_values`].
    pub fn values(&self) -> Vec<f64> {
        let mut v = self.velocities.clone();
        if let Some(a) = self.sensor_angle {
            v.push(a.radians());
        }
        v
    }

    /// Wheel speeds for the branch selected by the sensor readings.
    ///
    /// Single sensor: `[v1, v2]` when off, `[v3, v4]` when on. Two sensors:
    /// branch index is `S1 + 2*S2`, so `(S1 off, S2 on)` selects `(v5, v6)`.
    pub fn select_velocities(&self, readings: &[bool]) -> Result<(f64, f64)> {
        if readings.len() != self.kind().sensor_count() {
            return Err(Error::contract(format!(
                "{} readings for a {}-sensor controller",
                readings.len(),
                self.kind().sensor_count()
            )));
        }
        let branch = readings
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &on)| acc | (usize::from(on) << i));
        Ok((self.velocities[2 * branch], self.velocities[2 * branch + 1]))
    }

    /// Velocities as integer tenths when every value lies on the 0.1 grid.
    pub fn grid_units(&self) -> Option<Vec<i32>> {
        self.velocities
            .iter()
            .map(|&v| {
                let scaled = (v * 10.0).round();
                ((v * 10.0 - scaled).abs() < 1e-9).then_some(scaled as i32)
            })
            .collect()
    }

    pub fn is_on_grid(&self) -> bool {
        self.grid_units().is_some()
    }

    /// Embeds a single-sensor controller `[a,b,c,d]` into the two-sensor
    /// space as `[a,b,c,d,a,b,c,d]`, which ignores the second sensor.
    pub fn embed_two_sensor(&self, angle: SensorAngle) -> Result<Self> {
        if self.kind() != SensorKind::Single {
            return Err(Error::contract("controller already has two sensors"));
        }
        let mut v = self.velocities.clone();
        v.extend_from_within(..);
        Self::new(v, Some(angle))
    }
}

impl fmt::Display for Controller {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, v) in self.values().iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "]")
    }
}

/// Grid value `-1.0 + 0.1 * step` computed as an exact decimal.
pub fn grid_value(step: usize) -> f64 {
    (step as f64 - 10.0) / 10.0
}

/// Snaps a velocity to the nearest legal grid value.
pub fn snap_to_grid(v: f64) -> f64 {
    (v.clamp(-1.0, 1.0) * 10.0).round() / 10.0
}

/// Draws i.i.d. uniform velocities in `[-1, 1]`; the two-sensor angle is
/// uniform over the discrete set.
pub fn sample_uniform<R: Rng + ?Sized>(kind: SensorKind, rng: &mut R) -> Controller {
    let velocities = (0..kind.velocity_count())
        .map(|_| rng.random_range(-1.0..=1.0))
        .collect();
    let sensor_angle = match kind {
        SensorKind::Single => None,
        SensorKind::Two => Some(SensorAngle(rng.random_range(0..SENSOR_ANGLES.len() as u8))),
    };
    Controller {
        velocities,
        sensor_angle,
    }
}

/// Uniform sample from the discretized space.
pub fn sample_discretized<R: Rng + ?Sized>(kind: SensorKind, rng: &mut R) -> Controller {
    let velocities = (0..kind.velocity_count())
        .map(|_| grid_value(rng.random_range(0..GRID_STEPS)))
        .collect();
    let sensor_angle = match kind {
        SensorKind::Single => None,
        SensorKind::Two => Some(SensorAngle(rng.random_range(0..SENSOR_ANGLES.len() as u8))),
    };
    Controller {
        velocities,
        sensor_angle,
    }
}

/// Lazy lexicographic walk over the discretized controller space.
///
/// The single-sensor stream has `21^4` elements. The two-sensor stream is
/// nominally `21^8 * 10` long and is only meant to be sliced.
#[derive(Debug, Clone)]
pub struct DiscretizedSpace {
    kind: SensorKind,
    next: u64,
    end: u64,
}

pub fn enumerate_discretized(kind: SensorKind) -> DiscretizedSpace {
    DiscretizedSpace {
        kind,
        next: 0,
        end: DiscretizedSpace::cardinality(kind),
    }
}

impl DiscretizedSpace {
    pub fn cardinality(kind: SensorKind) -> u64 {
        let grid = (GRID_STEPS as u64).pow(kind.velocity_count() as u32);
        match kind {
            SensorKind::Single => grid,
            SensorKind::Two => grid * SENSOR_ANGLES.len() as u64,
        }
    }

    /// Restricts the stream to the index range `[start, end)`, for splitting
    /// the enumeration across workers.
    pub fn range(kind: SensorKind, start: u64, end: u64) -> Self {
        let card = Self::cardinality(kind);
        DiscretizedSpace {
            kind,
            next: start.min(card),
            end: end.min(card),
        }
    }

    /// The controller at position `index` in lexicographic order. The angle
    /// is the least significant digit for the two-sensor model.
    pub fn nth_controller(kind: SensorKind, mut index: u64) -> Controller {
        let sensor_angle = match kind {
            SensorKind::Single => None,
            SensorKind::Two => {
                let a = (index % SENSOR_ANGLES.len() as u64) as u8;
                index /= SENSOR_ANGLES.len() as u64;
                Some(SensorAngle(a))
            }
        };
        let n = kind.velocity_count();
        let mut velocities = vec![0.0; n];
        for slot in velocities.iter_mut().rev() {
            *slot = grid_value((index % GRID_STEPS as u64) as usize);
            index /= GRID_STEPS as u64;
        }
        Controller {
            velocities,
            sensor_angle,
        }
    }
}

impl Iterator for DiscretizedSpace {
    type Item = Controller;

    fn next(&mut self) -> Option<Controller> {
        if self.next >= self.end {
            return None;
        }
        let c = Self::nth_controller(self.kind, self.next);
        self.next += 1;
        Some(c)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let rem = self.end - self.next;
        match usize::try_from(rem) {
            Ok(r) => (r, Some(r)),
            Err(_) => (usize::MAX, None),
        }
    }
}

/// Named controllers from the example behavior catalogue.
pub mod examples {
    use super::*;

    pub const MILLING: [f64; 4] = [0.6, 1.0, 0.4, 0.5];
    pub const CYCLIC_PURSUIT: [f64; 4] = [-0.7, 0.3, 1.0, 1.0];
    pub const AGGREGATION: [f64; 4] = [-0.7, -1.0, 1.0, -1.0];
    pub const DISPERSAL: [f64; 4] = [0.2, 0.7, -0.5, -0.1];
    pub const WALL_FOLLOWING: [f64; 4] = [1.0, 0.9, 1.0, 1.0];
    pub const RANDOM: [f64; 4] = [-0.8, -0.7, 0.2, -0.5];

    pub fn nested_cycle() -> Controller {
        Controller::two(
            [0.8, 0.5, 0.6, -0.5, -0.5, 0.0, -0.2, 0.5],
            SensorAngle::from_radians(-PI / 3.0).expect("discrete angle"),
        )
        .expect("valid controller")
    }

    pub fn concave_cycle() -> Controller {
        Controller::two(
            [-0.4, 0.8, 0.9, -0.1, 0.6, 1.0, 0.4, 0.0],
            SensorAngle::from_radians(PI / 6.0).expect("discrete angle"),
        )
        .expect("valid controller")
    }

    /// The six single-sensor examples with their behavior names.
    pub fn single_sensor() -> Vec<(&'static str, Controller)> {
        [
            ("cyclic-pursuit", CYCLIC_PURSUIT),
            ("aggregation", AGGREGATION),
            ("dispersal", DISPERSAL),
            ("milling", MILLING),
            ("wall-following", WALL_FOLLOWING),
            ("random", RANDOM),
        ]
        .into_iter()
        .map(|(n, v)| (n, Controller::single(v).expect("valid controller")))
        .collect()
    }
}
