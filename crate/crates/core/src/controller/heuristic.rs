//! Closed-form pre-filter that rejects slow, passive (spinning or mirrored)
//! and neglectful controllers without simulating them.
//!
//! Five metrics are computed from the controller alone. Each metric below its
//! threshold costs a fixed penalty; otherwise its value is added to the
//! score. Controllers scoring below [`PASS_SCORE`] are filtered out.
//!
//! Controllers on the 0.1 grid are decided in integer arithmetic: velocities
//! become integer tenths, thresholds integer hundredths, and the three
//! Euclidean metrics are compared squared. The score itself is accumulated in
//! tenths, where every rational term is an exact integer.

use serde::{Deserialize, Serialize};

use super::{Controller, SensorKind};

/// Score at or above which a controller is kept.
pub const PASS_SCORE: f64 = 4.0;

/// Contribution of a metric that falls below its threshold.
pub const PENALTY: f64 = -5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// Largest single velocity magnitude.
    pub max_element: f64,
    /// Euclidean norm of the whole controller.
    pub magnitude: f64,
    /// Summed per-branch forward displacement.
    pub displacement: f64,
    /// Distance to the mirrored controller.
    pub mirror: f64,
    /// Distance to the controller that ignores its sensor.
    pub neglect: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            max_element: 0.4,
            magnitude: 0.65,
            displacement: 0.5,
            mirror: 0.2,
            neglect: 0.3,
        }
    }
}

impl Thresholds {
    pub fn as_array(&self) -> [f64; 5] {
        [
            self.max_element,
            self.magnitude,
            self.displacement,
            self.mirror,
            self.neglect,
        ]
    }

    /// Thresholds as integer hundredths, when they all are exact.
    fn hundredths(&self) -> Option<[i64; 5]> {
        let mut out = [0; 5];
        for (o, t) in out.iter_mut().zip(self.as_array()) {
            let h = (t * 100.0).round();
            if (t * 100.0 - h).abs() > 1e-9 {
                return None;
            }
            *o = h as i64;
        }
        Some(out)
    }
}

/// Whether a metric exactly equal to its threshold is penalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryConvention {
    /// Penalize only `metric < threshold`.
    #[default]
    Strict,
    /// Penalize `metric <= threshold`.
    NonStrict,
}

impl BoundaryConvention {
    fn below<T: PartialOrd>(self, metric: T, threshold: T) -> bool {
        match self {
            BoundaryConvention::Strict => metric < threshold,
            BoundaryConvention::NonStrict => metric <= threshold,
        }
    }
}

/// The five metric values `m1..m5`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics(pub [f64; 5]);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicReport {
    pub metrics: Metrics,
    /// Metric numbers (1 to 5) that fell below their threshold.
    pub penalties: Vec<u8>,
    pub score: f64,
    pub passes: bool,
}

/// Per-branch `(v_l, v_r)` pairs; branch 0 is "no sensor on".
fn branches(v: &[f64]) -> impl Iterator<Item = (f64, f64)> + '_ {
    v.chunks_exact(2).map(|p| (p[0], p[1]))
}

/// Computes `m1..m5`.
///
/// For `[a, b, c, d]`: `max|v|`, `‖v‖₂`, `|a+b| + |c+d|`, the distance to the
/// mirror `[a, b, -a, -b]` and the distance to the neglectful `[a, b, a, b]`.
/// Two-sensor controllers sum the displacement over all four branches and
/// take the mirror and neglect distances as the minimum over the three
/// sensing branches.
pub fn heuristic_metrics(c: &Controller) -> Metrics {
    let v = c.velocities();
    let max_element = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let magnitude = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let displacement = branches(v).map(|(l, r)| (l + r).abs()).sum();
    let (l0, r0) = (v[0], v[1]);
    let min_dist = |tl: f64, tr: f64| {
        branches(v)
            .skip(1)
            .map(|(l, r)| ((l - tl).powi(2) + (r - tr).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min)
    };
    let mirror = min_dist(-l0, -r0);
    let neglect = min_dist(l0, r0);
    Metrics([max_element, magnitude, displacement, mirror, neglect])
}

/// Metric thresholds effective for a capability model. The displacement sum
/// covers twice as many branches with two sensors, so its threshold doubles.
fn effective_thresholds(kind: SensorKind, t: &Thresholds) -> [f64; 5] {
    let mut a = t.as_array();
    if kind == SensorKind::Two {
        a[2] *= 2.0;
    }
    a
}

pub fn heuristic_score(
    c: &Controller,
    thresholds: &Thresholds,
    convention: BoundaryConvention,
) -> HeuristicReport {
    let metrics = heuristic_metrics(c);
    let below = match (c.grid_units(), thresholds.hundredths()) {
        (Some(units), Some(hundredths)) => exact_below(c.kind(), &units, hundredths, convention),
        _ => {
            let t = effective_thresholds(c.kind(), thresholds);
            std::array::from_fn(|i| convention.below(metrics.0[i], t[i]))
        }
    };
    let penalties: Vec<u8> = (0..5).filter(|&i| below[i]).map(|i| i as u8 + 1).collect();

    let (score, passes) = match c.grid_units() {
        Some(units) => exact_score(&units, &below),
        None => {
            let score: f64 = (0..5)
                .map(|i| if below[i] { PENALTY } else { metrics.0[i] })
                .sum();
            (score, score >= PASS_SCORE)
        }
    };
    HeuristicReport {
        metrics,
        penalties,
        score,
        passes,
    }
}

/// Integer metrics in tenths: `m1`, `m3` directly; `m2`, `m4`, `m5` squared.
struct GridMetrics {
    max_element: i64,
    magnitude_sq: i64,
    displacement: i64,
    mirror_sq: i64,
    neglect_sq: i64,
}

fn grid_metrics(units: &[i32]) -> GridMetrics {
    let u: Vec<i64> = units.iter().map(|&x| x as i64).collect();
    let pairs: Vec<(i64, i64)> = u.chunks_exact(2).map(|p| (p[0], p[1])).collect();
    let (l0, r0) = pairs[0];
    let min_sq = |tl: i64, tr: i64| {
        pairs[1..]
            .iter()
            .map(|&(l, r)| (l - tl).pow(2) + (r - tr).pow(2))
            .min()
            .expect("at least one sensing branch")
    };
    GridMetrics {
        max_element: u.iter().map(|x| x.abs()).max().unwrap_or(0),
        magnitude_sq: u.iter().map(|x| x * x).sum(),
        displacement: pairs.iter().map(|&(l, r)| (l + r).abs()).sum(),
        mirror_sq: min_sq(-l0, -r0),
        neglect_sq: min_sq(l0, r0),
    }
}

fn exact_below(
    kind: SensorKind,
    units: &[i32],
    hundredths: [i64; 5],
    convention: BoundaryConvention,
) -> [bool; 5] {
    let g = grid_metrics(units);
    let displacement_t = if kind == SensorKind::Two {
        2 * hundredths[2]
    } else {
        hundredths[2]
    };
    // tenths * 10 = hundredths; squared tenths * 100 = squared hundredths
    [
        convention.below(g.max_element * 10, hundredths[0]),
        convention.below(g.magnitude_sq * 100, hundredths[1].pow(2)),
        convention.below(g.displacement * 10, displacement_t),
        convention.below(g.mirror_sq * 100, hundredths[3].pow(2)),
        convention.below(g.neglect_sq * 100, hundredths[4].pow(2)),
    ]
}

fn exact_score(units: &[i32], below: &[bool; 5]) -> (f64, bool) {
    let g = grid_metrics(units);
    let tenths = [
        g.max_element as f64,
        (g.magnitude_sq as f64).sqrt(),
        g.displacement as f64,
        (g.mirror_sq as f64).sqrt(),
        (g.neglect_sq as f64).sqrt(),
    ];
    let score_tenths: f64 = (0..5)
        .map(|i| if below[i] { PENALTY * 10.0 } else { tenths[i] })
        .sum();
    (score_tenths / 10.0, score_tenths >= PASS_SCORE * 10.0)
}

/// Pass/fail tally over a stream of controllers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub total: u64,
    pub passed: u64,
    pub filtered: u64,
}

impl FilterSummary {
    pub fn record(&mut self, passes: bool) {
        self.total += 1;
        if passes {
            self.passed += 1;
        } else {
            self.filtered += 1;
        }
    }

    pub fn merge(mut self, other: FilterSummary) -> Self {
        self.total += other.total;
        self.passed += other.passed;
        self.filtered += other.filtered;
        self
    }

    pub fn filtered_fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.filtered as f64 / self.total as f64
        }
    }
}

/// Scores every controller of a discretized space slice, in order.
pub fn filter_space(
    space: super::DiscretizedSpace,
    thresholds: &Thresholds,
    convention: BoundaryConvention,
) -> FilterSummary {
    let mut summary = FilterSummary::default();
    for c in space {
        summary.record(heuristic_score(&c, thresholds, convention).passes);
    }
    summary
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::{examples, SensorAngle};
    use proptest::prelude::*;

    fn single(v: [f64; 4]) -> Controller {
        Controller::single(v).unwrap()
    }

    #[test]
    fn milling_metrics() {
        let m = heuristic_metrics(&single(examples::MILLING)).0;
        // hand arithmetic: sqrt(0.36+1+0.16+0.25), |1.6|+|0.9|, sqrt(1.0²+1.5²), sqrt(0.2²+0.5²)
        let expected = [1.0, 1.77f64.sqrt(), 2.5, 3.25f64.sqrt(), 0.29f64.sqrt()];
        for (a, e) in m.iter().zip(expected) {
            assert!((a - e).abs() < 1e-12, "{a} vs {e}");
        }
        assert!((m[1] - 1.3304).abs() < 1e-4);
        assert!((m[3] - 1.8028).abs() < 1e-4);
        assert!((m[4] - 0.5385).abs() < 1e-4);
    }

    #[test]
    fn milling_score_passes() {
        let r = heuristic_score(
            &single(examples::MILLING),
            &Thresholds::default(),
            BoundaryConvention::Strict,
        );
        assert!(r.penalties.is_empty());
        assert!((r.score - 7.17).abs() < 0.01, "{}", r.score);
        assert!(r.passes);
    }

    #[test]
    fn zero_controller_fails_everything() {
        let r = heuristic_score(&single([0.0; 4]), &Thresholds::default(), Default::default());
        assert_eq!(r.metrics.0, [0.0; 5]);
        assert_eq!(r.penalties, vec![1, 2, 3, 4, 5]);
        assert_eq!(r.score, -25.0);
        assert!(!r.passes);
    }

    #[test]
    fn boundary_equality_follows_convention() {
        // m1 = 0.4 exactly; all other metrics clear their thresholds.
        let c = single([0.4, 0.4, -0.4, 0.4]);
        let strict = heuristic_score(&c, &Thresholds::default(), BoundaryConvention::Strict);
        let loose = heuristic_score(&c, &Thresholds::default(), BoundaryConvention::NonStrict);
        assert!(!strict.penalties.contains(&1));
        assert!(loose.penalties.contains(&1));
    }

    #[test]
    fn grid_and_float_paths_agree_away_from_boundaries() {
        // 0.61 is off-grid, so this goes through the float path
        let off = single([0.61, 1.0, 0.4, 0.5]);
        let r = heuristic_score(&off, &Thresholds::default(), Default::default());
        assert!(r.passes && r.penalties.is_empty());
        let m = heuristic_metrics(&off).0;
        assert!((r.score - m.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn two_sensor_embedding_of_neglectful_controller_is_neglectful() {
        let c = single([0.5, 0.5, 0.5, 0.5])
            .embed_two_sensor(SensorAngle::new(3).unwrap())
            .unwrap();
        let r = heuristic_score(&c, &Thresholds::default(), Default::default());
        assert!(r.penalties.contains(&5));
        assert_eq!(r.metrics.0[4], 0.0);
    }

    #[test]
    fn two_sensor_metrics_generalize() {
        let c = examples::nested_cycle();
        let m = heuristic_metrics(&c).0;
        assert_eq!(m[0], 0.8);
        // |1.3| + |0.1| + |-0.5| + |0.3|
        assert!((m[2] - 2.2).abs() < 1e-12);
        // on-branches vs (-0.8,-0.5): (0.6,-0.5)->1.4, (-0.5,0)->sqrt(.09+.25), (-0.2,0.5)->sqrt(.36+1)
        assert!((m[3] - 0.34f64.sqrt()).abs() < 1e-12);
    }

    fn grid_vec() -> impl Strategy<Value = [f64; 4]> {
        prop::array::uniform4(0usize..21).prop_map(|s| s.map(crate::controller::grid_value))
    }

    proptest! {
        #[test]
        fn metrics_are_non_negative(v in prop::array::uniform4(-1.0f64..=1.0)) {
            let m = heuristic_metrics(&single(v)).0;
            prop_assert!(m.iter().all(|x| *x >= 0.0));
        }

        #[test]
        fn metrics_scale_linearly(v in prop::array::uniform4(-1.0f64..=1.0), s in 0.01f64..=1.0) {
            let m = heuristic_metrics(&single(v)).0;
            let ms = heuristic_metrics(&single(v.map(|x| x * s))).0;
            for (a, b) in m.iter().zip(ms) {
                prop_assert!((a * s - b).abs() < 1e-12);
            }
        }

        #[test]
        fn neglect_metric_vanishes_on_repeated_pairs(a in -1.0f64..=1.0, b in -1.0f64..=1.0) {
            prop_assert_eq!(heuristic_metrics(&single([a, b, a, b])).0[4], 0.0);
        }

        #[test]
        fn mirror_metric_vanishes_on_mirrors(a in -1.0f64..=1.0, b in -1.0f64..=1.0) {
            let c = single([a, b, -a, -b]);
            prop_assert_eq!(heuristic_metrics(&c).0[3], 0.0);
            let r = heuristic_score(&c, &Thresholds::default(), Default::default());
            prop_assert!(r.penalties.contains(&4));
            // small mirrors cannot recover from the penalty
            if a.abs().max(b.abs()) < 0.3 {
                prop_assert!(!r.passes);
            }
        }

        #[test]
        fn exact_path_matches_float_metrics(v in grid_vec()) {
            let c = single(v);
            let r = heuristic_score(&c, &Thresholds::default(), Default::default());
            let contrib: f64 = (0..5)
                .map(|i| if r.penalties.contains(&(i as u8 + 1)) { PENALTY } else { r.metrics.0[i] })
                .sum();
            prop_assert!((contrib - r.score).abs() < 1e-9);
        }
    }
}
