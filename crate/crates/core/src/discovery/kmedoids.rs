//! Partitioning around medoids: greedy BUILD, then steepest-descent SWAP
//! until no exchange lowers the total distance.

use serde::{Deserialize, Serialize};

use crate::behavior::euclidean;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Taxonomy {
    pub k: usize,
    /// Point indices of the medoids.
    pub medoids: Vec<usize>,
    /// For every point, the position in `medoids` of its medoid.
    pub assignments: Vec<usize>,
    pub cost: f64,
    /// Total cost after BUILD and after every accepted swap.
    pub cost_trace: Vec<f64>,
}

impl Taxonomy {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

/// Nearest and second-nearest medoid distances for every point.
struct Nearest {
    slot: Vec<usize>,
    d1: Vec<f64>,
    d2: Vec<f64>,
}

fn nearest(points: &[&[f64]], medoids: &[usize]) -> Nearest {
    let n = points.len();
    let mut out = Nearest {
        slot: vec![0; n],
        d1: vec![f64::INFINITY; n],
        d2: vec![f64::INFINITY; n],
    };
    for (j, p) in points.iter().enumerate() {
        for (s, &m) in medoids.iter().enumerate() {
            let d = euclidean(p, points[m]);
            if d < out.d1[j] {
                out.d2[j] = out.d1[j];
                out.d1[j] = d;
                out.slot[j] = s;
            } else if d < out.d2[j] {
                out.d2[j] = d;
            }
        }
    }
    out
}

pub fn k_medoids(points: &[&[f64]], k: usize) -> Result<Taxonomy> {
    let n = points.len();
    if k == 0 || n < k {
        return Err(Error::contract(format!("k-medoids needs 1 <= k <= {n}, got k = {k}")));
    }

    // BUILD: the most central point, then repeatedly the largest cost drop
    let mut medoids = Vec::with_capacity(k);
    let mut d1 = vec![f64::INFINITY; n];
    for _ in 0..k {
        let mut best = (f64::INFINITY, usize::MAX);
        for c in 0..n {
            if medoids.contains(&c) {
                continue;
            }
            let total: f64 = (0..n).map(|j| d1[j].min(euclidean(points[j], points[c]))).sum();
            if total < best.0 {
                best = (total, c);
            }
        }
        let c = best.1;
        medoids.push(c);
        for j in 0..n {
            d1[j] = d1[j].min(euclidean(points[j], points[c]));
        }
    }

    let mut near = nearest(points, &medoids);
    let mut cost: f64 = near.d1.iter().sum();
    let mut trace = vec![cost];

    // SWAP: for each candidate, the cost change of replacing each medoid
    // slot is accumulated in one pass over the points.
    loop {
        let mut best = (0.0, usize::MAX, usize::MAX);
        let mut delta = vec![0.0; k];
        for o in 0..n {
            if medoids.contains(&o) {
                continue;
            }
            let mut shared = 0.0;
            delta.fill(0.0);
            for j in 0..n {
                let d = euclidean(points[j], points[o]);
                let gain = (d - near.d1[j]).min(0.0);
                shared += gain;
                let s = near.slot[j];
                delta[s] += d.min(near.d2[j]) - near.d1[j] - gain;
            }
            for (s, &extra) in delta.iter().enumerate() {
                let change = shared + extra;
                if change < best.0 {
                    best = (change, s, o);
                }
            }
        }
        if best.1 == usize::MAX {
            break;
        }
        let mut trial = medoids.clone();
        trial[best.1] = best.2;
        let trial_near = nearest(points, &trial);
        let trial_cost: f64 = trial_near.d1.iter().sum();
        // the incremental estimate can be off by rounding; only accept
        // exchanges that really lower the recomputed cost
        if trial_cost >= cost {
            break;
        }
        medoids = trial;
        near = trial_near;
        cost = trial_cost;
        trace.push(cost);
        log::debug!("k-medoids swap {}: cost {cost:.6}", trace.len() - 1);
    }

    Ok(Taxonomy {
        k,
        medoids,
        assignments: near.slot,
        cost,
        cost_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn total_cost(points: &[&[f64]], medoids: &[usize]) -> f64 {
        points
            .iter()
            .map(|p| medoids.iter().map(|&m| euclidean(p, points[m])).fold(f64::INFINITY, f64::min))
            .sum()
    }

    #[test]
    fn saturated_k_is_zero_cost() {
        let pts = [vec![0.0, 1.0], vec![2.0, 3.0], vec![5.0, -1.0]];
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let t = k_medoids(&refs, 3).unwrap();
        assert_eq!(t.cost, 0.0);
        let mut m = t.medoids.clone();
        m.sort();
        assert_eq!(m, vec![0, 1, 2]);
    }

    #[test]
    fn too_few_points_is_an_error() {
        let pts = [vec![0.0]];
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        assert!(k_medoids(&refs, 2).is_err());
        assert!(k_medoids(&refs, 0).is_err());
    }

    #[test]
    fn planted_clusters_get_one_medoid_each() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let centers = [[0.0; 5], [10.0, 0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 10.0, 0.0, 0.0]];
        let mut pts = Vec::new();
        for c in &centers {
            for _ in 0..20 {
                pts.push(c.iter().map(|x| x + rng.random_range(-1.0..1.0)).collect::<Vec<f64>>());
            }
        }
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let t = k_medoids(&refs, 3).unwrap();
        let mut clusters: Vec<usize> = t.medoids.iter().map(|m| m / 20).collect();
        clusters.sort();
        assert_eq!(clusters, vec![0, 1, 2]);
        for (i, &a) in t.assignments.iter().enumerate() {
            assert_eq!(t.medoids[a] / 20, i / 20);
        }
    }

    proptest! {
        #[test]
        fn swap_trace_decreases_and_is_locally_optimal(
            pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 4..30),
            k in 1usize..4,
        ) {
            let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
            let t = k_medoids(&refs, k).unwrap();
            for w in t.cost_trace.windows(2) {
                prop_assert!(w[1] < w[0]);
            }
            prop_assert!((t.cost - total_cost(&refs, &t.medoids)).abs() < 1e-9);
            // no single exchange improves by more than rounding
            for s in 0..k {
                for o in 0..refs.len() {
                    if t.medoids.contains(&o) { continue; }
                    let mut m = t.medoids.clone();
                    m[s] = o;
                    prop_assert!(total_cost(&refs, &m) >= t.cost - 1e-9);
                }
            }
            // every point sits with its nearest medoid
            for (j, &a) in t.assignments.iter().enumerate() {
                let own = euclidean(refs[j], refs[t.medoids[a]]);
                for &m in &t.medoids {
                    prop_assert!(own <= euclidean(refs[j], refs[m]));
                }
            }
        }
    }
}
