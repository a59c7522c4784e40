//! Procedurally labeled shape images (disks, rings, streaks) standing in for
//! a human-labeled validation set.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::render::TrajectoryImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Archetype {
    Disk,
    Ring,
    Streak,
}

impl Archetype {
    pub const ALL: [Archetype; 3] = [Archetype::Disk, Archetype::Ring, Archetype::Streak];

    pub fn name(self) -> &'static str {
        match self {
            Archetype::Disk => "disk",
            Archetype::Ring => "ring",
            Archetype::Streak => "streak",
        }
    }
}

/// One random image of the archetype, drawn fully inside the frame.
pub fn draw<R: Rng + ?Sized>(kind: Archetype, size: usize, rng: &mut R) -> TrajectoryImage {
    let n = size as f64;
    let mut img = TrajectoryImage::zeros(size);
    match kind {
        Archetype::Disk => {
            let r = rng.random_range(0.08..0.2) * n;
            let (cx, cy) = (rng.random_range(r..n - r), rng.random_range(r..n - r));
            img.stamp_disk(cx, cy, r, 1.0);
        }
        Archetype::Ring => {
            let outer = rng.random_range(0.16..0.36) * n;
            let width = rng.random_range(0.03..0.06) * n;
            let (cx, cy) = (rng.random_range(outer..n - outer), rng.random_range(outer..n - outer));
            for row in 0..size {
                for col in 0..size {
                    let d = (col as f64 + 0.5 - cx).hypot(row as f64 + 0.5 - cy);
                    if d <= outer && d >= outer - width {
                        img.set(row, col, 1.0);
                    }
                }
            }
        }
        Archetype::Streak => {
            let len = rng.random_range(0.3..0.8) * n;
            let half_width = rng.random_range(0.02..0.05) * n;
            let phi = rng.random_range(0.0..std::f64::consts::PI);
            let (dx, dy) = (phi.cos() * len / 2.0, phi.sin() * len / 2.0);
            let margin = half_width + 1.0;
            let cx = rng.random_range(dx.abs() + margin..n - dx.abs() - margin);
            let cy = rng.random_range(dy.abs() + margin..n - dy.abs() - margin);
            let steps = (len * 2.0).ceil() as usize;
            for s in 0..=steps {
                let t = s as f64 / steps as f64 * 2.0 - 1.0;
                img.stamp_disk(cx + t * dx, cy + t * dy, half_width, 1.0);
            }
        }
    }
    img
}

/// `count` images cycling through the three archetypes.
pub fn shapes_dataset<R: Rng + ?Sized>(count: usize, size: usize, rng: &mut R) -> (Vec<TrajectoryImage>, Vec<Archetype>) {
    let labels: Vec<Archetype> = (0..count).map(|i| Archetype::ALL[i % 3]).collect();
    let images = labels
        .iter()
        .enumerate()
        .map(|(i, &k)| draw(k, size, rng).with_id(format!("{}-{i:04}", k.name())))
        .collect();
    (images, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lit(img: &TrajectoryImage) -> usize {
        img.pixels().iter().filter(|&&p| p > 0.0).count()
    }

    #[test]
    fn archetypes_are_nonempty_and_distinct() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            for k in Archetype::ALL {
                let img = draw(k, 50, &mut rng);
                assert!(lit(&img) > 10, "{k:?}");
                assert!(img.pixels().iter().all(|&p| p == 0.0 || p == 1.0));
            }
        }
        // a ring's center is dark, a disk's center is lit
        let mut img = TrajectoryImage::zeros(50);
        img.stamp_disk(25.0, 25.0, 8.0, 1.0);
        assert_eq!(img.get(25, 25), 1.0);
    }

    #[test]
    fn dataset_is_balanced_and_deterministic() {
        let (a, la) = shapes_dataset(200, 50, &mut ChaCha8Rng::seed_from_u64(5));
        let (b, lb) = shapes_dataset(200, 50, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
        assert_eq!(la, lb);
        for k in Archetype::ALL {
            let c = la.iter().filter(|&&l| l == k).count();
            assert!((66..=67).contains(&c));
        }
    }
}
