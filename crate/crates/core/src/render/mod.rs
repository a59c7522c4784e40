//! Collapses the tail of a rollout into a small grayscale trail image, and
//! the crop/rotate augmentation used to synthesize positives.

pub mod pgm;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::Trajectory;

pub const IMAGE_SIZE: usize = 50;
pub const RENDER_WINDOW: usize = 160;

/// Smallest rasterized body radius in pixels.
pub const MIN_RADIUS_PX: f64 = 0.5;

/// Square single-channel image with intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryImage {
    size: usize,
    pixels: Vec<f32>,
    #[serde(default)]
    pub source_id: String,
}

impl TrajectoryImage {
    pub fn zeros(size: usize) -> Self {
        TrajectoryImage {
            size,
            pixels: vec![0.0; size * size],
            source_id: String::new(),
        }
    }

    pub fn from_pixels(size: usize, pixels: Vec<f32>) -> Result<Self> {
        if pixels.len() != size * size {
            return Err(Error::contract(format!(
                "{} pixels for a {size}x{size} image",
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::contract(format!("intensity {p} outside [0, 1]")));
        }
        Ok(TrajectoryImage {
            size,
            pixels,
            source_id: String::new(),
        })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.source_id = id.into();
        self
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.size + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f32) {
        self.pixels[row * self.size + col] = v;
    }

    /// Sets pixels whose centers lie within `radius` of `(cx, cy)` (pixel
    /// units), plus the pixel containing the center, to `value` by max.
    pub fn stamp_disk(&mut self, cx: f64, cy: f64, radius: f64, value: f32) {
        let n = self.size as isize;
        let r = radius.max(MIN_RADIUS_PX);
        let mut light = |row: isize, col: isize| {
            if (0..n).contains(&row) && (0..n).contains(&col) {
                let p = &mut self.pixels[(row * n + col) as usize];
                *p = p.max(value);
            }
        };
        light(cy.floor() as isize, cx.floor() as isize);
        let (r0, r1) = ((cy - r).floor() as isize, (cy + r).ceil() as isize);
        let (c0, c1) = ((cx - r).floor() as isize, (cx + r).ceil() as isize);
        for row in r0..=r1 {
            for col in c0..=c1 {
                let py = row as f64 + 0.5 - cy;
                let px = col as f64 + 0.5 - cx;
                if px * px + py * py <= r * r {
                    light(row, col);
                }
            }
        }
    }

    /// Rotates counter-clockwise by `quarter_turns * 90°` (exact pixel
    /// permutation).
    pub fn rotate_quarter_turns(&self, quarter_turns: u8) -> Self {
        let n = self.size;
        let mut out = TrajectoryImage::zeros(n);
        out.source_id = self.source_id.clone();
        for row in 0..n {
            for col in 0..n {
                let (r, c) = match quarter_turns % 4 {
                    0 => (row, col),
                    1 => (n - 1 - col, row),
                    2 => (n - 1 - row, n - 1 - col),
                    _ => (col, n - 1 - row),
                };
                out.pixels[r * n + c] = self.pixels[row * n + col];
            }
        }
        out
    }

    /// Bilinear resample of the `side`-pixel square at `(top, left)` back to
    /// full size, using pixel-center alignment.
    pub fn crop_resize(&self, top: usize, left: usize, side: usize) -> Self {
        let n = self.size;
        assert!(side > 0 && top + side <= n && left + side <= n, "crop out of bounds");
        let scale = side as f64 / n as f64;
        let sample = |dst: usize| {
            let src = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (side - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(side - 1);
            (i0, i1, src - i0 as f64)
        };
        let mut out = TrajectoryImage::zeros(n);
        out.source_id = self.source_id.clone();
        for row in 0..n {
            let (y0, y1, fy) = sample(row);
            for col in 0..n {
                let (x0, x1, fx) = sample(col);
                let at = |y: usize, x: usize| self.pixels[(top + y) * n + left + x] as f64;
                let top_row = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                let bottom_row = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                let v = top_row * (1.0 - fy) + bottom_row * fy;
                out.pixels[row * n + col] = v.clamp(0.0, 1.0) as f32;
            }
        }
        out
    }
}

/// Renders the last `window` frames into an `out_size` square image.
///
/// Every agent in every frame becomes a filled disk of its body radius
/// (scaled to pixels, at least [`MIN_RADIUS_PX`]); frames composite by
/// per-pixel maximum, so trails are pure white on black.
pub fn render(traj: &Trajectory, window: usize, out_size: usize) -> Result<TrajectoryImage> {
    if traj.frames.len() < window {
        return Err(Error::contract(format!(
            "trajectory has {} frames, render window is {window}",
            traj.frames.len()
        )));
    }
    let mut img = TrajectoryImage::zeros(out_size);
    let Some(first) = traj.frames.first() else {
        return Ok(img);
    };
    let sx = out_size as f64 / first.width;
    let sy = out_size as f64 / first.height;
    let radius = traj.model.agent_radius * sx;
    for frame in &traj.frames[traj.frames.len() - window..] {
        for a in &frame.agents {
            img.stamp_disk(a.x * sx, a.y * sy, radius, 1.0);
        }
    }
    Ok(img)
}

/// Parameters of one random augmentation, exposed for testing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Augmentation {
    pub crop_side: usize,
    pub top: usize,
    pub left: usize,
    /// 1, 2 or 3 quarter turns.
    pub quarter_turns: u8,
}

impl Augmentation {
    pub fn sample<R: Rng + ?Sized>(size: usize, rng: &mut R) -> Self {
        let scale: f64 = rng.random_range(0.6..=1.0);
        let crop_side = ((scale * size as f64).round() as usize).clamp(1, size);
        let top = rng.random_range(0..=size - crop_side);
        let left = rng.random_range(0..=size - crop_side);
        let quarter_turns = rng.random_range(1..=3u8);
        Augmentation {
            crop_side,
            top,
            left,
            quarter_turns,
        }
    }

    pub fn apply(&self, img: &TrajectoryImage) -> TrajectoryImage {
        img.crop_resize(self.top, self.left, self.crop_side)
            .rotate_quarter_turns(self.quarter_turns)
    }
}

/// Random crop to `[0.6, 1.0]` of each side, bilinear resize back, then a
/// rotation by 90°, 180° or 270°.
pub fn augment<R: Rng + ?Sized>(img: &TrajectoryImage, rng: &mut R) -> TrajectoryImage {
    Augmentation::sample(img.size(), rng).apply(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::Controller;
    use crate::sim::{AgentState, CapabilityModel, WorldState};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn traj(frames: Vec<Vec<(f64, f64)>>) -> Trajectory {
        Trajectory {
            frames: frames
                .into_iter()
                .enumerate()
                .map(|(t, agents)| {
                    let mut w = WorldState::new(
                        agents
                            .into_iter()
                            .map(|(x, y)| AgentState::new(x, y, 0.0))
                            .collect(),
                        500.0,
                        500.0,
                    );
                    w.tick = t as u64;
                    w
                })
                .collect(),
            controller: Controller::single([0.0; 4]).unwrap(),
            model: CapabilityModel::single_sensor(),
            seed: 0,
        }
    }

    fn lit(img: &TrajectoryImage) -> usize {
        img.pixels().iter().filter(|p| **p > 0.0).count()
    }

    #[test]
    fn stationary_swarm_equals_single_frame() {
        let pos = vec![(100.0, 100.0), (333.3, 251.7), (20.0, 480.0)];
        let many = render(&traj(vec![pos.clone(); 200]), 160, 50).unwrap();
        let one = render(&traj(vec![pos]), 1, 50).unwrap();
        assert_eq!(many, one);
        assert!(lit(&one) >= 3);
    }

    #[test]
    fn empty_world_is_black() {
        let img = render(&traj(vec![vec![]; 170]), 160, 50).unwrap();
        assert_eq!(lit(&img), 0);
    }

    #[test]
    fn short_trajectory_is_rejected() {
        assert!(render(&traj(vec![vec![]; 10]), 160, 50).is_err());
    }

    #[test]
    fn horizontal_sweep_draws_a_streak() {
        let frames = (0..160)
            .map(|t| vec![(5.0 + 490.0 * t as f64 / 159.0, 253.0)])
            .collect();
        let img = render(&traj(frames), 160, 50).unwrap();
        let row = 25;
        let mut best = 0;
        let mut run = 0;
        for col in 0..50 {
            if img.get(row, col) > 0.0 {
                run += 1;
                best = best.max(run);
            } else {
                run = 0;
            }
        }
        assert!(best >= 45, "longest run {best}");
    }

    #[test]
    fn intensities_are_binary() {
        let frames = (0..160)
            .map(|t| vec![(250.0 + 100.0 * (t as f64 / 20.0).cos(), 250.0 + 100.0 * (t as f64 / 20.0).sin())])
            .collect();
        let img = render(&traj(frames), 160, 50).unwrap();
        assert!(img.pixels().iter().all(|p| *p == 0.0 || *p == 1.0));
    }

    #[test]
    fn one_pixel_translation_shifts_image() {
        let a = vec![(103.0, 204.0), (257.0, 311.0)];
        let b: Vec<_> = a.iter().map(|(x, y)| (x + 10.0, *y)).collect();
        let ia = render(&traj(vec![a]), 1, 50).unwrap();
        let ib = render(&traj(vec![b]), 1, 50).unwrap();
        for row in 0..50 {
            for col in 0..49 {
                assert_eq!(ia.get(row, col), ib.get(row, col + 1));
            }
        }
    }

    fn pattern() -> TrajectoryImage {
        let px = (0..2500).map(|i| ((i * 37) % 101) as f32 / 100.0).collect();
        TrajectoryImage::from_pixels(50, px).unwrap()
    }

    #[test]
    fn full_crop_half_turn_flips_both_axes() {
        let img = pattern();
        let aug = Augmentation {
            crop_side: 50,
            top: 0,
            left: 0,
            quarter_turns: 2,
        };
        let out = aug.apply(&img);
        for r in 0..50 {
            for c in 0..50 {
                assert_eq!(out.get(r, c), img.get(49 - r, 49 - c));
            }
        }
    }

    #[test]
    fn quarter_turns_compose() {
        let img = pattern();
        assert_eq!(img.rotate_quarter_turns(2).rotate_quarter_turns(2), img);
        assert_eq!(img.rotate_quarter_turns(1).rotate_quarter_turns(3), img);
        let cropped = img.crop_resize(5, 7, 37);
        assert_eq!(cropped.rotate_quarter_turns(2).rotate_quarter_turns(2), cropped);
    }

    #[test]
    fn augment_empty_image_stays_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            assert_eq!(lit(&augment(&TrajectoryImage::zeros(50), &mut rng)), 0);
        }
    }

    #[test]
    fn augment_is_seeded_and_bounded() {
        let img = pattern();
        let a = augment(&img, &mut ChaCha8Rng::seed_from_u64(9));
        let b = augment(&img, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..200 {
            let aug = Augmentation::sample(50, &mut rng);
            assert!((30..=50).contains(&aug.crop_side));
            assert!(aug.top + aug.crop_side <= 50 && aug.left + aug.crop_side <= 50);
            assert!((1..=3).contains(&aug.quarter_turns));
            let out = aug.apply(&img);
            assert!(out.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }
}
