//! Synthetic moving-shape clips and labeled stills.
//!
//! Every clip shows one shape translating over a toroidal `G × G` grid.
//! Shapes are rendered analytically from their (possibly fractional)
//! centre using wrapped offsets, so an integer velocity moves the image by
//! an exact circular shift.

use rand::seq::IndexedRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::datamodel::{Clip, Frame, LabeledSet, UnlabeledSet};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Blob,
    HorizontalBar,
    VerticalBar,
    Ring,
}

impl Shape {
    pub const ALL: [Shape; 4] = [Shape::Blob, Shape::HorizontalBar, Shape::VerticalBar, Shape::Ring];

    /// Intensity in [0,1] at offset `(dx, dy)` from the shape centre.
    fn intensity(self, dx: f64, dy: f64, grid: usize) -> f64 {
        let g = grid as f64;
        // box profile with a one-pixel linear edge
        let boxed = |d: f64, half: f64| (half + 0.5 - d.abs()).clamp(0.0, 1.0);
        match self {
            Shape::Blob => {
                let sigma = g / 8.0;
                (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
            }
            Shape::HorizontalBar => boxed(dx, g / 4.0) * boxed(dy, 1.0),
            Shape::VerticalBar => boxed(dx, 1.0) * boxed(dy, g / 4.0),
            Shape::Ring => {
                let r = (dx * dx + dy * dy).sqrt();
                (1.5 - (r - g / 4.0).abs()).clamp(0.0, 1.0)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionMode {
    /// One velocity for the whole clip.
    Steady,
    /// Velocity redrawn from the set before every frame step.
    Jerky,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub grid: usize,
    pub clip_len: usize,
    pub num_clips: usize,
    pub shapes: Vec<Shape>,
    /// Candidate velocities in pixels per frame.
    pub velocity_set: Vec<(f64, f64)>,
    pub motion: MotionMode,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// The eight unit king-move velocities.
pub fn compass_velocities() -> Vec<(f64, f64)> {
    let mut v = Vec::new();
    for dy in -1..=1 {
        for dx in -1..=1 {
            if (dx, dy) != (0, 0) {
                v.push((f64::from(dx), f64::from(dy)));
            }
        }
    }
    v
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            grid: 16,
            clip_len: 20,
            num_clips: 40,
            shapes: Shape::ALL.to_vec(),
            velocity_set: compass_velocities(),
            motion: MotionMode::Steady,
            noise_sigma: 0.02,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid < 8 {
            return Err(Error::Config(format!("grid must be at least 8, got {}", self.grid)));
        }
        if self.clip_len < 5 {
            return Err(Error::Config(format!(
                "clips need at least 5 frames, got {}",
                self.clip_len
            )));
        }
        if self.shapes.len() < 2 {
            return Err(Error::Config("at least two shape classes are required".into()));
        }
        if self.velocity_set.is_empty() {
            return Err(Error::Config("velocity set is empty".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!("bad noise sigma {}", self.noise_sigma)));
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.shapes.len()
    }
}

/// Ground-truth motion of one generated clip.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub shape_class: usize,
    pub positions: Vec<(f64, f64)>,
}

fn wrap(d: f64, grid: usize) -> f64 {
    let g = grid as f64;
    (d + g / 2.0).rem_euclid(g) - g / 2.0
}

/// Renders a noiseless frame with the shape centred at `(cx, cy)`.
pub fn render(shape: Shape, cx: f64, cy: f64, grid: usize) -> Frame {
    let mut pixels = Vec::with_capacity(grid * grid);
    for y in 0..grid {
        for x in 0..grid {
            let dx = wrap(x as f64 - cx, grid);
            let dy = wrap(y as f64 - cy, grid);
            pixels.push(shape.intensity(dx, dy, grid));
        }
    }
    Frame::new(grid, grid, pixels).expect("grid is nonempty")
}

fn add_noise(frame: Frame, sigma: f64, rng: &mut Rng) -> Frame {
    if sigma == 0.0 {
        return frame;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and nonnegative");
    let (w, h) = (frame.width(), frame.height());
    let pixels = frame
        .into_pixels()
        .into_iter()
        .map(|p| (p + normal.sample(rng)).clamp(0.0, 1.0))
        .collect();
    Frame::new(w, h, pixels).unwrap()
}

const CLIP_STREAM: u64 = 0;
const LABELED_STREAM: u64 = 1 << 32;

fn clip_rng(cfg: &SynthConfig, clip: usize) -> Rng {
    seeded(derive_seed(cfg.seed, CLIP_STREAM + clip as u64))
}

fn simulate(cfg: &SynthConfig, clip: usize, rng: &mut Rng) -> Track {
    let g = cfg.grid;
    let shape_class = clip % cfg.shapes.len();
    let mut pos = (rng.random_range(0..g) as f64, rng.random_range(0..g) as f64);
    let mut vel = *cfg.velocity_set.choose(rng).unwrap();
    let mut positions = Vec::with_capacity(cfg.clip_len);
    for t in 0..cfg.clip_len {
        if t > 0 {
            if cfg.motion == MotionMode::Jerky {
                vel = *cfg.velocity_set.choose(rng).unwrap();
            }
            pos = (
                (pos.0 + vel.0).rem_euclid(g as f64),
                (pos.1 + vel.1).rem_euclid(g as f64),
            );
        }
        positions.push(pos);
    }
    Track {
        shape_class,
        positions,
    }
}

/// Motion tracks for each clip, exactly as [`gen_unlabeled`] renders them.
/// Clip `i` shows shape class `i mod K`.
pub fn gen_tracks(cfg: &SynthConfig) -> Result<Vec<Track>> {
    cfg.validate()?;
    Ok((0..cfg.num_clips)
        .map(|i| simulate(cfg, i, &mut clip_rng(cfg, i)))
        .collect())
}

pub fn gen_unlabeled(cfg: &SynthConfig) -> Result<UnlabeledSet> {
    cfg.validate()?;
    if cfg.num_clips == 0 {
        return Err(Error::Config("num_clips must be positive".into()));
    }
    let clips = (0..cfg.num_clips)
        .map(|i| {
            let mut rng = clip_rng(cfg, i);
            let track = simulate(cfg, i, &mut rng);
            let shape = cfg.shapes[track.shape_class];
            let frames = track
                .positions
                .iter()
                .map(|&(x, y)| add_noise(render(shape, x, y, cfg.grid), cfg.noise_sigma, &mut rng))
                .collect();
            Clip::new(format!("clip{i:04}"), frames, 1.0)
        })
        .collect::<Result<Vec<_>>>()?;
    UnlabeledSet::new(clips)
}

/// `per_class` stills of every shape at random integer positions, ordered
/// class by class.
pub fn gen_labeled(cfg: &SynthConfig, per_class: usize) -> Result<LabeledSet> {
    cfg.validate()?;
    if per_class == 0 {
        return Err(Error::Config("per_class must be at least 1".into()));
    }
    let mut rng = seeded(derive_seed(cfg.seed, LABELED_STREAM));
    let mut images = Vec::with_capacity(per_class * cfg.shapes.len());
    let mut labels = Vec::with_capacity(images.capacity());
    for (class, &shape) in cfg.shapes.iter().enumerate() {
        for _ in 0..per_class {
            let x = rng.random_range(0..cfg.grid) as f64;
            let y = rng.random_range(0..cfg.grid) as f64;
            images.push(add_noise(render(shape, x, y, cfg.grid), cfg.noise_sigma, &mut rng));
            labels.push(class);
        }
    }
    LabeledSet::new(images, labels, cfg.shapes.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn quiet(seed: u64) -> SynthConfig {
        SynthConfig {
            num_clips: 8,
            noise_sigma: 0.0,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn steady_unit_velocity_is_circular_shift() {
        let cfg = SynthConfig {
            velocity_set: vec![(1.0, 0.0)],
            ..quiet(3)
        };
        let u = gen_unlabeled(&cfg).unwrap();
        let g = cfg.grid;
        for clip in u.clips() {
            for pair in clip.frames().windows(2) {
                for y in 0..g {
                    for x in 0..g {
                        assert_eq!(pair[1].get((x + 1) % g, y), pair[0].get(x, y));
                    }
                }
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(gen_unlabeled(&quiet(5)).unwrap(), gen_unlabeled(&quiet(5)).unwrap());
        let noisy = SynthConfig {
            noise_sigma: 0.1,
            ..quiet(5)
        };
        assert_eq!(gen_unlabeled(&noisy).unwrap(), gen_unlabeled(&noisy).unwrap());
        assert_ne!(gen_unlabeled(&quiet(5)).unwrap(), gen_unlabeled(&quiet(6)).unwrap());
    }

    #[test]
    fn tracks_match_rendered_clips() {
        let cfg = quiet(8);
        let tracks = gen_tracks(&cfg).unwrap();
        let u = gen_unlabeled(&cfg).unwrap();
        for (track, clip) in tracks.iter().zip(u.clips()) {
            let (x, y) = track.positions[3];
            let expect = render(cfg.shapes[track.shape_class], x, y, cfg.grid);
            assert_eq!(clip.frames()[3], expect);
        }
    }

    #[test]
    fn jerky_motion_changes_direction() {
        let v = (1.0, 0.0);
        let mut changed = 0usize;
        let mut steps = 0usize;
        for seed in 0..20 {
            let cfg = SynthConfig {
                velocity_set: vec![v, (-v.0, -v.1)],
                motion: MotionMode::Jerky,
                ..quiet(seed)
            };
            for track in gen_tracks(&cfg).unwrap() {
                let disp: Vec<f64> = track
                    .positions
                    .windows(2)
                    .map(|w| wrap(w[1].0 - w[0].0, cfg.grid))
                    .collect();
                changed += disp.windows(2).filter(|d| d[0] != d[1]).count();
                steps += disp.len() - 1;
            }
        }
        assert!(changed as f64 / steps as f64 >= 0.3);
    }

    #[test]
    fn steady_tracks_have_constant_displacement() {
        let tracks = gen_tracks(&quiet(2)).unwrap();
        for t in tracks {
            let d: HashSet<(i64, i64)> = t
                .positions
                .windows(2)
                .map(|w| (wrap(w[1].0 - w[0].0, 16) as i64, wrap(w[1].1 - w[0].1, 16) as i64))
                .collect();
            assert_eq!(d.len(), 1);
        }
    }

    #[test]
    fn labeled_is_balanced() {
        let s = gen_labeled(&quiet(1), 5).unwrap();
        assert_eq!(s.len(), 20);
        for c in 0..4 {
            assert_eq!(s.labels().iter().filter(|&&y| y == c).count(), 5);
        }
        assert_eq!(s.num_classes(), 4);
    }

    #[test]
    fn disjoint_seeds_give_disjoint_splits() {
        let hash = |f: &Frame| f.pixels().iter().map(|p| p.to_bits()).collect::<Vec<_>>();
        let cfg = |seed| SynthConfig {
            noise_sigma: 0.05,
            ..quiet(seed)
        };
        let train: HashSet<_> = gen_labeled(&cfg(10), 50).unwrap().images().iter().map(hash).collect();
        let test = gen_labeled(&cfg(11), 50).unwrap();
        assert!(test.images().iter().all(|f| !train.contains(&hash(f))));
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(gen_unlabeled(&SynthConfig { grid: 4, ..quiet(0) }).is_err());
        assert!(gen_unlabeled(&SynthConfig { clip_len: 3, ..quiet(0) }).is_err());
        assert!(gen_unlabeled(&SynthConfig {
            shapes: vec![Shape::Ring],
            ..quiet(0)
        })
        .is_err());
        assert!(gen_labeled(&quiet(0), 0).is_err());
    }

    #[test]
    fn shapes_render_distinctly() {
        let frames: Vec<Frame> = Shape::ALL.iter().map(|&s| render(s, 8.0, 8.0, 16)).collect();
        for i in 0..frames.len() {
            assert!(frames[i].pixels().iter().all(|p| (0.0..=1.0).contains(p)));
            for j in i + 1..frames.len() {
                assert_ne!(frames[i], frames[j]);
            }
        }
    }
}
