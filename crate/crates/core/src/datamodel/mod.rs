//! Frames, clips, datasets and their on-disk formats.

mod manifest;
mod pgm;

use std::collections::HashSet;

pub use manifest::{
    load_labeled, load_manifest, load_unlabeled, save_labeled, save_unlabeled, Manifest,
};
pub use pgm::{decode_pgm, encode_pgm, load_pgm, save_pgm};

use crate::error::{Error, Result};

/// Floor applied to the standard deviation in [`preprocess`].
pub const CONTRAST_EPS: f64 = 1e-8;

/// A single grayscale image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Validation(format!(
                "frame dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::Shape(format!(
                "frame {width}x{height} needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Frame {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Frame::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }
}

/// Per-image standardization: subtract the mean, divide by the population
/// standard deviation (floored at [`CONTRAST_EPS`]).
pub fn preprocess(frame: &Frame) -> Frame {
    let pixels = standardize(frame.pixels());
    Frame {
        width: frame.width,
        height: frame.height,
        pixels,
    }
}

/// [`preprocess`] on a raw pixel slice.
pub fn standardize(pixels: &[f64]) -> Vec<f64> {
    let n = pixels.len() as f64;
    let mean = pixels.iter().sum::<f64>() / n;
    let var = pixels.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / n;
    let scale = var.sqrt().max(CONTRAST_EPS);
    pixels.iter().map(|p| (p - mean) / scale).collect()
}

/// An ordered frame sequence sampled at a fixed period.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    clip_id: String,
    frames: Vec<Frame>,
    frame_period: f64,
}

impl Clip {
    pub fn new(clip_id: impl Into<String>, frames: Vec<Frame>, frame_period: f64) -> Result<Self> {
        let clip_id = clip_id.into();
        if clip_id.is_empty() || clip_id.chars().any(char::is_whitespace) {
            return Err(Error::Validation(format!(
                "clip id `{clip_id}` must be nonempty and free of whitespace"
            )));
        }
        if !(frame_period > 0.0 && frame_period.is_finite()) {
            return Err(Error::Validation(format!(
                "clip `{clip_id}`: frame period must be positive, got {frame_period}"
            )));
        }
        let Some(first) = frames.first() else {
            return Err(Error::Validation(format!("clip `{clip_id}` has no frames")));
        };
        let dims = (first.width, first.height);
        if let Some(i) = frames.iter().position(|f| (f.width, f.height) != dims) {
            return Err(Error::Shape(format!(
                "clip `{clip_id}` frame {i} is {}x{}, expected {}x{}",
                frames[i].width, frames[i].height, dims.0, dims.1
            )));
        }
        Ok(Clip {
            clip_id,
            frames,
            frame_period,
        })
    }

    pub fn id(&self) -> &str {
        &self.clip_id
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_period(&self) -> f64 {
        self.frame_period
    }

    /// Converts a window in seconds into a whole number of frames (floor).
    pub fn window_frames(&self, seconds: f64) -> usize {
        // Tolerate representation error, e.g. 0.5 / (1/30) = 14.999999999999998.
        let ratio = seconds / self.frame_period;
        (ratio + 1e-9).floor().max(0.0) as usize
    }
}

/// Labeled still images (the supervised set).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    images: Vec<Frame>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabeledSet {
    pub fn new(images: Vec<Frame>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::Validation(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if num_classes == 0 {
            return Err(Error::Validation("class count must be positive".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::Validation(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(LabeledSet {
            images,
            labels,
            num_classes,
        })
    }

    pub fn images(&self) -> &[Frame] {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Subset by index, keeping the class count.
    pub fn select(&self, indices: &[usize]) -> LabeledSet {
        LabeledSet {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }
}

/// The unlabeled video corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledSet {
    clips: Vec<Clip>,
}

impl UnlabeledSet {
    pub fn new(clips: Vec<Clip>) -> Result<Self> {
        if clips.is_empty() {
            return Err(Error::Validation("unlabeled set has no clips".into()));
        }
        let mut seen = HashSet::new();
        for clip in &clips {
            if !seen.insert(clip.id()) {
                return Err(Error::Validation(format!(
                    "duplicate clip id `{}`",
                    clip.id()
                )));
            }
        }
        Ok(UnlabeledSet { clips })
    }

    pub fn clips(&self) -> &[Clip] {
        &self.clips
    }

    pub fn clip(&self, id: &str) -> Option<&Clip> {
        self.clips.iter().find(|c| c.id() == id)
    }

    pub fn clip_index(&self, id: &str) -> Option<usize> {
        self.clips.iter().position(|c| c.id() == id)
    }

    pub fn num_frames(&self) -> usize {
        self.clips.iter().map(Clip::len).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn frame_rejects_bad_shapes() {
        assert!(matches!(Frame::new(2, 2, vec![0.0; 3]), Err(Error::Shape(_))));
        assert!(matches!(Frame::new(0, 2, vec![]), Err(Error::Validation(_))));
    }

    #[test]
    fn constant_frame_preprocesses_to_zero() {
        let f = Frame::filled(3, 3, 0.5).unwrap();
        assert!(preprocess(&f).pixels().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn two_pixel_frame_standardizes_to_unit() {
        // mean 0.5, population std 0.5
        let f = Frame::new(2, 1, vec![0.0, 1.0]).unwrap();
        assert_eq!(preprocess(&f).pixels(), &[-1.0, 1.0]);
    }

    #[test]
    fn clip_validation() {
        let a = Frame::filled(2, 2, 0.0).unwrap();
        let b = Frame::filled(3, 2, 0.0).unwrap();
        assert!(Clip::new("c", vec![], 1.0).is_err());
        assert!(Clip::new("c", vec![a.clone(), b], 1.0).is_err());
        assert!(Clip::new("c", vec![a.clone()], 0.0).is_err());
        assert!(Clip::new("has space", vec![a.clone()], 1.0).is_err());
        let clip = Clip::new("c", vec![a], 1.0 / 30.0).unwrap();
        assert_eq!(clip.window_frames(0.5), 15);
        assert_eq!(clip.window_frames(0.01), 0);
    }

    #[test]
    fn unlabeled_rejects_duplicates() {
        let f = Frame::filled(1, 1, 0.0).unwrap();
        let c = Clip::new("a", vec![f], 1.0).unwrap();
        assert!(matches!(
            UnlabeledSet::new(vec![c.clone(), c]),
            Err(Error::Validation(_))
        ));
        assert!(UnlabeledSet::new(vec![]).is_err());
    }

    #[test]
    fn labeled_checks_labels() {
        let f = Frame::filled(1, 1, 0.0).unwrap();
        assert!(LabeledSet::new(vec![f.clone()], vec![2], 2).is_err());
        assert!(LabeledSet::new(vec![f.clone()], vec![], 2).is_err());
        assert_eq!(LabeledSet::new(vec![f], vec![1], 2).unwrap().len(), 1);
    }

    fn pixels_strategy() -> impl Strategy<Value = Vec<f64>> {
        (1usize..64).prop_flat_map(|n| proptest::collection::vec(0.0f64..1.0, n))
    }

    proptest! {
        #[test]
        fn preprocess_zero_mean(px in pixels_strategy()) {
            let f = Frame::new(px.len(), 1, px).unwrap();
            let out = preprocess(&f);
            let mean = out.pixels().iter().sum::<f64>() / out.len() as f64;
            prop_assert!(mean.abs() < 1e-12);
        }

        #[test]
        fn preprocess_idempotent(px in pixels_strategy()) {
            let n = px.len();
            let spread = px.iter().cloned().fold(f64::MIN, f64::max)
                - px.iter().cloned().fold(f64::MAX, f64::min);
            prop_assume!(spread > 1e-3);
            let once = preprocess(&Frame::new(n, 1, px).unwrap());
            let twice = preprocess(&once);
            for (a, b) in once.pixels().iter().zip(twice.pixels()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
