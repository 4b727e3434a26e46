//! Synthetic rain with exact ground truth.
//!
//! Streaks are stamped as hard-edged line segments of constant intensity `r`
//! and composited with the screen blend `I = b + r - b r`. Per channel that is
//! the linear imaging model with `alpha = 1 - r` and `beta = r`, so a rendered
//! image comes with the exact parameters a derainer should recover.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imagebuf::{ensure_same_dims, ColorImage, RainMask};

/// Per-pixel rain intensity, 0 where there is no rain.
#[derive(Debug, Clone, PartialEq)]
pub struct RainLayer {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl RainLayer {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidBuffer(format!(
                "expected {} layer samples, got {}",
                width * height,
                data.len()
            )));
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidBuffer("rain intensity outside [0, 1]".into()));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn nonzero_count(&self) -> usize {
        self.data.iter().filter(|&&v| v > 0.0).count()
    }

    fn stamp(&mut self, x: i64, y: i64, r: f64) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            let i = y as usize * self.width + x as usize;
            self.data[i] = self.data[i].max(r);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreakSpec {
    pub count: usize,
    /// Degrees from vertical, positive leaning right.
    pub angle: f64,
    pub length: usize,
    pub width: usize,
    /// Rain intensity `r` of every streak.
    pub intensity: f64,
    pub seed: u64,
}

impl Default for StreakSpec {
    fn default() -> Self {
        Self {
            count: 30,
            angle: 10.0,
            length: 18,
            width: 1,
            intensity: 0.2,
            seed: 0,
        }
    }
}

impl StreakSpec {
    pub fn validate(&self) -> Result<()> {
        if !(-45.0..=45.0).contains(&self.angle) {
            return Err(Error::InvalidParameter(format!(
                "angle must lie in [-45, 45], got {}",
                self.angle
            )));
        }
        if self.length == 0 || self.width == 0 {
            return Err(Error::InvalidParameter(
                "streak length and width must be >= 1".into(),
            ));
        }
        if !(self.intensity > 0.0 && self.intensity <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "intensity must lie in (0, 1], got {}",
                self.intensity
            )));
        }
        Ok(())
    }
}

/// Rasterizes `spec.count` parallel streaks at uniformly drawn start points.
///
/// Each streak steps one pixel along its direction `length` times; at every
/// step a horizontal run of `width` pixels centered on the rounded position is
/// set. Overlaps keep the maximum intensity.
pub fn render_streaks(spec: &StreakSpec, width: usize, height: usize) -> Result<RainLayer> {
    spec.validate()?;
    let mut layer = RainLayer::zeros(width, height);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (dx, dy) = spec.angle.to_radians().sin_cos();
    let left = (spec.width as i64 - 1) / 2;
    for _ in 0..spec.count {
        let x0 = rng.gen_range(0.0..width as f64);
        let y0 = rng.gen_range(0.0..height as f64);
        for t in 0..spec.length {
            let cx = (x0 + t as f64 * dx).round() as i64;
            let cy = (y0 + t as f64 * dy).round() as i64;
            for k in 0..spec.width as i64 {
                layer.stamp(cx - left + k, cy, spec.intensity);
            }
        }
    }
    Ok(layer)
}

/// Screen blend `b + r (1 - b)` applied to every channel.
pub fn screen_blend(background: &ColorImage, layer: &RainLayer) -> Result<ColorImage> {
    ensure_same_dims(background.dims(), layer.dims())?;
    let data = background
        .as_slice()
        .chunks_exact(3)
        .zip(&layer.data)
        .flat_map(|(px, &r)| {
            let blend = |b: f64| (b + r * (1.0 - b)).clamp(0.0, 1.0);
            [blend(px[0]), blend(px[1]), blend(px[2])]
        })
        .collect();
    ColorImage::new(background.width(), background.height(), data)
}

pub fn ground_truth_mask(layer: &RainLayer) -> RainMask {
    RainMask::new(
        layer.width,
        layer.height,
        layer.data.iter().map(|&r| r > 0.0).collect(),
    )
    .expect("layer sized consistently")
}

/// A rendered scene: rainy input, its clean background and the exact mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub rainy: ColorImage,
    pub ground_truth: ColorImage,
    pub mask: RainMask,
    pub layer: RainLayer,
}

pub fn synthesize(background: &ColorImage, spec: &StreakSpec) -> Result<SynthScene> {
    let layer = render_streaks(spec, background.width(), background.height())?;
    Ok(SynthScene {
        rainy: screen_blend(background, &layer)?,
        ground_truth: background.clone(),
        mask: ground_truth_mask(&layer),
        layer,
    })
}

/// Deterministic smooth color texture: a few random low-frequency waves over
/// a random base color, kept inside `[0.1, 0.7]`.
pub fn textured_background(width: usize, height: usize, seed: u64) -> Result<ColorImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.25..0.5));
    let waves: Vec<(f64, f64, f64, f64, [f64; 3])> = (0..4)
        .map(|_| {
            (
                rng.gen_range(0.01..0.12),
                rng.gen_range(0.01..0.12),
                rng.gen_range(0.0..std::f64::consts::TAU),
                rng.gen_range(0.02..0.06),
                std::array::from_fn(|_| rng.gen_range(0.6..1.0)),
            )
        })
        .collect();
    ColorImage::from_fn(width, height, |x, y| {
        let mut px = base;
        for &(fx, fy, phase, amp, tint) in &waves {
            let s = (fx * x as f64 + fy * y as f64 + phase).sin() * amp;
            for c in 0..3 {
                px[c] += s * tint[c];
            }
        }
        px.map(|v| v.clamp(0.1, 0.7))
    })
}
