//! Rain pixel detection.
//!
//! A pixel becomes a rain *candidate* when, in every color channel, it is
//! brighter than the mean of each of five windows that contain it by more than
//! a margin `mu`. The five windows are the one centered on the pixel and the
//! four that have the pixel at one of their corners. Windows are clipped at the
//! image border and averaged over the pixels that remain.
//!
//! Candidates are then revised with an eigen-color test: rain is close to
//! achromatic, so a candidate whose `(u, v)` chroma vector is longer than
//! `epsilon` is dropped.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imagebuf::{
    ensure_same_dims, integral_of, ColorImage, GrayImage, IntegralImage, RainMask, Rgb, CHANNELS,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectParams {
    /// Intensity margin a rain pixel must clear above every window mean.
    pub mu: f64,
    /// Largest chroma magnitude a candidate may have and still count as rain.
    pub epsilon: f64,
    /// Side of the square detection windows (odd).
    pub window_side: usize,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self {
            mu: 0.01,
            epsilon: 0.08,
            window_side: 7,
        }
    }
}

impl DetectParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "detect.mu must be >= 0, got {}",
                self.mu
            )));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "detect.epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        if self.window_side < 3 || self.window_side.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "detect.window must be odd and >= 3, got {}",
                self.window_side
            )));
        }
        Ok(())
    }
}

/// Where the pixel under test sits inside a detection window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowPlacement {
    Center,
    BottomRight,
    BottomLeft,
    TopRight,
    TopLeft,
}

impl WindowPlacement {
    pub const ALL: [WindowPlacement; 5] = [
        WindowPlacement::Center,
        WindowPlacement::BottomRight,
        WindowPlacement::BottomLeft,
        WindowPlacement::TopRight,
        WindowPlacement::TopLeft,
    ];

    /// Half-open pixel bounds `(x0, y0, x1, y1)` of the window for the pixel at
    /// `(x, y)`, clipped to a `width x height` image.
    pub fn bounds(
        self,
        x: usize,
        y: usize,
        side: usize,
        width: usize,
        height: usize,
    ) -> (usize, usize, usize, usize) {
        let half = side / 2;
        let reach = side - 1;
        // (left, right, up, down) extents relative to the pixel
        let (l, r, u, d) = match self {
            WindowPlacement::Center => (half, half, half, half),
            WindowPlacement::BottomRight => (reach, 0, reach, 0),
            WindowPlacement::BottomLeft => (0, reach, reach, 0),
            WindowPlacement::TopRight => (reach, 0, 0, reach),
            WindowPlacement::TopLeft => (0, reach, 0, reach),
        };
        (
            x.saturating_sub(l),
            y.saturating_sub(u),
            (x + r + 1).min(width),
            (y + d + 1).min(height),
        )
    }
}

#[inline]
fn window_mean(
    ii: &IntegralImage,
    placement: WindowPlacement,
    x: usize,
    y: usize,
    side: usize,
) -> f64 {
    let (x0, y0, x1, y1) = placement.bounds(x, y, side, ii.width(), ii.height());
    let count = ((x1 - x0) * (y1 - y0)) as f64;
    ii.rect_sum(x0, y0, x1, y1) / count
}

/// Per-pixel means of the five clipped windows, in [`WindowPlacement::ALL`] order.
pub fn window_means(channel: &GrayImage, window_side: usize) -> [GrayImage; 5] {
    let ii = integral_of(channel);
    let (w, h) = channel.dims();
    WindowPlacement::ALL.map(|placement| {
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                data.push(window_mean(&ii, placement, x, y, window_side).clamp(0.0, 1.0));
            }
        }
        GrayImage::from_raw_unchecked(w, h, data)
    })
}

/// Local-mean candidate test over all channels and all five windows.
pub fn detect_candidates(img: &ColorImage, params: &DetectParams) -> RainMask {
    let (w, h) = img.dims();
    let side = params.window_side;
    let integrals: Vec<IntegralImage> = (0..CHANNELS)
        .map(|c| integral_of(&img.channel(c)))
        .collect();

    let mut data = vec![false; w * h];
    data.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            let p = img.get(x, y);
            *out = integrals.iter().zip(p).all(|(ii, value)| {
                WindowPlacement::ALL
                    .iter()
                    .all(|&placement| value > window_mean(ii, placement, x, y, side) + params.mu)
            });
        }
    });
    RainMask::new(w, h, data).expect("mask sized from image")
}

/// A point in the two-dimensional eigen-color space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UvPoint {
    pub u: f64,
    pub v: f64,
}

impl UvPoint {
    pub fn magnitude(&self) -> f64 {
        self.u.hypot(self.v)
    }
}

/// Maps an RGB triple to `(u, v)`. Neutral colors land on the origin; pure
/// black (`C = 0`) is defined as neutral.
pub fn to_uv(pixel: Rgb) -> UvPoint {
    let [r, g, b] = pixel;
    let c = (r + g + b) / 3.0;
    if c <= 0.0 {
        return UvPoint { u: 0.0, v: 0.0 };
    }
    UvPoint {
        u: (2.0 * c - g - b) / c,
        v: ((c - g) / c).max((c - b) / c),
    }
}

/// Drops candidates whose chroma magnitude exceeds `epsilon`.
pub fn revise_mask(
    img: &ColorImage,
    candidates: &RainMask,
    params: &DetectParams,
) -> Result<RainMask> {
    ensure_same_dims(img.dims(), candidates.dims())?;
    let data = candidates
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, &cand)| cand && to_uv(img.get_index(i)).magnitude() <= params.epsilon)
        .collect();
    RainMask::new(img.width(), img.height(), data)
}

/// Output of the full detection step.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub candidates: RainMask,
    pub revised: RainMask,
}

pub fn detect(img: &ColorImage, params: &DetectParams) -> Result<Detection> {
    params.validate()?;
    let candidates = detect_candidates(img, params);
    let revised = revise_mask(img, &candidates, params)?;
    Ok(Detection {
        candidates,
        revised,
    })
}
