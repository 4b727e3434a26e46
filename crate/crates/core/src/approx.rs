//! Background color estimation for rain pixels.
//!
//! Each rain pixel's pre-rain color `q` is a weighted mean of the observed
//! non-rain colors `h_k` in an `N x N` window centered on it:
//!
//! ```text
//! w_k = exp(-|h_k - p|^2 / sigma^2)
//! q   = sum(w_k^2 h_k) / sum(w_k^2)
//! ```
//!
//! Note the squared weights in the mean. With the default `sigma = 9` and
//! colors in the unit cube the weights stay within `[exp(-3/81), 1]`, so the
//! estimate is close to a plain neighborhood average; lower `sigma` to make it
//! edge-aware.
//!
//! Only observed non-rain pixels contribute. Estimates are never fed back.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imagebuf::{ensure_same_dims, ColorImage, RainMask, Rgb};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxParams {
    pub sigma: f64,
    pub window_side: usize,
    /// How many times an empty window may be enlarged (by 2 pixels on every
    /// side) before giving up and keeping the observed color.
    pub max_growth: usize,
}

impl Default for ApproxParams {
    fn default() -> Self {
        Self {
            sigma: 9.0,
            window_side: 13,
            max_growth: 5,
        }
    }
}

impl ApproxParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "approx.sigma must be > 0, got {}",
                self.sigma
            )));
        }
        if self.window_side < 3 || self.window_side.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "approx.window must be odd and >= 3, got {}",
                self.window_side
            )));
        }
        Ok(())
    }
}

/// How an estimate was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateSource {
    /// Non-rain neighbors found in the nominal window.
    Neighbors,
    /// Neighbors found only after enlarging the window this many times.
    Grown(usize),
    /// No non-rain neighbor within reach; the observed color is kept.
    Observed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub x: usize,
    pub y: usize,
    pub q: Rgb,
    pub source: EstimateSource,
}

impl Estimate {
    /// True when the nominal window held no usable neighbor.
    pub fn used_fallback(&self) -> bool {
        self.source != EstimateSource::Neighbors
    }
}

/// Estimates for every rain pixel of a mask, addressable by coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundEstimate {
    width: usize,
    height: usize,
    entries: Vec<Estimate>,
    index: Vec<Option<u32>>,
}

impl BackgroundEstimate {
    pub fn from_entries(width: usize, height: usize, entries: Vec<Estimate>) -> Result<Self> {
        let mut index = vec![None; width * height];
        for (i, e) in entries.iter().enumerate() {
            if e.x >= width || e.y >= height {
                return Err(Error::InvalidBuffer(format!(
                    "estimate at ({}, {}) outside {width}x{height}",
                    e.x, e.y
                )));
            }
            if e.q.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidBuffer(format!(
                    "estimate at ({}, {}) outside [0, 1]",
                    e.x, e.y
                )));
            }
            index[e.y * width + e.x] = Some(i as u32);
        }
        Ok(Self {
            width,
            height,
            entries,
            index,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, x: usize, y: usize) -> Option<&Estimate> {
        self.index[y * self.width + x].map(|i| &self.entries[i as usize])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Estimate> {
        self.entries.iter()
    }

    pub fn fallback_count(&self) -> usize {
        self.entries.iter().filter(|e| e.used_fallback()).count()
    }

    /// Dense per-pixel `q` for channel `c`; pixels without an estimate get `None`.
    pub fn channel(&self, c: usize) -> Vec<Option<f64>> {
        self.index
            .iter()
            .map(|slot| slot.map(|i| self.entries[i as usize].q[c]))
            .collect()
    }

    /// The observed image with every estimated pixel replaced by its `q`.
    pub fn overlay(&self, img: &ColorImage) -> Result<ColorImage> {
        ensure_same_dims(img.dims(), self.dims())?;
        let mut data = img.as_slice().to_vec();
        for e in &self.entries {
            let i = (e.y * self.width + e.x) * 3;
            data[i..i + 3].copy_from_slice(&e.q);
        }
        Ok(ColorImage::from_raw_unchecked(
            self.width,
            self.height,
            data,
        ))
    }
}

#[inline]
fn squared_distance(a: Rgb, b: Rgb) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Weighted mean over the non-rain pixels of the clipped window with the given
/// half-width, or `None` if there are none.
fn weighted_mean(
    img: &ColorImage,
    mask: &RainMask,
    x: usize,
    y: usize,
    half: usize,
    sigma2: f64,
) -> Option<Rgb> {
    let p = img.get(x, y);
    let (x0, y0) = (x.saturating_sub(half), y.saturating_sub(half));
    let (x1, y1) = (
        (x + half + 1).min(img.width()),
        (y + half + 1).min(img.height()),
    );
    let mut acc = [0.0; 3];
    let mut total = 0.0;
    let mut any = false;
    for yy in y0..y1 {
        for xx in x0..x1 {
            if mask.get(xx, yy) {
                continue;
            }
            let h = img.get(xx, yy);
            let w = (-squared_distance(h, p) / sigma2).exp();
            let w2 = w * w;
            for c in 0..3 {
                acc[c] += w2 * h[c];
            }
            total += w2;
            any = true;
        }
    }
    if !any {
        return None;
    }
    // Rounding can nudge a convex combination a hair outside [0, 1].
    Some(acc.map(|a| (a / total).clamp(0.0, 1.0)))
}

fn estimate_unchecked(
    img: &ColorImage,
    mask: &RainMask,
    x: usize,
    y: usize,
    params: &ApproxParams,
) -> Estimate {
    let sigma2 = params.sigma * params.sigma;
    let base = params.window_side / 2;
    for step in 0..=params.max_growth {
        if let Some(q) = weighted_mean(img, mask, x, y, base + 2 * step, sigma2) {
            let source = if step == 0 {
                EstimateSource::Neighbors
            } else {
                EstimateSource::Grown(step)
            };
            return Estimate { x, y, q, source };
        }
    }
    Estimate {
        x,
        y,
        q: img.get(x, y),
        source: EstimateSource::Observed,
    }
}

/// Background estimate for the single rain pixel at `at`.
pub fn approximate_pixel(
    img: &ColorImage,
    mask: &RainMask,
    at: (usize, usize),
    params: &ApproxParams,
) -> Result<Estimate> {
    ensure_same_dims(img.dims(), mask.dims())?;
    let (x, y) = at;
    if x >= img.width() || y >= img.height() || !mask.get(x, y) {
        return Err(Error::InvalidParameter(format!(
            "({x}, {y}) is not a rain pixel"
        )));
    }
    Ok(estimate_unchecked(img, mask, x, y, params))
}

/// Estimates for all rain pixels, in row-major order.
pub fn approximate_all(
    img: &ColorImage,
    mask: &RainMask,
    params: &ApproxParams,
) -> Result<BackgroundEstimate> {
    ensure_same_dims(img.dims(), mask.dims())?;
    params.validate()?;
    let coords: Vec<(usize, usize)> = mask.rain_pixels().collect();
    let entries = coords
        .par_iter()
        .map(|&(x, y)| estimate_unchecked(img, mask, x, y, params))
        .collect();
    BackgroundEstimate::from_entries(img.width(), img.height(), entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    /// Direct evaluation: gather H, weight it, average.
    fn oracle(
        img: &ColorImage,
        mask: &RainMask,
        x: usize,
        y: usize,
        side: usize,
        sigma: f64,
    ) -> Option<Rgb> {
        let half = (side / 2) as isize;
        let p = img.get(x, y);
        let mut h_set = Vec::new();
        for dy in -half..=half {
            for dx in -half..=half {
                let (xx, yy) = (x as isize + dx, y as isize + dy);
                if xx < 0 || yy < 0 || xx >= img.width() as isize || yy >= img.height() as isize {
                    continue;
                }
                if !mask.get(xx as usize, yy as usize) {
                    h_set.push(img.get(xx as usize, yy as usize));
                }
            }
        }
        if h_set.is_empty() {
            return None;
        }
        let weights: Vec<f64> = h_set
            .iter()
            .map(|h| {
                let d2: f64 = (0..3).map(|c| (h[c] - p[c]) * (h[c] - p[c])).sum();
                (-d2 / (sigma * sigma)).exp()
            })
            .collect();
        let denom: f64 = weights.iter().map(|w| w * w).sum();
        let mut q = [0.0; 3];
        for c in 0..3 {
            q[c] = h_set
                .iter()
                .zip(&weights)
                .map(|(h, w)| w * w * h[c])
                .sum::<f64>()
                / denom;
        }
        Some(q)
    }

    #[test]
    fn constant_neighbors_give_their_color() {
        let c = [0.3, 0.6, 0.1];
        let img = ColorImage::filled(9, 9, c)
            .unwrap()
            .with_pixel(4, 4, [0.9; 3])
            .unwrap();
        let mask = RainMask::from_fn(9, 9, |x, y| (x, y) == (4, 4));
        for sigma in [0.1, 1.0, 9.0, 1e6] {
            let params = ApproxParams {
                sigma,
                ..Default::default()
            };
            let e = approximate_pixel(&img, &mask, (4, 4), &params).unwrap();
            for k in 0..3 {
                assert!((e.q[k] - c[k]).abs() < 1e-15);
            }
            assert_eq!(e.source, EstimateSource::Neighbors);
        }
    }

    #[test]
    fn two_neighbor_hand_example() {
        // 3x1 strip: h1 | p | h2, window covers all three.
        let img = ColorImage::new(3, 1, vec![0.2, 0.2, 0.2, 0.8, 0.8, 0.8, 0.8, 0.8, 0.8]).unwrap();
        let mask = RainMask::from_fn(3, 1, |x, _| x == 1);
        let e = approximate_pixel(&img, &mask, (1, 0), &ApproxParams::default()).unwrap();
        let w1: f64 = (-1.08f64 / 81.0).exp();
        assert!((w1 - 0.98675).abs() < 1e-5);
        let expected = (w1 * w1 * 0.2 + 0.8) / (w1 * w1 + 1.0);
        assert!((expected - 0.50400).abs() < 1e-5);
        for v in e.q {
            assert!((v - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn non_rain_pixel_is_rejected() {
        let img = ColorImage::filled(3, 3, [0.5; 3]).unwrap();
        let mask = RainMask::empty(3, 3);
        assert!(approximate_pixel(&img, &mask, (1, 1), &ApproxParams::default()).is_err());
    }

    #[test]
    fn empty_window_grows_then_falls_back() {
        // 41x1 strip, all rain except x = 0.
        let img = ColorImage::from_fn(41, 1, |x, _| [x as f64 / 40.0; 3]).unwrap();
        let mask = RainMask::from_fn(41, 1, |x, _| x != 0);
        let params = ApproxParams {
            window_side: 3,
            max_growth: 5,
            ..Default::default()
        };
        // half-width 1 + 2*step reaches x = 0 from x = 9 at step 4
        let e = approximate_pixel(&img, &mask, (9, 0), &params).unwrap();
        assert_eq!(e.source, EstimateSource::Grown(4));
        assert_eq!(e.q, [0.0; 3]);
        let far = approximate_pixel(&img, &mask, (40, 0), &params).unwrap();
        assert_eq!(far.source, EstimateSource::Observed);
        assert_eq!(far.q, img.get(40, 0));

        let all = approximate_all(&img, &mask, &params).unwrap();
        assert_eq!(all.len(), 40);
        assert!(all.fallback_count() > 0);
    }

    #[test]
    fn empty_mask_gives_empty_estimate() {
        let img = ColorImage::filled(4, 4, [0.5; 3]).unwrap();
        let est = approximate_all(&img, &RainMask::empty(4, 4), &ApproxParams::default()).unwrap();
        assert!(est.is_empty());
    }

    #[test]
    fn single_rain_pixel_in_constant_image() {
        let img = ColorImage::filled(20, 20, [0.35; 3]).unwrap();
        let mask = RainMask::from_fn(20, 20, |x, y| (x, y) == (3, 17));
        let est = approximate_all(&img, &mask, &ApproxParams::default()).unwrap();
        assert_eq!(est.len(), 1);
        assert!(est
            .get(3, 17)
            .unwrap()
            .q
            .iter()
            .all(|&v| (v - 0.35).abs() < 1e-15));
        assert!(est.get(0, 0).is_none());
    }

    #[test]
    fn random_image_matches_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(20);
        let img = ColorImage::from_fn(20, 20, |_, _| [rng.gen(), rng.gen(), rng.gen()]).unwrap();
        let mask = RainMask::from_fn(20, 20, |_, _| rng.gen_bool(0.3));
        for sigma in [9.0, 0.3] {
            let params = ApproxParams {
                sigma,
                ..Default::default()
            };
            let est = approximate_all(&img, &mask, &params).unwrap();
            assert_eq!(est.len(), mask.count());
            for e in est.iter() {
                let q = oracle(&img, &mask, e.x, e.y, 13, sigma).unwrap();
                for c in 0..3 {
                    assert!((e.q[c] - q[c]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn huge_sigma_gives_plain_mean() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let img = ColorImage::from_fn(15, 15, |_, _| [rng.gen(), rng.gen(), rng.gen()]).unwrap();
        let mask = RainMask::from_fn(15, 15, |x, y| (x + 2 * y) % 5 == 0);
        let params = ApproxParams {
            sigma: 1e6,
            ..Default::default()
        };
        let est = approximate_all(&img, &mask, &params).unwrap();
        for e in est.iter() {
            let (mut sum, mut n) = ([0.0; 3], 0.0);
            for y in e.y.saturating_sub(6)..(e.y + 7).min(15) {
                for x in e.x.saturating_sub(6)..(e.x + 7).min(15) {
                    if !mask.get(x, y) {
                        let h = img.get(x, y);
                        for c in 0..3 {
                            sum[c] += h[c];
                        }
                        n += 1.0;
                    }
                }
            }
            for c in 0..3 {
                assert!((e.q[c] - sum[c] / n).abs() < 1e-6);
            }
        }
    }

    proptest! {
        #[test]
        fn estimate_is_convex_combination(
            data in proptest::collection::vec(0.0f64..=1.0, 10 * 10 * 3),
            rain in proptest::collection::vec(any::<bool>(), 100),
            sigma in 0.05f64..20.0,
        ) {
            let img = ColorImage::new(10, 10, data).unwrap();
            let mask = RainMask::new(10, 10, rain).unwrap();
            let params = ApproxParams { sigma, window_side: 5, max_growth: 0 };
            let est = approximate_all(&img, &mask, &params).unwrap();
            for e in est.iter().filter(|e| !e.used_fallback()) {
                let mut lo = [f64::INFINITY; 3];
                let mut hi = [f64::NEG_INFINITY; 3];
                for y in e.y.saturating_sub(2)..(e.y + 3).min(10) {
                    for x in e.x.saturating_sub(2)..(e.x + 3).min(10) {
                        if !mask.get(x, y) {
                            let h = img.get(x, y);
                            for c in 0..3 {
                                lo[c] = lo[c].min(h[c]);
                                hi[c] = hi[c].max(h[c]);
                            }
                        }
                    }
                }
                for c in 0..3 {
                    prop_assert!(e.q[c] >= lo[c] - 1e-12 && e.q[c] <= hi[c] + 1e-12);
                }
            }
        }
    }
}
