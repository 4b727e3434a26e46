//! The per-pixel linear imaging model `p = alpha * s + beta`.
//!
//! For every rain pixel and every channel, the rain pixels inside an `M x M`
//! window around it supply samples `(d_k, q_k)`: observed intensity and
//! estimated background. A ridge-regularized least-squares fit
//!
//! ```text
//! E(alpha, beta) = sum_k (d_k - alpha q_k - beta)^2 + lambda alpha^2
//! ```
//!
//! has the closed form
//!
//! ```text
//! alpha = cov(d, q) / (var(q) + lambda)
//! beta  = mean(d) - alpha mean(q)
//! ```
//!
//! and the window center is restored as `s = (p - beta) / alpha`. Windows
//! whose fit is degenerate fall back to `s = q`.

mod dump;

use rayon::prelude::*;

use crate::approx::BackgroundEstimate;
use crate::error::{Error, Result};
use crate::imagebuf::{ensure_same_dims, ColorImage, GrayImage, RainMask, CHANNELS};

pub use dump::{read_params_csv, write_params_csv};

/// Below this `var(q) + lambda` the slope is unidentifiable and is set to zero.
pub const DEGENERATE_VARIANCE: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Side of the training window (odd).
    pub window_side: usize,
    /// Ridge coefficient on `alpha`.
    pub lambda: f64,
    /// Fits with `alpha` below this are not inverted.
    pub alpha_floor: f64,
    /// Fewest rain pixels a training window must hold.
    pub min_samples: usize,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            window_side: 85,
            lambda: 0.01 * 0.01,
            alpha_floor: 0.2,
            min_samples: 2,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if self.window_side < 3 || self.window_side.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "model.window must be odd and >= 3, got {}",
                self.window_side
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "model.lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.alpha_floor > 0.0 && self.alpha_floor < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "model.alpha_floor must lie in (0, 1), got {}",
                self.alpha_floor
            )));
        }
        if self.min_samples < 2 {
            return Err(Error::InvalidParameter(format!(
                "model.min_samples must be >= 2, got {}",
                self.min_samples
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearParams {
    pub alpha: f64,
    pub beta: f64,
}

impl LinearParams {
    pub const IDENTITY: LinearParams = LinearParams {
        alpha: 1.0,
        beta: 0.0,
    };

    /// Forward model: observed intensity for background `s`.
    #[inline]
    pub fn apply(&self, s: f64) -> f64 {
        self.alpha * s + self.beta
    }

    /// Brightening `p - s` the model adds to background `s`.
    #[inline]
    pub fn enhancement(&self, s: f64) -> f64 {
        (self.alpha - 1.0) * s + self.beta
    }
}

/// One training pair: observed rain intensity `d` and estimated background `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSample {
    pub d: f64,
    pub q: f64,
}

/// Loss minimized by [`fit_window`].
pub fn ridge_loss(samples: &[FitSample], lambda: f64, params: LinearParams) -> f64 {
    samples
        .iter()
        .map(|s| {
            (s.d - params.alpha * s.q - params.beta).powi(2) + lambda * params.alpha * params.alpha
        })
        .sum()
}

/// Closed-form ridge fit of `d = alpha q + beta`.
pub fn fit_window(samples: &[FitSample], lambda: f64) -> Result<LinearParams> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidParameter("cannot fit an empty sample set".into()))?;
    let k = samples.len() as f64;
    // Shift by the first sample so identical inputs cancel exactly.
    let (d0, q0) = (first.d, first.q);
    let (mut sd, mut sq) = (0.0, 0.0);
    for s in samples {
        sd += s.d - d0;
        sq += s.q - q0;
    }
    let (md, mq) = (sd / k, sq / k);
    let (mut cov, mut var) = (0.0, 0.0);
    for s in samples {
        let dq = s.q - q0 - mq;
        cov += (s.d - d0 - md) * dq;
        var += dq * dq;
    }
    cov /= k;
    var /= k;

    let alpha = if var + lambda <= DEGENERATE_VARIANCE {
        0.0
    } else {
        cov / (var + lambda)
    };
    let beta = (d0 + md) - alpha * (q0 + mq);
    Ok(LinearParams { alpha, beta })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reconstruction {
    pub value: f64,
    /// `alpha` fell below the floor and `q` was used.
    pub fallback: bool,
    /// The inverted value left `[0, 1]` and was clamped.
    pub clamped: bool,
}

/// Inverts the model at one pixel, falling back to `q` for small `alpha`.
pub fn reconstruct_pixel(p: f64, params: LinearParams, q: f64, alpha_floor: f64) -> Reconstruction {
    if params.alpha >= alpha_floor {
        let s = (p - params.beta) / params.alpha;
        let value = s.clamp(0.0, 1.0);
        Reconstruction {
            value,
            fallback: false,
            clamped: value != s,
        }
    } else {
        Reconstruction {
            value: q,
            fallback: true,
            clamped: false,
        }
    }
}

/// Fit record for one rain pixel in one channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelFit {
    pub params: LinearParams,
    /// Rain pixels in the training window.
    pub samples: usize,
    pub fallback: bool,
    pub clamped: bool,
}

/// Trained parameters for every rain pixel and channel.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearParamsMap {
    width: usize,
    height: usize,
    fits: [Vec<Option<ChannelFit>>; CHANNELS],
}

impl LinearParamsMap {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            fits: std::array::from_fn(|_| vec![None; width * height]),
        }
    }

    /// Same parameters on every channel of every rain pixel.
    pub fn uniform(mask: &RainMask, params: LinearParams) -> Self {
        let mut map = Self::new(mask.width(), mask.height());
        for (x, y) in mask.rain_pixels() {
            for c in 0..CHANNELS {
                map.insert(
                    x,
                    y,
                    c,
                    ChannelFit {
                        params,
                        samples: 0,
                        fallback: false,
                        clamped: false,
                    },
                );
            }
        }
        map
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize, channel: usize) -> Option<&ChannelFit> {
        self.fits[channel][y * self.width + x].as_ref()
    }

    pub fn insert(&mut self, x: usize, y: usize, channel: usize, fit: ChannelFit) {
        self.fits[channel][y * self.width + x] = Some(fit);
    }

    /// All entries as `(x, y, channel, fit)`, row-major then by channel.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, usize, &ChannelFit)> + '_ {
        let w = self.width;
        (0..self.width * self.height).flat_map(move |i| {
            (0..CHANNELS)
                .filter_map(move |c| self.fits[c][i].as_ref().map(|f| (i % w, i / w, c, f)))
        })
    }

    pub fn len(&self) -> usize {
        self.fits.iter().map(|f| f.iter().flatten().count()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True if any channel of the pixel fell back.
    pub fn pixel_fell_back(&self, x: usize, y: usize) -> bool {
        (0..CHANNELS).any(|c| self.get(x, y, c).is_some_and(|f| f.fallback))
    }
}

/// Row-wise index of rain pixel columns, for gathering window members.
struct RainRows {
    rows: Vec<Vec<usize>>,
}

impl RainRows {
    fn new(mask: &RainMask) -> Self {
        let mut rows = vec![Vec::new(); mask.height()];
        for (x, y) in mask.rain_pixels() {
            rows[y].push(x);
        }
        Self { rows }
    }

    /// Rain columns of row `y` within `[x0, x1)`.
    fn span(&self, y: usize, x0: usize, x1: usize) -> &[usize] {
        let row = &self.rows[y];
        let lo = row.partition_point(|&x| x < x0);
        let hi = row.partition_point(|&x| x < x1);
        &row[lo..hi]
    }
}

/// Derains one channel. `estimates[i]` must hold `q` for every rain pixel.
pub fn derain_channel(
    channel: &GrayImage,
    mask: &RainMask,
    estimates: &[Option<f64>],
    params: &ModelParams,
) -> Result<(GrayImage, Vec<Option<ChannelFit>>)> {
    ensure_same_dims(channel.dims(), mask.dims())?;
    params.validate()?;
    let (w, h) = channel.dims();
    if estimates.len() != w * h {
        return Err(Error::InvalidBuffer(format!(
            "expected {} estimates, got {}",
            w * h,
            estimates.len()
        )));
    }
    if let Some((x, y)) = mask
        .rain_pixels()
        .find(|&(x, y)| estimates[y * w + x].is_none())
    {
        return Err(Error::InvalidBuffer(format!(
            "no background estimate for rain pixel ({x}, {y})"
        )));
    }

    let rows = RainRows::new(mask);
    let coords: Vec<(usize, usize)> = mask.rain_pixels().collect();
    let half = params.window_side / 2;
    let observed = channel.as_slice();

    let fits: Vec<(usize, f64, ChannelFit)> = coords
        .par_iter()
        .map_init(Vec::new, |samples: &mut Vec<FitSample>, &(x, y)| {
            samples.clear();
            let (x0, x1) = (x.saturating_sub(half), (x + half + 1).min(w));
            for yy in y.saturating_sub(half)..(y + half + 1).min(h) {
                for &xx in rows.span(yy, x0, x1) {
                    let i = yy * w + xx;
                    samples.push(FitSample {
                        d: observed[i],
                        q: estimates[i].expect("checked above"),
                    });
                }
            }
            let i = y * w + x;
            let q = estimates[i].expect("checked above");
            let fitted = fit_window(samples, params.lambda).expect("window contains its center");
            let (value, fit) = if samples.len() < params.min_samples {
                (
                    q,
                    ChannelFit {
                        params: fitted,
                        samples: samples.len(),
                        fallback: true,
                        clamped: false,
                    },
                )
            } else {
                let r = reconstruct_pixel(observed[i], fitted, q, params.alpha_floor);
                (
                    r.value,
                    ChannelFit {
                        params: fitted,
                        samples: samples.len(),
                        fallback: r.fallback,
                        clamped: r.clamped,
                    },
                )
            };
            (i, value, fit)
        })
        .collect();

    let mut out = observed.to_vec();
    let mut per_pixel = vec![None; w * h];
    for (i, value, fit) in fits {
        out[i] = value;
        per_pixel[i] = Some(fit);
    }
    Ok((GrayImage::from_raw_unchecked(w, h, out), per_pixel))
}

/// Rain-removed image and the trained parameters behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct Derained {
    pub image: ColorImage,
    pub params_map: LinearParamsMap,
}

/// Runs [`derain_channel`] on R, G and B independently.
pub fn derain_image(
    img: &ColorImage,
    mask: &RainMask,
    estimates: &BackgroundEstimate,
    params: &ModelParams,
) -> Result<Derained> {
    ensure_same_dims(img.dims(), mask.dims())?;
    ensure_same_dims(img.dims(), estimates.dims())?;
    let (w, h) = img.dims();
    let mut params_map = LinearParamsMap::new(w, h);
    let mut channels = Vec::with_capacity(CHANNELS);
    for c in 0..CHANNELS {
        let (out, fits) = derain_channel(&img.channel(c), mask, &estimates.channel(c), params)?;
        params_map.fits[c] = fits;
        channels.push(out);
    }
    let image = ColorImage::from_channels([&channels[0], &channels[1], &channels[2]])?;
    Ok(Derained { image, params_map })
}

/// Re-applies a trained model: `p' = alpha s + beta` at every rain pixel.
pub fn rerain_image(
    derained: &ColorImage,
    mask: &RainMask,
    params_map: &LinearParamsMap,
) -> Result<ColorImage> {
    ensure_same_dims(derained.dims(), mask.dims())?;
    ensure_same_dims(derained.dims(), params_map.dims())?;
    let mut data = derained.as_slice().to_vec();
    for (x, y) in mask.rain_pixels() {
        let i = (y * derained.width() + x) * CHANNELS;
        for c in 0..CHANNELS {
            let fit = params_map
                .get(x, y, c)
                .ok_or(Error::MissingParams { x, y })?;
            let value = fit.params.apply(data[i + c]);
            if !value.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "non-finite model output at ({x}, {y})"
                )));
            }
            data[i + c] = value.clamp(0.0, 1.0);
        }
    }
    Ok(ColorImage::from_raw_unchecked(
        derained.width(),
        derained.height(),
        data,
    ))
}
