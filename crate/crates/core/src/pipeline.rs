//! End-to-end deraining: detect, revise, estimate backgrounds, fit and invert.

use std::time::Instant;

use crate::approx::{approximate_all, ApproxParams, BackgroundEstimate};
use crate::detect::{detect_candidates, revise_mask, DetectParams};
use crate::error::Result;
use crate::imagebuf::{ColorImage, RainMask};
use crate::metrics::StageTimings;
use crate::model::{derain_image, LinearParamsMap, ModelParams};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PipelineConfig {
    pub detect: DetectParams,
    pub approx: ApproxParams,
    pub model: ModelParams,
    /// Keep intermediate products (candidate mask, background estimates).
    pub emit_debug: bool,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.detect.validate()?;
        self.approx.validate()?;
        self.model.validate()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    /// Pixels passing the local-mean test.
    pub candidates: usize,
    /// Candidates dropped by the eigen-color test.
    pub revised_away: usize,
    /// Final rain pixels.
    pub rain: usize,
    /// Rain pixels whose background estimate needed a grown window or none was found.
    pub approx_fallbacks: usize,
    /// Rain pixels where at least one channel was restored from `q`.
    pub fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    pub derained: ColorImage,
    pub mask: RainMask,
    pub params_map: LinearParamsMap,
    pub timings: StageTimings,
    pub counters: Counters,
    /// Present when `emit_debug` was set.
    pub candidates: Option<RainMask>,
    /// Present when `emit_debug` was set.
    pub estimates: Option<BackgroundEstimate>,
}

/// Optional image transform applied before detection.
pub type Prefilter<'a> = &'a (dyn Fn(&ColorImage) -> ColorImage + Sync);

pub fn run(img: &ColorImage, cfg: &PipelineConfig) -> Result<PipelineResult> {
    run_with_prefilter(img, cfg, None)
}

pub fn run_with_prefilter(
    img: &ColorImage,
    cfg: &PipelineConfig,
    prefilter: Option<Prefilter<'_>>,
) -> Result<PipelineResult> {
    cfg.validate()?;
    let filtered;
    let img = match prefilter {
        Some(f) => {
            filtered = f(img);
            &filtered
        }
        None => img,
    };

    let t0 = Instant::now();
    let candidates = detect_candidates(img, &cfg.detect);
    let mask = revise_mask(img, &candidates, &cfg.detect)?;
    let t1 = Instant::now();
    let estimates = approximate_all(img, &mask, &cfg.approx)?;
    let t2 = Instant::now();
    let derained = derain_image(img, &mask, &estimates, &cfg.model)?;
    let t3 = Instant::now();

    let counters = Counters {
        candidates: candidates.count(),
        revised_away: candidates.count() - mask.count(),
        rain: mask.count(),
        approx_fallbacks: estimates.fallback_count(),
        fallbacks: mask
            .rain_pixels()
            .filter(|&(x, y)| derained.params_map.pixel_fell_back(x, y))
            .count(),
    };
    let timings = StageTimings {
        detect: (t1 - t0).as_secs_f64(),
        approx: (t2 - t1).as_secs_f64(),
        fit: (t3 - t2).as_secs_f64(),
    };
    Ok(PipelineResult {
        derained: derained.image,
        mask,
        params_map: derained.params_map,
        timings,
        counters,
        candidates: cfg.emit_debug.then_some(candidates),
        estimates: cfg.emit_debug.then_some(estimates),
    })
}
