//! PSNR and SSIM against a ground truth, and the per-image evaluation report.
//!
//! PSNR uses a peak of 1 and a single MSE over all three channels. SSIM is the
//! standard windowed index (11x11 Gaussian, sigma 1.5, K1 = 0.01, K2 = 0.03,
//! L = 1) on Rec. 601 luminance, averaged over every window position that fits
//! inside the image.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::imagebuf::{ensure_same_dims, ColorImage, GrayImage};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

pub fn mse(a: &ColorImage, b: &ColorImage) -> Result<f64> {
    ensure_same_dims(a.dims(), b.dims())?;
    let sum: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.as_slice().len() as f64)
}

/// Peak signal-to-noise ratio in dB; identical images give `f64::INFINITY`.
pub fn psnr(a: &ColorImage, b: &ColorImage) -> Result<f64> {
    let mse = mse(a, b)?;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

/// Normalized 1-D Gaussian taps.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let center = (size / 2) as f64;
    let taps: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - center;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Separable "valid" correlation: output is `(w - k + 1) x (h - k + 1)`.
fn filter_valid(src: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let k = kernel.len();
    let (ow, oh) = (width + 1 - k, height + 1 - k);
    let mut rows = vec![0.0; ow * height];
    for y in 0..height {
        let line = &src[y * width..(y + 1) * width];
        for x in 0..ow {
            rows[y * ow + x] = kernel.iter().zip(&line[x..x + k]).map(|(w, v)| w * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = kernel
                .iter()
                .enumerate()
                .map(|(j, w)| w * rows[(y + j) * ow + x])
                .sum();
        }
    }
    out
}

/// Mean SSIM between two single-channel images.
pub fn ssim_gray(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    ensure_same_dims(a.dims(), b.dims())?;
    let (w, h) = a.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::TooSmall {
            width: w,
            height: h,
            window: SSIM_WINDOW,
        });
    }
    let kernel = gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA);
    let (xa, xb) = (a.as_slice(), b.as_slice());
    let aa: Vec<f64> = xa.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = xb.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = xa.iter().zip(xb).map(|(p, q)| p * q).collect();

    let mu_a = filter_valid(xa, w, h, &kernel);
    let mu_b = filter_valid(xb, w, h, &kernel);
    let e_aa = filter_valid(&aa, w, h, &kernel);
    let e_bb = filter_valid(&bb, w, h, &kernel);
    let e_ab = filter_valid(&ab, w, h, &kernel);

    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = e_aa[i] - ma * ma;
            let var_b = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (var_a + var_b + SSIM_C2))
        })
        .sum();
    Ok((total / n as f64).clamp(-1.0, 1.0))
}

/// SSIM on the luminance of two color images.
pub fn ssim(a: &ColorImage, b: &ColorImage) -> Result<f64> {
    ensure_same_dims(a.dims(), b.dims())?;
    ssim_gray(&a.luminance(), &b.luminance())
}

/// Wall time per pipeline stage, in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub detect: f64,
    pub approx: f64,
    pub fit: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.detect + self.approx + self.fit
    }
}

fn serialize_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn deserialize_db<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Db {
        Num(f64),
        Text(String),
    }
    match Db::deserialize(d)? {
        Db::Num(v) => Ok(v),
        Db::Text(t) if t == "inf" => Ok(f64::INFINITY),
        Db::Text(t) => Err(serde::de::Error::custom(format!(
            "expected a number or \"inf\", got {t:?}"
        ))),
    }
}

/// Scores of one rainy/derained pair against its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub id: String,
    #[serde(serialize_with = "serialize_db", deserialize_with = "deserialize_db")]
    pub psnr_rainy: f64,
    #[serde(serialize_with = "serialize_db", deserialize_with = "deserialize_db")]
    pub psnr_derained: f64,
    pub ssim_rainy: f64,
    pub ssim_derained: f64,
    #[serde(serialize_with = "serialize_db", deserialize_with = "deserialize_db")]
    pub psnr_gain: f64,
    pub ssim_gain: f64,
    pub elapsed_detect_s: Option<f64>,
    pub elapsed_approx_s: Option<f64>,
    pub elapsed_fit_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<BTreeMap<String, String>>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }
}

fn gain(after: f64, before: f64) -> f64 {
    if after.is_infinite() && before.is_infinite() {
        0.0
    } else {
        after - before
    }
}

pub fn evaluate(
    id: impl Into<String>,
    gt: &ColorImage,
    rainy: &ColorImage,
    derained: &ColorImage,
    timings: Option<StageTimings>,
) -> Result<EvalReport> {
    ensure_same_dims(gt.dims(), rainy.dims())?;
    ensure_same_dims(gt.dims(), derained.dims())?;
    let psnr_rainy = psnr(gt, rainy)?;
    let psnr_derained = psnr(gt, derained)?;
    let ssim_rainy = ssim(gt, rainy)?;
    let ssim_derained = ssim(gt, derained)?;
    Ok(EvalReport {
        id: id.into(),
        psnr_rainy,
        psnr_derained,
        ssim_rainy,
        ssim_derained,
        psnr_gain: gain(psnr_derained, psnr_rainy),
        ssim_gain: ssim_derained - ssim_rainy,
        elapsed_detect_s: timings.map(|t| t.detect),
        elapsed_approx_s: timings.map(|t| t.approx),
        elapsed_fit_s: timings.map(|t| t.fit),
        config: None,
    })
}

/// Fixed-width text table, one row per report.
pub fn format_table(reports: &[EvalReport]) -> String {
    let mut out = format!(
        "{:<24} {:>11} {:>13} {:>10} {:>10} {:>12} {:>10}\n",
        "id",
        "psnr_rainy",
        "psnr_derained",
        "psnr_gain",
        "ssim_rainy",
        "ssim_derained",
        "ssim_gain"
    );
    let db = |v: f64| {
        if v.is_infinite() {
            "inf".to_string()
        } else {
            format!("{v:.3}")
        }
    };
    for r in reports {
        let _ = writeln!(
            out,
            "{:<24} {:>11} {:>13} {:>10} {:>10.4} {:>12.4} {:>10.4}",
            r.id,
            db(r.psnr_rainy),
            db(r.psnr_derained),
            db(r.psnr_gain),
            r.ssim_rainy,
            r.ssim_derained,
            r.ssim_gain
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> ColorImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ColorImage::from_fn(w, h, |_, _| [rng.gen(), rng.gen(), rng.gen()]).unwrap()
    }

    /// Windowed SSIM straight from the definition, no separable filtering.
    fn naive_ssim(a: &GrayImage, b: &GrayImage) -> f64 {
        let (w, h) = a.dims();
        let c = 5.0;
        let mut weights = [[0.0; 11]; 11];
        let mut total = 0.0;
        for (j, row) in weights.iter_mut().enumerate() {
            for (i, v) in row.iter_mut().enumerate() {
                let (dx, dy) = (i as f64 - c, j as f64 - c);
                *v = (-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5)).exp();
                total += *v;
            }
        }
        let mut sum = 0.0;
        let mut count = 0.0;
        for y0 in 0..=h - 11 {
            for x0 in 0..=w - 11 {
                let (mut ma, mut mb) = (0.0, 0.0);
                for j in 0..11 {
                    for i in 0..11 {
                        let wt = weights[j][i] / total;
                        ma += wt * a.get(x0 + i, y0 + j);
                        mb += wt * b.get(x0 + i, y0 + j);
                    }
                }
                let (mut va, mut vb, mut cab) = (0.0, 0.0, 0.0);
                for j in 0..11 {
                    for i in 0..11 {
                        let wt = weights[j][i] / total;
                        let (da, db) = (a.get(x0 + i, y0 + j) - ma, b.get(x0 + i, y0 + j) - mb);
                        va += wt * da * da;
                        vb += wt * db * db;
                        cab += wt * da * db;
                    }
                }
                let (c1, c2) = (1e-4, 9e-4);
                sum += ((2.0 * ma * mb + c1) * (2.0 * cab + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1.0;
            }
        }
        sum / count
    }

    #[test]
    fn identical_images() {
        let a = random_image(16, 16, 1);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn constant_offset_gives_20_db() {
        let a = ColorImage::filled(8, 8, [0.3, 0.4, 0.5]).unwrap();
        let b = ColorImage::filled(8, 8, [0.4, 0.5, 0.6]).unwrap();
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn dimension_and_size_errors() {
        let a = random_image(16, 16, 1);
        let b = random_image(16, 15, 1);
        assert!(matches!(psnr(&a, &b), Err(Error::DimensionMismatch { .. })));
        let small = random_image(10, 40, 2);
        assert!(matches!(ssim(&small, &small), Err(Error::TooSmall { .. })));
    }

    #[test]
    fn inverted_image_is_dissimilar() {
        let a = random_image(32, 32, 3);
        let inv = ColorImage::new(32, 32, a.as_slice().iter().map(|v| 1.0 - v).collect()).unwrap();
        let s = ssim(&a, &inv).unwrap();
        assert!(s < 1.0 && s >= -1.0);
    }

    #[test]
    fn shifted_texture_matches_naive_ssim() {
        let a = ColorImage::from_fn(64, 64, |x, y| {
            let t = ((x as f64 * 0.3).sin() * (y as f64 * 0.2).cos() + 1.0) * 0.4;
            [t, (t * 0.8 + 0.05).min(1.0), 0.5 * t]
        })
        .unwrap();
        let b = ColorImage::new(
            64,
            64,
            a.as_slice().iter().map(|v| (v + 0.05).min(1.0)).collect(),
        )
        .unwrap();
        let fast = ssim(&a, &b).unwrap();
        let slow = naive_ssim(&a.luminance(), &b.luminance());
        assert!((fast - slow).abs() < 1e-6, "{fast} vs {slow}");
        assert!(fast < 1.0);
    }

    #[test]
    fn report_json_shape() {
        let gt = random_image(16, 16, 4);
        let rainy = random_image(16, 16, 5);
        let rep = evaluate(
            "x",
            &gt,
            &rainy,
            &gt,
            Some(StageTimings {
                detect: 0.1,
                approx: 0.2,
                fit: 0.3,
            }),
        )
        .unwrap();
        assert_eq!(rep.psnr_derained, f64::INFINITY);
        assert_eq!(rep.psnr_gain, f64::INFINITY);
        let json = rep.to_json();
        assert!(json.contains("\"psnr_derained\":\"inf\""));
        for key in [
            "id",
            "psnr_rainy",
            "ssim_rainy",
            "ssim_derained",
            "elapsed_detect_s",
            "elapsed_approx_s",
            "elapsed_fit_s",
        ] {
            assert!(json.contains(&format!("\"{key}\"")), "{key} missing");
        }
        assert_eq!(EvalReport::from_json(&json).unwrap(), rep);

        let same = evaluate("y", &gt, &rainy, &rainy, None).unwrap();
        assert_eq!(same.psnr_gain, 0.0);
        assert_eq!(same.ssim_gain, 0.0);
        assert!(same.to_json().contains("\"elapsed_fit_s\":null"));
        assert!(format_table(&[rep, same]).lines().count() == 3);
    }

    #[test]
    fn psnr_falls_as_noise_grows() {
        let base = ColorImage::filled(24, 24, [0.5; 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pattern: Vec<f64> = (0..24 * 24 * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut last = f64::INFINITY;
        for amp in [0.01, 0.02, 0.05, 0.1, 0.2, 0.4] {
            let noisy =
                ColorImage::new(24, 24, pattern.iter().map(|n| 0.5 + amp * n).collect()).unwrap();
            let p = psnr(&base, &noisy).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn psnr_and_ssim_are_symmetric(s1 in any::<u64>(), s2 in any::<u64>()) {
            let (a, b) = (random_image(12, 13, s1), random_image(12, 13, s2));
            prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
            prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() <= 1e-12);
        }
    }
}
