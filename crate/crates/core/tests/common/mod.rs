//! Fixtures and naive reference implementations shared by integration tests.
#![allow(dead_code)]

pub mod oracles;

use std::path::PathBuf;

use derain_core::imagebuf::load_image;
use derain_core::synth::{synthesize, StreakSpec, SynthScene};
use derain_core::ColorImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Smooth, nearly neutral backgrounds for the synthetic suite (see fixtures/README.md).
pub const TEXTURES: [&str; 7] = [
    "tex_clouds",
    "tex_fog",
    "tex_wall",
    "tex_stone",
    "tex_sand",
    "tex_asphalt",
    "tex_mist",
];

/// Downsampled photographs.
pub const NATURAL: [&str; 6] = [
    "astronaut",
    "camera",
    "chelsea",
    "coffee",
    "rocket",
    "retina",
];

/// Fine-grained grayscale textures.
pub const HIGH_FREQUENCY: [&str; 3] = ["brick", "grass", "gravel"];

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(format!("{name}.png"))
}

pub fn fixture(name: &str) -> ColorImage {
    load_image(fixture_path(name)).expect("bundled fixture loads")
}

/// One member of the seeded synthetic evaluation suite.
pub struct SuiteCase {
    pub id: String,
    pub spec: StreakSpec,
    pub scene: SynthScene,
}

/// Ten rainy scenes over [`TEXTURES`]: 20-60 streaks with intensity drawn
/// from [0.15, 0.3].
pub fn synthetic_suite() -> Vec<SuiteCase> {
    rainy_set(&TEXTURES, 10, 2024, (0.15, 0.3))
}

/// `n` seeded rainy scenes cycling through `names`, intensity drawn from `r`.
pub fn rainy_set(names: &[&str], n: usize, seed: u64, r: (f64, f64)) -> Vec<SuiteCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let name = names[i % names.len()];
            let spec = StreakSpec {
                count: rng.gen_range(20..=60),
                angle: rng.gen_range(-20.0..20.0),
                length: rng.gen_range(10..=24),
                width: rng.gen_range(1..=2),
                intensity: rng.gen_range(r.0..=r.1),
                seed: seed + i as u64,
            };
            let scene = synthesize(&fixture(name), &spec).unwrap();
            SuiteCase {
                id: format!("{name}-{i}"),
                spec,
                scene,
            }
        })
        .collect()
}

/// Flat gray background with well separated vertical-ish streaks.
pub fn flat_scene(size: usize, background: f64, intensity: f64, seed: u64) -> SynthScene {
    let bg = ColorImage::filled(size, size, [background; 3]).unwrap();
    let spec = StreakSpec {
        count: size * size / 800,
        angle: 8.0,
        length: 14,
        width: 1,
        intensity,
        seed,
    };
    synthesize(&bg, &spec).unwrap()
}
