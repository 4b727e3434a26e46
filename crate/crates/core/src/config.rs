//! Flat `key=value` configuration files.
//!
//! ```text
//! # comments and blank lines are ignored
//! detect.mu=0.01
//! model.lambda=0.0001
//! ```
//!
//! Keys not present keep their current value, so a file can be layered over
//! the defaults and command-line flags layered over the file.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::pipeline::PipelineConfig;

pub const KEYS: [&str; 10] = [
    "detect.mu",
    "detect.epsilon",
    "detect.window",
    "approx.sigma",
    "approx.window",
    "approx.max_growth",
    "model.window",
    "model.lambda",
    "model.alpha_floor",
    "model.min_samples",
];

fn parse<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value.parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid value {value:?} for {key}"),
    })
}

impl PipelineConfig {
    /// Sets one key. `line` is only used for error messages.
    pub fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "detect.mu" => self.detect.mu = parse(key, value, line)?,
            "detect.epsilon" => self.detect.epsilon = parse(key, value, line)?,
            "detect.window" => self.detect.window_side = parse(key, value, line)?,
            "approx.sigma" => self.approx.sigma = parse(key, value, line)?,
            "approx.window" => self.approx.window_side = parse(key, value, line)?,
            "approx.max_growth" => self.approx.max_growth = parse(key, value, line)?,
            "model.window" => self.model.window_side = parse(key, value, line)?,
            "model.lambda" => self.model.lambda = parse(key, value, line)?,
            "model.alpha_floor" => self.model.alpha_floor = parse(key, value, line)?,
            "model.min_samples" => self.model.min_samples = parse(key, value, line)?,
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown key {other:?}"),
                })
            }
        }
        Ok(())
    }

    /// Applies every `key=value` line of `text` on top of `self`.
    pub fn merge_kv(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: n + 1,
                message: format!("expected key=value, got {line:?}"),
            })?;
            self.set(key, value, n + 1)?;
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.merge_kv(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_map(&self) -> BTreeMap<String, String> {
        let values = [
            self.detect.mu.to_string(),
            self.detect.epsilon.to_string(),
            self.detect.window_side.to_string(),
            self.approx.sigma.to_string(),
            self.approx.window_side.to_string(),
            self.approx.max_growth.to_string(),
            self.model.window_side.to_string(),
            self.model.lambda.to_string(),
            self.model.alpha_floor.to_string(),
            self.model.min_samples.to_string(),
        ];
        KEYS.iter().map(|k| k.to_string()).zip(values).collect()
    }

    pub fn to_kv(&self) -> String {
        self.to_map()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}
