//! CSV sidecar for trained parameters: `x,y,channel,alpha,beta,fallback`.
//!
//! `channel` is 0, 1, 2 for R, G, B and `fallback` is 0 or 1. Floats are
//! written in shortest round-trip form so a reload is exact.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{ChannelFit, LinearParams, LinearParamsMap};
use crate::error::{Error, Result};
use crate::imagebuf::CHANNELS;

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    x: usize,
    y: usize,
    channel: usize,
    alpha: f64,
    beta: f64,
    fallback: u8,
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

pub fn write_params_csv<W: Write>(map: &LinearParamsMap, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for (x, y, channel, fit) in map.iter() {
        writer
            .serialize(Row {
                x,
                y,
                channel,
                alpha: fit.params.alpha,
                beta: fit.params.beta,
                fallback: u8::from(fit.fallback),
            })
            .map_err(csv_error)?;
    }
    writer.flush().map_err(|e| Error::Parse {
        line: 0,
        message: e.to_string(),
    })
}

/// Reads a sidecar into a map of the given image size.
pub fn read_params_csv<R: Read>(input: R, width: usize, height: usize) -> Result<LinearParamsMap> {
    let mut map = LinearParamsMap::new(width, height);
    let mut reader = csv::Reader::from_reader(input);
    for (n, row) in reader.deserialize::<Row>().enumerate() {
        let row = row.map_err(csv_error)?;
        // header is line 1
        let line = n + 2;
        if row.x >= width || row.y >= height || row.channel >= CHANNELS {
            return Err(Error::Parse {
                line,
                message: format!(
                    "entry ({}, {}, channel {}) outside {width}x{height}x{CHANNELS}",
                    row.x, row.y, row.channel
                ),
            });
        }
        if !row.alpha.is_finite() || !row.beta.is_finite() {
            return Err(Error::Parse {
                line,
                message: "alpha and beta must be finite".into(),
            });
        }
        map.insert(
            row.x,
            row.y,
            row.channel,
            ChannelFit {
                params: LinearParams {
                    alpha: row.alpha,
                    beta: row.beta,
                },
                samples: 0,
                fallback: row.fallback != 0,
                clamped: false,
            },
        );
    }
    Ok(map)
}
