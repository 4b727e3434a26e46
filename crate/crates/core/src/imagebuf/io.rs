use std::path::Path;

use image::{DynamicImage, ImageFormat, ImageReader};
use log::warn;

use super::{ColorImage, GrayImage, RainMask};
use crate::error::{Error, Result};

fn decode(path: &Path) -> Result<DynamicImage> {
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Pnm) => {}
        Some(other) => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                reason: format!("{other:?}"),
            })
        }
        None => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                reason: "unrecognized header".into(),
            })
        }
    }
    let img = reader.decode().map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    if img.width() == 0 || img.height() == 0 {
        return Err(Error::EmptyImage {
            path: path.to_path_buf(),
        });
    }
    Ok(img)
}

fn normalize<T: Copy + Into<f64>>(samples: &[T], max: f64) -> Vec<f64> {
    samples.iter().map(|&s| s.into() / max).collect()
}

fn expand_gray(gray: Vec<f64>) -> Vec<f64> {
    gray.into_iter().flat_map(|v| [v, v, v]).collect()
}

/// Reads an 8/16-bit PNG or a PNM file into a normalized RGB image.
///
/// Alpha is dropped with a warning; gray inputs are replicated to RGB.
pub fn load_image(path: impl AsRef<Path>) -> Result<ColorImage> {
    let path = path.as_ref();
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_alpha() {
        warn!("{}: discarding alpha channel", path.display());
    }
    let data = match img {
        DynamicImage::ImageRgb8(buf) => normalize(buf.as_raw(), 255.0),
        DynamicImage::ImageRgb16(buf) => normalize(buf.as_raw(), 65535.0),
        DynamicImage::ImageLuma8(buf) => expand_gray(normalize(buf.as_raw(), 255.0)),
        DynamicImage::ImageLuma16(buf) => expand_gray(normalize(buf.as_raw(), 65535.0)),
        DynamicImage::ImageLumaA8(_) => expand_gray(normalize(img.to_luma8().as_raw(), 255.0)),
        DynamicImage::ImageLumaA16(_) => expand_gray(normalize(img.to_luma16().as_raw(), 65535.0)),
        DynamicImage::ImageRgba8(_) => normalize(img.to_rgb8().as_raw(), 255.0),
        DynamicImage::ImageRgba16(_) => normalize(img.to_rgb16().as_raw(), 65535.0),
        other => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                reason: format!("sample layout {:?}", other.color()),
            })
        }
    };
    ColorImage::new(w, h, data)
}

#[inline]
pub(crate) fn quantize(v: f64) -> u8 {
    // f64::round rounds half away from zero.
    (v * 255.0).round() as u8
}

fn write_png(path: &Path, img: DynamicImage) -> Result<()> {
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|source| match source {
            image::ImageError::IoError(e) => Error::io(path, e),
            source => Error::Image {
                path: path.to_path_buf(),
                source,
            },
        })
}

/// Writes an 8-bit RGB PNG, quantizing each sample as `round(v * 255)`.
pub fn save_image(img: &ColorImage, path: impl AsRef<Path>) -> Result<()> {
    let bytes = img.as_slice().iter().map(|&v| quantize(v)).collect();
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, bytes)
        .expect("buffer length matches dimensions");
    write_png(path.as_ref(), DynamicImage::ImageRgb8(buf))
}

/// Writes an 8-bit grayscale PNG.
pub fn save_gray(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let bytes = img.as_slice().iter().map(|&v| quantize(v)).collect();
    let buf = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, bytes)
        .expect("buffer length matches dimensions");
    write_png(path.as_ref(), DynamicImage::ImageLuma8(buf))
}

/// Writes a mask as 8-bit gray: rain pixels are 0 (black), the rest 255.
pub fn save_mask(mask: &RainMask, path: impl AsRef<Path>) -> Result<()> {
    let bytes = mask
        .as_slice()
        .iter()
        .map(|&rain| if rain { 0 } else { 255 })
        .collect();
    let buf = image::GrayImage::from_raw(mask.width() as u32, mask.height() as u32, bytes)
        .expect("buffer length matches dimensions");
    write_png(path.as_ref(), DynamicImage::ImageLuma8(buf))
}

/// Reads a mask written by [`save_mask`]; any pixel darker than mid-gray is rain.
pub fn load_mask(path: impl AsRef<Path>) -> Result<RainMask> {
    let path = path.as_ref();
    let luma = decode(path)?.to_luma8();
    let (w, h) = (luma.width() as usize, luma.height() as usize);
    RainMask::new(w, h, luma.as_raw().iter().map(|&v| v < 128).collect())
}
