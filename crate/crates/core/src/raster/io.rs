//! Raster file formats.
//!
//! Probability maps use the `OBFMAP01` container: the 8-byte magic
//! `OBFMAP01`, width and height as little-endian `u32`, then
//! `width * height` little-endian `f32` values in row-major order.
//! Binary maps are 8-bit single-channel PNGs holding only 0 and 255.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::{GrayImage, ImageFormat, Luma, RgbImage};

use super::{BinaryMap, ProbabilityMap};
use crate::error::{Error, Result};

pub const OBFMAP_MAGIC: &[u8; 8] = b"OBFMAP01";
const HEADER_LEN: usize = 16;

/// Unconstrained float raster in the `OBFMAP01` container (depth maps).
#[derive(Debug, Clone, PartialEq)]
pub struct FloatRaster {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

pub fn encode_float_raster(width: usize, height: usize, data: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * data.len());
    out.extend_from_slice(OBFMAP_MAGIC);
    out.extend_from_slice(&(width as u32).to_le_bytes());
    out.extend_from_slice(&(height as u32).to_le_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_float_raster(bytes: &[u8]) -> std::result::Result<FloatRaster, String> {
    if bytes.len() < HEADER_LEN || &bytes[..8] != OBFMAP_MAGIC {
        return Err("missing OBFMAP01 header".into());
    }
    let width = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or("dimensions overflow")?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != expected {
        return Err(format!(
            "expected {expected} payload bytes for {width}x{height}, found {}",
            body.len()
        ));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(FloatRaster {
        width,
        height,
        data,
    })
}

pub fn encode_obfmap(map: &ProbabilityMap) -> Vec<u8> {
    encode_float_raster(map.width(), map.height(), map.data())
}

pub fn decode_obfmap(bytes: &[u8]) -> std::result::Result<ProbabilityMap, String> {
    let raw = decode_float_raster(bytes)?;
    ProbabilityMap::from_vec(raw.width, raw.height, raw.data).map_err(|e| e.to_string())
}

pub fn write_obfmap(path: &Path, map: &ProbabilityMap) -> Result<()> {
    fs::write(path, encode_obfmap(map)).map_err(|e| Error::io(path, e))
}

pub fn read_obfmap(path: &Path) -> Result<ProbabilityMap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_obfmap(&bytes).map_err(|m| Error::parse(path, m))
}

pub fn read_float_raster(path: &Path) -> Result<FloatRaster> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_float_raster(&bytes).map_err(|m| Error::parse(path, m))
}

pub fn mask_to_image(map: &BinaryMap) -> GrayImage {
    GrayImage::from_fn(map.width() as u32, map.height() as u32, |x, y| {
        Luma([if map.get(x as usize, y as usize) { 255 } else { 0 }])
    })
}

/// Converts a {0, 255} image into a binary map; any other value is an error.
pub fn image_to_mask(img: &GrayImage) -> std::result::Result<BinaryMap, String> {
    let mut map = BinaryMap::new(img.width() as usize, img.height() as usize);
    for (x, y, Luma([v])) in img.enumerate_pixels() {
        match v {
            0 => {}
            255 => map.set(x as usize, y as usize, true),
            other => return Err(format!("mask value {other} at ({x}, {y}) is not 0 or 255")),
        }
    }
    Ok(map)
}

pub fn encode_png(img: &GrayImage) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)
        .expect("PNG encoding into memory cannot fail");
    buf.into_inner()
}

pub fn encode_rgb_png(img: &RgbImage) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)
        .expect("PNG encoding into memory cannot fail");
    buf.into_inner()
}

pub fn encode_mask_png(map: &BinaryMap) -> Vec<u8> {
    encode_png(&mask_to_image(map))
}

pub fn decode_mask_png(bytes: &[u8]) -> std::result::Result<BinaryMap, String> {
    let img = image::load_from_memory(bytes).map_err(|e| e.to_string())?;
    if !matches!(img, image::DynamicImage::ImageLuma8(_)) {
        return Err(format!("expected 8-bit grayscale mask, found {:?}", img.color()));
    }
    image_to_mask(&img.into_luma8())
}

pub fn write_mask(path: &Path, map: &BinaryMap) -> Result<()> {
    fs::write(path, encode_mask_png(map)).map_err(|e| Error::io(path, e))
}

pub fn read_mask(path: &Path) -> Result<BinaryMap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_mask_png(&bytes).map_err(|m| Error::parse(path, m))
}

pub fn write_gray(path: &Path, img: &GrayImage) -> Result<()> {
    fs::write(path, encode_png(img)).map_err(|e| Error::io(path, e))
}

/// Loads any standard raster as 8-bit RGB.
pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Image {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })?;
    Ok(img.into_rgb8())
}

pub fn decode_rgb(bytes: &[u8]) -> std::result::Result<RgbImage, String> {
    image::load_from_memory(bytes)
        .map(|img| img.into_rgb8())
        .map_err(|e| e.to_string())
}

/// Reads a probability map from an `OBFMAP01` file or, for any other
/// extension, from a grayscale raster scaled by 1/255.
pub fn read_probability(path: &Path) -> Result<ProbabilityMap> {
    if path.extension().is_some_and(|e| e == "obfmap") {
        return read_obfmap(path);
    }
    let img = image::open(path)
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .into_luma8();
    let data = img.pixels().map(|Luma([v])| f32::from(*v) / 255.0).collect();
    ProbabilityMap::from_vec(img.width() as usize, img.height() as usize, data)
}
