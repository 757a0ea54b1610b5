//! PNG/JPEG decoding and deterministic PNG encoding.

use std::path::Path;

use image::{ExtendedColorType, ImageEncoder};

use crate::error::{Error, Result};
use crate::tensor::ImageTensor;

/// Decodes any supported raster into RGB in `[0, 1]`.
pub fn decode_rgb(bytes: &[u8]) -> Result<ImageTensor<f32>> {
    let img = image::load_from_memory(bytes)?;
    Ok(ImageTensor::from_rgb8(&img.to_rgb8()))
}

pub fn load_rgb(path: &Path) -> Result<ImageTensor<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_rgb(&bytes)
}

fn encode(raw: &[u8], width: usize, height: usize, color: ExtendedColorType) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(&mut out).write_image(raw, width as u32, height as u32, color)?;
    Ok(out)
}

/// 8-bit RGB PNG of a 3-channel tensor.
pub fn encode_png(img: &ImageTensor<f32>) -> Result<Vec<u8>> {
    let rgb = img.to_rgb8()?;
    encode(rgb.as_raw(), img.width(), img.height(), ExtendedColorType::Rgb8)
}

/// 8-bit grayscale PNG of a 1-channel tensor.
pub fn encode_png_gray(img: &ImageTensor<f32>) -> Result<Vec<u8>> {
    let gray = img.to_luma8()?;
    encode(gray.as_raw(), img.width(), img.height(), ExtendedColorType::L8)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
