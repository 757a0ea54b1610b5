//! Image rasters.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major `height x width x channels` raster with interleaved channels.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor<T = f32> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Real> ImageTensor<T> {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, T::zero())
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: T) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::invalid("image needs at least one channel"));
        }
        if data.len() != height * width * channels {
            return Err(Error::dims(
                format!(
                    "{height}x{width}x{channels} = {} values",
                    height * width * channels
                ),
                format!("{} values", data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("image contains NaN or infinite values"));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }
    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }
    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }
    #[inline]
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }
    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }
    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> T {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: T) {
        let w = self.width;
        let ch = self.channels;
        self.data[(y * w + x) * ch + c] = v;
    }

    /// Pixel at `(y, x)` with clamp-to-edge addressing for signed coordinates.
    #[inline]
    pub fn pixel_clamped(&self, y: isize, x: isize) -> &[T] {
        let y = y.clamp(0, self.height as isize - 1) as usize;
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> &[T] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    pub fn shape_string(&self) -> String {
        format!("{}x{}x{}", self.height, self.width, self.channels)
    }

    pub fn ensure_same_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::dims(self.shape_string(), other.shape_string()))
        }
    }

    pub fn ensure_channels(&self, channels: usize) -> Result<()> {
        if self.channels == channels {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "expected {channels}-channel image, got {} channels",
                self.channels
            )))
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> ImageTensor<U> {
        ImageTensor {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    pub fn clamp01(&self) -> Self {
        self.map(|v| v.max(T::zero()).min(T::one()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|v| v.as_f64()).sum::<f64>() / self.data.len() as f64
    }

    /// Largest absolute element-wise difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max)
    }

    /// Single channel `c` as its own 1-channel tensor.
    pub fn channel(&self, c: usize) -> Self {
        Self {
            height: self.height,
            width: self.width,
            channels: 1,
            data: self
                .data
                .iter()
                .skip(c)
                .step_by(self.channels)
                .copied()
                .collect(),
        }
    }
}

impl ImageTensor<f32> {
    /// Quantizes to 8-bit RGB with round-to-nearest after clamping.
    pub fn to_rgb8(&self) -> Result<image::RgbImage> {
        self.ensure_channels(3)?;
        let bytes = self
            .data
            .iter()
            .map(|&v| quantize_u8(v))
            .collect::<Vec<_>>();
        image::RgbImage::from_raw(self.width as u32, self.height as u32, bytes)
            .ok_or_else(|| Error::invalid("raster size mismatch"))
    }

    /// Quantizes a 1-channel raster to 8-bit gray.
    pub fn to_luma8(&self) -> Result<image::GrayImage> {
        self.ensure_channels(1)?;
        let bytes = self
            .data
            .iter()
            .map(|&v| quantize_u8(v))
            .collect::<Vec<_>>();
        image::GrayImage::from_raw(self.width as u32, self.height as u32, bytes)
            .ok_or_else(|| Error::invalid("raster size mismatch"))
    }

    pub fn from_rgb8(img: &image::RgbImage) -> Self {
        let (w, h) = img.dimensions();
        Self {
            height: h as usize,
            width: w as usize,
            channels: 3,
            data: img.as_raw().iter().map(|&b| b as f32 / 255.0).collect(),
        }
    }
}

#[inline]
pub fn quantize_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Horizontal and vertical derivative images of a 1-channel raster.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientPair<T = f32> {
    pub dx: ImageTensor<T>,
    pub dy: ImageTensor<T>,
}
