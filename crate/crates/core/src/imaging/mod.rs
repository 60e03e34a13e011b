//! Image buffers, netpbm IO and the pixel operations the model needs.
//!
//! [`Image`] is the 8-bit interchange form read from and written to disk.
//! Processing happens on [`FloatImage`], whose samples are `f64` (unit
//! interval for images converted from 8-bit).

mod blur;
mod heatmap;
mod patch;
mod pnm;
mod resize;

pub use blur::{gaussian_blur, gaussian_kernel};
pub use heatmap::{render_heatmap, HeatmapOptions, PALETTE};
pub use patch::{patchify, unpatchify, PatchGrid};
pub use pnm::{decode_pnm, encode_pnm, load_image, save_image, PnmEncoding};
pub use resize::resize;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("truncated data: expected {expected} samples, found {found}")]
    TruncatedData { expected: usize, found: usize },
    #[error("image {height}x{width} is not divisible into {patch}px patches")]
    IndivisibleDims { height: usize, width: usize, patch: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, ImageError>;

/// An 8-bit image, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub pixels: Vec<u8>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(ImageError::UnsupportedFormat(format!("{channels} channels")));
        }
        if height * width * channels != pixels.len() {
            return Err(ImageError::DimensionMismatch(format!(
                "{height}x{width}x{channels} needs {} samples, got {}",
                height * width * channels,
                pixels.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: u8) -> Self {
        Self::new(height, width, channels, vec![value; height * width * channels])
            .expect("consistent dims")
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> u8 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    pub fn to_float(&self) -> FloatImage {
        FloatImage {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.pixels.iter().map(|&p| p as f64 / 255.0).collect(),
        }
    }

    pub fn to_rgb(&self) -> Image {
        if self.channels == 3 {
            return self.clone();
        }
        let pixels = self.pixels.iter().flat_map(|&p| [p, p, p]).collect();
        Image::new(self.height, self.width, 3, pixels).expect("consistent dims")
    }
}

/// A floating-point image, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatImage {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl FloatImage {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height * width * channels != data.len() {
            return Err(ImageError::DimensionMismatch(format!(
                "{height}x{width}x{channels} needs {} samples, got {}",
                height * width * channels,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Converts unit-interval samples to 8-bit: `floor(255 v + 1e-6)`,
    /// clamped. The small offset keeps values that are integral up to
    /// rounding noise (e.g. a blurred constant) on their integer.
    pub fn to_u8(&self) -> Image {
        let pixels = self.data.iter().map(|&v| unit_to_u8(v)).collect();
        Image::new(self.height, self.width, self.channels, pixels)
            .expect("FloatImage channel count is 1 or 3")
    }
}

pub(crate) fn unit_to_u8(v: f64) -> u8 {
    (v * 255.0 + 1e-6).floor().clamp(0.0, 255.0) as u8
}

/// Blurs then downsizes an image (and its context, when given) into the
/// coarse gist inputs. Blur happens at full resolution, before resizing.
pub fn make_gist_input(
    image: &FloatImage,
    context: Option<&FloatImage>,
    gist_size: usize,
    sigma: f64,
) -> (FloatImage, Option<FloatImage>) {
    let gist = |img: &FloatImage| resize(&gaussian_blur(img, sigma), gist_size, gist_size);
    (gist(image), context.map(gist))
}
