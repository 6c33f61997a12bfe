//! Raster ingest: decoding, channel selection, background zeroing and
//! border padding.

use std::path::Path;

use image::{DynamicImage, ImageFormat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Value written into the padding frame. Strictly below every 8-bit
/// intensity, so every level set above it closes inside the frame.
pub const PAD_VALUE: f64 = -1.0;

/// Row-major raster of real intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::TooSmall { width, height });
        }
        if values.len() != width * height {
            return Err(Error::ShapeMismatch {
                expected: width * height,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at column `i`, row `j`.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.width + i]
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn value_range(&self) -> f64 {
        self.max_value() - self.min_value()
    }

    /// Sets every value `<= threshold` to exactly zero.
    pub fn zero_background(&self, threshold: f64) -> Self {
        let values = self
            .values
            .iter()
            .map(|&v| if v <= threshold { 0.0 } else { v })
            .collect();
        Self {
            width: self.width,
            height: self.height,
            values,
        }
    }

    /// Surrounds the grid with a one-sample frame of `value`.
    pub fn padded(&self, value: f64) -> Self {
        let (w, h) = (self.width + 2, self.height + 2);
        let mut values = vec![value; w * h];
        for j in 0..self.height {
            let src = &self.values[j * self.width..(j + 1) * self.width];
            values[(j + 1) * w + 1..(j + 1) * w + 1 + self.width].copy_from_slice(src);
        }
        Self {
            width: w,
            height: h,
            values,
        }
    }

    /// True when every border sample equals the global minimum. Level sets
    /// above the minimum never touch the border of such a grid.
    pub fn has_min_frame(&self) -> bool {
        let min = self.min_value();
        let (w, h) = (self.width, self.height);
        (0..w).all(|i| self.get(i, 0) == min && self.get(i, h - 1) == min)
            && (0..h).all(|j| self.get(0, j) == min && self.get(w - 1, j) == min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Green,
    Red,
    Blue,
    Luminance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub channel: Channel,
    pub background_threshold: f64,
    pub pad_border: bool,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            channel: Channel::Green,
            background_threshold: 0.0,
            pad_border: true,
        }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=255.0).contains(&self.background_threshold) {
            return Err(Error::InvalidConfig(format!(
                "background threshold {} is outside [0, 255]",
                self.background_threshold
            )));
        }
        Ok(())
    }
}

pub fn load_image(path: &Path, config: &IngestConfig) -> Result<ScalarGrid> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_image(&bytes, config)
}

/// Decodes PNG, PNM or JPEG bytes and applies the ingest configuration.
pub fn decode_image(bytes: &[u8], config: &IngestConfig) -> Result<ScalarGrid> {
    config.validate()?;
    let format = image::guess_format(bytes).map_err(|e| Error::UnsupportedFormat(e.to_string()))?;
    if !matches!(
        format,
        ImageFormat::Png | ImageFormat::Jpeg | ImageFormat::Pnm
    ) {
        return Err(Error::UnsupportedFormat(format!("{format:?}")));
    }
    let img = image::load_from_memory_with_format(bytes, format)
        .map_err(|e| Error::Decode(e.to_string()))?;
    let grid = channel_grid(&img, config.channel)?;
    let grid = grid.zero_background(config.background_threshold);
    Ok(if config.pad_border {
        grid.padded(PAD_VALUE)
    } else {
        grid
    })
}

fn channel_grid(img: &DynamicImage, channel: Channel) -> Result<ScalarGrid> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w < 2 || h < 2 {
        return Err(Error::TooSmall {
            width: w,
            height: h,
        });
    }
    let has_color = img.color().has_color();
    let values: Vec<f64> = if !has_color || channel == Channel::Luminance {
        img.to_luma8().pixels().map(|p| f64::from(p.0[0])).collect()
    } else {
        let index = match channel {
            Channel::Red => 0,
            Channel::Green => 1,
            Channel::Blue => 2,
            Channel::Luminance => unreachable!(),
        };
        img.to_rgb8()
            .pixels()
            .map(|p| f64::from(p.0[index]))
            .collect()
    };
    ScalarGrid::new(w, h, values)
}
