//! Feature images and PNG conversion.

use std::path::Path;

use image::{ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};

/// `height x width x feature_dim` values, row-major with channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImage {
    width: u32,
    height: u32,
    feature_dim: usize,
    data: Vec<f64>,
    background_weight: Option<Vec<f64>>,
}

impl FeatureImage {
    pub fn new(width: u32, height: u32, feature_dim: usize) -> Self {
        Self {
            width,
            height,
            feature_dim,
            data: vec![0.0; width as usize * height as usize * feature_dim],
            background_weight: None,
        }
    }

    /// Every pixel set to `value`.
    pub fn filled(width: u32, height: u32, value: &[f64]) -> Self {
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            feature_dim: value.len(),
            data: value.iter().copied().cycle().take(n * value.len()).collect(),
            background_weight: None,
        }
    }

    pub fn from_data(width: u32, height: u32, feature_dim: usize, data: Vec<f64>) -> Result<Self> {
        let expected = width as usize * height as usize * feature_dim;
        if data.len() != expected {
            return Err(Error::Dimension(format!(
                "{width}x{height}x{feature_dim} image needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            feature_dim,
            data,
            background_weight: None,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> &[f64] {
        let i = (y as usize * self.width as usize + x as usize) * self.feature_dim;
        &self.data[i..i + self.feature_dim]
    }

    pub fn pixel_mut(&mut self, x: u32, y: u32) -> &mut [f64] {
        let i = (y as usize * self.width as usize + x as usize) * self.feature_dim;
        &mut self.data[i..i + self.feature_dim]
    }

    /// Per-pixel background weight, present when requested from the renderer.
    pub fn background_weight(&self) -> Option<&[f64]> {
        self.background_weight.as_deref()
    }

    pub fn set_background_weight(&mut self, plane: Option<Vec<f64>>) -> Result<()> {
        if let Some(p) = &plane {
            if p.len() != self.pixel_count() {
                return Err(Error::Dimension(format!(
                    "background-weight plane has {} values, image has {} pixels",
                    p.len(),
                    self.pixel_count()
                )));
            }
        }
        self.background_weight = plane;
        Ok(())
    }

    pub fn same_shape(&self, other: &FeatureImage) -> bool {
        self.width == other.width && self.height == other.height && self.feature_dim == other.feature_dim
    }

    pub fn check_shape(&self, other: &FeatureImage, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "{what}: {}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.feature_dim, other.width, other.height, other.feature_dim
            )))
        }
    }

    /// Largest absolute channel difference; `inf` when shapes differ.
    pub fn max_abs_diff(&self, other: &FeatureImage) -> f64 {
        if !self.same_shape(other) {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Image made of the listed channels, in order.
    pub fn select_channels(&self, channels: &[usize]) -> Result<FeatureImage> {
        if let Some(&c) = channels.iter().find(|&&c| c >= self.feature_dim) {
            return Err(Error::Dimension(format!(
                "channel {c} out of range for {} channels",
                self.feature_dim
            )));
        }
        let mut data = Vec::with_capacity(self.pixel_count() * channels.len());
        for px in self.data.chunks_exact(self.feature_dim.max(1)) {
            data.extend(channels.iter().map(|&c| px[c]));
        }
        FeatureImage::from_data(self.width, self.height, channels.len(), data)
    }

    pub fn round_to_f32(&mut self) {
        self.data.iter_mut().for_each(|v| *v = *v as f32 as f64);
        if let Some(p) = &mut self.background_weight {
            p.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BitDepth {
    #[default]
    Eight,
    Sixteen,
}

/// Writes a 1- or 3-channel image as PNG; values are clamped to `[0, 1]`.
pub fn write_png(img: &FeatureImage, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = (img.width(), img.height());
    let q8 = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let q16 = |v: f64| (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
    match (img.feature_dim(), depth) {
        (1, BitDepth::Eight) => {
            let buf: Vec<u8> = img.data().iter().map(|&v| q8(v)).collect();
            ImageBuffer::<Luma<u8>, _>::from_raw(w, h, buf)
                .expect("sized")
                .save(path)?;
        }
        (1, BitDepth::Sixteen) => {
            let buf: Vec<u16> = img.data().iter().map(|&v| q16(v)).collect();
            ImageBuffer::<Luma<u16>, _>::from_raw(w, h, buf)
                .expect("sized")
                .save(path)?;
        }
        (3, BitDepth::Eight) => {
            let buf: Vec<u8> = img.data().iter().map(|&v| q8(v)).collect();
            ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, buf)
                .expect("sized")
                .save(path)?;
        }
        (3, BitDepth::Sixteen) => {
            let buf: Vec<u16> = img.data().iter().map(|&v| q16(v)).collect();
            ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, buf)
                .expect("sized")
                .save(path)?;
        }
        (d, _) => {
            return Err(Error::Config(format!(
                "cannot write a {d}-channel image as PNG; select 1 or 3 channels or apply a shader"
            )))
        }
    }
    Ok(())
}

/// Reads a PNG into `[0, 1]` values with `channels` = 1 (luma) or 3 (RGB).
pub fn read_png(path: impl AsRef<Path>, channels: usize) -> Result<FeatureImage> {
    let path = path.as_ref();
    let dynimg = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Image(other),
    })?;
    let (w, h) = (dynimg.width(), dynimg.height());
    let data: Vec<f64> = match channels {
        1 => dynimg
            .to_luma16()
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 65535.0)
            .collect(),
        3 => dynimg
            .to_rgb16()
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 65535.0)
            .collect(),
        c => return Err(Error::Config(format!("PNG targets need 1 or 3 channels, got {c}"))),
    };
    FeatureImage::from_data(w, h, channels, data)
}
