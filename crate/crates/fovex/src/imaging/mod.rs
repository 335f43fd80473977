//! Image and scalar-field primitives: Gaussian kernels and blobs, separable
//! blur, bilinear resize, and min-max normalization.
//!
//! Conventions used throughout the crate:
//! - pixel data is row-major by `(row, column, channel)`, values in `[0, 1]`;
//! - pixel `(r, c)` samples the continuous plane at `(r + 0.5, c + 0.5)`;
//! - a normalized coordinate `u ∈ [0, 1]` maps to the continuous pixel
//!   coordinate `u * size`, so `u = 0.5` is the exact grid center regardless
//!   of resolution.

pub mod io;

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Dense `H×W×C` raster with all values finite and in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    /// Builds an image from row-major `(row, column, channel)` data,
    /// validating shape and value range.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("image dimensions must be at least 1x1"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!(
                "channel count must be 1 or 3, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::invalid(format!(
                "data length {} does not match {}x{}x{}",
                data.len(),
                height,
                width,
                channels
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::invalid(format!(
                "image values must be finite and in [0,1], found {v}"
            )));
        }
        Ok(Self { height, width, channels, data })
    }

    /// Image with every sample set to `value`.
    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Raw mutable access for in-crate masking loops; writes must keep
    /// values finite in [0,1].
    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// Converts between 1 and 3 channels: grayscale replicates into RGB,
    /// RGB averages into grayscale. A matching channel count is a clone.
    pub fn to_channels(&self, channels: usize) -> Result<Image> {
        if channels == self.channels {
            return Ok(self.clone());
        }
        match (self.channels, channels) {
            (1, 3) => {
                let mut data = Vec::with_capacity(self.data.len() * 3);
                for &v in &self.data {
                    data.extend_from_slice(&[v, v, v]);
                }
                Image::new(self.height, self.width, 3, data)
            }
            (3, 1) => {
                let data = self
                    .data
                    .chunks_exact(3)
                    .map(|px| (px[0] + px[1] + px[2]) / 3.0)
                    .collect();
                Image::new(self.height, self.width, 1, data)
            }
            _ => Err(Error::invalid(format!(
                "unsupported channel conversion {} -> {}",
                self.channels, channels
            ))),
        }
    }
}

/// Dense `H×W` real field on the same grid as the image it modulates.
/// Values are finite but otherwise unconstrained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("field dimensions must be at least 1x1"));
        }
        if data.len() != height * width {
            return Err(Error::invalid(format!(
                "data length {} does not match {}x{}",
                data.len(),
                height,
                width
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("field values must be finite"));
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![0.0; height * width] }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Raw mutable access; callers keep values finite.
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Row-major index of the maximum value; first occurrence wins ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        (best / self.width, best % self.width)
    }
}

/// Axis-aligned pixel rectangle, `{x, y}` the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        col >= self.x && col < self.x + self.w && row >= self.y && row < self.y + self.h
    }

    pub fn intersects_grid(&self, height: usize, width: usize) -> bool {
        self.w > 0 && self.h > 0 && self.x < width && self.y < height
    }

    /// Center of the rectangle in normalized `[0, 1]²` coordinates of a grid.
    pub fn center_normalized(&self, height: usize, width: usize) -> (f64, f64) {
        (
            (self.x as f64 + self.w as f64 / 2.0) / width as f64,
            (self.y as f64 + self.h as f64 / 2.0) / height as f64,
        )
    }

    /// Rescales the rectangle from one grid to another, keeping it non-empty
    /// and inside the target grid.
    pub fn rescale(&self, from_h: usize, from_w: usize, to_h: usize, to_w: usize) -> Rect {
        let sx = to_w as f64 / from_w as f64;
        let sy = to_h as f64 / from_h as f64;
        let x = ((self.x as f64 * sx).round() as usize).min(to_w.saturating_sub(1));
        let y = ((self.y as f64 * sy).round() as usize).min(to_h.saturating_sub(1));
        let w = ((self.w as f64 * sx).round() as usize).clamp(1, to_w - x);
        let h = ((self.h as f64 * sy).round() as usize).clamp(1, to_h - y);
        Rect { x, y, w, h }
    }
}

/// Symmetric 1-D Gaussian kernel with unit-sum taps.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel1D {
    radius: usize,
    taps: Vec<f64>,
}

impl GaussianKernel1D {
    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }
}

/// Samples `exp(-(i - radius)² / 2σ²)` over `filter_size` taps and
/// renormalizes to unit sum. `filter_size` must be odd; the kernel is
/// truncated there regardless of `sigma`.
pub fn make_gaussian_kernel(sigma: f64, filter_size: usize) -> Result<GaussianKernel1D> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("kernel sigma must be positive, got {sigma}")));
    }
    if filter_size == 0 || filter_size % 2 == 0 {
        return Err(Error::invalid(format!(
            "kernel filter size must be odd and nonzero, got {filter_size}"
        )));
    }
    let radius = filter_size / 2;
    let mut taps: Vec<f64> = (0..filter_size)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    Ok(GaussianKernel1D { radius, taps })
}

/// Separable Gaussian blur: horizontal pass then vertical pass per channel,
/// edge-clamp (replicate) padding at the borders, output clamped to `[0, 1]`.
pub fn blur(image: &Image, kernel: &GaussianKernel1D) -> Image {
    let (h, w, ch) = (image.height, image.width, image.channels);
    let r = kernel.radius as isize;

    // Horizontal pass.
    let mut mid = vec![0.0; image.data.len()];
    for row in 0..h {
        for col in 0..w {
            for channel in 0..ch {
                let mut acc = 0.0;
                for (k, &t) in kernel.taps.iter().enumerate() {
                    let src = (col as isize + k as isize - r).clamp(0, w as isize - 1) as usize;
                    acc += t * image.get(row, src, channel);
                }
                mid[(row * w + col) * ch + channel] = acc;
            }
        }
    }

    // Vertical pass.
    let mut out = vec![0.0; image.data.len()];
    for row in 0..h {
        for col in 0..w {
            for channel in 0..ch {
                let mut acc = 0.0;
                for (k, &t) in kernel.taps.iter().enumerate() {
                    let src = (row as isize + k as isize - r).clamp(0, h as isize - 1) as usize;
                    acc += t * mid[(src * w + col) * ch + channel];
                }
                out[(row * w + col) * ch + channel] = acc.clamp(0.0, 1.0);
            }
        }
    }

    Image { height: h, width: w, channels: ch, data: out }
}

/// Amplitude-normalized Gaussian blob (peak value approaches 1) centered at a
/// normalized coordinate, evaluated at half-integer pixel centers:
///
/// `field[r, c] = exp(-((r+0.5 - y·H)² + (c+0.5 - x·W)²) / 2σ²)`
///
/// The center may lie outside `[0, 1]²`; it is evaluated as-is.
pub fn gaussian_blob(
    center_x: f64,
    center_y: f64,
    sigma_px: f64,
    height: usize,
    width: usize,
) -> Result<ScalarField> {
    if !(sigma_px > 0.0) || !sigma_px.is_finite() {
        return Err(Error::invalid(format!("blob sigma must be positive, got {sigma_px}")));
    }
    if !center_x.is_finite() || !center_y.is_finite() {
        return Err(Error::invalid("blob center must be finite"));
    }
    let cx = center_x * width as f64;
    let cy = center_y * height as f64;
    let inv = 1.0 / (2.0 * sigma_px * sigma_px);
    let mut data = Vec::with_capacity(height * width);
    for row in 0..height {
        let dy = row as f64 + 0.5 - cy;
        for col in 0..width {
            let dx = col as f64 + 0.5 - cx;
            data.push((-(dx * dx + dy * dy) * inv).exp());
        }
    }
    Ok(ScalarField { height, width, data })
}

/// `(field - min) / (max - min)`; a constant field normalizes to all zeros.
pub fn min_max_normalize(field: &ScalarField) -> ScalarField {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in &field.data {
        min = min.min(v);
        max = max.max(v);
    }
    if max - min <= 0.0 {
        return ScalarField::zeros(field.height, field.width);
    }
    let span = max - min;
    let data = field.data.iter().map(|&v| (v - min) / span).collect();
    ScalarField { height: field.height, width: field.width, data }
}

/// Bilinear resize with half-pixel-centered sampling.
pub fn resize_bilinear(image: &Image, new_h: usize, new_w: usize) -> Result<Image> {
    if new_h == 0 || new_w == 0 {
        return Err(Error::invalid("resize target dimensions must be at least 1x1"));
    }
    if new_h == image.height && new_w == image.width {
        return Ok(image.clone());
    }
    let (h, w, ch) = (image.height, image.width, image.channels);
    let sy = h as f64 / new_h as f64;
    let sx = w as f64 / new_w as f64;
    let mut data = Vec::with_capacity(new_h * new_w * ch);
    for row in 0..new_h {
        let src_y = ((row as f64 + 0.5) * sy - 0.5).clamp(0.0, h as f64 - 1.0);
        let y0 = src_y.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = src_y - y0 as f64;
        for col in 0..new_w {
            let src_x = ((col as f64 + 0.5) * sx - 0.5).clamp(0.0, w as f64 - 1.0);
            let x0 = src_x.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = src_x - x0 as f64;
            for channel in 0..ch {
                let v00 = image.get(y0, x0, channel);
                let v01 = image.get(y0, x1, channel);
                let v10 = image.get(y1, x0, channel);
                let v11 = image.get(y1, x1, channel);
                let top = v00 + (v01 - v00) * fx;
                let bot = v10 + (v11 - v10) * fx;
                data.push((top + (bot - top) * fy).clamp(0.0, 1.0));
            }
        }
    }
    Image::new(new_h, new_w, ch, data)
}
