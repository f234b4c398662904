//! Per-pixel feature vectors `[I, |dI/du|, |dI/dv|, |d2I/du2|, |d2I/dv2|]`
//! sampled on a regular grid.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spd::ObservationSet;

/// Smallest width and height accepted.
pub const MIN_SIDE: usize = 5;
/// First grid coordinate along each axis.
pub const GRID_ORIGIN: usize = 2;

/// Gray-scale image with intensities in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width < MIN_SIDE || height < MIN_SIDE {
            return Err(Error::InvalidInput(format!(
                "image is {width}x{height}; both sides must be at least {MIN_SIDE}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("image pixels"));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidInput("pixel intensities must lie in [0, 1]".into()));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let pixels = (0..height)
            .flat_map(|v| (0..width).map(move |u| (u, v)))
            .map(|(u, v)| f(u, v))
            .collect();
        Self::new(width, height, pixels)
    }

    /// Reads a PNG or PNM file, converting to luminance in `[0, 1]`.
    pub fn open(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::parse(path.display().to_string(), e))?;
        let luma = img.to_luma32f();
        let (w, h) = luma.dimensions();
        let pixels = luma.pixels().map(|p| f64::from(p.0[0]).clamp(0.0, 1.0)).collect();
        Self::new(w as usize, h as usize, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Intensity at column `u`, row `v`.
    pub fn at(&self, u: usize, v: usize) -> f64 {
        self.pixels[v * self.width + u]
    }
}

/// Grid coordinates `GRID_ORIGIN, GRID_ORIGIN + stride, ...` up to `side - 2`.
fn grid_axis(side: usize, stride: usize) -> Vec<usize> {
    (GRID_ORIGIN..=side - 2).step_by(stride).collect()
}

/// One feature column per grid point, rows scanned top to bottom and left to
/// right. Derivatives are central differences along `u` (columns) and `v`
/// (rows).
pub fn kylberg_features(img: &GrayImage, stride: usize) -> Result<ObservationSet> {
    if stride < 1 {
        return Err(Error::InvalidInput("grid stride must be at least 1".into()));
    }
    let us = grid_axis(img.width, stride);
    let vs = grid_axis(img.height, stride);
    let mut data = DMatrix::zeros(5, us.len() * vs.len());
    let mut col = 0;
    for &v in &vs {
        for &u in &us {
            let c = img.at(u, v);
            let (l, r) = (img.at(u - 1, v), img.at(u + 1, v));
            let (t, b) = (img.at(u, v - 1), img.at(u, v + 1));
            data[(0, col)] = c;
            data[(1, col)] = (0.5 * (r - l)).abs();
            data[(2, col)] = (0.5 * (b - t)).abs();
            data[(3, col)] = (r - 2.0 * c + l).abs();
            data[(4, col)] = (b - 2.0 * c + t).abs();
            col += 1;
        }
    }
    ObservationSet::new(data)
}
