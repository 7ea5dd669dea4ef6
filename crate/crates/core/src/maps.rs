//! Row-major pixel grids: RGB images and scalar (attention) maps.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f64; 3]>,
}

impl ScalarMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::invalid(format!(
                "map of {width}x{height} needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        Ok(ScalarMap { width, height, values })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        ScalarMap { width, height, values: vec![value; width * height] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn same_shape(&self, other: &ScalarMap) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.sum() / self.values.len() as f64
        }
    }

    /// Checks the attention-map invariant: finite and nonnegative.
    pub fn check_attention(&self) -> Result<()> {
        match self.values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            Some(i) => Err(Error::invalid(format!("attention value at cell {i} is {}", self.values[i]))),
            None => Ok(()),
        }
    }

    /// Bilinear resampling with pixel-center alignment and edge clamping.
    pub fn resample(&self, width: usize, height: usize) -> ScalarMap {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            let (y0, y1, fy) = source_coord(y, height, self.height);
            for x in 0..width {
                let (x0, x1, fx) = source_coord(x, width, self.width);
                let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
                let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
                values.push(top * (1.0 - fy) + bottom * fy);
            }
        }
        ScalarMap { width, height, values }
    }
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<[f64; 3]>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::invalid(format!(
                "image of {width}x{height} needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Image { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        Image { width, height, pixels: vec![rgb; width * height] }
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn resample(&self, width: usize, height: usize) -> Image {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let mut pixels = Vec::with_capacity(width * height);
        let at = |x: usize, y: usize| self.pixels[y * self.width + x];
        for y in 0..height {
            let (y0, y1, fy) = source_coord(y, height, self.height);
            for x in 0..width {
                let (x0, x1, fx) = source_coord(x, width, self.width);
                let mut px = [0.0; 3];
                for (c, out) in px.iter_mut().enumerate() {
                    let top = at(x0, y0)[c] * (1.0 - fx) + at(x1, y0)[c] * fx;
                    let bottom = at(x0, y1)[c] * (1.0 - fx) + at(x1, y1)[c] * fx;
                    *out = top * (1.0 - fy) + bottom * fy;
                }
                pixels.push(px);
            }
        }
        Image { width, height, pixels }
    }
}

// Maps destination index `i` of `dst` cells onto the two neighboring source
// cells and the interpolation fraction.
fn source_coord(i: usize, dst: usize, src: usize) -> (usize, usize, f64) {
    let pos = ((i as f64 + 0.5) * src as f64 / dst as f64 - 0.5).clamp(0.0, (src - 1) as f64);
    let lo = math::floor(pos) as usize;
    let hi = (lo + 1).min(src - 1);
    (lo, hi, pos - lo as f64)
}
