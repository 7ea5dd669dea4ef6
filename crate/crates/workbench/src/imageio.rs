//! 8-bit PNG encoding of images and colormapped scalar maps.

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, RgbImage};
use splatedit_core::{Image, ScalarMap};

/// Viridis control points, evenly spaced on [0, 1].
// Colormap stops, not math constants.
#[allow(clippy::approx_constant)]
const VIRIDIS: [[f64; 3]; 9] = [
    [0.267, 0.005, 0.329],
    [0.283, 0.141, 0.458],
    [0.254, 0.265, 0.530],
    [0.207, 0.372, 0.553],
    [0.164, 0.471, 0.558],
    [0.128, 0.567, 0.551],
    [0.135, 0.659, 0.518],
    [0.478, 0.821, 0.318],
    [0.993, 0.906, 0.144],
];

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn to_rgb(img: &Image) -> RgbImage {
    let mut out = RgbImage::new(img.width as u32, img.height as u32);
    for (dst, src) in out.pixels_mut().zip(&img.pixels) {
        dst.0 = [to_u8(src[0]), to_u8(src[1]), to_u8(src[2])];
    }
    out
}

pub fn from_rgb(rgb: &RgbImage) -> Image {
    let pixels = rgb.pixels().map(|p| p.0.map(|c| c as f64 / 255.0)).collect();
    Image { width: rgb.width() as usize, height: rgb.height() as usize, pixels }
}

pub fn colormap(t: f64) -> [f64; 3] {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let pos = t * (VIRIDIS.len() - 1) as f64;
    let lo = (pos.floor() as usize).min(VIRIDIS.len() - 2);
    let f = pos - lo as f64;
    let (a, b) = (VIRIDIS[lo], VIRIDIS[lo + 1]);
    [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1]), a[2] + f * (b[2] - a[2])]
}

/// Max-normalized heatmap: the largest value maps to the top of the colormap.
pub fn heatmap(map: &ScalarMap) -> Image {
    let max = map.max();
    let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
    Image { width: map.width, height: map.height, pixels: map.values.iter().map(|v| colormap(v * scale)).collect() }
}

pub fn encode_png(img: &Image) -> image::ImageResult<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    to_rgb(img).write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn save_png(img: &Image, path: &Path) -> image::ImageResult<()> {
    to_rgb(img).save_with_format(path, ImageFormat::Png)
}

pub fn load_png(path: &Path) -> image::ImageResult<Image> {
    Ok(from_rgb(&image::open(path)?.to_rgb8()))
}
