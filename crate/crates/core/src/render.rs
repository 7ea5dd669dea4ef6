//! Tile-binned, depth-sorted alpha compositing of Gaussian splats.
//!
//! Rasterization produces a [`ContributionBuffer`]: for every pixel, the
//! front-to-back list of `(gaussian, O, T)` where `O = min(α·G(p), 0.999)` and
//! `T = Π_{j<i}(1 − O_j)`. Colors, scalar fields and gradients are all
//! computed from that buffer, so every consumer sees the same compositing.
//!
//! Contributions with `O·T ≤ 1e-6` are dropped from both the buffer and the
//! transmittance chain, which keeps `Σ O·T + T_end = 1` exact up to rounding.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::camera::Camera;
use crate::linalg::{self, Vec3};
use crate::maps::{Image, ScalarMap};
use crate::scene::{Gaussian, Scene};
use crate::{math, par};
use crate::{Error, Result};

pub const NEAR_PLANE: f64 = 0.01;
/// Added to the projected covariance diagonal, in px².
pub const COV2D_REGULARIZER: f64 = 0.3;
pub const MAX_OPACITY: f64 = 0.999;
pub const CONTRIBUTION_THRESHOLD: f64 = 1e-6;
/// Squared Mahalanobis radius of the evaluated footprint (3σ).
pub const CUTOFF_SQ: f64 = 9.0;
pub const TILE_SIZE: usize = 8;

/// A Gaussian projected to screen space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Splat2D {
    pub gaussian_id: u32,
    /// Pixel coordinates.
    pub mean: [f64; 2],
    /// Symmetric covariance `[xx, xy, yy]` in px², regularized.
    pub cov: [f64; 3],
    /// Inverse covariance `[xx, xy, yy]`.
    pub conic: [f64; 3],
    /// Camera-space z of the center.
    pub depth: f64,
    /// Axis-aligned bounds of the 3σ ellipse: `[x_min, y_min, x_max, y_max]`.
    pub bounds: [f64; 4],
}

impl Splat2D {
    /// Squared Mahalanobis distance of the pixel center `(px, py)`.
    #[inline]
    pub fn mahalanobis_sq(&self, px: f64, py: f64) -> f64 {
        let dx = px - self.mean[0];
        let dy = py - self.mean[1];
        self.conic[0] * dx * dx + 2.0 * self.conic[1] * dx * dy + self.conic[2] * dy * dy
    }

    pub fn covers(&self, px: f64, py: f64) -> bool {
        self.mahalanobis_sq(px, py) <= CUTOFF_SQ
    }
}

/// Local-affine projection of a Gaussian. `None` when culled (behind the near
/// plane or footprint entirely off screen).
pub fn project_gaussian(id: u32, g: &Gaussian, cam: &Camera) -> Option<Splat2D> {
    let p = cam.to_camera(&g.mean);
    let z = p[2];
    if z <= NEAR_PLANE {
        return None;
    }
    let cov3 = g.covariance().ok()?;
    let w = &cam.rotation;
    let cov_cam = linalg::mul(&linalg::mul(w, &cov3), &linalg::transpose(w));

    // Rows of the projection Jacobian at the center.
    let j0: Vec3 = [cam.fx / z, 0.0, -cam.fx * p[0] / (z * z)];
    let j1: Vec3 = [0.0, cam.fy / z, -cam.fy * p[1] / (z * z)];
    let cj0 = linalg::mul_vec(&cov_cam, &j0);
    let cj1 = linalg::mul_vec(&cov_cam, &j1);
    let xx = dot(&j0, &cj0) + COV2D_REGULARIZER;
    let xy = dot(&j0, &cj1);
    let yy = dot(&j1, &cj1) + COV2D_REGULARIZER;
    let det = xx * yy - xy * xy;
    if !(det > 0.0) {
        return None;
    }
    let mean = [cam.fx * p[0] / z + cam.cx, cam.fy * p[1] / z + cam.cy];
    let rx = 3.0 * math::sqrt(xx);
    let ry = 3.0 * math::sqrt(yy);
    let bounds = [mean[0] - rx, mean[1] - ry, mean[0] + rx, mean[1] + ry];
    if bounds[2] < 0.0 || bounds[3] < 0.0 || bounds[0] > cam.width as f64 || bounds[1] > cam.height as f64 {
        return None;
    }
    Some(Splat2D {
        gaussian_id: id,
        mean,
        cov: [xx, xy, yy],
        conic: [yy / det, -xy / det, xx / det],
        depth: z,
        bounds,
    })
}

fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contribution {
    pub gaussian: u32,
    /// `O_i(p)`.
    pub opacity: f64,
    /// `T_i(p)`, transmittance in front of this Gaussian.
    pub transmittance: f64,
}

impl Contribution {
    #[inline]
    pub fn weight(&self) -> f64 {
        self.opacity * self.transmittance
    }
}

/// Per-pixel ordered contribution lists, stored CSR-style.
#[derive(Debug, Clone, PartialEq)]
pub struct ContributionBuffer {
    width: usize,
    height: usize,
    revision: u64,
    gaussian_count: usize,
    offsets: Vec<usize>,
    entries: Vec<Contribution>,
    t_end: Vec<f64>,
}

impl ContributionBuffer {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Revision of the scene snapshot this buffer was rasterized from.
    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn gaussian_count(&self) -> usize {
        self.gaussian_count
    }

    pub fn pixel(&self, index: usize) -> &[Contribution] {
        &self.entries[self.offsets[index]..self.offsets[index + 1]]
    }

    pub fn pixel_at(&self, x: usize, y: usize) -> &[Contribution] {
        self.pixel(y * self.width + x)
    }

    pub fn t_end(&self, index: usize) -> f64 {
        self.t_end[index]
    }

    pub fn total_entries(&self) -> usize {
        self.entries.len()
    }

    pub fn check_fresh(&self, scene: &Scene) -> Result<()> {
        if self.revision != scene.revision() || self.gaussian_count != scene.len() {
            return Err(Error::Stale { buffer: self.revision, scene: scene.revision() });
        }
        Ok(())
    }

    /// `Σ_p O_i(p)·T_i(p)` for every Gaussian.
    pub fn mass_per_gaussian(&self) -> Vec<f64> {
        self.weighted_mass_per_gaussian(None)
    }

    /// `Σ_p M(p)·O_i(p)·T_i(p)` for every Gaussian (`M ≡ 1` when `None`).
    pub fn weighted_mass_per_gaussian(&self, pixel_weights: Option<&[f64]>) -> Vec<f64> {
        let mut out = vec![0.0; self.gaussian_count];
        for p in 0..self.pixel_count() {
            let m = pixel_weights.map_or(1.0, |w| w[p]);
            if m == 0.0 {
                continue;
            }
            for c in self.pixel(p) {
                out[c.gaussian as usize] += m * c.weight();
            }
        }
        out
    }
}

/// Rasterizes a scene into per-pixel contribution lists.
pub fn rasterize(scene: &Scene, cam: &Camera) -> Result<ContributionBuffer> {
    if scene.is_empty() {
        return Err(Error::invalid("cannot render an empty scene"));
    }
    cam.validate()?;
    let gaussians = scene.gaussians();
    let mut splats: Vec<Splat2D> = gaussians
        .iter()
        .enumerate()
        .filter_map(|(i, g)| project_gaussian(i as u32, g, cam))
        .collect();
    splats.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.gaussian_id.cmp(&b.gaussian_id)));

    let tiles_x = cam.width.div_ceil(TILE_SIZE);
    let tiles_y = cam.height.div_ceil(TILE_SIZE);
    let mut bins: Vec<Vec<TileSplat>> = vec![Vec::new(); tiles_x * tiles_y];
    for s in &splats {
        let tx0 = tile_index(s.bounds[0], tiles_x);
        let tx1 = tile_index(s.bounds[2], tiles_x);
        let ty0 = tile_index(s.bounds[1], tiles_y);
        let ty1 = tile_index(s.bounds[3], tiles_y);
        let compact = TileSplat {
            gaussian_id: s.gaussian_id,
            opacity: gaussians[s.gaussian_id as usize].opacity,
            mean: s.mean,
            conic: s.conic,
        };
        for ty in ty0..=ty1 {
            for tx in tx0..=tx1 {
                bins[ty * tiles_x + tx].push(compact);
            }
        }
    }

    let rows = par::map_range(tiles_y, |ty| rasterize_tile_row(ty, tiles_x, &bins, cam.width, cam.height));

    let n_pix = cam.pixel_count();
    let mut offsets = Vec::with_capacity(n_pix + 1);
    let mut entries = Vec::with_capacity(rows.iter().map(|r| r.entries.len()).sum());
    let mut t_end = Vec::with_capacity(n_pix);
    offsets.push(0);
    for row in rows {
        let base = entries.len();
        offsets.extend(row.ends.iter().map(|e| base + e));
        entries.extend_from_slice(&row.entries);
        t_end.extend_from_slice(&row.t_end);
    }
    Ok(ContributionBuffer {
        width: cam.width,
        height: cam.height,
        revision: scene.revision(),
        gaussian_count: scene.len(),
        offsets,
        entries,
        t_end,
    })
}

fn tile_index(coord: f64, tiles: usize) -> usize {
    let t = math::floor(coord / TILE_SIZE as f64);
    if t < 0.0 {
        0
    } else {
        (t as usize).min(tiles - 1)
    }
}

/// Per-tile copy of what the pixel loop reads, kept contiguous.
#[derive(Clone, Copy)]
struct TileSplat {
    gaussian_id: u32,
    opacity: f64,
    mean: [f64; 2],
    conic: [f64; 3],
}

struct RowChunk {
    ends: Vec<usize>,
    entries: Vec<Contribution>,
    t_end: Vec<f64>,
}

fn rasterize_tile_row(
    ty: usize,
    tiles_x: usize,
    bins: &[Vec<TileSplat>],
    width: usize,
    height: usize,
) -> RowChunk {
    let y_start = ty * TILE_SIZE;
    let y_stop = (y_start + TILE_SIZE).min(height);
    let n = (y_stop - y_start) * width;
    let mut chunk = RowChunk { ends: Vec::with_capacity(n), entries: Vec::new(), t_end: Vec::with_capacity(n) };
    for y in y_start..y_stop {
        let py = y as f64 + 0.5;
        for x in 0..width {
            let px = x as f64 + 0.5;
            let mut t = 1.0f64;
            for s in &bins[ty * tiles_x + x / TILE_SIZE] {
                let dx = px - s.mean[0];
                let dy = py - s.mean[1];
                let d2 = s.conic[0] * dx * dx + 2.0 * s.conic[1] * dx * dy + s.conic[2] * dy * dy;
                if d2 > CUTOFF_SQ {
                    continue;
                }
                let o = (s.opacity * math::exp(-0.5 * d2)).min(MAX_OPACITY);
                if o * t <= CONTRIBUTION_THRESHOLD {
                    continue;
                }
                chunk.entries.push(Contribution { gaussian: s.gaussian_id, opacity: o, transmittance: t });
                t *= 1.0 - o;
                // Every later contribution would fall below the threshold.
                if t * MAX_OPACITY <= CONTRIBUTION_THRESHOLD {
                    break;
                }
            }
            chunk.ends.push(chunk.entries.len());
            chunk.t_end.push(t);
        }
    }
    chunk
}

/// Composites Gaussian colors plus `background·T_end`.
pub fn composite_color(scene: &Scene, buf: &ContributionBuffer) -> Result<Image> {
    buf.check_fresh(scene)?;
    let g = scene.gaussians();
    let bg = scene.background();
    let pixels = (0..buf.pixel_count())
        .map(|p| {
            let te = buf.t_end(p);
            let mut c = [bg[0] * te, bg[1] * te, bg[2] * te];
            for e in buf.pixel(p) {
                let w = e.weight();
                let col = &g[e.gaussian as usize].color;
                c[0] += col[0] * w;
                c[1] += col[1] * w;
                c[2] += col[2] * w;
            }
            c
        })
        .collect();
    Ok(Image { width: buf.width(), height: buf.height(), pixels })
}

/// Composites an arbitrary per-Gaussian scalar with zero background.
pub fn composite_scalar(buf: &ContributionBuffer, field: &[f64]) -> Result<ScalarMap> {
    if field.len() != buf.gaussian_count() {
        return Err(Error::invalid(format!(
            "field has {} values for {} gaussians",
            field.len(),
            buf.gaussian_count()
        )));
    }
    let values = (0..buf.pixel_count())
        .map(|p| buf.pixel(p).iter().map(|e| field[e.gaussian as usize] * e.weight()).sum())
        .collect();
    Ok(ScalarMap { width: buf.width(), height: buf.height(), values })
}

/// Which per-Gaussian quantity [`render`] composites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Color,
    AttnScore,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Rendered {
    Color(Image),
    Scalar(ScalarMap),
}

pub fn render(scene: &Scene, cam: &Camera, field: Field) -> Result<(Rendered, ContributionBuffer)> {
    let buf = rasterize(scene, cam)?;
    let out = match field {
        Field::Color => Rendered::Color(composite_color(scene, &buf)?),
        Field::AttnScore => {
            let scores: Vec<f64> = scene.gaussians().iter().map(|g| g.attn_score).collect();
            Rendered::Scalar(composite_scalar(&buf, &scores)?)
        }
    };
    Ok((out, buf))
}

pub fn render_color(scene: &Scene, cam: &Camera) -> Result<(Image, ContributionBuffer)> {
    let buf = rasterize(scene, cam)?;
    Ok((composite_color(scene, &buf)?, buf))
}

/// Per-Gaussian loss gradients with respect to color and opacity.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub color: Vec<[f64; 3]>,
    pub opacity: Vec<f64>,
}

impl Gradients {
    pub fn zeros(n: usize) -> Self {
        Gradients { color: vec![[0.0; 3]; n], opacity: vec![0.0; n] }
    }

    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.color.iter_mut().zip(&other.color) {
            a[0] += b[0];
            a[1] += b[1];
            a[2] += b[2];
        }
        for (a, b) in self.opacity.iter_mut().zip(&other.opacity) {
            *a += b;
        }
    }
}

const BACKWARD_ROWS_PER_CHUNK: usize = 16;

/// Back-propagates a per-pixel color residual `∂L/∂C(p)` to colors and
/// opacities of the Gaussians recorded in `buf`.
pub fn backward(scene: &Scene, buf: &ContributionBuffer, residual: &[[f64; 3]]) -> Result<Gradients> {
    buf.check_fresh(scene)?;
    if residual.len() != buf.pixel_count() {
        return Err(Error::invalid(format!(
            "residual has {} pixels, buffer has {}",
            residual.len(),
            buf.pixel_count()
        )));
    }
    let gaussians = scene.gaussians();
    let bg = scene.background();
    let width = buf.width();
    let chunks = buf.height().div_ceil(BACKWARD_ROWS_PER_CHUNK);
    let partials = par::map_range(chunks, |chunk| {
        let mut grads = Gradients::zeros(gaussians.len());
        let y0 = chunk * BACKWARD_ROWS_PER_CHUNK;
        let y1 = (y0 + BACKWARD_ROWS_PER_CHUNK).min(buf.height());
        for p in (y0 * width)..(y1 * width) {
            backward_pixel(gaussians, bg, buf.pixel(p), buf.t_end(p), &residual[p], &mut grads);
        }
        grads
    });
    let mut total = Gradients::zeros(gaussians.len());
    for part in &partials {
        total.accumulate(part);
    }
    Ok(total)
}

fn backward_pixel(
    gaussians: &[Gaussian],
    bg: Vec3,
    list: &[Contribution],
    t_end: f64,
    r: &[f64; 3],
    grads: &mut Gradients,
) {
    if r == &[0.0; 3] || list.is_empty() {
        return;
    }
    let mut total = [bg[0] * t_end, bg[1] * t_end, bg[2] * t_end];
    for e in list {
        let c = &gaussians[e.gaussian as usize].color;
        let w = e.weight();
        for k in 0..3 {
            total[k] += c[k] * w;
        }
    }
    // Walk front to back; `rest` is everything composited behind the current
    // entry, i.e. C − Σ_{j≤i} c_j O_j T_j.
    let mut rest = total;
    for e in list {
        let id = e.gaussian as usize;
        let g = &gaussians[id];
        let w = e.weight();
        for k in 0..3 {
            rest[k] -= g.color[k] * w;
            grads.color[id][k] += r[k] * w;
        }
        // O = α·G unless clamped, in which case it no longer depends on α.
        if e.opacity < MAX_OPACITY {
            let falloff = e.opacity / g.opacity;
            let inv = 1.0 / (1.0 - e.opacity);
            let mut d_o = 0.0;
            for k in 0..3 {
                d_o += r[k] * (g.color[k] * e.transmittance - rest[k] * inv);
            }
            grads.opacity[id] += d_o * falloff;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axis_camera(size: usize, focal: f64) -> Camera {
        Camera::new(
            "c",
            size,
            size,
            focal,
            focal,
            size as f64 / 2.0,
            size as f64 / 2.0,
            linalg::IDENTITY,
            [0.0; 3],
        )
        .unwrap()
    }

    #[test]
    fn on_axis_projects_to_principal_point() {
        let cam = axis_camera(64, 100.0);
        let g = Gaussian::isotropic([0.0, 0.0, 4.0], 1.0, 0.5, [1.0; 3]);
        let s = project_gaussian(0, &g, &cam).unwrap();
        assert_eq!(s.mean, [32.0, 32.0]);
        // Oracle: J = diag(f/z, f/z) on axis, so cov2d = (f/z)^2 I + reg.
        let expect = (100.0f64 / 4.0).powi(2) + COV2D_REGULARIZER;
        assert!((s.cov[0] - expect).abs() < 1e-9);
        assert!((s.cov[2] - expect).abs() < 1e-9);
        assert!(s.cov[1].abs() < 1e-12);
        assert_eq!(s.depth, 4.0);
    }

    #[test]
    fn behind_camera_is_culled() {
        let cam = axis_camera(32, 50.0);
        let g = Gaussian::isotropic([0.0, 0.0, -1.0], 0.1, 0.5, [1.0; 3]);
        assert!(project_gaussian(0, &g, &cam).is_none());
        let near = Gaussian::isotropic([0.0, 0.0, 0.005], 0.1, 0.5, [1.0; 3]);
        assert!(project_gaussian(0, &near, &cam).is_none());
        let off = Gaussian::isotropic([100.0, 0.0, 1.0], 0.01, 0.5, [1.0; 3]);
        assert!(project_gaussian(0, &off, &cam).is_none());
    }

    #[test]
    fn opaque_red_center_pixel() {
        let cam = axis_camera(32, 50.0);
        // Center of pixel (16,16) is at 16.5; shift the mean to sit on it.
        let z = 4.0;
        let mean = [0.5 * z / 50.0, 0.5 * z / 50.0, z];
        let g = Gaussian::isotropic(mean, 0.2, 1.0, [1.0, 0.0, 0.0]);
        let scene = Scene::new(vec![g], [0.0; 3]).unwrap();
        let (img, buf) = render_color(&scene, &cam).unwrap();
        let px = img.pixels[16 * 32 + 16];
        assert!(px[0] >= 0.99, "{px:?}");
        assert!((px[0] - MAX_OPACITY).abs() < 1e-12);
        assert_eq!(px[1], 0.0);
        assert!((buf.t_end(16 * 32 + 16) - (1.0 - MAX_OPACITY)).abs() < 1e-12);
    }

    #[test]
    fn uncovered_pixel_shows_background() {
        let cam = axis_camera(32, 50.0);
        let g = Gaussian::isotropic([0.0, 0.0, 4.0], 0.05, 0.8, [1.0, 0.0, 0.0]);
        let scene = Scene::new(vec![g], [0.2, 0.3, 0.4]).unwrap();
        let (img, buf) = render_color(&scene, &cam).unwrap();
        assert!(buf.pixel_at(0, 0).is_empty());
        assert_eq!(buf.t_end(0), 1.0);
        assert_eq!(img.pixels[0], [0.2, 0.3, 0.4]);
    }

    #[test]
    fn empty_scene_and_stale_buffer() {
        let cam = axis_camera(32, 50.0);
        let g = Gaussian::isotropic([0.0, 0.0, 4.0], 0.3, 0.8, [1.0, 0.0, 0.0]);
        let mut scene = Scene::new(vec![g], [0.0; 3]).unwrap();
        let buf = rasterize(&scene, &cam).unwrap();
        scene.edit(|gs| gs[0].color = [0.5; 3]).unwrap();
        let residual = vec![[1.0; 3]; 32 * 32];
        assert!(matches!(backward(&scene, &buf, &residual), Err(Error::Stale { .. })));
    }

    #[test]
    fn zero_residual_zero_gradient() {
        let cam = axis_camera(32, 50.0);
        let g = Gaussian::isotropic([0.0, 0.0, 4.0], 0.3, 0.8, [1.0, 0.0, 0.0]);
        let scene = Scene::new(vec![g.clone(), g], [0.1; 3]).unwrap();
        let buf = rasterize(&scene, &cam).unwrap();
        let grads = backward(&scene, &buf, &vec![[0.0; 3]; 32 * 32]).unwrap();
        assert!(grads.opacity.iter().all(|g| *g == 0.0));
        assert!(grads.color.iter().flatten().all(|g| *g == 0.0));
    }

    #[test]
    fn scalar_mode_constant_field() {
        let cam = axis_camera(32, 50.0);
        let gs = (0..5)
            .map(|i| Gaussian::isotropic([0.05 * i as f64, 0.0, 3.0 + i as f64 * 0.1], 0.2, 0.6, [0.5; 3]))
            .collect();
        let scene = Scene::new(gs, [0.0; 3]).unwrap();
        let scene = scene.with_attn_scores(&[0.7; 5]).unwrap();
        let (out, buf) = render(&scene, &cam, Field::AttnScore).unwrap();
        let Rendered::Scalar(map) = out else { panic!() };
        for p in 0..buf.pixel_count() {
            let expect = 0.7 * (1.0 - buf.t_end(p));
            assert!((map.values[p] - expect).abs() < 1e-5);
            assert!(map.values[p] <= 0.7 + 1e-12);
        }
    }
}
