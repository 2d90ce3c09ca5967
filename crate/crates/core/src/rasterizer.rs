//! Software z-buffer renderer for depth maps and instance masks.
//!
//! Each pixel takes the depth and instance id of the nearest triangle that
//! covers its centre `(x + 0.5, y + 0.5)`. Coverage is inclusive on all three
//! edges and the depth test is strict, so when two triangles tie the one drawn
//! first wins. There is no anti-aliasing and no back-face culling. Triangles
//! are clipped exactly against the near plane before projection.
//!
//! Depth is the camera-frame `z` (distance along the optical axis), recovered
//! per pixel by perspective-correct interpolation of `1/z`.
//!
//! Rendering splits the image into row bands processed in parallel. Every
//! pixel is computed from the same ordered triangle list no matter how the
//! bands are scheduled, so the output does not depend on the thread count.

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ImageEncoder, ImageFormat, RgbImage};
use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oystermesh::{MeshError, TriangleMesh};
use crate::rng::splitmix64;
use crate::scenegen::{CameraModel, SceneError, ScenePlacement};

pub const DEFAULT_NEAR_M: f64 = 0.05;
const BAND_ROWS: usize = 16;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("invalid render input: {0}")]
    Validation(String),
    #[error("instance id {0} does not fit a 16-bit mask")]
    Capacity(u32),
    #[error("image encoding failed: {0}")]
    Encode(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

impl From<image::ImageError> for RenderError {
    fn from(e: image::ImageError) -> Self {
        RenderError::Encode(e.to_string())
    }
}

/// Row-major depth in metres; background pixels hold `f64::INFINITY`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f64>,
}

impl DepthMap {
    pub fn background(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![f64::INFINITY; width as usize * height as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.data[(y * self.width + x) as usize]
    }
}

/// Row-major instance ids; 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceMask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u32>,
}

impl InstanceMask {
    pub fn background(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0; width as usize * height as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> u32 {
        self.data[(y * self.width + x) as usize]
    }
}

#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub depth: DepthMap,
    pub mask: InstanceMask,
    pub preview: Option<RgbImage>,
    pub scene_ref: String,
}

impl RenderOutput {
    /// `mask != 0` exactly where depth is finite, and dimensions agree.
    pub fn is_pixel_aligned(&self) -> bool {
        self.depth.width == self.mask.width
            && self.depth.height == self.mask.height
            && self
                .depth
                .data
                .iter()
                .zip(&self.mask.data)
                .all(|(d, &m)| d.is_finite() == (m != 0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DepthPolarity {
    #[default]
    NearBright,
    FarBright,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub near_m: f64,
    pub preview: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            near_m: DEFAULT_NEAR_M,
            preview: true,
        }
    }
}

/// Fixed id → colour palette: three bytes of `splitmix64(id)` lifted into
/// `[48, 255]`. Background (0) is black.
pub fn palette(id: u32) -> [u8; 3] {
    if id == 0 {
        return [0, 0, 0];
    }
    let h = splitmix64(u64::from(id)).to_le_bytes();
    [48 + h[0] % 208, 48 + h[1] % 208, 48 + h[2] % 208]
}

/// Screen-space triangle ready for scan conversion.
struct Prepared {
    xy: [[f64; 2]; 3],
    inv_z: [f64; 3],
    area2: f64,
    rows: (usize, usize),
    cols: (usize, usize),
    id: u32,
    shade: f64,
}

/// Clips a camera-space polygon to `z >= near` (Sutherland–Hodgman, one
/// plane).
fn clip_near(tri: &[Point3<f64>; 3], near: f64) -> Vec<Point3<f64>> {
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let (a, b) = (tri[i], tri[(i + 1) % 3]);
        let (ina, inb) = (a.z >= near, b.z >= near);
        if ina {
            out.push(a);
        }
        if ina != inb {
            let s = (near - a.z) / (b.z - a.z);
            let mut p = a + (b - a) * s;
            p.z = near;
            out.push(p);
        }
    }
    out
}

fn prepare(
    meshes: &[TriangleMesh],
    camera: &CameraModel,
    near: f64,
) -> Vec<Prepared> {
    let (w, h) = (camera.width as f64, camera.height as f64);
    let view = Vector3::new(0.0, 0.0, 1.0);
    let mut out = Vec::new();
    for mesh in meshes {
        let cam_vertices: Vec<Point3<f64>> = mesh.vertices.iter().map(|v| camera.pose.apply(v)).collect();
        for t in &mesh.triangles {
            let tri = t.map(|i| cam_vertices[i as usize]);
            if tri.iter().all(|p| p.z < near) {
                continue;
            }
            let normal = (tri[1] - tri[0]).cross(&(tri[2] - tri[0]));
            let shade = {
                let n = normal.norm();
                if n > 0.0 {
                    (normal.dot(&view) / n).abs()
                } else {
                    0.0
                }
            };
            let poly = if tri.iter().all(|p| p.z >= near) {
                tri.to_vec()
            } else {
                clip_near(&tri, near)
            };
            for k in 1..poly.len().saturating_sub(1) {
                let verts = [poly[0], poly[k], poly[k + 1]];
                let xy = verts.map(|p| [camera.fx * p.x / p.z + camera.cx, camera.fy * p.y / p.z + camera.cy]);
                let area2 = (xy[1][0] - xy[0][0]) * (xy[2][1] - xy[0][1])
                    - (xy[2][0] - xy[0][0]) * (xy[1][1] - xy[0][1]);
                if !(area2.abs() > 1e-12) {
                    continue;
                }
                let min_x = xy.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
                let max_x = xy.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
                let min_y = xy.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
                let max_y = xy.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
                // pixel centres c + 0.5 inside [min, max]
                let c0 = (min_x - 0.5).ceil().max(0.0);
                let c1 = (max_x - 0.5).floor().min(w - 1.0);
                let r0 = (min_y - 0.5).ceil().max(0.0);
                let r1 = (max_y - 0.5).floor().min(h - 1.0);
                if c0 > c1 || r0 > r1 {
                    continue;
                }
                out.push(Prepared {
                    xy,
                    inv_z: verts.map(|p| 1.0 / p.z),
                    area2,
                    rows: (r0 as usize, r1 as usize),
                    cols: (c0 as usize, c1 as usize),
                    id: mesh.instance_id,
                    shade,
                });
            }
        }
    }
    out
}

/// Barycentric weights of `(px, py)`, or `None` when outside.
#[inline]
fn barycentric(t: &Prepared, px: f64, py: f64) -> Option<[f64; 3]> {
    let [a, b, c] = t.xy;
    let e0 = (b[0] - px) * (c[1] - py) - (c[0] - px) * (b[1] - py);
    let e1 = (c[0] - px) * (a[1] - py) - (a[0] - px) * (c[1] - py);
    let e2 = (a[0] - px) * (b[1] - py) - (b[0] - px) * (a[1] - py);
    let (w0, w1, w2) = (e0 / t.area2, e1 / t.area2, e2 / t.area2);
    (w0 >= 0.0 && w1 >= 0.0 && w2 >= 0.0).then_some([w0, w1, w2])
}

/// Renders world-space meshes (metres) through `camera`.
pub fn render_meshes(
    meshes: &[TriangleMesh],
    camera: &CameraModel,
    config: &RenderConfig,
) -> Result<(DepthMap, InstanceMask, Option<RgbImage>), RenderError> {
    camera.validate()?;
    if !(config.near_m > 0.0 && config.near_m.is_finite()) {
        return Err(RenderError::Validation(format!("near plane must be positive, got {}", config.near_m)));
    }
    let (w, h) = (camera.width as usize, camera.height as usize);
    let tris = prepare(meshes, camera, config.near_m);

    let band_count = h.div_ceil(BAND_ROWS);
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); band_count];
    for (i, t) in tris.iter().enumerate() {
        for band in bins.iter_mut().take(t.rows.1 / BAND_ROWS + 1).skip(t.rows.0 / BAND_ROWS) {
            band.push(i as u32);
        }
    }

    let mut depth = DepthMap::background(camera.width, camera.height);
    let mut mask = InstanceMask::background(camera.width, camera.height);
    let mut shade = vec![0f32; w * h];
    depth
        .data
        .par_chunks_mut(BAND_ROWS * w)
        .zip(mask.data.par_chunks_mut(BAND_ROWS * w))
        .zip(shade.par_chunks_mut(BAND_ROWS * w))
        .enumerate()
        .for_each(|(band, ((depth_band, mask_band), shade_band))| {
            let row0 = band * BAND_ROWS;
            let row1 = row0 + depth_band.len() / w - 1;
            for &ti in &bins[band] {
                let t = &tris[ti as usize];
                for y in t.rows.0.max(row0)..=t.rows.1.min(row1) {
                    let py = y as f64 + 0.5;
                    let line = (y - row0) * w;
                    for x in t.cols.0..=t.cols.1 {
                        let Some(bc) = barycentric(t, x as f64 + 0.5, py) else {
                            continue;
                        };
                        let z = 1.0 / (bc[0] * t.inv_z[0] + bc[1] * t.inv_z[1] + bc[2] * t.inv_z[2]);
                        let slot = line + x;
                        if z < depth_band[slot] {
                            depth_band[slot] = z;
                            mask_band[slot] = t.id;
                            shade_band[slot] = t.shade as f32;
                        }
                    }
                }
            }
        });

    let preview = config.preview.then(|| {
        let mut img = RgbImage::from_pixel(camera.width, camera.height, image::Rgb([12, 24, 40]));
        for (i, px) in img.pixels_mut().enumerate() {
            let id = mask.data[i];
            if id != 0 {
                let c = palette(id);
                let s = 0.25 + 0.75 * shade[i];
                px.0 = c.map(|v| (f32::from(v) * s).round() as u8);
            }
        }
        img
    });
    Ok((depth, mask, preview))
}

/// Renders every shell in `scene` through `camera`.
pub fn render(
    scene: &ScenePlacement,
    camera: &CameraModel,
    config: &RenderConfig,
    scene_ref: &str,
) -> Result<RenderOutput, RenderError> {
    scene.validate()?;
    camera.validate()?;
    let meshes = scene
        .instances
        .par_iter()
        .map(|inst| inst.world_mesh())
        .collect::<Result<Vec<_>, _>>()?;
    let (depth, mask, preview) = render_meshes(&meshes, camera, config)?;
    Ok(RenderOutput {
        depth,
        mask,
        preview,
        scene_ref: scene_ref.to_string(),
    })
}

fn encode_png_gray16(width: u32, height: u32, values: &[u16]) -> Result<Vec<u8>, RenderError> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_ne_bytes()).collect();
    let mut out = Vec::new();
    PngEncoder::new_with_quality(&mut out, CompressionType::Fast, FilterType::Sub).write_image(
        &bytes,
        width,
        height,
        image::ExtendedColorType::L16,
    )?;
    Ok(out)
}

/// Encodes an 8-bit RGB image as PNG.
pub fn encode_png_rgb(img: &RgbImage) -> Result<Vec<u8>, RenderError> {
    let mut out = Vec::new();
    PngEncoder::new_with_quality(&mut out, CompressionType::Fast, FilterType::Sub).write_image(
        img.as_raw(),
        img.width(),
        img.height(),
        image::ExtendedColorType::Rgb8,
    )?;
    Ok(out)
}

/// Decodes a 16-bit grayscale PNG into `(width, height, values)`.
pub fn decode_png_gray16(bytes: &[u8]) -> Result<(u32, u32, Vec<u16>), RenderError> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
    let img = match img {
        image::DynamicImage::ImageLuma16(buf) => buf,
        other => {
            return Err(RenderError::Validation(format!(
                "expected a 16-bit grayscale PNG, got {:?}",
                other.color()
            )))
        }
    };
    Ok((img.width(), img.height(), img.into_raw()))
}

/// Depth value stored for a finite depth `d`.
pub fn depth_code(d: f64, max_depth_m: f64, polarity: DepthPolarity) -> u16 {
    if !d.is_finite() {
        return 0;
    }
    let r = (d / max_depth_m).clamp(0.0, 1.0);
    let v = match polarity {
        DepthPolarity::NearBright => 1.0 - r,
        DepthPolarity::FarBright => r,
    };
    (65535.0 * v).round() as u16
}

/// 16-bit grayscale PNG; finite depths map linearly onto `[0, 65535]`
/// (near = bright by default), background is 0.
pub fn encode_depth_png(depth: &DepthMap, max_depth_m: f64, polarity: DepthPolarity) -> Result<Vec<u8>, RenderError> {
    if !(max_depth_m > 0.0 && max_depth_m.is_finite()) {
        return Err(RenderError::Validation(format!("max_depth_m must be positive, got {max_depth_m}")));
    }
    let codes: Vec<u16> = depth.data.iter().map(|&d| depth_code(d, max_depth_m, polarity)).collect();
    encode_png_gray16(depth.width, depth.height, &codes)
}

/// Returns the lossless 16-bit id PNG and an RGB visualization using
/// [`palette`].
pub fn encode_mask_png(mask: &InstanceMask) -> Result<(Vec<u8>, Vec<u8>), RenderError> {
    let mut ids = Vec::with_capacity(mask.data.len());
    for &id in &mask.data {
        ids.push(u16::try_from(id).map_err(|_| RenderError::Capacity(id))?);
    }
    let raw = encode_png_gray16(mask.width, mask.height, &ids)?;
    let mut rgb = RgbImage::new(mask.width, mask.height);
    for (px, &id) in rgb.pixels_mut().zip(&mask.data) {
        px.0 = palette(id);
    }
    Ok((raw, encode_png_rgb(&rgb)?))
}

pub fn decode_mask_png(bytes: &[u8]) -> Result<InstanceMask, RenderError> {
    let (width, height, v) = decode_png_gray16(bytes)?;
    Ok(InstanceMask {
        width,
        height,
        data: v.into_iter().map(u32::from).collect(),
    })
}

pub fn depth_file_name(scene_id: &str) -> String {
    format!("{scene_id}_depth.png")
}

pub fn mask_file_name(scene_id: &str) -> String {
    format!("{scene_id}_mask.png")
}

pub fn preview_file_name(scene_id: &str) -> String {
    format!("{scene_id}_preview.png")
}
