//! Procedural oyster shell meshes.
//!
//! A shell outline is two clamped cubic B-splines (top and bottom halves)
//! joined at the hinge and the bill. The closed outline is scaled to the
//! requested length × width and stacked into `num_layers` scaled copies along
//! +z, stitched with triangle strips and capped with fans.
//!
//! Units are centimetres throughout this module.

use nalgebra::{Point2, Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SeededRng;
use crate::splinecore::{BSplineCurve2D, SplineError};

/// Minimum triangle area (cm²) accepted in a mesh.
pub const MIN_TRIANGLE_AREA: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("invalid oyster parameters: {0}")]
    Validation(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error(transparent)]
    Spline(#[from] SplineError),
}

/// One layer of the stratified shell model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    /// Outline scale factor in (0, 1].
    pub scale: f64,
    /// Depth offset (cm); offsets must be strictly increasing.
    pub offset_cm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OysterParams {
    pub seed: u64,
    pub length_cm: f64,
    pub width_cm: f64,
    pub height_cm: f64,
    pub num_layers: usize,
    pub layer_profile: Vec<LayerSpec>,
    pub top_controls: Vec<[f64; 2]>,
    pub bottom_controls: Vec<[f64; 2]>,
    pub samples_per_perimeter: usize,
    pub roughness_amp: f64,
}

impl OysterParams {
    pub fn validate(&self) -> Result<(), MeshError> {
        let bad = |m: String| Err(MeshError::Validation(m));
        for (name, v) in [
            ("length_cm", self.length_cm),
            ("width_cm", self.width_cm),
            ("height_cm", self.height_cm),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.roughness_amp.is_finite() && self.roughness_amp >= 0.0) {
            return bad(format!("roughness_amp must be >= 0, got {}", self.roughness_amp));
        }
        if self.num_layers < 2 {
            return bad(format!("num_layers must be >= 2, got {}", self.num_layers));
        }
        if self.layer_profile.len() != self.num_layers {
            return bad(format!(
                "layer_profile has {} entries for {} layers",
                self.layer_profile.len(),
                self.num_layers
            ));
        }
        for (j, l) in self.layer_profile.iter().enumerate() {
            if !(l.scale > 0.0 && l.scale <= 1.0) {
                return bad(format!("layer {j} scale {} not in (0, 1]", l.scale));
            }
            if !l.offset_cm.is_finite() {
                return bad(format!("layer {j} offset is not finite"));
            }
        }
        if let Some(j) = self
            .layer_profile
            .windows(2)
            .position(|w| w[0].offset_cm >= w[1].offset_cm)
        {
            return bad(format!("layer offsets not strictly increasing at layer {}", j + 1));
        }
        if self.samples_per_perimeter < 8 {
            return bad(format!(
                "samples_per_perimeter must be >= 8, got {}",
                self.samples_per_perimeter
            ));
        }
        for (name, c) in [("top", &self.top_controls), ("bottom", &self.bottom_controls)] {
            if c.len() < 4 {
                return bad(format!("{name}_controls needs at least 4 points, got {}", c.len()));
            }
            if c.iter().flatten().any(|v| !v.is_finite()) {
                return bad(format!("{name}_controls contains a non-finite value"));
            }
        }
        if self.top_controls[0] != self.bottom_controls[0]
            || self.top_controls.last() != self.bottom_controls.last()
        {
            return bad("top and bottom halves must share their first and last control points".into());
        }
        Ok(())
    }

    /// Same shell with every dimensional field multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let mut p = self.clone();
        p.length_cm *= s;
        p.width_cm *= s;
        p.height_cm *= s;
        p.roughness_amp *= s;
        for l in &mut p.layer_profile {
            l.offset_cm *= s;
        }
        p
    }
}

/// Default layer schedule: evenly spaced offsets spanning `height_cm`, scale
/// 1.0 at mid-height tapering to `cap_scale` at the two caps.
pub fn tapered_layer_profile(num_layers: usize, height_cm: f64, cap_scale: f64) -> Vec<LayerSpec> {
    let n = num_layers.max(2);
    let u = |j: usize| j as f64 / (n - 1) as f64;
    let peak = (0..n)
        .map(|j| (std::f64::consts::PI * u(j)).sin())
        .fold(0.0, f64::max);
    (0..n)
        .map(|j| {
            let scale = if peak < 1e-12 {
                1.0
            } else {
                cap_scale + (1.0 - cap_scale) * (std::f64::consts::PI * u(j)).sin() / peak
            };
            LayerSpec {
                scale: scale.min(1.0),
                offset_cm: u(j) * height_cm,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3<f64>>,
    pub triangles: Vec<[u32; 3]>,
    pub instance_id: u32,
}

impl TriangleMesh {
    pub fn new(
        vertices: Vec<Point3<f64>>,
        triangles: Vec<[u32; 3]>,
        instance_id: u32,
    ) -> Result<Self, MeshError> {
        let mesh = Self {
            vertices,
            triangles,
            instance_id,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        if self.instance_id == 0 {
            return Err(MeshError::Validation("instance_id 0 is reserved for background".into()));
        }
        let n = self.vertices.len() as u32;
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(MeshError::Geometry(format!("triangle {t} references a missing vertex")));
            }
            let a = self.triangle_area(t);
            if !(a >= MIN_TRIANGLE_AREA) {
                return Err(MeshError::Geometry(format!("triangle {t} is degenerate (area {a:e})")));
            }
        }
        Ok(())
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i as usize]);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// Signed volume by the divergence theorem; positive for outward winding.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|tri| {
                let [a, b, c] = tri.map(|i| self.vertices[i as usize].coords);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    pub fn with_instance_id(mut self, id: u32) -> Result<Self, MeshError> {
        if id == 0 {
            return Err(MeshError::Validation("instance_id 0 is reserved for background".into()));
        }
        self.instance_id = id;
        Ok(self)
    }

    /// ASCII Wavefront OBJ with `v` and `f` records only.
    pub fn to_obj(&self) -> String {
        let mut out = String::with_capacity(self.vertices.len() * 32 + self.triangles.len() * 24);
        out.push_str(&format!("# oyster instance {}\n", self.instance_id));
        for v in &self.vertices {
            out.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
        }
        for t in &self.triangles {
            out.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
        }
        out
    }
}

fn to_points(c: &[[f64; 2]]) -> Vec<Point2<f64>> {
    c.iter().map(|p| Point2::new(p[0], p[1])).collect()
}

fn shoelace(ring: &[Point2<f64>]) -> f64 {
    let n = ring.len();
    (0..n)
        .map(|i| {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        * 0.5
}

/// Closed shell outline.
///
/// The top half is sampled hinge→bill with `samples_per_perimeter` points,
/// then the bottom half bill→hinge with the shared bill point dropped, so the
/// polyline has `2·m − 1` points: `2·m − 2` distinct ones plus the closing
/// repeat of the hinge. The result is centred on its bounding box and scaled
/// to `length_cm` (x) × `width_cm` (y).
pub fn perimeter_2d(params: &OysterParams) -> Result<Vec<Point2<f64>>, MeshError> {
    params.validate()?;
    let m = params.samples_per_perimeter;
    let top = BSplineCurve2D::clamped(to_points(&params.top_controls), 3)?.sample(m)?;
    let bottom = BSplineCurve2D::clamped(to_points(&params.bottom_controls), 3)?.sample(m)?;

    let mut raw = Vec::with_capacity(2 * m - 1);
    raw.extend_from_slice(&top);
    raw.extend(bottom[..m - 1].iter().rev());
    raw[2 * m - 2] = raw[0];

    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in &raw {
        xmin = xmin.min(p.x);
        xmax = xmax.max(p.x);
        ymin = ymin.min(p.y);
        ymax = ymax.max(p.y);
    }
    let (bw, bh) = (xmax - xmin, ymax - ymin);
    let area = shoelace(&raw[..raw.len() - 1]).abs();
    if !(bw > 0.0 && bh > 0.0) || area <= 1e-9 * bw * bh {
        return Err(MeshError::Validation(
            "shell outline encloses zero area (collinear control points)".into(),
        ));
    }
    let (xc, yc) = ((xmin + xmax) * 0.5, (ymin + ymax) * 0.5);
    Ok(raw
        .iter()
        .map(|p| {
            Point2::new(
                (p.x - xc) / bw * params.length_cm,
                (p.y - yc) / bh * params.width_cm,
            )
        })
        .collect())
}

fn segments_intersect(p1: Point2<f64>, p2: Point2<f64>, q1: Point2<f64>, q2: Point2<f64>) -> bool {
    let orient = |a: Point2<f64>, b: Point2<f64>, c: Point2<f64>| {
        let v = (b - a).perp(&(c - a));
        if v > 0.0 {
            1
        } else if v < 0.0 {
            -1
        } else {
            0
        }
    };
    let on_seg = |a: Point2<f64>, b: Point2<f64>, c: Point2<f64>| {
        c.x >= a.x.min(b.x) && c.x <= a.x.max(b.x) && c.y >= a.y.min(b.y) && c.y <= a.y.max(b.y)
    };
    let (d1, d2) = (orient(q1, q2, p1), orient(q1, q2, p2));
    let (d3, d4) = (orient(p1, p2, q1), orient(p1, p2, q2));
    if d1 * d2 < 0 && d3 * d4 < 0 {
        return true;
    }
    (d1 == 0 && on_seg(q1, q2, p1))
        || (d2 == 0 && on_seg(q1, q2, p2))
        || (d3 == 0 && on_seg(p1, p2, q1))
        || (d4 == 0 && on_seg(p1, p2, q2))
}

/// Checks a ring (no closing repeat) for self-intersection, including
/// touching non-adjacent edges and repeated vertices.
fn check_simple(ring: &[Point2<f64>]) -> Result<(), MeshError> {
    let n = ring.len();
    for i in 0..n {
        if ring[i] == ring[(i + 1) % n] {
            return Err(MeshError::Geometry(format!("perimeter repeats vertex {i}")));
        }
    }
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (c, d) = (ring[j], ring[(j + 1) % n]);
            if segments_intersect(a, b, c, d) {
                return Err(MeshError::Geometry(format!(
                    "perimeter self-intersects between edges {i} and {j}"
                )));
            }
        }
    }
    Ok(())
}

fn polygon_centroid(ring: &[Point2<f64>]) -> Point2<f64> {
    let n = ring.len();
    let (mut cx, mut cy, mut a2) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (p, q) = (ring[i], ring[(i + 1) % n]);
        let cr = p.x * q.y - q.x * p.y;
        a2 += cr;
        cx += (p.x + q.x) * cr;
        cy += (p.y + q.y) * cr;
    }
    Point2::new(cx / (3.0 * a2), cy / (3.0 * a2))
}

/// Stacks scaled copies of a closed outline into a capped shell mesh.
///
/// Vertex layout: `num_layers` rings of `n` vertices (ring `j` at indices
/// `j·n .. (j+1)·n`), then the bottom and top fan centres. Triangles wind
/// outward. Layer `j` sits at `z = (d_j − d_0) / (d_last − d_0) · height_cm`,
/// so the offsets set relative layer spacing and the stack is always
/// `height_cm` thick.
pub fn extrude_layers(perimeter: &[Point2<f64>], params: &OysterParams) -> Result<TriangleMesh, MeshError> {
    if params.num_layers < 2 {
        return Err(MeshError::Validation(format!(
            "num_layers must be >= 2, got {}",
            params.num_layers
        )));
    }
    params.validate()?;
    if perimeter.len() < 4 || perimeter.first() != perimeter.last() {
        return Err(MeshError::Geometry("perimeter must be a closed polyline of >= 3 points".into()));
    }
    let mut ring: Vec<Point2<f64>> = perimeter[..perimeter.len() - 1].to_vec();
    check_simple(&ring)?;
    if shoelace(&ring) < 0.0 {
        ring[1..].reverse();
    }
    let n = ring.len();
    let layers = &params.layer_profile;
    let (d0, d1) = (layers[0].offset_cm, layers[layers.len() - 1].offset_cm);
    let centroid = polygon_centroid(&ring);

    let mut jitter = (params.roughness_amp > 0.0)
        .then(|| SeededRng::stream(params.seed, "roughness", 0));
    let mut vertices = Vec::with_capacity(layers.len() * n + 2);
    let mut layer_z = Vec::with_capacity(layers.len());
    for l in layers {
        let z = (l.offset_cm - d0) / (d1 - d0) * params.height_cm;
        layer_z.push(z);
        for p in &ring {
            let mut v = Point3::new(p.x * l.scale, p.y * l.scale, z);
            if let Some(rng) = jitter.as_mut() {
                let a = params.roughness_amp;
                v += Vector3::new(
                    a * (2.0 * rng.unit() - 1.0),
                    a * (2.0 * rng.unit() - 1.0),
                    a * (2.0 * rng.unit() - 1.0),
                );
            }
            vertices.push(v);
        }
    }
    let (s_bot, s_top) = (layers[0].scale, layers[layers.len() - 1].scale);
    vertices.push(Point3::new(centroid.x * s_bot, centroid.y * s_bot, layer_z[0]));
    vertices.push(Point3::new(
        centroid.x * s_top,
        centroid.y * s_top,
        layer_z[layers.len() - 1],
    ));
    let bottom_center = (layers.len() * n) as u32;
    let top_center = bottom_center + 1;

    let idx = |layer: usize, i: usize| (layer * n + i % n) as u32;
    let mut triangles = Vec::with_capacity(2 * n * layers.len());
    for j in 0..layers.len() - 1 {
        for i in 0..n {
            triangles.push([idx(j, i), idx(j, i + 1), idx(j + 1, i + 1)]);
            triangles.push([idx(j, i), idx(j + 1, i + 1), idx(j + 1, i)]);
        }
    }
    let top = layers.len() - 1;
    for i in 0..n {
        triangles.push([bottom_center, idx(0, i + 1), idx(0, i)]);
        triangles.push([top_center, idx(top, i), idx(top, i + 1)]);
    }
    TriangleMesh::new(vertices, triangles, 1)
}

/// Outline + extrusion in one step.
pub fn generate_mesh(params: &OysterParams, instance_id: u32) -> Result<TriangleMesh, MeshError> {
    let perimeter = perimeter_2d(params)?;
    extrude_layers(&perimeter, params)?.with_instance_id(instance_id)
}

/// Closed interval for uniform draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformRange {
    pub min: f64,
    pub max: f64,
}

impl UniformRange {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub const fn fixed(v: f64) -> Self {
        Self { min: v, max: v }
    }

    pub fn check(&self, name: &str, positive: bool) -> Result<(), String> {
        if !(self.min.is_finite() && self.max.is_finite()) {
            return Err(format!("{name}: bounds must be finite"));
        }
        if self.min > self.max {
            return Err(format!("{name}: min {} > max {}", self.min, self.max));
        }
        if positive && self.min <= 0.0 {
            return Err(format!("{name}: min must be positive, got {}", self.min));
        }
        if !positive && self.min < 0.0 {
            return Err(format!("{name}: min must be >= 0, got {}", self.min));
        }
        Ok(())
    }

    pub fn draw(&self, rng: &mut SeededRng) -> f64 {
        rng.uniform(self.min, self.max)
    }
}

/// Unit-length template for the top shell half, hinge at (0, 0), bill at
/// (1, 0). The bottom half is its mirror image.
pub const TOP_TEMPLATE: [[f64; 2]; 6] = [
    [0.0, 0.0],
    [0.05, 0.35],
    [0.35, 0.55],
    [0.75, 0.45],
    [1.0, 0.2],
    [1.0, 0.0],
];

/// Parameter ranges for [`random_oyster`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OysterDistribution {
    pub length_cm: UniformRange,
    pub width_cm: UniformRange,
    pub height_cm: UniformRange,
    pub roughness_amp: UniformRange,
    pub num_layers: usize,
    pub samples_per_perimeter: usize,
    /// Half-width of the uniform jitter applied to interior template control
    /// points, in template units.
    pub control_jitter: f64,
    pub cap_scale: f64,
}

impl Default for OysterDistribution {
    fn default() -> Self {
        Self {
            length_cm: UniformRange::new(5.0, 12.0),
            width_cm: UniformRange::new(3.0, 7.0),
            height_cm: UniformRange::new(1.5, 3.5),
            roughness_amp: UniformRange::fixed(0.0),
            num_layers: 8,
            samples_per_perimeter: 24,
            control_jitter: 0.08,
            cap_scale: 0.35,
        }
    }
}

impl OysterDistribution {
    pub fn validate(&self) -> Result<(), MeshError> {
        let v = |r: Result<(), String>| r.map_err(MeshError::Validation);
        v(self.length_cm.check("length_cm", true))?;
        v(self.width_cm.check("width_cm", true))?;
        v(self.height_cm.check("height_cm", true))?;
        v(self.roughness_amp.check("roughness_amp", false))?;
        if self.num_layers < 2 {
            return Err(MeshError::Validation("num_layers must be >= 2".into()));
        }
        if self.samples_per_perimeter < 8 {
            return Err(MeshError::Validation("samples_per_perimeter must be >= 8".into()));
        }
        if !(self.control_jitter >= 0.0 && self.control_jitter < 0.2) {
            return Err(MeshError::Validation(format!(
                "control_jitter must be in [0, 0.2), got {}",
                self.control_jitter
            )));
        }
        if !(self.cap_scale > 0.0 && self.cap_scale <= 1.0) {
            return Err(MeshError::Validation(format!(
                "cap_scale must be in (0, 1], got {}",
                self.cap_scale
            )));
        }
        Ok(())
    }
}

/// Draws shell parameters from `dist`. A pure function of `(seed, dist)`.
pub fn random_oyster(seed: u64, dist: &OysterDistribution) -> Result<OysterParams, MeshError> {
    dist.validate()?;
    let mut rng = SeededRng::stream(seed, "oyster", 0);
    let length_cm = dist.length_cm.draw(&mut rng);
    let width_cm = dist.width_cm.draw(&mut rng);
    let height_cm = dist.height_cm.draw(&mut rng);
    let roughness_amp = dist.roughness_amp.draw(&mut rng);
    let j = dist.control_jitter;
    let half = |sign: f64, rng: &mut SeededRng| -> Vec<[f64; 2]> {
        TOP_TEMPLATE
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let y = sign * p[1];
                if i == 0 || i == TOP_TEMPLATE.len() - 1 {
                    [p[0], y]
                } else {
                    [p[0] + rng.uniform(-j, j), y + rng.uniform(-j, j)]
                }
            })
            .collect()
    };
    let top_controls = half(1.0, &mut rng);
    let bottom_controls = half(-1.0, &mut rng);
    let params = OysterParams {
        seed,
        length_cm,
        width_cm,
        height_cm,
        num_layers: dist.num_layers,
        layer_profile: tapered_layer_profile(dist.num_layers, height_cm, dist.cap_scale),
        top_controls,
        bottom_controls,
        samples_per_perimeter: dist.samples_per_perimeter,
        roughness_amp,
    };
    params.validate()?;
    Ok(params)
}
