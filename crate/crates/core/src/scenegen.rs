//! Reef scene assembly and camera sampling.
//!
//! World frame: metres, ground plane `z = 0`, `+z` up. Camera frame follows
//! the usual pinhole convention: `+x` right, `+y` down, `+z` along the optical
//! axis. Shell meshes are generated in centimetres and converted to metres
//! here.

use nalgebra::{Matrix3, Point3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oystermesh::{self, MeshError, OysterDistribution, OysterParams, TriangleMesh, UniformRange};
use crate::rng::{derive_seed, SeededRng};

pub const CM_TO_M: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("invalid scene configuration: {0}")]
    Validation(String),
    #[error("placed {placed} of {requested} oysters before exhausting {attempts} attempts: {constraint}")]
    Capacity {
        placed: usize,
        requested: usize,
        attempts: usize,
        constraint: String,
    },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Rotation + translation, `p' = R·p + t`. Serialized as a row-major 4×4
/// homogeneous matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 16]", into = "[f64; 16]")]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Fails unless `rotation` is orthonormal with determinant +1 (1e-9).
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, SceneError> {
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(SceneError::Validation("transform has non-finite entries".into()));
        }
        let err = (rotation * rotation.transpose() - Matrix3::identity()).abs().max();
        if err > 1e-9 {
            return Err(SceneError::Validation(format!(
                "rotation is not orthonormal (max |R·Rᵀ − I| = {err:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > 1e-9 {
            return Err(SceneError::Validation(format!("rotation determinant {det} is not +1")));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    #[rustfmt::skip]
    pub fn to_row_major(&self) -> [f64; 16] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
            0.0, 0.0, 0.0, 1.0,
        ]
    }

    pub fn from_row_major(m: &[f64; 16]) -> Result<Self, SceneError> {
        if m[12] != 0.0 || m[13] != 0.0 || m[14] != 0.0 || m[15] != 1.0 {
            return Err(SceneError::Validation("bottom row of a rigid transform must be 0 0 0 1".into()));
        }
        let rotation = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        Self::new(rotation, Vector3::new(m[3], m[7], m[11]))
    }
}

impl TryFrom<[f64; 16]> for RigidTransform {
    type Error = SceneError;
    fn try_from(m: [f64; 16]) -> Result<Self, Self::Error> {
        Self::from_row_major(&m)
    }
}

impl From<RigidTransform> for [f64; 16] {
    fn from(t: RigidTransform) -> Self {
        t.to_row_major()
    }
}

/// Axis-aligned rectangle on the ground plane, metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn centered(width: f64, height: f64) -> Self {
        Self {
            x_min: -width / 2.0,
            y_min: -height / 2.0,
            x_max: width / 2.0,
            y_max: height / 2.0,
        }
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedOyster {
    pub instance_id: u32,
    pub params: OysterParams,
    /// Local shell frame (metres) to world.
    pub pose: RigidTransform,
}

impl PlacedOyster {
    /// Shell mesh in world coordinates (metres).
    pub fn world_mesh(&self) -> Result<TriangleMesh, MeshError> {
        let mut mesh = oystermesh::generate_mesh(&self.params, self.instance_id)?;
        for v in &mut mesh.vertices {
            *v = self.pose.apply(&(*v * CM_TO_M));
        }
        Ok(mesh)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePlacement {
    pub instances: Vec<PlacedOyster>,
    pub ground_extent: Rect,
    pub seed: u64,
}

impl ScenePlacement {
    pub fn validate(&self) -> Result<(), SceneError> {
        for (k, inst) in self.instances.iter().enumerate() {
            if inst.instance_id as usize != k + 1 {
                return Err(SceneError::Validation(format!(
                    "instance ids must run 1..n, found {} at position {k}",
                    inst.instance_id
                )));
            }
            let t = inst.pose.translation();
            if !self.ground_extent.contains(t.x, t.y) {
                return Err(SceneError::Validation(format!(
                    "oyster {} origin lies outside the ground extent",
                    inst.instance_id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementConfig {
    pub min_spacing_m: f64,
    /// Roll and pitch are each uniform in `[-max_tilt_deg, max_tilt_deg]`.
    pub max_tilt_deg: f64,
    /// Rejection-sampling budget is `attempts_per_oyster · n`.
    pub attempts_per_oyster: usize,
    pub oyster: OysterDistribution,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        Self {
            min_spacing_m: 0.0,
            max_tilt_deg: 15.0,
            attempts_per_oyster: 1000,
            oyster: OysterDistribution::default(),
        }
    }
}

/// Scatters `n` shells over `region` by rejection sampling.
pub fn place_oysters(
    n: usize,
    region: Rect,
    seed: u64,
    config: &PlacementConfig,
) -> Result<ScenePlacement, SceneError> {
    if !(region.area() > 0.0) || !region.area().is_finite() {
        return Err(SceneError::Validation("placement region must have positive area".into()));
    }
    if !(config.min_spacing_m >= 0.0) {
        return Err(SceneError::Validation("min_spacing_m must be >= 0".into()));
    }
    if !(0.0..=90.0).contains(&config.max_tilt_deg) {
        return Err(SceneError::Validation("max_tilt_deg must be in [0, 90]".into()));
    }
    config.oyster.validate()?;

    let mut rng = SeededRng::stream(seed, "placement", 0);
    let budget = config.attempts_per_oyster.saturating_mul(n);
    let max_tilt = config.max_tilt_deg.to_radians();
    let mut centers: Vec<(f64, f64)> = Vec::with_capacity(n);
    let mut instances = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while instances.len() < n {
        if attempts >= budget {
            return Err(SceneError::Capacity {
                placed: instances.len(),
                requested: n,
                attempts,
                constraint: format!(
                    "min_spacing {} m cannot be honoured in a {:.3} m × {:.3} m region",
                    config.min_spacing_m,
                    region.x_max - region.x_min,
                    region.y_max - region.y_min
                ),
            });
        }
        attempts += 1;
        let x = rng.uniform(region.x_min, region.x_max);
        let y = rng.uniform(region.y_min, region.y_max);
        let s2 = config.min_spacing_m * config.min_spacing_m;
        if centers
            .iter()
            .any(|&(cx, cy)| (cx - x).powi(2) + (cy - y).powi(2) < s2)
        {
            continue;
        }
        let yaw = rng.uniform(0.0, std::f64::consts::TAU);
        let roll = rng.uniform(-max_tilt, max_tilt);
        let pitch = rng.uniform(-max_tilt, max_tilt);
        let rotation = Rotation3::from_axis_angle(&Vector3::z_axis(), yaw)
            * Rotation3::from_axis_angle(&Vector3::y_axis(), pitch)
            * Rotation3::from_axis_angle(&Vector3::x_axis(), roll);
        let id = instances.len() as u32 + 1;
        let params = oystermesh::random_oyster(derive_seed(seed, "oyster", u64::from(id)), &config.oyster)?;
        centers.push((x, y));
        instances.push(PlacedOyster {
            instance_id: id,
            params,
            pose: RigidTransform::new(*rotation.matrix(), Vector3::new(x, y, 0.0))?,
        });
    }
    Ok(ScenePlacement {
        instances,
        ground_extent: region,
        seed,
    })
}

/// Pinhole camera. `pose` maps world points into the camera frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub pose: RigidTransform,
}

impl CameraModel {
    pub fn validate(&self) -> Result<(), SceneError> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(SceneError::Validation(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(SceneError::Validation("image size must be non-zero".into()));
        }
        if !(self.cx >= 0.0 && self.cx < f64::from(self.width) && self.cy >= 0.0 && self.cy < f64::from(self.height)) {
            return Err(SceneError::Validation(format!(
                "principal point ({}, {}) outside the {}×{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        RigidTransform::new(self.pose.rotation, self.pose.translation).map(|_| ())
    }

    /// Camera centre in world coordinates.
    pub fn position(&self) -> Point3<f64> {
        self.pose.inverse().apply(&Point3::origin())
    }

    /// Unit optical axis in world coordinates.
    pub fn optical_axis(&self) -> Vector3<f64> {
        self.pose.rotation().transpose() * Vector3::z()
    }

    /// Angle between the optical axis and straight down, degrees.
    pub fn tilt_deg(&self) -> f64 {
        (-self.optical_axis().z).clamp(-1.0, 1.0).acos().to_degrees()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub height_m: UniformRange,
    pub tilt_deg: UniformRange,
    pub yaw_deg: UniformRange,
    /// Ground point the optical axis passes through.
    pub target: [f64; 2],
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            fx: 500.0,
            fy: 500.0,
            cx: 320.0,
            cy: 240.0,
            height_m: UniformRange::new(0.4, 1.0),
            tilt_deg: UniformRange::new(10.0, 25.0),
            yaw_deg: UniformRange::new(0.0, 360.0),
            target: [0.0, 0.0],
        }
    }
}

impl CameraConfig {
    pub fn validate(&self) -> Result<(), SceneError> {
        let v = |r: Result<(), String>| r.map_err(SceneError::Validation);
        v(self.height_m.check("camera height_m", true))?;
        v(self.tilt_deg.check("camera tilt_deg", false))?;
        v(self.yaw_deg.check("camera yaw_deg", false))?;
        if self.tilt_deg.max >= 90.0 {
            return Err(SceneError::Validation("camera tilt must stay below 90°".into()));
        }
        if !self.target.iter().all(|v| v.is_finite()) {
            return Err(SceneError::Validation("camera target must be finite".into()));
        }
        Ok(())
    }
}

/// Samples a downward-looking camera tilted off nadir, aimed at
/// `config.target`.
pub fn sample_camera(seed: u64, config: &CameraConfig) -> Result<CameraModel, SceneError> {
    config.validate()?;
    let mut rng = SeededRng::stream(seed, "camera", 0);
    let h = config.height_m.draw(&mut rng);
    let tilt = config.tilt_deg.draw(&mut rng).to_radians();
    let yaw = config.yaw_deg.draw(&mut rng).to_radians();

    let nadir = Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0));
    let cam_to_world = Rotation3::from_axis_angle(&Vector3::z_axis(), yaw).matrix()
        * nadir
        * Rotation3::from_axis_angle(&Vector3::x_axis(), tilt).matrix();
    let axis = cam_to_world * Vector3::z();
    // walk back from the target along the axis until we are `h` above ground
    let reach = h / -axis.z;
    let center = Vector3::new(config.target[0], config.target[1], 0.0) - axis * reach;
    let rotation = cam_to_world.transpose();
    let camera = CameraModel {
        fx: config.fx,
        fy: config.fy,
        cx: config.cx,
        cy: config.cy,
        width: config.width,
        height: config.height,
        pose: RigidTransform::new(rotation, -(rotation * center))?,
    };
    camera.validate()?;
    Ok(camera)
}

/// Everything needed to produce one scene from a seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub oysters_min: usize,
    pub oysters_max: usize,
    pub region_width_m: f64,
    pub region_height_m: f64,
    pub placement: PlacementConfig,
    pub camera: CameraConfig,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            oysters_min: 20,
            oysters_max: 80,
            region_width_m: 1.0,
            region_height_m: 0.8,
            placement: PlacementConfig::default(),
            camera: CameraConfig::default(),
        }
    }
}

/// Oyster count, placement and camera for one scene seed.
pub fn build_scene(seed: u64, config: &SceneConfig) -> Result<(ScenePlacement, CameraModel), SceneError> {
    if config.oysters_min > config.oysters_max {
        return Err(SceneError::Validation(format!(
            "oysters_min {} > oysters_max {}",
            config.oysters_min, config.oysters_max
        )));
    }
    let n = SeededRng::stream(seed, "count", 0)
        .int_in(config.oysters_min as u64, config.oysters_max as u64) as usize;
    let region = Rect::centered(config.region_width_m, config.region_height_m);
    let placement = place_oysters(n, region, seed, &config.placement)?;
    let camera = sample_camera(seed, &config.camera)?;
    Ok((placement, camera))
}

/// Canonical on-disk record of a generated scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDocument {
    pub scene_id: String,
    pub seed: u64,
    pub prng: String,
    pub placement: ScenePlacement,
    pub camera: CameraModel,
    pub config: serde_json::Value,
}
