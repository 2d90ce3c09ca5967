//! Scene fixtures shared by the integration tests.

#![allow(dead_code)]

use reefforge_core::oystermesh::{TriangleMesh, UniformRange};
use reefforge_core::rasterizer::{render, RenderConfig, RenderOutput};
use reefforge_core::scenegen::{build_scene, CameraConfig, CameraModel, SceneConfig, ScenePlacement};

/// Up to five shells under a 64×64 camera that sees the whole patch.
pub fn small_scene_config() -> SceneConfig {
    SceneConfig {
        oysters_min: 1,
        oysters_max: 5,
        region_width_m: 0.25,
        region_height_m: 0.25,
        camera: CameraConfig {
            width: 64,
            height: 64,
            fx: 60.0,
            fy: 60.0,
            cx: 32.0,
            cy: 32.0,
            height_m: UniformRange::new(0.3, 0.6),
            ..CameraConfig::default()
        },
        ..SceneConfig::default()
    }
}

pub struct Rendered {
    pub placement: ScenePlacement,
    pub camera: CameraModel,
    pub meshes: Vec<TriangleMesh>,
    pub output: RenderOutput,
}

pub fn render_scene(seed: u64, config: &SceneConfig) -> Rendered {
    let (placement, camera) = build_scene(seed, config).expect("scene");
    let meshes = placement
        .instances
        .iter()
        .map(|i| i.world_mesh().expect("mesh"))
        .collect();
    let output = render(&placement, &camera, &RenderConfig::default(), &format!("scene_{seed}")).expect("render");
    Rendered {
        placement,
        camera,
        meshes,
        output,
    }
}
