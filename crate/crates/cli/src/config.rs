//! Pipeline configuration: defaults, a flat `key: value` file, then flags.

use std::path::PathBuf;

use reefforge_core::datasetkit::{DEFAULT_MIN_PIXELS, DEFAULT_REAL_TRAIN_FRAC};
use reefforge_core::evalbench::DEFAULT_MAX_DET;
use reefforge_core::kvtext;
use reefforge_core::oystermesh::UniformRange;
use reefforge_core::rasterizer::DepthPolarity;
use reefforge_core::scenegen::SceneConfig;
use reefforge_core::synthclient::SynthParams;
use serde::Serialize;

use crate::error::CliError;

/// Everything a run depends on. `threads` and `out` are deliberately left out
/// of the serialized echo: neither changes the artifacts.
#[derive(Debug, Clone, Serialize)]
pub struct PipelineConfig {
    pub seed: u64,
    #[serde(skip)]
    pub threads: usize,
    #[serde(skip)]
    pub out: PathBuf,
    pub scenes: usize,
    pub scene: SceneConfig,
    pub synth: SynthParams,
    pub backend_url: Option<String>,
    pub timeout_s: f64,
    pub synth_concurrency: usize,
    pub min_pixels: u64,
    pub real_train_frac: f64,
    pub max_det: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: 0,
            out: PathBuf::from("out"),
            scenes: 10,
            scene: SceneConfig::default(),
            synth: SynthParams::default(),
            backend_url: None,
            timeout_s: 120.0,
            synth_concurrency: 2,
            min_pixels: DEFAULT_MIN_PIXELS,
            real_train_frac: DEFAULT_REAL_TRAIN_FRAC,
            max_det: DEFAULT_MAX_DET,
        }
    }
}

fn parse_num<T: std::str::FromStr>(origin: &str, line: usize, key: &str, value: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| {
        CliError::Validation(format!("{origin}:{line}: bad value for {key}: {value:?}"))
    })
}

impl PipelineConfig {
    /// Applies `key: value` text on top of `self`.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        let pairs = kvtext::parse_lines(text)
            .map_err(|e| CliError::Validation(format!("{origin}:{}: {}", e.line, e.message)))?;
        let mut cx_set = false;
        let mut cy_set = false;
        for (line, key, value) in &pairs {
            let line = *line;
            let v = value.as_str();
            macro_rules! num {
                () => {
                    parse_num(origin, line, key, v)?
                };
            }
            let cam = &mut self.scene.camera;
            let oy = &mut self.scene.placement.oyster;
            match key.as_str() {
                "seed" => self.seed = num!(),
                "threads" => self.threads = num!(),
                "out" => self.out = PathBuf::from(v),
                "scenes" => self.scenes = num!(),
                "oysters_min" => self.scene.oysters_min = num!(),
                "oysters_max" => self.scene.oysters_max = num!(),
                "region_width_m" => self.scene.region_width_m = num!(),
                "region_height_m" => self.scene.region_height_m = num!(),
                "min_spacing_m" => self.scene.placement.min_spacing_m = num!(),
                "max_tilt_deg" => self.scene.placement.max_tilt_deg = num!(),
                "image_width" => cam.width = num!(),
                "image_height" => cam.height = num!(),
                "fx" => cam.fx = num!(),
                "fy" => cam.fy = num!(),
                "cx" => {
                    cam.cx = num!();
                    cx_set = true;
                }
                "cy" => {
                    cam.cy = num!();
                    cy_set = true;
                }
                "camera_height_min_m" => cam.height_m.min = num!(),
                "camera_height_max_m" => cam.height_m.max = num!(),
                "camera_tilt_min_deg" => cam.tilt_deg.min = num!(),
                "camera_tilt_max_deg" => cam.tilt_deg.max = num!(),
                "camera_yaw_min_deg" => cam.yaw_deg.min = num!(),
                "camera_yaw_max_deg" => cam.yaw_deg.max = num!(),
                "length_cm_min" => oy.length_cm.min = num!(),
                "length_cm_max" => oy.length_cm.max = num!(),
                "width_cm_min" => oy.width_cm.min = num!(),
                "width_cm_max" => oy.width_cm.max = num!(),
                "height_cm_min" => oy.height_cm.min = num!(),
                "height_cm_max" => oy.height_cm.max = num!(),
                "roughness_cm" => oy.roughness_amp = UniformRange::fixed(num!()),
                "num_layers" => oy.num_layers = num!(),
                "samples_per_perimeter" => oy.samples_per_perimeter = num!(),
                "max_depth_m" => self.synth.max_depth_m = num!(),
                "depth_polarity" => {
                    self.synth.depth_polarity = match v {
                        "near_bright" => DepthPolarity::NearBright,
                        "far_bright" => DepthPolarity::FarBright,
                        _ => {
                            return Err(CliError::Validation(format!(
                                "{origin}:{line}: depth_polarity must be near_bright or far_bright"
                            )))
                        }
                    }
                }
                "backend_url" => self.backend_url = Some(v.to_string()),
                "timeout_s" => self.timeout_s = num!(),
                "synth_concurrency" => self.synth_concurrency = num!(),
                "positive_prompt" => self.synth.prompts.positive = v.to_string(),
                "negative_prompt" => self.synth.prompts.negative = v.to_string(),
                "denoise_strength" => self.synth.denoise_strength = num!(),
                "min_pixels" => self.min_pixels = num!(),
                "real_train_frac" => self.real_train_frac = num!(),
                "max_det" => self.max_det = num!(),
                other => {
                    return Err(CliError::Validation(format!("{origin}:{line}: unknown key {other:?}")));
                }
            }
        }
        let cam = &mut self.scene.camera;
        if !cx_set {
            cam.cx = f64::from(cam.width) / 2.0;
        }
        if !cy_set {
            cam.cy = f64::from(cam.height) / 2.0;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Validation(m));
        if !(0.0..=1.0).contains(&self.real_train_frac) {
            return bad(format!("real_train_frac {} outside [0, 1]", self.real_train_frac));
        }
        if !(self.synth.max_depth_m > 0.0) {
            return bad("max_depth_m must be positive".into());
        }
        if !(self.timeout_s > 0.0) {
            return bad("timeout_s must be positive".into());
        }
        if self.synth_concurrency == 0 {
            return bad("synth_concurrency must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.synth.denoise_strength) {
            return bad(format!("denoise_strength {} outside [0, 1]", self.synth.denoise_strength));
        }
        if self.max_det == 0 {
            return bad("max_det must be at least 1".into());
        }
        self.scene.camera.validate()?;
        self.scene.placement.oyster.validate()?;
        if self.scene.oysters_min > self.scene.oysters_max {
            return bad("oysters_min exceeds oysters_max".into());
        }
        Ok(())
    }

    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_override_defaults() {
        let mut c = PipelineConfig::default();
        c.apply_text("seed: 9\nimage_width: 64\nimage_height: 48\nreal_train_frac: 0.5\n", "cfg")
            .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.scene.camera.width, 64);
        assert_eq!(c.scene.camera.cx, 32.0);
        assert_eq!(c.scene.camera.cy, 24.0);
        assert_eq!(c.real_train_frac, 0.5);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_key_names_line() {
        let err = PipelineConfig::default()
            .apply_text("# c\nseed: 1\nbogus: 2\n", "cfg")
            .unwrap_err();
        assert!(err.to_string().contains("cfg:3"), "{err}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn bad_values_rejected() {
        let mut c = PipelineConfig::default();
        assert!(c.apply_text("scenes: -1\n", "cfg").is_err());
        c.real_train_frac = 2.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn echo_omits_threads() {
        let mut a = PipelineConfig::default();
        let b = PipelineConfig::default();
        a.threads = 8;
        assert_eq!(a.echo(), b.echo());
        assert!(a.echo().get("threads").is_none());
    }
}
