//! Pipeline configuration: one TOML file, every key optional, unknown keys
//! rejected, and `key.path=value` overrides from the command line.

use std::path::{Path, PathBuf};

use eeprec_core::effector::{default_nm_config, MarkerRigSpec};
use eeprec_core::image::{DetectorConfig, RenderSettings};
use eeprec_core::nn::{LearningRateMode, SplitSpec, TrainingConfig};
use eeprec_core::optim::{LMConfig, NMConfig};
use eeprec_core::robot::{CableErrorModel, SimConfig, TrajectoryConfig};
use eeprec_core::scene::{RigPathConfig, SceneConfig};
use eeprec_core::tracking::{TrackerConfig, TriangulationMode};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Config format version understood by this build.
pub const CONFIG_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: String,
    /// The only seed; every stage derives its own stream from it by name.
    pub seed: u64,
    pub paths: Paths,
    pub scene: SceneStage,
    pub calibration: CalibrationStage,
    pub render: RenderSettings,
    pub detector: DetectorConfig,
    pub tracker: TrackerConfig,
    pub effector: EffectorStage,
    pub simulate: SimulateStage,
    pub split: SplitSpec,
    pub training: TrainingConfig,
    pub estimate: EstimateStage,
    pub evaluate: EvaluateStage,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION.to_string(),
            seed: 42,
            paths: Paths::default(),
            scene: SceneStage::default(),
            calibration: CalibrationStage::default(),
            render: RenderSettings::default(),
            detector: DetectorConfig::default(),
            tracker: TrackerConfig::default(),
            effector: EffectorStage::default(),
            simulate: SimulateStage::default(),
            split: SplitSpec {
                train: 30.0 / 36.0,
                val: 3.0 / 36.0,
                test: 3.0 / 36.0,
                ..SplitSpec::default()
            },
            training: TrainingConfig {
                learning_rate: 1e-3,
                learning_rate_mode: LearningRateMode::Fixed,
                epochs: 120,
                early_stopping_patience: 30,
                ..TrainingConfig::default()
            },
            estimate: EstimateStage::default(),
            evaluate: EvaluateStage::default(),
        }
    }
}

/// Artifact locations. Relative entries are resolved against `root`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub root: String,
    pub scene: String,
    pub calibration: String,
    pub frames: String,
    pub detections: String,
    pub track: String,
    /// Dataset file written by `simulate` and read by `train`, `estimate`
    /// and `evaluate`.
    pub dataset: String,
    pub models: String,
    pub estimate: String,
    pub reports: String,
    pub manifests: String,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            root: "run".into(),
            scene: "scene".into(),
            calibration: "calibration".into(),
            frames: "frames".into(),
            detections: "detections".into(),
            track: "track".into(),
            dataset: "dataset/ravenstate.bin".into(),
            models: "models".into(),
            estimate: "estimate".into(),
            reports: "reports".into(),
            manifests: "manifests".into(),
        }
    }
}

impl Paths {
    pub fn resolve(&self, entry: &str) -> PathBuf {
        let p = Path::new(entry);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            Path::new(&self.root).join(p)
        }
    }

    fn entries(&self) -> [(&'static str, &str); 11] {
        [
            ("root", &self.root),
            ("scene", &self.scene),
            ("calibration", &self.calibration),
            ("frames", &self.frames),
            ("detections", &self.detections),
            ("track", &self.track),
            ("dataset", &self.dataset),
            ("models", &self.models),
            ("estimate", &self.estimate),
            ("reports", &self.reports),
            ("manifests", &self.manifests),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneStage {
    pub geometry: SceneConfig,
    pub rig_path: RigPathConfig,
    pub frames: usize,
    /// Frames per second of the synthetic video.
    pub frame_rate: f64,
    /// Largest hidden share of any ball in any view.
    pub max_occlusion: f64,
    /// Gaussian noise on marker pixel observations, px.
    pub marker_pixel_noise: f64,
    /// Distance of the camera pose priors from the truth, mm.
    pub prior_position_error: f64,
    /// Rotation of the camera pose priors away from the truth, degrees.
    pub prior_orientation_error_deg: f64,
}

impl Default for SceneStage {
    fn default() -> Self {
        Self {
            geometry: SceneConfig::default(),
            rig_path: RigPathConfig::default(),
            frames: 60,
            frame_rate: 30.0,
            max_occlusion: 0.3,
            marker_pixel_noise: 0.5,
            prior_position_error: 40.0,
            prior_orientation_error_deg: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationStage {
    pub lm: LMConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EffectorStage {
    pub rig: MarkerRigSpec,
    pub triangulation: TriangulationMode,
    pub nelder_mead: NMConfig,
}

impl Default for EffectorStage {
    fn default() -> Self {
        Self {
            rig: MarkerRigSpec::default(),
            triangulation: TriangulationMode::default(),
            nelder_mead: default_nm_config(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateStage {
    pub trajectories: usize,
    /// Length of each trajectory, s.
    pub duration: f64,
    pub trajectory: TrajectoryConfig,
    pub sim: SimConfig,
    pub error_model: CableErrorModel,
    /// Also write the dataset as delimited text next to the binary file.
    pub csv_export: bool,
}

impl Default for SimulateStage {
    fn default() -> Self {
        Self {
            trajectories: 102,
            duration: 60.0,
            trajectory: TrajectoryConfig::default(),
            sim: SimConfig::default(),
            error_model: CableErrorModel::default(),
            csv_export: false,
        }
    }
}

/// Which trajectories of the dataset `estimate` corrects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimateScope {
    All,
    Train,
    Val,
    #[default]
    Test,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateStage {
    pub scope: EstimateScope,
}

/// Acceptance thresholds checked by `evaluate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateStage {
    pub min_rms_reduction_pct: f64,
    pub min_sd_reduction_pct: f64,
    pub max_corrected_rms_mm: f64,
    /// Limit on the measured effector 3D RMS against the rendered truth.
    pub max_measurement_rms_mm: f64,
}

impl Default for EvaluateStage {
    fn default() -> Self {
        Self {
            min_rms_reduction_pct: 80.0,
            min_sd_reduction_pct: 50.0,
            max_corrected_rms_mm: 1.2,
            max_measurement_rms_mm: 1.1,
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Overlays `over` onto `base`, table by table.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parses an override value as TOML, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| config_err(format!("override `{assignment}` is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut table = root;
    for p in parents {
        table = match table.get_mut(*p) {
            Some(toml::Value::Table(t)) => t,
            _ => return Err(config_err(format!("unknown config key `{key}`"))),
        };
    }
    if !table.contains_key(*last) {
        return Err(config_err(format!("unknown config key `{key}`")));
    }
    table.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}

impl PipelineConfig {
    /// Defaults, then the file (if any), then each override in order.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = toml::Table::try_from(Self::default()).expect("defaults serialize");
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
            let user: toml::Table = toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            merge(&mut table, user);
        }
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.version != CONFIG_VERSION {
            return Err(config_err(format!(
                "config version `{}` is not supported (expected `{CONFIG_VERSION}`)",
                self.version
            )));
        }
        for (name, value) in self.paths.entries() {
            if value.trim().is_empty() {
                return Err(config_err(format!("paths.{name} is empty")));
            }
            if Path::new(value).components().any(|c| c == std::path::Component::ParentDir) && name != "root" {
                return Err(config_err(format!("paths.{name} may not climb out of the root with `..`")));
            }
        }
        let s = &self.scene;
        if s.frames == 0 || !(s.frame_rate > 0.0) || !(0.0..1.0).contains(&s.max_occlusion) {
            return Err(config_err("scene needs frames > 0, frame_rate > 0 and max_occlusion in [0, 1)"));
        }
        if !(s.marker_pixel_noise >= 0.0 && s.prior_position_error >= 0.0 && s.prior_orientation_error_deg >= 0.0) {
            return Err(config_err("scene noise and prior errors must be non-negative"));
        }
        if self.simulate.trajectories == 0 || !(self.simulate.duration > 0.0) {
            return Err(config_err("simulate needs at least one trajectory of positive duration"));
        }
        let stage = |e: &dyn std::fmt::Display| config_err(e.to_string());
        self.tracker.validate().map_err(|e| stage(&e))?;
        self.detector.hough.validate().map_err(|e| stage(&e))?;
        self.simulate.sim.validate().map_err(|e| stage(&e))?;
        self.simulate.error_model.validate().map_err(|e| stage(&e))?;
        self.split.validate().map_err(|e| stage(&e))?;
        self.training.validate().map_err(|e| stage(&e))?;
        Ok(())
    }

    /// Canonical text form; the config hash is taken over these bytes.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn sha256(&self) -> String {
        format!("{:x}", Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn path(&self, entry: &str) -> PathBuf {
        self.paths.resolve(entry)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(text: &str) -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), text).unwrap();
        f
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = PipelineConfig::default();
        let back: PipelineConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(PipelineConfig::load(None, &[]).unwrap(), cfg);
    }

    #[test]
    fn file_then_overrides() {
        let f = write("seed = 7\n[training]\nepochs = 3\n[scene]\nframe_rate = 25\n");
        let cfg = PipelineConfig::load(
            Some(f.path()),
            &["training.epochs=5".into(), "paths.root=/tmp/x".into(), "training.activation=relu".into()],
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.training.epochs, 5);
        assert_eq!(cfg.scene.frame_rate, 25.0);
        assert_eq!(cfg.paths.root, "/tmp/x");
        assert_eq!(cfg.training.activation, eeprec_core::nn::Activation::Relu);
        assert_eq!(cfg.path(&cfg.paths.models), PathBuf::from("/tmp/x/models"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let f = write("[training]\nepoch = 3\n");
        assert!(matches!(PipelineConfig::load(Some(f.path()), &[]), Err(CliError::Config(_))));
        let f = write("colour = 1\n");
        assert!(matches!(PipelineConfig::load(Some(f.path()), &[]), Err(CliError::Config(_))));
        assert!(matches!(PipelineConfig::load(None, &["training.epoch=3".into()]), Err(CliError::Config(_))));
        assert!(matches!(PipelineConfig::load(None, &["nonsense".into()]), Err(CliError::Config(_))));
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for o in ["training.batch_size=1", "paths.models=", "paths.dataset=../x", "version=\"9\"", "scene.frames=0"] {
            assert!(matches!(PipelineConfig::load(None, &[o.into()]), Err(CliError::Config(_))), "{o}");
        }
        let f = write("seed = \"x\"\n");
        assert!(matches!(PipelineConfig::load(Some(f.path()), &[]), Err(CliError::Config(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        assert_eq!(a.sha256(), b.sha256());
        b.seed += 1;
        assert_ne!(a.sha256(), b.sha256());
        assert_eq!(a.sha256().len(), 64);
    }
}
