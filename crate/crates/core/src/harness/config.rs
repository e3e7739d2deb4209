//! Scenario configuration files.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::baselines::BaselineSettings;
use crate::dictionary::{default_rho_grid, linspace, stepped_grid, HypothesisGrid, LabelOption};
use crate::error::{Error, Result};
use crate::geometry::{AntennaLayout, Preset};
use crate::pipeline::{AzimuthStrategy, DEFAULT_REFIT_RIDGE, EstimatorSettings, FalseAlarmRegion, FarMode, Protocol, ScoringRules};
use crate::solver::{Pooling, StopRule};
use crate::steering::DEFAULT_WAVELENGTH;
use crate::synthesis::{make_trajectory, SceneConfig, SceneMode, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gs,
    Sbys,
    Music,
    Burg,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Gs => "gs",
            Method::Sbys => "sbys",
            Method::Music => "music",
            Method::Burg => "burg",
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, Method::Gs | Method::Sbys)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub start: f64,
    pub end: f64,
    pub interval: f64,
    pub step: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self { start: 160.0, end: 80.0, interval: 8.0, step: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub azimuth_min_deg: f64,
    pub azimuth_max_deg: f64,
    pub azimuth_step_deg: f64,
    pub height_min: f64,
    pub height_max: f64,
    pub height_step: f64,
    /// Coarse height bins of the joint azimuth strategy.
    pub coarse_heights: usize,
    /// Reflection-coefficient hypotheses as `[re, im]` pairs.
    pub rho: Vec<Complex64>,
    /// Spatial-frequency samples per axis for the `(u, v)` strategy.
    pub uv_points: usize,
    pub theta_max_deg: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            azimuth_min_deg: -10.0,
            azimuth_max_deg: 10.0,
            azimuth_step_deg: 0.2,
            height_min: 0.0,
            height_max: 1.5,
            height_step: 0.02,
            coarse_heights: 5,
            rho: default_rho_grid(),
            uv_points: 101,
            theta_max_deg: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSection {
    pub targets: usize,
    pub mode: SceneMode,
    pub height_min: f64,
    pub height_max: f64,
    pub on_grid: bool,
    pub rho_true: Complex64,
    /// Shared azimuth of same-azimuth scenes.
    pub azimuth_deg: f64,
    /// Draw the shared azimuth at random instead.
    pub random_azimuth: bool,
}

impl Default for SceneSection {
    fn default() -> Self {
        let s = SceneConfig::default();
        Self {
            targets: s.targets,
            mode: s.mode,
            height_min: s.height_min,
            height_max: s.height_max,
            on_grid: s.on_grid,
            rho_true: s.rho_true,
            azimuth_deg: 0.0,
            random_azimuth: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSection {
    pub labels: LabelOption,
    pub pooling: Pooling,
    /// BOMP sparsity (groups) for the height stage.
    pub sparsity: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual_fraction: Option<f64>,
    pub inverse_range_weighting: bool,
    /// Run the azimuth stage; otherwise the true azimuth bins are used.
    pub azimuth_stage: bool,
    pub strategy: AzimuthStrategy,
    pub azimuth_sparsity: usize,
    /// Tikhonov weight of the height-stage refit; 0 gives plain least squares.
    pub refit_ridge: f64,
    pub azimuth_refit_ridge: f64,
    /// Weight apertures by array gain when fusing them.
    pub aperture_weighting: bool,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self {
            labels: LabelOption::A,
            pooling: Pooling::Mean,
            sparsity: 2,
            residual_fraction: None,
            inverse_range_weighting: false,
            azimuth_stage: false,
            strategy: AzimuthStrategy::I,
            azimuth_sparsity: 2,
            refit_ridge: DEFAULT_REFIT_RIDGE,
            azimuth_refit_ridge: 0.0,
            aperture_weighting: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringSection {
    pub protocol: Protocol,
    pub dtw: f64,
    pub false_alarm_region: FalseAlarmRegion,
    pub far_mode: FarMode,
}

impl Default for ScoringSection {
    fn default() -> Self {
        let r = ScoringRules::default();
        Self { protocol: r.protocol, dtw: r.dtw, false_alarm_region: r.false_alarm_region, far_mode: FarMode::Ratio }
    }
}

/// Thresholds per sparse method. Missing values are calibrated on
/// noise-only data before the sweep.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GammaValues {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub height_gs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub height_sbys: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub azimuth_gs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub azimuth_sbys: Option<f64>,
}

impl GammaValues {
    pub fn height(&self, m: Method) -> Option<f64> {
        match m {
            Method::Gs => self.height_gs,
            Method::Sbys => self.height_sbys,
            _ => None,
        }
    }

    pub fn azimuth(&self, m: Method) -> Option<f64> {
        match m {
            Method::Gs => self.azimuth_gs,
            Method::Sbys => self.azimuth_sbys,
            _ => None,
        }
    }

    pub fn set_height(&mut self, m: Method, v: f64) {
        match m {
            Method::Gs => self.height_gs = Some(v),
            Method::Sbys => self.height_sbys = Some(v),
            _ => {}
        }
    }

    pub fn set_azimuth(&mut self, m: Method, v: f64) {
        match m {
            Method::Gs => self.azimuth_gs = Some(v),
            Method::Sbys => self.azimuth_sbys = Some(v),
            _ => {}
        }
    }

    /// Values of `self`, falling back to `other`.
    pub fn or(&self, other: &GammaValues) -> GammaValues {
        GammaValues {
            height_gs: self.height_gs.or(other.height_gs),
            height_sbys: self.height_sbys.or(other.height_sbys),
            azimuth_gs: self.azimuth_gs.or(other.azimuth_gs),
            azimuth_sbys: self.azimuth_sbys.or(other.azimuth_sbys),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GammaSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub height_gs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub height_sbys: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub azimuth_gs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub azimuth_sbys: Option<f64>,
    /// Noise-only trials; a 99th percentile needs several samples above it.
    pub calibration_trials: usize,
    /// Quantile of noise-only map maxima.
    pub percentile: f64,
}

impl Default for GammaSection {
    fn default() -> Self {
        Self { height_gs: None, height_sbys: None, azimuth_gs: None, azimuth_sbys: None, calibration_trials: 1000, percentile: 0.99 }
    }
}

impl GammaSection {
    pub fn values(&self) -> GammaValues {
        GammaValues { height_gs: self.height_gs, height_sbys: self.height_sbys, azimuth_gs: self.azimuth_gs, azimuth_sbys: self.azimuth_sbys }
    }

    pub fn set_values(&mut self, v: &GammaValues) {
        (self.height_gs, self.height_sbys, self.azimuth_gs, self.azimuth_sbys) = (v.height_gs, v.height_sbys, v.azimuth_gs, v.azimuth_sbys);
    }
}

/// Full scenario; every field has a default except the layout preset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub layout: String,
    /// Optional second, mutually incoherent aperture.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub second_aperture: Option<String>,
    pub seed: u64,
    pub wavelength: f64,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub methods: Vec<Method>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    pub trajectory: TrajectoryConfig,
    pub grid: GridConfig,
    pub scene: SceneSection,
    pub estimator: EstimatorSection,
    pub scoring: ScoringSection,
    pub gamma: GammaSection,
    pub baseline: BaselineSettings,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            layout: Preset::Bumper6x8.name().to_string(),
            second_aperture: None,
            seed: 0,
            wavelength: DEFAULT_WAVELENGTH,
            snr_db: vec![-10.0, -5.0, 0.0, 5.0],
            trials: 200,
            methods: vec![Method::Gs, Method::Sbys],
            output: None,
            trajectory: TrajectoryConfig::default(),
            grid: GridConfig::default(),
            scene: SceneSection::default(),
            estimator: EstimatorSection::default(),
            scoring: ScoringSection::default(),
            gamma: GammaSection::default(),
            baseline: BaselineSettings::default(),
        }
    }
}

/// `line N` of the first assignment to `key`, if any.
fn locate(text: &str, key: &str) -> String {
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map(|i| format!(" (line {})", i + 1))
        .unwrap_or_default()
}

fn config_err(text: &str, key: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("`{key}`{}: {msg}", locate(text, key.rsplit('.').next().unwrap_or(key))))
}

/// Parses and validates a scenario from TOML text.
pub fn parse_config_str(text: &str) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate_with_source(text)?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_config_str(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

impl ScenarioConfig {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with_source("")
    }

    fn validate_with_source(&self, text: &str) -> Result<()> {
        let err = |key: &str, msg: &str| Err(config_err(text, key, msg));
        if let Err(e) = self.layout.parse::<Preset>() {
            return Err(config_err(text, "layout", e));
        }
        if let Some(s) = &self.second_aperture {
            if let Err(e) = s.parse::<Preset>() {
                return Err(config_err(text, "second_aperture", e));
            }
        }
        if !(self.wavelength > 0.0) {
            return err("wavelength", "must be positive");
        }
        if self.snr_db.is_empty() {
            return err("snr_db", "needs at least one value");
        }
        if self.snr_db.iter().any(|s| s.is_nan() || *s == f64::NEG_INFINITY) {
            return err("snr_db", "values must be numbers (inf allowed for noiseless runs)");
        }
        if self.trials == 0 {
            return err("trials", "must be at least 1");
        }
        if self.methods.is_empty() {
            return err("methods", "needs at least one method");
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return err("methods", "lists a method twice");
        }
        self.trajectory().map_err(|e| config_err(text, "trajectory.interval", e))?;
        self.grid().map_err(|e| config_err(text, "grid", e))?;
        if self.grid.uv_points < 2 {
            return err("grid.uv_points", "must be at least 2");
        }
        if !(0.0..90.0).contains(&self.grid.theta_max_deg) {
            return err("grid.theta_max_deg", "must lie in [0, 90)");
        }
        let s = &self.scene;
        if !(1..=2).contains(&s.targets) {
            return err("scene.targets", "must be 1 or 2");
        }
        if !(s.height_min >= 0.0 && s.height_max >= s.height_min) {
            return err("scene.height_max", "invalid target height range");
        }
        if !(s.rho_true.norm() <= 1.0) {
            return err("scene.rho_true", "must satisfy |rho| <= 1");
        }
        let e = &self.estimator;
        if e.sparsity == 0 {
            return err("estimator.sparsity", "must be at least 1");
        }
        if e.azimuth_sparsity == 0 {
            return err("estimator.azimuth_sparsity", "must be at least 1");
        }
        if !(e.refit_ridge >= 0.0 && e.refit_ridge.is_finite()) {
            return err("estimator.refit_ridge", "must be finite and nonnegative");
        }
        if !(e.azimuth_refit_ridge >= 0.0 && e.azimuth_refit_ridge.is_finite()) {
            return err("estimator.azimuth_refit_ridge", "must be finite and nonnegative");
        }
        if let Some(f) = e.residual_fraction {
            if !(f > 0.0 && f < 1.0) {
                return err("estimator.residual_fraction", "must lie in (0, 1)");
            }
        }
        if !(self.scoring.dtw > 0.0) {
            return err("scoring.dtw", "must be positive");
        }
        let g = &self.gamma;
        if g.calibration_trials == 0 {
            return err("gamma.calibration_trials", "must be at least 1");
        }
        if !(g.percentile > 0.0 && g.percentile < 1.0) {
            return err("gamma.percentile", "must lie in (0, 1)");
        }
        for (k, v) in [("height_gs", g.height_gs), ("height_sbys", g.height_sbys), ("azimuth_gs", g.azimuth_gs), ("azimuth_sbys", g.azimuth_sbys)] {
            if v.is_some_and(|v| !(v >= 0.0)) {
                return err(&format!("gamma.{k}"), "must be nonnegative");
            }
        }
        let b = &self.baseline;
        if !(b.antenna_height > 0.0) {
            return err("baseline.antenna_height", "must be positive");
        }
        if b.burg_order == 0 || b.music_subspace_dim == 0 {
            return err("baseline.burg_order", "model orders must be positive");
        }
        Ok(())
    }

    pub fn layout(&self) -> Result<AntennaLayout> {
        let mut layout = self.layout.parse::<Preset>()?.layout();
        if let Some(s) = &self.second_aperture {
            layout = layout.merged(s.parse::<Preset>()?.layout());
        }
        Ok(layout)
    }

    pub fn trajectory(&self) -> Result<Trajectory> {
        let t = &self.trajectory;
        make_trajectory(t.start, t.end, t.interval, t.step)
    }

    pub fn grid(&self) -> Result<HypothesisGrid> {
        let g = &self.grid;
        let azimuths = stepped_grid(g.azimuth_min_deg, g.azimuth_max_deg, g.azimuth_step_deg)?.into_iter().map(f64::to_radians).collect();
        let heights = stepped_grid(g.height_min, g.height_max, g.height_step)?;
        HypothesisGrid::new(azimuths, heights, linspace(g.height_min, g.height_max, g.coarse_heights), g.rho.clone())
    }

    pub fn estimator_settings(&self) -> Result<EstimatorSettings> {
        let e = &self.estimator;
        Ok(EstimatorSettings {
            wavelength: self.wavelength,
            grid: self.grid()?,
            labels: e.labels,
            stop: StopRule { max_groups: Some(e.sparsity), residual_fraction: e.residual_fraction },
            pooling: e.pooling,
            inverse_range_weighting: e.inverse_range_weighting,
            strategy: e.strategy,
            azimuth_stop: StopRule::sparsity(e.azimuth_sparsity),
            uv_points: self.grid.uv_points,
            theta_max: self.grid.theta_max_deg.to_radians(),
            refit_ridge: e.refit_ridge,
            azimuth_refit_ridge: e.azimuth_refit_ridge,
            aperture_weighting: e.aperture_weighting,
        })
    }

    pub fn scene_config(&self) -> SceneConfig {
        let s = &self.scene;
        SceneConfig {
            targets: s.targets,
            mode: s.mode,
            height_min: s.height_min,
            height_max: s.height_max,
            on_grid: s.on_grid,
            rho_true: s.rho_true,
            azimuth: (s.mode == SceneMode::SameAzimuth && !s.random_azimuth).then(|| s.azimuth_deg.to_radians()),
        }
    }

    pub fn scoring_rules(&self) -> ScoringRules {
        ScoringRules { protocol: self.scoring.protocol, dtw: self.scoring.dtw, false_alarm_region: self.scoring.false_alarm_region }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config_str("layout = \"bumper_6x8\"\nseed = 7\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!((cfg.trajectory.start, cfg.trajectory.end, cfg.trajectory.interval), (160.0, 80.0, 8.0));
        assert_eq!(cfg.scoring.dtw, 0.05);
        assert_eq!(cfg.estimator.sparsity, 2);
        assert_eq!(cfg.trials, 200);
        assert_eq!(cfg.snr_db, vec![-10.0, -5.0, 0.0, 5.0]);
        assert_eq!(cfg.trajectory().unwrap().interval_count(), 10);
    }

    #[test]
    fn unknown_preset_names_the_key() {
        let e = parse_config_str("seed = 1\nlayout = \"bumper_9x9\"\n").unwrap_err().to_string();
        assert!(e.contains("`layout`") && e.contains("line 2") && e.contains("bumper_9x9"), "{e}");
        let e = parse_config_str("layout = \"bumper_6x8\"\nsecond_aperture = \"roof\"\n").unwrap_err().to_string();
        assert!(e.contains("second_aperture"), "{e}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = parse_config_str("layout = \"bumper_6x8\"\ntrails = 3\n").unwrap_err().to_string();
        assert!(e.contains("trails") && e.contains("line 2"), "{e}");
        assert!(parse_config_str("[scene]\ntarget = 1\n").is_err());
    }

    #[test]
    fn invalid_ranges_are_rejected() {
        assert!(parse_config_str("trials = 0").is_err());
        assert!(parse_config_str("snr_db = []").is_err());
        assert!(parse_config_str("[scoring]\ndtw = 0.0").is_err());
        assert!(parse_config_str("[trajectory]\ninterval = 7.0").is_err());
        assert!(parse_config_str("methods = [\"gs\", \"gs\"]").is_err());
        assert!(parse_config_str("[gamma]\npercentile = 1.5").is_err());
    }

    #[test]
    fn round_trip() {
        let text = r#"
layout = "bumper_6x8"
second_aperture = "roof_3x4"
seed = 3
snr_db = [-10.0, inf]
methods = ["gs", "music"]

[scene]
targets = 2
rho_true = [-0.5, 0.1]

[estimator]
labels = "b"
pooling = "max"
residual_fraction = 0.2

[gamma]
height_gs = 0.1
"#;
        let a = parse_config_str(text).unwrap();
        let b = parse_config_str(&a.to_toml().unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.gamma.height_gs, Some(0.1));
        assert_eq!(a.layout().unwrap().apertures().len(), 2);
    }
}
