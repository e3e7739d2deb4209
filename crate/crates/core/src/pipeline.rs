//! Sequential azimuth-then-height estimation, SbyS / GS range fusion and
//! per-trial scoring.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dictionary::{
    assemble_range_fusion, azimuth_dictionary_case_i, azimuth_dictionary_case_ii, azimuth_dictionary_case_iii,
    height_dictionary, nearest_index, normalize_signal, uv_grid, Dictionary, HypothesisGrid, LabelOption,
};
use crate::error::{domain, Error, Result};
use crate::geometry::{AntennaLayout, CoherentAperture, Position3};
use crate::solver::{bomp, declare, doa_map, height_map, Bin, GroupSparseProblem, HypothesisMap, Pooling, StopRule};
use crate::synthesis::Scene;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fusion {
    /// Independent solves per trajectory point, maps averaged.
    Sbys,
    /// One group-sparse solve per filtering interval.
    Gs,
}

impl Fusion {
    pub fn tag(&self) -> &'static str {
        match self {
            Fusion::Sbys => "sbys",
            Fusion::Gs => "gs",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AzimuthStrategy {
    /// Level sub-array, `θ ≈ 0`.
    #[default]
    I,
    /// Level sub-array over spatial frequencies `(u, v)`.
    Ii,
    /// All channels, joint azimuth and coarse height under multipath.
    Iii,
}

pub const DEFAULT_REFIT_RIDGE: f64 = 10.0;

/// Settings shared by every estimate in a scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorSettings {
    pub wavelength: f64,
    pub grid: HypothesisGrid,
    pub labels: LabelOption,
    pub stop: StopRule,
    pub pooling: Pooling,
    /// Weight each point's map by `1/r` when averaging.
    pub inverse_range_weighting: bool,
    pub strategy: AzimuthStrategy,
    pub azimuth_stop: StopRule,
    /// Case (ii): number of `v` (and, for non-planar layouts, `u`) samples.
    pub uv_points: usize,
    pub theta_max: f64,
    /// Tikhonov weight of the height-stage BOMP refit.
    ///
    /// Multipath columns at neighbouring heights are nearly collinear, so a
    /// plain least-squares refit turns residual noise into large, cancelling
    /// coefficients that swamp the maps. With unit-norm data and columns,
    /// a weight of order 10 keeps coefficients on the scale of the fitted
    /// correlation while selection stays the projection test.
    pub refit_ridge: f64,
    /// Refit weight of the azimuth stage. Azimuth columns are far better
    /// conditioned than height groups, and a ridge there spreads a peak over
    /// its coherent neighbours, so the default is plain least squares.
    pub azimuth_refit_ridge: f64,
    /// Scale each aperture's normalized height-stage signal by
    /// `sqrt(M_l / M_max)` and its map by `M_l / M_max`, `M` being virtual
    /// channels: an aperture's confidence follows its array gain, so a small
    /// second sensor does not count as much as the main one.
    pub aperture_weighting: bool,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        Self {
            wavelength: crate::steering::DEFAULT_WAVELENGTH,
            grid: HypothesisGrid::default(),
            labels: LabelOption::A,
            stop: StopRule::sparsity(2),
            pooling: Pooling::Mean,
            inverse_range_weighting: false,
            strategy: AzimuthStrategy::I,
            azimuth_stop: StopRule::sparsity(2),
            uv_points: 101,
            theta_max: 5f64.to_radians(),
            refit_ridge: DEFAULT_REFIT_RIDGE,
            azimuth_refit_ridge: 0.0,
            aperture_weighting: true,
        }
    }
}

/// Measurements of one target along the trajectory: `y[point][aperture]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub ranges: Vec<f64>,
    pub intervals: Vec<Range<usize>>,
    pub y: Vec<Vec<Vec<Complex64>>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Declaration {
    pub azimuth: f64,
    pub height: f64,
    pub magnitude: f64,
    /// Interval the map came from; `None` for maps averaged over intervals.
    pub interval: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Kind {
    Height(Vec<u64>),
    CaseI,
    CaseII,
    CaseIII,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Key {
    kind: Kind,
    aperture: usize,
    range: u64,
}

/// Normalized per-point dictionaries shared across trials.
///
/// Entries are pure functions of their key, so sharing never changes results.
#[derive(Debug)]
pub struct DictionaryCache {
    map: Mutex<HashMap<Key, Arc<Dictionary>>>,
    capacity: usize,
}

impl Default for DictionaryCache {
    fn default() -> Self {
        Self::with_capacity(1024)
    }
}

impl DictionaryCache {
    pub fn with_capacity(capacity: usize) -> Self {
        Self { map: Mutex::new(HashMap::new()), capacity: capacity.max(1) }
    }

    fn get_or_build(&self, key: Key, build: impl FnOnce() -> Result<Dictionary>) -> Result<Arc<Dictionary>> {
        if let Some(d) = self.map.lock().expect("dictionary cache poisoned").get(&key) {
            return Ok(d.clone());
        }
        let d = Arc::new(build()?.normalize()?);
        let mut map = self.map.lock().expect("dictionary cache poisoned");
        if map.len() >= self.capacity {
            map.clear();
        }
        Ok(map.entry(key).or_insert(d).clone())
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("dictionary cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AzimuthEstimate {
    pub map: HypothesisMap,
    /// Number of measurements summed into the map.
    pub measurements: usize,
    pub azimuths: Vec<f64>,
}

/// Two-stage estimator bound to a layout.
pub struct Estimator<'a> {
    layout: &'a AntennaLayout,
    reference: Position3,
    settings: &'a EstimatorSettings,
    cache: &'a DictionaryCache,
    level: Vec<(CoherentAperture, Vec<usize>)>,
}

fn weight(settings: &EstimatorSettings, range: f64) -> f64 {
    if settings.inverse_range_weighting { 1.0 / range } else { 1.0 }
}

impl<'a> Estimator<'a> {
    /// Confidence of aperture `l` relative to the largest one.
    fn aperture_confidence(&self, l: usize) -> f64 {
        if !self.settings.aperture_weighting {
            return 1.0;
        }
        let apertures = self.layout.apertures();
        let max = apertures.iter().map(|a| a.virtual_channels()).max().unwrap_or(1);
        (apertures[l].virtual_channels() as f64 / max as f64).sqrt()
    }

    pub fn new(layout: &'a AntennaLayout, settings: &'a EstimatorSettings, cache: &'a DictionaryCache) -> Self {
        let level = layout.apertures().iter().map(|a| a.constant_height_subarray()).collect();
        Self { layout, reference: layout.reference_point(), settings, cache, level }
    }

    pub fn layout(&self) -> &AntennaLayout {
        self.layout
    }

    fn check(&self, obs: &Observation) -> Result<()> {
        if obs.y.len() != obs.ranges.len() {
            return Err(Error::Dimension("one measurement set per range is required".into()));
        }
        for y in &obs.y {
            if y.len() != self.layout.apertures().len() {
                return Err(Error::Dimension("one snapshot per aperture is required".into()));
            }
            for (s, a) in y.iter().zip(self.layout.apertures()) {
                if s.len() != a.virtual_channels() {
                    return Err(Error::Dimension(format!("aperture `{}` expects {} channels", a.id, a.virtual_channels())));
                }
            }
        }
        if obs.intervals.iter().any(|r| r.end > obs.ranges.len() || r.is_empty()) {
            return Err(Error::Dimension("filtering intervals out of bounds".into()));
        }
        Ok(())
    }

    fn height_dict(&self, aperture: usize, range: f64, azimuths: &[f64]) -> Result<Arc<Dictionary>> {
        let key = Key { kind: Kind::Height(azimuths.iter().map(|a| a.to_bits()).collect()), aperture, range: range.to_bits() };
        let s = self.settings;
        self.cache.get_or_build(key, || {
            height_dictionary(
                azimuths,
                &s.grid.heights,
                &s.grid.rhos,
                &self.layout.apertures()[aperture],
                &self.reference,
                range,
                s.wavelength,
                LabelOption::A,
            )
        })
    }

    fn azimuth_dict(&self, aperture: usize, range: f64) -> Result<Arc<Dictionary>> {
        let s = self.settings;
        let (kind, ap) = match s.strategy {
            AzimuthStrategy::I => (Kind::CaseI, &self.level[aperture].0),
            AzimuthStrategy::Ii => (Kind::CaseII, &self.level[aperture].0),
            AzimuthStrategy::Iii => (Kind::CaseIII, &self.layout.apertures()[aperture]),
        };
        let key = Key { kind, aperture, range: range.to_bits() };
        self.cache.get_or_build(key, || match s.strategy {
            AzimuthStrategy::I => azimuth_dictionary_case_i(&s.grid.azimuths, ap, &self.reference, range, s.wavelength),
            AzimuthStrategy::Ii => {
                let planar = ap.virtual_positions().iter().all(|p| p.x.abs() < 1e-12);
                let grid = uv_grid(s.theta_max, s.uv_points, s.uv_points, planar);
                azimuth_dictionary_case_ii(&grid, s.theta_max, ap, &self.reference, range, s.wavelength)
            }
            AzimuthStrategy::Iii => azimuth_dictionary_case_iii(
                &s.grid.azimuths,
                &s.grid.coarse_heights,
                &s.grid.rhos,
                ap,
                &self.reference,
                range,
                s.wavelength,
            ),
        })
    }

    fn azimuth_samples(&self, y: &[Complex64], aperture: usize) -> Vec<Complex64> {
        match self.settings.strategy {
            AzimuthStrategy::Iii => y.to_vec(),
            _ => self.level[aperture].1.iter().map(|&i| y[i]).collect(),
        }
    }

    /// Solve units of a fusion mode: GS couples a whole interval, SbyS a
    /// single point (apertures at one point are always fused).
    fn units(obs: &Observation, fusion: Fusion) -> Vec<Vec<usize>> {
        obs.intervals
            .iter()
            .flat_map(|r| match fusion {
                Fusion::Gs => vec![r.clone().collect::<Vec<_>>()],
                Fusion::Sbys => r.clone().map(|i| vec![i]).collect(),
            })
            .collect()
    }

    /// Azimuth stage: DoA map summed over every measurement, thresholded at
    /// `gamma` per measurement.
    pub fn estimate_azimuth(&self, obs: &Observation, fusion: Fusion, gamma: f64) -> Result<AzimuthEstimate> {
        self.check(obs)?;
        let mut total: Option<HypothesisMap> = None;
        let mut measurements = 0;
        for unit in Self::units(obs, fusion) {
            let mut systems = Vec::new();
            for &i in &unit {
                for (l, y) in obs.y[i].iter().enumerate() {
                    let (yn, _) = normalize_signal(&self.azimuth_samples(y, l))?;
                    systems.push((yn, (*self.azimuth_dict(l, obs.ranges[i])?).clone()));
                }
            }
            let (y, dict) = assemble_range_fusion(&systems, None)?;
            let rec = bomp(&GroupSparseProblem::new(&y, &dict, self.settings.azimuth_stop).with_ridge(self.settings.azimuth_refit_ridge))?;
            let blocks = rec.block_coefficients(&dict);
            measurements += blocks.len();
            let map = doa_map(&blocks, dict.block_meta())?;
            match &mut total {
                None => total = Some(map),
                Some(t) => t.accumulate(&map, 1.0)?,
            }
        }
        let map = total.ok_or_else(|| Error::Dimension("observation has no filtering intervals".into()))?;
        let mut azimuths: Vec<f64> = declare(&map, gamma * measurements as f64)?
            .iter()
            .filter_map(|d| d.bin.azimuth())
            .collect();
        azimuths.sort_by(f64::total_cmp);
        azimuths.dedup();
        Ok(AzimuthEstimate { map: map.with_threshold(gamma * measurements as f64), measurements, azimuths })
    }

    /// Height maps (one per azimuth) averaged over every point, aperture and
    /// interval.
    pub fn height_maps(&self, obs: &Observation, azimuths: &[f64], fusion: Fusion) -> Result<Vec<HypothesisMap>> {
        self.check(obs)?;
        if azimuths.is_empty() {
            return domain("height estimation needs at least one azimuth");
        }
        let s = self.settings;
        let mut acc: Option<Vec<f64>> = None;
        let mut weight_sum = 0.0;
        let mut template: Option<Arc<Dictionary>> = None;
        for unit in Self::units(obs, fusion) {
            let mut systems = Vec::new();
            let mut weights = Vec::new();
            for &i in &unit {
                for (l, y) in obs.y[i].iter().enumerate() {
                    let c = self.aperture_confidence(l);
                    let yn = normalize_signal(y)?.0.into_iter().map(|v| v * c).collect();
                    let d = self.height_dict(l, obs.ranges[i], azimuths)?;
                    template.get_or_insert_with(|| d.clone());
                    systems.push((yn, (*d).clone()));
                    weights.push(c * c * weight(s, obs.ranges[i]));
                }
            }
            let (y, dict) = assemble_range_fusion(&systems, Some(s.labels))?;
            let rec = bomp(&GroupSparseProblem::new(&y, &dict, s.stop).with_ridge(s.refit_ridge))?;
            let shape = dict.shape().expect("height dictionary");
            for (x, w) in rec.block_coefficients(&dict).iter().zip(&weights) {
                let m = height_map(x, shape, s.pooling)?;
                let a = acc.get_or_insert_with(|| vec![0.0; m.len()]);
                for (a, v) in a.iter_mut().zip(m) {
                    *a += w * v;
                }
                weight_sum += w;
            }
        }
        let acc = acc.ok_or_else(|| Error::Dimension("observation has no filtering intervals".into()))?;
        let template = template.expect("at least one system");
        let shape = template.shape().expect("height dictionary");
        let meta = template.block_meta();
        (0..shape.azimuths)
            .map(|j| {
                let cols = j * shape.heights..(j + 1) * shape.heights;
                let bins = cols
                    .clone()
                    .map(|c| Bin::Height { azimuth: meta[c].azimuth().unwrap_or(0.0), height: meta[c].height().unwrap_or(0.0) })
                    .collect();
                HypothesisMap::new(acc[cols].iter().map(|v| v / weight_sum).collect(), bins)
            })
            .collect()
    }

    /// Height stage: bins of the averaged maps above `gamma`.
    pub fn estimate_height(&self, obs: &Observation, azimuths: &[f64], fusion: Fusion, gamma: f64) -> Result<Vec<Declaration>> {
        let mut out = Vec::new();
        for map in self.height_maps(obs, azimuths, fusion)? {
            for d in declare(&map, gamma)? {
                if let Bin::Height { azimuth, height } = d.bin {
                    out.push(Declaration { azimuth, height, magnitude: d.value, interval: None });
                }
            }
        }
        Ok(out)
    }
}

/// How declarations are matched against the truth.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Only the highest scatterer must be found.
    #[default]
    #[serde(rename = "1d")]
    OneD,
    /// Every scatterer must be found in its azimuth bin.
    #[serde(rename = "2d")]
    TwoD,
}

/// Which off-target declarations count as false alarms (vertical protocol).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FalseAlarmRegion {
    /// Above the detection window of the highest scatterer.
    #[default]
    Above,
    /// Anywhere outside that window.
    Outside,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoringRules {
    pub protocol: Protocol,
    /// Detection-window half-width in meters.
    pub dtw: f64,
    pub false_alarm_region: FalseAlarmRegion,
}

impl Default for ScoringRules {
    fn default() -> Self {
        Self { protocol: Protocol::OneD, dtw: 0.05, false_alarm_region: FalseAlarmRegion::Above }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub detected: bool,
    /// Per-scatterer flags (the vertical protocol only flags the highest).
    pub target_detected: Vec<bool>,
    pub false_alarms: usize,
    pub declarations: usize,
}

// Window edges are inclusive; grid heights carry rounding noise.
const WINDOW_SLACK: f64 = 1e-9;

/// Scores declarations against the scene. `azimuths` is the grid used to
/// match azimuth bins in the 2-D protocol.
pub fn score_trial(declarations: &[Declaration], truth: &Scene, rules: &ScoringRules, azimuths: &[f64]) -> Result<TrialResult> {
    if !(rules.dtw > 0.0) {
        return domain("detection window must be positive");
    }
    let within = |d: &Declaration, h: f64| (d.height - h).abs() <= rules.dtw + WINDOW_SLACK;
    match rules.protocol {
        Protocol::OneD => {
            let Some(top) = truth.highest() else {
                return Ok(TrialResult { detected: false, target_detected: vec![], false_alarms: declarations.len(), declarations: declarations.len() });
            };
            let h = truth.scatterers[top].height;
            let detected = declarations.iter().any(|d| within(d, h));
            let false_alarms = declarations
                .iter()
                .filter(|d| match rules.false_alarm_region {
                    FalseAlarmRegion::Above => d.height > h + rules.dtw + WINDOW_SLACK,
                    FalseAlarmRegion::Outside => !within(d, h),
                })
                .count();
            let mut flags = vec![false; truth.scatterers.len()];
            flags[top] = detected;
            Ok(TrialResult { detected, target_detected: flags, false_alarms, declarations: declarations.len() })
        }
        Protocol::TwoD => {
            if azimuths.is_empty() {
                return domain("2-D scoring needs the azimuth grid");
            }
            let bin = |a: f64| nearest_index(azimuths, a);
            let matches = |d: &Declaration, k: usize| {
                let s = &truth.scatterers[k];
                bin(d.azimuth) == bin(s.azimuth) && within(d, s.height)
            };
            let flags: Vec<bool> = (0..truth.scatterers.len()).map(|k| declarations.iter().any(|d| matches(d, k))).collect();
            let false_alarms = declarations.iter().filter(|d| !(0..truth.scatterers.len()).any(|k| matches(d, k))).count();
            let detected = !flags.is_empty() && flags.iter().all(|f| *f);
            Ok(TrialResult { detected, target_detected: flags, false_alarms, declarations: declarations.len() })
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FarMode {
    /// False alarms over all declarations.
    #[default]
    Ratio,
    /// Fraction of trials with at least one false alarm.
    PerTrial,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub pd: f64,
    pub far: f64,
    pub de: f64,
    pub trials: usize,
}

/// `Pd`, `FAR` and `De = Pd (1 − FAR)`.
pub fn aggregate_metrics(trials: &[TrialResult], mode: FarMode) -> Result<Metrics> {
    if trials.is_empty() {
        return domain("metrics need at least one trial");
    }
    let n = trials.len() as f64;
    let pd = trials.iter().filter(|t| t.detected).count() as f64 / n;
    let far = match mode {
        FarMode::Ratio => {
            let decl: usize = trials.iter().map(|t| t.declarations).sum();
            let fa: usize = trials.iter().map(|t| t.false_alarms).sum();
            if decl == 0 { 0.0 } else { fa as f64 / decl as f64 }
        }
        FarMode::PerTrial => trials.iter().filter(|t| t.false_alarms > 0).count() as f64 / n,
    };
    Ok(Metrics { pd, far, de: pd * (1.0 - far), trials: trials.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Preset;
    use crate::synthesis::{make_trajectory, stream, stream_rng, synthesize_snapshot, Scatterer};

    fn decl(height: f64) -> Declaration {
        Declaration { azimuth: 0.0, height, magnitude: 1.0, interval: None }
    }

    fn scene(targets: &[(f64, f64)]) -> Scene {
        Scene {
            scatterers: targets.iter().map(|&(azimuth, height)| Scatterer { azimuth, height, amplitude: Complex64::new(1.0, 0.0) }).collect(),
            rho_true: Complex64::new(-0.6, 0.0),
        }
    }

    fn observe(layout: &AntennaLayout, s: &Scene, start: f64, end: f64, interval: f64, snr: f64, seed: u64) -> Observation {
        let t = make_trajectory(start, end, interval, 1.0).unwrap();
        let reference = layout.reference_point();
        let y = t
            .ranges
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                layout
                    .apertures()
                    .iter()
                    .enumerate()
                    .map(|(l, a)| {
                        let mut rng = stream_rng(seed, stream::SNAPSHOT, &[l as u64, i as u64]);
                        synthesize_snapshot(s, a, &reference, i, r, 0.0039, snr, &mut rng).unwrap().y
                    })
                    .collect()
            })
            .collect();
        Observation { ranges: t.ranges.clone(), intervals: t.intervals(), y }
    }

    fn small_settings() -> EstimatorSettings {
        let mut s = EstimatorSettings::default();
        s.grid.azimuths = (-10..=10).map(|i| (i as f64).to_radians()).collect();
        s
    }

    #[test]
    fn scoring_examples() {
        let truth = scene(&[(0.0, 0.5)]);
        let rules = ScoringRules::default();
        let r = score_trial(&[decl(0.54)], &truth, &rules, &[]).unwrap();
        assert!(r.detected);
        assert_eq!(r.false_alarms, 0);
        let r = score_trial(&[decl(0.58)], &truth, &rules, &[]).unwrap();
        assert!(!r.detected);
        assert_eq!(r.false_alarms, 1);
        let r = score_trial(&[decl(0.5), decl(0.7)], &truth, &rules, &[]).unwrap();
        assert!(r.detected);
        assert_eq!(r.false_alarms, 1);
        // Below the window only counts in the `outside` reading.
        let r = score_trial(&[decl(0.5), decl(0.3)], &truth, &rules, &[]).unwrap();
        assert_eq!(r.false_alarms, 0);
        let outside = ScoringRules { false_alarm_region: FalseAlarmRegion::Outside, ..rules };
        assert_eq!(score_trial(&[decl(0.5), decl(0.3)], &truth, &outside, &[]).unwrap().false_alarms, 1);
        assert!(score_trial(&[], &truth, &ScoringRules { dtw: 0.0, ..rules }, &[]).is_err());
    }

    #[test]
    fn scoring_uses_highest_scatterer() {
        let truth = scene(&[(0.0, 0.3), (0.0, 0.9)]);
        let r = score_trial(&[decl(0.3)], &truth, &ScoringRules::default(), &[]).unwrap();
        assert!(!r.detected);
        assert_eq!(r.false_alarms, 0);
        assert!(score_trial(&[decl(0.92)], &truth, &ScoringRules::default(), &[]).unwrap().detected);
    }

    #[test]
    fn two_d_scoring() {
        let grid = [-0.02, 0.0, 0.02];
        let truth = scene(&[(0.0, 0.5), (0.02, 0.3)]);
        let rules = ScoringRules { protocol: Protocol::TwoD, dtw: 0.04, ..ScoringRules::default() };
        let d = |azimuth: f64, height: f64| Declaration { azimuth, height, magnitude: 1.0, interval: None };
        let r = score_trial(&[d(0.0, 0.52), d(0.02, 0.31)], &truth, &rules, &grid).unwrap();
        assert!(r.detected);
        assert_eq!(r.false_alarms, 0);
        let r = score_trial(&[d(0.0, 0.52), d(-0.02, 0.31)], &truth, &rules, &grid).unwrap();
        assert!(!r.detected);
        assert_eq!(r.target_detected, vec![true, false]);
        assert_eq!(r.false_alarms, 1);
    }

    #[test]
    fn metrics_examples() {
        let clean = TrialResult { detected: true, target_detected: vec![true], false_alarms: 0, declarations: 1 };
        let m = aggregate_metrics(&vec![clean.clone(); 10], FarMode::Ratio).unwrap();
        assert_eq!((m.pd, m.far, m.de), (1.0, 0.0, 1.0));
        let none = TrialResult { detected: false, target_detected: vec![false], false_alarms: 0, declarations: 0 };
        let m = aggregate_metrics(&vec![none; 5], FarMode::Ratio).unwrap();
        assert_eq!((m.pd, m.far, m.de), (0.0, 0.0, 0.0));
        let miss = TrialResult { detected: false, target_detected: vec![false], false_alarms: 1, declarations: 1 };
        let mut trials = vec![clean; 100];
        trials.extend(vec![miss; 100]);
        let m = aggregate_metrics(&trials, FarMode::Ratio).unwrap();
        assert_eq!((m.pd, m.far, m.de, m.trials), (0.5, 0.5, 0.25, 200));
        assert_eq!(aggregate_metrics(&trials, FarMode::PerTrial).unwrap().far, 0.5);
        assert!(aggregate_metrics(&[], FarMode::Ratio).is_err());
    }

    #[test]
    fn noiseless_height_recovery_both_modes() {
        let layout = Preset::Bumper6x8.layout();
        let settings = EstimatorSettings::default();
        let cache = DictionaryCache::default();
        let est = Estimator::new(&layout, &settings, &cache);
        let s = scene(&[(0.0, 0.74)]);
        let obs = observe(&layout, &s, 120.0, 104.0, 8.0, f64::INFINITY, 1);
        for fusion in [Fusion::Gs, Fusion::Sbys] {
            let maps = est.height_maps(&obs, &[0.0], fusion).unwrap();
            let m = &maps[0];
            assert!((m.bins[m.argmax().unwrap()].height().unwrap() - 0.74).abs() < 1e-9);
        }
    }

    #[test]
    fn single_point_intervals_make_fusion_modes_equal() {
        let layout = Preset::Bumper6x8.layout();
        let settings = EstimatorSettings::default();
        let cache = DictionaryCache::default();
        let est = Estimator::new(&layout, &settings, &cache);
        let s = scene(&[(0.0, 0.5), (0.0, 1.0)]);
        let mut obs = observe(&layout, &s, 100.0, 96.0, 4.0, 0.0, 2);
        obs.intervals = (0..obs.ranges.len()).map(|i| i..i + 1).collect();
        let gs = est.height_maps(&obs, &[0.0], Fusion::Gs).unwrap();
        let sbys = est.height_maps(&obs, &[0.0], Fusion::Sbys).unwrap();
        assert_eq!(gs, sbys);
    }

    #[test]
    fn noiseless_azimuth_recovery_strategy_i() {
        let layout = Preset::Bumper6x8.layout();
        let settings = small_settings();
        let cache = DictionaryCache::default();
        let est = Estimator::new(&layout, &settings, &cache);
        let az = settings.grid.azimuths[13];
        let s = scene(&[(az, layout.reference_point().z)]);
        let obs = observe(&layout, &s, 100.0, 92.0, 8.0, f64::INFINITY, 3);
        let a = est.estimate_azimuth(&obs, Fusion::Gs, 0.5).unwrap();
        assert_eq!(a.azimuths, vec![az]);
    }

    #[test]
    fn strategy_iii_matches_strategy_i_for_ground_level_targets() {
        let layout = Preset::Bumper6x8.layout();
        let cache = DictionaryCache::default();
        let s1 = small_settings();
        let s3 = EstimatorSettings { strategy: AzimuthStrategy::Iii, ..small_settings() };
        let az = s1.grid.azimuths[6];
        let s = scene(&[(az, 0.0)]);
        let obs = observe(&layout, &s, 100.0, 96.0, 4.0, f64::INFINITY, 4);
        let a1 = Estimator::new(&layout, &s1, &cache).estimate_azimuth(&obs, Fusion::Gs, 0.3).unwrap();
        let cache3 = DictionaryCache::default();
        let a3 = Estimator::new(&layout, &s3, &cache3).estimate_azimuth(&obs, Fusion::Gs, 0.3).unwrap();
        assert_eq!(a1.azimuths, vec![az]);
        assert_eq!(a3.azimuths, a1.azimuths);
    }

    #[test]
    fn separated_targets_resolve_in_azimuth() {
        let layout = Preset::Bumper6x8.layout();
        let settings = small_settings();
        let cache = DictionaryCache::default();
        let est = Estimator::new(&layout, &settings, &cache);
        // Mainlobe of a 10 cm row at 3.9 mm is about 2.2°; its 14 mm element
        // spacing aliases beyond about ±7.8°, so both targets stay inside.
        let (a, b) = (settings.grid.azimuths[5], settings.grid.azimuths[14]);
        let s = scene(&[(a, 0.55), (b, 0.55)]);
        let obs = observe(&layout, &s, 100.0, 92.0, 8.0, 20.0, 5);
        let est_az = est.estimate_azimuth(&obs, Fusion::Gs, 0.3).unwrap();
        assert_eq!(est_az.azimuths.len(), 2, "{:?}", est_az.azimuths);
        let step = settings.grid.azimuths[1] - settings.grid.azimuths[0];
        assert!((est_az.azimuths[0] - a).abs() <= step + 1e-12);
        assert!((est_az.azimuths[1] - b).abs() <= step + 1e-12);
    }

    #[test]
    fn observation_shape_is_checked() {
        let layout = Preset::Bumper6x8.layout();
        let settings = EstimatorSettings::default();
        let cache = DictionaryCache::default();
        let est = Estimator::new(&layout, &settings, &cache);
        let obs = Observation { ranges: vec![100.0], intervals: vec![0..1], y: vec![vec![vec![Complex64::new(1.0, 0.0); 12]]] };
        assert!(est.height_maps(&obs, &[0.0], Fusion::Gs).is_err());
        let obs = Observation { ranges: vec![100.0], intervals: vec![0..1], y: vec![vec![vec![Complex64::new(1.0, 0.0); 48]]] };
        assert!(est.height_maps(&obs, &[], Fusion::Gs).is_err());
    }
}
