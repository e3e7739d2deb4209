//! Monte Carlo sweeps over SNR and method.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{GammaValues, Method, ScenarioConfig};
use crate::baselines::{self, envelope_series, monostatic_antenna, SpectralMethod};
use crate::error::{Error, Result};
use crate::geometry::AntennaLayout;
use crate::pipeline::{aggregate_metrics, score_trial, Declaration, DictionaryCache, Estimator, EstimatorSettings, Fusion, Observation, TrialResult};
use crate::synthesis::{random_scene, stream, stream_rng, synthesize_snapshot, Scene, Trajectory};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub snr_db: f64,
    pub method: Method,
    pub pd: f64,
    pub far: f64,
    pub de: f64,
    pub trials: usize,
    /// Compute time spent in the method, summed over trials.
    pub wall_time_s: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct SweepOptions {
    /// Worker threads; 0 uses every available core.
    pub jobs: usize,
    pub timing: bool,
    /// Thresholds taking precedence over the config's.
    pub gamma: GammaValues,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { jobs: 0, timing: false, gamma: GammaValues::default() }
    }
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub rows: Vec<ResultRow>,
    /// Thresholds actually used, after calibration.
    pub gamma: GammaValues,
}

/// Everything a trial needs, resolved once from the config.
struct Scenario<'c> {
    cfg: &'c ScenarioConfig,
    layout: AntennaLayout,
    settings: EstimatorSettings,
    trajectory: Trajectory,
    cache: DictionaryCache,
}

fn fusion(m: Method) -> Fusion {
    if m == Method::Gs { Fusion::Gs } else { Fusion::Sbys }
}

/// Nearest-rank quantile.
fn quantile(mut samples: Vec<f64>, p: f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let rank = ((p * samples.len() as f64).ceil() as usize).clamp(1, samples.len());
    samples[rank - 1]
}

fn truth_azimuths(scene: &Scene) -> Vec<f64> {
    let mut a: Vec<f64> = scene.scatterers.iter().map(|s| s.azimuth).collect();
    a.sort_by(f64::total_cmp);
    a.dedup();
    a
}

impl<'c> Scenario<'c> {
    fn new(cfg: &'c ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            layout: cfg.layout()?,
            settings: cfg.estimator_settings()?,
            trajectory: cfg.trajectory()?,
            cache: DictionaryCache::default(),
        })
    }

    fn estimator(&self) -> Estimator<'_> {
        Estimator::new(&self.layout, &self.settings, &self.cache)
    }

    fn scene(&self, tag: u64, trial: usize) -> Result<Scene> {
        random_scene(&self.cfg.scene_config(), &self.settings.grid, &mut stream_rng(self.cfg.seed, tag, &[trial as u64]))
    }

    /// Snapshots along the trajectory; the noise stream of each
    /// (trial, aperture, point) is independent of the SNR.
    fn observe(&self, scene: &Scene, tag: u64, trial: usize, snr_db: f64) -> Result<Observation> {
        let reference = self.layout.reference_point();
        let t = &self.trajectory;
        let y = t
            .ranges
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                self.layout
                    .apertures()
                    .iter()
                    .enumerate()
                    .map(|(l, a)| {
                        let mut rng = stream_rng(self.cfg.seed, tag, &[trial as u64, l as u64, i as u64]);
                        Ok(synthesize_snapshot(scene, a, &reference, i, r, self.cfg.wavelength, snr_db, &mut rng)?.y)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Observation { ranges: t.ranges.clone(), intervals: t.intervals(), y })
    }

    fn sparse(&self, m: Method, obs: &Observation, scene: &Scene, gamma: &GammaValues) -> Result<Vec<Declaration>> {
        let est = self.estimator();
        let gh = gamma.height(m).ok_or_else(|| Error::Config(format!("no height threshold for `{}`", m.tag())))?;
        let azimuths = if self.cfg.estimator.azimuth_stage {
            let ga = gamma.azimuth(m).ok_or_else(|| Error::Config(format!("no azimuth threshold for `{}`", m.tag())))?;
            est.estimate_azimuth(obs, fusion(m), ga)?.azimuths
        } else {
            truth_azimuths(scene)
        };
        if azimuths.is_empty() {
            return Ok(Vec::new());
        }
        est.estimate_height(obs, &azimuths, fusion(m), gh)
    }

    /// Envelope baseline: one declaration at the spectral peak of a
    /// monostatic antenna's received power along the trajectory.
    fn baseline(&self, m: Method, scene: &Scene, trial: usize, snr_db: f64) -> Result<Vec<Declaration>> {
        let b = &self.cfg.baseline;
        let antenna = monostatic_antenna(b.antenna_height)?;
        let reference = antenna.tx[0];
        let snr = if b.snr_handicap { snr_db + 10.0 * (self.layout.apertures()[0].virtual_channels() as f64).log10() } else { snr_db };
        let samples = self
            .trajectory
            .ranges
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let mut rng = stream_rng(self.cfg.seed, stream::ENVELOPE, &[trial as u64, i as u64]);
                Ok((r, synthesize_snapshot(scene, &antenna, &reference, i, r, self.cfg.wavelength, snr, &mut rng)?.y[0]))
            })
            .collect::<Result<Vec<_>>>()?;
        let series = envelope_series(&samples, b.antenna_height, b.resample_n.unwrap_or(samples.len()))?;
        let method = if m == Method::Music { SpectralMethod::Music } else { SpectralMethod::Burg };
        let azimuth = scene.scatterers.first().map_or(0.0, |s| s.azimuth);
        match baselines::estimate_height(&series, method, b, &self.settings.grid.heights, self.cfg.wavelength) {
            Ok(e) => Ok(vec![Declaration { azimuth, height: e.height, magnitude: 1.0, interval: None }]),
            // A rank-deficient envelope yields no declaration.
            Err(Error::Numerical(_)) => Ok(Vec::new()),
            Err(e) => Err(e),
        }
    }

    fn trial(&self, trial: usize, snr_db: f64, gamma: &GammaValues) -> Result<Vec<(TrialResult, f64)>> {
        let scene = self.scene(stream::SCENE, trial)?;
        let rules = self.cfg.scoring_rules();
        let needs_obs = self.cfg.methods.iter().any(Method::is_sparse);
        let obs = if needs_obs { Some(self.observe(&scene, stream::SNAPSHOT, trial, snr_db)?) } else { None };
        self.cfg
            .methods
            .iter()
            .map(|&m| {
                let start = Instant::now();
                let decls = match (m.is_sparse(), &obs) {
                    (true, Some(obs)) => self.sparse(m, obs, &scene, gamma)?,
                    _ => self.baseline(m, &scene, trial, snr_db)?,
                };
                let r = score_trial(&decls, &scene, &rules, &self.settings.grid.azimuths)?;
                Ok((r, start.elapsed().as_secs_f64()))
            })
            .collect()
    }

    /// Noise-only map maxima for one calibration trial: `(height, azimuth)`.
    fn calibration_sample(&self, m: Method, trial: usize) -> Result<(f64, Option<f64>)> {
        let scene = self.scene(stream::CALIBRATION, trial)?;
        let empty = Scene { scatterers: Vec::new(), rho_true: scene.rho_true };
        let obs = self.observe(&empty, stream::CALIBRATION, trial, 0.0)?;
        let est = self.estimator();
        let height = est.height_maps(&obs, &truth_azimuths(&scene), fusion(m))?.iter().map(|h| h.max()).fold(0.0, f64::max);
        let azimuth = if self.cfg.estimator.azimuth_stage {
            let a = est.estimate_azimuth(&obs, fusion(m), f64::INFINITY)?;
            Some(a.map.max() / a.measurements as f64)
        } else {
            None
        };
        Ok((height, azimuth))
    }

    /// Fills every missing threshold of the enabled sparse methods.
    fn calibrate(&self, known: &GammaValues) -> Result<GammaValues> {
        let mut out = known.clone();
        let g = &self.cfg.gamma;
        for &m in self.cfg.methods.iter().filter(|m| m.is_sparse()) {
            let need_h = known.height(m).is_none();
            let need_a = self.cfg.estimator.azimuth_stage && known.azimuth(m).is_none();
            if !need_h && !need_a {
                continue;
            }
            let samples = (0..g.calibration_trials).into_par_iter().map(|t| self.calibration_sample(m, t)).collect::<Result<Vec<_>>>()?;
            if need_h {
                out.set_height(m, quantile(samples.iter().map(|s| s.0).collect(), g.percentile));
            }
            if need_a {
                out.set_azimuth(m, quantile(samples.iter().filter_map(|s| s.1).collect(), g.percentile));
            }
        }
        Ok(out)
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| Error::Numerical(format!("thread pool: {e}")))
}

/// Noise-only threshold calibration for every sparse method lacking a
/// threshold in `known` or the config.
pub fn calibrate_gamma(cfg: &ScenarioConfig, jobs: usize, known: &GammaValues) -> Result<GammaValues> {
    let scenario = Scenario::new(cfg)?;
    pool(jobs)?.install(|| scenario.calibrate(&known.or(&cfg.gamma.values())))
}

/// Runs every (SNR, method) cell. `sink` receives each row as soon as its
/// SNR completes; rows come out in config order for any worker count.
pub fn run_sweep(cfg: &ScenarioConfig, opts: &SweepOptions, sink: &mut dyn FnMut(&ResultRow) -> Result<()>) -> Result<SweepReport> {
    let scenario = Scenario::new(cfg)?;
    let pool = pool(opts.jobs)?;
    let gamma = pool.install(|| scenario.calibrate(&opts.gamma.or(&cfg.gamma.values())))?;
    let mut rows = Vec::with_capacity(cfg.snr_db.len() * cfg.methods.len());
    for &snr in &cfg.snr_db {
        let per_trial = pool.install(|| (0..cfg.trials).into_par_iter().map(|t| scenario.trial(t, snr, &gamma)).collect::<Result<Vec<_>>>())?;
        for (k, &method) in cfg.methods.iter().enumerate() {
            let results: Vec<TrialResult> = per_trial.iter().map(|r| r[k].0.clone()).collect();
            let m = aggregate_metrics(&results, cfg.scoring.far_mode)?;
            let time = per_trial.iter().map(|r| r[k].1).sum::<f64>();
            let row = ResultRow { snr_db: snr, method, pd: m.pd, far: m.far, de: m.de, trials: m.trials, wall_time_s: opts.timing.then_some(time) };
            sink(&row)?;
            rows.push(row);
        }
    }
    Ok(SweepReport { rows, gamma })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::default();
        cfg.trajectory.start = 100.0;
        cfg.trajectory.end = 84.0;
        cfg.trials = 3;
        cfg.snr_db = vec![f64::INFINITY];
        cfg.methods = vec![Method::Gs];
        cfg.gamma.height_gs = Some(0.005);
        cfg
    }

    #[test]
    fn quantile_is_nearest_rank() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(quantile(v.clone(), 0.99), 99.0);
        assert_eq!(quantile(v.clone(), 0.5), 50.0);
        assert_eq!(quantile(vec![3.0], 0.99), 3.0);
    }

    #[test]
    fn one_snr_one_method_gives_one_row() {
        let mut cfg = small();
        cfg.trials = 1;
        let mut seen = 0;
        let rep = run_sweep(&cfg, &SweepOptions { jobs: 1, ..Default::default() }, &mut |_| {
            seen += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!((rep.rows.len(), seen), (1, 1));
        assert_eq!(rep.rows[0].wall_time_s, None);
    }

    #[test]
    fn noiseless_sweep_detects() {
        let rep = run_sweep(&small(), &SweepOptions { jobs: 2, ..Default::default() }, &mut |_| Ok(())).unwrap();
        let r = &rep.rows[0];
        assert_eq!((r.pd, r.far, r.de), (1.0, 0.0, 1.0));
    }

    #[test]
    fn rows_do_not_depend_on_workers() {
        let mut cfg = small();
        cfg.snr_db = vec![-5.0, 5.0];
        cfg.methods = vec![Method::Gs, Method::Sbys, Method::Music];
        cfg.gamma.calibration_trials = 4;
        cfg.gamma.height_gs = None;
        let a = run_sweep(&cfg, &SweepOptions { jobs: 1, ..Default::default() }, &mut |_| Ok(())).unwrap();
        let b = run_sweep(&cfg, &SweepOptions { jobs: 3, ..Default::default() }, &mut |_| Ok(())).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.gamma, b.gamma);
        assert!(a.gamma.height_gs.is_some() && a.gamma.height_sbys.is_some());
        assert_eq!(a.rows.len(), 6);
    }

    #[test]
    fn calibration_skips_known_thresholds() {
        let cfg = small();
        let g = calibrate_gamma(&cfg, 1, &GammaValues::default()).unwrap();
        assert_eq!(g.height_gs, Some(0.005));
        assert_eq!(g.azimuth_gs, None);
    }
}
