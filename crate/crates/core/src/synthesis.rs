//! Ground-truth scenes, trajectories and noisy incoherent snapshots.

use std::ops::Range;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dictionary::{nearest_index, HypothesisGrid};
use crate::error::{domain, Result};
use crate::geometry::{target_world_position, CoherentAperture, Position3, TargetSpec};
use crate::steering::leg_phasors;

/// Point scatterer at the scene's current slant range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub azimuth: f64,
    pub height: f64,
    pub amplitude: Complex64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub scatterers: Vec<Scatterer>,
    pub rho_true: Complex64,
}

impl Scene {
    /// Index of the highest scatterer; ties go to the first listed.
    pub fn highest(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, s) in self.scatterers.iter().enumerate() {
            if best.is_none_or(|b| s.height > self.scatterers[b].height) {
                best = Some(i);
            }
        }
        best
    }
}

/// Slant ranges along the approach, split into filtering intervals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub ranges: Vec<f64>,
    pub points_per_interval: usize,
}

impl Trajectory {
    pub fn interval_count(&self) -> usize {
        self.ranges.len() / self.points_per_interval
    }

    pub fn intervals(&self) -> Vec<Range<usize>> {
        (0..self.interval_count())
            .map(|j| j * self.points_per_interval..(j + 1) * self.points_per_interval)
            .collect()
    }
}

fn whole(x: f64) -> Option<usize> {
    let r = x.round();
    ((x - r).abs() < 1e-9 && r >= 1.0).then_some(r as usize)
}

/// Ranges `start, start − step, …` down to (excluding) `end`, grouped into
/// intervals of `interval` meters.
pub fn make_trajectory(start: f64, end: f64, interval: f64, step: f64) -> Result<Trajectory> {
    if !(start > end && end > 0.0) || !start.is_finite() {
        return domain(format!("trajectory needs start > end > 0, got {start} -> {end}"));
    }
    if !(interval > 0.0 && step > 0.0) {
        return domain("interval and step must be positive");
    }
    let Some(_) = whole((start - end) / interval) else {
        return domain(format!("interval {interval} does not divide the span {}", start - end));
    };
    let Some(per) = whole(interval / step) else {
        return domain(format!("step {step} does not divide the interval {interval}"));
    };
    let n = whole((start - end) / step).expect("step divides span");
    Ok(Trajectory { ranges: (0..n).map(|i| start - step * i as f64).collect(), points_per_interval: per })
}

/// One coherent measurement of one aperture at one trajectory point.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub aperture_id: String,
    pub point: usize,
    pub range: f64,
    pub snr_db: f64,
    pub noise_variance: f64,
    pub y: Vec<Complex64>,
    initial_phase: f64,
}

/// `y = e^{jψ₀} Σ s_k a(φ_k, h_k, r, ρ) + n`.
///
/// The draws are ψ₀ followed by unit-variance complex noise, which is then
/// scaled, so the same stream yields matched data at every SNR. An infinite
/// SNR gives a noiseless snapshot.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_snapshot<R: Rng + ?Sized>(
    scene: &Scene,
    aperture: &CoherentAperture,
    reference: &Position3,
    point: usize,
    range: f64,
    wavelength: f64,
    snr_db: f64,
    rng: &mut R,
) -> Result<Snapshot> {
    if snr_db.is_nan() {
        return domain("snr must be a number");
    }
    let n = aperture.virtual_channels();
    let mut clean = vec![Complex64::new(0.0, 0.0); n];
    let mut buf = Vec::with_capacity(n);
    for s in &scene.scatterers {
        let q = target_world_position(&TargetSpec::new(s.azimuth, s.height, range), reference)?;
        leg_phasors(&aperture.tx, &aperture.rx, &q, wavelength)?.combine_into(scene.rho_true, &mut buf);
        for (acc, v) in clean.iter_mut().zip(&buf) {
            *acc += s.amplitude * v;
        }
    }
    let power = if scene.scatterers.is_empty() {
        1.0
    } else {
        scene.scatterers.iter().map(|s| s.amplitude.norm_sqr()).sum::<f64>() / scene.scatterers.len() as f64
    };
    let noise_variance = power / 10f64.powf(snr_db / 10.0);
    let sigma = (noise_variance / 2.0).sqrt();
    let initial_phase = rng.random::<f64>() * std::f64::consts::TAU;
    let rot = Complex64::from_polar(1.0, initial_phase);
    let y = clean
        .iter()
        .map(|v| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            rot * v + Complex64::new(re, im) * sigma
        })
        .collect();
    Ok(Snapshot { aperture_id: aperture.id.clone(), point, range, snr_db, noise_variance, y, initial_phase })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SceneMode {
    /// All targets share one azimuth bin (vertical-only study).
    #[default]
    SameAzimuth,
    /// Independent azimuths within the field of view.
    #[serde(rename = "2d")]
    TwoD,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub targets: usize,
    pub mode: SceneMode,
    pub height_min: f64,
    pub height_max: f64,
    /// Snap azimuth and height to the hypothesis grids.
    pub on_grid: bool,
    pub rho_true: Complex64,
    /// Fixed azimuth (radians) of the first target instead of a random draw.
    pub azimuth: Option<f64>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self { targets: 1, mode: SceneMode::SameAzimuth, height_min: 0.1, height_max: 1.35, on_grid: true, rho_true: Complex64::new(-0.6, 0.0), azimuth: None }
    }
}

/// Random scene; azimuths are drawn over the grid's field of view.
pub fn random_scene<R: Rng + ?Sized>(cfg: &SceneConfig, grid: &HypothesisGrid, rng: &mut R) -> Result<Scene> {
    if !(1..=2).contains(&cfg.targets) {
        return domain(format!("scenes hold 1 or 2 targets, got {}", cfg.targets));
    }
    if !(cfg.height_max >= cfg.height_min && cfg.height_min >= 0.0) {
        return domain("invalid target height range");
    }
    let (az_min, az_max) = (grid.azimuths[0], grid.azimuths[grid.azimuths.len() - 1]);
    let draw_azimuth = |rng: &mut R| {
        let a = az_min + (az_max - az_min) * rng.random::<f64>();
        if cfg.on_grid { grid.azimuths[nearest_index(&grid.azimuths, a)] } else { a }
    };
    let shared = match cfg.azimuth {
        Some(a) if cfg.on_grid => grid.azimuths[nearest_index(&grid.azimuths, a)],
        Some(a) => a,
        None => draw_azimuth(rng),
    };
    let mut scatterers = Vec::with_capacity(cfg.targets);
    for k in 0..cfg.targets {
        let azimuth = match cfg.mode {
            SceneMode::SameAzimuth => shared,
            SceneMode::TwoD if k == 0 => shared,
            SceneMode::TwoD => draw_azimuth(rng),
        };
        let mut height = cfg.height_min + (cfg.height_max - cfg.height_min) * rng.random::<f64>();
        if cfg.on_grid {
            height = grid.heights[nearest_index(&grid.heights, height)];
        }
        let amplitude = Complex64::from_polar(1.0, rng.random::<f64>() * std::f64::consts::TAU);
        scatterers.push(Scatterer { azimuth, height, amplitude });
    }
    Ok(Scene { scatterers, rho_true: cfg.rho_true })
}

/// Stream tags for [`stream_rng`].
pub mod stream {
    pub const SCENE: u64 = 0x5343_454e_45;
    pub const SNAPSHOT: u64 = 0x534e_4150;
    pub const ENVELOPE: u64 = 0x454e_5645_4c;
    pub const CALIBRATION: u64 = 0x4341_4c49_42;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent ChaCha8 stream for `(master seed, tag, indices…)`.
///
/// Streams depend only on these coordinates, never on scheduling, so results
/// are reproducible for any worker count.
pub fn stream_rng(master: u64, tag: u64, indices: &[u64]) -> ChaCha8Rng {
    let mut h = splitmix64(master ^ splitmix64(tag));
    for &i in indices {
        h = splitmix64(h ^ i);
    }
    ChaCha8Rng::seed_from_u64(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::{height_dictionary, LabelOption};
    use crate::geometry::Preset;
    use crate::steering::DEFAULT_WAVELENGTH;

    fn one_target(height: f64) -> Scene {
        Scene {
            scatterers: vec![Scatterer { azimuth: 0.0, height, amplitude: Complex64::new(1.0, 0.0) }],
            rho_true: Complex64::new(-0.6, 0.0),
        }
    }

    #[test]
    fn default_trajectory() {
        let t = make_trajectory(160.0, 80.0, 8.0, 1.0).unwrap();
        assert_eq!(t.ranges.len(), 80);
        assert_eq!(t.interval_count(), 10);
        assert_eq!(t.ranges[0], 160.0);
        assert_eq!(t.ranges[79], 81.0);
        assert_eq!(t.intervals()[1], 8..16);
        assert_eq!(t.ranges[8], 152.0);
        assert!(t.ranges.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn degenerate_trajectories() {
        assert_eq!(make_trajectory(160.0, 80.0, 80.0, 1.0).unwrap().interval_count(), 1);
        let t = make_trajectory(160.0, 80.0, 8.0, 8.0).unwrap();
        assert_eq!(t.points_per_interval, 1);
        assert_eq!(t.interval_count(), 10);
        assert!(make_trajectory(160.0, 80.0, 7.0, 1.0).is_err());
        assert!(make_trajectory(80.0, 160.0, 8.0, 1.0).is_err());
        assert!(make_trajectory(160.0, 80.0, 8.0, 3.0).is_err());
    }

    #[test]
    fn noiseless_snapshot_is_a_rotated_column() {
        let a = Preset::Bumper6x8.aperture();
        let reference = a.centroid();
        let scene = one_target(0.5);
        let mut rng = stream_rng(1, stream::SNAPSHOT, &[0]);
        let s = synthesize_snapshot(&scene, &a, &reference, 0, 100.0, DEFAULT_WAVELENGTH, f64::INFINITY, &mut rng).unwrap();
        let d = height_dictionary(&[0.0], &[0.5], &[scene.rho_true], &a, &reference, 100.0, DEFAULT_WAVELENGTH, LabelOption::A).unwrap();
        let col = d.column(0);
        let ratio = s.y[0] / col[0];
        assert!((ratio.norm() - 1.0).abs() < 1e-12);
        for (y, c) in s.y.iter().zip(&col) {
            assert!((y - ratio * c).norm() < 1e-12);
        }
    }

    #[test]
    fn identical_seeds_identical_snapshots() {
        let a = Preset::Roof3x4.aperture();
        let reference = a.centroid();
        let scene = one_target(0.7);
        let draw = || {
            let mut rng = stream_rng(42, stream::SNAPSHOT, &[3, 0, 5]);
            synthesize_snapshot(&scene, &a, &reference, 5, 120.0, DEFAULT_WAVELENGTH, 0.0, &mut rng).unwrap()
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn empirical_snr_matches_request() {
        let a = Preset::Bumper6x8.aperture();
        let reference = a.centroid();
        let scene = Scene { scatterers: vec![], rho_true: Complex64::new(-0.6, 0.0) };
        let mut rng = stream_rng(7, stream::SNAPSHOT, &[]);
        let snr = 5.0;
        let (mut acc, mut n) = (0.0, 0usize);
        while n < 10_000 {
            let s = synthesize_snapshot(&scene, &a, &reference, 0, 100.0, DEFAULT_WAVELENGTH, snr, &mut rng).unwrap();
            acc += s.y.iter().map(|v| v.norm_sqr()).sum::<f64>();
            n += s.y.len();
        }
        let measured = 10.0 * (1.0 / (acc / n as f64)).log10();
        assert!((measured - snr).abs() < 0.2, "{measured}");
    }

    #[test]
    fn initial_phases_are_independent() {
        let a = Preset::Roof3x4.aperture();
        let reference = a.centroid();
        let scene = one_target(0.5);
        let mut acc = Complex64::new(0.0, 0.0);
        let n = 10_000;
        for trial in 0..n {
            let draw = |ap: u64| {
                let mut rng = stream_rng(9, stream::SNAPSHOT, &[trial, ap, 0]);
                synthesize_snapshot(&scene, &a, &reference, 0, 100.0, DEFAULT_WAVELENGTH, 0.0, &mut rng).unwrap().initial_phase
            };
            acc += Complex64::from_polar(1.0, draw(0) - draw(1));
        }
        assert!((acc / n as f64).norm() < 0.04);
    }

    #[test]
    fn scene_bounds_and_modes() {
        let grid = HypothesisGrid::default();
        let mut rng = stream_rng(3, stream::SCENE, &[]);
        let s = random_scene(&SceneConfig::default(), &grid, &mut rng).unwrap();
        assert_eq!(s.scatterers.len(), 1);
        assert!((0.1..=1.35).contains(&s.scatterers[0].height));
        let two = SceneConfig { targets: 2, ..SceneConfig::default() };
        for _ in 0..50 {
            let s = random_scene(&two, &grid, &mut rng).unwrap();
            assert_eq!(s.scatterers[0].azimuth, s.scatterers[1].azimuth);
            assert!(grid.heights.contains(&s.scatterers[1].height));
        }
        assert!(random_scene(&SceneConfig { targets: 3, ..SceneConfig::default() }, &grid, &mut rng).is_err());
    }

    #[test]
    fn heights_are_uniform() {
        let grid = HypothesisGrid::default();
        let cfg = SceneConfig { on_grid: false, ..SceneConfig::default() };
        let mut rng = stream_rng(11, stream::SCENE, &[]);
        let mut h: Vec<f64> = (0..10_000).map(|_| random_scene(&cfg, &grid, &mut rng).unwrap().scatterers[0].height).collect();
        h.sort_by(f64::total_cmp);
        let n = h.len() as f64;
        let d = h
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let f = (x - 0.1) / 1.25;
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        // Kolmogorov-Smirnov critical value at the 1 % level.
        assert!(d < 1.628 / n.sqrt(), "D = {d}");
    }

    #[test]
    fn highest_prefers_first_on_ties() {
        let mut s = one_target(0.5);
        s.scatterers.push(Scatterer { azimuth: 0.1, height: 0.5, amplitude: Complex64::new(1.0, 0.0) });
        assert_eq!(s.highest(), Some(0));
        s.scatterers[1].height = 0.6;
        assert_eq!(s.highest(), Some(1));
    }

    #[test]
    fn streams_differ() {
        let a: u64 = stream_rng(1, 2, &[3]).random();
        let b: u64 = stream_rng(1, 2, &[4]).random();
        let c: u64 = stream_rng(1, 2, &[3]).random();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }
}
