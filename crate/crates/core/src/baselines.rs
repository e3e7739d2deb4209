//! Single-antenna height estimators from the ground-reflection interference
//! envelope.
//!
//! A monostatic antenna at height `h_a` sees a path difference of about
//! `2 h_a h_t / R` between the direct and the ground-reflected leg, so the
//! received power oscillates in `1/R` with frequency `f = 2 h_a h_t / λ`
//! (cycles per unit of inverse range). The spectral peak of the envelope maps
//! back to a height through [`peak_to_height`].

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::geometry::{CoherentAperture, Position3};

/// Power samples on a uniform inverse-range grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSeries {
    pub samples: Vec<f64>,
    /// Strictly increasing, uniformly spaced `1/R` values.
    pub abscissa: Vec<f64>,
    pub antenna_height: f64,
}

impl EnvelopeSeries {
    pub fn spacing(&self) -> f64 {
        (self.abscissa[self.abscissa.len() - 1] - self.abscissa[0]) / (self.abscissa.len() - 1) as f64
    }
}

/// Monostatic antenna (co-located Tx and Rx) at `height` above the ground.
pub fn monostatic_antenna(height: f64) -> Result<CoherentAperture> {
    let p = Position3::new(0.0, 0.0, height);
    CoherentAperture::new("monostatic", vec![p], vec![p])
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let i = xs.partition_point(|v| *v <= x).clamp(1, xs.len() - 1);
    let (x0, x1) = (xs[i - 1], xs[i]);
    let t = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
    ys[i - 1] + t * (ys[i] - ys[i - 1])
}

/// `|y|²` per trajectory point, linearly resampled onto `resample_n` uniform
/// inverse-range points.
pub fn envelope_series(samples: &[(f64, Complex64)], antenna_height: f64, resample_n: usize) -> Result<EnvelopeSeries> {
    if samples.len() < 4 {
        return domain(format!("envelope needs at least 4 points, got {}", samples.len()));
    }
    if resample_n < 4 {
        return domain("resampled envelope needs at least 4 points");
    }
    if samples.iter().any(|(r, _)| !(*r > 0.0)) {
        return domain("ranges must be positive");
    }
    let mut pts: Vec<(f64, f64)> = samples.iter().map(|(r, y)| (1.0 / r, y.norm_sqr())).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return domain("ranges must be distinct");
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    let (lo, hi) = (xs[0], xs[xs.len() - 1]);
    let abscissa: Vec<f64> = (0..resample_n).map(|i| lo + (hi - lo) * i as f64 / (resample_n - 1) as f64).collect();
    let samples = abscissa.iter().map(|&x| interpolate(&xs, &ys, x)).collect();
    Ok(EnvelopeSeries { samples, abscissa, antenna_height })
}

fn demeaned(x: &[f64]) -> Vec<f64> {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| v - m).collect()
}

/// Envelope frequency of a scatterer at `height`.
pub fn height_to_frequency(height: f64, wavelength: f64, antenna_height: f64) -> f64 {
    2.0 * antenna_height * height / wavelength
}

/// `h = f λ / (2 h_a)`.
pub fn peak_to_height(frequency: f64, wavelength: f64, antenna_height: f64) -> Result<f64> {
    if !(frequency >= 0.0) || !(antenna_height > 0.0) || !(wavelength > 0.0) {
        return domain("peak_to_height needs f >= 0, h_a > 0 and λ > 0");
    }
    Ok(frequency * wavelength / (2.0 * antenna_height))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub frequencies: Vec<f64>,
    pub power: Vec<f64>,
    /// A reflection coefficient reached the unit circle and was clamped.
    pub degenerate: bool,
}

impl Spectrum {
    pub fn peak(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, p) in self.power.iter().enumerate() {
            if best.is_none_or(|b| *p > self.power[b]) {
                best = Some(i);
            }
        }
        best
    }
}

/// Burg AR fit: returns `(a, noise power, degenerate)` with `a[0] = 1`.
pub fn burg_coefficients(x: &[f64], order: usize) -> Result<(Vec<f64>, f64, bool)> {
    let n = x.len();
    if order == 0 || 2 * order >= n {
        return domain(format!("Burg order {order} must lie in 1..{}", n.div_ceil(2)));
    }
    let mut f = x.to_vec();
    let mut b = x.to_vec();
    let mut a = vec![1.0];
    let mut e = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let mut degenerate = false;
    for m in 1..=order {
        let (mut num, mut den) = (0.0, 0.0);
        for i in m..n {
            num += f[i] * b[i - 1];
            den += f[i] * f[i] + b[i - 1] * b[i - 1];
        }
        let mut k = if den > 0.0 { -2.0 * num / den } else { 0.0 };
        if k.abs() >= 1.0 {
            k = k.signum() * (1.0 - 1e-12);
            degenerate = true;
        }
        let mut next = a.clone();
        next.push(0.0);
        for i in 1..=m {
            next[i] += k * a.get(m - i).copied().unwrap_or(0.0);
        }
        a = next;
        for i in (m..n).rev() {
            let fi = f[i];
            f[i] = fi + k * b[i - 1];
            b[i] = b[i - 1] + k * fi;
        }
        e *= 1.0 - k * k;
    }
    Ok((a, e, degenerate))
}

fn steering_sum(coeffs: &[f64], omega: f64) -> Complex64 {
    coeffs.iter().enumerate().map(|(k, c)| c * Complex64::from_polar(1.0, -omega * k as f64)).sum()
}

/// Burg power spectral density at the given envelope frequencies.
pub fn burg_spectrum(series: &EnvelopeSeries, order: usize, frequencies: &[f64]) -> Result<Spectrum> {
    let x = demeaned(&series.samples);
    let (a, e, degenerate) = burg_coefficients(&x, order)?;
    let dx = series.spacing();
    let power = frequencies
        .iter()
        .map(|f| e / steering_sum(&a, std::f64::consts::TAU * f * dx).norm_sqr().max(f64::MIN_POSITIVE))
        .collect();
    Ok(Spectrum { frequencies: frequencies.to_vec(), power, degenerate })
}

/// MUSIC pseudospectrum from the Hankel covariance of the demeaned series.
pub fn music_spectrum(series: &EnvelopeSeries, subspace_dim: usize, hankel_rows: usize, frequencies: &[f64]) -> Result<Spectrum> {
    let n = series.samples.len();
    if subspace_dim == 0 {
        return domain("MUSIC subspace dimension must be positive");
    }
    if hankel_rows <= subspace_dim || hankel_rows >= n {
        return domain(format!("hankel_rows must lie in {}..{n}", subspace_dim + 1));
    }
    let x = demeaned(&series.samples);
    let cols = n - hankel_rows + 1;
    let h = DMatrix::from_fn(hankel_rows, cols, |i, j| x[i + j]);
    let cov = (&h * h.transpose()) / cols as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..hankel_rows).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let top = eig.eigenvalues[order[0]];
    let rank = order.iter().filter(|&&i| eig.eigenvalues[i] > 1e-10 * top).count();
    if !(top > 0.0) || rank < subspace_dim {
        return Err(Error::Numerical(format!("envelope covariance has rank {rank} < subspace dimension {subspace_dim}")));
    }
    let signal: Vec<_> = order[..subspace_dim].iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
    let dx = series.spacing();
    let power = frequencies
        .iter()
        .map(|f| {
            let omega = std::f64::consts::TAU * f * dx;
            // ‖P_noise e‖² = ‖e‖² − ‖P_signal e‖²
            let captured: f64 = signal
                .iter()
                .map(|v| v.iter().enumerate().map(|(k, c)| c * Complex64::from_polar(1.0, omega * k as f64)).sum::<Complex64>().norm_sqr())
                .sum();
            1.0 / (hankel_rows as f64 - captured).max(1e-12)
        })
        .collect();
    Ok(Spectrum { frequencies: frequencies.to_vec(), power, degenerate: false })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectralMethod {
    Music,
    Burg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSettings {
    pub antenna_height: f64,
    pub burg_order: usize,
    pub music_subspace_dim: usize,
    /// Defaults to half the series length.
    pub music_hankel_rows: Option<usize>,
    /// Boost the baseline SNR by `10·log10(virtual channels)` of the compared array.
    pub snr_handicap: bool,
    /// Defaults to the trajectory length.
    pub resample_n: Option<usize>,
}

impl Default for BaselineSettings {
    fn default() -> Self {
        Self { antenna_height: 1.1, burg_order: 4, music_subspace_dim: 2, music_hankel_rows: None, snr_handicap: false, resample_n: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaselineEstimate {
    pub height: f64,
    pub frequency: f64,
    pub degenerate: bool,
}

/// Height of the strongest spectral peak among the candidate heights.
pub fn estimate_height(
    series: &EnvelopeSeries,
    method: SpectralMethod,
    settings: &BaselineSettings,
    heights: &[f64],
    wavelength: f64,
) -> Result<BaselineEstimate> {
    let candidates: Vec<f64> = heights.iter().copied().filter(|h| *h > 0.0).collect();
    if candidates.is_empty() {
        return domain("no positive candidate heights");
    }
    let freqs: Vec<f64> = candidates.iter().map(|h| height_to_frequency(*h, wavelength, series.antenna_height)).collect();
    let spec = match method {
        SpectralMethod::Burg => burg_spectrum(series, settings.burg_order, &freqs)?,
        SpectralMethod::Music => {
            let rows = settings.music_hankel_rows.unwrap_or(series.samples.len() / 2);
            music_spectrum(series, settings.music_subspace_dim, rows, &freqs)?
        }
    };
    let i = spec.peak().expect("nonempty spectrum");
    Ok(BaselineEstimate { height: peak_to_height(freqs[i], wavelength, series.antenna_height)?, frequency: freqs[i], degenerate: spec.degenerate })
}
