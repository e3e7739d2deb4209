//! Near-field steering vectors.
//!
//! Phases are `exp(j 2π d / λ)` with `d` the exact Euclidean path length.
//! Virtual (MIMO) vectors are ordered Tx-major: entry `t * |rx| + q` belongs
//! to Tx `t` and Rx `q`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::geometry::{mirror_point, target_world_position, Position3, TargetSpec};

/// 77 GHz automotive band.
pub const DEFAULT_WAVELENGTH: f64 = 0.0039;

#[derive(Clone, Debug, PartialEq)]
pub struct SteeringVector {
    pub entries: Vec<Complex64>,
    pub wavelength: f64,
}

impl SteeringVector {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Ground reflection coefficient, `|ρ| ≤ 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReflectionCoefficient(Complex64);

impl ReflectionCoefficient {
    pub fn new(value: Complex64) -> Result<Self> {
        if !(value.norm() <= 1.0 + 1e-12) {
            return domain(format!("|rho| must be at most 1, got {}", value.norm()));
        }
        Ok(Self(value))
    }

    /// Phase fixed at 180°, attenuation `a`.
    pub fn inverted(attenuation: f64) -> Result<Self> {
        Self::new(Complex64::new(-attenuation, 0.0))
    }

    pub fn value(&self) -> Complex64 {
        self.0
    }
}

/// Direction cosines along depth, horizontal and vertical axes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpatialFrequencies {
    pub u: f64,
    pub v: f64,
    pub w: f64,
}

pub fn spatial_frequencies(azimuth: f64, elevation: f64) -> SpatialFrequencies {
    let (se, ce) = elevation.sin_cos();
    let (sa, ca) = azimuth.sin_cos();
    SpatialFrequencies { u: ce * ca, v: ce * sa, w: se }
}

/// Unit direction `n(φ, θ)`.
pub fn direction(azimuth: f64, elevation: f64) -> Position3 {
    let f = spatial_frequencies(azimuth, elevation);
    Position3::new(f.u, f.v, f.w)
}

/// Path length in the closed form `r sqrt(1 - 2 nᵀp / r + pᵀp / r²)` for a
/// target at `r n(φ, θ)` and an antenna at `p`.
pub fn closed_form_distance(p: &Position3, azimuth: f64, elevation: f64, range: f64) -> f64 {
    let n = direction(azimuth, elevation);
    range * (1.0 - 2.0 * n.dot(p) / range + p.dot(p) / (range * range)).sqrt()
}

#[inline]
pub(crate) fn phasor(distance: f64, wavenumber: f64) -> Complex64 {
    // Reduce before the trig call; ranges of ~1e2 m at λ ~ 4 mm give
    // arguments of ~1e5 rad.
    let cycles = distance / (2.0 * PI) * wavenumber;
    let frac = cycles - cycles.floor();
    Complex64::from_polar(1.0, 2.0 * PI * frac)
}

fn check_wavelength(wavelength: f64) -> Result<f64> {
    if !(wavelength > 0.0) || !wavelength.is_finite() {
        return domain(format!("wavelength must be positive, got {wavelength}"));
    }
    Ok(2.0 * PI / wavelength)
}

/// One-way phase from antenna `p` to `target`.
pub fn path_phase(p: &Position3, target: &Position3, wavelength: f64) -> Result<Complex64> {
    let k = check_wavelength(wavelength)?;
    let d = p.distance(target);
    if !(d > 0.0) {
        return domain("antenna and target coincide");
    }
    Ok(phasor(d, k))
}

/// Steering of `positions` towards a target at `range · n(φ, θ)`.
pub fn rx_steering(
    positions: &[Position3],
    azimuth: f64,
    elevation: f64,
    range: f64,
    wavelength: f64,
) -> Result<SteeringVector> {
    if positions.is_empty() {
        return domain("steering needs at least one antenna");
    }
    let target = direction(azimuth, elevation).scale(range);
    steering_to(positions, &target, wavelength)
}

/// One-way steering of `positions` towards an explicit target point.
pub fn steering_to(positions: &[Position3], target: &Position3, wavelength: f64) -> Result<SteeringVector> {
    let entries = positions.iter().map(|p| path_phase(p, target, wavelength)).collect::<Result<Vec<_>>>()?;
    Ok(SteeringVector { entries, wavelength })
}

/// Tx-major Kronecker product.
pub fn kron(tx: &[Complex64], rx: &[Complex64]) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(tx.len() * rx.len());
    for a in tx {
        out.extend(rx.iter().map(|b| a * b));
    }
    out
}

/// Virtual MIMO steering `a_Tx ⊗ a_Rx` for a target at `range · n(φ, θ)`.
pub fn virtual_steering(
    tx: &[Position3],
    rx: &[Position3],
    azimuth: f64,
    elevation: f64,
    range: f64,
    wavelength: f64,
) -> Result<SteeringVector> {
    let a_tx = rx_steering(tx, azimuth, elevation, range, wavelength)?;
    let a_rx = rx_steering(rx, azimuth, elevation, range, wavelength)?;
    Ok(SteeringVector { entries: kron(&a_tx.entries, &a_rx.entries), wavelength })
}

/// Virtual steering towards an explicit target point.
pub fn virtual_steering_to(
    tx: &[Position3],
    rx: &[Position3],
    target: &Position3,
    wavelength: f64,
) -> Result<SteeringVector> {
    let a_tx = steering_to(tx, target, wavelength)?;
    let a_rx = steering_to(rx, target, wavelength)?;
    Ok(SteeringVector { entries: kron(&a_tx.entries, &a_rx.entries), wavelength })
}

/// The four path components of the ground-reflection model, each Tx-major.
///
/// `rd` uses the reflected leg on the Tx side, `dr` on the Rx side.
#[derive(Clone, Debug, PartialEq)]
pub struct MultipathComponents {
    pub dd: Vec<Complex64>,
    pub rd: Vec<Complex64>,
    pub dr: Vec<Complex64>,
    pub rr: Vec<Complex64>,
}

impl MultipathComponents {
    /// `a_DD + ρ (a_RD + a_DR) + ρ² a_RR`.
    pub fn combine(&self, rho: Complex64) -> Vec<Complex64> {
        let rho2 = rho * rho;
        (0..self.dd.len()).map(|i| self.dd[i] + rho * (self.rd[i] + self.dr[i]) + rho2 * self.rr[i]).collect()
    }
}

/// Per-antenna direct and reflected one-way phasors.
#[derive(Clone, Debug)]
pub(crate) struct LegPhasors {
    pub tx_direct: Vec<Complex64>,
    pub tx_reflected: Vec<Complex64>,
    pub rx_direct: Vec<Complex64>,
    pub rx_reflected: Vec<Complex64>,
}

pub(crate) fn leg_phasors(tx: &[Position3], rx: &[Position3], target: &Position3, wavelength: f64) -> Result<LegPhasors> {
    if tx.is_empty() || rx.is_empty() {
        return domain("steering needs at least one Tx and one Rx");
    }
    let k = check_wavelength(wavelength)?;
    let legs = |list: &[Position3], mirrored: bool| -> Result<Vec<Complex64>> {
        list.iter()
            .map(|p| {
                let p = if mirrored { mirror_point(*p) } else { *p };
                let d = p.distance(target);
                if !(d > 0.0) {
                    return domain("antenna and target coincide");
                }
                Ok(phasor(d, k))
            })
            .collect()
    };
    Ok(LegPhasors {
        tx_direct: legs(tx, false)?,
        tx_reflected: legs(tx, true)?,
        rx_direct: legs(rx, false)?,
        rx_reflected: legs(rx, true)?,
    })
}

impl LegPhasors {
    /// `(a_Tx,D + ρ a_Tx,R) ⊗ (a_Rx,D + ρ a_Rx,R)`, which expands to the
    /// four-path sum exactly.
    pub fn combine_into(&self, rho: Complex64, out: &mut Vec<Complex64>) {
        out.clear();
        for (td, tr) in self.tx_direct.iter().zip(&self.tx_reflected) {
            let t = td + rho * tr;
            for (rd, rr) in self.rx_direct.iter().zip(&self.rx_reflected) {
                out.push(t * (rd + rho * rr));
            }
        }
    }
}

/// Four path components for a target at an explicit world position.
pub fn multipath_components(
    tx: &[Position3],
    rx: &[Position3],
    target: &Position3,
    wavelength: f64,
) -> Result<MultipathComponents> {
    let l = leg_phasors(tx, rx, target, wavelength)?;
    Ok(MultipathComponents {
        dd: kron(&l.tx_direct, &l.rx_direct),
        rd: kron(&l.tx_reflected, &l.rx_direct),
        dr: kron(&l.tx_direct, &l.rx_reflected),
        rr: kron(&l.tx_reflected, &l.rx_reflected),
    })
}

/// Multipath steering for a target `(φ, h, r)` placed relative to `reference`.
pub fn multipath_steering(
    tx: &[Position3],
    rx: &[Position3],
    target: &TargetSpec,
    reference: &Position3,
    rho: ReflectionCoefficient,
    wavelength: f64,
) -> Result<SteeringVector> {
    let q = target_world_position(target, reference)?;
    multipath_steering_to(tx, rx, &q, rho, wavelength)
}

pub fn multipath_steering_to(
    tx: &[Position3],
    rx: &[Position3],
    target: &Position3,
    rho: ReflectionCoefficient,
    wavelength: f64,
) -> Result<SteeringVector> {
    if target.z < 0.0 {
        return domain("target must lie above the ground plane");
    }
    let legs = leg_phasors(tx, rx, target, wavelength)?;
    let mut entries = Vec::with_capacity(tx.len() * rx.len());
    legs.combine_into(rho.value(), &mut entries);
    Ok(SteeringVector { entries, wavelength })
}
