//! World frame, antenna layouts and target placement.
//!
//! The ground plane is `z = 0`, the vehicle boresight is `+x` and `y` is the
//! horizontal axis across the vehicle. A layout's reference point is the
//! centroid of all of its physical antennas; slant ranges are measured from it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Cartesian position in meters.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Position3 {
    /// Depth along boresight.
    pub x: f64,
    /// Horizontal offset.
    pub y: f64,
    /// Height above the ground plane.
    pub z: f64,
}

impl Position3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn sub(&self, other: &Position3) -> Position3 {
        Position3::new(self.x - other.x, self.y - other.y, self.z - other.z)
    }

    pub fn add(&self, other: &Position3) -> Position3 {
        Position3::new(self.x + other.x, self.y + other.y, self.z + other.z)
    }

    pub fn scale(&self, s: f64) -> Position3 {
        Position3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn dot(&self, other: &Position3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(&self, other: &Position3) -> f64 {
        self.sub(other).norm()
    }
}

/// Reflects a point through the ground plane.
pub fn mirror_point(p: Position3) -> Position3 {
    Position3::new(p.x, p.y, -p.z)
}

fn centroid(points: impl IntoIterator<Item = Position3>) -> Position3 {
    let mut sum = Position3::default();
    let mut n = 0usize;
    for p in points {
        sum = sum.add(&p);
        n += 1;
    }
    sum.scale(1.0 / n.max(1) as f64)
}

/// A set of Tx and Rx antennas whose relative phases are measured.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherentAperture {
    pub id: String,
    pub tx: Vec<Position3>,
    pub rx: Vec<Position3>,
}

impl CoherentAperture {
    pub fn new(id: impl Into<String>, tx: Vec<Position3>, rx: Vec<Position3>) -> Result<Self> {
        let id = id.into();
        if tx.is_empty() || rx.is_empty() {
            return Err(Error::InvalidLayout(format!("aperture `{id}` needs at least one Tx and one Rx")));
        }
        for (side, list) in [("tx", &tx), ("rx", &rx)] {
            for (i, p) in list.iter().enumerate() {
                if !p.is_finite() {
                    return Err(Error::InvalidLayout(format!("aperture `{id}`: {side}[{i}] is not finite")));
                }
                if p.z <= 0.0 {
                    return Err(Error::InvalidLayout(format!(
                        "aperture `{id}`: {side}[{i}] lies on or below the ground plane"
                    )));
                }
                if list[..i].iter().any(|q| q == p) {
                    return Err(Error::InvalidLayout(format!("aperture `{id}`: duplicate {side} position {i}")));
                }
            }
        }
        Ok(Self { id, tx, rx })
    }

    /// Number of Tx–Rx pairs after matched filtering.
    pub fn virtual_channels(&self) -> usize {
        self.tx.len() * self.rx.len()
    }

    pub fn centroid(&self) -> Position3 {
        centroid(self.tx.iter().chain(self.rx.iter()).copied())
    }

    /// Virtual element positions `p_t + p_r - c` (Tx-major), with `c` the
    /// aperture centroid.
    pub fn virtual_positions(&self) -> Vec<Position3> {
        let c = self.centroid();
        let mut out = Vec::with_capacity(self.virtual_channels());
        for t in &self.tx {
            for r in &self.rx {
                out.push(t.add(r).sub(&c));
            }
        }
        out
    }

    /// True when every Tx shares one height and every Rx shares one height,
    /// so the elevation term contributes a phase common to all pairs.
    pub fn has_constant_height(&self) -> bool {
        let same = |v: &[Position3]| v.iter().all(|p| p.z == v[0].z);
        same(&self.tx) && same(&self.rx)
    }

    /// Largest sub-aperture whose Tx share one height and whose Rx share one
    /// height. Returns the sub-aperture and the indices of its channels in the
    /// Tx-major virtual vector of `self`.
    pub fn constant_height_subarray(&self) -> (CoherentAperture, Vec<usize>) {
        let classes = |v: &[Position3]| {
            let mut heights: Vec<f64> = Vec::new();
            for p in v {
                if !heights.contains(&p.z) {
                    heights.push(p.z);
                }
            }
            heights
                .into_iter()
                .map(|z| v.iter().enumerate().filter(|(_, p)| p.z == z).map(|(i, _)| i).collect::<Vec<_>>())
                .collect::<Vec<_>>()
        };
        let tx_classes = classes(&self.tx);
        let rx_classes = classes(&self.rx);
        let mut best: Option<(&Vec<usize>, &Vec<usize>)> = None;
        for tc in &tx_classes {
            for rc in &rx_classes {
                let better = match best {
                    None => true,
                    Some((bt, br)) => tc.len() * rc.len() > bt.len() * br.len(),
                };
                if better {
                    best = Some((tc, rc));
                }
            }
        }
        let (tc, rc) = best.expect("apertures are nonempty");
        let nrx = self.rx.len();
        let channels = tc.iter().flat_map(|&t| rc.iter().map(move |&r| t * nrx + r)).collect();
        let sub = CoherentAperture {
            id: format!("{}/level", self.id),
            tx: tc.iter().map(|&i| self.tx[i]).collect(),
            rx: rc.iter().map(|&i| self.rx[i]).collect(),
        };
        (sub, channels)
    }
}

/// One or more mutually incoherent coherent apertures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AntennaLayout {
    apertures: Vec<CoherentAperture>,
}

impl AntennaLayout {
    pub fn new(apertures: Vec<CoherentAperture>) -> Result<Self> {
        if apertures.is_empty() {
            return Err(Error::InvalidLayout("layout needs at least one aperture".into()));
        }
        Ok(Self { apertures })
    }

    pub fn apertures(&self) -> &[CoherentAperture] {
        &self.apertures
    }

    /// Centroid of all physical antennas of all apertures.
    pub fn reference_point(&self) -> Position3 {
        centroid(self.apertures.iter().flat_map(|a| a.tx.iter().chain(a.rx.iter()).copied()))
    }

    pub fn virtual_channels(&self) -> usize {
        self.apertures.iter().map(CoherentAperture::virtual_channels).sum()
    }

    /// Appends the apertures of `other` as further incoherent apertures.
    pub fn merged(mut self, other: AntennaLayout) -> AntennaLayout {
        self.apertures.extend(other.apertures);
        self
    }
}

/// Target hypothesis in the (azimuth, height, slant range) parametrisation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    /// Azimuth in radians.
    pub azimuth: f64,
    /// Height above ground in meters.
    pub height: f64,
    /// Slant range from the reference point in meters.
    pub slant_range: f64,
}

impl TargetSpec {
    pub fn new(azimuth: f64, height: f64, slant_range: f64) -> Self {
        Self { azimuth, height, slant_range }
    }

    /// Elevation seen from `reference`.
    pub fn elevation(&self, reference: &Position3) -> f64 {
        ((self.height - reference.z) / self.slant_range).asin()
    }

    /// Recovers the parametrisation of a world point relative to `reference`.
    pub fn from_position(q: &Position3, reference: &Position3) -> Self {
        let d = q.sub(reference);
        Self { azimuth: d.y.atan2(d.x), height: q.z, slant_range: d.norm() }
    }
}

/// Places a target at slant range `t.slant_range` from `reference`, at height
/// `t.height` and ground-projected azimuth `t.azimuth`.
pub fn target_world_position(t: &TargetSpec, reference: &Position3) -> Result<Position3> {
    if !(t.slant_range > 0.0) || !t.slant_range.is_finite() {
        return domain(format!("slant range must be positive, got {}", t.slant_range));
    }
    if t.height < 0.0 {
        return domain(format!("target height must be non-negative, got {}", t.height));
    }
    let dz = t.height - reference.z;
    if dz.abs() > t.slant_range {
        return domain(format!(
            "height difference {:.6} m exceeds slant range {:.6} m",
            dz.abs(),
            t.slant_range
        ));
    }
    let ground = ((t.slant_range - dz) * (t.slant_range + dz)).sqrt();
    Ok(Position3::new(
        reference.x + ground * t.azimuth.cos(),
        reference.y + ground * t.azimuth.sin(),
        t.height,
    ))
}

/// Layout presets available by name in scenario files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[serde(rename = "bumper_6x8")]
    Bumper6x8,
    #[serde(rename = "roof_3x4")]
    Roof3x4,
    #[serde(rename = "cross_6x8")]
    Cross6x8,
    #[serde(rename = "cross_12x16")]
    Cross12x16,
    #[serde(rename = "square_6x8")]
    Square6x8,
    #[serde(rename = "square_12x16")]
    Square12x16,
}

/// Axis-aligned box in the `y`/`z` plane that holds a preset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Footprint {
    pub center: Position3,
    /// Full extent along `y` and along `z`.
    pub size: f64,
}

impl Footprint {
    pub fn contains(&self, p: &Position3) -> bool {
        let h = self.size / 2.0 + 1e-12;
        (p.y - self.center.y).abs() <= h && (p.z - self.center.z).abs() <= h && (p.x - self.center.x).abs() <= 1e-12
    }
}

const BUMPER_HEIGHT: f64 = 0.55;
const ROOF_HEIGHT: f64 = 1.1;
const PANEL_SIZE: f64 = 0.11;

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::Bumper6x8,
        Preset::Roof3x4,
        Preset::Cross6x8,
        Preset::Cross12x16,
        Preset::Square6x8,
        Preset::Square12x16,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Bumper6x8 => "bumper_6x8",
            Preset::Roof3x4 => "roof_3x4",
            Preset::Cross6x8 => "cross_6x8",
            Preset::Cross12x16 => "cross_12x16",
            Preset::Square6x8 => "square_6x8",
            Preset::Square12x16 => "square_12x16",
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            Preset::Bumper6x8 => "6x8 virtual grid over 10 cm, bumper at 0.55 m",
            Preset::Roof3x4 => "3x4 virtual grid over 5 cm, roof at 1.1 m",
            Preset::Cross6x8 => "cross: 6 Tx vertical arm, 8 Rx horizontal arm, 11 cm panel",
            Preset::Cross12x16 => "cross: 12 Tx vertical arm, 16 Rx horizontal arm, 11 cm panel",
            Preset::Square6x8 => "square ring: Tx on two adjacent edges, Rx on the other two, 11 cm panel",
            Preset::Square12x16 => "square ring: 12 Tx / 16 Rx on ring edges, 11 cm panel",
        }
    }

    pub fn footprint(&self) -> Footprint {
        let (z, size) = match self {
            Preset::Bumper6x8 => (BUMPER_HEIGHT, 0.10),
            Preset::Roof3x4 => (ROOF_HEIGHT, 0.05),
            _ => (BUMPER_HEIGHT, PANEL_SIZE),
        };
        Footprint { center: Position3::new(0.0, 0.0, z), size }
    }

    pub fn aperture(&self) -> CoherentAperture {
        let fp = self.footprint();
        let (tx, rx) = match self {
            Preset::Bumper6x8 | Preset::Cross6x8 => cross_positions(6, 8, fp),
            Preset::Roof3x4 => cross_positions(3, 4, fp),
            Preset::Cross12x16 => cross_positions(12, 16, fp),
            Preset::Square6x8 => square_positions(6, 8, fp),
            Preset::Square12x16 => square_positions(12, 16, fp),
        };
        CoherentAperture::new(self.name(), tx, rx).expect("preset geometry is valid")
    }

    pub fn layout(&self) -> AntennaLayout {
        AntennaLayout::new(vec![self.aperture()]).expect("one aperture")
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }
}

fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![(start + end) / 2.0];
    }
    (0..n).map(|i| start + (end - start) * i as f64 / (n - 1) as f64).collect()
}

// Tx on a vertical arm, Rx on a horizontal arm, crossing at the footprint
// center. The virtual array is the full rows x cols grid spanning the
// footprint on both axes.
fn cross_positions(rows: usize, cols: usize, fp: Footprint) -> (Vec<Position3>, Vec<Position3>) {
    let c = fp.center;
    let half = fp.size / 2.0;
    let tx = linspace(c.z - half, c.z + half, rows).into_iter().map(|z| Position3::new(c.x, c.y, z)).collect();
    let rx = linspace(c.y - half, c.y + half, cols).into_iter().map(|y| Position3::new(c.x, y, c.z)).collect();
    (tx, rx)
}

// Square ring of side size/2: Tx on the left and bottom edges, Rx on the right
// and top edges. The virtual positions p_t + p_r - c then fill the footprint.
fn square_positions(ntx: usize, nrx: usize, fp: Footprint) -> (Vec<Position3>, Vec<Position3>) {
    let c = fp.center;
    let s = fp.size / 4.0;
    let at = |y: f64, z: f64| Position3::new(c.x, c.y + y, c.z + z);
    let (tl, tb) = (ntx - ntx / 2, ntx / 2);
    let (rr, rt) = (nrx - nrx / 2, nrx / 2);
    let mut tx = Vec::with_capacity(ntx);
    tx.extend((1..=tl).map(|i| at(-s, -s + 2.0 * s * i as f64 / tl as f64)));
    tx.extend((0..tb).map(|i| at(-s + 2.0 * s * i as f64 / tb as f64, -s)));
    let mut rx = Vec::with_capacity(nrx);
    rx.extend((0..rr).map(|i| at(s, s - 2.0 * s * i as f64 / rr as f64)));
    rx.extend((1..=rt).map(|i| at(s - 2.0 * s * i as f64 / rt as f64, s)));
    (tx, rx)
}

/// Looks up a preset layout by its stable name.
pub fn preset_layout(name: &str) -> Result<AntennaLayout> {
    Ok(name.parse::<Preset>()?.layout())
}
