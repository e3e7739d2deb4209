//! Sensing matrices, group label vectors and range fusion.
//!
//! A [`Dictionary`] is block-diagonal: each block is one coherent system
//! (one aperture at one trajectory point) and every block carries the same
//! per-column hypotheses. A single coherent system is a one-block dictionary.
//! Block storage is reference counted so fused systems share the matrices
//! (and cached group bases) of the per-point dictionaries they are built from.

use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::geometry::{target_world_position, CoherentAperture, AntennaLayout, Position3, TargetSpec};
use crate::linalg;
use crate::steering::{leg_phasors, phasor, virtual_steering};

/// Group partition of the reflection-coefficient hypotheses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelOption {
    /// Same (height, azimuth) shares a group across all ρ.
    A,
    /// Every (height, azimuth, ρ) is its own group.
    B,
}

/// Hypothesis carried by one dictionary column.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Hypothesis {
    /// Generic column with no physical parametrisation.
    Column { index: usize },
    Azimuth { azimuth: f64 },
    SpatialFrequency { u: f64, v: f64 },
    Multipath { azimuth: f64, height: f64, rho: Complex64 },
}

impl Hypothesis {
    /// Azimuth of the hypothesis. Spatial-frequency bins map through
    /// `asin(v)`, valid for the low elevations these bins are used at.
    pub fn azimuth(&self) -> Option<f64> {
        match *self {
            Hypothesis::Column { .. } => None,
            Hypothesis::Azimuth { azimuth } | Hypothesis::Multipath { azimuth, .. } => Some(azimuth),
            Hypothesis::SpatialFrequency { v, .. } => Some(v.clamp(-1.0, 1.0).asin()),
        }
    }

    pub fn height(&self) -> Option<f64> {
        match *self {
            Hypothesis::Multipath { height, .. } => Some(height),
            _ => None,
        }
    }
}

/// Column layout `[A_{φ1,ρ1} ⋯ A_{φnaz,ρ1} ⋯ A_{φnaz,ρnρ}]` with `heights`
/// columns per `A_{φ,ρ}` block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeightShape {
    pub heights: usize,
    pub azimuths: usize,
    pub rhos: usize,
}

impl HeightShape {
    pub fn len(&self) -> usize {
        self.heights * self.azimuths * self.rhos
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Column index of `(height i, azimuth j, ρ k)`.
    pub fn index(&self, height: usize, azimuth: usize, rho: usize) -> usize {
        (rho * self.azimuths + azimuth) * self.heights + height
    }
}

/// Label vector for a single height system.
///
/// Option a repeats `[1..nh·naz]` `nρ` times; option b numbers every column.
pub fn height_labels(option: LabelOption, heights: usize, azimuths: usize, rhos: usize) -> Vec<u32> {
    let per = heights * azimuths;
    match option {
        LabelOption::A => (0..rhos).flat_map(|_| 1..=per as u32).collect(),
        LabelOption::B => (1..=(per * rhos) as u32).collect(),
    }
}

/// Hypothesis grids shared by every system in a scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisGrid {
    pub azimuths: Vec<f64>,
    pub heights: Vec<f64>,
    pub coarse_heights: Vec<f64>,
    pub rhos: Vec<Complex64>,
}

/// `min, min + step, …` up to `max` (inclusive within half a step).
pub fn stepped_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(max >= min) || !min.is_finite() || !max.is_finite() {
        return domain(format!("invalid grid [{min}, {max}] step {step}"));
    }
    let n = ((max - min) / step + 0.5).floor() as usize + 1;
    Ok((0..n).map(|i| min + step * i as f64).collect())
}

pub fn linspace(min: f64, max: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![(min + max) / 2.0],
        _ => (0..n).map(|i| min + (max - min) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Index of the grid value closest to `value`.
pub fn nearest_index(grid: &[f64], value: f64) -> usize {
    let mut best = 0;
    for (i, g) in grid.iter().enumerate() {
        if (g - value).abs() < (grid[best] - value).abs() {
            best = i;
        }
    }
    best
}

/// Attenuations `{0.1, 0.3, 0.5, 0.7, 0.9}` at a 180° phase shift.
pub fn default_rho_grid() -> Vec<Complex64> {
    [0.1, 0.3, 0.5, 0.7, 0.9].iter().map(|a| Complex64::new(-a, 0.0)).collect()
}

impl HypothesisGrid {
    pub fn new(azimuths: Vec<f64>, heights: Vec<f64>, coarse_heights: Vec<f64>, rhos: Vec<Complex64>) -> Result<Self> {
        for (name, g) in [("azimuth", &azimuths), ("height", &heights), ("coarse height", &coarse_heights)] {
            if g.is_empty() {
                return domain(format!("{name} grid is empty"));
            }
            if g.windows(2).any(|w| !(w[1] > w[0])) {
                return domain(format!("{name} grid must be strictly increasing"));
            }
        }
        if rhos.is_empty() {
            return domain("rho grid is empty");
        }
        if rhos.iter().any(|r| !(r.norm() <= 1.0 + 1e-12)) {
            return domain("rho hypotheses must satisfy |rho| <= 1");
        }
        if coarse_heights.len() > azimuths.len() {
            return domain("coarse height grid must be smaller than the azimuth grid");
        }
        Ok(Self { azimuths, heights, coarse_heights, rhos })
    }
}

impl Default for HypothesisGrid {
    fn default() -> Self {
        let azimuths = stepped_grid(-10.0, 10.0, 0.2).unwrap().into_iter().map(f64::to_radians).collect();
        let heights = stepped_grid(0.0, 1.5, 0.02).unwrap();
        Self { azimuths, heights, coarse_heights: linspace(0.0, 1.5, 5), rhos: default_rho_grid() }
    }
}

/// Orthonormal basis of the columns of one group inside one block.
#[derive(Debug)]
pub(crate) struct Piece {
    pub label: u32,
    /// Orthonormal basis of the piece's span (block rows × rank).
    pub basis: DMatrix<Complex64>,
}

#[derive(Debug)]
struct BlockData {
    matrix: DMatrix<Complex64>,
    pieces: Mutex<Vec<(Vec<u32>, Arc<Vec<Piece>>)>>,
}

impl BlockData {
    fn new(matrix: DMatrix<Complex64>) -> Arc<Self> {
        Arc::new(Self { matrix, pieces: Mutex::new(Vec::new()) })
    }

    fn pieces_for(&self, labels: &[u32]) -> Arc<Vec<Piece>> {
        let mut cache = self.pieces.lock().expect("piece cache poisoned");
        if let Some((_, p)) = cache.iter().find(|(key, _)| key.as_slice() == labels) {
            return p.clone();
        }
        let mut order: Vec<u32> = Vec::new();
        for &l in labels {
            if !order.contains(&l) {
                order.push(l);
            }
        }
        let pieces: Vec<Piece> = order
            .into_iter()
            .map(|label| {
                let columns: Vec<usize> = (0..labels.len()).filter(|&c| labels[c] == label).collect();
                let (basis, _, _) = linalg::column_basis(&self.matrix.select_columns(columns.iter()));
                Piece { label, basis }
            })
            .collect();
        let pieces = Arc::new(pieces);
        cache.push((labels.to_vec(), pieces.clone()));
        pieces
    }
}

#[derive(Clone, Debug)]
struct BlockRef {
    row_offset: usize,
    col_offset: usize,
    data: Arc<BlockData>,
}

/// Block-diagonal sensing matrix with per-column hypotheses and group labels.
#[derive(Clone, Debug)]
pub struct Dictionary {
    rows: usize,
    cols: usize,
    blocks: Vec<BlockRef>,
    block_meta: Arc<Vec<Hypothesis>>,
    labels: Vec<u32>,
    scales: Vec<f64>,
    normalized: bool,
    shape: Option<HeightShape>,
}

fn validate_labels(labels: &[u32], cols: usize) -> Result<()> {
    if labels.len() != cols {
        return Err(Error::Dimension(format!("{} labels for {} columns", labels.len(), cols)));
    }
    let groups = labels.iter().copied().max().unwrap_or(0) as usize;
    let mut seen = vec![false; groups];
    for &l in labels {
        if l == 0 {
            return domain("labels start at 1");
        }
        seen[l as usize - 1] = true;
    }
    if seen.iter().any(|s| !s) {
        return domain("labels must cover 1..=G without gaps");
    }
    Ok(())
}

impl Dictionary {
    /// A single coherent system from an explicit matrix.
    pub fn dense(matrix: DMatrix<Complex64>, labels: Vec<u32>) -> Result<Self> {
        let meta = (0..matrix.ncols()).map(|index| Hypothesis::Column { index }).collect();
        Self::single(matrix, meta, labels, None)
    }

    fn single(matrix: DMatrix<Complex64>, meta: Vec<Hypothesis>, labels: Vec<u32>, shape: Option<HeightShape>) -> Result<Self> {
        let (rows, cols) = matrix.shape();
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension("dictionary must have at least one row and one column".into()));
        }
        validate_labels(&labels, cols)?;
        Ok(Self {
            rows,
            cols,
            blocks: vec![BlockRef { row_offset: 0, col_offset: 0, data: BlockData::new(matrix) }],
            block_meta: Arc::new(meta),
            labels,
            scales: vec![1.0; cols],
            normalized: false,
            shape,
        })
    }

    fn from_columns(rows: usize, columns: Vec<Vec<Complex64>>, meta: Vec<Hypothesis>, labels: Vec<u32>, shape: Option<HeightShape>) -> Result<Self> {
        let cols = columns.len();
        let matrix = DMatrix::from_fn(rows, cols, |r, c| columns[c][r]);
        Self::single(matrix, meta, labels, shape)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn group_count(&self) -> usize {
        self.labels.iter().copied().max().unwrap_or(0) as usize
    }

    /// Original column norms when the dictionary was normalized, else ones.
    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn shape(&self) -> Option<HeightShape> {
        self.shape
    }

    /// Number of coherent systems (diagonal blocks).
    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_cols(&self) -> usize {
        self.block_meta.len()
    }

    /// Row range of block `b`.
    pub fn block_rows(&self, b: usize) -> std::ops::Range<usize> {
        let blk = &self.blocks[b];
        blk.row_offset..blk.row_offset + blk.data.matrix.nrows()
    }

    pub fn block_matrix(&self, b: usize) -> &DMatrix<Complex64> {
        &self.blocks[b].data.matrix
    }

    /// Hypotheses of one block; all blocks share them.
    pub fn block_meta(&self) -> &[Hypothesis] {
        &self.block_meta
    }

    pub fn column_meta(&self, col: usize) -> Hypothesis {
        self.block_meta[col % self.block_meta.len()]
    }

    /// Columns (global indices) per group, group `g` at position `g - 1`.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.group_count()];
        for (c, &l) in self.labels.iter().enumerate() {
            out[l as usize - 1].push(c);
        }
        out
    }

    /// Dense copy of column `col`.
    pub fn column(&self, col: usize) -> Vec<Complex64> {
        let b = col / self.block_cols();
        let blk = &self.blocks[b];
        let mut out = vec![Complex64::new(0.0, 0.0); self.rows];
        let local = col - blk.col_offset;
        for (r, v) in blk.data.matrix.column(local).iter().enumerate() {
            out[blk.row_offset + r] = *v;
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut out = DMatrix::zeros(self.rows, self.cols);
        for blk in &self.blocks {
            let m = &blk.data.matrix;
            out.view_mut((blk.row_offset, blk.col_offset), m.shape()).copy_from(m);
        }
        out
    }

    /// `A x`.
    pub fn apply(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.cols {
            return Err(Error::Dimension(format!("x has {} entries, dictionary {} columns", x.len(), self.cols)));
        }
        let mut y = vec![Complex64::new(0.0, 0.0); self.rows];
        for blk in &self.blocks {
            let m = &blk.data.matrix;
            for c in 0..m.ncols() {
                let xc = x[blk.col_offset + c];
                if xc == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for (r, a) in m.column(c).iter().enumerate() {
                    y[blk.row_offset + r] += a * xc;
                }
            }
        }
        Ok(y)
    }

    /// `Aᴴ r`.
    pub fn adjoint_apply(&self, r: &[Complex64]) -> Result<Vec<Complex64>> {
        if r.len() != self.rows {
            return Err(Error::Dimension(format!("vector has {} entries, dictionary {} rows", r.len(), self.rows)));
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.cols];
        for blk in &self.blocks {
            let m = &blk.data.matrix;
            let rb = &r[blk.row_offset..blk.row_offset + m.nrows()];
            for c in 0..m.ncols() {
                out[blk.col_offset + c] = m.column(c).iter().zip(rb).map(|(a, v)| a.conj() * v).sum();
            }
        }
        Ok(out)
    }

    /// Same matrix with a new partition.
    pub fn with_labels(&self, labels: Vec<u32>) -> Result<Self> {
        validate_labels(&labels, self.cols)?;
        Ok(Self { labels, ..self.clone() })
    }

    /// Unit 2-norm columns; `scales` records the original norms.
    pub fn normalize(&self) -> Result<Self> {
        if self.normalized {
            return Ok(self.clone());
        }
        let mut scales = vec![0.0; self.cols];
        let mut blocks = Vec::with_capacity(self.blocks.len());
        // Blocks shared by Arc are normalized once.
        let mut done: Vec<(Arc<BlockData>, Arc<BlockData>, Vec<f64>)> = Vec::new();
        for blk in &self.blocks {
            let (data, norms) = match done.iter().find(|(src, _, _)| Arc::ptr_eq(src, &blk.data)) {
                Some((_, dst, norms)) => (dst.clone(), norms.clone()),
                None => {
                    let mut m = blk.data.matrix.clone();
                    let mut norms = Vec::with_capacity(m.ncols());
                    for mut col in m.column_iter_mut() {
                        let n = col.norm();
                        if !(n > 0.0) {
                            return domain("cannot normalize a zero column");
                        }
                        col /= Complex64::new(n, 0.0);
                        norms.push(n);
                    }
                    let dst = BlockData::new(m);
                    done.push((blk.data.clone(), dst.clone(), norms.clone()));
                    (dst, norms)
                }
            };
            for (c, n) in norms.iter().enumerate() {
                scales[blk.col_offset + c] = self.scales[blk.col_offset + c] * n;
            }
            blocks.push(BlockRef { data, ..blk.clone() });
        }
        Ok(Self { blocks, scales, normalized: true, ..self.clone() })
    }

    /// Stacks dictionaries block-diagonally. All parts must carry identical
    /// hypotheses; labels are concatenated.
    pub fn block_diagonal(parts: &[&Dictionary]) -> Result<Self> {
        let first = *parts.first().ok_or_else(|| Error::Dimension("no systems to stack".into()))?;
        let mut blocks = Vec::new();
        let mut labels = Vec::new();
        let mut scales = Vec::new();
        let (mut rows, mut cols) = (0, 0);
        for (i, d) in parts.iter().enumerate() {
            if d.block_meta != first.block_meta && d.block_meta.as_slice() != first.block_meta.as_slice() {
                return Err(Error::Consistency(format!("system {i} has different column hypotheses")));
            }
            if d.shape != first.shape {
                return Err(Error::Consistency(format!("system {i} has a different hypothesis shape")));
            }
            if d.normalized != first.normalized {
                return Err(Error::Consistency(format!("system {i} differs in normalization")));
            }
            for blk in &d.blocks {
                blocks.push(BlockRef { row_offset: rows + blk.row_offset, col_offset: cols + blk.col_offset, data: blk.data.clone() });
            }
            labels.extend_from_slice(&d.labels);
            scales.extend_from_slice(&d.scales);
            rows += d.rows;
            cols += d.cols;
        }
        Ok(Self {
            rows,
            cols,
            blocks,
            block_meta: first.block_meta.clone(),
            labels,
            scales,
            normalized: first.normalized,
            shape: first.shape,
        })
    }

    /// Group pieces per block for the current labels.
    pub(crate) fn pieces(&self) -> Vec<Arc<Vec<Piece>>> {
        self.blocks
            .iter()
            .map(|blk| blk.data.pieces_for(&self.labels[blk.col_offset..blk.col_offset + blk.data.matrix.ncols()]))
            .collect()
    }

    pub(crate) fn block_offsets(&self, b: usize) -> (usize, usize) {
        (self.blocks[b].row_offset, self.blocks[b].col_offset)
    }
}

/// Unit-norm copy of a measurement and its original norm.
pub fn normalize_signal(y: &[Complex64]) -> Result<(Vec<Complex64>, f64)> {
    let n = linalg::norm(y);
    if !(n > 0.0) {
        return domain("cannot normalize a zero signal");
    }
    Ok((y.iter().map(|v| v / n).collect(), n))
}

/// Stacks the systems of a filtering interval into one block-diagonal system.
///
/// With a label option the height partition is rebuilt for every system so
/// that the fused labels are `1_{I·nρ} ⊗ [1..nh·naz]` (a) or
/// `1_I ⊗ [1..nh·naz·nρ]` (b).
pub fn assemble_range_fusion(
    systems: &[(Vec<Complex64>, Dictionary)],
    option: Option<LabelOption>,
) -> Result<(Vec<Complex64>, Dictionary)> {
    let mut relabeled = Vec::with_capacity(systems.len());
    let mut y = Vec::new();
    for (i, (yi, d)) in systems.iter().enumerate() {
        if yi.len() != d.rows() {
            return Err(Error::Dimension(format!("system {i}: {} samples for {} rows", yi.len(), d.rows())));
        }
        y.extend_from_slice(yi);
        relabeled.push(match (option, d.shape()) {
            (Some(opt), Some(s)) => {
                let per = height_labels(opt, s.heights, s.azimuths, s.rhos);
                d.with_labels(per.iter().cycle().take(d.cols()).copied().collect())?
            }
            (Some(_), None) => return Err(Error::Consistency("label options apply to height dictionaries only".into())),
            (None, _) => d.clone(),
        });
    }
    let refs: Vec<&Dictionary> = relabeled.iter().collect();
    Ok((y, Dictionary::block_diagonal(&refs)?))
}

fn relative(positions: &[Position3], reference: &Position3) -> Vec<Position3> {
    positions.iter().map(|p| p.sub(reference)).collect()
}

fn require_level(aperture: &CoherentAperture) -> Result<()> {
    if !aperture.has_constant_height() {
        return domain(format!(
            "aperture `{}` is not at a constant height; select a level sub-array first",
            aperture.id
        ));
    }
    Ok(())
}

/// Azimuth dictionary assuming `θ = 0` (very low targets).
pub fn azimuth_dictionary_case_i(
    azimuths: &[f64],
    aperture: &CoherentAperture,
    reference: &Position3,
    range: f64,
    wavelength: f64,
) -> Result<Dictionary> {
    require_level(aperture)?;
    if azimuths.is_empty() {
        return domain("azimuth grid is empty");
    }
    let tx = relative(&aperture.tx, reference);
    let rx = relative(&aperture.rx, reference);
    let columns = azimuths
        .iter()
        .map(|&az| virtual_steering(&tx, &rx, az, 0.0, range, wavelength).map(|s| s.entries))
        .collect::<Result<Vec<_>>>()?;
    let meta = azimuths.iter().map(|&azimuth| Hypothesis::Azimuth { azimuth }).collect();
    let labels = (1..=azimuths.len() as u32).collect();
    Dictionary::from_columns(aperture.virtual_channels(), columns, meta, labels, None)
}

/// Grid over `(u, v)` in the square `[-cos θmax, cos θmax]²`. For a planar
/// aperture (constant depth) `u` has no effect and collapses to 0.
pub fn uv_grid(theta_max: f64, nu: usize, nv: usize, planar: bool) -> Vec<(f64, f64)> {
    let c = theta_max.cos();
    let vs = linspace(-c, c, nv);
    let us = if planar { vec![0.0] } else { linspace(-c, c, nu) };
    us.iter().flat_map(|&u| vs.iter().map(move |&v| (u, v))).collect()
}

/// Azimuth dictionary over spatial frequencies `(u, v)` with the vertical
/// phase term dropped.
pub fn azimuth_dictionary_case_ii(
    grid: &[(f64, f64)],
    theta_max: f64,
    aperture: &CoherentAperture,
    reference: &Position3,
    range: f64,
    wavelength: f64,
) -> Result<Dictionary> {
    require_level(aperture)?;
    if grid.is_empty() {
        return domain("spatial-frequency grid is empty");
    }
    if !(wavelength > 0.0) || !(range > 0.0) {
        return domain("range and wavelength must be positive");
    }
    let bound = theta_max.cos() + 1e-12;
    if let Some(&(u, v)) = grid.iter().find(|(u, v)| u.abs() > bound || v.abs() > bound) {
        return domain(format!("grid point ({u}, {v}) lies outside the admissible square"));
    }
    let k = 2.0 * std::f64::consts::PI / wavelength;
    let tx = relative(&aperture.tx, reference);
    let rx = relative(&aperture.rx, reference);
    let leg = |p: &Position3, u: f64, v: f64| {
        let d = range * (1.0 - 2.0 * (u * p.x + v * p.y) / range + p.dot(p) / (range * range)).sqrt();
        phasor(d, k)
    };
    let columns = grid
        .iter()
        .map(|&(u, v)| {
            let a_tx: Vec<_> = tx.iter().map(|p| leg(p, u, v)).collect();
            let a_rx: Vec<_> = rx.iter().map(|p| leg(p, u, v)).collect();
            crate::steering::kron(&a_tx, &a_rx)
        })
        .collect();
    let meta = grid.iter().map(|&(u, v)| Hypothesis::SpatialFrequency { u, v }).collect();
    let labels = (1..=grid.len() as u32).collect();
    Dictionary::from_columns(aperture.virtual_channels(), columns, meta, labels, None)
}

/// Joint azimuth / coarse-height multipath dictionary; groups pool each
/// `(φ, h')` across ρ.
pub fn azimuth_dictionary_case_iii(
    azimuths: &[f64],
    coarse_heights: &[f64],
    rhos: &[Complex64],
    aperture: &CoherentAperture,
    reference: &Position3,
    range: f64,
    wavelength: f64,
) -> Result<Dictionary> {
    height_dictionary(azimuths, coarse_heights, rhos, aperture, reference, range, wavelength, LabelOption::A)
}

/// Multipath height dictionary for one aperture at one range.
#[allow(clippy::too_many_arguments)]
pub fn height_dictionary(
    azimuths: &[f64],
    heights: &[f64],
    rhos: &[Complex64],
    aperture: &CoherentAperture,
    reference: &Position3,
    range: f64,
    wavelength: f64,
    option: LabelOption,
) -> Result<Dictionary> {
    if azimuths.is_empty() || heights.is_empty() || rhos.is_empty() {
        return domain("height dictionary needs nonempty azimuth, height and rho grids");
    }
    let shape = HeightShape { heights: heights.len(), azimuths: azimuths.len(), rhos: rhos.len() };
    let rows = aperture.virtual_channels();
    let mut legs = Vec::with_capacity(heights.len() * azimuths.len());
    for &az in azimuths {
        for &h in heights {
            let q = target_world_position(&TargetSpec::new(az, h, range), reference)?;
            legs.push(leg_phasors(&aperture.tx, &aperture.rx, &q, wavelength)?);
        }
    }
    let mut matrix = DMatrix::zeros(rows, shape.len());
    let mut meta = Vec::with_capacity(shape.len());
    let mut buf = Vec::with_capacity(rows);
    for (k, &rho) in rhos.iter().enumerate() {
        for (j, &azimuth) in azimuths.iter().enumerate() {
            for (i, &height) in heights.iter().enumerate() {
                legs[j * heights.len() + i].combine_into(rho, &mut buf);
                let c = shape.index(i, j, k);
                for (r, v) in buf.iter().enumerate() {
                    matrix[(r, c)] = *v;
                }
                meta.push(Hypothesis::Multipath { azimuth, height, rho });
            }
        }
    }
    let labels = height_labels(option, shape.heights, shape.azimuths, shape.rhos);
    Dictionary::single(matrix, meta, labels, Some(shape))
}

/// Height dictionary over every aperture of a layout, stacked block-diagonally
/// (apertures are mutually incoherent).
#[allow(clippy::too_many_arguments)]
pub fn height_dictionary_for_layout(
    azimuths: &[f64],
    heights: &[f64],
    rhos: &[Complex64],
    layout: &AntennaLayout,
    range: f64,
    wavelength: f64,
    option: LabelOption,
) -> Result<Dictionary> {
    let reference = layout.reference_point();
    let parts = layout
        .apertures()
        .iter()
        .map(|a| height_dictionary(azimuths, heights, rhos, a, &reference, range, wavelength, option))
        .collect::<Result<Vec<_>>>()?;
    Dictionary::block_diagonal(&parts.iter().collect::<Vec<_>>())
}
