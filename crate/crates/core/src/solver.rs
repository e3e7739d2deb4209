//! Block OMP over arbitrary label partitions, map pooling and declarations.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dictionary::{Dictionary, HeightShape, Hypothesis};
use crate::error::{domain, Error, Result};
use crate::linalg;

/// `Σ_g ‖x_g‖₂`.
pub fn group_norm(x: &[Complex64], labels: &[u32]) -> Result<f64> {
    if x.len() != labels.len() {
        return Err(Error::Dimension(format!("{} coefficients, {} labels", x.len(), labels.len())));
    }
    let groups = labels.iter().copied().max().unwrap_or(0) as usize;
    let mut sq = vec![0.0; groups + 1];
    for (v, &l) in x.iter().zip(labels) {
        sq[l as usize] += v.norm_sqr();
    }
    Ok(sq.iter().map(|s| s.sqrt()).sum())
}

/// Correlation energy `‖A_gᴴ r‖²` per group (index `g - 1`).
pub fn group_energies(dict: &Dictionary, residual: &[Complex64]) -> Result<Vec<f64>> {
    let corr = dict.adjoint_apply(residual)?;
    let mut out = vec![0.0; dict.group_count()];
    for (c, &l) in corr.iter().zip(dict.labels()) {
        out[l as usize - 1] += c.norm_sqr();
    }
    Ok(out)
}

/// When BOMP stops. At least one criterion must be set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    /// Maximum number of selected groups.
    pub max_groups: Option<usize>,
    /// Stop once `‖r‖ ≤ ε‖y‖`.
    pub residual_fraction: Option<f64>,
}

impl StopRule {
    pub fn sparsity(k: usize) -> Self {
        Self { max_groups: Some(k), residual_fraction: None }
    }

    pub fn residual(eps: f64) -> Self {
        Self { max_groups: None, residual_fraction: Some(eps) }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.max_groups, self.residual_fraction) {
            (None, None) => domain("stop rule needs a sparsity or a residual fraction"),
            (Some(0), _) => domain("sparsity must be at least 1"),
            (_, Some(e)) if !(e > 0.0 && e < 1.0) => domain("residual fraction must lie in (0, 1)"),
            _ => Ok(()),
        }
    }
}

/// Measurement, dictionary and stopping rule.
#[derive(Clone, Debug)]
pub struct GroupSparseProblem<'a> {
    pub y: &'a [Complex64],
    pub dictionary: &'a Dictionary,
    pub stop: StopRule,
    /// Tikhonov weight of the refit; 0 gives plain minimum-norm least squares.
    pub ridge: f64,
}

impl<'a> GroupSparseProblem<'a> {
    pub fn new(y: &'a [Complex64], dictionary: &'a Dictionary, stop: StopRule) -> Self {
        Self { y, dictionary, stop, ridge: 0.0 }
    }

    pub fn with_ridge(mut self, ridge: f64) -> Self {
        self.ridge = ridge;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction {
    pub coefficients: Vec<Complex64>,
    /// Selected group labels in selection order.
    pub selected_groups: Vec<u32>,
    pub residual_norm: f64,
    /// Residual norm before the first and after every selection.
    pub residual_history: Vec<f64>,
    /// A selected group added no rank and was discarded.
    pub degenerate: bool,
}

impl Reconstruction {
    /// Coefficients split per diagonal block of `dict`.
    pub fn block_coefficients<'a>(&'a self, dict: &Dictionary) -> Vec<&'a [Complex64]> {
        self.coefficients.chunks(dict.block_cols()).collect()
    }
}

/// Residuals below this fraction of `‖y‖` are numerically zero.
const RESIDUAL_FLOOR: f64 = 1e-12;

/// Block orthogonal matching pursuit.
///
/// Each step picks the group whose column span captures the most residual
/// energy, then refits all selected groups jointly by minimum-norm least
/// squares. For orthonormal groups the statistic equals `‖A_gᴴ r‖²`; using
/// the projection keeps the choice meaningful for rank-deficient groups.
pub fn bomp(problem: &GroupSparseProblem) -> Result<Reconstruction> {
    let dict = problem.dictionary;
    let y = problem.y;
    problem.stop.validate()?;
    if !(problem.ridge >= 0.0 && problem.ridge.is_finite()) {
        return domain("ridge weight must be finite and nonnegative");
    }
    if y.len() != dict.rows() {
        return Err(Error::Dimension(format!("y has {} entries, dictionary {} rows", y.len(), dict.rows())));
    }
    if y.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return domain("measurement contains non-finite values");
    }
    let groups = dict.group_count();
    let max_groups = problem.stop.max_groups.unwrap_or(groups).min(groups);
    let y_norm = linalg::norm(y);
    let target = problem.stop.residual_fraction.unwrap_or(0.0).max(RESIDUAL_FLOOR) * y_norm;

    let pieces = dict.pieces();
    // group -> [(block, piece index)]
    let mut members: Vec<Vec<(usize, usize)>> = vec![Vec::new(); groups];
    for (b, ps) in pieces.iter().enumerate() {
        for (i, p) in ps.iter().enumerate() {
            members[p.label as usize - 1].push((b, i));
        }
    }

    let mut coefficients = vec![Complex64::new(0.0, 0.0); dict.cols()];
    let mut residual = y.to_vec();
    let mut residual_norm = y_norm;
    let mut history = vec![y_norm];
    let mut selected: Vec<u32> = Vec::new();
    let mut excluded = vec![false; groups];
    let mut rank = 0usize;
    let mut degenerate = false;

    while selected.len() < max_groups && residual_norm > target {
        let mut best: Option<(usize, f64)> = None;
        for g in 0..groups {
            if excluded[g] {
                continue;
            }
            let mut e = 0.0;
            for &(b, i) in &members[g] {
                let p = &pieces[b][i];
                let (row0, _) = dict.block_offsets(b);
                let r = &residual[row0..row0 + p.basis.nrows()];
                for k in 0..p.basis.ncols() {
                    let c: Complex64 = p.basis.column(k).iter().zip(r).map(|(u, v)| u.conj() * v).sum();
                    e += c.norm_sqr();
                }
            }
            if best.is_none_or(|(_, be)| e > be) {
                best = Some((g, e));
            }
        }
        let Some((g, _)) = best else { break };
        excluded[g] = true;
        selected.push(g as u32 + 1);

        let (coef, res, new_rank) = refit(dict, y, &selected, problem.ridge)?;
        if new_rank <= rank {
            // Group lies in the span of the current support.
            selected.pop();
            degenerate = true;
            continue;
        }
        rank = new_rank;
        coefficients = coef;
        residual = res;
        residual_norm = linalg::norm(&residual);
        history.push(residual_norm);
    }

    Ok(Reconstruction { coefficients, selected_groups: selected, residual_norm, residual_history: history, degenerate })
}

/// Joint (optionally ridge-regularized) LS over the selected groups, solved
/// independently per block. The residual follows the regularized fit, so the
/// energy a ridge leaves unexplained stays available to later selections.
fn refit(dict: &Dictionary, y: &[Complex64], selected: &[u32], ridge: f64) -> Result<(Vec<Complex64>, Vec<Complex64>, usize)> {
    let labels = dict.labels();
    let mut coef = vec![Complex64::new(0.0, 0.0); dict.cols()];
    let mut residual = y.to_vec();
    let mut rank = 0;
    for b in 0..dict.block_count() {
        let (row0, col0) = dict.block_offsets(b);
        let m = dict.block_matrix(b);
        let cols: Vec<usize> = (0..m.ncols()).filter(|&c| selected.contains(&labels[col0 + c])).collect();
        if cols.is_empty() {
            continue;
        }
        let q: DMatrix<Complex64> = m.select_columns(cols.iter());
        let yb = DVector::from_column_slice(&y[row0..row0 + m.nrows()]);
        let (z, r) = linalg::ridge_solve(&q, &yb, ridge);
        if z.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Numerical("least-squares refit produced non-finite coefficients".into()));
        }
        rank += r;
        let fit = &q * &z;
        for (k, &c) in cols.iter().enumerate() {
            coef[col0 + c] = z[k];
        }
        for i in 0..m.nrows() {
            residual[row0 + i] = yb[i] - fit[i];
        }
    }
    Ok((coef, residual, rank))
}

/// Hypothesis coordinates of a pooled map bin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Bin {
    Column(usize),
    Azimuth(f64),
    SpatialFrequency { u: f64, v: f64 },
    Height { azimuth: f64, height: f64 },
}

impl Bin {
    pub fn azimuth(&self) -> Option<f64> {
        match *self {
            Bin::Column(_) => None,
            Bin::Azimuth(a) | Bin::Height { azimuth: a, .. } => Some(a),
            Bin::SpatialFrequency { v, .. } => Some(v.clamp(-1.0, 1.0).asin()),
        }
    }

    pub fn height(&self) -> Option<f64> {
        match *self {
            Bin::Height { height, .. } => Some(height),
            _ => None,
        }
    }

    fn of(h: &Hypothesis, col: usize) -> Bin {
        match *h {
            Hypothesis::Column { .. } => Bin::Column(col),
            Hypothesis::Azimuth { azimuth } | Hypothesis::Multipath { azimuth, .. } => Bin::Azimuth(azimuth),
            Hypothesis::SpatialFrequency { u, v } => Bin::SpatialFrequency { u, v },
        }
    }
}

/// Pooled magnitudes over hypothesis bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisMap {
    pub values: Vec<f64>,
    pub bins: Vec<Bin>,
    pub threshold: f64,
}

impl HypothesisMap {
    pub fn new(values: Vec<f64>, bins: Vec<Bin>) -> Result<Self> {
        if values.len() != bins.len() {
            return Err(Error::Dimension("map values and bins differ in length".into()));
        }
        if values.iter().any(|v| !(*v >= 0.0)) {
            return domain("map values must be nonnegative");
        }
        Ok(Self { values, bins, threshold: f64::INFINITY })
    }

    pub fn with_threshold(mut self, gamma: f64) -> Self {
        self.threshold = gamma;
        self
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, v) in self.values.iter().enumerate() {
            if best.is_none_or(|b| *v > self.values[b]) {
                best = Some(i);
            }
        }
        best
    }

    /// Element-wise sum with a map over the same bins.
    pub fn accumulate(&mut self, other: &HypothesisMap, weight: f64) -> Result<()> {
        if self.bins != other.bins {
            return Err(Error::Consistency("maps are over different bins".into()));
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += weight * b;
        }
        Ok(())
    }

    pub fn scaled(mut self, s: f64) -> Self {
        for v in &mut self.values {
            *v *= s;
        }
        self
    }
}

/// DoA map: per azimuth bin, the sum of coefficient moduli over all
/// measurements (and over any height / ρ columns sharing that azimuth).
pub fn doa_map(coefficients: &[&[Complex64]], meta: &[Hypothesis]) -> Result<HypothesisMap> {
    let mut bins: Vec<Bin> = Vec::new();
    let mut index = Vec::with_capacity(meta.len());
    for (c, h) in meta.iter().enumerate() {
        let b = Bin::of(h, c);
        let i = match bins.iter().position(|x| *x == b) {
            Some(i) => i,
            None => {
                bins.push(b);
                bins.len() - 1
            }
        };
        index.push(i);
    }
    let mut values = vec![0.0; bins.len()];
    for (l, x) in coefficients.iter().enumerate() {
        if x.len() != meta.len() {
            return Err(Error::Consistency(format!("measurement {l} has {} coefficients for {} hypotheses", x.len(), meta.len())));
        }
        for (c, v) in x.iter().enumerate() {
            values[index[c]] += v.norm();
        }
    }
    HypothesisMap::new(values, bins)
}

/// Pooling over the ρ hypotheses of a height map.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    #[default]
    Mean,
    Max,
}

/// Height-map values: entry `i` (azimuth-major, heights inner) pools
/// `|x[i]|, |x[i + nh·naz]|, …` over the ρ stride.
pub fn height_map(x: &[Complex64], shape: HeightShape, pooling: Pooling) -> Result<Vec<f64>> {
    if x.len() != shape.len() {
        return Err(Error::Dimension(format!("{} coefficients for a {}-column height system", x.len(), shape.len())));
    }
    let stride = shape.heights * shape.azimuths;
    Ok((0..stride)
        .map(|i| {
            let it = x.iter().skip(i).step_by(stride).map(|v| v.norm());
            match pooling {
                Pooling::Mean => it.sum::<f64>() / shape.rhos as f64,
                Pooling::Max => it.fold(0.0, f64::max),
            }
        })
        .collect())
}

/// Height maps (one per azimuth) of a height-dictionary reconstruction,
/// averaged over the dictionary's blocks.
pub fn height_maps(dict: &Dictionary, rec: &Reconstruction, pooling: Pooling) -> Result<Vec<HypothesisMap>> {
    let shape = dict
        .shape()
        .ok_or_else(|| Error::Consistency("height maps need a height dictionary".into()))?;
    let blocks = rec.block_coefficients(dict);
    let mut acc = vec![0.0; shape.heights * shape.azimuths];
    for x in &blocks {
        for (a, v) in acc.iter_mut().zip(height_map(x, shape, pooling)?) {
            *a += v;
        }
    }
    let n = blocks.len() as f64;
    let meta = dict.block_meta();
    (0..shape.azimuths)
        .map(|j| {
            let range = j * shape.heights..(j + 1) * shape.heights;
            let bins = range
                .clone()
                .map(|c| match meta[c] {
                    Hypothesis::Multipath { azimuth, height, .. } => Ok(Bin::Height { azimuth, height }),
                    _ => Err(Error::Consistency("height dictionary carries non-multipath hypotheses".into())),
                })
                .collect::<Result<Vec<_>>>()?;
            HypothesisMap::new(acc[range].iter().map(|v| v / n).collect(), bins)
        })
        .collect()
}

/// A map bin above threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub index: usize,
    pub bin: Bin,
    pub value: f64,
}

/// All bins whose value exceeds `gamma`.
pub fn declare(map: &HypothesisMap, gamma: f64) -> Result<Vec<Detection>> {
    if !(gamma >= 0.0) {
        return domain("threshold must be nonnegative");
    }
    Ok(map
        .values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > gamma)
        .map(|(index, &value)| Detection { index, bin: map.bins[index], value })
        .collect())
}
