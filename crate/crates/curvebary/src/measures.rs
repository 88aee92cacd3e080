//! Discrete probability measures, time-indexed curves of them, and the
//! quadrature grids used to discretize a curve in time.

use thiserror::Error;

use crate::lp::LinearProgram;
use crate::quantile::{refine_breakpoints, SortedAtoms};
use crate::tolerances;

pub type Point = Vec<f64>;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("measure needs at least one support point")]
    EmptySupport,
    #[error("points and weights disagree in length ({points} vs {weights})")]
    LengthMismatch { points: usize, weights: usize },
    #[error("point {index} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("dimension mismatch: {left} vs {right}")]
    MixedDimensions { left: usize, right: usize },
    #[error("weight {index} is negative ({value})")]
    NegativeWeight { index: usize, value: f64 },
    #[error("weights sum to {sum}, expected 1")]
    WeightSum { sum: f64 },
    #[error("non-finite coordinate or weight at index {index}")]
    NonFinite { index: usize },
    #[error("curve sample times must be strictly increasing within [0, 1]")]
    InvalidTimes,
    #[error("density flag at t={t} needs a positive finite sup-norm")]
    InvalidDensityFlag { t: f64 },
    #[error("quantile interpolation needs one-dimensional samples")]
    QuantileNeedsOneDim,
    #[error("time grid needs at least one node")]
    EmptyGrid,
    #[error("time grid nodes must be sorted ascending within [0, 1]")]
    InvalidGridNodes,
    #[error("bounded-density sampling needs at least one flagged sample")]
    NoBoundedDensitySamples,
    #[error("mixture parameter {0} outside [0, 1]")]
    InvalidMixture(f64),
    #[error("translation has dimension {found}, expected {expected}")]
    BadShift { expected: usize, found: usize },
}

/// Finitely supported probability measure on R^n.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    points: Vec<Point>,
    weights: Vec<f64>,
    dim: usize,
}

impl DiscreteMeasure {
    /// Validates support and weights: nonempty, consistent dimensions,
    /// finite entries, nonnegative weights summing to one within 1e-12.
    pub fn new(points: Vec<Point>, weights: Vec<f64>) -> Result<Self, MeasureError> {
        if points.is_empty() {
            return Err(MeasureError::EmptySupport);
        }
        if points.len() != weights.len() {
            return Err(MeasureError::LengthMismatch {
                points: points.len(),
                weights: weights.len(),
            });
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(MeasureError::DimensionMismatch {
                index: 0,
                expected: 1,
                found: 0,
            });
        }
        for (index, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(MeasureError::DimensionMismatch {
                    index,
                    expected: dim,
                    found: p.len(),
                });
            }
            if p.iter().any(|c| !c.is_finite()) {
                return Err(MeasureError::NonFinite { index });
            }
        }
        let mut sum = 0.0;
        for (index, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(MeasureError::NonFinite { index });
            }
            if w < 0.0 {
                return Err(MeasureError::NegativeWeight { index, value: w });
            }
            sum += w;
        }
        if (sum - 1.0).abs() > tolerances::WEIGHT_SUM {
            return Err(MeasureError::WeightSum { sum });
        }
        Ok(DiscreteMeasure {
            points,
            weights,
            dim,
        })
    }

    pub fn dirac(point: Point) -> Result<Self, MeasureError> {
        DiscreteMeasure::new(vec![point], vec![1.0])
    }

    /// Equal weights on the given points.
    pub fn uniform(points: Vec<Point>) -> Result<Self, MeasureError> {
        let k = points.len();
        if k == 0 {
            return Err(MeasureError::EmptySupport);
        }
        DiscreteMeasure::new(points, vec![1.0 / k as f64; k])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    /// Integral of |x|^2.
    pub fn second_moment(&self) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * p.iter().map(|c| c * c).sum::<f64>())
            .sum()
    }

    pub fn mean(&self) -> Point {
        let mut out = vec![0.0; self.dim];
        for (p, w) in self.points.iter().zip(&self.weights) {
            for (o, c) in out.iter_mut().zip(p) {
                *o += w * c;
            }
        }
        out
    }

    /// Same measure with coincident atoms (sup-norm within 1e-12) merged
    /// and zero-weight atoms dropped.
    pub fn merged(&self) -> DiscreteMeasure {
        let mut points: Vec<Point> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for (p, &w) in self.points.iter().zip(&self.weights) {
            if w <= 0.0 {
                continue;
            }
            match points
                .iter()
                .position(|q| linf_dist(q, p) <= tolerances::MERGE)
            {
                Some(k) => weights[k] += w,
                None => {
                    points.push(p.clone());
                    weights.push(w);
                }
            }
        }
        if points.is_empty() {
            return self.clone();
        }
        DiscreteMeasure {
            points,
            weights,
            dim: self.dim,
        }
    }

    /// Convex combination (1-s) a + s b as measures: supports concatenate,
    /// weights scale.
    pub fn mixture(a: &Self, b: &Self, s: f64) -> Result<Self, MeasureError> {
        if a.dim != b.dim {
            return Err(MeasureError::MixedDimensions {
                left: a.dim,
                right: b.dim,
            });
        }
        if !(0.0..=1.0).contains(&s) {
            return Err(MeasureError::InvalidMixture(s));
        }
        let mut points = a.points.clone();
        points.extend(b.points.iter().cloned());
        let mut weights: Vec<f64> = a.weights.iter().map(|w| w * (1.0 - s)).collect();
        weights.extend(b.weights.iter().map(|w| w * s));
        Ok(DiscreteMeasure {
            points,
            weights,
            dim: a.dim,
        })
    }

    pub fn translate(&self, shift: &[f64]) -> Result<Self, MeasureError> {
        if shift.len() != self.dim {
            return Err(MeasureError::BadShift {
                expected: self.dim,
                found: shift.len(),
            });
        }
        let points = self
            .points
            .iter()
            .map(|p| p.iter().zip(shift).map(|(c, s)| c + s).collect())
            .collect();
        Ok(DiscreteMeasure {
            points,
            weights: self.weights.clone(),
            dim: self.dim,
        })
    }

    /// Bitwise equality of supports and weights, order included.
    pub fn same_atoms(&self, other: &Self) -> bool {
        self.points == other.points && self.weights == other.weights
    }
}

pub(crate) fn linf_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Absolute-continuity annotation carried by a curve sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityFlags {
    pub is_ac: bool,
    /// Sup-norm of the underlying density, when known.
    pub linf_norm: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct CurveSample {
    pub t: f64,
    pub measure: DiscreteMeasure,
    pub density: Option<DensityFlags>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    /// Piecewise-constant in time: evaluate at the nearest sample.
    Nearest,
    /// Linear in quantile functions between bracketing samples (1d only).
    Quantile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingStrategy {
    /// Right endpoints i/N snapped to the nearest sample time.
    Uniform,
    /// Within each interval ((i-1)/N, i/N], pick the earliest sample
    /// flagged absolutely continuous with a finite density sup-norm;
    /// fall back to the uniform node when the interval has none.
    PreferBoundedDensity,
}

/// Measure-valued curve on [0, 1], known at finitely many times.
#[derive(Debug, Clone)]
pub struct MeasureCurve {
    samples: Vec<CurveSample>,
    interpolation: Interpolation,
    dim: usize,
}

impl MeasureCurve {
    pub fn new(
        samples: Vec<CurveSample>,
        interpolation: Interpolation,
    ) -> Result<Self, MeasureError> {
        if samples.is_empty() {
            return Err(MeasureError::EmptySupport);
        }
        let dim = samples[0].measure.dim();
        let mut prev = f64::NEG_INFINITY;
        for s in &samples {
            if !s.t.is_finite() || s.t < -tolerances::WEIGHT_SUM || s.t > 1.0 + tolerances::WEIGHT_SUM
            {
                return Err(MeasureError::InvalidTimes);
            }
            if s.t <= prev {
                return Err(MeasureError::InvalidTimes);
            }
            prev = s.t;
            if s.measure.dim() != dim {
                return Err(MeasureError::MixedDimensions {
                    left: dim,
                    right: s.measure.dim(),
                });
            }
            if let Some(flags) = s.density {
                if let Some(k) = flags.linf_norm {
                    if !k.is_finite() || k <= 0.0 {
                        return Err(MeasureError::InvalidDensityFlag { t: s.t });
                    }
                }
            }
        }
        if interpolation == Interpolation::Quantile && dim != 1 {
            return Err(MeasureError::QuantileNeedsOneDim);
        }
        Ok(MeasureCurve {
            samples,
            interpolation,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn samples(&self) -> &[CurveSample] {
        &self.samples
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    /// Index of the sample whose time is nearest to `t` (later wins ties, so
    /// snapped quadrature nodes lean toward the right neighbor, which keeps
    /// the flagged-node count of preferring grids sharp).
    pub fn nearest_sample_index(&self, t: f64) -> usize {
        let mut best = 0usize;
        let mut best_dist = f64::INFINITY;
        for (i, s) in self.samples.iter().enumerate() {
            let d = (s.t - t).abs();
            if d <= best_dist + 1e-15 {
                best = i;
                best_dist = d;
            }
        }
        best
    }

    /// Index of the sample at exactly (within 1e-12) time `t`.
    pub fn sample_index_at(&self, t: f64) -> Option<usize> {
        self.samples
            .iter()
            .position(|s| (s.t - t).abs() <= tolerances::MERGE)
    }

    /// Marginal at time `t` under the curve's interpolation rule. Times
    /// outside the sampled range clamp to the closest end.
    pub fn evaluate(&self, t: f64) -> DiscreteMeasure {
        match self.interpolation {
            Interpolation::Nearest => {
                self.samples[self.nearest_sample_index(t)].measure.clone()
            }
            Interpolation::Quantile => {
                let first = self.samples.first().unwrap();
                let last = self.samples.last().unwrap();
                let t = t.clamp(first.t, last.t);
                if let Some(i) = self.sample_index_at(t) {
                    return self.samples[i].measure.clone();
                }
                let hi = self.samples.partition_point(|s| s.t < t);
                let (a, b) = (&self.samples[hi - 1], &self.samples[hi]);
                let theta = (t - a.t) / (b.t - a.t);
                let pa = SortedAtoms::from_measure(&a.measure);
                let pb = SortedAtoms::from_measure(&b.measure);
                let cuts = refine_breakpoints(&[&pa, &pb]);
                let mut points = Vec::with_capacity(cuts.len());
                let mut weights = Vec::with_capacity(cuts.len());
                let mut prev = 0.0;
                for &c in &cuts {
                    let q = 0.5 * (prev + c);
                    points.push(vec![
                        (1.0 - theta) * pa.quantile(q) + theta * pb.quantile(q),
                    ]);
                    weights.push(c - prev);
                    prev = c;
                }
                DiscreteMeasure::new(points, weights)
                    .expect("interpolated cells form a probability vector")
                    .merged()
            }
        }
    }

    /// Times of samples flagged absolutely continuous with a finite
    /// positive density sup-norm.
    pub fn bounded_density_times(&self) -> Vec<f64> {
        self.samples
            .iter()
            .filter(|s| {
                s.density
                    .map_or(false, |f| f.is_ac && f.linf_norm.is_some())
            })
            .map(|s| s.t)
            .collect()
    }

    /// Largest flagged density sup-norm, when any sample carries one.
    pub fn density_ceiling(&self) -> Option<f64> {
        self.samples
            .iter()
            .filter(|s| s.density.map_or(false, |f| f.is_ac))
            .filter_map(|s| s.density.and_then(|f| f.linf_norm))
            .fold(None, |acc, k| Some(acc.map_or(k, |a: f64| a.max(k))))
    }

    /// Union of all sample supports.
    pub fn support_union(&self) -> Vec<Point> {
        self.samples
            .iter()
            .flat_map(|s| s.measure.points().iter().cloned())
            .collect()
    }

    /// Quadrature grid with N nodes of weight 1/N; every node is one of
    /// the curve's sample times.
    pub fn sample_times(
        &self,
        n: usize,
        strategy: SamplingStrategy,
    ) -> Result<TimeGrid, MeasureError> {
        if n == 0 {
            return Err(MeasureError::EmptyGrid);
        }
        let flagged = match strategy {
            SamplingStrategy::Uniform => Vec::new(),
            SamplingStrategy::PreferBoundedDensity => {
                let f = self.bounded_density_times();
                if f.is_empty() {
                    return Err(MeasureError::NoBoundedDensitySamples);
                }
                f
            }
        };
        let mut nodes = Vec::with_capacity(n);
        for i in 1..=n {
            let lo = (i - 1) as f64 / n as f64;
            let hi = i as f64 / n as f64;
            let pick = flagged.iter().copied().find(|&t| {
                let above = if i == 1 {
                    t >= -tolerances::MERGE
                } else {
                    t > lo + tolerances::MERGE
                };
                above && t <= hi + tolerances::MERGE
            });
            let node =
                pick.unwrap_or_else(|| self.samples[self.nearest_sample_index(hi)].t);
            nodes.push(node);
        }
        nodes.sort_by(f64::total_cmp);
        TimeGrid::new(nodes, vec![1.0 / n as f64; n])
    }
}

/// Quadrature nodes with weights, sorted ascending in [0, 1]. Duplicate
/// nodes are allowed: a node appearing k times carries k/N of the mass.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl TimeGrid {
    pub fn new(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self, MeasureError> {
        if nodes.is_empty() {
            return Err(MeasureError::EmptyGrid);
        }
        if nodes.len() != weights.len() {
            return Err(MeasureError::LengthMismatch {
                points: nodes.len(),
                weights: weights.len(),
            });
        }
        let mut prev = f64::NEG_INFINITY;
        for &t in &nodes {
            if !t.is_finite()
                || t < -tolerances::WEIGHT_SUM
                || t > 1.0 + tolerances::WEIGHT_SUM
                || t < prev
            {
                return Err(MeasureError::InvalidGridNodes);
            }
            prev = t;
        }
        let mut sum = 0.0;
        for (index, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(MeasureError::NonFinite { index });
            }
            if w < 0.0 {
                return Err(MeasureError::NegativeWeight { index, value: w });
            }
            sum += w;
        }
        if (sum - 1.0).abs() > tolerances::WEIGHT_SUM {
            return Err(MeasureError::WeightSum { sum });
        }
        Ok(TimeGrid { nodes, weights })
    }

    /// Equal weights on the given (sorted) nodes.
    pub fn uniform(nodes: Vec<f64>) -> Result<Self, MeasureError> {
        let n = nodes.len();
        if n == 0 {
            return Err(MeasureError::EmptyGrid);
        }
        TimeGrid::new(nodes, vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }
}

/// True when every support point of `measure` lies in the convex hull of
/// the union of the curve's sample supports (LP membership per point).
pub fn convex_hull_support_check(
    measure: &DiscreteMeasure,
    curve: &MeasureCurve,
) -> Result<bool, MeasureError> {
    if measure.dim() != curve.dim() {
        return Err(MeasureError::MixedDimensions {
            left: measure.dim(),
            right: curve.dim(),
        });
    }
    let vertices = curve.support_union();
    Ok(measure
        .points()
        .iter()
        .all(|p| point_in_hull(p, &vertices)))
}

/// Membership via the L1-residual program: minimize |Σ θ_j v_j - p|_1 over
/// convex weights θ. Inside means residual below the hull tolerance.
pub(crate) fn point_in_hull(p: &[f64], vertices: &[Point]) -> bool {
    let n = p.len();
    let k = vertices.len();
    let mut lp = LinearProgram::new(n + 1, k + 2 * n);
    for d in 0..n {
        for (j, v) in vertices.iter().enumerate() {
            lp.set_coeff(d, j, v[d]);
        }
        lp.set_coeff(d, k + d, 1.0);
        lp.set_coeff(d, k + n + d, -1.0);
        lp.set_rhs(d, p[d]);
        lp.set_cost(k + d, 1.0);
        lp.set_cost(k + n + d, 1.0);
    }
    for j in 0..k {
        lp.set_coeff(n, j, 1.0);
    }
    lp.set_rhs(n, 1.0);
    let scale = 1.0 + p.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    match lp.solve() {
        Ok(sol) => sol.value <= tolerances::HULL * scale,
        Err(_) => false,
    }
}
