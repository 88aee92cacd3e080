//! Exact quadratic-cost optimal transport between discrete measures and
//! the transport-map algebra built from optimal plans.
//!
//! `w2` always goes through the LP so the 1d closed form in `w2_1d` stays
//! an independent route; the two are cross-checked rather than shared.

use thiserror::Error;

use crate::lp::LinearProgram;
use crate::measures::{linf_dist, sq_dist, DiscreteMeasure, MeasureCurve, MeasureError, Point};
use crate::quantile::{cost_1d, refine_breakpoints, SortedAtoms};
use crate::tolerances;

#[derive(Debug, Error)]
pub enum OtError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("one-dimensional operation applied to dimension {0}")]
    NotOneDimensional(usize),
    #[error("coupling table has {found} entries, expected {expected}")]
    TableShape { expected: usize, found: usize },
    #[error("coupling mass at ({row}, {col}) is negative ({value})")]
    NegativeMass { row: usize, col: usize, value: f64 },
    #[error("{side} marginal {index} sums to {sum}, expected {expected}")]
    MarginalMismatch {
        side: &'static str,
        index: usize,
        sum: f64,
        expected: f64,
    },
    #[error("source atom {index} has zero weight")]
    ZeroWeightSource { index: usize },
    #[error("map kind {0:?} cannot be inverted")]
    NotInvertibleKind(MapKind),
    #[error("map is not injective on its support")]
    NonInjectiveMap,
    #[error("map images are not monotone")]
    NotMonotone,
    #[error("image {index} does not match any support point of the outer map")]
    UnmatchedPoint { index: usize },
    #[error("curve has fewer than two samples")]
    TooFewSamples,
    #[error("transport solver failed: {0}")]
    Solver(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// How a transport map was obtained, which bounds what it certifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKind {
    /// Every source atom sent to a single target atom: a true Monge map.
    ExactMonge,
    /// Conditional mean of a mass-splitting plan; not a coupling witness.
    BarycentricProjection,
    /// Monotone rearrangement in one dimension.
    Monotone1d,
}

/// Nonnegative table with prescribed row and column sums: a transport plan
/// between two discrete measures.
#[derive(Debug, Clone)]
pub struct Coupling {
    source: DiscreteMeasure,
    target: DiscreteMeasure,
    table: Vec<f64>,
}

impl Coupling {
    pub fn new(
        source: DiscreteMeasure,
        target: DiscreteMeasure,
        mut table: Vec<f64>,
    ) -> Result<Self, OtError> {
        if source.dim() != target.dim() {
            return Err(OtError::DimensionMismatch {
                left: source.dim(),
                right: target.dim(),
            });
        }
        let (ms, ns) = (source.len(), target.len());
        if table.len() != ms * ns {
            return Err(OtError::TableShape {
                expected: ms * ns,
                found: table.len(),
            });
        }
        for i in 0..ms {
            for j in 0..ns {
                let v = table[i * ns + j];
                if v < 0.0 {
                    if v < -tolerances::SOLVER_AGREEMENT {
                        return Err(OtError::NegativeMass {
                            row: i,
                            col: j,
                            value: v,
                        });
                    }
                    table[i * ns + j] = 0.0;
                }
            }
        }
        for i in 0..ms {
            let sum: f64 = table[i * ns..(i + 1) * ns].iter().sum();
            if (sum - source.weight(i)).abs() > tolerances::SOLVER_AGREEMENT {
                return Err(OtError::MarginalMismatch {
                    side: "row",
                    index: i,
                    sum,
                    expected: source.weight(i),
                });
            }
        }
        for j in 0..ns {
            let sum: f64 = (0..ms).map(|i| table[i * ns + j]).sum();
            if (sum - target.weight(j)).abs() > tolerances::SOLVER_AGREEMENT {
                return Err(OtError::MarginalMismatch {
                    side: "column",
                    index: j,
                    sum,
                    expected: target.weight(j),
                });
            }
        }
        Ok(Coupling {
            source,
            target,
            table,
        })
    }

    /// Independent (product) coupling of the two measures.
    pub fn product(source: DiscreteMeasure, target: DiscreteMeasure) -> Result<Self, OtError> {
        let ns = target.len();
        let mut table = vec![0.0; source.len() * ns];
        for i in 0..source.len() {
            for j in 0..ns {
                table[i * ns + j] = source.weight(i) * target.weight(j);
            }
        }
        Coupling::new(source, target, table)
    }

    pub fn source(&self) -> &DiscreteMeasure {
        &self.source
    }

    pub fn target(&self) -> &DiscreteMeasure {
        &self.target
    }

    pub fn mass(&self, row: usize, col: usize) -> f64 {
        self.table[row * self.target.len() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let ns = self.target.len();
        &self.table[row * ns..(row + 1) * ns]
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// Transport cost of this plan under squared Euclidean distance.
    pub fn cost(&self) -> f64 {
        let ns = self.target.len();
        let mut acc = 0.0;
        for i in 0..self.source.len() {
            for j in 0..ns {
                let mass = self.table[i * ns + j];
                if mass > 0.0 {
                    acc += mass * sq_dist(self.source.point(i), self.target.point(j));
                }
            }
        }
        acc
    }
}

/// Deterministic assignment of an image point to every source atom,
/// together with how it was obtained and how faithfully it reproduces its
/// intended target (`fidelity` is a W2 distance; 0 means exact).
#[derive(Debug, Clone)]
pub struct TransportMap {
    source: DiscreteMeasure,
    images: Vec<Point>,
    kind: MapKind,
    fidelity: f64,
}

impl TransportMap {
    pub fn new(
        source: DiscreteMeasure,
        images: Vec<Point>,
        kind: MapKind,
        fidelity: f64,
    ) -> Result<Self, OtError> {
        if images.len() != source.len() {
            return Err(OtError::TableShape {
                expected: source.len(),
                found: images.len(),
            });
        }
        for img in &images {
            if img.len() != source.dim() {
                return Err(OtError::DimensionMismatch {
                    left: source.dim(),
                    right: img.len(),
                });
            }
        }
        if kind == MapKind::Monotone1d {
            if source.dim() != 1 {
                return Err(OtError::NotOneDimensional(source.dim()));
            }
            if !monotone_along_source(&source, &images) {
                return Err(OtError::NotMonotone);
            }
        }
        Ok(TransportMap {
            source,
            images,
            kind,
            fidelity,
        })
    }

    pub fn identity(measure: &DiscreteMeasure) -> TransportMap {
        let kind = if measure.dim() == 1 {
            MapKind::Monotone1d
        } else {
            MapKind::ExactMonge
        };
        TransportMap {
            source: measure.clone(),
            images: measure.points().to_vec(),
            kind,
            fidelity: 0.0,
        }
    }

    pub fn source(&self) -> &DiscreteMeasure {
        &self.source
    }

    pub fn images(&self) -> &[Point] {
        &self.images
    }

    pub fn image(&self, i: usize) -> &[f64] {
        &self.images[i]
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn fidelity(&self) -> f64 {
        self.fidelity
    }

    /// Image measure of the source under this map.
    pub fn push_forward(&self) -> DiscreteMeasure {
        DiscreteMeasure::new(self.images.clone(), self.source.weights().to_vec())
            .expect("image of a valid measure is valid")
            .merged()
    }

    /// True when no two image points coincide within the merge tolerance.
    pub fn is_injective(&self) -> bool {
        for i in 0..self.images.len() {
            for j in (i + 1)..self.images.len() {
                if linf_dist(&self.images[i], &self.images[j]) <= tolerances::MERGE {
                    return false;
                }
            }
        }
        true
    }
}

fn monotone_along_source(source: &DiscreteMeasure, images: &[Point]) -> bool {
    let mut order: Vec<usize> = (0..source.len()).collect();
    order.sort_by(|&a, &b| source.point(a)[0].total_cmp(&source.point(b)[0]));
    let mut prev = f64::NEG_INFINITY;
    for &i in &order {
        let y = images[i][0];
        if y < prev - tolerances::MERGE {
            return false;
        }
        prev = prev.max(y);
    }
    true
}

/// Exact squared Wasserstein-2 distance and an optimal plan, by LP.
/// Coincident atoms are merged (and zero weights dropped) before solving;
/// the returned plan lives on the merged supports.
pub fn w2(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<(f64, Coupling), OtError> {
    if mu.dim() != nu.dim() {
        return Err(OtError::DimensionMismatch {
            left: mu.dim(),
            right: nu.dim(),
        });
    }
    let a = mu.merged();
    let b = nu.merged();
    let (ms, ns) = (a.len(), b.len());
    if ms == 1 {
        let cost = b
            .points()
            .iter()
            .zip(b.weights())
            .map(|(q, w)| w * sq_dist(a.point(0), q))
            .sum();
        let table = b.weights().to_vec();
        return Ok((cost, Coupling::new(a, b, table)?));
    }
    if ns == 1 {
        let cost = a
            .points()
            .iter()
            .zip(a.weights())
            .map(|(p, w)| w * sq_dist(p, b.point(0)))
            .sum();
        let table = a.weights().to_vec();
        return Ok((cost, Coupling::new(a, b, table)?));
    }
    let mut lp = LinearProgram::new(ms + ns, ms * ns);
    for i in 0..ms {
        for j in 0..ns {
            let col = i * ns + j;
            lp.set_coeff(i, col, 1.0);
            lp.set_coeff(ms + j, col, 1.0);
            lp.set_cost(col, sq_dist(a.point(i), b.point(j)));
        }
        lp.set_rhs(i, a.weight(i));
    }
    for j in 0..ns {
        lp.set_rhs(ms + j, b.weight(j));
    }
    let sol = lp.solve().map_err(|e| OtError::Solver(e.to_string()))?;
    let cost = sol.value.max(0.0);
    Ok((cost, Coupling::new(a, b, sol.x)?))
}

/// Exact 1d squared Wasserstein-2 via the quantile closed form, together
/// with the monotone rearrangement map on the sorted merged source.
pub fn w2_1d(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<(f64, TransportMap), OtError> {
    if mu.dim() != 1 {
        return Err(OtError::NotOneDimensional(mu.dim()));
    }
    if nu.dim() != 1 {
        return Err(OtError::NotOneDimensional(nu.dim()));
    }
    let pa = SortedAtoms::from_measure(&mu.merged());
    let pb = SortedAtoms::from_measure(&nu.merged());
    let cuts = refine_breakpoints(&[&pa, &pb]);
    let k = pa.xs.len();
    let mut cost = 0.0;
    let mut image_acc = vec![0.0; k];
    let mut width_acc = vec![0.0; k];
    let mut prev = 0.0;
    for &c in &cuts {
        let q = 0.5 * (prev + c);
        let idx = pa.cum.partition_point(|&cc| cc < q).min(k - 1);
        let y = pb.quantile(q);
        let w = c - prev;
        let diff = pa.xs[idx] - y;
        cost += w * diff * diff;
        image_acc[idx] += w * y;
        width_acc[idx] += w;
        prev = c;
    }
    let source = DiscreteMeasure::new(
        pa.xs.iter().map(|&x| vec![x]).collect(),
        pa.ws.clone(),
    )?;
    let images: Vec<Point> = image_acc
        .iter()
        .zip(&width_acc)
        .map(|(acc, w)| vec![acc / w])
        .collect();
    let push = DiscreteMeasure::new(images.clone(), pa.ws.clone())?.merged();
    let fidelity = cost_1d(&SortedAtoms::from_measure(&push), &pb).max(0.0).sqrt();
    let map = TransportMap::new(source, images, MapKind::Monotone1d, fidelity)?;
    Ok((cost, map))
}

/// Collapses a plan to a map: each source atom goes to the conditional
/// mean of its row. Rows with a single active cell certify a Monge map
/// (fidelity 0); split rows downgrade the kind and record the actual W2
/// gap between the push-forward and the plan's target.
pub fn barycentric_projection(plan: &Coupling) -> Result<TransportMap, OtError> {
    let src = plan.source();
    let tgt = plan.target();
    let dim = tgt.dim();
    let mut images: Vec<Point> = Vec::with_capacity(src.len());
    let mut exact = true;
    for i in 0..src.len() {
        if src.weight(i) <= 0.0 {
            return Err(OtError::ZeroWeightSource { index: i });
        }
        let row = plan.row(i);
        let mut img = vec![0.0; dim];
        let mut row_sum = 0.0;
        let mut active = 0usize;
        for (j, &mass) in row.iter().enumerate() {
            if mass > 1e-14 {
                active += 1;
                row_sum += mass;
                for (acc, c) in img.iter_mut().zip(tgt.point(j)) {
                    *acc += mass * c;
                }
            }
        }
        if active == 0 {
            return Err(OtError::ZeroWeightSource { index: i });
        }
        for c in img.iter_mut() {
            *c /= row_sum;
        }
        if active > 1 {
            exact = false;
        }
        images.push(img);
    }
    let (kind, fidelity) = if exact {
        (MapKind::ExactMonge, 0.0)
    } else {
        let push = DiscreteMeasure::new(images.clone(), src.weights().to_vec())?.merged();
        let (gap, _) = w2(&push, tgt)?;
        (MapKind::BarycentricProjection, gap.max(0.0).sqrt())
    };
    TransportMap::new(src.clone(), images, kind, fidelity)
}

/// Inverse of an injective certified map: image atoms become the source,
/// each sent back where it came from.
pub fn invert_map(map: &TransportMap) -> Result<TransportMap, OtError> {
    match map.kind() {
        MapKind::ExactMonge | MapKind::Monotone1d => {}
        MapKind::BarycentricProjection => {
            return Err(OtError::NotInvertibleKind(map.kind()))
        }
    }
    if !map.is_injective() {
        return Err(OtError::NonInjectiveMap);
    }
    let source = map.push_forward();
    if source.len() != map.source().len() {
        return Err(OtError::NonInjectiveMap);
    }
    let images = map.source().points().to_vec();
    TransportMap::new(source, images, map.kind(), 0.0)
}

/// Composition `outer . inner`: follows each inner image to the matching
/// outer source atom (within the snap tolerance) and applies the outer map.
pub fn compose(outer: &TransportMap, inner: &TransportMap) -> Result<TransportMap, OtError> {
    if outer.source().dim() != inner.source().dim() {
        return Err(OtError::DimensionMismatch {
            left: outer.source().dim(),
            right: inner.source().dim(),
        });
    }
    let mut images: Vec<Point> = Vec::with_capacity(inner.source().len());
    for (index, img) in inner.images().iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (j, q) in outer.source().points().iter().enumerate() {
            let d = linf_dist(img, q);
            if d <= tolerances::SNAP && best.map_or(true, |(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        let (j, _) = best.ok_or(OtError::UnmatchedPoint { index })?;
        images.push(outer.image(j).to_vec());
    }
    let kind = match (outer.kind(), inner.kind()) {
        (MapKind::BarycentricProjection, _) | (_, MapKind::BarycentricProjection) => {
            MapKind::BarycentricProjection
        }
        (MapKind::Monotone1d, MapKind::Monotone1d) => MapKind::Monotone1d,
        _ => MapKind::ExactMonge,
    };
    TransportMap::new(
        inner.source().clone(),
        images,
        kind,
        outer.fidelity() + inner.fidelity(),
    )
}

/// Largest W2 distance between consecutive curve samples: the curve's
/// discrete continuity modulus.
pub fn max_w2_jump(curve: &MeasureCurve) -> Result<f64, OtError> {
    if curve.len() < 2 {
        return Err(OtError::TooFewSamples);
    }
    let mut worst = 0.0f64;
    for pair in curve.samples().windows(2) {
        let (cost, _) = w2(&pair[0].measure, &pair[1].measure)?;
        worst = worst.max(cost.max(0.0).sqrt());
    }
    Ok(worst)
}
