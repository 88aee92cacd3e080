//! Helpers shared by the integration suites: seeded generators for measures
//! and curves, plus the closed-form one-dimensional barycenter used as an
//! independent oracle against the solver routes.
#![allow(dead_code)]

use curvebary::measures::{CurveSample, DiscreteMeasure, Interpolation, MeasureCurve};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_measure(rng: &mut ChaCha8Rng, dim: usize, max_atoms: usize) -> DiscreteMeasure {
    let k = rng.gen_range(1..=max_atoms);
    let points: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.into_iter().map(|w| w / total).collect();
    DiscreteMeasure::new(points, weights).unwrap()
}

/// k strictly increasing atoms of weight 1/k each.
pub fn random_uniform_measure_1d(rng: &mut ChaCha8Rng, k: usize) -> DiscreteMeasure {
    let mut x = rng.gen_range(-2.0..0.0);
    let mut points = Vec::with_capacity(k);
    for _ in 0..k {
        points.push(vec![x]);
        x += rng.gen_range(0.1..1.0);
    }
    DiscreteMeasure::new(points, vec![1.0 / k as f64; k]).unwrap()
}

pub fn random_weights(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

pub fn curve_from(samples: Vec<(f64, DiscreteMeasure)>) -> MeasureCurve {
    let samples = samples
        .into_iter()
        .map(|(t, measure)| CurveSample {
            t,
            measure,
            density: None,
        })
        .collect();
    MeasureCurve::new(samples, Interpolation::Nearest).unwrap()
}

/// Curve with one random marginal per time j/s, so an s-node quadrature
/// hits the samples exactly.
pub fn random_curve_1d(
    rng: &mut ChaCha8Rng,
    s: usize,
    max_atoms: usize,
) -> (MeasureCurve, Vec<DiscreteMeasure>) {
    let samples: Vec<(f64, DiscreteMeasure)> = (1..=s)
        .map(|j| (j as f64 / s as f64, random_measure(rng, 1, max_atoms)))
        .collect();
    let marginals = samples.iter().map(|(_, m)| m.clone()).collect();
    (curve_from(samples), marginals)
}

/// Test-side quantile table: sorted atoms with cumulative weights.
pub struct QuantileTable {
    pub positions: Vec<f64>,
    pub cums: Vec<f64>,
}

impl QuantileTable {
    pub fn new(measure: &DiscreteMeasure) -> Self {
        let mut pairs: Vec<(f64, f64)> = measure
            .points()
            .iter()
            .map(|p| p[0])
            .zip(measure.weights().iter().copied())
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut cums = Vec::with_capacity(pairs.len());
        let mut acc = 0.0;
        for &(_, w) in &pairs {
            acc += w;
            cums.push(acc);
        }
        QuantileTable {
            positions: pairs.into_iter().map(|(x, _)| x).collect(),
            cums,
        }
    }

    /// Value at an interior mass level (never evaluated at a jump).
    pub fn at(&self, q: f64) -> f64 {
        let i = self.cums.partition_point(|&c| c < q);
        self.positions[i.min(self.positions.len() - 1)]
    }
}

/// Closed-form 1d barycenter: average the quantile functions over the
/// common refinement of all cumulative breakpoints, evaluated at cell
/// midpoints. Returns the measure and the weighted squared-distance
/// objective it attains.
pub fn quantile_average_oracle(
    marginals: &[DiscreteMeasure],
    weights: &[f64],
) -> (DiscreteMeasure, f64) {
    let tables: Vec<QuantileTable> = marginals.iter().map(QuantileTable::new).collect();
    let mut cuts: Vec<f64> = tables.iter().flat_map(|t| t.cums.iter().copied()).collect();
    cuts.push(1.0);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    let mut points = Vec::new();
    let mut cell_weights = Vec::new();
    let mut objective = 0.0;
    let mut prev = 0.0;
    for &c in &cuts {
        let width = c - prev;
        if width <= 1e-12 {
            continue;
        }
        let mid = 0.5 * (prev + c);
        let avg: f64 = tables
            .iter()
            .zip(weights)
            .map(|(t, w)| w * t.at(mid))
            .sum();
        for (t, w) in tables.iter().zip(weights) {
            objective += w * width * (t.at(mid) - avg) * (t.at(mid) - avg);
        }
        points.push(vec![avg]);
        cell_weights.push(width);
        prev = c;
    }
    (DiscreteMeasure::new(points, cell_weights).unwrap(), objective)
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
