//! Barycenters of finitely many discrete measures under squared W2, curve
//! barycenters over refining time grids, and density ceilings.
//!
//! The fixed-grid solver is the ground-truth path: one exact LP over all
//! couplings sharing a first marginal on the grid. The free-support
//! fixed-point iteration x <- sum_i lambda_i T_i(x) is the fast path and is
//! cross-checked against the grid solver and the 1d closed form in tests.

use std::collections::HashMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::lp::LinearProgram;
use crate::measures::{sq_dist, DiscreteMeasure, MeasureCurve, MeasureError, Point, SamplingStrategy};
use crate::ot::{barycentric_projection, w2, Coupling, OtError, TransportMap};
use crate::quantile::{refine_breakpoints, SortedAtoms};
use crate::tolerances;

/// Largest product/candidate grid the exact solvers will accept.
pub const GRID_CAP: usize = 10_000;

#[derive(Debug, Error)]
pub enum BarycenterError {
    #[error("barycenter needs at least one marginal")]
    NoMarginals,
    #[error("{marginals} marginals but {weights} weights")]
    LengthMismatch { marginals: usize, weights: usize },
    #[error("marginal dimensions differ: {left} vs {right}")]
    MixedDimensions { left: usize, right: usize },
    #[error("weight {index} must be positive (got {value})")]
    NonPositiveWeight { index: usize, value: f64 },
    #[error("weights sum to {sum}, expected 1")]
    WeightSum { sum: f64 },
    #[error("fixed grid needs at least one point")]
    EmptyGrid,
    #[error("grid point dimension {found} does not match marginals ({expected})")]
    GridDimension { expected: usize, found: usize },
    #[error("candidate grid would have {size} points (cap {cap})")]
    GridCapExceeded { size: usize, cap: usize },
    #[error(
        "free-support iteration did not converge: residual {residual:.3e} after {iterations} iterations"
    )]
    NonConvergence { residual: f64, iterations: usize },
    #[error("schedule must be a nondecreasing list of positive grid sizes")]
    InvalidSchedule,
    #[error("no marginal carries a finite density sup-norm")]
    NoBoundedMarginals,
    #[error("density norm index {index} out of range")]
    BadNormIndex { index: usize },
    #[error("invalid density parameter {name} = {value}")]
    InvalidDensityParameter { name: &'static str, value: f64 },
    #[error("grid solver failed: {0}")]
    Solver(String),
    #[error(transparent)]
    Ot(#[from] OtError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

#[derive(Debug, Clone)]
pub enum SupportMode {
    /// Optimize weights over the given candidate support (exact LP).
    FixedGrid(Vec<Point>),
    /// Fixed-point iteration on a moving support.
    FreeSupport {
        /// Requested number of starting atoms; None lets the initializer
        /// decide (common quantile refinement in 1d, the largest marginal
        /// support otherwise).
        size: Option<usize>,
        /// Explicit starting measure, overriding the default rule.
        init: Option<DiscreteMeasure>,
    },
}

impl SupportMode {
    pub fn free_support() -> Self {
        SupportMode::FreeSupport {
            size: None,
            init: None,
        }
    }

    pub fn free_support_sized(k: usize) -> Self {
        SupportMode::FreeSupport {
            size: Some(k),
            init: None,
        }
    }

    pub fn free_support_from(init: DiscreteMeasure) -> Self {
        SupportMode::FreeSupport {
            size: None,
            init: Some(init),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BarycenterProblem {
    marginals: Vec<DiscreteMeasure>,
    weights: Vec<f64>,
    support_mode: SupportMode,
}

impl BarycenterProblem {
    pub fn new(
        marginals: Vec<DiscreteMeasure>,
        weights: Vec<f64>,
        support_mode: SupportMode,
    ) -> Result<Self, BarycenterError> {
        validate_family(&marginals, &weights)?;
        if let SupportMode::FixedGrid(grid) = &support_mode {
            if grid.is_empty() {
                return Err(BarycenterError::EmptyGrid);
            }
            let dim = marginals[0].dim();
            if let Some(p) = grid.iter().find(|p| p.len() != dim) {
                return Err(BarycenterError::GridDimension {
                    expected: dim,
                    found: p.len(),
                });
            }
        }
        Ok(BarycenterProblem {
            marginals,
            weights,
            support_mode,
        })
    }

    pub fn marginals(&self) -> &[DiscreteMeasure] {
        &self.marginals
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn support_mode(&self) -> &SupportMode {
        &self.support_mode
    }
}

fn validate_family(
    marginals: &[DiscreteMeasure],
    weights: &[f64],
) -> Result<(), BarycenterError> {
    if marginals.is_empty() {
        return Err(BarycenterError::NoMarginals);
    }
    if marginals.len() != weights.len() {
        return Err(BarycenterError::LengthMismatch {
            marginals: marginals.len(),
            weights: weights.len(),
        });
    }
    let dim = marginals[0].dim();
    for m in marginals {
        if m.dim() != dim {
            return Err(BarycenterError::MixedDimensions {
                left: dim,
                right: m.dim(),
            });
        }
    }
    let mut sum = 0.0;
    for (index, &w) in weights.iter().enumerate() {
        if !w.is_finite() || w <= 0.0 {
            return Err(BarycenterError::NonPositiveWeight { index, value: w });
        }
        sum += w;
    }
    if (sum - 1.0).abs() > tolerances::WEIGHT_SUM {
        return Err(BarycenterError::WeightSum { sum });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct BarycenterResult {
    pub measure: DiscreteMeasure,
    /// sum_i lambda_i W2^2(measure, mu_i).
    pub objective: f64,
    /// One map per marginal, from `measure` to it.
    pub maps: Vec<TransportMap>,
    /// max over support points of |sum_i lambda_i T_i(x) - x|.
    pub fixed_point_residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Support movement below this stops the free-support iteration.
    pub movement_tol: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            movement_tol: tolerances::FREE_SUPPORT_MOVEMENT,
            max_iterations: tolerances::FREE_SUPPORT_MAX_ITERS,
        }
    }
}

/// One row of the curve-barycenter convergence log.
#[derive(Debug, Clone, Copy)]
pub struct ConvergenceRecord {
    pub n: usize,
    /// Grid quadrature of the curve objective at this resolution.
    pub objective: f64,
    /// W2 distance to the previous schedule entry's result (absent first).
    pub w2_step: Option<f64>,
    pub fixed_point_residual: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct DensityBoundReport {
    pub bound: f64,
    pub histogram_max: f64,
    pub cell_size: f64,
    pub satisfied: bool,
}

pub fn finite_barycenter(problem: &BarycenterProblem) -> Result<BarycenterResult, BarycenterError> {
    finite_barycenter_with(problem, &SolverOptions::default())
}

pub fn finite_barycenter_with(
    problem: &BarycenterProblem,
    opts: &SolverOptions,
) -> Result<BarycenterResult, BarycenterError> {
    let marginals: Vec<DiscreteMeasure> =
        problem.marginals.iter().map(|m| m.merged()).collect();
    match &problem.support_mode {
        SupportMode::FixedGrid(grid) => solve_fixed_grid(&marginals, &problem.weights, grid),
        SupportMode::FreeSupport { size, init } => {
            let start = match (init, size) {
                (Some(measure), _) => {
                    if measure.dim() != marginals[0].dim() {
                        return Err(BarycenterError::MixedDimensions {
                            left: marginals[0].dim(),
                            right: measure.dim(),
                        });
                    }
                    measure.merged()
                }
                (None, Some(k)) => sized_init(&marginals, &problem.weights, *k),
                (None, None) => auto_init(&marginals, &problem.weights),
            };
            solve_free_support(&marginals, &problem.weights, start, opts)
        }
    }
}

/// Default free-support start: per-cell weighted quantile means on the
/// common refinement in 1d, otherwise the largest marginal support.
fn auto_init(marginals: &[DiscreteMeasure], weights: &[f64]) -> DiscreteMeasure {
    if marginals[0].dim() == 1 {
        quantile_mean_init(marginals, weights)
    } else {
        let best = marginals
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| a.len().cmp(&b.len()).then(ib.cmp(ia)))
            .map(|(_, m)| m)
            .unwrap();
        best.clone()
    }
}

fn quantile_mean_init(marginals: &[DiscreteMeasure], weights: &[f64]) -> DiscreteMeasure {
    let profiles: Vec<SortedAtoms> = marginals.iter().map(SortedAtoms::from_measure).collect();
    let refs: Vec<&SortedAtoms> = profiles.iter().collect();
    let cuts = refine_breakpoints(&refs);
    let mut points = Vec::with_capacity(cuts.len());
    let mut ws = Vec::with_capacity(cuts.len());
    let mut prev = 0.0;
    for &c in &cuts {
        let q = 0.5 * (prev + c);
        let x: f64 = profiles
            .iter()
            .zip(weights)
            .map(|(p, lam)| lam * p.quantile(q))
            .sum();
        points.push(vec![x]);
        ws.push(c - prev);
        prev = c;
    }
    DiscreteMeasure::new(points, ws)
        .expect("refinement cells form a probability vector")
        .merged()
}

fn sized_init(marginals: &[DiscreteMeasure], weights: &[f64], k: usize) -> DiscreteMeasure {
    let k = k.max(1);
    if marginals[0].dim() == 1 {
        let profiles: Vec<SortedAtoms> =
            marginals.iter().map(SortedAtoms::from_measure).collect();
        let points: Vec<Point> = (0..k)
            .map(|j| {
                let q = (j as f64 + 0.5) / k as f64;
                vec![profiles
                    .iter()
                    .zip(weights)
                    .map(|(p, lam)| lam * p.quantile(q))
                    .sum()]
            })
            .collect();
        return DiscreteMeasure::new(points, vec![1.0 / k as f64; k])
            .expect("uniform cells form a probability vector")
            .merged();
    }
    let auto = auto_init(marginals, weights).merged();
    if auto.len() <= k {
        return auto;
    }
    // Keep the k heaviest atoms (stable on ties) and renormalize.
    let mut order: Vec<usize> = (0..auto.len()).collect();
    order.sort_by(|&a, &b| auto.weight(b).total_cmp(&auto.weight(a)).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    let mass: f64 = order.iter().map(|&i| auto.weight(i)).sum();
    let points = order.iter().map(|&i| auto.point(i).to_vec()).collect();
    let ws = order.iter().map(|&i| auto.weight(i) / mass).collect();
    DiscreteMeasure::new(points, ws).expect("renormalized atoms form a probability vector")
}

fn solve_free_support(
    marginals: &[DiscreteMeasure],
    weights: &[f64],
    start: DiscreteMeasure,
    opts: &SolverOptions,
) -> Result<BarycenterResult, BarycenterError> {
    let mut candidate = start.merged();
    let mut last_residual = f64::INFINITY;
    for iteration in 1..=opts.max_iterations {
        let solved: Vec<(f64, Coupling)> = marginals
            .par_iter()
            .map(|mu| w2(&candidate, mu))
            .collect::<Result<_, OtError>>()?;
        let maps: Vec<TransportMap> = solved
            .iter()
            .map(|(_, plan)| barycentric_projection(plan))
            .collect::<Result<_, OtError>>()?;
        let dim = candidate.dim();
        let mut moved: Vec<Point> = vec![vec![0.0; dim]; candidate.len()];
        for (lam, map) in weights.iter().zip(&maps) {
            for (avg, img) in moved.iter_mut().zip(map.images()) {
                for (a, c) in avg.iter_mut().zip(img) {
                    *a += lam * c;
                }
            }
        }
        let residual = candidate
            .points()
            .iter()
            .zip(&moved)
            .map(|(p, q)| sq_dist(p, q).sqrt())
            .fold(0.0, f64::max);
        if residual <= opts.movement_tol {
            let objective = weights
                .iter()
                .zip(&solved)
                .map(|(lam, (cost, _))| lam * cost)
                .sum::<f64>()
                .max(0.0);
            return Ok(BarycenterResult {
                measure: candidate,
                objective,
                maps,
                fixed_point_residual: residual,
                iterations: iteration,
            });
        }
        last_residual = residual;
        candidate = DiscreteMeasure::new(moved, candidate.weights().to_vec())?.merged();
    }
    Err(BarycenterError::NonConvergence {
        residual: last_residual,
        iterations: opts.max_iterations,
    })
}

/// Exact LP over couplings sharing a free first marginal supported on the
/// grid. Variables: one mass per grid atom, plus one coupling table per
/// marginal; shared-mass rows tie every table's rows to the grid masses.
fn solve_fixed_grid(
    marginals: &[DiscreteMeasure],
    weights: &[f64],
    grid_in: &[Point],
) -> Result<BarycenterResult, BarycenterError> {
    let mut grid: Vec<Point> = Vec::new();
    for p in grid_in {
        if !grid
            .iter()
            .any(|q| crate::measures::linf_dist(q, p) <= tolerances::MERGE)
        {
            grid.push(p.clone());
        }
    }
    let g = grid.len();
    if g > GRID_CAP {
        return Err(BarycenterError::GridCapExceeded {
            size: g,
            cap: GRID_CAP,
        });
    }
    let m = marginals.len();
    let sizes: Vec<usize> = marginals.iter().map(|mu| mu.len()).collect();
    let total: usize = sizes.iter().sum();
    let nrows = total + m * g;
    let ncols = g + g * total;
    let mut lp = LinearProgram::new(nrows, ncols);
    let mut col_offset = g;
    let mut row_offset = 0;
    for (i, mu) in marginals.iter().enumerate() {
        let k_i = sizes[i];
        for k in 0..k_i {
            let row = row_offset + k;
            for gi in 0..g {
                lp.set_coeff(row, col_offset + gi * k_i + k, 1.0);
            }
            lp.set_rhs(row, mu.weight(k));
        }
        for gi in 0..g {
            let row = total + i * g + gi;
            for k in 0..k_i {
                let col = col_offset + gi * k_i + k;
                lp.set_coeff(row, col, 1.0);
                lp.set_cost(col, weights[i] * sq_dist(&grid[gi], mu.point(k)));
            }
            lp.set_coeff(row, gi, -1.0);
        }
        col_offset += g * k_i;
        row_offset += k_i;
    }
    let sol = lp
        .solve()
        .map_err(|e| BarycenterError::Solver(e.to_string()))?;

    let kept: Vec<usize> = (0..g).filter(|&gi| sol.x[gi] > 1e-12).collect();
    if kept.is_empty() {
        return Err(BarycenterError::Solver(
            "grid solution carries no mass".into(),
        ));
    }
    let mass: f64 = kept.iter().map(|&gi| sol.x[gi]).sum();
    let scale = 1.0 / mass;
    let points: Vec<Point> = kept.iter().map(|&gi| grid[gi].clone()).collect();
    let ws: Vec<f64> = kept.iter().map(|&gi| sol.x[gi] * scale).collect();
    let measure = DiscreteMeasure::new(points, ws)?;

    let mut maps = Vec::with_capacity(m);
    let mut objective = 0.0;
    let mut col_offset = g;
    for (i, mu) in marginals.iter().enumerate() {
        let k_i = sizes[i];
        let mut table = Vec::with_capacity(kept.len() * k_i);
        for &gi in &kept {
            for k in 0..k_i {
                table.push(sol.x[col_offset + gi * k_i + k] * scale);
            }
        }
        let plan = Coupling::new(measure.clone(), mu.clone(), table)?;
        objective += weights[i] * plan.cost();
        maps.push(barycentric_projection(&plan)?);
        col_offset += g * k_i;
    }

    let dim = measure.dim();
    let mut residual = 0.0f64;
    for (j, x) in measure.points().iter().enumerate() {
        let mut avg = vec![0.0; dim];
        for (lam, map) in weights.iter().zip(&maps) {
            for (a, c) in avg.iter_mut().zip(map.image(j)) {
                *a += lam * c;
            }
        }
        residual = residual.max(sq_dist(&avg, x).sqrt());
    }

    Ok(BarycenterResult {
        measure,
        objective,
        maps,
        fixed_point_residual: residual,
        iterations: 1,
    })
}

/// All weighted combinations sum_i lambda_i x_{i,k_i} of one atom per
/// marginal, deduplicated: the candidate support that makes the fixed-grid
/// solver exact for finitely many discrete marginals.
pub fn centroid_grid(
    marginals: &[DiscreteMeasure],
    weights: &[f64],
) -> Result<Vec<Point>, BarycenterError> {
    validate_family(marginals, weights)?;
    let merged: Vec<DiscreteMeasure> = marginals.iter().map(|m| m.merged()).collect();
    let mut size = 1usize;
    for m in &merged {
        size = size.saturating_mul(m.len());
        if size > GRID_CAP {
            return Err(BarycenterError::GridCapExceeded {
                size,
                cap: GRID_CAP,
            });
        }
    }
    let dim = merged[0].dim();
    let mut grid: Vec<Point> = Vec::new();
    let mut idx = vec![0usize; merged.len()];
    loop {
        let mut c = vec![0.0; dim];
        for ((m, &k), lam) in merged.iter().zip(&idx).zip(weights) {
            for (acc, coord) in c.iter_mut().zip(m.point(k)) {
                *acc += lam * coord;
            }
        }
        if !grid
            .iter()
            .any(|q| crate::measures::linf_dist(q, &c) <= tolerances::MERGE)
        {
            grid.push(c);
        }
        let mut pos = merged.len();
        loop {
            if pos == 0 {
                return Ok(grid);
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < merged[pos].len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

pub fn curve_barycenter(
    curve: &MeasureCurve,
    schedule: &[usize],
    strategy: SamplingStrategy,
) -> Result<(BarycenterResult, Vec<ConvergenceRecord>), BarycenterError> {
    curve_barycenter_with(curve, schedule, strategy, &SolverOptions::default())
}

/// Solves the finite barycenter at every schedule resolution in turn; the
/// last entry is the curve barycenter estimate. The log tracks the grid
/// quadrature of the objective and the W2 step between successive results.
pub fn curve_barycenter_with(
    curve: &MeasureCurve,
    schedule: &[usize],
    strategy: SamplingStrategy,
    opts: &SolverOptions,
) -> Result<(BarycenterResult, Vec<ConvergenceRecord>), BarycenterError> {
    if schedule.is_empty()
        || schedule.iter().any(|&n| n == 0)
        || schedule.windows(2).any(|w| w[1] < w[0])
    {
        return Err(BarycenterError::InvalidSchedule);
    }
    let mut prev: Option<DiscreteMeasure> = None;
    let mut log = Vec::with_capacity(schedule.len());
    let mut last = None;
    for &n in schedule {
        let grid = curve.sample_times(n, strategy)?;
        let marginals: Vec<DiscreteMeasure> = grid
            .nodes()
            .iter()
            .map(|&t| {
                let i = curve
                    .sample_index_at(t)
                    .expect("grid nodes are sample times");
                curve.samples()[i].measure.clone()
            })
            .collect();
        let problem = BarycenterProblem::new(
            marginals,
            grid.weights().to_vec(),
            SupportMode::free_support(),
        )?;
        let result = finite_barycenter_with(&problem, opts)?;
        let w2_step = match &prev {
            Some(p) => Some(w2(p, &result.measure)?.0.max(0.0).sqrt()),
            None => None,
        };
        log.push(ConvergenceRecord {
            n,
            objective: result.objective,
            w2_step,
            fixed_point_residual: result.fixed_point_residual,
        });
        prev = Some(result.measure.clone());
        last = Some(result);
    }
    Ok((last.unwrap(), log))
}

/// True when successive W2 steps are nonincreasing within a multiplicative
/// slack over the tail of the log.
pub fn steps_nonincreasing(log: &[ConvergenceRecord], slack: f64) -> bool {
    let steps: Vec<f64> = log.iter().filter_map(|r| r.w2_step).collect();
    steps
        .windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + slack) + 1e-12)
}

/// Weighted density ceiling for a barycenter of finitely many absolutely
/// continuous marginals: [sum_{i in B} lambda_i / ||g_i||^(1/n)]^(-n),
/// where B is the set of marginals with a known density sup-norm.
pub fn density_bound_finite(
    weights: &[f64],
    linf_norms: &[(usize, f64)],
    dim: usize,
) -> Result<f64, BarycenterError> {
    if dim == 0 {
        return Err(BarycenterError::InvalidDensityParameter {
            name: "dim",
            value: 0.0,
        });
    }
    if linf_norms.is_empty() {
        return Err(BarycenterError::NoBoundedMarginals);
    }
    let n = dim as f64;
    let mut sum = 0.0;
    for &(index, norm) in linf_norms {
        if index >= weights.len() {
            return Err(BarycenterError::BadNormIndex { index });
        }
        if !norm.is_finite() || norm <= 0.0 {
            return Err(BarycenterError::InvalidDensityParameter {
                name: "linf_norm",
                value: norm,
            });
        }
        let lam = weights[index];
        if !lam.is_finite() || lam <= 0.0 {
            return Err(BarycenterError::NonPositiveWeight {
                index,
                value: lam,
            });
        }
        sum += if dim == 1 {
            lam / norm
        } else {
            lam * norm.powf(-1.0 / n)
        };
    }
    Ok(if dim == 1 {
        1.0 / sum
    } else {
        sum.powi(-(dim as i32))
    })
}

/// Density ceiling K / m_K^n for a curve carrying density K on a time set
/// of measure at least m_K.
pub fn density_bound_curve(k: f64, m_k: f64, dim: usize) -> Result<f64, BarycenterError> {
    if !k.is_finite() || k <= 0.0 {
        return Err(BarycenterError::InvalidDensityParameter {
            name: "K",
            value: k,
        });
    }
    if !m_k.is_finite() || m_k <= 0.0 || m_k > 1.0 {
        return Err(BarycenterError::InvalidDensityParameter {
            name: "m_K",
            value: m_k,
        });
    }
    if dim == 0 {
        return Err(BarycenterError::InvalidDensityParameter {
            name: "dim",
            value: 0.0,
        });
    }
    Ok(k / m_k.powi(dim as i32))
}

pub fn check_density_bound(
    result: &BarycenterResult,
    bound: f64,
    cell_size: f64,
) -> Result<DensityBoundReport, BarycenterError> {
    check_density_bound_with_slack(result, bound, cell_size, tolerances::DENSITY_SLACK)
}

/// Bins the result into axis-aligned cells of the given size and compares
/// the empirical density maximum against the bound with multiplicative
/// slack (binning cannot reproduce a continuum bound exactly).
pub fn check_density_bound_with_slack(
    result: &BarycenterResult,
    bound: f64,
    cell_size: f64,
    slack: f64,
) -> Result<DensityBoundReport, BarycenterError> {
    if !bound.is_finite() || bound <= 0.0 {
        return Err(BarycenterError::InvalidDensityParameter {
            name: "bound",
            value: bound,
        });
    }
    if !cell_size.is_finite() || cell_size <= 0.0 {
        return Err(BarycenterError::InvalidDensityParameter {
            name: "cell_size",
            value: cell_size,
        });
    }
    if !slack.is_finite() || slack < 0.0 {
        return Err(BarycenterError::InvalidDensityParameter {
            name: "slack",
            value: slack,
        });
    }
    let measure = result.measure.merged();
    let dim = measure.dim();
    let mut cells: HashMap<Vec<i64>, f64> = HashMap::new();
    for (p, &w) in measure.points().iter().zip(measure.weights()) {
        let key: Vec<i64> = p.iter().map(|&c| (c / cell_size).floor() as i64).collect();
        *cells.entry(key).or_insert(0.0) += w;
    }
    let max_mass = cells.values().fold(0.0f64, |a, &b| a.max(b));
    let histogram_max = max_mass / cell_size.powi(dim as i32);
    Ok(DensityBoundReport {
        bound,
        histogram_max,
        cell_size,
        satisfied: histogram_max <= bound * (1.0 + slack),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{convex_hull_support_check, CurveSample, Interpolation};

    fn m1(points: &[f64], weights: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::new(points.iter().map(|&x| vec![x]).collect(), weights.to_vec())
            .unwrap()
    }

    fn plain_curve(entries: Vec<(f64, DiscreteMeasure)>) -> MeasureCurve {
        MeasureCurve::new(
            entries
                .into_iter()
                .map(|(t, measure)| CurveSample {
                    t,
                    measure,
                    density: None,
                })
                .collect(),
            Interpolation::Nearest,
        )
        .unwrap()
    }

    /// Test-side 1d oracle: weighted quantile averages on the common
    /// refinement, reimplemented from scratch.
    fn quantile_oracle(marginals: &[DiscreteMeasure], weights: &[f64]) -> DiscreteMeasure {
        let mut cuts: Vec<f64> = Vec::new();
        for m in marginals {
            let mut atoms: Vec<(f64, f64)> = m
                .points()
                .iter()
                .zip(m.weights())
                .map(|(p, &w)| (p[0], w))
                .collect();
            atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut acc = 0.0;
            for (_, w) in &atoms {
                acc += w;
                cuts.push(acc.min(1.0));
            }
        }
        cuts.push(1.0);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-14);
        let inv = |m: &DiscreteMeasure, q: f64| -> f64 {
            let mut atoms: Vec<(f64, f64)> = m
                .points()
                .iter()
                .zip(m.weights())
                .map(|(p, &w)| (p[0], w))
                .collect();
            atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut acc = 0.0;
            for (x, w) in atoms {
                acc += w;
                if acc >= q {
                    return x;
                }
            }
            m.points().last().unwrap()[0]
        };
        let mut points = Vec::new();
        let mut ws = Vec::new();
        let mut prev = 0.0;
        for &c in &cuts {
            if c <= prev {
                continue;
            }
            let q = 0.5 * (prev + c);
            let x: f64 = marginals
                .iter()
                .zip(weights)
                .map(|(m, lam)| lam * inv(m, q))
                .sum();
            points.push(vec![x]);
            ws.push(c - prev);
            prev = c;
        }
        DiscreteMeasure::new(points, ws).unwrap().merged()
    }

    #[test]
    fn equal_weight_diracs_meet_in_the_middle() {
        let problem = BarycenterProblem::new(
            vec![
                DiscreteMeasure::dirac(vec![0.0, 0.0]).unwrap(),
                DiscreteMeasure::dirac(vec![2.0, 2.0]).unwrap(),
            ],
            vec![0.5, 0.5],
            SupportMode::free_support(),
        )
        .unwrap();
        let result = finite_barycenter(&problem).unwrap();
        assert_eq!(result.measure.len(), 1);
        assert!(sq_dist(result.measure.point(0), &[1.0, 1.0]) < 1e-24);
        // lambda (1 - lambda) |a - b|^2 with |a - b|^2 = 8.
        assert!((result.objective - 2.0).abs() < 1e-12);
        assert!(result.fixed_point_residual <= 1e-12);
    }

    #[test]
    fn weighted_dirac_pair_lands_on_weighted_average() {
        let problem = BarycenterProblem::new(
            vec![
                DiscreteMeasure::dirac(vec![0.0]).unwrap(),
                DiscreteMeasure::dirac(vec![1.0]).unwrap(),
            ],
            vec![0.3, 0.7],
            SupportMode::free_support(),
        )
        .unwrap();
        let result = finite_barycenter(&problem).unwrap();
        assert!((result.measure.point(0)[0] - 0.7).abs() < 1e-12);
        assert!((result.objective - 0.21).abs() < 1e-12);
    }

    #[test]
    fn one_dimensional_solution_matches_quantile_oracle() {
        let marginals = vec![
            m1(&[0.0, 1.0, 3.0], &[0.2, 0.5, 0.3]),
            m1(&[-1.0, 2.0], &[0.6, 0.4]),
            m1(&[0.5, 0.8, 4.0, 5.0], &[0.25, 0.25, 0.25, 0.25]),
        ];
        let weights = vec![0.5, 0.25, 0.25];
        let oracle = quantile_oracle(&marginals, &weights);
        let problem = BarycenterProblem::new(
            marginals.clone(),
            weights.clone(),
            SupportMode::free_support(),
        )
        .unwrap();
        let result = finite_barycenter(&problem).unwrap();
        let (gap, _) = w2(&result.measure, &oracle).unwrap();
        assert!(gap.sqrt() <= 1e-9, "gap {}", gap.sqrt());
        let oracle_objective: f64 = marginals
            .iter()
            .zip(&weights)
            .map(|(m, lam)| lam * crate::ot::w2_1d(&oracle, m).unwrap().0)
            .sum();
        assert!((result.objective - oracle_objective).abs() <= 1e-9);
        assert!(result.fixed_point_residual <= 1e-9);
    }

    #[test]
    fn fixed_grid_agrees_with_free_support_in_1d() {
        let marginals = vec![
            m1(&[0.0, 2.0], &[0.5, 0.5]),
            m1(&[1.0, 3.0], &[0.25, 0.75]),
        ];
        let weights = vec![0.5, 0.5];
        let free = finite_barycenter(
            &BarycenterProblem::new(
                marginals.clone(),
                weights.clone(),
                SupportMode::free_support(),
            )
            .unwrap(),
        )
        .unwrap();
        let grid = centroid_grid(&marginals, &weights).unwrap();
        let fixed = finite_barycenter(
            &BarycenterProblem::new(marginals, weights, SupportMode::FixedGrid(grid)).unwrap(),
        )
        .unwrap();
        assert!((free.objective - fixed.objective).abs() <= 1e-9);
        let (gap, _) = w2(&free.measure, &fixed.measure).unwrap();
        assert!(gap.sqrt() <= 1e-6);
    }

    #[test]
    fn fixed_grid_is_not_beaten_by_reweightings() {
        let marginals = vec![
            m1(&[0.0, 1.0], &[0.4, 0.6]),
            m1(&[0.5, 2.0, 3.0], &[0.3, 0.3, 0.4]),
        ];
        let weights = vec![0.6, 0.4];
        let grid = centroid_grid(&marginals, &weights).unwrap();
        let result = finite_barycenter(
            &BarycenterProblem::new(
                marginals.clone(),
                weights.clone(),
                SupportMode::FixedGrid(grid.clone()),
            )
            .unwrap(),
        )
        .unwrap();
        // Deterministic pseudo-random reweightings of the same grid.
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..20 {
            let raw: Vec<f64> = (0..grid.len()).map(|_| next() + 1e-3).collect();
            let total: f64 = raw.iter().sum();
            let ws: Vec<f64> = raw.iter().map(|w| w / total).collect();
            let nu = DiscreteMeasure::new(grid.clone(), ws).unwrap();
            let alt: f64 = marginals
                .iter()
                .zip(&weights)
                .map(|(m, lam)| lam * w2(&nu, m).unwrap().0)
                .sum();
            assert!(result.objective <= alt + 1e-9);
        }
    }

    #[test]
    fn two_initializations_reach_the_same_barycenter() {
        let marginals = vec![
            m1(&[0.0, 1.5, 2.0], &[0.3, 0.4, 0.3]),
            m1(&[-0.5, 1.0], &[0.5, 0.5]),
        ];
        let weights = vec![0.5, 0.5];
        let oracle = quantile_oracle(&marginals, &weights);
        let default_run = finite_barycenter(
            &BarycenterProblem::new(
                marginals.clone(),
                weights.clone(),
                SupportMode::free_support(),
            )
            .unwrap(),
        )
        .unwrap();
        let shifted = quantile_mean_init(&marginals, &weights)
            .translate(&[0.7])
            .unwrap();
        let shifted_run = finite_barycenter(
            &BarycenterProblem::new(
                marginals,
                weights,
                SupportMode::free_support_from(shifted),
            )
            .unwrap(),
        )
        .unwrap();
        for run in [&default_run, &shifted_run] {
            let (gap, _) = w2(&run.measure, &oracle).unwrap();
            assert!(gap.sqrt() <= 1e-6);
        }
        let (between, _) = w2(&default_run.measure, &shifted_run.measure).unwrap();
        assert!(between.sqrt() <= 1e-6);
    }

    #[test]
    fn sized_free_support_controls_the_start() {
        let marginals = vec![
            m1(&[0.0, 1.0, 2.0, 3.0], &[0.25, 0.25, 0.25, 0.25]),
            m1(&[0.5, 1.5, 2.5, 3.5], &[0.25, 0.25, 0.25, 0.25]),
        ];
        let problem = BarycenterProblem::new(
            marginals,
            vec![0.5, 0.5],
            SupportMode::free_support_sized(4),
        )
        .unwrap();
        let result = finite_barycenter(&problem).unwrap();
        assert_eq!(result.measure.len(), 4);
        assert!(result.fixed_point_residual <= 1e-9);
    }

    #[test]
    fn constant_curve_returns_the_constant() {
        let mu = m1(&[0.0, 1.0], &[0.5, 0.5]);
        let curve = plain_curve(vec![
            (0.0, mu.clone()),
            (0.5, mu.clone()),
            (1.0, mu.clone()),
        ]);
        let (result, log) =
            curve_barycenter(&curve, &[2, 4], SamplingStrategy::Uniform).unwrap();
        let (gap, _) = w2(&result.measure, &mu).unwrap();
        assert!(gap <= 1e-12);
        assert!(result.objective <= 1e-12);
        assert_eq!(log.len(), 2);
        assert!(log[1].w2_step.unwrap() <= 1e-6);
        assert!(convex_hull_support_check(&result.measure, &curve).unwrap());
    }

    #[test]
    fn dirac_line_curve_averages_the_grid() {
        let samples: Vec<(f64, DiscreteMeasure)> = (0..=4)
            .map(|j| {
                let t = j as f64 / 4.0;
                (t, m1(&[t], &[1.0]))
            })
            .collect();
        let curve = plain_curve(samples);
        let (result, _) = curve_barycenter(&curve, &[4], SamplingStrategy::Uniform).unwrap();
        assert_eq!(result.measure.len(), 1);
        assert!((result.measure.point(0)[0] - 0.625).abs() < 1e-12);
        assert!((result.objective - 0.078125).abs() < 1e-12);
    }

    #[test]
    fn translated_copies_average_the_shift() {
        let base = m1(&[0.0, 1.0], &[0.5, 0.5]);
        let samples: Vec<(f64, DiscreteMeasure)> = (0..=4)
            .map(|j| {
                let t = j as f64 / 4.0;
                (t, base.translate(&[t]).unwrap())
            })
            .collect();
        let curve = plain_curve(samples);
        let (result, _) = curve_barycenter(&curve, &[4], SamplingStrategy::Uniform).unwrap();
        let expected = base.translate(&[0.625]).unwrap();
        let (gap, _) = w2(&result.measure, &expected).unwrap();
        assert!(gap.sqrt() <= 1e-9);
    }

    #[test]
    fn schedule_must_be_valid() {
        let curve = plain_curve(vec![(0.0, m1(&[0.0], &[1.0]))]);
        assert!(matches!(
            curve_barycenter(&curve, &[], SamplingStrategy::Uniform),
            Err(BarycenterError::InvalidSchedule)
        ));
        assert!(matches!(
            curve_barycenter(&curve, &[4, 2], SamplingStrategy::Uniform),
            Err(BarycenterError::InvalidSchedule)
        ));
        assert!(matches!(
            curve_barycenter(&curve, &[0], SamplingStrategy::Uniform),
            Err(BarycenterError::InvalidSchedule)
        ));
    }

    #[test]
    fn nonconvergence_is_reported_with_residual() {
        let problem = BarycenterProblem::new(
            vec![
                DiscreteMeasure::dirac(vec![0.0]).unwrap(),
                DiscreteMeasure::dirac(vec![1.0]).unwrap(),
            ],
            vec![0.5, 0.5],
            SupportMode::free_support_from(DiscreteMeasure::dirac(vec![5.0]).unwrap()),
        )
        .unwrap();
        let opts = SolverOptions {
            movement_tol: 0.0,
            max_iterations: 1,
        };
        match finite_barycenter_with(&problem, &opts) {
            Err(BarycenterError::NonConvergence {
                residual,
                iterations,
            }) => {
                assert_eq!(iterations, 1);
                assert!((residual - 4.5).abs() < 1e-12);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn density_bound_finite_collapse_cases() {
        // Single flagged marginal with full weight: the bound is its norm.
        let single = density_bound_finite(&[1.0], &[(0, 2.5)], 3).unwrap();
        assert!((single - 2.5).abs() <= 1e-12 * 2.5);
        // Equal weights, equal norms: the bound collapses to K.
        let n = 7;
        let weights = vec![1.0 / n as f64; n];
        let norms: Vec<(usize, f64)> = (0..n).map(|i| (i, 4.0)).collect();
        for dim in [1, 2, 3] {
            let b = density_bound_finite(&weights, &norms, dim).unwrap();
            assert!((b - 4.0).abs() <= 1e-12 * 4.0, "dim {dim}: {b}");
        }
        // Partial flagged set: N^n K / |B|^n, itself at most K / m^n
        // whenever |B| / N >= m.
        let n = 8;
        let k = 2.0;
        let b_size = 5;
        let weights = vec![1.0 / n as f64; n];
        let norms: Vec<(usize, f64)> = (0..b_size).map(|i| (i, k)).collect();
        for dim in [1usize, 2] {
            let b = density_bound_finite(&weights, &norms, dim).unwrap();
            let expected =
                (n as f64).powi(dim as i32) * k / (b_size as f64).powi(dim as i32);
            assert!((b - expected).abs() <= 1e-9 * expected, "dim {dim}: {b}");
            let m_k = 0.5;
            assert!(b_size as f64 / n as f64 >= m_k);
            assert!(b <= density_bound_curve(k, m_k, dim).unwrap() + 1e-12);
        }
    }

    #[test]
    fn density_bound_finite_rejects_bad_input() {
        assert!(matches!(
            density_bound_finite(&[1.0], &[], 1),
            Err(BarycenterError::NoBoundedMarginals)
        ));
        assert!(matches!(
            density_bound_finite(&[1.0], &[(3, 1.0)], 1),
            Err(BarycenterError::BadNormIndex { .. })
        ));
        assert!(matches!(
            density_bound_finite(&[1.0], &[(0, -1.0)], 1),
            Err(BarycenterError::InvalidDensityParameter { .. })
        ));
    }

    #[test]
    fn density_bound_curve_substitutions() {
        assert_eq!(density_bound_curve(1.0, 1.0, 5).unwrap(), 1.0);
        assert_eq!(density_bound_curve(2.0, 0.5, 1).unwrap(), 4.0);
        assert_eq!(density_bound_curve(3.0, 0.5, 2).unwrap(), 12.0);
        assert!(matches!(
            density_bound_curve(1.0, 1.5, 1),
            Err(BarycenterError::InvalidDensityParameter { .. })
        ));
        assert!(matches!(
            density_bound_curve(0.0, 0.5, 1),
            Err(BarycenterError::InvalidDensityParameter { .. })
        ));
    }

    #[test]
    fn dirac_never_satisfies_a_density_bound() {
        let problem = BarycenterProblem::new(
            vec![DiscreteMeasure::dirac(vec![0.3]).unwrap()],
            vec![1.0],
            SupportMode::free_support(),
        )
        .unwrap();
        let result = finite_barycenter(&problem).unwrap();
        let report = check_density_bound(&result, 1.0, 0.01).unwrap();
        assert!(!report.satisfied);
        assert!((report.histogram_max - 100.0).abs() < 1e-9);
    }

    #[test]
    fn uniform_histogram_sits_at_density_one() {
        let points: Vec<f64> = (0..32).map(|j| (j as f64 + 0.5) / 32.0).collect();
        let mu = m1(&points, &vec![1.0 / 32.0; 32]);
        let curve = plain_curve(vec![(0.0, mu.clone()), (1.0, mu.clone())]);
        let (result, _) = curve_barycenter(&curve, &[4], SamplingStrategy::Uniform).unwrap();
        let report = check_density_bound(&result, 1.0, 0.125).unwrap();
        assert!(report.satisfied);
        assert!((report.histogram_max - 1.0).abs() <= 1e-9);
    }
}
