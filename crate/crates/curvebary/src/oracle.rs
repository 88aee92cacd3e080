//! Brute-force reference solvers for tiny instances: an exact LP over the
//! full product support for multi-marginal problems, product and
//! permutation baseline couplings, and exhaustive vertex enumeration of
//! two-marginal transportation polytopes. Everything here is deliberately
//! independent of the barycenter solver so the two can certify each other.

use std::collections::HashSet;

use thiserror::Error;

use crate::barycenter::BarycenterResult;
use crate::lp::LinearProgram;
use crate::measures::{linf_dist, sq_dist, DiscreteMeasure, MeasureError, Point};
use crate::ot::{w2, Coupling, OtError};
use crate::tolerances;

/// Caps keeping the exhaustive solvers tractable.
pub const MAX_MARGINALS: usize = 5;
pub const MAX_SUPPORT: usize = 6;
pub const MAX_PRODUCT: usize = 10_000;
pub const MAX_ENUMERATION_CELLS: usize = 36;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("{0} marginals exceed the cap of {MAX_MARGINALS}")]
    TooManyMarginals(usize),
    #[error("marginal {index} has {size} atoms (cap {MAX_SUPPORT})")]
    SupportTooLarge { index: usize, size: usize },
    #[error("product support has {size} points (cap {MAX_PRODUCT})")]
    ProductTooLarge { size: usize },
    #[error("{cells} coupling cells exceed the enumeration cap of {MAX_ENUMERATION_CELLS}")]
    EnumerationTooLarge { cells: usize },
    #[error("need at least one marginal")]
    NoMarginals,
    #[error("{marginals} marginals but {weights} weights")]
    LengthMismatch { marginals: usize, weights: usize },
    #[error("marginal dimensions differ: {left} vs {right}")]
    MixedDimensions { left: usize, right: usize },
    #[error("weight {index} must be positive (got {value})")]
    NonPositiveWeight { index: usize, value: f64 },
    #[error("weights sum to {sum}, expected 1")]
    WeightSum { sum: f64 },
    #[error("permutation couplings need uniform marginals with a shared atom count")]
    NotUniformProfile,
    #[error("entry {index} is not a permutation of the atom indices")]
    BadPermutation { index: usize },
    #[error("product-support solver failed: {0}")]
    Solver(String),
    #[error(transparent)]
    Ot(#[from] OtError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MultiMarginalCost {
    /// Ordered double sum over marginal pairs of |x_i - x_j|^2, unweighted.
    PairwiseSum,
    /// sum_i lambda_i |x_i - xbar|^2 with xbar = sum_j lambda_j x_j.
    Variance,
}

#[derive(Debug, Clone)]
pub struct MultiMarginalInstance {
    marginals: Vec<DiscreteMeasure>,
    weights: Vec<f64>,
}

impl MultiMarginalInstance {
    pub fn new(
        marginals: Vec<DiscreteMeasure>,
        weights: Vec<f64>,
    ) -> Result<Self, OracleError> {
        if marginals.is_empty() {
            return Err(OracleError::NoMarginals);
        }
        if marginals.len() > MAX_MARGINALS {
            return Err(OracleError::TooManyMarginals(marginals.len()));
        }
        if marginals.len() != weights.len() {
            return Err(OracleError::LengthMismatch {
                marginals: marginals.len(),
                weights: weights.len(),
            });
        }
        let merged: Vec<DiscreteMeasure> = marginals.iter().map(|m| m.merged()).collect();
        let dim = merged[0].dim();
        let mut product = 1usize;
        for (index, m) in merged.iter().enumerate() {
            if m.dim() != dim {
                return Err(OracleError::MixedDimensions {
                    left: dim,
                    right: m.dim(),
                });
            }
            if m.len() > MAX_SUPPORT {
                return Err(OracleError::SupportTooLarge {
                    index,
                    size: m.len(),
                });
            }
            product = product.saturating_mul(m.len());
        }
        if product > MAX_PRODUCT {
            return Err(OracleError::ProductTooLarge { size: product });
        }
        let mut sum = 0.0;
        for (index, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w <= 0.0 {
                return Err(OracleError::NonPositiveWeight { index, value: w });
            }
            sum += w;
        }
        if (sum - 1.0).abs() > tolerances::WEIGHT_SUM {
            return Err(OracleError::WeightSum { sum });
        }
        Ok(MultiMarginalInstance {
            marginals: merged,
            weights,
        })
    }

    pub fn marginals(&self) -> &[DiscreteMeasure] {
        &self.marginals
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn product_size(&self) -> usize {
        self.marginals.iter().map(|m| m.len()).product()
    }

    fn tuple_points(&self, tuple: &[usize]) -> Vec<&[f64]> {
        self.marginals
            .iter()
            .zip(tuple)
            .map(|(m, &k)| m.point(k))
            .collect()
    }

    fn tuple_cost(&self, tuple: &[usize], cost: MultiMarginalCost) -> f64 {
        let points = self.tuple_points(tuple);
        match cost {
            MultiMarginalCost::PairwiseSum => {
                let mut acc = 0.0;
                for i in 0..points.len() {
                    for j in (i + 1)..points.len() {
                        acc += 2.0 * sq_dist(points[i], points[j]);
                    }
                }
                acc
            }
            MultiMarginalCost::Variance => {
                let dim = self.marginals[0].dim();
                let mut avg = vec![0.0; dim];
                for (p, lam) in points.iter().zip(&self.weights) {
                    for (a, c) in avg.iter_mut().zip(p.iter()) {
                        *a += lam * c;
                    }
                }
                points
                    .iter()
                    .zip(&self.weights)
                    .map(|(p, lam)| lam * sq_dist(p, &avg))
                    .sum()
            }
        }
    }

    fn tuple_average(&self, tuple: &[usize]) -> Point {
        let dim = self.marginals[0].dim();
        let mut avg = vec![0.0; dim];
        for (m, (&k, lam)) in self.marginals.iter().zip(tuple.iter().zip(&self.weights)) {
            for (a, c) in avg.iter_mut().zip(m.point(k)) {
                *a += lam * c;
            }
        }
        avg
    }
}

/// A feasible (not necessarily optimal) multi-marginal coupling: positive
/// masses on index tuples of the product support.
#[derive(Debug, Clone)]
pub struct MultiMarginalPlan {
    instance: MultiMarginalInstance,
    entries: Vec<(Vec<usize>, f64)>,
    value: f64,
    cost: MultiMarginalCost,
}

impl MultiMarginalPlan {
    /// Objective this plan was built or evaluated under.
    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn cost_kind(&self) -> MultiMarginalCost {
        self.cost
    }

    pub fn entries(&self) -> &[(Vec<usize>, f64)] {
        &self.entries
    }

    pub fn instance(&self) -> &MultiMarginalInstance {
        &self.instance
    }

    pub fn evaluate(&self, cost: MultiMarginalCost) -> f64 {
        self.entries
            .iter()
            .map(|(tuple, mass)| mass * self.instance.tuple_cost(tuple, cost))
            .sum()
    }

    /// Double time quadrature of |X_i - X_j|^2 with the instance weights on
    /// both indices: twice the variance objective, matching the process
    /// module's cost convention.
    pub fn mk_cost(&self) -> f64 {
        let weights = &self.instance.weights;
        self.entries
            .iter()
            .map(|(tuple, mass)| {
                let points = self.instance.tuple_points(tuple);
                let mut acc = 0.0;
                for i in 0..points.len() {
                    for j in (i + 1)..points.len() {
                        acc += 2.0 * weights[i] * weights[j] * sq_dist(points[i], points[j]);
                    }
                }
                mass * acc
            })
            .sum()
    }

    /// Law of the weighted average coordinate under this plan.
    pub fn law_of_average(&self) -> DiscreteMeasure {
        let points: Vec<Point> = self
            .entries
            .iter()
            .map(|(tuple, _)| self.instance.tuple_average(tuple))
            .collect();
        let weights: Vec<f64> = self.entries.iter().map(|(_, mass)| *mass).collect();
        DiscreteMeasure::new(points, weights)
            .expect("plan masses form a probability vector")
            .merged()
    }

    /// Two-marginal coupling between marginals `i` and `j` induced by
    /// forgetting all other coordinates.
    pub fn pair_coupling(&self, i: usize, j: usize) -> Result<Coupling, OracleError> {
        let mu = &self.instance.marginals[i];
        let nu = &self.instance.marginals[j];
        let mut table = vec![0.0; mu.len() * nu.len()];
        for (tuple, mass) in &self.entries {
            table[tuple[i] * nu.len() + tuple[j]] += mass;
        }
        Ok(Coupling::new(mu.clone(), nu.clone(), table)?)
    }

    /// Coupling between the law of the average and marginal `i`.
    pub fn average_marginal_coupling(&self, i: usize) -> Result<Coupling, OracleError> {
        let avg_law = self.law_of_average();
        let nu = &self.instance.marginals[i];
        let mut table = vec![0.0; avg_law.len() * nu.len()];
        for (tuple, mass) in &self.entries {
            let avg = self.instance.tuple_average(tuple);
            let row = avg_law
                .points()
                .iter()
                .position(|p| linf_dist(p, &avg) <= tolerances::MERGE)
                .expect("average point appears in its own law");
            table[row * nu.len() + tuple[i]] += mass;
        }
        Ok(Coupling::new(avg_law, nu.clone(), table)?)
    }
}

fn product_tuples(instance: &MultiMarginalInstance) -> Vec<Vec<usize>> {
    let sizes: Vec<usize> = instance.marginals.iter().map(|m| m.len()).collect();
    let mut tuples = Vec::with_capacity(instance.product_size());
    let mut idx = vec![0usize; sizes.len()];
    loop {
        tuples.push(idx.clone());
        let mut pos = sizes.len();
        loop {
            if pos == 0 {
                return tuples;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < sizes[pos] {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Global minimum of the chosen cost over all couplings of the marginals,
/// by exact LP over the full product support.
pub fn solve_multimarginal(
    instance: &MultiMarginalInstance,
    cost: MultiMarginalCost,
) -> Result<(f64, MultiMarginalPlan), OracleError> {
    let tuples = product_tuples(instance);
    let sizes: Vec<usize> = instance.marginals.iter().map(|m| m.len()).collect();
    let nrows: usize = sizes.iter().sum();
    let mut lp = LinearProgram::new(nrows, tuples.len());
    let mut row_offset = vec![0usize; sizes.len()];
    for i in 1..sizes.len() {
        row_offset[i] = row_offset[i - 1] + sizes[i - 1];
    }
    for (col, tuple) in tuples.iter().enumerate() {
        for (i, &k) in tuple.iter().enumerate() {
            lp.set_coeff(row_offset[i] + k, col, 1.0);
        }
        lp.set_cost(col, instance.tuple_cost(tuple, cost));
    }
    for (i, m) in instance.marginals.iter().enumerate() {
        for k in 0..m.len() {
            lp.set_rhs(row_offset[i] + k, m.weight(k));
        }
    }
    let sol = lp.solve().map_err(|e| OracleError::Solver(e.to_string()))?;
    let entries: Vec<(Vec<usize>, f64)> = tuples
        .into_iter()
        .zip(&sol.x)
        .filter(|(_, &mass)| mass > 1e-12)
        .map(|(tuple, &mass)| (tuple, mass))
        .collect();
    let value = sol.value.max(0.0);
    let plan = MultiMarginalPlan {
        instance: instance.clone(),
        entries,
        value,
        cost,
    };
    Ok((value, plan))
}

/// Independent coupling of the marginals, evaluated under the given cost.
pub fn product_plan(
    instance: &MultiMarginalInstance,
    cost: MultiMarginalCost,
) -> MultiMarginalPlan {
    let entries: Vec<(Vec<usize>, f64)> = product_tuples(instance)
        .into_iter()
        .map(|tuple| {
            let mass: f64 = instance
                .marginals
                .iter()
                .zip(&tuple)
                .map(|(m, &k)| m.weight(k))
                .product();
            (tuple, mass)
        })
        .collect();
    let mut plan = MultiMarginalPlan {
        instance: instance.clone(),
        entries,
        value: 0.0,
        cost,
    };
    plan.value = plan.evaluate(cost);
    plan
}

/// Coupling gluing uniform k-atom marginals along one permutation each,
/// evaluated under the given cost. The first marginal is traversed in atom
/// order; `perms[i]` gives the matched atom of marginal i + 1.
pub fn permutation_plan(
    instance: &MultiMarginalInstance,
    perms: &[Vec<usize>],
    cost: MultiMarginalCost,
) -> Result<MultiMarginalPlan, OracleError> {
    let k = instance.marginals[0].len();
    let uniform = 1.0 / k as f64;
    for m in &instance.marginals {
        if m.len() != k
            || m.weights()
                .iter()
                .any(|&w| (w - uniform).abs() > tolerances::WEIGHT_SUM * k as f64)
        {
            return Err(OracleError::NotUniformProfile);
        }
    }
    if perms.len() != instance.marginals.len() - 1 {
        return Err(OracleError::LengthMismatch {
            marginals: instance.marginals.len() - 1,
            weights: perms.len(),
        });
    }
    for (index, perm) in perms.iter().enumerate() {
        let mut seen = vec![false; k];
        if perm.len() != k {
            return Err(OracleError::BadPermutation { index });
        }
        for &p in perm {
            if p >= k || seen[p] {
                return Err(OracleError::BadPermutation { index });
            }
            seen[p] = true;
        }
    }
    let entries: Vec<(Vec<usize>, f64)> = (0..k)
        .map(|a| {
            let mut tuple = Vec::with_capacity(instance.marginals.len());
            tuple.push(a);
            for perm in perms {
                tuple.push(perm[a]);
            }
            (tuple, uniform)
        })
        .collect();
    let mut plan = MultiMarginalPlan {
        instance: instance.clone(),
        entries,
        value: 0.0,
        cost,
    };
    plan.value = plan.evaluate(cost);
    Ok(plan)
}

/// True when the barycenter result attains the multi-marginal optimum:
/// variance-cost values agree within 1e-6 and the law of the average under
/// an optimal plan is the barycenter measure within W2 1e-6.
pub fn certify_barycenter(
    instance: &MultiMarginalInstance,
    bary: &BarycenterResult,
) -> Result<bool, OracleError> {
    let (value, plan) = solve_multimarginal(instance, MultiMarginalCost::Variance)?;
    if (value - bary.objective).abs() > 1e-6 {
        return Ok(false);
    }
    let (law_gap, _) = w2(&plan.law_of_average(), &bary.measure)?;
    Ok(law_gap.max(0.0).sqrt() <= 1e-6)
}

struct RollbackDsu {
    parent: Vec<usize>,
    size: Vec<usize>,
    history: Vec<(usize, usize)>,
}

impl RollbackDsu {
    fn new(n: usize) -> Self {
        RollbackDsu {
            parent: (0..n).collect(),
            size: vec![1; n],
            history: Vec::new(),
        }
    }

    fn find(&self, mut v: usize) -> usize {
        while self.parent[v] != v {
            v = self.parent[v];
        }
        v
    }

    /// Returns false on a cycle; records the merge for rollback.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (big, small) = if self.size[ra] >= self.size[rb] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.parent[small] = big;
        self.size[big] += self.size[small];
        self.history.push((small, big));
        true
    }

    fn rollback(&mut self) {
        let (small, big) = self.history.pop().expect("rollback without union");
        self.parent[small] = small;
        self.size[big] -= self.size[small];
    }
}

struct VertexSearch<'a> {
    mu: &'a DiscreteMeasure,
    nu: &'a DiscreteMeasure,
    edges: Vec<(usize, usize)>,
    dsu: RollbackDsu,
    chosen: Vec<usize>,
    seen: HashSet<Vec<i64>>,
    out: Vec<Vec<f64>>,
}

impl VertexSearch<'_> {
    fn run(&mut self, next: usize) {
        let needed = self.mu.len() + self.nu.len() - 1;
        if self.chosen.len() == needed {
            self.solve_tree();
            return;
        }
        if self.edges.len() - next < needed - self.chosen.len() {
            return;
        }
        let (i, j) = self.edges[next];
        if self.dsu.union(i, self.mu.len() + j) {
            self.chosen.push(next);
            self.run(next + 1);
            self.chosen.pop();
            self.dsu.rollback();
        }
        self.run(next + 1);
    }

    /// Leaf elimination on the chosen spanning tree: a degree-one node
    /// fixes the mass on its only edge; infeasible (negative) trees are
    /// dropped, duplicates are deduplicated on rounded masses.
    fn solve_tree(&mut self) {
        let (m, n) = (self.mu.len(), self.nu.len());
        let nodes = m + n;
        let mut supply: Vec<f64> = (0..m)
            .map(|i| self.mu.weight(i))
            .chain((0..n).map(|j| self.nu.weight(j)))
            .collect();
        let mut incident: Vec<Vec<usize>> = vec![Vec::new(); nodes];
        for &e in &self.chosen {
            let (i, j) = self.edges[e];
            incident[i].push(e);
            incident[m + j].push(e);
        }
        let mut degree: Vec<usize> = incident.iter().map(|v| v.len()).collect();
        let mut removed = vec![false; self.edges.len()];
        let mut mass = vec![0.0; self.edges.len()];
        let mut queue: Vec<usize> = (0..nodes).filter(|&v| degree[v] == 1).collect();
        let mut processed = 0;
        while let Some(v) = queue.pop() {
            let Some(e) = incident[v].iter().copied().find(|&e| !removed[e]) else {
                continue;
            };
            let (i, j) = self.edges[e];
            let (a, b) = (i, m + j);
            let other = if a == v { b } else { a };
            let flow = supply[v];
            if flow < -1e-12 {
                return;
            }
            mass[e] = flow.max(0.0);
            supply[v] = 0.0;
            supply[other] -= flow;
            removed[e] = true;
            degree[v] -= 1;
            degree[other] -= 1;
            if degree[other] == 1 {
                queue.push(other);
            }
            processed += 1;
        }
        if processed != self.chosen.len() {
            return;
        }
        let mut table = vec![0.0; m * n];
        for &e in &self.chosen {
            let (i, j) = self.edges[e];
            if mass[e] < -1e-12 {
                return;
            }
            table[i * n + j] = mass[e].max(0.0);
        }
        let key: Vec<i64> = table.iter().map(|&x| (x * 1e9).round() as i64).collect();
        if self.seen.insert(key) {
            self.out.push(table);
        }
    }
}

/// All extreme points of the transportation polytope between two measures
/// (after merging), via spanning trees of the complete bipartite support
/// graph. Intended for very small supports; the cell cap keeps it so.
pub fn enumerate_couplings(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<Vec<Coupling>, OracleError> {
    if mu.dim() != nu.dim() {
        return Err(OracleError::MixedDimensions {
            left: mu.dim(),
            right: nu.dim(),
        });
    }
    let mu = mu.merged();
    let nu = nu.merged();
    let cells = mu.len() * nu.len();
    if cells > MAX_ENUMERATION_CELLS {
        return Err(OracleError::EnumerationTooLarge { cells });
    }
    let edges: Vec<(usize, usize)> = (0..mu.len())
        .flat_map(|i| (0..nu.len()).map(move |j| (i, j)))
        .collect();
    let mut search = VertexSearch {
        mu: &mu,
        nu: &nu,
        edges,
        dsu: RollbackDsu::new(mu.len() + nu.len()),
        chosen: Vec::new(),
        seen: HashSet::new(),
        out: Vec::new(),
    };
    search.run(0);
    let tables = std::mem::take(&mut search.out);
    tables
        .into_iter()
        .map(|table| Ok(Coupling::new(mu.clone(), nu.clone(), table)?))
        .collect()
}
