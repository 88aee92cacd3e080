//! Sorted-atom views of one-dimensional measures and quantile algebra.
//!
//! Quantile functions are taken left-continuous: F^{-1}(q) = x_k on the
//! cumulative cell (c_{k-1}, c_k]. Cells are always evaluated at their
//! midpoints so breakpoint ties never depend on float equality.

use crate::measures::DiscreteMeasure;
use crate::tolerances;

/// A 1d measure reduced to sorted distinct atoms with cumulative weights.
#[derive(Debug, Clone)]
pub(crate) struct SortedAtoms {
    pub xs: Vec<f64>,
    pub ws: Vec<f64>,
    /// cum[k] = total weight of atoms 0..=k; the last entry is forced to 1.
    pub cum: Vec<f64>,
}

impl SortedAtoms {
    pub fn from_measure(measure: &DiscreteMeasure) -> Self {
        assert_eq!(measure.dim(), 1, "quantile view needs a 1d measure");
        let mut atoms: Vec<(f64, f64)> = measure
            .points()
            .iter()
            .zip(measure.weights())
            .filter(|(_, &w)| w > 0.0)
            .map(|(p, &w)| (p[0], w))
            .collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut xs: Vec<f64> = Vec::with_capacity(atoms.len());
        let mut ws: Vec<f64> = Vec::with_capacity(atoms.len());
        for (x, w) in atoms {
            match xs.last() {
                Some(&last) if (x - last).abs() <= tolerances::MERGE => {
                    *ws.last_mut().unwrap() += w;
                }
                _ => {
                    xs.push(x);
                    ws.push(w);
                }
            }
        }
        let mut cum = Vec::with_capacity(ws.len());
        let mut acc = 0.0;
        for w in &ws {
            acc += w;
            cum.push(acc);
        }
        if let Some(last) = cum.last_mut() {
            *last = 1.0;
        }
        SortedAtoms { xs, ws, cum }
    }

    /// Left-continuous quantile: the atom whose cumulative cell covers `q`.
    pub fn quantile(&self, q: f64) -> f64 {
        let idx = self.cum.partition_point(|&c| c < q);
        self.xs[idx.min(self.xs.len() - 1)]
    }
}

/// Merged cumulative breakpoints of several profiles: strictly increasing
/// values in (0, 1], always ending at 1.
pub(crate) fn refine_breakpoints(profiles: &[&SortedAtoms]) -> Vec<f64> {
    let mut cuts: Vec<f64> = profiles
        .iter()
        .flat_map(|p| p.cum.iter().copied())
        .collect();
    cuts.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(cuts.len());
    for c in cuts {
        if c <= 0.0 {
            continue;
        }
        match out.last() {
            Some(&last) if c - last <= 1e-15 => {}
            _ => out.push(c),
        }
    }
    if out.last().map_or(true, |&last| last < 1.0) {
        out.push(1.0);
    }
    out
}

/// Exact squared-W2 between 1d measures via the common quantile refinement.
pub(crate) fn cost_1d(mu: &SortedAtoms, nu: &SortedAtoms) -> f64 {
    let cuts = refine_breakpoints(&[mu, nu]);
    let mut cost = 0.0;
    let mut prev = 0.0;
    for &c in &cuts {
        let q = 0.5 * (prev + c);
        let diff = mu.quantile(q) - nu.quantile(q);
        cost += (c - prev) * diff * diff;
        prev = c;
    }
    cost
}
