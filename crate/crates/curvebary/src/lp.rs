//! Dense two-phase primal simplex for small equality-form programs.
//!
//! Every solver-facing problem in this crate (transport plans, fixed-grid
//! barycenters, product-support couplings, hull membership) is a small
//! `min c'x  s.t.  Ax = b, x >= 0`. A tableau method with periodic
//! reduced-cost rebuilds plus a final re-solve of the basic system against
//! the original data is accurate enough for the 1e-9 cross-check budget.

use thiserror::Error;

#[derive(Debug, Error)]
pub(crate) enum LpError {
    #[error("infeasible program (phase-1 residual {0:.3e})")]
    Infeasible(f64),
    #[error("unbounded objective")]
    Unbounded,
    #[error("simplex stalled after {0} pivots")]
    IterationLimit(usize),
}

#[derive(Debug, Clone)]
pub(crate) struct LinearProgram {
    nrows: usize,
    ncols: usize,
    coeffs: Vec<f64>,
    rhs: Vec<f64>,
    costs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
}

impl LinearProgram {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        LinearProgram {
            nrows,
            ncols,
            coeffs: vec![0.0; nrows * ncols],
            rhs: vec![0.0; nrows],
            costs: vec![0.0; ncols],
        }
    }

    pub fn set_coeff(&mut self, row: usize, col: usize, value: f64) {
        self.coeffs[row * self.ncols + col] = value;
    }

    pub fn set_rhs(&mut self, row: usize, value: f64) {
        self.rhs[row] = value;
    }

    pub fn set_cost(&mut self, col: usize, value: f64) {
        self.costs[col] = value;
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        Simplex::new(self).solve()
    }
}

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;
const REPRICE_EVERY: usize = 128;
const BLAND_AFTER: usize = 64;

struct Simplex<'a> {
    lp: &'a LinearProgram,
    m: usize,
    /// Real (non-artificial) column count.
    n: usize,
    /// Tableau row width: n real + m artificial + rhs.
    width: usize,
    tab: Vec<f64>,
    /// Reduced-cost row, same width as tableau rows.
    red: Vec<f64>,
    basis: Vec<usize>,
    /// Sign-normalized copies of the input, kept pristine for the final
    /// re-solve of the basic system.
    a_norm: Vec<f64>,
    b_norm: Vec<f64>,
}

impl<'a> Simplex<'a> {
    fn new(lp: &'a LinearProgram) -> Self {
        let m = lp.nrows;
        let n = lp.ncols;
        let width = n + m + 1;
        let mut tab = vec![0.0; m * width];
        let mut a_norm = vec![0.0; m * n];
        let mut b_norm = vec![0.0; m];
        for i in 0..m {
            let sign = if lp.rhs[i] < 0.0 { -1.0 } else { 1.0 };
            for j in 0..n {
                let v = sign * lp.coeffs[i * n + j];
                tab[i * width + j] = v;
                a_norm[i * n + j] = v;
            }
            tab[i * width + n + i] = 1.0;
            tab[i * width + width - 1] = sign * lp.rhs[i];
            b_norm[i] = sign * lp.rhs[i];
        }
        Simplex {
            lp,
            m,
            n,
            width,
            tab,
            red: vec![0.0; width],
            basis: (n..n + m).collect(),
            a_norm,
            b_norm,
        }
    }

    fn solve(mut self) -> Result<LpSolution, LpError> {
        let phase1: Vec<f64> = (0..self.n + self.m)
            .map(|j| if j < self.n { 0.0 } else { 1.0 })
            .collect();
        self.reprice(&phase1);
        self.iterate(&phase1)?;
        let residual: f64 = (0..self.m)
            .filter(|&i| self.basis[i] >= self.n)
            .map(|i| self.tab[i * self.width + self.width - 1])
            .sum();
        let scale = 1.0 + self.b_norm.iter().map(|v| v.abs()).sum::<f64>();
        if residual > FEAS_TOL * scale {
            return Err(LpError::Infeasible(residual));
        }
        self.purge_artificials();

        let mut phase2: Vec<f64> = self.lp.costs.clone();
        phase2.extend(std::iter::repeat(0.0).take(self.m));
        self.reprice(&phase2);
        self.iterate(&phase2)?;
        Ok(self.refine())
    }

    /// Rebuilds the reduced-cost row from the current tableau and basis.
    fn reprice(&mut self, costs: &[f64]) {
        let width = self.width;
        for j in 0..width {
            let direct = if j < width - 1 { costs[j] } else { 0.0 };
            let mut acc = 0.0;
            for i in 0..self.m {
                acc += costs[self.basis[i]] * self.tab[i * width + j];
            }
            self.red[j] = direct - acc;
        }
    }

    fn select_entering(&self, bland: bool) -> Option<usize> {
        // Artificial columns never re-enter.
        if bland {
            (0..self.n).find(|&j| self.red[j] < -COST_TOL)
        } else {
            let mut best = None;
            let mut best_val = -COST_TOL;
            for j in 0..self.n {
                if self.red[j] < best_val {
                    best_val = self.red[j];
                    best = Some(j);
                }
            }
            best
        }
    }

    fn select_leaving(&self, enter: usize) -> Option<usize> {
        let width = self.width;
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.m {
            let coeff = self.tab[i * width + enter];
            if coeff <= PIVOT_TOL {
                continue;
            }
            let ratio = self.tab[i * width + width - 1] / coeff;
            let replace = match best {
                None => true,
                Some((bi, br)) => {
                    if ratio < br - 1e-12 {
                        true
                    } else if ratio > br + 1e-12 {
                        false
                    } else {
                        // Tie: prefer kicking artificials out, then the
                        // smallest basis index (anti-cycling bias).
                        let cand_art = self.basis[i] >= self.n;
                        let best_art = self.basis[bi] >= self.n;
                        match (cand_art, best_art) {
                            (true, false) => true,
                            (false, true) => false,
                            _ => self.basis[i] < self.basis[bi],
                        }
                    }
                }
            };
            if replace {
                best = Some((i, ratio));
            }
        }
        best.map(|(i, _)| i)
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let width = self.width;
        let inv = 1.0 / self.tab[row * width + col];
        for j in 0..width {
            self.tab[row * width + j] *= inv;
        }
        self.tab[row * width + col] = 1.0;
        for r in 0..self.m {
            if r == row {
                continue;
            }
            let factor = self.tab[r * width + col];
            if factor == 0.0 {
                continue;
            }
            for j in 0..width {
                self.tab[r * width + j] -= factor * self.tab[row * width + j];
            }
            self.tab[r * width + col] = 0.0;
        }
        let factor = self.red[col];
        if factor != 0.0 {
            for j in 0..width {
                self.red[j] -= factor * self.tab[row * width + j];
            }
            self.red[col] = 0.0;
        }
        self.basis[row] = col;
    }

    fn iterate(&mut self, costs: &[f64]) -> Result<(), LpError> {
        let cap = 1000 + 200 * (self.m + self.n);
        let mut pivots = 0usize;
        let mut non_improving = 0usize;
        let mut last_obj = f64::INFINITY;
        loop {
            if pivots > 0 && pivots % REPRICE_EVERY == 0 {
                self.reprice(costs);
            }
            let bland = non_improving > BLAND_AFTER;
            let enter = match self.select_entering(bland) {
                Some(j) => j,
                None => {
                    // Confirm optimality against a freshly priced row.
                    self.reprice(costs);
                    match self.select_entering(bland) {
                        Some(j) => j,
                        None => return Ok(()),
                    }
                }
            };
            let leave = self.select_leaving(enter).ok_or(LpError::Unbounded)?;
            self.pivot(leave, enter);
            pivots += 1;
            if pivots > cap {
                return Err(LpError::IterationLimit(pivots));
            }
            let obj = -self.red[self.width - 1];
            if obj < last_obj - 1e-12 {
                non_improving = 0;
            } else {
                non_improving += 1;
            }
            last_obj = obj;
        }
    }

    /// Pivots zero-valued artificials out of the basis where a real column
    /// is available. Rows that stay artificial are identically zero in the
    /// real columns and remain inert from then on.
    fn purge_artificials(&mut self) {
        let width = self.width;
        for i in 0..self.m {
            if self.basis[i] < self.n {
                continue;
            }
            if let Some(j) = (0..self.n).find(|&j| self.tab[i * width + j].abs() > 1e-7) {
                self.pivot(i, j);
            }
        }
    }

    /// Re-solves the final basic system against the untouched input data,
    /// recovering the vertex to near machine precision.
    fn refine(&self) -> LpSolution {
        let m = self.m;
        let mut mat = vec![0.0; m * m];
        for (k, &col) in self.basis.iter().enumerate() {
            for i in 0..m {
                mat[i * m + k] = if col < self.n {
                    self.a_norm[i * self.n + col]
                } else if col - self.n == i {
                    1.0
                } else {
                    0.0
                };
            }
        }
        let solved = solve_square(&mut mat, &mut self.b_norm.clone(), m);
        let mut x = vec![0.0; self.n];
        match solved {
            Some(xb) => {
                for (k, &col) in self.basis.iter().enumerate() {
                    if col < self.n {
                        x[col] = if xb[k] < 0.0 && xb[k] > -1e-7 { 0.0 } else { xb[k] };
                    }
                }
            }
            None => {
                // Numerically singular basis: fall back to tableau values.
                for (k, &col) in self.basis.iter().enumerate() {
                    if col < self.n {
                        let v = self.tab[k * self.width + self.width - 1];
                        x[col] = if v < 0.0 && v > -1e-7 { 0.0 } else { v };
                    }
                }
            }
        }
        let value = x
            .iter()
            .zip(self.lp.costs.iter())
            .map(|(xi, ci)| xi * ci)
            .sum();
        LpSolution { value, x }
    }
}

/// Gaussian elimination with partial pivoting; `mat` is row-major n x n.
fn solve_square(mat: &mut [f64], rhs: &mut [f64], n: usize) -> Option<Vec<f64>> {
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (piv_row, piv_val) = (k..n)
            .map(|i| (i, mat[perm[i] * n + k].abs()))
            .max_by(|a, b| a.1.total_cmp(&b.1))?;
        if piv_val < 1e-12 {
            return None;
        }
        perm.swap(k, piv_row);
        let pk = perm[k];
        let inv = 1.0 / mat[pk * n + k];
        for i in (k + 1)..n {
            let pi = perm[i];
            let factor = mat[pi * n + k] * inv;
            if factor == 0.0 {
                continue;
            }
            for j in k..n {
                mat[pi * n + j] -= factor * mat[pk * n + j];
            }
            rhs[pi] -= factor * rhs[pk];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let pk = perm[k];
        let mut acc = rhs[pk];
        for j in (k + 1)..n {
            acc -= mat[pk * n + j] * x[j];
        }
        x[k] = acc / mat[pk * n + k];
    }
    Some(x)
}
