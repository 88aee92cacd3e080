//! Wasserstein-2 barycenters of time-indexed curves of discrete measures,
//! and the optimal-process machinery built on top of them.
//!
//! The crate covers four layers:
//!
//! * [`measures`]: discrete measures, measure curves, time grids, and the
//!   sampling rules that turn a curve into a finite family of marginals.
//! * [`ot`]: exact quadratic-cost optimal transport between discrete
//!   measures (LP based), the 1d closed form, and transport-map algebra
//!   (barycentric projection, inversion, composition).
//! * [`barycenter`]: fixed-grid and free-support barycenter solvers for
//!   finitely many marginals, curve barycenters over refining time grids,
//!   and density ceilings for the result.
//! * [`process`] and [`oracle`]: assembling barycenter maps into a process
//!   representation (one map per time node, all from a common base), its
//!   time-averaged coupling cost, re-rooting at a different node, and
//!   independent brute-force certification of everything.
//!
//! ```
//! use curvebary::measures::DiscreteMeasure;
//! use curvebary::barycenter::{finite_barycenter, BarycenterProblem, SupportMode};
//!
//! let a = DiscreteMeasure::dirac(vec![0.0]).unwrap();
//! let b = DiscreteMeasure::dirac(vec![1.0]).unwrap();
//! let problem = BarycenterProblem::new(
//!     vec![a, b],
//!     vec![0.5, 0.5],
//!     SupportMode::free_support(),
//! ).unwrap();
//! let result = finite_barycenter(&problem).unwrap();
//! assert!((result.measure.point(0)[0] - 0.5).abs() < 1e-12);
//! ```

pub mod barycenter;
pub mod cli;
pub mod io;
mod lp;
pub mod measures;
pub mod oracle;
pub mod ot;
pub mod process;
pub(crate) mod quantile;
pub mod tolerances;
