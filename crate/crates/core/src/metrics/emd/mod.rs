//! Earth Mover's distance between equal-size clouds.
//!
//! EMD is the minimum-cost one-to-one matching under Euclidean cost, divided
//! by the number of points. The exact solver runs the Hungarian algorithm;
//! the regularized solver runs entropic optimal transport and rounds its
//! plan onto the transport polytope, so it never reports less than the
//! exact optimum.

pub mod hungarian;
mod sinkhorn;

pub use hungarian::{solve_assignment, Assignment};
pub use sinkhorn::regularized_transport;

use serde::{Deserialize, Serialize};

use super::{MetricKind, MetricValue};
use crate::error::{Error, Result};
use crate::pointcloud::{distance, Point3, PointCloud};
use crate::registry::Registry;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmdConfig {
    /// Largest cloud handled by the exact solver.
    pub exact_limit: usize,
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Whether the `auto` solver may switch to the regularized solver above
    /// `exact_limit`.
    pub fallback: bool,
}

impl Default for EmdConfig {
    fn default() -> Self {
        Self {
            exact_limit: 1024,
            epsilon: 1e-3,
            max_iterations: 500,
            fallback: true,
        }
    }
}

/// Outcome of a transport solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Transport {
    /// Transport cost per point.
    pub cost: f64,
    /// Row-to-column matching, when the solver produces a permutation.
    pub assignment: Option<Vec<usize>>,
    pub iterations: usize,
}

pub trait EmdSolver: Send + Sync {
    fn name(&self) -> &'static str;

    /// Both slices have the same, nonzero length.
    fn solve(&self, gt: &[Point3], generated: &[Point3]) -> Result<Transport>;
}

pub type EmdSolverFactory = fn(&EmdConfig) -> Box<dyn EmdSolver>;

pub fn cost_matrix(a: &[Point3], b: &[Point3]) -> Vec<f64> {
    let mut c = Vec::with_capacity(a.len() * b.len());
    for p in a {
        c.extend(b.iter().map(|q| distance(p, q)));
    }
    c
}

pub struct ExactAssignment {
    pub limit: usize,
}

impl EmdSolver for ExactAssignment {
    fn name(&self) -> &'static str {
        "exact-assignment"
    }

    fn solve(&self, gt: &[Point3], generated: &[Point3]) -> Result<Transport> {
        let n = gt.len();
        if n > self.limit {
            return Err(Error::SolverInfeasible { n, limit: self.limit });
        }
        let a = solve_assignment(&cost_matrix(gt, generated), n);
        Ok(Transport {
            cost: a.total_cost / n as f64,
            assignment: Some(a.row_to_col),
            iterations: n,
        })
    }
}

pub struct RegularizedTransport {
    pub epsilon: f64,
    pub max_iterations: usize,
}

impl EmdSolver for RegularizedTransport {
    fn name(&self) -> &'static str {
        "regularized-transport"
    }

    fn solve(&self, gt: &[Point3], generated: &[Point3]) -> Result<Transport> {
        let n = gt.len();
        let (cost, iterations) =
            regularized_transport(&cost_matrix(gt, generated), n, self.epsilon, self.max_iterations);
        Ok(Transport {
            cost,
            assignment: None,
            iterations,
        })
    }
}

/// Exact up to `exact_limit`, regularized above it when fallback is allowed.
pub struct AutoSolver {
    exact: ExactAssignment,
    regularized: RegularizedTransport,
    fallback: bool,
}

impl EmdSolver for AutoSolver {
    fn name(&self) -> &'static str {
        "auto"
    }

    fn solve(&self, gt: &[Point3], generated: &[Point3]) -> Result<Transport> {
        if gt.len() > self.exact.limit && self.fallback {
            self.regularized.solve(gt, generated)
        } else {
            self.exact.solve(gt, generated)
        }
    }
}

/// Solvers selectable by name: `auto`, `exact-assignment`, `regularized-transport`.
pub fn emd_solver_registry() -> Registry<EmdSolverFactory> {
    let mut reg: Registry<EmdSolverFactory> = Registry::new("EMD solver");
    reg.register("exact-assignment", |c| {
        Box::new(ExactAssignment {
            limit: c.exact_limit,
        })
    })
    .register("regularized-transport", |c| {
        Box::new(RegularizedTransport {
            epsilon: c.epsilon,
            max_iterations: c.max_iterations,
        })
    })
    .register("auto", |c| {
        Box::new(AutoSolver {
            exact: ExactAssignment {
                limit: c.exact_limit,
            },
            regularized: RegularizedTransport {
                epsilon: c.epsilon,
                max_iterations: c.max_iterations,
            },
            fallback: c.fallback,
        })
    });
    reg
}

pub fn emd(gt: &PointCloud, generated: &PointCloud, solver: &dyn EmdSolver) -> Result<MetricValue> {
    if gt.len() != generated.len() {
        return Err(Error::CardinalityMismatch {
            left: gt.len(),
            right: generated.len(),
        });
    }
    let t = solver.solve(gt.points(), generated.points())?;
    Ok(MetricValue::new(MetricKind::Emd, t.cost.max(0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(p: &[Point3]) -> PointCloud {
        PointCloud::new(p.to_vec()).unwrap()
    }

    fn exact() -> Box<dyn EmdSolver> {
        emd_solver_registry().get("exact-assignment").unwrap()(&EmdConfig::default())
    }

    #[test]
    fn identity_is_zero() {
        let c = cloud(&[[0.0; 3], [1.0, 2.0, 3.0], [-1.0, 0.5, 0.0]]);
        assert_eq!(emd(&c, &c, exact().as_ref()).unwrap().value, 0.0);
    }

    #[test]
    fn two_point_matching() {
        let g = cloud(&[[0.0; 3], [1.0, 0.0, 0.0]]);
        let r = cloud(&[[0.0; 3], [0.0, 1.0, 0.0]]);
        let v = emd(&g, &r, exact().as_ref()).unwrap().value;
        assert!((v - std::f64::consts::SQRT_2 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn cardinality_and_limit_errors() {
        let g = cloud(&[[0.0; 3], [1.0, 0.0, 0.0]]);
        let r = cloud(&[[0.0; 3]]);
        assert!(matches!(
            emd(&g, &r, exact().as_ref()),
            Err(Error::CardinalityMismatch { left: 2, right: 1 })
        ));
        let strict = EmdConfig {
            exact_limit: 1,
            fallback: false,
            ..Default::default()
        };
        let auto = emd_solver_registry().get("auto").unwrap()(&strict);
        assert!(matches!(
            emd(&g, &g, auto.as_ref()),
            Err(Error::SolverInfeasible { n: 2, limit: 1 })
        ));
        let lenient = EmdConfig {
            exact_limit: 1,
            ..Default::default()
        };
        let auto = emd_solver_registry().get("auto").unwrap()(&lenient);
        let v = emd(&g, &g, auto.as_ref()).unwrap().value;
        assert!(v < 1e-6);
    }
}
