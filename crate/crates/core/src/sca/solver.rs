//! Interior-point backend for [`ConicProgram`] built on Clarabel.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use serde::{Deserialize, Serialize};

use super::program::{AffineExpr, ConicProgram, RowKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubproblemSolution {
    pub status: SolveStatus,
    /// Primal values indexed like `ConicProgram::var_names`; empty unless
    /// the status is `Optimal`.
    pub values: Vec<f64>,
    pub objective: f64,
    pub max_violation: f64,
    pub solver_iterations: u32,
    /// The backend stopped early and returned its best feasible iterate.
    pub inexact: bool,
}

impl SubproblemSolution {
    pub fn value(&self, prog: &ConicProgram, name: &str) -> Option<f64> {
        prog.var_index(name).and_then(|i| self.values.get(i).copied())
    }

    pub fn into_result(self) -> Result<Self> {
        match self.status {
            SolveStatus::Optimal => Ok(self),
            SolveStatus::Infeasible => Err(Error::Infeasible),
            SolveStatus::Unbounded => Err(Error::NumericalFailure("subproblem unbounded".into())),
            SolveStatus::NumericalFailure => Err(Error::NumericalFailure(format!(
                "residual {:.3e} after {} iterations",
                self.max_violation, self.solver_iterations
            ))),
        }
    }
}

struct Rows {
    ii: Vec<usize>,
    jj: Vec<usize>,
    vv: Vec<f64>,
    b: Vec<f64>,
}

impl Rows {
    // Clarabel form: A x + s = b, s in K. An expression e(x) = a.x + c that
    // must lie in K maps to the row (-a, c).
    fn push(&mut self, e: &AffineExpr, scale: &[f64]) {
        let row = self.b.len();
        for &(j, c) in &e.terms {
            if c != 0.0 {
                self.ii.push(row);
                self.jj.push(j);
                self.vv.push(-c * scale[j]);
            }
        }
        self.b.push(e.constant);
    }
}

/// Solves `prog` to tolerance `tol` (feasibility and relative gap).
pub fn solve_subproblem(prog: &ConicProgram, tol: f64) -> Result<SubproblemSolution> {
    prog.validate()?;
    let n = prog.num_vars();
    let mut rows = Rows {
        ii: Vec::new(),
        jj: Vec::new(),
        vv: Vec::new(),
        b: Vec::new(),
    };
    let mut cones = Vec::new();

    let eqs: Vec<_> = prog.linear.iter().filter(|r| r.kind == RowKind::Eq).collect();
    if !eqs.is_empty() {
        eqs.iter().for_each(|r| rows.push(&r.expr, &prog.scale));
        cones.push(SupportedConeT::ZeroConeT(eqs.len()));
    }
    // expr <= 0  <=>  -expr in R+
    let les: Vec<_> = prog.linear.iter().filter(|r| r.kind == RowKind::Le).collect();
    if !les.is_empty() {
        les.iter().for_each(|r| rows.push(&r.expr.clone().scaled(-1.0), &prog.scale));
        cones.push(SupportedConeT::NonnegativeConeT(les.len()));
    }
    for c in &prog.soc {
        rows.push(&c.head, &prog.scale);
        c.tail.iter().for_each(|e| rows.push(e, &prog.scale));
        cones.push(SupportedConeT::SecondOrderConeT(1 + c.tail.len()));
    }
    for c in &prog.exp {
        rows.push(&c.x, &prog.scale);
        rows.push(&c.y, &prog.scale);
        rows.push(&c.z, &prog.scale);
        cones.push(SupportedConeT::ExponentialConeT());
    }

    let m = rows.b.len();
    let a = CscMatrix::new_from_triplets(m, n, rows.ii, rows.jj, rows.vv);
    let p = CscMatrix::zeros((n, n));
    let q: Vec<f64> = prog.objective.iter().zip(&prog.scale).map(|(c, s)| -c * s).collect();

    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(200)
        .tol_feas(tol)
        .tol_gap_abs(tol)
        .tol_gap_rel(tol)
        .tol_infeas_abs(tol)
        .tol_infeas_rel(tol)
        .build()
        .map_err(|e| Error::NumericalFailure(format!("solver settings: {e:?}")))?;
    let mut solver = DefaultSolver::new(&p, &q, &a, &rows.b, &cones, settings)
        .map_err(|e| Error::NumericalFailure(format!("solver setup: {e:?}")))?;
    solver.solve();
    let sol = &solver.solution;

    let status = match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
        // Early exits keep the best iterate; accept it if it is feasible.
        SolverStatus::InsufficientProgress | SolverStatus::MaxIterations => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        _ => SolveStatus::NumericalFailure,
    };
    log::debug!("clarabel {:?} after {} iterations", sol.status, sol.iterations);
    let values: Vec<f64> = sol.x.iter().zip(&prog.scale).map(|(x, s)| x * s).collect();
    let max_violation = if values.len() == n {
        prog.max_violation(&values)
    } else {
        f64::INFINITY
    };
    // An inexact point must still be primal feasible.
    let status = if status == SolveStatus::Optimal && !(max_violation <= tol.max(1e-7)) {
        SolveStatus::NumericalFailure
    } else {
        status
    };
    let optimal = status == SolveStatus::Optimal;
    let inexact = optimal && !matches!(sol.status, SolverStatus::Solved | SolverStatus::AlmostSolved);
    Ok(SubproblemSolution {
        status,
        objective: if optimal { prog.objective_value(&values) } else { f64::NAN },
        values: if optimal { values } else { Vec::new() },
        max_violation,
        solver_iterations: sol.iterations,
        inexact,
    })
}
