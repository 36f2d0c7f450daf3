//! Solver-independent conic program: linear rows, second-order cones and
//! exponential cones over named scalar variables, maximizing a linear
//! objective.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type VarId = usize;

/// `sum(coef * x[var]) + constant`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AffineExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(v: VarId) -> Self {
        Self::term(v, 1.0)
    }

    pub fn term(v: VarId, coef: f64) -> Self {
        Self {
            terms: vec![(v, coef)],
            constant: 0.0,
        }
    }

    pub fn add_term(mut self, v: VarId, coef: f64) -> Self {
        self.terms.push((v, coef));
        self
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn scaled(mut self, s: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= s;
        }
        self.constant *= s;
        self
    }

    pub fn add(mut self, other: &AffineExpr) -> Self {
        self.terms.extend_from_slice(&other.terms);
        self.constant += other.constant;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * x[v]).sum::<f64>() + self.constant
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowKind {
    /// expr == 0
    Eq,
    /// expr <= 0
    Le,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRow {
    pub name: String,
    pub expr: AffineExpr,
    pub kind: RowKind,
}

/// `head >= || tail ||_2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocBlock {
    pub name: String,
    pub head: AffineExpr,
    pub tail: Vec<AffineExpr>,
}

/// `y * exp(x / y) <= z` with `y > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpBlock {
    pub name: String,
    pub x: AffineExpr,
    pub y: AffineExpr,
    pub z: AffineExpr,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConicProgram {
    pub var_names: Vec<String>,
    /// Maximized.
    pub objective: Vec<f64>,
    /// Solver-side variable scaling: the backend works with `x[j] / scale[j]`.
    pub scale: Vec<f64>,
    pub linear: Vec<LinearRow>,
    pub soc: Vec<SocBlock>,
    pub exp: Vec<ExpBlock>,
}

impl ConicProgram {
    pub fn add_var(&mut self, name: impl Into<String>) -> VarId {
        self.var_names.push(name.into());
        self.objective.push(0.0);
        self.scale.push(1.0);
        self.var_names.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.var_names.len()
    }

    pub fn var_index(&self, name: &str) -> Option<VarId> {
        self.var_names.iter().position(|n| n == name)
    }

    pub fn le(&mut self, name: impl Into<String>, expr: AffineExpr) {
        self.linear.push(LinearRow {
            name: name.into(),
            expr,
            kind: RowKind::Le,
        });
    }

    pub fn eq(&mut self, name: impl Into<String>, expr: AffineExpr) {
        self.linear.push(LinearRow {
            name: name.into(),
            expr,
            kind: RowKind::Eq,
        });
    }

    pub fn soc(&mut self, name: impl Into<String>, head: AffineExpr, tail: Vec<AffineExpr>) {
        self.soc.push(SocBlock {
            name: name.into(),
            head,
            tail,
        });
    }

    /// `a^2 + b^2 <= 2 t w` as a second-order cone, for affine `t, w >= 0`.
    pub fn rotated_soc(&mut self, name: impl Into<String>, a: AffineExpr, b: AffineExpr, t: AffineExpr, w: AffineExpr) {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let head = t.clone().scaled(s).add(&w.clone().scaled(s));
        let diff = t.scaled(s).add(&w.scaled(-s));
        self.soc(name, head, vec![a, b, diff]);
    }

    pub fn exp_cone(&mut self, name: impl Into<String>, x: AffineExpr, y: AffineExpr, z: AffineExpr) {
        self.exp.push(ExpBlock {
            name: name.into(),
            x,
            y,
            z,
        });
    }

    fn exprs(&self) -> impl Iterator<Item = &AffineExpr> {
        self.linear
            .iter()
            .map(|r| &r.expr)
            .chain(self.soc.iter().flat_map(|c| std::iter::once(&c.head).chain(&c.tail)))
            .chain(self.exp.iter().flat_map(|c| [&c.x, &c.y, &c.z]))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.objective.len() != n || self.scale.len() != n {
            return Err(Error::Dimension("objective or scale length differs from variable count".into()));
        }
        if self.scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Dimension("variable scale must be positive and finite".into()));
        }
        if let Some(bad) = self.exprs().flat_map(|e| &e.terms).find(|(v, _)| *v >= n) {
            return Err(Error::Dimension(format!("row references undeclared variable {}", bad.0)));
        }
        if self.soc.iter().any(|c| c.tail.is_empty()) {
            return Err(Error::Dimension("second-order cone without tail".into()));
        }
        let finite = self
            .exprs()
            .all(|e| e.constant.is_finite() && e.terms.iter().all(|t| t.1.is_finite()));
        if !finite || self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::Dimension("non-finite coefficient".into()));
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest constraint violation at `x`, each relative to `1 +` the
    /// magnitude of the terms in its row. Exponential cones are measured as
    /// `y exp(x/y) - z`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.worst_constraint(x).1
    }

    /// Name and relative violation of the most violated constraint.
    pub fn worst_constraint(&self, x: &[f64]) -> (String, f64) {
        let mag = |e: &AffineExpr| 1.0 + e.constant.abs() + e.terms.iter().map(|&(v, c)| (c * x[v]).abs()).sum::<f64>();
        let mut worst = (String::new(), 0.0);
        let mut note = |name: &str, v: f64| {
            if v > worst.1 {
                worst = (name.to_string(), v);
            }
        };
        for r in &self.linear {
            let v = r.expr.eval(x);
            let viol = match r.kind {
                RowKind::Eq => v.abs(),
                RowKind::Le => v.max(0.0),
            };
            note(&r.name, viol / mag(&r.expr));
        }
        for c in &self.soc {
            let norm = c.tail.iter().map(|e| e.eval(x).powi(2)).sum::<f64>().sqrt();
            let scale = mag(&c.head).max(c.tail.iter().map(mag).fold(0.0, f64::max));
            note(&c.name, (norm - c.head.eval(x)).max(0.0) / scale);
        }
        for c in &self.exp {
            let (a, b, z) = (c.x.eval(x), c.y.eval(x), c.z.eval(x));
            let v = if b > 0.0 {
                b * (a / b).exp() - z
            } else {
                f64::INFINITY
            };
            note(&c.name, v.max(0.0) / (1.0 + z.abs()));
        }
        worst
    }

    /// The same program with every exponential cone removed.
    pub fn without_exp_cones(&self) -> Self {
        Self {
            exp: Vec::new(),
            ..self.clone()
        }
    }

    /// Conic Benchmark Format (version 3) text. Rows are emitted in the
    /// order: equalities, inequalities, second-order cones, exponential
    /// cones.
    pub fn to_cbf(&self) -> String {
        let mut rows: Vec<&AffineExpr> = Vec::new();
        let mut cones: Vec<(String, usize)> = Vec::new();
        let eqs: Vec<_> = self.linear.iter().filter(|r| r.kind == RowKind::Eq).collect();
        let les: Vec<_> = self.linear.iter().filter(|r| r.kind == RowKind::Le).collect();
        if !eqs.is_empty() {
            rows.extend(eqs.iter().map(|r| &r.expr));
            cones.push(("L=".into(), eqs.len()));
        }
        if !les.is_empty() {
            rows.extend(les.iter().map(|r| &r.expr));
            cones.push(("L-".into(), les.len()));
        }
        for c in &self.soc {
            rows.push(&c.head);
            rows.extend(&c.tail);
            cones.push(("Q".into(), 1 + c.tail.len()));
        }
        // CBF orders the exponential cone as (z, y, x).
        for c in &self.exp {
            rows.extend([&c.z, &c.y, &c.x]);
            cones.push(("EXP".into(), 3));
        }

        let mut out = String::new();
        let _ = writeln!(out, "# variables: {}", self.var_names.join(" "));
        let _ = writeln!(out, "VER\n3\n");
        let _ = writeln!(out, "OBJSENSE\nMAX\n");
        let _ = writeln!(out, "VAR\n{} 1\nF {}\n", self.num_vars(), self.num_vars());
        let _ = writeln!(out, "CON\n{} {}", rows.len(), cones.len());
        for (kind, len) in &cones {
            let _ = writeln!(out, "{kind} {len}");
        }
        out.push('\n');

        let obj: Vec<_> = self.objective.iter().enumerate().filter(|(_, c)| **c != 0.0).collect();
        let _ = writeln!(out, "OBJACOORD\n{}", obj.len());
        for (j, c) in obj {
            let _ = writeln!(out, "{j} {c:e}");
        }
        out.push('\n');

        let nnz: usize = rows.iter().map(|r| r.terms.len()).sum();
        let _ = writeln!(out, "ACOORD\n{nnz}");
        for (i, r) in rows.iter().enumerate() {
            for (j, c) in &r.terms {
                let _ = writeln!(out, "{i} {j} {c:e}");
            }
        }
        out.push('\n');

        let consts: Vec<_> = rows.iter().enumerate().filter(|(_, r)| r.constant != 0.0).collect();
        let _ = writeln!(out, "BCOORD\n{}", consts.len());
        for (i, r) in consts {
            let _ = writeln!(out, "{i} {:e}", r.constant);
        }
        out
    }
}
