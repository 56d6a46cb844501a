//! Solver-agnostic model representation.
//!
//! A [`ModelIr`] holds continuous variables with bounds, linear rows,
//! second-order cone rows, SOS1 sets, and a linear objective plus quadratic
//! epigraph links `epigraph >= scale * argument^2`. Backends decide how cones
//! and quadratics are handled: the native backend polyhedralizes them, the
//! interchange writer passes them through.

use std::fmt;

use crate::error::{Result, SolverError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub(crate) usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Eq,
    Le,
    Ge,
}

impl Sense {
    pub fn symbol(self) -> &'static str {
        match self {
            Sense::Eq => "E",
            Sense::Le => "L",
            Sense::Ge => "G",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Sense> {
        match s {
            "E" => Some(Sense::Eq),
            "L" => Some(Sense::Le),
            "G" => Some(Sense::Ge),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub name: String,
    /// Formulation family the row belongs to, e.g. `budget-balance`.
    pub tag: String,
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Row {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, a)| a * values[v.0]).sum()
    }

    /// Amount by which `values` violate this row (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.activity(values);
        match self.sense {
            Sense::Eq => (lhs - self.rhs).abs(),
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
        }
    }
}

/// `sum_k (coef_k * x_k)^2 <= bound`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConeRow {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub bound: f64,
}

impl ConeRow {
    pub fn lhs(&self, values: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|&(v, a)| {
                let s = a * values[v.0];
                s * s
            })
            .sum()
    }
}

/// At most one member may be nonzero.
#[derive(Clone, Debug, PartialEq)]
pub struct Sos1Set {
    pub name: String,
    pub members: Vec<VarId>,
}

/// `epigraph >= scale * argument^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadLink {
    pub name: String,
    pub epigraph: VarId,
    pub argument: VarId,
    pub scale: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelIr {
    pub vars: Vec<Variable>,
    pub rows: Vec<Row>,
    pub cones: Vec<ConeRow>,
    pub sos1: Vec<Sos1Set>,
    pub quads: Vec<QuadLink>,
    pub objective: Vec<(VarId, f64)>,
    pub objective_constant: f64,
}

impl ModelIr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        let id = VarId(self.vars.len());
        self.vars.push(Variable {
            name: name.into(),
            lower,
            upper,
        });
        id
    }

    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        tag: &str,
        terms: Vec<(VarId, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> usize {
        let idx = self.rows.len();
        self.rows.push(Row {
            name: name.into(),
            tag: tag.to_string(),
            terms: merge_terms(terms),
            sense,
            rhs,
        });
        idx
    }

    pub fn add_cone(&mut self, name: impl Into<String>, terms: Vec<(VarId, f64)>, bound: f64) {
        self.cones.push(ConeRow {
            name: name.into(),
            terms,
            bound,
        });
    }

    pub fn add_sos1(&mut self, name: impl Into<String>, members: Vec<VarId>) {
        self.sos1.push(Sos1Set {
            name: name.into(),
            members,
        });
    }

    pub fn add_quad(&mut self, name: impl Into<String>, epigraph: VarId, argument: VarId, scale: f64) {
        self.quads.push(QuadLink {
            name: name.into(),
            epigraph,
            argument,
            scale,
        });
    }

    pub fn add_objective(&mut self, var: VarId, coef: f64) {
        if coef != 0.0 {
            self.objective.push((var, coef));
        }
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.vars[id.0]
    }

    pub fn var_mut(&mut self, id: VarId) -> &mut Variable {
        &mut self.vars[id.0]
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn find_var(&self, name: &str) -> Option<VarId> {
        self.vars.iter().position(|v| v.name == name).map(VarId)
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective_constant
            + self
                .objective
                .iter()
                .map(|&(v, c)| c * values[v.0])
                .sum::<f64>()
    }

    /// Objective coefficient of `var` after merging duplicates.
    pub fn objective_coef(&self, var: VarId) -> f64 {
        self.objective
            .iter()
            .filter(|(v, _)| *v == var)
            .map(|(_, c)| c)
            .sum()
    }

    pub fn rows_tagged<'a>(&'a self, tag: &'a str) -> impl Iterator<Item = &'a Row> + 'a {
        self.rows.iter().filter(move |r| r.tag == tag)
    }

    /// Checks referential integrity and SOS1 member domains.
    pub fn validate(&self) -> Result<()> {
        let n = self.vars.len();
        let check = |v: VarId, owner: &str| {
            if v.0 >= n {
                Err(SolverError::UnknownVariable(v.0, owner.to_string()))
            } else {
                Ok(())
            }
        };
        for r in &self.rows {
            for &(v, _) in &r.terms {
                check(v, &r.name)?;
            }
        }
        for c in &self.cones {
            for &(v, _) in &c.terms {
                check(v, &c.name)?;
            }
        }
        for q in &self.quads {
            check(q.epigraph, &q.name)?;
            check(q.argument, &q.name)?;
        }
        for &(v, _) in &self.objective {
            check(v, "objective")?;
        }
        for s in &self.sos1 {
            for &v in &s.members {
                check(v, &s.name)?;
                if self.vars[v.0].lower < 0.0 {
                    return Err(SolverError::InvalidSos1Member {
                        set: s.name.clone(),
                        var: self.vars[v.0].name.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Combines repeated variables and drops exact zeros.
pub fn merge_terms(mut terms: Vec<(VarId, f64)>) -> Vec<(VarId, f64)> {
    terms.sort_by_key(|t| t.0);
    let mut out: Vec<(VarId, f64)> = Vec::with_capacity(terms.len());
    for (v, a) in terms {
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 += a,
            _ => out.push((v, a)),
        }
    }
    out.retain(|t| t.1 != 0.0);
    out
}
