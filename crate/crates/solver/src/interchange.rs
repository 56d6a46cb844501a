//! Line-oriented text serialization of a [`ModelIr`] and reader for solution
//! files produced by an external solver.
//!
//! ```text
//! ECPRICE-MODEL 1
//! VARS <n>
//! <name> <lower> <upper>
//! ROWS <m>
//! <name> <tag> <E|L|G> <rhs> <k> <var> <coef> ...
//! CONES <c>
//! <name> <bound> <k> <var> <coef> ...
//! SOS1 <s>
//! <name> <k> <var> ...
//! OBJ <k> <constant>
//! <var> <coef>
//! QUAD <q>
//! <name> <epigraph> <argument> <scale>
//! END
//! ```
//!
//! Numbers use Rust's shortest round-trip formatting, so reading a written
//! model reproduces every `f64` exactly. Infinite bounds are `inf`/`-inf`.
//! A solution file is a `STATUS <status>` line, optional `OBJECTIVE <v>` and
//! `BOUND <v>` lines, then one `name value` line per variable.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Duration;

use crate::bnb::{relative_gap, SolveResult, SolveStatus};
use crate::error::{Result, SolverError};
use crate::model::{ModelIr, Sense, VarId};

const MAGIC: &str = "ECPRICE-MODEL 1";

fn num(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:?}")
    }
}

pub fn to_string(ir: &ModelIr) -> String {
    let mut s = String::new();
    let name = |v: VarId| ir.vars[v.0].name.as_str();
    let _ = writeln!(s, "{MAGIC}");
    let _ = writeln!(s, "VARS {}", ir.vars.len());
    for v in &ir.vars {
        let _ = writeln!(s, "{} {} {}", v.name, num(v.lower), num(v.upper));
    }
    let _ = writeln!(s, "ROWS {}", ir.rows.len());
    for r in &ir.rows {
        let _ = write!(
            s,
            "{} {} {} {} {}",
            r.name,
            r.tag,
            r.sense.symbol(),
            num(r.rhs),
            r.terms.len()
        );
        for &(v, a) in &r.terms {
            let _ = write!(s, " {} {}", name(v), num(a));
        }
        s.push('\n');
    }
    let _ = writeln!(s, "CONES {}", ir.cones.len());
    for c in &ir.cones {
        let _ = write!(s, "{} {} {}", c.name, num(c.bound), c.terms.len());
        for &(v, a) in &c.terms {
            let _ = write!(s, " {} {}", name(v), num(a));
        }
        s.push('\n');
    }
    let _ = writeln!(s, "SOS1 {}", ir.sos1.len());
    for set in &ir.sos1 {
        let _ = write!(s, "{} {}", set.name, set.members.len());
        for &v in &set.members {
            let _ = write!(s, " {}", name(v));
        }
        s.push('\n');
    }
    let _ = writeln!(s, "OBJ {} {}", ir.objective.len(), num(ir.objective_constant));
    for &(v, c) in &ir.objective {
        let _ = writeln!(s, "{} {}", name(v), num(c));
    }
    let _ = writeln!(s, "QUAD {}", ir.quads.len());
    for q in &ir.quads {
        let _ = writeln!(
            s,
            "{} {} {} {}",
            q.name,
            name(q.epigraph),
            name(q.argument),
            num(q.scale)
        );
    }
    s.push_str("END\n");
    s
}

pub fn write_interchange(ir: &ModelIr, path: &Path) -> Result<()> {
    fs::write(path, to_string(ir))?;
    Ok(())
}

struct Lines<'a> {
    path: &'a Path,
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, msg: impl Into<String>) -> SolverError {
        SolverError::Parse {
            path: self.path.to_path_buf(),
            line: self.line,
            msg: msg.into(),
        }
    }

    fn next(&mut self) -> Result<Vec<&'a str>> {
        match self.iter.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l.split_whitespace().collect())
            }
            None => Err(self.err("unexpected end of file")),
        }
    }

    fn header(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let f = self.next()?;
        if f.first() != Some(&key) {
            return Err(self.err(format!("expected section {key}")));
        }
        Ok(f)
    }

    fn float(&self, s: &str) -> Result<f64> {
        match s {
            "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            _ => s.parse().map_err(|_| self.err(format!("bad number {s:?}"))),
        }
    }

    fn count(&self, s: Option<&&str>) -> Result<usize> {
        s.and_then(|v| v.parse().ok())
            .ok_or_else(|| self.err("bad count"))
    }
}

pub fn from_str(text: &str, path: &Path) -> Result<ModelIr> {
    let mut lines = Lines {
        path,
        iter: text.lines().enumerate(),
        line: 0,
    };
    if lines.next()?.join(" ") != MAGIC {
        return Err(lines.err("missing model header"));
    }
    let mut ir = ModelIr::new();
    let mut ids: HashMap<String, VarId> = HashMap::new();

    let h = lines.header("VARS")?;
    for _ in 0..lines.count(h.get(1))? {
        let f = lines.next()?;
        if f.len() != 3 {
            return Err(lines.err("variable line needs name, lower, upper"));
        }
        let id = ir.add_var(f[0], lines.float(f[1])?, lines.float(f[2])?);
        if ids.insert(f[0].to_string(), id).is_some() {
            return Err(lines.err(format!("duplicate variable {}", f[0])));
        }
    }
    let lookup = |lines: &Lines, s: &str| {
        ids.get(s)
            .copied()
            .ok_or_else(|| lines.err(format!("unknown variable {s}")))
    };
    let terms = |lines: &Lines, f: &[&str], k: usize| -> Result<Vec<(VarId, f64)>> {
        if f.len() != 2 * k {
            return Err(lines.err("term count mismatch"));
        }
        f.chunks(2)
            .map(|c| Ok((lookup(lines, c[0])?, lines.float(c[1])?)))
            .collect()
    };

    let h = lines.header("ROWS")?;
    for _ in 0..lines.count(h.get(1))? {
        let f = lines.next()?;
        if f.len() < 5 {
            return Err(lines.err("row line too short"));
        }
        let sense = Sense::from_symbol(f[2]).ok_or_else(|| lines.err("bad row sense"))?;
        let rhs = lines.float(f[3])?;
        let k = lines.count(f.get(4))?;
        let t = terms(&lines, &f[5..], k)?;
        ir.rows.push(crate::model::Row {
            name: f[0].to_string(),
            tag: f[1].to_string(),
            terms: t,
            sense,
            rhs,
        });
    }

    let h = lines.header("CONES")?;
    for _ in 0..lines.count(h.get(1))? {
        let f = lines.next()?;
        if f.len() < 3 {
            return Err(lines.err("cone line too short"));
        }
        let bound = lines.float(f[1])?;
        let k = lines.count(f.get(2))?;
        let t = terms(&lines, &f[3..], k)?;
        ir.add_cone(f[0], t, bound);
    }

    let h = lines.header("SOS1")?;
    for _ in 0..lines.count(h.get(1))? {
        let f = lines.next()?;
        let k = lines.count(f.get(1))?;
        if f.len() != 2 + k {
            return Err(lines.err("member count mismatch"));
        }
        let members = f[2..]
            .iter()
            .map(|s| lookup(&lines, s))
            .collect::<Result<Vec<_>>>()?;
        ir.add_sos1(f[0], members);
    }

    let h = lines.header("OBJ")?;
    let k = lines.count(h.get(1))?;
    ir.objective_constant = lines.float(h.get(2).ok_or_else(|| lines.err("missing constant"))?)?;
    for _ in 0..k {
        let f = lines.next()?;
        if f.len() != 2 {
            return Err(lines.err("objective line needs name and coefficient"));
        }
        let v = lookup(&lines, f[0])?;
        let c = lines.float(f[1])?;
        ir.objective.push((v, c));
    }

    let h = lines.header("QUAD")?;
    for _ in 0..lines.count(h.get(1))? {
        let f = lines.next()?;
        if f.len() != 4 {
            return Err(lines.err("quad line needs name, epigraph, argument, scale"));
        }
        let e = lookup(&lines, f[1])?;
        let a = lookup(&lines, f[2])?;
        let s = lines.float(f[3])?;
        ir.add_quad(f[0], e, a, s);
    }
    lines.header("END")?;
    Ok(ir)
}

pub fn read_interchange(path: &Path) -> Result<ModelIr> {
    from_str(&fs::read_to_string(path)?, path)
}

pub fn write_solution(ir: &ModelIr, result: &SolveResult, path: &Path) -> Result<()> {
    let mut s = format!("STATUS {}\n", result.status.as_str());
    if result.status.has_solution() {
        let _ = writeln!(s, "OBJECTIVE {}", num(result.objective));
        let _ = writeln!(s, "BOUND {}", num(result.bound));
        for (v, x) in ir.vars.iter().zip(&result.values) {
            let _ = writeln!(s, "{} {}", v.name, num(*x));
        }
    }
    fs::write(path, s)?;
    Ok(())
}

/// Reads an external solution for `ir`. Every variable must be present when
/// the status carries a solution.
pub fn read_solution(ir: &ModelIr, path: &Path) -> Result<SolveResult> {
    let text = fs::read_to_string(path)?;
    let mut lines = Lines {
        path,
        iter: text.lines().enumerate(),
        line: 0,
    };
    let h = lines.header("STATUS")?;
    let status = h
        .get(1)
        .and_then(|s| SolveStatus::parse(s))
        .ok_or_else(|| lines.err("unknown status"))?;
    let index: HashMap<&str, usize> = ir
        .vars
        .iter()
        .enumerate()
        .map(|(i, v)| (v.name.as_str(), i))
        .collect();
    let mut values = vec![f64::NAN; ir.vars.len()];
    let mut objective = None;
    let mut bound = None;
    for (i, l) in text.lines().enumerate().skip(1) {
        lines.line = i + 1;
        let f: Vec<&str> = l.split_whitespace().collect();
        match f.as_slice() {
            [] => continue,
            ["OBJECTIVE", v] => objective = Some(lines.float(v)?),
            ["BOUND", v] => bound = Some(lines.float(v)?),
            [name, v] => {
                let j = *index.get(name).ok_or_else(|| SolverError::UnknownName {
                    path: path.to_path_buf(),
                    name: name.to_string(),
                })?;
                values[j] = lines.float(v)?;
            }
            _ => return Err(lines.err("expected `name value`")),
        }
    }
    if !status.has_solution() {
        let mut r = SolveResult {
            status,
            values: vec![0.0; ir.vars.len()],
            objective: f64::INFINITY,
            bound: bound.unwrap_or(f64::NEG_INFINITY),
            gap: f64::INFINITY,
            nodes: 0,
            wall_time: Duration::ZERO,
            node_bounds: Vec::new(),
        };
        if status == SolveStatus::Infeasible {
            r.bound = f64::INFINITY;
        }
        return Ok(r);
    }
    if let Some(j) = values.iter().position(|v| v.is_nan()) {
        return Err(SolverError::MissingVariable {
            path: path.to_path_buf(),
            name: ir.vars[j].name.clone(),
        });
    }
    let objective = objective.unwrap_or_else(|| ir.objective_value(&values));
    let bound = bound.unwrap_or(objective);
    Ok(SolveResult {
        status,
        gap: relative_gap(objective, bound),
        objective,
        bound,
        values,
        nodes: 0,
        wall_time: Duration::ZERO,
        node_bounds: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_model_is_header_only() {
        let ir = ModelIr::new();
        let s = to_string(&ir);
        assert_eq!(
            s,
            "ECPRICE-MODEL 1\nVARS 0\nROWS 0\nCONES 0\nSOS1 0\nOBJ 0 0.0\nQUAD 0\nEND\n"
        );
        assert_eq!(from_str(&s, Path::new("x")).unwrap(), ir);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let s = "ECPRICE-MODEL 1\nVARS 1\nx 0 zz\n";
        match from_str(s, Path::new("m.txt")) {
            Err(SolverError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
