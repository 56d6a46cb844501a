//! Native backend: LP relaxations of a [`ModelIr`] and best-first
//! branch-and-bound over its SOS1 sets.
//!
//! Cone rows are enforced through facets of an inscribed polygon that are
//! generated lazily: a relaxation is re-solved with every facet its solution
//! violates until none is violated. Facets found at one node are kept in a
//! shared pool for all later nodes. Quadratic epigraph links become secant
//! rows on the argument's bounded domain.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use log::debug;

use crate::error::{Result, SolverError};
use crate::model::{ModelIr, Sense, VarId};
use crate::polyhedral::{inscribed_polygon, secants, HalfPlane};
use crate::simplex::{self, LpProblem, LpRow, LpStatus, SimplexOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    FeasibleGap,
    Infeasible,
    Limit,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::FeasibleGap => "feasible-bound-gap",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Limit => "limit",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "optimal" => Some(SolveStatus::Optimal),
            "feasible-bound-gap" => Some(SolveStatus::FeasibleGap),
            "infeasible" => Some(SolveStatus::Infeasible),
            "limit" => Some(SolveStatus::Limit),
            _ => None,
        }
    }

    pub fn has_solution(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::FeasibleGap)
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub values: Vec<f64>,
    pub objective: f64,
    /// Best proven lower bound.
    pub bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub wall_time: Duration,
    /// Relaxation bound of every node evaluated, when tracing is enabled.
    pub node_bounds: Vec<f64>,
}

impl SolveResult {
    pub fn value(&self, v: VarId) -> f64 {
        self.values[v.0]
    }

    fn empty(status: SolveStatus, n: usize, started: Instant, nodes: usize) -> Self {
        Self {
            status,
            values: vec![0.0; n],
            objective: f64::INFINITY,
            bound: if status == SolveStatus::Infeasible {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            },
            gap: f64::INFINITY,
            nodes,
            wall_time: started.elapsed(),
            node_bounds: Vec::new(),
        }
    }
}

pub fn relative_gap(objective: f64, bound: f64) -> f64 {
    ((objective - bound) / objective.abs().max(1.0)).max(0.0)
}

/// Problem-specific primal heuristic: maps a relaxation point to sets of
/// variables to fix at zero. Each set is tried as a restricted relaxation
/// and, when that leaves sets violated, as the start of a dive.
#[derive(Clone)]
pub struct Heuristic(pub Arc<dyn Fn(&[f64]) -> Vec<Vec<VarId>> + Send + Sync>);

impl Heuristic {
    pub fn new(f: impl Fn(&[f64]) -> Vec<Vec<VarId>> + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }
}

impl fmt::Debug for Heuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Heuristic")
    }
}

#[derive(Clone, Debug)]
pub struct BnbOptions {
    pub node_limit: usize,
    pub time_limit: Duration,
    pub rel_gap: f64,
    pub abs_gap: f64,
    pub polygon_segments: usize,
    /// A set counts as satisfied when its second-largest member is below this.
    pub sos_tol: f64,
    pub simplex: SimplexOptions,
    pub parallel: bool,
    /// Run the diving heuristic every this many nodes (0 disables it).
    pub dive_every: usize,
    pub trace_bounds: bool,
    /// Called at the root and whenever a dive runs.
    pub heuristic: Option<Heuristic>,
    /// Times the heuristic is re-applied to its own restricted solution.
    pub heuristic_rounds: usize,
}

impl Default for BnbOptions {
    fn default() -> Self {
        Self {
            node_limit: 100_000,
            time_limit: Duration::from_secs(600),
            rel_gap: 1e-9,
            abs_gap: 1e-9,
            polygon_segments: 32,
            sos_tol: 1e-9,
            simplex: SimplexOptions::default(),
            parallel: true,
            dive_every: 25,
            trace_bounds: false,
            heuristic: None,
            heuristic_rounds: 3,
        }
    }
}

struct LazyCone {
    vars: [(usize, f64); 2],
    facets: Vec<HalfPlane>,
}

/// A model compiled for the native backend.
struct Relaxation<'a> {
    ir: &'a ModelIr,
    base: LpProblem,
    cones: Vec<LazyCone>,
    pool: Mutex<(Vec<LpRow>, HashSet<(usize, usize)>)>,
    opts: &'a BnbOptions,
}

struct NodeLp {
    status: LpStatus,
    x: Vec<f64>,
    objective: f64,
}

impl<'a> Relaxation<'a> {
    fn compile(ir: &'a ModelIr, opts: &'a BnbOptions) -> Result<Self> {
        ir.validate()?;
        let mut base = LpProblem::from_model(ir);
        for q in &ir.quads {
            let arg = ir.var(q.argument);
            if !arg.lower.is_finite() || !arg.upper.is_finite() {
                return Err(SolverError::UnboundedDomain {
                    what: format!("quadratic link {}", q.name),
                    var: arg.name.clone(),
                });
            }
            for s in secants(q.scale, arg.lower, arg.upper) {
                base.add_row(
                    vec![(q.epigraph.0, 1.0), (q.argument.0, -s.slope)],
                    Sense::Ge,
                    s.intercept,
                );
            }
        }
        let mut cones = Vec::new();
        for c in &ir.cones {
            // Shrink slightly so rounding in the LP cannot leave the disk.
            let radius = c.bound.max(0.0).sqrt() * (1.0 - 1e-9);
            match c.terms.as_slice() {
                [] => {}
                [(v, a)] => {
                    let lim = radius / a.abs();
                    base.add_row(vec![(v.0, 1.0)], Sense::Le, lim);
                    base.add_row(vec![(v.0, 1.0)], Sense::Ge, -lim);
                }
                [(v1, a1), (v2, a2)] => cones.push(LazyCone {
                    vars: [(v1.0, *a1), (v2.0, *a2)],
                    facets: inscribed_polygon(radius, opts.polygon_segments)?,
                }),
                _ => {
                    return Err(SolverError::UnboundedDomain {
                        what: format!("cone {} with more than two terms", c.name),
                        var: "-".into(),
                    })
                }
            }
        }
        Ok(Self {
            ir,
            base,
            cones,
            pool: Mutex::new((Vec::new(), HashSet::new())),
            opts,
        })
    }

    fn solve(&self, fixed_zero: &[VarId]) -> NodeLp {
        let mut lp = self.base.clone();
        for &v in fixed_zero {
            lp.upper[v.0] = lp.upper[v.0].min(0.0);
        }
        let mut present: HashSet<(usize, usize)> = {
            let pool = self.pool.lock().unwrap();
            lp.rows.extend(pool.0.iter().cloned());
            pool.1.clone()
        };
        let tol = self.opts.simplex.feasibility_tol;
        loop {
            let sol = simplex::solve(&lp, &self.opts.simplex);
            if sol.status != LpStatus::Optimal {
                return NodeLp {
                    status: sol.status,
                    x: sol.x,
                    objective: f64::INFINITY,
                };
            }
            let mut added = Vec::new();
            for (ci, cone) in self.cones.iter().enumerate() {
                let u = cone.vars[0].1 * sol.x[cone.vars[0].0];
                let v = cone.vars[1].1 * sol.x[cone.vars[1].0];
                let worst = cone
                    .facets
                    .iter()
                    .enumerate()
                    .map(|(k, f)| (k, f.excess(u, v)))
                    .max_by(|a, b| a.1.total_cmp(&b.1));
                if let Some((k, excess)) = worst {
                    if excess > tol && present.insert((ci, k)) {
                        added.push((ci, k));
                    }
                }
            }
            if added.is_empty() {
                return NodeLp {
                    status: LpStatus::Optimal,
                    objective: sol.objective + self.ir.objective_constant,
                    x: sol.x,
                };
            }
            let mut pool = self.pool.lock().unwrap();
            for (ci, k) in added {
                let cone = &self.cones[ci];
                let f = cone.facets[k];
                let row = LpRow {
                    terms: vec![
                        (cone.vars[0].0, f.nx * cone.vars[0].1),
                        (cone.vars[1].0, f.ny * cone.vars[1].1),
                    ],
                    sense: Sense::Le,
                    rhs: f.rhs,
                };
                if pool.1.insert((ci, k)) {
                    pool.0.push(row.clone());
                }
                lp.rows.push(row);
            }
        }
    }

    /// Most violated set: largest second-largest member value.
    fn most_violated(&self, x: &[f64]) -> Option<usize> {
        let mut best = None;
        let mut best_v = self.opts.sos_tol;
        for (k, set) in self.ir.sos1.iter().enumerate() {
            let v = second_largest(set.members.iter().map(|m| x[m.0]));
            if v > best_v {
                best_v = v;
                best = Some(k);
            }
        }
        best
    }

    /// Fixings that zero every member except the largest in each set.
    fn rounding_fixings(&self, x: &[f64], only_violated: bool) -> Vec<VarId> {
        let mut out = Vec::new();
        for set in &self.ir.sos1 {
            let vals: Vec<f64> = set.members.iter().map(|m| x[m.0]).collect();
            if only_violated && second_largest(vals.iter().copied()) <= self.opts.sos_tol {
                continue;
            }
            let keep = vals
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap_or(0);
            out.extend(
                set.members
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != keep)
                    .map(|(_, m)| *m),
            );
        }
        out
    }
}

fn second_largest(vals: impl Iterator<Item = f64>) -> f64 {
    let mut top = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for v in vals {
        if v > top {
            second = top;
            top = v;
        } else if v > second {
            second = v;
        }
    }
    second.max(0.0)
}

fn merged(fixings: &[VarId], extra: &[VarId]) -> Vec<VarId> {
    let mut out: Vec<VarId> = fixings.iter().chain(extra).copied().collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// LP relaxation with all SOS1 conditions dropped except `fixings`, which
/// force the listed variables to zero.
pub fn solve_lp_relaxation(ir: &ModelIr, fixings: &[VarId], opts: &BnbOptions) -> Result<SolveResult> {
    let started = Instant::now();
    let relax = Relaxation::compile(ir, opts)?;
    let node = relax.solve(fixings);
    Ok(match node.status {
        LpStatus::Optimal => SolveResult {
            status: SolveStatus::Optimal,
            objective: node.objective,
            bound: node.objective,
            gap: 0.0,
            values: node.x,
            nodes: 1,
            wall_time: started.elapsed(),
            node_bounds: vec![node.objective],
        },
        LpStatus::Infeasible => SolveResult::empty(SolveStatus::Infeasible, ir.num_vars(), started, 1),
        LpStatus::Unbounded | LpStatus::IterationLimit => {
            SolveResult::empty(SolveStatus::Limit, ir.num_vars(), started, 1)
        }
    })
}

struct OpenNode {
    bound: f64,
    depth: usize,
    fixings: Vec<VarId>,
    x: Vec<f64>,
}

impl PartialEq for OpenNode {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for OpenNode {}
impl PartialOrd for OpenNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for OpenNode {
    // BinaryHeap is a max-heap: smaller bound first, then deeper first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
    }
}

struct Incumbent {
    objective: f64,
    values: Vec<f64>,
}

struct Search<'a> {
    relax: Relaxation<'a>,
    incumbent: Option<Incumbent>,
    nodes: usize,
    node_bounds: Vec<f64>,
}

impl<'a> Search<'a> {
    fn cutoff(&self) -> f64 {
        match &self.incumbent {
            Some(inc) => {
                let o = self.relax.opts;
                inc.objective - o.abs_gap.max(o.rel_gap * inc.objective.abs().max(1.0))
            }
            None => f64::INFINITY,
        }
    }

    fn record(&mut self, bound: f64) {
        self.nodes += 1;
        if self.relax.opts.trace_bounds {
            self.node_bounds.push(bound);
        }
    }

    /// Accepts an SOS1-feasible relaxation point, first trying to zero the
    /// small members exactly.
    fn offer(&mut self, fixings: &[VarId], x: Vec<f64>, objective: f64) {
        let extra = self.relax.rounding_fixings(&x, false);
        let polished = self.relax.solve(&merged(fixings, &extra));
        let (x, objective) = if polished.status == LpStatus::Optimal
            && polished.objective <= objective + 1e-7 * objective.abs().max(1.0)
        {
            (polished.x, polished.objective)
        } else {
            (x, objective)
        };
        let better = self
            .incumbent
            .as_ref()
            .is_none_or(|inc| objective < inc.objective);
        if better {
            debug!("incumbent {objective:.9} after {} nodes", self.nodes);
            self.incumbent = Some(Incumbent {
                objective,
                values: x,
            });
        }
    }

    /// Tries the fixings proposed by the user heuristic at `x`, feeding each
    /// restricted solution back to it for a few rounds.
    fn run_heuristic(&mut self, fixings: &[VarId], x: &[f64]) {
        let Some(h) = self.relax.opts.heuristic.clone() else {
            return;
        };
        let mut x = x.to_vec();
        for _ in 0..self.relax.opts.heuristic_rounds.max(1) {
            let mut next: Option<(f64, Vec<f64>)> = None;
            for extra in (h.0)(&x) {
                let fix = merged(fixings, &extra);
                let node = self.relax.solve(&fix);
                self.record(node.objective);
                if node.status != LpStatus::Optimal || node.objective >= self.cutoff() {
                    continue;
                }
                if self.relax.most_violated(&node.x).is_none() {
                    self.offer(&fix, node.x.clone(), node.objective);
                } else {
                    self.dive(&fix, &node.x);
                }
                if next.as_ref().is_none_or(|(o, _)| node.objective < *o) {
                    next = Some((node.objective, node.x));
                }
            }
            match next {
                Some((_, nx)) => x = nx,
                None => return,
            }
        }
    }

    /// Repeatedly zeroes the smaller members of violated sets.
    fn dive(&mut self, fixings: &[VarId], x: &[f64]) {
        let mut fix = fixings.to_vec();
        let mut x = x.to_vec();
        for _ in 0..50 {
            let extra = self.relax.rounding_fixings(&x, true);
            if extra.is_empty() {
                break;
            }
            fix = merged(&fix, &extra);
            let node = self.relax.solve(&fix);
            self.record(node.objective);
            if node.status != LpStatus::Optimal || node.objective >= self.cutoff() {
                return;
            }
            if self.relax.most_violated(&node.x).is_none() {
                self.offer(&fix, node.x, node.objective);
                return;
            }
            x = node.x;
        }
    }
}

/// Best-first branch-and-bound over the SOS1 sets of `ir`.
pub fn branch_and_bound_sos1(ir: &ModelIr, opts: &BnbOptions) -> Result<SolveResult> {
    let started = Instant::now();
    let relax = Relaxation::compile(ir, opts)?;
    let n = ir.num_vars();
    let mut search = Search {
        relax,
        incumbent: None,
        nodes: 0,
        node_bounds: Vec::new(),
    };

    let root = search.relax.solve(&[]);
    search.record(root.objective);
    match root.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Ok(SolveResult::empty(SolveStatus::Infeasible, n, started, 1))
        }
        _ => return Ok(SolveResult::empty(SolveStatus::Limit, n, started, 1)),
    }
    if search.relax.most_violated(&root.x).is_none() {
        search.offer(&[], root.x.clone(), root.objective);
        let inc = search.incumbent.take().expect("root accepted");
        return Ok(SolveResult {
            status: SolveStatus::Optimal,
            objective: inc.objective,
            bound: root.objective.min(inc.objective),
            gap: 0.0,
            values: inc.values,
            nodes: search.nodes,
            wall_time: started.elapsed(),
            node_bounds: search.node_bounds,
        });
    }
    search.run_heuristic(&[], &root.x);
    if opts.dive_every > 0 {
        search.dive(&[], &root.x);
    }

    let mut heap = BinaryHeap::new();
    heap.push(OpenNode {
        bound: root.objective,
        depth: 0,
        fixings: Vec::new(),
        x: root.x,
    });
    let mut limited = false;
    let mut processed = 0usize;
    while let Some(node) = heap.pop() {
        if node.bound >= search.cutoff() {
            continue;
        }
        if search.nodes >= opts.node_limit || started.elapsed() >= opts.time_limit {
            heap.push(node);
            limited = true;
            break;
        }
        let Some(k) = search.relax.most_violated(&node.x) else {
            continue;
        };
        let members = &ir.sos1[k].members;
        let half = members.len().div_ceil(2).max(1);
        let left = merged(&node.fixings, &members[..half]);
        let right = merged(&node.fixings, &members[half..]);
        let (a, b) = if opts.parallel {
            let r = &search.relax;
            rayon::join(|| r.solve(&left), || r.solve(&right))
        } else {
            (search.relax.solve(&left), search.relax.solve(&right))
        };
        processed += 1;
        let mut best_child: Option<(Vec<VarId>, Vec<f64>)> = None;
        for (fix, child) in [(left, a), (right, b)] {
            search.record(child.objective);
            if child.status != LpStatus::Optimal {
                continue;
            }
            let bound = child.objective.max(node.bound);
            if bound >= search.cutoff() {
                continue;
            }
            if search.relax.most_violated(&child.x).is_none() {
                search.offer(&fix, child.x, child.objective);
                continue;
            }
            if best_child.is_none() {
                best_child = Some((fix.clone(), child.x.clone()));
            }
            heap.push(OpenNode {
                bound,
                depth: node.depth + 1,
                fixings: fix,
                x: child.x,
            });
        }
        if opts.dive_every > 0 && processed % opts.dive_every == 0 {
            if let Some((fix, x)) = best_child {
                search.run_heuristic(&fix, &x);
                search.dive(&fix, &x);
            }
        }
    }

    let open_bound = heap
        .iter()
        .map(|n| n.bound)
        .fold(f64::INFINITY, f64::min);
    let wall_time = started.elapsed();
    Ok(match search.incumbent {
        Some(inc) => {
            let bound = open_bound.min(inc.objective);
            let gap = relative_gap(inc.objective, bound);
            SolveResult {
                status: if limited {
                    SolveStatus::FeasibleGap
                } else {
                    SolveStatus::Optimal
                },
                objective: inc.objective,
                bound,
                gap,
                values: inc.values,
                nodes: search.nodes,
                wall_time,
                node_bounds: search.node_bounds,
            }
        }
        None => {
            let mut r = SolveResult::empty(
                if limited {
                    SolveStatus::Limit
                } else {
                    SolveStatus::Infeasible
                },
                n,
                started,
                search.nodes,
            );
            if limited {
                r.bound = open_bound;
            }
            r.node_bounds = search.node_bounds;
            r
        }
    })
}
