//! Bounded-variable primal simplex on a dense tableau.
//!
//! Every row gets a logical column (`a x + r = b`) whose bounds encode the
//! row sense, so the initial basis is the identity. Phase 1 minimizes the sum
//! of bound infeasibilities of the basic variables, phase 2 the true cost.
//! Pricing is Dantzig's rule with a switch to Bland's rule after a run of
//! degenerate pivots; the ratio test is Harris' two-pass variant.

use crate::model::{ModelIr, Sense};

#[derive(Clone, Debug, PartialEq)]
pub struct LpRow {
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `min cost . x` subject to `rows` and `lower <= x <= upper`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LpProblem {
    pub cost: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<LpRow>,
}

impl LpProblem {
    pub fn with_vars(n: usize) -> Self {
        Self {
            cost: vec![0.0; n],
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
            rows: Vec::new(),
        }
    }

    /// Linear part of `ir`: bounds, rows and objective. Cones and
    /// quadratic links are ignored.
    pub fn from_model(ir: &ModelIr) -> Self {
        let mut lp = Self::with_vars(ir.num_vars());
        for (j, v) in ir.vars.iter().enumerate() {
            lp.lower[j] = v.lower;
            lp.upper[j] = v.upper;
        }
        for &(v, c) in &ir.objective {
            lp.cost[v.index()] += c;
        }
        for r in &ir.rows {
            lp.add_row(r.terms.iter().map(|&(v, a)| (v.index(), a)).collect(), r.sense, r.rhs);
        }
        lp
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.cost.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.cost.len() - 1
    }

    pub fn add_row(&mut self, terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        self.rows.push(LpRow { terms, sense, rhs });
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// `d objective / d rhs_i` at the optimum.
    pub row_duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct SimplexOptions {
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    pub pivot_tol: f64,
    pub max_iterations: Option<usize>,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-9,
            optimality_tol: 1e-9,
            pivot_tol: 1e-9,
            max_iterations: None,
            bland_after: 60,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Pos {
    Basic(usize),
    Lower,
    Upper,
    Zero,
}

enum Step {
    Unbounded,
    Flip(f64),
    Pivot { row: usize, theta: f64, to_upper: bool },
}

const DROP_TOL: f64 = 1e-13;
const RECOMPUTE_EVERY: usize = 40;

struct Tableau<'a> {
    m: usize,
    n: usize,
    ncol: usize,
    a: Vec<f64>,
    beta: Vec<f64>,
    basis: Vec<usize>,
    pos: Vec<Pos>,
    x: Vec<f64>,
    lo: Vec<f64>,
    up: Vec<f64>,
    cost: Vec<f64>,
    d: Vec<f64>,
    opts: &'a SimplexOptions,
    scratch: Vec<usize>,
}

impl<'a> Tableau<'a> {
    fn new(lp: &LpProblem, opts: &'a SimplexOptions) -> Self {
        let n = lp.num_vars();
        let m = lp.rows.len();
        let ncol = n + m;
        let mut a = vec![0.0; m * ncol];
        let mut beta = vec![0.0; m];
        let mut lo = lp.lower.clone();
        let mut up = lp.upper.clone();
        for (i, row) in lp.rows.iter().enumerate() {
            for &(j, v) in &row.terms {
                a[i * ncol + j] += v;
            }
            a[i * ncol + n + i] = 1.0;
            beta[i] = row.rhs;
            let (l, u) = match row.sense {
                Sense::Le => (0.0, f64::INFINITY),
                Sense::Ge => (f64::NEG_INFINITY, 0.0),
                Sense::Eq => (0.0, 0.0),
            };
            lo.push(l);
            up.push(u);
        }
        let mut cost = lp.cost.clone();
        cost.resize(ncol, 0.0);
        let mut pos = Vec::with_capacity(ncol);
        let mut x = vec![0.0; ncol];
        for j in 0..n {
            let (p, v) = if lo[j].is_finite() {
                (Pos::Lower, lo[j])
            } else if up[j].is_finite() {
                (Pos::Upper, up[j])
            } else {
                (Pos::Zero, 0.0)
            };
            pos.push(p);
            x[j] = v;
        }
        let mut basis = Vec::with_capacity(m);
        for i in 0..m {
            pos.push(Pos::Basic(i));
            basis.push(n + i);
        }
        let mut t = Self {
            m,
            n,
            ncol,
            a,
            beta,
            basis,
            pos,
            x,
            lo,
            up,
            cost,
            d: vec![0.0; ncol],
            opts,
            scratch: Vec::new(),
        };
        t.recompute_basics();
        t
    }

    fn recompute_basics(&mut self) {
        let ncol = self.ncol;
        let nonzero: Vec<(usize, f64)> = (0..ncol)
            .filter(|&j| !matches!(self.pos[j], Pos::Basic(_)) && self.x[j] != 0.0)
            .map(|j| (j, self.x[j]))
            .collect();
        for i in 0..self.m {
            let row = &self.a[i * ncol..(i + 1) * ncol];
            let mut v = self.beta[i];
            for &(j, xj) in &nonzero {
                v -= row[j] * xj;
            }
            self.x[self.basis[i]] = v;
        }
    }

    /// Basic rows whose value is outside its bounds, with the phase 1 cost sign.
    fn infeasibilities(&self) -> Vec<(usize, f64)> {
        let tol = self.opts.feasibility_tol;
        let mut out = Vec::new();
        for i in 0..self.m {
            let b = self.basis[i];
            let v = self.x[b];
            if v < self.lo[b] - tol {
                out.push((i, -1.0));
            } else if v > self.up[b] + tol {
                out.push((i, 1.0));
            }
        }
        out
    }

    fn price_phase1(&mut self, infeasible: &[(usize, f64)]) {
        let ncol = self.ncol;
        self.d.iter_mut().for_each(|v| *v = 0.0);
        for &(i, c) in infeasible {
            let row = &self.a[i * ncol..(i + 1) * ncol];
            for (dj, &aij) in self.d.iter_mut().zip(row) {
                if aij != 0.0 {
                    *dj -= c * aij;
                }
            }
        }
        for i in 0..self.m {
            self.d[self.basis[i]] = 0.0;
        }
    }

    fn price_phase2(&mut self) {
        let ncol = self.ncol;
        self.d.copy_from_slice(&self.cost);
        for i in 0..self.m {
            let c = self.cost[self.basis[i]];
            if c == 0.0 {
                continue;
            }
            let row = &self.a[i * ncol..(i + 1) * ncol];
            for (dj, &aij) in self.d.iter_mut().zip(row) {
                if aij != 0.0 {
                    *dj -= c * aij;
                }
            }
        }
        for i in 0..self.m {
            self.d[self.basis[i]] = 0.0;
        }
    }

    /// Entering column and direction (+1 increase, -1 decrease).
    fn choose_entering(&self, bland: bool) -> Option<(usize, f64)> {
        let tol = self.opts.optimality_tol;
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..self.ncol {
            let dj = self.d[j];
            let dir = match self.pos[j] {
                Pos::Basic(_) => continue,
                Pos::Lower if dj < -tol && self.up[j] > self.lo[j] => 1.0,
                Pos::Upper if dj > tol && self.up[j] > self.lo[j] => -1.0,
                Pos::Zero if dj.abs() > tol => -dj.signum(),
                _ => continue,
            };
            if bland {
                return Some((j, dir));
            }
            if dj.abs() > best_score {
                best_score = dj.abs();
                best = Some((j, dir));
            }
        }
        best
    }

    fn ratio_test(&self, q: usize, dir: f64, phase1: bool, bland: bool) -> Step {
        let ftol = self.opts.feasibility_tol;
        let ptol = self.opts.pivot_tol;
        let ncol = self.ncol;
        // (row, exact ratio, relaxed ratio, |alpha|, leaves at upper)
        let mut cands: Vec<(usize, f64, f64, f64, bool)> = Vec::new();
        let mut theta_max = f64::INFINITY;
        for i in 0..self.m {
            let alpha = self.a[i * ncol + q];
            if alpha.abs() < ptol {
                continue;
            }
            let rate = -dir * alpha;
            let b = self.basis[i];
            let v = self.x[b];
            let (lo, up) = (self.lo[b], self.up[b]);
            let (target, to_upper) = if rate < 0.0 {
                if phase1 && v > up + ftol {
                    (up, true)
                } else if v < lo - ftol {
                    continue;
                } else {
                    (lo, false)
                }
            } else if phase1 && v < lo - ftol {
                (lo, false)
            } else if v > up + ftol {
                continue;
            } else {
                (up, true)
            };
            if !target.is_finite() {
                continue;
            }
            let dist = (v - target).abs();
            let ratio = dist / rate.abs();
            let relaxed = (dist + ftol) / rate.abs();
            theta_max = theta_max.min(relaxed);
            cands.push((i, ratio, relaxed, alpha.abs(), to_upper));
        }
        let range = self.up[q] - self.lo[q];
        if cands.is_empty() {
            return if range.is_finite() {
                Step::Flip(range)
            } else {
                Step::Unbounded
            };
        }
        if range.is_finite() && range <= theta_max {
            let min_ratio = cands.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
            if range <= min_ratio {
                return Step::Flip(range);
            }
        }
        let chosen = if bland {
            let min_ratio = cands.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
            cands
                .iter()
                .filter(|c| c.1 <= min_ratio + 1e-12)
                .min_by_key(|c| self.basis[c.0])
                .copied()
        } else {
            cands
                .iter()
                .filter(|c| c.1 <= theta_max)
                .max_by(|x, y| x.3.total_cmp(&y.3))
                .copied()
        };
        let (row, ratio, _, _, to_upper) = chosen.expect("nonempty candidate set");
        Step::Pivot {
            row,
            theta: ratio.max(0.0),
            to_upper,
        }
    }

    fn apply_step(&mut self, q: usize, dir: f64, theta: f64) {
        if theta != 0.0 {
            let ncol = self.ncol;
            self.x[q] += dir * theta;
            for i in 0..self.m {
                let alpha = self.a[i * ncol + q];
                if alpha != 0.0 {
                    self.x[self.basis[i]] -= dir * alpha * theta;
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize, update_d: bool) {
        let ncol = self.ncol;
        let piv = self.a[r * ncol + q];
        {
            let row = &mut self.a[r * ncol..(r + 1) * ncol];
            let inv = 1.0 / piv;
            self.scratch.clear();
            for (j, v) in row.iter_mut().enumerate() {
                if *v != 0.0 {
                    *v *= inv;
                    if v.abs() < DROP_TOL {
                        *v = 0.0;
                    } else {
                        self.scratch.push(j);
                    }
                }
            }
            row[q] = 1.0;
            self.beta[r] *= inv;
        }
        let (before, rest) = self.a.split_at_mut(r * ncol);
        let (prow, after) = rest.split_at_mut(ncol);
        let beta_r = self.beta[r];
        let nz = &self.scratch;
        let eliminate = |row: &mut [f64], beta: &mut f64| {
            let f = row[q];
            if f == 0.0 {
                return;
            }
            for &j in nz {
                let v = row[j] - f * prow[j];
                row[j] = if v.abs() < DROP_TOL { 0.0 } else { v };
            }
            row[q] = 0.0;
            *beta -= f * beta_r;
        };
        for (i, row) in before.chunks_mut(ncol).enumerate() {
            eliminate(row, &mut self.beta[i]);
        }
        for (k, row) in after.chunks_mut(ncol).enumerate() {
            eliminate(row, &mut self.beta[r + 1 + k]);
        }
        if update_d {
            let f = self.d[q];
            if f != 0.0 {
                for &j in nz {
                    self.d[j] -= f * prow[j];
                }
            }
            self.d[q] = 0.0;
        }
        self.basis[r] = q;
        self.pos[q] = Pos::Basic(r);
    }

    fn objective(&self) -> f64 {
        (0..self.n).map(|j| self.cost[j] * self.x[j]).sum()
    }
}

/// Solves `lp` from a slack basis.
pub fn solve(lp: &LpProblem, opts: &SimplexOptions) -> LpSolution {
    let n = lp.num_vars();
    for j in 0..n {
        if lp.lower[j] > lp.upper[j] + opts.feasibility_tol {
            return LpSolution {
                status: LpStatus::Infeasible,
                x: vec![0.0; n],
                objective: f64::NAN,
                row_duals: vec![0.0; lp.rows.len()],
                reduced_costs: vec![0.0; n],
                iterations: 0,
            };
        }
    }
    let mut t = Tableau::new(lp, opts);
    let max_iter = opts
        .max_iterations
        .unwrap_or(50 * (t.m + t.ncol) + 1000);
    let mut iterations = 0;
    let mut degenerate = 0usize;
    let mut bland = false;
    let mut phase2_priced = false;
    let mut passes = 0usize;
    let status = loop {
        passes += 1;
        if iterations >= max_iter || passes > 2 * max_iter {
            break LpStatus::IterationLimit;
        }
        if iterations > 0 && iterations % RECOMPUTE_EVERY == 0 {
            t.recompute_basics();
            phase2_priced = false;
        }
        let infeasible = t.infeasibilities();
        let phase1 = !infeasible.is_empty();
        if phase1 {
            t.price_phase1(&infeasible);
            phase2_priced = false;
        } else if !phase2_priced {
            t.price_phase2();
            phase2_priced = true;
        }
        let Some((q, dir)) = t.choose_entering(bland) else {
            // Confirm with fresh values before declaring a verdict.
            t.recompute_basics();
            let infeasible = t.infeasibilities();
            if phase1 {
                if infeasible.is_empty() {
                    phase2_priced = false;
                    continue;
                }
                t.price_phase1(&infeasible);
                if t.choose_entering(bland).is_some() {
                    continue;
                }
                break LpStatus::Infeasible;
            }
            if !infeasible.is_empty() {
                phase2_priced = false;
                continue;
            }
            t.price_phase2();
            if t.choose_entering(bland).is_some() {
                phase2_priced = true;
                continue;
            }
            break LpStatus::Optimal;
        };
        iterations += 1;
        match t.ratio_test(q, dir, phase1, bland) {
            Step::Unbounded => {
                if phase1 {
                    // Cannot happen with exact arithmetic; treat as numerical trouble.
                    break LpStatus::IterationLimit;
                }
                break LpStatus::Unbounded;
            }
            Step::Flip(theta) => {
                t.apply_step(q, dir, theta);
                t.pos[q] = if dir > 0.0 { Pos::Upper } else { Pos::Lower };
                t.x[q] = if dir > 0.0 { t.up[q] } else { t.lo[q] };
                degenerate = 0;
                bland = false;
            }
            Step::Pivot { row, theta, to_upper } => {
                t.apply_step(q, dir, theta);
                let leaving = t.basis[row];
                t.x[leaving] = if to_upper { t.up[leaving] } else { t.lo[leaving] };
                t.pos[leaving] = if to_upper { Pos::Upper } else { Pos::Lower };
                t.pivot(row, q, !phase1);
                if theta <= 1e-12 {
                    degenerate += 1;
                    if degenerate > opts.bland_after {
                        bland = true;
                    }
                } else {
                    degenerate = 0;
                    bland = false;
                }
            }
        }
    };

    t.recompute_basics();
    if status == LpStatus::Optimal {
        t.price_phase2();
    }
    let x: Vec<f64> = t.x[..n].to_vec();
    let row_duals = (0..t.m).map(|i| -t.d[n + i]).collect();
    LpSolution {
        status,
        objective: t.objective(),
        x,
        row_duals,
        reduced_costs: t.d[..n].to_vec(),
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> SimplexOptions {
        SimplexOptions::default()
    }

    #[test]
    fn single_variable_lower_bound_row() {
        // min x s.t. x >= 3
        let mut lp = LpProblem::with_vars(1);
        lp.cost[0] = 1.0;
        lp.lower[0] = f64::NEG_INFINITY;
        lp.add_row(vec![(0, 1.0)], Sense::Ge, 3.0);
        let s = solve(&lp, &opts());
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 3.0).abs() < 1e-12);
        assert!((s.row_duals[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18
        let mut lp = LpProblem::with_vars(2);
        lp.cost = vec![-3.0, -5.0];
        lp.add_row(vec![(0, 1.0)], Sense::Le, 4.0);
        lp.add_row(vec![(1, 2.0)], Sense::Le, 12.0);
        lp.add_row(vec![(0, 3.0), (1, 2.0)], Sense::Le, 18.0);
        let s = solve(&lp, &opts());
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective + 36.0).abs() < 1e-9);
        assert!((s.x[0] - 2.0).abs() < 1e-9 && (s.x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn detects_infeasibility() {
        let mut lp = LpProblem::with_vars(1);
        lp.upper[0] = 1.0;
        lp.add_row(vec![(0, 1.0)], Sense::Ge, 2.0);
        assert_eq!(solve(&lp, &opts()).status, LpStatus::Infeasible);
    }

    #[test]
    fn detects_unboundedness() {
        let mut lp = LpProblem::with_vars(2);
        lp.cost = vec![-1.0, 0.0];
        lp.add_row(vec![(0, 1.0), (1, -1.0)], Sense::Le, 1.0);
        assert_eq!(solve(&lp, &opts()).status, LpStatus::Unbounded);
    }

    #[test]
    fn free_variables_and_equalities() {
        // min |shape| via free vars: min u + v s.t. x - y = -2, u >= x, v >= y ... x free
        let mut lp = LpProblem::with_vars(2);
        lp.lower = vec![f64::NEG_INFINITY, f64::NEG_INFINITY];
        lp.cost = vec![1.0, 2.0];
        lp.add_row(vec![(0, 1.0), (1, 1.0)], Sense::Eq, 4.0);
        lp.add_row(vec![(0, 1.0)], Sense::Le, 10.0);
        let s = solve(&lp, &opts());
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 10.0).abs() < 1e-9);
        assert!((s.objective - (10.0 - 12.0)).abs() < 1e-9);
    }

    #[test]
    fn bound_flip_only() {
        let mut lp = LpProblem::with_vars(2);
        lp.cost = vec![-1.0, -1.0];
        lp.upper = vec![2.0, 3.0];
        let s = solve(&lp, &opts());
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective + 5.0).abs() < 1e-12);
        assert!((s.reduced_costs[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's cycling example.
        let mut lp = LpProblem::with_vars(4);
        lp.cost = vec![-0.75, 150.0, -0.02, 6.0];
        lp.add_row(vec![(0, 0.25), (1, -60.0), (2, -0.04), (3, 9.0)], Sense::Le, 0.0);
        lp.add_row(vec![(0, 0.5), (1, -90.0), (2, -0.02), (3, 3.0)], Sense::Le, 0.0);
        lp.add_row(vec![(2, 1.0)], Sense::Le, 1.0);
        let s = solve(&lp, &opts());
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective + 0.05).abs() < 1e-9);
    }
}
