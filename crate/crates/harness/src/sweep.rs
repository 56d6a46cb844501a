//! Community cost over a grid of discount factors and variation factors.

use std::fmt::Write as _;
use std::path::Path;

use ecprice_core::bilevel::solve_bilevel;
use ecprice_core::instance::Instance;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::{write_file, HarnessError, Result};
use crate::run::{compute_baselines, load_base, scenario};
use crate::svg::heat_table;

#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub beta: f64,
    pub v: f64,
    pub status: String,
    /// Community cost including shedding, DKK; NaN without a solution.
    pub cost: f64,
    /// Proven lower bound on the objective, DKK.
    pub bound: f64,
    pub objective: f64,
    pub gap: f64,
    pub shed_kwh: f64,
    pub below_floor: bool,
}

impl SweepCell {
    /// How far the cost may sit above the best achievable one: the open
    /// gap plus the price-cap and distribution terms of the objective.
    pub fn slack(&self) -> f64 {
        (self.objective - self.bound).max(0.0) + (self.objective - self.cost).abs()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub cells: Vec<SweepCell>,
    pub beta_grid: Vec<f64>,
    pub variation_grid: Vec<f64>,
    /// One line per monotonicity violation; empty when both trends hold.
    pub violations: Vec<String>,
}

impl SweepReport {
    pub fn cell(&self, beta: f64, v: f64) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.beta == beta && c.v == v)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("beta,v,cost_dkk,bound_dkk,gap,status,shed_kwh,below_floor\n");
        let num = |x: f64| if x.is_finite() { format!("{x}") } else { String::new() };
        for c in &self.cells {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                c.beta,
                c.v,
                num(c.cost),
                num(c.bound),
                num(c.gap),
                c.status,
                num(c.shed_kwh),
                c.below_floor
            );
        }
        s
    }
}

fn solve_cell(cfg: &RunConfig, base: &Instance, beta: f64, v: f64) -> SweepCell {
    let scale = cfg.hours_per_period as f64;
    let mut cell = SweepCell {
        beta,
        v,
        status: String::new(),
        cost: f64::NAN,
        bound: f64::NAN,
        objective: f64::NAN,
        gap: f64::NAN,
        shed_kwh: f64::NAN,
        below_floor: v < cfg.variation_floor,
    };
    let solved = scenario(base, Some(beta), Some(v), cfg.hours_per_period).and_then(|inst| {
        let b = compute_baselines(&inst)?;
        Ok(solve_bilevel(&inst, &b.c_ext, &cfg.budget())?)
    });
    match solved {
        Ok(s) => {
            cell.status = s.status.as_str().to_string();
            cell.bound = s.bound * scale;
            if s.status.has_solution() {
                cell.cost = s.costs.total() * scale;
                cell.objective = s.objective * scale;
                cell.gap = s.gap;
                cell.shed_kwh = s.dispatch.iter().flat_map(|d| d.d_shed.iter()).sum::<f64>() * scale;
            }
        }
        Err(e) => cell.status = format!("error: {e}").replace(',', ";"),
    }
    cell
}

/// Pairs along one axis where the cost rises by more than both cells'
/// slack allows.
fn trend_violations(cells: &[&SweepCell], axis: &str, fixed: &str) -> Vec<String> {
    let mut out = Vec::new();
    for w in cells.windows(2) {
        let (a, b) = (w[0], w[1]);
        if !(a.cost.is_finite() && b.cost.is_finite()) {
            continue;
        }
        let allowed = a.slack() + b.slack() + 1e-9 * (1.0 + a.cost.abs());
        if b.cost > a.cost + allowed {
            let (x, y) = if axis == "beta" { (a.beta, b.beta) } else { (a.v, b.v) };
            out.push(format!(
                "{fixed}: cost rises from {:.6} to {:.6} as {axis} goes {x} -> {y} (allowed {allowed:.2e})",
                a.cost, b.cost
            ));
        }
    }
    out
}

/// Solves every (beta, v) cell on `jobs` worker threads and writes
/// `sweep.csv`, `monotonicity.txt` and `heatmap.svg` into `out`.
pub fn sweep_heatmap(cfg: &RunConfig, out: &Path, jobs: usize) -> Result<SweepReport> {
    let mut base = load_base(cfg, out)?;
    base.config.mode = cfg.modes[0];
    let mut betas = cfg.beta_grid.clone();
    let mut vs = cfg.variation_grid.clone();
    betas.sort_by(f64::total_cmp);
    betas.dedup();
    vs.sort_by(f64::total_cmp);
    vs.dedup();
    let grid: Vec<(f64, f64)> = betas.iter().flat_map(|&b| vs.iter().map(move |&v| (b, v))).collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| HarnessError::Config {
            path: cfg.path.clone(),
            line: None,
            msg: format!("cannot start {jobs} workers: {e}"),
        })?;
    let cells: Vec<SweepCell> = pool.install(|| {
        grid.par_iter()
            .map(|&(b, v)| {
                let c = solve_cell(cfg, &base, b, v);
                log::info!("beta {b} v {v}: {} cost {:.4}", c.status, c.cost);
                c
            })
            .collect()
    });

    let mut violations = Vec::new();
    for &v in &vs {
        let col: Vec<&SweepCell> = cells.iter().filter(|c| c.v == v).collect();
        violations.extend(trend_violations(&col, "beta", &format!("v = {v}")));
    }
    for &b in &betas {
        let row: Vec<&SweepCell> = cells.iter().filter(|c| c.beta == b).collect();
        violations.extend(trend_violations(&row, "v", &format!("beta = {b}")));
    }
    let report = SweepReport {
        cells,
        beta_grid: betas,
        variation_grid: vs,
        violations,
    };

    write_file(out.join("sweep.csv"), report.to_csv())?;
    let mut diag = String::new();
    if report.violations.is_empty() {
        diag.push_str("cost is nonincreasing in beta and in v within the solver gap\n");
    }
    for v in &report.violations {
        let _ = writeln!(diag, "{v}");
    }
    for c in report.cells.iter().filter(|c| c.below_floor) {
        let _ = writeln!(diag, "beta {} v {}: below the variation floor {}, shed {:.4} kWh", c.beta, c.v, cfg.variation_floor, c.shed_kwh);
    }
    write_file(out.join("monotonicity.txt"), diag)?;
    let rows: Vec<String> = report.beta_grid.iter().map(|b| format!("beta {b}")).collect();
    let cols: Vec<String> = report.variation_grid.iter().map(|v| format!("v {v}")).collect();
    let values: Vec<Vec<f64>> = report
        .beta_grid
        .iter()
        .map(|&b| report.variation_grid.iter().map(|&v| report.cell(b, v).map_or(f64::NAN, |c| c.cost)).collect())
        .collect();
    write_file(out.join("heatmap.svg"), heat_table("Community cost (DKK)", &rows, &cols, &values))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(beta: f64, cost: f64) -> SweepCell {
        SweepCell {
            beta,
            v: 1.0,
            status: "optimal".into(),
            cost,
            bound: cost,
            objective: cost,
            gap: 0.0,
            shed_kwh: 0.0,
            below_floor: false,
        }
    }

    #[test]
    fn rising_cost_is_reported() {
        let cells = [cell(0.0, 10.0), cell(0.3, 9.0), cell(0.6, 9.5)];
        let refs: Vec<&SweepCell> = cells.iter().collect();
        let v = trend_violations(&refs, "beta", "v = 1");
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("0.3 -> 0.6"));
    }

    #[test]
    fn open_gap_absorbs_a_rise() {
        let mut hi = cell(0.6, 9.5);
        hi.bound = 8.0;
        let cells = [cell(0.3, 9.0), hi];
        let refs: Vec<&SweepCell> = cells.iter().collect();
        assert!(trend_violations(&refs, "beta", "v = 1").is_empty());
    }

    #[test]
    fn missing_cells_are_blank_in_csv() {
        let mut c = cell(0.4, f64::NAN);
        c.status = "node-limit".into();
        c.gap = f64::NAN;
        c.shed_kwh = f64::NAN;
        let r = SweepReport {
            cells: vec![c],
            beta_grid: vec![0.4],
            variation_grid: vec![1.0],
            violations: vec![],
        };
        assert_eq!(r.to_csv().lines().nth(1), Some("0.4,1,,,,node-limit,,false"));
    }
}
