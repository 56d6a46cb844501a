//! Reference solvers the acceptance run checks the library against.

use ecprice_core::instance::ProsumerAssets;
use ecprice_solver::{solve_lp_relaxation, BnbOptions, ModelIr, SolveStatus, SolverError, VarId};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A household whose data sit on a lattice: every power limit times
/// efficiency and every energy capacity is a multiple of 0.05 kWh, so every
/// vertex of its dispatch polytope has storage levels on that grid.
pub fn lattice_household(rng: &mut ChaCha8Rng, id: u32) -> (ProsumerAssets, Vec<f64>, f64) {
    let horizon = rng.gen_range(1..=6);
    let tenth = |rng: &mut ChaCha8Rng, hi: u32| rng.gen_range(0..=hi) as f64 / 10.0;
    let demand: Vec<f64> = (0..horizon).map(|_| tenth(rng, 30)).collect();
    let pv: Vec<f64> = (0..horizon).map(|_| if rng.gen_bool(0.5) { tenth(rng, 30) } else { 0.0 }).collect();
    let effs = [0.8, 0.85, 0.9, 0.95, 1.0];
    let battery = rng.gen_bool(0.75);
    let assets = ProsumerAssets {
        id,
        node: 1,
        demand_kw: demand,
        pv_kw: pv,
        p_bat_kw: if battery { rng.gen_range(1..=2) as f64 } else { 0.0 },
        e_bat_kwh: if battery { rng.gen_range(1..=50) as f64 * 0.05 } else { 0.0 },
        eta_ch: effs[rng.gen_range(0..effs.len())],
        eta_dis: effs[rng.gen_range(0..effs.len())],
        sigma: 0.2,
    };
    let prices = (0..horizon).map(|_| rng.gen_range(0..=300) as f64 / 100.0).collect();
    let alpha_shed = if rng.gen_bool(0.5) { 2.0 } else { 75.0 };
    (assets, prices, alpha_shed)
}

/// Cheapest `x (ch - dis)` that moves the stored energy by `delta`.
fn transition_cost(a: &ProsumerAssets, x: f64, delta: f64) -> f64 {
    let p = a.p_bat_kw;
    let (ec, ed) = (a.eta_ch, a.eta_dis);
    let candidates = [
        (0.0, -delta / ed),
        (delta / ec, 0.0),
        (p, (ec * p - delta) / ed),
        ((delta + ed * p) / ec, p),
    ];
    let inside = |v: f64| (-1e-12..=p + 1e-12).contains(&v);
    candidates
        .iter()
        .filter(|(ch, dis)| inside(*ch) && inside(*dis))
        .map(|(ch, dis)| x * (ch - dis))
        .fold(f64::INFINITY, f64::min)
}

/// Least daily cost found by dynamic programming over storage levels on a
/// grid of `step` kWh, with the day starting and ending at the same level.
pub fn dispatch_dp(a: &ProsumerAssets, prices: &[f64], alpha_shed: f64, step: f64) -> f64 {
    // Energy bought and shed separate per period.
    let mut total = 0.0;
    for (t, &x) in prices.iter().enumerate() {
        let d = a.demand_kw[t];
        total += x * (d - a.pv_kw[t]) + ((alpha_shed - x) * d).min(0.0);
    }
    let n = (a.e_bat_kwh / step + 1e-9).floor() as usize + 1;
    let level = |k: usize| k as f64 * step;
    let mut best = f64::INFINITY;
    for start in 0..n {
        let mut value = vec![f64::INFINITY; n];
        value[start] = 0.0;
        for &x in prices {
            let mut next = vec![f64::INFINITY; n];
            for (i, &v) in value.iter().enumerate() {
                if !v.is_finite() {
                    continue;
                }
                for (j, slot) in next.iter_mut().enumerate() {
                    let c = v + transition_cost(a, x, level(j) - level(i));
                    if c < *slot {
                        *slot = c;
                    }
                }
            }
            value = next;
        }
        best = best.min(value[start]);
    }
    total + best
}

#[derive(Clone, Debug)]
pub struct Enumeration {
    pub best: f64,
    pub relaxations: usize,
}

fn open_set<'a>(ir: &'a ModelIr, x: &[f64], tol: f64) -> Option<&'a [VarId]> {
    ir.sos1
        .iter()
        .find(|s| s.members.iter().filter(|v| x[v.index()].abs() > tol).count() > 1)
        .map(|s| s.members.as_slice())
}

fn visit(
    ir: &ModelIr,
    opts: &BnbOptions,
    fixed: &mut Vec<VarId>,
    out: &mut Enumeration,
) -> Result<(), SolverError> {
    let r = solve_lp_relaxation(ir, fixed, opts)?;
    out.relaxations += 1;
    match r.status {
        SolveStatus::Infeasible => return Ok(()),
        SolveStatus::Optimal => {}
        other => {
            return Err(SolverError::External(format!("relaxation ended {}", other.as_str())));
        }
    }
    if r.objective >= out.best {
        return Ok(());
    }
    let Some(members) = open_set(ir, &r.values, opts.sos_tol) else {
        out.best = r.objective;
        return Ok(());
    };
    // One branch per member allowed to stay nonzero.
    for keep in 0..members.len() {
        let mark = fixed.len();
        fixed.extend(members.iter().enumerate().filter(|(k, _)| *k != keep).map(|(_, &v)| v));
        visit(ir, opts, fixed, out)?;
        fixed.truncate(mark);
    }
    Ok(())
}

/// Optimum over every way of choosing the nonzero member of each SOS1 set,
/// visited depth first in model order. A subtree is skipped only when its
/// relaxation is infeasible or no better than a complete choice already
/// found.
pub fn enumerate_sos1(ir: &ModelIr, opts: &BnbOptions) -> Result<Enumeration, SolverError> {
    let mut out = Enumeration {
        best: f64::INFINITY,
        relaxations: 0,
    };
    visit(ir, opts, &mut Vec::new(), &mut out)?;
    Ok(out)
}
