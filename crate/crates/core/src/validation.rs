//! Independent checking of a claimed solution. Nothing here looks at the
//! optimization model: every quantity is recomputed from the instance data
//! and the candidate itself.

use std::fmt;

use rayon::prelude::*;

use crate::bilevel::{nodal_injections, CostBreakdown, PriceSchedule, SettlementRecord};
use crate::dispatch::{solve_dispatch, DispatchSolution};
use crate::instance::Instance;
use crate::network::{check_flow_feasibility, CommunityState};

/// Flow-constraint families reported by the network checker.
pub const FLOW_CHECKS: [&str; 14] = [
    "root_balance_p",
    "root_balance_q",
    "grid_p_im",
    "grid_p_ex",
    "grid_q_im",
    "grid_q_ex",
    "nonnegativity",
    "voltage_ref",
    "flow_p",
    "flow_q",
    "line_capacity",
    "voltage_drop",
    "voltage_min",
    "voltage_max",
];

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    /// Worst violation found, 0 when the family is satisfied exactly.
    pub residual: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    fn push(&mut self, name: impl Into<String>, residual: f64, threshold: f64) {
        self.checks.push(CheckResult {
            name: name.into(),
            residual,
            threshold,
            // NaN fails.
            pass: residual <= threshold,
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("check_name,residual,threshold,pass\n");
        for c in &self.checks {
            s += &format!("{},{:e},{:e},{}\n", c.name, c.residual, c.threshold, c.pass);
        }
        s
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let mark = if c.pass { "ok  " } else { "FAIL" };
            writeln!(f, "{mark} {:<28} residual {:.3e} (threshold {:.1e})", c.name, c.residual, c.threshold)?;
        }
        let n = self.checks.iter().filter(|c| !c.pass).count();
        write!(f, "{} checks, {n} failed", self.checks.len())
    }
}

fn max_abs(it: impl IntoIterator<Item = f64>) -> f64 {
    it.into_iter().fold(0.0, |m: f64, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) })
}

/// Evaluates every constraint family at tolerance `tol`, scaled by the
/// magnitude of the quantities involved where that is meaningful.
pub fn check_solution(
    inst: &Instance,
    prices: &PriceSchedule,
    dispatch: &[DispatchSolution],
    state: &CommunityState,
    settle: &SettlementRecord,
    tol: f64,
) -> ValidationReport {
    let mut r = ValidationReport::default();
    let c = &inst.contract;
    let t_len = inst.horizon();
    let members = inst.prosumers.len();
    if dispatch.len() != members || prices.x.len() != members || settle.payment.len() != members {
        r.push("dimensions", f64::INFINITY, 0.0);
        return r;
    }

    // Budget: members together pay for what the community buys.
    let costs = CostBreakdown::evaluate(inst, dispatch, state);
    let payments: Vec<f64> = dispatch.iter().zip(&prices.x).map(|(d, x)| d.payment(x)).collect();
    let paid: f64 = payments.iter().sum();
    r.push("budget_balance", (paid - costs.budget()).abs(), tol * (1.0 + costs.total().abs()));

    let pay_mismatch = max_abs(payments.iter().zip(&settle.payment).map(|(a, b)| a - b));
    r.push("settled_payment", pay_mismatch, tol * (1.0 + max_abs(payments.iter().copied())));

    // Individual rationality identities and slack signs.
    let ir = max_abs((0..members).map(|i| {
        settle.payment[i] - settle.c_ext[i] - settle.w_plus[i] + settle.w_minus[i]
    }));
    r.push("rationality", ir, tol * (1.0 + max_abs(settle.c_ext.iter().copied())));
    let negative = settle
        .w_plus
        .iter()
        .chain(&settle.w_minus)
        .fold(0.0f64, |m, w| m.max(-w))
        + 0.0;
    r.push("slack_sign", negative, tol);
    let sum_plus: f64 = settle.w_plus.iter().sum();
    let sum_minus: f64 = settle.w_minus.iter().sum();
    r.push("benefit_exclusive", sum_plus.min(sum_minus).max(0.0), tol);

    // Prices stay within [0, value of lost load].
    let mut price = 0.0f64;
    for x in prices.x.iter().flatten() {
        price = price.max(-x).max(x - c.alpha_shed).max(x - prices.x_bar);
    }
    r.push("price_cap", price, tol);

    // Penalty covers the excess and, when it is priced, equals it.
    let mut pen_cover = 0.0f64;
    let mut pen_tight = 0.0f64;
    for t in 0..t_len {
        let excess = (state.p_im[t] - c.p_cap_kw[t]).max(0.0);
        pen_cover = pen_cover.max(excess - state.p_pen[t]);
        if c.alpha_dso[t] > 0.0 {
            pen_tight = pen_tight.max(state.p_pen[t] - excess);
        }
    }
    r.push("penalty_cover", pen_cover, tol);
    r.push("penalty_tight", pen_tight, tol);

    // Member dispatch is what the network sees.
    let (inj_p, inj_q) = nodal_injections(inst, dispatch);
    let inj = max_abs(
        inj_p
            .iter()
            .zip(&state.inj_p)
            .chain(inj_q.iter().zip(&state.inj_q))
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y)),
    );
    r.push("injection", inj, tol);

    let violations = check_flow_feasibility(&inst.network, state, 0.0);
    for name in FLOW_CHECKS {
        let worst = violations
            .iter()
            .filter(|v| v.check == name)
            .fold(0.0f64, |m, v| if v.residual.is_nan() { f64::NAN } else { m.max(v.residual) });
        r.push(name, worst, tol);
    }

    // Each member's dispatch must be feasible and optimal at its prices.
    let per_member: Vec<(f64, f64)> = inst
        .prosumers
        .par_iter()
        .zip(dispatch.par_iter())
        .zip(prices.x.par_iter())
        .map(|((a, d), x)| {
            let feas = d.feasibility_residual(a);
            let given = d.cost(x, c.alpha_shed);
            let gap = match solve_dispatch(a, x, c.alpha_shed) {
                Ok((best, _)) => (given - best.objective) / (1.0 + best.objective.abs()),
                Err(_) => f64::INFINITY,
            };
            (feas, gap)
        })
        .collect();
    r.push("dispatch_feasibility", max_abs(per_member.iter().map(|p| p.0)), tol);
    for (a, (_, gap)) in inst.prosumers.iter().zip(&per_member) {
        r.push(format!("lower_optimality[{}]", a.id), gap.max(0.0), tol);
    }
    r
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenefitStats {
    pub total_benefit: f64,
    pub total_loss: f64,
    /// Each member's part of the total benefit.
    pub shares: Vec<f64>,
    /// Sample variance of the per-member benefit.
    pub variance: f64,
    /// `sum_i (w-_i - share_i * sum w-)^2` against the residual-load shares.
    pub proportional_deviation: f64,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

pub fn benefit_stats(settle: &SettlementRecord) -> BenefitStats {
    let w = &settle.w_minus;
    let n = w.len();
    let total: f64 = w.iter().sum();
    let mean = if n > 0 { total / n as f64 } else { 0.0 };
    let variance = if n > 1 {
        w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let proportional_deviation = w
        .iter()
        .zip(&settle.shares)
        .map(|(v, s)| (v - s * total).powi(2))
        .sum();
    BenefitStats {
        total_benefit: total,
        total_loss: settle.w_plus.iter().sum(),
        shares: w.iter().map(|v| if total > 0.0 { v / total } else { 0.0 }).collect(),
        variance,
        proportional_deviation,
        min: w.iter().copied().fold(f64::INFINITY, f64::min),
        mean,
        max: w.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}
