//! The prosumer's day-ahead dispatch LP, its optimality conditions, and the
//! dual expression of its payment.
//!
//! Constraint orientation (every equality is `h = 0`):
//!
//! ```text
//! balance   p+ - p- + PV - D + d - ch + dis
//! storage   e_t - e_{t-1} - eta_ch ch_t + eta_dis dis_t      (e_0 := e_T)
//! reactive  q+ - sigma p+,   q- - sigma p-
//! ```
//!
//! Multipliers enter the Lagrangian as `f + lambda h + mu_up (v - cap) - mu_lo v`,
//! so `mu` is always nonnegative and the equality multipliers are free.

use ecprice_solver::simplex::{self, LpProblem, LpStatus, SimplexOptions};
use ecprice_solver::{ModelIr, Sense, VarId};

use crate::error::{CoreError, Result};
use crate::instance::ProsumerAssets;

/// Variable handles of one prosumer's primal block, one entry per period.
#[derive(Clone, Debug)]
pub struct LowerVars {
    pub p_plus: Vec<VarId>,
    pub p_minus: Vec<VarId>,
    pub q_plus: Vec<VarId>,
    pub q_minus: Vec<VarId>,
    pub p_ch: Vec<VarId>,
    pub p_dis: Vec<VarId>,
    pub e: Vec<VarId>,
    pub d_shed: Vec<VarId>,
}

impl LowerVars {
    fn families(&self) -> [&Vec<VarId>; 8] {
        [
            &self.p_plus,
            &self.p_minus,
            &self.q_plus,
            &self.q_minus,
            &self.p_ch,
            &self.p_dis,
            &self.e,
            &self.d_shed,
        ]
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DispatchSolution {
    pub p_plus: Vec<f64>,
    pub p_minus: Vec<f64>,
    pub q_plus: Vec<f64>,
    pub q_minus: Vec<f64>,
    pub p_ch: Vec<f64>,
    pub p_dis: Vec<f64>,
    pub e: Vec<f64>,
    pub d_shed: Vec<f64>,
    /// Value of the prosumer's own objective at this dispatch.
    pub objective: f64,
}

impl DispatchSolution {
    pub fn horizon(&self) -> usize {
        self.p_plus.len()
    }

    pub fn net(&self, t: usize) -> f64 {
        self.p_plus[t] - self.p_minus[t]
    }

    /// Reads the dispatch from a primal vector of a model containing `vars`.
    pub fn from_values(vars: &LowerVars, x: &[f64]) -> Self {
        let get = |v: &Vec<VarId>| v.iter().map(|id| x[id.index()]).collect::<Vec<f64>>();
        Self {
            p_plus: get(&vars.p_plus),
            p_minus: get(&vars.p_minus),
            q_plus: get(&vars.q_plus),
            q_minus: get(&vars.q_minus),
            p_ch: get(&vars.p_ch),
            p_dis: get(&vars.p_dis),
            e: get(&vars.e),
            d_shed: get(&vars.d_shed),
            objective: 0.0,
        }
    }

    /// `sum_t x_t (p+ - p-)`.
    pub fn payment(&self, prices: &[f64]) -> f64 {
        (0..self.horizon()).map(|t| prices[t] * self.net(t)).sum()
    }

    /// The prosumer's objective at the given prices.
    pub fn cost(&self, prices: &[f64], alpha_shed: f64) -> f64 {
        self.payment(prices) + alpha_shed * self.d_shed.iter().sum::<f64>()
    }

    /// Largest violation of the LP's constraints (balance, storage, reactive
    /// links, bounds).
    pub fn feasibility_residual(&self, a: &ProsumerAssets) -> f64 {
        let t_len = self.horizon();
        let mut worst = 0.0f64;
        for t in 0..t_len {
            let bal = self.p_plus[t] - self.p_minus[t] + a.pv_kw[t] - a.demand_kw[t] + self.d_shed[t]
                - self.p_ch[t]
                + self.p_dis[t];
            let prev = if t == 0 { t_len - 1 } else { t - 1 };
            let sto = self.e[t] - self.e[prev] - a.eta_ch * self.p_ch[t] + a.eta_dis * self.p_dis[t];
            let r1 = self.q_plus[t] - a.sigma * self.p_plus[t];
            let r2 = self.q_minus[t] - a.sigma * self.p_minus[t];
            worst = worst.max(bal.abs()).max(sto.abs()).max(r1.abs()).max(r2.abs());
            for v in [
                self.p_plus[t],
                self.p_minus[t],
                self.q_plus[t],
                self.q_minus[t],
                self.p_ch[t],
                self.p_dis[t],
                self.e[t],
                self.d_shed[t],
            ] {
                worst = worst.max(-v);
            }
            worst = worst
                .max(self.p_ch[t] - a.p_bat_kw)
                .max(self.p_dis[t] - a.p_bat_kw)
                .max(self.e[t] - a.e_bat_kwh)
                .max(self.d_shed[t] - a.demand_kw[t]);
        }
        worst
    }
}

/// Multipliers of the dispatch LP. `mu[k]` holds bound multiplier
/// `k + 1`: 0..8 for the nonnegativity of p+, p-, q+, q-, ch,
/// dis, e, d and 8..12 for the caps on ch, dis, e and d.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DualSolution {
    pub lambda1: Vec<f64>,
    /// Multiplier of the cyclic storage row (period 1).
    pub lambda2: f64,
    /// Multipliers of the storage rows for periods 2..T.
    pub lambda3: Vec<f64>,
    pub lambda4: Vec<f64>,
    pub lambda5: Vec<f64>,
    pub mu: [Vec<f64>; 12],
}

impl DualSolution {
    /// Multiplier of the storage row of period `t` (0-based).
    pub fn storage(&self, t: usize) -> f64 {
        if t == 0 {
            self.lambda2
        } else {
            self.lambda3[t - 1]
        }
    }

    /// Dual objective of the dispatch LP.
    pub fn dual_objective(&self, a: &ProsumerAssets) -> f64 {
        (0..self.lambda1.len())
            .map(|t| {
                self.lambda1[t] * (a.pv_kw[t] - a.demand_kw[t])
                    - a.p_bat_kw * (self.mu[8][t] + self.mu[9][t])
                    - a.e_bat_kwh * self.mu[10][t]
                    - a.demand_kw[t] * self.mu[11][t]
            })
            .sum()
    }

    /// Largest residual of the stationarity conditions at prices `x`.
    pub fn stationarity_residual(&self, a: &ProsumerAssets, x: &[f64], alpha_shed: f64) -> f64 {
        let t_len = self.lambda1.len();
        let mu = &self.mu;
        let mut worst = 0.0f64;
        for t in 0..t_len {
            let l1 = self.lambda1[t];
            let next = (t + 1) % t_len;
            let rows = [
                x[t] + l1 - a.sigma * self.lambda4[t] - mu[0][t],
                -x[t] - l1 - a.sigma * self.lambda5[t] - mu[1][t],
                self.lambda4[t] - mu[2][t],
                self.lambda5[t] - mu[3][t],
                -l1 - a.eta_ch * self.storage(t) - mu[4][t] + mu[8][t],
                l1 + a.eta_dis * self.storage(t) - mu[5][t] + mu[9][t],
                self.storage(t) - self.storage(next) - mu[6][t] + mu[10][t],
                alpha_shed + l1 - mu[7][t] + mu[11][t],
            ];
            for r in rows {
                worst = worst.max(r.abs());
            }
        }
        worst
    }
}

/// Slack of every complementarity pair's primal side, in multiplier order.
pub(crate) fn primal_slacks(a: &ProsumerAssets, d: &DispatchSolution, t: usize) -> [f64; 12] {
    [
        d.p_plus[t],
        d.p_minus[t],
        d.q_plus[t],
        d.q_minus[t],
        d.p_ch[t],
        d.p_dis[t],
        d.e[t],
        d.d_shed[t],
        a.p_bat_kw - d.p_ch[t],
        a.p_bat_kw - d.p_dis[t],
        a.e_bat_kwh - d.e[t],
        a.demand_kw[t] - d.d_shed[t],
    ]
}

/// Largest `min(mu, slack)` over all complementarity pairs.
pub fn complementarity_residual(a: &ProsumerAssets, d: &DispatchSolution, duals: &DualSolution) -> f64 {
    let mut worst = 0.0f64;
    for t in 0..d.horizon() {
        let s = primal_slacks(a, d, t);
        for k in 0..12 {
            worst = worst.max(duals.mu[k][t].min(s[k]).max(0.0));
        }
    }
    worst
}

/// Adds the primal variables and constraints of one prosumer to `ir`.
/// Returns the handles; rows are tagged `balance`, `storage` and `reactive`.
pub fn add_primal_block(ir: &mut ModelIr, prefix: &str, a: &ProsumerAssets) -> LowerVars {
    let t_len = a.demand_kw.len();
    let mut fam = |name: &str, ub: &dyn Fn(usize) -> f64| -> Vec<VarId> {
        (0..t_len)
            .map(|t| ir.add_var(format!("{prefix}{name}[{}]", t + 1), 0.0, ub(t)))
            .collect()
    };
    let inf = |_| f64::INFINITY;
    let vars = LowerVars {
        p_plus: fam("p_plus", &inf),
        p_minus: fam("p_minus", &inf),
        q_plus: fam("q_plus", &inf),
        q_minus: fam("q_minus", &inf),
        p_ch: fam("p_ch", &|_| a.p_bat_kw),
        p_dis: fam("p_dis", &|_| a.p_bat_kw),
        e: fam("e", &|_| a.e_bat_kwh),
        d_shed: fam("d_shed", &|t| a.demand_kw[t]),
    };
    for t in 0..t_len {
        ir.add_row(
            format!("{prefix}balance[{}]", t + 1),
            "balance",
            vec![
                (vars.p_plus[t], 1.0),
                (vars.p_minus[t], -1.0),
                (vars.d_shed[t], 1.0),
                (vars.p_ch[t], -1.0),
                (vars.p_dis[t], 1.0),
            ],
            Sense::Eq,
            a.demand_kw[t] - a.pv_kw[t],
        );
    }
    for t in 0..t_len {
        let prev = if t == 0 { t_len - 1 } else { t - 1 };
        ir.add_row(
            format!("{prefix}storage[{}]", t + 1),
            "storage",
            vec![
                (vars.e[t], 1.0),
                (vars.e[prev], -1.0),
                (vars.p_ch[t], -a.eta_ch),
                (vars.p_dis[t], a.eta_dis),
            ],
            Sense::Eq,
            0.0,
        );
    }
    for t in 0..t_len {
        ir.add_row(
            format!("{prefix}reactive_plus[{}]", t + 1),
            "reactive",
            vec![(vars.q_plus[t], 1.0), (vars.p_plus[t], -a.sigma)],
            Sense::Eq,
            0.0,
        );
        ir.add_row(
            format!("{prefix}reactive_minus[{}]", t + 1),
            "reactive",
            vec![(vars.q_minus[t], 1.0), (vars.p_minus[t], -a.sigma)],
            Sense::Eq,
            0.0,
        );
    }
    vars
}

/// The dispatch LP of one prosumer at fixed prices.
#[derive(Clone, Debug)]
pub struct LowerLp {
    pub ir: ModelIr,
    pub vars: LowerVars,
    pub assets: ProsumerAssets,
    pub prices: Vec<f64>,
    pub alpha_shed: f64,
}

pub fn build_lower_lp(assets: &ProsumerAssets, prices: &[f64], alpha_shed: f64) -> Result<LowerLp> {
    let t_len = assets.demand_kw.len();
    if prices.len() != t_len {
        return Err(CoreError::Dimension(format!(
            "{} prices for a {t_len}-period profile",
            prices.len()
        )));
    }
    let mut ir = ModelIr::new();
    let vars = add_primal_block(&mut ir, "", assets);
    for t in 0..t_len {
        ir.add_objective(vars.p_plus[t], prices[t]);
        ir.add_objective(vars.p_minus[t], -prices[t]);
        ir.add_objective(vars.d_shed[t], alpha_shed);
    }
    Ok(LowerLp {
        ir,
        vars,
        assets: assets.clone(),
        prices: prices.to_vec(),
        alpha_shed,
    })
}

/// Tolerance of the strong-duality certificate.
pub const DUALITY_TOL: f64 = 1e-6;

/// Solves the dispatch LP and recovers all multipliers from the final basis.
pub fn solve_lower_lp(lp: &LowerLp) -> Result<(DispatchSolution, DualSolution)> {
    let problem = LpProblem::from_model(&lp.ir);
    let sol = simplex::solve(&problem, &SimplexOptions::default());
    let fail = |msg: String| CoreError::Dispatch {
        prosumer: lp.assets.id,
        msg,
    };
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::IterationLimit => return Err(fail("iteration limit exceeded".into())),
        s => return Err(fail(format!("solver reported {s:?} on an always-feasible LP"))),
    }
    let mut dispatch = DispatchSolution::from_values(&lp.vars, &sol.x);
    dispatch.objective = sol.objective;

    let t_len = lp.prices.len();
    // Row order: balance, storage, reactive (+, -) interleaved.
    let lam = |row: usize| -sol.row_duals[row];
    let rc = |v: VarId| sol.reduced_costs[v.index()];
    let v = &lp.vars;
    let mut mu: [Vec<f64>; 12] = Default::default();
    for (k, fam) in v.families().iter().enumerate() {
        mu[k] = fam.iter().map(|&id| rc(id).max(0.0)).collect();
    }
    for (k, fam) in [&v.p_ch, &v.p_dis, &v.e, &v.d_shed].iter().enumerate() {
        mu[8 + k] = fam.iter().map(|&id| (-rc(id)).max(0.0)).collect();
    }
    let duals = DualSolution {
        lambda1: (0..t_len).map(lam).collect(),
        lambda2: lam(t_len),
        lambda3: (1..t_len).map(|t| lam(t_len + t)).collect(),
        lambda4: (0..t_len).map(|t| lam(2 * t_len + 2 * t)).collect(),
        lambda5: (0..t_len).map(|t| lam(2 * t_len + 2 * t + 1)).collect(),
        mu,
    };

    let primal = sol.objective;
    let dual = duals.dual_objective(&lp.assets);
    let scale = 1.0 + primal.abs();
    if (primal - dual).abs() > DUALITY_TOL * scale {
        return Err(fail(format!(
            "numerical instability: primal {primal} and dual {dual} objectives disagree"
        )));
    }
    let stat = duals.stationarity_residual(&lp.assets, &lp.prices, lp.alpha_shed);
    if stat > DUALITY_TOL * scale {
        return Err(fail(format!("numerical instability: stationarity residual {stat:.3e}")));
    }
    Ok((dispatch, duals))
}

/// Convenience: build and solve in one step.
pub fn solve_dispatch(
    assets: &ProsumerAssets,
    prices: &[f64],
    alpha_shed: f64,
) -> Result<(DispatchSolution, DualSolution)> {
    solve_lower_lp(&build_lower_lp(assets, prices, alpha_shed)?)
}

/// `sum_t x_t (p+ - p-)` expressed through the multipliers, which is linear
/// in them and in the shed. Requires complementary inputs.
pub fn payment_identity(
    assets: &ProsumerAssets,
    alpha_shed: f64,
    dispatch: &DispatchSolution,
    duals: &DualSolution,
    tol: f64,
) -> Result<f64> {
    let residual = complementarity_residual(assets, dispatch, duals);
    if residual > tol {
        return Err(CoreError::StaleDuals { residual, tol });
    }
    Ok(duals.dual_objective(assets) - alpha_shed * dispatch.d_shed.iter().sum::<f64>())
}

/// Handles of the multipliers in an emitted KKT block.
#[derive(Clone, Debug)]
pub struct DualVars {
    pub lambda1: Vec<VarId>,
    /// Storage-row multipliers, period 1 first (the cyclic row).
    pub storage: Vec<VarId>,
    pub lambda4: Vec<VarId>,
    pub lambda5: Vec<VarId>,
    pub mu: [Vec<VarId>; 12],
}

/// Optimality system of one prosumer embedded in a larger model.
#[derive(Clone, Debug)]
pub struct KktBlock {
    pub primal: LowerVars,
    /// Cap slacks `P - ch`, `P - dis`, `E - e`, `D - d`.
    pub slack: [Vec<VarId>; 4],
    pub duals: DualVars,
    /// `(mu_k, primal side)` for k = 1..12 and every period.
    pub pairs: Vec<(VarId, VarId)>,
    pub dual_bound: f64,
}

impl KktBlock {
    /// Linear expression of the prosumer's payment `sum_t x (p+ - p-)`.
    pub fn payment_terms(&self, a: &ProsumerAssets, alpha_shed: f64) -> Vec<(VarId, f64)> {
        let mut terms = Vec::new();
        for t in 0..a.demand_kw.len() {
            terms.push((self.duals.lambda1[t], a.pv_kw[t] - a.demand_kw[t]));
            terms.push((self.duals.mu[8][t], -a.p_bat_kw));
            terms.push((self.duals.mu[9][t], -a.p_bat_kw));
            terms.push((self.duals.mu[10][t], -a.e_bat_kwh));
            terms.push((self.duals.mu[11][t], -a.demand_kw[t]));
            terms.push((self.primal.d_shed[t], -alpha_shed));
        }
        terms
    }

    pub fn dual_values(&self, x: &[f64]) -> DualSolution {
        let get = |v: &Vec<VarId>| v.iter().map(|id| x[id.index()]).collect::<Vec<f64>>();
        let storage = get(&self.duals.storage);
        DualSolution {
            lambda1: get(&self.duals.lambda1),
            lambda2: storage[0],
            lambda3: storage[1..].to_vec(),
            lambda4: get(&self.duals.lambda4),
            lambda5: get(&self.duals.lambda5),
            mu: std::array::from_fn(|k| get(&self.duals.mu[k])),
        }
    }
}

/// Box for the multipliers. Storage values can reach the price cap divided
/// by the worst efficiency; everything else stays within cap plus shed cost.
pub fn dual_bound(a: &ProsumerAssets, price_cap: f64, alpha_shed: f64) -> f64 {
    let eta = if a.p_bat_kw > 0.0 || a.e_bat_kwh > 0.0 {
        a.eta_ch.min(a.eta_dis).max(1e-3)
    } else {
        1.0
    };
    2.0 * (price_cap + alpha_shed) * (1.0 + 1.0 / eta)
}

/// Emits primal feasibility, dual feasibility, stationarity and the
/// complementarity pairs of one prosumer. `prices` are model variables.
/// Stationarity rows are tagged `stationarity`; the pairs are returned, not
/// registered.
pub fn emit_kkt(
    ir: &mut ModelIr,
    prefix: &str,
    a: &ProsumerAssets,
    prices: &[VarId],
    alpha_shed: f64,
    dual_bound: f64,
) -> KktBlock {
    let t_len = a.demand_kw.len();
    let primal = add_primal_block(ir, prefix, a);
    let m = dual_bound;

    let caps: [(&str, &Vec<VarId>, Box<dyn Fn(usize) -> f64>); 4] = [
        ("slack_ch", &primal.p_ch, Box::new(|_| a.p_bat_kw)),
        ("slack_dis", &primal.p_dis, Box::new(|_| a.p_bat_kw)),
        ("slack_e", &primal.e, Box::new(|_| a.e_bat_kwh)),
        ("slack_d", &primal.d_shed, Box::new(|t| a.demand_kw[t])),
    ];
    let mut slack: [Vec<VarId>; 4] = Default::default();
    for (k, (name, fam, cap)) in caps.iter().enumerate() {
        for t in 0..t_len {
            let s = ir.add_var(format!("{prefix}{name}[{}]", t + 1), 0.0, cap(t));
            ir.add_row(
                format!("{prefix}{name}_def[{}]", t + 1),
                "cap",
                vec![(s, 1.0), (fam[t], 1.0)],
                Sense::Eq,
                cap(t),
            );
            slack[k].push(s);
        }
    }

    let mut free = |name: &str| -> Vec<VarId> {
        (0..t_len)
            .map(|t| ir.add_var(format!("{prefix}{name}[{}]", t + 1), -m, m))
            .collect()
    };
    let lambda1 = free("lambda1");
    let storage = free("lambda_storage");
    let lambda4 = free("lambda4");
    let lambda5 = free("lambda5");
    let mu: [Vec<VarId>; 12] = std::array::from_fn(|k| {
        (0..t_len)
            .map(|t| ir.add_var(format!("{prefix}mu{}[{}]", k + 1, t + 1), 0.0, m))
            .collect()
    });

    for t in 0..t_len {
        let next = (t + 1) % t_len;
        let n = |s: &str| format!("{prefix}stat_{s}[{}]", t + 1);
        let rows: [(String, Vec<(VarId, f64)>, f64); 8] = [
            (
                n("p_plus"),
                vec![(prices[t], 1.0), (lambda1[t], 1.0), (lambda4[t], -a.sigma), (mu[0][t], -1.0)],
                0.0,
            ),
            (
                n("p_minus"),
                vec![(prices[t], -1.0), (lambda1[t], -1.0), (lambda5[t], -a.sigma), (mu[1][t], -1.0)],
                0.0,
            ),
            (n("q_plus"), vec![(lambda4[t], 1.0), (mu[2][t], -1.0)], 0.0),
            (n("q_minus"), vec![(lambda5[t], 1.0), (mu[3][t], -1.0)], 0.0),
            (
                n("p_ch"),
                vec![(lambda1[t], -1.0), (storage[t], -a.eta_ch), (mu[4][t], -1.0), (mu[8][t], 1.0)],
                0.0,
            ),
            (
                n("p_dis"),
                vec![(lambda1[t], 1.0), (storage[t], a.eta_dis), (mu[5][t], -1.0), (mu[9][t], 1.0)],
                0.0,
            ),
            (
                n("e"),
                vec![(storage[t], 1.0), (storage[next], -1.0), (mu[6][t], -1.0), (mu[10][t], 1.0)],
                0.0,
            ),
            (n("d_shed"), vec![(lambda1[t], 1.0), (mu[7][t], -1.0), (mu[11][t], 1.0)], -alpha_shed),
        ];
        for (name, terms, rhs) in rows {
            ir.add_row(name, "stationarity", terms, Sense::Eq, rhs);
        }
    }

    let mut pairs = Vec::with_capacity(12 * t_len);
    for t in 0..t_len {
        let sides = [
            primal.p_plus[t],
            primal.p_minus[t],
            primal.q_plus[t],
            primal.q_minus[t],
            primal.p_ch[t],
            primal.p_dis[t],
            primal.e[t],
            primal.d_shed[t],
            slack[0][t],
            slack[1][t],
            slack[2][t],
            slack[3][t],
        ];
        for (k, side) in sides.into_iter().enumerate() {
            pairs.push((mu[k][t], side));
        }
    }

    KktBlock {
        primal,
        slack,
        duals: DualVars {
            lambda1,
            storage,
            lambda4,
            lambda5,
            mu,
        },
        pairs,
        dual_bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn battery(d: Vec<f64>) -> ProsumerAssets {
        ProsumerAssets {
            p_bat_kw: 1.0,
            e_bat_kwh: 1.0,
            ..ProsumerAssets::inflexible(1, 1, d)
        }
    }

    #[test]
    fn inflexible_consumer_buys_its_demand() {
        let a = ProsumerAssets::inflexible(1, 1, vec![1.0, 1.0]);
        let (d, duals) = solve_dispatch(&a, &[2.0, 2.0], 75.0).unwrap();
        assert!((d.objective - 4.0).abs() < 1e-9);
        assert!(d.d_shed.iter().all(|v| v.abs() < 1e-12));
        assert!((d.net(0) - 1.0).abs() < 1e-12 && (d.net(1) - 1.0).abs() < 1e-12);
        let pay = payment_identity(&a, 75.0, &d, &duals, 1e-9).unwrap();
        assert!((pay - 4.0).abs() < 1e-9);
    }

    #[test]
    fn battery_shifts_to_the_cheap_period() {
        let a = battery(vec![1.0, 1.0]);
        let (d, duals) = solve_dispatch(&a, &[1.0, 3.0], 75.0).unwrap();
        assert!((d.objective - 2.0).abs() < 1e-9);
        assert!((d.p_plus[0] - 2.0).abs() < 1e-9 && d.p_plus[1].abs() < 1e-9);
        assert!((d.e[0] - 1.0).abs() < 1e-9 && d.e[1].abs() < 1e-9);
        let pay = payment_identity(&a, 75.0, &d, &duals, 1e-9).unwrap();
        assert!((pay - 2.0).abs() < 1e-9);
    }

    #[test]
    fn sigma_zero_forces_no_reactive_power() {
        let a = ProsumerAssets::inflexible(1, 1, vec![2.0]);
        let (d, _) = solve_dispatch(&a, &[1.0], 75.0).unwrap();
        assert_eq!(d.q_plus, vec![0.0]);
        assert_eq!(d.q_minus, vec![0.0]);
    }

    #[test]
    fn dimensions_of_the_lp() {
        let a = battery(vec![1.0; 24]);
        let lp = build_lower_lp(&a, &[1.0; 24], 75.0).unwrap();
        assert_eq!(lp.ir.num_vars(), 8 * 24);
        assert_eq!(lp.ir.rows_tagged("balance").count(), 24);
        assert_eq!(lp.ir.rows_tagged("storage").count(), 24);
        assert_eq!(lp.ir.rows_tagged("reactive").count(), 48);
        assert!(build_lower_lp(&a, &[1.0; 23], 75.0).is_err());
    }

    #[test]
    fn stale_duals_are_rejected() {
        let a = battery(vec![1.0, 1.0]);
        let (d, mut duals) = solve_dispatch(&a, &[1.0, 3.0], 75.0).unwrap();
        // p_plus[0] > 0, so a positive mu1 there breaks complementarity.
        duals.mu[0][0] = 0.5;
        assert!(matches!(
            payment_identity(&a, 75.0, &d, &duals, 1e-6),
            Err(CoreError::StaleDuals { .. })
        ));
    }

    #[test]
    fn kkt_block_counts() {
        let a = ProsumerAssets::inflexible(1, 1, vec![1.0, 1.0, 1.0]);
        let mut ir = ModelIr::new();
        let x: Vec<VarId> = (0..3).map(|t| ir.add_var(format!("x{t}"), 0.0, 10.0)).collect();
        let block = emit_kkt(&mut ir, "m1.", &a, &x, 75.0, 100.0);
        assert_eq!(block.pairs.len(), 12 * 3);
        assert_eq!(ir.rows_tagged("stationarity").count(), 8 * 3);
        // Battery-free: the storage variables exist but are fixed at zero.
        assert!(block.primal.p_ch.iter().all(|v| ir.var(*v).upper == 0.0));
        assert!(ir.validate().is_ok());
    }
}
