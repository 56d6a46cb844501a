//! Capacity curves and the two reference regimes without a community
//! manager: no demand response, and members reacting to spot prices alone.

use ecprice_solver::simplex::{self, LpProblem, LpStatus, SimplexOptions};
use ecprice_solver::ModelIr;
use rayon::prelude::*;

use crate::dispatch::{add_primal_block, DispatchSolution};
use crate::error::{CoreError, Result};
use crate::instance::{Instance, ProsumerAssets};

/// Sweep settings for the capacity-limitation study.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub variation: f64,
    pub beta: f64,
    pub beta_grid: Vec<f64>,
    pub variation_grid: Vec<f64>,
}

/// `B (1 + v s_t)` with `B` the mean positive community residual demand and
/// `s_t` running from +1 at the cheapest to -1 at the dearest period.
pub fn gen_capacity_curve(lambda: &[f64], residual: &[f64], v: f64) -> Result<Vec<f64>> {
    if lambda.len() != residual.len() {
        return Err(CoreError::Dimension(format!(
            "{} prices and {} residual values",
            lambda.len(),
            residual.len()
        )));
    }
    if !(0.0..=1.0).contains(&v) {
        return Err(CoreError::Curve(format!("variation factor {v} outside [0,1]")));
    }
    if lambda.is_empty() {
        return Ok(Vec::new());
    }
    let base = residual.iter().map(|r| r.max(0.0)).sum::<f64>() / residual.len() as f64;
    let lo = lambda.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = lambda.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if v == 0.0 {
        return Ok(vec![base; lambda.len()]);
    }
    if hi <= lo {
        return Err(CoreError::Curve("flat price vector with nonzero variation".into()));
    }
    Ok(lambda
        .iter()
        .map(|l| {
            let s = 1.0 - 2.0 * (l - lo) / (hi - lo);
            base * (1.0 + v * s)
        })
        .collect())
}

/// Outcome of a reference regime, per period and per member.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BaselineResult {
    pub import_kw: Vec<f64>,
    pub export_kw: Vec<f64>,
    pub cap_kw: Vec<f64>,
    pub shed_kw: Vec<f64>,
    pub penalty_kw: Vec<f64>,
    /// Cost of each period (DKK).
    pub cost_dkk: Vec<f64>,
    pub total_cost: f64,
    /// Dispatch after curtailment (uncoordinated regime only).
    pub dispatch: Vec<DispatchSolution>,
    /// Energy cost of each member at undiscounted tariffs.
    pub member_energy_cost: Vec<f64>,
    /// Shedding cost of each member, own and imposed.
    pub member_shed_cost: Vec<f64>,
}

impl BaselineResult {
    pub fn total_penalty_cost(&self, inst: &Instance) -> f64 {
        self.penalty_kw
            .iter()
            .zip(&inst.contract.alpha_dso)
            .map(|(p, a)| p * a)
            .sum()
    }

    /// CSV with columns t, import_kw, cap_kw, shed_kw, cost_dkk.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,import_kw,cap_kw,shed_kw,cost_dkk\n");
        for t in 0..self.import_kw.len() {
            s += &format!(
                "{},{},{},{},{}\n",
                t + 1,
                self.import_kw[t],
                self.cap_kw[t],
                self.shed_kw[t],
                self.cost_dkk[t]
            );
        }
        s
    }
}

/// Import when nobody shifts load: the community's net residual demand.
pub fn baseline_no_dr(inst: &Instance) -> BaselineResult {
    let c = &inst.contract;
    let lambda = &inst.prices.lambda_spot;
    let t_len = inst.horizon();
    let mut r = BaselineResult {
        cap_kw: c.p_cap_kw.clone(),
        ..BaselineResult::default()
    };
    for t in 0..t_len {
        let net: f64 = inst.prosumers.iter().map(|p| p.demand_kw[t] - p.pv_kw[t]).sum();
        let gross: f64 = inst
            .prosumers
            .iter()
            .map(|p| (p.demand_kw[t] - p.pv_kw[t]).max(0.0))
            .sum();
        let im = net.max(0.0);
        let ex = (-net).max(0.0);
        let pen = (im - c.p_cap_kw[t]).max(0.0);
        let cost = im * (lambda[t] + c.y_im[t]) - ex * (lambda[t] - c.y_ex[t])
            + (1.0 - c.beta[t]) * c.y_im[t] * (gross - im)
            + c.alpha_dso[t] * pen;
        r.import_kw.push(im);
        r.export_kw.push(ex);
        r.shed_kw.push(0.0);
        r.penalty_kw.push(pen);
        r.cost_dkk.push(cost);
    }
    r.total_cost = r.cost_dkk.iter().sum();
    r
}

/// Cost-minimal dispatch of one member facing separate import and export
/// prices.
pub fn solve_price_taker(
    a: &ProsumerAssets,
    import_price: &[f64],
    export_price: &[f64],
    alpha_shed: f64,
) -> Result<DispatchSolution> {
    let mut ir = ModelIr::new();
    let vars = add_primal_block(&mut ir, "", a);
    for t in 0..a.demand_kw.len() {
        ir.add_objective(vars.p_plus[t], import_price[t]);
        ir.add_objective(vars.p_minus[t], -export_price[t]);
        ir.add_objective(vars.d_shed[t], alpha_shed);
    }
    let sol = simplex::solve(&LpProblem::from_model(&ir), &SimplexOptions::default());
    if sol.status != LpStatus::Optimal {
        return Err(CoreError::Dispatch {
            prosumer: a.id,
            msg: format!("price-taker LP ended with {:?}", sol.status),
        });
    }
    let mut d = DispatchSolution::from_values(&vars, &sol.x);
    d.objective = sol.objective;
    Ok(d)
}

/// Every member minimizes its own bill at spot price plus tariffs, blind
/// to the capacity limit. Import above the physical feeder capacity is
/// curtailed pro rata to each member's purchase and paid at the value of
/// lost load; import above the contract limit draws the DSO penalty.
pub fn baseline_uncoordinated(inst: &Instance) -> Result<BaselineResult> {
    let c = &inst.contract;
    let lambda = &inst.prices.lambda_spot;
    let t_len = inst.horizon();
    let import_price: Vec<f64> = (0..t_len).map(|t| lambda[t] + c.y_im[t]).collect();
    let export_price: Vec<f64> = (0..t_len).map(|t| lambda[t] - c.y_ex[t]).collect();
    let mut dispatch: Vec<DispatchSolution> = inst
        .prosumers
        .par_iter()
        .map(|a| solve_price_taker(a, &import_price, &export_price, c.alpha_shed))
        .collect::<Result<_>>()?;

    let members = dispatch.len();
    let mut r = BaselineResult {
        cap_kw: c.p_cap_kw.clone(),
        member_energy_cost: vec![0.0; members],
        member_shed_cost: vec![0.0; members],
        ..BaselineResult::default()
    };
    for t in 0..t_len {
        let net: f64 = dispatch.iter().map(|d| d.net(t)).sum();
        let bought: f64 = dispatch.iter().map(|d| d.p_plus[t]).sum();
        let excess = (net - inst.network.p_grid_kw).max(0.0);
        let mut shed_t = dispatch.iter().map(|d| d.d_shed[t]).sum::<f64>();
        if excess > 0.0 && bought > 0.0 {
            for (d, a) in dispatch.iter_mut().zip(&inst.prosumers) {
                let cut = excess * d.p_plus[t] / bought;
                d.p_plus[t] -= cut;
                d.q_plus[t] = a.sigma * d.p_plus[t];
                d.d_shed[t] += cut;
                shed_t += cut;
            }
        }
        let net = net - excess;
        let im = net.max(0.0);
        let ex = (-net).max(0.0);
        let pen = (im - c.p_cap_kw[t]).max(0.0);
        let mut cost = c.alpha_dso[t] * pen;
        for (k, d) in dispatch.iter().enumerate() {
            let energy = d.p_plus[t] * import_price[t] - d.p_minus[t] * export_price[t];
            let shed = c.alpha_shed * d.d_shed[t];
            r.member_energy_cost[k] += energy;
            r.member_shed_cost[k] += shed;
            cost += energy + shed;
        }
        r.import_kw.push(im);
        r.export_kw.push(ex);
        r.shed_kw.push(shed_t);
        r.penalty_kw.push(pen);
        r.cost_dkk.push(cost);
    }
    for (k, d) in dispatch.iter_mut().enumerate() {
        d.objective = r.member_energy_cost[k] + r.member_shed_cost[k];
    }
    r.dispatch = dispatch;
    r.total_cost = r.cost_dkk.iter().sum();
    Ok(r)
}

/// External cost of every member: own energy and shedding cost in the
/// uncoordinated regime plus a residual-load share of its DSO penalty.
pub fn c_ext_from(inst: &Instance, uncoordinated: &BaselineResult) -> Result<Vec<f64>> {
    let shares = inst
        .demand_shares()
        .ok_or_else(|| CoreError::Dimension("total residual load is zero".into()))?;
    let penalty = uncoordinated.total_penalty_cost(inst);
    Ok((0..inst.prosumers.len())
        .map(|k| uncoordinated.member_energy_cost[k] + uncoordinated.member_shed_cost[k] + shares[k] * penalty)
        .collect())
}

pub fn compute_c_ext(inst: &Instance) -> Result<Vec<f64>> {
    c_ext_from(inst, &baseline_uncoordinated(inst)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::tests::tiny;

    #[test]
    fn curve_examples() {
        let lam = [1.0, 2.0, 3.0];
        let res = [4.0, 4.0, 4.0];
        assert_eq!(gen_capacity_curve(&lam, &res, 1.0).unwrap(), vec![8.0, 4.0, 0.0]);
        assert_eq!(gen_capacity_curve(&lam, &res, 0.5).unwrap(), vec![6.0, 4.0, 2.0]);
        assert_eq!(gen_capacity_curve(&lam, &res, 0.0).unwrap(), vec![4.0; 3]);
        assert!(gen_capacity_curve(&[2.0, 2.0], &[1.0, 1.0], 0.5).is_err());
        assert_eq!(gen_capacity_curve(&[2.0, 2.0], &[1.0, 3.0], 0.0).unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn empty_community_costs_nothing() {
        let mut inst = tiny();
        inst.prosumers[0].demand_kw = vec![0.0, 0.0];
        let r = baseline_no_dr(&inst);
        assert_eq!(r.import_kw, vec![0.0, 0.0]);
        assert_eq!(r.total_cost, 0.0);
    }

    #[test]
    fn flat_member_matches_no_dr() {
        let mut inst = tiny();
        inst.prices.lambda_spot = vec![1.0, 1.0];
        inst.prosumers[0].demand_kw = vec![1.5, 1.5];
        let a = baseline_no_dr(&inst);
        let b = baseline_uncoordinated(&inst).unwrap();
        assert_eq!(a.import_kw, b.import_kw);
        assert_eq!(b.shed_kw, vec![0.0, 0.0]);
    }

    #[test]
    fn pro_rata_curtailment() {
        let mut inst = tiny();
        inst.prosumers = vec![
            ProsumerAssets::inflexible(1, 1, vec![6.0]),
            ProsumerAssets::inflexible(2, 1, vec![6.0]),
        ];
        inst.prices.lambda_spot = vec![1.0];
        for v in [
            &mut inst.contract.p_cap_kw,
            &mut inst.contract.alpha_dso,
            &mut inst.contract.beta,
            &mut inst.contract.y_im,
            &mut inst.contract.y_ex,
        ] {
            v.truncate(1);
        }
        inst.network.p_grid_kw = 10.0;
        let r = baseline_uncoordinated(&inst).unwrap();
        // 12 kW against a 10 kW feeder: one sixth of each purchase is cut.
        for d in &r.dispatch {
            assert!((d.d_shed[0] - 1.0).abs() < 1e-12);
            assert!((d.p_plus[0] - 5.0).abs() < 1e-12);
        }
        assert!((r.shed_kw[0] - 2.0).abs() < 1e-12);
        assert!((r.import_kw[0] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn c_ext_of_an_inflexible_member() {
        let mut inst = tiny();
        inst.prosumers[0].demand_kw = vec![1.0; 24];
        inst.prosumers[0].pv_kw = vec![0.0; 24];
        inst.prices.lambda_spot = vec![1.5; 24];
        let c = &mut inst.contract;
        c.p_cap_kw = vec![5.0; 24];
        c.alpha_dso = vec![10.0; 24];
        c.beta = vec![0.6; 24];
        c.y_im = vec![0.5; 24];
        c.y_ex = vec![0.1; 24];
        let ext = compute_c_ext(&inst).unwrap();
        assert!((ext[0] - 48.0).abs() < 1e-9);
    }
}
