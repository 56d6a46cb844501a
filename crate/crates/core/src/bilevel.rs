//! Single-level form of the pricing game: the manager's problem with every
//! member's dispatch LP replaced by its optimality system, and each
//! member's payment written through its multipliers.

use std::path::Path;
use std::process::Command;
use std::time::Duration;

use ecprice_solver::interchange::{read_solution, write_interchange};
use ecprice_solver::{
    branch_and_bound_sos1, BnbOptions, Heuristic, ModelIr, Sense, SolveResult, SolveStatus, VarId,
};
use rayon::prelude::*;

use crate::dispatch::{
    dual_bound, emit_kkt, primal_slacks, solve_dispatch, DispatchSolution, DualSolution, KktBlock,
};
use crate::instance::ProsumerAssets;
use crate::error::{CoreError, Result};
use crate::instance::{Backend, DistributionMode, Instance};
use crate::network::{build_lindistflow, CommunityState, ConeMode, MemberInjection, NetworkVars};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PriceSchedule {
    /// `[member][t]`, DKK/kWh.
    pub x: Vec<Vec<f64>>,
    pub x_bar: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SettlementRecord {
    /// `sum_t x (p+ - p-)` per member.
    pub payment: Vec<f64>,
    pub c_ext: Vec<f64>,
    pub w_minus: Vec<f64>,
    pub w_plus: Vec<f64>,
    pub v_plus: f64,
    pub v_minus: f64,
    pub w_hat_minus: f64,
    pub w_hat_plus: f64,
    /// Residual-load shares `Delta_i / sum Delta`.
    pub shares: Vec<f64>,
}

impl SettlementRecord {
    /// Splits `payment - c_ext` into its positive and negative parts.
    pub fn from_payments(payment: Vec<f64>, c_ext: Vec<f64>, shares: Vec<f64>) -> Self {
        let diff: Vec<f64> = payment.iter().zip(&c_ext).map(|(p, c)| p - c).collect();
        let w_plus: Vec<f64> = diff.iter().map(|d| d.max(0.0)).collect();
        let w_minus: Vec<f64> = diff.iter().map(|d| (-d).max(0.0)).collect();
        let n = payment.len().max(1) as f64;
        let v_plus: f64 = w_plus.iter().sum();
        let v_minus: f64 = w_minus.iter().sum();
        Self {
            payment,
            c_ext,
            w_hat_minus: v_minus / n,
            w_hat_plus: v_plus / n,
            w_minus,
            w_plus,
            v_plus,
            v_minus,
            shares,
        }
    }
}

/// Community cost split into the parts of the manager's objective.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CostBreakdown {
    /// Import and export at the feeder head, spot price plus tariffs.
    pub energy: f64,
    /// Discounted tariff on internal flows.
    pub internal_tariff: f64,
    pub penalty: f64,
    pub shed: f64,
}

impl CostBreakdown {
    /// Recomputes every term from the dispatch and the flow state.
    pub fn evaluate(inst: &Instance, dispatch: &[DispatchSolution], state: &CommunityState) -> Self {
        Self::per_period(inst, dispatch, state)
            .into_iter()
            .fold(Self::default(), |a, b| Self {
                energy: a.energy + b.energy,
                internal_tariff: a.internal_tariff + b.internal_tariff,
                penalty: a.penalty + b.penalty,
                shed: a.shed + b.shed,
            })
    }

    /// The same terms for each period separately.
    pub fn per_period(inst: &Instance, dispatch: &[DispatchSolution], state: &CommunityState) -> Vec<Self> {
        let c = &inst.contract;
        let lambda = &inst.prices.lambda_spot;
        (0..inst.horizon())
            .map(|t| {
                let bought: f64 = dispatch.iter().map(|d| d.p_plus[t]).sum();
                Self {
                    energy: state.p_im[t] * (lambda[t] + c.y_im[t]) - state.p_ex[t] * (lambda[t] - c.y_ex[t]),
                    internal_tariff: (1.0 - c.beta[t]) * c.y_im[t] * (bought - state.p_im[t]),
                    penalty: c.alpha_dso[t] * state.p_pen[t],
                    shed: c.alpha_shed * dispatch.iter().map(|d| d.d_shed[t]).sum::<f64>(),
                }
            })
            .collect()
    }

    /// What the members must cover: everything but the shedding cost,
    /// which each member bears itself.
    pub fn budget(&self) -> f64 {
        self.energy + self.internal_tariff + self.penalty
    }

    pub fn total(&self) -> f64 {
        self.budget() + self.shed
    }
}

/// Handles of the regularizer block.
#[derive(Clone, Debug)]
pub struct RegularizerVars {
    pub w_hat_minus: Option<VarId>,
    pub w_hat_plus: Option<VarId>,
    pub epigraphs: Vec<VarId>,
}

/// The assembled model with handles to everything the extraction needs.
#[derive(Clone, Debug)]
pub struct Assembly {
    pub ir: ModelIr,
    pub x: Vec<Vec<VarId>>,
    pub x_bar: VarId,
    pub z: VarId,
    pub blocks: Vec<KktBlock>,
    pub network: NetworkVars,
    pub p_pen: Vec<VarId>,
    pub pay: Vec<VarId>,
    pub w_plus: Vec<VarId>,
    pub w_minus: Vec<VarId>,
    pub v_plus: VarId,
    pub v_minus: VarId,
    pub c_ext: Vec<f64>,
    /// Bound on every member's benefit or loss, from the instance data.
    pub w_bound: f64,
    pub regularizer: Option<RegularizerVars>,
}

/// Largest possible `|payment|` of a member with prices up to `cap`.
fn payment_bound(inst: &Instance, k: usize, cap: f64) -> f64 {
    let a = &inst.prosumers[k];
    (0..inst.horizon())
        .map(|t| cap * (a.demand_kw[t].max(a.pv_kw[t]) + a.p_bat_kw))
        .sum()
}

/// Builds the manager's problem with all member KKT blocks, without any
/// benefit-distribution term.
pub fn assemble_base(inst: &Instance, c_ext: &[f64]) -> Result<Assembly> {
    let members = inst.prosumers.len();
    if c_ext.len() != members {
        return Err(CoreError::Dimension(format!(
            "{} external costs for {members} members",
            c_ext.len()
        )));
    }
    let t_len = inst.horizon();
    let c = &inst.contract;
    let lambda = &inst.prices.lambda_spot;
    let cap = c.alpha_shed;
    let mut ir = ModelIr::new();

    let x_bar = ir.add_var("x_bar", 0.0, cap);
    let z = ir.add_var("z", 0.0, inst.config.rho * cap * cap);
    ir.add_objective(z, 1.0);
    ir.add_quad("price_regularization", z, x_bar, inst.config.rho);

    let mut x = Vec::with_capacity(members);
    let mut blocks = Vec::with_capacity(members);
    for a in &inst.prosumers {
        let prefix = format!("m{}.", a.id);
        let xi: Vec<VarId> = (0..t_len)
            .map(|t| ir.add_var(format!("{prefix}x[{}]", t + 1), 0.0, cap))
            .collect();
        for (t, &v) in xi.iter().enumerate() {
            ir.add_row(
                format!("{prefix}price_cap[{}]", t + 1),
                "price_cap",
                vec![(v, 1.0), (x_bar, -1.0)],
                Sense::Le,
                0.0,
            );
        }
        let block = emit_kkt(&mut ir, &prefix, a, &xi, c.alpha_shed, dual_bound(a, cap, c.alpha_shed));
        for (k, &(mu, side)) in block.pairs.iter().enumerate() {
            ir.add_sos1(format!("{prefix}comp{k}"), vec![mu, side]);
        }
        x.push(xi);
        blocks.push(block);
    }

    let injections: Vec<MemberInjection> = inst
        .prosumers
        .iter()
        .zip(&blocks)
        .map(|(a, b)| MemberInjection {
            node: a.node,
            p: (0..t_len)
                .map(|t| vec![(b.primal.p_plus[t], 1.0), (b.primal.p_minus[t], -1.0)])
                .collect(),
            q: (0..t_len)
                .map(|t| vec![(b.primal.q_plus[t], 1.0), (b.primal.q_minus[t], -1.0)])
                .collect(),
        })
        .collect();
    let network = build_lindistflow(&mut ir, &inst.network, t_len, &injections, ConeMode::Exact)?;

    let p_pen: Vec<VarId> = (0..t_len)
        .map(|t| ir.add_var(format!("p_pen[{}]", t + 1), 0.0, inst.network.p_grid_kw))
        .collect();
    for t in 0..t_len {
        ir.add_row(
            format!("penalty[{}]", t + 1),
            "penalty",
            vec![(p_pen[t], 1.0), (network.p_im[t], -1.0)],
            Sense::Ge,
            -c.p_cap_kw[t],
        );
    }

    // Objective and budget share the same community cost terms.
    let mut cost_terms: Vec<(VarId, f64)> = Vec::new();
    for t in 0..t_len {
        let internal = (1.0 - c.beta[t]) * c.y_im[t];
        cost_terms.push((network.p_im[t], lambda[t] + c.y_im[t] - internal));
        cost_terms.push((network.p_ex[t], -(lambda[t] - c.y_ex[t])));
        for b in &blocks {
            cost_terms.push((b.primal.p_plus[t], internal));
        }
        cost_terms.push((p_pen[t], c.alpha_dso[t]));
    }
    for &(v, a) in &cost_terms {
        ir.add_objective(v, a);
    }
    for b in &blocks {
        for &d in &b.primal.d_shed {
            ir.add_objective(d, c.alpha_shed);
        }
    }

    let mut pay = Vec::with_capacity(members);
    let mut w_plus = Vec::with_capacity(members);
    let mut w_minus = Vec::with_capacity(members);
    let mut w_bound = 0.0f64;
    for (k, (a, b)) in inst.prosumers.iter().zip(&blocks).enumerate() {
        let prefix = format!("m{}.", a.id);
        let bound = payment_bound(inst, k, cap) + c_ext[k].abs();
        w_bound = w_bound.max(bound);
        let p = ir.add_var(format!("{prefix}payment"), -bound, bound);
        let mut terms = vec![(p, 1.0)];
        terms.extend(b.payment_terms(a, c.alpha_shed).into_iter().map(|(v, c)| (v, -c)));
        ir.add_row(format!("{prefix}payment_def"), "payment", terms, Sense::Eq, 0.0);
        let wp = ir.add_var(format!("{prefix}w_plus"), 0.0, 2.0 * bound);
        let wm = ir.add_var(format!("{prefix}w_minus"), 0.0, 2.0 * bound);
        ir.add_row(
            format!("{prefix}rationality"),
            "rationality",
            vec![(p, 1.0), (wp, -1.0), (wm, 1.0)],
            Sense::Eq,
            c_ext[k],
        );
        pay.push(p);
        w_plus.push(wp);
        w_minus.push(wm);
    }
    let w_bound = 2.0 * w_bound;

    let mut budget = cost_terms.iter().map(|&(v, a)| (v, -a)).collect::<Vec<_>>();
    budget.extend(pay.iter().map(|&p| (p, 1.0)));
    ir.add_row("budget_balance", "budget", budget, Sense::Eq, 0.0);

    let total_w = w_bound * members as f64;
    let v_plus = ir.add_var("v_plus", 0.0, total_w);
    let v_minus = ir.add_var("v_minus", 0.0, total_w);
    let mut t_plus: Vec<(VarId, f64)> = w_plus.iter().map(|&w| (w, 1.0)).collect();
    t_plus.push((v_plus, -1.0));
    ir.add_row("loss_total", "benefit_sos", t_plus, Sense::Le, 0.0);
    let mut t_minus: Vec<(VarId, f64)> = w_minus.iter().map(|&w| (w, 1.0)).collect();
    t_minus.push((v_minus, -1.0));
    ir.add_row("benefit_total", "benefit_sos", t_minus, Sense::Le, 0.0);
    ir.add_sos1("benefit", vec![v_plus, v_minus]);

    Ok(Assembly {
        ir,
        x,
        x_bar,
        z,
        blocks,
        network,
        p_pen,
        pay,
        w_plus,
        w_minus,
        v_plus,
        v_minus,
        c_ext: c_ext.to_vec(),
        w_bound,
        regularizer: None,
    })
}

/// Adds `gamma * sum_i (w_i - target_i)^2` for both slack families, where
/// each target is `share_i * sum_j w_j` (`share_i = 1/I` gives the mean).
fn add_share_regularizer(asm: &mut Assembly, gamma: f64, shares: &[f64], with_means: bool) {
    let members = asm.w_minus.len();
    let bound = asm.w_bound;
    let ir = &mut asm.ir;
    let mut regs = RegularizerVars {
        w_hat_minus: None,
        w_hat_plus: None,
        epigraphs: Vec::new(),
    };
    for (label, ws) in [("minus", asm.w_minus.clone()), ("plus", asm.w_plus.clone())] {
        let mean = if with_means {
            let m = ir.add_var(format!("w_hat_{label}"), 0.0, bound);
            let mut terms = vec![(m, members as f64)];
            terms.extend(ws.iter().map(|&w| (w, -1.0)));
            ir.add_row(format!("mean_{label}"), "regularizer", terms, Sense::Eq, 0.0);
            if label == "minus" {
                regs.w_hat_minus = Some(m);
            } else {
                regs.w_hat_plus = Some(m);
            }
            Some(m)
        } else {
            None
        };
        for (i, &w) in ws.iter().enumerate() {
            let dev = ir.add_var(format!("dev_{label}[{i}]"), -bound, bound);
            let mut terms = vec![(dev, 1.0), (w, -1.0)];
            match mean {
                Some(m) => terms.push((m, 1.0)),
                None => terms.extend(ws.iter().map(|&wj| (wj, shares[i]))),
            }
            ir.add_row(format!("dev_{label}_def[{i}]"), "regularizer", terms, Sense::Eq, 0.0);
            let epi = ir.add_var(format!("reg_{label}[{i}]"), 0.0, gamma * bound * bound);
            ir.add_quad(format!("reg_{label}[{i}]"), epi, dev, gamma);
            ir.add_objective(epi, 1.0);
            regs.epigraphs.push(epi);
        }
    }
    asm.regularizer = Some(regs);
}

pub fn add_equal_regularizer(asm: &mut Assembly, gamma: f64) {
    let n = asm.w_minus.len().max(1);
    add_share_regularizer(asm, gamma, &vec![1.0 / n as f64; n], true);
}

pub fn add_proportional_regularizer(asm: &mut Assembly, gamma: f64, shares: &[f64]) -> Result<()> {
    if shares.len() != asm.w_minus.len() {
        return Err(CoreError::Dimension("one share per member required".into()));
    }
    if shares.iter().all(|s| *s == 0.0) || shares.iter().any(|s| !s.is_finite()) {
        return Err(CoreError::Dimension("residual-load shares are all zero".into()));
    }
    add_share_regularizer(asm, gamma, shares, false);
    Ok(())
}

/// Full single-level model for the configured distribution mode.
pub fn assemble_single_level(inst: &Instance, c_ext: &[f64], mode: DistributionMode) -> Result<Assembly> {
    let mut asm = assemble_base(inst, c_ext)?;
    let gamma = inst.config.gamma;
    match mode {
        DistributionMode::None => {}
        DistributionMode::Equal => add_equal_regularizer(&mut asm, gamma),
        DistributionMode::Proportional => {
            let shares = inst
                .demand_shares()
                .ok_or_else(|| CoreError::Dimension("total residual load is zero".into()))?;
            add_proportional_regularizer(&mut asm, gamma, &shares)?;
        }
    }
    Ok(asm)
}

/// Node and time limits of one solve.
#[derive(Clone, Debug, PartialEq)]
pub struct Budget {
    pub node_limit: usize,
    pub time_limit: Duration,
    pub parallel: bool,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            node_limit: 200_000,
            time_limit: Duration::from_secs(600),
            parallel: true,
        }
    }
}

pub fn bnb_options(inst: &Instance, budget: &Budget) -> BnbOptions {
    let mut o = BnbOptions {
        node_limit: budget.node_limit,
        time_limit: budget.time_limit,
        rel_gap: inst.config.gap_tol,
        parallel: budget.parallel,
        ..BnbOptions::default()
    };
    o.simplex.feasibility_tol = inst.config.feasibility_tol;
    o
}

fn solve_external(ir: &ModelIr, command: &str) -> Result<SolveResult> {
    let dir = std::env::temp_dir().join(format!("ecprice-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|source| CoreError::Io {
        path: dir.clone(),
        source,
    })?;
    let model = dir.join("model.txt");
    let solution = dir.join("solution.txt");
    write_interchange(ir, &model)?;
    let status = Command::new(command)
        .arg(&model)
        .arg(&solution)
        .status()
        .map_err(|source| CoreError::Io {
            path: Path::new(command).to_path_buf(),
            source,
        })?;
    if !status.success() {
        return Err(CoreError::Solver(ecprice_solver::SolverError::External(format!(
            "{command} exited with {status}"
        ))));
    }
    Ok(read_solution(ir, &solution)?)
}

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct BilevelSolution {
    pub status: SolveStatus,
    pub objective: f64,
    pub bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub wall_time: Duration,
    pub prices: PriceSchedule,
    pub dispatch: Vec<DispatchSolution>,
    pub duals: Vec<DualSolution>,
    pub state: CommunityState,
    pub settlement: SettlementRecord,
    pub costs: CostBreakdown,
}

/// For every strictly complementary pair, the side that is zero in each
/// member's own best response to `prices`. Fixing these reproduces that response
/// while leaving prices free to move wherever it stays optimal.
pub fn response_fixings(
    assets: &[ProsumerAssets],
    blocks: &[KktBlock],
    prices: &[Vec<f64>],
    alpha_shed: f64,
) -> Option<Vec<VarId>> {
    let per_member: Vec<Option<Vec<VarId>>> = assets
        .par_iter()
        .zip(blocks.par_iter())
        .zip(prices.par_iter())
        .map(|((a, b), x)| {
            let (d, duals) = solve_dispatch(a, x, alpha_shed).ok()?;
            let mut fix = Vec::with_capacity(b.pairs.len());
            for t in 0..x.len() {
                let slack = primal_slacks(a, &d, t);
                for k in 0..12 {
                    let (mu, side) = b.pairs[12 * t + k];
                    // Degenerate pairs stay open so ties among the member's
                    // optima can be broken in the leader's favour.
                    if slack[k] > 1e-9 {
                        fix.push(mu);
                    } else if duals.mu[k][t] > 1e-9 {
                        fix.push(side);
                    }
                }
            }
            Some(fix)
        })
        .collect();
    let mut out = Vec::new();
    for f in per_member {
        out.extend(f?);
    }
    Some(out)
}

impl Assembly {
    /// Primal heuristic for the native search: members' best responses to
    /// the relaxation's prices and, once, to the tariff-inclusive spot price.
    pub fn response_heuristic(&self, inst: &Instance) -> Heuristic {
        let assets = inst.prosumers.clone();
        let blocks = self.blocks.clone();
        let x_vars = self.x.clone();
        let cap = inst.contract.alpha_shed;
        let retail: Vec<f64> = (0..inst.horizon())
            .map(|t| (inst.prices.lambda_spot[t] + inst.contract.y_im[t]).clamp(0.0, cap))
            .collect();
        // Retail plus the penalty rate wherever the community would overrun the cap.
        let residual = inst.community_residual();
        let signal: Vec<f64> = (0..inst.horizon())
            .map(|t| {
                let over = residual[t] > inst.contract.p_cap_kw[t];
                (retail[t] + if over { inst.contract.alpha_dso[t] } else { 0.0 }).clamp(0.0, cap)
            })
            .collect();
        let first = std::sync::atomic::AtomicBool::new(true);
        Heuristic::new(move |v: &[f64]| {
            let mut candidates = vec![x_vars
                .iter()
                .map(|xi| xi.iter().map(|id| v[id.index()].clamp(0.0, cap)).collect::<Vec<f64>>())
                .collect::<Vec<_>>()];
            if first.swap(false, std::sync::atomic::Ordering::Relaxed) {
                candidates.push(vec![retail.clone(); assets.len()]);
                candidates.push(vec![signal.clone(); assets.len()]);
            }
            candidates
                .iter()
                .filter_map(|p| response_fixings(&assets, &blocks, p, cap))
                .collect()
        })
    }

    pub fn solve(&self, inst: &Instance, budget: &Budget) -> Result<SolveResult> {
        match &inst.config.backend {
            Backend::Native => {
                let mut opts = bnb_options(inst, budget);
                opts.heuristic = Some(self.response_heuristic(inst));
                Ok(branch_and_bound_sos1(&self.ir, &opts)?)
            }
            Backend::External { command } => solve_external(&self.ir, command),
        }
    }

    /// Reads prices, dispatch, flows and settlement off a primal vector.
    pub fn extract(&self, inst: &Instance, result: &SolveResult) -> BilevelSolution {
        let v = &result.values;
        let get = |id: VarId| v[id.index()];
        // Prices are boxed; drop round-off outside the box.
        let cap = inst.contract.alpha_shed;
        let price = |id: VarId| get(id).clamp(0.0, cap);
        let prices = PriceSchedule {
            x: self.x.iter().map(|xi| xi.iter().map(|&id| price(id)).collect()).collect(),
            x_bar: price(self.x_bar),
        };
        let mut dispatch = Vec::with_capacity(self.blocks.len());
        let mut duals = Vec::with_capacity(self.blocks.len());
        for (k, b) in self.blocks.iter().enumerate() {
            let mut d = DispatchSolution::from_values(&b.primal, v);
            d.objective = d.cost(&prices.x[k], inst.contract.alpha_shed);
            dispatch.push(d);
            duals.push(b.dual_values(v));
        }
        let (inj_p, inj_q) = nodal_injections(inst, &dispatch);
        let mut state = self.network.state(v, inj_p, inj_q);
        state.p_pen = self.p_pen.iter().map(|&id| get(id).max(0.0)).collect();
        let costs = CostBreakdown::evaluate(inst, &dispatch, &state);
        let payment: Vec<f64> = dispatch
            .iter()
            .zip(&prices.x)
            .map(|(d, x)| d.payment(x))
            .collect();
        let shares = inst.demand_shares().unwrap_or_else(|| vec![0.0; dispatch.len()]);
        let settlement = SettlementRecord::from_payments(payment, self.c_ext.clone(), shares);
        BilevelSolution {
            status: result.status,
            objective: result.objective,
            bound: result.bound,
            gap: result.gap,
            nodes: result.nodes,
            wall_time: result.wall_time,
            prices,
            dispatch,
            duals,
            state,
            settlement,
            costs,
        }
    }
}

/// Net consumption of the members at every node.
pub fn nodal_injections(inst: &Instance, dispatch: &[DispatchSolution]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = inst.network.num_nodes();
    let t_len = inst.horizon();
    let mut p = vec![vec![0.0; t_len]; n];
    let mut q = vec![vec![0.0; t_len]; n];
    for (a, d) in inst.prosumers.iter().zip(dispatch) {
        for t in 0..t_len {
            p[a.node][t] += d.p_plus[t] - d.p_minus[t];
            q[a.node][t] += d.q_plus[t] - d.q_minus[t];
        }
    }
    (p, q)
}

/// Assembles, solves and extracts in one call.
pub fn solve_bilevel(inst: &Instance, c_ext: &[f64], budget: &Budget) -> Result<BilevelSolution> {
    let asm = assemble_single_level(inst, c_ext, inst.config.mode)?;
    let result = asm.solve(inst, budget)?;
    Ok(asm.extract(inst, &result))
}
