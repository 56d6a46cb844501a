//! Physical and economic data of one community day.
//!
//! All per-period quantities use a one-hour step, so kW and kWh coincide.
//! Periods are 0-based in memory and 1-based in files and messages.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// One non-reference node of the radial feeder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub parent: usize,
    pub r_pu: f64,
    pub x_pu: f64,
    /// Squared apparent-flow limit of the line to the parent, in pu².
    pub s_sq_max_pu: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkModel {
    pub s_base_kva: f64,
    pub v_base_kv: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub p_grid_kw: f64,
    pub q_grid_kvar: f64,
    /// Non-reference nodes; node 0 is implicit.
    pub nodes: Vec<Node>,
}

impl NetworkModel {
    /// Number of nodes including the reference.
    pub fn num_nodes(&self) -> usize {
        self.nodes.iter().map(|n| n.id + 1).max().unwrap_or(1)
    }

    pub fn node(&self, id: usize) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Parent of every node id (`None` for the reference and unused ids).
    pub fn parents(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.num_nodes()];
        for n in &self.nodes {
            out[n.id] = Some(n.parent);
        }
        out
    }

    /// Immediate downstream neighbours of every node id.
    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_nodes()];
        for n in &self.nodes {
            if n.parent < out.len() {
                out[n.parent].push(n.id);
            }
        }
        out
    }

    /// Path from `id` up to (and including) node 0, or `None` if the walk
    /// does not reach the root within the node count.
    pub fn upstream(&self, id: usize) -> Option<Vec<usize>> {
        let parents = self.parents();
        let mut path = vec![id];
        let mut cur = id;
        for _ in 0..=parents.len() {
            if cur == 0 {
                return Some(path);
            }
            cur = (*parents.get(cur)?)?;
            path.push(cur);
        }
        None
    }

    /// Nodes ordered so that every node comes after its parent.
    pub fn topological_order(&self) -> Vec<usize> {
        let children = self.children();
        let mut order = vec![0];
        let mut k = 0;
        while k < order.len() {
            order.extend(children[order[k]].iter().copied());
            k += 1;
        }
        order
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProsumerAssets {
    pub id: u32,
    pub node: usize,
    pub demand_kw: Vec<f64>,
    pub pv_kw: Vec<f64>,
    pub p_bat_kw: f64,
    pub e_bat_kwh: f64,
    pub eta_ch: f64,
    pub eta_dis: f64,
    pub sigma: f64,
}

impl ProsumerAssets {
    pub fn has_battery(&self) -> bool {
        self.p_bat_kw > 0.0 && self.e_bat_kwh > 0.0
    }

    /// Baseline residual load over the day.
    pub fn residual_energy(&self) -> f64 {
        self.demand_kw.iter().zip(&self.pv_kw).map(|(d, p)| d - p).sum()
    }

    /// A consumer without assets, used in tests and examples.
    pub fn inflexible(id: u32, node: usize, demand_kw: Vec<f64>) -> Self {
        let t = demand_kw.len();
        Self {
            id,
            node,
            demand_kw,
            pv_kw: vec![0.0; t],
            p_bat_kw: 0.0,
            e_bat_kwh: 0.0,
            eta_ch: 1.0,
            eta_dis: 1.0,
            sigma: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DsoContract {
    pub p_cap_kw: Vec<f64>,
    pub alpha_dso: Vec<f64>,
    pub beta: Vec<f64>,
    pub y_im: Vec<f64>,
    pub y_ex: Vec<f64>,
    pub alpha_shed: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DayAheadPrices {
    pub lambda_spot: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistributionMode {
    None,
    Equal,
    Proportional,
}

impl DistributionMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(Self::None),
            "equal" => Some(Self::Equal),
            "proportional" => Some(Self::Proportional),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Equal => "equal",
            Self::Proportional => "proportional",
        }
    }
}

impl fmt::Display for DistributionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Backend {
    Native,
    /// Process-based solver: `command <model file> <solution file>`.
    External { command: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PricingConfig {
    /// Weight of the squared maximum price.
    pub rho: f64,
    pub mode: DistributionMode,
    pub gamma: f64,
    pub feasibility_tol: f64,
    /// Relative optimality gap at which the search stops.
    pub gap_tol: f64,
    pub backend: Backend,
}

impl Default for PricingConfig {
    fn default() -> Self {
        Self {
            rho: 1e-4,
            mode: DistributionMode::None,
            gamma: 1e-6,
            feasibility_tol: 1e-9,
            gap_tol: 1e-9,
            backend: Backend::Native,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub network: NetworkModel,
    pub prosumers: Vec<ProsumerAssets>,
    pub contract: DsoContract,
    pub prices: DayAheadPrices,
    pub config: PricingConfig,
}

impl Instance {
    pub fn horizon(&self) -> usize {
        self.prices.lambda_spot.len()
    }

    /// Community residual demand per period.
    pub fn community_residual(&self) -> Vec<f64> {
        (0..self.horizon())
            .map(|t| {
                self.prosumers
                    .iter()
                    .map(|p| p.demand_kw[t] - p.pv_kw[t])
                    .sum()
            })
            .collect()
    }

    /// Members located at every node id.
    pub fn members_at(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.network.num_nodes()];
        for (k, p) in self.prosumers.iter().enumerate() {
            if p.node < out.len() {
                out[p.node].push(k);
            }
        }
        out
    }

    /// Residual-load shares used by the proportional mechanism.
    pub fn demand_shares(&self) -> Option<Vec<f64>> {
        let delta: Vec<f64> = self.prosumers.iter().map(|p| p.residual_energy()).collect();
        let total: f64 = delta.iter().sum();
        if total == 0.0 {
            return None;
        }
        Some(delta.iter().map(|d| d / total).collect())
    }

    /// Merges every `k` consecutive periods into one by averaging all
    /// profiles, prices and contract terms. Storage capacity is divided by
    /// `k`, so the model moves the same energy per period as over `k` hours
    /// and prices keep their units; every money amount of the merged model
    /// is `1/k` of the hourly one.
    pub fn aggregate_periods(&self, k: usize) -> Result<Instance> {
        let t_len = self.horizon();
        if k == 0 || t_len % k != 0 {
            return Err(CoreError::Dimension(format!(
                "horizon {t_len} is not a multiple of {k} periods"
            )));
        }
        let avg = |v: &[f64]| -> Vec<f64> { v.chunks(k).map(|c| c.iter().sum::<f64>() / k as f64).collect() };
        let mut out = self.clone();
        for p in &mut out.prosumers {
            p.demand_kw = avg(&p.demand_kw);
            p.pv_kw = avg(&p.pv_kw);
            p.e_bat_kwh /= k as f64;
        }
        let c = &mut out.contract;
        for v in [&mut c.p_cap_kw, &mut c.alpha_dso, &mut c.beta, &mut c.y_im, &mut c.y_ex] {
            *v = avg(v);
        }
        out.prices.lambda_spot = avg(&self.prices.lambda_spot);
        Ok(out)
    }
}

/// Which type invariant a diagnostic refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Invariant {
    Tree,
    LineParameters,
    VoltageBounds,
    GridCapacity,
    NegativeProfile,
    BatteryLimits,
    ZeroEfficiency,
    EfficiencyRange,
    Discount,
    CapacityLimit,
    PenaltyRate,
    SheddingCost,
    NonFinitePrice,
    Horizon,
    PricingWeights,
    NodeReference,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostic {
    pub invariant: Invariant,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Checks every type invariant; an empty list means the instance is valid.
pub fn validate_instance(inst: &Instance) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut push = |invariant, message: String| out.push(Diagnostic { invariant, message });
    let net = &inst.network;
    let horizon = inst.horizon();

    let mut seen = std::collections::HashSet::new();
    for n in &net.nodes {
        if n.id == 0 || !seen.insert(n.id) {
            push(Invariant::Tree, format!("node {} listed twice or as reference", n.id));
        }
        if !(n.r_pu >= 0.0 && n.x_pu >= 0.0) {
            push(Invariant::LineParameters, format!("negative impedance at node {}", n.id));
        }
        if !(n.s_sq_max_pu > 0.0) {
            push(Invariant::LineParameters, format!("non-positive flow limit at node {}", n.id));
        }
    }
    for n in &net.nodes {
        if net.upstream(n.id).is_none() {
            push(Invariant::Tree, format!("node {} does not reach the reference node", n.id));
        }
    }
    if !(net.u_min > 0.0 && net.u_min <= 1.0 && net.u_max >= 1.0) {
        push(
            Invariant::VoltageBounds,
            format!("voltage bounds [{}, {}] do not bracket 1", net.u_min, net.u_max),
        );
    }
    if !(net.p_grid_kw >= 0.0 && net.q_grid_kvar >= 0.0 && net.s_base_kva > 0.0) {
        push(Invariant::GridCapacity, "negative feeder capacity or non-positive base".into());
    }

    let nodes = net.num_nodes();
    let mut ids = std::collections::HashSet::new();
    for p in &inst.prosumers {
        if !ids.insert(p.id) {
            push(Invariant::NodeReference, format!("prosumer {} listed twice", p.id));
        }
        if p.node != 0 && (p.node >= nodes || net.node(p.node).is_none()) {
            push(Invariant::NodeReference, format!("prosumer {} at unknown node {}", p.id, p.node));
        }
        if p.demand_kw.len() != horizon || p.pv_kw.len() != horizon {
            push(Invariant::Horizon, format!("prosumer {} profile length differs from horizon", p.id));
        }
        for (t, (d, v)) in p.demand_kw.iter().zip(&p.pv_kw).enumerate() {
            if !(*d >= 0.0 && *v >= 0.0) {
                push(
                    Invariant::NegativeProfile,
                    format!("negative demand or PV for prosumer {} at t={}", p.id, t + 1),
                );
            }
        }
        if !(p.p_bat_kw >= 0.0 && p.e_bat_kwh >= 0.0) {
            push(Invariant::BatteryLimits, format!("negative battery limit for prosumer {}", p.id));
        }
        if p.e_bat_kwh > 0.0 || p.p_bat_kw > 0.0 {
            if p.eta_ch == 0.0 || p.eta_dis == 0.0 {
                push(
                    Invariant::ZeroEfficiency,
                    format!("zero efficiency on active battery of prosumer {}", p.id),
                );
            } else if !(p.eta_ch > 0.0 && p.eta_ch <= 1.0 && p.eta_dis > 0.0 && p.eta_dis <= 1.0) {
                push(
                    Invariant::EfficiencyRange,
                    format!("efficiency outside (0,1] for prosumer {}", p.id),
                );
            }
        }
    }

    let c = &inst.contract;
    for (name, v) in [
        ("capacity limit", &c.p_cap_kw),
        ("penalty rate", &c.alpha_dso),
        ("discount", &c.beta),
        ("import tariff", &c.y_im),
        ("export tariff", &c.y_ex),
    ] {
        if v.len() != horizon {
            push(Invariant::Horizon, format!("{name} length {} differs from horizon {horizon}", v.len()));
        }
    }
    for (t, b) in c.beta.iter().enumerate() {
        if !(0.0..=1.0).contains(b) {
            push(Invariant::Discount, format!("discount out of [0,1] at t={}", t + 1));
        }
    }
    for (t, p) in c.p_cap_kw.iter().enumerate() {
        if !(*p >= 0.0) {
            push(Invariant::CapacityLimit, format!("negative capacity limit at t={}", t + 1));
        }
    }
    for (t, a) in c.alpha_dso.iter().enumerate() {
        if !(*a >= 0.0) {
            push(Invariant::PenaltyRate, format!("negative penalty rate at t={}", t + 1));
        }
    }
    if !(c.alpha_shed > 0.0 && c.alpha_shed.is_finite()) {
        push(Invariant::SheddingCost, "value of lost load must be positive".into());
    }
    for (t, l) in inst.prices.lambda_spot.iter().enumerate() {
        if !l.is_finite() {
            push(Invariant::NonFinitePrice, format!("non-finite spot price at t={}", t + 1));
        }
    }
    if horizon == 0 {
        push(Invariant::Horizon, "empty horizon".into());
    }
    let cfg = &inst.config;
    if !(cfg.rho > 0.0 && cfg.gamma >= 0.0) {
        push(Invariant::PricingWeights, "rho must be positive and gamma nonnegative".into());
    }
    out
}
