//! Lossless LinDistFlow on the radial feeder.
//!
//! Flows and injections are in kW/kvar; they are divided by the base power
//! wherever they meet per-unit line data. Positive flow points towards the
//! reference node (node 0 imports when its flow is positive).

use ecprice_solver::polyhedral::{inscribed_polygon, HalfPlane};
use ecprice_solver::{ModelIr, Sense, VarId};

use crate::error::Result;
use crate::instance::NetworkModel;

/// Flows, voltages and grid exchange of one community day.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CommunityState {
    pub p_im: Vec<f64>,
    pub p_ex: Vec<f64>,
    pub q_im: Vec<f64>,
    pub q_ex: Vec<f64>,
    pub p_pen: Vec<f64>,
    /// Indexed `[node][t]`; entries for ids absent from the network are empty.
    pub f_p: Vec<Vec<f64>>,
    pub f_q: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    /// Net consumption of the members at each node, `[node][t]`.
    pub inj_p: Vec<Vec<f64>>,
    pub inj_q: Vec<Vec<f64>>,
}

impl CommunityState {
    /// Evaluates the flow equations for given nodal consumption: flows by
    /// aggregation from the leaves, voltages from the root. Grid exchange is
    /// the positive or negative part of the root flow; no penalty.
    pub fn from_injections(net: &NetworkModel, inj_p: Vec<Vec<f64>>, inj_q: Vec<Vec<f64>>) -> Self {
        let n = net.num_nodes();
        let t_len = inj_p.first().map_or(0, Vec::len);
        let order = net.topological_order();
        let children = net.children();
        let mut f_p = vec![Vec::new(); n];
        let mut f_q = vec![Vec::new(); n];
        for &node in order.iter().rev() {
            let fp = (0..t_len)
                .map(|t| inj_p[node][t] + children[node].iter().map(|&m| f_p[m][t]).sum::<f64>())
                .collect();
            let fq = (0..t_len)
                .map(|t| inj_q[node][t] + children[node].iter().map(|&m| f_q[m][t]).sum::<f64>())
                .collect();
            f_p[node] = fp;
            f_q[node] = fq;
        }
        let mut u = vec![Vec::new(); n];
        u[0] = vec![1.0; t_len];
        for &node in order.iter().skip(1) {
            let line = net.node(node).expect("ordered nodes exist");
            u[node] = (0..t_len)
                .map(|t| u[line.parent][t] - voltage_drop(net, line.r_pu, line.x_pu, f_p[node][t], f_q[node][t]))
                .collect();
        }
        let pos = |v: &Vec<f64>| v.iter().map(|x| x.max(0.0)).collect::<Vec<f64>>();
        let neg = |v: &Vec<f64>| v.iter().map(|x| (-x).max(0.0)).collect::<Vec<f64>>();
        Self {
            p_im: pos(&f_p[0]),
            p_ex: neg(&f_p[0]),
            q_im: pos(&f_q[0]),
            q_ex: neg(&f_q[0]),
            p_pen: vec![0.0; t_len],
            f_p,
            f_q,
            u,
            inj_p,
            inj_q,
        }
    }

    pub fn horizon(&self) -> usize {
        self.p_im.len()
    }
}

/// `2 (R f_p + X f_q)` in per-unit for flows given in kW/kvar.
pub fn voltage_drop(net: &NetworkModel, r_pu: f64, x_pu: f64, f_p: f64, f_q: f64) -> f64 {
    2.0 * (r_pu * f_p + x_pu * f_q) / net.s_base_kva
}

/// How the apparent-flow disk is represented.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConeMode {
    Exact,
    Polygon(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub enum ConeRows {
    /// `f_p^2 + f_q^2 <= bound` in per-unit.
    Exact { bound: f64 },
    /// Facets `nx f_p + ny f_q <= rhs` in per-unit.
    Polygon(Vec<HalfPlane>),
}

pub fn cone_rows(s_sq_max: f64, mode: ConeMode) -> Result<ConeRows> {
    Ok(match mode {
        ConeMode::Exact => ConeRows::Exact { bound: s_sq_max },
        ConeMode::Polygon(k) => ConeRows::Polygon(inscribed_polygon(s_sq_max.max(0.0).sqrt(), k)?),
    })
}

/// Model handles of the network block; per-node vectors are indexed by node
/// id and empty for absent ids.
#[derive(Clone, Debug)]
pub struct NetworkVars {
    pub p_im: Vec<VarId>,
    pub p_ex: Vec<VarId>,
    pub q_im: Vec<VarId>,
    pub q_ex: Vec<VarId>,
    pub f_p: Vec<Vec<VarId>>,
    pub f_q: Vec<Vec<VarId>>,
    pub u: Vec<Vec<VarId>>,
}

/// Net active and reactive consumption of one member as model terms.
pub struct MemberInjection {
    pub node: usize,
    pub p: Vec<Vec<(VarId, f64)>>,
    pub q: Vec<Vec<(VarId, f64)>>,
}

/// Emits grid exchange, flow aggregation, voltage and capacity constraints.
pub fn build_lindistflow(
    ir: &mut ModelIr,
    net: &NetworkModel,
    horizon: usize,
    members: &[MemberInjection],
    mode: ConeMode,
) -> Result<NetworkVars> {
    let n = net.num_nodes();
    let per_t = |ir: &mut ModelIr, name: &str, lo: f64, hi: f64| -> Vec<VarId> {
        (0..horizon)
            .map(|t| ir.add_var(format!("{name}[{}]", t + 1), lo, hi))
            .collect()
    };
    let p_im = per_t(ir, "p_im", 0.0, net.p_grid_kw);
    let p_ex = per_t(ir, "p_ex", 0.0, net.p_grid_kw);
    let q_im = per_t(ir, "q_im", 0.0, net.q_grid_kvar);
    let q_ex = per_t(ir, "q_ex", 0.0, net.q_grid_kvar);

    let mut present = vec![false; n];
    present[0] = true;
    for node in &net.nodes {
        present[node.id] = true;
    }
    let mut f_p = vec![Vec::new(); n];
    let mut f_q = vec![Vec::new(); n];
    let mut u = vec![Vec::new(); n];
    for id in 0..n {
        if !present[id] {
            continue;
        }
        let lim = match net.node(id) {
            Some(line) => line.s_sq_max_pu.max(0.0).sqrt() * net.s_base_kva,
            None => f64::INFINITY,
        };
        f_p[id] = per_t(ir, &format!("f_p[{id}]"), -lim, lim);
        f_q[id] = per_t(ir, &format!("f_q[{id}]"), -lim, lim);
        u[id] = if id == 0 {
            per_t(ir, "u[0]", f64::NEG_INFINITY, f64::INFINITY)
        } else {
            per_t(ir, &format!("u[{id}]"), net.u_min, net.u_max)
        };
    }

    let children = net.children();
    for t in 0..horizon {
        let tt = t + 1;
        ir.add_row(
            format!("root_p[{tt}]"),
            "root_balance",
            vec![(p_im[t], 1.0), (p_ex[t], -1.0), (f_p[0][t], -1.0)],
            Sense::Eq,
            0.0,
        );
        ir.add_row(
            format!("root_q[{tt}]"),
            "root_balance",
            vec![(q_im[t], 1.0), (q_ex[t], -1.0), (f_q[0][t], -1.0)],
            Sense::Eq,
            0.0,
        );
        ir.add_row(format!("u_ref[{tt}]"), "voltage_ref", vec![(u[0][t], 1.0)], Sense::Eq, 1.0);
        for id in 0..n {
            if !present[id] {
                continue;
            }
            for (flow, pick) in [(&f_p, 0usize), (&f_q, 1)] {
                let mut terms = vec![(flow[id][t], 1.0)];
                for &m in &children[id] {
                    terms.push((flow[m][t], -1.0));
                }
                for mi in members.iter().filter(|m| m.node == id) {
                    let src = if pick == 0 { &mi.p[t] } else { &mi.q[t] };
                    terms.extend(src.iter().map(|&(v, a)| (v, -a)));
                }
                let name = if pick == 0 { "flow_p" } else { "flow_q" };
                ir.add_row(format!("{name}[{id},{tt}]"), "flow", terms, Sense::Eq, 0.0);
            }
            let Some(line) = net.node(id) else { continue };
            let k = 2.0 / net.s_base_kva;
            ir.add_row(
                format!("voltage[{id},{tt}]"),
                "voltage",
                vec![
                    (u[id][t], 1.0),
                    (u[line.parent][t], -1.0),
                    (f_p[id][t], k * line.r_pu),
                    (f_q[id][t], k * line.x_pu),
                ],
                Sense::Eq,
                0.0,
            );
            let scale = 1.0 / net.s_base_kva;
            match cone_rows(line.s_sq_max_pu, mode)? {
                ConeRows::Exact { bound } => ir.add_cone(
                    format!("line[{id},{tt}]"),
                    vec![(f_p[id][t], scale), (f_q[id][t], scale)],
                    bound,
                ),
                ConeRows::Polygon(facets) => {
                    for (j, f) in facets.iter().enumerate() {
                        ir.add_row(
                            format!("line[{id},{tt}]#{j}"),
                            "line",
                            vec![(f_p[id][t], f.nx * scale), (f_q[id][t], f.ny * scale)],
                            Sense::Le,
                            f.rhs,
                        );
                    }
                }
            }
        }
    }
    Ok(NetworkVars {
        p_im,
        p_ex,
        q_im,
        q_ex,
        f_p,
        f_q,
        u,
    })
}

impl NetworkVars {
    pub fn state(&self, x: &[f64], inj_p: Vec<Vec<f64>>, inj_q: Vec<Vec<f64>>) -> CommunityState {
        let get = |v: &Vec<VarId>| v.iter().map(|id| x[id.index()]).collect::<Vec<f64>>();
        CommunityState {
            p_im: get(&self.p_im),
            p_ex: get(&self.p_ex),
            q_im: get(&self.q_im),
            q_ex: get(&self.q_ex),
            p_pen: vec![0.0; self.p_im.len()],
            f_p: self.f_p.iter().map(get).collect(),
            f_q: self.f_q.iter().map(get).collect(),
            u: self.u.iter().map(get).collect(),
            inj_p,
            inj_q,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub check: &'static str,
    pub node: Option<usize>,
    /// 0-based period.
    pub t: usize,
    pub residual: f64,
}

/// Every violated flow constraint, evaluated against the exact disk.
pub fn check_flow_feasibility(net: &NetworkModel, state: &CommunityState, tol: f64) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut flag = |check, node, t, residual: f64| {
        if residual > tol || residual.is_nan() {
            out.push(Violation {
                check,
                node,
                t,
                residual,
            });
        }
    };
    let children = net.children();
    let ids: Vec<usize> = std::iter::once(0).chain(net.nodes.iter().map(|n| n.id)).collect();
    for t in 0..state.horizon() {
        flag("root_balance_p", None, t, (state.p_im[t] - state.p_ex[t] - state.f_p[0][t]).abs());
        flag("root_balance_q", None, t, (state.q_im[t] - state.q_ex[t] - state.f_q[0][t]).abs());
        for (name, v, cap) in [
            ("grid_p_im", state.p_im[t], net.p_grid_kw),
            ("grid_p_ex", state.p_ex[t], net.p_grid_kw),
            ("grid_q_im", state.q_im[t], net.q_grid_kvar),
            ("grid_q_ex", state.q_ex[t], net.q_grid_kvar),
        ] {
            flag(name, None, t, v - cap);
            flag("nonnegativity", None, t, -v);
        }
        flag("nonnegativity", None, t, -state.p_pen[t]);
        flag("voltage_ref", Some(0), t, (state.u[0][t] - 1.0).abs());
        for &id in &ids {
            let agg_p: f64 = children[id].iter().map(|&m| state.f_p[m][t]).sum::<f64>() + state.inj_p[id][t];
            let agg_q: f64 = children[id].iter().map(|&m| state.f_q[m][t]).sum::<f64>() + state.inj_q[id][t];
            flag("flow_p", Some(id), t, (state.f_p[id][t] - agg_p).abs());
            flag("flow_q", Some(id), t, (state.f_q[id][t] - agg_q).abs());
            let Some(line) = net.node(id) else { continue };
            let fp = state.f_p[id][t] / net.s_base_kva;
            let fq = state.f_q[id][t] / net.s_base_kva;
            flag("line_capacity", Some(id), t, fp * fp + fq * fq - line.s_sq_max_pu);
            let drop = voltage_drop(net, line.r_pu, line.x_pu, state.f_p[id][t], state.f_q[id][t]);
            flag(
                "voltage_drop",
                Some(id),
                t,
                (state.u[id][t] - state.u[line.parent][t] + drop).abs(),
            );
            flag("voltage_min", Some(id), t, net.u_min - state.u[id][t]);
            flag("voltage_max", Some(id), t, state.u[id][t] - net.u_max);
        }
    }
    out
}
