//! End-to-end acceptance run: one PASS/FAIL line per criterion.

mod support;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use ecprice_core::baselines::compute_c_ext;
use ecprice_core::bilevel::{
    assemble_single_level, bnb_options, nodal_injections, solve_bilevel, BilevelSolution, Budget,
};
use ecprice_core::cases::random_small;
use ecprice_core::dispatch::{payment_identity, solve_dispatch};
use ecprice_core::instance::{DistributionMode, Instance};
use ecprice_core::network::{check_flow_feasibility, CommunityState};
use ecprice_core::validation::{benefit_stats, check_solution};
use ecprice_harness::report::report_prices;
use ecprice_harness::run::{run_case, RunReport};
use ecprice_harness::sweep::sweep_heatmap;
use ecprice_harness::RunConfig;
use ecprice_solver::SolveStatus;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use support::{dispatch_dp, enumerate_sos1, lattice_household};

type Outcome = Result<String, String>;

/// A solution some criterion accepted, kept for the cross-cutting checks.
struct Accepted {
    label: String,
    inst: Instance,
    solution: BilevelSolution,
}

fn desk_config() -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/desk/desk.cfg");
    RunConfig::load(&path).expect("desk configuration")
}

fn lower_level_oracle() -> (Outcome, Outcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_obj = 0.0f64;
    let mut worst_pay = 0.0f64;
    let mut obj_fail = None;
    let mut pay_fail = None;
    let mut lp_time = Duration::ZERO;
    for k in 0..200 {
        let (a, x, alpha) = lattice_household(&mut rng, k + 1);
        let started = Instant::now();
        let solved = solve_dispatch(&a, &x, alpha);
        lp_time += started.elapsed();
        let (d, duals) = match solved {
            Ok(s) => s,
            Err(e) => {
                obj_fail.get_or_insert(format!("household {k}: {e}"));
                continue;
            }
        };
        let lp = d.cost(&x, alpha);
        // Refine the grid; the finest one carries every vertex level.
        let oracle = [0.25, 0.1, 0.05]
            .iter()
            .map(|&g| dispatch_dp(&a, &x, alpha, g))
            .fold(f64::INFINITY, f64::min);
        let rel = (oracle - lp).abs() / lp.abs().max(oracle.abs()).max(1e-300);
        let ok = (oracle - lp).abs() <= 1e-4 * lp.abs().max(oracle.abs()) + 1e-9 && oracle >= lp - 1e-9;
        if (oracle - lp).abs() > 1e-9 {
            worst_obj = worst_obj.max(rel);
        }
        if !ok {
            obj_fail.get_or_insert(format!("household {k}: lp {lp} oracle {oracle}"));
        }
        let pay = d.payment(&x);
        match payment_identity(&a, alpha, &d, &duals, 1e-7) {
            Ok(via_duals) => {
                let r = (pay - via_duals).abs() / (1.0 + pay.abs());
                worst_pay = worst_pay.max(r);
                if r > 1e-6 {
                    pay_fail.get_or_insert(format!("household {k}: payment {pay} identity {via_duals}"));
                }
            }
            Err(e) => {
                pay_fail.get_or_insert(format!("household {k}: {e}"));
            }
        }
    }
    let timing = if lp_time < Duration::from_secs(10) {
        None
    } else {
        Some(format!("lower LPs took {lp_time:.1?}"))
    };
    let c1 = match obj_fail.or(timing) {
        None => Ok(format!("200 households, worst relative gap {worst_obj:.1e}, LPs in {lp_time:.2?}")),
        Some(e) => Err(e),
    };
    let c2 = match pay_fail {
        None => Ok(format!("worst scaled residual {worst_pay:.1e}")),
        Some(e) => Err(e),
    };
    (c1, c2)
}

/// Instances small enough to enumerate: (seed, members, periods, mode).
const PANEL: [(u64, usize, usize, DistributionMode); 12] = [
    (1, 1, 4, DistributionMode::None),
    (2, 1, 4, DistributionMode::None),
    (3, 1, 4, DistributionMode::None),
    (1, 2, 3, DistributionMode::None),
    (2, 2, 3, DistributionMode::None),
    (3, 2, 3, DistributionMode::None),
    (1, 2, 4, DistributionMode::None),
    (2, 2, 4, DistributionMode::None),
    (3, 2, 4, DistributionMode::None),
    (4, 2, 4, DistributionMode::None),
    (5, 2, 3, DistributionMode::Equal),
    (6, 2, 3, DistributionMode::Proportional),
];

fn enumeration(accepted: &mut Vec<Accepted>) -> Outcome {
    let budget = Budget {
        node_limit: 1_000_000,
        time_limit: Duration::from_secs(120),
        parallel: false,
    };
    let mut lines = Vec::new();
    for &(seed, members, horizon, mode) in &PANEL {
        let label = format!("random_small({seed}, {members}, {horizon}) {mode}");
        let mut inst = random_small(seed, members, horizon).map_err(|e| format!("{label}: {e}"))?;
        inst.config.mode = mode;
        let c_ext = compute_c_ext(&inst).map_err(|e| format!("{label}: {e}"))?;
        let asm = assemble_single_level(&inst, &c_ext, mode).map_err(|e| format!("{label}: {e}"))?;
        let started = Instant::now();
        let result = asm.solve(&inst, &budget).map_err(|e| format!("{label}: {e}"))?;
        let elapsed = started.elapsed();
        if result.status != SolveStatus::Optimal || elapsed > Duration::from_secs(120) {
            return Err(format!("{label}: search ended {} after {elapsed:.1?}", result.status.as_str()));
        }
        let oracle = enumerate_sos1(&asm.ir, &bnb_options(&inst, &budget)).map_err(|e| format!("{label}: {e}"))?;
        let diff = (result.objective - oracle.best).abs();
        if diff > 1e-6 {
            return Err(format!(
                "{label}: search {} enumeration {} ({} relaxations)",
                result.objective, oracle.best, oracle.relaxations
            ));
        }
        lines.push(format!("{diff:.0e}/{elapsed:.1?}/{}", oracle.relaxations));
        let solution = asm.extract(&inst, &result);
        accepted.push(Accepted { label, inst, solution });
    }
    Ok(format!("{} instances, objective difference/search time/enumerated LPs: {}", PANEL.len(), lines.join(" ")))
}

fn economics(accepted: &[Accepted]) -> Outcome {
    let mut worst_budget = 0.0f64;
    for a in accepted {
        let s = &a.solution;
        let costs = &s.costs;
        let paid: f64 = s.settlement.payment.iter().sum();
        let residual = (paid - costs.budget()).abs();
        worst_budget = worst_budget.max(residual / (1.0 + costs.total().abs()));
        if residual > 1e-6 * (1.0 + costs.total().abs()) {
            return Err(format!("{}: budget residual {residual:.3e}", a.label));
        }
        let st = &s.settlement;
        for i in 0..st.payment.len() {
            let identity = st.payment[i] - st.c_ext[i] - st.w_plus[i] + st.w_minus[i];
            if identity != 0.0 {
                return Err(format!("{}: member {} rationality identity {identity:e}", a.label, i + 1));
            }
        }
        let plus: f64 = st.w_plus.iter().sum();
        let minus: f64 = st.w_minus.iter().sum();
        if plus.min(minus) > 1e-8 {
            return Err(format!("{}: benefit and loss both positive ({plus}, {minus})", a.label));
        }
    }
    Ok(format!("{} solutions, worst scaled budget residual {worst_budget:.1e}", accepted.len()))
}

fn mode<'a>(run: &'a RunReport, m: DistributionMode) -> Result<&'a BilevelSolution, String> {
    run.modes
        .iter()
        .find(|o| o.mode == m && o.has_solution())
        .map(|o| &o.solution)
        .ok_or_else(|| format!("no {m} solution"))
}

fn delivery(run: &RunReport) -> Outcome {
    let inst = &run.instance;
    let c = &inst.contract;
    let tariff = c.y_im.iter().chain(&c.y_ex).copied().fold(0.0, f64::max);
    let alpha = c.alpha_dso.iter().copied().fold(f64::INFINITY, f64::min);
    if alpha < 10.0 * tariff {
        return Err(format!("penalty {alpha} is not far above the tariffs {tariff}"));
    }
    for o in run.modes.iter().filter(|o| o.has_solution()) {
        for t in 0..inst.horizon() {
            let over = o.solution.state.p_im[t] - c.p_cap_kw[t];
            if over > 1e-6 {
                return Err(format!("{}: import exceeds the cap by {over} kW in period {}", o.mode, t + 1));
            }
        }
    }
    let un = &run.baselines.uncoordinated;
    let over = (0..inst.horizon()).filter(|&t| un.import_kw[t] > c.p_cap_kw[t]).count();
    if over == 0 {
        return Err("uncoordinated import never exceeds the cap".into());
    }
    Ok(format!("coordinated import within the cap, uncoordinated above it in {over} periods"))
}

fn benefit(run: &RunReport) -> Outcome {
    let s = mode(run, DistributionMode::None)?;
    let un = run.baselines.uncoordinated.total_cost;
    let cost = s.costs.total();
    let stats = benefit_stats(&s.settlement);
    if cost > un {
        return Err(format!("coordinated {cost} above uncoordinated {un}"));
    }
    if !(stats.total_benefit > 0.0 && stats.total_loss == 0.0) {
        return Err(format!("benefit {} loss {}", stats.total_benefit, stats.total_loss));
    }
    Ok(format!("cost {cost:.4} vs uncoordinated {un:.4}, total benefit {:.4}", stats.total_benefit))
}

fn heatmap(cfg: &RunConfig, out: &Path) -> Outcome {
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let started = Instant::now();
    let report = sweep_heatmap(cfg, out, jobs).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    if report.cells.len() != 12 {
        return Err(format!("{} cells", report.cells.len()));
    }
    if let Some(c) = report.cells.iter().find(|c| c.status != "optimal") {
        return Err(format!("beta {} v {}: {}", c.beta, c.v, c.status));
    }
    let checked: Vec<&String> = report
        .violations
        .iter()
        .filter(|v| v.starts_with("v = 1:") || v.starts_with("beta = 0.6:"))
        .collect();
    if let Some(v) = checked.first() {
        return Err((*v).clone());
    }
    if elapsed > Duration::from_secs(30 * 60) {
        return Err(format!("sweep took {elapsed:.1?}"));
    }
    Ok(format!(
        "12 cells in {elapsed:.1?}, nonincreasing along both axes ({} violations off those lines)",
        report.violations.len() - checked.len()
    ))
}

fn distribution(run: &RunReport) -> Outcome {
    if run.instance.config.gamma != 1e-6 {
        return Err(format!("gamma is {}", run.instance.config.gamma));
    }
    let none = mode(run, DistributionMode::None)?;
    let equal = mode(run, DistributionMode::Equal)?;
    let prop = mode(run, DistributionMode::Proportional)?;
    let base = benefit_stats(&none.settlement);
    let eq = benefit_stats(&equal.settlement);
    let pr = benefit_stats(&prop.settlement);
    if eq.variance >= base.variance {
        return Err(format!("variance {} not below {}", eq.variance, base.variance));
    }
    if pr.proportional_deviation >= base.proportional_deviation {
        return Err(format!(
            "share deviation {} not below {}",
            pr.proportional_deviation, base.proportional_deviation
        ));
    }
    let c0 = none.costs.total();
    let rise = |s: &BilevelSolution| (s.costs.total() - c0) / c0.abs();
    let (re, rp) = (rise(equal), rise(prop));
    if re > 0.05 || rp > 0.05 {
        return Err(format!("cost rises by {:.2}% and {:.2}%", 100.0 * re, 100.0 * rp));
    }
    Ok(format!(
        "variance {:.3} -> {:.3}, share deviation {:.3} -> {:.1e}, cost +{:.1e}% / +{:.1e}%",
        base.variance,
        eq.variance,
        base.proportional_deviation,
        pr.proportional_deviation,
        100.0 * re,
        100.0 * rp
    ))
}

fn failed_checks(inst: &Instance, state: &CommunityState) -> Vec<&'static str> {
    let mut names: Vec<&str> = check_flow_feasibility(&inst.network, state, 0.0)
        .into_iter()
        // The cone holds exactly; equalities hold up to rounding.
        .filter(|v| v.check == "line_capacity" || v.residual > 1e-9)
        .map(|v| v.check)
        .collect();
    names.sort_unstable();
    names.dedup();
    names
}

fn soundness(accepted: &[Accepted], run: &RunReport) -> Outcome {
    for a in accepted {
        let solved = failed_checks(&a.inst, &a.solution.state);
        let (inj_p, inj_q) = nodal_injections(&a.inst, &a.solution.dispatch);
        let rebuilt = failed_checks(&a.inst, &CommunityState::from_injections(&a.inst.network, inj_p, inj_q));
        if !solved.is_empty() || !rebuilt.is_empty() {
            return Err(format!("{}: {solved:?} / rebuilt {rebuilt:?}", a.label));
        }
    }

    let inst = &run.instance;
    let s = mode(run, DistributionMode::None)?;
    let check = |inst: &Instance, s: &BilevelSolution| {
        check_solution(inst, &s.prices, &s.dispatch, &s.state, &s.settlement, 1e-6)
            .failures()
            .into_iter()
            .map(String::from)
            .collect::<Vec<_>>()
    };

    let mut sagging = s.clone();
    sagging.state.u[3][2] = 0.5;
    let got = check(inst, &sagging);
    if got != ["voltage_drop", "voltage_min"] {
        return Err(format!("voltage fault flagged {got:?}"));
    }

    // Re-rate the busiest line just below what it carries.
    let (node, t, load) = (1..inst.network.num_nodes())
        .flat_map(|n| (0..inst.horizon()).map(move |t| (n, t)))
        .map(|(n, t)| {
            let fp = s.state.f_p[n][t] / inst.network.s_base_kva;
            let fq = s.state.f_q[n][t] / inst.network.s_base_kva;
            (n, t, fp * fp + fq * fq)
        })
        .fold((0, 0, 0.0), |best, c| if c.2 > best.2 { c } else { best });
    let mut derated = inst.clone();
    derated.network.nodes.iter_mut().find(|l| l.id == node).unwrap().s_sq_max_pu = 0.9 * load;
    let got = check(&derated, s);
    if got != ["line_capacity"] {
        return Err(format!("line {node} derated at period {} flagged {got:?}", t + 1));
    }

    // Loose cap so an extra kW leaves the penalty untouched.
    let mut loose = inst.clone();
    loose.contract.p_cap_kw = vec![40.0; loose.horizon()];
    let budget = Budget {
        node_limit: 200_000,
        time_limit: Duration::from_secs(120),
        parallel: false,
    };
    let c_ext = compute_c_ext(&loose).map_err(|e| e.to_string())?;
    let mut relaxed = solve_bilevel(&loose, &c_ext, &budget).map_err(|e| e.to_string())?;
    let clean = check(&loose, &relaxed);
    if !clean.is_empty() {
        return Err(format!("loose-cap solution flagged {clean:?}"));
    }
    relaxed.state.p_im[0] += 1.0;
    let got = check(&loose, &relaxed);
    if got != ["budget_balance", "root_balance_p"] {
        return Err(format!("import fault flagged {got:?}"));
    }
    Ok(format!(
        "{} states exact on the disk, three faults flag only their checks",
        accepted.len()
    ))
}

fn price_cap(accepted: &[Accepted], run_dir: &Path) -> Outcome {
    for a in accepted {
        let cap = a.inst.contract.alpha_shed;
        if let Some(x) = a.solution.prices.x.iter().flatten().find(|&&x| x > cap) {
            return Err(format!("{}: price {x} above {cap}", a.label));
        }
    }
    let table = report_prices(run_dir).map_err(|e| e.to_string())?;
    let csv = table.to_csv();
    let mut lines = csv.lines();
    let header = lines.next().unwrap_or_default();
    let want = "prosumer_id,none_mean,none_min,none_max,equal_mean,equal_min,equal_max,\
                proportional_mean,proportional_min,proportional_max";
    if header != want {
        return Err(format!("header {header}"));
    }
    let rows: Vec<&str> = lines.collect();
    if rows.len() != 3 {
        return Err(format!("{} rows", rows.len()));
    }
    for (id, stats) in &table.rows {
        if stats.iter().any(|p| !(p.min <= p.mean && p.mean <= p.max)) {
            return Err(format!("member {id}: mean outside [min, max]"));
        }
    }
    Ok(format!("{} price sets within the cap, table rows: {}", accepted.len(), rows.join(" | ")))
}

fn main() {
    let started = Instant::now();
    let work = tempfile::tempdir().expect("scratch directory");
    let mut results: Vec<(usize, Outcome)> = Vec::new();

    let (c1, c2) = lower_level_oracle();
    results.push((1, c1));
    results.push((2, c2));

    let mut accepted = Vec::new();
    results.push((3, enumeration(&mut accepted)));

    let cfg = desk_config();
    let run_dir: PathBuf = work.path().join("desk");
    match run_case(&cfg, &run_dir) {
        Ok(run) => {
            for o in run.modes.iter().filter(|o| o.has_solution()) {
                accepted.push(Accepted {
                    label: format!("desk {}", o.mode),
                    inst: run.instance.clone(),
                    solution: o.solution.clone(),
                });
            }
            results.push((4, economics(&accepted)));
            results.push((5, delivery(&run)));
            results.push((6, benefit(&run)));
            results.push((7, heatmap(&cfg, &work.path().join("sweep"))));
            results.push((8, distribution(&run)));
            results.push((9, soundness(&accepted, &run)));
            results.push((10, price_cap(&accepted, &run_dir)));
        }
        Err(e) => {
            for n in 4..=10 {
                results.push((n, Err(format!("desk run failed: {e}"))));
            }
        }
    }
    results.sort_by_key(|r| r.0);

    let mut failed = 0;
    for (n, r) in &results {
        match r {
            Ok(msg) => println!("criterion {n}: PASS  {msg}"),
            Err(msg) => {
                failed += 1;
                println!("criterion {n}: FAIL  {msg}");
            }
        }
    }
    println!("acceptance: {} of {} passed in {:.1?}", results.len() - failed, results.len(), started.elapsed());
    if failed > 0 {
        std::process::exit(1);
    }
}
