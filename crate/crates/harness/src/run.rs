//! Single-case pipeline: load, baselines, solve per distribution mode,
//! validate, write artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ecprice_core::baselines::{baseline_no_dr, baseline_uncoordinated, c_ext_from, BaselineResult};
use ecprice_core::bilevel::{nodal_injections, solve_bilevel, BilevelSolution, CostBreakdown, PriceSchedule, SettlementRecord};
use ecprice_core::cases::{apply_capacity_curve, household_shape};
use ecprice_core::dispatch::DispatchSolution;
use ecprice_core::instance::{DistributionMode, Instance};
use ecprice_core::load::{load_instance, member_ids, InstanceFiles};
use ecprice_core::network::CommunityState;
use ecprice_core::synth::synth_profiles;
use ecprice_core::validation::{benefit_stats, check_solution, ValidationReport};
use ecprice_core::CoreError;
use ecprice_solver::SolveStatus;

use crate::config::{ProfileSource, RunConfig};
use crate::error::{write_file, HarnessError, Result};
use crate::report::report_prices;
use crate::svg::{heat_table, step_plot, Series};

/// Residuals are compared against this in every written validation report.
pub const VALIDATION_TOL: f64 = 1e-6;

/// Loads the hourly instance named by `cfg`, as stored. Synthetic
/// profiles are written to `work/profiles.csv` first.
pub fn load_base(cfg: &RunConfig, work: &Path) -> Result<Instance> {
    let profiles = match &cfg.profiles {
        ProfileSource::File(p) => p.clone(),
        ProfileSource::Synthetic => {
            let ids = member_ids(&cfg.network)?;
            let horizon = std::fs::read_to_string(&cfg.prices)
                .map_err(|source| CoreError::Io { path: cfg.prices.clone(), source })?
                .lines()
                .skip(1)
                .filter(|l| !l.trim().is_empty())
                .count();
            let shape = household_shape(ids.iter().map(|id| cfg.pv_owners.contains(id)).collect());
            let path = work.join("profiles.csv");
            write_file(&path, synth_profiles(cfg.seed, ids.len(), horizon, &shape).to_csv(&ids))?;
            path
        }
    };
    let files = InstanceFiles {
        network: cfg.network.clone(),
        profiles,
        contract: cfg.contract.clone(),
        prices: cfg.prices.clone(),
    };
    Ok(load_instance(&files, cfg.pricing.clone())?)
}

/// Applies a uniform discount and the capacity curve for `variation` to
/// the hourly data, then merges every `hours` periods. Unset values keep
/// the contract as stored.
pub fn scenario(hourly: &Instance, beta: Option<f64>, variation: Option<f64>, hours: usize) -> Result<Instance> {
    let mut out = hourly.clone();
    if let Some(b) = beta {
        out.contract.beta = vec![b; out.horizon()];
    }
    if let Some(v) = variation {
        apply_capacity_curve(&mut out, v)?;
    }
    Ok(out.aggregate_periods(hours)?)
}

/// The instance a run solves.
pub fn prepare_instance(cfg: &RunConfig, work: &Path) -> Result<Instance> {
    scenario(&load_base(cfg, work)?, cfg.beta, cfg.variation, cfg.hours_per_period)
}

/// Both reference regimes and the external cost each member faces alone.
#[derive(Clone, Debug)]
pub struct Baselines {
    pub no_dr: BaselineResult,
    pub uncoordinated: BaselineResult,
    pub c_ext: Vec<f64>,
}

pub fn compute_baselines(inst: &Instance) -> Result<Baselines> {
    let uncoordinated = baseline_uncoordinated(inst)?;
    let c_ext = c_ext_from(inst, &uncoordinated)?;
    Ok(Baselines {
        no_dr: baseline_no_dr(inst),
        uncoordinated,
        c_ext,
    })
}

/// Baseline CSV with money in DKK over the real period length.
fn baseline_csv(b: &BaselineResult, scale: f64) -> String {
    let mut s = String::from("t,import_kw,cap_kw,shed_kw,cost_dkk\n");
    for t in 0..b.import_kw.len() {
        let _ = writeln!(s, "{},{},{},{},{}", t + 1, b.import_kw[t], b.cap_kw[t], b.shed_kw[t], b.cost_dkk[t] * scale);
    }
    s
}

pub fn write_baselines(inst: &Instance, b: &Baselines, dir: &Path, scale: f64) -> Result<()> {
    write_file(dir.join("no_dr.csv"), baseline_csv(&b.no_dr, scale))?;
    write_file(dir.join("uncoordinated.csv"), baseline_csv(&b.uncoordinated, scale))?;
    let mut s = String::from("prosumer_id,c_ext_dkk\n");
    for (a, c) in inst.prosumers.iter().zip(&b.c_ext) {
        let _ = writeln!(s, "{},{}", a.id, c * scale);
    }
    write_file(dir.join("c_ext.csv"), s)?;
    let svg = step_plot(
        "Community import without coordination",
        "kW",
        &[
            Series { name: "no DR", values: &b.no_dr.import_kw, color: "#888888", dashed: false },
            Series { name: "uncoordinated", values: &b.uncoordinated.import_kw, color: "#1f77b4", dashed: false },
            Series { name: "cap", values: &inst.contract.p_cap_kw, color: "#d62728", dashed: true },
        ],
    );
    write_file(dir.join("import.svg"), svg)
}

/// What one distribution mode produced.
#[derive(Clone, Debug)]
pub struct ModeOutcome {
    pub mode: DistributionMode,
    pub solution: BilevelSolution,
    /// Present when the solver returned a solution to check.
    pub report: Option<ValidationReport>,
}

impl ModeOutcome {
    pub fn has_solution(&self) -> bool {
        self.solution.status.has_solution()
    }
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub dir: PathBuf,
    pub instance: Instance,
    pub baselines: Baselines,
    pub modes: Vec<ModeOutcome>,
}

impl RunReport {
    /// 0 when every mode is optimal and valid, 2 on any validation failure,
    /// 3 when a mode stopped at a limit.
    pub fn exit_code(&self) -> i32 {
        if self.modes.iter().any(|m| m.report.as_ref().is_some_and(|r| !r.passed())) {
            2
        } else if self.modes.iter().any(|m| m.solution.status != SolveStatus::Optimal) {
            3
        } else {
            0
        }
    }
}

/// Full pipeline into `out`: baselines, then one subdirectory per mode.
pub fn run_case(cfg: &RunConfig, out: &Path) -> Result<RunReport> {
    let inst = prepare_instance(cfg, out)?;
    let scale = cfg.hours_per_period as f64;
    let baselines = compute_baselines(&inst)?;
    write_baselines(&inst, &baselines, &out.join("baselines"), scale)?;

    let mut modes = Vec::new();
    for &mode in &cfg.modes {
        let mut m = inst.clone();
        m.config.mode = mode;
        let solution = solve_bilevel(&m, &baselines.c_ext, &cfg.budget())?;
        log::info!(
            "{mode}: {} objective {:.6} after {} nodes in {:.1?}",
            solution.status.as_str(),
            solution.objective,
            solution.nodes,
            solution.wall_time
        );
        let report = solution.status.has_solution().then(|| {
            check_solution(&m, &solution.prices, &solution.dispatch, &solution.state, &solution.settlement, VALIDATION_TOL)
        });
        let outcome = ModeOutcome { mode, solution, report };
        write_mode(&m, &baselines, &outcome, &out.join(mode.as_str()), scale)?;
        modes.push(outcome);
    }
    let report = RunReport {
        dir: out.to_path_buf(),
        instance: inst,
        baselines,
        modes,
    };
    write_file(out.join("summary.txt"), run_summary(&report, scale))?;
    if report.modes.iter().any(ModeOutcome::has_solution) {
        let table = report_prices(out)?;
        write_file(out.join("price_table.csv"), table.to_csv())?;
        write_file(out.join("price_table.txt"), table.to_string())?;
    }
    Ok(report)
}

fn run_summary(r: &RunReport, scale: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "members {} periods {} hours per period {}", r.instance.prosumers.len(), r.instance.horizon(), scale);
    let _ = writeln!(s, "no-DR cost {:.4} DKK", r.baselines.no_dr.total_cost * scale);
    let _ = writeln!(s, "uncoordinated cost {:.4} DKK", r.baselines.uncoordinated.total_cost * scale);
    for m in &r.modes {
        let validity = match &m.report {
            Some(rep) if rep.passed() => "valid".to_string(),
            Some(rep) => format!("INVALID ({})", rep.failures().join(", ")),
            None => "no solution".to_string(),
        };
        let cost = if m.has_solution() {
            format!("{:.4} DKK", m.solution.costs.total() * scale)
        } else {
            "-".into()
        };
        let _ = writeln!(s, "{:<13} {:<19} cost {cost:<16} {validity}", m.mode.as_str(), m.solution.status.as_str());
    }
    s
}

fn write_mode(inst: &Instance, b: &Baselines, m: &ModeOutcome, dir: &Path, scale: f64) -> Result<()> {
    let s = &m.solution;
    let mut summary = String::new();
    let _ = writeln!(summary, "mode {}", m.mode);
    let _ = writeln!(summary, "status {}", s.status.as_str());
    let _ = writeln!(summary, "nodes {}", s.nodes);
    if !m.has_solution() {
        let _ = writeln!(summary, "bound {:.6}", s.bound * scale);
        return write_file(dir.join("summary.txt"), summary);
    }
    let _ = writeln!(summary, "objective {:.6}", s.objective * scale);
    let _ = writeln!(summary, "bound {:.6}", s.bound * scale);
    let _ = writeln!(summary, "gap {:.3e}", s.gap);
    let c = &s.costs;
    let _ = writeln!(summary, "community cost {:.4} DKK", c.total() * scale);
    let _ = writeln!(summary, "  energy {:.4}", c.energy * scale);
    let _ = writeln!(summary, "  internal tariff {:.4}", c.internal_tariff * scale);
    let _ = writeln!(summary, "  capacity penalty {:.4}", c.penalty * scale);
    let _ = writeln!(summary, "  load shedding {:.4}", c.shed * scale);
    let _ = writeln!(summary, "uncoordinated cost {:.4} DKK", b.uncoordinated.total_cost * scale);
    let _ = writeln!(summary, "no-DR cost {:.4} DKK", b.no_dr.total_cost * scale);
    let over = (0..inst.horizon())
        .map(|t| s.state.p_im[t] - inst.contract.p_cap_kw[t])
        .fold(0.0f64, f64::max);
    let _ = writeln!(summary, "largest import above cap {over:.6} kW");
    let top = s.prices.x.iter().flatten().copied().fold(0.0f64, f64::max);
    let _ = writeln!(summary, "highest price {top:.4} DKK/kWh (shedding cost {})", inst.contract.alpha_shed);
    let st = benefit_stats(&s.settlement);
    let _ = writeln!(summary, "benefit {:.4} DKK, loss {:.4} DKK", st.total_benefit * scale, st.total_loss * scale);
    let _ = writeln!(summary, "benefit variance {:.6e}", st.variance * scale * scale);
    let _ = writeln!(summary, "benefit deviation from residual-load shares {:.6e}", st.proportional_deviation * scale * scale);
    if let Some(rep) = &m.report {
        let verdict = if rep.passed() { "passed".to_string() } else { format!("failed: {}", rep.failures().join(", ")) };
        let _ = writeln!(summary, "validation {verdict}");
        write_file(dir.join("validation.csv"), rep.to_csv())?;
        write_file(dir.join("validation.txt"), format!("{rep}\n"))?;
    }
    write_file(dir.join("summary.txt"), summary)?;

    write_file(dir.join("prices.csv"), prices_csv(inst, &s.prices))?;
    write_file(dir.join("dispatch.csv"), dispatch_csv(inst, &s.dispatch))?;
    write_file(dir.join("import.csv"), import_csv(inst, s, scale))?;
    write_file(dir.join("settlement.csv"), settlement_csv(inst, &s.settlement, scale))?;

    write_file(
        dir.join("import.svg"),
        step_plot(
            &format!("Community import, {} distribution", m.mode),
            "kW",
            &[
                Series { name: "import", values: &s.state.p_im, color: "#1f77b4", dashed: false },
                Series { name: "uncoordinated", values: &b.uncoordinated.import_kw, color: "#888888", dashed: false },
                Series { name: "cap", values: &inst.contract.p_cap_kw, color: "#d62728", dashed: true },
            ],
        ),
    )?;
    let rows: Vec<String> = inst.prosumers.iter().map(|a| format!("member {}", a.id)).collect();
    let cols: Vec<String> = (1..=inst.horizon()).map(|t| t.to_string()).collect();
    write_file(
        dir.join("prices.svg"),
        heat_table(&format!("Prices DKK/kWh, {} distribution", m.mode), &rows, &cols, &s.prices.x),
    )
}

fn prices_csv(inst: &Instance, p: &PriceSchedule) -> String {
    let mut s = String::from("prosumer_id,t,x_dkk_per_kwh\n");
    for (a, x) in inst.prosumers.iter().zip(&p.x) {
        for (t, v) in x.iter().enumerate() {
            let _ = writeln!(s, "{},{},{}", a.id, t + 1, v);
        }
    }
    s
}

const DISPATCH_HEADER: &str = "prosumer_id,t,p_plus_kw,p_minus_kw,q_plus_kvar,q_minus_kvar,p_ch_kw,p_dis_kw,e_kwh,d_shed_kw";

fn dispatch_csv(inst: &Instance, dispatch: &[DispatchSolution]) -> String {
    let mut s = format!("{DISPATCH_HEADER}\n");
    for (a, d) in inst.prosumers.iter().zip(dispatch) {
        for t in 0..d.horizon() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                a.id,
                t + 1,
                d.p_plus[t],
                d.p_minus[t],
                d.q_plus[t],
                d.q_minus[t],
                d.p_ch[t],
                d.p_dis[t],
                d.e[t],
                d.d_shed[t]
            );
        }
    }
    s
}

fn import_csv(inst: &Instance, s: &BilevelSolution, scale: f64) -> String {
    let per = CostBreakdown::per_period(inst, &s.dispatch, &s.state);
    let mut out = String::from("t,import_kw,export_kw,cap_kw,penalty_kw,shed_kw,cost_dkk\n");
    for (t, c) in per.iter().enumerate() {
        let shed: f64 = s.dispatch.iter().map(|d| d.d_shed[t]).sum();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            t + 1,
            s.state.p_im[t],
            s.state.p_ex[t],
            inst.contract.p_cap_kw[t],
            s.state.p_pen[t],
            shed,
            c.total() * scale
        );
    }
    out
}

fn settlement_csv(inst: &Instance, r: &SettlementRecord, scale: f64) -> String {
    let mut s = String::from("prosumer_id,payment_dkk,c_ext_dkk,w_minus_dkk,w_plus_dkk,share\n");
    for (k, a) in inst.prosumers.iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            a.id,
            r.payment[k] * scale,
            r.c_ext[k] * scale,
            r.w_minus[k] * scale,
            r.w_plus[k] * scale,
            r.shares.get(k).copied().unwrap_or(0.0)
        );
    }
    s
}

fn read_table(path: &Path, header: &str) -> Result<Vec<Vec<f64>>> {
    let bad = |line: Option<usize>, msg: String| {
        HarnessError::Core(CoreError::Input {
            path: path.to_path_buf(),
            line,
            field: "-".into(),
            msg,
        })
    };
    let text = std::fs::read_to_string(path).map_err(|source| CoreError::Io { path: path.to_path_buf(), source })?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let found = rdr.headers().map_err(|e| bad(Some(1), e.to_string()))?.iter().collect::<Vec<_>>().join(",");
    if found != header {
        return Err(bad(Some(1), format!("expected header `{header}`")));
    }
    rdr.records()
        .enumerate()
        .map(|(k, rec)| {
            let rec = rec.map_err(|e| bad(Some(k + 2), e.to_string()))?;
            rec.iter()
                .map(|v| v.parse::<f64>().map_err(|_| bad(Some(k + 2), format!("`{v}` is not a number"))))
                .collect()
        })
        .collect()
}

/// Rows of a per-member, per-period table, grouped by member id.
fn by_member(rows: Vec<Vec<f64>>, inst: &Instance, path: &Path) -> Result<Vec<Vec<Vec<f64>>>> {
    let mut map: BTreeMap<u32, Vec<Vec<f64>>> = BTreeMap::new();
    for r in rows {
        map.entry(r[0] as u32).or_default().push(r);
    }
    inst.prosumers
        .iter()
        .map(|a| {
            let mut rows = map.remove(&a.id).unwrap_or_default();
            rows.sort_by(|x, y| x[1].total_cmp(&y[1]));
            if rows.len() != inst.horizon() {
                return Err(HarnessError::Core(CoreError::Input {
                    path: path.to_path_buf(),
                    line: None,
                    field: "t".into(),
                    msg: format!("member {} has {} periods, expected {}", a.id, rows.len(), inst.horizon()),
                }));
            }
            Ok(rows)
        })
        .collect()
}

/// Prices read back from a mode directory.
pub fn read_prices(inst: &Instance, dir: &Path) -> Result<PriceSchedule> {
    let path = dir.join("prices.csv");
    let rows = by_member(read_table(&path, "prosumer_id,t,x_dkk_per_kwh")?, inst, &path)?;
    let x: Vec<Vec<f64>> = rows.iter().map(|m| m.iter().map(|r| r[2]).collect()).collect();
    let x_bar = x.iter().flatten().copied().fold(0.0, f64::max);
    Ok(PriceSchedule { x, x_bar })
}

/// Dispatch read back from a mode directory.
pub fn read_dispatch(inst: &Instance, dir: &Path) -> Result<Vec<DispatchSolution>> {
    let path = dir.join("dispatch.csv");
    let rows = by_member(read_table(&path, DISPATCH_HEADER)?, inst, &path)?;
    Ok(rows
        .iter()
        .map(|m| {
            let col = |k: usize| m.iter().map(|r| r[k]).collect::<Vec<f64>>();
            DispatchSolution {
                p_plus: col(2),
                p_minus: col(3),
                q_plus: col(4),
                q_minus: col(5),
                p_ch: col(6),
                p_dis: col(7),
                e: col(8),
                d_shed: col(9),
                objective: 0.0,
            }
        })
        .collect())
}

/// Re-checks a finished mode directory from its prices and dispatch alone:
/// flows, penalty and settlement are rebuilt from the instance data.
pub fn validate_dir(inst: &Instance, c_ext: &[f64], dir: &Path) -> Result<ValidationReport> {
    let prices = read_prices(inst, dir)?;
    let dispatch = read_dispatch(inst, dir)?;
    let (inj_p, inj_q) = nodal_injections(inst, &dispatch);
    let mut state = CommunityState::from_injections(&inst.network, inj_p, inj_q);
    state.p_pen = (0..inst.horizon())
        .map(|t| (state.p_im[t] - inst.contract.p_cap_kw[t]).max(0.0))
        .collect();
    let payment: Vec<f64> = dispatch.iter().zip(&prices.x).map(|(d, x)| d.payment(x)).collect();
    let shares = inst.demand_shares().unwrap_or_else(|| vec![0.0; inst.prosumers.len()]);
    let settle = SettlementRecord::from_payments(payment, c_ext.to_vec(), shares);
    Ok(check_solution(inst, &prices, &dispatch, &state, &settle, VALIDATION_TOL))
}

/// Mode directories present under a run directory, in canonical order.
pub fn mode_dirs(run: &Path) -> Vec<(DistributionMode, PathBuf)> {
    [DistributionMode::None, DistributionMode::Equal, DistributionMode::Proportional]
        .into_iter()
        .map(|m| (m, run.join(m.as_str())))
        .filter(|(_, d)| d.join("prices.csv").is_file())
        .collect()
}
