use std::time::Duration;

use ecprice_core::baselines::{baseline_uncoordinated, compute_c_ext};
use ecprice_core::bilevel::{solve_bilevel, BilevelSolution, Budget};
use ecprice_core::cases::desk_instance;
use ecprice_core::instance::{validate_instance, Instance, PricingConfig};
use ecprice_core::load::{load_instance, write_instance};
use ecprice_core::validation::{benefit_stats, check_solution};

fn budget() -> Budget {
    Budget {
        node_limit: 20_000,
        time_limit: Duration::from_secs(120),
        parallel: true,
    }
}

fn solve(inst: &Instance) -> BilevelSolution {
    let c_ext = compute_c_ext(inst).unwrap();
    solve_bilevel(inst, &c_ext, &budget()).unwrap()
}

fn check(inst: &Instance, s: &BilevelSolution) -> ecprice_core::validation::ValidationReport {
    check_solution(inst, &s.prices, &s.dispatch, &s.state, &s.settlement, 1e-6)
}

#[test]
fn desk_solution_passes_every_check() {
    let inst = desk_instance(0.6, 1.0).unwrap();
    let s = solve(&inst);
    assert!(s.status.has_solution());
    let report = check(&inst, &s);
    assert!(report.passed(), "{report}");
    for t in 0..inst.horizon() {
        assert!(s.state.p_im[t] <= inst.contract.p_cap_kw[t] + 1e-6);
    }
    // Nobody is worse off than on their own.
    let stats = benefit_stats(&s.settlement);
    assert!(stats.total_benefit > 0.0);
    assert_eq!(stats.total_loss, 0.0);
    let un = baseline_uncoordinated(&inst).unwrap();
    assert!(s.costs.total() <= un.total_cost);
}

#[test]
fn corrupted_import_breaks_balance_and_budget_only() {
    // A loose cap leaves room for an extra kW without touching the penalty.
    let mut inst = desk_instance(0.6, 1.0).unwrap();
    inst.contract.p_cap_kw = vec![40.0; inst.horizon()];
    let mut s = solve(&inst);
    assert!(check(&inst, &s).passed());
    s.state.p_im[0] += 1.0;
    let report = check(&inst, &s);
    assert_eq!(report.failures(), vec!["budget_balance", "root_balance_p"], "{report}");
}

#[test]
fn perturbed_prices_break_flexible_members_only() {
    let inst = desk_instance(0.6, 1.0).unwrap();
    let s = solve(&inst);
    let mut prices = s.prices.clone();
    for x in &mut prices.x {
        for (t, v) in x.iter_mut().enumerate() {
            if t % 2 == 0 {
                *v *= 1.1;
            }
        }
    }
    prices.x_bar *= 1.1;
    let report = check_solution(&inst, &prices, &s.dispatch, &s.state, &s.settlement, 1e-6);
    let failed = report.failures();
    assert!(failed.contains(&"lower_optimality[1]"));
    assert!(failed.contains(&"lower_optimality[2]"));
    // The inflexible household has nothing to re-optimize.
    assert!(!failed.contains(&"lower_optimality[3]"));
}

#[test]
fn voltage_fault_is_caught() {
    let inst = desk_instance(0.6, 1.0).unwrap();
    let mut s = solve(&inst);
    s.state.u[3][2] = 0.5;
    let failed = check(&inst, &s).failures().into_iter().map(String::from).collect::<Vec<_>>();
    assert_eq!(failed, vec!["voltage_drop", "voltage_min"]);
}

#[test]
fn desk_instance_round_trips_through_files() {
    let inst = desk_instance(0.6, 1.0).unwrap();
    assert!(validate_instance(&inst).is_empty());
    let dir = tempfile::tempdir().unwrap();
    let files = write_instance(&inst, dir.path()).unwrap();
    let back = load_instance(&files, PricingConfig::default()).unwrap();
    assert_eq!(back, inst);
}
