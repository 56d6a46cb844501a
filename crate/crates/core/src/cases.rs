//! Built-in instances: the small desk feeder used for regression and the
//! 14-node case study. Both are also shipped as files under `data/`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baselines::gen_capacity_curve;
use crate::error::Result;
use crate::instance::{
    DayAheadPrices, DsoContract, Instance, NetworkModel, Node, PricingConfig, ProsumerAssets,
};
use crate::synth::{synth_profiles, ProfileShape};

/// Danish-style day-ahead prices for one day, DKK/kWh.
pub const SPOT_24H: [f64; 24] = [
    0.62, 0.58, 0.55, 0.54, 0.56, 0.66, 0.92, 1.18, 1.10, 0.95, 0.84, 0.78, 0.74, 0.72, 0.76, 0.86,
    1.05, 1.32, 1.45, 1.28, 1.04, 0.90, 0.78, 0.68,
];

fn feeder(parents: &[usize], s_sq_max_pu: f64) -> NetworkModel {
    NetworkModel {
        s_base_kva: 100.0,
        v_base_kv: 0.4,
        u_min: 0.81,
        u_max: 1.21,
        p_grid_kw: 60.0,
        q_grid_kvar: 60.0,
        nodes: parents
            .iter()
            .enumerate()
            .map(|(k, &parent)| Node {
                id: k + 1,
                parent,
                r_pu: 0.01,
                x_pu: 0.008,
                s_sq_max_pu,
            })
            .collect(),
    }
}

fn contract(horizon: usize, cap: Vec<f64>, beta: f64) -> DsoContract {
    DsoContract {
        p_cap_kw: cap,
        alpha_dso: vec![10.0; horizon],
        beta: vec![beta; horizon],
        y_im: vec![0.4; horizon],
        y_ex: vec![0.05; horizon],
        alpha_shed: 75.0,
    }
}

/// Replaces the cap with the price-driven curve for variation `v`.
pub fn apply_capacity_curve(inst: &mut Instance, v: f64) -> Result<()> {
    let residual = inst.community_residual();
    inst.contract.p_cap_kw = gen_capacity_curve(&inst.prices.lambda_spot, &residual, v)?;
    Ok(())
}

/// Three members on a short line over six periods: a PV owner with a
/// battery, a battery owner, and an inflexible household.
pub fn desk_instance(beta: f64, v: f64) -> Result<Instance> {
    let horizon = 6;
    let lambda = vec![0.55, 0.45, 0.7, 1.3, 1.5, 0.9];
    let prosumers = vec![
        ProsumerAssets {
            id: 1,
            node: 1,
            demand_kw: vec![0.8, 0.7, 1.0, 1.6, 2.0, 1.2],
            pv_kw: vec![0.0, 0.5, 1.5, 1.0, 0.2, 0.0],
            p_bat_kw: 3.0,
            e_bat_kwh: 6.0,
            eta_ch: 0.95,
            eta_dis: 0.95,
            sigma: 0.2,
        },
        ProsumerAssets {
            id: 2,
            node: 2,
            demand_kw: vec![0.6, 0.6, 0.9, 1.4, 1.8, 1.0],
            pv_kw: vec![0.0; horizon],
            p_bat_kw: 3.0,
            e_bat_kwh: 7.0,
            eta_ch: 0.95,
            eta_dis: 0.95,
            sigma: 0.2,
        },
        ProsumerAssets {
            sigma: 0.2,
            ..ProsumerAssets::inflexible(3, 3, vec![0.4, 0.4, 0.5, 0.7, 0.8, 0.5])
        },
    ];
    let mut inst = Instance {
        network: feeder(&[0, 1, 2], 0.04),
        prosumers,
        contract: contract(horizon, vec![0.0; horizon], beta),
        prices: DayAheadPrices { lambda_spot: lambda },
        config: PricingConfig::default(),
    };
    apply_capacity_curve(&mut inst, v)?;
    Ok(inst)
}

/// Household load and PV shape of the case study; `pv_owners[k]` marks
/// member `k` as a PV owner.
pub fn household_shape(pv_owners: Vec<bool>) -> ProfileShape {
    ProfileShape {
        base_kw: 0.3,
        morning_kw: 0.6,
        evening_kw: 1.0,
        pv_peak_kw: 3.0,
        pv_owners,
    }
}

/// Fourteen members, one per node, over a day. PV at nodes 1, 4, 7, 8
/// and 13; batteries of 5 to 10 kWh everywhere except nodes 5 and 9.
pub fn case_study(seed: u64, beta: f64, v: f64) -> Result<Instance> {
    let members = 14;
    let horizon = 24;
    let pv_nodes = [1, 4, 7, 8, 13];
    let shape = household_shape((1..=members).map(|n| pv_nodes.contains(&n)).collect());
    let profiles = synth_profiles(seed, members, horizon, &shape);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let prosumers = (0..members)
        .map(|k| {
            let node = k + 1;
            let e: f64 = if node == 5 || node == 9 {
                0.0
            } else {
                (rng.gen_range(5.0f64..=10.0) * 2.0).round() / 2.0
            };
            ProsumerAssets {
                id: node as u32,
                node,
                demand_kw: profiles.demand_kw[k].clone(),
                pv_kw: profiles.pv_kw[k].clone(),
                p_bat_kw: e / 2.0,
                e_bat_kwh: e,
                eta_ch: if e > 0.0 { 0.95 } else { 1.0 },
                eta_dis: if e > 0.0 { 0.95 } else { 1.0 },
                sigma: 0.2,
            }
        })
        .collect();
    // Main feeder 0-1-...-6 with laterals at 2, 4 and 6.
    let parents = [0, 1, 2, 3, 4, 5, 2, 7, 8, 4, 10, 6, 12, 13];
    let mut inst = Instance {
        network: feeder(&parents, 0.09),
        prosumers,
        contract: contract(horizon, vec![0.0; horizon], beta),
        prices: DayAheadPrices {
            lambda_spot: SPOT_24H.to_vec(),
        },
        config: PricingConfig::default(),
    };
    inst.network.p_grid_kw = 150.0;
    inst.network.q_grid_kvar = 150.0;
    apply_capacity_curve(&mut inst, v)?;
    Ok(inst)
}

/// Random small instance for exhaustive checks: `members` households on a
/// star feeder over `horizon` periods, data on a coarse grid.
pub fn random_small(seed: u64, members: usize, horizon: usize) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grid = |lo: f64, hi: f64| (rng.gen_range(lo..hi) * 10.0).round() / 10.0;
    let lambda: Vec<f64> = (0..horizon).map(|_| grid(0.3, 1.6)).collect();
    let prosumers = (0..members)
        .map(|k| {
            let battery = grid(0.0, 1.0) > 0.3;
            let demand: Vec<f64> = (0..horizon).map(|_| grid(0.2, 2.0)).collect();
            let pv: Vec<f64> = (0..horizon).map(|_| grid(0.0, 1.0)).collect();
            ProsumerAssets {
                id: k as u32 + 1,
                node: k + 1,
                demand_kw: demand,
                pv_kw: pv,
                p_bat_kw: if battery { grid(1.0, 3.0) } else { 0.0 },
                e_bat_kwh: if battery { grid(1.0, 5.0) } else { 0.0 },
                eta_ch: if battery { 0.9 } else { 1.0 },
                eta_dis: if battery { 0.9 } else { 1.0 },
                sigma: 0.2,
            }
        })
        .collect();
    let mut inst = Instance {
        network: feeder(&vec![0; members], 0.04),
        prosumers,
        contract: contract(horizon, vec![0.0; horizon], 0.6),
        prices: DayAheadPrices { lambda_spot: lambda },
        config: PricingConfig::default(),
    };
    apply_capacity_curve(&mut inst, 1.0)?;
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::validate_instance;

    #[test]
    fn built_in_cases_are_valid() {
        let desk = desk_instance(0.6, 1.0).unwrap();
        assert!(validate_instance(&desk).is_empty(), "{:?}", validate_instance(&desk));
        let case = case_study(42, 0.6, 1.0).unwrap();
        assert!(validate_instance(&case).is_empty(), "{:?}", validate_instance(&case));
        assert_eq!(case.prosumers.len(), 14);
        let pv = case.prosumers.iter().filter(|a| a.pv_kw.iter().any(|p| *p > 0.0)).count();
        assert_eq!(pv, 5);
        let no_bat: Vec<u32> = case.prosumers.iter().filter(|a| !a.has_battery()).map(|a| a.id).collect();
        assert_eq!(no_bat, vec![5, 9]);
        assert!(case
            .prosumers
            .iter()
            .filter(|a| a.has_battery())
            .all(|a| (5.0..=10.0).contains(&a.e_bat_kwh)));
        for s in 0..20 {
            let r = random_small(s, 2, 3).unwrap();
            assert!(validate_instance(&r).is_empty());
        }
    }
}
