//! Seeded synthetic demand and PV profiles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct ProfileShape {
    /// Night-time demand level (kW).
    pub base_kw: f64,
    /// Height of the morning peak above the base (kW).
    pub morning_kw: f64,
    /// Height of the evening peak above the base (kW).
    pub evening_kw: f64,
    /// Midday PV peak for owners (kW).
    pub pv_peak_kw: f64,
    /// Which members own PV; members beyond the list own none.
    pub pv_owners: Vec<bool>,
}

impl Default for ProfileShape {
    fn default() -> Self {
        Self {
            base_kw: 0.4,
            morning_kw: 1.2,
            evening_kw: 2.0,
            pv_peak_kw: 3.0,
            pv_owners: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Profiles {
    pub demand_kw: Vec<Vec<f64>>,
    pub pv_kw: Vec<Vec<f64>>,
}

impl Profiles {
    /// CSV in the profiles-file schema, with the given member ids.
    pub fn to_csv(&self, ids: &[u32]) -> String {
        let mut s = String::from("prosumer_id,t,demand_kw,pv_kw\n");
        for (k, id) in ids.iter().enumerate() {
            for (t, (d, p)) in self.demand_kw[k].iter().zip(&self.pv_kw[k]).enumerate() {
                s += &format!("{id},{},{d},{p}\n", t + 1);
            }
        }
        s
    }
}

/// Rounds to 4 decimals so files stay readable.
fn tidy(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

/// Demand with a morning and an evening peak, and a midday PV bell for
/// owners. The horizon is mapped onto one day, whatever its length.
pub fn synth_profiles(seed: u64, members: usize, horizon: usize, shape: &ProfileShape) -> Profiles {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut demand_kw = Vec::with_capacity(members);
    let mut pv_kw = Vec::with_capacity(members);
    for k in 0..members {
        let scale: f64 = rng.gen_range(0.7..1.3);
        let shift: f64 = rng.gen_range(-1.0..1.0);
        let cloud: f64 = rng.gen_range(0.6..1.0);
        let owner = shape.pv_owners.get(k).copied().unwrap_or(false);
        let mut d = Vec::with_capacity(horizon);
        let mut p = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let hour = (t as f64 + 0.5) * 24.0 / horizon as f64;
            let bump = |centre: f64, width: f64| (-(hour - centre - shift).powi(2) / (2.0 * width * width)).exp();
            let noise: f64 = rng.gen_range(0.9..1.1);
            let load = scale * (shape.base_kw + shape.morning_kw * bump(7.5, 1.5) + shape.evening_kw * bump(18.5, 2.0));
            d.push(tidy((load * noise).max(0.0)));
            let sun = (std::f64::consts::PI * (hour - 6.0) / 12.0).sin().max(0.0);
            let pv = if owner && (6.0..=18.0).contains(&hour) {
                shape.pv_peak_kw * cloud * sun
            } else {
                0.0
            };
            p.push(tidy(pv));
        }
        demand_kw.push(d);
        pv_kw.push(p);
    }
    Profiles { demand_kw, pv_kw }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_a_seed() {
        let shape = ProfileShape {
            pv_owners: vec![true, false],
            ..ProfileShape::default()
        };
        let a = synth_profiles(1, 2, 24, &shape);
        let b = synth_profiles(1, 2, 24, &shape);
        assert_eq!(a.to_csv(&[1, 2]), b.to_csv(&[1, 2]));
        assert_eq!(a.demand_kw.len(), 2);
        assert!(a.demand_kw.iter().all(|d| d.len() == 24 && d.iter().all(|v| *v >= 0.0)));
        assert!(a.pv_kw[1].iter().all(|v| *v == 0.0));
        assert!(a.pv_kw[0][12] > 0.0 && a.pv_kw[0][0] == 0.0);
        assert_ne!(synth_profiles(2, 2, 24, &shape), a);
    }

    #[test]
    fn double_peak_shape() {
        let p = synth_profiles(7, 1, 24, &ProfileShape::default());
        let d = &p.demand_kw[0];
        let night = d[2];
        assert!(d[7] > night && d[18] > night);
        assert!(d[18] > d[12]);
    }

    #[test]
    fn single_period() {
        let p = synth_profiles(3, 1, 1, &ProfileShape::default());
        assert_eq!(p.demand_kw, vec![vec![p.demand_kw[0][0]]]);
        assert!(p.demand_kw[0][0] >= 0.0);
    }
}
