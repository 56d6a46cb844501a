//! Linear stand-ins for the nonlinear pieces of a [`ModelIr`](crate::ModelIr).
//!
//! Disks are replaced by inscribed regular polygons, so anything feasible for
//! the polygon is feasible for the disk. Squares in epigraph links are
//! replaced by secant interpolants, which never under-estimate the square on
//! the argument's domain.

use std::f64::consts::PI;

use crate::error::{Result, SolverError};

/// Half-plane `nx * u + ny * v <= rhs`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HalfPlane {
    pub nx: f64,
    pub ny: f64,
    pub rhs: f64,
}

impl HalfPlane {
    pub fn excess(&self, u: f64, v: f64) -> f64 {
        self.nx * u + self.ny * v - self.rhs
    }
}

/// Facets of the regular `k`-gon inscribed in the disk of radius `radius`,
/// with vertices at angles `2 pi j / k`.
pub fn inscribed_polygon(radius: f64, k: usize) -> Result<Vec<HalfPlane>> {
    if k < 4 {
        return Err(SolverError::TooFewSegments(k));
    }
    let apothem = radius * (PI / k as f64).cos();
    Ok((0..k)
        .map(|j| {
            let angle = (2 * j + 1) as f64 * PI / k as f64;
            HalfPlane {
                nx: angle.cos(),
                ny: angle.sin(),
                rhs: apothem,
            }
        })
        .collect())
}

/// Largest distance between the disk boundary and the inscribed `k`-gon.
pub fn max_radial_gap(radius: f64, k: usize) -> f64 {
    radius * (1.0 - (PI / k as f64).cos())
}

/// One secant of `scale * y^2`: `epigraph >= slope * y + intercept`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Secant {
    pub slope: f64,
    pub intercept: f64,
}

/// Breakpoints for a secant interpolant of `y^2` on `[lo, hi]`.
///
/// Eight segments in total, spaced geometrically toward zero so small
/// deviations are still priced.
pub fn secant_breakpoints(lo: f64, hi: f64) -> Vec<f64> {
    let mut pts = vec![lo, hi];
    let two_sided = lo < 0.0 && hi > 0.0;
    let (per_side, ratio) = if two_sided { (4, 4.0) } else { (8, 2.0) };
    for side in [hi, lo] {
        if side == 0.0 || !(lo..=hi).contains(&0.0) {
            continue;
        }
        let mut p = side;
        for _ in 1..per_side {
            p /= ratio;
            pts.push(p);
        }
    }
    if lo <= 0.0 && hi >= 0.0 {
        pts.push(0.0);
    } else {
        // Domain excludes zero: uniform spacing.
        for k in 1..8 {
            pts.push(lo + (hi - lo) * k as f64 / 8.0);
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

pub fn secants(scale: f64, lo: f64, hi: f64) -> Vec<Secant> {
    let pts = secant_breakpoints(lo, hi);
    if pts.len() == 1 {
        // Degenerate domain: the value is fixed.
        let y = pts[0];
        return vec![Secant {
            slope: 0.0,
            intercept: scale * y * y,
        }];
    }
    pts.windows(2)
        .map(|w| Secant {
            slope: scale * (w[0] + w[1]),
            intercept: -scale * w[0] * w[1],
        })
        .collect()
}

/// Value of the secant interpolant at `y`.
pub fn interpolant(cuts: &[Secant], y: f64) -> f64 {
    cuts.iter()
        .map(|c| c.slope * y + c.intercept)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn square_is_the_unit_diamond() {
        let facets = inscribed_polygon(2.0, 4).unwrap();
        for f in &facets {
            // |u| + |v| <= r in normalized form
            assert!((f.nx.abs() - f.ny.abs()).abs() < 1e-12);
            assert!((f.rhs / f.nx.abs() - 2.0).abs() < 1e-12);
        }
        assert!(matches!(
            inscribed_polygon(1.0, 3),
            Err(SolverError::TooFewSegments(3))
        ));
    }

    #[test]
    fn radial_gap_shrinks() {
        let g16 = max_radial_gap(1.0, 16);
        let g64 = max_radial_gap(1.0, 64);
        assert!(g64 < g16);
        assert!((g16 - (1.0 - (PI / 16.0).cos())).abs() < 1e-15);
    }

    #[test]
    fn secants_overestimate_on_domain() {
        let cuts = secants(3.0, -10.0, 10.0);
        assert_eq!(cuts.len(), 8);
        for k in 0..=400 {
            let y = -10.0 + 0.05 * k as f64;
            assert!(interpolant(&cuts, y) >= 3.0 * y * y - 1e-9);
        }
        // Exact at breakpoints.
        assert!((interpolant(&cuts, 2.5) - 3.0 * 6.25).abs() < 1e-9);
        let one_sided = secants(1.0, 0.0, 75.0);
        assert_eq!(one_sided.len(), 8);
    }

    proptest! {
        #[test]
        fn polygon_points_lie_in_disk(r in 0.01f64..100.0, u in -1.0f64..1.0, v in -1.0f64..1.0) {
            let facets = inscribed_polygon(r, 16).unwrap();
            let (u, v) = (u * 2.0 * r, v * 2.0 * r);
            if facets.iter().all(|f| f.excess(u, v) <= 0.0) {
                prop_assert!(u * u + v * v <= r * r * (1.0 + 1e-12));
            }
        }

        #[test]
        fn interpolant_monotone_in_abs(lo in -50.0f64..-0.1, hi in 0.1f64..50.0, t in 0.0f64..1.0) {
            let cuts = secants(1.0, lo, hi);
            let y = hi * t;
            prop_assert!(interpolant(&cuts, y) >= y * y - 1e-9);
            prop_assert!(interpolant(&cuts, y) <= interpolant(&cuts, hi) + 1e-9);
        }
    }
}
