//! Floating-point simplex against an exact rational two-phase simplex.

use ecprice_solver::simplex::{solve, LpProblem, LpStatus, SimplexOptions};
use ecprice_solver::Sense;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Q = BigRational;

fn q(v: i64) -> Q {
    Q::from_integer(BigInt::from(v))
}

#[derive(Debug, PartialEq)]
enum Exact {
    Optimal(Q),
    Infeasible,
    Unbounded,
}

/// Dense Bland-rule simplex over `min c x, A x = b, x >= 0` with `b >= 0`.
fn exact_standard(a: Vec<Vec<Q>>, b: Vec<Q>, c: Vec<Q>) -> Exact {
    let m = a.len();
    let n = c.len();
    // Columns: n originals, m artificials.
    let width = n + m;
    let mut t: Vec<Vec<Q>> = a
        .into_iter()
        .enumerate()
        .map(|(i, mut row)| {
            row.extend((0..m).map(|k| if k == i { q(1) } else { q(0) }));
            row
        })
        .collect();
    let mut rhs = b;
    let mut basis: Vec<usize> = (n..width).collect();

    let run = |t: &mut Vec<Vec<Q>>, rhs: &mut Vec<Q>, basis: &mut Vec<usize>, cost: &[Q], allowed: usize| -> bool {
        loop {
            // Reduced costs.
            let mut entering = None;
            for j in 0..allowed {
                if basis.contains(&j) {
                    continue;
                }
                let mut d = cost[j].clone();
                for i in 0..t.len() {
                    d -= &cost[basis[i]] * &t[i][j];
                }
                if d.is_negative() {
                    entering = Some(j);
                    break;
                }
            }
            let Some(e) = entering else { return true };
            let mut leave: Option<(usize, Q)> = None;
            for i in 0..t.len() {
                if t[i][e].is_positive() {
                    let r = &rhs[i] / &t[i][e];
                    let better = match &leave {
                        None => true,
                        Some((li, lr)) => r < *lr || (r == *lr && basis[i] < basis[*li]),
                    };
                    if better {
                        leave = Some((i, r));
                    }
                }
            }
            let Some((r, _)) = leave else { return false };
            let piv = t[r][e].clone();
            for v in t[r].iter_mut() {
                *v = &*v / &piv;
            }
            rhs[r] = &rhs[r] / &piv;
            for i in 0..t.len() {
                if i != r && !t[i][e].is_zero() {
                    let f = t[i][e].clone();
                    let prow = t[r].clone();
                    for (v, p) in t[i].iter_mut().zip(&prow) {
                        *v -= &f * p;
                    }
                    let rr = rhs[r].clone();
                    rhs[i] -= &f * &rr;
                }
            }
            basis[r] = e;
        }
    };

    let mut phase1 = vec![q(0); width];
    for c in phase1.iter_mut().skip(n) {
        *c = q(1);
    }
    run(&mut t, &mut rhs, &mut basis, &phase1, width);
    let infeas: Q = basis
        .iter()
        .zip(&rhs)
        .filter(|(b, _)| **b >= n)
        .map(|(_, v)| v.clone())
        .fold(q(0), |acc, v| acc + v);
    if infeas.is_positive() {
        return Exact::Infeasible;
    }
    // Drive zero-valued artificials out of the basis where possible.
    for i in 0..m {
        if basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| !t[i][j].is_zero() && !basis.contains(&j)) {
                let piv = t[i][j].clone();
                for v in t[i].iter_mut() {
                    *v = &*v / &piv;
                }
                rhs[i] = &rhs[i] / &piv;
                for k in 0..m {
                    if k != i && !t[k][j].is_zero() {
                        let f = t[k][j].clone();
                        let prow = t[i].clone();
                        for (v, p) in t[k].iter_mut().zip(&prow) {
                            *v -= &f * p;
                        }
                        let rr = rhs[i].clone();
                        rhs[k] -= &f * &rr;
                    }
                }
                basis[i] = j;
            }
        }
    }
    let mut cost = c;
    cost.extend((0..m).map(|_| q(0)));
    if !run(&mut t, &mut rhs, &mut basis, &cost, n) {
        return Exact::Unbounded;
    }
    let obj = basis
        .iter()
        .zip(&rhs)
        .map(|(b, v)| &cost[*b] * v)
        .fold(q(0), |acc, v| acc + v);
    Exact::Optimal(obj)
}

struct RandomLp {
    n: usize,
    cost: Vec<i64>,
    upper: Vec<i64>,
    rows: Vec<(Vec<i64>, Sense, i64)>,
}

fn random_lp(rng: &mut ChaCha8Rng) -> RandomLp {
    let n = rng.gen_range(1..=20);
    let m = rng.gen_range(1..=12);
    let cost = (0..n).map(|_| rng.gen_range(-6..=6)).collect();
    let upper = (0..n).map(|_| rng.gen_range(1..=8)).collect();
    let rows = (0..m)
        .map(|_| {
            let coefs = (0..n)
                .map(|_| if rng.gen_bool(0.5) { rng.gen_range(-5..=5) } else { 0 })
                .collect();
            let sense = match rng.gen_range(0..4) {
                0 => Sense::Eq,
                1 => Sense::Ge,
                _ => Sense::Le,
            };
            (coefs, sense, rng.gen_range(-10..=20))
        })
        .collect();
    RandomLp { n, cost, upper, rows }
}

fn exact_reference(lp: &RandomLp) -> Exact {
    // Columns: x (n), then one slack per inequality row and per upper bound.
    let mut a: Vec<Vec<Q>> = Vec::new();
    let mut b = Vec::new();
    let ineq = lp.rows.iter().filter(|r| r.1 != Sense::Eq).count();
    let width = lp.n + ineq + lp.n;
    let mut slack = lp.n;
    for (coefs, sense, rhs) in &lp.rows {
        let mut row = vec![q(0); width];
        for (j, &c) in coefs.iter().enumerate() {
            row[j] = q(c);
        }
        match sense {
            Sense::Le => {
                row[slack] = q(1);
                slack += 1;
            }
            Sense::Ge => {
                row[slack] = q(-1);
                slack += 1;
            }
            Sense::Eq => {}
        }
        a.push(row);
        b.push(q(*rhs));
    }
    for j in 0..lp.n {
        let mut row = vec![q(0); width];
        row[j] = q(1);
        row[slack] = q(1);
        slack += 1;
        a.push(row);
        b.push(q(lp.upper[j]));
    }
    for (row, rhs) in a.iter_mut().zip(b.iter_mut()) {
        if rhs.is_negative() {
            for v in row.iter_mut() {
                *v = -v.clone();
            }
            *rhs = -rhs.clone();
        }
    }
    let mut c = vec![q(0); width];
    for j in 0..lp.n {
        c[j] = q(lp.cost[j]);
    }
    exact_standard(a, b, c)
}

fn float_lp(lp: &RandomLp) -> LpProblem {
    let mut p = LpProblem::with_vars(lp.n);
    for j in 0..lp.n {
        p.cost[j] = lp.cost[j] as f64;
        p.upper[j] = lp.upper[j] as f64;
    }
    for (coefs, sense, rhs) in &lp.rows {
        let terms = coefs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0)
            .map(|(j, &c)| (j, c as f64))
            .collect();
        p.add_row(terms, *sense, *rhs as f64);
    }
    p
}

#[test]
fn matches_exact_rational_simplex_on_random_lps() {
    let mut rng = ChaCha8Rng::seed_from_u64(20240611);
    let mut optimal = 0;
    let mut infeasible = 0;
    for case in 0..300 {
        let lp = random_lp(&mut rng);
        let exact = exact_reference(&lp);
        let got = solve(&float_lp(&lp), &SimplexOptions::default());
        match exact {
            Exact::Optimal(v) => {
                optimal += 1;
                let v = v.to_f64().unwrap();
                assert_eq!(got.status, LpStatus::Optimal, "case {case}");
                assert!(
                    (got.objective - v).abs() <= 1e-8,
                    "case {case}: float {} exact {v}",
                    got.objective
                );
            }
            Exact::Infeasible => {
                infeasible += 1;
                assert_eq!(got.status, LpStatus::Infeasible, "case {case}");
            }
            Exact::Unbounded => unreachable!("boxed variables"),
        }
    }
    // Both outcomes must be exercised for the comparison to mean anything.
    assert!(optimal > 50 && infeasible > 20, "{optimal} optimal, {infeasible} infeasible");
}

#[test]
fn exact_reference_sanity() {
    // min -x - y, x + y <= 4, x <= 3 (box), y <= 3 (box)
    let lp = RandomLp {
        n: 2,
        cost: vec![-1, -1],
        upper: vec![3, 3],
        rows: vec![(vec![1, 1], Sense::Le, 4)],
    };
    assert_eq!(exact_reference(&lp), Exact::Optimal(q(-4)));
    let one = Q::one();
    assert!(one.is_positive());
}
