//! Reference implementations the library is checked against. They favor
//! brute force over speed and share no code paths with the solvers.
#![allow(dead_code)]

use coordscope::dataset::{Dataset, Observation, PersonalizedAllocation, Probe};
use coordscope::lp::{self, LinearProgram, LpStatus, Relation};
use coordscope::milp::MilpProblem;
use coordscope::sim::NetworkSpec;
use rand::Rng;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Random dataset with hidden bundles in `(0, 1)^n`, probes in
/// `(0.1, 1.1)^n` and each agent's share observed at a fraction drawn from
/// `observed`.
pub fn random_dataset<R: Rng>(rng: &mut R, steps: usize, agents: usize, goods: usize, observed: (f64, f64)) -> Dataset {
    let obs = (0..steps)
        .map(|_| {
            let alpha: Vec<f64> = (0..goods).map(|_| rng.random_range(0.1..1.1)).collect();
            let hidden: Vec<Vec<f64>> = (0..agents)
                .map(|_| (0..goods).map(|_| rng.random_range(0.0..1.0)).collect())
                .collect();
            let aggregate = (0..goods).map(|k| hidden.iter().map(|b| b[k]).sum()).collect();
            let assignable = hidden
                .iter()
                .map(|b| {
                    let s = if observed.0 == observed.1 { observed.0 } else { rng.random_range(observed.0..observed.1) };
                    b.iter().map(|v| s * v).collect()
                })
                .collect();
            Observation::new(Probe::new(alpha), aggregate, assignable)
        })
        .collect();
    Dataset::new(obs).unwrap()
}

/// Decides the encoding by trying every binary assignment.
pub fn enumeration_oracle(problem: &MilpProblem) -> bool {
    let b = problem.num_binaries();
    assert!(b <= 16, "{b} binaries is too many to enumerate");
    (0u32..(1 << b)).any(|mask| {
        let binaries: Vec<bool> = (0..b).map(|j| mask >> j & 1 == 1).collect();
        match problem.linear_program(&binaries) {
            None => false,
            Some(lp) => lp::solve(&lp).unwrap().status == LpStatus::Optimal,
        }
    })
}

/// GARP by Floyd-Warshall on one agent's bundles, with the same weak and
/// strict comparisons the encoding uses.
pub fn garp_holds(prices: &[&[f64]], bundles: &[&[f64]], tolerance: f64) -> bool {
    let t = prices.len();
    let mut reach = vec![vec![false; t]; t];
    for s in 0..t {
        for u in 0..t {
            reach[s][u] = s != u && dot(prices[s], bundles[s]) >= dot(prices[s], bundles[u]) - tolerance;
        }
    }
    for k in 0..t {
        for s in 0..t {
            for u in 0..t {
                if reach[s][k] && reach[k][u] {
                    reach[s][u] = true;
                }
            }
        }
    }
    (0..t).all(|s| (0..t).all(|u| s == u || !reach[s][u] || dot(prices[u], bundles[u]) <= dot(prices[u], bundles[s]) + tolerance))
}

/// Witness check: feasibility against the dataset and GARP for every agent.
pub fn witness_is_valid(dataset: &Dataset, witness: &PersonalizedAllocation) -> bool {
    let feasible = witness.max_violation(dataset).is_some_and(|v| v <= 1e-7);
    let prices: Vec<&[f64]> = dataset.observations().iter().map(|o| o.probe.as_slice()).collect();
    feasible && (0..dataset.agents()).all(|i| garp_holds(&prices, &witness.agent_bundles(i), 1e-8))
}

/// Optimum of a small bounded LP by enumerating every basic solution.
/// Bounds must be finite. `None` when infeasible.
pub fn vertex_oracle(lp: &LinearProgram) -> Option<f64> {
    let n = lp.num_vars();
    // every row as a . x <= b, equalities twice
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let negated = |c: &[f64]| c.iter().map(|v| -v).collect::<Vec<f64>>();
    for c in lp.constraints() {
        if c.relation != Relation::Ge {
            rows.push((c.coeffs.clone(), c.rhs));
        }
        if c.relation != Relation::Le {
            rows.push((negated(&c.coeffs), -c.rhs));
        }
    }
    for (j, &(lo, hi)) in lp.bounds().iter().enumerate() {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        rows.push((negated(&e), -lo));
        rows.push((e, hi));
    }
    let mut best: Option<f64> = None;
    let sign = match lp.sense() {
        coordscope::lp::Sense::Maximize => -1.0,
        _ => 1.0,
    };
    for subset in combinations(rows.len(), n) {
        let a = subset.iter().map(|&r| rows[r].0.clone()).collect();
        let b = subset.iter().map(|&r| rows[r].1).collect();
        let Some(x) = solve_square(a, b) else { continue };
        if rows.iter().all(|(r, rhs)| dot(r, &x) <= rhs + 1e-9) {
            let v = sign * dot(lp.objective(), &x);
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
    }
    best.map(|v| sign * v)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Gaussian elimination with partial pivoting; `None` if singular.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..n {
                        a[r][c] -= f * a[col][c];
                    }
                    b[r] -= f * b[col];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Best weighted-sum value over a grid of budget shares (and of spend
/// splits inside each agent), refined once around the best cell.
///
/// Works for two goods and up to three agents.
pub fn grid_allocation_oracle(spec: &NetworkSpec, alpha: &[f64]) -> f64 {
    assert_eq!(alpha.len(), 2);
    let m = spec.agents().len();
    assert!((1..=3).contains(&m));
    let c = spec.budget();
    const COARSE: usize = 200;

    // best utility of agent i when it spends w, found on a split grid
    let agent_value = |i: usize, w: f64| -> f64 {
        let u = &spec.agents()[i].utility;
        let value_at = |f: f64| u.value(&[f * w / alpha[0], (1.0 - f) * w / alpha[1]]);
        let (mut best_f, mut best) = (0.0, f64::NEG_INFINITY);
        for j in 0..=COARSE {
            let f = j as f64 / COARSE as f64;
            let v = value_at(f);
            if v > best {
                best = v;
                best_f = f;
            }
        }
        let h = 1.0 / COARSE as f64;
        for j in 0..=20 {
            let f = (best_f - h + j as f64 * h / 10.0).clamp(0.0, 1.0);
            best = best.max(value_at(f));
        }
        spec.weights()[i] * best
    };
    // per-agent values on the coarse share grid do not depend on the others
    let coarse: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..=COARSE).map(|a| agent_value(i, c * a as f64 / COARSE as f64)).collect())
        .collect();
    let mut best = (f64::NEG_INFINITY, vec![0.0; m]);
    match m {
        1 => best = (coarse[0][COARSE], vec![c]),
        2 => {
            for a in 0..=COARSE {
                let v = coarse[0][a] + coarse[1][COARSE - a];
                if v > best.0 {
                    best = (v, vec![c * a as f64 / COARSE as f64, c * (COARSE - a) as f64 / COARSE as f64]);
                }
            }
        }
        _ => {
            for a in 0..=COARSE {
                for b in 0..=(COARSE - a) {
                    let v = coarse[0][a] + coarse[1][b] + coarse[2][COARSE - a - b];
                    if v > best.0 {
                        let w = |k: usize| c * k as f64 / COARSE as f64;
                        best = (v, vec![w(a), w(b), w(COARSE - a - b)]);
                    }
                }
            }
        }
    }
    let total = |shares: &[f64]| -> f64 { (0..m).map(|i| agent_value(i, shares[i])).sum() };
    let consider = |shares: Vec<f64>, best: &mut (f64, Vec<f64>)| {
        let v = total(&shares);
        if v > best.0 {
            *best = (v, shares);
        }
    };
    // refine x10 inside the neighbouring cells
    let h = c / COARSE as f64;
    let center = best.1.clone();
    match m {
        1 => {}
        2 => {
            for j in 0..=20 {
                let w = (center[0] - h + j as f64 * h / 10.0).clamp(0.0, c);
                consider(vec![w, c - w], &mut best);
            }
        }
        _ => {
            for j in 0..=20 {
                for k in 0..=20 {
                    let w1 = (center[0] - h + j as f64 * h / 10.0).clamp(0.0, c);
                    let w2 = (center[1] - h + k as f64 * h / 10.0).clamp(0.0, c);
                    if w1 + w2 <= c {
                        consider(vec![w1, w2, c - w1 - w2], &mut best);
                    }
                }
            }
        }
    }
    best.0
}
