//! Forward model of a cognitive radar network that splits a shared power
//! budget Pareto-optimally, observed through an omnidirectional aggregate
//! receiver and a narrowbeam per-radar receiver that sees a fraction of
//! each radar's output.

mod track;

pub use track::{track, TargetModel, TrackError, Trajectories};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, Observation, PersonalizedAllocation, Probe};

/// Support of each probe component.
pub const PROBE_RANGE: (f64, f64) = (0.1, 1.1);
/// Support of the per-radar observed fraction.
pub const SCALE_RANGE: (f64, f64) = (0.1, 1.0);

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("probe must have {expected} strictly positive components")]
    InvalidProbe { expected: usize },
    #[error("weighted-sum solver did not converge")]
    NonConvergence,
    #[error("need at least one time step")]
    NoSteps,
    #[error("failed to read agent spec: {0}")]
    SpecFile(String),
}

/// Radar utility over its response spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Utility {
    /// `prod_k beta(k)`, the determinant of `R^{-1}`.
    Product,
    /// `sum_k beta(k)`, the trace of `R^{-1}`.
    Sum,
    /// `prod_k beta(k)^{a_k}` with `a_k > 0`.
    PowerProduct(Vec<f64>),
}

impl Utility {
    fn exponents(&self, goods: usize) -> Option<Vec<f64>> {
        match self {
            Utility::Product => Some(vec![1.0; goods]),
            Utility::PowerProduct(a) => Some(a.clone()),
            Utility::Sum => None,
        }
    }

    pub fn value(&self, beta: &[f64]) -> f64 {
        match self {
            Utility::Product => beta.iter().product(),
            Utility::Sum => beta.iter().sum(),
            Utility::PowerProduct(a) => beta.iter().zip(a).map(|(b, e)| b.powf(*e)).product(),
        }
    }

    /// Utility-maximizing bundle costing exactly `budget` at `alpha`.
    pub fn demand(&self, alpha: &[f64], budget: f64) -> Vec<f64> {
        let n = alpha.len();
        match self.exponents(n) {
            Some(a) => {
                let total: f64 = a.iter().sum();
                (0..n).map(|k| a[k] / total * budget / alpha[k]).collect()
            }
            None => {
                let cheapest = (0..n)
                    .min_by(|&x, &y| alpha[x].total_cmp(&alpha[y]))
                    .expect("at least one good");
                let mut b = vec![0.0; n];
                b[cheapest] = budget / alpha[cheapest];
                b
            }
        }
    }

    /// Homogeneity degree `d` of the indirect utility `V(w) = V(1) w^d`.
    fn degree(&self, goods: usize) -> f64 {
        self.exponents(goods).map_or(1.0, |a| a.iter().sum())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub utility: Utility,
}

/// Agents, Pareto weights, power budget `C` and response dimension `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    agents: Vec<AgentSpec>,
    #[serde(rename = "pareto_weights")]
    weights: Vec<f64>,
    budget: f64,
    goods: usize,
}

impl NetworkSpec {
    pub fn new(agents: Vec<AgentSpec>, weights: Vec<f64>, budget: f64, goods: usize) -> Result<Self, SimError> {
        let bad = |msg: String| Err(SimError::InvalidSpec(msg));
        if agents.is_empty() || goods == 0 {
            return bad("need at least one agent and one good".into());
        }
        if weights.len() != agents.len() {
            return bad(format!("{} weights for {} agents", weights.len(), agents.len()));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return bad("Pareto weights must be positive".into());
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return bad(format!("Pareto weights sum to {sum}, expected 1"));
        }
        if !(budget > 0.0 && budget.is_finite()) {
            return bad(format!("budget must be positive, got {budget}"));
        }
        for (i, a) in agents.iter().enumerate() {
            if let Utility::PowerProduct(e) = &a.utility {
                if e.len() != goods || e.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                    return bad(format!("agent {}: need {goods} positive exponents", i + 1));
                }
            }
        }
        Ok(Self { agents, weights, budget, goods })
    }

    /// The three-radar network: `b1*b2`, `b1+b2`, `sqrt(b1)*b2` with weights
    /// `(0.3, 0.3, 0.4)` and unit budget.
    pub fn tri_radar() -> Self {
        Self::new(
            vec![
                AgentSpec { utility: Utility::Product },
                AgentSpec { utility: Utility::Sum },
                AgentSpec { utility: Utility::PowerProduct(vec![0.5, 1.0]) },
            ],
            vec![0.3, 0.3, 0.4],
            1.0,
            2,
        )
        .expect("valid built-in spec")
    }

    pub fn agents(&self) -> &[AgentSpec] {
        &self.agents
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn goods(&self) -> usize {
        self.goods
    }

    /// `sum_i mu_i U^i(bundle_i)`
    pub fn weighted_value(&self, bundles: &[Vec<f64>]) -> f64 {
        self.agents
            .iter()
            .zip(&self.weights)
            .zip(bundles)
            .map(|((a, w), b)| w * a.utility.value(b))
            .sum()
    }

    /// Parses the agent file: a JSON list of
    /// `{"utility": "product"|"sum"|"powerprod", "exponents": [..], "weight": mu}`.
    pub fn from_agent_file(text: &str, budget: f64, goods: usize) -> Result<Self, SimError> {
        #[derive(Deserialize)]
        struct Entry {
            utility: String,
            #[serde(default)]
            exponents: Vec<f64>,
            weight: f64,
        }
        let entries: Vec<Entry> = serde_json::from_str(text).map_err(|e| SimError::SpecFile(e.to_string()))?;
        let mut agents = Vec::with_capacity(entries.len());
        let mut weights = Vec::with_capacity(entries.len());
        for e in entries {
            let utility = match e.utility.as_str() {
                "product" => Utility::Product,
                "sum" => Utility::Sum,
                "powerprod" => Utility::PowerProduct(e.exponents),
                other => return Err(SimError::SpecFile(format!("unknown utility {other:?}"))),
            };
            agents.push(AgentSpec { utility });
            weights.push(e.weight);
        }
        Self::new(agents, weights, budget, goods)
    }

    pub fn to_agent_file(&self) -> String {
        let entries: Vec<serde_json::Value> = self
            .agents
            .iter()
            .zip(&self.weights)
            .map(|(a, w)| match &a.utility {
                Utility::Product => serde_json::json!({"utility": "product", "weight": w}),
                Utility::Sum => serde_json::json!({"utility": "sum", "weight": w}),
                Utility::PowerProduct(e) => serde_json::json!({"utility": "powerprod", "exponents": e, "weight": w}),
            })
            .collect();
        serde_json::to_string_pretty(&entries).expect("spec serializes")
    }
}

pub fn sample_probe<R: Rng + ?Sized>(rng: &mut R, goods: usize) -> Probe {
    Probe::new((0..goods).map(|_| rng.random_range(PROBE_RANGE.0..PROBE_RANGE.1)).collect())
}

/// Pareto-optimal split of the budget at one probe.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// Budget share `w_i = alpha' beta^i` per agent.
    pub shares: Vec<f64>,
    pub bundles: Vec<Vec<f64>>,
    pub objective: f64,
}

/// Grid points for the share of the one agent of degree >= 1 that may get
/// a positive share; each local maximum on the grid is then refined.
const SCAN: usize = 1_000;

/// Maximizes `sum_i mu_i U^i(zeta_i)` subject to `alpha'(sum_i zeta_i) <= C`.
///
/// Every utility here is homogeneous, so agent `i` spending `w_i` at its
/// best split is worth `c_i w_i^{d_i}` and only the shares `w` remain to be
/// chosen. Agents with `d_i < 1` are concave in their share and split what
/// they get by equalizing marginal value. Moving budget between two agents
/// with `d >= 1` is convex, so at most one of them needs a positive share;
/// each choice of that agent leaves a one-dimensional problem in its share,
/// solved by a grid scan and golden-section refinement.
pub fn allocate(spec: &NetworkSpec, probe: &Probe) -> Result<Allocation, SimError> {
    let alpha = probe.as_slice();
    if alpha.len() != spec.goods || alpha.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
        return Err(SimError::InvalidProbe { expected: spec.goods });
    }
    let m = spec.agents.len();
    let budget = spec.budget;
    let coef: Vec<f64> = spec
        .agents
        .iter()
        .zip(&spec.weights)
        .map(|(a, mu)| mu * a.utility.value(&a.utility.demand(alpha, 1.0)))
        .collect();
    let degree: Vec<f64> = spec.agents.iter().map(|a| a.utility.degree(spec.goods)).collect();
    let concave: Vec<usize> = (0..m).filter(|&i| coef[i] > 0.0 && degree[i] < 1.0).collect();
    let heavy: Vec<usize> = (0..m).filter(|&i| coef[i] > 0.0 && degree[i] >= 1.0).collect();

    let value = |w: &[f64]| -> f64 { (0..m).map(|i| coef[i] * w[i].powf(degree[i])).sum() };
    let split = |rest: f64| -> Vec<f64> { water_fill(&concave, &coef, &degree, rest, m) };
    let with = |j: usize, wj: f64| -> Vec<f64> {
        let mut w = split(budget - wj);
        w[j] = wj;
        w
    };

    let mut candidates = vec![split(budget)];
    for &j in &heavy {
        let f = |wj: f64| value(&with(j, wj));
        let grid: Vec<f64> = (0..=SCAN).map(|k| budget * k as f64 / SCAN as f64).collect();
        let vals: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
        for k in 0..=SCAN {
            let left = if k > 0 { vals[k - 1] } else { f64::NEG_INFINITY };
            let right = if k < SCAN { vals[k + 1] } else { f64::NEG_INFINITY };
            if vals[k] >= left && vals[k] >= right {
                let lo = grid[k.saturating_sub(1)];
                let hi = grid[(k + 1).min(SCAN)];
                let refined = golden_max(&f, lo, hi);
                candidates.push(with(j, grid[k]));
                candidates.push(with(j, refined));
            }
        }
    }
    let best = candidates
        .into_iter()
        .map(|w| (value(&w), w))
        .filter(|(v, _)| v.is_finite())
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .ok_or(SimError::NonConvergence)?
        .1;
    let bundles: Vec<Vec<f64>> = spec
        .agents
        .iter()
        .zip(&best)
        .map(|(a, &w)| a.utility.demand(alpha, w))
        .collect();
    let objective = spec.weighted_value(&bundles);
    if !objective.is_finite() {
        return Err(SimError::NonConvergence);
    }
    Ok(Allocation { shares: best, bundles, objective })
}

/// Shares of `rest` for the concave agents, equalizing the marginal value
/// `c_i d_i w_i^{d_i - 1}`. Everyone else gets zero.
fn water_fill(concave: &[usize], coef: &[f64], degree: &[f64], rest: f64, m: usize) -> Vec<f64> {
    let mut w = vec![0.0; m];
    if concave.is_empty() || rest <= 0.0 {
        return w;
    }
    // share at marginal value exp(l); decreasing in l
    let share = |i: usize, l: f64| ((coef[i] * degree[i]).ln() - l) / (1.0 - degree[i]);
    let total = |l: f64| concave.iter().map(|&i| share(i, l).exp()).sum::<f64>();
    let (mut lo, mut hi) = (-1.0, 1.0);
    while total(lo) < rest {
        lo *= 2.0;
    }
    while total(hi) > rest {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) > rest {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let l = 0.5 * (lo + hi);
    for &i in concave {
        w[i] = share(i, l).exp();
    }
    // the bisection leaves a relative error near machine precision
    let s: f64 = concave.iter().map(|&i| w[i]).sum();
    concave.iter().for_each(|&i| w[i] *= rest / s);
    w
}

fn golden_max(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut a = hi - ratio * (hi - lo);
    let mut b = lo + ratio * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..100 {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + ratio * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - ratio * (hi - lo);
            fa = f(a);
        }
    }
    if fa > fb { a } else { b }
}

/// Measures aggregate power exactly and each radar through a random fraction
/// `S_i ~ Unif(0.1, 1)` drawn independently per radar.
pub fn observe<R: Rng + ?Sized>(probe: &Probe, bundles: &[Vec<f64>], rng: &mut R) -> Observation {
    let scales: Vec<f64> = bundles.iter().map(|_| rng.random_range(SCALE_RANGE.0..SCALE_RANGE.1)).collect();
    observe_with_scales(probe, bundles, &scales)
}

pub fn observe_with_scales(probe: &Probe, bundles: &[Vec<f64>], scales: &[f64]) -> Observation {
    let n = probe.dim();
    let aggregate = (0..n).map(|k| bundles.iter().map(|b| b[k]).sum()).collect();
    let assignable = bundles
        .iter()
        .zip(scales)
        .map(|(b, s)| b.iter().map(|v| s * v).collect())
        .collect();
    Observation::new(probe.clone(), aggregate, assignable)
}

/// Coordinated run of `steps` observations; also returns the hidden
/// per-radar responses.
pub fn simulate(spec: &NetworkSpec, steps: usize, seed: u64) -> Result<(Dataset, PersonalizedAllocation), SimError> {
    simulate_with_rng(spec, steps, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn simulate_with_rng<R: Rng + ?Sized>(
    spec: &NetworkSpec,
    steps: usize,
    rng: &mut R,
) -> Result<(Dataset, PersonalizedAllocation), SimError> {
    if steps == 0 {
        return Err(SimError::NoSteps);
    }
    let mut observations = Vec::with_capacity(steps);
    let mut truth = Vec::with_capacity(steps);
    for _ in 0..steps {
        let probe = sample_probe(rng, spec.goods);
        let alloc = allocate(spec, &probe)?;
        observations.push(observe(&probe, &alloc.bundles, rng));
        truth.push(alloc.bundles);
    }
    let dataset = Dataset::new(observations).expect("simulator output is well-shaped");
    Ok((dataset, PersonalizedAllocation::new(truth)))
}

/// Uncoordinated run: each radar's response is i.i.d. `Unif(0,1)^N`.
pub fn simulate_independent(agents: usize, goods: usize, steps: usize, seed: u64) -> Result<Dataset, SimError> {
    simulate_independent_with_rng(agents, goods, steps, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn simulate_independent_with_rng<R: Rng + ?Sized>(
    agents: usize,
    goods: usize,
    steps: usize,
    rng: &mut R,
) -> Result<Dataset, SimError> {
    if steps == 0 {
        return Err(SimError::NoSteps);
    }
    if agents == 0 || goods == 0 {
        return Err(SimError::InvalidSpec("need at least one agent and one good".into()));
    }
    let mut observations = Vec::with_capacity(steps);
    for _ in 0..steps {
        let probe = sample_probe(rng, goods);
        let bundles: Vec<Vec<f64>> = (0..agents)
            .map(|_| (0..goods).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        observations.push(observe(&probe, &bundles, rng));
    }
    Ok(Dataset::new(observations).expect("simulator output is well-shaped"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(utility: Utility) -> NetworkSpec {
        NetworkSpec::new(vec![AgentSpec { utility }], vec![1.0], 1.0, 2).unwrap()
    }

    #[test]
    fn linear_utility_takes_the_cheap_corner() {
        let a = allocate(&single(Utility::Sum), &Probe::new(vec![1.0, 2.0])).unwrap();
        assert_eq!(a.bundles, vec![vec![1.0, 0.0]]);
    }

    #[test]
    fn cobb_douglas_closed_form() {
        let a = allocate(&single(Utility::Product), &Probe::new(vec![0.4, 0.8])).unwrap();
        assert!((a.bundles[0][0] - 1.0 / 0.8).abs() < 1e-12);
        assert!((a.bundles[0][1] - 1.0 / 1.6).abs() < 1e-12);
    }

    #[test]
    fn spec_validation() {
        let agents = vec![AgentSpec { utility: Utility::Sum }];
        assert!(NetworkSpec::new(agents.clone(), vec![0.5], 1.0, 2).is_err());
        assert!(NetworkSpec::new(agents.clone(), vec![1.0], 0.0, 2).is_err());
        let bad = vec![AgentSpec { utility: Utility::PowerProduct(vec![1.0]) }];
        assert!(NetworkSpec::new(bad, vec![1.0], 1.0, 2).is_err());
    }

    #[test]
    fn agent_file_round_trip() {
        let spec = NetworkSpec::tri_radar();
        let back = NetworkSpec::from_agent_file(&spec.to_agent_file(), 1.0, 2).unwrap();
        assert_eq!(back, spec);
        assert!(NetworkSpec::from_agent_file(r#"[{"utility":"cubic","weight":1}]"#, 1.0, 2).is_err());
    }

    #[test]
    fn observation_boundaries() {
        let probe = Probe::new(vec![1.0, 1.0]);
        let bundles = vec![vec![0.2, 0.4], vec![0.6, 0.0]];
        let full = observe_with_scales(&probe, &bundles, &[1.0, 1.0]);
        assert_eq!(full.assignable, bundles);
        assert_eq!(full.aggregate, vec![0.8, 0.4]);
        let tenth = observe_with_scales(&probe, &bundles, &[0.1, 0.1]);
        assert_eq!(tenth.assignable[0], vec![0.1 * 0.2, 0.1 * 0.4]);
    }

    #[test]
    fn water_fill_equalizes_marginal_value() {
        // 0.5 w1^-0.5 = 2 w2^-0.5 gives w2 = 16 w1
        let w = water_fill(&[0, 2], &[1.0, 9.0, 4.0], &[0.5, 2.0, 0.5], 1.0, 3);
        assert!((w[0] - 1.0 / 17.0).abs() < 1e-14);
        assert_eq!(w[1], 0.0);
        assert!((w[0] + w[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_steps_is_an_error() {
        assert!(matches!(simulate(&NetworkSpec::tri_radar(), 0, 1), Err(SimError::NoSteps)));
        assert!(matches!(simulate_independent(3, 2, 0, 1), Err(SimError::NoSteps)));
    }
}
