//! Afriat certificates and the min-of-affine utilities they induce.
//!
//! Given hidden bundles `q_t` for one agent, a certificate is a pair of
//! positive vectors `(u, lambda)` with
//! `u_s - u_t <= lambda_t * (alpha_t'q_s - alpha_t'q_t)` for all `s, t`.
//! The reconstructed utility is
//! `U(beta) = min_t { u_t + lambda_t * alpha_t'(beta - q_t) }`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{dot, Dataset, PersonalizedAllocation, FEASIBILITY_TOLERANCE};
use crate::lp::{self, LinearProgram, LpError, LpStatus, Relation};

/// Slack demanded on each non-tie Afriat inequality.
const PAIR_MARGIN: f64 = 1e-6;
/// Expenditure gaps this small count as ties.
const TIE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum AfriatError {
    #[error("no Afriat certificate exists for agent {}: the bundles violate GARP", .agent + 1)]
    InfeasibleCertificate { agent: usize },
    #[error("witness does not fit the dataset (max violation {0:e})")]
    WitnessMismatch(f64),
    #[error("agent index {agent} out of range (M = {agents})")]
    NoSuchAgent { agent: usize, agents: usize },
    #[error("expected a bundle of dimension {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("contours need N = 2, dataset has N = {0}")]
    UnsupportedDimension(usize),
    #[error("expected one certificate per agent ({expected}), got {found}")]
    CertificateCount { expected: usize, found: usize },
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Utility levels `u_t` and marginal-utility-of-income multipliers `lambda_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfriatCertificate {
    pub u: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl AfriatCertificate {
    /// Worst breach of the Afriat inequalities for `bundles` under `prices`.
    pub fn max_violation(&self, prices: &[&[f64]], bundles: &[&[f64]]) -> f64 {
        let steps = self.u.len();
        let mut worst: f64 = 0.0;
        for s in 0..steps {
            for t in 0..steps {
                let rhs = self.lambda[t] * (dot(prices[t], bundles[s]) - dot(prices[t], bundles[t]));
                worst = worst.max(self.u[s] - self.u[t] - rhs);
            }
        }
        worst
    }
}

fn check_witness(dataset: &Dataset, witness: &PersonalizedAllocation, agent: usize) -> Result<(), AfriatError> {
    if agent >= dataset.agents() {
        return Err(AfriatError::NoSuchAgent { agent, agents: dataset.agents() });
    }
    match witness.max_violation(dataset) {
        Some(v) if v <= FEASIBILITY_TOLERANCE => Ok(()),
        Some(v) => Err(AfriatError::WitnessMismatch(v)),
        None => Err(AfriatError::WitnessMismatch(f64::INFINITY)),
    }
}

/// Solves the Afriat inequalities for one agent's hidden bundles.
///
/// The representative returned minimizes `sum_t lambda_t` subject to
/// `u_t >= 1` and `lambda_t >= 1`, with every inequality between bundles of
/// different cost held by a margin of `1e-6` when the data allow it. The
/// levels are then lowered to the fixed point `u_t = U(q_t)`, which moves
/// them by at most the LP tolerance and makes every piece tight at its own
/// anchor in floating point.
pub fn solve_certificate(
    dataset: &Dataset,
    witness: &PersonalizedAllocation,
    agent: usize,
) -> Result<AfriatCertificate, AfriatError> {
    check_witness(dataset, witness, agent)?;
    let steps = dataset.len();
    let prices: Vec<&[f64]> = dataset.observations().iter().map(|o| o.probe.as_slice()).collect();
    let bundles = witness.agent_bundles(agent);

    // without slack, cycles of tight pairs let rounding drag the levels down
    let sol = match certificate_lp(&prices, &bundles, PAIR_MARGIN).ok().flatten() {
        Some(sol) => sol,
        None => match certificate_lp(&prices, &bundles, 0.0)? {
            Some(sol) => sol,
            None => return Err(AfriatError::InfeasibleCertificate { agent }),
        },
    };
    let mut cert = AfriatCertificate {
        u: sol[..steps].to_vec(),
        lambda: sol[steps..].to_vec(),
    };
    if cert.max_violation(&prices, &bundles) > FEASIBILITY_TOLERANCE {
        return Err(AfriatError::InfeasibleCertificate { agent });
    }
    tighten(&mut cert, &prices, &bundles);
    Ok(cert)
}

/// Minimizes `sum_t lambda_t` over `u, lambda >= 1` subject to the Afriat
/// inequalities, each strengthened by `margin` unless the pair is a tie.
fn certificate_lp(prices: &[&[f64]], bundles: &[&[f64]], margin: f64) -> Result<Option<Vec<f64>>, AfriatError> {
    let steps = prices.len();
    let mut objective = vec![0.0; 2 * steps];
    objective[steps..].iter_mut().for_each(|c| *c = 1.0);
    let mut lp = LinearProgram::new(2 * steps).minimize(objective);
    for j in 0..2 * steps {
        lp.set_bounds(j, 1.0, f64::INFINITY);
    }
    for s in 0..steps {
        for t in 0..steps {
            if s == t {
                continue;
            }
            let gap = dot(prices[t], bundles[s]) - dot(prices[t], bundles[t]);
            let rhs = if gap.abs() <= TIE { 0.0 } else { -margin };
            lp.add_sparse(&[(s, 1.0), (t, -1.0), (steps + t, -gap)], Relation::Le, rhs);
        }
    }
    let sol = lp::solve(&lp)?;
    Ok(match sol.status {
        LpStatus::Optimal => Some(sol.primal),
        LpStatus::Infeasible | LpStatus::Unbounded => None,
    })
}

fn tighten(cert: &mut AfriatCertificate, prices: &[&[f64]], bundles: &[&[f64]]) {
    let steps = cert.u.len();
    for _ in 0..=steps {
        let utility = PiecewiseLinearUtility::from_parts(cert, prices, bundles);
        let mut changed = false;
        for t in 0..steps {
            let v = utility.value(bundles[t]);
            if v < cert.u[t] {
                cert.u[t] = v;
                changed = true;
            }
        }
        if !changed {
            return;
        }
    }
    log::debug!("certificate tightening did not settle in {} rounds", steps + 1);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinePiece {
    pub level: f64,
    pub scale: f64,
    pub price: Vec<f64>,
    pub anchor: Vec<f64>,
}

impl AffinePiece {
    fn value(&self, beta: &[f64]) -> f64 {
        let shifted: f64 = self
            .price
            .iter()
            .zip(beta.iter().zip(&self.anchor))
            .map(|(a, (b, q))| a * (b - q))
            .sum();
        self.level + self.scale * shifted
    }
}

/// Concave, nondecreasing minimum of affine pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinearUtility {
    pieces: Vec<AffinePiece>,
}

impl PiecewiseLinearUtility {
    pub fn new(pieces: Vec<AffinePiece>) -> Self {
        Self { pieces }
    }

    /// Assembles the utility of `agent` from its certificate and witness bundles.
    pub fn reconstruct(
        dataset: &Dataset,
        witness: &PersonalizedAllocation,
        agent: usize,
        cert: &AfriatCertificate,
    ) -> Self {
        let prices: Vec<&[f64]> = dataset.observations().iter().map(|o| o.probe.as_slice()).collect();
        Self::from_parts(cert, &prices, &witness.agent_bundles(agent))
    }

    fn from_parts(cert: &AfriatCertificate, prices: &[&[f64]], bundles: &[&[f64]]) -> Self {
        let pieces = (0..cert.u.len())
            .map(|t| AffinePiece {
                level: cert.u[t],
                scale: cert.lambda[t],
                price: prices[t].to_vec(),
                anchor: bundles[t].to_vec(),
            })
            .collect();
        Self { pieces }
    }

    pub fn pieces(&self) -> &[AffinePiece] {
        &self.pieces
    }

    pub fn dim(&self) -> usize {
        self.pieces.first().map_or(0, |p| p.price.len())
    }

    pub fn evaluate(&self, beta: &[f64]) -> Result<f64, AfriatError> {
        if beta.len() != self.dim() {
            return Err(AfriatError::DimensionMismatch { expected: self.dim(), found: beta.len() });
        }
        Ok(self.value(beta))
    }

    fn value(&self, beta: &[f64]) -> f64 {
        self.pieces.iter().map(|p| p.value(beta)).fold(f64::INFINITY, f64::min)
    }
}

/// Outcome of sampling budget-feasible deviations against the reconstruction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RationalizationReport {
    pub samples: usize,
    /// Largest `sum_i mu_i U^i(zeta^i) - sum_i mu_i U^i(q_t^i)` seen.
    pub max_violation: f64,
    pub violations: usize,
    /// Absorbed Pareto weights per observation, `mu_t^i` proportional to `1 / lambda_t^i`.
    pub weights: Vec<Vec<f64>>,
}

impl RationalizationReport {
    pub fn is_clean(&self) -> bool {
        self.violations == 0
    }
}

/// Checks that each witness allocation maximizes the weighted sum of
/// reconstructed utilities over its observation's group budget.
///
/// Per observation `t` the agents are weighted by `1 / lambda_t^i`
/// (normalized), which equalizes their weighted marginal utility of income;
/// these are the Pareto weights the certificates absorb. `k` random
/// deviations are drawn per observation, plus every corner that spends the
/// whole budget on a single good of a single agent.
pub fn rationalization_check<R: Rng + ?Sized>(
    dataset: &Dataset,
    witness: &PersonalizedAllocation,
    certificates: &[AfriatCertificate],
    k: usize,
    rng: &mut R,
) -> Result<RationalizationReport, AfriatError> {
    let (m, n) = (dataset.agents(), dataset.goods());
    if certificates.len() != m {
        return Err(AfriatError::CertificateCount { expected: m, found: certificates.len() });
    }
    check_witness(dataset, witness, 0)?;
    let utilities: Vec<PiecewiseLinearUtility> = (0..m)
        .map(|i| PiecewiseLinearUtility::reconstruct(dataset, witness, i, &certificates[i]))
        .collect();
    let mut report = RationalizationReport { samples: 0, max_violation: f64::NEG_INFINITY, violations: 0, weights: Vec::new() };
    for (t, obs) in dataset.observations().iter().enumerate() {
        let inv: Vec<f64> = certificates.iter().map(|c| 1.0 / c.lambda[t]).collect();
        let total: f64 = inv.iter().sum();
        let mu: Vec<f64> = inv.iter().map(|w| w / total).collect();
        let at_witness: f64 = (0..m).map(|i| mu[i] * utilities[i].value(witness.bundle(t, i))).sum();
        let budget = obs.expenditure();
        let alpha = obs.probe.as_slice();

        let mut deviations: Vec<Vec<Vec<f64>>> = Vec::with_capacity(k + m * n + 1);
        deviations.push((0..m).map(|i| witness.bundle(t, i).to_vec()).collect());
        for i in 0..m {
            for g in 0..n {
                let mut z = vec![vec![0.0; n]; m];
                z[i][g] = budget / alpha[g];
                deviations.push(z);
            }
        }
        for _ in 0..k {
            // spend a random share of the budget, split by normalized exponentials
            let spend = if rng.random_bool(0.5) { budget } else { budget * rng.random::<f64>() };
            let draws: Vec<f64> = (0..m * n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
            let sum: f64 = draws.iter().sum();
            let z = (0..m)
                .map(|i| (0..n).map(|g| spend * draws[i * n + g] / sum / alpha[g]).collect())
                .collect();
            deviations.push(z);
        }
        for z in &deviations {
            let value: f64 = (0..m).map(|i| mu[i] * utilities[i].value(&z[i])).sum();
            let excess = value - at_witness;
            report.max_violation = report.max_violation.max(excess);
            if excess > FEASIBILITY_TOLERANCE {
                report.violations += 1;
            }
        }
        report.samples += deviations.len();
        report.weights.push(mu);
    }
    Ok(report)
}

/// Rectangular evaluation grid over `(beta1, beta2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub beta1: (f64, f64),
    pub beta2: (f64, f64),
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    /// `resolution x resolution` grid spanning the bundles' range padded by
    /// 10% on each side, clipped at zero.
    pub fn around(bundles: &[&[f64]], resolution: usize) -> Self {
        let span = |k: usize| {
            let lo = bundles.iter().map(|b| b[k]).fold(f64::INFINITY, f64::min);
            let hi = bundles.iter().map(|b| b[k]).fold(f64::NEG_INFINITY, f64::max);
            let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };
            let pad = if hi > lo { 0.1 * (hi - lo) } else { 0.1 * hi.abs().max(1.0) };
            ((lo - pad).max(0.0), hi + pad)
        };
        Self { beta1: span(0), beta2: span(1), nx: resolution, ny: resolution }
    }

    fn axis(range: (f64, f64), count: usize, j: usize) -> f64 {
        if count <= 1 {
            range.0
        } else {
            range.0 + (range.1 - range.0) * j as f64 / (count - 1) as f64
        }
    }
}

/// CSV table `beta1,beta2,utility`, `beta1` as the outer (row) index.
pub fn export_contour(utility: &PiecewiseLinearUtility, grid: &GridSpec) -> Result<String, AfriatError> {
    if utility.dim() != 2 {
        return Err(AfriatError::UnsupportedDimension(utility.dim()));
    }
    let mut out = String::with_capacity(32 * grid.nx * grid.ny + 32);
    out.push_str("beta1,beta2,utility\n");
    for a in 0..grid.nx {
        let b1 = GridSpec::axis(grid.beta1, grid.nx, a);
        for b in 0..grid.ny {
            let b2 = GridSpec::axis(grid.beta2, grid.ny, b);
            let v = utility.value(&[b1, b2]);
            out.push_str(&format!("{b1},{b2},{v}\n"));
        }
    }
    Ok(out)
}
