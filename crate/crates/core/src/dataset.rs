//! Observed data: probes, aggregate responses and per-agent assignable
//! lower bounds, plus the hidden per-agent split an analyst hypothesizes.
//!
//! Indices are 0-based everywhere in memory. Files and human-facing messages
//! use 1-based `t` and agent numbers; the conversion lives in [`crate::io`]
//! and in the `Display` impls here.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for adding-up checks on reconstructed allocations.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-7;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Probe signal `alpha_t`: a strictly positive price-like vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Probe(Vec<f64>);

impl Probe {
    pub fn new(alpha: Vec<f64>) -> Self {
        Self(alpha)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Cost of `bundle` at this probe.
    pub fn price(&self, bundle: &[f64]) -> f64 {
        dot(&self.0, bundle)
    }
}

/// One time step of the dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub probe: Probe,
    /// `beta_t`, the summed response of all agents.
    pub aggregate: Vec<f64>,
    /// `beta_hat_t^i` per agent: observed lower bounds on each agent's share.
    pub assignable: Vec<Vec<f64>>,
}

impl Observation {
    pub fn new(probe: Probe, aggregate: Vec<f64>, assignable: Vec<Vec<f64>>) -> Self {
        Self { probe, aggregate, assignable }
    }

    /// `alpha_t' beta_t`.
    pub fn expenditure(&self) -> f64 {
        self.probe.price(&self.aggregate)
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset has no observations")]
    Empty,
    #[error("dataset needs at least one agent and one good")]
    ZeroDimension,
    #[error("observation {t}: {what} has length {found}, expected {expected}")]
    Shape { t: usize, what: String, expected: usize, found: usize },
    #[error("observation index {t} out of range (T = {len})")]
    IndexOutOfRange { t: usize, len: usize },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("unsupported schema version {found:?} (expected {expected:?})")]
    SchemaVersion { found: String, expected: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("value is not finite: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ordered collection of `T >= 1` observations sharing `M` agents and `N` goods.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    observations: Vec<Observation>,
    agents: usize,
    goods: usize,
}

impl Dataset {
    /// Checks the structural invariants (shared shape, nonempty). Value-level
    /// rules such as dominance are left to [`Dataset::validate`].
    pub fn new(observations: Vec<Observation>) -> Result<Self, DatasetError> {
        let first = observations.first().ok_or(DatasetError::Empty)?;
        let goods = first.probe.dim();
        let agents = first.assignable.len();
        if goods == 0 || agents == 0 {
            return Err(DatasetError::ZeroDimension);
        }
        for (t, obs) in observations.iter().enumerate() {
            let shape = |what: &str, expected, found| DatasetError::Shape {
                t: t + 1,
                what: what.to_string(),
                expected,
                found,
            };
            if obs.probe.dim() != goods {
                return Err(shape("alpha", goods, obs.probe.dim()));
            }
            if obs.aggregate.len() != goods {
                return Err(shape("beta", goods, obs.aggregate.len()));
            }
            if obs.assignable.len() != agents {
                return Err(shape("beta_hat", agents, obs.assignable.len()));
            }
            for (i, a) in obs.assignable.iter().enumerate() {
                if a.len() != goods {
                    return Err(shape(&format!("beta_hat[{}]", i + 1), goods, a.len()));
                }
            }
        }
        Ok(Self { observations, agents, goods })
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn observation(&self, t: usize) -> &Observation {
        &self.observations[t]
    }

    /// `T`
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// `M`
    pub fn agents(&self) -> usize {
        self.agents
    }

    /// `N`
    pub fn goods(&self) -> usize {
        self.goods
    }

    /// Group expenditure `y_t = alpha_t' beta_t` for 0-based `t`.
    pub fn group_expenditure(&self, t: usize) -> Result<f64, DatasetError> {
        self.observations
            .get(t)
            .map(Observation::expenditure)
            .ok_or(DatasetError::IndexOutOfRange { t, len: self.len() })
    }

    /// Reports every broken value-level invariant. Never fails.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (t, obs) in self.observations.iter().enumerate() {
            for (k, &a) in obs.probe.as_slice().iter().enumerate() {
                if !a.is_finite() {
                    out.push(Violation::at(t, None, k, Rule::NonFinite));
                } else if a <= 0.0 {
                    out.push(Violation::at(t, None, k, Rule::NonPositiveProbe));
                }
            }
            for (k, &b) in obs.aggregate.iter().enumerate() {
                if !b.is_finite() {
                    out.push(Violation::at(t, None, k, Rule::NonFinite));
                } else if b < 0.0 {
                    out.push(Violation::at(t, None, k, Rule::NegativeAggregate));
                }
            }
            for k in 0..self.goods {
                let total = obs.aggregate[k];
                let mut dominated = false;
                let mut sum = 0.0;
                for (i, a) in obs.assignable.iter().enumerate() {
                    let v = a[k];
                    if !v.is_finite() {
                        out.push(Violation::at(t, Some(i), k, Rule::NonFinite));
                        continue;
                    }
                    if v < 0.0 {
                        out.push(Violation::at(t, Some(i), k, Rule::NegativeAssignable));
                    }
                    if v > total {
                        out.push(Violation::at(t, Some(i), k, Rule::AssignableExceedsAggregate));
                        dominated = true;
                    }
                    sum += v;
                }
                // an individual excess already implies the summed one
                if !dominated && sum > total {
                    out.push(Violation::at(t, None, k, Rule::AssignableSumExceedsAggregate));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rule {
    NonFinite,
    NonPositiveProbe,
    NegativeAggregate,
    NegativeAssignable,
    /// `beta_hat_t^i > beta_t` in some component.
    AssignableExceedsAggregate,
    /// `sum_i beta_hat_t^i > beta_t` in some component.
    AssignableSumExceedsAggregate,
}

/// One broken invariant, located by 0-based observation, agent and good.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub t: usize,
    pub agent: Option<usize>,
    pub component: usize,
    pub rule: Rule,
}

impl Violation {
    fn at(t: usize, agent: Option<usize>, component: usize, rule: Rule) -> Self {
        Self { t, agent, component, rule }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={}", self.t + 1)?;
        if let Some(i) = self.agent {
            write!(f, " agent={}", i + 1)?;
        }
        write!(f, " component={}: {:?}", self.component + 1, self.rule)
    }
}

/// Hypothesized hidden consumption `q_t^i`, indexed `[t][i][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonalizedAllocation {
    q: Vec<Vec<Vec<f64>>>,
}

impl PersonalizedAllocation {
    pub fn new(q: Vec<Vec<Vec<f64>>>) -> Self {
        Self { q }
    }

    pub fn bundle(&self, t: usize, agent: usize) -> &[f64] {
        &self.q[t][agent]
    }

    pub fn as_nested(&self) -> &[Vec<Vec<f64>>] {
        &self.q
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// Bundles of one agent across all observations.
    pub fn agent_bundles(&self, agent: usize) -> Vec<&[f64]> {
        self.q.iter().map(|row| row[agent].as_slice()).collect()
    }

    /// Largest breach of adding-up, dominance or nonnegativity against `dataset`;
    /// `None` when the shapes disagree.
    pub fn max_violation(&self, dataset: &Dataset) -> Option<f64> {
        if self.q.len() != dataset.len() {
            return None;
        }
        let mut worst: f64 = 0.0;
        for (row, obs) in self.q.iter().zip(dataset.observations()) {
            if row.len() != dataset.agents() || row.iter().any(|b| b.len() != dataset.goods()) {
                return None;
            }
            for k in 0..dataset.goods() {
                let sum: f64 = row.iter().map(|b| b[k]).sum();
                worst = worst.max((sum - obs.aggregate[k]).abs());
                for (b, lo) in row.iter().zip(&obs.assignable) {
                    worst = worst.max(lo[k] - b[k]).max(-b[k]);
                }
            }
        }
        Some(worst)
    }

    /// True when adding-up and dominance hold within [`FEASIBILITY_TOLERANCE`].
    pub fn is_feasible_for(&self, dataset: &Dataset) -> bool {
        self.max_violation(dataset).is_some_and(|v| v <= FEASIBILITY_TOLERANCE)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(alpha: &[f64], beta: &[f64], hat: &[&[f64]]) -> Observation {
        Observation::new(
            Probe::new(alpha.to_vec()),
            beta.to_vec(),
            hat.iter().map(|h| h.to_vec()).collect(),
        )
    }

    #[test]
    fn expenditure_is_inner_product() {
        let d = Dataset::new(vec![
            obs(&[1.0, 1.0], &[2.0, 3.0], &[&[0.0, 0.0]]),
            obs(&[0.5, 2.0], &[0.0, 0.0], &[&[0.0, 0.0]]),
        ])
        .unwrap();
        assert_eq!(d.group_expenditure(0).unwrap(), 5.0);
        assert_eq!(d.group_expenditure(1).unwrap(), 0.0);
        assert!(matches!(d.group_expenditure(2), Err(DatasetError::IndexOutOfRange { .. })));
    }

    #[test]
    fn single_dominance_violation() {
        let d = Dataset::new(vec![obs(&[1.0, 1.0], &[2.0, 3.0], &[&[3.0, 0.5], &[0.0, 1.0]])]).unwrap();
        let v = d.validate();
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].rule, Rule::AssignableExceedsAggregate);
        assert_eq!((v[0].t, v[0].agent, v[0].component), (0, Some(0), 0));
    }

    #[test]
    fn degenerate_full_observation_is_legal() {
        let d = Dataset::new(vec![obs(&[0.3, 0.9], &[0.4, 0.2], &[&[0.4, 0.2]])]).unwrap();
        assert!(d.validate().is_empty());
    }

    #[test]
    fn summed_assignables_are_checked() {
        let d = Dataset::new(vec![obs(&[1.0], &[1.0], &[&[0.6], &[0.6]])]).unwrap();
        let v = d.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::AssignableSumExceedsAggregate);
    }

    #[test]
    fn nonpositive_probe_and_non_finite_values() {
        let d = Dataset::new(vec![obs(&[0.0, f64::NAN], &[-1.0, 1.0], &[&[0.0, f64::INFINITY]])]).unwrap();
        let rules: Vec<Rule> = d.validate().into_iter().map(|v| v.rule).collect();
        assert!(rules.contains(&Rule::NonPositiveProbe));
        assert!(rules.contains(&Rule::NegativeAggregate));
        assert_eq!(rules.iter().filter(|r| **r == Rule::NonFinite).count(), 2);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let err = Dataset::new(vec![
            obs(&[1.0, 1.0], &[1.0, 1.0], &[&[0.0, 0.0]]),
            obs(&[1.0, 1.0], &[1.0, 1.0], &[&[0.0, 0.0], &[0.0, 0.0]]),
        ])
        .unwrap_err();
        assert!(matches!(err, DatasetError::Shape { t: 2, .. }));
        assert!(matches!(Dataset::new(vec![]), Err(DatasetError::Empty)));
    }

    #[test]
    fn allocation_feasibility() {
        let d = Dataset::new(vec![obs(&[1.0, 1.0], &[1.0, 1.0], &[&[0.2, 0.0], &[0.0, 0.5]])]).unwrap();
        let good = PersonalizedAllocation::new(vec![vec![vec![0.5, 0.2], vec![0.5, 0.8]]]);
        assert!(good.is_feasible_for(&d));
        let bad = PersonalizedAllocation::new(vec![vec![vec![0.1, 0.6], vec![0.9, 0.4]]]);
        assert!(!bad.is_feasible_for(&d));
        let wrong_shape = PersonalizedAllocation::new(vec![vec![vec![1.0, 1.0]]]);
        assert_eq!(wrong_shape.max_violation(&d), None);
    }
}
