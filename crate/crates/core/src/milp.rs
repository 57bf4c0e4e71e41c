//! Coordination test as a mixed-integer feasibility problem.
//!
//! For every agent `i` and ordered pair `s != t` there is a binary
//! `x_st^i` meaning "bundle `s` is revealed preferred to bundle `t`". With
//! continuous unknowns `q_t^i` (hidden per-agent bundles) and
//! `eta_t^i = alpha_t' q_t^i`, the data are consistent with coordination iff
//!
//! ```text
//! (i)   sum_i q_t^i = beta_t,  q_t^i >= beta_hat_t^i
//! (ii)  eta_t^i = alpha_t' q_t^i
//! (iii) eta_s^i - alpha_s' q_t^i <= -eps + (y_s + eps) x_st^i
//! (iv)  x_su^i + x_ut^i <= 1 + x_st^i                (s, u, t distinct)
//! (v)   eta_t^i - alpha_t' q_s^i <= y_t (1 - x_st^i)
//! ```
//!
//! where `y_t = alpha_t' beta_t`. Row (iii) forces `x_st = 1` whenever `q_t`
//! was affordable at `s`; row (v) then forbids `q_s` being strictly cheaper
//! than `q_t` at prices `t`. Together with transitivity this is GARP for each
//! agent's hidden bundles.
//!
//! [`MilpProblem::linear_program`] materializes the full encoding for a fixed
//! binary assignment. [`decide`] does not use it: it runs a depth-first
//! branch-and-bound over the binaries whose node relaxation keeps only the
//! rows implied by already-fixed binaries, and branches on revealed-preference
//! edges that lie on a GARP violation of the current relaxation point.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{dot, Dataset, PersonalizedAllocation, Violation, FEASIBILITY_TOLERANCE};
use crate::lp::{self, LinearProgram, LpError, LpStatus, Relation, Sense};

pub const DEFAULT_NODE_BUDGET: usize = 1_000_000;

/// Relative size of the strictness margin: `eps = 1e-6 * max_t y_t`.
pub const EPSILON_SCALE: f64 = 1e-6;

/// Cap on each strict gap's extra slack when polishing a witness, relative to the largest expenditure.
const POLISH_SLACK: f64 = 0.05;

/// Slack allowed on GARP rows when reading a relaxation point.
const GARP_CHECK_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum MilpError {
    #[error("dataset violates {} invariant(s); first: {}", .0.len(), .0[0])]
    InvalidDataset(Vec<Violation>),
    #[error("strictness margin must be positive and finite, got {0}")]
    BadEpsilon(f64),
    #[error("node budget of {budget} exhausted; the instance is undecided")]
    NodeBudgetExceeded { budget: usize },
    #[error("oracle precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Strictness margin scaled to the data: `1e-6 * max_t alpha_t' beta_t`.
pub fn default_epsilon(dataset: &Dataset) -> f64 {
    let y_max = dataset
        .observations()
        .iter()
        .map(|o| o.expenditure())
        .fold(0.0, f64::max);
    if y_max > 0.0 {
        EPSILON_SCALE * y_max
    } else {
        EPSILON_SCALE
    }
}

/// Mixed-integer encoding of the coordination test for one dataset.
#[derive(Debug, Clone)]
pub struct MilpProblem {
    dataset: Dataset,
    epsilon: f64,
    /// `y_t`
    expenditure: Vec<f64>,
}

pub fn build_problem(dataset: &Dataset, epsilon: f64) -> Result<MilpProblem, MilpError> {
    let violations = dataset.validate();
    if !violations.is_empty() {
        return Err(MilpError::InvalidDataset(violations));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(MilpError::BadEpsilon(epsilon));
    }
    let expenditure = dataset.observations().iter().map(|o| o.expenditure()).collect();
    Ok(MilpProblem { dataset: dataset.clone(), epsilon, expenditure })
}

/// A single row of the full encoding with binaries substituted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowFamily {
    AddingUp,
    Expenditure,
    Strictness,
    Transitivity,
    Garp,
}

impl MilpProblem {
    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn expenditure(&self, t: usize) -> f64 {
        self.expenditure[t]
    }

    fn dims(&self) -> (usize, usize, usize) {
        (self.dataset.len(), self.dataset.agents(), self.dataset.goods())
    }

    /// Number of reals in all `q_t^i` (`T*M*N`).
    pub fn num_allocation_vars(&self) -> usize {
        let (t, m, n) = self.dims();
        t * m * n
    }

    /// Number of `eta_t^i` (`T*M`).
    pub fn num_expenditure_vars(&self) -> usize {
        let (t, m, _) = self.dims();
        t * m
    }

    /// Number of `x_st^i` with `s != t` (`M*T*(T-1)`).
    pub fn num_binaries(&self) -> usize {
        let (t, m, _) = self.dims();
        m * t * t.saturating_sub(1)
    }

    pub fn q_index(&self, t: usize, agent: usize, good: usize) -> usize {
        let (_, m, n) = self.dims();
        (t * m + agent) * n + good
    }

    pub fn eta_index(&self, t: usize, agent: usize) -> usize {
        let (_, m, _) = self.dims();
        self.num_allocation_vars() + t * m + agent
    }

    pub fn binary_index(&self, agent: usize, s: usize, t: usize) -> usize {
        debug_assert_ne!(s, t);
        let (steps, _, _) = self.dims();
        let col = if t < s { t } else { t - 1 };
        (agent * steps + s) * (steps - 1) + col
    }

    /// Inverse of [`MilpProblem::binary_index`]: `(agent, s, t)`.
    pub fn binary_pair(&self, index: usize) -> (usize, usize, usize) {
        let (steps, _, _) = self.dims();
        let per_agent = steps * (steps - 1);
        let agent = index / per_agent;
        let rest = index % per_agent;
        let s = rest / (steps - 1);
        let col = rest % (steps - 1);
        let t = if col < s { col } else { col + 1 };
        (agent, s, t)
    }

    /// Box on each `q_t^i[k]`: `[beta_hat, beta - sum_{j != i} beta_hat_j]`.
    fn allocation_box(&self) -> (Vec<f64>, Vec<f64>) {
        let (steps, m, n) = self.dims();
        let mut lower = vec![0.0; steps * m * n];
        let mut upper = vec![0.0; steps * m * n];
        for (t, obs) in self.dataset.observations().iter().enumerate() {
            for k in 0..n {
                let total_hat: f64 = obs.assignable.iter().map(|a| a[k]).sum();
                for i in 0..m {
                    let lo = obs.assignable[i][k];
                    let others = total_hat - lo;
                    let hi = (obs.aggregate[k] - others).clamp(lo, obs.aggregate[k].max(lo));
                    let idx = self.q_index(t, i, k);
                    lower[idx] = lo;
                    upper[idx] = hi;
                }
            }
        }
        (lower, upper)
    }

    /// The full encoding with every binary fixed to `binaries`, over the
    /// continuous variables `q` followed by `eta`. Returns `None` when the
    /// assignment breaks a transitivity row (iv), which has no continuous part.
    pub fn linear_program(&self, binaries: &[bool]) -> Option<LinearProgram> {
        assert_eq!(binaries.len(), self.num_binaries());
        if self.transitivity_violations(binaries) > 0 {
            return None;
        }
        let (steps, m, n) = self.dims();
        let nvars = self.num_allocation_vars() + self.num_expenditure_vars();
        let mut lp = LinearProgram::new(nvars);
        for (t, obs) in self.dataset.observations().iter().enumerate() {
            for i in 0..m {
                for k in 0..n {
                    lp.set_bounds(self.q_index(t, i, k), obs.assignable[i][k], obs.aggregate[k]);
                }
            }
            for k in 0..n {
                let terms: Vec<(usize, f64)> = (0..m).map(|i| (self.q_index(t, i, k), 1.0)).collect();
                lp.add_sparse(&terms, Relation::Eq, obs.aggregate[k]);
            }
            for i in 0..m {
                let mut terms = vec![(self.eta_index(t, i), 1.0)];
                terms.extend((0..n).map(|k| (self.q_index(t, i, k), -obs.probe.as_slice()[k])));
                lp.add_sparse(&terms, Relation::Eq, 0.0);
            }
        }
        let eps = self.epsilon;
        for i in 0..m {
            for s in 0..steps {
                for t in 0..steps {
                    if s == t {
                        continue;
                    }
                    let x = if binaries[self.binary_index(i, s, t)] { 1.0 } else { 0.0 };
                    let alpha_s = self.dataset.observation(s).probe.as_slice();
                    let alpha_t = self.dataset.observation(t).probe.as_slice();
                    // (iii)
                    let mut terms = vec![(self.eta_index(s, i), 1.0)];
                    terms.extend((0..n).map(|k| (self.q_index(t, i, k), -alpha_s[k])));
                    lp.add_sparse(&terms, Relation::Le, -eps + (self.expenditure[s] + eps) * x);
                    // (v)
                    let mut terms = vec![(self.eta_index(t, i), 1.0)];
                    terms.extend((0..n).map(|k| (self.q_index(s, i, k), -alpha_t[k])));
                    lp.add_sparse(&terms, Relation::Le, self.expenditure[t] * (1.0 - x));
                }
            }
        }
        Some(lp)
    }

    fn transitivity_violations(&self, binaries: &[bool]) -> usize {
        let (steps, m, _) = self.dims();
        let mut count = 0;
        for i in 0..m {
            for s in 0..steps {
                for u in 0..steps {
                    for t in 0..steps {
                        if s == u || u == t || s == t {
                            continue;
                        }
                        let su = binaries[self.binary_index(i, s, u)];
                        let ut = binaries[self.binary_index(i, u, t)];
                        let st = binaries[self.binary_index(i, s, t)];
                        if su && ut && !st {
                            count += 1;
                        }
                    }
                }
            }
        }
        count
    }

    /// Largest violation of rows (i)-(v) at `(q, eta = alpha' q, binaries)`,
    /// with the family it occurs in. Transitivity breaches count as 1.
    pub fn residual(&self, q: &PersonalizedAllocation, binaries: &[bool]) -> (f64, Option<RowFamily>) {
        let (steps, m, n) = self.dims();
        let mut worst = (0.0, None);
        let mut bump = |v: f64, fam: RowFamily| {
            if v > worst.0 {
                worst = (v, Some(fam));
            }
        };
        match q.max_violation(&self.dataset) {
            Some(v) => bump(v, RowFamily::AddingUp),
            None => return (f64::INFINITY, Some(RowFamily::AddingUp)),
        }
        for (t, obs) in self.dataset.observations().iter().enumerate() {
            for i in 0..m {
                for k in 0..n {
                    bump(q.bundle(t, i)[k] - obs.aggregate[k], RowFamily::AddingUp);
                }
            }
        }
        if binaries.len() != self.num_binaries() {
            return (f64::INFINITY, Some(RowFamily::Strictness));
        }
        if self.transitivity_violations(binaries) > 0 {
            bump(1.0, RowFamily::Transitivity);
        }
        // eta is defined by (ii), so that row holds identically here
        bump(0.0, RowFamily::Expenditure);
        let eps = self.epsilon;
        for i in 0..m {
            for s in 0..steps {
                for t in 0..steps {
                    if s == t {
                        continue;
                    }
                    let x = if binaries[self.binary_index(i, s, t)] { 1.0 } else { 0.0 };
                    let alpha_s = self.dataset.observation(s).probe.as_slice();
                    let alpha_t = self.dataset.observation(t).probe.as_slice();
                    let eta_s = dot(alpha_s, q.bundle(s, i));
                    let eta_t = dot(alpha_t, q.bundle(t, i));
                    let strict = eta_s - dot(alpha_s, q.bundle(t, i)) - (-eps + (self.expenditure[s] + eps) * x);
                    bump(strict, RowFamily::Strictness);
                    let garp = eta_t - dot(alpha_t, q.bundle(s, i)) - self.expenditure[t] * (1.0 - x);
                    bump(garp, RowFamily::Garp);
                }
            }
        }
        worst
    }

    /// Unflattens the `q` block of a primal vector.
    pub fn allocation_from_primal(&self, primal: &[f64]) -> PersonalizedAllocation {
        let (steps, m, n) = self.dims();
        let q = (0..steps)
            .map(|t| {
                (0..m)
                    .map(|i| (0..n).map(|k| primal[self.q_index(t, i, k)]).collect())
                    .collect()
            })
            .collect();
        PersonalizedAllocation::new(q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    Coordinating,
    NotCoordinating,
}

#[derive(Debug, Clone)]
pub struct MilpVerdict {
    pub decision: Decision,
    pub witness: Option<PersonalizedAllocation>,
    /// Indexed by [`MilpProblem::binary_index`].
    pub binaries: Option<Vec<bool>>,
    /// Relaxations solved.
    pub node_count: usize,
    pub wall_time: Duration,
}

impl MilpVerdict {
    pub fn is_coordinating(&self) -> bool {
        self.decision == Decision::Coordinating
    }
}

#[derive(Debug, Clone)]
pub struct DecideOptions {
    pub node_budget: usize,
}

impl Default for DecideOptions {
    fn default() -> Self {
        Self { node_budget: DEFAULT_NODE_BUDGET }
    }
}

pub fn decide(problem: &MilpProblem) -> Result<MilpVerdict, MilpError> {
    decide_with(problem, &DecideOptions::default())
}

pub fn decide_with(problem: &MilpProblem, options: &DecideOptions) -> Result<MilpVerdict, MilpError> {
    let started = Instant::now();
    let mut search = Search::new(problem);
    let outcome = search.run(options.node_budget)?;
    let wall_time = started.elapsed();
    Ok(match outcome {
        Some((witness, binaries)) => MilpVerdict {
            decision: Decision::Coordinating,
            witness: Some(witness),
            binaries: Some(binaries),
            node_count: search.nodes,
            wall_time,
        },
        None => MilpVerdict {
            decision: Decision::NotCoordinating,
            witness: None,
            binaries: None,
            node_count: search.nodes,
            wall_time,
        },
    })
}

type Fixings = Vec<Option<bool>>;

/// Binary assignment, as `(binary index, value)`.
type Literal = (usize, bool);

struct Search<'a> {
    problem: &'a MilpProblem,
    lower: Vec<f64>,
    upper: Vec<f64>,
    nodes: usize,
    root: Fixings,
    /// Learned sets of literals that cannot hold together.
    nogoods: Vec<Vec<Literal>>,
}

/// A GARP-relevant conflict at a relaxation point: a chain of revealed
/// preferences `path` whose closing pair is forbidden.
struct Conflict {
    agent: usize,
    unfixed: Vec<(usize, usize)>,
    length: usize,
}

impl<'a> Search<'a> {
    fn new(problem: &'a MilpProblem) -> Self {
        let (lower, upper) = problem.allocation_box();
        Self { problem, lower, upper, nodes: 0, root: Vec::new(), nogoods: Vec::new() }
    }

    fn price(&self, s: usize, agent: usize, t: usize, q: &[f64]) -> f64 {
        let p = self.problem;
        let n = p.dataset.goods();
        let start = p.q_index(t, agent, 0);
        dot(p.dataset.observation(s).probe.as_slice(), &q[start..start + n])
    }

    fn box_price(&self, s: usize, agent: usize, t: usize, bound: &[f64]) -> f64 {
        self.price(s, agent, t, bound)
    }

    /// Binaries whose value is forced by the allocation box alone.
    fn root_fixings(&self) -> Option<Fixings> {
        let p = self.problem;
        let (steps, m, _) = p.dims();
        let mut fix = vec![None; p.num_binaries()];
        for i in 0..m {
            for s in 0..steps {
                for t in 0..steps {
                    if s == t {
                        continue;
                    }
                    // x_st = 0 needs alpha_s'q_s <= alpha_s'q_t - eps
                    let zero_possible = self.box_price(s, i, s, &self.lower)
                        - self.box_price(s, i, t, &self.upper)
                        <= -p.epsilon;
                    // x_st = 1 needs alpha_t'q_t <= alpha_t'q_s
                    let one_possible =
                        self.box_price(t, i, t, &self.lower) - self.box_price(t, i, s, &self.upper) <= 0.0;
                    let idx = p.binary_index(i, s, t);
                    fix[idx] = match (zero_possible, one_possible) {
                        (false, false) => return None,
                        (false, true) => Some(true),
                        (true, false) => Some(false),
                        (true, true) => None,
                    };
                }
            }
        }
        Some(fix)
    }

    /// Closes the fixings under transitivity and the learned nogoods;
    /// `false` on contradiction.
    fn propagate(&self, fix: &mut Fixings) -> bool {
        loop {
            if !self.transitivity(fix) {
                return false;
            }
            match self.unit_nogoods(fix) {
                None => return false,
                Some(false) => return true,
                Some(true) => {}
            }
        }
    }

    /// `None` on a violated nogood, otherwise whether anything was fixed.
    fn unit_nogoods(&self, fix: &mut Fixings) -> Option<bool> {
        let mut changed = false;
        'clauses: for nogood in &self.nogoods {
            let mut open = None;
            for &(idx, value) in nogood {
                match fix[idx] {
                    Some(v) if v == value => {}
                    Some(_) => continue 'clauses,
                    None if open.is_none() => open = Some((idx, value)),
                    None => continue 'clauses,
                }
            }
            match open {
                None => return None,
                Some((idx, value)) => {
                    fix[idx] = Some(!value);
                    changed = true;
                }
            }
        }
        Some(changed)
    }

    fn transitivity(&self, fix: &mut Fixings) -> bool {
        let p = self.problem;
        let (steps, m, _) = p.dims();
        if steps < 3 {
            return true;
        }
        for i in 0..m {
            loop {
                let mut changed = false;
                for s in 0..steps {
                    for u in 0..steps {
                        if u == s {
                            continue;
                        }
                        let su = p.binary_index(i, s, u);
                        for t in 0..steps {
                            if t == s || t == u {
                                continue;
                            }
                            let ut = p.binary_index(i, u, t);
                            let st = p.binary_index(i, s, t);
                            match (fix[su], fix[ut], fix[st]) {
                                (Some(true), Some(true), Some(false)) => return false,
                                (Some(true), Some(true), None) => {
                                    fix[st] = Some(true);
                                    changed = true;
                                }
                                (Some(true), None, Some(false)) => {
                                    fix[ut] = Some(false);
                                    changed = true;
                                }
                                (None, Some(true), Some(false)) => {
                                    fix[su] = Some(false);
                                    changed = true;
                                }
                                _ => {}
                            }
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
        }
        true
    }

    /// The relaxation over `q` with the rows implied by fixed binaries;
    /// also returns the literal behind each row.
    fn relaxation(&self, fix: &Fixings) -> (LinearProgram, Vec<Option<Literal>>) {
        self.relaxation_with_slack(fix, 0.0)
    }

    /// As [`Self::relaxation`]; with a positive `cap`, every `x = 0` row gets
    /// its own slack variable in `[0, cap]` and the sum of slacks is maximized.
    fn relaxation_with_slack(&self, fix: &Fixings, cap: f64) -> (LinearProgram, Vec<Option<Literal>>) {
        let p = self.problem;
        let (steps, m, n) = p.dims();
        let vars = p.num_allocation_vars();
        let slacks = if cap > 0.0 { fix.iter().filter(|v| **v == Some(false)).count() } else { 0 };
        let mut lp = LinearProgram::new(vars + slacks);
        if slacks > 0 {
            let mut objective = vec![0.0; vars + slacks];
            objective[vars..].iter_mut().for_each(|c| *c = 1.0);
            lp.set_objective(Sense::Maximize, objective);
            for j in vars..vars + slacks {
                lp.set_bounds(j, 0.0, cap);
            }
        }
        let mut next_slack = vars;
        for j in 0..self.lower.len() {
            lp.set_bounds(j, self.lower[j], self.upper[j]);
        }
        let mut literals = Vec::new();
        for (t, obs) in p.dataset.observations().iter().enumerate() {
            for k in 0..n {
                let terms: Vec<(usize, f64)> = (0..m).map(|i| (p.q_index(t, i, k), 1.0)).collect();
                lp.add_sparse(&terms, Relation::Eq, obs.aggregate[k]);
                literals.push(None);
            }
        }
        let pair_row = |lp: &mut LinearProgram, at: usize, i: usize, plus: usize, minus: usize, rhs: f64, slack: Option<usize>| {
            let alpha = p.dataset.observation(at).probe.as_slice();
            let mut terms = Vec::with_capacity(2 * n + 1);
            for k in 0..n {
                terms.push((p.q_index(plus, i, k), alpha[k]));
                terms.push((p.q_index(minus, i, k), -alpha[k]));
            }
            terms.extend(slack.map(|j| (j, 1.0)));
            lp.add_sparse(&terms, Relation::Le, rhs);
        };
        for i in 0..m {
            for s in 0..steps {
                for t in 0..steps {
                    if s == t {
                        continue;
                    }
                    let idx = p.binary_index(i, s, t);
                    match fix[idx] {
                        Some(false) => {
                            let slack = (slacks > 0).then(|| {
                                next_slack += 1;
                                next_slack - 1
                            });
                            pair_row(&mut lp, s, i, s, t, -p.epsilon, slack)
                        }
                        Some(true) => pair_row(&mut lp, t, i, t, s, 0.0, None),
                        None => continue,
                    }
                    literals.push(fix[idx].map(|v| (idx, v)));
                }
            }
        }
        (lp, literals)
    }

    fn run(&mut self, budget: usize) -> Result<Option<(PersonalizedAllocation, Vec<bool>)>, MilpError> {
        let Some(mut root) = self.root_fixings() else {
            return Ok(None);
        };
        if !self.propagate(&mut root) {
            return Ok(None);
        }
        self.root = root.clone();
        let mut stack = vec![root];
        while let Some(mut fix) = stack.pop() {
            // nogoods learned since the node was pushed may now apply
            if !self.propagate(&mut fix) {
                continue;
            }
            if self.nodes >= budget {
                return Err(MilpError::NodeBudgetExceeded { budget });
            }
            self.nodes += 1;
            let (lp, literals) = self.relaxation(&fix);
            let sol = lp::solve(&lp)?;
            match sol.status {
                LpStatus::Optimal => {}
                LpStatus::Unbounded => continue,
                LpStatus::Infeasible => {
                    if !self.learn(&fix, &sol.infeasible_rows, &literals) {
                        return Ok(None);
                    }
                    continue;
                }
            }
            match self.inspect(&fix, &sol.primal) {
                Inspection::Feasible(binaries) => {
                    let primal = self.polish(&binaries).unwrap_or(sol.primal);
                    let witness = self.problem.allocation_from_primal(&primal);
                    let (resid, fam) = self.problem.residual(&witness, &binaries);
                    if resid <= FEASIBILITY_TOLERANCE {
                        return Ok(Some((witness, binaries)));
                    }
                    log::warn!("relaxation point rejected on re-substitution ({fam:?} off by {resid:e})");
                }
                Inspection::Branch { agent, s, t } => {
                    let idx = self.problem.binary_index(agent, s, t);
                    for value in [true, false] {
                        let mut child = fix.clone();
                        child[idx] = Some(value);
                        stack.push(child);
                    }
                }
                Inspection::Stuck => {
                    log::warn!("GARP conflict consists of fixed edges only; pruning node");
                }
            }
        }
        Ok(None)
    }

    /// Re-solves the leaf with every strict revealed-preference gap pushed
    /// away from the margin where the data allows. Witnesses sitting on the
    /// margin make the Afriat system badly conditioned.
    fn polish(&self, binaries: &[bool]) -> Option<Vec<f64>> {
        let fix: Fixings = binaries.iter().map(|&b| Some(b)).collect();
        let scale = (0..self.problem.dataset.len()).map(|t| self.problem.expenditure(t)).fold(0.0, f64::max);
        let (lp, _) = self.relaxation_with_slack(&fix, POLISH_SLACK * scale);
        match lp::solve(&lp) {
            Ok(sol) if sol.is_optimal() => Some(sol.primal[..self.problem.num_allocation_vars()].to_vec()),
            _ => None,
        }
    }

    /// Records the literals behind an infeasible relaxation. Root fixings
    /// hold at every node and are left out. Returns `false` when the
    /// infeasibility needs no literal at all, i.e. the whole problem is
    /// infeasible.
    fn learn(&mut self, fix: &Fixings, rows: &[usize], literals: &[Option<Literal>]) -> bool {
        let mut nogood: Vec<Literal> = if rows.is_empty() {
            fix.iter().enumerate().filter_map(|(idx, v)| v.map(|v| (idx, v))).collect()
        } else {
            rows.iter().filter_map(|&r| literals[r]).collect()
        };
        nogood.retain(|&(idx, _)| self.root[idx].is_none());
        nogood.sort_unstable();
        nogood.dedup();
        if nogood.is_empty() {
            return false;
        }
        self.nogoods.push(nogood);
        true
    }

    /// Reads the revealed-preference relation off a relaxation point and
    /// either certifies it or picks an edge to branch on.
    fn inspect(&self, fix: &Fixings, q: &[f64]) -> Inspection {
        let p = self.problem;
        let (steps, m, _) = p.dims();
        let mut binaries = vec![false; p.num_binaries()];
        let mut best: Option<Conflict> = None;
        for i in 0..m {
            // own[s] = alpha_s'q_s, cost[s][t] = alpha_s'q_t
            let cost: Vec<Vec<f64>> = (0..steps)
                .map(|s| (0..steps).map(|t| self.price(s, i, t, q)).collect())
                .collect();
            let mut edge = vec![vec![false; steps]; steps];
            let mut fixed = vec![vec![false; steps]; steps];
            for s in 0..steps {
                for t in 0..steps {
                    if s == t {
                        continue;
                    }
                    match fix[p.binary_index(i, s, t)] {
                        Some(v) => {
                            edge[s][t] = v;
                            fixed[s][t] = true;
                        }
                        None => edge[s][t] = cost[s][s] - cost[s][t] > -p.epsilon,
                    }
                }
            }
            for s in 0..steps {
                // 0-1 BFS: fixed edges are free, unfixed ones cost one
                let mut dist = vec![usize::MAX; steps];
                let mut hops = vec![usize::MAX; steps];
                let mut parent = vec![usize::MAX; steps];
                let mut deque = VecDeque::new();
                dist[s] = 0;
                hops[s] = 0;
                deque.push_back(s);
                while let Some(v) = deque.pop_front() {
                    for w in 0..steps {
                        if w == v || !edge[v][w] {
                            continue;
                        }
                        let step = usize::from(!fixed[v][w]);
                        let nd = dist[v] + step;
                        if nd < dist[w] || (nd == dist[w] && hops[v] + 1 < hops[w]) {
                            dist[w] = nd;
                            hops[w] = hops[v] + 1;
                            parent[w] = v;
                            if step == 0 {
                                deque.push_front(w);
                            } else {
                                deque.push_back(w);
                            }
                        }
                    }
                }
                for t in 0..steps {
                    if t == s || dist[t] == usize::MAX {
                        continue;
                    }
                    binaries[p.binary_index(i, s, t)] = true;
                    let forbidden_zero = fix[p.binary_index(i, s, t)] == Some(false);
                    let garp_broken = cost[t][t] - cost[t][s] > GARP_CHECK_TOLERANCE;
                    if !(forbidden_zero || garp_broken) {
                        continue;
                    }
                    if best.as_ref().is_some_and(|b| (dist[t], hops[t]) >= (b.unfixed.len(), b.length)) {
                        continue;
                    }
                    let mut unfixed = Vec::new();
                    let mut w = t;
                    while w != s {
                        let v = parent[w];
                        if !fixed[v][w] {
                            unfixed.push((v, w));
                        }
                        w = v;
                    }
                    best = Some(Conflict { agent: i, unfixed, length: hops[t] });
                }
            }
        }
        match best {
            None => Inspection::Feasible(binaries),
            Some(c) if c.unfixed.is_empty() => Inspection::Stuck,
            Some(c) => {
                let (s, t) = c
                    .unfixed
                    .iter()
                    .copied()
                    .min_by_key(|&(s, t)| p.binary_index(c.agent, s, t))
                    .expect("nonempty");
                Inspection::Branch { agent: c.agent, s, t }
            }
        }
    }
}

enum Inspection {
    Feasible(Vec<bool>),
    Branch { agent: usize, s: usize, t: usize },
    Stuck,
}

/// Direct GARP test for one fully observed agent (`M = 1`, `beta_hat = beta`).
///
/// Builds the weak revealed-preference digraph `s -> t` iff
/// `alpha_s'beta_s >= alpha_s'beta_t`, takes its transitive closure and looks
/// for a pair `s ->* t` with `alpha_t'beta_t > alpha_t'beta_s`.
pub fn garp_oracle(dataset: &Dataset) -> Result<bool, MilpError> {
    if dataset.agents() != 1 {
        return Err(MilpError::Precondition(format!("needs M = 1, got M = {}", dataset.agents())));
    }
    if dataset.observations().iter().any(|o| o.assignable[0] != o.aggregate) {
        return Err(MilpError::Precondition("needs beta_hat = beta in every observation".into()));
    }
    let obs = dataset.observations();
    let steps = obs.len();
    let cost = |s: usize, t: usize| obs[s].probe.price(&obs[t].aggregate);
    let mut reach = vec![vec![false; steps]; steps];
    for s in 0..steps {
        for t in 0..steps {
            reach[s][t] = cost(s, s) >= cost(s, t);
        }
    }
    for k in 0..steps {
        for s in 0..steps {
            if reach[s][k] {
                for t in 0..steps {
                    if reach[k][t] {
                        reach[s][t] = true;
                    }
                }
            }
        }
    }
    for s in 0..steps {
        for t in 0..steps {
            if reach[s][t] && cost(t, t) > cost(t, s) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
