//! Dense two-phase simplex for small, well-scaled linear programs.
//!
//! Every variable carries a `[lower, upper]` box; infinite ends are allowed.
//! Internally each variable is rewritten as a nonnegative tableau column
//! (shifted, mirrored or split), finite upper bounds become explicit rows,
//! and phase I drives a set of artificial columns to zero before phase II
//! optimizes the user objective. Dantzig pricing is used until
//! [`SolverOptions::bland_after`] iterations have passed, after which Bland's
//! rule takes over to rule out cycling on degenerate vertices.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute feasibility/optimality tolerance.
pub const LP_TOLERANCE: f64 = 1e-9;

const PIVOT_TOLERANCE: f64 = 1e-9;
const ZERO_CLEAN: f64 = 1e-14;
const DUAL_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    fn flipped(self) -> Self {
        match self {
            Relation::Le => Relation::Ge,
            Relation::Ge => Relation::Le,
            Relation::Eq => Relation::Eq,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
    /// Only the constraints matter; the returned point is any feasible vertex.
    Feasibility,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    /// Signed violation of this row at `x` (zero when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs: f64 = self.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
        match self.relation {
            Relation::Le => (lhs - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - lhs).max(0.0),
            Relation::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// A linear program over `num_vars` real variables.
///
/// New variables default to the box `[0, +inf)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    sense: Sense,
    objective: Vec<f64>,
    constraints: Vec<Constraint>,
    bounds: Vec<(f64, f64)>,
}

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        Self {
            sense: Sense::Feasibility,
            objective: vec![0.0; num_vars],
            constraints: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); num_vars],
        }
    }

    pub fn minimize(mut self, objective: Vec<f64>) -> Self {
        self.sense = Sense::Minimize;
        self.objective = objective;
        self
    }

    pub fn maximize(mut self, objective: Vec<f64>) -> Self {
        self.sense = Sense::Maximize;
        self.objective = objective;
        self
    }

    pub fn set_objective(&mut self, sense: Sense, objective: Vec<f64>) {
        self.sense = sense;
        self.objective = objective;
    }

    pub fn add_constraint(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> &mut Self {
        self.constraints.push(Constraint { coeffs, relation, rhs });
        self
    }

    /// Adds a row given as `(variable, coefficient)` pairs. Repeated indices accumulate.
    pub fn add_sparse(&mut self, terms: &[(usize, f64)], relation: Relation, rhs: f64) -> &mut Self {
        let mut coeffs = vec![0.0; self.num_vars()];
        for &(j, a) in terms {
            coeffs[j] += a;
        }
        self.add_constraint(coeffs, relation, rhs)
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) -> &mut Self {
        self.bounds[var] = (lower, upper);
        self
    }

    pub fn num_vars(&self) -> usize {
        self.bounds.len()
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.objective.len() != n {
            return Err(LpError::DimensionMismatch {
                what: "objective".into(),
                expected: n,
                found: self.objective.len(),
            });
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::NonFinite("objective".into()));
        }
        for (r, row) in self.constraints.iter().enumerate() {
            if row.coeffs.len() != n {
                return Err(LpError::DimensionMismatch {
                    what: format!("constraint {r}"),
                    expected: n,
                    found: row.coeffs.len(),
                });
            }
            if !row.rhs.is_finite() || row.coeffs.iter().any(|a| !a.is_finite()) {
                return Err(LpError::NonFinite(format!("constraint {r}")));
            }
        }
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            if lo.is_nan() || hi.is_nan() || lo == f64::INFINITY || hi == f64::NEG_INFINITY || lo > hi {
                return Err(LpError::InvalidBounds { var: j, lower: lo, upper: hi });
            }
        }
        Ok(())
    }

    /// Largest violation of any row or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.constraints.iter().map(|c| c.violation(x));
        let boxes = self
            .bounds
            .iter()
            .zip(x)
            .map(|(&(lo, hi), &v)| (lo - v).max(v - hi).max(0.0));
        rows.chain(boxes).fold(0.0, f64::max)
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Meaningful only when `status` is `Optimal`.
    pub primal: Vec<f64>,
    pub objective_value: f64,
    pub iterations: usize,
    /// When infeasible: indices of constraints that, together with the
    /// variable bounds, already admit no solution. Read off the phase I
    /// dual, so it is small but not guaranteed minimal.
    pub infeasible_rows: Vec<usize>,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch { what: String, expected: usize, found: usize },
    #[error("invalid bounds on variable {var}: [{lower}, {upper}]")]
    InvalidBounds { var: usize, lower: f64, upper: f64 },
    #[error("non-finite coefficient in {0}")]
    NonFinite(String),
    #[error("simplex failed numerically after {iterations} iterations")]
    NumericFailure { iterations: usize },
    #[error("simplex vertex violates the constraints by {violation:e}")]
    Inaccurate { violation: f64 },
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Iteration count after which pricing switches to Bland's rule.
    pub bland_after: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: LP_TOLERANCE,
            max_iterations: 200_000,
            bland_after: 2_000,
        }
    }
}

pub fn solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    solve_with(lp, &SolverOptions::default())
}

pub fn solve_with(lp: &LinearProgram, options: &SolverOptions) -> Result<LpSolution, LpError> {
    lp.validate()?;
    match StandardForm::build(lp) {
        Ok(mut tab) => tab.run(lp, options),
        // a row over fixed variables only that cannot hold
        Err(row) => Ok(infeasible(lp.num_vars(), 0, vec![row])),
    }
}

fn infeasible(n: usize, iterations: usize, infeasible_rows: Vec<usize>) -> LpSolution {
    LpSolution {
        status: LpStatus::Infeasible,
        primal: vec![f64::NAN; n],
        objective_value: f64::NAN,
        iterations,
        infeasible_rows,
    }
}

/// How an original variable is recovered from tableau columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    Fixed(f64),
    /// `x = offset + col`
    Shift { col: usize, offset: f64 },
    /// `x = offset - col`
    Mirror { col: usize, offset: f64 },
    /// `x = pos - neg`
    Split { pos: usize, neg: usize },
}

struct StandardForm {
    vars: Vec<VarMap>,
    /// Row-major, `width = n_cols + 1`, rhs in the last slot.
    tableau: Vec<f64>,
    rows: usize,
    n_cols: usize,
    art_start: usize,
    basis: Vec<usize>,
    /// Per tableau row: originating constraint (`None` for upper-bound
    /// rows) and the column whose reduced cost carries the row's dual.
    origin: Vec<Option<usize>>,
    dual_col: Vec<(usize, bool)>,
    /// Reduced costs; `obj[n_cols]` holds minus the current objective.
    obj: Vec<f64>,
    iterations: usize,
}

impl StandardForm {
    fn build(lp: &LinearProgram) -> Result<Self, usize> {
        let mut vars = Vec::with_capacity(lp.num_vars());
        let mut n_struct = 0usize;
        let mut upper_rows: Vec<(usize, f64)> = Vec::new();
        for &(lo, hi) in lp.bounds() {
            let map = if lo == hi {
                VarMap::Fixed(lo)
            } else if lo.is_finite() {
                let col = n_struct;
                n_struct += 1;
                if hi.is_finite() {
                    upper_rows.push((col, hi - lo));
                }
                VarMap::Shift { col, offset: lo }
            } else if hi.is_finite() {
                let col = n_struct;
                n_struct += 1;
                VarMap::Mirror { col, offset: hi }
            } else {
                let pos = n_struct;
                n_struct += 2;
                VarMap::Split { pos, neg: pos + 1 }
            };
            vars.push(map);
        }

        // (structural coefficients, relation, rhs) with rhs made nonnegative
        let mut rows: Vec<(Vec<f64>, Relation, f64)> = Vec::new();
        let mut origin: Vec<Option<usize>> = Vec::new();
        for (index, c) in lp.constraints().iter().enumerate() {
            let mut coeffs = vec![0.0; n_struct];
            let mut rhs = c.rhs;
            for (j, &a) in c.coeffs.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                match vars[j] {
                    VarMap::Fixed(v) => rhs -= a * v,
                    VarMap::Shift { col, offset } => {
                        coeffs[col] += a;
                        rhs -= a * offset;
                    }
                    VarMap::Mirror { col, offset } => {
                        coeffs[col] -= a;
                        rhs -= a * offset;
                    }
                    VarMap::Split { pos, neg } => {
                        coeffs[pos] += a;
                        coeffs[neg] -= a;
                    }
                }
            }
            if coeffs.iter().all(|&a| a == 0.0) {
                // constant row: decide it now
                let ok = match c.relation {
                    Relation::Le => rhs >= -LP_TOLERANCE,
                    Relation::Ge => rhs <= LP_TOLERANCE,
                    Relation::Eq => rhs.abs() <= LP_TOLERANCE,
                };
                if !ok {
                    return Err(index);
                }
                continue;
            }
            rows.push((coeffs, c.relation, rhs));
            origin.push(Some(index));
        }
        for (col, width) in upper_rows {
            let mut coeffs = vec![0.0; n_struct];
            coeffs[col] = 1.0;
            rows.push((coeffs, Relation::Le, width));
            origin.push(None);
        }
        for row in rows.iter_mut() {
            if row.2 < 0.0 {
                row.0.iter_mut().for_each(|a| *a = -*a);
                row.2 = -row.2;
                row.1 = row.1.flipped();
            }
        }

        let m = rows.len();
        let n_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
        let n_art = rows.iter().filter(|r| r.1 != Relation::Le).count();
        let slack_start = n_struct;
        let art_start = n_struct + n_slack;
        let n_cols = art_start + n_art;
        let width = n_cols + 1;

        let mut tableau = vec![0.0; m * width];
        let mut basis = vec![0usize; m];
        let mut dual_col = vec![(0usize, false); m];
        let (mut next_slack, mut next_art) = (slack_start, art_start);
        for (r, (coeffs, rel, rhs)) in rows.into_iter().enumerate() {
            let row = &mut tableau[r * width..(r + 1) * width];
            row[..n_struct].copy_from_slice(&coeffs);
            row[n_cols] = rhs;
            match rel {
                Relation::Le => {
                    row[next_slack] = 1.0;
                    basis[r] = next_slack;
                    dual_col[r] = (next_slack, false);
                    next_slack += 1;
                }
                Relation::Ge => {
                    row[next_slack] = -1.0;
                    dual_col[r] = (next_slack, false);
                    next_slack += 1;
                    row[next_art] = 1.0;
                    basis[r] = next_art;
                    next_art += 1;
                }
                Relation::Eq => {
                    row[next_art] = 1.0;
                    basis[r] = next_art;
                    dual_col[r] = (next_art, true);
                    next_art += 1;
                }
            }
        }

        Ok(Self {
            vars,
            tableau,
            rows: m,
            n_cols,
            art_start,
            basis,
            origin,
            dual_col,
            obj: vec![0.0; width],
            iterations: 0,
        })
    }

    fn width(&self) -> usize {
        self.n_cols + 1
    }

    fn run(&mut self, lp: &LinearProgram, options: &SolverOptions) -> Result<LpSolution, LpError> {
        let n = lp.num_vars();
        // phase I: minimize the sum of artificials
        if self.art_start < self.n_cols {
            let mut cost = vec![0.0; self.n_cols];
            cost[self.art_start..].iter_mut().for_each(|c| *c = 1.0);
            self.price(&cost);
            match self.iterate(self.n_cols, options)? {
                Outcome::Optimal => {}
                // phase I is bounded below, so a ray means the tableau has lost accuracy
                Outcome::Unbounded => return Err(LpError::NumericFailure { iterations: self.iterations }),
            }
            if -self.obj[self.n_cols] > options.tolerance {
                return Ok(infeasible(n, self.iterations, self.phase_one_support()));
            }
            self.evict_artificials();
        }

        // phase II
        let sign = match lp.sense() {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
            Sense::Feasibility => 0.0,
        };
        let mut cost = vec![0.0; self.n_cols];
        if sign != 0.0 {
            for (j, map) in self.vars.iter().enumerate() {
                let c = sign * lp.objective()[j];
                match *map {
                    VarMap::Fixed(_) => {}
                    VarMap::Shift { col, .. } => cost[col] += c,
                    VarMap::Mirror { col, .. } => cost[col] -= c,
                    VarMap::Split { pos, neg } => {
                        cost[pos] += c;
                        cost[neg] -= c;
                    }
                }
            }
        }
        self.price(&cost);
        let outcome = self.iterate(self.art_start, options)?;
        let primal = self.primal();
        let objective_value = lp.objective_at(&primal);
        let status = match outcome {
            Outcome::Optimal => LpStatus::Optimal,
            Outcome::Unbounded => LpStatus::Unbounded,
        };
        if status == LpStatus::Optimal {
            let viol = lp.max_violation(&primal);
            if viol > options.tolerance {
                log::debug!("simplex vertex violates constraints by {viol:e}");
            }
            if viol > 1e3 * options.tolerance {
                return Err(LpError::Inaccurate { violation: viol });
            }
        }
        Ok(LpSolution { status, primal, objective_value, iterations: self.iterations, infeasible_rows: Vec::new() })
    }

    /// Constraints with a nonzero phase I dual. Slack columns have zero
    /// cost, so their reduced cost is the dual up to sign; artificial
    /// columns have unit cost.
    fn phase_one_support(&self) -> Vec<usize> {
        let mut rows: Vec<usize> = (0..self.rows)
            .filter_map(|r| {
                let (col, artificial) = self.dual_col[r];
                let dual = if artificial { 1.0 - self.obj[col] } else { self.obj[col] };
                (dual.abs() > DUAL_TOLERANCE).then_some(self.origin[r]).flatten()
            })
            .collect();
        rows.sort_unstable();
        rows
    }

    /// Recomputes the reduced-cost row for `cost` against the current basis.
    fn price(&mut self, cost: &[f64]) {
        let width = self.width();
        self.obj.iter_mut().for_each(|v| *v = 0.0);
        self.obj[..self.n_cols].copy_from_slice(cost);
        for r in 0..self.rows {
            let cb = cost[self.basis[r]];
            if cb == 0.0 {
                continue;
            }
            let row = &self.tableau[r * width..(r + 1) * width];
            for (o, &t) in self.obj.iter_mut().zip(row) {
                *o -= cb * t;
            }
        }
    }

    /// Runs primal simplex allowing only columns `< allowed` to enter.
    fn iterate(&mut self, allowed: usize, options: &SolverOptions) -> Result<Outcome, LpError> {
        let start = self.iterations;
        loop {
            let local = self.iterations - start;
            if local >= options.max_iterations {
                return Err(LpError::NumericFailure { iterations: self.iterations });
            }
            let bland = local >= options.bland_after;
            let entering = if bland {
                (0..allowed).find(|&j| self.obj[j] < -options.tolerance)
            } else {
                let mut best = None;
                let mut best_val = -options.tolerance;
                for j in 0..allowed {
                    if self.obj[j] < best_val {
                        best_val = self.obj[j];
                        best = Some(j);
                    }
                }
                best
            };
            let Some(e) = entering else {
                return Ok(Outcome::Optimal);
            };

            let leave = self.ratio_test(e, bland, options.tolerance);
            let Some(l) = leave else {
                return Ok(Outcome::Unbounded);
            };
            self.pivot(l, e);
            self.iterations += 1;
            if log::log_enabled!(log::Level::Trace) {
                log::trace!("pivot {} (row {l}, col {e})\n{}", self.iterations, self.dump());
            }
        }
    }

    /// Two-pass Harris ratio test: rows whose ratio is within the
    /// feasibility tolerance of the minimum compete on pivot magnitude.
    fn ratio_test(&self, e: usize, bland: bool, tolerance: f64) -> Option<usize> {
        let width = self.width();
        let column = |r: usize| self.tableau[r * width + e];
        let rhs = |r: usize| self.tableau[r * width + self.n_cols].max(0.0);
        let mut bound = f64::INFINITY;
        for r in 0..self.rows {
            let a = column(r);
            if a > PIVOT_TOLERANCE {
                bound = bound.min((rhs(r) + tolerance) / a);
            }
        }
        if !bound.is_finite() {
            return None;
        }
        if bland {
            let min = (0..self.rows)
                .filter(|&r| column(r) > PIVOT_TOLERANCE)
                .map(|r| rhs(r) / column(r))
                .fold(f64::INFINITY, f64::min);
            return (0..self.rows)
                .filter(|&r| column(r) > PIVOT_TOLERANCE && rhs(r) / column(r) <= min + 1e-12)
                .min_by_key(|&r| self.basis[r]);
        }
        (0..self.rows)
            .filter(|&r| column(r) > PIVOT_TOLERANCE && rhs(r) / column(r) <= bound)
            .max_by(|&x, &y| column(x).total_cmp(&column(y)))
    }

    fn pivot(&mut self, l: usize, e: usize) {
        let width = self.width();
        let p = self.tableau[l * width + e];
        {
            let row = &mut self.tableau[l * width..(l + 1) * width];
            row.iter_mut().for_each(|v| *v /= p);
            row[e] = 1.0;
        }
        let pivot_row: Vec<f64> = self.tableau[l * width..(l + 1) * width].to_vec();
        for r in 0..self.rows {
            if r == l {
                continue;
            }
            let f = self.tableau[r * width + e];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.tableau[r * width..(r + 1) * width];
            for (v, &pv) in row.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
                if v.abs() < ZERO_CLEAN {
                    *v = 0.0;
                }
            }
            row[e] = 0.0;
            if row[self.n_cols] < 0.0 && row[self.n_cols] > -1e-9 {
                row[self.n_cols] = 0.0;
            }
        }
        let f = self.obj[e];
        if f != 0.0 {
            for (v, &pv) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.obj[e] = 0.0;
        }
        self.basis[l] = e;
    }

    /// Pivots zero-valued artificials out of the basis; rows with no
    /// eligible pivot are linearly dependent and get dropped.
    fn evict_artificials(&mut self) {
        let width = self.width();
        let mut r = 0;
        while r < self.rows {
            if self.basis[r] < self.art_start {
                r += 1;
                continue;
            }
            self.tableau[r * width + self.n_cols] = 0.0;
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.art_start {
                let a = self.tableau[r * width + j].abs();
                if a > 1e-9 && best.is_none_or(|(_, b)| a > b) {
                    best = Some((j, a));
                }
            }
            match best {
                Some((j, _)) => {
                    self.pivot(r, j);
                    r += 1;
                }
                None => {
                    self.tableau.drain(r * width..(r + 1) * width);
                    self.basis.remove(r);
                    self.rows -= 1;
                }
            }
        }
    }

    fn primal(&self) -> Vec<f64> {
        let width = self.width();
        let mut cols = vec![0.0; self.n_cols];
        for (r, &b) in self.basis.iter().enumerate() {
            cols[b] = self.tableau[r * width + self.n_cols];
        }
        self.vars
            .iter()
            .map(|map| match *map {
                VarMap::Fixed(v) => v,
                VarMap::Shift { col, offset } => offset + cols[col],
                VarMap::Mirror { col, offset } => offset - cols[col],
                VarMap::Split { pos, neg } => cols[pos] - cols[neg],
            })
            .collect()
    }

    fn dump(&self) -> String {
        let width = self.width();
        let mut out = String::new();
        for r in 0..self.rows {
            let _ = write!(out, "x{:<4}|", self.basis[r]);
            for v in &self.tableau[r * width..(r + 1) * width] {
                let _ = write!(out, " {v:9.4}");
            }
            out.push('\n');
        }
        let _ = write!(out, "z    |");
        for v in &self.obj {
            let _ = write!(out, " {v:9.4}");
        }
        out
    }
}

enum Outcome {
    Optimal,
    Unbounded,
}
