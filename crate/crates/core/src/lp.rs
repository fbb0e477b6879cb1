//! Dense two-phase tableau simplex.
//!
//! Every program is a minimization over variables with optional lower and
//! upper bounds (free by default). Bounded variables are shifted or reflected
//! onto `[0, inf)`, free variables are split into a difference of two
//! nonnegative columns, and finite ranges add an explicit `<=` row. Pivoting
//! follows Bland's rule throughout, so identical inputs always produce the
//! same pivot sequence and the same answer.

use thiserror::Error;

/// Smallest tableau entry accepted as a pivot element.
pub const PIVOT_TOL: f64 = 1e-10;
/// Residual infeasibility tolerated at the end of phase one.
pub const FEASIBILITY_TOL: f64 = 1e-8;
/// Reduced costs above `-OPTIMALITY_TOL` count as nonnegative.
pub const OPTIMALITY_TOL: f64 = 1e-10;
/// Default pivot budget shared by both phases.
pub const DEFAULT_ITERATION_LIMIT: usize = 50_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("constraint {index} has {found} coefficients, program has {expected} variables")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("variable {0} out of range")]
    VariableOutOfRange(usize),
    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),
    #[error("simplex exceeded {0} pivots without terminating")]
    IterationLimit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Bounds {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl Bounds {
    pub const FREE: Bounds = Bounds {
        lower: None,
        upper: None,
    };
    pub const NONNEGATIVE: Bounds = Bounds {
        lower: Some(0.0),
        upper: None,
    };
}

/// `minimize objective . x` subject to linear rows and per-variable bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    objective: Vec<f64>,
    constraints: Vec<Constraint>,
    bounds: Vec<Bounds>,
}

impl LinearProgram {
    /// A program over `objective.len()` free variables with no rows yet.
    pub fn minimize(objective: Vec<f64>) -> Self {
        let n = objective.len();
        LinearProgram {
            objective,
            constraints: Vec::new(),
            bounds: vec![Bounds::FREE; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn bounds(&self) -> &[Bounds] {
        &self.bounds
    }

    pub fn add_constraint(
        &mut self,
        coeffs: Vec<f64>,
        relation: Relation,
        rhs: f64,
    ) -> Result<(), LpError> {
        if coeffs.len() != self.num_vars() {
            return Err(LpError::DimensionMismatch {
                index: self.constraints.len(),
                expected: self.num_vars(),
                found: coeffs.len(),
            });
        }
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
        Ok(())
    }

    pub fn set_bounds(&mut self, var: usize, bounds: Bounds) -> Result<(), LpError> {
        let slot = self
            .bounds
            .get_mut(var)
            .ok_or(LpError::VariableOutOfRange(var))?;
        *slot = bounds;
        Ok(())
    }

    /// Largest violation of any row or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
            let v = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(v);
        }
        for (b, &v) in self.bounds.iter().zip(x) {
            if let Some(l) = b.lower {
                worst = worst.max(l - v);
            }
            if let Some(u) = b.upper {
                worst = worst.max(v - u);
            }
        }
        worst
    }

    fn validate(&self) -> Result<(), LpError> {
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(LpError::NonFinite("objective"));
        }
        for (index, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != self.num_vars() {
                return Err(LpError::DimensionMismatch {
                    index,
                    expected: self.num_vars(),
                    found: c.coeffs.len(),
                });
            }
            if !c.rhs.is_finite() || c.coeffs.iter().any(|v| !v.is_finite()) {
                return Err(LpError::NonFinite("constraint"));
            }
        }
        if self
            .bounds
            .iter()
            .any(|b| b.lower.is_some_and(f64::is_nan) || b.upper.is_some_and(f64::is_nan))
        {
            return Err(LpError::NonFinite("bounds"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Optimal point when `status` is `Optimal`, empty otherwise.
    pub primal: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

impl LpSolution {
    fn without_point(status: LpStatus, iterations: usize) -> Self {
        let objective = match status {
            LpStatus::Unbounded => f64::NEG_INFINITY,
            _ => f64::INFINITY,
        };
        LpSolution {
            status,
            primal: Vec::new(),
            objective,
            iterations,
        }
    }
}

pub fn solve_lp(program: &LinearProgram) -> Result<LpSolution, LpError> {
    solve_lp_with_limit(program, DEFAULT_ITERATION_LIMIT)
}

pub fn solve_lp_with_limit(
    program: &LinearProgram,
    max_pivots: usize,
) -> Result<LpSolution, LpError> {
    program.validate()?;
    let Some(standard) = StandardForm::new(program) else {
        // Some variable has lower > upper.
        return Ok(LpSolution::without_point(LpStatus::Infeasible, 0));
    };
    let mut tableau = Tableau::new(&standard);
    let mut budget = Budget {
        used: 0,
        max: max_pivots,
    };

    if tableau.num_artificial > 0 {
        tableau.load_phase_one_costs();
        // Phase one is bounded below by zero, so it always terminates optimal.
        tableau.run(&mut budget, false)?;
        if tableau.objective_value() > FEASIBILITY_TOL * tableau.rhs_scale {
            return Ok(LpSolution::without_point(LpStatus::Infeasible, budget.used));
        }
        tableau.drive_out_artificials();
    }

    tableau.load_phase_two_costs(&standard.costs);
    if tableau.run(&mut budget, true)? == Outcome::Unbounded {
        return Ok(LpSolution::without_point(LpStatus::Unbounded, budget.used));
    }

    let columns = tableau.column_values();
    let primal = standard.recover(&columns);
    let objective = program
        .objective
        .iter()
        .zip(&primal)
        .map(|(c, x)| c * x)
        .sum();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        primal,
        objective,
        iterations: budget.used,
    })
}

/// How an original variable is expressed through nonnegative columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// x = offset + col
    Shifted { col: usize, offset: f64 },
    /// x = offset - col
    Reflected { col: usize, offset: f64 },
    /// x = pos - neg
    Split { pos: usize, neg: usize },
}

/// `min c.y` s.t. `A y (rel) b`, `y >= 0`, with `b >= 0` row-wise.
struct StandardForm {
    maps: Vec<VarMap>,
    costs: Vec<f64>,
    rows: Vec<(Vec<f64>, Relation, f64)>,
}

impl StandardForm {
    fn new(program: &LinearProgram) -> Option<Self> {
        let mut maps = Vec::with_capacity(program.num_vars());
        let mut ncols = 0;
        let mut range_rows = Vec::new();
        for b in &program.bounds {
            let lower = b.lower.filter(|l| l.is_finite() || *l > 0.0);
            let upper = b.upper.filter(|u| u.is_finite() || *u < 0.0);
            if lower.is_some_and(f64::is_infinite) || upper.is_some_and(f64::is_infinite) {
                // lower = +inf or upper = -inf
                return None;
            }
            let map = match (lower, upper) {
                (Some(l), Some(u)) => {
                    if l > u {
                        return None;
                    }
                    range_rows.push((ncols, u - l));
                    VarMap::Shifted {
                        col: ncols,
                        offset: l,
                    }
                }
                (Some(l), None) => VarMap::Shifted {
                    col: ncols,
                    offset: l,
                },
                (None, Some(u)) => VarMap::Reflected {
                    col: ncols,
                    offset: u,
                },
                (None, None) => {
                    ncols += 1;
                    VarMap::Split {
                        pos: ncols - 1,
                        neg: ncols,
                    }
                }
            };
            ncols += 1;
            maps.push(map);
        }

        let mut costs = vec![0.0; ncols];
        for (c, m) in program.objective.iter().zip(&maps) {
            match *m {
                VarMap::Shifted { col, .. } => costs[col] += c,
                VarMap::Reflected { col, .. } => costs[col] -= c,
                VarMap::Split { pos, neg } => {
                    costs[pos] += c;
                    costs[neg] -= c;
                }
            }
        }

        let mut rows = Vec::with_capacity(program.constraints.len() + range_rows.len());
        for con in &program.constraints {
            let mut coeffs = vec![0.0; ncols];
            let mut rhs = con.rhs;
            for (a, m) in con.coeffs.iter().zip(&maps) {
                if *a == 0.0 {
                    continue;
                }
                match *m {
                    VarMap::Shifted { col, offset } => {
                        coeffs[col] += a;
                        rhs -= a * offset;
                    }
                    VarMap::Reflected { col, offset } => {
                        coeffs[col] -= a;
                        rhs -= a * offset;
                    }
                    VarMap::Split { pos, neg } => {
                        coeffs[pos] += a;
                        coeffs[neg] -= a;
                    }
                }
            }
            rows.push((coeffs, con.relation, rhs));
        }
        for (col, width) in range_rows {
            let mut coeffs = vec![0.0; ncols];
            coeffs[col] = 1.0;
            rows.push((coeffs, Relation::Le, width));
        }
        for row in &mut rows {
            if row.2 < 0.0 {
                row.0.iter_mut().for_each(|v| *v = -*v);
                row.2 = -row.2;
                row.1 = match row.1 {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
            }
        }
        Some(StandardForm { maps, costs, rows })
    }

    fn recover(&self, columns: &[f64]) -> Vec<f64> {
        self.maps
            .iter()
            .map(|m| match *m {
                VarMap::Shifted { col, offset } => offset + columns[col],
                VarMap::Reflected { col, offset } => offset - columns[col],
                VarMap::Split { pos, neg } => columns[pos] - columns[neg],
            })
            .collect()
    }
}

struct Budget {
    used: usize,
    max: usize,
}

#[derive(Debug, PartialEq, Eq)]
enum Outcome {
    Optimal,
    Unbounded,
}

/// Row-major dense tableau. Column layout: structural, slack/surplus,
/// artificial, then the right-hand side.
struct Tableau {
    rows: usize,
    width: usize,
    num_structural: usize,
    num_artificial: usize,
    first_artificial: usize,
    data: Vec<f64>,
    /// Reduced costs for every column; `costs[width - 1]` holds `-z`.
    costs: Vec<f64>,
    basis: Vec<usize>,
    rhs_scale: f64,
}

impl Tableau {
    fn new(sf: &StandardForm) -> Self {
        let rows = sf.rows.len();
        let num_structural = sf.costs.len();
        let num_slack = sf.rows.iter().filter(|r| r.1 != Relation::Eq).count();
        let num_artificial = sf.rows.iter().filter(|r| r.1 != Relation::Le).count();
        let first_artificial = num_structural + num_slack;
        let width = first_artificial + num_artificial + 1;
        let mut data = vec![0.0; rows * width];
        let mut basis = vec![0; rows];
        let mut next_slack = num_structural;
        let mut next_art = first_artificial;
        let mut rhs_scale: f64 = 1.0;
        for (r, (coeffs, rel, rhs)) in sf.rows.iter().enumerate() {
            let row = &mut data[r * width..(r + 1) * width];
            row[..num_structural].copy_from_slice(coeffs);
            row[width - 1] = *rhs;
            rhs_scale = rhs_scale.max(rhs.abs());
            match rel {
                Relation::Le => {
                    row[next_slack] = 1.0;
                    basis[r] = next_slack;
                    next_slack += 1;
                }
                Relation::Ge => {
                    row[next_slack] = -1.0;
                    next_slack += 1;
                    row[next_art] = 1.0;
                    basis[r] = next_art;
                    next_art += 1;
                }
                Relation::Eq => {
                    row[next_art] = 1.0;
                    basis[r] = next_art;
                    next_art += 1;
                }
            }
        }
        Tableau {
            rows,
            width,
            num_structural,
            num_artificial,
            first_artificial,
            data,
            costs: vec![0.0; width],
            basis,
            rhs_scale,
        }
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.width - 1)
    }

    fn objective_value(&self) -> f64 {
        -self.costs[self.width - 1]
    }

    fn is_artificial(&self, col: usize) -> bool {
        col >= self.first_artificial && col < self.width - 1
    }

    /// Reduced costs `d = c - c_B B^-1 A` for the given column costs.
    fn load_costs(&mut self, column_cost: impl Fn(usize) -> f64) {
        let w = self.width;
        for c in 0..w - 1 {
            self.costs[c] = column_cost(c);
        }
        self.costs[w - 1] = 0.0;
        for r in 0..self.rows {
            let cb = column_cost(self.basis[r]);
            if cb != 0.0 {
                for c in 0..w {
                    self.costs[c] -= cb * self.data[r * w + c];
                }
            }
        }
    }

    fn load_phase_one_costs(&mut self) {
        let (lo, hi) = (self.first_artificial, self.width - 1);
        self.load_costs(|c| if c >= lo && c < hi { 1.0 } else { 0.0 });
    }

    fn load_phase_two_costs(&mut self, structural: &[f64]) {
        let n = self.num_structural;
        self.load_costs(|c| if c < n { structural[c] } else { 0.0 });
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.width;
        let inv = 1.0 / self.data[pr * w + pc];
        for c in 0..w {
            self.data[pr * w + c] *= inv;
        }
        self.data[pr * w + pc] = 1.0;
        let (before, rest) = self.data.split_at_mut(pr * w);
        let (pivot_row, after) = rest.split_at_mut(w);
        for row in before.chunks_exact_mut(w).chain(after.chunks_exact_mut(w)) {
            let f = row[pc];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(pivot_row.iter()) {
                    *v -= f * p;
                }
                row[pc] = 0.0;
            }
        }
        let f = self.costs[pc];
        if f != 0.0 {
            for (v, p) in self.costs.iter_mut().zip(pivot_row.iter()) {
                *v -= f * p;
            }
            self.costs[pc] = 0.0;
        }
        self.basis[pr] = pc;
    }

    /// Bland's rule: lowest-index improving column, ratio ties broken by
    /// lowest basic index.
    fn run(&mut self, budget: &mut Budget, exclude_artificial: bool) -> Result<Outcome, LpError> {
        loop {
            let entering = (0..self.width - 1).find(|&c| {
                self.costs[c] < -OPTIMALITY_TOL && !(exclude_artificial && self.is_artificial(c))
            });
            let Some(pc) = entering else {
                return Ok(Outcome::Optimal);
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.rhs(r).max(0.0) / a;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((br, best)) => {
                        let tie = (ratio - best).abs() <= 1e-12 * best.abs().max(1.0);
                        if (tie && self.basis[r] < self.basis[br]) || (!tie && ratio < best) {
                            Some((r, ratio))
                        } else {
                            Some((br, best))
                        }
                    }
                };
            }
            let Some((pr, _)) = leave else {
                return Ok(Outcome::Unbounded);
            };
            if budget.used >= budget.max {
                return Err(LpError::IterationLimit(budget.max));
            }
            budget.used += 1;
            self.pivot(pr, pc);
        }
    }

    /// After a feasible phase one, swap zero-level artificial basics for
    /// real columns where possible. Rows where no real column has a usable
    /// entry are redundant; their artificial stays basic at zero.
    fn drive_out_artificials(&mut self) {
        for r in 0..self.rows {
            if !self.is_artificial(self.basis[r]) {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for c in 0..self.first_artificial {
                let a = self.at(r, c).abs();
                if a > PIVOT_TOL && best.is_none_or(|(_, b)| a > b) {
                    best = Some((c, a));
                }
            }
            if let Some((c, _)) = best {
                self.pivot(r, c);
            }
        }
    }

    fn column_values(&self) -> Vec<f64> {
        let mut values = vec![0.0; self.num_structural];
        for (r, &b) in self.basis.iter().enumerate() {
            if b < self.num_structural {
                values[b] = self.rhs(r).max(0.0);
            }
        }
        values
    }
}
