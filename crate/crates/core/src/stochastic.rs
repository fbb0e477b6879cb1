//! Discounted stochastic games whose stage payoffs are only known up to a
//! convex hull of vertex matrices.
//!
//! For two-player zero-sum games the value under any realization lies in a
//! per-stage interval computed by two Shapley-style contractions: `T` uses
//! the entrywise maximum of the vertex payoffs, `J` the entrywise minimum.
//! For N-player games with polymatrix stages the module evaluates stationary
//! profiles exactly, checks the ex-post Markov perfect equilibrium property
//! by enumerating vertex combinations, and estimates discounted payoffs by
//! seeded Monte Carlo rollouts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::game::{Edge, GameError, Matrix, PolymatrixGame, StrategyProfile};
use crate::lp::{solve_lp, Bounds, LinearProgram, LpError, LpStatus, Relation};

/// Tolerance on transition rows summing to one.
pub const TRANSITION_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;
/// Default cap on vertex combinations enumerated by the MPE check.
pub const DEFAULT_COMBINATION_CAP: u64 = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StochasticError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("matrix game LP finished with status {0:?}")]
    UnexpectedLpStatus(LpStatus),
    #[error("discount factor {0} is not in (0, 1)")]
    InvalidDiscount(f64),
    #[error("a stochastic game needs at least one stage")]
    NoStages,
    #[error("epsilon must be positive, got {0}")]
    InvalidEpsilon(f64),
    #[error("stage {stage}: {found} transition rows, expected one per joint action ({expected})")]
    TransitionCount {
        stage: usize,
        expected: usize,
        found: usize,
    },
    #[error("stage {stage}, joint action {joint}: not a distribution over {stages} stages")]
    InvalidDistribution {
        stage: usize,
        joint: usize,
        stages: usize,
    },
    #[error("stage {stage}, edge {edge}: empty vertex list")]
    NoVertices { stage: usize, edge: usize },
    #[error(
        "stage {stage}, edge {edge}, vertex {vertex}: matrix shape does not match the action sets"
    )]
    VertexShape {
        stage: usize,
        edge: usize,
        vertex: usize,
    },
    #[error("stage {0} is not in two-player zero-sum form")]
    NotZeroSumForm(usize),
    #[error("expected {expected} per-stage entries, got {found}")]
    StageCount { expected: usize, found: usize },
    #[error("stage {0}: realization or profile does not match the stage's action sets")]
    StageMismatch(usize),
    #[error("empty vertex list")]
    EmptyVertexList,
    #[error("vertex {0} has a different shape than vertex 0")]
    VertexDimension(usize),
    #[error("value iteration did not converge within {0} iterations")]
    IterationLimit(usize),
    #[error("{combinations} vertex combinations exceed the cap of {cap}")]
    CombinationCap { combinations: u128, cap: u64 },
    #[error("invalid simulation parameters: {0}")]
    InvalidSimulation(&'static str),
}

type Result<T> = std::result::Result<T, StochasticError>;

/// Vertex payoffs of one edge `[i, j]`: each vertex is the pair
/// `(A^{ij}, A^{ji})`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeUncertainty {
    pub i: usize,
    pub j: usize,
    pub vertices: Vec<(Matrix, Matrix)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StagePayoffs {
    /// Row player's payoff vertices `A_1(s), ..., A_k(s)`; the column player
    /// receives the negation.
    ZeroSum(Vec<Matrix>),
    /// Independent vertex lists per edge.
    Polymatrix(Vec<EdgeUncertainty>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    action_counts: Vec<usize>,
    payoffs: StagePayoffs,
    /// One distribution over stages per joint pure action, indexed with
    /// player 0 most significant.
    transitions: Vec<Vec<f64>>,
}

impl Stage {
    pub fn zero_sum(vertices: Vec<Matrix>, transitions: Vec<Vec<f64>>) -> Self {
        let counts = vertices
            .first()
            .map(|m| vec![m.nrows(), m.ncols()])
            .unwrap_or_else(|| vec![0, 0]);
        Stage {
            action_counts: counts,
            payoffs: StagePayoffs::ZeroSum(vertices),
            transitions,
        }
    }

    pub fn polymatrix(
        action_counts: Vec<usize>,
        edges: Vec<EdgeUncertainty>,
        transitions: Vec<Vec<f64>>,
    ) -> Self {
        Stage {
            action_counts,
            payoffs: StagePayoffs::Polymatrix(edges),
            transitions,
        }
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    pub fn payoffs(&self) -> &StagePayoffs {
        &self.payoffs
    }

    pub fn transitions(&self) -> &[Vec<f64>] {
        &self.transitions
    }

    pub fn num_joint_actions(&self) -> usize {
        self.action_counts.iter().product()
    }

    pub fn joint_index(&self, actions: &[usize]) -> usize {
        actions
            .iter()
            .zip(&self.action_counts)
            .fold(0, |acc, (&a, &d)| acc * d + a)
    }

    pub fn decode_joint(&self, mut joint: usize) -> Vec<usize> {
        let mut actions = vec![0; self.action_counts.len()];
        for (slot, &d) in actions.iter_mut().zip(&self.action_counts).rev() {
            *slot = joint % d;
            joint /= d;
        }
        actions
    }

    /// Number of vertices per uncertain edge.
    pub fn vertex_counts(&self) -> Vec<usize> {
        match &self.payoffs {
            StagePayoffs::ZeroSum(v) => vec![v.len()],
            StagePayoffs::Polymatrix(edges) => edges.iter().map(|e| e.vertices.len()).collect(),
        }
    }

    /// Stage game obtained by choosing one vertex per edge.
    pub fn vertex_game(&self, choice: &[usize]) -> Result<PolymatrixGame> {
        let ones: Vec<Vec<f64>> = self
            .vertex_counts()
            .iter()
            .zip(choice)
            .map(|(&k, &c)| (0..k).map(|l| f64::from(u8::from(l == c))).collect())
            .collect();
        self.hull_game(&ones)
    }

    /// Stage game at convex weights over each edge's vertices.
    pub fn hull_game(&self, weights: &[Vec<f64>]) -> Result<PolymatrixGame> {
        let mix = |vs: &mut dyn Iterator<Item = &Matrix>, w: &[f64]| -> Option<Matrix> {
            let mut acc: Option<Matrix> = None;
            let mut n = 0;
            for (m, &wl) in vs.zip(w) {
                n += 1;
                match &mut acc {
                    None => acc = Some(m * wl),
                    Some(a) => a.scaled_add(wl, m),
                }
            }
            (n == w.len()).then_some(acc).flatten()
        };
        let bad = StochasticError::Game(GameError::InvalidWeights);
        if weights.len() != self.vertex_counts().len()
            || weights.iter().any(|w| {
                w.iter().any(|v| v.is_nan() || *v < 0.0)
                    || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9
            })
        {
            return Err(bad);
        }
        match &self.payoffs {
            StagePayoffs::ZeroSum(vs) => {
                let a = mix(&mut vs.iter(), &weights[0]).ok_or(bad)?;
                Ok(PolymatrixGame::two_player_zero_sum(a)?)
            }
            StagePayoffs::Polymatrix(edges) => {
                let mut built = Vec::with_capacity(edges.len());
                for (e, w) in edges.iter().zip(weights) {
                    let a_ij = mix(&mut e.vertices.iter().map(|v| &v.0), w).ok_or(bad.clone())?;
                    let a_ji = mix(&mut e.vertices.iter().map(|v| &v.1), w).ok_or(bad.clone())?;
                    built.push(Edge::new(e.i, e.j, a_ij, a_ji));
                }
                Ok(PolymatrixGame::new(self.action_counts.clone(), built)?)
            }
        }
    }

    fn validate(&self, stage: usize, num_stages: usize) -> Result<()> {
        if self.action_counts.is_empty() {
            return Err(GameError::NoPlayers.into());
        }
        if let Some(p) = self.action_counts.iter().position(|&d| d == 0) {
            return Err(GameError::NoActions(p).into());
        }
        match &self.payoffs {
            StagePayoffs::ZeroSum(vs) => {
                if vs.is_empty() {
                    return Err(StochasticError::NoVertices { stage, edge: 0 });
                }
                let dim = (self.action_counts[0], self.action_counts[1]);
                if let Some(vertex) = vs
                    .iter()
                    .position(|m| m.dim() != dim || m.iter().any(|v| !v.is_finite()))
                {
                    return Err(StochasticError::VertexShape {
                        stage,
                        edge: 0,
                        vertex,
                    });
                }
            }
            StagePayoffs::Polymatrix(edges) => {
                for (edge, e) in edges.iter().enumerate() {
                    if e.vertices.is_empty() {
                        return Err(StochasticError::NoVertices { stage, edge });
                    }
                    for (vertex, (a_ij, a_ji)) in e.vertices.iter().enumerate() {
                        let ok = e.i < self.action_counts.len()
                            && e.j < self.action_counts.len()
                            && a_ij.dim() == (self.action_counts[e.i], self.action_counts[e.j])
                            && a_ji.dim() == (self.action_counts[e.j], self.action_counts[e.i]);
                        if !ok {
                            return Err(StochasticError::VertexShape {
                                stage,
                                edge,
                                vertex,
                            });
                        }
                    }
                }
                // Remaining structural checks (self loops, duplicates, finiteness).
                self.vertex_game(&vec![0; edges.len()])?;
            }
        }
        let expected = self.num_joint_actions();
        if self.transitions.len() != expected {
            return Err(StochasticError::TransitionCount {
                stage,
                expected,
                found: self.transitions.len(),
            });
        }
        for (joint, row) in self.transitions.iter().enumerate() {
            let valid = row.len() == num_stages
                && row.iter().all(|p| p.is_finite() && *p >= 0.0)
                && (row.iter().sum::<f64>() - 1.0).abs() <= TRANSITION_TOL;
            if !valid {
                return Err(StochasticError::InvalidDistribution {
                    stage,
                    joint,
                    stages: num_stages,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticGame {
    stages: Vec<Stage>,
    discount: f64,
}

impl StochasticGame {
    pub fn new(stages: Vec<Stage>, discount: f64) -> Result<Self> {
        if !(discount > 0.0 && discount < 1.0) {
            return Err(StochasticError::InvalidDiscount(discount));
        }
        if stages.is_empty() {
            return Err(StochasticError::NoStages);
        }
        for (s, stage) in stages.iter().enumerate() {
            stage.validate(s, stages.len())?;
        }
        Ok(StochasticGame { stages, discount })
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn stage(&self, s: usize) -> &Stage {
        &self.stages[s]
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn is_two_player_zero_sum(&self) -> bool {
        self.stages
            .iter()
            .all(|s| matches!(s.payoffs, StagePayoffs::ZeroSum(_)))
    }

    /// Row player's vertex matrices at stage `s`.
    pub fn zero_sum_vertices(&self, s: usize) -> Result<&[Matrix]> {
        match &self.stages[s].payoffs {
            StagePayoffs::ZeroSum(v) => Ok(v),
            StagePayoffs::Polymatrix(_) => Err(StochasticError::NotZeroSumForm(s)),
        }
    }

    /// One stage game per stage, each at the given vertex choice per edge.
    pub fn vertex_realization(&self, choice: &[Vec<usize>]) -> Result<Vec<PolymatrixGame>> {
        self.check_len(choice.len())?;
        self.stages
            .iter()
            .zip(choice)
            .map(|(st, c)| st.vertex_game(c))
            .collect()
    }

    /// One stage game per stage at convex weights `weights[s][edge][vertex]`.
    pub fn hull_realization(&self, weights: &[Vec<Vec<f64>>]) -> Result<Vec<PolymatrixGame>> {
        self.check_len(weights.len())?;
        self.stages
            .iter()
            .zip(weights)
            .map(|(st, w)| st.hull_game(w))
            .collect()
    }

    /// Largest absolute entry of any vertex payoff.
    pub fn max_abs_payoff(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for st in &self.stages {
            match &st.payoffs {
                StagePayoffs::ZeroSum(vs) => {
                    for m in vs {
                        worst = m.iter().fold(worst, |w, v| w.max(v.abs()));
                    }
                }
                StagePayoffs::Polymatrix(edges) => {
                    for (a, b) in edges.iter().flat_map(|e| &e.vertices) {
                        worst = a.iter().chain(b.iter()).fold(worst, |w, v| w.max(v.abs()));
                    }
                }
            }
        }
        worst
    }

    fn check_len(&self, found: usize) -> Result<()> {
        if found != self.stages.len() {
            return Err(StochasticError::StageCount {
                expected: self.stages.len(),
                found,
            });
        }
        Ok(())
    }

    fn check_realization(&self, realization: &[PolymatrixGame]) -> Result<()> {
        self.check_len(realization.len())?;
        for (s, (st, g)) in self.stages.iter().zip(realization).enumerate() {
            if g.action_counts() != st.action_counts() {
                return Err(StochasticError::StageMismatch(s));
            }
        }
        Ok(())
    }

    /// `sum_{s'} P(s' | s, joint) v(s')`.
    fn expected_next(&self, s: usize, joint: usize, v: &[f64]) -> f64 {
        self.stages[s].transitions[joint]
            .iter()
            .zip(v)
            .map(|(p, x)| p * x)
            .sum()
    }
}

/// Stationary mixed strategies, one profile per stage.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovProfile {
    stages: Vec<StrategyProfile>,
}

impl MarkovProfile {
    pub fn new(stages: Vec<StrategyProfile>) -> Self {
        MarkovProfile { stages }
    }

    pub fn from_pure(game: &StochasticGame, actions: &[Vec<usize>]) -> Result<Self> {
        game.check_len(actions.len())?;
        let stages = game
            .stages
            .iter()
            .zip(actions)
            .enumerate()
            .map(|(s, (st, a))| {
                if a.len() != st.action_counts.len() {
                    return Err(StochasticError::StageMismatch(s));
                }
                StrategyProfile::pure(a, &st.action_counts)
                    .map_err(|_| StochasticError::StageMismatch(s))
            })
            .collect::<Result<_>>()?;
        Ok(MarkovProfile { stages })
    }

    pub fn uniform(game: &StochasticGame) -> Self {
        MarkovProfile {
            stages: game
                .stages
                .iter()
                .map(|st| StrategyProfile::uniform(&st.action_counts))
                .collect(),
        }
    }

    pub fn stage(&self, s: usize) -> &StrategyProfile {
        &self.stages[s]
    }

    pub fn stages(&self) -> &[StrategyProfile] {
        &self.stages
    }

    /// Checks the stage count and every stage's action sets against `game`.
    pub fn validate(&self, game: &StochasticGame) -> Result<()> {
        game.check_len(self.stages.len())?;
        for (s, (p, st)) in self.stages.iter().zip(&game.stages).enumerate() {
            p.check_counts(&st.action_counts)
                .map_err(|_| StochasticError::StageMismatch(s))?;
        }
        Ok(())
    }
}

/// Entrywise minimum and maximum over a stage's vertex matrices: the range
/// of each pure-action payoff over the hull.
pub fn entrywise_bounds(vertices: &[Matrix]) -> Result<(Matrix, Matrix)> {
    let first = vertices.first().ok_or(StochasticError::EmptyVertexList)?;
    let mut lower = first.clone();
    let mut upper = first.clone();
    for (l, m) in vertices.iter().enumerate().skip(1) {
        if m.dim() != first.dim() {
            return Err(StochasticError::VertexDimension(l));
        }
        lower.zip_mut_with(m, |a, &b| *a = a.min(b));
        upper.zip_mut_with(m, |a, &b| *a = a.max(b));
    }
    Ok((lower, upper))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixGameSolution {
    pub value: f64,
    pub row_strategy: Vec<f64>,
    pub col_strategy: Vec<f64>,
}

fn pure_saddle(m: &Matrix) -> Option<(f64, usize, usize)> {
    let (row, maximin) = m
        .outer_iter()
        .map(|r| r.iter().copied().fold(f64::INFINITY, f64::min))
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
        );
    let (col, minimax) = m
        .columns()
        .into_iter()
        .map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .enumerate()
        .fold(
            (0, f64::INFINITY),
            |acc, (j, v)| if v < acc.1 { (j, v) } else { acc },
        );
    (maximin == minimax).then_some((maximin, row, col))
}

/// Maximin strategy of the row player and the game value.
fn row_lp(m: &Matrix) -> Result<(f64, Vec<f64>)> {
    let (rows, cols) = m.dim();
    let mut objective = vec![0.0; rows + 1];
    objective[rows] = -1.0;
    let mut lp = LinearProgram::minimize(objective);
    for i in 0..rows {
        lp.set_bounds(i, Bounds::NONNEGATIVE)?;
    }
    for j in 0..cols {
        // v - sum_i x_i M_ij <= 0
        let mut row: Vec<f64> = m.column(j).iter().map(|v| -v).collect();
        row.push(1.0);
        lp.add_constraint(row, Relation::Le, 0.0)?;
    }
    let mut simplex = vec![1.0; rows];
    simplex.push(0.0);
    lp.add_constraint(simplex, Relation::Eq, 1.0)?;
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(StochasticError::UnexpectedLpStatus(sol.status));
    }
    let value = sol.primal[rows];
    Ok((value, normalized(&sol.primal[..rows])))
}

fn normalized(x: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    let s: f64 = clipped.iter().sum();
    clipped.into_iter().map(|v| v / s).collect()
}

/// Value `max_x min_y x^T M y` with optimal strategies for both sides.
pub fn matrix_game_value(m: &Matrix) -> Result<MatrixGameSolution> {
    if m.is_empty() {
        return Err(StochasticError::EmptyVertexList);
    }
    if let Some((value, i, j)) = pure_saddle(m) {
        let mut row_strategy = vec![0.0; m.nrows()];
        let mut col_strategy = vec![0.0; m.ncols()];
        row_strategy[i] = 1.0;
        col_strategy[j] = 1.0;
        return Ok(MatrixGameSolution {
            value,
            row_strategy,
            col_strategy,
        });
    }
    let (value, row_strategy) = row_lp(m)?;
    // The column player's problem is the row problem of -M^T.
    let neg_t = m.t().mapv(|v| -v);
    let (_, col_strategy) = row_lp(&neg_t)?;
    Ok(MatrixGameSolution {
        value,
        row_strategy,
        col_strategy,
    })
}

fn game_value(m: &Matrix) -> Result<f64> {
    match pure_saddle(m) {
        Some((v, _, _)) => Ok(v),
        None => Ok(row_lp(m)?.0),
    }
}

/// `s -> val(payoff(s) + gamma * E[v(s')])` for two-player stages.
fn shapley_step(game: &StochasticGame, payoff: &[Matrix], v: &[f64]) -> Result<Vec<f64>> {
    let gamma = game.discount;
    (0..game.num_stages())
        .map(|s| {
            let base = &payoff[s];
            let cols = base.ncols();
            let m = Matrix::from_shape_fn(base.dim(), |(x, y)| {
                base[[x, y]] + gamma * game.expected_next(s, x * cols + y, v)
            });
            game_value(&m)
        })
        .collect()
}

fn stage_bounds(game: &StochasticGame) -> Result<(Vec<Matrix>, Vec<Matrix>)> {
    let mut lower = Vec::with_capacity(game.num_stages());
    let mut upper = Vec::with_capacity(game.num_stages());
    for s in 0..game.num_stages() {
        let (l, u) = entrywise_bounds(game.zero_sum_vertices(s)?)?;
        lower.push(l);
        upper.push(u);
    }
    Ok((lower, upper))
}

fn check_values(game: &StochasticGame, v: &[f64]) -> Result<()> {
    game.check_len(v.len())
}

/// `(T alpha)(s) = val(delta(s) + gamma * E[alpha(s')])`.
pub fn apply_upper_operator(game: &StochasticGame, alpha: &[f64]) -> Result<Vec<f64>> {
    check_values(game, alpha)?;
    let (_, upper) = stage_bounds(game)?;
    shapley_step(game, &upper, alpha)
}

/// `(J beta)(s) = val(lambda(s) + gamma * E[beta(s')])`.
pub fn apply_lower_operator(game: &StochasticGame, beta: &[f64]) -> Result<Vec<f64>> {
    check_values(game, beta)?;
    let (lower, _) = stage_bounds(game)?;
    shapley_step(game, &lower, beta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueInterval {
    /// `beta*(s)`.
    pub lower: Vec<f64>,
    /// `alpha*(s)`.
    pub upper: Vec<f64>,
    pub iterations: usize,
    /// Final sup-norm change of the slower of the two iterations.
    pub residual: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueIteration {
    pub values: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
}

/// Change in successive iterates below which the iterate is within
/// `epsilon` of the fixed point.
fn stopping_threshold(epsilon: f64, gamma: f64) -> f64 {
    epsilon * (1.0 - gamma) / gamma
}

pub fn value_interval(game: &StochasticGame, epsilon: f64) -> Result<ValueInterval> {
    value_interval_with_limit(game, epsilon, DEFAULT_MAX_ITERATIONS)
}

/// Iterates `T` and `J` from `alpha_0 = max/(1-gamma) + 1` and
/// `beta_0 = min/(1-gamma) - 1` until both move by at most
/// `epsilon (1-gamma)/gamma`, so each final iterate is within `epsilon` of its
/// fixed point.
pub fn value_interval_with_limit(
    game: &StochasticGame,
    epsilon: f64,
    max_iterations: usize,
) -> Result<ValueInterval> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(StochasticError::InvalidEpsilon(epsilon));
    }
    let (lower_pay, upper_pay) = stage_bounds(game)?;
    let gamma = game.discount;
    let hi = upper_pay
        .iter()
        .flat_map(|m| m.iter())
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let lo = lower_pay
        .iter()
        .flat_map(|m| m.iter())
        .copied()
        .fold(f64::INFINITY, f64::min);
    let mut alpha = vec![hi / (1.0 - gamma) + 1.0; game.num_stages()];
    let mut beta = vec![lo / (1.0 - gamma) - 1.0; game.num_stages()];
    let threshold = stopping_threshold(epsilon, gamma);
    for iteration in 1..=max_iterations {
        let next_alpha = shapley_step(game, &upper_pay, &alpha)?;
        let next_beta = shapley_step(game, &lower_pay, &beta)?;
        let residual = sup_distance(&next_alpha, &alpha).max(sup_distance(&next_beta, &beta));
        alpha = next_alpha;
        beta = next_beta;
        if residual <= threshold {
            return Ok(ValueInterval {
                lower: beta,
                upper: alpha,
                iterations: iteration,
                residual,
                epsilon,
            });
        }
    }
    Err(StochasticError::IterationLimit(max_iterations))
}

pub fn shapley_value(
    game: &StochasticGame,
    realization: &[Matrix],
    epsilon: f64,
) -> Result<ValueIteration> {
    shapley_value_with_limit(game, realization, epsilon, DEFAULT_MAX_ITERATIONS)
}

/// Value iteration on the complete-information game with stage payoff
/// matrices `realization`, started from zero.
pub fn shapley_value_with_limit(
    game: &StochasticGame,
    realization: &[Matrix],
    epsilon: f64,
    max_iterations: usize,
) -> Result<ValueIteration> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(StochasticError::InvalidEpsilon(epsilon));
    }
    game.check_len(realization.len())?;
    for (s, m) in realization.iter().enumerate() {
        if m.dim() != game.zero_sum_vertices(s)?[0].dim() {
            return Err(StochasticError::StageMismatch(s));
        }
    }
    let threshold = stopping_threshold(epsilon, game.discount);
    let mut v = vec![0.0; game.num_stages()];
    for iteration in 1..=max_iterations {
        let next = shapley_step(game, realization, &v)?;
        let residual = sup_distance(&next, &v);
        v = next;
        if residual <= threshold {
            return Ok(ValueIteration {
                values: v,
                iterations: iteration,
                residual,
            });
        }
    }
    Err(StochasticError::IterationLimit(max_iterations))
}

/// Probability of each joint pure action under a stage profile.
fn joint_distribution(stage: &Stage, profile: &StrategyProfile) -> Vec<f64> {
    (0..stage.num_joint_actions())
        .map(|joint| {
            stage
                .decode_joint(joint)
                .iter()
                .enumerate()
                .map(|(p, &a)| profile.strategy(p)[a])
                .product()
        })
        .collect()
}

/// Discounted values of every player from every start stage under a fixed
/// stationary profile and payoff realization.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentValues {
    /// `values[i][s] = Q_{i,s}`.
    pub values: Vec<Vec<f64>>,
    /// Expected stage payoff `m[i][s]`.
    pub stage_payoffs: Vec<Vec<f64>>,
    /// Stage-to-stage transition matrix induced by the profile.
    pub transition: Matrix,
    pub discount: f64,
}

impl AgentValues {
    /// `max |Q - m - gamma P Q|`.
    pub fn residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (q, m) in self.values.iter().zip(&self.stage_payoffs) {
            for (s, row) in self.transition.outer_iter().enumerate() {
                let next: f64 = row.iter().zip(q).map(|(p, v)| p * v).sum();
                worst = worst.max((q[s] - m[s] - self.discount * next).abs());
            }
        }
        worst
    }
}

/// Exact policy evaluation: solves `(I - gamma P) Q_i = m_i` for every player.
pub fn evaluate_profile(
    game: &StochasticGame,
    profile: &MarkovProfile,
    realization: &[PolymatrixGame],
) -> Result<AgentValues> {
    profile.validate(game)?;
    game.check_realization(realization)?;
    let n = game.num_stages();
    let players = game
        .stages
        .iter()
        .map(|s| s.action_counts.len())
        .max()
        .unwrap_or(0);
    let mut transition = Matrix::zeros((n, n));
    let mut stage_payoffs = vec![vec![0.0; n]; players];
    for (s, stage) in game.stages.iter().enumerate() {
        let dist = joint_distribution(stage, profile.stage(s));
        for (joint, &w) in dist.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (t, p) in stage.transitions[joint].iter().enumerate() {
                transition[[s, t]] += w * p;
            }
        }
        for (i, m) in stage_payoffs
            .iter_mut()
            .enumerate()
            .take(stage.action_counts.len())
        {
            m[s] = realization[s].payoff(profile.stage(s), i)?;
        }
    }
    let system = Matrix::from_shape_fn((n, n), |(r, c)| {
        f64::from(u8::from(r == c)) - game.discount * transition[[r, c]]
    });
    let values = stage_payoffs
        .iter()
        .map(|m| solve_linear(&system, m))
        .collect();
    Ok(AgentValues {
        values,
        stage_payoffs,
        transition,
        discount: game.discount,
    })
}

/// `Q_{i,s}` for a pure stationary profile `actions[s][i]`.
pub fn evaluate_pure_profile(
    game: &StochasticGame,
    actions: &[Vec<usize>],
    realization: &[PolymatrixGame],
) -> Result<AgentValues> {
    let profile = MarkovProfile::from_pure(game, actions)?;
    evaluate_profile(game, &profile, realization)
}

/// Gaussian elimination with partial pivoting on a small dense system.
fn solve_linear(a: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m = a.clone();
    let mut x = b.to_vec();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&r, &q| m[[r, col]].abs().total_cmp(&m[[q, col]].abs()))
            .unwrap_or(col);
        if pivot != col {
            for c in 0..n {
                m.swap([col, c], [pivot, c]);
            }
            x.swap(col, pivot);
        }
        let d = m[[col, col]];
        for r in col + 1..n {
            let f = m[[r, col]] / d;
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                m[[r, c]] -= f * m[[col, c]];
            }
            x[r] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let tail: f64 = (col + 1..n).map(|c| m[[col, c]] * x[c]).sum();
        x[col] = (x[col] - tail) / m[[col, col]];
    }
    x
}

/// Best response of `player` against the others' fixed Markov strategies,
/// by value iteration on the induced single-agent MDP started at `start`.
fn best_response_values(
    game: &StochasticGame,
    profile: &MarkovProfile,
    realization: &[PolymatrixGame],
    player: usize,
    start: &[f64],
    accuracy: f64,
) -> Result<Vec<f64>> {
    let gamma = game.discount;
    // (reward, next-stage distribution) per stage per own action
    let mut models: Vec<Vec<(f64, Vec<f64>)>> = Vec::with_capacity(game.num_stages());
    for (s, stage) in game.stages.iter().enumerate() {
        let d = stage.action_counts[player];
        let x = profile.stage(s);
        let mut acts = vec![(0.0, vec![0.0; game.num_stages()]); d];
        for joint in 0..stage.num_joint_actions() {
            let actions = stage.decode_joint(joint);
            let w: f64 = actions
                .iter()
                .enumerate()
                .filter(|&(p, _)| p != player)
                .map(|(p, &a)| x.strategy(p)[a])
                .product();
            if w == 0.0 {
                continue;
            }
            let (reward, next) = &mut acts[actions[player]];
            *reward += w * realization[s].pure_payoff(&actions, player);
            for (acc, p) in next.iter_mut().zip(&stage.transitions[joint]) {
                *acc += w * p;
            }
        }
        models.push(acts);
    }
    let threshold = stopping_threshold(accuracy, gamma);
    let mut v = start.to_vec();
    for _ in 0..DEFAULT_MAX_ITERATIONS {
        let next: Vec<f64> = models
            .iter()
            .map(|acts| {
                acts.iter()
                    .map(|(r, p)| r + gamma * p.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>())
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let change = sup_distance(&next, &v);
        v = next;
        if change <= threshold {
            return Ok(v);
        }
    }
    Err(StochasticError::IterationLimit(DEFAULT_MAX_ITERATIONS))
}

/// A profitable unilateral deviation found by the MPE check.
#[derive(Debug, Clone, PartialEq)]
pub struct MpeDeviation {
    /// Vertex index per stage per edge.
    pub combination: Vec<Vec<usize>>,
    pub player: usize,
    pub stage: usize,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpeReport {
    pub holds: bool,
    pub combinations: usize,
    /// Largest deviation gain over all combinations, players and stages.
    pub max_gain: f64,
    pub worst: Option<MpeDeviation>,
}

pub fn verify_expost_mpe(game: &StochasticGame, profile: &MarkovProfile, tol: f64) -> Result<bool> {
    Ok(check_expost_mpe(game, profile, tol, DEFAULT_COMBINATION_CAP)?.holds)
}

/// Checks that no player gains more than `tol` (at any start stage) by
/// deviating from `profile`, for every combination of per-stage, per-edge
/// payoff vertices. Discounted payoffs are affine in each stage payoff, so
/// the largest gain over the hull is attained at some vertex combination.
pub fn check_expost_mpe(
    game: &StochasticGame,
    profile: &MarkovProfile,
    tol: f64,
    cap: u64,
) -> Result<MpeReport> {
    profile.validate(game)?;
    let counts: Vec<Vec<usize>> = game.stages.iter().map(Stage::vertex_counts).collect();
    let combinations = counts
        .iter()
        .flatten()
        .try_fold(1u128, |acc, &k| acc.checked_mul(k as u128))
        .unwrap_or(u128::MAX);
    if combinations > cap as u128 {
        return Err(StochasticError::CombinationCap { combinations, cap });
    }
    let accuracy = (tol * 1e-3).max(1e-13);
    let mut choice: Vec<Vec<usize>> = counts.iter().map(|c| vec![0; c.len()]).collect();
    let mut worst: Option<MpeDeviation> = None;
    let mut checked = 0usize;
    loop {
        let realization = game.vertex_realization(&choice)?;
        let values = evaluate_profile(game, profile, &realization)?;
        let players = values.values.len();
        for player in 0..players {
            let q = &values.values[player];
            let best = best_response_values(game, profile, &realization, player, q, accuracy)?;
            for (stage, (b, v)) in best.iter().zip(q).enumerate() {
                let gain = b - v;
                if worst.as_ref().is_none_or(|w| gain > w.gain) {
                    worst = Some(MpeDeviation {
                        combination: choice.clone(),
                        player,
                        stage,
                        gain,
                    });
                }
            }
        }
        checked += 1;
        if !advance(&mut choice, &counts) {
            break;
        }
    }
    let max_gain = worst.as_ref().map_or(0.0, |w| w.gain);
    let holds = max_gain <= tol;
    Ok(MpeReport {
        holds,
        combinations: checked,
        max_gain,
        worst: (!holds).then_some(worst).flatten(),
    })
}

/// Odometer step over nested digit vectors; false once it wraps around.
fn advance(choice: &mut [Vec<usize>], counts: &[Vec<usize>]) -> bool {
    for (digits, limits) in choice.iter_mut().zip(counts).rev() {
        for (d, &k) in digits.iter_mut().zip(limits).rev() {
            *d += 1;
            if *d < k {
                return true;
            }
            *d = 0;
        }
    }
    false
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationEstimate {
    /// Mean truncated discounted payoff per player.
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    /// `gamma^T max|payoff| / (1 - gamma)`, the largest possible effect of
    /// truncating at the horizon.
    pub truncation_bound: f64,
    pub episodes: usize,
    pub horizon: usize,
}

fn sample(weights: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return k;
        }
    }
    // Round-off left `acc` just below one; fall back to the last positive weight.
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Monte Carlo estimate of every player's discounted payoff from `start`.
///
/// Episode `e` draws from a ChaCha stream keyed by `(seed, e)`, so results do
/// not depend on evaluation order.
pub fn simulate(
    game: &StochasticGame,
    profile: &MarkovProfile,
    realization: &[PolymatrixGame],
    start: usize,
    horizon: usize,
    episodes: usize,
    seed: u64,
) -> Result<SimulationEstimate> {
    if horizon == 0 {
        return Err(StochasticError::InvalidSimulation(
            "horizon must be at least 1",
        ));
    }
    if episodes == 0 {
        return Err(StochasticError::InvalidSimulation(
            "episodes must be at least 1",
        ));
    }
    if start >= game.num_stages() {
        return Err(StochasticError::InvalidSimulation(
            "start stage out of range",
        ));
    }
    profile.validate(game)?;
    game.check_realization(realization)?;
    let players = game
        .stages
        .iter()
        .map(|s| s.action_counts.len())
        .max()
        .unwrap_or(0);

    let mut max_payoff: f64 = 0.0;
    for (st, g) in game.stages.iter().zip(realization) {
        for joint in 0..st.num_joint_actions() {
            let actions = st.decode_joint(joint);
            for i in 0..st.action_counts.len() {
                max_payoff = max_payoff.max(g.pure_payoff(&actions, i).abs());
            }
        }
    }
    let gamma = game.discount;
    let truncation_bound =
        gamma.powi(horizon.min(i32::MAX as usize) as i32) * max_payoff / (1.0 - gamma);

    // Welford running mean and sum of squared deviations.
    let mut mean = vec![0.0; players];
    let mut m2 = vec![0.0; players];
    let mut returns = vec![0.0; players];
    let mut actions = Vec::new();
    for episode in 0..episodes {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(episode as u64);
        returns.iter_mut().for_each(|r| *r = 0.0);
        let mut s = start;
        let mut weight = 1.0;
        for _ in 0..horizon {
            let stage = &game.stages[s];
            let x = profile.stage(s);
            actions.clear();
            actions.extend((0..stage.action_counts.len()).map(|p| sample(x.strategy(p), &mut rng)));
            for (i, r) in returns
                .iter_mut()
                .enumerate()
                .take(stage.action_counts.len())
            {
                *r += weight * realization[s].pure_payoff(&actions, i);
            }
            s = sample(&stage.transitions[stage.joint_index(&actions)], &mut rng);
            weight *= gamma;
        }
        for (i, r) in returns.iter().enumerate() {
            let delta = r - mean[i];
            mean[i] += delta / (episode + 1) as f64;
            m2[i] += delta * (r - mean[i]);
        }
    }
    let n = episodes as f64;
    let std_error = m2
        .iter()
        .map(|m2| {
            if episodes < 2 {
                return 0.0;
            }
            (m2 / (n - 1.0) / n).sqrt()
        })
        .collect();
    Ok(SimulationEstimate {
        mean,
        std_error,
        truncation_bound,
        episodes,
        horizon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn mp() -> Matrix {
        array![[1.0, -1.0], [-1.0, 1.0]]
    }

    /// Single stage looping back to itself under every joint action.
    fn self_loop(vertices: Vec<Matrix>, gamma: f64) -> StochasticGame {
        let joint = vertices[0].len();
        StochasticGame::new(
            vec![Stage::zero_sum(vertices, vec![vec![1.0]; joint])],
            gamma,
        )
        .unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn entrywise_bounds_examples() {
        let (lo, hi) = entrywise_bounds(&[mp(), mp() * 2.0]).unwrap();
        assert_eq!(lo, array![[1.0, -2.0], [-2.0, 1.0]]);
        assert_eq!(hi, array![[2.0, -1.0], [-1.0, 2.0]]);
        let m = array![[0.5, 3.0]];
        assert_eq!(
            entrywise_bounds(std::slice::from_ref(&m)).unwrap(),
            (m.clone(), m.clone())
        );
        assert_eq!(
            entrywise_bounds(&[m.clone(), m.clone()]).unwrap(),
            (m.clone(), m)
        );
        assert_eq!(entrywise_bounds(&[]), Err(StochasticError::EmptyVertexList));
    }

    #[test]
    fn matrix_game_value_examples() {
        assert_eq!(matrix_game_value(&array![[0.0]]).unwrap().value, 0.0);
        let s = matrix_game_value(&mp()).unwrap();
        assert!(close(s.value, 0.0, 1e-12));
        assert!(close(s.row_strategy[0], 0.5, 1e-12));
        assert!(close(s.col_strategy[0], 0.5, 1e-12));
        let m = array![[2.0, -1.0], [-1.0, 1.0]];
        let s = matrix_game_value(&m).unwrap();
        assert!(close(s.value, 0.2, 1e-12));
        assert!(close(s.row_strategy[0], 0.4, 1e-12));
        assert!(close(s.col_strategy[0], 0.4, 1e-12));
    }

    #[test]
    fn operator_examples() {
        let g = self_loop(vec![array![[0.0]]], 0.9);
        assert!(close(
            apply_upper_operator(&g, &[10.0]).unwrap()[0],
            9.0,
            1e-12
        ));
        assert!(close(
            apply_lower_operator(&g, &[-10.0]).unwrap()[0],
            -9.0,
            1e-12
        ));

        let g = self_loop(vec![mp()], 0.5);
        assert!(close(
            apply_upper_operator(&g, &[0.0]).unwrap()[0],
            0.0,
            1e-12
        ));

        let g = self_loop(vec![array![[2.0, -1.0], [-1.0, 2.0]]], 0.5);
        assert!(close(
            apply_upper_operator(&g, &[0.0]).unwrap()[0],
            0.5,
            1e-12
        ));

        let g = self_loop(vec![array![[1.0, -2.0], [-2.0, 1.0]]], 0.5);
        assert!(close(
            apply_lower_operator(&g, &[0.0]).unwrap()[0],
            -0.5,
            1e-12
        ));

        let g = self_loop(vec![array![[2.0, -1.0], [-1.0, 1.0]]], 0.5);
        for v in [-3.0, 0.0, 4.5] {
            assert_eq!(
                apply_upper_operator(&g, &[v]).unwrap(),
                apply_lower_operator(&g, &[v]).unwrap()
            );
        }
        assert!(matches!(
            apply_upper_operator(&g, &[0.0, 1.0]),
            Err(StochasticError::StageCount { .. })
        ));
    }

    #[test]
    fn value_interval_examples() {
        let eps = 1e-6;
        let r = value_interval(&self_loop(vec![array![[0.0]]], 0.9), eps).unwrap();
        assert!(close(r.lower[0], 0.0, eps) && close(r.upper[0], 0.0, eps));

        let r = value_interval(&self_loop(vec![mp(), mp() * 2.0], 0.5), eps).unwrap();
        assert!(close(r.lower[0], -1.0, eps), "{r:?}");
        assert!(close(r.upper[0], 1.0, eps), "{r:?}");

        let g = self_loop(vec![array![[2.0, -1.0], [-1.0, 1.0]]], 0.5);
        let r = value_interval(&g, eps).unwrap();
        let v = shapley_value(&g, &[array![[2.0, -1.0], [-1.0, 1.0]]], eps).unwrap();
        assert!(close(r.lower[0], v.values[0], 2.0 * eps));
        assert!(close(r.upper[0], v.values[0], 2.0 * eps));

        assert_eq!(
            value_interval(&g, 0.0),
            Err(StochasticError::InvalidEpsilon(0.0))
        );
        assert_eq!(
            value_interval_with_limit(&g, eps, 2),
            Err(StochasticError::IterationLimit(2))
        );
    }

    #[test]
    fn shapley_examples() {
        let eps = 1e-9;
        let v = shapley_value(&self_loop(vec![array![[0.0]]], 0.5), &[array![[0.0]]], eps).unwrap();
        assert_eq!(v.values[0], 0.0);
        let v = shapley_value(&self_loop(vec![mp()], 0.5), &[mp()], eps).unwrap();
        assert!(close(v.values[0], 0.0, eps));
        let m = array![[2.0, -1.0], [-1.0, 1.0]];
        let v = shapley_value(&self_loop(vec![m.clone()], 0.5), &[m], eps).unwrap();
        assert!(close(v.values[0], 0.4, eps));
    }

    #[test]
    fn polymatrix_stage_rejected_by_interval() {
        let stage = Stage::polymatrix(vec![1, 1], vec![], vec![vec![1.0]]);
        let g = StochasticGame::new(vec![stage], 0.5).unwrap();
        assert_eq!(
            value_interval(&g, 1e-6),
            Err(StochasticError::NotZeroSumForm(0))
        );
    }

    #[test]
    fn game_validation() {
        let bad_row = Stage::zero_sum(vec![array![[0.0]]], vec![vec![0.5]]);
        assert!(matches!(
            StochasticGame::new(vec![bad_row], 0.5),
            Err(StochasticError::InvalidDistribution { .. })
        ));
        let ok = Stage::zero_sum(vec![array![[0.0]]], vec![vec![1.0]]);
        for gamma in [0.0, 1.0, -0.5, f64::NAN] {
            assert!(matches!(
                StochasticGame::new(vec![ok.clone()], gamma),
                Err(StochasticError::InvalidDiscount(_))
            ));
        }
        let short = Stage::zero_sum(vec![mp()], vec![vec![1.0]; 3]);
        assert!(matches!(
            StochasticGame::new(vec![short], 0.5),
            Err(StochasticError::TransitionCount {
                expected: 4,
                found: 3,
                ..
            })
        ));
        let mismatched = Stage::zero_sum(vec![mp(), array![[1.0]]], vec![vec![1.0]; 4]);
        assert!(matches!(
            StochasticGame::new(vec![mismatched], 0.5),
            Err(StochasticError::VertexShape { vertex: 1, .. })
        ));
        assert_eq!(
            StochasticGame::new(vec![], 0.5),
            Err(StochasticError::NoStages)
        );
    }

    /// Two single-action players; the row player earns `payoffs[s]` at stage `s`.
    fn constant_payoff_chain(payoffs: &[f64], next: &[usize], gamma: f64) -> StochasticGame {
        let n = payoffs.len();
        let stages = payoffs
            .iter()
            .zip(next)
            .map(|(&p, &t)| {
                let mut row = vec![0.0; n];
                row[t] = 1.0;
                Stage::zero_sum(vec![array![[p]]], vec![row])
            })
            .collect();
        StochasticGame::new(stages, gamma).unwrap()
    }

    #[test]
    fn pure_profile_examples() {
        let g = constant_payoff_chain(&[1.0], &[0], 0.5);
        let real = g.vertex_realization(&[vec![0]]).unwrap();
        let q = evaluate_pure_profile(&g, &[vec![0, 0]], &real).unwrap();
        assert!(close(q.values[0][0], 2.0, 1e-12));
        assert!(close(q.values[1][0], -2.0, 1e-12));

        let g = constant_payoff_chain(&[1.0, 0.0], &[1, 0], 0.5);
        let real = g.vertex_realization(&[vec![0], vec![0]]).unwrap();
        let q = evaluate_pure_profile(&g, &[vec![0, 0], vec![0, 0]], &real).unwrap();
        assert!(close(q.values[0][0], 4.0 / 3.0, 1e-12));
        assert!(close(q.values[0][1], 2.0 / 3.0, 1e-12));
        assert!(q.residual() <= 1e-12);

        let g = constant_payoff_chain(&[0.0, 0.0], &[1, 1], 0.9);
        let real = g.vertex_realization(&[vec![0], vec![0]]).unwrap();
        let q = evaluate_pure_profile(&g, &[vec![0, 0], vec![0, 0]], &real).unwrap();
        assert!(q.values.iter().flatten().all(|v| *v == 0.0));

        assert!(matches!(
            evaluate_pure_profile(&g, &[vec![1, 0], vec![0, 0]], &real),
            Err(StochasticError::StageMismatch(0))
        ));
    }

    fn mpe_single_stage(vertices: Vec<Matrix>) -> StochasticGame {
        let pairs = vertices
            .into_iter()
            .map(|a| {
                let t = -a.t().to_owned();
                (a, t)
            })
            .collect();
        let stage = Stage::polymatrix(
            vec![2, 2],
            vec![EdgeUncertainty {
                i: 0,
                j: 1,
                vertices: pairs,
            }],
            vec![vec![1.0]; 4],
        );
        StochasticGame::new(vec![stage], 0.5).unwrap()
    }

    #[test]
    fn mpe_examples() {
        let uniform = |g: &StochasticGame| MarkovProfile::uniform(g);
        let g = mpe_single_stage(vec![mp()]);
        assert!(verify_expost_mpe(&g, &uniform(&g), 1e-9).unwrap());
        let g = mpe_single_stage(vec![mp(), mp() * 2.0]);
        assert!(verify_expost_mpe(&g, &uniform(&g), 1e-9).unwrap());
        let g = mpe_single_stage(vec![mp(), array![[2.0, -1.0], [-1.0, 1.0]]]);
        let report = check_expost_mpe(&g, &uniform(&g), 1e-9, 10).unwrap();
        assert!(!report.holds);
        let worst = report.worst.unwrap();
        assert_eq!(worst.combination, vec![vec![1]]);
        // Deviation gain 0.25 per step against (0.5, 0.5), discounted by 1/(1 - 0.5).
        assert!(close(worst.gain, 0.5, 1e-9));
        assert!(matches!(
            check_expost_mpe(&g, &uniform(&g), 1e-9, 1),
            Err(StochasticError::CombinationCap {
                combinations: 2,
                cap: 1
            })
        ));
    }

    #[test]
    fn mpe_zero_sum_stage_form_also_checked() {
        let g = self_loop(vec![mp(), mp() * 3.0], 0.8);
        assert!(verify_expost_mpe(&g, &MarkovProfile::uniform(&g), 1e-9).unwrap());
    }

    #[test]
    fn simulate_examples() {
        let g = constant_payoff_chain(&[1.0], &[0], 0.5);
        let real = g.vertex_realization(&[vec![0]]).unwrap();
        let p = MarkovProfile::uniform(&g);
        let est = simulate(&g, &p, &real, 0, 30, 10, 7).unwrap();
        assert!(close(est.mean[0], 2.0, 1e-8));
        assert_eq!(est.std_error[0], 0.0);
        assert!(est.truncation_bound <= 2f64.powi(-29) * 2.0 + 1e-18);

        let g = self_loop(vec![mp()], 0.5);
        let real = g.vertex_realization(&[vec![0]]).unwrap();
        let est = simulate(&g, &MarkovProfile::uniform(&g), &real, 0, 30, 100_000, 11).unwrap();
        assert!(est.mean[0].abs() <= 3.0 * est.std_error[0]);
        assert!(close(est.mean[0], -est.mean[1], 1e-12));

        let g = constant_payoff_chain(&[0.0], &[0], 0.9);
        let real = g.vertex_realization(&[vec![0]]).unwrap();
        let est = simulate(&g, &MarkovProfile::uniform(&g), &real, 0, 50, 20, 0).unwrap();
        assert_eq!(est.mean, vec![0.0, 0.0]);

        for (h, e) in [(0, 1), (1, 0)] {
            assert!(matches!(
                simulate(&g, &MarkovProfile::uniform(&g), &real, 0, h, e, 0),
                Err(StochasticError::InvalidSimulation(_))
            ));
        }
    }

    #[test]
    fn simulate_is_reproducible() {
        let g = self_loop(vec![mp()], 0.7);
        let real = g.vertex_realization(&[vec![0]]).unwrap();
        let p = MarkovProfile::uniform(&g);
        let a = simulate(&g, &p, &real, 0, 20, 500, 42).unwrap();
        let b = simulate(&g, &p, &real, 0, 20, 500, 42).unwrap();
        assert_eq!(a, b);
    }

    fn arb_two_stage_game() -> impl Strategy<Value = StochasticGame> {
        (
            prop::collection::vec(-5.0f64..5.0, 2 * 2 * 2 * 2),
            prop::collection::vec(0.0f64..1.0, 2 * 4),
            0.1f64..0.95,
        )
            .prop_map(|(entries, trans, gamma)| {
                let stages = (0..2)
                    .map(|s| {
                        let vs = (0..2)
                            .map(|k| {
                                let o = 8 * s + 4 * k;
                                Matrix::from_shape_vec((2, 2), entries[o..o + 4].to_vec()).unwrap()
                            })
                            .collect();
                        let rows = (0..4)
                            .map(|j| {
                                let p = trans[4 * s + j];
                                vec![p, 1.0 - p]
                            })
                            .collect();
                        Stage::zero_sum(vs, rows)
                    })
                    .collect();
                StochasticGame::new(stages, gamma).unwrap()
            })
    }

    proptest! {
        #[test]
        fn matrix_game_strategies_certify_value(
            (r, c, entries) in (1usize..5, 1usize..5)
                .prop_flat_map(|(r, c)| (Just(r), Just(c), prop::collection::vec(-10.0f64..10.0, r * c))),
        ) {
            let m = Matrix::from_shape_vec((r, c), entries).unwrap();
            let s = matrix_game_value(&m).unwrap();
            for j in 0..c {
                let guard: f64 = (0..r).map(|i| s.row_strategy[i] * m[[i, j]]).sum();
                prop_assert!(guard >= s.value - 1e-8);
            }
            for i in 0..r {
                let guard: f64 = (0..c).map(|j| s.col_strategy[j] * m[[i, j]]).sum();
                prop_assert!(guard <= s.value + 1e-8);
            }
        }

        #[test]
        fn operators_contract(
            g in arb_two_stage_game(),
            a in prop::collection::vec(-20.0f64..20.0, 2),
            b in prop::collection::vec(-20.0f64..20.0, 2),
        ) {
            let dist = sup_distance(&a, &b);
            prop_assume!(dist > 1e-6);
            let gamma = g.discount();
            let t = sup_distance(&apply_upper_operator(&g, &a).unwrap(), &apply_upper_operator(&g, &b).unwrap());
            let j = sup_distance(&apply_lower_operator(&g, &a).unwrap(), &apply_lower_operator(&g, &b).unwrap());
            prop_assert!(t <= gamma * dist + 1e-9);
            prop_assert!(j <= gamma * dist + 1e-9);
        }

        #[test]
        fn upper_dominates_lower(
            g in arb_two_stage_game(),
            beta in prop::collection::vec(-20.0f64..20.0, 2),
            lift in prop::collection::vec(0.0f64..5.0, 2),
        ) {
            let alpha: Vec<f64> = beta.iter().zip(&lift).map(|(b, l)| b + l).collect();
            let t = apply_upper_operator(&g, &alpha).unwrap();
            let j = apply_lower_operator(&g, &beta).unwrap();
            for (u, l) in t.iter().zip(&j) {
                prop_assert!(u + 1e-12 >= *l);
            }
        }

        #[test]
        fn pure_evaluation_is_a_fixed_point(
            g in arb_two_stage_game(),
            acts in prop::collection::vec(0usize..2, 4),
            pick in prop::collection::vec(0usize..2, 2),
        ) {
            let real = g.vertex_realization(&[vec![pick[0]], vec![pick[1]]]).unwrap();
            let q = evaluate_pure_profile(&g, &[acts[..2].to_vec(), acts[2..].to_vec()], &real).unwrap();
            prop_assert!(q.residual() <= 1e-9);
        }
    }
}
