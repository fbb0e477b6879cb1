//! Polymatrix games, strategy profiles and the consolidated payoff matrix.

use ndarray::{s, Array2, ArrayView2};
use thiserror::Error;

pub type Matrix = Array2<f64>;

/// Tolerance on simplex membership for mixed strategies.
pub const SIMPLEX_TOL: f64 = 1e-9;
/// Default cap on the number of pure profiles enumerated by the zero-sum check.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("a game needs at least one player")]
    NoPlayers,
    #[error("player {0} has no actions")]
    NoActions(usize),
    #[error("player {player} out of range for a {num_players}-player game")]
    PlayerOutOfRange { player: usize, num_players: usize },
    #[error("edge [{0}, {0}] connects a player to itself")]
    SelfLoop(usize),
    #[error("duplicate edge [{0}, {1}]")]
    DuplicateEdge(usize, usize),
    #[error(
        "payoff matrix for player {owner} against {other} is {found:?}, expected {expected:?}"
    )]
    MatrixShape {
        owner: usize,
        other: usize,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("payoff matrix for player {owner} against {other} has a non-finite entry")]
    NonFinitePayoff { owner: usize, other: usize },
    #[error("profile has {found} strategies, game has {expected} players")]
    ProfilePlayers { expected: usize, found: usize },
    #[error("strategy of player {player} has length {found}, expected {expected}")]
    StrategyLength {
        player: usize,
        expected: usize,
        found: usize,
    },
    #[error("strategy of player {player} is not a probability vector")]
    NotOnSimplex { player: usize },
    #[error("{profiles} pure profiles exceed the enumeration cap of {cap}")]
    EnumerationCap { profiles: u128, cap: u64 },
    #[error("an uncertain game needs at least one vertex")]
    NoVertices,
    #[error("vertex {0} does not share the topology of vertex 0")]
    TopologyMismatch(usize),
    #[error("expected {expected} hull weights, got {found}")]
    WeightCount { expected: usize, found: usize },
    #[error("hull weights must be nonnegative and sum to one")]
    InvalidWeights,
}

/// One edge `[i, j]` with both directed payoff matrices.
///
/// `a_ij` is `d_i x d_j` and holds player `i`'s payoffs; `a_ji` is
/// `d_j x d_i` and holds player `j`'s.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub a_ij: Matrix,
    pub a_ji: Matrix,
}

impl Edge {
    pub fn new(i: usize, j: usize, a_ij: Matrix, a_ji: Matrix) -> Self {
        Edge { i, j, a_ij, a_ji }
    }

    /// Unordered endpoint pair, smaller index first.
    pub fn key(&self) -> (usize, usize) {
        (self.i.min(self.j), self.i.max(self.j))
    }

    /// Payoff matrix of `owner` on this edge, if `owner` is an endpoint.
    pub fn matrix_for(&self, owner: usize) -> Option<(&Matrix, usize)> {
        if owner == self.i {
            Some((&self.a_ij, self.j))
        } else if owner == self.j {
            Some((&self.a_ji, self.i))
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolymatrixGame {
    action_counts: Vec<usize>,
    edges: Vec<Edge>,
}

impl PolymatrixGame {
    pub fn new(action_counts: Vec<usize>, edges: Vec<Edge>) -> Result<Self, GameError> {
        let n = action_counts.len();
        if n == 0 {
            return Err(GameError::NoPlayers);
        }
        if let Some(p) = action_counts.iter().position(|&d| d == 0) {
            return Err(GameError::NoActions(p));
        }
        let mut seen = std::collections::BTreeSet::new();
        for e in &edges {
            for player in [e.i, e.j] {
                if player >= n {
                    return Err(GameError::PlayerOutOfRange {
                        player,
                        num_players: n,
                    });
                }
            }
            if e.i == e.j {
                return Err(GameError::SelfLoop(e.i));
            }
            if !seen.insert(e.key()) {
                return Err(GameError::DuplicateEdge(e.i, e.j));
            }
            for (owner, other, m) in [(e.i, e.j, &e.a_ij), (e.j, e.i, &e.a_ji)] {
                let expected = (action_counts[owner], action_counts[other]);
                if m.dim() != expected {
                    return Err(GameError::MatrixShape {
                        owner,
                        other,
                        expected,
                        found: m.dim(),
                    });
                }
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(GameError::NonFinitePayoff { owner, other });
                }
            }
        }
        Ok(PolymatrixGame {
            action_counts,
            edges,
        })
    }

    /// Two players on one edge, the column player receiving `-a^T`.
    pub fn two_player_zero_sum(a: Matrix) -> Result<Self, GameError> {
        let (m, n) = a.dim();
        let neg_t = a.t().mapv(|v| -v);
        PolymatrixGame::new(vec![m, n], vec![Edge::new(0, 1, a, neg_t)])
    }

    pub fn num_players(&self) -> usize {
        self.action_counts.len()
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn total_actions(&self) -> usize {
        self.action_counts.iter().sum()
    }

    /// Offset of each player's block in the concatenated action index.
    pub fn offsets(&self) -> Vec<usize> {
        offsets(&self.action_counts)
    }

    /// `A^{owner,other}`, if the edge exists.
    pub fn matrix(&self, owner: usize, other: usize) -> Option<&Matrix> {
        self.edges.iter().find_map(|e| match e.matrix_for(owner) {
            Some((m, o)) if o == other => Some(m),
            _ => None,
        })
    }

    /// Same players, action counts and edge set (orientation-insensitive).
    pub fn same_topology(&self, other: &PolymatrixGame) -> bool {
        if self.action_counts != other.action_counts || self.edges.len() != other.edges.len() {
            return false;
        }
        let mut a: Vec<_> = self.edges.iter().map(Edge::key).collect();
        let mut b: Vec<_> = other.edges.iter().map(Edge::key).collect();
        a.sort_unstable();
        b.sort_unstable();
        a == b
    }

    /// Expected payoff of each of `player`'s pure actions against the rest
    /// of `profile`: `sum_j A^{ij} x^j`.
    pub fn action_values(
        &self,
        profile: &StrategyProfile,
        player: usize,
    ) -> Result<Vec<f64>, GameError> {
        self.check_player(player)?;
        profile.check_counts(&self.action_counts)?;
        let mut values = vec![0.0; self.action_counts[player]];
        for e in &self.edges {
            if let Some((m, other)) = e.matrix_for(player) {
                let x = profile.strategy(other);
                for (k, row) in m.outer_iter().enumerate() {
                    values[k] += row.iter().zip(x).map(|(a, p)| a * p).sum::<f64>();
                }
            }
        }
        Ok(values)
    }

    /// `p_i(x) = sum_{j : [i,j] in E} (x^i)^T A^{ij} x^j`.
    pub fn payoff(&self, profile: &StrategyProfile, player: usize) -> Result<f64, GameError> {
        let values = self.action_values(profile, player)?;
        Ok(values
            .iter()
            .zip(profile.strategy(player))
            .map(|(v, p)| v * p)
            .sum())
    }

    /// Payoff of `player` when everyone plays the pure actions in `actions`.
    pub fn pure_payoff(&self, actions: &[usize], player: usize) -> f64 {
        self.edges
            .iter()
            .filter_map(|e| e.matrix_for(player))
            .map(|(m, other)| m[[actions[player], actions[other]]])
            .sum()
    }

    /// `sum_i p_i` at a pure profile.
    pub fn pure_total(&self, actions: &[usize]) -> f64 {
        self.edges
            .iter()
            .map(|e| e.a_ij[[actions[e.i], actions[e.j]]] + e.a_ji[[actions[e.j], actions[e.i]]])
            .sum()
    }

    pub fn consolidated(&self) -> ConsolidatedMatrix {
        build_consolidated_matrix(self)
    }

    /// Every payoff multiplied by `c`.
    pub fn scaled(&self, c: f64) -> PolymatrixGame {
        let edges = self
            .edges
            .iter()
            .map(|e| Edge::new(e.i, e.j, &e.a_ij * c, &e.a_ji * c))
            .collect();
        PolymatrixGame {
            action_counts: self.action_counts.clone(),
            edges,
        }
    }

    fn check_player(&self, player: usize) -> Result<(), GameError> {
        if player >= self.num_players() {
            return Err(GameError::PlayerOutOfRange {
                player,
                num_players: self.num_players(),
            });
        }
        Ok(())
    }
}

pub(crate) fn offsets(counts: &[usize]) -> Vec<usize> {
    counts
        .iter()
        .scan(0, |acc, &d| {
            let start = *acc;
            *acc += d;
            Some(start)
        })
        .collect()
}

/// One mixed strategy per player.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyProfile {
    strategies: Vec<Vec<f64>>,
}

impl StrategyProfile {
    /// Validates every strategy against the simplex at `SIMPLEX_TOL`.
    pub fn new(strategies: Vec<Vec<f64>>) -> Result<Self, GameError> {
        for (player, x) in strategies.iter().enumerate() {
            if !on_simplex(x) {
                return Err(GameError::NotOnSimplex { player });
            }
        }
        Ok(StrategyProfile { strategies })
    }

    pub fn from_flat(flat: &[f64], counts: &[usize]) -> Result<Self, GameError> {
        let total: usize = counts.iter().sum();
        if flat.len() != total {
            return Err(GameError::StrategyLength {
                player: 0,
                expected: total,
                found: flat.len(),
            });
        }
        let offs = offsets(counts);
        StrategyProfile::new(
            counts
                .iter()
                .zip(&offs)
                .map(|(&d, &o)| flat[o..o + d].to_vec())
                .collect(),
        )
    }

    /// Projects solver output onto the simplices: clamps round-off
    /// negatives to zero and renormalizes.
    pub(crate) fn from_solver(flat: &[f64], counts: &[usize]) -> Result<Self, GameError> {
        let offs = offsets(counts);
        let strategies = counts
            .iter()
            .zip(&offs)
            .map(|(&d, &o)| {
                let mut x: Vec<f64> = flat[o..o + d].iter().map(|v| v.max(0.0)).collect();
                let sum: f64 = x.iter().sum();
                if sum > 0.0 {
                    x.iter_mut().for_each(|v| *v /= sum);
                }
                x
            })
            .collect();
        StrategyProfile::new(strategies)
    }

    pub fn pure(actions: &[usize], counts: &[usize]) -> Result<Self, GameError> {
        let mut strategies = Vec::with_capacity(counts.len());
        for (player, (&a, &d)) in actions.iter().zip(counts).enumerate() {
            if a >= d {
                return Err(GameError::NotOnSimplex { player });
            }
            let mut x = vec![0.0; d];
            x[a] = 1.0;
            strategies.push(x);
        }
        Ok(StrategyProfile { strategies })
    }

    pub fn uniform(counts: &[usize]) -> Self {
        StrategyProfile {
            strategies: counts.iter().map(|&d| vec![1.0 / d as f64; d]).collect(),
        }
    }

    pub fn num_players(&self) -> usize {
        self.strategies.len()
    }

    pub fn strategy(&self, player: usize) -> &[f64] {
        &self.strategies[player]
    }

    pub fn strategies(&self) -> &[Vec<f64>] {
        &self.strategies
    }

    /// The concatenated vector `x = (x^1, ..., x^N)`.
    pub fn flatten(&self) -> Vec<f64> {
        self.strategies.iter().flatten().copied().collect()
    }

    pub fn check_counts(&self, counts: &[usize]) -> Result<(), GameError> {
        if self.strategies.len() != counts.len() {
            return Err(GameError::ProfilePlayers {
                expected: counts.len(),
                found: self.strategies.len(),
            });
        }
        for (player, (x, &d)) in self.strategies.iter().zip(counts).enumerate() {
            if x.len() != d {
                return Err(GameError::StrategyLength {
                    player,
                    expected: d,
                    found: x.len(),
                });
            }
        }
        Ok(())
    }
}

fn on_simplex(x: &[f64]) -> bool {
    !x.is_empty()
        && x.iter().all(|v| v.is_finite() && *v >= -SIMPLEX_TOL)
        && (x.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL
}

/// The square matrix `R` indexed by (player, action) pairs on both axes.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsolidatedMatrix {
    matrix: Matrix,
    action_counts: Vec<usize>,
    offsets: Vec<usize>,
}

impl ConsolidatedMatrix {
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Flat row/column index of `(player, action)`.
    pub fn index(&self, player: usize, action: usize) -> usize {
        self.offsets[player] + action
    }

    /// Block `(i, j)`, a `d_i x d_j` view.
    pub fn block(&self, i: usize, j: usize) -> ArrayView2<'_, f64> {
        let (ri, rj) = (self.offsets[i], self.offsets[j]);
        self.matrix.slice(s![
            ri..ri + self.action_counts[i],
            rj..rj + self.action_counts[j]
        ])
    }

    /// `R x` for a concatenated profile.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix
            .outer_iter()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `x^T R x`, the total payoff of all players at `x`.
    pub fn quadratic(&self, x: &[f64]) -> f64 {
        self.apply(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Per-player regret `max_a e_a^T R x - (x^i)^T (R x)_i` at `x`, with
    /// the maximizing action.
    pub fn regrets(&self, x: &[f64]) -> Vec<(f64, usize)> {
        let rx = self.apply(x);
        self.action_counts
            .iter()
            .zip(&self.offsets)
            .map(|(&d, &o)| {
                let block = &rx[o..o + d];
                let current: f64 = block.iter().zip(&x[o..o + d]).map(|(a, b)| a * b).sum();
                let (best_action, best) = block.iter().copied().enumerate().fold(
                    (0, f64::NEG_INFINITY),
                    |acc, (k, v)| {
                        if v > acc.1 {
                            (k, v)
                        } else {
                            acc
                        }
                    },
                );
                (best - current, best_action)
            })
            .collect()
    }
}

/// Places every `A^{ij}` at block `(i, j)`; blocks without an edge, and
/// all diagonal blocks, are zero.
pub fn build_consolidated_matrix(game: &PolymatrixGame) -> ConsolidatedMatrix {
    let offsets = game.offsets();
    let n = game.total_actions();
    let counts = game.action_counts();
    let mut matrix = Matrix::zeros((n, n));
    for e in game.edges() {
        for (owner, other, m) in [(e.i, e.j, &e.a_ij), (e.j, e.i, &e.a_ji)] {
            let (r, c) = (offsets[owner], offsets[other]);
            matrix
                .slice_mut(s![r..r + counts[owner], c..c + counts[other]])
                .assign(m);
        }
    }
    ConsolidatedMatrix {
        matrix,
        action_counts: counts.to_vec(),
        offsets,
    }
}

/// A pure profile at which the players' payoffs do not cancel.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroSumViolation {
    pub actions: Vec<usize>,
    pub total: f64,
}

/// First pure profile (in lexicographic order) whose total payoff exceeds
/// `tol` in magnitude, or `None` if the game is zero-sum.
pub fn zero_sum_violation(
    game: &PolymatrixGame,
    tol: f64,
    cap: u64,
) -> Result<Option<ZeroSumViolation>, GameError> {
    let counts = game.action_counts();
    let profiles = counts
        .iter()
        .try_fold(1u128, |acc, &d| acc.checked_mul(d as u128))
        .unwrap_or(u128::MAX);
    if profiles > cap as u128 {
        return Err(GameError::EnumerationCap { profiles, cap });
    }
    let mut actions = vec![0usize; counts.len()];
    loop {
        let total = game.pure_total(&actions);
        if total.abs() > tol {
            return Ok(Some(ZeroSumViolation { actions, total }));
        }
        // Odometer over the last player first.
        let mut p = counts.len();
        loop {
            if p == 0 {
                return Ok(None);
            }
            p -= 1;
            actions[p] += 1;
            if actions[p] < counts[p] {
                break;
            }
            actions[p] = 0;
        }
    }
}

pub fn is_zero_sum(game: &PolymatrixGame, tol: f64) -> Result<bool, GameError> {
    is_zero_sum_capped(game, tol, DEFAULT_ENUMERATION_CAP)
}

pub fn is_zero_sum_capped(game: &PolymatrixGame, tol: f64, cap: u64) -> Result<bool, GameError> {
    Ok(zero_sum_violation(game, tol, cap)?.is_none())
}

/// A shared topology with `K` complete payoff assignments whose convex hull
/// is the uncertainty set.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertainGame {
    vertices: Vec<PolymatrixGame>,
    consolidated: Vec<ConsolidatedMatrix>,
}

impl UncertainGame {
    pub fn new(vertices: Vec<PolymatrixGame>) -> Result<Self, GameError> {
        let first = vertices.first().ok_or(GameError::NoVertices)?;
        if let Some(l) = vertices.iter().position(|v| !v.same_topology(first)) {
            return Err(GameError::TopologyMismatch(l));
        }
        let consolidated = vertices.iter().map(build_consolidated_matrix).collect();
        Ok(UncertainGame {
            vertices,
            consolidated,
        })
    }

    /// The complete-information game as a single-vertex hull.
    pub fn certain(game: PolymatrixGame) -> Self {
        let consolidated = vec![build_consolidated_matrix(&game)];
        UncertainGame {
            vertices: vec![game],
            consolidated,
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[PolymatrixGame] {
        &self.vertices
    }

    pub fn consolidated(&self) -> &[ConsolidatedMatrix] {
        &self.consolidated
    }

    pub fn action_counts(&self) -> &[usize] {
        self.vertices[0].action_counts()
    }

    pub fn num_players(&self) -> usize {
        self.vertices[0].num_players()
    }

    /// `sum_l weights[l] * vertex_l`, edge by edge.
    pub fn hull_point(&self, weights: &[f64]) -> Result<PolymatrixGame, GameError> {
        if weights.len() != self.vertices.len() {
            return Err(GameError::WeightCount {
                expected: self.vertices.len(),
                found: weights.len(),
            });
        }
        if weights.iter().any(|w| w.is_nan() || *w < 0.0)
            || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(GameError::InvalidWeights);
        }
        let base = &self.vertices[0];
        let edges = base
            .edges()
            .iter()
            .map(|e| {
                let mut a_ij = Matrix::zeros(e.a_ij.dim());
                let mut a_ji = Matrix::zeros(e.a_ji.dim());
                for (v, &w) in self.vertices.iter().zip(weights) {
                    a_ij.scaled_add(w, v.matrix(e.i, e.j).expect("shared topology"));
                    a_ji.scaled_add(w, v.matrix(e.j, e.i).expect("shared topology"));
                }
                Edge::new(e.i, e.j, a_ij, a_ji)
            })
            .collect();
        PolymatrixGame::new(base.action_counts().to_vec(), edges)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    pub(crate) fn matching_pennies() -> PolymatrixGame {
        PolymatrixGame::two_player_zero_sum(array![[1.0, -1.0], [-1.0, 1.0]]).unwrap()
    }

    fn cycle(scale: f64) -> PolymatrixGame {
        let a = array![[1.0, 0.0], [0.0, 1.0]] * scale;
        let edges = [(0, 1), (1, 2), (2, 0)]
            .into_iter()
            .map(|(i, j)| Edge::new(i, j, a.clone(), -a.t().to_owned()))
            .collect();
        PolymatrixGame::new(vec![2, 2, 2], edges).unwrap()
    }

    #[test]
    fn consolidated_matching_pennies() {
        let r = matching_pennies().consolidated();
        let expected = array![
            [0.0, 0.0, 1.0, -1.0],
            [0.0, 0.0, -1.0, 1.0],
            [-1.0, 1.0, 0.0, 0.0],
            [1.0, -1.0, 0.0, 0.0]
        ];
        assert_eq!(r.matrix(), &expected);
    }

    #[test]
    fn consolidated_without_edges_is_zero() {
        let g = PolymatrixGame::new(vec![2, 2], vec![]).unwrap();
        assert_eq!(g.consolidated().matrix(), &Matrix::zeros((4, 4)));
    }

    #[test]
    fn consolidated_cycle_blocks() {
        let r = cycle(2.0).consolidated();
        assert_eq!(r.dim(), 6);
        let nonzero = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .filter(|&(i, j)| r.block(i, j).iter().any(|v| *v != 0.0))
            .count();
        assert_eq!(nonzero, 6);
        for i in 0..3 {
            assert!(r.block(i, i).iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn payoff_examples() {
        let g = matching_pennies();
        let mixed = StrategyProfile::uniform(&[2, 2]);
        assert_eq!(g.payoff(&mixed, 0).unwrap(), 0.0);
        let pure = StrategyProfile::pure(&[0, 0], &[2, 2]).unwrap();
        assert_eq!(g.payoff(&pure, 0).unwrap(), 1.0);
        assert_eq!(g.payoff(&pure, 1).unwrap(), -1.0);
        assert!(matches!(
            g.payoff(&pure, 2),
            Err(GameError::PlayerOutOfRange { .. })
        ));
    }

    #[test]
    fn zero_sum_examples() {
        assert!(is_zero_sum(&matching_pennies(), 0.0).unwrap());
        let g = PolymatrixGame::new(
            vec![2, 2],
            vec![Edge::new(
                0,
                1,
                array![[1.0, 0.0], [0.0, 0.0]],
                Matrix::zeros((2, 2)),
            )],
        )
        .unwrap();
        assert!(!is_zero_sum(&g, 1e-9).unwrap());
        let v = zero_sum_violation(&g, 1e-9, 10).unwrap().unwrap();
        assert_eq!(v.actions, vec![0, 0]);
        assert_eq!(v.total, 1.0);
        assert!(is_zero_sum(&cycle(3.0), 0.0).unwrap());
    }

    #[test]
    fn zero_sum_cap() {
        let g = PolymatrixGame::new(vec![10; 7], vec![]).unwrap();
        assert!(matches!(
            is_zero_sum(&g, 0.0),
            Err(GameError::EnumerationCap { .. })
        ));
        assert!(is_zero_sum_capped(&g, 0.0, 10_000_000).unwrap());
    }

    #[test]
    fn construction_errors() {
        let m = Matrix::zeros((2, 2));
        let e = |i, j| Edge::new(i, j, m.clone(), m.clone());
        assert_eq!(
            PolymatrixGame::new(vec![2, 2], vec![e(0, 0)]),
            Err(GameError::SelfLoop(0))
        );
        assert_eq!(
            PolymatrixGame::new(vec![2, 2], vec![e(0, 1), e(1, 0)]),
            Err(GameError::DuplicateEdge(1, 0))
        );
        assert!(matches!(
            PolymatrixGame::new(vec![2, 3], vec![e(0, 1)]),
            Err(GameError::MatrixShape { owner: 0, .. })
        ));
        assert!(matches!(
            PolymatrixGame::new(vec![2, 2], vec![e(0, 2)]),
            Err(GameError::PlayerOutOfRange { player: 2, .. })
        ));
    }

    #[test]
    fn profile_validation() {
        assert!(StrategyProfile::new(vec![vec![0.5, 0.5]]).is_ok());
        assert!(StrategyProfile::new(vec![vec![0.6, 0.5]]).is_err());
        assert!(StrategyProfile::new(vec![vec![1.5, -0.5]]).is_err());
        assert!(StrategyProfile::new(vec![vec![]]).is_err());
        let p = StrategyProfile::from_flat(&[0.5, 0.5, 1.0, 0.0, 0.0], &[2, 3]).unwrap();
        assert_eq!(p.strategy(1), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn topology_mismatch() {
        let empty = PolymatrixGame::new(vec![2, 2], vec![]).unwrap();
        assert_eq!(
            UncertainGame::new(vec![matching_pennies(), empty]),
            Err(GameError::TopologyMismatch(1))
        );
        assert_eq!(UncertainGame::new(vec![]), Err(GameError::NoVertices));
    }

    fn arb_game() -> impl Strategy<Value = (PolymatrixGame, StrategyProfile)> {
        (2usize..=4)
            .prop_flat_map(|n| {
                (
                    prop::collection::vec(1usize..=3, n),
                    prop::collection::vec(any::<bool>(), n * (n - 1) / 2),
                )
            })
            .prop_flat_map(|(counts, mask)| {
                let n = counts.len();
                let pairs: Vec<(usize, usize)> = (0..n)
                    .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                    .zip(&mask)
                    .filter(|(_, &keep)| keep)
                    .map(|(p, _)| p)
                    .collect();
                let total: usize = counts.iter().sum();
                let entries: usize = pairs.iter().map(|&(i, j)| 2 * counts[i] * counts[j]).sum();
                (
                    Just(counts),
                    Just(pairs),
                    prop::collection::vec(-5.0f64..5.0, entries),
                    prop::collection::vec(0.01f64..1.0, total),
                )
            })
            .prop_map(|(counts, pairs, entries, raw)| {
                let mut it = entries.into_iter();
                let edges = pairs
                    .iter()
                    .map(|&(i, j)| {
                        let a_ij =
                            Matrix::from_shape_fn((counts[i], counts[j]), |_| it.next().unwrap());
                        let a_ji =
                            Matrix::from_shape_fn((counts[j], counts[i]), |_| it.next().unwrap());
                        Edge::new(i, j, a_ij, a_ji)
                    })
                    .collect();
                let game = PolymatrixGame::new(counts.clone(), edges).unwrap();
                let offs = offsets(&counts);
                let strategies = counts
                    .iter()
                    .zip(&offs)
                    .map(|(&d, &o)| {
                        let s: f64 = raw[o..o + d].iter().sum();
                        raw[o..o + d].iter().map(|v| v / s).collect()
                    })
                    .collect();
                (game, StrategyProfile::new(strategies).unwrap())
            })
    }

    proptest! {
        #[test]
        fn consolidated_blocks_read_back((game, _) in arb_game()) {
            let r = game.consolidated();
            for e in game.edges() {
                prop_assert_eq!(r.block(e.i, e.j), e.a_ij.view());
                prop_assert_eq!(r.block(e.j, e.i), e.a_ji.view());
            }
        }

        #[test]
        fn total_payoff_is_quadratic_form((game, profile) in arb_game()) {
            let total: f64 = (0..game.num_players())
                .map(|i| game.payoff(&profile, i).unwrap())
                .sum();
            let quad = game.consolidated().quadratic(&profile.flatten());
            prop_assert!((total - quad).abs() <= 1e-12 * (1.0 + total.abs()));
        }

        #[test]
        fn antisymmetric_edges_are_zero_sum(
            entries in prop::collection::vec(-20i32..20, 12),
        ) {
            // 3-player triangle with integer payoffs.
            let m = |k: usize| Matrix::from_shape_fn((2, 2), |(r, c)| entries[4 * k + 2 * r + c] as f64);
            let edges = [(0, 1), (1, 2), (0, 2)]
                .into_iter()
                .enumerate()
                .map(|(k, (i, j))| Edge::new(i, j, m(k), -m(k).t().to_owned()))
                .collect();
            let g = PolymatrixGame::new(vec![2, 2, 2], edges).unwrap();
            prop_assert!(is_zero_sum(&g, 0.0).unwrap());
        }
    }
}
