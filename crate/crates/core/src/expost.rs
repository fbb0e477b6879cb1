//! Ex-post equilibria of zero-sum polymatrix games with payoffs in the
//! convex hull of finitely many vertices.
//!
//! A profile `x` is an ex-post equilibrium when no player gains by deviating
//! under any payoff assignment in the hull. Because each player's payoff is
//! linear in the consolidated matrix, checking the vertices suffices. For
//! zero-sum vertices the total regret `sum_l sum_i max_a e_a^T R_l x` is
//! nonnegative and vanishes exactly at ex-post equilibria, so minimizing it
//! as a linear program either finds one or proves there is none.

use thiserror::Error;

use crate::game::{
    zero_sum_violation, GameError, PolymatrixGame, StrategyProfile, UncertainGame,
    DEFAULT_ENUMERATION_CAP,
};
use crate::lp::{solve_lp, Bounds, LinearProgram, LpError, LpStatus, Relation};

/// Default threshold on the LP optimum below which an equilibrium is certified.
pub const DEFAULT_CERT_TOL: f64 = 1e-6;
/// Tolerance used when validating that every vertex is zero-sum.
pub const ZERO_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExPostError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("vertex {vertex} is not zero-sum: pure profile {actions:?} has total payoff {total}")]
    NotZeroSum {
        vertex: usize,
        actions: Vec<usize>,
        total: f64,
    },
    #[error("robust LP finished with status {0:?}")]
    UnexpectedStatus(LpStatus),
    #[error("no equilibrium certified (LP optimum {0})")]
    NotCertified(f64),
    #[error("value set needs a two-player game with one edge")]
    NotTwoPlayer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExPostStatus {
    Equilibrium,
    NoExPostEquilibrium,
}

/// Largest single deviation gain at the LP's profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub player: usize,
    pub vertex: usize,
    pub action: usize,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExPostResult {
    pub status: ExPostStatus,
    /// Present when `status` is `Equilibrium`.
    pub profile: Option<StrategyProfile>,
    /// LP optimum `sum_l sum_i w_i^l`.
    pub objective: f64,
    /// `slack_values[i][l] = w_i^l`.
    pub slack_values: Vec<Vec<f64>>,
    pub worst_violation: Violation,
    pub lp_iterations: usize,
}

/// Fails with the first vertex that is not zero-sum.
pub fn check_zero_sum_vertices(ugame: &UncertainGame) -> Result<(), ExPostError> {
    for (vertex, g) in ugame.vertices().iter().enumerate() {
        if let Some(v) = zero_sum_violation(g, ZERO_SUM_TOL, DEFAULT_ENUMERATION_CAP)? {
            return Err(ExPostError::NotZeroSum {
                vertex,
                actions: v.actions,
                total: v.total,
            });
        }
    }
    Ok(())
}

/// Column of `w_i^l` in the robust LP.
pub fn slack_column(ugame: &UncertainGame, player: usize, vertex: usize) -> usize {
    let n: usize = ugame.action_counts().iter().sum();
    n + vertex * ugame.num_players() + player
}

/// Variables: the concatenated profile `x` (nonnegative), then one free
/// `w_i^l` per (vertex, player). Rows: `e_{a_i}^T R_l x - w_i^l <= 0` for
/// every vertex, player and action, then one simplex equality per player.
pub fn build_expost_lp(ugame: &UncertainGame) -> Result<LinearProgram, ExPostError> {
    check_zero_sum_vertices(ugame)?;
    let counts = ugame.action_counts();
    let n: usize = counts.iter().sum();
    let players = ugame.num_players();
    let k = ugame.num_vertices();
    let width = n + players * k;

    let mut objective = vec![0.0; width];
    objective[n..].iter_mut().for_each(|c| *c = 1.0);
    let mut lp = LinearProgram::minimize(objective);
    for v in 0..n {
        lp.set_bounds(v, Bounds::NONNEGATIVE)?;
    }

    for (l, r) in ugame.consolidated().iter().enumerate() {
        for (i, &d) in counts.iter().enumerate() {
            for a in 0..d {
                let mut row = vec![0.0; width];
                row[..n]
                    .copy_from_slice(r.matrix().row(r.index(i, a)).as_slice().expect("row-major"));
                row[slack_column(ugame, i, l)] = -1.0;
                lp.add_constraint(row, Relation::Le, 0.0)?;
            }
        }
    }
    let mut offset = 0;
    for &d in counts {
        let mut row = vec![0.0; width];
        row[offset..offset + d].iter_mut().for_each(|c| *c = 1.0);
        lp.add_constraint(row, Relation::Eq, 1.0)?;
        offset += d;
    }
    Ok(lp)
}

pub fn solve_expost(ugame: &UncertainGame, cert_tol: f64) -> Result<ExPostResult, ExPostError> {
    let lp = build_expost_lp(ugame)?;
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(ExPostError::UnexpectedStatus(sol.status));
    }
    let counts = ugame.action_counts();
    let n: usize = counts.iter().sum();
    let profile = StrategyProfile::from_solver(&sol.primal[..n], counts)?;
    let slack_values = (0..ugame.num_players())
        .map(|i| {
            (0..ugame.num_vertices())
                .map(|l| sol.primal[slack_column(ugame, i, l)])
                .collect()
        })
        .collect();
    let worst_violation = worst_violation(ugame, &profile)?;
    let status = if sol.objective <= cert_tol {
        ExPostStatus::Equilibrium
    } else {
        ExPostStatus::NoExPostEquilibrium
    };
    Ok(ExPostResult {
        status,
        profile: (status == ExPostStatus::Equilibrium).then_some(profile),
        objective: sol.objective,
        slack_values,
        worst_violation,
        lp_iterations: sol.iterations,
    })
}

/// Nash equilibrium of a complete-information zero-sum polymatrix game.
pub fn solve_nash(game: &PolymatrixGame) -> Result<StrategyProfile, ExPostError> {
    let result = solve_expost(&UncertainGame::certain(game.clone()), DEFAULT_CERT_TOL)?;
    result
        .profile
        .ok_or(ExPostError::NotCertified(result.objective))
}

/// The (player, vertex, action) with the largest deviation gain at `profile`.
pub fn worst_violation(
    ugame: &UncertainGame,
    profile: &StrategyProfile,
) -> Result<Violation, GameError> {
    profile.check_counts(ugame.action_counts())?;
    let x = profile.flatten();
    let mut worst = Violation {
        player: 0,
        vertex: 0,
        action: 0,
        gain: f64::NEG_INFINITY,
    };
    for (vertex, r) in ugame.consolidated().iter().enumerate() {
        for (player, (gain, action)) in r.regrets(&x).into_iter().enumerate() {
            if gain > worst.gain {
                worst = Violation {
                    player,
                    vertex,
                    action,
                    gain,
                };
            }
        }
    }
    Ok(worst)
}

/// True iff no player gains more than `tol` from a pure deviation at any vertex.
pub fn verify_expost(
    ugame: &UncertainGame,
    profile: &StrategyProfile,
    tol: f64,
) -> Result<bool, GameError> {
    Ok(worst_violation(ugame, profile)?.gain <= tol)
}

/// Range of the row player's payoff over the hull at a fixed profile.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSet {
    pub lower: f64,
    pub upper: f64,
    pub per_vertex_values: Vec<f64>,
}

/// `(x^1)^T A^{12}_l x^2` at every vertex; extremes over the hull are
/// attained at vertices since the value is linear in the payoffs.
pub fn value_set_two_player(
    ugame: &UncertainGame,
    profile: &StrategyProfile,
) -> Result<ValueSet, ExPostError> {
    if ugame.num_players() != 2 || ugame.vertices()[0].edges().len() != 1 {
        return Err(ExPostError::NotTwoPlayer);
    }
    profile.check_counts(ugame.action_counts())?;
    let per_vertex_values: Vec<f64> = ugame
        .vertices()
        .iter()
        .map(|g| g.payoff(profile, 0))
        .collect::<Result<_, _>>()?;
    let lower = per_vertex_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let upper = per_vertex_values
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(ValueSet {
        lower,
        upper,
        per_vertex_values,
    })
}
