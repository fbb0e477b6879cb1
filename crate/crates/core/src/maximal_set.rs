//! Membership in the maximal uncertainty set of a fixed equilibrium profile.
//!
//! A payoff assignment belongs to the set when the profile stays a best
//! response: every supported action earns the same expected payoff `c`, and
//! no unsupported action earns more. Members need not be zero-sum.

use thiserror::Error;

use crate::game::{GameError, Matrix, PolymatrixGame, StrategyProfile};

/// Probability above which an action counts as supported.
pub const SUPPORT_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MembershipError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("strategy of player {0} has empty support")]
    EmptySupport(usize),
    #[error("matrix is {found:?} but strategies imply {expected:?}")]
    Dimension {
        expected: (usize, usize),
        found: (usize, usize),
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    /// Supported action payoff differs from the support constant.
    SupportEquality,
    /// Unsupported action earns more than the support constant.
    OffSupportUpper,
    /// Column player: supported column differs from the constant.
    ColumnSupportEquality,
    /// Column player: unsupported column concedes less than the constant.
    ColumnOffSupportLower,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MembershipViolation {
    pub player: usize,
    pub action: usize,
    pub condition: Condition,
    /// Amount by which the condition fails, always positive.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MembershipReport {
    pub member: bool,
    /// Support constant per player.
    pub support_constants: Vec<f64>,
    pub violations: Vec<MembershipViolation>,
}

impl MembershipReport {
    fn from_parts(support_constants: Vec<f64>, violations: Vec<MembershipViolation>) -> Self {
        MembershipReport {
            member: violations.is_empty(),
            support_constants,
            violations,
        }
    }
}

fn support(x: &[f64], player: usize) -> Result<Vec<bool>, MembershipError> {
    let s: Vec<bool> = x.iter().map(|&p| p > SUPPORT_THRESHOLD).collect();
    if !s.contains(&true) {
        return Err(MembershipError::EmptySupport(player));
    }
    Ok(s)
}

fn support_mean(values: &[f64], supported: &[bool]) -> f64 {
    let (sum, n) = values
        .iter()
        .zip(supported)
        .filter(|(_, &s)| s)
        .fold((0.0, 0usize), |(sum, n), (v, _)| (sum + v, n + 1));
    sum / n as f64
}

/// Best-response conditions for the maximizing player against `values`.
#[allow(clippy::too_many_arguments)]
fn row_conditions(
    player: usize,
    values: &[f64],
    supported: &[bool],
    c: f64,
    tol: f64,
    equality: Condition,
    upper: Condition,
    out: &mut Vec<MembershipViolation>,
) {
    for (action, (&v, &s)) in values.iter().zip(supported).enumerate() {
        let (condition, residual) = if s {
            (equality, (v - c).abs())
        } else {
            (upper, v - c)
        };
        if residual > tol {
            out.push(MembershipViolation {
                player,
                action,
                condition,
                residual,
            });
        }
    }
}

/// Two-player zero-sum check: the row player maximizes `x^T A y`, the
/// column player minimizes it, and both face the same constant `c`
/// (estimated as the mean of `A y*` over the row support).
pub fn check_membership_two_player(
    a: &Matrix,
    x_star: &[f64],
    y_star: &[f64],
    tol: f64,
) -> Result<MembershipReport, MembershipError> {
    let expected = (x_star.len(), y_star.len());
    if a.dim() != expected {
        return Err(MembershipError::Dimension {
            expected,
            found: a.dim(),
        });
    }
    let row_support = support(x_star, 0)?;
    let col_support = support(y_star, 1)?;

    let row_values: Vec<f64> = a
        .outer_iter()
        .map(|r| r.iter().zip(y_star).map(|(p, q)| p * q).sum())
        .collect();
    let col_values: Vec<f64> = a
        .columns()
        .into_iter()
        .map(|col| col.iter().zip(x_star).map(|(p, q)| p * q).sum())
        .collect();
    let c = support_mean(&row_values, &row_support);

    let mut violations = Vec::new();
    row_conditions(
        0,
        &row_values,
        &row_support,
        c,
        tol,
        Condition::SupportEquality,
        Condition::OffSupportUpper,
        &mut violations,
    );
    // The minimizer's conditions are the maximizer's with signs flipped.
    let neg: Vec<f64> = col_values.iter().map(|v| -v).collect();
    row_conditions(
        1,
        &neg,
        &col_support,
        -c,
        tol,
        Condition::ColumnSupportEquality,
        Condition::ColumnOffSupportLower,
        &mut violations,
    );
    Ok(MembershipReport::from_parts(vec![c, c], violations))
}

/// Polymatrix check: for each player `i`, the action values
/// `e_k^T sum_j A^{ij} x^{j*}` are constant (`c_i`) on the support and at
/// most `c_i` off it.
pub fn check_membership_polymatrix(
    game: &PolymatrixGame,
    profile: &StrategyProfile,
    tol: f64,
) -> Result<MembershipReport, MembershipError> {
    profile.check_counts(game.action_counts())?;
    let mut constants = Vec::with_capacity(game.num_players());
    let mut violations = Vec::new();
    for player in 0..game.num_players() {
        let supported = support(profile.strategy(player), player)?;
        let values = game.action_values(profile, player)?;
        let c = support_mean(&values, &supported);
        row_conditions(
            player,
            &values,
            &supported,
            c,
            tol,
            Condition::SupportEquality,
            Condition::OffSupportUpper,
            &mut violations,
        );
        constants.push(c);
    }
    Ok(MembershipReport::from_parts(constants, violations))
}
