//! Robust equilibria for games with payoff uncertainty.
//!
//! * [`game`]: polymatrix games, strategy profiles, the consolidated payoff
//!   matrix and zero-sum validation.
//! * [`lp`]: the dense simplex solver behind every equilibrium and value
//!   computation.
//! * [`expost`]: ex-post equilibria of zero-sum polymatrix games whose payoffs
//!   range over a convex hull of vertices.
//! * [`maximal_set`]: membership in the set of payoffs that keep a given
//!   profile at best response.
//! * [`stochastic`]: value intervals, Markov perfect equilibrium checks and
//!   rollouts for stochastic games with uncertain stage payoffs.

pub mod expost;
pub mod game;
pub mod lp;
pub mod maximal_set;
pub mod stochastic;

pub use game::{Edge, GameError, Matrix, PolymatrixGame, StrategyProfile, UncertainGame};
