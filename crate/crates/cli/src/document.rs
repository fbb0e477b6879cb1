//! JSON game documents and their conversion into library types.

use std::fmt;

use ndarray::Array2;
use robust_games::game::{Edge, Matrix, PolymatrixGame, StrategyProfile, UncertainGame};
use robust_games::stochastic::{EdgeUncertainty, MarkovProfile, Stage, StochasticGame};
use serde::Deserialize;

/// Input problem located at a document path such as `one_shot.edges[0].A_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputError {
    pub path: String,
    pub message: String,
}

impl InputError {
    fn new(path: impl Into<String>, message: impl fmt::Display) -> Self {
        InputError {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() || self.path == "." {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for InputError {}

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameDocument {
    pub one_shot: Option<OneShotDoc>,
    pub stochastic: Option<StochasticDoc>,
    /// Mixed strategy per player for one-shot checks.
    pub profile: Option<Rows>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OneShotDoc {
    pub players: Option<usize>,
    pub action_counts: Vec<usize>,
    pub edges: Option<Vec<EdgeDoc>>,
    pub vertices: Option<Vec<Vec<EdgeDoc>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeDoc {
    pub i: usize,
    pub j: usize,
    #[serde(rename = "A_ij")]
    pub a_ij: Rows,
    #[serde(rename = "A_ji")]
    pub a_ji: Rows,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StochasticDoc {
    pub gamma: f64,
    pub stages: Vec<StageDoc>,
    #[serde(default)]
    pub start: usize,
    /// `[stage][player][action]`.
    pub markov_profile: Option<Vec<Rows>>,
    /// `[stage][player]`.
    pub pure_profile: Option<Vec<Vec<usize>>>,
    /// Convex weights `[stage][edge][vertex]`.
    pub realization_weights: Option<Vec<Rows>>,
    /// Vertex index `[stage][edge]`.
    pub realization_vertices: Option<Vec<Vec<usize>>>,
    /// Row player's matrix per stage (two-player zero-sum stages only).
    pub realization_matrices: Option<Vec<Rows>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageDoc {
    pub actions: Option<Vec<usize>>,
    pub payoff_vertices: Option<Vec<Rows>>,
    pub edges: Option<Vec<StageEdgeDoc>>,
    #[serde(default)]
    pub transitions: Vec<TransitionDoc>,
    pub default_next: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageEdgeDoc {
    pub i: usize,
    pub j: usize,
    pub vertices: Vec<EdgePayload>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgePayload {
    #[serde(rename = "A_ij")]
    pub a_ij: Rows,
    #[serde(rename = "A_ji")]
    pub a_ji: Rows,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionDoc {
    pub action: Vec<usize>,
    pub next: Vec<f64>,
}

/// Parses a document, reporting the failing field path with line and column.
pub fn parse_document(text: &str) -> Result<GameDocument, InputError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        InputError::new(path, e.into_inner())
    })
}

pub fn to_matrix(rows: &Rows, path: &str) -> Result<Matrix, InputError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(InputError::new(path, "matrix must be nonempty"));
    }
    if let Some(k) = rows.iter().position(|row| row.len() != c) {
        return Err(InputError::new(
            format!("{path}[{k}]"),
            format!("row has {} entries, expected {c}", rows[k].len()),
        ));
    }
    Ok(Array2::from_shape_fn((r, c), |(a, b)| rows[a][b]))
}

fn convert_edges(edges: &[EdgeDoc], path: &str) -> Result<Vec<Edge>, InputError> {
    edges
        .iter()
        .enumerate()
        .map(|(k, e)| {
            Ok(Edge::new(
                e.i,
                e.j,
                to_matrix(&e.a_ij, &format!("{path}[{k}].A_ij"))?,
                to_matrix(&e.a_ji, &format!("{path}[{k}].A_ji"))?,
            ))
        })
        .collect()
}

impl GameDocument {
    pub fn one_shot(&self) -> Result<&OneShotDoc, InputError> {
        self.one_shot
            .as_ref()
            .ok_or_else(|| InputError::new("one_shot", "section is required for this command"))
    }

    pub fn stochastic(&self) -> Result<&StochasticDoc, InputError> {
        self.stochastic
            .as_ref()
            .ok_or_else(|| InputError::new("stochastic", "section is required for this command"))
    }

    pub fn profile(&self, counts: &[usize]) -> Result<StrategyProfile, InputError> {
        let rows = self
            .profile
            .as_ref()
            .ok_or_else(|| InputError::new("profile", "field is required for this command"))?;
        let profile =
            StrategyProfile::new(rows.clone()).map_err(|e| InputError::new("profile", e))?;
        profile
            .check_counts(counts)
            .map_err(|e| InputError::new("profile", e))?;
        Ok(profile)
    }
}

impl OneShotDoc {
    fn check_players(&self) -> Result<(), InputError> {
        match self.players {
            Some(n) if n != self.action_counts.len() => Err(InputError::new(
                "one_shot.players",
                format!("{n} players but {} action counts", self.action_counts.len()),
            )),
            _ => Ok(()),
        }
    }

    fn build(&self, edges: &[EdgeDoc], path: &str) -> Result<PolymatrixGame, InputError> {
        PolymatrixGame::new(self.action_counts.clone(), convert_edges(edges, path)?)
            .map_err(|e| InputError::new(path, e))
    }

    /// The complete-information game: `edges`, or the first vertex.
    pub fn nominal(&self) -> Result<PolymatrixGame, InputError> {
        self.check_players()?;
        match (&self.edges, &self.vertices) {
            (Some(edges), _) => self.build(edges, "one_shot.edges"),
            (None, Some(vs)) if !vs.is_empty() => self.build(&vs[0], "one_shot.vertices[0]"),
            _ => Err(InputError::new(
                "one_shot",
                "needs `edges` or nonempty `vertices`",
            )),
        }
    }

    /// The uncertainty set: `vertices`, or the nominal game alone.
    pub fn uncertain(&self) -> Result<UncertainGame, InputError> {
        self.check_players()?;
        match &self.vertices {
            None => Ok(UncertainGame::certain(self.nominal()?)),
            Some(vs) => {
                let games = vs
                    .iter()
                    .enumerate()
                    .map(|(l, edges)| self.build(edges, &format!("one_shot.vertices[{l}]")))
                    .collect::<Result<Vec<_>, _>>()?;
                UncertainGame::new(games).map_err(|e| InputError::new("one_shot.vertices", e))
            }
        }
    }
}

impl StochasticDoc {
    pub fn game(&self) -> Result<StochasticGame, InputError> {
        let n = self.stages.len();
        let stages = self
            .stages
            .iter()
            .enumerate()
            .map(|(s, st)| st.build(&format!("stochastic.stages[{s}]"), n))
            .collect::<Result<Vec<_>, _>>()?;
        StochasticGame::new(stages, self.gamma).map_err(|e| InputError::new("stochastic", e))
    }

    pub fn profile(&self, game: &StochasticGame) -> Result<MarkovProfile, InputError> {
        match (&self.markov_profile, &self.pure_profile) {
            (Some(mixed), _) => {
                let stages = mixed
                    .iter()
                    .enumerate()
                    .map(|(s, rows)| {
                        StrategyProfile::new(rows.clone()).map_err(|e| {
                            InputError::new(format!("stochastic.markov_profile[{s}]"), e)
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let profile = MarkovProfile::new(stages);
                profile
                    .validate(game)
                    .map(|_| profile)
                    .map_err(|e| InputError::new("stochastic.markov_profile", e))
            }
            (None, Some(pure)) => MarkovProfile::from_pure(game, pure)
                .map_err(|e| InputError::new("stochastic.pure_profile", e)),
            (None, None) => Err(InputError::new(
                "stochastic",
                "needs `markov_profile` or `pure_profile` for this command",
            )),
        }
    }

    /// Per-stage payoff realization from the first realization field present.
    pub fn realization(&self, game: &StochasticGame) -> Result<Vec<PolymatrixGame>, InputError> {
        if let Some(ms) = &self.realization_matrices {
            if ms.len() != game.num_stages() {
                return Err(InputError::new(
                    "stochastic.realization_matrices",
                    format!("expected {} stages, got {}", game.num_stages(), ms.len()),
                ));
            }
            return ms
                .iter()
                .enumerate()
                .map(|(s, rows)| {
                    let path = format!("stochastic.realization_matrices[{s}]");
                    let m = to_matrix(rows, &path)?;
                    if [m.nrows(), m.ncols()] != game.stage(s).action_counts() {
                        return Err(InputError::new(
                            path,
                            "shape does not match the stage's action sets",
                        ));
                    }
                    PolymatrixGame::two_player_zero_sum(m).map_err(|e| InputError::new(path, e))
                })
                .collect();
        }
        if let Some(w) = &self.realization_weights {
            return game
                .hull_realization(w)
                .map_err(|e| InputError::new("stochastic.realization_weights", e));
        }
        if let Some(v) = &self.realization_vertices {
            return game
                .vertex_realization(v)
                .map_err(|e| InputError::new("stochastic.realization_vertices", e));
        }
        if game
            .stages()
            .iter()
            .all(|st| st.vertex_counts().iter().all(|&k| k == 1))
        {
            let first: Vec<Vec<usize>> = game
                .stages()
                .iter()
                .map(|st| vec![0; st.vertex_counts().len()])
                .collect();
            return game
                .vertex_realization(&first)
                .map_err(|e| InputError::new("stochastic", e));
        }
        Err(InputError::new(
            "stochastic",
            "a realization field is required when some stage has several vertices",
        ))
    }
}

impl StageDoc {
    fn build(&self, path: &str, num_stages: usize) -> Result<Stage, InputError> {
        let (counts, payoffs) = match (&self.payoff_vertices, &self.edges) {
            (Some(vs), None) => {
                let matrices = vs
                    .iter()
                    .enumerate()
                    .map(|(l, rows)| to_matrix(rows, &format!("{path}.payoff_vertices[{l}]")))
                    .collect::<Result<Vec<_>, _>>()?;
                let first = matrices.first().ok_or_else(|| {
                    InputError::new(format!("{path}.payoff_vertices"), "empty vertex list")
                })?;
                let counts = vec![first.nrows(), first.ncols()];
                if let Some(a) = &self.actions {
                    if *a != counts {
                        return Err(InputError::new(
                            format!("{path}.actions"),
                            format!("{a:?} does not match payoff matrix shape {counts:?}"),
                        ));
                    }
                }
                (counts, Payoffs::ZeroSum(matrices))
            }
            (None, Some(edges)) => {
                let counts = self.actions.clone().ok_or_else(|| {
                    InputError::new(format!("{path}.actions"), "required with `edges`")
                })?;
                let edges = edges
                    .iter()
                    .enumerate()
                    .map(|(k, e)| {
                        let vertices = e
                            .vertices
                            .iter()
                            .enumerate()
                            .map(|(l, v)| {
                                let p = format!("{path}.edges[{k}].vertices[{l}]");
                                Ok((
                                    to_matrix(&v.a_ij, &format!("{p}.A_ij"))?,
                                    to_matrix(&v.a_ji, &format!("{p}.A_ji"))?,
                                ))
                            })
                            .collect::<Result<Vec<_>, InputError>>()?;
                        Ok(EdgeUncertainty {
                            i: e.i,
                            j: e.j,
                            vertices,
                        })
                    })
                    .collect::<Result<Vec<_>, InputError>>()?;
                (counts, Payoffs::Polymatrix(edges))
            }
            _ => {
                return Err(InputError::new(
                    path,
                    "exactly one of `payoff_vertices` or `edges` is required",
                ))
            }
        };
        let transitions = self.transition_rows(path, &counts, num_stages)?;
        Ok(match payoffs {
            Payoffs::ZeroSum(m) => Stage::zero_sum(m, transitions),
            Payoffs::Polymatrix(e) => Stage::polymatrix(counts, e, transitions),
        })
    }

    fn transition_rows(
        &self,
        path: &str,
        counts: &[usize],
        num_stages: usize,
    ) -> Result<Vec<Vec<f64>>, InputError> {
        let joint_count: usize = counts.iter().product();
        let mut rows: Vec<Option<Vec<f64>>> = vec![None; joint_count];
        for (k, t) in self.transitions.iter().enumerate() {
            let p = format!("{path}.transitions[{k}]");
            if t.action.len() != counts.len() || t.action.iter().zip(counts).any(|(&a, &d)| a >= d)
            {
                return Err(InputError::new(
                    format!("{p}.action"),
                    format!(
                        "{:?} is not a joint action for action counts {counts:?}",
                        t.action
                    ),
                ));
            }
            let joint = t
                .action
                .iter()
                .zip(counts)
                .fold(0, |acc, (&a, &d)| acc * d + a);
            if rows[joint].replace(t.next.clone()).is_some() {
                return Err(InputError::new(p, "duplicate joint action"));
            }
        }
        rows.into_iter()
            .enumerate()
            .map(|(joint, row)| {
                let row = row.or_else(|| self.default_next.clone()).ok_or_else(|| {
                    InputError::new(
                        format!("{path}.transitions"),
                        format!("joint action {joint} has no transition and no `default_next` is given"),
                    )
                })?;
                if row.len() != num_stages {
                    return Err(InputError::new(
                        format!("{path}.transitions"),
                        format!("distribution for joint action {joint} has {} entries, expected {num_stages}", row.len()),
                    ));
                }
                Ok(row)
            })
            .collect()
    }
}

enum Payoffs {
    ZeroSum(Vec<Matrix>),
    Polymatrix(Vec<EdgeUncertainty>),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reports_field_path() {
        let err = parse_document(r#"{"one_shot": {"action_counts": [2, "x"]}}"#).unwrap_err();
        assert_eq!(err.path, "one_shot.action_counts[1]");
        assert!(err.message.contains("line 1"), "{err}");
    }

    #[test]
    fn rejects_unknown_fields() {
        let err =
            parse_document(r#"{"one_shot": {"action_counts": [1], "edge": []}}"#).unwrap_err();
        assert!(err.message.contains("unknown field"), "{err}");
    }

    #[test]
    fn ragged_matrix() {
        let err = to_matrix(&vec![vec![1.0, 2.0], vec![3.0]], "m").unwrap_err();
        assert_eq!(err.path, "m[1]");
    }

    #[test]
    fn missing_transition_without_default() {
        let doc = parse_document(
            r#"{"stochastic": {"gamma": 0.5, "stages": [
                {"payoff_vertices": [[[1, -1], [-1, 1]]],
                 "transitions": [{"action": [0, 0], "next": [1]}]}]}}"#,
        )
        .unwrap();
        let err = doc.stochastic().unwrap().game().unwrap_err();
        assert_eq!(err.path, "stochastic.stages[0].transitions");
    }

    #[test]
    fn players_must_match_counts() {
        let doc = parse_document(
            r#"{"one_shot": {"players": 3, "action_counts": [1, 1],
                "edges": [{"i": 0, "j": 1, "A_ij": [[0]], "A_ji": [[0]]}]}}"#,
        )
        .unwrap();
        assert_eq!(
            doc.one_shot().unwrap().nominal().unwrap_err().path,
            "one_shot.players"
        );
    }
}
