//! Command-line front end: reads a JSON game document, runs one analysis and
//! writes a JSON result document.
//!
//! Exit codes: 0 success, 1 negative domain outcome (no equilibrium, not a
//! member, verification failed), 2 input or precondition error, 3 numerical
//! failure.

pub mod document;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use robust_games::expost::{self, ExPostError, ExPostStatus, Violation};
use robust_games::game::{self, GameError, Matrix, DEFAULT_ENUMERATION_CAP};
use robust_games::lp::LpError;
use robust_games::maximal_set::{self, Condition, MembershipError};
use robust_games::stochastic::{self, StochasticError};
use serde::Serialize;
use serde_json::{json, Value};

use document::{parse_document, GameDocument, InputError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NEGATIVE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "robust-games",
    version,
    about = "Robust equilibria for uncertain zero-sum games"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Nash equilibrium of the nominal one-shot game.
    SolveNash(Opts),
    /// Ex-post equilibrium over the vertex set, or a nonexistence certificate.
    SolveExpost(Opts),
    /// Checks `profile` against every vertex.
    VerifyExpost(Opts),
    /// Enumerates pure profiles of every vertex looking for nonzero totals.
    CheckZeroSum(Opts),
    /// Tests whether the nominal game lies in the maximal uncertainty set of `profile`.
    CheckMaximal(Opts),
    /// Value interval of a two-player zero-sum stochastic game.
    ValueInterval(Opts),
    /// Shapley value of one payoff realization.
    Shapley(Opts),
    /// Ex-post Markov perfect equilibrium check by vertex enumeration.
    VerifyMpe(Opts),
    /// Monte Carlo estimate of discounted payoffs.
    Simulate(Opts),
}

#[derive(Debug, Args)]
struct Opts {
    /// Game document (JSON).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    horizon: usize,
    #[arg(long, default_value_t = 10_000)]
    episodes: usize,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Cap on enumerated pure profiles or vertex combinations.
    #[arg(long)]
    cap: Option<u64>,
}

#[derive(Debug, Serialize)]
struct Diagnostics {
    iterations: usize,
    residual: f64,
    tolerance: f64,
}

#[derive(Debug, Serialize)]
struct Report {
    status: &'static str,
    result: Value,
    diagnostics: Diagnostics,
}

struct Outcome {
    code: i32,
    report: Report,
}

impl Outcome {
    fn new(
        code: i32,
        status: &'static str,
        result: Value,
        iterations: usize,
        residual: f64,
        tolerance: f64,
    ) -> Self {
        Outcome {
            code,
            report: Report {
                status,
                result,
                diagnostics: Diagnostics {
                    iterations,
                    residual,
                    tolerance,
                },
            },
        }
    }
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Input(_) => EXIT_INPUT,
            Failure::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<InputError> for Failure {
    fn from(e: InputError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<GameError> for Failure {
    fn from(e: GameError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<LpError> for Failure {
    fn from(e: LpError) -> Self {
        Failure::Numerical(e.to_string())
    }
}

impl From<ExPostError> for Failure {
    fn from(e: ExPostError) -> Self {
        match e {
            ExPostError::Game(g) => g.into(),
            ExPostError::NotZeroSum { .. } | ExPostError::NotTwoPlayer => {
                Failure::Input(e.to_string())
            }
            ExPostError::Lp(_)
            | ExPostError::UnexpectedStatus(_)
            | ExPostError::NotCertified(_) => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<MembershipError> for Failure {
    fn from(e: MembershipError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<StochasticError> for Failure {
    fn from(e: StochasticError) -> Self {
        match e {
            StochasticError::Lp(_)
            | StochasticError::UnexpectedLpStatus(_)
            | StochasticError::IterationLimit(_) => Failure::Numerical(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

/// Parses `args` (including the program name), runs the subcommand and writes
/// the result document to `out`. Returns the process exit code.
pub fn run<I, T, W>(args: I, out: &mut W) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
    W: Write,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = write!(out, "{}", e.render());
            return code;
        }
    };
    let (code, body) = match dispatch(&cli.command) {
        Ok(outcome) => (outcome.code, serde_json::to_value(&outcome.report)),
        Err(failure) => {
            let (kind, message) = match &failure {
                Failure::Input(m) => ("input", m),
                Failure::Numerical(m) => ("numerical", m),
            };
            (
                failure.code(),
                Ok(json!({"status": "error", "error": {"kind": kind, "message": message}})),
            )
        }
    };
    let written = body
        .map_err(std::io::Error::from)
        .and_then(|v| serde_json::to_writer_pretty(&mut *out, &v).map_err(Into::into))
        .and_then(|_| writeln!(out));
    match written {
        Ok(()) => code,
        Err(_) => EXIT_NUMERICAL,
    }
}

fn load(opts: &Opts) -> Result<GameDocument, Failure> {
    let text = std::fs::read_to_string(&opts.input)
        .map_err(|e| Failure::Input(format!("cannot read {}: {e}", opts.input.display())))?;
    Ok(parse_document(&text)?)
}

fn dispatch(command: &Command) -> Result<Outcome, Failure> {
    match command {
        Command::SolveNash(o) => solve_nash(o, &load(o)?),
        Command::SolveExpost(o) => solve_expost(o, &load(o)?),
        Command::VerifyExpost(o) => verify_expost(o, &load(o)?),
        Command::CheckZeroSum(o) => check_zero_sum(o, &load(o)?),
        Command::CheckMaximal(o) => check_maximal(o, &load(o)?),
        Command::ValueInterval(o) => value_interval(o, &load(o)?),
        Command::Shapley(o) => shapley(o, &load(o)?),
        Command::VerifyMpe(o) => verify_mpe(o, &load(o)?),
        Command::Simulate(o) => simulate(o, &load(o)?),
    }
}

fn violation_json(v: &Violation) -> Value {
    json!({"player": v.player, "vertex": v.vertex, "action": v.action, "gain": v.gain})
}

fn solve_nash(o: &Opts, doc: &GameDocument) -> Result<Outcome, Failure> {
    let game = doc.one_shot()?.nominal()?;
    let ugame = game::UncertainGame::certain(game.clone());
    let r = expost::solve_expost(&ugame, o.tol)?;
    let profile = r.profile.ok_or_else(|| {
        Failure::Numerical(format!(
            "no equilibrium certified (LP optimum {})",
            r.objective
        ))
    })?;
    let payoffs = (0..game.num_players())
        .map(|i| game.payoff(&profile, i))
        .collect::<Result<Vec<_>, _>>()?;
    let result = json!({
        "profile": profile.strategies(),
        "profile_flat": profile.flatten(),
        "objective": r.objective,
        "payoffs": payoffs,
    });
    Ok(Outcome::new(
        EXIT_OK,
        "equilibrium",
        result,
        r.lp_iterations,
        r.worst_violation.gain.max(0.0),
        o.tol,
    ))
}

fn solve_expost(o: &Opts, doc: &GameDocument) -> Result<Outcome, Failure> {
    let ugame = doc.one_shot()?.uncertain()?;
    let r = expost::solve_expost(&ugame, o.tol)?;
    let result = json!({
        "profile": r.profile.as_ref().map(|p| p.strategies()),
        "profile_flat": r.profile.as_ref().map(|p| p.flatten()),
        "objective": r.objective,
        "slack_values": r.slack_values,
        "worst_violation": violation_json(&r.worst_violation),
    });
    let (code, status) = match r.status {
        ExPostStatus::Equilibrium => (EXIT_OK, "equilibrium"),
        ExPostStatus::NoExPostEquilibrium => (EXIT_NEGATIVE, "no_ex_post_equilibrium"),
    };
    Ok(Outcome::new(
        code,
        status,
        result,
        r.lp_iterations,
        r.objective,
        o.tol,
    ))
}

fn verify_expost(o: &Opts, doc: &GameDocument) -> Result<Outcome, Failure> {
    let ugame = doc.one_shot()?.uncertain()?;
    let profile = doc.profile(ugame.action_counts())?;
    let worst = expost::worst_violation(&ugame, &profile)?;
    let holds = worst.gain <= o.tol;
    let result = json!({"holds": holds, "worst_violation": violation_json(&worst)});
    let (code, status) = verdict(holds);
    Ok(Outcome::new(
        code,
        status,
        result,
        ugame.num_vertices(),
        worst.gain.max(0.0),
        o.tol,
    ))
}

fn verdict(holds: bool) -> (i32, &'static str) {
    if holds {
        (EXIT_OK, "verified")
    } else {
        (EXIT_NEGATIVE, "verification_failed")
    }
}

fn check_zero_sum(o: &Opts, doc: &GameDocument) -> Result<Outcome, Failure> {
    let ugame = doc.one_shot()?.uncertain()?;
    let cap = o.cap.unwrap_or(DEFAULT_ENUMERATION_CAP);
    for (vertex, g) in ugame.vertices().iter().enumerate() {
        if let Some(v) = game::zero_sum_violation(g, o.tol, cap)? {
            let result = json!({
                "zero_sum": false,
                "violation": {"vertex": vertex, "actions": v.actions, "total": v.total},
            });
            return Ok(Outcome::new(
                EXIT_NEGATIVE,
                "not_zero_sum",
                result,
                vertex + 1,
                v.total.abs(),
                o.tol,
            ));
        }
    }
    let result = json!({"zero_sum": true, "violation": null});
    Ok(Outcome::new(
        EXIT_OK,
        "zero_sum",
        result,
        ugame.num_vertices(),
        0.0,
        o.tol,
    ))
}

fn condition_name(c: Condition) -> &'static str {
    match c {
        Condition::SupportEquality => "support_equality",
        Condition::OffSupportUpper => "off_support_upper",
        Condition::ColumnSupportEquality => "column_support_equality",
        Condition::ColumnOffSupportLower => "column_off_support_lower",
    }
}

/// Two-player games with `A^{10} = -(A^{01})^T` use the matrix form.
fn two_player_matrix(game: &game::PolymatrixGame) -> Option<&Matrix> {
    if game.num_players() != 2 || game.edges().len() != 1 {
        return None;
    }
    let a = game.matrix(0, 1)?;
    let b = game.matrix(1, 0)?;
    let antisym = a.indexed_iter().all(|((r, c), v)| *v == -b[[c, r]]);
    antisym.then_some(a)
}

fn check_maximal(o: &Opts, doc: &GameDocument) -> Result<Outcome, Failure> {
    let game = doc.one_shot()?.nominal()?;
    let profile = doc.profile(game.action_counts())?;
    let report = match two_player_matrix(&game) {
        Some(a) => maximal_set::check_membership_two_player(
            a,
            profile.strategy(0),
            profile.strategy(1),
            o.tol,
        )?,
        None => maximal_set::check_membership_polymatrix(&game, &profile, o.tol)?,
    };
    let violations: Vec<Value> = report
        .violations
        .iter()
        .map(|v| {
            json!({
                "player": v.player,
                "action": v.action,
                "condition": condition_name(v.condition),
                "residual": v.residual,
            })
        })
        .collect();
    let residual = report
        .violations
        .iter()
        .map(|v| v.residual)
        .fold(0.0, f64::max);
    let result = json!({
        "member": report.member,
        "support_constants": report.support_constants,
        "violations": violations,
    });
    let (code, status) = if report.member {
        (EXIT_OK, "member")
    } else {
        (EXIT_NEGATIVE, "not_member")
    };
    Ok(Outcome::new(code, status, result, 1, residual, o.tol))
}

fn value_interval(o: &Opts, doc: &GameDocument) -> Result<Outcome, Failure> {
    let game = doc.stochastic()?.game()?;
    let max_iters = o.max_iters.unwrap_or(stochastic::DEFAULT_MAX_ITERATIONS);
    let r = stochastic::value_interval_with_limit(&game, o.epsilon, max_iters)?;
    let width: Vec<f64> = r.upper.iter().zip(&r.lower).map(|(u, l)| u - l).collect();
    let result = json!({"lower": r.lower, "upper": r.upper, "width": width});
    Ok(Outcome::new(
        EXIT_OK,
        "ok",
        result,
        r.iterations,
        r.residual,
        o.epsilon,
    ))
}

fn shapley(o: &Opts, doc: &GameDocument) -> Result<Outcome, Failure> {
    let sdoc = doc.stochastic()?;
    let game = sdoc.game()?;
    let realization = sdoc.realization(&game)?;
    let matrices = realization
        .iter()
        .enumerate()
        .map(|(s, g)| {
            g.matrix(0, 1)
                .filter(|_| game.is_two_player_zero_sum())
                .cloned()
                .ok_or_else(|| {
                    Failure::Input(format!("stage {s} is not in two-player zero-sum form"))
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let max_iters = o.max_iters.unwrap_or(stochastic::DEFAULT_MAX_ITERATIONS);
    let r = stochastic::shapley_value_with_limit(&game, &matrices, o.epsilon, max_iters)?;
    Ok(Outcome::new(
        EXIT_OK,
        "ok",
        json!({"values": r.values}),
        r.iterations,
        r.residual,
        o.epsilon,
    ))
}

fn verify_mpe(o: &Opts, doc: &GameDocument) -> Result<Outcome, Failure> {
    let sdoc = doc.stochastic()?;
    let game = sdoc.game()?;
    let profile = sdoc.profile(&game)?;
    let cap = o.cap.unwrap_or(stochastic::DEFAULT_COMBINATION_CAP);
    let r = stochastic::check_expost_mpe(&game, &profile, o.tol, cap)?;
    let worst = r.worst.as_ref().map(|w| {
        json!({"combination": w.combination, "player": w.player, "stage": w.stage, "gain": w.gain})
    });
    let result = json!({
        "holds": r.holds,
        "combinations": r.combinations,
        "max_gain": r.max_gain,
        "worst": worst,
    });
    let (code, status) = verdict(r.holds);
    Ok(Outcome::new(
        code,
        status,
        result,
        r.combinations,
        r.max_gain.max(0.0),
        o.tol,
    ))
}

fn simulate(o: &Opts, doc: &GameDocument) -> Result<Outcome, Failure> {
    let sdoc = doc.stochastic()?;
    let game = sdoc.game()?;
    let profile = sdoc.profile(&game)?;
    let realization = sdoc.realization(&game)?;
    let est = stochastic::simulate(
        &game,
        &profile,
        &realization,
        sdoc.start,
        o.horizon,
        o.episodes,
        o.seed,
    )?;
    let exact = stochastic::evaluate_profile(&game, &profile, &realization)?;
    let exact_start: Vec<f64> = exact.values.iter().map(|q| q[sdoc.start]).collect();
    let result = json!({
        "mean": est.mean,
        "std_error": est.std_error,
        "truncation_bound": est.truncation_bound,
        "exact": exact_start,
        "start": sdoc.start,
        "horizon": est.horizon,
        "episodes": est.episodes,
        "seed": o.seed,
    });
    Ok(Outcome::new(
        EXIT_OK,
        "ok",
        result,
        est.episodes,
        est.truncation_bound,
        o.tol,
    ))
}
