use ndarray::array;
use proptest::prelude::*;
use robust_games::expost::{self, ExPostStatus};
use robust_games::game::{Matrix, PolymatrixGame, UncertainGame};
use robust_games::stochastic::{self, MarkovProfile, Stage, StochasticGame};

fn self_loop(vertices: Vec<Matrix>, gamma: f64) -> StochasticGame {
    let joint = vertices[0].len();
    StochasticGame::new(
        vec![Stage::zero_sum(vertices, vec![vec![1.0]; joint])],
        gamma,
    )
    .unwrap()
}

fn matrix_strategy(r: usize, c: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-5.0f64..5.0, r * c)
        .prop_map(move |v| Matrix::from_shape_vec((r, c), v).unwrap())
}

#[test]
fn rock_paper_scissors_scalings_share_the_uniform_equilibrium() {
    let rps = array![[0.0, -1.0, 1.0], [1.0, 0.0, -1.0], [-1.0, 1.0, 0.0]];
    let vertices = [1.0, 2.5, 0.3]
        .iter()
        .map(|c| PolymatrixGame::two_player_zero_sum(&rps * *c).unwrap())
        .collect();
    let r = expost::solve_expost(&UncertainGame::new(vertices).unwrap(), 1e-6).unwrap();
    assert_eq!(r.status, ExPostStatus::Equilibrium);
    for p in r.profile.unwrap().flatten() {
        assert!((p - 1.0 / 3.0).abs() <= 1e-9);
    }
}

#[test]
fn two_stage_interval_matches_hand_fixed_point() {
    // Stage 0 pays [1, 3] and moves to stage 1; stage 1 pays 0 and stays.
    let stages = vec![
        Stage::zero_sum(vec![array![[1.0]], array![[3.0]]], vec![vec![0.0, 1.0]]),
        Stage::zero_sum(vec![array![[0.0]]], vec![vec![0.0, 1.0]]),
    ];
    let game = StochasticGame::new(stages, 0.9).unwrap();
    let r = stochastic::value_interval(&game, 1e-8).unwrap();
    assert!((r.lower[0] - 1.0).abs() <= 1e-8 && (r.upper[0] - 3.0).abs() <= 1e-8);
    assert!(r.lower[1].abs() <= 1e-8 && r.upper[1].abs() <= 1e-8);
}

#[test]
fn mixed_profile_evaluation_matches_simulation() {
    let mp = array![[1.0, -1.0], [-1.0, 1.0]];
    let skew = array![[2.0, 0.0], [-1.0, 0.5]];
    let stages = vec![
        Stage::zero_sum(
            vec![mp],
            vec![
                vec![0.5, 0.5],
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![0.2, 0.8],
            ],
        ),
        Stage::zero_sum(vec![skew], vec![vec![1.0, 0.0]; 4]),
    ];
    let game = StochasticGame::new(stages, 0.6).unwrap();
    let profile = MarkovProfile::new(vec![
        robust_games::StrategyProfile::new(vec![vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap(),
        robust_games::StrategyProfile::new(vec![vec![0.9, 0.1], vec![0.5, 0.5]]).unwrap(),
    ]);
    let real = game.vertex_realization(&[vec![0], vec![0]]).unwrap();
    let exact = stochastic::evaluate_profile(&game, &profile, &real).unwrap();
    assert!(exact.residual() <= 1e-12);
    let est = stochastic::simulate(&game, &profile, &real, 1, 60, 20_000, 5).unwrap();
    for i in 0..2 {
        let diff = (est.mean[i] - exact.values[i][1]).abs();
        assert!(
            diff <= 4.0 * est.std_error[i] + est.truncation_bound,
            "{diff}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn single_stage_interval_brackets_each_vertex_value(
        a in matrix_strategy(2, 3),
        b in matrix_strategy(2, 3),
        gamma in 0.2f64..0.9,
    ) {
        let eps = 1e-7;
        let game = self_loop(vec![a.clone(), b.clone()], gamma);
        let r = stochastic::value_interval(&game, eps).unwrap();
        for m in [a, b] {
            let v = stochastic::matrix_game_value(&m).unwrap().value / (1.0 - gamma);
            prop_assert!(v >= r.lower[0] - 2.0 * eps && v <= r.upper[0] + 2.0 * eps);
        }
    }

    #[test]
    fn adding_a_vertex_widens_the_interval(
        a in matrix_strategy(3, 2),
        b in matrix_strategy(3, 2),
        gamma in 0.2f64..0.9,
    ) {
        let eps = 1e-7;
        let narrow = stochastic::value_interval(&self_loop(vec![a.clone()], gamma), eps).unwrap();
        let wide = stochastic::value_interval(&self_loop(vec![a, b], gamma), eps).unwrap();
        prop_assert!(wide.lower[0] <= narrow.lower[0] + 2.0 * eps);
        prop_assert!(wide.upper[0] >= narrow.upper[0] - 2.0 * eps);
    }

    #[test]
    fn nash_payoff_matches_matrix_game_value(a in matrix_strategy(3, 3)) {
        let game = PolymatrixGame::two_player_zero_sum(a.clone()).unwrap();
        let p = expost::solve_nash(&game).unwrap();
        let v = stochastic::matrix_game_value(&a).unwrap().value;
        prop_assert!((game.payoff(&p, 0).unwrap() - v).abs() <= 1e-7);
    }
}
