//! Fast path attributions against exhaustive coalition enumeration on
//! trained models small enough to enumerate.

use mvp_shapley::attribution::{brute_force_shapley, tree_shap};
use mvp_shapley::causal::train_on_games;
use mvp_shapley::dataset::build_all;
use mvp_shapley::harness::{generate_league, LeagueConfig};
use mvp_shapley::model::TrainConfig;

fn check(stats: usize, num_trees: usize, samples: usize) {
    let league = generate_league(&LeagueConfig {
        teams: 6,
        players_per_team: 2,
        stats,
        signal_stats: 2,
        games: 90,
        seed: 7,
        ..LeagueConfig::default()
    })
    .unwrap();
    let schema = league.schema();
    let p = 2;
    let train = TrainConfig {
        num_trees,
        max_depth: 3,
        min_samples_leaf: 3,
        ..TrainConfig::default()
    };
    let policy = Default::default();
    let model = train_on_games(&league.games, &schema, p, policy, &train).unwrap();
    assert_eq!(model.feature_count(), 2 * p * stats);

    let paired = build_all(&league.games[..samples], &schema, p, policy).unwrap();
    for s in &paired {
        for x in [&s.x1, &s.x2] {
            let fast = tree_shap(&model, x).unwrap();
            let slow = brute_force_shapley(&model, x).unwrap();
            assert!((fast.baseline - slow.baseline).abs() < 1e-10);
            for (i, (a, b)) in fast.phi.iter().zip(&slow.phi).enumerate() {
                assert!((a - b).abs() < 1e-9, "{}: feature {i}: {a} vs {b}", s.game_id);
            }
        }
    }
}

#[test]
fn trained_model_with_twelve_features() {
    check(3, 40, 8);
}

#[test]
fn trained_model_with_sixteen_features() {
    check(4, 20, 2);
}

#[test]
fn trained_model_with_twenty_features() {
    check(5, 6, 1);
}
