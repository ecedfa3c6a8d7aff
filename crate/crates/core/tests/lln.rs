//! Per-player mean contributions settle as the number of games grows.

use mvp_shapley::causal::train_on_games;
use mvp_shapley::harness::{generate_league, LeagueConfig};
use mvp_shapley::model::TrainConfig;
use mvp_shapley::mvp::{contribution_history, season_contributions};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[test]
fn prefix_means_converge() {
    // six teams play three games per round, so every player appears in
    // every round and the first 3T games give each player exactly T games
    let config = |games, seed| LeagueConfig {
        teams: 6,
        games,
        seed,
        ..LeagueConfig::default()
    };
    let train_league = generate_league(&config(3000, 1)).unwrap();
    let schema = train_league.schema();
    let p = train_league.config.players_per_team;
    let policy = Default::default();
    let model = train_on_games(&train_league.games, &schema, p, policy, &TrainConfig::default()).unwrap();

    let horizons = [20usize, 80, 320];
    let long = 2560;
    let mut errors = vec![Vec::new(); horizons.len()];
    for seed in 10..14 {
        let league = generate_league(&config(3 * long, seed)).unwrap();
        let per_game = season_contributions(&model, &league.games, &schema, p, policy).unwrap();
        let history = contribution_history(&per_game);
        for phis in history.values() {
            assert_eq!(phis.len(), long);
            let limit = phis.iter().sum::<f64>() / long as f64;
            for (h, &t) in horizons.iter().enumerate() {
                let prefix = phis[..t].iter().sum::<f64>() / t as f64;
                errors[h].push((prefix - limit).abs());
            }
        }
    }
    let medians: Vec<f64> = errors.into_iter().map(median).collect();
    eprintln!("median |prefix mean - long-run mean| at T = {horizons:?}: {medians:?}");
    assert!(medians.windows(2).all(|w| w[1] < w[0]), "{medians:?}");
    // quadrupling T should roughly halve the error
    assert!(medians[2] < medians[0] / 2.5, "{medians:?}");
}
