//! Synthetic leagues with planted player skills, plus the concentration
//! and sample-complexity calculators used to check the ranking guarantees.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{GameRecord, PlayerStatLine, StatSchema};
use crate::eval::GroundTruth;
use crate::model::{Tree, TreeEnsemble, TreeNode};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid league config: {0}")]
    Config(String),
    #[error("{name} = {value} is outside its domain ({domain})")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },
    #[error("sampler produced {value}, outside [-{bound}, {bound}]")]
    Unbounded { value: f64, bound: f64 },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Count-like stats are reported as `round(COUNT_BASE + COUNT_UNIT·(skill + noise))`,
/// floored at zero.
pub const COUNT_BASE: f64 = 10.0;
pub const COUNT_UNIT: f64 = 4.0;

/// Minutes played: drawn per game independently of skill, used only to
/// order roster slots and left out of the features.
pub const MINUTES_STAT: &str = "min";
const MINUTES_RANGE: std::ops::RangeInclusive<u32> = 12..=40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LeagueConfig {
    pub teams: usize,
    /// Players per team; also the roster size used for slots.
    pub players_per_team: usize,
    /// Total stats; the first `signal_stats` drive outcomes, the rest are noise.
    pub stats: usize,
    pub signal_stats: usize,
    pub games: usize,
    pub skill_scale: f64,
    pub noise_scale: f64,
    /// Lead of the planted MVP's true value over the runner-up; the
    /// best-drawn player's signal skills are raised until it holds.
    pub mvp_margin: f64,
    pub seed: u64,
}

impl Default for LeagueConfig {
    fn default() -> Self {
        Self {
            teams: 30,
            players_per_team: 5,
            stats: 3,
            signal_stats: 2,
            games: 1230,
            skill_scale: 1.0,
            noise_scale: 0.5,
            mvp_margin: 1.0,
            seed: 0,
        }
    }
}

impl LeagueConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.teams < 2 || !self.teams.is_multiple_of(2) {
            return bad(format!("teams must be even and at least 2, got {}", self.teams));
        }
        if self.players_per_team == 0 || self.stats == 0 || self.games == 0 {
            return bad("players_per_team, stats and games must be positive".into());
        }
        if self.signal_stats == 0 || self.signal_stats > self.stats {
            return bad(format!(
                "signal_stats must lie in 1..={}, got {}",
                self.stats, self.signal_stats
            ));
        }
        if !(self.skill_scale > 0.0 && self.skill_scale.is_finite()) {
            return bad("skill_scale must be positive".into());
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return bad("noise_scale must be non-negative".into());
        }
        if !(self.mvp_margin >= 0.0 && self.mvp_margin.is_finite()) {
            return bad("mvp_margin must be non-negative".into());
        }
        Ok(())
    }

    /// `sig_1..sig_k` followed by `noise_1..`.
    pub fn stat_names(&self) -> Vec<String> {
        (1..=self.signal_stats)
            .map(|i| format!("sig_{i}"))
            .chain((1..=self.stats - self.signal_stats).map(|i| format!("noise_{i}")))
            .collect()
    }

    /// The generated stats plus the minutes column, which orders slots and
    /// is removed from the features.
    pub fn schema(&self) -> StatSchema {
        let mut names = self.stat_names();
        names.push(MINUTES_STAT.to_string());
        let mut schema = StatSchema::new(names)
            .and_then(|s| s.with_playing_time(MINUTES_STAT))
            .expect("generated stat names are valid");
        schema.set_removed(self.stats, true);
        schema
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSkill {
    pub player_id: String,
    pub team: usize,
    pub skill: Vec<f64>,
    /// Sum of the signal-stat skills.
    pub true_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct League {
    pub config: LeagueConfig,
    pub games: Vec<GameRecord>,
    pub skills: Vec<LatentSkill>,
}

impl League {
    pub fn schema(&self) -> StatSchema {
        self.config.schema()
    }

    /// The player with the highest planted value (smallest id on ties).
    pub fn best_player(&self) -> &LatentSkill {
        self.skills
            .iter()
            .max_by(|a, b| {
                a.true_value
                    .total_cmp(&b.true_value)
                    .then_with(|| b.player_id.cmp(&a.player_id))
            })
            .expect("leagues have players")
    }

    /// Season truth listing the `n` best players by planted value.
    pub fn planted_truth(&self, n: usize) -> GroundTruth {
        let mut order: Vec<&LatentSkill> = self.skills.iter().collect();
        order.sort_by(|a, b| {
            b.true_value
                .total_cmp(&a.true_value)
                .then_with(|| a.player_id.cmp(&b.player_id))
        });
        GroundTruth::season("synthetic", order.iter().take(n).map(|s| s.player_id.clone()))
    }

    /// CSV `player_id,team,true_value,<stat>...` with one skill per stat.
    pub fn write_skills_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["player_id".to_string(), "team".into(), "true_value".into()];
        header.extend(self.config.stat_names());
        wtr.write_record(&header)?;
        for s in &self.skills {
            let mut row = vec![s.player_id.clone(), s.team.to_string(), s.true_value.to_string()];
            row.extend(s.skill.iter().map(f64::to_string));
            wtr.write_record(&row)?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

pub fn player_id(team: usize, slot: usize) -> String {
    format!("t{team:02}p{slot}")
}

/// Generates a league from `config`.
///
/// Games are played in rounds of random pairings of all teams. Everything
/// is drawn from one seeded stream in game order, so a longer league with
/// the same seed extends a shorter one game for game.
pub fn generate_league(config: &LeagueConfig) -> Result<League> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let skill_dist = Normal::new(0.0, config.skill_scale).expect("validated scale");
    let noise_dist = Normal::new(0.0, config.noise_scale).expect("validated scale");

    let mut skills = Vec::with_capacity(config.teams * config.players_per_team);
    for team in 0..config.teams {
        for slot in 0..config.players_per_team {
            let skill: Vec<f64> = (0..config.stats).map(|_| skill_dist.sample(&mut rng)).collect();
            let true_value = skill[..config.signal_stats].iter().sum();
            skills.push(LatentSkill {
                player_id: player_id(team, slot),
                team,
                skill,
                true_value,
            });
        }
    }
    plant_mvp(&mut skills, config);
    let roster = |team: usize| &skills[team * config.players_per_team..(team + 1) * config.players_per_team];
    let team_value = |team: usize| roster(team).iter().map(|s| s.true_value).sum::<f64>();

    let mut games = Vec::with_capacity(config.games);
    let mut teams: Vec<usize> = (0..config.teams).collect();
    'rounds: loop {
        teams.shuffle(&mut rng);
        for pair in teams.chunks(2) {
            if games.len() == config.games {
                break 'rounds;
            }
            let (home, away) = if rng.random::<bool>() {
                (pair[0], pair[1])
            } else {
                (pair[1], pair[0])
            };
            let mut box_lines = |team: usize| -> Vec<PlayerStatLine> {
                roster(team)
                    .iter()
                    .map(|s| {
                        let mut values: Vec<f64> = s
                            .skill
                            .iter()
                            .map(|k| {
                                let noise = if config.noise_scale > 0.0 {
                                    noise_dist.sample(&mut rng)
                                } else {
                                    0.0
                                };
                                (COUNT_BASE + COUNT_UNIT * (k + noise)).round().max(0.0)
                            })
                            .collect();
                        values.push(f64::from(rng.random_range(MINUTES_RANGE)));
                        PlayerStatLine {
                            player_id: s.player_id.clone(),
                            values,
                        }
                    })
                    .collect()
            };
            let home_lines = box_lines(home);
            let away_lines = box_lines(away);
            let diff = team_value(home) - team_value(away);
            let home_win = if config.noise_scale > 0.0 {
                rng.random::<f64>() < crate::model::logistic(diff)
            } else {
                diff >= 0.0
            };
            games.push(GameRecord {
                game_id: format!("g{:05}", games.len() + 1),
                season: "synthetic".into(),
                home: home_lines,
                away: away_lines,
                home_win,
            });
        }
    }
    Ok(League {
        config: config.clone(),
        games,
        skills,
    })
}

/// Raises the best-drawn player's signal skills evenly so their true value
/// leads the runner-up by at least `mvp_margin`.
fn plant_mvp(skills: &mut [LatentSkill], config: &LeagueConfig) {
    if skills.len() < 2 || config.mvp_margin == 0.0 {
        return;
    }
    let mut order: Vec<usize> = (0..skills.len()).collect();
    order.sort_by(|&a, &b| skills[b].true_value.total_cmp(&skills[a].true_value));
    let (best, runner_up) = (order[0], order[1]);
    let lift = skills[runner_up].true_value + config.mvp_margin - skills[best].true_value;
    if lift > 0.0 {
        let k = config.signal_stats;
        let s = &mut skills[best];
        for v in &mut s.skill[..k] {
            *v += lift / k as f64;
        }
        s.true_value = s.skill[..k].iter().sum();
    }
}

/// A random ensemble with valid, additive covers, for property tests.
pub fn random_ensemble<R: Rng>(
    rng: &mut R,
    n_features: usize,
    n_trees: usize,
    max_depth: usize,
) -> TreeEnsemble {
    let trees = (0..n_trees)
        .map(|_| {
            let mut nodes = Vec::new();
            grow_random(rng, &mut nodes, n_features, max_depth);
            Tree::new(nodes).expect("random trees are well formed")
        })
        .collect();
    let base = rng.random_range(-1.0..1.0);
    TreeEnsemble::new(trees, base, n_features).expect("random ensemble is valid")
}

/// Appends a subtree rooted at the returned index.
fn grow_random<R: Rng>(rng: &mut R, nodes: &mut Vec<TreeNode>, n_features: usize, depth: usize) -> usize {
    let id = nodes.len();
    if depth == 0 || (id > 0 && rng.random_bool(0.25)) {
        let cover = f64::from(rng.random_range(1u32..50));
        nodes.push(TreeNode::leaf(rng.random_range(-1.0..1.0), cover));
        return id;
    }
    nodes.push(TreeNode::leaf(0.0, 0.0));
    let feature = rng.random_range(0..n_features);
    let threshold = rng.random_range(-1.0..1.0);
    let left = grow_random(rng, nodes, n_features, depth - 1);
    let right = grow_random(rng, nodes, n_features, depth - 1);
    let cover = nodes[left].cover + nodes[right].cover;
    nodes[id] = TreeNode::internal(feature, threshold, left, right, cover);
    id
}

fn check_domain(name: &'static str, value: f64, ok: bool, domain: &'static str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(HarnessError::Domain { name, value, domain })
    }
}

/// `ε = M·sqrt(2 ln(2/δ) / T)`.
pub fn hoeffding_epsilon(m: f64, t: u64, delta: f64) -> Result<f64> {
    check_domain("M", m, m > 0.0 && m.is_finite(), "M > 0")?;
    check_domain("T", t as f64, t >= 1, "T >= 1")?;
    check_domain("delta", delta, delta > 0.0 && delta < 1.0, "0 < delta < 1")?;
    Ok(m * (2.0 * (2.0 / delta).ln() / t as f64).sqrt())
}

/// Smallest integer `T ≥ 8M² ln(4/δ) / Δ²`.
pub fn required_games(m: f64, gap: f64, delta: f64) -> Result<u64> {
    check_domain("M", m, m > 0.0 && m.is_finite(), "M > 0")?;
    check_domain("gap", gap, gap > 0.0 && gap.is_finite(), "gap > 0")?;
    check_domain("delta", delta, delta > 0.0 && delta < 1.0, "0 < delta < 1")?;
    Ok((8.0 * m * m * (4.0 / delta).ln() / (gap * gap)).ceil() as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trials: usize,
    pub violations: usize,
    pub epsilon: f64,
}

impl TrialReport {
    pub fn rate(&self) -> f64 {
        self.violations as f64 / self.trials as f64
    }

    /// Standard error of a binomial proportion `delta` over the trials.
    pub fn binomial_se(&self, delta: f64) -> f64 {
        (delta * (1.0 - delta) / self.trials as f64).sqrt()
    }
}

/// Runs `trials` independent experiments, each averaging `t` draws from
/// `sampler`, and counts how often the mean misses `mean` by more than the
/// Hoeffding ε. Every trial has its own stream of the seeded generator.
pub fn concentration_trial<F>(
    sampler: F,
    mean: f64,
    m: f64,
    t: u64,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<TrialReport>
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    let epsilon = hoeffding_epsilon(m, t, delta)?;
    check_domain("trials", trials as f64, trials >= 1, "trials >= 1")?;
    let outcomes: Vec<bool> = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial);
            let mut sum = 0.0;
            for _ in 0..t {
                let x = sampler(&mut rng);
                if x.is_nan() || x.abs() > m {
                    return Err(HarnessError::Unbounded { value: x, bound: m });
                }
                sum += x;
            }
            Ok((sum / t as f64 - mean).abs() > epsilon)
        })
        .collect::<Result<_>>()?;
    Ok(TrialReport {
        trials,
        violations: outcomes.iter().filter(|&&v| v).count(),
        epsilon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> LeagueConfig {
        LeagueConfig {
            teams: 4,
            players_per_team: 3,
            games: 10,
            ..LeagueConfig::default()
        }
    }

    #[test]
    fn league_is_deterministic() {
        let a = generate_league(&small()).unwrap();
        let b = generate_league(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate_league(&LeagueConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a.games, c.games);
    }

    #[test]
    fn longer_league_extends_shorter() {
        let short = generate_league(&small()).unwrap();
        let long = generate_league(&LeagueConfig { games: 25, ..small() }).unwrap();
        assert_eq!(short.skills, long.skills);
        assert_eq!(short.games[..], long.games[..10]);
    }

    #[test]
    fn rosters_and_stats_are_well_formed() {
        let league = generate_league(&small()).unwrap();
        let schema = league.schema();
        assert_eq!(league.games.len(), 10);
        for g in &league.games {
            g.validate(&schema).unwrap();
            assert_eq!(g.home.len(), 3);
            assert_eq!(g.away.len(), 3);
            assert!(g.players().all(|(_, l)| l.values.iter().all(|v| *v >= 0.0 && v.fract() == 0.0)));
        }
        let best = league.best_player();
        assert!(league.skills.iter().all(|s| s.true_value <= best.true_value));
        let truth = league.planted_truth(3);
        assert_eq!(truth.ranking().unwrap()[0].0, best.player_id);
    }

    #[test]
    fn noiseless_outcomes_follow_team_value() {
        let cfg = LeagueConfig {
            noise_scale: 0.0,
            ..small()
        };
        let league = generate_league(&cfg).unwrap();
        let value = |lines: &[PlayerStatLine]| -> f64 {
            lines
                .iter()
                .map(|l| league.skills.iter().find(|s| s.player_id == l.player_id).unwrap().true_value)
                .sum()
        };
        for g in &league.games {
            assert_eq!(g.home_win, value(&g.home) >= value(&g.away));
        }
    }

    #[test]
    fn config_validation() {
        assert!(LeagueConfig { teams: 3, ..small() }.validate().is_err());
        assert!(LeagueConfig { signal_stats: 4, ..small() }.validate().is_err());
        assert!(LeagueConfig { skill_scale: 0.0, ..small() }.validate().is_err());
        assert!(LeagueConfig { noise_scale: -1.0, ..small() }.validate().is_err());
        assert_eq!(small().stat_names(), ["sig_1", "sig_2", "noise_1"]);
    }

    #[test]
    fn skills_csv_lists_true_value() {
        let league = generate_league(&small()).unwrap();
        let mut buf = Vec::new();
        league.write_skills_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("player_id,team,true_value,sig_1,sig_2,noise_1\n"));
        assert_eq!(text.lines().count(), 13);
    }

    #[test]
    fn closed_forms() {
        let delta = 2.0 * (-2.0f64).exp();
        assert!((hoeffding_epsilon(1.0, 4, delta).unwrap() - 1.0).abs() < 1e-12);
        let e = hoeffding_epsilon(1.0, 1000, 0.05).unwrap();
        assert!((e - 0.0859).abs() < 5e-5);
        let quarter = hoeffding_epsilon(1.0, 4000, 0.05).unwrap();
        assert!((quarter - e / 2.0).abs() < 1e-15);
        assert_eq!(required_games(1.0, 0.5, 0.05).unwrap(), 141);
        assert_eq!(required_games(1.0, 1.0, 0.05).unwrap(), 36);
        assert!(required_games(1.0, 0.5, 1.0 - 1e-12).unwrap() > 0);
        assert!(hoeffding_epsilon(0.0, 4, 0.1).is_err());
        assert!(hoeffding_epsilon(1.0, 0, 0.1).is_err());
        assert!(required_games(1.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn constant_sampler_never_violates() {
        let r = concentration_trial(|_| 0.3, 0.3, 1.0, 50, 0.05, 200, 7).unwrap();
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn unbounded_sampler_is_rejected() {
        let r = concentration_trial(|_| 2.0, 0.0, 1.0, 10, 0.05, 10, 7);
        assert!(matches!(r, Err(HarnessError::Unbounded { .. })));
    }

    #[test]
    fn random_ensembles_validate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let m = random_ensemble(&mut rng, 6, 4, 4);
            assert!(m.max_depth() <= 4);
            assert_eq!(m.trees().len(), 4);
        }
    }
}
