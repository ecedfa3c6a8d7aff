//! Player contributions and single/multi-game MVP rankings.
//!
//! A player's contribution Φ in one game is the sum of the Shapley values
//! of their features while listed first (home block) minus the sum while
//! listed second (away block) across the two mirrored samples.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::{tree_shap, AttributionError, AttributionVector};
use crate::dataset::{
    build_paired_samples, schema_fingerprint, DatasetError, FeatureLayout, GameRecord,
    PairedSample, SlotPolicy, StatSchema, TeamSide,
};
use crate::model::{ModelError, TreeEnsemble};

#[derive(Debug, thiserror::Error)]
pub enum MvpError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Attribution(#[from] AttributionError),
    #[error("no contributions given")]
    Empty,
    #[error("game `{0}` has no winning-team entries")]
    NoWinners(String),
    #[error("no player meets the eligibility threshold of {0} games")]
    NoEligiblePlayers(usize),
    #[error("ranking file: {0}")]
    Format(String),
    #[error("unknown method `{0}` (expected single, m1, m2, m3 or baseline)")]
    UnknownMethod(String),
    #[error("`{0}` is not a contribution-averaging method")]
    NotAveraging(Method),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, MvpError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerContribution {
    pub game_id: String,
    pub player_id: String,
    pub side: TeamSide,
    /// Φ in margin units.
    pub phi_total: f64,
    pub on_winning_team: bool,
}

/// Attributions of both mirrored samples of one game and the resulting
/// per-player contributions.
#[derive(Debug, Clone)]
pub struct GameAttribution {
    pub sample: PairedSample,
    pub first: AttributionVector,
    pub second: AttributionVector,
    pub contributions: Vec<PlayerContribution>,
}

pub fn attribute_game(
    model: &TreeEnsemble,
    game: &GameRecord,
    schema: &StatSchema,
    p: usize,
    policy: SlotPolicy,
) -> Result<GameAttribution> {
    model.verify_fingerprint(&schema_fingerprint(schema, p))?;
    let sample = build_paired_samples(game, schema, p, policy)?;
    let [id1, id2] = sample.sample_ids();
    let mut first = tree_shap(model, &sample.x1)?;
    first.sample_id = id1;
    let mut second = tree_shap(model, &sample.x2)?;
    second.sample_id = id2;

    let layout = FeatureLayout::for_schema(schema, p);
    let block_sum = |a: &AttributionVector, side, slot| -> f64 {
        a.phi[layout.slot_range(side, slot)].iter().sum()
    };
    let winner = game.winner();
    let mut contributions = Vec::with_capacity(game.home.len() + game.away.len());
    for (side, slots) in [(TeamSide::Home, &sample.home_slots), (TeamSide::Away, &sample.away_slots)] {
        for (slot, player) in slots.iter().enumerate() {
            let Some(player_id) = player else { continue };
            // home players sit in x1's home block and x2's away block; away
            // players the reverse
            let (as_home, as_away) = match side {
                TeamSide::Home => (&first, &second),
                TeamSide::Away => (&second, &first),
            };
            let phi_total = block_sum(as_home, TeamSide::Home, slot)
                - block_sum(as_away, TeamSide::Away, slot);
            contributions.push(PlayerContribution {
                game_id: game.game_id.clone(),
                player_id: player_id.clone(),
                side,
                phi_total,
                on_winning_team: side == winner,
            });
        }
    }
    Ok(GameAttribution {
        sample,
        first,
        second,
        contributions,
    })
}

pub fn player_contribution(
    model: &TreeEnsemble,
    game: &GameRecord,
    schema: &StatSchema,
    p: usize,
    policy: SlotPolicy,
) -> Result<Vec<PlayerContribution>> {
    attribute_game(model, game, schema, p, policy).map(|g| g.contributions)
}

/// Attributes every game in parallel; output order follows `games`.
pub fn attribute_season(
    model: &TreeEnsemble,
    games: &[GameRecord],
    schema: &StatSchema,
    p: usize,
    policy: SlotPolicy,
) -> Result<Vec<GameAttribution>> {
    games
        .par_iter()
        .map(|g| attribute_game(model, g, schema, p, policy))
        .collect()
}

pub fn season_contributions(
    model: &TreeEnsemble,
    games: &[GameRecord],
    schema: &StatSchema,
    p: usize,
    policy: SlotPolicy,
) -> Result<Vec<Vec<PlayerContribution>>> {
    games
        .par_iter()
        .map(|g| player_contribution(model, g, schema, p, policy))
        .collect()
}

/// Highest Φ on the winning team; ties go to the smaller player id.
pub fn single_game_mvp(contribs: &[PlayerContribution]) -> Result<&PlayerContribution> {
    let first = contribs.first().ok_or(MvpError::Empty)?;
    contribs
        .iter()
        .filter(|c| c.on_winning_team)
        .max_by(|a, b| {
            a.phi_total
                .total_cmp(&b.phi_total)
                .then_with(|| b.player_id.cmp(&a.player_id))
        })
        .ok_or_else(|| MvpError::NoWinners(first.game_id.clone()))
}

/// Competition ranks (1224 style) by descending Φ over everyone in the game.
pub fn rank_within_game(contribs: &[PlayerContribution]) -> BTreeMap<String, usize> {
    let scored: Vec<(&str, f64)> = contribs
        .iter()
        .map(|c| (c.player_id.as_str(), c.phi_total))
        .collect();
    competition_rank(scored, Direction::Descending)
        .into_iter()
        .map(|(id, _, rank)| (id.to_string(), rank))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Ascending,
    Descending,
}

/// Sorts by score in `direction` (player id breaks ties for ordering) and
/// assigns competition ranks: tied scores share the smaller rank.
pub fn competition_rank<K: Ord>(
    mut scored: Vec<(K, f64)>,
    direction: Direction,
) -> Vec<(K, f64, usize)> {
    scored.sort_by(|a, b| {
        let ord = match direction {
            Direction::Ascending => a.1.total_cmp(&b.1),
            Direction::Descending => b.1.total_cmp(&a.1),
        };
        ord.then_with(|| a.0.cmp(&b.0))
    });
    let mut out: Vec<(K, f64, usize)> = Vec::with_capacity(scored.len());
    for (i, (key, score)) in scored.into_iter().enumerate() {
        let rank = match out.last() {
            Some(&(_, prev, r)) if prev == score => r,
            _ => i + 1,
        };
        out.push((key, score, rank));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Single,
    M1,
    M2,
    M3,
    Baseline,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Single => "single",
            Method::M1 => "m1",
            Method::M2 => "m2",
            Method::M3 => "m3",
            Method::Baseline => "baseline",
        }
    }

    pub fn direction(&self) -> Direction {
        match self {
            Method::M1 | Method::M2 => Direction::Ascending,
            Method::Single | Method::M3 | Method::Baseline => Direction::Descending,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = MvpError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "single" => Method::Single,
            "m1" => Method::M1,
            "m2" => Method::M2,
            "m3" => Method::M3,
            "baseline" => Method::Baseline,
            other => return Err(MvpError::UnknownMethod(other.to_string())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub player_id: String,
    pub score: f64,
    pub rank: usize,
    /// Number of games the score averages over.
    pub games: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingResult {
    pub method: Method,
    pub entries: Vec<RankEntry>,
    pub min_games: usize,
}

impl RankingResult {
    /// Ranks players by the mean of their per-game values.
    pub fn from_samples(
        method: Method,
        per_player: BTreeMap<String, Vec<f64>>,
        min_games: usize,
    ) -> Result<Self> {
        let mut games = BTreeMap::new();
        let scored: Vec<(String, f64)> = per_player
            .into_iter()
            .filter(|(_, v)| !v.is_empty() && v.len() >= min_games)
            .map(|(id, v)| {
                games.insert(id.clone(), v.len());
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                (id, mean)
            })
            .collect();
        if scored.is_empty() {
            return Err(MvpError::NoEligiblePlayers(min_games));
        }
        let entries = competition_rank(scored, method.direction())
            .into_iter()
            .map(|(player_id, score, rank)| RankEntry {
                games: games[&player_id],
                player_id,
                score,
                rank,
            })
            .collect();
        Ok(Self {
            method,
            entries,
            min_games,
        })
    }

    pub fn rank_of(&self, player_id: &str) -> Option<usize> {
        self.entries
            .iter()
            .find(|e| e.player_id == player_id)
            .map(|e| e.rank)
    }

    pub fn top(&self) -> Option<&RankEntry> {
        self.entries.first()
    }

    pub fn player_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.player_id.as_str())
    }

    /// CSV `rank,player_id,score,games,method`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["rank", "player_id", "score", "games", "method"])?;
        for e in &self.entries {
            wtr.write_record([
                e.rank.to_string(),
                e.player_id.clone(),
                e.score.to_string(),
                e.games.to_string(),
                self.method.to_string(),
            ])?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["rank", "player_id", "score", "games", "method"] {
            return Err(MvpError::Format(format!(
                "unexpected header `{}`",
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut method = None;
        let mut entries = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let bad = |what: &str| MvpError::Format(format!("bad {what} `{}`", record.as_slice()));
            let m: Method = record[4].parse()?;
            if method.is_some_and(|prev| prev != m) {
                return Err(bad("method"));
            }
            method = Some(m);
            entries.push(RankEntry {
                rank: record[0].parse().map_err(|_| bad("rank"))?,
                player_id: record[1].to_string(),
                score: record[2].parse().map_err(|_| bad("score"))?,
                games: record[3].parse().map_err(|_| bad("games"))?,
            });
        }
        Ok(Self {
            method: method.ok_or(MvpError::Empty)?,
            entries,
            min_games: 0,
        })
    }
}

/// M1: mean in-game rank over the player's winning games, ascending.
pub fn rank_m1(per_game: &[Vec<PlayerContribution>], min_games: usize) -> Result<RankingResult> {
    rank_by_game_rank(per_game, min_games, Method::M1, true)
}

/// M2: mean in-game rank over every game played, ascending.
pub fn rank_m2(per_game: &[Vec<PlayerContribution>], min_games: usize) -> Result<RankingResult> {
    rank_by_game_rank(per_game, min_games, Method::M2, false)
}

fn rank_by_game_rank(
    per_game: &[Vec<PlayerContribution>],
    min_games: usize,
    method: Method,
    wins_only: bool,
) -> Result<RankingResult> {
    if per_game.is_empty() {
        return Err(MvpError::Empty);
    }
    let mut ranks: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for game in per_game {
        let in_game = rank_within_game(game);
        for c in game {
            let list = ranks.entry(c.player_id.clone()).or_default();
            if !wins_only || c.on_winning_team {
                list.push(in_game[&c.player_id] as f64);
            }
        }
    }
    RankingResult::from_samples(method, ranks, min_games)
}

/// M3: mean Φ over every game played, descending.
pub fn rank_m3(per_game: &[Vec<PlayerContribution>], min_games: usize) -> Result<RankingResult> {
    if per_game.is_empty() {
        return Err(MvpError::Empty);
    }
    RankingResult::from_samples(Method::M3, contribution_history(per_game), min_games)
}

/// Per-player Φ in game order.
pub fn contribution_history(per_game: &[Vec<PlayerContribution>]) -> BTreeMap<String, Vec<f64>> {
    let mut history: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for c in per_game.iter().flatten() {
        history.entry(c.player_id.clone()).or_default().push(c.phi_total);
    }
    history
}

/// Season total Φ per player, summed in game order.
pub fn season_totals(per_game: &[Vec<PlayerContribution>]) -> BTreeMap<String, f64> {
    contribution_history(per_game)
        .into_iter()
        .map(|(id, v)| (id, v.iter().sum()))
        .collect()
}

/// The single-game MVP of each game, keyed by game id.
pub fn single_game_mvps(per_game: &[Vec<PlayerContribution>]) -> Result<BTreeMap<String, PlayerContribution>> {
    per_game
        .iter()
        .map(|g| single_game_mvp(g).map(|c| (c.game_id.clone(), c.clone())))
        .collect()
}

const MVP_HEADER: [&str; 6] = ["game_id", "rank", "player_id", "score", "games", "method"];

/// One ranking row per game: CSV `game_id,rank,player_id,score,games,method`
/// with rank 1, the MVP's Φ as score and method `single`.
pub fn write_mvps_csv<W: Write>(writer: W, mvps: &BTreeMap<String, PlayerContribution>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(MVP_HEADER)?;
    for (game, c) in mvps {
        wtr.write_record([
            game.clone(),
            "1".into(),
            c.player_id.clone(),
            c.phi_total.to_string(),
            "1".into(),
            Method::Single.to_string(),
        ])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads the per-game MVP file back as `game_id → player_id`.
pub fn read_mvps_csv<R: Read>(reader: R) -> Result<BTreeMap<String, String>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != MVP_HEADER {
        return Err(MvpError::Format(format!(
            "unexpected header `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        if &record[1] != "1" {
            continue;
        }
        if out.insert(record[0].to_string(), record[2].to_string()).is_some() {
            return Err(MvpError::Format(format!("game `{}` has two MVPs", &record[0])));
        }
    }
    Ok(out)
}

pub fn rank(per_game: &[Vec<PlayerContribution>], method: Method, min_games: usize) -> Result<RankingResult> {
    match method {
        Method::M1 => rank_m1(per_game, min_games),
        Method::M2 => rank_m2(per_game, min_games),
        Method::M3 => rank_m3(per_game, min_games),
        Method::Single | Method::Baseline => Err(MvpError::NotAveraging(method)),
    }
}
