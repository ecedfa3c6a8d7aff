//! Box-score ingestion and the mirrored paired-sample feature layout.
//!
//! A game with rosters `A` (home) and `B` (away) becomes two feature
//! vectors of length `2pq`: `x1 = [A slots | B slots]` labelled with the
//! home result, and its block swap `x2 = [B slots | A slots]` with the
//! complementary label. Missing roster slots are zero-filled.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("schema: {0}")]
    Schema(String),
    #[error("line {line}: malformed row: {message}")]
    MalformedRow { line: u64, message: String },
    #[error("line {line}, column `{column}`: value `{value}` is not a finite number")]
    BadValue {
        line: u64,
        column: String,
        value: String,
    },
    #[error("header: unexpected column `{0}` (expected `game_id,season,team_side,player_id,<stats>`)")]
    BadHeader(String),
    #[error("header: unknown stat column `{0}`")]
    UnknownStatColumn(String),
    #[error("header: stat `{0}` from the schema is missing")]
    MissingStatColumn(String),
    #[error("line {line}: duplicate player `{player_id}` in game `{game_id}`")]
    DuplicatePlayer {
        line: u64,
        game_id: String,
        player_id: String,
    },
    #[error("game `{0}` has no result row")]
    MissingResult(String),
    #[error("game `{game_id}`: {side} roster is empty")]
    EmptyRoster { game_id: String, side: TeamSide },
    #[error("game `{game_id}`: {side} roster has {size} players, more than p = {p}")]
    RosterOverflow {
        game_id: String,
        side: TeamSide,
        size: usize,
        p: usize,
    },
    #[error("split ratio {0} must lie strictly between 0 and 1")]
    BadRatio(f64),
    #[error("need at least 2 games to split, got {0}")]
    TooFewGames(usize),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DatasetError>;

/// Ordered stat identifiers. The order is the canonical feature order.
///
/// Stats can be flagged as fuzzified (integer buckets after binning) or
/// removed. Removed stats stay in the box score but are left out of the
/// feature layout.
#[derive(Debug, Clone, PartialEq)]
pub struct StatSchema {
    stat_names: Vec<String>,
    fuzzified: Vec<bool>,
    removed: Vec<bool>,
    playing_time: Option<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SchemaFile {
    Names(Vec<String>),
    Full {
        stats: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        playing_time: Option<String>,
        #[serde(default)]
        fuzzified: Vec<String>,
        #[serde(default)]
        removed: Vec<String>,
    },
}

impl StatSchema {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let stat_names: Vec<String> = names.into_iter().map(Into::into).collect();
        if stat_names.is_empty() {
            return Err(DatasetError::Schema("no stats listed".into()));
        }
        let mut seen = HashSet::new();
        for name in &stat_names {
            if name.trim().is_empty() {
                return Err(DatasetError::Schema("empty stat name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(DatasetError::Schema(format!("duplicate stat `{name}`")));
            }
        }
        let q = stat_names.len();
        Ok(Self {
            stat_names,
            fuzzified: vec![false; q],
            removed: vec![false; q],
            playing_time: None,
        })
    }

    /// Tags the stat used to order roster slots (minutes played).
    pub fn with_playing_time(mut self, name: &str) -> Result<Self> {
        self.playing_time = Some(self.require(name)?);
        Ok(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        match serde_json::from_str::<SchemaFile>(text)? {
            SchemaFile::Names(names) => Self::new(names),
            SchemaFile::Full {
                stats,
                playing_time,
                fuzzified,
                removed,
            } => {
                let mut schema = Self::new(stats)?;
                if let Some(pt) = playing_time {
                    schema = schema.with_playing_time(&pt)?;
                }
                for name in fuzzified {
                    let idx = schema.require(&name)?;
                    schema.fuzzified[idx] = true;
                }
                for name in removed {
                    let idx = schema.require(&name)?;
                    schema.removed[idx] = true;
                }
                if schema.active_count() == 0 {
                    return Err(DatasetError::Schema("every stat is removed".into()));
                }
                Ok(schema)
            }
        }
    }

    pub fn to_json(&self) -> String {
        let pick = |flags: &[bool]| {
            self.stat_names
                .iter()
                .zip(flags)
                .filter(|(_, &f)| f)
                .map(|(n, _)| n.clone())
                .collect::<Vec<_>>()
        };
        let file = SchemaFile::Full {
            stats: self.stat_names.clone(),
            playing_time: self.playing_time.map(|i| self.stat_names[i].clone()),
            fuzzified: pick(&self.fuzzified),
            removed: pick(&self.removed),
        };
        serde_json::to_string_pretty(&file).expect("schema serializes")
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| DatasetError::Schema(format!("unknown stat `{name}`")))
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.stat_names.iter().position(|n| n == name)
    }

    pub fn stat_names(&self) -> &[String] {
        &self.stat_names
    }

    /// Number of stat columns in the box score, removed ones included.
    pub fn len(&self) -> usize {
        self.stat_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stat_names.is_empty()
    }

    pub fn playing_time(&self) -> Option<usize> {
        self.playing_time
    }

    pub fn is_fuzzified(&self, stat: usize) -> bool {
        self.fuzzified[stat]
    }

    pub fn set_fuzzified(&mut self, stat: usize, flag: bool) {
        self.fuzzified[stat] = flag;
    }

    pub fn is_removed(&self, stat: usize) -> bool {
        self.removed[stat]
    }

    pub fn set_removed(&mut self, stat: usize, flag: bool) {
        self.removed[stat] = flag;
    }

    /// Stat indices that take part in the feature layout, in schema order.
    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.removed[i]).collect()
    }

    /// `q`: number of stats per player slot in the feature vector.
    pub fn active_count(&self) -> usize {
        self.removed.iter().filter(|r| !**r).count()
    }
}

/// Short hash of the active stats, their fuzzified flags and `p`; models
/// carry it so they are only applied to the feature layout they were
/// trained on.
pub fn schema_fingerprint(schema: &StatSchema, p: usize) -> String {
    let mut hasher = Sha256::new();
    for i in schema.active_indices() {
        hasher.update(schema.stat_names()[i].as_bytes());
        hasher.update([0u8, u8::from(schema.is_fuzzified(i))]);
    }
    hasher.update((p as u64).to_le_bytes());
    hasher
        .finalize()
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TeamSide {
    Home,
    Away,
}

impl std::fmt::Display for TeamSide {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TeamSide::Home => "home",
            TeamSide::Away => "away",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerStatLine {
    pub player_id: String,
    /// One value per schema stat, in schema order.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameRecord {
    pub game_id: String,
    pub season: String,
    pub home: Vec<PlayerStatLine>,
    pub away: Vec<PlayerStatLine>,
    pub home_win: bool,
}

impl GameRecord {
    pub fn roster(&self, side: TeamSide) -> &[PlayerStatLine] {
        match side {
            TeamSide::Home => &self.home,
            TeamSide::Away => &self.away,
        }
    }

    pub fn players(&self) -> impl Iterator<Item = (TeamSide, &PlayerStatLine)> {
        self.home
            .iter()
            .map(|l| (TeamSide::Home, l))
            .chain(self.away.iter().map(|l| (TeamSide::Away, l)))
    }

    pub fn winner(&self) -> TeamSide {
        if self.home_win {
            TeamSide::Home
        } else {
            TeamSide::Away
        }
    }

    pub fn validate(&self, schema: &StatSchema) -> Result<()> {
        let mut seen = HashSet::new();
        for side in [TeamSide::Home, TeamSide::Away] {
            if self.roster(side).is_empty() {
                return Err(DatasetError::EmptyRoster {
                    game_id: self.game_id.clone(),
                    side,
                });
            }
        }
        for (_, line) in self.players() {
            if !seen.insert(line.player_id.as_str()) {
                return Err(DatasetError::DuplicatePlayer {
                    line: 0,
                    game_id: self.game_id.clone(),
                    player_id: line.player_id.clone(),
                });
            }
            if line.values.len() != schema.len() {
                return Err(DatasetError::Schema(format!(
                    "player `{}` in game `{}` has {} values, schema has {}",
                    line.player_id,
                    self.game_id,
                    line.values.len(),
                    schema.len()
                )));
            }
            if let Some(k) = line.values.iter().position(|v| !v.is_finite()) {
                return Err(DatasetError::BadValue {
                    line: 0,
                    column: schema.stat_names()[k].clone(),
                    value: line.values[k].to_string(),
                });
            }
        }
        Ok(())
    }
}

/// Index arithmetic for the `2pq` layout: `p` slots per team, `q` stats per slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub slots: usize,
    pub stats: usize,
}

impl FeatureLayout {
    pub fn new(slots: usize, stats: usize) -> Self {
        Self { slots, stats }
    }

    pub fn for_schema(schema: &StatSchema, p: usize) -> Self {
        Self::new(p, schema.active_count())
    }

    pub fn block_len(&self) -> usize {
        self.slots * self.stats
    }

    pub fn feature_count(&self) -> usize {
        2 * self.block_len()
    }

    /// Zero-based feature index of `stat` for the player in `slot` on `side`.
    pub fn index(&self, side: TeamSide, slot: usize, stat: usize) -> usize {
        debug_assert!(slot < self.slots && stat < self.stats);
        let offset = match side {
            TeamSide::Home => 0,
            TeamSide::Away => self.block_len(),
        };
        offset + slot * self.stats + stat
    }

    pub fn locate(&self, index: usize) -> (TeamSide, usize, usize) {
        let block = self.block_len();
        let (side, rem) = if index < block {
            (TeamSide::Home, index)
        } else {
            (TeamSide::Away, index - block)
        };
        (side, rem / self.stats, rem % self.stats)
    }

    pub fn slot_range(&self, side: TeamSide, slot: usize) -> Range<usize> {
        let start = self.index(side, slot, 0);
        start..start + self.stats
    }
}

/// Swaps the home and away halves of a paired feature vector.
pub fn swap_blocks(x: &[f64]) -> Vec<f64> {
    let half = x.len() / 2;
    let mut out = Vec::with_capacity(x.len());
    out.extend_from_slice(&x[half..]);
    out.extend_from_slice(&x[..half]);
    out
}

/// How roster members are assigned to feature slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SlotPolicy {
    /// Descending playing time, ties by player id. Falls back to player id
    /// when the schema has no playing-time stat.
    #[default]
    PlayingTime,
    PlayerId,
}

pub fn ordered_roster<'a>(
    roster: &'a [PlayerStatLine],
    schema: &StatSchema,
    policy: SlotPolicy,
) -> Vec<&'a PlayerStatLine> {
    let mut ordered: Vec<&PlayerStatLine> = roster.iter().collect();
    match (policy, schema.playing_time()) {
        (SlotPolicy::PlayingTime, Some(k)) => ordered.sort_by(|a, b| {
            b.values[k]
                .total_cmp(&a.values[k])
                .then_with(|| a.player_id.cmp(&b.player_id))
        }),
        _ => ordered.sort_by(|a, b| a.player_id.cmp(&b.player_id)),
    }
    ordered
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub game_id: String,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub y1: u8,
    pub y2: u8,
    /// Player in each home slot of `x1`, `None` for padding.
    pub home_slots: Vec<Option<String>>,
    pub away_slots: Vec<Option<String>>,
}

impl PairedSample {
    pub fn sample_ids(&self) -> [String; 2] {
        [format!("{}#1", self.game_id), format!("{}#2", self.game_id)]
    }

    /// `(features, label)` for both mirrored rows.
    pub fn rows(&self) -> [(&[f64], u8); 2] {
        [(&self.x1, self.y1), (&self.x2, self.y2)]
    }

    /// Slot occupied by `player_id` in `x1`, if rostered.
    pub fn slot_of(&self, player_id: &str) -> Option<(TeamSide, usize)> {
        let find = |slots: &[Option<String>]| {
            slots
                .iter()
                .position(|s| s.as_deref() == Some(player_id))
        };
        find(&self.home_slots)
            .map(|s| (TeamSide::Home, s))
            .or_else(|| find(&self.away_slots).map(|s| (TeamSide::Away, s)))
    }
}

pub fn build_paired_samples(
    game: &GameRecord,
    schema: &StatSchema,
    p: usize,
    policy: SlotPolicy,
) -> Result<PairedSample> {
    let layout = FeatureLayout::for_schema(schema, p);
    let active = schema.active_indices();
    let mut x1 = vec![0.0; layout.feature_count()];
    let mut home_slots = vec![None; p];
    let mut away_slots = vec![None; p];

    for side in [TeamSide::Home, TeamSide::Away] {
        let roster = game.roster(side);
        if roster.len() > p {
            return Err(DatasetError::RosterOverflow {
                game_id: game.game_id.clone(),
                side,
                size: roster.len(),
                p,
            });
        }
        let slots = match side {
            TeamSide::Home => &mut home_slots,
            TeamSide::Away => &mut away_slots,
        };
        for (slot, line) in ordered_roster(roster, schema, policy).into_iter().enumerate() {
            slots[slot] = Some(line.player_id.clone());
            for (k, &stat) in active.iter().enumerate() {
                x1[layout.index(side, slot, k)] = line.values[stat];
            }
        }
    }

    let x2 = swap_blocks(&x1);
    let y1 = u8::from(game.home_win);
    Ok(PairedSample {
        game_id: game.game_id.clone(),
        x1,
        x2,
        y1,
        y2: 1 - y1,
        home_slots,
        away_slots,
    })
}

pub fn build_all(
    games: &[GameRecord],
    schema: &StatSchema,
    p: usize,
    policy: SlotPolicy,
) -> Result<Vec<PairedSample>> {
    games
        .iter()
        .map(|g| build_paired_samples(g, schema, p, policy))
        .collect()
}

/// Splits by game so both mirrored rows of a game land on the same side.
///
/// The train side receives `round(ratio * games)` games, clamped so that
/// neither side is empty. Input order is preserved within each side.
pub fn split_train_test(
    samples: &[PairedSample],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<PairedSample>, Vec<PairedSample>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DatasetError::BadRatio(ratio));
    }
    let mut ids: Vec<&str> = samples.iter().map(|s| s.game_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    let n = ids.len();
    if n < 2 {
        return Err(DatasetError::TooFewGames(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let n_train = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
    let train_ids: HashSet<&str> = ids[..n_train].iter().copied().collect();
    let (train, test) = samples
        .iter()
        .cloned()
        .partition(|s| train_ids.contains(s.game_id.as_str()));
    Ok((train, test))
}

const FIXED_COLUMNS: [&str; 4] = ["game_id", "season", "team_side", "player_id"];

#[derive(Default)]
struct PartialGame {
    season: String,
    home: Vec<PlayerStatLine>,
    away: Vec<PlayerStatLine>,
    home_win: Option<bool>,
}

/// Reads a sidecar results table with header `game_id,home_win`.
pub fn parse_results<R: Read>(reader: R) -> Result<BTreeMap<String, bool>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "game_id" || &headers[1] != "home_win" {
        return Err(DatasetError::BadHeader(headers.iter().collect::<Vec<_>>().join(",")));
    }
    let mut out = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let win = parse_flag(&record[1], line)?;
        if out.insert(record[0].to_string(), win).is_some_and(|prev| prev != win) {
            return Err(DatasetError::MalformedRow {
                line,
                message: format!("conflicting results for game `{}`", &record[0]),
            });
        }
    }
    Ok(out)
}

fn parse_flag(field: &str, line: u64) -> Result<bool> {
    match field {
        "1" => Ok(true),
        "0" => Ok(false),
        other => Err(DatasetError::MalformedRow {
            line,
            message: format!("home_win must be 0 or 1, got `{other}`"),
        }),
    }
}

/// Parses a box-score table whose results come from in-file `result` rows.
pub fn parse_box_scores<R: Read>(reader: R, schema: &StatSchema) -> Result<Vec<GameRecord>> {
    parse_inner(reader, schema, None)
}

/// Like [`parse_box_scores`], with results supplied by a sidecar table.
/// In-file result rows, if present, must agree with it.
pub fn parse_box_scores_with_results<R: Read>(
    reader: R,
    schema: &StatSchema,
    results: &BTreeMap<String, bool>,
) -> Result<Vec<GameRecord>> {
    parse_inner(reader, schema, Some(results))
}

fn parse_inner<R: Read>(
    reader: R,
    schema: &StatSchema,
    sidecar: Option<&BTreeMap<String, bool>>,
) -> Result<Vec<GameRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    for (i, expected) in FIXED_COLUMNS.iter().enumerate() {
        match headers.get(i) {
            Some(h) if h == *expected => {}
            Some(h) => return Err(DatasetError::BadHeader(h.to_string())),
            None => return Err(DatasetError::BadHeader(format!("<missing {expected}>"))),
        }
    }
    // column position -> schema stat index
    let mut column_stat = Vec::new();
    let mut seen = vec![false; schema.len()];
    for name in headers.iter().skip(FIXED_COLUMNS.len()) {
        let idx = schema
            .index_of(name)
            .ok_or_else(|| DatasetError::UnknownStatColumn(name.to_string()))?;
        if seen[idx] {
            return Err(DatasetError::BadHeader(format!("duplicate column `{name}`")));
        }
        seen[idx] = true;
        column_stat.push(idx);
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(DatasetError::MissingStatColumn(
            schema.stat_names()[missing].clone(),
        ));
    }
    let width = FIXED_COLUMNS.len() + column_stat.len();

    let mut games: BTreeMap<String, PartialGame> = BTreeMap::new();
    let mut players: HashSet<(String, String)> = HashSet::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let malformed = |message: String| DatasetError::MalformedRow { line, message };
        if record.len() < FIXED_COLUMNS.len() {
            return Err(malformed(format!("expected at least 4 fields, got {}", record.len())));
        }
        let game_id = record[0].to_string();
        let season = record[1].to_string();
        if game_id.is_empty() {
            return Err(malformed("empty game_id".into()));
        }
        let entry = games.entry(game_id.clone()).or_default();
        if entry.season.is_empty() {
            entry.season = season.clone();
        } else if entry.season != season {
            return Err(malformed(format!(
                "game `{game_id}` listed under seasons `{}` and `{season}`",
                entry.season
            )));
        }

        let side = match &record[2] {
            "home" => TeamSide::Home,
            "away" => TeamSide::Away,
            "result" => {
                if &record[3] != "home_win" || record.len() < 5 {
                    return Err(malformed(
                        "result rows must read `game_id,season,result,home_win,<0|1>`".into(),
                    ));
                }
                let win = parse_flag(&record[4], line)?;
                if entry.home_win.is_some_and(|prev| prev != win) {
                    return Err(malformed(format!("conflicting results for game `{game_id}`")));
                }
                entry.home_win = Some(win);
                continue;
            }
            other => return Err(malformed(format!("team_side must be home, away or result, got `{other}`"))),
        };

        if record.len() != width {
            return Err(malformed(format!("expected {width} fields, got {}", record.len())));
        }
        let player_id = record[3].to_string();
        if player_id.is_empty() {
            return Err(malformed("empty player_id".into()));
        }
        if !players.insert((game_id.clone(), player_id.clone())) {
            return Err(DatasetError::DuplicatePlayer {
                line,
                game_id,
                player_id,
            });
        }
        let mut values = vec![0.0; schema.len()];
        for (col, &stat) in column_stat.iter().enumerate() {
            let raw = &record[FIXED_COLUMNS.len() + col];
            // blank cells are percentages with zero attempts
            if raw.is_empty() {
                continue;
            }
            let value: f64 = raw.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                DatasetError::BadValue {
                    line,
                    column: schema.stat_names()[stat].clone(),
                    value: raw.to_string(),
                }
            })?;
            values[stat] = value;
        }
        let stat_line = PlayerStatLine { player_id, values };
        match side {
            TeamSide::Home => entry.home.push(stat_line),
            TeamSide::Away => entry.away.push(stat_line),
        }
    }

    let mut out = Vec::with_capacity(games.len());
    for (game_id, mut partial) in games {
        let from_sidecar = sidecar.and_then(|s| s.get(&game_id).copied());
        let home_win = match (partial.home_win, from_sidecar) {
            (Some(a), Some(b)) if a != b => {
                return Err(DatasetError::MalformedRow {
                    line: 0,
                    message: format!("game `{game_id}`: result row disagrees with results file"),
                })
            }
            (Some(w), _) | (None, Some(w)) => w,
            (None, None) => return Err(DatasetError::MissingResult(game_id)),
        };
        partial.home.sort_by(|a, b| a.player_id.cmp(&b.player_id));
        partial.away.sort_by(|a, b| a.player_id.cmp(&b.player_id));
        let game = GameRecord {
            game_id,
            season: partial.season,
            home: partial.home,
            away: partial.away,
            home_win,
        };
        game.validate(schema)?;
        out.push(game);
    }
    Ok(out)
}

/// Writes games in the ingestion format, one `result` row per game.
pub fn write_box_scores<W: Write>(writer: W, games: &[GameRecord], schema: &StatSchema) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().flexible(true).from_writer(writer);
    let mut header: Vec<&str> = FIXED_COLUMNS.to_vec();
    header.extend(schema.stat_names().iter().map(String::as_str));
    wtr.write_record(&header)?;
    for game in games {
        for (side, line) in game.players() {
            let mut row = vec![
                game.game_id.clone(),
                game.season.clone(),
                side.to_string(),
                line.player_id.clone(),
            ];
            row.extend(line.values.iter().map(|v| v.to_string()));
            wtr.write_record(&row)?;
        }
        wtr.write_record([
            game.game_id.as_str(),
            game.season.as_str(),
            "result",
            "home_win",
            if game.home_win { "1" } else { "0" },
        ])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema2() -> StatSchema {
        StatSchema::new(["a", "b"]).unwrap()
    }

    fn line(id: &str, values: &[f64]) -> PlayerStatLine {
        PlayerStatLine {
            player_id: id.into(),
            values: values.to_vec(),
        }
    }

    fn game(home: Vec<PlayerStatLine>, away: Vec<PlayerStatLine>, home_win: bool) -> GameRecord {
        GameRecord {
            game_id: "g1".into(),
            season: "s".into(),
            home,
            away,
            home_win,
        }
    }

    #[test]
    fn paired_layout_matches_definition() {
        let g = game(
            vec![line("h1", &[1., 2.]), line("h2", &[3., 4.])],
            vec![line("a1", &[5., 6.]), line("a2", &[7., 8.])],
            true,
        );
        let s = build_paired_samples(&g, &schema2(), 2, SlotPolicy::PlayerId).unwrap();
        assert_eq!(s.x1, vec![1., 2., 3., 4., 5., 6., 7., 8.]);
        assert_eq!(s.x2, vec![5., 6., 7., 8., 1., 2., 3., 4.]);
        assert_eq!((s.y1, s.y2), (1, 0));
        assert_eq!(swap_blocks(&s.x1), s.x2);
        assert_eq!(swap_blocks(&s.x2), s.x1);
    }

    #[test]
    fn short_roster_is_zero_padded() {
        let g = game(vec![line("h1", &[1., 2.])], vec![line("a1", &[5., 6.])], false);
        let s = build_paired_samples(&g, &schema2(), 2, SlotPolicy::PlayerId).unwrap();
        assert_eq!(&s.x1[2..4], &[0.0, 0.0]);
        assert_eq!(s.home_slots, vec![Some("h1".to_string()), None]);
        assert_eq!((s.y1, s.y2), (0, 1));
    }

    #[test]
    fn roster_overflow_is_rejected() {
        let g = game(
            vec![line("h1", &[1., 2.]), line("h2", &[1., 2.]), line("h3", &[1., 2.])],
            vec![line("a1", &[5., 6.])],
            true,
        );
        assert!(matches!(
            build_paired_samples(&g, &schema2(), 2, SlotPolicy::PlayerId),
            Err(DatasetError::RosterOverflow { size: 3, .. })
        ));
    }

    #[test]
    fn playing_time_orders_slots() {
        let schema = StatSchema::new(["MIN", "PTS"])
            .unwrap()
            .with_playing_time("MIN")
            .unwrap();
        let g = game(
            vec![line("a", &[10., 1.]), line("b", &[30., 2.]), line("c", &[30., 3.])],
            vec![line("z", &[1., 1.])],
            true,
        );
        let s = build_paired_samples(&g, &schema, 3, SlotPolicy::PlayingTime).unwrap();
        let ids: Vec<_> = s.home_slots.iter().map(|s| s.clone().unwrap()).collect();
        assert_eq!(ids, ["b", "c", "a"]);
    }

    #[test]
    fn removed_stats_leave_the_layout() {
        let mut schema = StatSchema::new(["a", "b", "c"]).unwrap();
        schema.set_removed(1, true);
        let g = game(vec![line("h", &[1., 2., 3.])], vec![line("v", &[4., 5., 6.])], true);
        let s = build_paired_samples(&g, &schema, 1, SlotPolicy::PlayerId).unwrap();
        assert_eq!(s.x1, vec![1., 3., 4., 6.]);
    }

    #[test]
    fn layout_index_round_trips() {
        let layout = FeatureLayout::new(3, 4);
        for side in [TeamSide::Home, TeamSide::Away] {
            for slot in 0..3 {
                for stat in 0..4 {
                    let j = layout.index(side, slot, stat);
                    assert_eq!(layout.locate(j), (side, slot, stat));
                }
            }
        }
        assert_eq!(layout.index(TeamSide::Away, 0, 0), 12);
    }

    #[test]
    fn schema_rejects_duplicates() {
        assert!(StatSchema::new(["a", "a"]).is_err());
    }

    #[test]
    fn schema_json_round_trip() {
        let mut schema = StatSchema::new(["MIN", "PTS", "DRtg"])
            .unwrap()
            .with_playing_time("MIN")
            .unwrap();
        schema.set_fuzzified(2, true);
        schema.set_removed(1, true);
        let back = StatSchema::from_json(&schema.to_json()).unwrap();
        assert_eq!(back, schema);
        let bare = StatSchema::from_json(r#"["x","y"]"#).unwrap();
        assert_eq!(bare.stat_names(), ["x", "y"]);
    }

    fn sample(id: &str) -> PairedSample {
        PairedSample {
            game_id: id.into(),
            x1: vec![],
            x2: vec![],
            y1: 1,
            y2: 0,
            home_slots: vec![],
            away_slots: vec![],
        }
    }

    #[test]
    fn nine_to_one_split() {
        let samples: Vec<_> = (0..10).map(|i| sample(&format!("g{i}"))).collect();
        let (train, test) = split_train_test(&samples, 0.9, 7).unwrap();
        assert_eq!((train.len(), test.len()), (9, 1));
        let (train2, test2) = split_train_test(&samples, 0.9, 7).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
        for t in &test {
            assert!(train.iter().all(|s| s.game_id != t.game_id));
        }
    }

    #[test]
    fn split_errors() {
        let samples = vec![sample("g0")];
        assert!(matches!(
            split_train_test(&samples, 0.5, 0),
            Err(DatasetError::TooFewGames(1))
        ));
        let samples = vec![sample("g0"), sample("g1")];
        assert!(matches!(split_train_test(&samples, 1.0, 0), Err(DatasetError::BadRatio(_))));
        assert!(matches!(split_train_test(&samples, 0.0, 0), Err(DatasetError::BadRatio(_))));
    }
}
