//! Alignment metrics against vote-based ground truth, and the
//! metric-weighting baseline ranking.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::dataset::{GameRecord, StatSchema};
use crate::mvp::{Method, MvpError, RankingResult};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("player `{0}` from the ground truth is missing from the predicted ranking")]
    MissingPlayer(String),
    #[error("need at least 2 common players, found {0}")]
    TooFewPlayers(usize),
    #[error("k = {k} is out of range for lists of length {predicted} and {truth}")]
    BadK { k: usize, predicted: usize, truth: usize },
    #[error("no labeled games among the predictions")]
    NoLabeledGames,
    #[error("ground truth has scope {found}, expected {expected}")]
    WrongScope { expected: Scope, found: Scope },
    #[error("ground truth line {line}: {message}")]
    Format { line: u64, message: String },
    #[error("ground truth is empty")]
    EmptyTruth,
    #[error("weights: {0}")]
    Weights(String),
    #[error(transparent)]
    Mvp(#[from] MvpError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, EvalError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    PerGame,
    Season,
}

impl Scope {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scope::PerGame => "per_game",
            Scope::Season => "season",
        }
    }
}

impl std::fmt::Display for Scope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scope {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "per_game" | "pergame" | "game" => Ok(Scope::PerGame),
            "season" => Ok(Scope::Season),
            other => Err(format!("unknown scope `{other}`")),
        }
    }
}

/// Vote-based ground truth: either a season ranking or per-game MVP labels.
#[derive(Debug, Clone, PartialEq)]
pub enum GroundTruth {
    /// `(player_id, rank)` ordered by rank.
    Season { season: String, ranking: Vec<(String, usize)> },
    /// game_id → MVP player_id.
    PerGame { labels: BTreeMap<String, String> },
}

impl GroundTruth {
    pub fn season(season: impl Into<String>, ordered: impl IntoIterator<Item = impl Into<String>>) -> Self {
        GroundTruth::Season {
            season: season.into(),
            ranking: ordered
                .into_iter()
                .enumerate()
                .map(|(i, p)| (p.into(), i + 1))
                .collect(),
        }
    }

    pub fn per_game(labels: impl IntoIterator<Item = (impl Into<String>, impl Into<String>)>) -> Self {
        GroundTruth::PerGame {
            labels: labels.into_iter().map(|(g, p)| (g.into(), p.into())).collect(),
        }
    }

    pub fn scope(&self) -> Scope {
        match self {
            GroundTruth::Season { .. } => Scope::Season,
            GroundTruth::PerGame { .. } => Scope::PerGame,
        }
    }

    pub fn ranking(&self) -> Result<&[(String, usize)]> {
        match self {
            GroundTruth::Season { ranking, .. } => Ok(ranking),
            GroundTruth::PerGame { .. } => Err(EvalError::WrongScope {
                expected: Scope::Season,
                found: Scope::PerGame,
            }),
        }
    }

    pub fn labels(&self) -> Result<&BTreeMap<String, String>> {
        match self {
            GroundTruth::PerGame { labels } => Ok(labels),
            GroundTruth::Season { .. } => Err(EvalError::WrongScope {
                expected: Scope::PerGame,
                found: Scope::Season,
            }),
        }
    }

    /// Reads `scope,key,rank,player_id`. All rows share one scope; a season
    /// file holds exactly one season, and per-game rows must have rank 1.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != ["scope", "key", "rank", "player_id"] {
            return Err(EvalError::Format {
                line: 1,
                message: format!("expected header `scope,key,rank,player_id`, got `{}`", header.join(",")),
            });
        }
        let mut scope = None;
        let mut season: Option<String> = None;
        let mut ranking = Vec::new();
        let mut seen = BTreeSet::new();
        let mut labels = BTreeMap::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let fail = |message: String| EvalError::Format { line, message };
            if record.len() != 4 {
                return Err(fail(format!("expected 4 fields, got {}", record.len())));
            }
            let row_scope: Scope = record[0].parse().map_err(fail)?;
            if scope.is_some_and(|s| s != row_scope) {
                return Err(fail("mixed scopes".into()));
            }
            scope = Some(row_scope);
            let key = record[1].to_string();
            let rank: usize = record[2]
                .parse()
                .ok()
                .filter(|&r| r >= 1)
                .ok_or_else(|| fail(format!("bad rank `{}`", &record[2])))?;
            let player = record[3].to_string();
            match row_scope {
                Scope::Season => {
                    match &season {
                        Some(s) if *s != key => {
                            return Err(fail(format!("second season `{key}` in one file")));
                        }
                        _ => season = Some(key),
                    }
                    if !seen.insert(player.clone()) {
                        return Err(fail(format!("duplicate player `{player}`")));
                    }
                    ranking.push((player, rank));
                }
                Scope::PerGame => {
                    if rank != 1 {
                        return Err(fail("per-game rows must have rank 1".into()));
                    }
                    if labels.insert(key.clone(), player).is_some() {
                        return Err(fail(format!("duplicate label for game `{key}`")));
                    }
                }
            }
        }
        match scope.ok_or(EvalError::EmptyTruth)? {
            Scope::Season => {
                ranking.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
                Ok(GroundTruth::Season {
                    season: season.unwrap_or_default(),
                    ranking,
                })
            }
            Scope::PerGame => Ok(GroundTruth::PerGame { labels }),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["scope", "key", "rank", "player_id"])?;
        match self {
            GroundTruth::Season { season, ranking } => {
                for (player, rank) in ranking {
                    wtr.write_record(["season", season, &rank.to_string(), player])?;
                }
            }
            GroundTruth::PerGame { labels } => {
                for (game, player) in labels {
                    wtr.write_record(["per_game", game, "1", player])?;
                }
            }
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Average relative deviation: mean |predicted rank − truth rank| over the
/// truth-listed players, with predicted ranks taken over the whole pool.
pub fn ard(predicted: &RankingResult, truth: &GroundTruth) -> Result<f64> {
    let ranking = truth.ranking()?;
    if ranking.is_empty() {
        return Err(EvalError::EmptyTruth);
    }
    let mut total = 0.0;
    for (player, truth_rank) in ranking {
        let pred = predicted
            .rank_of(player)
            .ok_or_else(|| EvalError::MissingPlayer(player.clone()))?;
        total += (pred as f64 - *truth_rank as f64).abs();
    }
    Ok(total / ranking.len() as f64)
}

/// Spearman's rank correlation over the truth players present in the
/// prediction, re-ranked among themselves (average ranks for ties).
pub fn srcc(predicted: &RankingResult, truth: &GroundTruth) -> Result<f64> {
    let ranking = truth.ranking()?;
    let common: Vec<(f64, f64)> = ranking
        .iter()
        .filter_map(|(player, t)| predicted.rank_of(player).map(|p| (p as f64, *t as f64)))
        .collect();
    let n = common.len();
    if n < 2 {
        return Err(EvalError::TooFewPlayers(n));
    }
    let pred = average_ranks(&common.iter().map(|c| c.0).collect::<Vec<_>>());
    let tru = average_ranks(&common.iter().map(|c| c.1).collect::<Vec<_>>());
    Ok(spearman_closed_form(&pred, &tru))
}

/// `1 − 6Σd² / (n(n² − 1))`.
pub fn spearman_closed_form(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

/// 1-based ranks of `values` in ascending order; ties get the mean of the
/// positions they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// `|G_K ∩ M_K| / K` over the first K entries of each list.
pub fn recall_at_k(predicted: &RankingResult, truth: &GroundTruth, k: usize) -> Result<f64> {
    let ranking = truth.ranking()?;
    if k == 0 || k > ranking.len() || k > predicted.entries.len() {
        return Err(EvalError::BadK {
            k,
            predicted: predicted.entries.len(),
            truth: ranking.len(),
        });
    }
    let top_truth: BTreeSet<&str> = ranking[..k].iter().map(|(p, _)| p.as_str()).collect();
    let hits = predicted.entries[..k]
        .iter()
        .filter(|e| top_truth.contains(e.player_id.as_str()))
        .count();
    Ok(hits as f64 / k as f64)
}

/// Fraction of labeled games whose predicted MVP matches the label. Games
/// without a label are left out of the denominator.
pub fn accuracy(predictions: &BTreeMap<String, String>, truth: &GroundTruth) -> Result<f64> {
    let labels = truth.labels()?;
    let (mut n, mut m) = (0usize, 0usize);
    for (game, player) in predictions {
        if let Some(label) = labels.get(game) {
            n += 1;
            m += usize::from(label == player);
        }
    }
    if n == 0 {
        return Err(EvalError::NoLabeledGames);
    }
    Ok(m as f64 / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Ard,
    #[default]
    Srcc,
    Recall,
    Acc,
}

impl Metric {
    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Ard => "ard",
            Metric::Srcc => "srcc",
            Metric::Recall => "recall",
            Metric::Acc => "acc",
        }
    }

    /// Whether larger values mean better alignment.
    pub fn higher_is_better(&self) -> bool {
        !matches!(self, Metric::Ard)
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "ard" => Ok(Metric::Ard),
            "srcc" => Ok(Metric::Srcc),
            "recall" | "r" => Ok(Metric::Recall),
            "acc" | "accuracy" => Ok(Metric::Acc),
            other => Err(format!("unknown metric `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    #[default]
    Minmax,
    Zscore,
}

/// Per-stat weights for the weighted-stat baseline; stats left out weigh 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub weights: BTreeMap<String, f64>,
    #[serde(default)]
    pub normalization: Normalization,
}

impl WeightSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    fn resolve(&self, schema: &StatSchema) -> Result<Vec<(usize, f64)>> {
        if !self.weights.values().any(|w| *w != 0.0) {
            return Err(EvalError::Weights("at least one weight must be nonzero".into()));
        }
        let mut out = Vec::new();
        for (name, &w) in &self.weights {
            if !w.is_finite() {
                return Err(EvalError::Weights(format!("weight for `{name}` is not finite")));
            }
            let idx = schema
                .index_of(name)
                .ok_or_else(|| EvalError::Weights(format!("unknown stat `{name}`")))?;
            if w != 0.0 {
                out.push((idx, w));
            }
        }
        Ok(out)
    }
}

/// Normalizes each weighted stat over every player-game line, sums the
/// weighted values per line and ranks players by their mean, descending.
pub fn baseline_rank(
    games: &[GameRecord],
    schema: &StatSchema,
    weights: &WeightSpec,
    min_games: usize,
) -> Result<RankingResult> {
    let resolved = weights.resolve(schema)?;
    let lines: Vec<_> = games.iter().flat_map(|g| g.players()).map(|(_, l)| l).collect();
    let mut transforms = Vec::with_capacity(resolved.len());
    for &(stat, w) in &resolved {
        let values = lines.iter().map(|l| l.values[stat]);
        let (lo, hi) = values.clone().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        match weights.normalization {
            Normalization::Minmax => {
                let span = hi - lo;
                // a constant stat contributes 0 to everyone
                let scale = if span > 0.0 { 1.0 / span } else { 0.0 };
                transforms.push((stat, w, lo, scale));
            }
            Normalization::Zscore => {
                let n = lines.len() as f64;
                let mean = values.clone().sum::<f64>() / n;
                let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                if var > 0.0 {
                    transforms.push((stat, w, mean, 1.0 / var.sqrt()));
                } else {
                    warn!(
                        "stat `{}` has zero variance; skipped under z-score normalization",
                        schema.stat_names()[stat]
                    );
                }
            }
        }
    }
    let mut per_player: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for line in &lines {
        let score = transforms
            .iter()
            .map(|&(stat, w, center, scale)| w * (line.values[stat] - center) * scale)
            .sum();
        per_player.entry(line.player_id.clone()).or_default().push(score);
    }
    Ok(RankingResult::from_samples(Method::Baseline, per_player, min_games)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub value: f64,
    pub method: String,
    pub scope: Scope,
}

/// CSV `metric,value,method,scope`.
pub fn write_report<W: Write>(writer: W, rows: &[MetricRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["metric", "value", "method", "scope"])?;
    for r in rows {
        wtr.write_record([r.metric.as_str(), &r.value.to_string(), r.method.as_str(), r.scope.as_str()])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}
