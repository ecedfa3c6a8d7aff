//! Feature-set refinement: importance grouping, exhaustive subset search
//! scored by vote alignment, and quantile fuzzification of confounding stats.

use std::collections::BTreeMap;
use std::io::Write;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::AttributionVector;
use crate::dataset::{
    build_all, schema_fingerprint, DatasetError, FeatureLayout, GameRecord, SlotPolicy, StatSchema,
};
use crate::eval::{self, EvalError, GroundTruth, Metric};
use crate::model::{train, ModelError, TrainConfig, TrainingData, TreeEnsemble};
use crate::mvp::{self, MvpError, PlayerContribution};

#[derive(Debug, thiserror::Error)]
pub enum CausalError {
    #[error("no attributions given")]
    NoAttributions,
    #[error("attribution `{sample_id}` has {got} values, layout needs {expected}")]
    DimensionMismatch {
        sample_id: String,
        expected: usize,
        got: usize,
    },
    #[error("top_k must satisfy 1 <= top_k < {stats}, got {top_k}")]
    BadTopK { top_k: usize, stats: usize },
    #[error("need between 1 and {max} groups, got {got}")]
    BadGroups { got: usize, max: usize },
    #[error("unknown stat `{0}`")]
    UnknownStat(String),
    #[error("stat `{0}` appears in more than one group")]
    OverlappingGroups(String),
    #[error("bin count must be at least 1")]
    BadBinCount,
    #[error("no values to fit bins on")]
    NoValues,
    #[error("non-finite value {0} in bin input")]
    NonFinite(f64),
    #[error("bad binning spec: {0}")]
    BadSpec(String),
    #[error("no candidate bin counts")]
    NoCandidates,
    #[error("every candidate failed; first failure: {0}")]
    AllCandidatesFailed(String),
    #[error("joint distribution: {0}")]
    Joint(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mvp(#[from] MvpError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CausalError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatImportance {
    pub stat: String,
    pub mean_abs_phi: f64,
    pub rank: usize,
}

/// Active stats ordered by descending importance (ties keep schema order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub entries: Vec<StatImportance>,
}

impl ImportanceReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["rank", "stat", "mean_abs_phi"])?;
        for e in &self.entries {
            wtr.write_record([e.rank.to_string(), e.stat.clone(), e.mean_abs_phi.to_string()])?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Mean |φ| per active stat, over samples and over all `2p` slot copies.
pub fn feature_importance(
    attributions: &[AttributionVector],
    schema: &StatSchema,
    p: usize,
) -> Result<ImportanceReport> {
    if attributions.is_empty() {
        return Err(CausalError::NoAttributions);
    }
    let layout = FeatureLayout::for_schema(schema, p);
    let mut sums = vec![0.0; layout.stats];
    for a in attributions {
        if a.phi.len() != layout.feature_count() {
            return Err(CausalError::DimensionMismatch {
                sample_id: a.sample_id.clone(),
                expected: layout.feature_count(),
                got: a.phi.len(),
            });
        }
        for (i, v) in a.phi.iter().enumerate() {
            sums[layout.locate(i).2] += v.abs();
        }
    }
    let denom = (attributions.len() * 2 * p) as f64;
    let names = schema.active_indices();
    let mut entries: Vec<StatImportance> = sums
        .iter()
        .zip(&names)
        .map(|(s, &i)| StatImportance {
            stat: schema.stat_names()[i].clone(),
            mean_abs_phi: s / denom,
            rank: 0,
        })
        .collect();
    // stable sort keeps schema order among ties
    entries.sort_by(|a, b| b.mean_abs_phi.total_cmp(&a.mean_abs_phi));
    for (i, e) in entries.iter_mut().enumerate() {
        e.rank = i + 1;
    }
    Ok(ImportanceReport { entries })
}

/// The `top_k` most important stats as singletons plus one group holding
/// the rest.
pub fn group_features(report: &ImportanceReport, top_k: usize) -> Result<Vec<Vec<String>>> {
    let n = report.entries.len();
    if top_k == 0 || top_k >= n {
        return Err(CausalError::BadTopK { top_k, stats: n });
    }
    let mut groups: Vec<Vec<String>> = report.entries[..top_k]
        .iter()
        .map(|e| vec![e.stat.clone()])
        .collect();
    groups.push(report.entries[top_k..].iter().map(|e| e.stat.clone()).collect());
    Ok(groups)
}

/// Settings shared by every retrain-and-rank evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    pub p: usize,
    pub policy: SlotPolicy,
    pub train: TrainConfig,
    pub metric: Metric,
    pub min_games: usize,
    /// K for recall; defaults to the truth list length.
    pub recall_k: Option<usize>,
    /// Bias/variance trade-off of the bin-size objective. Carried for the
    /// record only: bin counts are chosen by validation alignment, since no
    /// bias or variance estimator is defined.
    pub lambda: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            p: 5,
            policy: SlotPolicy::default(),
            train: TrainConfig::default(),
            metric: Metric::default(),
            min_games: 0,
            recall_k: None,
            lambda: 1.0,
        }
    }
}

/// Trains on both mirrored rows of every game and stamps the schema
/// fingerprint on the model.
pub fn train_on_games(
    games: &[GameRecord],
    schema: &StatSchema,
    p: usize,
    policy: SlotPolicy,
    config: &TrainConfig,
) -> Result<TreeEnsemble> {
    let samples = build_all(games, schema, p, policy)?;
    let data = TrainingData::from_paired(&samples)?;
    Ok(train(&data, config)?.with_schema_fingerprint(schema_fingerprint(schema, p)))
}

/// Scores per-game contributions against the truth under `config.metric`,
/// using M3 for season rankings and single-game MVPs for per-game labels.
pub fn alignment_score(
    per_game: &[Vec<PlayerContribution>],
    truth: &GroundTruth,
    config: &RefineConfig,
) -> Result<f64> {
    Ok(match config.metric {
        Metric::Acc => {
            let mvps = mvp::single_game_mvps(per_game)?
                .into_iter()
                .map(|(g, c)| (g, c.player_id))
                .collect();
            eval::accuracy(&mvps, truth)?
        }
        metric => {
            let ranking = mvp::rank_m3(per_game, config.min_games)?;
            match metric {
                Metric::Ard => eval::ard(&ranking, truth)?,
                Metric::Srcc => eval::srcc(&ranking, truth)?,
                _ => {
                    let k = config.recall_k.unwrap_or(truth.ranking()?.len());
                    eval::recall_at_k(&ranking, truth, k)?
                }
            }
        }
    })
}

/// Retrains under `schema`, attributes every game and scores the alignment.
pub fn evaluate_schema(
    games: &[GameRecord],
    schema: &StatSchema,
    truth: &GroundTruth,
    config: &RefineConfig,
) -> Result<f64> {
    let model = train_on_games(games, schema, config.p, config.policy, &config.train)?;
    let per_game = mvp::season_contributions(&model, games, schema, config.p, config.policy)?;
    alignment_score(&per_game, truth, config)
}

fn better(metric: Metric, a: f64, b: f64) -> std::cmp::Ordering {
    if metric.higher_is_better() {
        b.total_cmp(&a)
    } else {
        a.total_cmp(&b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetCandidate {
    /// Bit `i` set when group `i` is included.
    pub mask: u64,
    pub included: Vec<usize>,
    pub metric: Metric,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateFailure {
    pub mask: u64,
    pub included: Vec<usize>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetReport {
    pub groups: Vec<Vec<String>>,
    /// Best first.
    pub candidates: Vec<SubsetCandidate>,
    pub failures: Vec<CandidateFailure>,
}

impl SubsetReport {
    pub fn best(&self) -> Option<&SubsetCandidate> {
        self.candidates.first()
    }

    /// `schema` with every stat outside the candidate's groups removed.
    pub fn apply(&self, schema: &StatSchema, candidate: &SubsetCandidate) -> Result<StatSchema> {
        restrict_schema(schema, &self.groups, candidate.mask)
    }

    fn describe(&self, included: &[usize]) -> String {
        included
            .iter()
            .map(|&g| self.groups[g].join("+"))
            .collect::<Vec<_>>()
            .join(";")
    }

    /// CSV `candidate,included_groups,metric,score,rank`; failed candidates
    /// follow with score `failed` and an empty rank.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["candidate", "included_groups", "metric", "score", "rank"])?;
        for (i, c) in self.candidates.iter().enumerate() {
            wtr.write_record([
                c.mask.to_string(),
                self.describe(&c.included),
                c.metric.to_string(),
                c.score.to_string(),
                (i + 1).to_string(),
            ])?;
        }
        for f in &self.failures {
            let metric = self.candidates.first().map_or("", |c| c.metric.as_str());
            wtr.write_record([
                f.mask.to_string(),
                self.describe(&f.included),
                metric.to_string(),
                "failed".to_string(),
                String::new(),
            ])?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Marks every active stat outside the groups selected by `mask` removed.
pub fn restrict_schema(schema: &StatSchema, groups: &[Vec<String>], mask: u64) -> Result<StatSchema> {
    let mut out = schema.clone();
    for (g, group) in groups.iter().enumerate() {
        if mask >> g & 1 == 0 {
            for name in group {
                let idx = schema
                    .index_of(name)
                    .ok_or_else(|| CausalError::UnknownStat(name.clone()))?;
                out.set_removed(idx, true);
            }
        }
    }
    Ok(out)
}

/// Retrains and scores every non-empty inclusion pattern over `groups`.
///
/// Failures are recorded rather than aborting the search. Ordering is best
/// score first, then fewer groups, then lower mask, so reruns are identical.
pub fn subset_search(
    games: &[GameRecord],
    schema: &StatSchema,
    groups: &[Vec<String>],
    truth: &GroundTruth,
    config: &RefineConfig,
) -> Result<SubsetReport> {
    if groups.is_empty() || groups.len() > 16 {
        return Err(CausalError::BadGroups {
            got: groups.len(),
            max: 16,
        });
    }
    let mut seen = BTreeMap::new();
    for group in groups {
        for name in group {
            if schema.index_of(name).is_none() {
                return Err(CausalError::UnknownStat(name.clone()));
            }
            if seen.insert(name.as_str(), ()).is_some() {
                return Err(CausalError::OverlappingGroups(name.clone()));
            }
        }
    }

    let masks: Vec<u64> = (1..1u64 << groups.len()).collect();
    let outcomes: Vec<(u64, Result<f64>)> = masks
        .par_iter()
        .map(|&mask| {
            let result = restrict_schema(schema, groups, mask)
                .and_then(|s| evaluate_schema(games, &s, truth, config));
            (mask, result)
        })
        .collect();

    let included = |mask: u64| (0..groups.len()).filter(|g| mask >> g & 1 == 1).collect::<Vec<_>>();
    let mut candidates = Vec::new();
    let mut failures = Vec::new();
    for (mask, result) in outcomes {
        match result {
            Ok(score) => {
                debug!("candidate {mask:#b}: {} = {score}", config.metric);
                candidates.push(SubsetCandidate {
                    mask,
                    included: included(mask),
                    metric: config.metric,
                    score,
                });
            }
            Err(e) => {
                warn!("candidate {mask:#b} failed: {e}");
                failures.push(CandidateFailure {
                    mask,
                    included: included(mask),
                    message: e.to_string(),
                });
            }
        }
    }
    candidates.sort_by(|a, b| {
        better(config.metric, a.score, b.score)
            .then(a.included.len().cmp(&b.included.len()))
            .then(a.mask.cmp(&b.mask))
    });
    Ok(SubsetReport {
        groups: groups.to_vec(),
        candidates,
        failures,
    })
}

/// Quantile bins for one stat. `boundaries` are the finite upper edges of
/// buckets `1..`; the last bucket is open above.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinningSpec {
    pub stat: String,
    pub boundaries: Vec<f64>,
    pub t: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub source_quantiles: Vec<f64>,
}

impl BinningSpec {
    pub fn validate(&self) -> Result<()> {
        if self.t < 1 {
            return Err(CausalError::BadBinCount);
        }
        if self.boundaries.len() >= self.t {
            return Err(CausalError::BadSpec(format!(
                "{} boundaries for t = {}",
                self.boundaries.len(),
                self.t
            )));
        }
        if self.boundaries.iter().any(|b| !b.is_finite()) {
            return Err(CausalError::BadSpec("boundaries must be finite".into()));
        }
        if self.boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CausalError::BadSpec("boundaries must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("binning spec serializes")
    }

    /// Number of distinct buckets values can land in.
    pub fn effective_bins(&self) -> usize {
        self.boundaries.len() + 1
    }
}

/// Linear-interpolation (type 7) quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Boundaries at the empirical `j/t` quantiles, `j = 1..t−1`; repeated
/// boundaries collapse, so constant input lands entirely in bucket 1.
pub fn fit_bins(stat: &str, values: &[f64], t: usize) -> Result<BinningSpec> {
    if t < 1 {
        return Err(CausalError::BadBinCount);
    }
    if values.is_empty() {
        return Err(CausalError::NoValues);
    }
    if let Some(&v) = values.iter().find(|v| !v.is_finite()) {
        return Err(CausalError::NonFinite(v));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let source_quantiles: Vec<f64> = (1..t).map(|j| j as f64 / t as f64).collect();
    let mut boundaries: Vec<f64> = Vec::with_capacity(t.saturating_sub(1));
    for &q in &source_quantiles {
        let b = quantile_sorted(&sorted, q);
        if boundaries.last().is_none_or(|&last| b > last) {
            boundaries.push(b);
        }
    }
    Ok(BinningSpec {
        stat: stat.to_string(),
        boundaries,
        t,
        source_quantiles,
    })
}

/// 1-based bucket: 1 if `value ≤ B[1]`, j if `B[j−1] < value ≤ B[j]`, and
/// the top bucket above the last boundary.
pub fn apply_bins(value: f64, spec: &BinningSpec) -> usize {
    spec.boundaries.partition_point(|&b| b < value) + 1
}

/// Replaces the stat's values with bucket indices in every game and marks
/// it fuzzified; with a single bucket the stat is marked removed instead.
pub fn fuzzify(
    games: &[GameRecord],
    schema: &StatSchema,
    spec: &BinningSpec,
) -> Result<(Vec<GameRecord>, StatSchema)> {
    spec.validate()?;
    let idx = schema
        .index_of(&spec.stat)
        .ok_or_else(|| CausalError::UnknownStat(spec.stat.clone()))?;
    let mut out_schema = schema.clone();
    if spec.t == 1 {
        out_schema.set_removed(idx, true);
    } else {
        out_schema.set_fuzzified(idx, true);
    }
    let mut out = games.to_vec();
    for game in &mut out {
        for line in game.home.iter_mut().chain(game.away.iter_mut()) {
            line.values[idx] = apply_bins(line.values[idx], spec) as f64;
        }
    }
    Ok((out, out_schema))
}

/// Every value of one stat across all player lines, in game order.
pub fn stat_values(games: &[GameRecord], schema: &StatSchema, stat: &str) -> Result<Vec<f64>> {
    let idx = schema
        .index_of(stat)
        .ok_or_else(|| CausalError::UnknownStat(stat.to_string()))?;
    Ok(games
        .iter()
        .flat_map(|g| g.players())
        .map(|(_, l)| l.values[idx])
        .collect())
}

/// Bucket counts shipped as presets for well-known confounders.
pub fn bin_preset(stat: &str) -> Option<usize> {
    match stat {
        "+/-" => Some(3),
        "DRtg" => Some(8),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSelection {
    pub stat: String,
    pub best_t: usize,
    /// `(t, score)` for each candidate that trained successfully.
    pub scores: Vec<(usize, f64)>,
    pub failures: Vec<(usize, String)>,
}

/// Fits, applies and scores each candidate bucket count; the best
/// alignment wins, ties going to the smaller `t`.
pub fn select_bin_count(
    games: &[GameRecord],
    schema: &StatSchema,
    stat: &str,
    t_candidates: &[usize],
    truth: &GroundTruth,
    config: &RefineConfig,
) -> Result<BinSelection> {
    if t_candidates.is_empty() {
        return Err(CausalError::NoCandidates);
    }
    let values = stat_values(games, schema, stat)?;
    let mut ts = t_candidates.to_vec();
    ts.sort_unstable();
    ts.dedup();
    let outcomes: Vec<(usize, Result<f64>)> = ts
        .par_iter()
        .map(|&t| {
            let result = fit_bins(stat, &values, t)
                .and_then(|spec| fuzzify(games, schema, &spec))
                .and_then(|(g, s)| evaluate_schema(&g, &s, truth, config));
            (t, result)
        })
        .collect();
    let mut scores = Vec::new();
    let mut failures = Vec::new();
    for (t, r) in outcomes {
        match r {
            Ok(score) => scores.push((t, score)),
            Err(e) => {
                warn!("bin count {t} for `{stat}` failed: {e}");
                failures.push((t, e.to_string()));
            }
        }
    }
    let best_t = scores
        .iter()
        .min_by(|a, b| better(config.metric, a.1, b.1).then(a.0.cmp(&b.0)))
        .map(|s| s.0)
        .ok_or_else(|| {
            CausalError::AllCandidatesFailed(failures.first().map(|f| f.1.clone()).unwrap_or_default())
        })?;
    Ok(BinSelection {
        stat: stat.to_string(),
        best_t,
        scores,
        failures,
    })
}

fn check_joint(joint: &[Vec<f64>]) -> Result<usize> {
    let cols = joint.first().map_or(0, Vec::len);
    if joint.is_empty() || cols == 0 {
        return Err(CausalError::Joint("empty table".into()));
    }
    if joint.iter().any(|r| r.len() != cols) {
        return Err(CausalError::Joint("ragged table".into()));
    }
    let mut total = 0.0;
    for &v in joint.iter().flatten() {
        if !v.is_finite() {
            return Err(CausalError::Joint(format!("non-finite mass {v}")));
        }
        if v < 0.0 {
            return Err(CausalError::Joint(format!("negative mass {v}")));
        }
        total += v;
    }
    if (total - 1.0).abs() > 1e-12 {
        return Err(CausalError::Joint(format!("mass sums to {total}, not 1")));
    }
    Ok(cols)
}

/// `I(X;Y)` in nats for a joint table `p[x][y]`, with `0·log 0 = 0`.
pub fn mutual_information(joint: &[Vec<f64>]) -> Result<f64> {
    let cols = check_joint(joint)?;
    let px: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
    let py: Vec<f64> = (0..cols).map(|y| joint.iter().map(|r| r[y]).sum()).collect();
    let mut mi = 0.0;
    for (x, row) in joint.iter().enumerate() {
        for (y, &pxy) in row.iter().enumerate() {
            if pxy > 0.0 {
                mi += pxy * (pxy / (px[x] * py[y])).ln();
            }
        }
    }
    Ok(mi.max(0.0))
}

/// Joint of `(g(X), Y)`: rows of `joint` merged according to `g[x]`.
pub fn coarsen_joint(joint: &[Vec<f64>], g: &[usize]) -> Result<Vec<Vec<f64>>> {
    let cols = check_joint(joint)?;
    if g.len() != joint.len() {
        return Err(CausalError::Joint(format!(
            "coarsening maps {} values, table has {} rows",
            g.len(),
            joint.len()
        )));
    }
    let out_rows = g.iter().max().map_or(0, |m| m + 1);
    let mut out = vec![vec![0.0; cols]; out_rows];
    for (x, row) in joint.iter().enumerate() {
        for (y, &v) in row.iter().enumerate() {
            out[g[x]][y] += v;
        }
    }
    Ok(out)
}
