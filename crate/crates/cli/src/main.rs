use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Deserialize;

use mvp_shapley::attribution::write_attributions;
use mvp_shapley::causal::{
    self, bin_preset, feature_importance, fit_bins, fuzzify, group_features, select_bin_count,
    stat_values, subset_search, RefineConfig,
};
use mvp_shapley::dataset::{
    build_all, parse_box_scores, parse_box_scores_with_results, parse_results, schema_fingerprint,
    split_train_test, write_box_scores, GameRecord, SlotPolicy, StatSchema,
};
use mvp_shapley::eval::{
    accuracy, ard, baseline_rank, recall_at_k, srcc, write_report, GroundTruth, Metric, MetricRow,
    Scope, WeightSpec,
};
use mvp_shapley::harness::{generate_league, LeagueConfig};
use mvp_shapley::model::{evaluate_accuracy, train, TrainConfig, TrainingData, TreeEnsemble};
use mvp_shapley::mvp::{
    attribute_season, rank, read_mvps_csv, season_contributions, single_game_mvps,
    write_mvps_csv, Method, RankingResult,
};

/// Candidate bucket counts tried by `--bins stat=auto`.
const AUTO_BIN_COUNTS: std::ops::RangeInclusive<usize> = 1..=8;

#[derive(Parser)]
#[command(name = "mvp-shapley", version, about = "Shapley-value MVP ranking from box scores")]
struct Cli {
    /// JSON run configuration; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a box-score file.
    Ingest(IngestArgs),
    /// Train the win-loss model on a 9:1 game split.
    Train(TrainArgs),
    /// Rank players by single-game MVP, M1, M2, M3 or the weighted baseline.
    Rank(RankArgs),
    /// Search stat subsets or discretize a stat against ground truth.
    Refine(RefineArgs),
    /// Score a ranking against ground truth.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic league with known player values.
    Synth(SynthArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Box-score CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Stat schema JSON.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Sidecar results CSV (`game_id,home_win`).
    #[arg(long)]
    results: Option<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Where to write the model.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Roster slots per team; defaults to the largest roster in the data.
    #[arg(long)]
    p: Option<usize>,
    /// Fraction of games used for training.
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    num_trees: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
}

#[derive(Args)]
struct RankArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    method: Option<Method>,
    /// Ranking CSV to write.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    min_games: Option<usize>,
    /// Stat weights JSON for the baseline method.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Also write per-sample feature attributions to this CSV.
    #[arg(long)]
    attributions: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RefineMode {
    Subset,
    Bins,
}

#[derive(Args)]
struct RefineArgs {
    mode: RefineMode,
    #[command(flatten)]
    data: DataArgs,
    /// Model used for feature importance; trained on all games if absent.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    metric: Option<Metric>,
    /// K for recall.
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    min_games: Option<usize>,
    /// Number of feature groups for subset search.
    #[arg(long)]
    groups: Option<usize>,
    /// `stat=t`, `stat=auto`, or `stat` alone for the built-in preset.
    #[arg(long)]
    bins: Option<String>,
    #[arg(long)]
    num_trees: Option<usize>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Ranking CSV, or the per-game MVP CSV for per-game truth.
    #[arg(long)]
    ranking: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Report CSV; standard output if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report only this metric.
    #[arg(long)]
    metric: Option<Metric>,
    #[arg(long)]
    top_k: Option<usize>,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    teams: Option<usize>,
    #[arg(long)]
    games: Option<usize>,
}

/// Settings read from `--config`. Every field is optional; flags win.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    data: Option<PathBuf>,
    schema: Option<PathBuf>,
    results: Option<PathBuf>,
    model: Option<PathBuf>,
    truth: Option<PathBuf>,
    ranking: Option<PathBuf>,
    weights: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    p: Option<usize>,
    ratio: Option<f64>,
    method: Option<Method>,
    metric: Option<Metric>,
    top_k: Option<usize>,
    min_games: Option<usize>,
    groups: Option<usize>,
    bins: Option<String>,
    train: TrainConfig,
    league: LeagueConfig,
}

impl RunConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    fn merge_data(&mut self, args: DataArgs) {
        merge(&mut self.data, args.data);
        merge(&mut self.schema, args.schema);
        merge(&mut self.results, args.results);
    }

    /// Fails early when a referenced input file is missing.
    fn check_inputs(&self) -> Result<()> {
        let inputs = [
            ("data", &self.data),
            ("schema", &self.schema),
            ("results", &self.results),
            ("truth", &self.truth),
            ("ranking", &self.ranking),
            ("weights", &self.weights),
        ];
        for (name, path) in inputs {
            if let Some(path) = path {
                if !path.is_file() {
                    bail!("--{name}: no such file {}", path.display());
                }
            }
        }
        Ok(())
    }

    fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| anyhow!("a seed is required (--seed or `seed` in the config file)"))
    }
}

fn merge<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

fn require<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| anyhow!("missing --{flag} (or `{}` in the config file)", flag.replace('-', "_")))
}

fn load_schema(path: &Path) -> Result<StatSchema> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    StatSchema::from_json(&text).with_context(|| format!("parsing schema {}", path.display()))
}

fn load_games(cfg: &RunConfig) -> Result<(Vec<GameRecord>, StatSchema)> {
    let schema = load_schema(require(&cfg.schema, "schema")?)?;
    let data = require(&cfg.data, "data")?;
    let reader = BufReader::new(File::open(data).with_context(|| format!("opening {}", data.display()))?);
    let games = match &cfg.results {
        Some(path) => {
            let results = parse_results(BufReader::new(File::open(path)?))
                .with_context(|| format!("parsing results {}", path.display()))?;
            parse_box_scores_with_results(reader, &schema, &results)
        }
        None => parse_box_scores(reader, &schema),
    }
    .with_context(|| format!("parsing {}", data.display()))?;
    if games.is_empty() {
        bail!("{} contains no games", data.display());
    }
    info!("loaded {} games from {}", games.len(), data.display());
    Ok((games, schema))
}

fn largest_roster(games: &[GameRecord]) -> usize {
    games
        .iter()
        .map(|g| g.home.len().max(g.away.len()))
        .max()
        .unwrap_or(0)
}

fn load_model(path: &Path, schema: &StatSchema, p: Option<usize>) -> Result<(TreeEnsemble, usize)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let model = TreeEnsemble::deserialize(&text).with_context(|| format!("parsing model {}", path.display()))?;
    let block = 2 * schema.active_count();
    let p = match p {
        Some(p) => p,
        None if model.feature_count() % block == 0 => model.feature_count() / block,
        None => bail!(
            "model has {} features, not a multiple of 2 × {} active stats",
            model.feature_count(),
            schema.active_count()
        ),
    };
    model
        .verify_fingerprint(&schema_fingerprint(schema, p))
        .context("model was trained under a different schema or roster size")?;
    Ok((model, p))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn cmd_ingest(cfg: &RunConfig) -> Result<()> {
    let (games, schema) = load_games(cfg)?;
    let players: BTreeSet<&str> = games
        .iter()
        .flat_map(|g| g.players())
        .map(|(_, l)| l.player_id.as_str())
        .collect();
    println!(
        "games: {}, players: {}, stats: {}",
        games.len(),
        players.len(),
        schema.active_count()
    );
    Ok(())
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let seed = cfg.seed()?;
    let out = require(&cfg.model, "model")?;
    let (games, schema) = load_games(cfg)?;
    let p = cfg.p.unwrap_or_else(|| largest_roster(&games));
    let policy = SlotPolicy::default();
    let ratio = cfg.ratio.unwrap_or(0.9);

    let samples = build_all(&games, &schema, p, policy)?;
    let (train_set, test_set) = split_train_test(&samples, ratio, seed)?;
    let config = TrainConfig { seed, ..cfg.train.clone() };
    let model = train(&TrainingData::from_paired(&train_set)?, &config)?
        .with_schema_fingerprint(schema_fingerprint(&schema, p));
    let acc = evaluate_accuracy(&model, &TrainingData::from_paired(&test_set)?)?;
    write_text(out, &model.serialize())?;
    info!("wrote model to {}", out.display());
    println!(
        "held-out accuracy: {acc:.6} ({} train games, {} test games)",
        train_set.len(),
        test_set.len()
    );
    Ok(())
}

fn cmd_rank(cfg: &RunConfig, attributions: Option<&Path>) -> Result<()> {
    let method = *require(&cfg.method, "method")?;
    let out = require(&cfg.out, "out")?;
    let (games, schema) = load_games(cfg)?;
    let min_games = cfg.min_games.unwrap_or(0);

    if method == Method::Baseline {
        let path = require(&cfg.weights, "weights")?;
        let weights = WeightSpec::from_json(&fs::read_to_string(path)?)
            .with_context(|| format!("parsing weights {}", path.display()))?;
        let ranking = baseline_rank(&games, &schema, &weights, min_games)?;
        ranking.write_csv(create(out)?)?;
        return report_ranking(&ranking, out);
    }

    let (model, p) = load_model(require(&cfg.model, "model")?, &schema, cfg.p)?;
    let policy = SlotPolicy::default();
    if let Some(path) = attributions {
        let vectors: Vec<_> = attribute_season(&model, &games, &schema, p, policy)?
            .into_iter()
            .flat_map(|g| [g.first, g.second])
            .collect();
        write_attributions(create(path)?, &vectors)?;
        info!("wrote {} attribution rows to {}", vectors.len(), path.display());
    }
    let per_game = season_contributions(&model, &games, &schema, p, policy)?;
    if method == Method::Single {
        let mvps = single_game_mvps(&per_game)?;
        write_mvps_csv(create(out)?, &mvps)?;
        println!("wrote {} single-game MVPs to {}", mvps.len(), out.display());
        return Ok(());
    }
    let ranking = rank(&per_game, method, min_games)?;
    ranking.write_csv(create(out)?)?;
    report_ranking(&ranking, out)
}

fn report_ranking(ranking: &RankingResult, out: &Path) -> Result<()> {
    let top = ranking.top().expect("rankings are never empty");
    println!(
        "wrote {} {} ranks to {}; first: {} ({})",
        ranking.entries.len(),
        ranking.method,
        out.display(),
        top.player_id,
        top.score
    );
    Ok(())
}

fn load_truth(path: &Path) -> Result<GroundTruth> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    GroundTruth::read_csv(BufReader::new(file)).with_context(|| format!("parsing truth {}", path.display()))
}

enum BinRequest {
    Fixed(usize),
    Auto,
}

fn parse_bins(text: &str) -> Result<(String, BinRequest)> {
    let (stat, value) = match text.rsplit_once('=') {
        Some((stat, value)) => (stat.trim(), Some(value.trim())),
        None => (text.trim(), None),
    };
    if stat.is_empty() {
        bail!("--bins expects `stat=t`, `stat=auto` or a preset stat name");
    }
    let request = match value {
        Some("auto") => BinRequest::Auto,
        Some("preset") | None => BinRequest::Fixed(
            bin_preset(stat).ok_or_else(|| anyhow!("no bin preset for `{stat}`"))?,
        ),
        Some(t) => BinRequest::Fixed(t.parse().with_context(|| format!("bad bin count `{t}`"))?),
    };
    Ok((stat.to_string(), request))
}

fn cmd_refine(cfg: &RunConfig, mode: RefineMode) -> Result<()> {
    let seed = cfg.seed()?;
    let out = require(&cfg.out, "out")?;
    let (games, schema) = load_games(cfg)?;
    let truth = match &cfg.truth {
        Some(path) => Some(load_truth(path)?),
        None => None,
    };
    let metric = cfg.metric.unwrap_or(match truth.as_ref().map(GroundTruth::scope) {
        Some(Scope::PerGame) => Metric::Acc,
        _ => Metric::Srcc,
    });
    let refine = RefineConfig {
        p: cfg.p.unwrap_or_else(|| largest_roster(&games)),
        policy: SlotPolicy::default(),
        train: TrainConfig { seed, ..cfg.train.clone() },
        metric,
        min_games: cfg.min_games.unwrap_or(0),
        recall_k: cfg.top_k,
        ..RefineConfig::default()
    };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    match mode {
        RefineMode::Subset => {
            let truth = truth.ok_or_else(|| anyhow!("subset search needs --truth"))?;
            let model = match &cfg.model {
                Some(path) => load_model(path, &schema, Some(refine.p))?.0,
                None => causal::train_on_games(&games, &schema, refine.p, refine.policy, &refine.train)?,
            };
            let vectors: Vec<_> = attribute_season(&model, &games, &schema, refine.p, refine.policy)?
                .into_iter()
                .flat_map(|g| [g.first, g.second])
                .collect();
            let importance = feature_importance(&vectors, &schema, refine.p)?;
            importance.write_csv(create(&out.join("importance.csv"))?)?;

            let k = cfg.groups.unwrap_or(3);
            if k < 2 {
                bail!("--groups must be at least 2");
            }
            let groups = group_features(&importance, k - 1)?;
            let report = subset_search(&games, &schema, &groups, &truth, &refine)?;
            report.write_csv(create(&out.join("refinement.csv"))?)?;
            let best = report
                .best()
                .ok_or_else(|| anyhow!("every candidate failed; see refinement.csv"))?;
            let refined = report.apply(&schema, best)?;
            write_text(&out.join("schema.json"), &refined.to_json())?;
            let kept: Vec<String> = best.included.iter().map(|&g| groups[g].join("+")).collect();
            println!(
                "{} candidates; best keeps [{}] with {} = {}",
                report.candidates.len() + report.failures.len(),
                kept.join(", "),
                best.metric,
                best.score
            );
        }
        RefineMode::Bins => {
            let spec_text = require(&cfg.bins, "bins")?;
            let (stat, request) = parse_bins(spec_text)?;
            let t = match request {
                BinRequest::Fixed(t) => t,
                BinRequest::Auto => {
                    let truth = truth.ok_or_else(|| anyhow!("--bins {stat}=auto needs --truth"))?;
                    let ts: Vec<usize> = AUTO_BIN_COUNTS.collect();
                    let selection = select_bin_count(&games, &schema, &stat, &ts, &truth, &refine)?;
                    let mut w = create(&out.join("bins.csv"))?;
                    writeln!(w, "t,metric,score")?;
                    for (t, score) in &selection.scores {
                        writeln!(w, "{t},{metric},{score}")?;
                    }
                    for (t, _) in &selection.failures {
                        writeln!(w, "{t},{metric},failed")?;
                    }
                    w.flush()?;
                    selection.best_t
                }
            };
            let spec = fit_bins(&stat, &stat_values(&games, &schema, &stat)?, t)?;
            let (binned, refined) = fuzzify(&games, &schema, &spec)?;
            write_text(&out.join("binning.json"), &spec.to_json())?;
            write_text(&out.join("schema.json"), &refined.to_json())?;
            write_box_scores(create(&out.join("box_scores.csv"))?, &binned, &refined)?;
            let idx = refined.index_of(&stat).expect("binned stat is in the schema");
            let state = if refined.is_removed(idx) { "removed" } else { "fuzzified" };
            println!(
                "{stat}: t = {t}, {} buckets, {state}",
                spec.effective_bins()
            );
        }
    }
    Ok(())
}

fn cmd_evaluate(cfg: &RunConfig) -> Result<()> {
    let truth = load_truth(require(&cfg.truth, "truth")?)?;
    let predicted = require(&cfg.ranking, "ranking")?;
    let open = || -> Result<BufReader<File>> {
        Ok(BufReader::new(
            File::open(predicted).with_context(|| format!("opening {}", predicted.display()))?,
        ))
    };
    let wanted = |m: Metric| cfg.metric.is_none_or(|only| only == m);
    let mut rows = Vec::new();
    match truth.scope() {
        Scope::Season => {
            let ranking = RankingResult::read_csv(open()?)
                .with_context(|| format!("parsing ranking {}", predicted.display()))?;
            let method = ranking.method.to_string();
            let mut push = |metric: Metric, value: f64| {
                rows.push(MetricRow {
                    metric: metric.to_string(),
                    value,
                    method: method.clone(),
                    scope: Scope::Season,
                })
            };
            if wanted(Metric::Ard) {
                push(Metric::Ard, ard(&ranking, &truth)?);
            }
            if wanted(Metric::Srcc) {
                push(Metric::Srcc, srcc(&ranking, &truth)?);
            }
            if wanted(Metric::Recall) {
                let k = cfg
                    .top_k
                    .unwrap_or_else(|| truth.ranking().map_or(0, <[_]>::len).min(ranking.entries.len()));
                push(Metric::Recall, recall_at_k(&ranking, &truth, k)?);
            }
            if wanted(Metric::Acc) && cfg.metric.is_some() {
                bail!("accuracy needs per-game truth");
            }
        }
        Scope::PerGame => {
            if !wanted(Metric::Acc) {
                bail!("per-game truth supports only the acc metric");
            }
            let mvps = read_mvps_csv(open()?)
                .with_context(|| format!("parsing per-game MVPs {}", predicted.display()))?;
            rows.push(MetricRow {
                metric: Metric::Acc.to_string(),
                value: accuracy(&mvps, &truth)?,
                method: Method::Single.to_string(),
                scope: Scope::PerGame,
            });
        }
    }
    match &cfg.out {
        Some(path) => {
            write_report(create(path)?, &rows)?;
            for r in &rows {
                println!("{}: {}", r.metric, r.value);
            }
        }
        None => write_report(std::io::stdout().lock(), &rows)?,
    }
    Ok(())
}

fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    let seed = cfg.seed()?;
    let out = require(&cfg.out, "out")?;
    let league = generate_league(&LeagueConfig { seed, ..cfg.league.clone() })?;
    let schema = league.schema();
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_box_scores(create(&out.join("box_scores.csv"))?, &league.games, &schema)?;
    league.write_skills_csv(create(&out.join("skills.csv"))?)?;
    write_text(&out.join("schema.json"), &schema.to_json())?;
    league
        .planted_truth(league.skills.len())
        .write_csv(create(&out.join("truth.csv"))?)?;
    let best = league.best_player();
    println!(
        "games: {}, players: {}; planted MVP {} (true value {:.3})",
        league.games.len(),
        league.skills.len(),
        best.player_id,
        best.true_value
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest(args) => {
            cfg.merge_data(args.data);
            cfg.check_inputs()?;
            cmd_ingest(&cfg)
        }
        Command::Train(args) => {
            cfg.merge_data(args.data);
            merge(&mut cfg.model, args.model);
            merge(&mut cfg.seed, args.seed);
            merge(&mut cfg.p, args.p);
            merge(&mut cfg.ratio, args.ratio);
            if let Some(n) = args.num_trees {
                cfg.train.num_trees = n;
            }
            if let Some(d) = args.max_depth {
                cfg.train.max_depth = d;
            }
            cfg.check_inputs()?;
            cmd_train(&cfg)
        }
        Command::Rank(args) => {
            cfg.merge_data(args.data);
            merge(&mut cfg.model, args.model);
            merge(&mut cfg.method, args.method);
            merge(&mut cfg.out, args.out);
            merge(&mut cfg.p, args.p);
            merge(&mut cfg.min_games, args.min_games);
            merge(&mut cfg.weights, args.weights);
            cfg.check_inputs()?;
            cmd_rank(&cfg, args.attributions.as_deref())
        }
        Command::Refine(args) => {
            cfg.merge_data(args.data);
            merge(&mut cfg.model, args.model);
            merge(&mut cfg.truth, args.truth);
            merge(&mut cfg.out, args.out);
            merge(&mut cfg.seed, args.seed);
            merge(&mut cfg.p, args.p);
            merge(&mut cfg.metric, args.metric);
            merge(&mut cfg.top_k, args.top_k);
            merge(&mut cfg.min_games, args.min_games);
            merge(&mut cfg.groups, args.groups);
            merge(&mut cfg.bins, args.bins);
            if let Some(n) = args.num_trees {
                cfg.train.num_trees = n;
            }
            cfg.check_inputs()?;
            cmd_refine(&cfg, args.mode)
        }
        Command::Evaluate(args) => {
            merge(&mut cfg.ranking, args.ranking);
            merge(&mut cfg.truth, args.truth);
            merge(&mut cfg.out, args.out);
            merge(&mut cfg.metric, args.metric);
            merge(&mut cfg.top_k, args.top_k);
            cfg.check_inputs()?;
            cmd_evaluate(&cfg)
        }
        Command::Synth(args) => {
            merge(&mut cfg.out, args.out);
            merge(&mut cfg.seed, args.seed);
            if let Some(t) = args.teams {
                cfg.league.teams = t;
            }
            if let Some(g) = args.games {
                cfg.league.games = g;
            }
            cmd_synth(&cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
