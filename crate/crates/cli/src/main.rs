mod config;

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use semauto::autoencoder::gradcheck;
use semauto::dataset::{parse_genres, parse_movielens, GenreMap, InteractionDataset};
use semauto::evaluation::{run_cold_experiment, CellStatus};
use semauto::io_util::write_atomic;
use semauto::kg::sparql::SparqlError;
use semauto::kg::{
    extract_features_from_path, fetch_features_sparql, load_feature_map, parse_mapping, save_feature_map,
    EntityMapping, ItemFeatureMap,
};
use semauto::pipeline::{train_user, train_users};
use semauto::profiles::{complete_profile, load_profiles, save_profiles, FeatureProfile, NeighborIndex};
use semauto::recommender::{recommend_top_n, unrated_candidates};
use semauto::{Error, UserId};

use config::{Config, Overrides};

const GRADCHECK_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Parser)]
#[command(
    name = "semauto",
    version,
    about = "Knowledge-graph shaped autoencoders for cold-start recommendation"
)]
struct Cli {
    /// TOML file with [paths], [train], [protocol], [features] and [profiles] sections
    #[arg(long, global = true, env = "SEMAUTO_CONFIG")]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true, env = "SEMAUTO_THREADS")]
    threads: Option<usize>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and validate the ratings, movies and mapping files
    Ingest,
    /// Build the item feature map from an N-Triples dump or a SPARQL endpoint
    ExtractFeatures,
    /// Train every user's autoencoder and save the normalized profiles
    TrainProfiles {
        /// Also write each user's trained network into this directory
        #[arg(long)]
        dump_nets: Option<PathBuf>,
    },
    /// Print a top-N list for one user as CSV
    Recommend {
        #[arg(long)]
        user: u32,
        /// List length (default: protocol.top_n)
        #[arg(long)]
        top: Option<usize>,
    },
    /// Run the cold-user experiment and write the report files
    Evaluate,
    /// Compare analytic and numeric gradients on random networks
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        networks: usize,
    },
}

#[derive(Debug)]
enum Failure {
    Validation(String),
    Runtime(String),
    Partial(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Partial(_) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Failure::Validation(_) => "validation",
            Failure::Runtime(_) => "runtime",
            Failure::Partial(_) => "partial",
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Runtime(m) | Failure::Partial(m) => m,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.message())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::Io { .. } | Error::Diverged { .. } => Failure::Runtime(message),
            Error::Sparql(SparqlError::Partial { .. }) => Failure::Partial(message),
            Error::Sparql(SparqlError::Config(_)) => Failure::Validation(message),
            _ => Failure::Validation(message),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn required<'a, T: ?Sized>(value: Option<&'a T>, key: &str) -> Result<&'a T, Failure> {
    value.ok_or_else(|| Failure::Validation(format!("missing required setting {key}")))
}

fn print_json(value: &serde_json::Value) -> io::Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)
}

fn load_ratings(cfg: &Config) -> Result<InteractionDataset, Failure> {
    let path = required(cfg.paths.ratings.as_deref(), "paths.ratings")?;
    let (ratings, stats) = parse_movielens(path, &cfg.paths.ratings_separator)?;
    log::info!("{} ratings from {}", stats.ratings, path.display());
    Ok(ratings)
}

fn load_genres(cfg: &Config) -> Result<GenreMap, Failure> {
    let path = required(cfg.paths.movies.as_deref(), "paths.movies")?;
    Ok(parse_genres(path)?.0)
}

fn load_mapping(cfg: &Config) -> Result<EntityMapping, Failure> {
    let path = required(cfg.paths.mapping.as_deref(), "paths.mapping")?;
    let (mapping, stats) = parse_mapping(path)?;
    if stats.rejected > 0 {
        log::warn!("{} mapping line(s) rejected in {}", stats.rejected, path.display());
    }
    Ok(mapping)
}

/// Extracts from the dump when one is configured, otherwise from the endpoint.
fn extract(cfg: &Config) -> Result<ItemFeatureMap, Failure> {
    let mapping = load_mapping(cfg)?;
    let selection = cfg.selection();
    if let Some(dump) = &cfg.paths.triples {
        let (map, stats) = extract_features_from_path(dump, &mapping, &selection)?;
        log::info!(
            "{} lines, {} triples, {} malformed, {} matched",
            stats.lines,
            stats.triples,
            stats.malformed,
            stats.matched
        );
        return Ok(map);
    }
    let endpoint = required(cfg.paths.endpoint.as_deref(), "paths.triples or paths.endpoint")?;
    match fetch_features_sparql(&cfg.sparql(endpoint), &mapping, &selection) {
        Ok(map) => Ok(map),
        Err(SparqlError::Partial {
            completed,
            failed_batches,
            total_batches,
            cause,
        }) => {
            if let Some(path) = &cfg.paths.feature_map {
                let partial = path.with_extension("partial");
                save_feature_map(&completed, &partial)?;
                log::warn!("partial feature map written to {}", partial.display());
            }
            Err(Failure::Partial(format!(
                "{failed_batches} of {total_batches} SPARQL batch(es) failed: {cause}"
            )))
        }
        Err(e) => Err(Error::from(e).into()),
    }
}

/// Loads the saved feature map when it exists, otherwise extracts one.
fn feature_map(cfg: &Config) -> Result<ItemFeatureMap, Failure> {
    match &cfg.paths.feature_map {
        Some(path) if path.exists() => Ok(load_feature_map(path)?),
        _ => extract(cfg),
    }
}

fn ingest(cfg: &Config) -> Outcome {
    let path = required(cfg.paths.ratings.as_deref(), "paths.ratings")?;
    let (ratings, stats) = parse_movielens(path, &cfg.paths.ratings_separator)?;
    let mut report = json!({
        "ratings": stats,
        "users": ratings.user_count(),
        "items": ratings.items().len(),
    });
    if let Some(movies) = &cfg.paths.movies {
        report["genres"] = json!(parse_genres(movies)?.1);
    }
    if let Some(mapping_path) = &cfg.paths.mapping {
        let (mapping, stats) = parse_mapping(mapping_path)?;
        let mapped = ratings.items().iter().filter(|&&i| mapping.get(i).is_some()).count();
        report["mapping"] = json!(stats);
        report["mapped_rated_items"] = json!(mapped);
    }
    print_json(&report)?;
    Ok(())
}

fn extract_features(cfg: &Config) -> Outcome {
    let out = required(cfg.paths.feature_map.as_deref(), "paths.feature_map")?;
    let map = extract(cfg)?;
    save_feature_map(&map, out)?;
    print_json(&json!({
        "items": map.item_count(),
        "features": map.vocabulary().len(),
        "memberships": map.membership_count(),
        "output": out,
    }))?;
    Ok(())
}

fn train_profiles(cfg: &Config, dump_nets: Option<&Path>) -> Outcome {
    let out = required(cfg.paths.profiles.as_deref(), "paths.profiles")?;
    let ratings = load_ratings(cfg)?;
    let features = feature_map(cfg)?;
    let profile_config = cfg.profile_config();
    let outcome = train_users(ratings.users(), &ratings, &features, &profile_config);
    let profiles: Vec<FeatureProfile> = outcome.profiles.values().cloned().collect();
    save_profiles(&profiles, &features, out)?;
    if let Some(dir) = dump_nets {
        outcome.profiles.par_iter().try_for_each(|(&user, _)| {
            let trained = train_user(user, &ratings, &features, &profile_config)?;
            write_atomic(&dir.join(format!("user_{user}.net")), |w| {
                trained.net.write_dump(&features, w)
            })
        })?;
    }
    for cause in outcome.failures.values() {
        log::warn!("{cause}");
    }
    print_json(&json!({ "summary": outcome.summary, "output": out }))?;
    if outcome.summary.failed > 0 {
        return Err(Failure::Partial(format!(
            "{} user(s) failed to train",
            outcome.summary.failed
        )));
    }
    Ok(())
}

fn recommend(cfg: &Config, user: UserId, top: usize) -> Outcome {
    let ratings = load_ratings(cfg)?;
    let features = feature_map(cfg)?;
    let profile_config = cfg.profile_config();
    let own = train_user(user, &ratings, &features, &profile_config)?.profile;
    let k = cfg.profiles.k;
    let profile = if k == 0 {
        own
    } else {
        let others: BTreeMap<UserId, FeatureProfile> = match &cfg.paths.profiles {
            Some(path) if path.exists() => load_profiles(path, &features)?
                .into_iter()
                .map(|p| (p.user, p))
                .collect(),
            _ => train_users(ratings.users(), &ratings, &features, &profile_config).profiles,
        };
        let neighbors = NeighborIndex::new(others.values()).top_k(&own, k);
        complete_profile(&own, &neighbors, |u| others.get(&u), k, cfg.profiles.completion)?
    };
    let candidates = unrated_candidates(user, &ratings, &features);
    let list = recommend_top_n(&profile, candidates, &features, top);
    list.write_csv(&mut io::stdout().lock())?;
    Ok(())
}

fn evaluate(cfg: &Config) -> Outcome {
    let seed = cfg.protocol.seed.unwrap_or_else(|| {
        let s = rand::random();
        log::warn!("no seed configured; using generated seed {s}");
        s
    });
    let experiment = cfg.experiment_config(seed);
    experiment.validate()?;
    let ratings = load_ratings(cfg)?;
    let genres = load_genres(cfg)?;
    let features = feature_map(cfg)?;
    let output = run_cold_experiment(&ratings, &features, &genres, &experiment)?;
    let dir = &cfg.paths.out_dir;
    let report = &output.report;
    write_atomic(&dir.join("report.csv"), |w| report.write_csv(w))?;
    write_atomic(&dir.join("report.json"), |w| report.write_json(w))?;
    write_atomic(&dir.join("plot_f1.csv"), |w| report.write_plot_csv(w))?;
    write_atomic(&dir.join("timings.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &output.timings)?;
        writeln!(w)
    })?;
    log::info!("report written to {}", dir.display());
    let failed: Vec<String> = report
        .cells
        .iter()
        .filter_map(|c| match &c.status {
            CellStatus::Failed { cause } => Some(format!("{} n={}: {cause}", c.method, c.n)),
            CellStatus::Ok => None,
        })
        .collect();
    if !failed.is_empty() {
        return Err(Failure::Partial(format!(
            "{} report cell(s) failed: {}",
            failed.len(),
            failed.join("; ")
        )));
    }
    Ok(())
}

fn run_gradcheck(cfg: &Config, networks: usize) -> Outcome {
    let report = gradcheck::run(networks, cfg.protocol.seed.unwrap_or(0));
    print_json(&json!({
        "networks": report.networks,
        "edges_checked": report.edges_checked,
        "max_relative_error": report.max_relative_error,
        "tolerance": GRADCHECK_TOLERANCE,
    }))?;
    if report.max_relative_error < GRADCHECK_TOLERANCE {
        Ok(())
    } else {
        Err(Failure::Runtime(format!(
            "max relative gradient error {:e} exceeds {GRADCHECK_TOLERANCE:e}",
            report.max_relative_error
        )))
    }
}

fn run(cli: Cli) -> Outcome {
    let mut cfg = Config::load(cli.config.as_deref()).map_err(Failure::Validation)?;
    cfg.apply(&cli.overrides);
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    match cli.command {
        Command::Ingest => ingest(&cfg),
        Command::ExtractFeatures => extract_features(&cfg),
        Command::TrainProfiles { dump_nets } => train_profiles(&cfg, dump_nets.as_deref()),
        Command::Recommend { user, top } => recommend(&cfg, UserId(user), top.unwrap_or(cfg.protocol.top_n)),
        Command::Evaluate => evaluate(&cfg),
        Command::Gradcheck { networks } => run_gradcheck(&cfg, networks),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            let body = json!({
                "error": failure.kind(),
                "message": failure.message(),
                "exit_code": failure.code(),
            });
            eprintln!("{body}");
            ExitCode::from(failure.code())
        }
    }
}
