//! The cold-user experiment: for every profile size `n`, retrain, complete
//! profiles for each neighbourhood size `k`, recommend and score.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::baselines::{popularity, popularity_ranking, random_ranking};
use super::metrics::{
    err_ia_at, f1, ndcg_at, precision_at, recall_at, relevant_set, test_ratings, topic_distribution, RelevantSet,
    TestRatings,
};
use super::protocol::{
    check_conservation, make_cold_scenario, restore_n_ratings, select_cold_candidates, training_set,
};
use crate::dataset::{holdout_split, GenreMap, InteractionDataset, MAX_STARS, MIN_STARS};
use crate::error::{Error, Result};
use crate::ids::{ItemId, UserId};
use crate::kg::ItemFeatureMap;
use crate::pipeline::{train_users, ProfileConfig, TrainingSummary};
use crate::profiles::{complete_profile, CompletionMode, FeatureProfile, NeighborIndex};
use crate::recommender::{recommend_top_n, unrated_candidates, RankedList};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub train_fraction: f64,
    pub min_test_ratings: usize,
    pub cold_fraction: f64,
    pub n_values: Vec<usize>,
    pub k_values: Vec<usize>,
    /// List length `N` for every metric.
    pub top_n: usize,
    /// Minimum test stars for an item to count as relevant.
    pub relevance_threshold: u8,
    pub seed: u64,
    pub completion: CompletionMode,
    /// Also evaluate the random and popularity rankers.
    pub baselines: bool,
    pub profile: ProfileConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            min_test_ratings: 10,
            cold_fraction: 0.25,
            n_values: vec![2, 5, 10],
            k_values: vec![10, 100],
            top_n: 10,
            relevance_threshold: 4,
            seed: 0,
            completion: CompletionMode::default(),
            baselines: true,
            profile: ProfileConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Contract(msg));
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction {} outside (0, 1)", self.train_fraction));
        }
        if !(self.cold_fraction > 0.0 && self.cold_fraction <= 1.0) {
            return bad(format!("cold_fraction {} outside (0, 1]", self.cold_fraction));
        }
        if self.min_test_ratings == 0 {
            return bad("min_test_ratings must be at least 1".into());
        }
        if self.n_values.is_empty() || self.n_values.contains(&0) {
            return bad("n_values must be non-empty and positive".into());
        }
        if self.k_values.is_empty() || self.k_values.contains(&0) {
            return bad("k_values must be non-empty and positive".into());
        }
        if self.top_n == 0 {
            return bad("top_n must be at least 1".into());
        }
        if !(MIN_STARS..=MAX_STARS).contains(&self.relevance_threshold) {
            return bad(format!(
                "relevance_threshold {} outside {MIN_STARS}..={MAX_STARS}",
                self.relevance_threshold
            ));
        }
        self.profile.train.validate()?;
        if !(self.profile.epsilon >= 0.0 && self.profile.epsilon < 0.5) {
            return bad(format!("epsilon {} outside [0, 0.5)", self.profile.epsilon));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    SemAuto,
    Random,
    Popularity,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::SemAuto => "sem-auto",
            Method::Random => "random",
            Method::Popularity => "popularity",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed { cause: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricMeans {
    /// Harmonic mean of the mean precision and mean recall.
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub ndcg: f64,
    pub err_ia: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CellCounts {
    /// Users with a recommendation list.
    pub evaluated: usize,
    /// Cold users without a trained profile.
    pub not_trainable: usize,
    /// Evaluated users with no relevant test item; left out of precision,
    /// recall and F1.
    pub no_relevant: usize,
    /// Recommended items without genre information.
    pub missing_genres: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserMetrics {
    pub user: UserId,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub ndcg: f64,
    pub err_ia: f64,
    pub list_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellReport {
    pub method: Method,
    pub n: usize,
    /// Neighbourhood size; `None` for the baselines.
    pub k: Option<usize>,
    #[serde(flatten)]
    pub status: CellStatus,
    pub metrics: Option<MetricMeans>,
    pub counts: CellCounts,
    pub users: Vec<UserMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub n: usize,
    pub retained_users: usize,
    /// Cold users with fewer than `n` frozen ratings.
    pub dropped: Vec<UserId>,
    pub conservation_ok: bool,
    pub cold_training: TrainingSummary,
    pub not_trainable: BTreeMap<UserId, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub users: usize,
    pub items: usize,
    pub ratings: usize,
    pub mapped_items: usize,
    pub features: usize,
    pub train_ratings: usize,
    pub test_ratings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub config: ExperimentConfig,
    pub dataset: DatasetSummary,
    pub cold_candidates: usize,
    pub cold_users: Vec<UserId>,
    pub warm_training: TrainingSummary,
    pub runs: Vec<RunReport>,
    pub cells: Vec<CellReport>,
}

/// Wall-clock seconds per stage. Kept apart from the report so the report
/// body stays reproducible.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timings {
    pub setup_secs: f64,
    pub warm_training_secs: f64,
    /// `(n, seconds)` per profile size.
    pub runs: Vec<(usize, f64)>,
    pub total_secs: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: EvaluationReport,
    pub timings: Timings,
}

impl EvaluationReport {
    pub fn cell(&self, method: Method, n: usize, k: Option<usize>) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.method == method && c.n == n && c.k == k)
    }

    /// One row per cell. Metric columns carry the list length in their names.
    pub fn write_csv(&self, out: &mut dyn Write) -> io::Result<()> {
        let n = self.config.top_n;
        writeln!(
            out,
            "method,#ratings,k,f1@{n},precision@{n},recall@{n},nDCG@{n},ERR-IA@{n},users,status"
        )?;
        for c in &self.cells {
            let k = c.k.map_or_else(|| "-".to_owned(), |k| k.to_string());
            let metrics = match &c.metrics {
                Some(m) => format!(
                    "{:.9},{:.9},{:.9},{:.9},{:.9}",
                    m.f1, m.precision, m.recall, m.ndcg, m.err_ia
                ),
                None => ",,,,".to_owned(),
            };
            let status = match &c.status {
                CellStatus::Ok => "ok".to_owned(),
                CellStatus::Failed { cause } => format!("failed: {}", cause.replace([',', '\n'], ";")),
            };
            writeln!(
                out,
                "{},{},{k},{metrics},{},{status}",
                c.method, c.n, c.counts.evaluated
            )?;
        }
        Ok(())
    }

    pub fn write_json(&self, out: &mut dyn Write) -> io::Result<()> {
        serde_json::to_writer_pretty(&mut *out, self)?;
        writeln!(out)
    }

    /// F1@N against k, one row per SEM-AUTO cell, for plotting curves per n.
    pub fn write_plot_csv(&self, out: &mut dyn Write) -> io::Result<()> {
        writeln!(out, "n,k,f1@{}", self.config.top_n)?;
        for c in self.cells.iter().filter(|c| c.method == Method::SemAuto) {
            if let (Some(k), Some(m)) = (c.k, &c.metrics) {
                writeln!(out, "{},{k},{:.9}", c.n, m.f1)?;
            }
        }
        Ok(())
    }
}

/// What a cold user is judged against.
struct UserContext {
    user: UserId,
    candidates: Vec<ItemId>,
    test: TestRatings,
    relevant: RelevantSet,
    topics: BTreeMap<String, f64>,
}

fn user_metrics(list: &RankedList, ctx: &UserContext, genres: &GenreMap, n: usize) -> Result<(UserMetrics, usize)> {
    let ranked: Vec<ItemId> = list.items().collect();
    let (precision, recall) = if ctx.relevant.is_empty() {
        (None, None)
    } else {
        (
            Some(precision_at(&ranked, &ctx.relevant, n)),
            recall_at(&ranked, &ctx.relevant, n),
        )
    };
    let err = err_ia_at(&ranked, &ctx.test, genres, &ctx.topics, n)?;
    let metrics = UserMetrics {
        user: ctx.user,
        precision,
        recall,
        f1: precision.zip(recall).map(|(p, r)| f1(p, r)),
        ndcg: ndcg_at(&ranked, &ctx.test, n),
        err_ia: err.value,
        list_len: ranked.len(),
    };
    Ok((metrics, err.missing_genres))
}

fn mean<I: Iterator<Item = f64>>(values: I) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

fn summarize(
    method: Method,
    n: usize,
    k: Option<usize>,
    not_trainable: usize,
    results: Result<Vec<(UserMetrics, usize)>>,
) -> CellReport {
    let mut cell = CellReport {
        method,
        n,
        k,
        status: CellStatus::Ok,
        metrics: None,
        counts: CellCounts {
            not_trainable,
            ..CellCounts::default()
        },
        users: Vec::new(),
    };
    let results = match results {
        Ok(r) => r,
        Err(e) => {
            cell.status = CellStatus::Failed { cause: e.to_string() };
            return cell;
        }
    };
    cell.counts.evaluated = results.len();
    cell.counts.missing_genres = results.iter().map(|(_, m)| m).sum();
    cell.users = results.into_iter().map(|(u, _)| u).collect();
    cell.counts.no_relevant = cell.users.iter().filter(|u| u.precision.is_none()).count();
    let precision = mean(cell.users.iter().filter_map(|u| u.precision));
    let recall = mean(cell.users.iter().filter_map(|u| u.recall));
    let ndcg = mean(cell.users.iter().map(|u| u.ndcg));
    let err_ia = mean(cell.users.iter().map(|u| u.err_ia));
    match (precision, recall, ndcg, err_ia) {
        (Some(precision), Some(recall), Some(ndcg), Some(err_ia)) => {
            cell.metrics = Some(MetricMeans {
                f1: f1(precision, recall),
                precision,
                recall,
                ndcg,
                err_ia,
            });
        }
        _ => {
            cell.status = CellStatus::Failed {
                cause: "no evaluable cold users".into(),
            };
        }
    }
    cell
}

fn failed_cell(method: Method, n: usize, k: Option<usize>, cause: &str) -> CellReport {
    CellReport {
        method,
        n,
        k,
        status: CellStatus::Failed {
            cause: cause.to_owned(),
        },
        metrics: None,
        counts: CellCounts::default(),
        users: Vec::new(),
    }
}

/// Runs the full protocol. Setup errors (invalid config, no cold candidates)
/// abort; failures inside one `(n, k)` cell are recorded in that cell.
pub fn run_cold_experiment(
    ratings: &InteractionDataset,
    features: &ItemFeatureMap,
    genres: &GenreMap,
    config: &ExperimentConfig,
) -> Result<ExperimentOutput> {
    config.validate()?;
    let started = Instant::now();
    let mut timings = Timings::default();

    let split = holdout_split(ratings, config.train_fraction, config.seed)?;
    let candidates = select_cold_candidates(&split, config.min_test_ratings)?;
    let scenario = make_cold_scenario(&split, &candidates, config.cold_fraction, config.seed)?;
    log::info!(
        "{} cold candidates, {} cold users",
        candidates.len(),
        scenario.cold_users.len()
    );
    timings.setup_secs = started.elapsed().as_secs_f64();

    // Warm users keep the same training ratings for every n.
    let stage = Instant::now();
    let warm_users: Vec<UserId> = scenario.reduced_train.users().collect();
    let warm = train_users(warm_users, &scenario.reduced_train, features, &config.profile);
    timings.warm_training_secs = stage.elapsed().as_secs_f64();
    log::info!(
        "trained {} warm users ({} not trainable) in {:.2}s",
        warm.summary.trained,
        warm.summary.not_trainable + warm.summary.failed,
        timings.warm_training_secs
    );

    let mut report = EvaluationReport {
        config: config.clone(),
        dataset: DatasetSummary {
            users: ratings.user_count(),
            items: ratings.items().len(),
            ratings: ratings.len(),
            mapped_items: features.item_count(),
            features: features.vocabulary().len(),
            train_ratings: split.train.len(),
            test_ratings: split.test.len(),
        },
        cold_candidates: candidates.len(),
        cold_users: scenario.cold_users.iter().copied().collect(),
        warm_training: warm.summary.clone(),
        runs: Vec::new(),
        cells: Vec::new(),
    };

    for &n in &config.n_values {
        let stage = Instant::now();
        let restored = restore_n_ratings(&scenario, n, config.seed)?;
        let conservation = check_conservation(ratings, &split, &scenario, &restored);
        let retained: Vec<UserId> = restored.retained_users().collect();
        let mut run = RunReport {
            n,
            retained_users: retained.len(),
            dropped: restored.dropped.clone(),
            conservation_ok: conservation.is_ok(),
            cold_training: TrainingSummary::default(),
            not_trainable: BTreeMap::new(),
        };
        if let Err(e) = conservation {
            let cause = e.to_string();
            for &k in &config.k_values {
                report.cells.push(failed_cell(Method::SemAuto, n, Some(k), &cause));
            }
            report.runs.push(run);
            continue;
        }

        let train = training_set(&scenario, &restored);
        let cold = train_users(retained.iter().copied(), &train, features, &config.profile);
        run.cold_training = cold.summary.clone();
        run.not_trainable = cold.failures.clone();

        let contexts: Vec<UserContext> = retained
            .par_iter()
            .map(|&user| {
                let test = test_ratings(&split.test, user);
                UserContext {
                    user,
                    candidates: unrated_candidates(user, &train, features),
                    relevant: relevant_set(&test, config.relevance_threshold),
                    topics: topic_distribution(train.user_ratings(user).map(|r| r.item), genres),
                    test,
                }
            })
            .collect();

        let mut profiles: BTreeMap<UserId, &FeatureProfile> = warm.profiles.iter().map(|(&u, p)| (u, p)).collect();
        profiles.extend(cold.profiles.iter().map(|(&u, p)| (u, p)));
        let index = NeighborIndex::new(profiles.values().copied());
        let not_trainable = retained.len() - cold.profiles.len();

        for &k in &config.k_values {
            let results = contexts
                .par_iter()
                .filter_map(|ctx| cold.profiles.get(&ctx.user).map(|p| (ctx, p)))
                .map(|(ctx, profile)| {
                    let neighbors = index.top_k(profile, k);
                    let completed =
                        complete_profile(profile, &neighbors, |u| profiles.get(&u).copied(), k, config.completion)?;
                    let list = recommend_top_n(&completed, ctx.candidates.iter().copied(), features, config.top_n);
                    user_metrics(&list, ctx, genres, config.top_n)
                })
                .collect::<Result<Vec<_>>>();
            report
                .cells
                .push(summarize(Method::SemAuto, n, Some(k), not_trainable, results));
        }

        if config.baselines {
            let results = contexts
                .par_iter()
                .map(|ctx| {
                    let list = random_ranking(ctx.user, &ctx.candidates, config.top_n, config.seed, n as u64);
                    user_metrics(&list, ctx, genres, config.top_n)
                })
                .collect::<Result<Vec<_>>>();
            report.cells.push(summarize(Method::Random, n, None, 0, results));

            let counts = popularity(&train);
            let results = contexts
                .par_iter()
                .map(|ctx| {
                    let list = popularity_ranking(ctx.user, &ctx.candidates, &counts, config.top_n);
                    user_metrics(&list, ctx, genres, config.top_n)
                })
                .collect::<Result<Vec<_>>>();
            report.cells.push(summarize(Method::Popularity, n, None, 0, results));
        }

        let secs = stage.elapsed().as_secs_f64();
        log::info!(
            "n={n}: {} cold users trained, {} dropped, {:.2}s",
            cold.summary.trained,
            run.dropped.len(),
            secs
        );
        timings.runs.push((n, secs));
        report.runs.push(run);
    }
    timings.total_secs = started.elapsed().as_secs_f64();
    Ok(ExperimentOutput { report, timings })
}
