//! Layered run configuration: built-in defaults, then a TOML file, then
//! environment variables and flags.

use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use semauto::autoencoder::{Aggregation, TrainConfig};
use semauto::dataset::{DEFAULT_EPSILON, MOVIELENS_SEPARATOR};
use semauto::evaluation::ExperimentConfig;
use semauto::kg::{FeatureSelection, SparqlConfig, DCT_SUBJECT, RDF_TYPE};
use semauto::pipeline::ProfileConfig;
use semauto::profiles::CompletionMode;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub paths: Paths,
    pub train: Train,
    pub protocol: Protocol,
    pub features: Features,
    pub profiles: Profiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub ratings: Option<PathBuf>,
    pub ratings_separator: String,
    pub movies: Option<PathBuf>,
    pub mapping: Option<PathBuf>,
    pub triples: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub feature_map: Option<PathBuf>,
    pub profiles: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub cache_dir: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            ratings: None,
            ratings_separator: MOVIELENS_SEPARATOR.to_owned(),
            movies: None,
            mapping: None,
            triples: None,
            endpoint: None,
            feature_map: None,
            profiles: None,
            out_dir: PathBuf::from("out"),
            cache_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Train {
    pub init_weight: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub rmse_target: f64,
    pub min_improvement: f64,
    pub epsilon: f64,
    pub aggregation: Aggregation,
}

impl Default for Train {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            init_weight: t.init_weight,
            learning_rate: t.learning_rate,
            max_epochs: t.max_epochs,
            rmse_target: t.rmse_target,
            min_improvement: t.min_improvement,
            epsilon: DEFAULT_EPSILON,
            aggregation: Aggregation::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Protocol {
    pub train_fraction: f64,
    pub min_test_ratings: usize,
    pub cold_fraction: f64,
    pub n_values: Vec<usize>,
    pub k_values: Vec<usize>,
    pub top_n: usize,
    pub relevance_threshold: u8,
    /// Generated and logged when absent.
    pub seed: Option<u64>,
    pub baselines: bool,
}

impl Default for Protocol {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        Self {
            train_fraction: e.train_fraction,
            min_test_ratings: e.min_test_ratings,
            cold_fraction: e.cold_fraction,
            n_values: e.n_values,
            k_values: e.k_values,
            top_n: e.top_n,
            relevance_threshold: e.relevance_threshold,
            seed: None,
            baselines: e.baselines,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Features {
    pub predicates: Vec<String>,
    pub type_namespace: Option<String>,
    pub batch_size: usize,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
    pub concurrency: usize,
}

impl Default for Features {
    fn default() -> Self {
        let s = SparqlConfig::new("");
        Self {
            predicates: vec![DCT_SUBJECT.to_owned(), RDF_TYPE.to_owned()],
            type_namespace: None,
            batch_size: s.batch_size,
            max_retries: s.max_retries,
            backoff_ms: s.initial_backoff.as_millis() as u64,
            timeout_secs: s.timeout.as_secs(),
            concurrency: s.concurrency,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Profiles {
    /// Neighbourhood size for `recommend`; 0 disables completion.
    pub k: usize,
    pub completion: CompletionMode,
}

impl Default for Profiles {
    fn default() -> Self {
        Self {
            k: 10,
            completion: CompletionMode::default(),
        }
    }
}

fn kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned())).map_err(|e| e.to_string())
}

/// One flag per configuration key. Flags win over environment variables,
/// which win over the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long, global = true, env = "SEMAUTO_PATHS_RATINGS", help_heading = "[paths]")]
    pub ratings: Option<PathBuf>,
    #[arg(
        long,
        global = true,
        env = "SEMAUTO_PATHS_RATINGS_SEPARATOR",
        help_heading = "[paths]"
    )]
    pub ratings_separator: Option<String>,
    #[arg(long, global = true, env = "SEMAUTO_PATHS_MOVIES", help_heading = "[paths]")]
    pub movies: Option<PathBuf>,
    #[arg(long, global = true, env = "SEMAUTO_PATHS_MAPPING", help_heading = "[paths]")]
    pub mapping: Option<PathBuf>,
    #[arg(long, global = true, env = "SEMAUTO_PATHS_TRIPLES", help_heading = "[paths]")]
    pub triples: Option<PathBuf>,
    #[arg(long, global = true, env = "SEMAUTO_PATHS_ENDPOINT", help_heading = "[paths]")]
    pub endpoint: Option<String>,
    #[arg(long, global = true, env = "SEMAUTO_PATHS_FEATURE_MAP", help_heading = "[paths]")]
    pub feature_map: Option<PathBuf>,
    #[arg(long, global = true, env = "SEMAUTO_PATHS_PROFILES", help_heading = "[paths]")]
    pub profiles: Option<PathBuf>,
    #[arg(long, global = true, env = "SEMAUTO_PATHS_OUT_DIR", help_heading = "[paths]")]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true, env = "SEMAUTO_PATHS_CACHE_DIR", help_heading = "[paths]")]
    pub cache_dir: Option<PathBuf>,

    #[arg(long, global = true, env = "SEMAUTO_TRAIN_INIT_WEIGHT", help_heading = "[train]")]
    pub init_weight: Option<f64>,
    #[arg(long, global = true, env = "SEMAUTO_TRAIN_LEARNING_RATE", help_heading = "[train]")]
    pub learning_rate: Option<f64>,
    #[arg(long, global = true, env = "SEMAUTO_TRAIN_MAX_EPOCHS", help_heading = "[train]")]
    pub max_epochs: Option<usize>,
    #[arg(long, global = true, env = "SEMAUTO_TRAIN_RMSE_TARGET", help_heading = "[train]")]
    pub rmse_target: Option<f64>,
    #[arg(long, global = true, env = "SEMAUTO_TRAIN_MIN_IMPROVEMENT", help_heading = "[train]")]
    pub min_improvement: Option<f64>,
    #[arg(long, global = true, env = "SEMAUTO_TRAIN_EPSILON", help_heading = "[train]")]
    pub epsilon: Option<f64>,
    /// encoder | encoder-and-decoder
    #[arg(long, global = true, env = "SEMAUTO_TRAIN_AGGREGATION", help_heading = "[train]", value_parser = kebab::<Aggregation>)]
    pub aggregation: Option<Aggregation>,

    #[arg(
        long,
        global = true,
        env = "SEMAUTO_PROTOCOL_TRAIN_FRACTION",
        help_heading = "[protocol]"
    )]
    pub train_fraction: Option<f64>,
    #[arg(
        long,
        global = true,
        env = "SEMAUTO_PROTOCOL_MIN_TEST_RATINGS",
        help_heading = "[protocol]"
    )]
    pub min_test_ratings: Option<usize>,
    #[arg(
        long,
        global = true,
        env = "SEMAUTO_PROTOCOL_COLD_FRACTION",
        help_heading = "[protocol]"
    )]
    pub cold_fraction: Option<f64>,
    /// Comma-separated
    #[arg(
        long,
        global = true,
        env = "SEMAUTO_PROTOCOL_N_VALUES",
        help_heading = "[protocol]",
        value_delimiter = ','
    )]
    pub n_values: Option<Vec<usize>>,
    /// Comma-separated
    #[arg(
        long,
        global = true,
        env = "SEMAUTO_PROTOCOL_K_VALUES",
        help_heading = "[protocol]",
        value_delimiter = ','
    )]
    pub k_values: Option<Vec<usize>>,
    #[arg(long, global = true, env = "SEMAUTO_PROTOCOL_TOP_N", help_heading = "[protocol]")]
    pub top_n: Option<usize>,
    #[arg(
        long,
        global = true,
        env = "SEMAUTO_PROTOCOL_RELEVANCE_THRESHOLD",
        help_heading = "[protocol]"
    )]
    pub relevance_threshold: Option<u8>,
    #[arg(long, global = true, env = "SEMAUTO_PROTOCOL_SEED", help_heading = "[protocol]")]
    pub seed: Option<u64>,
    #[arg(long, global = true, env = "SEMAUTO_PROTOCOL_BASELINES", help_heading = "[protocol]")]
    pub baselines: Option<bool>,

    /// Comma-separated predicate IRIs
    #[arg(
        long,
        global = true,
        env = "SEMAUTO_FEATURES_PREDICATES",
        help_heading = "[features]",
        value_delimiter = ','
    )]
    pub predicates: Option<Vec<String>>,
    #[arg(
        long,
        global = true,
        env = "SEMAUTO_FEATURES_TYPE_NAMESPACE",
        help_heading = "[features]"
    )]
    pub type_namespace: Option<String>,
    #[arg(
        long,
        global = true,
        env = "SEMAUTO_FEATURES_BATCH_SIZE",
        help_heading = "[features]"
    )]
    pub batch_size: Option<usize>,
    #[arg(
        long,
        global = true,
        env = "SEMAUTO_FEATURES_MAX_RETRIES",
        help_heading = "[features]"
    )]
    pub max_retries: Option<u32>,
    #[arg(
        long,
        global = true,
        env = "SEMAUTO_FEATURES_BACKOFF_MS",
        help_heading = "[features]"
    )]
    pub backoff_ms: Option<u64>,
    #[arg(
        long,
        global = true,
        env = "SEMAUTO_FEATURES_TIMEOUT_SECS",
        help_heading = "[features]"
    )]
    pub timeout_secs: Option<u64>,
    #[arg(
        long,
        global = true,
        env = "SEMAUTO_FEATURES_CONCURRENCY",
        help_heading = "[features]"
    )]
    pub concurrency: Option<usize>,

    #[arg(long, global = true, env = "SEMAUTO_PROFILES_K", help_heading = "[profiles]")]
    pub k: Option<usize>,
    /// divide-by-k | divide-by-possessing
    #[arg(long, global = true, env = "SEMAUTO_PROFILES_COMPLETION", help_heading = "[profiles]", value_parser = kebab::<CompletionMode>)]
    pub completion: Option<CompletionMode>,
}

macro_rules! apply {
    ($o:expr, $($target:expr => $field:ident),* $(,)?) => {
        $(if let Some(v) = $o.$field.clone() { $target = v; })*
    };
}

macro_rules! apply_opt {
    ($o:expr, $($target:expr => $field:ident),* $(,)?) => {
        $(if let Some(v) = $o.$field.clone() { $target = Some(v); })*
    };
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: Option<&Path>) -> Result<Self, String> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
                Self::from_toml(&text).map_err(|e| format!("{}: {e}", p.display()))
            }
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        let (p, t, r, f, q) = (
            &mut self.paths,
            &mut self.train,
            &mut self.protocol,
            &mut self.features,
            &mut self.profiles,
        );
        apply_opt!(o,
            p.ratings => ratings, p.movies => movies, p.mapping => mapping, p.triples => triples,
            p.endpoint => endpoint, p.feature_map => feature_map, p.profiles => profiles,
            p.cache_dir => cache_dir, r.seed => seed, f.type_namespace => type_namespace,
        );
        apply!(o,
            p.ratings_separator => ratings_separator, p.out_dir => out_dir,
            t.init_weight => init_weight, t.learning_rate => learning_rate, t.max_epochs => max_epochs,
            t.rmse_target => rmse_target, t.min_improvement => min_improvement, t.epsilon => epsilon,
            t.aggregation => aggregation,
            r.train_fraction => train_fraction, r.min_test_ratings => min_test_ratings,
            r.cold_fraction => cold_fraction, r.n_values => n_values, r.k_values => k_values,
            r.top_n => top_n, r.relevance_threshold => relevance_threshold, r.baselines => baselines,
            f.predicates => predicates, f.batch_size => batch_size, f.max_retries => max_retries,
            f.backoff_ms => backoff_ms, f.timeout_secs => timeout_secs, f.concurrency => concurrency,
            q.k => k, q.completion => completion,
        );
    }

    pub fn profile_config(&self) -> ProfileConfig {
        let t = &self.train;
        ProfileConfig {
            train: TrainConfig {
                init_weight: t.init_weight,
                learning_rate: t.learning_rate,
                max_epochs: t.max_epochs,
                rmse_target: t.rmse_target,
                min_improvement: t.min_improvement,
            },
            epsilon: t.epsilon,
            aggregation: t.aggregation,
        }
    }

    pub fn experiment_config(&self, seed: u64) -> ExperimentConfig {
        let r = &self.protocol;
        ExperimentConfig {
            train_fraction: r.train_fraction,
            min_test_ratings: r.min_test_ratings,
            cold_fraction: r.cold_fraction,
            n_values: r.n_values.clone(),
            k_values: r.k_values.clone(),
            top_n: r.top_n,
            relevance_threshold: r.relevance_threshold,
            seed,
            completion: self.profiles.completion,
            baselines: r.baselines,
            profile: self.profile_config(),
        }
    }

    pub fn selection(&self) -> FeatureSelection {
        FeatureSelection {
            predicates: self.features.predicates.iter().cloned().collect(),
            type_namespace: self.features.type_namespace.clone(),
        }
    }

    pub fn sparql(&self, endpoint: &str) -> SparqlConfig {
        let f = &self.features;
        SparqlConfig {
            batch_size: f.batch_size,
            max_retries: f.max_retries,
            initial_backoff: Duration::from_millis(f.backoff_ms),
            timeout: Duration::from_secs(f.timeout_secs),
            concurrency: f.concurrency,
            cache_dir: self.paths.cache_dir.clone(),
            ..SparqlConfig::new(endpoint)
        }
    }
}
