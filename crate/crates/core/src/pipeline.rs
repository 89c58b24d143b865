//! Per-user training: ratings → topology → trained network → profile.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{
    aggregate_feature_weights, build_topology, train, Aggregation, TrainConfig, TrainTrace, UserAutoencoder,
};
use crate::dataset::{normalize_rating, InteractionDataset, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::ids::UserId;
use crate::kg::ItemFeatureMap;
use crate::profiles::{build_profile, FeatureProfile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileConfig {
    pub train: TrainConfig,
    /// Clamp margin for normalized ratings.
    pub epsilon: f64,
    pub aggregation: Aggregation,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            epsilon: DEFAULT_EPSILON,
            aggregation: Aggregation::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedUser {
    pub net: UserAutoencoder,
    pub trace: TrainTrace,
    pub profile: FeatureProfile,
}

/// Trains one user's autoencoder on their ratings in `train` and derives the
/// normalized feature profile.
pub fn train_user(
    user: UserId,
    train_set: &InteractionDataset,
    feature_map: &ItemFeatureMap,
    config: &ProfileConfig,
) -> Result<TrainedUser> {
    let topology = build_topology(user, train_set.user_ratings(user).map(|r| r.item), feature_map)?;
    let target = topology
        .rated_items()
        .iter()
        .map(|&item| {
            let stars = train_set.get(user, item).expect("topology items are rated").stars;
            normalize_rating(stars, config.epsilon)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (net, trace) = train(user, topology, &target, &config.train)?;
    let raw = aggregate_feature_weights(&net, config.aggregation);
    let profile = build_profile(user, &raw)?;
    Ok(TrainedUser { net, trace, profile })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainingSummary {
    pub trained: usize,
    pub not_trainable: usize,
    pub failed: usize,
    pub mean_epochs: f64,
    pub mean_final_rmse: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainingOutcome {
    pub profiles: BTreeMap<UserId, FeatureProfile>,
    /// Users that could not be trained, with the cause.
    pub failures: BTreeMap<UserId, String>,
    pub summary: TrainingSummary,
}

/// Trains every listed user in parallel. Per-user failures are collected
/// rather than aborting the batch; results do not depend on scheduling.
pub fn train_users<I>(
    users: I,
    train_set: &InteractionDataset,
    feature_map: &ItemFeatureMap,
    config: &ProfileConfig,
) -> TrainingOutcome
where
    I: IntoIterator<Item = UserId>,
{
    let users: Vec<UserId> = users.into_iter().collect();
    let results: Vec<(UserId, Result<TrainedUser>)> = users
        .par_iter()
        .map(|&u| (u, train_user(u, train_set, feature_map, config)))
        .collect();
    let mut outcome = TrainingOutcome::default();
    let (mut epochs, mut rmse) = (0usize, 0.0);
    for (user, result) in results {
        match result {
            Ok(t) => {
                epochs += t.trace.epochs_run;
                rmse += t.trace.final_rmse();
                outcome.profiles.insert(user, t.profile);
            }
            Err(e) => {
                if matches!(e, Error::UserNotTrainable { .. }) {
                    outcome.summary.not_trainable += 1;
                } else {
                    outcome.summary.failed += 1;
                }
                outcome.failures.insert(user, e.to_string());
            }
        }
    }
    let trained = outcome.profiles.len();
    outcome.summary.trained = trained;
    if trained > 0 {
        outcome.summary.mean_epochs = epochs as f64 / trained as f64;
        outcome.summary.mean_final_rmse = rmse / trained as f64;
    }
    outcome
}
