//! Cold-user scenario construction.
//!
//! Candidates are users with enough test ratings. A random fraction of them
//! become cold: all their training ratings move into a frozen pool, and for
//! each profile size `n` exactly `n` of those are handed back.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::dataset::{train_count, InteractionDataset, Rating, SplitPair};
use crate::error::{Error, Result};
use crate::ids::UserId;
use crate::seeding::{rng_for, stage};

/// Users whose test-set rating count is at least `min_test_ratings`.
pub fn select_cold_candidates(split: &SplitPair, min_test_ratings: usize) -> Result<BTreeSet<UserId>> {
    if min_test_ratings == 0 {
        return Err(Error::Contract("min_test_ratings must be at least 1".into()));
    }
    Ok(split
        .test
        .users()
        .filter(|&u| split.test.user_rating_count(u) >= min_test_ratings)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColdScenario {
    pub cold_users: BTreeSet<UserId>,
    /// Training ratings removed from the cold users.
    pub frozen: InteractionDataset,
    /// Training set without any cold-user rating.
    pub reduced_train: InteractionDataset,
    pub seed: u64,
}

/// Picks `round_half_up(fraction · |candidates|)` cold users and moves all
/// their training ratings into the frozen pool.
pub fn make_cold_scenario(
    split: &SplitPair,
    candidates: &BTreeSet<UserId>,
    fraction: f64,
    seed: u64,
) -> Result<ColdScenario> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Contract(format!("cold fraction {fraction} outside (0, 1]")));
    }
    if candidates.is_empty() {
        return Err(Error::NoColdCandidates);
    }
    let mut pool: Vec<UserId> = candidates.iter().copied().collect();
    pool.shuffle(&mut rng_for(seed, &[stage::COLD_SELECT]));
    let count = if fraction == 1.0 {
        pool.len()
    } else {
        train_count(pool.len(), fraction)
    };
    let cold_users: BTreeSet<UserId> = pool.into_iter().take(count).collect();

    let mut frozen = InteractionDataset::new();
    let mut reduced_train = InteractionDataset::new();
    for r in split.train.iter() {
        if cold_users.contains(&r.user) {
            frozen.insert(*r);
        } else {
            reduced_train.insert(*r);
        }
    }
    Ok(ColdScenario {
        cold_users,
        frozen,
        reduced_train,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Restored {
    pub n: usize,
    /// Ratings moved back to training, `n` per retained cold user.
    #[serde(skip)]
    pub additions: InteractionDataset,
    /// Cold users with fewer than `n` frozen ratings.
    pub dropped: Vec<UserId>,
}

impl Restored {
    pub fn retained_users(&self) -> impl Iterator<Item = UserId> + '_ {
        self.additions.users()
    }
}

/// Hands `n` frozen ratings of every cold user back to training. The choice
/// for a user depends only on `(seed, user)`: the user's frozen ratings are
/// shuffled with that stream and the first `n` are taken, so the picks for a
/// smaller `n` are a prefix of those for a larger one.
pub fn restore_n_ratings(scenario: &ColdScenario, n: usize, seed: u64) -> Result<Restored> {
    if n == 0 {
        return Err(Error::Contract("n must be at least 1".into()));
    }
    let mut additions = InteractionDataset::new();
    let mut dropped = Vec::new();
    for &user in &scenario.cold_users {
        let picks = restore_for_user(scenario, user, n, seed);
        match picks {
            Some(picks) => additions.extend(picks),
            None => dropped.push(user),
        }
    }
    Ok(Restored { n, additions, dropped })
}

/// The `n` frozen ratings restored for one user, or `None` if they have fewer.
pub fn restore_for_user(scenario: &ColdScenario, user: UserId, n: usize, seed: u64) -> Option<Vec<Rating>> {
    let mut pool: Vec<Rating> = scenario.frozen.user_ratings(user).copied().collect();
    if pool.len() < n {
        return None;
    }
    pool.shuffle(&mut rng_for(seed, &[stage::RESTORE, u64::from(user.0)]));
    pool.truncate(n);
    Some(pool)
}

/// Training set for one profile size: reduced training plus restorations.
pub fn training_set(scenario: &ColdScenario, restored: &Restored) -> InteractionDataset {
    let mut train = scenario.reduced_train.clone();
    train.extend(restored.additions.iter().copied());
    train
}

/// Checks that, for every cold user, training ⊎ still-frozen ⊎ test is
/// exactly the user's original ratings, and that warm users are untouched.
pub fn check_conservation(
    original: &InteractionDataset,
    split: &SplitPair,
    scenario: &ColdScenario,
    restored: &Restored,
) -> Result<()> {
    let train = training_set(scenario, restored);
    let mut seen: BTreeMap<(UserId, crate::ItemId), u8> = BTreeMap::new();
    let mut place = |r: &Rating, part: &str| -> Result<()> {
        if seen.insert((r.user, r.item), r.stars).is_some() {
            return Err(Error::Contract(format!(
                "rating ({}, {}) appears twice (second time in {part})",
                r.user, r.item
            )));
        }
        Ok(())
    };
    for r in train.iter() {
        place(r, "train")?;
    }
    for r in scenario.frozen.iter() {
        if !restored.additions.contains(r.user, r.item) {
            place(r, "frozen")?;
        }
    }
    for r in split.test.iter() {
        place(r, "test")?;
    }
    let original_map: BTreeMap<_, _> = original.iter().map(|r| ((r.user, r.item), r.stars)).collect();
    if seen != original_map {
        return Err(Error::Contract(
            "train ⊎ frozen ⊎ test does not reproduce the original ratings".into(),
        ));
    }
    Ok(())
}
