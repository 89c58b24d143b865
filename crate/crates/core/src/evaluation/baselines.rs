//! Reference rankers that ignore the knowledge graph.

use std::collections::HashMap;

use rand::seq::SliceRandom;

use crate::dataset::InteractionDataset;
use crate::ids::{ItemId, UserId};
use crate::recommender::{top_n, RankedList};
use crate::seeding::{rng_for, stage};

/// A uniformly random top-`n` from `candidates`, drawn from a stream keyed by
/// `(seed, user, salt)`.
pub fn random_ranking(user: UserId, candidates: &[ItemId], n: usize, seed: u64, salt: u64) -> RankedList {
    let mut items = candidates.to_vec();
    items.sort_unstable();
    let mut rng = rng_for(seed, &[stage::RANDOM_RANKER, u64::from(user.0), salt]);
    let (picked, _) = items.partial_shuffle(&mut rng, n);
    RankedList {
        user,
        entries: picked.iter().map(|&i| (i, 0.0)).collect(),
    }
}

/// Item → number of ratings in `train`.
pub fn popularity(train: &InteractionDataset) -> HashMap<ItemId, usize> {
    let mut counts = HashMap::new();
    for r in train.iter() {
        *counts.entry(r.item).or_default() += 1;
    }
    counts
}

/// The `n` most-rated candidates, ties by ascending item id.
pub fn popularity_ranking(
    user: UserId,
    candidates: &[ItemId],
    counts: &HashMap<ItemId, usize>,
    n: usize,
) -> RankedList {
    let scored = candidates
        .iter()
        .map(|&i| (i, counts.get(&i).copied().unwrap_or(0) as f64))
        .collect();
    RankedList {
        user,
        entries: top_n(scored, n),
    }
}
