//! Top-N accuracy and intent-aware diversity metrics.

use std::collections::{BTreeMap, BTreeSet};

use crate::dataset::{GenreMap, InteractionDataset, MAX_STARS};
use crate::error::{Error, Result};
use crate::ids::{ItemId, UserId};

/// Items the user rated in the test set at or above `threshold` stars.
pub type RelevantSet = BTreeSet<ItemId>;

/// A user's test ratings, item → stars.
pub type TestRatings = BTreeMap<ItemId, u8>;

pub fn test_ratings(test: &InteractionDataset, user: UserId) -> TestRatings {
    test.user_ratings(user).map(|r| (r.item, r.stars)).collect()
}

pub fn relevant_set(test: &TestRatings, threshold: u8) -> RelevantSet {
    test.iter().filter(|(_, &s)| s >= threshold).map(|(&i, _)| i).collect()
}

fn hits(ranked: &[ItemId], relevant: &RelevantSet, n: usize) -> usize {
    ranked.iter().take(n).filter(|i| relevant.contains(i)).count()
}

/// `|L(N) ∩ relevant| / N`. The denominator stays `N` for short lists.
pub fn precision_at(ranked: &[ItemId], relevant: &RelevantSet, n: usize) -> f64 {
    assert!(n >= 1, "N must be at least 1");
    hits(ranked, relevant, n) as f64 / n as f64
}

/// `|L(N) ∩ relevant| / |relevant|`, or `None` when nothing is relevant.
pub fn recall_at(ranked: &[ItemId], relevant: &RelevantSet, n: usize) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    Some(hits(ranked, relevant, n) as f64 / relevant.len() as f64)
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn gain(stars: u8) -> f64 {
    2f64.powi(i32::from(stars)) - 1.0
}

fn discount(position: usize) -> f64 {
    (1.0 + position as f64).log2()
}

/// nDCG@N with gains `2^stars − 1` taken from the user's test ratings (0 for
/// items outside the test set). The ideal ranking orders the test ratings by
/// descending stars. Returns 0 when the ideal DCG is 0.
pub fn ndcg_at(ranked: &[ItemId], test: &TestRatings, n: usize) -> f64 {
    assert!(n >= 1, "N must be at least 1");
    let dcg: f64 = ranked
        .iter()
        .take(n)
        .enumerate()
        .map(|(p, item)| test.get(item).map_or(0.0, |&s| gain(s)) / discount(p + 1))
        .sum();
    let mut ideal: Vec<u8> = test.values().copied().collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(n)
        .enumerate()
        .map(|(p, &s)| gain(s) / discount(p + 1))
        .sum();
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

/// Relevance probability of a graded item: `(2^g − 1) / 2^g_max`.
pub fn relevance_probability(stars: u8) -> f64 {
    gain(stars) / 2f64.powi(i32::from(MAX_STARS))
}

/// Topic distribution from genre frequencies over the given items; uniform
/// over every known genre when none of the items has a genre.
pub fn topic_distribution<I>(items: I, genres: &GenreMap) -> BTreeMap<String, f64>
where
    I: IntoIterator<Item = ItemId>,
{
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for item in items {
        for g in genres.get(&item).into_iter().flatten() {
            *counts.entry(g.as_str()).or_default() += 1;
        }
    }
    let total: usize = counts.values().sum();
    if total == 0 {
        let all: BTreeSet<&str> = genres.values().flatten().map(String::as_str).collect();
        let p = 1.0 / all.len().max(1) as f64;
        return all.into_iter().map(|g| (g.to_owned(), p)).collect();
    }
    counts
        .into_iter()
        .map(|(g, c)| (g.to_owned(), c as f64 / total as f64))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrIa {
    pub value: f64,
    /// Ranked items (within the cut-off) absent from the genre map.
    pub missing_genres: usize,
}

/// Intent-aware expected reciprocal rank over positions 1..=N:
/// `Σ_r 1/r Σ_t P(t) Π_{i<r} (1 − R_i^t) R_r^t`, with `R_i^t` the relevance
/// probability of item i when it carries genre t and 0 otherwise.
pub fn err_ia_at(
    ranked: &[ItemId],
    test: &TestRatings,
    genres: &GenreMap,
    topic_dist: &BTreeMap<String, f64>,
    n: usize,
) -> Result<ErrIa> {
    let total: f64 = topic_dist.values().sum();
    if (total - 1.0).abs() > 1e-9 || topic_dist.values().any(|&p| p < 0.0) {
        return Err(Error::Contract(format!(
            "topic distribution sums to {total}, expected 1"
        )));
    }
    let probs: Vec<f64> = topic_dist.values().copied().collect();
    let mut missing_genres = 0;
    let relevance: Vec<Vec<f64>> = ranked
        .iter()
        .take(n)
        .map(|item| {
            let item_genres = genres.get(item);
            if item_genres.is_none() {
                missing_genres += 1;
            }
            let r = test.get(item).map_or(0.0, |&s| relevance_probability(s));
            topic_dist
                .keys()
                .map(|t| {
                    if item_genres.is_some_and(|g| g.contains(t)) {
                        r
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let value = err_ia_cascade(&relevance, &probs);
    Ok(ErrIa { value, missing_genres })
}

/// The ERR-IA cascade over explicit relevance probabilities:
/// `relevance[r][t]` is the probability that the item at rank `r + 1`
/// satisfies topic `t`, and `topic_probs[t]` is the topic's weight.
pub fn err_ia_cascade(relevance: &[Vec<f64>], topic_probs: &[f64]) -> f64 {
    // Per topic: probability that no earlier item satisfied the intent.
    let mut unsatisfied = vec![1.0; topic_probs.len()];
    let mut value = 0.0;
    for (pos, row) in relevance.iter().enumerate() {
        let mut at_rank = 0.0;
        for (t, (&p, &r)) in topic_probs.iter().zip(row).enumerate() {
            at_rank += p * unsatisfied[t] * r;
            unsatisfied[t] *= 1.0 - r;
        }
        value += at_rank / (pos + 1) as f64;
    }
    value
}
