//! Additive feature scoring and deterministic top-N lists.

use std::io::{self, Write};

use serde::Serialize;

use crate::dataset::InteractionDataset;
use crate::ids::{FeatureId, ItemId, UserId};
use crate::kg::ItemFeatureMap;
use crate::profiles::FeatureProfile;

/// Sum of the profile weights of an item's features; features the profile
/// lacks contribute nothing.
pub fn score_item(profile: &FeatureProfile, item_features: &[FeatureId]) -> f64 {
    item_features.iter().filter_map(|&f| profile.weight(f)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedList {
    pub user: UserId,
    /// Non-increasing score; equal scores by ascending item id.
    pub entries: Vec<(ItemId, f64)>,
}

impl RankedList {
    pub fn items(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.entries.iter().map(|&(i, _)| i)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `rank,item,score` rows with a header; ranks start at 1.
    pub fn write_csv(&self, out: &mut dyn Write) -> io::Result<()> {
        writeln!(out, "rank,item,score")?;
        for (rank, (item, score)) in self.entries.iter().enumerate() {
            writeln!(out, "{},{item},{score}", rank + 1)?;
        }
        Ok(())
    }
}

/// Orders (item, score) pairs by descending score, then ascending item id.
pub fn rank_order(a: &(ItemId, f64), b: &(ItemId, f64)) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Keeps the best `n` of `scored` in rank order.
pub fn top_n(mut scored: Vec<(ItemId, f64)>, n: usize) -> Vec<(ItemId, f64)> {
    if n == 0 {
        return Vec::new();
    }
    if n < scored.len() {
        scored.select_nth_unstable_by(n - 1, rank_order);
        scored.truncate(n);
    }
    scored.sort_unstable_by(rank_order);
    scored
}

/// Scores every candidate known to the feature map and returns the top `n`.
/// Candidates without features are skipped, not scored zero.
pub fn recommend_top_n<I>(profile: &FeatureProfile, candidates: I, feature_map: &ItemFeatureMap, n: usize) -> RankedList
where
    I: IntoIterator<Item = ItemId>,
{
    let scored: Vec<(ItemId, f64)> = candidates
        .into_iter()
        .filter_map(|item| feature_map.features(item).map(|fs| (item, score_item(profile, fs))))
        .collect();
    RankedList {
        user: profile.user,
        entries: top_n(scored, n),
    }
}

/// Every item in the feature map the user has not rated in `train`.
pub fn unrated_candidates(user: UserId, train: &InteractionDataset, feature_map: &ItemFeatureMap) -> Vec<ItemId> {
    feature_map.item_ids().filter(|&i| !train.contains(user, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{BTreeMap, BTreeSet};

    fn profile(pairs: &[(u32, f64)]) -> FeatureProfile {
        FeatureProfile::from_weights(UserId(1), pairs.iter().map(|&(f, w)| (FeatureId(f), w))).unwrap()
    }

    fn fmap(items: &[(u32, &[&str])]) -> ItemFeatureMap {
        ItemFeatureMap::from_sets(
            items
                .iter()
                .map(|(i, fs)| (ItemId(*i), fs.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>()))
                .collect::<BTreeMap<_, _>>(),
        )
    }

    #[test]
    fn additive_score() {
        let p = profile(&[(0, 0.2), (1, 0.7)]);
        assert!((score_item(&p, &[FeatureId(0), FeatureId(1)]) - 0.9).abs() < 1e-15);
        assert_eq!(score_item(&p, &[FeatureId(5)]), 0.0);
        assert!(score_item(&p, &[FeatureId(0), FeatureId(1), FeatureId(5)]) >= score_item(&p, &[FeatureId(1)]));
    }

    #[test]
    fn ties_ordered_by_item_id() {
        // a → 0.9 via two features, b → 0.9, c → 0.1
        let map = fmap(&[(1, &["a", "x"]), (2, &["b"]), (3, &["c"])]);
        let id = |s: &str| map.feature_id(s).unwrap().0;
        let p = profile(&[(id("a"), 0.5), (id("x"), 0.4), (id("b"), 0.9), (id("c"), 0.1)]);
        let list = recommend_top_n(&p, [3, 2, 1].map(ItemId), &map, 2);
        let items: Vec<u32> = list.items().map(|i| i.0).collect();
        assert_eq!(items, [1, 2]);
        let all = recommend_top_n(&p, [3, 2, 1].map(ItemId), &map, 10);
        assert_eq!(all.len(), 3);
    }

    #[test]
    fn unmapped_candidates_excluded() {
        let map = fmap(&[(1, &["a"])]);
        let p = profile(&[]);
        let list = recommend_top_n(&p, [1, 99].map(ItemId), &map, 10);
        assert_eq!(list.items().collect::<Vec<_>>(), [ItemId(1)]);
        assert!(recommend_top_n(&p, [99].map(ItemId), &map, 10).is_empty());
    }

    #[test]
    fn csv_rows() {
        let list = RankedList {
            user: UserId(1),
            entries: vec![(ItemId(4), 1.5), (ItemId(2), 0.25)],
        };
        let mut buf = Vec::new();
        list.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "rank,item,score\n1,4,1.5\n2,2,0.25\n");
    }
}
