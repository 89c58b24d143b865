//! MovieLens-format ratings and genre ingestion, rating normalization and
//! per-user hold-out splitting.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ids::{ItemId, UserId};
use crate::io_util::{open_reader, LossyLines};
use crate::seeding::{rng_for, stage};

pub const MOVIELENS_SEPARATOR: &str = "::";
pub const MIN_STARS: u8 = 1;
pub const MAX_STARS: u8 = 5;
/// Clamp margin applied after min-max scaling of the star scale.
pub const DEFAULT_EPSILON: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Rating {
    pub user: UserId,
    pub item: ItemId,
    pub stars: u8,
    pub timestamp: Option<i64>,
}

impl Rating {
    pub fn new(user: UserId, item: ItemId, stars: u8) -> Self {
        Self {
            user,
            item,
            stars,
            timestamp: None,
        }
    }
}

/// Explicit-feedback ratings keyed by user, then item.
///
/// A (user, item) pair appears at most once; the user and item sets are
/// derived from the stored ratings.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InteractionDataset {
    by_user: BTreeMap<UserId, BTreeMap<ItemId, Rating>>,
    len: usize,
}

impl InteractionDataset {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a dataset, rejecting duplicate (user, item) pairs.
    pub fn from_ratings<I: IntoIterator<Item = Rating>>(ratings: I) -> Result<Self> {
        let mut ds = Self::new();
        for r in ratings {
            if ds.insert(r).is_some() {
                return Err(Error::Contract(format!(
                    "duplicate rating for user {} item {}",
                    r.user, r.item
                )));
            }
        }
        Ok(ds)
    }

    /// Inserts a rating, returning the one it replaced.
    pub fn insert(&mut self, rating: Rating) -> Option<Rating> {
        let prev = self.by_user.entry(rating.user).or_default().insert(rating.item, rating);
        if prev.is_none() {
            self.len += 1;
        }
        prev
    }

    pub fn remove(&mut self, user: UserId, item: ItemId) -> Option<Rating> {
        let items = self.by_user.get_mut(&user)?;
        let removed = items.remove(&item);
        if removed.is_some() {
            self.len -= 1;
            if items.is_empty() {
                self.by_user.remove(&user);
            }
        }
        removed
    }

    pub fn extend<I: IntoIterator<Item = Rating>>(&mut self, ratings: I) {
        for r in ratings {
            self.insert(r);
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, user: UserId, item: ItemId) -> bool {
        self.by_user.get(&user).is_some_and(|items| items.contains_key(&item))
    }

    pub fn get(&self, user: UserId, item: ItemId) -> Option<&Rating> {
        self.by_user.get(&user)?.get(&item)
    }

    /// Users in ascending id order.
    pub fn users(&self) -> impl Iterator<Item = UserId> + '_ {
        self.by_user.keys().copied()
    }

    pub fn user_count(&self) -> usize {
        self.by_user.len()
    }

    pub fn items(&self) -> BTreeSet<ItemId> {
        self.iter().map(|r| r.item).collect()
    }

    /// A user's ratings in ascending item order (empty for unknown users).
    pub fn user_ratings(&self, user: UserId) -> impl Iterator<Item = &Rating> + '_ {
        self.by_user.get(&user).into_iter().flat_map(|items| items.values())
    }

    pub fn user_rating_count(&self, user: UserId) -> usize {
        self.by_user.get(&user).map_or(0, BTreeMap::len)
    }

    /// All ratings ordered by (user, item).
    pub fn iter(&self) -> impl Iterator<Item = &Rating> + '_ {
        self.by_user.values().flat_map(|items| items.values())
    }

    /// Writes the dataset in MovieLens `::` format.
    pub fn write_movielens(&self, out: &mut dyn Write) -> io::Result<()> {
        for r in self.iter() {
            writeln!(out, "{}::{}::{}::{}", r.user, r.item, r.stars, r.timestamp.unwrap_or(0))?;
        }
        Ok(())
    }
}

/// Counters collected while parsing a ratings file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RatingsParseStats {
    pub lines: usize,
    pub ratings: usize,
    pub out_of_range: usize,
    pub duplicates: usize,
    pub skipped_header: bool,
}

/// Parses a MovieLens-style ratings file (`user SEP item SEP stars [SEP timestamp]`).
///
/// Blank lines and `#` comments are skipped. A non-numeric first line is
/// treated as a CSV header. Out-of-range star values are dropped and
/// counted; a duplicate (user, item) pair replaces the earlier record.
pub fn parse_movielens(path: &Path, separator: &str) -> Result<(InteractionDataset, RatingsParseStats)> {
    let reader = open_reader(path)?;
    parse_movielens_reader(reader, separator, path)
}

pub fn parse_movielens_reader<R: BufRead>(
    reader: R,
    separator: &str,
    path: &Path,
) -> Result<(InteractionDataset, RatingsParseStats)> {
    if separator.is_empty() {
        return Err(Error::Contract("empty field separator".into()));
    }
    let mut ds = InteractionDataset::new();
    let mut stats = RatingsParseStats::default();
    for (idx, line) in LossyLines::new(reader).enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = idx + 1;
        stats.lines += 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(separator).map(str::trim).collect();
        let record = |message: String| Error::Record {
            path: path.to_path_buf(),
            line: lineno,
            message,
        };
        if fields.len() < 3 {
            return Err(record(format!(
                "expected at least 3 fields separated by {separator:?}, found {}",
                fields.len()
            )));
        }
        let user = match fields[0].parse::<UserId>() {
            Ok(u) => u,
            Err(_) if lineno == 1 => {
                stats.skipped_header = true;
                continue;
            }
            Err(_) => return Err(record(format!("invalid user id {:?}", fields[0]))),
        };
        let item = fields[1]
            .parse::<ItemId>()
            .map_err(|_| record(format!("invalid item id {:?}", fields[1])))?;
        let stars = fields[2]
            .parse::<i64>()
            .map_err(|_| record(format!("invalid star value {:?}", fields[2])))?;
        let timestamp = match fields.get(3) {
            Some(ts) if !ts.is_empty() => Some(
                ts.parse::<i64>()
                    .map_err(|_| record(format!("invalid timestamp {ts:?}")))?,
            ),
            _ => None,
        };
        if !(i64::from(MIN_STARS)..=i64::from(MAX_STARS)).contains(&stars) {
            stats.out_of_range += 1;
            continue;
        }
        let rating = Rating {
            user,
            item,
            stars: stars as u8,
            timestamp,
        };
        if ds.insert(rating).is_some() {
            stats.duplicates += 1;
        }
    }
    stats.ratings = ds.len();
    Ok((ds, stats))
}

/// Item → genre labels, the topics used by intent-aware metrics.
pub type GenreMap = BTreeMap<ItemId, BTreeSet<String>>;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct GenreParseStats {
    pub lines: usize,
    pub items: usize,
    pub empty_genres: usize,
    pub duplicates: usize,
}

/// Parses a MovieLens movies file (`id::title::Genre|Genre`).
pub fn parse_genres(path: &Path) -> Result<(GenreMap, GenreParseStats)> {
    parse_genres_reader(open_reader(path)?, MOVIELENS_SEPARATOR, path)
}

pub fn parse_genres_reader<R: BufRead>(reader: R, separator: &str, path: &Path) -> Result<(GenreMap, GenreParseStats)> {
    let mut map = GenreMap::new();
    let mut stats = GenreParseStats::default();
    for (idx, line) in LossyLines::new(reader).enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        stats.lines += 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let record = |message: String| Error::Record {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        let (id_field, rest) = trimmed
            .split_once(separator)
            .ok_or_else(|| record("missing title and genre fields".into()))?;
        let (_title, genre_field) = rest
            .rsplit_once(separator)
            .ok_or_else(|| record("missing genre field".into()))?;
        let item = id_field
            .parse::<ItemId>()
            .map_err(|_| record(format!("invalid item id {id_field:?}")))?;
        let genres: BTreeSet<String> = genre_field
            .split('|')
            .map(str::trim)
            .filter(|g| !g.is_empty())
            .map(str::to_owned)
            .collect();
        // Last occurrence wins, including over an earlier non-empty entry.
        let replaced = map.remove(&item).is_some();
        if replaced {
            stats.duplicates += 1;
        }
        if genres.is_empty() {
            stats.empty_genres += 1;
            continue;
        }
        map.insert(item, genres);
    }
    stats.items = map.len();
    Ok((map, stats))
}

/// Maps a star value onto the unit interval: `(stars - 1) / 4`, clamped to
/// `[epsilon, 1 - epsilon]` so sigmoid targets stay reachable.
pub fn normalize_rating(stars: u8, epsilon: f64) -> Result<f64> {
    if !(MIN_STARS..=MAX_STARS).contains(&stars) {
        return Err(Error::Contract(format!(
            "star value {stars} outside [{MIN_STARS}, {MAX_STARS}]"
        )));
    }
    if !(0.0..0.5).contains(&epsilon) {
        return Err(Error::Contract(format!("epsilon {epsilon} outside [0, 0.5)")));
    }
    let span = f64::from(MAX_STARS - MIN_STARS);
    let unit = f64::from(stars - MIN_STARS) / span;
    Ok(unit.clamp(epsilon, 1.0 - epsilon))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPair {
    pub train: InteractionDataset,
    pub test: InteractionDataset,
}

/// Number of ratings a user keeps for training: `round_half_up(fraction * count)`.
pub fn train_count(count: usize, fraction: f64) -> usize {
    // The 1e-9 nudge absorbs representation error such as 0.8 * 20 = 16.000000000000004
    // or 0.8 * 15 = 11.999999999999998 before flooring.
    let scaled = fraction * count as f64;
    ((scaled + 0.5 + 1e-9).floor() as usize).min(count)
}

/// Per-user random hold-out split. Each user's ratings are shuffled with a
/// generator derived from `(seed, user)` and the first
/// `round_half_up(train_fraction * n)` go to training.
pub fn holdout_split(dataset: &InteractionDataset, train_fraction: f64, seed: u64) -> Result<SplitPair> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Contract(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let mut train = InteractionDataset::new();
    let mut test = InteractionDataset::new();
    for user in dataset.users() {
        let mut ratings: Vec<Rating> = dataset.user_ratings(user).copied().collect();
        let mut rng = rng_for(seed, &[stage::HOLDOUT, u64::from(user.0)]);
        ratings.shuffle(&mut rng);
        let keep = train_count(ratings.len(), train_fraction);
        let (tr, te) = ratings.split_at(keep);
        train.extend(tr.iter().copied());
        test.extend(te.iter().copied());
    }
    Ok(SplitPair { train, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse(text: &str) -> Result<(InteractionDataset, RatingsParseStats)> {
        parse_movielens_reader(Cursor::new(text), "::", Path::new("mem"))
    }

    #[test]
    fn parses_movielens_line() {
        let (ds, stats) = parse("1::1193::5::978300760\n").unwrap();
        assert_eq!(stats.ratings, 1);
        let r = ds.get(UserId(1), ItemId(1193)).unwrap();
        assert_eq!(r.stars, 5);
        assert_eq!(r.timestamp, Some(978300760));
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        let (ds, stats) = parse("").unwrap();
        assert!(ds.is_empty());
        assert_eq!(stats.ratings, 0);
    }

    #[test]
    fn out_of_range_stars_rejected_and_counted() {
        let (ds, stats) = parse("1::1193::9::0\n1::1::0::0\n2::3::4::0\n").unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(stats.out_of_range, 2);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse("1::2::3::4\n1::2\n").unwrap_err();
        match err {
            Error::Record { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse("1::x::3\n2::y::3\n"),
            Err(Error::Record { line: 1, .. })
        ));
    }

    #[test]
    fn csv_variant_with_header() {
        let text = "userId,movieId,rating,timestamp\n1,10,4,5\n";
        let (ds, stats) = parse_movielens_reader(Cursor::new(text), ",", Path::new("mem")).unwrap();
        assert!(stats.skipped_header);
        assert_eq!(ds.len(), 1);
    }

    #[test]
    fn duplicate_rating_last_wins() {
        let (ds, stats) = parse("1::2::3::0\n1::2::5::0\n").unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(stats.duplicates, 1);
        assert_eq!(ds.get(UserId(1), ItemId(2)).unwrap().stars, 5);
    }

    fn genres(text: &str) -> (GenreMap, GenreParseStats) {
        parse_genres_reader(Cursor::new(text), "::", Path::new("mem")).unwrap()
    }

    #[test]
    fn parses_genre_line() {
        let (map, _) = genres("1::Toy Story (1995)::Animation|Children's|Comedy\n");
        let expected: BTreeSet<String> = ["Animation", "Children's", "Comedy"]
            .into_iter()
            .map(String::from)
            .collect();
        assert_eq!(map[&ItemId(1)], expected);
    }

    #[test]
    fn single_genre_is_singleton() {
        let (map, _) = genres("2::Jumanji (1995)::Adventure\n");
        assert_eq!(map[&ItemId(2)].len(), 1);
    }

    #[test]
    fn duplicate_genre_line_last_wins() {
        let (map, stats) = genres("3::A::Drama\n3::A::Comedy|War\n");
        assert_eq!(stats.duplicates, 1);
        assert_eq!(map[&ItemId(3)].iter().cloned().collect::<Vec<_>>(), ["Comedy", "War"]);
    }

    #[test]
    fn empty_genre_field_omitted() {
        let (map, stats) = genres("4::Untitled::\n5::Title with :: inside::Horror\n");
        assert!(!map.contains_key(&ItemId(4)));
        assert_eq!(stats.empty_genres, 1);
        assert!(map[&ItemId(5)].contains("Horror"));
    }

    #[test]
    fn latin1_titles_do_not_break_parsing() {
        let bytes = b"6::Caf\xe9 (1999)::Drama\n".to_vec();
        let (map, _) = parse_genres_reader(Cursor::new(bytes), "::", Path::new("mem")).unwrap();
        assert!(map.contains_key(&ItemId(6)));
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_rating(5, DEFAULT_EPSILON).unwrap(), 0.99);
        assert_eq!(normalize_rating(1, DEFAULT_EPSILON).unwrap(), 0.01);
        assert_eq!(normalize_rating(3, DEFAULT_EPSILON).unwrap(), 0.5);
        assert!(normalize_rating(0, DEFAULT_EPSILON).is_err());
        assert!(normalize_rating(6, DEFAULT_EPSILON).is_err());
    }

    #[test]
    fn normalization_strictly_monotone_within_bounds() {
        let values: Vec<f64> = (1..=5).map(|s| normalize_rating(s, DEFAULT_EPSILON).unwrap()).collect();
        assert!(values.windows(2).all(|w| w[0] < w[1]));
        assert!(values.iter().all(|&v| (0.01..=0.99).contains(&v)));
    }

    fn user_with(n: u32, user: u32) -> Vec<Rating> {
        (0..n)
            .map(|i| Rating::new(UserId(user), ItemId(i), (i % 5 + 1) as u8))
            .collect()
    }

    #[test]
    fn split_counts() {
        let ds = InteractionDataset::from_ratings(user_with(20, 1)).unwrap();
        let split = holdout_split(&ds, 0.8, 3).unwrap();
        assert_eq!(split.train.len(), 16);
        assert_eq!(split.test.len(), 4);
    }

    #[test]
    fn split_single_rating_goes_to_train() {
        let ds = InteractionDataset::from_ratings(user_with(1, 1)).unwrap();
        let split = holdout_split(&ds, 0.8, 3).unwrap();
        assert_eq!(split.train.len(), 1);
        assert!(split.test.is_empty());
    }

    #[test]
    fn split_round_half_up() {
        assert_eq!(train_count(15, 0.8), 12);
        assert_eq!(train_count(5, 0.5), 3);
        assert_eq!(train_count(2, 0.8), 2);
        assert_eq!(train_count(7, 0.5), 4);
    }

    #[test]
    fn split_seed_changes_membership_not_counts() {
        let ds = InteractionDataset::from_ratings(user_with(10, 1)).unwrap();
        let a = holdout_split(&ds, 0.8, 1).unwrap();
        let b = holdout_split(&ds, 0.8, 2).unwrap();
        assert_eq!((a.train.len(), a.test.len()), (8, 2));
        assert_eq!((b.train.len(), b.test.len()), (8, 2));
        let members = |s: &SplitPair| s.test.items();
        assert_ne!(members(&a), members(&b));
        assert_eq!(a, holdout_split(&ds, 0.8, 1).unwrap());
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let ds = InteractionDataset::new();
        assert!(holdout_split(&ds, 0.0, 1).is_err());
        assert!(holdout_split(&ds, 1.0, 1).is_err());
    }
}
