//! Semantic user profiles in feature space: min-max normalization of the
//! aggregated autoencoder weights, cosine neighbourhoods and neighbour-based
//! completion of missing features.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{FeatureId, UserId};
use crate::io_util::{open_reader, write_atomic};
use crate::kg::ItemFeatureMap;

const FORMAT_TAG: &str = "semauto-profiles";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Trained,
    NeighborEstimated,
}

impl Provenance {
    fn marker(self) -> char {
        match self {
            Provenance::Trained => 't',
            Provenance::NeighborEstimated => 'n',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileEntry {
    pub weight: f64,
    pub provenance: Provenance,
}

/// A user's weighted features, every weight in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureProfile {
    pub user: UserId,
    entries: BTreeMap<FeatureId, ProfileEntry>,
}

impl FeatureProfile {
    pub fn new(user: UserId) -> Self {
        Self {
            user,
            entries: BTreeMap::new(),
        }
    }

    /// Builds a profile from explicit trained weights, validating the range.
    pub fn from_weights<I>(user: UserId, weights: I) -> Result<Self>
    where
        I: IntoIterator<Item = (FeatureId, f64)>,
    {
        let mut p = Self::new(user);
        for (f, w) in weights {
            p.insert(f, w, Provenance::Trained)?;
        }
        Ok(p)
    }

    pub fn insert(&mut self, feature: FeatureId, weight: f64, provenance: Provenance) -> Result<()> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::Contract(format!(
                "profile weight {weight} for feature {feature} outside [0, 1]"
            )));
        }
        self.entries.insert(feature, ProfileEntry { weight, provenance });
        Ok(())
    }

    pub fn weight(&self, feature: FeatureId) -> Option<f64> {
        self.entries.get(&feature).map(|e| e.weight)
    }

    pub fn entry(&self, feature: FeatureId) -> Option<&ProfileEntry> {
        self.entries.get(&feature)
    }

    pub fn contains(&self, feature: FeatureId) -> bool {
        self.entries.contains_key(&feature)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in ascending feature order.
    pub fn iter(&self) -> impl Iterator<Item = (FeatureId, &ProfileEntry)> + '_ {
        self.entries.iter().map(|(&f, e)| (f, e))
    }

    pub fn weights(&self) -> impl Iterator<Item = (FeatureId, f64)> + '_ {
        self.entries.iter().map(|(&f, e)| (f, e.weight))
    }

    pub fn trained_count(&self) -> usize {
        self.entries
            .values()
            .filter(|e| e.provenance == Provenance::Trained)
            .count()
    }

    pub fn norm(&self) -> f64 {
        self.entries.values().map(|e| e.weight * e.weight).sum::<f64>().sqrt()
    }
}

/// Min-max normalizes raw feature weights into a trained profile. When all
/// raw weights are equal every feature gets 0.5.
pub fn build_profile(user: UserId, raw: &BTreeMap<FeatureId, f64>) -> Result<FeatureProfile> {
    if raw.is_empty() {
        return Err(Error::EmptyProfile);
    }
    if raw.values().any(|w| !w.is_finite()) {
        return Err(Error::Contract("non-finite raw feature weight".into()));
    }
    let min = raw.values().copied().fold(f64::INFINITY, f64::min);
    let max = raw.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let mut profile = FeatureProfile::new(user);
    for (&f, &w) in raw {
        let scaled = if span > 0.0 {
            ((w - min) / span).clamp(0.0, 1.0)
        } else {
            0.5
        };
        profile.insert(f, scaled, Provenance::Trained)?;
    }
    Ok(profile)
}

/// Cosine similarity over the union of both feature sets, absent features
/// counting as zero. Zero vectors have similarity 0.
pub fn cosine_similarity(a: &FeatureProfile, b: &FeatureProfile) -> f64 {
    let mut dot = 0.0;
    let (mut ia, mut ib) = (a.entries.iter().peekable(), b.entries.iter().peekable());
    while let (Some((fa, ea)), Some((fb, eb))) = (ia.peek(), ib.peek()) {
        match fa.cmp(fb) {
            std::cmp::Ordering::Less => {
                ia.next();
            }
            std::cmp::Ordering::Greater => {
                ib.next();
            }
            std::cmp::Ordering::Equal => {
                dot += ea.weight * eb.weight;
                ia.next();
                ib.next();
            }
        }
    }
    similarity_from_parts(dot, a.norm(), b.norm())
}

fn similarity_from_parts(dot: f64, norm_a: f64, norm_b: f64) -> f64 {
    let denom = norm_a * norm_b;
    if denom == 0.0 {
        0.0
    } else {
        (dot / denom).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeighborSet {
    pub user: UserId,
    /// Most similar first; ties by ascending user id.
    pub neighbors: Vec<(UserId, f64)>,
}

/// Inverted index over profiles for exact cosine neighbour search. Dot
/// products are accumulated in ascending feature order, so similarities are
/// bit-identical to [`cosine_similarity`].
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    users: Vec<UserId>,
    norms: Vec<f64>,
    postings: HashMap<FeatureId, Vec<(u32, f64)>>,
}

impl NeighborIndex {
    pub fn new<'a, I>(profiles: I) -> Self
    where
        I: IntoIterator<Item = &'a FeatureProfile>,
    {
        let mut profiles: Vec<&FeatureProfile> = profiles.into_iter().collect();
        profiles.sort_by_key(|p| p.user);
        profiles.dedup_by_key(|p| p.user);
        let mut postings: HashMap<FeatureId, Vec<(u32, f64)>> = HashMap::new();
        for (idx, p) in profiles.iter().enumerate() {
            for (f, w) in p.weights() {
                if w != 0.0 {
                    postings.entry(f).or_default().push((idx as u32, w));
                }
            }
        }
        Self {
            users: profiles.iter().map(|p| p.user).collect(),
            norms: profiles.iter().map(|p| p.norm()).collect(),
            postings,
        }
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    /// The `k` indexed users most similar to `query`, excluding the query's
    /// own user id.
    pub fn top_k(&self, query: &FeatureProfile, k: usize) -> NeighborSet {
        let mut dots = vec![0.0; self.users.len()];
        for (f, qw) in query.weights() {
            if let Some(list) = self.postings.get(&f) {
                for &(idx, w) in list {
                    dots[idx as usize] += qw * w;
                }
            }
        }
        let qnorm = query.norm();
        let mut scored: Vec<(UserId, f64)> = self
            .users
            .iter()
            .zip(&self.norms)
            .zip(dots)
            .filter(|((&u, _), _)| u != query.user)
            .map(|((&u, &n), dot)| (u, similarity_from_parts(dot, qnorm, n)))
            .collect();
        let by_rank = |a: &(UserId, f64), b: &(UserId, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
        if k < scored.len() {
            scored.select_nth_unstable_by(k, by_rank);
            scored.truncate(k);
        }
        scored.sort_unstable_by(by_rank);
        NeighborSet {
            user: query.user,
            neighbors: scored,
        }
    }
}

/// The `k` profiles most similar to `user`'s profile (fewer if the population
/// is smaller). Ties are broken by ascending user id.
pub fn top_k_neighbors(user: &FeatureProfile, all_profiles: &[FeatureProfile], k: usize) -> Result<NeighborSet> {
    if k == 0 {
        return Err(Error::Contract("k must be at least 1".into()));
    }
    Ok(NeighborIndex::new(all_profiles).top_k(user, k))
}

/// How neighbour weights are averaged when completing a profile.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompletionMode {
    /// Sum over all k neighbours (absent = 0) divided by k.
    #[default]
    DivideByK,
    /// Mean over the neighbours that have the feature.
    DivideByPossessing,
}

/// Adds every feature some neighbour has and `profile` lacks, weighted by the
/// neighbours' summed weight divided by `k`. Existing entries are untouched.
pub fn complete_profile<'a, F>(
    profile: &FeatureProfile,
    neighbors: &NeighborSet,
    neighbor_profile: F,
    k: usize,
    mode: CompletionMode,
) -> Result<FeatureProfile>
where
    F: Fn(UserId) -> Option<&'a FeatureProfile>,
{
    if k == 0 {
        return Err(Error::Contract("k must be at least 1".into()));
    }
    if neighbors.neighbors.len() > k {
        return Err(Error::Contract(format!(
            "{} neighbours supplied for k = {k}",
            neighbors.neighbors.len()
        )));
    }
    let mut sums: BTreeMap<FeatureId, (f64, usize)> = BTreeMap::new();
    for &(u, _) in &neighbors.neighbors {
        let Some(np) = neighbor_profile(u) else {
            continue;
        };
        for (f, w) in np.weights() {
            if !profile.contains(f) {
                let slot = sums.entry(f).or_insert((0.0, 0));
                slot.0 += w;
                slot.1 += 1;
            }
        }
    }
    let mut completed = profile.clone();
    for (f, (sum, holders)) in sums {
        let denom = match mode {
            CompletionMode::DivideByK => k,
            CompletionMode::DivideByPossessing => holders,
        };
        let estimate = (sum / denom as f64).clamp(0.0, 1.0);
        completed.insert(f, estimate, Provenance::NeighborEstimated)?;
    }
    Ok(completed)
}

/// Writes profiles as versioned tab-separated records:
/// `user<TAB>IRI=weight:t<TAB>IRI=weight:n…` where `t`/`n` mark trained and
/// neighbour-estimated features.
pub fn save_profiles(profiles: &[FeatureProfile], features: &ItemFeatureMap, path: &Path) -> Result<()> {
    write_atomic(path, |out| write_profiles(profiles, features, out))
}

pub fn write_profiles(
    profiles: &[FeatureProfile],
    features: &ItemFeatureMap,
    out: &mut dyn Write,
) -> std::io::Result<()> {
    writeln!(out, "# {FORMAT_TAG} v{FORMAT_VERSION} users={}", profiles.len())?;
    for p in profiles {
        write!(out, "{}", p.user)?;
        for (f, e) in p.iter() {
            write!(out, "\t{}={}:{}", features.iri(f), e.weight, e.provenance.marker())?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn load_profiles(path: &Path, features: &ItemFeatureMap) -> Result<Vec<FeatureProfile>> {
    read_profiles(open_reader(path)?, features, path)
}

pub fn read_profiles<R: BufRead>(mut reader: R, features: &ItemFeatureMap, path: &Path) -> Result<Vec<FeatureProfile>> {
    let bad = |m: String| Error::format(path, m);
    let mut text = String::new();
    reader.read_to_string(&mut text).map_err(|e| Error::io(path, e))?;
    let mut lines = text.split_inclusive('\n');
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let expected = header
        .trim_end()
        .strip_prefix(&format!("# {FORMAT_TAG} v{FORMAT_VERSION} users="))
        .and_then(|n| n.parse::<usize>().ok())
        .ok_or_else(|| bad(format!("bad or unsupported header {:?}", header.trim_end())))?;
    let mut profiles = Vec::with_capacity(expected);
    for (idx, raw) in lines.enumerate() {
        let lineno = idx + 2;
        let line = raw
            .strip_suffix('\n')
            .ok_or_else(|| bad(format!("line {lineno}: truncated record")))?;
        let mut fields = line.split('\t');
        let user: UserId = fields
            .next()
            .and_then(|u| u.parse().ok())
            .ok_or_else(|| bad(format!("line {lineno}: invalid user id")))?;
        let mut profile = FeatureProfile::new(user);
        for field in fields {
            let parsed = field.rsplit_once('=').and_then(|(iri, rest)| {
                let (w, marker) = rest.split_once(':')?;
                let provenance = match marker {
                    "t" => Provenance::Trained,
                    "n" => Provenance::NeighborEstimated,
                    _ => return None,
                };
                Some((iri, w.parse::<f64>().ok()?, provenance))
            });
            let (iri, weight, provenance) =
                parsed.ok_or_else(|| bad(format!("line {lineno}: malformed entry {field:?}")))?;
            let f = features
                .feature_id(iri)
                .ok_or_else(|| bad(format!("line {lineno}: feature {iri} not in feature map")))?;
            profile
                .insert(f, weight, provenance)
                .map_err(|e| bad(format!("line {lineno}: {e}")))?;
        }
        profiles.push(profile);
    }
    if profiles.len() != expected {
        return Err(bad(format!(
            "expected {expected} profiles, found {} (truncated?)",
            profiles.len()
        )));
    }
    Ok(profiles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn raw(pairs: &[(u32, f64)]) -> BTreeMap<FeatureId, f64> {
        pairs.iter().map(|&(f, w)| (FeatureId(f), w)).collect()
    }

    fn profile(user: u32, pairs: &[(u32, f64)]) -> FeatureProfile {
        FeatureProfile::from_weights(UserId(user), pairs.iter().map(|&(f, w)| (FeatureId(f), w))).unwrap()
    }

    #[test]
    fn min_max_examples() {
        let p = build_profile(UserId(1), &raw(&[(0, 0.1), (1, 0.3), (2, 0.5)])).unwrap();
        let w: Vec<f64> = p.weights().map(|(_, w)| w).collect();
        assert_eq!(w[0], 0.0);
        assert!((w[1] - 0.5).abs() < 1e-15);
        assert_eq!(w[2], 1.0);
    }

    #[test]
    fn degenerate_min_max_gives_half() {
        let p = build_profile(UserId(1), &raw(&[(0, 0.2), (1, 0.2)])).unwrap();
        assert!(p.weights().all(|(_, w)| w == 0.5));
        let p = build_profile(UserId(1), &raw(&[(0, 0.7)])).unwrap();
        assert_eq!(p.weight(FeatureId(0)), Some(0.5));
        assert!(matches!(
            build_profile(UserId(1), &BTreeMap::new()),
            Err(Error::EmptyProfile)
        ));
    }

    #[test]
    fn cosine_examples() {
        let a = profile(1, &[(0, 1.0), (1, 0.5)]);
        let b = profile(2, &[(0, 0.5), (1, 1.0)]);
        assert!((cosine_similarity(&a, &b) - 0.8).abs() < 1e-15);
        assert!((cosine_similarity(&a, &a) - 1.0).abs() < 1e-15);
        let c = profile(3, &[(5, 1.0)]);
        assert_eq!(cosine_similarity(&a, &c), 0.0);
        let zero = profile(4, &[(0, 0.0)]);
        assert_eq!(cosine_similarity(&a, &zero), 0.0);
        assert_eq!(cosine_similarity(&FeatureProfile::new(UserId(9)), &a), 0.0);
    }

    #[test]
    fn top_k_picks_most_similar() {
        let me = profile(0, &[(0, 1.0)]);
        let others = vec![
            profile(1, &[(0, 0.9), (1, 0.436)]),
            profile(2, &[(0, 0.2), (1, 0.98)]),
            profile(3, &[(0, 0.5), (1, 0.866)]),
            me.clone(),
        ];
        let n = top_k_neighbors(&me, &others, 2).unwrap();
        let ids: Vec<u32> = n.neighbors.iter().map(|(u, _)| u.0).collect();
        assert_eq!(ids, [1, 3]);
        let all = top_k_neighbors(&me, &others, 10).unwrap();
        assert_eq!(all.neighbors.len(), 3);
        assert!(top_k_neighbors(&me, &others, 0).is_err());
    }

    #[test]
    fn ties_broken_by_user_id() {
        let me = profile(5, &[(0, 1.0)]);
        let others = vec![
            profile(9, &[(0, 1.0)]),
            profile(2, &[(0, 1.0)]),
            profile(7, &[(1, 1.0)]),
        ];
        let n = top_k_neighbors(&me, &others, 3).unwrap();
        let ids: Vec<u32> = n.neighbors.iter().map(|(u, _)| u.0).collect();
        assert_eq!(ids, [2, 9, 7]);
    }

    fn complete(p: &FeatureProfile, neigh: &[FeatureProfile], k: usize, mode: CompletionMode) -> FeatureProfile {
        let set = NeighborSet {
            user: p.user,
            neighbors: neigh.iter().map(|n| (n.user, 1.0)).collect(),
        };
        let lookup: HashMap<UserId, &FeatureProfile> = neigh.iter().map(|n| (n.user, n)).collect();
        complete_profile(p, &set, |u| lookup.get(&u).copied(), k, mode).unwrap()
    }

    #[test]
    fn completion_divides_by_k() {
        let me = profile(0, &[(0, 0.9)]);
        let both = [profile(1, &[(7, 0.4)]), profile(2, &[(7, 0.6)])];
        let c = complete(&me, &both, 2, CompletionMode::DivideByK);
        assert!((c.weight(FeatureId(7)).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(c.entry(FeatureId(7)).unwrap().provenance, Provenance::NeighborEstimated);

        let one = [profile(1, &[(7, 0.8)]), profile(2, &[(8, 0.2)])];
        let c = complete(&me, &one, 2, CompletionMode::DivideByK);
        assert_eq!(c.weight(FeatureId(7)), Some(0.4));
        let c = complete(&me, &one, 2, CompletionMode::DivideByPossessing);
        assert_eq!(c.weight(FeatureId(7)), Some(0.8));
    }

    #[test]
    fn completion_keeps_trained_features() {
        let me = profile(0, &[(3, 0.9)]);
        let n = [profile(1, &[(3, 0.1)]), profile(2, &[(3, 0.1)])];
        let c = complete(&me, &n, 2, CompletionMode::DivideByK);
        assert_eq!(c.weight(FeatureId(3)), Some(0.9));
        assert_eq!(c.entry(FeatureId(3)).unwrap().provenance, Provenance::Trained);
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn completion_rejects_oversized_neighbourhood() {
        let me = profile(0, &[(0, 1.0)]);
        let n = [profile(1, &[(1, 1.0)]), profile(2, &[(1, 1.0)])];
        let set = NeighborSet {
            user: me.user,
            neighbors: n.iter().map(|p| (p.user, 1.0)).collect(),
        };
        assert!(complete_profile(&me, &set, |_| None, 1, CompletionMode::DivideByK).is_err());
    }

    #[test]
    fn profiles_round_trip() {
        let sets = BTreeMap::from([(
            crate::ItemId(1),
            BTreeSet::from(["http://a".to_owned(), "http://b=c".to_owned(), "http://d".to_owned()]),
        )]);
        let fmap = ItemFeatureMap::from_sets(sets);
        let mut p = profile(4, &[(0, 0.25), (1, 1.0 / 3.0)]);
        p.insert(FeatureId(2), 0.1, Provenance::NeighborEstimated).unwrap();
        let profiles = vec![p, profile(7, &[])];
        let mut buf = Vec::new();
        write_profiles(&profiles, &fmap, &mut buf).unwrap();
        let back = read_profiles(std::io::Cursor::new(buf.clone()), &fmap, Path::new("mem")).unwrap();
        assert_eq!(back, profiles);
        let cut = &buf[..buf.len() - 5];
        assert!(read_profiles(std::io::Cursor::new(cut), &fmap, Path::new("mem")).is_err());
    }
}
