use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};
use std::ops::AddAssign;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::mapping::EntityMapping;
use super::ntriples::{parse_line, Term};
use crate::error::{Error, Result};
use crate::ids::{FeatureId, ItemId};
use crate::io_util::{open_reader, write_atomic, LossyLines};

pub const DCT_SUBJECT: &str = "http://purl.org/dc/terms/subject";
pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";

const FORMAT_TAG: &str = "semauto-feature-map";
const FORMAT_VERSION: u32 = 1;
const BATCH_LINES: usize = 1 << 16;

/// Which triples contribute features: predicate allow-list plus an optional
/// namespace restriction on `rdf:type` objects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSelection {
    pub predicates: BTreeSet<String>,
    pub type_namespace: Option<String>,
}

impl Default for FeatureSelection {
    fn default() -> Self {
        Self {
            predicates: [DCT_SUBJECT, RDF_TYPE].into_iter().map(String::from).collect(),
            type_namespace: None,
        }
    }
}

impl FeatureSelection {
    pub fn accepts(&self, predicate: &str, object: &str) -> bool {
        if !self.predicates.contains(predicate) {
            return false;
        }
        match &self.type_namespace {
            Some(ns) if predicate == RDF_TYPE => object.starts_with(ns.as_str()),
            _ => true,
        }
    }
}

/// Item → set of knowledge-graph feature identifiers, plus the vocabulary
/// of all features. The vocabulary is sorted, so a [`FeatureId`] is the rank
/// of its IRI and the map is independent of the order features were seen.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ItemFeatureMap {
    vocabulary: Vec<String>,
    lookup: HashMap<String, FeatureId>,
    items: BTreeMap<ItemId, Vec<FeatureId>>,
}

impl ItemFeatureMap {
    /// Builds the map from per-item IRI sets. Items with an empty set are
    /// treated as unknown to the graph and dropped.
    pub fn from_sets(sets: BTreeMap<ItemId, BTreeSet<String>>) -> Self {
        let vocabulary: Vec<String> = sets
            .values()
            .flatten()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let lookup: HashMap<String, FeatureId> = vocabulary
            .iter()
            .enumerate()
            .map(|(i, iri)| (iri.clone(), FeatureId(i as u32)))
            .collect();
        let items = sets
            .into_iter()
            .filter(|(_, s)| !s.is_empty())
            .map(|(item, s)| (item, s.iter().map(|iri| lookup[iri]).collect()))
            .collect();
        Self {
            vocabulary,
            lookup,
            items,
        }
    }

    pub fn to_sets(&self) -> BTreeMap<ItemId, BTreeSet<String>> {
        self.items
            .iter()
            .map(|(&item, fs)| (item, fs.iter().map(|&f| self.iri(f).to_owned()).collect()))
            .collect()
    }

    /// Sorted feature ids of an item, or `None` if the item is not in the graph.
    pub fn features(&self, item: ItemId) -> Option<&[FeatureId]> {
        self.items.get(&item).map(Vec::as_slice)
    }

    pub fn contains(&self, item: ItemId) -> bool {
        self.items.contains_key(&item)
    }

    pub fn iri(&self, feature: FeatureId) -> &str {
        &self.vocabulary[feature.0 as usize]
    }

    pub fn feature_id(&self, iri: &str) -> Option<FeatureId> {
        self.lookup.get(iri).copied()
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn item_count(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> impl Iterator<Item = (ItemId, &[FeatureId])> + '_ {
        self.items.iter().map(|(&i, f)| (i, f.as_slice()))
    }

    pub fn item_ids(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.items.keys().copied()
    }

    /// Total number of (item, feature) memberships.
    pub fn membership_count(&self) -> usize {
        self.items.values().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ExtractStats {
    pub lines: usize,
    pub triples: usize,
    pub malformed: usize,
    pub matched: usize,
}

impl AddAssign for ExtractStats {
    fn add_assign(&mut self, o: Self) {
        self.lines += o.lines;
        self.triples += o.triples;
        self.malformed += o.malformed;
        self.matched += o.matched;
    }
}

/// Mergeable partial extraction result. Merging is a set union, so shards
/// can be processed in any order.
#[derive(Debug, Clone, Default)]
pub struct FeatureAccumulator {
    sets: BTreeMap<ItemId, BTreeSet<String>>,
    pub stats: ExtractStats,
}

impl FeatureAccumulator {
    pub fn add(&mut self, items: &[ItemId], feature: &str) {
        self.stats.matched += 1;
        for &item in items {
            self.sets.entry(item).or_default().insert(feature.to_owned());
        }
    }

    pub fn merge(mut self, other: Self) -> Self {
        let (mut big, small) = if self.sets.len() >= other.sets.len() {
            (std::mem::take(&mut self.sets), other.sets)
        } else {
            (other.sets, std::mem::take(&mut self.sets))
        };
        for (item, fs) in small {
            big.entry(item).or_default().extend(fs);
        }
        self.stats += other.stats;
        Self {
            sets: big,
            stats: self.stats,
        }
    }

    pub fn finish(self) -> Result<(ItemFeatureMap, ExtractStats)> {
        if self.stats.matched == 0 {
            return Err(Error::EmptyFeatureMap);
        }
        Ok((ItemFeatureMap::from_sets(self.sets), self.stats))
    }

    fn consume_line(&mut self, line: &str, by_entity: &HashMap<&str, Vec<ItemId>>, sel: &FeatureSelection) {
        self.stats.lines += 1;
        let triple = match parse_line(line) {
            Ok(Some(t)) => t,
            Ok(None) => return,
            Err(_) => {
                self.stats.malformed += 1;
                return;
            }
        };
        self.stats.triples += 1;
        let (Term::Iri(subject), Term::Iri(object)) = (&triple.subject, &triple.object) else {
            return;
        };
        if let Some(items) = by_entity.get(subject.as_ref()) {
            if sel.accepts(&triple.predicate, object) {
                self.add(items, object);
            }
        }
    }
}

/// Streams N-Triples and collects, for every mapped item, the IRI objects of
/// its entity under the selected predicates. One hop only; literals and
/// blank nodes are ignored. Lines are processed in parallel batches.
pub fn extract_features<R: BufRead>(
    reader: R,
    mapping: &EntityMapping,
    selection: &FeatureSelection,
) -> Result<(ItemFeatureMap, ExtractStats)> {
    let by_entity = mapping.by_entity();
    let mut acc = FeatureAccumulator::default();
    let mut lines = LossyLines::new(reader);
    loop {
        let batch: Vec<String> = lines
            .by_ref()
            .take(BATCH_LINES)
            .collect::<std::io::Result<_>>()
            .map_err(|e| Error::io("<triples>", e))?;
        if batch.is_empty() {
            break;
        }
        let part = batch
            .par_iter()
            .fold(FeatureAccumulator::default, |mut a, line| {
                a.consume_line(line, &by_entity, selection);
                a
            })
            .reduce(FeatureAccumulator::default, FeatureAccumulator::merge);
        acc = acc.merge(part);
    }
    acc.finish()
}

pub fn extract_features_from_path(
    path: &Path,
    mapping: &EntityMapping,
    selection: &FeatureSelection,
) -> Result<(ItemFeatureMap, ExtractStats)> {
    extract_features(open_reader(path)?, mapping, selection)
}

/// Writes the map as a versioned, line-oriented text file:
///
/// ```text
/// # semauto-feature-map v1 items=2 features=3
/// 1<TAB>http://a http://b
/// 2<TAB>http://b http://c
/// ```
pub fn save_feature_map(map: &ItemFeatureMap, path: &Path) -> Result<()> {
    write_atomic(path, |out| write_feature_map(map, out))
}

pub fn write_feature_map(map: &ItemFeatureMap, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(
        out,
        "# {FORMAT_TAG} v{FORMAT_VERSION} items={} features={}",
        map.item_count(),
        map.vocabulary().len()
    )?;
    for (item, features) in map.items() {
        write!(out, "{item}\t")?;
        for (i, &f) in features.iter().enumerate() {
            if i > 0 {
                out.write_all(b" ")?;
            }
            out.write_all(map.iri(f).as_bytes())?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn load_feature_map(path: &Path) -> Result<ItemFeatureMap> {
    read_feature_map(open_reader(path)?, path)
}

pub fn read_feature_map<R: BufRead>(mut reader: R, path: &Path) -> Result<ItemFeatureMap> {
    let bad = |m: String| Error::format(path, m);
    let mut text = String::new();
    reader.read_to_string(&mut text).map_err(|e| Error::io(path, e))?;
    let mut lines = text.split_inclusive('\n');
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let (items_expected, features_expected) = parse_header(header.trim_end()).map_err(bad)?;
    let mut sets = BTreeMap::new();
    for (idx, raw) in lines.enumerate() {
        let lineno = idx + 2;
        let line = raw
            .strip_suffix('\n')
            .ok_or_else(|| bad(format!("line {lineno}: truncated record")))?;
        let (id, features) = line
            .split_once('\t')
            .ok_or_else(|| bad(format!("line {lineno}: missing tab separator")))?;
        let item: ItemId = id
            .parse()
            .map_err(|_| bad(format!("line {lineno}: invalid item id {id:?}")))?;
        let set: BTreeSet<String> = features
            .split(' ')
            .filter(|f| !f.is_empty())
            .map(String::from)
            .collect();
        if set.is_empty() {
            return Err(bad(format!("line {lineno}: item {item} has no features")));
        }
        if sets.insert(item, set).is_some() {
            return Err(bad(format!("line {lineno}: duplicate item {item}")));
        }
    }
    let map = ItemFeatureMap::from_sets(sets);
    if map.item_count() != items_expected || map.vocabulary().len() != features_expected {
        return Err(bad(format!(
            "expected {items_expected} items / {features_expected} features, found {} / {} (truncated?)",
            map.item_count(),
            map.vocabulary().len()
        )));
    }
    Ok(map)
}

fn parse_header(header: &str) -> std::result::Result<(usize, usize), String> {
    let mut parts = header.split_whitespace();
    if parts.next() != Some("#") || parts.next() != Some(FORMAT_TAG) {
        return Err("missing feature-map header".into());
    }
    let version = parts.next().unwrap_or("");
    if version != format!("v{FORMAT_VERSION}") {
        return Err(format!("unsupported format version {version:?}"));
    }
    let mut field = |key: &str| -> std::result::Result<usize, String> {
        parts
            .next()
            .and_then(|p| p.strip_prefix(key))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| format!("malformed header field {key}"))
    };
    Ok((field("items=")?, field("features=")?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    const E1: &str = "http://dbpedia.org/resource/Film_One";
    const AMERICAN: &str = "http://dbpedia.org/resource/Category:American_films";
    const FILM: &str = "http://dbpedia.org/ontology/Film";

    fn mapping(pairs: &[(u32, &str)]) -> EntityMapping {
        pairs.iter().map(|&(i, e)| (ItemId(i), e.to_owned())).collect()
    }

    fn nt(s: &str, p: &str, o: &str) -> String {
        format!("<{s}> <{p}> <{o}> .\n")
    }

    fn extract(text: &str, m: &EntityMapping) -> Result<(ItemFeatureMap, ExtractStats)> {
        extract_features(Cursor::new(text.to_owned()), m, &FeatureSelection::default())
    }

    #[test]
    fn collects_both_predicates() {
        let text = nt(E1, DCT_SUBJECT, AMERICAN) + &nt(E1, RDF_TYPE, FILM);
        let (map, stats) = extract(&text, &mapping(&[(1, E1)])).unwrap();
        let f: BTreeSet<&str> = map.features(ItemId(1)).unwrap().iter().map(|&f| map.iri(f)).collect();
        assert_eq!(f, BTreeSet::from([AMERICAN, FILM]));
        assert_eq!(stats.matched, 2);
    }

    #[test]
    fn entity_without_triples_is_dropped() {
        let text = nt(E1, DCT_SUBJECT, AMERICAN);
        let (map, _) = extract(&text, &mapping(&[(1, E1), (2, "http://x/Other")])).unwrap();
        assert!(map.contains(ItemId(1)));
        assert!(!map.contains(ItemId(2)));
    }

    #[test]
    fn duplicate_triples_have_set_semantics() {
        let text = nt(E1, DCT_SUBJECT, AMERICAN).repeat(2);
        let (map, _) = extract(&text, &mapping(&[(1, E1)])).unwrap();
        assert_eq!(map.features(ItemId(1)).unwrap().len(), 1);
    }

    #[test]
    fn literals_other_predicates_and_bad_lines_are_skipped() {
        let text = format!(
            "{}<{E1}> <{DCT_SUBJECT}> \"lit\" .\n<{E1}> <http://x/label> <http://x/y> .\nnot a triple\n",
            nt(E1, RDF_TYPE, FILM)
        );
        let (map, stats) = extract(&text, &mapping(&[(1, E1)])).unwrap();
        assert_eq!(map.features(ItemId(1)).unwrap().len(), 1);
        assert_eq!(stats.malformed, 1);
        assert_eq!(stats.triples, 3);
    }

    #[test]
    fn no_match_is_an_error() {
        let text = nt("http://x/unmapped", DCT_SUBJECT, AMERICAN);
        assert!(matches!(
            extract(&text, &mapping(&[(1, E1)])),
            Err(Error::EmptyFeatureMap)
        ));
    }

    #[test]
    fn items_sharing_an_entity_share_features() {
        let text = nt(E1, DCT_SUBJECT, AMERICAN);
        let (map, _) = extract(&text, &mapping(&[(1, E1), (2, E1)])).unwrap();
        assert_eq!(map.features(ItemId(1)), map.features(ItemId(2)));
    }

    #[test]
    fn type_namespace_filter() {
        let text = nt(E1, RDF_TYPE, FILM) + &nt(E1, RDF_TYPE, "http://schema.org/Movie");
        let sel = FeatureSelection {
            type_namespace: Some("http://dbpedia.org/ontology/".into()),
            ..Default::default()
        };
        let (map, _) = extract_features(Cursor::new(text), &mapping(&[(1, E1)]), &sel).unwrap();
        assert_eq!(map.vocabulary(), [FILM]);
    }

    fn sample_map() -> ItemFeatureMap {
        let mut sets = BTreeMap::new();
        sets.insert(
            ItemId(1),
            BTreeSet::from(["http://a".to_owned(), "http://b".to_owned()]),
        );
        sets.insert(
            ItemId(2),
            BTreeSet::from(["http://b".to_owned(), "http://c".to_owned()]),
        );
        sets.insert(ItemId(30), BTreeSet::from(["http://d#x".to_owned()]));
        ItemFeatureMap::from_sets(sets)
    }

    #[test]
    fn round_trip() {
        let map = sample_map();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.tsv");
        save_feature_map(&map, &path).unwrap();
        assert_eq!(load_feature_map(&path).unwrap(), map);
    }

    #[test]
    fn empty_and_truncated_files_are_format_errors() {
        let p = Path::new("mem");
        assert!(matches!(
            read_feature_map(Cursor::new(""), p),
            Err(Error::Format { .. })
        ));
        let mut buf = Vec::new();
        write_feature_map(&sample_map(), &mut buf).unwrap();
        let full = String::from_utf8(buf).unwrap();
        let missing_line = full.lines().take(2).map(|l| format!("{l}\n")).collect::<String>();
        assert!(matches!(
            read_feature_map(Cursor::new(missing_line), p),
            Err(Error::Format { .. })
        ));
        let cut = &full[..full.len() - 3];
        assert!(matches!(
            read_feature_map(Cursor::new(cut), p),
            Err(Error::Format { .. })
        ));
        let wrong_version = full.replacen("v1", "v9", 1);
        assert!(matches!(
            read_feature_map(Cursor::new(wrong_version), p),
            Err(Error::Format { .. })
        ));
    }
}
