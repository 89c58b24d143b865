use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ids::ItemId;
use crate::io_util::{open_reader, LossyLines};

/// Catalogue item → knowledge-graph entity IRI.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityMapping {
    entries: BTreeMap<ItemId, String>,
}

impl EntityMapping {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, item: ItemId, iri: impl Into<String>) -> Result<Option<String>> {
        let iri = iri.into();
        if !is_absolute_iri(&iri) {
            return Err(Error::Contract(format!("not an absolute IRI: {iri:?}")));
        }
        Ok(self.entries.insert(item, iri))
    }

    pub fn get(&self, item: ItemId) -> Option<&str> {
        self.entries.get(&item).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ItemId, &str)> + '_ {
        self.entries.iter().map(|(&i, e)| (i, e.as_str()))
    }

    /// Entity IRI → every item mapped onto it.
    pub fn by_entity(&self) -> HashMap<&str, Vec<ItemId>> {
        let mut index: HashMap<&str, Vec<ItemId>> = HashMap::new();
        for (item, iri) in self.iter() {
            index.entry(iri).or_default().push(item);
        }
        index
    }

    /// Number of entities shared by more than one item.
    pub fn shared_entities(&self) -> usize {
        self.by_entity().values().filter(|v| v.len() > 1).count()
    }
}

impl FromIterator<(ItemId, String)> for EntityMapping {
    /// Builds a mapping without IRI validation; intended for fixtures.
    fn from_iter<T: IntoIterator<Item = (ItemId, String)>>(iter: T) -> Self {
        Self {
            entries: iter.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MappingParseStats {
    pub lines: usize,
    pub entries: usize,
    pub rejected: usize,
    pub shared_entities: usize,
}

/// `scheme ":" rest`, with no characters that are illegal in an IRI reference.
pub fn is_absolute_iri(s: &str) -> bool {
    let Some((scheme, rest)) = s.split_once(':') else {
        return false;
    };
    let mut chars = scheme.chars();
    let scheme_ok = chars.next().is_some_and(|c| c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'));
    scheme_ok
        && !rest.is_empty()
        && !s
            .chars()
            .any(|c| c <= ' ' || matches!(c, '<' | '>' | '"' | '{' | '}' | '|' | '^' | '`' | '\\'))
}

/// Parses a tab-separated `item id, title, IRI` mapping file. Lines with a
/// non-absolute IRI or an unparseable item id are rejected and counted.
pub fn parse_mapping(path: &Path) -> Result<(EntityMapping, MappingParseStats)> {
    parse_mapping_reader(open_reader(path)?, path)
}

pub fn parse_mapping_reader<R: BufRead>(reader: R, path: &Path) -> Result<(EntityMapping, MappingParseStats)> {
    let mut mapping = EntityMapping::new();
    let mut stats = MappingParseStats::default();
    for line in LossyLines::new(reader) {
        let line = line.map_err(|e| Error::io(path, e))?;
        stats.lines += 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let parsed = match fields.as_slice() {
            [id, .., iri] if fields.len() >= 2 => id
                .parse::<ItemId>()
                .ok()
                .map(|item| (item, iri.trim().trim_start_matches('<').trim_end_matches('>'))),
            _ => None,
        };
        match parsed {
            Some((item, iri)) if is_absolute_iri(iri) => {
                mapping.entries.insert(item, iri.to_owned());
            }
            _ => stats.rejected += 1,
        }
    }
    stats.entries = mapping.len();
    stats.shared_entities = mapping.shared_entities();
    Ok((mapping, stats))
}
