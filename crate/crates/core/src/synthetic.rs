//! Generated datasets whose ratings are a noiseless function of item
//! features. Used for end-to-end checks and demos.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;

use crate::dataset::{GenreMap, InteractionDataset, Rating};
use crate::error::{Error, Result};
use crate::ids::{ItemId, UserId};
use crate::io_util::write_atomic;
use crate::kg::{EntityMapping, ItemFeatureMap, DCT_SUBJECT};
use crate::seeding::{rng_for, stage};

pub const RESOURCE_NS: &str = "http://example.org/resource/";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticConfig {
    pub users: u32,
    pub items: u32,
    /// Must be a multiple of `block_size`.
    pub features: u32,
    /// Features per category block. Each user likes exactly one block, and
    /// each block is one genre.
    pub block_size: u32,
    /// Features an item takes from its own block; one more is drawn from
    /// the whole vocabulary.
    pub in_block: u32,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            users: 100,
            items: 50,
            features: 12,
            block_size: 3,
            in_block: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub ratings: InteractionDataset,
    pub features: ItemFeatureMap,
    pub genres: GenreMap,
    pub mapping: EntityMapping,
    /// Liked features per user, by feature index.
    pub tastes: BTreeMap<UserId, BTreeSet<u32>>,
}

pub fn item_iri(item: ItemId) -> String {
    format!("{RESOURCE_NS}Item_{}", item.0)
}

pub fn feature_iri(index: u32) -> String {
    format!("{RESOURCE_NS}Category:F{index:02}")
}

/// Star rule: `min(5, 1 + 2·|liked ∩ features|)`.
pub fn stars_for(liked: &BTreeSet<u32>, features: &BTreeSet<u32>) -> u8 {
    let overlap = liked.intersection(features).count().min(2) as u8;
    1 + 2 * overlap
}

/// Every user rates every item. Items sit mostly inside one block, users
/// like one block, and stars follow [`stars_for`].
pub fn generate(config: &SyntheticConfig) -> Result<SyntheticData> {
    if config.block_size == 0
        || !config.features.is_multiple_of(config.block_size)
        || config.in_block > config.block_size
        || config.in_block >= config.features
    {
        return Err(Error::Contract("inconsistent synthetic dataset shape".into()));
    }
    let blocks = config.features / config.block_size;
    let mut rng = rng_for(config.seed, &[stage::SYNTHETIC, 0]);
    let item_features: BTreeMap<ItemId, BTreeSet<u32>> = (1..=config.items)
        .map(|i| {
            let block = rng.gen_range(0..blocks);
            let mut fs: BTreeSet<u32> = sample(&mut rng, config.block_size as usize, config.in_block as usize)
                .into_iter()
                .map(|j| block * config.block_size + j as u32)
                .collect();
            while fs.len() as u32 == config.in_block {
                fs.insert(rng.gen_range(0..config.features));
            }
            (ItemId(i), fs)
        })
        .collect();

    let mut rng = rng_for(config.seed, &[stage::SYNTHETIC, 1]);
    let tastes: BTreeMap<UserId, BTreeSet<u32>> = (1..=config.users)
        .map(|u| {
            let block = rng.gen_range(0..blocks);
            let liked = (0..config.block_size).map(|j| block * config.block_size + j).collect();
            (UserId(u), liked)
        })
        .collect();

    let mut ratings = InteractionDataset::new();
    for (&user, liked) in &tastes {
        for (&item, fs) in &item_features {
            let mut r = Rating::new(user, item, stars_for(liked, fs));
            r.timestamp = Some(i64::from(user.0) * 1000 + i64::from(item.0));
            ratings.insert(r);
        }
    }

    let features = ItemFeatureMap::from_sets(
        item_features
            .iter()
            .map(|(&i, fs)| (i, fs.iter().map(|&f| feature_iri(f)).collect()))
            .collect(),
    );
    let genres = item_features
        .iter()
        .map(|(&i, fs)| {
            (
                i,
                fs.iter().map(|&f| format!("Genre{}", f / config.block_size)).collect(),
            )
        })
        .collect();
    let mapping = item_features.keys().map(|&i| (i, item_iri(i))).collect();
    Ok(SyntheticData {
        ratings,
        features,
        genres,
        mapping,
        tastes,
    })
}

impl SyntheticData {
    /// Writes `ratings.dat`, `movies.dat`, `mapping.tsv` and `triples.nt`
    /// into `dir` in the formats the ingest commands read.
    pub fn write_files(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_atomic(&dir.join("ratings.dat"), |out| self.ratings.write_movielens(out))?;
        write_atomic(&dir.join("movies.dat"), |out| self.write_movies(out))?;
        write_atomic(&dir.join("mapping.tsv"), |out| {
            for (item, iri) in self.mapping.iter() {
                writeln!(out, "{item}\tMovie {item}\t<{iri}>")?;
            }
            Ok(())
        })?;
        write_atomic(&dir.join("triples.nt"), |out| self.write_triples(out))
    }

    fn write_movies(&self, out: &mut dyn Write) -> io::Result<()> {
        for (item, genres) in &self.genres {
            let joined: Vec<&str> = genres.iter().map(String::as_str).collect();
            writeln!(out, "{item}::Movie {item} (2000)::{}", joined.join("|"))?;
        }
        Ok(())
    }

    fn write_triples(&self, out: &mut dyn Write) -> io::Result<()> {
        for (item, fs) in self.features.items() {
            let subject = item_iri(item);
            for &f in fs {
                writeln!(out, "<{subject}> <{DCT_SUBJECT}> <{}> .", self.features.iri(f))?;
            }
            writeln!(
                out,
                "<{subject}> <http://www.w3.org/2000/01/rdf-schema#label> \"Movie {item}\"@en ."
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_rule() {
        let data = generate(&SyntheticConfig::default()).unwrap();
        assert_eq!(data.ratings.len(), 100 * 50);
        assert_eq!(data.features.item_count(), 50);
        assert!(data.features.vocabulary().len() <= 12);
        for r in data.ratings.iter() {
            let fs: BTreeSet<u32> = data
                .features
                .features(r.item)
                .unwrap()
                .iter()
                .map(|&f| data.features.iri(f)[RESOURCE_NS.len() + 10..].parse().unwrap())
                .collect();
            assert!(fs.len() == 3);
            let overlap = fs.intersection(&data.tastes[&r.user]).count() as u8;
            assert_eq!(r.stars, (1 + 2 * overlap).min(5));
        }
    }

    #[test]
    fn tastes_are_blocks() {
        let data = generate(&SyntheticConfig::default()).unwrap();
        for liked in data.tastes.values() {
            let first = *liked.first().unwrap();
            assert_eq!(first % 3, 0);
            assert_eq!(*liked, BTreeSet::from([first, first + 1, first + 2]));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&SyntheticConfig::default()).unwrap();
        let b = generate(&SyntheticConfig::default()).unwrap();
        assert_eq!(a.ratings, b.ratings);
        let c = generate(&SyntheticConfig {
            seed: 1,
            ..SyntheticConfig::default()
        })
        .unwrap();
        assert_ne!(a.ratings, c.ratings);
    }
}
