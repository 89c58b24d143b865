//! Knowledge-graph side: entity mapping, N-Triples ingestion, SPARQL
//! retrieval and the persisted item → feature map.

pub mod features;
pub mod mapping;
pub mod ntriples;
pub mod sparql;

pub use features::{
    extract_features, extract_features_from_path, load_feature_map, save_feature_map, ExtractStats, FeatureAccumulator,
    FeatureSelection, ItemFeatureMap, DCT_SUBJECT, RDF_TYPE,
};
pub use mapping::{is_absolute_iri, parse_mapping, EntityMapping, MappingParseStats};
pub use sparql::{fetch_features_sparql, SparqlConfig, SparqlError};
