//! Feature retrieval from a SPARQL endpoint.
//!
//! Entities are queried in batches with a `VALUES` block; responses use the
//! SPARQL 1.1 JSON results format. Successful responses can be cached on
//! disk, keyed by a hash of endpoint and query text.

use std::fs;
use std::path::PathBuf;
use std::thread;
use std::time::Duration;

use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::features::{FeatureAccumulator, FeatureSelection, ItemFeatureMap};
use super::mapping::EntityMapping;
use crate::ids::ItemId;
use crate::io_util::write_atomic;

#[derive(Debug, Clone)]
pub struct SparqlConfig {
    pub endpoint: String,
    pub batch_size: usize,
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub timeout: Duration,
    /// Upper bound on in-flight requests.
    pub concurrency: usize,
    pub cache_dir: Option<PathBuf>,
}

impl SparqlConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            batch_size: 50,
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
            timeout: Duration::from_secs(60),
            concurrency: 4,
            cache_dir: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum SparqlError {
    #[error("invalid SPARQL configuration: {0}")]
    Config(String),

    /// Some batches failed after all retries. `completed` holds the features
    /// of the batches that succeeded; it is never returned as a final result.
    #[error("{failed_batches} of {total_batches} SPARQL batch(es) failed: {cause}")]
    Partial {
        completed: Box<ItemFeatureMap>,
        failed_batches: usize,
        total_batches: usize,
        cause: String,
    },
}

#[derive(Debug, Deserialize)]
struct ResultsDoc {
    results: Bindings,
}

#[derive(Debug, Deserialize)]
struct Bindings {
    bindings: Vec<Row>,
}

#[derive(Debug, Deserialize)]
struct Row {
    s: Value,
    p: Value,
    o: Value,
}

#[derive(Debug, Deserialize)]
struct Value {
    #[serde(rename = "type")]
    kind: String,
    value: String,
}

/// Builds the query for one batch of entity IRIs.
pub fn batch_query(entities: &[&str], selection: &FeatureSelection) -> String {
    let mut q = String::from("SELECT ?s ?p ?o WHERE {\n  VALUES ?s {");
    for e in entities {
        q.push_str(" <");
        q.push_str(e);
        q.push('>');
    }
    q.push_str(" }\n  VALUES ?p {");
    for p in &selection.predicates {
        q.push_str(" <");
        q.push_str(p);
        q.push('>');
    }
    q.push_str(" }\n  ?s ?p ?o .\n  FILTER(isIRI(?o))\n}\n");
    q
}

/// Fetches features for every mapped entity. The result equals what
/// [`extract_features`](super::extract_features) yields over a dump holding
/// the endpoint's triples.
pub fn fetch_features_sparql(
    config: &SparqlConfig,
    mapping: &EntityMapping,
    selection: &FeatureSelection,
) -> Result<ItemFeatureMap, SparqlError> {
    if config.batch_size == 0 || config.concurrency == 0 {
        return Err(SparqlError::Config(
            "batch_size and concurrency must be at least 1".into(),
        ));
    }
    let client = reqwest::blocking::Client::builder()
        .timeout(config.timeout)
        .build()
        .map_err(|e| SparqlError::Config(e.to_string()))?;
    let by_entity = mapping.by_entity();
    let mut entities: Vec<&str> = by_entity.keys().copied().collect();
    entities.sort_unstable();
    let batches: Vec<&[&str]> = entities.chunks(config.batch_size).collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.concurrency)
        .build()
        .map_err(|e| SparqlError::Config(e.to_string()))?;
    let results: Vec<Result<Vec<Row>, String>> = pool.install(|| {
        use rayon::prelude::*;
        batches
            .par_iter()
            .map(|batch| {
                let query = batch_query(batch, selection);
                let body = fetch_cached(&client, config, &query)?;
                serde_json::from_str::<ResultsDoc>(&body)
                    .map(|doc| doc.results.bindings)
                    .map_err(|e| format!("malformed SPARQL JSON response: {e}"))
            })
            .collect()
    });

    let mut acc = FeatureAccumulator::default();
    let mut failures = Vec::new();
    for result in results {
        match result {
            Ok(rows) => {
                for row in rows {
                    if row.s.kind != "uri" || row.o.kind != "uri" {
                        continue;
                    }
                    let items: &[ItemId] = match by_entity.get(row.s.value.as_str()) {
                        Some(items) => items,
                        None => continue,
                    };
                    if selection.accepts(&row.p.value, &row.o.value) {
                        acc.add(items, &row.o.value);
                    }
                }
            }
            Err(cause) => failures.push(cause),
        }
    }
    if !failures.is_empty() {
        let completed = acc.finish().map(|(m, _)| m).unwrap_or_default();
        return Err(SparqlError::Partial {
            completed: Box::new(completed),
            failed_batches: failures.len(),
            total_batches: batches.len(),
            cause: failures.swap_remove(0),
        });
    }
    acc.finish().map(|(m, _)| m).map_err(|_| SparqlError::Partial {
        completed: Box::default(),
        failed_batches: 0,
        total_batches: batches.len(),
        cause: "endpoint returned no matching triples".into(),
    })
}

fn cache_path(config: &SparqlConfig, query: &str) -> Option<PathBuf> {
    let dir = config.cache_dir.as_ref()?;
    let mut hasher = Sha256::new();
    hasher.update(config.endpoint.as_bytes());
    hasher.update([0u8]);
    hasher.update(query.as_bytes());
    Some(dir.join(format!("{}.json", hex::encode(hasher.finalize()))))
}

fn fetch_cached(client: &reqwest::blocking::Client, config: &SparqlConfig, query: &str) -> Result<String, String> {
    let cached = cache_path(config, query);
    if let Some(body) = cached.as_ref().and_then(|p| fs::read_to_string(p).ok()) {
        return Ok(body);
    }
    let body = fetch_with_retry(client, config, query)?;
    // Only well-formed documents are cached.
    if serde_json::from_str::<ResultsDoc>(&body).is_ok() {
        if let Some(path) = cached {
            if let Err(e) = write_atomic(&path, |w| w.write_all(body.as_bytes())) {
                log::warn!("could not cache SPARQL response: {e}");
            }
        }
    }
    Ok(body)
}

fn fetch_with_retry(client: &reqwest::blocking::Client, config: &SparqlConfig, query: &str) -> Result<String, String> {
    let form = url::form_urlencoded::Serializer::new(String::new())
        .append_pair("query", query)
        .finish();
    let mut backoff = config.initial_backoff;
    let mut last_error = String::new();
    for attempt in 0..=config.max_retries {
        if attempt > 0 {
            thread::sleep(backoff);
            backoff = backoff.saturating_mul(2);
        }
        let response = client
            .post(&config.endpoint)
            .header("Accept", "application/sparql-results+json")
            .header("Content-Type", "application/x-www-form-urlencoded")
            .body(form.clone())
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.text());
        match response {
            Ok(body) => return Ok(body),
            Err(e) => {
                log::debug!("SPARQL attempt {} failed: {e}", attempt + 1);
                last_error = e.to_string();
            }
        }
    }
    Err(format!(
        "request failed after {} attempt(s): {last_error}",
        config.max_retries + 1
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn query_lists_entities_and_predicates() {
        let q = batch_query(&["http://x/a", "http://x/b"], &FeatureSelection::default());
        assert!(q.contains("VALUES ?s { <http://x/a> <http://x/b> }"));
        assert!(q.contains("<http://purl.org/dc/terms/subject>"));
        assert!(q.contains("FILTER(isIRI(?o))"));
    }

    #[test]
    fn zero_batch_size_rejected() {
        let mut cfg = SparqlConfig::new("http://127.0.0.1:1/sparql");
        cfg.batch_size = 0;
        let err = fetch_features_sparql(&cfg, &EntityMapping::new(), &FeatureSelection::default());
        assert!(matches!(err, Err(SparqlError::Config(_))));
    }
}
