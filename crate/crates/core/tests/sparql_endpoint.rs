//! SPARQL retrieval against an in-process endpoint that answers from the
//! N-Triples fixture, compared with dump extraction.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use semauto::kg::ntriples::{parse_line, Term};
use semauto::kg::{
    extract_features_from_path, fetch_features_sparql, parse_mapping, FeatureSelection, SparqlConfig, SparqlError,
};

type Triple = (String, String, String);

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/tiny")
        .join(name)
}

fn load_triples() -> Vec<Triple> {
    let text = std::fs::read_to_string(fixture("triples.nt")).unwrap();
    text.lines()
        .filter_map(|l| parse_line(l).ok().flatten())
        .filter_map(|t| match (&t.subject, &t.object) {
            (Term::Iri(s), Term::Iri(o)) => Some((s.to_string(), t.predicate.to_string(), o.to_string())),
            _ => None,
        })
        .collect()
}

fn values_block(query: &str, var: &str) -> BTreeSet<String> {
    let start = query.find(&format!("VALUES ?{var} {{")).expect("VALUES block");
    let rest = &query[start..];
    let end = rest.find('}').unwrap();
    rest[..end]
        .split('<')
        .skip(1)
        .map(|s| s.trim().trim_end_matches('>').to_owned())
        .collect()
}

fn answer(query: &str, triples: &[Triple]) -> String {
    let subjects = values_block(query, "s");
    let predicates = values_block(query, "p");
    let rows: Vec<serde_json::Value> = triples
        .iter()
        .filter(|(s, p, _)| subjects.contains(s) && predicates.contains(p))
        .map(|(s, p, o)| {
            serde_json::json!({
                "s": {"type": "uri", "value": s},
                "p": {"type": "uri", "value": p},
                "o": {"type": "uri", "value": o},
            })
        })
        .collect();
    serde_json::json!({"head": {"vars": ["s", "p", "o"]}, "results": {"bindings": rows}}).to_string()
}

fn read_request(stream: &mut TcpStream) -> Option<String> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut length = 0;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).ok()? == 0 {
            return None;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().ok()?;
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).ok()?;
    url::form_urlencoded::parse(&body)
        .find(|(k, _)| k == "query")
        .map(|(_, v)| v.into_owned())
}

fn respond(stream: &mut TcpStream, status: &str, body: &str) {
    let _ = write!(
        stream,
        "HTTP/1.1 {status}\r\nContent-Type: application/sparql-results+json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
}

/// Serves until the process exits. The first `fail_first` requests get a 503.
fn spawn_endpoint(fail_first: usize) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let triples = Arc::new(load_triples());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = Arc::clone(&hits);
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let triples = Arc::clone(&triples);
            let n = counter.fetch_add(1, Ordering::SeqCst);
            thread::spawn(move || {
                let Some(query) = read_request(&mut stream) else { return };
                if n < fail_first {
                    respond(&mut stream, "503 Service Unavailable", "{}");
                } else {
                    respond(&mut stream, "200 OK", &answer(&query, &triples));
                }
            });
        }
    });
    (format!("http://{addr}/sparql"), hits)
}

fn quick(endpoint: &str) -> SparqlConfig {
    SparqlConfig {
        batch_size: 2,
        initial_backoff: Duration::from_millis(10),
        timeout: Duration::from_secs(10),
        ..SparqlConfig::new(endpoint)
    }
}

#[test]
fn endpoint_matches_dump_extraction() {
    let (mapping, _) = parse_mapping(&fixture("mapping.tsv")).unwrap();
    let selection = FeatureSelection::default();
    let (from_dump, _) = extract_features_from_path(&fixture("triples.nt"), &mapping, &selection).unwrap();
    let (endpoint, _) = spawn_endpoint(0);
    let from_endpoint = fetch_features_sparql(&quick(&endpoint), &mapping, &selection).unwrap();
    assert_eq!(from_endpoint.to_sets(), from_dump.to_sets());
}

#[test]
fn transient_failures_are_retried() {
    let (mapping, _) = parse_mapping(&fixture("mapping.tsv")).unwrap();
    let selection = FeatureSelection::default();
    let (endpoint, hits) = spawn_endpoint(2);
    let config = SparqlConfig {
        concurrency: 1,
        ..quick(&endpoint)
    };
    let map = fetch_features_sparql(&config, &mapping, &selection).unwrap();
    assert_eq!(map.item_count(), 7);
    // 4 batches plus the 2 rejected attempts.
    assert_eq!(hits.load(Ordering::SeqCst), 6);
}

#[test]
fn cache_serves_repeat_queries() {
    let (mapping, _) = parse_mapping(&fixture("mapping.tsv")).unwrap();
    let selection = FeatureSelection::default();
    let cache = tempfile::tempdir().unwrap();
    let (endpoint, hits) = spawn_endpoint(0);
    let config = SparqlConfig {
        cache_dir: Some(cache.path().to_path_buf()),
        ..quick(&endpoint)
    };
    let first = fetch_features_sparql(&config, &mapping, &selection).unwrap();
    let after_first = hits.load(Ordering::SeqCst);
    let second = fetch_features_sparql(&config, &mapping, &selection).unwrap();
    assert_eq!(first, second);
    assert_eq!(hits.load(Ordering::SeqCst), after_first);
}

#[test]
fn unreachable_endpoint_reports_failure() {
    // Bind then drop to get a port nobody listens on.
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let (mapping, _) = parse_mapping(&fixture("mapping.tsv")).unwrap();
    let config = SparqlConfig {
        max_retries: 1,
        ..quick(&format!("http://127.0.0.1:{port}/sparql"))
    };
    match fetch_features_sparql(&config, &mapping, &FeatureSelection::default()) {
        Err(SparqlError::Partial {
            failed_batches,
            total_batches,
            completed,
            ..
        }) => {
            assert_eq!(failed_batches, total_batches);
            assert!(completed.is_empty());
        }
        other => panic!("expected a partial failure, got {other:?}"),
    }
}
