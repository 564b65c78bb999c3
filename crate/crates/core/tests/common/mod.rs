#![allow(dead_code)]

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use workflow_miner::corpus::Paragraph;

pub const WORKFLOW_WORDS: &[&str] = &[
    "collected", "annotated", "preprocessing", "tokenized", "pipeline", "trained", "fine-tuned",
    "crawled", "filtered", "deduplicated", "labelled", "split", "extracted", "normalized",
    "augmented", "sampled", "evaluated", "benchmark", "annotation", "guidelines",
];

pub const OTHER_WORDS: &[&str] = &[
    "theorem", "related", "prior", "limitation", "future", "acknowledge", "funding", "discussion",
    "historically", "argue", "philosophy", "motivation", "broader", "impact", "survey", "contrast",
    "ethics", "societal", "perspective", "conclusion",
];

pub const SHARED_WORDS: &[&str] = &[
    "the", "we", "of", "and", "a", "to", "in", "model", "data", "this", "our", "for", "is", "with",
    "results", "language", "approach", "work", "method", "section",
];

/// A paragraph mixing class-specific and shared vocabulary.
pub fn synthetic_text(rng: &mut ChaCha8Rng, workflow: bool) -> String {
    let class = if workflow { WORKFLOW_WORDS } else { OTHER_WORDS };
    let len = rng.random_range(20..40);
    (0..len)
        .map(|_| {
            let pool = if rng.random_bool(0.5) { class } else { SHARED_WORDS };
            *pool.choose(rng).unwrap()
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn paragraph(paper: usize, ordinal: usize, text: String) -> Paragraph {
    Paragraph {
        paper_id: format!("syn-{paper}"),
        ordinal,
        heading: None,
        heading_emphasized: false,
        text,
    }
}

/// `(P, U, hidden truth for U)`; `negative_share` of U are true negatives.
pub fn pu_corpus(
    seed: u64,
    positives: usize,
    unlabeled: usize,
    negative_share: f64,
) -> (Vec<Paragraph>, Vec<Paragraph>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = (0..positives)
        .map(|i| paragraph(0, i, synthetic_text(&mut rng, true)))
        .collect();
    let mut truth = Vec::with_capacity(unlabeled);
    let u = (0..unlabeled)
        .map(|i| {
            let positive = !rng.random_bool(negative_share);
            truth.push(positive);
            paragraph(1, i, synthetic_text(&mut rng, positive))
        })
        .collect();
    (p, u, truth)
}

/// Two isotropic Gaussian clusters whose means differ by `separation` along
/// every axis; labels are 1 for the first cluster.
pub fn gaussian_clusters(
    seed: u64,
    per_class: usize,
    dim: usize,
    separation: f64,
) -> (Vec<Vec<f64>>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = rand_distr_normal();
    let mut xs = Vec::with_capacity(2 * per_class);
    let mut ys = Vec::with_capacity(2 * per_class);
    for i in 0..2 * per_class {
        let label = u8::from(i % 2 == 0);
        let centre = if label == 1 { separation / 2.0 } else { -separation / 2.0 };
        xs.push((0..dim).map(|_| centre + normal(&mut rng)).collect());
        ys.push(label);
    }
    (xs, ys)
}

/// Standard normal sampler (Box-Muller).
pub fn rand_distr_normal() -> impl Fn(&mut ChaCha8Rng) -> f64 {
    |rng: &mut ChaCha8Rng| {
        let u1: f64 = rng.random_range(f64::EPSILON..1.0);
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

pub mod mock_http {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};
    use std::thread;

    #[derive(Debug, Clone)]
    pub struct Request {
        pub method: String,
        pub path: String,
        pub headers: Vec<(String, String)>,
        pub body: String,
    }

    impl Request {
        pub fn header(&self, name: &str) -> Option<&str> {
            self.headers
                .iter()
                .find(|(k, _)| k.eq_ignore_ascii_case(name))
                .map(|(_, v)| v.as_str())
        }
    }

    pub struct MockServer {
        pub base_url: String,
        pub requests: Arc<Mutex<Vec<Request>>>,
    }

    /// Serves `handler(request) -> (status, body)` on a loopback port until
    /// the test process exits.
    pub fn serve<F>(handler: F) -> MockServer
    where
        F: Fn(&Request) -> (u16, String) + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let base_url = format!("http://{}", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&requests);
        let handler = Arc::new(handler);
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let log = Arc::clone(&log);
                let handler = Arc::clone(&handler);
                thread::spawn(move || {
                    let mut reader = BufReader::new(stream.try_clone().unwrap());
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        return;
                    }
                    let mut parts = line.split_whitespace();
                    let method = parts.next().unwrap_or_default().to_string();
                    let path = parts.next().unwrap_or_default().to_string();
                    let mut headers = Vec::new();
                    let mut length = 0usize;
                    loop {
                        let mut h = String::new();
                        reader.read_line(&mut h).unwrap();
                        let h = h.trim_end();
                        if h.is_empty() {
                            break;
                        }
                        if let Some((k, v)) = h.split_once(':') {
                            let (k, v) = (k.trim().to_string(), v.trim().to_string());
                            if k.eq_ignore_ascii_case("content-length") {
                                length = v.parse().unwrap_or(0);
                            }
                            headers.push((k, v));
                        }
                    }
                    let mut body = vec![0u8; length];
                    reader.read_exact(&mut body).unwrap();
                    let req = Request {
                        method,
                        path,
                        headers,
                        body: String::from_utf8_lossy(&body).into_owned(),
                    };
                    let (status, resp) = handler(&req);
                    log.lock().unwrap().push(req);
                    let out = format!(
                        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{resp}",
                        resp.len()
                    );
                    let _ = stream.write_all(out.as_bytes());
                });
            }
        });
        MockServer { base_url, requests }
    }
}

pub mod workflows;
pub mod cli;
pub mod metric_cases;
