//! Acceptance suite: one PASS/FAIL line per criterion with its runtime
//! budget. Exits non-zero when any criterion fails.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use common::workflows::{check_mermaid, random_corpus, reference_input, reference_rows};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use workflow_miner::analytics::{annual_counts, stage_averages, top_k_per_year};
use workflow_miner::classifier::{decide, train_on_embeddings, HeadParam, MlpHeadParams, TrainingConfig};
use workflow_miner::generate::{builtin_template, builtin_templates, render_prompt};
use workflow_miner::llm::{ChatMessage, ChatModel};
use workflow_miner::normalize::{cluster_phrases, similarity};
use workflow_miner::pu::{compute_threshold, run_spy_pipeline, select_reliable_negatives, RnTarget, SpyConfig};
use workflow_miner::stage::{classify_batch, parse_response, serialize_response, FewShotPromptConfig, Stage, StageSource};
use workflow_miner::workflow::{assemble, render_mermaid, render_table_row};
use workflow_miner::{Error, Result};

struct Criterion {
    name: &'static str,
    limit: Duration,
    run: fn() -> String,
}

fn metrics_oracles() -> String {
    let cases = common::metric_cases::cases();
    assert!(cases.len() >= 25, "only {} fixtures", cases.len());
    for (name, got, want) in &cases {
        assert!((got - want).abs() <= 1e-9, "{name}: {got} vs {want}");
    }
    format!("{} fixtures within 1e-9", cases.len())
}

fn spy_selection() -> String {
    let config = SpyConfig::default();
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let (p, u, truth) = common::pu_corpus(seed, 500, 5000, 0.9);
        let run = run_spy_pipeline(&p, &u, &config).unwrap();
        run.pools.check_invariants().unwrap();
        let rn = &run.pools.reliable_negatives;
        assert_eq!(rn.len(), p.len(), "seed {seed}: |RN| != |P|");
        let dirty = rn.iter().filter(|r| truth[r.ordinal]).count() as f64 / rn.len() as f64;
        assert!(dirty <= 0.01, "seed {seed}: contamination {dirty}");
        worst = worst.max(dirty);

        if seed % 5 == 0 {
            let scored: Vec<(usize, f64)> = u.iter().map(|x| (x.ordinal, run.model.predict_prob(&x.text))).collect();
            let probs: Vec<f64> = scored.iter().map(|s| s.1).collect();
            let mut last: Option<(f64, BTreeSet<usize>)> = None;
            for q in [0.0, 0.01, 0.05, 0.1, 0.25, 0.5, 0.9, 1.0] {
                let t = compute_threshold(&probs, q).unwrap();
                let cand: BTreeSet<usize> =
                    select_reliable_negatives(&scored, t, RnTarget::AllBelowThreshold, 0).into_iter().collect();
                if let Some((pt, pc)) = &last {
                    assert!(t >= *pt, "seed {seed}: threshold fell at q={q}");
                    assert!(cand.is_superset(pc), "seed {seed}: candidates shrank at q={q}");
                }
                last = Some((t, cand));
            }
        }
    }
    format!("20 seeds, worst contamination {:.4}", worst)
}

fn head_training() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (input, hidden) = (10, 8);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let mut params = MlpHeadParams::initialized(input, hidden, rng.random());
        for b in params.b_hidden.iter_mut() {
            *b = rng.random_range(-0.5..0.5);
        }
        params.b_output = rng.random_range(-0.5..0.5);
        let x: Vec<f64> = (0..input).map(|_| rng.random_range(-2.0..2.0)).collect();
        let label = rng.random_range(0..2u8);
        let (_, grads) = params.loss_and_gradients(&x, label).unwrap();
        let coord = match rng.random_range(0..4) {
            0 => HeadParam::WHidden(rng.random_range(0..hidden), rng.random_range(0..input)),
            1 => HeadParam::BHidden(rng.random_range(0..hidden)),
            2 => HeadParam::WOutput(rng.random_range(0..hidden)),
            _ => HeadParam::BOutput,
        };
        let loss_at = |d: f64| {
            let mut p = params.clone();
            p.set(coord, params.get(coord) + d);
            p.loss_and_gradients(&x, label).unwrap().0
        };
        let numeric = (loss_at(1e-6) - loss_at(-1e-6)) / 2e-6;
        let analytic = grads.get(coord);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        assert!(rel < 1e-4, "{coord:?}: analytic {analytic} numeric {numeric}");
        worst = worst.max(rel);
    }

    let cfg = TrainingConfig {
        hidden_size: 64,
        ..Default::default()
    };
    let (xs, ys) = common::gaussian_clusters(1, 1000, 16, 2.0);
    let (vx, vy) = common::gaussian_clusters(2, 250, 16, 2.0);
    let out = train_on_embeddings(&xs, &ys, &vx, &vy, &cfg).unwrap();
    let separable = out.history[out.best_epoch - 1].validation.f1;
    assert!(separable >= 0.99, "separable F1 {separable}");

    let (xs, _) = common::gaussian_clusters(3, 1000, 16, 0.0);
    let (vx, _) = common::gaussian_clusters(4, 500, 16, 0.0);
    let mut labels = |n: usize| {
        let mut y: Vec<u8> = (0..n).map(|i| u8::from(i % 2 == 0)).collect();
        rand::seq::SliceRandom::shuffle(y.as_mut_slice(), &mut rng);
        y
    };
    let (ys, vy) = (labels(xs.len()), labels(vx.len()));
    let out = train_on_embeddings(&xs, &ys, &vx, &vy, &cfg).unwrap();
    let chance = out.history[out.best_epoch - 1].validation.f1;
    assert!((chance - 0.5).abs() <= 0.1, "random-label F1 {chance}");
    assert_eq!(decide(0.5, 0.5), 1);
    format!("max grad rel err {worst:.1e}, separable F1 {separable:.3}, random F1 {chance:.3}")
}

fn prompt_templates() -> String {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/templates");
    let all = builtin_templates();
    assert_eq!(all.len(), 10);
    for t in &all {
        let golden = std::fs::read(dir.join(format!("prompt_{:02}.txt", t.id))).unwrap();
        assert_eq!(t.pattern.as_bytes(), golden.as_slice(), "template {}", t.id);
    }
    let t = builtin_template(9).unwrap();
    let r = render_prompt(&t, "We annotated 500 tweets.", Some(512)).unwrap();
    assert_eq!(r.text, "We annotated 500 tweets. Generate a title describing research workflow for the above text:");
    "10 golden templates, template 9 renders".into()
}

struct Garbage {
    calls: Mutex<usize>,
}

impl ChatModel for Garbage {
    fn id(&self) -> String {
        "garbage".into()
    }

    fn chat(&self, _: &[ChatMessage]) -> Result<String> {
        *self.calls.lock().unwrap() += 1;
        Ok("I would rather not say".into())
    }
}

fn stage_grammar() -> String {
    const WORDS: &[&str] = &["data", "model", "topic", "error", "corpus", "bert", "study", "tuning", "x2"];
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for round in 0..1000 {
        let n = rng.random_range(1..12);
        let items: Vec<(String, Stage)> = (0..n)
            .map(|i| {
                let len = rng.random_range(1..4);
                let words: Vec<&str> = (0..len).map(|_| *WORDS.choose(&mut rng).unwrap()).collect();
                (format!("{} {i}", words.join(" ")), Stage::ALL[rng.random_range(0..3)])
            })
            .collect();
        let phrases: Vec<String> = items.iter().map(|(p, _)| p.clone()).collect();
        let parsed = parse_response(&serialize_response(&items), &phrases).unwrap();
        let got: Vec<(String, Stage)> = parsed.into_iter().map(|s| (s.phrase, s.stage)).collect();
        assert_eq!(got, items, "round {round}");
    }
    let batch: Vec<String> = vec!["data collection".into(), "topic modeling".into()];
    assert!(matches!(
        parse_response("data collection // data_preparation", &batch),
        Err(Error::Response { .. })
    ));
    assert!(parse_response(
        "data collection // data_preparation\ntopic modeling // modelling",
        &batch
    )
    .is_err());
    let chat = Garbage { calls: Mutex::new(0) };
    let out = classify_batch(&chat, &FewShotPromptConfig::default(), &batch, 0).unwrap();
    assert!(out.iter().all(|s| s.source == StageSource::Rule));
    assert_eq!(*chat.calls.lock().unwrap(), 3);
    "1000 round trips, malformed replies rejected, rule fallback after 2 retries".into()
}

fn lev(a: &[char], b: &[char]) -> usize {
    let mut memo = vec![vec![usize::MAX; b.len() + 1]; a.len() + 1];
    fn go(a: &[char], b: &[char], i: usize, j: usize, m: &mut Vec<Vec<usize>>) -> usize {
        if i == a.len() {
            return b.len() - j;
        }
        if j == b.len() {
            return a.len() - i;
        }
        if m[i][j] == usize::MAX {
            let sub = go(a, b, i + 1, j + 1, m) + usize::from(a[i] != b[j]);
            m[i][j] = sub.min(go(a, b, i + 1, j, m) + 1).min(go(a, b, i, j + 1, m) + 1);
        }
        m[i][j]
    }
    go(a, b, 0, 0, &mut memo)
}

fn oracle_similarity(a: &str, b: &str) -> f64 {
    let (a, b): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
    let max = a.len().max(b.len());
    if max == 0 {
        1.0
    } else {
        1.0 - lev(&a, &b) as f64 / max as f64
    }
}

fn normalizer() -> String {
    let merge = similarity("data pre-processing", "data preprocessing");
    assert!((merge - oracle_similarity("data pre-processing", "data preprocessing")).abs() < 1e-9);
    assert!((merge - 0.9474).abs() < 1e-4 && merge > 0.9);
    let apart = similarity("case study", "ablation study");
    assert!((apart - oracle_similarity("case study", "ablation study")).abs() < 1e-9 && apart < 0.9);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let alphabet = ['a', 'b', ' '];
    for _ in 0..300 {
        let phrases: Vec<(String, usize)> = (0..rng.random_range(1..20))
            .map(|_| {
                let s: String = (0..rng.random_range(1..7)).map(|_| *alphabet.choose(&mut rng).unwrap()).collect();
                (s, rng.random_range(1..5))
            })
            .collect();
        let tau = rng.random_range(0.3..=1.0);
        let clusters = cluster_phrases(&phrases, tau).unwrap();
        let mut members: Vec<&String> = clusters.iter().flat_map(|c| c.members.keys()).collect();
        let total = members.len();
        members.sort();
        members.dedup();
        assert_eq!(members.len(), total, "phrase in two clusters");
        let distinct: BTreeSet<&String> = phrases.iter().map(|(p, _)| p).collect();
        assert_eq!(members.into_iter().collect::<BTreeSet<_>>(), distinct);
        let mut rev = phrases.clone();
        rev.reverse();
        assert_eq!(cluster_phrases(&rev, tau).unwrap(), clusters);
        let reps: Vec<(String, usize)> = clusters.iter().map(|c| (c.representative.clone(), c.total())).collect();
        assert!(cluster_phrases(&reps, tau).unwrap().iter().all(|c| c.members.len() == 1));
    }
    format!("merge {merge:.4}, split {apart:.4}, 300 random sets")
}

fn assembly() -> String {
    for (seed, (id, cells)) in reference_rows().into_iter().enumerate() {
        let w = assemble(&id, &reference_input(seed as u64, &cells));
        assert_eq!(render_table_row(&w), format!("{id}\t{}", cells.join("\t")));
    }
    let (id, cells) = reference_rows().remove(0);
    assert_eq!(id, "2021.emnlp-main.443");
    let w = assemble(&id, &reference_input(1, &cells));
    let doc = render_mermaid(&w);
    assert_eq!(check_mermaid(&doc).unwrap(), (13, 12));
    for seed in 2..20 {
        assert_eq!(render_mermaid(&assemble(&id, &reference_input(seed, &cells))), doc);
    }
    let (ws, _) = random_corpus(8, 200);
    for w in &ws {
        let sizes: Vec<usize> = w.stages.iter().map(Vec::len).filter(|&n| n > 0).collect();
        let edges = if sizes.is_empty() { 0 } else { w.phrase_count() - 1 };
        assert_eq!(check_mermaid(&render_mermaid(w)).unwrap(), (w.phrase_count().max(1), edges));
    }
    "table rows reproduced, 13 nodes / 12 edges, byte-stable".into()
}

fn analytics() -> String {
    let (ws, y) = random_corpus(2024, 50);
    let annual = annual_counts(&ws, &y).unwrap();
    let stages = stage_averages(&ws, &y).unwrap();
    let top = top_k_per_year(&ws, &y, 5).unwrap();
    let mut years: Vec<i32> = ws.iter().map(|w| y[&w.paper_id]).collect();
    years.sort();
    years.dedup();
    assert_eq!(annual.len(), years.len());
    for (i, &year) in years.iter().enumerate() {
        let ps: Vec<_> = ws.iter().filter(|w| y[&w.paper_id] == year).collect();
        let n = ps.len() as f64;
        let uniq: Vec<Vec<&str>> = ps
            .iter()
            .map(|w| {
                let mut v: Vec<&str> = Vec::new();
                for s in w.stages.iter().flatten() {
                    if !v.contains(&s.phrase.as_str()) {
                        v.push(&s.phrase);
                    }
                }
                v
            })
            .collect();
        let total: usize = uniq.iter().map(Vec::len).sum();
        assert_eq!((annual[i].year, annual[i].papers, annual[i].total_workflows), (year, ps.len(), total));
        assert!((annual[i].avg_per_paper - total as f64 / n).abs() < 1e-9);
        for (k, avg) in [stages[i].avg_preparation, stages[i].avg_processing, stages[i].avg_analysis]
            .into_iter()
            .enumerate()
        {
            let sum: usize = ps.iter().map(|w| w.stages[k].len()).sum();
            assert!((avg - sum as f64 / n).abs() < 1e-9);
        }
        for e in &top[i].entries {
            let df = uniq.iter().filter(|u| u.contains(&e.phrase.as_str())).count();
            assert!((e.paper_pct - 100.0 * df as f64 / n).abs() < 1e-9, "{year} {}", e.phrase);
        }
    }
    format!("{} years recounted", years.len())
}

fn end_to_end() -> String {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = common::cli::full_run(dir.path());
        assert!(out.status.success(), "{}", common::cli::stderr(&out));
    }
    let (sa, sb) = (common::cli::snapshot(a.path()), common::cli::snapshot(b.path()));
    assert_eq!(sa, sb, "runs differ");
    let charts = sa.keys().filter(|k| k.starts_with("flowcharts/") && k.ends_with(".mmd")).count();
    assert_eq!(charts, 5);
    for f in ["workflows.tsv", "annual.csv", "stages.csv", "topk.csv"] {
        assert!(sa.contains_key(f), "missing {f}");
    }
    format!("{} artifacts byte-identical across runs", sa.len())
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { name: "metrics match oracles", limit: Duration::from_secs(5), run: metrics_oracles },
        Criterion { name: "spy selection purity and size", limit: Duration::from_secs(60), run: spy_selection },
        Criterion { name: "head gradients and training", limit: Duration::from_secs(30), run: head_training },
        Criterion { name: "prompt templates", limit: Duration::from_secs(5), run: prompt_templates },
        Criterion { name: "stage response grammar", limit: Duration::from_secs(5), run: stage_grammar },
        Criterion { name: "phrase normalizer", limit: Duration::from_secs(30), run: normalizer },
        Criterion { name: "workflow assembly", limit: Duration::from_secs(5), run: assembly },
        Criterion { name: "yearly analytics", limit: Duration::from_secs(5), run: analytics },
        Criterion { name: "offline end-to-end run", limit: Duration::from_secs(30), run: end_to_end },
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(c.run));
        let elapsed = start.elapsed();
        let (ok, detail) = match result {
            Ok(d) if elapsed <= c.limit => (true, d),
            Ok(d) => (false, format!("{d}; over time budget")),
            Err(p) => (
                false,
                p.downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panicked".into()),
            ),
        };
        failed += usize::from(!ok);
        println!(
            "{} {:<32} {:>7.2}s / {:>3}s  {}",
            if ok { "PASS" } else { "FAIL" },
            c.name,
            elapsed.as_secs_f64(),
            c.limit.as_secs(),
            detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
