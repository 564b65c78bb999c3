//! Metric fixtures paired with independent oracles: hand-computed values
//! and brute-force recounts that share no code with the library.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use workflow_miner::metrics::{
    cohens_kappa, f1_score, lcs_length, precision_recall_f1, rouge_l, rouge_n, ConfusionCounts,
};

/// (name, computed, expected)
pub type Case = (String, f64, f64);

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn pairs(items: &[(&str, &str)]) -> Vec<(Vec<String>, Vec<String>)> {
    items.iter().map(|(g, r)| (toks(g), toks(r))).collect()
}

/// Clipped n-gram matches by consuming identical generated n-grams one at a
/// time.
fn brute_rouge_n(corpus: &[(Vec<String>, Vec<String>)], n: usize) -> f64 {
    let grams = |t: &[String]| -> Vec<Vec<String>> {
        if t.len() < n {
            Vec::new()
        } else {
            (0..=t.len() - n).map(|i| t[i..i + n].to_vec()).collect()
        }
    };
    let (mut hit, mut total) = (0usize, 0usize);
    for (g, r) in corpus {
        let mut pool = grams(g);
        for rg in grams(r) {
            total += 1;
            if let Some(pos) = pool.iter().position(|x| *x == rg) {
                pool.remove(pos);
                hit += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

/// Longest common subsequence by enumerating every subsequence of `a`.
fn brute_lcs(a: &[String], b: &[String]) -> usize {
    assert!(a.len() <= 14);
    let is_subseq = |sub: &[&String]| {
        let mut it = b.iter();
        sub.iter().all(|s| it.any(|x| x == *s))
    };
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let sub: Vec<&String> = (0..a.len()).filter(|i| mask >> i & 1 == 1).map(|i| &a[i]).collect();
        if sub.len() > best && is_subseq(&sub) {
            best = sub.len();
        }
    }
    best
}

fn brute_kappa(a: &[u8], b: &[u8]) -> f64 {
    let n = a.len() as f64;
    let labels: Vec<u8> = {
        let mut l: Vec<u8> = a.iter().chain(b).copied().collect();
        l.sort();
        l.dedup();
        l
    };
    let po = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let pe: f64 = labels
        .iter()
        .map(|l| {
            let ca = a.iter().filter(|x| *x == l).count() as f64;
            let cb = b.iter().filter(|x| *x == l).count() as f64;
            ca / n * (cb / n)
        })
        .sum();
    (po - pe) / (1.0 - pe)
}

const WORDS: &[&str] = &["data", "model", "training", "analysis", "the", "of", "study", "error"];

fn random_tokens(rng: &mut ChaCha8Rng, max: usize) -> Vec<String> {
    let n = rng.random_range(0..=max);
    (0..n).map(|_| WORDS.choose(rng).unwrap().to_string()).collect()
}

pub fn cases() -> Vec<Case> {
    let mut out: Vec<Case> = Vec::new();
    let mut push = |name: &str, got: f64, want: f64| out.push((name.to_string(), got, want));

    // ROUGE-N, hand counts
    let id = pairs(&[("a b c", "a b c")]);
    push("rouge1 identical", rouge_n(&id, 1).unwrap().score, 1.0);
    push("rouge2 identical", rouge_n(&id, 2).unwrap().score, 1.0);
    let dp = pairs(&[("data preprocessing", "datasets and preprocessing")]);
    push("rouge1 data preprocessing", rouge_n(&dp, 1).unwrap().score, 1.0 / 3.0);
    push("rouge2 data preprocessing", rouge_n(&dp, 2).unwrap().score, 0.0);
    push("rouge1 disjoint", rouge_n(&pairs(&[("x y", "a b")]), 1).unwrap().score, 0.0);
    push("rouge1 clipping", rouge_n(&pairs(&[("the the the", "the cat")]), 1).unwrap().score, 0.5);
    push(
        "rouge1 corpus pooling",
        rouge_n(&pairs(&[("a b", "a b c d"), ("x", "x")]), 1).unwrap().score,
        0.6,
    );

    // LCS, hand counts
    let fs = toks("feature selection and extraction");
    let fe = toks("feature extraction");
    push("lcs feature extraction", lcs_length(&fs, &fe) as f64, 2.0);
    push("lcs empty", lcs_length(&toks("a b c"), &[] as &[String]) as f64, 0.0);
    push("lcs identity", lcs_length(&fs, &fs) as f64, 4.0);

    // ROUGE-L, hand computation: P = 2/4, R = 2/2, F = 2PR/(P+R)
    let l = rouge_l(&[(fs.clone(), fe.clone())], 1.0).unwrap();
    push("rougeL precision", l.precision, 0.5);
    push("rougeL recall", l.recall, 1.0);
    push("rougeL f", l.f1, 2.0 / 3.0);
    let li = rouge_l(&id, 1.0).unwrap();
    push("rougeL identical f", li.f1, 1.0);

    // precision / recall / F1
    let c = precision_recall_f1(&ConfusionCounts { tp: 2, fp: 1, fn_: 1, tn: 0 });
    push("P tp2 fp1", c.precision, 2.0 / 3.0);
    push("R tp2 fn1", c.recall, 2.0 / 3.0);
    push("F1 tp2 fp1 fn1", c.f1, 2.0 / 3.0);
    let z = precision_recall_f1(&ConfusionCounts::default());
    push("F1 empty", z.f1, 0.0);
    push("F1 empty flagged", f64::from(u8::from(z.degenerate)), 1.0);
    push(
        "F1 from P=0.9791 R=0.9753 (4dp)",
        (f1_score(0.9791, 0.9753) * 1e4).round() / 1e4,
        0.9772,
    );

    // kappa, hand values
    let k = cohens_kappa(&[1, 1, 0, 0], &[1, 0, 0, 1]).unwrap();
    push("kappa po=pe=0.5", k.value, 0.0);
    push("kappa identical", cohens_kappa(&[0, 1, 2, 1], &[0, 1, 2, 1]).unwrap().value, 1.0);

    // brute-force recounts on seeded random corpora
    let mut rng = ChaCha8Rng::seed_from_u64(2718);
    for i in 0..5 {
        let corpus: Vec<(Vec<String>, Vec<String>)> = (0..rng.random_range(1..6))
            .map(|_| (random_tokens(&mut rng, 8), random_tokens(&mut rng, 8)))
            .collect();
        for n in [1, 2] {
            let got = rouge_n(&corpus, n).unwrap().score;
            push(&format!("rouge{n} random corpus {i}"), got, brute_rouge_n(&corpus, n));
        }
        let (lcs, gl, rl) = corpus.iter().fold((0, 0, 0), |(l, g, r), (a, b)| {
            (l + brute_lcs(a, b), g + a.len(), r + b.len())
        });
        if gl > 0 && rl > 0 && lcs > 0 {
            let (p, r) = (lcs as f64 / gl as f64, lcs as f64 / rl as f64);
            let got = rouge_l(&corpus, 1.0).unwrap();
            push(&format!("rougeL random corpus {i}"), got.f1, 2.0 * p * r / (p + r));
        }
    }
    for i in 0..6 {
        let a = random_tokens(&mut rng, 12);
        let b = random_tokens(&mut rng, 12);
        push(&format!("lcs random {i}"), lcs_length(&a, &b) as f64, brute_lcs(&a, &b) as f64);
    }
    for i in 0..4 {
        let n = rng.random_range(5..40);
        let a: Vec<u8> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let b: Vec<u8> = a
            .iter()
            .map(|&x| if rng.random_bool(0.7) { x } else { rng.random_range(0..3) })
            .collect();
        let want = brute_kappa(&a, &b);
        if want.is_finite() {
            push(&format!("kappa random {i}"), cohens_kappa(&a, &b).unwrap().value, want);
        }
    }
    out
}
