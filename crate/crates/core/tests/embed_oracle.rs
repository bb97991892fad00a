//! The hashed embedder against a from-scratch reimplementation of its
//! scheme: lowercase alphanumeric tokens, unigrams plus space-joined
//! bigrams, xxh3-64 with a fixed seed, bucket = hash mod 512, sign = top
//! bit, then L2 normalization.

use proptest::prelude::*;
use skillvid_core::embed::{cosine, Embedder, HashedEmbedder, EMBED_DIM};
use xxhash_rust::xxh3::xxh3_64_with_seed;

const SEED: u64 = 0x5EED_0001;

fn reference_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn reference_bucket(feature: &str) -> (usize, f64) {
    let h = xxh3_64_with_seed(feature.as_bytes(), SEED);
    ((h & 511) as usize, if h & (1 << 63) != 0 { -1.0 } else { 1.0 })
}

fn reference_embed(text: &str) -> Vec<f64> {
    let tokens = reference_tokens(text);
    let mut features: Vec<String> = tokens.clone();
    for i in 1..tokens.len() {
        features.push(format!("{} {}", tokens[i - 1], tokens[i]));
    }
    let mut v = vec![0.0; 512];
    for f in &features {
        let (b, s) = reference_bucket(f);
        v[b] += s;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

fn reference_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[test]
fn matches_reference_on_known_texts() {
    for text in [
        "Time Management",
        "time management tips",
        "5 Excel Questions Asked in Job Interviews",
        "Scheduling an Interview",
        "\"Time Management\" Executive Assistant",
        "",
        "   ",
        "Ünïcödé café RÉSUMÉ",
    ] {
        let got = HashedEmbedder.embed(text).unwrap();
        assert_eq!(got.values.len(), EMBED_DIM);
        assert_eq!(got.values, reference_embed(text), "{text:?}");
    }
}

#[test]
fn skill_overlap_outranks_unrelated_text() {
    let skill = reference_embed("time management");
    let near = reference_cosine(&reference_embed("time management tips"), &skill);
    let far = reference_cosine(&reference_embed("excel interview questions"), &skill);
    assert!(near > far, "reference: {near} <= {far}");
    let e = |t: &str| HashedEmbedder.embed(t).unwrap();
    let got_near = cosine(&e("time management tips"), &e("time management")).unwrap();
    let got_far = cosine(&e("excel interview questions"), &e("time management")).unwrap();
    assert!((got_near - near).abs() < 1e-12 && (got_far - far).abs() < 1e-12);
}

#[test]
fn tokens_in_different_buckets_are_orthogonal() {
    let (a, b) = ("forklift", "budget");
    assert_ne!(reference_bucket(a).0, reference_bucket(b).0, "pick other test tokens");
    let e = |t: &str| HashedEmbedder.embed(t).unwrap();
    assert_eq!(cosine(&e(a), &e(b)).unwrap(), 0.0);
}

proptest! {
    #[test]
    fn matches_reference_on_random_text(text in "[a-zA-Z0-9 ,.!'-]{0,60}") {
        prop_assert_eq!(HashedEmbedder.embed(&text).unwrap().values, reference_embed(&text));
    }

    #[test]
    fn cosine_is_symmetric_and_bounded(a in "[a-z ]{0,40}", b in "[a-z ]{0,40}") {
        let (va, vb) = (HashedEmbedder.embed(&a).unwrap(), HashedEmbedder.embed(&b).unwrap());
        let ab = cosine(&va, &vb).unwrap();
        let ba = cosine(&vb, &va).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&ab));
        prop_assert!((ab - reference_cosine(&va.values, &vb.values)).abs() < 1e-12);
    }
}
