//! Brute-force reference metrics and synthetic records shared by the test targets.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tagi_harness::metrics::Record;

/// Records with many ties and confidences sitting exactly on bin edges.
pub fn synthetic_records(n: usize, bins: usize, seed: u64) -> Vec<Record> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let confidence = match rng.random_range(0..4) {
                0 => rng.random_range(0..=bins) as f64 / bins as f64,
                1 => (rng.random_range(0..=40) as f64) / 40.0,
                _ => rng.random_range(0.1..1.0),
            };
            let label = rng.random_range(0..10);
            // correctness more likely at high confidence
            let predicted = if rng.random_bool(confidence.clamp(0.05, 0.95)) { label } else { (label + 1) % 10 };
            let p_true = if predicted == label { confidence } else { rng.random_range(0.0..(1.0 - confidence).max(1e-9)) };
            Record { label, predicted, confidence, p_true }
        })
        .collect()
}

/// ECE by scanning every bin over every record.
pub fn brute_ece(records: &[Record], bins: usize) -> f64 {
    let n = records.len() as f64;
    let mut total = 0.0;
    for b in 0..bins {
        let lo = b as f64 / bins as f64;
        let hi = (b + 1) as f64 / bins as f64;
        let inside = |c: f64| (b == 0 || c > lo) && (c <= hi || b + 1 == bins);
        let (mut count, mut hits, mut conf) = (0usize, 0usize, 0.0f64);
        for r in records.iter().filter(|r| inside(r.confidence)) {
            count += 1;
            hits += (r.label == r.predicted) as usize;
            conf += r.confidence;
        }
        if count > 0 {
            let c = count as f64;
            total += (c / n) * (hits as f64 / c - conf / c).abs();
        }
    }
    total
}

/// AUROC by comparing every correct/incorrect pair, ties counting one half.
pub fn brute_auroc(records: &[Record]) -> f64 {
    let pos: Vec<f64> = records.iter().filter(|r| r.label == r.predicted).map(|r| r.confidence).collect();
    let neg: Vec<f64> = records.iter().filter(|r| r.label != r.predicted).map(|r| r.confidence).collect();
    if pos.is_empty() || neg.is_empty() {
        return 1.0;
    }
    let mut twice: u64 = 0;
    for p in &pos {
        for q in &neg {
            twice += if p > q { 2 } else if p == q { 1 } else { 0 };
        }
    }
    twice as f64 / (2 * pos.len() * neg.len()) as f64
}
