//! Classification metrics: error rate, NLL, calibration error and AUROC.

pub const DEFAULT_ECE_BINS: usize = 15;

/// One scored prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub label: usize,
    pub predicted: usize,
    /// Probability of the predicted class.
    pub confidence: f64,
    /// Probability of the true class.
    pub p_true: f64,
}

impl Record {
    pub fn from_scores(label: usize, scores: &[f64]) -> Self {
        let mut predicted = 0;
        for (i, s) in scores.iter().enumerate() {
            if *s > scores[predicted] {
                predicted = i;
            }
        }
        Record { label, predicted, confidence: scores[predicted], p_true: scores[label] }
    }

    pub fn correct(&self) -> bool {
        self.label == self.predicted
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricsReport {
    pub n: usize,
    pub error_rate: f64,
    pub nll: f64,
    pub ece: f64,
    pub auroc: f64,
}

pub fn report(records: &[Record], bins: usize) -> MetricsReport {
    MetricsReport {
        n: records.len(),
        error_rate: error_rate(records),
        nll: nll(records),
        ece: ece(records, bins),
        auroc: auroc(records),
    }
}

pub fn error_rate(records: &[Record]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().filter(|r| !r.correct()).count() as f64 / records.len() as f64
}

/// Mean `-ln p(true class)`, with probabilities floored at `1e-300`.
pub fn nll(records: &[Record]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().map(|r| -r.p_true.max(1e-300).ln()).sum::<f64>() / records.len() as f64
}

/// Equal-width bin `(b/B, (b+1)/B]` holding `conf`; zero goes to the first bin.
pub fn ece_bin(conf: f64, bins: usize) -> usize {
    let b_f = bins as f64;
    let mut b = ((conf * b_f).ceil() as isize - 1).clamp(0, bins as isize - 1) as usize;
    while b > 0 && conf <= b as f64 / b_f {
        b -= 1;
    }
    while b + 1 < bins && conf > (b + 1) as f64 / b_f {
        b += 1;
    }
    b
}

/// `Σ_b (n_b/n)·|acc_b − conf_b|` over equal-width confidence bins.
pub fn ece(records: &[Record], bins: usize) -> f64 {
    if records.is_empty() || bins == 0 {
        return 0.0;
    }
    let mut count = vec![0usize; bins];
    let mut hits = vec![0usize; bins];
    let mut conf = vec![0.0f64; bins];
    for r in records {
        let b = ece_bin(r.confidence, bins);
        count[b] += 1;
        hits[b] += r.correct() as usize;
        conf[b] += r.confidence;
    }
    let n = records.len() as f64;
    (0..bins)
        .filter(|b| count[*b] > 0)
        .map(|b| {
            let c = count[b] as f64;
            (c / n) * (hits[b] as f64 / c - conf[b] / c).abs()
        })
        .sum()
}

/// Area under the ROC curve for separating correct from incorrect predictions
/// by confidence; ties count one half. With only one class present the curve is
/// degenerate and 1.0 is returned.
pub fn auroc(records: &[Record]) -> f64 {
    let pos = records.iter().filter(|r| r.correct()).count() as u64;
    let neg = records.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return 1.0;
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|a, b| records[*a].confidence.total_cmp(&records[*b].confidence));
    // twice the rank sum of the positives, with tied groups sharing their mean rank
    let mut rank2_pos: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && records[order[j + 1]].confidence == records[order[i]].confidence {
            j += 1;
        }
        let rank2 = (i + 1 + j + 1) as u64;
        let p = order[i..=j].iter().filter(|k| records[**k].correct()).count() as u64;
        rank2_pos += rank2 * p;
        i = j + 1;
    }
    let u2 = rank2_pos - pos * (pos + 1);
    u2 as f64 / (2 * pos * neg) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(label: usize, predicted: usize, confidence: f64) -> Record {
        Record { label, predicted, confidence, p_true: if label == predicted { confidence } else { 0.0 } }
    }

    #[test]
    fn perfect_classifier() {
        let r: Vec<Record> = (0..20).map(|i| rec(i % 10, i % 10, 1.0)).collect();
        let m = report(&r, DEFAULT_ECE_BINS);
        assert_eq!((m.error_rate, m.ece, m.auroc, m.nll), (0.0, 0.0, 1.0, 0.0));
    }

    #[test]
    fn uniform_classifier_nll() {
        let r: Vec<Record> = (0..100).map(|i| Record::from_scores(i % 10, &[0.1; 10])).collect();
        assert!((nll(&r) - 10f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn bins_are_right_closed() {
        assert_eq!(ece_bin(0.0, 15), 0);
        assert_eq!(ece_bin(1.0, 15), 14);
        assert_eq!(ece_bin(1.0 / 15.0, 15), 0);
        assert_eq!(ece_bin(0.5, 2), 0);
        assert_eq!(ece_bin(0.500001, 2), 1);
    }

    #[test]
    fn auroc_examples() {
        // perfectly separated
        let r = vec![rec(0, 0, 0.9), rec(0, 1, 0.2), rec(1, 1, 0.8), rec(1, 0, 0.3)];
        assert_eq!(auroc(&r), 1.0);
        // fully tied scores
        let r = vec![rec(0, 0, 0.5), rec(0, 1, 0.5)];
        assert_eq!(auroc(&r), 0.5);
        let r = vec![rec(0, 0, 0.1), rec(0, 1, 0.9)];
        assert_eq!(auroc(&r), 0.0);
    }
}
