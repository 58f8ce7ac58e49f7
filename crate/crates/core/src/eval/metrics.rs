use crate::error::{invalid, Result};

/// Area under the ROC curve as the Mann–Whitney statistic, computed from
/// average ranks so ties count one half. Positives are `true`.
pub fn auc(scores: &[f64], positives: &[bool]) -> Result<f64> {
    if scores.len() != positives.len() {
        return invalid(format!("{} scores for {} labels", scores.len(), positives.len()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return invalid("AUC undefined for NaN scores");
    }
    let n = scores.len();
    let np = positives.iter().filter(|&&p| p).count();
    let nn = n - np;
    if np == 0 || nn == 0 {
        return invalid("AUC undefined: need at least one positive and one negative");
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the positive rank sum keeps half ranks integral
    let mut rank2: u64 = 0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && scores[idx[j]] == scores[idx[i]] {
            j += 1;
        }
        let pos = idx[i..j].iter().filter(|&&k| positives[k]).count() as u64;
        // ranks i+1 ..= j average to (i + 1 + j) / 2
        rank2 += pos * (i + 1 + j) as u64;
        i = j;
    }
    let (np, nn) = (np as u64, nn as u64);
    let u2 = rank2 - np * (np + 1);
    Ok(u2 as f64 / (2 * np * nn) as f64)
}

/// Fraction of items where `score >= threshold` agrees with the label.
pub fn accuracy(scores: &[f64], positives: &[bool], threshold: f64) -> Result<f64> {
    if scores.len() != positives.len() {
        return invalid(format!("{} scores for {} labels", scores.len(), positives.len()));
    }
    if scores.is_empty() {
        return invalid("accuracy of an empty set");
    }
    let hits = scores.iter().zip(positives).filter(|(&s, &p)| (s >= threshold) == p).count();
    Ok(hits as f64 / scores.len() as f64)
}
