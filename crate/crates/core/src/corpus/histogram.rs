use std::collections::HashSet;

/// Normalized histogram of relative positions (index / length) at which any
/// of `pathology_terms` occurs. All zeros when nothing matches.
pub fn position_histogram<S: AsRef<str>>(
    reports: &[Vec<S>],
    pathology_terms: &HashSet<String>,
    bins: usize,
) -> Vec<f64> {
    assert!(bins >= 2, "position histogram needs at least two bins");
    let mut counts = vec![0u64; bins];
    for report in reports {
        let len = report.len();
        for (i, tok) in report.iter().enumerate() {
            if pathology_terms.contains(tok.as_ref()) {
                let bin = (i * bins / len).min(bins - 1);
                counts[bin] += 1;
            }
        }
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return vec![0.0; bins];
    }
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}
