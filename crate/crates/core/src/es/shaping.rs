/// Centered-rank fitness shaping: `rank / (n - 1) - 0.5`, ranks ascending by
/// fitness. Tied fitnesses share the mean of their ranks, so the weights are
/// permutation-equivariant and a constant population maps to all zeros.
pub fn centered_ranks(fitness: &[f64]) -> Vec<f64> {
    let n = fitness.len();
    if n <= 1 {
        return vec![0.0; n];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]));
    let denom = (n - 1) as f64;
    let mut out = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && fitness[order[end]] == fitness[order[start]] {
            end += 1;
        }
        // mean of ranks start..end
        let rank = (start + end - 1) as f64 / 2.0;
        let w = rank / denom - 0.5;
        for &i in &order[start..end] {
            out[i] = w;
        }
        start = end;
    }
    out
}
