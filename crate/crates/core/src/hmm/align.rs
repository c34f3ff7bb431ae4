//! Matching estimated states to reference states.

/// Minimum-cost assignment of rows to columns (Kuhn–Munkres with potentials).
///
/// `cost` must be rectangular with at least as many columns as rows. Returns
/// `assign` with `assign[row] = column`. Non-finite costs are not supported.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    assert!(m >= n, "hungarian: need at least as many columns as rows");
    assert!(cost.iter().all(|r| r.len() == m), "hungarian: ragged cost matrix");

    // 1-based arrays; index 0 is the virtual start column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

/// Permutation `perm` with `perm[i]` = the estimated state matched to
/// reference state `i`, minimizing total squared Euclidean distance between
/// the supplied per-state vectors (typically intercepts). Passing the result
/// to [`HmmModel::permuted`](super::HmmModel::permuted) relabels the estimate
/// to the reference numbering.
pub fn align_states(reference: &[Vec<f64>], estimated: &[Vec<f64>]) -> Vec<usize> {
    let cost: Vec<Vec<f64>> = reference
        .iter()
        .map(|r| {
            estimated
                .iter()
                .map(|e| r.iter().zip(e).map(|(a, b)| (a - b) * (a - b)).sum())
                .collect()
        })
        .collect();
    hungarian(&cost)
}
