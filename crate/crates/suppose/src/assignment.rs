//! Minimum-cost perfect matching between equal-sized point sets.

/// Exact solution of the square assignment problem by shortest augmenting
/// paths with potentials, O(n^3). `cost` is row-major `n x n`.
///
/// Returns `(assign, total)` where `assign[row] = col`.
pub fn hungarian(cost: &[f64], n: usize) -> (Vec<usize>, f64) {
    assert_eq!(cost.len(), n * n);
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    // p[j] = row matched to column j (1-based; 0 = free).
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
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
            for j in 0..=n {
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
    let mut assign = vec![0usize; n];
    let mut total = 0.0;
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
            total += cost[(p[j] - 1) * n + (j - 1)];
        }
    }
    (assign, total)
}

/// Greedy matching: cheapest remaining pair first.
pub fn greedy_assignment(cost: &[f64], n: usize) -> (Vec<usize>, f64) {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            pairs.push((cost[i * n + j], i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut row_used = vec![false; n];
    let mut col_used = vec![false; n];
    let mut assign = vec![usize::MAX; n];
    let mut total = 0.0;
    let mut matched = 0;
    for (c, i, j) in pairs {
        if matched == n {
            break;
        }
        if !row_used[i] && !col_used[j] {
            row_used[i] = true;
            col_used[j] = true;
            assign[i] = j;
            total += c;
            matched += 1;
        }
    }
    (assign, total)
}

/// Sum of per-row minima: a valid lower bound on the assignment cost.
pub fn row_minima_bound(cost: &[f64], n: usize) -> f64 {
    (0..n)
        .map(|i| {
            cost[i * n..(i + 1) * n]
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}
