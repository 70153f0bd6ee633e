//! Rectangular minimum-cost assignment (Hungarian algorithm with potentials).

#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// `(row, col)` pairs sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub total: f64,
}

/// Minimum-cost matching of `min(rows, cols)` pairs. `cost` must be
/// rectangular with finite entries.
pub fn hungarian_match(cost: &[Vec<f64>]) -> Matching {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    assert!(cost.iter().all(|r| r.len() == cols), "ragged cost matrix");
    if rows == 0 || cols == 0 {
        return Matching {
            pairs: Vec::new(),
            total: 0.0,
        };
    }
    if rows > cols {
        let t: Vec<Vec<f64>> = (0..cols)
            .map(|j| (0..rows).map(|i| cost[i][j]).collect())
            .collect();
        let m = hungarian_match(&t);
        let mut pairs: Vec<(usize, usize)> = m.pairs.into_iter().map(|(c, r)| (r, c)).collect();
        pairs.sort_unstable();
        return Matching {
            pairs,
            total: m.total,
        };
    }
    let (n, m) = (rows, cols);
    // 1-based potentials; p[j] is the row matched to column j.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
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
    let mut pairs: Vec<(usize, usize)> = (1..=m)
        .filter(|&j| p[j] != 0)
        .map(|j| (p[j] - 1, j - 1))
        .collect();
    pairs.sort_unstable();
    let total = pairs.iter().map(|&(i, j)| cost[i][j]).sum();
    Matching { pairs, total }
}

/// Maximum-score matching; pairs with non-positive score are dropped.
pub fn maximize(score: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let neg: Vec<Vec<f64>> = score
        .iter()
        .map(|r| r.iter().map(|&s| -s).collect())
        .collect();
    hungarian_match(&neg)
        .pairs
        .into_iter()
        .filter(|&(i, j)| score[i][j] > 0.0)
        .collect()
}
