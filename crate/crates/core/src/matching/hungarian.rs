//! Minimum-cost rectangular assignment (Kuhn-Munkres with row potentials).

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `(row, column)` pairs sorted by row.
    pub pairs: Vec<(usize, usize)>,
    /// Sum of the assigned costs, accumulated in row order.
    pub cost: f64,
}

/// Solves `min Σ cost[i][j]` over matchings of size `min(n, m)`.
///
/// Rows shorter than the first row, or any non-finite entry, are rejected.
/// An empty matrix (no rows or no columns) yields an empty assignment.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<Assignment> {
    let n = cost.len();
    let m = cost.first().map_or(0, Vec::len);
    if let Some(i) = cost.iter().position(|r| r.len() != m) {
        return Err(Error::Input(format!("row {i} has {} columns, expected {m}", cost[i].len())));
    }
    if cost.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Input("cost matrix contains non-finite entries".into()));
    }
    if n == 0 || m == 0 {
        return Ok(Assignment {
            pairs: Vec::new(),
            cost: 0.0,
        });
    }

    let pairs = if n <= m {
        solve(n, m, |i, j| cost[i][j])
    } else {
        let mut t: Vec<(usize, usize)> = solve(m, n, |i, j| cost[j][i]).into_iter().map(|(c, r)| (r, c)).collect();
        t.sort_unstable();
        t
    };
    let total = pairs.iter().map(|&(i, j)| cost[i][j]).sum();
    Ok(Assignment { pairs, cost: total })
}

/// Core solver for `rows <= cols`. Returns pairs sorted by row.
fn solve(rows: usize, cols: usize, a: impl Fn(usize, usize) -> f64) -> Vec<(usize, usize)> {
    // 1-based with a virtual column 0; row_of[j] is the row matched to column j.
    let mut u = vec![0.0f64; rows + 1];
    let mut v = vec![0.0f64; cols + 1];
    let mut row_of = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];

    for i in 1..=rows {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        // augment along the alternating path
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut pairs: Vec<(usize, usize)> = (1..=cols).filter(|&j| row_of[j] != 0).map(|j| (row_of[j] - 1, j - 1)).collect();
    pairs.sort_unstable();
    pairs
}
