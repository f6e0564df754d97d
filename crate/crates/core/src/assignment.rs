//! Exact balanced assignment (Hungarian algorithm with potentials), `O(n^3)`.

use crate::error::{LabError, Result};

/// Minimum-cost perfect matching of a square cost matrix given row-major.
/// Returns `(cost, col_of_row)`.
pub fn solve(cost: &[Vec<f64>]) -> Result<(f64, Vec<usize>)> {
    let n = cost.len();
    for (i, row) in cost.iter().enumerate() {
        if row.len() != n {
            return Err(LabError::Invalid(format!("cost matrix row {i} has {} entries, expected {n}", row.len())));
        }
        if let Some(j) = row.iter().position(|c| !c.is_finite()) {
            return Err(LabError::NonFiniteCost(i, j));
        }
    }
    if n == 0 {
        return Ok((0.0, Vec::new()));
    }
    // 1-based arrays; column 0 is a virtual start
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
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
            for j in 0..=n {
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
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0; n];
    for j in 1..=n {
        col_of_row[row_of[j] - 1] = j - 1;
    }
    // sum in row order so the result does not depend on the search order
    let total = (0..n).map(|i| cost[i][col_of_row[i]]).sum();
    Ok((total, col_of_row))
}
