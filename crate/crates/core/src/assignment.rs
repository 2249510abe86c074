//! Rectangular linear assignment (Hungarian method with potentials).
//!
//! Rows are matched to distinct columns; every row is matched, so
//! `rows <= cols` is required. Runs in O(rows^2 * cols).

use crate::error::{Error, Result};

/// Assigns every row to a distinct column, maximizing the summed weight.
///
/// Returns the column chosen for each row. The search visits rows and columns
/// in index order, so equal-weight alternatives resolve deterministically.
pub fn max_weight_assignment(weights: &[Vec<f64>]) -> Result<Vec<usize>> {
    let rows = weights.len();
    if rows == 0 {
        return Ok(Vec::new());
    }
    let cols = weights[0].len();
    if weights.iter().any(|r| r.len() != cols) {
        return Err(Error::Dimension("ragged weight matrix".into()));
    }
    if rows > cols {
        return Err(Error::Dimension(format!(
            "{rows} rows cannot be matched into {cols} columns"
        )));
    }
    if weights.iter().flatten().any(|w| !w.is_finite()) {
        return Err(Error::Dimension("weights must be finite".into()));
    }
    let cost = |i: usize, j: usize| -weights[i][j];
    min_cost_assignment(rows, cols, cost)
}

// 1-based potentials over rows (u) and columns (v); column 0 is a virtual root.
fn min_cost_assignment(rows: usize, cols: usize, cost: impl Fn(usize, usize) -> f64) -> Result<Vec<usize>> {
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];

    for i in 1..=rows {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let reduced = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            if j1 == 0 {
                return Err(Error::Infeasible("assignment search stalled".into()));
            }
            for j in 0..=cols {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut result = vec![usize::MAX; rows];
    for j in 1..=cols {
        if owner[j] > 0 {
            result[owner[j] - 1] = j - 1;
        }
    }
    debug_assert!(result.iter().all(|&c| c < cols));
    Ok(result)
}
