//! Minimum-cost perfect matching on a dense square cost matrix.

/// Optimal assignment for a row-major `n × n` cost matrix.
///
/// Returns `assignment[row] = column`. Shortest augmenting paths with dual
/// potentials, O(n³).
pub fn solve(cost: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n, "cost matrix must be n × n");
    if n == 0 {
        return Vec::new();
    }
    let inf = f64::INFINITY;
    // 1-based internals; index 0 is the virtual root.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut min_slack = vec![inf; n + 1];
    let mut used = vec![false; n + 1];
    for row in 1..=n {
        matched_row[0] = row;
        let mut col0 = 0;
        min_slack.iter_mut().for_each(|x| *x = inf);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[col0] = true;
            let r0 = matched_row[col0];
            let mut delta = inf;
            let mut col1 = 0;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let cur = cost[(r0 - 1) * n + (col - 1)] - u[r0] - v[col];
                if cur < min_slack[col] {
                    min_slack[col] = cur;
                    way[col] = col0;
                }
                if min_slack[col] < delta {
                    delta = min_slack[col];
                    col1 = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[matched_row[col]] += delta;
                    v[col] -= delta;
                } else {
                    min_slack[col] -= delta;
                }
            }
            col0 = col1;
            if matched_row[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            matched_row[col0] = matched_row[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for col in 1..=n {
        if matched_row[col] > 0 {
            assignment[matched_row[col] - 1] = col - 1;
        }
    }
    assignment
}
