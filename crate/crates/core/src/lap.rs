//! Dense linear assignment by successive shortest augmenting paths with
//! dual potentials (Hungarian method, O(n²·m)).

use nalgebra::DMatrix;

/// Minimum-cost assignment of every row of `cost` to a distinct column.
///
/// Requires `cost.nrows() <= cost.ncols()` and finite entries. Returns the
/// column chosen for each row.
pub fn solve(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    let m = cost.ncols();
    assert!(n <= m, "more rows ({n}) than columns ({m})");
    if n == 0 {
        return Vec::new();
    }

    // 1-based with a virtual column 0 holding the row being inserted.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut col_owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![0.0f64; m + 1];
    let mut used = vec![false; m + 1];

    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|x| *x = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let reduced = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        // augment along the alternating path
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![usize::MAX; n];
    for j in 1..=m {
        if col_owner[j] != 0 {
            row_to_col[col_owner[j] - 1] = j - 1;
        }
    }
    row_to_col
}

pub fn total_cost(cost: &DMatrix<f64>, row_to_col: &[usize]) -> f64 {
    row_to_col
        .iter()
        .enumerate()
        .map(|(r, &c)| cost[(r, c)])
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force(cost: &DMatrix<f64>) -> f64 {
        fn rec(cost: &DMatrix<f64>, row: usize, used: &mut Vec<bool>) -> f64 {
            if row == cost.nrows() {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for c in 0..cost.ncols() {
                if !used[c] {
                    used[c] = true;
                    best = best.min(cost[(row, c)] + rec(cost, row + 1, used));
                    used[c] = false;
                }
            }
            best
        }
        rec(cost, 0, &mut vec![false; cost.ncols()])
    }

    #[test]
    fn classic_three_by_three() {
        let c = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0]);
        let a = solve(&c);
        assert_eq!(total_cost(&c, &a), 5.0);
    }

    #[test]
    fn empty_and_rectangular() {
        assert!(solve(&DMatrix::<f64>::zeros(0, 0)).is_empty());
        let c = DMatrix::from_row_slice(1, 3, &[3.0, -1.0, 2.0]);
        assert_eq!(solve(&c), vec![1]);
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            rows in 1usize..6,
            extra in 0usize..2,
            seed in proptest::collection::vec(-20.0..20.0f64, 42),
        ) {
            let cols = rows + extra;
            let c = DMatrix::from_fn(rows, cols, |r, k| seed[r * cols + k]);
            let a = solve(&c);
            let mut seen = vec![false; cols];
            for &k in &a {
                prop_assert!(!seen[k]);
                seen[k] = true;
            }
            prop_assert!((total_cost(&c, &a) - brute_force(&c)).abs() < 1e-9);
        }
    }
}
