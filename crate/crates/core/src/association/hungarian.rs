/// Optimal row to column pairing of a cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `(row, col)` pairs sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
}

/// Minimum-cost assignment by the Hungarian method with row/column potentials,
/// O(n^3). Entries may be `f64::INFINITY` ("forbidden"). Rectangular and
/// forbidden cells are padded with a finite sentinel that dominates any sum of
/// real costs, so the solver first maximizes the number of real pairs and then
/// minimizes their cost. Sentinel pairs are dropped from the result.
pub fn assign_min_cost(cost: &[Vec<f64>]) -> Assignment {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    assert!(cost.iter().all(|r| r.len() == cols), "ragged cost matrix");
    assert!(
        cost.iter().flatten().all(|c| !c.is_nan() && *c != f64::NEG_INFINITY),
        "cost entries must be finite or +inf"
    );
    let n = rows.max(cols);
    if n == 0 || rows == 0 || cols == 0 {
        return Assignment {
            pairs: Vec::new(),
            total_cost: 0.0,
        };
    }
    let finite_max = cost
        .iter()
        .flatten()
        .filter(|c| c.is_finite())
        .fold(0.0f64, |m, c| m.max(c.abs()));
    let sentinel = (finite_max + 1.0) * (n as f64 + 1.0) * 4.0;
    let at = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols && cost[i][j].is_finite() {
            cost[i][j]
        } else {
            sentinel
        }
    };

    // 1-based potentials formulation; column 0 is the virtual start.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
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

    let mut pairs: Vec<(usize, usize)> = (1..=n)
        .filter(|&j| p[j] != 0)
        .map(|j| (p[j] - 1, j - 1))
        .filter(|&(i, j)| i < rows && j < cols && cost[i][j].is_finite())
        .collect();
    pairs.sort_unstable();
    let total_cost = pairs.iter().map(|&(i, j)| cost[i][j]).sum();
    Assignment { pairs, total_cost }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force(cost: &[Vec<f64>]) -> f64 {
        fn rec(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if row == cost.len() {
                *best = best.min(acc);
                return;
            }
            for j in 0..used.len() {
                if !used[j] {
                    used[j] = true;
                    rec(cost, row + 1, used, acc + cost[row][j], best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(cost, 0, &mut vec![false; cost[0].len()], 0.0, &mut best);
        best
    }

    #[test]
    fn diagonal_optimum() {
        let a = assign_min_cost(&[vec![0.0, 5.0], vec![5.0, 0.0]]);
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(a.total_cost, 0.0);
    }

    #[test]
    fn rectangular_leaves_extra_unmatched() {
        let a = assign_min_cost(&[vec![3.0, 1.0, 2.0]]);
        assert_eq!(a.pairs, vec![(0, 1)]);
        let b = assign_min_cost(&[vec![3.0], vec![1.0], vec![2.0]]);
        assert_eq!(b.pairs, vec![(1, 0)]);
    }

    #[test]
    fn forbidden_cells_are_never_matched() {
        let inf = f64::INFINITY;
        let a = assign_min_cost(&[vec![inf, 1.0], vec![inf, 2.0]]);
        assert_eq!(a.pairs.len(), 1);
        assert_eq!(a.total_cost, 1.0);
        // maximizing the number of real pairs wins over a cheaper single pair
        let b = assign_min_cost(&[vec![1.0, 100.0], vec![2.0, inf]]);
        assert_eq!(b.pairs, vec![(0, 1), (1, 0)]);
        let c = assign_min_cost(&[vec![inf, inf], vec![inf, inf]]);
        assert!(c.pairs.is_empty());
    }

    proptest! {
        #[test]
        fn matches_exhaustive_minimum(
            n in 1usize..=6,
            seed in proptest::collection::vec(0u32..1000, 36),
        ) {
            let cost: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..n).map(|j| seed[i * 6 + j] as f64 / 7.0).collect())
                .collect();
            let got = assign_min_cost(&cost);
            prop_assert_eq!(got.pairs.len(), n);
            prop_assert_eq!(got.total_cost, brute_force(&cost));
        }
    }
}
