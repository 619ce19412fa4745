//! Optimal one-to-one matching of estimates to targets.
//!
//! Costs are Euclidean distances in meters; the assignment minimizing
//! total cost is found with the Hungarian method in its O(n³)
//! potentials-and-augmenting-paths form. Rectangular problems are padded
//! to square with zero-cost rows/columns, which preserves the optimum:
//! padding assignments cost nothing and are interchangeable, so an
//! optimal padded solution restricted to real rows and columns is an
//! optimal rectangular solution.

use ndarray::Array2;

/// The result of matching estimates against targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Matched (estimate index, target index, distance in meters),
    /// min(#estimates, #targets) entries when no gate is applied.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_estimates: Vec<usize>,
    pub unmatched_targets: Vec<usize>,
}

/// Minimum-cost pairing of an n×m cost matrix; returns min(n, m) pairs
/// (row, col). Costs must be finite and nonnegative. Ties resolve by the
/// algorithm's deterministic scan order.
pub fn hungarian(cost: &Array2<f64>) -> Vec<(usize, usize)> {
    let (n, m) = cost.dim();
    if n == 0 || m == 0 {
        return Vec::new();
    }
    let size = n.max(m);
    // 1-based with a sentinel row/column 0; padding cells cost 0.
    let a = |i: usize, j: usize| -> f64 {
        if i <= n && j <= m {
            cost[[i - 1, j - 1]]
        } else {
            0.0
        }
    };
    let mut u = vec![0.0f64; size + 1]; // row potentials
    let mut v = vec![0.0f64; size + 1]; // column potentials
    let mut matched_row = vec![0usize; size + 1]; // column -> row
    let mut way = vec![0usize; size + 1];

    for i in 1..=size {
        matched_row[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; size + 1];
        let mut used = vec![false; size + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=size {
                if !used[j] {
                    let cur = a(i0, j) - u[i0] - v[j];
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
            for j in 0..=size {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        // Augment along the alternating path back to the sentinel.
        while j0 != 0 {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
        }
    }

    let mut pairs: Vec<(usize, usize)> = (1..=size)
        .filter(|&j| matched_row[j] >= 1 && matched_row[j] <= n && j <= m)
        .map(|j| (matched_row[j] - 1, j - 1))
        .collect();
    pairs.sort_unstable();
    pairs
}

/// Match estimate points to target points by Euclidean distance with no
/// distance gate: every possible pair is allowed, as many pairs as the
/// smaller list.
pub fn associate(estimates: &[(f64, f64)], targets: &[(f64, f64)]) -> Assignment {
    associate_gated(estimates, targets, f64::INFINITY)
}

/// [`associate`] with a maximum matching distance: optimal pairs farther
/// than `max_distance` are reported unmatched instead.
pub fn associate_gated(
    estimates: &[(f64, f64)],
    targets: &[(f64, f64)],
    max_distance: f64,
) -> Assignment {
    let cost = Array2::from_shape_fn((estimates.len(), targets.len()), |(i, j)| {
        let (dx, dy) = (
            estimates[i].0 - targets[j].0,
            estimates[i].1 - targets[j].1,
        );
        (dx * dx + dy * dy).sqrt()
    });
    let mut pairs = Vec::new();
    let mut used_e = vec![false; estimates.len()];
    let mut used_t = vec![false; targets.len()];
    for (i, j) in hungarian(&cost) {
        let d = cost[[i, j]];
        if d <= max_distance {
            pairs.push((i, j, d));
            used_e[i] = true;
            used_t[j] = true;
        }
    }
    Assignment {
        pairs,
        unmatched_estimates: (0..estimates.len()).filter(|&i| !used_e[i]).collect(),
        unmatched_targets: (0..targets.len()).filter(|&j| !used_t[j]).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive minimum over all injections of rows into columns.
    pub(crate) fn brute_force_min(cost: &Array2<f64>) -> f64 {
        let (n, m) = cost.dim();
        let (rows, cols, c) = if n <= m {
            (n, m, cost.clone())
        } else {
            (m, n, cost.t().to_owned())
        };
        fn rec(c: &Array2<f64>, row: usize, rows: usize, taken: &mut Vec<bool>) -> f64 {
            if row == rows {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..taken.len() {
                if !taken[j] {
                    taken[j] = true;
                    let sub = rec(c, row + 1, rows, taken);
                    taken[j] = false;
                    best = best.min(c[[row, j]] + sub);
                }
            }
            best
        }
        if rows == 0 {
            return 0.0;
        }
        rec(&c, 0, rows, &mut vec![false; cols])
    }

    fn total(cost: &Array2<f64>, pairs: &[(usize, usize)]) -> f64 {
        pairs.iter().map(|&(i, j)| cost[[i, j]]).sum()
    }

    #[test]
    fn diagonal_optimum() {
        let cost = ndarray::arr2(&[[0.0, 9.0], [9.0, 0.0]]);
        let pairs = hungarian(&cost);
        assert_eq!(pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(total(&cost, &pairs), 0.0);
    }

    #[test]
    fn anti_diagonal_optimum() {
        let cost = ndarray::arr2(&[[5.0, 1.0], [1.0, 5.0]]);
        let pairs = hungarian(&cost);
        assert_eq!(pairs, vec![(0, 1), (1, 0)]);
        assert_eq!(total(&cost, &pairs), 2.0);
    }

    #[test]
    fn empty_matrix_empty_pairing() {
        assert!(hungarian(&Array2::zeros((0, 3))).is_empty());
        assert!(hungarian(&Array2::zeros((3, 0))).is_empty());
    }

    #[test]
    fn matches_brute_force_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let n = rng.gen_range(1..=7);
            let m = rng.gen_range(1..=7);
            let cost = Array2::from_shape_fn((n, m), |_| rng.gen_range(0.0..100.0));
            let pairs = hungarian(&cost);
            assert_eq!(pairs.len(), n.min(m));
            let got = total(&cost, &pairs);
            let want = brute_force_min(&cost);
            assert!(
                (got - want).abs() < 1e-9,
                "hungarian {got} != brute force {want} on {cost:?}"
            );
        }
    }

    #[test]
    fn transpose_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.gen_range(1..=6);
            let m = rng.gen_range(1..=6);
            let cost = Array2::from_shape_fn((n, m), |_| rng.gen_range(0.0..100.0));
            let mut forward = hungarian(&cost);
            let mut back: Vec<(usize, usize)> = hungarian(&cost.t().to_owned())
                .into_iter()
                .map(|(j, i)| (i, j))
                .collect();
            forward.sort_unstable();
            back.sort_unstable();
            // Continuous random costs make the optimum unique.
            assert_eq!(forward, back);
        }
    }

    #[test]
    fn far_target_does_not_disturb_pairs() {
        let estimates = [(0.0, 0.0), (10.0, 0.0)];
        let targets = [(0.5, 0.0), (10.5, 0.0)];
        let base = associate(&estimates, &targets);
        let mut extended = targets.to_vec();
        extended.push((1000.0, 1000.0));
        let more = associate(&estimates, &extended);
        assert_eq!(base.pairs.len(), 2);
        for (p, q) in base.pairs.iter().zip(more.pairs.iter()) {
            assert_eq!((p.0, p.1), (q.0, q.1));
        }
        assert_eq!(more.unmatched_targets, vec![2]);
    }

    #[test]
    fn identical_lists_match_at_zero_distance() {
        let pts = [(1.0, 2.0), (3.0, 4.0), (5.0, 6.0)];
        let a = associate(&pts, &pts);
        assert_eq!(a.pairs.len(), 3);
        assert!(a.pairs.iter().all(|&(i, j, d)| i == j && d == 0.0));
        assert!(a.unmatched_estimates.is_empty());
        assert!(a.unmatched_targets.is_empty());
    }

    #[test]
    fn surplus_targets_are_reported() {
        let estimates = [(0.0, 0.0), (10.0, 0.0)];
        let targets = [(0.0, 0.1), (10.0, 0.1), (20.0, 0.0)];
        let a = associate(&estimates, &targets);
        assert_eq!(a.pairs.len(), 2);
        assert_eq!(a.unmatched_targets, vec![2]);
        assert!(a.unmatched_estimates.is_empty());
    }

    #[test]
    fn gate_moves_far_pairs_to_unmatched() {
        let estimates = [(0.0, 0.0), (50.0, 0.0)];
        let targets = [(0.2, 0.0), (90.0, 0.0)];
        let a = associate_gated(&estimates, &targets, 5.0);
        assert_eq!(a.pairs.len(), 1);
        assert_eq!(a.pairs[0].0, 0);
        assert_eq!(a.unmatched_estimates, vec![1]);
        assert_eq!(a.unmatched_targets, vec![1]);
    }
}
