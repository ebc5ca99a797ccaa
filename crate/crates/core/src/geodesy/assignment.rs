use crate::{Error, Result};

/// Injective map from coarse vertices (rows) to surface vertices (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentMap {
    targets: Vec<usize>,
    total_cost: f64,
}

impl AssignmentMap {
    pub fn new(targets: Vec<usize>, total_cost: f64) -> Self {
        AssignmentMap {
            targets,
            total_cost,
        }
    }

    /// Surface vertex assigned to coarse vertex `row`.
    pub fn target(&self, row: usize) -> usize {
        self.targets[row]
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn total_cost(&self) -> f64 {
        self.total_cost
    }
}

/// Minimum-cost injection of rows into columns (rows <= columns).
///
/// Shortest augmenting paths with row/column potentials, one row at a time;
/// O(rows² · cols). Columns are scanned in index order with strict
/// comparisons, so equal-cost alternatives resolve deterministically.
pub fn linear_assignment(costs: &[Vec<f64>]) -> Result<AssignmentMap> {
    let n = costs.len();
    if n == 0 {
        return Ok(AssignmentMap::new(Vec::new(), 0.0));
    }
    let m = costs[0].len();
    if n > m {
        return Err(Error::TooManyRows { rows: n, cols: m });
    }
    for (r, row) in costs.iter().enumerate() {
        if row.len() != m {
            return Err(Error::shape(format!(
                "cost row {r} has {} columns, expected {m}",
                row.len()
            )));
        }
        if let Some(c) = row.iter().position(|&x| !x.is_finite() || x < 0.0) {
            return Err(Error::InvalidCost { row: r, col: c });
        }
    }

    // 1-based potentials; column 0 is the virtual root of each search.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![inf; m + 1];
    let mut used = vec![false; m + 1];

    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|x| *x = inf);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let row = &costs[i0 - 1];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - u[i0] - v[j];
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

    let mut targets = vec![0usize; n];
    for j in 1..=m {
        if owner[j] > 0 {
            targets[owner[j] - 1] = j - 1;
        }
    }
    let total = targets.iter().enumerate().map(|(r, &c)| costs[r][c]).sum();
    Ok(AssignmentMap::new(targets, total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exhaustive minimum over all injections.
    fn brute_force(costs: &[Vec<f64>]) -> f64 {
        fn go(costs: &[Vec<f64>], row: usize, used: &mut Vec<bool>) -> f64 {
            if row == costs.len() {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for c in 0..used.len() {
                if !used[c] {
                    used[c] = true;
                    best = best.min(costs[row][c] + go(costs, row + 1, used));
                    used[c] = false;
                }
            }
            best
        }
        go(costs, 0, &mut vec![false; costs[0].len()])
    }

    #[test]
    fn small_examples() {
        let a = linear_assignment(&[vec![0.0, 5.0], vec![5.0, 0.0]]).unwrap();
        assert_eq!(a.targets(), &[0, 1]);
        assert_eq!(a.total_cost(), 0.0);

        let b = linear_assignment(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert_eq!(b.targets(), &[0, 1]);
        assert_eq!(b.total_cost(), 2.0);

        let c = linear_assignment(&[vec![5.0, 1.0, 9.0], vec![1.0, 5.0, 9.0]]).unwrap();
        assert_eq!(c.targets(), &[1, 0]);
        assert_eq!(c.total_cost(), 2.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            linear_assignment(&[vec![1.0], vec![2.0]]),
            Err(Error::TooManyRows { rows: 2, cols: 1 })
        ));
        assert!(matches!(
            linear_assignment(&[vec![1.0, f64::NAN]]),
            Err(Error::InvalidCost { row: 0, col: 1 })
        ));
        assert!(matches!(
            linear_assignment(&[vec![1.0, f64::INFINITY]]),
            Err(Error::InvalidCost { .. })
        ));
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            (_n, m, cells) in (1usize..=7).prop_flat_map(|n| (Just(n), n.max(1)..=8usize))
                .prop_flat_map(|(n, m)| (Just(n), Just(m), prop::collection::vec(0u32..50, n * m)))
        ) {
            let costs: Vec<Vec<f64>> = cells.chunks(m).map(|r| r.iter().map(|&c| c as f64).collect()).collect();
            let a = linear_assignment(&costs).unwrap();
            let mut seen = vec![false; m];
            for &t in a.targets() {
                prop_assert!(!seen[t]);
                seen[t] = true;
            }
            prop_assert_eq!(a.total_cost(), brute_force(&costs));
        }
    }
}
