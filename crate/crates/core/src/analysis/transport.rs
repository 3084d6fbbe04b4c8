//! Exact optimal transport between two laws on a finite alphabet.
//!
//! The production solver is the transportation simplex (north-west corner
//! start, u–v potentials, Bland's entering rule). A brute-force vertex
//! enumeration of the transportation polytope is kept alongside it for
//! cross-checking on small alphabets.

use crate::space::{Alphabet, FiniteDistribution};

/// Vaserstein–Kantorovich–Rubinstein distance between `p` and `q` for the
/// alphabet metric: `min Σ d(x, y) ρ(x, y)` over couplings `ρ` of `p` and `q`.
pub fn vkr_distance(p: &FiniteDistribution, q: &FiniteDistribution, alphabet: &Alphabet) -> f64 {
    assert_eq!(p.len(), alphabet.size(), "distribution p does not match the alphabet");
    assert_eq!(q.len(), alphabet.size(), "distribution q does not match the alphabet");
    transport_cost(p.weights(), q.weights(), |x, y| alphabet.distance(x, y))
}

/// Same as [`vkr_distance`] on raw weight slices.
pub fn transport_cost(p: &[f64], q: &[f64], cost: impl Fn(usize, usize) -> f64) -> f64 {
    let rows: Vec<usize> = (0..p.len()).filter(|&i| p[i] > 0.0).collect();
    let cols: Vec<usize> = (0..q.len()).filter(|&j| q[j] > 0.0).collect();
    if rows.is_empty() || cols.is_empty() {
        return 0.0;
    }
    let supply: Vec<f64> = rows.iter().map(|&i| p[i]).collect();
    let total_p: f64 = supply.iter().sum();
    let total_q: f64 = cols.iter().map(|&j| q[j]).sum();
    // rebalance float residue so the polytope is non-empty
    let demand: Vec<f64> = cols.iter().map(|&j| q[j] * total_p / total_q).collect();
    let c: Vec<Vec<f64>> = rows
        .iter()
        .map(|&i| cols.iter().map(|&j| cost(i, j)).collect())
        .collect();
    TransportSimplex::new(&supply, &demand, &c).solve()
}

struct TransportSimplex<'a> {
    m: usize,
    n: usize,
    cost: &'a [Vec<f64>],
    /// basic cells with their flows
    basis: Vec<(usize, usize, f64)>,
}

impl<'a> TransportSimplex<'a> {
    fn new(supply: &[f64], demand: &[f64], cost: &'a [Vec<f64>]) -> Self {
        let (m, n) = (supply.len(), demand.len());
        let mut a = supply.to_vec();
        let mut b = demand.to_vec();
        let mut basis = Vec::with_capacity(m + n - 1);
        let (mut i, mut j) = (0, 0);
        for _ in 0..(m + n - 1) {
            let x = a[i].min(b[j]).max(0.0);
            basis.push((i, j, x));
            a[i] -= x;
            b[j] -= x;
            if i == m - 1 {
                j += 1;
            } else if j == n - 1 || a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
        }
        TransportSimplex { m, n, cost, basis }
    }

    fn potentials(&self) -> (Vec<f64>, Vec<f64>) {
        let (m, n) = (self.m, self.n);
        let mut u = vec![f64::NAN; m];
        let mut v = vec![f64::NAN; n];
        u[0] = 0.0;
        // the basis is a spanning tree; sweep until every potential is set
        let mut remaining = m + n - 1;
        while remaining > 0 {
            let before = remaining;
            for &(i, j, _) in &self.basis {
                let c = self.cost[i][j];
                if !u[i].is_nan() && v[j].is_nan() {
                    v[j] = c - u[i];
                    remaining -= 1;
                } else if u[i].is_nan() && !v[j].is_nan() {
                    u[i] = c - v[j];
                    remaining -= 1;
                }
            }
            if remaining == before {
                break;
            }
        }
        (u, v)
    }

    /// Path of basis indices from row `r` to column `c` in the basis tree.
    fn tree_path(&self, r: usize, c: usize) -> Vec<usize> {
        let (m, n) = (self.m, self.n);
        // nodes: rows 0..m, columns m..m+n
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; m + n];
        let mut seen = vec![false; m + n];
        let mut queue = std::collections::VecDeque::from([r]);
        seen[r] = true;
        while let Some(node) = queue.pop_front() {
            if node == m + c {
                break;
            }
            for (k, &(i, j, _)) in self.basis.iter().enumerate() {
                let next = if node < m && i == node {
                    m + j
                } else if node >= m && j == node - m {
                    i
                } else {
                    continue;
                };
                if !seen[next] {
                    seen[next] = true;
                    parent[next] = Some((node, k));
                    queue.push_back(next);
                }
            }
        }
        let mut path = Vec::new();
        let mut node = m + c;
        while let Some((prev, k)) = parent[node] {
            path.push(k);
            node = prev;
        }
        path.reverse();
        path
    }

    fn solve(mut self) -> f64 {
        let scale = self
            .cost
            .iter()
            .flatten()
            .fold(0.0_f64, |acc, c| acc.max(c.abs()))
            .max(1.0);
        let eps = 1e-13 * scale;
        for _ in 0..10_000 {
            let (u, v) = self.potentials();
            let entering = (0..self.m)
                .flat_map(|i| (0..self.n).map(move |j| (i, j)))
                .filter(|&(i, j)| !self.basis.iter().any(|&(bi, bj, _)| bi == i && bj == j))
                .find(|&(i, j)| self.cost[i][j] - u[i] - v[j] < -eps);
            let Some((ei, ej)) = entering else {
                break;
            };
            // cycle: entering (+), then alternating −, +, ... along the tree path
            let path = self.tree_path(ei, ej);
            let minus: Vec<usize> = path.iter().step_by(2).copied().collect();
            let theta = minus
                .iter()
                .map(|&k| self.basis[k].2)
                .fold(f64::INFINITY, f64::min);
            // Bland: among tied leaving cells take the lowest cell index
            let leave = minus
                .iter()
                .copied()
                .filter(|&k| self.basis[k].2 <= theta)
                .min_by_key(|&k| self.basis[k].0 * self.n + self.basis[k].1)
                .expect("cycle has a decreasing cell");
            for (pos, &k) in path.iter().enumerate() {
                if pos % 2 == 0 {
                    self.basis[k].2 = (self.basis[k].2 - theta).max(0.0);
                } else {
                    self.basis[k].2 += theta;
                }
            }
            self.basis[leave] = (ei, ej, theta);
        }
        self.basis
            .iter()
            .map(|&(i, j, x)| self.cost[i][j] * x)
            .sum()
    }
}

/// Minimum cost over all vertices of the transportation polytope, found by
/// trying every set of `m + n − 1` cells. Exponential; meant for
/// cross-checks on alphabets of at most four symbols.
pub fn transport_cost_by_vertices(p: &[f64], q: &[f64], cost: impl Fn(usize, usize) -> f64) -> f64 {
    let (m, n) = (p.len(), q.len());
    assert!(m * n <= 16, "vertex enumeration is limited to 4x4 problems");
    let cells: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let k = m + n - 1;
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << cells.len()) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let chosen: Vec<(usize, usize)> = (0..cells.len())
            .filter(|b| mask & (1 << b) != 0)
            .map(|b| cells[b])
            .collect();
        if let Some(flows) = tree_flows(&chosen, p, q) {
            if flows.iter().all(|&x| x >= -1e-12) {
                let c: f64 = chosen.iter().zip(&flows).map(|(&(i, j), x)| cost(i, j) * x).sum();
                best = best.min(c);
            }
        }
    }
    best
}

/// Flows on a spanning tree of cells, found by peeling leaves. `None` if the
/// cells do not form a spanning tree.
fn tree_flows(cells: &[(usize, usize)], p: &[f64], q: &[f64]) -> Option<Vec<f64>> {
    let (m, n) = (p.len(), q.len());
    let mut a = p.to_vec();
    let mut b = q.to_vec();
    let mut flows = vec![f64::NAN; cells.len()];
    let mut alive = vec![true; cells.len()];
    for _ in 0..cells.len() {
        let mut progressed = false;
        for r in 0..m {
            let incident: Vec<usize> = (0..cells.len()).filter(|&k| alive[k] && cells[k].0 == r).collect();
            if incident.len() == 1 {
                let k = incident[0];
                flows[k] = a[r];
                a[r] = 0.0;
                b[cells[k].1] -= flows[k];
                alive[k] = false;
                progressed = true;
            }
        }
        for c in 0..n {
            let incident: Vec<usize> = (0..cells.len()).filter(|&k| alive[k] && cells[k].1 == c).collect();
            if incident.len() == 1 {
                let k = incident[0];
                flows[k] = b[c];
                b[c] = 0.0;
                a[cells[k].0] -= flows[k];
                alive[k] = false;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    if alive.iter().any(|&x| x) {
        return None;
    }
    // a cycle-free set of m+n-1 cells that peels completely must balance
    if a.iter().chain(&b).any(|r| r.abs() > 1e-9) {
        return None;
    }
    Some(flows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(w: &[f64]) -> FiniteDistribution {
        FiniteDistribution::new(w.to_vec()).unwrap()
    }

    #[test]
    fn discrete_metric_is_total_variation() {
        let e = Alphabet::binary();
        let d = vkr_distance(&dist(&[0.3, 0.7]), &dist(&[0.7, 0.3]), &e);
        assert!((d - 0.4).abs() < 1e-15);
    }

    #[test]
    fn identical_laws() {
        let e = Alphabet::discrete(["a", "b", "c"]).unwrap();
        let p = dist(&[0.2, 0.3, 0.5]);
        assert_eq!(vkr_distance(&p, &p, &e), 0.0);
    }

    #[test]
    fn scaled_metric() {
        let e = Alphabet::with_metric(["0", "1"], &[vec![0.0, 2.0], vec![2.0, 0.0]]).unwrap();
        let d = vkr_distance(&dist(&[0.3, 0.7]), &dist(&[0.7, 0.3]), &e);
        assert!((d - 0.8).abs() < 1e-15);
        let brute = transport_cost_by_vertices(&[0.3, 0.7], &[0.7, 0.3], |x, y| e.distance(x, y));
        assert!((brute - 0.8).abs() < 1e-15);
    }

    #[test]
    fn line_metric_three_points() {
        // points 0, 1, 3 on a line: shifting half the mass by 3 costs 1.5
        let rows = vec![vec![0.0, 1.0, 3.0], vec![1.0, 0.0, 2.0], vec![3.0, 2.0, 0.0]];
        let e = Alphabet::with_metric(["a", "b", "c"], &rows).unwrap();
        let d = vkr_distance(&dist(&[0.5, 0.5, 0.0]), &dist(&[0.0, 0.5, 0.5]), &e);
        assert!((d - 1.5).abs() < 1e-14, "{d}");
        let p = [0.2, 0.5, 0.3];
        let q = [0.6, 0.1, 0.3];
        let brute = transport_cost_by_vertices(&p, &q, |x, y| rows[x][y]);
        let d = vkr_distance(&dist(&p), &dist(&q), &e);
        assert!((d - brute).abs() < 1e-14);
        assert!((d - 0.4).abs() < 1e-14, "{d}");
    }

    #[test]
    fn point_masses() {
        let e = Alphabet::discrete(["a", "b", "c", "d"]).unwrap();
        let d = vkr_distance(
            &FiniteDistribution::point_mass(4, 0),
            &FiniteDistribution::point_mass(4, 3),
            &e,
        );
        assert_eq!(d, 1.0);
    }
}
