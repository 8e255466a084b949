//! Simulated agent networks: topology generation, Metropolis-Hastings
//! mixing weights, spectral data and average-consensus (AC) rounds.

use std::collections::VecDeque;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{seeded_rng, standard_normal_vector};

/// Retry budget for disconnected Erdős–Rényi draws.
pub const ER_MAX_ATTEMPTS: usize = 100;

/// Above this size `lambda2` switches from a dense eigensolve to deflated
/// power iteration.
const DENSE_EIGEN_LIMIT: usize = 512;

/// Undirected simple graph on `n` agents with sorted neighbor lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    neighbors: Vec<Vec<usize>>,
}

impl Topology {
    /// Builds a topology from an edge list. Self loops are rejected and
    /// duplicate edges collapse.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::ContractViolation("topology needs at least one agent".into()));
        }
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::ContractViolation(format!(
                    "edge ({i}, {j}) out of range for {n} agents"
                )));
            }
            if i == j {
                return Err(Error::ContractViolation(format!("self loop at agent {i}")));
            }
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self { neighbors })
    }

    pub fn complete(n: usize) -> Self {
        let neighbors = (0..n).map(|i| (0..n).filter(|&j| j != i).collect()).collect();
        Self { neighbors }
    }

    pub fn ring(n: usize) -> Self {
        assert!(n >= 3, "ring needs at least three agents");
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Self::from_edges(n, &edges).expect("ring edges are valid")
    }

    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::from_edges(n, &edges).expect("path edges are valid")
    }

    pub fn n_agents(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Edges `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, list)| list.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn is_connected(&self) -> bool {
        let n = self.n_agents();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for &j in &self.neighbors[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == n
    }

    /// One `"i j"` line per edge, 0-based.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (i, j) in self.edges() {
            let _ = writeln!(out, "{i} {j}");
        }
        out
    }

    /// Parses the edge-list format written by [`Topology::to_edge_list`].
    /// Blank lines and `#` comments are skipped. When `n` is `None` the agent
    /// count is inferred from the largest index.
    pub fn from_edge_list(text: &str, n: Option<usize>) -> Result<Self> {
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let mut next = || -> Result<usize> {
                parts
                    .next()
                    .ok_or_else(|| Error::Parse {
                        line: lineno + 1,
                        message: "expected two agent indices".into(),
                    })?
                    .parse()
                    .map_err(|e| Error::Parse {
                        line: lineno + 1,
                        message: format!("bad agent index: {e}"),
                    })
            };
            let i = next()?;
            let j = next()?;
            if parts.next().is_some() {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: "trailing tokens after edge".into(),
                });
            }
            edges.push((i, j));
        }
        let n = match n {
            Some(n) => n,
            None => edges.iter().map(|&(i, j)| i.max(j) + 1).max().unwrap_or(0),
        };
        Self::from_edges(n, &edges)
    }
}

/// Samples `G(n, p)` with a seeded generator, resampling with `seed + k` on
/// disconnected draws.
pub fn gen_erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Topology> {
    gen_erdos_renyi_with_retries(n, p, seed, ER_MAX_ATTEMPTS)
}

pub fn gen_erdos_renyi_with_retries(n: usize, p: f64, seed: u64, max_attempts: usize) -> Result<Topology> {
    if n < 2 {
        return Err(Error::ContractViolation(format!("need n >= 2, got {n}")));
    }
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return Err(Error::ContractViolation(format!("edge probability {p} not in (0, 1]")));
    }
    for attempt in 0..max_attempts {
        let mut rng = seeded_rng(seed.wrapping_add(attempt as u64));
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        let topo = Topology::from_edges(n, &edges)?;
        if topo.is_connected() {
            return Ok(topo);
        }
    }
    Err(Error::DisconnectedTopology {
        n,
        p,
        attempts: max_attempts,
    })
}

/// Topology plus a symmetric doubly stochastic mixing matrix.
#[derive(Debug, Clone)]
pub struct NetworkModel {
    topology: Topology,
    weights: DMatrix<f64>,
    lambda2: f64,
    /// Per agent: `(j, W_ij)` for `j ∈ {i} ∪ N(i)`, ascending in `j`.
    mixing: Vec<Vec<(usize, f64)>>,
}

impl NetworkModel {
    /// Wraps an explicit weight matrix after validating the network
    /// invariants (symmetry, double stochasticity, support on `E ∪ diag`).
    pub fn from_weights(topology: Topology, weights: DMatrix<f64>) -> Result<Self> {
        let n = topology.n_agents();
        if weights.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: weights.nrows(),
            });
        }
        for i in 0..n {
            let row: f64 = weights.row(i).sum();
            let col: f64 = weights.column(i).sum();
            if (row - 1.0).abs() > 1e-12 || (col - 1.0).abs() > 1e-12 {
                return Err(Error::ContractViolation(format!(
                    "weights not doubly stochastic at agent {i} (row {row}, col {col})"
                )));
            }
            for j in 0..n {
                let w = weights[(i, j)];
                if w < 0.0 {
                    return Err(Error::ContractViolation(format!("negative weight W[{i},{j}]")));
                }
                if w > 0.0 && i != j && !topology.has_edge(i, j) {
                    return Err(Error::ContractViolation(format!(
                        "W[{i},{j}] > 0 but ({i}, {j}) is not an edge"
                    )));
                }
            }
        }
        let lambda2 = lambda2(&weights)?;
        let mixing = (0..n)
            .map(|i| {
                let mut support: Vec<usize> = topology.neighbors(i).to_vec();
                support.push(i);
                support.sort_unstable();
                support.into_iter().map(|j| (j, weights[(i, j)])).collect()
            })
            .collect();
        Ok(Self {
            topology,
            weights,
            lambda2,
            mixing,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.topology.n_agents()
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// `|λ2(W)|`, the per-round AC contraction factor.
    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        self.topology.neighbors(i)
    }

    /// Weight matrix as CSV, one row per line.
    pub fn weights_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n_agents() {
            let row: Vec<String> = self.weights.row(i).iter().map(|w| format!("{w:e}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Metropolis-Hastings weights `W_ij = 1 / (1 + max(d_i, d_j))` on edges,
/// with the remaining mass on the diagonal.
pub fn metropolis_weights(topology: Topology) -> Result<NetworkModel> {
    if !topology.is_connected() {
        return Err(Error::Disconnected);
    }
    let n = topology.n_agents();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut off = 0.0;
        for &j in topology.neighbors(i) {
            let wij = 1.0 / (1.0 + topology.degree(i).max(topology.degree(j)) as f64);
            w[(i, j)] = wij;
            off += wij;
        }
        w[(i, i)] = 1.0 - off;
    }
    NetworkModel::from_weights(topology, w)
}

/// Second-largest eigenvalue magnitude of a symmetric doubly stochastic
/// matrix.
pub fn lambda2(w: &DMatrix<f64>) -> Result<f64> {
    let n = w.nrows();
    if w.ncols() != n {
        return Err(Error::ContractViolation("weight matrix is not square".into()));
    }
    let scale = w.amax().max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            if (w[(i, j)] - w[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::ContractViolation(format!(
                    "weight matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    if n <= 1 {
        return Ok(0.0);
    }
    if n <= DENSE_EIGEN_LIMIT {
        let eig = w.clone().symmetric_eigen();
        let mut mags: Vec<f64> = eig.eigenvalues.iter().map(|v| v.abs()).collect();
        mags.sort_by(|a, b| b.total_cmp(a));
        Ok(mags[1].min(1.0))
    } else {
        Ok(deflated_power_lambda2(w, 1e-10, 100_000))
    }
}

/// Power iteration on `W − 11ᵀ/N`, whose spectral radius is `|λ2(W)|` for
/// doubly stochastic `W`.
fn deflated_power_lambda2(w: &DMatrix<f64>, tol: f64, max_iter: usize) -> f64 {
    let n = w.nrows();
    let mut rng = seeded_rng(0x1a2b);
    let center = |v: &mut DVector<f64>| {
        let mean = v.mean();
        v.add_scalar_mut(-mean);
    };
    let mut v = standard_normal_vector(n, &mut rng);
    center(&mut v);
    v /= v.norm();
    let mut estimate = 0.0;
    for _ in 0..max_iter {
        // Two steps per update so that a negative dominant eigenvalue still
        // converges in magnitude.
        let mut y = w * (w * &v);
        center(&mut y);
        let norm = y.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm.sqrt();
        v = y / norm;
        if (next - estimate).abs() <= tol * next.max(1e-300) {
            return next;
        }
        estimate = next;
    }
    estimate
}

/// Smallest `t ≥ 1` with `λ2 ≤ (t/(t+1))^α / (1 + t^{−α})`.
pub fn t0_alpha(lambda2: f64, alpha: f64) -> u64 {
    assert!((0.0..1.0).contains(&lambda2), "lambda2 must lie in [0, 1)");
    assert!(alpha > 0.0 && alpha <= 1.0, "alpha must lie in (0, 1]");
    let mut t: u64 = 1;
    loop {
        if lambda2 <= t0_threshold(t, alpha) {
            return t;
        }
        t += 1;
    }
}

/// Right-hand side of the `t0` condition at integer `t`.
pub fn t0_threshold(t: u64, alpha: f64) -> f64 {
    let t = t as f64;
    (t / (t + 1.0)).powf(alpha) / (1.0 + t.powf(-alpha))
}

/// Closed-form ceiling `⌈(λ2^{−1/(1+α)} − 1)^{−1}⌉`, clamped to at least 1.
pub fn t0_upper_bound(lambda2: f64, alpha: f64) -> u64 {
    if lambda2 <= 0.0 {
        return 1;
    }
    let b = 1.0 / (lambda2.powf(-1.0 / (1.0 + alpha)) - 1.0);
    (b.ceil() as u64).max(1)
}

fn check_dims(values: &[DVector<f64>], n: usize) -> Result<usize> {
    if values.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: values.len(),
        });
    }
    let dim = values[0].len();
    for v in values {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: v.len(),
            });
        }
    }
    Ok(dim)
}

/// One AC round: `out_i = Σ_j W_ij · values_j`, summed over `{i} ∪ N(i)` in
/// ascending index order.
pub fn ac_round(values: &[DVector<f64>], net: &NetworkModel) -> Result<Vec<DVector<f64>>> {
    let dim = check_dims(values, net.n_agents())?;
    Ok(net
        .mixing
        .par_iter()
        .map(|row| {
            let mut acc = DVector::zeros(dim);
            for &(j, w) in row {
                acc.axpy(w, &values[j], 1.0);
            }
            acc
        })
        .collect())
}

pub fn ac_multi_round(values: &[DVector<f64>], net: &NetworkModel, rounds: usize) -> Result<Vec<DVector<f64>>> {
    if rounds == 0 {
        return Err(Error::ContractViolation("at least one AC round is required".into()));
    }
    let mut cur = ac_round(values, net)?;
    for _ in 1..rounds {
        cur = ac_round(&cur, net)?;
    }
    Ok(cur)
}

/// Plain average of the agents' vectors.
pub fn network_average(values: &[DVector<f64>]) -> DVector<f64> {
    let mut acc = DVector::zeros(values[0].len());
    for v in values {
        acc += v;
    }
    acc / values.len() as f64
}

/// `sqrt(Σ_i ‖x_i − x_avg‖²)`, the quantity contracted by each AC round.
pub fn deviation_norm(values: &[DVector<f64>]) -> f64 {
    let avg = network_average(values);
    values.iter().map(|v| (v - &avg).norm_squared()).sum::<f64>().sqrt()
}

/// BFS spanning tree used to account for index broadcasts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanningTree {
    pub root: usize,
    pub parent: Vec<Option<usize>>,
    pub depth: Vec<usize>,
}

impl SpanningTree {
    pub fn children(&self, i: usize) -> Vec<usize> {
        (0..self.parent.len()).filter(|&j| self.parent[j] == Some(i)).collect()
    }

    /// Agents ordered by non-increasing depth (leaves first, root last).
    pub fn bottom_up_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.parent.len()).collect();
        order.sort_by(|&a, &b| self.depth[b].cmp(&self.depth[a]).then(a.cmp(&b)));
        order
    }
}

pub fn build_spanning_tree(topology: &Topology, root: usize) -> Result<SpanningTree> {
    let n = topology.n_agents();
    if root >= n {
        return Err(Error::ContractViolation(format!("root {root} out of range")));
    }
    let mut parent = vec![None; n];
    let mut depth = vec![usize::MAX; n];
    depth[root] = 0;
    let mut queue = VecDeque::from([root]);
    while let Some(i) = queue.pop_front() {
        for &j in topology.neighbors(i) {
            if depth[j] == usize::MAX {
                depth[j] = depth[i] + 1;
                parent[j] = Some(i);
                queue.push_back(j);
            }
        }
    }
    if depth.contains(&usize::MAX) {
        return Err(Error::Disconnected);
    }
    Ok(SpanningTree { root, parent, depth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn path3() -> NetworkModel {
        metropolis_weights(Topology::path(3)).unwrap()
    }

    fn scalars(xs: &[f64]) -> Vec<DVector<f64>> {
        xs.iter().map(|&x| DVector::from_element(1, x)).collect()
    }

    #[test]
    fn two_nodes_complete() {
        let topo = gen_erdos_renyi(2, 1.0, 42).unwrap();
        assert_eq!(topo.edges(), vec![(0, 1)]);
        let net = metropolis_weights(topo).unwrap();
        for w in net.weights().iter() {
            assert_abs_diff_eq!(*w, 0.5, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(net.lambda2(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_graph_is_rejected() {
        let err = gen_erdos_renyi(5, 0.0, 1).unwrap_err();
        assert!(err.to_string().contains("disconnected topology"), "{err}");
        assert!(err.to_string().contains("n=5"));
    }

    #[test]
    fn er_is_seed_deterministic() {
        let a = gen_erdos_renyi(50, 0.1, 7).unwrap();
        let b = gen_erdos_renyi(50, 0.1, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.is_connected());
        assert!(a.edge_count() <= 1225);
    }

    #[test]
    fn path_metropolis_weights() {
        let net = path3();
        let w = net.weights();
        let third = 1.0 / 3.0;
        assert_abs_diff_eq!(w[(0, 1)], third, epsilon = 1e-15);
        assert_abs_diff_eq!(w[(1, 2)], third, epsilon = 1e-15);
        assert_abs_diff_eq!(w[(0, 0)], 2.0 * third, epsilon = 1e-15);
        assert_abs_diff_eq!(w[(2, 2)], 2.0 * third, epsilon = 1e-15);
        assert_abs_diff_eq!(w[(1, 1)], third, epsilon = 1e-15);
        assert_abs_diff_eq!(w[(0, 2)], 0.0);
        assert_abs_diff_eq!(net.lambda2(), 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn lambda2_special_matrices() {
        assert_abs_diff_eq!(lambda2(&DMatrix::identity(3, 3)).unwrap(), 1.0, epsilon = 1e-12);
        let avg = DMatrix::from_element(4, 4, 0.25);
        assert_abs_diff_eq!(lambda2(&avg).unwrap(), 0.0, epsilon = 1e-12);
        let bad = DMatrix::from_row_slice(2, 2, &[0.5, 0.6, 0.4, 0.5]);
        assert!(matches!(lambda2(&bad), Err(Error::ContractViolation(_))));
    }

    #[test]
    fn deflated_power_agrees_with_eigensolve() {
        let net = metropolis_weights(gen_erdos_renyi(30, 0.2, 5).unwrap()).unwrap();
        let power = deflated_power_lambda2(net.weights(), 1e-13, 1_000_000);
        assert_abs_diff_eq!(power, net.lambda2(), epsilon = 1e-6);
    }

    #[test]
    fn t0_examples() {
        assert_eq!(t0_alpha(0.0, 1.0), 1);
        assert_eq!(t0_alpha(0.9, 1.0), 19);
        assert_eq!(t0_upper_bound(0.9, 1.0), 19);
    }

    #[test]
    fn ac_round_path_example() {
        let net = path3();
        let out = ac_round(&scalars(&[1.0, 0.0, 0.0]), &net).unwrap();
        assert_abs_diff_eq!(out[0][0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out[1][0], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out[2][0], 0.0, epsilon = 1e-15);
        let before = deviation_norm(&scalars(&[1.0, 0.0, 0.0]));
        let after = deviation_norm(&out);
        assert_abs_diff_eq!(
            after / before,
            (2.0f64 / 9.0).sqrt() / (6.0f64 / 9.0).sqrt(),
            epsilon = 1e-12
        );
        assert!(after / before <= net.lambda2());
    }

    #[test]
    fn ac_two_rounds_path() {
        let net = path3();
        let out = ac_multi_round(&scalars(&[1.0, 0.0, 0.0]), &net, 2).unwrap();
        assert_abs_diff_eq!(out[0][0], 5.0 / 9.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out[1][0], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out[2][0], 1.0 / 9.0, epsilon = 1e-15);
        let one = ac_multi_round(&scalars(&[1.0, 0.0, 0.0]), &net, 1).unwrap();
        assert_eq!(one, ac_round(&scalars(&[1.0, 0.0, 0.0]), &net).unwrap());
    }

    #[test]
    fn ac_fixed_point_and_dimension_errors() {
        let net = path3();
        let v = DVector::from_vec(vec![1.5, -2.0]);
        let out = ac_round(&[v.clone(), v.clone(), v.clone()], &net).unwrap();
        for o in &out {
            assert_abs_diff_eq!((o - &v).norm(), 0.0, epsilon = 1e-15);
        }
        let bad = vec![v.clone(), v.clone(), DVector::zeros(3)];
        assert!(matches!(ac_round(&bad, &net), Err(Error::DimensionMismatch { .. })));
        assert!(ac_multi_round(&[v.clone(), v.clone(), v], &net, 0).is_err());
    }

    #[test]
    fn spanning_trees() {
        let tree = build_spanning_tree(&Topology::path(3), 1).unwrap();
        assert_eq!(tree.parent, vec![Some(1), None, Some(1)]);
        assert_eq!(tree.depth, vec![1, 0, 1]);

        let tree = build_spanning_tree(&Topology::complete(4), 0).unwrap();
        assert!(tree.depth.iter().all(|&d| d <= 1));

        let topo = gen_erdos_renyi(40, 0.1, 3).unwrap();
        let tree = build_spanning_tree(&topo, 0).unwrap();
        let tree_edges: Vec<_> = (0..40).filter_map(|j| tree.parent[j].map(|p| (p, j))).collect();
        assert_eq!(tree_edges.len(), 39);
        assert!(tree_edges.iter().all(|&(p, j)| topo.has_edge(p, j)));

        let split = Topology::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        assert!(matches!(build_spanning_tree(&split, 0), Err(Error::Disconnected)));
    }

    #[test]
    fn edge_list_round_trip() {
        let topo = gen_erdos_renyi(12, 0.3, 9).unwrap();
        let text = topo.to_edge_list();
        assert_eq!(Topology::from_edge_list(&text, Some(12)).unwrap(), topo);
        assert!(matches!(
            Topology::from_edge_list("0 1\n2 x\n", None),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn metropolis_rejects_disconnected() {
        let split = Topology::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        assert!(matches!(metropolis_weights(split), Err(Error::Disconnected)));
    }
}
