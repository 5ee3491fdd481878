//! Graph representations, shift-operator construction and the constraint
//! descriptors consumed by the recovery programs.
//!
//! A [`Graph`] is a plain vertex/edge structure; a [`ShiftOperator`] is its
//! matrix representation (adjacency or one of the Laplacian variants). The
//! recovery programs describe the admissible matrices through a
//! [`GraphClassConstraint`].

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Matrix representation chosen for a graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphClass {
    Adjacency,
    CombinatorialLaplacian,
    NormalizedLaplacian,
}

impl GraphClass {
    pub fn is_laplacian(self) -> bool {
        matches!(
            self,
            GraphClass::CombinatorialLaplacian | GraphClass::NormalizedLaplacian
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            GraphClass::Adjacency => "adjacency",
            GraphClass::CombinatorialLaplacian => "combinatorial Laplacian",
            GraphClass::NormalizedLaplacian => "normalized Laplacian",
        }
    }
}

/// Describes the closed convex set of admissible graph matrices.
///
/// `scale` optionally pins the total off-diagonal weight
/// (`sum |S_ij|, i != j`); the sparse recovery programs need it to exclude
/// the all-zero matrix, which is otherwise always feasible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphClassConstraint {
    pub class: GraphClass,
    #[serde(default)]
    pub max_degree: Option<f64>,
    #[serde(default = "default_true")]
    pub symmetric: bool,
    #[serde(default)]
    pub scale: Option<f64>,
}

fn default_true() -> bool {
    true
}

impl GraphClassConstraint {
    pub fn new(class: GraphClass) -> Self {
        GraphClassConstraint {
            class,
            max_degree: None,
            symmetric: true,
            scale: None,
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = Some(scale);
        self
    }

    /// Checks membership of `m` in the constraint set within `tol` (scaled by
    /// the magnitude of `m`). Returns the first violated invariant.
    pub fn validate(&self, m: &DMatrix<f64>, tol: f64) -> Result<()> {
        let n = m.nrows();
        if n != m.ncols() {
            return Err(Error::DimensionMismatch {
                operand: "shift operator",
                expected: "square matrix".into(),
                found: format!("{}x{}", m.nrows(), m.ncols()),
            });
        }
        let scale = m.amax().max(1.0);
        let abs_tol = tol * scale;
        if self.symmetric {
            let asym = (m - m.transpose()).amax();
            if asym > abs_tol {
                return Err(Error::ClassViolation {
                    class: self.class.name(),
                    violation: "matrix is not symmetric".into(),
                    residual: asym,
                });
            }
        }
        match self.class {
            GraphClass::Adjacency => {
                let diag = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max);
                if diag > abs_tol {
                    return Err(Error::ClassViolation {
                        class: self.class.name(),
                        violation: "nonzero diagonal".into(),
                        residual: diag,
                    });
                }
            }
            GraphClass::CombinatorialLaplacian => {
                let mut worst_row = 0.0f64;
                let mut worst_off = 0.0f64;
                for i in 0..n {
                    let mut row_sum = 0.0;
                    for j in 0..n {
                        row_sum += m[(i, j)];
                        if i != j && m[(i, j)] > worst_off {
                            worst_off = m[(i, j)];
                        }
                    }
                    worst_row = worst_row.max(row_sum.abs());
                }
                if worst_row > abs_tol {
                    return Err(Error::ClassViolation {
                        class: self.class.name(),
                        violation: "row sums are not zero".into(),
                        residual: worst_row,
                    });
                }
                if worst_off > abs_tol {
                    return Err(Error::ClassViolation {
                        class: self.class.name(),
                        violation: "positive off-diagonal entry".into(),
                        residual: worst_off,
                    });
                }
            }
            GraphClass::NormalizedLaplacian => {
                let sym = (m + m.transpose()) * 0.5;
                let eig = sym.symmetric_eigen();
                let lo = eig.eigenvalues.min();
                let hi = eig.eigenvalues.max();
                if lo < -1e-10 - abs_tol || hi > 2.0 + 1e-10 + abs_tol {
                    return Err(Error::ClassViolation {
                        class: self.class.name(),
                        violation: format!("spectrum [{lo:.3e}, {hi:.3e}] outside [0, 2]"),
                        residual: (-lo).max(hi - 2.0).max(0.0),
                    });
                }
            }
        }
        if let Some(dmax) = self.max_degree {
            let deg = match self.class {
                GraphClass::Adjacency => (0..n)
                    .map(|i| (0..n).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum())
                    .fold(0.0, f64::max),
                _ => (0..n).map(|i| m[(i, i)]).fold(0.0, f64::max),
            };
            if deg > dmax + abs_tol {
                return Err(Error::ClassViolation {
                    class: self.class.name(),
                    violation: format!("degree {deg:.3} exceeds bound {dmax:.3}"),
                    residual: deg - dmax,
                });
            }
        }
        Ok(())
    }
}

/// Vertex/edge representation of one network.
///
/// Undirected graphs store each edge once with `i < j`; weights of the
/// standard families are strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
    directed: bool,
}

impl Graph {
    pub fn new(n: usize, edges: Vec<(usize, usize, f64)>, directed: bool) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for &(i, j, w) in &edges {
            if i >= n || j >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) out of range for {n} vertices"
                )));
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop at vertex {i}")));
            }
            if !w.is_finite() {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) has non-finite weight"
                )));
            }
            let key = if directed || i < j { (i, j) } else { (j, i) };
            if !seen.insert(key) {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge ({}, {})",
                    key.0, key.1
                )));
            }
        }
        let edges = if directed {
            edges
        } else {
            // Canonical storage: i < j, sorted.
            let mut canon: Vec<_> = edges
                .into_iter()
                .map(|(i, j, w)| if i < j { (i, j, w) } else { (j, i, w) })
                .collect();
            canon.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
            canon
        };
        Ok(Graph { n, edges, directed })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn directed(&self) -> bool {
        self.directed
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Dense adjacency matrix (symmetric for undirected graphs).
    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for &(i, j, w) in &self.edges {
            a[(i, j)] = w;
            if !self.directed {
                a[(j, i)] = w;
            }
        }
        a
    }

    /// Weighted degree of every vertex (out-degree for directed graphs).
    pub fn degrees(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for &(i, j, w) in &self.edges {
            d[i] += w;
            if !self.directed {
                d[j] += w;
            }
        }
        d
    }

    /// Connectivity of the underlying undirected structure.
    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return false;
        }
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j, _) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
        count == self.n
    }
}

/// Families available to the synthetic generators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum GraphFamily {
    ErdosRenyi { p: f64 },
    Ring,
    Path,
    Grid,
}

/// Reproducible random (or deterministic) graph generation.
///
/// Erdos-Renyi graphs are resampled until connected; disconnected state
/// graphs break minimality of the induced dynamics.
pub fn random_graph(family: GraphFamily, n: usize, seed: u64) -> Result<Graph> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "graph family needs n >= 2, got {n}"
        )));
    }
    match family {
        GraphFamily::Path => {
            let edges = (0..n - 1).map(|i| (i, i + 1, 1.0)).collect();
            Graph::new(n, edges, false)
        }
        GraphFamily::Ring => {
            if n < 3 {
                return Err(Error::InvalidArgument(
                    "ring needs at least 3 vertices".into(),
                ));
            }
            let mut edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1, 1.0)).collect();
            edges.push((0, n - 1, 1.0));
            Graph::new(n, edges, false)
        }
        GraphFamily::Grid => {
            // Near-square arrangement: rows is the largest divisor <= sqrt(n).
            let mut rows = (n as f64).sqrt().floor() as usize;
            while rows > 1 && n % rows != 0 {
                rows -= 1;
            }
            let cols = n / rows;
            let mut edges = Vec::new();
            for r in 0..rows {
                for c in 0..cols {
                    let v = r * cols + c;
                    if c + 1 < cols {
                        edges.push((v, v + 1, 1.0));
                    }
                    if r + 1 < rows {
                        edges.push((v, v + cols, 1.0));
                    }
                }
            }
            Graph::new(n, edges, false)
        }
        GraphFamily::ErdosRenyi { p } => {
            if !(0.0 < p && p < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "Erdos-Renyi probability must lie in (0, 1), got {p}"
                )));
            }
            const RETRY_CAP: usize = 200;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..RETRY_CAP {
                let mut edges = Vec::new();
                for i in 0..n {
                    for j in (i + 1)..n {
                        if rng.random::<f64>() < p {
                            edges.push((i, j, 1.0));
                        }
                    }
                }
                let g = Graph::new(n, edges, false)?;
                if g.is_connected() {
                    return Ok(g);
                }
            }
            Err(Error::ConnectivityRetriesExhausted { p })
        }
    }
}

/// The matrix representation of a graph together with its class.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftOperator {
    pub matrix: DMatrix<f64>,
    pub class: GraphClass,
}

impl ShiftOperator {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Builds the shift operator of `g` for the requested class.
///
/// Laplacian classes are defined for undirected graphs only.
pub fn build_shift(g: &Graph, constraint: &GraphClassConstraint) -> Result<ShiftOperator> {
    if g.directed() && constraint.class.is_laplacian() {
        return Err(Error::Unsupported(format!(
            "{} requested for a directed graph; Laplacians are defined for undirected graphs here",
            constraint.class.name()
        )));
    }
    let n = g.n();
    let a = g.adjacency();
    let matrix = match constraint.class {
        GraphClass::Adjacency => a,
        GraphClass::CombinatorialLaplacian => {
            // L = D - A with the diagonal computed as the negated row sum.
            let mut l = -a;
            for i in 0..n {
                let mut row_sum = 0.0;
                for j in 0..n {
                    if j != i {
                        row_sum += -l[(i, j)];
                    }
                }
                l[(i, i)] = row_sum;
            }
            l
        }
        GraphClass::NormalizedLaplacian => {
            let deg = g.degrees();
            let mut l = DMatrix::zeros(n, n);
            for i in 0..n {
                l[(i, i)] = if deg[i] > 0.0 { 1.0 } else { 0.0 };
                for j in 0..n {
                    if i != j && a[(i, j)] != 0.0 {
                        l[(i, j)] = -a[(i, j)] / (deg[i] * deg[j]).sqrt();
                    }
                }
            }
            l
        }
    };
    constraint.validate(&matrix, 1e-10)?;
    Ok(ShiftOperator {
        matrix,
        class: constraint.class,
    })
}

/// Off-diagonal support of a matrix: unordered index pairs with
/// `|entry| > tol * max |off-diagonal entry|`.
pub fn offdiag_support(m: &DMatrix<f64>, rel_tol: f64) -> std::collections::BTreeSet<(usize, usize)> {
    let n = m.nrows();
    let mut max_abs = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                max_abs = max_abs.max(m[(i, j)].abs());
            }
        }
    }
    let mut support = std::collections::BTreeSet::new();
    if max_abs == 0.0 {
        return support;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if m[(i, j)].abs() > rel_tol * max_abs || m[(j, i)].abs() > rel_tol * max_abs {
                support.insert((i, j));
            }
        }
    }
    support
}

/// Precision/recall/F-score of an estimated edge support against the truth.
pub fn support_f_score(
    estimated: &std::collections::BTreeSet<(usize, usize)>,
    truth: &std::collections::BTreeSet<(usize, usize)>,
) -> (f64, f64, f64) {
    let tp = estimated.intersection(truth).count() as f64;
    let precision = if estimated.is_empty() {
        0.0
    } else {
        tp / estimated.len() as f64
    };
    let recall = if truth.is_empty() {
        0.0
    } else {
        tp / truth.len() as f64
    };
    let f = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f)
}
