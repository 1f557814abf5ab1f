//! Undirected communication graphs, their orientations and the
//! incidence/Laplacian algebra used to wire plants to edge controllers.
//!
//! Graph matrices are small dense integer matrices. The block maps
//! `(Q ⊗ I_m)` and `(Qᵀ ⊗ I_m)` are applied directly without forming the
//! Kronecker product.

use std::collections::{BTreeSet, VecDeque};

use crate::error::{check_len, Error, Result};
use crate::scalar::Scalar;

/// Undirected simple graph on nodes `0..n_nodes`.
///
/// Edges are stored canonically: `(i, j)` with `i < j`, sorted
/// lexicographically, no duplicates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UndirectedGraph {
    n_nodes: usize,
    edges: Vec<(usize, usize)>,
}

impl UndirectedGraph {
    /// Builds a graph from unordered node pairs. Duplicate pairs (in either
    /// order) collapse to one edge.
    pub fn new(n_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n_nodes == 0 {
            return Err(Error::NoNodes);
        }
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            for node in [a, b] {
                if node >= n_nodes {
                    return Err(Error::NodeOutOfRange { node, n_nodes });
                }
            }
            if a == b {
                return Err(Error::SelfLoop(a));
            }
            set.insert((a.min(b), a.max(b)));
        }
        Ok(Self {
            n_nodes,
            edges: set.into_iter().collect(),
        })
    }

    /// Path `0 - 1 - ... - (n-1)`.
    pub fn path(n_nodes: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n_nodes).map(|i| (i - 1, i)).collect();
        Self::new(n_nodes, &edges)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    fn neighbours(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_nodes];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    /// Breadth-first reachability from node 0.
    pub fn is_connected(&self) -> bool {
        let adj = self.neighbours();
        let mut seen = vec![false; self.n_nodes];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == self.n_nodes
    }

    /// Orients every edge. By default edge `(i, j)` with `i < j` leaves `i`
    /// (`+1`) and enters `j` (`-1`); `flips[k] == true` reverses edge `k`.
    pub fn orient(&self, flips: Option<&[bool]>) -> Result<OrientedIncidence> {
        if let Some(flips) = flips {
            check_len("orientation flags", self.edges.len(), flips.len())?;
        }
        let n = self.n_nodes;
        let mut entries = vec![0i8; self.edges.len() * n];
        for (k, &(a, b)) in self.edges.iter().enumerate() {
            let flip = flips.is_some_and(|f| f[k]);
            let (tail, head) = if flip { (b, a) } else { (a, b) };
            entries[k * n + tail] = 1;
            entries[k * n + head] = -1;
        }
        Ok(OrientedIncidence {
            n_nodes: n,
            n_edges: self.edges.len(),
            entries,
        })
    }

    /// Degree matrix minus adjacency.
    pub fn laplacian(&self) -> LaplacianMatrix {
        let n = self.n_nodes;
        let mut entries = vec![0i64; n * n];
        for &(a, b) in &self.edges {
            entries[a * n + a] += 1;
            entries[b * n + b] += 1;
            entries[a * n + b] -= 1;
            entries[b * n + a] -= 1;
        }
        LaplacianMatrix { n, entries }
    }
}

/// Incidence matrix of an oriented graph: `l × N`, one `+1` (initial node)
/// and one `-1` (terminal node) per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrientedIncidence {
    n_nodes: usize,
    n_edges: usize,
    entries: Vec<i8>,
}

impl OrientedIncidence {
    /// Builds an incidence matrix from explicit rows, validating the
    /// one-`+1`/one-`-1` row structure.
    pub fn from_rows(n_nodes: usize, rows: &[Vec<i8>]) -> Result<Self> {
        if n_nodes == 0 {
            return Err(Error::NoNodes);
        }
        let mut entries = Vec::with_capacity(rows.len() * n_nodes);
        for row in rows {
            check_len("incidence row", n_nodes, row.len())?;
            let plus = row.iter().filter(|&&q| q == 1).count();
            let minus = row.iter().filter(|&&q| q == -1).count();
            let zero = row.iter().filter(|&&q| q == 0).count();
            if plus != 1 || minus != 1 || zero != n_nodes - 2 {
                return Err(Error::InvalidParameter(format!(
                    "incidence row {row:?} must hold exactly one +1 and one -1"
                )));
            }
            entries.extend_from_slice(row);
        }
        Ok(Self {
            n_nodes,
            n_edges: rows.len(),
            entries,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    #[inline]
    pub fn get(&self, edge: usize, node: usize) -> i8 {
        self.entries[edge * self.n_nodes + node]
    }

    pub fn row(&self, edge: usize) -> &[i8] {
        &self.entries[edge * self.n_nodes..(edge + 1) * self.n_nodes]
    }

    /// `(initial, terminal)` node of edge `k`.
    pub fn endpoints(&self, edge: usize) -> (usize, usize) {
        let row = self.row(edge);
        let tail = row.iter().position(|&q| q == 1).expect("row has a +1");
        let head = row.iter().position(|&q| q == -1).expect("row has a -1");
        (tail, head)
    }

    /// The undirected graph this orientation was taken from.
    pub fn underlying_graph(&self) -> UndirectedGraph {
        let edges: Vec<_> = (0..self.n_edges).map(|k| self.endpoints(k)).collect();
        UndirectedGraph::new(self.n_nodes, &edges).expect("incidence rows are valid edges")
    }

    /// `Qᵀ Q`.
    pub fn gram(&self) -> LaplacianMatrix {
        let n = self.n_nodes;
        let mut entries = vec![0i64; n * n];
        for k in 0..self.n_edges {
            let row = self.row(k);
            for i in 0..n {
                if row[i] == 0 {
                    continue;
                }
                for j in 0..n {
                    entries[i * n + j] += i64::from(row[i]) * i64::from(row[j]);
                }
            }
        }
        LaplacianMatrix { n, entries }
    }

    /// `(Q ⊗ I_m) v`: block `k` of the result is `Σ_j q_kj · v_j`.
    pub fn apply<T: Scalar>(&self, m: usize, v: &[T]) -> Result<Vec<T>> {
        check_len("node-stacked vector", self.n_nodes * m, v.len())?;
        let mut out = vec![T::zero(); self.n_edges * m];
        self.apply_into(m, v, &mut out);
        Ok(out)
    }

    /// `(Qᵀ ⊗ I_m) w`: block `i` of the result is `Σ_k q_ki · w_k`.
    pub fn apply_transpose<T: Scalar>(&self, m: usize, w: &[T]) -> Result<Vec<T>> {
        check_len("edge-stacked vector", self.n_edges * m, w.len())?;
        let mut out = vec![T::zero(); self.n_nodes * m];
        self.apply_transpose_into(m, w, &mut out);
        Ok(out)
    }

    // Only the two nonzero entries per row contribute.
    pub(crate) fn apply_into<T: Scalar>(&self, m: usize, v: &[T], out: &mut [T]) {
        for k in 0..self.n_edges {
            let (tail, head) = self.endpoints(k);
            for c in 0..m {
                out[k * m + c] = v[tail * m + c] - v[head * m + c];
            }
        }
    }

    pub(crate) fn apply_transpose_into<T: Scalar>(&self, m: usize, w: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|o| *o = T::zero());
        for k in 0..self.n_edges {
            let (tail, head) = self.endpoints(k);
            for c in 0..m {
                out[tail * m + c] = out[tail * m + c] + w[k * m + c];
                out[head * m + c] = out[head * m + c] - w[k * m + c];
            }
        }
    }
}

/// Graph Laplacian, `N × N`, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LaplacianMatrix {
    n: usize,
    entries: Vec<i64>,
}

impl LaplacianMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.entries[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<i64>> {
        self.entries
            .chunks(self.n.max(1))
            .map(<[i64]>::to_vec)
            .collect()
    }

    /// `(L ⊗ I_m) v`.
    pub fn apply<T: Scalar>(&self, m: usize, v: &[T]) -> Result<Vec<T>> {
        check_len("node-stacked vector", self.n * m, v.len())?;
        let mut out = vec![T::zero(); self.n * m];
        for i in 0..self.n {
            for j in 0..self.n {
                let lij = self.get(i, j);
                if lij == 0 {
                    continue;
                }
                let lij = T::lit(lij as f64);
                for c in 0..m {
                    out[i * m + c] = out[i * m + c] + lij * v[j * m + c];
                }
            }
        }
        Ok(out)
    }
}
