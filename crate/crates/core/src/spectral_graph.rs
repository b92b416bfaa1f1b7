//! Spanning-tree infrastructure over reference knots.
//!
//! Knots are connected by a complete Gaussian-similarity graph whose
//! normalized Laplacian yields a low-dimensional spectral embedding. The
//! minimum spanning tree of the embedded knots defines the neighborhood
//! structure used by multivariate splits: removing one edge of a (sub)tree
//! bipartitions its vertex set into two connected pieces.

use std::cmp::Ordering;
use std::collections::VecDeque;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::PointSet;
use crate::error::{Error, Result};

/// Default relative tolerance separating zero from non-zero eigenvalues.
pub const DEFAULT_ZERO_TOL: f64 = 1e-8;

/// Complete graph with a dense symmetric weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    weights: Vec<f64>,
}

impl WeightedGraph {
    pub fn new(n: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: weights.len(),
            });
        }
        for i in 0..n {
            if weights[i * n + i] != 0.0 {
                return Err(Error::InvalidInput("nonzero graph diagonal".into()));
            }
            for j in 0..n {
                let w = weights[i * n + j];
                if !w.is_finite() || w < 0.0 || w != weights[j * n + i] {
                    return Err(Error::InvalidInput(
                        "graph weights must be finite, nonnegative and symmetric".into(),
                    ));
                }
            }
        }
        Ok(Self { n, weights })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }
}

/// Gaussian similarity graph: `w_ij = exp(-|s_i - s_j|^2)`.
pub fn build_similarity(pts: &PointSet) -> Result<WeightedGraph> {
    let n = pts.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "similarity graph needs at least 2 points, got {n}"
        )));
    }
    let mut weights = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let w = (-squared_distance(pts.row(i), pts.row(j))).exp();
            weights[i * n + j] = w;
            weights[j * n + i] = w;
        }
    }
    Ok(WeightedGraph { n, weights })
}

/// `L = I - D^{-1/2} W D^{-1/2}`.
pub fn normalized_laplacian(g: &WeightedGraph) -> Result<DMatrix<f64>> {
    let n = g.n;
    let mut inv_sqrt_deg = Vec::with_capacity(n);
    for i in 0..n {
        let deg: f64 = (0..n).map(|j| g.weight(i, j)).sum();
        if deg <= 0.0 {
            return Err(Error::IsolatedVertex(i));
        }
        inv_sqrt_deg.push(deg.sqrt().recip());
    }
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let off = g.weight(i, j) * inv_sqrt_deg[i] * inv_sqrt_deg[j];
        if i == j {
            1.0 - off
        } else {
            -off
        }
    }))
}

/// Knot coordinates in the spectral embedding, one row per knot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    k: usize,
    coords: Vec<f64>,
    eigenvalues: Vec<f64>,
}

impl Embedding {
    pub fn from_coords(k: usize, coords: Vec<f64>) -> Result<Self> {
        if k == 0 || !coords.len().is_multiple_of(k) {
            return Err(Error::InvalidInput("embedding shape".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite embedding".into()));
        }
        Ok(Self {
            k,
            coords,
            eigenvalues: Vec::new(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.coords.len() / self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.coords[i * self.k..(i + 1) * self.k]
    }

    /// Eigenvalues matching the embedding columns (ascending).
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Column `c` as a vector (an eigenvector of the Laplacian).
    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.n()).map(|i| self.coords[i * self.k + c]).collect()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        squared_distance(self.row(i), self.row(j)).sqrt()
    }
}

/// Unit-norm eigenvectors of the `k` smallest eigenvalues above
/// `zero_tol * lambda_max`, sorted ascending by eigenvalue.
pub fn spectral_embedding(l: &DMatrix<f64>, k: usize, zero_tol: f64) -> Result<Embedding> {
    let n = l.nrows();
    if l.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: l.ncols(),
        });
    }
    if k == 0 {
        return Err(Error::InvalidInput(
            "embedding dimension must be positive".into(),
        ));
    }
    if k >= n {
        return Err(Error::InsufficientSpectrum {
            requested: k,
            available: n.saturating_sub(1),
        });
    }
    let eig = SymmetricEigen::new(l.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(Ordering::Equal)
    });
    let lambda_max = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let cutoff = zero_tol * lambda_max;
    let chosen: Vec<usize> = order
        .into_iter()
        .filter(|&i| eig.eigenvalues[i] > cutoff)
        .take(k)
        .collect();
    if chosen.len() < k {
        return Err(Error::InsufficientSpectrum {
            requested: k,
            available: chosen.len(),
        });
    }
    let mut coords = vec![0.0; n * k];
    for (c, &idx) in chosen.iter().enumerate() {
        let v = eig.eigenvectors.column(idx);
        let norm = v.norm();
        // Fix the sign so the embedding is reproducible across solvers.
        let pivot = v
            .iter()
            .fold(0.0_f64, |acc, &x| if x.abs() > acc.abs() { x } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            coords[i * k + c] = sign * v[i] / norm;
        }
    }
    Ok(Embedding {
        k,
        coords,
        eigenvalues: chosen.iter().map(|&i| eig.eigenvalues[i]).collect(),
    })
}

/// Spanning tree over vertices `0..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanningTree {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl SpanningTree {
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let handle = SubtreeHandle::new((0..n).collect(), edges)?;
        Ok(Self {
            n,
            edges: handle.edges,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn total_weight(&self, emb: &Embedding) -> f64 {
        self.edges.iter().map(|&(i, j)| emb.distance(i, j)).sum()
    }

    pub fn to_handle(&self) -> SubtreeHandle {
        SubtreeHandle {
            vertices: (0..self.n).collect(),
            edges: self.edges.clone(),
        }
    }
}

/// Minimum spanning tree of the embedded points under Euclidean distance.
pub fn minimum_spanning_tree(emb: &Embedding) -> SpanningTree {
    let n = emb.n();
    let all: Vec<usize> = (0..n).collect();
    SpanningTree {
        n,
        edges: kruskal(emb, &all),
    }
}

/// A connected, acyclic piece of a spanning tree: sorted vertex ids plus the
/// induced edges, each stored as `(min, max)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtreeHandle {
    vertices: Vec<usize>,
    edges: Vec<(usize, usize)>,
}

impl SubtreeHandle {
    /// Validates that `edges` form a tree spanning `vertices`.
    pub fn new(mut vertices: Vec<usize>, edges: Vec<(usize, usize)>) -> Result<Self> {
        vertices.sort_unstable();
        vertices.dedup();
        if vertices.is_empty() {
            return Err(Error::InvalidInput("empty subtree".into()));
        }
        if edges.len() + 1 != vertices.len() {
            return Err(Error::InvalidInput(format!(
                "{} vertices need {} edges, got {}",
                vertices.len(),
                vertices.len() - 1,
                edges.len()
            )));
        }
        let mut normalized = Vec::with_capacity(edges.len());
        let mut uf = UnionFind::new(vertices.len());
        for (a, b) in edges {
            let ia = vertices
                .binary_search(&a)
                .map_err(|_| Error::VertexNotInTree(a))?;
            let ib = vertices
                .binary_search(&b)
                .map_err(|_| Error::VertexNotInTree(b))?;
            if !uf.union(ia, ib) {
                return Err(Error::InvalidInput("edges contain a cycle".into()));
            }
            normalized.push((a.min(b), a.max(b)));
        }
        Ok(Self {
            vertices,
            edges: normalized,
        })
    }

    /// Minimum spanning tree of the embedded knots restricted to `vertices`.
    /// For a connected piece of the global tree this reproduces that piece.
    pub fn minimum_over(emb: &Embedding, vertices: &[usize]) -> Self {
        let mut vertices = vertices.to_vec();
        vertices.sort_unstable();
        vertices.dedup();
        let edges = kruskal(emb, &vertices);
        Self { vertices, edges }
    }

    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.vertices.binary_search(&v).is_ok()
    }

    fn local(&self, v: usize) -> Result<usize> {
        self.vertices
            .binary_search(&v)
            .map_err(|_| Error::VertexNotInTree(v))
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for &(a, b) in &self.edges {
            let ia = self.local(a).expect("edge endpoint in tree");
            let ib = self.local(b).expect("edge endpoint in tree");
            adj[ia].push(ib);
            adj[ib].push(ia);
        }
        adj
    }

    /// Hop counts from `u` to every vertex, indexed like [`Self::vertices`].
    pub fn hop_distances(&self, u: usize) -> Result<Vec<usize>> {
        let adj = self.adjacency();
        let start = self.local(u)?;
        let mut dist = vec![usize::MAX; self.vertices.len()];
        dist[start] = 0;
        let mut queue = VecDeque::from([start]);
        while let Some(x) = queue.pop_front() {
            for &y in &adj[x] {
                if dist[y] == usize::MAX {
                    dist[y] = dist[x] + 1;
                    queue.push_back(y);
                }
            }
        }
        Ok(dist)
    }
}

/// Edges of the unique path from `u` to `v`, oriented along the walk.
pub fn tree_path(t: &SubtreeHandle, u: usize, v: usize) -> Result<Vec<(usize, usize)>> {
    let start = t.local(u)?;
    let goal = t.local(v)?;
    if start == goal {
        return Err(Error::InvalidInput("path endpoints must differ".into()));
    }
    let adj = t.adjacency();
    let mut parent = vec![usize::MAX; t.vertices.len()];
    parent[start] = start;
    let mut queue = VecDeque::from([start]);
    while let Some(x) = queue.pop_front() {
        if x == goal {
            break;
        }
        for &y in &adj[x] {
            if parent[y] == usize::MAX {
                parent[y] = x;
                queue.push_back(y);
            }
        }
    }
    let mut path = Vec::new();
    let mut cur = goal;
    while cur != start {
        let p = parent[cur];
        path.push((t.vertices[p], t.vertices[cur]));
        cur = p;
    }
    path.reverse();
    Ok(path)
}

/// Remove `removed_edge` and return the two components; the first contains
/// the edge's first endpoint.
pub fn bipartition(
    t: &SubtreeHandle,
    removed_edge: (usize, usize),
) -> Result<(SubtreeHandle, SubtreeHandle)> {
    let (a, b) = removed_edge;
    let key = (a.min(b), a.max(b));
    if !t.edges.contains(&key) {
        return Err(Error::EdgeNotInTree(a, b));
    }
    let mut uf = UnionFind::new(t.vertices.len());
    for &e in &t.edges {
        if e != key {
            uf.union(t.local(e.0)?, t.local(e.1)?);
        }
    }
    let root_a = uf.find(t.local(a)?);
    let mut side_a = SubtreeHandle {
        vertices: Vec::new(),
        edges: Vec::new(),
    };
    let mut side_b = side_a.clone();
    for (i, &v) in t.vertices.iter().enumerate() {
        if uf.find(i) == root_a {
            side_a.vertices.push(v);
        } else {
            side_b.vertices.push(v);
        }
    }
    for &e in &t.edges {
        if e == key {
            continue;
        }
        if side_a.contains(e.0) {
            side_a.edges.push(e);
        } else {
            side_b.edges.push(e);
        }
    }
    Ok((side_a, side_b))
}

fn kruskal(emb: &Embedding, vertices: &[usize]) -> Vec<(usize, usize)> {
    let m = vertices.len();
    let mut candidates = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    for a in 0..m {
        for b in (a + 1)..m {
            let (i, j) = (vertices[a], vertices[b]);
            candidates.push((emb.distance(i, j), a, b));
        }
    }
    // Ties resolve by lexicographic vertex order.
    candidates.sort_by(|x, y| {
        x.0.partial_cmp(&y.0)
            .unwrap_or(Ordering::Equal)
            .then_with(|| (vertices[x.1], vertices[x.2]).cmp(&(vertices[y.1], vertices[y.2])))
    });
    let mut uf = UnionFind::new(m);
    let mut edges = Vec::with_capacity(m.saturating_sub(1));
    for (_, a, b) in candidates {
        if uf.union(a, b) {
            edges.push((vertices[a], vertices[b]));
            if edges.len() + 1 == m {
                break;
            }
        }
    }
    edges
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false when `a` and `b` were already connected.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            Ordering::Less => self.parent[ra] = rb,
            Ordering::Greater => self.parent[rb] = ra,
            Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points(rows: &[&[f64]]) -> PointSet {
        PointSet::from_rows(rows).unwrap()
    }

    fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
        let mut v: Vec<f64> = SymmetricEigen::new(m.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    #[test]
    fn similarity_of_identical_points_is_one() {
        let g = build_similarity(&points(&[&[0.3, 0.1], &[0.3, 0.1]])).unwrap();
        assert_eq!(g.weight(0, 1), 1.0);
        assert_eq!(g.weight(0, 0), 0.0);
    }

    #[test]
    fn similarity_at_sqrt_ln2_is_half() {
        let d = 2f64.ln().sqrt();
        let g = build_similarity(&points(&[&[0.0], &[d]])).unwrap();
        assert!((g.weight(0, 1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn similarity_symmetric_zero_diagonal() {
        let g = build_similarity(&points(&[&[0.0, 0.0], &[1.0, 0.5], &[-0.3, 2.0]])).unwrap();
        for i in 0..3 {
            assert_eq!(g.weight(i, i), 0.0);
            for j in 0..3 {
                assert_eq!(g.weight(i, j), g.weight(j, i));
            }
        }
    }

    #[test]
    fn similarity_needs_two_points() {
        assert!(build_similarity(&points(&[&[1.0]])).is_err());
    }

    #[test]
    fn two_vertex_laplacian_spectrum() {
        let g = WeightedGraph::new(2, vec![0.0, 0.37, 0.37, 0.0]).unwrap();
        let ev = sorted_eigenvalues(&normalized_laplacian(&g).unwrap());
        assert!(ev[0].abs() < 1e-12);
        assert!((ev[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn k3_laplacian_spectrum() {
        let w = vec![0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0];
        let g = WeightedGraph::new(3, w).unwrap();
        let ev = sorted_eigenvalues(&normalized_laplacian(&g).unwrap());
        assert!(ev[0].abs() < 1e-12);
        assert!((ev[1] - 1.5).abs() < 1e-12);
        assert!((ev[2] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn laplacian_null_vector_is_sqrt_degree() {
        let g = build_similarity(&points(&[&[0.0], &[0.4], &[1.1], &[2.0]])).unwrap();
        let l = normalized_laplacian(&g).unwrap();
        let sqrt_deg = nalgebra::DVector::from_fn(4, |i, _| {
            (0..4).map(|j| g.weight(i, j)).sum::<f64>().sqrt()
        });
        assert!((l * sqrt_deg).norm() < 1e-12);
    }

    #[test]
    fn isolated_vertex_rejected() {
        let g = WeightedGraph::new(3, vec![0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            normalized_laplacian(&g),
            Err(Error::IsolatedVertex(2))
        ));
    }

    #[test]
    fn embedding_of_two_vertices_is_the_top_eigenvector() {
        let g = WeightedGraph::new(2, vec![0.0, 0.8, 0.8, 0.0]).unwrap();
        let emb =
            spectral_embedding(&normalized_laplacian(&g).unwrap(), 1, DEFAULT_ZERO_TOL).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((emb.row(0)[0].abs() - h).abs() < 1e-12);
        assert!((emb.row(0)[0] + emb.row(1)[0]).abs() < 1e-12);
        assert!((emb.eigenvalues()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn embedding_respects_symmetry() {
        // Equilateral triangle: all embedded pairwise distances coincide.
        let s = 3f64.sqrt() / 2.0;
        let g = build_similarity(&points(&[&[0.0, 0.0], &[1.0, 0.0], &[0.5, s]])).unwrap();
        let emb =
            spectral_embedding(&normalized_laplacian(&g).unwrap(), 2, DEFAULT_ZERO_TOL).unwrap();
        let d01 = emb.distance(0, 1);
        assert!((emb.distance(0, 2) - d01).abs() < 1e-10);
        assert!((emb.distance(1, 2) - d01).abs() < 1e-10);
    }

    #[test]
    fn embedding_dimension_n_is_an_error() {
        let g = build_similarity(&points(&[&[0.0], &[1.0], &[2.5]])).unwrap();
        let l = normalized_laplacian(&g).unwrap();
        assert!(matches!(
            spectral_embedding(&l, 3, DEFAULT_ZERO_TOL),
            Err(Error::InsufficientSpectrum { .. })
        ));
    }

    #[test]
    fn mst_of_collinear_points() {
        let emb = Embedding::from_coords(1, vec![0.0, 1.0, 3.0]).unwrap();
        assert_eq!(minimum_spanning_tree(&emb).edges(), &[(0, 1), (1, 2)]);
    }

    #[test]
    fn mst_of_two_points() {
        let emb = Embedding::from_coords(1, vec![0.5, -2.0]).unwrap();
        assert_eq!(minimum_spanning_tree(&emb).edges(), &[(0, 1)]);
    }

    #[test]
    fn path_queries() {
        let path = SpanningTree::new(3, vec![(0, 1), (1, 2)])
            .unwrap()
            .to_handle();
        assert_eq!(tree_path(&path, 0, 2).unwrap(), vec![(0, 1), (1, 2)]);
        assert_eq!(tree_path(&path, 1, 2).unwrap(), vec![(1, 2)]);
        let star = SpanningTree::new(4, vec![(0, 3), (1, 3), (2, 3)])
            .unwrap()
            .to_handle();
        assert_eq!(tree_path(&star, 0, 1).unwrap(), vec![(0, 3), (3, 1)]);
        assert!(matches!(
            tree_path(&star, 0, 9),
            Err(Error::VertexNotInTree(9))
        ));
    }

    #[test]
    fn bipartition_of_a_path() {
        let path = SpanningTree::new(3, vec![(0, 1), (1, 2)])
            .unwrap()
            .to_handle();
        let (a, b) = bipartition(&path, (0, 1)).unwrap();
        assert_eq!(a.vertices(), &[0]);
        assert_eq!(b.vertices(), &[1, 2]);
        assert_eq!(b.edges(), &[(1, 2)]);
        assert!(matches!(
            bipartition(&path, (0, 2)),
            Err(Error::EdgeNotInTree(0, 2))
        ));
    }

    #[test]
    fn subtree_validation_rejects_cycles_and_foreign_vertices() {
        assert!(SubtreeHandle::new(vec![0, 1, 2], vec![(0, 1), (1, 2), (0, 2)]).is_err());
        assert!(SubtreeHandle::new(vec![0, 1, 2], vec![(0, 1), (0, 1)]).is_err());
        assert!(SubtreeHandle::new(vec![0, 1], vec![(0, 5)]).is_err());
    }

    #[test]
    fn component_of_mst_is_mst_of_its_vertices() {
        let emb = Embedding::from_coords(
            2,
            vec![0.0, 0.0, 1.0, 0.2, 2.1, -0.3, 0.4, 1.7, 3.0, 1.0, 2.2, 2.4],
        )
        .unwrap();
        let t = minimum_spanning_tree(&emb).to_handle();
        for &e in t.edges() {
            let (a, b) = bipartition(&t, e).unwrap();
            assert_eq!(SubtreeHandle::minimum_over(&emb, a.vertices()), a);
            assert_eq!(SubtreeHandle::minimum_over(&emb, b.vertices()), b);
        }
    }
}
