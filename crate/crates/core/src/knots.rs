//! Reference knots and the distance caches that route data through splits.

use serde::{Deserialize, Serialize};

use crate::data::PointSet;
use crate::error::{Error, Result};
use crate::spectral_graph::{
    build_similarity, minimum_spanning_tree, normalized_laplacian, spectral_embedding, Embedding,
    SpanningTree, SubtreeHandle, DEFAULT_ZERO_TOL,
};

/// Per-dimension centering and scaling fitted on training coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(pts: &PointSet) -> Self {
        let d = pts.dim();
        let n = pts.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for r in pts.rows() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for r in pts.rows() {
            for j in 0..d {
                var[j] += (r[j] - mean[j]).powi(2);
            }
        }
        let denom = (pts.len().max(2) - 1) as f64;
        let scale = var
            .into_iter()
            .map(|v| {
                let s = (v / denom).sqrt();
                if s > 0.0 && s.is_finite() {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn transform(&self, pts: &PointSet) -> Result<PointSet> {
        if pts.dim() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                found: pts.dim(),
            });
        }
        let d = pts.dim();
        let coords = pts
            .coords()
            .iter()
            .enumerate()
            .map(|(i, v)| (v - self.mean[i % d]) / self.scale[i % d])
            .collect();
        PointSet::new(d, coords)
    }
}

/// Equally spaced interior cutoffs `min + k (max - min) / (g + 1)`, `k = 1..=g`.
pub fn cutoff_grid(values: &[f64], g: usize) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Vec::new();
    }
    let step = (hi - lo) / (g + 1) as f64;
    (1..=g).map(|k| lo + k as f64 * step).collect()
}

/// Knots, their spectral spanning tree and the split grids.
#[derive(Debug, Clone)]
pub struct KnotSystem {
    standardizer: Standardizer,
    knot_struct: PointSet,
    knot_unstruct: PointSet,
    cutoffs: Vec<Vec<f64>>,
    embedding: Embedding,
    mst: SpanningTree,
}

/// Serializable description from which a [`KnotSystem`] is rebuilt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotParts {
    pub standardizer: Standardizer,
    /// Standardized structured coordinates of the knots.
    pub structured: PointSet,
    pub unstructured: PointSet,
    pub cutoffs: Vec<Vec<f64>>,
    pub embed_dim: usize,
}

impl KnotSystem {
    /// Builds the system from training features and the chosen knot rows.
    pub fn build(
        structured: &PointSet,
        unstructured: &PointSet,
        knot_rows: &[usize],
        embed_dim: Option<usize>,
        grid_size: usize,
    ) -> Result<Self> {
        let n = structured.len();
        if knot_rows.len() < 2 {
            return Err(Error::InvalidConfig("at least 2 knots are required".into()));
        }
        if let Some(&bad) = knot_rows.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidInput(format!("knot row {bad} out of range")));
        }
        let standardizer = Standardizer::fit(structured);
        let knot_struct = standardizer.transform(&structured.select(knot_rows))?;
        let knot_unstruct = unstructured.select(knot_rows);
        let cutoffs = (0..unstructured.dim())
            .map(|j| cutoff_grid(&unstructured.column(j), grid_size))
            .collect();
        let t = knot_rows.len();
        Self::from_parts(KnotParts {
            standardizer,
            structured: knot_struct,
            unstructured: knot_unstruct,
            cutoffs,
            embed_dim: embed_dim.unwrap_or(3.min(t - 1)),
        })
    }

    pub fn from_parts(parts: KnotParts) -> Result<Self> {
        let g = build_similarity(&parts.structured)?;
        let l = normalized_laplacian(&g)?;
        let embedding = spectral_embedding(&l, parts.embed_dim, DEFAULT_ZERO_TOL)?;
        let mst = minimum_spanning_tree(&embedding);
        Ok(Self {
            standardizer: parts.standardizer,
            knot_struct: parts.structured,
            knot_unstruct: parts.unstructured,
            cutoffs: parts.cutoffs,
            embedding,
            mst,
        })
    }

    pub fn parts(&self) -> KnotParts {
        KnotParts {
            standardizer: self.standardizer.clone(),
            structured: self.knot_struct.clone(),
            unstructured: self.knot_unstruct.clone(),
            cutoffs: self.cutoffs.clone(),
            embed_dim: self.embedding.k(),
        }
    }

    pub fn len(&self) -> usize {
        self.knot_struct.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn d_structured(&self) -> usize {
        self.knot_struct.dim()
    }

    pub fn n_unstructured(&self) -> usize {
        self.cutoffs.len()
    }

    pub fn cutoffs(&self, feature: usize) -> &[f64] {
        &self.cutoffs[feature]
    }

    /// Value of unstructured feature `j` at knot `k`.
    pub fn knot_value(&self, k: usize, j: usize) -> f64 {
        self.knot_unstruct.row(k)[j]
    }

    pub fn embedding(&self) -> &Embedding {
        &self.embedding
    }

    pub fn mst(&self) -> &SpanningTree {
        &self.mst
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    /// Spanning tree over a node's knots.
    pub fn subtree(&self, knots: &[usize]) -> SubtreeHandle {
        SubtreeHandle::minimum_over(&self.embedding, knots)
    }

    /// Range of grid indices whose cutoff leaves knots on both sides.
    pub fn valid_cutoff_range(&self, knots: &[usize], feature: usize) -> std::ops::Range<usize> {
        let (lo, hi) = knots
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &k| {
                let v = self.knot_value(k, feature);
                (lo.min(v), hi.max(v))
            });
        let grid = &self.cutoffs[feature];
        let start = grid.partition_point(|&c| c < lo);
        let end = grid.partition_point(|&c| c < hi);
        start..end.max(start)
    }

    /// Splits `knots` by `x_j <= cutoff`.
    pub fn partition_univariate(
        &self,
        knots: &[usize],
        feature: usize,
        cutoff: f64,
    ) -> (Vec<usize>, Vec<usize>) {
        knots
            .iter()
            .partition(|&&k| self.knot_value(k, feature) <= cutoff)
    }

    /// Prepares points for distance queries against the knots.
    pub fn prepare(
        &self,
        structured: &PointSet,
        unstructured: &PointSet,
    ) -> Result<PreparedPoints> {
        let n = structured.len();
        if unstructured.dim() != self.n_unstructured() {
            return Err(Error::DimensionMismatch {
                expected: self.n_unstructured(),
                found: unstructured.dim(),
            });
        }
        if unstructured.dim() > 0 && unstructured.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: unstructured.len(),
            });
        }
        let std = self.standardizer.transform(structured)?;
        let t = self.len();
        let mut struct_dist = Vec::with_capacity(n * t);
        for r in std.rows() {
            for k in 0..t {
                let kr = self.knot_struct.row(k);
                let d2: f64 = r.iter().zip(kr).map(|(a, b)| (a - b) * (a - b)).sum();
                struct_dist.push(d2.sqrt());
            }
        }
        Ok(PreparedPoints {
            n,
            t,
            struct_dist,
            unstructured: unstructured.clone(),
        })
    }

    /// Nearest-knot distances `(d_L, d_R)` of point `i` for a split whose
    /// sides hold `left` and `right`.
    pub fn knot_distances(
        &self,
        pts: &PreparedPoints,
        i: usize,
        feature: Option<usize>,
        left: &[usize],
        right: &[usize],
    ) -> Result<(f64, f64)> {
        if left.is_empty() || right.is_empty() {
            return Err(Error::EmptyKnotSide);
        }
        let side = |ks: &[usize]| -> f64 {
            match feature {
                Some(j) => {
                    let x = pts.unstructured.row(i)[j];
                    ks.iter()
                        .map(|&k| (x - self.knot_value(k, j)).abs())
                        .fold(f64::INFINITY, f64::min)
                }
                None => ks
                    .iter()
                    .map(|&k| pts.struct_dist[i * pts.t + k])
                    .fold(f64::INFINITY, f64::min),
            }
        };
        Ok((side(left), side(right)))
    }

    /// Raw distance differences `d_R - d_L` for every prepared point.
    pub fn distance_gaps(
        &self,
        pts: &PreparedPoints,
        feature: Option<usize>,
        left: &[usize],
        right: &[usize],
    ) -> Result<Vec<(f64, f64)>> {
        (0..pts.n)
            .map(|i| self.knot_distances(pts, i, feature, left, right))
            .collect()
    }
}

/// Points with cached Euclidean distances to every knot.
#[derive(Debug, Clone)]
pub struct PreparedPoints {
    n: usize,
    t: usize,
    struct_dist: Vec<f64>,
    unstructured: PointSet,
}

impl PreparedPoints {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn unstructured(&self) -> &PointSet {
        &self.unstructured
    }

    /// Standardized Euclidean distance from point `i` to knot `k`.
    pub fn knot_distance(&self, i: usize, k: usize) -> f64 {
        self.struct_dist[i * self.t + k]
    }
}
