//! Exact nearest-neighbor and fixed-radius queries.
//!
//! The index is a static kd-tree with axis-aligned bounding boxes on every
//! node. All comparisons are made on the Euclidean distance itself (the square
//! root of the coordinate-ordered sum of squares), with ties broken by row id,
//! so results agree element-for-element with an exhaustive scan that uses the
//! same distance routine.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major set of `n` points in `dim` ambient coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    coords: Vec<f64>,
    dim: usize,
}

impl PointSet {
    /// Builds a point set from owned rows, validating shape and finiteness.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or(Error::EmptyPointSet)?;
        if dim == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != dim {
                return Err(Error::RaggedRows {
                    expected: dim,
                    row: i,
                    found: row.len(),
                });
            }
            coords.extend(row);
        }
        Self::from_flat(coords, dim)
    }

    /// Builds a point set from a row-major coordinate buffer.
    pub fn from_flat(coords: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        if coords.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::RaggedRows {
                expected: dim,
                row: coords.len() / dim,
                found: coords.len() % dim,
            });
        }
        if let Some(pos) = coords.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: pos / dim });
        }
        Ok(Self { coords, dim })
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.coords
    }

    /// Keeps only the listed coordinates, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Result<Self> {
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.dim) {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: bad + 1,
            });
        }
        let coords = self
            .rows()
            .flat_map(|r| columns.iter().map(move |&c| r[c]))
            .collect();
        Self::from_flat(coords, columns.len())
    }
}

/// Euclidean distance with a fixed (coordinate-order) summation.
#[inline]
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// One neighbor returned by [`NeighborIndex::knn`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: usize,
    pub distance: f64,
}

impl Neighbor {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.id.cmp(&other.id))
    }
}

// Max-heap ordering on (distance, id): the root is the current worst candidate.
struct HeapEntry(Neighbor);

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.0.key_cmp(&other.0) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.key_cmp(&other.0)
    }
}

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
enum NodeKind {
    Leaf { start: usize, end: usize },
    Split { left: usize, right: usize },
}

#[derive(Debug, Clone)]
struct Node {
    kind: NodeKind,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

/// Static kd-tree over a [`PointSet`]. Immutable after construction.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    points: PointSet,
    perm: Vec<usize>,
    nodes: Vec<Node>,
}

impl NeighborIndex {
    pub fn build(points: PointSet) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        let mut perm: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        build_node(&points, &mut perm, 0, points.len(), &mut nodes);
        Ok(Self {
            points,
            perm,
            nodes,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    fn check_query(&self, query: &[f64]) -> Result<()> {
        if query.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: query.len(),
            });
        }
        Ok(())
    }

    /// The `k` nearest rows to `query`, ascending by (distance, row id).
    ///
    /// `exclude` removes one row id from consideration (self-matches).
    pub fn knn(&self, query: &[f64], k: usize, exclude: Option<usize>) -> Result<Vec<Neighbor>> {
        self.check_query(query)?;
        let available = match exclude {
            Some(id) if id < self.len() => self.len() - 1,
            _ => self.len(),
        };
        if k > available {
            return Err(Error::KTooLarge { k, available });
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(0, query, k, exclude, &mut heap);
        let mut out: Vec<Neighbor> = heap.into_iter().map(|e| e.0).collect();
        out.sort_by(Neighbor::key_cmp);
        Ok(out)
    }

    fn knn_rec(
        &self,
        node: usize,
        query: &[f64],
        k: usize,
        exclude: Option<usize>,
        heap: &mut BinaryHeap<HeapEntry>,
    ) {
        match self.nodes[node].kind {
            NodeKind::Leaf { start, end } => {
                for &id in &self.perm[start..end] {
                    if Some(id) == exclude {
                        continue;
                    }
                    let cand = Neighbor {
                        id,
                        distance: euclidean(query, self.points.row(id)),
                    };
                    if heap.len() < k {
                        heap.push(HeapEntry(cand));
                    } else if let Some(worst) = heap.peek() {
                        if cand.key_cmp(&worst.0) == Ordering::Less {
                            heap.pop();
                            heap.push(HeapEntry(cand));
                        }
                    }
                }
            }
            NodeKind::Split { left, right } => {
                let dl = self.box_distance(left, query);
                let dr = self.box_distance(right, query);
                let order = if dl <= dr {
                    [(left, dl), (right, dr)]
                } else {
                    [(right, dr), (left, dl)]
                };
                for (child, bound) in order {
                    // Strict comparison: an equidistant point with a smaller id may
                    // still live in the child.
                    let prune =
                        heap.len() == k && heap.peek().is_some_and(|w| bound > w.0.distance);
                    if !prune {
                        self.knn_rec(child, query, k, exclude, heap);
                    }
                }
            }
        }
    }

    /// All row ids whose distance to `query` is at most `r` (closed ball),
    /// in ascending id order.
    pub fn radius_query(&self, query: &[f64], r: f64) -> Result<Vec<usize>> {
        self.check_query(query)?;
        if !(r > 0.0) {
            return Err(Error::NonPositiveRadius(r));
        }
        let mut out = Vec::new();
        self.radius_rec(0, query, r, &mut out);
        out.sort_unstable();
        Ok(out)
    }

    fn radius_rec(&self, node: usize, query: &[f64], r: f64, out: &mut Vec<usize>) {
        if self.box_distance(node, query) > r {
            return;
        }
        match self.nodes[node].kind {
            NodeKind::Leaf { start, end } => {
                out.extend(
                    self.perm[start..end]
                        .iter()
                        .copied()
                        .filter(|&id| euclidean(query, self.points.row(id)) <= r),
                );
            }
            NodeKind::Split { left, right } => {
                self.radius_rec(left, query, r, out);
                self.radius_rec(right, query, r, out);
            }
        }
    }

    // Lower bound on the distance from `query` to any point in the node's box.
    // Every per-coordinate gap is no larger than the gap to a contained point,
    // so the bound never exceeds a true distance, even after rounding.
    fn box_distance(&self, node: usize, query: &[f64]) -> f64 {
        let n = &self.nodes[node];
        query
            .iter()
            .zip(n.lo.iter().zip(&n.hi))
            .map(|(&q, (&lo, &hi))| {
                let d = if q < lo {
                    lo - q
                } else if q > hi {
                    q - hi
                } else {
                    0.0
                };
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }
}

fn build_node(
    points: &PointSet,
    perm: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let dim = points.dim();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for &id in &perm[start..end] {
        for (a, &v) in points.row(id).iter().enumerate() {
            lo[a] = lo[a].min(v);
            hi[a] = hi[a].max(v);
        }
    }
    let slot = nodes.len();
    nodes.push(Node {
        kind: NodeKind::Leaf { start, end },
        lo,
        hi,
    });
    if end - start <= LEAF_SIZE {
        return slot;
    }
    let (axis, spread) = (0..dim)
        .map(|a| (a, nodes[slot].hi[a] - nodes[slot].lo[a]))
        .fold((0, f64::NEG_INFINITY), |best, cur| {
            if cur.1 > best.1 {
                cur
            } else {
                best
            }
        });
    if spread <= 0.0 {
        // all points coincide
        return slot;
    }
    let mid = start + (end - start) / 2;
    perm[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
        points.row(a)[axis]
            .total_cmp(&points.row(b)[axis])
            .then(a.cmp(&b))
    });
    let left = build_node(points, perm, start, mid, nodes);
    let right = build_node(points, perm, mid, end, nodes);
    nodes[slot].kind = NodeKind::Split { left, right };
    slot
}

/// Exhaustive-scan reference used by tests and small inputs.
pub fn brute_force_knn(
    points: &PointSet,
    query: &[f64],
    k: usize,
    exclude: Option<usize>,
) -> Vec<Neighbor> {
    let mut all: Vec<Neighbor> = points
        .rows()
        .enumerate()
        .filter(|(id, _)| Some(*id) != exclude)
        .map(|(id, row)| Neighbor {
            id,
            distance: euclidean(query, row),
        })
        .collect();
    all.sort_by(Neighbor::key_cmp);
    all.truncate(k);
    all
}
