//! Exact K-nearest-neighbour search over a fixed set of rows.
//!
//! Distances are squared Euclidean, optionally with a per-dimension scale
//! (`sum_i (scale_i * (q_i - x_i))^2`). Results are ordered by `(distance, row)`,
//! so ties always resolve to the lower row index.

use std::cmp::Ordering;
use std::sync::OnceLock;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub row: usize,
    pub dist2: f64,
}

impl Neighbor {
    fn key_cmp(&self, other: &Neighbor) -> Ordering {
        self.dist2.total_cmp(&other.dist2).then(self.row.cmp(&other.row))
    }
}

/// Search strategy. All are exact and return identical results.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnnStrategy {
    /// Scan every row.
    Exhaustive,
    /// Visit rows in order of distance along the highest-variance axis and stop
    /// once that single-axis gap alone exceeds the current K-th distance.
    Projection,
    /// Median-split tree; a subtree is skipped when the gap to its splitting
    /// plane alone exceeds the current K-th distance.
    KdTree,
    /// Batched: approximate distances for a block of queries come from one matrix
    /// product (`|q|^2 + |x|^2 - 2 q.x`). Every row within a rounding margin of the
    /// K-th approximate distance is then rescored exactly, so the result equals a
    /// full scan. Single queries fall back to the tree.
    #[default]
    Gram,
}

/// Scaled copies of the rows and their squared norms, built on first batched query.
#[derive(Clone, Debug)]
struct Gram {
    rows_t: Array2<f64>,
    norms: Vec<f64>,
    max_norm: f64,
}

const GRAM_BLOCK: usize = 256;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Projection {
    axis: usize,
    /// Row indices sorted by `(key, row)`.
    order: Vec<usize>,
    keys: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
enum KdNode {
    Leaf { start: usize, end: usize },
    /// Rows in `left` have `x[axis] <= value`, rows in `right` have `x[axis] >= value`.
    Split { axis: usize, value: f64, left: usize, right: usize },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct KdTree {
    nodes: Vec<KdNode>,
    /// Row indices, grouped by leaf.
    perm: Vec<usize>,
}

const KD_LEAF: usize = 16;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KnnIndex {
    dim: usize,
    rows: Vec<f64>,
    scale: Option<Vec<f64>>,
    projection: Projection,
    tree: KdTree,
    strategy: KnnStrategy,
    #[serde(skip)]
    gram: OnceLock<Gram>,
}

/// Sorted top-K accumulator.
struct TopK {
    k: usize,
    items: Vec<Neighbor>,
}

impl TopK {
    fn new(k: usize) -> Self {
        TopK { k, items: Vec::with_capacity(k + 1) }
    }

    fn worst(&self) -> f64 {
        if self.items.len() < self.k {
            f64::INFINITY
        } else {
            self.items[self.k - 1].dist2
        }
    }

    fn full(&self) -> bool {
        self.items.len() == self.k
    }

    fn offer(&mut self, cand: Neighbor) {
        if self.full() && cand.key_cmp(&self.items[self.k - 1]) != Ordering::Less {
            return;
        }
        let pos = self.items.partition_point(|n| n.key_cmp(&cand) == Ordering::Less);
        self.items.insert(pos, cand);
        self.items.truncate(self.k);
    }
}

impl KnnIndex {
    pub fn new(dim: usize, rows: Vec<f64>, scale: Option<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("index dimension must be positive".into()));
        }
        if !rows.len().is_multiple_of(dim) {
            return Err(shape_err!("{} values do not form rows of width {dim}", rows.len()));
        }
        if let Some(s) = &scale {
            if s.len() != dim {
                return Err(shape_err!("scale has {} entries for width {dim}", s.len()));
            }
            if s.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidArgument("scale entries must be finite and non-negative".into()));
            }
        }
        let projection = Projection::build(dim, &rows, scale.as_deref());
        let tree = KdTree::build(dim, &rows, scale.as_deref());
        Ok(KnnIndex { dim, rows, scale, projection, tree, strategy: KnnStrategy::default(), gram: OnceLock::new() })
    }

    pub fn with_strategy(mut self, strategy: KnnStrategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn strategy(&self) -> KnnStrategy {
        self.strategy
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn scale(&self) -> Option<&[f64]> {
        self.scale.as_deref()
    }

    /// Squared (scaled) distance between `query` and row `i`.
    pub fn dist2(&self, query: &[f64], i: usize) -> f64 {
        let row = self.row(i);
        match &self.scale {
            None => query.iter().zip(row).map(|(q, x)| (q - x) * (q - x)).sum(),
            Some(s) => query
                .iter()
                .zip(row)
                .zip(s)
                .map(|((q, x), s)| {
                    let d = s * (q - x);
                    d * d
                })
                .sum(),
        }
    }

    /// Like [`KnnIndex::dist2`] but gives up (returning `None`) as soon as the running
    /// sum exceeds `bound`. Terms are added in the same order, so a `Some` result is
    /// bit-identical to the full distance.
    fn dist2_bounded(&self, query: &[f64], i: usize, bound: f64) -> Option<f64> {
        let row = self.row(i);
        let mut acc = 0.0;
        match &self.scale {
            None => {
                for (q, x) in query.iter().zip(row) {
                    acc += (q - x) * (q - x);
                    if acc > bound {
                        return None;
                    }
                }
            }
            Some(s) => {
                for ((q, x), s) in query.iter().zip(row).zip(s) {
                    let d = s * (q - x);
                    acc += d * d;
                    if acc > bound {
                        return None;
                    }
                }
            }
        }
        Some(acc)
    }

    fn axis_gap2(&self, query: &[f64], key: f64) -> f64 {
        self.gap2_on(query, self.projection.axis, key)
    }

    fn gap2_on(&self, query: &[f64], a: usize, key: f64) -> f64 {
        let d = match &self.scale {
            None => query[a] - key,
            Some(s) => s[a] * (query[a] - key),
        };
        d * d
    }

    fn check(&self, query: &[f64], k: usize) -> Result<()> {
        if query.len() != self.dim {
            return Err(shape_err!("query width {} does not match index width {}", query.len(), self.dim));
        }
        if k == 0 {
            return Err(Error::Precondition("K must be at least 1".into()));
        }
        if k > self.len() {
            return Err(Error::Precondition(format!("K = {k} exceeds the {} stored records", self.len())));
        }
        Ok(())
    }

    /// The `k` rows closest to `query`, ascending by `(distance, row)`.
    pub fn query(&self, query: &[f64], k: usize) -> Result<Vec<Neighbor>> {
        self.check(query, k)?;
        Ok(match self.strategy {
            KnnStrategy::Exhaustive => self.scan(query, k),
            KnnStrategy::Projection => self.projected(query, k),
            KnnStrategy::KdTree | KnnStrategy::Gram => {
                let mut top = TopK::new(k);
                self.descend(0, query, &mut top);
                top.items
            }
        })
    }

    fn descend(&self, node: usize, query: &[f64], top: &mut TopK) {
        match self.tree.nodes[node] {
            KdNode::Leaf { start, end } => {
                for &row in &self.tree.perm[start..end] {
                    if let Some(dist2) = self.dist2_bounded(query, row, top.worst()) {
                        top.offer(Neighbor { row, dist2 });
                    }
                }
            }
            KdNode::Split { axis, value, left, right } => {
                let (near, far) = if query[axis] <= value { (left, right) } else { (right, left) };
                self.descend(near, query, top);
                if self.gap2_on(query, axis, value) <= top.worst() {
                    self.descend(far, query, top);
                }
            }
        }
    }

    fn scan(&self, query: &[f64], k: usize) -> Vec<Neighbor> {
        let mut top = TopK::new(k);
        for row in 0..self.len() {
            let dist2 = self.dist2(query, row);
            if dist2 < top.worst() || !top.full() {
                top.offer(Neighbor { row, dist2 });
            }
        }
        top.items
    }

    fn projected(&self, query: &[f64], k: usize) -> Vec<Neighbor> {
        let Projection { axis, order, keys } = &self.projection;
        let q = query[*axis];
        let split = keys.partition_point(|&key| key < q);
        let mut top = TopK::new(k);
        let (mut lo, mut hi) = (split, split);
        loop {
            let worst = top.worst();
            let down = (lo > 0).then(|| self.axis_gap2(query, keys[lo - 1])).filter(|g| *g <= worst);
            let up = (hi < keys.len()).then(|| self.axis_gap2(query, keys[hi])).filter(|g| *g <= worst);
            let take_down = match (down, up) {
                (None, None) => break,
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (Some(d), Some(u)) => d <= u,
            };
            let row = if take_down {
                lo -= 1;
                order[lo]
            } else {
                hi += 1;
                order[hi - 1]
            };
            if let Some(dist2) = self.dist2_bounded(query, row, top.worst()) {
                top.offer(Neighbor { row, dist2 });
            }
        }
        top.items
    }

    /// One query per row of `queries`; parallel over queries when the `parallel` feature is on.
    pub fn query_batch(&self, queries: ArrayView2<f64>, k: usize) -> Result<Vec<Vec<Neighbor>>> {
        if queries.ncols() != self.dim {
            return Err(shape_err!("query width {} does not match index width {}", queries.ncols(), self.dim));
        }
        if self.strategy == KnnStrategy::Gram {
            if let Some(q) = queries.rows().into_iter().next() {
                self.check(&q.to_vec(), k)?;
            }
            let blocks: Vec<_> = queries.axis_chunks_iter(Axis(0), GRAM_BLOCK).collect();
            let out = par::try_map(&blocks, |b| self.gram_block(*b, k))?;
            return Ok(out.into_iter().flatten().collect());
        }
        let rows: Vec<_> = queries.rows().into_iter().collect();
        par::try_map(&rows, |q| match q.as_slice() {
            Some(s) => self.query(s, k),
            None => self.query(&q.to_vec(), k),
        })
    }

    fn gram(&self) -> &Gram {
        self.gram.get_or_init(|| {
            let n = self.len();
            let mut rows_t = Array2::zeros((self.dim, n));
            for i in 0..n {
                for (a, x) in self.row(i).iter().enumerate() {
                    rows_t[[a, i]] = self.scale.as_ref().map_or(1.0, |s| s[a]) * x;
                }
            }
            let norms: Vec<f64> = rows_t.columns().into_iter().map(|c| c.dot(&c)).collect();
            let max_norm = norms.iter().fold(0.0, |m: f64, &v| m.max(v));
            Gram { rows_t, norms, max_norm }
        })
    }

    fn gram_block(&self, queries: ArrayView2<f64>, k: usize) -> Result<Vec<Vec<Neighbor>>> {
        let g = self.gram();
        let mut scaled = queries.to_owned();
        if let Some(s) = &self.scale {
            for mut r in scaled.rows_mut() {
                r.iter_mut().zip(s).for_each(|(v, s)| *v *= s);
            }
        }
        let cross = scaled.dot(&g.rows_t);
        let mut approx = vec![0.0; self.len()];
        let mut smallest: Vec<f64> = Vec::with_capacity(k + 1);
        let mut out = Vec::with_capacity(queries.nrows());
        for (i, q) in queries.rows().into_iter().enumerate() {
            let q = q.to_vec();
            self.check(&q, k)?;
            let qn = scaled.row(i).dot(&scaled.row(i));
            smallest.clear();
            for ((a, &c), &xn) in approx.iter_mut().zip(cross.row(i)).zip(&g.norms) {
                *a = qn + xn - 2.0 * c;
                if smallest.len() < k || *a < smallest[k - 1] {
                    let pos = smallest.partition_point(|v| v < a);
                    smallest.insert(pos, *a);
                    smallest.truncate(k);
                }
            }
            let kth = &smallest[k - 1];
            // Generous bound on the rounding error of both the expansion and the
            // direct formula; any row that could be in the true top K passes.
            let margin = 1e-12 * (self.dim + 4) as f64 * (1.0 + qn + g.max_norm);
            let threshold = *kth + 2.0 * margin;
            if !threshold.is_finite() {
                out.push(self.scan(&q, k));
                continue;
            }
            let mut top = TopK::new(k);
            for (row, &a) in approx.iter().enumerate() {
                if a <= threshold {
                    if let Some(dist2) = self.dist2_bounded(&q, row, top.worst()) {
                        top.offer(Neighbor { row, dist2 });
                    }
                }
            }
            out.push(top.items);
        }
        Ok(out)
    }

    /// Sequential reference for [`KnnIndex::query_batch`].
    pub fn query_batch_sequential(&self, queries: ArrayView2<f64>, k: usize) -> Result<Vec<Vec<Neighbor>>> {
        if self.strategy == KnnStrategy::Gram {
            let mut out = Vec::with_capacity(queries.nrows());
            for b in queries.axis_chunks_iter(Axis(0), GRAM_BLOCK) {
                out.extend(self.gram_block(b, k)?);
            }
            return Ok(out);
        }
        queries.rows().into_iter().map(|q| self.query(&q.to_vec(), k)).collect()
    }
}

impl KdTree {
    fn build(dim: usize, rows: &[f64], scale: Option<&[f64]>) -> KdTree {
        let n = rows.len() / dim;
        let mut tree = KdTree { nodes: Vec::new(), perm: (0..n).collect() };
        tree.split(dim, rows, scale, 0, n);
        tree
    }

    fn split(&mut self, dim: usize, rows: &[f64], scale: Option<&[f64]>, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= KD_LEAF {
            self.nodes.push(KdNode::Leaf { start, end });
            return id;
        }
        let coord = |r: usize, a: usize| rows[r * dim + a];
        let idx = &mut self.perm[start..end];
        let axis = (0..dim)
            .map(|a| {
                let (lo, hi) = idx
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| (lo.min(coord(r, a)), hi.max(coord(r, a))));
                (a, (hi - lo) * scale.map_or(1.0, |s| s[a]))
            })
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
            .0;
        let mid = idx.len() / 2;
        idx.select_nth_unstable_by(mid, |&i, &j| coord(i, axis).total_cmp(&coord(j, axis)).then(i.cmp(&j)));
        let value = coord(idx[mid], axis);
        self.nodes.push(KdNode::Leaf { start, end });
        let left = self.split(dim, rows, scale, start, start + mid);
        let right = self.split(dim, rows, scale, start + mid, end);
        self.nodes[id] = KdNode::Split { axis, value, left, right };
        id
    }
}

impl Projection {
    fn build(dim: usize, rows: &[f64], scale: Option<&[f64]>) -> Projection {
        let n = rows.len() / dim;
        let axis = if n == 0 {
            0
        } else {
            (0..dim)
                .map(|a| {
                    let s = scale.map_or(1.0, |s| s[a]);
                    let mean = (0..n).map(|i| rows[i * dim + a]).sum::<f64>() / n as f64;
                    let var = (0..n).map(|i| (rows[i * dim + a] - mean).powi(2)).sum::<f64>() * s * s;
                    (a, var)
                })
                .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
                .0
        };
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| rows[i * dim + axis].total_cmp(&rows[j * dim + axis]).then(i.cmp(&j)));
        let keys = order.iter().map(|&i| rows[i * dim + axis]).collect();
        Projection { axis, order, keys }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ALL: [KnnStrategy; 4] = [KnnStrategy::Exhaustive, KnnStrategy::Projection, KnnStrategy::KdTree, KnnStrategy::Gram];

    /// Single query through both the one-off and the batched paths, which must agree.
    fn both(index: &KnnIndex, q: &[f64], k: usize) -> Result<Vec<Neighbor>> {
        let single = index.query(q, k)?;
        let m = ndarray::Array2::from_shape_vec((1, q.len()), q.to_vec()).unwrap();
        let batch = index.query_batch(m.view(), k)?;
        assert_eq!(batch, vec![single.clone()]);
        assert_eq!(index.query_batch_sequential(m.view(), k)?, batch);
        Ok(single)
    }

    fn brute(index: &KnnIndex, q: &[f64], k: usize) -> Vec<Neighbor> {
        let mut all: Vec<_> = (0..index.len()).map(|row| Neighbor { row, dist2: index.dist2(q, row) }).collect();
        all.sort_by(|a, b| a.key_cmp(b));
        all.truncate(k);
        all
    }

    #[test]
    fn exact_match_is_first() {
        let idx = KnnIndex::new(2, vec![0.0, 0.0, 1.0, 1.0, 2.0, 2.0], None).unwrap();
        let r = idx.query(&[1.0, 1.0], 1).unwrap();
        assert_eq!(r, vec![Neighbor { row: 1, dist2: 0.0 }]);
    }

    #[test]
    fn hand_checked_one_dimensional() {
        for strategy in ALL {
            let idx = KnnIndex::new(1, vec![0.0, 1.0, 10.0], None).unwrap().with_strategy(strategy);
            let r = both(&idx, &[0.4], 2).unwrap();
            assert_eq!(r.iter().map(|n| n.row).collect::<Vec<_>>(), vec![0, 1]);
        }
    }

    #[test]
    fn ties_prefer_lower_row() {
        let idx = KnnIndex::new(1, vec![2.0, 0.0, 2.0, 0.0], None).unwrap();
        for strategy in ALL {
            let idx = idx.clone().with_strategy(strategy);
            let r = both(&idx, &[1.0], 3).unwrap();
            assert_eq!(r.iter().map(|n| n.row).collect::<Vec<_>>(), vec![0, 1, 2]);
        }
    }

    #[test]
    fn k_too_large_is_rejected() {
        let idx = KnnIndex::new(1, vec![0.0, 1.0], None).unwrap();
        for strategy in ALL {
            let idx = idx.clone().with_strategy(strategy);
            let one = ndarray::arr2(&[[0.0]]);
            assert!(matches!(idx.query(&[0.0], 3), Err(Error::Precondition(_))));
            assert!(matches!(idx.query(&[0.0], 0), Err(Error::Precondition(_))));
            assert!(matches!(idx.query(&[0.0, 1.0], 1), Err(Error::Shape(_))));
            assert!(matches!(idx.query_batch(one.view(), 3), Err(Error::Precondition(_))));
            assert!(matches!(idx.query_batch(ndarray::arr2(&[[0.0, 1.0]]).view(), 1), Err(Error::Shape(_))));
        }
    }

    #[test]
    fn scale_changes_metric() {
        // With the second axis ignored, the point sharing the first coordinate wins.
        let idx = KnnIndex::new(2, vec![0.0, 5.0, 1.0, 0.0], Some(vec![1.0, 0.0])).unwrap();
        for strategy in ALL {
            assert_eq!(both(&idx.clone().with_strategy(strategy), &[0.0, 0.0], 1).unwrap()[0].row, 0);
        }
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            seed_rows in proptest::collection::vec(-3i32..3, 2..200),
            qs in proptest::collection::vec(-3.0f64..3.0, 2..20),
            grid in any::<bool>(),
            k in 1usize..8,
            scaled in any::<bool>(),
        ) {
            // coarse integer grid produces many exact ties
            let mut rows: Vec<f64> = seed_rows.iter().enumerate()
                .map(|(i, &v)| f64::from(v) * 0.5 + if grid { 0.0 } else { (i as f64 * 0.618).fract() })
                .collect();
            if rows.len() % 2 == 1 { rows.pop(); }
            let n = rows.len() / 2;
            prop_assume!(n >= 1);
            let k = k.min(n);
            let scale = scaled.then(|| vec![0.5, 2.0]);
            let m = qs.len() / 2;
            let queries = ndarray::Array2::from_shape_vec((m, 2), qs[..2 * m].to_vec()).unwrap();
            for strategy in ALL {
                let idx = KnnIndex::new(2, rows.clone(), scale.clone()).unwrap().with_strategy(strategy);
                let batch = idx.query_batch(queries.view(), k).unwrap();
                for (q, got) in queries.rows().into_iter().zip(&batch) {
                    let q = q.to_vec();
                    prop_assert_eq!(got, &brute(&idx, &q, k));
                    prop_assert_eq!(got, &idx.query(&q, k).unwrap());
                    prop_assert!(got.windows(2).all(|w| w[0].dist2 <= w[1].dist2));
                }
            }
        }
    }
}
