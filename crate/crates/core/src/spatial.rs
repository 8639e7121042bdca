//! A static 3D k-d tree for exact nearest-neighbour queries.
//!
//! Distances are computed with the same `norm_squared` as a linear scan, so
//! query results agree bit for bit with brute force.

use std::cmp::Ordering;

use crate::geometry::Vec3;

const LEAF_SIZE: usize = 8;

#[derive(Debug)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

#[derive(Debug)]
pub struct KdTree {
    points: Vec<Vec3>,
    /// Original index of each reordered point.
    index: Vec<usize>,
    nodes: Vec<Node>,
    /// Bounding box of each node's points.
    bounds: Vec<(Vec3, Vec3)>,
}

/// Squared distance from `q` to a box, accumulated in the same axis order
/// as `norm_squared` so it never exceeds the distance to a point inside.
fn box_distance(q: &Vec3, (lo, hi): &(Vec3, Vec3)) -> f64 {
    let gap = Vec3::new(
        (lo.x - q.x).max(q.x - hi.x).max(0.0),
        (lo.y - q.y).max(q.y - hi.y).max(0.0),
        (lo.z - q.z).max(q.z - hi.z).max(0.0),
    );
    gap.norm_squared()
}

impl KdTree {
    pub fn build(points: &[Vec3]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        let mut bounds = Vec::new();
        if !points.is_empty() {
            build_node(points, &mut order, 0, points.len(), &mut nodes, &mut bounds);
        }
        let reordered = order.iter().map(|&i| points[i]).collect();
        Self {
            points: reordered,
            index: order,
            nodes,
            bounds,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Nearest point as `(original index, squared distance)`. Ties resolve
    /// to the lowest original index.
    pub fn nearest(&self, query: &Vec3) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_rec(0, query, &mut best);
        Some(best)
    }

    /// Like [`nearest`](Self::nearest) but only among points within squared
    /// distance `max_sq`; far branches are pruned against the bound.
    pub fn nearest_within(&self, query: &Vec3, max_sq: f64) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, max_sq);
        self.nearest_rec(0, query, &mut best);
        (best.0 != usize::MAX).then_some(best)
    }

    fn nearest_rec(&self, node: usize, q: &Vec3, best: &mut (usize, f64)) {
        if box_distance(q, &self.bounds[node]) > best.1 {
            return;
        }
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for i in start..end {
                    let d = (self.points[i] - q).norm_squared();
                    let idx = self.index[i];
                    if d < best.1 || (d == best.1 && idx < best.0) {
                        *best = (idx, d);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.nearest_rec(near, q, best);
                if diff * diff <= best.1 {
                    self.nearest_rec(far, q, best);
                }
            }
        }
    }

    /// The `k` nearest points sorted by `(squared distance, original index)`.
    pub fn k_nearest(&self, query: &Vec3, k: usize) -> Vec<(usize, f64)> {
        let mut heap: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
        if k > 0 && !self.points.is_empty() {
            self.knn_rec(0, query, k, &mut heap);
        }
        heap
    }

    fn knn_rec(&self, node: usize, q: &Vec3, k: usize, found: &mut Vec<(usize, f64)>) {
        if found.len() == k && box_distance(q, &self.bounds[node]) > found[k - 1].1 {
            return;
        }
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for i in start..end {
                    let cand = (self.index[i], (self.points[i] - q).norm_squared());
                    if found.len() == k && cmp_entry(&cand, &found[k - 1]) != Ordering::Less {
                        continue;
                    }
                    let pos = found.partition_point(|e| cmp_entry(e, &cand) == Ordering::Less);
                    found.insert(pos, cand);
                    found.truncate(k);
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.knn_rec(near, q, k, found);
                if found.len() < k || diff * diff <= found[k - 1].1 {
                    self.knn_rec(far, q, k, found);
                }
            }
        }
    }
}

fn cmp_entry(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    a.1.total_cmp(&b.1).then(a.0.cmp(&b.0))
}

fn build_node(
    points: &[Vec3],
    order: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
    bounds: &mut Vec<(Vec3, Vec3)>,
) -> usize {
    let id = nodes.len();
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for &i in &order[start..end] {
        lo = lo.inf(&points[i]);
        hi = hi.sup(&points[i]);
    }
    bounds.push((lo, hi));
    let axis = (hi - lo).imax();
    if end - start <= LEAF_SIZE || hi[axis] - lo[axis] == 0.0 {
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let mid = (start + end) / 2;
    order[start..end].select_nth_unstable_by(mid - start, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
    let value = points[order[mid]][axis];
    // Points equal to the split value may sit on either side; the search
    // visits the far side whenever the plane distance does not exceed the
    // current bound, which covers that case.
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let left = build_node(points, order, start, mid, nodes, bounds);
    let right = build_node(points, order, mid, end, nodes, bounds);
    nodes[id] = Node::Split {
        axis,
        value,
        left,
        right,
    };
    id
}
