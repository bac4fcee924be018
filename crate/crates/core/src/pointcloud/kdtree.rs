//! A static 3-d tree over a borrowed point set.
//!
//! Queries return exact results. Nearest-neighbor results are ordered by
//! `(distance, index)` so equidistant points resolve to the lower index.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::Vector3;

const LEAF_SIZE: usize = 8;

#[derive(Debug)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug)]
pub struct KdTree<'a> {
    points: &'a [Vector3<f64>],
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [Vector3<f64>]) -> Self {
        let mut tree = KdTree {
            points,
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build(0, points.len());
        }
        tree
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }

        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for &i in &self.order[start..end] {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let axis = (hi - lo).imax();

        let mid = start + (end - start) / 2;
        let points = self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis])
        });
        let value = points[self.order[mid]][axis];

        // placeholder, patched once children exist
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    /// The `k` nearest points to `query`, skipping `exclude`, as
    /// `(index, distance)` pairs in ascending `(distance, index)` order.
    pub fn nearest(
        &self,
        query: &Vector3<f64>,
        k: usize,
        exclude: Option<usize>,
    ) -> Vec<(usize, f64)> {
        if k == 0 || self.nodes.is_empty() {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.nearest_rec(0, query, k, exclude, &mut heap);
        heap.into_sorted_vec()
            .into_iter()
            .map(|c| (c.index, c.dist2.sqrt()))
            .collect()
    }

    fn nearest_rec(
        &self,
        node: usize,
        query: &Vector3<f64>,
        k: usize,
        exclude: Option<usize>,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if Some(i) == exclude {
                        continue;
                    }
                    let cand = Candidate {
                        dist2: (self.points[i] - query).norm_squared(),
                        index: i,
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let delta = query[axis] - value;
                let (near, far) = if delta < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.nearest_rec(near, query, k, exclude, heap);
                // `<=` keeps equidistant candidates reachable for the index tie-break
                if heap.len() < k || delta * delta <= heap.peek().unwrap().dist2 {
                    self.nearest_rec(far, query, k, exclude, heap);
                }
            }
        }
    }

    /// Indices of all points within Euclidean distance `radius` of `query`
    /// (inclusive), in ascending index order.
    pub fn within_radius(&self, query: &Vector3<f64>, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if !self.nodes.is_empty() {
            self.radius_rec(0, query, radius, radius * radius, &mut out);
        }
        out.sort_unstable();
        out
    }

    fn radius_rec(
        &self,
        node: usize,
        query: &Vector3<f64>,
        radius: f64,
        radius2: f64,
        out: &mut Vec<usize>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => out.extend(
                self.order[start..end]
                    .iter()
                    .copied()
                    .filter(|&i| (self.points[i] - query).norm_squared() <= radius2),
            ),
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let delta = query[axis] - value;
                if delta <= radius {
                    self.radius_rec(left, query, radius, radius2, out);
                }
                if delta >= -radius {
                    self.radius_rec(right, query, radius, radius2, out);
                }
            }
        }
    }
}
