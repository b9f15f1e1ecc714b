//! A static k-d tree over 3D points.
//!
//! Distances are always computed with [`geom::dist2`], so results agree
//! exactly with an exhaustive scan using the same function.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::geom::{dist2, Vec3};

const LEAF_SIZE: usize = 8;

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

pub struct KdTree {
    points: Vec<Vec3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(PartialEq)]
struct Candidate {
    d2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then(self.index.cmp(&other.index))
    }
}

impl KdTree {
    pub fn new(points: &[Vec3]) -> Self {
        let mut tree = KdTree {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build(0, points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            for a in 0..3 {
                lo[a] = lo[a].min(self.points[i][a]);
                hi[a] = hi[a].max(self.points[i][a]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap();
        if hi[axis] - lo[axis] <= 0.0 {
            // All points coincide.
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis])
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Split {
            axis,
            value,
            left: 0,
            right: 0,
        });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        if let Node::Split {
            left: l, right: r, ..
        } = &mut self.nodes[id]
        {
            *l = left;
            *r = right;
        }
        id
    }

    /// Nearest point as `(index, squared distance)`; ties go to the lower index.
    pub fn nearest(&self, query: Vec3) -> Option<(usize, f64)> {
        self.knn(query, 1).into_iter().next()
    }

    /// The `k` nearest points, sorted by `(distance, index)`.
    pub fn knn(&self, query: Vec3, k: usize) -> Vec<(usize, f64)> {
        if k == 0 || self.points.is_empty() {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(0, query, k, &mut heap);
        let mut out: Vec<_> = heap.into_iter().map(|c| (c.index, c.d2)).collect();
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        out
    }

    fn knn_rec(&self, node: usize, q: Vec3, k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let c = Candidate {
                        d2: dist2(q, self.points[i]),
                        index: i,
                    };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(c);
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
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.knn_rec(near, q, k, heap);
                // `<=` keeps equal-distance candidates with lower indices reachable.
                if heap.len() < k || diff * diff <= heap.peek().unwrap().d2 {
                    self.knn_rec(far, q, k, heap);
                }
            }
        }
    }

    /// Indices of all points with squared distance `<= radius2`, ascending.
    pub fn within(&self, query: Vec3, radius2: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if !self.points.is_empty() {
            self.within_rec(0, query, radius2, &mut out);
        }
        out.sort_unstable();
        out
    }

    /// Like [`within`](Self::within) but also returns squared distances, unsorted.
    pub fn within_with_distance(&self, query: Vec3, radius2: f64, out: &mut Vec<(usize, f64)>) {
        out.clear();
        if self.points.is_empty() {
            return;
        }
        let mut stack = vec![0usize];
        while let Some(node) = stack.pop() {
            match self.nodes[node] {
                Node::Leaf { start, end } => {
                    for &i in &self.order[start..end] {
                        let d2 = dist2(query, self.points[i]);
                        if d2 <= radius2 {
                            out.push((i, d2));
                        }
                    }
                }
                Node::Split {
                    axis,
                    value,
                    left,
                    right,
                } => {
                    let diff = query[axis] - value;
                    let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                    stack.push(near);
                    if diff * diff <= radius2 {
                        stack.push(far);
                    }
                }
            }
        }
    }

    fn within_rec(&self, node: usize, q: Vec3, r2: f64, out: &mut Vec<usize>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                out.extend(
                    self.order[start..end]
                        .iter()
                        .copied()
                        .filter(|&i| dist2(q, self.points[i]) <= r2),
                );
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.within_rec(near, q, r2, out);
                if diff * diff <= r2 {
                    self.within_rec(far, q, r2, out);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(n: usize, seed: u64) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()])
            .collect()
    }

    #[test]
    fn knn_matches_exhaustive_scan() {
        let pts = cloud(500, 1);
        let tree = KdTree::new(&pts);
        for q in cloud(50, 2) {
            let mut brute: Vec<(usize, f64)> =
                pts.iter().enumerate().map(|(i, p)| (i, dist2(q, *p))).collect();
            brute.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            brute.truncate(7);
            assert_eq!(tree.knn(q, 7), brute);
        }
    }

    #[test]
    fn within_matches_exhaustive_scan() {
        let pts = cloud(400, 3);
        let tree = KdTree::new(&pts);
        for q in cloud(30, 4) {
            let brute: Vec<usize> = (0..pts.len()).filter(|&i| dist2(q, pts[i]) <= 0.04).collect();
            assert_eq!(tree.within(q, 0.04), brute);
            let mut with_d = Vec::new();
            tree.within_with_distance(q, 0.04, &mut with_d);
            let mut idx: Vec<usize> = with_d.iter().map(|p| p.0).collect();
            idx.sort_unstable();
            assert_eq!(idx, brute);
        }
    }

    #[test]
    fn duplicate_points_and_ties() {
        let pts = vec![[0.0; 3]; 20];
        let tree = KdTree::new(&pts);
        assert_eq!(tree.nearest([1.0, 0.0, 0.0]), Some((0, 1.0)));
        assert_eq!(tree.knn([0.0; 3], 3).iter().map(|p| p.0).collect::<Vec<_>>(), vec![0, 1, 2]);
    }
}
