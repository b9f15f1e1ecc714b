//! Unoriented normals from local PCA, then a global orientation pass.
//!
//! Orientation propagates along a Euclidean minimum spanning forest of the
//! k-NN graph restricted to edges lying near both tangent planes, so sheets
//! that face each other across a thin wall (the two sides of a shell) are not
//! forced to agree. Each resulting component is flipped so most of its normals
//! point away from the cloud centroid, and components enclosed by an odd
//! number of other closed components are flipped once more.

use nalgebra::{Matrix3, SymmetricEigen};

use super::PointCloud;
use crate::error::{Error, Result};
use crate::geom::{centroid, dot, normalize, scale, sub, Vec3};
use crate::spatial::KdTree;

/// Maximum |cos| between an edge and either endpoint normal for orientation to
/// propagate along it.
const TANGENT_LIMIT: f64 = 0.5;
/// Components at least this fraction closed (vector area over scalar area)
/// are treated as enclosing surfaces.
const CLOSED_RATIO: f64 = 0.3;
const WINDING_PROBES: usize = 16;

fn pca_normal(points: &[Vec3], neighbours: &[(usize, f64)]) -> Vec3 {
    let nbh: Vec<Vec3> = neighbours.iter().map(|&(j, _)| points[j]).collect();
    let c = centroid(&nbh);
    let mut cov = Matrix3::<f64>::zeros();
    for p in &nbh {
        let d = sub(*p, c);
        for r in 0..3 {
            for s in 0..3 {
                cov[(r, s)] += d[r] * d[s];
            }
        }
    }
    let eig = SymmetricEigen::new(cov);
    let (imin, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    let v = eig.eigenvectors.column(imin);
    normalize([v[0], v[1], v[2]]).unwrap_or([0.0, 0.0, 1.0])
}

struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a] < self.size[b] || (self.size[a] == self.size[b] && a > b) {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
        true
    }
}

/// Generalized winding number of an oriented point set at `query`:
/// `Σ aᵢ (pᵢ − q)·nᵢ / (4π |pᵢ − q|³)`. Close to 1 inside a closed,
/// outward-oriented surface and close to 0 outside.
pub fn winding_number(points: &[Vec3], normals: &[Vec3], areas: &[f64], query: Vec3) -> f64 {
    let mut w = 0.0;
    for ((p, n), a) in points.iter().zip(normals).zip(areas) {
        let d = sub(*p, query);
        let r2 = dot(d, d);
        if r2 > 0.0 {
            w += a * dot(d, *n) / (r2 * r2.sqrt());
        }
    }
    w / (4.0 * std::f64::consts::PI)
}

/// Per-point unit normals estimated from the `k` nearest neighbours (the point
/// itself included), consistently oriented.
pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Result<PointCloud> {
    let n = cloud.len();
    if k < 3 {
        return Err(Error::invalid(format!("k = {k} is below the minimum of 3")));
    }
    if n < k {
        return Err(Error::invalid(format!(
            "{n} points are too few for k = {k} neighbours"
        )));
    }
    let points = &cloud.points;
    let tree = KdTree::new(points);
    let knn: Vec<Vec<(usize, f64)>> = points.iter().map(|&p| tree.knn(p, k)).collect();
    let mut normals: Vec<Vec3> = knn.iter().map(|nb| pca_normal(points, nb)).collect();
    // Disc area represented by each sample.
    let areas: Vec<f64> = knn
        .iter()
        .map(|nb| std::f64::consts::PI * nb.last().unwrap().1 / k as f64)
        .collect();

    let mut edges: Vec<(f64, usize, usize, bool)> = Vec::new();
    for (i, nb) in knn.iter().enumerate() {
        for &(j, d2) in nb {
            if j == i {
                continue;
            }
            let (a, b) = (i.min(j), i.max(j));
            let tangential = match normalize(sub(points[b], points[a])) {
                Some(dir) => {
                    dot(dir, normals[a]).abs() < TANGENT_LIMIT
                        && dot(dir, normals[b]).abs() < TANGENT_LIMIT
                }
                None => true,
            };
            edges.push((d2.sqrt(), a, b, tangential));
        }
    }
    edges.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    edges.dedup_by(|x, y| x.1 == y.1 && x.2 == y.2);

    // Spanning forest over tangential edges, then attach fragments smaller
    // than a neighbourhood through whatever edges remain.
    let mut sets = DisjointSet::new(n);
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(_, a, b, tangential) in &edges {
        if tangential && sets.union(a, b) {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
    }
    for &(_, a, b, _) in &edges {
        let (ra, rb) = (sets.find(a), sets.find(b));
        if ra != rb && (sets.size[ra] < k || sets.size[rb] < k) && sets.union(a, b) {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
    }

    // Propagate signs from the lowest index of each tree.
    let mut component = vec![usize::MAX; n];
    let mut members: Vec<Vec<usize>> = Vec::new();
    for root in 0..n {
        if component[root] != usize::MAX {
            continue;
        }
        let id = members.len();
        let mut list = vec![root];
        component[root] = id;
        let mut head = 0;
        while head < list.len() {
            let u = list[head];
            head += 1;
            for &v in &adjacency[u] {
                if component[v] == usize::MAX {
                    component[v] = id;
                    if dot(normals[u], normals[v]) < 0.0 {
                        normals[v] = scale(normals[v], -1.0);
                    }
                    list.push(v);
                }
            }
        }
        members.push(list);
    }

    let flip = |normals: &mut Vec<Vec3>, list: &[usize]| {
        for &i in list {
            normals[i] = scale(normals[i], -1.0);
        }
    };

    let c = centroid(points);
    for list in &members {
        let outward = list
            .iter()
            .filter(|&&i| dot(normals[i], sub(points[i], c)) > 0.0)
            .count();
        let inward = list
            .iter()
            .filter(|&&i| dot(normals[i], sub(points[i], c)) < 0.0)
            .count();
        if inward > outward {
            flip(&mut normals, list);
        }
    }

    if members.len() > 1 {
        let closed: Vec<bool> = members
            .iter()
            .map(|list| {
                let mut vector_area = [0.0; 3];
                let mut total = 0.0;
                for &i in list {
                    vector_area = crate::geom::add(vector_area, scale(normals[i], areas[i]));
                    total += areas[i];
                }
                list.len() >= k && crate::geom::norm(vector_area) < CLOSED_RATIO * total
            })
            .collect();
        let gathered: Vec<(Vec<Vec3>, Vec<Vec3>, Vec<f64>)> = members
            .iter()
            .map(|list| {
                (
                    list.iter().map(|&i| points[i]).collect(),
                    list.iter().map(|&i| normals[i]).collect(),
                    list.iter().map(|&i| areas[i]).collect(),
                )
            })
            .collect();
        let mut flips = Vec::new();
        for (b, list) in members.iter().enumerate() {
            let stride = (list.len() / WINDING_PROBES).max(1);
            let probes: Vec<Vec3> = list.iter().step_by(stride).map(|&i| points[i]).collect();
            let depth = (0..members.len())
                .filter(|&a| a != b && closed[a])
                .filter(|&a| {
                    let (pa, na, aa) = &gathered[a];
                    let inside = probes
                        .iter()
                        .filter(|&&q| winding_number(pa, na, aa, q) > 0.5)
                        .count();
                    2 * inside > probes.len()
                })
                .count();
            if depth % 2 == 1 {
                flips.push(b);
            }
        }
        for b in flips {
            flip(&mut normals, &members[b]);
        }
    }

    Ok(PointCloud {
        points: cloud.points.clone(),
        split: cloud.split,
        normals: Some(normals),
    })
}
