//! Non-learned building blocks of the point network: the sinusoidal step
//! encoding, centre selection, grouping, and interpolation weights.

use crate::error::{Error, Result};
use crate::geom::{dist2, Vec3};

/// `dim / 2` sine features followed by `dim / 2` cosine features of `t`,
/// frequencies `exp(-ln(10000) * i / (dim/2 - 1))`.
pub fn sinusoidal_embedding(t: f64, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let step = if half > 1 {
        10000f64.ln() / (half - 1) as f64
    } else {
        0.0
    };
    let mut out = vec![0.0; dim];
    for i in 0..half {
        let arg = t * (-(i as f64) * step).exp();
        out[i] = arg.sin();
        out[half + i] = arg.cos();
    }
    out
}

/// Greedy max-min selection of `k` indices starting at `start`. Ties go to
/// the lower index.
pub fn farthest_point_sampling(points: &[Vec3], k: usize, start: usize) -> Result<Vec<usize>> {
    if k > points.len() {
        return Err(Error::invalid(format!(
            "cannot pick {k} centres from {} points",
            points.len()
        )));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    if start >= points.len() {
        return Err(Error::invalid(format!("start index {start} out of range")));
    }
    let mut chosen = Vec::with_capacity(k);
    let mut nearest = vec![f64::INFINITY; points.len()];
    let mut current = start;
    for _ in 0..k {
        chosen.push(current);
        let c = points[current];
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for (i, p) in points.iter().enumerate() {
            let d = dist2(*p, c);
            if d < nearest[i] {
                nearest[i] = d;
            }
            if nearest[i] > best.0 {
                best = (nearest[i], i);
            }
        }
        current = best.1;
    }
    Ok(chosen)
}

/// For each centre, exactly `max_neighbors` indices of points within
/// `radius`, in scan order. Short lists repeat their first entry; an empty
/// ball falls back to the nearest point.
pub fn ball_query(
    centers: &[Vec3],
    points: &[Vec3],
    radius: f64,
    max_neighbors: usize,
) -> Vec<Vec<usize>> {
    let r2 = radius * radius;
    centers
        .iter()
        .map(|c| {
            let mut found: Vec<usize> = points
                .iter()
                .enumerate()
                .filter(|(_, p)| dist2(**p, *c) <= r2)
                .map(|(i, _)| i)
                .take(max_neighbors)
                .collect();
            if found.is_empty() {
                if let Some(i) = nearest_index(points, *c) {
                    found.push(i);
                }
            }
            if let Some(&first) = found.first() {
                found.resize(max_neighbors, first);
            }
            found
        })
        .collect()
}

fn nearest_index(points: &[Vec3], q: Vec3) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (i, p) in points.iter().enumerate() {
        let d = dist2(*p, q);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, i));
        }
    }
    best.map(|(_, i)| i)
}

/// Up to three nearest sources of `q` with normalized inverse squared
/// distance weights.
pub fn three_nn(sources: &[Vec3], q: Vec3) -> Vec<(usize, f64)> {
    let mut best: [(f64, usize); 3] = [(f64::INFINITY, usize::MAX); 3];
    for (i, p) in sources.iter().enumerate() {
        let d = dist2(*p, q);
        if d < best[2].0 {
            best[2] = (d, i);
            if best[2].0 < best[1].0 {
                best.swap(1, 2);
                if best[1].0 < best[0].0 {
                    best.swap(0, 1);
                }
            }
        }
    }
    let found: Vec<(f64, usize)> = best.into_iter().filter(|b| b.1 != usize::MAX).collect();
    let inv: Vec<f64> = found.iter().map(|(d, _)| 1.0 / (d + 1e-8)).collect();
    let total: f64 = inv.iter().sum();
    found
        .iter()
        .zip(&inv)
        .map(|((_, i), w)| (*i, w / total))
        .collect()
}
