use super::ops::{ball_query, farthest_point_sampling, sinusoidal_embedding, three_nn};
use super::{Dense, DenoiserParams};
use crate::error::{Error, Result};
use crate::geom::{sub, Vec3};

/// Flat gradient in parameter layout order.
pub type Gradient = Vec<f64>;

#[inline]
fn leaky(z: f64, slope: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        slope * z
    }
}

#[inline]
fn leaky_grad(z: f64, slope: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        slope
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `b + W_time · emb`, the per-sample bias of a layer fed the step embedding.
fn effective_bias(p: &[f64], d: &Dense, emb: &[f64]) -> Vec<f64> {
    let stride = d.stride();
    (0..d.n_out)
        .map(|o| {
            let row = &p[d.w + o * stride + d.n_in..d.w + (o + 1) * stride];
            p[d.b + o] + dot(row, emb)
        })
        .collect()
}

fn dense_rows(p: &[f64], d: &Dense, x: &[f64], rows: usize, bias: &[f64]) -> Vec<f64> {
    let stride = d.stride();
    let mut wt = vec![0.0; d.n_in * d.n_out];
    for o in 0..d.n_out {
        for i in 0..d.n_in {
            wt[i * d.n_out + o] = p[d.w + o * stride + i];
        }
    }
    let mut out = vec![0.0; rows * d.n_out];
    for r in 0..rows {
        let xr = &x[r * d.n_in..(r + 1) * d.n_in];
        let zr = &mut out[r * d.n_out..(r + 1) * d.n_out];
        zr.copy_from_slice(bias);
        for (i, &xi) in xr.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (z, w) in zr.iter_mut().zip(&wt[i * d.n_out..(i + 1) * d.n_out]) {
                *z += xi * w;
            }
        }
    }
    out
}

/// Shared MLP over rows with a leaky activation after every layer.
struct Mlp {
    rows: usize,
    x0: Vec<f64>,
    z: Vec<Vec<f64>>,
}

impl Mlp {
    fn forward(p: &[f64], layers: &[Dense], x0: Vec<f64>, rows: usize, emb: &[f64], slope: f64) -> Self {
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(layers.len());
        for (j, d) in layers.iter().enumerate() {
            let bias = if d.n_time > 0 {
                effective_bias(p, d, emb)
            } else {
                p[d.b..d.b + d.n_out].to_vec()
            };
            let input: Vec<f64>;
            let x = if j == 0 {
                &x0
            } else {
                input = z[j - 1].iter().map(|&v| leaky(v, slope)).collect();
                &input
            };
            z.push(dense_rows(p, d, x, rows, &bias));
        }
        Mlp { rows, x0, z }
    }

    fn output(&self, slope: f64) -> Vec<f64> {
        self.z.last().unwrap().iter().map(|&v| leaky(v, slope)).collect()
    }

    /// Accumulates parameter and embedding gradients; returns d/dx0 when asked.
    #[allow(clippy::too_many_arguments)]
    fn backward(
        &self,
        p: &[f64],
        layers: &[Dense],
        d_out: Vec<f64>,
        emb: &[f64],
        slope: f64,
        grad: &mut [f64],
        d_emb: &mut [f64],
        want_input: bool,
    ) -> Option<Vec<f64>> {
        let rows = self.rows;
        let mut d_act = d_out;
        for j in (0..layers.len()).rev() {
            let d = &layers[j];
            let stride = d.stride();
            let z = &self.z[j];
            let dz: Vec<f64> = d_act.iter().zip(z).map(|(g, &v)| g * leaky_grad(v, slope)).collect();
            let act_prev: Vec<f64>;
            let x: &[f64] = if j == 0 {
                &self.x0
            } else {
                act_prev = self.z[j - 1].iter().map(|&v| leaky(v, slope)).collect();
                &act_prev
            };
            let mut col_sum = vec![0.0; d.n_out];
            for r in 0..rows {
                let dzr = &dz[r * d.n_out..(r + 1) * d.n_out];
                let xr = &x[r * d.n_in..(r + 1) * d.n_in];
                for (o, &g) in dzr.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    col_sum[o] += g;
                    let gw = &mut grad[d.w + o * stride..d.w + o * stride + d.n_in];
                    for (gwi, xi) in gw.iter_mut().zip(xr) {
                        *gwi += g * xi;
                    }
                }
            }
            for o in 0..d.n_out {
                grad[d.b + o] += col_sum[o];
                if d.n_time > 0 && col_sum[o] != 0.0 {
                    let base = d.w + o * stride + d.n_in;
                    for e in 0..d.n_time {
                        grad[base + e] += col_sum[o] * emb[e];
                        d_emb[e] += col_sum[o] * p[base + e];
                    }
                }
            }
            if j == 0 && !want_input {
                return None;
            }
            let mut dx = vec![0.0; rows * d.n_in];
            for r in 0..rows {
                let dzr = &dz[r * d.n_out..(r + 1) * d.n_out];
                let dxr = &mut dx[r * d.n_in..(r + 1) * d.n_in];
                for (o, &g) in dzr.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    let w = &p[d.w + o * stride..d.w + o * stride + d.n_in];
                    for (dxi, wi) in dxr.iter_mut().zip(w) {
                        *dxi += g * wi;
                    }
                }
            }
            d_act = dx;
        }
        Some(d_act)
    }
}

struct TimeTape {
    s: Vec<f64>,
    z1: Vec<f64>,
    emb: Vec<f64>,
}

fn time_forward(params: &DenoiserParams, t: usize, steps: usize) -> Result<TimeTape> {
    if t == 0 || t > steps {
        return Err(Error::invalid(format!("step {t} outside 1..={steps}")));
    }
    let p = params.values();
    let [d1, d2] = params.layers.time;
    let s = sinusoidal_embedding(t as f64, params.arch().embed_dim);
    let z1 = dense_rows(p, &d1, &s, 1, &p[d1.b..d1.b + d1.n_out]);
    let a1: Vec<f64> = z1.iter().map(|&v| leaky(v, params.arch().slope)).collect();
    let emb = dense_rows(p, &d2, &a1, 1, &p[d2.b..d2.b + d2.n_out]);
    Ok(TimeTape { s, z1, emb })
}

/// The 64-vector step embedding: sinusoid → dense → leaky → dense.
pub fn time_embedding(t: usize, steps: usize, params: &DenoiserParams) -> Result<Vec<f64>> {
    Ok(time_forward(params, t, steps)?.emb)
}

fn time_backward(params: &DenoiserParams, tape: &TimeTape, d_emb: &[f64], grad: &mut [f64]) {
    let p = params.values();
    let slope = params.arch().slope;
    let [d1, d2] = params.layers.time;
    let a1: Vec<f64> = tape.z1.iter().map(|&v| leaky(v, slope)).collect();
    let mut d_a1 = vec![0.0; d2.n_in];
    for o in 0..d2.n_out {
        let g = d_emb[o];
        grad[d2.b + o] += g;
        for i in 0..d2.n_in {
            grad[d2.w + o * d2.n_in + i] += g * a1[i];
            d_a1[i] += g * p[d2.w + o * d2.n_in + i];
        }
    }
    for o in 0..d1.n_out {
        let g = d_a1[o] * leaky_grad(tape.z1[o], slope);
        grad[d1.b + o] += g;
        for i in 0..d1.n_in {
            grad[d1.w + o * d1.n_in + i] += g * tape.s[i];
        }
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Internal point order that depends only on point values, so that centre
/// selection and grouping are independent of the caller's ordering.
fn canonical_order(points: &[Vec3], cond: &[bool]) -> Vec<usize> {
    let key = |i: usize| {
        let p = points[i];
        splitmix(p[0].to_bits() ^ splitmix(p[1].to_bits() ^ splitmix(p[2].to_bits() ^ cond[i] as u64)))
    };
    let keys: Vec<u64> = (0..points.len()).map(key).collect();
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        keys[a]
            .cmp(&keys[b])
            .then_with(|| {
                (0..3)
                    .map(|k| points[a][k].total_cmp(&points[b][k]))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .then(cond[a].cmp(&cond[b]))
    });
    order
}

struct SaTape {
    pos: Vec<Vec3>,
    groups: Vec<usize>,
    mlp: Mlp,
    argmax: Vec<usize>,
    feat: Vec<f64>,
    channels: usize,
}

struct FpTape {
    nn: Vec<Vec<(usize, f64)>>,
    src_channels: usize,
    channels: usize,
    mlp: Mlp,
    out: Vec<f64>,
}

struct Tape {
    time: TimeTape,
    sa: Vec<SaTape>,
    fp: Vec<FpTape>,
    head_in: Vec<f64>,
    pred: Vec<Vec3>,
}

fn forward(params: &DenoiserParams, xt_free: &[Vec3], c0: &[Vec3], t: usize, steps: usize) -> Result<Tape> {
    if xt_free.is_empty() {
        return Err(Error::invalid("denoiser needs at least one free point"));
    }
    if xt_free.iter().chain(c0).flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("denoiser input".into()));
    }
    let arch = params.arch();
    let p = params.values();
    let slope = arch.slope;
    let time = time_forward(params, t, steps)?;
    let emb = &time.emb;

    let mut all: Vec<Vec3> = Vec::with_capacity(c0.len() + xt_free.len());
    all.extend_from_slice(c0);
    all.extend_from_slice(xt_free);
    let cond: Vec<bool> = (0..all.len()).map(|i| i < c0.len()).collect();
    let order = canonical_order(&all, &cond);
    let pos0: Vec<Vec3> = order.iter().map(|&i| all[i]).collect();
    let feat0: Vec<f64> = order.iter().map(|&i| cond[i] as u8 as f64).collect();

    let mut sa_tapes: Vec<SaTape> = Vec::with_capacity(arch.set_abstraction.len());
    for (l, level) in arch.set_abstraction.iter().enumerate() {
        let (prev_pos, prev_feat, c_in) = match sa_tapes.last() {
            Some(s) => (&s.pos, &s.feat, s.channels),
            None => (&pos0, &feat0, super::INPUT_FEATURES),
        };
        let n = prev_pos.len();
        let (pos, groups, k, scale): (Vec<Vec3>, Vec<usize>, usize, f64) = match level.radius {
            None => (vec![[0.0; 3]], (0..n).collect(), n, 1.0),
            Some(r) => {
                let m = ((level.ratio * n as f64).ceil() as usize).clamp(1, n);
                let idx = farthest_point_sampling(prev_pos, m, 0)?;
                let pos: Vec<Vec3> = idx.iter().map(|&i| prev_pos[i]).collect();
                let groups = ball_query(&pos, prev_pos, r, level.max_neighbors);
                (pos, groups.concat(), level.max_neighbors, 1.0 / r)
            }
        };
        let rows = groups.len();
        let width = 3 + c_in;
        let mut x0 = vec![0.0; rows * width];
        for (r, &i) in groups.iter().enumerate() {
            let rel = sub(prev_pos[i], pos[r / k]);
            let row = &mut x0[r * width..(r + 1) * width];
            for a in 0..3 {
                row[a] = rel[a] * scale;
            }
            row[3..].copy_from_slice(&prev_feat[i * c_in..(i + 1) * c_in]);
        }
        let layers = &params.layers.sa[l];
        let mlp = Mlp::forward(p, layers, x0, rows, emb, slope);
        let act = mlp.output(slope);
        let channels = layers.last().unwrap().n_out;
        let m = pos.len();
        let mut feat = vec![f64::NEG_INFINITY; m * channels];
        let mut argmax = vec![0usize; m * channels];
        for r in 0..rows {
            let j = r / k;
            for c in 0..channels {
                let v = act[r * channels + c];
                if v > feat[j * channels + c] {
                    feat[j * channels + c] = v;
                    argmax[j * channels + c] = r;
                }
            }
        }
        sa_tapes.push(SaTape {
            pos,
            groups,
            mlp,
            argmax,
            feat,
            channels,
        });
    }

    let levels = sa_tapes.len();
    let mut fp_tapes: Vec<FpTape> = Vec::with_capacity(levels);
    for j in 0..levels {
        let source = levels - j;
        let target = source - 1;
        let src_pos = &sa_tapes[source - 1].pos;
        let (src_feat, src_channels) = match fp_tapes.last() {
            Some(f) => (&f.out, f.channels),
            None => (&sa_tapes[source - 1].feat, sa_tapes[source - 1].channels),
        };
        let (targets, skip_channels): (&[Vec3], usize) = if target == 0 {
            (xt_free, 3 + super::INPUT_FEATURES)
        } else {
            (&sa_tapes[target - 1].pos, sa_tapes[target - 1].channels)
        };
        let width = src_channels + skip_channels;
        let mut x0 = vec![0.0; targets.len() * width];
        let mut nn = Vec::with_capacity(targets.len());
        for (r, q) in targets.iter().enumerate() {
            let row = &mut x0[r * width..(r + 1) * width];
            let w = three_nn(src_pos, *q);
            for &(i, wi) in &w {
                for c in 0..src_channels {
                    row[c] += wi * src_feat[i * src_channels + c];
                }
            }
            if target == 0 {
                row[src_channels..src_channels + 3].copy_from_slice(q);
                // is-condition bit of a free point
                row[src_channels + 3] = 0.0;
            } else {
                let f = &sa_tapes[target - 1].feat;
                row[src_channels..].copy_from_slice(&f[r * skip_channels..(r + 1) * skip_channels]);
            }
            nn.push(w);
        }
        let mlp = Mlp::forward(p, &params.layers.fp[j], x0, targets.len(), emb, slope);
        let out = mlp.output(slope);
        fp_tapes.push(FpTape {
            nn,
            src_channels,
            channels: params.layers.fp[j].last().unwrap().n_out,
            mlp,
            out,
        });
    }

    let head = params.layers.head;
    let head_in = fp_tapes.last().unwrap().out.clone();
    let z = dense_rows(p, &head, &head_in, xt_free.len(), &p[head.b..head.b + 3]);
    let pred: Vec<Vec3> = z.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    if pred.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("denoiser activations".into()));
    }
    Ok(Tape {
        time,
        sa: sa_tapes,
        fp: fp_tapes,
        head_in,
        pred,
    })
}

/// ε̂(x̃_t, c₀, t), one 3-vector per free point, in input order.
pub fn denoise(
    xt_free: &[Vec3],
    c0: &[Vec3],
    t: usize,
    steps: usize,
    params: &DenoiserParams,
) -> Result<Vec<Vec3>> {
    Ok(forward(params, xt_free, c0, t, steps)?.pred)
}

fn backward(params: &DenoiserParams, tape: &Tape, d_pred: &[Vec3], grad: &mut [f64]) {
    let p = params.values();
    let slope = params.arch().slope;
    let mut d_emb = vec![0.0; params.arch().embed_dim];
    let levels = tape.sa.len();

    let head = params.layers.head;
    let c_head = head.n_in;
    let mut d_fp = vec![0.0; tape.head_in.len()];
    for (r, g) in d_pred.iter().enumerate() {
        let x = &tape.head_in[r * c_head..(r + 1) * c_head];
        for o in 0..3 {
            grad[head.b + o] += g[o];
            for i in 0..c_head {
                grad[head.w + o * c_head + i] += g[o] * x[i];
                d_fp[r * c_head + i] += g[o] * p[head.w + o * c_head + i];
            }
        }
    }

    // Gradients reaching each SA level's pooled features.
    let mut d_sa: Vec<Vec<f64>> = tape.sa.iter().map(|s| vec![0.0; s.feat.len()]).collect();
    for j in (0..levels).rev() {
        let fp = &tape.fp[j];
        let target = levels - j - 1;
        let dx = fp
            .mlp
            .backward(p, &params.layers.fp[j], d_fp, &tape.time.emb, slope, grad, &mut d_emb, true)
            .unwrap();
        let width = dx.len() / fp.nn.len();
        let sc = fp.src_channels;
        let mut d_src = vec![0.0; tape.sa[levels - j - 1].pos.len() * sc];
        for (r, w) in fp.nn.iter().enumerate() {
            let row = &dx[r * width..(r + 1) * width];
            for &(i, wi) in w {
                for c in 0..sc {
                    d_src[i * sc + c] += wi * row[c];
                }
            }
            if target > 0 {
                let skip = width - sc;
                let ds = &mut d_sa[target - 1][r * skip..(r + 1) * skip];
                for (a, b) in ds.iter_mut().zip(&row[sc..]) {
                    *a += b;
                }
            }
        }
        if j == 0 {
            for (a, b) in d_sa[levels - 1].iter_mut().zip(&d_src) {
                *a += b;
            }
            d_fp = Vec::new();
        } else {
            d_fp = d_src;
        }
    }

    for l in (0..levels).rev() {
        let sa = &tape.sa[l];
        let ch = sa.channels;
        let mut d_act = vec![0.0; sa.groups.len() * ch];
        for (jc, &r) in sa.argmax.iter().enumerate() {
            let c = jc % ch;
            d_act[r * ch + c] += d_sa[l][jc];
        }
        let want = l > 0;
        let dx = sa.mlp.backward(
            p,
            &params.layers.sa[l],
            d_act,
            &tape.time.emb,
            slope,
            grad,
            &mut d_emb,
            want,
        );
        if let Some(dx) = dx {
            let c_in = tape.sa[l - 1].channels;
            let width = 3 + c_in;
            let (before, _) = d_sa.split_at_mut(l);
            let prev = &mut before[l - 1];
            for (r, &i) in sa.groups.iter().enumerate() {
                let row = &dx[r * width + 3..(r + 1) * width];
                for (a, b) in prev[i * c_in..(i + 1) * c_in].iter_mut().zip(row) {
                    *a += b;
                }
            }
        }
    }
    time_backward(params, &tape.time, &d_emb, grad);
}

/// Loss ‖ε − ε̂‖² averaged over free points for one sample; adds
/// `weight · ∂loss/∂θ` into `grad`.
pub(crate) fn sample_loss_and_grad(
    params: &DenoiserParams,
    xt_free: &[Vec3],
    c0: &[Vec3],
    t: usize,
    steps: usize,
    eps: &[Vec3],
    weight: f64,
    grad: &mut [f64],
) -> Result<f64> {
    if eps.len() != xt_free.len() {
        return Err(Error::shape("noise and free block differ in length"));
    }
    let tape = forward(params, xt_free, c0, t, steps)?;
    let m = xt_free.len() as f64;
    let mut loss = 0.0;
    let d_pred: Vec<Vec3> = tape
        .pred
        .iter()
        .zip(eps)
        .map(|(p, e)| {
            let d = sub(*p, *e);
            loss += crate::geom::dot(d, d);
            crate::geom::scale(d, 2.0 * weight / m)
        })
        .collect();
    loss /= m;
    if !loss.is_finite() {
        return Err(Error::NonFinite("training loss".into()));
    }
    backward(params, &tape, &d_pred, grad);
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::super::{Architecture, DenoiserParams};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
        (0..n)
            .map(|_| [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)])
            .collect()
    }

    fn randomized(seed: u64) -> DenoiserParams {
        let mut p = DenoiserParams::new(Architecture::toy(), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let (off, spec) = p.tensor("head.weight").unwrap();
        for v in &mut p.values_mut()[off..off + spec.len() + 3] {
            *v = rng.random_range(-0.3..0.3);
        }
        p
    }

    #[test]
    fn zero_head_gives_zero_output() {
        let p = DenoiserParams::new(Architecture::toy(), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c0 = random_points(100, &mut rng);
        let x = random_points(12, &mut rng);
        let out = denoise(&x, &c0, 5, 10, &p).unwrap();
        assert_eq!(out.len(), 12);
        assert!(out.iter().flatten().all(|&v| v == 0.0));
        assert!(denoise(&x, &c0, 11, 10, &p).is_err());
        assert!(denoise(&[], &c0, 1, 10, &p).is_err());
    }

    #[test]
    fn identity_time_mlp_is_leaky_sinusoid() {
        let mut p = DenoiserParams::zeros(Architecture::toy()).unwrap();
        for name in ["time.fc1.weight", "time.fc2.weight"] {
            let (off, _) = p.tensor(name).unwrap();
            for i in 0..64 {
                p.values_mut()[off + i * 64 + i] = 1.0;
            }
        }
        let e = time_embedding(37, 100, &p).unwrap();
        let s = sinusoidal_embedding(37.0, 64);
        for (a, b) in e.iter().zip(&s) {
            let want = if *b > 0.0 { *b } else { 0.1 * b };
            assert_eq!(*a, want);
        }
        let q = DenoiserParams::new(Architecture::toy(), 3).unwrap();
        assert_eq!(time_embedding(1, 100, &q).unwrap().len(), 64);
        assert_ne!(time_embedding(1, 100, &q).unwrap(), time_embedding(2, 100, &q).unwrap());
    }

    #[test]
    fn symmetric_under_point_permutations() {
        let p = randomized(4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c0 = random_points(300, &mut rng);
        let x = random_points(40, &mut rng);
        let base = denoise(&x, &c0, 30, 100, &p).unwrap();
        assert!(base.iter().flatten().any(|&v| v != 0.0));
        let mut c_perm = c0.clone();
        c_perm.reverse();
        c_perm.swap(3, 200);
        let same = denoise(&x, &c_perm, 30, 100, &p).unwrap();
        for (a, b) in base.iter().zip(&same) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-9);
            }
        }
        let perm: Vec<usize> = (0..40).rev().collect();
        let x_perm: Vec<Vec3> = perm.iter().map(|&i| x[i]).collect();
        let moved = denoise(&x_perm, &c0, 30, 100, &p).unwrap();
        for (j, &i) in perm.iter().enumerate() {
            for k in 0..3 {
                assert!((moved[j][k] - base[i][k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn activations_finite_at_default_init() {
        let p = DenoiserParams::new(Architecture::toy(), 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c0 = random_points(512, &mut rng);
        let x = random_points(64, &mut rng);
        let tape = forward(&p, &x, &c0, 100, 100).unwrap();
        for s in &tape.sa {
            assert!(s.feat.iter().all(|v| v.is_finite()));
        }
        assert!(tape.head_in.iter().all(|v| v.is_finite()));
        assert_eq!(tape.sa[0].pos.len(), 144);
        assert_eq!(tape.sa[1].pos.len(), 36);
    }

    /// Spot-check of the analytic gradient against central differences on a
    /// subset of coordinates; the exhaustive check lives in the acceptance suite.
    #[test]
    fn gradient_spot_check() {
        let p = randomized(10);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c0 = random_points(12, &mut rng);
        let x = random_points(4, &mut rng);
        let eps = random_points(4, &mut rng);
        let loss_at = |q: &DenoiserParams| {
            let mut g = vec![0.0; q.len()];
            sample_loss_and_grad(q, &x, &c0, 7, 10, &eps, 1.0, &mut g).unwrap()
        };
        let mut g = vec![0.0; p.len()];
        sample_loss_and_grad(&p, &x, &c0, 7, 10, &eps, 1.0, &mut g).unwrap();
        let h = 1e-5;
        for i in (0..p.len()).step_by(97) {
            let mut a = p.clone();
            a.values_mut()[i] += h;
            let mut b = p.clone();
            b.values_mut()[i] -= h;
            let fd = (loss_at(&a) - loss_at(&b)) / (2.0 * h);
            let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-6);
            assert!(rel < 1e-4, "param {i}: analytic {} vs fd {fd}", g[i]);
        }
    }

    #[test]
    fn group_all_level_is_supported() {
        let mut arch = Architecture::toy();
        arch.set_abstraction.push(super::super::SetAbstraction {
            ratio: 1.0,
            radius: None,
            max_neighbors: 1,
            widths: vec![32],
        });
        arch.feature_propagation.insert(0, super::super::FeaturePropagation { widths: vec![32] });
        let mut p = DenoiserParams::new(arch, 12).unwrap();
        let (off, _) = p.tensor("head.weight").unwrap();
        p.values_mut()[off] = 0.5;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let c0 = random_points(50, &mut rng);
        let x = random_points(6, &mut rng);
        let out = denoise(&x, &c0, 3, 10, &p).unwrap();
        assert!(out.iter().any(|v| v[0] != 0.0));
    }
}
