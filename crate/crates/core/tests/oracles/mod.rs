//! Brute-force reference implementations, written with plain loops over
//! `Vec<f64>` straight from the metric definitions. Shared by the integration
//! tests and the acceptance suite; nothing here calls into the library's
//! metric code.
#![allow(dead_code)]

use diswot_core::arch::ActivationBundle;
use diswot_core::tensor::Tensor;
use rand::Rng;

pub type Mat = Vec<Vec<f64>>;

pub fn uniform_vec<R: Rng>(rng: &mut R, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn tensor<R: Rng>(rng: &mut R, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), uniform_vec(rng, n, -1.0, 1.0)).unwrap()
}

/// Rows of a rank-2 tensor, or per-sample flattened rows of a rank-4 one.
pub fn rows(t: &Tensor) -> Mat {
    let b = t.shape()[0];
    let per = t.len() / b;
    (0..b).map(|i| t.data()[i * per..(i + 1) * per].to_vec()).collect()
}

pub fn at4(t: &Tensor, b: usize, c: usize, y: usize, x: usize) -> f64 {
    let s = t.shape();
    t.data()[((b * s[1] + c) * s[2] + y) * s[3] + x]
}

/// A random bundle whose features, logits and gradient are consistent with
/// its pre-pooling map and classifier weight.
pub fn random_bundle<R: Rng>(rng: &mut R, b: usize, c: usize, h: usize, w: usize, n: usize) -> ActivationBundle {
    let pre = tensor(rng, &[b, c, h, w]);
    let fc = tensor(rng, &[n, c]);
    let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..n)).collect();
    let mut feats = vec![0.0; b * c];
    for i in 0..b {
        for ch in 0..c {
            let mut s = 0.0;
            for y in 0..h {
                for x in 0..w {
                    s += at4(&pre, i, ch, y, x);
                }
            }
            feats[i * c + ch] = s / (h * w) as f64;
        }
    }
    let mut logits = vec![0.0; b * n];
    for i in 0..b {
        for k in 0..n {
            logits[i * n + k] = (0..c).map(|ch| feats[i * c + ch] * fc.data()[k * c + ch]).sum();
        }
    }
    let grad = ce_grad_closed(&feats, &logits, &labels, b, c, n);
    ActivationBundle {
        pre_gap_map: pre,
        penultimate_features: Tensor::new(vec![b, c], feats).unwrap(),
        logits: Tensor::new(vec![b, n], logits).unwrap(),
        fc_weight: fc,
        fc_weight_grad: Tensor::new(vec![n, c], grad).unwrap(),
    }
}

fn ce_grad_closed(feats: &[f64], logits: &[f64], labels: &[usize], b: usize, c: usize, n: usize) -> Vec<f64> {
    let mut g = vec![0.0; n * c];
    for i in 0..b {
        let z = &logits[i * n..(i + 1) * n];
        let e: Vec<f64> = z.iter().map(|v| v.exp()).collect();
        let sum: f64 = e.iter().sum();
        for k in 0..n {
            let d = e[k] / sum - if labels[i] == k { 1.0 } else { 0.0 };
            for ch in 0..c {
                g[k * c + ch] += d * feats[i * c + ch] / b as f64;
            }
        }
    }
    g
}

/// Mean cross-entropy of `features · Wᵀ`, computed from scratch.
pub fn ce_loss(features: &Mat, w: &Mat, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (f, &l) in features.iter().zip(labels) {
        let z: Vec<f64> = w.iter().map(|row| row.iter().zip(f).map(|(a, b)| a * b).sum()).collect();
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - z[l];
    }
    total / features.len() as f64
}

/// Central finite differences of [`ce_loss`] with respect to every weight.
pub fn ce_grad_fd(features: &Mat, w: &Mat, labels: &[usize], h: f64) -> Mat {
    let mut out = vec![vec![0.0; w[0].len()]; w.len()];
    let mut wp = w.clone();
    for k in 0..w.len() {
        for c in 0..w[0].len() {
            let orig = wp[k][c];
            wp[k][c] = orig + h;
            let up = ce_loss(features, &wp, labels);
            wp[k][c] = orig - h;
            let down = ce_loss(features, &wp, labels);
            wp[k][c] = orig;
            out[k][c] = (up - down) / (2.0 * h);
        }
    }
    out
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn scaled(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    if n > 0.0 {
        v.iter().map(|x| x / n).collect()
    } else {
        v.to_vec()
    }
}

/// `R Rᵀ`, then each row scaled to unit length (`matrix = false`) or the whole
/// matrix to unit Frobenius norm (`matrix = true`).
pub fn gram(r: &Mat, matrix: bool) -> Mat {
    let n = r.len();
    let mut g = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            g[i][j] = r[i].iter().zip(&r[j]).map(|(a, b)| a * b).sum();
        }
    }
    if matrix {
        let f = g.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
        if f > 0.0 {
            g.iter_mut().flatten().for_each(|x| *x /= f);
        }
        g
    } else {
        g.iter().map(|row| scaled(row)).collect()
    }
}

/// `Σ (a − b)² / n²`.
pub fn sq_dist(a: &Mat, b: &Mat) -> f64 {
    let n = a.len() as f64;
    let mut s = 0.0;
    for (ra, rb) in a.iter().zip(b) {
        for (x, y) in ra.iter().zip(rb) {
            s += (x - y) * (x - y);
        }
    }
    s / (n * n)
}

/// Grad-CAM maps `[N][HW]`: class weights applied to the batch-mean activation.
pub fn gradcam(pre: &Tensor, w: &Tensor) -> Mat {
    let (b, c, h, wd) = (pre.shape()[0], pre.shape()[1], pre.shape()[2], pre.shape()[3]);
    let n = w.shape()[0];
    let mut out = vec![vec![0.0; h * wd]; n];
    for k in 0..n {
        for y in 0..h {
            for x in 0..wd {
                let mut s = 0.0;
                for ch in 0..c {
                    let mut m = 0.0;
                    for i in 0..b {
                        m += at4(pre, i, ch, y, x);
                    }
                    s += w.data()[k * c + ch] * m / b as f64;
                }
                out[k][y * wd + x] = s;
            }
        }
    }
    out
}

pub fn m_s(t: &ActivationBundle, s: &ActivationBundle, use_grad: bool, matrix: bool) -> f64 {
    let (wt, ws) = if use_grad {
        (&t.fc_weight_grad, &s.fc_weight_grad)
    } else {
        (&t.fc_weight, &s.fc_weight)
    };
    sq_dist(
        &gram(&gradcam(&t.pre_gap_map, wt), matrix),
        &gram(&gradcam(&s.pre_gap_map, ws), matrix),
    )
}

pub fn m_r(t: &Tensor, s: &Tensor, matrix: bool) -> f64 {
    sq_dist(&gram(&rows(t), matrix), &gram(&rows(s), matrix))
}

pub fn diswot(t: &ActivationBundle, s: &ActivationBundle) -> f64 {
    -(m_s(t, s, false, false) + m_r(&t.pre_gap_map, &s.pre_gap_map, false))
}

fn mean_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

fn softmax(z: &[f64], rho: f64) -> Vec<f64> {
    let e: Vec<f64> = z.iter().map(|v| (v / rho).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn kd_kl(zt: &Tensor, zs: &Tensor, rho: f64) -> f64 {
    let (rt, rs) = (rows(zt), rows(zs));
    let mut total = 0.0;
    for (a, b) in rt.iter().zip(&rs) {
        let (p, q) = (softmax(a, rho), softmax(b, rho));
        total += p.iter().zip(&q).map(|(p, q)| p * (p.ln() - q.ln())).sum::<f64>();
    }
    total / rt.len() as f64
}

/// `proj` is `[C_t][C_s]`, applied to the student when given.
pub fn fitnets(ft: &Tensor, fs: &Tensor, proj: Option<&Mat>) -> f64 {
    let (rt, rs) = (rows(ft), rows(fs));
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (t, s) in rt.iter().zip(&rs) {
        a.extend_from_slice(t);
        match proj {
            Some(p) => b.extend(p.iter().map(|row| row.iter().zip(s).map(|(x, y)| x * y).sum::<f64>())),
            None => b.extend_from_slice(s),
        }
    }
    mean_sq(&a, &b)
}

fn attention_rows(m: &Tensor) -> Vec<f64> {
    let (b, c, h, w) = (m.shape()[0], m.shape()[1], m.shape()[2], m.shape()[3]);
    let mut out = Vec::new();
    for i in 0..b {
        let mut a = vec![0.0; h * w];
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    a[y * w + x] += at4(m, i, ch, y, x).powi(2);
                }
            }
        }
        out.extend(scaled(&a));
    }
    out
}

pub fn at(t: &Tensor, s: &Tensor) -> f64 {
    mean_sq(&attention_rows(t), &attention_rows(s))
}

pub fn sp(t: &Tensor, s: &Tensor) -> f64 {
    m_r(t, s, false)
}

fn corr(f: &Tensor) -> Vec<f64> {
    let r: Mat = rows(f)
        .into_iter()
        .map(|v| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            scaled(&v.iter().map(|x| x - m).collect::<Vec<_>>())
        })
        .collect();
    let mut out = Vec::new();
    for a in &r {
        for b in &r {
            out.push(a.iter().zip(b).map(|(x, y)| x * y).sum());
        }
    }
    out
}

pub fn cc(t: &Tensor, s: &Tensor) -> f64 {
    mean_sq(&corr(t), &corr(s))
}

fn dist(f: &Tensor) -> Vec<f64> {
    let r = rows(f);
    let b = r.len();
    let mut d = Vec::new();
    let mut off = 0.0;
    for i in 0..b {
        for j in 0..b {
            let v = r[i].iter().zip(&r[j]).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            if i != j {
                off += v;
            }
            d.push(v);
        }
    }
    let mu = off / (b * (b - 1)) as f64;
    if mu > 0.0 {
        d.iter_mut().for_each(|v| *v /= mu);
    }
    d
}

pub fn rkd(t: &Tensor, s: &Tensor) -> f64 {
    mean_sq(&dist(t), &dist(s))
}

fn nst_mean(m: &Tensor, i: usize) -> Vec<f64> {
    let (c, h, w) = (m.shape()[1], m.shape()[2], m.shape()[3]);
    let mut mean = vec![0.0; h * w];
    for ch in 0..c {
        let mut row = Vec::new();
        for y in 0..h {
            for x in 0..w {
                row.push(at4(m, i, ch, y, x));
            }
        }
        for (acc, v) in mean.iter_mut().zip(scaled(&row)) {
            *acc += v / c as f64;
        }
    }
    mean
}

pub fn nst(t: &Tensor, s: &Tensor) -> f64 {
    let b = t.shape()[0];
    let mut total = 0.0;
    for i in 0..b {
        let (a, c) = (nst_mean(t, i), nst_mean(s, i));
        total += a.iter().zip(&c).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    }
    total / b as f64
}

fn pkt_p(f: &Tensor) -> Mat {
    let r: Mat = rows(f).iter().map(|v| scaled(v)).collect();
    r.iter()
        .map(|a| {
            let row: Vec<f64> = r
                .iter()
                .map(|b| ((a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() + 1.0) / 2.0).max(1e-12))
                .collect();
            let s: f64 = row.iter().sum();
            row.iter().map(|v| v / s).collect()
        })
        .collect()
}

pub fn pkt(t: &Tensor, s: &Tensor) -> f64 {
    let (pt, ps) = (pkt_p(t), pkt_p(s));
    let mut kl = 0.0;
    for (a, b) in pt.iter().zip(&ps) {
        for (p, q) in a.iter().zip(b) {
            kl += p * (p.ln() - q.ln());
        }
    }
    kl / pt.len() as f64
}

/// Concordant minus discordant pairs, and the pair count, by enumeration.
pub fn kendall_pairs(x: &[f64], y: &[f64]) -> (i64, i64) {
    let n = x.len();
    let mut s = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            let p = (x[i] - x[j]) * (y[i] - y[j]);
            if p > 0.0 {
                s += 1;
            } else if p < 0.0 {
                s -= 1;
            }
        }
    }
    (s, (n * (n - 1) / 2) as i64)
}

/// Tau-b by enumeration.
pub fn kendall_b(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let (mut s, mut tx, mut ty, mut n0) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            n0 += 1;
            let (dx, dy) = (x[i] - x[j], y[i] - y[j]);
            if dx == 0.0 {
                tx += 1;
            }
            if dy == 0.0 {
                ty += 1;
            }
            s += ((dx * dy) > 0.0) as i64 - ((dx * dy) < 0.0) as i64;
        }
    }
    s as f64 / (((n0 - tx) * (n0 - ty)) as f64).sqrt()
}

/// Average 1-based ranks by counting.
pub fn avg_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&a| {
            let less = v.iter().filter(|&&b| b < a).count() as f64;
            let eq = v.iter().filter(|&&b| b == a).count() as f64;
            1.0 + less + (eq - 1.0) / 2.0
        })
        .collect()
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// `1 − 6Σd²/(n(n²−1))` as an exact rational `(num, den)` for tie-free data.
pub fn spearman_closed(x: &[f64], y: &[f64]) -> (i64, i64) {
    let (rx, ry) = (avg_ranks(x), avg_ranks(y));
    let n = x.len() as i64;
    let d2: i64 = rx.iter().zip(&ry).map(|(a, b)| ((a - b) as i64).pow(2)).sum();
    let den = n * (n * n - 1);
    (den - 6 * d2, den)
}

pub fn spearman_ranked(x: &[f64], y: &[f64]) -> f64 {
    pearson(&avg_ranks(x), &avg_ranks(y))
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

/// A random rotation of `R^d` as a product of Givens rotations over every
/// coordinate pair.
pub fn random_rotation<R: Rng>(rng: &mut R, d: usize) -> Mat {
    let mut q: Mat = (0..d).map(|i| (0..d).map(|j| (i == j) as u8 as f64).collect()).collect();
    for i in 0..d {
        for j in i + 1..d {
            let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let (c, s) = (th.cos(), th.sin());
            for row in q.iter_mut() {
                let (a, b) = (row[i], row[j]);
                row[i] = c * a - s * b;
                row[j] = s * a + c * b;
            }
        }
    }
    q
}

/// Each row of `f` multiplied by `q`.
pub fn rotate_rows(f: &Tensor, q: &Mat) -> Tensor {
    let (b, d) = (f.shape()[0], f.shape()[1]);
    let mut out = vec![0.0; b * d];
    for i in 0..b {
        for j in 0..d {
            out[i * d + j] = (0..d).map(|k| f.data()[i * d + k] * q[k][j]).sum();
        }
    }
    Tensor::new(vec![b, d], out).unwrap()
}

/// Reorders the leading axis.
pub fn permute_batch(t: &Tensor, perm: &[usize]) -> Tensor {
    let per = t.len() / t.shape()[0];
    let mut out = Vec::with_capacity(t.len());
    for &p in perm {
        out.extend_from_slice(&t.data()[p * per..(p + 1) * per]);
    }
    Tensor::new(t.shape().to_vec(), out).unwrap()
}

/// Published S0 parameter counts in thousands.
pub const S0_PARAM_GOLDENS: [([usize; 3], f64); 8] = [
    ([7, 1, 3], 259.89),
    ([3, 3, 3], 278.32),
    ([7, 5, 3], 334.13),
    ([1, 7, 3], 343.22),
    ([5, 5, 7], 620.72),
    ([3, 7, 7], 648.50),
    ([7, 3, 5], 444.98),
    ([5, 5, 5], 472.76),
];

/// Published NB201 cells found by seven search methods.
pub const NB201_CELLS: [&str; 7] = [
    "|skip_connect~0|+|nor_conv_3x3~0|skip_connect~1|+|nor_conv_3x3~0|nor_conv_1x1~1|avg_pool_3x3~2|",
    "|skip_connect~0|+|avg_pool_3x3~0|skip_connect~1|+|avg_pool_3x3~0|skip_connect~1|skip_connect~2|",
    "|nor_conv_3x3~0|+|skip_connect~0|skip_connect~1|+|skip_connect~0|skip_connect~1|avg_pool_3x3~2|",
    "|skip_connect~0|+|nor_conv_1x1~0|nor_conv_3x3~1|+|nor_conv_1x1~0|avg_pool_3x3~1|nor_conv_3x3~2|",
    "|skip_connect~0|+|nor_conv_3x3~0|nor_conv_3x3~1|+|skip_connect~0|skip_connect~1|nor_conv_3x3~2|",
    "|nor_conv_1x1~0|+|nor_conv_3x3~0|nor_conv_1x1~1|+|nor_conv_1x1~0|nor_conv_3x3~1|nor_conv_1x1~2|",
    "|skip_connect~0|+|nor_conv_3x3~0|nor_conv_1x1~1|+|nor_conv_1x1~0|nor_conv_3x3~1|nor_conv_3x3~2|",
];
