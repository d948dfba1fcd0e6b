//! Distillation distances used as zero-cost proxies. Each is a non-negative
//! distance between teacher and student statistics of one batch; the proxy
//! value is its negation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{relation_similarity, ProxyScore};
use crate::arch::ActivationBundle;
use crate::tensor::{init_tensor, linear, log_softmax_rows, InitSpec, Tensor};
use crate::{Error, Result};

/// Seed of the fixed student→teacher channel projection used by FitNets.
pub const FITNETS_PROJECTION_SEED: u64 = 0x6669_746e_6574_73;

/// Floor applied to PKT probabilities before taking logs.
const PKT_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KdKind {
    KdKl,
    FitNets,
    At,
    Sp,
    Cc,
    Rkd,
    Nst,
    Pkt,
}

impl KdKind {
    pub const ALL: [KdKind; 8] = [
        KdKind::KdKl,
        KdKind::FitNets,
        KdKind::At,
        KdKind::Sp,
        KdKind::Cc,
        KdKind::Rkd,
        KdKind::Nst,
        KdKind::Pkt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            KdKind::KdKl => "kd",
            KdKind::FitNets => "fitnets",
            KdKind::At => "at",
            KdKind::Sp => "sp",
            KdKind::Cc => "cc",
            KdKind::Rkd => "rkd",
            KdKind::Nst => "nst",
            KdKind::Pkt => "pkt",
        }
    }
}

impl fmt::Display for KdKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KdKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        KdKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::parse(s, "unknown KD proxy"))
    }
}

pub fn kd_distance(
    kind: KdKind,
    teacher: &ActivationBundle,
    student: &ActivationBundle,
    temperature: f64,
) -> Result<ProxyScore> {
    ProxyScore::new(kind.as_str(), -kd_raw_distance(kind, teacher, student, temperature)?)
}

/// The non-negative distance behind [`kd_distance`].
///
/// - `kd`: batch mean of `KL(softmax(z_T/ρ) ‖ softmax(z_S/ρ))`.
/// - `fitnets`: mean squared error of the pooled features, with the student
///   projected to the teacher width by [`fitnets_projection`] when they differ.
/// - `at`: per sample, `Σ_c A²` over channels, L2-normalized over positions;
///   mean squared difference.
/// - `sp`: the relation metric on the pre-pooling maps.
/// - `cc`: per sample, features centered and scaled to unit norm; mean squared
///   difference of the `B×B` correlation matrices.
/// - `rkd`: pairwise Euclidean distances divided by their off-diagonal mean;
///   mean squared difference.
/// - `nst`: per sample, channel rows L2-normalized over positions; squared
///   distance between the teacher and student channel means (linear-kernel
///   MMD), averaged over the batch.
/// - `pkt`: cosine similarities mapped to `(s+1)/2`, rows normalized to
///   probabilities; `KL(P_T ‖ P_S)` averaged over rows.
pub fn kd_raw_distance(
    kind: KdKind,
    teacher: &ActivationBundle,
    student: &ActivationBundle,
    temperature: f64,
) -> Result<f64> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {temperature}")));
    }
    let (bt, bs) = (teacher.batch_size(), student.batch_size());
    if bt != bs {
        return Err(Error::shape("kd_distance", format!("batch {bt} vs {bs}")));
    }
    match kind {
        KdKind::KdKl => kl_logits(&teacher.logits, &student.logits, temperature),
        KdKind::FitNets => fitnets(&teacher.penultimate_features, &student.penultimate_features),
        KdKind::At => attention(&teacher.pre_gap_map, &student.pre_gap_map),
        KdKind::Sp => relation_similarity(&teacher.pre_gap_map, &student.pre_gap_map),
        KdKind::Cc => Ok(mean_sq_diff(
            &correlation(&teacher.penultimate_features),
            &correlation(&student.penultimate_features),
        )),
        KdKind::Rkd => Ok(mean_sq_diff(
            &distance_matrix(&teacher.penultimate_features),
            &distance_matrix(&student.penultimate_features),
        )),
        KdKind::Nst => nst(&teacher.pre_gap_map, &student.pre_gap_map),
        KdKind::Pkt => Ok(pkt(&teacher.penultimate_features, &student.penultimate_features)),
    }
}

fn mean_sq_diff(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

fn unit(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn kl_logits(zt: &Tensor, zs: &Tensor, rho: f64) -> Result<f64> {
    if zt.shape() != zs.shape() {
        return Err(Error::shape("kd", format!("logits {:?} vs {:?}", zt.shape(), zs.shape())));
    }
    let lt = log_softmax_rows(zt, rho)?;
    let ls = log_softmax_rows(zs, rho)?;
    let b = zt.shape()[0];
    let mut total = 0.0;
    for i in 0..b {
        total += lt
            .row(i)
            .iter()
            .zip(ls.row(i))
            .map(|(&a, &s)| a.exp() * (a - s))
            .sum::<f64>();
    }
    // Rounding can leave a tiny negative value when the distributions match.
    Ok((total / b as f64).max(0.0))
}

/// Fixed `[c_teacher, c_student]` projection, zero-mean normal entries with
/// std `1/sqrt(c_student)`.
pub fn fitnets_projection(c_student: usize, c_teacher: usize) -> Tensor {
    let spec = InitSpec::gaussian(1.0 / (c_student as f64).sqrt(), FITNETS_PROJECTION_SEED).expect("positive std");
    init_tensor(&[c_teacher, c_student], &spec, ((c_teacher as u64) << 32) | c_student as u64)
}

fn fitnets(ft: &Tensor, fs: &Tensor) -> Result<f64> {
    let (_, ct) = ft.dims2()?;
    let (_, cs) = fs.dims2()?;
    let projected;
    let fs = if cs == ct {
        fs
    } else {
        projected = linear(fs, &fitnets_projection(cs, ct), None)?;
        &projected
    };
    Ok(mean_sq_diff(ft.data(), fs.data()))
}

fn attention_maps(a: &Tensor) -> Result<Vec<f64>> {
    let (b, c, h, w) = a.dims4()?;
    let hw = h * w;
    let mut out = vec![0.0; b * hw];
    for s in 0..b {
        let row = &mut out[s * hw..(s + 1) * hw];
        for ch in 0..c {
            let base = (s * c + ch) * hw;
            for (r, x) in row.iter_mut().zip(&a.data()[base..base + hw]) {
                *r += x * x;
            }
        }
        unit(row);
    }
    Ok(out)
}

fn attention(t: &Tensor, s: &Tensor) -> Result<f64> {
    let (_, _, ht, wt) = t.dims4()?;
    let (_, _, hs, ws) = s.dims4()?;
    if (ht, wt) != (hs, ws) {
        return Err(Error::shape("at", format!("spatial {ht}x{wt} vs {hs}x{ws}")));
    }
    Ok(mean_sq_diff(&attention_maps(t)?, &attention_maps(s)?))
}

fn correlation(f: &Tensor) -> Vec<f64> {
    let b = f.shape()[0];
    let rows: Vec<Vec<f64>> = (0..b)
        .map(|i| {
            let r = f.row(i);
            let m = r.iter().sum::<f64>() / r.len() as f64;
            let mut v: Vec<f64> = r.iter().map(|x| x - m).collect();
            unit(&mut v);
            v
        })
        .collect();
    let mut out = vec![0.0; b * b];
    for i in 0..b {
        for j in 0..b {
            out[i * b + j] = dot(&rows[i], &rows[j]);
        }
    }
    out
}

fn distance_matrix(f: &Tensor) -> Vec<f64> {
    let b = f.shape()[0];
    let mut d = vec![0.0; b * b];
    for i in 0..b {
        for j in 0..b {
            d[i * b + j] = f
                .row(i)
                .iter()
                .zip(f.row(j))
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
        }
    }
    let off: f64 = d.iter().sum();
    let pairs = (b * b - b) as f64;
    if off > 0.0 && pairs > 0.0 {
        let mean = off / pairs;
        d.iter_mut().for_each(|x| *x /= mean);
    }
    d
}

fn channel_mean(a: &Tensor, s: usize) -> Vec<f64> {
    let (_, c, h, w) = a.dims4().expect("rank 4");
    let hw = h * w;
    let mut mean = vec![0.0; hw];
    for ch in 0..c {
        let base = (s * c + ch) * hw;
        let mut row = a.data()[base..base + hw].to_vec();
        unit(&mut row);
        for (m, x) in mean.iter_mut().zip(&row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= c as f64);
    mean
}

fn nst(t: &Tensor, s: &Tensor) -> Result<f64> {
    let (b, _, ht, wt) = t.dims4()?;
    let (_, _, hs, ws) = s.dims4()?;
    if (ht, wt) != (hs, ws) {
        return Err(Error::shape("nst", format!("spatial {ht}x{wt} vs {hs}x{ws}")));
    }
    let mut total = 0.0;
    for i in 0..b {
        let mt = channel_mean(t, i);
        let ms = channel_mean(s, i);
        total += mt.iter().zip(&ms).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    }
    Ok(total / b as f64)
}

fn pkt_probs(f: &Tensor) -> Vec<f64> {
    let b = f.shape()[0];
    let rows: Vec<Vec<f64>> = (0..b)
        .map(|i| {
            let mut v = f.row(i).to_vec();
            unit(&mut v);
            v
        })
        .collect();
    let mut p = vec![0.0; b * b];
    for i in 0..b {
        let row = &mut p[i * b..(i + 1) * b];
        for j in 0..b {
            row[j] = ((dot(&rows[i], &rows[j]) + 1.0) / 2.0).max(PKT_FLOOR);
        }
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= s);
    }
    p
}

fn pkt(ft: &Tensor, fs: &Tensor) -> f64 {
    let b = ft.shape()[0];
    let pt = pkt_probs(ft);
    let ps = pkt_probs(fs);
    let kl: f64 = pt.iter().zip(&ps).map(|(&a, &s)| a * (a.ln() - s.ln())).sum();
    (kl / b as f64).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    fn bundle(seed: u64, b: usize, c: usize, hw: usize, n: usize) -> ActivationBundle {
        let mut rng = stream_rng(seed, 0);
        let mut t = |shape: &[usize]| {
            let len = shape.iter().product();
            Tensor::new(shape.to_vec(), (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
        };
        ActivationBundle {
            pre_gap_map: t(&[b, c, hw, 1]),
            penultimate_features: t(&[b, c]),
            logits: t(&[b, n]),
            fc_weight: t(&[n, c]),
            fc_weight_grad: t(&[n, c]),
        }
    }

    #[test]
    fn self_distance_is_zero() {
        let b = bundle(1, 4, 3, 5, 4);
        for k in KdKind::ALL {
            assert_eq!(kd_raw_distance(k, &b, &b, 4.0).unwrap(), 0.0, "{k}");
        }
    }

    #[test]
    fn different_bundles_positive() {
        let t = bundle(1, 4, 3, 5, 4);
        let s = bundle(2, 4, 6, 5, 4);
        for k in KdKind::ALL {
            let d = kd_raw_distance(k, &t, &s, 1.0).unwrap();
            assert!(d > 0.0, "{k} {d}");
            assert_eq!(kd_distance(k, &t, &s, 1.0).unwrap().value, -d);
        }
    }

    #[test]
    fn errors() {
        let t = bundle(1, 4, 3, 5, 4);
        let s = bundle(2, 3, 3, 5, 4);
        assert!(kd_raw_distance(KdKind::Cc, &t, &s, 1.0).is_err());
        assert!(kd_raw_distance(KdKind::KdKl, &t, &t, 0.0).is_err());
        let s = bundle(2, 4, 3, 6, 4);
        assert!(kd_raw_distance(KdKind::At, &t, &s, 1.0).is_err());
        assert!(kd_raw_distance(KdKind::Sp, &t, &s, 1.0).is_ok());
    }

    #[test]
    fn projection_is_fixed() {
        assert_eq!(fitnets_projection(3, 5), fitnets_projection(3, 5));
        assert_ne!(fitnets_projection(3, 5).data(), fitnets_projection(5, 3).data());
    }
}
