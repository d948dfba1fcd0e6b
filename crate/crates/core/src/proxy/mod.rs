//! Training-free scores.
//!
//! DisWOT compares a random-init teacher and student through two Gram
//! matrices: one over the classes of their Grad-CAM maps (`M_s`) and one over
//! the samples of their pre-pooling activations (`M_r`). Both distances are
//! size-normalized squared Frobenius norms of normalized Grams, and the score
//! is `-(M_s + M_r)` so that higher is better, like every other proxy here.

mod kd;
mod nwot;

pub use kd::{fitnets_projection, kd_distance, kd_raw_distance, KdKind, FITNETS_PROJECTION_SEED};
pub use nwot::{logdet_regularized, nwot_score, NwotObserver, NWOT_EPS};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::arch::{
    build_network, count_flops, count_params, ActivationBundle, ArchDescriptor, NetworkInstance, SearchSpace,
};
use crate::data::Batch;
use crate::tensor::{InitSpec, Tensor};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxyScore {
    pub proxy_name: String,
    pub value: f64,
    pub higher_is_better: bool,
}

impl ProxyScore {
    pub fn new(proxy_name: impl Into<String>, value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::InvalidArgument(format!("proxy value {value} is not finite")));
        }
        Ok(ProxyScore {
            proxy_name: proxy_name.into(),
            value,
            higher_is_better: true,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSource {
    /// Classifier weights.
    #[default]
    FcWeights,
    /// Gradient of the cross-entropy w.r.t. the classifier weights.
    FcWeightGrads,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Every row scaled to unit L2 norm; zero rows stay zero.
    #[default]
    RowL2,
    /// Whole matrix scaled to unit Frobenius norm.
    MatrixL2,
}

/// Per-class localization maps, `[N, H*W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCamMaps {
    pub maps: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    pub gram: Tensor,
    pub normalization: Normalization,
}

impl SimilarityMatrix {
    /// Normalized `X·Xᵀ` of the rows of `x` (any rank; the first axis indexes rows).
    pub fn from_rows(x: &Tensor, normalization: Normalization) -> Self {
        let n = x.shape()[0];
        let d = x.len() / n;
        let xs = x.data();
        let mut g = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v: f64 = xs[i * d..(i + 1) * d]
                    .iter()
                    .zip(&xs[j * d..(j + 1) * d])
                    .map(|(a, b)| a * b)
                    .sum();
                g[i * n + j] = v;
                g[j * n + i] = v;
            }
        }
        normalize(&mut g, n, normalization);
        SimilarityMatrix {
            gram: Tensor::new(vec![n, n], g).expect("square gram"),
            normalization,
        }
    }

    pub fn size(&self) -> usize {
        self.gram.shape()[0]
    }
}

pub(crate) fn normalize(g: &mut [f64], n: usize, normalization: Normalization) {
    match normalization {
        Normalization::RowL2 => {
            for row in g.chunks_mut(n) {
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    row.iter_mut().for_each(|v| *v /= norm);
                }
            }
        }
        Normalization::MatrixL2 => {
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                g.iter_mut().for_each(|v| *v /= norm);
            }
        }
    }
}

/// `(1/n²)·Σ(a − b)²` over two `n×n` similarity matrices.
pub fn similarity_distance(a: &SimilarityMatrix, b: &SimilarityMatrix) -> Result<f64> {
    if a.gram.shape() != b.gram.shape() {
        return Err(Error::shape(
            "similarity_distance",
            format!("{:?} vs {:?}", a.gram.shape(), b.gram.shape()),
        ));
    }
    let n = a.size() as f64;
    let s: f64 = a
        .gram
        .data()
        .iter()
        .zip(b.gram.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(s / (n * n))
}

/// `map_n = Σ_c w[n,c] · mean_b(A[b,c,:,:])`, flattened.
pub fn gradcam_maps(bundle: &ActivationBundle, source: WeightSource) -> Result<GradCamMaps> {
    let (b, c, h, w) = bundle.pre_gap_map.dims4()?;
    let weight = match source {
        WeightSource::FcWeights => &bundle.fc_weight,
        WeightSource::FcWeightGrads => &bundle.fc_weight_grad,
    };
    let (n, wc) = weight.dims2()?;
    if wc != c {
        return Err(Error::shape(
            "gradcam_maps",
            format!("activation has {c} channels but weight has {wc} columns"),
        ));
    }
    let hw = h * w;
    let a = bundle.pre_gap_map.data();
    let mut mean = vec![0.0; c * hw];
    for s in 0..b {
        for (m, x) in mean.iter_mut().zip(&a[s * c * hw..(s + 1) * c * hw]) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= b as f64);
    let wd = weight.data();
    let mut maps = vec![0.0; n * hw];
    for k in 0..n {
        let row = &mut maps[k * hw..(k + 1) * hw];
        for ch in 0..c {
            let wk = wd[k * c + ch];
            for (r, m) in row.iter_mut().zip(&mean[ch * hw..(ch + 1) * hw]) {
                *r += wk * m;
            }
        }
    }
    Ok(GradCamMaps {
        maps: Tensor::new(vec![n, hw], maps)?,
    })
}

pub fn semantic_similarity(teacher: &GradCamMaps, student: &GradCamMaps) -> Result<f64> {
    semantic_similarity_with(teacher, student, Normalization::RowL2)
}

pub fn semantic_similarity_with(
    teacher: &GradCamMaps,
    student: &GradCamMaps,
    normalization: Normalization,
) -> Result<f64> {
    let (nt, ns) = (teacher.maps.shape()[0], student.maps.shape()[0]);
    if nt != ns {
        return Err(Error::shape(
            "semantic_similarity",
            format!("teacher has {nt} classes, student {ns}"),
        ));
    }
    similarity_distance(
        &SimilarityMatrix::from_rows(&teacher.maps, normalization),
        &SimilarityMatrix::from_rows(&student.maps, normalization),
    )
}

pub fn relation_similarity(teacher_feat: &Tensor, student_feat: &Tensor) -> Result<f64> {
    relation_similarity_with(teacher_feat, student_feat, Normalization::RowL2)
}

pub fn relation_similarity_with(
    teacher_feat: &Tensor,
    student_feat: &Tensor,
    normalization: Normalization,
) -> Result<f64> {
    let (bt, bs) = (teacher_feat.shape()[0], student_feat.shape()[0]);
    if bt != bs {
        return Err(Error::shape("relation_similarity", format!("batch {bt} vs {bs}")));
    }
    similarity_distance(
        &SimilarityMatrix::from_rows(teacher_feat, normalization),
        &SimilarityMatrix::from_rows(student_feat, normalization),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiswotConfig {
    pub use_semantic: bool,
    pub use_relation: bool,
    pub weight_source: WeightSource,
    pub normalization: Normalization,
}

impl Default for DiswotConfig {
    fn default() -> Self {
        DiswotConfig {
            use_semantic: true,
            use_relation: true,
            weight_source: WeightSource::FcWeights,
            normalization: Normalization::RowL2,
        }
    }
}

/// `(M_s, M_r)`; a disabled term is reported as 0.
pub fn diswot_metrics(
    teacher: &ActivationBundle,
    student: &ActivationBundle,
    cfg: &DiswotConfig,
) -> Result<(f64, f64)> {
    if !cfg.use_semantic && !cfg.use_relation {
        return Err(Error::InvalidArgument("DisWOT needs at least one of M_s and M_r".into()));
    }
    let ms = if cfg.use_semantic {
        semantic_similarity_with(
            &gradcam_maps(teacher, cfg.weight_source)?,
            &gradcam_maps(student, cfg.weight_source)?,
            cfg.normalization,
        )?
    } else {
        0.0
    };
    let mr = if cfg.use_relation {
        relation_similarity_with(&teacher.pre_gap_map, &student.pre_gap_map, cfg.normalization)?
    } else {
        0.0
    };
    Ok((ms, mr))
}

pub fn diswot_from_bundles(
    teacher: &ActivationBundle,
    student: &ActivationBundle,
    cfg: &DiswotConfig,
) -> Result<ProxyScore> {
    let (ms, mr) = diswot_metrics(teacher, student, cfg)?;
    ProxyScore::new("diswot", -(ms + mr))
}

/// Builds the student at `init`, runs one forward pass on `batch` and scores
/// it against `teacher` on the same batch.
pub fn diswot_score(
    teacher: &NetworkInstance,
    student_desc: &ArchDescriptor,
    space: &SearchSpace,
    batch: &Batch,
    init: &InitSpec,
    cfg: &DiswotConfig,
) -> Result<ProxyScore> {
    let t = teacher.activation_bundle(batch)?;
    let s = build_network(student_desc, space, init)?.activation_bundle(batch)?;
    if t.num_classes() != s.num_classes() {
        return Err(Error::shape(
            "diswot_score",
            format!("teacher has {} classes, student {}", t.num_classes(), s.num_classes()),
        ));
    }
    diswot_from_bundles(&t, &s, cfg)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CostKind {
    Params,
    Flops,
}

/// Parameter or FLOP count (single sample at the space's input size).
pub fn cost_proxy(kind: CostKind, desc: &ArchDescriptor, space: &SearchSpace) -> Result<ProxyScore> {
    let (name, v) = match kind {
        CostKind::Params => ("params", count_params(desc, space)?),
        CostKind::Flops => ("flops", count_flops(desc, space, space.default_input(1))?),
    };
    ProxyScore::new(name, v as f64)
}

/// Every proxy the toolkit can score, by its CLI/CSV name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProxyKind {
    Diswot,
    DiswotMs,
    DiswotMr,
    Nwot,
    Params,
    Flops,
    Kd(KdKind),
}

impl ProxyKind {
    pub const ALL: [ProxyKind; 14] = [
        ProxyKind::Diswot,
        ProxyKind::DiswotMs,
        ProxyKind::DiswotMr,
        ProxyKind::Nwot,
        ProxyKind::Params,
        ProxyKind::Flops,
        ProxyKind::Kd(KdKind::KdKl),
        ProxyKind::Kd(KdKind::FitNets),
        ProxyKind::Kd(KdKind::At),
        ProxyKind::Kd(KdKind::Sp),
        ProxyKind::Kd(KdKind::Cc),
        ProxyKind::Kd(KdKind::Rkd),
        ProxyKind::Kd(KdKind::Nst),
        ProxyKind::Kd(KdKind::Pkt),
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProxyKind::Diswot => "diswot",
            ProxyKind::DiswotMs => "diswot_ms",
            ProxyKind::DiswotMr => "diswot_mr",
            ProxyKind::Nwot => "nwot",
            ProxyKind::Params => "params",
            ProxyKind::Flops => "flops",
            ProxyKind::Kd(k) => k.as_str(),
        }
    }

    pub fn needs_teacher(self) -> bool {
        matches!(
            self,
            ProxyKind::Diswot | ProxyKind::DiswotMs | ProxyKind::DiswotMr | ProxyKind::Kd(_)
        )
    }

    pub fn needs_forward(self) -> bool {
        !matches!(self, ProxyKind::Params | ProxyKind::Flops)
    }
}

impl fmt::Display for ProxyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProxyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProxyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::parse(s, "unknown proxy"))
    }
}

/// Shared state for scoring many candidates on one batch: the teacher's
/// bundle is computed once.
#[derive(Clone, Debug)]
pub struct ScoringContext<'a> {
    pub space: &'a SearchSpace,
    pub batch: &'a Batch,
    pub teacher: Option<ActivationBundle>,
    pub diswot: DiswotConfig,
    pub temperature: f64,
}

impl<'a> ScoringContext<'a> {
    pub fn new(
        space: &'a SearchSpace,
        batch: &'a Batch,
        teacher: Option<&NetworkInstance>,
        diswot: DiswotConfig,
        temperature: f64,
    ) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidArgument(format!("temperature must be positive, got {temperature}")));
        }
        let teacher = teacher.map(|t| t.activation_bundle(batch)).transpose()?;
        Ok(ScoringContext {
            space,
            batch,
            teacher,
            diswot,
            temperature,
        })
    }

    fn teacher(&self, kind: ProxyKind) -> Result<&ActivationBundle> {
        self.teacher
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("proxy `{kind}` needs a teacher")))
    }

    /// Scores each of `kinds` for `desc`, building the student once.
    pub fn score_all(&self, kinds: &[ProxyKind], desc: &ArchDescriptor, init: &InitSpec) -> Result<Vec<ProxyScore>> {
        let needs_net = kinds.iter().any(|k| k.needs_forward());
        let net = needs_net.then(|| build_network(desc, self.space, init)).transpose()?;
        let wants_bundle = kinds.iter().any(|k| k.needs_teacher());
        let bundle = match (&net, wants_bundle) {
            (Some(n), true) => Some(n.activation_bundle(self.batch)?),
            _ => None,
        };
        kinds
            .iter()
            .map(|&kind| {
                let mut score = match kind {
                    ProxyKind::Params => cost_proxy(CostKind::Params, desc, self.space)?,
                    ProxyKind::Flops => cost_proxy(CostKind::Flops, desc, self.space)?,
                    ProxyKind::Nwot => nwot_score(net.as_ref().expect("built"), self.batch)?,
                    ProxyKind::Diswot | ProxyKind::DiswotMs | ProxyKind::DiswotMr => {
                        let cfg = DiswotConfig {
                            use_semantic: kind != ProxyKind::DiswotMr,
                            use_relation: kind != ProxyKind::DiswotMs,
                            ..self.diswot
                        };
                        diswot_from_bundles(self.teacher(kind)?, bundle.as_ref().expect("bundle"), &cfg)?
                    }
                    ProxyKind::Kd(k) => {
                        kd_distance(k, self.teacher(kind)?, bundle.as_ref().expect("bundle"), self.temperature)?
                    }
                };
                score.proxy_name = kind.name().to_string();
                Ok(score)
            })
            .collect()
    }

    pub fn score(&self, kind: ProxyKind, desc: &ArchDescriptor, init: &InitSpec) -> Result<ProxyScore> {
        Ok(self.score_all(&[kind], desc, init)?.remove(0))
    }
}
