//! Distillation losses over caller-provided activations.
//!
//! `loss_semantic` and `loss_relation` reuse the proxy distance kernel, so a
//! loss and the matching proxy metric agree to the last bit on equal inputs.

use serde::{Deserialize, Serialize};

use crate::proxy::{similarity_distance, SimilarityMatrix};
use crate::tensor::{log_softmax_rows, Tensor};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdLossConfig {
    pub temperature: f64,
    pub alpha: f64,
}

impl KdLossConfig {
    pub fn new(temperature: f64, alpha: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidArgument(format!("temperature must be positive, got {temperature}")));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be non-negative, got {alpha}")));
        }
        Ok(KdLossConfig { temperature, alpha })
    }
}

/// `α·ρ²·mean_b CE(softmax(z_T/ρ), softmax(z_S/ρ))`.
pub fn loss_kd_kl(z_t: &Tensor, z_s: &Tensor, cfg: &KdLossConfig) -> Result<f64> {
    if z_t.shape() != z_s.shape() {
        return Err(Error::shape("loss_kd_kl", format!("{:?} vs {:?}", z_t.shape(), z_s.shape())));
    }
    let (b, _) = z_t.dims2()?;
    let lt = log_softmax_rows(z_t, cfg.temperature)?;
    let ls = log_softmax_rows(z_s, cfg.temperature)?;
    let mut ce = 0.0;
    for i in 0..b {
        ce -= lt.row(i).iter().zip(ls.row(i)).map(|(&a, &s)| a.exp() * s).sum::<f64>();
    }
    Ok(cfg.alpha * cfg.temperature * cfg.temperature * ce / b as f64)
}

pub fn loss_semantic(g_t: &SimilarityMatrix, g_s: &SimilarityMatrix) -> Result<f64> {
    similarity_distance(g_t, g_s)
}

pub fn loss_relation(a_t: &SimilarityMatrix, a_s: &SimilarityMatrix) -> Result<f64> {
    similarity_distance(a_t, a_s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiswotVariant {
    DisWot,
    DisWotDagger,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub ce: f64,
    pub kl: f64,
    pub l_ms: f64,
    pub l_mr: f64,
}

/// `ce + kl`, plus `l_ms + l_mr` for the dagger variant.
pub fn loss_diswot_total(variant: DiswotVariant, c: &LossComponents) -> f64 {
    match variant {
        DiswotVariant::DisWot => c.ce + c.kl,
        DiswotVariant::DisWotDagger => c.ce + c.kl + c.l_ms + c.l_mr,
    }
}
