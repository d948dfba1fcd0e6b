use nalgebra::DMatrix;

use super::ProxyScore;
use crate::arch::{ActivationObserver, NetworkInstance};
use crate::data::Batch;
use crate::tensor::Tensor;
use crate::{Error, Result};

pub const NWOT_EPS: f64 = 1e-6;

/// Accumulates `K[i,j]`, the number of ReLU units on which samples `i` and
/// `j` are both active or both inactive.
#[derive(Clone, Debug)]
pub struct NwotObserver {
    batch: usize,
    kernel: Vec<f64>,
    units: u64,
}

impl NwotObserver {
    pub fn new(batch: usize) -> Self {
        NwotObserver {
            batch,
            kernel: vec![0.0; batch * batch],
            units: 0,
        }
    }

    pub fn kernel(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.batch, self.batch, &self.kernel)
    }

    /// Units observed per sample so far.
    pub fn units(&self) -> u64 {
        self.units
    }

    /// Adds binary codes directly, one row per sample.
    pub fn add_codes(&mut self, codes: &[Vec<bool>]) {
        assert_eq!(codes.len(), self.batch);
        let packed: Vec<Vec<u64>> = codes
            .iter()
            .map(|c| {
                let mut words = vec![0u64; c.len().div_ceil(64)];
                for (i, &bit) in c.iter().enumerate() {
                    if bit {
                        words[i / 64] |= 1 << (i % 64);
                    }
                }
                words
            })
            .collect();
        let u = codes.first().map_or(0, |c| c.len());
        self.accumulate(&packed, u);
    }

    fn accumulate(&mut self, packed: &[Vec<u64>], units: usize) {
        let b = self.batch;
        for i in 0..b {
            for j in i..b {
                let ham: u32 = packed[i].iter().zip(&packed[j]).map(|(x, y)| (x ^ y).count_ones()).sum();
                let agree = (units - ham as usize) as f64;
                self.kernel[i * b + j] += agree;
                if i != j {
                    self.kernel[j * b + i] += agree;
                }
            }
        }
        self.units += units as u64;
    }
}

impl ActivationObserver for NwotObserver {
    fn on_relu(&mut self, activation: &Tensor) {
        let b = activation.shape()[0];
        debug_assert_eq!(b, self.batch);
        let u = activation.len() / b;
        let packed: Vec<Vec<u64>> = (0..b)
            .map(|s| {
                let row = &activation.data()[s * u..(s + 1) * u];
                row.chunks(64)
                    .map(|chunk| {
                        chunk
                            .iter()
                            .enumerate()
                            .fold(0u64, |w, (i, &x)| if x > 0.0 { w | (1 << i) } else { w })
                    })
                    .collect()
            })
            .collect();
        self.accumulate(&packed, u);
    }
}

/// `ln|det(K + eps·I)|` from the LU factors, summed in log space.
pub fn logdet_regularized(kernel: &DMatrix<f64>, eps: f64) -> Result<f64> {
    let n = kernel.nrows();
    let k = kernel + DMatrix::identity(n, n) * eps;
    let lu = k.lu();
    let u = lu.u();
    let mut s = 0.0;
    for i in 0..n {
        let d = u[(i, i)].abs();
        if d == 0.0 || !d.is_finite() {
            return Err(Error::InvalidArgument("NWOT kernel is numerically singular".into()));
        }
        s += d.ln();
    }
    Ok(s)
}

pub fn nwot_score(net: &NetworkInstance, batch: &Batch) -> Result<ProxyScore> {
    let mut obs = NwotObserver::new(batch.len());
    net.forward(batch.images(), &mut obs)?;
    ProxyScore::new("nwot", logdet_regularized(&obs.kernel(), NWOT_EPS)?)
}
