use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::rng::stream_rng;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitScheme {
    /// Zero-mean normal, std `sqrt(2 / fan_in)`.
    Kaiming,
    /// Zero-mean normal with a fixed std.
    Gaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub scheme: InitScheme,
    pub gaussian_std: f64,
    pub seed: u64,
}

impl InitSpec {
    pub fn kaiming(seed: u64) -> Self {
        InitSpec {
            scheme: InitScheme::Kaiming,
            gaussian_std: 1.0,
            seed,
        }
    }

    pub fn gaussian(std: f64, seed: u64) -> Result<Self> {
        if !(std > 0.0 && std.is_finite()) {
            return Err(Error::InvalidArgument(format!("gaussian std must be positive, got {std}")));
        }
        Ok(InitSpec {
            scheme: InitScheme::Gaussian,
            gaussian_std: std,
            seed,
        })
    }

    pub fn with_seed(self, seed: u64) -> Self {
        InitSpec { seed, ..self }
    }
}

/// Draws a weight tensor from stream `stream_id` of `spec.seed`.
///
/// Fan-in is the product of all extents after the first (the whole extent for
/// rank-1 shapes), matching `[out, in, k, k]` conv and `[out, in]` linear
/// weights.
pub fn init_tensor(shape: &[usize], spec: &InitSpec, stream_id: u64) -> Tensor {
    let fan_in: usize = if shape.len() > 1 {
        shape[1..].iter().product()
    } else {
        shape[0]
    };
    let std = match spec.scheme {
        InitScheme::Kaiming => (2.0 / fan_in as f64).sqrt(),
        InitScheme::Gaussian => spec.gaussian_std,
    };
    let mut rng = stream_rng(spec.seed, stream_id);
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            z * std
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("init_tensor shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_std(t: &Tensor) -> f64 {
        let n = t.len() as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        (t.data().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    }

    #[test]
    fn deterministic_per_stream() {
        let spec = InitSpec::kaiming(5);
        assert_eq!(init_tensor(&[4, 3, 3, 3], &spec, 2), init_tensor(&[4, 3, 3, 3], &spec, 2));
        assert_ne!(init_tensor(&[4, 3, 3, 3], &spec, 2), init_tensor(&[4, 3, 3, 3], &spec, 3));
    }

    #[test]
    fn kaiming_std_matches_fan_in() {
        // 11111 x 1 x 3 x 3 = 99999 draws with fan_in 9.
        let t = init_tensor(&[11111, 1, 3, 3], &InitSpec::kaiming(1), 0);
        let target = (2.0f64 / 9.0).sqrt();
        assert!((sample_std(&t) / target - 1.0).abs() < 0.02);
    }

    #[test]
    fn gaussian_uses_fixed_std() {
        let t = init_tensor(&[100_000], &InitSpec::gaussian(0.05, 3).unwrap(), 0);
        assert!((sample_std(&t) / 0.05 - 1.0).abs() < 0.02);
        assert!(InitSpec::gaussian(0.0, 1).is_err());
        assert!(InitSpec::gaussian(-1.0, 1).is_err());
    }
}
