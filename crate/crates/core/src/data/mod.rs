//! Scoring batches and CSV artifacts.
//!
//! CIFAR binary files are read record by record: one label byte (CIFAR-10)
//! or a coarse and a fine label byte (CIFAR-100, the fine label is used),
//! followed by 3072 pixel bytes laid out as R, G, B planes of 32×32 in row
//! order. Pixels are scaled to [0, 1] and standardized with the per-channel
//! constants in `config/cifar_normalization.json`.

mod csvio;

pub use csvio::{
    parse_accuracy_csv, parse_scores_csv, read_accuracy_csv, read_scores_csv, render_scores_csv, write_scores_csv,
    AccuracyTable, ScoreRow, ACCURACY_HEADER, SCORE_HEADER,
};

use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::stream_rng;
use crate::tensor::Tensor;
use crate::{Error, Result};

pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_PIXELS: usize = 3 * CIFAR_SIDE * CIFAR_SIDE;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CifarVariant {
    Cifar10,
    Cifar100,
}

impl CifarVariant {
    pub fn label_bytes(self) -> usize {
        match self {
            CifarVariant::Cifar10 => 1,
            CifarVariant::Cifar100 => 2,
        }
    }

    pub fn record_len(self) -> usize {
        self.label_bytes() + CIFAR_PIXELS
    }

    pub fn num_classes(self) -> usize {
        match self {
            CifarVariant::Cifar10 => 10,
            CifarVariant::Cifar100 => 100,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CifarVariant::Cifar10 => "cifar10",
            CifarVariant::Cifar100 => "cifar100",
        }
    }
}

impl FromStr for CifarVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cifar10" => Ok(CifarVariant::Cifar10),
            "cifar100" => Ok(CifarVariant::Cifar100),
            _ => Err(Error::parse(s, "expected cifar10 or cifar100")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
pub struct ChannelStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

#[derive(Debug, Deserialize)]
struct NormalizationConfig {
    cifar10: ChannelStats,
    cifar100: ChannelStats,
}

const NORMALIZATION_JSON: &str = include_str!("../../config/cifar_normalization.json");

pub fn channel_stats(variant: CifarVariant) -> ChannelStats {
    static CONFIG: OnceLock<NormalizationConfig> = OnceLock::new();
    let cfg = CONFIG.get_or_init(|| serde_json::from_str(NORMALIZATION_JSON).expect("bundled normalization config"));
    match variant {
        CifarVariant::Cifar10 => cfg.cifar10,
        CifarVariant::Cifar100 => cfg.cifar100,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    CifarFile { path: String, variant: CifarVariant },
    Synthetic { seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    images: Tensor,
    labels: Vec<usize>,
    provenance: Provenance,
}

impl Batch {
    pub fn new(images: Tensor, labels: Vec<usize>, provenance: Provenance) -> Result<Self> {
        let (b, _, _, _) = images.dims4()?;
        if b < 2 {
            return Err(Error::Data(format!("a batch needs at least 2 samples, got {b}")));
        }
        if labels.len() != b {
            return Err(Error::Data(format!("{} labels for {b} images", labels.len())));
        }
        if !images.is_finite() {
            return Err(Error::Data("batch images contain non-finite values".into()));
        }
        Ok(Batch {
            images,
            labels,
            provenance,
        })
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// One decoded record: label and standardized pixels in C, H, W order.
#[derive(Clone, Debug, PartialEq)]
pub struct CifarRecord {
    pub label: usize,
    pub pixels: Vec<f64>,
}

/// Number of whole records in `bytes`; errors on a trailing partial record.
pub fn cifar_record_count(bytes: &[u8], variant: CifarVariant) -> Result<usize> {
    let rec = variant.record_len();
    if bytes.is_empty() {
        return Err(Error::Data("CIFAR file is empty".into()));
    }
    if bytes.len() % rec != 0 {
        return Err(Error::Data(format!(
            "file length {} is not a multiple of the {} record size {rec}",
            bytes.len(),
            variant.as_str()
        )));
    }
    Ok(bytes.len() / rec)
}

/// Decodes record `index` of a CIFAR binary buffer.
pub fn decode_cifar_record(bytes: &[u8], variant: CifarVariant, index: usize) -> Result<CifarRecord> {
    let count = cifar_record_count(bytes, variant)?;
    if index >= count {
        return Err(Error::Data(format!("record {index} out of range ({count} records)")));
    }
    let rec = &bytes[index * variant.record_len()..(index + 1) * variant.record_len()];
    let label = rec[variant.label_bytes() - 1] as usize;
    if label >= variant.num_classes() {
        return Err(Error::Data(format!(
            "record {index} has label {label}, outside the {} classes of {}",
            variant.num_classes(),
            variant.as_str()
        )));
    }
    let stats = channel_stats(variant);
    let plane = CIFAR_SIDE * CIFAR_SIDE;
    let pixels = rec[variant.label_bytes()..]
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let c = i / plane;
            (v as f64 / 255.0 - stats.mean[c]) / stats.std[c]
        })
        .collect();
    Ok(CifarRecord { label, pixels })
}

/// Draws `batch_size` records without replacement from an in-memory file.
pub fn cifar_batch_from_bytes<R: Rng + ?Sized>(
    bytes: &[u8],
    variant: CifarVariant,
    batch_size: usize,
    rng: &mut R,
    provenance: Provenance,
) -> Result<Batch> {
    let count = cifar_record_count(bytes, variant)?;
    if batch_size > count {
        return Err(Error::Data(format!("batch size {batch_size} exceeds the {count} records in the file")));
    }
    if batch_size < 2 {
        return Err(Error::Data(format!("a batch needs at least 2 samples, got {batch_size}")));
    }
    let mut data = Vec::with_capacity(batch_size * CIFAR_PIXELS);
    let mut labels = Vec::with_capacity(batch_size);
    for i in index::sample(rng, count, batch_size) {
        let r = decode_cifar_record(bytes, variant, i)?;
        labels.push(r.label);
        data.extend(r.pixels);
    }
    let images = Tensor::new(vec![batch_size, 3, CIFAR_SIDE, CIFAR_SIDE], data)?;
    Batch::new(images, labels, provenance)
}

pub fn load_cifar_batch<R: Rng + ?Sized>(
    path: &Path,
    variant: CifarVariant,
    batch_size: usize,
    rng: &mut R,
) -> Result<Batch> {
    let bytes = std::fs::read(path)?;
    let provenance = Provenance::CifarFile {
        path: path.display().to_string(),
        variant,
    };
    cifar_batch_from_bytes(&bytes, variant, batch_size, rng, provenance)
}

/// Standard-normal images and uniform labels from stream 0 of `seed`.
pub fn synth_batch(
    batch_size: usize,
    channels: usize,
    height: usize,
    width: usize,
    n_classes: usize,
    seed: u64,
) -> Result<Batch> {
    if batch_size < 2 {
        return Err(Error::Data(format!("a batch needs at least 2 samples, got {batch_size}")));
    }
    if n_classes == 0 || channels == 0 || height == 0 || width == 0 {
        return Err(Error::InvalidArgument("synthetic batch extents must be positive".into()));
    }
    let mut rng = stream_rng(seed, 0);
    let n = batch_size * channels * height * width;
    let data: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let labels = (0..batch_size).map(|_| rng.random_range(0..n_classes)).collect();
    let images = Tensor::new(vec![batch_size, channels, height, width], data)?;
    Batch::new(images, labels, Provenance::Synthetic { seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(variant: CifarVariant) -> Vec<u8> {
        let mut out = Vec::new();
        for r in 0..2u8 {
            if variant == CifarVariant::Cifar100 {
                out.push(7);
            }
            out.push(r + 3);
            out.extend((0..CIFAR_PIXELS).map(|i| ((i * 7 + r as usize * 11) % 256) as u8));
        }
        out
    }

    #[test]
    fn decodes_first_pixel() {
        for variant in [CifarVariant::Cifar10, CifarVariant::Cifar100] {
            let bytes = fixture(variant);
            let s = channel_stats(variant);
            let r0 = decode_cifar_record(&bytes, variant, 0).unwrap();
            assert_eq!(r0.label, 3);
            assert_eq!(r0.pixels[0], (0.0 / 255.0 - s.mean[0]) / s.std[0]);
            let r1 = decode_cifar_record(&bytes, variant, 1).unwrap();
            assert_eq!(r1.label, 4);
            assert_eq!(r1.pixels[0], (11.0 / 255.0 - s.mean[0]) / s.std[0]);
            // first green pixel
            let g = (1024 * 7) % 256;
            assert_eq!(r0.pixels[1024], (g as f64 / 255.0 - s.mean[1]) / s.std[1]);
        }
    }

    #[test]
    fn truncated_and_oversized_requests_fail() {
        let mut bytes = fixture(CifarVariant::Cifar10);
        let mut rng = stream_rng(0, 0);
        assert!(cifar_batch_from_bytes(&bytes, CifarVariant::Cifar10, 3, &mut rng, Provenance::Synthetic { seed: 0 }).is_err());
        bytes.pop();
        assert!(cifar_record_count(&bytes, CifarVariant::Cifar10).is_err());
        assert!(cifar_record_count(&[], CifarVariant::Cifar10).is_err());
    }

    #[test]
    fn file_batches_are_seeded() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.bin");
        std::fs::write(&path, fixture(CifarVariant::Cifar100)).unwrap();
        let a = load_cifar_batch(&path, CifarVariant::Cifar100, 2, &mut stream_rng(5, 0)).unwrap();
        let b = load_cifar_batch(&path, CifarVariant::Cifar100, 2, &mut stream_rng(5, 0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.images().shape(), &[2, 3, 32, 32]);
    }

    #[test]
    fn synthetic_batches() {
        assert_eq!(synth_batch(4, 3, 8, 8, 10, 1).unwrap(), synth_batch(4, 3, 8, 8, 10, 1).unwrap());
        assert_ne!(synth_batch(4, 3, 8, 8, 10, 1).unwrap(), synth_batch(4, 3, 8, 8, 10, 2).unwrap());
        assert!(synth_batch(1, 3, 8, 8, 10, 1).is_err());

        let b = synth_batch(10_000, 1, 1, 1, 7, 3).unwrap();
        assert!(b.labels().iter().all(|&l| l < 7));

        let b = synth_batch(1000, 1, 10, 10, 2, 4).unwrap();
        let n = b.images().len() as f64;
        let mean = b.images().data().iter().sum::<f64>() / n;
        assert!(mean.abs() < 3.0 / n.sqrt(), "{mean}");
    }
}
