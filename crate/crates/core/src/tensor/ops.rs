use super::Tensor;
use crate::{Error, Result};

pub fn relu(t: &Tensor) -> Tensor {
    t.map(|x| x.max(0.0))
}

/// Per-channel standardization with batch statistics (biased variance), then
/// the affine `gamma`, `beta`.
pub fn batchnorm_batchstats(t: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
    let (b, c, h, w) = t.dims4()?;
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::shape(
            "batchnorm",
            format!("{c} channels but gamma {:?} / beta {:?}", gamma.shape(), beta.shape()),
        ));
    }
    let count = b * h * w;
    if count < 2 {
        return Err(Error::shape("batchnorm", "variance is undefined for a single value per channel"));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("batchnorm eps must be positive, got {eps}")));
    }
    let plane = h * w;
    let x = t.data();
    let mut out = vec![0.0; x.len()];
    for ch in 0..c {
        let planes = || (0..b).map(move |s| (s * c + ch) * plane);
        let mut sum = 0.0;
        for start in planes() {
            sum += x[start..start + plane].iter().sum::<f64>();
        }
        let mean = sum / count as f64;
        let mut sq = 0.0;
        for start in planes() {
            sq += x[start..start + plane].iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
        }
        let var = sq / count as f64;
        let scale = gamma.data()[ch] / (var + eps).sqrt();
        let shift = beta.data()[ch];
        for start in planes() {
            for i in start..start + plane {
                out[i] = (x[i] - mean) * scale + shift;
            }
        }
    }
    Tensor::new(t.shape().to_vec(), out)
}

pub fn global_avg_pool(t: &Tensor) -> Result<Tensor> {
    let (b, c, h, w) = t.dims4()?;
    let plane = h * w;
    let data = t
        .data()
        .chunks_exact(plane)
        .map(|p| p.iter().sum::<f64>() / plane as f64)
        .collect();
    Tensor::new(vec![b, c], data)
}

/// `features · weightᵀ (+ bias)`.
pub fn linear(features: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let (b, c) = features.dims2()?;
    let (n, wc) = weight.dims2()?;
    if wc != c {
        return Err(Error::shape("linear", format!("features have {c} columns, weight expects {wc}")));
    }
    if let Some(bias) = bias {
        if bias.shape() != [n] {
            return Err(Error::shape("linear", format!("bias {:?} for {n} outputs", bias.shape())));
        }
    }
    let mut out = Vec::with_capacity(b * n);
    for i in 0..b {
        let f = features.row(i);
        for j in 0..n {
            let dot: f64 = f.iter().zip(weight.row(j)).map(|(x, y)| x * y).sum();
            out.push(dot + bias.map_or(0.0, |bb| bb.data()[j]));
        }
    }
    Tensor::new(vec![b, n], out)
}

pub fn residual_add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::shape("residual_add", format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Tensor::new(
        a.shape().to_vec(),
        a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect(),
    )
}

/// Square average pooling. With `count_include_pad = false` each window is
/// divided by the number of in-bounds positions.
pub fn avg_pool2d(
    t: &Tensor,
    kernel: usize,
    stride: usize,
    padding: usize,
    count_include_pad: bool,
) -> Result<Tensor> {
    let (b, c, h, w) = t.dims4()?;
    if kernel == 0 || stride == 0 || h + 2 * padding < kernel || w + 2 * padding < kernel {
        return Err(Error::shape("avg_pool2d", format!("kernel {kernel} on {h}x{w} with padding {padding}")));
    }
    let oh = (h + 2 * padding - kernel) / stride + 1;
    let ow = (w + 2 * padding - kernel) / stride + 1;
    let x = t.data();
    let mut out = Vec::with_capacity(b * c * oh * ow);
    for plane in x.chunks_exact(h * w) {
        for i in 0..oh {
            for j in 0..ow {
                let mut sum = 0.0;
                let mut n = 0usize;
                for ki in 0..kernel {
                    for kj in 0..kernel {
                        let y = (i * stride + ki) as isize - padding as isize;
                        let xx = (j * stride + kj) as isize - padding as isize;
                        if y >= 0 && xx >= 0 && (y as usize) < h && (xx as usize) < w {
                            sum += plane[y as usize * w + xx as usize];
                            n += 1;
                        }
                    }
                }
                let denom = if count_include_pad { kernel * kernel } else { n.max(1) };
                out.push(sum / denom as f64);
            }
        }
    }
    Tensor::new(vec![b, c, oh, ow], out)
}

/// Row-wise softmax of `logits / temperature`, max-subtracted.
pub fn softmax_rows(logits: &Tensor, temperature: f64) -> Result<Tensor> {
    let lsm = log_softmax_rows(logits, temperature)?;
    Ok(lsm.map(f64::exp))
}

pub fn log_softmax_rows(logits: &Tensor, temperature: f64) -> Result<Tensor> {
    let (b, n) = logits.dims2()?;
    if !(temperature > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {temperature}")));
    }
    let mut out = Vec::with_capacity(b * n);
    for i in 0..b {
        let row: Vec<f64> = logits.row(i).iter().map(|z| z / temperature).collect();
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        out.extend(row.iter().map(|z| z - lse));
    }
    Tensor::new(vec![b, n], out)
}

fn check_labels(op: &'static str, labels: &[usize], b: usize, n: usize) -> Result<()> {
    if labels.len() != b {
        return Err(Error::shape(op, format!("{b} rows but {} labels", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= n) {
        return Err(Error::InvalidArgument(format!("label {bad} out of range for {n} classes")));
    }
    Ok(())
}

/// Mean over the batch of `-log softmax(logits)[label]`.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    let (b, n) = logits.dims2()?;
    check_labels("softmax_cross_entropy", labels, b, n)?;
    let lsm = log_softmax_rows(logits, 1.0)?;
    let total: f64 = labels.iter().enumerate().map(|(i, &l)| -lsm.row(i)[l]).sum();
    Ok(total / b as f64)
}

/// Gradient of mean cross-entropy with respect to the final linear weight:
/// `(1/B) · (softmax(logits) − onehot(labels))ᵀ · features`.
pub fn fc_weight_grad(features: &Tensor, logits: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let (b, c) = features.dims2()?;
    let (lb, n) = logits.dims2()?;
    if lb != b {
        return Err(Error::shape("fc_weight_grad", format!("{b} feature rows but {lb} logit rows")));
    }
    check_labels("fc_weight_grad", labels, b, n)?;
    let probs = softmax_rows(logits, 1.0)?;
    let mut grad = vec![0.0; n * c];
    for i in 0..b {
        let f = features.row(i);
        for (j, &p) in probs.row(i).iter().enumerate() {
            let delta = p - if labels[i] == j { 1.0 } else { 0.0 };
            if delta == 0.0 {
                continue;
            }
            for (g, x) in grad[j * c..(j + 1) * c].iter_mut().zip(f) {
                *g += delta * x;
            }
        }
    }
    let inv = 1.0 / b as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    Tensor::new(vec![n, c], grad)
}
