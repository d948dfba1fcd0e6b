//! Seeded, randomly initialized networks for every search space.
//!
//! Norm layers always use batch statistics: the networks are never trained,
//! so there are no running statistics to fall back on.

use super::{
    ArchDescriptor, BlockKind, Nb201Cell, Nb201Op, SearchSpace, NB201_STAGE_CHANNELS, S0_STAGE_CHANNELS,
    S0_STAGE_STRIDES, S0_STEM_CHANNELS,
};
use crate::data::Batch;
use crate::tensor::{
    avg_pool2d, batchnorm_batchstats, conv2d, fc_weight_grad, global_avg_pool, init_tensor, linear, relu,
    residual_add, InitSpec, Tensor,
};
use crate::{Error, Result};

const NORM_EPS: f64 = 1e-5;

/// Receives every post-ReLU activation in forward order.
pub trait ActivationObserver {
    fn on_relu(&mut self, activation: &Tensor);
}

impl ActivationObserver for () {
    fn on_relu(&mut self, _: &Tensor) {}
}

#[derive(Clone, Debug)]
struct Conv {
    weight: Tensor,
    stride: usize,
    padding: usize,
}

impl Conv {
    fn apply(&self, x: &Tensor) -> Result<Tensor> {
        conv2d(x, &self.weight, self.stride, self.padding)
    }
}

#[derive(Clone, Debug)]
struct Norm {
    gamma: Tensor,
    beta: Tensor,
}

impl Norm {
    fn new(c: usize) -> Self {
        Norm {
            gamma: Tensor::full(&[c], 1.0),
            beta: Tensor::zeros(&[c]),
        }
    }

    fn apply(&self, x: &Tensor) -> Result<Tensor> {
        batchnorm_batchstats(x, &self.gamma, &self.beta, NORM_EPS)
    }
}

#[derive(Clone, Debug)]
struct ConvNorm {
    conv: Conv,
    norm: Norm,
}

impl ConvNorm {
    fn apply(&self, x: &Tensor) -> Result<Tensor> {
        self.norm.apply(&self.conv.apply(x)?)
    }
}

#[derive(Clone, Debug)]
enum Unit {
    /// conv-norm-relu-conv-norm, plus projection shortcut when shapes change,
    /// then relu. Bottlenecks use 1x1 / kxk / 1x1 on the main path.
    Residual {
        main: Vec<ConvNorm>,
        shortcut: Option<ConvNorm>,
    },
    /// NB201 cell; conv edges carry their relu-conv-norm weights.
    Cell {
        ops: [Nb201Op; 6],
        convs: Vec<Option<ConvNorm>>,
    },
    /// NB201 stage transition: two relu-conv-norm layers (the first with
    /// stride 2) plus an avg-pool + 1x1 conv shortcut.
    Reduction {
        a: ConvNorm,
        b: ConvNorm,
        shortcut: Conv,
    },
}

#[derive(Clone, Debug)]
pub struct NetworkInstance {
    descriptor: ArchDescriptor,
    init: InitSpec,
    num_classes: usize,
    input_channels: usize,
    stem: ConvNorm,
    stem_relu: bool,
    units: Vec<Unit>,
    head_norm: Option<Norm>,
    fc_weight: Tensor,
    fc_bias: Tensor,
}

#[derive(Clone, Debug)]
pub struct ForwardPass {
    pub pre_gap_map: Tensor,
    pub features: Tensor,
    pub logits: Tensor,
}

/// Everything the similarity metrics need from one forward pass plus the
/// analytic gradient of the classifier weight.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationBundle {
    /// `[B, C, H, W]`, the map fed to global average pooling.
    pub pre_gap_map: Tensor,
    /// `[B, C]`, after global average pooling.
    pub penultimate_features: Tensor,
    /// `[B, N]`.
    pub logits: Tensor,
    /// `[N, C]`.
    pub fc_weight: Tensor,
    /// `[N, C]`, gradient of mean cross-entropy w.r.t. `fc_weight`.
    pub fc_weight_grad: Tensor,
}

impl ActivationBundle {
    pub fn batch_size(&self) -> usize {
        self.pre_gap_map.shape()[0]
    }

    pub fn num_classes(&self) -> usize {
        self.fc_weight.shape()[0]
    }
}

struct WeightFactory<'a> {
    init: &'a InitSpec,
    stream: u64,
}

impl WeightFactory<'_> {
    fn draw(&mut self, shape: &[usize]) -> Tensor {
        let t = init_tensor(shape, self.init, self.stream);
        self.stream += 1;
        t
    }

    fn conv(&mut self, cin: usize, cout: usize, k: usize, stride: usize) -> Conv {
        Conv {
            weight: self.draw(&[cout, cin, k, k]),
            stride,
            padding: k / 2,
        }
    }

    fn conv_norm(&mut self, cin: usize, cout: usize, k: usize, stride: usize) -> ConvNorm {
        ConvNorm {
            conv: self.conv(cin, cout, k, stride),
            norm: Norm::new(cout),
        }
    }

    fn residual(&mut self, block: BlockKind, cin: usize, cout: usize, k: usize, stride: usize) -> Unit {
        let main = match block {
            BlockKind::Basic => vec![self.conv_norm(cin, cout, k, stride), self.conv_norm(cout, cout, k, 1)],
            BlockKind::Bottleneck => {
                let mid = cout / 4;
                vec![
                    self.conv_norm(cin, mid, 1, 1),
                    self.conv_norm(mid, mid, k, stride),
                    self.conv_norm(mid, cout, 1, 1),
                ]
            }
        };
        let shortcut = (stride != 1 || cin != cout).then(|| self.conv_norm(cin, cout, 1, stride));
        Unit::Residual { main, shortcut }
    }
}

/// Builds `desc` at random initialization. Depths outside the searched set
/// are accepted so deeper teachers of the same family can be built.
pub fn build_network(desc: &ArchDescriptor, space: &SearchSpace, init: &InitSpec) -> Result<NetworkInstance> {
    space.validate_teacher(desc)?;
    let mut f = WeightFactory { init, stream: 0 };
    let cin0 = space.input_channels;
    let mut units = Vec::new();
    let (stem, stem_relu, head_norm, last) = match desc {
        ArchDescriptor::S0 { depths } => {
            let stem = f.conv_norm(cin0, S0_STEM_CHANNELS, 3, 1);
            let mut cin = S0_STEM_CHANNELS;
            for ((&d, &cout), &stride) in depths.iter().zip(&S0_STAGE_CHANNELS).zip(&S0_STAGE_STRIDES) {
                for i in 0..d {
                    units.push(f.residual(BlockKind::Basic, cin, cout, 3, if i == 0 { stride } else { 1 }));
                    cin = cout;
                }
            }
            (stem, true, None, cin)
        }
        ArchDescriptor::Nb201(cell) => {
            let stem = f.conv_norm(cin0, NB201_STAGE_CHANNELS[0], 3, 1);
            for (stage, &c) in NB201_STAGE_CHANNELS.iter().enumerate() {
                if stage > 0 {
                    let cin = NB201_STAGE_CHANNELS[stage - 1];
                    units.push(Unit::Reduction {
                        a: f.conv_norm(cin, c, 3, 2),
                        b: f.conv_norm(c, c, 3, 1),
                        shortcut: f.conv(cin, c, 1, 1),
                    });
                }
                for _ in 0..space.cells_per_stage {
                    units.push(build_cell(&mut f, cell, c));
                }
            }
            let last = NB201_STAGE_CHANNELS[2];
            (stem, false, Some(Norm::new(last)), last)
        }
        ArchDescriptor::S2(cfg) => {
            let t = space
                .s2
                .as_ref()
                .ok_or_else(|| Error::InvalidArch(format!("{} has no S2 template", space.kind)))?;
            let stem = f.conv_norm(cin0, cfg.stem_channels, t.stem_kernel, t.stem_stride);
            let mut cin = cfg.stem_channels;
            for st in &cfg.stages {
                for i in 0..st.depth {
                    let s = if i == 0 { st.stride } else { 1 };
                    units.push(f.residual(st.block, cin, st.channels, st.kernel, s));
                    cin = st.channels;
                }
            }
            (stem, true, None, cin)
        }
    };
    let fc_weight = f.draw(&[space.num_classes, last]);
    Ok(NetworkInstance {
        descriptor: desc.clone(),
        init: *init,
        num_classes: space.num_classes,
        input_channels: cin0,
        stem,
        stem_relu,
        units,
        head_norm,
        fc_weight,
        fc_bias: Tensor::zeros(&[space.num_classes]),
    })
}

fn build_cell(f: &mut WeightFactory<'_>, cell: &Nb201Cell, c: usize) -> Unit {
    let convs = cell
        .ops
        .iter()
        .map(|op| op.conv_kernel().map(|k| f.conv_norm(c, c, k, 1)))
        .collect();
    Unit::Cell { ops: cell.ops, convs }
}

fn observed_relu(x: &Tensor, obs: &mut dyn ActivationObserver) -> Tensor {
    let y = relu(x);
    obs.on_relu(&y);
    y
}

impl Unit {
    fn forward(&self, x: &Tensor, obs: &mut dyn ActivationObserver) -> Result<Tensor> {
        match self {
            Unit::Residual { main, shortcut } => {
                let mut h = x.clone();
                for (i, layer) in main.iter().enumerate() {
                    h = layer.apply(&h)?;
                    if i + 1 < main.len() {
                        h = observed_relu(&h, obs);
                    }
                }
                let skip = match shortcut {
                    Some(p) => p.apply(x)?,
                    None => x.clone(),
                };
                Ok(observed_relu(&residual_add(&h, &skip)?, obs))
            }
            Unit::Cell { ops, convs } => {
                let mut nodes: Vec<Tensor> = vec![x.clone()];
                for to in 1..=3 {
                    let mut acc: Option<Tensor> = None;
                    for from in 0..to {
                        let e = Nb201Cell::edge_index(to, from);
                        let src = &nodes[from];
                        let out = match ops[e] {
                            Nb201Op::None => continue,
                            Nb201Op::SkipConnect => src.clone(),
                            Nb201Op::AvgPool3x3 => avg_pool2d(src, 3, 1, 1, false)?,
                            Nb201Op::NorConv1x1 | Nb201Op::NorConv3x3 => {
                                let cn = convs[e].as_ref().expect("conv edge has weights");
                                cn.apply(&observed_relu(src, obs))?
                            }
                        };
                        acc = Some(match acc {
                            Some(a) => residual_add(&a, &out)?,
                            None => out,
                        });
                    }
                    nodes.push(acc.unwrap_or_else(|| Tensor::zeros(x.shape())));
                }
                Ok(nodes.pop().expect("node 3"))
            }
            Unit::Reduction { a, b, shortcut } => {
                let h = a.apply(&observed_relu(x, obs))?;
                let h = b.apply(&observed_relu(&h, obs))?;
                let skip = shortcut.apply(&avg_pool2d(x, 2, 2, 0, true)?)?;
                residual_add(&h, &skip)
            }
        }
    }

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        match self {
            Unit::Residual { main, shortcut } => {
                for (i, cn) in main.iter().enumerate() {
                    visit_conv_norm(&format!("{prefix}.main.{i}"), cn, f);
                }
                if let Some(p) = shortcut {
                    visit_conv_norm(&format!("{prefix}.shortcut"), p, f);
                }
            }
            Unit::Cell { convs, .. } => {
                for (e, cn) in convs.iter().enumerate() {
                    if let Some(cn) = cn {
                        visit_conv_norm(&format!("{prefix}.edge{e}"), cn, f);
                    }
                }
            }
            Unit::Reduction { a, b, shortcut } => {
                visit_conv_norm(&format!("{prefix}.a"), a, f);
                visit_conv_norm(&format!("{prefix}.b"), b, f);
                f(&format!("{prefix}.shortcut.weight"), &shortcut.weight);
            }
        }
    }
}

fn visit_conv_norm(prefix: &str, cn: &ConvNorm, f: &mut dyn FnMut(&str, &Tensor)) {
    f(&format!("{prefix}.conv.weight"), &cn.conv.weight);
    f(&format!("{prefix}.norm.gamma"), &cn.norm.gamma);
    f(&format!("{prefix}.norm.beta"), &cn.norm.beta);
}

impl NetworkInstance {
    pub fn descriptor(&self) -> &ArchDescriptor {
        &self.descriptor
    }

    pub fn init(&self) -> &InitSpec {
        &self.init
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn fc_weight(&self) -> &Tensor {
        &self.fc_weight
    }

    /// Calls `f` on every trainable tensor with a stable dotted name.
    pub fn visit_weights(&self, mut f: impl FnMut(&str, &Tensor)) {
        visit_conv_norm("stem", &self.stem, &mut f);
        for (i, u) in self.units.iter().enumerate() {
            u.visit(&format!("units.{i}"), &mut f);
        }
        if let Some(n) = &self.head_norm {
            f("head.norm.gamma", &n.gamma);
            f("head.norm.beta", &n.beta);
        }
        f("fc.weight", &self.fc_weight);
        f("fc.bias", &self.fc_bias);
    }

    /// Sum of element counts over all trainable tensors.
    pub fn parameter_count(&self) -> u64 {
        let mut n = 0u64;
        self.visit_weights(|_, t| n += t.len() as u64);
        n
    }

    pub fn forward(&self, images: &Tensor, obs: &mut dyn ActivationObserver) -> Result<ForwardPass> {
        let (_, c, _, _) = images.dims4()?;
        if c != self.input_channels {
            return Err(Error::shape(
                "forward",
                format!("network expects {} input channels, got {c}", self.input_channels),
            ));
        }
        let mut h = self.stem.apply(images)?;
        if self.stem_relu {
            h = observed_relu(&h, obs);
        }
        for u in &self.units {
            h = u.forward(&h, obs)?;
        }
        if let Some(n) = &self.head_norm {
            h = observed_relu(&n.apply(&h)?, obs);
        }
        let features = global_avg_pool(&h)?;
        let logits = linear(&features, &self.fc_weight, Some(&self.fc_bias))?;
        Ok(ForwardPass {
            pre_gap_map: h,
            features,
            logits,
        })
    }

    pub fn activation_bundle(&self, batch: &Batch) -> Result<ActivationBundle> {
        self.activation_bundle_observed(batch, &mut ())
    }

    /// One forward pass and the analytic classifier gradient.
    pub fn activation_bundle_observed(
        &self,
        batch: &Batch,
        obs: &mut dyn ActivationObserver,
    ) -> Result<ActivationBundle> {
        if let Some(&bad) = batch.labels().iter().find(|&&l| l >= self.num_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for a {}-class network",
                self.num_classes
            )));
        }
        let pass = self.forward(batch.images(), obs)?;
        let grad = fc_weight_grad(&pass.features, &pass.logits, batch.labels())?;
        Ok(ActivationBundle {
            pre_gap_map: pass.pre_gap_map,
            penultimate_features: pass.features,
            logits: pass.logits,
            fc_weight: self.fc_weight.clone(),
            fc_weight_grad: grad,
        })
    }
}
