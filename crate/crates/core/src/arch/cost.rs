//! Closed-form parameter, FLOP and depth accounting.
//!
//! Computed directly from the descriptor, independently of the network
//! builder; tests cross-check the two. Parameters include every conv weight,
//! the norm layers' affine `gamma`/`beta`, and the classifier weight and
//! bias. FLOPs are `2 × MACs` over convolutions and the classifier; norm,
//! activation and pooling are not counted.

use serde::{Deserialize, Serialize};

use super::{
    ArchDescriptor, BlockKind, Nb201Cell, SearchSpace, SpaceKind, NB201_STAGE_CHANNELS, S0_STAGE_CHANNELS,
    S0_STAGE_STRIDES, S0_STEM_CHANNELS,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputShape {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FlopBreakdown {
    pub conv: u64,
    pub linear: u64,
}

impl FlopBreakdown {
    pub fn total(&self) -> u64 {
        self.conv + self.linear
    }
}

fn conv_params(cin: usize, cout: usize, k: usize) -> u64 {
    (cin * cout * k * k) as u64
}

fn norm_params(c: usize) -> u64 {
    2 * c as u64
}

/// FLOPs of one convolution for a single sample.
pub fn conv_flops(cin: usize, cout: usize, k: usize, out_h: usize, out_w: usize) -> u64 {
    2 * (cin * k * k) as u64 * cout as u64 * (out_h * out_w) as u64
}

fn strided(extent: usize, stride: usize) -> usize {
    (extent - 1) / stride + 1
}

/// Running tally while walking a network's layers.
struct Tally {
    params: u64,
    flops: FlopBreakdown,
    h: usize,
    w: usize,
}

impl Tally {
    fn new(h: usize, w: usize) -> Self {
        Tally {
            params: 0,
            flops: FlopBreakdown::default(),
            h,
            w,
        }
    }

    /// Conv (+ optional norm) with "same" padding; updates the spatial size.
    fn conv(&mut self, cin: usize, cout: usize, k: usize, stride: usize, norm: bool) {
        self.h = strided(self.h, stride);
        self.w = strided(self.w, stride);
        self.params += conv_params(cin, cout, k);
        if norm {
            self.params += norm_params(cout);
        }
        self.flops.conv += conv_flops(cin, cout, k, self.h, self.w);
    }

    /// Conv evaluated at the given output size without touching the tally's
    /// spatial state (shortcut branches).
    fn side_conv(&mut self, cin: usize, cout: usize, k: usize, h: usize, w: usize, norm: bool) {
        self.params += conv_params(cin, cout, k);
        if norm {
            self.params += norm_params(cout);
        }
        self.flops.conv += conv_flops(cin, cout, k, h, w);
    }

    fn residual_block(&mut self, block: BlockKind, cin: usize, cout: usize, k: usize, stride: usize) {
        match block {
            BlockKind::Basic => {
                self.conv(cin, cout, k, stride, true);
                self.conv(cout, cout, k, 1, true);
            }
            BlockKind::Bottleneck => {
                let mid = cout / 4;
                self.conv(cin, mid, 1, 1, true);
                self.conv(mid, mid, k, stride, true);
                self.conv(mid, cout, 1, 1, true);
            }
        }
        if stride != 1 || cin != cout {
            let (h, w) = (self.h, self.w);
            self.side_conv(cin, cout, 1, h, w, true);
        }
    }

    fn classifier(&mut self, c: usize, classes: usize) {
        self.params += (c * classes + classes) as u64;
        self.flops.linear += 2 * (c * classes) as u64;
    }
}

fn tally(desc: &ArchDescriptor, space: &SearchSpace, input: InputShape) -> Result<Tally> {
    space.validate_teacher(desc)?;
    let mut t = Tally::new(input.height, input.width);
    match desc {
        ArchDescriptor::S0 { depths } => {
            t.conv(input.channels, S0_STEM_CHANNELS, 3, 1, true);
            let mut cin = S0_STEM_CHANNELS;
            for ((&d, &cout), &stride) in depths.iter().zip(&S0_STAGE_CHANNELS).zip(&S0_STAGE_STRIDES) {
                for i in 0..d {
                    let s = if i == 0 { stride } else { 1 };
                    t.residual_block(BlockKind::Basic, cin, cout, 3, s);
                    cin = cout;
                }
            }
            t.classifier(cin, space.num_classes);
        }
        ArchDescriptor::Nb201(cell) => {
            let c0 = NB201_STAGE_CHANNELS[0];
            t.conv(input.channels, c0, 3, 1, true);
            for (stage, &c) in NB201_STAGE_CHANNELS.iter().enumerate() {
                if stage > 0 {
                    let cin = NB201_STAGE_CHANNELS[stage - 1];
                    let (h, w) = (strided(t.h, 2), strided(t.w, 2));
                    t.conv(cin, c, 3, 2, true);
                    t.conv(c, c, 3, 1, true);
                    // Shortcut: 2x2 average pool then a bare 1x1 conv.
                    t.side_conv(cin, c, 1, h, w, false);
                }
                for _ in 0..space.cells_per_stage {
                    for op in cell.ops {
                        if let Some(k) = op.conv_kernel() {
                            let (h, w) = (t.h, t.w);
                            t.side_conv(c, c, k, h, w, true);
                        }
                    }
                }
            }
            let last = NB201_STAGE_CHANNELS[2];
            t.params += norm_params(last);
            t.classifier(last, space.num_classes);
        }
        ArchDescriptor::S2(cfg) => {
            let tpl = space
                .s2
                .as_ref()
                .ok_or_else(|| Error::InvalidArch(format!("{} has no S2 template", space.kind)))?;
            t.conv(input.channels, cfg.stem_channels, tpl.stem_kernel, tpl.stem_stride, true);
            let mut cin = cfg.stem_channels;
            for st in &cfg.stages {
                for i in 0..st.depth {
                    let s = if i == 0 { st.stride } else { 1 };
                    t.residual_block(st.block, cin, st.channels, st.kernel, s);
                    cin = st.channels;
                }
            }
            t.classifier(cin, space.num_classes);
        }
    }
    Ok(t)
}

pub fn count_params(desc: &ArchDescriptor, space: &SearchSpace) -> Result<u64> {
    Ok(tally(desc, space, space.default_input(1))?.params)
}

pub fn flops_breakdown(desc: &ArchDescriptor, space: &SearchSpace, input: InputShape) -> Result<FlopBreakdown> {
    let t = tally(desc, space, input)?;
    let b = input.batch as u64;
    Ok(FlopBreakdown {
        conv: t.flops.conv * b,
        linear: t.flops.linear * b,
    })
}

pub fn count_flops(desc: &ArchDescriptor, space: &SearchSpace, input: InputShape) -> Result<u64> {
    Ok(flops_breakdown(desc, space, input)?.total())
}

/// Weight layers on the main path: stem conv, block convolutions (shortcut
/// projections excluded) and the classifier. For NB201 cells the longest
/// chain of convolutions through the cell is counted.
pub fn layer_depth(desc: &ArchDescriptor, space: &SearchSpace) -> Result<usize> {
    space.validate_teacher(desc)?;
    Ok(match desc {
        ArchDescriptor::S0 { depths } => 2 + 2 * depths.iter().sum::<usize>(),
        ArchDescriptor::S2(cfg) => {
            2 + cfg
                .stages
                .iter()
                .map(|s| s.depth * s.block.convs_per_block())
                .sum::<usize>()
        }
        ArchDescriptor::Nb201(cell) => {
            let per_cell = longest_conv_chain(cell);
            2 + NB201_STAGE_CHANNELS.len() * space.cells_per_stage * per_cell + 2 * 2
        }
    })
}

fn longest_conv_chain(cell: &Nb201Cell) -> usize {
    // best[j]: most convs on any live path from node 0 to node j.
    let mut best: [Option<usize>; 4] = [Some(0), None, None, None];
    for to in 1..=3 {
        for from in 0..to {
            let op = cell.op(to, from);
            if op == super::Nb201Op::None {
                continue;
            }
            if let Some(b) = best[from] {
                let len = b + usize::from(op.conv_kernel().is_some());
                best[to] = Some(best[to].map_or(len, |cur| cur.max(len)));
            }
        }
    }
    best[3].unwrap_or(0)
}

impl SpaceKind {
    pub fn is_s2(self) -> bool {
        matches!(self, SpaceKind::S2Cifar | SpaceKind::S2Imagenet)
    }
}
