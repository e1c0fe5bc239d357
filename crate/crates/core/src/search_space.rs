//! Hybrid conv/shift/adder macro space: genome encoding, expansion into
//! concrete layers, genetic operators and op counting.

use std::fmt;
use std::ops::Add;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of searchable stages.
pub const NUM_STAGES: usize = 7;

/// Length of the flat integer genome record.
pub const FLAT_LEN: usize = 2 + NUM_STAGES * 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LayerType {
    #[serde(rename = "C")]
    Conv,
    #[serde(rename = "S")]
    Shift,
    #[serde(rename = "A")]
    Adder,
}

impl LayerType {
    pub const ALL: [LayerType; 3] = [LayerType::Conv, LayerType::Shift, LayerType::Adder];

    /// Integer code used in the flat genome record.
    pub fn code(self) -> u32 {
        match self {
            LayerType::Conv => 0,
            LayerType::Shift => 1,
            LayerType::Adder => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(LayerType::Conv),
            1 => Some(LayerType::Shift),
            2 => Some(LayerType::Adder),
            _ => None,
        }
    }

    pub fn letter(self) -> char {
        match self {
            LayerType::Conv => 'C',
            LayerType::Shift => 'S',
            LayerType::Adder => 'A',
        }
    }
}

impl fmt::Display for LayerType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Choice sets of one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    pub channel_choices: Vec<u32>,
    pub expansion_choices: Vec<u32>,
    pub kernel_choices: Vec<u32>,
    pub type_choices: Vec<LayerType>,
    pub depth_choices: Vec<u32>,
    /// Stride of the first block in the stage.
    pub stride: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub stages: Vec<StageSpec>,
    pub first_conv_channels: Vec<u32>,
    pub mbpool_channels: Vec<u32>,
    /// Square input side in pixels.
    pub input_resolution: u32,
    pub num_classes: u32,
    #[serde(default = "default_input_channels")]
    pub input_channels: u32,
    #[serde(default = "default_stem_kernel")]
    pub stem_kernel: u32,
    #[serde(default = "default_stem_stride")]
    pub stem_stride: u32,
}

fn default_input_channels() -> u32 {
    3
}
fn default_stem_kernel() -> u32 {
    3
}
fn default_stem_stride() -> u32 {
    2
}

impl Default for SearchSpace {
    fn default() -> Self {
        default_space()
    }
}

/// The hybrid macro space with MobileNet-style strides and a 32-pixel input.
pub fn default_space() -> SearchSpace {
    use LayerType::*;
    let types = vec![Conv, Shift, Adder];
    let stage = |c: &[u32], e: &[u32], n: &[u32], stride: u32| StageSpec {
        channel_choices: c.to_vec(),
        expansion_choices: e.to_vec(),
        kernel_choices: vec![3, 5],
        type_choices: types.clone(),
        depth_choices: n.to_vec(),
        stride,
    };
    SearchSpace {
        stages: vec![
            stage(&[16, 24], &[1], &[1, 2], 1),
            stage(&[24, 32], &[4, 5, 6], &[3, 4, 5], 2),
            stage(&[32, 40], &[4, 5, 6], &[3, 4, 5, 6], 2),
            stage(&[64, 72], &[4, 5, 6], &[3, 4, 5, 6], 2),
            stage(&[112, 120, 128], &[4, 5, 6], &[3, 4, 5, 6, 7, 8], 1),
            stage(&[192, 200, 208, 216], &[6], &[3, 4, 5, 6, 7, 8], 2),
            stage(&[216, 224], &[6], &[1, 2], 1),
        ],
        first_conv_channels: vec![16, 24],
        mbpool_channels: vec![1792, 1984],
        input_resolution: 32,
        num_classes: 10,
        input_channels: 3,
        stem_kernel: 3,
        stem_stride: 2,
    }
}

/// One genome position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Field {
    FirstConvChannels,
    Channels,
    Expansion,
    Kernel,
    LayerType,
    Depth,
    MbPoolChannels,
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Field::FirstConvChannels => "first_conv_channels",
            Field::Channels => "channels",
            Field::Expansion => "expansion",
            Field::Kernel => "kernel",
            Field::LayerType => "layer_type",
            Field::Depth => "depth",
            Field::MbPoolChannels => "mbpool_channels",
        };
        f.write_str(s)
    }
}

const STAGE_FIELDS: [Field; 5] = [
    Field::Channels,
    Field::Expansion,
    Field::Kernel,
    Field::LayerType,
    Field::Depth,
];

/// Location of flat-record index `i`: (1-based stage, field).
pub fn field_at(i: usize) -> (Option<usize>, Field) {
    if i == 0 {
        (None, Field::FirstConvChannels)
    } else if i == FLAT_LEN - 1 {
        (None, Field::MbPoolChannels)
    } else {
        let j = i - 1;
        (Some(j / 5 + 1), STAGE_FIELDS[j % 5])
    }
}

/// Human readable name of flat-record index `i`, e.g. `stage3.expansion`.
pub fn field_name(i: usize) -> String {
    match field_at(i) {
        (Some(s), f) => format!("stage{s}.{f}"),
        (None, f) => f.to_string(),
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("{} = {value} is not in its choice set", location(*stage, *field))]
    MembershipViolation {
        stage: Option<usize>,
        field: Field,
        value: u32,
    },
    #[error("genome has {found} stages, space has {expected}")]
    StageCount { expected: usize, found: usize },
    #[error("flat genome record has {found} fields, expected {expected}")]
    FlatLength { expected: usize, found: usize },
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
}

fn location(stage: Option<usize>, field: Field) -> String {
    match stage {
        Some(s) => format!("stage {s}, {field}"),
        None => field.to_string(),
    }
}

impl SearchSpace {
    /// Checks the structural invariants of the space itself.
    pub fn check(&self) -> Result<(), SpaceError> {
        let bad = |m: String| Err(SpaceError::InvalidSpace(m));
        if self.stages.len() != NUM_STAGES {
            return bad(format!("expected {NUM_STAGES} stages, got {}", self.stages.len()));
        }
        let increasing = |v: &[u32]| !v.is_empty() && v.windows(2).all(|w| w[0] < w[1]);
        if !increasing(&self.first_conv_channels) || !increasing(&self.mbpool_channels) {
            return bad("stem/head channel choices must be non-empty and strictly increasing".into());
        }
        if self.input_resolution == 0 || self.num_classes == 0 || self.input_channels == 0 {
            return bad("input resolution, classes and input channels must be positive".into());
        }
        if self.stem_kernel == 0 || self.stem_stride == 0 {
            return bad("stem kernel and stride must be positive".into());
        }
        for (i, s) in self.stages.iter().enumerate() {
            let n = i + 1;
            if !increasing(&s.channel_choices) {
                return bad(format!("stage {n}: channel choices must be strictly increasing"));
            }
            if s.expansion_choices.is_empty()
                || s.depth_choices.is_empty()
                || s.kernel_choices.is_empty()
                || s.type_choices.is_empty()
            {
                return bad(format!("stage {n}: empty choice set"));
            }
            if s.kernel_choices.iter().any(|k| *k != 3 && *k != 5) {
                return bad(format!("stage {n}: kernels must be 3 or 5"));
            }
            if s.stride != 1 && s.stride != 2 {
                return bad(format!("stage {n}: stride must be 1 or 2"));
            }
            if s.depth_choices.contains(&0) || s.expansion_choices.contains(&0) {
                return bad(format!("stage {n}: depth and expansion must be >= 1"));
            }
        }
        Ok(())
    }

    /// Choice sets aligned with the flat genome record.
    pub fn choice_sets(&self) -> Vec<Vec<u32>> {
        let mut out = Vec::with_capacity(FLAT_LEN);
        out.push(self.first_conv_channels.clone());
        for s in &self.stages {
            out.push(s.channel_choices.clone());
            out.push(s.expansion_choices.clone());
            out.push(s.kernel_choices.clone());
            out.push(s.type_choices.iter().map(|t| t.code()).collect());
            out.push(s.depth_choices.clone());
        }
        out.push(self.mbpool_channels.clone());
        out
    }
}

/// Per-stage genes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StageGene {
    pub c: u32,
    pub e: u32,
    pub k: u32,
    pub t: LayerType,
    pub n: u32,
}

/// A genome over the macro space.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubNetwork {
    pub first_conv_c: u32,
    pub stages: Vec<StageGene>,
    pub mbpool_c: u32,
}

impl SubNetwork {
    pub fn to_flat(&self) -> Vec<u32> {
        let mut v = Vec::with_capacity(FLAT_LEN);
        v.push(self.first_conv_c);
        for s in &self.stages {
            v.extend_from_slice(&[s.c, s.e, s.k, s.t.code(), s.n]);
        }
        v.push(self.mbpool_c);
        v
    }

    pub fn from_flat(v: &[u32]) -> Result<Self, SpaceError> {
        if v.len() != FLAT_LEN {
            return Err(SpaceError::FlatLength {
                expected: FLAT_LEN,
                found: v.len(),
            });
        }
        let mut stages = Vec::with_capacity(NUM_STAGES);
        for (i, g) in v[1..FLAT_LEN - 1].chunks(5).enumerate() {
            let t = LayerType::from_code(g[3]).ok_or(SpaceError::MembershipViolation {
                stage: Some(i + 1),
                field: Field::LayerType,
                value: g[3],
            })?;
            stages.push(StageGene {
                c: g[0],
                e: g[1],
                k: g[2],
                t,
                n: g[4],
            });
        }
        Ok(SubNetwork {
            first_conv_c: v[0],
            stages,
            mbpool_c: v[FLAT_LEN - 1],
        })
    }

    /// Stable 64-bit FNV-1a hash of the flat record.
    pub fn genome_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for x in self.to_flat() {
            for b in x.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }

    /// Compact text form of the flat record, fields joined by `-`.
    pub fn genome_string(&self) -> String {
        self.to_flat()
            .iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join("-")
    }
}

/// Checks every genome field against its choice set.
pub fn validate(space: &SearchSpace, net: &SubNetwork) -> Result<(), SpaceError> {
    if net.stages.len() != space.stages.len() {
        return Err(SpaceError::StageCount {
            expected: space.stages.len(),
            found: net.stages.len(),
        });
    }
    let flat = net.to_flat();
    for (i, (v, set)) in flat.iter().zip(space.choice_sets()).enumerate() {
        if !set.contains(v) {
            let (stage, field) = field_at(i);
            return Err(SpaceError::MembershipViolation {
                stage,
                field,
                value: *v,
            });
        }
    }
    Ok(())
}

/// One concrete layer of an expanded genome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerDescriptor {
    pub op_type: LayerType,
    pub in_channels: u32,
    pub out_channels: u32,
    pub kernel: u32,
    pub stride: u32,
    pub groups: u32,
    pub in_h: u32,
    pub in_w: u32,
    pub out_h: u32,
    pub out_w: u32,
}

impl LayerDescriptor {
    /// Builds a layer with same-padding output dims.
    pub fn new(
        op_type: LayerType,
        in_channels: u32,
        out_channels: u32,
        kernel: u32,
        stride: u32,
        groups: u32,
        in_h: u32,
        in_w: u32,
    ) -> Self {
        LayerDescriptor {
            op_type,
            in_channels,
            out_channels,
            kernel,
            stride,
            groups,
            in_h,
            in_w,
            out_h: in_h.div_ceil(stride),
            out_w: in_w.div_ceil(stride),
        }
    }

    pub fn macs(&self) -> u64 {
        (self.out_channels as u64) * (self.in_channels / self.groups) as u64
            * (self.kernel as u64 * self.kernel as u64)
            * self.out_h as u64
            * self.out_w as u64
    }

    pub fn is_depthwise(&self) -> bool {
        self.groups > 1 && self.groups == self.in_channels && self.groups == self.out_channels
    }

    /// Spatial and grouping invariants.
    pub fn is_consistent(&self) -> bool {
        self.groups >= 1
            && self.stride >= 1
            && self.kernel >= 1
            && self.in_channels % self.groups == 0
            && self.out_channels % self.groups == 0
            && self.out_h == self.in_h.div_ceil(self.stride)
            && self.out_w == self.in_w.div_ceil(self.stride)
    }
}

/// Position of one inverted-residual block inside the layer list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpan {
    pub start: usize,
    pub len: usize,
    /// Channels carried by the skip connection, 0 without one.
    pub residual: u32,
}

/// Layer list plus the block structure the forward engine and NN-Degree need.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpandedNet {
    pub layers: Vec<LayerDescriptor>,
    pub blocks: Vec<BlockSpan>,
    /// Layers before this index form the feature extractor; the rest is the head.
    pub feature_len: usize,
}

/// Expands a genome into layers with block structure.
pub fn expand_detailed(space: &SearchSpace, net: &SubNetwork) -> Result<ExpandedNet, SpaceError> {
    validate(space, net)?;
    let r = space.input_resolution;
    let mut layers = Vec::new();
    let mut blocks = Vec::new();
    let stem = LayerDescriptor::new(
        LayerType::Conv,
        space.input_channels,
        net.first_conv_c,
        space.stem_kernel,
        space.stem_stride,
        1,
        r,
        r,
    );
    let (mut h, mut w, mut in_c) = (stem.out_h, stem.out_w, stem.out_channels);
    layers.push(stem);
    for (spec, g) in space.stages.iter().zip(&net.stages) {
        for b in 0..g.n {
            let stride = if b == 0 { spec.stride } else { 1 };
            let start = layers.len();
            let mid = in_c * g.e;
            if g.e != 1 {
                layers.push(LayerDescriptor::new(g.t, in_c, mid, 1, 1, 1, h, w));
            }
            let dw = LayerDescriptor::new(g.t, mid, mid, g.k, stride, mid, h, w);
            let (oh, ow) = (dw.out_h, dw.out_w);
            layers.push(dw);
            layers.push(LayerDescriptor::new(g.t, mid, g.c, 1, 1, 1, oh, ow));
            let residual = if stride == 1 && in_c == g.c { in_c } else { 0 };
            blocks.push(BlockSpan {
                start,
                len: layers.len() - start,
                residual,
            });
            h = oh;
            w = ow;
            in_c = g.c;
        }
    }
    let feature_len = layers.len();
    // head runs on globally pooled features
    layers.push(LayerDescriptor::new(LayerType::Conv, in_c, net.mbpool_c, 1, 1, 1, 1, 1));
    layers.push(LayerDescriptor::new(
        LayerType::Conv,
        net.mbpool_c,
        space.num_classes,
        1,
        1,
        1,
        1,
        1,
    ));
    Ok(ExpandedNet {
        layers,
        blocks,
        feature_len,
    })
}

/// Expands a genome: stem, inverted-residual blocks, then the pooled head.
pub fn expand(space: &SearchSpace, net: &SubNetwork) -> Result<Vec<LayerDescriptor>, SpaceError> {
    Ok(expand_detailed(space, net)?.layers)
}

/// Exact per-type MAC totals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacCounts {
    pub conv: u64,
    pub shift: u64,
    pub adder: u64,
}

impl MacCounts {
    pub fn of(layers: &[LayerDescriptor]) -> Self {
        let mut m = MacCounts::default();
        for l in layers {
            let x = l.macs();
            match l.op_type {
                LayerType::Conv => m.conv += x,
                LayerType::Shift => m.shift += x,
                LayerType::Adder => m.adder += x,
            }
        }
        m
    }

    pub fn get(&self, t: LayerType) -> u64 {
        match t {
            LayerType::Conv => self.conv,
            LayerType::Shift => self.shift,
            LayerType::Adder => self.adder,
        }
    }

    /// Raw (mults, shifts, adds) under the counting rules.
    pub fn raw_ops(&self) -> (u64, u64, u64) {
        (self.conv, self.shift, self.conv + self.shift + 2 * self.adder)
    }

    pub fn op_counts(&self) -> OpCounts {
        let (m, s, a) = self.raw_ops();
        OpCounts {
            mults: m as f64 / 1e6,
            shifts: s as f64 / 1e6,
            adds: a as f64 / 1e6,
        }
    }
}

/// Operation totals in millions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OpCounts {
    pub mults: f64,
    pub shifts: f64,
    pub adds: f64,
}

impl OpCounts {
    pub fn total(&self) -> f64 {
        self.mults + self.shifts + self.adds
    }
}

impl Add for OpCounts {
    type Output = OpCounts;
    fn add(self, o: OpCounts) -> OpCounts {
        OpCounts {
            mults: self.mults + o.mults,
            shifts: self.shifts + o.shifts,
            adds: self.adds + o.adds,
        }
    }
}

/// Conv MAC = mult + add, shift MAC = shift + add, adder MAC = 2 adds.
pub fn count_ops(layers: &[LayerDescriptor]) -> OpCounts {
    MacCounts::of(layers).op_counts()
}

/// Draws every field uniformly from its choice set.
pub fn sample_random<R: Rng + ?Sized>(space: &SearchSpace, rng: &mut R) -> SubNetwork {
    let flat: Vec<u32> = space
        .choice_sets()
        .iter()
        .map(|set| set[rng.random_range(0..set.len())])
        .collect();
    SubNetwork::from_flat(&flat).expect("choice sets produce a well-formed record")
}

/// Resamples each field with probability `prob`, always to a different value
/// when the field has more than one choice.
pub fn mutate<R: Rng + ?Sized>(
    space: &SearchSpace,
    net: &SubNetwork,
    prob: f64,
    rng: &mut R,
) -> SubNetwork {
    let mut flat = net.to_flat();
    for (v, set) in flat.iter_mut().zip(space.choice_sets()) {
        if !rng.random_bool(prob) || set.len() < 2 {
            continue;
        }
        let others: Vec<u32> = set.iter().copied().filter(|x| x != v).collect();
        *v = others[rng.random_range(0..others.len())];
    }
    SubNetwork::from_flat(&flat).expect("mutation keeps record length")
}

/// Uniform crossover: each field from `a` or `b` with probability 1/2.
pub fn crossover<R: Rng + ?Sized>(a: &SubNetwork, b: &SubNetwork, rng: &mut R) -> SubNetwork {
    crossover_with(a, b, 0.5, rng)
}

/// Crossover taking each field from `b` with probability `p_b`.
pub fn crossover_with<R: Rng + ?Sized>(
    a: &SubNetwork,
    b: &SubNetwork,
    p_b: f64,
    rng: &mut R,
) -> SubNetwork {
    let fa = a.to_flat();
    let fb = b.to_flat();
    let flat: Vec<u32> = fa
        .iter()
        .zip(&fb)
        .map(|(x, y)| if rng.random_bool(p_b) { *y } else { *x })
        .collect();
    SubNetwork::from_flat(&flat).expect("crossover keeps record length")
}

/// Smallest choice in every field.
pub fn smallest_genome(space: &SearchSpace) -> SubNetwork {
    let flat: Vec<u32> = space
        .choice_sets()
        .iter()
        .map(|s| *s.iter().min().expect("non-empty choice set"))
        .collect();
    SubNetwork::from_flat(&flat).expect("well-formed record")
}
