//! Cost model of the three-chunk accelerator: resources, per-layer latency
//! under a dataflow, pipeline timing and energy.

mod energy;
mod latency;
mod perf;

pub use energy::{fit_energy_coeffs, EnergyCoeffs};
pub use latency::{
    chunk_cycles, enumerate_dataflows, enumerate_tilings, layer_cost, layer_latency, min_gb_size,
    working_set_bytes, LayerCost,
};
pub use perf::{
    pipeline_perf, resource_usage, PerfReport, Resources, BRAM_BLOCK_BITS, LUT_PER_PE_A, LUT_PER_PE_C,
    LUT_PER_PE_S,
};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::search_space::{LayerDescriptor, LayerType};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AccelError {
    #[error("tile working set of {working_set} bytes exceeds the {gb_bytes}-byte global buffer")]
    TileExceedsBuffer { working_set: u64, gb_bytes: u64 },
    #[error("no feasible tiling for chunk {0} within the global buffer")]
    EmptyFeasibleSet(ChunkKind),
    #[error("layer {layer} of type {op_type} is not assigned to its chunk")]
    AssignmentMismatch { layer: usize, op_type: LayerType },
    #[error("energy rows are rank deficient")]
    SingularSystem,
    #[error("infeasible budget: {0}")]
    InfeasibleBudget(String),
    #[error("enumeration estimate {estimate} nodes exceeds the cap of {cap}")]
    GridTooLarge { estimate: u128, cap: u128 },
    #[error("workload has no layers")]
    EmptyWorkload,
}

/// Operand and accumulator widths in bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bitwidths {
    pub activation_bits: u32,
    pub conv_weight_bits: u32,
    pub shift_weight_bits: u32,
    pub adder_weight_bits: u32,
    pub conv_psum_bits: u32,
    pub shift_psum_bits: u32,
    pub adder_psum_bits: u32,
}

impl Default for Bitwidths {
    fn default() -> Self {
        Bitwidths {
            activation_bits: 8,
            conv_weight_bits: 8,
            shift_weight_bits: 4,
            adder_weight_bits: 8,
            conv_psum_bits: 15,
            shift_psum_bits: 15,
            adder_psum_bits: 9,
        }
    }
}

impl Bitwidths {
    pub fn weight_bits(&self, kind: ChunkKind) -> u32 {
        match kind {
            ChunkKind::C => self.conv_weight_bits,
            ChunkKind::S => self.shift_weight_bits,
            ChunkKind::A => self.adder_weight_bits,
        }
    }

    pub fn psum_bits(&self, kind: ChunkKind) -> u32 {
        match kind {
            ChunkKind::C => self.conv_psum_bits,
            ChunkKind::S => self.shift_psum_bits,
            ChunkKind::A => self.adder_psum_bits,
        }
    }
}

/// Tiling ladder used when enumerating dataflows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TilingLadder {
    /// 1, 2, 4, ... below the dimension, plus the dimension itself.
    #[default]
    PowersOfTwo,
    /// Every divisor of the dimension.
    Divisors,
}

/// Target platform. Defaults describe a Kria KV260.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareBudget {
    pub dsp_total: u32,
    /// Fraction of DSPs available to the conv chunk.
    pub dsp_reservation: f64,
    pub lut_total: u64,
    /// Control and interconnect LUTs added on top of the PEs.
    pub lut_overhead: u64,
    pub bram_bits_total: u64,
    pub dram_bandwidth_bytes_per_cycle: f64,
    pub frequency_hz: f64,
    pub bitwidths: Bitwidths,
    #[serde(default)]
    pub tiling_ladder: TilingLadder,
}

impl Default for HardwareBudget {
    fn default() -> Self {
        HardwareBudget {
            dsp_total: 1248,
            dsp_reservation: 0.437,
            lut_total: 117_120,
            lut_overhead: 12_000,
            bram_bits_total: 288 * 36_864,
            // 19.2 GB/s DDR4 at 200 MHz
            dram_bandwidth_bytes_per_cycle: 96.0,
            frequency_hz: 200e6,
            bitwidths: Bitwidths::default(),
            tiling_ladder: TilingLadder::PowersOfTwo,
        }
    }
}

impl HardwareBudget {
    /// DSPs the conv chunk may use.
    pub fn dsp_for_chunks(&self) -> u32 {
        (self.dsp_total as f64 * self.dsp_reservation).floor() as u32
    }

    /// Largest conv PE count: two 8-bit multiplies per DSP.
    pub fn max_pe_c(&self) -> u32 {
        ((2.0 * self.dsp_total as f64 * self.dsp_reservation).floor() as u32).max(1)
    }

    pub fn max_gb_bytes(&self) -> u64 {
        self.bram_bits_total / 8
    }

    pub fn validate(&self) -> Result<(), AccelError> {
        let ok = self.dsp_total > 0
            && self.dsp_reservation > 0.0
            && self.dsp_reservation <= 1.0
            && self.lut_total > 0
            && self.bram_bits_total > 0
            && self.dram_bandwidth_bytes_per_cycle > 0.0
            && self.frequency_hz > 0.0;
        if ok {
            Ok(())
        } else {
            Err(AccelError::InfeasibleBudget(
                "budget counts, bandwidth and frequency must be positive".into(),
            ))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChunkKind {
    C,
    S,
    A,
}

impl ChunkKind {
    pub const ALL: [ChunkKind; 3] = [ChunkKind::C, ChunkKind::S, ChunkKind::A];

    pub fn for_layer(t: LayerType) -> Self {
        match t {
            LayerType::Conv => ChunkKind::C,
            LayerType::Shift => ChunkKind::S,
            LayerType::Adder => ChunkKind::A,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ChunkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ChunkKind::C => "C",
            ChunkKind::S => "S",
            ChunkKind::A => "A",
        };
        f.write_str(s)
    }
}

/// Type-based layer-to-chunk assignment.
pub fn assign(layers: &[LayerDescriptor]) -> Vec<ChunkKind> {
    layers.iter().map(|l| ChunkKind::for_layer(l.op_type)).collect()
}

/// Loop orders in canonical tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LoopOrder {
    WS,
    OS,
    IS,
    RS,
}

impl LoopOrder {
    pub const ALL: [LoopOrder; 4] = [LoopOrder::WS, LoopOrder::OS, LoopOrder::IS, LoopOrder::RS];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Tiling {
    pub t_n: u32,
    pub t_cin: u32,
    pub t_cout: u32,
    pub t_h: u32,
    pub t_w: u32,
}

impl Tiling {
    pub fn unit() -> Self {
        Tiling {
            t_n: 1,
            t_cin: 1,
            t_cout: 1,
            t_h: 1,
            t_w: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Dataflow {
    pub loop_order: LoopOrder,
    pub tiling: Tiling,
}

impl Dataflow {
    pub fn unit() -> Self {
        Dataflow {
            loop_order: LoopOrder::WS,
            tiling: Tiling::unit(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChunkConfig {
    pub chunk_kind: ChunkKind,
    pub pe_count: u32,
    pub dataflow: Dataflow,
}

impl ChunkConfig {
    /// One PE with unit tiles.
    pub fn minimal(kind: ChunkKind) -> Self {
        ChunkConfig {
            chunk_kind: kind,
            pe_count: 1,
            dataflow: Dataflow::unit(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AcceleratorConfig {
    pub chunk_c: ChunkConfig,
    pub chunk_s: ChunkConfig,
    pub chunk_a: ChunkConfig,
    pub gb_bytes: u64,
}

impl AcceleratorConfig {
    /// Builds a config and checks it against the budget.
    pub fn new(
        chunk_c: ChunkConfig,
        chunk_s: ChunkConfig,
        chunk_a: ChunkConfig,
        gb_bytes: u64,
        budget: &HardwareBudget,
    ) -> Result<Self, AccelError> {
        let cfg = AcceleratorConfig {
            chunk_c,
            chunk_s,
            chunk_a,
            gb_bytes,
        };
        cfg.check_budget(budget)?;
        Ok(cfg)
    }

    pub fn chunk(&self, kind: ChunkKind) -> &ChunkConfig {
        match kind {
            ChunkKind::C => &self.chunk_c,
            ChunkKind::S => &self.chunk_s,
            ChunkKind::A => &self.chunk_a,
        }
    }

    pub fn check_budget(&self, budget: &HardwareBudget) -> Result<(), AccelError> {
        let kinds = [self.chunk_c.chunk_kind, self.chunk_s.chunk_kind, self.chunk_a.chunk_kind];
        if kinds != ChunkKind::ALL {
            return Err(AccelError::InfeasibleBudget("chunk kinds out of order".into()));
        }
        if [self.chunk_c, self.chunk_s, self.chunk_a].iter().any(|c| c.pe_count == 0) {
            return Err(AccelError::InfeasibleBudget("every chunk needs at least one PE".into()));
        }
        let r = resource_usage(self, budget.lut_overhead);
        if r.dsp > budget.dsp_total {
            return Err(AccelError::InfeasibleBudget(format!(
                "{} DSP exceeds {}",
                r.dsp, budget.dsp_total
            )));
        }
        if r.lut > budget.lut_total {
            return Err(AccelError::InfeasibleBudget(format!(
                "{} LUT exceeds {}",
                r.lut, budget.lut_total
            )));
        }
        if self.gb_bytes > budget.max_gb_bytes() {
            return Err(AccelError::InfeasibleBudget(format!(
                "{}-byte buffer exceeds {} bytes of BRAM",
                self.gb_bytes,
                budget.max_gb_bytes()
            )));
        }
        Ok(())
    }
}
