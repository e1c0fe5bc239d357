use serde::{Deserialize, Serialize};

use super::{chunk_cycles, AccelError, AcceleratorConfig, ChunkKind, EnergyCoeffs, HardwareBudget};
use crate::search_space::{count_ops, LayerDescriptor, OpCounts};

/// LUTs per PE.
pub const LUT_PER_PE_C: u64 = 37;
pub const LUT_PER_PE_S: u64 = 34;
pub const LUT_PER_PE_A: u64 = 29;
/// Bits in one BRAM block.
pub const BRAM_BLOCK_BITS: f64 = 36_864.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resources {
    pub dsp: u32,
    pub lut: u64,
    pub bram_blocks: f64,
}

/// DSP from packed conv PEs, LUT from per-PE costs plus overhead, BRAM from
/// the buffer size.
pub fn resource_usage(cfg: &AcceleratorConfig, lut_overhead: u64) -> Resources {
    Resources {
        dsp: cfg.chunk_c.pe_count.div_ceil(2),
        lut: LUT_PER_PE_C * cfg.chunk_c.pe_count as u64
            + LUT_PER_PE_S * cfg.chunk_s.pe_count as u64
            + LUT_PER_PE_A * cfg.chunk_a.pe_count as u64
            + lut_overhead,
        bram_blocks: cfg.gb_bytes as f64 * 8.0 / BRAM_BLOCK_BITS,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerfReport {
    /// Steady-state pipeline interval per image.
    pub latency_s: f64,
    pub throughput_gops: f64,
    pub fps: f64,
    pub gops_per_klut: f64,
    pub gops_per_dsp: f64,
    pub energy_mj: f64,
    pub resources: Resources,
    pub per_chunk_time_s: [f64; 3],
    pub ops: OpCounts,
}

impl PerfReport {
    /// Builds the derived fields from chunk times and op counts.
    pub fn from_times(per_chunk_time_s: [f64; 3], ops: OpCounts, resources: Resources, coeffs: &EnergyCoeffs) -> Self {
        let latency_s = per_chunk_time_s.iter().cloned().fold(0.0, f64::max);
        let throughput_gops = ops.total() * 1e6 / latency_s / 1e9;
        PerfReport {
            latency_s,
            throughput_gops,
            fps: 1.0 / latency_s,
            gops_per_klut: throughput_gops / (resources.lut as f64 / 1000.0),
            gops_per_dsp: throughput_gops / resources.dsp as f64,
            energy_mj: coeffs.energy(&ops),
            resources,
            per_chunk_time_s,
            ops,
        }
    }

    /// Relative error of the report identities.
    pub fn identity_errors(&self) -> [f64; 3] {
        let ops = self.ops.total() * 1e6;
        let max = self.per_chunk_time_s.iter().cloned().fold(0.0, f64::max);
        [
            (self.throughput_gops * 1e9 * self.latency_s - ops).abs() / ops,
            (self.fps * self.latency_s - 1.0).abs(),
            (self.latency_s - max).abs() / max,
        ]
    }
}

/// Per-chunk time is the sum of its layers; the pipeline interval is the
/// slowest chunk.
pub fn pipeline_perf(
    layers: &[LayerDescriptor],
    assignment: &[ChunkKind],
    cfg: &AcceleratorConfig,
    budget: &HardwareBudget,
    coeffs: &EnergyCoeffs,
) -> Result<PerfReport, AccelError> {
    if layers.is_empty() {
        return Err(AccelError::EmptyWorkload);
    }
    if assignment.len() != layers.len() {
        let i = assignment.len().min(layers.len() - 1);
        return Err(AccelError::AssignmentMismatch {
            layer: i,
            op_type: layers[i].op_type,
        });
    }
    for (i, (l, k)) in layers.iter().zip(assignment).enumerate() {
        if ChunkKind::for_layer(l.op_type) != *k {
            return Err(AccelError::AssignmentMismatch {
                layer: i,
                op_type: l.op_type,
            });
        }
    }
    let mut times = [0.0; 3];
    for kind in ChunkKind::ALL {
        let cycles = chunk_cycles(layers, cfg.chunk(kind), cfg.gb_bytes, budget)?;
        times[kind.index()] = cycles as f64 / budget.frequency_hz;
    }
    Ok(PerfReport::from_times(
        times,
        count_ops(layers),
        resource_usage(cfg, budget.lut_overhead),
        coeffs,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accel::ChunkConfig;

    fn cfg(c: u32, s: u32, a: u32, gb: u64) -> AcceleratorConfig {
        let mut x = AcceleratorConfig {
            chunk_c: ChunkConfig::minimal(ChunkKind::C),
            chunk_s: ChunkConfig::minimal(ChunkKind::S),
            chunk_a: ChunkConfig::minimal(ChunkKind::A),
            gb_bytes: gb,
        };
        x.chunk_c.pe_count = c;
        x.chunk_s.pe_count = s;
        x.chunk_a.pe_count = a;
        x
    }

    #[test]
    fn resource_fixtures() {
        let r = resource_usage(&cfg(1090, 272, 1704, 0), 0);
        assert_eq!(r.dsp, 545);
        assert_eq!(r.lut, 40_330 + 9_248 + 49_416);
        assert_eq!(resource_usage(&cfg(2, 1, 1, 0), 0).dsp, 1);
        assert_eq!(resource_usage(&cfg(1, 1, 1, 4608), 0).bram_blocks, 1.0);
    }

    #[test]
    fn interval_is_slowest_chunk() {
        let ops = OpCounts {
            mults: 42.26,
            shifts: 33.13,
            adds: 81.85,
        };
        let res = Resources {
            dsp: 545,
            lut: 66_400,
            bram_blocks: 19.2,
        };
        let r = PerfReport::from_times([0.30e-3, 0.20e-3, 0.44e-3], ops, res, &EnergyCoeffs::default());
        assert_eq!(r.latency_s, 0.44e-3);
        assert!((r.fps - 2272.727).abs() < 1e-3);
        assert!((r.throughput_gops - 357.36).abs() < 0.01);
        assert!(r.identity_errors().iter().all(|e| *e < 1e-12));
    }
}
