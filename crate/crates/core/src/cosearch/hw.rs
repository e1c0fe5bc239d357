//! Coarse-to-fine accelerator search.

use serde::{Deserialize, Serialize};

use crate::accel::{
    assign, chunk_cycles, enumerate_dataflows, min_gb_size, pipeline_perf, working_set_bytes,
    AccelError, AcceleratorConfig, ChunkConfig, ChunkKind, Dataflow, EnergyCoeffs, HardwareBudget,
    LoopOrder, PerfReport, Tiling,
};
use crate::accel::{LUT_PER_PE_A, LUT_PER_PE_C, LUT_PER_PE_S};
use crate::search_space::{expand, LayerDescriptor, LayerType, MacCounts, SearchSpace, SubNetwork};

/// Multiplicative neighbourhood explored around the proportional PE counts.
pub const FINE_STEPS: [f64; 5] = [0.5, 0.75, 1.0, 1.5, 2.0];

/// Proportional PE allocation before and after rounding and clamping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeAllocation {
    /// Exact proportional counts.
    pub target_s: f64,
    pub target_a: f64,
    pub pe_s: u32,
    pub pe_a: u32,
    /// True when the ">= 1" or LUT clamp moved a count off its rounded target.
    pub clamped: bool,
}

fn lut_of(pe_c: u32, pe_s: u32, pe_a: u32, budget: &HardwareBudget) -> u64 {
    LUT_PER_PE_C * pe_c as u64 + LUT_PER_PE_S * pe_s as u64 + LUT_PER_PE_A * pe_a as u64 + budget.lut_overhead
}

/// LUTs left for the shift and adder chunks.
fn lut_room(pe_c: u32, budget: &HardwareBudget) -> Result<u64, AccelError> {
    let used = LUT_PER_PE_C * pe_c as u64 + budget.lut_overhead;
    budget
        .lut_total
        .checked_sub(used)
        .filter(|room| *room >= LUT_PER_PE_S + LUT_PER_PE_A)
        .ok_or_else(|| {
            AccelError::InfeasibleBudget(format!(
                "{} LUT cannot hold {pe_c} conv PEs, overhead and one shift and adder PE",
                budget.lut_total
            ))
        })
}

/// Balances chunk times by giving each chunk PEs in proportion to its MACs,
/// relative to the conv chunk: `pe_s = pe_c * shift_macs / conv_macs`.
pub fn pe_allocation(pe_c: u32, macs: &MacCounts, budget: &HardwareBudget) -> Result<PeAllocation, AccelError> {
    let room = lut_room(pe_c, budget)?;
    let (s, a) = (macs.shift as f64, macs.adder as f64);
    let (target_s, target_a) = if macs.conv > 0 {
        let c = macs.conv as f64;
        (pe_c as f64 * s / c, pe_c as f64 * a / c)
    } else if s + a > 0.0 {
        // no conv reference: share the free LUTs at equal time per MAC
        let unit = room as f64 / (LUT_PER_PE_S as f64 * s + LUT_PER_PE_A as f64 * a);
        (unit * s, unit * a)
    } else {
        (0.0, 0.0)
    };
    let (rs, ra) = (target_s.round() as u32, target_a.round() as u32);
    let (mut pe_s, mut pe_a) = (rs.max(1), ra.max(1));
    let need = LUT_PER_PE_S * pe_s as u64 + LUT_PER_PE_A * pe_a as u64;
    if need > room {
        let f = room as f64 / need as f64;
        // keep room for at least one adder PE
        let cap_s = (room.saturating_sub(LUT_PER_PE_A) / LUT_PER_PE_S) as u32;
        pe_s = ((pe_s as f64 * f).floor() as u32).min(cap_s).max(1);
        let left = room - LUT_PER_PE_S * pe_s as u64;
        pe_a = ((pe_a as f64 * f).floor() as u32).min((left / LUT_PER_PE_A) as u32).max(1);
    }
    Ok(PeAllocation {
        target_s,
        target_a,
        pe_s,
        pe_a,
        clamped: pe_s != rs || pe_a != ra,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoarseResult {
    pub chunk: ChunkConfig,
    /// Buffer assumed during the coarse phase (all of BRAM).
    pub gb_bytes: u64,
    pub nodes: u64,
    pub no_conv_layers: bool,
}

/// Smallest buffer one chunk needs for the layers it owns.
fn chunk_gb(layers: &[LayerDescriptor], kind: ChunkKind, tiling: &Tiling, budget: &HardwareBudget) -> u64 {
    layers
        .iter()
        .filter(|l| ChunkKind::for_layer(l.op_type) == kind)
        .map(|l| working_set_bytes(l, kind, tiling, budget))
        .max()
        .unwrap_or(0)
}

fn owns(layers: &[LayerDescriptor], kind: ChunkKind) -> bool {
    layers.iter().any(|l| ChunkKind::for_layer(l.op_type) == kind)
}

/// Best dataflow of one chunk at a fixed PE count. Ties go to the smaller
/// buffer, then the earlier (loop order, tiling).
pub(crate) fn best_dataflow(
    layers: &[LayerDescriptor],
    kind: ChunkKind,
    pe_count: u32,
    budget: &HardwareBudget,
    nodes: &mut u64,
) -> Result<(ChunkConfig, u64), AccelError> {
    if !owns(layers, kind) {
        return Ok((ChunkConfig { pe_count, ..ChunkConfig::minimal(kind) }, 0));
    }
    let gb = budget.max_gb_bytes();
    let mut best: Option<(u64, u64, ChunkConfig)> = None;
    for dataflow in enumerate_dataflows(kind, layers, gb, budget)? {
        let ch = ChunkConfig {
            chunk_kind: kind,
            pe_count,
            dataflow,
        };
        *nodes += 1;
        let cycles = chunk_cycles(layers, &ch, gb, budget)?;
        if best.as_ref().is_some_and(|b| b.0 < cycles) {
            continue;
        }
        let need = chunk_gb(layers, kind, &dataflow.tiling, budget);
        if best.as_ref().is_none_or(|b| (cycles, need) < (b.0, b.1)) {
            best = Some((cycles, need, ch));
        }
    }
    let (cycles, _, ch) = best.expect("enumeration is non-empty");
    Ok((ch, cycles))
}

/// Conv chunk at the largest PE count the DSPs allow, with its best dataflow.
pub fn coarse_search(layers: &[LayerDescriptor], budget: &HardwareBudget) -> Result<CoarseResult, AccelError> {
    budget.validate()?;
    let gb_bytes = budget.max_gb_bytes();
    if !owns(layers, ChunkKind::C) {
        return Ok(CoarseResult {
            chunk: ChunkConfig::minimal(ChunkKind::C),
            gb_bytes,
            nodes: 0,
            no_conv_layers: true,
        });
    }
    let mut nodes = 0;
    let (chunk, _) = best_dataflow(layers, ChunkKind::C, budget.max_pe_c(), budget, &mut nodes)?;
    Ok(CoarseResult {
        chunk,
        gb_bytes,
        nodes,
        no_conv_layers: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FineResult {
    pub config: AcceleratorConfig,
    pub interval_cycles: u64,
    pub nodes: u64,
    pub allocation: PeAllocation,
}

fn step_candidates(base: u32) -> Vec<u32> {
    let mut v: Vec<u32> = FINE_STEPS
        .iter()
        .map(|f| ((base as f64 * f).round() as u32).max(1))
        .collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// With the conv chunk fixed: proportional shift/adder PE counts, a
/// multiplicative neighbourhood around them, the best dataflow for every
/// candidate count, and the smallest buffer for the winner. Minimizes the
/// pipeline interval, then LUTs.
pub fn fine_search(
    layers: &[LayerDescriptor],
    budget: &HardwareBudget,
    coarse: &ChunkConfig,
) -> Result<FineResult, AccelError> {
    budget.validate()?;
    let allocation = pe_allocation(coarse.pe_count, &MacCounts::of(layers), budget)?;
    let c_cycles = chunk_cycles(layers, coarse, budget.max_gb_bytes(), budget)?;
    let mut nodes = 0;
    let mut per_kind = |kind: ChunkKind, base: u32| -> Result<Vec<(ChunkConfig, u64)>, AccelError> {
        let mut out = Vec::new();
        for pe in step_candidates(base) {
            out.push(best_dataflow(layers, kind, pe, budget, &mut nodes)?);
        }
        Ok(out)
    };
    let s_opts = per_kind(ChunkKind::S, allocation.pe_s)?;
    let a_opts = per_kind(ChunkKind::A, allocation.pe_a)?;

    let mut best: Option<(u64, u64, ChunkConfig, ChunkConfig)> = None;
    for (s, s_cycles) in &s_opts {
        for (a, a_cycles) in &a_opts {
            let lut = lut_of(coarse.pe_count, s.pe_count, a.pe_count, budget);
            if lut > budget.lut_total {
                continue;
            }
            let interval = c_cycles.max(*s_cycles).max(*a_cycles);
            if best.as_ref().is_none_or(|b| (interval, lut) < (b.0, b.1)) {
                best = Some((interval, lut, *s, *a));
            }
        }
    }
    let (interval_cycles, _, chunk_s, chunk_a) =
        best.ok_or_else(|| AccelError::InfeasibleBudget("no LUT-feasible shift/adder PE pair".into()))?;
    let mut config = AcceleratorConfig {
        chunk_c: *coarse,
        chunk_s,
        chunk_a,
        gb_bytes: 0,
    };
    config.gb_bytes = min_gb_size(&config, layers, budget);
    config.check_budget(budget)?;
    Ok(FineResult {
        config,
        interval_cycles,
        nodes,
        allocation,
    })
}

/// Which search phases run; skipped phases use the hand-set design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchVariant {
    CoarseFine,
    CoarseOnly,
    FineOnly,
}

/// Fixed, workload-agnostic dataflow used where a phase is not searched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManualDesign {
    pub loop_order: LoopOrder,
    pub tiling: Tiling,
}

impl Default for ManualDesign {
    fn default() -> Self {
        ManualDesign {
            loop_order: LoopOrder::WS,
            tiling: Tiling {
                t_n: 1,
                t_cin: 16,
                t_cout: 16,
                t_h: 8,
                t_w: 8,
            },
        }
    }
}

impl ManualDesign {
    fn chunk(&self, kind: ChunkKind, pe_count: u32) -> ChunkConfig {
        ChunkConfig {
            chunk_kind: kind,
            pe_count,
            dataflow: Dataflow {
                loop_order: self.loop_order,
                tiling: self.tiling,
            },
        }
    }
}

/// Result of an accelerator search over a layer list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub config: AcceleratorConfig,
    pub report: PerfReport,
    pub nodes: u64,
}

/// Coarse-to-fine search over an explicit layer list.
pub fn search_layers(
    layers: &[LayerDescriptor],
    budget: &HardwareBudget,
    coeffs: &EnergyCoeffs,
) -> Result<SearchOutcome, AccelError> {
    search_variant(layers, budget, coeffs, SearchVariant::CoarseFine, &ManualDesign::default())
}

/// Runs the requested phases; an unsearched conv chunk keeps all DSP PEs
/// with the manual dataflow, unsearched shift/adder chunks keep the
/// proportional PE counts with the manual dataflow.
pub fn search_variant(
    layers: &[LayerDescriptor],
    budget: &HardwareBudget,
    coeffs: &EnergyCoeffs,
    variant: SearchVariant,
    manual: &ManualDesign,
) -> Result<SearchOutcome, AccelError> {
    budget.validate()?;
    let (chunk_c, mut nodes) = match variant {
        SearchVariant::FineOnly => {
            let pe = if owns(layers, ChunkKind::C) { budget.max_pe_c() } else { 1 };
            (manual.chunk(ChunkKind::C, pe), 0)
        }
        _ => {
            let c = coarse_search(layers, budget)?;
            (c.chunk, c.nodes)
        }
    };
    let config = match variant {
        SearchVariant::CoarseOnly => {
            let alloc = pe_allocation(chunk_c.pe_count, &MacCounts::of(layers), budget)?;
            let mut cfg = AcceleratorConfig {
                chunk_c,
                chunk_s: manual.chunk(ChunkKind::S, alloc.pe_s),
                chunk_a: manual.chunk(ChunkKind::A, alloc.pe_a),
                gb_bytes: budget.max_gb_bytes(),
            };
            cfg.gb_bytes = min_gb_size(&cfg, layers, budget);
            cfg
        }
        _ => {
            let f = fine_search(layers, budget, &chunk_c)?;
            nodes += f.nodes;
            f.config
        }
    };
    config.check_budget(budget)?;
    let report = pipeline_perf(layers, &assign(layers), &config, budget, coeffs)?;
    Ok(SearchOutcome { config, report, nodes })
}

/// Expand, coarse search, fine search, then the pipeline report.
pub fn search_accelerator(
    net: &SubNetwork,
    space: &SearchSpace,
    budget: &HardwareBudget,
    coeffs: &EnergyCoeffs,
) -> Result<(AcceleratorConfig, PerfReport), crate::Error> {
    let layers = expand(space, net)?;
    let out = search_layers(&layers, budget, coeffs)?;
    Ok((out.config, out.report))
}

/// Per-type MAC totals of a layer list, keyed like chunk kinds.
pub fn chunk_macs(layers: &[LayerDescriptor]) -> [u64; 3] {
    let m = MacCounts::of(layers);
    [m.get(LayerType::Conv), m.get(LayerType::Shift), m.get(LayerType::Adder)]
}
