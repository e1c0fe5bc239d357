//! Joint enumeration of all three chunks, used as ground truth for the
//! coarse-to-fine search.

use serde::{Deserialize, Serialize};

use super::hw::SearchOutcome;
use crate::accel::{
    assign, chunk_cycles, enumerate_dataflows, min_gb_size, pipeline_perf, resource_usage, AccelError,
    AcceleratorConfig, ChunkConfig, ChunkKind, Dataflow, EnergyCoeffs, HardwareBudget, LoopOrder, PerfReport,
    Tiling,
};
use crate::search_space::{expand, LayerDescriptor, SearchSpace, SubNetwork};

/// Default limit on chunk-dataflow evaluations.
pub const DEFAULT_NODE_CAP: u128 = 1_000_000_000;

/// PE counts tried for each chunk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeGrid {
    pub c: Vec<u32>,
    pub s: Vec<u32>,
    pub a: Vec<u32>,
}

impl PeGrid {
    pub fn single(c: u32, s: u32, a: u32) -> Self {
        PeGrid {
            c: vec![c],
            s: vec![s],
            a: vec![a],
        }
    }

    fn axis(&self, kind: ChunkKind) -> &[u32] {
        match kind {
            ChunkKind::C => &self.c,
            ChunkKind::S => &self.s,
            ChunkKind::A => &self.a,
        }
    }
}

/// What the search minimizes. Ops are fixed per network, so both pick the
/// same winner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    MaximizeThroughput,
    MinimizeLatency,
}

fn feasible_tilings(layers: &[LayerDescriptor], kind: ChunkKind, budget: &HardwareBudget) -> Result<Vec<Tiling>, AccelError> {
    if !layers.iter().any(|l| ChunkKind::for_layer(l.op_type) == kind) {
        return Ok(Vec::new());
    }
    Ok(enumerate_dataflows(kind, layers, budget.max_gb_bytes(), budget)?
        .into_iter()
        .filter(|d| d.loop_order == LoopOrder::WS)
        .map(|d| d.tiling)
        .collect())
}

/// Chunk-dataflow evaluations a full enumeration over `grid` performs.
pub fn oracle_node_estimate(
    layers: &[LayerDescriptor],
    budget: &HardwareBudget,
    grid: &PeGrid,
) -> Result<u128, AccelError> {
    let mut tilings = 0u128;
    for kind in ChunkKind::ALL {
        tilings += feasible_tilings(layers, kind, budget)?.len() as u128;
    }
    Ok(grid.c.len() as u128 * grid.s.len() as u128 * grid.a.len() as u128 * 64 * tilings)
}

struct Scan<'a> {
    layers: &'a [LayerDescriptor],
    budget: &'a HardwareBudget,
    gb: u64,
    nodes: u64,
}

impl Scan<'_> {
    /// Best tiling of one chunk for a fixed PE count and loop order, found by
    /// a fresh scan.
    fn best(&mut self, kind: ChunkKind, pe: u32, order: LoopOrder, tilings: &[Tiling]) -> Result<(u64, ChunkConfig), AccelError> {
        let mut best: Option<(u64, u64, ChunkConfig)> = None;
        for &tiling in tilings {
            let ch = ChunkConfig {
                chunk_kind: kind,
                pe_count: pe,
                dataflow: Dataflow { loop_order: order, tiling },
            };
            self.nodes += 1;
            let cycles = chunk_cycles(self.layers, &ch, self.gb, self.budget)?;
            if best.as_ref().is_some_and(|b| b.0 < cycles) {
                continue;
            }
            let need = self
                .layers
                .iter()
                .filter(|l| ChunkKind::for_layer(l.op_type) == kind)
                .map(|l| crate::accel::working_set_bytes(l, kind, &tiling, self.budget))
                .max()
                .unwrap_or(0);
            if best.as_ref().is_none_or(|b| (cycles, need) < (b.0, b.1)) {
                best = Some((cycles, need, ch));
            }
        }
        Ok(match best {
            Some((c, _, ch)) => (c, ch),
            // chunk owns no layers
            None => (
                0,
                ChunkConfig {
                    chunk_kind: kind,
                    pe_count: pe,
                    dataflow: Dataflow {
                        loop_order: order,
                        tiling: Tiling::unit(),
                    },
                },
            ),
        })
    }
}

/// Every grid PE triple, every loop-order triple and every feasible tiling,
/// with no reuse of per-chunk results. Same objective and tie-breaks as the
/// fine search: shortest interval, then fewer LUTs, then first enumerated.
pub fn oracle_layers(
    layers: &[LayerDescriptor],
    budget: &HardwareBudget,
    coeffs: &EnergyCoeffs,
    grid: &PeGrid,
    _objective: Objective,
    node_cap: u128,
) -> Result<SearchOutcome, AccelError> {
    budget.validate()?;
    if layers.is_empty() {
        return Err(AccelError::EmptyWorkload);
    }
    if ChunkKind::ALL.iter().any(|k| grid.axis(*k).iter().any(|p| *p == 0)) {
        return Err(AccelError::InfeasibleBudget("grid PE counts must be positive".into()));
    }
    let estimate = oracle_node_estimate(layers, budget, grid)?;
    if estimate > node_cap {
        return Err(AccelError::GridTooLarge { estimate, cap: node_cap });
    }
    let tilings = [
        feasible_tilings(layers, ChunkKind::C, budget)?,
        feasible_tilings(layers, ChunkKind::S, budget)?,
        feasible_tilings(layers, ChunkKind::A, budget)?,
    ];
    let mut scan = Scan {
        layers,
        budget,
        gb: budget.max_gb_bytes(),
        nodes: 0,
    };
    let max_pe_c = budget.max_pe_c();
    let mut best: Option<(u64, u64, [ChunkConfig; 3])> = None;
    for &pc in &grid.c {
        if pc > max_pe_c {
            continue;
        }
        for &ps in &grid.s {
            for &pa in &grid.a {
                let probe = AcceleratorConfig {
                    chunk_c: ChunkConfig { pe_count: pc, ..ChunkConfig::minimal(ChunkKind::C) },
                    chunk_s: ChunkConfig { pe_count: ps, ..ChunkConfig::minimal(ChunkKind::S) },
                    chunk_a: ChunkConfig { pe_count: pa, ..ChunkConfig::minimal(ChunkKind::A) },
                    gb_bytes: 0,
                };
                let lut = resource_usage(&probe, budget.lut_overhead).lut;
                if lut > budget.lut_total {
                    continue;
                }
                for oc in LoopOrder::ALL {
                    for os in LoopOrder::ALL {
                        for oa in LoopOrder::ALL {
                            let (tc, c) = scan.best(ChunkKind::C, pc, oc, &tilings[0])?;
                            let (ts, s) = scan.best(ChunkKind::S, ps, os, &tilings[1])?;
                            let (ta, a) = scan.best(ChunkKind::A, pa, oa, &tilings[2])?;
                            let interval = tc.max(ts).max(ta);
                            if best.as_ref().is_none_or(|b| (interval, lut) < (b.0, b.1)) {
                                best = Some((interval, lut, [c, s, a]));
                            }
                        }
                    }
                }
            }
        }
    }
    let (_, _, [chunk_c, chunk_s, chunk_a]) =
        best.ok_or_else(|| AccelError::InfeasibleBudget("no grid point fits the budget".into()))?;
    let mut config = AcceleratorConfig {
        chunk_c,
        chunk_s,
        chunk_a,
        gb_bytes: 0,
    };
    config.gb_bytes = min_gb_size(&config, layers, budget);
    config.check_budget(budget)?;
    let report = pipeline_perf(layers, &assign(layers), &config, budget, coeffs)?;
    Ok(SearchOutcome {
        config,
        report,
        nodes: scan.nodes,
    })
}

/// Oracle over an expanded network.
pub fn exhaustive_oracle(
    net: &SubNetwork,
    space: &SearchSpace,
    budget: &HardwareBudget,
    coeffs: &EnergyCoeffs,
    grid: &PeGrid,
    objective: Objective,
    node_cap: u128,
) -> Result<(AcceleratorConfig, PerfReport), crate::Error> {
    let layers = expand(space, net)?;
    let out = oracle_layers(&layers, budget, coeffs, grid, objective, node_cap)?;
    Ok((out.config, out.report))
}
