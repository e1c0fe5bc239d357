//! Analytical tiled-loop latency model.
//!
//! A layer is the loop nest over (output channels, reduction channels per
//! group, output rows, output cols) with the kernel window kept whole inside
//! a tile. Each loop order unrolls a different set of tile dims across the PE
//! array:
//!
//! | order | unrolled (spatial)        | temporal                 |
//! |-------|---------------------------|--------------------------|
//! | WS    | cout x cin x k x k        | rows x cols              |
//! | OS    | cout x rows x cols        | cin x k x k              |
//! | IS    | input ch x rows x cols    | remaining work           |
//! | RS    | k (filter rows) x rows x cout | cin x k x cols       |
//!
//! A tile takes `ceil(unrolled / pe) * temporal` cycles. DRAM traffic follows
//! the stationary operand of each order and runs overlapped with compute.

use super::{AccelError, ChunkConfig, ChunkKind, Dataflow, HardwareBudget, LoopOrder, Tiling, TilingLadder};
use super::AcceleratorConfig;
use crate::search_space::LayerDescriptor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerCost {
    pub compute_cycles: u64,
    pub memory_cycles: u64,
    /// Double-buffered bytes of the largest tile.
    pub working_set: u64,
}

impl LayerCost {
    pub fn cycles(&self) -> u64 {
        self.compute_cycles.max(self.memory_cycles)
    }
}

#[derive(Clone, Copy)]
struct Geom {
    cin: u64,
    cin_pg: u64,
    cout: u64,
    cout_pg: u64,
    dense: bool,
    oh: u64,
    ow: u64,
    k: u64,
    s: u64,
}

impl Geom {
    fn of(l: &LayerDescriptor) -> Self {
        Geom {
            cin: l.in_channels as u64,
            cin_pg: (l.in_channels / l.groups) as u64,
            cout: l.out_channels as u64,
            cout_pg: (l.out_channels / l.groups) as u64,
            dense: l.groups == 1,
            oh: l.out_h as u64,
            ow: l.out_w as u64,
            k: l.kernel as u64,
            s: l.stride as u64,
        }
    }

    /// Input channels touched by a tile.
    fn in_ch(&self, tco: u64, tci: u64) -> u64 {
        if self.dense {
            tci
        } else {
            tco.div_ceil(self.cout_pg) * tci
        }
    }

    fn tile_cycles(&self, order: LoopOrder, pe: u64, tco: u64, tci: u64, th: u64, tw: u64) -> u64 {
        let k2 = self.k * self.k;
        let (p, t) = match order {
            LoopOrder::WS => (tco * tci * k2, th * tw),
            LoopOrder::OS => (tco * th * tw, tci * k2),
            LoopOrder::IS => {
                let p = self.in_ch(tco, tci) * th * tw;
                (p, (tco * tci * k2 * th * tw).div_ceil(p))
            }
            LoopOrder::RS => (self.k * th * tco, tci * self.k * tw),
        };
        p.div_ceil(pe) * t
    }

    fn working_set_bits(&self, kind: ChunkKind, b: &HardwareBudget, t: [u64; 4]) -> u64 {
        let [tco, tci, th, tw] = t;
        let bw = &b.bitwidths;
        let w = tco * tci * self.k * self.k * bw.weight_bits(kind) as u64;
        let ih = (th - 1) * self.s + self.k;
        let iw = (tw - 1) * self.s + self.k;
        let i = self.in_ch(tco, tci) * ih * iw * bw.activation_bits as u64;
        let o = tco * th * tw * bw.psum_bits(kind) as u64;
        w + i + o
    }
}

fn clamp_tiles(g: &Geom, t: &Tiling) -> [u64; 4] {
    [
        (t.t_cout as u64).min(g.cout).max(1),
        (t.t_cin as u64).min(g.cin_pg).max(1),
        (t.t_h as u64).min(g.oh).max(1),
        (t.t_w as u64).min(g.ow).max(1),
    ]
}

/// (size, count) of the full tiles and the remainder tile along one dim.
fn splits(dim: u64, t: u64) -> [(u64, u64); 2] {
    [(t, dim / t), (dim % t, u64::from(dim % t > 0))]
}

/// Double-buffered tile working set in bytes.
pub fn working_set_bytes(layer: &LayerDescriptor, kind: ChunkKind, tiling: &Tiling, budget: &HardwareBudget) -> u64 {
    let g = Geom::of(layer);
    2 * g.working_set_bits(kind, budget, clamp_tiles(&g, tiling)).div_ceil(8)
}

/// Compute, memory and buffer cost of one layer, without the buffer check.
pub fn layer_cost(layer: &LayerDescriptor, chunk: &ChunkConfig, budget: &HardwareBudget) -> LayerCost {
    let g = Geom::of(layer);
    let kind = chunk.chunk_kind;
    let order = chunk.dataflow.loop_order;
    let pe = chunk.pe_count.max(1) as u64;
    let t = clamp_tiles(&g, &chunk.dataflow.tiling);
    let [tco, tci, th, tw] = t;

    let mut compute = 0u64;
    for (sco, nco) in splits(g.cout, tco) {
        for (sci, nci) in splits(g.cin_pg, tci) {
            for (sh, nh) in splits(g.oh, th) {
                for (sw, nw) in splits(g.ow, tw) {
                    let n = nco * nci * nh * nw;
                    if n > 0 {
                        compute += n * g.tile_cycles(order, pe, sco, sci, sh, sw);
                    }
                }
            }
        }
    }

    let bw = &budget.bitwidths;
    let (n_co, n_ci) = (g.cout.div_ceil(tco), g.cin_pg.div_ceil(tci));
    let (n_h, n_w) = (g.oh.div_ceil(th), g.ow.div_ceil(tw));
    let weights = g.cout * g.cin_pg * g.k * g.k * bw.weight_bits(kind) as u64;
    // halo rows/cols summed over spatial tiles
    let rows = g.s * (g.oh - n_h) + g.k * n_h;
    let cols = g.s * (g.ow - n_w) + g.k * n_w;
    let inputs = g.cin * rows * cols * bw.activation_bits as u64;
    let outputs = g.cout * g.oh * g.ow * bw.activation_bits as u64;
    let psums = g.cout * g.oh * g.ow * bw.psum_bits(kind) as u64;
    let in_refetch = if g.dense { n_co } else { 1 };
    let spill = 2 * (n_ci - 1) * psums;
    let bits = match order {
        LoopOrder::WS => weights + inputs * in_refetch + spill + outputs,
        LoopOrder::OS => weights * n_h * n_w + inputs * in_refetch + outputs,
        LoopOrder::IS => inputs + weights * n_h * n_w + spill + outputs,
        LoopOrder::RS => weights * n_h + inputs * in_refetch + outputs,
    };
    let memory = (bits.div_ceil(8) as f64 / budget.dram_bandwidth_bytes_per_cycle).ceil() as u64;

    LayerCost {
        compute_cycles: compute,
        memory_cycles: memory,
        working_set: 2 * g.working_set_bits(kind, budget, t).div_ceil(8),
    }
}

/// Cycles of one layer on a chunk: compute and DRAM traffic overlap.
pub fn layer_latency(
    layer: &LayerDescriptor,
    chunk: &ChunkConfig,
    gb_bytes: u64,
    budget: &HardwareBudget,
) -> Result<u64, AccelError> {
    let c = layer_cost(layer, chunk, budget);
    if c.working_set > gb_bytes {
        return Err(AccelError::TileExceedsBuffer {
            working_set: c.working_set,
            gb_bytes,
        });
    }
    Ok(c.cycles())
}

/// Total cycles of the layers a chunk owns.
pub fn chunk_cycles(
    layers: &[LayerDescriptor],
    chunk: &ChunkConfig,
    gb_bytes: u64,
    budget: &HardwareBudget,
) -> Result<u64, AccelError> {
    let mut total = 0;
    for l in layers.iter().filter(|l| ChunkKind::for_layer(l.op_type) == chunk.chunk_kind) {
        total += layer_latency(l, chunk, gb_bytes, budget)?;
    }
    Ok(total)
}

fn ladder(max: u32, kind: TilingLadder) -> Vec<u32> {
    let max = max.max(1);
    match kind {
        TilingLadder::PowersOfTwo => {
            let mut v: Vec<u32> = std::iter::successors(Some(1u32), |x| x.checked_mul(2))
                .take_while(|x| *x < max)
                .collect();
            v.push(max);
            v
        }
        TilingLadder::Divisors => (1..=max).filter(|d| max % d == 0).collect(),
    }
}

/// Candidate tilings for a chunk, lexicographic, from the largest dims of the
/// layers it owns.
pub fn enumerate_tilings(kind: ChunkKind, layers: &[LayerDescriptor], budget: &HardwareBudget) -> Vec<Tiling> {
    let own: Vec<&LayerDescriptor> = layers
        .iter()
        .filter(|l| ChunkKind::for_layer(l.op_type) == kind)
        .collect();
    if own.is_empty() {
        return vec![Tiling::unit()];
    }
    let max = |f: fn(&LayerDescriptor) -> u32| own.iter().map(|l| f(l)).max().unwrap_or(1);
    let lad = budget.tiling_ladder;
    let cin = ladder(max(|l| l.in_channels / l.groups), lad);
    let cout = ladder(max(|l| l.out_channels), lad);
    let hs = ladder(max(|l| l.out_h), lad);
    let ws = ladder(max(|l| l.out_w), lad);
    let mut out = Vec::with_capacity(cin.len() * cout.len() * hs.len() * ws.len());
    for &t_cin in &cin {
        for &t_cout in &cout {
            for &t_h in &hs {
                for &t_w in &ws {
                    out.push(Tiling {
                        t_n: 1,
                        t_cin,
                        t_cout,
                        t_h,
                        t_w,
                    });
                }
            }
        }
    }
    out
}

/// Loop orders crossed with the tilings whose working set fits `gb_bytes` on
/// every owned layer, in (loop order, tiling) order.
pub fn enumerate_dataflows(
    kind: ChunkKind,
    layers: &[LayerDescriptor],
    gb_bytes: u64,
    budget: &HardwareBudget,
) -> Result<Vec<Dataflow>, AccelError> {
    let own: Vec<&LayerDescriptor> = layers
        .iter()
        .filter(|l| ChunkKind::for_layer(l.op_type) == kind)
        .collect();
    if own.is_empty() {
        return Ok(LoopOrder::ALL
            .iter()
            .map(|&loop_order| Dataflow {
                loop_order,
                tiling: Tiling::unit(),
            })
            .collect());
    }
    let feasible: Vec<Tiling> = enumerate_tilings(kind, layers, budget)
        .into_iter()
        .filter(|t| own.iter().all(|l| working_set_bytes(l, kind, t, budget) <= gb_bytes))
        .collect();
    if feasible.is_empty() {
        return Err(AccelError::EmptyFeasibleSet(kind));
    }
    Ok(LoopOrder::ALL
        .iter()
        .flat_map(|&loop_order| feasible.iter().map(move |&tiling| Dataflow { loop_order, tiling }))
        .collect())
}

/// Smallest buffer that holds every owned layer's double-buffered tile.
pub fn min_gb_size(cfg: &AcceleratorConfig, layers: &[LayerDescriptor], budget: &HardwareBudget) -> u64 {
    layers
        .iter()
        .map(|l| {
            let ch = cfg.chunk(ChunkKind::for_layer(l.op_type));
            working_set_bytes(l, ch.chunk_kind, &ch.dataflow.tiling, budget)
        })
        .max()
        .unwrap_or(0)
}
