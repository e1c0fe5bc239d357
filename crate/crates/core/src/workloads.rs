//! Small layer lists and PE grids for comparing the accelerator searches
//! against the oracle.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::accel::{Bitwidths, EnergyCoeffs, HardwareBudget, TilingLadder};
use crate::cosearch::{oracle_layers, search_variant, ManualDesign, Objective, PeGrid, SearchVariant};
use crate::search_space::{LayerDescriptor, LayerType};
use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub name: String,
    pub layers: Vec<LayerDescriptor>,
    pub grid: PeGrid,
}

/// 32 DSP (64 conv PEs), 12k LUT, 64 KiB buffer.
pub fn desk_budget() -> HardwareBudget {
    HardwareBudget {
        dsp_total: 32,
        dsp_reservation: 1.0,
        lut_total: 12_000,
        lut_overhead: 0,
        bram_bits_total: 64 * 1024 * 8,
        dram_bandwidth_bytes_per_cycle: 8.0,
        frequency_hz: 200e6,
        bitwidths: Bitwidths::default(),
        tiling_ladder: TilingLadder::PowersOfTwo,
    }
}

fn grid_axis<R: Rng>(rng: &mut R, max: u32, points: usize) -> Vec<u32> {
    // log-spaced around the range, always including the top
    let mut v: Vec<u32> = (0..points)
        .map(|i| {
            let f = (i + 1) as f64 / points as f64;
            ((max as f64).powf(f)).round().max(1.0) as u32
        })
        .collect();
    let jitter = rng.random_range(0..2);
    if jitter == 1 {
        v[0] = (v[0] / 2).max(1);
    }
    v.sort_unstable();
    v.dedup();
    v
}

/// A random chain of at most six layers that uses every layer type.
pub fn random_workload(seed: u64, budget: &HardwareBudget) -> Workload {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..=6);
    let mut types: Vec<LayerType> = LayerType::ALL.to_vec();
    while types.len() < n {
        types.push(LayerType::ALL[rng.random_range(0..3)]);
    }
    types.shuffle(&mut rng);
    let mut c = [8u32, 16, 24][rng.random_range(0..3)];
    let mut hw = [8u32, 16][rng.random_range(0..2)];
    let mut layers = Vec::with_capacity(n);
    for t in types {
        let shape = rng.random_range(0..3);
        let stride = if hw > 4 && rng.random_bool(0.25) { 2 } else { 1 };
        let l = match shape {
            // pointwise
            0 => LayerDescriptor::new(t, c, [8, 16, 32][rng.random_range(0..3)], 1, 1, 1, hw, hw),
            // depthwise 3x3
            1 => LayerDescriptor::new(t, c, c, 3, stride, c, hw, hw),
            // dense 3x3
            _ => LayerDescriptor::new(t, c, [8, 16, 24][rng.random_range(0..3)], 3, stride, 1, hw, hw),
        };
        c = l.out_channels;
        hw = l.out_h;
        layers.push(l);
    }
    let max_c = budget.max_pe_c();
    let room = (budget.lut_total - budget.lut_overhead - 37 * max_c as u64) / (34 + 29);
    let pc = rng.random_range(4..=6);
    let ps = rng.random_range(4..=6);
    let pa = rng.random_range(4..=6);
    let grid = PeGrid {
        c: grid_axis(&mut rng, max_c, pc),
        s: grid_axis(&mut rng, room as u32, ps),
        a: grid_axis(&mut rng, room as u32, pa),
    };
    Workload {
        name: format!("random-{seed}"),
        layers,
        grid,
    }
}

/// Conv layers only: the other chunks idle, so the conv search alone
/// decides the interval.
pub fn all_conv_workload(budget: &HardwareBudget) -> Workload {
    let layers = vec![
        LayerDescriptor::new(LayerType::Conv, 8, 16, 3, 1, 1, 16, 16),
        LayerDescriptor::new(LayerType::Conv, 16, 16, 3, 1, 16, 16, 16),
        LayerDescriptor::new(LayerType::Conv, 16, 32, 1, 1, 1, 16, 16),
    ];
    let max_c = budget.max_pe_c();
    Workload {
        name: "all-conv".into(),
        layers,
        grid: PeGrid {
            c: vec![max_c / 8, max_c / 4, max_c / 2, max_c],
            s: vec![1, 2, 4, 8],
            a: vec![1, 2, 4, 8],
        },
    }
}

/// Seeded random workloads followed by the all-conv workload.
pub fn desk_suite(n_random: usize, seed: u64, budget: &HardwareBudget) -> Vec<Workload> {
    let mut v: Vec<Workload> = (0..n_random as u64)
        .map(|i| random_workload(seed.wrapping_mul(1000).wrapping_add(i), budget))
        .collect();
    v.push(all_conv_workload(budget));
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub workload: String,
    pub layers: usize,
    pub grid_points: [usize; 3],
    pub oracle_gops: f64,
    pub search_gops: f64,
    pub fine_only_gops: f64,
    pub coarse_only_gops: f64,
    pub ratio: f64,
    pub oracle_nodes: u64,
    pub search_nodes: u64,
    pub node_ratio: f64,
}

impl Comparison {
    pub fn ordering_holds(&self) -> bool {
        self.search_gops >= self.fine_only_gops && self.fine_only_gops >= self.coarse_only_gops
    }
}

/// Oracle, coarse-to-fine and both single-phase variants on one workload.
pub fn compare(w: &Workload, budget: &HardwareBudget, coeffs: &EnergyCoeffs, node_cap: u128) -> Result<Comparison, Error> {
    let oracle = oracle_layers(&w.layers, budget, coeffs, &w.grid, Objective::MaximizeThroughput, node_cap)?;
    let manual = ManualDesign::default();
    let run = |v| search_variant(&w.layers, budget, coeffs, v, &manual);
    let both = run(SearchVariant::CoarseFine)?;
    let fine = run(SearchVariant::FineOnly)?;
    let coarse = run(SearchVariant::CoarseOnly)?;
    Ok(Comparison {
        workload: w.name.clone(),
        layers: w.layers.len(),
        grid_points: [w.grid.c.len(), w.grid.s.len(), w.grid.a.len()],
        oracle_gops: oracle.report.throughput_gops,
        search_gops: both.report.throughput_gops,
        fine_only_gops: fine.report.throughput_gops,
        coarse_only_gops: coarse.report.throughput_gops,
        ratio: both.report.throughput_gops / oracle.report.throughput_gops,
        oracle_nodes: oracle.nodes,
        search_nodes: both.nodes,
        node_ratio: oracle.nodes as f64 / both.nodes.max(1) as f64,
    })
}
