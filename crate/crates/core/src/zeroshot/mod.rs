//! Training-free scoring: NN-Degree, Zen-Score on randomly initialized
//! hybrid networks, the combined rank and Kendall tau.

mod net;
mod tensor;

pub use net::{
    batch_norm, instantiate, instantiate_with, quantize_shift, BnRecord, ForwardOutput, HybridNet,
    NetLayer, ShiftRange, ShiftWeight, Weights, BN_EPS,
};
pub use tensor::Tensor;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::search_space::{expand_detailed, ExpandedNet, SearchSpace, SpaceError, SubNetwork};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ZeroShotError {
    #[error("input shape {found:?} does not match expected {expected:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("score is not finite")]
    NonFiniteScore,
    #[error("rank correlation undefined: all values tied")]
    AllTied,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Scores of one candidate within a population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroShotScore {
    pub nn_degree: f64,
    /// `None` when the forward pass degenerated.
    pub zen_score: Option<f64>,
    pub combined_rank: usize,
}

/// Zen-Score settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZenConfig {
    pub alpha: f64,
    pub batch: usize,
    pub repeats: usize,
    #[serde(default)]
    pub shift_range: ShiftRange,
}

impl Default for ZenConfig {
    fn default() -> Self {
        ZenConfig {
            alpha: 0.01,
            batch: 16,
            repeats: 1,
            shift_range: ShiftRange::default(),
        }
    }
}

/// Channel topology of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTopology {
    pub c_in: Vec<u32>,
    pub c_out: Vec<u32>,
    pub residual: u32,
}

pub fn block_topologies(ex: &ExpandedNet) -> Vec<BlockTopology> {
    ex.blocks
        .iter()
        .map(|b| {
            let ls = &ex.layers[b.start..b.start + b.len];
            BlockTopology {
                c_in: ls.iter().map(|l| l.in_channels).collect(),
                c_out: ls.iter().map(|l| l.out_channels).collect(),
                residual: b.residual,
            }
        })
        .collect()
}

/// Sum over blocks of mean output width plus skip width over total input width.
pub fn nn_degree_blocks(blocks: &[BlockTopology]) -> f64 {
    blocks
        .iter()
        .map(|b| {
            let n = b.c_out.len() as f64;
            let out: f64 = b.c_out.iter().map(|c| *c as f64).sum();
            let inp: f64 = b.c_in.iter().map(|c| *c as f64).sum();
            out / n + b.residual as f64 / inp
        })
        .sum()
}

pub fn nn_degree(space: &SearchSpace, net: &SubNetwork) -> Result<f64, SpaceError> {
    Ok(nn_degree_blocks(&block_topologies(&expand_detailed(space, net)?)))
}

/// Sum over normalization layers and samples of `log sqrt(mean_j sigma_kij)`.
pub fn bn_log_term(records: &[BnRecord]) -> f64 {
    let mut total = 0.0;
    for r in records {
        for row in r.sample_var.chunks(r.channels) {
            let mean = row.iter().sum::<f64>() / r.channels as f64;
            total += 0.5 * mean.ln();
        }
    }
    total
}

/// Perturbation sensitivity of the feature extractor plus the normalization
/// term. Inputs are standard normal of shape `(batch, net input)`.
pub fn zen_score<R: Rng + ?Sized>(
    net: &HybridNet,
    alpha: f64,
    batch: usize,
    repeats: usize,
    rng: &mut R,
) -> Result<f64, ZeroShotError> {
    if !(alpha > 0.0) || batch < 2 || repeats == 0 {
        return Err(ZeroShotError::InvalidArgument(format!(
            "alpha = {alpha}, batch = {batch}, repeats = {repeats}"
        )));
    }
    let [c, h, w] = net.input_shape();
    let shape = [batch, c, h, w];
    let mut norm_sum = 0.0;
    let mut bn_sum = 0.0;
    for _ in 0..repeats {
        let x = Tensor::randn(shape, rng);
        let eps = Tensor::randn(shape, rng);
        let clean = net.forward_features(&x)?;
        let noisy = net.forward_features(&x.axpy(alpha, &eps))?;
        if !clean.output.is_finite() || !noisy.output.is_finite() {
            return Err(ZeroShotError::NonFiniteScore);
        }
        norm_sum += clean.output.frobenius_diff(&noisy.output);
        bn_sum += bn_log_term(&clean.bn);
    }
    let score = (norm_sum / repeats as f64).ln() + bn_sum / repeats as f64;
    if score.is_finite() {
        Ok(score)
    } else {
        Err(ZeroShotError::NonFiniteScore)
    }
}

fn is_degenerate(p: &(f64, f64)) -> bool {
    !p.0.is_finite() || !p.1.is_finite()
}

fn rank_of(v: f64, values: impl Iterator<Item = f64>) -> usize {
    values.filter(|w| *w > v).count()
}

/// Rank on zen (`.1`) plus rank on nn-degree (`.0`); rank 0 is the highest
/// raw value. Degenerate entries take rank `|N|` on both.
pub fn combined_score(candidate: usize, population: &[(f64, f64)]) -> usize {
    let n = population.len();
    let me = population[candidate];
    if is_degenerate(&me) {
        return 2 * n;
    }
    let ok = || population.iter().filter(|p| !is_degenerate(p));
    rank_of(me.1, ok().map(|p| p.1)) + rank_of(me.0, ok().map(|p| p.0))
}

pub fn combined_scores(population: &[(f64, f64)]) -> Vec<usize> {
    (0..population.len())
        .map(|i| combined_score(i, population))
        .collect()
}

/// Tie-corrected Kendall tau-b.
pub fn kendall_tau(xs: &[f64], ys: &[f64]) -> Result<f64, ZeroShotError> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(ZeroShotError::InvalidArgument(format!(
            "need two equal-length lists of at least 2 values, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let (mut c, mut d, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            let dx = xs[i].partial_cmp(&xs[j]).expect("finite values");
            let dy = ys[i].partial_cmp(&ys[j]).expect("finite values");
            use std::cmp::Ordering::Equal;
            match (dx, dy) {
                (Equal, Equal) => {}
                (Equal, _) => tx += 1,
                (_, Equal) => ty += 1,
                (a, b) if a == b => c += 1,
                _ => d += 1,
            }
        }
    }
    let den = (((c + d + tx) * (c + d + ty)) as f64).sqrt();
    if den == 0.0 {
        return Err(ZeroShotError::AllTied);
    }
    Ok((c - d) as f64 / den)
}
