//! CSV emission. Column orders are documented in `data/csv_schema.md`.

use std::io::Write;

use hwnas_core::accel::{AcceleratorConfig, PerfReport};
use hwnas_core::cosearch::{IterationLog, RankedEntry};
use hwnas_core::workloads::Comparison;

/// Six significant digits, fixed notation for moderate magnitudes,
/// scientific otherwise. Trailing zeros are dropped.
pub fn fmt_sig6(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf" } else { "-inf" }.into();
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.5e}");
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim(format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim(mant.to_string()))
    }
}

fn trim(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_sig6).unwrap_or_default()
}

pub const SCORE_HEADER: [&str; 5] = ["genome", "genome_hash", "nn_degree", "zen_score", "combined_rank"];

pub fn score_row(genome: &str, hash: u64, nn: f64, zen: Option<f64>, rank: usize) -> Vec<String> {
    vec![
        genome.into(),
        format!("{hash:016x}"),
        fmt_sig6(nn),
        opt(zen),
        rank.to_string(),
    ]
}

pub const PERF_HEADER: [&str; 15] = [
    "genome",
    "klut",
    "dsp",
    "bram",
    "latency_ms",
    "gops",
    "gops_per_klut",
    "gops_per_dsp",
    "fps",
    "energy_mj",
    "pe_c",
    "pe_s",
    "pe_a",
    "gb_bytes",
    "mops_total",
];

pub fn perf_row(genome: &str, cfg: &AcceleratorConfig, r: &PerfReport) -> Vec<String> {
    vec![
        genome.into(),
        fmt_sig6(r.resources.lut as f64 / 1000.0),
        r.resources.dsp.to_string(),
        fmt_sig6(r.resources.bram_blocks),
        fmt_sig6(r.latency_s * 1e3),
        fmt_sig6(r.throughput_gops),
        fmt_sig6(r.gops_per_klut),
        fmt_sig6(r.gops_per_dsp),
        fmt_sig6(r.fps),
        fmt_sig6(r.energy_mj),
        cfg.chunk_c.pe_count.to_string(),
        cfg.chunk_s.pe_count.to_string(),
        cfg.chunk_a.pe_count.to_string(),
        cfg.gb_bytes.to_string(),
        fmt_sig6(r.ops.total()),
    ]
}

pub const LOG_HEADER: [&str; 13] = [
    "iteration",
    "population",
    "offspring",
    "evaluated",
    "cache_hits",
    "rejected",
    "best_rank",
    "mean_rank",
    "best_zen",
    "mean_zen",
    "best_nn_degree",
    "best_gops",
    "mean_gops",
];

pub fn log_row(l: &IterationLog) -> Vec<String> {
    vec![
        l.iteration.to_string(),
        l.population.to_string(),
        l.offspring.to_string(),
        l.evaluated.to_string(),
        l.cache_hits.to_string(),
        l.rejected.to_string(),
        l.best_rank.to_string(),
        fmt_sig6(l.mean_rank),
        fmt_sig6(l.best_zen),
        fmt_sig6(l.mean_zen),
        fmt_sig6(l.best_nn_degree),
        fmt_sig6(l.best_gops),
        fmt_sig6(l.mean_gops),
    ]
}

pub const PARETO_HEADER: [&str; 6] = ["genome", "combined_rank", "gops", "latency_ms", "klut", "dsp"];

pub fn pareto_row(e: &RankedEntry) -> Vec<String> {
    let r = &e.candidate.report;
    vec![
        e.genome.clone(),
        e.score.combined_rank.to_string(),
        fmt_sig6(r.throughput_gops),
        fmt_sig6(r.latency_s * 1e3),
        fmt_sig6(r.resources.lut as f64 / 1000.0),
        r.resources.dsp.to_string(),
    ]
}

pub const COMPARE_HEADER: [&str; 11] = [
    "workload",
    "layers",
    "grid_points",
    "oracle_gops",
    "search_gops",
    "fine_only_gops",
    "coarse_only_gops",
    "ratio",
    "oracle_nodes",
    "search_nodes",
    "node_ratio",
];

pub fn compare_row(c: &Comparison) -> Vec<String> {
    vec![
        c.workload.clone(),
        c.layers.to_string(),
        format!("{}x{}x{}", c.grid_points[0], c.grid_points[1], c.grid_points[2]),
        fmt_sig6(c.oracle_gops),
        fmt_sig6(c.search_gops),
        fmt_sig6(c.fine_only_gops),
        fmt_sig6(c.coarse_only_gops),
        fmt_sig6(c.ratio),
        c.oracle_nodes.to_string(),
        c.search_nodes.to_string(),
        fmt_sig6(c.node_ratio),
    ]
}

pub fn write_csv<W: Write>(out: W, header: &[&str], rows: &[Vec<String>]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}
