use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use hwnas_core::accel::{AcceleratorConfig, EnergyCoeffs, PerfReport};
use hwnas_core::cosearch::{candidate_seed, cosearch, search_accelerator, CoSearchResult};
use hwnas_core::repro::reproduce_tables;
use hwnas_core::search_space::{sample_random, SubNetwork};
use hwnas_core::workloads::{compare, desk_budget, desk_suite, Comparison, Workload};
use hwnas_core::zeroshot::{combined_scores, instantiate_with, kendall_tau, nn_degree, zen_score};

use crate::config::{load_reference, RunConfig};
use crate::exit;
use crate::genome::{format_genome, parse_genome_file};
use crate::report::*;

/// Flags shared by every verb.
#[derive(Debug, Clone, Default)]
pub struct Global {
    pub output: Option<PathBuf>,
    pub json: bool,
    pub force: bool,
}

/// Picks the directory a run writes into. An existing non-empty directory
/// is only reused with `force`; otherwise a fresh `run-<unix time>`
/// subdirectory is created so earlier outputs stay untouched.
pub fn prepare_output(dir: &Path, force: bool) -> Result<PathBuf> {
    let busy = dir.exists()
        && fs::read_dir(dir)
            .with_context(|| format!("listing {}", dir.display()))?
            .next()
            .is_some();
    let target = if busy && !force {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let mut p = dir.join(format!("run-{secs}"));
        let mut n = 1;
        while p.exists() {
            p = dir.join(format!("run-{secs}-{n}"));
            n += 1;
        }
        p
    } else {
        dir.to_path_buf()
    };
    fs::create_dir_all(&target).with_context(|| format!("creating {}", target.display()))?;
    Ok(target)
}

fn emit_csv(g: &Global, file: &str, header: &[&str], rows: &[Vec<String>]) -> Result<Option<PathBuf>> {
    match &g.output {
        Some(dir) => {
            let dir = prepare_output(dir, g.force)?;
            let p = dir.join(file);
            write_csv(fs::File::create(&p).with_context(|| format!("creating {}", p.display()))?, header, rows)?;
            eprintln!("wrote {}", p.display());
            Ok(Some(dir))
        }
        None => {
            write_csv(io::stdout().lock(), header, rows)?;
            Ok(None)
        }
    }
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

pub fn read_genomes(path: &Path, cfg: &RunConfig) -> Result<Vec<SubNetwork>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let nets = parse_genome_file(&text, &cfg.space).with_context(|| format!("in {}", path.display()))?;
    if nets.is_empty() {
        bail!("{} holds no genomes", path.display());
    }
    Ok(nets)
}

#[derive(Serialize)]
struct ScoreRecord {
    genome: String,
    genome_hash: String,
    nn_degree: f64,
    zen_score: Option<f64>,
    combined_rank: usize,
}

/// nn-degree, zen-score and combined rank of each genome within the list.
pub fn score(cfg: &RunConfig, g: &Global, genomes: Option<&Path>, random: Option<usize>) -> Result<i32> {
    let nets = match (genomes, random) {
        (Some(p), None) => read_genomes(p, cfg)?,
        (None, Some(n)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.params.seed);
            (0..n).map(|_| sample_random(&cfg.space, &mut rng)).collect()
        }
        _ => bail!("give exactly one of --genomes or --random"),
    };
    let zen = &cfg.params.zen;
    let scored: Vec<(f64, Option<f64>)> = nets
        .par_iter()
        .map(|n| -> Result<(f64, Option<f64>)> {
            let seed = candidate_seed(cfg.params.seed, n.genome_hash());
            let model = instantiate_with(n, &cfg.space, seed, zen.shift_range)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
            let z = zen_score(&model, zen.alpha, zen.batch, zen.repeats, &mut rng).ok();
            Ok((nn_degree(&cfg.space, n)?, z))
        })
        .collect::<Result<_>>()?;
    let tuples: Vec<(f64, f64)> = scored.iter().map(|(a, b)| (*a, b.unwrap_or(f64::NAN))).collect();
    let ranks = combined_scores(&tuples);
    let records: Vec<ScoreRecord> = nets
        .iter()
        .zip(&scored)
        .zip(&ranks)
        .map(|((n, (nn, z)), r)| ScoreRecord {
            genome: format_genome(n),
            genome_hash: format!("{:016x}", n.genome_hash()),
            nn_degree: *nn,
            zen_score: *z,
            combined_rank: *r,
        })
        .collect();
    if g.json {
        print_json(&records)?;
    } else {
        let rows: Vec<Vec<String>> = nets
            .iter()
            .zip(&records)
            .map(|(n, r)| score_row(&r.genome, n.genome_hash(), r.nn_degree, r.zen_score, r.combined_rank))
            .collect();
        emit_csv(g, "scores.csv", &SCORE_HEADER, &rows)?;
    }
    Ok(exit::OK)
}

/// Kendall tau-b between two numeric columns of a CSV file.
pub fn kendall(g: &Global, file: &Path, x: Option<&str>, y: Option<&str>) -> Result<i32> {
    let mut rdr = csv::Reader::from_path(file).with_context(|| format!("reading {}", file.display()))?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let rows: Vec<csv::StringRecord> = rdr.records().collect::<Result<_, _>>()?;
    let numeric = |i: usize| !rows.is_empty() && rows.iter().all(|r| r.get(i).is_some_and(|v| v.trim().parse::<f64>().is_ok()));
    let pick = |name: Option<&str>, skip: Option<usize>| -> Result<usize> {
        match name {
            Some(n) => header
                .iter()
                .position(|h| h == n)
                .or_else(|| n.parse().ok().filter(|i: &usize| *i < header.len()))
                .with_context(|| format!("no column `{n}` in {}", file.display())),
            None => (0..header.len())
                .find(|i| Some(*i) != skip && numeric(*i))
                .with_context(|| format!("{} needs two numeric columns", file.display())),
        }
    };
    let xi = pick(x, None)?;
    let yi = pick(y, Some(xi))?;
    let col = |i: usize| -> Result<Vec<f64>> {
        rows.iter()
            .enumerate()
            .map(|(r, rec)| {
                let v = rec.get(i).unwrap_or("").trim();
                v.parse::<f64>()
                    .with_context(|| format!("row {}, column {}: `{v}` is not a number", r + 2, header[i]))
            })
            .collect()
    };
    let tau = kendall_tau(&col(xi)?, &col(yi)?)?;
    if g.json {
        print_json(&serde_json::json!({ "x": header[xi], "y": header[yi], "n": rows.len(), "tau": tau }))?;
    } else {
        println!("tau({}, {}) = {} over {} rows", header[xi], header[yi], fmt_sig6(tau), rows.len());
    }
    Ok(exit::OK)
}

#[derive(Serialize)]
struct AccelRecord {
    genome: String,
    config: AcceleratorConfig,
    report: PerfReport,
}

/// Coarse-to-fine accelerator search for every genome in a file.
pub fn search_accel(cfg: &RunConfig, g: &Global, genomes: &Path) -> Result<i32> {
    let nets = read_genomes(genomes, cfg)?;
    let coeffs = cfg.coeffs.resolve()?;
    let found: Vec<(AcceleratorConfig, PerfReport)> = nets
        .par_iter()
        .map(|n| search_accelerator(n, &cfg.space, &cfg.budget, &coeffs))
        .collect::<Result<_, _>>()?;
    let records: Vec<AccelRecord> = nets
        .iter()
        .zip(found)
        .map(|(n, (config, report))| AccelRecord {
            genome: format_genome(n),
            config,
            report,
        })
        .collect();
    if g.json && g.output.is_none() {
        return print_json(&records).map(|_| exit::OK);
    }
    let rows: Vec<Vec<String>> = records.iter().map(|r| perf_row(&r.genome, &r.config, &r.report)).collect();
    if let Some(dir) = emit_csv(g, "perf.csv", &PERF_HEADER, &rows)? {
        write_json(&dir.join("accel_configs.json"), &records)?;
    }
    Ok(exit::OK)
}

#[derive(Serialize)]
struct ResultEntry<'a> {
    genome: &'a str,
    flat: Vec<u32>,
    genome_hash: String,
    config: &'a AcceleratorConfig,
    report: &'a PerfReport,
    nn_degree: f64,
    zen_score: Option<f64>,
    combined_rank: usize,
}

/// Writes result.json, log.csv, pareto.csv and the resolved run config.
pub fn write_cosearch(dir: &Path, cfg: &RunConfig, coeffs: &EnergyCoeffs, res: &CoSearchResult) -> Result<()> {
    let entries: Vec<ResultEntry> = res
        .entries
        .iter()
        .map(|e| ResultEntry {
            genome: &e.genome,
            flat: e.candidate.net.to_flat(),
            genome_hash: format!("{:016x}", e.candidate.hash),
            config: &e.candidate.config,
            report: &e.candidate.report,
            nn_degree: e.score.nn_degree,
            zen_score: e.score.zen_score,
            combined_rank: e.score.combined_rank,
        })
        .collect();
    write_json(
        &dir.join("result.json"),
        &serde_json::json!({ "energy_coeffs": coeffs, "top_k": entries }),
    )?;
    let log: Vec<Vec<String>> = res.log.iter().map(log_row).collect();
    write_csv(fs::File::create(dir.join("log.csv"))?, &LOG_HEADER, &log)?;
    let pareto: Vec<Vec<String>> = res.pareto.iter().map(pareto_row).collect();
    write_csv(fs::File::create(dir.join("pareto.csv"))?, &PARETO_HEADER, &pareto)?;
    let mut resolved = cfg.clone();
    resolved.output_dir = dir.to_path_buf();
    write_json(&dir.join("run_config.json"), &resolved)
}

pub fn run_cosearch(cfg: &RunConfig, g: &Global) -> Result<i32> {
    let coeffs = cfg.coeffs.resolve()?;
    let res = cosearch(&cfg.space, &cfg.budget, &cfg.constraint, &cfg.params, &coeffs)?;
    let dir = prepare_output(g.output.as_deref().unwrap_or(&cfg.output_dir), g.force)?;
    write_cosearch(&dir, cfg, &coeffs, &res)?;
    eprintln!("wrote {}", dir.display());
    if g.json {
        print_json(&res.entries.iter().map(|e| (&e.genome, e.score.combined_rank)).collect::<Vec<_>>())?;
    } else {
        for e in &res.entries {
            println!(
                "rank {:>3}  {:>9} GOPS  {}",
                e.score.combined_rank,
                fmt_sig6(e.candidate.report.throughput_gops),
                e.genome
            );
        }
    }
    Ok(exit::OK)
}

/// Table-arithmetic checks; exit status reflects whether all passed.
pub fn reproduce(cfg: &RunConfig, g: &Global, data: &str) -> Result<i32> {
    let data = load_reference(data)?;
    let rep = reproduce_tables(&data, &cfg.budget);
    if g.json {
        print_json(&rep)?;
    } else {
        let rows: Vec<Vec<String>> = rep
            .checks
            .iter()
            .map(|c| {
                vec![
                    c.group.clone(),
                    c.name.clone(),
                    fmt_sig6(c.value),
                    fmt_sig6(c.expected),
                    fmt_sig6(c.residual),
                    fmt_sig6(c.tolerance),
                    if c.passed { "PASS" } else { "FAIL" }.into(),
                    c.note.clone(),
                ]
            })
            .collect();
        emit_csv(
            g,
            "reproduce.csv",
            &["group", "check", "value", "expected", "residual", "tolerance", "status", "note"],
            &rows,
        )?;
        let failed = rep.checks.iter().filter(|c| !c.passed).count();
        eprintln!("{} checks, {} failed", rep.checks.len(), failed);
    }
    Ok(if rep.all_passed() { exit::OK } else { exit::CHECK_FAILED })
}

/// Minimum search/oracle throughput ratio and node reduction a comparison
/// must reach.
pub const MIN_RATIO: f64 = 0.95;
pub const MIN_NODE_RATIO: f64 = 10.0;

pub fn comparison_passes(c: &Comparison) -> bool {
    c.ratio >= MIN_RATIO && c.node_ratio >= MIN_NODE_RATIO
}

pub fn oracle_compare(
    cfg: &RunConfig,
    g: &Global,
    workloads: Option<&Path>,
    random: usize,
    use_config_budget: bool,
    node_cap: u128,
) -> Result<i32> {
    let budget = if use_config_budget { cfg.budget.clone() } else { desk_budget() };
    let suite: Vec<Workload> = match workloads {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => desk_suite(random, cfg.params.seed, &budget),
    };
    let coeffs = cfg.coeffs.resolve()?;
    let results: Vec<Comparison> = suite
        .par_iter()
        .map(|w| compare(w, &budget, &coeffs, node_cap))
        .collect::<Result<_, _>>()?;
    if g.json {
        print_json(&results)?;
    } else {
        let rows: Vec<Vec<String>> = results.iter().map(compare_row).collect();
        emit_csv(g, "oracle_compare.csv", &COMPARE_HEADER, &rows)?;
    }
    Ok(if results.iter().all(comparison_passes) {
        exit::OK
    } else {
        exit::CHECK_FAILED
    })
}
