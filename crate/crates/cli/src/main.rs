use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use hwnas_cli::commands::{self, Global};
use hwnas_cli::config::{self, RunConfig};
use hwnas_cli::{exit, exit_code};
use hwnas_core::cosearch::DEFAULT_NODE_CAP;

/// Hybrid-network and accelerator co-search.
#[derive(Parser, Debug)]
#[command(name = "hwnas", version)]
struct Cli {
    /// JSON run config; overlaid by HWNAS_* variables and then by flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; tabular verbs print to stdout without it.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    /// Print the resolved config and exit.
    #[arg(long, global = true)]
    dry_run: bool,
    /// Reuse a non-empty output directory.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Zero-shot scores and combined rank of a set of genomes.
    Score {
        #[arg(long, conflicts_with = "random")]
        genomes: Option<PathBuf>,
        /// Score N random genomes from the space.
        #[arg(long)]
        random: Option<usize>,
    },
    /// Kendall tau-b between two numeric CSV columns.
    Kendall {
        file: PathBuf,
        /// Column name or index (default: first numeric column).
        #[arg(long)]
        x: Option<String>,
        #[arg(long)]
        y: Option<String>,
    },
    /// Coarse-to-fine accelerator search for each genome in a file.
    SearchAccel {
        #[arg(long)]
        genomes: PathBuf,
    },
    /// Evolutionary network/accelerator co-search.
    Cosearch {
        #[arg(long)]
        population: Option<usize>,
        #[arg(long)]
        expand_size: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Arithmetic checks against the bundled reference tables.
    ReproduceTables {
        /// Reference JSON file, or "bundled".
        #[arg(long, default_value = "bundled")]
        data: String,
    },
    /// Coarse-to-fine search against exhaustive enumeration.
    OracleCompare {
        /// JSON list of workloads (default: seeded desk suite).
        #[arg(long)]
        workloads: Option<PathBuf>,
        /// Random workloads in the default suite.
        #[arg(long, default_value_t = 6)]
        random: usize,
        /// Use the config budget instead of the desk budget.
        #[arg(long)]
        config_budget: bool,
        #[arg(long, default_value_t = DEFAULT_NODE_CAP)]
        node_cap: u128,
    },
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = config::load(cli.config.as_deref(), std::env::vars())?;
    if let Some(s) = cli.seed {
        cfg.params.seed = s;
    }
    if let Some(o) = &cli.output {
        cfg.output_dir = o.clone();
    }
    if let Cmd::Cosearch {
        population,
        expand_size,
        iterations,
        top_k,
    } = &cli.cmd
    {
        let p = &mut cfg.params;
        p.population = population.unwrap_or(p.population);
        p.expand_size = expand_size.unwrap_or(p.expand_size);
        p.iterations = iterations.unwrap_or(p.iterations);
        p.top_k = top_k.unwrap_or(p.top_k);
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<i32> {
    let cfg = resolve(&cli)?;
    if cli.dry_run {
        // a closed pipe is not an error worth reporting
        let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(exit::OK);
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let g = Global {
        output: cli.output.clone(),
        json: cli.json,
        force: cli.force,
    };
    match &cli.cmd {
        Cmd::Score { genomes, random } => commands::score(&cfg, &g, genomes.as_deref(), *random),
        Cmd::Kendall { file, x, y } => commands::kendall(&g, file, x.as_deref(), y.as_deref()),
        Cmd::SearchAccel { genomes } => commands::search_accel(&cfg, &g, genomes),
        Cmd::Cosearch { .. } => commands::run_cosearch(&cfg, &g),
        Cmd::ReproduceTables { data } => commands::reproduce(&cfg, &g, data),
        Cmd::OracleCompare {
            workloads,
            random,
            config_budget,
            node_cap,
        } => commands::oracle_compare(&cfg, &g, workloads.as_deref(), *random, *config_budget, *node_cap),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
