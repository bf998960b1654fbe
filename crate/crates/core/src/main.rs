use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mmrec::bench::{self, BenchError, LoadMode};
use mmrec::corpus::{dataset_stats, load_interactions, InteractionFormat};
use mmrec::latefusion::{aggregate_lists, lists_by_user, read_interchange, write_interchange, AggregationRule, MissingRank, DEFAULT_RRF_K};

#[derive(Parser)]
#[command(name = "mmrec", version, about = "Multimodal top-N recommendation benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DataFormat {
    Tsv,
    Dat,
}

#[derive(Clone, Copy, ValueEnum)]
enum XMetric {
    Coldrate,
    Coverage,
    Novelty,
    Ild,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Warn about unknown config keys instead of rejecting them.
        #[arg(long)]
        lax: bool,
    },
    /// Print corpus statistics.
    Stats {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "tsv")]
        format: DataFormat,
    },
    /// Align and fuse the configured embeddings without training.
    Fuse {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        lax: bool,
        /// Output directory; defaults to the config's run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Merge ranked-list interchange files into one meta-ranking.
    Aggregate {
        #[arg(long, num_args = 1.., required = true)]
        lists: Vec<PathBuf>,
        #[arg(long, value_parser = ["borda", "wborda", "avgrank", "rrf", "weighted_borda", "average_rank"])]
        rule: String,
        #[arg(long, default_value_t = DEFAULT_RRF_K)]
        rrf_k: u32,
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
        #[arg(long)]
        top_n: Option<usize>,
        #[arg(long)]
        catalog_size: Option<usize>,
        /// Place missing items at the catalog size instead of one past the list end.
        #[arg(long)]
        missing_at_catalog: bool,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute accuracy trade-off areas over every results.csv under a directory.
    Report {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long, value_enum, default_value = "coldrate")]
        x: XMetric,
    },
}

enum Failure {
    Usage(String),
    Run(String),
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::ConfigNotFound(_) => Failure::Usage(e.to_string()),
            e => Failure::Run(error_chain(&e)),
        }
    }
}

fn error_chain(e: &dyn std::error::Error) -> String {
    let mut msg = e.to_string();
    let mut src = e.source();
    while let Some(s) = src {
        let part = s.to_string();
        if !msg.contains(&part) {
            msg.push_str(": ");
            msg.push_str(&part);
        }
        src = s.source();
    }
    msg
}

fn run_err(e: impl std::error::Error) -> Failure {
    Failure::Run(error_chain(&e))
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> Failure + '_ {
    move |e| Failure::Run(format!("{}: {e}", path.display()))
}

fn load(config: &Path, lax: bool) -> Result<bench::LoadedConfig, Failure> {
    let mode = if lax { LoadMode::Lax } else { LoadMode::Strict };
    Ok(bench::load_config(config, mode)?)
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { config, lax } => {
            let loaded = load(&config, lax)?;
            let outcome = bench::run_experiment(&loaded.config, &loaded.warnings)?;
            let mut out = io::stdout().lock();
            for r in &outcome.rows {
                let show = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
                writeln!(
                    out,
                    "{}\t{}\t{}\trecall@{k}={}\tndcg@{k}={}\tcoverage={}\tcoldrate={}",
                    r.model,
                    r.fusion,
                    r.stage,
                    show(r.recall),
                    show(r.ndcg),
                    show(r.coverage),
                    show(r.coldrate),
                    k = r.k,
                )
                .map_err(run_err)?;
            }
            writeln!(out, "outputs in {}", outcome.dir.display()).map_err(run_err)?;
        }
        Command::Stats { data, format } => {
            let format = match format {
                DataFormat::Tsv => InteractionFormat::Tsv,
                DataFormat::Dat => InteractionFormat::MovielensDat,
            };
            let log = load_interactions(&data, format).map_err(run_err)?;
            let stats = dataset_stats(&log).map_err(run_err)?;
            print!("{stats}");
        }
        Command::Fuse { config, lax, out } => {
            let loaded = load(&config, lax)?;
            for w in &loaded.warnings {
                log::warn!("{w}");
            }
            let dir = out.unwrap_or_else(|| loaded.config.output_dir());
            let fused = bench::run_fusion_only(&loaded.config, &dir)?;
            println!(
                "fused {} items into {} columns ({}) in {}",
                fused.item_ids.len(),
                fused.matrix.ncols(),
                fused.operator.label(),
                dir.join("fused.tsv").display()
            );
        }
        Command::Aggregate { lists, rule, rrf_k, weights, top_n, catalog_size, missing_at_catalog, out } => {
            let rule: AggregationRule = rule.parse().map_err(run_err)?;
            let systems = lists
                .iter()
                .map(|p| {
                    let file = File::open(p).map_err(io_err(p))?;
                    let rows = read_interchange(BufReader::new(file)).map_err(|e| Failure::Run(format!("{}: {e}", p.display())))?;
                    lists_by_user(&rows).map_err(|e| Failure::Run(format!("{}: {e}", p.display())))
                })
                .collect::<Result<Vec<BTreeMap<String, Vec<String>>>, Failure>>()?;
            let missing = if missing_at_catalog { MissingRank::CatalogSize } else { MissingRank::ListLenPlusOne };
            let rows = aggregate_lists(&systems, rule, weights, rrf_k, missing, catalog_size, top_n).map_err(run_err)?;
            match out {
                Some(p) => {
                    let file = File::create(&p).map_err(io_err(&p))?;
                    write_interchange(BufWriter::new(file), &rows).map_err(run_err)?;
                }
                None => write_interchange(io::stdout().lock(), &rows).map_err(run_err)?,
            }
        }
        Command::Report { runs, x } => {
            let x = match x {
                XMetric::Coldrate => "coldrate",
                XMetric::Coverage => "coverage",
                XMetric::Novelty => "novelty",
                XMetric::Ild => "ild",
            };
            if !runs.is_dir() {
                return Err(Failure::Usage(format!("runs directory {} does not exist", runs.display())));
            }
            let collected = bench::collect_results(&runs)?;
            let rows: Vec<_> = collected.into_iter().flat_map(|(_, r)| r).collect();
            let report = bench::tradeoff_report(&rows, x)?;
            let mut out = io::stdout().lock();
            writeln!(out, "model\tx_metric\tn_points\tauc").map_err(run_err)?;
            for r in report {
                let auc = r.auc.map(|a| a.to_string()).unwrap_or_else(|| "NA".into());
                writeln!(out, "{}\t{}\t{}\t{auc}", r.model, r.x_metric, r.n_points).map_err(run_err)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
