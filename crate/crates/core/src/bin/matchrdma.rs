use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use matchrdma::config::ScenarioConfig;
use matchrdma::error::Result;
use matchrdma::metrics::{read_csv, summarize_comparison, write_comparison_csv, write_csv, MetricsRecord};
use matchrdma::runner::{run_sweep_reporting, SweepGrid};

#[derive(Parser)]
#[command(name = "matchrdma", version, about = "Long-haul RDMA over OTN simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a scenario over a grid of axes, e.g.
    /// `distance=1,1000;size=1KB,8MB;concurrency=4;scheme=all`.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        grid: String,
        #[command(flatten)]
        common: Common,
    },
    /// MatchRDMA vs DCQCN-like ratios from a sweep CSV.
    Summarize {
        csv: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Write the metrics CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write buffer, budget and slot traces (into DIR, default: next to --out).
    #[arg(long, value_name = "DIR", num_args = 0..=1)]
    trace: Option<Option<PathBuf>>,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Repeat with N consecutive seeds, one row each.
    #[arg(long)]
    seeds: Option<u64>,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(d) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(d)?;
            }
            Box::new(BufWriter::new(File::create(p)?))
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn prepare(config: &Path, common: &Common) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::load(config)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(t) = &common.trace {
        cfg.trace.enabled = true;
        cfg.trace.dir = Some(match t {
            Some(dir) => dir.clone(),
            None => common
                .out
                .as_deref()
                .and_then(Path::parent)
                .filter(|d| !d.as_os_str().is_empty())
                .map_or_else(|| PathBuf::from("."), Path::to_path_buf),
        });
    }
    Ok(cfg)
}

fn execute(cfg: &ScenarioConfig, grid: SweepGrid, common: &Common) -> Result<Vec<MetricsRecord>> {
    let grid = match common.seeds {
        Some(n) => grid.with_seed_count(cfg.seed, n),
        None => grid,
    };
    let (rows, errors): (Vec<_>, Vec<_>) = run_sweep_reporting(cfg, &grid).into_iter().unzip();
    for (r, e) in rows.iter().zip(&errors) {
        if let Some(e) = e {
            eprintln!("{}: {e}", r.scenario_id);
        }
    }
    write_csv(output(common.out.as_deref())?, &rows)?;
    Ok(rows)
}

fn main_inner(cli: Cli) -> Result<bool> {
    let rows = match cli.cmd {
        Cmd::Run { config, common } => {
            let cfg = prepare(&config, &common)?;
            if common.seeds.is_none() {
                // A single run keeps the configured scenario id.
                let row = match matchrdma::runner::run_detailed(&cfg) {
                    Ok((r, _)) => r,
                    Err(e) => {
                        eprintln!("{}: {e}", cfg.scenario_id);
                        MetricsRecord::failed(&cfg, &e)
                    }
                };
                write_csv(output(common.out.as_deref())?, std::slice::from_ref(&row))?;
                vec![row]
            } else {
                execute(&cfg, SweepGrid::default(), &common)?
            }
        }
        Cmd::Sweep { config, grid, common } => {
            let cfg = prepare(&config, &common)?;
            execute(&cfg, SweepGrid::parse(&grid)?, &common)?
        }
        Cmd::Summarize { csv, out } => {
            let rows = read_csv(File::open(&csv)?)?;
            let c = summarize_comparison(&rows);
            for w in &c.warnings {
                eprintln!("warning: {w}");
            }
            write_comparison_csv(output(out.as_deref())?, &c)?;
            let show = |x: Option<f64>| x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}"));
            eprintln!(
                "up to: goodput {}x, buffer -{}%, pause -{}%, fct -{}%",
                show(c.max_goodput_ratio),
                show(c.max_buffer_reduction_pct),
                show(c.max_pause_reduction_pct),
                show(c.max_fct_reduction_pct)
            );
            return Ok(true);
        }
    };
    Ok(rows.iter().all(MetricsRecord::is_ok))
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
