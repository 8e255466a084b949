//! Command-line front end.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;

use super::config::{ExperimentConfig, Preset};
use super::experiment::{materialize, run_experiment};
use super::metrics::{read_series, write_metrics_csv};
use super::rates::{fit_rate, parse_window};
use crate::constraints::{lo_l1, lo_trace, project_l1, project_trace, TRACE_LO_TOL};
use crate::linalg::{seeded_rng, standard_normal_vector};

#[derive(Debug, Parser)]
#[command(name = "defw", version, about = "Decentralized Frank-Wolfe simulator")]
pub struct Cli {
    /// Worker threads for per-agent work (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PresetArg {
    Desk,
    Paper,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Desk => Preset::Desk,
            PresetArg::Paper => Preset::Paper,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment and write its metrics CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// CSV path; overrides `output` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "desk")]
        preset: PresetArg,
    },
    /// Fit a log-log slope to one CSV column.
    Rates {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "suboptimality")]
        series: String,
        /// Iteration window `lo:hi`.
        #[arg(long)]
        window: String,
        /// JSON path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time linear oracles against projections.
    OracleBench {
        /// Matrix side lengths; the ℓ1 case uses vectors of length side².
        #[arg(long, value_delimiter = ',', default_value = "20,40,80,160")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic instance and its topology to a directory.
    Datagen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "data")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "desk")]
        preset: PresetArg,
    },
}

pub fn execute(cli: Cli) -> anyhow::Result<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            preset,
        } => {
            let cfg = load_config(&config, seed, preset)?;
            let path = out
                .or_else(|| cfg.output.clone())
                .unwrap_or_else(|| PathBuf::from(format!("{}.csv", cfg.kind.name())));
            let output = run_experiment(&cfg).with_context(|| format!("running {}", config.display()))?;
            let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            write_metrics_csv(BufWriter::new(file), &output.columns, &output.metrics.records)?;
            log::info!(
                "{}: {} iterations, lambda2 = {:.6}, F* = {:?}",
                cfg.kind.name(),
                output.metrics.records.len(),
                output.lambda2,
                output.optimum
            );
            println!("wrote {}", path.display());
        }
        Command::Rates {
            input,
            series,
            window,
            out,
        } => {
            let file = File::open(&input).with_context(|| format!("opening {}", input.display()))?;
            let points = read_series(file, &series).with_context(|| format!("reading {}", input.display()))?;
            let fit = fit_rate(&points, parse_window(&window)?)?;
            let json = serde_json::to_string_pretty(&fit)?;
            match out {
                Some(p) => std::fs::write(&p, json + "\n").with_context(|| format!("writing {}", p.display()))?,
                None => println!("{json}"),
            }
        }
        Command::OracleBench { sizes, reps, seed, out } => {
            let sink: Box<dyn Write> = match &out {
                Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
                None => Box::new(io::stdout()),
            };
            oracle_bench(&sizes, reps.max(1), seed, sink)?;
        }
        Command::Datagen {
            config,
            seed,
            out,
            preset,
        } => {
            let cfg = load_config(&config, seed, preset)?;
            materialize(&cfg, &out).with_context(|| format!("writing instance to {}", out.display()))?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn load_config(path: &Path, seed: Option<u64>, preset: PresetArg) -> anyhow::Result<ExperimentConfig> {
    if !path.exists() {
        bail!("config file {} does not exist", path.display());
    }
    let mut cfg = ExperimentConfig::load(path, preset.into()).with_context(|| format!("loading {}", path.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn oracle_bench(sizes: &[usize], reps: usize, seed: u64, mut out: Box<dyn Write>) -> anyhow::Result<()> {
    writeln!(out, "set,size,lo_ms,projection_ms")?;
    let mut rng = seeded_rng(seed);
    for &side in sizes {
        let d = side * side;
        let g = standard_normal_vector(d, &mut rng);
        let radius = 1.0;
        let (lo, proj) = time_pair(
            reps,
            || {
                lo_l1(&g, radius);
            },
            || {
                project_l1(&g, radius);
            },
        );
        writeln!(out, "l1,{d},{lo:e},{proj:e}")?;

        let gm = DMatrix::from_column_slice(side, side, g.as_slice());
        let mut err = None;
        let (lo, proj) = time_pair(
            reps,
            || {
                if let Err(e) = lo_trace(&gm, radius, TRACE_LO_TOL) {
                    err = Some(e);
                }
            },
            || {
                let _ = project_trace(&gm, radius);
            },
        );
        if let Some(e) = err {
            return Err(e.into());
        }
        writeln!(out, "trace,{side}x{side},{lo:e},{proj:e}")?;
    }
    out.flush()?;
    Ok(())
}

fn time_pair(reps: usize, mut a: impl FnMut(), mut b: impl FnMut()) -> (f64, f64) {
    let time = |f: &mut dyn FnMut()| {
        let start = Instant::now();
        for _ in 0..reps {
            f();
        }
        start.elapsed().as_secs_f64() * 1e3 / reps as f64
    };
    (time(&mut a), time(&mut b))
}
