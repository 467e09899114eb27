//! Command-line front end: exposes each pipeline stage and the full sweep,
//! emitting CSV data files plus a `resolved_config.txt` echo and a `run.log`
//! with stage timings and cache counters.
//!
//! Exit codes: 0 on success, 1 on configuration or I/O errors, 2 on
//! numerical failures (non-convergence, localization, oversized sectors).

use clap::{Parser, Subcommand};
use qdlat::bands::assemble_bands_2d;
use qdlat::config::{apply_assignment, parse_config, render_config, Config};
use qdlat::csvio;
use qdlat::effective::feasibility_report;
use qdlat::error::{Error, Result};
use qdlat::pipeline::{fig3_csv, sweep_csv, Pipeline};
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "qdlat",
    about = "Effective lattice-model parameters for a gated quantum-dot array",
    version,
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,

    /// Configuration file (line-based `section.key = value`); defaults used if absent.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory for all emitted files.
    #[arg(long, global = true, default_value = "out", value_name = "DIR")]
    out: PathBuf,

    /// Override one configuration value (repeatable, applied in order).
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,

    /// Worker threads for parallel stages (default: available cores).
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,

    /// Disable the stage cache entirely.
    #[arg(long, global = true)]
    no_cache: bool,

    /// Cache directory (default: <out>/cache).
    #[arg(long, global = true, value_name = "DIR")]
    cache_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// 1D/2D band structure, shells, and hopping integrals.
    Bands,
    /// Wannier basis profiles per retained band.
    Wannier,
    /// On-site screened Coulomb tensor.
    Coulomb,
    /// Sector-resolved exact-diagonalization ground energies up to task.n_max.
    Ed,
    /// Addition spectrum A(N) plus single-particle figure data.
    Addition,
    /// Effective parameters and feasibility verdicts at task.nb.
    Effective,
    /// Summary table over task.nb_list (all admissible fillings if empty).
    Table,
    /// Parameter sweep over task.v0_list x task.d_list x task.nb_list.
    Sweep,
    /// Feasibility verdicts (thermal-energy comparisons) at task.nb.
    Feasibility,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            // explicit --help/--version succeed; anything else (including a
            // missing subcommand) is a usage error on the error stream
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                std::process::exit(0);
            }
            eprint!("{}", e.render());
            std::process::exit(1);
        }
    };
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(if e.is_numerical() { 2 } else { 1 });
        }
    }
}

struct Runner {
    pipeline: Pipeline,
    out: PathBuf,
    log: Vec<String>,
}

impl Runner {
    fn timed<T>(&mut self, name: &str, f: impl FnOnce(&Pipeline) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let v = f(&self.pipeline)?;
        self.log
            .push(format!("stage={name} seconds={:.3}", start.elapsed().as_secs_f64()));
        Ok(v)
    }

    fn write(&self, name: &str, contents: &str) -> Result<()> {
        fs::write(self.out.join(name), contents)?;
        Ok(())
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(path) => parse_config(&fs::read_to_string(path)?)?,
        None => Config::default(),
    };
    for assignment in &cli.set {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects SECTION.KEY=VALUE, got `{assignment}`")))?;
        apply_assignment(&mut cfg, key.trim(), value.trim())?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    }
    let cfg = load_config(&cli)?;
    fs::create_dir_all(&cli.out)?;
    let cache_root = if cli.no_cache {
        None
    } else {
        Some(cli.cache_dir.clone().unwrap_or_else(|| cli.out.join("cache")))
    };
    let pipeline = Pipeline::new(cfg, cache_root)?;
    fs::write(cli.out.join("resolved_config.txt"), render_config(&pipeline.cfg))?;

    let mut r = Runner {
        pipeline,
        out: cli.out.clone(),
        log: Vec::new(),
    };
    let start = Instant::now();
    dispatch(&cli.cmd, &mut r)?;
    let (hits, misses) = r.pipeline.cache_stats();
    r.log.push(format!("total_seconds={:.3}", start.elapsed().as_secs_f64()));
    r.log.push(format!("cache_hits={hits}"));
    r.log.push(format!("cache_misses={misses}"));
    fs::write(cli.out.join("run.log"), r.log.join("\n") + "\n")?;
    Ok(())
}

fn dispatch(cmd: &Cmd, r: &mut Runner) -> Result<()> {
    match cmd {
        Cmd::Bands => {
            let bands = r.timed("bands", |p| p.bands())?;
            let bands2d = assemble_bands_2d(&bands, &r.pipeline.cfg.numerics);
            r.write("bands_1d.csv", &csvio::band_1d_csv(&bands))?;
            r.write("bands_2d.csv", &csvio::bands_2d_csv(&bands2d))?;
            r.write("hoppings.csv", &csvio::hoppings_csv(&bands, &bands2d))?;
        }
        Cmd::Wannier => {
            let basis = r.timed("wannier", |p| p.basis())?;
            for w in &basis {
                r.write(&format!("wannier_band{}.csv", w.band), &csvio::wannier_csv(w))?;
            }
        }
        Cmd::Coulomb => {
            let tensor = r.timed("coulomb", |p| p.tensor())?;
            r.write("coulomb.csv", &csvio::coulomb_csv(&tensor))?;
        }
        Cmd::Ed => {
            let n_max = r.pipeline.cfg.task.n_max;
            let res = r.timed("ed", |p| p.addition(n_max))?;
            r.write("ed_energies.csv", &csvio::ed_csv(&res))?;
        }
        Cmd::Addition => {
            let n_max = r.pipeline.cfg.task.n_max;
            let tensor = r.timed("coulomb", |p| p.tensor())?;
            let res = r.timed("ed", |p| p.addition(n_max))?;
            r.write("ed_energies.csv", &csvio::ed_csv(&res))?;
            r.write("addition.csv", &csvio::addition_csv(&res))?;
            let mut eps = tensor.eps.clone();
            eps.sort_by(|a, b| a.total_cmp(b));
            r.write("fig2_spectrum.csv", &csvio::spectrum_csv(&eps))?;
            r.write("fig2_addition.csv", &csvio::addition_csv(&res))?;
        }
        Cmd::Effective => {
            let nb = r.pipeline.cfg.task.nb;
            let rows = r.timed("effective", |p| p.table(&[nb]))?;
            r.write("table.csv", &csvio::table_csv(&rows))?;
            let params = r.timed("feasibility", |p| p.effective(nb))?;
            let report = feasibility_report(&params, r.pipeline.cfg.task.temperature_k);
            r.write("feasibility.csv", &csvio::feasibility_csv(&[report]))?;
        }
        Cmd::Table => {
            let nb_list = r.pipeline.cfg.task.nb_list.clone();
            let rows = r.timed("table", |p| p.table(&nb_list))?;
            r.write("table.csv", &csvio::table_csv(&rows))?;
        }
        Cmd::Sweep => {
            let rows = r.timed("sweep", |p| p.sweep())?;
            r.write("sweep.csv", &sweep_csv(&rows))?;
            let fig3 = r.timed("fig3", |p| p.fig3(&rows))?;
            r.write("fig3.csv", &fig3_csv(&fig3))?;
        }
        Cmd::Feasibility => {
            let nb = r.pipeline.cfg.task.nb;
            let params = r.timed("effective", |p| p.effective(nb))?;
            let report = feasibility_report(&params, r.pipeline.cfg.task.temperature_k);
            r.write("feasibility.csv", &csvio::feasibility_csv(&[report]))?;
        }
    }
    Ok(())
}
