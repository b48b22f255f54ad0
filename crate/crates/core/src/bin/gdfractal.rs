use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use gdfractal::experiments::{self, Params};

macro_rules! command_args {
    ($name:ident { $($field:ident : $ty:ty => $key:literal, $help:literal;)* }) => {
        #[derive(Debug, Args)]
        struct $name {
            $(#[arg(long = $key, help = $help, allow_hyphen_values = true)] $field: Option<$ty>,)*
        }

        impl $name {
            fn fill(&self, p: &mut Params) {
                $(if let Some(v) = &self.$field { p.set($key, v); })*
            }
        }
    };
}

command_args!(GridArgs {
    x_min: f64 => "x-min", "lower bound of the first axis";
    x_max: f64 => "x-max", "upper bound of the first axis";
    y_min: f64 => "y-min", "lower bound of the second axis";
    y_max: f64 => "y-max", "upper bound of the second axis";
    res: usize => "res", "cells per axis";
    nx: usize => "nx", "cells along the first axis";
    ny: usize => "ny", "cells along the second axis";
});

command_args!(BasinArgs {
    y: f64 => "y", "scalar target";
    lambda: f64 => "lambda", "regularization strength";
    eta: f64 => "eta", "step size";
    max_iters: usize => "max-iters", "iteration cap per trajectory";
    loss_tol: f64 => "loss-tol", "convergence slack above the global minimum";
    fit: bool => "fit", "also fit the boundary dimension";
    widths: String => "widths", "comma-separated dyadic box widths";
});

command_args!(QuotientArgs {
    y: f64 => "y", "scalar target";
    lambda: f64 => "lambda", "regularization strength";
    eta: f64 => "eta", "step size";
    iters: usize => "iters", "quotient map iterations";
    loss_tol: f64 => "loss-tol", "convergence slack above the global minimum";
    boundary: String => "boundary", "standard or within-domain";
    widths: String => "widths", "comma-separated dyadic box widths";
});

command_args!(HistogramArgs {
    y: f64 => "y", "scalar target";
    lambda: f64 => "lambda", "regularization strength";
    eta: f64 => "eta", "step size";
    max_iters: usize => "max-iters", "iteration cap per trajectory";
});

command_args!(SliceArgs {
    model: String => "model", "matrix or deep";
    plane: String => "plane", "random or w (matrix only)";
    y_diag: String => "y-diag", "comma-separated diagonal target";
    lambda: f64 => "lambda", "regularization strength";
    eta: f64 => "eta", "step size";
    d: usize => "d", "inner dimension of the matrix model";
    depth: usize => "depth", "number of factors of the deep model";
    width: usize => "width", "hidden width of the deep model";
    max_iters: usize => "max-iters", "iteration cap per trajectory";
    loss_tol: f64 => "loss-tol", "convergence slack above the global minimum";
});

command_args!(OrbitArgs {
    period: usize => "period", "orbit period";
});

command_args!(VerifyArgs {
    suite: String => "suite", "conjugacy, gradients, hessian, quotient, boundary or all";
    samples: usize => "samples", "random instances per check";
});

command_args!(CriticalArgs {
    y: f64 => "y", "scalar target";
    u: String => "u", "comma-separated u";
    v: String => "v", "comma-separated v";
    bisect: bool => "bisect", "also bisect over simulated outcomes";
    max_iters: usize => "max-iters", "iteration cap per bisection run";
    rel_tol: f64 => "rel-tol", "relative bracket width at which bisection stops";
});

command_args!(SaddleArgs {
    y: f64 => "y", "scalar target";
    lambda: f64 => "lambda", "regularization strength";
    eta: f64 => "eta", "step size";
    set: String => "set", "saddle, unstable or both";
    n_steps: usize => "n-steps", "steps before measuring the saddle field";
    unstable_steps: usize => "unstable-steps", "steps before measuring the residual field";
    refine: bool => "refine", "repeat at twice the resolution";
});

#[derive(Debug, Subcommand)]
enum Command {
    /// Convergence raster of scalar GD over the (u, v) plane.
    Basin(WithGrid<BasinArgs>),
    /// Convergence raster of the quotient map over (uv, |u|^2 + |v|^2).
    QuotientBasin(WithGrid<QuotientArgs>),
    /// Quotient raster plus box-counting dimension of its boundary.
    Dimension(WithGrid<QuotientArgs>),
    /// Outcomes of trajectories from a small window.
    Histogram(WithGrid<HistogramArgs>),
    /// Convergence raster over a 2-D slice of matrix or deep parameters.
    Slice(WithGrid<SliceArgs>),
    /// Periodic orbits of the boundary map.
    Orbits(OrbitArgs),
    /// Invariant suites; exit status 1 if any check fails.
    Verify(VerifyArgs),
    /// Critical step size of an initialization.
    CriticalEta(CriticalArgs),
    /// Basins of the saddle and of unstable minimizers.
    SaddleBasin(WithGrid<SaddleArgs>),
}

#[derive(Debug, Args)]
struct WithGrid<T: Args> {
    #[command(flatten)]
    args: T,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Debug, Parser)]
#[command(name = "gdfractal", version, about = "Gradient descent basin and fractal experiments")]
struct Cli {
    /// key = value file; flags given on the command line take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// worker threads (GDFRACTAL_THREADS overrides)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// output path prefix for raster and table files
    #[arg(long, global = true)]
    out: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// suppress progress messages
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

fn params(cli: &Cli) -> (&'static str, Params) {
    let mut p = Params::new();
    let name = match &cli.command {
        Command::Basin(a) => {
            a.args.fill(&mut p);
            a.grid.fill(&mut p);
            "basin"
        }
        Command::QuotientBasin(a) => {
            a.args.fill(&mut p);
            a.grid.fill(&mut p);
            "quotient-basin"
        }
        Command::Dimension(a) => {
            a.args.fill(&mut p);
            a.grid.fill(&mut p);
            "dimension"
        }
        Command::Histogram(a) => {
            a.args.fill(&mut p);
            a.grid.fill(&mut p);
            "histogram"
        }
        Command::Slice(a) => {
            a.args.fill(&mut p);
            a.grid.fill(&mut p);
            "slice"
        }
        Command::Orbits(a) => {
            a.fill(&mut p);
            "orbits"
        }
        Command::Verify(a) => {
            a.fill(&mut p);
            "verify"
        }
        Command::CriticalEta(a) => {
            a.fill(&mut p);
            "critical-eta"
        }
        Command::SaddleBasin(a) => {
            a.args.fill(&mut p);
            a.grid.fill(&mut p);
            "saddle-basin"
        }
    };
    if let Some(o) = &cli.out {
        p.set("out", o);
    }
    if let Some(s) = cli.seed {
        p.set("seed", s);
    }
    if cli.quiet {
        p.set("quiet", true);
    }
    (name, p)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    let (name, flags) = params(cli);
    let base = match &cli.config {
        Some(path) => Params::load_config(path).with_context(|| format!("reading {}", path.display()))?,
        None => Params::new(),
    };
    let p = base.overlay(&flags);
    let threads = match cli.threads {
        Some(t) => Some(t),
        None => p.get_str("threads").map(str::parse).transpose().context("threads")?,
    };
    let workers = experiments::worker_count(threads)?;
    let report = experiments::with_workers(workers, || experiments::run(name, &p))??;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{}", serde_json::to_string_pretty(&report.json)?) {
        // a closed reader (e.g. `| head`) is not an error of the run
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
        r => r?,
    }
    Ok(report.passed)
}
