//! Experiment drivers behind the `gdfractal` binary.
//!
//! Every command reads its parameters from a [`Params`] map (command-line flags layered
//! over an optional `key = value` file), writes raster or table files when an `out`
//! prefix is given, and returns a JSON report. Progress goes to standard error.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Display;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::boundary;
use crate::criticality::{self, critical_step_size_of, prior_critical_bound, q_bar};
use crate::error::{invalid, Error, Result};
use crate::fractal::{
    self, BasinGrid, GridSpec, QuotientClassifier, LABEL_CONVERGED, LABEL_NONCONVERGED, LABEL_OUTSIDE,
};
use crate::linalg::random_frame;
use crate::matrix::{self, MatrixProblem, MatrixState};
use crate::quotient::{self, QuotientParams, QuotientState};
use crate::scalar::{self, OutcomeKind, ScalarProblem, ScalarState, StepConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable that overrides the worker count.
pub const THREADS_ENV: &str = "GDFRACTAL_THREADS";

pub const COMMANDS: [&str; 9] =
    ["basin", "quotient-basin", "dimension", "histogram", "slice", "orbits", "verify", "critical-eta", "saddle-basin"];

const HISTOGRAM_HEADER: &str = "# gdfractal-histogram-csv v1";
const POINTS_HEADER: &str = "# gdfractal-points-csv v1";

/// String-valued parameters keyed by flag name (`max-iters`, `y-diag`, ...).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Params {
    values: BTreeMap<String, String>,
}

fn normalize_key(k: &str) -> String {
    k.trim().replace('_', "-")
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `key = value` lines; blank lines and `#` comments are skipped.
    pub fn parse_config(text: &str) -> Result<Self> {
        let mut p = Self::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("config line {}: expected key = value", n + 1)))?;
            let k = normalize_key(k);
            if k.is_empty() {
                return Err(Error::Parse(format!("config line {}: empty key", n + 1)));
            }
            p.values.insert(k, v.trim().to_string());
        }
        Ok(p)
    }

    pub fn load_config(path: &Path) -> Result<Self> {
        Self::parse_config(&fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(normalize_key(key), value.to_string());
    }

    /// `self` with every entry of `over` replacing its own.
    pub fn overlay(mut self, over: &Params) -> Self {
        for (k, v) in &over.values {
            self.values.insert(k.clone(), v.clone());
        }
        self
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| invalid(format!("{key} = {v:?}: {e}"))),
        }
    }

    /// Comma-separated reals.
    pub fn get_list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.values.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .filter(|t| !t.trim().is_empty())
                .map(|t| t.trim().parse::<f64>().map_err(|e| invalid(format!("{key} entry {t:?}: {e}"))))
                .collect(),
        }
    }

    pub fn rng_seed(&self) -> Result<u64> {
        self.get("seed", 0u64)
    }

    fn quiet(&self) -> bool {
        self.get("quiet", false).unwrap_or(false)
    }

    pub fn to_json(&self) -> Value {
        json!(self.values)
    }

    fn summary(&self) -> String {
        // output location and verbosity do not affect results
        self.values
            .iter()
            .filter(|(k, _)| !matches!(k.as_str(), "out" | "quiet" | "threads"))
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Worker count from `GDFRACTAL_THREADS`, falling back to `flag`. `None` means the
/// rayon default.
pub fn worker_count(flag: Option<usize>) -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => {
            let n: usize = v.trim().parse().map_err(|e| invalid(format!("{THREADS_ENV} = {v:?}: {e}")))?;
            if n == 0 {
                return Err(invalid(format!("{THREADS_ENV} must be at least 1")));
            }
            Ok(Some(n))
        }
        _ => match flag {
            Some(0) => Err(invalid("thread count must be at least 1")),
            f => Ok(f),
        },
    }
}

/// Runs `f` on a dedicated pool of `workers` threads (or the global pool for `None`).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| invalid(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Outcome of a command: the JSON document for standard output and whether every
/// check it ran passed.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub json: Value,
    pub passed: bool,
}

fn progress(p: &Params, msg: &str) {
    if !p.quiet() {
        eprintln!("[gdfractal] {msg}");
    }
}

/// Runs one command.
pub fn run(command: &str, p: &Params) -> Result<Report> {
    let seed = p.rng_seed()?;
    let mut files = Vec::new();
    let (result, passed) = match command {
        "basin" => (cmd_basin(p, &mut files)?, true),
        "quotient-basin" => (cmd_quotient_basin(p, false, &mut files)?, true),
        "dimension" => (cmd_quotient_basin(p, true, &mut files)?, true),
        "histogram" => (cmd_histogram(p, &mut files)?, true),
        "slice" => (cmd_slice(p, &mut files)?, true),
        "orbits" => cmd_orbits(p)?,
        "verify" => cmd_verify(p)?,
        "critical-eta" => (cmd_critical_eta(p)?, true),
        "saddle-basin" => (cmd_saddle_basin(p, &mut files)?, true),
        other => return Err(invalid(format!("unknown command {other:?}; expected one of {COMMANDS:?}"))),
    };
    let files: Vec<String> = files.iter().map(|f| f.display().to_string()).collect();
    let json = json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "rng_seed": seed,
        "params": p.to_json(),
        "passed": passed,
        "files": files,
        "result": result,
    });
    Ok(Report { json, passed })
}

// -- shared plumbing --------------------------------------------------------------

fn grid(p: &Params, default: (f64, f64, f64, f64), res: usize) -> Result<GridSpec> {
    let n = p.get("res", res)?;
    GridSpec::new(
        p.get("x-min", default.0)?,
        p.get("x-max", default.1)?,
        p.get("y-min", default.2)?,
        p.get("y-max", default.3)?,
        p.get("nx", n)?,
        p.get("ny", n)?,
    )
}

fn scalar_problem(p: &Params, y: f64, lambda: f64) -> Result<ScalarProblem> {
    ScalarProblem::new(p.get("y", y)?, p.get("lambda", lambda)?, 1)
}

fn meta(command: &str, p: &Params) -> String {
    format!("gdfractal {command} schema={SCHEMA_VERSION} seed={} {}", p.rng_seed().unwrap_or(0), p.summary())
}

fn out_path(p: &Params, ext: &str) -> Option<PathBuf> {
    p.get_str("out").map(|prefix| PathBuf::from(format!("{prefix}.{ext}")))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_grid(p: &Params, g: &BasinGrid, channel: Option<&[f64]>, files: &mut Vec<PathBuf>) -> Result<()> {
    if let Some(path) = out_path(p, "pgm") {
        let mut w = create(&path)?;
        fractal::write_pgm(g, &mut w)?;
        w.flush()?;
        files.push(path);
    }
    if let Some(path) = out_path(p, "csv") {
        let mut w = create(&path)?;
        match channel {
            Some(c) => fractal::write_channel_csv(g, c, &mut w)?,
            None => fractal::write_csv(g, &mut w)?,
        }
        w.flush()?;
        files.push(path);
    }
    if let (Some(c), Some(path)) = (channel, out_path(p, "ppm")) {
        let mut w = create(&path)?;
        fractal::write_ppm(&g.spec, c, &g.meta, &mut w)?;
        w.flush()?;
        files.push(path);
    }
    Ok(())
}

/// Row-parallel raster of a label and a real channel.
fn raster_with_channel<F>(spec: &GridSpec, f: F) -> (Vec<u8>, Vec<f64>)
where
    F: Fn(f64, f64) -> (u8, f64) + Sync,
{
    let rows: Vec<Vec<(u8, f64)>> = (0..spec.ny)
        .into_par_iter()
        .map(|j| {
            (0..spec.nx)
                .map(|i| {
                    let (x, y) = spec.center(i, j);
                    f(x, y)
                })
                .collect()
        })
        .collect();
    rows.into_iter().flatten().unzip()
}

fn fit_json(fit: &fractal::DimensionFit) -> Value {
    json!({
        "dimension": fit.dimension,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "box_widths": fit.box_widths,
        "counts": fit.counts,
        "degenerate": fit.degenerate,
    })
}

fn widths(p: &Params) -> Result<Vec<f64>> {
    let w = p.get_list("widths", &fractal::default_widths())?;
    if w.len() < 2 {
        return Err(invalid("need at least two box widths"));
    }
    for &x in &w {
        if !(x > 0.0 && x <= 1.0) || x.log2().fract() != 0.0 {
            return Err(invalid(format!("box width {x} is not a dyadic value in (0, 1]")));
        }
    }
    Ok(w)
}

// -- commands ---------------------------------------------------------------------

fn cmd_basin(p: &Params, files: &mut Vec<PathBuf>) -> Result<Value> {
    let prob = scalar_problem(p, 1.0, 0.0)?;
    let eta = p.get("eta", 0.2)?;
    let c = StepConfig::basin_preset(eta, p.get("max-iters", 1000)?)?.with_loss_tol(p.get("loss-tol", 1e-6)?)?;
    let spec = grid(p, (-4.0, 4.0, -4.0, 4.0), 600)?;
    progress(p, &format!("basin: {}x{} cells", spec.nx, spec.ny));
    let (labels, channel) = raster_with_channel(&spec, |u, v| {
        let out = scalar::simulate(&prob, &c, &ScalarState::scalar(u, v)).expect("validated inputs");
        if out.kind == OutcomeKind::ConvergedMinimizer {
            (LABEL_CONVERGED, out.final_state.u[0])
        } else {
            (LABEL_NONCONVERGED, f64::NAN)
        }
    });
    let g = BasinGrid { spec, labels, meta: meta("basin", p) };
    write_grid(p, &g, Some(&channel), files)?;
    let conv = g.fraction(LABEL_CONVERGED);
    let mut out = json!({
        "grid": spec,
        "converged_fraction": conv,
    });
    if prob.lambda == 0.0 {
        let d = fractal::dprime_area_fraction(prob.y, eta, &spec, 4);
        out["dprime_fraction"] = json!(d);
        out["dprime_relative_gap"] = json!(if d > 0.0 { (conv - d).abs() / d } else { conv });
    }
    if p.get("fit", false)? {
        let b = fractal::extract_boundary(&g, LABEL_CONVERGED);
        let pts = fractal::normalize_unit_square(&b.points(&spec));
        out["boundary_cells"] = json!(b.count());
        out["fit"] = match fractal::box_counting(&pts, &widths(p)?) {
            Ok(f) => fit_json(&f),
            Err(e) => json!({ "error": e.to_string() }),
        };
    }
    Ok(out)
}

fn cmd_quotient_basin(p: &Params, with_fit: bool, files: &mut Vec<PathBuf>) -> Result<Value> {
    let prob = scalar_problem(p, 0.5, 0.2)?;
    let eta = p.get("eta", 1.0)?;
    let qc = QuotientClassifier::new(prob, eta, p.get("iters", 200)?, p.get("loss-tol", 1e-5)?)?;
    let spec = grid(p, (-2.5, 3.0, 0.0, 10.0), 1000)?;
    let widths = if with_fit { Some(widths(p)?) } else { None };
    progress(p, &format!("quotient basin: {}x{} cells, F^{}", spec.nx, spec.ny, qc.iters));
    let mut g = qc.rasterize(&spec);
    g.meta = meta(if with_fit { "dimension" } else { "quotient-basin" }, p);
    write_grid(p, &g, None, files)?;
    let mask = match p.get_str("boundary").unwrap_or("standard") {
        "standard" => fractal::extract_boundary(&g, LABEL_CONVERGED),
        "within-domain" => fractal::extract_boundary_within_domain(&g, LABEL_CONVERGED),
        other => return Err(invalid(format!("boundary must be standard or within-domain, got {other:?}"))),
    };
    let mut out = json!({
        "grid": spec,
        "converged_fraction": g.fraction(LABEL_CONVERGED),
        "nonconverged_fraction": g.fraction(LABEL_NONCONVERGED),
        "outside_fraction": g.fraction(LABEL_OUTSIDE),
        "boundary_cells": mask.count(),
    });
    if let Some(w) = widths {
        progress(p, "box counting");
        let pts = fractal::normalize_unit_square(&mask.points(&spec));
        let fit = fractal::box_counting(&pts, &w)?;
        out["fit"] = fit_json(&fit);
    }
    Ok(out)
}

fn cmd_histogram(p: &Params, files: &mut Vec<PathBuf>) -> Result<Value> {
    let prob = scalar_problem(p, 1.0, 0.0)?;
    let eta = p.get("eta", 0.2)?;
    let c = StepConfig::histogram_preset(eta, p.get("max-iters", 250)?)?;
    let res: usize = p.get("res", 200)?;
    let rows: Vec<(f64, f64, OutcomeKind, f64, f64, usize)> = if res == 0 {
        Vec::new()
    } else {
        let spec = grid(p, (-0.9, -0.6, -4.55, -4.25), res)?;
        progress(p, &format!("histogram: {} samples", spec.len()));
        (0..spec.len())
            .into_par_iter()
            .map(|k| {
                let (u, v) = spec.center(k % spec.nx, k / spec.nx);
                let out = scalar::simulate(&prob, &c, &ScalarState::scalar(u, v)).expect("validated inputs");
                let f = &out.final_state;
                (u, v, out.kind, f.sq_norm(), scalar::imbalance(f), out.iterations)
            })
            .collect()
    };
    if let Some(path) = out_path(p, "csv") {
        let mut w = create(&path)?;
        writeln!(w, "{HISTOGRAM_HEADER}")?;
        writeln!(w, "# {}", meta("histogram", p))?;
        writeln!(w, "u0,v0,outcome,sq_norm,imbalance,iterations")?;
        for (u, v, k, n, im, it) in &rows {
            writeln!(w, "{u},{v},{k:?},{n},{im},{it}")?;
        }
        w.flush()?;
        files.push(path);
    }
    let conv: Vec<_> = rows.iter().filter(|r| r.2 == OutcomeKind::ConvergedMinimizer).collect();
    let (lo, hi) = conv.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(r.3), b.max(r.3)));
    let bound = 2.0 / eta;
    let min_norm = 2.0 * prob.y.abs();
    let mut out = json!({
        "samples": rows.len(),
        "converged": conv.len(),
        "diverged": rows.iter().filter(|r| r.2 == OutcomeKind::Diverged).count(),
        "stability_bound": bound,
    });
    if !conv.is_empty() {
        out["sq_norm_min"] = json!(lo);
        out["sq_norm_max"] = json!(hi);
        out["norms_within_bound"] = json!(hi <= bound + 1e-6);
        out["support_fraction"] = json!((hi - lo) / (bound - min_norm));
        out["imbalance_max"] = json!(conv.iter().map(|r| r.4).fold(0.0, f64::max));
        out["iterations_max"] = json!(conv.iter().map(|r| r.5).max());
    }
    Ok(out)
}

/// An affine 2-plane `origin + x·e1 + y·e2` in a flat parameter space.
struct Plane {
    origin: Vec<f64>,
    e1: Vec<f64>,
    e2: Vec<f64>,
}

impl Plane {
    fn at(&self, x: f64, y: f64) -> Vec<f64> {
        self.origin.iter().zip(&self.e1).zip(&self.e2).map(|((o, a), b)| o + x * a + y * b).collect()
    }

    fn random(n: usize, seed: u64) -> Result<Self> {
        let f = random_frame(n, 2, seed)?;
        Ok(Self {
            origin: vec![0.0; n],
            e1: f.column(0).iter().copied().collect(),
            e2: f.column(1).iter().copied().collect(),
        })
    }
}

fn chain_from_params(shapes: &[(usize, usize)], theta: &[f64]) -> Vec<DMatrix<f64>> {
    let mut off = 0;
    shapes
        .iter()
        .map(|&(r, c)| {
            let m = DMatrix::from_column_slice(r, c, &theta[off..off + r * c]);
            off += r * c;
            m
        })
        .collect()
}

fn cmd_slice(p: &Params, files: &mut Vec<PathBuf>) -> Result<Value> {
    let seed = p.rng_seed()?;
    let model = p.get_str("model").unwrap_or("deep").to_string();
    let plane_kind = p.get_str("plane").unwrap_or("random").to_string();
    let y_diag = p.get_list("y-diag", &[0.9, 0.5])?;
    let lambda = p.get("lambda", 0.0)?;
    let eta = p.get("eta", 0.1)?;
    let c = StepConfig::basin_preset(eta, p.get("max-iters", 2000)?)?.with_loss_tol(p.get("loss-tol", 1e-6)?)?;
    let spec = grid(p, (-2.0, 2.0, -2.0, 2.0), 200)?;
    let y = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(y_diag.clone()));
    let k = y_diag.len();
    progress(p, &format!("slice: {model} model, {} plane, {}x{} cells", plane_kind, spec.nx, spec.ny));
    let (labels, channel) = match model.as_str() {
        "matrix" => {
            let d = p.get("d", 5usize)?;
            let mp = MatrixProblem::diagonal(&y_diag, lambda, d)?;
            let plane = match plane_kind.as_str() {
                "random" => Plane::random(mp.param_count(), seed)?,
                "w" => w_plane(&mp)?,
                other => return Err(invalid(format!("plane must be random or w, got {other:?}"))),
            };
            raster_with_channel(&spec, |a, b| {
                let s = MatrixState::from_params(d, k, &plane.at(a, b)).expect("plane has the parameter count");
                let out = matrix::matrix_simulate(&mp, &c, &s).expect("validated inputs");
                if out.kind != OutcomeKind::ConvergedMinimizer {
                    return (LABEL_NONCONVERGED, f64::NAN);
                }
                let f = &out.final_state;
                (LABEL_CONVERGED, if lambda == 0.0 { f.sq_norm() } else { f.u[(0, 0)] })
            })
        }
        "deep" => {
            if plane_kind != "random" {
                return Err(invalid("deep slices use random planes"));
            }
            let depth = p.get("depth", 3usize)?;
            if depth < 2 {
                return Err(invalid("depth must be at least 2"));
            }
            let width = p.get("width", k)?;
            let mut shapes = vec![(k, width)];
            shapes.extend(std::iter::repeat_n((width, width), depth - 2));
            shapes.push((width, k));
            let n: usize = shapes.iter().map(|(r, c)| r * c).sum();
            let plane = Plane::random(n, seed)?;
            let min = matrix::deep_global_min(&y, lambda, depth)?;
            raster_with_channel(&spec, |a, b| {
                let chain = chain_from_params(&shapes, &plane.at(a, b));
                let out = matrix::deep_simulate(&chain, &y, lambda, min, &c).expect("validated inputs");
                if out.kind != OutcomeKind::ConvergedMinimizer {
                    return (LABEL_NONCONVERGED, f64::NAN);
                }
                (LABEL_CONVERGED, if lambda == 0.0 { out.final_sq_norm } else { out.final_factors[0][(0, 0)] })
            })
        }
        other => return Err(invalid(format!("model must be matrix or deep, got {other:?}"))),
    };
    let g = BasinGrid { spec, labels, meta: meta("slice", p) };
    write_grid(p, &g, Some(&channel), files)?;
    let finite: Vec<f64> = channel.iter().copied().filter(|v| v.is_finite()).collect();
    Ok(json!({
        "grid": spec,
        "converged_fraction": g.fraction(LABEL_CONVERGED),
        "converged_components": fractal::connected_components(&g, LABEL_CONVERGED),
        "channel_min": finite.iter().copied().fold(f64::INFINITY, f64::min),
        "channel_max": finite.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }))
}

/// Plane through the orthogonal slice: the first column pair spans the plane along
/// the first axis while every other column sits at a global minimizer of its own
/// scalar problem, on its own axis.
fn w_plane(mp: &MatrixProblem) -> Result<Plane> {
    let (d, k) = (mp.d, mp.d_y);
    let mut base = MatrixState::zeros(d, k);
    for i in 1..k {
        let yi = mp.y[(i, i)];
        let r = (yi.abs() - mp.lambda).max(0.0).sqrt();
        base.u[(i, i)] = r;
        base.v[(i, i)] = if yi >= 0.0 { r } else { -r };
    }
    let mut e1 = MatrixState::zeros(d, k);
    e1.u[(0, 0)] = 1.0;
    let mut e2 = MatrixState::zeros(d, k);
    e2.v[(0, 0)] = 1.0;
    Ok(Plane { origin: base.to_params(), e1: e1.to_params(), e2: e2.to_params() })
}

fn cmd_orbits(p: &Params) -> Result<(Value, bool)> {
    let period = p.get("period", 3usize)?;
    let orbits = boundary::periodic_orbits(period)?;
    let (laps, entropy) = boundary::lap_entropy(period)?;
    let worst = orbits.iter().map(|o| o.cyclic_residual()).fold(0.0, f64::max);
    let li_yorke = 2.0 * (-5.0 * PI / 14.0).sin();
    let has_li_yorke = orbits.iter().any(|o| o.contains(li_yorke, boundary::ORBIT_TOL));
    let list: Vec<Value> = orbits
        .iter()
        .map(|o| json!({ "points": o.points, "prime": o.prime, "cyclic_residual": o.cyclic_residual() }))
        .collect();
    let passed = !orbits.is_empty() && worst <= boundary::ORBIT_TOL && (period != 3 || has_li_yorke);
    Ok((
        json!({
            "period": period,
            "prime_orbits": orbits.len(),
            "orbits": list,
            "max_cyclic_residual": worst,
            "contains_li_yorke_point": has_li_yorke,
            "laps": laps,
            "lap_entropy": entropy,
        }),
        passed,
    ))
}

fn cmd_critical_eta(p: &Params) -> Result<Value> {
    let y = p.get("y", 1.0)?;
    let u = p.get_list("u", &[1.0, 0.0])?;
    let v = p.get_list("v", &[0.0, 1.0])?;
    let s = ScalarState::new(u, v)?;
    let eta_star = critical_step_size_of(y, &s);
    let mut out = json!({
        "eta_star": eta_star,
        "q_bar": q_bar(y, &s),
        "prior_bound": prior_critical_bound(y, &s),
    });
    if p.get("bisect", false)? {
        if !eta_star.is_finite() {
            return Err(invalid("critical step size is infinite; nothing to bisect"));
        }
        let prob = ScalarProblem::unregularized(y, s.dim())?;
        progress(p, "bisecting over eta");
        let b = criticality::bisect_critical_eta(
            &prob,
            &s,
            0.5 * eta_star,
            1.5 * eta_star,
            p.get("max-iters", 20_000)?,
            p.get("rel-tol", 1e-4)?,
        )?;
        out["bisected"] = json!(b);
        out["relative_gap"] = json!((b - eta_star).abs() / eta_star);
    }
    Ok(out)
}

type PointSource<'a> = dyn Fn(&GridSpec) -> Result<Vec<(f64, f64)>> + 'a;

fn cmd_saddle_basin(p: &Params, files: &mut Vec<PathBuf>) -> Result<Value> {
    let prob = scalar_problem(p, 1.0, 0.0)?;
    let eta = p.get("eta", 0.2)?;
    let spec = grid(p, (-4.0, 4.0, -4.0, 4.0), 400)?;
    let set = p.get_str("set").unwrap_or("both").to_string();
    let (want_saddle, want_unstable) = match set.as_str() {
        "saddle" => (true, false),
        "unstable" => (false, true),
        "both" => (true, prob.lambda == 0.0),
        other => return Err(invalid(format!("set must be saddle, unstable or both, got {other:?}"))),
    };
    let n_saddle = p.get("n-steps", 250usize)?;
    let n_unstable = p.get("unstable-steps", 6usize)?;
    let refine = p.get("refine", false)?;
    let mut out = json!({ "grid": spec });
    let mut rows: Vec<(&str, (f64, f64))> = Vec::new();
    let mut measure = |name: &'static str, f: &PointSource<'_>| -> Result<()> {
        progress(p, &format!("{name} basin at {}x{}", spec.nx, spec.ny));
        let pts = f(&spec)?;
        let frac = matrix::occupied_fraction(&pts, &spec);
        let mut entry = json!({ "points": pts.len(), "occupied_fraction": frac });
        if refine {
            let fine = spec.refined(2);
            progress(p, &format!("{name} basin at {}x{}", fine.nx, fine.ny));
            let fine_pts = f(&fine)?;
            let ff = matrix::occupied_fraction(&fine_pts, &fine);
            entry["refined_occupied_fraction"] = json!(ff);
            entry["refinement_ratio"] = json!(if ff > 0.0 { frac / ff } else { f64::INFINITY });
        }
        out[name] = entry;
        rows.extend(pts.into_iter().map(|x| (name, x)));
        Ok(())
    };
    if want_saddle {
        measure("saddle", &|s: &GridSpec| matrix::saddle_basin_points(&prob, eta, s, n_saddle))?;
    }
    if want_unstable {
        measure("unstable", &|s: &GridSpec| matrix::unstable_basin_points(&prob, eta, s, n_unstable))?;
    }
    if let Some(path) = out_path(p, "csv") {
        let mut w = create(&path)?;
        writeln!(w, "{POINTS_HEADER}")?;
        writeln!(w, "# {}", meta("saddle-basin", p))?;
        writeln!(w, "set,x,y")?;
        for (name, (x, y)) in &rows {
            writeln!(w, "{name},{x},{y}")?;
        }
        w.flush()?;
        files.push(path);
    }
    Ok(out)
}

// -- verification suites ----------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
struct Check {
    name: &'static str,
    worst: f64,
    tol: f64,
    samples: usize,
}

impl Check {
    fn passed(&self) -> bool {
        self.worst <= self.tol
    }
}

fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}

fn random_state(rng: &mut Xoshiro256PlusPlus, d: usize, r: f64) -> ScalarState {
    ScalarState {
        u: (0..d).map(|_| rng.random_range(-r..r)).collect(),
        v: (0..d).map(|_| rng.random_range(-r..r)).collect(),
    }
}

fn suite_conjugacy(rng: &mut Xoshiro256PlusPlus, n: usize) -> Result<Vec<Check>> {
    let mut semi: f64 = 0.0;
    for _ in 0..n {
        let d = [1, 2, 5][rng.random_range(0..3usize)];
        let prob = ScalarProblem::new(rng.random_range(-2.0..2.0), rng.random_range(0.0..0.5), d)?;
        let eta = rng.random_range(0.01..0.5);
        let s = random_state(rng, d, 2.0);
        let q = QuotientParams::from_problem(&prob, eta)?;
        let lhs = quotient::project_scaled(&scalar::gd_step(&prob, eta, &s)?, &prob, eta)?;
        let rhs = quotient::quotient_step(&q, quotient::project_scaled(&s, &prob, eta)?);
        semi = semi.max(rel_gap(lhs.z, rhs.z)).max(rel_gap(lhs.w, rhs.w));
    }
    let mut cheb: f64 = 0.0;
    let mut pl: f64 = 0.0;
    for _ in 0..n {
        let z = rng.random_range(-2.0..2.0);
        let a = boundary::boundary_to_chebyshev(boundary::cubic_map(z)?)?;
        let b = boundary::chebyshev_map(boundary::boundary_to_chebyshev(z)?)?;
        cheb = cheb.max((a - b).abs());
        let x = rng.random_range(-1.0..1.0);
        let a = boundary::cubic_map(boundary::conjugacy_to_pl(x)?)?;
        let b = boundary::conjugacy_to_pl(boundary::pl_map(x)?)?;
        pl = pl.max((a - b).abs());
    }
    Ok(vec![
        Check { name: "quotient semi-conjugacy", worst: semi, tol: 1e-9, samples: n },
        Check { name: "cubic to Chebyshev conjugacy", worst: cheb, tol: 1e-12, samples: n },
        Check { name: "piecewise-linear conjugacy", worst: pl, tol: 1e-9, samples: n },
    ])
}

fn central_diff(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[k] += h;
            b[k] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
        .collect()
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn suite_gradients(rng: &mut Xoshiro256PlusPlus, n: usize) -> Result<Vec<Check>> {
    let h = 1e-6;
    let (mut ws, mut wm, mut wd): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..n {
        let d = rng.random_range(1..6usize);
        let prob = ScalarProblem::new(rng.random_range(-2.0..2.0), rng.random_range(0.0..0.5), d)?;
        let s = random_state(rng, d, 1.5);
        let (gu, gv) = scalar::scalar_gradient(&prob, &s)?;
        let theta: Vec<f64> = s.u.iter().chain(&s.v).copied().collect();
        let f = |t: &[f64]| {
            let st = ScalarState { u: t[..d].to_vec(), v: t[d..].to_vec() };
            scalar::scalar_loss(&prob, &st).expect("shape fixed")
        };
        let g: Vec<f64> = gu.into_iter().chain(gv).collect();
        ws = ws.max(max_gap(&g, &central_diff(&f, &theta, h)));

        let (d, k) = (rng.random_range(1..5usize), rng.random_range(1..4usize));
        let y = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
        let mp = MatrixProblem::new(y, rng.random_range(0.0..0.5), d)?;
        let s = MatrixState::new(
            DMatrix::from_fn(d, k, |_, _| rng.random_range(-1.0..1.0)),
            DMatrix::from_fn(d, k, |_, _| rng.random_range(-1.0..1.0)),
        )?;
        let (gu, gv) = matrix::matrix_gradient(&mp, &s)?;
        let g: Vec<f64> = gu.iter().chain(gv.iter()).copied().collect();
        let f =
            |t: &[f64]| matrix::matrix_loss(&mp, &MatrixState::from_params(d, k, t).expect("shape")).expect("shape");
        wm = wm.max(max_gap(&g, &central_diff(&f, &s.to_params(), h)));

        let dims: Vec<usize> = (0..4).map(|_| rng.random_range(1..4usize)).collect();
        let shapes: Vec<(usize, usize)> = dims.windows(2).map(|w| (w[0], w[1])).collect();
        let theta: Vec<f64> =
            (0..shapes.iter().map(|(r, c)| r * c).sum()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = DMatrix::from_fn(dims[0], dims[3], |_, _| rng.random_range(-1.0..1.0));
        let lambda = rng.random_range(0.0..0.5);
        let g: Vec<f64> = matrix::deep_gradient(&chain_from_params(&shapes, &theta), &y, lambda)?
            .iter()
            .flat_map(|m| m.iter().copied().collect::<Vec<_>>())
            .collect();
        let f = |t: &[f64]| matrix::deep_loss(&chain_from_params(&shapes, t), &y, lambda).expect("shape");
        wd = wd.max(max_gap(&g, &central_diff(&f, &theta, h)));
    }
    Ok(vec![
        Check { name: "scalar gradient vs central differences", worst: ws, tol: 1e-5, samples: n },
        Check { name: "matrix gradient vs central differences", worst: wm, tol: 1e-5, samples: n },
        Check { name: "deep gradient vs central differences", worst: wd, tol: 1e-5, samples: n },
    ])
}

fn suite_hessian(rng: &mut Xoshiro256PlusPlus, n: usize) -> Result<Vec<Check>> {
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let d = [1, 2, 5][rng.random_range(0..3usize)];
        let y = rng.random_range(-2.0..2.0);
        let prob = ScalarProblem::unregularized(y, d)?;
        let s = random_state(rng, d, 1.5);
        let closed = scalar::hessian_eigenvalues_unregularized(&prob, &s)?;
        let mp = MatrixProblem::diagonal(&[y], 0.0, d)?;
        let ms = MatrixState::new(DMatrix::from_column_slice(d, 1, &s.u), DMatrix::from_column_slice(d, 1, &s.v))?;
        let mut num: Vec<f64> =
            matrix::matrix_hessian(&mp, &ms)?.symmetric_eigen().eigenvalues.iter().copied().collect();
        num.sort_by(f64::total_cmp);
        worst = worst.max(max_gap(&closed, &num));
    }
    Ok(vec![Check { name: "closed-form Hessian spectrum", worst, tol: 1e-6, samples: n }])
}

fn suite_quotient(rng: &mut Xoshiro256PlusPlus, n: usize) -> Result<Vec<Check>> {
    let mut worst: f64 = 0.0;
    let mut found = 0;
    for _ in 0..n {
        let mu: f64 = rng.random_range(-0.6..0.6);
        let nu = rng.random_range(0.0..(0.9 - mu.abs()));
        let q = QuotientParams::new(mu, nu)?;
        let z = rng.random_range(-1.5..1.5);
        let w = 2.0 * (z + mu).abs() + rng.random_range(0.0..6.0);
        let t = QuotientState::new(z, w);
        for x in quotient::preimage_all(&q, t)? {
            let f = quotient::quotient_step(&q, x);
            worst = worst.max(f.distance(&t));
            found += 1;
        }
    }
    Ok(vec![Check { name: "preimages map onto their targets", worst, tol: 1e-7, samples: found }])
}

fn suite_boundary() -> Result<Vec<Check>> {
    let mut entropy: f64 = 0.0;
    for n in 1..=10 {
        let (laps, h) = boundary::lap_entropy(n)?;
        entropy = entropy.max((h - 3f64.ln()).abs()).max((laps as f64 - 3f64.powi(n as i32)).abs());
    }
    let mut residual: f64 = 0.0;
    let mut missing = 0.0;
    for n in 1..=10 {
        let orbits = boundary::periodic_orbits(n)?;
        if orbits.is_empty() {
            missing += 1.0;
        }
        residual = orbits.iter().map(|o| o.cyclic_residual()).fold(residual, f64::max);
    }
    let li_yorke = 2.0 * (-5.0 * PI / 14.0).sin();
    let present = boundary::periodic_orbits(3)?.iter().any(|o| o.contains(li_yorke, boundary::ORBIT_TOL));
    Ok(vec![
        Check { name: "lap entropy equals log 3", worst: entropy, tol: 1e-12, samples: 10 },
        Check { name: "periods without a prime orbit", worst: missing, tol: 0.0, samples: 10 },
        Check { name: "periodic orbit cyclic residual", worst: residual, tol: boundary::ORBIT_TOL, samples: 10 },
        Check { name: "period-3 Li-Yorke orbit missing", worst: if present { 0.0 } else { 1.0 }, tol: 0.0, samples: 1 },
    ])
}

fn cmd_verify(p: &Params) -> Result<(Value, bool)> {
    let suite = p.get_str("suite").unwrap_or("all").to_string();
    let n = p.get("samples", 200usize)?;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(p.rng_seed()?);
    let names: Vec<&str> = match suite.as_str() {
        "all" => vec!["conjugacy", "gradients", "hessian", "quotient", "boundary"],
        s @ ("conjugacy" | "gradients" | "hessian" | "quotient" | "boundary") => vec![s],
        other => return Err(invalid(format!("unknown suite {other:?}"))),
    };
    let mut checks = Vec::new();
    for name in names {
        progress(p, &format!("suite {name}"));
        checks.extend(match name {
            "conjugacy" => suite_conjugacy(&mut rng, n)?,
            "gradients" => suite_gradients(&mut rng, n)?,
            "hessian" => suite_hessian(&mut rng, n)?,
            "quotient" => suite_quotient(&mut rng, n)?,
            _ => suite_boundary()?,
        });
    }
    let passed = checks.iter().all(Check::passed);
    let list: Vec<Value> = checks
        .iter()
        .map(|c| json!({ "name": c.name, "passed": c.passed(), "worst": c.worst, "tolerance": c.tol, "samples": c.samples }))
        .collect();
    Ok((json!({ "suite": suite, "checks": list }), passed))
}
