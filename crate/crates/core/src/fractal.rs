//! Basin rasters, boundary extraction, box counting, self-similarity checks and the
//! exponential-cone certificate.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use rand::{RngExt, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criticality::in_domain_dprime;
use crate::error::{invalid, Error, Result};
use crate::quotient::{self, branch_inverse, BranchId, QuotientParams, QuotientState};
use crate::scalar::{self, OutcomeKind, ScalarProblem, ScalarState, StepConfig};

/// Label for cells that do not converge (diverged, undecided or saddle-captured).
pub const LABEL_NONCONVERGED: u8 = 0;
/// Label for cells that converge to a global minimizer.
pub const LABEL_CONVERGED: u8 = 1;
/// Label for cells that are not valid states at all (outside the quotient cone).
pub const LABEL_OUTSIDE: u8 = 255;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(invalid("grid needs at least one cell in each direction"));
        }
        if !(x_min < x_max) || !(y_min < y_max) {
            return Err(invalid("grid bounds must satisfy min < max"));
        }
        if ![x_min, x_max, y_min, y_max].iter().all(|v| v.is_finite()) {
            return Err(invalid("grid bounds must be finite"));
        }
        Ok(Self { x_min, x_max, y_min, y_max, nx, ny })
    }

    pub fn square(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new(lo, hi, lo, hi, n, n)
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y_max - self.y_min) / self.ny as f64
    }

    pub fn cell_diagonal(&self) -> f64 {
        self.dx().hypot(self.dy())
    }

    /// Center of cell `(i, j)`, column `i` along x and row `j` along y.
    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        (self.x_min + (i as f64 + 0.5) * self.dx(), self.y_min + (j as f64 + 0.5) * self.dy())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same window with both resolutions multiplied by `k`.
    pub fn refined(&self, k: usize) -> Self {
        Self { nx: self.nx * k, ny: self.ny * k, ..*self }
    }
}

/// A labeled raster over a 2-D slice; `labels[j * nx + i]` belongs to cell `(i, j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinGrid {
    pub spec: GridSpec,
    pub labels: Vec<u8>,
    pub meta: String,
}

impl BasinGrid {
    pub fn label(&self, i: usize, j: usize) -> u8 {
        self.labels[j * self.spec.nx + i]
    }

    pub fn fraction(&self, label: u8) -> f64 {
        self.labels.iter().filter(|&&l| l == label).count() as f64 / self.labels.len() as f64
    }
}

/// Evaluates `classify` at every cell center, rows in parallel.
pub fn rasterize<F>(spec: &GridSpec, meta: impl Into<String>, classify: F) -> BasinGrid
where
    F: Fn(f64, f64) -> u8 + Sync,
{
    let mut labels = vec![0u8; spec.len()];
    labels.par_chunks_mut(spec.nx).enumerate().for_each(|(j, row)| {
        for (i, cell) in row.iter_mut().enumerate() {
            let (x, y) = spec.center(i, j);
            *cell = classify(x, y);
        }
    });
    BasinGrid { spec: *spec, labels, meta: meta.into() }
}

/// Boolean raster of the same shape as a [`BasinGrid`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub nx: usize,
    pub ny: usize,
    pub cells: Vec<bool>,
}

impl Mask {
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.cells[j * self.nx + i]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.cells.len() as f64
    }

    /// Cell centers of the set cells.
    pub fn points(&self, spec: &GridSpec) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.count());
        for j in 0..self.ny {
            for i in 0..self.nx {
                if self.get(i, j) {
                    out.push(spec.center(i, j));
                }
            }
        }
        out
    }
}

fn boundary_with<F: Fn(u8) -> bool>(g: &BasinGrid, target: u8, edge_counts: bool, counts_as_other: F) -> Mask {
    let (nx, ny) = (g.spec.nx, g.spec.ny);
    let mut cells = vec![false; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            if g.label(i, j) != target {
                continue;
            }
            let off = |di: isize, dj: isize| -> bool {
                let (a, b) = (i as isize + di, j as isize + dj);
                if a < 0 || b < 0 || a >= nx as isize || b >= ny as isize {
                    return edge_counts;
                }
                counts_as_other(g.label(a as usize, b as usize))
            };
            cells[j * nx + i] = off(-1, 0) || off(1, 0) || off(0, -1) || off(0, 1);
        }
    }
    Mask { nx, ny, cells }
}

/// Target cells with at least one 4-neighbor that is not the target (cells
/// beyond the raster edge count as not-target).
pub fn extract_boundary(g: &BasinGrid, target: u8) -> Mask {
    boundary_with(g, target, true, |l| l != target)
}

/// Like [`extract_boundary`] but neighbors labeled [`LABEL_OUTSIDE`] and neighbors
/// beyond the raster edge are ignored, so neither the edge of the state space nor the
/// edge of the window registers as basin boundary.
pub fn extract_boundary_within_domain(g: &BasinGrid, target: u8) -> Mask {
    boundary_with(g, target, false, |l| l != target && l != LABEL_OUTSIDE)
}

/// Boundary of a mask viewed as a two-label grid.
pub fn mask_boundary(m: &Mask) -> Mask {
    let spec = GridSpec { x_min: 0.0, x_max: 1.0, y_min: 0.0, y_max: 1.0, nx: m.nx, ny: m.ny };
    let labels = m.cells.iter().map(|&c| u8::from(c)).collect();
    extract_boundary(&BasinGrid { spec, labels, meta: String::new() }, 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionFit {
    pub dimension: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub box_widths: Vec<f64>,
    pub counts: Vec<u64>,
    /// All counts equal; the slope is zero and `r_squared` is meaningless.
    pub degenerate: bool,
}

/// Box widths `2⁻², …, 2⁻⁸`.
pub fn default_widths() -> Vec<f64> {
    (2..=8).map(|k| 2f64.powi(-k)).collect()
}

/// Maps points into `[0, 1]²` by shifting the minimum to the origin and dividing both
/// axes by the larger of the two ranges.
pub fn normalize_unit_square(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    if points.is_empty() {
        return Vec::new();
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let scale = (x1 - x0).max(y1 - y0);
    let scale = if scale > 0.0 { scale } else { 1.0 };
    points.iter().map(|&(x, y)| ((x - x0) / scale, (y - y0) / scale)).collect()
}

fn count_boxes(points: &[(f64, f64)], width: f64, offset: (f64, f64)) -> u64 {
    // points at the far edge of the unit square join the last box
    let last = |o: f64| (((1.0 + o) / width).ceil() as i64 - 1).max(0);
    let (li, lj) = (last(offset.0), last(offset.1));
    let mut set = HashSet::with_capacity(points.len());
    for &(x, y) in points {
        let i = (((x + offset.0) / width).floor() as i64).min(li);
        let j = (((y + offset.1) / width).floor() as i64).min(lj);
        set.insert((i, j));
    }
    set.len() as u64
}

/// Box-counting dimension of a planar point set.
///
/// Points are normalized with [`normalize_unit_square`]; boxes are anchored at the
/// origin and the dimension is the least-squares slope of `log N(ε)` against
/// `log(1/ε)`.
pub fn box_counting(points: &[(f64, f64)], widths: &[f64]) -> Result<DimensionFit> {
    box_counting_with_offset(points, widths, (0.0, 0.0))
}

/// [`box_counting`] with the box lattice shifted by `offset` (normalized units).
pub fn box_counting_with_offset(points: &[(f64, f64)], widths: &[f64], offset: (f64, f64)) -> Result<DimensionFit> {
    let mut distinct: Vec<f64> = widths.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(invalid("box counting needs at least two distinct widths"));
    }
    if widths.iter().any(|w| !(*w > 0.0)) {
        return Err(invalid("box widths must be positive"));
    }
    if points.is_empty() {
        return Err(invalid("box counting needs at least one point"));
    }
    let pts = normalize_unit_square(points);
    let counts: Vec<u64> = widths.iter().map(|&w| count_boxes(&pts, w, offset)).collect();
    let xs: Vec<f64> = widths.iter().map(|w| (1.0 / w).ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|&c| (c as f64).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let degenerate = syy == 0.0;
    let slope = if degenerate { 0.0 } else { sxy / sxx };
    let r_squared = if degenerate { 0.0 } else { sxy * sxy / (sxx * syy) };
    Ok(DimensionFit {
        dimension: slope,
        intercept: my - slope * mx,
        r_squared,
        box_widths: widths.to_vec(),
        counts,
        degenerate,
    })
}

/// Classifies quotient-space initializations given in raw coordinates
/// `(uᵀv, ‖u‖² + ‖v‖²)` by iterating the scaled quotient map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuotientClassifier {
    pub problem: ScalarProblem,
    pub eta: f64,
    pub iters: usize,
    /// Converged iff the final loss is below the global minimum plus this.
    pub loss_tol: f64,
}

impl QuotientClassifier {
    pub fn new(problem: ScalarProblem, eta: f64, iters: usize, loss_tol: f64) -> Result<Self> {
        if !(eta > 0.0) || !(loss_tol > 0.0) {
            return Err(invalid("eta and loss_tol must be positive"));
        }
        Ok(Self { problem, eta, iters, loss_tol })
    }

    pub fn params(&self) -> QuotientParams {
        QuotientParams::new(self.eta * self.problem.y, self.eta * self.problem.lambda)
            .expect("finite problem gives finite parameters")
    }

    /// Scaled quotient state of a raw point.
    pub fn to_scaled(&self, uv: f64, sq: f64) -> QuotientState {
        QuotientState::new(self.eta * (uv - self.problem.y), self.eta * sq)
    }

    /// Loss of a scaled quotient state.
    pub fn loss(&self, s: QuotientState) -> f64 {
        let z = s.z / self.eta;
        0.5 * z * z + 0.5 * self.problem.lambda * s.w / self.eta
    }

    pub fn classify(&self, uv: f64, sq: f64) -> u8 {
        if sq < 2.0 * uv.abs() {
            return LABEL_OUTSIDE;
        }
        let q = self.params();
        let s = quotient::forward(&q, self.to_scaled(uv, sq), self.iters);
        let l = self.loss(s);
        if l.is_finite() && l < self.problem.global_min() + self.loss_tol {
            LABEL_CONVERGED
        } else {
            LABEL_NONCONVERGED
        }
    }

    pub fn rasterize(&self, spec: &GridSpec) -> BasinGrid {
        let meta = format!(
            "quotient y={} lambda={} eta={} iters={} loss_tol={}",
            self.problem.y, self.problem.lambda, self.eta, self.iters, self.loss_tol
        );
        rasterize(spec, meta, |x, y| self.classify(x, y))
    }
}

/// Converging region of the `d = 1` scalar problem over the `(u, v)` plane.
pub fn scalar_basin(p: &ScalarProblem, c: &StepConfig, spec: &GridSpec) -> Result<BasinGrid> {
    if p.d != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: p.d });
    }
    c.validated()?;
    let meta = format!("scalar y={} lambda={} eta={} iters={}", p.y, p.lambda, c.eta, c.max_iters);
    Ok(rasterize(spec, meta, |u, v| {
        let out = scalar::simulate_unchecked(p, c, ScalarState::scalar(u, v));
        if out.kind == OutcomeKind::ConvergedMinimizer {
            LABEL_CONVERGED
        } else {
            LABEL_NONCONVERGED
        }
    }))
}

/// Fraction of cells of `spec` inside `{q̄ < 8/η}`, sampled `k × k` times per cell.
pub fn dprime_area_fraction(y: f64, eta: f64, spec: &GridSpec, k: usize) -> f64 {
    let fine = spec.refined(k);
    let inside: usize = (0..fine.ny)
        .into_par_iter()
        .map(|j| {
            (0..fine.nx)
                .filter(|&i| {
                    let (u, v) = fine.center(i, j);
                    in_domain_dprime(y, eta, &ScalarState::scalar(u, v))
                })
                .count()
        })
        .sum();
    inside as f64 / fine.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfSimilarity {
    /// Largest distance from a checked boundary point to the union of branch images.
    pub cover_dist: f64,
    /// 99th percentile of the same distances.
    pub cover_p99: f64,
    /// Smallest distance between image clouds of different branches.
    pub disjointness_margin: f64,
    /// Boundary points whose cover was measured.
    pub checked: usize,
    /// Branch evaluations that failed; logged, not fatal.
    pub branch_failures: usize,
    /// Image counts per branch `[G0, G1, G2]`.
    pub image_counts: [usize; 3],
    /// `z`-ranges `(min, max)` of each image cloud.
    pub image_z_ranges: [(f64, f64); 3],
}

/// Rectangle in scaled quotient coordinates, `(z_min, z_max, w_min, w_max)`.
pub type Window = (f64, f64, f64, f64);

/// Compares a boundary point cloud with its images under the three inverse branches.
///
/// Only boundary points `b` with `F(b)` inside `window` shrunk by `margin` are checked
/// for cover, since a point whose forward image leaves the sampled window can only be
/// covered by boundary points that were never sampled. Points with `Q < 6 − 4ν` are
/// skipped for `G1`, which is undefined there.
pub fn self_similarity_check(
    q: &QuotientParams,
    boundary_pts: &[QuotientState],
    window: Option<Window>,
    margin: f64,
) -> Result<SelfSimilarity> {
    q.check_branch_regime()?;
    let g1_floor = 6.0 - 4.0 * q.nu;
    let images: Vec<[Option<QuotientState>; 3]> = boundary_pts
        .par_iter()
        .map(|&b| {
            let mut out = [None; 3];
            for br in BranchId::ALL {
                if br == BranchId::G1 && quotient::q_unchecked(q.mu, b) < g1_floor {
                    continue;
                }
                out[br.index()] = branch_inverse(q, br, b).ok();
            }
            out
        })
        .collect();
    let mut branch_failures = 0;
    let mut clouds: [Vec<QuotientState>; 3] = Default::default();
    for (b, im) in boundary_pts.iter().zip(&images) {
        for br in BranchId::ALL {
            match im[br.index()] {
                Some(x) => clouds[br.index()].push(x),
                None if br == BranchId::G1 && quotient::q_unchecked(q.mu, *b) < g1_floor => {}
                None => branch_failures += 1,
            }
        }
    }
    let all: Vec<QuotientState> = clouds.iter().flatten().copied().collect();
    let index = PointIndex::new(&all);
    let keep = |b: &QuotientState| -> bool {
        match window {
            None => true,
            Some((z0, z1, w0, w1)) => {
                let f = quotient::quotient_step(q, *b);
                f.z >= z0 + margin && f.z <= z1 - margin && f.w >= w0 + margin && f.w <= w1 - margin
            }
        }
    };
    let checked: Vec<&QuotientState> = boundary_pts.iter().filter(|b| keep(b)).collect();
    let mut dists: Vec<f64> = checked.par_iter().map(|b| index.nearest(**b)).collect();
    dists.sort_by(f64::total_cmp);
    let cover_dist = dists.last().copied().unwrap_or(0.0);
    let cover_p99 = dists.get((dists.len() * 99) / 100).copied().unwrap_or(0.0);

    let a = q.alpha();
    let interior = |br: usize, x: &QuotientState| -> bool {
        let edge = 1e-6;
        match br {
            0 => x.z < -a - edge,
            1 => x.z.abs() < a - edge,
            _ => x.z > a + edge,
        }
    };
    let mut margin_min = f64::INFINITY;
    for i in 0..3 {
        for j in (i + 1)..3 {
            let cj: Vec<QuotientState> = clouds[j].iter().filter(|x| interior(j, x)).copied().collect();
            if cj.is_empty() {
                continue;
            }
            let idx = PointIndex::new(&cj);
            let m = clouds[i]
                .par_iter()
                .filter(|x| interior(i, x))
                .map(|x| idx.nearest(*x))
                .reduce(|| f64::INFINITY, f64::min);
            margin_min = margin_min.min(m);
        }
    }
    let z_range = |c: &Vec<QuotientState>| {
        c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x.z), hi.max(x.z)))
    };
    Ok(SelfSimilarity {
        cover_dist,
        cover_p99,
        disjointness_margin: margin_min,
        checked: checked.len(),
        branch_failures,
        image_counts: [clouds[0].len(), clouds[1].len(), clouds[2].len()],
        image_z_ranges: [z_range(&clouds[0]), z_range(&clouds[1]), z_range(&clouds[2])],
    })
}

/// Uniform bucket grid for nearest-neighbor queries on planar point clouds.
struct PointIndex {
    z0: f64,
    w0: f64,
    cell: f64,
    nz: usize,
    nw: usize,
    buckets: Vec<Vec<QuotientState>>,
}

impl PointIndex {
    fn new(pts: &[QuotientState]) -> Self {
        let (mut z0, mut z1, mut w0, mut w1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in pts {
            z0 = z0.min(p.z);
            z1 = z1.max(p.z);
            w0 = w0.min(p.w);
            w1 = w1.max(p.w);
        }
        if pts.is_empty() {
            return Self { z0: 0.0, w0: 0.0, cell: 1.0, nz: 0, nw: 0, buckets: Vec::new() };
        }
        let area = ((z1 - z0) * (w1 - w0)).max(1e-300);
        let cell = (area / pts.len() as f64).sqrt().max(1e-12) * 2.0;
        let nz = (((z1 - z0) / cell).floor() as usize + 1).min(1 << 14);
        let nw = (((w1 - w0) / cell).floor() as usize + 1).min(1 << 14);
        let cell = cell.max((z1 - z0) / nz as f64).max((w1 - w0) / nw as f64);
        let mut buckets = vec![Vec::new(); nz * nw];
        let mut idx = Self { z0, w0, cell, nz, nw, buckets: Vec::new() };
        for p in pts {
            let (i, j) = idx.bucket(*p);
            buckets[j * nz + i].push(*p);
        }
        idx.buckets = buckets;
        idx
    }

    fn bucket(&self, p: QuotientState) -> (usize, usize) {
        let i = ((p.z - self.z0) / self.cell).floor().clamp(0.0, (self.nz - 1) as f64) as usize;
        let j = ((p.w - self.w0) / self.cell).floor().clamp(0.0, (self.nw - 1) as f64) as usize;
        (i, j)
    }

    fn nearest(&self, p: QuotientState) -> f64 {
        if self.buckets.is_empty() {
            return f64::INFINITY;
        }
        let (ci, cj) = self.bucket(p);
        let mut best = f64::INFINITY;
        let mut r = 0usize;
        loop {
            let (i0, i1) = (ci.saturating_sub(r), (ci + r).min(self.nz - 1));
            let (j0, j1) = (cj.saturating_sub(r), (cj + r).min(self.nw - 1));
            for j in j0..=j1 {
                for i in i0..=i1 {
                    if i != i0 && i != i1 && j != j0 && j != j1 {
                        continue;
                    }
                    for q in &self.buckets[j * self.nz + i] {
                        best = best.min(p.distance(q));
                    }
                }
            }
            // every unvisited bucket is at least r·cell away from p
            let covered_all = i0 == 0 && j0 == 0 && i1 == self.nz - 1 && j1 == self.nw - 1;
            if best <= r as f64 * self.cell || covered_all {
                return best;
            }
            r += 1;
        }
    }
}

/// Whether `(z, w)` lies in the cone `{|z| < a·exp(−b·w)}`.
pub fn in_exp_cone(a: f64, b: f64, s: QuotientState) -> bool {
    // compared in log space so that the bound does not underflow for large w
    s.w.is_finite() && s.z.abs().ln() < a.ln() - b * s.w
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeCertificate {
    pub a: f64,
    pub b: f64,
    pub samples: usize,
    pub w_max: f64,
}

/// Samples `n` cone points of `Ω` with `w ≤ w_max`: half log-uniform, half uniform in `w`.
pub fn sample_cone(a: f64, b: f64, w_max: f64, n: usize, seed: u64) -> Vec<QuotientState> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    (0..n)
        .map(|k| {
            let w = if k % 2 == 0 {
                (1e-6f64.ln() + rng.random::<f64>() * (w_max.ln() - 1e-6f64.ln())).exp()
            } else {
                rng.random::<f64>() * w_max
            };
            let half = (a * (-b * w).exp()).min(w / 2.0);
            // subnormal widths are too coarse to stay inside the log-space bound
            let z = if half >= f64::MIN_POSITIVE { rng.random_range(-half..half) * (1.0 - 1e-12) } else { 0.0 };
            QuotientState::new(z, w)
        })
        .collect()
}

/// Finds `(a, b)` for which `{|z| < a·exp(−bw)}` is forward invariant under the
/// quotient map with `μ = 0`.
///
/// Candidates satisfy `b > α/((1 − α²)α²)` and `a² + α² < 1` for `α = 1 − ν`. `b` runs
/// upward and `a` downward over logarithmic grids; the first pair for which `samples`
/// cone points with `w ≤ w_max` all stay in the cone with non-increasing `Q` is returned.
pub fn cone_certificate(nu: f64, samples: usize, w_max: f64, seed: u64) -> Result<ConeCertificate> {
    if !(0.0..1.0).contains(&nu) {
        return Err(invalid(format!("cone certificate needs 0 <= nu < 1, got {nu}")));
    }
    let alpha = 1.0 - nu;
    let q = QuotientParams::new(0.0, nu)?;
    let b_min = alpha / ((1.0 - alpha * alpha) * alpha * alpha);
    let a_max = (1.0 - alpha * alpha).sqrt();
    for kb in 0..24 {
        let b = b_min * 1.05 * 2f64.powi(kb);
        for ka in 0..24 {
            let a = a_max * 0.95 * 2f64.powi(-ka);
            if !(b > b_min && a * a + alpha * alpha < 1.0) {
                continue;
            }
            let pts = sample_cone(a, b, w_max, samples, seed);
            let ok = pts.par_iter().all(|&s| {
                let f = quotient::quotient_step(&q, s);
                in_exp_cone(a, b, f) && quotient::q_unchecked(0.0, f) <= quotient::q_unchecked(0.0, s) * (1.0 + 1e-12)
            });
            if ok {
                return Ok(ConeCertificate { a, b, samples, w_max });
            }
        }
    }
    Err(Error::SearchExhausted(format!("no cone certificate found for nu = {nu}")))
}

const PGM_TAG: &str = "# gdfractal-grid";
const CSV_HEADER: &str = "# gdfractal-basin-csv v1";

fn spec_line(s: &GridSpec) -> String {
    format!("{PGM_TAG} {:e} {:e} {:e} {:e}", s.x_min, s.x_max, s.y_min, s.y_max)
}

fn parse_spec_line(line: &str, nx: usize, ny: usize) -> Result<GridSpec> {
    let rest = line.strip_prefix(PGM_TAG).ok_or_else(|| Error::Parse(format!("missing grid line: {line}")))?;
    let v: Vec<f64> = rest
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("bad bound {t}: {e}"))))
        .collect::<Result<_>>()?;
    if v.len() != 4 {
        return Err(Error::Parse("grid line needs four bounds".into()));
    }
    GridSpec::new(v[0], v[1], v[2], v[3], nx, ny)
}

/// Binary PGM (P5), one byte per label, top row at `y_max`. The window is kept in a
/// header comment so [`read_pgm`] restores the full grid.
pub fn write_pgm<W: Write>(g: &BasinGrid, mut out: W) -> Result<()> {
    let s = &g.spec;
    write!(out, "P5\n{}\n# {}\n{} {}\n255\n", spec_line(s), g.meta.replace('\n', " "), s.nx, s.ny)?;
    for j in (0..s.ny).rev() {
        out.write_all(&g.labels[j * s.nx..(j + 1) * s.nx])?;
    }
    Ok(())
}

fn read_token<R: BufRead>(r: &mut R, comments: &mut Vec<String>) -> Result<String> {
    let mut tok = Vec::new();
    loop {
        let mut byte = [0u8; 1];
        if r.read(&mut byte)? == 0 {
            break;
        }
        let c = byte[0];
        if c == b'#' && tok.is_empty() {
            let mut line = String::from("#");
            r.read_line(&mut line)?;
            comments.push(line.trim_end().to_string());
            continue;
        }
        if c.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(c);
    }
    String::from_utf8(tok).map_err(|e| Error::Parse(e.to_string()))
}

pub fn read_pgm<R: BufRead>(mut r: R) -> Result<BasinGrid> {
    let mut comments = Vec::new();
    let magic = read_token(&mut r, &mut comments)?;
    if magic != "P5" {
        return Err(Error::Parse(format!("expected P5, found {magic:?}")));
    }
    let num = |r: &mut R, c: &mut Vec<String>| -> Result<usize> {
        let t = read_token(r, c)?;
        t.parse().map_err(|e| Error::Parse(format!("bad header number {t:?}: {e}")))
    };
    let nx = num(&mut r, &mut comments)?;
    let ny = num(&mut r, &mut comments)?;
    let maxval = num(&mut r, &mut comments)?;
    if maxval != 255 {
        return Err(Error::Parse(format!("unsupported maxval {maxval}")));
    }
    let spec_comment =
        comments.iter().find(|c| c.starts_with(PGM_TAG)).ok_or_else(|| Error::Parse("missing grid comment".into()))?;
    let spec = parse_spec_line(spec_comment, nx, ny)?;
    let meta = comments
        .iter()
        .find(|c| !c.starts_with(PGM_TAG))
        .map(|c| c.trim_start_matches('#').trim().to_string())
        .unwrap_or_default();
    let mut raw = vec![0u8; nx * ny];
    r.read_exact(&mut raw)?;
    let mut labels = vec![0u8; nx * ny];
    for (k, row) in raw.chunks(nx).enumerate() {
        let j = ny - 1 - k;
        labels[j * nx..(j + 1) * nx].copy_from_slice(row);
    }
    Ok(BasinGrid { spec, labels, meta })
}

/// CSV with a versioned header comment, a grid comment and `x,y,label` rows.
pub fn write_csv<W: Write>(g: &BasinGrid, mut out: W) -> Result<()> {
    let s = &g.spec;
    writeln!(out, "{CSV_HEADER}")?;
    writeln!(out, "{} {} {}", spec_line(s), s.nx, s.ny)?;
    writeln!(out, "# {}", g.meta.replace('\n', " "))?;
    writeln!(out, "x,y,label")?;
    for j in 0..s.ny {
        for i in 0..s.nx {
            let (x, y) = s.center(i, j);
            writeln!(out, "{x},{y},{}", g.label(i, j))?;
        }
    }
    Ok(())
}

pub fn read_csv<R: BufRead>(r: R) -> Result<BasinGrid> {
    let mut lines = r.lines();
    let mut next = || -> Result<String> {
        lines.next().ok_or_else(|| Error::Parse("unexpected end of CSV".into()))?.map_err(Error::from)
    };
    let head = next()?;
    if head.trim() != CSV_HEADER {
        return Err(Error::Parse(format!("unexpected CSV header {head:?}")));
    }
    let grid = next()?;
    let mut parts: Vec<&str> = grid.split_whitespace().collect();
    let ny: usize = parts.pop().and_then(|t| t.parse().ok()).ok_or_else(|| Error::Parse("bad ny".into()))?;
    let nx: usize = parts.pop().and_then(|t| t.parse().ok()).ok_or_else(|| Error::Parse("bad nx".into()))?;
    let spec = parse_spec_line(&parts.join(" "), nx, ny)?;
    let mut meta = String::new();
    let mut cols = next()?;
    if let Some(m) = cols.strip_prefix('#') {
        meta = m.trim().to_string();
        cols = next()?;
    }
    if cols.trim() != "x,y,label" {
        return Err(Error::Parse("missing column header".into()));
    }
    let mut labels = Vec::with_capacity(nx * ny);
    for _ in 0..nx * ny {
        let line = next()?;
        let l = line
            .rsplit(',')
            .next()
            .and_then(|t| t.trim().parse::<u8>().ok())
            .ok_or_else(|| Error::Parse(format!("bad row {line:?}")))?;
        labels.push(l);
    }
    Ok(BasinGrid { spec, labels, meta })
}

const CHANNEL_HEADER: &str = "# gdfractal-channel-csv v1";

/// Like [`write_csv`] with an extra real-valued column (`NaN` where undefined).
pub fn write_channel_csv<W: Write>(g: &BasinGrid, values: &[f64], mut out: W) -> Result<()> {
    let s = &g.spec;
    if values.len() != s.len() {
        return Err(Error::DimensionMismatch { expected: s.len(), got: values.len() });
    }
    writeln!(out, "{CHANNEL_HEADER}")?;
    writeln!(out, "{} {} {}", spec_line(s), s.nx, s.ny)?;
    writeln!(out, "# {}", g.meta.replace('\n', " "))?;
    writeln!(out, "x,y,label,value")?;
    for j in 0..s.ny {
        for i in 0..s.nx {
            let (x, y) = s.center(i, j);
            writeln!(out, "{x},{y},{},{}", g.label(i, j), values[j * s.nx + i])?;
        }
    }
    Ok(())
}

/// Binary PPM (P6) of a real channel on a blue-to-yellow ramp over its finite range.
/// Non-finite values are drawn white. Top row at `y_max`.
pub fn write_ppm<W: Write>(spec: &GridSpec, values: &[f64], meta: &str, mut out: W) -> Result<()> {
    if values.len() != spec.len() {
        return Err(Error::DimensionMismatch { expected: spec.len(), got: values.len() });
    }
    let (lo, hi) = values
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    write!(out, "P6\n{}\n# {}\n{} {}\n255\n", spec_line(spec), meta.replace('\n', " "), spec.nx, spec.ny)?;
    let mut row = Vec::with_capacity(3 * spec.nx);
    for j in (0..spec.ny).rev() {
        row.clear();
        for &v in &values[j * spec.nx..(j + 1) * spec.nx] {
            if v.is_finite() {
                let t = ((v - lo) / span).clamp(0.0, 1.0);
                row.extend_from_slice(&[(255.0 * t) as u8, (200.0 * t + 30.0) as u8, (255.0 * (1.0 - t)) as u8]);
            } else {
                row.extend_from_slice(&[255, 255, 255]);
            }
        }
        out.write_all(&row)?;
    }
    Ok(())
}

/// Number of 4-connected components of cells carrying `label`.
pub fn connected_components(g: &BasinGrid, label: u8) -> usize {
    let (nx, ny) = (g.spec.nx, g.spec.ny);
    let mut seen = vec![false; nx * ny];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..nx * ny {
        if seen[start] || g.labels[start] != label {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(k) = stack.pop() {
            let (i, j) = (k % nx, k / nx);
            let mut visit = |n: usize| {
                if !seen[n] && g.labels[n] == label {
                    seen[n] = true;
                    stack.push(n);
                }
            };
            if i > 0 {
                visit(k - 1);
            }
            if i + 1 < nx {
                visit(k + 1);
            }
            if j > 0 {
                visit(k - nx);
            }
            if j + 1 < ny {
                visit(k + nx);
            }
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_from(nx: usize, ny: usize, f: impl Fn(usize, usize) -> u8) -> BasinGrid {
        let spec = GridSpec::new(0.0, nx as f64, 0.0, ny as f64, nx, ny).unwrap();
        let mut labels = vec![0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                labels[j * nx + i] = f(i, j);
            }
        }
        BasinGrid { spec, labels, meta: "test".into() }
    }

    #[test]
    fn grid_spec_validation() {
        assert!(GridSpec::new(0.0, 1.0, 0.0, 1.0, 0, 4).is_err());
        assert!(GridSpec::new(1.0, 1.0, 0.0, 1.0, 2, 4).is_err());
        let s = GridSpec::new(0.0, 2.0, 0.0, 1.0, 4, 2).unwrap();
        assert_eq!(s.center(0, 0), (0.25, 0.25));
        assert_eq!(s.center(3, 1), (1.75, 0.75));
    }

    #[test]
    fn constant_classifier_is_uniform() {
        let s = GridSpec::square(-1.0, 1.0, 17).unwrap();
        let g = rasterize(&s, "", |_, _| 3);
        assert!(g.labels.iter().all(|&l| l == 3));
        assert_eq!(extract_boundary(&g, 3).count(), 17 * 4 - 4);
        let g = rasterize(&s, "", |_, _| 0);
        assert_eq!(extract_boundary(&g, 1).count(), 0);
    }

    #[test]
    fn single_cell_and_rectangle_boundaries() {
        let g = grid_from(9, 9, |i, j| u8::from(i == 4 && j == 4));
        let b = extract_boundary(&g, 1);
        assert_eq!(b.count(), 1);
        assert!(b.get(4, 4));
        let (a, bb) = (5, 3);
        let g = grid_from(12, 10, |i, j| u8::from((2..2 + a).contains(&i) && (3..3 + bb).contains(&j)));
        let m = extract_boundary(&g, 1);
        assert_eq!(m.count(), 2 * a + 2 * bb - 4);
        // boundary of the boundary stays inside it
        let mb = mask_boundary(&m);
        assert!(mb.cells.iter().zip(&m.cells).all(|(x, y)| !x || *y));
    }

    #[test]
    fn outside_cells_are_ignored_on_request() {
        let g = grid_from(6, 3, |i, _| if i < 3 { 1 } else { LABEL_OUTSIDE });
        assert!(extract_boundary(&g, 1).get(2, 1));
        assert!(extract_boundary(&g, 1).get(0, 1));
        // neither the outside cells nor the raster edge make boundary
        assert_eq!(extract_boundary_within_domain(&g, 1).count(), 0);
        let g = grid_from(6, 3, |i, j| if i < 3 { u8::from(j > 0) } else { LABEL_OUTSIDE });
        let m = extract_boundary_within_domain(&g, 1);
        assert!(m.get(0, 1) && m.get(2, 1) && !m.get(1, 2));
    }

    #[test]
    fn box_counting_square_and_segment() {
        let n = 512;
        let mut square = Vec::new();
        for j in 0..n {
            for i in 0..n {
                square.push(((i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64));
            }
        }
        let fit = box_counting(&square, &default_widths()).unwrap();
        assert!((fit.dimension - 2.0).abs() < 0.05, "{fit:?}");
        let seg: Vec<_> = (0..4000).map(|k| (k as f64 / 3999.0, 0.3 * k as f64 / 3999.0)).collect();
        let fit = box_counting(&seg, &default_widths()).unwrap();
        assert!((fit.dimension - 1.0).abs() < 0.05, "{fit:?}");
        assert!(fit.counts.windows(2).all(|c| c[0] <= c[1]));
    }

    #[test]
    fn box_counting_degenerate_and_errors() {
        let fit = box_counting(&[(0.3, 0.3)], &default_widths()).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.dimension, 0.0);
        assert!(box_counting(&[(0.0, 0.0)], &[0.5, 0.5]).is_err());
        assert!(box_counting(&[], &default_widths()).is_err());
    }

    #[test]
    fn pgm_and_csv_round_trip() {
        let s = GridSpec::new(-2.5, 3.0, 0.0, 10.0, 7, 5).unwrap();
        let g = rasterize(&s, "round trip", |x, y| ((x * 3.0 + y) as i64).rem_euclid(4) as u8);
        let mut buf = Vec::new();
        write_pgm(&g, &mut buf).unwrap();
        let back = read_pgm(&buf[..]).unwrap();
        assert_eq!(back.labels, g.labels);
        assert_eq!(back.spec, g.spec);
        assert_eq!(back.meta, "round trip");
        let mut buf = Vec::new();
        write_csv(&g, &mut buf).unwrap();
        let back = read_csv(&buf[..]).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn components_and_channels() {
        // two blobs of label 1 separated by a column of zeros
        let g = grid_from(5, 3, |i, _| u8::from(i != 2));
        assert_eq!(connected_components(&g, 1), 2);
        assert_eq!(connected_components(&g, 0), 1);
        let diag = grid_from(2, 2, |i, j| u8::from(i == j));
        assert_eq!(connected_components(&diag, 1), 2);
        let values: Vec<f64> = (0..15).map(|k| if k == 3 { f64::NAN } else { k as f64 }).collect();
        let mut buf = Vec::new();
        write_ppm(&g.spec, &values, "m", &mut buf).unwrap();
        assert!(buf.starts_with(b"P6\n"));
        assert_eq!(buf.len() - buf.iter().rposition(|&b| b == b'\n').unwrap() - 1, 45);
        let mut buf = Vec::new();
        write_channel_csv(&g, &values, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4 + 15);
        assert!(write_channel_csv(&g, &values[..3], Vec::new()).is_err());
    }

    #[test]
    fn cone_bounds_example() {
        let alpha: f64 = 0.5;
        let b_min = alpha / ((1.0 - alpha * alpha) * alpha * alpha);
        assert!((b_min - 8.0 / 3.0).abs() < 1e-12);
        let c = cone_certificate(0.5, 2000, 1e3, 7).unwrap();
        assert!(c.b > b_min);
        assert!(c.a * c.a < 0.75);
    }

    #[test]
    fn nearest_neighbor_index_matches_brute_force() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
        let pts: Vec<QuotientState> =
            (0..500).map(|_| QuotientState::new(rng.random_range(-2.0..2.0), rng.random_range(0.0..9.0))).collect();
        let idx = PointIndex::new(&pts);
        for _ in 0..200 {
            let p = QuotientState::new(rng.random_range(-4.0..4.0), rng.random_range(-2.0..12.0));
            let brute = pts.iter().map(|q| p.distance(q)).fold(f64::INFINITY, f64::min);
            assert_eq!(idx.nearest(p), brute);
        }
    }
}
