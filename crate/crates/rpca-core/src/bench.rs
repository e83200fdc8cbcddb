//! Recovery metrics, single-trial execution, and phase-transition sweeps
//! over (outlier ratio x rank ratio) grids with CSV emission.
//!
//! A sweep is a pure function of its [`SweepSpec`]: per-trial seeds come from
//! [`crate::synth::derive_seed`] with `cell_id = rho_index * |rank grid| +
//! rank_index`, every method of a trial consumes the identical observation
//! (checksum-enforced), and results are sorted before emission so the worker
//! count never shows in the output. Wall-clock seconds are recorded but
//! excluded from any determinism guarantee.

use std::time::Instant;

use ndarray::Array2;

use crate::baselines::{mc_alm, pcp_alm, trace_variant_solve};
use crate::error::{Error, Result};
use crate::io::format_f64;
use crate::matrix::{fro_dist, fro_norm, Matrix};
use crate::solver::{solve, SolverConfig};
use crate::synth::{derive_seed, generate, SyntheticKind, SyntheticSpec};

/// `|Z_hat - Z_gt|_F / |Z_gt|_F`.
pub fn nrmse(z_hat: &Matrix, z_gt: &Matrix) -> Result<f64> {
    if z_hat.dim() != z_gt.dim() {
        return Err(Error::dim(format!(
            "nrmse: shapes {:?} vs {:?}",
            z_hat.dim(),
            z_gt.dim()
        )));
    }
    let denom = fro_norm(z_gt);
    if denom == 0.0 {
        return Err(Error::invalid("nrmse: reference matrix is zero"));
    }
    Ok(fro_dist(z_hat, z_gt) / denom)
}

/// Precision, recall and F1 of the detected outlier set (`|e_hat| >
/// threshold`) against the true nonzero set.
pub fn support_f1(e_hat: &Matrix, e_gt: &Matrix, threshold: f64) -> Result<(f64, f64, f64)> {
    if e_hat.dim() != e_gt.dim() {
        return Err(Error::dim("support_f1: shape mismatch"));
    }
    if threshold <= 0.0 {
        return Err(Error::invalid("support_f1: threshold must be > 0"));
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (h, g) in e_hat.iter().zip(e_gt.iter()) {
        let detected = h.abs() > threshold;
        let truth = *g != 0.0;
        match (detected, truth) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let precision = if tp + fp == 0 {
        1.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        1.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok((precision, recall, f1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    Pb,
    PbNosym,
    Pcp,
    Mc,
    PbTrace,
}

impl Method {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pb" => Ok(Method::Pb),
            "pb-nosym" => Ok(Method::PbNosym),
            "pcp" => Ok(Method::Pcp),
            "mc" => Ok(Method::Mc),
            "pb-trace" => Ok(Method::PbTrace),
            other => Err(Error::invalid(format!(
                "unknown method '{other}' (expected pb|pb-nosym|pcp|mc|pb-trace)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Pb => "pb",
            Method::PbNosym => "pb-nosym",
            Method::Pcp => "pcp",
            Method::Mc => "mc",
            Method::PbTrace => "pb-trace",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub n: usize,
    pub m: usize,
    pub rho_grid: Vec<f64>,
    pub rank_ratio_grid: Vec<f64>,
    pub trials_per_cell: usize,
    pub methods: Vec<Method>,
    pub data_kind: SyntheticKind,
    pub base_seed: u64,
    pub success_threshold: f64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trials_per_cell == 0 {
            return Err(Error::invalid("sweep: trials_per_cell must be >= 1"));
        }
        if self.success_threshold <= 0.0 {
            return Err(Error::invalid("sweep: success_threshold must be > 0"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("sweep: no methods selected"));
        }
        let ascending = |g: &[f64]| g.windows(2).all(|w| w[0] < w[1]);
        if self.rho_grid.is_empty() || !ascending(&self.rho_grid) {
            return Err(Error::invalid("sweep: rho grid must be ascending and nonempty"));
        }
        if self
            .rho_grid
            .iter()
            .any(|r| *r <= 0.0 || *r >= 1.0)
        {
            return Err(Error::invalid("sweep: rho grid values must lie in (0, 1)"));
        }
        if self.rank_ratio_grid.is_empty() || !ascending(&self.rank_ratio_grid) {
            return Err(Error::invalid(
                "sweep: rank-ratio grid must be ascending and nonempty",
            ));
        }
        if self
            .rank_ratio_grid
            .iter()
            .any(|r| *r <= 0.0 || *r > 1.0)
        {
            return Err(Error::invalid("sweep: rank ratios must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Grid cells are numbered row-major over (rho index, rank index); the
    /// number feeds seed derivation.
    pub fn cell_id(&self, rho_idx: usize, rank_idx: usize) -> u64 {
        (rho_idx * self.rank_ratio_grid.len() + rank_idx) as u64
    }

    /// Instance rank for a rank ratio: `max(1, round(ratio * min(n, m)))`.
    pub fn rank_for_ratio(&self, ratio: f64) -> usize {
        ((ratio * self.n.min(self.m) as f64).round() as usize).max(1)
    }
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub method: Method,
    pub rho: f64,
    pub rank_ratio: f64,
    pub trial: usize,
    pub seed: u64,
    pub nrmse: f64,
    pub success: bool,
    pub outer_iters: usize,
    pub seconds: f64,
}

/// Per-method grid of success rates, rows indexed by rho, columns by rank
/// ratio.
#[derive(Debug, Clone)]
pub struct SuccessGrid {
    pub method: Method,
    pub rates: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub results: Vec<CellResult>,
    pub grids: Vec<SuccessGrid>,
}

fn y_checksum(y: &Matrix) -> u64 {
    let mut acc = 0x9E37_79B9_7F4A_7C15u64;
    for v in y.iter() {
        acc = crate::synth::splitmix64(acc ^ v.to_bits());
    }
    acc
}

/// Runs every selected method on the instance of one (cell, trial) slot.
///
/// Solver failures are recorded as `nrmse = +inf` rather than aborting the
/// sweep. The completion baseline receives the true clean support, matching
/// the informed-baseline protocol of the recovery experiments.
pub fn run_cell(
    spec: &SweepSpec,
    rho_idx: usize,
    rank_idx: usize,
    trial: usize,
) -> Result<Vec<CellResult>> {
    spec.validate()?;
    if rho_idx >= spec.rho_grid.len() || rank_idx >= spec.rank_ratio_grid.len() {
        return Err(Error::invalid("run_cell: grid index out of range"));
    }
    let rho = spec.rho_grid[rho_idx];
    let rank_ratio = spec.rank_ratio_grid[rank_idx];
    let seed = derive_seed(spec.base_seed, spec.cell_id(rho_idx, rank_idx), trial as u64);
    let inst_spec = SyntheticSpec::new(
        spec.data_kind,
        spec.n,
        spec.m,
        spec.rank_for_ratio(rank_ratio),
        rho,
        seed,
    )?;
    let inst = generate(&inst_spec)?;
    let checksum = y_checksum(&inst.y);

    let mut out = Vec::with_capacity(spec.methods.len());
    for &method in &spec.methods {
        assert_eq!(
            y_checksum(&inst.y),
            checksum,
            "observation mutated between methods"
        );
        let started = Instant::now();
        let solved: Result<(Matrix, usize)> = match method {
            Method::Pb => solve(&inst.y, &SolverConfig::default()).map(|d| (d.z, d.outer_iters)),
            Method::PbNosym => {
                let cfg = SolverConfig {
                    symmetric: false,
                    ..SolverConfig::default()
                };
                solve(&inst.y, &cfg).map(|d| (d.z, d.outer_iters))
            }
            Method::Pcp => pcp_alm(&inst.y, 0.0, 1e-7, 500).map(|r| (r.z, r.iterations)),
            Method::Mc => mc_alm(&inst.y, &inst.support, 1e-7, 500).map(|r| (r.z, r.iterations)),
            Method::PbTrace => trace_variant_solve(&inst.y, 1e-3, 1e-10, 4000)
                .map(|r| (&r.state.z_c + &r.state.z_r, r.iterations)),
        };
        let seconds = started.elapsed().as_secs_f64();
        let (err, iters) = match solved {
            Ok((z, iters)) => (nrmse(&z, &inst.z_gt)?, iters),
            Err(_) => (f64::INFINITY, 0),
        };
        out.push(CellResult {
            method,
            rho,
            rank_ratio,
            trial,
            seed,
            nrmse: err,
            success: err < spec.success_threshold,
            outer_iters: iters,
            seconds,
        });
    }
    Ok(out)
}

/// Executes the full grid, `trials_per_cell` instances per cell, across a
/// bounded worker pool. The output is independent of `jobs`.
pub fn run_sweep(spec: &SweepSpec, jobs: usize) -> Result<SweepResult> {
    spec.validate()?;
    if jobs == 0 {
        return Err(Error::invalid("run_sweep: jobs must be >= 1"));
    }
    crate::linalg::blas_single_thread();
    let mut slots = Vec::new();
    for rho_idx in 0..spec.rho_grid.len() {
        for rank_idx in 0..spec.rank_ratio_grid.len() {
            for trial in 0..spec.trials_per_cell {
                slots.push((rho_idx, rank_idx, trial));
            }
        }
    }
    let outcomes: Vec<Result<Vec<CellResult>>> = if jobs == 1 {
        slots
            .iter()
            .map(|&(r, k, t)| run_cell(spec, r, k, t))
            .collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
        pool.install(|| {
            use rayon::prelude::*;
            slots
                .par_iter()
                .map(|&(r, k, t)| run_cell(spec, r, k, t))
                .collect()
        })
    };
    let mut results = Vec::with_capacity(slots.len() * spec.methods.len());
    for outcome in outcomes {
        results.extend(outcome?);
    }
    results.sort_by(|a, b| {
        a.method
            .name()
            .cmp(b.method.name())
            .then(a.rho.total_cmp(&b.rho))
            .then(a.rank_ratio.total_cmp(&b.rank_ratio))
            .then(a.trial.cmp(&b.trial))
    });

    let grids = aggregate_grids(spec, &results);
    Ok(SweepResult { results, grids })
}

fn aggregate_grids(spec: &SweepSpec, results: &[CellResult]) -> Vec<SuccessGrid> {
    let (nr, nk) = (spec.rho_grid.len(), spec.rank_ratio_grid.len());
    let mut grids = Vec::new();
    for &method in &spec.methods {
        let mut hits = Array2::<f64>::zeros((nr, nk));
        for r in results.iter().filter(|r| r.method == method) {
            let rho_idx = spec
                .rho_grid
                .iter()
                .position(|v| *v == r.rho)
                .expect("rho from grid");
            let rank_idx = spec
                .rank_ratio_grid
                .iter()
                .position(|v| *v == r.rank_ratio)
                .expect("rank ratio from grid");
            if r.success {
                hits[[rho_idx, rank_idx]] += 1.0;
            }
        }
        grids.push(SuccessGrid {
            method,
            rates: hits / spec.trials_per_cell as f64,
        });
    }
    grids
}

pub const CSV_HEADER: &str = "method,rho,rank_ratio,trial,seed,nrmse,success,outer_iters,seconds";

/// Renders sorted results to the CSV schema, LF line endings, floats with 17
/// significant digits.
pub fn results_to_csv(results: &[CellResult]) -> String {
    let mut out = String::with_capacity(results.len() * 96 + 80);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in results {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.method.name(),
            format_f64(r.rho),
            format_f64(r.rank_ratio),
            r.trial,
            r.seed,
            format_f64(r.nrmse),
            r.success,
            r.outer_iters,
            format_f64(r.seconds),
        ));
    }
    out
}

pub fn write_results_csv(results: &[CellResult], path: &std::path::Path) -> Result<()> {
    crate::io::write_text(path, &results_to_csv(results))
}

/// Parses a results CSV back; round-trips every field exactly.
pub fn read_results_csv(path: &std::path::Path) -> Result<Vec<CellResult>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        _ => return Err(Error::parse(path, "missing or wrong CSV header")),
    }
    let mut out = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(Error::parse(path, format!("line {}: expected 9 fields", ln + 2)));
        }
        let parse_f = |s: &str, what: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::parse(path, format!("line {}: bad {what} '{s}'", ln + 2)))
        };
        out.push(CellResult {
            method: Method::parse(fields[0]).map_err(|e| Error::parse(path, e.to_string()))?,
            rho: parse_f(fields[1], "rho")?,
            rank_ratio: parse_f(fields[2], "rank_ratio")?,
            trial: fields[3]
                .parse()
                .map_err(|_| Error::parse(path, format!("line {}: bad trial", ln + 2)))?,
            seed: fields[4]
                .parse()
                .map_err(|_| Error::parse(path, format!("line {}: bad seed", ln + 2)))?,
            nrmse: parse_f(fields[5], "nrmse")?,
            success: match fields[6] {
                "true" => true,
                "false" => false,
                _ => return Err(Error::parse(path, format!("line {}: bad success", ln + 2))),
            },
            outer_iters: fields[7]
                .parse()
                .map_err(|_| Error::parse(path, format!("line {}: bad outer_iters", ln + 2)))?,
            seconds: parse_f(fields[8], "seconds")?,
        });
    }
    Ok(out)
}

/// Drops the `seconds` column; determinism comparisons use this view.
pub fn csv_without_seconds(csv: &str) -> String {
    csv.lines()
        .map(|line| match line.rfind(',') {
            Some(pos) => &line[..pos],
            None => line,
        })
        .map(|l| format!("{l}\n"))
        .collect()
}

/// Tab-separated success-rate grid: one row per rho value, one column per
/// rank ratio.
pub fn grid_to_tsv(grid: &SuccessGrid) -> String {
    let mut out = String::new();
    for row in grid.rates.rows() {
        let cells: Vec<String> = row.iter().map(|v| format_f64(*v)).collect();
        out.push_str(&cells.join("\t"));
        out.push('\n');
    }
    out
}
