//! Experiment harness: success rate against sparsity, phase transition
//! search, and patch-wise image reconstruction.
//!
//! Reports are deterministic functions of their configuration: they carry no
//! timing, and every random draw comes from a substream of the master seed.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::construct::{build_binary_matrix, build_for_row_size, normalize};
use crate::error::{Error, Result};
use crate::euler::euler_square;
use crate::imaging::{haar_forward, haar_inverse, patchify, unpatchify, Image};
use crate::props::coherence_dense;
use crate::recovery::{
    basis_pursuit, gen_bernoulli_matrix, gen_gaussian_matrix, gen_sparse_signal, omp, snr, solve,
    BasisPursuitParams, RecoveryResult, Solver,
};

pub const REPORT_FORMAT: &str = "eulercs-report/1";

/// Where the measurement matrix of an experiment comes from. Deterministic
/// families are column-normalized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MatrixSource {
    Euler { n: usize, k: usize },
    RowSize { m: usize },
    Gaussian { rows: usize, cols: usize, seed: u64 },
    Bernoulli { rows: usize, cols: usize, seed: u64 },
}

impl MatrixSource {
    pub fn build(&self) -> Result<DMatrix<f64>> {
        match *self {
            MatrixSource::Euler { n, k } => normalize(&build_binary_matrix(&euler_square(n, k)?)?),
            MatrixSource::RowSize { m } => normalize(&build_for_row_size(m)?),
            MatrixSource::Gaussian { rows, cols, seed } => Ok(gen_gaussian_matrix(rows, cols, seed)),
            MatrixSource::Bernoulli { rows, cols, seed } => Ok(gen_bernoulli_matrix(rows, cols, seed)),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            MatrixSource::Euler { .. } => "euler",
            MatrixSource::RowSize { .. } => "row_size",
            MatrixSource::Gaussian { .. } => "gaussian",
            MatrixSource::Bernoulli { .. } => "bernoulli",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub source: MatrixSource,
    pub sparsities: Vec<usize>,
    pub trials: usize,
    pub threshold_db: f64,
    pub solver: Solver,
    pub seed: u64,
}

impl SweepConfig {
    pub fn new(source: MatrixSource, sparsities: Vec<usize>) -> Self {
        SweepConfig { source, sparsities, trials: 1000, threshold_db: 100.0, solver: Solver::Omp, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSummary {
    pub rows: usize,
    pub cols: usize,
    pub coherence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    pub sparsity: usize,
    pub successes: usize,
    pub trials: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub rows: usize,
    /// m / M
    pub delta: f64,
    pub largest_k: usize,
    /// k / M
    pub rho: f64,
    /// Successes at `largest_k` (0 when no level qualified).
    pub successes: usize,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconResult {
    pub rows: usize,
    pub cols: usize,
    pub patches: usize,
    /// M / m
    pub downsampling_factor: f64,
    pub snr_db: f64,
    pub worst_patch_snr_db: Option<f64>,
    pub rank_deficient_patches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum ReportBody {
    Sweep { levels: Vec<LevelResult> },
    PhaseTransition { points: Vec<PhasePoint> },
    PatchReconstruction { result: ReconResult },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub format: String,
    pub config: serde_json::Value,
    pub matrix: Option<MatrixSummary>,
    pub body: ReportBody,
}

impl ExperimentReport {
    fn new<C: Serialize>(config: &C, matrix: Option<MatrixSummary>, body: ReportBody) -> Self {
        ExperimentReport {
            format: REPORT_FORMAT.to_string(),
            config: serde_json::to_value(config).expect("configs serialize"),
            matrix,
            body,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: ExperimentReport =
            serde_json::from_str(text).map_err(|e| Error::ParseError { line: e.line(), msg: e.to_string() })?;
        if report.format != REPORT_FORMAT {
            return Err(Error::ParseError { line: 1, msg: format!("unsupported report format {:?}", report.format) });
        }
        Ok(report)
    }

    /// Flat (x, y) series with extra columns for raw counts.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        match &self.body {
            ReportBody::Sweep { levels } => {
                out.push_str("sparsity,success_percent,successes,trials\n");
                for l in levels {
                    out.push_str(&format!("{},{},{},{}\n", l.sparsity, l.percent, l.successes, l.trials));
                }
            }
            ReportBody::PhaseTransition { points } => {
                out.push_str("delta,rho,rows,largest_k\n");
                for p in points {
                    out.push_str(&format!("{},{},{},{}\n", p.delta, p.rho, p.rows, p.largest_k));
                }
            }
            ReportBody::PatchReconstruction { result } => {
                out.push_str("downsampling_factor,snr_db\n");
                out.push_str(&format!("{},{}\n", result.downsampling_factor, result.snr_db));
            }
        }
        out
    }
}

fn summarize(phi: &DMatrix<f64>) -> Result<MatrixSummary> {
    Ok(MatrixSummary { rows: phi.nrows(), cols: phi.ncols(), coherence: coherence_dense(phi)?.coherence })
}

/// Substream id of one trial: sparsity level in the high half, trial index in the low half.
pub fn trial_stream(sparsity: usize, trial: usize) -> u64 {
    ((sparsity as u64) << 32) | trial as u64
}

fn count_successes(phi: &DMatrix<f64>, sparsity: usize, trials: usize, threshold: f64, solver: Solver, seed: u64) -> Result<usize> {
    let cols = phi.ncols();
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|t| {
            let signal = gen_sparse_signal(cols, sparsity, seed, trial_stream(sparsity, t))?;
            let x = signal.to_dense();
            let y = phi * DVector::from_column_slice(&x);
            Ok(match solve(solver, phi, y.as_slice(), sparsity) {
                Ok(res) => snr(&x, &res.estimate)? >= threshold,
                Err(Error::ConvergenceFailure { .. }) => false,
                Err(e) => return Err(e),
            })
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(outcomes.into_iter().filter(|&ok| ok).count())
}

fn check_budget(trials: usize, threshold: f64) -> Result<()> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be at least 1".into()));
    }
    if !(threshold > 0.0) {
        return Err(Error::InvalidInput(format!("threshold {threshold} dB must be positive")));
    }
    Ok(())
}

/// Success percentage per sparsity level. Levels run in order; the trials of
/// a level run concurrently.
pub fn run_sweep(cfg: &SweepConfig) -> Result<ExperimentReport> {
    check_budget(cfg.trials, cfg.threshold_db)?;
    let phi = cfg.source.build()?;
    let m = phi.nrows();
    if let Some(&k) = cfg.sparsities.iter().find(|&&k| k == 0 || k > m) {
        return Err(Error::InvalidSparsity { k, dim: m });
    }
    let mut levels = Vec::with_capacity(cfg.sparsities.len());
    for &k in &cfg.sparsities {
        let successes = count_successes(&phi, k, cfg.trials, cfg.threshold_db, cfg.solver, cfg.seed)?;
        levels.push(LevelResult {
            sparsity: k,
            successes,
            trials: cfg.trials,
            percent: 100.0 * successes as f64 / cfg.trials as f64,
        });
    }
    Ok(ExperimentReport::new(cfg, Some(summarize(&phi)?), ReportBody::Sweep { levels }))
}

/// Increases of the success percentage between consecutive levels.
pub fn trend_inversions(levels: &[LevelResult]) -> Vec<f64> {
    levels
        .windows(2)
        .map(|w| w[1].percent - w[0].percent)
        .filter(|&d| d > 0.0)
        .collect()
}

/// At most `max_count` increases, none larger than `max_pp` percentage points.
pub fn is_nonincreasing_within(levels: &[LevelResult], max_count: usize, max_pp: f64) -> bool {
    let inv = trend_inversions(levels);
    inv.len() <= max_count && inv.iter().all(|&d| d <= max_pp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Index (√M, m/√M).
    Euler,
    Gaussian,
    Bernoulli,
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Family::Euler),
            "gaussian" => Ok(Family::Gaussian),
            "bernoulli" => Ok(Family::Bernoulli),
            other => Err(Error::InvalidInput(format!("unknown matrix family {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub cols: usize,
    pub rows: Vec<usize>,
    pub family: Family,
    pub success_fraction: f64,
    pub trials: usize,
    pub threshold_db: f64,
    pub solver: Solver,
    pub seed: u64,
}

impl PhaseConfig {
    pub fn new(cols: usize, rows: Vec<usize>) -> Self {
        PhaseConfig {
            cols,
            rows,
            family: Family::Euler,
            success_fraction: 0.9,
            trials: 1000,
            threshold_db: 100.0,
            solver: Solver::Omp,
            seed: 0,
        }
    }

    /// Matrix for row size `m`. Random families use seed `seed + m`.
    pub fn source(&self, m: usize) -> Result<MatrixSource> {
        match self.family {
            Family::Euler => {
                let n = self.cols.isqrt();
                if n * n != self.cols {
                    return Err(Error::InvalidInput(format!("{} columns is not a square", self.cols)));
                }
                if m % n != 0 {
                    return Err(Error::InvalidInput(format!("row size {m} is not a multiple of {n}")));
                }
                Ok(MatrixSource::Euler { n, k: m / n })
            }
            Family::Gaussian => Ok(MatrixSource::Gaussian { rows: m, cols: self.cols, seed: self.seed.wrapping_add(m as u64) }),
            Family::Bernoulli => Ok(MatrixSource::Bernoulli { rows: m, cols: self.cols, seed: self.seed.wrapping_add(m as u64) }),
        }
    }
}

/// For each row size, binary-searches the largest sparsity whose success
/// fraction reaches the target (assuming success decreases with sparsity).
pub fn run_phase_transition(cfg: &PhaseConfig) -> Result<ExperimentReport> {
    check_budget(cfg.trials, cfg.threshold_db)?;
    if !(cfg.success_fraction > 0.0 && cfg.success_fraction <= 1.0) {
        return Err(Error::InvalidInput(format!("success fraction {} outside (0, 1]", cfg.success_fraction)));
    }
    let need = (cfg.success_fraction * cfg.trials as f64 - 1e-9).ceil() as usize;
    let mut points = Vec::with_capacity(cfg.rows.len());
    for &m in &cfg.rows {
        if m == 0 || m > cfg.cols {
            return Err(Error::InvalidInput(format!("row size {m} outside 1..={}", cfg.cols)));
        }
        let phi = cfg.source(m)?.build()?;
        let (mut lo, mut hi) = (0usize, m);
        let mut lo_successes = 0;
        while lo < hi {
            let mid = (lo + hi).div_ceil(2);
            let s = count_successes(&phi, mid, cfg.trials, cfg.threshold_db, cfg.solver, cfg.seed)?;
            if s >= need {
                lo = mid;
                lo_successes = s;
            } else {
                hi = mid - 1;
            }
        }
        points.push(PhasePoint {
            rows: m,
            delta: m as f64 / cfg.cols as f64,
            largest_k: lo,
            rho: lo as f64 / cfg.cols as f64,
            successes: lo_successes,
            trials: cfg.trials,
        });
    }
    Ok(ExperimentReport::new(cfg, None, ReportBody::PhaseTransition { points }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconConfig {
    pub source: MatrixSource,
    pub patch: usize,
    pub levels: u32,
    pub solver: Solver,
    /// OMP atom budget per patch; defaults to half the row count.
    pub max_atoms: Option<usize>,
}

/// Measures every patch's Haar coefficients with the matrix, recovers them,
/// and reassembles the image.
pub fn run_patch_reconstruction(image: &Image, cfg: &ReconConfig) -> Result<(Image, ExperimentReport)> {
    let (grid, patches) = patchify(image, cfg.patch)?;
    let phi = cfg.source.build()?;
    let (m, cols) = phi.shape();
    if cols != cfg.patch * cfg.patch {
        return Err(Error::ShapeError(format!(
            "matrix has {cols} columns but a {0}x{0} patch has {1}",
            cfg.patch,
            cfg.patch * cfg.patch
        )));
    }
    let atoms = cfg.max_atoms.unwrap_or(m / 2).clamp(1, m);
    let bp = BasisPursuitParams::default();

    let recovered = patches
        .par_iter()
        .map(|p| {
            let w = haar_forward(p, cfg.patch, cfg.levels)?;
            let y = &phi * DVector::from_column_slice(&w);
            let ynorm = y.norm();
            let res = match cfg.solver {
                Solver::Omp => omp(&phi, y.as_slice(), atoms, 1e-12 * ynorm)?,
                Solver::BasisPursuit => match basis_pursuit(&phi, y.as_slice(), &bp) {
                    Ok(r) => r,
                    Err(Error::ConvergenceFailure { best, .. }) => RecoveryResult {
                        estimate: best,
                        support: vec![],
                        residual_norm: f64::NAN,
                        iterations: bp.max_iter,
                        snr_db: None,
                        rank_deficient: false,
                    },
                    Err(e) => return Err(e),
                },
            };
            let rec = haar_inverse(&res.estimate, cfg.patch, cfg.levels)?;
            let patch_snr = snr(p, &rec).ok();
            Ok((rec, patch_snr, res.rank_deficient))
        })
        .collect::<Result<Vec<_>>>()?;

    let worst = recovered.iter().filter_map(|r| r.1).min_by(f64::total_cmp);
    let rank_deficient_patches = recovered.iter().filter(|r| r.2).count();
    let out = unpatchify(&grid, &recovered.into_iter().map(|r| r.0).collect::<Vec<_>>())?;
    let result = ReconResult {
        rows: m,
        cols,
        patches: grid.count(),
        downsampling_factor: cols as f64 / m as f64,
        snr_db: snr(&image.pixels, &out.pixels)?,
        worst_patch_snr_db: worst,
        rank_deficient_patches,
    };
    let report = ExperimentReport::new(cfg, Some(summarize(&phi)?), ReportBody::PatchReconstruction { result });
    Ok((out, report))
}
