//! Sparse recovery: orthogonal matching pursuit, ADMM basis pursuit,
//! seeded signal and random-matrix generators, and the SNR score.
//!
//! Randomness comes from ChaCha20 ([`rand_chacha::ChaCha20Rng`]). A master
//! seed selects the key through `seed_from_u64`; independent trials use the
//! same key on different ChaCha stream ids (see [`substream`]).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Value reported for an exact reconstruction.
pub const SNR_CAP_DB: f64 = 310.0;

/// Generator for stream `stream` of master seed `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Omp,
    BasisPursuit,
}

impl std::str::FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "omp" => Ok(Solver::Omp),
            "bp" | "basis_pursuit" | "l1" => Ok(Solver::BasisPursuit),
            other => Err(Error::InvalidInput(format!("unknown solver {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseSignal {
    pub dim: usize,
    /// 0-based, ascending.
    pub support: Vec<usize>,
    pub values: Vec<f64>,
    pub seed: u64,
    pub stream: u64,
}

impl SparseSignal {
    pub fn to_dense(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        for (&i, &v) in self.support.iter().zip(&self.values) {
            x[i] = v;
        }
        x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub estimate: Vec<f64>,
    /// 0-based indices in selection order (OMP) or ascending (basis pursuit).
    pub support: Vec<usize>,
    pub residual_norm: f64,
    pub iterations: usize,
    /// Filled by [`RecoveryResult::score`].
    pub snr_db: Option<f64>,
    /// A selected submatrix was numerically rank deficient; the coefficients
    /// are the minimum-norm least-squares solution.
    pub rank_deficient: bool,
}

impl RecoveryResult {
    pub fn score(mut self, reference: &[f64]) -> Result<Self> {
        self.snr_db = Some(snr(reference, &self.estimate)?);
        Ok(self)
    }
}

/// 10 log10(‖x‖ / ‖x - x̃‖), a ratio of norms rather than energies.
/// Exact recovery reports [`SNR_CAP_DB`].
pub fn snr(x: &[f64], estimate: &[f64]) -> Result<f64> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::UndefinedSnr);
    }
    let err = x
        .iter()
        .zip(estimate)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if err == 0.0 {
        return Ok(SNR_CAP_DB);
    }
    Ok((10.0 * (norm / err).log10()).min(SNR_CAP_DB))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_columns(phi: &DMatrix<f64>) -> Result<Vec<f64>> {
    (0..phi.ncols())
        .map(|c| {
            let n = phi.column(c).norm();
            if n == 0.0 {
                Err(Error::DegenerateColumn(c))
            } else {
                Ok(n)
            }
        })
        .collect()
}

fn min_norm_lstsq(phi: &DMatrix<f64>, support: &[usize], y: &[f64]) -> Vec<f64> {
    let sub = phi.select_columns(support);
    let svd = sub.svd(true, true);
    let max_sv = svd.singular_values.max();
    let eps = max_sv * 1e-12 * (phi.nrows().max(support.len()) as f64);
    svd.solve(&DVector::from_column_slice(y), eps)
        .map(|c| c.as_slice().to_vec())
        .unwrap_or_else(|_| vec![0.0; support.len()])
}

/// Orthogonal matching pursuit with at most `max_atoms` atoms, stopping early
/// once the residual norm is at most `tol`. Atoms are chosen by largest
/// |⟨φ_j, r⟩| / ‖φ_j‖ with ties going to the lowest index.
pub fn omp(phi: &DMatrix<f64>, y: &[f64], max_atoms: usize, tol: f64) -> Result<RecoveryResult> {
    let (m, cols) = phi.shape();
    if y.len() != m {
        return Err(Error::ShapeError(format!("measurement length {} != {m} rows", y.len())));
    }
    if max_atoms > m {
        return Err(Error::ShapeError(format!("{max_atoms} atoms exceed {m} rows")));
    }
    let norms = check_columns(phi)?;

    let mut residual = y.to_vec();
    let mut support: Vec<usize> = Vec::new();
    let mut chosen = vec![false; cols];
    // Orthonormal basis of the selected columns, R factor, and Qᵀy.
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut r_cols: Vec<Vec<f64>> = Vec::new();
    let mut qty: Vec<f64> = Vec::new();
    let mut rank_deficient = false;

    while support.len() < max_atoms && norm(&residual) > tol {
        let rvec = DVector::from_column_slice(&residual);
        let corr = phi.tr_mul(&rvec);
        let mut best: Option<(usize, f64)> = None;
        for j in 0..cols {
            if chosen[j] {
                continue;
            }
            let score = corr[j].abs() / norms[j];
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((j, score));
            }
        }
        let Some((j, score)) = best else { break };
        if score == 0.0 {
            break;
        }
        chosen[j] = true;
        support.push(j);

        let atom: Vec<f64> = phi.column(j).iter().copied().collect();
        let mut q = atom.clone();
        let mut rcol = vec![0.0; basis.len() + 1];
        // Two Gram-Schmidt passes keep the basis orthogonal to working precision.
        for _ in 0..2 {
            for (i, b) in basis.iter().enumerate() {
                let c = dot(b, &q);
                rcol[i] += c;
                q.iter_mut().zip(b).for_each(|(qv, bv)| *qv -= c * bv);
            }
        }
        let qn = norm(&q);
        if qn <= 1e-12 * norms[j] {
            rank_deficient = true;
            break;
        }
        q.iter_mut().for_each(|v| *v /= qn);
        rcol[basis.len()] = qn;
        let proj = dot(&q, y);
        residual.iter_mut().zip(&q).for_each(|(r, qv)| *r -= proj * qv);
        basis.push(q);
        r_cols.push(rcol);
        qty.push(proj);
    }

    let coeffs = if rank_deficient {
        min_norm_lstsq(phi, &support, y)
    } else {
        // Back substitution on R c = Qᵀ y.
        let s = support.len();
        let mut c = vec![0.0; s];
        for i in (0..s).rev() {
            let mut acc = qty[i];
            for jj in i + 1..s {
                acc -= r_cols[jj][i] * c[jj];
            }
            c[i] = acc / r_cols[i][i];
        }
        c
    };

    let mut estimate = vec![0.0; cols];
    for (&j, &c) in support.iter().zip(&coeffs) {
        estimate[j] = c;
    }
    let residual_norm = residual_of(phi, &estimate, y);
    Ok(RecoveryResult {
        estimate,
        iterations: support.len(),
        support,
        residual_norm,
        snr_db: None,
        rank_deficient,
    })
}

fn residual_of(phi: &DMatrix<f64>, x: &[f64], y: &[f64]) -> f64 {
    let ax = phi * DVector::from_column_slice(x);
    ax.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisPursuitParams {
    pub rho: f64,
    pub max_iter: usize,
    /// Bound on ‖Φx̃ - y‖₂.
    pub tol_feas: f64,
    /// Relative ADMM residual tolerance, also the slack allowed on ‖x̃‖₁.
    pub tol_gap: f64,
}

impl Default for BasisPursuitParams {
    fn default() -> Self {
        BasisPursuitParams {
            rho: 1.0,
            max_iter: 5000,
            tol_feas: 1e-10,
            tol_gap: 1e-8,
        }
    }
}

/// Cached projector onto the affine set {x : Φx = y} (least-squares sense
/// when y lies outside the range of Φ).
struct AffineProjector<'a> {
    phi: &'a DMatrix<f64>,
    /// Φᵀ (ΦΦᵀ)⁺
    lift: DMatrix<f64>,
}

impl<'a> AffineProjector<'a> {
    fn new(phi: &'a DMatrix<f64>) -> Self {
        let gram = phi * phi.transpose();
        let eig = SymmetricEigen::new(gram);
        let max = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let cutoff = max * 1e-12 * phi.nrows() as f64;
        let inv = eig.eigenvalues.map(|l| if l > cutoff { 1.0 / l } else { 0.0 });
        let pinv = &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose();
        AffineProjector { phi, lift: phi.transpose() * pinv }
    }

    fn project(&self, v: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let gap = self.phi * v - y;
        v - &self.lift * gap
    }
}

fn soft_threshold(v: &DVector<f64>, t: f64) -> DVector<f64> {
    v.map(|x| x.signum() * (x.abs() - t).max(0.0))
}

/// min ‖x‖₁ subject to Φx = y by ADMM: alternate the affine projection with
/// soft-thresholding, then refit the detected support by least squares.
pub fn basis_pursuit(phi: &DMatrix<f64>, y: &[f64], params: &BasisPursuitParams) -> Result<RecoveryResult> {
    let (m, cols) = phi.shape();
    if y.len() != m {
        return Err(Error::ShapeError(format!("measurement length {} != {m} rows", y.len())));
    }
    check_columns(phi)?;
    let yv = DVector::from_column_slice(y);
    if yv.norm() == 0.0 {
        return Ok(RecoveryResult {
            estimate: vec![0.0; cols],
            support: vec![],
            residual_norm: 0.0,
            iterations: 0,
            snr_db: None,
            rank_deficient: false,
        });
    }
    let proj = AffineProjector::new(phi);
    let thresh = 1.0 / params.rho;
    let mut z = DVector::zeros(cols);
    let mut u = DVector::zeros(cols);
    let mut x = DVector::zeros(cols);

    for iter in 1..=params.max_iter {
        x = proj.project(&(&z - &u), &yv);
        let z_prev = z;
        z = soft_threshold(&(&x + &u), thresh);
        u += &x - &z;

        let scale = x.norm().max(1.0);
        let primal = (&x - &z).norm();
        let dual = params.rho * (&z - &z_prev).norm();
        if primal > params.tol_gap * scale || dual > params.tol_gap * scale {
            continue;
        }
        let feasibility = (phi * &x - &yv).norm();
        if feasibility > params.tol_feas {
            return Err(Error::ConvergenceFailure {
                iterations: iter,
                feasibility,
                best: x.as_slice().to_vec(),
            });
        }
        let l1 = x.abs().sum();
        let zmax = z.amax();
        let support: Vec<usize> = (0..cols).filter(|&i| z[i].abs() > 1e-9 * zmax).collect();
        let mut estimate = x.as_slice().to_vec();
        let mut rank_deficient = false;
        if !support.is_empty() && support.len() <= m {
            let refit = min_norm_lstsq(phi, &support, y);
            let mut cand = vec![0.0; cols];
            for (&i, &c) in support.iter().zip(&refit) {
                cand[i] = c;
            }
            let cand_l1: f64 = cand.iter().map(|v| v.abs()).sum();
            if residual_of(phi, &cand, y) <= params.tol_feas && cand_l1 <= l1 + params.tol_gap * l1.max(1.0) {
                estimate = cand;
            }
            let sub = phi.select_columns(&support);
            rank_deficient = sub.rank(1e-10) < support.len();
        }
        let residual_norm = residual_of(phi, &estimate, y);
        let support = (0..cols).filter(|&i| estimate[i] != 0.0).collect();
        return Ok(RecoveryResult {
            estimate,
            support,
            residual_norm,
            iterations: iter,
            snr_db: None,
            rank_deficient,
        });
    }
    let feasibility = (phi * &x - &yv).norm();
    Err(Error::ConvergenceFailure {
        iterations: params.max_iter,
        feasibility,
        best: x.as_slice().to_vec(),
    })
}

/// Dispatches to the chosen solver; OMP runs with `sparsity` atoms.
pub fn solve(solver: Solver, phi: &DMatrix<f64>, y: &[f64], sparsity: usize) -> Result<RecoveryResult> {
    match solver {
        Solver::Omp => {
            let tol = 1e-14 * norm(y);
            omp(phi, y, sparsity.min(phi.nrows()), tol)
        }
        Solver::BasisPursuit => basis_pursuit(phi, y, &BasisPursuitParams::default()),
    }
}

/// k distinct uniform indices with standard-normal values, from stream
/// `stream` of `seed`.
pub fn gen_sparse_signal(dim: usize, k: usize, seed: u64, stream: u64) -> Result<SparseSignal> {
    if k == 0 || k > dim {
        return Err(Error::InvalidSparsity { k, dim });
    }
    let mut rng = substream(seed, stream);
    let mut support = rand::seq::index::sample(&mut rng, dim, k).into_vec();
    support.sort_unstable();
    let values = (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Ok(SparseSignal { dim, support, values, seed, stream })
}

/// i.i.d. N(0, 1/m) entries, filled column by column.
pub fn gen_gaussian_matrix(m: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let sd = 1.0 / (m as f64).sqrt();
    let data = (0..m * cols).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
    DMatrix::from_vec(m, cols, data)
}

/// i.i.d. ±1/√m entries with equal probability, filled column by column.
pub fn gen_bernoulli_matrix(m: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let amp = 1.0 / (m as f64).sqrt();
    let data = (0..m * cols).map(|_| if rng.random::<bool>() { amp } else { -amp }).collect();
    DMatrix::from_vec(m, cols, data)
}
