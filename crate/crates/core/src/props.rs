//! Coherence and the bounds derived from it.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::construct::{MatrixProvenance, SensingMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub rows: usize,
    pub cols: usize,
    /// Largest absolute normalized inner product over distinct columns.
    pub coherence: f64,
    /// 1-based column pair attaining the coherence (first in column order).
    pub argmax: (usize, usize),
    /// Largest absolute unnormalized inner product; integral matrices only.
    pub max_overlap: Option<i64>,
    pub welch_bound: Option<f64>,
    pub density: f64,
    /// (column weight, number of columns) pairs.
    pub column_weights: Vec<(usize, usize)>,
}

impl CoherenceReport {
    /// `key=value` lines.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        kv("rows", self.rows.to_string());
        kv("cols", self.cols.to_string());
        kv("coherence", format!("{}", self.coherence));
        kv("argmax", format!("{},{}", self.argmax.0, self.argmax.1));
        if let Some(o) = self.max_overlap {
            kv("max_overlap", o.to_string());
        }
        if let Some(w) = self.welch_bound {
            kv("welch_bound", format!("{w}"));
            kv("coherence_over_welch", format!("{}", self.coherence / w));
        }
        kv("density", format!("{}", self.density));
        let hist: Vec<String> = self.column_weights.iter().map(|(w, c)| format!("{w}:{c}")).collect();
        kv("column_weights", hist.join(","));
        out
    }
}

#[derive(Clone, Copy)]
struct PairMax {
    ratio: f64,
    overlap: i64,
    pair: (usize, usize),
}

impl PairMax {
    const NONE: PairMax = PairMax { ratio: -1.0, overlap: 0, pair: (usize::MAX, usize::MAX) };

    fn merge(self, other: PairMax) -> PairMax {
        let overlap = self.overlap.max(other.overlap);
        if other.ratio > self.ratio || (other.ratio == self.ratio && other.pair < self.pair) {
            PairMax { overlap, ..other }
        } else {
            PairMax { overlap, ..self }
        }
    }
}

/// Exhaustive coherence of a sparse matrix.
///
/// Inner products are accumulated through the row incidence lists, so each
/// column costs (its weight) x (row weight) instead of a pass over all columns.
pub fn coherence(matrix: &SensingMatrix) -> Result<CoherenceReport> {
    let (m, cols) = (matrix.rows(), matrix.cols());
    if cols < 2 {
        return Err(Error::InvalidInput("coherence needs at least two columns".into()));
    }
    if let Some(c) = (0..cols).find(|&c| matrix.support(c).is_empty()) {
        return Err(Error::DegenerateColumn(c));
    }
    let mut by_row: Vec<Vec<(u32, i8)>> = vec![Vec::new(); m];
    for c in 0..cols {
        for (r, v) in matrix.column(c) {
            by_row[r].push((c as u32, v));
        }
    }
    let weights: Vec<f64> = (0..cols).map(|c| matrix.support(c).len() as f64).collect();

    let best = (0..cols)
        .into_par_iter()
        .map_init(
            || (vec![0i64; cols], vec![false; cols], Vec::<usize>::new()),
            |(acc, seen, touched), c| {
                for (r, v) in matrix.column(c) {
                    for &(d, w) in &by_row[r] {
                        let d = d as usize;
                        if d > c {
                            if !seen[d] {
                                seen[d] = true;
                                touched.push(d);
                            }
                            acc[d] += (v * w) as i64;
                        }
                    }
                }
                let mut best = PairMax::NONE;
                touched.sort_unstable();
                // Pairs with no shared row have inner product 0.
                if touched.len() < cols - c - 1 {
                    let d = (c + 1..cols)
                        .zip(touched.iter().copied().map(Some).chain(std::iter::repeat(None)))
                        .find(|&(d, t)| t != Some(d))
                        .map(|(d, _)| d)
                        .unwrap();
                    best = PairMax { ratio: 0.0, overlap: 0, pair: (c, d) };
                }
                for &d in touched.iter() {
                    let ip = acc[d].abs();
                    let ratio = ip as f64 / (weights[c] * weights[d]).sqrt();
                    best = best.merge(PairMax { ratio, overlap: ip, pair: (c, d) });
                    acc[d] = 0;
                    seen[d] = false;
                }
                touched.clear();
                best
            },
        )
        .reduce(|| PairMax::NONE, PairMax::merge);

    Ok(CoherenceReport {
        rows: m,
        cols,
        coherence: best.ratio.max(0.0),
        argmax: (best.pair.0 + 1, best.pair.1 + 1),
        max_overlap: Some(best.overlap),
        welch_bound: welch_bound(m, cols).ok(),
        density: matrix.density(),
        column_weights: matrix.weight_histogram(),
    })
}

/// Exhaustive coherence of a dense real matrix via the normalized Gram matrix.
pub fn coherence_dense(matrix: &DMatrix<f64>) -> Result<CoherenceReport> {
    let (m, cols) = matrix.shape();
    if cols < 2 {
        return Err(Error::InvalidInput("coherence needs at least two columns".into()));
    }
    let mut unit = matrix.clone();
    for c in 0..cols {
        let norm = unit.column(c).norm();
        if norm == 0.0 {
            return Err(Error::DegenerateColumn(c));
        }
        unit.column_mut(c).scale_mut(1.0 / norm);
    }
    let gram = unit.transpose() * &unit;
    let mut best = PairMax::NONE;
    for c in 0..cols {
        for d in c + 1..cols {
            best = best.merge(PairMax { ratio: gram[(c, d)].abs(), overlap: 0, pair: (c, d) });
        }
    }
    let nnz = matrix.iter().filter(|&&v| v != 0.0).count();
    let mut hist = std::collections::BTreeMap::new();
    for c in 0..cols {
        *hist.entry(matrix.column(c).iter().filter(|&&v| v != 0.0).count()).or_insert(0) += 1;
    }
    Ok(CoherenceReport {
        rows: m,
        cols,
        coherence: best.ratio,
        argmax: (best.pair.0 + 1, best.pair.1 + 1),
        max_overlap: None,
        welch_bound: welch_bound(m, cols).ok(),
        density: nnz as f64 / (m * cols) as f64,
        column_weights: hist.into_iter().collect(),
    })
}

/// sqrt((M - m) / (m (M - 1))), the smallest coherence any m x M matrix can have.
pub fn welch_bound(m: usize, cols: usize) -> Result<f64> {
    if cols <= m || m == 0 {
        return Err(Error::BoundUndefined { m, cols });
    }
    Ok((((cols - m) as f64) / ((m * (cols - 1)) as f64)).sqrt())
}

pub fn binomial(n: u64, r: u64) -> u128 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    (0..r).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// floor(C(m, r) / C(k, r)): the most columns a binary m-row matrix with k
/// ones per column and pairwise overlap below r can have.
pub fn max_binary_columns(m: u64, k: u64, r: u64) -> Result<u128> {
    if !(m >= k && k >= r && r >= 1) {
        return Err(Error::InvalidInput(format!("need m >= k >= r >= 1, got m={m} k={k} r={r}")));
    }
    Ok(binomial(m, r) / binomial(k, r))
}

/// RIP constant (k' - 1) μ implied by coherence for unit-norm columns.
pub fn rip_delta(mu: f64, order: usize) -> f64 {
    order.saturating_sub(1) as f64 * mu
}

/// Largest sparsity s with s < (1 + 1/μ) / 2.
pub fn sparsity_guarantee(mu: f64) -> Result<usize> {
    if mu <= 0.0 {
        return Err(Error::Unbounded);
    }
    let bound = 0.5 * (1.0 + 1.0 / mu);
    Ok(bound.ceil() as usize - 1)
}

/// Same bound for μ = overlap / weight, evaluated in integers.
pub fn sparsity_guarantee_exact(overlap: u64, weight: u64) -> Result<usize> {
    if overlap == 0 {
        return Err(Error::Unbounded);
    }
    // s < (1 + w/o) / 2  <=>  2 s o < o + w
    Ok(((overlap + weight - 1) / (2 * overlap)) as usize)
}

/// c = M / (m μ)².
pub fn aspect_constant(matrix: &SensingMatrix, report: &CoherenceReport) -> Result<f64> {
    if *matrix.provenance() == MatrixProvenance::Unknown {
        return Err(Error::ProvenanceRequired);
    }
    let (m, cols) = (matrix.rows() as f64, matrix.cols() as f64);
    match (matrix.column_weight(), report.max_overlap) {
        (Some(k), Some(o)) if o > 0 => {
            let k = k as f64;
            let o = o as f64;
            Ok(cols * k * k / (m * o * m * o))
        }
        _ => Ok(cols / (m * report.coherence).powi(2)),
    }
}
