//! Sensing-matrix constructions and the `ESM v1` text format.
//!
//! Matrices are stored column-compressed: each column is a sorted list of
//! (row, ±1) entries. Binary matrices carry only `+1` values.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::euler::{euler_square, factorize, EulerSquare};
use crate::fields::is_prime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alphabet {
    Binary,
    Ternary,
}

impl fmt::Display for Alphabet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Alphabet::Binary => "binary",
            Alphabet::Ternary => "ternary",
        })
    }
}

impl FromStr for Alphabet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(Alphabet::Binary),
            "ternary" => Ok(Alphabet::Ternary),
            other => Err(Error::InvalidInput(format!("unknown alphabet {other:?}"))),
        }
    }
}

/// Which construction produced a matrix. Its text form is the second line
/// of an ESM file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatrixProvenance {
    /// Plain matrix from the Euler square of index (n, k).
    Euler { n: usize, k: usize },
    /// Matrix with exactly `m` rows, built from index (n, k).
    RowSize { m: usize, n: usize, k: usize },
    /// Column-extended matrix; `peeled` lists the prime powers removed per stage.
    Extended { n: usize, k: usize, peeled: Vec<usize> },
    /// Hadamard expansion of index (p^i, p^i - j) using a Hadamard matrix of order `h`.
    Ternary { p: u64, i: u32, j: u32, h: usize },
    Unknown,
}

impl MatrixProvenance {
    /// The Euler index the matrix was derived from, if any.
    pub fn euler_index(&self) -> Option<(usize, usize)> {
        match *self {
            MatrixProvenance::Euler { n, k }
            | MatrixProvenance::RowSize { n, k, .. }
            | MatrixProvenance::Extended { n, k, .. } => Some((n, k)),
            MatrixProvenance::Ternary { p, i, j, .. } => {
                let q = p.pow(i) as usize;
                Some((q, q - j as usize))
            }
            MatrixProvenance::Unknown => None,
        }
    }

    /// Rebuilds the matrix this descriptor names.
    pub fn rebuild(&self) -> Result<SensingMatrix> {
        match *self {
            MatrixProvenance::Euler { n, k } => build_binary_matrix(&euler_square(n, k)?),
            MatrixProvenance::RowSize { m, .. } => build_for_row_size(m),
            MatrixProvenance::Extended { n, .. } => Ok(build_extended(n)?.0),
            MatrixProvenance::Ternary { p, i, j, .. } => build_ternary(p, i, j),
            MatrixProvenance::Unknown => Err(Error::ProvenanceRequired),
        }
    }
}

impl fmt::Display for MatrixProvenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixProvenance::Euler { n, k } => write!(f, "euler n={n} k={k}"),
            MatrixProvenance::RowSize { m, n, k } => write!(f, "rows m={m} n={n} k={k}"),
            MatrixProvenance::Extended { n, k, peeled } => {
                let p: Vec<String> = peeled.iter().map(usize::to_string).collect();
                write!(f, "extended n={n} k={k} peeled={}", p.join(","))
            }
            MatrixProvenance::Ternary { p, i, j, h } => write!(f, "ternary p={p} i={i} j={j} h={h}"),
            MatrixProvenance::Unknown => write!(f, "unknown"),
        }
    }
}

impl FromStr for MatrixProvenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split_whitespace();
        let kind = parts.next().unwrap_or("");
        let mut fields = std::collections::HashMap::new();
        for kv in parts {
            let (key, value) = kv
                .split_once('=')
                .ok_or_else(|| Error::InvalidInput(format!("bad provenance field {kv:?}")))?;
            fields.insert(key, value);
        }
        let get = |key: &str| -> Result<usize> {
            fields
                .get(key)
                .ok_or_else(|| Error::InvalidInput(format!("provenance lacks {key}")))?
                .parse()
                .map_err(|e| Error::InvalidInput(format!("provenance field {key}: {e}")))
        };
        Ok(match kind {
            "euler" => MatrixProvenance::Euler { n: get("n")?, k: get("k")? },
            "rows" => MatrixProvenance::RowSize { m: get("m")?, n: get("n")?, k: get("k")? },
            "extended" => {
                let peeled = fields
                    .get("peeled")
                    .map(|v| {
                        v.split(',')
                            .filter(|s| !s.is_empty())
                            .map(|s| s.parse::<usize>())
                            .collect::<std::result::Result<Vec<_>, _>>()
                    })
                    .transpose()
                    .map_err(|e| Error::InvalidInput(format!("provenance field peeled: {e}")))?
                    .unwrap_or_default();
                MatrixProvenance::Extended { n: get("n")?, k: get("k")?, peeled }
            }
            "ternary" => MatrixProvenance::Ternary {
                p: get("p")? as u64,
                i: get("i")? as u32,
                j: get("j")? as u32,
                h: get("h")?,
            },
            "unknown" => MatrixProvenance::Unknown,
            other => return Err(Error::InvalidInput(format!("unknown provenance {other:?}"))),
        })
    }
}

/// Column-compressed binary or ternary matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensingMatrix {
    rows: usize,
    cols: usize,
    alphabet: Alphabet,
    column_weight: Option<usize>,
    col_start: Vec<usize>,
    row_idx: Vec<u32>,
    values: Vec<i8>,
    provenance: MatrixProvenance,
}

impl SensingMatrix {
    /// Assembles a matrix from per-column entry lists. The lists are stored
    /// as given; use [`SensingMatrix::invariant_violations`] to audit them.
    pub fn from_columns(
        rows: usize,
        alphabet: Alphabet,
        columns: Vec<Vec<(u32, i8)>>,
        provenance: MatrixProvenance,
    ) -> Self {
        let cols = columns.len();
        let mut col_start = Vec::with_capacity(cols + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_start.push(0);
        for col in &columns {
            for &(r, v) in col {
                row_idx.push(r);
                values.push(v);
            }
            col_start.push(row_idx.len());
        }
        let weight = columns.first().map(Vec::len);
        let column_weight = weight.filter(|&w| columns.iter().all(|c| c.len() == w));
        SensingMatrix {
            rows,
            cols,
            alphabet,
            column_weight,
            col_start,
            row_idx,
            values,
            provenance,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    /// Nonzeros per column when every column has the same count.
    pub fn column_weight(&self) -> Option<usize> {
        self.column_weight
    }

    pub fn provenance(&self) -> &MatrixProvenance {
        &self.provenance
    }

    pub fn set_provenance(&mut self, provenance: MatrixProvenance) {
        self.provenance = provenance;
    }

    /// 0-based row indices of column `c`.
    pub fn support(&self, c: usize) -> &[u32] {
        &self.row_idx[self.col_start[c]..self.col_start[c + 1]]
    }

    pub fn signs(&self, c: usize) -> &[i8] {
        &self.values[self.col_start[c]..self.col_start[c + 1]]
    }

    pub fn column(&self, c: usize) -> impl Iterator<Item = (usize, i8)> + '_ {
        self.support(c)
            .iter()
            .zip(self.signs(c))
            .map(|(&r, &v)| (r as usize, v))
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Fraction of nonzero entries.
    pub fn density(&self) -> f64 {
        self.nnz() as f64 / (self.rows * self.cols) as f64
    }

    /// Histogram of column weights as (weight, count) sorted by weight.
    pub fn weight_histogram(&self) -> Vec<(usize, usize)> {
        let mut hist = std::collections::BTreeMap::new();
        for c in 0..self.cols {
            *hist.entry(self.support(c).len()).or_insert(0) += 1;
        }
        hist.into_iter().collect()
    }

    /// Per-row nonzero counts.
    pub fn row_weights(&self) -> Vec<usize> {
        let mut w = vec![0; self.rows];
        for &r in &self.row_idx {
            if (r as usize) < self.rows {
                w[r as usize] += 1;
            }
        }
        w
    }

    /// Structural problems: unsorted or duplicate rows, out-of-range rows,
    /// bad entry values, weights differing from the declared one.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut problems = Vec::new();
        for c in 0..self.cols {
            let sup = self.support(c);
            if sup.windows(2).any(|w| w[0] >= w[1]) {
                problems.push(format!("column {}: rows not strictly ascending", c + 1));
            }
            if let Some(&r) = sup.iter().find(|&&r| r as usize >= self.rows) {
                problems.push(format!("column {}: row {} out of range", c + 1, r + 1));
            }
            let bad_value = self.signs(c).iter().any(|&v| match self.alphabet {
                Alphabet::Binary => v != 1,
                Alphabet::Ternary => v != 1 && v != -1,
            });
            if bad_value {
                problems.push(format!("column {}: entry outside the {} alphabet", c + 1, self.alphabet));
            }
            if sup.is_empty() {
                problems.push(format!("column {}: zero column", c + 1));
            }
        }
        if self.column_weight.is_none() && self.cols > 0 {
            problems.push("column weights are not uniform".into());
        }
        problems
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for c in 0..self.cols {
            for (r, v) in self.column(c) {
                m[(r, c)] = v as f64;
            }
        }
        m
    }

    /// `Φ x` for a dense vector `x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        for (c, &xc) in x.iter().enumerate() {
            if xc != 0.0 {
                for (r, v) in self.column(c) {
                    y[r] += v as f64 * xc;
                }
            }
        }
        y
    }

    pub fn to_esm(&self) -> String {
        let mut out = format!(
            "ESM v1 rows={} cols={} alphabet={} k={}\n{}\n",
            self.rows,
            self.cols,
            self.alphabet,
            self.column_weight.unwrap_or(0),
            self.provenance
        );
        for c in 0..self.cols {
            let line: Vec<String> = self
                .column(c)
                .map(|(r, v)| match self.alphabet {
                    Alphabet::Binary => (r + 1).to_string(),
                    Alphabet::Ternary => format!("{}:{}", r + 1, if v < 0 { "-1" } else { "+1" }),
                })
                .collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_esm(text: &str) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::ParseError { line, msg };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| perr(1, "empty file".into()))?;
        let mut tokens = header.split_whitespace();
        if tokens.next() != Some("ESM") || tokens.next() != Some("v1") {
            return Err(perr(1, "expected \"ESM v1\" header".into()));
        }
        let mut rows = None;
        let mut cols = None;
        let mut alphabet = None;
        let mut declared_k = None;
        for tok in tokens {
            let (key, value) = tok
                .split_once('=')
                .ok_or_else(|| perr(1, format!("bad header token {tok:?}")))?;
            let num = || value.parse::<usize>().map_err(|e| perr(1, format!("{key}: {e}")));
            match key {
                "rows" => rows = Some(num()?),
                "cols" => cols = Some(num()?),
                "k" => declared_k = Some(num()?),
                "alphabet" => alphabet = Some(value.parse::<Alphabet>().map_err(|e| perr(1, e.to_string()))?),
                _ => return Err(perr(1, format!("unknown header key {key:?}"))),
            }
        }
        let (Some(rows), Some(cols), Some(alphabet)) = (rows, cols, alphabet) else {
            return Err(perr(1, "header needs rows, cols and alphabet".into()));
        };
        let prov_line = lines.next().ok_or_else(|| perr(2, "missing provenance line".into()))?;
        let provenance = prov_line.trim().parse::<MatrixProvenance>().map_err(|e| perr(2, e.to_string()))?;
        let mut columns = Vec::with_capacity(cols);
        for (idx, line) in lines.enumerate() {
            let lineno = idx + 3;
            if columns.len() == cols {
                if line.trim().is_empty() {
                    continue;
                }
                return Err(perr(lineno, format!("more than {cols} column lines")));
            }
            let mut col = Vec::new();
            for tok in line.split_whitespace() {
                let (r, v) = match alphabet {
                    Alphabet::Binary => (tok, 1i8),
                    Alphabet::Ternary => {
                        let (r, s) = tok
                            .split_once(':')
                            .ok_or_else(|| perr(lineno, format!("expected row:sign, got {tok:?}")))?;
                        let v = match s {
                            "+1" | "1" => 1,
                            "-1" => -1,
                            _ => return Err(perr(lineno, format!("bad sign {s:?}"))),
                        };
                        (r, v)
                    }
                };
                let r: u32 = r.parse().map_err(|e| perr(lineno, format!("bad row {r:?}: {e}")))?;
                if r == 0 || r as usize > rows {
                    return Err(perr(lineno, format!("row {r} outside 1..={rows}")));
                }
                col.push((r - 1, v));
            }
            columns.push(col);
        }
        if columns.len() != cols {
            return Err(perr(
                text.lines().count() + 1,
                format!("expected {cols} column lines, found {}", columns.len()),
            ));
        }
        let mut m = SensingMatrix::from_columns(rows, alphabet, columns, provenance);
        if let Some(k) = declared_k {
            if m.column_weight != Some(k) {
                m.column_weight = None;
            }
        }
        Ok(m)
    }

    /// Dense comma-separated export, one matrix row per line.
    pub fn to_csv(&self) -> String {
        let dense = self.to_dense();
        let mut out = String::new();
        for r in 0..self.rows {
            let line: Vec<String> = (0..self.cols).map(|c| (dense[(r, c)] as i64).to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

/// Something that maps a length-`cols` vector to `rows` measurements.
pub trait Measurement: Sync {
    fn shape(&self) -> (usize, usize);
    fn measure(&self, x: &[f64]) -> Vec<f64>;
    fn dense(&self) -> DMatrix<f64>;
}

impl Measurement for SensingMatrix {
    fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn measure(&self, x: &[f64]) -> Vec<f64> {
        self.apply(x)
    }

    fn dense(&self) -> DMatrix<f64> {
        self.to_dense()
    }
}

impl Measurement for DMatrix<f64> {
    fn shape(&self) -> (usize, usize) {
        (self.nrows(), self.ncols())
    }

    fn measure(&self, x: &[f64]) -> Vec<f64> {
        let v = nalgebra::DVectorView::from_slice(x, x.len());
        (self * v).as_slice().to_vec()
    }

    fn dense(&self) -> DMatrix<f64> {
        self.clone()
    }
}

/// The nk x n² matrix of an Euler square: column c has a one at row
/// `l*n + a_l` (0-based) for each coordinate `a_l` of the c-th k-ad.
pub fn build_binary_matrix(square: &EulerSquare) -> Result<SensingMatrix> {
    let (n, k) = (square.order(), square.degree());
    if k < 2 || n < 3 {
        return Err(Error::IndexTooSmall { n, k });
    }
    Ok(binary_from_square(square, MatrixProvenance::Euler { n, k }))
}

fn binary_from_square(square: &EulerSquare, provenance: MatrixProvenance) -> SensingMatrix {
    let (n, k) = (square.order(), square.degree());
    let columns = square
        .kads()
        .map(|kad| {
            kad.iter()
                .enumerate()
                .map(|(l, &a)| ((l * n) as u32 + a, 1i8))
                .collect()
        })
        .collect();
    SensingMatrix::from_columns(n * k, Alphabet::Binary, columns, provenance)
}

/// Binary matrix with exactly `m` rows and coherence √M/m.
pub fn build_for_row_size(m: usize) -> Result<SensingMatrix> {
    let unsupported = |reason: String| Error::UnsupportedRowSize { m, reason };
    if m < 6 {
        return Err(unsupported("the smallest constructible row size is 6".into()));
    }
    let fact = factorize(m as u64)?;
    let (n, k) = if fact.is_prime_power() {
        let c = fact.components[0];
        match c.exponent {
            1 => return Err(unsupported(format!("{m} is prime, so no index (n, k) with 2 <= k < n has nk = {m}"))),
            2 => {
                return Err(unsupported(format!(
                    "{m} is the square of the prime {p}; index ({p}, {p}) exceeds the degree bound {p} - 1",
                    p = c.prime
                )))
            }
            _ => ((c.value / c.prime) as usize, c.prime as usize),
        }
    } else {
        let q = fact.min_component() as usize;
        (m / q, q)
    };
    let square = euler_square(n, k)?;
    let mut matrix = build_binary_matrix(&square)?;
    debug_assert_eq!(matrix.rows(), m);
    matrix.provenance = MatrixProvenance::RowSize { m, n, k };
    Ok(matrix)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtensionStage {
    /// Prime power removed at this stage (k_t).
    pub peeled: usize,
    /// Order of this stage's Euler square (n_t).
    pub order: usize,
    /// Number of zero-padded copies (k^t).
    pub copies: usize,
    /// Columns contributed (n_t² k^t).
    pub columns: usize,
    /// 0-based row offset of each copy.
    pub offsets: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtensionPlan {
    pub order: usize,
    pub degree: usize,
    pub stages: Vec<ExtensionStage>,
}

impl ExtensionPlan {
    pub fn new(n: usize) -> Result<Self> {
        let fact = factorize(n as u64)?;
        if fact.is_prime_power() {
            return Err(Error::NothingToExtend(n));
        }
        let k = fact.min_component() as usize - 1;
        if k < 2 {
            return Err(Error::IndexTooSmall { n, k });
        }
        let mut remaining: Vec<usize> = fact.components.iter().map(|c| c.value as usize).collect();
        remaining.sort_unstable();
        let mut stages = Vec::new();
        let mut prev_order = n;
        let mut prev_offsets = vec![0usize];
        while remaining.len() > 1 {
            let peeled = remaining.pop().unwrap();
            let order = prev_order / peeled;
            let offsets: Vec<usize> = prev_offsets
                .iter()
                .flat_map(|&o| (0..k).map(move |s| o + s * prev_order))
                .collect();
            stages.push(ExtensionStage {
                peeled,
                order,
                copies: offsets.len(),
                columns: order * order * offsets.len(),
                offsets: offsets.clone(),
            });
            prev_order = order;
            prev_offsets = offsets;
        }
        Ok(ExtensionPlan { order: n, degree: k, stages })
    }

    pub fn total_columns(&self) -> usize {
        self.order * self.order + self.stages.iter().map(|s| s.columns).sum::<usize>()
    }

    /// Geometric lower bound n² (1 - ρ^(l+1)) / (1 - ρ) with ρ = k / k_1².
    pub fn column_lower_bound(&self) -> f64 {
        let Some(first) = self.stages.first() else {
            return (self.order * self.order) as f64;
        };
        let ratio = self.degree as f64 / (first.peeled * first.peeled) as f64;
        let terms = self.stages.len() as i32 + 1;
        (self.order * self.order) as f64 * (1.0 - ratio.powi(terms)) / (1.0 - ratio)
    }
}

/// Appends zero-padded copies of smaller Euler matrices to the matrix of
/// index (n, minpp(n) - 1) without raising its coherence.
pub fn build_extended(n: usize) -> Result<(SensingMatrix, ExtensionPlan)> {
    let plan = ExtensionPlan::new(n)?;
    let k = plan.degree;
    let base = build_binary_matrix(&euler_square(n, k)?)?;
    let mut columns: Vec<Vec<(u32, i8)>> = (0..base.cols()).map(|c| base.column(c).map(|(r, v)| (r as u32, v)).collect()).collect();
    for stage in &plan.stages {
        let block = build_binary_matrix(&euler_square(stage.order, k)?)?;
        for &offset in &stage.offsets {
            for c in 0..block.cols() {
                columns.push(block.support(c).iter().map(|&r| (r + offset as u32, 1)).collect());
            }
        }
    }
    let provenance = MatrixProvenance::Extended {
        n,
        k,
        peeled: plan.stages.iter().map(|s| s.peeled).collect(),
    };
    let matrix = SensingMatrix::from_columns(n * k, Alphabet::Binary, columns, provenance);
    debug_assert_eq!(matrix.cols(), plan.total_columns());
    Ok((matrix, plan))
}

/// Square ±1 matrix with H Hᵀ = h I.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HadamardMatrix {
    order: usize,
    entries: Vec<i8>,
}

impl HadamardMatrix {
    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> i8 {
        self.entries[i * self.order + j]
    }

    /// Exhaustive check of H Hᵀ = h I.
    pub fn is_valid(&self) -> bool {
        let h = self.order;
        (0..h).all(|a| {
            (0..h).all(|b| {
                let dot: i64 = (0..h).map(|j| (self.get(a, j) * self.get(b, j)) as i64).sum();
                dot == if a == b { h as i64 } else { 0 }
            })
        })
    }

    fn doubled(&self) -> Self {
        let h = self.order;
        let mut entries = vec![0i8; 4 * h * h];
        for i in 0..h {
            for j in 0..h {
                let v = self.get(i, j);
                entries[i * 2 * h + j] = v;
                entries[i * 2 * h + j + h] = v;
                entries[(i + h) * 2 * h + j] = v;
                entries[(i + h) * 2 * h + j + h] = -v;
            }
        }
        HadamardMatrix { order: 2 * h, entries }
    }

    /// Paley type I matrix of order q + 1, q prime and q ≡ 3 (mod 4).
    fn paley(q: usize) -> Self {
        let mut is_square = vec![false; q];
        for x in 1..q {
            is_square[x * x % q] = true;
        }
        let chi = |x: usize| -> i8 {
            if x == 0 {
                0
            } else if is_square[x] {
                1
            } else {
                -1
            }
        };
        let h = q + 1;
        let mut entries = vec![0i8; h * h];
        for j in 1..h {
            entries[j] = 1;
            entries[j * h] = -1;
        }
        for i in 0..q {
            for j in 0..q {
                entries[(i + 1) * h + j + 1] = chi((j + q - i) % q);
            }
        }
        for d in 0..h {
            entries[d * h + d] += 1;
        }
        HadamardMatrix { order: h, entries }
    }
}

/// Sylvester, Paley I, or Sylvester doublings of a Paley matrix.
pub fn build_hadamard(h: usize) -> Result<HadamardMatrix> {
    if h == 0 {
        return Err(Error::HadamardUnavailable(0));
    }
    if h > 2 && h % 4 != 0 {
        return Err(Error::HadamardUnavailable(h));
    }
    let mut doublings = 0;
    let mut core = h;
    loop {
        let base = if core == 1 {
            Some(HadamardMatrix { order: 1, entries: vec![1] })
        } else if core >= 4 && is_prime(core as u64 - 1) && (core - 1) % 4 == 3 {
            Some(HadamardMatrix::paley(core - 1))
        } else {
            None
        };
        if let Some(mut m) = base {
            for _ in 0..doublings {
                m = m.doubled();
            }
            return Ok(m);
        }
        if core % 2 != 0 {
            return Err(Error::HadamardUnavailable(h));
        }
        core /= 2;
        doublings += 1;
    }
}

/// Ternary matrix from index (p^i, p^i - j): every column of the binary
/// matrix spawns k columns whose l-th nonzero takes row l of a Hadamard matrix.
pub fn build_ternary(p: u64, i: u32, j: u32) -> Result<SensingMatrix> {
    if !is_prime(p) {
        return Err(Error::InvalidPrime(p));
    }
    if i == 0 || !(1..=2).contains(&j) {
        return Err(Error::InvalidInput(format!("ternary index needs i >= 1 and j in {{1,2}}, got i={i} j={j}")));
    }
    let q = p.pow(i) as usize;
    let k = q.checked_sub(j as usize).unwrap_or(0);
    if k < 2 {
        return Err(Error::IndexTooSmall { n: q, k });
    }
    let hadamard = build_hadamard(k)
        .or_else(|_| build_hadamard(k + 1))
        .map_err(|_| Error::HadamardUnavailable(k))?;
    let binary = build_binary_matrix(&euler_square(q, k)?)?;
    let mut columns = Vec::with_capacity(binary.cols() * k);
    for c in 0..binary.cols() {
        let sup = binary.support(c);
        for t in 0..k {
            columns.push(sup.iter().enumerate().map(|(l, &r)| (r, hadamard.get(l, t))).collect());
        }
    }
    let provenance = MatrixProvenance::Ternary { p, i, j, h: hadamard.order() };
    Ok(SensingMatrix::from_columns(binary.rows(), Alphabet::Ternary, columns, provenance))
}

/// Dense copy with every column scaled to unit Euclidean norm.
pub fn normalize(matrix: &SensingMatrix) -> Result<DMatrix<f64>> {
    let mut dense = DMatrix::zeros(matrix.rows(), matrix.cols());
    for c in 0..matrix.cols() {
        let w = matrix.support(c).len();
        if w == 0 {
            return Err(Error::DegenerateColumn(c));
        }
        let scale = 1.0 / (w as f64).sqrt();
        for (r, v) in matrix.column(c) {
            dense[(r, c)] = v as f64 * scale;
        }
    }
    Ok(dense)
}

#[cfg(test)]
mod tests {
    use super::*;

    const PRINTED_6X9: [[u8; 9]; 6] = [
        [1, 0, 0, 0, 0, 1, 0, 1, 0],
        [0, 1, 0, 1, 0, 0, 0, 0, 1],
        [0, 0, 1, 0, 1, 0, 1, 0, 0],
        [1, 0, 0, 0, 1, 0, 0, 0, 1],
        [0, 1, 0, 0, 0, 1, 1, 0, 0],
        [0, 0, 1, 1, 0, 0, 0, 1, 0],
    ];

    #[test]
    fn printed_matrix_bit_exact() {
        let m = build_binary_matrix(&euler_square(3, 2).unwrap()).unwrap();
        let dense = m.to_dense();
        for r in 0..6 {
            for c in 0..9 {
                assert_eq!(dense[(r, c)] as u8, PRINTED_6X9[r][c], "entry ({r},{c})");
            }
        }
        assert_eq!(m.support(0), &[0, 3]);
        assert_eq!(m.support(3), &[1, 5]);
    }

    #[test]
    fn euler_sizes() {
        let m = build_binary_matrix(&euler_square(11, 5).unwrap()).unwrap();
        assert_eq!((m.rows(), m.cols(), m.column_weight()), (55, 121, Some(5)));
        let m = build_binary_matrix(&euler_square(23, 10).unwrap()).unwrap();
        assert_eq!((m.rows(), m.cols()), (230, 529));
        assert!(m.row_weights().iter().all(|&w| w == 23));
        assert!((m.density() - 1.0 / 23.0).abs() < 1e-15);
    }

    #[test]
    fn small_index_rejected() {
        let latin = crate::euler::reduce_degree(&euler_square(5, 4).unwrap(), 1).unwrap();
        assert_eq!(build_binary_matrix(&latin), Err(Error::IndexTooSmall { n: 5, k: 1 }));
    }

    #[test]
    fn row_size_dispatch() {
        let m = build_for_row_size(6).unwrap();
        assert_eq!((m.rows(), m.cols()), (6, 9));
        let m = build_for_row_size(8).unwrap();
        assert_eq!((m.rows(), m.cols()), (8, 16));
        assert_eq!(m.provenance(), &MatrixProvenance::RowSize { m: 8, n: 4, k: 2 });
        let m = build_for_row_size(12).unwrap();
        assert_eq!((m.rows(), m.cols(), m.column_weight()), (12, 16, Some(3)));
        for bad in [1, 4, 5, 7, 9, 25, 49] {
            assert!(matches!(build_for_row_size(bad), Err(Error::UnsupportedRowSize { .. })), "m={bad}");
        }
        let Err(Error::UnsupportedRowSize { reason, .. }) = build_for_row_size(7) else { panic!() };
        assert!(reason.contains("prime"));
    }

    #[test]
    fn extension_plans() {
        let plan = ExtensionPlan::new(12).unwrap();
        assert_eq!(plan.degree, 2);
        assert_eq!(plan.stages.len(), 1);
        assert_eq!((plan.stages[0].peeled, plan.stages[0].order), (4, 3));
        assert_eq!(plan.stages[0].offsets, vec![0, 12]);
        assert_eq!(plan.total_columns(), 162);

        let plan = ExtensionPlan::new(60).unwrap();
        let peeled: Vec<_> = plan.stages.iter().map(|s| (s.peeled, s.order, s.copies)).collect();
        assert_eq!(peeled, vec![(5, 12, 2), (4, 3, 4)]);
        assert_eq!(plan.stages[1].offsets, vec![0, 12, 60, 72]);
        assert_eq!(plan.total_columns(), 3600 + 2 * 144 + 4 * 9);

        assert_eq!(ExtensionPlan::new(16), Err(Error::NothingToExtend(16)));
        assert_eq!(ExtensionPlan::new(6), Err(Error::IndexTooSmall { n: 6, k: 1 }));
    }

    #[test]
    fn extended_matrix_shape() {
        let (m, plan) = build_extended(12).unwrap();
        assert_eq!((m.rows(), m.cols()), (24, 162));
        assert_eq!(m.column_weight(), Some(2));
        assert!(m.invariant_violations().is_empty());
        assert!(m.cols() as f64 >= plan.column_lower_bound() - 1e-9);
    }

    #[test]
    fn hadamard_orders() {
        for h in [1, 2, 4, 8, 12, 16, 20, 24, 32, 44, 48] {
            let m = build_hadamard(h).unwrap();
            assert_eq!(m.order(), h);
            assert!(m.is_valid(), "order {h}");
        }
        // 28 would need a Paley matrix over GF(27).
        for h in [3, 6, 10, 28, 36] {
            assert_eq!(build_hadamard(h), Err(Error::HadamardUnavailable(h)));
        }
    }

    #[test]
    fn ternary_shape() {
        let m = build_ternary(5, 1, 1).unwrap();
        assert_eq!((m.rows(), m.cols(), m.column_weight()), (20, 100, Some(4)));
        assert_eq!(m.alphabet(), Alphabet::Ternary);
        assert!(m.invariant_violations().is_empty());
        // k = 3 needs the truncated order-4 matrix.
        let m = build_ternary(5, 1, 2).unwrap();
        assert_eq!((m.rows(), m.cols()), (15, 75));
        assert_eq!(m.provenance(), &MatrixProvenance::Ternary { p: 5, i: 1, j: 2, h: 4 });
        assert_eq!(build_ternary(7, 1, 1), Err(Error::HadamardUnavailable(6)));
    }

    #[test]
    fn normalized_columns() {
        let m = build_binary_matrix(&euler_square(3, 2).unwrap()).unwrap();
        let d = normalize(&m).unwrap();
        for c in 0..9 {
            assert!((d.column(c).norm() - 1.0).abs() < 1e-15);
        }
        assert!((d[(0, 0)] - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        let t = normalize(&build_ternary(5, 1, 1).unwrap()).unwrap();
        assert!(t.iter().all(|&v| v == 0.0 || v.abs() == 0.5));
        let empty = SensingMatrix::from_columns(3, Alphabet::Binary, vec![vec![(0, 1)], vec![]], MatrixProvenance::Unknown);
        assert_eq!(normalize(&empty), Err(Error::DegenerateColumn(1)));
    }

    #[test]
    fn esm_round_trip_and_errors() {
        for m in [
            build_for_row_size(12).unwrap(),
            build_ternary(5, 1, 2).unwrap(),
            build_extended(12).unwrap().0,
        ] {
            let text = m.to_esm();
            assert_eq!(SensingMatrix::from_esm(&text).unwrap(), m);
        }
        let text = build_binary_matrix(&euler_square(3, 2).unwrap()).unwrap().to_esm();
        assert!(text.starts_with("ESM v1 rows=6 cols=9 alphabet=binary k=2\neuler n=3 k=2\n1 4\n2 5\n"));
        let broken = text.replacen("2 5", "2 x", 1);
        assert!(matches!(SensingMatrix::from_esm(&broken), Err(Error::ParseError { line: 4, .. })));
        let out_of_range = text.replacen("2 5", "2 7", 1);
        assert!(matches!(SensingMatrix::from_esm(&out_of_range), Err(Error::ParseError { line: 4, .. })));
    }

    #[test]
    fn provenance_text_round_trip() {
        for p in [
            MatrixProvenance::Euler { n: 11, k: 5 },
            MatrixProvenance::RowSize { m: 12, n: 4, k: 3 },
            MatrixProvenance::Extended { n: 60, k: 2, peeled: vec![5, 4] },
            MatrixProvenance::Ternary { p: 5, i: 1, j: 1, h: 4 },
            MatrixProvenance::Unknown,
        ] {
            assert_eq!(p.to_string().parse::<MatrixProvenance>().unwrap(), p);
        }
    }

    #[test]
    fn csv_export() {
        let csv = build_binary_matrix(&euler_square(3, 2).unwrap()).unwrap().to_csv();
        assert_eq!(csv.lines().next().unwrap(), "1,0,0,0,0,1,0,1,0");
        assert_eq!(csv.lines().count(), 6);
    }
}
