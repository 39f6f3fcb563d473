//! Euler squares (sets of mutually orthogonal Latin squares) of index (n, k).
//!
//! Prime-power orders come from the linear construction over GF(q); composite
//! orders are assembled with the MacNeish direct product.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::GaloisField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimePower {
    pub prime: u64,
    pub exponent: u32,
    pub value: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimePowerFactorization {
    pub m: u64,
    /// Ordered by increasing prime.
    pub components: Vec<PrimePower>,
}

impl PrimePowerFactorization {
    /// Smallest prime-power component.
    pub fn min_component(&self) -> u64 {
        self.components.iter().map(|c| c.value).min().unwrap()
    }

    pub fn max_component(&self) -> u64 {
        self.components.iter().map(|c| c.value).max().unwrap()
    }

    pub fn is_prime_power(&self) -> bool {
        self.components.len() == 1
    }
}

pub fn factorize(m: u64) -> Result<PrimePowerFactorization> {
    if m < 2 {
        return Err(Error::InvalidInput(format!("cannot factorize {m}")));
    }
    let mut rest = m;
    let mut components = Vec::new();
    let mut d = 2u64;
    while d * d <= rest {
        if rest % d == 0 {
            let mut exponent = 0;
            let mut value = 1;
            while rest % d == 0 {
                rest /= d;
                exponent += 1;
                value *= d;
            }
            components.push(PrimePower {
                prime: d,
                exponent,
                value,
            });
        }
        d += 1;
    }
    if rest > 1 {
        components.push(PrimePower {
            prime: rest,
            exponent: 1,
            value: rest,
        });
    }
    Ok(PrimePowerFactorization { m, components })
}

/// Largest degree admitted by MacNeish's bound: (smallest prime-power factor) - 1.
pub fn macneish_bound(n: usize) -> Result<usize> {
    Ok(factorize(n as u64)?.min_component() as usize - 1)
}

/// How a square was obtained.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SquareProvenance {
    PrimePower { p: u64, r: u32 },
    Reduced { from: usize, source: Box<SquareProvenance> },
    Product(Box<SquareProvenance>, Box<SquareProvenance>),
    Parsed,
}

impl fmt::Display for SquareProvenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SquareProvenance::PrimePower { p, r } => write!(f, "GF({p}^{r})"),
            SquareProvenance::Reduced { from, source } => write!(f, "reduce({source}, from k={from})"),
            SquareProvenance::Product(a, b) => write!(f, "({a} x {b})"),
            SquareProvenance::Parsed => write!(f, "parsed"),
        }
    }
}

/// An n x n array of k-tuples over {0..n-1}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EulerSquare {
    n: usize,
    k: usize,
    /// Row-major cells, each contributing `k` consecutive values.
    cells: Vec<u32>,
    provenance: SquareProvenance,
}

impl EulerSquare {
    /// Wraps raw cells without validating them; see [`validate_euler_square`].
    pub fn from_cells(n: usize, k: usize, cells: Vec<u32>) -> Result<Self> {
        if cells.len() != n * n * k {
            return Err(Error::ShapeError(format!(
                "expected {} values for index ({n},{k}), got {}",
                n * n * k,
                cells.len()
            )));
        }
        Ok(EulerSquare {
            n,
            k,
            cells,
            provenance: SquareProvenance::Parsed,
        })
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    pub fn provenance(&self) -> &SquareProvenance {
        &self.provenance
    }

    /// The k-ad at 0-based row `i`, column `j`.
    pub fn cell(&self, i: usize, j: usize) -> &[u32] {
        let start = (i * self.n + j) * self.k;
        &self.cells[start..start + self.k]
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize, coord: usize) -> u32 {
        self.cells[(i * self.n + j) * self.k + coord]
    }

    pub fn set_value(&mut self, i: usize, j: usize, coord: usize, v: u32) {
        self.cells[(i * self.n + j) * self.k + coord] = v;
    }

    /// k-ads in row-major cell order; the c-th entry feeds matrix column c.
    pub fn kads(&self) -> impl Iterator<Item = &[u32]> {
        self.cells.chunks(self.k)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.n, self.k);
        for i in 0..self.n {
            let line: Vec<String> = (0..self.n)
                .map(|j| {
                    self.cell(i, j)
                        .iter()
                        .map(u32::to_string)
                        .collect::<Vec<_>>()
                        .join(",")
                })
                .collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::ParseError {
            line: 1,
            msg: "missing header".into(),
        })?;
        let nums: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::ParseError {
                line: 1,
                msg: format!("bad header: {e}"),
            })?;
        let [n, k] = nums[..] else {
            return Err(Error::ParseError {
                line: 1,
                msg: "header must be \"n k\"".into(),
            });
        };
        let mut cells = Vec::with_capacity(n * n * k);
        let mut rows = 0;
        for (idx, line) in lines {
            let bad = |msg: String| Error::ParseError { line: idx + 1, msg };
            let row: Vec<&str> = line.split_whitespace().collect();
            if row.len() != n {
                return Err(bad(format!("expected {n} cells, found {}", row.len())));
            }
            for cell in row {
                let vals: Vec<u32> = cell
                    .split(',')
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| bad(format!("bad cell {cell:?}: {e}")))?;
                if vals.len() != k {
                    return Err(bad(format!("cell {cell:?} has {} values, expected {k}", vals.len())));
                }
                cells.extend(vals);
            }
            rows += 1;
        }
        if rows != n {
            return Err(Error::ParseError {
                line: rows + 2,
                msg: format!("expected {n} rows, found {rows}"),
            });
        }
        EulerSquare::from_cells(n, k, cells)
    }
}

/// Euler square of index (q, k) from GF(q): coordinate t of cell (x, y) is
/// `alpha_t * x + y` where `alpha_t` is the element with code t.
pub fn mols_prime_power(field: &GaloisField, k: usize) -> Result<EulerSquare> {
    let q = field.order();
    if k >= q {
        return Err(Error::DegreeTooLarge {
            requested: k,
            available: q - 1,
        });
    }
    if k == 0 {
        return Err(Error::InvalidInput("degree must be >= 1".into()));
    }
    let mut cells = Vec::with_capacity(q * q * k);
    for x in 0..q as u32 {
        for y in 0..q as u32 {
            for t in 1..=k as u32 {
                cells.push(field.add(field.mul(t, x), y));
            }
        }
    }
    Ok(EulerSquare {
        n: q,
        k,
        cells,
        provenance: SquareProvenance::PrimePower {
            p: field.characteristic(),
            r: field.degree(),
        },
    })
}

/// Keeps the first `k` coordinates of every cell.
pub fn reduce_degree(square: &EulerSquare, k: usize) -> Result<EulerSquare> {
    if k > square.k {
        return Err(Error::DegreeTooLarge {
            requested: k,
            available: square.k,
        });
    }
    if k == 0 {
        return Err(Error::InvalidInput("degree must be >= 1".into()));
    }
    if k == square.k {
        return Ok(square.clone());
    }
    let cells = square.kads().flat_map(|c| c[..k].iter().copied()).collect();
    Ok(EulerSquare {
        n: square.n,
        k,
        cells,
        provenance: SquareProvenance::Reduced {
            from: square.k,
            source: Box::new(square.provenance.clone()),
        },
    })
}

/// Direct product: order n1*n2, value `a * n2 + b` per coordinate.
pub fn macneish_product(a: &EulerSquare, b: &EulerSquare) -> Result<EulerSquare> {
    if a.k != b.k {
        return Err(Error::DegreeMismatch(a.k, b.k));
    }
    let (n1, n2, k) = (a.n, b.n, a.k);
    let n = n1 * n2;
    let mut cells = vec![0u32; n * n * k];
    for i1 in 0..n1 {
        for i2 in 0..n2 {
            let i = i1 * n2 + i2;
            for j1 in 0..n1 {
                for j2 in 0..n2 {
                    let j = j1 * n2 + j2;
                    let (ca, cb) = (a.cell(i1, j1), b.cell(i2, j2));
                    let out = &mut cells[(i * n + j) * k..(i * n + j + 1) * k];
                    for r in 0..k {
                        out[r] = ca[r] * n2 as u32 + cb[r];
                    }
                }
            }
        }
    }
    Ok(EulerSquare {
        n,
        k,
        cells,
        provenance: SquareProvenance::Product(
            Box::new(a.provenance.clone()),
            Box::new(b.provenance.clone()),
        ),
    })
}

/// Euler square of index (n, k) for any (n, k) within the MacNeish bound.
pub fn euler_square(n: usize, k: usize) -> Result<EulerSquare> {
    if n < 3 {
        return Err(Error::InvalidOrder(n));
    }
    if k == 0 {
        return Err(Error::InvalidInput("degree must be >= 1".into()));
    }
    let fact = factorize(n as u64)?;
    let max = fact.min_component() as usize - 1;
    if k > max {
        return Err(Error::IndexNotConstructible { n, k, max });
    }
    let mut acc: Option<EulerSquare> = None;
    for comp in &fact.components {
        let field = GaloisField::new(comp.prime, comp.exponent)?;
        let full = mols_prime_power(&field, field.order() - 1)?;
        let part = reduce_degree(&full, k)?;
        acc = Some(match acc {
            None => part,
            Some(prev) => macneish_product(&prev, &part)?,
        });
    }
    Ok(acc.unwrap())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    /// A value outside 0..n.
    Range { row: usize, col: usize, coord: usize, value: u32 },
    /// Coordinate `coord` repeats along `row` at columns `cols`.
    RowLatin { row: usize, coord: usize, cols: (usize, usize) },
    ColumnLatin { col: usize, coord: usize, rows: (usize, usize) },
    /// Coordinates `coords` produce the same ordered pair at two cells.
    Orthogonality { coords: (usize, usize), first: (usize, usize), second: (usize, usize) },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Range { row, col, coord, value } => {
                write!(f, "value {value} out of range at cell ({row},{col}) coordinate {coord}")
            }
            Violation::RowLatin { row, coord, cols } => write!(
                f,
                "row-Latin violation at row {row}, coordinate {coord}, columns {} and {}",
                cols.0, cols.1
            ),
            Violation::ColumnLatin { col, coord, rows } => write!(
                f,
                "column-Latin violation at column {col}, coordinate {coord}, rows {} and {}",
                rows.0, rows.1
            ),
            Violation::Orthogonality { coords, first, second } => write!(
                f,
                "coordinates {} and {} repeat a pair at cells ({},{}) and ({},{})",
                coords.0, coords.1, first.0, first.1, second.0, second.1
            ),
        }
    }
}

/// Outcome of [`validate_euler_square`]. All indices are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n: usize,
    pub k: usize,
    pub violation: Option<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violation.is_none()
    }
}

/// Exhaustive check of the Latin and pairwise orthogonality conditions.
pub fn validate_euler_square(square: &EulerSquare) -> ValidationReport {
    ValidationReport {
        n: square.n,
        k: square.k,
        violation: first_violation(square),
    }
}

fn first_violation(sq: &EulerSquare) -> Option<Violation> {
    let (n, k) = (sq.n, sq.k);
    for i in 0..n {
        for j in 0..n {
            for r in 0..k {
                let value = sq.value(i, j, r);
                if value as usize >= n {
                    return Some(Violation::Range { row: i + 1, col: j + 1, coord: r + 1, value });
                }
            }
        }
    }
    // seen[v] holds the 1-based position where v was last met, scoped by a stamp.
    let mut seen = vec![(usize::MAX, 0usize); n];
    let mut stamp = 0;
    for r in 0..k {
        for i in 0..n {
            stamp += 1;
            for j in 0..n {
                let v = sq.value(i, j, r) as usize;
                if seen[v].0 == stamp {
                    return Some(Violation::RowLatin { row: i + 1, coord: r + 1, cols: (seen[v].1, j + 1) });
                }
                seen[v] = (stamp, j + 1);
            }
        }
        for j in 0..n {
            stamp += 1;
            for i in 0..n {
                let v = sq.value(i, j, r) as usize;
                if seen[v].0 == stamp {
                    return Some(Violation::ColumnLatin { col: j + 1, coord: r + 1, rows: (seen[v].1, i + 1) });
                }
                seen[v] = (stamp, i + 1);
            }
        }
    }
    let mut pairs = vec![(usize::MAX, 0usize); n * n];
    for r in 0..k {
        for s in r + 1..k {
            stamp += 1;
            for i in 0..n {
                for j in 0..n {
                    let key = sq.value(i, j, r) as usize * n + sq.value(i, j, s) as usize;
                    let cell = i * n + j;
                    if pairs[key].0 == stamp {
                        let prev = pairs[key].1;
                        return Some(Violation::Orthogonality {
                            coords: (r + 1, s + 1),
                            first: (prev / n + 1, prev % n + 1),
                            second: (i + 1, j + 1),
                        });
                    }
                    pairs[key] = (stamp, cell);
                }
            }
        }
    }
    None
}

/// Counts cell pairs in distinct rows and columns whose shifted coordinate
/// products `(a_r + 1)(a_s + 1)` coincide for some coordinate pair.
///
/// This product-form condition is stricter than pair orthogonality and fails
/// even for valid MOLS; it is reported for inspection only.
pub fn product_form_collisions(sq: &EulerSquare) -> usize {
    let n = sq.n;
    let mut count = 0;
    for r in 0..sq.k {
        for s in r + 1..sq.k {
            let prod = |i: usize, j: usize| (sq.value(i, j, r) + 1) * (sq.value(i, j, s) + 1);
            for a in 0..n * n {
                for b in a + 1..n * n {
                    let (i, j, p, q) = (a / n, a % n, b / n, b % n);
                    if i != p && j != q && prod(i, j) == prod(p, q) {
                        count += 1;
                    }
                }
            }
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;

    fn printed_3_2() -> Vec<Vec<(u32, u32)>> {
        vec![
            vec![(0, 0), (1, 1), (2, 2)],
            vec![(1, 2), (2, 0), (0, 1)],
            vec![(2, 1), (0, 2), (1, 0)],
        ]
    }

    #[test]
    fn factorize_examples() {
        let pp = |v: &[(u64, u32, u64)]| {
            v.iter()
                .map(|&(prime, exponent, value)| PrimePower { prime, exponent, value })
                .collect::<Vec<_>>()
        };
        assert_eq!(factorize(12).unwrap().components, pp(&[(2, 2, 4), (3, 1, 3)]));
        assert_eq!(factorize(60).unwrap().components, pp(&[(2, 2, 4), (3, 1, 3), (5, 1, 5)]));
        assert_eq!(factorize(7).unwrap().components, pp(&[(7, 1, 7)]));
        assert!(factorize(1).is_err());
    }

    #[test]
    fn gf3_square_matches_printed_example() {
        let sq = euler_square(3, 2).unwrap();
        for (i, row) in printed_3_2().iter().enumerate() {
            for (j, &(a, b)) in row.iter().enumerate() {
                assert_eq!(sq.cell(i, j), &[a, b]);
            }
        }
        assert!(validate_euler_square(&sq).is_valid());
    }

    #[test]
    fn gf5_coordinate() {
        let sq = mols_prime_power(&GaloisField::new(5, 1).unwrap(), 4).unwrap();
        // x = 1, y = 3, t = 2
        assert_eq!(sq.value(1, 3, 1), (2 + 3) % 5);
    }

    #[test]
    fn degree_bounds() {
        let gf4 = GaloisField::new(2, 2).unwrap();
        assert!(matches!(mols_prime_power(&gf4, 4), Err(Error::DegreeTooLarge { .. })));
        let sq = mols_prime_power(&gf4, 3).unwrap();
        assert!(validate_euler_square(&sq).is_valid());
        assert!(matches!(reduce_degree(&sq, 4), Err(Error::DegreeTooLarge { .. })));
        let latin = reduce_degree(&sq, 1).unwrap();
        assert_eq!(latin.degree(), 1);
        assert!(validate_euler_square(&latin).is_valid());
    }

    #[test]
    fn reduce_to_same_degree_is_identity() {
        let sq = euler_square(3, 2).unwrap();
        assert_eq!(reduce_degree(&sq, 2).unwrap(), sq);
    }

    #[test]
    fn product_examples() {
        let a = reduce_degree(&euler_square(4, 3).unwrap(), 2).unwrap();
        let b = euler_square(3, 2).unwrap();
        let p = macneish_product(&a, &b).unwrap();
        assert_eq!((p.order(), p.degree()), (12, 2));
        assert!(validate_euler_square(&p).is_valid());
        let p = macneish_product(&b, &b).unwrap();
        assert_eq!(p.order(), 9);
        assert!(validate_euler_square(&p).is_valid());
        let p = macneish_product(&reduce_degree(&euler_square(5, 4).unwrap(), 2).unwrap(), &b).unwrap();
        assert_eq!(p.order(), 15);
        assert_eq!(
            macneish_product(&euler_square(4, 3).unwrap(), &b),
            Err(Error::DegreeMismatch(3, 2))
        );
    }

    #[test]
    fn dispatch_bounds() {
        assert_eq!(
            euler_square(12, 3),
            Err(Error::IndexNotConstructible { n: 12, k: 3, max: 2 })
        );
        assert!(validate_euler_square(&euler_square(12, 2).unwrap()).is_valid());
        assert_eq!(euler_square(2, 1), Err(Error::InvalidOrder(2)));
        assert!(matches!(euler_square(6, 2), Err(Error::IndexNotConstructible { .. })));
    }

    #[test]
    fn forced_duplicate_is_a_row_violation() {
        let mut sq = euler_square(3, 2).unwrap();
        sq.set_value(0, 0, 0, 1);
        let report = validate_euler_square(&sq);
        assert_eq!(
            report.violation,
            Some(Violation::RowLatin { row: 1, coord: 1, cols: (1, 2) })
        );
    }

    #[test]
    fn orthogonality_violation_detected() {
        // Two identical Latin squares are Latin but not orthogonal.
        let base = euler_square(5, 1).unwrap();
        let cells = base.kads().flat_map(|c| [c[0], c[0]]).collect();
        let sq = EulerSquare::from_cells(5, 2, cells).unwrap();
        assert!(matches!(
            validate_euler_square(&sq).violation,
            Some(Violation::Orthogonality { coords: (1, 2), .. })
        ));
    }

    #[test]
    fn product_form_is_stricter_than_orthogonality() {
        // The printed square repeats products only within a column.
        assert_eq!(product_form_collisions(&euler_square(3, 2).unwrap()), 0);
        let sq = euler_square(5, 2).unwrap();
        assert!(validate_euler_square(&sq).is_valid());
        assert!(product_form_collisions(&sq) > 0);
    }

    #[test]
    fn text_round_trip() {
        let sq = euler_square(12, 2).unwrap();
        let text = sq.to_text();
        assert!(text.starts_with("12 2\n"));
        let back = EulerSquare::from_text(&text).unwrap();
        assert_eq!(back.kads().collect::<Vec<_>>(), sq.kads().collect::<Vec<_>>());
        assert_eq!(euler_square(3, 2).unwrap().to_text(), "3 2\n0,0 1,1 2,2\n1,2 2,0 0,1\n2,1 0,2 1,0\n");
        assert!(matches!(
            EulerSquare::from_text("3 2\n0,0 1,1\n"),
            Err(Error::ParseError { line: 2, .. })
        ));
    }
}
