//! Finite fields GF(p^r) backed by dense operation tables.
//!
//! Element codes are base-p digit vectors, least-significant digit = constant
//! term: the code `e` stands for `sum_t digit_t(e) * x^t`.

use crate::error::{Error, Result};

/// Default upper bound on the field order.
pub const DEFAULT_FIELD_CAP: u64 = 1 << 16;

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n % 2 == 0 {
        return n == 2;
    }
    let mut d = 3;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

fn digits(mut code: u64, p: u64, len: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(code % p);
        code /= p;
    }
    out
}

fn trim(mut poly: Vec<u64>) -> Vec<u64> {
    while poly.last() == Some(&0) {
        poly.pop();
    }
    poly
}

/// Remainder of `num` modulo the monic polynomial `den` over GF(p).
fn poly_rem(num: &[u64], den: &[u64], p: u64) -> Vec<u64> {
    let mut rem = num.to_vec();
    let d = den.len() - 1;
    debug_assert_eq!(den[d], 1, "divisor must be monic");
    while rem.len() > d {
        let lead = *rem.last().unwrap();
        let shift = rem.len() - 1 - d;
        if lead != 0 {
            for (i, &c) in den.iter().enumerate() {
                let idx = shift + i;
                rem[idx] = (rem[idx] + p - (lead * c) % p) % p;
            }
        }
        rem.pop();
    }
    rem
}

fn is_irreducible(poly: &[u64], p: u64) -> bool {
    let r = poly.len() - 1;
    for d in 1..=r / 2 {
        for code in 0..p.pow(d as u32) {
            let mut div = digits(code, p, d);
            div.push(1);
            if trim(poly_rem(poly, &div, p)).is_empty() {
                return false;
            }
        }
    }
    true
}

/// Lexicographically smallest monic irreducible polynomial of degree `r`
/// over GF(p), returned as `r + 1` coefficients with the constant term first.
///
/// Candidates are visited by increasing code of their lower `r` coefficients,
/// which compares coefficient vectors from the highest non-leading degree down.
pub fn find_irreducible(p: u64, r: u32) -> Result<Vec<u64>> {
    if !is_prime(p) {
        return Err(Error::InvalidPrime(p));
    }
    if r == 0 {
        return Err(Error::InvalidInput("extension degree must be >= 1".into()));
    }
    let r = r as usize;
    for code in 0..p.pow(r as u32) {
        let mut poly = digits(code, p, r);
        poly.push(1);
        if is_irreducible(&poly, p) {
            return Ok(poly);
        }
    }
    unreachable!("an irreducible polynomial exists for every degree")
}

/// GF(p^r) with precomputed addition and multiplication tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GaloisField {
    p: u64,
    r: u32,
    q: usize,
    irreducible: Vec<u64>,
    add_table: Vec<u32>,
    mul_table: Vec<u32>,
    inv_table: Vec<u32>,
}

impl GaloisField {
    pub fn new(p: u64, r: u32) -> Result<Self> {
        Self::with_cap(p, r, DEFAULT_FIELD_CAP)
    }

    pub fn with_cap(p: u64, r: u32, cap: u64) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::InvalidPrime(p));
        }
        if r == 0 {
            return Err(Error::InvalidInput("extension degree must be >= 1".into()));
        }
        let order = p
            .checked_pow(r)
            .filter(|&o| o <= cap)
            .ok_or(Error::FieldTooLarge {
                order: p.saturating_pow(r),
                cap,
            })?;
        let q = order as usize;
        let irreducible = find_irreducible(p, r)?;
        let ru = r as usize;
        let elems: Vec<Vec<u64>> = (0..order).map(|c| digits(c, p, ru)).collect();
        let encode = |poly: &[u64]| -> u32 {
            poly.iter()
                .rev()
                .fold(0u64, |acc, &c| acc * p + c) as u32
        };

        let mut add_table = vec![0u32; q * q];
        let mut mul_table = vec![0u32; q * q];
        let mut prod = vec![0u64; 2 * ru - 1];
        for a in 0..q {
            for b in a..q {
                let sum: Vec<u64> = elems[a]
                    .iter()
                    .zip(&elems[b])
                    .map(|(x, y)| (x + y) % p)
                    .collect();
                let s = encode(&sum);
                add_table[a * q + b] = s;
                add_table[b * q + a] = s;

                prod.iter_mut().for_each(|c| *c = 0);
                for (i, &x) in elems[a].iter().enumerate() {
                    if x == 0 {
                        continue;
                    }
                    for (j, &y) in elems[b].iter().enumerate() {
                        prod[i + j] = (prod[i + j] + x * y) % p;
                    }
                }
                let mut rem = poly_rem(&prod, &irreducible, p);
                rem.resize(ru, 0);
                let m = encode(&rem);
                mul_table[a * q + b] = m;
                mul_table[b * q + a] = m;
            }
        }

        let mut inv_table = vec![0u32; q];
        for a in 1..q {
            inv_table[a] = (1..q)
                .find(|&b| mul_table[a * q + b] == 1)
                .expect("nonzero elements are invertible") as u32;
        }

        Ok(GaloisField {
            p,
            r,
            q,
            irreducible,
            add_table,
            mul_table,
            inv_table,
        })
    }

    pub fn characteristic(&self) -> u64 {
        self.p
    }

    pub fn degree(&self) -> u32 {
        self.r
    }

    pub fn order(&self) -> usize {
        self.q
    }

    /// Coefficients of the modulus, constant term first.
    pub fn irreducible(&self) -> &[u64] {
        &self.irreducible
    }

    #[inline]
    pub fn add(&self, a: u32, b: u32) -> u32 {
        self.add_table[a as usize * self.q + b as usize]
    }

    #[inline]
    pub fn mul(&self, a: u32, b: u32) -> u32 {
        self.mul_table[a as usize * self.q + b as usize]
    }

    pub fn neg(&self, a: u32) -> u32 {
        (0..self.q as u32)
            .find(|&b| self.add(a, b) == 0)
            .expect("additive inverse exists")
    }

    pub fn inv(&self, a: u32) -> Result<u32> {
        if a == 0 {
            return Err(Error::DivisionByZero);
        }
        Ok(self.inv_table[a as usize])
    }

    pub fn add_table(&self) -> &[u32] {
        &self.add_table
    }

    pub fn mul_table(&self) -> &[u32] {
        &self.mul_table
    }
}
