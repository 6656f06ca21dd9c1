//! Sparse parity-check codes with a systematic GF(2) encoder.

use crate::error::{Error, Result};

/// Dense GF(2) row stored as 64-bit words.
#[derive(Debug, Clone, PartialEq, Eq)]
struct BitRow(Vec<u64>);

impl BitRow {
    fn zeros(len: usize) -> Self {
        BitRow(vec![0; len.div_ceil(64)])
    }

    fn get(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }

    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn flip(&mut self, i: usize) {
        self.0[i / 64] ^= 1 << (i % 64);
    }

    fn xor_from(&mut self, other: &BitRow, word: usize) {
        for (a, b) in self.0[word..].iter_mut().zip(&other.0[word..]) {
            *a ^= b;
        }
    }

    fn parity_and(&self, other: &BitRow) -> u8 {
        let ones: u32 = self.0.iter().zip(&other.0).map(|(a, b)| (a & b).count_ones()).sum();
        (ones & 1) as u8
    }
}

/// Systematic encoder from the reduced row-echelon form of `H`.
///
/// Information bits sit at the non-pivot columns; pivot bit `p_i` equals the
/// parity of row `i` restricted to those columns.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Encoder {
    info_positions: Vec<usize>,
    pivots: Vec<usize>,
    rows: Vec<BitRow>,
}

/// A binary linear code given by a sparse parity-check matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LdpcCode {
    n: usize,
    check_to_vars: Vec<Vec<usize>>,
    var_to_checks: Vec<Vec<usize>>,
    encoder: Encoder,
}

impl LdpcCode {
    /// Builds a code from the variable list of each check (0-indexed).
    pub fn from_checks(n: usize, checks: Vec<Vec<usize>>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("code length must be positive"));
        }
        let mut var_to_checks = vec![Vec::new(); n];
        for (c, vars) in checks.iter().enumerate() {
            let mut seen = vars.clone();
            seen.sort_unstable();
            if seen.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::invalid(format!("check {c} lists a variable twice")));
            }
            for &v in vars {
                if v >= n {
                    return Err(Error::invalid(format!("check {c} refers to variable {v} >= n = {n}")));
                }
                var_to_checks[v].push(c);
            }
        }
        let encoder = build_encoder(n, &checks);
        let k = encoder.info_positions.len();
        let rank = encoder.pivots.len();
        if rank < checks.len() {
            log::warn!(
                "parity-check matrix has rank {rank} < {} rows; dimension is {k} (rate {:.4})",
                checks.len(),
                k as f64 / n as f64
            );
        }
        Ok(LdpcCode {
            n,
            check_to_vars: checks,
            var_to_checks,
            encoder,
        })
    }

    /// Code length.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Dimension after removing dependent checks.
    pub fn k(&self) -> usize {
        self.encoder.info_positions.len()
    }

    /// Number of parity checks (rows of `H`, dependent ones included).
    pub fn m(&self) -> usize {
        self.check_to_vars.len()
    }

    pub fn rank(&self) -> usize {
        self.encoder.pivots.len()
    }

    pub fn rate(&self) -> f64 {
        self.k() as f64 / self.n as f64
    }

    pub fn checks(&self) -> &[Vec<usize>] {
        &self.check_to_vars
    }

    pub fn var_checks(&self) -> &[Vec<usize>] {
        &self.var_to_checks
    }

    pub fn edge_count(&self) -> usize {
        self.check_to_vars.iter().map(Vec::len).sum()
    }

    /// Codeword positions carrying the information bits, increasing.
    pub fn info_positions(&self) -> &[usize] {
        &self.encoder.info_positions
    }

    pub fn encode(&self, info: &[u8]) -> Result<Vec<u8>> {
        if info.len() != self.k() {
            return Err(Error::DimensionMismatch {
                expected: self.k(),
                got: info.len(),
            });
        }
        let mut packed = BitRow::zeros(self.k());
        for (j, &b) in info.iter().enumerate() {
            if b & 1 == 1 {
                packed.set(j);
            }
        }
        let mut word = vec![0u8; self.n];
        for (&pos, &b) in self.encoder.info_positions.iter().zip(info) {
            word[pos] = b & 1;
        }
        for (&p, row) in self.encoder.pivots.iter().zip(&self.encoder.rows) {
            word[p] = row.parity_and(&packed);
        }
        Ok(word)
    }

    /// Information bits of a codeword.
    pub fn extract_info(&self, word: &[u8]) -> Vec<u8> {
        self.encoder.info_positions.iter().map(|&p| word[p]).collect()
    }

    /// Whether `H word = 0`.
    pub fn syndrome_ok(&self, word: &[u8]) -> bool {
        self.check_to_vars
            .iter()
            .all(|vars| vars.iter().fold(0u8, |acc, &v| acc ^ word[v]) == 0)
    }
}

fn build_encoder(n: usize, checks: &[Vec<usize>]) -> Encoder {
    let mut rows: Vec<BitRow> = checks
        .iter()
        .map(|vars| {
            let mut r = BitRow::zeros(n);
            for &v in vars {
                r.flip(v);
            }
            r
        })
        .collect();
    let mut pivots = Vec::new();
    let mut is_pivot = vec![false; n];
    let mut next = 0;
    for col in 0..n {
        if next == rows.len() {
            break;
        }
        let Some(found) = (next..rows.len()).find(|&r| rows[r].get(col)) else {
            continue;
        };
        rows.swap(next, found);
        let (head, tail) = rows.split_at_mut(next);
        let (pivot_row, rest) = tail.split_first_mut().expect("pivot row exists");
        let word = col / 64;
        for r in head.iter_mut().chain(rest.iter_mut()) {
            if r.get(col) {
                r.xor_from(pivot_row, word);
            }
        }
        pivots.push(col);
        is_pivot[col] = true;
        next += 1;
    }
    rows.truncate(next);
    let info_positions: Vec<usize> = (0..n).filter(|&c| !is_pivot[c]).collect();
    let compact = rows
        .iter()
        .map(|r| {
            let mut out = BitRow::zeros(info_positions.len());
            for (j, &c) in info_positions.iter().enumerate() {
                if r.get(c) {
                    out.set(j);
                }
            }
            out
        })
        .collect();
    Encoder {
        info_positions,
        pivots,
        rows: compact,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// The (7,4) Hamming code.
    pub(crate) fn hamming() -> LdpcCode {
        LdpcCode::from_checks(7, vec![vec![0, 1, 2, 4], vec![0, 1, 3, 5], vec![0, 2, 3, 6]]).unwrap()
    }

    #[test]
    fn hamming_dimensions() {
        let c = hamming();
        assert_eq!((c.n(), c.k(), c.m(), c.rank()), (7, 4, 3, 3));
    }

    #[test]
    fn encode_properties() {
        let c = hamming();
        assert_eq!(c.encode(&[0; 4]).unwrap(), vec![0; 7]);
        let mut rng = crate::seed::rng(3);
        for _ in 0..20 {
            let a: Vec<u8> = (0..4).map(|_| rng.gen_range(0..2)).collect();
            let b: Vec<u8> = (0..4).map(|_| rng.gen_range(0..2)).collect();
            let ab: Vec<u8> = a.iter().zip(&b).map(|(x, y)| x ^ y).collect();
            let (ca, cb, cab) = (c.encode(&a).unwrap(), c.encode(&b).unwrap(), c.encode(&ab).unwrap());
            assert!(c.syndrome_ok(&ca));
            assert_eq!(c.extract_info(&ca), a);
            let sum: Vec<u8> = ca.iter().zip(&cb).map(|(x, y)| x ^ y).collect();
            assert_eq!(sum, cab);
        }
        assert!(c.encode(&[0; 3]).is_err());
    }

    #[test]
    fn rank_deficiency_reduces_dimension() {
        // Third check is the sum of the first two.
        let c = LdpcCode::from_checks(4, vec![vec![0, 1], vec![1, 2], vec![0, 2], vec![2, 3]]).unwrap();
        assert_eq!(c.rank(), 3);
        assert_eq!(c.k(), 1);
        assert_eq!(c.encode(&[1]).unwrap(), vec![1, 1, 1, 1]);
    }

    #[test]
    fn rejects_bad_checks() {
        assert!(LdpcCode::from_checks(3, vec![vec![0, 3]]).is_err());
        assert!(LdpcCode::from_checks(3, vec![vec![0, 0]]).is_err());
    }
}
