//! Reading and writing parity-check matrices in alist format.
//!
//! Layout: `n m`; maximum column and row degrees; the `n` column degrees;
//! the `m` row degrees; `n` lines of 1-indexed row numbers per column; `m`
//! lines of 1-indexed column numbers per row. Zero entries are padding.

use std::fmt::Write as _;

use super::code::LdpcCode;
use crate::error::{Error, Result};

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    /// Next nonblank line as integers, with its 1-based line number.
    fn next_ints(&mut self, what: &str) -> Result<(usize, Vec<usize>)> {
        for (idx, raw) in self.inner.by_ref() {
            self.last = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let vals = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<usize>()
                        .map_err(|_| Error::parse(idx + 1, format!("expected a nonnegative integer, found {t:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            return Ok((idx + 1, vals));
        }
        Err(Error::parse(self.last + 1, format!("unexpected end of file, expected {what}")))
    }
}

fn expect_len(line: usize, vals: &[usize], want: usize, what: &str) -> Result<()> {
    if vals.len() != want {
        return Err(Error::parse(line, format!("expected {want} {what}, found {}", vals.len())));
    }
    Ok(())
}

/// Parses an alist description into a code.
pub fn load_alist(text: &str) -> Result<LdpcCode> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    let (l, dims) = lines.next_ints("`n m`")?;
    expect_len(l, &dims, 2, "dimensions")?;
    let (n, m) = (dims[0], dims[1]);
    if n == 0 || m == 0 {
        return Err(Error::parse(l, "dimensions must be positive"));
    }
    let (l, maxd) = lines.next_ints("maximum degrees")?;
    expect_len(l, &maxd, 2, "maximum degrees")?;
    let (l, col_deg) = lines.next_ints("column degrees")?;
    expect_len(l, &col_deg, n, "column degrees")?;
    if let Some(d) = col_deg.iter().find(|&&d| d > maxd[0]) {
        return Err(Error::parse(l, format!("column degree {d} exceeds the maximum {}", maxd[0])));
    }
    let (l, row_deg) = lines.next_ints("row degrees")?;
    expect_len(l, &row_deg, m, "row degrees")?;
    if let Some(d) = row_deg.iter().find(|&&d| d > maxd[1]) {
        return Err(Error::parse(l, format!("row degree {d} exceeds the maximum {}", maxd[1])));
    }

    let mut col_lists = Vec::with_capacity(n);
    for (j, &deg) in col_deg.iter().enumerate() {
        let (l, vals) = lines.next_ints(&format!("row list of column {}", j + 1))?;
        let entries: Vec<usize> = vals.iter().copied().filter(|&v| v != 0).collect();
        if entries.len() != deg {
            return Err(Error::parse(l, format!("column {} lists {} rows, degree is {deg}", j + 1, entries.len())));
        }
        if let Some(&bad) = entries.iter().find(|&&r| r > m) {
            return Err(Error::parse(l, format!("row index {bad} out of range 1..={m}")));
        }
        col_lists.push((l, entries));
    }
    let mut checks = Vec::with_capacity(m);
    for (i, &deg) in row_deg.iter().enumerate() {
        let (l, vals) = lines.next_ints(&format!("column list of row {}", i + 1))?;
        let entries: Vec<usize> = vals.iter().copied().filter(|&v| v != 0).collect();
        if entries.len() != deg {
            return Err(Error::parse(l, format!("row {} lists {} columns, degree is {deg}", i + 1, entries.len())));
        }
        if let Some(&bad) = entries.iter().find(|&&c| c > n) {
            return Err(Error::parse(l, format!("column index {bad} out of range 1..={n}")));
        }
        checks.push(entries.iter().map(|c| c - 1).collect::<Vec<_>>());
    }
    for (j, (l, rows)) in col_lists.iter().enumerate() {
        for &r in rows {
            if !checks[r - 1].contains(&j) {
                return Err(Error::parse(*l, format!("column {} lists row {r}, which does not list it back", j + 1)));
            }
        }
    }
    LdpcCode::from_checks(n, checks).map_err(|e| Error::parse(lines.last, e.to_string()))
}

/// Serializes the parity-check matrix of `code` in alist format.
pub fn write_alist(code: &LdpcCode) -> String {
    let cols = code.var_checks();
    let rows = code.checks();
    let max_c = cols.iter().map(Vec::len).max().unwrap_or(0);
    let max_r = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut s = String::new();
    let _ = writeln!(s, "{} {}", code.n(), code.m());
    let _ = writeln!(s, "{max_c} {max_r}");
    let join = |v: Vec<String>| v.join(" ");
    let _ = writeln!(s, "{}", join(cols.iter().map(|c| c.len().to_string()).collect()));
    let _ = writeln!(s, "{}", join(rows.iter().map(|r| r.len().to_string()).collect()));
    for c in cols {
        let mut e: Vec<String> = c.iter().map(|r| (r + 1).to_string()).collect();
        e.resize(max_c, "0".into());
        let _ = writeln!(s, "{}", join(e));
    }
    for r in rows {
        let mut e: Vec<String> = r.iter().map(|c| (c + 1).to_string()).collect();
        e.resize(max_r, "0".into());
        let _ = writeln!(s, "{}", join(e));
    }
    s
}
