//! Random regular code construction.

use rand::seq::SliceRandom;

use super::code::LdpcCode;
use crate::error::{Error, Result};
use crate::seed;

/// Random `(dv, dc)`-regular code of length `n`.
///
/// Edges are placed one variable at a time, each going to a least-loaded
/// check that does not close a 4-cycle; ties are broken at random. When no
/// such check is left, any check with spare capacity not already adjacent to
/// the variable is used.
pub fn regular_code(n: usize, dv: usize, dc: usize, seed: u64) -> Result<LdpcCode> {
    if dv == 0 || dc < 2 || n < dc {
        return Err(Error::invalid(format!("no ({dv},{dc})-regular code of length {n}")));
    }
    if (n * dv) % dc != 0 {
        return Err(Error::invalid(format!("n * dv = {} is not divisible by dc = {dc}", n * dv)));
    }
    let m = n * dv / dc;
    let mut rng = seed::rng(seed);
    let mut checks: Vec<Vec<usize>> = vec![Vec::with_capacity(dc); m];
    let mut var_checks: Vec<Vec<usize>> = vec![Vec::with_capacity(dv); n];
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut mark = vec![usize::MAX; m];
    let mut short_cycles = 0usize;
    for (step, &v) in order.iter().enumerate() {
        for _ in 0..dv {
            // Checks within distance 2 of v through its current checks.
            for &c in &var_checks[v] {
                for &u in &checks[c] {
                    for &c2 in &var_checks[u] {
                        mark[c2] = step;
                    }
                }
                mark[c] = step;
            }
            let pick = |allow_cycle: bool| -> Vec<usize> {
                let mut best = usize::MAX;
                let mut cands = Vec::new();
                for c in 0..m {
                    let deg = checks[c].len();
                    if deg >= dc || deg > best {
                        continue;
                    }
                    let blocked = if allow_cycle {
                        var_checks[v].contains(&c)
                    } else {
                        mark[c] == step
                    };
                    if blocked {
                        continue;
                    }
                    if deg < best {
                        best = deg;
                        cands.clear();
                    }
                    cands.push(c);
                }
                cands
            };
            let mut cands = pick(false);
            if cands.is_empty() {
                cands = pick(true);
                short_cycles += 1;
            }
            let Some(&c) = cands.choose(&mut rng) else {
                return Err(Error::invalid("construction ran out of check sockets"));
            };
            checks[c].push(v);
            var_checks[v].push(c);
        }
    }
    if short_cycles > 0 {
        log::debug!("regular construction: {short_cycles} edges may close 4-cycles");
    }
    for c in &mut checks {
        c.sort_unstable();
    }
    LdpcCode::from_checks(n, checks)
}

/// Number of 4-cycles in the Tanner graph.
pub fn count_four_cycles(code: &LdpcCode) -> usize {
    let mut count = 0;
    let checks = code.checks();
    let mut seen = vec![0usize; code.m()];
    for (c, vars) in checks.iter().enumerate() {
        seen.iter_mut().for_each(|s| *s = 0);
        for &v in vars {
            for &c2 in &code.var_checks()[v] {
                if c2 > c {
                    seen[c2] += 1;
                }
            }
        }
        count += seen.iter().map(|&s| s * s.saturating_sub(1) / 2).sum::<usize>();
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regular_degrees() {
        let code = regular_code(1024, 3, 6, 1).unwrap();
        assert_eq!(code.m(), 512);
        assert!(code.checks().iter().all(|c| c.len() == 6));
        assert!(code.var_checks().iter().all(|c| c.len() == 3));
        assert!(code.k() >= 512);
        assert_eq!(count_four_cycles(&code), 0);
    }

    #[test]
    fn deterministic() {
        assert_eq!(regular_code(96, 3, 6, 7).unwrap(), regular_code(96, 3, 6, 7).unwrap());
        assert_ne!(regular_code(96, 3, 6, 7).unwrap(), regular_code(96, 3, 6, 8).unwrap());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(regular_code(10, 3, 4, 0).is_err());
        assert!(regular_code(4, 3, 6, 0).is_err());
    }
}
