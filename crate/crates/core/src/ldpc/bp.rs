//! Flooding sum-product decoding.

use super::code::LdpcCode;
use crate::error::{Error, Result};

/// Messages are clipped to this magnitude.
pub const LLR_CLIP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpOptions {
    pub max_iters: usize,
    /// Extra iterations run after the syndrome is first satisfied, letting
    /// the soft outputs firm up.
    pub settle: usize,
}

impl BpOptions {
    pub fn new(max_iters: usize) -> Self {
        BpOptions { max_iters, settle: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpResult {
    /// A-posteriori LLRs, positive favouring bit 0.
    pub posterior: Vec<f64>,
    pub hard: Vec<u8>,
    pub syndrome_ok: bool,
    pub iterations: usize,
}

/// Decodes channel LLRs (positive favouring 0), stopping once `H c = 0`.
pub fn bp_decode(code: &LdpcCode, llr: &[f64], max_iters: usize) -> Result<BpResult> {
    bp_decode_with(code, llr, BpOptions::new(max_iters))
}

pub fn bp_decode_with(code: &LdpcCode, llr: &[f64], opts: BpOptions) -> Result<BpResult> {
    let n = code.n();
    if llr.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: llr.len() });
    }
    if llr.iter().any(|l| l.is_nan()) {
        return Err(Error::invalid("channel LLR is NaN"));
    }
    let checks = code.checks();
    let mut offsets = Vec::with_capacity(checks.len() + 1);
    offsets.push(0);
    let mut edge_var = Vec::with_capacity(code.edge_count());
    for vars in checks {
        edge_var.extend_from_slice(vars);
        offsets.push(edge_var.len());
    }
    let e_total = edge_var.len();
    let mut var_edges: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (e, &v) in edge_var.iter().enumerate() {
        var_edges[v].push(e);
    }

    let clip = |x: f64| x.clamp(-LLR_CLIP, LLR_CLIP);
    let mut total: Vec<f64> = llr.to_vec();
    let mut hard: Vec<u8> = total.iter().map(|&l| u8::from(l < 0.0)).collect();
    let mut ok = code.syndrome_ok(&hard);
    let mut iterations = 0;
    if opts.max_iters == 0 || (ok && opts.settle == 0) {
        return Ok(BpResult {
            posterior: total,
            hard,
            syndrome_ok: ok,
            iterations,
        });
    }

    let mut v2c: Vec<f64> = edge_var.iter().map(|&v| clip(llr[v])).collect();
    let mut c2v = vec![0.0; e_total];
    let mut t = Vec::new();
    let mut suffix = Vec::new();
    let t_max = 1.0 - 1e-15;
    let mut settle_left = if ok { Some(opts.settle - 1) } else { None };
    loop {
        iterations += 1;
        for c in 0..checks.len() {
            let (a, b) = (offsets[c], offsets[c + 1]);
            t.clear();
            t.extend(v2c[a..b].iter().map(|&x| (0.5 * x).tanh()));
            suffix.clear();
            suffix.resize(t.len() + 1, 1.0);
            for j in (0..t.len()).rev() {
                suffix[j] = suffix[j + 1] * t[j];
            }
            let mut prefix = 1.0;
            for (j, &tj) in t.iter().enumerate() {
                let p = (prefix * suffix[j + 1]).clamp(-t_max, t_max);
                c2v[a + j] = clip(2.0 * p.atanh());
                prefix *= tj;
            }
        }
        for v in 0..n {
            let sum: f64 = llr[v] + var_edges[v].iter().map(|&e| c2v[e]).sum::<f64>();
            total[v] = sum;
            for &e in &var_edges[v] {
                v2c[e] = clip(sum - c2v[e]);
            }
            hard[v] = u8::from(sum < 0.0);
        }
        ok = code.syndrome_ok(&hard);
        match settle_left {
            Some(0) => break,
            Some(ref mut s) => *s -= 1,
            None if ok => {
                if opts.settle == 0 {
                    break;
                }
                settle_left = Some(opts.settle - 1);
            }
            None => {}
        }
        if settle_left.is_none() && iterations >= opts.max_iters {
            break;
        }
    }
    Ok(BpResult {
        posterior: total,
        hard,
        syndrome_ok: ok,
        iterations,
    })
}
