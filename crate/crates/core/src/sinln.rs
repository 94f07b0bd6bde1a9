//! Brute-force extrema of `sin(ln n)` over `1 <= n <= max_n`.

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SinLnExtrema {
    pub max_n: u64,
    pub max: f64,
    pub argmax: u64,
    pub min: f64,
    pub argmin: u64,
}

/// Scans every integer up to `max_n`; first attaining index wins ties.
pub fn sin_ln_scan(max_n: u64) -> Result<SinLnExtrema, String> {
    if max_n < 10 {
        return Err(format!("max_n must be at least 10, got {max_n}"));
    }
    let mut out = SinLnExtrema { max_n, max: f64::NEG_INFINITY, argmax: 0, min: f64::INFINITY, argmin: 0 };
    for n in 1..=max_n {
        let v = (n as f64).ln().sin();
        if v > out.max {
            out.max = v;
            out.argmax = n;
        }
        if v < out.min {
            out.min = v;
            out.argmin = n;
        }
    }
    Ok(out)
}
