use std::f64::consts::PI;

use crate::{Error, Result};

/// Raised-cosine spectrum with unit passband: `R(0) = 1`, and shifted copies
/// spaced by the symbol rate sum to one.
pub fn raised_cosine_spectrum(f: f64, symbol_rate: f64, rolloff: f64) -> f64 {
    let f = f.abs();
    let f1 = (1.0 - rolloff) * symbol_rate / 2.0;
    let f2 = (1.0 + rolloff) * symbol_rate / 2.0;
    if f <= f1 {
        1.0
    } else if f >= f2 {
        0.0
    } else {
        0.5 * (1.0 + (PI / (rolloff * symbol_rate) * (f - f1)).cos())
    }
}

fn rrc_at(t: f64, b: f64) -> f64 {
    if t.abs() < 1e-12 {
        return 1.0 - b + 4.0 * b / PI;
    }
    if (t.abs() - 1.0 / (4.0 * b)).abs() < 1e-9 {
        let a = PI / (4.0 * b);
        return b / 2f64.sqrt() * ((1.0 + 2.0 / PI) * a.sin() + (1.0 - 2.0 / PI) * a.cos());
    }
    let num = (PI * t * (1.0 - b)).sin() + 4.0 * b * t * (PI * t * (1.0 + b)).cos();
    num / (PI * t * (1.0 - (4.0 * b * t).powi(2)))
}

/// Unit-energy root-raised-cosine FIR taps spanning `span_symbols` symbols
/// (`span_symbols * sps + 1` taps, symmetric about the centre).
pub fn rrc_taps(rolloff: f64, span_symbols: usize, sps: usize) -> Result<Vec<f64>> {
    if !(rolloff > 0.0 && rolloff <= 1.0) {
        return Err(Error::InvalidParameter(format!("roll-off {rolloff} outside (0, 1]")));
    }
    if sps < 1 || span_symbols < 1 {
        return Err(Error::InvalidParameter("span and samples per symbol must be >= 1".into()));
    }
    let n = span_symbols * sps + 1;
    let mid = (n - 1) as f64 / 2.0;
    let mut h: Vec<f64> = (0..n).map(|k| rrc_at((k as f64 - mid) / sps as f64, rolloff)).collect();
    let e = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    h.iter_mut().for_each(|v| *v /= e);
    Ok(h)
}
