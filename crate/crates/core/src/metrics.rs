//! Achievable information rates under a mismatched Gaussian receiver.
//!
//! The receiver assumes `q(y|x) = exp(-|y-x|^2 / s2) / (pi s2)` with `s2`
//! estimated from transmitted/received pairs. Symbol posteriors follow from
//! Bayes' rule with uniform priors and are evaluated in the log domain.
//! Monte-Carlo sums are accumulated sequentially in `f64` so results do not
//! depend on the scalar type's precision or on thread count.

use std::fmt::Write as _;
use std::io::Write;


use crate::constellation::{BitLabeling, Constellation};
use crate::{Cplx, Error, Result, Scalar};

/// Lower bound applied to the estimated auxiliary-channel variance.
pub const SIGMA_FLOOR: f64 = 1e-12;

pub const RECORD_HEADER: &str = "epoch,propagations,launch_power_dbm,quant_bits,mi_bits,gmi_bits";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianReceiverState<T> {
    pub sigma_g_sq: T,
    /// The raw estimate was below [`SIGMA_FLOOR`] and has been floored.
    pub degenerate: bool,
}

impl<T: Scalar> GaussianReceiverState<T> {
    pub fn new(sigma_g_sq: T) -> Result<Self> {
        if !(sigma_g_sq > T::zero()) {
            return Err(Error::InvalidParameter(format!("sigma_G^2 must be > 0, got {sigma_g_sq}")));
        }
        Ok(Self {
            sigma_g_sq,
            degenerate: false,
        })
    }
}

/// One validation or test measurement.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricRecord {
    pub epoch: usize,
    pub propagations: u64,
    pub launch_power_dbm: Option<f64>,
    pub quant_bits: Option<f64>,
    pub mi_bits: Option<f64>,
    pub gmi_bits: Option<f64>,
}

fn check_pairs<T>(x: &[Cplx<T>], y: &[Cplx<T>]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::EmptyInput("symbol sequence"));
    }
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            what: "received sequence",
            expected: x.len(),
            actual: y.len(),
        });
    }
    Ok(())
}

/// `sigma_G^2 = mean |y - x|^2`, floored at [`SIGMA_FLOOR`].
pub fn estimate_noise_var<T: Scalar>(x: &[Cplx<T>], y: &[Cplx<T>]) -> Result<GaussianReceiverState<T>> {
    check_pairs(x, y)?;
    let sum: f64 = x.iter().zip(y).map(|(a, b)| (b - a).norm_sqr().to_f64_lossy()).sum();
    let v = sum / x.len() as f64;
    Ok(GaussianReceiverState {
        sigma_g_sq: T::of(v.max(SIGMA_FLOOR)),
        degenerate: v < SIGMA_FLOOR,
    })
}

/// Log-metrics `-|y - c_i|^2 / s2` of every constellation point into `out`;
/// returns their log-sum-exp.
fn log_metrics<T: Scalar>(y: Cplx<T>, points: &[Cplx<T>], inv_s2: T, out: &mut [T]) -> T {
    let mut max = T::neg_infinity();
    for (o, c) in out.iter_mut().zip(points) {
        *o = -(y - c).norm_sqr() * inv_s2;
        max = max.max(*o);
    }
    let sum: T = out.iter().map(|&l| (l - max).exp()).sum();
    max + sum.ln()
}

/// Posterior `q(x = c_i | y)` of the auxiliary Gaussian channel.
pub fn gaussian_posteriors<T: Scalar>(y: Cplx<T>, c: &Constellation<T>, rx: &GaussianReceiverState<T>) -> Vec<T> {
    let mut l = vec![T::zero(); c.order()];
    let lse = log_metrics(y, c.points(), T::one() / rx.sigma_g_sq, &mut l);
    l.iter().map(|&v| (v - lse).exp()).collect()
}

/// MI lower bound `m - H_q(X|Y)` in bits/symbol.
pub fn mi_mismatched<T: Scalar>(
    x: &[Cplx<T>],
    y: &[Cplx<T>],
    c: &Constellation<T>,
    rx: &GaussianReceiverState<T>,
) -> Result<f64> {
    check_pairs(x, y)?;
    if !(rx.sigma_g_sq > T::zero()) {
        return Err(Error::InvalidParameter("sigma_G^2 must be > 0".into()));
    }
    let inv = T::one() / rx.sigma_g_sq;
    let mut buf = vec![T::zero(); c.order()];
    let mut acc = 0.0f64;
    for (&xk, &yk) in x.iter().zip(y) {
        let lse = log_metrics(yk, c.points(), inv, &mut buf);
        let own = -(yk - xk).norm_sqr() * inv;
        acc += (own - lse).to_f64_lossy();
    }
    Ok(c.bits_per_symbol() as f64 + acc / x.len() as f64 / std::f64::consts::LN_2)
}

/// Bit-wise GMI lower bound `m - sum_i H_q(B_i|Y)` in bits/symbol.
///
/// `bits` holds `m` bits per symbol, MSB first, in `{0, 1}`.
pub fn gmi_mismatched<T: Scalar>(
    bits: &[u8],
    y: &[Cplx<T>],
    c: &Constellation<T>,
    labeling: &BitLabeling,
    rx: &GaussianReceiverState<T>,
) -> Result<f64> {
    let m = c.bits_per_symbol();
    if labeling.order() != c.order() {
        return Err(Error::LengthMismatch {
            what: "labeling order",
            expected: c.order(),
            actual: labeling.order(),
        });
    }
    if y.is_empty() {
        return Err(Error::EmptyInput("received sequence"));
    }
    if bits.len() != m * y.len() {
        return Err(Error::LengthMismatch {
            what: "bit sequence",
            expected: m * y.len(),
            actual: bits.len(),
        });
    }
    if !(rx.sigma_g_sq > T::zero()) {
        return Err(Error::InvalidParameter("sigma_G^2 must be > 0".into()));
    }
    let inv = T::one() / rx.sigma_g_sq;
    let order = c.order();
    let mut l = vec![T::zero(); order];
    // coset_sum[p][b]
    let mut coset = vec![[T::zero(); 2]; m];
    let mut acc = 0.0f64;
    for (k, &yk) in y.iter().enumerate() {
        let mut max = T::neg_infinity();
        for (o, p) in l.iter_mut().zip(c.points()) {
            *o = -(yk - p).norm_sqr() * inv;
            max = max.max(*o);
        }
        coset.iter_mut().for_each(|s| *s = [T::zero(); 2]);
        let mut total = T::zero();
        for (i, &li) in l.iter().enumerate() {
            let e = (li - max).exp();
            total += e;
            let label = labeling.label(i);
            for (p, s) in coset.iter_mut().enumerate() {
                s[((label >> (m - 1 - p)) & 1) as usize] += e;
            }
        }
        let ln_total = total.ln();
        for (p, s) in coset.iter().enumerate() {
            let b = bits[k * m + p] as usize;
            acc += (s[b].ln() - ln_total).to_f64_lossy();
        }
    }
    Ok(m as f64 + acc / y.len() as f64 / std::f64::consts::LN_2)
}

/// Decoder-based AIR from a categorical cross-entropy measured in nats.
pub fn air_from_ce(ce_nats: f64, bits_per_symbol: usize) -> f64 {
    bits_per_symbol as f64 - ce_nats / std::f64::consts::LN_2
}

/// Decoder-based bit-wise AIR from the per-bit averaged binary cross-entropy
/// (nats); the loss is an average over `m` bits, hence the factor `m`.
pub fn air_from_ll(ll_nats: f64, bits_per_symbol: usize) -> f64 {
    let m = bits_per_symbol as f64;
    m - m * ll_nats / std::f64::consts::LN_2
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub fn records_to_csv(records: &[MetricRecord]) -> String {
    let mut out = String::from(RECORD_HEADER);
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.epoch,
            r.propagations,
            opt(r.launch_power_dbm),
            opt(r.quant_bits),
            opt(r.mi_bits),
            opt(r.gmi_bits)
        )
        .unwrap();
    }
    out
}

pub fn write_records(mut w: impl Write, records: &[MetricRecord]) -> Result<()> {
    w.write_all(records_to_csv(records).as_bytes())?;
    Ok(())
}

pub fn parse_records(text: &str) -> Result<Vec<MetricRecord>> {
    let err = |line: usize, msg: String| Error::InvalidParameter(format!("record line {line}: {msg}"));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == RECORD_HEADER => {}
        _ => return Err(err(1, format!("expected header '{RECORD_HEADER}'"))),
    }
    let mut out = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(err(n + 1, format!("expected 6 fields, found {}", f.len())));
        }
        let o = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| err(n + 1, format!("bad number '{s}'")))
            }
        };
        out.push(MetricRecord {
            epoch: f[0].parse().map_err(|_| err(n + 1, "bad epoch".into()))?,
            propagations: f[1].parse().map_err(|_| err(n + 1, "bad propagation count".into()))?,
            launch_power_dbm: o(f[2])?,
            quant_bits: o(f[3])?,
            mi_bits: o(f[4])?,
            gmi_bits: o(f[5])?,
        });
    }
    Ok(out)
}
