//! MI and bit-wise GMI of a labeled constellation over complex AWGN by
//! tensor Gauss-Hermite quadrature.

use std::f64::consts::{LN_2, PI};

/// Nodes and weights for `int e^{-t^2} f(t) dt`, Newton iteration on the
/// orthonormal Hermite recurrence.
pub fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    let pim4 = PI.powf(-0.25);
    let mut out = vec![(0.0, 0.0); n];
    let mut z = 0.0f64;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * out[0].0,
            3 => 1.91 * z - 0.91 * out[1].0,
            _ => 2.0 * z - out[i - 2].0,
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (pim4, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / (j as f64 + 1.0)).sqrt() * p2 - (j as f64 / (j as f64 + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-14 {
                break;
            }
        }
        let w = 2.0 / (pp * pp);
        out[i] = (z, w);
        out[n - 1 - i] = (-z, w);
    }
    out
}

/// Returns `(MI, GMI)` in bits for equiprobable points with `labels` (MSB
/// first) and circular noise of total variance `sigma2`.
pub fn awgn_air(points: &[(f64, f64)], labels: &[u32], sigma2: f64, nodes: usize) -> (f64, f64) {
    let m_pts = points.len();
    let m = m_pts.trailing_zeros() as usize;
    let gh = gauss_hermite(nodes);
    let s = sigma2.sqrt();
    let (mut h_sym, mut h_bits) = (0.0, 0.0);
    let mut metric = vec![0.0; m_pts];
    for (i, &(xr, xi)) in points.iter().enumerate() {
        for &(t1, w1) in &gh {
            for &(t2, w2) in &gh {
                let w = w1 * w2 / PI;
                let (yr, yi) = (xr + s * t1, xi + s * t2);
                let mut max = f64::NEG_INFINITY;
                for (o, &(cr, ci)) in metric.iter_mut().zip(points) {
                    *o = -((yr - cr).powi(2) + (yi - ci).powi(2)) / sigma2;
                    max = max.max(*o);
                }
                let own = metric[i];
                let lse = |keep: &dyn Fn(usize) -> bool| {
                    max + metric
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| keep(*j))
                        .map(|(_, &l)| (l - max).exp())
                        .sum::<f64>()
                        .ln()
                };
                let all = lse(&|_| true);
                h_sym += w * (all - own);
                for p in 0..m {
                    let bit = (labels[i] >> (m - 1 - p)) & 1;
                    h_bits += w * (all - lse(&|j| (labels[j] >> (m - 1 - p)) & 1 == bit));
                }
            }
        }
    }
    let mf = m_pts as f64;
    (m as f64 - h_sym / mf / LN_2, m as f64 - h_bits / mf / LN_2)
}
