use crate::channels::Channel;
use crate::constellation::{BitLabeling, Constellation};
use crate::metrics::{estimate_noise_var, gmi_mismatched, mi_mismatched, MetricRecord};
use crate::neural::Autoencoder;
use crate::rng::{self, SimRng};
use crate::{Cplx, Result, Scalar};

/// MI and (with a labeling) GMI of a fixed constellation from one block of
/// `n_symbols` uniform symbols through the uncounted channel path.
pub fn measure_constellation<T: Scalar, C: Channel<T>>(
    c: &Constellation<T>,
    labeling: Option<&BitLabeling>,
    channel: &C,
    n_symbols: usize,
    rng: &mut SimRng,
) -> Result<(f64, Option<f64>)> {
    let idx: Vec<usize> = (0..n_symbols).map(|_| rng::uniform_index(rng, c.order())).collect();
    let x: Vec<Cplx<T>> = idx.iter().map(|&i| c.points()[i]).collect();
    let y = channel.evaluate(&x, c.points(), rng)?;
    let rx = estimate_noise_var(&x, &y)?;
    let mi = mi_mismatched(&x, &y, c, &rx)?;
    let gmi = match labeling {
        Some(l) => {
            let m = c.bits_per_symbol();
            let bits: Vec<u8> = idx.iter().flat_map(|&i| (0..m).map(move |p| l.bit(i, p))).collect();
            Some(gmi_mismatched(&bits, &y, c, l, &rx)?)
        }
        None => None,
    };
    Ok((mi, gmi))
}

/// Average over `runs` independent blocks, block `r` seeded from
/// `substream(seed, r)`.
pub fn test_constellation<T: Scalar, C: Channel<T>>(
    c: &Constellation<T>,
    labeling: Option<&BitLabeling>,
    channel: &C,
    runs: usize,
    n_symbols: usize,
    seed: u64,
) -> Result<(f64, Option<f64>)> {
    let mut mi = 0.0;
    let mut gmi = labeling.map(|_| 0.0);
    for r in 0..runs {
        let (a, b) = measure_constellation(c, labeling, channel, n_symbols, &mut rng::substream(seed, r as u64))?;
        mi += a;
        if let (Some(acc), Some(v)) = (gmi.as_mut(), b) {
            *acc += v;
        }
    }
    let n = runs.max(1) as f64;
    Ok((mi / n, gmi.map(|g| g / n)))
}

/// Gaussian-receiver metrics of the current encoder. Epoch and tags are
/// left for the caller; `propagations` is the channel counter snapshot.
pub fn validate<T: Scalar, C: Channel<T>>(
    ae: &Autoencoder<T>,
    channel: &C,
    n_symbols: usize,
    rng: &mut SimRng,
) -> Result<MetricRecord> {
    let c = ae.constellation()?;
    let labeling = ae.labeling();
    let (mi, gmi) = measure_constellation(&c, labeling.as_ref(), channel, n_symbols, rng)?;
    Ok(MetricRecord {
        propagations: channel.counter().get(),
        mi_bits: Some(mi),
        gmi_bits: gmi,
        ..MetricRecord::default()
    })
}
