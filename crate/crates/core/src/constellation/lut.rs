//! Constellation lookup-table files.
//!
//! CSV with header `index,re,im,label_bits`. Coordinates are written with 18
//! significant digits; `label_bits` is the `m`-character binary label (MSB
//! first) or empty for an unlabeled constellation.

use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use num_traits::Float;

use super::{log2_order, mean_power, normalize, BitLabeling, Constellation};
use crate::{Cplx, Error, Result, Scalar};

pub const LUT_HEADER: &str = "index,re,im,label_bits";

/// Mean-power deviation above which a loaded table counts as unnormalized.
const POWER_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct LoadedLut<T> {
    pub constellation: Constellation<T>,
    pub labeling: Option<BitLabeling>,
    /// Mean power found in the file before any renormalization.
    pub file_mean_power: f64,
    pub renormalized: bool,
}

pub fn lut_to_string<T: Scalar>(c: &Constellation<T>, labeling: Option<&BitLabeling>) -> Result<String> {
    if let Some(l) = labeling {
        if l.order() != c.order() {
            return Err(Error::LengthMismatch {
                what: "labeling",
                expected: c.order(),
                actual: l.order(),
            });
        }
    }
    let mut out = String::with_capacity(64 * c.order());
    out.push_str(LUT_HEADER);
    out.push('\n');
    for (i, p) in c.points().iter().enumerate() {
        let label = labeling.map(|l| l.label_string(i)).unwrap_or_default();
        writeln!(out, "{i},{:.17e},{:.17e},{label}", p.re.to_f64_lossy(), p.im.to_f64_lossy()).unwrap();
    }
    Ok(out)
}

pub fn save_lut<T: Scalar>(
    c: &Constellation<T>,
    labeling: Option<&BitLabeling>,
    path: impl AsRef<Path>,
) -> Result<()> {
    std::fs::write(path, lut_to_string(c, labeling)?)?;
    Ok(())
}

/// Loads a LUT. A table whose mean power is not 1 is rejected unless
/// `renormalize` is set, in which case it is rescaled with a warning.
pub fn load_lut<T: Scalar>(path: impl AsRef<Path>, renormalize: bool) -> Result<LoadedLut<T>> {
    let text = std::fs::read_to_string(path)?;
    parse_lut(&text, renormalize)
}

pub fn parse_lut<T: Scalar>(text: &str, renormalize: bool) -> Result<LoadedLut<T>> {
    let err = |line: usize, msg: String| Error::Lut { line, msg };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == LUT_HEADER => {}
        Some((n, h)) => return Err(err(n + 1, format!("expected header '{LUT_HEADER}', found '{h}'"))),
        None => return Err(err(1, "empty file".into())),
    }

    let mut rows: Vec<(usize, f64, f64, String, usize)> = Vec::new();
    for (n, line) in lines {
        let n = n + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(err(n, format!("expected 4 fields, found {}", fields.len())));
        }
        let index: usize = fields[0].parse().map_err(|_| err(n, format!("bad index '{}'", fields[0])))?;
        let re: f64 = fields[1].parse().map_err(|_| err(n, format!("bad re '{}'", fields[1])))?;
        let im: f64 = fields[2].parse().map_err(|_| err(n, format!("bad im '{}'", fields[2])))?;
        if !re.is_finite() || !im.is_finite() {
            return Err(err(n, "non-finite coordinate".into()));
        }
        rows.push((index, re, im, fields[3].to_string(), n));
    }
    let order = rows.len();
    let bits = log2_order(order).map_err(|e| err(0, e.to_string()))?;

    let mut points = vec![None; order];
    let mut labels = vec![None; order];
    for (index, re, im, label, n) in &rows {
        if *index >= order {
            return Err(err(*n, format!("index {index} out of range for {order} points")));
        }
        if points[*index].is_some() {
            return Err(err(*n, format!("duplicate index {index}")));
        }
        points[*index] = Some(Cplx::new(T::of(*re), T::of(*im)));
        if !label.is_empty() {
            if label.len() != bits || !label.chars().all(|c| c == '0' || c == '1') {
                return Err(err(*n, format!("label '{label}' is not a {bits}-bit binary string")));
            }
            labels[*index] = Some((u32::from_str_radix(label, 2).unwrap(), *n));
        }
    }
    let points: Vec<Cplx<T>> = points.into_iter().map(Option::unwrap).collect();

    let labeled = labels.iter().filter(|l| l.is_some()).count();
    let labeling = if labeled == 0 {
        None
    } else if labeled < order {
        return Err(err(0, "either every row or no row must carry a label".into()));
    } else {
        let mut seen = vec![None; order];
        for (label, n) in labels.iter().flatten() {
            if let Some(first) = seen[*label as usize] {
                return Err(err(*n, format!("duplicate label (first used on line {first})")));
            }
            seen[*label as usize] = Some(*n);
        }
        Some(BitLabeling::new(labels.iter().map(|l| l.unwrap().0).collect())?)
    };

    let power = mean_power(&points).to_f64_lossy();
    let off = (power - 1.0).abs() > POWER_TOLERANCE;
    if off && !renormalize {
        return Err(err(0, format!("mean power {power} is not 1; pass the renormalize flag to rescale")));
    }
    let constellation = if off {
        warn!("LUT mean power {power:.6} renormalized to 1");
        normalize(&points)?
    } else {
        // keep the stored values bit-exact
        if points.iter().all(|p| p.norm_sqr() == T::zero()) {
            return Err(Error::ZeroConstellation);
        }
        Constellation {
            points,
            bits_per_symbol: bits,
        }
    };
    debug_assert!(Float::abs(constellation.mean_power() - T::one()) < T::of(1e-4));
    Ok(LoadedLut {
        constellation,
        labeling,
        file_mean_power: power,
        renormalized: off,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::{moments, square_qam};

    #[test]
    fn qam64_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("qam64.csv");
        let (c, l) = square_qam::<f64>(64).unwrap();
        save_lut(&c, Some(&l), &path).unwrap();
        let back = load_lut::<f64>(&path, false).unwrap();
        assert_eq!(back.constellation.points(), c.points());
        assert_eq!(back.labeling.as_ref(), Some(&l));
        assert!(!back.renormalized);
    }

    #[test]
    fn header_and_label_format() {
        let (c, l) = square_qam::<f64>(4).unwrap();
        let s = lut_to_string(&c, Some(&l)).unwrap();
        let mut lines = s.lines();
        assert_eq!(lines.next(), Some(LUT_HEADER));
        let first = lines.next().unwrap();
        assert!(first.starts_with("0,-7.07106781186547"), "{first}");
        assert!(first.ends_with(",00"));
    }

    #[test]
    fn external_table_is_renormalized_on_request() {
        // coarse, unnormalized table as supplied from elsewhere
        let text = "index,re,im,label_bits\n0,1,1,00\n1,-1,1,01\n2,-1,-1,11\n3,1,-1,10\n";
        assert!(parse_lut::<f64>(text, false).is_err());
        let lut = parse_lut::<f64>(text, true).unwrap();
        assert!(lut.renormalized);
        assert!((lut.file_mean_power - 2.0).abs() < 1e-15);
        assert!((lut.constellation.mean_power() - 1.0).abs() < 1e-12);
        assert!((moments(&lut.constellation).mu4 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicate_label_is_an_error() {
        let s = 0.5f64.sqrt();
        let text = format!("index,re,im,label_bits\n0,{s},{s},00\n1,-{s},{s},01\n2,-{s},-{s},01\n3,{s},-{s},10\n");
        match parse_lut::<f64>(&text, true) {
            Err(Error::Lut { line, msg }) => {
                assert_eq!(line, 4);
                assert!(msg.contains("duplicate label"));
            }
            other => panic!("expected LUT error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_rows_report_line() {
        let text = "index,re,im,label_bits\n0,1,1,00\n1,abc,1,01\n";
        match parse_lut::<f64>(text, true) {
            Err(Error::Lut { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(parse_lut::<f64>("re,im\n", true).is_err());
        assert!(parse_lut::<f64>("index,re,im,label_bits\n0,1,0,\n1,-1,0,\n2,0,1,\n", true).is_err());
    }

    #[test]
    fn unlabeled_tables_load() {
        let text = "index,re,im,label_bits\n0,1,0,\n1,-1,0,\n";
        let lut = parse_lut::<f64>(text, false).unwrap();
        assert!(lut.labeling.is_none());
        assert_eq!(lut.constellation.order(), 2);
    }
}
