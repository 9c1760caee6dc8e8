//! Plain-text autoencoder checkpoints.
//!
//! ```text
//! gcs-autoencoder v1
//! mode mi
//! order 16
//! net encoder 1
//! layer 16 2 nobias linear
//! w <inputs*outputs values, row-major>
//! net decoder 2
//! layer 2 8 bias leaky_relu
//! w ...
//! b ...
//! ```
//!
//! Values are written with 17 significant digits so a round trip is exact.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::autoencoder::{Autoencoder, Mode};
use super::mlp::{Activation, Layer, Mlp};
use crate::{Error, Result, Scalar};

pub const CHECKPOINT_MAGIC: &str = "gcs-autoencoder v1";

fn write_values<T: Scalar>(out: &mut String, tag: &str, values: impl Iterator<Item = T>) {
    out.push_str(tag);
    for v in values {
        let _ = write!(out, " {:.17e}", v.to_f64_lossy());
    }
    out.push('\n');
}

fn write_net<T: Scalar>(out: &mut String, name: &str, net: &Mlp<T>) {
    let _ = writeln!(out, "net {name} {}", net.layers().len());
    for l in net.layers() {
        let s = l.spec();
        let _ = writeln!(
            out,
            "layer {} {} {} {}",
            s.inputs,
            s.outputs,
            if s.bias { "bias" } else { "nobias" },
            s.activation.name()
        );
        write_values(out, "w", l.weights.iter().copied());
        if let Some(b) = &l.bias {
            write_values(out, "b", b.iter().copied());
        }
    }
}

pub fn autoencoder_to_string<T: Scalar>(ae: &Autoencoder<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{CHECKPOINT_MAGIC}");
    let _ = writeln!(out, "mode {}", ae.mode().name());
    let _ = writeln!(out, "order {}", ae.order());
    write_net(&mut out, "encoder", &ae.encoder);
    write_net(&mut out, "decoder", &ae.decoder);
    out
}

pub fn save_autoencoder<T: Scalar>(ae: &Autoencoder<T>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, autoencoder_to_string(ae))?;
    Ok(())
}

pub fn load_autoencoder<T: Scalar>(path: impl AsRef<Path>) -> Result<Autoencoder<T>> {
    parse_autoencoder(&std::fs::read_to_string(path)?)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Checkpoint {
            line: self.line,
            msg: msg.into(),
        }
    }

    /// Next non-blank line split into its keyword and remaining fields.
    fn next(&mut self, keyword: &str) -> Result<Vec<&'a str>> {
        for (i, l) in self.inner.by_ref() {
            self.line = i + 1;
            let l = l.trim();
            if l.is_empty() {
                continue;
            }
            let mut f = l.split_whitespace();
            let k = f.next().unwrap_or_default();
            if k != keyword {
                return Err(self.err(format!("expected `{keyword}`, found `{k}`")));
            }
            return Ok(f.collect());
        }
        self.line += 1;
        Err(self.err(format!("unexpected end of file, expected `{keyword}`")))
    }

    fn usize_field(&self, s: &str) -> Result<usize> {
        s.parse().map_err(|_| self.err(format!("invalid integer `{s}`")))
    }

    fn values<T: Scalar>(&mut self, keyword: &str, n: usize) -> Result<Vec<T>> {
        let f = self.next(keyword)?;
        if f.len() != n {
            return Err(self.err(format!("expected {n} values, found {}", f.len())));
        }
        f.iter()
            .map(|s| {
                let v: f64 = s.parse().map_err(|_| self.err(format!("invalid number `{s}`")))?;
                if !v.is_finite() {
                    return Err(self.err(format!("non-finite value `{s}`")));
                }
                Ok(T::of(v))
            })
            .collect()
    }

    fn net<T: Scalar>(&mut self, name: &str) -> Result<Mlp<T>> {
        let f = self.next("net")?;
        if f.len() != 2 || f[0] != name {
            return Err(self.err(format!("expected `net {name} <layers>`")));
        }
        let count = self.usize_field(f[1])?;
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let f = self.next("layer")?;
            if f.len() != 4 {
                return Err(self.err("expected `layer <in> <out> <bias|nobias> <activation>`"));
            }
            let (i, o) = (self.usize_field(f[0])?, self.usize_field(f[1])?);
            let bias = match f[2] {
                "bias" => true,
                "nobias" => false,
                other => return Err(self.err(format!("invalid bias flag `{other}`"))),
            };
            let activation = Activation::from_name(f[3]).ok_or_else(|| self.err(format!("unknown activation `{}`", f[3])))?;
            let w = self.values::<T>("w", i * o)?;
            let weights = Array2::from_shape_vec((i, o), w).map_err(|e| self.err(e.to_string()))?;
            let bias = if bias { Some(Array1::from(self.values::<T>("b", o)?)) } else { None };
            layers.push(Layer {
                weights,
                bias,
                activation,
            });
        }
        Mlp::new(layers).map_err(|e| self.err(e.to_string()))
    }
}

pub fn parse_autoencoder<T: Scalar>(text: &str) -> Result<Autoencoder<T>> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let header = lines.inner.next().map(|(_, l)| l.trim());
    lines.line = 1;
    if header != Some(CHECKPOINT_MAGIC) {
        return Err(lines.err(format!("missing `{CHECKPOINT_MAGIC}` header")));
    }
    let f = lines.next("mode")?;
    let mode = match f.as_slice() {
        ["mi"] => Mode::Mi,
        ["gmi"] => Mode::Gmi,
        _ => return Err(lines.err("expected `mode mi` or `mode gmi`")),
    };
    let f = lines.next("order")?;
    if f.len() != 1 {
        return Err(lines.err("expected `order <M>`"));
    }
    let order = lines.usize_field(f[0])?;
    let encoder = lines.net("encoder")?;
    let decoder = lines.net("decoder")?;
    let end = lines.line;
    Autoencoder::new(mode, order, encoder, decoder).map_err(|e| Error::Checkpoint {
        line: end,
        msg: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn round_trip_is_exact() {
        let ae = Autoencoder::<f64>::gmi_glorot_with_width(16, 6, &mut rng::seeded(1)).unwrap();
        let back: Autoencoder<f64> = parse_autoencoder(&autoencoder_to_string(&ae)).unwrap();
        assert_eq!(back, ae);
        let mi = Autoencoder::<f32>::mi_glorot(32, &mut rng::seeded(2)).unwrap();
        let back: Autoencoder<f32> = parse_autoencoder(&autoencoder_to_string(&mi)).unwrap();
        assert_eq!(back, mi);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ae.txt");
        let ae = Autoencoder::<f64>::mi_glorot(8, &mut rng::seeded(3)).unwrap();
        save_autoencoder(&ae, &p).unwrap();
        assert_eq!(load_autoencoder::<f64>(&p).unwrap(), ae);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let ae = Autoencoder::<f64>::mi_glorot(4, &mut rng::seeded(4)).unwrap();
        let text = autoencoder_to_string(&ae);
        let bad = text.replacen("linear", "tanh", 1);
        match parse_autoencoder::<f64>(&bad) {
            Err(Error::Checkpoint { line: 5, .. }) => {}
            other => panic!("{other:?}"),
        }
        let truncated: String = text.lines().take(6).map(|l| format!("{l}\n")).collect();
        assert!(matches!(parse_autoencoder::<f64>(&truncated), Err(Error::Checkpoint { line: 7, .. })));
        assert!(matches!(parse_autoencoder::<f64>("hello\n"), Err(Error::Checkpoint { line: 1, .. })));
        let wrong_mode = text.replacen("mode mi", "mode gmi", 1);
        assert!(parse_autoencoder::<f64>(&wrong_mode).is_err());
    }
}
