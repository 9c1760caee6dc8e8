use ndarray::{Array2, Axis};

use super::loss;
use super::mlp::{flatten_grads, glorot_init, Activation, ForwardCache, LayerSpec, Mlp, MlpGrads};
use crate::constellation::{log2_order, BitLabeling, Constellation};
use crate::rng::SimRng;
use crate::{Cplx, Error, Result, Scalar};

/// Optimization target: symbol-wise MI (one-hot input, softmax decoder,
/// categorical CE) or bit-wise GMI (bit input, sigmoid decoder, binary CE).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Mi,
    Gmi,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Mi => "mi",
            Mode::Gmi => "gmi",
        }
    }
}

/// Encoder network, normalization and decoder network of an end-to-end
/// constellation learner.
#[derive(Clone, Debug, PartialEq)]
pub struct Autoencoder<T> {
    mode: Mode,
    order: usize,
    pub encoder: Mlp<T>,
    pub decoder: Mlp<T>,
}

/// Encoder evaluated on all `M` inputs.
#[derive(Clone, Debug)]
pub struct EncoderPass<T> {
    pub cache: ForwardCache<T>,
    /// `1 / sqrt(mean |raw|^2)`
    pub scale: T,
    pub points: Vec<Cplx<T>>,
}

#[derive(Clone, Debug)]
pub struct AutoencoderGrads<T> {
    pub encoder: MlpGrads<T>,
    pub decoder: MlpGrads<T>,
}

impl<T: Scalar> AutoencoderGrads<T> {
    /// Same ordering as [`Autoencoder::params_flat`].
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::new();
        flatten_grads(&self.encoder, &mut out);
        flatten_grads(&self.decoder, &mut out);
        out
    }
}

impl<T: Scalar> Autoencoder<T> {
    pub fn new(mode: Mode, order: usize, encoder: Mlp<T>, decoder: Mlp<T>) -> Result<Self> {
        let m = log2_order(order)?;
        let (enc_in, dec_out, out_act) = match mode {
            Mode::Mi => (order, order, Activation::Softmax),
            Mode::Gmi => (m, m, Activation::Sigmoid),
        };
        let check = |what, expected, actual| {
            if expected != actual {
                Err(Error::LengthMismatch { what, expected, actual })
            } else {
                Ok(())
            }
        };
        check("encoder input", enc_in, encoder.inputs())?;
        check("encoder output", 2, encoder.outputs())?;
        check("decoder input", 2, decoder.inputs())?;
        check("decoder output", dec_out, decoder.outputs())?;
        if decoder.layers().last().unwrap().activation != out_act {
            return Err(Error::InvalidParameter(format!("{} decoder must end in {}", mode.name(), out_act.name())));
        }
        if encoder.layers().last().unwrap().activation != Activation::Linear {
            return Err(Error::InvalidParameter("encoder output must be linear".into()));
        }
        Ok(Self {
            mode,
            order,
            encoder,
            decoder,
        })
    }

    /// MI architecture: `M -> 2` linear encoder without bias; decoder
    /// `2 -> M/2` (leaky ReLU) `-> M` (softmax), both with bias.
    pub fn mi_specs(order: usize) -> (Vec<LayerSpec>, Vec<LayerSpec>) {
        (
            vec![LayerSpec::new(order, 2, false, Activation::Linear)],
            vec![
                LayerSpec::new(2, order / 2, true, Activation::LeakyRelu),
                LayerSpec::new(order / 2, order, true, Activation::Softmax),
            ],
        )
    }

    /// GMI architecture: four ReLU hidden layers of `width` on both sides,
    /// biases everywhere, linear encoder output and sigmoid decoder output.
    pub fn gmi_specs(order: usize, width: usize) -> Result<(Vec<LayerSpec>, Vec<LayerSpec>)> {
        let m = log2_order(order)?;
        let hidden = |first| {
            let mut v = vec![LayerSpec::new(first, width, true, Activation::Relu)];
            for _ in 0..3 {
                v.push(LayerSpec::new(width, width, true, Activation::Relu));
            }
            v
        };
        let mut enc = hidden(m);
        enc.push(LayerSpec::new(width, 2, true, Activation::Linear));
        let mut dec = hidden(2);
        dec.push(LayerSpec::new(width, m, true, Activation::Sigmoid));
        Ok((enc, dec))
    }

    pub fn mi_glorot(order: usize, rng: &mut SimRng) -> Result<Self> {
        log2_order(order)?;
        let (e, d) = Self::mi_specs(order);
        Self::new(Mode::Mi, order, glorot_init(&e, rng)?, glorot_init(&d, rng)?)
    }

    /// GMI architecture with 256-wide hidden layers.
    pub fn gmi_glorot(order: usize, rng: &mut SimRng) -> Result<Self> {
        Self::gmi_glorot_with_width(order, 256, rng)
    }

    pub fn gmi_glorot_with_width(order: usize, width: usize, rng: &mut SimRng) -> Result<Self> {
        let (e, d) = Self::gmi_specs(order, width)?;
        Self::new(Mode::Gmi, order, glorot_init(&e, rng)?, glorot_init(&d, rng)?)
    }

    pub fn glorot(mode: Mode, order: usize, rng: &mut SimRng) -> Result<Self> {
        match mode {
            Mode::Mi => Self::mi_glorot(order, rng),
            Mode::Gmi => Self::gmi_glorot(order, rng),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.order.trailing_zeros() as usize
    }

    pub fn weight_count(&self) -> usize {
        self.encoder.weight_count() + self.decoder.weight_count()
    }

    /// Labeling implied by the encoder input: point `i` is fed word `i` in
    /// GMI mode. MI-mode encoders carry no labeling.
    pub fn labeling(&self) -> Option<BitLabeling> {
        match self.mode {
            Mode::Mi => None,
            Mode::Gmi => Some(BitLabeling::natural(self.order).expect("power-of-two order")),
        }
    }

    /// Encoder input for symbol `index`: one-hot of size `M`, or its `m`
    /// bits (MSB first) as `{0, 1}` values.
    pub fn encoder_input_row(&self, index: usize) -> Vec<T> {
        match self.mode {
            Mode::Mi => (0..self.order).map(|j| if j == index { T::one() } else { T::zero() }).collect(),
            Mode::Gmi => {
                let m = self.bits_per_symbol();
                (0..m).map(|p| T::of_usize((index >> (m - 1 - p)) & 1)).collect()
            }
        }
    }

    /// All `M` distinct encoder inputs, row `i` for symbol `i`.
    pub fn encoder_inputs(&self) -> Array2<T> {
        let w = self.encoder.inputs();
        Array2::from_shape_fn((self.order, w), |(i, j)| self.encoder_input_row(i)[j])
    }

    /// Raw encoder output for one input vector, before normalization.
    pub fn encoder_forward(&self, input: &[T]) -> Result<Cplx<T>> {
        let x = Array2::from_shape_vec((1, input.len()), input.to_vec()).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let out = self.encoder.predict(x.view())?;
        Ok(Cplx::new(out[[0, 0]], out[[0, 1]]))
    }

    /// Runs the encoder over all `M` inputs and normalizes the result to unit
    /// mean power.
    pub fn encode(&self) -> Result<EncoderPass<T>> {
        let cache = self.encoder.forward(self.encoder_inputs().view())?;
        let raw = &cache.output;
        let power = raw.iter().map(|v| *v * *v).sum::<T>() / T::of_usize(self.order);
        if !(power > T::zero()) || !power.is_finite() {
            return Err(Error::Numerical(format!("encoder output power {power}")));
        }
        let scale = T::one() / power.sqrt();
        let points = raw.rows().into_iter().map(|r| Cplx::new(r[0] * scale, r[1] * scale)).collect();
        Ok(EncoderPass { cache, scale, points })
    }

    pub fn constellation(&self) -> Result<Constellation<T>> {
        Constellation::new(self.encode()?.points)
    }

    /// Backpropagates a gradient on the normalized points (as
    /// `dL/dRe + i dL/dIm`) through the normalization and the encoder.
    pub fn encoder_backward(&self, pass: &EncoderPass<T>, grad_points: &[Cplx<T>]) -> Result<MlpGrads<T>> {
        if grad_points.len() != self.order {
            return Err(Error::LengthMismatch {
                what: "constellation gradient",
                expected: self.order,
                actual: grad_points.len(),
            });
        }
        let raw = &pass.cache.output;
        let s = pass.scale;
        let dot: T = grad_points.iter().zip(raw.rows()).map(|(g, r)| g.re * r[0] + g.im * r[1]).sum();
        let k = s * s * s * dot / T::of_usize(self.order);
        let d_raw = Array2::from_shape_fn((self.order, 2), |(i, j)| {
            let g = if j == 0 { grad_points[i].re } else { grad_points[i].im };
            s * g - k * raw[[i, j]]
        });
        Ok(self.encoder.backward(&pass.cache, d_raw, false)?.0)
    }

    pub fn decoder_input(y: &[Cplx<T>]) -> Array2<T> {
        Array2::from_shape_fn((y.len(), 2), |(k, j)| if j == 0 { y[k].re } else { y[k].im })
    }

    /// Posterior outputs `s_k` for received symbols `y`.
    pub fn decode(&self, y: &[Cplx<T>]) -> Result<ForwardCache<T>> {
        self.decoder.forward(Self::decoder_input(y).view())
    }

    /// Decoder parameter gradients and the gradient on its complex inputs.
    pub fn decoder_backward(&self, cache: &ForwardCache<T>, grad_last: Array2<T>) -> Result<(MlpGrads<T>, Vec<Cplx<T>>)> {
        let (g, dx) = self.decoder.backward(cache, grad_last, true)?;
        let dx = dx.expect("input gradient requested");
        Ok((g, dx.rows().into_iter().map(|r| Cplx::new(r[0], r[1])).collect()))
    }

    /// Training targets for symbol indices: one-hot rows or bit rows.
    pub fn targets(&self, indices: &[usize]) -> Array2<T> {
        let w = self.decoder.outputs();
        let mut t = Array2::zeros((indices.len(), w));
        for (mut row, &i) in t.axis_iter_mut(Axis(0)).zip(indices) {
            for (dst, v) in row.iter_mut().zip(self.encoder_input_row(i)) {
                *dst = v;
            }
        }
        t
    }

    /// Batch loss in nats.
    pub fn loss(&self, targets: &Array2<T>, s: &Array2<T>) -> Result<T> {
        match self.mode {
            Mode::Mi => loss::categorical_ce(targets.view(), s.view()),
            Mode::Gmi => loss::binary_ce(targets.view(), s.view()),
        }
    }

    pub fn per_sample_loss(&self, targets: &Array2<T>, s: &Array2<T>) -> Result<Vec<T>> {
        match self.mode {
            Mode::Mi => loss::per_sample_categorical_ce(targets.view(), s.view()),
            Mode::Gmi => loss::per_sample_binary_ce(targets.view(), s.view()),
        }
    }

    /// Gradient of [`Self::loss`] with respect to the decoder output logits.
    pub fn loss_grad(&self, targets: &Array2<T>, s: &Array2<T>) -> Result<Array2<T>> {
        match self.mode {
            Mode::Mi => loss::categorical_ce_grad(targets.view(), s.view()),
            Mode::Gmi => loss::binary_ce_grad(targets.view(), s.view()),
        }
    }

    /// Decoder-based AIR estimate in bits from a loss value in nats.
    pub fn air_from_loss(&self, loss_nats: f64) -> f64 {
        match self.mode {
            Mode::Mi => crate::metrics::air_from_ce(loss_nats, self.bits_per_symbol()),
            Mode::Gmi => crate::metrics::air_from_ll(loss_nats, self.bits_per_symbol()),
        }
    }

    /// Encoder parameters followed by decoder parameters.
    pub fn params_flat(&self) -> Vec<T> {
        let mut p = self.encoder.params_flat();
        p.extend(self.decoder.params_flat());
        p
    }

    pub fn set_params_flat(&mut self, p: &[T]) -> Result<()> {
        let ne = self.encoder.weight_count();
        if p.len() != self.weight_count() {
            return Err(Error::LengthMismatch {
                what: "autoencoder parameters",
                expected: self.weight_count(),
                actual: p.len(),
            });
        }
        self.encoder.set_params_flat(&p[..ne])?;
        self.decoder.set_params_flat(&p[ne..])
    }

    pub fn cast<U: Scalar>(&self) -> Autoencoder<U> {
        let conv = |net: &Mlp<T>| {
            let mut out = Mlp::<U>::zeros(&net.specs()).expect("valid specs");
            let p: Vec<U> = net.params_flat().iter().map(|v| U::of(v.to_f64_lossy())).collect();
            out.set_params_flat(&p).expect("same shape");
            out
        };
        Autoencoder {
            mode: self.mode,
            order: self.order,
            encoder: conv(&self.encoder),
            decoder: conv(&self.decoder),
        }
    }
}
