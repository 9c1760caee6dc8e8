use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};

use crate::rng::{self, SimRng};
use crate::{Error, Result, Scalar};

/// Negative-side slope of the leaky ReLU.
pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Linear,
    LeakyRelu,
    Relu,
    Softmax,
    Sigmoid,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::LeakyRelu => "leaky_relu",
            Activation::Relu => "relu",
            Activation::Softmax => "softmax",
            Activation::Sigmoid => "sigmoid",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "linear" => Activation::Linear,
            "leaky_relu" => Activation::LeakyRelu,
            "relu" => Activation::Relu,
            "softmax" => Activation::Softmax,
            "sigmoid" => Activation::Sigmoid,
            _ => return None,
        })
    }

    fn output_only(self) -> bool {
        matches!(self, Activation::Softmax | Activation::Sigmoid)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub inputs: usize,
    pub outputs: usize,
    pub bias: bool,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(inputs: usize, outputs: usize, bias: bool, activation: Activation) -> Self {
        Self {
            inputs,
            outputs,
            bias,
            activation,
        }
    }
}

/// Dense layer computing `act(x W + b)` on row-major batches.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    /// `inputs x outputs`
    pub weights: Array2<T>,
    pub bias: Option<Array1<T>>,
    pub activation: Activation,
}

impl<T: Scalar> Layer<T> {
    pub fn spec(&self) -> LayerSpec {
        LayerSpec::new(self.weights.nrows(), self.weights.ncols(), self.bias.is_some(), self.activation)
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.as_ref().map_or(0, |b| b.len())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    layers: Vec<Layer<T>>,
}

/// Activations retained by [`Mlp::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    /// Input of every layer; `inputs[0]` is the network input.
    pub inputs: Vec<Array2<T>>,
    /// Pre-activation of every layer.
    pub preacts: Vec<Array2<T>>,
    pub output: Array2<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad<T> {
    pub weights: Array2<T>,
    pub bias: Option<Array1<T>>,
}

pub type MlpGrads<T> = Vec<LayerGrad<T>>;

fn activate<T: Scalar>(z: &Array2<T>, act: Activation) -> Array2<T> {
    match act {
        Activation::Linear => z.clone(),
        Activation::Relu => z.mapv(|v| v.max(T::zero())),
        Activation::LeakyRelu => {
            let s = T::of(LEAKY_SLOPE);
            z.mapv(|v| if v > T::zero() { v } else { s * v })
        }
        Activation::Sigmoid => z.mapv(|v| {
            if v >= T::zero() {
                T::one() / (T::one() + (-v).exp())
            } else {
                let e = v.exp();
                e / (T::one() + e)
            }
        }),
        Activation::Softmax => {
            let mut out = z.clone();
            for mut row in out.rows_mut() {
                let max = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
                row.mapv_inplace(|v| (v - max).exp());
                let sum = row.sum();
                row.mapv_inplace(|v| v / sum);
            }
            out
        }
    }
}

/// Multiplies `grad` in place by the derivative of a hidden activation.
fn hidden_derivative<T: Scalar>(grad: &mut Array2<T>, z: &Array2<T>, act: Activation) -> Result<()> {
    match act {
        Activation::Linear => {}
        Activation::Relu => Zip::from(grad).and(z).for_each(|g, &v| {
            if v <= T::zero() {
                *g = T::zero();
            }
        }),
        Activation::LeakyRelu => {
            let s = T::of(LEAKY_SLOPE);
            Zip::from(grad).and(z).for_each(|g, &v| {
                if v <= T::zero() {
                    *g *= s;
                }
            })
        }
        Activation::Softmax | Activation::Sigmoid => {
            return Err(Error::InvalidParameter(format!("{} is only allowed on the output layer", act.name())))
        }
    }
    Ok(())
}

impl<T: Scalar> Mlp<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParameter("network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if let Some(b) = &l.bias {
                if b.len() != l.weights.ncols() {
                    return Err(Error::InvalidParameter(format!("layer {i}: bias length {} != {}", b.len(), l.weights.ncols())));
                }
            }
            if l.activation.output_only() && i + 1 != layers.len() {
                return Err(Error::InvalidParameter(format!("layer {i}: {} only allowed on the output layer", l.activation.name())));
            }
            if i > 0 && layers[i - 1].weights.ncols() != l.weights.nrows() {
                return Err(Error::InvalidParameter(format!(
                    "layer {i}: expects {} inputs, previous layer has {} outputs",
                    l.weights.nrows(),
                    layers[i - 1].weights.ncols()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn zeros(specs: &[LayerSpec]) -> Result<Self> {
        Self::new(
            specs
                .iter()
                .map(|s| Layer {
                    weights: Array2::zeros((s.inputs, s.outputs)),
                    bias: s.bias.then(|| Array1::zeros(s.outputs)),
                    activation: s.activation,
                })
                .collect(),
        )
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().unwrap().weights.ncols()
    }

    /// Number of trainable weights and biases.
    pub fn weight_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn forward(&self, x: ArrayView2<T>) -> Result<ForwardCache<T>> {
        if x.ncols() != self.inputs() {
            return Err(Error::LengthMismatch {
                what: "network input width",
                expected: self.inputs(),
                actual: x.ncols(),
            });
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut preacts = Vec::with_capacity(self.layers.len());
        let mut a = x.to_owned();
        for l in &self.layers {
            let mut z = a.dot(&l.weights);
            if let Some(b) = &l.bias {
                z += b;
            }
            let next = activate(&z, l.activation);
            inputs.push(a);
            preacts.push(z);
            a = next;
        }
        Ok(ForwardCache {
            inputs,
            preacts,
            output: a,
        })
    }

    /// Output only.
    pub fn predict(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        Ok(self.forward(x)?.output)
    }

    /// Reverse pass. `grad_last` is the gradient of the scalar loss with
    /// respect to the pre-activation of the output layer (for softmax and
    /// sigmoid outputs the loss module provides it fused). Returns parameter
    /// gradients and, if `input_grad`, the gradient with respect to the input.
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        grad_last: Array2<T>,
        input_grad: bool,
    ) -> Result<(MlpGrads<T>, Option<Array2<T>>)> {
        let n = self.layers.len();
        let mut grads = Vec::with_capacity(n);
        let mut dz = grad_last;
        let mut dx = None;
        for i in (0..n).rev() {
            let l = &self.layers[i];
            let dw = cache.inputs[i].t().dot(&dz);
            let db = l.bias.as_ref().map(|_| dz.sum_axis(Axis(0)));
            grads.push(LayerGrad { weights: dw, bias: db });
            if i > 0 || input_grad {
                let mut da = dz.dot(&l.weights.t());
                if i > 0 {
                    hidden_derivative(&mut da, &cache.preacts[i - 1], self.layers[i - 1].activation)?;
                    dz = da;
                } else {
                    dx = Some(da);
                }
            }
        }
        grads.reverse();
        Ok((grads, dx))
    }

    /// Parameters flattened layer by layer: weights row-major, then bias.
    pub fn params_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.weight_count());
        for l in &self.layers {
            out.extend(l.weights.iter().copied());
            if let Some(b) = &l.bias {
                out.extend(b.iter().copied());
            }
        }
        out
    }

    pub fn set_params_flat(&mut self, p: &[T]) -> Result<()> {
        if p.len() != self.weight_count() {
            return Err(Error::LengthMismatch {
                what: "parameter vector",
                expected: self.weight_count(),
                actual: p.len(),
            });
        }
        let mut k = 0;
        for l in &mut self.layers {
            for w in l.weights.iter_mut() {
                *w = p[k];
                k += 1;
            }
            if let Some(b) = &mut l.bias {
                for w in b.iter_mut() {
                    *w = p[k];
                    k += 1;
                }
            }
        }
        Ok(())
    }
}

pub fn flatten_grads<T: Scalar>(grads: &MlpGrads<T>, out: &mut Vec<T>) {
    for g in grads {
        out.extend(g.weights.iter().copied());
        if let Some(b) = &g.bias {
            out.extend(b.iter().copied());
        }
    }
}

/// Glorot-uniform weights `U(-sqrt(6/(fan_in+fan_out)), +...)`, zero biases.
pub fn glorot_init<T: Scalar>(specs: &[LayerSpec], rng: &mut SimRng) -> Result<Mlp<T>> {
    let mut net = Mlp::zeros(specs)?;
    for l in net.layers_mut() {
        let (fi, fo) = l.weights.dim();
        let limit = (6.0 / (fi + fo) as f64).sqrt();
        for w in l.weights.iter_mut() {
            *w = T::of(limit * rng::uniform_symmetric(rng));
        }
    }
    Ok(net)
}
