//! Small convolutional embedding network with hand-written forward and
//! backward passes.
//!
//! Parameters of all layers live in one flat vector, laid out layer by layer
//! as `weights` then `biases`. Gradients use the same layout, so the
//! optimizer and the checkpoint format only ever see flat buffers.

pub mod checkpoint;
pub mod loss;
pub mod optim;
pub mod train;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::AddAssign;

use num_traits::{Float, FromPrimitive};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use loss::{triplet_loss, triplet_loss_grad};

/// Floating-point type the network computes in.
pub trait Real:
    Float + FromPrimitive + Sum + AddAssign + Default + Debug + Send + Sync + 'static
{
}

impl<T> Real for T where
    T: Float + FromPrimitive + Sum + AddAssign + Default + Debug + Send + Sync + 'static
{
}

fn real<T: Real>(v: f64) -> T {
    T::from_f64(v).expect("representable constant")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Linear {
        inputs: usize,
        outputs: usize,
    },
    Relu,
}

impl LayerSpec {
    fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => out_channels * in_channels * kernel * kernel + out_channels,
            LayerSpec::Linear { inputs, outputs } => inputs * outputs + outputs,
            LayerSpec::Relu => 0,
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                kernel,
                ..
            } => in_channels * kernel * kernel,
            LayerSpec::Linear { inputs, .. } => inputs,
            LayerSpec::Relu => 0,
        }
    }
}

/// Activation shape `(channels, height, width)`; fully connected layers
/// produce `(n, 1, 1)`.
pub type Shape = (usize, usize, usize);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Three stride-2 convolutions (50→25→13→7) then 1568→256→64→5.
    pub fn default_embedding() -> Self {
        let conv = |i, o, k, p| LayerSpec::Conv2d {
            in_channels: i,
            out_channels: o,
            kernel: k,
            stride: 2,
            padding: p,
        };
        let fc = |i, o| LayerSpec::Linear {
            inputs: i,
            outputs: o,
        };
        NetworkSpec {
            input: (1, 50, 50),
            layers: vec![
                conv(1, 8, 5, 2),
                LayerSpec::Relu,
                conv(8, 16, 3, 1),
                LayerSpec::Relu,
                conv(16, 32, 3, 1),
                LayerSpec::Relu,
                fc(32 * 7 * 7, 256),
                LayerSpec::Relu,
                fc(256, 64),
                LayerSpec::Relu,
                fc(64, 5),
            ],
        }
    }

    /// Output shape of every layer, checking that consecutive layers agree.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        let mut cur = self.input;
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            cur = match *layer {
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                } => {
                    if cur.0 != in_channels {
                        return Err(Error::contract(format!(
                            "layer {i}: conv expects {in_channels} channels, input has {}",
                            cur.0
                        )));
                    }
                    if kernel == 0
                        || stride == 0
                        || cur.1 + 2 * padding < kernel
                        || cur.2 + 2 * padding < kernel
                    {
                        return Err(Error::contract(format!("layer {i}: degenerate convolution")));
                    }
                    (
                        out_channels,
                        (cur.1 + 2 * padding - kernel) / stride + 1,
                        (cur.2 + 2 * padding - kernel) / stride + 1,
                    )
                }
                LayerSpec::Linear { inputs, outputs } => {
                    let flat = cur.0 * cur.1 * cur.2;
                    if flat != inputs {
                        return Err(Error::contract(format!(
                            "layer {i}: linear expects {inputs} inputs, previous layer gives {flat}"
                        )));
                    }
                    (outputs, 1, 1)
                }
                LayerSpec::Relu => cur,
            };
            out.push(cur);
        }
        Ok(out)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    pub fn input_len(&self) -> usize {
        self.input.0 * self.input.1 * self.input.2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T: Real = f32> {
    spec: NetworkSpec,
    shapes: Vec<Shape>,
    offsets: Vec<usize>,
    params: Vec<T>,
}

/// Per-layer activations of one sample, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Activations<T> {
    pub input: Vec<T>,
    pub layers: Vec<Vec<T>>,
}

impl<T> Activations<T> {
    pub fn output(&self) -> &[T] {
        self.layers.last().unwrap_or(&self.input)
    }
}

impl<T: Real> Network<T> {
    /// All-zero parameters.
    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        let n = spec.param_count();
        Self::from_params(spec, vec![T::zero(); n])
    }

    /// Fan-in scaled uniform initialization `U(-1/√fan_in, 1/√fan_in)` for
    /// weights and biases.
    pub fn init<R: Rng + ?Sized>(spec: NetworkSpec, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        for (i, layer) in net.spec.layers.clone().iter().enumerate() {
            let fan_in = layer.fan_in();
            if fan_in == 0 {
                continue;
            }
            let bound = 1.0 / (fan_in as f64).sqrt();
            let range = net.offsets[i]..net.offsets[i + 1];
            for p in &mut net.params[range] {
                *p = real(rng.random_range(-bound..bound));
            }
        }
        Ok(net)
    }

    pub fn from_params(spec: NetworkSpec, params: Vec<T>) -> Result<Self> {
        let shapes = spec.shapes()?;
        if params.len() != spec.param_count() {
            return Err(Error::contract(format!(
                "{} parameters for a network with {}",
                params.len(),
                spec.param_count()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::contract("non-finite network parameter"));
        }
        let mut offsets = Vec::with_capacity(spec.layers.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for l in &spec.layers {
            acc += l.param_count();
            offsets.push(acc);
        }
        Ok(Network {
            spec,
            shapes,
            offsets,
            params,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn output_dim(&self) -> usize {
        self.shapes.last().map_or(self.spec.input_len(), |s| s.0 * s.1 * s.2)
    }

    fn input_shape(&self, layer: usize) -> Shape {
        if layer == 0 {
            self.spec.input
        } else {
            self.shapes[layer - 1]
        }
    }

    fn check_input(&self, input: &[T]) -> Result<()> {
        if input.len() != self.spec.input_len() {
            return Err(Error::contract(format!(
                "input has {} values, network expects {:?}",
                input.len(),
                self.spec.input
            )));
        }
        Ok(())
    }

    /// Embedding of one input.
    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        self.check_input(input)?;
        let mut cur = input.to_vec();
        for i in 0..self.spec.layers.len() {
            cur = self.layer_forward(i, &cur);
        }
        Ok(cur)
    }

    /// Embeddings of a batch; identical to calling [`Network::forward`] per
    /// item.
    pub fn forward_batch(&self, inputs: &[&[T]]) -> Result<Vec<Vec<T>>> {
        inputs.iter().map(|x| self.forward(x)).collect()
    }

    /// Forward pass that keeps every layer's output.
    pub fn forward_trace(&self, input: &[T]) -> Result<Activations<T>> {
        self.check_input(input)?;
        let mut layers: Vec<Vec<T>> = Vec::with_capacity(self.spec.layers.len());
        for i in 0..self.spec.layers.len() {
            let next = self.layer_forward(i, layers.last().map_or(input, |v| v.as_slice()));
            layers.push(next);
        }
        Ok(Activations {
            input: input.to_vec(),
            layers,
        })
    }

    /// Accumulates `d(loss)/d(params)` into `grad` given `d(loss)/d(output)`.
    pub fn backward(&self, acts: &Activations<T>, grad_output: &[T], grad: &mut [T]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let mut upstream = grad_output.to_vec();
        for i in (0..self.spec.layers.len()).rev() {
            let input = if i == 0 {
                acts.input.as_slice()
            } else {
                acts.layers[i - 1].as_slice()
            };
            let output = &acts.layers[i];
            let range = self.offsets[i]..self.offsets[i + 1];
            upstream = self.layer_backward(i, input, output, &upstream, &mut grad[range], i > 0);
        }
    }

    fn layer_forward(&self, i: usize, input: &[T]) -> Vec<T> {
        let params = &self.params[self.offsets[i]..self.offsets[i + 1]];
        match self.spec.layers[i] {
            LayerSpec::Relu => input.iter().map(|&x| x.max(T::zero())).collect(),
            LayerSpec::Linear { inputs, outputs } => {
                let (w, b) = params.split_at(inputs * outputs);
                (0..outputs)
                    .map(|o| b[o] + dot(&w[o * inputs..(o + 1) * inputs], input))
                    .collect()
            }
            LayerSpec::Conv2d {
                out_channels,
                kernel,
                stride,
                padding,
                ..
            } => {
                let geom = ConvGeom::new(self.input_shape(i), self.shapes[i], kernel, stride, padding);
                let cols = geom.im2col(input);
                let (w, b) = params.split_at(out_channels * geom.rows());
                let pix = geom.out_pixels();
                let mut out = vec![T::zero(); out_channels * pix];
                for oc in 0..out_channels {
                    let dst = &mut out[oc * pix..(oc + 1) * pix];
                    dst.fill(b[oc]);
                    for r in 0..geom.rows() {
                        axpy(w[oc * geom.rows() + r], &cols[r * pix..(r + 1) * pix], dst);
                    }
                }
                out
            }
        }
    }

    /// Returns the gradient w.r.t. the layer input (empty when
    /// `need_input_grad` is false).
    fn layer_backward(
        &self,
        i: usize,
        input: &[T],
        output: &[T],
        upstream: &[T],
        grad: &mut [T],
        need_input_grad: bool,
    ) -> Vec<T> {
        let params = &self.params[self.offsets[i]..self.offsets[i + 1]];
        match self.spec.layers[i] {
            LayerSpec::Relu => upstream
                .iter()
                .zip(output)
                .map(|(&g, &y)| if y > T::zero() { g } else { T::zero() })
                .collect(),
            LayerSpec::Linear { inputs, outputs } => {
                let (w, _) = params.split_at(inputs * outputs);
                let (gw, gb) = grad.split_at_mut(inputs * outputs);
                for o in 0..outputs {
                    let g = upstream[o];
                    if g == T::zero() {
                        continue;
                    }
                    gb[o] += g;
                    axpy(g, input, &mut gw[o * inputs..(o + 1) * inputs]);
                }
                if !need_input_grad {
                    return Vec::new();
                }
                let mut gin = vec![T::zero(); inputs];
                for o in 0..outputs {
                    let g = upstream[o];
                    if g != T::zero() {
                        axpy(g, &w[o * inputs..(o + 1) * inputs], &mut gin);
                    }
                }
                gin
            }
            LayerSpec::Conv2d {
                out_channels,
                kernel,
                stride,
                padding,
                ..
            } => {
                let geom = ConvGeom::new(self.input_shape(i), self.shapes[i], kernel, stride, padding);
                let cols = geom.im2col(input);
                let rows = geom.rows();
                let pix = geom.out_pixels();
                let (w, _) = params.split_at(out_channels * rows);
                let (gw, gb) = grad.split_at_mut(out_channels * rows);
                let mut gcols = if need_input_grad {
                    vec![T::zero(); rows * pix]
                } else {
                    Vec::new()
                };
                for oc in 0..out_channels {
                    let g = &upstream[oc * pix..(oc + 1) * pix];
                    gb[oc] += g.iter().copied().sum::<T>();
                    for r in 0..rows {
                        gw[oc * rows + r] += dot(g, &cols[r * pix..(r + 1) * pix]);
                        if need_input_grad {
                            axpy(w[oc * rows + r], g, &mut gcols[r * pix..(r + 1) * pix]);
                        }
                    }
                }
                if need_input_grad {
                    geom.col2im(&gcols)
                } else {
                    Vec::new()
                }
            }
        }
    }
}

/// Index bookkeeping for one convolution.
struct ConvGeom {
    in_shape: Shape,
    out_h: usize,
    out_w: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
}

impl ConvGeom {
    fn new(in_shape: Shape, out_shape: Shape, kernel: usize, stride: usize, padding: usize) -> Self {
        ConvGeom {
            in_shape,
            out_h: out_shape.1,
            out_w: out_shape.2,
            kernel,
            stride,
            padding,
        }
    }

    /// Rows of the unfolded matrix: one per (channel, ky, kx).
    fn rows(&self) -> usize {
        self.in_shape.0 * self.kernel * self.kernel
    }

    fn out_pixels(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Source index for unfolded row `r` and output pixel `(oy, ox)`, or
    /// `None` inside the zero padding.
    #[inline]
    fn source(&self, r: usize, oy: usize, ox: usize) -> Option<usize> {
        let (_, h, w) = self.in_shape;
        let k2 = self.kernel * self.kernel;
        let (c, ky, kx) = (r / k2, (r % k2) / self.kernel, r % self.kernel);
        let y = (oy * self.stride + ky).checked_sub(self.padding)?;
        let x = (ox * self.stride + kx).checked_sub(self.padding)?;
        (y < h && x < w).then(|| (c * h + y) * w + x)
    }

    fn im2col<T: Real>(&self, input: &[T]) -> Vec<T> {
        let pix = self.out_pixels();
        let mut cols = vec![T::zero(); self.rows() * pix];
        for r in 0..self.rows() {
            for oy in 0..self.out_h {
                for ox in 0..self.out_w {
                    if let Some(s) = self.source(r, oy, ox) {
                        cols[r * pix + oy * self.out_w + ox] = input[s];
                    }
                }
            }
        }
        cols
    }

    fn col2im<T: Real>(&self, cols: &[T]) -> Vec<T> {
        let (c, h, w) = self.in_shape;
        let pix = self.out_pixels();
        let mut out = vec![T::zero(); c * h * w];
        for r in 0..self.rows() {
            for oy in 0..self.out_h {
                for ox in 0..self.out_w {
                    if let Some(s) = self.source(r, oy, ox) {
                        out[s] += cols[r * pix + oy * self.out_w + ox];
                    }
                }
            }
        }
        out
    }
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
