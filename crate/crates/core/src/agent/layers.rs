//! Layer wrappers owning their weights, plus the conv-stack encoder shape
//! shared by the audio, fusion, and depth encoders.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{
    conv2d_backward, conv2d_forward, linear_backward, linear_forward, relu_backward,
    relu_forward, resize_nearest_backward, resize_nearest_forward, tconv2d_backward,
    tconv2d_forward, NnError, Tensor,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub kernels: Tensor,
    pub bias: Tensor,
    pub stride: (usize, usize),
}

impl ConvLayer {
    pub fn init(
        in_ch: usize,
        out_ch: usize,
        k: (usize, usize),
        stride: (usize, usize),
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = (in_ch * k.0 * k.1) as f64;
        ConvLayer {
            kernels: Tensor::randn(&[out_ch, in_ch, k.0, k.1], (2.0 / fan_in).sqrt(), rng),
            bias: Tensor::zeros(&[out_ch]),
            stride,
        }
    }

    pub fn zeros_like(&self) -> Self {
        ConvLayer {
            kernels: self.kernels.zeros_like(),
            bias: self.bias.zeros_like(),
            stride: self.stride,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        conv2d_forward(x, &self.kernels, &self.bias, self.stride)
    }

    /// Accumulates weight gradients into `grads`, returns the input grad.
    pub fn backward(
        &self,
        grad_out: &Tensor,
        x: &Tensor,
        grads: &mut ConvLayer,
    ) -> Result<Tensor, NnError> {
        let (gi, gk, gb) = conv2d_backward(grad_out, x, &self.kernels, self.stride)?;
        grads.kernels.add_scaled(&gk, 1.0);
        grads.bias.add_scaled(&gb, 1.0);
        Ok(gi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TconvLayer {
    pub kernels: Tensor,
    pub bias: Tensor,
    pub stride: (usize, usize),
}

impl TconvLayer {
    pub fn init(
        in_ch: usize,
        out_ch: usize,
        k: (usize, usize),
        stride: (usize, usize),
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = (in_ch * k.0 * k.1) as f64;
        TconvLayer {
            kernels: Tensor::randn(&[in_ch, out_ch, k.0, k.1], (2.0 / fan_in).sqrt(), rng),
            bias: Tensor::zeros(&[out_ch]),
            stride,
        }
    }

    pub fn zeros_like(&self) -> Self {
        TconvLayer {
            kernels: self.kernels.zeros_like(),
            bias: self.bias.zeros_like(),
            stride: self.stride,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        tconv2d_forward(x, &self.kernels, &self.bias, self.stride)
    }

    pub fn backward(
        &self,
        grad_out: &Tensor,
        x: &Tensor,
        grads: &mut TconvLayer,
    ) -> Result<Tensor, NnError> {
        let (gi, gk, gb) = tconv2d_backward(grad_out, x, &self.kernels, self.stride)?;
        grads.kernels.add_scaled(&gk, 1.0);
        grads.bias.add_scaled(&gb, 1.0);
        Ok(gi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearLayer {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl LinearLayer {
    pub fn init(n_in: usize, n_out: usize, rng: &mut impl Rng) -> Self {
        LinearLayer {
            weight: Tensor::randn(&[n_out, n_in], (1.0 / n_in as f64).sqrt(), rng),
            bias: Tensor::zeros(&[n_out]),
        }
    }

    pub fn zeros_like(&self) -> Self {
        LinearLayer { weight: self.weight.zeros_like(), bias: self.bias.zeros_like() }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        linear_forward(x, &self.weight, &self.bias)
    }

    pub fn backward(
        &self,
        grad_out: &[f64],
        x: &[f64],
        grads: &mut LinearLayer,
    ) -> Result<Vec<f64>, NnError> {
        let (gx, gw, gb) = linear_backward(grad_out, x, &self.weight)?;
        grads.weight.add_scaled(&gw, 1.0);
        grads.bias.add_scaled(&gb, 1.0);
        Ok(gx)
    }
}

fn relu_tensor(t: &Tensor) -> Tensor {
    Tensor::from_vec(t.shape(), relu_forward(t.data()))
}

fn relu_tensor_backward(grad: &Tensor, pre: &Tensor) -> Tensor {
    Tensor::from_vec(pre.shape(), relu_backward(grad.data(), pre.data()))
}

/// Conv layers with ReLU after each, flattened into an affine embedding
/// with a final ReLU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvStackEncoder {
    pub convs: Vec<ConvLayer>,
    pub fc: LinearLayer,
}

#[derive(Debug, Clone)]
pub struct ConvStackCache {
    /// Input to conv `i` (post-ReLU of the previous layer).
    inputs: Vec<Tensor>,
    /// Pre-ReLU output of conv `i`.
    pre_relu: Vec<Tensor>,
    /// Flattened input to the affine layer.
    flat: Vec<f64>,
    /// Pre-ReLU affine output.
    fc_pre: Vec<f64>,
}

impl ConvStackEncoder {
    pub fn forward(&self, x: &Tensor) -> Result<(Vec<f64>, ConvStackCache), NnError> {
        let mut inputs = Vec::with_capacity(self.convs.len());
        let mut pre_relu = Vec::with_capacity(self.convs.len());
        let mut cur = x.clone();
        for conv in &self.convs {
            let pre = conv.forward(&cur)?;
            inputs.push(cur);
            cur = relu_tensor(&pre);
            pre_relu.push(pre);
        }
        let flat = cur.data().to_vec();
        let fc_pre = self.fc.forward(&flat)?;
        let out = relu_forward(&fc_pre);
        Ok((out, ConvStackCache { inputs, pre_relu, flat, fc_pre }))
    }

    /// Returns the gradient w.r.t. the stack input.
    pub fn backward(
        &self,
        grad_out: &[f64],
        cache: &ConvStackCache,
        grads: &mut ConvStackEncoder,
    ) -> Result<Tensor, NnError> {
        let g_fc = relu_backward(grad_out, &cache.fc_pre);
        let g_flat = self.fc.backward(&g_fc, &cache.flat, &mut grads.fc)?;
        let last_shape = cache.pre_relu.last().expect("stack has layers").shape();
        let mut g = Tensor::from_vec(last_shape, g_flat);
        for i in (0..self.convs.len()).rev() {
            let g_pre = relu_tensor_backward(&g, &cache.pre_relu[i]);
            g = self.convs[i].backward(&g_pre, &cache.inputs[i], &mut grads.convs[i])?;
        }
        Ok(g)
    }

    pub fn zeros_like(&self) -> Self {
        ConvStackEncoder {
            convs: self.convs.iter().map(|c| c.zeros_like()).collect(),
            fc: self.fc.zeros_like(),
        }
    }
}

/// Spatial audio encoder layer: plain or transposed convolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SpatialLayer {
    Conv(ConvLayer),
    Tconv(TconvLayer),
}

impl SpatialLayer {
    fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        match self {
            SpatialLayer::Conv(c) => c.forward(x),
            SpatialLayer::Tconv(t) => t.forward(x),
        }
    }

    fn backward(
        &self,
        grad_out: &Tensor,
        x: &Tensor,
        grads: &mut SpatialLayer,
    ) -> Result<Tensor, NnError> {
        match (self, grads) {
            (SpatialLayer::Conv(c), SpatialLayer::Conv(g)) => c.backward(grad_out, x, g),
            (SpatialLayer::Tconv(t), SpatialLayer::Tconv(g)) => t.backward(grad_out, x, g),
            _ => unreachable!("gradient layout mirrors the parameter layout"),
        }
    }

    pub fn zeros_like(&self) -> Self {
        match self {
            SpatialLayer::Conv(c) => SpatialLayer::Conv(c.zeros_like()),
            SpatialLayer::Tconv(t) => SpatialLayer::Tconv(t.zeros_like()),
        }
    }
}

/// Upscaling stack mapping the spectrogram into geometric-map space:
/// (transposed) convolutions with ReLU, then nearest-neighbor alignment to
/// the exact map size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialEncoder {
    pub layers: Vec<SpatialLayer>,
    pub target: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct SpatialCache {
    inputs: Vec<Tensor>,
    pre_relu: Vec<Tensor>,
    pre_resize_shape: Vec<usize>,
}

impl SpatialEncoder {
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, SpatialCache), NnError> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_relu = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            let pre = layer.forward(&cur)?;
            inputs.push(cur);
            cur = relu_tensor(&pre);
            pre_relu.push(pre);
        }
        let pre_resize_shape = cur.shape().to_vec();
        let out = resize_nearest_forward(&cur, self.target.0, self.target.1)?;
        Ok((out, SpatialCache { inputs, pre_relu, pre_resize_shape }))
    }

    pub fn backward(
        &self,
        grad_out: &Tensor,
        cache: &SpatialCache,
        grads: &mut SpatialEncoder,
    ) -> Result<Tensor, NnError> {
        let mut g = resize_nearest_backward(grad_out, &cache.pre_resize_shape)?;
        for i in (0..self.layers.len()).rev() {
            let g_pre = relu_tensor_backward(&g, &cache.pre_relu[i]);
            g = self.layers[i].backward(&g_pre, &cache.inputs[i], &mut grads.layers[i])?;
        }
        Ok(g)
    }

    pub fn zeros_like(&self) -> Self {
        SpatialEncoder {
            layers: self.layers.iter().map(|l| l.zeros_like()).collect(),
            target: self.target,
        }
    }
}

/// Mirror of the audio encoder used by the spectrogram-reconstruction
/// auxiliary task: affine from the embedding, ReLU, transposed convs with
/// ReLU between (linear final output), then exact-shape alignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioDecoder {
    pub fc: LinearLayer,
    pub fc_shape: Vec<usize>,
    pub tconvs: Vec<TconvLayer>,
    pub target: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct DecoderCache {
    embed: Vec<f64>,
    fc_pre: Vec<f64>,
    inputs: Vec<Tensor>,
    pre_relu: Vec<Option<Tensor>>,
    pre_resize_shape: Vec<usize>,
}

impl AudioDecoder {
    pub fn forward(&self, embed: &[f64]) -> Result<(Tensor, DecoderCache), NnError> {
        let fc_pre = self.fc.forward(embed)?;
        let mut cur = Tensor::from_vec(&self.fc_shape, relu_forward(&fc_pre));
        let mut inputs = Vec::new();
        let mut pre_relu = Vec::new();
        let last = self.tconvs.len() - 1;
        for (i, t) in self.tconvs.iter().enumerate() {
            let pre = t.forward(&cur)?;
            inputs.push(cur);
            if i < last {
                cur = relu_tensor(&pre);
                pre_relu.push(Some(pre));
            } else {
                cur = pre;
                pre_relu.push(None);
            }
        }
        let pre_resize_shape = cur.shape().to_vec();
        let out = resize_nearest_forward(&cur, self.target.0, self.target.1)?;
        Ok((
            out,
            DecoderCache { embed: embed.to_vec(), fc_pre, inputs, pre_relu, pre_resize_shape },
        ))
    }

    /// Returns the gradient w.r.t. the embedding.
    pub fn backward(
        &self,
        grad_out: &Tensor,
        cache: &DecoderCache,
        grads: &mut AudioDecoder,
    ) -> Result<Vec<f64>, NnError> {
        let mut g = resize_nearest_backward(grad_out, &cache.pre_resize_shape)?;
        for i in (0..self.tconvs.len()).rev() {
            let g_pre = match &cache.pre_relu[i] {
                Some(pre) => relu_tensor_backward(&g, pre),
                None => g,
            };
            g = self.tconvs[i].backward(&g_pre, &cache.inputs[i], &mut grads.tconvs[i])?;
        }
        let g_fc = relu_backward(g.data(), &cache.fc_pre);
        self.fc.backward(&g_fc, &cache.embed, &mut grads.fc)
    }

    pub fn zeros_like(&self) -> Self {
        AudioDecoder {
            fc: self.fc.zeros_like(),
            fc_shape: self.fc_shape.clone(),
            tconvs: self.tconvs.iter().map(|t| t.zeros_like()).collect(),
            target: self.target,
        }
    }
}
