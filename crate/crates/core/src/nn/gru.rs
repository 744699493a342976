//! Gated recurrent unit cell, bias-free form:
//!
//! ```text
//! r = σ(W_r x + U_r h)        reset gate
//! z = σ(W_z x + U_z h)        update gate
//! c = tanh(W x + U (r ⊙ h))   candidate state
//! h' = z ⊙ h + (1 − z) ⊙ c
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{linear_forward, NnError, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruParams {
    pub w_r: Tensor,
    pub u_r: Tensor,
    pub w_z: Tensor,
    pub u_z: Tensor,
    pub w: Tensor,
    pub u: Tensor,
}

impl GruParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        GruParams {
            w_r: Tensor::zeros(&[hidden, input]),
            u_r: Tensor::zeros(&[hidden, hidden]),
            w_z: Tensor::zeros(&[hidden, input]),
            u_z: Tensor::zeros(&[hidden, hidden]),
            w: Tensor::zeros(&[hidden, input]),
            u: Tensor::zeros(&[hidden, hidden]),
        }
    }

    pub fn init(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let wi = (1.0 / input as f64).sqrt();
        let wh = (1.0 / hidden as f64).sqrt();
        GruParams {
            w_r: Tensor::randn(&[hidden, input], wi, rng),
            u_r: Tensor::randn(&[hidden, hidden], wh, rng),
            w_z: Tensor::randn(&[hidden, input], wi, rng),
            u_z: Tensor::randn(&[hidden, hidden], wh, rng),
            w: Tensor::randn(&[hidden, input], wi, rng),
            u: Tensor::randn(&[hidden, hidden], wh, rng),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.w_r.shape()[0]
    }

    pub fn input_size(&self) -> usize {
        self.w_r.shape()[1]
    }
}

/// Intermediate activations cached by the forward pass for backprop.
#[derive(Debug, Clone)]
pub struct GruCache {
    pub r: Vec<f64>,
    pub z: Vec<f64>,
    pub c: Vec<f64>,
    pub rh: Vec<f64>,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

pub fn gru_forward(
    x: &[f64],
    h_prev: &[f64],
    p: &GruParams,
) -> Result<(Vec<f64>, GruCache), NnError> {
    let hidden = p.hidden_size();
    if h_prev.len() != hidden {
        return Err(NnError::Shape(format!(
            "hidden state has {} values, expected {hidden}",
            h_prev.len()
        )));
    }
    let zero = Tensor::zeros(&[hidden]);
    let mut r = linear_forward(x, &p.w_r, &zero)?;
    let ur_h = matvec(&p.u_r, h_prev);
    for (ri, u) in r.iter_mut().zip(&ur_h) {
        *ri = sigmoid(*ri + u);
    }
    let mut z = linear_forward(x, &p.w_z, &zero)?;
    let uz_h = matvec(&p.u_z, h_prev);
    for (zi, u) in z.iter_mut().zip(&uz_h) {
        *zi = sigmoid(*zi + u);
    }
    let rh: Vec<f64> = r.iter().zip(h_prev).map(|(ri, hi)| ri * hi).collect();
    let mut c = linear_forward(x, &p.w, &zero)?;
    let u_rh = matvec(&p.u, &rh);
    for (ci, u) in c.iter_mut().zip(&u_rh) {
        *ci = (*ci + u).tanh();
    }
    let h_new: Vec<f64> = (0..hidden).map(|i| z[i] * h_prev[i] + (1.0 - z[i]) * c[i]).collect();
    Ok((h_new, GruCache { r, z, c, rh }))
}

/// Backward pass. Accumulates weight gradients into `grads` and returns
/// `(grad_x, grad_h_prev)`.
pub fn gru_backward(
    grad_h_new: &[f64],
    x: &[f64],
    h_prev: &[f64],
    p: &GruParams,
    cache: &GruCache,
    grads: &mut GruParams,
) -> (Vec<f64>, Vec<f64>) {
    let hidden = p.hidden_size();
    let n_in = p.input_size();
    let GruCache { r, z, c, rh } = cache;

    // dL/dz, dL/dc, and the direct h' -> h path.
    let mut da_z = vec![0.0; hidden];
    let mut da_c = vec![0.0; hidden];
    let mut grad_h = vec![0.0; hidden];
    for i in 0..hidden {
        let g = grad_h_new[i];
        let dz = g * (h_prev[i] - c[i]);
        da_z[i] = dz * z[i] * (1.0 - z[i]);
        let dc = g * (1.0 - z[i]);
        da_c[i] = dc * (1.0 - c[i] * c[i]);
        grad_h[i] = g * z[i];
    }

    // Through the candidate: d(rh) = U^T da_c.
    let d_rh = matvec_t(&p.u, &da_c);
    let mut da_r = vec![0.0; hidden];
    for i in 0..hidden {
        da_r[i] = d_rh[i] * h_prev[i] * r[i] * (1.0 - r[i]);
        grad_h[i] += d_rh[i] * r[i];
    }

    // Gate contributions back into h_prev.
    let hr = matvec_t(&p.u_r, &da_r);
    let hz = matvec_t(&p.u_z, &da_z);
    for i in 0..hidden {
        grad_h[i] += hr[i] + hz[i];
    }

    // Input gradient through all three input matrices.
    let mut grad_x = matvec_t(&p.w_r, &da_r);
    let gx_z = matvec_t(&p.w_z, &da_z);
    let gx_c = matvec_t(&p.w, &da_c);
    for i in 0..n_in {
        grad_x[i] += gx_z[i] + gx_c[i];
    }

    outer_acc(&mut grads.w_r, &da_r, x);
    outer_acc(&mut grads.u_r, &da_r, h_prev);
    outer_acc(&mut grads.w_z, &da_z, x);
    outer_acc(&mut grads.u_z, &da_z, h_prev);
    outer_acc(&mut grads.w, &da_c, x);
    outer_acc(&mut grads.u, &da_c, rh);

    (grad_x, grad_h)
}

fn matvec(m: &Tensor, v: &[f64]) -> Vec<f64> {
    let (rows, cols) = (m.shape()[0], m.shape()[1]);
    let mut out = vec![0.0; rows];
    for (i, o) in out.iter_mut().enumerate() {
        let row = &m.data()[i * cols..(i + 1) * cols];
        *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
    out
}

/// `m^T v`.
fn matvec_t(m: &Tensor, v: &[f64]) -> Vec<f64> {
    let (rows, cols) = (m.shape()[0], m.shape()[1]);
    let mut out = vec![0.0; cols];
    for i in 0..rows {
        let row = &m.data()[i * cols..(i + 1) * cols];
        let vi = v[i];
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * vi;
        }
    }
    out
}

/// `m += a b^T`.
fn outer_acc(m: &mut Tensor, a: &[f64], b: &[f64]) {
    let cols = m.shape()[1];
    for (i, &ai) in a.iter().enumerate() {
        let row = &mut m.data_mut()[i * cols..(i + 1) * cols];
        for (slot, &bj) in row.iter_mut().zip(b) {
            *slot += ai * bj;
        }
    }
}
