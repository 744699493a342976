//! Minimal tensor kernels with hand-written forward and backward passes.
//!
//! The layer set is small and fixed (conv, transposed conv, affine, ReLU,
//! GRU cell, categorical head), so each backward pass is written out
//! explicitly and verified against central finite differences rather than
//! going through a general autodiff tape. Everything is double precision;
//! all forward passes are pure functions of their inputs.

mod conv;
pub mod gradcheck;
mod gru;
mod head;
mod linear;
mod optim;
mod tensor;

pub use conv::{conv2d_backward, conv2d_forward, tconv2d_backward, tconv2d_forward};
pub use gru::{gru_backward, gru_forward, GruCache, GruParams};
pub use head::{masked_categorical, Categorical};
pub use linear::{
    linear_backward, linear_forward, relu_backward, relu_forward, resize_nearest_backward,
    resize_nearest_forward,
};
pub use optim::{clip_global_norm, global_norm, Adam};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("all categorical entries are masked")]
    AllMasked,
}

#[cfg(test)]
mod grad_tests {
    use super::gradcheck::{assert_close, central_diff, FD_STEP};
    use super::*;
    use crate::rng::derive_stream;
    use rand::Rng;

    /// Scalar probe loss: dot the output with fixed coefficients, so the
    /// output gradient is just those coefficients.
    fn probe(out: &[f64], coeffs: &[f64]) -> f64 {
        out.iter().zip(coeffs).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn conv2d_gradients_match_finite_differences() {
        let mut rng = derive_stream(100, 0);
        for case in 0..3 {
            let mut input = Tensor::randn(&[2, 5, 6], 1.0, &mut rng);
            let mut k = Tensor::randn(&[3, 2, 2, 3], 0.7, &mut rng);
            let bias = Tensor::randn(&[3], 0.5, &mut rng);
            let stride = (1 + case % 2, 1 + case % 2);
            let out = conv2d_forward(&input, &k, &bias, stride).unwrap();
            let coeffs: Vec<f64> = (0..out.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let grad_out = Tensor::from_vec(out.shape(), coeffs.clone());
            let (gi, gk, gb) = conv2d_backward(&grad_out, &input, &k, stride).unwrap();

            let kc = k.clone();
            let ic = input.clone();
            let num_in = central_diff(input.data_mut(), FD_STEP, |x| {
                let t = Tensor::from_vec(ic.shape(), x.to_vec());
                probe(conv2d_forward(&t, &kc, &bias, stride).unwrap().data(), &coeffs)
            });
            assert_close(gi.data(), &num_in, "conv2d input");
            let num_k = central_diff(k.data_mut(), FD_STEP, |w| {
                let t = Tensor::from_vec(kc.shape(), w.to_vec());
                probe(conv2d_forward(&ic, &t, &bias, stride).unwrap().data(), &coeffs)
            });
            assert_close(gk.data(), &num_k, "conv2d kernels");
            let mut b2 = bias.clone();
            let num_b = central_diff(b2.data_mut(), FD_STEP, |b| {
                let t = Tensor::from_vec(&[3], b.to_vec());
                probe(conv2d_forward(&ic, &kc, &t, stride).unwrap().data(), &coeffs)
            });
            assert_close(gb.data(), &num_b, "conv2d bias");
        }
    }

    #[test]
    fn tconv2d_gradients_match_finite_differences() {
        let mut rng = derive_stream(101, 0);
        let mut input = Tensor::randn(&[2, 3, 4], 1.0, &mut rng);
        let mut k = Tensor::randn(&[2, 3, 3, 2], 0.7, &mut rng);
        let bias = Tensor::randn(&[3], 0.5, &mut rng);
        let stride = (2, 2);
        let out = tconv2d_forward(&input, &k, &bias, stride).unwrap();
        let coeffs: Vec<f64> = (0..out.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let grad_out = Tensor::from_vec(out.shape(), coeffs.clone());
        let (gi, gk, gb) = tconv2d_backward(&grad_out, &input, &k, stride).unwrap();

        let kc = k.clone();
        let ic = input.clone();
        let num_in = central_diff(input.data_mut(), FD_STEP, |x| {
            let t = Tensor::from_vec(ic.shape(), x.to_vec());
            probe(tconv2d_forward(&t, &kc, &bias, stride).unwrap().data(), &coeffs)
        });
        assert_close(gi.data(), &num_in, "tconv2d input");
        let num_k = central_diff(k.data_mut(), FD_STEP, |w| {
            let t = Tensor::from_vec(kc.shape(), w.to_vec());
            probe(tconv2d_forward(&ic, &t, &bias, stride).unwrap().data(), &coeffs)
        });
        assert_close(gk.data(), &num_k, "tconv2d kernels");
        let mut b2 = bias.clone();
        let num_b = central_diff(b2.data_mut(), FD_STEP, |b| {
            let t = Tensor::from_vec(&[3], b.to_vec());
            probe(tconv2d_forward(&ic, &kc, &t, stride).unwrap().data(), &coeffs)
        });
        assert_close(gb.data(), &num_b, "tconv2d bias");
    }

    #[test]
    fn linear_and_relu_gradients_match_finite_differences() {
        let mut rng = derive_stream(102, 0);
        let mut w = Tensor::randn(&[4, 6], 0.8, &mut rng);
        let b = Tensor::randn(&[4], 0.5, &mut rng);
        let mut x: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let coeffs: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();

        let y = linear_forward(&x, &w, &b).unwrap();
        let (gx, gw, gb) = linear_backward(&coeffs, &x, &w).unwrap();
        let wc = w.clone();
        let xc = x.clone();
        let num_x =
            central_diff(&mut x, FD_STEP, |v| probe(&linear_forward(v, &wc, &b).unwrap(), &coeffs));
        assert_close(&gx, &num_x, "linear input");
        let num_w = central_diff(w.data_mut(), FD_STEP, |v| {
            let t = Tensor::from_vec(&[4, 6], v.to_vec());
            probe(&linear_forward(&xc, &t, &b).unwrap(), &coeffs)
        });
        assert_close(gw.data(), &num_w, "linear weight");
        assert_eq!(gb.data(), coeffs.as_slice());

        // ReLU on the affine output, keeping values away from the kink.
        let mut z: Vec<f64> = y.iter().map(|&v| if v.abs() < 0.05 { v + 0.1 } else { v }).collect();
        let gr = relu_backward(&coeffs, &z);
        let num_r = central_diff(&mut z, FD_STEP, |v| probe(&relu_forward(v), &coeffs));
        assert_close(&gr, &num_r, "relu");
    }

    #[test]
    fn gru_gradients_match_finite_differences() {
        let mut rng = derive_stream(103, 0);
        let p = GruParams::init(3, 4, &mut rng);
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let coeffs: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();

        let (_, cache) = gru_forward(&x, &h, &p).unwrap();
        let mut grads = GruParams::zeros(3, 4);
        let (gx, gh) = gru_backward(&coeffs, &x, &h, &p, &cache, &mut grads);

        let loss = |p: &GruParams, x: &[f64], h: &[f64]| {
            probe(&gru_forward(x, h, p).unwrap().0, &coeffs)
        };
        let mut xm = x.clone();
        let num_x = central_diff(&mut xm, FD_STEP, |v| loss(&p, v, &h));
        assert_close(&gx, &num_x, "gru x");
        let mut hm = h.clone();
        let num_h = central_diff(&mut hm, FD_STEP, |v| loss(&p, &x, v));
        assert_close(&gh, &num_h, "gru h_prev");

        // All six weight matrices.
        macro_rules! check_matrix {
            ($field:ident) => {{
                let mut buf = p.$field.clone();
                let shape = buf.shape().to_vec();
                let num = central_diff(buf.data_mut(), FD_STEP, |v| {
                    let mut q = p.clone();
                    q.$field = Tensor::from_vec(&shape, v.to_vec());
                    loss(&q, &x, &h)
                });
                assert_close(grads.$field.data(), &num, stringify!($field));
            }};
        }
        check_matrix!(w_r);
        check_matrix!(u_r);
        check_matrix!(w_z);
        check_matrix!(u_z);
        check_matrix!(w);
        check_matrix!(u);
    }

    #[test]
    fn categorical_log_prob_gradient_matches_finite_differences() {
        let mut rng = derive_stream(104, 0);
        let mut logits: Vec<f64> = (0..9).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mask = [true, true, false, true, true, true, false, true, true];
        let action = 4;
        let d = masked_categorical(&logits, &mask).unwrap();
        let g = d.grad_log_prob(action);
        let num = central_diff(&mut logits, FD_STEP, |l| {
            masked_categorical(l, &mask).unwrap().log_prob(action)
        });
        assert_close(&g, &num, "categorical log_prob");

        let d = masked_categorical(&logits, &mask).unwrap();
        let ge = d.grad_entropy();
        let num_e =
            central_diff(&mut logits, FD_STEP, |l| masked_categorical(l, &mask).unwrap().entropy());
        assert_close(&ge, &num_e, "categorical entropy");
    }
}
