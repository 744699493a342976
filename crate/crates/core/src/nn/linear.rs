//! Affine layer, ReLU, and nearest-neighbor plane resizing.

use super::{NnError, Tensor};

/// `y = W x + b` with `W` of shape `(out, in)`.
pub fn linear_forward(x: &[f64], weight: &Tensor, bias: &Tensor) -> Result<Vec<f64>, NnError> {
    let [n_out, n_in] = match weight.shape() {
        &[a, b] => [a, b],
        s => return Err(NnError::Shape(format!("weight must be 2-d, got {s:?}"))),
    };
    if x.len() != n_in {
        return Err(NnError::Shape(format!("input has {} values, weight expects {n_in}", x.len())));
    }
    if bias.len() != n_out {
        return Err(NnError::Shape(format!("bias has {} values, expected {n_out}", bias.len())));
    }
    let mut y = bias.data().to_vec();
    for (o, yo) in y.iter_mut().enumerate() {
        let row = &weight.data()[o * n_in..(o + 1) * n_in];
        *yo += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
    }
    Ok(y)
}

/// Returns `(grad_x, grad_weight, grad_bias)`.
pub fn linear_backward(
    grad_out: &[f64],
    x: &[f64],
    weight: &Tensor,
) -> Result<(Vec<f64>, Tensor, Tensor), NnError> {
    let [n_out, n_in] = match weight.shape() {
        &[a, b] => [a, b],
        s => return Err(NnError::Shape(format!("weight must be 2-d, got {s:?}"))),
    };
    if grad_out.len() != n_out || x.len() != n_in {
        return Err(NnError::Shape("gradient/input size mismatch".into()));
    }
    let mut grad_x = vec![0.0; n_in];
    let mut grad_w = weight.zeros_like();
    for o in 0..n_out {
        let g = grad_out[o];
        let row = &weight.data()[o * n_in..(o + 1) * n_in];
        let grow = &mut grad_w.data_mut()[o * n_in..(o + 1) * n_in];
        for i in 0..n_in {
            grad_x[i] += g * row[i];
            grow[i] = g * x[i];
        }
    }
    Ok((grad_x, grad_w, Tensor::from_vec(&[n_out], grad_out.to_vec())))
}

pub fn relu_forward(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

/// ReLU gradient uses the cached pre-activation input.
pub fn relu_backward(grad_out: &[f64], x: &[f64]) -> Vec<f64> {
    grad_out.iter().zip(x).map(|(&g, &v)| if v > 0.0 { g } else { 0.0 }).collect()
}

/// Nearest-neighbor resize of a `(C, H, W)` tensor to `(C, th, tw)`.
/// Index mapping is `src = floor(dst * src_dim / dst_dim)`, which works in
/// both the up- and down-scaling directions.
pub fn resize_nearest_forward(input: &Tensor, th: usize, tw: usize) -> Result<Tensor, NnError> {
    let (c, h, w) = match input.shape() {
        &[a, b, d] => (a, b, d),
        s => return Err(NnError::Shape(format!("expected 3-d tensor, got {s:?}"))),
    };
    let mut out = Tensor::zeros(&[c, th, tw]);
    for ch in 0..c {
        for i in 0..th {
            let si = i * h / th;
            for j in 0..tw {
                let sj = j * w / tw;
                *out.at3_mut(ch, i, j) = input.at3(ch, si, sj);
            }
        }
    }
    Ok(out)
}

/// Scatter the resize gradient back onto the source cells.
pub fn resize_nearest_backward(grad_out: &Tensor, src_shape: &[usize]) -> Result<Tensor, NnError> {
    let (c, th, tw) = match grad_out.shape() {
        &[a, b, d] => (a, b, d),
        s => return Err(NnError::Shape(format!("expected 3-d tensor, got {s:?}"))),
    };
    let (h, w) = (src_shape[1], src_shape[2]);
    let mut grad_in = Tensor::zeros(src_shape);
    for ch in 0..c {
        for i in 0..th {
            let si = i * h / th;
            for j in 0..tw {
                let sj = j * w / tw;
                *grad_in.at3_mut(ch, si, sj) += grad_out.at3(ch, i, j);
            }
        }
    }
    Ok(grad_in)
}
