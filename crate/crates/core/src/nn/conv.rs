//! Valid (unpadded) strided 2-D convolution and its transpose, in the
//! cross-correlation form, with explicit backward passes.

use super::{NnError, Tensor};

/// `input` is `(C_in, H, W)`, `kernels` `(C_out, C_in, KH, KW)`, `bias`
/// `(C_out)`. Output `(C_out, OH, OW)` with `OH = (H - KH) / sh + 1`.
pub fn conv2d_forward(
    input: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
    stride: (usize, usize),
) -> Result<Tensor, NnError> {
    let (c_in, h, w) = dims3(input)?;
    let [c_out, kc, kh, kw] = dims4(kernels)?;
    if kc != c_in {
        return Err(NnError::Shape(format!("kernel expects {kc} channels, input has {c_in}")));
    }
    if kh > h || kw > w {
        return Err(NnError::Shape(format!("kernel {kh}x{kw} larger than input {h}x{w}")));
    }
    let (sh, sw) = stride;
    let oh = (h - kh) / sh + 1;
    let ow = (w - kw) / sw + 1;
    let mut out = Tensor::zeros(&[c_out, oh, ow]);
    let xd = input.data();
    let kd = kernels.data();
    let od = out.data_mut();
    for o in 0..c_out {
        let b = bias.data()[o];
        let out_plane = &mut od[o * oh * ow..(o + 1) * oh * ow];
        out_plane.fill(b);
        for ci in 0..c_in {
            let in_plane = &xd[ci * h * w..(ci + 1) * h * w];
            for m in 0..kh {
                for n in 0..kw {
                    let k = kd[((o * c_in + ci) * kh + m) * kw + n];
                    for i in 0..oh {
                        let in_row = &in_plane[(i * sh + m) * w + n..];
                        let out_row = &mut out_plane[i * ow..(i + 1) * ow];
                        for (j, slot) in out_row.iter_mut().enumerate() {
                            *slot += k * in_row[j * sw];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`conv2d_forward`] w.r.t. input, kernels, and bias.
pub fn conv2d_backward(
    grad_out: &Tensor,
    input: &Tensor,
    kernels: &Tensor,
    stride: (usize, usize),
) -> Result<(Tensor, Tensor, Tensor), NnError> {
    let (c_in, _, _) = dims3(input)?;
    let [c_out, _, kh, kw] = dims4(kernels)?;
    let (go_c, oh, ow) = dims3(grad_out)?;
    if go_c != c_out {
        return Err(NnError::Shape(format!("grad has {go_c} channels, expected {c_out}")));
    }
    let (sh, sw) = stride;
    let (_, h, w) = dims3(input)?;
    let mut grad_in = input.zeros_like();
    let mut grad_k = kernels.zeros_like();
    let mut grad_b = Tensor::zeros(&[c_out]);
    let xd = input.data();
    let kd = kernels.data();
    let gd = grad_out.data();
    let gid = grad_in.data_mut();
    let gkd = grad_k.data_mut();
    for o in 0..c_out {
        let g_plane = &gd[o * oh * ow..(o + 1) * oh * ow];
        grad_b.data_mut()[o] += g_plane.iter().sum::<f64>();
        for ci in 0..c_in {
            let in_plane = &xd[ci * h * w..(ci + 1) * h * w];
            let gi_plane = &mut gid[ci * h * w..(ci + 1) * h * w];
            for m in 0..kh {
                for n in 0..kw {
                    let ki = ((o * c_in + ci) * kh + m) * kw + n;
                    let k = kd[ki];
                    let mut k_acc = 0.0;
                    for i in 0..oh {
                        let base = (i * sh + m) * w + n;
                        let g_row = &g_plane[i * ow..(i + 1) * ow];
                        for (j, &g) in g_row.iter().enumerate() {
                            k_acc += g * in_plane[base + j * sw];
                            gi_plane[base + j * sw] += g * k;
                        }
                    }
                    gkd[ki] += k_acc;
                }
            }
        }
    }
    Ok((grad_in, grad_k, grad_b))
}

/// Transposed convolution: the adjoint of [`conv2d_forward`] with the same
/// kernel tensor and stride (plus a bias). `input` is `(C_in, H, W)`,
/// `kernels` `(C_in, C_out, KH, KW)`, output
/// `(C_out, (H-1)*sh + KH, (W-1)*sw + KW)`.
pub fn tconv2d_forward(
    input: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
    stride: (usize, usize),
) -> Result<Tensor, NnError> {
    let (c_in, h, w) = dims3(input)?;
    let [kc_in, c_out, kh, kw] = dims4(kernels)?;
    if kc_in != c_in {
        return Err(NnError::Shape(format!("kernel expects {kc_in} channels, input has {c_in}")));
    }
    let (sh, sw) = stride;
    let oh = (h - 1) * sh + kh;
    let ow = (w - 1) * sw + kw;
    let mut out = Tensor::zeros(&[c_out, oh, ow]);
    let xd = input.data();
    let kd = kernels.data();
    let od = out.data_mut();
    for co in 0..c_out {
        od[co * oh * ow..(co + 1) * oh * ow].fill(bias.data()[co]);
    }
    for ci in 0..c_in {
        let in_plane = &xd[ci * h * w..(ci + 1) * h * w];
        for co in 0..c_out {
            let out_plane = &mut od[co * oh * ow..(co + 1) * oh * ow];
            for m in 0..kh {
                for n in 0..kw {
                    let k = kd[((ci * c_out + co) * kh + m) * kw + n];
                    for i in 0..h {
                        let in_row = &in_plane[i * w..(i + 1) * w];
                        let base = (i * sh + m) * ow + n;
                        for (j, &x) in in_row.iter().enumerate() {
                            out_plane[base + j * sw] += x * k;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`tconv2d_forward`].
pub fn tconv2d_backward(
    grad_out: &Tensor,
    input: &Tensor,
    kernels: &Tensor,
    stride: (usize, usize),
) -> Result<(Tensor, Tensor, Tensor), NnError> {
    let (c_in, h, w) = dims3(input)?;
    let [_, c_out, kh, kw] = dims4(kernels)?;
    let (go_c, _, _) = dims3(grad_out)?;
    if go_c != c_out {
        return Err(NnError::Shape(format!("grad has {go_c} channels, expected {c_out}")));
    }
    let (sh, sw) = stride;
    let (_, goh, gow) = dims3(grad_out)?;
    let mut grad_in = input.zeros_like();
    let mut grad_k = kernels.zeros_like();
    let mut grad_b = Tensor::zeros(&[c_out]);
    let xd = input.data();
    let kd = kernels.data();
    let gd = grad_out.data();
    let gid = grad_in.data_mut();
    let gkd = grad_k.data_mut();
    for co in 0..c_out {
        grad_b.data_mut()[co] +=
            gd[co * goh * gow..(co + 1) * goh * gow].iter().sum::<f64>();
    }
    for ci in 0..c_in {
        let in_plane = &xd[ci * h * w..(ci + 1) * h * w];
        let gi_plane = &mut gid[ci * h * w..(ci + 1) * h * w];
        for co in 0..c_out {
            let g_plane = &gd[co * goh * gow..(co + 1) * goh * gow];
            for m in 0..kh {
                for n in 0..kw {
                    let ki = ((ci * c_out + co) * kh + m) * kw + n;
                    let k = kd[ki];
                    let mut k_acc = 0.0;
                    for i in 0..h {
                        let base = (i * sh + m) * gow + n;
                        let in_row = &in_plane[i * w..(i + 1) * w];
                        let gi_row = &mut gi_plane[i * w..(i + 1) * w];
                        for j in 0..w {
                            let g = g_plane[base + j * sw];
                            k_acc += g * in_row[j];
                            gi_row[j] += g * k;
                        }
                    }
                    gkd[ki] += k_acc;
                }
            }
        }
    }
    Ok((grad_in, grad_k, grad_b))
}

fn dims3(t: &Tensor) -> Result<(usize, usize, usize), NnError> {
    match t.shape() {
        &[a, b, c] => Ok((a, b, c)),
        s => Err(NnError::Shape(format!("expected 3-d tensor, got {s:?}"))),
    }
}

fn dims4(t: &Tensor) -> Result<[usize; 4], NnError> {
    match t.shape() {
        &[a, b, c, d] => Ok([a, b, c, d]),
        s => Err(NnError::Shape(format!("expected 4-d tensor, got {s:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    #[test]
    fn output_shape_3x4_input_2x2_kernel() {
        let input = Tensor::zeros(&[1, 3, 4]);
        let k = Tensor::zeros(&[1, 1, 2, 2]);
        let b = Tensor::zeros(&[1]);
        let out = conv2d_forward(&input, &k, &b, (1, 1)).unwrap();
        assert_eq!(out.shape(), &[1, 2, 3]);
    }

    #[test]
    fn identity_kernel_passes_input_through() {
        let mut rng = derive_stream(1, 0);
        let input = Tensor::randn(&[1, 4, 5], 1.0, &mut rng);
        let k = Tensor::from_vec(&[1, 1, 1, 1], vec![1.0]);
        let b = Tensor::zeros(&[1]);
        let out = conv2d_forward(&input, &k, &b, (1, 1)).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn forward_matches_naive_quadruple_loop() {
        let mut rng = derive_stream(2, 0);
        let input = Tensor::randn(&[1, 6, 6], 1.0, &mut rng);
        let k = Tensor::randn(&[2, 1, 3, 3], 1.0, &mut rng);
        let b = Tensor::randn(&[2], 1.0, &mut rng);
        let out = conv2d_forward(&input, &k, &b, (2, 2)).unwrap();
        assert_eq!(out.shape(), &[2, 2, 2]);
        for o in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    let mut acc = b.data()[o];
                    for m in 0..3 {
                        for n in 0..3 {
                            acc += input.at3(0, i * 2 + m, j * 2 + n) * k.at4(o, 0, m, n);
                        }
                    }
                    assert!((out.at3(o, i, j) - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn backward_zero_grad_gives_zero() {
        let input = Tensor::zeros(&[2, 5, 5]);
        let k = Tensor::zeros(&[3, 2, 2, 2]);
        let g = Tensor::zeros(&[3, 4, 4]);
        let (gi, gk, gb) = conv2d_backward(&g, &input, &k, (1, 1)).unwrap();
        assert!(gi.data().iter().chain(gk.data()).chain(gb.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn single_pixel_grad_copies_input_patch() {
        let mut rng = derive_stream(3, 0);
        let input = Tensor::randn(&[1, 4, 4], 1.0, &mut rng);
        let k = Tensor::randn(&[1, 1, 2, 2], 1.0, &mut rng);
        let mut g = Tensor::zeros(&[1, 3, 3]);
        *g.at3_mut(0, 1, 2) = 1.0;
        let (_, gk, gb) = conv2d_backward(&g, &input, &k, (1, 1)).unwrap();
        for m in 0..2 {
            for n in 0..2 {
                assert_eq!(gk.at4(0, 0, m, n), input.at3(0, 1 + m, 2 + n));
            }
        }
        assert_eq!(gb.data()[0], 1.0);
    }

    #[test]
    fn tconv_identity_scale() {
        let mut rng = derive_stream(4, 0);
        let input = Tensor::randn(&[1, 3, 3], 1.0, &mut rng);
        let k = Tensor::from_vec(&[1, 1, 1, 1], vec![2.5]);
        let b = Tensor::zeros(&[1]);
        let out = tconv2d_forward(&input, &k, &b, (1, 1)).unwrap();
        assert_eq!(out.shape(), &[1, 3, 3]);
        for (y, x) in out.data().iter().zip(input.data()) {
            assert_eq!(*y, 2.5 * x);
        }
    }

    #[test]
    fn conv_tconv_adjoint_identity() {
        let mut rng = derive_stream(5, 0);
        for &(c_in, c_out, h, w, kh, kw, sh, sw) in &[
            (1usize, 1usize, 5usize, 5usize, 3usize, 3usize, 2usize, 2usize),
            (2, 3, 6, 8, 2, 4, 2, 2),
            (3, 2, 7, 7, 3, 3, 1, 1),
        ] {
            let x = Tensor::randn(&[c_in, h, w], 1.0, &mut rng);
            let k = Tensor::randn(&[c_out, c_in, kh, kw], 1.0, &mut rng);
            let zero_out = Tensor::zeros(&[c_out]);
            let zero_in = Tensor::zeros(&[c_in]);
            let cx = conv2d_forward(&x, &k, &zero_out, (sh, sw)).unwrap();
            let y = Tensor::randn(cx.shape(), 1.0, &mut rng);
            // Same kernel tensor, reinterpreted in the tconv layout.
            let ty = tconv2d_forward(&y, &k, &zero_in, (sh, sw)).unwrap();
            assert_eq!(ty.shape(), x.shape());
            let lhs = cx.dot(&y);
            let rhs = x.dot(&ty);
            assert!((lhs - rhs).abs() < 1e-10, "adjoint identity violated: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn tconv_shape_growth_matches_arithmetic() {
        // Paper-scale spatial upscaling: (65, 69) through an 8x8 stride-3
        // transposed convolution lands on (200, 212).
        let input = Tensor::zeros(&[2, 65, 69]);
        let k = Tensor::zeros(&[2, 4, 8, 8]);
        let b = Tensor::zeros(&[4]);
        let out = tconv2d_forward(&input, &k, &b, (3, 3)).unwrap();
        assert_eq!(out.shape(), &[4, 200, 212]);
    }
}
