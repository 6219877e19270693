use super::{gemm, NumError, Real, Result, Tensor};

/// What the convolution backward pass needs from the forward pass.
#[derive(Debug, Clone)]
pub struct Conv2dCache<T> {
    /// im2col expansion of the input, `(C*K*K) x (N*N)` row-major.
    pub cols: Vec<T>,
    pub in_channels: usize,
    pub size: usize,
    pub kernel: usize,
}

fn conv_dims<T: Real>(weight: &Tensor<T>, bias: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let s = weight.shape();
    if s.len() != 4 || s[2] != s[3] {
        return Err(NumError::ShapeMismatch {
            op: "conv2d",
            detail: format!("weight must be O x C x K x K, got {s:?}"),
        });
    }
    if s[2].is_multiple_of(2) {
        return Err(NumError::ShapeMismatch {
            op: "conv2d",
            detail: format!("kernel size must be odd for same padding, got {}", s[2]),
        });
    }
    if bias.shape() != [s[0]] {
        return Err(NumError::ShapeMismatch {
            op: "conv2d",
            detail: format!("bias {:?} does not match {} output channels", bias.shape(), s[0]),
        });
    }
    Ok((s[0], s[1], s[2]))
}

fn im2col<T: Real>(input: &[T], channels: usize, size: usize, kernel: usize) -> Vec<T> {
    let pad = kernel / 2;
    let area = size * size;
    let mut cols = vec![T::zero(); channels * kernel * kernel * area];
    for c in 0..channels {
        let plane = &input[c * area..(c + 1) * area];
        for ky in 0..kernel {
            for kx in 0..kernel {
                let row = ((c * kernel + ky) * kernel + kx) * area;
                let dst = &mut cols[row..row + area];
                for y in 0..size {
                    let sy = y as isize + ky as isize - pad as isize;
                    if sy < 0 || sy >= size as isize {
                        continue;
                    }
                    let src_row = &plane[sy as usize * size..(sy as usize + 1) * size];
                    let (x0, x1) = (pad.saturating_sub(kx), (size + pad).saturating_sub(kx).min(size));
                    for x in x0..x1 {
                        dst[y * size + x] = src_row[x + kx - pad];
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Real>(cols: &[T], channels: usize, size: usize, kernel: usize) -> Vec<T> {
    let pad = kernel / 2;
    let area = size * size;
    let mut out = vec![T::zero(); channels * area];
    for c in 0..channels {
        let plane = &mut out[c * area..(c + 1) * area];
        for ky in 0..kernel {
            for kx in 0..kernel {
                let row = ((c * kernel + ky) * kernel + kx) * area;
                let src = &cols[row..row + area];
                for y in 0..size {
                    let sy = y as isize + ky as isize - pad as isize;
                    if sy < 0 || sy >= size as isize {
                        continue;
                    }
                    let dst_row = &mut plane[sy as usize * size..(sy as usize + 1) * size];
                    let (x0, x1) = (pad.saturating_sub(kx), (size + pad).saturating_sub(kx).min(size));
                    for x in x0..x1 {
                        dst_row[x + kx - pad] = dst_row[x + kx - pad] + src[y * size + x];
                    }
                }
            }
        }
    }
    out
}

/// Same-padded, stride-1 cross-correlation of a `C x N x N` input.
/// Returns the `O x N x N` output and the cache for [`conv2d_backward`].
pub fn conv2d_forward<T: Real>(
    input: &[T],
    size: usize,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<(Vec<T>, Conv2dCache<T>)> {
    let (out_ch, in_ch, k) = conv_dims(weight, bias)?;
    let area = size * size;
    if input.len() != in_ch * area {
        return Err(NumError::ShapeMismatch {
            op: "conv2d",
            detail: format!(
                "input has {} values, weight expects {in_ch} x {size} x {size}",
                input.len()
            ),
        });
    }
    let cols = im2col(input, in_ch, size, k);
    let mut out = Vec::with_capacity(out_ch * area);
    for &b in bias.data() {
        out.extend(std::iter::repeat_n(b, area));
    }
    gemm(
        out_ch,
        in_ch * k * k,
        area,
        weight.data(),
        false,
        &cols,
        false,
        T::one(),
        &mut out,
    );
    Ok((
        out,
        Conv2dCache {
            cols,
            in_channels: in_ch,
            size,
            kernel: k,
        },
    ))
}

/// Accumulates weight and bias gradients and optionally returns the input gradient.
pub fn conv2d_backward<T: Real>(
    cache: &Conv2dCache<T>,
    grad_out: &[T],
    weight: &mut Tensor<T>,
    bias: &mut Tensor<T>,
    want_input_grad: bool,
) -> Option<Vec<T>> {
    let area = cache.size * cache.size;
    let out_ch = bias.len();
    let ckk = cache.in_channels * cache.kernel * cache.kernel;
    debug_assert_eq!(grad_out.len(), out_ch * area);
    for (o, bg) in bias.grad_mut().iter_mut().enumerate() {
        *bg = *bg + grad_out[o * area..(o + 1) * area].iter().copied().sum::<T>();
    }
    let (w, wg) = weight.data_and_grad_mut();
    gemm(out_ch, area, ckk, grad_out, false, &cache.cols, true, T::one(), wg);
    if !want_input_grad {
        return None;
    }
    let mut dcols = vec![T::zero(); ckk * area];
    gemm(ckk, out_ch, area, w, true, grad_out, false, T::zero(), &mut dcols);
    Some(col2im(&dcols, cache.in_channels, cache.size, cache.kernel))
}

/// Tensor-level convolution: `[C, N, N]` in, `[O, N, N]` out.
pub fn conv2d<T: Real>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let s = input.shape();
    if s.len() != 3 || s[1] != s[2] {
        return Err(NumError::ShapeMismatch {
            op: "conv2d",
            detail: format!("input must be C x N x N, got {s:?}"),
        });
    }
    let (out, _) = conv2d_forward(input.data(), s[1], weight, bias)?;
    Tensor::from_vec(&[weight.shape()[0], s[1], s[2]], out)
}

fn fc_dims<T: Real>(input_len: usize, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<(usize, usize)> {
    let s = weight.shape();
    if s.len() != 2 || s[1] != input_len || bias.shape() != [s[0]] {
        return Err(NumError::ShapeMismatch {
            op: "fully_connected",
            detail: format!("weight {s:?}, bias {:?}, input length {input_len}", bias.shape()),
        });
    }
    Ok((s[0], s[1]))
}

/// `weight * input + bias` for a `M x D` weight.
pub fn fully_connected<T: Real>(input: &[T], weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Vec<T>> {
    let (m, d) = fc_dims(input.len(), weight, bias)?;
    let mut out = bias.data().to_vec();
    gemm(m, d, 1, weight.data(), false, input, false, T::one(), &mut out);
    Ok(out)
}

pub fn fully_connected_backward<T: Real>(
    input: &[T],
    grad_out: &[T],
    weight: &mut Tensor<T>,
    bias: &mut Tensor<T>,
    want_input_grad: bool,
) -> Option<Vec<T>> {
    let d = input.len();
    for (bg, &g) in bias.grad_mut().iter_mut().zip(grad_out) {
        *bg = *bg + g;
    }
    let (w, wg) = weight.data_and_grad_mut();
    for (row, &g) in wg.chunks_exact_mut(d).zip(grad_out) {
        if g == T::zero() {
            continue;
        }
        for (r, &x) in row.iter_mut().zip(input) {
            *r = *r + g * x;
        }
    }
    if !want_input_grad {
        return None;
    }
    let mut dx = vec![T::zero(); d];
    gemm(d, grad_out.len(), 1, w, true, grad_out, false, T::zero(), &mut dx);
    Some(dx)
}

pub fn relu<T: Real>(input: &[T]) -> Vec<T> {
    input.iter().map(|&x| x.max(T::zero())).collect()
}

pub fn relu_in_place<T: Real>(values: &mut [T]) {
    values.iter_mut().for_each(|x| *x = x.max(T::zero()));
}

/// Zeroes `grad` wherever the activation was not positive. `activation` may be
/// either the pre- or post-activation values; both share the same sign gate.
pub fn relu_backward<T: Real>(activation: &[T], grad: &mut [T]) {
    for (g, &a) in grad.iter_mut().zip(activation) {
        if a <= T::zero() {
            *g = T::zero();
        }
    }
}

pub fn logsumexp<T: Real>(logits: &[T]) -> T {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    max + logits.iter().map(|&z| (z - max).exp()).sum::<T>().ln()
}

pub fn log_softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let lse = logsumexp(logits);
    logits.iter().map(|&z| z - lse).collect()
}

pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut out: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: T = out.iter().copied().sum();
    out.iter_mut().for_each(|p| *p = *p / total);
    out
}

/// Log-probabilities over the unmasked entries; masked entries are `-inf`.
pub fn masked_log_softmax<T: Real>(logits: &[T], mask: &[bool]) -> Result<Vec<T>> {
    if logits.len() != mask.len() {
        return Err(NumError::ShapeMismatch {
            op: "masked_softmax",
            detail: format!("{} logits vs {} mask entries", logits.len(), mask.len()),
        });
    }
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&z, _)| z)
        .fold(T::neg_infinity(), T::max);
    if !mask.iter().any(|&m| m) {
        return Err(NumError::NoLegalAction);
    }
    let total: T = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&z, _)| (z - max).exp())
        .sum();
    let lse = max + total.ln();
    Ok(logits
        .iter()
        .zip(mask)
        .map(|(&z, &m)| if m { z - lse } else { T::neg_infinity() })
        .collect())
}

/// Softmax restricted to the unmasked entries; masked entries are exactly zero.
pub fn masked_softmax<T: Real>(logits: &[T], mask: &[bool]) -> Result<Vec<T>> {
    Ok(masked_log_softmax(logits, mask)?
        .into_iter()
        .zip(mask)
        .map(|(lp, &m)| if m { lp.exp() } else { T::zero() })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape, v.to_vec()).unwrap()
    }

    #[test]
    fn conv_identity_kernel() {
        let input = t(&[1, 3, 3], &[1., -2., 3., 4., 5., -6., 7., 8., 9.]);
        let out = conv2d(&input, &t(&[1, 1, 1, 1], &[1.]), &t(&[1], &[0.])).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn conv_all_ones_3x3_on_2x2() {
        let input = t(&[1, 2, 2], &[1., 2., 3., 4.]);
        let out = conv2d(&input, &t(&[1, 1, 3, 3], &[1.; 9]), &t(&[1], &[0.])).unwrap();
        assert_eq!(out.data(), &[10., 10., 10., 10.]);
    }

    #[test]
    fn conv_zero_weight_gives_zero() {
        let input = t(&[2, 4, 4], &(0..32).map(|v| v as f64).collect::<Vec<_>>());
        let out = conv2d(&input, &Tensor::zeros(&[3, 2, 5, 5]), &Tensor::zeros(&[3])).unwrap();
        assert_eq!(out.shape(), &[3, 4, 4]);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_channel_mismatch_is_error() {
        let input = t(&[2, 2, 2], &[0.; 8]);
        let err = conv2d(&input, &Tensor::zeros(&[1, 3, 3, 3]), &Tensor::zeros(&[1])).unwrap_err();
        assert!(matches!(err, NumError::ShapeMismatch { op: "conv2d", .. }));
    }

    #[test]
    fn conv_matches_direct_loop() {
        // hand-rolled direct convolution as reference
        let (c, o, k, n) = (2, 3, 3, 5);
        let input: Vec<f64> = (0..c * n * n).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let w: Vec<f64> = (0..o * c * k * k).map(|i| ((i * 5) % 7) as f64 * 0.1 - 0.3).collect();
        let b = vec![0.5, -1.0, 0.25];
        let (out, _) = conv2d_forward(&input, n, &t(&[o, c, k, k], &w), &t(&[o], &b)).unwrap();
        for oc in 0..o {
            for y in 0..n as isize {
                for x in 0..n as isize {
                    let mut acc = b[oc];
                    for ic in 0..c {
                        for ky in 0..k as isize {
                            for kx in 0..k as isize {
                                let (sy, sx) = (y + ky - 1, x + kx - 1);
                                if sy < 0 || sx < 0 || sy >= n as isize || sx >= n as isize {
                                    continue;
                                }
                                acc += w[((oc * c + ic) * k + ky as usize) * k + kx as usize]
                                    * input[(ic * n + sy as usize) * n + sx as usize];
                            }
                        }
                    }
                    let got = out[(oc * n + y as usize) * n + x as usize];
                    assert!((got - acc).abs() < 1e-12, "{got} vs {acc}");
                }
            }
        }
    }

    #[test]
    fn fc_examples() {
        let id = t(&[2, 2], &[1., 0., 0., 1.]);
        assert_eq!(
            fully_connected(&[5., -3.], &id, &t(&[2], &[0., 0.])).unwrap(),
            vec![5., -3.]
        );
        let w = t(&[2, 2], &[1., 2., 3., 4.]);
        assert_eq!(
            fully_connected(&[1., 1.], &w, &t(&[2], &[0., 0.])).unwrap(),
            vec![3., 7.]
        );
        let z = Tensor::zeros(&[2, 2]);
        assert_eq!(
            fully_connected(&[9., 9.], &z, &t(&[2], &[1., 1.])).unwrap(),
            vec![1., 1.]
        );
        assert!(fully_connected(&[1., 1., 1.], &w, &t(&[2], &[0., 0.])).is_err());
    }

    #[test]
    fn relu_examples() {
        assert_eq!(relu(&[-1.0f64, 0.0, 2.0]), vec![0.0, 0.0, 2.0]);
        let neg = [-1.0f64, -0.5];
        let mut g = vec![1.0, 1.0];
        relu_backward(&neg, &mut g);
        assert_eq!((relu(&neg), g), (vec![0.0, 0.0], vec![0.0, 0.0]));
        let pos = [0.5f64, 3.0];
        let mut g = vec![0.25, -2.0];
        relu_backward(&pos, &mut g);
        assert_eq!((relu(&pos), g), (pos.to_vec(), vec![0.25, -2.0]));
    }

    #[test]
    fn masked_softmax_examples() {
        let p = masked_softmax(&[0.0f64, 0.0, 0.0], &[true; 3]).unwrap();
        assert!(p.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-12));
        let p = masked_softmax(&[1.0f64, 2.0, 3.0], &[true, false, true]).unwrap();
        assert!((p[0] - 0.1192).abs() < 1e-4 && p[1] == 0.0 && (p[2] - 0.8808).abs() < 1e-4);
        let p = masked_softmax(&[5.0f64, -2.0, 9.0], &[false, true, false]).unwrap();
        assert_eq!(p, vec![0.0, 1.0, 0.0]);
        assert_eq!(masked_softmax(&[1.0f64], &[false]), Err(NumError::NoLegalAction));
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let p = softmax(&[1000.0f32, 1000.0]);
        assert_eq!(p, vec![0.5, 0.5]);
        let lp = log_softmax(&[1000.0f64, 0.0]);
        assert!(lp[0].abs() < 1e-12 && (lp[1] + 1000.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn masked_softmax_normalized_and_shift_invariant(
            logits in prop::collection::vec(-30.0f64..30.0, 1..12),
            mask_bits in prop::collection::vec(any::<bool>(), 12),
            shift in -50.0f64..50.0,
        ) {
            let mut mask: Vec<bool> = mask_bits[..logits.len()].to_vec();
            mask[0] = true;
            let p = masked_softmax(&logits, &mask).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            for (pi, &m) in p.iter().zip(&mask) {
                if !m { prop_assert_eq!(*pi, 0.0); }
            }
            let shifted: Vec<f64> = logits.iter().zip(&mask).map(|(&z, &m)| if m { z + shift } else { z }).collect();
            let q = masked_softmax(&shifted, &mask).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }

        #[test]
        fn same_padding_preserves_size(k in prop::sample::select(vec![1usize, 3, 5, 7]), n in 1usize..9, c in 1usize..3) {
            let input = Tensor::<f32>::from_vec(&[c, n, n], vec![1.0; c * n * n]).unwrap();
            let out = conv2d(&input, &Tensor::zeros(&[2, c, k, k]), &Tensor::zeros(&[2])).unwrap();
            prop_assert_eq!(out.shape(), &[2, n, n]);
        }
    }
}
