//! Forward/backward pairs for the handful of operators the growth model uses.
//!
//! Backward functions accumulate into `ParamTensor::grad` and return the
//! gradient with respect to the op's non-parameter input.

use super::{ParamSet, ParamTensor};
use crate::error::{Error, Result};

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0;
    for j in 4 * chunks..a.len() {
        tail += a[j] * b[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `out[i] += W[i,:] · x` for a row-major `rows × x.len()` matrix.
#[inline]
pub(crate) fn matvec_acc(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += dot(row, x);
    }
}

/// `out += Wᵀ g`.
#[inline]
pub(crate) fn matvec_t_acc(w: &[f64], g: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (&gi, row) in g.iter().zip(w.chunks_exact(cols)) {
        if gi == 0.0 {
            continue;
        }
        for (o, &wij) in out.iter_mut().zip(row) {
            *o += gi * wij;
        }
    }
}

/// `grad_w += g xᵀ`.
#[inline]
pub(crate) fn outer_acc(grad_w: &mut [f64], g: &[f64], x: &[f64]) {
    let cols = x.len();
    for (&gi, row) in g.iter().zip(grad_w.chunks_exact_mut(cols)) {
        if gi == 0.0 {
            continue;
        }
        for (o, &xj) in row.iter_mut().zip(x) {
            *o += gi * xj;
        }
    }
}

fn check_linear(x_len: usize, w: &ParamTensor, b: &ParamTensor) -> Result<()> {
    let ws = w.value.shape();
    if ws.len() != 2 || ws[1] != x_len {
        return Err(Error::Shape {
            op: "linear",
            left: ws.to_vec(),
            right: vec![x_len],
        });
    }
    if b.value.shape() != [ws[0]] {
        return Err(Error::Shape {
            op: "linear bias",
            left: ws.to_vec(),
            right: b.value.shape().to_vec(),
        });
    }
    Ok(())
}

/// `W·x + b`.
pub fn linear(x: &[f64], w: &ParamTensor, b: &ParamTensor) -> Result<Vec<f64>> {
    check_linear(x.len(), w, b)?;
    let mut out = b.value.data().to_vec();
    matvec_acc(w.value.data(), x, &mut out);
    Ok(out)
}

/// Accumulates `dW += g xᵀ`, `db += g`; returns `Wᵀ g`.
pub fn linear_backward(
    x: &[f64],
    w: &mut ParamTensor,
    b: &mut ParamTensor,
    grad_out: &[f64],
) -> Result<Vec<f64>> {
    check_linear(x.len(), w, b)?;
    if grad_out.len() != w.value.rows() {
        return Err(Error::Shape {
            op: "linear backward",
            left: w.value.shape().to_vec(),
            right: vec![grad_out.len()],
        });
    }
    outer_acc(w.grad.data_mut(), grad_out, x);
    for (gb, g) in b.grad.data_mut().iter_mut().zip(grad_out) {
        *gb += g;
    }
    let mut gx = vec![0.0; x.len()];
    matvec_t_acc(w.value.data(), grad_out, &mut gx);
    Ok(gx)
}

/// Row `index` of a `V × d_e` embedding table. `feature` names the table in errors.
pub fn embed_lookup(table: &ParamTensor, index: usize, feature: &str) -> Result<Vec<f64>> {
    let v = table.value.rows();
    if index >= v {
        return Err(Error::Index {
            feature: feature.to_string(),
            index,
            cardinality: v,
        });
    }
    Ok(table.value.row(index).to_vec())
}

/// Adds `grad` into row `index` of the table gradient only.
pub fn embed_backward(table: &mut ParamTensor, index: usize, grad: &[f64]) {
    for (g, d) in table.grad.row_mut(index).iter_mut().zip(grad) {
        *g += d;
    }
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

/// Gradient of relu given its *input* `x`.
pub fn relu_backward(x: &[f64], grad_out: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(grad_out)
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect()
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Concatenates along the single feature axis; also returns the start offset of each part.
pub fn concat(parts: &[&[f64]]) -> Result<(Vec<f64>, Vec<usize>)> {
    if parts.is_empty() {
        return Err(Error::Argument("concat of an empty list".into()));
    }
    let total = parts.iter().map(|p| p.len()).sum();
    let mut out = Vec::with_capacity(total);
    let mut offsets = Vec::with_capacity(parts.len());
    for p in parts {
        offsets.push(out.len());
        out.extend_from_slice(p);
    }
    Ok((out, offsets))
}

/// Inverse of [`concat`]: splits `x` at recorded offsets.
pub fn split(x: &[f64], offsets: &[usize]) -> Vec<Vec<f64>> {
    offsets
        .iter()
        .enumerate()
        .map(|(i, &start)| {
            let end = offsets.get(i + 1).copied().unwrap_or(x.len());
            x[start..end].to_vec()
        })
        .collect()
}

/// Rescales all gradients so their joint L2 norm is at most `max`. Returns
/// the norm before rescaling.
pub fn clip_grad_norm(params: &mut ParamSet, max: f64) -> f64 {
    let norm = params
        .params()
        .iter()
        .flat_map(|p| p.grad.data())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max {
        let scale = max / norm;
        for p in params.params_mut() {
            p.grad.data_mut().iter_mut().for_each(|g| *g *= scale);
        }
    }
    norm
}

/// `value ← value − lr·grad` on every parameter, then zeroes all gradients.
pub fn sgd_step(params: &mut ParamSet, lr: f64) {
    for p in params.params_mut() {
        if lr != 0.0 {
            for (v, g) in p.value.data_mut().iter_mut().zip(p.grad.data()) {
                *v -= lr * g;
            }
        }
        p.zero_grad();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Partition, Tensor};

    fn pt(name: &str, shape: &[usize], data: Vec<f64>) -> ParamTensor {
        ParamTensor::new(name, Tensor::new(shape.to_vec(), data).unwrap())
    }

    #[test]
    fn linear_identity() {
        let w = pt("w", &[2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        let b = pt("b", &[2], vec![0.0, 0.0]);
        assert_eq!(linear(&[1.0, 2.0], &w, &b).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn linear_hand_arithmetic() {
        let w = pt("w", &[1, 2], vec![2.0, 3.0]);
        let b = pt("b", &[1], vec![-1.0]);
        assert_eq!(linear(&[1.0, 1.0], &w, &b).unwrap(), vec![4.0]);
    }

    #[test]
    fn linear_shape_error_names_both_shapes() {
        let w = pt("w", &[2, 3], vec![0.0; 6]);
        let b = pt("b", &[2], vec![0.0; 2]);
        let err = linear(&[1.0, 2.0], &w, &b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[2]"), "{msg}");
    }

    #[test]
    fn embed_reads_row_and_touches_only_it() {
        let mut t = pt("embed.sex", &[3, 2], vec![0.5, -0.5, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(embed_lookup(&t, 0, "sex").unwrap(), vec![0.5, -0.5]);
        embed_backward(&mut t, 1, &[1.0, -2.0]);
        assert_eq!(t.grad.data(), &[0.0, 0.0, 1.0, -2.0, 0.0, 0.0]);
    }

    #[test]
    fn embed_out_of_range_names_feature() {
        let t = pt("embed.breed", &[3, 2], vec![0.0; 6]);
        match embed_lookup(&t, 3, "breed") {
            Err(Error::Index { feature, index, .. }) => {
                assert_eq!(feature, "breed");
                assert_eq!(index, 3);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn relu_definition() {
        assert_eq!(relu(&[-1.0, 0.0, 2.0]), vec![0.0, 0.0, 2.0]);
    }

    #[test]
    fn concat_definition_and_split() {
        let (out, offs) = concat(&[&[1.0], &[2.0, 3.0]]).unwrap();
        assert_eq!(out, vec![1.0, 2.0, 3.0]);
        assert_eq!(split(&out, &offs), vec![vec![1.0], vec![2.0, 3.0]]);
        assert!(matches!(concat(&[]), Err(Error::Argument(_))));
    }

    #[test]
    fn sgd_one_step() {
        let mut ps = ParamSet::new();
        ps.push("p", Tensor::vector(vec![1.0]), Partition::Body)
            .unwrap();
        ps.params_mut()[0].grad.data_mut()[0] = 0.5;
        sgd_step(&mut ps, 0.1);
        assert!((ps.params()[0].value.data()[0] - 0.95).abs() < 1e-15);
        assert_eq!(ps.params()[0].grad.data()[0], 0.0);
    }

    #[test]
    fn sgd_zero_lr_is_identity() {
        let mut ps = ParamSet::new();
        ps.push("p", Tensor::vector(vec![1.25, -3.5]), Partition::Body)
            .unwrap();
        ps.params_mut()[0].grad.data_mut().copy_from_slice(&[7.0, 1e9]);
        let before = ps.clone();
        sgd_step(&mut ps, 0.0);
        assert_eq!(ps.params()[0].value, before.params()[0].value);
    }

    #[test]
    fn clip_rescales_only_above_threshold() {
        let mut ps = ParamSet::new();
        ps.push("a", Tensor::vector(vec![0.0, 0.0]), Partition::Body).unwrap();
        ps.push("b", Tensor::vector(vec![0.0]), Partition::Head).unwrap();
        ps.params_mut()[0].grad.data_mut().copy_from_slice(&[3.0, 0.0]);
        ps.params_mut()[1].grad.data_mut().copy_from_slice(&[4.0]);
        assert_eq!(clip_grad_norm(&mut ps, 10.0), 5.0);
        assert_eq!(ps.params()[0].grad.data(), &[3.0, 0.0]);
        assert_eq!(clip_grad_norm(&mut ps, 1.0), 5.0);
        assert!((ps.params()[0].grad.data()[0] - 0.6).abs() < 1e-15);
        assert!((ps.params()[1].grad.data()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..11).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..11).map(|i| 1.0 - i as f64).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }
}
