//! Single-layer GRU cell with backpropagation through time.
//!
//! ```text
//! u  = σ(W_u z + U_u h + b_u)
//! r  = σ(W_r z + U_r h + b_r)
//! ĉ  = tanh(W_c z + U_c (r ⊙ h) + b_c)
//! h' = (1 − u) ⊙ h + u ⊙ ĉ
//! ```

use super::ops::{matvec_acc, matvec_t_acc, outer_acc, sigmoid};
use super::ParamTensor;
use crate::error::{Error, Result};

/// Parameter name suffixes, in the order the cell expects its slice.
pub const GRU_PARAMS: [&str; 9] = [
    "w_update",
    "u_update",
    "b_update",
    "w_reset",
    "u_reset",
    "b_reset",
    "w_candidate",
    "u_candidate",
    "b_candidate",
];

/// Activations saved for the backward pass of one step.
#[derive(Debug, Clone)]
pub struct GruStep {
    pub z: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub update: Vec<f64>,
    pub reset: Vec<f64>,
    pub candidate: Vec<f64>,
    reset_h: Vec<f64>,
    pub h: Vec<f64>,
}

fn check_shapes(params: &[ParamTensor], d_in: usize, d_h: usize) -> Result<()> {
    if params.len() != GRU_PARAMS.len() {
        return Err(Error::Argument(format!(
            "gru expects {} parameter tensors, got {}",
            GRU_PARAMS.len(),
            params.len()
        )));
    }
    for (gate, chunk) in params.chunks_exact(3).enumerate() {
        let expect: [&[usize]; 3] = [&[d_h, d_in], &[d_h, d_h], &[d_h]];
        for (p, want) in chunk.iter().zip(expect) {
            if p.value.shape() != want {
                return Err(Error::Shape {
                    op: ["gru update gate", "gru reset gate", "gru candidate"][gate],
                    left: p.value.shape().to_vec(),
                    right: want.to_vec(),
                });
            }
        }
    }
    Ok(())
}

fn gate(
    w: &ParamTensor,
    u: &ParamTensor,
    b: &ParamTensor,
    z: &[f64],
    h: &[f64],
    act: fn(f64) -> f64,
    name: &str,
) -> Result<Vec<f64>> {
    let mut pre = b.value.data().to_vec();
    matvec_acc(w.value.data(), z, &mut pre);
    matvec_acc(u.value.data(), h, &mut pre);
    pre.iter_mut().for_each(|v| *v = act(*v));
    if pre.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("gru {name} gate")));
    }
    Ok(pre)
}

/// One forward step. `params` is the 9-tensor slice ordered as [`GRU_PARAMS`].
pub fn gru_cell(z: &[f64], h_prev: &[f64], params: &[ParamTensor]) -> Result<GruStep> {
    let d_h = h_prev.len();
    check_shapes(params, z.len(), d_h)?;
    if h_prev.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gru previous hidden state".into()));
    }
    let update = gate(&params[0], &params[1], &params[2], z, h_prev, sigmoid, "update")?;
    let reset = gate(&params[3], &params[4], &params[5], z, h_prev, sigmoid, "reset")?;
    let reset_h: Vec<f64> = reset.iter().zip(h_prev).map(|(r, h)| r * h).collect();
    let candidate = gate(
        &params[6], &params[7], &params[8], z, &reset_h, f64::tanh, "candidate",
    )?;
    let h = (0..d_h)
        .map(|i| (1.0 - update[i]) * h_prev[i] + update[i] * candidate[i])
        .collect();
    Ok(GruStep {
        z: z.to_vec(),
        h_prev: h_prev.to_vec(),
        update,
        reset,
        candidate,
        reset_h,
        h,
    })
}

/// Backward through one step. Accumulates parameter gradients and returns
/// `(∂L/∂z, ∂L/∂h_prev)`.
pub fn gru_cell_backward(
    step: &GruStep,
    grad_h: &[f64],
    params: &mut [ParamTensor],
) -> (Vec<f64>, Vec<f64>) {
    let d_h = step.h.len();
    let d_in = step.z.len();
    let [w_u, u_u, b_u, w_r, u_r, b_r, w_c, u_c, b_c] = params else {
        panic!("gru expects 9 parameter tensors");
    };

    let mut grad_z = vec![0.0; d_in];
    let mut grad_hp = vec![0.0; d_h];

    let mut d_cand_pre = vec![0.0; d_h];
    let mut d_upd_pre = vec![0.0; d_h];
    for i in 0..d_h {
        let u = step.update[i];
        let c = step.candidate[i];
        let g = grad_h[i];
        grad_hp[i] += g * (1.0 - u);
        d_cand_pre[i] = g * u * (1.0 - c * c);
        d_upd_pre[i] = g * (c - step.h_prev[i]) * u * (1.0 - u);
    }

    // candidate
    outer_acc(w_c.grad.data_mut(), &d_cand_pre, &step.z);
    outer_acc(u_c.grad.data_mut(), &d_cand_pre, &step.reset_h);
    add_into(b_c.grad.data_mut(), &d_cand_pre);
    matvec_t_acc(w_c.value.data(), &d_cand_pre, &mut grad_z);
    let mut d_reset_h = vec![0.0; d_h];
    matvec_t_acc(u_c.value.data(), &d_cand_pre, &mut d_reset_h);

    let mut d_rst_pre = vec![0.0; d_h];
    for i in 0..d_h {
        let r = step.reset[i];
        grad_hp[i] += d_reset_h[i] * r;
        d_rst_pre[i] = d_reset_h[i] * step.h_prev[i] * r * (1.0 - r);
    }

    // update gate
    outer_acc(w_u.grad.data_mut(), &d_upd_pre, &step.z);
    outer_acc(u_u.grad.data_mut(), &d_upd_pre, &step.h_prev);
    add_into(b_u.grad.data_mut(), &d_upd_pre);
    matvec_t_acc(w_u.value.data(), &d_upd_pre, &mut grad_z);
    matvec_t_acc(u_u.value.data(), &d_upd_pre, &mut grad_hp);

    // reset gate
    outer_acc(w_r.grad.data_mut(), &d_rst_pre, &step.z);
    outer_acc(u_r.grad.data_mut(), &d_rst_pre, &step.h_prev);
    add_into(b_r.grad.data_mut(), &d_rst_pre);
    matvec_t_acc(w_r.value.data(), &d_rst_pre, &mut grad_z);
    matvec_t_acc(u_r.value.data(), &d_rst_pre, &mut grad_hp);

    (grad_z, grad_hp)
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
