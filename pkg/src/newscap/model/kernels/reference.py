"""Pure numpy decode-step kernels.

One forward and one backward kernel per timestep; the sequence loop lives in
the decoder driver. The compiled backend implements the same two entry points
with identical array contracts, so the backends are interchangeable.

Array contract (all float64, C-contiguous):
  z         (D_in,)  concat of [x_t, I_t, A_t]; x_t is pre-filled by the
                     caller, the kernel fills the attended parts
  tanh_img  (R, D_att) cached tanh activations of the image attention
  alpha     (R,)     image attention weights
  beta      (M,)     article attention weights
  gi/gf/gg/go (H,)   post-activation LSTM gates
  c_new, tanh_c, h_new, o_drop (H,)
  logits, probs (V,)
step_forward returns log(sum(exp(logits))) for the loss; step_backward
accumulates into the gradient arrays and rewrites d_h/d_c in place with the
gradients flowing to the previous timestep.
"""

import numpy as np


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def step_forward(
    W_x, W_h, b, P_img, P_h, v_att, w_art, W_ie, b_out,
    grid, a_f, h_prev, c_prev, drop_mask,
    z, tanh_img, alpha, beta, gi, gf, gg, go,
    c_new, tanh_c, h_new, o_drop, logits, probs,
):
    h_dim = h_prev.shape[0]
    d_img = grid.shape[1]
    d_w = a_f.shape[1]
    d_e = z.shape[0] - d_img - d_w

    # Additive image attention over the region grid.
    np.tanh(grid @ P_img.T + P_h @ h_prev, out=tanh_img)
    scores = tanh_img @ v_att
    scores -= scores.max()
    np.exp(scores, out=alpha)
    alpha /= alpha.sum()
    z[d_e : d_e + d_img] = alpha @ grid

    # Article attention: one logit per sentence row from [h_prev || row].
    theta = a_f @ w_art[h_dim:] + (w_art[:h_dim] @ h_prev)
    theta -= theta.max()
    np.exp(theta, out=beta)
    beta /= beta.sum()
    z[d_e + d_img :] = beta @ a_f

    # LSTM cell, gate order i, f, g, o.
    gates = W_x @ z + W_h @ h_prev + b
    gi[:] = _sigmoid(gates[:h_dim])
    gf[:] = _sigmoid(gates[h_dim : 2 * h_dim])
    gg[:] = np.tanh(gates[2 * h_dim : 3 * h_dim])
    go[:] = _sigmoid(gates[3 * h_dim :])
    c_new[:] = gf * c_prev + gi * gg
    np.tanh(c_new, out=tanh_c)
    h_new[:] = go * tanh_c

    o_drop[:] = h_new * drop_mask
    logits[:] = W_ie @ o_drop + b_out
    mx = logits.max()
    np.exp(logits - mx, out=probs)
    total = probs.sum()
    probs /= total
    return float(mx + np.log(total))


def step_backward(
    W_x, W_h, P_img, P_h, v_att, w_art, W_ie,
    grid, a_f, h_prev, c_prev,
    z, tanh_img, alpha, beta, gi, gf, gg, go, tanh_c, o_drop, drop_mask,
    d_logits, d_h, d_c,
    gW_e_row, gW_x, gW_h, gb, gP_img, gP_h, gv_att, gw_art, gW_ie, gb_out,
):
    h_dim = h_prev.shape[0]
    d_img = grid.shape[1]
    d_e = z.shape[0] - d_img - a_f.shape[1]

    gW_ie += np.outer(d_logits, o_drop)
    gb_out += d_logits
    dh = d_h + (W_ie.T @ d_logits) * drop_mask

    # LSTM cell.
    do = dh * tanh_c
    dc = d_c + dh * go * (1.0 - tanh_c * tanh_c)
    da = np.concatenate(
        [
            dc * gg * gi * (1.0 - gi),
            dc * c_prev * gf * (1.0 - gf),
            dc * gi * (1.0 - gg * gg),
            do * go * (1.0 - go),
        ]
    )
    dc_prev = dc * gf
    gW_x += np.outer(da, z)
    gW_h += np.outer(da, h_prev)
    gb += da
    dz = W_x.T @ da
    dh_prev = W_h.T @ da

    d_it = dz[d_e : d_e + d_img]
    d_at = dz[d_e + d_img :]

    # Image attention.
    dalpha = grid @ d_it
    ds = alpha * (dalpha - alpha @ dalpha)
    gv_att += tanh_img.T @ ds
    dpre = (1.0 - tanh_img * tanh_img) * np.outer(ds, v_att)
    dpre_sum = dpre.sum(axis=0)
    gP_img += dpre.T @ grid
    gP_h += np.outer(dpre_sum, h_prev)
    dh_prev += P_h.T @ dpre_sum

    # Article attention.
    dbeta = a_f @ d_at
    dtheta = beta * (dbeta - beta @ dbeta)
    theta_sum = dtheta.sum()
    gw_art[:h_dim] += theta_sum * h_prev
    gw_art[h_dim:] += a_f.T @ dtheta
    dh_prev += theta_sum * w_art[:h_dim]

    # Input embedding row of the consumed token.
    gW_e_row += dz[:d_e]

    d_h[:] = dh_prev
    d_c[:] = dc_prev
