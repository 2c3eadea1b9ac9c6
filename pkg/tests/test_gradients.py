"""Finite-difference verification of the manual backward pass.

Central differences with eps=1e-5 at float64. The relative error denominator
is floored at 1e-5 so that mathematically-zero gradients (for example the
hidden-state half of the article-attention weights, whose contribution is
softmax shift-invariant) are compared at a sensible absolute scale.
"""

import numpy as np

from newscap.embeddings import END_ID, START_ID
from newscap.model import ModelDims, backward, forward_loss, init_params

EPS = 1e-5
REL_TOL = 1e-4
DENOM_FLOOR = 1e-5


def finite_difference_check(dims, seed=3, seq=None):
    params = init_params(dims, seed=seed)
    rng = np.random.Generator(np.random.PCG64(seed + 100))
    grid = rng.uniform(-1, 1, (dims.regions, dims.d_img))
    a_f = rng.uniform(-1, 1, (dims.sentences, dims.d_w))
    if seq is None:
        seq = [START_ID] + rng.integers(4, dims.vocab, size=5).tolist() + [END_ID]

    _, cache = forward_loss(seq, grid, a_f, params)
    grads = backward(cache, params)

    worst = {}
    for name, tensor in params.named_tensors():
        fd = np.zeros_like(tensor)
        it = np.nditer(tensor, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = tensor[idx]
            tensor[idx] = orig + EPS
            lp, _ = forward_loss(seq, grid, a_f, params)
            tensor[idx] = orig - EPS
            lm, _ = forward_loss(seq, grid, a_f, params)
            tensor[idx] = orig
            fd[idx] = (lp - lm) / (2 * EPS)
            it.iternext()
        g = grads[name]
        rel = np.abs(g - fd) / np.maximum(np.maximum(np.abs(g), np.abs(fd)), DENOM_FLOOR)
        worst[name] = float(rel.max())
    return worst


class TestGradients:
    def test_all_tensors_match_central_differences(self):
        dims = ModelDims(
            vocab=20, d_e=8, d_img=5, d_w=6, hidden=16, regions=4, sentences=3, d_att=4
        )
        worst = finite_difference_check(dims)
        for name, err in worst.items():
            assert err < REL_TOL, f"{name}: max relative error {err:.3e}"

    def test_single_step_sequence(self):
        dims = ModelDims(
            vocab=8, d_e=4, d_img=3, d_w=3, hidden=6, regions=2, sentences=2, d_att=3
        )
        worst = finite_difference_check(dims, seed=11, seq=[START_ID, 5, END_ID])
        assert max(worst.values()) < REL_TOL

    def test_gradients_change_with_seed(self):
        # Guard against a backward pass that ignores its inputs.
        dims = ModelDims(
            vocab=8, d_e=4, d_img=3, d_w=3, hidden=6, regions=2, sentences=2, d_att=3
        )
        rng = np.random.Generator(np.random.PCG64(0))
        grid = rng.uniform(-1, 1, (2, 3))
        a_f = rng.uniform(-1, 1, (2, 3))
        seq = [START_ID, 5, 6, END_ID]
        g1 = backward(forward_loss(seq, grid, a_f, init_params(dims, 1))[1], init_params(dims, 1))
        g2 = backward(forward_loss(seq, grid, a_f, init_params(dims, 2))[1], init_params(dims, 2))
        assert not np.allclose(g1["W_x"], g2["W_x"])
