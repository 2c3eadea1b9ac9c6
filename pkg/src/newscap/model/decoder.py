"""Template-caption decoder: forward pass, manual backward pass, greedy
generation, and the attention primitives.

The decoder is a single-layer LSTM consuming, at each step, the previous
word embedding concatenated with attended image features and attended
article features. Everything runs in float64; gradients come from reverse
accumulation through the step kernels and are finite-difference checked in
the test suite.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from ..embeddings import END_ID, START_ID
from . import kernels
from .params import ModelDims, ModelParams, zero_grads

MAX_TEMPLATE_LEN = 31  # caption tokens, before <start>/<end>


@dataclass
class DecoderState:
    h: np.ndarray
    c: np.ndarray
    t: int = 0


@dataclass
class AttentionTrace:
    """Per-timestep attention weights recorded during generation."""

    alphas: np.ndarray  # (T, R)
    betas: np.ndarray   # (T, M)

    def __len__(self) -> int:
        return self.alphas.shape[0]

    def to_json(self) -> dict:
        return {
            "alphas": [[float(x) for x in row] for row in self.alphas],
            "betas": [[float(x) for x in row] for row in self.betas],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AttentionTrace":
        return cls(
            alphas=np.array(obj["alphas"], dtype=np.float64).reshape(
                len(obj["alphas"]), -1
            ),
            betas=np.array(obj["betas"], dtype=np.float64).reshape(
                len(obj["betas"]), -1
            ),
        )


class SequenceCache:
    """Per-timestep activations kept for the backward pass."""

    def __init__(self, dims: ModelDims, n_steps: int):
        self.dims = dims
        self.n_steps = n_steps
        t, h = n_steps, dims.hidden
        self.prev_ids = np.zeros(t, dtype=np.int64)
        self.gold_ids = np.zeros(t, dtype=np.int64)
        self.Z = np.zeros((t, dims.d_in))
        self.TANH_IMG = np.zeros((t, dims.regions, dims.d_att))
        self.ALPHA = np.zeros((t, dims.regions))
        self.BETA = np.zeros((t, dims.sentences))
        self.GI = np.zeros((t, h))
        self.GF = np.zeros((t, h))
        self.GG = np.zeros((t, h))
        self.GO = np.zeros((t, h))
        self.C = np.zeros((t, h))
        self.TANH_C = np.zeros((t, h))
        self.H = np.zeros((t, h))
        self.ODROP = np.zeros((t, h))
        self.MASK = np.ones((t, h))
        self.LOGITS = np.zeros((t, dims.vocab))
        self.PROBS = np.zeros((t, dims.vocab))
        self.LOGZ = np.zeros(t)
        self.h0 = np.zeros(h)
        self.c0 = np.zeros(h)
        self.grid: np.ndarray | None = None
        self.a_f: np.ndarray | None = None

    def state_before(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        if t == 0:
            return self.h0, self.c0
        return self.H[t - 1], self.C[t - 1]


def _check_inputs(dims: ModelDims, grid: np.ndarray, a_f: np.ndarray) -> None:
    if grid.shape != (dims.regions, dims.d_img):
        raise ValueError(
            f"image grid shape {grid.shape} does not match model "
            f"({dims.regions}, {dims.d_img})"
        )
    if a_f.shape != (dims.sentences, dims.d_w):
        raise ValueError(
            f"article encoding shape {a_f.shape} does not match model "
            f"({dims.sentences}, {dims.d_w})"
        )


def _run_step(params: ModelParams, cache: SequenceCache, t: int, prev_id: int) -> None:
    if not (0 <= prev_id < params.dims.vocab):
        raise ValueError(f"token id {prev_id} outside vocabulary")
    h_prev, c_prev = cache.state_before(t)
    cache.prev_ids[t] = prev_id
    cache.Z[t, : params.dims.d_e] = params.W_e[prev_id]
    cache.LOGZ[t] = kernels.step_forward(
        params.W_x, params.W_h, params.b, params.P_img, params.P_h,
        params.v_att, params.w_art, params.W_ie, params.b_out,
        cache.grid, cache.a_f, h_prev, c_prev, cache.MASK[t],
        cache.Z[t], cache.TANH_IMG[t], cache.ALPHA[t], cache.BETA[t],
        cache.GI[t], cache.GF[t], cache.GG[t], cache.GO[t],
        cache.C[t], cache.TANH_C[t], cache.H[t], cache.ODROP[t],
        cache.LOGITS[t], cache.PROBS[t],
    )


def forward_loss(
    token_ids,
    grid: np.ndarray,
    a_f: np.ndarray,
    params: ModelParams,
    dropout_p: float = 0.0,
    rng: np.random.Generator | None = None,
) -> tuple[float, SequenceCache]:
    """Teacher-forced cross-entropy of a template id sequence, averaged over
    predicted positions. The sequence must be <start> ... <end> and at most
    MAX_TEMPLATE_LEN + 2 ids long. Returns the loss and the activation cache
    for backward()."""
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.size < 2:
        raise ValueError("token sequence needs at least <start> and <end>")
    if ids.size > MAX_TEMPLATE_LEN + 2:
        raise ValueError(
            f"token sequence longer than {MAX_TEMPLATE_LEN + 2} ids"
        )
    if ids[0] != START_ID or ids[-1] != END_ID:
        raise ValueError("token sequence must start with <start> and end with <end>")
    _check_inputs(params.dims, grid, a_f)

    n_steps = ids.size - 1
    cache = SequenceCache(params.dims, n_steps)
    cache.grid = np.ascontiguousarray(grid, dtype=np.float64)
    cache.a_f = np.ascontiguousarray(a_f, dtype=np.float64)
    if dropout_p > 0.0:
        if rng is None:
            raise ValueError("dropout needs an rng")
        keep = rng.random((n_steps, params.dims.hidden)) >= dropout_p
        cache.MASK[:] = keep / (1.0 - dropout_p)

    total = 0.0
    for t in range(n_steps):
        _run_step(params, cache, t, int(ids[t]))
        gold = int(ids[t + 1])
        cache.gold_ids[t] = gold
        total += cache.LOGZ[t] - cache.LOGITS[t, gold]
    return total / n_steps, cache


def backward(cache: SequenceCache, params: ModelParams) -> dict[str, np.ndarray]:
    """Exact gradients of the forward_loss value for every parameter tensor."""
    dims = params.dims
    grads = zero_grads(dims)
    d_h = np.zeros(dims.hidden)
    d_c = np.zeros(dims.hidden)
    d_logits = np.zeros(dims.vocab)
    scale = 1.0 / cache.n_steps
    for t in range(cache.n_steps - 1, -1, -1):
        np.copyto(d_logits, cache.PROBS[t])
        d_logits[cache.gold_ids[t]] -= 1.0
        d_logits *= scale
        h_prev, c_prev = cache.state_before(t)
        kernels.step_backward(
            params.W_x, params.W_h, params.P_img, params.P_h,
            params.v_att, params.w_art, params.W_ie,
            cache.grid, cache.a_f, h_prev, c_prev,
            cache.Z[t], cache.TANH_IMG[t], cache.ALPHA[t], cache.BETA[t],
            cache.GI[t], cache.GF[t], cache.GG[t], cache.GO[t],
            cache.TANH_C[t], cache.ODROP[t], cache.MASK[t],
            d_logits, d_h, d_c,
            grads["W_e"][cache.prev_ids[t]], grads["W_x"], grads["W_h"],
            grads["b"], grads["P_img"], grads["P_h"], grads["v_att"],
            grads["w_art"], grads["W_ie"], grads["b_out"],
        )
    return grads


def decode_step(
    state: DecoderState,
    prev_token_id: int,
    grid: np.ndarray,
    a_f: np.ndarray,
    params: ModelParams,
    dropout_active: bool = False,
    dropout_p: float = 0.2,
    rng: np.random.Generator | None = None,
):
    """One decoder step. Returns (logits, new state, alpha, beta)."""
    _check_inputs(params.dims, grid, a_f)
    cache = SequenceCache(params.dims, 1)
    cache.grid = np.ascontiguousarray(grid, dtype=np.float64)
    cache.a_f = np.ascontiguousarray(a_f, dtype=np.float64)
    cache.h0 = np.asarray(state.h, dtype=np.float64)
    cache.c0 = np.asarray(state.c, dtype=np.float64)
    if dropout_active and dropout_p > 0.0:
        if rng is None:
            raise ValueError("dropout needs an rng")
        # Inverted dropout: inference needs no rescaling.
        cache.MASK[0] = (rng.random(params.dims.hidden) >= dropout_p) / (1.0 - dropout_p)
    _run_step(params, cache, 0, int(prev_token_id))
    new_state = DecoderState(h=cache.H[0].copy(), c=cache.C[0].copy(), t=state.t + 1)
    return cache.LOGITS[0].copy(), new_state, cache.ALPHA[0].copy(), cache.BETA[0].copy()


def initial_state(dims: ModelDims) -> DecoderState:
    return DecoderState(h=np.zeros(dims.hidden), c=np.zeros(dims.hidden), t=0)


def generate(
    grid: np.ndarray,
    a_f: np.ndarray,
    params: ModelParams,
    max_len: int = MAX_TEMPLATE_LEN,
) -> tuple[list[int], AttentionTrace]:
    """Greedy decoding from <start>; stops at <end> or max_len tokens.

    Ties resolve to the lowest token id. The returned trace has one
    (alpha, beta) row per emitted token."""
    _check_inputs(params.dims, grid, a_f)
    dims = params.dims
    cache = SequenceCache(dims, 1)
    cache.grid = np.ascontiguousarray(grid, dtype=np.float64)
    cache.a_f = np.ascontiguousarray(a_f, dtype=np.float64)

    out: list[int] = []
    alphas: list[np.ndarray] = []
    betas: list[np.ndarray] = []
    prev = START_ID
    h = np.zeros(dims.hidden)
    c = np.zeros(dims.hidden)
    for _ in range(max_len):
        cache.h0[:] = h
        cache.c0[:] = c
        _run_step(params, cache, 0, prev)
        tok = int(np.argmax(cache.LOGITS[0]))
        if tok == END_ID:
            break
        out.append(tok)
        alphas.append(cache.ALPHA[0].copy())
        betas.append(cache.BETA[0].copy())
        h[:] = cache.H[0]
        c[:] = cache.C[0]
        prev = tok
    trace = AttentionTrace(
        alphas=np.array(alphas).reshape(len(out), dims.regions),
        betas=np.array(betas).reshape(len(out), dims.sentences),
    )
    return out, trace


def image_attention(
    h_prev: np.ndarray, grid: np.ndarray, params: ModelParams
) -> tuple[np.ndarray, np.ndarray]:
    """Additive attention over image regions: returns (attended feature,
    weights)."""
    scores = np.tanh(grid @ params.P_img.T + params.P_h @ h_prev) @ params.v_att
    scores = scores - scores.max()
    alpha = np.exp(scores)
    alpha /= alpha.sum()
    return alpha @ grid, alpha


def article_attention(
    h_prev: np.ndarray, a_f: np.ndarray, params: ModelParams
) -> tuple[np.ndarray, np.ndarray]:
    """Linear attention over article sentence rows: returns (attended
    feature, weights)."""
    h_dim = h_prev.shape[0]
    theta = a_f @ params.w_art[h_dim:] + params.w_art[:h_dim] @ h_prev
    theta = theta - theta.max()
    beta = np.exp(theta)
    beta /= beta.sum()
    return beta @ a_f, beta


def pseudo_image_features(sample_id: str, regions: int, d_img: int) -> np.ndarray:
    """Deterministic stand-in image feature grid seeded from the sample id,
    entries in [-1, 1]."""
    digest = hashlib.sha256(sample_id.encode("utf-8")).digest()
    seed = int.from_bytes(digest[:8], "little")
    rng = np.random.Generator(np.random.PCG64(seed))
    return rng.uniform(-1.0, 1.0, size=(regions, d_img))
