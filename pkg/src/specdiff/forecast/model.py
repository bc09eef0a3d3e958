"""Bidirectional LSTM encoder with additive attention and a dense head.

Shapes: a batch of windows ``x`` is ``(B, T)``.  Every layer runs a forward
and a backward LSTM and concatenates their hidden states, so the top layer
yields ``H`` of shape ``(B, T, 2h)``.  The attention query is the pair of
final states ``[h_fwd(T-1); h_bwd(0)]``; scores are
``v . tanh(W_h H_i + W_q q + b)``, normalised by softmax over time, and the
context ``C = sum_i alpha_i H_i`` feeds a linear head.

Everything is float64 (the forward pass also runs in ``longdouble`` for the
finite-difference oracle) and the backward pass is written out by hand.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Hyperparams:
    hidden_size: int = 32
    seq_len: int = 16
    num_layers: int = 1
    dropout: float = 0.0
    learning_rate: float = 1e-3

    def __post_init__(self):
        if self.hidden_size < 1 or self.num_layers < 1:
            raise ValueError("hidden_size and num_layers must be positive")
        if self.seq_len < 2:
            raise ValueError("seq_len must be >= 2")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")

    def to_dict(self):
        return {"hidden_size": self.hidden_size, "seq_len": self.seq_len,
                "num_layers": self.num_layers, "dropout": self.dropout,
                "learning_rate": self.learning_rate}


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def param_shapes(hp: Hyperparams):
    h = hp.hidden_size
    shapes = {}
    for layer in range(hp.num_layers):
        n_in = 1 if layer == 0 else 2 * h
        for d in "fb":
            shapes[f"W{layer}{d}"] = (4 * h, n_in + h)
            shapes[f"b{layer}{d}"] = (4 * h,)
    shapes["att_W"] = (h, 4 * h)
    shapes["att_b"] = (h,)
    shapes["att_v"] = (h,)
    shapes["out_w"] = (2 * h,)
    shapes["out_b"] = (1,)
    return shapes


def init_params(hp: Hyperparams, rng):
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)); forget-gate biases set to 1."""
    h = hp.hidden_size
    params = {}
    for name, shape in param_shapes(hp).items():
        if name.startswith("b") and name[1].isdigit():
            fan_in = shape[0] // 4 + (1 if name[1] == "0" else 2 * h)
        elif len(shape) == 2:
            fan_in = shape[1]
        elif name == "att_b":
            fan_in = 4 * h
        else:
            fan_in = shape[0]
        k = 1.0 / np.sqrt(fan_in)
        params[name] = rng.uniform(-k, k, size=shape)
        if name.startswith("b") and name[1].isdigit():
            params[name][h:2 * h] = 1.0
    return params


def _lstm_dir(U, W, b, h, reverse):
    """Run one direction over ``U`` (B, T, n_in); returns outputs and a cache."""
    B, T, _ = U.shape
    H = np.zeros((B, T, h), dtype=U.dtype)
    hp_ = np.zeros((B, h), dtype=U.dtype)
    cp_ = np.zeros((B, h), dtype=U.dtype)
    cache = []
    order = range(T - 1, -1, -1) if reverse else range(T)
    for t in order:
        xh = np.concatenate([U[:, t], hp_], axis=1)
        z = xh @ W.T + b
        i = _sigmoid(z[:, :h])
        f = _sigmoid(z[:, h:2 * h])
        g = np.tanh(z[:, 2 * h:3 * h])
        o = _sigmoid(z[:, 3 * h:])
        c = f * cp_ + i * g
        tc = np.tanh(c)
        hn = o * tc
        cache.append((t, xh, i, f, g, o, cp_, tc))
        H[:, t] = hn
        hp_, cp_ = hn, c
    return H, cache


def _lstm_dir_backward(dH, W, cache, h, n_in):
    B = dH.shape[0]
    dW = np.zeros_like(W)
    db = np.zeros(W.shape[0])
    dU = np.zeros((B, dH.shape[1], n_in))
    dh_next = np.zeros((B, h))
    dc_next = np.zeros((B, h))
    for t, xh, i, f, g, o, cprev, tc in reversed(cache):
        dh = dH[:, t] + dh_next
        do = dh * tc
        dc = dh * o * (1 - tc * tc) + dc_next
        di = dc * g
        dg = dc * i
        df = dc * cprev
        dz = np.concatenate([di * i * (1 - i), df * f * (1 - f),
                             dg * (1 - g * g), do * o * (1 - o)], axis=1)
        dW += dz.T @ xh
        db += dz.sum(axis=0)
        dxh = dz @ W
        dU[:, t] = dxh[:, :n_in]
        dh_next = dxh[:, n_in:]
        dc_next = dc * f
    return dU, dW, db


def forward_batch(params, hp: Hyperparams, x, masks=None):
    """Predict the next normalised value for each window in ``x`` (B, T).

    ``masks`` (one inverted-dropout mask per layer, shaped like that layer's
    output) enables dropout; None is inference mode.

    Returns
    -------
    y : ndarray (B,)
    alpha : ndarray (B, T)
    cache : dict
        Intermediates for :func:`backward_batch`.
    """
    x = np.asarray(x)
    if x.dtype != np.longdouble:
        x = x.astype(float)
    if x.ndim == 1:
        x = x[None, :]
    h = hp.hidden_size
    U = x[:, :, None]
    layers = []
    for layer in range(hp.num_layers):
        Hf, cf = _lstm_dir(U, params[f"W{layer}f"], params[f"b{layer}f"], h, False)
        Hb, cb = _lstm_dir(U, params[f"W{layer}b"], params[f"b{layer}b"], h, True)
        O = np.concatenate([Hf, Hb], axis=2)
        if masks is not None:
            O = O * masks[layer]
        layers.append((U.shape[2], cf, cb))
        U = O
    H = U
    T = H.shape[1]
    q = np.concatenate([H[:, T - 1, :h], H[:, 0, h:]], axis=1)
    Wh, Wq = params["att_W"][:, :2 * h], params["att_W"][:, 2 * h:]
    pre = H @ Wh.T + (q @ Wq.T + params["att_b"])[:, None, :]
    e = np.tanh(pre)
    score = e @ params["att_v"]
    score -= score.max(axis=1, keepdims=True)
    w = np.exp(score)
    alpha = w / w.sum(axis=1, keepdims=True)
    C = np.einsum("bt,btk->bk", alpha, H)
    y = C @ params["out_w"] + params["out_b"][0]
    cache = {"layers": layers, "H": H, "q": q, "e": e, "alpha": alpha, "C": C,
             "masks": masks}
    return y, alpha, cache


def backward_batch(params, hp: Hyperparams, cache, dy):
    """Gradients of a scalar loss given ``dy = dL/dy`` (B,)."""
    h = hp.hidden_size
    H, q, e, alpha, C = cache["H"], cache["q"], cache["e"], cache["alpha"], cache["C"]
    grads = {}
    grads["out_w"] = C.T @ dy
    grads["out_b"] = np.array([dy.sum()])
    dC = dy[:, None] * params["out_w"][None, :]
    dalpha = np.einsum("bk,btk->bt", dC, H)
    dH = alpha[:, :, None] * dC[:, None, :]
    dscore = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
    grads["att_v"] = np.einsum("bt,bta->a", dscore, e)
    dpre = dscore[:, :, None] * params["att_v"][None, None, :] * (1 - e * e)
    Wh, Wq = params["att_W"][:, :2 * h], params["att_W"][:, 2 * h:]
    dpre_sum = dpre.sum(axis=1)
    grads["att_W"] = np.concatenate(
        [np.einsum("bta,btk->ak", dpre, H), dpre_sum.T @ q], axis=1)
    grads["att_b"] = dpre_sum.sum(axis=0)
    dH += dpre @ Wh
    dq = dpre_sum @ Wq
    T = H.shape[1]
    dH[:, T - 1, :h] += dq[:, :h]
    dH[:, 0, h:] += dq[:, h:]
    masks = cache["masks"]
    for layer in range(hp.num_layers - 1, -1, -1):
        n_in, cf, cb = cache["layers"][layer]
        if masks is not None:
            dH = dH * masks[layer]
        dUf, grads[f"W{layer}f"], grads[f"b{layer}f"] = _lstm_dir_backward(
            dH[:, :, :h], params[f"W{layer}f"], cf, h, n_in)
        dUb, grads[f"W{layer}b"], grads[f"b{layer}b"] = _lstm_dir_backward(
            dH[:, :, h:], params[f"W{layer}b"], cb, h, n_in)
        dH = dUf + dUb
    return grads


def mse_and_grads(params, hp, x, target, masks=None):
    """Mean squared error over the batch and its parameter gradients.

    Training minimises MSE and reports its square root; the two share
    minimisers and MSE has a gradient at zero residual.
    """
    y, _, cache = forward_batch(params, hp, x, masks)
    resid = y - target
    loss = float(np.mean(resid ** 2))
    grads = backward_batch(params, hp, cache, 2.0 * resid / resid.size)
    return loss, grads


def dropout_masks(hp: Hyperparams, batch, T, rng):
    if hp.dropout == 0:
        return None
    keep = 1.0 - hp.dropout
    return [(rng.random((batch, T, 2 * hp.hidden_size)) < keep) / keep
            for _ in range(hp.num_layers)]
