"""Dense kernels for the ranking model: matmul, row softmax, layer norm,
LSTM/BiLSTM, and a finite-difference gradient checker.

Everything is double precision numpy.  Each kernel has a hand-written
backward companion; the model wires them into a fixed reverse-mode chain,
so no general autodiff tape is needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Parameter:
    """A value array with a same-shaped gradient accumulator."""

    value: np.ndarray
    grad: np.ndarray

    @classmethod
    def of(cls, value: np.ndarray) -> "Parameter":
        value = np.asarray(value, dtype=np.float64)
        return cls(value=value, grad=np.zeros_like(value))

    def zero_grad(self) -> None:
        self.grad[...] = 0.0


def as_tensor2(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite values in tensor")
    return x


def matmul(a, b) -> np.ndarray:
    a, b = as_tensor2(a), as_tensor2(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def matmul_backward(dout, a, b) -> tuple[np.ndarray, np.ndarray]:
    return dout @ b.T, a.T @ dout


def softmax_rows(x, mask=None) -> np.ndarray:
    """Numerically stable row softmax.  ``mask`` marks valid columns
    (broadcastable boolean); masked columns get weight 0 and a fully masked
    row is an error."""
    x = as_tensor2(x)
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        if not mask.any(axis=1).all():
            raise ValueError("softmax row with every column masked")
        x = np.where(mask, x, -np.inf)
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows_backward(dout, y) -> np.ndarray:
    # dL/dx = y * (dout - sum(dout * y)); masked entries have y == 0.
    s = (dout * y).sum(axis=1, keepdims=True)
    return y * (dout - s)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> np.ndarray:
    y, _ = layer_norm_with_cache(x, gain, bias, eps)
    return y


def layer_norm_with_cache(x, gain, bias, eps: float = 1e-5):
    """Per-row standardization followed by the learnable affine map."""
    x = as_tensor2(x)
    gain = np.asarray(gain, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if gain.shape != (x.shape[1],) or bias.shape != (x.shape[1],):
        raise ValueError("gain/bias length must equal the column count")
    mean = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * inv_std
    y = gain * xhat + bias
    return y, (xhat, inv_std, gain)


def layer_norm_backward(dout, cache) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xhat, inv_std, gain = cache
    dgain = (dout * xhat).sum(axis=0)
    dbias = dout.sum(axis=0)
    dxhat = dout * gain
    m1 = dxhat.mean(axis=1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=1, keepdims=True)
    dx = inv_std * (dxhat - m1 - xhat * m2)
    return dx, dgain, dbias


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def lstm_forward(x, W, U, b):
    """Run an LSTM over x (n x d) with gates ordered (input, forget, cell,
    output).  W: d x 4h, U: h x 4h, b: 4h.  Returns (h_seq n x h, cache)."""
    x = as_tensor2(x)
    n, _ = x.shape
    h_dim = U.shape[0]
    h_prev = np.zeros(h_dim)
    c_prev = np.zeros(h_dim)
    h_seq = np.zeros((n, h_dim))
    steps = []
    for t in range(n):
        a = x[t] @ W + h_prev @ U + b
        i = _sigmoid(a[:h_dim])
        f = _sigmoid(a[h_dim:2 * h_dim])
        g = np.tanh(a[2 * h_dim:3 * h_dim])
        o = _sigmoid(a[3 * h_dim:])
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        steps.append((x[t], h_prev, c_prev, i, f, g, o, c, tc))
        h_prev, c_prev = h, c
        h_seq[t] = h
    return h_seq, (steps, W, U)


def lstm_backward(dh_seq, cache):
    """BPTT.  Returns (dx, dW, dU, db)."""
    steps, W, U = cache
    n = len(steps)
    h_dim = U.shape[0]
    dW = np.zeros_like(W)
    dU = np.zeros_like(U)
    db = np.zeros(4 * h_dim)
    dx = np.zeros((n, W.shape[0]))
    dh_next = np.zeros(h_dim)
    dc_next = np.zeros(h_dim)
    for t in range(n - 1, -1, -1):
        x_t, h_prev, c_prev, i, f, g, o, c, tc = steps[t]
        dh = dh_seq[t] + dh_next
        do = dh * tc
        dc = dh * o * (1.0 - tc * tc) + dc_next
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dc_next = dc * f
        da = np.concatenate([di * i * (1 - i),
                             df * f * (1 - f),
                             dg * (1 - g * g),
                             do * o * (1 - o)])
        dW += np.outer(x_t, da)
        dU += np.outer(h_prev, da)
        db += da
        dx[t] = W @ da
        dh_next = U @ da
    return dx, dW, dU, db


def bilstm_encode(x, fwd, bwd) -> np.ndarray:
    k, _ = bilstm_encode_with_cache(x, fwd, bwd)
    return k


def bilstm_encode_with_cache(x, fwd, bwd):
    """Concatenate forward and reversed-backward LSTM states per position.

    ``fwd``/``bwd`` are (W, U, b) triples.  Output row t is
    [forward state at t ; backward state at t], dimension 2h.
    """
    x = as_tensor2(x)
    if x.shape[0] < 1:
        raise ValueError("empty sequence")
    hf, cache_f = lstm_forward(x, *fwd)
    hb_rev, cache_b = lstm_forward(x[::-1], *bwd)
    hb = hb_rev[::-1]
    return np.concatenate([hf, hb], axis=1), (cache_f, cache_b, hf.shape[1])


def bilstm_backward(dk, cache):
    """Returns (dx, (dWf, dUf, dbf), (dWb, dUb, dbb))."""
    cache_f, cache_b, h_dim = cache
    dhf = dk[:, :h_dim]
    dhb = dk[:, h_dim:]
    dx_f, dWf, dUf, dbf = lstm_backward(dhf, cache_f)
    dx_b_rev, dWb, dUb, dbb = lstm_backward(dhb[::-1], cache_b)
    dx = dx_f + dx_b_rev[::-1]
    return dx, (dWf, dUf, dbf), (dWb, dUb, dbb)


def finite_diff_check(loss_fn, params, eps: float = 1e-5) -> float:
    """Compare analytic gradients with central differences.

    ``loss_fn()`` must zero the grads, run the forward pass, backpropagate
    into every Parameter in ``params`` (dict or list), and return the scalar
    loss.  Returns the maximum elementwise relative error."""
    if isinstance(params, dict):
        plist = list(params.values())
    else:
        plist = list(params)
    loss_fn()
    analytic = [p.grad.copy() for p in plist]
    worst = 0.0
    for p, a in zip(plist, analytic):
        flat = p.value.reshape(-1)
        aflat = a.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            up = loss_fn()
            flat[idx] = orig - eps
            down = loss_fn()
            flat[idx] = orig
            numeric = (up - down) / (2.0 * eps)
            denom = max(abs(aflat[idx]), abs(numeric), 1.0)
            worst = max(worst, abs(aflat[idx] - numeric) / denom)
    loss_fn()  # restore analytic grads for the unperturbed point
    return worst
