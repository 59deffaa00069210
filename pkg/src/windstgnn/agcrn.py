"""AGCRN variant: node-adaptive graph convolution inside GRU cells.

The graph support is ``I + softmax(relu(E E^T)) + A_dtw_norm``; per-node
weights are factorised through the same embedding ``E``. Gate layout:

    z  = sigmoid(GCN_z([x || h]))
    r  = sigmoid(GCN_r([x || h]))
    hc = tanh(GCN_h([x || r * h]))
    h' = z * h + (1 - z) * hc
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .config import AgcrnConfig
from .params import ParamStore, rng_for, uniform
from .tensor import ShapeError, Tensor

GATES = ("z", "r", "h")


def init_params(cfg: AgcrnConfig, n_nodes: int, seed: int = 0) -> ParamStore:
    rng = rng_for(seed, "init", "agcrn")
    d, f = cfg.embed_dim, cfg.hidden
    p = ParamStore()
    p["E"] = uniform(rng, (n_nodes, d), d)
    c_in = cfg.input_dim
    for layer in range(1, cfg.layers + 1):
        for g in GATES:
            p[f"layer{layer}.gate{g}.W"] = uniform(rng, (d, c_in + f, f), c_in + f)
            p[f"layer{layer}.gate{g}.b"] = np.zeros((d, f))
        c_in = f
    p["head.W"] = uniform(rng, (f, cfg.horizon), f)
    p["head.b"] = np.zeros(cfg.horizon)
    return p


def dagg_adjacency(e: Tensor) -> Tensor:
    """Row-stochastic learned adjacency softmax(relu(E E^T))."""
    return T.softmax(T.relu(e @ T.transpose(e)), axis=1)


def support(e: Tensor, a_dtw_norm: np.ndarray) -> Tensor:
    n = e.shape[0]
    return dagg_adjacency(e) + (np.eye(n) + np.asarray(a_dtw_norm, dtype=np.float64))


def napl_weights(e: Tensor, w: Tensor, b: Tensor) -> tuple[Tensor, Tensor]:
    """Per-node Theta = E W (N, C_in, F) and bias E b (N, F)."""
    d, c_in, f = w.shape
    theta = T.reshape(e @ T.reshape(w, (d, c_in * f)), (e.shape[0], c_in, f))
    return theta, e @ b


def napl_gcn(x, e: Tensor, w: Tensor, b: Tensor, a_dtw_norm: np.ndarray) -> Tensor:
    """One graph convolution ``(I + DAGG + A_dtw) X Theta_n + b_n`` for X of shape (N, C_in)."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.ndim != 2 or x.shape[1] != w.shape[1] or x.shape[0] != e.shape[0]:
        raise ShapeError(f"napl_gcn: input {x.shape} vs weight pool {w.shape}, embedding {e.shape}")
    theta, bias = napl_weights(e, w, b)
    ax = support(e, a_dtw_norm) @ x                       # (N, C_in)
    z = T.reshape(T.reshape(ax, (ax.shape[0], 1, ax.shape[1])) @ theta, (ax.shape[0], -1))
    return z + bias


def agcrn_cell(x_t, h_prev, e: Tensor, gate_params: dict, a_dtw_norm: np.ndarray) -> Tensor:
    """Single-sample GRU step; ``gate_params`` maps gate name -> (W, b)."""
    x_t = x_t if isinstance(x_t, Tensor) else Tensor(x_t)
    h_prev = h_prev if isinstance(h_prev, Tensor) else Tensor(h_prev)
    xh = T.concat([x_t, h_prev], axis=1)
    z = T.sigmoid(napl_gcn(xh, e, *gate_params["z"], a_dtw_norm))
    r = T.sigmoid(napl_gcn(xh, e, *gate_params["r"], a_dtw_norm))
    xrh = T.concat([x_t, r * h_prev], axis=1)
    hc = T.tanh(napl_gcn(xrh, e, *gate_params["h"], a_dtw_norm))
    return z * h_prev + (1.0 - z) * hc


def _layer_inputs(seq, s: Tensor, e: Tensor, params: ParamStore, layer: int, hidden: int):
    """Input-side gate pre-activations for every step, plus the recurrent weights.

    ``seq`` is (N, T*B, C), time-major along the middle axis.
    """
    n, tb, c = seq.shape
    f = hidden
    thetas, biases = [], []
    for g in GATES:
        th, bi = napl_weights(e, params[f"layer{layer}.gate{g}.W"], params[f"layer{layer}.gate{g}.b"])
        thetas.append(th)
        biases.append(bi)
    theta_x = T.concat([th[:, :c, :] for th in thetas], axis=2)          # (N, C, 3F)
    theta_h_zr = T.concat([thetas[0][:, c:, :], thetas[1][:, c:, :]], axis=2)  # (N, F, 2F)
    theta_h_h = thetas[2][:, c:, :]                                      # (N, F, F)
    bias = T.reshape(T.concat(biases, axis=1), (n, 1, 3 * f))

    # the x-part of every gate, all time steps at once
    sx = T.reshape(s @ T.reshape(seq, (n, tb * c)), (n, tb, c))
    xpart = sx @ theta_x + bias                                           # (N, T*B, 3F)
    return xpart, theta_h_zr, theta_h_h


def agcrn_forward(x, cfg: AgcrnConfig, params: ParamStore, a_dtw_norm: np.ndarray) -> Tensor:
    """Forecast (B, T', N, 1) from inputs (B, T, N, C); unbatched (T, N, C) also accepted."""
    x_arr = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    squeeze = x_arr.ndim == 3
    if squeeze:
        x_arr = x_arr[None]
    if x_arr.ndim != 4:
        raise ShapeError(f"agcrn_forward: expected (B, T, N, C), got {x_arr.shape}")
    b, t, n, c = x_arr.shape
    if t != cfg.history:
        raise ShapeError(f"agcrn_forward: history length {t} != configured {cfg.history}")
    if c != cfg.input_dim:
        raise ShapeError(f"agcrn_forward: {c} input channels, configured {cfg.input_dim}")
    e = params["E"]
    if e.shape[0] != n:
        raise ShapeError(f"agcrn_forward: {n} turbines but embedding has {e.shape[0]} rows")
    f = cfg.hidden
    s = support(e, a_dtw_norm)

    # node-major, time-major layout: (N, T*B, C)
    seq = Tensor(np.ascontiguousarray(x_arr.transpose(2, 1, 0, 3)).reshape(n, t * b, c))
    h = None
    for layer in range(1, cfg.layers + 1):
        xpart, theta_h_zr, theta_h_h = _layer_inputs(seq, s, e, params, layer, f)
        h = Tensor(np.zeros((n, b, f)))
        states = []
        for step in range(t):
            xp = xpart[:, step * b : (step + 1) * b, :]                       # (N, B, 3F)
            sh = T.reshape(s @ T.reshape(h, (n, b * f)), (n, b, f))
            zr = T.sigmoid(xp[:, :, : 2 * f] + sh @ theta_h_zr)
            z, r = zr[:, :, :f], zr[:, :, f:]
            srh = T.reshape(s @ T.reshape(r * h, (n, b * f)), (n, b, f))
            hc = T.tanh(xp[:, :, 2 * f :] + srh @ theta_h_h)
            h = hc + z * (h - hc)
            states.append(h)
        if layer < cfg.layers:
            seq = T.concat(states, axis=1)                                     # (N, T*B, F)
    out = h @ params["head.W"] + params["head.b"]                              # (N, B, T')
    out = T.reshape(T.transpose(out, (1, 2, 0)), (b, cfg.horizon, n, 1))
    if squeeze:
        out = T.reshape(out, (cfg.horizon, n, 1))
    return out
