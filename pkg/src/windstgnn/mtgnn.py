"""MTGNN variant over a fixed geographic graph.

Internal layout is (B, N, channels, time). Every block runs a gated
dilated-inception TCN, taps a skip connection, mixes over the graph with
mixhop propagation and adds a 1x1 residual of the (right-truncated) block
input.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .config import MtgnnConfig
from .params import ParamStore, rng_for, uniform
from .tensor import ShapeError, Tensor


def init_params(cfg: MtgnnConfig, seed: int = 0) -> ParamStore:
    rng = rng_for(seed, "init", "mtgnn")
    f, s = cfg.hidden, cfg.skip_dim
    branch = f // len(cfg.kernel_sizes)
    p = ParamStore()
    p["in_proj.W"] = uniform(rng, (f, cfg.input_dim, 1), cfg.input_dim)
    p["in_proj.b"] = np.zeros((f, 1))
    length = cfg.history
    for blk, d in enumerate(cfg.dilations, 1):
        for kind in ("filter", "gate"):
            for k in cfg.kernel_sizes:
                p[f"block{blk}.{kind}_k{k}.W"] = uniform(rng, (branch, f, k), f * k)
                p[f"block{blk}.{kind}_k{k}.b"] = np.zeros((branch, 1))
        for k in range(cfg.prop_depth + 1):
            p[f"block{blk}.mix.W{k}"] = uniform(rng, (f, f, 1), f * (cfg.prop_depth + 1))
        p[f"block{blk}.res.W"] = uniform(rng, (f, f, 1), f)
        p[f"block{blk}.res.b"] = np.zeros((f, 1))
        length -= (max(cfg.kernel_sizes) - 1) * d
        p[f"block{blk}.skip.W"] = uniform(rng, (s, f, max(length, 1)), f * max(length, 1))
        p[f"block{blk}.skip.b"] = np.zeros((s, 1))
    p["skip_last.W"] = uniform(rng, (s, f, max(length, 1)), f * max(length, 1))
    p["skip_last.b"] = np.zeros((s, 1))
    p["head.conv1.W"] = uniform(rng, (s, s, 1), s)
    p["head.conv1.b"] = np.zeros((s, 1))
    p["head.conv2.W"] = uniform(rng, (cfg.horizon, s, 1), s)
    p["head.conv2.b"] = np.zeros((cfg.horizon, 1))
    return p


def mixhop_matrix(a_geo: np.ndarray) -> np.ndarray:
    """Row-normalised propagation matrix D^-1 (A + I) with D_ii = 1 + sum_j A_ij."""
    a = np.asarray(a_geo, dtype=np.float64)
    a_hat = a + np.eye(a.shape[0])
    return a_hat / a_hat.sum(axis=1, keepdims=True)


def _graph_mix(a_tilde: np.ndarray, h: Tensor) -> Tensor:
    # product over the node axis of a (B, N, F, L) tensor
    b, n, f, length = h.shape
    return T.reshape(a_tilde @ T.reshape(h, (b, n, f * length)), (b, n, f, length))


def mixhop_propagate(h_in, a_tilde: np.ndarray, depth: int, beta: float) -> list[Tensor]:
    """[H0, ..., HK] with H_k = beta * H_in + (1 - beta) * A~ H_{k-1}."""
    h_in = h_in if isinstance(h_in, Tensor) else Tensor(h_in)
    squeeze = h_in.ndim == 3
    if squeeze:
        h_in = T.reshape(h_in, (1,) + h_in.shape)
    hs = [h_in]
    keep = T.scale(h_in, beta) if beta else None
    for _ in range(depth):
        spread = T.scale(_graph_mix(a_tilde, hs[-1]), 1.0 - beta)
        hs.append(spread if keep is None else keep + spread)
    if squeeze:
        hs = [T.reshape(h, h.shape[1:]) for h in hs]
    return hs


def mixhop_select(hs: list[Tensor], weights: list[Tensor]) -> Tensor:
    """Sum over hops of a per-hop 1x1 channel mix."""
    if len(hs) != len(weights):
        raise ShapeError(f"mixhop_select: {len(hs)} hops but {len(weights)} weight matrices")
    out = None
    for h, w in zip(hs, weights):
        term = T.conv1d(h, w)
        out = term if out is None else out + term
    return out


def dilated_inception(x: Tensor, kernels: list[tuple[Tensor, Tensor]], dilation: int) -> Tensor:
    """Parallel dilated convolutions, right-aligned to the largest kernel and concatenated."""
    k_max = max(w.shape[2] for w, _ in kernels)
    length = x.shape[-1]
    l_out = length - (k_max - 1) * dilation
    if l_out < 1:
        raise ShapeError(
            f"dilated_inception: length {length} too short for kernel {k_max} at dilation {dilation}"
        )
    outs = []
    for w, b in kernels:
        y = T.conv1d(x, w, dilation)
        if y.shape[-1] != l_out:
            y = y[..., -l_out:]
        outs.append(y + b)
    return T.concat(outs, axis=-2)


def gated_tcn(x: Tensor, filters, gates, dilation: int) -> Tensor:
    return T.tanh(dilated_inception(x, filters, dilation)) * T.sigmoid(dilated_inception(x, gates, dilation))


def _conv(x: Tensor, params: ParamStore, name: str, dilation: int = 1) -> Tensor:
    return T.conv1d(x, params[f"{name}.W"], dilation) + params[f"{name}.b"]


def block_lengths(cfg: MtgnnConfig, length: int) -> list[int]:
    out = []
    for d in cfg.dilations:
        length -= (max(cfg.kernel_sizes) - 1) * d
        out.append(length)
    return out


def mtgnn_forward(x, cfg: MtgnnConfig, params: ParamStore, a_geo: np.ndarray, *, return_lengths: bool = False):
    """Forecast (B, T', N, 1) from inputs (B, T, N, C); unbatched (T, N, C) also accepted."""
    x_arr = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    squeeze = x_arr.ndim == 3
    if squeeze:
        x_arr = x_arr[None]
    if x_arr.ndim != 4:
        raise ShapeError(f"mtgnn_forward: expected (B, T, N, C), got {x_arr.shape}")
    b, t, n, c = x_arr.shape
    if t < cfg.receptive_field:
        raise ShapeError(f"mtgnn_forward: history {t} below receptive field {cfg.receptive_field}")
    if t != cfg.history:
        raise ShapeError(f"mtgnn_forward: history length {t} != configured {cfg.history}")
    if c != cfg.input_dim:
        raise ShapeError(f"mtgnn_forward: {c} input channels, configured {cfg.input_dim}")
    a_tilde = mixhop_matrix(a_geo)
    if a_tilde.shape != (n, n):
        raise ShapeError(f"mtgnn_forward: graph {a_tilde.shape} for {n} turbines")

    h = _conv(Tensor(np.ascontiguousarray(x_arr.transpose(0, 2, 3, 1))), params, "in_proj")
    skip = None
    lengths = []
    for blk, d in enumerate(cfg.dilations, 1):
        filters = [(params[f"block{blk}.filter_k{k}.W"], params[f"block{blk}.filter_k{k}.b"]) for k in cfg.kernel_sizes]
        gates = [(params[f"block{blk}.gate_k{k}.W"], params[f"block{blk}.gate_k{k}.b"]) for k in cfg.kernel_sizes]
        y = gated_tcn(h, filters, gates, d)
        length = y.shape[-1]
        lengths.append(length)
        s = _conv(y, params, f"block{blk}.skip")
        skip = s if skip is None else skip + s
        hs = mixhop_propagate(y, a_tilde, cfg.prop_depth, cfg.beta)
        mixed = mixhop_select(hs, [params[f"block{blk}.mix.W{k}"] for k in range(cfg.prop_depth + 1)])
        h = mixed + _conv(h[..., -length:], params, f"block{blk}.res")
    assert lengths[-1] == t - (cfg.receptive_field - 1), (lengths, t)
    skip = skip + _conv(h, params, "skip_last")
    z = T.relu(_conv(T.relu(skip), params, "head.conv1"))
    out = _conv(z, params, "head.conv2")                            # (B, N, T', 1)
    out = T.transpose(out, (0, 2, 1, 3))                            # (B, T', N, 1)
    if squeeze:
        out = T.reshape(out, (cfg.horizon, n, 1))
    return (out, lengths) if return_lengths else out
