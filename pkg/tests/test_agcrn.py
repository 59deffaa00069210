import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cases import tiny_problem
from windstgnn import tensor as T
from windstgnn.agcrn import (
    agcrn_cell,
    agcrn_forward,
    dagg_adjacency,
    init_params,
    napl_gcn,
)
from windstgnn.config import AgcrnConfig
from windstgnn.graphs import sym_normalize
from windstgnn.tensor import ShapeError, Tensor, finite_difference_check


# -- independent scalar-loop oracles ----------------------------------------

def loop_dagg(e):
    n, d = e.shape
    out = np.zeros((n, n))
    for i in range(n):
        logits = [max(0.0, sum(e[i, k] * e[j, k] for k in range(d))) for j in range(n)]
        top = max(logits)
        w = [math.exp(v - top) for v in logits]
        for j in range(n):
            out[i, j] = w[j] / sum(w)
    return out


def loop_gcn(x, e, w, b, a):
    n, c_in = x.shape
    d, _, f = w.shape
    s = loop_dagg(e) + a
    for i in range(n):
        s[i, i] += 1.0
    z = np.zeros((n, f))
    for node in range(n):
        agg = [sum(s[node, j] * x[j, c] for j in range(n)) for c in range(c_in)]
        for o in range(f):
            theta = [sum(e[node, k] * w[k, c, o] for k in range(d)) for c in range(c_in)]
            bias = sum(e[node, k] * b[k, o] for k in range(d))
            z[node, o] = sum(agg[c] * theta[c] for c in range(c_in)) + bias
    return z


def sig(v):
    return 1.0 / (1.0 + np.exp(-v))


def loop_cell(x, h, e, gates, a):
    xh = np.concatenate([x, h], axis=1)
    z = sig(loop_gcn(xh, e, *gates["z"], a))
    r = sig(loop_gcn(xh, e, *gates["r"], a))
    hc = np.tanh(loop_gcn(np.concatenate([x, r * h], axis=1), e, *gates["h"], a))
    return z * h + (1 - z) * hc


def random_gates(rng, d, c_in, f):
    return {g: (rng.normal(size=(d, c_in, f)), rng.normal(size=(d, f))) for g in "zrh"}


def sym_graph(rng, n):
    a = np.triu((rng.random((n, n)) < 0.5).astype(float), 1)
    return sym_normalize(a + a.T)


# -- DAGG --------------------------------------------------------------------

def test_dagg_zero_embedding_uniform():
    np.testing.assert_allclose(dagg_adjacency(Tensor(np.zeros((5, 3)))).data, np.full((5, 5), 0.2), atol=1e-15)


def test_dagg_dominant_pair():
    e = np.full((4, 2), 0.1)
    e[1] = e[3] = [3.0, 2.0]
    out = dagg_adjacency(Tensor(e)).data
    np.testing.assert_allclose(out, loop_dagg(e), atol=1e-14)
    assert np.argmax(out[1]) in (1, 3) and out[1, 3] > out[1, 0]


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_dagg_rows_stochastic(n, d, seed):
    e = np.random.default_rng(seed).normal(0, 2, size=(n, d))
    out = dagg_adjacency(Tensor(e)).data
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)
    assert (out >= 0).all()
    np.testing.assert_allclose(out, loop_dagg(e), atol=1e-12)


# -- NAPL-GCN ----------------------------------------------------------------

def test_pure_bias_path():
    rng = np.random.default_rng(0)
    e = rng.normal(size=(3, 2))
    b = rng.normal(size=(2, 4))
    z = napl_gcn(rng.normal(size=(3, 5)), Tensor(e), Tensor(np.zeros((2, 5, 4))), Tensor(b), np.zeros((3, 3)))
    np.testing.assert_allclose(z.data, e @ b, atol=1e-14)


def test_single_node_closed_form():
    rng = np.random.default_rng(1)
    e, w, b = rng.normal(size=(1, 3)), rng.normal(size=(3, 2, 4)), rng.normal(size=(3, 4))
    x = rng.normal(size=(1, 2))
    theta = np.einsum("k,kcf->cf", e[0], w)
    # support = 1 (identity) + 1 (softmax over a single entry)
    expected = 2.0 * x[0] @ theta + e[0] @ b
    z = napl_gcn(x, Tensor(e), Tensor(w), Tensor(b), np.zeros((1, 1)))
    np.testing.assert_allclose(z.data[0], expected, atol=1e-12)


def test_full_config_gate_shape():
    rng = np.random.default_rng(2)
    e, w, b = rng.normal(size=(134, 10)), rng.normal(size=(10, 70, 64)), np.zeros((10, 64))
    z = napl_gcn(rng.normal(size=(134, 70)), Tensor(e), Tensor(w), Tensor(b), np.zeros((134, 134)))
    assert z.shape == (134, 64)


def test_gcn_channel_mismatch():
    with pytest.raises(ShapeError):
        napl_gcn(np.zeros((3, 4)), Tensor(np.zeros((3, 2))), Tensor(np.zeros((2, 5, 4))),
                 Tensor(np.zeros((2, 4))), np.zeros((3, 3)))


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_gcn_matches_loop_oracle(n, d, f, seed):
    rng = np.random.default_rng(seed)
    x, e = rng.normal(size=(n, 3)), rng.normal(size=(n, d))
    w, b = rng.normal(size=(d, 3, f)), rng.normal(size=(d, f))
    a = sym_graph(rng, n)
    np.testing.assert_allclose(napl_gcn(x, Tensor(e), Tensor(w), Tensor(b), a).data,
                               loop_gcn(x, e, w, b, a), atol=1e-11)


# -- GRU cell ----------------------------------------------------------------

def test_cell_matches_loop_oracle():
    rng = np.random.default_rng(3)
    n, d, c, f = 3, 2, 2, 4
    e = rng.normal(size=(n, d))
    gates = random_gates(rng, d, c + f, f)
    x, h, a = rng.normal(size=(n, c)), rng.normal(size=(n, f)), sym_graph(rng, n)
    got = agcrn_cell(x, h, Tensor(e), {g: (Tensor(w), Tensor(b)) for g, (w, b) in gates.items()}, a)
    np.testing.assert_allclose(got.data, loop_cell(x, h, e, gates, a), atol=1e-12)


def _saturated(rng, n, d, c, f, z_bias):
    e = np.ones((n, d))
    gates = {g: (np.zeros((d, c + f, f)), np.zeros((d, f))) for g in "zrh"}
    gates["z"] = (np.zeros((d, c + f, f)), np.full((d, f), z_bias))
    return e, {g: (Tensor(w), Tensor(b)) for g, (w, b) in gates.items()}


def test_cell_update_gate_closed_keeps_state():
    rng = np.random.default_rng(4)
    e, gates = _saturated(rng, 3, 2, 2, 4, 40.0)        # z = sigmoid(80) == 1.0
    h = rng.normal(size=(3, 4))
    out = agcrn_cell(rng.normal(size=(3, 2)) * 100, h, Tensor(e), gates, np.zeros((3, 3)))
    np.testing.assert_array_equal(out.data, h)


def test_cell_open_gate_zero_candidate():
    rng = np.random.default_rng(5)
    e, gates = _saturated(rng, 3, 2, 2, 4, -400.0)      # z == 0, candidate tanh(0) == 0
    out = agcrn_cell(rng.normal(size=(3, 2)), rng.normal(size=(3, 4)), Tensor(e), gates, np.zeros((3, 3)))
    np.testing.assert_array_equal(out.data, np.zeros((3, 4)))


# -- full forward ------------------------------------------------------------

def loop_forward(x, cfg, params, a):
    """Per-sample unrolled recurrence through agcrn_cell, then the head."""
    outs = []
    e = params["E"]
    for xs in x:
        seq = [xs[t] for t in range(cfg.history)]
        for layer in range(1, cfg.layers + 1):
            gates = {g: (params[f"layer{layer}.gate{g}.W"], params[f"layer{layer}.gate{g}.b"]) for g in "zrh"}
            h = np.zeros((xs.shape[1], cfg.hidden))
            states = []
            for x_t in seq:
                h = agcrn_cell(x_t, h, e, gates, a).data
                states.append(h)
            seq = states
        outs.append((h @ params["head.W"].data + params["head.b"].data).T[..., None])
    return np.stack(outs)


def test_forward_matches_unrolled_cells():
    rng = np.random.default_rng(6)
    cfg = AgcrnConfig(hidden=4, embed_dim=2, history=5, horizon=3)
    params = init_params(cfg, 3, seed=1)
    for t in params.values():
        t.data = t.data + rng.normal(0, 0.2, t.shape)
    x, a = rng.normal(size=(2, 5, 3, 6)), sym_graph(rng, 3)
    np.testing.assert_allclose(agcrn_forward(x, cfg, params, a).data, loop_forward(x, cfg, params, a), atol=1e-12)


def test_unbatched_input_and_wrong_history():
    cfg = AgcrnConfig(hidden=4, embed_dim=2, history=5, horizon=3)
    params = init_params(cfg, 3, seed=0)
    assert agcrn_forward(np.zeros((5, 3, 6)), cfg, params, np.zeros((3, 3))).shape == (3, 3, 1)
    with pytest.raises(ShapeError):
        agcrn_forward(np.zeros((4, 3, 6)), cfg, params, np.zeros((3, 3)))


def test_zero_input_zero_params():
    cfg = AgcrnConfig(hidden=4, embed_dim=2, history=5, horizon=3)
    params = init_params(cfg, 3, seed=0)
    for t in params.values():
        t.data = np.zeros(t.shape)
    out = agcrn_forward(np.zeros((1, 5, 3, 6)), cfg, params, np.zeros((3, 3)))
    np.testing.assert_array_equal(out.data, 0.0)


def test_parameter_names_and_count():
    cfg = AgcrnConfig()
    params = init_params(cfg, 134, 0)
    assert list(params)[0] == "E" and "layer2.gateh.W" in params and "head.b" in params
    d, f, c = 10, 64, 6
    per_layer = lambda c_in: 3 * (d * (c_in + f) * f + d * f)
    assert params.n_values() == 134 * d + per_layer(c) + per_layer(f) + f * 288 + 288


def test_forward_deterministic():
    rng = np.random.default_rng(7)
    cfg = AgcrnConfig(hidden=4, embed_dim=2, history=5, horizon=3)
    params = init_params(cfg, 4, seed=2)
    x, a = rng.normal(size=(2, 5, 4, 6)), sym_graph(rng, 4)
    assert agcrn_forward(x, cfg, params, a).data.tobytes() == agcrn_forward(x, cfg, params, a).data.tobytes()


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**31 - 1))
def test_permutation_equivariance(n, seed):
    rng = np.random.default_rng(seed)
    cfg = AgcrnConfig(hidden=4, embed_dim=2, history=4, horizon=3)
    params = init_params(cfg, n, seed=seed % 1000)
    x, a = rng.normal(size=(2, 4, n, 6)), sym_graph(rng, n)
    perm = rng.permutation(n)
    out = agcrn_forward(x, cfg, params, a).data
    params["E"] = params["E"].data[perm]
    out_p = agcrn_forward(x[:, :, perm], cfg, params, a[np.ix_(perm, perm)]).data
    np.testing.assert_allclose(out_p, out[:, :, perm], atol=1e-12)


def test_gradient_check_every_parameter():
    params, loss_fn, _ = tiny_problem("agcrn", seed=11)
    assert finite_difference_check(loss_fn, list(params.values())) < 1e-4


def test_gradient_flows_to_embedding():
    params, loss_fn, _ = tiny_problem("agcrn", seed=12)
    T.backward(loss_fn())
    assert np.abs(params["E"].grad).sum() > 0
