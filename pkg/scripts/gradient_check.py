"""Finite-difference check of masked Huber through both models at tiny scale.

    python3 scripts/gradient_check.py --points 20 --entries 6
"""

import argparse
import time

import numpy as np

from windstgnn.agcrn import agcrn_forward
from windstgnn.agcrn import init_params as agcrn_init
from windstgnn.config import AgcrnConfig, MtgnnConfig
from windstgnn.graphs import sym_normalize
from windstgnn.mtgnn import init_params as mtgnn_init
from windstgnn.mtgnn import mtgnn_forward
from windstgnn.tensor import finite_difference_check
from windstgnn.training import masked_huber

AGCRN = AgcrnConfig(layers=2, hidden=8, embed_dim=3, history=12, horizon=6)
MTGNN = MtgnnConfig(blocks=2, hidden=8, skip_dim=8, history=48, horizon=6)


def problem(kind, seed, n=4, batch=2):
    rng = np.random.default_rng(seed)
    a = np.triu((rng.random((n, n)) < 0.5).astype(float), 1)
    a = a + a.T
    if kind == "agcrn":
        cfg, params = AGCRN, agcrn_init(AGCRN, n, seed)
        graph = sym_normalize(a)
        fwd = agcrn_forward
    else:
        cfg, params = MTGNN, mtgnn_init(MTGNN, seed)
        graph = a
        fwd = mtgnn_forward
    for t in params.values():
        t.data = t.data + rng.normal(0.0, 0.3, t.shape)
    x = rng.normal(size=(batch, cfg.history, n, 6))
    y = rng.normal(0.0, 4.0, size=(batch, cfg.horizon, n, 1))
    m = rng.random(y.shape) < 0.8
    return params, lambda *_: masked_huber(fwd(x, cfg, params, graph), y, m, 5.0)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--points", type=int, default=20)
    p.add_argument("--entries", type=int, default=6, help="entries probed per tensor (0: all)")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    for kind in ("agcrn", "mtgnn"):
        start = time.perf_counter()
        errs = []
        for i in range(args.points):
            params, loss = problem(kind, args.seed + i)
            errs.append(finite_difference_check(loss, list(params.values()), max_entries=args.entries or None,
                                                rng=np.random.default_rng(i)))
        print(f"{kind}: {args.points} points, {len(params)} tensors, max rel err {max(errs):.3e}, "
              f"median {np.median(errs):.3e}, {time.perf_counter() - start:.1f}s")


if __name__ == "__main__":
    main()
