"""Full-size forward passes (134 turbines, 144 -> 288 slots) with timing and parameter counts.

    python3 scripts/full_scale_shapes.py
"""

import time

import numpy as np

from windstgnn import tensor as T
from windstgnn.agcrn import agcrn_forward
from windstgnn.agcrn import init_params as agcrn_init
from windstgnn.config import AgcrnConfig, MtgnnConfig
from windstgnn.graphs import sym_normalize
from windstgnn.mtgnn import init_params as mtgnn_init
from windstgnn.mtgnn import mtgnn_forward


def main(n=134, batch=1):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(batch, 144, n, 6))
    a = np.triu((rng.random((n, n)) < 0.05).astype(float), 1)
    a = a + a.T
    with T.no_grad():
        cfg = AgcrnConfig()
        params = agcrn_init(cfg, n, 0)
        start = time.perf_counter()
        out = agcrn_forward(x, cfg, params, sym_normalize(a))
        print(f"agcrn  out {out.shape}  params {params.n_values():,}  {time.perf_counter() - start:.2f}s")

        cfg = MtgnnConfig()
        params = mtgnn_init(cfg, 0)
        start = time.perf_counter()
        out, lengths = mtgnn_forward(x, cfg, params, a, return_lengths=True)
        print(f"mtgnn  out {out.shape}  params {params.n_values():,}  {time.perf_counter() - start:.2f}s  "
              f"block lengths {lengths}")


if __name__ == "__main__":
    main()
