"""Numba vs numpy timings for the numeric kernels.

Each backend runs in its own interpreter because ``BESOVLAB_NUMBA`` is read
at import time. Times are the best of ``--repeats`` runs after one warm-up
call (which also triggers JIT compilation on the numba side).

    python benchmarks/bench_kernels.py [--repeats 3] [--json out.json]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from besovlab import kernels
from besovlab._accel import BACKEND
from besovlab.besov import BesovParams, besov_norm_difference
from besovlab.constructions import tent
from besovlab.grid import Domain, sample, standard_sampler

repeats = int(sys.argv[1])
rng = np.random.default_rng(0)


def best(fn):
    fn()
    ts = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t0)
    return min(ts)


n = 256
v = np.zeros((n, n))
v[64:192, 64:192] = rng.normal(size=(128, 128))
offs = rng.integers(-64, 65, size=(2000, 2)).astype(np.int64)
offs = offs[(offs != 0).any(1)]
coefs = rng.uniform(size=len(offs))
small = rng.normal(size=(32, 32))
dom = Domain(4.0, 512)
f = sample(tent((0.0, 0.0), 1.0), dom, 1.0)
sm = standard_sampler(dom, 256, 0)
prm = BesovParams(0.5, 4.0)
out = {
    "backend": BACKEND,
    "powersums N=256 m=2000": best(lambda: kernels.powersums(v, offs, 4.0)),
    "powersum_grad N=256 m=2000": best(lambda: kernels.powersum_grad(v, offs, coefs, 4.0, (0, n, 0, n))),
    "annulus_sup N=256 m=2000": best(lambda: kernels.annulus_sup(v, offs, coefs, 0)),
    "oracle_sums N=32": best(lambda: kernels.oracle_sums(small, 4.0)),
    "difference norm N=512": best(lambda: besov_norm_difference(f, prm, sm)),
}
print(json.dumps(out))
"""


def run_backend(flag: str, repeats: int) -> dict:
    env = dict(os.environ, BESOVLAB_NUMBA=flag)
    res = subprocess.run([sys.executable, "-c", WORKER, str(repeats)], env=env, capture_output=True,
                         text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--json", help="also write the timings here")
    args = ap.parse_args(argv)
    npy = run_backend("0", args.repeats)
    nb = run_backend("1", args.repeats)
    if nb["backend"] != "numba":
        print("numba is not importable; only the numpy timings are meaningful")
    keys = [k for k in npy if k != "backend"]
    w = max(len(k) for k in keys)
    print(f"{'kernel':<{w}}  {'numpy [s]':>10}  {'numba [s]':>10}  {'speedup':>8}")
    for k in keys:
        print(f"{k:<{w}}  {npy[k]:>10.4f}  {nb[k]:>10.4f}  {npy[k] / nb[k]:>7.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"numpy": npy, "numba": nb}, fh, indent=2, sort_keys=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
