"""Wall-clock grid: T2' on/off, combined transitions on/off, analytic vs stepped free intervals.

    python demos/benchmark.py [n_isochromats]
"""
import sys

import numpy as np

from t2primesim import engine, seqio
from t2primesim.engine import SimOptions
from t2primesim.model import IsochromatSet

n = int(sys.argv[1]) if len(sys.argv) > 1 else 2000
rng = np.random.default_rng(0)
isos = IsochromatSet(rng.uniform(-0.1, 0.1, (n, 3)), np.ones(n), rng.uniform(0.3, 1.5, n),
                     rng.uniform(0.03, 0.2, n), np.full(n, 0.03), rng.normal(0, 10, n),
                     np.zeros(n))

print(f"FID, {n} isochromats")
print(engine.benchmark(isos, seqio.fid()).to_csv())
print(f"SPGR 128 lines, 2 ms pulse, {n} isochromats")
print(engine.benchmark(isos, seqio.spgr(128, 0.012, 0.005, pulse_us=2000),
                       include_update=False).to_csv())
