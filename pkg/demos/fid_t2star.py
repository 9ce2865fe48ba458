"""FID of one isochromat: the continuous T2' model against a discrete Lorentzian sum.

    python demos/fid_t2star.py
"""
import numpy as np

from t2primesim import seqio
from t2primesim.engine import SimOptions, run
from t2primesim.model import IsochromatSet, TissueParams

tissue = TissueParams(m0=1.0, t1=1.0, t2=0.02, t2prime=0.005)
iso = IsochromatSet.single(tissue)
seq = seqio.fid(ideal=True)

cont, _ = run(iso, seq, SimOptions(mode="continuous"))
off, _ = run(iso, seq, SimOptions(mode="off"))
t_ms = cont.times_us / 1000.0
t2star = 1.0 / (1 / tissue.t2 + 1 / tissue.t2prime)

print("t [ms]   T2 only   continuous   exp(-t/T2*)   discrete K:" + "".join(
    f"{k:>10d}" for k in (100, 1000, 10_000)))
disc = {k: run(iso, seq, SimOptions(mode="discrete", k=k, seed=1))[0] for k in (100, 1000, 10_000)}
for i in range(0, 161, 20):
    row = f"{t_ms[i]:6.2f}   {abs(off.samples[0, i]):7.4f}   {abs(cont.samples[0, i]):10.4f}" \
          f"   {np.exp(-t_ms[i] / 1000 / t2star):11.4f}   " + " " * 11
    row += "".join(f"{abs(disc[k].samples[0, i]):10.4f}" for k in disc)
    print(row)
