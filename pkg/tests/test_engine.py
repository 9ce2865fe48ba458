import math

import numpy as np
import pytest

from t2primesim import engine, seqio
from t2primesim.engine import SimOptions, run
from t2primesim.errors import SimulationError
from t2primesim.model import Isochromat, IsochromatSet, TissueParams, make_circles_phantom
from t2primesim.sampling import CoilSensitivity

FID_TISSUE = TissueParams(1.0, 1.0, 0.02, 0.005)


def random_set(n, seed=0, t2p=0.03):
    rng = np.random.default_rng(seed)
    return IsochromatSet(rng.uniform(-0.1, 0.1, (n, 3)), rng.uniform(0.5, 1, n),
                         rng.uniform(0.3, 1.5, n), rng.uniform(0.03, 0.2, n),
                         np.full(n, t2p), rng.normal(0, 10, n), np.zeros(n))


def test_options_validation():
    with pytest.raises(ValueError):
        SimOptions(mode="random")
    with pytest.raises(ValueError):
        SimOptions(mode="discrete", k=0)
    with pytest.raises(ValueError):
        SimOptions(partials=0)
    with pytest.raises(ValueError):
        SimOptions(combined="maybe")


def test_empty_phantom_zero_stream():
    empty = IsochromatSet(np.zeros((0, 3)), [], [], [], [], [], [])
    s, rep = run(empty, seqio.fid())
    assert s.num_samples == 190 and not s.samples.any()
    assert rep.isochromats == 0


def test_fid_t2star_law():
    s, _ = run(IsochromatSet.single(FID_TISSUE), seqio.fid(ideal=True))
    t = s.times_us * 1e-6
    np.testing.assert_allclose(np.abs(s.samples[0]), np.exp(-t / 0.004), rtol=1e-12)


def test_fid_sinc_decay_after_pulse():
    s, _ = run(IsochromatSet.single(FID_TISSUE), seqio.fid())
    mag = np.abs(s.samples[0])
    # ratio of successive samples equals the T2* decay over one dwell
    np.testing.assert_allclose(mag[1:] / mag[:-1], math.exp(-50e-6 / 0.004), rtol=1e-4)


def test_discrete_matches_continuous():
    iso = IsochromatSet.single(FID_TISSUE)
    seq = seqio.fid(ideal=True)
    c, _ = run(iso, seq)
    d, rep = run(iso, seq, SimOptions(mode="discrete", k=100_000, seed=3))
    m = c.times_us <= 8000
    rms = np.sqrt(np.mean(np.abs(d.samples[0, m] - c.samples[0, m]) ** 2)
                  / np.mean(np.abs(c.samples[0, m]) ** 2))
    assert rms < 0.01
    assert rep.isochromats == 100_000


def test_discrete_seed_and_repeatability():
    iso = random_set(20)
    seq = seqio.fid()
    a, _ = run(iso, seq, SimOptions(mode="discrete", k=50, seed=1))
    b, _ = run(iso, seq, SimOptions(mode="discrete", k=50, seed=1, workers=3))
    c, _ = run(iso, seq, SimOptions(mode="discrete", k=50, seed=2))
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)


@pytest.mark.parametrize("mode", ["continuous", "off"])
def test_worker_and_partial_invariance(mode):
    iso = random_set(3000)
    seq = seqio.spgr(4, 0.012, 0.005)
    ref, _ = run(iso, seq, SimOptions(mode=mode, chunk_size=256))
    for w, p in ((2, 1), (8, 1), (3, 5), (1, 20)):
        s, _ = run(iso, seq, SimOptions(mode=mode, workers=w, partials=p, chunk_size=256))
        assert np.array_equal(s.samples, ref.samples)


def test_off_equals_infinite_t2prime():
    iso = random_set(500, t2p=math.inf)
    for seq in (seqio.fid(), seqio.cpmg_demo(), seqio.spgr(4, 0.012, 0.005)):
        a, _ = run(iso, seq, SimOptions(mode="off"))
        b, _ = run(iso, seq, SimOptions(mode="continuous"))
        assert np.array_equal(a.samples, b.samples)


def test_linear_in_m0():
    iso = random_set(200)
    seq = seqio.cpmg_demo()
    a, _ = run(iso, seq)
    iso4 = iso.subset(slice(None))
    iso4.m0 = iso.m0 * 4.0
    b, _ = run(iso4, seq)
    assert np.array_equal(b.samples, 4.0 * a.samples)
    iso3 = iso.subset(slice(None))
    iso3.m0 = iso.m0 * 3.0
    c, _ = run(iso3, seq)
    np.testing.assert_allclose(c.samples, 3.0 * a.samples, rtol=1e-13)


@pytest.mark.parametrize("mode", ["continuous", "off"])
def test_combined_equals_direct(mode):
    iso = random_set(200)
    seq = seqio.spgr(128, 0.012, 0.005, pulse_us=1000)
    a, _ = run(iso, seq, SimOptions(mode=mode, combined="off"))
    b, _ = run(iso, seq, SimOptions(mode=mode, combined="on"))
    assert np.abs(a.samples - b.samples).max() <= 1e-9 * np.abs(a.samples).max()


def test_auto_combined_policy():
    seq = seqio.spgr(4, 0.012, 0.005)
    plan = seqio.segment(seq)
    assert engine._combined_keys(seq, plan, "auto", 3) == {plan.entries[0].key}
    assert engine._combined_keys(seqio.fid(), seqio.segment(seqio.fid()), "auto", 3) == set()
    assert engine._combined_keys(seqio.fid(), seqio.segment(seqio.fid()), "on", 3) != set()


def test_stepped_update_equals_analytic():
    iso = random_set(100)
    seq = seqio.fid()
    a, _ = run(iso, seq)
    b, _ = run(iso, seqio.to_stepped(seq))
    assert np.array_equal(a.times_us, b.times_us)
    assert np.abs(a.samples - b.samples).max() <= 1e-9 * np.abs(a.samples).max()


def test_isochromat_list_input():
    isos = [Isochromat((0.0, 0.0, 0.0), FID_TISSUE), Isochromat((0.01, 0, 0), FID_TISSUE)]
    s, _ = run(isos, seqio.fid(ideal=True))
    t = s.times_us * 1e-6
    np.testing.assert_allclose(np.abs(s.samples[0]), 2 * np.exp(-t / 0.004), rtol=1e-12)


def test_phantom_input():
    ph = make_circles_phantom((64, 64, 1))
    s, rep = run(ph, seqio.fid(), SimOptions(workers=2))
    assert rep.isochromats == ph.num_isochromats
    assert np.all(np.isfinite(s.samples))


def test_coils():
    iso = random_set(50)
    coils = (CoilSensitivity(), CoilSensitivity((0.05, 0, 0), 0.05, 0.3))
    s, _ = run(iso, seqio.fid(), SimOptions(coils=coils))
    one, _ = run(iso, seqio.fid())
    assert s.samples.shape == (2, 190)
    assert np.array_equal(s.samples[0], one.samples[0])
    assert not np.allclose(s.samples[1], s.samples[0])


def test_nonfinite_detected():
    iso = random_set(10)
    iso.positions[7, 0] = np.nan
    with pytest.raises(SimulationError, match="isochromat 7 at t = "):
        run(iso, seqio.spgr(2, 0.012, 0.005))


def test_nonfinite_inside_long_rf_block():
    iso = random_set(4)
    iso.positions[2, 1] = np.inf
    n = 25_000
    blk = seqio.RFBlock(np.zeros(n), np.zeros(n), None, np.full(n, 1e-3))
    with pytest.raises(SimulationError, match="isochromat 2 at t = 10000 us"):
        run(iso, seqio.Sequence((blk,)), SimOptions(combined="off"))


def test_timing_report():
    s, rep = run(random_set(100), seqio.spgr(4, 0.012, 0.005))
    assert all(v >= 0 for v in rep.phases.values())
    assert rep.phases["combining"] > 0 and rep.phases["analytic"] > 0
    text = rep.to_csv().splitlines()
    assert text[0] == "phase,seconds,isochromats,mode"
    assert [r.split(",")[0] for r in text[1:]] == ["stepping", "analytic", "combining",
                                                   "sampling", "wall"]


def test_cpmg_demo_series():
    d = engine.run_cpmg_demo()
    assert d.columns == engine.CPMG_COLUMNS
    assert d.data.shape == (15000, 11)
    np.testing.assert_allclose(d.column("t"), np.arange(1, 15001) * 1e-6)
    mxy = np.abs(d.column("mx") + 1j * d.column("my"))
    assert np.array_equal(d.column("sample_T2"), mxy)
    assert np.all(d.column("sample_T2star") <= d.column("sample_T2") + 1e-15)
    # |dMxy| grows in the first free interval, then dips toward zero after the 180
    dm = np.hypot(d.column("dmx"), d.column("dmy"))
    first = dm[2000:5000]
    assert np.all(np.diff(first) > 0)
    second = dm[7000:15000]
    assert second.min() < 0.05 * first.max()
    assert second[-1] > 5 * second.min()
    assert d.to_csv().splitlines()[0] == ",".join(engine.CPMG_COLUMNS)


def test_cpmg_ideal_echo():
    d = engine.run_cpmg_demo(ideal=True)
    i = 9999
    assert d.column("t")[i] == pytest.approx(0.010)
    assert d.column("sample_T2star")[i] == pytest.approx(math.exp(-0.010 / 0.02), rel=1e-6)


def test_benchmark_grid():
    tab = engine.benchmark(random_set(500), seqio.fid())
    labels = [r[0] for r in tab.rows]
    assert labels == ["off/combined-off", "off/combined-on", "continuous/combined-off",
                      "continuous/combined-on", "off/update", "continuous/update"]
    assert all(v > 0 and math.isfinite(v) for v in tab.ratios.values())
    assert tab.ratios["analytic_vs_update"] > 1
    csv = tab.to_csv()
    assert "analytic_vs_update,".split(",")[0] in csv and "19" in csv
