import math

import numpy as np
import pytest

from t2primesim import seqio
from t2primesim.analytic import FreeSegment, free_matrix
from t2primesim.kernel import step_m7
from t2primesim.model import IsochromatSet, TissueParams
from t2primesim.transitions import (apply, build_combined, check_structure, dedup_blocks,
                                    explicit_product, field_steps)


def random_block(rng, n):
    g = rng.normal(0, 0.01, (n, 3)) * (rng.random((n, 1)) < 0.5)
    return seqio.RFBlock(rng.normal(0, 400, n), rng.uniform(-math.pi, math.pi, n),
                         g[:, 0], g[:, 1], g[:, 2])


def random_iso(rng):
    t2 = rng.uniform(0.01, 0.2)
    tis = TissueParams(1.0, t2 * rng.uniform(1, 20), t2, rng.uniform(0.005, 0.1),
                       db0=rng.normal(0, 30))
    return IsochromatSet.single(tis, rng.uniform(-0.1, 0.1, 3))


def test_matches_explicit_product(rng):
    for _ in range(20):
        blk, iso = random_block(rng, 50), random_iso(rng)
        C = build_combined(blk, iso)
        E = explicit_product(blk, iso)
        assert np.abs(C - E).max() <= 1e-12 * max(1.0, np.abs(E).max())


def test_structure_and_top_left_equals_c4(rng):
    for _ in range(10):
        blk, iso = random_block(rng, 80), random_iso(rng)
        C7 = build_combined(blk, iso)
        C4 = build_combined(blk, iso, deriv=False)
        check_structure(C7, C4)


def test_check_structure_rejects_bad_matrix():
    bad = np.eye(7)
    bad[0, 5] = 1e-3
    with pytest.raises(AssertionError):
        check_structure(bad)
    with pytest.raises(AssertionError):
        check_structure(np.eye(4))


def test_zero_length_block_is_identity():
    blk = seqio.RFBlock(np.zeros(0), np.zeros(0))
    C = build_combined(blk, IsochromatSet.single(TissueParams()))
    assert np.array_equal(C, np.eye(7))


def test_zero_rf_matches_free_matrix():
    tis = TissueParams(1.0, 0.7, 0.05, db0=40.0)
    n = 3000
    blk = seqio.RFBlock(np.zeros(n), np.zeros(n))
    C = build_combined(blk, IsochromatSet.single(tis))
    tau = n * 1e-6
    F = free_matrix(FreeSegment(tau, 2 * math.pi * 40.0 * tau), tis)
    assert np.abs(C - F).max() <= 1e-10 * np.abs(F).max()


def test_apply_equals_stepping(rng):
    for _ in range(20):
        blk, iso = random_block(rng, 120), random_iso(rng)
        s = np.r_[rng.normal(size=3) * 0.5, 1.0, rng.normal(size=3) * 1e-3]
        x = s.copy()
        tis = TissueParams(1.0, iso.t1[0], iso.t2[0])
        for f in field_steps(blk, iso):
            x = step_m7(x, f, tis)
        y = apply(build_combined(blk, iso), s)
        assert np.abs(y - x).max() <= 1e-10 * np.abs(x).max()
        assert y[3] == 1.0


def test_apply_identity():
    s = np.array([0.1, 0.2, 0.3, 1, 4e-3, 5e-3, 6e-3])
    assert np.array_equal(apply(np.eye(7), s), s)


def test_calibrated_90_from_equilibrium():
    blk = seqio.make_sinc_rf(2000, 3, math.pi / 2)
    iso = IsochromatSet.single(TissueParams(1.0, math.inf, math.inf))
    out = apply(build_combined(blk, iso), [0, 0, 1, 1, 0, 0, 0])
    assert abs(math.hypot(out[0], out[1]) - 1.0) < 1e-3


def test_dedup_spgr_128():
    total, unique, rep = seqio.dedup_counts(seqio.spgr(128, 0.012, 0.005))
    assert (total, unique, rep) == (128, 1, 127)


def test_dedup_distinct_pulses():
    blocks = [seqio.make_sinc_rf(500, 3, f) for f in (0.1, 0.2, 0.3)]
    seq = seqio.Sequence(tuple(blocks))
    assert seqio.dedup_counts(seq) == (3, 3, 0)
    assert sorted(dedup_blocks(seq).values()) == [[0], [1], [2]]


def test_dedup_rare():
    total, unique, rep = seqio.dedup_counts(seqio.rare(4, 0.012, 16, 0.5))
    assert unique == 2 and total == 4 + 16


def test_key_depends_on_raster():
    b = seqio.make_sinc_rf(100, 1, 0.5)
    assert seqio.pulse_key(b, 1) != seqio.pulse_key(b, 2)
    assert seqio.pulse_key(b, 1) == seqio.pulse_key(seqio.make_sinc_rf(100, 1, 0.5), 1)
