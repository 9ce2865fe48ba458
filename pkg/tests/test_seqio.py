import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from t2primesim import seqio
from t2primesim.errors import SequenceError
from t2primesim.model import IsochromatSet, TissueParams
from t2primesim.seqio import Adc, FreeBlock, IdealPulse, RFBlock, Sequence
from t2primesim.transitions import apply, build_combined


def doc(*blocks, raster=1):
    return json.dumps({"raster_us": raster, "blocks": list(blocks), "meta": {}})


FREE = {"type": "free", "duration_us": 100, "grad_segments": [], "adc": None}


def test_minimal_document():
    seq = seqio.parse_sequence(doc(FREE))
    assert len(seq.blocks) == 1 and isinstance(seq.blocks[0], FreeBlock)


def test_adc_past_end_names_block():
    bad = dict(FREE, adc={"delay_us": 10, "num": 11, "dwell_us": 10})
    with pytest.raises(SequenceError, match="block 1, field 'adc'.*past block end") as ei:
        seqio.parse_sequence(doc(FREE, bad))
    assert ei.value.block == 1


@pytest.mark.parametrize("text,match", [
    (doc({"type": "spiral"}), "unknown block type"),
    (doc({"type": "rf", "b1_hz": [1, 2], "b1_phase_rad": [0]}), "b1_phase_rad"),
    (doc({"type": "rf", "b1_hz": [1, 2], "g_T_per_m": {"x": [0]}}), "g_T_per_m.x"),
    (doc(FREE, raster=0), "raster_us"),
    (doc(FREE, raster=1.5), "raster_us"),
    (doc(dict(FREE, grad_segments=[[50, 0, 0, 0]])), "grad_segments"),
    (doc(dict(FREE, duration_us=-5)), "duration_us"),
    ('{"raster_us": 1, "blocks": [', "line 1 column"),
    (json.dumps({"raster_us": 1, "blocks": []}), "no blocks"),
    (doc({"type": "rf", "b1_hz": [1, 2], "adc": {"delay_us": 0, "num": 4, "dwell_us": 1}}),
     "past block end"),
])
def test_rejections(text, match):
    with pytest.raises(SequenceError, match=match):
        seqio.parse_sequence(text)


@pytest.mark.parametrize("name", sorted(seqio.builtin_sequences()))
def test_roundtrip_builtins(name):
    seq = seqio.builtin_sequences()[name]
    text = seqio.serialize_sequence(seq)
    back = seqio.parse_sequence(text)
    assert back == seq
    assert seqio.serialize_sequence(back) == text


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=20), st.integers(1, 4))
def test_roundtrip_random_rf(b1, raster):
    n = len(b1)
    blk = RFBlock(b1, np.linspace(0, 1, n), np.full(n, 1e-3), None, np.arange(n) * 1e-4,
                  Adc(0, 1, raster))
    seq = Sequence((blk, FreeBlock(30, ((10, 0.01, 0, 0), (20, -0.005, 0, 0)))), raster)
    assert seqio.parse_sequence(seqio.serialize_sequence(seq)) == seq


def test_io(tmp_path):
    seq = seqio.cpmg_demo()
    seqio.save_sequence(tmp_path / "c.json", seq)
    assert seqio.load_sequence(tmp_path / "c.json") == seq


def test_sinc_area_calibration():
    for flip in (math.pi / 2, math.pi, 0.3):
        b = seqio.make_sinc_rf(2000, 3, flip)
        assert 2 * math.pi * b.b1_hz.sum() * 1e-6 == pytest.approx(flip, rel=1e-12)
    assert not seqio.make_sinc_rf(500, 3, 0.0).b1_hz.any()


def test_rect_amplitude():
    b = seqio.make_sinc_rf(400, 1, 1.2, shape="rect")
    np.testing.assert_allclose(b.b1_hz, 1.2 / (2 * math.pi * 400e-6), rtol=1e-12)


def test_sinc_validation():
    with pytest.raises(ValueError):
        seqio.make_sinc_rf(3, 1, 1.0, raster_us=2)
    with pytest.raises(ValueError):
        seqio.make_sinc_rf(100, 0, 1.0)


def test_sinc_90_tips_fully():
    iso = IsochromatSet.single(TissueParams(1.0, math.inf, math.inf))
    out = apply(build_combined(seqio.make_sinc_rf(2000, 3, math.pi / 2), iso), [0, 0, 1, 1, 0, 0, 0])
    assert abs(out[2]) < 1e-2


def test_phase_convention():
    # phase pi/2 rotates about +y: x -> z flips sign under a 180
    iso = IsochromatSet.single(TissueParams(1.0, math.inf, math.inf))
    C = build_combined(seqio.make_sinc_rf(400, 1, math.pi, math.pi / 2, shape="rect"), iso)
    np.testing.assert_allclose(apply(C, [1, 0, 0, 1, 0, 0, 0])[:3], [-1, 0, 0], atol=1e-9)
    np.testing.assert_allclose(apply(C, [0, 1, 0, 1, 0, 0, 0])[:3], [0, 1, 0], atol=1e-9)


def test_cpmg_plan():
    seq = seqio.cpmg_demo()
    plan = seqio.segment(seq)
    assert [e.kind for e in plan.entries] == ["rf", "free", "rf", "free"]
    assert plan.duration_us == seq.duration_us == 15000
    assert len(plan.entries[1].pieces) == 3000 // 50
    assert len(plan.entries[3].pieces) == 8000 // 50
    assert plan.num_samples == 60 + 160
    assert np.all(np.diff(plan.sample_times_us) > 0)


def test_all_free_plan():
    seq = Sequence((FreeBlock(100), FreeBlock(50, (), Adc(0, 3, 25))))
    plan = seqio.segment(seq)
    assert {e.kind for e in plan.entries} == {"free"}
    assert plan.sample_times_us.tolist() == [100, 125, 150]
    # a sample at the block start produces a zero-length piece
    assert plan.entries[1].pieces[0][0] == 0


def test_plan_piece_moments():
    seq = Sequence((FreeBlock(100, ((40, 0.01, 0, 0), (60, 0, 0.02, 0)), Adc(20, 2, 50)),))
    p = seqio.segment(seq).entries[0].pieces
    assert [x[0] for x in p] == [20, 50, 30]
    np.testing.assert_allclose(p[1][1:4], [20e-6 * 0.01, 30e-6 * 0.02, 0])
    assert sum(x[0] for x in p) == 100


def test_fid_shape():
    seq = seqio.fid()
    assert isinstance(seq.blocks[0], RFBlock) and seq.blocks[0].num_samples == 500
    assert isinstance(seq.blocks[1], FreeBlock) and seq.blocks[1].duration_us == 9500
    assert seq.blocks[1].adc is not None
    ideal = seqio.fid(ideal=True)
    assert isinstance(ideal.blocks[0], IdealPulse)


def test_cpmg_durations():
    seq = seqio.cpmg_demo()
    assert [seqio.block_duration_us(b, 1) for b in seq.blocks] == [2000, 3000, 2000, 8000]


def test_spgr_dedup_and_identity():
    seq = seqio.spgr(8, 0.012, 0.005)
    assert seqio.dedup_counts(seq) == (8, 1, 7)
    rf = [b for b in seq.blocks if isinstance(b, RFBlock)]
    assert all(b is rf[0] or b == rf[0] for b in rf)


def test_spgr_echo_timing():
    dwell, te, pulse = 25, 0.005, 3000
    seq = seqio.spgr(16, 0.012, te, dwell_us=dwell, pulse_us=pulse)
    plan = seqio.segment(seq)
    center = plan.sample_times_us[16 // 2]
    assert center == pulse // 2 + te * 1e6


def test_spgr_kspace_center_moment():
    seq = seqio.spgr(8, 0.012, 0.005)
    free = seq.blocks[1]
    p = seqio.segment(seq).entries[1].pieces
    mom = np.cumsum(np.array([x[1:4] for x in p]), axis=0)
    # sample n_ro // 2 sits at kx = 0 and the block is rewound overall
    assert abs(mom[4, 0]) < 1e-15
    assert np.abs(mom[-1]).max() < 1e-15
    assert free.duration_us == 12000 - 3000


def test_rare_balanced_and_meta():
    seq = seqio.rare(4, 0.012, 16, 0.5)
    assert sorted(seq.meta["kspace"]["lines"]) == list(range(16))
    assert seq.meta["te_s"] == pytest.approx(0.012 * (seq.meta["kspace"]["lines"].index(8) % 4 + 1))
    for b in seq.blocks:
        if isinstance(b, FreeBlock) and b.adc is not None:
            segs = np.array(b.segments())
            assert np.abs((segs[:, 1:] * segs[:, :1]).sum(axis=0)).max() < 1e-12


def test_epi_reversal_meta():
    seq = seqio.epi(8)
    assert seq.meta["kspace"]["reversed"] == [False, True] * 4
    assert len(seq.adc_event_sizes()) == 8


def test_to_stepped():
    seq = seqio.fid()
    st_ = seqio.to_stepped(seq)
    assert all(isinstance(b, RFBlock) for b in st_.blocks)
    assert st_.blocks[1].num_samples == 9500 and not st_.blocks[1].b1_hz.any()
    assert np.array_equal(seqio.segment(st_).sample_times_us, seqio.segment(seq).sample_times_us)
    assert st_.name == "fid-update"


def test_builtin_names():
    assert set(seqio.builtin_sequences()) >= {"fid", "cpmg-demo", "spgr", "rare", "epi"}
    assert seqio.builtin_sequences()["cpmg-demo"].duration_us == 15000
