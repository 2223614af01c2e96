import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_unit
from eedset.errors import ContractViolation
from eedset.linalg_channel import (RngStream, beam_gains, dominant_right_pair, dominant_right_pairs,
                                   effective_gain, read_channels_csv, sample_channel, sample_channels,
                                   write_channels_csv)


def test_entry_moments():
    hs = sample_channels(25_000, 1, 4, RngStream(1, 0))
    z = hs.ravel()
    assert z.size == 100_000
    assert abs(np.mean(np.abs(z) ** 2) - 1.0) < 0.02
    assert abs(z.real.mean()) < 0.01 and abs(z.imag.mean()) < 0.01
    assert abs(z.real.var() - 0.5) < 0.01


def test_sampling_is_deterministic():
    a = sample_channel(2, 3, RngStream(1, 0))
    b = sample_channel(2, 3, RngStream(1, 0))
    assert a.shape == (2, 3)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sample_channel(2, 3, RngStream(1, 1)))


def test_child_streams_differ():
    s = RngStream(7, 3)
    x = s.child(0).generator().standard_normal(4)
    y = s.child(1).generator().standard_normal(4)
    assert not np.array_equal(x, y)
    assert np.array_equal(x, RngStream(7, 3, (0,)).generator().standard_normal(4))


def test_effective_gain_examples():
    h = np.array([[1, 1j, 0, 0]])
    assert effective_gain(h, np.array([1, 0, 0, 0])) == pytest.approx(1.0)
    w = np.array([1, -1j, 0, 0]) / np.sqrt(2)
    assert effective_gain(h, w) == pytest.approx(2.0, rel=1e-12)
    assert np.linalg.eigvalsh(h.conj().T @ h).max() == pytest.approx(2.0)


def test_effective_gain_rejects_bad_beams():
    h = np.array([[1, 1j, 0, 0]])
    with pytest.raises(ContractViolation):
        effective_gain(h, np.array([2, 0, 0, 0]))
    with pytest.raises(ContractViolation):
        effective_gain(h, np.array([1, 0, 0]))
    with pytest.raises(ContractViolation):
        effective_gain(np.array([[np.nan, 0]]), np.array([1, 0]))


def test_rank_one_closed_form(gen):
    h = gen.standard_normal((1, 4)) + 1j * gen.standard_normal((1, 4))
    lam, v, degenerate = dominant_right_pair(h)
    assert not degenerate
    assert lam == pytest.approx(np.linalg.norm(h) ** 2, rel=1e-12)
    ref = h[0].conj() / np.linalg.norm(h)
    assert abs(abs(np.vdot(ref, v)) - 1) < 1e-12


def test_identity_channel():
    lam, v, _ = dominant_right_pair(np.eye(2))
    assert lam == pytest.approx(1.0)
    assert effective_gain(np.eye(2), v) == pytest.approx(1.0)


def test_random_matrix_against_eigvalsh_and_probes(gen):
    h = gen.standard_normal((2, 4)) + 1j * gen.standard_normal((2, 4))
    lam, v, _ = dominant_right_pair(h)
    assert lam == pytest.approx(np.linalg.eigvalsh(h.conj().T @ h).max(), rel=1e-9)
    probes = random_unit(gen, 4, 100_000)
    g = np.sum(np.abs(h @ probes) ** 2, axis=0)
    assert g.max() <= lam * (1 + 1e-9)
    assert g.max() > 0.95 * lam


def test_phase_is_normalized(gen):
    hs = gen.standard_normal((50, 2, 4)) + 1j * gen.standard_normal((50, 2, 4))
    _, vs, _ = dominant_right_pairs(hs)
    assert np.all(vs[:, 0].imag == 0) and np.all(vs[:, 0].real > 0)
    assert np.allclose(np.linalg.norm(vs, axis=1), 1, atol=1e-12)


def test_zero_matrix_is_degenerate():
    lam, v, degenerate = dominant_right_pair(np.zeros((1, 3)))
    assert degenerate and lam == 0.0
    assert np.array_equal(v, np.array([1, 0, 0], dtype=complex))


@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100), st.floats(-np.pi, np.pi))
def test_scale_consistency(seed, mag, phase):
    h = sample_channel(2, 3, RngStream(seed))
    a = mag * np.exp(1j * phase)
    lam, _, _ = dominant_right_pair(h)
    lam_a, v_a, _ = dominant_right_pair(a * h)
    assert lam_a == pytest.approx(abs(a) ** 2 * lam, rel=1e-9)
    assert effective_gain(h, v_a) == pytest.approx(lam, rel=1e-9)


def test_codebook_gains_bounded_by_lambda(gen):
    hs = sample_channels(2000, 1, 4, RngStream(3))
    lam, _, _ = dominant_right_pairs(hs)
    g = beam_gains(hs, random_unit(gen, 4, 16))
    assert np.all(g >= 0)
    assert np.all(g <= lam[:, None] + 1e-9)


def test_mean_lambda_rank_one():
    lam, _, _ = dominant_right_pairs(sample_channels(100_000, 1, 4, RngStream(5)))
    assert abs(lam.mean() - 4) < 0.03 * 4


def test_batched_matches_single(gen):
    hs = gen.standard_normal((20, 3, 4)) + 1j * gen.standard_normal((20, 3, 4))
    lam, vs, _ = dominant_right_pairs(hs)
    for i in range(20):
        l1, v1, _ = dominant_right_pair(hs[i])
        assert l1 == lam[i] and np.array_equal(v1, vs[i])


def test_beam_gains_matches_direct(gen):
    hs = gen.standard_normal((5, 2, 3)) + 1j * gen.standard_normal((5, 2, 3))
    om = random_unit(gen, 3, 4)
    g = beam_gains(hs, om)
    ref = [[effective_gain(h, om[:, j]) for j in range(4)] for h in hs]
    assert np.allclose(g, ref, rtol=1e-12)


def test_csv_round_trip(tmp_path):
    hs = sample_channels(10, 2, 3, RngStream(9))
    path = tmp_path / "h.csv"
    write_channels_csv(hs, path)
    assert path.read_text().splitlines()[0].startswith("index,re_0_0,im_0_0,re_0_1")
    assert np.array_equal(read_channels_csv(path), hs)
