import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from besovlab.grid import (Domain, GridError, GridFunction, build_offset_sampler, full_sampler, load_grid_function,
                           lp_norm, powersums, sample, save_grid_function, shift_difference, standard_sampler)


def tent(r=1.0):
    return lambda x1, x2: np.maximum(0.0, 1.0 - np.hypot(x1, x2) / r)


def test_domain_validation():
    with pytest.raises(GridError):
        Domain(4.0, 4)
    with pytest.raises(GridError):
        Domain(-1.0, 16)
    d = Domain(4.0, 16)
    assert d.spacing == 0.25
    assert d.axis()[d.resolution // 2] == 0.0


def test_sample_zero_function():
    f = sample(lambda x1, x2: 0.0 * x1, Domain(2.0, 8))
    assert not f.values.any()


def test_sample_tent_peak_and_boundary():
    d = Domain(4.0, 16)
    f = sample(tent(), d, 1.0)
    assert f.values[8, 8] == 1.0
    assert f.values.max() == 1.0
    ring = np.zeros((16, 16), bool)
    ring[0, :] = ring[:, 0] = True
    assert not f.values[ring].any()


def test_sample_gaussian_center_and_corner():
    d = Domain(8.0, 64)
    f = sample(lambda x1, x2: np.exp(-(x1 ** 2 + x2 ** 2)), d)
    assert f.values[32, 32] == 1.0
    # the corner node is (-4, -4), so the value is exp(-32)
    assert f.values[0, 0] == pytest.approx(math.exp(-32.0), rel=1e-12)
    assert f.values[0, 0] <= 1.3e-14


def test_sample_rejects_non_finite_and_names_node():
    d = Domain(2.0, 8)
    with pytest.raises(GridError, match=r"\(\d+, \d+\)"):
        sample(lambda x1, x2: np.where((x1 == 0) & (x2 == 0), np.nan, 0.0), d)


def test_sample_scalar_fallback():
    d = Domain(2.0, 8)
    f = sample(lambda x1, x2: float(max(0.0, 1.0 - math.hypot(x1, x2))), d)
    g = sample(tent(), d)
    np.testing.assert_array_equal(f.values, g.values)


def test_support_radius_enforced():
    d = Domain(4.0, 16)
    with pytest.raises(GridError):
        GridFunction(d, np.ones((16, 16)), 1.0)
    GridFunction(d, sample(tent(), d).values, 1.0)


def test_values_are_read_only():
    f = sample(tent(), Domain(4.0, 16))
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0


def test_shift_difference_examples():
    d = Domain(4.0, 16)
    f = sample(tent(), d, 1.0)
    assert not shift_difference(f, (0, 0)).values.any()
    zero = GridFunction(d, np.zeros((16, 16)))
    assert not shift_difference(zero, (3, -2)).values.any()
    c = GridFunction(d, np.full((16, 16), 2.5))
    g = shift_difference(c, (1, 0)).values
    assert not g[:-1, :].any()
    np.testing.assert_array_equal(g[-1, :], -2.5)
    g = shift_difference(c, (-1, 0)).values
    np.testing.assert_array_equal(g[0, :], -2.5)
    with pytest.raises(GridError):
        shift_difference(f, (16, 0))


def test_shift_difference_tent_quarter_offset():
    d = Domain(4.0, 64)
    f = sample(tent(), d, 1.0)
    g = shift_difference(f, (16, 0))
    assert np.max(np.abs(g.values)) == pytest.approx(1.0)


def test_lp_norm_examples():
    d = Domain(2.0, 16)
    assert lp_norm(GridFunction(d, np.zeros((16, 16))), 2) == 0.0
    assert lp_norm(GridFunction(d, np.ones((16, 16))), 2) == pytest.approx(2.0, rel=1e-14)
    errs = []
    for n in (32, 128, 512):
        f = sample(tent(), Domain(4.0, n), 1.0)
        errs.append(abs(lp_norm(f, 2) - math.sqrt(math.pi / 6)))
    assert errs[-1] < 1e-4 and errs[0] > errs[-1]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([1.0, 1.5, 2.0, 4.0, 7.5]))
def test_lp_norm_homogeneity_and_triangle(seed, p):
    rng = np.random.default_rng(seed)
    d = Domain(2.0, 8)
    f = GridFunction(d, rng.normal(size=(8, 8)))
    g = GridFunction(d, rng.normal(size=(8, 8)))
    for lam in (-3.0, 0.5, 7.0):
        assert lp_norm(f.scaled(lam), p) == pytest.approx(abs(lam) * lp_norm(f, p), rel=1e-12)
    assert lp_norm(f + g, p) <= lp_norm(f, p) + lp_norm(g, p) + 1e-12


def test_sampler_exhaustive_regime():
    d = Domain(4.0, 16)
    sm = build_offset_sampler(d, 2.0, 3, 1000, 0)
    assert all(lv.exhaustive for lv in sm.levels)


def test_sampler_determinism_and_distinct_offsets():
    d = Domain(4.0, 16)
    a = build_offset_sampler(d, 2.0, 3, 8, 11)
    b = build_offset_sampler(d, 2.0, 3, 8, 11)
    c = build_offset_sampler(d, 2.0, 3, 8, 12)
    assert a.same_as(b)
    assert not a.same_as(c)
    for lv in a.levels:
        assert len({tuple(o) for o in lv.offsets}) == len(lv.offsets)


def test_sampler_ring_count():
    d = Domain(4.0, 64)
    sm = build_offset_sampler(d, 2.0, 2, 10 ** 6, 0)
    lv = sm.levels[0]
    assert (lv.inner, lv.outer) == (1.0, 2.0)
    h = d.spacing
    r = np.arange(-63, 64)
    a, b = np.meshgrid(r, r, indexing="ij")
    L = np.hypot(a, b) * h
    assert lv.population == int(np.count_nonzero((L >= 1.0) & (L < 2.0)))
    assert lv.exhaustive


@pytest.mark.parametrize("spl", [4, 16, 100])
def test_sampler_annulus_membership_and_weights(spl):
    d = Domain(4.0, 32)
    sm = build_offset_sampler(d, 2.0, 4, spl, 3)
    h2 = d.spacing ** 2
    total = 0.0
    for lv in sm.levels:
        lens = lv.lengths(d.spacing)
        assert np.all(lens >= lv.inner) and np.all(lens < lv.outer)
        total += lv.weight * len(lv.offsets)
    # spacing is a power of two, so the bookkeeping is exact
    assert total / h2 == sm.total_population()


def test_sampler_rejects_bad_arguments():
    d = Domain(4.0, 16)
    with pytest.raises(GridError):
        build_offset_sampler(d, 2.0, 3, 2, 0)
    with pytest.raises(GridError):
        build_offset_sampler(d, 100.0, 3, 8, 0)


def test_sampler_drops_empty_levels_with_warning():
    d = Domain(4.0, 8)
    with pytest.warns(UserWarning, match="dropped"):
        sm = build_offset_sampler(d, 2.0, 6, 8, 0)
    assert sm.dropped


def test_powersums_match_padded_shift_difference():
    d = Domain(4.0, 16)
    f = sample(tent(), d, 1.0)
    offs = np.array([[1, 0], [3, -2], [-7, 5], [15, 15]])
    # powersums run over Z^2; a grid three times wider holds every nonzero term
    big = Domain(12.0, 48)
    pad = np.zeros((48, 48))
    pad[16:32, 16:32] = f.values
    F = GridFunction(big, pad)
    for o, v in zip(offs, powersums(f, offs, 3.0)):
        assert v == pytest.approx(lp_norm(shift_difference(F, o), 3.0) ** 3, rel=1e-12)


def test_full_sampler_covers_every_offset():
    d = Domain(2.0, 8)
    sm = full_sampler(d)
    assert len(sm.all_offsets()) == 15 * 15 - 1


def test_standard_sampler_range():
    d = Domain(4.0, 64)
    sm = standard_sampler(d)
    assert sm.outer_radius == 2.0
    assert sm.inner_radius <= d.spacing * (1 + 1e-12)


def test_bsvg_roundtrip(tmp_path):
    d = Domain(3.0, 12)
    f = sample(tent(0.7), d, 0.7)
    p = tmp_path / "f.bsvg"
    save_grid_function(f, p)
    g = load_grid_function(p)
    assert g.domain == d and g.support_radius == 0.7
    np.testing.assert_array_equal(f.values, g.values)
    raw = p.read_bytes()
    assert raw[:4] == b"BSVG" and len(raw) == 4 + 4 + 4 + 8 + 8 + 8 * 144
    h = GridFunction(d, f.values)
    save_grid_function(h, p)
    assert load_grid_function(p).support_radius is None


def test_bsvg_rejects_corruption(tmp_path):
    d = Domain(2.0, 8)
    p = tmp_path / "f.bsvg"
    save_grid_function(GridFunction(d, np.zeros((8, 8))), p)
    raw = p.read_bytes()
    (tmp_path / "bad1").write_bytes(b"XXXX" + raw[4:])
    (tmp_path / "bad2").write_bytes(raw[:-8])
    with pytest.raises(GridError):
        load_grid_function(tmp_path / "bad1")
    with pytest.raises(GridError):
        load_grid_function(tmp_path / "bad2")
