import math

import numpy as np
import pytest

from besovlab.besov import BesovParams, besov_norm_difference
from besovlab.constructions import tent
from besovlab.grid import Domain, GridFunction, sample, standard_sampler
from besovlab.homeo import (CSV_COLUMNS, HomeoError, affine, banded_shear, compose, compose_function,
                            dichotomy_experiment, dichotomy_levels, identity, jacobian_level,
                            jacobian_level_census, quasisymmetry_scan, radial_stretch, ray_center,
                            rotation, sampled_map)

FAMILIES = [identity(), affine([[1.0, 0.3], [0.0, 2.0]], (0.1, -0.2)), rotation(0.7),
            radial_stretch(2.0), radial_stretch(0.5), radial_stretch(1.7), banded_shear(0.5, 1.0, 2.0),
            compose(radial_stretch(2.0), affine([[1.0, 0.0], [0.0, 0.5]]))]


@pytest.mark.parametrize("phi", FAMILIES, ids=lambda p: p.label)
def test_roundtrip_and_jacobian(phi):
    assert phi.roundtrip_error(100, 0, hole=0.05) <= 1e-10
    assert phi.jacobian_fd_error(100, 0, hole=0.1) <= 1e-5


def test_radial_examples():
    one = radial_stretch(1.0)
    x = np.array([0.3, -1.2])
    np.testing.assert_allclose(one(x, x[::-1]), (x, x[::-1]))
    assert np.all(one.jacobian_det(x, x) == 1.0)
    two = radial_stretch(2.0)
    np.testing.assert_allclose(two(np.array([1.0, 2.0]), np.zeros(2)), ([1.0, 4.0], [0.0, 0.0]))
    assert two.jacobian_det(2.0, 0.0) == pytest.approx(8.0)
    assert radial_stretch(0.5).roundtrip_error(100) <= 1e-10
    z = two(np.array(0.0), np.array(0.0))
    assert z[0] == 0.0 and z[1] == 0.0
    with pytest.raises(HomeoError):
        radial_stretch(0.0)


def test_radial_delta_matches_direct_difference():
    phi = radial_stretch(2.0)
    x0 = (0.7, -0.4)
    d1, d2 = np.array([1e-3, -2e-3]), np.array([5e-4, 1e-3])
    a = phi.delta(x0, d1, d2)
    f1, f2 = phi(x0[0] + d1, x0[1] + d2)
    c1, c2 = phi(np.array(x0[0]), np.array(x0[1]))
    np.testing.assert_allclose(a, (f1 - c1, f2 - c2), rtol=1e-9)
    y0 = tuple(float(v) for v in phi(np.array(x0[0]), np.array(x0[1])))
    b = phi.inverse_delta_at(y0, *a)
    np.testing.assert_allclose(b, (d1, d2), rtol=1e-8)


def test_affine_rejections():
    with pytest.raises(HomeoError):
        affine([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(HomeoError):
        affine(np.ones((3, 3)))
    with pytest.raises(HomeoError):
        banded_shear(growth=1.0)


# ---- composition

def test_compose_identity_exact():
    dom = Domain(4.0, 64)
    f = tent((0.2, 0.1), 0.8)
    np.testing.assert_array_equal(compose_function(f, identity(), dom).values, sample(f, dom).values)


def test_compose_radial_tent():
    dom = Domain(4.0, 64)
    g = compose_function(tent((0.0, 0.0), 1.0), radial_stretch(2.0), dom)
    X1, X2 = dom.nodes()
    np.testing.assert_allclose(g.values, np.maximum(0.0, 1.0 - (X1 ** 2 + X2 ** 2)), atol=1e-14)


def test_compose_zero():
    dom = Domain(4.0, 32)
    g = compose_function(lambda a, b: 0 * a, radial_stretch(0.5), dom)
    assert not g.values.any()


def test_compose_grid_function_interpolates_nodes():
    dom = Domain(4.0, 32)
    f = sample(tent((0.0, 0.0), 1.0), dom)
    g = compose_function(f, identity(), dom)
    np.testing.assert_allclose(g.values, f.values, atol=1e-14)
    shifted = compose_function(f, affine(np.eye(2), (0.5 * dom.spacing, 0.0)), dom)
    np.testing.assert_allclose(shifted.values[:-1], 0.5 * (f.values[:-1] + f.values[1:]), atol=1e-14)


def test_sampled_map_reproduces_affine():
    dom = Domain(4.0, 32)
    A = affine([[1.0, 0.5], [0.0, 2.0]])
    y1, y2 = A(*dom.nodes())
    S = sampled_map(dom, y1, y2)
    x = np.array([0.13, -0.71])
    np.testing.assert_allclose(S(x, x[::-1]), A(x, x[::-1]), atol=1e-12)
    assert S.jacobian_det(0.1, 0.2) == pytest.approx(2.0, rel=1e-6)


def test_rotation_norm_invariance():
    dom = Domain(4.0, 256)
    sm = standard_sampler(dom, 256, 0)
    prm = BesovParams(0.5, 2.0)
    f = lambda a, b: np.maximum(0.0, 1.0 - np.hypot(1.25 * (a - 0.1), 2 * b))
    base = besov_norm_difference(sample(f, dom, 0.9), prm, sm)
    for th in (0.3, 1.1):
        g = compose_function(f, rotation(th), dom, support_radius=0.9)
        assert 0.95 <= besov_norm_difference(g, prm, sm) / base <= 1.05


# ---- scans

def test_scan_isometry():
    assert quasisymmetry_scan(rotation(0.4, (0.1, 0.2)), 2000, 0, Domain(4.0, 64)) <= 1 + 1e-12


def test_scan_affine_eccentricity():
    H = quasisymmetry_scan(affine([1.0, 4.0]), 4000, 0, Domain(4.0, 64))
    assert 3.6 <= H <= 4.2


def test_scan_deterministic_and_bounded():
    phi = radial_stretch(2.0)
    dom = Domain(4.0, 64)
    a = quasisymmetry_scan(phi, 2000, 5, dom, hole=0.1)
    assert a == quasisymmetry_scan(phi, 2000, 5, dom, hole=0.1)
    b = quasisymmetry_scan(phi, 8000, 5, dom, hole=0.1)
    assert math.isfinite(a) and b <= 2 * a + 1


def test_scan_probe_minimum():
    with pytest.raises(HomeoError):
        quasisymmetry_scan(identity(), 10, 0, Domain(4.0, 16))


# ---- census

def test_level_convention():
    assert jacobian_level(1.0) == -1
    assert jacobian_level(4.0) == -2
    assert jacobian_level(0.25) == 0
    assert jacobian_level(0.9) == 0
    assert jacobian_level(1.1) == -1


def test_census_identity_and_dilation():
    dom = Domain(4.0, 64)
    c = jacobian_level_census(identity(), dom)
    assert c.entries == [(-1, pytest.approx(16.0))]
    d = jacobian_level_census(affine(2.0), dom)
    assert d.nonempty == 1 and d.entries[0][1] == pytest.approx(16.0)


def test_census_radial_spread_and_conservation():
    dom = Domain(4.0, 128)
    c = jacobian_level_census(radial_stretch(2.0), dom)
    assert c.nonempty >= 5
    assert c.total() == pytest.approx(dom.side_length ** 2, rel=1e-12)
    assert c.zero_measure == pytest.approx(dom.spacing ** 2)
    r = jacobian_level_census(radial_stretch(2.0), dom, k_range=(-1, 1))
    assert r.total() == pytest.approx(16.0) and r.other_measure > 0


# ---- dichotomy

def test_ray_center_band_membership():
    phi = radial_stretch(2.0)
    for k in (-1, 0, 3, 10):
        x = ray_center(phi, k)
        assert jacobian_level(phi.jacobian_det(x[0], x[1])) == k


def test_dichotomy_levels_inside_quarter_box():
    for alpha in (2.0, 0.5):
        phi = radial_stretch(alpha)
        ks = dichotomy_levels(phi, 5, domain=Domain(4.0, 64))
        assert len(set(ks)) == 5 and np.all(np.diff(ks) == 6)
        assert max(np.hypot(*ray_center(phi, k)) for k in ks) <= 1.0


def test_dichotomy_single_level_and_csv():
    phi = radial_stretch(2.0)
    rep = dichotomy_experiment(phi, [1], None, BesovParams(0.5, 4.0), qs=[4.0, 2.0])
    assert {r.N_lv for r in rep.rows} == {1}
    for r in rep.rows:
        assert 0.1 < r.ratio < 10
    lines = rep.to_csv().split("\r\n")
    assert lines[0].split(",") == CSV_COLUMNS
    assert len([ln for ln in lines[1:] if ln]) == len(rep.rows) == 4


def test_dichotomy_rejections():
    phi = radial_stretch(2.0)
    with pytest.raises(HomeoError):
        dichotomy_experiment(phi, [7], None, BesovParams(0.5, 4.0))
    with pytest.raises(HomeoError, match="maximal feasible"):
        dichotomy_experiment(phi, [1, 2, 3], None, BesovParams(0.5, 4.0), domain=Domain(4.0, 64), method="grid")
