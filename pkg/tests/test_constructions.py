import math

import numpy as np
import pytest

from besovlab.besov import BesovParams
from besovlab.constructions import (CORPUS_NAMES, BumpFamily, ConstructionError, corpus, corpus_function,
                                    harmonic_stack, make_annulus_condenser, make_anisotropic_box,
                                    make_dyadic_stack, make_equal_stack, psi_profile, ring_centers, tent,
                                    unit_stack_norm, xi, xi_lower)
from besovlab.grid import Domain, lp_norm, sample


def _tent_lp(R, p):
    return (2 * math.pi * R * R / ((p + 1) * (p + 2))) ** (1 / p)


def test_single_bump_is_tent():
    dom = Domain(4.0, 64)
    fam, F = make_dyadic_stack((0.0, 0.0), 1.0, [1.0], dom)
    np.testing.assert_array_equal(F.values, sample(tent((0, 0), 1.0), dom).values)
    assert F.values.max() == 1.0


def test_concentric_harmonic_stack_peak():
    dom = Domain(4.0, 64)
    b = 1.0 / (np.arange(8) + 1.0)
    fam, F = make_dyadic_stack((0.0, 0.0), 1.0, b, dom)
    assert F.values[32, 32] == pytest.approx(sum(1 / k for k in range(1, 9)), rel=1e-14)
    assert F.values[32, 32] == pytest.approx(2.7178571428571425)


def test_lipschitz_exact():
    fam, _ = make_dyadic_stack((0.0, 0.0), 0.5, [1.0, 0.5, 0.25])
    np.testing.assert_allclose(fam.lipschitz(), np.array([1.0, 0.5, 0.25]) * 2.0 ** np.arange(3) / 0.5)


def test_disjoint_dyadic_stack_passes_and_fails():
    R = 0.1
    c = np.stack([18 * R * np.arange(4), np.zeros(4)], 1)
    fam, _ = make_dyadic_stack(c, R, np.ones(4))
    assert fam.pairwise_disjoint()
    with pytest.raises(ConstructionError):
        make_dyadic_stack(c * 0.2, R, np.ones(4))


def test_equal_stack_lp_factorisation():
    # node-aligned centers make every bump sample identically
    dom = Domain(8.0, 512)
    R = 0.1
    c = [(1.5, 0.0), (0.0, 1.5), (-1.5, 0.0), (0.0, -1.5)]
    b = np.array([1.0, 2.0, 3.0, 4.0])
    fam, F = make_equal_stack(c, R, b, dom)
    _, one = make_equal_stack(c[:1], R, [1.0], dom)
    assert lp_norm(F, 4.0) == pytest.approx(np.sum(b ** 4) ** 0.25 * lp_norm(one, 4.0), rel=1e-12)
    _, ones = make_equal_stack(c, R, np.ones(4), dom)
    assert lp_norm(ones, 4.0) ** 4 == pytest.approx(4 * lp_norm(one, 4.0) ** 4, rel=1e-12)
    assert lp_norm(one, 4.0) == pytest.approx(_tent_lp(R, 4.0), rel=0.02)
    assert fam.lp_power(4.0) == pytest.approx(b ** 4 * _tent_lp(R, 4.0) ** 4)


def test_equal_stack_rejects_overlap():
    with pytest.raises(ConstructionError):
        make_equal_stack([(0.0, 0.0), (1.0, 0.0)], 0.2, [1.0, 1.0])


def test_ring_centers_spacing():
    c = ring_centers(5, 0.1)
    d = np.hypot(*(c - np.roll(c, 1, axis=0)).T)
    np.testing.assert_allclose(d, 1.8)


def test_family_rejections_and_fit():
    with pytest.raises(ConstructionError):
        BumpFamily(np.zeros((2, 2)), [1.0], [1.0])
    with pytest.raises(ConstructionError):
        BumpFamily(np.zeros((1, 2)), [0.0], [1.0])
    with pytest.raises(ConstructionError):
        BumpFamily(np.zeros((1, 2)), [1.0], [-1.0])
    with pytest.raises(ConstructionError):
        make_dyadic_stack((0.0, 0.0), 2.0, [1.0], Domain(4.0, 32))


def test_family_json_round_trip():
    fam, _ = make_dyadic_stack((0.1, -0.2), 0.5, [0.3, 0.7])
    back = BumpFamily.from_json(fam.to_json())
    for a in ("centers", "radii", "amplitudes"):
        np.testing.assert_array_equal(getattr(fam, a), getattr(back, a))


# ---- xi

def test_xi_examples():
    assert xi(0.25, 30) == pytest.approx(1.0, abs=1e-15)
    assert xi(1 - 1e-12, 10) == pytest.approx(0.0, abs=1e-11)
    assert xi(2.0 ** -10, 16) >= 0.5 * sum(1 / k for k in range(1, 11))
    assert xi_lower(2.0 ** -10) == pytest.approx(0.5 * sum(1 / k for k in range(1, 11)))


def test_xi_strictly_decreasing_and_above_lower_bound():
    sig = np.geomspace(1e-4, 0.99, 60)
    vals = [xi(s, 16) for s in sig]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    for s in sig:
        if int(math.floor(-math.log2(2 * s))) < 16:
            assert xi(s, 16) >= xi_lower(s)


@pytest.mark.parametrize("args", [(0.0, 3), (1.0, 3), (0.5, 0)])
def test_xi_rejections(args):
    with pytest.raises(ConstructionError):
        xi(*args)


# ---- condensers

def test_condenser_values():
    dom = Domain(4.0, 128)
    r, R = 0.2, 1.0
    c = make_annulus_condenser((0.0, 0.0), r, R, None, dom)
    vals = c(np.array([r / 2, (r + R) / 2, 2 * R]), np.zeros(3))
    assert vals[0] == 1.0 and 0 < vals[1] < 1 and vals[2] == 0.0
    X1, X2 = dom.nodes()
    rad = np.hypot(X1, X2)
    u = c.function.values
    assert np.all(u[rad <= r] == 1.0) and np.all(u[rad >= R] == 0.0)
    assert u.min() >= 0 and u.max() <= 1


def test_condenser_quarter_ratio_uses_unit_level():
    c = make_annulus_condenser((0.0, 0.0), 0.25, 1.0, 30, Domain(4.0, 64))
    fam = harmonic_stack((0.0, 0.0), 1.0, 30)
    x = np.linspace(0, 1, 50)
    np.testing.assert_allclose(c(x, 0 * x), np.minimum(1.0, fam(x, 0 * x) / xi(0.25, 30)))
    assert xi(0.25, 30) == pytest.approx(1.0)


def test_condenser_radially_non_increasing():
    c = make_annulus_condenser((0.0, 0.0), 0.1, 1.0, None, Domain(4.0, 64))
    x = np.linspace(0, 1.2, 400)
    v = c(x, 0 * x)
    assert np.all(np.diff(v) <= 1e-15)


def test_condenser_rejections():
    with pytest.raises(ConstructionError):
        make_annulus_condenser((0.0, 0.0), 1.0, 0.5, None, Domain(4.0, 32))
    with pytest.raises(ConstructionError):
        make_annulus_condenser((0.5, 0.0), 0.1, 1.0, None, Domain(4.0, 32))


def test_psi_profile_decreasing_and_bounded():
    dom = Domain(4.0, 256)
    prm = BesovParams(0.5, 2.0)
    rows = psi_profile([2.0, 8.0, 32.0], prm, dom)
    norms = [v for _, v in rows]
    assert all(a > b for a, b in zip(norms, norms[1:]))
    assert len(psi_profile([3.0], prm, Domain(4.0, 64))) == 1
    J = 2
    c_prime = unit_stack_norm(prm, dom, J=J)
    assert norms[0] <= 1.05 * c_prime / xi(0.5, J)


def test_psi_profile_rejects_bad_ratio():
    with pytest.raises(ConstructionError):
        psi_profile([1.0], BesovParams(0.5, 2.0), Domain(4.0, 32))


# ---- anisotropic box

def test_box_boundary_values():
    dom = Domain(8.0, 128)
    A1, A2 = 0.25, 1.0
    u, Z = make_anisotropic_box(A1, A2, dom)
    assert Z.all() and Z.shape == (128, 128)
    X1, X2 = dom.nodes()
    inside = (np.abs(X1) <= A1) & (np.abs(X2) <= A2)
    outside = (np.abs(X1) >= 2 * A1) | (np.abs(X2) >= 2 * A2)
    assert np.all(u.values[inside] == 1.0) and np.all(u.values[outside] == 0.0)


def test_box_rejections():
    with pytest.raises(ConstructionError):
        make_anisotropic_box(1.0, 0.5, Domain(8.0, 32))
    with pytest.raises(ConstructionError):
        make_anisotropic_box(0.5, 1.5, Domain(8.0, 32))


# ---- corpus

def test_corpus_members_supported_in_ball():
    assert len(CORPUS_NAMES) == 10 and len(corpus(0.5)) == 10
    dom = Domain(4.0, 64)
    for name in CORPUS_NAMES:
        g = corpus_function(name, dom, rho=0.8)
        assert np.abs(g.values).max() > 0
    with pytest.raises(ConstructionError):
        corpus_function("nope", dom)
