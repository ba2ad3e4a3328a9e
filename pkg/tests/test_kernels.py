import numpy as np
import pytest

from besovlab import kernels
from besovlab._accel import HAVE_NUMBA

BACKENDS = sorted(kernels.IMPLEMENTATIONS)


def _field(n=12, seed=0, pad=3):
    rng = np.random.default_rng(seed)
    v = np.zeros((n, n))
    v[pad:n - pad, pad + 1:n - pad] = rng.normal(size=(n - 2 * pad, n - 2 * pad - 1))
    return v


def _offsets(n, m=40, seed=1):
    rng = np.random.default_rng(seed)
    o = rng.integers(-(n - 1), n, size=(m, 2))
    return o[(o != 0).any(1)].astype(np.int64)


def _brute_powersums(v, offs, p):
    n = v.shape[0]
    pad = np.zeros((3 * n, 3 * n))
    pad[n:2 * n, n:2 * n] = v
    out = []
    for a, b in offs:
        sh = np.zeros_like(pad)
        sh[max(0, -a):3 * n - max(0, a), max(0, -b):3 * n - max(0, b)] = \
            pad[max(0, a):3 * n - max(0, -a), max(0, b):3 * n - max(0, -b)]
        out.append(np.sum(np.abs(sh - pad) ** p))
    return np.array(out)


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("p", [1.0, 2.0, 3.0, 4.0, 2.5, 6.666])
def test_powersums_against_brute_force(backend, p):
    v = _field()
    offs = _offsets(12)
    got = kernels.IMPLEMENTATIONS[backend]["powersums"](v, offs, p)
    np.testing.assert_allclose(got, _brute_powersums(v, offs, p), rtol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_oracle_table_matches_powersums(backend):
    v = _field(8, pad=1)
    tab = kernels.IMPLEMENTATIONS[backend]["oracle_sums"](v, 4.0)
    offs = _offsets(8, 30)
    ps = kernels.powersums(v, offs, 4.0)
    np.testing.assert_allclose(tab[offs[:, 0] + 7, offs[:, 1] + 7], ps, rtol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_gradient_matches_finite_differences(backend):
    v = _field(10, seed=4, pad=2)
    offs = _offsets(10, 12, seed=5)
    coefs = np.linspace(0.5, 1.5, len(offs))
    p = 3.0
    g = kernels.IMPLEMENTATIONS[backend]["powersum_grad"](v, offs, coefs, p, (0, 10, 0, 10))
    eps = 1e-6
    for i, j in [(3, 4), (5, 5), (0, 0), (9, 2)]:
        vp, vm = v.copy(), v.copy()
        vp[i, j] += eps
        vm[i, j] -= eps
        fd = (np.dot(coefs, kernels.powersums(vp, offs, p)) - np.dot(coefs, kernels.powersums(vm, offs, p))) / (2 * eps)
        assert g[i, j] == pytest.approx(fd, rel=1e-5, abs=1e-7)


@pytest.mark.parametrize("backend", BACKENDS)
def test_gradient_region_restriction(backend):
    v = _field(10, seed=4, pad=2)
    offs = _offsets(10, 12, seed=5)
    coefs = np.ones(len(offs))
    full = kernels.IMPLEMENTATIONS[backend]["powersum_grad"](v, offs, coefs, 4.0, (0, 10, 0, 10))
    part = kernels.IMPLEMENTATIONS[backend]["powersum_grad"](v, offs, coefs, 4.0, (2, 6, 3, 8))
    np.testing.assert_allclose(part[2:6, 3:8], full[2:6, 3:8], rtol=1e-13)
    mask = np.ones((10, 10), bool)
    mask[2:6, 3:8] = False
    assert not part[mask].any()


@pytest.mark.parametrize("mode", [0, 1])
def test_annulus_sup_brute_force(mode):
    v = _field(8, seed=7, pad=1)
    offs = _offsets(8, 15, seed=8)
    w = np.linspace(1.0, 2.0, len(offs))
    got = kernels.annulus_sup(v, offs, w, mode)
    n = 8
    ref = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            for (a, b), wk in zip(offs, w):
                y = v[i + a, j + b] if 0 <= i + a < n and 0 <= j + b < n else 0.0
                x = v[i, j]
                d = abs(y - x)
                if mode == 0:
                    val = 0.5 * d
                else:
                    s = abs(x) + abs(y)
                    val = d * abs(x) / s if s > 0 else 0.0
                ref[i, j] = max(ref[i, j], wk * val)
    np.testing.assert_allclose(got, ref, rtol=1e-13, atol=1e-15)


@pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")
@pytest.mark.parametrize("name", ["powersums", "annulus_sup", "oracle_sums"])
def test_backends_agree(name):
    v = _field(10, seed=2, pad=2)
    offs = _offsets(10, 25, seed=3)
    args = {"powersums": (v, offs, 4.0), "annulus_sup": (v, offs, np.ones(len(offs)), 0),
            "oracle_sums": (v, 4.0)}[name]
    a = kernels.IMPLEMENTATIONS["numpy"][name](*args)
    b = kernels.IMPLEMENTATIONS["numba"][name](*args)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-300)


def test_support_bbox():
    v = np.zeros((8, 8))
    v[2, 5] = 1.0
    v[4, 3] = -1.0
    assert kernels.support_bbox(v) == (2, 5, 3, 6)
