"""Planar homeomorphisms, composition, distortion scans, Jacobian level census."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid import Domain, GridFunction, sample


class HomeoError(ValueError):
    """Invalid map or experiment request."""


@dataclass(frozen=True, eq=False)
class Homeomorphism:
    """Forward map, inverse and Jacobian determinant of a planar homeomorphism.

    All three callables take coordinate arrays ``(x1, x2)``; the maps return
    a pair of arrays.
    """

    forward: Callable
    inverse: Callable | None
    jacobian_det: Callable
    label: str
    kind: str
    params: dict = field(default_factory=dict)
    interpolated: bool = False
    forward_delta: Callable | None = None
    inverse_delta: Callable | None = None

    def __call__(self, x1, x2):
        return self.forward(x1, x2)

    def delta(self, x0, d1, d2):
        """``phi(x0 + d) - phi(x0)``, accurate for ``|d| << |x0|`` when the family provides it."""
        if self.forward_delta is not None:
            return self.forward_delta(x0, d1, d2)
        f1, f2 = self.forward(x0[0] + np.asarray(d1, float), x0[1] + np.asarray(d2, float))
        c1, c2 = self.forward(np.array(x0[0], float), np.array(x0[1], float))
        return f1 - c1, f2 - c2

    def inverse_delta_at(self, y0, d1, d2):
        """``phi^-1(y0 + d) - phi^-1(y0)``."""
        if self.inverse_delta is not None:
            return self.inverse_delta(y0, d1, d2)
        f1, f2 = self.inverse(y0[0] + np.asarray(d1, float), y0[1] + np.asarray(d2, float))
        c1, c2 = self.inverse(np.array(y0[0], float), np.array(y0[1], float))
        return f1 - c1, f2 - c2

    def roundtrip_error(self, n: int = 100, seed: int = 0, box: float = 2.0, hole: float = 0.0) -> float:
        """Max ``|phi(phi^-1(y)) - y|`` over ``n`` seeded probes in ``[-box, box]^2``."""
        if self.inverse is None:
            raise HomeoError(f"{self.label} has no inverse")
        rng = np.random.default_rng(seed)
        y = rng.uniform(-box, box, size=(4 * n, 2))
        y = y[np.hypot(y[:, 0], y[:, 1]) > hole][:n]
        a, b = self.inverse(y[:, 0], y[:, 1])
        c, d = self.forward(a, b)
        return float(np.max(np.hypot(c - y[:, 0], d - y[:, 1])))

    def jacobian_fd_error(self, n: int = 100, seed: int = 0, box: float = 2.0, hole: float = 0.1,
                          eps: float = 1e-6) -> float:
        """Max relative gap between ``jacobian_det`` and a central-difference determinant."""
        rng = np.random.default_rng(seed + 1)
        x = rng.uniform(-box, box, size=(4 * n, 2))
        x = x[np.hypot(x[:, 0], x[:, 1]) > hole][:n]
        x1, x2 = x[:, 0], x[:, 1]
        f1p, f2p = self.forward(x1 + eps, x2)
        f1m, f2m = self.forward(x1 - eps, x2)
        g1p, g2p = self.forward(x1, x2 + eps)
        g1m, g2m = self.forward(x1, x2 - eps)
        a = (f1p - f1m) / (2 * eps)
        c = (f2p - f2m) / (2 * eps)
        b = (g1p - g1m) / (2 * eps)
        d = (g2p - g2m) / (2 * eps)
        fd = a * d - b * c
        J = self.jacobian_det(x1, x2)
        return float(np.max(np.abs(fd - J) / np.maximum(np.abs(J), 1e-300)))

    def to_dict(self) -> dict:
        return {"label": self.label, "kind": self.kind, "params": self.params}


def identity() -> Homeomorphism:
    return Homeomorphism(lambda x1, x2: (np.asarray(x1, float) * 1.0, np.asarray(x2, float) * 1.0),
                         lambda y1, y2: (np.asarray(y1, float) * 1.0, np.asarray(y2, float) * 1.0),
                         lambda x1, x2: np.ones(np.broadcast(np.asarray(x1), np.asarray(x2)).shape),
                         "identity", "affine", {"matrix": [[1.0, 0.0], [0.0, 1.0]], "shift": [0.0, 0.0]})


def affine(matrix, shift=(0.0, 0.0)) -> Homeomorphism:
    """``x -> A x + b`` for an invertible 2x2 ``A``."""
    A = np.asarray(matrix, dtype=float)
    if A.shape == ():
        A = float(A) * np.eye(2)
    elif A.shape == (2,):
        A = np.diag(A)
    if A.shape != (2, 2):
        raise HomeoError("affine matrix must be 2x2")
    det = float(np.linalg.det(A))
    if abs(det) < 1e-14:
        raise HomeoError("affine matrix is singular")
    Ai = np.linalg.inv(A)
    b = np.asarray(shift, dtype=float)

    def fwd(x1, x2):
        return A[0, 0] * x1 + A[0, 1] * x2 + b[0], A[1, 0] * x1 + A[1, 1] * x2 + b[1]

    def inv(y1, y2):
        u1, u2 = y1 - b[0], y2 - b[1]
        return Ai[0, 0] * u1 + Ai[0, 1] * u2, Ai[1, 0] * u1 + Ai[1, 1] * u2

    def jac(x1, x2):
        return np.full(np.broadcast(np.asarray(x1), np.asarray(x2)).shape, det)

    return Homeomorphism(fwd, inv, jac, f"affine{A.tolist()}", "affine",
                         {"matrix": A.tolist(), "shift": b.tolist()})


def rotation(theta: float, shift=(0.0, 0.0)) -> Homeomorphism:
    c, s = math.cos(theta), math.sin(theta)
    h = affine([[c, -s], [s, c]], shift)
    return Homeomorphism(h.forward, h.inverse, h.jacobian_det, f"rotation({theta:g})", "affine",
                         h.params)


def radial_stretch(alpha: float) -> Homeomorphism:
    """``x -> |x|^(alpha-1) x``; Jacobian ``alpha |x|^(2(alpha-1))``."""
    alpha = float(alpha)
    if not alpha > 0:
        raise HomeoError(f"alpha must be positive, got {alpha}")

    def make(a):
        def fwd(x1, x2):
            x1 = np.asarray(x1, dtype=float)
            x2 = np.asarray(x2, dtype=float)
            r = np.hypot(x1, x2)
            with np.errstate(divide="ignore", invalid="ignore"):
                fac = np.where(r > 0, r ** (a - 1.0), 0.0)
            return fac * x1, fac * x2
        return fwd

    def make_delta(a):
        fwd = make(a)

        def delta(x0, d1, d2):
            x0 = np.asarray(x0, dtype=float)
            d1 = np.asarray(d1, dtype=float)
            d2 = np.asarray(d2, dtype=float)
            r2 = float(x0 @ x0)
            if r2 == 0.0:
                return fwd(d1, d2)
            t = (2.0 * (x0[0] * d1 + x0[1] * d2) + d1 * d1 + d2 * d2) / r2
            fac0 = r2 ** (0.5 * (a - 1.0))
            dfac = fac0 * np.expm1(0.5 * (a - 1.0) * np.log1p(t))
            return dfac * x0[0] + (fac0 + dfac) * d1, dfac * x0[1] + (fac0 + dfac) * d2
        return delta

    def jac(x1, x2):
        r = np.hypot(np.asarray(x1, float), np.asarray(x2, float))
        with np.errstate(divide="ignore"):
            return alpha * r ** (2.0 * (alpha - 1.0))

    return Homeomorphism(make(alpha), make(1.0 / alpha), jac, f"radial_stretch({alpha:g})",
                         "radial_stretch", {"alpha": alpha},
                         forward_delta=make_delta(alpha), inverse_delta=make_delta(1.0 / alpha))


def banded_shear(width: float = 0.5, slope: float = 1.0, growth: float = 2.0) -> Homeomorphism:
    """``(x1, x2) -> (x1, x2 + sigma(x1))`` with ``sigma'`` = ``slope * growth^k`` on ``k w <= |x1| < (k+1) w``.

    Piecewise affine with unit Jacobian; the local eccentricity grows without
    bound along ``x1``, so the map is not quasiconformal on the plane.
    """
    if not (width > 0 and slope > 0 and growth > 1):
        raise HomeoError("need width > 0, slope > 0, growth > 1")

    def sigma(t):
        t = np.asarray(t, dtype=float)
        a = np.abs(t)
        K = np.floor(a / width)
        tau = a - K * width
        gk = growth ** K
        return np.sign(t) * slope * (width * (gk - 1.0) / (growth - 1.0) + gk * tau)

    def fwd(x1, x2):
        return np.asarray(x1, float) * 1.0, x2 + sigma(x1)

    def inv(y1, y2):
        return np.asarray(y1, float) * 1.0, y2 - sigma(y1)

    def jac(x1, x2):
        return np.ones(np.broadcast(np.asarray(x1), np.asarray(x2)).shape)

    return Homeomorphism(fwd, inv, jac, f"banded_shear({width:g},{slope:g},{growth:g})", "shear",
                         {"width": width, "slope": slope, "growth": growth})


def compose(outer: Homeomorphism, inner: Homeomorphism) -> Homeomorphism:
    """``outer o inner``."""

    def fwd(x1, x2):
        return outer.forward(*inner.forward(x1, x2))

    inv = None
    if outer.inverse is not None and inner.inverse is not None:
        def inv(y1, y2):
            return inner.inverse(*outer.inverse(y1, y2))

    def jac(x1, x2):
        y1, y2 = inner.forward(x1, x2)
        return outer.jacobian_det(y1, y2) * inner.jacobian_det(x1, x2)

    return Homeomorphism(fwd, inv, jac, f"({outer.label})o({inner.label})", "composition",
                         {"outer": outer.to_dict(), "inner": inner.to_dict()})


def _bilinear(g: GridFunction, y1, y2):
    dom = g.domain
    n, h = dom.resolution, dom.spacing
    u = (np.asarray(y1, float) + 0.5 * dom.side_length) / h
    v = (np.asarray(y2, float) + 0.5 * dom.side_length) / h
    i0 = np.floor(u).astype(np.int64)
    j0 = np.floor(v).astype(np.int64)
    fu, fv = u - i0, v - j0
    pad = np.zeros((n + 2, n + 2))
    pad[1:-1, 1:-1] = g.values

    def at(i, j):
        ok = (i >= -1) & (i <= n) & (j >= -1) & (j <= n)
        return np.where(ok, pad[np.clip(i + 1, 0, n + 1), np.clip(j + 1, 0, n + 1)], 0.0)

    return ((1 - fu) * (1 - fv) * at(i0, j0) + fu * (1 - fv) * at(i0 + 1, j0)
            + (1 - fu) * fv * at(i0, j0 + 1) + fu * fv * at(i0 + 1, j0 + 1))


def sampled_map(domain: Domain, y1: np.ndarray, y2: np.ndarray, label: str = "sampled") -> Homeomorphism:
    """Bilinear interpolant of a map given at the nodes of ``domain``; no inverse."""
    g1 = GridFunction(domain, y1)
    g2 = GridFunction(domain, y2)
    eps = 1e-3 * domain.spacing

    def fwd(x1, x2):
        return _bilinear(g1, x1, x2), _bilinear(g2, x1, x2)

    def jac(x1, x2):
        a1, a2 = fwd(x1 + eps, x2)
        b1, b2 = fwd(x1 - eps, x2)
        c1, c2 = fwd(x1, x2 + eps)
        d1, d2 = fwd(x1, x2 - eps)
        return ((a1 - b1) * (c2 - d2) - (c1 - d1) * (a2 - b2)) / (4 * eps * eps)

    return Homeomorphism(fwd, None, jac, label, "sampled", {}, interpolated=True)


def compose_function(f, phi: Homeomorphism, domain: Domain, support_radius: float | None = None) -> GridFunction:
    """Samples of ``f o phi`` at the nodes of ``domain``.

    ``f`` is a callable (evaluated exactly at ``phi(node)``) or a
    :class:`GridFunction` (bilinear interpolation, zero off its box).
    """
    if isinstance(f, GridFunction):
        def fn(x1, x2):
            return _bilinear(f, *phi.forward(x1, x2))
    else:
        def fn(x1, x2):
            return f(*phi.forward(x1, x2))
    return sample(fn, domain, support_radius)


# --------------------------------------------------------------------------
# distortion diagnostics

@dataclass
class ScanResult:
    H_hat: float
    probes: int
    skipped: int
    worst: tuple          # (x, y, z) of the worst triple


def _scan(phi: Homeomorphism, probes: int, seed: int, region: Domain, hole: float = 0.0,
          batch: int = 4096) -> ScanResult:
    if probes < 1000:
        raise HomeoError("quasisymmetry scan needs at least 1000 probes")
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, 7])
    half = 0.5 * region.side_length
    rmin, rmax = region.spacing, half
    got, skipped = 0, 0
    best, worst = 0.0, None
    while got < probes:
        m = batch
        x = rng.uniform(-half, half, size=(m, 2))
        rz = np.exp(rng.uniform(math.log(rmin), math.log(rmax), m))
        ry = rz * rng.uniform(0, 1, m) ** 0.25
        ty = rng.uniform(0, 2 * math.pi, m)
        tz = rng.uniform(0, 2 * math.pi, m)
        y = x + ry[:, None] * np.stack([np.cos(ty), np.sin(ty)], 1)
        z = x + rz[:, None] * np.stack([np.cos(tz), np.sin(tz)], 1)
        ok = (np.all(np.abs(y) <= half, 1) & np.all(np.abs(z) <= half, 1) & (ry > 0))
        if hole > 0:
            ok &= (np.hypot(*x.T) > hole) & (np.hypot(*y.T) > hole) & (np.hypot(*z.T) > hole)
        skipped += int(np.count_nonzero(~ok))
        x, y, z = x[ok], y[ok], z[ok]
        take = min(len(x), probes - got)
        x, y, z = x[:take], y[:take], z[:take]
        got += take
        if take == 0:
            continue
        fx = np.stack(phi.forward(x[:, 0], x[:, 1]), 1)
        fy = np.stack(phi.forward(y[:, 0], y[:, 1]), 1)
        fz = np.stack(phi.forward(z[:, 0], z[:, 1]), 1)
        num = np.hypot(*(fx - fy).T)
        den = np.hypot(*(fx - fz).T)
        ratio = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.inf)
        i = int(np.argmax(ratio))
        if ratio[i] > best:
            best = float(ratio[i])
            worst = (x[i].tolist(), y[i].tolist(), z[i].tolist())
    return ScanResult(best, probes, skipped, worst)


def quasisymmetry_scan(phi: Homeomorphism, probes: int, seed: int, region: Domain, hole: float = 0.0) -> float:
    """Largest ``|phi x - phi y| / |phi x - phi z|`` over seeded triples with ``|x-y| <= |x-z|``.

    ``x`` is uniform in the region, ``|x - z|`` log-uniform between one grid
    cell and ``L/2``, and ``|x - y| = |x - z| v`` with ``v`` skewed towards
    1. Triples leaving the region (or entering ``B(0, hole)``) are redrawn.
    """
    return _scan(phi, probes, seed, region, hole).H_hat


@dataclass
class LevelCensus:
    """Node measure of each Jacobian band ``A_k = {2^-2(k+1) <= |J| < 2^-2k}``."""

    entries: list              # (k, measure)
    domain: Domain
    zero_measure: float = 0.0
    other_measure: float = 0.0  # infinite / non-finite Jacobian or outside k_range

    @property
    def nonempty(self) -> int:
        return sum(1 for _, m in self.entries if m > 0)

    def total(self) -> float:
        return sum(m for _, m in self.entries) + self.zero_measure + self.other_measure

    def to_dict(self) -> dict:
        return {"entries": [[int(k), float(m)] for k, m in self.entries],
                "zero_measure": self.zero_measure, "other_measure": self.other_measure,
                "nonempty_bins": self.nonempty}


def jacobian_level(J) -> np.ndarray:
    """Band index ``k`` with ``2^-2(k+1) <= J < 2^-2k``; boundary values take the band they bound below."""
    t = -0.5 * np.log2(np.asarray(J, dtype=float))
    return (np.ceil(t) - 1).astype(np.int64)


def jacobian_level_census(phi: Homeomorphism, domain: Domain, k_range=None) -> LevelCensus:
    x1, x2 = domain.nodes()
    J = np.abs(np.asarray(phi.jacobian_det(x1, x2), dtype=float))
    w = domain.spacing ** 2
    zero = J == 0
    finite = np.isfinite(J) & ~zero
    k = jacobian_level(np.where(finite, J, 1.0))
    other = ~finite & ~zero
    if k_range is not None:
        lo, hi = int(k_range[0]), int(k_range[1])
        out = finite & ((k < lo) | (k > hi))
        other |= out
        finite &= ~out
    ks, counts = np.unique(k[finite], return_counts=True)
    entries = [(int(a), float(c) * w) for a, c in zip(ks, counts)]
    return LevelCensus(entries, domain, float(np.count_nonzero(zero)) * w, float(np.count_nonzero(other)) * w)


# --------------------------------------------------------------------------
# dichotomy experiment

@dataclass
class DichotomyRow:
    family: str
    alpha: float
    s: float
    q: float
    p: float
    N_lv: int
    norm_G: float
    norm_GoPhi: float
    ratio: float
    seed: int
    construction: int


CSV_COLUMNS = ["family", "alpha", "s", "q", "p", "N_lv", "norm_G", "norm_GoPhi", "ratio", "seed", "construction"]


def _fmt(v):
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


@dataclass
class DichotomyReport:
    rows: list
    slopes: dict               # {q: {"construction_1": .., "construction_2": .., "growth": ..}}
    specs: list                # JSON construction specs per (construction, N_lv)
    levels: list               # chosen band indices k_j
    params: dict

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"params": self.params, "levels": self.levels,
                "slopes": {str(k): v for k, v in self.slopes.items()},
                "rows": [r.__dict__ for r in self.rows], "specs": self.specs}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# band spacing between consecutive dichotomy pieces; wider spacing means less
# shared tail between pieces and slopes closer to their asymptotic values
DEFAULT_STRIDE = 6


def ray_center(phi: Homeomorphism, k: int, direction=(1.0, 0.0), rmax: float = 1e6) -> np.ndarray:
    """Point on the ray where ``log2 |J|`` hits the middle ``-2k-1`` of band ``k``.

    Uses bisection on ``log2 |J|``, which must be monotone along the ray.
    Radial stretches are handled in closed form.
    """
    e = np.asarray(direction, float)
    e = e / np.hypot(*e)
    target = -2.0 * k - 1.0
    if phi.kind == "radial_stretch":
        a = phi.params["alpha"]
        if a == 1.0:
            raise HomeoError("the identity has a single Jacobian band")
        # log2(a) + 2(a-1) log2 r = target
        lr = (target - math.log2(a)) / (2.0 * (a - 1.0))
        return (2.0 ** lr) * e
    g = lambda r: float(np.log2(abs(phi.jacobian_det(np.array(r * e[0]), np.array(r * e[1])))))
    lo, hi = 1e-12, rmax
    glo, ghi = g(lo), g(hi)
    if (glo - target) * (ghi - target) > 0:
        raise HomeoError(f"band {k} is not met along the ray")
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if (g(mid) - target) * (glo - target) <= 0:
            hi = mid
        else:
            lo, glo = mid, g(mid)
    return math.sqrt(lo * hi) * e


def _image_extent(phi: Homeomorphism, x, radius: float, m: int = 720):
    """Min and max of ``|phi(y) - phi(x)|`` over the circle ``|y - x| = radius``."""
    t = 2 * math.pi * np.arange(m) / m
    e1, e2 = phi.delta(x, radius * np.cos(t), radius * np.sin(t))
    d = np.hypot(e1, e2)
    return float(d.min()), float(d.max())


def _preimage_radius(phi: Homeomorphism, y_center, radius: float, m: int = 720) -> float:
    """Max ``|phi^-1(z) - phi^-1(y)|`` over the circle ``|z - y| = radius``."""
    t = 2 * math.pi * np.arange(m) / m
    a, b = phi.inverse_delta_at(y_center, radius * np.cos(t), radius * np.sin(t))
    return float(np.max(np.hypot(a, b)))


def _local_tent(r, b):
    def f(d1, d2):
        return b * np.maximum(0.0, 1.0 - np.hypot(d1, d2) / r)
    return f


def _local_pullback(phi, x, r, b):
    x = np.asarray(x, dtype=float)

    def h(d1, d2):
        e1, e2 = phi.delta(x, d1, d2)
        return b * np.maximum(0.0, 1.0 - np.hypot(e1, e2) / r)
    return h


def dichotomy_pieces(phi: Homeomorphism, ks, b, construction: int, eps: float = 1.0 / 16):
    """Image-side pieces of ``G`` and source-side pieces of ``G o phi`` for one construction.

    Construction 1: equal source balls ``B(x_j, r)``, image tents of radius
    ``c 2^-k_j r``. Construction 2: equal image tents of radius ``c r'``,
    source balls ``B(x_j, 2^k_j r')``. ``c`` is measured as the smallest
    inner image radius over the chosen balls, so each tent sits inside the
    image of its ball.
    """
    from .besov import Piece

    ks = [int(k) for k in ks]
    xs = [ray_center(phi, k) for k in ks]
    xmin = min(float(np.hypot(*x)) for x in xs)
    kmax = max(ks)
    if construction == 1:
        r = eps * xmin
        src_r = [r] * len(ks)
    elif construction == 2:
        r = eps * min(float(np.hypot(*x)) * 2.0 ** (-k) for x, k in zip(xs, ks))
        src_r = [2.0 ** k * r for k in ks]
    else:
        raise HomeoError("construction must be 1 or 2")
    inner = []
    for x, k, rs in zip(xs, ks, src_r):
        lo, hi = _image_extent(phi, x, rs)
        scale = 2.0 ** (-k) * r if construction == 1 else r
        inner.append(lo / scale)
    c = min(inner)
    img, src, spec = [], [], []
    for x, k, rs, bj in zip(xs, ks, src_r, b):
        y = np.array(phi.forward(np.array(x[0]), np.array(x[1])), dtype=float)
        tr = c * (2.0 ** (-k) * r if construction == 1 else r)
        img.append(Piece((float(y[0]), float(y[1])), tr, _local_tent(tr, float(bj)), local=True))
        pre = _preimage_radius(phi, y, tr) * (1 + 1e-9)
        src.append(Piece((float(x[0]), float(x[1])), min(pre, rs),
                         _local_pullback(phi, x, tr, float(bj)), local=True))
        spec.append({"k": k, "source_center": [float(x[0]), float(x[1])], "source_radius": rs,
                     "image_center": [float(y[0]), float(y[1])], "image_radius": tr, "amplitude": float(bj)})
    # disjointness of the 9-dilates on both sides
    for side, pcs, rad in (("source", src, src_r), ("image", img, [p.radius for p in img])):
        for i in range(len(pcs)):
            for j in range(i + 1, len(pcs)):
                d = math.hypot(pcs[i].center[0] - pcs[j].center[0], pcs[i].center[1] - pcs[j].center[1])
                if d < 9 * (rad[i] + rad[j]):
                    raise HomeoError(f"{side} 9-dilates overlap for bands {ks[i]}, {ks[j]}")
    return img, src, {"construction": construction, "c_phi": c, "r": r, "pieces": spec}


def _slope(xs, ys) -> float:
    if len(xs) < 2:
        return 0.0
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def dichotomy_levels(phi: Homeomorphism, n_levels: int, stride: int = DEFAULT_STRIDE,
                     domain: Domain | None = None) -> list:
    """Band indices ``k_0, k_0 +- stride, ...`` moving inwards from the outermost center inside ``L/4``."""
    lim = 0.25 * (domain.side_length if domain is not None else 4.0)
    radius = {}
    for k in range(-40, 41):
        try:
            radius[k] = float(np.hypot(*ray_center(phi, k)))
        except HomeoError:
            continue
    inside = {k: r for k, r in radius.items() if r <= lim * (1 - 1e-12)}
    if not inside:
        raise HomeoError("no Jacobian band center lies inside L/4 on the ray")
    k0 = max(inside, key=inside.get)
    step = stride if radius.get(k0 + 1, 0.0) < inside[k0] else -stride
    ks = [k0 + step * j for j in range(n_levels)]
    return sorted(ks)


def dichotomy_experiment(phi: Homeomorphism, levels, b, params, domain: Domain | None = None,
                         qs=None, stride: int = DEFAULT_STRIDE, seed: int = 0, method: str = "separated",
                         cells: int = 16, per_octave: int = 4, angles: int = 8) -> DichotomyReport:
    """Both constructions of the composition dichotomy for ``N_lv`` in ``levels``.

    For each level count the experiment builds ``G`` (image side) and
    ``G o phi`` (source side) from tents at points of distinct Jacobian bands
    on a ray, measures both norms and records ``ratio = ||G o phi|| / ||G||``.
    ``growth`` in ``slopes`` is the larger of the two constructions' fitted
    log-log slopes of ratio against ``N_lv``.

    ``method="separated"`` evaluates each tent on its own local grid; the
    pieces span many octaves and do not fit a single grid. ``method="grid"``
    demands that every piece be resolved by ``domain`` and otherwise raises
    naming the largest feasible level count.
    """
    from .besov import BesovParams, separated_data, aggregate_separated

    levels = sorted(int(n) for n in (levels if np.iterable(levels) else range(1, int(levels) + 1)))
    if not levels or levels[0] < 1 or levels[-1] > 6:
        raise HomeoError("level counts must lie in 1..6")
    qs = [params.q] if qs is None else list(qs)
    nmax = levels[-1]
    b = np.ones(nmax) if b is None else np.asarray(b, float)
    if len(b) < nmax:
        raise HomeoError(f"need {nmax} amplitudes, got {len(b)}")
    ks_all = dichotomy_levels(phi, nmax, stride, domain)
    if method == "grid":
        dom = domain if domain is not None else Domain(4.0, 64)
        feasible = 0
        for n in range(1, nmax + 1):
            try:
                for cons in (1, 2):
                    img, src, _ = dichotomy_pieces(phi, ks_all[:n], b[:n], cons)
                    rmin = min(p.radius for p in img + src)
                    if rmin < 4 * dom.spacing:
                        raise HomeoError("unresolved")
                feasible = n
            except HomeoError:
                break
        if feasible < nmax:
            raise HomeoError(f"single-grid dichotomy infeasible on N={dom.resolution}; "
                             f"maximal feasible N_lv is {feasible}")
        raise HomeoError("single-grid dichotomy is only used for feasibility checks")
    if method != "separated":
        raise HomeoError(f"unknown method {method!r}")

    rows, specs = [], []
    ratios = {q: {1: [], 2: []} for q in qs}
    alpha = float(phi.params.get("alpha", float("nan")))
    for n in levels:
        for cons in (1, 2):
            img, src, spec = dichotomy_pieces(phi, ks_all[:n], b[:n], cons)
            spec["N_lv"] = n
            specs.append(spec)
            dg = separated_data(img, params.p, cells, per_octave, angles)
            dh = separated_data(src, params.p, cells, per_octave, angles)
            for q in qs:
                pq = params.with_q(q)
                nG = aggregate_separated(dg, pq)
                nH = aggregate_separated(dh, pq)
                rows.append(DichotomyRow(phi.kind, alpha, params.s, float(q), params.p, n, nG, nH,
                                         nH / nG, int(seed), cons))
                ratios[q][cons].append(nH / nG)
    slopes = {}
    for q in qs:
        s1 = _slope(levels, ratios[q][1])
        s2 = _slope(levels, ratios[q][2])
        slopes[q] = {"construction_1": s1, "construction_2": s2, "growth": max(s1, s2),
                     "expected": abs(1.0 / q - 1.0 / params.p)}
    return DichotomyReport(rows, slopes, specs, ks_all,
                           {"family": phi.label, "s": params.s, "p": params.p, "qs": qs,
                            "stride": stride, "levels": levels, "seed": seed})
