"""Explicit test functions: tent stacks, annulus condensers, anisotropic boxes."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid import Domain, GridFunction, sample

DISJOINT_FACTOR = 9.0


class ConstructionError(ValueError):
    """Geometry or parameter violation in a construction."""


def tent(center, radius: float, amplitude: float = 1.0) -> Callable:
    """``b * max(0, 1 - |x - c| / r)`` as a vectorized callable."""
    cx, cy = float(center[0]), float(center[1])
    r, b = float(radius), float(amplitude)

    def f(x1, x2):
        return b * np.maximum(0.0, 1.0 - np.hypot(x1 - cx, x2 - cy) / r)

    return f


@dataclass(frozen=True)
class BumpFamily:
    """Tents ``b_j max(0, 1 - |y - x_j| / r_j)``; ``Lip f_j = b_j / r_j``."""

    centers: np.ndarray      # (m, 2)
    radii: np.ndarray        # (m,)
    amplitudes: np.ndarray   # (m,)

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centers, dtype=float))
        r = np.asarray(self.radii, dtype=float).ravel()
        b = np.asarray(self.amplitudes, dtype=float).ravel()
        if c.shape != (len(r), 2) or len(b) != len(r):
            raise ConstructionError("centers, radii and amplitudes must have matching lengths")
        if np.any(r <= 0):
            raise ConstructionError("radii must be positive")
        if np.any(b < 0):
            raise ConstructionError("amplitudes must be non-negative")
        for name, arr in (("centers", c), ("radii", r), ("amplitudes", b)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def __len__(self):
        return len(self.radii)

    def lipschitz(self) -> np.ndarray:
        return self.amplitudes / self.radii

    def support_radius(self) -> float:
        return float(np.max(np.hypot(self.centers[:, 0], self.centers[:, 1]) + self.radii))

    def pairwise_disjoint(self, factor: float = DISJOINT_FACTOR) -> bool:
        """Whether the balls ``B(x_j, factor * r_j)`` are pairwise disjoint."""
        c, r = self.centers, factor * self.radii
        for i in range(len(r)):
            d = np.hypot(c[i + 1:, 0] - c[i, 0], c[i + 1:, 1] - c[i, 1])
            if np.any(d < r[i] + r[i + 1:]):
                return False
        return True

    def __call__(self, x1, x2):
        out = np.zeros(np.broadcast(np.asarray(x1), np.asarray(x2)).shape)
        for (cx, cy), r, b in zip(self.centers, self.radii, self.amplitudes):
            if b != 0:
                out = out + b * np.maximum(0.0, 1.0 - np.hypot(x1 - cx, x2 - cy) / r)
        return out

    def sample(self, domain: Domain) -> GridFunction:
        rho = self.support_radius()
        return sample(self, domain, rho)

    def lp_power(self, p: float) -> np.ndarray:
        """Exact ``||f_j||_p^p`` for each tent: ``2 pi b^p r^2 / ((p+1)(p+2))``."""
        return 2.0 * math.pi * self.amplitudes ** p * self.radii ** 2 / ((p + 1.0) * (p + 2.0))

    def to_dict(self) -> dict:
        return {"profile": "tent",
                "centers": self.centers.tolist(),
                "radii": self.radii.tolist(),
                "amplitudes": self.amplitudes.tolist(),
                "truncation": len(self)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "BumpFamily":
        if d.get("profile", "tent") != "tent":
            raise ConstructionError(f"unknown profile {d.get('profile')!r}")
        return cls(np.asarray(d["centers"], float), np.asarray(d["radii"], float),
                   np.asarray(d["amplitudes"], float))

    @classmethod
    def from_json(cls, text: str) -> "BumpFamily":
        return cls.from_dict(json.loads(text))


def _centers(center_seq, m: int) -> np.ndarray:
    c = np.asarray(center_seq, dtype=float)
    if c.ndim == 1:
        if c.shape != (2,):
            raise ConstructionError("a single center must be a 2-vector")
        return np.tile(c, (m, 1))
    if c.shape != (m, 2):
        raise ConstructionError(f"need {m} centers, got array of shape {c.shape}")
    return c


def _fits(fam: BumpFamily, domain: Domain):
    if fam.support_radius() > 0.25 * domain.side_length * (1 + 1e-12):
        raise ConstructionError(
            f"support radius {fam.support_radius():.6g} exceeds L/4 = {0.25 * domain.side_length:.6g}")


def make_dyadic_stack(center_seq, R: float, b, domain: Domain | None = None,
                      disjoint: bool | None = None):
    """Tents of radii ``2^-j R`` with amplitudes ``b_j``, ``j < len(b)``.

    ``center_seq`` is one point (concentric stack) or one point per bump.
    With ``disjoint=True`` (the default when distinct centers are given) the
    ``9``-dilated balls must be pairwise disjoint. Returns the family and,
    when ``domain`` is given, its samples.
    """
    b = np.asarray(b, dtype=float).ravel()
    if len(b) == 0 or len(b) > 16:
        raise ConstructionError("truncation J must lie in 1..16")
    if not R > 0:
        raise ConstructionError("R must be positive")
    c = _centers(center_seq, len(b))
    radii = R * 2.0 ** (-np.arange(len(b)))
    fam = BumpFamily(c, radii, b)
    concentric = np.asarray(center_seq, float).ndim == 1
    if disjoint is None:
        disjoint = not concentric
    if disjoint and not fam.pairwise_disjoint():
        raise ConstructionError("9-dilated balls overlap")
    if domain is None:
        return fam, None
    _fits(fam, domain)
    return fam, fam.sample(domain)


def make_equal_stack(centers, R: float, b, domain: Domain | None = None):
    """Tents of common radius ``R`` whose 9-dilates are pairwise disjoint."""
    b = np.asarray(b, dtype=float).ravel()
    c = _centers(centers, len(b))
    fam = BumpFamily(c, np.full(len(b), float(R)), b)
    if not fam.pairwise_disjoint():
        raise ConstructionError("9-dilated balls overlap")
    if domain is None:
        return fam, None
    _fits(fam, domain)
    return fam, fam.sample(domain)


def ring_centers(m: int, R: float, gap: float = 18.0) -> np.ndarray:
    """``m`` centers on a circle, neighbours ``gap * R`` apart (one center: origin)."""
    if m == 1:
        return np.zeros((1, 2))
    rho = gap * R / (2.0 * math.sin(math.pi / m))
    th = 2.0 * math.pi * np.arange(m) / m
    return rho * np.stack([np.cos(th), np.sin(th)], 1)


# --------------------------------------------------------------------------
# annulus condensers

def xi(s_ratio: float, J: int) -> float:
    """Value of the concentric harmonic stack at relative radius ``s_ratio``.

    ``xi(sigma) = sum_{j<J} (j+1)^-1 max(0, 1 - 2^j sigma)``.
    """
    if not (0.0 < s_ratio < 1.0):
        raise ConstructionError(f"ratio must lie in (0,1), got {s_ratio}")
    if J < 1:
        raise ConstructionError("J must be >= 1")
    j = np.arange(J)
    return float(np.sum(np.maximum(0.0, 1.0 - 2.0 ** j * s_ratio) / (j + 1.0)))


def xi_lower(s_ratio: float) -> float:
    """``1/2 sum_{j <= -log2(2 sigma)} (j+1)^-1``."""
    top = int(math.floor(-math.log2(2.0 * s_ratio)))
    return 0.5 * float(np.sum(1.0 / (np.arange(top + 1) + 1.0))) if top >= 0 else 0.0


def harmonic_stack(x0, R: float, J: int) -> BumpFamily:
    """Concentric tents of radii ``2^-j R`` and heights ``1/(j+1)``."""
    return BumpFamily(np.tile(np.asarray(x0, float), (J, 1)), R * 2.0 ** (-np.arange(J)),
                      1.0 / (np.arange(J) + 1.0))


def default_truncation(r: float, R: float) -> int:
    """Smallest ``J`` for which every tent wider than ``r`` is kept.

    Tents narrower than ``r`` sit where ``u`` is clipped to 1, so any larger
    ``J`` gives the same ``u``.
    """
    return max(1, int(math.ceil(math.log2(R / r))) + 1)


@dataclass(frozen=True, eq=False)
class CondenserFunction:
    """``u = min(1, F / xi(r/R))`` for the concentric harmonic stack ``F``."""

    center: tuple
    inner: float
    outer: float
    truncation: int
    function: GridFunction

    def __call__(self, x1, x2):
        return condenser_profile(self.center, self.inner, self.outer, self.truncation)(x1, x2)

    def to_dict(self) -> dict:
        return {"center": list(self.center), "inner": self.inner, "outer": self.outer,
                "truncation": self.truncation}


def condenser_profile(x0, r: float, R: float, J: int | None = None) -> Callable:
    if not (0 < r < R):
        raise ConstructionError(f"need 0 < r < R, got r={r}, R={R}")
    J = default_truncation(r, R) if J is None else int(J)
    fam = harmonic_stack(x0, R, J)
    level = xi(r / R, J)

    def u(x1, x2):
        return np.minimum(1.0, fam(x1, x2) / level)

    return u


def make_annulus_condenser(x0, r: float, R: float, J: int | None, domain: Domain) -> CondenserFunction:
    """Annulus condenser function: 1 on ``B(x0, r)``, 0 off ``B(x0, R)``."""
    if not (0 < r < R):
        raise ConstructionError(f"need 0 < r < R, got r={r}, R={R}")
    x0 = (float(x0[0]), float(x0[1]))
    if math.hypot(*x0) + R > 0.25 * domain.side_length * (1 + 1e-12):
        raise ConstructionError("outer ball must lie within L/4 of the origin")
    J = default_truncation(r, R) if J is None else int(J)
    u = condenser_profile(x0, r, R, J)
    g = sample(u, domain, math.hypot(*x0) + R)
    return CondenserFunction(x0, float(r), float(R), J, g)


def psi_profile(ratios, params, domain: Domain, R: float | None = None, sampler=None,
                seed: int = 0, samples_per_level: int = 256):
    """Measured norms of the annulus condenser with ``R / r`` in ``ratios``.

    The outer radius is fixed (``L/4`` by default) and ``r = R / ratio``.
    Returns a list of ``(ratio, norm)``.
    """
    from .besov import besov_norm_difference
    from .grid import standard_sampler

    R = 0.25 * domain.side_length if R is None else R
    sm = standard_sampler(domain, samples_per_level, seed) if sampler is None else sampler
    out = []
    for ratio in ratios:
        ratio = float(ratio)
        if not (ratio > 1 and math.isfinite(ratio)):
            raise ConstructionError(f"ratio must be finite and > 1, got {ratio}")
        c = make_annulus_condenser((0.0, 0.0), R / ratio, R, None, domain)
        out.append((ratio, besov_norm_difference(c.function, params, sm)))
    return out


def unit_stack_norm(params, domain: Domain, R: float | None = None, sampler=None, J: int | None = None,
                    seed: int = 0, samples_per_level: int = 256) -> float:
    """Measured norm of the concentric harmonic stack, the constant in the Psi bound."""
    from .besov import besov_norm_difference
    from .grid import standard_sampler

    R = 0.25 * domain.side_length if R is None else R
    J = J if J is not None else max(1, int(math.log2(R / (2 * domain.spacing))) + 1)
    sm = standard_sampler(domain, samples_per_level, seed) if sampler is None else sampler
    g = harmonic_stack((0.0, 0.0), R, J).sample(domain)
    return besov_norm_difference(g, params, sm)


# --------------------------------------------------------------------------
# anisotropic boxes

def anisotropic_box_profile(A1: float, A2: float) -> Callable:
    def u(x1, x2):
        m = np.maximum(np.abs(x1) / A1, np.abs(x2) / A2)
        return np.clip(2.0 - m, 0.0, 1.0)

    return u


def make_anisotropic_box(A1: float, A2: float, domain: Domain):
    """``u = 1`` on ``[-A1,A1] x [-A2,A2]``, ``0`` off the doubled box, linear between.

    Returns ``(u, Z)`` with ``Z`` the all-true node mask.
    """
    if not (0 < A1 <= A2):
        raise ConstructionError(f"need 0 < A1 <= A2, got {A1}, {A2}")
    if 3.0 * A2 > 0.5 * domain.side_length * (1 + 1e-12):
        raise ConstructionError("3 A2 exceeds L/2; box does not fit the domain")
    rho = 2.0 * math.hypot(A1, A2)
    u = sample(anisotropic_box_profile(A1, A2), domain, rho)
    Z = np.ones((domain.resolution, domain.resolution), dtype=bool)
    return u, Z


# --------------------------------------------------------------------------
# a fixed corpus of compactly supported test functions

def _radial(g):
    def f(x1, x2):
        r = np.hypot(x1, x2)
        return np.where(r < 1.0, g(np.minimum(r, 1.0)), 0.0)
    return f


def _scaled(fn, rho):
    return lambda x1, x2: fn(np.asarray(x1) / rho, np.asarray(x2) / rho)


_UNIT_CORPUS = {
    "tent": lambda x1, x2: np.maximum(0.0, 1.0 - np.hypot(x1, x2)),
    "smooth_bump": _radial(lambda r: np.exp(1.0 - 1.0 / np.maximum(1e-300, 1.0 - r * r))),
    "cos2": _radial(lambda r: np.cos(0.5 * np.pi * r) ** 2),
    "quartic": _radial(lambda r: (1.0 - r * r) ** 2),
    "offset_tent": lambda x1, x2: np.maximum(0.0, 1.0 - np.hypot(x1 - 0.4, x2 + 0.2) / 0.5),
    "two_tents": lambda x1, x2: (np.maximum(0.0, 1.0 - np.hypot(x1 - 0.5, x2) / 0.4)
                                 - 0.5 * np.maximum(0.0, 1.0 - np.hypot(x1 + 0.5, x2) / 0.4)),
    "ellipse": lambda x1, x2: np.maximum(0.0, 1.0 - np.hypot(x1, 2.0 * x2)) ** 2,
    "ring": _radial(lambda r: np.maximum(0.0, 1.0 - np.abs(r - 0.6) / 0.3)),
    "odd": lambda x1, x2: x1 * np.maximum(0.0, 1.0 - x1 * x1 - x2 * x2) ** 2,
    "wave": _radial(lambda r: (1.0 - r * r) ** 2 * np.cos(3.0 * np.pi * r)),
}

CORPUS_NAMES = tuple(_UNIT_CORPUS)


def corpus(rho: float = 1.0):
    """Ten test functions supported in ``B(0, rho)``, as ``[(name, callable)]``."""
    return [(k, _scaled(f, rho)) for k, f in _UNIT_CORPUS.items()]


def corpus_function(name: str, domain: Domain, rho: float = 1.0, dilation: float = 1.0) -> GridFunction:
    """Sample ``f(dilation * x)`` for corpus member ``name`` scaled to radius ``rho``."""
    if name not in _UNIT_CORPUS:
        raise ConstructionError(f"unknown corpus function {name!r}")
    base = _scaled(_UNIT_CORPUS[name], rho)
    lam = float(dilation)
    return sample(lambda x1, x2: base(lam * x1, lam * x2), domain, rho / lam)
