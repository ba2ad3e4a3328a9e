"""Uniform square grids, sampled functions, shifted differences, offset samplers."""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import kernels

MAGIC = b"BSVG"
FORMAT_VERSION = 1


class GridError(ValueError):
    """Invalid grid, sample, or offset request."""


@dataclass(frozen=True)
class Domain:
    """The box ``[-L/2, L/2]^2`` with ``N`` nodes per axis.

    Node ``(i, j)`` sits at ``(-L/2 + i h, -L/2 + j h)`` with ``h = L / N``,
    so for even ``N`` the origin is node ``(N/2, N/2)``. ``N`` must be at
    least 8; powers of two are the usual choice but are not required.
    """

    side_length: float
    resolution: int

    def __post_init__(self):
        if not (self.side_length > 0 and math.isfinite(self.side_length)):
            raise GridError(f"side_length must be positive, got {self.side_length}")
        if int(self.resolution) != self.resolution or self.resolution < 8:
            raise GridError(f"resolution must be an integer >= 8, got {self.resolution}")
        object.__setattr__(self, "resolution", int(self.resolution))

    @property
    def spacing(self) -> float:
        return self.side_length / self.resolution

    @property
    def n(self) -> int:
        return self.resolution

    def axis(self) -> np.ndarray:
        h = self.spacing
        return -0.5 * self.side_length + np.arange(self.resolution) * h

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinate arrays ``(X1, X2)`` indexed ``[i, j]``."""
        ax = self.axis()
        return np.meshgrid(ax, ax, indexing="ij")

    def radii(self) -> np.ndarray:
        x1, x2 = self.nodes()
        return np.hypot(x1, x2)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples of a real function on ``domain``; read-only after construction."""

    domain: Domain
    values: np.ndarray
    support_radius: float | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        n = self.domain.resolution
        if v.shape != (n, n):
            raise GridError(f"values shape {v.shape} does not match resolution {n}")
        bad = ~np.isfinite(v)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise GridError(f"non-finite value at node ({i}, {j})")
        if self.support_radius is not None:
            rho = float(self.support_radius)
            outside = self.domain.radii() > rho
            if np.any(v[outside] != 0.0):
                i, j = np.argwhere(outside & (v != 0.0))[0]
                raise GridError(f"node ({i}, {j}) is nonzero outside support_radius {rho}")
            object.__setattr__(self, "support_radius", rho)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def with_values(self, values, support_radius: float | None = None) -> "GridFunction":
        return GridFunction(self.domain, values, support_radius)

    def scaled(self, lam: float) -> "GridFunction":
        return GridFunction(self.domain, lam * self.values, self.support_radius)

    def __add__(self, other: "GridFunction") -> "GridFunction":
        if other.domain != self.domain:
            raise GridError("cannot add grid functions on different domains")
        rho = None
        if self.support_radius is not None and other.support_radius is not None:
            rho = max(self.support_radius, other.support_radius)
        return GridFunction(self.domain, self.values + other.values, rho)

    def powersum(self, p: float) -> float:
        return float(np.sum(np.abs(self.values) ** p))


def sample(f: Callable, domain: Domain, support_radius: float | None = None) -> GridFunction:
    """Evaluate ``f`` at every node.

    ``f`` receives the coordinate arrays ``(x1, x2)`` and must broadcast; a
    callable that only handles scalars is retried node by node.
    """
    x1, x2 = domain.nodes()
    try:
        vals = np.asarray(f(x1, x2), dtype=np.float64)
        if vals.shape != x1.shape:
            vals = np.broadcast_to(vals, x1.shape).copy()
    except (TypeError, ValueError):
        vals = np.vectorize(lambda a, b: float(f(a, b)))(x1, x2)
    bad = ~np.isfinite(vals)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise GridError(f"non-finite sample at node ({i}, {j}) = ({x1[i, j]:.6g}, {x2[i, j]:.6g})")
    return GridFunction(domain, vals, support_radius)


def _check_offset(domain: Domain, offset) -> tuple[int, int]:
    a, b = (int(offset[0]), int(offset[1]))
    n = domain.resolution
    if abs(a) >= n or abs(b) >= n:
        raise GridError(f"offset {offset} out of range for N={n}")
    return a, b


def shift_difference(f: GridFunction, offset) -> GridFunction:
    """``f(x + h) - f(x)`` on the box nodes, with ``f`` taken as 0 off the box."""
    a, b = _check_offset(f.domain, offset)
    n = f.domain.resolution
    v = f.values
    shifted = np.zeros_like(v)
    src_i = slice(max(0, a), min(n, n + a))
    dst_i = slice(max(0, -a), min(n, n - a))
    src_j = slice(max(0, b), min(n, n + b))
    dst_j = slice(max(0, -b), min(n, n - b))
    shifted[dst_i, dst_j] = v[src_i, src_j]
    return GridFunction(f.domain, shifted - v)


def lp_norm(f: GridFunction, p: float) -> float:
    """Riemann-sum ``L^p`` norm, ``(h^2 sum |v|^p)^(1/p)``."""
    if not (p >= 1 and math.isfinite(p)):
        raise GridError(f"lp_norm needs finite p >= 1, got {p}")
    h2 = f.domain.spacing ** 2
    return float((h2 * np.sum(np.abs(f.values) ** p)) ** (1.0 / p))


@dataclass(frozen=True)
class OffsetLevel:
    """One dyadic annulus ``[2^-(k+1) R, 2^-k R)`` of displacement lengths."""

    k: int
    offsets: np.ndarray          # (m, 2) int64 lattice offsets
    weight: float                # area represented by each sampled offset
    population: int              # lattice offsets in the annulus
    inner: float
    outer: float

    @property
    def exhaustive(self) -> bool:
        return len(self.offsets) == self.population

    def lengths(self, spacing: float) -> np.ndarray:
        return np.hypot(self.offsets[:, 0], self.offsets[:, 1]) * spacing


@dataclass(frozen=True, eq=False)
class OffsetSampler:
    """Stratified lattice offsets per dyadic annulus, reproducible from ``seed``."""

    domain: Domain
    outer_radius: float
    levels: tuple[OffsetLevel, ...]
    samples_per_level: int
    seed: int
    dropped: tuple[int, ...] = field(default=())

    @property
    def inner_radius(self) -> float:
        return self.levels[-1].inner if self.levels else self.outer_radius

    def all_offsets(self) -> np.ndarray:
        return np.concatenate([lv.offsets for lv in self.levels]) if self.levels else np.zeros((0, 2), np.int64)

    def all_weights(self) -> np.ndarray:
        return np.concatenate([np.full(len(lv.offsets), lv.weight) for lv in self.levels])

    def total_population(self) -> int:
        return sum(lv.population for lv in self.levels)

    def same_as(self, other: "OffsetSampler") -> bool:
        if (self.domain != other.domain or self.outer_radius != other.outer_radius
                or self.seed != other.seed or len(self.levels) != len(other.levels)):
            return False
        return all(a.k == b.k and a.weight == b.weight and np.array_equal(a.offsets, b.offsets)
                   for a, b in zip(self.levels, other.levels))


def _lattice_offsets(n: int) -> tuple[np.ndarray, np.ndarray]:
    r = np.arange(-(n - 1), n)
    a, b = np.meshgrid(r, r, indexing="ij")
    a, b = a.ravel(), b.ravel()
    keep = (a != 0) | (b != 0)
    return np.stack([a[keep], b[keep]], axis=1).astype(np.int64), np.hypot(a[keep], b[keep])


def build_offset_sampler(domain: Domain, outer_radius: float, levels: int,
                         samples_per_level: int, seed: int) -> OffsetSampler:
    """Dyadic stratification of lattice offsets with ``|h| < outer_radius``.

    Level ``k`` (0 = outermost) holds offsets with
    ``2^-(k+1) R <= |h| < 2^-k R``. A level with at most
    ``samples_per_level`` offsets is kept whole; larger ones are subsampled
    uniformly without replacement from a generator seeded with
    ``(seed, k)``. Each kept offset carries ``weight = spacing^2 *
    population / kept`` so the weights still add up to the annulus area on
    the lattice.
    """
    if samples_per_level < 4:
        raise GridError("samples_per_level must be >= 4")
    if levels < 1:
        raise GridError("need at least one level")
    diag = math.sqrt(2.0) * domain.side_length
    if not (0 < outer_radius <= diag):
        raise GridError(f"outer_radius must lie in (0, sqrt(2) L] = (0, {diag:.6g}]")
    h = domain.spacing
    offs, lens = _lattice_offsets(domain.resolution)
    lens = lens * h
    out, dropped = [], []
    for k in range(levels):
        hi = outer_radius * 2.0 ** (-k)
        lo = 0.5 * hi
        sel = np.flatnonzero((lens >= lo) & (lens < hi))
        pop = int(sel.size)
        if pop == 0:
            dropped.append(k)
            continue
        if pop > samples_per_level:
            rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, k])
            sel = np.sort(rng.choice(sel, size=samples_per_level, replace=False))
        chosen = offs[sel]
        chosen.flags.writeable = False
        out.append(OffsetLevel(k=k, offsets=chosen, weight=h * h * pop / len(sel),
                               population=pop, inner=lo, outer=hi))
    if dropped:
        warnings.warn(f"offset sampler: empty annuli dropped at levels {dropped}", stacklevel=2)
    return OffsetSampler(domain, float(outer_radius), tuple(out), int(samples_per_level),
                         int(seed), tuple(dropped))


def full_sampler(domain: Domain) -> OffsetSampler:
    """Every lattice offset with ``|h_i| < N``, no subsampling."""
    n = domain.resolution
    outer = math.sqrt(2.0) * domain.side_length
    levels = int(math.ceil(math.log2(math.sqrt(2.0) * n))) + 1
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return build_offset_sampler(domain, outer, levels, samples_per_level=(2 * n) ** 2, seed=0)


def standard_sampler(domain: Domain, samples_per_level: int = 256, seed: int = 0,
                     outer_radius: float | None = None, min_radius: float | None = None) -> OffsetSampler:
    """Sampler used by the experiments: outer radius ``L/2`` down to about one cell."""
    outer = 0.5 * domain.side_length if outer_radius is None else outer_radius
    floor = domain.spacing if min_radius is None else min_radius
    levels = max(1, int(math.ceil(math.log2(outer / floor))))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return build_offset_sampler(domain, outer, levels, samples_per_level, seed)


def powersums(f: GridFunction, offsets: np.ndarray, p: float) -> np.ndarray:
    """``||f(.+h) - f||_p^p`` over Z^2 for every offset row (zero outside the box)."""
    return f.domain.spacing ** 2 * kernels.powersums(f.values, offsets, p)


# --------------------------------------------------------------------------
# binary container

_HEADER = struct.Struct("<4sIIdd")


def save_grid_function(f: GridFunction, path) -> None:
    rho = math.nan if f.support_radius is None else f.support_radius
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, f.domain.resolution,
                              f.domain.side_length, rho))
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes(order="C"))


def load_grid_function(path) -> GridFunction:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise GridError("truncated header")
    magic, version, n, length, rho = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise GridError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise GridError(f"unsupported version {version}")
    body = data[_HEADER.size:]
    if len(body) != 8 * n * n:
        raise GridError(f"payload has {len(body)} bytes, expected {8 * n * n}")
    vals = np.frombuffer(body, dtype="<f8").reshape(n, n)
    return GridFunction(Domain(length, n), vals, None if math.isnan(rho) else rho)
