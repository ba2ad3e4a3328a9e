"""Estimators of the homogeneous Besov seminorm on grid functions.

Three routes are provided:

* the difference form, a weighted integral of ``||f(.+h) - f||_p`` over
  displacements ``h``, discretized by a stratified :class:`OffsetSampler`;
* the ball-average form built from ``C_p(f)(t)``;
* an upper bound from an explicit (not optimal) fractional Hajlasz gradient.

``besov_norm_oracle`` sums every lattice offset and serves as the reference
for the sampler-based estimator.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .grid import Domain, GridFunction, OffsetSampler, GridError, lp_norm

SPHERE_AREA = {1: 2.0, 2: 2.0 * math.pi, 3: 4.0 * math.pi}


class BesovError(ValueError):
    """Invalid estimator request."""


@dataclass(frozen=True)
class BesovParams:
    """Smoothness ``s``, integrability ``p`` and fine index ``q`` in dimension ``n``.

    ``p`` defaults to ``n / s``, the scaling invariant exponent. Pass an
    explicit ``p`` with ``scaling_invariant=False`` for other pairs.
    ``q = inf`` is allowed; ``q < 1`` gives a quasi-norm and is accepted here
    but refused by the capacity solver.
    """

    s: float
    q: float
    p: float | None = None
    n: int = 2
    scaling_invariant: bool = True

    def __post_init__(self):
        if self.n != 2:
            raise BesovError("only n = 2 is implemented")
        if not (0.0 < self.s < 1.0):
            raise BesovError(f"s out of (0,1): {self.s}")
        if not (self.q > 0):
            raise BesovError(f"q must be positive, got {self.q}")
        p = self.n / self.s if self.p is None else float(self.p)
        if self.scaling_invariant and abs(p - self.n / self.s) > 1e-12 * p:
            raise BesovError(f"scaling invariant run needs p = n/s = {self.n / self.s}, got {p}")
        if not (p > self.n / (self.n + self.s)) or not math.isfinite(p):
            raise BesovError(f"p must be finite and exceed n/(n+s), got {p}")
        if p < 1:
            raise BesovError("p < 1 is outside the supported range")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", float(self.q))

    @property
    def q_inf(self) -> bool:
        return math.isinf(self.q)

    def with_q(self, q: float) -> "BesovParams":
        return BesovParams(self.s, q, self.p, self.n, self.scaling_invariant)


# --------------------------------------------------------------------------
# difference form

@dataclass
class LevelTerm:
    k: int
    t_outer: float
    t_inner: float
    offsets: int
    inner: float        # weighted mean of ||f(.+h) - f||_p over the level
    term: float         # contribution to norm^q (or to the sup when q = inf)


@dataclass
class NormTrace:
    """Per-level breakdown of a norm evaluation; serializes to JSON."""

    estimator: str
    s: float
    p: float
    q: float
    levels: list = field(default_factory=list)
    tail: float = 0.0
    tail_mode: str = "none"
    truncation_estimate: float = 0.0
    value: float = 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        if math.isinf(self.q):
            d["q"] = "inf"
        return d

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())
            fh.write("\n")


def _check_support(f: GridFunction, need: bool):
    if f.support_radius is None:
        if need:
            raise BesovError("support_radius is required for the tail correction")
        return
    if f.support_radius > 0.25 * f.domain.side_length * (1 + 1e-12):
        raise BesovError(
            f"support_radius {f.support_radius:.6g} exceeds L/4 = {0.25 * f.domain.side_length:.6g}; "
            "the tail correction precondition fails")


@dataclass(frozen=True)
class DifferenceData:
    """Powersums ``||f(.+h) - f||_p^p`` for every sampled offset, split by level."""

    sampler: OffsetSampler
    p: float
    total_power: float            # ||f||_p^p
    sums: tuple                   # per level, array of physical powersums
    lengths: tuple                # per level, |h| in length units
    support_radius: float | None


def difference_data(f: GridFunction, p: float, sampler: OffsetSampler) -> DifferenceData:
    if sampler.domain != f.domain:
        raise BesovError("sampler was built on a different domain")
    h2 = f.domain.spacing ** 2
    offs = sampler.all_offsets()
    allsums = h2 * kernels.powersums(f.values, offs, p) if len(offs) else np.zeros(0)
    sums, lens, at = [], [], 0
    for lv in sampler.levels:
        m = len(lv.offsets)
        sums.append(allsums[at:at + m])
        lens.append(lv.lengths(f.domain.spacing))
        at += m
    return DifferenceData(sampler, float(p), h2 * float(np.sum(np.abs(f.values) ** p)),
                          tuple(sums), tuple(lens), f.support_radius)


def aggregate_difference(data: DifferenceData, params: BesovParams, tail: bool = True,
                         trace: NormTrace | None = None) -> float:
    """Combine precomputed powersums into the norm for ``params.q``."""
    s, p, q, n = params.s, data.p, params.q, params.n
    sampler = data.sampler
    if trace is not None:
        trace.s, trace.p, trace.q = s, p, q
    if data.total_power == 0.0:
        if trace is not None:
            trace.value = 0.0
        return 0.0
    qinf = math.isinf(q)
    acc = 0.0
    outer_vals = None
    innermost = None
    for lv, S, r in zip(sampler.levels, data.sums, data.lengths):
        norms = S ** (1.0 / p)
        if qinf:
            term = float(np.max(r ** (-s) * norms)) if len(r) else 0.0
            acc = max(acc, term)
        else:
            term = float(np.sum(lv.weight * r ** (-q * s - n) * norms ** q))
            acc += term
        if outer_vals is None:
            outer_vals = norms
        innermost = (norms, r)
        if trace is not None:
            wmean = float(np.mean(norms)) if len(norms) else 0.0
            trace.levels.append(asdict(LevelTerm(lv.k, lv.outer, lv.inner, len(r), wmean, term)))

    tail_val, mode = 0.0, "none"
    if tail:
        if data.support_radius is None:
            raise BesovError("support_radius is required for the tail correction")
        R = sampler.outer_radius
        big = (2.0 * data.total_power) ** (1.0 / p)
        if R >= 2.0 * data.support_radius:
            # beyond twice the support radius the two copies never overlap
            mode = "exact"
            V = big
        else:
            mode = "outer-level"
            V = float(np.mean(outer_vals)) if outer_vals is not None and len(outer_vals) else big
        if qinf:
            tail_val = R ** (-s) * V
            acc = max(acc, tail_val)
        else:
            tail_val = SPHERE_AREA[n] * V ** q * R ** (-q * s) / (q * s)
            acc += tail_val

    trunc = 0.0
    if innermost is not None and len(innermost[1]):
        norms, r = innermost
        grad = float(np.mean(norms / r))
        hmin = sampler.inner_radius
        if qinf:
            trunc = grad * hmin ** (1 - s)
        else:
            trunc = SPHERE_AREA[n] * grad ** q * hmin ** (q * (1 - s)) / (q * (1 - s))

    value = acc if qinf else acc ** (1.0 / q)
    if trace is not None:
        trace.tail, trace.tail_mode, trace.truncation_estimate, trace.value = tail_val, mode, trunc, value
    return value


def besov_norm_difference(f: GridFunction, params: BesovParams, sampler: OffsetSampler,
                          tail: bool = True, trace: NormTrace | None = None) -> float:
    """Difference-form estimate of ``||f||`` for ``params``.

    Each sampled offset contributes ``weight * |h|^(-qs-n) * ||f(.+h)-f||_p^q``,
    with ``f`` extended by zero off the box. Displacements beyond the
    sampler's outer radius are added in closed form: when the outer radius is
    at least twice the support radius, ``||f(.+h)-f||_p^p = 2 ||f||_p^p``
    there exactly; otherwise the outermost level's mean is frozen. The
    contribution below the innermost level is estimated from the innermost
    difference quotients and reported in ``trace`` but not added.
    """
    _check_support(f, tail)
    data = difference_data(f, params.p, sampler)
    if trace is not None:
        trace.estimator = "difference"
    return aggregate_difference(data, params, tail=tail, trace=trace)


def besov_norm_oracle(f: GridFunction, params: BesovParams) -> float:
    """Sum over every lattice offset ``0 < |h_i| < N``; no tail, no sampling."""
    n_ = f.domain.resolution
    if n_ > 32:
        raise BesovError(f"oracle refuses N = {n_} > 32")
    h = f.domain.spacing
    table = h * h * kernels.oracle_sums(f.values, params.p)
    r = np.arange(-(n_ - 1), n_)
    a, b = np.meshgrid(r, r, indexing="ij")
    rad = np.hypot(a, b) * h
    mask = rad > 0
    norms = table[mask] ** (1.0 / params.p)
    if params.q_inf:
        return float(np.max(rad[mask] ** (-params.s) * norms))
    q = params.q
    tot = float(np.sum(h * h * rad[mask] ** (-q * params.s - params.n) * norms ** q))
    return tot ** (1.0 / q)


# --------------------------------------------------------------------------
# ball-average form

@dataclass
class CpProfile:
    """``C_p(f)(t)`` at dyadically decreasing ``t``."""

    scales: list
    params: BesovParams
    total_power: float = 0.0
    support_radius: float | None = None

    @property
    def t(self) -> np.ndarray:
        return np.array([a for a, _ in self.scales])

    @property
    def values(self) -> np.ndarray:
        return np.array([b for _, b in self.scales])

    def scaled(self, lam: float) -> "CpProfile":
        return CpProfile([(t, abs(lam) * v) for t, v in self.scales], self.params,
                         abs(lam) ** self.params.p * self.total_power, self.support_radius)


def cp_profile(f: GridFunction, params: BesovParams, scales, sampler: OffsetSampler | None = None,
               samples_per_level: int = 512, seed: int = 0) -> CpProfile:
    """``C_p(f)(t) = (sum_x avg_{|y-x|<t} |f(x)-f(y)|^p dx)^(1/p)`` on the lattice.

    ``scales`` must be ``t_0 > t_0/2 > t_0/4 > ...``. The ball sum over
    offsets is organized into the dyadic annuli of an offset sampler with
    outer radius ``t_0``; pass ``sampler`` to reuse one, otherwise a
    stratified sampler reaching below one cell is built from
    ``samples_per_level`` and ``seed``. Balls count every lattice offset
    ``|h| < t`` including ``h = 0``.
    """
    from .grid import build_offset_sampler
    import warnings

    scales = [float(t) for t in scales]
    if not scales:
        raise BesovError("empty scale list")
    dom = f.domain
    h = dom.spacing
    for t in scales:
        if not (t > h):
            raise BesovError(f"scale {t:.6g} is not above the grid spacing {h:.6g}")
        if t > 0.5 * dom.side_length * (1 + 1e-12):
            raise BesovError(f"scale {t:.6g} exceeds L/2")
    t0 = scales[0]
    ks = []
    for t in scales:
        k = math.log2(t0 / t)
        if abs(k - round(k)) > 1e-9 or (ks and round(k) <= ks[-1]):
            raise BesovError("scales must be t0 * 2^-k with strictly increasing k")
        ks.append(int(round(k)))
    if sampler is None:
        levels = int(math.ceil(math.log2(t0 / h))) + 1
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sampler = build_offset_sampler(dom, t0, levels, samples_per_level, seed)
    elif abs(sampler.outer_radius - t0) > 1e-12 * t0:
        raise BesovError("sampler outer radius must equal the largest scale")
    if sampler.inner_radius > h * (1 + 1e-12):
        raise BesovError("sampler must reach below one grid cell")

    data = difference_data(f, params.p, sampler)
    # level-wise estimates of sum_{h in annulus} S(h), in units of per-offset counts
    level_sum = {lv.k: lv.population * float(np.mean(S)) if len(S) else 0.0
                 for lv, S in zip(sampler.levels, data.sums)}
    level_pop = {lv.k: lv.population for lv in sampler.levels}
    out = []
    for t, k in zip(scales, ks):
        num = sum(v for kk, v in level_sum.items() if kk >= k)
        cnt = 1 + sum(v for kk, v in level_pop.items() if kk >= k)
        out.append((t, (num / cnt) ** (1.0 / params.p)))
    return CpProfile(out, params, data.total_power, f.support_radius)


def _gauss01(m: int = 96):
    x, w = np.polynomial.legendre.leggauss(m)
    return 0.5 * (x + 1.0), 0.5 * w


def besov_norm_cp(profile: CpProfile, tail: bool = True, trace: NormTrace | None = None) -> float:
    """``(sum_t [t^-s C_p(t)]^q ln 2)^(1/q)`` plus a closed-form large-``t`` tail.

    When the largest scale is at least twice the support radius, the tail
    uses ``C_p(t)^p = 2||f||_p^p - K / (pi t^2)`` with ``K`` matched at the
    largest scale, which holds exactly in the continuum there. Otherwise
    ``C_p`` is frozen at its largest-scale value.
    """
    if not profile.scales:
        raise BesovError("empty profile")
    if len(profile.scales) < 3:
        raise BesovError("profile needs at least 3 scales")
    prm = profile.params
    s, p, q = prm.s, prm.p, prm.q
    t, v = profile.t, profile.values
    if trace is not None:
        trace.estimator, trace.s, trace.p, trace.q = "cp", s, p, q
    if not np.any(v > 0):
        return 0.0
    w = t ** (-s) * v
    if prm.q_inf:
        acc = float(np.max(w))
    else:
        terms = w ** q * math.log(2.0)
        acc = float(np.sum(terms))
    if trace is not None:
        for i, (tt, vv) in enumerate(profile.scales):
            trace.levels.append({"k": i, "t_outer": tt, "t_inner": tt / 2, "offsets": 0,
                                 "inner": vv, "term": float(w[i] if prm.q_inf else terms[i])})
    tail_val, mode = 0.0, "none"
    if tail:
        tmax, cmax = float(t[0]), float(v[0])
        big = 2.0 * profile.total_power
        if profile.support_radius is not None and tmax >= 2 * profile.support_radius and big > 0:
            mode = "exact"
            if prm.q_inf:
                tail_val = tmax ** (-s) * max(cmax, 0.0)
            else:
                # u = (tmax/t)^{sq}; C_p^p = big - (big - cmax^p) u^{2/(sq)}
                x, wt = _gauss01()
                deficit = max(big - cmax ** p, 0.0)
                inner = np.maximum(big - deficit * x ** (2.0 / (s * q)), 0.0) ** (q / p)
                tail_val = tmax ** (-s * q) / (s * q) * float(np.sum(wt * inner))
        else:
            mode = "frozen"
            tail_val = tmax ** (-s) * cmax if prm.q_inf else cmax ** q * tmax ** (-s * q) / (s * q)
        acc = max(acc, tail_val) if prm.q_inf else acc + tail_val
    value = acc if prm.q_inf else acc ** (1.0 / q)
    if trace is not None:
        trace.tail, trace.tail_mode, trace.value = tail_val, mode, value
    return value


def dyadic_scales(domain: Domain, count: int | None = None, t0: float | None = None) -> list:
    """``t0, t0/2, ...`` from ``L/2`` (default) down to at least two cells."""
    t0 = 0.5 * domain.side_length if t0 is None else t0
    if count is None:
        count = max(3, int(math.floor(math.log2(t0 / (2 * domain.spacing)))) + 1)
    return [t0 * 2.0 ** (-k) for k in range(count)]


# --------------------------------------------------------------------------
# fractional Hajlasz gradients

@dataclass
class HajlaszGradient:
    """``g_k`` on the grid for each requested distance band ``[2^-(k+1), 2^-k)``."""

    levels: list          # list of (k, GridFunction)
    mode: str = "half"

    def feasibility_violations(self, f: GridFunction, s: float, tol: float = 1e-12) -> int:
        """Count node pairs breaking ``|f(x)-f(y)| <= |x-y|^s (g_k(x)+g_k(y))``."""
        dom = f.domain
        X1, X2 = dom.nodes()
        P = np.stack([X1.ravel(), X2.ravel()], 1)
        v = f.values.ravel()
        D = np.hypot(P[:, None, 0] - P[None, :, 0], P[:, None, 1] - P[None, :, 1])
        diff = np.abs(v[:, None] - v[None, :])
        bad = 0
        for k, g in self.levels:
            gv = g.values.ravel()
            band = (D >= 2.0 ** (-k - 1)) & (D < 2.0 ** (-k))
            rhs = D ** s * (gv[:, None] + gv[None, :])
            bad += int(np.count_nonzero(band & (diff > rhs * (1 + tol) + tol)))
        return bad


def hajlasz_levels(domain: Domain, outer: float | None = None) -> list:
    """Band indices ``k`` whose bands meet ``[spacing, outer)`` in length units."""
    outer = 0.5 * domain.side_length if outer is None else outer
    k_lo = int(math.ceil(-math.log2(outer) - 1e-12))
    # the band [2^-(k+1), 2^-k) holds a lattice offset once 2^-k > spacing
    k_hi = int(math.ceil(-math.log2(domain.spacing) - 1e-12)) - 1
    return list(range(k_lo, k_hi + 1))


def _box_annulus_sup(values, offsets, weights, mode):
    """``annulus_sup`` with partners restricted to box nodes."""
    n, m = values.shape
    g = np.zeros_like(values)
    absv = np.abs(values)
    for (a, b), w in zip(offsets, weights):
        xs = slice(max(0, -a), n - max(0, a))
        ys = slice(max(0, -b), m - max(0, b))
        v = values[xs, ys]
        o = values[max(0, a):n + min(0, a), max(0, b):m + min(0, b)]
        d = np.abs(o - v)
        if mode == 0:
            cand = 0.5 * w * d
        else:
            den = absv[xs, ys] + np.abs(o)
            with np.errstate(invalid="ignore", divide="ignore"):
                cand = np.where(den > 0.0, w * d * absv[xs, ys] / den, 0.0)
        np.maximum(g[xs, ys], cand, out=g[xs, ys])
    return g


def hajlasz_halfsup_gradient(f: GridFunction, params: BesovParams, levels, mode: str = "half",
                             exterior: str = "zero") -> HajlaszGradient:
    """Explicit feasible ``s``-gradient.

    ``mode="half"``: ``g_k(x) = 1/2 sup |f(x)-f(y)| / |x-y|^s`` over nodes
    ``y`` of the band. ``mode="split"`` instead charges each pair to its
    endpoints in proportion to ``|f|``,
    ``g_k(x) = sup |f(x)-f(y)| |f(x)| / ((|f(x)|+|f(y)|) |x-y|^s)``, which is
    also feasible and vanishes off the support of ``f``. Partners ``y`` off
    the box count as zeros of ``f``; with ``exterior="box"`` only box nodes
    are partners, so a function constant on the box gets ``g_k = 0``.
    """
    if mode not in ("half", "split"):
        raise BesovError(f"unknown gradient mode {mode!r}")
    if exterior not in ("zero", "box"):
        raise BesovError(f"unknown exterior {exterior!r}")
    dom = f.domain
    h = dom.spacing
    n = dom.resolution
    r = np.arange(-(n - 1), n)
    a, b = np.meshgrid(r, r, indexing="ij")
    a, b = a.ravel(), b.ravel()
    rad = np.hypot(a, b) * h
    out = []
    for k in levels:
        lo, hi = 2.0 ** (-k - 1), 2.0 ** (-k)
        sel = (rad >= lo) & (rad < hi)
        if not sel.any():
            out.append((int(k), GridFunction(dom, np.zeros((n, n)))))
            continue
        offs = np.stack([a[sel], b[sel]], 1).astype(np.int64)
        wts = rad[sel] ** (-params.s)
        md = 0 if mode == "half" else 1
        if exterior == "zero":
            g = kernels.annulus_sup(f.values, offs, wts, md)
        else:
            g = _box_annulus_sup(f.values, offs, wts, md)
        out.append((int(k), GridFunction(dom, g)))
    return HajlaszGradient(out, mode)


def hajlasz_upper_bound(grad: HajlaszGradient, params: BesovParams) -> float:
    """``(sum_k ||g_k||_p^q)^(1/q)``; the maximum when ``q = inf``."""
    if not grad.levels:
        raise BesovError("empty gradient")
    norms = np.array([lp_norm(g, params.p) for _, g in grad.levels])
    if params.q_inf:
        return float(norms.max())
    return float(np.sum(norms ** params.q) ** (1.0 / params.q))


# --------------------------------------------------------------------------
# functions made of pieces with disjoint supports

@dataclass(frozen=True, eq=False)
class Piece:
    """A function supported in the closed disk ``B(center, radius)``.

    With ``local=True`` the callable receives offsets ``x - center`` instead
    of absolute coordinates, which keeps tiny pieces far from the origin
    representable.
    """

    center: tuple
    radius: float
    func: object          # callable (x1, x2) -> array, zero off the disk
    local: bool = False

    def at_offset(self, d1, d2):
        if self.local:
            return np.asarray(self.func(d1, d2), dtype=float)
        return np.asarray(self.func(self.center[0] + d1, self.center[1] + d2), dtype=float)


@dataclass
class SeparatedData:
    """``I(h) = ||F(.+h) - F||_p^p`` on a polar grid of displacements."""

    p: float
    total_power: float
    radii: np.ndarray          # (nr,) increasing
    thetas: np.ndarray         # (na,)
    I: np.ndarray              # (nr, na)
    saturation: float          # I = 2 P for |h| >= saturation
    log_step: float


def _local_nodes(piece: Piece, cells: int):
    # offsets on the square of half-side 2r, ``cells`` nodes per radius per axis
    r = float(piece.radius)
    m = 4 * cells
    d = 4.0 * r / m
    ax = -2.0 * r + (np.arange(m) + 0.5) * d
    a, b = np.meshgrid(ax, ax, indexing="ij")
    return a.ravel(), b.ravel(), d * d


def separated_data(pieces, p: float, cells: int = 16, per_octave: int = 4, angles: int = 8,
                   rho_min: float | None = None) -> SeparatedData:
    """Tabulate ``I(h)`` for a sum of pieces with well separated supports.

    Piece ``i`` owns the square ``Q_i`` of half-side ``2 r_i`` around its
    center, on which only ``f_i`` is nonzero. Then ``I(h) = sum_i J_i(h)``
    with

        J_i(h) = P_i + int_{Q_i} (|F(x+h) - f_i(x)|^p - |F(x+h)|^p) dx,

    ``P_i = ||f_i||_p^p``. While ``|h| <= r_i`` and no other piece reaches
    ``Q_i + h``, the shifted copy stays inside ``Q_i`` and ``J_i`` is
    integrated directly as ``int_{Q_i} |f_i(x+h) - f_i(x)|^p``, which keeps
    tiny pieces accurate next to large ones. Each square carries a midpoint
    rule with ``cells`` nodes per radius; displacements are
    ``rho e^{i theta}`` with ``per_octave`` log-spaced radii per factor of
    two and ``angles`` offset angles.
    """
    pieces = list(pieces)
    if not pieces:
        raise BesovError("no pieces")
    C = np.array([[float(pc.center[0]), float(pc.center[1])] for pc in pieces])
    Rr = np.array([float(pc.radius) for pc in pieces])
    m = len(pieces)
    # square i (half-diagonal 2 sqrt2 r_i) must miss the disk of piece j
    reach = 2.0 * math.sqrt(2.0) * Rr[:, None] + Rr[None, :]
    for i in range(m):
        for j in range(i + 1, m):
            if math.hypot(*(C[i] - C[j])) < max(reach[i, j], reach[j, i]):
                raise BesovError(f"pieces {i} and {j} are too close for separated quadrature")
    nodes, own, wts = [], [], []
    for pc in pieces:
        x1, x2, w = _local_nodes(pc, cells)
        nodes.append((x1, x2))
        own.append(pc.at_offset(x1, x2))
        wts.append(w)
    Pi = np.array([w * float(np.sum(np.abs(v) ** p)) for v, w in zip(own, wts)])
    P = float(Pi.sum())
    sat = 2.0 * Rr.max() + 1e-300
    for i in range(m):
        for j in range(m):
            if i != j:
                sat = max(sat, math.hypot(*(C[i] - C[j])) + reach[i, j])
    lo = float(Rr.min()) / (4.0 * cells) if rho_min is None else float(rho_min)
    step = math.log(2.0) / per_octave
    nr = int(math.ceil(math.log(sat / lo) / step)) + 1
    radii = lo * np.exp(step * np.arange(nr))
    th = 2.0 * math.pi * (np.arange(angles) + 0.5) / angles + 0.1234
    dirs = np.stack([np.cos(th), np.sin(th)], 1)
    I = np.zeros((nr, angles))
    # below r_i / (4 cells) piece i alone is in its Lipschitz regime: J_i ~ rho^p
    first = [int(np.searchsorted(radii, Rr[i] / (4.0 * cells))) for i in range(m)]
    for a, rho in enumerate(radii):
        H = rho * dirs                                                  # (na, 2)
        for i in range(m):
            if a < first[i]:
                continue
            tgt = C[i][None, None, :] + H[:, None, :] - C[None, :, :]   # (na, m, 2)
            hit = np.hypot(tgt[..., 0], tgt[..., 1]) < reach[i][None, :]
            rows = np.flatnonzero(hit.any(1))
            quiet = np.setdiff1d(np.arange(angles), rows)
            I[a, quiet] += 2.0 * Pi[i]
            if rows.size == 0:
                continue
            x1 = nodes[i][0][None, :] + H[rows, 0][:, None]
            x2 = nodes[i][1][None, :] + H[rows, 1][:, None]
            Fh = np.zeros_like(x1)
            for j in np.flatnonzero(hit[rows].any(0)):
                sel = hit[rows, j]
                if j == i:
                    Fh[sel] += pieces[j].at_offset(x1[sel], x2[sel])
                else:
                    dc = C[i] - C[j]
                    Fh[sel] += pieces[j].at_offset(dc[0] + x1[sel], dc[1] + x2[sel])
            f0 = own[i][None, :]
            direct = np.abs(Fh - f0) ** p
            if rho <= Rr[i]:
                only_self = ~np.delete(hit[rows], i, axis=1).any(1)
            else:
                only_self = np.zeros(len(rows), dtype=bool)
            J = np.where(only_self,
                         wts[i] * np.sum(direct, axis=1),
                         Pi[i] + wts[i] * np.sum(direct - np.abs(Fh) ** p, axis=1))
            I[a, rows] += J
            if a == first[i] and a > 0:
                if rows.size != angles or not only_self.all():
                    raise BesovError("pieces interact below their own resolution scale")
                I[:a] += J[None, :] * (radii[:a, None] / rho) ** p
    np.maximum(I, 0.0, out=I)
    return SeparatedData(float(p), P, radii, th, I, sat, step)


def aggregate_separated(data: SeparatedData, params: BesovParams, trace: NormTrace | None = None) -> float:
    """Polar quadrature of ``int |h|^(-qs-2) I(h)^(q/p) dh`` with closed-form ends."""
    s, p, q = params.s, data.p, params.q
    if data.total_power == 0.0:
        return 0.0
    rho = data.radii
    if params.q_inf:
        val = float(np.max(rho[:, None] ** (-s) * data.I ** (1.0 / p)))
        val = max(val, data.saturation ** (-s) * (2 * data.total_power) ** (1.0 / p))
        if trace is not None:
            trace.estimator, trace.value = "separated", val
        return val
    theta_int = 2.0 * math.pi * np.mean(data.I ** (q / p), axis=1)       # int dtheta
    g = rho ** (-q * s) * theta_int                                      # integrand in log rho
    body = float(np.sum(0.5 * (g[1:] + g[:-1])) * data.log_step)
    # below the first radius I ~ A(theta) rho^p
    A = data.I[0] / rho[0] ** p
    small = 2.0 * math.pi * float(np.mean(A ** (q / p))) * rho[0] ** (q * (1 - s)) / (q * (1 - s))
    # past the last radius every copy is separated: I = 2P
    R = rho[-1]
    tail = 2.0 * math.pi * (2.0 * data.total_power) ** (q / p) * R ** (-q * s) / (q * s)
    val = (body + small + tail) ** (1.0 / q)
    if trace is not None:
        trace.estimator, trace.s, trace.p, trace.q = "separated", s, p, q
        trace.tail, trace.tail_mode, trace.truncation_estimate, trace.value = tail, "exact", small, val
    return val


def besov_norm_separated(pieces, params: BesovParams, cells: int = 16, per_octave: int = 4,
                         angles: int = 8, trace: NormTrace | None = None) -> float:
    """Difference-form norm of ``sum_i pieces[i].func`` with each piece on its own grid."""
    data = separated_data(pieces, params.p, cells, per_octave, angles)
    return aggregate_separated(data, params, trace)
