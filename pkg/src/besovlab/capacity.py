"""Condenser capacities by projected descent, lower and upper capacity checks, qc diagnostics."""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .besov import BesovParams, besov_norm_difference, SPHERE_AREA
from .constructions import make_annulus_condenser
from .grid import Domain, GridFunction, OffsetSampler, standard_sampler


class CapacityError(ValueError):
    """Invalid condenser or solver request."""


class NumericalFailure(RuntimeError):
    """Non-finite objective or unusable solver state."""


def _components8(mask: np.ndarray) -> int:
    """Number of 8-connected components of a boolean mask."""
    seen = np.zeros_like(mask, dtype=bool)
    n1, n2 = mask.shape
    count = 0
    for start in zip(*np.nonzero(mask)):
        if seen[start]:
            continue
        count += 1
        stack = [start]
        seen[start] = True
        while stack:
            i, j = stack.pop()
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    a, b = i + di, j + dj
                    if 0 <= a < n1 and 0 <= b < n2 and mask[a, b] and not seen[a, b]:
                        seen[a, b] = True
                        stack.append((a, b))
    return count


def mask_diameter(domain: Domain, mask: np.ndarray) -> float:
    """Euclidean diameter of the node set of ``mask``."""
    x1, x2 = domain.nodes()
    P = np.stack([x1[mask], x2[mask]], 1)
    if len(P) < 2:
        return 0.0
    # the diameter is attained on the convex hull; masks here are small
    d = np.hypot(P[:, None, 0] - P[None, :, 0], P[:, None, 1] - P[None, :, 1])
    return float(d.max())


@dataclass(frozen=True, eq=False)
class CondenserSpec:
    """Node masks ``E`` (``u <= 0``) and ``F`` (``u >= 1``) inside an enclosing ball."""

    domain: Domain
    E_mask: np.ndarray
    F_mask: np.ndarray
    center: tuple = (0.0, 0.0)
    radius: float | None = None
    connected: bool = False

    def __post_init__(self):
        n = self.domain.resolution
        E = np.asarray(self.E_mask, dtype=bool)
        F = np.asarray(self.F_mask, dtype=bool)
        if E.shape != (n, n) or F.shape != (n, n):
            raise CapacityError("mask shape does not match the domain")
        if not E.any() or not F.any():
            raise CapacityError("E and F must be nonempty")
        if (E & F).any():
            raise CapacityError("E and F masks are not disjoint")
        if self.connected:
            for name, m in (("E", E), ("F", F)):
                if _components8(m) != 1:
                    raise CapacityError(f"{name} is not 8-connected")
        E = E.copy()
        F = F.copy()
        E.flags.writeable = False
        F.flags.writeable = False
        object.__setattr__(self, "E_mask", E)
        object.__setattr__(self, "F_mask", F)

    @property
    def lam(self) -> float:
        if self.radius is None:
            return float("nan")
        dE = mask_diameter(self.domain, self.E_mask)
        dF = mask_diameter(self.domain, self.F_mask)
        return min(dE, dF) / self.radius

    def swapped(self) -> "CondenserSpec":
        return CondenserSpec(self.domain, self.F_mask, self.E_mask, self.center, self.radius, self.connected)


def nearest_node(domain: Domain, pt) -> np.ndarray:
    """Coordinates of the node closest to ``pt``."""
    ax = domain.axis()
    return np.array([ax[np.argmin(np.abs(ax - pt[0]))], ax[np.argmin(np.abs(ax - pt[1]))]])


def annulus_spec(domain: Domain, r: float, R: float, x0=None) -> CondenserSpec:
    """``F = B(x0, r)``, ``E`` = nodes with ``|x - x0| >= R``.

    ``x0`` defaults to the node nearest the origin, so ``F`` keeps at least
    one node even when ``r`` is below the grid spacing.
    """
    if x0 is None:
        x0 = tuple(float(t) for t in nearest_node(domain, (0.0, 0.0)))
    x1, x2 = domain.nodes()
    d = np.hypot(x1 - x0[0], x2 - x0[1])
    return CondenserSpec(domain, d >= R * (1 - 1e-12), d <= r * (1 + 1e-12), tuple(x0), R)


def segment_mask(domain: Domain, a, b) -> np.ndarray:
    """One-node-wide 8-connected lattice path between the nodes nearest ``a`` and ``b``."""
    h = domain.spacing
    off = 0.5 * domain.side_length

    def idx(pt):
        return (int(np.clip(round((pt[0] + off) / h), 0, domain.resolution - 1)),
                int(np.clip(round((pt[1] + off) / h), 0, domain.resolution - 1)))

    (i0, j0), (i1, j1) = idx(a), idx(b)
    m = max(abs(i1 - i0), abs(j1 - j0))
    mask = np.zeros((domain.resolution,) * 2, dtype=bool)
    for t in range(m + 1):
        f = t / m if m else 0.0
        mask[int(round(i0 + f * (i1 - i0))), int(round(j0 + f * (j1 - j0)))] = True
    return mask


def parallel_segments_spec(domain: Domain, length: float, gap: float, R: float | None = None) -> CondenserSpec:
    """Horizontal node paths ``E`` (below) and ``F`` (above), ``gap`` apart, near the origin.

    Length and gap are rounded to whole multiples of the spacing so the
    measured diameters match the request.
    """
    R = 0.25 * domain.side_length if R is None else R
    h, n = domain.spacing, domain.resolution
    m = max(1, int(round(length / h)))
    g = max(1, int(round(gap / h)))
    # the origin is node n // 2 on each axis
    i0 = n // 2 - m // 2
    j0 = n // 2 - g // 2
    if i0 < 1 or j0 < 1 or i0 + m >= n - 1 or j0 + g >= n - 1:
        raise CapacityError("segments do not fit inside the box interior")
    E = np.zeros((n, n), dtype=bool)
    F = np.zeros((n, n), dtype=bool)
    E[i0:i0 + m + 1, j0] = True
    F[i0:i0 + m + 1, j0 + g] = True
    return CondenserSpec(domain, E, F, (0.0, 0.0), R, connected=True)


@dataclass(frozen=True)
class SolverConfig:
    """Projected descent settings.

    ``step_rule``: ``"diminishing"`` uses ``step0 / sqrt(k)`` along the
    sup-normalized gradient; ``"bb"`` uses Barzilai-Borwein steps. Both reject
    trial points that raise the objective, so the accepted trace never
    increases. ``tolerance`` is the relative objective decrease over
    ``window`` accepted steps below which the run counts as converged.
    """

    max_iters: int = 400
    step_rule: str = "diminishing"
    step0: float = 0.25
    tolerance: float = 1e-5
    window: int = 10
    epsilon: float = 0.0
    exterior: str = "zero"         # "zero": u = 0 off the support disk; "box": box-restricted objective

    def __post_init__(self):
        if not self.tolerance > 0:
            raise CapacityError("tolerance must be positive")
        if self.epsilon < 0:
            raise CapacityError("epsilon must be non-negative")
        if self.step_rule not in ("diminishing", "bb"):
            raise CapacityError(f"unknown step rule {self.step_rule!r}")
        if self.exterior not in ("zero", "box"):
            raise CapacityError(f"unknown exterior mode {self.exterior!r}")
        if self.max_iters < 1:
            raise CapacityError("max_iters must be >= 1")


@dataclass
class SolverResult:
    u: GridFunction
    value: float                   # norm (q-th root of the objective)
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)   # (iter, objective, step, feasibility_violations)

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["iter", "objective", "step", "feasibility_violations"])
        for it, obj, st, viol in self.trace:
            w.writerow([it, "%.17g" % obj, "%.17g" % st, viol])
        return buf.getvalue()


class _Objective:
    """``norm^q`` of a grid function and its gradient, for one sampler."""

    def __init__(self, domain: Domain, params: BesovParams, sampler: OffsetSampler, exterior: str,
                 epsilon: float):
        if params.q_inf:
            raise CapacityError("the solver needs finite q")
        self.domain = domain
        self.p, self.q, self.s, self.n = params.p, params.q, params.s, params.n
        self.h2 = domain.spacing ** 2
        self.offsets = sampler.all_offsets()
        lens = np.hypot(self.offsets[:, 0], self.offsets[:, 1]) * domain.spacing
        self.c = sampler.all_weights() * lens ** (-self.q * self.s - self.n)
        self.exterior = exterior
        self.eps = epsilon
        self.R = sampler.outer_radius
        self.tail_const = SPHERE_AREA[self.n] * self.R ** (-self.q * self.s) / (self.q * self.s)

    def _sums(self, u):
        if self.exterior == "box":
            return self.h2 * _box_powersums(u, self.offsets, self.p, self.eps)
        if self.eps > 0:
            return self.h2 * _box_powersums(u, self.offsets, self.p, self.eps, zero_ext=True)
        return self.h2 * kernels.powersums(u, self.offsets, self.p)

    def value(self, u) -> float:
        S = self._sums(u)
        val = float(np.sum(self.c * S ** (self.q / self.p)))
        if self.exterior == "zero":
            P = self.h2 * float(np.sum(np.abs(u) ** self.p))
            val += self.tail_const * (2.0 * P) ** (self.q / self.p)
        return val

    def value_grad(self, u):
        S = self._sums(u)
        r = self.q / self.p
        val = float(np.sum(self.c * S ** r))
        with np.errstate(divide="ignore", invalid="ignore"):
            coef = np.where(S > 0, self.c * r * S ** (r - 1.0), 0.0) * self.h2
        n = self.domain.resolution
        if self.exterior == "box" or self.eps > 0:
            g = _box_powersum_grad(u, self.offsets, coef, self.p, self.eps, zero_ext=self.exterior == "zero")
        else:
            g = kernels.powersum_grad(u, self.offsets, coef, self.p, (0, n, 0, n))
        if self.exterior == "zero":
            P = self.h2 * float(np.sum(np.abs(u) ** self.p))
            if P > 0:
                val += self.tail_const * (2.0 * P) ** r
                g = g + (self.tail_const * r * (2.0 * P) ** (r - 1.0) * 2.0 * self.h2 * self.p
                         * np.abs(u) ** (self.p - 1.0) * np.sign(u))
        return val, g


def _shift_pair(u, a, b, zero_ext):
    """Arrays ``(u(x), u(x+h))`` over the x-range where both are used."""
    n = u.shape[0]
    if zero_ext:
        pad = np.zeros((3 * n, 3 * n))
        pad[n:2 * n, n:2 * n] = u
        i0, i1 = max(0, -a), min(3 * n, 3 * n - a)
        j0, j1 = max(0, -b), min(3 * n, 3 * n - b)
        return pad[i0:i1, j0:j1], pad[i0 + a:i1 + a, j0 + b:j1 + b], (pad, i0, i1, j0, j1)
    i0, i1 = max(0, -a), min(n, n - a)
    j0, j1 = max(0, -b), min(n, n - b)
    return u[i0:i1, j0:j1], u[i0 + a:i1 + a, j0 + b:j1 + b], (None, i0, i1, j0, j1)


def _smooth_pow(d, p, eps):
    return (d * d + eps * eps) ** (0.5 * p) - eps ** p if eps > 0 else np.abs(d) ** p


def _smooth_psi(d, p, eps):
    return p * d * (d * d + eps * eps) ** (0.5 * p - 1.0) if eps > 0 else p * np.abs(d) ** (p - 1.0) * np.sign(d)


def _box_powersums(u, offsets, p, eps, zero_ext=False):
    out = np.empty(len(offsets))
    for k, (a, b) in enumerate(offsets):
        x, y, _ = _shift_pair(u, int(a), int(b), zero_ext)
        out[k] = np.sum(_smooth_pow(y - x, p, eps))
    return out


def _box_powersum_grad(u, offsets, coefs, p, eps, zero_ext=False):
    n = u.shape[0]
    g = np.zeros((3 * n, 3 * n)) if zero_ext else np.zeros((n, n))
    for (a, b), c in zip(offsets, coefs):
        if c == 0:
            continue
        a, b = int(a), int(b)
        x, y, (_, i0, i1, j0, j1) = _shift_pair(u, a, b, zero_ext)
        ps = c * _smooth_psi(y - x, p, eps)
        g[i0 + a:i1 + a, j0 + b:j1 + b] += ps
        g[i0:i1, j0:j1] -= ps
    return g[n:2 * n, n:2 * n] if zero_ext else g


class _Projector:
    def __init__(self, spec: CondenserSpec, exterior: str):
        dom = spec.domain
        self.E = spec.E_mask.copy()
        self.F = spec.F_mask
        if exterior == "zero":
            # the tail correction needs u = 0 off the disk of radius L/4
            outside = dom.radii() > 0.25 * dom.side_length
            self.E |= outside & ~self.F
            if (outside & self.F).any():
                raise CapacityError("F reaches beyond the support disk of radius L/4")
        self.free = ~(self.E | self.F)

    def __call__(self, u):
        v = np.clip(u, 0.0, 1.0)
        v[self.E] = 0.0
        v[self.F] = 1.0
        return v

    def violations(self, u) -> int:
        return int(np.count_nonzero(u[self.E] > 0) + np.count_nonzero(u[self.F] < 1))


def distance_ratio_start(spec: CondenserSpec, exterior: str = "zero") -> np.ndarray:
    """``d(x, E) / (d(x, E) + d(x, F))`` on the nodes (brute force over mask nodes)."""
    dom = spec.domain
    x1, x2 = dom.nodes()
    proj = _Projector(spec, exterior)

    def dist(mask):
        P = np.stack([x1[mask], x2[mask]], 1)
        X = np.stack([x1.ravel(), x2.ravel()], 1)
        best = np.full(len(X), np.inf)
        for chunk in np.array_split(P, max(1, len(P) // 256 + 1)):
            d = np.hypot(X[:, None, 0] - chunk[None, :, 0], X[:, None, 1] - chunk[None, :, 1])
            best = np.minimum(best, d.min(1))
        return best.reshape(x1.shape)

    dE, dF = dist(proj.E), dist(spec.F_mask)
    return proj(dE / (dE + dF))


def solve_condenser(spec: CondenserSpec, params: BesovParams, sampler: OffsetSampler,
                    cfg: SolverConfig = SolverConfig(), warm_start: GridFunction | None = None) -> SolverResult:
    """Minimize ``||u||^q`` over ``u <= 0`` on ``E``, ``u >= 1`` on ``F``.

    Projection clips to the constraints and to ``[0, 1]`` (truncation never
    raises the norm for these boundary data). With ``exterior="zero"`` the
    nodes beyond radius ``L/4`` are held at 0 so the closed-form tail of the
    difference estimator applies; ``exterior="box"`` instead measures
    differences only between box nodes, an objective invariant under
    ``u -> 1 - u``. The returned value is the norm, the ``q``-th root of the
    objective.
    """
    if params.p < 1 or params.q < 1:
        raise CapacityError("convex solver requires p >= 1 and q >= 1")
    if sampler.domain != spec.domain:
        raise CapacityError("sampler and condenser live on different domains")
    obj = _Objective(spec.domain, params, sampler, cfg.exterior, cfg.epsilon)
    proj = _Projector(spec, cfg.exterior)
    if warm_start is not None:
        if warm_start.domain != spec.domain:
            raise CapacityError("warm start lives on a different domain")
        u = proj(warm_start.values.copy())
    else:
        u = distance_ratio_start(spec, cfg.exterior)
    f, g = obj.value_grad(u)
    if not math.isfinite(f):
        raise NumericalFailure("non-finite objective at the starting point")
    trace = [(0, f, 0.0, proj.violations(u))]
    hist = [f]
    step = cfg.step0
    u_prev = g_prev = None
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        gf = np.where(proj.free, g, 0.0)
        # keep only directions that can move: at bounds the clip would cancel them
        gf = np.where((u <= 0.0) & (gf > 0), 0.0, gf)
        gf = np.where((u >= 1.0) & (gf < 0), 0.0, gf)
        gmax = float(np.max(np.abs(gf)))
        if gmax == 0.0:
            converged = True
            break
        if cfg.step_rule == "bb" and u_prev is not None:
            du = u - u_prev
            dg = g - g_prev
            den = float(np.sum(du * dg))
            tau = float(np.sum(du * du)) / den if den > 0 else cfg.step0 / gmax
            tau = min(tau, 1.0 / gmax)
        else:
            tau = (cfg.step0 / math.sqrt(it)) / gmax if cfg.step_rule == "diminishing" else step / gmax
        accepted = False
        for _ in range(30):
            trial = proj(u - tau * gf)
            ft = obj.value(trial)
            if math.isfinite(ft) and ft <= f:
                accepted = True
                break
            tau *= 0.5
        if not accepted:
            converged = True
            break
        u_prev, g_prev = u, g
        u = trial
        f, g = obj.value_grad(u)
        if not math.isfinite(f):
            raise NumericalFailure(f"non-finite objective at iteration {it}")
        trace.append((it, f, tau * gmax, proj.violations(u)))
        hist.append(f)
        if len(hist) > cfg.window and hist[-cfg.window - 1] - f <= cfg.tolerance * abs(f):
            converged = True
            break
    rho = 0.25 * spec.domain.side_length if cfg.exterior == "zero" else None
    ug = GridFunction(spec.domain, u, rho)
    if not converged:
        warnings.warn("condenser solver hit max_iters before reaching tolerance", stacklevel=2)
    return SolverResult(ug, f ** (1.0 / params.q), it, converged, trace)


def norm_value(u: GridFunction, params: BesovParams, sampler: OffsetSampler, exterior: str = "zero") -> float:
    """The solver's objective for ``u``, as a norm."""
    obj = _Objective(u.domain, params, sampler, exterior, 0.0)
    return obj.value(u.values) ** (1.0 / params.q)


# --------------------------------------------------------------------------
# lower and upper capacity checks

@dataclass
class LowerBoundReport:
    lams: list
    values: list
    converged: list
    slope: float
    floor: float
    excluded: list

    def to_dict(self):
        return self.__dict__.copy()


def fit_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def verify_capacity_lower(specs, params: BesovParams, sampler: OffsetSampler,
                          cfg: SolverConfig = SolverConfig(), results=None) -> LowerBoundReport:
    """Solve each condenser of a ``lambda`` sweep and fit ``log value`` against ``log lambda``.

    Unconverged members are excluded from the fit and listed.
    """
    specs = list(specs)
    if results is None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            results = [solve_condenser(sp, params, sampler, cfg) for sp in specs]
    lams, vals, conv, excluded = [], [], [], []
    for sp, res in zip(specs, results):
        conv.append(bool(res.converged))
        if res.converged:
            lams.append(sp.lam)
            vals.append(res.value)
        else:
            excluded.append(sp.lam)
    slope = fit_slope(lams, vals) if len(lams) >= 2 else float("nan")
    return LowerBoundReport(lams, vals, conv, slope, min(vals) if vals else float("nan"), excluded)


@dataclass
class UpperBoundRow:
    ratio: float
    solver: float
    construction: float
    converged: bool


def verify_capacity_upper(ratios, params: BesovParams, domain: Domain, sampler: OffsetSampler | None = None,
                          cfg: SolverConfig = SolverConfig(), seed: int = 0) -> list:
    """Solver value vs the explicit annulus construction at each ``R / r``.

    The construction is feasible, so it warm-starts the solver and bounds
    the solver value from above.
    """
    sm = standard_sampler(domain, 256, seed) if sampler is None else sampler
    x0 = tuple(float(t) for t in nearest_node(domain, (0.0, 0.0)))
    R = 0.25 * domain.side_length - math.hypot(*x0)
    rows = []
    for ratio in ratios:
        ratio = float(ratio)
        if not ratio > 1:
            raise CapacityError("ratios must exceed 1")
        r = R / ratio
        spec = annulus_spec(domain, r, R, x0)
        c = make_annulus_condenser(x0, r, R, None, domain)
        cons = norm_value(c.function, params, sm, cfg.exterior)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = solve_condenser(spec, params, sm, cfg, warm_start=c.function)
        rows.append(UpperBoundRow(ratio, res.value, cons, bool(res.converged)))
    return rows


# --------------------------------------------------------------------------
# quasiconformality diagnostic

BILIP_MAX_BINS = 3
BILIP_MAX_H = 8.0
UNBOUNDED_FACTOR = 2.0


def qc_check(phi, params: BesovParams, probes: int = 2000, seed: int = 0,
             region: Domain | None = None, hole: float = 0.0, pushforward_N: int = 64) -> dict:
    """Heuristic verdict on how far ``phi`` is from bi-Lipschitz.

    * ``H_hat``: quasisymmetry scan with ``probes`` triples on ``region``;
      ``H_hat_4x``: the same with four times the probes on the region of
      doubled side.
    * Jacobian census on ``region``.
    * Pushforward check at the worst triple: the annulus condenser around
      ``phi(x)`` with radii ``|phi x - phi z| < |phi x - phi y|`` is pulled
      back through ``phi`` and the norm ratio ``||u o phi|| / ||u||`` is
      recorded.

    Verdict: ``distortion-unbounded`` when ``H_hat_4x >= 2 H_hat``;
    otherwise ``bi-Lipschitz-like`` when at most 3 census bins are occupied
    and ``H_hat <= 8``; otherwise ``QC-not-biLipschitz-like``. These
    thresholds are heuristics.
    """
    from .homeo import _scan, jacobian_level_census

    region = Domain(4.0, 128) if region is None else region
    big = Domain(2.0 * region.side_length, 2 * region.resolution)
    s1 = _scan(phi, probes, seed, region, hole)
    s2 = _scan(phi, 4 * probes, seed + 1, big, hole)
    census = jacobian_level_census(phi, region)
    push = _pushforward(phi, params, s1.worst, pushforward_N, seed)
    if s2.H_hat >= UNBOUNDED_FACTOR * s1.H_hat:
        verdict = "distortion-unbounded"
    elif census.nonempty <= BILIP_MAX_BINS and s1.H_hat <= BILIP_MAX_H:
        verdict = "bi-Lipschitz-like"
    else:
        verdict = "QC-not-biLipschitz-like"
    return {
        "map": phi.to_dict(),
        "interpolated": bool(getattr(phi, "interpolated", False)),
        "verdict": verdict,
        "H_hat": s1.H_hat,
        "H_hat_4x": s2.H_hat,
        "probes": probes,
        "skipped": s1.skipped,
        "skipped_4x": s2.skipped,
        "worst_triple": s1.worst,
        "census": census.to_dict(),
        "pushforward": push,
        "thresholds": {"bilip_max_bins": BILIP_MAX_BINS, "bilip_max_H": BILIP_MAX_H,
                       "unbounded_factor": UNBOUNDED_FACTOR},
        "seed": seed,
    }


def _pushforward(phi, params: BesovParams, triple, N: int, seed: int):
    """Condenser solves on both sides of ``phi`` at one probe triple.

    Image side: ``F = B(phi x, r)``, ``E`` = complement of ``B(phi x, R)``
    with ``r = |phi x - phi z|``, ``R = |phi x - phi y|``. Source side: the
    preimages of those sets, solved on a grid centered at ``x`` and warm
    started from the pulled-back construction.
    """
    from .constructions import condenser_profile
    from .grid import sample

    if triple is None:
        return None
    x, y, z = (np.asarray(t, float) for t in triple)
    dy = np.array(phi.delta(x, y[0] - x[0], y[1] - x[1]), float)
    dz = np.array(phi.delta(x, z[0] - x[0], z[1] - x[1]), float)
    R, r = float(np.hypot(*dy)), float(np.hypot(*dz))
    out = {"image_ratio": R / r if r > 0 else None, "capacity_image": None, "capacity_source": None,
           "ratio": None, "converged": None, "note": None}
    if not (R > r * (1 + 1e-9)) or r <= 0:
        out["note"] = "no separating annulus at the worst triple"
        return out
    if getattr(phi, "inverse", None) is None:
        out["note"] = "map has no inverse; source support unknown"
        return out
    cfg = SolverConfig()
    u = condenser_profile((0.0, 0.0), r, R)
    img = Domain(4.0 * R, N)
    sm_img = standard_sampler(img, 256, seed)
    t = 2 * math.pi * np.arange(720) / 720
    fx = np.array(phi(np.array(x[0]), np.array(x[1])), float)
    a, b = phi.inverse_delta_at(fx, R * np.cos(t), R * np.sin(t))
    rho = float(np.max(np.hypot(a, b))) * (1 + 1e-9)
    src = Domain(4.0 * rho, N)
    d1, d2 = src.nodes()
    e1, e2 = phi.delta(x, d1, d2)
    dist = np.hypot(e1, e2)
    try:
        spec_img = CondenserSpec(img, img.radii() >= R, img.radii() <= r, (0.0, 0.0), R)
        spec_src = CondenserSpec(src, dist >= R, dist <= r, tuple(x), rho)
    except CapacityError as exc:
        out["note"] = f"condenser not resolved at N={N}: {exc}"
        return out
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ri = solve_condenser(spec_img, params, sm_img, cfg, warm_start=sample(u, img, R))
        g = GridFunction(src, u(e1, e2) * (dist < R), rho)
        rs = solve_condenser(spec_src, params, standard_sampler(src, 256, seed), cfg, warm_start=g)
    out.update(capacity_image=ri.value, capacity_source=rs.value, ratio=rs.value / ri.value,
               converged=bool(ri.converged and rs.converged))
    return out


def qc_report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)
