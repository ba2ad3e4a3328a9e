"""Property suites for the stack, capacity and anisotropy estimates.

Each suite runs a small seeded experiment and returns a :class:`SuiteResult`
with one row per measured configuration and a pass flag. The CLI command
``verify-lemmas`` runs them in a fixed order.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .besov import BesovParams, Piece, besov_norm_difference, besov_norm_separated
from .capacity import (fit_slope, parallel_segments_spec, verify_capacity_lower,
                       verify_capacity_upper)
from .constructions import make_anisotropic_box, make_dyadic_stack, ring_centers, tent
from .grid import Domain, standard_sampler

SUITE_NAMES = ("dyadic_concentric", "dyadic_disjoint", "equal_stack", "capacity_lower",
               "capacity_upper", "anisotropy")


@dataclass
class SuiteResult:
    name: str
    passed: bool
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "rows": self.rows, "summary": self.summary}


def _spread(vals) -> float:
    """``max / min - 1``."""
    return float(max(vals) / min(vals) - 1.0)


def _rng(seed: int, tag: int):
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, tag])


def dyadic_concentric(seed: int = 0, s: float = 0.5, qs=(2.0, 4.0, 8.0), Js=(3, 6), draws: int = 2,
                      Rs=(0.25, 0.5, 1.0), N: int = 512, L: float = 4.0, tol: float = 0.30) -> SuiteResult:
    """Concentric dyadic stacks: ``norm / ||b||_q`` is the same for every ``R``.

    One fixed grid is used for every ``R``, so smaller stacks are sampled
    more coarsely; the spread across ``R`` must stay within ``tol``.
    """
    dom = Domain(L, N)
    sm = standard_sampler(dom, 256, seed)
    rng = _rng(seed, 21)
    rows, ok = [], True
    for J in Js:
        for d in range(draws):
            b = rng.uniform(0.2, 1.0, J)
            for q in qs:
                prm = BesovParams(s, q)
                ratios = []
                for R in Rs:
                    _, F = make_dyadic_stack((0.0, 0.0), R, b, dom)
                    ratios.append(besov_norm_difference(F, prm, sm) / np.sum(b ** q) ** (1.0 / q))
                sp = _spread(ratios)
                ok &= sp <= tol
                rows.append({"J": J, "draw": d, "q": q, "ratios": ratios, "spread": sp})
    return SuiteResult("dyadic_concentric", bool(ok), rows,
                       {"max_spread": max(r["spread"] for r in rows), "tol": tol, "N": N})


def _stack_pieces(centers, radii, b):
    return [Piece((float(c[0]), float(c[1])), float(r), tent((0.0, 0.0), float(r), float(a)), local=True)
            for c, r, a in zip(centers, radii, b)]


def _grid_check(centers, radii, b, prm, seed, N=512, L=4.0):
    """Grid and separated estimates of one small separated stack."""
    from .constructions import BumpFamily

    fam = BumpFamily(np.asarray(centers, float), np.asarray(radii, float), np.asarray(b, float))
    dom = Domain(L, N)
    g = besov_norm_difference(fam.sample(dom), prm, standard_sampler(dom, 256, seed))
    sep = besov_norm_separated(_stack_pieces(fam.centers, fam.radii, b), prm)
    return {"grid": g, "separated": sep, "rel_diff": abs(g - sep) / sep}


def dyadic_disjoint(seed: int = 0, s: float = 0.5, qs=(2.0, 4.0, 8.0), Js=(3, 6), draws: int = 2,
                    Rs=(0.25, 0.5, 1.0), tol: float = 0.30, grid_tol: float = 0.10) -> SuiteResult:
    """Separated dyadic stacks: ``norm / ||(2^js R^-s ||f_j||_p)_j||_q`` is positive and ``R``-independent."""
    rng = _rng(seed, 22)
    rows, ok = [], True
    for J in Js:
        for d in range(draws):
            b = rng.uniform(0.2, 1.0, J)
            for q in qs:
                prm = BesovParams(s, q)
                ratios = []
                for R in Rs:
                    radii = R * 2.0 ** (-np.arange(J))
                    centers = np.stack([18.0 * R * np.arange(J), np.zeros(J)], 1)
                    fam, _ = make_dyadic_stack(centers, R, b)
                    lp = np.array([(a ** prm.p * 2 * math.pi * r * r / ((prm.p + 1) * (prm.p + 2))) ** (1 / prm.p)
                                   for a, r in zip(b, radii)])
                    ref = np.sum((2.0 ** (np.arange(J) * s) * R ** (-s) * lp) ** q) ** (1.0 / q)
                    nrm = besov_norm_separated(_stack_pieces(fam.centers, fam.radii, b), prm)
                    ratios.append(nrm / ref)
                sp = _spread(ratios)
                ok &= sp <= tol and min(ratios) > 0
                rows.append({"J": J, "draw": d, "q": q, "ratios": ratios, "spread": sp})
    # the separated estimator is exactly dilation invariant, so cross-check it on a grid
    R0 = 0.1
    checks = []
    for q in qs:
        chk = _grid_check([(-9 * R0, 0.0), (9 * R0, 0.0)], [R0, R0 / 2], [1.0, 0.6], BesovParams(s, q), seed)
        ok &= chk["rel_diff"] <= grid_tol
        checks.append(dict(q=q, **chk))
    return SuiteResult("dyadic_disjoint", bool(ok), rows + checks,
                       {"max_spread": max(r["spread"] for r in rows),
                        "min_ratio": min(min(r["ratios"]) for r in rows), "tol": tol,
                        "max_grid_rel_diff": max(c["rel_diff"] for c in checks), "grid_tol": grid_tol})


def equal_stack(seed: int = 0, s: float = 0.5, qs=(2.0, 4.0, 8.0), ms=(1, 2, 4, 8),
                Rs=(0.25, 0.5, 1.0), tol: float = 0.30, grid_tol: float = 0.10) -> SuiteResult:
    """Equal-radius separated stacks: ``norm / ||b||_p`` in one bracket for all ``R`` and ``m``."""
    rng = _rng(seed, 23)
    bs = {m: rng.uniform(0.2, 1.0, m) for m in ms}
    rows, ok = [], True
    for q in qs:
        prm = BesovParams(s, q)
        allr = []
        for m in ms:
            b = bs[m]
            ratios = []
            for R in Rs:
                c = ring_centers(m, R)
                nrm = besov_norm_separated(_stack_pieces(c, [R] * m, b), prm)
                ratios.append(nrm / np.sum(b ** prm.p) ** (1.0 / prm.p))
            allr += ratios
            rows.append({"q": q, "m": m, "ratios": ratios, "spread": _spread(ratios)})
        sp = _spread(allr)
        ok &= sp <= tol
        rows.append({"q": q, "m": "all", "bracket": [min(allr), max(allr)], "spread": sp})
    R0 = 0.1
    checks = []
    for q in qs:
        chk = _grid_check(ring_centers(2, R0), [R0, R0], bs[ms[-1]][:2], BesovParams(s, q), seed)
        ok &= chk["rel_diff"] <= grid_tol
        checks.append(dict(q=q, **chk))
    return SuiteResult("equal_stack", bool(ok), rows + checks,
                       {"max_spread": max(r["spread"] for r in rows), "tol": tol,
                        "max_grid_rel_diff": max(c["rel_diff"] for c in checks), "grid_tol": grid_tol})


def capacity_lower(seed: int = 0, s: float = 0.5, qs=(2.0, 4.0), lams=(0.125, 0.25, 0.5, 1.0),
                   N: int = 64, L: float = 4.0, margin: float = 0.3) -> SuiteResult:
    """Segment condensers: fitted slope of capacity against ``lambda`` at most ``1/q + margin``."""
    dom = Domain(L, N)
    sm = standard_sampler(dom, 256, seed)
    R = 0.25 * L
    rows, ok = [], True
    for q in qs:
        prm = BesovParams(s, q)
        specs = [parallel_segments_spec(dom, lam * R, 0.5 * R, R) for lam in lams]
        rep = verify_capacity_lower(specs, prm, sm)
        good = (rep.slope <= 1.0 / q + margin and rep.floor > 0 and not rep.excluded
                and len(rep.values) == len(lams))
        ok &= good
        rows.append({"q": q, "lams": rep.lams, "values": rep.values, "slope": rep.slope,
                     "bound": 1.0 / q + margin, "excluded": rep.excluded, "passed": bool(good)})
    return SuiteResult("capacity_lower", bool(ok), rows, {"N": N})


def capacity_upper(seed: int = 0, s: float = 0.5, qs=(2.0, 4.0), ratios=(2.0, 8.0, 32.0),
                   N: int = 64, L: float = 4.0) -> SuiteResult:
    """Annulus condensers: solver below construction, both strictly decreasing in ``R / r``."""
    dom = Domain(L, N)
    sm = standard_sampler(dom, 256, seed)
    rows, ok = [], True
    for q in qs:
        table = verify_capacity_upper(ratios, BesovParams(s, q), dom, sm)
        sol = [r.solver for r in table]
        con = [r.construction for r in table]
        good = (all(a > b for a, b in zip(sol, sol[1:])) and all(a > b for a, b in zip(con, con[1:]))
                and all(x <= y for x, y in zip(sol, con)) and all(r.converged for r in table))
        ok &= good
        rows.append({"q": q, "ratios": list(ratios), "solver": sol, "construction": con,
                     "converged": [r.converged for r in table], "passed": bool(good)})
    return SuiteResult("capacity_upper", bool(ok), rows, {"N": N})


def anisotropy(seed: int = 0, s: float = 0.5, q: float = 4.0, aspects=(1, 2, 4, 8), N: int = 512,
               L: float = 4.0, rel_tol: float = 0.30) -> SuiteResult:
    """Boxes of fixed long side: fitted exponent of norm against aspect near ``s / 2``."""
    dom = Domain(L, N)
    sm = standard_sampler(dom, 256, seed)
    prm = BesovParams(s, q)
    A2 = L / (8.0 * math.sqrt(2.0))
    vals = []
    for a in aspects:
        u, _ = make_anisotropic_box(A2 / a, A2, dom)
        vals.append(besov_norm_difference(u, prm, sm))
    slope = fit_slope(aspects, vals)
    target = s / 2.0
    ok = abs(slope - target) <= rel_tol * target
    return SuiteResult("anisotropy", bool(ok),
                       [{"aspect": a, "A1": A2 / a, "A2": A2, "norm": v} for a, v in zip(aspects, vals)],
                       {"slope": slope, "target": target, "rel_tol": rel_tol, "q": q, "N": N})


SUITES = {
    "dyadic_concentric": dyadic_concentric,
    "dyadic_disjoint": dyadic_disjoint,
    "equal_stack": equal_stack,
    "capacity_lower": capacity_lower,
    "capacity_upper": capacity_upper,
    "anisotropy": anisotropy,
}


def run_suites(names=SUITE_NAMES, seed: int = 0, options: dict | None = None) -> list:
    """Run the named suites in order; ``options[name]`` holds keyword overrides."""
    options = options or {}
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for name in names:
            if name not in SUITES:
                raise KeyError(f"unknown suite {name!r}")
            out.append(SUITES[name](seed=seed, **options.get(name, {})))
    return out
