"""Manifest-driven experiment runner.

Usage::

    besovlab norm --manifest tent.yaml --out-dir out/
    besovlab verify-lemmas --sequential
    besovlab validate --manifest m.yaml
    besovlab dichotomy --print-manifest > d.yaml

Exit codes: 0 success, 2 validation failure, 3 numerical failure
(unconverged solver, non-finite value, failed property suite), 4 I/O.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from . import set_threads

COMMANDS = ("norm", "capacity", "dichotomy", "qc-check", "verify-lemmas", "psi-profile")
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

TOP_KEYS = ("command", "seed", "params", "domain", "spec", "outputs")

DEFAULT_SPECS = {
    "norm": {"function": {"kind": "corpus", "name": "tent", "rho": 1.0, "dilation": 1.0},
             "estimators": ["difference", "cp", "hajlasz"], "samples_per_level": 256},
    "capacity": {"condenser": {"kind": "annulus", "ratio": 8.0},
                 "solver": {"max_iters": 400, "step_rule": "diminishing", "tolerance": 1e-5,
                            "epsilon": 0.0, "exterior": "zero"},
                 "samples_per_level": 256},
    "dichotomy": {"map": {"kind": "radial_stretch", "alpha": 2.0}, "levels": [1, 2, 3, 4, 5],
                  "qs": [2.0, 4.0], "stride": 6, "amplitudes": None},
    "qc-check": {"map": {"kind": "radial_stretch", "alpha": 2.0}, "probes": 2000,
                 "region": {"side_length": 4.0, "resolution": 128}, "hole": 0.0},
    "verify-lemmas": {"suites": ["dyadic_concentric", "dyadic_disjoint", "equal_stack", "capacity_lower",
                                 "capacity_upper", "anisotropy"], "options": {}},
    "psi-profile": {"ratios": [2.0, 8.0, 32.0], "R": None, "samples_per_level": 256},
}

DEFAULT_OUTPUTS = {
    "norm": {"csv": "norm.csv", "trace": "norm_trace.json", "grid": None},
    "capacity": {"csv": "capacity.csv", "trace": "capacity_trace.csv", "grid": None},
    "dichotomy": {"csv": "dichotomy.csv", "json": "dichotomy.json"},
    "qc-check": {"json": "qc_check.json"},
    "verify-lemmas": {"csv": "lemmas.csv", "json": "lemmas.json"},
    "psi-profile": {"csv": "psi_profile.csv"},
}


@dataclass
class ExperimentManifest:
    command: str
    seed: int
    params: dict = field(default_factory=lambda: {"s": 0.5, "q": 2.0, "n": 2})
    domain: dict = field(default_factory=lambda: {"side_length": 4.0, "resolution": 64})
    spec: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in TOP_KEYS}

    def to_text(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=False)


class ManifestError(ValueError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


def default_manifest(command: str, seed: int = 0) -> ExperimentManifest:
    import copy

    return ExperimentManifest(command, seed, spec=copy.deepcopy(DEFAULT_SPECS[command]),
                              outputs=dict(DEFAULT_OUTPUTS[command]))


def parse_manifest(text: str) -> ExperimentManifest:
    """Parse the YAML text form; structural problems raise :class:`ManifestError`."""
    try:
        d = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ManifestError([f"<text>: not valid YAML ({exc})"]) from None
    if not isinstance(d, dict):
        raise ManifestError(["<root>: manifest must be a mapping"])
    diags = [f"{k}: unknown top-level key" for k in d if k not in TOP_KEYS]
    if "command" not in d:
        diags.append("command: missing")
    if "seed" not in d:
        diags.append("seed: missing (seeds are mandatory)")
    for k in ("params", "domain", "spec", "outputs"):
        if k in d and not isinstance(d[k], dict):
            diags.append(f"{k}: must be a mapping")
    if diags:
        raise ManifestError(diags)
    base = ExperimentManifest(d["command"], d["seed"])
    return ExperimentManifest(d["command"], d["seed"], d.get("params", base.params), d.get("domain", base.domain),
                              d.get("spec", {}) or {}, d.get("outputs", {}) or {})


def load_manifest(path: str) -> ExperimentManifest:
    with open(path) as fh:
        return parse_manifest(fh.read())


# --------------------------------------------------------------------------
# validation

def _num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _support_radius(m: ExperimentManifest):
    """Declared support radius of the command's test function, when it has one."""
    sp = m.spec
    if m.command == "norm":
        f = sp.get("function", {}) or {}
        kind = f.get("kind")
        if kind == "corpus":
            return "spec.function.rho", float(f.get("rho", 1.0)) / float(f.get("dilation", 1.0))
        if kind == "tent":
            c = f.get("center", [0.0, 0.0])
            return "spec.function.radius", math.hypot(*c) + float(f.get("radius", 1.0))
        if kind == "dyadic_stack":
            c = f.get("center", [0.0, 0.0])
            return "spec.function.R", math.hypot(*c) + float(f.get("R", 1.0))
    if m.command == "capacity":
        c = sp.get("condenser", {}) or {}
        if c.get("kind", "annulus") == "annulus" and c.get("R") is not None:
            return "spec.condenser.R", float(c["R"])
    if m.command == "psi-profile" and sp.get("R") is not None:
        return "spec.R", float(sp["R"])
    return None, None


def validate(m: ExperimentManifest) -> list:
    """All invariant violations of ``m`` as ``"field.path: message"`` strings."""
    out = []
    if m.command not in COMMANDS:
        out.append(f"command: unknown command {m.command!r}; expected one of {', '.join(COMMANDS)}")
    if not isinstance(m.seed, int) or isinstance(m.seed, bool):
        out.append(f"seed: must be an integer, got {m.seed!r}")
    elif not 0 <= m.seed < 2 ** 64:
        out.append("seed: must lie in [0, 2^64)")
    p = m.params or {}
    for k in p:
        if k not in ("s", "q", "p", "n"):
            out.append(f"params.{k}: unknown key")
    s, q, n = p.get("s"), p.get("q"), p.get("n", 2)
    if not _num(s):
        out.append("params.s: missing or not a number")
    elif not 0 < s < 1:
        out.append(f"params.s: s out of (0,1), got {s}")
    if not _num(q):
        out.append("params.q: missing or not a number")
    elif not q > 0:
        out.append(f"params.q: must be positive, got {q}")
    elif m.command == "capacity" and q < 1:
        out.append(f"params.q: convex solver requires q ≥ 1, got {q}")
    if n != 2:
        out.append(f"params.n: only n = 2 is implemented, got {n}")
    if p.get("p") is not None and _num(s) and 0 < s < 1 and abs(float(p["p"]) - n / s) > 1e-12 * n / s:
        out.append(f"params.p: scaling invariant runs need p = n/s = {n / s!r}, got {p['p']}")
    dm = m.domain or {}
    L, N = dm.get("side_length"), dm.get("resolution")
    for k in dm:
        if k not in ("side_length", "resolution"):
            out.append(f"domain.{k}: unknown key")
    if not _num(L) or not L > 0:
        out.append(f"domain.side_length: must be a positive number, got {L!r}")
    if not isinstance(N, int) or isinstance(N, bool) or N < 8:
        out.append(f"domain.resolution: must be an integer >= 8, got {N!r}")
    if m.command in COMMANDS:
        for k in m.spec:
            if k not in DEFAULT_SPECS[m.command]:
                out.append(f"spec.{k}: unknown key for {m.command}")
        for k in m.outputs:
            if k not in DEFAULT_OUTPUTS[m.command]:
                out.append(f"outputs.{k}: unknown output for {m.command}")
        for k, v in m.outputs.items():
            if v is not None and (not isinstance(v, str) or os.path.isabs(v) or ".." in v.split("/")):
                out.append(f"outputs.{k}: must be a relative path inside the output directory")
        out += _validate_spec(m)
    path, rho = _support_radius(m)
    if rho is not None and _num(L) and L > 0 and rho > 0.25 * L * (1 + 1e-12):
        out.append(f"{path}: support radius {rho!r} exceeds L/4 = {0.25 * L!r}, "
                   "violating the tail-correction precondition")
    return out


_MAP_KINDS = ("identity", "affine", "rotation", "radial_stretch", "banded_shear")


def _validate_map(d, path):
    if not isinstance(d, dict) or d.get("kind") not in _MAP_KINDS:
        return [f"{path}.kind: expected one of {', '.join(_MAP_KINDS)}"]
    out = []
    if d["kind"] == "radial_stretch" and not (_num(d.get("alpha")) and d["alpha"] > 0):
        out.append(f"{path}.alpha: must be a positive number")
    if d["kind"] == "affine" and d.get("matrix") is None:
        out.append(f"{path}.matrix: missing")
    return out


def _validate_spec(m: ExperimentManifest) -> list:
    sp = {**DEFAULT_SPECS[m.command], **m.spec}
    out = []
    if m.command == "norm":
        f = sp["function"]
        kinds = ("corpus", "tent", "dyadic_stack", "grid")
        if not isinstance(f, dict) or f.get("kind") not in kinds:
            out.append(f"spec.function.kind: expected one of {', '.join(kinds)}")
        elif f["kind"] == "corpus":
            from .constructions import CORPUS_NAMES
            if f.get("name") not in CORPUS_NAMES:
                out.append(f"spec.function.name: unknown corpus function {f.get('name')!r}")
        elif f["kind"] == "grid" and not isinstance(f.get("path"), str):
            out.append("spec.function.path: missing")
        bad = [e for e in sp["estimators"] if e not in ("difference", "cp", "hajlasz")]
        if bad or not sp["estimators"]:
            out.append(f"spec.estimators: expected a nonempty subset of difference, cp, hajlasz, got {bad}")
    elif m.command == "capacity":
        c = sp["condenser"]
        if not isinstance(c, dict) or c.get("kind") not in ("annulus", "segments"):
            out.append("spec.condenser.kind: expected annulus or segments")
        elif c["kind"] == "annulus" and not (_num(c.get("ratio")) and c["ratio"] > 1):
            out.append("spec.condenser.ratio: must exceed 1")
        elif c["kind"] == "segments" and not (_num(c.get("lam")) and 0 < c["lam"] <= 1):
            out.append("spec.condenser.lam: must lie in (0, 1]")
        sv = sp["solver"]
        if not isinstance(sv, dict):
            out.append("spec.solver: must be a mapping")
        else:
            if not (_num(sv.get("tolerance", 1e-5)) and sv.get("tolerance", 1e-5) > 0):
                out.append("spec.solver.tolerance: must be positive")
            if not (_num(sv.get("epsilon", 0.0)) and sv.get("epsilon", 0.0) >= 0):
                out.append("spec.solver.epsilon: must be non-negative")
            if sv.get("step_rule", "diminishing") not in ("diminishing", "bb"):
                out.append("spec.solver.step_rule: expected diminishing or bb")
            if sv.get("exterior", "zero") not in ("zero", "box"):
                out.append("spec.solver.exterior: expected zero or box")
        if _num(m.params.get("p", 0)) and m.params.get("p") is not None and m.params["p"] < 1:
            out.append("params.p: convex solver requires p ≥ 1")
    elif m.command == "dichotomy":
        out += _validate_map(sp["map"], "spec.map")
        lv = sp["levels"]
        if not isinstance(lv, list) or not lv or not all(isinstance(x, int) and 1 <= x <= 6 for x in lv):
            out.append("spec.levels: expected a list of integers in 1..6")
        if not isinstance(sp["qs"], list) or not all(_num(x) and x >= 1 for x in sp["qs"]):
            out.append("spec.qs: expected a list of numbers >= 1")
        if not (isinstance(sp["stride"], int) and sp["stride"] >= 1):
            out.append("spec.stride: must be a positive integer")
    elif m.command == "qc-check":
        out += _validate_map(sp["map"], "spec.map")
        if not (isinstance(sp["probes"], int) and sp["probes"] >= 1000):
            out.append("spec.probes: must be an integer >= 1000")
    elif m.command == "verify-lemmas":
        from .suites import SUITE_NAMES
        bad = [x for x in sp["suites"] if x not in SUITE_NAMES]
        if bad:
            out.append(f"spec.suites: unknown suites {bad}")
    elif m.command == "psi-profile":
        if not isinstance(sp["ratios"], list) or not all(_num(x) and 1 < x < math.inf for x in sp["ratios"]):
            out.append("spec.ratios: expected finite numbers > 1")
    return out


# --------------------------------------------------------------------------
# running

class NumericalFailureExit(Exception):
    pass


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    if v is None:
        return ""
    return str(v)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    return buf.getvalue()


def _json_default(o):
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _params(m: ExperimentManifest):
    from .besov import BesovParams
    p = m.params
    return BesovParams(float(p["s"]), float(p["q"]), None if p.get("p") is None else float(p["p"]))


def _domain(m: ExperimentManifest):
    from .grid import Domain
    return Domain(float(m.domain["side_length"]), int(m.domain["resolution"]))


def build_map(d: dict):
    """Homeomorphism from a manifest map spec."""
    from . import homeo
    kind = d["kind"]
    if kind == "identity":
        return homeo.identity()
    if kind == "affine":
        return homeo.affine(d["matrix"], tuple(d.get("shift", (0.0, 0.0))))
    if kind == "rotation":
        return homeo.rotation(float(d["theta"]), tuple(d.get("shift", (0.0, 0.0))))
    if kind == "radial_stretch":
        return homeo.radial_stretch(float(d["alpha"]))
    if kind == "banded_shear":
        return homeo.banded_shear(float(d.get("width", 0.5)), float(d.get("slope", 1.0)),
                                  float(d.get("growth", 2.0)))
    raise ValueError(f"unknown map kind {kind!r}")


def _build_function(f: dict, dom, base_dir: str):
    from .constructions import corpus_function, make_dyadic_stack, tent
    from .grid import load_grid_function, sample

    kind = f["kind"]
    if kind == "corpus":
        name = f["name"]
        return name, corpus_function(name, dom, float(f.get("rho", 1.0)), float(f.get("dilation", 1.0)))
    if kind == "tent":
        c = tuple(float(x) for x in f.get("center", (0.0, 0.0)))
        r = float(f.get("radius", 1.0))
        return "tent", sample(tent(c, r, float(f.get("amplitude", 1.0))), dom, math.hypot(*c) + r)
    if kind == "dyadic_stack":
        c = tuple(float(x) for x in f.get("center", (0.0, 0.0)))
        _, g = make_dyadic_stack(c, float(f.get("R", 1.0)), f.get("b", [1.0]), dom)
        return "dyadic_stack", g
    if kind == "grid":
        path = f["path"] if os.path.isabs(f["path"]) else os.path.join(base_dir, f["path"])
        g = load_grid_function(path)
        if g.domain != dom:
            raise ValueError(f"grid file {path} has domain {g.domain}, manifest declares {dom}")
        return os.path.basename(path), g
    raise ValueError(f"unknown function kind {kind!r}")


def _run_norm(m, sp, out, say, base_dir):
    from .besov import (NormTrace, besov_norm_cp, besov_norm_difference, cp_profile, dyadic_scales,
                        hajlasz_halfsup_gradient, hajlasz_levels, hajlasz_upper_bound)
    from .grid import save_grid_function, standard_sampler

    prm, dom = _params(m), _domain(m)
    name, f = _build_function(sp["function"], dom, base_dir)
    vals = {"difference": None, "cp": None, "hajlasz": None}
    traces = {}
    if "difference" in sp["estimators"]:
        tr = NormTrace("difference", prm.s, prm.p, prm.q)
        vals["difference"] = besov_norm_difference(f, prm, standard_sampler(dom, int(sp["samples_per_level"]),
                                                                            m.seed), trace=tr)
        traces["difference"] = tr.to_dict()
    if "cp" in sp["estimators"]:
        tr = NormTrace("cp", prm.s, prm.p, prm.q)
        prof = cp_profile(f, prm, dyadic_scales(dom), samples_per_level=2 * int(sp["samples_per_level"]),
                          seed=m.seed)
        vals["cp"] = besov_norm_cp(prof, trace=tr)
        traces["cp"] = tr.to_dict()
    if "hajlasz" in sp["estimators"]:
        g = hajlasz_halfsup_gradient(f, prm, hajlasz_levels(dom))
        vals["hajlasz"] = hajlasz_upper_bound(g, prm)
    for v in vals.values():
        if v is not None and not math.isfinite(v):
            raise NumericalFailureExit(f"norm: non-finite estimate for {name}")
    row = [name, prm.s, prm.p, prm.q, dom.side_length, dom.resolution, m.seed,
           vals["difference"], vals["cp"], vals["hajlasz"]]
    out("csv", _csv_text(["function", "s", "p", "q", "L", "N", "seed", "difference", "cp", "hajlasz"], [row]))
    out("trace", _json_text(traces))
    if m.outputs.get("grid"):
        out("grid", f, save_grid_function)
    say("norm %s s=%g q=%g N=%d: difference=%s cp=%s hajlasz=%s"
        % (name, prm.s, prm.q, dom.resolution, _fmt(vals["difference"]), _fmt(vals["cp"]), _fmt(vals["hajlasz"])))
    return EXIT_OK


def _run_capacity(m, sp, out, say, base_dir):
    from .capacity import SolverConfig, annulus_spec, nearest_node, parallel_segments_spec, solve_condenser
    from .constructions import make_annulus_condenser
    from .grid import save_grid_function, standard_sampler

    prm, dom = _params(m), _domain(m)
    c = sp["condenser"]
    cfg = SolverConfig(**{**DEFAULT_SPECS["capacity"]["solver"], **sp["solver"]})
    sm = standard_sampler(dom, int(sp["samples_per_level"]), m.seed)
    if c["kind"] == "annulus":
        x0 = tuple(float(t) for t in nearest_node(dom, (0.0, 0.0)))
        R = float(c["R"]) if c.get("R") is not None else 0.25 * dom.side_length - math.hypot(*x0)
        r = R / float(c["ratio"])
        spec = annulus_spec(dom, r, R, x0)
        warm = make_annulus_condenser(x0, r, R, None, dom).function
        label = f"annulus R/r={float(c['ratio']):g}"
    else:
        R = float(c.get("R", 0.25 * dom.side_length))
        spec = parallel_segments_spec(dom, float(c["lam"]) * R, float(c.get("gap", 0.5)) * R, R)
        warm = None
        label = f"segments lam={float(c['lam']):g}"
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = solve_condenser(spec, prm, sm, cfg, warm_start=warm)
    lam = spec.lam
    row = [label, prm.s, prm.p, prm.q, dom.resolution, m.seed, lam, res.value, res.iterations, res.converged]
    out("csv", _csv_text(["condenser", "s", "p", "q", "N", "seed", "lambda", "value", "iterations", "converged"],
                         [row]))
    out("trace", res.trace_csv())
    if m.outputs.get("grid"):
        out("grid", res.u, save_grid_function)
    say(f"capacity {label} q={prm.q:g} N={dom.resolution}: value={_fmt(res.value)} "
        f"iterations={res.iterations} converged={res.converged}")
    if not res.converged:
        say("capacity: solver stopped at max_iters without reaching tolerance")
        return EXIT_NUMERICAL
    return EXIT_OK


def _run_dichotomy(m, sp, out, say, base_dir):
    from .homeo import dichotomy_experiment

    prm = _params(m)
    phi = build_map(sp["map"])
    b = sp.get("amplitudes")
    rep = dichotomy_experiment(phi, sp["levels"], None if b is None else np.asarray(b, float), prm,
                               domain=_domain(m), qs=[float(q) for q in sp["qs"]], stride=int(sp["stride"]),
                               seed=m.seed)
    out("csv", rep.to_csv())
    out("json", rep.to_json() + "\n")
    for r in rep.rows:
        say(f"dichotomy {r.family} q={r.q:g} N_lv={r.N_lv} construction={r.construction}: ratio={_fmt(r.ratio)}")
    for q, sl in rep.slopes.items():
        say(f"dichotomy q={float(q):g}: growth={_fmt(sl['growth'])} expected={_fmt(sl['expected'])}")
    return EXIT_OK


def _run_qc(m, sp, out, say, base_dir):
    from .capacity import qc_check
    from .grid import Domain

    rg = sp["region"]
    rep = qc_check(build_map(sp["map"]), _params(m), probes=int(sp["probes"]), seed=m.seed,
                   region=Domain(float(rg["side_length"]), int(rg["resolution"])), hole=float(sp["hole"]))
    out("json", _json_text(rep))
    say(f"qc-check {rep['map']['label']}: verdict={rep['verdict']} H_hat={_fmt(rep['H_hat'])} "
        f"H_hat_4x={_fmt(rep['H_hat_4x'])} bins={rep['census']['nonempty_bins']}")
    return EXIT_OK


def _run_lemmas(m, sp, out, say, base_dir):
    from .suites import run_suites

    res = run_suites(sp["suites"], seed=m.seed, options=sp.get("options") or {})
    rows = []
    for r in res:
        key = {k: v for k, v in r.summary.items() if isinstance(v, (int, float))}
        rows.append([r.name, r.passed, json.dumps(key, sort_keys=True, default=_json_default)])
        say(f"verify-lemmas {r.name}: {'pass' if r.passed else 'FAIL'}")
    out("csv", _csv_text(["suite", "passed", "summary"], rows))
    out("json", _json_text([r.to_dict() for r in res]))
    return EXIT_OK if all(r.passed for r in res) else EXIT_NUMERICAL


def _run_psi(m, sp, out, say, base_dir):
    from .constructions import default_truncation, psi_profile, unit_stack_norm, xi

    prm, dom = _params(m), _domain(m)
    R = 0.25 * dom.side_length if sp.get("R") is None else float(sp["R"])
    prof = psi_profile([float(x) for x in sp["ratios"]], prm, dom, R, seed=m.seed,
                       samples_per_level=int(sp["samples_per_level"]))
    rows = []
    for ratio, nrm in prof:
        J = default_truncation(R / ratio, R)
        x = xi(1.0 / ratio, J)
        # the stack with the condenser's own truncation; min(1, .) only shrinks differences
        cprime = unit_stack_norm(prm, dom, R, J=J, seed=m.seed, samples_per_level=int(sp["samples_per_level"]))
        rows.append([ratio, J, nrm, x, cprime, cprime / x])
        say(f"psi-profile ratio={ratio:g}: norm={_fmt(nrm)} bound={_fmt(cprime / x)}")
    out("csv", _csv_text(["ratio", "J", "norm", "xi", "c_prime", "bound"], rows))
    return EXIT_OK


RUNNERS = {"norm": _run_norm, "capacity": _run_capacity, "dichotomy": _run_dichotomy, "qc-check": _run_qc,
           "verify-lemmas": _run_lemmas, "psi-profile": _run_psi}


def run(m: ExperimentManifest, out_dir: str = ".", say=print, base_dir: str = ".") -> int:
    """Validate and execute ``m``; write declared outputs below ``out_dir``; return the exit status."""
    diags = validate(m)
    if diags:
        for d in diags:
            say(f"invalid manifest: {d}")
        return EXIT_VALIDATION
    sp = {**DEFAULT_SPECS[m.command], **m.spec}
    outputs = {**DEFAULT_OUTPUTS[m.command], **m.outputs}

    def out(key, payload, writer=None):
        rel = outputs.get(key)
        if not rel:
            return
        path = os.path.join(out_dir, rel)
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        if writer is not None:
            writer(payload, path)
            return
        with open(path, "w", newline="") as fh:
            fh.write(payload)

    from .besov import BesovError
    from .capacity import NumericalFailure
    try:
        return RUNNERS[m.command](m, sp, out, say, base_dir)
    except (NumericalFailure, NumericalFailureExit, FloatingPointError) as exc:
        say(f"{m.command}: numerical failure: {exc}")
        return EXIT_NUMERICAL
    except OSError as exc:
        say(f"{m.command}: I/O error: {exc}")
        return EXIT_IO
    except (ValueError, BesovError) as exc:
        say(f"{m.command}: {type(exc).__name__}: {exc}")
        return EXIT_VALIDATION


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="besovlab", description="Scaling invariant Besov norm experiments.")
    ap.add_argument("command", choices=COMMANDS + ("validate",))
    ap.add_argument("--manifest", help="YAML manifest; defaults are used when omitted")
    ap.add_argument("--seed", type=int, help="override the manifest seed")
    ap.add_argument("--sequential", action="store_true", help="single thread, bit-reproducible")
    ap.add_argument("--out-dir", default=".", help="directory for declared outputs")
    ap.add_argument("--threads", type=int, help="numba thread cap")
    ap.add_argument("--print-manifest", action="store_true", help="print the effective manifest and exit")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.manifest:
            m = load_manifest(args.manifest)
            base_dir = os.path.dirname(os.path.abspath(args.manifest))
        elif args.command == "validate":
            print("validate needs --manifest", file=sys.stderr)
            return EXIT_VALIDATION
        else:
            m = default_manifest(args.command)
            base_dir = os.getcwd()
    except ManifestError as exc:
        for d in exc.diagnostics:
            print(f"invalid manifest: {d}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"cannot read manifest: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.command not in ("validate", m.command):
        print(f"command: manifest declares {m.command!r} but {args.command!r} was requested", file=sys.stderr)
        return EXIT_VALIDATION
    if args.seed is not None:
        m = replace(m, seed=args.seed)
    if args.print_manifest:
        sys.stdout.write(m.to_text())
        return EXIT_OK
    if args.command == "validate":
        diags = validate(m)
        for d in diags:
            print(d)
        if not diags:
            print("manifest ok")
        return EXIT_VALIDATION if diags else EXIT_OK
    set_threads(1 if args.sequential else args.threads)
    return run(m, args.out_dir, base_dir=base_dir)


if __name__ == "__main__":
    sys.exit(main())
