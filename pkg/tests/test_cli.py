import csv
import io
import json
import math
import subprocess
import sys

import pytest
import yaml
from hypothesis import given, settings, strategies as st

from besovlab.cli import (COMMANDS, EXIT_IO, EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, ExperimentManifest,
                          ManifestError, default_manifest, main, parse_manifest, validate)
from besovlab.constructions import tent
from besovlab.grid import Domain, sample, save_grid_function


def _write(tmp_path, m: ExperimentManifest, name="m.yaml"):
    p = tmp_path / name
    p.write_text(m.to_text())
    return str(p)


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@settings(max_examples=40, deadline=None)
@given(cmd=st.sampled_from(COMMANDS), seed=st.integers(0, 2 ** 64 - 1),
       s=st.floats(0.01, 0.99), q=st.one_of(st.floats(1.0, 64.0), st.just(math.inf)),
       N=st.integers(8, 4096), L=st.floats(0.5, 100.0))
def test_manifest_text_round_trip(cmd, seed, s, q, N, L):
    m = default_manifest(cmd, seed)
    m.params = {"s": s, "q": q, "n": 2}
    m.domain = {"side_length": L, "resolution": N}
    back = parse_manifest(m.to_text())
    assert back == m


@pytest.mark.parametrize("cmd", COMMANDS)
def test_default_manifests_validate(cmd):
    assert validate(default_manifest(cmd)) == []


def test_validation_diagnostics():
    m = default_manifest("capacity")
    m.params = {"s": 1.5, "q": 2.0}
    assert any(d.startswith("params.s:") and "s out of (0,1)" in d for d in validate(m))
    m.params = {"s": 0.5, "q": 0.5}
    assert any(d.startswith("params.q:") and "convex solver requires q ≥ 1" in d for d in validate(m))
    n = default_manifest("norm")
    n.spec["function"] = {"kind": "tent", "radius": 1.5}
    assert any(d.startswith("spec.function.radius:") and "tail-correction precondition" in d for d in validate(n))
    n = default_manifest("norm")
    n.spec["bogus"] = 1
    n.domain = {"side_length": 4.0, "resolution": 4}
    ds = validate(n)
    assert "spec.bogus: unknown key for norm" in ds
    assert any(d.startswith("domain.resolution:") for d in ds)


def test_parse_rejections():
    with pytest.raises(ManifestError, match="seed"):
        parse_manifest("command: norm\n")
    with pytest.raises(ManifestError, match="unknown top-level key"):
        parse_manifest("command: norm\nseed: 0\nextra: 1\n")
    with pytest.raises(ManifestError):
        parse_manifest("- a\n- b\n")


def test_print_manifest(capsys):
    assert main(["norm", "--print-manifest", "--seed", "7"]) == EXIT_OK
    d = yaml.safe_load(capsys.readouterr().out)
    assert d["seed"] == 7 and d["command"] == "norm"


def test_validate_command(tmp_path, capsys):
    m = default_manifest("norm")
    assert main(["validate", "--manifest", _write(tmp_path, m)]) == EXIT_OK
    m.params = {"s": 2.0, "q": 2.0}
    assert main(["validate", "--manifest", _write(tmp_path, m)]) == EXIT_VALIDATION
    assert "params.s" in capsys.readouterr().out


def test_exit_codes(tmp_path):
    assert main(["norm", "--manifest", str(tmp_path / "missing.yaml")]) == EXIT_IO
    m = default_manifest("norm")
    m.params = {"s": 0.5, "q": -1.0}
    assert main(["norm", "--manifest", _write(tmp_path, m), "--out-dir", str(tmp_path)]) == EXIT_VALIDATION
    assert main(["capacity", "--manifest", _write(tmp_path, default_manifest("norm"))]) == EXIT_VALIDATION
    c = default_manifest("capacity")
    c.domain = {"side_length": 4.0, "resolution": 16}
    c.spec["solver"] = {"max_iters": 2}
    c.spec["samples_per_level"] = 32
    assert main(["capacity", "--manifest", _write(tmp_path, c), "--out-dir", str(tmp_path)]) == EXIT_NUMERICAL
    assert _rows(tmp_path / "capacity.csv")[0]["converged"] == "False"


def test_norm_smoke(tmp_path):
    m = default_manifest("norm", 3)
    m.domain = {"side_length": 4.0, "resolution": 32}
    m.params = {"s": 0.5, "q": 4.0}
    assert main(["norm", "--manifest", _write(tmp_path, m), "--out-dir", str(tmp_path), "--sequential"]) == EXIT_OK
    raw = (tmp_path / "norm.csv").read_bytes()
    assert raw.count(b"\r\n") == 2
    (row,) = _rows(tmp_path / "norm.csv")
    assert row["function"] == "tent" and row["seed"] == "3"
    for k in ("difference", "cp", "hajlasz"):
        assert float(row[k]) > 0
    tr = json.loads((tmp_path / "norm_trace.json").read_text())
    assert tr["difference"]["value"] == pytest.approx(float(row["difference"]), rel=1e-15)


def test_norm_from_grid_file_and_determinism(tmp_path):
    dom = Domain(4.0, 32)
    save_grid_function(sample(tent((0.0, 0.0), 1.0), dom, 1.0), str(tmp_path / "f.bsvg"))
    m = default_manifest("norm", 1)
    m.domain = {"side_length": 4.0, "resolution": 32}
    m.spec["function"] = {"kind": "grid", "path": "f.bsvg"}
    m.spec["estimators"] = ["difference"]
    path = _write(tmp_path, m)
    outs = []
    for d in ("a", "b"):
        assert main(["norm", "--manifest", path, "--out-dir", str(tmp_path / d), "--sequential"]) == EXIT_OK
        outs.append((tmp_path / d / "norm.csv").read_bytes())
    assert outs[0] == outs[1]
    assert _rows(tmp_path / "a" / "norm.csv")[0]["function"] == "f.bsvg"


def test_dichotomy_json(tmp_path):
    m = default_manifest("dichotomy")
    m.spec.update(levels=[1, 2, 3], qs=[4.0])
    m.params = {"s": 0.5, "q": 4.0}
    assert main(["dichotomy", "--manifest", _write(tmp_path, m), "--out-dir", str(tmp_path)]) == EXIT_OK
    d = json.loads((tmp_path / "dichotomy.json").read_text())
    assert abs(d["slopes"]["4.0"]["growth"]) < 0.1
    assert len(_rows(tmp_path / "dichotomy.csv")) == 6


def test_psi_profile(tmp_path):
    m = default_manifest("psi-profile")
    m.domain = {"side_length": 4.0, "resolution": 64}
    m.spec["ratios"] = [2.0, 8.0]
    assert main(["psi-profile", "--manifest", _write(tmp_path, m), "--out-dir", str(tmp_path)]) == EXIT_OK
    rows = _rows(tmp_path / "psi_profile.csv")
    assert [r["ratio"] for r in rows] == ["2", "8"]
    assert float(rows[0]["norm"]) > float(rows[1]["norm"])
    for r in rows:
        assert float(r["norm"]) <= float(r["bound"])


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "besovlab.cli", "qc-check", "--print-manifest"],
                         capture_output=True, text=True, check=True)
    assert yaml.safe_load(out.stdout)["command"] == "qc-check"
