import json

import pytest

from besovlab.suites import SUITE_NAMES, run_suites


def test_small_suites_pass_and_serialise():
    res = run_suites(["dyadic_disjoint", "equal_stack", "anisotropy"], seed=0,
                     options={"dyadic_disjoint": {"qs": (4.0,), "Js": (3,), "draws": 1},
                              "equal_stack": {"qs": (4.0,), "ms": (1, 2)},
                              "anisotropy": {"N": 256}})
    assert [r.name for r in res] == ["dyadic_disjoint", "equal_stack", "anisotropy"]
    for r in res:
        assert r.passed, r.summary
        json.dumps(r.to_dict())


def test_unknown_suite():
    with pytest.raises(KeyError):
        run_suites(["nope"])
    assert len(SUITE_NAMES) == 6
