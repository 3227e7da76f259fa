"""The 13 acceptance criteria, one test each.

Runs for about 11 minutes. Each test prints its one-line PASS/FAIL verdict;
``python tests/test_acceptance.py [OUT_DIR]`` runs the suite without pytest.
"""
import sys

import pytest

from orbitstat.acceptance import CRITERIA, Context, run_acceptance, run_criterion


@pytest.fixture(scope="module")
def ctx(tmp_path_factory):
    return Context(tmp_path_factory.mktemp("acceptance"), seed=0, workers=1)


@pytest.mark.parametrize("number", [c[0] for c in CRITERIA], ids=[f"c{c[0]:02d}-{c[1]}" for c in CRITERIA])
def test_criterion(ctx, number, capsys):
    result = run_criterion(number, ctx)
    with capsys.disabled():
        print("\n" + result.line)
    assert result.passed, result.line


if __name__ == "__main__":
    results = run_acceptance(sys.argv[1] if len(sys.argv) > 1 else "acceptance-run")
    sys.exit(0 if all(r.passed for r in results) else 1)
