"""End-to-end acceptance criteria.

Each test runs one criterion from :mod:`prc.experiments` and records a
``criterion N PASS|FAIL: detail`` line that is printed in the terminal summary.
"""

import pytest

from prc.experiments import criteria, reproducibility

from conftest import ACCEPTANCE_LINES

CRITERIA = {c.number: c for c in criteria()}
_OUTCOMES = {}


def _outcome(number):
    if number not in _OUTCOMES:
        _OUTCOMES[number] = CRITERIA[number].run()
    return _OUTCOMES[number]


def _record(number, title, outcome):
    verdict = "PASS" if outcome.passed else "FAIL"
    line = f"criterion {number} {verdict}: {title}; {outcome.detail} ({outcome.seconds:.1f}s)"
    ACCEPTANCE_LINES[number] = line
    print(line)


@pytest.mark.acceptance
@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    outcome = _outcome(number)
    _record(number, CRITERIA[number].title, outcome)
    assert outcome.passed, outcome.detail


@pytest.mark.acceptance
def test_criterion_11_reproducibility():
    outcome = reproducibility(list(CRITERIA.values()), workers=8)
    _record(11, "reproducibility", outcome)
    assert outcome.passed, outcome.detail
