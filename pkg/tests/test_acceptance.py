"""Release gate: one test per acceptance criterion.

Each criterion is checked by thermalab.acceptance with its tolerance baked
in; here we run the whole battery once and assert each verdict separately so
a red criterion shows up as exactly one failing test with the measured
numbers in the message.

The battery reuses the persistent cache (trajectories, spectrum tables), so
a warm run takes seconds.  From a clean cache the L=14/16 trajectories and
thermal tables are rebuilt, which takes tens of minutes on one core.
"""

import pytest

from thermalab import acceptance

pytestmark = pytest.mark.acceptance


@pytest.fixture(scope="module")
def verdicts():
    # Module fixtures are set up before the per-test cache isolation kicks
    # in, so this sees the real environment and the persistent cache.
    results = acceptance.run_all()
    return {r.number: r for r in results}


@pytest.mark.parametrize(
    "number,name",
    [(num, name) for num, name, _ in acceptance.CRITERIA],
    ids=[f"{num:02d}-{name}" for num, name, _ in acceptance.CRITERIA],
)
def test_criterion(verdicts, number, name):
    result = verdicts[number]
    assert result.name == name
    assert result.passed, f"criterion {number} [{name}]: {result.detail}"


def test_catalog_check_is_fast(verdicts):
    # the state-catalog recomputation has a one-second budget of its own
    assert verdicts[1].elapsed < 1.0, verdicts[1].detail
