import pytest

from eolsec import DemandProfile, build_state_space


@pytest.fixture(scope="session")
def profile7():
    """The small worked example: 7 slots, two classes of 3 and 4 slots."""
    return DemandProfile(7, (3, 4), (1.0, 1.0), (1.0, 1.0))


@pytest.fixture(scope="session")
def space7(profile7):
    return build_state_space(profile7)


@pytest.fixture(scope="session")
def profile14():
    """Three classes on 14 slots, used by the window-counting fixtures."""
    return DemandProfile(14, (2, 3, 4), (1.0, 1.0, 1.0), (1.0, 1.0, 1.0))
