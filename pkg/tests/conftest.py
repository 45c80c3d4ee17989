import numpy as np
import pytest

from brokenflow import close_under_intersection


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion."""
    try:
        import test_acceptance
    except ImportError:
        return
    if not test_acceptance.RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number, title, status in sorted(test_acceptance.RESULTS):
        terminalreporter.write_line(
            f"criterion {number:2d}: {status}  {title}")


@pytest.fixture(scope="session")
def equator_lattice():
    """S^2 with one great circle (the xy-plane trace)."""
    return close_under_intersection([("xy", [[1, 0, 0], [0, 1, 0]])])


@pytest.fixture(scope="session")
def figure1_lattice():
    """S^2 with two great circles through the common pair +-e1."""
    return close_under_intersection([
        ("xy", [[1, 0, 0], [0, 1, 0]]),
        ("xz", [[1, 0, 0], [0, 0, 1]]),
    ])


@pytest.fixture(scope="session")
def trivial_lattice_3():
    return close_under_intersection([], ambient_dim=3)


@pytest.fixture(scope="session")
def plane_lattice_4():
    """S^3 with one 2-plane face (codimension 2)."""
    return close_under_intersection([("P", [[1, 0, 0, 0], [0, 1, 0, 0]])],
                                    ambient_dim=4)


def random_unit(rng, n):
    w = rng.normal(size=n)
    return w / np.linalg.norm(w)


def random_tangent(rng, p):
    u = rng.normal(size=p.shape[0])
    u = u - (p @ u) * p
    return u / np.linalg.norm(u)
