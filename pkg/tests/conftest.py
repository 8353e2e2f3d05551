import numpy as np
import pytest

from pertqec.matcore import CodeProjector, ket

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]])
Z = np.diag([1.0, -1.0]).astype(complex)


def repetition_code():
    return CodeProjector.from_vectors([ket(0, 8), ket(7, 8)])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """Record one summary line per acceptance criterion."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, {})

    def record(number, ok, detail):
        lines[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])


def expansion_scenarios(count=20, seed=7):
    """Random order-3 series with a rank-deficient ``rho`` and a different
    ``sigma`` on the same support (dimension at most 6)."""
    from pertqec.matcore import dag, random_complex, random_density
    from pertqec.series import random_series

    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        dim = int(rng.integers(2, 7))
        rank = int(rng.integers(1, dim))
        series = random_series(dim, int(rng.integers(1, 4)), 3, rng)
        basis = np.linalg.qr(random_complex((dim, rank), rng))[0]
        rho = basis @ random_density(rank, rng) @ dag(basis)
        sigma = basis @ random_density(rank, rng) @ dag(basis)
        out.append((series, rho, sigma))
    return out
