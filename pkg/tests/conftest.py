import numpy as np
import pytest
from scipy.linalg import expm


def random_state(nq, rng):
    v = rng.normal(size=1 << nq) + 1j * rng.normal(size=1 << nq)
    return v / np.linalg.norm(v)


def transition_generator(nq, src_bits, dst_bits):
    """Dense ``|dst><src| - |src><dst|`` where the patterns fix some qubits and leave the rest alone."""
    dim = 1 << nq
    g = np.zeros((dim, dim))
    for i in range(dim):
        if all((i >> q) & 1 == v for q, v in src_bits.items()):
            j = i
            for q, v in dst_bits.items():
                j = (j & ~(1 << q)) | (v << q)
            g[j, i] += 1.0
            g[i, j] -= 1.0
    return g


def dense_gate(nq, src_bits, dst_bits, beta):
    return expm(beta * transition_generator(nq, src_bits, dst_bits))


def z_diag(nq, q):
    idx = np.arange(1 << nq)
    return 1.0 - 2.0 * ((idx >> q) & 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
