import numpy as np
import pytest

from opcalc.linalg import BlockOperator

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE = {}


def random_hermitian(rng, d):
    X = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return 0.5 * (X + X.conj().T)


def random_operator(rng, dims=(3, 2), weights=(1.0, 1 / 3), hermitian=True):
    blocks = [random_hermitian(rng, d) if hermitian else rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
              for d in dims]
    return BlockOperator(tuple(blocks), tuple(weights), hermitian_flag=hermitian)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {k:2d}: {detail}")
