import time
from contextlib import contextmanager

import numpy as np
import pytest

from wvar.mixture import TwoLayerMixture

_ACCEPTANCE = []


def random_model(rng, k2=None, k1=None, n_seg=None, zero_weights=False):
    """A random valid two-layer model with daily-return-like scales."""
    k2 = k2 or int(rng.integers(1, 6))
    k1 = k1 or int(rng.integers(1, 4))
    n_seg = n_seg or int(rng.integers(1, 5))
    alpha = rng.dirichlet(np.ones(k1), size=k2)
    beta = rng.dirichlet(np.ones(k2), size=n_seg)
    if zero_weights and k2 > 1:
        beta[0, rng.integers(k2)] = 0.0
        beta[0] /= beta[0].sum()
    mu = rng.normal(0.0, 0.01, size=(k2, k1))
    sigma = np.exp(rng.uniform(np.log(0.002), np.log(0.08), size=(k2, k1)))
    lengths = rng.integers(1, 300, size=n_seg)
    return TwoLayerMixture(alpha, mu, sigma, beta, lengths)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def criterion(request):
    """Time a block and record PASS/FAIL for the acceptance summary."""

    @contextmanager
    def run(name, budget_s=None):
        start = time.perf_counter()
        status = "FAIL"
        detail = ""
        try:
            yield
            elapsed = time.perf_counter() - start
            if budget_s is not None and elapsed > budget_s:
                detail = f"over budget: {elapsed:.1f}s > {budget_s}s"
                raise AssertionError(f"{name}: {detail}")
            status = "PASS"
            detail = f"{elapsed:.2f}s"
        except pytest.skip.Exception as exc:
            status, detail = "SKIP", str(exc)
            raise
        except BaseException as exc:
            detail = detail or str(exc).splitlines()[0][:120]
            raise
        finally:
            _ACCEPTANCE.append((status, name, detail))

    return run


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for status, name, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{status:4s}  {name}  ({detail})")
