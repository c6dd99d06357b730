import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from jointslu import tensor as T  # noqa: E402
from jointslu.config import TrainConfig  # noqa: E402
from jointslu.corpus import generate_synthetic  # noqa: E402
from jointslu.train import train_until_converged  # noqa: E402

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"
OVERFIT_CORPUS = dict(n_templates=6, n_samples=20, seed=7)


def finite_diff(fn, arrays, eps=1e-6):
    """Central differences of scalar ``fn()`` w.r.t. every entry of ``arrays``."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + eps
            plus = fn()
            arr[idx] = orig - eps
            minus = fn()
            arr[idx] = orig
            g[idx] = (plus - minus) / (2 * eps)
        grads.append(g)
    return grads


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def check_grads():
    """Compare ``grad_of`` against central differences for named leaf tensors."""

    def run(build, leaves, rtol=1e-6, atol=1e-8):
        params = {f"p{i}": leaf for i, leaf in enumerate(leaves)}
        loss = build()
        analytic = T.grad_of(loss, params)

        def value():
            with T.no_grad():
                return build().item()

        numeric = finite_diff(value, [leaf.data for leaf in leaves])
        for i, num in enumerate(numeric):
            np.testing.assert_allclose(analytic[f"p{i}"], num, rtol=rtol, atol=atol)

    return run


def overfit_corpus():
    return generate_synthetic(**OVERFIT_CORPUS)


def overfit_config() -> TrainConfig:
    return TrainConfig.from_json(CONFIG_DIR / "overfit.json")


@pytest.fixture(scope="session")
def overfit():
    """One converged run on the 20-sample synthetic corpus, shared by every
    test that needs a trained toy model. Returns (result, samples, seconds)."""
    import time

    samples = overfit_corpus()
    t0 = time.perf_counter()
    result = train_until_converged(overfit_config(), samples, max_epochs=300, mp_tol=1e-3)
    return result, samples, time.perf_counter() - t0


_CRITERIA = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_CRITERIA] = []


@pytest.fixture
def criterion(request):
    """``criterion(number, title, passed, detail)`` records one acceptance
    line; all lines are printed in the terminal summary. ``passed=None``
    marks a skipped criterion."""

    def record(number: int, title: str, passed: bool | None, detail: str = "") -> bool | None:
        verdict = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
        request.config.stash[_CRITERIA].append((number, f"criterion {number} {verdict}: {title}. {detail}".rstrip()))
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = sorted(config.stash.get(_CRITERIA, []))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in lines:
            terminalreporter.write_line(line)
