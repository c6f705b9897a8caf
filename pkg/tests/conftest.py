import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from edca.analyzer import analyze
from edca.dataset import SyntheticSpec, generate_synthetic, split_holdout

settings.register_profile("edca", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("edca")


@pytest.fixture(scope="session")
def desk_data():
    """The criterion-5 fixture: 600 rows, informative + noise numerics, mixed kinds."""
    return generate_synthetic(SyntheticSpec(n_noise=4), seed=0)


@pytest.fixture(scope="session")
def small_data():
    return generate_synthetic(SyntheticSpec(n_rows=160, n_numerical=3, n_noise=1,
                                            n_categorical=2, n_levels=4), seed=3)


@pytest.fixture(scope="session")
def small_split(small_data):
    sp = split_holdout(small_data, 0.25, seed=0)
    train, val = small_data.take(sp.train_indices), small_data.take(sp.val_indices)
    return train, val, analyze(train)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, in criterion order."""
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(rep, "user_properties", ()))
            if "criterion" in props and rep.when == "call":
                n, title = props["criterion"]
                detail = props.get("detail", "")
                lines.append((n, f"{'PASS' if outcome == 'passed' else 'FAIL'} criterion {n}: "
                                 f"{title}{' | ' + detail if detail else ''}"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
