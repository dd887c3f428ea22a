import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from privdist.matrix import SeededRng

settings.register_profile("privdist", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("privdist")


@pytest.fixture
def rng():
    return SeededRng(12345)


def naive_matmul(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            acc = 0.0
            for p in range(a.shape[1]):
                acc += a[i, p] * b[p, j]
            out[i, j] = acc
    return out


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(rep, "user_properties", ()))
            if rep.when == "call" and "criterion" in props:
                lines.append((props["criterion"], outcome, props.get("detail", "")))
    if lines:
        terminalreporter.section("acceptance criteria")
        for name, outcome, detail in sorted(lines):
            terminalreporter.write_line(f"criterion {name}: {'PASS' if outcome == 'passed' else 'FAIL'}  {detail}")
