import sys

import numpy as np
import pytest

from irdrop.data import Dataset, NetRecord
from irdrop.graph import build_graph
from irdrop.pipeline import benchmark


def make_record(net_id, x=0.0, y=0.0, label=1.0, **kw):
    base = dict(
        resistance_ohm=2.0, p_total_w=0.1, i_peak_a=0.03, i_avg_a=0.01,
        t_rise_s=1e-11, t_fall_s=2e-11, tau_s=5e-12,
    )
    base.update(kw)
    return NetRecord(net_id=net_id, x_um=x, y_um=y, ir_drop_mv=label, **base)


def random_graph(rng, n, n_features=3, threshold=None, scale=6.0):
    coords = rng.uniform(0, scale, size=(n, 2))
    feats = rng.uniform(0, 1, size=(n, n_features))
    threshold = threshold if threshold is not None else scale / 3
    return build_graph(coords, threshold, features=feats, labels=rng.uniform(0, 5, size=n))


@pytest.fixture(scope="session")
def bench_data():
    return benchmark()


@pytest.fixture
def small_dataset():
    rng = np.random.default_rng(3)
    recs = [make_record(i, *rng.uniform(0, 10, 2), label=float(rng.uniform(1, 9))) for i in range(30)]
    return Dataset(recs)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("tests.test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        status, title, seconds, limit, detail = results[number]
        terminalreporter.write_line(
            f"[{status}] criterion {number:2d}: {title} ({seconds:.2f} s, limit {limit:g} s)"
            + (f" -- {detail}" if detail else "")
        )
