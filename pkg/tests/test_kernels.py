import json
import os
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from b2uh import kernels
from b2uh._accel import USE_NUMBA, backend_name
from b2uh.analytics import b2uh_success
from b2uh.grouping import Candidates

needs_numba = pytest.mark.skipif(not USE_NUMBA, reason="numba disabled")


def py(fn):
    return getattr(fn, "py_func", fn)


@needs_numba
def test_pbft_compiled_matches_python():
    rng = np.random.default_rng(0)
    for _ in range(300):
        n = int(rng.integers(1, 30))
        mask = rng.random(n) < rng.uniform(0, 0.7)
        primary = int(rng.integers(n))
        a = kernels.pbft_round(mask, primary, True)
        b = py(kernels.pbft_round)(mask, primary, True)
        assert a[:4] == b[:4]
        assert np.array_equal(a[4], b[4]) and np.array_equal(a[5], b[5])


def test_pbft_events_consistent_with_count():
    mask = np.array([False, True, False, False, False, False, True])
    ok, p, rot, sent, committed, ev = kernels.pbft_round(mask, 1, True)
    assert ok and p == 2 and rot == 1
    assert len(ev) == sent
    silent = kernels.pbft_round(mask, 1, False)
    assert silent[3] == sent and len(silent[5]) == 0
    # crashed members never send
    assert not set(ev[:, 1].tolist()) & {1, 6}


@pytest.mark.parametrize("radius", [5.0, 50.0, 150.0])
def test_neighbor_backends_agree(radius):
    rng = np.random.default_rng(int(radius))
    pos = rng.uniform(0, 800, size=(700, 2))
    pos[:20] = pos[0]  # coincident points
    ref = kernels.neighbor_counts_bruteforce(pos, radius)
    assert kernels.neighbor_counts(pos, radius, use_numba=False).tolist() == ref.tolist()
    assert kernels.neighbor_counts(pos, radius).tolist() == ref.tolist()


def test_neighbor_edge_cases():
    assert kernels.neighbor_counts(np.zeros((0, 2)), 1.0).tolist() == []
    assert kernels.neighbor_counts(np.array([[0.0, 0.0], [3.0, 4.0]]), 5.0).tolist() == [1, 1]
    with pytest.raises(ValueError):
        kernels.neighbor_counts(np.zeros((2, 2)), 0.0)


@needs_numba
def test_defer_kernel_compiled_matches_python():
    rng = np.random.default_rng(3)
    for _ in range(100):
        nv, nf, y = int(rng.integers(1, 30)), int(rng.integers(1, 6)), int(rng.integers(1, 6))
        beta = np.round(rng.random((nv, nf)), 1)
        c = Candidates.from_dense(beta)
        ids = rng.permutation(nv).astype(np.int64)
        elig = c.eligible(float(rng.choice([0.3, 0.7, 1.1])))
        a = kernels.defer_accept_kernel(c.ptr, c.fogs, c.betas, elig, ids, y, nf)
        b = py(kernels.defer_accept_kernel)(c.ptr, c.fogs, c.betas, elig, ids, y, nf)
        assert a.tolist() == b.tolist()


@pytest.mark.parametrize("loop", [False, True])
def test_monte_carlo_samplers_agree_with_closed_form(loop):
    trials = 200_000
    p = b2uh_success(12, 4, 0.2)
    wins = kernels.mc_b2uh_successes(12, 4, 0.2, trials, 11, loop=loop)
    assert abs(wins / trials - p) <= 3 * np.sqrt(p * (1 - p) / trials)
    assert wins == kernels.mc_b2uh_successes(12, 4, 0.2, trials, 11, loop=loop)


def test_fallback_backend_in_subprocess():
    code = textwrap.dedent("""
        import json
        import numpy as np
        from b2uh import kernels
        from b2uh._accel import backend_name
        from b2uh.grouping import group_vehicles, GroupingWeights, VehicleSnapshot
        rng = np.random.default_rng(0)
        snaps = [VehicleSnapshot(i, float(rng.uniform(0, 1500)), float(rng.uniform(0, 1200)),
                                 float(rng.uniform(8, 22)), float(rng.uniform(500, 3000))) for i in range(360)]
        plan = group_vehicles(snaps, GroupingWeights(), 150.0)
        out = {
            "backend": backend_name(),
            "jit_type": type(kernels.pbft_round).__name__,
            "plan": plan.to_dict(),
            "pbft": [int(v) for v in kernels.pbft_round(np.array([0, 1, 0, 0], bool), 1, False)[:4]],
        }
        print(json.dumps(out, sort_keys=True))
    """)

    def run(flag):
        env = dict(os.environ)
        env.pop("B2UH_NO_JIT", None)
        if flag:
            env["B2UH_NO_JIT"] = "1"
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        return json.loads(res.stdout)

    off = run(True)
    assert off["backend"] == "numpy" and off["jit_type"] == "function"
    on = run(False)
    assert on["plan"] == off["plan"]
    assert on["pbft"] == off["pbft"]
    if USE_NUMBA:
        assert on["backend"] == "numba"
    assert backend_name() in ("numba", "numpy")
