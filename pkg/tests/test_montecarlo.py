import functools
import math

import numpy as np
import pytest

from eipsim import analytics, montecarlo as mc, protocols as P
from eipsim.core import ProductEnsemble


def _eip2(c, rng):
    return P.eip_lambda_run(c, 2, None, rng)


def test_determinism_and_chunk_independence():
    e = ProductEnsemble.rank3(8, 0.9)
    a = mc.run_batch(_eip2, e, 3000, seed=7, chunk=512).summary()
    b = mc.run_batch(_eip2, e, 3000, seed=7, chunk=512, deterministic=True).summary()
    c = mc.run_batch(_eip2, e, 3000, seed=8, chunk=512).summary()
    assert a == b
    assert a != c


def test_worker_count_cap(monkeypatch):
    monkeypatch.setenv("EIPSIM_THREADS", "2")
    assert mc.worker_count(8) == 2
    monkeypatch.delenv("EIPSIM_THREADS")
    assert mc.worker_count(None) == 1


def test_parallel_matches_serial():
    e = ProductEnsemble.rank3(6, 0.9)
    a = mc.run_batch(_eip2, e, 2000, seed=1, chunk=500, workers=1).summary()
    b = mc.run_batch(_eip2, e, 2000, seed=1, chunk=500, workers=2).summary()
    assert a == b


def test_empty_batch():
    r = mc.run_batch(_eip2, ProductEnsemble.rank3(4, 0.9), 0, seed=0)
    assert r.trials == 0 and math.isnan(r.summary()["yield"])
    with pytest.raises(ValueError):
        mc.run_batch(_eip2, ProductEnsemble.rank3(4, 0.9), -1, seed=0)


def test_global_fidelity_statistic():
    n, F = 8, 0.9
    r = mc.run_batch(_eip2, ProductEnsemble.rank3(n, F), 20000, seed=3, deterministic=True)
    s = r.summary()
    want = analytics.global_fidelity_lambda(n, F, 2)
    frac = np.mean(r.correct)
    se = math.sqrt(want * (1 - want) / r.trials)
    assert abs(frac - want) < 4 * se
    assert s["F_global"] >= 0 and s["abort_rate"] == 0.0


def test_branch_local_fidelity():
    r = mc.run_batch(_eip2, ProductEnsemble.rank3(8, 0.9), 20000, seed=2, deterministic=True)
    mean, se, cnt = r.branch_local_fidelity("one01")
    exact = analytics.local_fidelity_exact(8, 0.9, 2, "one01")
    assert cnt > 100 and abs(mean - exact) < 4 * se


def test_chunk_rng_keys():
    a = mc.chunk_rng(1, 0, 0).random()
    assert a == mc.chunk_rng(1, 0, 0).random()
    assert a != mc.chunk_rng(1, 1, 0).random()
    assert a != mc.chunk_rng(1, 0, 1).random()


def test_runs_with_partial_params():
    run = functools.partial(P.eip_damp_run, params=P.ProtocolParams(k_max=2))
    r = mc.run_batch(lambda c, g: run(c, rng=g), ProductEnsemble.damped(8, 0.8), 2000, seed=4)
    assert 0 < r.summary()["abort_rate"] < 1
