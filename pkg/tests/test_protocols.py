import itertools
import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from eipsim import analytics, protocols as P
from eipsim.core import Configuration, GhzPairState, PairState, PreconditionViolated
from eipsim.noise import AuxPoolSpec
from eipsim.protocols import AbortPolicy, ProtocolParams, RunContext


def ctx_for(c, **kw):
    c = Configuration(c) if not isinstance(c, Configuration) else c
    return RunContext(c.signal(), ProtocolParams(**kw), np.random.default_rng(0), c.states)


# -- damped protocol --------------------------------------------------------


def test_damp_all_target():
    r = P.eip_damp_run(Configuration.from_errors(8))
    assert r.kept == frozenset(range(1, 9)) and not r.discarded
    assert r.resources_ebits == pytest.approx(math.log2(9))
    assert r.branch == "k=0"


def test_damp_single_error():
    r = P.eip_damp_run(Configuration.from_errors(8, err01=[5]))
    assert r.discarded == {5}
    assert r.resources_ebits == pytest.approx(math.log2(9) + math.log2(8))


def test_damp_three_errors_match_resource_ledger():
    n, a = 16, 2
    params = ProtocolParams(k_max=5, a=a)
    costs = []
    for pos in itertools.combinations(range(1, n + 1), 3):
        r = P.eip_damp_run(Configuration.from_errors(n, err01=pos), params)
        assert r.discarded == set(pos)
        costs.append(r.resources_ebits - math.log2(n + 1))
    assert np.mean(costs) == pytest.approx(analytics.resources_damp(n, 3, a), abs=1e-9)


def test_damp_rejects_other_errors():
    with pytest.raises(PreconditionViolated):
        P.eip_damp_run(Configuration.from_errors(4, err10=[1]))


def test_damp_threshold_abort():
    r = P.eip_damp_run(Configuration.from_errors(6, err01=[1, 2, 3]), ProtocolParams(k_max=2))
    assert r.aborted and r.abort_reason == "threshold" and not r.kept


@pytest.mark.parametrize("n", [5, 6])
def test_damp_exhaustive_small(n):
    for bits in itertools.product((0, 1), repeat=n):
        r = P.eip_damp_run(Configuration(bits))
        assert not r.aborted and r.all_correct


# -- locate routines --------------------------------------------------------


def test_locate_one_examples():
    c = Configuration.from_errors(8, err10=[3])
    ctx = ctx_for(c)
    assert P.locate_one(ctx, range(1, 9), -1) == 3
    assert ctx.transcript[-1].index == 5 and ctx.transcript[-1].d == 8
    c = Configuration.from_errors(8, err01=[3])
    assert P.locate_one(ctx_for(c), range(1, 9), 1) == 3


def test_locate_one_power_of_two_inconsistent(monkeypatch):
    c = Configuration.from_errors(6, err01=[2])
    ctx = ctx_for(c, aux_dims_power_of_two_only=True, abort_policy=AbortPolicy.ON_INCONSISTENCY)
    monkeypatch.setattr(ctx, "measure", lambda *a, **k: (7, 8))
    with pytest.raises(P._Abort, match="inconsistent-locate"):
        P.locate_one(ctx, range(1, 7), 1)
    # the default policy falls back instead of aborting
    ctx = ctx_for(c, aux_dims_power_of_two_only=True)
    monkeypatch.setattr(ctx, "measure", lambda *a, **k: (7, 8))
    assert P.locate_one(ctx, range(1, 7), 1) in range(1, 7)


def test_locate_two_identical_examples():
    ctx = ctx_for(Configuration.from_errors(8, err01=[2, 5]))
    assert sorted(P.locate_two_identical(ctx, range(1, 9), 1)) == [2, 5]
    assert ctx.transcript[0].d == 13 and ctx.transcript[1].d == 3
    ctx = ctx_for(Configuration.from_errors(8, err01=[1, 2]))
    assert sorted(P.locate_two_identical(ctx, range(1, 9), 1)) == [1, 2]
    assert len(ctx.transcript) == 1


@pytest.mark.parametrize("n", [2, 3, 5, 8, 11])
def test_locate_two_identical_exhaustive(n):
    for kind, code in ((1, PairState.ERR01), (-1, PairState.ERR10)):
        for pos in itertools.combinations(range(1, n + 1), 2):
            c = Configuration.from_errors(n, **{("err01" if kind > 0 else "err10"): pos})
            assert sorted(P.locate_two_identical(ctx_for(c), range(1, n + 1), kind)) == list(pos)


def test_identical_mean_resources_n8():
    n = 8
    tot = []
    for pos in itertools.combinations(range(1, n + 1), 2):
        ctx = ctx_for(Configuration.from_errors(n, err01=pos))
        P.locate_two_identical(ctx, range(1, n + 1), 1)
        tot.append(ctx.resources)
    want = math.log2(2 * n - 3) + analytics.expected_log_subensemble(n)
    assert np.mean(tot) == pytest.approx(want)


@pytest.mark.parametrize("n", [2, 3, 4, 7, 10])
def test_locate_two_different_exhaustive(n):
    for r, t in itertools.permutations(range(1, n + 1), 2):
        c = Configuration.from_errors(n, err01=[r], err10=[t])
        assert P.locate_two_different(ctx_for(c), list(range(1, n + 1))) == (r, t)
    assert P.locate_two_different(ctx_for(Configuration.from_errors(n)),
                                  list(range(1, n + 1))) is None


@pytest.mark.parametrize("n,k,a", [(9, 3, 2), (12, 4, 3), (10, 5, 2)])
def test_locate_general_k(n, k, a):
    rng = np.random.default_rng(n)
    for _ in range(200):
        pos = sorted(rng.choice(np.arange(1, n + 1), k, replace=False).tolist())
        ctx = ctx_for(Configuration.from_errors(n, err01=pos), a=a)
        assert sorted(P.locate_general_k(ctx, range(1, n + 1), k, 1)) == pos


# -- EIP(lambda) ------------------------------------------------------------


@pytest.mark.parametrize("lam", [1, 2])
@pytest.mark.parametrize("n", [1, 2, 5, 8])
def test_eip_sound_within_assumption(lam, n):
    for cfg in itertools.product(range(3), repeat=n):
        if sum(x > 0 for x in cfg) > lam:
            continue
        r = P.eip_lambda_run(Configuration(cfg), lam)
        assert r.all_correct and not r.aborted


def test_eip_keeps_phase_errors():
    r = P.eip_lambda_run(Configuration.from_string(".p+.."), 2)
    assert r.discarded == {3} and 2 in r.kept
    assert r.local_fidelity == pytest.approx(3 / 4)
    assert r.global_fidelity == 0.0


def test_eip2_n2_always_pure():
    for cfg in itertools.product(range(3), repeat=2):
        r = P.eip_lambda_run(Configuration(cfg), 2)
        assert r.local_fidelity in (None, 1.0)


@pytest.mark.parametrize("n", [6, 9])
def test_decoder_agrees_with_runs(n):
    for lam in (1, 2):
        cfgs = np.array(list(itertools.product(range(3), repeat=n)), dtype=np.int8)
        disc, branch, ebits = analytics.decode_eip(cfgs, lam)
        for i in range(0, len(cfgs), 37):
            r = P.eip_lambda_run(Configuration(cfgs[i]), lam)
            assert set(np.flatnonzero(disc[i]) + 1) == set(r.discarded)
            assert analytics.BRANCHES[branch[i]] == r.branch
            assert ebits[i] == pytest.approx(r.resources_ebits)


@pytest.mark.parametrize("lam", [3, 4])
def test_general_lambda_mostly_sound(lam):
    rng = np.random.default_rng(lam)
    n, misses, runs = 12, 0, 300
    for _ in range(runs):
        k = rng.integers(0, lam + 1)
        pos = rng.choice(n, k, replace=False)
        cfg = np.zeros(n, dtype=np.int8)
        cfg[pos] = rng.integers(1, 3, size=k)
        r = P.eip_lambda_run(Configuration(cfg), lam, rng=rng)
        misses += not r.all_correct
    # random re-splits miss a hidden 01/10 couple with probability ~2^-10
    assert misses <= 2


def test_split_tries():
    assert ProtocolParams().split_tries == 25
    assert ProtocolParams(split_confidence_bits=1).split_tries == 3


# -- aEIP(3) ----------------------------------------------------------------


@pytest.mark.parametrize("n", [3, 5, 7])
def test_aeip3_aborts_exactly_on_three(n):
    for cfg in itertools.product(range(3), repeat=n):
        k = sum(x > 0 for x in cfg)
        if k > 3:
            continue
        r = P.aeip3_run(Configuration(cfg))
        assert r.aborted == (k == 3), cfg
        if not r.aborted:
            assert r.all_correct


def test_aeip3_verify_branch():
    r = P.aeip3_run(Configuration.from_string("++-...."))
    assert r.aborted and r.abort_reason == "verify"
    r = P.aeip3_run(Configuration.from_string("+++...."))
    assert r.aborted and r.abort_reason == "three"
    r = P.aeip3_run(Configuration.from_string("..+...."))
    assert r.discarded == {3} and r.branch == "one01"


def test_aeip3_any_error_policy():
    params = ProtocolParams(abort_policy=AbortPolicy.ON_ANY_ERROR)
    assert P.aeip3_run(Configuration.from_string("+-...."), params).aborted
    r = P.aeip3_run(Configuration.from_string("..p..."), params)
    assert not r.aborted and r.m == 6


# -- full rank, blocking, halving -------------------------------------------


def test_full_rank_fixes_single_phase_error():
    rng = np.random.default_rng(4)
    for _ in range(50):
        r = P.full_rank_run(Configuration.from_string("..p.+..."), 2, rng=rng)
        assert r.all_correct
        assert r.final[2] in (PairState.ERR01, PairState.ERR10)
    with pytest.raises(PreconditionViolated):
        P.full_rank_run(Configuration.from_string("...."), 2)


def test_blocking_aggregates():
    c = Configuration.from_string("+......-..+")
    r = P.blocking_run(c, 4, lambda s, g: P.eip_lambda_run(s, 1, None, g))
    assert r.discarded == {1, 8, 11}
    assert r.all_correct and r.n == 11
    per = [P.eip_lambda_run(Configuration(c.states[i:i + 4]), 1).resources_ebits
           for i in range(0, 11, 4)]
    assert r.resources_ebits == pytest.approx(sum(per))


def test_blocking_all_aborted():
    c = Configuration.from_string("+++" * 2)
    r = P.blocking_run(c, 3, lambda s, g: P.aeip3_run(s, None, g))
    assert r.aborted and r.abort_reason == "all-blocks"


def test_alt_two_locates_both():
    n = 8
    for pos in itertools.combinations(range(1, n + 1), 2):
        r = P.locate_two_alt_run(Configuration.from_errors(n, err01=pos))
        assert set(pos) <= r.discarded
        assert r.all_correct or all(r.truth_check[p] for p in r.kept)


# -- noise ------------------------------------------------------------------


def test_gate_noise_counting_models():
    ctx = ctx_for(Configuration.from_errors(4), noisy_gate_q=0.9)
    assert ctx._apps(np.array([1, 2, 0, 3])) == 3
    ctx = ctx_for(Configuration.from_errors(4), noisy_gate_q=0.9, gate_noise_per_power=True)
    assert ctx._apps(np.array([1, 2, 0, 3])) == 6


def test_fully_noisy_aux_is_uniform():
    rng = np.random.default_rng(1)
    params = ProtocolParams(aux_pool=AuxPoolSpec.amplitude(0.0))
    idx = [P.eip_lambda_run(Configuration.from_errors(6), 2, params, rng).transcript[0].index
           for _ in range(3000)]
    assert np.bincount(idx, minlength=5) / 3000 == pytest.approx([0.2] * 5, abs=0.03)


def test_isotropic_aux_decoheres_targets():
    params = ProtocolParams(aux_pool=AuxPoolSpec.isotropic(0.0), lam=1)
    r = P.eip_lambda_run(Configuration.from_string("..+."), 1, params, np.random.default_rng(0))
    assert PairState.MIXED in set(r.final.tolist())
    assert r.local_fidelity <= 0.5


def test_params_validation():
    for bad in [dict(lam=-1), dict(a=1), dict(noisy_gate_q=1.5), dict(k_max=-2)]:
        with pytest.raises(PreconditionViolated):
            ProtocolParams(**bad)
    assert ProtocolParams().replace(lam=3).lam == 3


# -- GHZ --------------------------------------------------------------------


@pytest.mark.parametrize("lam", [1, 2])
def test_ghz_single_separable(lam):
    n = 5
    for pos in range(1, n + 1):
        for x in range(1, 7):
            cfg = [0] * n
            cfg[pos - 1] = x
            r = P.ghz_purify(cfg, lam, rng=np.random.default_rng(0))
            assert r.discarded == {pos} and r.all_correct


def test_ghz_phase_errors_per_group():
    rng = np.random.default_rng(3)
    cfg = [7, 0, 0, 0, 0, 7, 0, 0]
    r = P.ghz_purify(cfg, 1, split_size=4, rng=rng)
    assert r.all_correct and not r.flags
    r = P.ghz_purify(cfg, 1, split_size=None, rng=rng)
    assert "mislocated_phase" in r.flags
    r = P.ghz_purify([1, 2, 0, 0], 1, rng=rng)
    assert "mislocated_separable" in r.flags
    with pytest.raises(PreconditionViolated):
        P.ghz_purify([8], 1)


# -- result invariants ------------------------------------------------------


_RUNNERS = {
    "damp": lambda c, g: P.eip_damp_run(Configuration(np.where(c.states == 1, 1, 0)), None, g),
    "eip1": lambda c, g: P.eip_lambda_run(c, 1, None, g),
    "eip2": lambda c, g: P.eip_lambda_run(c, 2, None, g),
    "eip3": lambda c, g: P.eip_lambda_run(c, 3, None, g),
    "aeip3": lambda c, g: P.aeip3_run(c, None, g),
    "full": lambda c, g: P.full_rank_run(c, 2, None, g),
    "noisy": lambda c, g: P.eip_lambda_run(
        c, 2, ProtocolParams(aux_pool=AuxPoolSpec.embedded(0.9), noisy_gate_q=0.95,
                             abort_policy=AbortPolicy.ON_INCONSISTENCY), g),
}


@settings(max_examples=150, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.lists(st.integers(0, 3), min_size=1, max_size=14),
       st.sampled_from(sorted(_RUNNERS)), st.integers(0, 2 ** 32 - 1))
def test_result_invariants(states, name, seed):
    r = _RUNNERS[name](Configuration(states), np.random.default_rng(seed))
    assert not (r.kept & r.discarded)
    assert r.kept | r.discarded <= set(range(1, r.n + 1))
    if r.aborted:
        assert not r.kept
    assert r.resources_ebits == pytest.approx(sum(math.log2(t.d) for t in r.transcript))
    assert all(0 <= t.index < t.d for t in r.transcript if isinstance(t.index, int))


def test_ghz_states_enum():
    assert GhzPairState.PHASE == 7 and GhzPairState.sep(3).is_separable
