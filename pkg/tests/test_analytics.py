import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eipsim import analytics as A
from eipsim import protocols as P
from eipsim.core import Configuration, PreconditionViolated, TooLarge


def test_error_count_pmf():
    assert A.error_count_pmf(4, 0.9, 2) == pytest.approx(6 * 0.81 * 0.01)
    assert sum(A.error_count_pmf(10, 0.8, k) for k in range(11)) == pytest.approx(1.0)
    with pytest.raises(PreconditionViolated):
        A.error_count_pmf(3, 0.9, 4)


@pytest.mark.parametrize("n,F,lam", [(8, 0.9, 2), (16, 0.95, 1), (32, 0.99, 2)])
def test_global_fidelity_lambda(n, F, lam):
    want = sum(math.comb(n, k) * (1 - F) ** k * F ** (n - k) for k in range(lam + 1))
    assert A.global_fidelity_lambda(n, F, lam) == pytest.approx(want)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 1.0), st.integers(1, 40))
def test_fidelity_bounds_ordered(Fg, m):
    lo, hi = A.fidelity_bounds(Fg, m)
    assert lo <= hi + 1e-15 and hi <= 1.0


@pytest.mark.parametrize("n", [3, 4, 8, 13])
def test_placement_pmfs_match_enumeration(n):
    pairs = list(itertools.combinations(range(1, n + 1), 2))
    d = 2 * n - 3
    counts = np.zeros(d)
    for r, t in pairs:
        counts[(r + t) % d] += 1
    got = [A.two_error_placement_pmf(n, "identical", j) for j in range(d)]
    assert got == pytest.approx(counts / len(pairs))
    d = 2 * n - 1
    counts = np.zeros(d)
    for r, t in itertools.permutations(range(1, n + 1), 2):
        counts[(r - t) % d] += 1
    got = [A.two_error_placement_pmf(n, "different", j) for j in range(d)]
    assert got == pytest.approx(counts / (n * (n - 1)))


def test_log_subensemble_fit():
    dev = max(abs(A.fit_log_subensemble(n) - A.expected_log_subensemble(n))
              for n in range(8, 301))
    assert dev <= 0.01


def test_identical_ratio_near_one():
    ratios = [A.identical_resource_ratio(n) for n in range(3, 200)]
    assert max(ratios) < 1.031
    assert round(max(ratios), 2) <= 1.03
    assert min(ratios) > 0.95


@pytest.mark.parametrize("n", [4, 7, 10])
def test_different_cost_matches_runs(n):
    extra = []
    for r, t in itertools.permutations(range(1, n + 1), 2):
        ctx = P.RunContext(Configuration.from_errors(n, [r], [t]).signal())
        P.locate_two_different(ctx, list(range(1, n + 1)))
        extra.append(ctx.resources - math.log2(2 * n - 1))
    assert np.mean(extra) == pytest.approx(A.different_locate_cost(n))


def test_damp_values():
    assert A.resources_damp(8, 1) == pytest.approx(3.0)
    assert A.resources_damp(8, 0) == 0.0
    assert A.kmax_opt(16) == 4
    assert A.yield_damp(16, 0.95, 4) == pytest.approx(0.5101, abs=1e-4)
    assert A.resources_total_damp(16, 0.95, 4) == pytest.approx(7.028, abs=1e-3)


@pytest.mark.parametrize("n", [6, 9])
def test_damp_resources_match_runs(n):
    for k in range(0, 4):
        costs = [P.eip_damp_run(Configuration.from_errors(n, err01=pos)).resources_ebits
                 for pos in itertools.combinations(range(1, n + 1), k)]
        assert np.mean(costs) - math.log2(n + 1) == pytest.approx(A.resources_damp(n, k))


def test_kmax_opt_is_envelope():
    n, F = 16, 0.95
    best = max(A.yield_damp(n, F, k) for k in range(n + 1))
    assert A.yield_damp(n, F, A.kmax_opt(n)) == pytest.approx(best, abs=0.02)


def test_alt_two_values():
    assert A.yield_alt_two(8) == pytest.approx(0.159, abs=1e-3)
    assert A.yield_bound_known_k(8, 2) == pytest.approx(0.149, abs=1e-3)


@pytest.mark.parametrize("n,F,lam", [(7, 0.9, 1), (9, 0.85, 2), (12, 0.95, 2)])
def test_pj_normalized(n, F, lam):
    d = 2 * lam + 1
    assert sum(A.pj_lambda(n, F, lam, j) for j in range(d)) == pytest.approx(1.0)
    dp = A.joint_index_pmf(n, (1 - F) / 2, (1 - F) / 2, d, 2 * n - 1)
    assert dp.sum(axis=1) == pytest.approx([A.pj_lambda(n, F, lam, j) for j in range(d)])


def test_joint_index_pmf_brute():
    n, p01, p10 = 4, 0.2, 0.1
    dp = A.joint_index_pmf(n, p01, p10, 3, 5)
    brute = np.zeros((3, 5))
    probs = {0: 1 - p01 - p10, 1: p01, -1: p10}
    for ls in itertools.product((0, 1, -1), repeat=n):
        w = math.prod(probs[x] for x in ls)
        brute[sum(ls) % 3, sum((i + 1) * x for i, x in enumerate(ls)) % 5] += w
    assert dp == pytest.approx(brute)


def _brute_local_fidelity(n, F, lam, branch=None):
    q = (1 - F) / 2
    num = den = 0.0
    for cfg in itertools.product(range(3), repeat=n):
        w = math.prod(F if x == 0 else q for x in cfg)
        r = P.eip_lambda_run(Configuration(cfg), lam)
        if branch is not None and r.branch != branch:
            continue
        if r.kept:
            num += w * r.local_fidelity
            den += w
    return num / den


@pytest.mark.parametrize("lam", [1, 2])
def test_local_fidelity_exact_brute(lam):
    n, F = 6, 0.85
    assert A.local_fidelity_exact(n, F, lam) == pytest.approx(_brute_local_fidelity(n, F, lam))
    assert A.local_fidelity_exact(n, F, lam, "one01") == pytest.approx(
        _brute_local_fidelity(n, F, lam, "one01"))


def test_local_fidelity_stratified_close():
    exact = A.local_fidelity_exact(12, 0.9, 2)
    est, se = A.local_fidelity_stratified(12, 0.9, 2, samples=2000, seed=1)
    assert abs(est - exact) <= 5 * se + 1e-6


def test_enumeration_cap():
    with pytest.raises(TooLarge):
        A.enumeration_table(A.ENUM_CAP + 1, 2)


def test_branch_table_probabilities():
    tab = A.branch_table(8, 0.9, 2)
    assert sum(v["prob"] for v in tab.values()) == pytest.approx(1.0)
    assert tab["none"]["F_local"] > tab["pair"]["F_local"]


def test_r_table_variants():
    ex = A.r_table(16, 0.95, 2, "exact")
    fit = A.r_table(16, 0.95, 2, "fit")
    assert ex[1] == pytest.approx(4.0)
    assert abs(ex[2] - fit[2]) < 0.05 and abs(ex[0] - fit[0]) < 0.1
    with pytest.raises(PreconditionViolated):
        A.r_table(8, 0.9, 3)


def test_raw_yield_matches_runs():
    n, F, lam = 5, 0.9, 2
    q = (1 - F) / 2
    want = 0.0
    for cfg in itertools.product(range(3), repeat=n):
        w = math.prod(F if x == 0 else q for x in cfg)
        want += w * P.eip_lambda_run(Configuration(cfg), lam).yield_value
    assert A.yield_raw_eip(n, F, lam) == pytest.approx(want)


def test_entropy_and_yield_eps():
    assert A.entropy_bd([0.9, 0.05, 0.05, 0.0]) == pytest.approx(0.569, abs=1e-3)
    assert A.entropy_bd([1, 0, 0, 0]) == 0.0
    assert A.yield_eps(200, 0.99, 1) > A.yield_eps(50, 0.99, 1)


def test_eip_report():
    rep = A.eip_report(10, 0.95, 2)
    assert sum(rep.branch_probs.values()) == pytest.approx(1.0)
    assert rep.F_global <= rep.F_local <= 1.0


def test_hashing_p1_monotone_in_delta():
    vals = [1 - A.hashing_p1(16, 0.9, d) for d in np.linspace(0, 4.0, 800)]
    assert all(b >= a - 1e-15 for a, b in zip(vals, vals[1:]))
    assert vals[-1] == pytest.approx(1.0)
    fg, y = A.hashing_bound(32, 0.95)
    assert 0 <= fg <= 1 and y < 1


def test_dejmps_sample():
    w, N = A.dejmps_step([0.9, 0.05, 0.05, 0.0])
    assert N == pytest.approx(0.82)
    assert w == pytest.approx([0.98780, 0.00610, 0.0, 0.00610], abs=1e-5)
    rows = A.dejmps_curve(0.8, 3, n=16)
    assert [r["round"] for r in rows] == [0, 1, 2, 3]
    # without a twirl between rounds the fidelity may dip once before converging
    assert rows[-1]["F_local"] > 0.99 > rows[0]["F_local"]
    assert all(b["yield"] < a["yield"] for a, b in zip(rows, rows[1:]))
    with pytest.raises(PreconditionViolated):
        A.dejmps_step([0.5, 0.5, 0.5, 0.0])
