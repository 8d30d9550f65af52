"""Closed-form and exact-enumeration evaluation of yields, fidelities and costs.

Everything here is computed without running the protocol state machines.
The EIP(lambda) posterior fidelities come from a separate vectorized
decoder that replays the measurement arithmetic on whole arrays of
configurations at once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import stats

from .core import PreconditionViolated, TooLarge

ENUM_CAP = 14


@dataclass(frozen=True)
class AnalyticsReport:
    """Closed-form summary of one protocol at one parameter point.

    Attributes
    ----------
    Y : float
        Yield in ebits per input pair.
    F_local, F_global : float
        Mean kept-pair fidelity and probability that every kept pair is good.
    R_t : float
        Expected consumed ebits.
    branch_probs : dict
        Probability of every measurement branch.
    branch_F_local : dict
        Posterior local fidelity on every branch with output.
    """

    Y: float
    F_local: float
    F_global: float
    R_t: float
    branch_probs: dict = field(default_factory=dict)
    branch_F_local: dict = field(default_factory=dict)


def _check_F(F: float) -> None:
    if not 0.0 <= F <= 1.0:
        raise PreconditionViolated("F must lie in [0, 1]")


def _log2(x: float) -> float:
    return math.log2(x) if x > 1 else 0.0


# ---------------------------------------------------------------------------
# error counts and fidelity bounds


def error_count_pmf(n: int, F: float, k: int) -> float:
    """Probability of exactly ``k`` errors among ``n`` i.i.d. pairs of fidelity ``F``."""
    _check_F(F)
    if not 0 <= k <= n:
        raise PreconditionViolated("need 0 <= k <= n")
    return float(stats.binom.pmf(k, n, 1.0 - F))


def fidelity_bounds(F_global: float, m: int) -> tuple[float, float]:
    """Interval of local fidelities compatible with a global fidelity on ``m`` pairs."""
    if not 0.0 <= F_global <= 1.0 or m < 1:
        raise PreconditionViolated("need F_global in [0, 1] and m >= 1")
    return F_global, 1.0 - (1.0 - F_global) / m


def global_fidelity_lambda(n: int, F: float, lam: int) -> float:
    """Probability of at most ``lam`` errors, the EIP(lambda) global fidelity."""
    _check_F(F)
    if lam > n:
        raise PreconditionViolated("lam must not exceed n")
    return float(stats.binom.cdf(lam, n, 1.0 - F))


# ---------------------------------------------------------------------------
# two-error placement statistics


def subensemble_size(n: int, s: int) -> int:
    """Candidates for the smaller of two positions in ``1..n`` summing to ``s``."""
    return max(0, (s - 1) // 2 - max(1, s - n) + 1)


def two_error_placement_pmf(n: int, variant: str, j: int) -> float:
    """Probability of measured index ``j`` given exactly two errors.

    ``variant="identical"``: ``j`` lives in ``Z_{2n-3}`` and encodes the sum
    of the two positions. ``variant="different"``: ``j`` lives in
    ``Z_{2n-1}`` and encodes ``r - t`` for the ``01`` error at ``r`` and the
    ``10`` error at ``t``.
    """
    if n < 2:
        raise PreconditionViolated("two errors need n >= 2")
    if variant == "identical":
        d = 2 * n - 3
        if n == 2:
            return 1.0 if j == 0 else 0.0
        if not 0 <= j < d:
            raise PreconditionViolated("index outside Z_{2n-3}")
        s = j if j >= 3 else j + d
        return subensemble_size(n, s) / math.comb(n, 2)
    if variant == "different":
        d = 2 * n - 1
        if not 0 <= j < d:
            raise PreconditionViolated("index outside Z_{2n-1}")
        x = j if j <= n - 1 else j - d
        return 0.0 if x == 0 else (n - abs(x)) / (n * (n - 1))
    raise PreconditionViolated(f"unknown variant {variant!r}")


def expected_log_subensemble(n: int) -> float:
    """Exact mean of ``log2`` of the isolating sub-segment for two identical errors."""
    if n <= 2:
        return 0.0
    tot = math.comb(n, 2)
    return sum(subensemble_size(n, s) / tot * _log2(subensemble_size(n, s))
               for s in range(3, 2 * n))


def fit_log_subensemble(n: int) -> float:
    return 1.449 * math.log(n) - 1.760


def identical_resource_ratio(n: int) -> float:
    """Cost of locating two identical errors over the entropy ``log2 C(n,2)``."""
    if n < 3:
        raise PreconditionViolated("need n >= 3")
    return (math.log2(2 * n - 3) + expected_log_subensemble(n)) / math.log2(math.comb(n, 2))


def different_locate_cost(n: int) -> float:
    """Mean second-stage cost after a nonzero distance for one ``01`` and one ``10``."""
    if n < 2:
        return 0.0
    tot = 0.0
    for D in range(1, n):
        w = 2 * (n - D) / (n * (n - 1))
        tot += w * (_log2(n - D) if 2 * D >= n else math.log2(n))
    return tot


def fit_different_cost(n: int) -> float:
    return 1.077 * math.log(n) + 0.159 if n % 2 else 1.149 * math.log(n) + 0.160


# ---------------------------------------------------------------------------
# damped-noise protocol


@lru_cache(maxsize=None)
def _locate_cost(L: int, k: int, a: int) -> float:
    if k <= 0 or k >= L:
        return 0.0
    if k == 1:
        return _log2(L)
    if k == 2:
        return math.log2(2 * L - 3) + expected_log_subensemble(L)
    a = min(a, L)
    base = L // a
    sizes = tuple([base] * (a - 1) + [L - base * (a - 1)])
    return _block_cost(sizes, 0, L, k, a)


@lru_cache(maxsize=None)
def _block_cost(sizes: tuple, i: int, rem_len: int, r: int, a: int) -> float:
    b = sizes[i]
    if i == len(sizes) - 1:
        return _locate_cost(b, r, a)
    cost = _log2(min(r, b) + 1)
    tot = math.comb(rem_len, r)
    for x in range(max(0, r - (rem_len - b)), min(r, b) + 1):
        p = math.comb(b, x) * math.comb(rem_len - b, r - x) / tot
        cost += p * (_locate_cost(b, x, a) + _block_cost(sizes, i + 1, rem_len - b, r - x, a))
    return cost


def resources_damp(n: int, k: int, a: int = 2) -> float:
    """Expected ebits to locate ``k`` uniformly placed errors among ``n`` pairs.

    Excludes the initial counting auxiliary. Blocks follow the recursive
    counting scheme: ``a`` blocks, the last one absorbing the remainder,
    counted with ``min(remaining, size) + 1`` levels.
    """
    if not 0 <= k <= n:
        raise PreconditionViolated("need 0 <= k <= n")
    if a < 2:
        raise PreconditionViolated("fan-out must be at least 2")
    return _locate_cost(n, k, a)


def kmax_opt(n: int, a: int = 2) -> int:
    """Largest ``k`` for which locating still returns more pairs than it costs."""
    best = 0
    for k in range(n + 1):
        if n - k - resources_damp(n, k, a) > 0:
            best = k
    return best


def _damp_terms(n: int, F: float, k_max: int | None, a: int) -> tuple[float, float]:
    _check_F(F)
    k_max = n if k_max is None else k_max
    if not 0 <= k_max <= n:
        raise PreconditionViolated("need 0 <= k_max <= n")
    pk = stats.binom.pmf(np.arange(k_max + 1), n, 1.0 - F)
    R = np.array([resources_damp(n, k, a) for k in range(k_max + 1)])
    gain = float(np.sum(pk * (n - np.arange(k_max + 1) - R)))
    res = math.log2(n + 1) + float(np.sum(pk * R))
    return gain, res


def yield_damp(n: int, F: float, k_max: int | None = None, a: int = 2) -> float:
    """Yield of the damped protocol that aborts above ``k_max`` errors."""
    gain, _ = _damp_terms(n, F, k_max, a)
    return (gain - math.log2(n + 1)) / n


def resources_total_damp(n: int, F: float, k_max: int | None = None, a: int = 2) -> float:
    """Expected ebits per run of the damped protocol, counting included."""
    return _damp_terms(n, F, k_max, a)[1]


# ---------------------------------------------------------------------------
# alternative two-error procedure


@lru_cache(maxsize=None)
def _alt_terms(L: int, min_recurse: int) -> tuple[float, float]:
    """(expected discards, expected ebits) of the halving search on ``L`` pairs."""
    if L <= 2:
        return float(L), 0.0
    h1 = (L + 1) // 2
    h2 = L - h1
    tot = math.comb(L, 2)
    p_split = h1 * h2 / tot
    disc = 2 * p_split
    cost = math.log2(3) + p_split * (_log2(h1) + _log2(h2))
    for h in (h1, h2):
        p = math.comb(h, 2) / tot
        if h >= min_recurse:
            dd, cc = _alt_terms(h, min_recurse)
        else:
            dd, cc = float(h), 0.0
        disc += p * dd
        cost += p * cc
    return disc, cost


def yield_alt_two(n: int, min_recurse: int = 8) -> float:
    """Yield of the halving search on an ensemble known to hold two ``01`` errors."""
    disc, cost = _alt_terms(n, min_recurse)
    return (n - disc - cost) / n


def yield_bound_known_k(n: int, k: int) -> float:
    """Yield ceiling for any procedure that fully identifies ``k`` errors."""
    return (n - k - math.log2(math.comb(n, k))) / n


# ---------------------------------------------------------------------------
# difference distributions for rank-3 ensembles


def _rank3(F: float) -> tuple[float, float, float]:
    _check_F(F)
    q = (1.0 - F) / 2
    return F, q, q


def pj_lambda(n: int, F: float, lam: int, j: int) -> float:
    """Probability that ``#01 - #10`` is ``j`` modulo ``2*lam + 1``.

    Exact trinomial sum for ``n`` copies of the rank-3 state with weights
    ``(F, (1-F)/2, (1-F)/2)``.
    """
    pT, p01, p10 = _rank3(F)
    d = 2 * lam + 1
    j %= d
    lf = math.lgamma(n + 1)
    tot = 0.0
    for b in range(n + 1):
        for g in range(n - b + 1):
            if (b - g) % d != j:
                continue
            a = n - b - g
            lw = lf - math.lgamma(a + 1) - math.lgamma(b + 1) - math.lgamma(g + 1)
            term = lw
            for cnt, p in ((a, pT), (b, p01), (g, p10)):
                if cnt:
                    if p == 0:
                        term = -math.inf
                        break
                    term += cnt * math.log(p)
            tot += math.exp(term) if term > -math.inf else 0.0
    return tot


def joint_index_pmf(n: int, p01: float, p10: float, d1: int, d2: int) -> np.ndarray:
    """Joint law of ``(sum l_i mod d1, sum i*l_i mod d2)`` for i.i.d. signals ``l_i``.

    ``l_i`` is +1, -1 or 0 with probabilities ``p01``, ``p10`` and the rest.
    """
    pT = 1.0 - p01 - p10
    dp = np.zeros((d1, d2))
    dp[0, 0] = 1.0
    for i in range(1, n + 1):
        dp = (pT * dp + p01 * np.roll(np.roll(dp, 1, 0), i % d2, 1)
              + p10 * np.roll(np.roll(dp, -1, 0), -(i % d2), 1))
    return dp


def pair_nonzero_given_zero(n: int, F: float) -> float:
    """P(second-stage distance index != 0 | first difference index == 0), EIP(2)."""
    _, p01, p10 = _rank3(F)
    dp = joint_index_pmf(n, p01, p10, 5, 2 * n - 1)
    pz = dp[0].sum()
    return 0.0 if pz == 0 else float(1.0 - dp[0, 0] / pz)


def r_table(n: int, F: float, lam: int = 2, variant: str = "exact") -> dict[int, float]:
    """Expected location cost per first-stage difference ``j``.

    ``variant="exact"`` uses exact placement averages; ``variant="fit"``
    uses the logarithmic fits for the two-error sub-searches.
    """
    if lam not in (1, 2):
        raise PreconditionViolated("closed-form tables exist for lam in {1, 2}")
    if variant not in ("exact", "fit"):
        raise PreconditionViolated(f"unknown variant {variant!r}")
    t = {0: 0.0, 1: _log2(n), -1: _log2(n)}
    if lam == 2:
        two = fit_log_subensemble(n) if variant == "fit" else expected_log_subensemble(n)
        diff = fit_different_cost(n) if variant == "fit" else different_locate_cost(n)
        t[2] = t[-2] = (math.log2(2 * n - 3) + two) if n > 2 else 0.0
        t[0] = (math.log2(2 * n - 1) if n > 1 else 0.0) + pair_nonzero_given_zero(n, F) * diff
    return t


# ---------------------------------------------------------------------------
# vectorized EIP(lambda) decoder

BRANCHES = ("none", "one01", "one10", "two01", "two10", "pair")
_SIG = np.array([0, 1, -1, 0, 0], dtype=np.int64)


def _relabel_order(n: int, D: int) -> tuple[np.ndarray, int]:
    order = np.arange(1, n + 1)
    while D % 2 == 0:
        order = np.concatenate([order[0::2], order[1::2]])
        D //= 2
    return order, D


def decode_eip(configs: np.ndarray, lam: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Noiseless EIP(lambda) outcome for every row of ``configs``.

    Parameters
    ----------
    configs : (N, n) integer array
        Pair state codes.
    lam : {1, 2}

    Returns
    -------
    discard : (N, n) bool array
    branch : (N,) int array
        Index into :data:`BRANCHES`.
    ebits : (N,) float array
    """
    if lam not in (1, 2):
        raise PreconditionViolated("the vectorized decoder covers lam in {1, 2}")
    configs = np.asarray(configs)
    N, n = configs.shape
    sig = _SIG[configs]
    pos = np.arange(1, n + 1)
    rows = np.arange(N)
    d = 2 * lam + 1
    v = sig.sum(1) % d
    Dhat = np.where(v <= lam, v, v - d)
    S1 = sig @ pos
    discard = np.zeros((N, n), dtype=bool)
    branch = np.zeros(N, dtype=np.int64)
    ebits = np.full(N, math.log2(d))

    def mark(sel, p):
        discard[rows[sel], p - 1] = True

    for kind in (1, -1):
        sel = Dhat == kind
        if sel.any():
            branch[sel] = 1 if kind > 0 else 2
            if n == 1:
                mark(sel, np.ones(sel.sum(), dtype=np.int64))
            else:
                i = (kind * S1[sel]) % n
                mark(sel, np.where(i == 0, n, i))
                ebits[sel] += math.log2(n)
        sel = Dhat == 2 * kind
        if lam == 2 and sel.any():
            branch[sel] = 3 if kind > 0 else 4
            if n <= 2:
                discard[sel] = True
            else:
                dd = 2 * n - 3
                s = ((kind * S1[sel] - 3) % dd) + 3
                ebits[sel] += math.log2(dd)
                lo = np.maximum(1, s - n)
                hi = (s - 1) // 2
                size = hi - lo + 1
                rel = pos[None, :] - lo[:, None] + 1
                inside = (rel >= 1) & (rel <= size[:, None])
                v2 = (sig[sel] * np.where(inside, rel, 0)).sum(1)
                i = (kind * v2) % np.maximum(size, 1)
                i = np.where(i == 0, size, i)
                r = lo + i - 1
                ebits[sel] += np.log2(np.maximum(size, 1))
                mark(sel, r)
                mark(sel, s - r)

    sel = Dhat == 0
    if lam == 2 and n >= 2 and sel.any():
        dd = 2 * n - 1
        ebits[sel] += math.log2(dd)
        vv = S1[sel] % dd
        x = np.where(vv <= n - 1, vv, vv - dd)
        idx = rows[sel]
        for D in np.unique(np.abs(x[x != 0])):
            for s in (1, -1):
                m_sel = x == s * D
                if not m_sel.any():
                    continue
                ids = idx[m_sel]
                branch[ids] = 5
                sg = sig[ids]
                if 2 * D >= n:
                    low_kind = -s
                    Ll = n - D
                    if Ll == 1:
                        i = np.ones(ids.size, dtype=np.int64)
                    else:
                        v2 = sg[:, :Ll] @ pos[:Ll]
                        i = (low_kind * v2) % Ll
                        i = np.where(i == 0, Ll, i)
                        ebits[ids] += math.log2(Ll)
                    discard[ids, i - 1] = True
                    discard[ids, i + D - 1] = True
                    continue
                order, Dp = _relabel_order(n, int(D))
                labels = np.arange(2, n + 1, 2)
                m = labels.size
                sub = order[labels - 1]
                v2 = (sg[:, sub - 1] @ np.arange(1, m + 1)) % n
                ebits[ids] += math.log2(n)
                c_pos = v2
                c_neg = (-v2) % n
                ok_pos = (c_pos >= 1) & (c_pos <= m)
                ok_neg = (c_neg >= 1) & (c_neg <= m)
                upper = 1 if s > 0 else -1
                use_pos = ok_pos & (~ok_neg | (upper > 0))
                use_neg = ok_neg & ~use_pos
                c = np.where(use_pos, c_pos, np.where(use_neg, c_neg, 1))
                kind = np.where(use_neg, -1, 1)
                lab = 2 * c
                partner = np.where(kind > 0, lab - s * Dp, lab + s * Dp)
                partner = (partner - 1) % n + 1
                discard[ids, order[lab - 1] - 1] = True
                discard[ids, order[partner - 1] - 1] = True
    return discard, branch, ebits


def _all_configs(n: int, chunk_bits: int = 10):
    """Yield every ternary configuration of length ``n`` in chunks."""
    b = min(n, chunk_bits)
    suffix = np.array(np.unravel_index(np.arange(3 ** b), (3,) * b)).T.astype(np.int8) \
        if b else np.zeros((1, 0), dtype=np.int8)
    for head in range(3 ** (n - b)):
        pre = np.array(np.unravel_index(head, (3,) * (n - b)), dtype=np.int8) \
            if n - b else np.zeros(0, dtype=np.int8)
        yield np.hstack([np.broadcast_to(pre, (suffix.shape[0], n - b)), suffix])


@lru_cache(maxsize=32)
def enumeration_table(n: int, lam: int) -> dict[str, np.ndarray]:
    """Per-branch, per-error-count sums over all ``3**n`` rank-3 configurations.

    Each entry is an array of shape ``(n + 1, 7)`` indexed by the error
    count ``k`` with columns: configurations, configurations with output,
    sum of ``g/m``, sum of ``(g/m)**2``, count with every kept pair good,
    sum of ebits, sum of discards. ``g`` and ``m`` are the good and total
    kept pairs.

    Raises
    ------
    TooLarge
        For ``n`` above the enumeration cap.
    """
    if n > ENUM_CAP:
        raise TooLarge(f"exact enumeration is capped at n = {ENUM_CAP}")
    if n < 1:
        raise PreconditionViolated("need n >= 1")
    out = {b: np.zeros((n + 1, 7)) for b in BRANCHES}
    for cfg in _all_configs(n):
        _accumulate(out, cfg, lam, n)
    return out


def _accumulate(out, cfg, lam, n):
    disc, br, eb = decode_eip(cfg, lam)
    k = np.count_nonzero(cfg, axis=1)
    kept = ~disc
    m = kept.sum(1)
    g = (kept & (cfg == 0)).sum(1)
    has = m > 0
    frac = np.where(has, g / np.maximum(m, 1), 0.0)
    allgood = has & (g == m)
    nd = disc.sum(1)
    for bi, name in enumerate(BRANCHES):
        s = br == bi
        if not s.any():
            continue
        kk = k[s]
        cols = (np.ones(kk.size), has[s], frac[s], frac[s] ** 2, allgood[s], eb[s], nd[s])
        for c, vals in enumerate(cols):
            out[name][:, c] += np.bincount(kk, weights=vals.astype(float), minlength=n + 1)


def _weights(n: int, F: float) -> np.ndarray:
    _check_F(F)
    k = np.arange(n + 1)
    q = (1.0 - F) / 2
    with np.errstate(divide="ignore", invalid="ignore"):
        lw = (n - k) * np.log(F) + k * np.log(q)
    return np.exp(lw)


def branch_table(n: int, F: float, lam: int) -> dict[str, dict[str, float]]:
    """Probability, posterior local fidelity and its spread per branch (exact).

    Returns
    -------
    dict
        ``branch -> {"prob", "prob_out", "F_local", "var", "F_global", "ebits",
        "discards"}`` where ``F_local`` and ``var`` are the conditional mean and
        variance of ``g/m`` over runs with output.
    """
    tab = enumeration_table(n, lam)
    w = _weights(n, F)
    res = {}
    for b, t in tab.items():
        s = w @ t
        if s[0] <= 0:
            continue
        fl = s[2] / s[1] if s[1] > 0 else math.nan
        var = s[3] / s[1] - fl * fl if s[1] > 0 else math.nan
        res[b] = {"prob": float(s[0]), "prob_out": float(s[1]), "F_local": float(fl),
                  "var": float(max(var, 0.0)),
                  "F_global": float(s[4] / s[1]) if s[1] > 0 else math.nan,
                  "ebits": float(s[5] / s[0]), "discards": float(s[6] / s[0])}
    return res


def local_fidelity_exact(n: int, F: float, lam: int, branch: str | None = None) -> float:
    """Posterior local fidelity of EIP(lambda), overall or on one branch.

    Raises
    ------
    TooLarge
        For ``n`` above the enumeration cap; use :func:`local_fidelity_stratified`.
    """
    tab = branch_table(n, F, lam)
    if branch is None:
        num = sum(v["F_local"] * v["prob_out"] for v in tab.values() if v["prob_out"] > 0)
        den = sum(v["prob_out"] for v in tab.values())
        return num / den if den > 0 else math.nan
    if branch not in BRANCHES:
        raise PreconditionViolated(f"unknown branch {branch!r}")
    return tab[branch]["F_local"] if branch in tab else math.nan


def local_fidelity_stratified(n: int, F: float, lam: int, samples: int = 2000,
                              seed: int = 0, tail: float = 1e-12) -> tuple[float, float]:
    """Overall local fidelity of EIP(lambda) from error-count strata.

    Strata with ``k <= lam`` errors are exact (every kept pair is good);
    strata with more errors are sampled uniformly. Strata whose total weight
    is below ``tail`` are dropped.

    Returns
    -------
    (float, float)
        Estimate and its standard error.
    """
    _check_F(F)
    rng = np.random.default_rng(seed)
    pk = stats.binom.pmf(np.arange(n + 1), n, 1.0 - F)
    num = var = den = 0.0
    for k in range(n + 1):
        if pk[k] < tail:
            continue
        if k <= lam:
            out = 1.0 if n > k else 0.0
            num += pk[k] * out
            den += pk[k] * out
            continue
        cfg = np.zeros((samples, n), dtype=np.int8)
        keys = rng.random((samples, n)).argsort(axis=1)[:, :k]
        cfg[np.arange(samples)[:, None], keys] = rng.integers(1, 3, size=(samples, k))
        disc, _, _ = decode_eip(cfg, lam)
        kept = ~disc
        m = kept.sum(1)
        has = m > 0
        frac = np.where(has, (kept & (cfg == 0)).sum(1) / np.maximum(m, 1), 0.0)
        p_out = has.mean()
        num += pk[k] * frac[has].sum() / samples
        den += pk[k] * p_out
        if samples > 1:
            var += (pk[k] ** 2) * frac.var(ddof=1) / samples
    return num / den, math.sqrt(var) / den


def yield_raw_eip(n: int, F: float, lam: int) -> float:
    """Exact yield ``(E[kept] - E[ebits]) / n`` of EIP(lambda) without entropy discount."""
    tab = branch_table(n, F, lam)
    loss = sum(v["prob"] * (v["discards"] + v["ebits"]) for v in tab.values())
    return float(1.0 - loss / n)


def entropy_bd(weights) -> float:
    """Shannon entropy in bits of a probability vector (Bell-diagonal spectrum)."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < -1e-12) or abs(w.sum() - 1) > 1e-9:
        raise PreconditionViolated("weights must be a probability vector")
    w = w[w > 0]
    return float(-(w * np.log2(w)).sum()) + 0.0


def yield_eps(n: int, F: float, lam: int = 2, r_variant: str = "exact") -> float:
    """Yield of EIP(lambda) on rank-3 pairs with the entropy discount.

    The consumed ebits are inflated by ``1/(1 - S)`` where ``S`` is the
    entropy of the rank-3 state carrying the averaged output fidelity, and
    the expected number of discarded pairs is subtracted.
    """
    if lam not in (1, 2):
        raise PreconditionViolated("yield_eps covers lam in {1, 2}")
    d = 2 * lam + 1
    pj = {j: pj_lambda(n, F, lam, j % d) for j in range(-lam, lam + 1)}
    rt = r_table(n, F, lam, r_variant)
    R_t = math.log2(d) + sum(pj[j] * rt[j] for j in pj)
    disc = pj[1] + pj[-1]
    if lam == 2:
        disc += 2 * (pj[2] + pj[-2]) + 2 * pj[0] * pair_nonzero_given_zero(n, F)
    if n <= ENUM_CAP:
        Fl = local_fidelity_exact(n, F, lam)
    else:
        Fl, _ = local_fidelity_stratified(n, F, lam)
    S = entropy_bd([Fl, (1 - Fl) / 2, (1 - Fl) / 2, 0.0])
    if S >= 1:
        return -math.inf
    return (n - R_t / (1 - S) - disc) / n


def eip_report(n: int, F: float, lam: int = 2) -> AnalyticsReport:
    """Exact branch-resolved report for EIP(lambda) on ``n <= 14`` rank-3 pairs."""
    tab = branch_table(n, F, lam)
    den = sum(v["prob_out"] for v in tab.values())
    Fl = sum(v["F_local"] * v["prob_out"] for v in tab.values() if v["prob_out"] > 0) / den
    Fg = sum(v["F_global"] * v["prob_out"] for v in tab.values() if v["prob_out"] > 0) / den
    Rt = sum(v["ebits"] * v["prob"] for v in tab.values())
    return AnalyticsReport(yield_eps(n, F, lam), Fl, Fg, Rt,
                           {b: v["prob"] for b, v in tab.items()},
                           {b: v["F_local"] for b, v in tab.items()})


# ---------------------------------------------------------------------------
# hashing bound


def _rank3_entropy(F: float) -> float:
    q = (1 - F) / 2
    return entropy_bd([F, q, q, 0.0])


def hashing_p1(n: int, F: float, delta: float | None = None) -> float:
    """Probability that a rank-3 configuration falls outside the likely set.

    A configuration with ``i`` good pairs has probability
    ``F**i * ((1-F)/2)**(n-i)``; it is likely when ``-log2(prob)/n`` lies
    within ``delta`` of the single-pair entropy. All ``C(n,i) 2**(n-i)``
    configurations sharing ``i`` share that probability.
    """
    _check_F(F)
    if delta is None:
        delta = n ** -0.2
    if delta < 0:
        raise PreconditionViolated("delta must be non-negative")
    if F in (0.0, 1.0):
        return 0.0
    S = _rank3_entropy(F)
    q = (1 - F) / 2
    i = np.arange(n + 1)
    log2p = i * math.log2(F) + (n - i) * math.log2(q)
    outside = np.abs(-log2p / n - S) > delta
    mass = stats.binom.pmf(i, n, F)
    return float(mass[outside].sum())


def hashing_bound(n: int, F: float, delta: float | None = None) -> tuple[float, float]:
    """Upper bound on the hashing global fidelity and the hashing yield."""
    if delta is None:
        delta = n ** -0.2
    return 1.0 - hashing_p1(n, F, delta), 1.0 - _rank3_entropy(F) - 2 * delta


# ---------------------------------------------------------------------------
# DEJMPS recurrence


def dejmps_step(weights) -> tuple[np.ndarray, float]:
    """One DEJMPS round on two copies of a Bell-diagonal state.

    ``weights`` are ordered ``(Psi00, Psi01, Psi10, Psi11)``.

    Returns
    -------
    (numpy.ndarray, float)
        Output weights in the same order and the success probability.
    """
    w = np.asarray(weights, dtype=float)
    if w.shape != (4,) or np.any(w < -1e-12) or abs(w.sum() - 1) > 1e-9:
        raise PreconditionViolated("weights must be a probability 4-vector")
    A, C, D, B = w
    N = (A + B) ** 2 + (C + D) ** 2
    out = np.array([A * A + B * B, C * C + D * D, 2 * A * B, 2 * C * D]) / N
    return out, float(N)


def dejmps_curve(F: float, rounds: int, n: int | None = None) -> list[dict[str, float]]:
    """Iterate DEJMPS from the rank-3 state of fidelity ``F``.

    Each row reports the round, local fidelity, the yield (product of
    success probabilities over 2 per round) and, if ``n`` is given, the
    global fidelity of the expected ``n * yield`` outputs.
    """
    w = np.array([F, (1 - F) / 2, (1 - F) / 2, 0.0])
    y = 1.0
    rows = []
    for r in range(rounds + 1):
        row = {"round": r, "F_local": float(w[0]), "yield": y}
        if n is not None:
            row["F_global"] = float(w[0]) ** max(1.0, n * y)
        rows.append(row)
        w, p = dejmps_step(w)
        y *= p / 2
    return rows
