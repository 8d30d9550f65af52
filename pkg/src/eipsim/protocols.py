"""Error identification protocols as executable state machines.

Every protocol consumes a sampled configuration, drives counter-gate
measurements through a :class:`RunContext` and returns a
:class:`ProtocolResult` holding the kept/discarded positions, the consumed
auxiliary dimensions and a per-position truth check.

The location sub-routines (``locate_*``) act on *segments*: ordered lists
of 1-based ensemble positions. Relative positions inside a segment are
``1..len(segment)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from fractions import Fraction
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .core import (COUNTER, GHZ_SHIFTS, PAIR_FIDELITY, PHASE_TO_FLIP, Configuration,
                   GhzPairState, PairState, PreconditionViolated, ProductEnsemble,
                   consistent_decodings, sample_configuration)
from .noise import AuxPoolSpec, AuxSource


class AbortPolicy(IntEnum):
    """Escalating abort rules.

    ``NEVER`` keeps going on every outcome (inconsistent readings are mapped
    to a fallback decode). ``ON_THRESHOLD`` additionally aborts when the
    error count exceeds ``k_max``. ``ON_INCONSISTENCY`` also aborts on
    readings that no decode explains. ``ON_ANY_ERROR`` is the strict
    three-error variant that keeps only runs with no detected error.
    """

    NEVER = 0
    ON_THRESHOLD = 1
    ON_INCONSISTENCY = 2
    ON_ANY_ERROR = 3


@dataclass(frozen=True)
class ProtocolParams:
    """Protocol knobs.

    Attributes
    ----------
    lam : int
        Assumed maximum number of errors for EIP(lambda).
    k_max : int or None
        Abort threshold of the damped protocol; ``None`` means ``n``.
    a : int
        Block fan-out of the general-k recursion.
    abort_policy : AbortPolicy
    noisy_gate_q : float
        Gate noise parameter ``q``; ``1.0`` is noiseless.
    gate_noise_per_power : bool
        Apply ``X_q`` before every single counter gate, so a pair driven
        ``j`` times suffers ``j`` noise events. By default a ``j``-fold
        controlled shift counts as one gate.
    aux_dims_power_of_two_only : bool
        Round every auxiliary dimension up to a power of two.
    aux_pool : AuxPoolSpec
        Source of auxiliary pairs.
    fanout : int
        Split fan-out for the general-lambda procedure.
    split_confidence_bits : int
        Target confidence for the random re-splits of general lambda. A
        single random halving exposes a hidden ``01``/``10`` couple with
        probability at least about 1/4, so ``split_tries`` halvings are used
        to push the miss rate to roughly ``2**-split_confidence_bits``.
    """

    lam: int = 2
    k_max: int | None = None
    a: int = 2
    abort_policy: AbortPolicy = AbortPolicy.ON_THRESHOLD
    noisy_gate_q: float = 1.0
    gate_noise_per_power: bool = False
    aux_dims_power_of_two_only: bool = False
    aux_pool: AuxPoolSpec = field(default_factory=AuxPoolSpec)
    fanout: int = 2
    split_confidence_bits: int = 10

    def __post_init__(self):
        if self.lam < 0 or (self.k_max is not None and self.k_max < 0):
            raise PreconditionViolated("lam and k_max must be non-negative")
        if self.a < 2 or self.fanout < 2:
            raise PreconditionViolated("fan-out must be at least 2")
        if not 0.0 <= self.noisy_gate_q <= 1.0:
            raise PreconditionViolated("q must lie in [0, 1]")
        object.__setattr__(self, "abort_policy", AbortPolicy(self.abort_policy))

    @property
    def noiseless(self) -> bool:
        return self.aux_pool.is_ideal and self.noisy_gate_q >= 1.0

    @property
    def split_tries(self) -> int:
        return math.ceil(self.split_confidence_bits / math.log2(4 / 3))

    def replace(self, **kw) -> "ProtocolParams":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(kw)
        return ProtocolParams(**d)


DEFAULT_PARAMS = ProtocolParams()


class TranscriptEntry(NamedTuple):
    pattern: str
    d: int
    index: int | tuple[int, int]


_GHZ_FIDELITY = np.array([1.0, 0, 0, 0, 0, 0, 0, 0])


@dataclass(frozen=True)
class ProtocolResult:
    """Outcome of one protocol run.

    Attributes
    ----------
    n : int
        Ensemble size.
    kept, discarded : frozenset of int
        Positions kept as purified pairs and positions removed.
    aborted : bool
    resources_ebits : float
        Sum of ``log2 d`` over every auxiliary consumed.
    transcript : tuple of TranscriptEntry
        Gate pattern, auxiliary dimension and measured index, in order.
    initial, final : numpy.ndarray
        Pair states before the run and at the end of the run (a discarded
        pair keeps the state it had when it was removed).
    abort_reason : str or None
    branch : str or None
        Measurement scenario label, e.g. ``"one01"`` or ``"pair"``.
    flags : frozenset of str
    ghz : bool
        True for GHZ triples, whose states use :class:`GhzPairState` codes.
    """

    n: int
    kept: frozenset
    discarded: frozenset
    aborted: bool
    resources_ebits: float
    transcript: tuple
    initial: np.ndarray = field(repr=False)
    final: np.ndarray = field(repr=False)
    abort_reason: str | None = None
    branch: str | None = None
    flags: frozenset = frozenset()
    ghz: bool = False

    def __post_init__(self):
        assert not (self.kept & self.discarded)
        assert not self.aborted or not self.kept

    @property
    def m(self) -> int:
        return len(self.kept)

    def _is_good(self, state: int) -> bool:
        return state == 0

    def _fid_table(self) -> np.ndarray:
        return _GHZ_FIDELITY if self.ghz else PAIR_FIDELITY

    @property
    def truth_check(self) -> dict[int, bool]:
        """Per position: kept pairs must be Target, discarded pairs must not."""
        out = {}
        for p in self.kept:
            out[p] = self._is_good(int(self.final[p - 1]))
        for p in self.discarded:
            out[p] = not self._is_good(int(self.final[p - 1]))
        return out

    @property
    def all_correct(self) -> bool:
        return all(self.truth_check.values())

    @property
    def kept_good(self) -> int:
        idx = np.fromiter(self.kept, dtype=np.int64, count=len(self.kept)) - 1
        return int(np.count_nonzero(self.final[idx] == 0))

    @property
    def local_fidelity(self) -> float | None:
        """Mean overlap of kept pairs with the target state; None if none kept."""
        if not self.kept:
            return None
        idx = np.fromiter(self.kept, dtype=np.int64, count=len(self.kept)) - 1
        return float(self._fid_table()[self.final[idx]].mean())

    @property
    def global_fidelity(self) -> float | None:
        """Overlap of the kept product state with the all-target state."""
        if not self.kept:
            return None
        idx = np.fromiter(self.kept, dtype=np.int64, count=len(self.kept)) - 1
        return float(np.prod(self._fid_table()[self.final[idx]]))

    def fidelity_triple(self) -> tuple[Fraction, Fraction, int] | None:
        """Exact ``(F_global, F_local, m)`` as fractions, or None if nothing kept."""
        if not self.kept:
            return None
        fids = [Fraction(self._fid_table()[self.final[p - 1]]).limit_denominator(4)
                for p in sorted(self.kept)]
        fg = Fraction(1)
        for f in fids:
            fg *= f
        return fg, sum(fids, Fraction(0)) / len(fids), len(fids)

    @property
    def yield_value(self) -> float:
        """``(kept - consumed ebits) / n`` for this run."""
        return (len(self.kept) - self.resources_ebits) / self.n


class _Abort(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class RunContext:
    """Bookkeeping shared by all steps of one protocol run.

    Parameters
    ----------
    signal : array_like
        Counter contribution of every pair (shape ``(n,)``), or the two
        amplitude-index shifts of every GHZ triple (shape ``(n, 2)``).
    params : ProtocolParams
    rng : numpy.random.Generator or None
        Needed only when a noisy auxiliary or a random choice is involved.
    states : array_like, optional
        Pair states; mutated when an isotropic auxiliary decoheres pairs.
    """

    def __init__(self, signal, params: ProtocolParams | None = None, rng=None, states=None):
        self.signal = np.asarray(signal, dtype=np.int64)
        self.params = params or DEFAULT_PARAMS
        self.rng = rng
        self.states = None if states is None else np.array(states, dtype=np.int8)
        self.transcript: list[TranscriptEntry] = []
        self.resources = 0.0

    # -- auxiliaries ------------------------------------------------------

    def _require_rng(self):
        if self.rng is None:
            raise PreconditionViolated("this run needs a random generator")
        return self.rng

    def _aux(self, d: int) -> tuple[int, float]:
        pool = self.params.aux_pool
        d_eff = pool.dimension(d, self.params.aux_dims_power_of_two_only)
        return d_eff, pool.make(d_eff).fidelity_p

    def _noise(self, p: float, touched: np.ndarray, apps: int | None = None
               ) -> tuple[bool, bool]:
        """Return (aux intact, gates intact) for one auxiliary use.

        ``apps`` is the number of noisy gate applications; it defaults to the
        number of touched pairs.
        """
        q = self.params.noisy_gate_q
        apps = touched.size if apps is None else apps
        aux_ok = True
        if p < 1.0:
            aux_ok = bool(self._require_rng().random() < p)
        gates_ok = True
        if q < 1.0 and apps:
            gates_ok = bool(self._require_rng().random() < q ** apps)
        if not aux_ok and self.params.aux_pool.source is AuxSource.ISOTROPIC \
                and self.states is not None:
            hit = touched[self.states[touched] == PairState.TARGET]
            self.states[hit] = PairState.MIXED
        return aux_ok, gates_ok

    def _apps(self, reps: np.ndarray) -> int:
        if self.params.gate_noise_per_power:
            return int(np.abs(reps).sum())
        return int(np.count_nonzero(reps))

    def measure(self, pattern: str, segment: Sequence[int], reps: Sequence[int],
                d: int) -> tuple[int, int]:
        """Counter gates from ``segment`` onto a fresh ``d``-level aux, then read it.

        Returns
        -------
        (int, int)
            Measured index and the dimension actually used.
        """
        if d <= 1:
            return 0, 1
        d_eff, p = self._aux(d)
        pos = np.asarray(segment, dtype=np.int64) - 1
        reps = np.asarray(reps, dtype=np.int64)
        touched = pos[reps > 0]
        true = int(np.dot(self.signal[pos], reps)) % d_eff
        aux_ok, gates_ok = self._noise(p, touched, self._apps(reps))
        v = true if (aux_ok and gates_ok) else int(self.rng.integers(d_eff))
        self.transcript.append(TranscriptEntry(pattern, d_eff, v))
        self.resources += math.log2(d_eff)
        return v, d_eff

    def measure_pair(self, pattern: str, segment: Sequence[int], reps: Sequence[int],
                     d: int) -> tuple[tuple[int, int], int]:
        """GHZ version of :meth:`measure` reading both amplitude indices."""
        if d <= 1:
            return (0, 0), 1
        d_eff, p = self._aux(d)
        pos = np.asarray(segment, dtype=np.int64) - 1
        reps = np.asarray(reps, dtype=np.int64)
        touched = pos[reps > 0]
        tot = reps @ self.signal[pos]
        true = (int(tot[0]) % d_eff, int(tot[1]) % d_eff)
        aux_ok, gates_ok = self._noise(p, touched, self._apps(reps))
        if aux_ok and gates_ok:
            v = true
        else:
            v = (int(self.rng.integers(d_eff)), int(self.rng.integers(d_eff)))
        self.transcript.append(TranscriptEntry(pattern, d_eff, v))
        self.resources += math.log2(d_eff)
        return v, d_eff

    def measure_bit(self, pattern: str, segment: Sequence[int], true_bit: int) -> int:
        """Two-level auxiliary reading a parity computed by the caller."""
        d_eff, p = self._aux(2)
        touched = np.asarray(segment, dtype=np.int64) - 1
        aux_ok, gates_ok = self._noise(p, touched)
        v = true_bit % d_eff if (aux_ok and gates_ok) else int(self.rng.integers(d_eff))
        self.transcript.append(TranscriptEntry(pattern, d_eff, v))
        self.resources += math.log2(d_eff)
        return v

    # -- decoding ---------------------------------------------------------

    def inconsistent(self, stage: str) -> None:
        """Abort if the policy asks for it; otherwise the caller falls back."""
        if self.params.abort_policy >= AbortPolicy.ON_INCONSISTENCY:
            raise _Abort(f"inconsistent-{stage}")

    def decode(self, index: int, d: int, candidates: list[tuple[int, object]],
               stage: str) -> list:
        """Payloads whose signal value matches ``index`` modulo ``d``.

        With no match, the run aborts under ``ON_INCONSISTENCY`` and higher;
        otherwise the payload ``candidates[index mod len(candidates)]`` is
        used as a deterministic fallback decode.
        """
        if d <= 1:
            return [candidates[0][1]]
        values = consistent_decodings(index, d, [v for v, _ in candidates])
        if values:
            hits = set(values)
            return [payload for v, payload in candidates if v in hits]
        self.inconsistent(stage)
        return [candidates[index % len(candidates)][1]]

    def decode_pair(self, index: tuple[int, int], d: int,
                    candidates: list[tuple[tuple[int, int], object]], stage: str) -> list:
        if d <= 1:
            return [candidates[0][1]]
        hits = [payload for (a, b), payload in candidates
                if (a % d, b % d) == tuple(index)]
        if hits:
            return hits
        self.inconsistent(stage)
        return [candidates[(index[0] * d + index[1]) % len(candidates)][1]]

    # -- results ----------------------------------------------------------

    def result(self, initial, discarded, branch=None, final=None, aborted=False,
               reason=None, flags=(), ghz=False) -> ProtocolResult:
        initial = np.array(initial, dtype=np.int8)
        n = initial.size
        if final is None:
            final = initial if self.states is None else self.states
        final = np.array(final, dtype=np.int8)
        initial.setflags(write=False)
        final.setflags(write=False)
        discarded = frozenset(int(p) for p in discarded)
        kept = frozenset() if aborted else frozenset(range(1, n + 1)) - discarded
        return ProtocolResult(n, kept, discarded, aborted, float(self.resources),
                              tuple(self.transcript), initial, final, reason, branch,
                              frozenset(flags), ghz)


def _sign(x: int) -> int:
    return 1 if x > 0 else -1


def _kind_label(kind: int) -> str:
    return "01" if kind > 0 else "10"


def _ones(k: int) -> np.ndarray:
    return np.ones(k, dtype=np.int64)


def _ramp(k: int) -> np.ndarray:
    return np.arange(1, k + 1, dtype=np.int64)


def split_sizes(L: int, parts: int) -> list[int]:
    """Sizes of a near-even split, larger parts first."""
    parts = max(1, min(parts, L))
    base, extra = divmod(L, parts)
    return [base + 1] * extra + [base] * (parts - extra)


# ---------------------------------------------------------------------------
# location sub-routines


def locate_one(ctx: RunContext, segment: Sequence[int], kind: int) -> int:
    """Position of the single error of sign ``kind`` inside ``segment``.

    Uses the error-position gate on an auxiliary with ``len(segment)``
    levels. The measured index is the relative position (negated for
    ``10`` errors); index 0 means the last position.
    """
    seg = list(segment)
    L = len(seg)
    if L == 1:
        return seg[0]
    v, d = ctx.measure("EPG", seg, _ramp(L), L)
    i = ctx.decode(v, d, [(kind * i, i) for i in range(1, L + 1)], "locate")[0]
    return seg[i - 1]


def subensemble_bounds(L: int, s: int) -> tuple[int, int]:
    """Relative positions ``lo..hi`` holding the smaller of two errors summing to ``s``."""
    return max(1, s - L), (s - 1) // 2


def locate_two_identical(ctx: RunContext, segment: Sequence[int], kind: int) -> tuple[int, int]:
    """Positions of two errors of the same sign inside ``segment``.

    The position sum is read with ``2L - 3`` levels; the smaller error is
    then isolated in a sub-segment that contains exactly one error.
    """
    seg = list(segment)
    L = len(seg)
    if L <= 2:
        return (seg[0], seg[-1])
    v, d = ctx.measure("EPG", seg, _ramp(L), 2 * L - 3)
    s = ctx.decode(v, d, [(kind * s, s) for s in range(3, 2 * L)], "locate")[0]
    lo, hi = subensemble_bounds(L, s)
    sub = seg[lo - 1:hi]
    found = locate_one(ctx, sub, kind)
    r = lo + sub.index(found)
    t = s - r
    if not 1 <= t <= L or t == r:
        ctx.inconsistent("locate")
        t = (t - 1) % L + 1
        if t == r:
            t = r % L + 1
    return (seg[r - 1], seg[t - 1])


def locate_two_alt(ctx: RunContext, segment: Sequence[int], kind: int = 1,
                   min_recurse: int = 8) -> list[int]:
    """Halving strategy for two identical errors; returns positions removed.

    The segment is split into halves (larger first) and the first half is
    counted with a three-level auxiliary. One error per half is located in
    each half; if both sit in one half, that half is searched again when it
    has at least ``min_recurse`` pairs, otherwise it is dropped whole.
    """
    seg = list(segment)
    L = len(seg)
    if L <= 2:
        return seg
    h1, _ = split_sizes(L, 2)
    first, second = seg[:h1], seg[h1:]
    v, d = ctx.measure("ENG", first, _ones(h1), 3)
    c = ctx.decode(v, d, [(kind * x, x) for x in range(3)], "count")[0]
    if c == 1:
        return [locate_one(ctx, first, kind), locate_one(ctx, second, kind)]
    bad = first if c == 2 else second
    if len(bad) >= min_recurse:
        return locate_two_alt(ctx, bad, kind, min_recurse)
    return bad


def locate_general_k(ctx: RunContext, segment: Sequence[int], k: int, kind: int = 1) -> list[int]:
    """Positions of ``k`` same-sign errors by recursive block counting.

    The segment is cut into ``params.a`` blocks (the last absorbs the
    remainder). All blocks but the last are counted with an auxiliary of
    ``min(remaining, block size) + 1`` levels; the last count is inferred.
    Blocks are then resolved with one-error, two-error or recursive search.
    """
    seg = list(segment)
    L = len(seg)
    if k <= 0:
        return []
    if k >= L:
        return seg
    if k == 1:
        return [locate_one(ctx, seg, kind)]
    if k == 2:
        return list(locate_two_identical(ctx, seg, kind))
    a = min(ctx.params.a, L)
    base = L // a
    blocks = [seg[i * base:(i + 1) * base] for i in range(a - 1)] + [seg[(a - 1) * base:]]
    remaining = k
    found: list[int] = []
    for i, blk in enumerate(blocks):
        if i < a - 1:
            d = min(remaining, len(blk)) + 1
            v, d_eff = ctx.measure("ENG", blk, _ones(len(blk)), d)
            ki = ctx.decode(v, d_eff, [(kind * x, x) for x in range(d)], "count")[0]
        else:
            ki = remaining
            if ki > len(blk):
                ctx.inconsistent("count")
                ki = len(blk)
        remaining -= ki
        found += locate_general_k(ctx, blk, ki, kind)
    return found


def locate_two_different(ctx: RunContext, segment: Sequence[int]) -> tuple[int, int] | None:
    """Positions ``(pos01, pos10)`` of one error of each sign, or None.

    The signed distance ``r - t`` is read with ``2L - 1`` levels. Far-apart
    errors are found inside the lowest ``L - D`` positions, where the kind
    of the lower error is known. Close errors are brought to odd distance by
    free relabelling (odd labels first), then the even-labelled half, which
    holds exactly one error of unknown kind, is searched with ``L`` levels.
    """
    seg = list(segment)
    L = len(seg)
    if L < 2:
        return None
    v, d = ctx.measure("EPG", seg, _ramp(L), 2 * L - 1)
    cands = [(0, 0)] + [(x, x) for x in range(1, L)] + [(-x, -x) for x in range(1, L)]
    x = ctx.decode(v, d, cands, "locate")[0]
    if x == 0:
        return None
    D, s = abs(x), _sign(x)
    if 2 * D >= L:
        low_kind = -1 if x > 0 else 1
        low = seg[:L - D]
        p_low = locate_one(ctx, low, low_kind)
        i_low = low.index(p_low) + 1
        p_up = seg[i_low + D - 1]
        return (p_up, p_low) if low_kind < 0 else (p_low, p_up)
    order = list(range(1, L + 1))
    Dp = D
    while Dp % 2 == 0:
        order = order[0::2] + order[1::2]
        Dp //= 2
    labels = list(range(2, L + 1, 2))
    m = len(labels)
    sub = [seg[order[lab - 1] - 1] for lab in labels]
    v2, d2 = ctx.measure("EPG", sub, _ramp(m), L)
    cands2 = [(c, (c, 1)) for c in range(1, m + 1)] + [(-c, (c, -1)) for c in range(1, m + 1)]
    hits = ctx.decode(v2, d2, cands2, "locate")
    c, kind = hits[0]
    if len(hits) > 1:
        upper_kind = 1 if x > 0 else -1
        c, kind = next(h for h in hits if h[1] == upper_kind)
    lab = labels[c - 1]
    partner = lab - s * Dp if kind > 0 else lab + s * Dp
    if not 1 <= partner <= L:
        ctx.inconsistent("locate")
        partner = (partner - 1) % L + 1
    p_found = seg[order[lab - 1] - 1]
    p_partner = seg[order[partner - 1] - 1]
    return (p_found, p_partner) if kind > 0 else (p_partner, p_found)


# ---------------------------------------------------------------------------
# protocol drivers


def _as_config(c) -> Configuration:
    return c if isinstance(c, Configuration) else Configuration(c)


def eip_damp_run(c, params: ProtocolParams | None = None, rng=None) -> ProtocolResult:
    """Damped-noise protocol: count errors, then locate every one of them.

    Raises
    ------
    PreconditionViolated
        If the configuration contains anything but Target and ``01`` pairs.
    """
    c = _as_config(c)
    params = params or DEFAULT_PARAMS
    st = c.states
    if np.any((st != PairState.TARGET) & (st != PairState.ERR01)):
        raise PreconditionViolated("the damped protocol accepts only Target and 01 pairs")
    n = c.n
    ctx = RunContext(c.signal(), params, rng, st)
    seg = list(range(1, n + 1))
    k_max = n if params.k_max is None else params.k_max
    try:
        v, d = ctx.measure("ENG", seg, _ones(n), n + 1)
        k = ctx.decode(v, d, [(x, x) for x in range(n + 1)], "count")[0]
        if k > k_max and params.abort_policy >= AbortPolicy.ON_THRESHOLD:
            raise _Abort("threshold")
        located = locate_general_k(ctx, seg, k, 1)
    except _Abort as exc:
        return ctx.result(st, (), aborted=True, reason=exc.reason)
    return ctx.result(st, located, branch=f"k={k}")


def _centered(lim: int) -> list[tuple[int, int]]:
    out = [(0, 0)]
    for x in range(1, lim + 1):
        out += [(x, x), (-x, -x)]
    return out


def _eip_lambda_core(ctx: RunContext, seg: list[int], lam: int) -> tuple[list[int], str]:
    if lam == 0:
        return [], "none"
    if lam > 2:
        return _eip_general_core(ctx, seg, lam), "general"
    v, d = ctx.measure("ENG", seg, _ones(len(seg)), 2 * lam + 1)
    D = ctx.decode(v, d, _centered(lam), "count")[0]
    if D == 0:
        if lam == 1:
            return [], "none"
        res = locate_two_different(ctx, seg)
        return ([], "none") if res is None else (list(res), "pair")
    kind = _sign(D)
    if abs(D) == 1:
        return [locate_one(ctx, seg, kind)], "one" + _kind_label(kind)
    return list(locate_two_identical(ctx, seg, kind)), "two" + _kind_label(kind)


def eip_lambda_run(c, lam: int = 2, params: ProtocolParams | None = None,
                   rng=None) -> ProtocolResult:
    """EIP(lambda) for ensembles with both flip-error kinds.

    The difference ``#01 - #10`` is read with ``2*lam + 1`` levels and the
    scenario is resolved under the assumption of at most ``lam`` errors.
    Phase errors are invisible to the counter gate and are simply kept.
    Wrong assumptions lead to wrong positions being discarded, never to an
    abort (unless the policy aborts on inconsistent readings). For
    ``lam > 2`` the general splitting procedure is used.
    """
    c = _as_config(c)
    params = params or DEFAULT_PARAMS
    ctx = RunContext(c.signal(), params, rng, c.states)
    try:
        disc, branch = _eip_lambda_core(ctx, list(range(1, c.n + 1)), lam)
    except _Abort as exc:
        return ctx.result(c.states, (), aborted=True, reason=exc.reason)
    return ctx.result(c.states, disc, branch=branch)


def _feasible_part(D: int, b: int, part: int, rest: int) -> list[int]:
    lim = min(b, part)
    return [x for x in range(-lim, lim + 1)
            if abs(x) + abs(D - x) <= b and abs(D - x) <= rest]


def _measure_part(ctx: RunContext, part: list[int], rest: int, D: int, b: int) -> int | None:
    feas = _feasible_part(D, b, len(part), rest)
    if not feas:
        ctx.inconsistent("count")
        return None
    if len(feas) == 1:
        return feas[0]
    v, d = ctx.measure("ENG", part, _ones(len(part)), len(feas))
    return ctx.decode(v, d, [(x, x) for x in feas], "count")[0]


def _eip_general_core(ctx: RunContext, seg: list[int], lam: int) -> list[int]:
    params = ctx.params
    v, d = ctx.measure("ENG", seg, _ones(len(seg)), 2 * lam + 1)
    D0 = ctx.decode(v, d, _centered(lam), "count")[0]
    work = [(seg, D0, lam)]
    found: list[int] = []
    while work:
        s, D, b = work.pop()
        b = min(b, len(s))
        if abs(D) > b:
            ctx.inconsistent("count")
            found += s
            continue
        if abs(D) >= 2:
            rest_D, rest_b = D, b
            sizes = split_sizes(len(s), params.fanout)
            parts, start = [], 0
            for sz in sizes:
                parts.append(s[start:start + sz])
                start += sz
            bad = False
            for i, part in enumerate(parts[:-1]):
                rest = sum(len(p) for p in parts[i + 1:])
                x = _measure_part(ctx, part, rest, rest_D, rest_b)
                if x is None:
                    found += s
                    bad = True
                    break
                work.append((part, x, rest_b - abs(rest_D - x)))
                rest_D, rest_b = rest_D - x, rest_b - abs(x)
            if not bad:
                work.append((parts[-1], rest_D, rest_b))
            continue
        if b > abs(D) + 1 and len(s) > 1:
            rng = ctx._require_rng()
            revealed = False
            h = split_sizes(len(s), 2)[0]
            for _ in range(params.split_tries):
                pick = np.sort(rng.permutation(len(s))[:h])
                mask = np.zeros(len(s), dtype=bool)
                mask[pick] = True
                s1 = [p for p, f in zip(s, mask) if f]
                s2 = [p for p, f in zip(s, mask) if not f]
                x = _measure_part(ctx, s1, len(s2), D, b)
                if x is None:
                    break
                if abs(x) + abs(D - x) > abs(D):
                    work.append((s1, x, b - abs(D - x)))
                    work.append((s2, D - x, b - abs(x)))
                    revealed = True
                    break
            if revealed:
                continue
        if D != 0:
            found.append(locate_one(ctx, s, D))
    return found


def eip_general_run(c, lam: int, params: ProtocolParams | None = None,
                    rng=None) -> ProtocolResult:
    """EIP(lambda) for any ``lam`` by difference splitting.

    Segments with ``|difference| >= 2`` are split (``params.fanout`` parts)
    until every leaf holds a difference of -1, 0 or +1. A leaf whose error
    budget still allows a hidden ``01``/``10`` couple is re-split at random
    up to ``params.split_tries`` times; a split that reveals extra
    errors sends both halves back into the procedure.
    """
    c = _as_config(c)
    params = params or DEFAULT_PARAMS
    ctx = RunContext(c.signal(), params, rng, c.states)
    try:
        disc = _eip_general_core(ctx, list(range(1, c.n + 1)), lam)
    except _Abort as exc:
        return ctx.result(c.states, (), aborted=True, reason=exc.reason)
    return ctx.result(c.states, disc, branch="general")


def aeip3_run(c, params: ProtocolParams | None = None, rng=None) -> ProtocolResult:
    """Aborting three-error protocol.

    The difference is read with seven levels. Three identical errors abort.
    A difference of +-1 is treated as one error, located, and its pair is
    measured locally in the Z basis; the run continues only if that pair is
    the expected error kind. Differences of +-2 and 0 follow EIP(2). With
    ``abort_policy=ON_ANY_ERROR`` only runs without any detected error are
    kept.
    """
    c = _as_config(c)
    params = params or DEFAULT_PARAMS
    st = c.states
    ctx = RunContext(c.signal(), params, rng, st)
    seg = list(range(1, c.n + 1))
    try:
        v, d = ctx.measure("ENG", seg, _ones(c.n), 7)
        D = ctx.decode(v, d, _centered(3), "count")[0]
        if params.abort_policy >= AbortPolicy.ON_ANY_ERROR:
            if D != 0 or locate_two_different(ctx, seg) is not None:
                raise _Abort("detected")
            return ctx.result(st, (), branch="none")
        if abs(D) == 3:
            raise _Abort("three")
        if D == 0:
            res = locate_two_different(ctx, seg)
            return ctx.result(st, () if res is None else res,
                              branch="none" if res is None else "pair")
        kind = _sign(D)
        if abs(D) == 2:
            return ctx.result(st, locate_two_identical(ctx, seg, kind),
                              branch="two" + _kind_label(kind))
        p = locate_one(ctx, seg, kind)
        expected = PairState.ERR01 if kind > 0 else PairState.ERR10
        if st[p - 1] != expected:
            raise _Abort("verify")
        return ctx.result(st, (p,), branch="one" + _kind_label(kind))
    except _Abort as exc:
        return ctx.result(st, (), aborted=True, reason=exc.reason)


def full_rank_run(c, lam: int = 2, params: ProtocolParams | None = None,
                  rng=None) -> ProtocolResult:
    """Two rounds of EIP(lambda) around the phase-to-flip basis change.

    Round one removes flip errors. Every surviving pair is then resampled
    through the phase-to-flip map (a random step, ``rng`` is required), so
    phase errors become ``01``/``10`` errors that round two can locate.
    """
    c = _as_config(c)
    params = params or DEFAULT_PARAMS
    rng = rng if rng is not None else None
    if rng is None:
        raise PreconditionViolated("the basis change is random; pass a generator")
    n = c.n
    ctx = RunContext(c.signal(), params, rng, c.states)
    try:
        disc1, _ = _eip_lambda_core(ctx, list(range(1, n + 1)), lam)
    except _Abort as exc:
        return ctx.result(c.states, (), aborted=True, reason=exc.reason)
    states = ctx.states.copy()
    kept1 = [p for p in range(1, n + 1) if p not in set(disc1)]
    if kept1:
        idx = np.asarray(kept1) - 1
        cdf = np.cumsum(PHASE_TO_FLIP[states[idx]], axis=1)
        u = rng.random(len(idx))[:, None]
        states[idx] = (u >= cdf[:, :-1]).sum(axis=1).astype(np.int8)
    ctx.signal = COUNTER[states]
    ctx.states = states
    try:
        disc2, branch = _eip_lambda_core(ctx, kept1, lam) if kept1 else ([], "none")
    except _Abort as exc:
        return ctx.result(c.states, (), final=states, aborted=True, reason=exc.reason)
    return ctx.result(c.states, list(disc1) + list(disc2), branch=branch, final=states)


def blocking_run(c, block_size: int,
                 inner: Callable[[Configuration, object], ProtocolResult],
                 rng=None) -> ProtocolResult:
    """Run ``inner`` independently on consecutive blocks of ``block_size`` pairs.

    ``c`` may be a configuration or an ensemble (sampled with ``rng``). The
    last block is smaller when ``block_size`` does not divide ``n``. The
    aggregate counts as aborted only when every block aborted.
    """
    if isinstance(c, ProductEnsemble):
        c = sample_configuration(c, rng)
    c = _as_config(c)
    n = c.n
    if not 1 <= block_size:
        raise PreconditionViolated("block size must be positive")
    block_size = min(block_size, n)
    kept, disc, transcript = set(), set(), []
    res_total, all_aborted = 0.0, True
    final = c.states.copy()
    for start in range(0, n, block_size):
        sub = Configuration(c.states[start:start + block_size])
        r = inner(sub, rng)
        kept |= {start + p for p in r.kept}
        disc |= {start + p for p in r.discarded}
        transcript += list(r.transcript)
        res_total += r.resources_ebits
        final[start:start + sub.n] = r.final
        all_aborted &= r.aborted
    init = c.states.copy()
    init.setflags(write=False)
    final.setflags(write=False)
    return ProtocolResult(n, frozenset(kept), frozenset(disc), all_aborted, res_total,
                          tuple(transcript), init, final,
                          "all-blocks" if all_aborted else None, "blocks")


def locate_two_alt_run(c, params: ProtocolParams | None = None, rng=None,
                       min_recurse: int = 8) -> ProtocolResult:
    """Run :func:`locate_two_alt` on a whole configuration with two ``01`` errors.

    Only the halving search is charged; the initial error count is assumed
    known, matching the branch-level yield of the halving strategy.
    """
    c = _as_config(c)
    ctx = RunContext(c.signal(), params or DEFAULT_PARAMS, rng, c.states)
    try:
        disc = locate_two_alt(ctx, list(range(1, c.n + 1)), 1, min_recurse)
    except _Abort as exc:
        return ctx.result(c.states, (), aborted=True, reason=exc.reason)
    return ctx.result(c.states, disc, branch="two01")


# ---------------------------------------------------------------------------
# GHZ


_GHZ_KIND_CANDS = [((0, 0), None)] + [(tuple(int(v) for v in GHZ_SHIFTS[x]), x)
                                      for x in range(1, 7)]


def _ghz_parity_search(ctx: RunContext, seg: list[int], parity: int, st: np.ndarray,
                       corrections: list[int]) -> None:
    if not parity:
        return
    if len(seg) == 1:
        corrections.append(seg[0])
        return
    h = split_sizes(len(seg), 2)[0]
    first, second = seg[:h], seg[h:]
    p1 = ctx.measure_bit("parity", first, _ghz_true_parity(ctx, first, st))
    _ghz_parity_search(ctx, first, p1, st, corrections)
    _ghz_parity_search(ctx, second, parity ^ p1, st, corrections)


def _ghz_true_parity(ctx: RunContext, seg: list[int], st: np.ndarray) -> int:
    vals = st[np.asarray(seg) - 1]
    bit = int(np.count_nonzero(vals == GhzPairState.PHASE)) % 2
    n_sep = int(np.count_nonzero((vals >= 1) & (vals <= 6)))
    if n_sep:
        bit ^= int(ctx._require_rng().integers(2, size=n_sep).sum()) % 2
    return bit


def ghz_purify(c: Sequence[int], lam: int = 1, split_size: int | None = None,
               params: ProtocolParams | None = None, rng=None) -> ProtocolResult:
    """Two-round purification of GHZ triples.

    Round one removes separable triples: with ``lam = 1`` one tCX per triple
    onto a three-level aux names the separable kind from its two amplitude
    indices and a position gate on ``n`` levels finds it. With ``lam = 2``
    each amplitude index is handled by the bipartite EIP(2) machinery in
    turn. Round two splits the survivors into groups of ``split_size``,
    reads each group's phase parity with a two-level aux and bisects
    flagged groups until single phase errors are isolated and corrected.

    The flags ``mislocated_separable`` and ``mislocated_phase`` record runs
    where the true error content broke the round's assumption (more than
    ``lam`` separable triples, or a group with several phase errors).
    """
    st = np.array([int(x) for x in c], dtype=np.int8)
    if st.ndim != 1 or st.size == 0 or st.min() < 0 or st.max() > 7:
        raise PreconditionViolated("GHZ configuration codes are 0..7")
    if lam not in (0, 1, 2):
        raise PreconditionViolated("GHZ purification supports lam in {0, 1, 2}")
    params = params or DEFAULT_PARAMS
    n = st.size
    shifts = GHZ_SHIFTS[st]
    ctx = RunContext(shifts, params, rng)
    seg = list(range(1, n + 1))
    flags = set()
    if int(np.count_nonzero((st >= 1) & (st <= 6))) > lam:
        flags.add("mislocated_separable")
    disc: list[int] = []
    try:
        if lam == 1:
            v, d = ctx.measure_pair("tENG", seg, _ones(n), 3)
            x = ctx.decode_pair(v, d, _GHZ_KIND_CANDS, "count")[0]
            if x is not None:
                if n == 1:
                    disc = [1]
                else:
                    s1, s2 = (int(t) for t in GHZ_SHIFTS[x])
                    v2, d2 = ctx.measure_pair("tEPG", seg, _ramp(n), n)
                    cands = [((i * s1, i * s2), i) for i in range(1, n + 1)]
                    disc = [ctx.decode_pair(v2, d2, cands, "locate")[0]]
        elif lam == 2:
            ctx.signal = shifts[:, 0].copy()
            d_u, _ = _eip_lambda_core(ctx, seg, 2)
            rest = [p for p in seg if p not in set(d_u)]
            ctx.signal = shifts[:, 1].copy()
            d_w, _ = _eip_lambda_core(ctx, rest, 2) if rest else ([], "none")
            disc = list(d_u) + list(d_w)
        survivors = [p for p in seg if p not in set(disc)]
        groups = [survivors] if not split_size else [
            survivors[i:i + split_size] for i in range(0, len(survivors), split_size)]
        corrections: list[int] = []
        for g in groups:
            if not g:
                continue
            if np.count_nonzero(st[np.asarray(g) - 1] == GhzPairState.PHASE) > 1:
                flags.add("mislocated_phase")
            bit = ctx.measure_bit("parity", g, _ghz_true_parity(ctx, g, st))
            _ghz_parity_search(ctx, g, bit, st, corrections)
    except _Abort as exc:
        return ctx.result(st, (), aborted=True, reason=exc.reason, flags=flags, ghz=True)
    final = st.copy()
    for p in corrections:
        if final[p - 1] == GhzPairState.TARGET:
            final[p - 1] = GhzPairState.PHASE
        elif final[p - 1] == GhzPairState.PHASE:
            final[p - 1] = GhzPairState.TARGET
    branch = "none" if not disc else "separable"
    return ctx.result(st, disc, branch=branch, final=final, flags=flags, ghz=True)


PROTOCOLS: dict[str, Callable] = {
    "eip_damp": eip_damp_run,
    "eip": eip_lambda_run,
    "aeip3": aeip3_run,
    "full_rank": full_rank_run,
    "general": eip_general_run,
    "alt2": locate_two_alt_run,
}
