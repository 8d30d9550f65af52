"""Configuration-level state model.

Pair states, product ensembles, the counter gate acting as modular index
arithmetic on an auxiliary qudit pair, the local depolarization channels
and configuration sampling.

Positions inside an ensemble are labelled ``1..n`` everywhere in the
public API; arrays indexed from zero are internal only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Sequence

import numpy as np


class EipError(Exception):
    """Base class for all package errors."""


class PreconditionViolated(EipError):
    """An operation was called on input outside its documented domain."""


class InvalidDensity(EipError):
    """A Bell-basis density matrix violates hermiticity, trace or positivity."""


class Inconsistent(EipError):
    """A measured auxiliary index has no decoding under the current claim."""


class TooLarge(EipError):
    """An exact enumeration was requested above its size cap."""


class InfeasibleFidelity(EipError):
    """The requested auxiliary fidelity cannot be produced."""


class DimensionMismatch(EipError):
    """Register dimensions do not match the operator or gate pattern."""


class ConfigError(EipError):
    """A run configuration is malformed."""


# ---------------------------------------------------------------------------
# pair states


class PairState(IntEnum):
    """Pure state occupied by one qubit pair of a depolarized ensemble.

    ``MIXED`` is the classical mixture ``(|00><00| + |11><11|)/2`` left
    behind when a target pair interacts with a maximally mixed auxiliary.
    It never occurs in a sampled ensemble.
    """

    TARGET = 0
    ERR01 = 1
    ERR10 = 2
    PHASE = 3
    MIXED = 4


# counter contribution and overlap with |Psi00> per PairState value
COUNTER = np.array([0, 1, -1, 0, 0], dtype=np.int64)
PAIR_FIDELITY = np.array([1.0, 0.0, 0.0, 0.0, 0.5])

_STATE_CHARS = {".": PairState.TARGET, "+": PairState.ERR01, "-": PairState.ERR10,
                "p": PairState.PHASE, "m": PairState.MIXED}
_CHARS_OF_STATE = {v: k for k, v in _STATE_CHARS.items()}


def counter_shift(s: PairState | int, reps: int, d: int) -> int:
    """Amplitude-index shift written by ``reps`` counter gates from pair ``s``.

    Parameters
    ----------
    s : PairState
        State of the control pair.
    reps : int
        Number of bilateral controlled-X applications (non-negative).
    d : int
        Dimension of the auxiliary qudit pair, ``d >= 2``.

    Returns
    -------
    int
        ``(reps * c(s)) mod d`` with ``c = +1`` for ``01``, ``-1`` for ``10``
        and ``0`` otherwise.
    """
    if d < 2:
        raise PreconditionViolated(f"auxiliary dimension must be >= 2, got {d}")
    if reps < 0:
        raise PreconditionViolated("reps must be non-negative")
    return int(reps * COUNTER[int(s)]) % d


# ---------------------------------------------------------------------------
# ensembles and configurations


@dataclass(frozen=True)
class ProductEnsemble:
    """``n`` i.i.d. pairs with weights over (Target, 01, 10, Psi10).

    Attributes
    ----------
    n : int
        Number of pairs.
    p : tuple of float
        Probabilities ``(p0, p1, p2, p3)``; ``p0`` is the fidelity ``F``.
    """

    n: int
    p: tuple[float, float, float, float]

    def __post_init__(self):
        p = tuple(float(x) for x in self.p)
        if len(p) != 4:
            raise PreconditionViolated("ensemble weights must be a 4-vector")
        if self.n < 1:
            raise PreconditionViolated("ensemble size must be positive")
        if any(x < -1e-15 or x > 1 + 1e-15 for x in p) or abs(sum(p) - 1) > 1e-12:
            raise PreconditionViolated(f"invalid ensemble weights {p}")
        object.__setattr__(self, "p", tuple(min(max(x, 0.0), 1.0) for x in p))

    @property
    def fidelity(self) -> float:
        return self.p[0]

    @classmethod
    def damped(cls, n: int, F: float) -> "ProductEnsemble":
        """Rank-2 ensemble with a single error kind (amplitude damping)."""
        return cls(n, (F, 1 - F, 0.0, 0.0))

    @classmethod
    def rank3(cls, n: int, F: float) -> "ProductEnsemble":
        """Depolarized rank-3 ensemble with equal ``01``/``10`` weights."""
        return cls(n, (F, (1 - F) / 2, (1 - F) / 2, 0.0))

    @classmethod
    def werner(cls, n: int, F: float) -> "ProductEnsemble":
        """Werner pairs after the second depolarization."""
        q = (1 - F) / 3
        return cls(n, (F, q, q, 1 - F - 2 * q))

    @classmethod
    def from_bell_diagonal(cls, n: int, w: Sequence[float]) -> "ProductEnsemble":
        """Ensemble obtained from Bell weights ``(p00, p01, p10, p11)`` by D2."""
        p00, p01, p10, p11 = (float(x) for x in w)
        flip = (p01 + p11) / 2
        return cls(n, (p00, flip, flip, p10))


class Configuration:
    """One sampled realization of an ensemble: a sequence of pair states.

    The state array is read-only; positions are 1-based in all methods.
    """

    __slots__ = ("_states",)

    def __init__(self, states: Iterable[int] | np.ndarray):
        arr = np.array(list(states) if not isinstance(states, np.ndarray) else states,
                       dtype=np.int8)
        if arr.ndim != 1 or arr.size == 0:
            raise PreconditionViolated("a configuration is a non-empty 1-d sequence")
        if arr.min() < 0 or arr.max() > int(PairState.MIXED):
            raise PreconditionViolated("unknown pair state code")
        arr.setflags(write=False)
        self._states = arr

    @classmethod
    def from_string(cls, text: str) -> "Configuration":
        """Parse ``'.'`` Target, ``'+'`` 01, ``'-'`` 10, ``'p'`` Psi10, ``'m'`` mixed."""
        try:
            return cls([int(_STATE_CHARS[ch]) for ch in text])
        except KeyError as exc:
            raise PreconditionViolated(f"unknown state character {exc}") from None

    @classmethod
    def from_errors(cls, n: int, err01: Iterable[int] = (), err10: Iterable[int] = (),
                    phase: Iterable[int] = ()) -> "Configuration":
        """Build an ``n``-pair configuration from 1-based error positions."""
        arr = np.zeros(n, dtype=np.int8)
        for kind, positions in ((PairState.ERR01, err01), (PairState.ERR10, err10),
                                (PairState.PHASE, phase)):
            for pos in positions:
                if not 1 <= pos <= n or arr[pos - 1] != 0:
                    raise PreconditionViolated(f"bad or repeated position {pos}")
                arr[pos - 1] = kind
        return cls(arr)

    @property
    def states(self) -> np.ndarray:
        return self._states

    @property
    def n(self) -> int:
        return int(self._states.size)

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, pos: int) -> PairState:
        if not 1 <= pos <= self.n:
            raise IndexError(pos)
        return PairState(int(self._states[pos - 1]))

    def __eq__(self, other) -> bool:
        return isinstance(other, Configuration) and np.array_equal(self._states, other._states)

    def __hash__(self) -> int:
        return hash(self._states.tobytes())

    def __repr__(self) -> str:
        return f"Configuration('{self.to_string()}')"

    def to_string(self) -> str:
        return "".join(_CHARS_OF_STATE[PairState(int(s))] for s in self._states)

    def error_count(self) -> int:
        return int(np.count_nonzero(self._states != PairState.TARGET))

    def positions(self, kind: PairState) -> list[int]:
        return [int(i) + 1 for i in np.flatnonzero(self._states == kind)]

    def signal(self) -> np.ndarray:
        """Per-pair counter contribution (+1, -1 or 0), as an int array."""
        return COUNTER[self._states]


def sample_configuration(e: ProductEnsemble, rng: np.random.Generator) -> Configuration:
    """Draw one configuration with i.i.d. pair states distributed as ``e.p``."""
    return Configuration(rng.choice(4, size=e.n, p=e.p).astype(np.int8))


def sample_configurations(e: ProductEnsemble, rng: np.random.Generator,
                          trials: int) -> np.ndarray:
    """Draw ``trials`` configurations at once, as an ``(trials, n)`` int8 array."""
    u = rng.random((trials, e.n))
    cdf = np.cumsum(e.p)[:-1]
    return np.searchsorted(cdf, u, side="right").astype(np.int8)


# ---------------------------------------------------------------------------
# auxiliary qudit pairs and the counter gate


@dataclass(frozen=True)
class AuxQudit:
    """Auxiliary ``d``-level maximally entangled pair (phase index 0).

    Attributes
    ----------
    d : int
        Number of levels.
    index : int
        Amplitude index in ``Z_d``.
    fidelity_p : float
        Weight ``p`` of the amplitude-noise mixture; ``1.0`` is noiseless.
    source_pairs : int or None
        Raw rank-2 pairs consumed to build the auxiliary, if embedded.
    """

    d: int
    index: int = 0
    fidelity_p: float = 1.0
    source_pairs: int | None = None

    def __post_init__(self):
        if self.d < 2:
            raise PreconditionViolated(f"auxiliary dimension must be >= 2, got {self.d}")
        if not 0 <= self.index < self.d:
            raise PreconditionViolated("index outside Z_d")
        if not 0.0 <= self.fidelity_p <= 1.0:
            raise PreconditionViolated("fidelity_p must lie in [0, 1]")

    @property
    def ebit_cost(self) -> float:
        return math.log2(self.d)

    @property
    def fidelity(self) -> float:
        """Overlap with the ideal state, ``p + (1 - p)/d``."""
        return self.fidelity_p + (1 - self.fidelity_p) / self.d

    def shifted(self, delta: int) -> "AuxQudit":
        return AuxQudit(self.d, (self.index + int(delta)) % self.d, self.fidelity_p,
                        self.source_pairs)


def _as_config(c) -> Configuration:
    return c if isinstance(c, Configuration) else Configuration(c)


def apply_pattern(c: Configuration, reps: Sequence[int], aux: AuxQudit) -> AuxQudit:
    """Apply ``reps[i]`` counter gates from pair ``i+1`` onto ``aux``."""
    c = _as_config(c)
    reps = np.asarray(reps, dtype=np.int64)
    if reps.shape != (c.n,):
        raise DimensionMismatch("gate pattern length differs from configuration size")
    if np.any(reps < 0):
        raise PreconditionViolated("gate repetitions must be non-negative")
    return aux.shifted(int(np.dot(reps, c.signal())))


def apply_eng(c: Configuration, aux: AuxQudit) -> AuxQudit:
    """Error-number gate: one counter gate per pair.

    The returned index is ``(#01 - #10) mod d`` added to the entry index.
    """
    c = _as_config(c)
    return apply_pattern(c, np.ones(c.n, dtype=np.int64), aux)


def apply_epg(c: Configuration, aux: AuxQudit) -> AuxQudit:
    """Error-position gate: pair at position ``i`` applies the gate ``i`` times."""
    c = _as_config(c)
    return apply_pattern(c, np.arange(1, c.n + 1), aux)


def measure_aux(aux: AuxQudit, rng: np.random.Generator | None = None) -> int:
    """Read the amplitude index by local Z measurements.

    With probability ``fidelity_p`` the stored index is returned, otherwise
    a uniform element of ``Z_d``. A noiseless auxiliary never touches ``rng``.
    """
    if aux.fidelity_p >= 1.0:
        return aux.index
    if rng is None:
        raise PreconditionViolated("a random generator is required for noisy auxiliaries")
    if rng.random() < aux.fidelity_p:
        return aux.index
    return int(rng.integers(aux.d))


def consistent_decodings(index: int, d: int, candidates: Iterable[int]) -> list[int]:
    """Signal values compatible with a measured index.

    Parameters
    ----------
    index : int
        Measured amplitude index.
    d : int
        Auxiliary dimension.
    candidates : iterable of int
        Integer signal values allowed by the caller's claim, in preference
        order.

    Returns
    -------
    list of int
        Every candidate ``v`` with ``v mod d == index``, in input order.
    """
    return [v for v in candidates if v % d == index]


def next_power_of_two(d: int) -> int:
    return 1 << max(1, (int(d) - 1).bit_length())


# ---------------------------------------------------------------------------
# Bell-basis densities and depolarization


_S2 = 1 / math.sqrt(2)
# columns: Psi00, Psi01, Psi10, Psi11 with Psi_ij = (1 x X^j Z^i)|Phi+>
BELL_BASIS = np.array([
    [_S2, 0, _S2, 0],
    [0, _S2, 0, _S2],
    [0, _S2, 0, -_S2],
    [_S2, 0, -_S2, 0],
], dtype=complex)

# computational diagonal of exp(i pi/2 |1><1|) x exp(i pi/2 |0><0|)
_D2_PHASES = np.array([1j, 1.0, -1.0, 1j])
_D2_U = BELL_BASIS.conj().T @ np.diag(_D2_PHASES) @ BELL_BASIS
_D3_U = np.diag([1.0, 1.0, -1.0, -1.0]).astype(complex)  # X x X in the Bell basis
_H = np.array([[1, 1], [1, -1]]) * _S2
_HH = BELL_BASIS.conj().T @ np.kron(_H, _H) @ BELL_BASIS

# order of the reporting basis {Psi00, 01, 10, Psi10}
_REPORT_BASIS = np.stack([
    BELL_BASIS[:, 0],
    np.array([0, 1, 0, 0], dtype=complex),
    np.array([0, 0, 1, 0], dtype=complex),
    BELL_BASIS[:, 2],
], axis=1)


@dataclass(frozen=True)
class BellBasisDensity:
    """Two-qubit density matrix written in the Bell basis.

    ``matrix[a, b] = <Psi_a| rho |Psi_b>`` with ``a, b`` ordered as
    ``Psi00, Psi01, Psi10, Psi11``.
    """

    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (4, 4):
            raise InvalidDensity("a two-qubit density is 4x4")
        if np.max(np.abs(m - m.conj().T)) > 1e-12:
            raise InvalidDensity("matrix is not Hermitian")
        if abs(np.trace(m) - 1) > 1e-12:
            raise InvalidDensity("trace differs from one")
        if np.linalg.eigvalsh((m + m.conj().T) / 2).min() < -1e-10:
            raise InvalidDensity("matrix is not positive semidefinite")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_computational(cls, rho: np.ndarray) -> "BellBasisDensity":
        return cls(BELL_BASIS.conj().T @ np.asarray(rho) @ BELL_BASIS)

    @classmethod
    def diagonal(cls, w: Sequence[float]) -> "BellBasisDensity":
        return cls(np.diag(np.asarray(w, dtype=complex)))

    @classmethod
    def from_report_weights(cls, w: Sequence[float]) -> "BellBasisDensity":
        """Density that is diagonal in ``{Psi00, 01, 10, Psi10}`` with weights ``w``."""
        comp = _REPORT_BASIS @ np.diag(np.asarray(w, dtype=complex)) @ _REPORT_BASIS.conj().T
        return cls.from_computational(comp)

    def to_computational(self) -> np.ndarray:
        return BELL_BASIS @ self.matrix @ BELL_BASIS.conj().T

    @property
    def fidelity(self) -> float:
        return float(self.matrix[0, 0].real)

    def bell_weights(self) -> np.ndarray:
        return np.real(np.diag(self.matrix)).copy()

    def report_weights(self, atol: float = 1e-10) -> np.ndarray:
        """Weights on ``{Psi00, 01, 10, Psi10}``; the state must be diagonal there."""
        m = _REPORT_BASIS.conj().T @ self.to_computational() @ _REPORT_BASIS
        off = m - np.diag(np.diag(m))
        if np.max(np.abs(off)) > atol:
            raise InvalidDensity("state is not diagonal in the reporting basis")
        return np.real(np.diag(m)).copy()


def _conjugate_mix(rho: BellBasisDensity, u: np.ndarray) -> BellBasisDensity:
    m = rho.matrix
    out = 0.5 * (m + u @ m @ u.conj().T)
    return BellBasisDensity((out + out.conj().T) / 2)


def depolarize_d1(rho: BellBasisDensity) -> BellBasisDensity:
    """Bell-diagonal twirl: drops every off-diagonal Bell coefficient."""
    if not isinstance(rho, BellBasisDensity):
        rho = BellBasisDensity(rho)
    return BellBasisDensity(np.diag(np.diag(rho.matrix)))


def depolarize_d2(rho: BellBasisDensity) -> BellBasisDensity:
    """Second twirl, turning ``Psi_m1`` components into ``01``/``10`` mixtures.

    ``Psi_m0`` populations are untouched, the fidelity is preserved.
    """
    if not isinstance(rho, BellBasisDensity):
        rho = BellBasisDensity(rho)
    return _conjugate_mix(rho, _D2_U)


def depolarize_d3(rho: BellBasisDensity) -> BellBasisDensity:
    """Twirl with ``{1 x 1, X x X}``."""
    if not isinstance(rho, BellBasisDensity):
        rho = BellBasisDensity(rho)
    return _conjugate_mix(rho, _D3_U)


def transform_phase_to_flip(rho: BellBasisDensity) -> BellBasisDensity:
    """D3, then a Hadamard on both qubits, then D2.

    Maps ``Psi10`` into the equal ``01``/``10`` mixture, so that phase
    errors become visible to the counter gate.
    """
    rho = depolarize_d3(rho)
    m = _HH @ rho.matrix @ _HH.conj().T
    return depolarize_d2(BellBasisDensity((m + m.conj().T) / 2))


# Row s: distribution of the pair state after transform_phase_to_flip,
# columns ordered as PairState (Target, 01, 10, Psi10, mixed).
PHASE_TO_FLIP = np.array([
    [1.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.25, 0.25, 0.5, 0.0],
    [0.0, 0.25, 0.25, 0.5, 0.0],
    [0.0, 0.5, 0.5, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 1.0],
])


def phase_to_flip_weights(p: Sequence[float]) -> np.ndarray:
    """Distribution-level form of :func:`transform_phase_to_flip`."""
    p = np.asarray(p, dtype=float)
    return p @ PHASE_TO_FLIP[:4, :4]


# ---------------------------------------------------------------------------
# GHZ triples


class GhzPairState(IntEnum):
    """State of one GHZ triple after depolarization.

    ``SEPx`` is the computational state ``|i j k>`` with ``x = 4i + 2j + k``.
    """

    TARGET = 0
    SEP1 = 1
    SEP2 = 2
    SEP3 = 3
    SEP4 = 4
    SEP5 = 5
    SEP6 = 6
    PHASE = 7

    @classmethod
    def sep(cls, x: int) -> "GhzPairState":
        if not 1 <= x <= 6:
            raise PreconditionViolated("separable GHZ errors are labelled 1..6")
        return cls(x)

    @property
    def is_separable(self) -> bool:
        return 1 <= int(self) <= 6


def ghz_shift(s: GhzPairState | int) -> tuple[int, int]:
    """Amplitude-index shifts ``(m - l, n - l)`` written by one tCX."""
    x = int(s)
    if not 1 <= x <= 6:
        return (0, 0)
    l, m, n = (x >> 2) & 1, (x >> 1) & 1, x & 1
    return (m - l, n - l)


GHZ_SHIFTS = np.array([ghz_shift(x) for x in range(8)], dtype=np.int64)


def ghz_eng(c: Sequence[int], d: int) -> tuple[int, int]:
    """Two amplitude indices after one tCX per triple onto a fresh aux."""
    if d < 2:
        raise PreconditionViolated("auxiliary dimension must be >= 2")
    tot = GHZ_SHIFTS[np.asarray(c, dtype=np.int64)].sum(axis=0)
    return (int(tot[0]) % d, int(tot[1]) % d)


def ghz_epg(c: Sequence[int], d: int) -> tuple[int, int]:
    """Two amplitude indices when triple ``i`` applies the gate ``i`` times."""
    if d < 2:
        raise PreconditionViolated("auxiliary dimension must be >= 2")
    c = np.asarray(c, dtype=np.int64)
    tot = (np.arange(1, c.size + 1)[:, None] * GHZ_SHIFTS[c]).sum(axis=0)
    return (int(tot[0]) % d, int(tot[1]) % d)


def ghz_phase_parity(c: Sequence[int]) -> int:
    """XOR of phase bits of a subset holding only Target/phase-error triples."""
    c = [int(x) for x in c]
    if any(1 <= x <= 6 for x in c):
        raise PreconditionViolated("phase parity needs zero amplitude indices")
    return sum(x == GhzPairState.PHASE for x in c) % 2
