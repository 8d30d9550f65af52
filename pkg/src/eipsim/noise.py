"""Imperfect auxiliary states and operations."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import (AuxQudit, InfeasibleFidelity, PairState, PreconditionViolated,
                   next_power_of_two)


class AuxSource(Enum):
    IDEAL = "ideal"
    AMPLITUDE = "amplitude"
    EMBEDDED = "embedded"
    ISOTROPIC = "isotropic"


@dataclass(frozen=True)
class AuxPoolSpec:
    """Where auxiliary qudit pairs come from.

    Attributes
    ----------
    source : AuxSource
        Ideal pool, amplitude-noisy pool with weight ``value``, pool built by
        embedding rank-2 pairs of fidelity ``value``, or isotropic pool with
        weight ``value``.
    value : float
        ``p`` for the amplitude and isotropic pools, ``F`` for embedding.
    """

    source: AuxSource = AuxSource.IDEAL
    value: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise PreconditionViolated("pool parameter must lie in [0, 1]")

    @classmethod
    def ideal(cls) -> "AuxPoolSpec":
        return cls()

    @classmethod
    def amplitude(cls, p: float) -> "AuxPoolSpec":
        return cls(AuxSource.AMPLITUDE, p)

    @classmethod
    def embedded(cls, F: float) -> "AuxPoolSpec":
        return cls(AuxSource.EMBEDDED, F)

    @classmethod
    def isotropic(cls, p: float) -> "AuxPoolSpec":
        return cls(AuxSource.ISOTROPIC, p)

    @property
    def power_of_two_only(self) -> bool:
        return self.source is AuxSource.EMBEDDED

    @property
    def is_ideal(self) -> bool:
        return self.source is AuxSource.IDEAL or self.value >= 1.0

    def dimension(self, d: int, power_of_two: bool = False) -> int:
        """Dimension actually drawn from the pool when ``d`` levels are needed."""
        if power_of_two or self.power_of_two_only:
            return next_power_of_two(d)
        return d

    def make(self, d: int) -> AuxQudit:
        """Fresh auxiliary of exactly ``d`` levels drawn from this pool."""
        if self.source is AuxSource.EMBEDDED:
            k = int(round(math.log2(d)))
            if 1 << k != d:
                raise PreconditionViolated("embedded auxiliaries exist only for d = 2^k")
            return embed_rank2(self.value, k)
        if self.source is AuxSource.IDEAL:
            return AuxQudit(d)
        return make_noisy_aux(d, self.value)


def make_noisy_aux(d: int, p: float) -> AuxQudit:
    """Auxiliary pair that passed one half through the amplitude-noise channel.

    Its overlap with the ideal state is ``p + (1 - p)/d``.
    """
    if d < 2 or not 0.0 <= p <= 1.0:
        raise PreconditionViolated("need d >= 2 and p in [0, 1]")
    return AuxQudit(d, 0, float(p))


def embedding_weight(F: float, k: int) -> float:
    """Amplitude-noise weight ``p`` with ``p + (1 - p)/2^k = F^k``."""
    d = 2 ** k
    return (F ** k * d - 1) / (d - 1)


def embed_rank2(F: float, k: int) -> AuxQudit:
    """``2^k``-level auxiliary built from ``k`` rank-2 pairs of fidelity ``F``.

    Raises
    ------
    InfeasibleFidelity
        When ``F^k < 2^-k``, i.e. the required weight would be negative.
    """
    if k < 1 or not 0.0 <= F <= 1.0:
        raise PreconditionViolated("need k >= 1 and F in [0, 1]")
    p = embedding_weight(F, k)
    if p < -1e-12:
        raise InfeasibleFidelity(f"F^k = {F ** k} is below 1/2^k")
    return AuxQudit(2 ** k, 0, min(max(p, 0.0), 1.0), source_pairs=k)


def noisy_gate_fidelity(fid: float, q: float, d: int) -> float:
    """Auxiliary overlap after one gate preceded by the amplitude channel ``X_q``."""
    return (1 - q + q * d * fid) / d


def isotropic_fidelity(p: float, d: int) -> float:
    """Overlap of an isotropic ``d``-level pair with the ideal state."""
    return p + (1 - p) / d ** 2


def isotropic_weight(fid: float, d: int) -> float:
    """Inverse of :func:`isotropic_fidelity`."""
    return (fid * d * d - 1) / (d * d - 1)


def prepurification_gain(p: float, F_out: float, F_in: float) -> float:
    """Diagnostic ``p * F_out - F_in``; positive when an isotropic aux pays off."""
    return p * F_out - F_in


def isotropic_measure_effect(pair: PairState | int, p: float,
                             rng: np.random.Generator | None = None) -> PairState:
    """State of a pair after one gate with an isotropic auxiliary.

    With probability ``p`` nothing changes. Otherwise the auxiliary was the
    maximally mixed state and a Target pair decoheres into the classical
    ``00``/``11`` mixture. Error pairs are computational states and are left
    alone.
    """
    pair = PairState(int(pair))
    if pair is not PairState.TARGET or p >= 1.0:
        return pair
    if p <= 0.0:
        return PairState.MIXED
    if rng is None:
        raise PreconditionViolated("a random generator is required for 0 < p < 1")
    return pair if rng.random() < p else PairState.MIXED
