"""Dense linear-algebra reference simulator for small registers.

States are weighted ensembles of pure tensors whose axes are ordered
``[A_1, ..., A_s, B_1, ..., B_s]`` for ``s`` bipartite slots (qubit pairs,
GHZ parties or one auxiliary qudit pair). Only used to validate the
symbolic engine; performance is not a goal.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import analytics, core, noise
from .core import DimensionMismatch, PairState, PreconditionViolated

MAX_DIM = 1 << 30
_S2 = 1 / math.sqrt(2)


# ---------------------------------------------------------------------------
# single-qudit operators


def x_op(d: int) -> np.ndarray:
    """Generalized shift ``X|j> = |j - 1 mod d>``."""
    return np.roll(np.eye(d), -1, axis=0)


def z_op(d: int) -> np.ndarray:
    return np.diag(np.exp(2j * np.pi * np.arange(d) / d))


def qft(d: int) -> np.ndarray:
    k = np.arange(d)
    return np.exp(2j * np.pi * np.outer(k, k) / d) / math.sqrt(d)


def bell_d(m: int, n: int, d: int) -> np.ndarray:
    """``|Psi_mn> = d^-1/2 sum_k e^{2 pi i k m/d} |k>|k - n>`` as a ``d*d`` vector."""
    v = np.zeros(d * d, dtype=complex)
    for k in range(d):
        v[k * d + (k - n) % d] = np.exp(2j * np.pi * k * m / d)
    return v / math.sqrt(d)


def build_bcx(d: int) -> np.ndarray:
    """One side of the counter gate: qubit control, ``d``-level target.

    Returns the ``2d x 2d`` matrix ``|0><0| x 1 + |1><1| x X``; the bilateral
    gate applies it on both sides.
    """
    if d < 2:
        raise PreconditionViolated("need d >= 2")
    u = np.zeros((2 * d, 2 * d), dtype=complex)
    u[:d, :d] = np.eye(d)
    u[d:, d:] = x_op(d)
    return u


_PAIR_VECTORS = {
    PairState.TARGET: [(1.0, bell_d(0, 0, 2))],
    PairState.ERR01: [(1.0, np.array([0, 1, 0, 0], dtype=complex))],
    PairState.ERR10: [(1.0, np.array([0, 0, 1, 0], dtype=complex))],
    PairState.PHASE: [(1.0, bell_d(1, 0, 2))],
    PairState.MIXED: [(0.5, np.array([1, 0, 0, 0], dtype=complex)),
                      (0.5, np.array([0, 0, 0, 1], dtype=complex))],
}


# ---------------------------------------------------------------------------
# dense register


@dataclass
class DenseState:
    """Weighted ensemble of pure states over bipartite slots.

    Attributes
    ----------
    dims : tuple of int
        Local dimension of every slot (same on both sides).
    parts : list of (float, numpy.ndarray)
        Weights and tensors of shape ``dims + dims``.
    """

    dims: tuple
    parts: list

    def __post_init__(self):
        tot = math.prod(self.dims) ** 2
        if tot > MAX_DIM:
            raise DimensionMismatch("register exceeds the dense-simulation cap")
        for _, t in self.parts:
            if t.shape != tuple(self.dims) * 2:
                raise DimensionMismatch("tensor shape does not match slot dimensions")
        norm = sum(w * np.vdot(t, t).real for w, t in self.parts)
        if abs(norm - 1) > 1e-12:
            raise PreconditionViolated(f"state norm is {norm}")

    @classmethod
    def product(cls, slots: Sequence[list[tuple[float, np.ndarray]]]) -> "DenseState":
        """Product of per-slot ensembles, each vector in ``A x B`` ordering."""
        dims = []
        for ens in slots:
            dd = int(round(math.sqrt(ens[0][1].size)))
            dims.append(dd)
        parts = []
        for combo in itertools.product(*slots):
            w = math.prod(c[0] for c in combo)
            if w == 0:
                continue
            t = np.array(1.0 + 0j)
            for _, v in combo:
                t = np.multiply.outer(t, v.reshape(int(round(math.sqrt(v.size))), -1))
            s = len(dims)
            # axes are (A1, B1, A2, B2, ...) -> (A1..As, B1..Bs)
            t = t.transpose([2 * i for i in range(s)] + [2 * i + 1 for i in range(s)])
            parts.append((w, t))
        return cls(tuple(dims), parts)

    @property
    def slots(self) -> int:
        return len(self.dims)

    def apply_two(self, u: np.ndarray, i: int, j: int) -> "DenseState":
        """Apply a two-body operator on tensor axes ``i`` and ``j``."""
        shp = self.parts[0][1].shape
        di, dj = shp[i], shp[j]
        if u.shape != (di * dj, di * dj):
            raise DimensionMismatch("operator does not match the addressed axes")
        uu = u.reshape(di, dj, di, dj)
        out = []
        for w, t in self.parts:
            r = np.tensordot(uu, t, axes=([2, 3], [i, j]))
            out.append((w, np.moveaxis(r, [0, 1], [i, j])))
        return DenseState(self.dims, out)

    def apply_one(self, u: np.ndarray, i: int) -> "DenseState":
        out = []
        for w, t in self.parts:
            r = np.tensordot(u, t, axes=([1], [i]))
            out.append((w, np.moveaxis(r, 0, i)))
        return DenseState(self.dims, out)

    def mix(self, branches: Sequence[tuple[float, Callable[["DenseState"], "DenseState"]]]
            ) -> "DenseState":
        parts = []
        for p, f in branches:
            if p > 0:
                parts += [(p * w, t) for w, t in f(self).parts]
        return DenseState(self.dims, parts)

    def bcx(self, control: int, target: int, reps: int = 1) -> "DenseState":
        """``reps`` counter gates from slot ``control`` onto slot ``target``."""
        s = self.slots
        d = self.dims[target]
        u = np.linalg.matrix_power(build_bcx(d), reps) if reps else np.eye(2 * d)
        return self.apply_two(u, control, target).apply_two(u, s + control, s + target)

    def z_joint(self, axes: Sequence[int]) -> np.ndarray:
        """Joint distribution of computational outcomes on ``axes``."""
        acc = None
        for w, t in self.parts:
            p = np.abs(t) ** 2
            other = tuple(a for a in range(t.ndim) if a not in axes)
            m = p.sum(axis=other) * w
            acc = m if acc is None else acc + m
        perm = np.argsort(np.argsort(axes))
        return acc.transpose(perm) if acc.ndim > 1 else acc

    def amplitude_readout(self, slot: int) -> np.ndarray:
        """Distribution of ``(a - b) mod d`` for local Z results on ``slot``."""
        d = self.dims[slot]
        P = self.z_joint([slot, self.slots + slot])
        dist = np.zeros(d)
        for a in range(d):
            for b in range(d):
                dist[(a - b) % d] += P[a, b]
        return dist

    def density(self) -> np.ndarray:
        """Full density matrix; only for tiny registers."""
        D = math.prod(self.dims) ** 2
        rho = np.zeros((D, D), dtype=complex)
        for w, t in self.parts:
            v = t.reshape(-1)
            rho += w * np.outer(v, v.conj())
        return rho


@dataclass
class StepResult:
    dist: np.ndarray
    post: dict


def _aux_ensemble(d: int, p: float) -> list[tuple[float, np.ndarray]]:
    out = [(p + (1 - p) / d, bell_d(0, 0, d))]
    out += [((1 - p) / d, bell_d(0, j, d)) for j in range(1, d)]
    return [(w, v) for w, v in out if w > 0]


def simulate_protocol_step(states: Sequence[int], reps: Sequence[int], d: int,
                           p: float = 1.0, q: float = 1.0, per_power: bool = False,
                           keep_post: bool = False) -> StepResult:
    """Dense counter-gate pattern from pairs onto a fresh aux, then its readout.

    Parameters
    ----------
    states : sequence of PairState codes
    reps : sequence of int
        Gate repetitions per pair.
    d : int
        Auxiliary dimension.
    p : float
        Amplitude-noise weight of the auxiliary.
    q : float
        Gate-noise parameter: the channel ``X_q`` hits the auxiliary before
        every counter gate (``per_power=True``) or once per pair block.
    keep_post : bool
        Also return the post-measurement pure-state ensembles per outcome.
    """
    if len(states) != len(reps):
        raise DimensionMismatch("one repetition count per pair is required")
    slots = [_PAIR_VECTORS[PairState(int(s))] for s in states] + [_aux_ensemble(d, p)]
    st = DenseState.product(slots)
    aux = len(states)
    X = x_op(d)

    def noisy(state: DenseState) -> DenseState:
        if q >= 1.0:
            return state
        br = [(q, lambda s: s)]
        br += [((1 - q) / d, (lambda v: lambda s: s.apply_one(np.linalg.matrix_power(X, v),
                                                               2 * aux + 1))(v))
               for v in range(d)]
        return state.mix(br)

    for i, r in enumerate(reps):
        if r <= 0:
            continue
        if per_power:
            for _ in range(r):
                st = noisy(st).bcx(i, aux, 1)
        else:
            st = noisy(st).bcx(i, aux, r)
    dist = st.amplitude_readout(aux)
    post = {}
    if keep_post:
        for j in range(d):
            proj = np.zeros((d, d))
            for a in range(d):
                proj[a, (a - j) % d] = 1.0
            parts = []
            for w, t in st.parts:
                tt = t * proj.reshape((1,) * aux + (d,) + (1,) * aux + (d,))
                parts.append((w, tt))
            if dist[j] > 0:
                post[j] = [(w / dist[j], t) for w, t in parts]
    return StepResult(dist, post)


def symbolic_step(states: Sequence[int], reps: Sequence[int], d: int,
                  p: float = 1.0, q: float = 1.0, per_power: bool = False) -> np.ndarray:
    """Readout distribution predicted by the symbolic engine."""
    dist = np.zeros(d)
    shift = 0
    for s, r in zip(states, reps):
        shift += core.counter_shift(int(s), int(r), d)
    apps = sum(int(r) for r in reps) if per_power else sum(1 for r in reps if r > 0)
    keep = p * q ** apps
    dist[shift % d] += keep
    dist += (1 - keep) / d
    return dist


# ---------------------------------------------------------------------------
# channels as Kraus sets on computational two-qubit densities

_PAULI = [np.eye(2), np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]),
          np.diag([1.0, -1.0])]
_H = np.array([[1, 1], [1, -1]]) * _S2


def kraus_d1() -> list[np.ndarray]:
    """Bell-diagonal twirl ``sigma_i x sigma_i^*`` with equal weights."""
    return [0.5 * np.kron(s, s.conj()) for s in _PAULI]


def kraus_d2() -> list[np.ndarray]:
    return [_S2 * np.eye(4), _S2 * np.diag([1j, 1, -1, 1j])]


def kraus_d3() -> list[np.ndarray]:
    return [_S2 * np.eye(4), _S2 * np.kron(_PAULI[1], _PAULI[1])]


def kraus_amplitude_damping(gamma: float) -> list[np.ndarray]:
    return [np.array([[1, 0], [0, math.sqrt(1 - gamma)]]),
            np.array([[0, math.sqrt(gamma)], [0, 0]])]


def kraus_x_channel(q: float, d: int) -> list[np.ndarray]:
    """``X_q``: keep with probability ``q``, else a uniformly random shift."""
    X = x_op(d)
    return [math.sqrt(q) * np.eye(d)] + [math.sqrt((1 - q) / d) * np.linalg.matrix_power(X, v)
                                         for v in range(d)]


def kraus_depolarizing(p: float, d: int) -> list[np.ndarray]:
    """``rho -> p rho + (1 - p) 1/d`` through the Weyl operators."""
    X, Z = x_op(d), z_op(d)
    ks = [math.sqrt(p) * np.eye(d)]
    for v in range(d):
        for w in range(d):
            ks.append(math.sqrt((1 - p) / d ** 2)
                      * np.linalg.matrix_power(X, v) @ np.linalg.matrix_power(Z, w))
    return ks


def apply_kraus(rho: np.ndarray, ks: Sequence[np.ndarray]) -> np.ndarray:
    return sum(k @ rho @ k.conj().T for k in ks)


def kraus_deviation(ks: Sequence[np.ndarray]) -> float:
    s = sum(k.conj().T @ k for k in ks)
    return float(np.max(np.abs(s - np.eye(s.shape[0]))))


def unitarity_deviation(u: np.ndarray) -> float:
    return float(np.max(np.abs(u @ u.conj().T - np.eye(u.shape[0]))))


def random_density(dim: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho)


# ---------------------------------------------------------------------------
# validations


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_dev: float
    tol: float

    def __post_init__(self):
        object.__setattr__(self, "max_dev", float(self.max_dev))

    @property
    def passed(self) -> bool:
        return bool(self.max_dev <= self.tol)


def _tv(a: np.ndarray, b: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(a) - np.asarray(b)).sum())


def check_bcx(tol: float = 1e-12) -> CheckResult:
    """Unitarity, the qubit limit, invariance of Psi00 and the phase kick."""
    dev = 0.0
    cnot = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]])
    dev = max(dev, float(np.max(np.abs(build_bcx(2) - cnot))))
    for d in range(2, 8):
        dev = max(dev, unitarity_deviation(build_bcx(d)))
        for k in range(d):
            for (m, n) in itertools.product(range(2), repeat=2):
                st = DenseState.product([[(1.0, np.kron(np.eye(2)[m], np.eye(2)[n]))],
                                         [(1.0, bell_d(k, 0, d))]]).bcx(0, 1)
                want = np.exp(2j * np.pi * m * k / d) * bell_d(k, (n - m) % d, d)
                want_t = np.multiply.outer(np.kron(np.eye(2)[m], np.eye(2)[n]).reshape(2, 2),
                                           want.reshape(d, d)).transpose(0, 2, 1, 3)
                dev = max(dev, float(np.max(np.abs(st.parts[0][1] - want_t))))
        st = DenseState.product([[(1.0, bell_d(0, 0, 2))], [(1.0, bell_d(0, 0, d))]])
        dev = max(dev, float(np.max(np.abs(st.bcx(0, 1).parts[0][1] - st.parts[0][1]))))
    return CheckResult("bcx_semantics", dev, tol)


def check_generalized_pauli(tol: float = 1e-12) -> CheckResult:
    """Local X/Z actions on qudit Bell states and the QFT index interchange."""
    dev = 0.0
    for d in range(2, 8):
        X, Z, Q = x_op(d), z_op(d), qft(d)
        I = np.eye(d)
        for m, n in itertools.product(range(d), repeat=2):
            psi = bell_d(m, n, d)
            for v, w in itertools.product(range(d), repeat=2):
                op = np.linalg.matrix_power(X, v) @ np.linalg.matrix_power(Z, w)
                lhs = np.kron(op, I) @ psi
                rhs = np.exp(2j * np.pi * v * (m + w) / d) * bell_d((m + w) % d, (n - v) % d, d)
                dev = max(dev, float(np.max(np.abs(lhs - rhs))))
                lhs = np.kron(I, op) @ psi
                rhs = np.exp(-2j * np.pi * w * n / d) * bell_d((m + w) % d, (n + v) % d, d)
                dev = max(dev, float(np.max(np.abs(lhs - rhs))))
            lhs = np.kron(Q, Q.conj().T) @ psi
            rhs = np.exp(2j * np.pi * n * m / d) * bell_d(n, (-m) % d, d)
            dev = max(dev, float(np.max(np.abs(lhs - rhs))))
        dev = max(dev, unitarity_deviation(Q), unitarity_deviation(X), unitarity_deviation(Z))
    return CheckResult("generalized_pauli_qft", dev, tol)


def check_symbolic_equivalence(tol: float = 1e-10, n_max: int = 3, d_max: int = 7
                               ) -> CheckResult:
    """Total variation between dense and symbolic readouts for counter patterns."""
    dev = 0.0
    rng = np.random.default_rng(7)
    codes = [PairState.TARGET, PairState.ERR01, PairState.ERR10, PairState.PHASE,
             PairState.MIXED]
    for n in range(1, n_max + 1):
        pool = codes if n < 3 else codes[:4]
        for cfg in itertools.product(pool, repeat=n):
            for d in range(2, d_max + 1):
                pats = [np.ones(n, dtype=int), np.arange(1, n + 1),
                        rng.integers(0, 4, size=n)]
                for reps in pats:
                    p = 1.0 if d % 2 else 0.6
                    a = simulate_protocol_step(cfg, reps, d, p=p).dist
                    b = symbolic_step(cfg, reps, d, p=p)
                    dev = max(dev, _tv(a, b))
                c = core.Configuration([int(s) for s in cfg])
                aux = core.apply_epg(c, core.AuxQudit(d))
                a = simulate_protocol_step(cfg, np.arange(1, n + 1), d).dist
                dev = max(dev, 1.0 - float(a[aux.index]))
    return CheckResult("symbolic_vs_dense", dev, tol)


def check_noisy_gates(tol: float = 1e-10) -> CheckResult:
    """Gate noise compounding for both counting conventions, n <= 2."""
    dev = 0.0
    for per_power in (False, True):
        for cfg in itertools.product(range(4), repeat=2):
            for d in (2, 3, 4):
                for reps in ([1, 1], [1, 2], [0, 2]):
                    a = simulate_protocol_step(cfg, reps, d, p=0.8, q=0.9,
                                               per_power=per_power).dist
                    b = symbolic_step(cfg, reps, d, p=0.8, q=0.9, per_power=per_power)
                    dev = max(dev, _tv(a, b))
        for d in (2, 5):
            F = 0.7
            fid = noise.noisy_gate_fidelity(F, 0.9, d)
            rho = DenseState.product([_aux_ensemble(d, noise.embedding_weight(F, 1)
                                                    if d == 2 else (F * d - 1) / (d - 1))])
            ks = kraus_x_channel(0.9, d)
            r = rho.density()
            out = sum(np.kron(np.eye(d), k) @ r @ np.kron(np.eye(d), k).conj().T for k in ks)
            ref = bell_d(0, 0, d)
            dev = max(dev, abs(float(np.real(ref.conj() @ out @ ref)) - fid))
    return CheckResult("noisy_gate_model", dev, tol)


def check_kraus(tol: float = 1e-12) -> CheckResult:
    dev = max(kraus_deviation(kraus_d1()), kraus_deviation(kraus_d2()),
              kraus_deviation(kraus_d3()))
    for g in (0.0, 0.3, 1.0):
        dev = max(dev, kraus_deviation(kraus_amplitude_damping(g)))
    for d in range(2, 8):
        for q in (0.0, 0.5, 0.99):
            dev = max(dev, kraus_deviation(kraus_x_channel(q, d)),
                      kraus_deviation(kraus_depolarizing(q, d)))
    dev = max(dev, unitarity_deviation(np.diag([1j, 1, -1, 1j])),
              unitarity_deviation(np.kron(_H, _H)), unitarity_deviation(core.BELL_BASIS))
    return CheckResult("kraus_completeness_unitarity", dev, tol)


def check_channels_vs_core(tol: float = 1e-12, samples: int = 20) -> CheckResult:
    """D1, D2, D3 and the phase-to-flip map: Kraus route against core."""
    rng = np.random.default_rng(11)
    dev = 0.0
    for _ in range(samples):
        rho = random_density(4, rng)
        b = core.BellBasisDensity.from_computational(rho)
        for ks, f in ((kraus_d1(), core.depolarize_d1), (kraus_d2(), core.depolarize_d2),
                      (kraus_d3(), core.depolarize_d3)):
            dense = apply_kraus(rho, ks)
            dev = max(dev, float(np.max(np.abs(dense - f(b).to_computational()))))
        dense = apply_kraus(rho, kraus_d3())
        HH = np.kron(_H, _H)
        dense = apply_kraus(HH @ dense @ HH.conj().T, kraus_d2())
        dev = max(dev, float(np.max(np.abs(
            dense - core.transform_phase_to_flip(b).to_computational()))))
    report = [bell_d(0, 0, 2), np.eye(4)[1], np.eye(4)[2], bell_d(1, 0, 2)]
    inputs = [bell_d(0, 0, 2), bell_d(0, 1, 2), bell_d(1, 0, 2), bell_d(1, 1, 2)]
    rows = [0, 1, 3, 1]  # Psi00, Psi01 (an amplitude error), Psi10, Psi11
    for v, row in zip(inputs, rows):
        rho = np.outer(v, v.conj())
        rho = apply_kraus(rho, kraus_d1())
        rho = apply_kraus(rho, kraus_d2())
        rho = apply_kraus(rho, kraus_d3())
        HH = np.kron(_H, _H)
        rho = apply_kraus(HH @ rho @ HH.conj().T, kraus_d2())
        w = np.array([np.real(r.conj() @ rho @ r) for r in report])
        dev = max(dev, float(np.max(np.abs(w - core.PHASE_TO_FLIP[row, :4]))))
    return CheckResult("channels_vs_core", dev, tol)


def check_amplitude_damping(tol: float = 1e-10) -> CheckResult:
    """Damping both halves of ``Psi11`` gives the spectrum ``(F, 1-F, 0, 0)``."""
    dev = 0.0
    psi = bell_d(1, 1, 2)
    for gamma in (0.05, 0.2, 0.5):
        ks = [np.kron(a, b) for a in kraus_amplitude_damping(gamma)
              for b in kraus_amplitude_damping(gamma)]
        rho = apply_kraus(np.outer(psi, psi.conj()), ks)
        F = 1 - gamma
        toy = F * np.outer(psi, psi.conj()) + (1 - F) * np.diag([1.0, 0, 0, 0])
        dev = max(dev, float(np.max(np.abs(np.sort(np.linalg.eigvalsh(rho))
                                           - np.sort(np.linalg.eigvalsh(toy))))))
    return CheckResult("amplitude_damping_spectrum", dev, tol)


def dejmps_dense(weights: Sequence[float]) -> tuple[np.ndarray, float]:
    """Two-copy DEJMPS circuit simulated on 16x16 densities.

    Rotations ``exp(-i pi/4 X)`` on A and ``exp(+i pi/4 X)`` on B, bilateral
    CNOT from copy 1 onto copy 2, Z readout of copy 2, keep on agreement.
    """
    basis = [bell_d(0, 0, 2), bell_d(0, 1, 2), bell_d(1, 0, 2), bell_d(1, 1, 2)]
    rho1 = sum(w * np.outer(v, v.conj()) for w, v in zip(weights, basis))
    rho = np.kron(rho1, rho1)  # qubits A1 B1 A2 B2
    X = _PAULI[1]
    ra = math.cos(math.pi / 4) * np.eye(2) - 1j * math.sin(math.pi / 4) * X
    rb = ra.conj()
    U = np.kron(np.kron(ra, rb), np.kron(ra, rb))
    rho = U @ rho @ U.conj().T
    cn = np.zeros((16, 16))
    for idx in range(16):
        a1, b1, a2, b2 = (idx >> 3) & 1, (idx >> 2) & 1, (idx >> 1) & 1, idx & 1
        out = (a1 << 3) | (b1 << 2) | ((a2 ^ a1) << 1) | (b2 ^ b1)
        cn[out, idx] = 1
    rho = cn @ rho @ cn.T
    P = np.zeros((16, 16))
    for idx in range(16):
        if ((idx >> 1) & 1) == (idx & 1):
            P[idx, idx] = 1
    rho = P @ rho @ P
    ps = float(np.real(np.trace(rho)))
    rho = rho.reshape(4, 4, 4, 4).trace(axis1=1, axis2=3) / ps
    return np.array([np.real(v.conj() @ rho @ v) for v in basis]), ps


def check_dejmps(tol: float = 1e-10) -> CheckResult:
    rng = np.random.default_rng(3)
    dev = 0.0
    for w in [np.array([1.0, 0, 0, 0]), np.array([0.9, 0.05, 0.05, 0])] + \
             [rng.dirichlet(np.ones(4)) for _ in range(10)]:
        a, pa = dejmps_dense(w)
        b, pb = analytics.dejmps_step(w)
        dev = max(dev, float(np.max(np.abs(a - b))), abs(pa - pb))
    return CheckResult("dejmps_map", dev, tol)


def validate_embedding(F: float, k: int, tol: float = 1e-10) -> CheckResult:
    """Embed ``k`` rank-2 pairs into one ``2^k``-level pair and compare.

    ``k`` copies of ``F Psi00 + (1-F) Psi10`` are regrouped as one qudit pair,
    twirled to Bell-diagonal form, the nonzero phase labels are balanced and
    ``QFT x QFT^dagger`` turns phase labels into amplitude labels. The
    result must equal the amplitude-noisy auxiliary of overlap ``F^k``.
    """
    if not 1 <= k <= 3:
        raise PreconditionViolated("dense embedding is limited to k <= 3")
    d = 2 ** k
    mu = F * np.outer(bell_d(0, 0, 2), bell_d(0, 0, 2).conj()) + \
        (1 - F) * np.outer(bell_d(1, 0, 2), bell_d(1, 0, 2).conj())
    rho = mu
    for _ in range(k - 1):
        rho = np.kron(rho, mu)
    # qubit order (A1 B1 A2 B2 ...) -> (A1 A2 ..., B1 B2 ...)
    rho = rho.reshape((2,) * (4 * k))
    order = [2 * i for i in range(k)] + [2 * i + 1 for i in range(k)]
    rho = rho.transpose(order + [2 * k + o for o in order]).reshape(d * d, d * d)
    basis = np.stack([bell_d(m, n, d) for m in range(d) for n in range(d)], axis=1)
    R = basis.conj().T @ rho @ basis
    dev = 0.0
    # support on zero amplitude index only
    amp = np.array([n for m in range(d) for n in range(d)])
    dev = max(dev, float(np.max(np.abs(R[amp != 0][:, amp != 0]))) if d > 1 else 0.0)
    diag = np.real(np.diag(R))
    dev = max(dev, abs(diag[0] - F ** k))
    # twirl, balance nonzero phase labels, QFT x QFT^dagger
    w_phase = np.array([diag[m * d] for m in range(d)])
    bal = np.r_[w_phase[0], np.full(d - 1, w_phase[1:].sum() / (d - 1))]
    rho_bd = sum(bal[m] * np.outer(bell_d(m, 0, d), bell_d(m, 0, d).conj()) for m in range(d))
    Q = np.kron(qft(d), qft(d).conj().T)
    out = Q @ rho_bd @ Q.conj().T
    aux = noise.embed_rank2(F, k)
    target = sum(w * np.outer(v, v.conj()) for w, v in _aux_ensemble(d, aux.fidelity_p))
    dev = max(dev, float(np.max(np.abs(out - target))))
    # orthogonality of products of zero-amplitude states to nonzero amplitudes
    if k >= 2:
        d1, d2 = 2, d // 2
        for kk in range(d2):
            for j in range(d1):
                prod = np.multiply.outer(bell_d(kk, 0, d2).reshape(d2, d2),
                                         bell_d(j, 0, d1).reshape(d1, d1))
                prod = prod.transpose(0, 2, 1, 3).reshape(-1)
                for m in range(d):
                    for n in range(1, d):
                        dev = max(dev, abs(np.vdot(bell_d(m, n, d), prod)))
    return CheckResult(f"embedding_F{F}_k{k}", dev, tol)


def validate_isotropic(d: int, tol: float = 1e-12) -> CheckResult:
    """Counter gate between ``Psi00`` and a maximally mixed aux, aux traced out."""
    if not 2 <= d <= 7:
        raise PreconditionViolated("dense isotropic check needs 2 <= d <= 7")
    dev = 0.0
    u = build_bcx(d)
    # registers (A_pair, A_aux, B_pair, B_aux)
    U = np.kron(u, u)
    for v, want in ((bell_d(0, 0, 2), 0.5 * np.diag([1.0, 0, 0, 1])),
                    (np.eye(4)[1], np.diag([0.0, 1, 0, 0])),
                    (np.eye(4)[3], np.diag([0.0, 0, 0, 1]))):
        pair = np.outer(v, v.conj()).reshape(2, 2, 2, 2)
        mixed = (np.eye(d * d) / d ** 2).reshape(d, d, d, d)
        full = np.multiply.outer(pair, mixed)  # (Ap,Bp,Ap',Bp',Aa,Ba,Aa',Ba')
        full = full.transpose(0, 4, 1, 5, 2, 6, 3, 7).reshape(4 * d * d, 4 * d * d)
        out = (U @ full @ U.conj().T).reshape(2, d, 2, d, 2, d, 2, d)
        red = np.einsum("iajbkalb->ijkl", out).reshape(4, 4)
        dev = max(dev, float(np.max(np.abs(red - want))))
    for p in (0.0, 0.4, 1.0):
        psi = bell_d(0, 0, d)
        rho = p * np.outer(psi, psi.conj()) + (1 - p) * np.eye(d * d) / d ** 2
        dev = max(dev, abs(float(np.real(psi.conj() @ rho @ psi))
                           - noise.isotropic_fidelity(p, d)))
        dd = apply_kraus(np.outer(psi, psi.conj()),
                         [np.kron(np.eye(d), k) for k in kraus_depolarizing(p, d)])
        dev = max(dev, float(np.max(np.abs(dd - rho))))
    return CheckResult(f"isotropic_d{d}", dev, tol)


# ---------------------------------------------------------------------------
# GHZ


def _ghz_vectors() -> list[np.ndarray]:
    out = []
    for x in range(8):
        if x == 0:
            v = np.zeros(8, dtype=complex)
            v[0] = v[7] = _S2
        elif x == 7:
            v = np.zeros(8, dtype=complex)
            v[0], v[7] = _S2, -_S2
        else:
            v = np.eye(8, dtype=complex)[x]
        out.append(v)
    return out


def _ghz_register(triples: Sequence[int], aux: np.ndarray, da: int) -> np.ndarray:
    """Tensor with axes (party, slot): parties A, B, C; slots triples then aux."""
    vecs = _ghz_vectors()
    t = np.array(1.0 + 0j)
    for x in triples:
        t = np.multiply.outer(t, vecs[int(x)].reshape(2, 2, 2))
    t = np.multiply.outer(t, aux.reshape(da, da, da))
    s = len(triples) + 1
    # axes currently (A1,B1,C1,A2,B2,C2,...) -> (A..., B..., C...)
    return t.transpose([3 * i for i in range(s)] + [3 * i + 1 for i in range(s)]
                       + [3 * i + 2 for i in range(s)])


def _ghz_aux(d: int, phase: int = 0) -> np.ndarray:
    v = np.zeros(d ** 3, dtype=complex)
    for k in range(d):
        v[k * d * d + k * d + k] = np.exp(2j * np.pi * k * phase / d)
    return v / math.sqrt(d)


def ghz_tcx_readout(triples: Sequence[int], reps: Sequence[int], d: int) -> np.ndarray:
    """Dense joint distribution of ``((a - b), (a - c)) mod d`` after tCX gates."""
    s = len(triples) + 1
    t = _ghz_register(triples, _ghz_aux(d), d)
    u = build_bcx(d).reshape(2, d, 2, d)
    aux = s - 1
    for i, r in enumerate(reps):
        for _ in range(int(r)):
            for party in range(3):
                ci, ti = party * s + i, party * s + aux
                t = np.moveaxis(np.tensordot(u, t, axes=([2, 3], [ci, ti])), [0, 1], [ci, ti])
    p = np.abs(t) ** 2
    axes = [aux, s + aux, 2 * s + aux]
    other = tuple(a for a in range(t.ndim) if a not in axes)
    P = p.sum(axis=other)
    out = np.zeros((d, d))
    for a, b, c in itertools.product(range(d), repeat=3):
        out[(a - b) % d, (a - c) % d] += P[a, b, c]
    return out


def ghz_parity_readout(triples: Sequence[int]) -> float:
    """Probability that the aux phase bit reads 1 after the parity circuit.

    A qubit GHZ aux controls X on every party of every triple; the aux is
    then read in the X basis on all three parties.
    """
    s = len(triples) + 1
    aux = s - 1
    t = _ghz_register(triples, _ghz_aux(2), 2)
    cnot = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]]).reshape(2, 2, 2, 2)
    for i in range(len(triples)):
        for party in range(3):
            ci, ti = party * s + aux, party * s + i
            t = np.moveaxis(np.tensordot(cnot, t, axes=([2, 3], [ci, ti])), [0, 1], [ci, ti])
    for party in range(3):
        ax = party * s + aux
        t = np.moveaxis(np.tensordot(_H, t, axes=([1], [ax])), 0, ax)
    p = np.abs(t) ** 2
    axes = [aux, s + aux, 2 * s + aux]
    other = tuple(a for a in range(t.ndim) if a not in axes)
    P = p.sum(axis=other)
    return float(sum(P[a, b, c] for a, b, c in itertools.product(range(2), repeat=3)
                     if (a + b + c) % 2))


def check_ghz(tol: float = 1e-10) -> CheckResult:
    """tCX amplitude readouts for two triples at d = 3 and the phase parity bit."""
    dev = 0.0
    d = 3
    for pair in itertools.product(range(8), repeat=2):
        for reps in ((1, 1), (1, 2)):
            dense = ghz_tcx_readout(pair, reps, d)
            if reps == (1, 1):
                u, w = core.ghz_eng(pair, d)
            else:
                u, w = core.ghz_epg(pair, d)
            want = np.zeros((d, d))
            want[u, w] = 1.0
            dev = max(dev, _tv(dense.ravel(), want.ravel()))
        pr = ghz_parity_readout(pair)
        if any(1 <= x <= 6 for x in pair):
            dev = max(dev, abs(pr - 0.5))
        else:
            dev = max(dev, abs(pr - core.ghz_phase_parity(pair)))
    return CheckResult("ghz_tcx_and_parity", dev, tol)


def run_all(tol: float | None = None) -> list[CheckResult]:
    """Run every validation; ``tol`` replaces all default tolerances."""
    def t(default):
        return default if tol is None else tol

    out = [check_bcx(t(1e-12)), check_generalized_pauli(t(1e-12)),
           check_symbolic_equivalence(t(1e-10)), check_noisy_gates(t(1e-10)),
           check_kraus(t(1e-12)), check_channels_vs_core(t(1e-12)),
           check_amplitude_damping(t(1e-10)), check_dejmps(t(1e-10))]
    for F, k in ((1.0, 1), (0.9, 2), (0.95, 3)):
        out.append(validate_embedding(F, k, t(1e-10)))
    for d in range(2, 8):
        out.append(validate_isotropic(d, t(1e-12)))
    out.append(check_ghz(t(1e-10)))
    return out
