"""Seeded Monte-Carlo driver for protocol runs.

Trials are processed in fixed-size chunks. Chunk ``c`` of parameter point
``p`` draws from ``SeedSequence(seed, spawn_key=(p, c))``, so results do
not depend on how many workers share the work.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import PAIR_FIDELITY, Configuration, ProductEnsemble, sample_configurations
from .protocols import ProtocolResult

CHUNK = 1 << 15

RunFn = Callable[[Configuration, np.random.Generator], ProtocolResult]


def chunk_rng(seed: int, point: int, chunk: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(point, chunk)))


def worker_count(requested: int | None = None) -> int:
    """Workers to use: ``requested`` (default 1), capped by ``EIPSIM_THREADS``."""
    w = 1 if requested is None else max(1, int(requested))
    cap = os.environ.get("EIPSIM_THREADS")
    if cap:
        w = min(w, max(1, int(cap)))
    return w


def _summarise(r: ProtocolResult) -> tuple:
    if r.kept:
        idx = np.fromiter(r.kept, dtype=np.int64, count=len(r.kept)) - 1
        fid = PAIR_FIDELITY[r.final[idx]]
        good = int(np.count_nonzero(r.final[idx] == 0))
        fsum, fprod = float(fid.sum()), float(np.prod(fid))
    else:
        good, fsum, fprod = 0, 0.0, 0.0
    return (len(r.kept), good, r.aborted, r.resources_ebits, fsum, fprod,
            r.branch or "", r.all_correct)


_FIELDS = ("kept", "good", "aborted", "resources", "fid_sum", "fid_prod", "branch", "correct")


def _run_chunk(run: RunFn, ensemble: ProductEnsemble, size: int, seed: int, point: int,
               chunk: int, deterministic: bool) -> list[tuple]:
    rng = chunk_rng(seed, point, chunk)
    configs = sample_configurations(ensemble, rng, size)
    if deterministic:
        rows = np.ascontiguousarray(configs).view(np.dtype((np.void, configs.shape[1])))[:, 0]
        uniq, first, inverse = np.unique(rows, return_index=True, return_inverse=True)
        out = [_summarise(run(Configuration(configs[i]), rng)) for i in first]
        return [out[j] for j in inverse.ravel()]
    return [_summarise(run(Configuration(c), rng)) for c in configs]


@dataclass
class MonteCarloResult:
    """Per-run records of a Monte-Carlo batch.

    Attributes
    ----------
    n : int
        Ensemble size.
    kept, good : numpy.ndarray
        Kept pairs and kept pairs that are truly Target, per run.
    aborted, correct : numpy.ndarray of bool
    resources : numpy.ndarray
        Consumed ebits per run.
    fid_sum, fid_prod : numpy.ndarray
        Sum and product of the kept pairs' target overlaps.
    branch : numpy.ndarray of str
    """

    n: int
    kept: np.ndarray
    good: np.ndarray
    aborted: np.ndarray
    resources: np.ndarray
    fid_sum: np.ndarray
    fid_prod: np.ndarray
    branch: np.ndarray
    correct: np.ndarray
    extras: dict = field(default_factory=dict)

    @classmethod
    def from_rows(cls, n: int, rows: list[tuple]) -> "MonteCarloResult":
        if not rows:
            cols = [np.zeros(0, dtype=t) for t in (int, int, bool, float, float, float, str, bool)]
        else:
            z = list(zip(*rows))
            cols = [np.asarray(z[0], dtype=np.int64), np.asarray(z[1], dtype=np.int64),
                    np.asarray(z[2], dtype=bool), np.asarray(z[3], dtype=float),
                    np.asarray(z[4], dtype=float), np.asarray(z[5], dtype=float),
                    np.asarray(z[6], dtype=str), np.asarray(z[7], dtype=bool)]
        return cls(n, *cols)

    @property
    def trials(self) -> int:
        return int(self.kept.size)

    @property
    def with_output(self) -> np.ndarray:
        return (~self.aborted) & (self.kept > 0)

    @property
    def local_fidelity_runs(self) -> np.ndarray:
        m = self.with_output
        return self.fid_sum[m] / self.kept[m]

    def branch_local_fidelity(self, branch: str) -> tuple[float, float, int]:
        """Mean, standard error and count of per-run F_local on one branch."""
        m = self.with_output & (self.branch == branch)
        return _mean_se(self.fid_sum[m] / np.maximum(self.kept[m], 1))

    def summary(self) -> dict[str, float]:
        """Aggregate yield, fidelities, abort rate and resources with standard errors."""
        y = (self.kept - self.resources) / self.n
        yl, yl_se, _ = _mean_se(y)
        fl, fl_se, _ = _mean_se(self.local_fidelity_runs)
        fg, fg_se, _ = _mean_se(self.fid_prod[self.with_output])
        ab, ab_se, _ = _mean_se(self.aborted.astype(float))
        rs, rs_se, _ = _mean_se(self.resources)
        return {"trials": self.trials, "yield": yl, "yield_se": yl_se,
                "F_local": fl, "F_local_se": fl_se, "F_global": fg, "F_global_se": fg_se,
                "abort_rate": ab, "abort_rate_se": ab_se,
                "resources": rs, "resources_se": rs_se}


def _mean_se(x: np.ndarray) -> tuple[float, float, int]:
    k = int(x.size)
    if k == 0:
        return math.nan, math.nan, 0
    if k == 1:
        return float(x[0]), math.nan, 1
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(k)), k


def run_batch(run: RunFn, ensemble: ProductEnsemble, trials: int, seed: int,
              point: int = 0, deterministic: bool = False,
              workers: int | None = None, chunk: int = CHUNK) -> MonteCarloResult:
    """Run ``trials`` independent protocol runs on sampled configurations.

    Parameters
    ----------
    run : callable
        ``run(configuration, rng) -> ProtocolResult``; must be picklable when
        more than one worker is used.
    ensemble : ProductEnsemble
    trials, seed, point : int
        Batch size, root seed and parameter-point index of the seed key.
    deterministic : bool
        Declare that ``run`` ignores its generator, so identical
        configurations inside a chunk are simulated once.
    workers : int, optional
        Process count; capped by ``EIPSIM_THREADS``.
    """
    if trials < 0:
        raise ValueError("trials must be non-negative")
    sizes = [min(chunk, trials - s) for s in range(0, trials, chunk)]
    args = [(run, ensemble, sz, seed, point, c, deterministic) for c, sz in enumerate(sizes)]
    w = min(worker_count(workers), max(1, len(args)))
    rows: list[tuple] = []
    if w == 1:
        for a in args:
            rows += _run_chunk(*a)
    else:
        with ProcessPoolExecutor(max_workers=w) as ex:
            for part in ex.map(_run_chunk, *zip(*args)):
                rows += part
    return MonteCarloResult.from_rows(ensemble.n, rows)
