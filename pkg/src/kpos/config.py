"""Run configuration: tolerances, effort budgets, and RNG plumbing.

Every stochastic routine takes an explicit ``numpy.random.Generator``; nothing
in the package touches global RNG state. Sub-streams for parallel work are
forked deterministically with ``Generator.spawn``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

#: Absolute eigenvalue-sign tolerance on unit-normalized operators.
EPS_PSD = 1e-9

#: Default target tolerance handed to the conic solver.
SOLVER_TOL = 1e-8


def eps_decomposable(choi: np.ndarray, base: float = 1e-7) -> float:
    """Zero-threshold for the decomposability value, scaled to the operator.

    Relative scaling keeps trajectory scans stable when the evolved maps grow
    in norm.
    """
    scale = float(np.linalg.norm(choi, ord=2)) if choi.size else 1.0
    return base * max(1.0, scale)


@dataclass(frozen=True)
class Tolerances:
    eps_psd: float = EPS_PSD
    eps_d: float = 1e-7          # base value; scaled by eps_decomposable
    solver_tol: float = SOLVER_TOL


@dataclass(frozen=True)
class Budget:
    """Effort knobs for the heuristic maximizers and samplers.

    Desk-scale instances (d <= 4) converge in far fewer sweeps than the caps.
    """

    restarts: int = 64
    samples: int = 5000
    grid_points: int = 50
    max_sweeps: int = 500
    sweep_tol: float = 1e-9


@dataclass(frozen=True)
class RunConfig:
    master_seed: int = 0
    tolerances: Tolerances = field(default_factory=Tolerances)
    budget: Budget = field(default_factory=Budget)
    threads: int = 1
    output_path: str | None = None

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.master_seed)

    def to_dict(self) -> dict:
        return asdict(self)


def fork_rngs(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """Deterministically fork ``n`` independent child generators."""
    return list(rng.spawn(n))


def parallel_map(fn, items, threads: int = 1) -> list:
    """Map ``fn`` over ``items``, optionally on a thread pool.

    Results are collected in input order, so the output is identical to the
    sequential run regardless of scheduling.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
