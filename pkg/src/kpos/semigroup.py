"""One-parameter semigroups of superoperators and the map-generation workflow.

For any map Phi inside a closed convex cone that is also a semigroup with
identity and contains the completely positive maps (k-positive maps and
decomposable maps both qualify), the semigroup e^{t(K(.) + (.)K^dag + Phi)}
stays inside the cone for all t >= 0 and every matrix K. Starting from a
k-positive, non-decomposable map that is *not* conditionally completely
positive therefore produces a one-parameter family that is k-positive by
construction, leaves the CP cone immediately, and stays non-decomposable for
small enough times. The trajectory scanners locate the CP re-entry time and
the non-decomposability threshold.

Conditional complete positivity (the compressed Choi matrix
(1 − |Omega><Omega|) C(Phi) (1 − |Omega><Omega|) being PSD) characterizes
exactly the generators whose semigroups are CP at all times, so it is the
property a useful seed must fail.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import certify, linalg, qmaps, sdp
from .config import Budget, EPS_PSD, eps_decomposable, fork_rngs, parallel_map
from .errors import SeedRejected, SolverFailure
from .linalg import maximally_entangled, matrix_exp, vec, unvec
from .qmaps import SuperOperator

__all__ = [
    "GeneratorSpec",
    "GridPoint",
    "ThresholdReport",
    "WorkflowChecks",
    "WorkflowOutput",
    "ccp_test",
    "build_generator",
    "evolve",
    "find_cp_crossing",
    "find_nd_threshold",
    "trace_preserving_k",
    "run_workflow",
]


# -- conditional complete positivity -----------------------------------------------


@dataclass(frozen=True)
class CcpEvidence:
    is_ccp: bool
    min_eigenvalue: float
    eigenvector: np.ndarray


def ccp_test(op: SuperOperator, eps: float = EPS_PSD) -> CcpEvidence:
    """Check conditional complete positivity of a Hermitian-preserving map."""
    op.require_hermitian_preserving()
    if op.dim_in != op.dim_out:
        raise ValueError("ccp_test is defined for square maps")
    d = op.dim_out
    omega = maximally_entangled(d, normalized=True)
    Q = np.eye(d * d) - np.outer(omega, omega.conj())
    compressed = linalg.hermitian_part(Q @ op.choi @ Q)
    w, U = np.linalg.eigh(compressed)
    scale = max(1.0, float(np.abs(w).max(initial=0.0)))
    return CcpEvidence(bool(w[0] >= -eps * scale), float(w[0]), U[:, 0])


# -- generators and evolution --------------------------------------------------------


@dataclass(frozen=True)
class GeneratorSpec:
    """L = K(.) + (.)K^dag + Phi with its representation matrix."""

    K: np.ndarray
    phi: SuperOperator
    rep_matrix: np.ndarray

    @property
    def dim(self) -> int:
        return self.K.shape[0]


def build_generator(K: np.ndarray, phi: SuperOperator) -> GeneratorSpec:
    """Assemble the representation matrix (1 ⊗ K) + (conj(K) ⊗ 1) + R(Phi)."""
    K = np.asarray(K, dtype=complex)
    d = phi.dim_out
    if phi.dim_in != d:
        raise ValueError("generator needs a square map")
    if K.shape != (d, d):
        raise ValueError(f"K shape {K.shape} does not match map dimension {d}")
    one = np.eye(d)
    rep = np.kron(one, K) + np.kron(K.conj(), one) + phi.rep
    return GeneratorSpec(K=K, phi=phi, rep_matrix=rep)


def apply_generator(gen: GeneratorSpec, X: np.ndarray) -> np.ndarray:
    """L(X) through the representation matrix; cross-check route for tests."""
    return unvec(gen.rep_matrix @ vec(X), gen.dim, gen.dim)


def evolve(gen: GeneratorSpec, t: float) -> SuperOperator:
    """The semigroup element e^{t L} as a superoperator."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return SuperOperator.from_rep(matrix_exp(gen.rep_matrix, t), gen.dim, gen.dim)


def trace_preserving_k(H: np.ndarray, phi: SuperOperator) -> np.ndarray:
    """K = iH − (1/2) Phi^*(1) makes the generated semigroup trace preserving."""
    H = np.asarray(H, dtype=complex)
    if not linalg.is_hermitian(H):
        raise ValueError("H must be Hermitian")
    d = phi.dim_out
    return 1j * H - 0.5 * phi.adjoint_apply(np.eye(d, dtype=complex))


# -- trajectory scans -------------------------------------------------------------------


@dataclass(frozen=True)
class GridPoint:
    t: float
    lambda_min: float
    d_value: float | None = None
    note: str | None = None


@dataclass(frozen=True)
class ThresholdReport:
    """Scan summary along one trajectory.

    ``t_cp`` is the first time the Choi spectrum re-enters the PSD cone (0.0
    for CCP seeds whose trajectory never leaves it, None if no crossing up to
    ``scan_max``). ``t_nd`` is the refined boundary between D > eps_D and
    D <= eps_D (None if D is below threshold at every grid point; equal to
    ``scan_max`` when it never drops). All CP sign changes are recorded.
    """

    t_cp: float | None
    t_nd: float | None
    grid: tuple[GridPoint, ...]
    scan_max: float
    seed_is_ccp: bool
    cp_sign_changes: tuple[float, ...] = ()
    notes: tuple[str, ...] = ()


def _lambda_min_at(gen: GeneratorSpec, t: float) -> float:
    return evolve(gen, t).lambda_min


def find_cp_crossing(
    gen: GeneratorSpec,
    t_max: float,
    grid_points: int = 50,
    eps: float = EPS_PSD,
    resolution: float = 1e-4,
) -> tuple[float | None, list[GridPoint], list[float], bool]:
    """Locate the first time the trajectory's Choi matrix becomes PSD again.

    Scans lambda_min(C(e^{tL})) on a uniform grid over (0, t_max], brackets the
    first sign change from below −eps to above, and bisects. The bisection
    refines t beyond ``resolution`` until |lambda_min| <= eps so the reported
    crossing sits on the cone boundary. CCP seeds make the trajectory CP at
    every grid point; that is reported as a crossing at t = 0.
    """
    seed_ccp = ccp_test(gen.phi).is_ccp
    ts = np.linspace(0.0, t_max, grid_points + 1)[1:]
    lams = [_lambda_min_at(gen, t) for t in ts]
    grid = [GridPoint(float(t), float(l)) for t, l in zip(ts, lams)]
    inside = [l >= -eps for l in lams]
    sign_changes = [
        float(ts[i + 1]) for i in range(len(ts) - 1) if inside[i] != inside[i + 1]
    ]
    if all(inside):
        return 0.0, grid, sign_changes, seed_ccp
    first_cross = None
    for i in range(len(ts) - 1):
        if not inside[i] and inside[i + 1]:
            first_cross = i
            break
    if first_cross is None:
        return None, grid, sign_changes, seed_ccp
    lo, hi = float(ts[first_cross]), float(ts[first_cross + 1])
    lam_hi = lams[first_cross + 1]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lam_mid = _lambda_min_at(gen, mid)
        if lam_mid >= -eps:
            hi, lam_hi = mid, lam_mid
        else:
            lo = mid
        if hi - lo < resolution and abs(lam_hi) <= eps:
            break
        if hi - lo < 1e-13:
            break
    return hi, grid, sign_changes, seed_ccp


def find_nd_threshold(
    gen: GeneratorSpec,
    t_max: float,
    grid_points: int = 50,
    solver_tol: float = 1e-8,
    resolution: float = 1e-3,
    threads: int = 1,
) -> tuple[float | None, list[GridPoint], list[str]]:
    """Boundary between D > eps_D and D <= eps_D along the trajectory.

    Full-grid scan first (D is not known to be monotone), then bisection on
    the first D -> 0 boundary. Solver failures at individual grid points are
    recorded and skipped. Returns t_max if D stays above threshold everywhere,
    None if it is below threshold at every successful grid point.
    """
    ts = np.linspace(0.0, t_max, grid_points + 1)[1:]
    notes: list[str] = []

    def d_at(t: float) -> float:
        op = evolve(gen, float(t))
        report = sdp.decomposability(op, solver_tol)
        return report.value if report.value > report.eps_d else 0.0

    def safe_d(t: float) -> float:
        try:
            return d_at(t)
        except SolverFailure as exc:
            notes.append(f"decomposability solve failed at t={t:.6g}: {exc}")
            return float("nan")

    dvals = parallel_map(safe_d, ts, threads)
    grid = [
        GridPoint(float(t), _lambda_min_at(gen, float(t)), float(dv))
        for t, dv in zip(ts, dvals)
    ]
    ok = [(t, dv) for t, dv in zip(ts, dvals) if not np.isnan(dv)]
    if not ok:
        raise SolverFailure("decomposability failed at every grid point")
    if all(dv == 0.0 for _, dv in ok):
        return None, grid, notes
    if all(dv > 0.0 for _, dv in ok):
        return float(t_max), grid, notes
    lo = hi = None
    for (t0, d0), (t1, d1) in zip(ok, ok[1:]):
        if d0 > 0.0 and d1 == 0.0:
            lo, hi = float(t0), float(t1)
            break
    if lo is None:
        # trajectory starts decomposable on the grid; no positive window found
        return None, grid, notes
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        dm = safe_d(mid)
        if np.isnan(dm):
            break
        if dm > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), grid, notes


def scan_trajectory(
    gen: GeneratorSpec,
    t_max: float,
    grid_points: int = 50,
    solver_tol: float = 1e-8,
    threads: int = 1,
) -> ThresholdReport:
    """Run both threshold searches and merge the grids."""
    t_cp, cp_grid, sign_changes, seed_ccp = find_cp_crossing(gen, t_max, grid_points)
    t_nd, nd_grid, notes = find_nd_threshold(
        gen, t_max, grid_points, solver_tol, threads=threads
    )
    return ThresholdReport(
        t_cp=t_cp,
        t_nd=t_nd,
        grid=tuple(nd_grid),
        scan_max=t_max,
        seed_is_ccp=seed_ccp,
        cp_sign_changes=tuple(sign_changes),
        notes=tuple(notes),
    )


# -- the generation workflow ---------------------------------------------------------------


@dataclass(frozen=True)
class WorkflowChecks:
    k_positive_by_construction: bool
    not_cp: bool
    non_decomposable: bool
    not_ccp: bool

    @property
    def all_pass(self) -> bool:
        return (
            self.k_positive_by_construction
            and self.not_cp
            and self.non_decomposable
            and self.not_ccp
        )


@dataclass(frozen=True)
class WorkflowOutput:
    certified_map: SuperOperator
    t_chosen: float
    K: np.ndarray
    checks: WorkflowChecks
    report: ThresholdReport


@dataclass(frozen=True)
class WorkflowRun:
    outputs: tuple[WorkflowOutput, ...]
    rejected: tuple[str, ...] = field(default_factory=tuple)


def _check_output(
    op: SuperOperator, k: int, budget: Budget, rng: np.random.Generator, solver_tol: float
) -> WorkflowChecks:
    sampled = certify.refute_by_sampling(op, k, budget.samples, rng)
    not_cp = not certify.exact_cp_check(op).certified
    non_dec = not sdp.decomposability(op, solver_tol).is_decomposable
    not_ccp = not ccp_test(op).is_ccp
    return WorkflowChecks(
        k_positive_by_construction=not sampled.refuted,
        not_cp=not_cp,
        non_decomposable=non_dec,
        not_ccp=not_ccp,
    )


def run_workflow(
    seed: SuperOperator,
    k: int,
    n_k: int,
    t_max: float,
    rng: np.random.Generator,
    budget: Budget = Budget(),
    grid_points: int | None = None,
    solver_tol: float = 1e-8,
    threads: int = 1,
) -> WorkflowRun:
    """Generate non-decomposable k-positive maps from one qualifying seed.

    Preconditions on the seed (each rechecked here): not refuted at k,
    non-decomposable, and not conditionally completely positive. For K = 0 and
    ``n_k`` random unit-Frobenius Ginibre draws, the trajectory thresholds are
    scanned and a candidate is emitted at t = min(t_nd, t_cp)/2 with all
    checks re-run, so a passing output can seed the next layer.
    """
    grid_points = budget.grid_points if grid_points is None else grid_points
    seed.require_hermitian_preserving()
    d = seed.dim_out

    if certify.certify_kpos(seed, k, budget, rng, solver_tol=solver_tol).refuted:
        raise SeedRejected(f"seed is not {k}-positive (refuted)")
    if sdp.decomposability(seed, solver_tol).is_decomposable:
        raise SeedRejected("seed is decomposable")
    if ccp_test(seed).is_ccp:
        raise SeedRejected("seed is conditionally completely positive")

    draws: list[np.ndarray] = [np.zeros((d, d), dtype=complex)]
    for child in fork_rngs(rng, n_k):
        G = linalg.ginibre(child, d, d)
        draws.append(G / np.linalg.norm(G))

    outputs: list[WorkflowOutput] = []
    rejected: list[str] = []
    for idx, K in enumerate(draws):
        gen = build_generator(K, seed)
        report = scan_trajectory(gen, t_max, grid_points, solver_tol, threads)
        candidates = [t for t in (report.t_nd, report.t_cp) if t is not None and t > 0]
        if report.t_nd is None:
            rejected.append(f"K[{idx}]: no non-decomposable window found on the grid")
            continue
        t_chosen = min(candidates) / 2
        out_map = evolve(gen, t_chosen)
        checks = _check_output(out_map, k, budget, rng, solver_tol)
        if checks.all_pass:
            outputs.append(
                WorkflowOutput(
                    certified_map=out_map,
                    t_chosen=t_chosen,
                    K=K,
                    checks=checks,
                    report=report,
                )
            )
        else:
            rejected.append(f"K[{idx}]: output checks failed at t={t_chosen:.4g}: {checks}")
    return WorkflowRun(outputs=tuple(outputs), rejected=tuple(rejected))
