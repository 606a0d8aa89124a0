"""Abstract conic programs and the semidefinite tests built on them.

A :class:`ConicProgram` is pure data: named Hermitian blocks (PSD-constrained
or free), matrix-shaped affine equalities whose coefficients are sparse linear
operators acting on column-stacked blocks, and a real-linear objective. The
backend compiles it to cvxpy and solves with an interior-point solver
(CLARABEL, falling back to SCS); complex Hermitian blocks are realified by the
backend via the standard 2x2 embedding.

On top of the generic layer sit the four tests used throughout the package:

* ``ky_fan_sdp``          max tr(BM) over 0 <= M <= 1, tr M <= k
* ``ppt_relaxation``      min tr(C(Phi ⊗ id_k) P) over PSD, PPT, trace-one P
* ``decomposability``     D(Phi) = min ||S||_1 with C(Phi) = P1 + P2^{T_2} + S
* ``ppt_square_joint``    joint minimization over CP∩CcoP inner maps N

plus a random CP∩CcoP Choi sampler for the scan variant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp

import cvxpy as cp

from . import linalg, qmaps
from .config import EPS_PSD, SOLVER_TOL, eps_decomposable, fork_rngs, parallel_map
from .errors import NotPSD, SolverFailure
from .linalg import BipartiteShape
from .qmaps import SuperOperator

__all__ = [
    "Block",
    "LinearTerm",
    "MatrixEquality",
    "ObjectiveTerm",
    "ConicProgram",
    "SolverStatus",
    "SolverResult",
    "DecompositionReport",
    "solve",
    "program_to_json",
    "ky_fan_sdp",
    "ppt_relaxation",
    "ppt_relaxation_result",
    "decomposability",
    "ppt_square_joint",
    "ppt_square_scan",
    "random_cp_ccop_choi",
    "op_identity",
    "op_trace",
    "op_partial_transpose",
    "op_from_matrix_map",
]


# -- program data model ---------------------------------------------------------


@dataclass(frozen=True)
class Block:
    """A Hermitian matrix variable; ``psd=False`` leaves it sign-free."""

    name: str
    dim: int
    psd: bool = True


@dataclass(frozen=True)
class LinearTerm:
    """op @ vec(X_block), with vec column-stacking; op maps to vec of an out-matrix."""

    block: str
    op: sp.spmatrix


@dataclass(frozen=True)
class MatrixEquality:
    """sum of terms == constant, as dim x dim matrices."""

    name: str
    dim: int
    terms: tuple[LinearTerm, ...]
    constant: np.ndarray


@dataclass(frozen=True)
class ObjectiveTerm:
    """Contributes Re tr(weight^dag X_block); weight Hermitian keeps it real."""

    block: str
    weight: np.ndarray


@dataclass(frozen=True)
class ConicProgram:
    blocks: tuple[Block, ...]
    equalities: tuple[MatrixEquality, ...] = ()
    objective: tuple[ObjectiveTerm, ...] = ()
    sense: str = "min"

    def block(self, name: str) -> Block:
        for b in self.blocks:
            if b.name == name:
                return b
        raise KeyError(name)


# sparse operator constructors (all act on column-stacked n x n blocks)


def op_identity(n: int, scale: complex = 1.0) -> sp.spmatrix:
    return sp.identity(n * n, format="csr", dtype=complex) * scale


def op_trace(n: int) -> sp.spmatrix:
    """vec(X) -> the 1x1 matrix [tr X]."""
    row = np.zeros(n * n, dtype=complex)
    row[:: n + 1] = 1.0
    return sp.csr_matrix(row.reshape(1, n * n))


def op_from_matrix_map(f, n: int, out_dim: int | None = None) -> sp.spmatrix:
    """Materialize a linear matrix map X -> f(X) as a sparse operator on vec(X)."""
    out_dim = out_dim or n
    cols = []
    for j in range(n * n):
        E = np.zeros((n, n), dtype=complex)
        E[j % n, j // n] = 1.0  # column-stacking order
        cols.append(linalg.vec(f(E)))
    dense = np.column_stack(cols)
    dense[np.abs(dense) < 1e-15] = 0.0
    return sp.csr_matrix(dense)


def op_partial_transpose(dA: int, dB: int, subsystem: str) -> sp.spmatrix:
    shape = BipartiteShape(dA, dB)
    return op_from_matrix_map(
        lambda X: linalg.partial_transpose(X, shape, subsystem), dA * dB
    )


# -- solver bridge ----------------------------------------------------------------


class SolverStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITER = "max_iter"
    NUMERICAL_TROUBLE = "numerical_trouble"


@dataclass
class SolverResult:
    status: SolverStatus
    objective: float
    primal: dict[str, np.ndarray]
    dual_gap: float
    residuals: dict[str, float] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status is SolverStatus.OPTIMAL


_STATUS_MAP = {
    cp.OPTIMAL: SolverStatus.OPTIMAL,
    cp.OPTIMAL_INACCURATE: SolverStatus.NUMERICAL_TROUBLE,
    cp.INFEASIBLE: SolverStatus.INFEASIBLE,
    cp.INFEASIBLE_INACCURATE: SolverStatus.INFEASIBLE,
    cp.UNBOUNDED: SolverStatus.NUMERICAL_TROUBLE,
    cp.UNBOUNDED_INACCURATE: SolverStatus.NUMERICAL_TROUBLE,
    cp.USER_LIMIT: SolverStatus.MAX_ITER,
}


def _compile(program: ConicProgram):
    variables = {
        b.name: cp.Variable((b.dim, b.dim), hermitian=True, name=b.name)
        for b in program.blocks
    }
    psd_constraints = {
        b.name: variables[b.name] >> 0 for b in program.blocks if b.psd
    }
    constraints = list(psd_constraints.values())
    for eq in program.equalities:
        expr = 0
        for term in eq.terms:
            X = variables[term.block]
            expr = expr + term.op @ cp.reshape(X, (X.shape[0] * X.shape[1],), order="F")
        constraints.append(expr == linalg.vec(eq.constant))
    obj_expr = 0
    for term in program.objective:
        # Re tr(W^dag X) as an entrywise sum
        obj_expr = obj_expr + cp.real(cp.sum(cp.multiply(np.conj(term.weight), variables[term.block])))
    objective = cp.Minimize(obj_expr) if program.sense == "min" else cp.Maximize(obj_expr)
    return cp.Problem(objective, constraints), variables, psd_constraints


def _residuals(program: ConicProgram, primal: dict[str, np.ndarray]) -> dict[str, float]:
    res = {}
    for eq in program.equalities:
        acc = -linalg.vec(eq.constant)
        for term in eq.terms:
            acc = acc + term.op @ linalg.vec(primal[term.block])
        res[f"eq:{eq.name}"] = float(np.abs(acc).max(initial=0.0))
    for b in program.blocks:
        if b.psd:
            w = np.linalg.eigvalsh(linalg.hermitian_part(primal[b.name]))
            res[f"psd:{b.name}"] = float(max(0.0, -w[0]))
    return res


def solve(program: ConicProgram, tol: float = SOLVER_TOL) -> SolverResult:
    """Solve a conic program; deterministic for identical input.

    ``status`` is only OPTIMAL when the backend reports optimality and the
    reconstructed primal satisfies all constraints within ``max(100*tol, 1e-6)``
    (absolute, after hermitization). Failures are reported in the status, never
    silently returned as optimal.
    """
    problem, variables, psd_constraints = _compile(program)
    solved = False
    for solver, kwargs in (
        (cp.CLARABEL, {"tol_gap_abs": tol, "tol_gap_rel": tol, "tol_feas": tol}),
        (cp.SCS, {"eps": max(tol, 1e-9), "max_iters": 100_000}),
    ):
        try:
            problem.solve(solver=solver, **kwargs)
        except (cp.SolverError, Exception):  # noqa: BLE001 - backend quirks vary
            continue
        if problem.status in _STATUS_MAP:
            solved = True
            break
    if not solved:
        raise SolverFailure("no backend produced a solution")
    status = _STATUS_MAP[problem.status]
    if problem.status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE, cp.UNBOUNDED):
        return SolverResult(status, float("nan"), {}, float("nan"))

    primal = {
        name: linalg.hermitian_part(np.asarray(var.value, dtype=complex))
        for name, var in variables.items()
    }
    residuals = _residuals(program, primal)
    # complementarity of the PSD pairs as a duality-gap proxy
    gap = 0.0
    for name, con in psd_constraints.items():
        Z = con.dual_value
        if Z is not None:
            gap += abs(float(np.real(np.trace(linalg.dagger(Z) @ primal[name]))))
    accept = max(100 * tol, 1e-6)
    if status is SolverStatus.OPTIMAL and max(residuals.values(), default=0.0) > accept:
        status = SolverStatus.NUMERICAL_TROUBLE
    return SolverResult(
        status=status,
        objective=float(problem.value),
        primal=primal,
        dual_gap=float(gap),
        residuals=residuals,
    )


def program_to_json(program: ConicProgram) -> dict:
    """Self-describing dump (blocks, sparse-triplet equalities, objective)."""

    def triplets(M: sp.spmatrix) -> list:
        M = M.tocoo()
        return [
            [int(r), int(c), float(v.real), float(v.imag)]
            for r, c, v in zip(M.row, M.col, M.data)
        ]

    def cmat(A: np.ndarray) -> list:
        return [[[float(z.real), float(z.imag)] for z in row] for row in A]

    return {
        "blocks": [{"name": b.name, "dim": b.dim, "psd": b.psd} for b in program.blocks],
        "equalities": [
            {
                "name": eq.name,
                "dim": eq.dim,
                "terms": [
                    {"block": t.block, "op_shape": list(t.op.shape), "op": triplets(t.op)}
                    for t in eq.terms
                ],
                "constant": cmat(eq.constant),
            }
            for eq in program.equalities
        ],
        "objective": [
            {"block": t.block, "weight": cmat(t.weight)} for t in program.objective
        ],
        "sense": program.sense,
        "vec_order": "column-major",
    }


# -- named programs -----------------------------------------------------------------


def ky_fan_program(B: np.ndarray, k: int) -> ConicProgram:
    """max tr(BM) s.t. 0 <= M <= 1, tr(M) <= k, as PSD blocks plus slacks."""
    B = np.asarray(B, dtype=complex)
    n = B.shape[0]
    one = np.eye(n, dtype=complex)
    return ConicProgram(
        blocks=(Block("M", n), Block("Mc", n), Block("s", 1)),
        equalities=(
            MatrixEquality("cap", n, (LinearTerm("M", op_identity(n)), LinearTerm("Mc", op_identity(n))), one),
            MatrixEquality(
                "trace",
                1,
                (LinearTerm("M", op_trace(n)), LinearTerm("s", op_identity(1))),
                np.array([[float(k)]], dtype=complex),
            ),
        ),
        objective=(ObjectiveTerm("M", linalg.hermitian_part(B)),),
        sense="max",
    )


def ky_fan_sdp(B: np.ndarray, k: int, tol: float = SOLVER_TOL) -> float:
    """Ky Fan norm of a PSD matrix as the optimum of its defining SDP."""
    B = np.asarray(B, dtype=complex)
    if not linalg.is_hermitian(B) or np.linalg.eigvalsh(linalg.hermitian_part(B))[0] < -EPS_PSD * max(
        1.0, float(np.abs(B).max())
    ):
        raise NotPSD("ky_fan_sdp expects a PSD input")
    if not (1 <= k <= B.shape[0]):
        raise ValueError(f"k={k} out of range")
    result = solve(ky_fan_program(B, k), tol)
    if not result.ok:
        raise SolverFailure(f"ky_fan_sdp: {result.status}")
    return result.objective


def ppt_relaxation_program(op: SuperOperator, k: int) -> ConicProgram:
    """min tr(C(Phi ⊗ id_k) P) over P PSD, tr P = 1, P^{T_1} PSD."""
    op.require_hermitian_preserving()
    ext = qmaps.tensor_with_identity(op, k)
    n = ext.dim_in  # = d*k; P lives on C^n ⊗ C^n
    nn = n * n
    return ConicProgram(
        blocks=(Block("P", nn), Block("Q", nn)),
        equalities=(
            MatrixEquality(
                "ppt",
                nn,
                (
                    LinearTerm("P", op_partial_transpose(n, n, "first")),
                    LinearTerm("Q", op_identity(nn, -1.0)),
                ),
                np.zeros((nn, nn), dtype=complex),
            ),
            MatrixEquality(
                "trace", 1, (LinearTerm("P", op_trace(nn)),), np.array([[1.0 + 0j]])
            ),
        ),
        objective=(ObjectiveTerm("P", linalg.hermitian_part(ext.choi)),),
        sense="min",
    )


def ppt_relaxation_result(op: SuperOperator, k: int, tol: float = SOLVER_TOL) -> SolverResult:
    result = solve(ppt_relaxation_program(op, k), tol)
    if not result.ok:
        raise SolverFailure(f"ppt_relaxation: {result.status}")
    n = op.dim_out * k
    P = result.primal["P"]
    shape = BipartiteShape(n, n)
    result.primal["rho"] = linalg.partial_trace_weighted(P, shape, "second")
    result.primal["omega"] = linalg.partial_trace_weighted(P, shape, "first")
    return result


def ppt_relaxation(op: SuperOperator, k: int, tol: float = SOLVER_TOL) -> float:
    """SDP lower bound on the bilinear block-positivity minimum.

    A nonnegative value is sufficient for k-positivity of the map.
    """
    return ppt_relaxation_result(op, k, tol).objective


@dataclass
class DecompositionReport:
    value: float
    P1: np.ndarray
    P2: np.ndarray
    S: np.ndarray
    eps_d: float
    is_decomposable: bool
    solver: SolverResult


def _trace_norm_epigraph_blocks(n: int, prefix: str = "") -> tuple[tuple[Block, ...], tuple[MatrixEquality, ...]]:
    """Blocks/equalities for ||S||_1 = min tr Y with -Y <= S <= Y, S free."""
    blocks = (
        Block(prefix + "S", n, psd=False),
        Block(prefix + "Y", n),
        Block(prefix + "Up", n),
        Block(prefix + "Um", n),
    )
    zero = np.zeros((n, n), dtype=complex)
    eqs = (
        MatrixEquality(
            prefix + "epi+",
            n,
            (
                LinearTerm(prefix + "Y", op_identity(n)),
                LinearTerm(prefix + "S", op_identity(n, -1.0)),
                LinearTerm(prefix + "Up", op_identity(n, -1.0)),
            ),
            zero,
        ),
        MatrixEquality(
            prefix + "epi-",
            n,
            (
                LinearTerm(prefix + "Y", op_identity(n)),
                LinearTerm(prefix + "S", op_identity(n)),
                LinearTerm(prefix + "Um", op_identity(n, -1.0)),
            ),
            zero,
        ),
    )
    return blocks, eqs


def decomposability_program(choi: np.ndarray, d: int) -> ConicProgram:
    n = d * d
    slack_blocks, slack_eqs = _trace_norm_epigraph_blocks(n)
    blocks = (Block("P1", n), Block("P2", n)) + slack_blocks
    split = MatrixEquality(
        "split",
        n,
        (
            LinearTerm("P1", op_identity(n)),
            LinearTerm("P2", op_partial_transpose(d, d, "second")),
            LinearTerm("S", op_identity(n)),
        ),
        np.asarray(choi, dtype=complex),
    )
    return ConicProgram(
        blocks=blocks,
        equalities=(split,) + slack_eqs,
        objective=(ObjectiveTerm("Y", np.eye(n, dtype=complex)),),
        sense="min",
    )


def decomposability(op: SuperOperator, tol: float = SOLVER_TOL) -> DecompositionReport:
    """D(Phi) = min ||S||_1 over C(Phi) = P1 + P2^{T_2} + S with P1, P2 PSD.

    D(Phi) = 0 exactly for decomposable maps; ``is_decomposable`` applies the
    relative threshold ``eps_decomposable``.
    """
    op.require_hermitian_preserving()
    if op.dim_in != op.dim_out:
        raise ValueError("decomposability is defined for square maps")
    d = op.dim_out
    result = solve(decomposability_program(op.choi, d), tol)
    if result.status in (SolverStatus.INFEASIBLE,):
        raise SolverFailure("decomposability program reported infeasible")
    eps_d = eps_decomposable(op.choi)
    value = max(0.0, float(result.objective))
    return DecompositionReport(
        value=value,
        P1=result.primal.get("P1"),
        P2=result.primal.get("P2"),
        S=result.primal.get("S"),
        eps_d=eps_d,
        is_decomposable=bool(value <= eps_d),
        solver=result,
    )


def _link_operator(choi_psi: np.ndarray, d: int) -> sp.spmatrix:
    return op_from_matrix_map(lambda N: qmaps.link_product(choi_psi, N, d), d * d)


def ppt_square_joint(
    psi: SuperOperator, normalization: float | None = None, tol: float = SOLVER_TOL
) -> SolverResult:
    """Joint minimization of ||S||_1 over inner CP∩CcoP maps N and splittings.

    Constraints: C(psi) ⋆ N = P1 + P2^{T_2} + S with P1, P2 PSD, N PSD,
    N^{T_2} PSD, tr N = normalization (default d; the program admits the
    trivial point N = 0 without it). An optimum near zero means no
    counterexample to the PPT-square statement is visible through this
    program; a clearly positive optimum would flag a candidate.
    """
    psi.require_hermitian_preserving()
    d = psi.dim_out
    if psi.dim_in != d:
        raise ValueError("ppt_square_joint expects a square map")
    if normalization is None:
        normalization = float(d)
    n = d * d
    slack_blocks, slack_eqs = _trace_norm_epigraph_blocks(n)
    blocks = (Block("N", n), Block("Nt", n), Block("P1", n), Block("P2", n)) + slack_blocks
    zero = np.zeros((n, n), dtype=complex)
    eqs = (
        MatrixEquality(
            "link",
            n,
            (
                LinearTerm("N", _link_operator(psi.choi, d)),
                LinearTerm("P1", op_identity(n, -1.0)),
                LinearTerm("P2", -1.0 * op_partial_transpose(d, d, "second")),
                LinearTerm("S", op_identity(n, -1.0)),
            ),
            zero,
        ),
        MatrixEquality(
            "ccop",
            n,
            (
                LinearTerm("N", op_partial_transpose(d, d, "second")),
                LinearTerm("Nt", op_identity(n, -1.0)),
            ),
            zero,
        ),
        MatrixEquality(
            "norm",
            1,
            (LinearTerm("N", op_trace(n)),),
            np.array([[complex(normalization)]]),
        ),
    ) + slack_eqs
    program = ConicProgram(
        blocks=blocks,
        equalities=eqs,
        objective=(ObjectiveTerm("Y", np.eye(n, dtype=complex)),),
        sense="min",
    )
    result = solve(program, tol)
    if not result.ok and result.status is not SolverStatus.NUMERICAL_TROUBLE:
        raise SolverFailure(f"ppt_square_joint: {result.status}")
    return result


def random_cp_ccop_choi(
    d: int, rng: np.random.Generator, max_rounds: int = 200, residual: float = 1e-10
) -> np.ndarray:
    """Random Choi matrix that is PSD with PSD partial transpose, trace d.

    Draw a Ginibre CP Choi, average with its partial transpose, then project
    into the PSD ∩ PSD-partial-transpose cone by alternating eigenvalue
    clipping; exit when both minimal eigenvalues clear ``-residual``.
    """
    shape = BipartiteShape(d, d)

    def clip_psd(A: np.ndarray) -> np.ndarray:
        w, U = np.linalg.eigh(linalg.hermitian_part(A))
        return (U * np.maximum(w, 0.0)) @ U.conj().T

    G = linalg.ginibre(rng, d * d, d * d)
    W = G @ G.conj().T
    N = (W + linalg.partial_transpose(W, shape, "second")) / 2
    for _ in range(max_rounds):
        N = clip_psd(N)
        Nt = clip_psd(linalg.partial_transpose(N, shape, "second"))
        N = linalg.partial_transpose(Nt, shape, "second")
        lam_n = np.linalg.eigvalsh(linalg.hermitian_part(N))[0]
        lam_t = np.linalg.eigvalsh(
            linalg.hermitian_part(linalg.partial_transpose(N, shape, "second"))
        )[0]
        if lam_n >= -residual and lam_t >= -residual:
            break
    N = linalg.hermitian_part(N)
    return N * (d / float(np.real(np.trace(N))))


def ppt_square_scan(
    psi: SuperOperator,
    n_samples: int,
    rng: np.random.Generator,
    tol: float = SOLVER_TOL,
    threads: int = 1,
) -> list[tuple[np.ndarray, float]]:
    """Sample CP∩CcoP inner maps and compute D of each composition with psi.

    Returns (N, D) pairs sorted by descending D; per-sample solver failures are
    recorded as NaN rather than aborting the scan. Any D clearly above the
    decomposability threshold is a counterexample candidate.
    """
    psi.require_hermitian_preserving()
    d = psi.dim_out
    rngs = fork_rngs(rng, n_samples)

    def one(child: np.random.Generator) -> tuple[np.ndarray, float]:
        N = random_cp_ccop_choi(d, child)
        comp = SuperOperator(qmaps.link_product(psi.choi, N, d), d, d)
        try:
            return N, decomposability(comp, tol).value
        except SolverFailure:
            return N, float("nan")

    results = parallel_map(one, rngs, threads)
    return sorted(results, key=lambda t: (np.isnan(t[1]), -t[1] if not np.isnan(t[1]) else 0.0))
