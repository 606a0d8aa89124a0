"""k-positivity decision engine.

A Hermitian-preserving map Phi on d x d matrices is k-positive iff
<psi|C(Phi)|psi> >= 0 for every vector psi of Schmidt rank at most k. Deciding
this for 1 < k < d is NP-hard territory, so the engine separates three verdict
kinds: CERTIFIED (exact complete-positivity check, SDP relaxation, or a
reference-map argument), REFUTED (always with an explicitly re-verified
witness), and UNDECIDED (with the best bounds found).

The refutation heuristics maximize three equivalent objectives, all phrased
through the completely positive shift lam_max * tr(.)1 − Phi (resp. its
k-extension) with Stinespring operator V and Kraus operators {K_i}:

* ``kraus_mixing_bound``     f(x) = || A(x) A(x)^dag ||_(k), A(x) = sum x_i K_i
* ``env_sphere_bound``       f(x) = || tr_{2,|x><x|}(V V^dag) ||_(k)
* ``tensor_spectral_bound``  spectral norm of the 3-tensor (x,y,z) -> z^T V^dag (x ⊗ y)

Phi is k-positive iff the first two never exceed lam_max, iff the third never
exceeds sqrt(k * lam_max). Each evaluated point is feasible, so every reported
value is a valid lower bound on the true maximum; exceeding the threshold
refutes, staying below proves nothing. ``seesaw_bilinear`` attacks the dual
formulation min tr(C(Phi ⊗ id_k)(rho ⊗ omega)) directly.

Restarts are independent with deterministically forked RNG streams; the best
value wins with ties broken by restart index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import linalg, qmaps, sdp
from .config import Budget, EPS_PSD, fork_rngs
from .errors import InverseMismatch
from .linalg import BipartiteShape
from .qmaps import SuperOperator, choi_quadratic_form

__all__ = [
    "Verdict",
    "WitnessKind",
    "WitnessRecord",
    "BoundsReport",
    "PositivityVerdict",
    "exact_cp_check",
    "cp_collapse_check",
    "refute_by_sampling",
    "kraus_mixing_bound",
    "env_sphere_bound",
    "tensor_spectral_bound",
    "seesaw_bilinear",
    "certify_via_reference",
    "certify_kpos",
]


class Verdict(str, Enum):
    CERTIFIED = "certified-positive"
    REFUTED = "refuted"
    UNDECIDED = "undecided"


class WitnessKind(str, Enum):
    SCHMIDT_VECTOR = "schmidt-vector"
    RANK_K_MATRIX = "rank-k-matrix"
    PPT_STATE = "ppt-state"
    PRINCIPAL_MINOR = "principal-minor"


@dataclass(frozen=True)
class WitnessRecord:
    """A concrete refutation object together with its violating value."""

    kind: WitnessKind
    payload: np.ndarray
    value: float
    k: int


@dataclass(frozen=True)
class BoundsReport:
    """Outcome of one heuristic optimizer run.

    ``best_value`` is the best feasible objective value found (for maximizers a
    lower bound on the true maximum, for minimizers an upper bound on the true
    minimum). ``gap_estimate`` is the signed slack in the method's
    k-positivity inequality; a negative slack means the method refutes.
    """

    method: str
    lambda_max: float
    best_value: float
    restarts_used: int
    gap_estimate: float
    state: dict = field(default_factory=dict)
    witness: WitnessRecord | None = None


@dataclass(frozen=True)
class PositivityVerdict:
    status: Verdict
    k: int
    method: str | None = None
    witness: WitnessRecord | None = None
    bounds: tuple[BoundsReport, ...] = ()

    @property
    def refuted(self) -> bool:
        return self.status is Verdict.REFUTED

    @property
    def certified(self) -> bool:
        return self.status is Verdict.CERTIFIED


def _checked_schmidt_witness(
    op: SuperOperator, psi: np.ndarray, k: int, eps: float = EPS_PSD
) -> WitnessRecord | None:
    """Re-evaluate a candidate witness through the Choi quadratic form."""
    psi = np.asarray(psi, dtype=complex).ravel()
    norm = np.linalg.norm(psi)
    if norm == 0:
        return None
    psi = psi / norm
    value = choi_quadratic_form(op, psi)
    if value >= -eps:
        return None
    return WitnessRecord(WitnessKind.SCHMIDT_VECTOR, psi, value, k)


# -- exact checks ------------------------------------------------------------------


def exact_cp_check(op: SuperOperator, eps: float = EPS_PSD) -> PositivityVerdict:
    """Complete positivity via positive semi-definiteness of the Choi matrix."""
    op.require_hermitian_preserving()
    C = linalg.hermitian_part(op.choi)
    w, U = np.linalg.eigh(C)
    k = min(op.dim_in, op.dim_out)
    if w[0] >= -eps:
        return PositivityVerdict(Verdict.CERTIFIED, k=k, method="exact-cp")
    witness = WitnessRecord(WitnessKind.SCHMIDT_VECTOR, U[:, 0], float(w[0]), k)
    return PositivityVerdict(Verdict.REFUTED, k=k, method="exact-cp", witness=witness)


def cp_collapse_check(op: SuperOperator, eps: float = EPS_PSD) -> PositivityVerdict:
    """Complete positivity via the collapsed shift criterion.

    With V a Stinespring operator of lam_max * tr(.)1 − Phi, the map is CP
    exactly when ||tr_1(V V^dag)||_inf <= lam_max. Must agree with
    :func:`exact_cp_check` on every input.
    """
    op.require_hermitian_preserving()
    st, lam = qmaps.shifted_stinespring(op, k=1)
    shape = BipartiteShape(op.dim_out, st.env_dim)
    gram = linalg.partial_trace_weighted(st.V @ linalg.dagger(st.V), shape, "first")
    top = float(np.linalg.eigvalsh(linalg.hermitian_part(gram))[-1])
    report = BoundsReport(
        method="cp-collapse",
        lambda_max=lam,
        best_value=top,
        restarts_used=0,
        gap_estimate=lam - top,
    )
    k = min(op.dim_in, op.dim_out)
    if top <= lam + eps:
        return PositivityVerdict(Verdict.CERTIFIED, k=k, method="cp-collapse", bounds=(report,))
    return PositivityVerdict(Verdict.REFUTED, k=k, method="cp-collapse", bounds=(report,),
                             witness=_choi_eigen_witness(op, k))


def _choi_eigen_witness(op: SuperOperator, k: int) -> WitnessRecord | None:
    w, U = np.linalg.eigh(linalg.hermitian_part(op.choi))
    if w[0] >= -EPS_PSD:
        return None
    return WitnessRecord(WitnessKind.SCHMIDT_VECTOR, U[:, 0], float(w[0]), k)


# -- sampling refuter ----------------------------------------------------------------


def refute_by_sampling(
    op: SuperOperator,
    k: int,
    n_samples: int,
    rng: np.random.Generator,
    eps: float = EPS_PSD,
    batch: int = 512,
) -> PositivityVerdict:
    """Probe <psi|C(Phi)|psi> on random Schmidt-rank-<=k unit vectors.

    Finding a value below -eps refutes k-positivity; otherwise the minimum
    observed value is returned as evidence, never as a certificate.
    """
    op.require_hermitian_preserving()
    if not (1 <= k <= min(op.dim_in, op.dim_out)):
        raise ValueError(f"k={k} out of range")
    shape = BipartiteShape(op.dim_in, op.dim_out)
    C = linalg.hermitian_part(op.choi)
    best_val = np.inf
    best_psi = None
    done = 0
    while done < n_samples:
        m = min(batch, n_samples - done)
        A = linalg.ginibre(rng, m * shape.dimA, k).reshape(m, shape.dimA, k)
        B = linalg.ginibre(rng, m * k, shape.dimB).reshape(m, k, shape.dimB)
        V = np.einsum("mak,mkb->mab", A, B).reshape(m, shape.total)
        V /= np.linalg.norm(V, axis=1, keepdims=True)
        vals = np.real(np.einsum("mi,ij,mj->m", V.conj(), C, V))
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val = float(vals[i])
            best_psi = V[i]
        done += m
    report = BoundsReport(
        method="schmidt-sampling",
        lambda_max=op.lambda_max,
        best_value=best_val,
        restarts_used=n_samples,
        gap_estimate=best_val,
        state={"psi": best_psi},
    )
    if best_val < -eps:
        witness = WitnessRecord(WitnessKind.SCHMIDT_VECTOR, best_psi, best_val, k)
        return PositivityVerdict(Verdict.REFUTED, k=k, method="schmidt-sampling",
                                 witness=witness, bounds=(report,))
    return PositivityVerdict(Verdict.UNDECIDED, k=k, method="schmidt-sampling", bounds=(report,))


# -- spectral-subspace ascent on the Kraus sphere --------------------------------------


def _top_k_projector(w: np.ndarray, U: np.ndarray, k: int, tie_tol: float = 1e-10) -> np.ndarray:
    """Projector-like M with 0 <= M <= 1, tr M = k, supported on the top-k subspace.

    Ties at the k-th eigenvalue are resolved by spreading the remaining weight
    uniformly over the full degenerate subspace, which keeps the result a
    function of spectral projectors only.
    """
    order = np.argsort(w)[::-1]
    w = w[order]
    U = U[:, order]
    n = w.size
    if k >= n:
        return np.eye(n, dtype=complex)
    scale = max(1.0, float(np.abs(w).max(initial=0.0)))
    cut = w[k - 1]
    degenerate = np.abs(w - cut) <= tie_tol * scale
    above = (w > cut) & ~degenerate
    n_above = int(np.count_nonzero(above))
    n_deg = int(np.count_nonzero(degenerate))
    M = (U[:, above] @ U[:, above].conj().T) if n_above else np.zeros((n, n), dtype=complex)
    if n_deg:
        weight = (k - n_above) / n_deg
        Ud = U[:, degenerate]
        M = M + weight * (Ud @ Ud.conj().T)
    return M


def _rank_k_vector_witness(
    op: SuperOperator, A: np.ndarray, k: int
) -> WitnessRecord | None:
    """Witness from the top-k singular subspace of A = sum_i x_i K_i.

    With Z the Frobenius-normalized rank-<=k matrix sum_a (s_a/s) |u_a><v_a|
    built from the top singular triples of A, vec(Z) has Schmidt rank <= k and
    <vec(Z)|C(Phi)|vec(Z)> <= lam_max − ||A A^dag||_(k).
    """
    U, s, Vh = np.linalg.svd(A)
    kk = min(k, s.size)
    s = s[:kk]
    norm = np.linalg.norm(s)
    if norm == 0:
        return None
    Z = (U[:, :kk] * (s / norm)) @ Vh[:kk, :]
    return _checked_schmidt_witness(op, linalg.vec(Z), k)


def kraus_mixing_bound(
    op: SuperOperator,
    k: int,
    restarts: int | None = None,
    rng: np.random.Generator | None = None,
    budget: Budget = Budget(),
) -> BoundsReport:
    """Maximize ||A(x) A(x)^dag||_(k) over the unit sphere of Kraus mixings.

    A(x) = sum_i x_i K_i with {K_i} Kraus operators of lam_max tr(.)1 − Phi.
    Each sweep lifts the current top-k spectral subspace into a Hermitian form
    H[j,i] = tr(M K_i K_j^dag) and jumps to its top eigenvector, which never
    decreases the objective. best > lam_max refutes k-positivity.
    """
    op.require_hermitian_preserving()
    restarts = budget.restarts if restarts is None else restarts
    rng = np.random.default_rng(0) if rng is None else rng
    st, lam = qmaps.shifted_stinespring(op, k=1)
    Ks = np.stack(st.kraus_operators())
    r = Ks.shape[0]

    def sweep_value(x: np.ndarray) -> tuple[float, np.ndarray]:
        A = np.einsum("i,iab->ab", x, Ks)
        B = A @ A.conj().T
        w, U = np.linalg.eigh(B)
        f = float(np.sum(np.sort(w)[::-1][:k]))
        M = _top_k_projector(w, U, k)
        H = np.einsum("pr,irq,jpq->ji", M, Ks, Ks.conj(), optimize=True)
        return f, linalg.hermitian_part(H)

    best_val, best_x = -np.inf, None
    for child in fork_rngs(rng, restarts):
        x = linalg.random_unit_vector(child, r)
        f_prev = -np.inf
        for _ in range(budget.max_sweeps):
            f, H = sweep_value(x)
            wH, UH = np.linalg.eigh(H)
            x = UH[:, -1]
            if f - f_prev < budget.sweep_tol:
                break
            f_prev = f
        f, _ = sweep_value(x)
        if f > best_val:
            best_val, best_x = f, x
    witness = None
    if best_val > lam + EPS_PSD:
        A = np.einsum("i,iab->ab", best_x, Ks)
        witness = _rank_k_vector_witness(op, A, k)
    return BoundsReport(
        method="kraus-mixing",
        lambda_max=lam,
        best_value=best_val,
        restarts_used=restarts,
        gap_estimate=lam - best_val,
        state={"x": best_x},
        witness=witness,
    )


def env_sphere_bound(
    op: SuperOperator,
    k: int,
    restarts: int | None = None,
    rng: np.random.Generator | None = None,
    budget: Budget = Budget(),
) -> BoundsReport:
    """Maximize ||tr_{2,|x><x|}(V V^dag)||_(k) over unit environment vectors.

    Pointwise equal to :func:`kraus_mixing_bound` under x -> conj(x); the sweep
    alternates between the top-k subsystem projector M and the top eigenvector
    of tr_{1,M}(V V^dag). Collapses to ||tr_1(V V^dag)||_inf at k = d.
    """
    op.require_hermitian_preserving()
    restarts = budget.restarts if restarts is None else restarts
    rng = np.random.default_rng(0) if rng is None else rng
    st, lam = qmaps.shifted_stinespring(op, k=1)
    d, r = op.dim_out, st.env_dim
    shape = BipartiteShape(d, r)
    gram = st.V @ linalg.dagger(st.V)

    def objective(x: np.ndarray) -> tuple[float, np.ndarray]:
        B = linalg.partial_trace_weighted(gram, shape, "second", np.outer(x, x.conj()))
        w, U = np.linalg.eigh(linalg.hermitian_part(B))
        f = float(np.sum(np.sort(w)[::-1][:k]))
        return f, _top_k_projector(w, U, k)

    best_val, best_x = -np.inf, None
    for child in fork_rngs(rng, restarts):
        x = linalg.random_unit_vector(child, r)
        f_prev = -np.inf
        for _ in range(budget.max_sweeps):
            f, M = objective(x)
            W = linalg.partial_trace_weighted(gram, shape, "first", M)
            wW, UW = np.linalg.eigh(linalg.hermitian_part(W))
            x = UW[:, -1]
            if f - f_prev < budget.sweep_tol:
                break
            f_prev = f
        f, _ = objective(x)
        if f > best_val:
            best_val, best_x = f, x
    witness = None
    if best_val > lam + EPS_PSD:
        Ks = np.stack(st.kraus_operators())
        A = np.einsum("i,iab->ab", best_x.conj(), Ks)
        witness = _rank_k_vector_witness(op, A, k)
    return BoundsReport(
        method="env-sphere",
        lambda_max=lam,
        best_value=best_val,
        restarts_used=restarts,
        gap_estimate=lam - best_val,
        state={"x": best_x},
        witness=witness,
    )


# -- order-3 tensor spectral norm -------------------------------------------------------


def tensor_spectral_bound(
    op: SuperOperator,
    k: int,
    restarts: int | None = None,
    rng: np.random.Generator | None = None,
    budget: Budget = Budget(),
) -> BoundsReport:
    """Higher-order power iteration on the tensor (x, y, z) -> z^T V^dag (x ⊗ y).

    V is a Stinespring operator of k*lam_max*tr(.)1 − Phi ⊗ id_k. The spectral
    norm equals max_x ||V^dag(|x> ⊗ 1)||_inf, and the map is k-positive iff it
    stays below sqrt(k*lam_max). Each block update is a normalized linear
    contraction, so sweeps are monotone nondecreasing. best^2 > k*lam_max
    refutes.
    """
    op.require_hermitian_preserving()
    restarts = budget.restarts if restarts is None else restarts
    rng = np.random.default_rng(0) if rng is None else rng
    st, lam = qmaps.shifted_stinespring(op, k=k)
    n = op.dim_out * k
    r = st.env_dim
    Vd = linalg.dagger(st.V).reshape(n, n, r)  # (z, x, y) legs

    def value(x, y, z) -> float:
        return float(np.abs(np.einsum("z,zxr,x,r->", z, Vd, x, y)))

    best_val = -np.inf
    best_state = None
    for child in fork_rngs(rng, restarts):
        x = linalg.random_unit_vector(child, n)
        y = linalg.random_unit_vector(child, r)
        z = linalg.random_unit_vector(child, n)
        f_prev = -np.inf
        for _ in range(budget.max_sweeps):
            b = np.einsum("z,zxr,r->x", z, Vd, y)
            if np.linalg.norm(b) > 0:
                x = b.conj() / np.linalg.norm(b)
            c = np.einsum("z,zxr,x->r", z, Vd, x)
            if np.linalg.norm(c) > 0:
                y = c.conj() / np.linalg.norm(c)
            w = np.einsum("zxr,x,r->z", Vd, x, y)
            nw = np.linalg.norm(w)
            if nw > 0:
                z = w.conj() / nw
            f = nw
            if f - f_prev < budget.sweep_tol:
                break
            f_prev = f
        f = value(x, y, z)
        if f > best_val:
            best_val = f
            best_state = (x, y, z)
    x, y, z = best_state
    witness = None
    if best_val**2 > k * lam + EPS_PSD:
        # input-side maximizer: top eigenvector of V^dag(|x><x| ⊗ 1)V
        M = np.einsum("zxr,x->zr", Vd, x)
        w, U = np.linalg.eigh(linalg.hermitian_part(M @ M.conj().T))
        y_in = U[:, -1]
        P = y_in.conj().reshape(op.dim_out, k)
        Q = x.reshape(op.dim_out, k)
        chi = np.einsum("da,ea->de", P, Q).ravel()
        witness = _checked_schmidt_witness(op, chi, k)
    return BoundsReport(
        method="tensor-spectral",
        lambda_max=lam,
        best_value=best_val,
        restarts_used=restarts,
        gap_estimate=k * lam - best_val**2,
        state={"x": x, "y": y, "z": z},
        witness=witness,
    )


# -- seesaw on the bilinear block-positivity form ----------------------------------------


def seesaw_bilinear(
    op: SuperOperator,
    k: int,
    restarts: int | None = None,
    rng: np.random.Generator | None = None,
    budget: Budget = Budget(),
) -> BoundsReport:
    """Alternating eigenvector minimization of tr(C(Phi ⊗ id_k)(rho ⊗ omega)).

    Fixing one factor, the optimal other is the minimal-eigenvalue projector of
    the corresponding weighted partial trace, so the objective is monotone
    nonincreasing and the iterates stay pure. The map is k-positive iff the
    true minimum is >= 0; a value below -eps refutes, with a Schmidt-rank-<=k
    witness assembled from the optimal pure pair.
    """
    op.require_hermitian_preserving()
    restarts = budget.restarts if restarts is None else restarts
    rng = np.random.default_rng(0) if rng is None else rng
    ext = qmaps.tensor_with_identity(op, k)
    n = ext.dim_in
    Y = linalg.hermitian_part(ext.choi)
    shape = BipartiteShape(n, n)

    def min_vec(R: np.ndarray) -> tuple[float, np.ndarray]:
        w, U = np.linalg.eigh(linalg.hermitian_part(R))
        return float(w[0]), U[:, 0]

    best_val = np.inf
    best_pair = None
    for child in fork_rngs(rng, restarts):
        phi = linalg.random_unit_vector(child, n)
        psi = None
        f_prev = np.inf
        val = np.inf
        for _ in range(budget.max_sweeps):
            R = linalg.partial_trace_weighted(Y, shape, "second", np.outer(phi, phi.conj()))
            _, psi = min_vec(R)
            O = linalg.partial_trace_weighted(Y, shape, "first", np.outer(psi, psi.conj()))
            val, phi = min_vec(O)
            if f_prev - val < budget.sweep_tol:
                break
            f_prev = val
        if val < best_val:
            best_val = val
            best_pair = (psi, phi)
    psi, phi = best_pair
    witness = None
    if best_val < -EPS_PSD:
        P = psi.reshape(op.dim_out, k)
        Q = phi.reshape(op.dim_out, k)
        chi = np.einsum("da,ea->de", P, Q).ravel()
        witness = _checked_schmidt_witness(op, chi, k)
    return BoundsReport(
        method="seesaw-bilinear",
        lambda_max=op.lambda_max,
        best_value=float(best_val),
        restarts_used=restarts,
        gap_estimate=float(best_val),
        state={"rho_vec": psi, "omega_vec": phi},
        witness=witness,
    )


# -- sufficient condition via a positive bijective reference map --------------------------


def certify_via_reference(
    candidate: SuperOperator,
    reference: SuperOperator,
    reference_inverse: SuperOperator,
    eps: float = EPS_PSD,
) -> PositivityVerdict:
    """Positivity of candidate from complete positivity of inverse ∘ candidate.

    If R is positive and bijective and R^{-1} ∘ Psi is completely positive,
    then Psi = R ∘ (R^{-1} ∘ Psi) is positive. Only a sufficient condition;
    a non-CP composition yields UNDECIDED.
    """
    ident = qmaps.identity_map(reference.dim_out)
    if not qmaps.compose(reference, reference_inverse).isclose(ident, tol=1e-9):
        raise InverseMismatch("reference ∘ reference_inverse is not the identity map")
    inner = qmaps.compose(reference_inverse, candidate)
    if exact_cp_check(inner, eps).certified:
        return PositivityVerdict(Verdict.CERTIFIED, k=1, method="reference-map")
    return PositivityVerdict(Verdict.UNDECIDED, k=1, method="reference-map")


# -- orchestrator ---------------------------------------------------------------------------


def certify_kpos(
    op: SuperOperator,
    k: int,
    budget: Budget = Budget(),
    rng: np.random.Generator | None = None,
    reference: tuple[SuperOperator, SuperOperator] | None = None,
    solver_tol: float = 1e-8,
) -> PositivityVerdict:
    """Decide k-positivity as far as the available machinery allows.

    Pipeline: exact Choi check when k >= d; Schmidt-vector sampling; tensor
    spectral and Kraus-mixing refutation attempts; the PPT-constrained SDP
    relaxation as a sufficient certificate; optionally the reference-map
    sufficient condition at k = 1. Heuristics never certify for k < d.
    """
    op.require_hermitian_preserving()
    rng = np.random.default_rng(0) if rng is None else rng
    d = min(op.dim_in, op.dim_out)
    if k >= d:
        verdict = exact_cp_check(op)
        return PositivityVerdict(verdict.status, k=k, method=verdict.method,
                                 witness=verdict.witness, bounds=verdict.bounds)

    if op.lambda_max < -EPS_PSD:
        # every unit vector violates; use a product basis vector
        psi = np.zeros(op.dim_in * op.dim_out, dtype=complex)
        psi[0] = 1.0
        witness = _checked_schmidt_witness(op, psi, k)
        return PositivityVerdict(Verdict.REFUTED, k=k, method="negative-shift", witness=witness)

    collected: list[BoundsReport] = []

    sampled = refute_by_sampling(op, k, budget.samples, rng)
    collected.extend(sampled.bounds)
    if sampled.refuted:
        return PositivityVerdict(Verdict.REFUTED, k=k, method=sampled.method,
                                 witness=sampled.witness, bounds=tuple(collected))

    for bound_fn in (tensor_spectral_bound, kraus_mixing_bound):
        report = bound_fn(op, k, budget.restarts, rng, budget)
        collected.append(report)
        if report.witness is not None:
            return PositivityVerdict(Verdict.REFUTED, k=k, method=report.method,
                                     witness=report.witness, bounds=tuple(collected))

    relax = sdp.ppt_relaxation(op, k, solver_tol)
    collected.append(
        BoundsReport(
            method="ppt-relaxation",
            lambda_max=op.lambda_max,
            best_value=relax,
            restarts_used=0,
            gap_estimate=relax,
        )
    )
    if relax >= 0.0:
        return PositivityVerdict(Verdict.CERTIFIED, k=k, method="ppt-relaxation",
                                 bounds=tuple(collected))

    if reference is not None and k == 1:
        ref_verdict = certify_via_reference(op, *reference)
        if ref_verdict.certified:
            return PositivityVerdict(Verdict.CERTIFIED, k=1, method="reference-map",
                                     bounds=tuple(collected))

    return PositivityVerdict(Verdict.UNDECIDED, k=k, bounds=tuple(collected))
