"""Linear maps on matrix algebras: representations and exact conversions.

A map Phi: C^{m x m} -> C^{d x d} is carried canonically by its Choi matrix

    C(Phi) = sum_{j,k} |j><k| ⊗ Phi(|j><k|)

on C^m ⊗ C^d (subsystem order: input copy, then output). The representation
matrix R satisfies vec(Phi(A)) = R vec(A) with column-stacking vec, so R has
shape (d^2, m^2) and composition of maps is the product of representation
matrices. Kraus and Stinespring forms exist for completely positive maps;
Hermitian-preserving maps additionally admit a signed Kraus difference form.

Useful identities (exercised by the test suite):

    C(A(.)B^dag) = |vec(A)><vec(B)|     and     R(A(.)B^dag) = conj(B) ⊗ A
    <z|C(Phi)|z>  = <conj(Z) ⊗ Z, R>_HS with Z = unvec(z)

SuperOperator values are immutable; derived representations are cached
idempotently (recompute-equal), so instances are safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np

from . import linalg
from .config import EPS_PSD
from .errors import NotCompletelyPositive, NotHermitianPreserving
from .linalg import BipartiteShape, dagger, maximally_entangled, unvec, vec

__all__ = [
    "Repr",
    "KrausSet",
    "StinespringOp",
    "SuperOperator",
    "from_function",
    "from_kraus",
    "identity_map",
    "transposition_map",
    "link_product",
    "compose",
    "tensor_with_identity",
    "shifted_stinespring",
    "choi_quadratic_form",
    "map_to_json",
    "map_from_json",
]


class Repr(str, Enum):
    CHOI = "choi"
    REP = "rep"
    KRAUS = "kraus"
    STINESPRING = "stinespring"


@dataclass(frozen=True)
class KrausSet:
    """Kraus operators, optionally signed: Phi = sum_j signs[j] K_j (.) K_j^dag."""

    operators: tuple[np.ndarray, ...]
    signs: tuple[int, ...] | None = None

    def __len__(self) -> int:
        return len(self.operators)


@dataclass(frozen=True)
class StinespringOp:
    """V: C^m -> C^d ⊗ C^r with Phi = tr_env(V (.) V^dag)."""

    V: np.ndarray
    env_dim: int

    def kraus_operators(self) -> tuple[np.ndarray, ...]:
        dr, m = self.V.shape
        d = dr // self.env_dim
        V3 = self.V.reshape(d, self.env_dim, m)
        return tuple(np.ascontiguousarray(V3[:, j, :]) for j in range(self.env_dim))


def _freeze(A: np.ndarray) -> np.ndarray:
    A = np.array(A, dtype=complex, copy=True)
    A.flags.writeable = False
    return A


class SuperOperator:
    """A linear map on matrices with input dimension m and output dimension d.

    The Choi matrix is the internal canonical form; other representations are
    computed on demand and cached.
    """

    def __init__(self, choi: np.ndarray, dim_in: int, dim_out: int):
        choi = np.asarray(choi, dtype=complex)
        n = dim_in * dim_out
        if choi.shape != (n, n):
            raise ValueError(
                f"Choi matrix shape {choi.shape} does not match dims {dim_in}x{dim_out}"
            )
        if not np.all(np.isfinite(choi)):
            raise ValueError("Choi matrix contains non-finite entries")
        self._choi = _freeze(choi)
        self.dim_in = int(dim_in)
        self.dim_out = int(dim_out)

    # -- constructors -------------------------------------------------------

    @staticmethod
    def from_choi(choi: np.ndarray, dim_in: int, dim_out: int | None = None) -> "SuperOperator":
        if dim_out is None:
            dim_out = np.asarray(choi).shape[0] // dim_in
        return SuperOperator(choi, dim_in, dim_out)

    @staticmethod
    def from_rep(rep: np.ndarray, dim_in: int, dim_out: int) -> "SuperOperator":
        rep = np.asarray(rep, dtype=complex)
        if rep.shape != (dim_out**2, dim_in**2):
            raise ValueError(f"representation matrix shape {rep.shape} is not ({dim_out**2}, {dim_in**2})")
        R4 = rep.reshape(dim_out, dim_out, dim_in, dim_in)   # (b,a),(k,j)
        C4 = np.transpose(R4, (3, 1, 2, 0))                  # (j,a),(k,b)
        n = dim_in * dim_out
        return SuperOperator(C4.reshape(n, n), dim_in, dim_out)

    @staticmethod
    def from_kraus(
        operators, signs=None, dim_in: int | None = None, dim_out: int | None = None
    ) -> "SuperOperator":
        ops = [np.asarray(K, dtype=complex) for K in operators]
        if not ops:
            if dim_in is None or dim_out is None:
                raise ValueError("empty Kraus set needs explicit dimensions")
            n = dim_in * dim_out
            return SuperOperator(np.zeros((n, n)), dim_in, dim_out)
        d, m = ops[0].shape
        if signs is None:
            signs = [1] * len(ops)
        C = np.zeros((m * d, m * d), dtype=complex)
        for s, K in zip(signs, ops):
            w = vec(K)
            C += s * np.outer(w, w.conj())
        return SuperOperator(C, m, d)

    # -- cached representations ---------------------------------------------

    @property
    def choi(self) -> np.ndarray:
        return self._choi

    @cached_property
    def rep(self) -> np.ndarray:
        m, d = self.dim_in, self.dim_out
        C4 = self._choi.reshape(m, d, m, d)                  # (j,a),(k,b)
        R4 = np.transpose(C4, (3, 1, 2, 0))                  # (b,a),(k,j)
        return _freeze(R4.reshape(d * d, m * m))

    @cached_property
    def is_hermitian_preserving(self) -> bool:
        return linalg.is_hermitian(self._choi)

    @cached_property
    def choi_spectrum(self) -> np.ndarray:
        """Ascending eigenvalues of the hermitized Choi matrix."""
        return _freeze(np.linalg.eigvalsh(linalg.hermitian_part(self._choi)))

    @property
    def lambda_max(self) -> float:
        return float(self.choi_spectrum[-1])

    @property
    def lambda_min(self) -> float:
        return float(self.choi_spectrum[0])

    def require_hermitian_preserving(self) -> None:
        if not self.is_hermitian_preserving:
            raise NotHermitianPreserving("Choi matrix is not Hermitian")

    # -- conversions ---------------------------------------------------------

    def kraus(self, signed: bool = False, cut: float = EPS_PSD) -> KrausSet:
        """Kraus operators from scaled Choi eigenvectors.

        Eigenvalues are kept above the relative cut ``cut * max|eig|``, which
        fixes the otherwise ambiguous Kraus rank. The unsigned form requires a
        PSD Choi; the signed form accepts any Hermitian Choi.
        """
        self.require_hermitian_preserving()
        w, U = np.linalg.eigh(linalg.hermitian_part(self._choi))
        scale = float(np.abs(w).max(initial=0.0))
        threshold = cut * max(scale, 1.0)
        if not signed and w[0] < -threshold:
            raise NotCompletelyPositive(
                f"Choi has negative eigenvalue {w[0]:.3e}; request the signed form instead"
            )
        ops, signs = [], []
        for wi, ui in zip(w, U.T):
            if abs(wi) <= threshold or (not signed and wi <= 0):
                continue
            K = unvec(np.sqrt(abs(wi)) * ui, self.dim_out, self.dim_in)
            ops.append(K)
            signs.append(1 if wi > 0 else -1)
        if not ops:
            ops = [np.zeros((self.dim_out, self.dim_in), dtype=complex)]
            signs = [1]
        return KrausSet(tuple(ops), tuple(signs) if signed else None)

    def stinespring(self) -> StinespringOp:
        """Column-stacked Stinespring operator V = sum_j K_j ⊗ |j>."""
        ks = self.kraus(signed=False)
        r = len(ks)
        cols = np.eye(r)
        V = sum(np.kron(K, cols[:, [j]]) for j, K in enumerate(ks.operators))
        return StinespringOp(V=np.asarray(V), env_dim=r)

    def convert(self, target: Repr | str, signed: bool = False):
        """Return the requested representation of this map."""
        target = Repr(target)
        if target is Repr.CHOI:
            return self._choi
        if target is Repr.REP:
            return self.rep
        if target is Repr.KRAUS:
            return self.kraus(signed=signed)
        if target is Repr.STINESPRING:
            return self.stinespring()
        raise ValueError(f"unknown representation {target!r}")

    # -- action ---------------------------------------------------------------

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Phi(X) = unvec(R vec(X))."""
        X = np.asarray(X, dtype=complex)
        if X.shape != (self.dim_in, self.dim_in):
            raise ValueError(f"input shape {X.shape} does not match dim_in={self.dim_in}")
        return unvec(self.rep @ vec(X), self.dim_out, self.dim_out)

    def apply_via_choi(self, X: np.ndarray) -> np.ndarray:
        """Phi(X) = tr_1((X^T ⊗ 1) C(Phi)); cross-check route for apply()."""
        shape = BipartiteShape(self.dim_in, self.dim_out)
        return linalg.partial_trace_weighted(self._choi, shape, "first", np.asarray(X).T)

    def adjoint_apply(self, Y: np.ndarray) -> np.ndarray:
        """Hilbert-Schmidt adjoint: Phi^*(Y) = unvec(R^dag vec(Y))."""
        Y = np.asarray(Y, dtype=complex)
        if Y.shape != (self.dim_out, self.dim_out):
            raise ValueError("input shape does not match dim_out")
        return unvec(dagger(self.rep) @ vec(Y), self.dim_in, self.dim_in)

    # -- misc ------------------------------------------------------------------

    def __repr__(self) -> str:
        return f"SuperOperator(dim_in={self.dim_in}, dim_out={self.dim_out})"

    def isclose(self, other: "SuperOperator", tol: float = 1e-11) -> bool:
        if (self.dim_in, self.dim_out) != (other.dim_in, other.dim_out):
            return False
        scale = max(1.0, float(np.abs(self._choi).max(initial=0.0)))
        return bool(np.abs(self._choi - other._choi).max(initial=0.0) <= tol * scale)


# -- module-level constructors and operations ----------------------------------


def from_function(f, dim_in: int, dim_out: int | None = None) -> SuperOperator:
    """Build a SuperOperator by applying ``f`` to the matrix units."""
    if dim_out is None:
        dim_out = np.asarray(f(np.eye(dim_in, dtype=complex))).shape[0]
    R = np.zeros((dim_out**2, dim_in**2), dtype=complex)
    for col in range(dim_in):
        for row in range(dim_in):
            E = np.zeros((dim_in, dim_in), dtype=complex)
            E[row, col] = 1.0
            R[:, col * dim_in + row] = vec(f(E))
    return SuperOperator.from_rep(R, dim_in, dim_out)


def from_kraus(operators, signs=None) -> SuperOperator:
    return SuperOperator.from_kraus(operators, signs)


def identity_map(d: int) -> SuperOperator:
    g = maximally_entangled(d, normalized=False)
    return SuperOperator(np.outer(g, g.conj()), d, d)


def transposition_map(d: int) -> SuperOperator:
    return from_function(lambda X: X.T, d)


def compose(outer: SuperOperator, inner: SuperOperator) -> SuperOperator:
    """Composition outer ∘ inner via the product of representation matrices."""
    if outer.dim_in != inner.dim_out:
        raise ValueError("inner output dimension does not match outer input dimension")
    return SuperOperator.from_rep(outer.rep @ inner.rep, inner.dim_in, outer.dim_out)


def link_product(choi_outer: np.ndarray, choi_inner: np.ndarray, d: int) -> np.ndarray:
    """Choi matrix of the composition outer ∘ inner on square d-dimensional maps.

    Computes tr_mid[(N^{T_2} ⊗ 1)(1 ⊗ C_outer)] with N = choi_inner; linear in
    each argument, and C(id) = |Gamma><Gamma| is the unit on either side.
    """
    N = np.asarray(choi_inner, dtype=complex)
    C = np.asarray(choi_outer, dtype=complex)
    if N.shape != (d * d, d * d) or C.shape != (d * d, d * d):
        raise ValueError("link product expects two d^2 x d^2 Choi matrices")
    N4 = N.reshape(d, d, d, d)
    C4 = C.reshape(d, d, d, d)
    out = np.einsum("ibjm,bcmd->icjd", N4, C4)
    return np.ascontiguousarray(out).reshape(d * d, d * d)


def tensor_with_identity(op: SuperOperator, k: int) -> SuperOperator:
    """The map Phi ⊗ id_k on dimension (m*k, d*k).

    Built at the Choi level: C(Phi ⊗ id_k) is C(Phi) ⊗ C(id_k) with the two
    middle subsystems swapped, so for a Hermitian Choi the largest eigenvalue
    is k * max(spec(C(Phi))) whenever that maximum is nonnegative.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if k == 1:
        return op
    m, d = op.dim_in, op.dim_out
    g = maximally_entangled(k, normalized=False)
    big = np.kron(op.choi, np.outer(g, g.conj()))
    # order (j, a, al, be) x (k, b, ga, de) -> (j, al, a, be) x ...
    t = big.reshape(m, d, k, k, m, d, k, k)
    t = np.transpose(t, (0, 2, 1, 3, 4, 6, 5, 7))
    n = m * k * d * k
    return SuperOperator(np.ascontiguousarray(t).reshape(n, n), m * k, d * k)


def shifted_stinespring(op: SuperOperator, k: int = 1) -> tuple[StinespringOp, float]:
    """Stinespring operator of k*lam_max*tr(.)1 − Phi ⊗ id_k, with lam_max.

    lam_max is the largest Choi eigenvalue of Phi. The shifted map has Choi
    k*lam_max*1 − C(Phi ⊗ id_k), which is PSD for Hermitian-preserving Phi
    with lam_max >= 0; its rank (eigenvalues above the relative cut) fixes the
    environment dimension. For k=1 this is the plain shift lam_max*tr(.)1 − Phi.
    """
    op.require_hermitian_preserving()
    lam = op.lambda_max
    ext = tensor_with_identity(op, k)
    n = ext.dim_in
    shifted = SuperOperator(lam * k * np.eye(n * n) - ext.choi, n, n)
    if shifted.lambda_min < -EPS_PSD * max(1.0, abs(lam) * k):
        raise NotCompletelyPositive(
            f"shifted Choi not PSD (min eig {shifted.lambda_min:.3e}); lam_max < 0?"
        )
    return shifted.stinespring(), lam


def choi_quadratic_form(op: SuperOperator, psi: np.ndarray) -> float:
    """<psi|C(Phi)|psi> for a Hermitian Choi (real by construction)."""
    psi = np.asarray(psi, dtype=complex).ravel()
    return float(np.real(psi.conj() @ op.choi @ psi))


# -- shared JSON map format -----------------------------------------------------


def _array_to_json(A: np.ndarray) -> list:
    A = np.asarray(A, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in A]


def _array_from_json(data) -> np.ndarray:
    return np.array([[complex(re, im) for re, im in row] for row in data], dtype=complex)


def map_to_json(op: SuperOperator, repr_kind: Repr | str = Repr.CHOI) -> dict:
    """Serialize as {"dim_in", "dim_out", "repr", "data"} with [re, im] entry pairs."""
    repr_kind = Repr(repr_kind)
    if repr_kind is Repr.CHOI:
        data = _array_to_json(op.choi)
    elif repr_kind is Repr.REP:
        data = _array_to_json(op.rep)
    elif repr_kind is Repr.KRAUS:
        data = [_array_to_json(K) for K in op.kraus().operators]
    else:
        raise ValueError("only choi/rep/kraus serialize")
    return {
        "dim_in": op.dim_in,
        "dim_out": op.dim_out,
        "repr": repr_kind.value,
        "data": data,
    }


def map_from_json(obj: dict | str, require_hermitian_preserving: bool = False) -> SuperOperator:
    """Parse the shared JSON map format.

    With ``require_hermitian_preserving`` a non-Hermitian Choi is rejected
    instead of silently accepted.
    """
    if isinstance(obj, str):
        obj = json.loads(obj)
    m, d = int(obj["dim_in"]), int(obj["dim_out"])
    kind = Repr(obj["repr"])
    if kind is Repr.CHOI:
        op = SuperOperator(_array_from_json(obj["data"]), m, d)
    elif kind is Repr.REP:
        op = SuperOperator.from_rep(_array_from_json(obj["data"]), m, d)
    elif kind is Repr.KRAUS:
        op = SuperOperator.from_kraus([_array_from_json(K) for K in obj["data"]])
    else:
        raise ValueError(f"unsupported repr {kind!r} in map JSON")
    if require_hermitian_preserving:
        op.require_hermitian_preserving()
    return op
