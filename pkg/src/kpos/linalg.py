"""Dense complex linear algebra on bipartite operators.

Conventions used throughout the package:

* ``vec`` is column-stacking: ``vec(A) = sum_j |j> ⊗ A|j>``, i.e.
  ``A.flatten(order="F")``.
* A vector ``v`` on ``C^dA ⊗ C^dB`` has components ``v[(a, b)] = v[a*dB + b]``
  (row-major composite index), so ``v.reshape(dA, dB)`` is its coefficient
  matrix.
* All scalars are complex double precision; eigenvalue-sign decisions use the
  absolute tolerance ``config.EPS_PSD`` unless a caller overrides it.

Downstream code must depend only on eigenvalues and spectral projectors, never
on individual eigenvectors inside degenerate subspaces (the backend's ordering
there is arbitrary).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.linalg

from .config import EPS_PSD

__all__ = [
    "BipartiteShape",
    "SchmidtDecomposition",
    "vec",
    "unvec",
    "dagger",
    "hermitian_part",
    "is_hermitian",
    "ky_fan_norm",
    "trace_norm",
    "matrix_exp",
    "partial_trace_weighted",
    "partial_transpose",
    "maximally_entangled",
    "schmidt_decompose",
    "random_schmidt_rank_k",
    "random_unit_vector",
    "ginibre",
    "random_hermitian",
]


@dataclass(frozen=True)
class BipartiteShape:
    """Tensor factorization C^dimA ⊗ C^dimB of a composite space."""

    dimA: int
    dimB: int

    def __post_init__(self):
        if self.dimA < 1 or self.dimB < 1:
            raise ValueError("bipartite dimensions must be positive")

    @property
    def total(self) -> int:
        return self.dimA * self.dimB

    def check(self, matrix: np.ndarray) -> None:
        if matrix.shape != (self.total, self.total):
            raise ValueError(
                f"matrix of shape {matrix.shape} does not match {self.dimA}x{self.dimB} shape"
            )


def vec(A: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization, vec(A) = sum_j |j> ⊗ A|j>."""
    return np.asarray(A, dtype=complex).flatten(order="F")


def unvec(v: np.ndarray, rows: int, cols: int | None = None) -> np.ndarray:
    """Inverse of :func:`vec`; returns the rows x cols matrix."""
    v = np.asarray(v, dtype=complex).ravel()
    if cols is None:
        cols = v.size // rows
    if rows * cols != v.size:
        raise ValueError("vector length does not match requested shape")
    return v.reshape(cols, rows).T


def dagger(A: np.ndarray) -> np.ndarray:
    return np.asarray(A).conj().T


def hermitian_part(A: np.ndarray) -> np.ndarray:
    return (A + dagger(A)) / 2


def is_hermitian(A: np.ndarray, tol: float = EPS_PSD) -> bool:
    A = np.asarray(A)
    scale = max(1.0, float(np.abs(A).max(initial=0.0)))
    return bool(np.abs(A - dagger(A)).max(initial=0.0) <= tol * scale)


def ky_fan_norm(B: np.ndarray, k: int) -> float:
    """Sum of the k largest singular values of B.

    For PSD B this is the sum of the k largest eigenvalues; at k=1 it is the
    operator norm, at full k the trace norm.
    """
    B = np.asarray(B, dtype=complex)
    if not (1 <= k <= min(B.shape)):
        raise ValueError(f"k={k} out of range for shape {B.shape}")
    s = scipy.linalg.svdvals(B)
    return float(np.sum(s[:k]))


def trace_norm(B: np.ndarray) -> float:
    return ky_fan_norm(B, min(np.asarray(B).shape))


def matrix_exp(A: np.ndarray, t: float = 1.0) -> np.ndarray:
    """e^{tA} by scaling-and-squaring with Pade approximation."""
    A = np.ascontiguousarray(np.asarray(A, dtype=complex))
    return scipy.linalg.expm(t * A)


def _as_bipartite_tensor(Y: np.ndarray, shape: BipartiteShape) -> np.ndarray:
    Y = np.asarray(Y, dtype=complex)
    shape.check(Y)
    return Y.reshape(shape.dimA, shape.dimB, shape.dimA, shape.dimB)


def partial_trace_weighted(
    Y: np.ndarray,
    shape: BipartiteShape,
    subsystem: Literal["first", "second"],
    weight: np.ndarray | None = None,
) -> np.ndarray:
    """Weighted partial trace tr_{sub,W}(Y) = tr_sub((W ⊗ 1) Y) resp. tr_sub((1 ⊗ W) Y).

    It is the unique operator satisfying tr(Z tr_{1,W}(Y)) = tr((W ⊗ Z) Y) for
    all Z (and symmetrically for the second subsystem). ``weight=None`` means
    the identity, which recovers the standard partial trace.
    """
    Y4 = _as_bipartite_tensor(Y, shape)
    if subsystem == "first":
        if weight is None:
            return np.einsum("abad->bd", Y4)
        W = np.asarray(weight, dtype=complex)
        if W.shape != (shape.dimA, shape.dimA):
            raise ValueError("weight must match the dimension of the first subsystem")
        return np.einsum("ac,cbad->bd", W, Y4)
    if subsystem == "second":
        if weight is None:
            return np.einsum("abdb->ad", Y4)
        W = np.asarray(weight, dtype=complex)
        if W.shape != (shape.dimB, shape.dimB):
            raise ValueError("weight must match the dimension of the second subsystem")
        return np.einsum("bc,acdb->ad", W, Y4)
    raise ValueError(f"unknown subsystem {subsystem!r}")


def partial_transpose(
    Y: np.ndarray, shape: BipartiteShape, subsystem: Literal["first", "second"]
) -> np.ndarray:
    """Transpose the block indices of the chosen subsystem."""
    Y4 = _as_bipartite_tensor(Y, shape)
    if subsystem == "first":
        out = np.transpose(Y4, (2, 1, 0, 3))
    elif subsystem == "second":
        out = np.transpose(Y4, (0, 3, 2, 1))
    else:
        raise ValueError(f"unknown subsystem {subsystem!r}")
    return np.ascontiguousarray(out).reshape(shape.total, shape.total)


def maximally_entangled(d: int, normalized: bool = True) -> np.ndarray:
    """|Omega> = (1/sqrt d) sum_j |jj> when normalized, else sum_j |jj>."""
    if d < 1:
        raise ValueError("d must be positive")
    v = np.zeros(d * d, dtype=complex)
    v[:: d + 1] = 1.0
    return v / np.sqrt(d) if normalized else v


@dataclass(frozen=True)
class SchmidtDecomposition:
    """v = sum_s coefficients[s] * left[:, s] ⊗ right[:, s], coefficients descending."""

    coefficients: np.ndarray
    left: np.ndarray
    right: np.ndarray

    def rank(self, tol: float = 1e-12) -> int:
        return int(np.count_nonzero(self.coefficients > tol))

    def reassemble(self) -> np.ndarray:
        terms = self.left[:, None, :] * self.right[None, :, :]
        return np.einsum("s,abs->ab", self.coefficients, terms).ravel()


def schmidt_decompose(v: np.ndarray, shape: BipartiteShape) -> SchmidtDecomposition:
    """Schmidt decomposition via the SVD of the coefficient matrix of v."""
    v = np.asarray(v, dtype=complex).ravel()
    if v.size != shape.total:
        raise ValueError("vector length does not match the bipartite shape")
    M = v.reshape(shape.dimA, shape.dimB)
    U, s, Vh = np.linalg.svd(M)
    # right vectors are unconjugated rows of Vh so that reassembly uses a plain
    # (not conjugate-linear) tensor product
    return SchmidtDecomposition(coefficients=s, left=U, right=Vh.T)


def ginibre(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Standard complex Gaussian matrix."""
    return rng.normal(size=(rows, cols)) + 1j * rng.normal(size=(rows, cols))


def random_hermitian(rng: np.random.Generator, d: int, scale: float = 1.0) -> np.ndarray:
    """GUE-style random Hermitian matrix with unit spectral scale."""
    G = ginibre(rng, d, d)
    H = hermitian_part(G) / np.sqrt(d)
    return scale * H


def random_unit_vector(rng: np.random.Generator, d: int) -> np.ndarray:
    v = ginibre(rng, d, 1).ravel()
    return v / np.linalg.norm(v)


def random_schmidt_rank_k(
    shape: BipartiteShape, k: int, rng: np.random.Generator
) -> np.ndarray:
    """Unit vector with Schmidt rank at most k.

    Sampled as vec of a product of two independent Ginibre factors of inner
    dimension k: a simple full-support distribution on the rank-<=k variety.
    """
    if not (1 <= k <= min(shape.dimA, shape.dimB)):
        raise ValueError(f"k={k} out of range for shape {shape.dimA}x{shape.dimB}")
    M = ginibre(rng, shape.dimA, k) @ ginibre(rng, k, shape.dimB)
    v = M.ravel()
    return v / np.linalg.norm(v)
