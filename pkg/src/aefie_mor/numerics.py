"""Dense complex linear algebra shared by the full and reduced models."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

DROP_TOL = 1e-10


class SingularMatrixError(np.linalg.LinAlgError):
    """LU factorization met a zero or subnormal pivot."""

    def __init__(self, pivot: int, value: complex):
        self.pivot = pivot
        self.value = value
        super().__init__(f"singular matrix: pivot {pivot} is {value!r}")


def lu_factor(A: np.ndarray):
    """Partially pivoted LU factors of a square matrix.

    Returns the ``(lu, piv)`` pair understood by :func:`scipy.linalg.lu_solve`.
    """
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    with warnings.catch_warnings():
        # exact zero pivots are reported below with their index
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(A, check_finite=True)
    diag = np.abs(np.diag(lu))
    bad = np.flatnonzero(diag < np.finfo(float).tiny)
    if bad.size:
        i = int(bad[0])
        raise SingularMatrixError(i, complex(lu[i, i]))
    return lu, piv


def lu_solve(A: np.ndarray, b: np.ndarray, refine: int = 2) -> np.ndarray:
    """Solve ``A x = b`` by LU with partial pivoting.

    Up to ``refine`` steps of fixed-precision iterative refinement are taken;
    refinement stops as soon as it no longer reduces the residual.
    """
    A = np.asarray(A)
    b = np.asarray(b)
    if b.shape[0] != A.shape[0]:
        raise ValueError(f"right-hand side has {b.shape[0]} rows, matrix has {A.shape[0]}")
    factors = lu_factor(A)
    x = sla.lu_solve(factors, b)
    if refine:
        r = b - A @ x
        rn = np.linalg.norm(r)
        for _ in range(refine):
            if rn == 0:
                break
            x_new = x + sla.lu_solve(factors, r)
            r_new = b - A @ x_new
            rn_new = np.linalg.norm(r_new)
            if not rn_new < rn:
                break
            x, r, rn = x_new, r_new, rn_new
    return x


@dataclass(frozen=True)
class OrthoBasis:
    """Orthonormal columns plus a count of rejected (dependent) candidates."""

    columns: np.ndarray
    drop_count: int = 0

    @classmethod
    def empty(cls, rows: int) -> "OrthoBasis":
        return cls(np.zeros((rows, 0), dtype=complex), 0)

    @classmethod
    def from_vectors(cls, vectors, drop_tol: float = DROP_TOL) -> "OrthoBasis":
        vectors = list(vectors)
        if not vectors:
            raise ValueError("need at least one vector to infer the row count")
        return mgs_extend(cls.empty(len(vectors[0])), vectors, drop_tol)

    @property
    def rows(self) -> int:
        return self.columns.shape[0]

    @property
    def size(self) -> int:
        return self.columns.shape[1]

    def orthonormality_error(self) -> float:
        """max |Q^H Q - I|."""
        Q = self.columns
        if Q.shape[1] == 0:
            return 0.0
        G = Q.conj().T @ Q
        return float(np.abs(G - np.eye(Q.shape[1])).max())


def mgs_extend(basis: OrthoBasis, candidates, drop_tol: float = DROP_TOL) -> OrthoBasis:
    """Append candidates to an orthonormal basis by modified Gram-Schmidt.

    Each candidate is orthogonalized against the current columns twice. If
    what is left has norm below ``drop_tol`` times the candidate's original
    norm it is discarded and counted in ``drop_count``; zero vectors are
    always discarded.
    """
    if not 0 < drop_tol < 1:
        raise ValueError(f"drop_tol must lie in (0, 1), got {drop_tol!r}")
    if isinstance(candidates, np.ndarray) and candidates.ndim == 1:
        candidates = [candidates]
    cols = [basis.columns[:, i] for i in range(basis.size)]
    drops = basis.drop_count
    for v in candidates:
        v = np.array(v, dtype=complex).reshape(-1)
        if v.shape[0] != basis.rows:
            raise ValueError(f"candidate has length {v.shape[0]}, basis rows are {basis.rows}")
        norm0 = np.linalg.norm(v)
        if norm0 == 0:
            drops += 1
            continue
        for _ in range(2):
            for q in cols:
                v -= np.vdot(q, v) * q
        norm = np.linalg.norm(v)
        if norm < drop_tol * norm0:
            drops += 1
            continue
        cols.append(v / norm)
    if cols:
        Q = np.column_stack(cols)
    else:
        Q = np.zeros((basis.rows, 0), dtype=complex)
    return OrthoBasis(Q, drops)
