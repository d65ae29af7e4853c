"""Transfer function and symbol function of a crystal framework.

The transfer function is stored exactly as defined on the punctured complex
space: the row of an edge ``e = (v, k)(w, l)`` carries ``p(e) z^-k`` in the
column block of ``v`` and ``-p(e) z^-l`` in the block of ``w`` (or
``p(e)(z^-k - z^-l)`` when ``v == w``).  Columns are joint-major,
coordinate-minor.  A factor periodic field ``b (x) e_omega`` is a flex iff
``Psi(omega^-1) b = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .framework import RANK_TOL, CrystalFramework
from .laurent import LaurentMatrix, LaurentPoly, bareiss_determinant

AXES = "xyz"


def column_label(kappa: int, sigma: int, d: int) -> str:
    return f"v{kappa + 1}{AXES[sigma] if d <= 3 else sigma + 1}"


def assemble_transfer_function(fw: CrystalFramework) -> LaurentMatrix:
    d = fw.dimension
    nj = fw.motif.n_joints
    zero = LaurentPoly({}, d)
    rows = []
    for e in fw.motif.edges:
        pe = fw.bar_vector(e)
        row = [zero] * (d * nj)
        mk = tuple(-v for v in e.offset_a)
        ml = tuple(-v for v in e.offset_b)
        for s in range(d):
            if pe[s] == 0:
                continue
            if e.a == e.b:
                row[d * e.a + s] = LaurentPoly({mk: pe[s], ml: -pe[s]}, d)
            else:
                row[d * e.a + s] = LaurentPoly({mk: pe[s]}, d)
                row[d * e.b + s] = LaurentPoly({ml: -pe[s]}, d)
        rows.append(tuple(row))
    return LaurentMatrix(
        tuple(rows),
        d,
        tuple(f"e{i + 1}" for i in range(fw.motif.n_edges)),
        tuple(column_label(kp, s, d) for kp in range(nj) for s in range(d)),
    )


@dataclass(frozen=True)
class EvaluatedMatrix:
    matrix: np.ndarray
    point: np.ndarray


def _check_point(z, nvars: int) -> np.ndarray:
    z = np.asarray(z, dtype=complex).reshape(-1)
    if z.size != nvars:
        raise ValueError(f"point must have {nvars} components")
    if np.any(z == 0):
        raise ValueError("evaluation point must lie in the punctured space (no zero component)")
    return z


def evaluate(M: LaurentMatrix, z) -> EvaluatedMatrix:
    z = _check_point(z, M.nvars)
    return EvaluatedMatrix(M(z), z)


def restrict_to_torus(M: LaurentMatrix, phases) -> EvaluatedMatrix:
    return evaluate(M, np.exp(1j * np.asarray(phases, dtype=float)))


def psi_at_inverse(M: LaurentMatrix, omega) -> EvaluatedMatrix:
    """Psi(omega^-1): the matrix whose kernel gives factor flexes with multifactor omega."""
    omega = _check_point(omega, M.nvars)
    return evaluate(M, 1.0 / omega)


def resolve_rows(M: LaurentMatrix, names: Sequence[str | int]) -> list[int]:
    return [_resolve(M.row_labels, n) for n in names]


def resolve_cols(M: LaurentMatrix, names: Sequence[str | int]) -> list[int]:
    return [_resolve(M.col_labels, n) for n in names]


def _resolve(labels, name) -> int:
    if isinstance(name, (int, np.integer)):
        return int(name)
    if name in labels:
        return labels.index(name)
    raise KeyError(f"unknown label {name!r}; choose from {', '.join(labels)}")


def symbolic_determinant(M: LaurentMatrix, rows=None, cols=None) -> LaurentPoly:
    if rows is not None or cols is not None:
        m, n = M.shape
        rows = resolve_rows(M, rows) if rows is not None else list(range(m))
        cols = resolve_cols(M, cols) if cols is not None else list(range(n))
        M = M.select(rows, cols)
    return bareiss_determinant(M)


def singular_values(E: EvaluatedMatrix | np.ndarray) -> np.ndarray:
    """All ``n`` singular values for an m x n matrix, padded with zeros when m < n."""
    A = E.matrix if isinstance(E, EvaluatedMatrix) else np.asarray(E)
    m, n = A.shape
    s = np.linalg.svd(A, compute_uv=False) if min(m, n) else np.zeros(0)
    return np.concatenate([s, np.zeros(max(0, n - m))])


def min_singular_value(E: EvaluatedMatrix | np.ndarray) -> float:
    s = singular_values(E)
    return float(s[-1]) if s.size else 0.0


def kernel_basis(E: EvaluatedMatrix | np.ndarray, rank_tol: float = RANK_TOL) -> list[np.ndarray]:
    """Orthonormal kernel vectors; sigma counts as zero below rank_tol * max(1, sigma_max)."""
    A = E.matrix if isinstance(E, EvaluatedMatrix) else np.asarray(E)
    m, n = A.shape
    if m == 0:
        return list(np.eye(n, dtype=complex))
    _, s, vh = np.linalg.svd(A, full_matrices=True)
    cutoff = rank_tol * max(1.0, s[0])
    rank = int(np.sum(s >= cutoff))
    return [vh[i].conj() for i in range(rank, n)]


def batch_singular_values(M: LaurentMatrix, Z: np.ndarray) -> np.ndarray:
    """Singular values (descending, zero padded to n) of M at each row of Z."""
    A = M.evaluate_many(Z)
    n = A.shape[2]
    s = np.linalg.svd(A, compute_uv=False)
    if s.shape[1] < n:
        s = np.concatenate([s, np.zeros((s.shape[0], n - s.shape[1]))], axis=1)
    return s
