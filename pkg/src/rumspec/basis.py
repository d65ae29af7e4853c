"""Free bases of flex spaces at finite truncation.

The restriction ``W_i`` of the infinite flex space to a patch ``A_i`` is
approximated by the flex space of ``A_i`` enlarged by ``margin`` cells and
then restricted to ``A_i``.  The approximation is trusted only when the
dimension agrees for margins ``m`` and ``m + 1``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .framework import (
    RANK_TOL,
    Box,
    CrystalFramework,
    FinitePatch,
    FrameworkError,
    Label,
    VelocityField,
    flex_space,
    generate_patch,
    grow,
)

ZERO_TOL = 1e-10


class DependenceError(FrameworkError):
    """Spanning-set values at a joint are linearly dependent."""


class StabilizationError(FrameworkError):
    """Truncated flex-space dimension changes with the margin."""


def _rank(A: np.ndarray, rank_tol: float = RANK_TOL) -> int:
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    return int(np.sum(s >= rank_tol * max(1.0, s[0])))


def _orth(A: np.ndarray, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis (columns) of the column space of A."""
    if A.size == 0:
        return np.zeros((A.shape[0], 0), dtype=complex)
    u, s, _ = np.linalg.svd(A, full_matrices=False)
    r = int(np.sum(s >= rank_tol * max(1.0, s[0] if s.size else 0.0)))
    return u[:, :r]


def restriction_rows(small: FinitePatch, big: FinitePatch) -> np.ndarray:
    """Row indices of the coordinates of ``small``'s joints inside ``big``."""
    d = small.dimension
    idx = [big.index[lab] for lab in small.labels]
    return np.array([d * i + s for i in idx for s in range(d)], dtype=int)


@dataclass
class TruncatedSpace:
    patch: FinitePatch
    basis: np.ndarray  # (d * n_joints, dim), orthonormal columns
    margin: int
    stabilized: bool

    @property
    def dim(self) -> int:
        return self.basis.shape[1]


def _restricted_dim(fw, box, margin, rank_tol) -> tuple[FinitePatch, np.ndarray]:
    patch = generate_patch(fw, box)
    if patch.n_joints == 0:
        return patch, np.zeros((0, 0), dtype=complex)
    big = generate_patch(fw, grow(box, margin))
    K = flex_space(big, rank_tol)
    return patch, _orth(K[restriction_rows(patch, big)], rank_tol)


def truncated_flex_space(fw: CrystalFramework, box: Box, margin: int = 2, rank_tol: float = RANK_TOL) -> TruncatedSpace:
    """Approximate pi_A(F(C)) by restricting the flex space of A enlarged by ``margin``."""
    if margin < 0:
        raise ValueError("margin must be non-negative")
    patch, basis = _restricted_dim(fw, box, margin, rank_tol)
    if patch.n_joints == 0:
        return TruncatedSpace(patch, basis, margin, True)
    _, nxt = _restricted_dim(fw, box, margin + 1, rank_tol)
    return TruncatedSpace(patch, basis, margin, nxt.shape[1] == basis.shape[1])


@dataclass(frozen=True)
class RestrictionTower:
    framework: CrystalFramework
    boxes: tuple[Box, ...]
    margin: int = 2

    def __post_init__(self):
        boxes = tuple(tuple((int(a), int(b)) for a, b in box) for box in self.boxes)
        if not boxes:
            raise ValueError("a tower needs at least one level")
        for inner, outer in zip(boxes, boxes[1:]):
            if not all(a2 <= a1 and b1 <= b2 for (a1, b1), (a2, b2) in zip(inner, outer)) or inner == outer:
                raise ValueError("tower boxes must be strictly nested")
        object.__setattr__(self, "boxes", boxes)

    @classmethod
    def cubes(cls, fw: CrystalFramework, radii: Sequence[int], margin: int = 2) -> "RestrictionTower":
        d = fw.dimension
        return cls(fw, tuple(tuple((-r, r) for _ in range(d)) for r in radii), margin)

    def patches(self) -> list[FinitePatch]:
        return [generate_patch(self.framework, b) for b in self.boxes]


@dataclass
class TruncatedBasis:
    """B_1, ..., B_m as fields on the top patch, with per-level dimensions."""

    tower: RestrictionTower
    top: FinitePatch
    levels: list[np.ndarray]  # level j: (d * n_top, |B_j|)
    dims: list[int]  # dim W_j
    projection_norms: np.ndarray = field(default=None)  # [i, j] = max ||pi_i(B_j)|| for i < j

    def elements(self) -> np.ndarray:
        return np.hstack(self.levels) if self.levels else np.zeros((0, 0))

    def counts(self) -> list[int]:
        return [lv.shape[1] for lv in self.levels]


def inverse_limit_basis(tower: RestrictionTower, margin: int | None = None, rank_tol: float = RANK_TOL) -> TruncatedBasis:
    """Sets B_j with pi_i(B_j) = 0 for i < j and |B_1 u ... u B_j| = dim W_j.

    One flex space, that of the top patch enlarged by the margin, serves every
    level so that the restriction maps are mutually consistent."""
    margin = tower.margin if margin is None else margin
    fw = tower.framework
    patches = tower.patches()
    for box in tower.boxes:
        if not truncated_flex_space(fw, box, margin, rank_tol).stabilized:
            raise StabilizationError(f"flex-space dimension of box {box} not stable at margin {margin}")
    top = patches[-1]
    big = generate_patch(fw, grow(tower.boxes[-1], margin))
    F = flex_space(big, rank_tol)
    rows = [restriction_rows(p, big) for p in patches]
    top_rows = restriction_rows(top, big)
    levels, dims = [], []
    coeffs = np.eye(F.shape[1], dtype=F.dtype)  # current pulled-back kernel, in F-coordinates
    prev_dim = 0
    for j, r in enumerate(rows):
        P = F[r]
        dims.append(_rank(P, rank_tol))
        image = P @ coeffs
        if image.size:
            _, s, vh = np.linalg.svd(image, full_matrices=True)
            rank = int(np.sum(s >= rank_tol * max(1.0, s[0] if s.size else 0.0)))
        else:
            vh, rank = np.eye(coeffs.shape[1]), 0
        if prev_dim + rank != dims[-1]:
            raise FrameworkError(f"rank bookkeeping failed at level {j + 1}")
        chosen = coeffs @ vh[:rank].conj().T
        levels.append(F[top_rows] @ chosen)
        coeffs = coeffs @ vh[rank:].conj().T  # kernel of pi_j within span(F)
        prev_dim = dims[-1]
    m = len(rows)
    norms = np.zeros((m, m))
    index_rows = [restriction_rows(p, top) for p in patches]
    for j in range(m):
        for i in range(j):
            B = levels[j][index_rows[i]]
            norms[i, j] = float(np.max(np.abs(B), initial=0.0))
    return TruncatedBasis(tower, top, levels, dims, norms)


def check_truncated_basis(tb: TruncatedBasis, rank_tol: float = RANK_TOL) -> tuple[bool, list[int]]:
    """Returns (ok, ranks) where ranks[j] = rank of pi_j(B_1 u ... u B_j)."""
    ranks = []
    ok = bool(np.all(tb.projection_norms <= ZERO_TOL))
    top = tb.top
    for j, p in enumerate(tb.tower.patches()):
        r = restriction_rows(p, top)
        B = np.hstack(tb.levels[: j + 1])[r]
        ranks.append(_rank(B, rank_tol))
        ok &= ranks[-1] == tb.dims[j] == B.shape[1]
    return ok, ranks


def level_projection(tb: TruncatedBasis, w: np.ndarray) -> list[np.ndarray]:
    """Unique h_j in span(B_j) with pi_j(w) = pi_j(h_1 + ... + h_j); returns coefficient vectors."""
    w = np.asarray(w, dtype=complex).reshape(-1)
    out = []
    acc = np.zeros_like(w)
    for j, p in enumerate(tb.tower.patches()):
        r = restriction_rows(p, tb.top)
        B = tb.levels[j]
        if B.shape[1] == 0:
            c = np.zeros(0, dtype=complex)
        else:
            c, *_ = np.linalg.lstsq(B[r], (w - acc)[r], rcond=None)
        resid = np.linalg.norm(B[r] @ c - (w - acc)[r]) if B.shape[1] else np.linalg.norm((w - acc)[r])
        if resid > 1e-9 * max(1.0, np.linalg.norm(w)):
            raise FrameworkError(f"level {j + 1} projection leaves residual {resid:.3e}")
        acc = acc + (B @ c if B.shape[1] else 0)
        out.append(c)
    return out


# --------------------------------------------------------------------------
# reconstruction from spanning sets


def _values(f, patch: FinitePatch) -> np.ndarray:
    if isinstance(f, np.ndarray):
        return np.asarray(f, dtype=complex).reshape(patch.n_joints, patch.dimension)
    return f.on_patch(patch)


def bfs_order(patch: FinitePatch, start: Label | None = None) -> list[int]:
    """Joint slots in breadth-first order over the bar graph, components in label order."""
    adj = [[] for _ in range(patch.n_joints)]
    for a, b in patch.bars:
        adj[a].append(b)
        adj[b].append(a)
    for nb in adj:
        nb.sort()
    if start is None:
        cells = np.array([k for _, k in patch.labels]).reshape(patch.n_joints, -1)
        start_slot = int(np.argmin(np.abs(cells).sum(axis=1))) if patch.n_joints else 0
    else:
        start_slot = patch.index[start]
    seen = [False] * patch.n_joints
    order = []
    for root in [start_slot] + list(range(patch.n_joints)):
        if root >= patch.n_joints or seen[root]:
            continue
        seen[root] = True
        q = deque([root])
        while q:
            a = q.popleft()
            order.append(a)
            for b in adj[a]:
                if not seen[b]:
                    seen[b] = True
                    q.append(b)
    return order


@dataclass
class Reconstruction:
    names: list[str]
    coefficients: np.ndarray
    residual: float  # max joint speed of u - sum c_s s on the checked joints
    unique: bool | None  # None when uniqueness was not checked
    lstsq_gap: float | None
    method: str

    def as_dict(self) -> dict[str, complex]:
        return dict(zip(self.names, self.coefficients))


def reconstruct_coefficients(u, elements: Sequence[tuple[str, VelocityField]], patch: FinitePatch,
                             order: Sequence[int] | None = None, omit: Sequence[str] = (),
                             method: str = "greedy", check_unique: bool = True,
                             mask: np.ndarray | None = None, tol: float = 1e-9) -> Reconstruction:
    """Coefficients c with u = sum c_s s on the patch.

    ``greedy`` sweeps joints in ``order``; at each joint the elements touching
    it that are still undetermined are solved for when their values there are
    independent, and the joint is revisited later otherwise.  Elements named
    in ``omit`` are fixed to zero.  ``lstsq`` solves the global least squares
    problem directly.  ``mask`` restricts the joints whose residual is
    reported."""
    names = [n for n, _ in elements]
    U = _values(u, patch)
    S = np.stack([_values(f, patch) for _, f in elements], axis=0) if elements else np.zeros((0,) + U.shape)
    n_el = len(elements)
    omitted = {names.index(o) for o in omit}
    active = [s for s in range(n_el) if s not in omitted]
    mask = np.ones(patch.n_joints, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    A = S.reshape(n_el, -1).T  # (n_joints * d, n_el)

    c_ls = None
    rank_full = None
    if method == "lstsq" or check_unique:
        c_ls = np.zeros(n_el, dtype=complex)
        if active:
            sol, _, rank, _ = np.linalg.lstsq(A[:, active], U.reshape(-1), rcond=None)
            c_ls[active] = sol
            rank_full = rank == len(active)

    if method == "lstsq":
        c = c_ls
    elif method == "greedy":
        c = _greedy(U, S, patch, order, omitted, tol)
    else:
        raise ValueError(f"unknown method {method!r}")

    resid = U - np.tensordot(c, S, axes=1) if n_el else U
    residual = float(np.max(np.linalg.norm(resid[mask], axis=1), initial=0.0))
    gap = unique = None
    if check_unique and c_ls is not None:
        gap = float(np.max(np.abs(c - c_ls), initial=0.0))
        unique = bool(rank_full) and gap <= tol * max(1.0, np.max(np.abs(c), initial=0.0))
    return Reconstruction(names, c, residual, unique, gap, method)


def _greedy(U, S, patch, order, omitted, tol) -> np.ndarray:
    n_el = S.shape[0]
    norms = np.linalg.norm(S, axis=2)  # (n_el, n_joints)
    scale = max(1.0, float(np.max(norms, initial=0.0)))
    touching = [np.flatnonzero(norms[:, a] > tol * scale) for a in range(patch.n_joints)]
    known = np.zeros(n_el, dtype=bool)
    known[list(omitted)] = True
    c = np.zeros(n_el, dtype=complex)
    pending = list(order if order is not None else bfs_order(patch))
    while pending:
        deferred = []
        progress = False
        for a in pending:
            unknown = [s for s in touching[a] if not known[s]]
            if not unknown:
                continue
            target = U[a] - sum((c[s] * S[s, a] for s in touching[a] if known[s]), np.zeros_like(U[a]))
            V = S[unknown, a].T  # (d, n_unknown)
            if _rank(V, 1e-9) < len(unknown):
                deferred.append(a)
                continue
            sol, *_ = np.linalg.lstsq(V, target, rcond=None)
            c[unknown] = sol
            known[unknown] = True
            progress = True
        if not deferred:
            break
        if not progress:
            a = deferred[0]
            raise DependenceError(f"spanning-set values at joint {patch.labels[a]} are linearly dependent")
        pending = deferred
    return c


# --------------------------------------------------------------------------
# spanning-set checks


@dataclass(frozen=True)
class TouchReport:
    ok: bool
    counts: np.ndarray  # per joint, over the whole enumeration
    tail_hits: int  # joints touched by the tail of the enumeration

    @property
    def max_count(self) -> int:
        return int(np.max(self.counts, initial=0))

    def __bool__(self):
        return self.ok


def touch_counts(elements: Sequence[VelocityField], patch: FinitePatch, tol: float = 1e-12) -> np.ndarray:
    counts = np.zeros(patch.n_joints, dtype=int)
    for f in elements:
        counts += np.linalg.norm(_values(f, patch), axis=1) > tol
    return counts


def check_strictly_null(elements: Sequence[VelocityField], patch: FinitePatch, tail: float = 0.5,
                        tol: float = 1e-12) -> TouchReport:
    """Finite evidence that an enumeration tends to zero strictly on a patch.

    Every joint of the patch must be touched only by elements from the head of
    the enumeration; elements in the final ``tail`` fraction must vanish on
    the patch."""
    elements = list(elements)
    counts = touch_counts(elements, patch, tol)
    cut = int(np.floor(len(elements) * (1 - tail)))
    tail_counts = touch_counts(elements[cut:], patch, tol)
    hits = int(np.sum(tail_counts > 0))
    return TouchReport(hits == 0, counts, hits)


@dataclass(frozen=True)
class LocalBasisReport:
    rank_ok: bool  # span is the full space at every joint
    count_ok: bool  # exactly d elements touch every joint
    ranks: np.ndarray
    counts: np.ndarray

    @property
    def ok(self) -> bool:
        return self.rank_ok and self.count_ok

    def __bool__(self):
        return self.ok


def check_local_basis_property(elements: Sequence[VelocityField], patch: FinitePatch, tol: float = 1e-12) -> LocalBasisReport:
    d = patch.dimension
    vals = np.stack([_values(f, patch) for f in elements], axis=0) if elements else np.zeros((0, patch.n_joints, d))
    ranks = np.zeros(patch.n_joints, dtype=int)
    counts = np.zeros(patch.n_joints, dtype=int)
    for a in range(patch.n_joints):
        V = vals[:, a, :]
        V = V[np.linalg.norm(V, axis=1) > tol]
        counts[a] = len(V)
        ranks[a] = _rank(V, 1e-9) if len(V) else 0
    return LocalBasisReport(bool(np.all(ranks == d)), bool(np.all(counts == d)), ranks, counts)


@dataclass(frozen=True)
class MembershipBound:
    bound: float
    realized: float
    N: int
    M: float

    @property
    def ok(self) -> bool:
        return self.realized <= self.bound * (1 + 1e-12) + 1e-15

    def __bool__(self):
        return self.ok


def bounded_membership_bound(alpha, elements: Sequence[VelocityField], patch: FinitePatch,
                             N: int | None = None, M: float | None = None) -> MembershipBound:
    """N M ||alpha||_inf with the realized sup-norm of sum alpha_s s on the patch.

    N defaults to the largest touch count and M to the largest element
    sup-norm observed on the patch."""
    alpha = np.asarray(alpha, dtype=complex).reshape(-1)
    if len(alpha) != len(elements):
        raise ValueError("one coefficient per element")
    vals = [_values(f, patch) for f in elements]
    if N is None:
        N = int(np.max(touch_counts(elements, patch), initial=0))
    if M is None:
        M = max((float(np.max(np.linalg.norm(v, axis=1), initial=0.0)) for v in vals), default=0.0)
    amax = float(np.max(np.abs(alpha), initial=0.0))
    total = sum((a * v for a, v in zip(alpha, vals)), np.zeros((patch.n_joints, patch.dimension), dtype=complex))
    realized = float(np.max(np.linalg.norm(total, axis=1), initial=0.0))
    return MembershipBound(N * M * amax, realized, N, M)
