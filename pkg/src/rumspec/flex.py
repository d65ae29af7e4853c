"""Factor periodic, phase summed and unbounded flexes.

A factor periodic field has ``u(kappa, k) = omega^k b_kappa``.  It is a flex
iff ``Psi(omega^-1) b = 0``.  Band limited flexes (support near a proper
sublattice) can be summed over transverse translates with unimodular phases
to produce further flexes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .framework import (
    CrystalFramework,
    ExplicitField,
    FactorField,
    FinitePatch,
    FrameworkError,
    Label,
    LinearCombination,
    VelocityField,
    generate_patch,
    grow,
)
from .symbol import assemble_transfer_function, psi_at_inverse

SUPPORT_TOL = 1e-12


def factor_periodic_flex(fw: CrystalFramework, omega, b, patch: FinitePatch | None = None) -> VelocityField:
    """b (x) e_omega; tabulated on ``patch`` when one is given."""
    omega = np.asarray(omega, dtype=complex).reshape(-1)
    if omega.size != fw.dimension:
        raise FrameworkError(f"multifactor must have {fw.dimension} components")
    if np.any(omega == 0):
        raise FrameworkError("multifactor components must be nonzero")
    b = np.asarray(b, dtype=complex).reshape(-1)
    if b.size != fw.dimension * fw.motif.n_joints:
        raise FrameworkError(f"base vector must have {fw.dimension * fw.motif.n_joints} entries")
    field = FactorField(b, omega)
    return field.restrict(patch) if patch is not None else field


@dataclass(frozen=True)
class FactorCheck:
    ok: bool
    residual: float  # ||Psi(omega^-1) b||
    relative: float  # residual / (||Psi|| ||b||)

    def __bool__(self):
        return self.ok


def check_factor_flex(fw: CrystalFramework, omega, b, tol: float = 1e-9, matrix=None) -> FactorCheck:
    """True iff ||Psi(omega^-1) b|| <= tol ||Psi(omega^-1)|| ||b||."""
    M = matrix if matrix is not None else assemble_transfer_function(fw)
    A = psi_at_inverse(M, omega).matrix
    b = np.asarray(b, dtype=complex).reshape(-1)
    res = float(np.linalg.norm(A @ b))
    scale = float(np.linalg.norm(A, 2) * np.linalg.norm(b))
    rel = res / scale if scale > 0 else res
    return FactorCheck(bool(res <= tol * scale), res, rel)


# --------------------------------------------------------------------------
# geometric directions


@dataclass(frozen=True)
class GeometricDirection:
    """f(a - b) = lam f(a) wherever both joints lie in the patch."""

    b: tuple[int, ...]
    lam: complex
    residual: float


def _field_values(u: VelocityField | np.ndarray, patch: FinitePatch) -> np.ndarray:
    if isinstance(u, np.ndarray):
        return np.asarray(u, dtype=complex).reshape(patch.n_joints, patch.dimension)
    return u.on_patch(patch)


def detect_geometric_directions(u, patch: FinitePatch, radius: int = 3, tol: float = 1e-9) -> list[GeometricDirection]:
    """All lattice vectors b with ||b||_inf <= radius that act on u by a scalar."""
    F = _field_values(u, patch)
    if not np.any(np.abs(F) > SUPPORT_TOL):
        raise FrameworkError("field vanishes on the patch")
    d = patch.dimension
    out = []
    for b in itertools.product(range(-radius, radius + 1), repeat=d):
        src, dst = [], []
        for i, (kp, k) in enumerate(patch.labels):
            j = patch.index.get((kp, tuple(x - y for x, y in zip(k, b))))
            if j is not None:
                src.append(i)
                dst.append(j)
        if not src:
            continue
        fa = F[src].reshape(-1)
        fb = F[dst].reshape(-1)
        na, nb = np.linalg.norm(fa), np.linalg.norm(fb)
        if na <= SUPPORT_TOL or nb <= SUPPORT_TOL:
            continue  # no overlap of supports, nothing to fit
        lam = np.vdot(fa, fb) / np.vdot(fa, fa)
        res = float(np.linalg.norm(fb - lam * fa))
        if res <= tol * max(na, nb):
            out.append(GeometricDirection(tuple(b), complex(lam), res))
    return out


# --------------------------------------------------------------------------
# band limitation


@dataclass(frozen=True)
class BandReport:
    t: int  # rank of the support lattice; 0 for finite support
    band: bool
    witnesses: tuple[tuple[int, ...], ...]  # generators of the support directions
    width: float  # max distance of support cells from the spanned subspace
    finite: bool


def _primitive(v) -> tuple[int, ...]:
    v = np.asarray(v, dtype=int)
    g = np.gcd.reduce(np.abs(v))
    v = v // g if g else v
    nz = np.flatnonzero(v)
    if nz.size and v[nz[0]] < 0:
        v = -v
    return tuple(int(x) for x in v)


def band_report(u, patch: FinitePatch, tol: float = SUPPORT_TOL) -> BandReport:
    """Support rank and band limitation of a field observed on a patch.

    Support touching no boundary cell counts as finite (t = 0).  Otherwise t
    counts the principal axes of the support cells along which the support
    extends over more than half the smallest box width; witnesses are
    primitive support differences closest to those axes.  The field is band
    limited when t < d and the support stays within a quarter box width of the
    spanned subspace.
    """
    F = _field_values(u, patch)
    d = patch.dimension
    cells = np.array([k for _, k in patch.labels]).reshape(-1, d)
    support = cells[np.linalg.norm(F, axis=1) > tol]
    if len(support) == 0:
        return BandReport(0, True, (), 0.0, True)
    lo = np.array([a for a, _ in patch.box])
    hi = np.array([b for _, b in patch.box])
    on_boundary = np.any((support == lo) | (support == hi), axis=1)
    if not on_boundary.any():
        return BandReport(0, True, (), 0.0, True)
    span_len = float(np.min(hi - lo))
    uniq = np.unique(support, axis=0).astype(float)
    centred = uniq - uniq.mean(axis=0)
    _, _, vh = np.linalg.svd(centred, full_matrices=False)
    proj = centred @ vh.T
    extent = proj.max(axis=0) - proj.min(axis=0)
    axes = vh[extent > span_len / 2]
    t = len(axes)
    if t == 0:
        return BandReport(0, True, (), 0.0, True)
    # integer witnesses: primitive support differences closest to the principal axes
    diffs = (uniq[:, None, :] - uniq[None, :, :]).reshape(-1, d).astype(int)
    cands = {_primitive(x) for x in diffs if np.any(x)}
    q = axes.T

    def off_axis(v):
        v = np.asarray(v, dtype=float)
        return float(np.linalg.norm(v - q @ (q.T @ v)) / np.linalg.norm(v))

    witnesses: list[tuple[int, ...]] = []
    basis = np.zeros((0, d))
    for v in sorted(cands, key=lambda v: (round(off_axis(v), 9), np.abs(v).sum(), v)):
        trial = np.vstack([basis, v])
        if np.linalg.matrix_rank(trial) > len(basis):
            basis, witnesses = trial, witnesses + [v]
        if len(witnesses) == t:
            break
    width = float(np.max(np.linalg.norm(centred - centred @ q @ q.T, axis=1)))
    band = t < d and width <= span_len / 4
    return BandReport(t, band, tuple(witnesses), width, False)


# --------------------------------------------------------------------------
# phase sums


def translate_field(u: VelocityField, shift) -> VelocityField:
    """(X_v u)(kappa, k) = u(kappa, k - v)."""
    from .framework import RuleField

    shift = np.asarray(shift, dtype=int)
    return RuleField(lambda kp, k: u(kp, tuple(np.asarray(k) - shift)), u.dimension)


def phase_sum(u: VelocityField, generators: Sequence[Sequence[int]], omega_star, patch: FinitePatch,
              margin: int = 2, check_band: bool = True) -> ExplicitField:
    """w = sum over k' of omega_*^k' X_{k'} u, truncated to translates that can meet the patch.

    Transverse indices run over a cube of half-width (largest patch cell
    coordinate + margin), which includes every translate meeting the patch
    once the margin exceeds the band width.
    """
    generators = [np.asarray(g, dtype=int) for g in generators]
    omega_star = np.asarray(omega_star, dtype=complex).reshape(-1)
    if len(generators) != omega_star.size:
        raise FrameworkError("need one phase per transverse generator")
    if not generators:
        return ExplicitField.from_array(patch, _field_values(u, patch))
    if check_band:
        rep = band_report(u, patch)
        if not rep.band:
            raise FrameworkError("phase sums need a band limited field")
    extent = max(max(abs(a), abs(b)) for a, b in patch.box) + margin
    total = np.zeros((patch.n_joints, patch.dimension), dtype=complex)
    cells = np.array([k for _, k in patch.labels]).reshape(-1, patch.dimension)
    kap = [kp for kp, _ in patch.labels]
    for kk in itertools.product(range(-extent, extent + 1), repeat=len(generators)):
        shift = sum(c * g for c, g in zip(kk, generators))
        coeff = np.prod(omega_star ** np.array(kk))
        vals = np.array([u(kp, tuple(k - shift)) for kp, k in zip(kap, cells)])
        total += coeff * vals.reshape(total.shape)
    return ExplicitField.from_array(patch, total)


def interior_patch(patch: FinitePatch, depth: int = 1) -> FinitePatch:
    return generate_patch(patch.framework, grow(patch.box, -depth))


# --------------------------------------------------------------------------
# unbounded flexes


@dataclass
class UnboundedFlex:
    coefficients: np.ndarray
    field: VelocityField
    witness_norms: np.ndarray  # ||g(a_n)||

    @property
    def ok(self) -> bool:
        n = np.arange(1, len(self.witness_norms) + 1)
        return bool(np.all(self.witness_norms >= n - 1e-9 * n))


def build_unbounded_flex(elements: Sequence[VelocityField], witnesses: Sequence[Label], horizon: int | None = None,
                         tol: float = SUPPORT_TOL) -> UnboundedFlex:
    """Coefficients with alpha_1 = 1 and alpha_n = n + ||sum_{k<n} alpha_k h_k(a_n)||.

    Each h_k is first scaled so that ||h_k(a_k)|| = 1.  The witness chain must
    satisfy h_k(a_k) != 0 and h_k(a_j) = 0 for j < k."""
    N = len(elements) if horizon is None else int(horizon)
    if N > len(elements) or N > len(witnesses):
        raise FrameworkError("horizon exceeds the supplied elements or witnesses")
    H = [[np.asarray(elements[k](*witnesses[j]), dtype=complex) for j in range(N)] for k in range(N)]
    scale = []
    for k in range(N):
        nk = np.linalg.norm(H[k][k])
        if nk <= tol:
            raise FrameworkError(f"element {k + 1} vanishes at its witness joint")
        for j in range(k):
            if np.linalg.norm(H[k][j]) > tol * max(1.0, nk):
                raise FrameworkError(f"element {k + 1} is nonzero at the earlier witness {j + 1}")
        scale.append(1.0 / nk)
    alpha = np.zeros(N)
    norms = np.zeros(N)
    for n in range(N):
        cross = sum((alpha[k] * scale[k] * H[k][n] for k in range(n)), np.zeros_like(H[0][0]))
        alpha[n] = 1.0 if n == 0 else (n + 1) + np.linalg.norm(cross)
        norms[n] = np.linalg.norm(cross + alpha[n] * scale[n] * H[n][n])
    field = LinearCombination(tuple((alpha[k] * scale[k], elements[k]) for k in range(N)))
    return UnboundedFlex(alpha, field, norms)


def sup_norm_estimate(u, patches: Sequence[FinitePatch]) -> np.ndarray:
    """Sup of ||u(a)|| over each patch of an increasing sequence."""
    out = []
    for p in patches:
        F = _field_values(u, p)
        out.append(float(np.max(np.linalg.norm(F, axis=1), initial=0.0)))
    return np.array(out)


def growth_ratios(norms: np.ndarray) -> np.ndarray:
    norms = np.asarray(norms, dtype=float)
    return norms[1:] / norms[:-1]
