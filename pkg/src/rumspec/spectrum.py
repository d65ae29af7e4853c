"""Rank-degeneracy scans of the symbol and transfer functions.

A sample point is flagged when the smallest singular value, normalised by the
largest one, drops below ``tol``.  On the torus the RUM scan evaluates the
transfer function at ``conj(omega) = exp(-i theta)``; off the torus the
geometric slice evaluates ``Psi((r e^{i theta})^-1)``.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .framework import CrystalFramework
from .laurent import LaurentMatrix
from .symbol import assemble_transfer_function, batch_singular_values

DEFAULT_TOL = 1e-8
CHUNK = 4096
TWO_PI = 2 * math.pi


def default_resolution(d: int) -> int:
    return 64 if d <= 2 else 48


def default_threads() -> int:
    env = os.environ.get("RUMSPEC_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class TorusGrid:
    """Product grid theta_j = 2 pi j / resolution, optionally with fixed axes."""

    resolution: int
    dimension: int
    fixed: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        if self.resolution < 1 or self.dimension < 1:
            raise ValueError("resolution and dimension must be positive")
        fixed = tuple(sorted((int(i), float(t)) for i, t in dict(self.fixed).items()))
        for i, _ in fixed:
            if not 0 <= i < self.dimension:
                raise ValueError(f"fixed axis {i} out of range")
        object.__setattr__(self, "fixed", fixed)

    @property
    def free_axes(self) -> list[int]:
        fixed = dict(self.fixed)
        return [i for i in range(self.dimension) if i not in fixed]

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.resolution,) * len(self.free_axes)

    def phases(self) -> np.ndarray:
        return TWO_PI * np.arange(self.resolution) / self.resolution

    def points(self) -> np.ndarray:
        """All sample phases as an (N, d) array in C order over the free axes."""
        free = self.free_axes
        n = self.resolution ** len(free)
        out = np.empty((n, self.dimension))
        if free:
            idx = np.indices(self.shape).reshape(len(free), -1).T
            out[:, free] = TWO_PI * idx / self.resolution
        for i, t in self.fixed:
            out[:, i] = t
        return out


@dataclass(frozen=True)
class SliceSpec:
    moduli: tuple[float, ...]

    def __post_init__(self):
        moduli = tuple(float(r) for r in self.moduli)
        if any(not r > 0 for r in moduli):
            raise ValueError("slice moduli must be positive")
        object.__setattr__(self, "moduli", moduli)


@dataclass(frozen=True)
class Line:
    """Closed torus line theta(t) = point + t * direction, t in [0, 2 pi).

    In log coordinates ``log z = log r + i theta`` the line passes through
    ``log(moduli) + i point`` with direction ``i * direction``."""

    point: tuple[float, ...]
    direction: tuple[int, ...]
    fraction: float
    moduli: tuple[float, ...] | None = None


@dataclass
class SpectrumReport:
    thetas: np.ndarray
    sigma_min: np.ndarray
    sigma_max: np.ndarray
    kernel_dim: np.ndarray
    tol: float
    resolution: int
    framework: str = ""
    moduli: tuple[float, ...] | None = None
    fixed: tuple[tuple[int, float], ...] = ()
    lines: list[Line] = field(default_factory=list)
    matrix: LaurentMatrix | None = field(default=None, repr=False)

    @property
    def ratio(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            r = self.sigma_min / self.sigma_max
        return np.where(self.sigma_max > 0, r, 0.0)

    @property
    def flagged(self) -> np.ndarray:
        return self.ratio < self.tol

    @property
    def flagged_points(self) -> np.ndarray:
        return self.thetas[self.flagged]

    @property
    def dimension(self) -> int:
        return self.thetas.shape[1]

    def grid_indices(self) -> np.ndarray:
        return np.rint(self.thetas * self.resolution / TWO_PI).astype(int) % self.resolution

    def to_csv(self, stream=None) -> str:
        """One row per sample: theta_1..theta_d, sigma_min, sigma_ratio, flagged."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        d = self.dimension
        w.writerow([f"theta_{i + 1}" for i in range(d)] + ["sigma_min", "sigma_ratio", "flagged"])
        flagged = self.flagged
        ratio = self.ratio
        for th, s, r, f in zip(self.thetas, self.sigma_min, ratio, flagged):
            w.writerow(["%.12e" % t for t in th] + ["%.12e" % s, "%.12e" % r, int(f)])
        text = buf.getvalue()
        if stream is not None:
            stream.write(text)
        return text


def _evaluation_points(thetas: np.ndarray, moduli=None) -> np.ndarray:
    """The argument z fed to Psi so that its kernel gives multifactor omega."""
    if moduli is None:
        return np.exp(-1j * thetas)
    return 1.0 / (np.asarray(moduli)[None, :] * np.exp(1j * thetas))


def _sigma_stats(M: LaurentMatrix, Z: np.ndarray, tol: float, threads: int = 1):
    n = len(Z)
    smin = np.empty(n)
    smax = np.empty(n)
    kdim = np.empty(n, dtype=int)
    chunks = [(i, min(i + CHUNK, n)) for i in range(0, n, CHUNK)]

    def work(span):
        lo, hi = span
        s = batch_singular_values(M, Z[lo:hi])
        smax[lo:hi] = s[:, 0] if s.shape[1] else 0.0
        smin[lo:hi] = s[:, -1] if s.shape[1] else 0.0
        scale = np.where(s[:, :1] > 0, s[:, :1], 1.0)
        kdim[lo:hi] = np.sum(s / scale < tol, axis=1)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, chunks))
    else:
        for span in chunks:
            work(span)
    return smin, smax, kdim


def _as_matrix(fw: CrystalFramework | LaurentMatrix) -> tuple[LaurentMatrix, str]:
    if isinstance(fw, LaurentMatrix):
        return fw, ""
    return assemble_transfer_function(fw), fw.name


def scan_rum_spectrum(fw, grid: TorusGrid | None = None, tol: float = DEFAULT_TOL,
                      threads: int | None = None) -> SpectrumReport:
    """Flag torus samples where Phi(conj(omega)) loses rank."""
    M, name = _as_matrix(fw)
    grid = grid or TorusGrid(default_resolution(M.nvars), M.nvars)
    thetas = grid.points()
    smin, smax, kdim = _sigma_stats(M, _evaluation_points(thetas), tol, threads or default_threads())
    return SpectrumReport(thetas, smin, smax, kdim, tol, grid.resolution, name, None, grid.fixed, matrix=M)


def scan_geometric_slice(fw, slice: SliceSpec, grid: TorusGrid | None = None, tol: float = DEFAULT_TOL,
                         threads: int | None = None) -> SpectrumReport:
    """Flag phases theta where Psi((r e^{i theta})^-1) loses rank."""
    M, name = _as_matrix(fw)
    if len(slice.moduli) != M.nvars:
        raise ValueError(f"slice needs {M.nvars} moduli")
    grid = grid or TorusGrid(default_resolution(M.nvars), M.nvars)
    thetas = grid.points()
    Z = _evaluation_points(thetas, slice.moduli)
    smin, smax, kdim = _sigma_stats(M, Z, tol, threads or default_threads())
    return SpectrumReport(thetas, smin, smax, kdim, tol, grid.resolution, name, slice.moduli, grid.fixed, matrix=M)


def normalized_sigma(M: LaurentMatrix, omega) -> float:
    """sigma_min / sigma_max of Psi(omega^-1)."""
    omega = np.asarray(omega, dtype=complex).reshape(1, -1)
    s = batch_singular_values(M, 1.0 / omega)[0]
    return float(s[-1] / s[0]) if s[0] > 0 else 0.0


# --------------------------------------------------------------------------
# root refinement


@dataclass(frozen=True)
class RefineResult:
    point: np.ndarray  # complex multifactor
    sigma: float  # normalised sigma_min at the point
    converged: bool
    iterations: int

    @property
    def phases(self) -> np.ndarray:
        return np.mod(np.angle(self.point), TWO_PI)


def refine_root(fw, seed, tol: float = DEFAULT_TOL, vary_moduli: bool | None = None,
                trust_radius: float = 0.1, min_step: float = 1e-12, max_iter: int = 20000) -> RefineResult:
    """Coordinate descent of sigma_min/sigma_max over phases (and log-moduli).

    Moduli are varied only when ``vary_moduli`` is set or the seed is off the
    torus.  Moves are confined to a box of half-width ``trust_radius`` about
    the seed; if the minimum found there is not below ``tol`` the result is
    reported as not converged.
    """
    M, _ = _as_matrix(fw)
    seed = np.asarray(seed, dtype=complex).reshape(-1)
    if seed.size != M.nvars or np.any(seed == 0):
        raise ValueError("seed must be a nonzero complex point of the right dimension")
    d = seed.size
    if vary_moduli is None:
        vary_moduli = not np.allclose(np.abs(seed), 1.0, atol=1e-12)
    x0 = np.concatenate([np.angle(seed), np.log(np.abs(seed))])
    active = list(range(d)) + (list(range(d, 2 * d)) if vary_moduli else [])

    def omega(x):
        return np.exp(x[d:]) * np.exp(1j * x[:d])

    def f(x):
        return normalized_sigma(M, omega(x))

    x = x0.copy()
    fx = f(x)
    step = min(trust_radius / 4, 1e-2)
    it = 0
    while step >= min_step and it < max_iter:
        improved = False
        for i in active:
            for sgn in (1.0, -1.0):
                y = x.copy()
                y[i] += sgn * step
                if abs(y[i] - x0[i]) > trust_radius:
                    continue
                fy = f(y)
                it += 1
                if fy < fx:
                    # keep going while the move pays off
                    while True:
                        z = y.copy()
                        z[i] += sgn * step
                        if abs(z[i] - x0[i]) > trust_radius:
                            break
                        fz = f(z)
                        it += 1
                        if fz >= fy:
                            break
                        y, fy = z, fz
                    x, fx = y, fy
                    improved = True
                    break
        if not improved:
            step /= 2
    point = seed if np.array_equal(x, x0) else omega(x)
    return RefineResult(point, fx, bool(fx < tol), it)


def sweep_moduli(fw, axis: int, values: Sequence[float], base_moduli=None, grid: TorusGrid | None = None,
                 tol: float = DEFAULT_TOL, threads: int | None = None):
    """Scan slices with one modulus swept; refine the best sample into a root.

    Returns (per-slice minimum ratios, refined result)."""
    M, _ = _as_matrix(fw)
    d = M.nvars
    base = np.ones(d) if base_moduli is None else np.asarray(base_moduli, dtype=float)
    grid = grid or TorusGrid(default_resolution(d), d)
    best = None
    minima = []
    for r in values:
        moduli = base.copy()
        moduli[axis] = r
        rep = scan_geometric_slice(M, SliceSpec(tuple(moduli)), grid, tol, threads)
        j = int(np.argmin(rep.ratio))
        minima.append(float(rep.ratio[j]))
        if best is None or rep.ratio[j] < best[0]:
            best = (float(rep.ratio[j]), moduli * np.exp(1j * rep.thetas[j]))
    result = refine_root(M, best[1], tol, vary_moduli=True, trust_radius=0.5)
    return np.array(minima), result


# --------------------------------------------------------------------------
# linear structure


def primitive_directions(d: int, max_den: int = 8) -> list[tuple[int, ...]]:
    """Primitive integer vectors with entries bounded by max_den, first nonzero entry positive."""
    out = []
    for v in itertools.product(range(-max_den, max_den + 1), repeat=d):
        if not any(v) or math.gcd(*v) != 1:
            continue
        first = next(c for c in v if c)
        if first > 0:
            out.append(v)
    out.sort(key=lambda v: (sum(abs(c) for c in v), tuple(-abs(c) for c in v), v))
    return out


def line_samples(point, direction, n: int = 256) -> np.ndarray:
    t = TWO_PI * np.arange(n) / n
    return np.mod(np.asarray(point)[None, :] + t[:, None] * np.asarray(direction)[None, :], TWO_PI)


def detect_linear_structure(report: SpectrumReport, tol: float | None = None, max_den: int = 8,
                            samples: int = 256, min_fraction: float = 0.95, max_lines: int = 64) -> list[Line]:
    """Torus lines with small rational direction that lie in the flagged set.

    Candidates are lines through a flagged sample whose grid orbit is at least
    ``min_fraction`` flagged; each is confirmed by ``samples`` fresh
    evaluations along the line.  Only full-resolution (unfixed) scans are
    searched.  The result is sorted and also stored on the report."""
    tol = report.tol if tol is None else tol
    if report.fixed:
        raise ValueError("line detection needs a scan without fixed axes")
    M = report.matrix
    if M is None:
        raise ValueError("report carries no transfer function")
    d, res = report.dimension, report.resolution
    flags = (report.ratio < tol).reshape((res,) * d)
    idx = report.grid_indices()[report.ratio < tol]
    if len(idx) == 0:
        report.lines = []
        return []
    steps = np.arange(res)
    lines: list[Line] = []
    seen: set = set()
    for v in primitive_directions(d, max_den):
        orbit = (idx[:, None, :] + steps[None, :, None] * np.array(v)[None, None, :]) % res
        hit = flags[tuple(orbit[..., i] for i in range(d))]
        frac = hit.mean(axis=1)
        for j in np.flatnonzero(frac >= min_fraction):
            key = (v, min(map(tuple, orbit[j])))
            if key in seen:
                continue
            seen.add(key)
            point = TWO_PI * np.array(key[1]) / res
            pts = line_samples(point, v, samples)
            ratio = _ratios(M, pts, report.moduli)
            dense = float(np.mean(ratio < tol))
            if dense >= min_fraction:
                lines.append(Line(tuple(float(p) for p in point), v, dense, report.moduli))
        if len(lines) >= max_lines:
            break
    lines.sort(key=lambda ln: (ln.direction, ln.point))
    report.lines = lines[:max_lines]
    return report.lines


def _ratios(M: LaurentMatrix, thetas: np.ndarray, moduli=None) -> np.ndarray:
    s = batch_singular_values(M, _evaluation_points(thetas, moduli))
    return np.where(s[:, 0] > 0, s[:, -1] / np.where(s[:, 0] > 0, s[:, 0], 1.0), 0.0)


def sample_ratios(fw, thetas, moduli=None) -> np.ndarray:
    """Normalised sigma_min at arbitrary phase samples."""
    M, _ = _as_matrix(fw)
    return _ratios(M, np.atleast_2d(np.asarray(thetas, dtype=float)), moduli)
