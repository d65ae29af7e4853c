"""Crystal frameworks, finite patches, rigidity matrices and flex residuals.

Joints of a crystal framework are labelled ``(kappa, k)`` where ``kappa``
indexes a motif joint and ``k`` is an integer cell offset, so that the joint
sits at ``p_kappa + sum_i k_i b_i``.  Velocity fields are complex by default.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

Label = tuple[int, tuple[int, ...]]

RANK_TOL = 1e-9


class FrameworkError(ValueError):
    """Invalid framework data or an operation outside its domain."""


@dataclass(frozen=True)
class PeriodLattice:
    basis: np.ndarray  # rows are the period vectors

    def __post_init__(self):
        basis = np.array(self.basis, dtype=float)
        if basis.ndim != 2 or basis.shape[0] != basis.shape[1]:
            raise FrameworkError(f"period basis must be d x d, got shape {basis.shape}")
        if abs(np.linalg.det(basis)) < 1e-12:
            raise FrameworkError("period vectors are linearly dependent")
        basis.setflags(write=False)
        object.__setattr__(self, "basis", basis)

    @property
    def dimension(self) -> int:
        return self.basis.shape[0]

    def translate(self, k) -> np.ndarray:
        return np.asarray(k, dtype=float) @ self.basis

    def cell_coordinates(self, x) -> np.ndarray:
        """Fractional lattice coordinates of a point."""
        return np.linalg.solve(self.basis.T, np.asarray(x, dtype=float))


@dataclass(frozen=True)
class Edge:
    """Motif bar between joint ``(a, offset_a)`` and joint ``(b, offset_b)``."""

    a: int
    b: int
    offset_a: tuple[int, ...]
    offset_b: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "offset_a", tuple(int(v) for v in self.offset_a))
        object.__setattr__(self, "offset_b", tuple(int(v) for v in self.offset_b))


@dataclass(frozen=True)
class Motif:
    joints: np.ndarray  # (n_joints, d)
    edges: tuple[Edge, ...]
    joint_ids: tuple[str, ...] = ()

    def __post_init__(self):
        joints = np.array(self.joints, dtype=float)
        if joints.ndim != 2:
            raise FrameworkError("motif joints must be an (n, d) array")
        joints.setflags(write=False)
        object.__setattr__(self, "joints", joints)
        object.__setattr__(self, "edges", tuple(self.edges))
        ids = tuple(self.joint_ids) or tuple(f"p{i + 1}" for i in range(len(joints)))
        if len(ids) != len(joints) or len(set(ids)) != len(ids):
            raise FrameworkError("joint ids must be unique, one per joint")
        object.__setattr__(self, "joint_ids", ids)
        for i, j in itertools.combinations(range(len(joints)), 2):
            if np.allclose(joints[i], joints[j], atol=1e-12):
                raise FrameworkError(f"motif joints {i} and {j} coincide")
        d = joints.shape[1]
        for e in self.edges:
            if not (0 <= e.a < len(joints) and 0 <= e.b < len(joints)):
                raise FrameworkError(f"edge {e} refers to a missing joint")
            if len(e.offset_a) != d or len(e.offset_b) != d:
                raise FrameworkError(f"edge {e} offsets must have length {d}")
            if e.a == e.b and e.offset_a == e.offset_b:
                raise FrameworkError(f"edge {e} is a loop")

    @property
    def n_joints(self) -> int:
        return self.joints.shape[0]

    @property
    def n_edges(self) -> int:
        return len(self.edges)


@dataclass(frozen=True)
class CrystalFramework:
    lattice: PeriodLattice
    motif: Motif
    name: str = "framework"

    def __post_init__(self):
        if self.motif.joints.shape[1] != self.lattice.dimension:
            raise FrameworkError("motif and lattice dimensions differ")
        for i, e in enumerate(self.motif.edges):
            if np.linalg.norm(self.bar_vector(e)) < 1e-12:
                raise FrameworkError(f"edge {i} has zero length")

    @property
    def dimension(self) -> int:
        return self.lattice.dimension

    def joint_position(self, kappa: int, k) -> np.ndarray:
        if not 0 <= kappa < self.motif.n_joints:
            raise IndexError(f"joint index {kappa} out of range")
        k = tuple(k)
        if len(k) != self.dimension:
            raise FrameworkError(f"cell offset {k} must have length {self.dimension}")
        return self.motif.joints[kappa] + self.lattice.translate(k)

    def bar_vector(self, e: Edge) -> np.ndarray:
        """p(e) = p(a, offset_a) - p(b, offset_b)."""
        return self.joint_position(e.a, e.offset_a) - self.joint_position(e.b, e.offset_b)

    def locate(self, x, atol: float = 1e-8) -> Label | None:
        """Label of the joint at position ``x``, or None."""
        x = np.asarray(x, dtype=float)
        for kappa, p in enumerate(self.motif.joints):
            frac = self.lattice.cell_coordinates(x - p)
            k = np.rint(frac)
            if np.allclose(self.lattice.translate(k) + p, x, atol=atol):
                return kappa, tuple(int(v) for v in k)
        return None

    def neighbours(self, kappa: int) -> list[tuple[int, tuple[int, ...]]]:
        """Bar neighbours of joint ``(kappa, 0)`` as (lambda, cell) labels."""
        out = []
        for e in self.motif.edges:
            ka, kb = np.array(e.offset_a), np.array(e.offset_b)
            if e.a == kappa:
                out.append((e.b, tuple(int(v) for v in kb - ka)))
            if e.b == kappa:
                out.append((e.a, tuple(int(v) for v in ka - kb)))
        return out


def joint_position(fw: CrystalFramework, kappa: int, k) -> np.ndarray:
    return fw.joint_position(kappa, k)


def supercell(fw: CrystalFramework, factors: Sequence[int]) -> CrystalFramework:
    """The same framework with the coarser periodic structure f_i b_i.

    Joint (kappa, c) of the new motif, c in [0, f), sits at p_kappa + sum c_i b_i;
    joints are ordered by kappa, then c lexicographically.  A multifactor w of
    the original structure appears at w^f in the new one."""
    f = np.asarray(factors, dtype=int).reshape(-1)
    d = fw.dimension
    if f.size != d or np.any(f < 1):
        raise FrameworkError(f"need {d} positive supercell factors")
    cells = list(itertools.product(*(range(n) for n in f)))
    slot = {c: i for i, c in enumerate(cells)}
    n = fw.motif.n_joints

    def split(kappa, k):
        k = np.asarray(k, dtype=int)
        q, r = np.divmod(k, f)
        return kappa * len(cells) + slot[tuple(int(v) for v in r)], tuple(int(v) for v in q)

    joints = [fw.joint_position(kp, c) for kp in range(n) for c in cells]
    ids = [f"{fw.motif.joint_ids[kp]}@{'.'.join(map(str, c))}" for kp in range(n) for c in cells]
    edges = []
    for c in cells:
        for e in fw.motif.edges:
            a, ka = split(e.a, np.add(c, e.offset_a))
            b, kb = split(e.b, np.add(c, e.offset_b))
            edges.append(Edge(a, b, ka, kb))
    return CrystalFramework(
        PeriodLattice(fw.lattice.basis * f[:, None]),
        Motif(np.array(joints), tuple(edges), tuple(ids)),
        f"{fw.name}x{'x'.join(map(str, f))}",
    )


Box = tuple[tuple[int, int], ...]


def cube(d: int, radius: int) -> Box:
    return tuple((-radius, radius) for _ in range(d))


def grow(box: Box, margin: int) -> Box:
    return tuple((lo - margin, hi + margin) for lo, hi in box)


def _cells(box: Box) -> list[tuple[int, ...]]:
    return list(itertools.product(*(range(lo, hi + 1) for lo, hi in box)))


def _in_box(k, box: Box) -> bool:
    return all(lo <= v <= hi for v, (lo, hi) in zip(k, box))


@dataclass(frozen=True)
class FinitePatch:
    """Finite subframework: motif joints over a box of cells, bars with both ends inside."""

    framework: CrystalFramework
    box: Box
    labels: tuple[Label, ...]
    positions: np.ndarray  # (n_joints, d)
    bars: tuple[tuple[int, int], ...]  # joint-slot pairs
    bar_vectors: np.ndarray  # (n_bars, d)
    bar_edges: tuple[tuple[int, tuple[int, ...]], ...]  # (motif edge index, translation)
    index: Mapping[Label, int] = field(repr=False, default_factory=dict)

    @property
    def dimension(self) -> int:
        return self.framework.dimension

    @property
    def n_joints(self) -> int:
        return len(self.labels)

    def __contains__(self, label) -> bool:
        return label in self.index

    def interior(self, depth: int = 1) -> np.ndarray:
        """Boolean mask of joints whose cell is at least ``depth`` cells from the box boundary."""
        shrunk = grow(self.box, -depth)
        return np.array([_in_box(k, shrunk) for _, k in self.labels], dtype=bool)


def generate_patch(fw: CrystalFramework, box: Box | Sequence[Sequence[int]]) -> FinitePatch:
    box = tuple((int(lo), int(hi)) for lo, hi in box)
    if len(box) != fw.dimension:
        raise FrameworkError(f"box must have {fw.dimension} axis ranges")
    cells = _cells(box) if all(lo <= hi for lo, hi in box) else []
    labels = [(kappa, k) for k in cells for kappa in range(fw.motif.n_joints)]
    index = {lab: i for i, lab in enumerate(labels)}
    positions = np.array([fw.joint_position(kappa, k) for kappa, k in labels]).reshape(-1, fw.dimension)
    bars, vectors, origins = [], [], []
    for ei, e in enumerate(fw.motif.edges):
        ka, kb = np.array(e.offset_a), np.array(e.offset_b)
        pe = fw.bar_vector(e)
        for t in cells:
            t = np.array(t)
            # translate so that the edge's first endpoint lands in cell t
            shift = t - ka
            la, lb = (e.a, tuple(int(v) for v in ka + shift)), (e.b, tuple(int(v) for v in kb + shift))
            if la in index and lb in index:
                bars.append((index[la], index[lb]))
                vectors.append(pe)
                origins.append((ei, tuple(int(v) for v in shift)))
    return FinitePatch(
        framework=fw,
        box=box,
        labels=tuple(labels),
        positions=positions,
        bars=tuple(bars),
        bar_vectors=np.array(vectors, dtype=float).reshape(-1, fw.dimension),
        bar_edges=tuple(origins),
        index=index,
    )


def rigidity_matrix(patch: FinitePatch) -> np.ndarray:
    d = patch.dimension
    R = np.zeros((len(patch.bars), d * patch.n_joints))
    for row, ((a, b), pe) in enumerate(zip(patch.bars, patch.bar_vectors)):
        R[row, d * a:d * a + d] = pe
        R[row, d * b:d * b + d] = -pe
    return R


def null_space(A: np.ndarray, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal kernel basis (columns); threshold sigma < rank_tol * max(1, sigma_max)."""
    m, n = A.shape
    if n == 0:
        return np.zeros((0, 0), dtype=A.dtype)
    if m == 0:
        return np.eye(n, dtype=A.dtype)
    _, s, vh = np.linalg.svd(A, full_matrices=True)
    cutoff = rank_tol * max(1.0, s[0] if s.size else 0.0)
    rank = int(np.sum(s >= cutoff))
    return vh[rank:].conj().T


def flex_space(patch: FinitePatch, rank_tol: float = RANK_TOL) -> np.ndarray:
    return null_space(rigidity_matrix(patch), rank_tol)


# --------------------------------------------------------------------------
# velocity fields


class VelocityField:
    """Assignment of complex d-vectors to joint labels."""

    dimension: int

    def __call__(self, kappa: int, k) -> np.ndarray:
        raise NotImplementedError

    def on_patch(self, patch: FinitePatch) -> np.ndarray:
        """Velocities at the patch joints as an (n_joints, d) complex array."""
        out = np.zeros((patch.n_joints, patch.dimension), dtype=complex)
        for i, (kappa, k) in enumerate(patch.labels):
            out[i] = self(kappa, k)
        return out

    def restrict(self, patch: FinitePatch) -> "ExplicitField":
        return ExplicitField.from_array(patch, self.on_patch(patch))

    def __add__(self, other: "VelocityField") -> "VelocityField":
        return LinearCombination(((1.0, self), (1.0, other)))

    def __rmul__(self, c) -> "VelocityField":
        return LinearCombination(((c, self),))


class MissingJointError(KeyError):
    pass


class ExplicitField(VelocityField):
    """Finite table of velocities.  Joints absent from the table are an error
    unless ``zero_outside`` is set, in which case they carry zero velocity."""

    def __init__(self, values: Mapping[Label, Iterable[complex]], dimension: int, zero_outside: bool = False):
        self.dimension = int(dimension)
        self.values = {(int(kp), tuple(int(v) for v in k)): np.asarray(vec, dtype=complex)
                       for (kp, k), vec in values.items()}
        self.zero_outside = zero_outside

    @classmethod
    def from_array(cls, patch: FinitePatch, array, zero_outside: bool = False) -> "ExplicitField":
        array = np.asarray(array, dtype=complex).reshape(patch.n_joints, patch.dimension)
        return cls(dict(zip(patch.labels, array)), patch.dimension, zero_outside)

    def __call__(self, kappa, k):
        key = (kappa, tuple(k))
        if key in self.values:
            return self.values[key]
        if self.zero_outside:
            return np.zeros(self.dimension, dtype=complex)
        raise MissingJointError(f"velocity field has no value at joint {key}")


class FactorField(VelocityField):
    """Factor periodic field u(kappa, k) = omega^k b_kappa."""

    def __init__(self, base, omega):
        self.omega = np.asarray(omega, dtype=complex)
        if np.any(self.omega == 0):
            raise FrameworkError("multifactor components must be nonzero")
        self.dimension = self.omega.size
        self.base = np.asarray(base, dtype=complex).reshape(-1, self.dimension)

    def __call__(self, kappa, k):
        return np.prod(self.omega ** np.asarray(k)) * self.base[kappa]

    def on_patch(self, patch):
        ks = np.array([k for _, k in patch.labels]).reshape(-1, self.dimension)
        kap = np.array([kp for kp, _ in patch.labels], dtype=int)
        phase = np.prod(self.omega[None, :] ** ks, axis=1)
        return phase[:, None] * self.base[kap]


class RuleField(VelocityField):
    """Field given by a function of (kappa, k)."""

    def __init__(self, rule: Callable[[int, tuple], np.ndarray], dimension: int, name: str = ""):
        self.rule = rule
        self.dimension = dimension
        self.name = name

    def __call__(self, kappa, k):
        return np.asarray(self.rule(kappa, tuple(k)), dtype=complex)


class LinearCombination(VelocityField):
    def __init__(self, terms):
        self.terms = tuple(terms)
        self.dimension = self.terms[0][1].dimension

    def __call__(self, kappa, k):
        return sum(c * f(kappa, k) for c, f in self.terms)

    def on_patch(self, patch):
        return sum(c * f.on_patch(patch) for c, f in self.terms)


def zero_field(d: int) -> ExplicitField:
    return ExplicitField({}, d, zero_outside=True)


@dataclass(frozen=True)
class ResidualReport:
    residuals: np.ndarray  # complex, one per bar
    max_residual: float
    worst_bar: int | None
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tol

    def __bool__(self):
        return self.passed


def bar_residuals(patch: FinitePatch, velocities: np.ndarray) -> np.ndarray:
    """<p(e), u(a) - u(b)> for every bar; ``velocities`` is (n_joints, d)."""
    if not patch.bars:
        return np.zeros(0, dtype=complex)
    bars = np.array(patch.bars)
    diff = velocities[bars[:, 0]] - velocities[bars[:, 1]]
    return np.einsum("ij,ij->i", patch.bar_vectors, diff)


def verify_flex(patch: FinitePatch, u: VelocityField | np.ndarray, tol: float = 1e-12) -> ResidualReport:
    velocities = u if isinstance(u, np.ndarray) else u.on_patch(patch)
    res = bar_residuals(patch, np.asarray(velocities, dtype=complex).reshape(patch.n_joints, patch.dimension))
    if res.size == 0:
        return ResidualReport(res, 0.0, None, tol)
    worst = int(np.argmax(np.abs(res)))
    return ResidualReport(res, float(np.abs(res[worst])), worst, tol)


def relative_residual(patch: FinitePatch, u: VelocityField | np.ndarray) -> float:
    """Max bar residual divided by (max bar length * max joint speed)."""
    velocities = u if isinstance(u, np.ndarray) else u.on_patch(patch)
    scale = np.max(np.linalg.norm(velocities, axis=1), initial=0.0)
    if patch.bars:
        scale *= np.max(np.linalg.norm(patch.bar_vectors, axis=1))
    rep = verify_flex(patch, velocities)
    return rep.max_residual / scale if scale > 0 else rep.max_residual


def rigid_motion_flexes(d: int | CrystalFramework | FinitePatch) -> list[RuleField]:
    """Translations followed by infinitesimal rotations about the origin."""
    fw = None
    if isinstance(d, FinitePatch):
        fw = d.framework
    elif isinstance(d, CrystalFramework):
        fw = d
    dim = fw.dimension if fw is not None else int(d)
    if dim not in (2, 3):
        raise FrameworkError(f"rigid motions supported for d = 2, 3 only (got {dim})")

    def position(kappa, k):
        if fw is None:
            raise FrameworkError("rotation fields need a framework to place joints")
        return fw.joint_position(kappa, k)

    fields = [RuleField(lambda kp, k, e=np.eye(dim)[i]: e, dim, f"translation_{'xyz'[i]}") for i in range(dim)]
    if dim == 2:
        gens = [lambda x: np.array([-x[1], x[0]])]
        names = ["rotation"]
    else:
        gens = [
            lambda x: np.array([0.0, -x[2], x[1]]),
            lambda x: np.array([x[2], 0.0, -x[0]]),
            lambda x: np.array([-x[1], x[0], 0.0]),
        ]
        names = ["rotation_x", "rotation_y", "rotation_z"]
    for g, name in zip(gens, names):
        fields.append(RuleField(lambda kp, k, g=g: g(position(kp, k)), dim, name))
    return fields


def rotation_velocity(x) -> np.ndarray:
    """Planar rotation generator (x, y) -> (-y, x)."""
    x = np.asarray(x, dtype=float)
    return np.array([-x[1], x[0]])
