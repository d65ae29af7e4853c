"""Built-in crystal frameworks and their catalogued flexes.

Geometry conventions
--------------------
grid        unit square lattice, one joint, bars to the right and upward neighbours.
hex         unit-bar honeycomb, pointy-top hexagons, lattice (sqrt3, 0), (sqrt3/2, 3/2).
kagome2d    unit-bar kagome; up-triangle a=(0,0), b=(1,0), c=(1/2, sqrt3/2);
            lattice (2, 0), (1, sqrt3).
octahedron  corner-connected regular octahedra, lattice 2*I, joints (1,0,0),
            (0,1,0), (0,0,1).
kite        corner-connected 5-bar darts (symmetric about their horizontal
            diagonal), lattice (1, 0), (0, 1.4).
bipyramid   triangular bipyramids, lattice (1,0,0), (1/2,sqrt3/2,0), (0,0,2h).
kagome3d    corner-sharing regular tetrahedra (pyrochlore net), 4 joints, 12 bars.
triangular  fully triangulated plane; infinitesimally rigid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .framework import (
    CrystalFramework,
    Edge,
    FactorField,
    FrameworkError,
    Motif,
    PeriodLattice,
    RuleField,
    VelocityField,
    rigid_motion_flexes,
)

SQRT3 = math.sqrt(3.0)
ALPHA = SQRT3 / 6.0
HEIGHT = math.sqrt(2.0 / 3.0)

# kite dart: apex joints at (x, +-0.7) relative to the diagonal y = 0
KITE_APEX_X = -0.3


def _fw(name, basis, joints, edges, ids=()) -> CrystalFramework:
    return CrystalFramework(PeriodLattice(np.array(basis)), Motif(np.array(joints), tuple(edges), tuple(ids)), name)


def make_grid2d() -> CrystalFramework:
    return _fw(
        "grid",
        [[1.0, 0.0], [0.0, 1.0]],
        [[0.0, 0.0]],
        [Edge(0, 0, (0, 0), (1, 0)), Edge(0, 0, (0, 0), (0, 1))],
    )


def make_triangular() -> CrystalFramework:
    return _fw(
        "triangular",
        [[1.0, 0.0], [0.5, SQRT3 / 2]],
        [[0.0, 0.0]],
        [Edge(0, 0, (0, 0), (1, 0)), Edge(0, 0, (0, 0), (0, 1)), Edge(0, 0, (1, 0), (0, 1))],
    )


def make_hex() -> CrystalFramework:
    return _fw(
        "hex",
        [[SQRT3, 0.0], [SQRT3 / 2, 1.5]],
        [[0.0, 0.0], [0.0, 1.0]],
        [Edge(0, 1, (0, 0), (0, 0)), Edge(1, 0, (0, 0), (0, 1)), Edge(1, 0, (0, 0), (-1, 1))],
        ("a", "b"),
    )


def make_kagome2d() -> CrystalFramework:
    return _fw(
        "kagome2d",
        [[2.0, 0.0], [1.0, SQRT3]],
        [[0.0, 0.0], [1.0, 0.0], [0.5, SQRT3 / 2]],
        [
            Edge(0, 1, (0, 0), (0, 0)),
            Edge(1, 2, (0, 0), (0, 0)),
            Edge(2, 0, (0, 0), (0, 0)),
            Edge(1, 0, (0, 0), (1, 0)),
            Edge(2, 0, (0, 0), (0, 1)),
            Edge(2, 1, (0, 0), (-1, 1)),
        ],
        ("a", "b", "c"),
    )


def make_octahedron() -> CrystalFramework:
    # joint sigma sits at e_sigma; the octahedron of cell 0 has vertices
    # (sigma, 0) at +e_sigma and (sigma, -e_sigma) at -e_sigma
    edges = []
    unit = np.eye(3, dtype=int)
    for s in range(3):
        for t in range(s + 1, 3):
            for os_ in (np.zeros(3, int), -unit[s]):
                for ot in (np.zeros(3, int), -unit[t]):
                    edges.append(Edge(s, t, tuple(os_), tuple(ot)))
    return _fw(
        "octahedron",
        2.0 * np.eye(3),
        np.eye(3),
        edges,
        ("px", "py", "pz"),
    )


def make_kite(apex_x: float = KITE_APEX_X) -> CrystalFramework:
    # dart L=(0,0), T=(x, 0.7), R=(1,0), B=(x,-0.7); L/R shared horizontally, T/B vertically
    return _fw(
        "kite",
        [[1.0, 0.0], [0.0, 1.4]],
        [[0.0, 0.0], [apex_x, 0.7]],
        [
            Edge(0, 0, (0, 0), (1, 0)),   # diagonal L-R
            Edge(0, 1, (0, 0), (0, 0)),   # L-T
            Edge(1, 0, (0, 0), (1, 0)),   # T-R
            Edge(0, 1, (1, 0), (0, -1)),  # R-B
            Edge(1, 0, (0, -1), (0, 0)),  # B-L
        ],
    )


def make_bipyramid() -> CrystalFramework:
    o, x, y, z = (0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)
    return _fw(
        "bipyramid",
        [[1.0, 0.0, 0.0], [0.5, SQRT3 / 2, 0.0], [0.0, 0.0, 2 * HEIGHT]],
        [[0.0, 0.0, 0.0], [0.5, ALPHA, -HEIGHT]],
        [
            Edge(0, 0, o, x),
            Edge(0, 0, x, y),
            Edge(0, 0, o, y),
            Edge(0, 1, o, o),
            Edge(0, 1, x, o),
            Edge(0, 1, y, o),
            Edge(0, 1, o, z),
            Edge(0, 1, x, z),
            Edge(0, 1, y, z),
        ],
    )


def make_kagome3d() -> CrystalFramework:
    s = 1 / math.sqrt(2.0)
    r = np.array([[0, 0, 0], [0, s, s], [s, 0, s], [s, s, 0]], dtype=float)
    edges = []
    unit = np.eye(3, dtype=int)
    offset = [np.zeros(3, int)] + [-unit[i] for i in range(3)]
    for i in range(4):
        for j in range(i + 1, 4):
            edges.append(Edge(i, j, (0, 0, 0), (0, 0, 0)))  # up tetrahedron
    for i in range(4):
        for j in range(i + 1, 4):
            edges.append(Edge(i, j, tuple(offset[i]), tuple(offset[j])))  # down tetrahedron
    return _fw("kagome3d", 2 * r[1:], r, edges, ("r0", "r1", "r2", "r3"))


# --------------------------------------------------------------------------
# flexes


def _rot(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def grid_line_flex(fw: CrystalFramework, family: str, n: int) -> RuleField:
    """u_n: unit x-velocity on the row y = n; v_n: unit y-velocity on the column x = n."""
    axis = {"u": 1, "v": 0}[family]
    vel = np.eye(2)[1 - axis]
    return RuleField(lambda kp, k: vel if k[axis] == n else np.zeros(2), 2, f"{family}_{n}")


def hexagon_flex(fw: CrystalFramework, cell=(0, 0)) -> RuleField:
    """Unit-speed infinitesimal rotation of the hexagon centred at c0 + cell."""
    centre = np.array([SQRT3 / 2, 0.5]) + fw.lattice.translate(cell)

    def rule(kp, k):
        x = fw.joint_position(kp, k) - centre
        if abs(np.linalg.norm(x) - 1.0) < 1e-9:
            return np.array([-x[1], x[0]])
        return np.zeros(2)

    return RuleField(rule, 2, f"hexagon_{cell[0]}_{cell[1]}")


def hexagon_centre(fw: CrystalFramework, cell) -> np.ndarray:
    return np.array([SQRT3 / 2, 0.5]) + fw.lattice.translate(cell)


def hexagon_cells_touching(fw: CrystalFramework, kappa: int, k) -> list[tuple[int, int]]:
    """Cells of the three hexagons containing joint (kappa, k)."""
    x = fw.joint_position(kappa, k)
    base = np.rint(fw.lattice.cell_coordinates(x)).astype(int)
    out = []
    for d0 in range(-2, 3):
        for d1 in range(-2, 3):
            c = (int(base[0] + d0), int(base[1] + d1))
            if abs(np.linalg.norm(x - hexagon_centre(fw, c)) - 1.0) < 1e-9:
                out.append(c)
    return sorted(out)


KAGOME_U_A = np.array([math.cos(math.pi / 6), -math.sin(math.pi / 6)])
KAGOME_U_B = np.array([math.cos(math.pi / 6), math.sin(math.pi / 6)])
KAGOME_CENTROID = np.array([0.5, SQRT3 / 6])


def kagome_flex(fw: CrystalFramework, family: str, n: int) -> RuleField:
    """u_n, v_n, w_n: the horizontal line flexes and their rotations by 2pi/3, 4pi/3."""
    turns = {"u": 0, "v": 1, "w": 2}[family]
    R = _rot(2 * math.pi * turns / 3)
    Rinv = R.T

    def rule(kp, k):
        x = fw.joint_position(kp, k)
        pre = Rinv @ (x - KAGOME_CENTROID) + KAGOME_CENTROID
        lab = fw.locate(pre)
        if lab is None:
            raise FrameworkError("rotation did not map the kagome net to itself")
        pk, pc = lab
        if pc[1] != n or pk == 2:
            return np.zeros(2)
        return R @ (KAGOME_U_A if pk == 0 else KAGOME_U_B)

    return RuleField(rule, 2, f"{family}_{n}")


def octahedron_alternation(fw: CrystalFramework, sigma: int, n: int) -> RuleField:
    """a^sigma_n: alternating square rotations in the layer x_sigma = 2n, agreeing
    with the axial rotation r^sigma on the octahedron centred on the sigma-axis."""

    def rule(kp, k):
        if kp == sigma or k[sigma] != n:
            return np.zeros(3)
        x = fw.joint_position(kp, k)
        centre = 2 * np.rint(x / 2)  # octahedron centre on the even sublattice within the layer
        centre[sigma] = 2 * n
        # the joint lies between two squares; use the one whose centre is at even coordinates
        sign = (-1) ** int(round((centre.sum() - centre[sigma]) / 2))
        rel = x - centre
        return sign * np.cross(np.eye(3)[sigma], rel)

    return RuleField(rule, 3, f"a{'xyz'[sigma]}_{n}")


def octahedron_rotation(fw: CrystalFramework, sigma: int) -> RuleField:
    axis = np.eye(3)[sigma]
    return RuleField(lambda kp, k: np.cross(axis, fw.joint_position(kp, k)), 3, f"r{'xyz'[sigma]}")


def translation(d: int, sigma: int) -> RuleField:
    vel = np.eye(d)[sigma]
    return RuleField(lambda kp, k: vel, d, f"t{'xyz'[sigma]}")


def line_flex(fw: CrystalFramework, point, direction) -> RuleField:
    """Flex supported on a straight line of joints: at each joint the velocity is
    orthogonal to every bar leaving the line, with unit component along the line."""
    point = np.asarray(point, dtype=float)
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    d = fw.dimension
    per_joint: dict[int, np.ndarray] = {}
    for kp in range(fw.motif.n_joints):
        rows = []
        for lam, off in fw.neighbours(kp):
            v = fw.joint_position(lam, off) - fw.joint_position(kp, (0,) * d)
            v = v / np.linalg.norm(v)
            if np.linalg.norm(np.cross(v, direction) if d == 3 else v[0] * direction[1] - v[1] * direction[0]) > 1e-9:
                rows.append(v)
        A = np.array(rows).reshape(-1, d)
        _, s, vh = np.linalg.svd(A, full_matrices=True)
        rank = int(np.sum(s > 1e-9))
        if rank != d - 1:
            continue
        u = vh[-1]
        along = u @ direction
        if abs(along) > 1e-9:
            per_joint[kp] = u / along

    def on_line(x) -> bool:
        rel = x - point
        perp = rel - (rel @ direction) * direction
        return np.linalg.norm(perp) < 1e-8

    def rule(kp, k):
        x = fw.joint_position(kp, k)
        if kp in per_joint and on_line(x):
            return per_joint[kp]
        return np.zeros(d)

    return RuleField(rule, d, "line")


def kagome3d_line_flex(fw: CrystalFramework, pair: tuple[int, int], cell=(0, 0, 0)) -> RuleField:
    """Line flex along the bar direction r_j - r_i through joint (i, cell)."""
    i, j = pair
    direction = fw.motif.joints[j] - fw.motif.joints[i]
    f = line_flex(fw, fw.joint_position(i, cell), direction)
    f.name = f"line_{i}{j}_{'_'.join(map(str, cell))}"
    return f


@lru_cache(maxsize=None)
def kite_multifactor(apex_x: float = KITE_APEX_X) -> tuple[complex, complex]:
    """Multifactor of the alternation flex on the real slice omega_2 = -1.

    At real omega the transfer matrix is real, so each maximal minor changes
    sign at the rank drop; the root is bracketed from a coarse scan of the
    normalised smallest singular value and polished with Brent's method.
    """
    from itertools import combinations

    from scipy.optimize import brentq

    from .symbol import assemble_transfer_function, psi_at_inverse, singular_values

    M = assemble_transfer_function(make_kite(apex_x))

    def at(r):
        return psi_at_inverse(M, [r, -1.0]).matrix.real

    def ratio(r):
        s = singular_values(at(r))
        return s[-1] / s[0]

    grid = np.exp(np.linspace(-4, 4, 1601))
    i = int(np.argmin([ratio(r) for r in grid]))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    best = None
    for rows in combinations(range(M.shape[0]), M.shape[1]):
        f = lambda r: np.linalg.det(at(r)[list(rows)])
        if f(lo) * f(hi) < 0:
            root = brentq(f, lo, hi, xtol=1e-15, rtol=1e-15)
            if best is None or ratio(root) < ratio(best):
                best = root
    if best is None:
        raise FrameworkError("no alternation multifactor found for this kite")
    return complex(best), complex(-1.0)


def factor_kernel_vector(fw: CrystalFramework, omega) -> np.ndarray:
    from .symbol import assemble_transfer_function, psi_at_inverse

    A = psi_at_inverse(assemble_transfer_function(fw), omega).matrix
    _, _, vh = np.linalg.svd(A)
    b = vh[-1].conj()
    b = b / b[np.argmax(np.abs(b))]
    return b


def kite_flex(fw: CrystalFramework) -> FactorField:
    omega = kite_multifactor()
    return FactorField(factor_kernel_vector(fw, omega), omega)


def bipyramid_sheering_flex(fw: CrystalFramework, which: int = 0) -> FactorField:
    t = [(2 * math.pi / 3, 4 * math.pi / 3, math.pi), (4 * math.pi / 3, 2 * math.pi / 3, math.pi)][which]
    omega = np.exp(1j * np.array(t))
    return FactorField(factor_kernel_vector(fw, omega), omega)


# --------------------------------------------------------------------------
# catalogue


@dataclass(frozen=True)
class GalleryEntry:
    name: str
    constructor: Callable[[], CrystalFramework]
    flexes: dict[str, Callable[..., VelocityField]] = field(default_factory=dict)
    order: str = ""
    notes: str = ""

    def framework(self) -> CrystalFramework:
        return _cached(self.name)


def _grid_flexes():
    return {
        "u": lambda fw, n=0: grid_line_flex(fw, "u", int(n)),
        "v": lambda fw, n=0: grid_line_flex(fw, "v", int(n)),
    }


def _cell_index(index, d):
    if isinstance(index, (tuple, list)):
        return tuple(int(v) for v in index)
    return (int(index),) + (0,) * (d - 1)


ENTRIES: dict[str, GalleryEntry] = {
    "grid": GalleryEntry(
        "grid", make_grid2d, _grid_flexes(),
        order="breadth-first from joint (0, (0, 0))",
        notes="S_grid = {u_n, v_n}: crystal basis, one element per support line.",
    ),
    "hex": GalleryEntry(
        "hex", make_hex,
        {"hexagon": lambda fw, n=(0, 0): hexagon_flex(fw, _cell_index(n, 2))},
        order="breadth-first from joint a at cell (0, 0); the hexagon of cell (-1, 0) is omitted",
        notes="Hexagon rotations span the flex space; their sum vanishes, so one cell is omitted.",
    ),
    "kagome2d": GalleryEntry(
        "kagome2d", make_kagome2d,
        {f: (lambda fw, n=0, f=f: kagome_flex(fw, f, int(n))) for f in "uvw"},
        order="breadth-first from joint a at cell (0, 0)",
        notes="B_kag = {u_n, v_n, w_n}: crystal basis.",
    ),
    "octahedron": GalleryEntry(
        "octahedron", make_octahedron,
        {
            **{f"a{ax}": (lambda fw, n=0, s=s: octahedron_alternation(fw, s, int(n))) for s, ax in enumerate("xyz")},
            **{f"r{ax}": (lambda fw, n=0, s=s: octahedron_rotation(fw, s)) for s, ax in enumerate("xyz")},
            **{f"t{ax}": (lambda fw, n=0, s=s: translation(3, s)) for s, ax in enumerate("xyz")},
        },
        order="global least squares (rigid motions are not locally separable)",
        notes="Essential basis {r^x, r^y, r^z, x, y, z, a^sigma_n}.",
    ),
    "kite": GalleryEntry(
        "kite", make_kite,
        {"a_kite": lambda fw, n=0: kite_flex(fw)},
        notes="Dart apex at x = -0.3; the alternation multifactor is computed numerically.",
    ),
    "bipyramid": GalleryEntry(
        "bipyramid", make_bipyramid,
        {"sheer": lambda fw, n=0: bipyramid_sheering_flex(fw, int(n))},
        notes="Edge table e1..e9 with p(e_i), k, l as catalogued.",
    ),
    "kagome3d": GalleryEntry(
        "kagome3d", make_kagome3d,
        {"line": lambda fw, n=(0, 1): kagome3d_line_flex(fw, (int(n[0]), int(n[1])),
                                                         tuple(n[2:5]) if len(n) >= 5 else (0, 0, 0))},
        notes="Pyrochlore net; line flexes along the six bar directions.",
    ),
    "triangular": GalleryEntry("triangular", make_triangular, {}, notes="Infinitesimally rigid."),
}


@lru_cache(maxsize=None)
def _cached(name: str) -> CrystalFramework:
    return ENTRIES[name].constructor()


def names() -> list[str]:
    return sorted(ENTRIES)


def get(name: str) -> CrystalFramework:
    if name not in ENTRIES:
        raise KeyError(f"unknown gallery framework {name!r}; choose from {', '.join(names())}")
    return _cached(name)


def named_flex(entry: GalleryEntry | str, name: str, index=0) -> VelocityField:
    entry = ENTRIES[entry] if isinstance(entry, str) else entry
    fw = entry.framework()
    if name in ("rigid",):
        return rigid_motion_flexes(fw)[int(index)]
    if name not in entry.flexes:
        raise KeyError(f"{entry.name} has no flex {name!r}; choose from {', '.join(sorted(entry.flexes))}")
    return entry.flexes[name](fw, index)


# --------------------------------------------------------------------------
# spanning sets restricted to a patch

SPANNING_SETS = ("grid", "hex", "kagome2d", "octahedron")


def spanning_set(name: str, patch) -> tuple[list[tuple[str, VelocityField]], tuple[str, ...], str]:
    """Documented spanning set elements that touch ``patch``.

    Returns (named elements in enumeration order, names omitted by convention,
    reconstruction method)."""
    fw = get(name)
    lo = min(a for a, _ in patch.box)
    hi = max(b for _, b in patch.box)
    reach = range(lo - 2 * (hi - lo) - 4, hi + 2 * (hi - lo) + 5)
    if name == "grid":
        els = [(f"{f}_{n}", grid_line_flex(fw, f, n)) for n in reach for f in "uv"]
        method, omit = "greedy", ()
    elif name == "kagome2d":
        els = [(f"{f}_{n}", kagome_flex(fw, f, n)) for n in reach for f in "uvw"]
        method, omit = "greedy", ()
    elif name == "hex":
        cells = sorted({c for lab in patch.labels for c in hexagon_cells_touching(fw, *lab)})
        els = [(f"h_{c[0]}_{c[1]}", hexagon_flex(fw, c)) for c in cells]
        method, omit = "greedy", ("h_-1_0",) if (-1, 0) in cells else ()
    elif name == "octahedron":
        els = [(f"r{a}", octahedron_rotation(fw, s)) for s, a in enumerate("xyz")]
        els += [(f"t{a}", translation(3, s)) for s, a in enumerate("xyz")]
        els += [(f"a{a}_{n}", octahedron_alternation(fw, s, n))
                for s, a in enumerate("xyz") for n in range(patch.box[s][0], patch.box[s][1] + 1)]
        method, omit = "lstsq", ()
    else:
        raise KeyError(f"no documented spanning set for {name!r}; choose from {', '.join(SPANNING_SETS)}")
    els = [(n, f) for n, f in els if np.any(np.abs(f.on_patch(patch)) > 1e-12)]
    return els, omit, method
