"""Acceptance criteria 1 to 14, one test each.

Every test prints a one-line verdict; the terminal summary repeats them as
``criterion N: PASS/FAIL``.
"""

import itertools
import math
import time

import numpy as np
import pytest

from rumspec import gallery
from rumspec.basis import (
    RestrictionTower,
    bounded_membership_bound,
    inverse_limit_basis,
    reconstruct_coefficients,
)
from rumspec.flex import (
    build_unbounded_flex,
    check_factor_flex,
    factor_periodic_flex,
    growth_ratios,
    phase_sum,
    sup_norm_estimate,
)
from rumspec.framework import cube, generate_patch, supercell, verify_flex
from rumspec.laurent import LaurentPoly
from rumspec.spectrum import (
    SliceSpec,
    TorusGrid,
    detect_linear_structure,
    line_samples,
    sample_ratios,
    scan_geometric_slice,
    scan_rum_spectrum,
    sweep_moduli,
)
from rumspec.symbol import (
    assemble_transfer_function,
    kernel_basis,
    psi_at_inverse,
    resolve_cols,
    resolve_rows,
    symbolic_determinant,
)

ALPHA = math.sqrt(3) / 6
H = math.sqrt(2 / 3)
S3 = math.sqrt(3) / 2
TWO_PI = 2 * math.pi


def verdict(n, ok, detail=""):
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    return ok


def poly(terms):
    """Laurent polynomial in z1, z2, z3 from {exponent: coefficient}."""
    return LaurentPoly({tuple(k): c for k, c in terms.items()}, 3)


def z(i, c=1.0):
    e = [0, 0, 0]
    e[i - 1] = 1
    return {tuple(e): c}


def lin(*parts):
    out = {}
    for p in parts:
        for k, c in p.items():
            out[k] = out.get(k, 0.0) + c
    return poly(out)


ONE = (0, 0, 0)


def displayed_bipyramid():
    """The 9 x 6 matrix Psi(z^-1) exactly as displayed in the source."""
    c = lambda v: {ONE: v}
    zero = poly({})
    return [
        [lin(c(-1.0), z(1)), zero, zero, zero, zero, zero],
        [lin(z(1, 0.5), z(2, -0.5)), lin(z(1, -S3), z(2, S3)), zero, zero, zero, zero],
        [lin(c(0.5), z(2, -0.5)), lin(c(-S3), z(2, S3)), zero, zero, zero, zero],
        [poly(c(-0.5)), poly(c(-ALPHA)), poly(c(H)), poly(c(0.5)), poly(c(ALPHA)), poly(c(-H))],
        [poly(z(1, 0.5)), poly(z(1, -ALPHA)), poly(z(1, H)), poly(c(-0.5)), poly(c(ALPHA)), poly(c(-H))],
        [zero, poly(z(2, 2 * ALPHA)), poly(z(2, H)), zero, poly(c(-2 * ALPHA)), poly(c(-H))],
        [poly(c(-0.5)), poly(c(-ALPHA)), poly(c(-H)), poly(z(3, 0.5)), poly(z(3, ALPHA)), poly(z(3, H))],
        [poly(z(1, 0.5)), poly(z(1, -ALPHA)), poly(z(1, -H)), poly(z(3, -0.5)), poly(z(3, ALPHA)), poly(z(3, H))],
        [zero, poly(z(2, 2 * ALPHA)), poly(z(2, -H)), zero, poly(z(3, -2 * ALPHA)), poly(z(3, H))],
    ]


def test_criterion_01_bipyramid_transfer_matrix():
    t0 = time.perf_counter()
    M = assemble_transfer_function(gallery.get("bipyramid")).substitute_inverse()
    want = displayed_bipyramid()
    elapsed = time.perf_counter() - t0
    bad = [(f"e{i + 1}", M.col_labels[j]) for i in range(9) for j in range(6)
           if not M[i, j].allclose(want[i][j], atol=1e-15)]
    ok = M.shape == (9, 6) and not bad and elapsed < 1.0
    assert verdict(1, ok, f"mismatched entries {bad}, {elapsed:.3f} s"), bad


def test_criterion_02_sheering_determinant(rng):
    M = assemble_transfer_function(gallery.get("bipyramid")).substitute_inverse()
    rows = resolve_rows(M, ["e4", "e5", "e6"])
    cols = resolve_cols(M, ["v1z", "v2x", "v2y"])
    det = symbolic_determinant(M, rows, cols)
    want = poly({ONE: ALPHA * H, (1, 0, 0): ALPHA * H, (0, 1, 0): ALPHA * H})
    Z = rng.normal(size=(100, 3)) + 1j * rng.normal(size=(100, 3))
    sub = M.select(rows, cols)
    numeric = np.array([np.linalg.det(sub(p)) for p in Z])
    exact = want.evaluate_many(Z)
    rel = float(np.max(np.abs(numeric - exact) / np.abs(exact)))
    ok = det.allclose(want, atol=1e-15) and rel <= 1e-10
    assert verdict(2, ok, f"{det.to_text()}, max relative error {rel:.2e}")


def test_criterion_03_bipyramid_rum_points(symbols):
    t0 = time.perf_counter()
    rep = scan_rum_spectrum(symbols["bipyramid"], TorusGrid(96, 3), tol=1e-8)
    elapsed = time.perf_counter() - t0
    pts = {tuple(np.round(p, 9)) for p in rep.flagged_points}
    want = {(0.0, 0.0, 0.0), (TWO_PI / 3, 2 * TWO_PI / 3, math.pi), (2 * TWO_PI / 3, TWO_PI / 3, math.pi)}
    want = {tuple(np.round(p, 9)) for p in want}
    sig = rep.sigma_min[rep.flagged]
    ok = pts == want and np.all(sig < 1e-8) and elapsed < 60
    assert verdict(3, ok, f"{len(pts)} flagged, max sigma_min {np.max(sig):.1e}, {elapsed:.1f} s"), pts


def test_criterion_04_grid_spectrum(symbols):
    M = symbols["grid"]
    rep = scan_rum_spectrum(M, TorusGrid(64, 2), tol=1e-8)
    det = symbolic_determinant(M)
    exact = np.abs(det.evaluate_many(np.exp(1j * rep.thetas)))
    on_axes = np.any(rep.grid_indices() == 0, axis=1)
    ok = (np.array_equal(rep.flagged, on_axes) and np.all(exact[on_axes] < 1e-12)
          and np.all(exact[~on_axes] > 1e-4))
    assert verdict(4, ok, f"{int(rep.flagged.sum())} flagged, {int(on_axes.sum())} on the axes")


def test_criterion_05_geometric_slice(symbols):
    rep = scan_geometric_slice(symbols["bipyramid"], SliceSpec((0.5, 1.5, 1.0)), TorusGrid(48, 3), tol=1e-8)
    target = np.array([0.0, math.pi, math.pi])
    j = int(np.argmin(np.linalg.norm(rep.thetas - target, axis=1)))
    ok = np.allclose(rep.thetas[j], target) and bool(rep.flagged[j]) and rep.sigma_min[j] < 1e-8
    omega = np.array([0.5, 1.5, 1.0]) * np.exp(1j * rep.thetas[j])
    assert np.allclose(omega, [0.5, -1.5, -1.0])
    assert verdict(5, ok, f"sigma_min {rep.sigma_min[j]:.1e} at omega = {np.round(omega.real, 12)}")


def test_criterion_06_flex_residuals(fws):
    cases = []
    hexp = generate_patch(fws["hex"], cube(2, 4))
    cases += [(hexp, gallery.hexagon_flex(fws["hex"], c)) for c in itertools.product(range(-4, 5), repeat=2)]
    kp = generate_patch(fws["kagome2d"], cube(2, 4))
    cases += [(kp, gallery.kagome_flex(fws["kagome2d"], f, n)) for f in "uvw" for n in range(-8, 9)]
    gp = generate_patch(fws["grid"], cube(2, 4))
    cases += [(gp, gallery.grid_line_flex(fws["grid"], f, n)) for f in "uv" for n in range(-4, 5)]
    op = generate_patch(fws["octahedron"], cube(3, 4))
    cases += [(op, gallery.octahedron_alternation(fws["octahedron"], s, n)) for s in range(3) for n in range(-4, 5)]
    cases += [(op, gallery.octahedron_rotation(fws["octahedron"], s)) for s in range(3)]
    worst = max(verify_flex(p, u, tol=1e-12).max_residual for p, u in cases)
    assert verdict(6, worst <= 1e-12, f"{len(cases)} flexes, worst residual {worst:.1e}")


def _on_spectrum(rng, fws, symbols):
    """Random (framework, omega, b) with Psi(omega^-1) b = 0."""
    kind = rng.integers(4)
    w = rng.uniform(0.5, 2.0) * np.exp(1j * rng.uniform(0, TWO_PI))
    if kind == 0:
        name, omega = "grid", np.array([1.0, w])
    elif kind == 1:
        name, omega = "bipyramid", np.array([w, -1 - w, -1.0])
    elif kind == 2:
        name, omega = "hex", np.array([w, rng.uniform(0.5, 2.0) * np.exp(1j * rng.uniform(0, TWO_PI))])
    else:
        name, omega = "kagome2d", np.array([1.0, w])
    ker = kernel_basis(psi_at_inverse(symbols[name], omega))
    c = rng.normal(size=len(ker)) + 1j * rng.normal(size=len(ker))
    return name, omega, sum(ci * v for ci, v in zip(c, ker))


def test_criterion_07_factor_flex_equivalence(rng, fws, symbols):
    on_ok, off_ok, worst_on, least_off = 0, 0, 0.0, np.inf
    patches = {n: generate_patch(fws[n], cube(fws[n].dimension, 2)) for n in ("grid", "bipyramid", "hex", "kagome2d")}
    for _ in range(50):
        name, omega, b = _on_spectrum(rng, fws, symbols)
        fw, p = fws[name], patches[name]
        chk = check_factor_flex(fw, omega, b, matrix=symbols[name])
        u = factor_periodic_flex(fw, omega, b)
        vals = u.on_patch(p)
        scale = np.max(np.linalg.norm(vals, axis=1)) * np.max(np.linalg.norm(p.bar_vectors, axis=1))
        rel = verify_flex(p, vals).max_residual / scale
        worst_on = max(worst_on, rel)
        on_ok += bool(chk) and rel <= 1e-9
    for _ in range(50):
        name = ("grid", "bipyramid")[rng.integers(2)]
        fw, p = fws[name], patches[name]
        d = fw.dimension
        omega = rng.uniform(0.5, 2.0, size=d) * np.exp(1j * rng.uniform(0.3, TWO_PI - 0.3, size=d))
        b = rng.normal(size=d * fw.motif.n_joints) + 1j * rng.normal(size=d * fw.motif.n_joints)
        chk = check_factor_flex(fw, omega, b, matrix=symbols[name])
        res = verify_flex(p, factor_periodic_flex(fw, omega, b).on_patch(p)).max_residual
        least_off = min(least_off, res / np.linalg.norm(b))
        off_ok += (not chk) and res > 1e-3 * np.linalg.norm(b)
    ok = on_ok == 50 and off_ok == 50
    assert verdict(7, ok, f"on {on_ok}/50 (worst {worst_on:.1e}), off {off_ok}/50 (least {least_off:.2e})")


def test_criterion_08_kagome_round_trip(fws):
    fw = fws["kagome2d"]
    p = generate_patch(fw, cube(2, 5))
    els, _, _ = gallery.spanning_set("kagome2d", p)
    S = np.stack([f.on_patch(p) for _, f in els])
    rng = np.random.default_rng(8)
    worst, unique = 0.0, True
    for _ in range(10):
        c = np.zeros(len(els), dtype=complex)
        pick = rng.choice(len(els), size=30, replace=False)
        c[pick] = rng.normal(size=30) + 1j * rng.normal(size=30)
        rec = reconstruct_coefficients(np.tensordot(c, S, axes=1), els, p)
        worst = max(worst, float(np.max(np.abs(rec.coefficients - c))))
        unique &= rec.unique
    ok = worst <= 1e-9 and unique
    assert verdict(8, ok, f"{len(els)} elements, worst coefficient error {worst:.1e}, unique {unique}")


def test_criterion_09_honeycomb_redundancy(fws):
    fw = fws["hex"]
    p = generate_patch(fw, cube(2, 5))
    els, omit, _ = gallery.spanning_set("hex", p)
    total = sum(f.on_patch(p) for _, f in els)
    inner = p.interior(1)
    interior_res = float(np.max(np.linalg.norm(total[inner], axis=1)))
    rng = np.random.default_rng(9)
    kept = [(n, f) for n, f in els if n not in omit]
    c = rng.normal(size=len(kept))
    u = sum(ci * f.on_patch(p) for ci, (_, f) in zip(c, kept))
    rec = reconstruct_coefficients(u, els, p, omit=omit)
    got = np.array([rec.as_dict()[n] for n, _ in kept])
    ok = interior_res <= 1e-12 and rec.residual <= 1e-9 and rec.unique and np.allclose(got, c, atol=1e-9)
    assert verdict(9, ok, f"interior residual {interior_res:.1e}, reconstruction residual {rec.residual:.1e}")


def test_criterion_10_octahedron_linear_structure():
    # the doubled periodic structure; the primitive lines (t, pi, pi) fold onto (2t, 0, 0)
    fw = supercell(gallery.get("octahedron"), (2, 2, 2))
    M = assemble_transfer_function(fw)
    axes = [np.eye(3)[i] for i in range(3)]
    along = np.vstack([line_samples(np.zeros(3), a, 96) for a in axes])
    ratios = sample_ratios(M, along)
    rep = scan_rum_spectrum(M, TorusGrid(16, 3), tol=1e-8)
    lines = detect_linear_structure(rep)
    found = sorted((tuple(float(x) for x in np.round(ln.point, 12)), ln.direction) for ln in lines)
    want = sorted(((0.0, 0.0, 0.0), d) for d in [(1, 0, 0), (0, 1, 0), (0, 0, 1)])
    ok = bool(np.all(ratios < 1e-8)) and found == want
    assert verdict(10, ok, f"max ratio on the axes {np.max(ratios):.1e}, lines {found}"), found


def test_criterion_11_kite_unbounded_flex(fws, symbols):
    fw = fws["kite"]
    minima, res = sweep_moduli(symbols["kite"], 0, np.linspace(1.2, 8.0, 18), grid=TorusGrid(32, 2))
    omega = res.point
    real_root = res.converged and abs(omega[0].imag) < 1e-9 and omega[0].real > 1 and abs(abs(omega[1]) - 1) < 1e-9
    b = gallery.factor_kernel_vector(fw, omega)
    u = factor_periodic_flex(fw, omega, b)
    patches = [generate_patch(fw, ((0, n), (-1, 1))) for n in range(1, 9)]
    ratios = growth_ratios(sup_norm_estimate(u, patches))
    spread = float(np.max(np.abs(ratios / abs(omega[0]) - 1)))
    flex_ok = verify_flex(patches[-1], u, tol=1e-9 * np.max(np.abs(u.on_patch(patches[-1])))).passed
    ok = real_root and spread <= 0.01 and flex_ok
    assert verdict(11, ok, f"omega = ({omega[0].real:.12f}, {omega[1].real:.1f}), growth ratios within {spread:.1e}")


def test_criterion_12_inverse_limit_basis(fws):
    details, ok = [], True
    for name in ("grid", "kagome2d"):
        tb = inverse_limit_basis(RestrictionTower.cubes(fws[name], [1, 2, 3]))
        lower = float(np.nanmax(tb.projection_norms, initial=0.0))
        cumulative = list(np.cumsum(tb.counts()))
        ok &= lower <= 1e-10 and cumulative == tb.dims
        details.append(f"{name}: dims {tb.dims}, counts {tb.counts()}, max |pi_i(B_j)| {lower:.1e}")
    assert verdict(12, ok, "; ".join(details))


def _witness_chain(elements, patch):
    """a_j on h_j with h_k(a_j) = 0 for every later k, nearest the origin."""
    vals = [np.linalg.norm(f.on_patch(patch), axis=1) for f in elements]
    dist = np.linalg.norm(patch.positions, axis=1)
    out = []
    for j in range(len(elements)):
        mask = vals[j] > 1e-12
        for k in range(j + 1, len(elements)):
            mask &= vals[k] <= 1e-12
        idx = np.flatnonzero(mask)
        out.append(patch.labels[idx[np.argmin(dist[idx])]])
    return out


def test_criterion_13_unbounded_construction(fws):
    fw = fws["kagome2d"]
    p = generate_patch(fw, cube(2, 12))
    elements = [gallery.kagome_flex(fw, f, n) for n in range(7) for f in "uvw"][:20]
    witnesses = _witness_chain(elements, p)
    r = build_unbounded_flex(elements, witnesses)
    norms = np.array([np.linalg.norm(r.field(*a)) for a in witnesses])
    ok = r.ok and bool(np.all(norms >= np.arange(1, 21) - 1e-9))
    assert verdict(13, ok, f"min ||g(a_n)|| - n = {np.min(norms - np.arange(1, 21)):.3f}")


def test_criterion_14_bounded_membership(fws):
    fw = fws["kagome2d"]
    rng = np.random.default_rng(14)
    gens = {"u": (0, 1), "v": (1, 0), "w": (1, 0)}
    worst, ok = 0.0, True
    for radius in (2, 3, 4, 5):
        p = generate_patch(fw, cube(2, radius))
        phases = np.exp(1j * rng.uniform(0, TWO_PI, size=3))
        coeff = np.exp(1j * rng.uniform(0, TWO_PI, size=3))
        fields = [phase_sum(gallery.kagome_flex(fw, f, 0), [gens[f]], [ph], p) for f, ph in zip("uvw", phases)]
        total = sum(c * f.on_patch(p) for c, f in zip(coeff, fields))
        realized = float(np.max(np.linalg.norm(total, axis=1)))
        ok &= verify_flex(generate_patch(fw, cube(2, radius - 1)), fields[0]).max_residual <= 1e-12
        els, _, _ = gallery.spanning_set("kagome2d", p)
        alpha = np.exp(1j * rng.uniform(0, TWO_PI, size=len(els)))
        rep = bounded_membership_bound(alpha, [f for _, f in els], p, N=3, M=1.0)
        ok &= rep.bound == pytest.approx(3.0) and rep.realized <= rep.bound and realized <= 3.0
        worst = max(worst, realized, rep.realized)
    assert verdict(14, ok, f"largest realized sup-norm {worst:.3f} <= 3")
