import math

import numpy as np
import pytest

from rumspec import gallery
from rumspec.framework import FactorField, cube, generate_patch, relative_residual
from rumspec.laurent import LaurentPoly
from rumspec.spectrum import TorusGrid, scan_rum_spectrum
from rumspec.symbol import (
    evaluate,
    kernel_basis,
    min_singular_value,
    psi_at_inverse,
    resolve_cols,
    restrict_to_torus,
    singular_values,
    symbolic_determinant,
)

ALPHA = math.sqrt(3) / 6
H = math.sqrt(2 / 3)
SHAPES = {
    "bipyramid": (9, 6), "grid": (2, 2), "hex": (3, 4), "kagome2d": (6, 6),
    "kagome3d": (12, 12), "kite": (5, 4), "octahedron": (12, 9), "triangular": (3, 2),
}


@pytest.mark.parametrize("name", sorted(SHAPES))
def test_shapes(symbols, name):
    assert symbols[name].shape == SHAPES[name]


def test_bipyramid_first_row(symbols):
    M = symbols["bipyramid"].substitute_inverse()
    # -(1 - z1) in v1x, zeros elsewhere
    assert M[0, 0].allclose(LaurentPoly({(0, 0, 0): -1.0, (1, 0, 0): 1.0}, 3))
    assert all(M[0, j].is_zero() for j in range(1, 6))


def test_bipyramid_e3_row_follows_edge_table(symbols):
    # p(e3) = (-1/2, -sqrt3/2, 0), k = 0, l = (0,1,0): after z -> 1/z the row is p(e3)(1 - z2)
    M = symbols["bipyramid"].substitute_inverse()
    assert M[2, 0].allclose(LaurentPoly({(0, 0, 0): -0.5, (0, 1, 0): 0.5}, 3))
    assert M[2, 1].allclose(LaurentPoly({(0, 0, 0): -math.sqrt(3) / 2, (0, 1, 0): math.sqrt(3) / 2}, 3), atol=1e-15)


def test_constant_rows_for_untranslated_edges(fws, symbols):
    fw = fws["bipyramid"]
    row = symbols["bipyramid"].entries[3]
    pe = fw.bar_vector(fw.motif.edges[3])
    for j in range(3):
        assert row[j].allclose(LaurentPoly({(0, 0, 0): pe[j]}, 3))
        assert row[3 + j].allclose(LaurentPoly({(0, 0, 0): -pe[j]}, 3))


def test_grid_matrix(symbols):
    M = symbols["grid"]
    assert M[0, 0].allclose(LaurentPoly({(0, 0): -1.0, (-1, 0): 1.0}, 2))
    assert M[1, 1].allclose(LaurentPoly({(0, 0): -1.0, (0, -1): 1.0}, 2))
    assert M[0, 1].is_zero() and M[1, 0].is_zero()
    E = evaluate(M, (-1, 1)).matrix
    assert E[0, 0] == -2 and E[1, 1] == 0


@pytest.mark.parametrize("name", gallery.names())
def test_row_support(fws, symbols, name):
    fw, M = fws[name], symbols[name]
    d = fw.dimension
    for e, row in zip(fw.motif.edges, M.entries):
        allowed = set(range(d * e.a, d * e.a + d)) | set(range(d * e.b, d * e.b + d))
        assert all(p.is_zero() for j, p in enumerate(row) if j not in allowed)


def test_evaluate_at_ones_is_coefficient_sum(symbols):
    M = symbols["kagome2d"]
    sums = np.array([[sum(p.terms.values()) for p in row] for row in M.entries])
    np.testing.assert_allclose(evaluate(M, (1, 1)).matrix, sums)
    np.testing.assert_allclose(restrict_to_torus(M, (0, 0)).matrix, sums)


def test_bipyramid_polar_rows_vanish_at_one(symbols):
    M = symbols["bipyramid"].substitute_inverse()
    E = evaluate(M, (1, 1, 1)).matrix
    assert np.all(E[:3] == 0)


def test_torus_restriction_is_evaluation(symbols):
    M = symbols["grid"]
    np.testing.assert_allclose(restrict_to_torus(M, (math.pi, 0)).matrix, evaluate(M, (-1, 1)).matrix, atol=1e-15)


def test_zero_component_rejected(symbols):
    with pytest.raises(ValueError):
        evaluate(symbols["grid"], (0, 1))


def test_sheering_submatrix_rank_deficient(symbols):
    M = symbols["bipyramid"]
    theta = np.array([2 * math.pi / 3, 4 * math.pi / 3, math.pi])
    E = psi_at_inverse(M, np.exp(1j * theta)).matrix
    cols = resolve_cols(M, ["v1z", "v2x", "v2y"])
    sub = E[3:6][:, cols]
    s = np.linalg.svd(sub, compute_uv=False)
    assert s[-1] / s[0] < 1e-12


def test_sheering_determinant(symbols):
    det = symbolic_determinant(symbols["bipyramid"].substitute_inverse(), ["e4", "e5", "e6"], ["v1z", "v2x", "v2y"])
    expect = LaurentPoly({(0, 0, 0): 1.0, (1, 0, 0): 1.0, (0, 1, 0): 1.0}, 3) * (ALPHA * H)
    assert det.allclose(expect, atol=1e-14)


def test_grid_determinant(symbols):
    det = symbolic_determinant(symbols["grid"])
    z1 = LaurentPoly({(0, 0): 1.0, (-1, 0): -1.0}, 2)
    z2 = LaurentPoly({(0, 0): 1.0, (0, -1): -1.0}, 2)
    assert det.allclose(z1 * z2)


def test_non_square_selection_rejected(symbols):
    with pytest.raises(ValueError):
        symbolic_determinant(symbols["grid"], ["e1"], None)


@pytest.mark.parametrize("name", ["grid", "kagome2d", "hex", "kite", "bipyramid"])
def test_determinant_agrees_with_numeric(symbols, rng, name):
    M = symbols[name]
    m, n = M.shape
    k = min(m, n)
    rows, cols = list(range(k)), list(range(k))
    det = symbolic_determinant(M, rows, cols)
    for _ in range(100):
        z = np.exp(rng.normal(scale=0.3, size=M.nvars) + 1j * rng.uniform(0, 2 * np.pi, M.nvars))
        num = np.linalg.det(M(z)[np.ix_(rows, cols)])
        scale = np.prod(np.linalg.norm(M(z)[np.ix_(rows, cols)], axis=1))
        assert abs(det(z) - num) <= 1e-10 * max(scale, 1e-300)


def test_singular_value_helpers(rng):
    assert min_singular_value(np.zeros((3, 3))) == 0
    assert len(kernel_basis(np.zeros((3, 3)))) == 3
    A = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    assert min_singular_value(A) > 0 and kernel_basis(A) == []
    assert singular_values(np.ones((1, 3))).tolist()[1:] == [0.0, 0.0]


def test_bipyramid_kernel_on_sheering_coordinates(symbols):
    M = symbols["bipyramid"]
    omega = np.exp(1j * np.array([2 * math.pi / 3, 4 * math.pi / 3, math.pi]))
    E = psi_at_inverse(M, omega)
    assert min_singular_value(E) < 1e-9
    ker = kernel_basis(E)
    cols = resolve_cols(M, ["v1z", "v2x", "v2y"])
    other = [j for j in range(6) if j not in cols]
    assert any(np.linalg.norm(v[other]) < 1e-9 for v in ker)
    for v in ker:
        assert np.linalg.norm(E.matrix @ v) <= 1e-9 * np.linalg.norm(E.matrix, 2)


@pytest.mark.parametrize("name", gallery.names())
def test_kernel_vectors_are_flexes(fws, symbols, rng, name):
    """Factor flex equivalence oracle: kernel vectors of Psi(omega^-1) give patch flexes."""
    fw, M = fws[name], symbols[name]
    d = fw.dimension
    rep = scan_rum_spectrum(M, TorusGrid(12 if d == 3 else 24, d))
    pts = rep.flagged_points
    pts = pts[rng.choice(len(pts), min(6, len(pts)), replace=False)]
    p = generate_patch(fw, cube(d, 3 if d == 2 else 2))
    for th in pts:
        omega = np.exp(1j * th)
        for b in kernel_basis(psi_at_inverse(M, omega), 1e-8):
            assert relative_residual(p, FactorField(b, omega)) <= 1e-9
    # random b at a point off the spectrum fails
    for _ in range(5):
        omega = np.exp(rng.normal(scale=0.2, size=d) + 1j * rng.uniform(0, 2 * np.pi, d))
        E = psi_at_inverse(M, omega)
        s = singular_values(E)
        if s[-1] / s[0] < 1e-3:
            continue
        b = rng.normal(size=M.shape[1]) + 1j * rng.normal(size=M.shape[1])
        assert relative_residual(p, FactorField(b, omega)) > 1e-6
