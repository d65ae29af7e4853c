"""Multivariate Laurent polynomials with complex coefficients and matrices of them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

Exponent = tuple[int, ...]

# coefficients below this (relative to the largest one) are treated as rounding noise
PRUNE_TOL = 1e-13


class LaurentPoly:
    __slots__ = ("nvars", "terms")

    def __init__(self, terms: Mapping[Exponent, complex] | None = None, nvars: int | None = None):
        terms = dict(terms or {})
        if nvars is None:
            if not terms:
                raise ValueError("nvars required for the zero polynomial")
            nvars = len(next(iter(terms)))
        self.nvars = nvars
        clean = {}
        for e, c in terms.items():
            e = tuple(int(v) for v in e)
            if len(e) != nvars:
                raise ValueError(f"exponent {e} has wrong length")
            c = complex(c)
            if c != 0:
                clean[e] = clean.get(e, 0) + c
        self.terms = {e: c for e, c in clean.items() if c != 0}

    # constructors
    @classmethod
    def constant(cls, c, nvars: int) -> "LaurentPoly":
        return cls({(0,) * nvars: c}, nvars)

    @classmethod
    def monomial(cls, exponent, c=1.0) -> "LaurentPoly":
        return cls({tuple(exponent): c}, len(exponent))

    @classmethod
    def variable(cls, i: int, nvars: int) -> "LaurentPoly":
        e = [0] * nvars
        e[i] = 1
        return cls.monomial(e)

    # arithmetic
    def is_zero(self) -> bool:
        return not self.terms

    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0) + c
        return LaurentPoly(out, self.nvars)

    __radd__ = __add__

    def __neg__(self):
        return LaurentPoly({e: -c for e, c in self.terms.items()}, self.nvars)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        other = self._coerce(other)
        out: dict[Exponent, complex] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0) + c1 * c2
        return LaurentPoly(out, self.nvars)

    __rmul__ = __mul__

    def _coerce(self, other) -> "LaurentPoly":
        if isinstance(other, LaurentPoly):
            if other.nvars != self.nvars:
                raise ValueError("variable count mismatch")
            return other
        return LaurentPoly.constant(other, self.nvars)

    def prune(self, tol: float = PRUNE_TOL) -> "LaurentPoly":
        if not self.terms:
            return self
        scale = max(abs(c) for c in self.terms.values())
        return LaurentPoly({e: c for e, c in self.terms.items() if abs(c) > tol * scale}, self.nvars)

    def substitute_inverse(self) -> "LaurentPoly":
        """p(z) -> p(1/z)."""
        return LaurentPoly({tuple(-v for v in e): c for e, c in self.terms.items()}, self.nvars)

    def min_exponent(self) -> Exponent:
        if not self.terms:
            return (0,) * self.nvars
        return tuple(int(v) for v in np.min(np.array(list(self.terms)), axis=0))

    def shift(self, exponent) -> "LaurentPoly":
        """Multiply by the monomial z^exponent."""
        return LaurentPoly({tuple(a + b for a, b in zip(e, exponent)): c for e, c in self.terms.items()}, self.nvars)

    def leading(self) -> tuple[Exponent, complex]:
        e = max(self.terms)  # lexicographic
        return e, self.terms[e]

    def divide_exact(self, divisor: "LaurentPoly", tol: float = 1e-9) -> "LaurentPoly":
        """Quotient of an exact division (lexicographic long division); raises if
        the remainder is not negligible."""
        if divisor.is_zero():
            raise ZeroDivisionError("division by zero polynomial")
        rem = self.prune()
        scale = max((abs(c) for c in rem.terms.values()), default=0.0)
        lead_e, lead_c = divisor.leading()
        polynomial = min(self.min_exponent()) >= 0 and min(divisor.min_exponent()) >= 0
        q: dict[Exponent, complex] = {}
        for _ in range(100000):
            if rem.is_zero():
                break
            e, c = rem.leading()
            if abs(c) <= tol * scale:
                # rounding noise
                rem = LaurentPoly({k: v for k, v in rem.terms.items() if k != e}, self.nvars)
                continue
            qe = tuple(a - b for a, b in zip(e, lead_e))
            if polynomial and min(qe) < 0:
                raise ArithmeticError(f"inexact division, stray term {c:.3e} at {e}")
            qc = c / lead_c
            q[qe] = q.get(qe, 0) + qc
            rem = rem - divisor * LaurentPoly({qe: qc}, self.nvars)
            rem = LaurentPoly({k: v for k, v in rem.terms.items() if k != e}, self.nvars)
        else:
            raise ArithmeticError("division did not terminate")
        return LaurentPoly(q, self.nvars).prune()

    def __call__(self, z) -> complex:
        z = np.asarray(z, dtype=complex)
        return complex(sum(c * np.prod(z ** np.array(e)) for e, c in self.terms.items()))

    def evaluate_many(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=complex).reshape(-1, self.nvars)
        out = np.zeros(Z.shape[0], dtype=complex)
        for e, c in self.terms.items():
            out += c * np.prod(Z ** np.array(e)[None, :], axis=1)
        return out

    def sorted_terms(self) -> list[tuple[Exponent, complex]]:
        """Terms by total degree, then exponent tuple."""
        return sorted(self.terms.items(), key=lambda t: (sum(t[0]), tuple(-v for v in t[0])))

    def to_text(self, factor: bool = True, fmt: str = "%.12e") -> str:
        if not self.terms:
            return "0"
        terms = self.sorted_terms()
        common = terms[0][1] if factor else 1.0
        parts = []
        for e, c in terms:
            c = c / common
            mono = "*".join(
                f"z{i + 1}" if p == 1 else f"z{i + 1}^{p}" for i, p in enumerate(e) if p != 0
            )
            coef = _fmt_complex(c, fmt)
            if mono and coef == "1":
                parts.append(mono)
            elif mono and coef == "-1":
                parts.append("-" + mono)
            elif mono:
                parts.append(f"{coef}*{mono}")
            else:
                parts.append(coef)
        body = " + ".join(parts).replace("+ -", "- ")
        lead = _fmt_complex(common, fmt) if factor else "1"
        if lead == "1":
            return body
        if lead == "-1":
            return f"-({body})"
        if factor:
            return f"{lead}*({body})"
        return body

    def __repr__(self):
        return f"LaurentPoly({self.to_text(factor=False, fmt='%.6g')})"

    def allclose(self, other: "LaurentPoly", atol: float = 1e-12) -> bool:
        keys = set(self.terms) | set(other.terms)
        return all(abs(self.terms.get(k, 0) - other.terms.get(k, 0)) <= atol for k in keys)


def _fmt_complex(c: complex, fmt: str) -> str:
    if abs(c.imag) <= 1e-15 * max(1.0, abs(c.real)):
        r = c.real
        if abs(r - round(r)) < 1e-12 and abs(r) < 1e6:
            return str(int(round(r)))
        return fmt % r
    return f"({fmt % c.real}{'+' if c.imag >= 0 else '-'}{fmt % abs(c.imag)}j)"


@dataclass(frozen=True)
class LaurentMatrix:
    """Dense matrix of Laurent polynomials in ``nvars`` variables."""

    entries: tuple[tuple[LaurentPoly, ...], ...]
    nvars: int
    row_labels: tuple[str, ...] = ()
    col_labels: tuple[str, ...] = ()

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.entries), (len(self.entries[0]) if self.entries else 0)

    def __getitem__(self, ij) -> LaurentPoly:
        i, j = ij
        return self.entries[i][j]

    def substitute_inverse(self) -> "LaurentMatrix":
        return LaurentMatrix(
            tuple(tuple(p.substitute_inverse() for p in row) for row in self.entries),
            self.nvars, self.row_labels, self.col_labels,
        )

    def select(self, rows: Sequence[int], cols: Sequence[int]) -> "LaurentMatrix":
        return LaurentMatrix(
            tuple(tuple(self.entries[i][j] for j in cols) for i in rows),
            self.nvars,
            tuple(self.row_labels[i] for i in rows) if self.row_labels else (),
            tuple(self.col_labels[j] for j in cols) if self.col_labels else (),
        )

    def monomial_expansion(self) -> tuple[np.ndarray, np.ndarray]:
        """(exponents (T, nvars), coefficient matrices (T, m, n)) with M(z) = sum_t C_t z^e_t."""
        m, n = self.shape
        exps: dict[Exponent, np.ndarray] = {}
        for i, row in enumerate(self.entries):
            for j, p in enumerate(row):
                for e, c in p.terms.items():
                    if e not in exps:
                        exps[e] = np.zeros((m, n), dtype=complex)
                    exps[e][i, j] += c
        keys = sorted(exps)
        E = np.array(keys, dtype=int).reshape(-1, self.nvars)
        C = np.array([exps[k] for k in keys]).reshape(-1, m, n)
        return E, C

    def evaluate_many(self, Z) -> np.ndarray:
        """Batch evaluation at points Z (N, nvars) -> (N, m, n)."""
        Z = np.asarray(Z, dtype=complex).reshape(-1, self.nvars)
        E, C = self._expansion()
        mono = np.ones((Z.shape[0], E.shape[0]), dtype=complex)
        for v in range(self.nvars):
            mono *= Z[:, v:v + 1] ** E[None, :, v]
        return np.tensordot(mono, C, axes=(1, 0))

    def _expansion(self):
        cache = self.__dict__.get("_expansion_cache")
        if cache is None:
            cache = self.monomial_expansion()
            object.__setattr__(self, "_expansion_cache", cache)
        return cache

    def __call__(self, z) -> np.ndarray:
        return self.evaluate_many(np.asarray(z, dtype=complex)[None, :])[0]

    def to_json(self) -> dict:
        m, n = self.shape
        return {
            "nvars": self.nvars,
            "shape": [m, n],
            "row_labels": list(self.row_labels),
            "col_labels": list(self.col_labels),
            "entries": [
                [[{"exponent": list(e), "re": c.real, "im": c.imag} for e, c in sorted(p.terms.items())]
                 for p in row]
                for row in self.entries
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "LaurentMatrix":
        nvars = int(data["nvars"])
        entries = tuple(
            tuple(LaurentPoly({tuple(t["exponent"]): complex(t["re"], t["im"]) for t in cell}, nvars) for cell in row)
            for row in data["entries"]
        )
        return cls(entries, nvars, tuple(data.get("row_labels", ())), tuple(data.get("col_labels", ())))


def bareiss_determinant(M: LaurentMatrix) -> LaurentPoly:
    """Fraction-free (Bareiss) determinant over the Laurent ring.

    Each row is first multiplied by a monomial so that every entry is an
    ordinary polynomial; the product of those monomials is divided out at
    the end.
    """
    m, n = M.shape
    if m != n:
        raise ValueError(f"determinant needs a square matrix, got {m}x{n}")
    nv = M.nvars
    if n == 0:
        return LaurentPoly.constant(1.0, nv)
    rows = []
    total_shift = np.zeros(nv, dtype=int)
    for row in M.entries:
        nonzero = [p for p in row if not p.is_zero()]
        if not nonzero:
            return LaurentPoly({}, nv)
        low = np.min(np.array([p.min_exponent() for p in nonzero]), axis=0)
        shift = tuple(int(-v) for v in low)
        total_shift += np.array(shift)
        rows.append([p.shift(shift) for p in row])

    A = [list(r) for r in rows]
    sign = 1
    prev = LaurentPoly.constant(1.0, nv)
    for k in range(n - 1):
        if A[k][k].is_zero():
            swap = next((i for i in range(k + 1, n) if not A[i][k].is_zero()), None)
            if swap is None:
                return LaurentPoly({}, nv)
            A[k], A[swap] = A[swap], A[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                num = (A[k][k] * A[i][j] - A[i][k] * A[k][j]).prune()
                A[i][j] = num.divide_exact(prev) if not num.is_zero() else num
            A[i][k] = LaurentPoly({}, nv)
        prev = A[k][k]
    det = A[n - 1][n - 1].prune()
    if sign < 0:
        det = -det
    return det.shift(tuple(int(-v) for v in total_shift))


def cofactor_determinant(M: LaurentMatrix) -> LaurentPoly:
    """Laplace expansion along the first row; exponential cost, for cross-checking."""
    m, n = M.shape
    if m != n:
        raise ValueError("determinant needs a square matrix")
    if n == 0:
        return LaurentPoly.constant(1.0, M.nvars)
    if n == 1:
        return M.entries[0][0]
    total = LaurentPoly({}, M.nvars)
    for j in range(n):
        if M.entries[0][j].is_zero():
            continue
        minor = M.select(range(1, n), [c for c in range(n) if c != j])
        term = M.entries[0][j] * cofactor_determinant(minor)
        total = total + term if j % 2 == 0 else total - term
    return total.prune()


def poly_matrix(rows: Iterable[Iterable[LaurentPoly]], nvars: int) -> LaurentMatrix:
    return LaurentMatrix(tuple(tuple(r) for r in rows), nvars)
