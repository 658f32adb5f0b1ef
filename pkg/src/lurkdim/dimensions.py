"""Exact dimensional analysis over the rationals.

Dimension exponents are held as :class:`fractions.Fraction` so rank,
nullspace and homogeneity results are exact. Floats only appear in
:func:`pinned_complement`, whose output feeds the statistics layer.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

MLT = ("M", "L", "T")
SI = ("M", "L", "T", "I", "Theta", "N", "J")

_LABEL_NAMES = {
    "M": "Mass",
    "L": "Length",
    "T": "Time",
    "I": "Current",
    "Theta": "Temperature",
    "N": "Amount",
    "J": "Luminosity",
}


class DimensionError(ValueError):
    """Malformed or incompatible dimension declarations."""


class NotHomogeneous(DimensionError):
    """No power-product of the exposed variables carries the qoi's dimensions.

    Raising this is itself the analytic lurking-variable signal.
    """

    def __init__(self, verdict: "HomogeneityVerdict"):
        self.verdict = verdict
        missing = ", ".join(verdict.missing_dimensions) or "unattributed"
        super().__init__(f"qoi dimensions are not in the column space of the exposed variables (missing: {missing})")


class FullRankPinned(DimensionError):
    """Pinned variables span every base dimension; detection is impossible."""


def parse_exponent(value) -> Fraction:
    """Parse an integer, Fraction or ``"num/den"`` string into a Fraction."""
    if isinstance(value, bool):
        raise DimensionError(f"invalid exponent {value!r}")
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise DimensionError(f"invalid exponent {value!r}") from exc
    if isinstance(value, float) and value.is_integer():
        return Fraction(int(value))
    raise DimensionError(f"invalid exponent {value!r}; use an integer or 'num/den'")


def format_exponent(value: Fraction) -> int | str:
    """Inverse of :func:`parse_exponent`: ints stay ints, others become ``"n/d"``."""
    value = Fraction(value)
    if value.denominator == 1:
        return value.numerator
    return f"{value.numerator}/{value.denominator}"


@dataclass(frozen=True)
class DimVector:
    exponents: tuple[Fraction, ...]
    basis: tuple[str, ...] = MLT

    def __post_init__(self):
        exps = tuple(parse_exponent(e) for e in self.exponents)
        object.__setattr__(self, "exponents", exps)
        object.__setattr__(self, "basis", tuple(self.basis))
        if len(exps) != len(self.basis):
            raise DimensionError(f"{len(exps)} exponents for {len(self.basis)} base dimensions")

    @classmethod
    def zeros(cls, basis: Sequence[str] = MLT) -> "DimVector":
        return cls(tuple(Fraction(0) for _ in basis), tuple(basis))

    def __len__(self):
        return len(self.exponents)

    def __iter__(self):
        return iter(self.exponents)

    def is_zero(self) -> bool:
        return all(e == 0 for e in self.exponents)

    def to_float(self) -> np.ndarray:
        return np.array([float(e) for e in self.exponents])

    def serialize(self) -> list:
        return [format_exponent(e) for e in self.exponents]


@dataclass(frozen=True)
class DimMatrix:
    """Dimension matrix: column ``j`` is the exponent vector of variable ``j``."""

    columns: tuple[DimVector, ...]
    variable_names: tuple[str, ...]
    basis: tuple[str, ...] = MLT

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "variable_names", tuple(self.variable_names))
        object.__setattr__(self, "basis", tuple(self.basis))
        if len(self.columns) != len(self.variable_names):
            raise DimensionError("one variable name is required per column")
        if len(set(self.variable_names)) != len(self.variable_names):
            raise DimensionError(f"duplicate variable names in {self.variable_names}")
        for name, col in zip(self.variable_names, self.columns):
            if col.basis != self.basis:
                raise DimensionError(f"variable {name!r} uses basis {col.basis}, expected {self.basis}")

    @classmethod
    def from_dict(cls, variables: Mapping[str, Iterable], basis: Sequence[str] = MLT) -> "DimMatrix":
        basis = tuple(basis)
        cols = tuple(DimVector(tuple(exps), basis) for exps in variables.values())
        return cls(cols, tuple(variables), basis)

    @classmethod
    def empty(cls, basis: Sequence[str] = MLT) -> "DimMatrix":
        return cls((), (), tuple(basis))

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.basis), len(self.columns)

    def rows(self) -> list[list[Fraction]]:
        return [[col.exponents[i] for col in self.columns] for i in range(len(self.basis))]

    def column(self, name: str) -> DimVector:
        return self.columns[self.variable_names.index(name)]

    def select(self, names: Iterable[str]) -> "DimMatrix":
        names = list(names)
        missing = [n for n in names if n not in self.variable_names]
        if missing:
            raise DimensionError(f"unknown variables {missing}")
        return DimMatrix(tuple(self.column(n) for n in names), tuple(names), self.basis)

    def take(self, indices: Iterable[int]) -> "DimMatrix":
        return self.select([self.variable_names[i] for i in indices])

    def to_float(self) -> np.ndarray:
        d, p = self.shape
        return np.array([[float(e) for e in row] for row in self.rows()]).reshape(d, p)

    def serialize(self) -> dict:
        return {name: col.serialize() for name, col in zip(self.variable_names, self.columns)}


@dataclass(frozen=True)
class HomogeneityVerdict:
    homogeneous: bool
    missing_dimensions: tuple[str, ...] = ()

    def describe(self) -> str:
        if self.homogeneous:
            return "dimensionally homogeneous"
        names = [f"{lab} ({_LABEL_NAMES[lab]})" if lab in _LABEL_NAMES else lab for lab in self.missing_dimensions]
        return "not homogeneous; missing dimensions: " + (", ".join(names) if names else "unattributed")


def _rref(rows: list[list[Fraction]], ncols: int) -> tuple[list[list[Fraction]], list[int]]:
    """Reduced row echelon form with leftmost pivots, rows kept in declared order."""
    m = [list(r) for r in rows]
    pivots: list[int] = []
    r = 0
    for c in range(ncols):
        pr = next((i for i in range(r, len(m)) if m[i][c] != 0), None)
        if pr is None:
            continue
        m[r], m[pr] = m[pr], m[r]
        piv = m[r][c]
        m[r] = [v / piv for v in m[r]]
        for i in range(len(m)):
            if i != r and m[i][c] != 0:
                f = m[i][c]
                m[i] = [a - f * b for a, b in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
        if r == len(m):
            break
    return m, pivots


def rank(D: DimMatrix) -> int:
    d, p = D.shape
    if d == 0 or p == 0:
        return 0
    return len(_rref(D.rows(), p)[1])


def _nullspace_rows(rows: list[list[Fraction]], p: int) -> list[list[Fraction]]:
    if not rows:
        return [[Fraction(int(i == j)) for i in range(p)] for j in range(p)]
    R, pivots = _rref(rows, p)
    basis = []
    for f in (c for c in range(p) if c not in pivots):
        v = [Fraction(0)] * p
        v[f] = Fraction(1)
        for i, pc in enumerate(pivots):
            v[pc] = -R[i][f]
        basis.append(v)
    return basis


def nullspace_basis(D: DimMatrix) -> list[tuple[Fraction, ...]]:
    """Exact nullspace basis; one vector per free column, in column order."""
    return [tuple(v) for v in _nullspace_rows(D.rows(), D.shape[1])]


def _check_basis(D: DimMatrix, dq: DimVector):
    if tuple(dq.basis) != D.basis:
        raise DimensionError(f"qoi basis {dq.basis} does not match matrix basis {D.basis}")


def _solve_exact(rows: list[list[Fraction]], rhs: list[Fraction], p: int) -> list[Fraction] | None:
    """A particular solution of rows·u = rhs (free variables 0), or None if inconsistent."""
    aug = [list(r) + [b] for r, b in zip(rows, rhs)]
    R, pivots = _rref(aug, p)
    for row in R[len(pivots):]:
        if row[p] != 0:
            return None
    u = [Fraction(0)] * p
    for i, pc in enumerate(pivots):
        u[pc] = R[i][p]
    return u


def check_homogeneity(D_ex: DimMatrix, dq: DimVector) -> HomogeneityVerdict:
    _check_basis(D_ex, dq)
    if dq.is_zero():
        return HomogeneityVerdict(True)
    rows = D_ex.rows()
    if _solve_exact(rows, list(dq.exponents), D_ex.shape[1]) is not None:
        return HomogeneityVerdict(True)
    missing = tuple(
        lab for lab, row, e in zip(D_ex.basis, rows, dq.exponents) if e != 0 and all(v == 0 for v in row)
    )
    return HomogeneityVerdict(False, missing)


def nondim_vector(D_ex: DimMatrix, dq: DimVector) -> tuple[Fraction, ...]:
    """The unique non-dimensionalizing vector orthogonal to the nullspace of ``D_ex``.

    Solves the stacked system ``[D_ex; V^T] u = [dq; 0]`` exactly, where ``V``
    is any nullspace basis. Raises :class:`NotHomogeneous` when ``dq`` is not
    in the column space of ``D_ex``.
    """
    verdict = check_homogeneity(D_ex, dq)
    if not verdict.homogeneous:
        raise NotHomogeneous(verdict)
    p = D_ex.shape[1]
    V = _nullspace_rows(D_ex.rows(), p)
    rows = D_ex.rows() + V
    rhs = list(dq.exponents) + [Fraction(0)] * len(V)
    u = _solve_exact(rows, rhs, p)
    assert u is not None
    return tuple(u)


def pinned_complement(D_pin: DimMatrix) -> np.ndarray:
    """Orthonormal basis ``W`` (d x (d - r_pin)) of the complement of range(D_pin).

    The exact left nullspace of ``D_pin`` is orthonormalized by QR with the
    sign of each column fixed so the diagonal of R is positive.
    """
    d, p = D_pin.shape
    if p == 0:
        return np.eye(d)
    if rank(D_pin) == d:
        raise FullRankPinned(
            f"pinned variables {list(D_pin.variable_names)} span all {d} base dimensions"
        )
    left = _nullspace_rows([list(r) for r in zip(*D_pin.rows())], d)
    B = np.array([[float(x) for x in v] for v in left]).T
    Q, R = np.linalg.qr(B)
    signs = np.where(np.diag(R) < 0, -1.0, 1.0)
    return Q * signs
