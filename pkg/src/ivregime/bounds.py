"""Balke-Pearl bounds on the stratum CATE for binary outcomes.

The unknowns are the probabilities of the 16 joint response types
(compliance type x outcome response type).  The observed law P(Y, A | Z)
pins 8 linear functionals of them; the CATE is another linear functional.
The bounds are the min and max of that functional over the polytope,
computed by enumerating every basic feasible solution.  The constraint
matrix does not depend on the model, so all basis inverses are built
once and only the right-hand side changes between calls.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Any

import numpy as np

from . import _kernels
from .estimands import observed_law
from .scm import ScmSpec

COMPLIANCE_TYPES = ("always_taker", "never_taker", "complier", "defier")
RESPONSE_TYPES = ("always_1", "never_1", "helped", "hurt")
CELLS = tuple((y, a, z) for z in (1, -1) for a in (1, -1) for y in (1, 0))
UNIDENTIFIED = "unidentified"


class UnsupportedOutcomeError(ValueError):
    pass


def _treatment(ctype: str, z: int) -> int:
    return {"always_taker": 1, "never_taker": -1, "complier": z, "defier": -z}[ctype]


def _outcome(rtype: str, a: int) -> int:
    if rtype == "always_1":
        return 1
    if rtype == "never_1":
        return 0
    if rtype == "helped":
        return int(a == 1)
    return int(a == -1)


VARIABLES = tuple(itertools.product(COMPLIANCE_TYPES, RESPONSE_TYPES))


def constraint_matrix() -> np.ndarray:
    """Rows: the 8 observed cells (y, a, z) in :data:`CELLS` order, then sum-to-one."""
    rows = []
    for y, a, z in CELLS:
        rows.append([float(_treatment(c, z) == a and _outcome(r, a) == y) for c, r in VARIABLES])
    rows.append([1.0] * len(VARIABLES))
    return np.array(rows)


def cate_coefficients() -> np.ndarray:
    return np.array([float(_outcome(r, 1) - _outcome(r, -1)) for _, r in VARIABLES])


@lru_cache(maxsize=1)
def _basis_table():
    """Independent constraint rows plus the inverse of every nonsingular basis."""
    full = constraint_matrix()
    rows: list[int] = []
    for i in range(full.shape[0]):
        if np.linalg.matrix_rank(full[rows + [i]]) == len(rows) + 1:
            rows.append(i)
    a_ind = full[rows]
    m = len(rows)
    inverses = []
    columns = []
    for cols in itertools.combinations(range(full.shape[1]), m):
        sub = a_ind[:, cols]
        if abs(np.linalg.det(sub)) < 1e-9:
            continue
        inverses.append(np.linalg.inv(sub))
        columns.append(cols)
    return np.array(rows), np.ascontiguousarray(inverses), np.array(columns, dtype=np.int64)


@dataclass(frozen=True)
class ResponseTypePolytope:
    stratum: str
    variables: tuple[tuple[str, str], ...]
    a_eq: np.ndarray
    b_eq: np.ndarray
    objective: np.ndarray

    def to_dict(self) -> dict[str, Any]:
        return {
            "stratum": self.stratum,
            "variables": [f"{c}/{r}" for c, r in self.variables],
            "a_eq": self.a_eq.tolist(),
            "b_eq": self.b_eq.tolist(),
            "objective": self.objective.tolist(),
        }


def response_type_polytope(spec: ScmSpec, stratum: str) -> ResponseTypePolytope:
    s = spec.stratum(stratum)
    if not s.is_bernoulli:
        raise UnsupportedOutcomeError(f"stratum {stratum!r}: bounds need a bernoulli outcome in every latent class")
    law = observed_law(spec, stratum)
    b = np.array([law.cells[cell] for cell in CELLS] + [1.0])
    return ResponseTypePolytope(s.label, VARIABLES, constraint_matrix(), b, cate_coefficients())


def sign_from_bounds(lower: float, upper: float) -> int | str:
    if lower > 0:
        return 1
    if upper < 0:
        return -1
    return UNIDENTIFIED


@dataclass(frozen=True)
class BoundsResult:
    stratum: str
    lower: float
    upper: float
    feasible: bool

    @property
    def sign_verdict(self) -> int | str:
        return sign_from_bounds(self.lower, self.upper)

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def to_dict(self) -> dict[str, Any]:
        return {"lower": self.lower, "upper": self.upper, "sign_verdict": self.sign_verdict, "feasible": self.feasible}

    @classmethod
    def from_dict(cls, stratum: str, doc: dict[str, Any]) -> "BoundsResult":
        return cls(stratum, doc["lower"], doc["upper"], doc["feasible"])


def solve_bounds(b_eq: np.ndarray, objective: np.ndarray | None = None) -> tuple[float, float, bool]:
    """Extreme values of ``objective @ q`` over {q >= 0 : A q = b_eq}."""
    rows, inverses, columns = _basis_table()
    c = cate_coefficients() if objective is None else np.asarray(objective, dtype=float)
    b = np.ascontiguousarray(np.asarray(b_eq, dtype=float)[rows])
    lo, hi, n_feas = _kernels.vertex_range(inverses, columns, b, c)
    if n_feas == 0:
        return -1.0, 1.0, False
    # vertex arithmetic may leave ~1e-16 slop outside [-1, 1]
    lo = min(max(lo, -1.0), 1.0)
    hi = min(max(hi, lo), 1.0)
    return lo, hi, True


def balke_pearl_bounds(spec: ScmSpec, stratum: str) -> BoundsResult:
    poly = response_type_polytope(spec, stratum)
    lo, hi, feasible = solve_bounds(poly.b_eq, poly.objective)
    return BoundsResult(poly.stratum, lo, hi, feasible)


def all_bounds(spec: ScmSpec) -> dict[str, BoundsResult]:
    return {s.label: balke_pearl_bounds(spec, s.label) for s in spec.strata}
