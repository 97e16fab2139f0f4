"""Exact estimands, value functions and policy objectives of a finite model.

Everything here is an exact finite sum over strata and latent classes; no
sampling is involved.  Denominators (``gamma``, ``delta``, ``C``) closer to
zero than :data:`ZERO_TOL` make the dependent ratios undefined.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass
from typing import Any, Iterator, Mapping

import numpy as np

from .scm import ScmSpec, Stratum, validate_spec

ZERO_TOL = 1e-9
OBJECTIVES = ("f1", "f2", "f3", "qian_naive")

Regime = dict  # stratum label -> action in {-1, +1}


class UndefinedEstimandError(ValueError):
    """A ratio or sign needed by the operation has a (near) zero denominator."""

    def __init__(self, message: str, stratum: str | None = None):
        super().__init__(message)
        self.stratum = stratum


class TieError(UndefinedEstimandError):
    """An exact regime decision was requested where the estimand is 0."""


def sign(x: float) -> int:
    return (x > 0) - (x < 0)


def _dot(w: np.ndarray, v: np.ndarray) -> float:
    return math.fsum(w * v)


def latent_profile(s: Stratum) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Weights, effect (gamma-tilde) and compliance (delta-tilde) per latent class."""
    a = s.arrays
    return a["w"], a["m1"] - a["mm1"], a["pa1"] - a["pam1"]


@dataclass(frozen=True)
class StratumEstimands:
    label: str
    gamma: float
    delta: float
    c: float
    wald: float | None
    theorem1_stat: float | None
    cov_form: float | None
    d_star: int
    d_wald: int


FIELDS = ("gamma", "delta", "c", "wald", "theorem1_stat", "cov_form", "d_star", "d_wald")


@dataclass(frozen=True)
class EstimandTable:
    rows: tuple[StratumEstimands, ...]

    def __getitem__(self, label: str) -> StratumEstimands:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)

    def __iter__(self) -> Iterator[StratumEstimands]:
        return iter(self.rows)

    def __len__(self) -> int:
        return len(self.rows)

    def to_dict(self) -> dict[str, dict[str, Any]]:
        return {r.label: {k: getattr(r, k) for k in FIELDS} for r in self.rows}

    @classmethod
    def from_dict(cls, doc: Mapping[str, Mapping[str, Any]]) -> "EstimandTable":
        return cls(tuple(StratumEstimands(label=k, **{f: v[f] for f in FIELDS}) for k, v in doc.items()))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("stratum",) + FIELDS)
        for r in self.rows:
            w.writerow([r.label] + ["" if getattr(r, k) is None else repr(getattr(r, k)) for k in FIELDS])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _stratum_row(s: Stratum, tol: float) -> StratumEstimands:
    w, g_t, d_t = latent_profile(s)
    gamma = _dot(w, g_t)
    delta = _dot(w, d_t)
    c = _dot(w, g_t * d_t)
    wald = stat = cov = None
    if abs(delta) > tol:
        wald = c / delta
        if abs(gamma) > tol:
            stat = _dot(w, (g_t / gamma) * (d_t / delta))
            cov = stat - 1.0
    d_star = sign(gamma) if abs(gamma) > tol else 0
    d_wald = sign(wald) if wald is not None and abs(c) > tol else 0
    return StratumEstimands(s.label, gamma, delta, c, wald, stat, cov, d_star, d_wald)


def stratum_estimands(spec: ScmSpec, tol: float = ZERO_TOL, *, validate: bool = True) -> EstimandTable:
    """Per-stratum gamma, delta, C, Wald ratio and the Theorem-1 statistic."""
    if validate:
        validate_spec(spec, tol)
    return EstimandTable(tuple(_stratum_row(s, tol) for s in spec.strata))


def covariance_direct(s: Stratum) -> float:
    """Cov(gamma-tilde/gamma, delta-tilde/delta | l) from centred products."""
    w, g_t, d_t = latent_profile(s)
    gamma = _dot(w, g_t)
    delta = _dot(w, d_t)
    return _dot(w, (g_t / gamma - 1.0) * (d_t / delta - 1.0))


# --------------------------------------------------------------------------
# Observed law
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ObservedLawTable:
    """Exact law of (Y, A) given Z within one stratum, U marginalised.

    ``p_a[(z, a)]`` is P(A=a|Z=z); ``ey_joint[(z, a)]`` is E[Y 1{A=a} | Z=z].
    ``cells[(y, a, z)]`` is P(Y=y, A=a | Z=z), present for bernoulli strata.
    """

    label: str
    mode: str
    p_z: float
    p_a: dict[tuple[int, int], float]
    ey_joint: dict[tuple[int, int], float]
    cells: dict[tuple[int, int, int], float] | None

    def e_y_given(self, a: int, z: int) -> float | None:
        p = self.p_a[(z, a)]
        return None if p == 0.0 else self.ey_joint[(z, a)] / p

    def e_y_given_z(self, z: int) -> float:
        return self.ey_joint[(z, 1)] + self.ey_joint[(z, -1)]

    def wald_numerator(self) -> float:
        return self.e_y_given_z(1) - self.e_y_given_z(-1)

    def to_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "label": self.label,
            "mode": self.mode,
            "p_z": self.p_z,
            "p_a": {f"a={a},z={z}": v for (z, a), v in self.p_a.items()},
            "e_y_joint": {f"a={a},z={z}": v for (z, a), v in self.ey_joint.items()},
        }
        if self.cells is not None:
            doc["cells"] = {f"y={y},a={a},z={z}": v for (y, a, z), v in self.cells.items()}
        return doc


def observed_law(spec: ScmSpec, stratum: str) -> ObservedLawTable:
    s = spec.stratum(stratum)
    a = s.arrays
    w = a["w"]
    p_a_given = {1: a["pa1"], -1: a["pam1"]}
    p_a: dict[tuple[int, int], float] = {}
    ey: dict[tuple[int, int], float] = {}
    cells: dict[tuple[int, int, int], float] | None = {} if s.is_bernoulli else None
    for z in (1, -1):
        for act in (1, -1):
            pa = p_a_given[z] if act == 1 else 1.0 - p_a_given[z]
            mean = a["m1"] if act == 1 else a["mm1"]
            p_a[(z, act)] = _dot(w, pa)
            ey[(z, act)] = _dot(w, pa * mean)
            if cells is not None:
                cells[(1, act, z)] = ey[(z, act)]
                cells[(0, act, z)] = _dot(w, pa * (1.0 - mean))
    return ObservedLawTable(s.label, "bernoulli" if s.is_bernoulli else "mean", s.p_z, p_a, ey, cells)


# --------------------------------------------------------------------------
# Regimes, value function, objectives
# --------------------------------------------------------------------------


def check_regime(spec: ScmSpec, regime: Mapping[str, int]) -> None:
    missing = [l for l in spec.labels if l not in regime]
    if missing:
        raise ValueError(f"regime missing strata {missing}")
    bad = [l for l in spec.labels if regime[l] not in (1, -1)]
    if bad:
        raise ValueError(f"regime actions must be -1 or +1 (strata {bad})")


def all_regimes(spec: ScmSpec) -> Iterator[dict[str, int]]:
    labels = spec.labels
    for acts in itertools.product((1, -1), repeat=len(labels)):
        yield dict(zip(labels, acts))


def value_function(spec: ScmSpec, regime: Mapping[str, int]) -> float:
    """E[Y_{D(L)}] under the true model."""
    check_regime(spec, regime)
    terms = []
    for s in spec.strata:
        a = s.arrays
        m = a["m1"] if regime[s.label] == 1 else a["mm1"]
        terms.append(s.prob * _dot(a["w"], m))
    return math.fsum(terms)


def _delta_or_raise(s: Stratum, tol: float, which: str) -> float:
    delta = _dot(s.arrays["w"], s.arrays["pa1"] - s.arrays["pam1"])
    if abs(delta) <= tol:
        raise UndefinedEstimandError(f"{which} undefined: δ(l)≈0 in stratum {s.label!r}", s.label)
    return delta


def _objective_term(s: Stratum, act: int, which: str, tol: float) -> float:
    a = s.arrays
    w = a["w"]
    if which == "qian_naive":
        law = observed_law_for(s)
        f_a = s.p_z * law.p_a[(1, act)] + (1.0 - s.p_z) * law.p_a[(-1, act)]
        if f_a <= 0.0:
            raise UndefinedEstimandError(f"qian_naive undefined: P(A={act}|l)=0 in stratum {s.label!r}", s.label)
        joint = s.p_z * law.ey_joint[(1, act)] + (1.0 - s.p_z) * law.ey_joint[(-1, act)]
        return joint / f_a
    delta = _delta_or_raise(s, tol, which)
    d_t = a["pa1"] - a["pam1"]
    m = a["m1"] if act == 1 else a["mm1"]
    if which == "f1":
        return _dot(w, d_t * m) / delta
    if which == "f2":
        offset = _dot(w, a["pam1"] * a["m1"] + (1.0 - a["pa1"]) * a["mm1"])
        return (_dot(w, d_t * m) + offset) / delta
    if which == "f3":
        if act != 1:
            return 0.0
        return _dot(w, (a["m1"] - a["mm1"]) * d_t) / delta
    raise ValueError(f"unknown objective {which!r}; expected one of {OBJECTIVES}")


def observed_law_for(s: Stratum) -> ObservedLawTable:
    return observed_law(ScmSpec((s,)), s.label)


def policy_objective(spec: ScmSpec, regime: Mapping[str, int], which: str, tol: float = ZERO_TOL) -> float:
    """Population value of one of the weighted objectives at ``regime``.

    ``f1`` is E[Z A Y 1{A=D(L)} / (delta(L) f(Z|L))], ``f2`` is
    E[Y 1{Z=D(L)} / (delta(L) f(Z|L))], ``f3`` is
    E[gamma-tilde delta-tilde / delta(L) 1{D(L)=1}], and ``qian_naive`` is
    E[Y 1{D(L)=A} / f(A|L)] evaluated through the observed law.
    """
    if which not in OBJECTIVES:
        raise ValueError(f"unknown objective {which!r}; expected one of {OBJECTIVES}")
    check_regime(spec, regime)
    return math.fsum(s.prob * _objective_term(s, regime[s.label], which, tol) for s in spec.strata)


def optimal_regime(spec: ScmSpec, source: str = "true_gamma", tol: float = ZERO_TOL) -> dict[str, int]:
    """Per-stratum sign of gamma (``true_gamma``) or of the Wald ratio (``wald``)."""
    table = stratum_estimands(spec, tol)
    out = {}
    for r in table:
        if source == "true_gamma":
            if abs(r.gamma) <= tol:
                raise TieError(f"γ(l)≈0 in stratum {r.label!r}: optimal action is a tie", r.label)
            out[r.label] = sign(r.gamma)
        elif source == "wald":
            if abs(r.delta) <= tol:
                raise UndefinedEstimandError(f"Wald ratio undefined: δ(l)≈0 in stratum {r.label!r}", r.label)
            if abs(r.c) <= tol:
                raise TieError(f"C(l)≈0 in stratum {r.label!r}: Wald sign is a tie", r.label)
            out[r.label] = sign(r.c / r.delta)
        else:
            raise ValueError(f"unknown regime source {source!r}")
    return out


def argmax_regimes(spec: ScmSpec, which: str, tol: float = ZERO_TOL, atol: float = 1e-12) -> list[dict[str, int]]:
    """All regimes attaining the maximum of ``which`` (exhaustive over 2^|L|)."""
    scored = [(policy_objective(spec, r, which, tol), r) for r in all_regimes(spec)]
    best = max(v for v, _ in scored)
    return [r for v, r in scored if v >= best - atol]

