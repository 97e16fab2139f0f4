"""Identifying assumptions, the implications among them, and the
three-level identification classifier.

Every condition is evaluated per stratum and holds overall only when it
holds in every stratum.  Equality-type conditions use an absolute
tolerance; the Theorem-1 condition is a strict inequality.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .estimands import (
    ZERO_TOL,
    UndefinedEstimandError,
    all_regimes,
    covariance_direct,
    latent_profile,
    policy_objective,
    sign,
    stratum_estimands,
    value_function,
)
from .scm import ScmSpec, Stratum, validate_spec

DEFAULT_TOL = 1e-9
STRICT_EPS = 1e-12
VERIFY_TOL = 1e-10

CONDITIONS = (
    "cui_a7",
    "cui_a8",
    "qiu_a5b1b",
    "qiu_a5b2b",
    "han_a",
    "eq4_nec_suf",
    "eq6_pos_cov",
    "rational_agents",
)
STRUCTURAL = ("qiu_a5b1a", "qiu_a5b2a")

# (antecedent, consequent); checked stratum by stratum
LATTICE = (
    ("cui_a8", "cui_a7"),
    ("qiu_a5b2b", "cui_a7"),
    ("cui_a7", "eq4_nec_suf"),
    ("qiu_a5b1b", "cui_a7"),
    ("han_a", "eq4_nec_suf"),
    ("eq6_pos_cov", "eq4_nec_suf"),
    ("rational_agents", "eq6_pos_cov"),
)


class UndefinedConditionError(UndefinedEstimandError):
    pass


@dataclass(frozen=True)
class StratumCheck:
    label: str
    satisfied: bool
    diagnostic: float
    note: str = ""


@dataclass(frozen=True)
class ConditionReport:
    condition_name: str
    strata: tuple[StratumCheck, ...]

    @property
    def satisfied(self) -> bool:
        return all(s.satisfied for s in self.strata)

    def __getitem__(self, label: str) -> StratumCheck:
        for s in self.strata:
            if s.label == label:
                return s
        raise KeyError(label)

    def to_dict(self) -> dict[str, Any]:
        return {
            "condition_name": self.condition_name,
            "satisfied": self.satisfied,
            "strata": {
                s.label: {"satisfied": s.satisfied, "diagnostic": s.diagnostic, "note": s.note}
                for s in self.strata
            },
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "ConditionReport":
        rows = tuple(
            StratumCheck(label, v["satisfied"], v["diagnostic"], v["note"]) for label, v in doc["strata"].items()
        )
        return cls(doc["condition_name"], rows)


def _moments(s: Stratum):
    w, g_t, d_t = latent_profile(s)
    gamma = math.fsum(w * g_t)
    delta = math.fsum(w * d_t)
    return w, g_t, d_t, gamma, delta


def _require_ratios(s: Stratum, name: str, gamma: float, delta: float) -> None:
    if abs(gamma) <= ZERO_TOL or abs(delta) <= ZERO_TOL:
        raise UndefinedConditionError(
            f"{name} undefined in stratum {s.label!r}: |γ|={abs(gamma):.3g}, |δ|={abs(delta):.3g}", s.label
        )


def _sign_spread(v: np.ndarray, tol: float) -> float:
    """How far a vector crosses zero: 0 when it keeps one weak sign."""
    hi = v.max()
    lo = v.min()
    if hi <= tol or lo >= -tol:
        return 0.0
    return float(min(hi, -lo))


def _monotone_violation(v: np.ndarray, direction: int) -> float:
    if v.size < 2:
        return 0.0
    steps = np.diff(v) * direction
    return float(max(0.0, -steps.min()))


def _cui_a7(s, tol):
    w, g_t, d_t, gamma, delta = _moments(s)
    cov = math.fsum(w * g_t * d_t) - gamma * delta
    return abs(cov) <= tol, cov, "Cov(γ̃, δ̃ | l)"


def _cui_a8(s, tol):
    w, g_t, d_t, gamma, delta = _moments(s)
    dev = float(np.max(np.abs(d_t - delta)))
    return dev <= tol, dev, "max_u |δ̃ - δ|"


def _qiu_a5b1b(s, tol):
    w, g_t, d_t, gamma, delta = _moments(s)
    dev = float(np.max(np.abs(g_t - gamma)))
    return dev <= tol, dev, "max_u |γ̃ - γ|"


def _han_a(s, tol):
    w, g_t, d_t, gamma, delta = _moments(s)
    sg = _sign_spread(g_t, tol)
    sd = _sign_spread(d_t, tol)
    parts = []
    if sg > 0:
        parts.append("γ̃ changes sign")
    if sd > 0:
        parts.append("δ̃ changes sign")
    return sg == 0 and sd == 0, max(sg, sd), "; ".join(parts) or "γ̃ and δ̃ each keep one sign"


def _eq4(s, tol):
    w, g_t, d_t, gamma, delta = _moments(s)
    _require_ratios(s, "eq4_nec_suf", gamma, delta)
    stat = math.fsum(w * (g_t / gamma) * (d_t / delta))
    return stat > STRICT_EPS, stat, "E[(γ̃/γ)(δ̃/δ) | l]"


def _eq6(s, tol):
    w, g_t, d_t, gamma, delta = _moments(s)
    _require_ratios(s, "eq6_pos_cov", gamma, delta)
    cov = covariance_direct(s)
    return cov >= -tol, cov, "Cov(γ̃/γ, δ̃/δ | l)"


def _rational(s, tol):
    w, g_t, d_t, gamma, delta = _moments(s)
    _require_ratios(s, "rational_agents", gamma, delta)
    viol = {}
    for direction in (1, -1):
        viol[direction] = max(_monotone_violation(g_t, direction), _monotone_violation(d_t, direction))
    direction = min(viol, key=lambda d: viol[d])
    monotone = viol[direction] <= tol
    signs_match = sign(gamma) == sign(delta)
    note = (
        f"{'non-decreasing' if direction == 1 else 'non-increasing'} in U order"
        if monotone
        else "γ̃ and δ̃ not co-monotone in U order"
    )
    note += "; sign(γ)=sign(δ)" if signs_match else "; sign(γ)≠sign(δ)"
    return monotone and signs_match, viol[direction], note


_CHECKS: dict[str, Callable] = {
    "cui_a7": _cui_a7,
    "cui_a8": _cui_a8,
    "qiu_a5b1b": _qiu_a5b1b,
    "qiu_a5b2b": _cui_a8,
    "han_a": _han_a,
    "eq4_nec_suf": _eq4,
    "eq6_pos_cov": _eq6,
    "rational_agents": _rational,
}


def check_condition(spec: ScmSpec, name: str, tol: float = DEFAULT_TOL, *, validate: bool = True) -> ConditionReport:
    if name not in _CHECKS:
        raise ValueError(f"unknown condition {name!r}; expected one of {CONDITIONS}")
    if validate:
        validate_spec(spec)
    fn = _CHECKS[name]
    rows = []
    for s in spec.strata:
        ok, diag, note = fn(s, tol)
        rows.append(StratumCheck(s.label, bool(ok), float(diag), note))
    return ConditionReport(name, tuple(rows))


def check_all(spec: ScmSpec, tol: float = DEFAULT_TOL) -> dict[str, ConditionReport]:
    validate_spec(spec)
    return {name: check_condition(spec, name, tol, validate=False) for name in CONDITIONS}


# --------------------------------------------------------------------------
# Implication lattice
# --------------------------------------------------------------------------


@dataclass
class AuditReport:
    passed: bool
    counterexamples: list[dict[str, Any]] = field(default_factory=list)
    edges: tuple[tuple[str, str], ...] = LATTICE

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "edges": [f"{a} => {b}" for a, b in self.edges],
            "counterexamples": self.counterexamples,
        }


def implication_audit(spec: ScmSpec, tol: float = DEFAULT_TOL) -> AuditReport:
    """Check every lattice edge stratum by stratum on ``spec``.

    A counterexample means the implementation (or the tolerance regime) is
    inconsistent with the implication, so it is reported, never hidden.
    """
    reports = check_all(spec, tol)
    bad = []
    for ante, cons in LATTICE:
        for s in spec.strata:
            if reports[ante][s.label].satisfied and not reports[cons][s.label].satisfied:
                bad.append(
                    {
                        "edge": f"{ante} => {cons}",
                        "stratum": s.label,
                        "antecedent_diagnostic": reports[ante][s.label].diagnostic,
                        "consequent_diagnostic": reports[cons][s.label].diagnostic,
                    }
                )
    return AuditReport(not bad, bad)


# --------------------------------------------------------------------------
# Table-1 classifier
# --------------------------------------------------------------------------


@dataclass
class LevelRow:
    level: str
    assumptions: dict[str, Any]
    verification: dict[str, Any]
    identified: bool
    status: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "level": self.level,
            "assumptions": self.assumptions,
            "verification": self.verification,
            "identified": self.identified,
            "status": self.status,
        }


@dataclass
class ClassificationReport:
    levels: list[LevelRow]

    def level(self, name: str) -> LevelRow:
        for row in self.levels:
            if row.level == name:
                return row
        raise KeyError(name)

    @property
    def strongest(self) -> str | None:
        for row in self.levels:
            if row.identified:
                return row.level
        return None

    def to_dict(self) -> dict[str, Any]:
        return {"levels": [r.to_dict() for r in self.levels], "strongest_identified": self.strongest}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _status(assumed: bool, verified: bool) -> tuple[bool, str]:
    if assumed and verified:
        return True, "identified"
    if assumed:
        # an assumption held but the numbers disagree: an implementation bug
        return False, "inconsistent"
    return False, "not identified"


def classify_identification(spec: ScmSpec, tol: float = DEFAULT_TOL, include_bounds: bool = True) -> ClassificationReport:
    reports = check_all(spec, tol)
    table = stratum_estimands(spec)

    # value function: f1 must equal the true value at every regime
    gaps = []
    for regime in all_regimes(spec):
        f1 = policy_objective(spec, regime, "f1")
        v = value_function(spec, regime)
        gaps.append({"regime": regime, "f1": f1, "value": v, "gap": abs(f1 - v)})
    max_gap = max(g["gap"] for g in gaps)
    vf_assumed = reports["cui_a8"].satisfied or reports["qiu_a5b2b"].satisfied
    vf_ok = max_gap <= VERIFY_TOL
    ident, status = _status(vf_assumed, vf_ok)
    value_row = LevelRow(
        "value_function",
        {
            "cui_a8": reports["cui_a8"].satisfied,
            "qiu_a5b2b": reports["qiu_a5b2b"].satisfied,
            "qiu_a5b2a": "structural: holds by model construction",
        },
        {"check": "f1(D) == V(D) for all regimes", "passed": vf_ok, "max_abs_gap": max_gap, "regimes": gaps},
        ident,
        status,
    )

    # CATE: Wald ratio must equal gamma in every stratum
    per = {}
    for r in table:
        gap = None if r.wald is None else abs(r.wald - r.gamma)
        per[r.label] = {"wald": r.wald, "gamma": r.gamma, "gap": gap}
    cate_ok = all(v["gap"] is not None and v["gap"] <= VERIFY_TOL for v in per.values())
    cate_assumed = reports["cui_a7"].satisfied or reports["qiu_a5b1b"].satisfied
    ident, status = _status(cate_assumed, cate_ok)
    cate_row = LevelRow(
        "cate",
        {
            "cui_a7": reports["cui_a7"].satisfied,
            "qiu_a5b1b": reports["qiu_a5b1b"].satisfied,
            "qiu_a5b1a": "structural: holds by model construction",
        },
        {"check": "wald(l) == gamma(l) for all strata", "passed": cate_ok, "strata": per},
        ident,
        status,
    )

    # sign of CATE: Wald sign must match the optimal action
    signs = {r.label: {"d_wald": r.d_wald, "d_star": r.d_star} for r in table}
    sign_ok = all(r.d_star != 0 and r.d_wald == r.d_star for r in table)
    bounds_entry: dict[str, Any] = {"available": False}
    bounds_assumed = False
    if include_bounds and all(s.is_bernoulli for s in spec.strata):
        from .bounds import balke_pearl_bounds

        verdicts = {}
        for s in spec.strata:
            b = balke_pearl_bounds(spec, s.label)
            verdicts[s.label] = {"lower": b.lower, "upper": b.upper, "sign_verdict": b.sign_verdict}
        decisive = all(v["sign_verdict"] != "unidentified" for v in verdicts.values())
        agree = all(
            v["sign_verdict"] == "unidentified" or v["sign_verdict"] == signs[l]["d_star"]
            for l, v in verdicts.items()
        )
        bounds_entry = {"available": True, "decisive": decisive, "agrees_with_d_star": agree, "strata": verdicts}
        bounds_assumed = decisive
    sign_assumed_names = ("han_a", "eq4_nec_suf", "eq6_pos_cov", "rational_agents")
    sign_assumptions = {n: reports[n].satisfied for n in sign_assumed_names}
    sign_assumptions["bounds_exclude_zero"] = bounds_assumed
    wald_route = any(reports[n].satisfied for n in sign_assumed_names)
    if wald_route:
        ident, status = _status(True, sign_ok)
    elif bounds_assumed:
        ident, status = _status(True, bounds_entry["agrees_with_d_star"])
    else:
        ident, status = False, "not identified"
    sign_row = LevelRow(
        "sign_of_cate",
        sign_assumptions,
        {
            "check": "d_wald(l) == d_star(l) for all strata",
            "passed": sign_ok,
            "strata": signs,
            "bounds": bounds_entry,
        },
        ident,
        status,
    )
    return ClassificationReport([value_row, cate_row, sign_row])
