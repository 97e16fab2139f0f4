"""Finite structural causal models with a binary instrument.

A model is a list of covariate strata ``L=l``; each stratum carries the
instrument law ``P(Z=1|l)`` and a finite list of latent classes ``U=u``.
Each latent class fixes the compliance probabilities ``P(A=1|Z=z,l,u)``
and the potential-outcome law of ``Y_1`` and ``Y_{-1}``.  Exclusion and
``Z`` independent of ``U`` given ``L`` hold by construction.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any

import numpy as np

PROB_SUM_TOL = 1e-12
DEFAULT_NOISE_SD = 0.5


class SpecError(ValueError):
    """Malformed spec document or invariant violation."""

    def __init__(self, messages: list[str] | str):
        if isinstance(messages, str):
            messages = [messages]
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


@dataclass(frozen=True)
class OutcomeModel:
    mode: str
    m1: float | None = None
    mm1: float | None = None
    p1: float | None = None
    pm1: float | None = None
    noise_sd: float = DEFAULT_NOISE_SD

    @classmethod
    def mean(cls, m1: float, mm1: float, noise_sd: float = DEFAULT_NOISE_SD) -> "OutcomeModel":
        return cls("mean", m1=float(m1), mm1=float(mm1), noise_sd=float(noise_sd))

    @classmethod
    def bernoulli(cls, p1: float, pm1: float) -> "OutcomeModel":
        return cls("bernoulli", p1=float(p1), pm1=float(pm1))

    @property
    def mean1(self) -> float:
        """E[Y_1 | l, u]; success probability in bernoulli mode."""
        return self.m1 if self.mode == "mean" else self.p1

    @property
    def mean_m1(self) -> float:
        return self.mm1 if self.mode == "mean" else self.pm1

    def to_dict(self) -> dict[str, Any]:
        if self.mode == "mean":
            return {"mode": "mean", "m1": self.m1, "mm1": self.mm1, "noise_sd": self.noise_sd}
        return {"mode": "bernoulli", "p1": self.p1, "pm1": self.pm1}


@dataclass(frozen=True)
class LatentClass:
    label: str
    prob: float
    p_a_z1: float
    p_a_zm1: float
    outcome: OutcomeModel

    @property
    def compliance(self) -> float:
        """delta-tilde: P(A=1|Z=1,l,u) - P(A=1|Z=-1,l,u)."""
        return self.p_a_z1 - self.p_a_zm1

    @property
    def effect(self) -> float:
        """gamma-tilde: E[Y_1 - Y_{-1} | l, u]."""
        return self.outcome.mean1 - self.outcome.mean_m1

    def to_dict(self) -> dict[str, Any]:
        return {
            "label": self.label,
            "prob": self.prob,
            "p_a_z1": self.p_a_z1,
            "p_a_zm1": self.p_a_zm1,
            "outcome": self.outcome.to_dict(),
        }


@dataclass(frozen=True)
class Stratum:
    label: str
    prob: float
    p_z: float
    latent: tuple[LatentClass, ...]

    def __post_init__(self):
        object.__setattr__(self, "latent", tuple(self.latent))

    @cached_property
    def arrays(self) -> dict[str, np.ndarray]:
        """Per-latent-class vectors used by every exact computation."""
        lat = self.latent
        return {
            "w": np.array([c.prob for c in lat], dtype=float),
            "pa1": np.array([c.p_a_z1 for c in lat], dtype=float),
            "pam1": np.array([c.p_a_zm1 for c in lat], dtype=float),
            "m1": np.array([c.outcome.mean1 for c in lat], dtype=float),
            "mm1": np.array([c.outcome.mean_m1 for c in lat], dtype=float),
        }

    @property
    def is_bernoulli(self) -> bool:
        return all(c.outcome.mode == "bernoulli" for c in self.latent)

    def to_dict(self) -> dict[str, Any]:
        return {
            "label": self.label,
            "prob": self.prob,
            "p_z": self.p_z,
            "u": [c.to_dict() for c in self.latent],
        }


@dataclass(frozen=True)
class ScmSpec:
    strata: tuple[Stratum, ...]

    def __post_init__(self):
        object.__setattr__(self, "strata", tuple(self.strata))

    @property
    def labels(self) -> list[str]:
        return [s.label for s in self.strata]

    def stratum(self, label: str) -> Stratum:
        for s in self.strata:
            if s.label == label:
                return s
        raise KeyError(f"unknown stratum {label!r}")

    def to_dict(self) -> dict[str, Any]:
        return {"strata": [s.to_dict() for s in self.strata]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "ScmSpec":
        return _parse_spec(doc)

    @classmethod
    def from_json(cls, text: str) -> "ScmSpec":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecError(f"invalid JSON: {exc}") from exc
        return _parse_spec(doc)


def load_spec(path: str | Path) -> ScmSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SpecError(f"cannot read spec file {path}: {exc.strerror}") from exc
    return ScmSpec.from_json(text)


# --------------------------------------------------------------------------
# Parsing
# --------------------------------------------------------------------------

_STRATUM_KEYS = {"label", "prob", "p_z", "u"}
_LATENT_KEYS = {"label", "prob", "p_a_z1", "p_a_zm1", "outcome"}
_OUTCOME_KEYS = {"mean": {"mode", "m1", "mm1", "noise_sd"}, "bernoulli": {"mode", "p1", "pm1"}}


def _check_keys(obj: Any, allowed: set[str], required: set[str], where: str) -> None:
    if not isinstance(obj, dict):
        raise SpecError(f"{where}: expected an object")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise SpecError(f"{where}: unknown keys {unknown}")
    missing = sorted(required - set(obj))
    if missing:
        raise SpecError(f"{where}: missing keys {missing}")


def _num(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SpecError(f"{where}: expected a number, got {value!r}")
    out = float(value)
    if not math.isfinite(out):
        raise SpecError(f"{where}: non-finite number")
    return out


def _parse_outcome(doc: Any, where: str) -> OutcomeModel:
    if not isinstance(doc, dict) or doc.get("mode") not in _OUTCOME_KEYS:
        raise SpecError(f"{where}: outcome mode must be 'mean' or 'bernoulli'")
    mode = doc["mode"]
    if mode == "mean":
        _check_keys(doc, _OUTCOME_KEYS["mean"], {"mode", "m1", "mm1"}, where)
        sd = _num(doc.get("noise_sd", DEFAULT_NOISE_SD), f"{where}.noise_sd")
        return OutcomeModel.mean(_num(doc["m1"], f"{where}.m1"), _num(doc["mm1"], f"{where}.mm1"), sd)
    _check_keys(doc, _OUTCOME_KEYS["bernoulli"], _OUTCOME_KEYS["bernoulli"], where)
    return OutcomeModel.bernoulli(_num(doc["p1"], f"{where}.p1"), _num(doc["pm1"], f"{where}.pm1"))


def _parse_spec(doc: Any) -> ScmSpec:
    _check_keys(doc, {"strata"}, {"strata"}, "spec")
    if not isinstance(doc["strata"], list) or not doc["strata"]:
        raise SpecError("spec: 'strata' must be a non-empty array")
    strata = []
    for i, sd in enumerate(doc["strata"]):
        where = f"strata[{i}]"
        _check_keys(sd, _STRATUM_KEYS, _STRATUM_KEYS, where)
        if not isinstance(sd["u"], list) or not sd["u"]:
            raise SpecError(f"{where}: 'u' must be a non-empty array")
        latent = []
        for j, ud in enumerate(sd["u"]):
            uw = f"{where}.u[{j}]"
            _check_keys(ud, _LATENT_KEYS, _LATENT_KEYS, uw)
            latent.append(
                LatentClass(
                    label=str(ud["label"]),
                    prob=_num(ud["prob"], f"{uw}.prob"),
                    p_a_z1=_num(ud["p_a_z1"], f"{uw}.p_a_z1"),
                    p_a_zm1=_num(ud["p_a_zm1"], f"{uw}.p_a_zm1"),
                    outcome=_parse_outcome(ud["outcome"], f"{uw}.outcome"),
                )
            )
        strata.append(
            Stratum(
                label=str(sd["label"]),
                prob=_num(sd["prob"], f"{where}.prob"),
                p_z=_num(sd["p_z"], f"{where}.p_z"),
                latent=tuple(latent),
            )
        )
    return ScmSpec(tuple(strata))


# --------------------------------------------------------------------------
# Validation
# --------------------------------------------------------------------------


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def to_dict(self) -> dict[str, Any]:
        return {"valid": self.ok, "errors": list(self.errors), "warnings": list(self.warnings)}


def _in_unit(x: float) -> bool:
    return 0.0 <= x <= 1.0


def collect_violations(spec: ScmSpec, tol_delta: float = 1e-9) -> ValidationReport:
    """List every invariant violation and warning without raising."""
    rep = ValidationReport()
    if not spec.strata:
        rep.errors.append("spec has no strata")
        return rep
    labels = spec.labels
    dup = sorted({x for x in labels if labels.count(x) > 1})
    if dup:
        rep.errors.append(f"duplicate stratum labels {dup}")
    probs = [s.prob for s in spec.strata]
    if any(not (0.0 < p <= 1.0) for p in probs):
        bad = [s.label for s in spec.strata if not (0.0 < s.prob <= 1.0)]
        rep.errors.append(f"stratum probabilities out of (0,1] for {bad}")
    total = math.fsum(probs)
    if abs(total - 1.0) > PROB_SUM_TOL:
        rep.errors.append(f"stratum probabilities sum to {total:.12g}")

    for s in spec.strata:
        tag = f"stratum {s.label!r}"
        if not (0.0 < s.p_z < 1.0):
            rep.errors.append(f"{tag}: p_z={s.p_z:.12g} violates IV positivity 0 < p_z < 1")
        if not s.latent:
            rep.errors.append(f"{tag}: no latent classes")
            continue
        ulabels = [c.label for c in s.latent]
        udup = sorted({x for x in ulabels if ulabels.count(x) > 1})
        if udup:
            rep.errors.append(f"{tag}: duplicate latent labels {udup}")
        for c in s.latent:
            ctag = f"{tag}, class {c.label!r}"
            if not (0.0 < c.prob <= 1.0):
                rep.errors.append(f"{ctag}: latent probability {c.prob:.12g} out of (0,1]")
            for name in ("p_a_z1", "p_a_zm1"):
                v = getattr(c, name)
                if not _in_unit(v):
                    rep.errors.append(f"{ctag}: {name}={v:.12g} out of [0,1]")
            o = c.outcome
            if o.mode == "bernoulli":
                for name in ("p1", "pm1"):
                    v = getattr(o, name)
                    if v is None or not _in_unit(v):
                        rep.errors.append(f"{ctag}: bernoulli {name} out of [0,1]")
                if o.m1 is not None or o.mm1 is not None:
                    rep.errors.append(f"{ctag}: bernoulli outcome carries mean-mode fields")
            elif o.mode == "mean":
                if o.m1 is None or o.mm1 is None:
                    rep.errors.append(f"{ctag}: mean outcome missing m1/mm1")
                if o.p1 is not None or o.pm1 is not None:
                    rep.errors.append(f"{ctag}: mean outcome carries bernoulli fields")
                if not (o.noise_sd >= 0.0):
                    rep.errors.append(f"{ctag}: noise_sd must be >= 0")
            else:
                rep.errors.append(f"{ctag}: unknown outcome mode {o.mode!r}")
        ltotal = math.fsum(c.prob for c in s.latent)
        if abs(ltotal - 1.0) > PROB_SUM_TOL:
            rep.errors.append(f"{tag}: latent probabilities sum to {ltotal:.12g}")

    if rep.ok:
        for s in spec.strata:
            a = s.arrays
            delta = math.fsum(a["w"] * (a["pa1"] - a["pam1"]))
            if abs(delta) <= tol_delta:
                rep.warnings.append(f"stratum {s.label!r}: IV relevance fails: δ(l)={delta:.12g}")
    return rep


def validate_spec(spec: ScmSpec, tol_delta: float = 1e-9) -> ValidationReport:
    """Validate ``spec``; raise :class:`SpecError` on any invariant violation.

    IV-relevance failures are warnings only: the spec is storable but the
    Wald ratio is undefined in the offending strata.
    """
    rep = collect_violations(spec, tol_delta)
    if not rep.ok:
        raise SpecError(rep.errors)
    return rep
