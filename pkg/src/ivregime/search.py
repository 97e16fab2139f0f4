"""Random model generation and predicate-driven witness search."""

from __future__ import annotations

import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from .conditions import CONDITIONS, DEFAULT_TOL, check_condition
from .estimands import ZERO_TOL, stratum_estimands
from .scm import LatentClass, OutcomeModel, ScmSpec, Stratum

LO, HI = 0.05, 0.95
MAX_REDRAWS = 10_000
EQUALITY_MODES = ("auto", "none", "constant_delta", "constant_gamma")
SIGN_ATOMS = ("sign_match", "sign_mismatch")


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SearchConfig:
    n_strata: tuple[int, int] = (1, 3)
    n_latent: tuple[int, int] = (1, 4)
    margin_gamma: float = 1e-3
    margin_delta: float = 1e-3
    outcome_mode: str = "mean"
    mean_range: tuple[float, float] = (-1.0, 1.0)
    budget: int = 1000
    seed: int = 0
    equality_mode: str = "auto"
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        for name in ("n_strata", "n_latent"):
            lo, hi = getattr(self, name)
            if lo < 1 or hi < lo:
                raise ValueError(f"{name} range must satisfy 1 <= min <= max")
        if self.margin_gamma <= 0 or self.margin_delta <= 0:
            raise ValueError("margins must be positive")
        if self.mean_range[0] >= self.mean_range[1]:
            raise ValueError("mean_range must be non-empty")
        if self.outcome_mode not in ("mean", "bernoulli"):
            raise ValueError("outcome_mode must be 'mean' or 'bernoulli'")
        if self.equality_mode not in EQUALITY_MODES:
            raise ValueError(f"equality_mode must be one of {EQUALITY_MODES}")
        if self.budget < 1 or self.seed < 0:
            raise ValueError("budget must be >= 1 and seed >= 0")


# --------------------------------------------------------------------------
# Generation
# --------------------------------------------------------------------------


def _draw_latent(rng, k: int, cfg: SearchConfig, mode: str, label_prefix: str = "u") -> list[LatentClass]:
    probs = rng.dirichlet(np.ones(k))
    pa1 = rng.uniform(LO, HI, k)
    pam1 = rng.uniform(LO, HI, k)
    if mode == "constant_delta":
        d = pa1[0] - pam1[0]
        # keep both compliance probabilities inside [LO, HI]
        lo = max(LO, LO - d)
        hi = min(HI, HI - d)
        pam1[1:] = rng.uniform(lo, hi, k - 1)
        pa1[1:] = pam1[1:] + d
    if cfg.outcome_mode == "bernoulli":
        o1 = rng.uniform(LO, HI, k)
        o0 = rng.uniform(LO, HI, k)
        lo_o, hi_o = LO, HI
    else:
        lo_o, hi_o = cfg.mean_range
        o1 = rng.uniform(lo_o, hi_o, k)
        o0 = rng.uniform(lo_o, hi_o, k)
    if mode == "constant_gamma":
        g = o1[0] - o0[0]
        lo = max(lo_o, lo_o - g)
        hi = min(hi_o, hi_o - g)
        o0[1:] = rng.uniform(lo, hi, k - 1)
        o1[1:] = o0[1:] + g
    out = []
    for j in range(k):
        if cfg.outcome_mode == "bernoulli":
            outcome = OutcomeModel.bernoulli(float(o1[j]), float(o0[j]))
        else:
            outcome = OutcomeModel.mean(float(o1[j]), float(o0[j]))
        out.append(LatentClass(f"{label_prefix}{j}", float(probs[j]), float(pa1[j]), float(pam1[j]), outcome))
    return out


def _margins_ok(stratum: Stratum, cfg: SearchConfig) -> bool:
    a = stratum.arrays
    gamma = float(np.dot(a["w"], a["m1"] - a["mm1"]))
    delta = float(np.dot(a["w"], a["pa1"] - a["pam1"]))
    return abs(gamma) >= cfg.margin_gamma and abs(delta) >= cfg.margin_delta


def random_spec(config: SearchConfig, draw_index: int, equality_mode: str | None = None) -> ScmSpec:
    """Deterministic random model for ``(config.seed, draw_index)``.

    Strata whose gamma or delta fall inside the margins are redrawn.
    """
    mode = config.equality_mode if equality_mode is None else equality_mode
    if mode == "auto":
        mode = "none"
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(draw_index,)))
    n_s = int(rng.integers(config.n_strata[0], config.n_strata[1] + 1))
    probs = rng.dirichlet(np.ones(n_s))
    strata = []
    for i in range(n_s):
        k = int(rng.integers(config.n_latent[0], config.n_latent[1] + 1))
        for _ in range(MAX_REDRAWS):
            st = Stratum(f"l{i}", float(probs[i]), float(rng.uniform(LO, HI)), tuple(_draw_latent(rng, k, config, mode)))
            if _margins_ok(st, config):
                break
        else:
            raise GenerationError(f"draw {draw_index}: margins unsatisfiable after {MAX_REDRAWS} redraws")
        strata.append(st)
    return ScmSpec(tuple(strata))


# --------------------------------------------------------------------------
# Predicates
# --------------------------------------------------------------------------

_TOKEN = re.compile(r"\s*(\(|\)|[A-Za-z_][A-Za-z0-9_]*)")
_ATOMS = set(CONDITIONS) | set(SIGN_ATOMS)


class PredicateError(ValueError):
    pass


@dataclass(frozen=True)
class PredicateExpr:
    """Boolean expression tree: ("atom", name) | ("not", e) | ("and"|"or", a, b)."""

    tree: tuple
    text: str = field(default="", compare=False)

    @classmethod
    def parse(cls, text: str) -> "PredicateExpr":
        tokens = _tokenize(text)
        pos, tree = _parse_or(tokens, 0)
        if pos != len(tokens):
            raise PredicateError(f"unexpected token {tokens[pos]!r} in predicate")
        return cls(tree, text)

    def atoms(self) -> set[str]:
        return _atoms(self.tree)

    def positive_atoms(self) -> set[str]:
        """Atoms that appear under an even number of negations."""
        return _polar_atoms(self.tree, True)

    def evaluate(self, values: dict[str, bool]) -> bool:
        return _eval(self.tree, values)


def _tokenize(text: str) -> list[str]:
    tokens = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise PredicateError(f"cannot parse predicate near {text[pos:]!r}")
        tokens.append(m.group(1))
        pos = m.end()
        while pos < len(text) and text[pos].isspace():
            pos += 1
    if not tokens:
        raise PredicateError("empty predicate")
    return tokens


def _parse_or(t, i):
    i, left = _parse_and(t, i)
    while i < len(t) and t[i].upper() == "OR":
        i, right = _parse_and(t, i + 1)
        left = ("or", left, right)
    return i, left


def _parse_and(t, i):
    i, left = _parse_not(t, i)
    while i < len(t) and t[i].upper() == "AND":
        i, right = _parse_not(t, i + 1)
        left = ("and", left, right)
    return i, left


def _parse_not(t, i):
    if i >= len(t):
        raise PredicateError("predicate ends unexpectedly")
    if t[i].upper() == "NOT":
        i, inner = _parse_not(t, i + 1)
        return i, ("not", inner)
    if t[i] == "(":
        i, inner = _parse_or(t, i + 1)
        if i >= len(t) or t[i] != ")":
            raise PredicateError("unbalanced parentheses in predicate")
        return i + 1, inner
    name = t[i]
    if name not in _ATOMS:
        raise PredicateError(f"unknown condition {name!r} in predicate")
    return i + 1, ("atom", name)


def _atoms(tree) -> set[str]:
    if tree[0] == "atom":
        return {tree[1]}
    return set().union(*(_atoms(x) for x in tree[1:]))


def _polar_atoms(tree, positive: bool) -> set[str]:
    if tree[0] == "atom":
        return {tree[1]} if positive else set()
    if tree[0] == "not":
        return _polar_atoms(tree[1], not positive)
    return _polar_atoms(tree[1], positive) | _polar_atoms(tree[2], positive)


def _eval(tree, values) -> bool:
    op = tree[0]
    if op == "atom":
        return values[tree[1]]
    if op == "not":
        return not _eval(tree[1], values)
    if op == "and":
        return _eval(tree[1], values) and _eval(tree[2], values)
    return _eval(tree[1], values) or _eval(tree[2], values)


def predicate_values(spec: ScmSpec, names: set[str], tol: float = DEFAULT_TOL) -> dict[str, bool]:
    values = {}
    need_signs = names & set(SIGN_ATOMS)
    if need_signs:
        table = stratum_estimands(spec, ZERO_TOL, validate=False)
        match = all(r.d_star != 0 and r.d_wald == r.d_star for r in table)
        values["sign_match"] = match
        values["sign_mismatch"] = any(r.d_wald != r.d_star for r in table)
    for name in names - set(SIGN_ATOMS):
        values[name] = check_condition(spec, name, tol, validate=False).satisfied
    return values


def resolve_equality_mode(config: SearchConfig, predicate: PredicateExpr) -> str:
    """Pick the constructive mode for equality-type atoms the predicate asks for."""
    if config.equality_mode != "auto":
        return config.equality_mode
    pos = predicate.positive_atoms()
    if pos & {"cui_a8", "qiu_a5b2b"}:
        return "constant_delta"
    if "qiu_a5b1b" in pos:
        return "constant_gamma"
    if "cui_a7" in pos:
        return "constant_delta"
    return "none"


# --------------------------------------------------------------------------
# Witness search
# --------------------------------------------------------------------------


@dataclass
class SearchResult:
    found: bool
    draw_index: int | None
    spec: ScmSpec | None
    evaluated: int
    equality_mode: str
    predicate: str

    def sidecar(self, tol: float = DEFAULT_TOL) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "found": self.found,
            "draw_index": self.draw_index,
            "evaluated": self.evaluated,
            "equality_mode": self.equality_mode,
            "predicate": self.predicate,
        }
        if self.spec is not None:
            doc["conditions"] = {
                n: check_condition(self.spec, n, tol).to_dict() for n in CONDITIONS
            }
        return doc


def _test_index(args):
    config, predicate, mode, idx = args
    spec = random_spec(config, idx, mode)
    return predicate.evaluate(predicate_values(spec, predicate.atoms(), config.tol))


def find_witness(config: SearchConfig, predicate: PredicateExpr | str, workers: int = 1) -> SearchResult:
    """First draw index in ``0..budget-1`` whose model satisfies ``predicate``."""
    if isinstance(predicate, str):
        predicate = PredicateExpr.parse(predicate)
    mode = resolve_equality_mode(config, predicate)
    if workers <= 1:
        for idx in range(config.budget):
            if _test_index((config, predicate, mode, idx)):
                return SearchResult(True, idx, random_spec(config, idx, mode), idx + 1, mode, predicate.text)
        return SearchResult(False, None, None, config.budget, mode, predicate.text)
    batch = 64 * workers
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for start in range(0, config.budget, batch):
            idxs = range(start, min(start + batch, config.budget))
            hits = list(pool.map(_test_index, [(config, predicate, mode, i) for i in idxs]))
            for i, hit in zip(idxs, hits):
                if hit:
                    return SearchResult(True, i, random_spec(config, i, mode), i + 1, mode, predicate.text)
    return SearchResult(False, None, None, config.budget, mode, predicate.text)


def with_budget(config: SearchConfig, budget: int) -> SearchConfig:
    return replace(config, budget=budget)
