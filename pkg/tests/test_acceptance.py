"""Acceptance criteria, one test per criterion.

Each criterion prints a single ``PASS``/``FAIL`` line.  The lines are also
collected into the pytest terminal summary, and running this file directly
(``python3 tests/test_acceptance.py``) prints them without pytest.
"""

from __future__ import annotations

import contextlib
import io
import json
import math
import sys
from functools import lru_cache
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import oracle  # noqa: E402
from ivregime.bounds import UNIDENTIFIED, balke_pearl_bounds  # noqa: E402
from ivregime.cli import main as cli_main  # noqa: E402
from ivregime.conditions import check_all, check_condition, classify_identification  # noqa: E402
from ivregime.estimands import (  # noqa: E402
    all_regimes,
    argmax_regimes,
    policy_objective,
    stratum_estimands,
    value_function,
)
from ivregime.fixtures import spec_a, spec_b, spec_bin  # noqa: E402
from ivregime.montecarlo import empirical_estimands, evaluate_regret, learn_regime, sample  # noqa: E402
from ivregime.scm import LatentClass, OutcomeModel, ScmSpec, Stratum  # noqa: E402
from ivregime.search import SearchConfig, find_witness, random_spec  # noqa: E402

DATA = Path(__file__).parent / "data"
N_RANDOM = 10_000
LINES: list[str] = []


def record(number: int, ok: bool, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {detail}"
    LINES.append(line)
    print(line)
    return ok


@lru_cache(maxsize=None)
def random_specs() -> tuple[ScmSpec, ...]:
    cfg = SearchConfig(seed=2024)
    return tuple(random_spec(cfg, i) for i in range(N_RANDOM))


@lru_cache(maxsize=None)
def equality_specs() -> tuple[ScmSpec, ...]:
    cfg = SearchConfig(seed=77, n_latent=(2, 4))
    out = []
    for mode in ("constant_delta", "constant_gamma"):
        out.extend(random_spec(cfg, i, mode) for i in range(1000))
    return tuple(out)


def _sign(x: float) -> int:
    return (x > 0) - (x < 0)


# --------------------------------------------------------------------------


def criterion_1() -> bool:
    worst, exceptions, rows = 0.0, 0, 0
    for spec in random_specs():
        for r in stratum_estimands(spec):
            rows += 1
            scale = max(1.0, abs(r.theorem1_stat))
            worst = max(worst, abs(r.wald / r.gamma - r.theorem1_stat) / scale)
            if (_sign(r.wald) == _sign(r.gamma)) != (r.theorem1_stat > 0):
                exceptions += 1
    ok = worst <= 1e-10 and exceptions == 0
    return record(1, ok, f"wald/gamma vs theorem1_stat on {N_RANDOM} specs ({rows} strata): "
                         f"max rel err {worst:.2e} (tol 1e-10), sign exceptions {exceptions}")


def criterion_2() -> bool:
    worst = 0.0
    for spec in random_specs():
        for r in stratum_estimands(spec):
            worst = max(worst, abs(r.cov_form + 1.0 - r.theorem1_stat) / max(1.0, abs(r.theorem1_stat)))
    return record(2, worst <= 1e-10, f"cov_form + 1 vs theorem1_stat: max rel err {worst:.2e} (tol 1e-10)")


def criterion_3() -> bool:
    # the argmax of every objective is sign(C/delta) stratum by stratum; this
    # equals sign(C) only when delta > 0; a negative delta flips it
    cfg = SearchConfig(seed=3, n_strata=(1, 4))
    bad_argmax = bad_gap = neg_delta = 0
    worst_gap = 0.0
    for i in range(1000):
        spec = random_spec(cfg, i)
        table = stratum_estimands(spec)
        keep = [r.label for r in table if abs(r.c) >= 1e-9]
        expected = {r.label: _sign(r.c / r.delta) for r in table if r.label in keep}
        neg_delta += sum(1 for r in table if r.delta < 0)
        sets = []
        for which in ("f1", "f2", "f3"):
            best = argmax_regimes(spec, which)
            sets.append({tuple(sorted((k, v) for k, v in reg.items() if k in keep)) for reg in best})
        want = {tuple(sorted(expected.items()))}
        if not (sets[0] == sets[1] == sets[2] == want):
            bad_argmax += 1
        gaps = [policy_objective(spec, r, "f2") - policy_objective(spec, r, "f1") for r in all_regimes(spec)]
        spread = (max(gaps) - min(gaps)) / max(1.0, max(abs(g) for g in gaps))
        worst_gap = max(worst_gap, spread)
        if spread > 1e-10:
            bad_gap += 1
    ok = bad_argmax == 0 and bad_gap == 0
    return record(3, ok, f"1000 specs (<=4 strata): argmax mismatches {bad_argmax}, "
                         f"f2-f1 spread max {worst_gap:.2e} (tol 1e-10); {neg_delta} delta<0 strata checked via sign(C/delta)")


def criterion_4() -> bool:
    want = {"SPEC-A": (spec_a(), (0.25, 0.1, 0.25, 2.5, 10.0)), "SPEC-B": (spec_b(), (0.25, 0.1, -0.2, -2.0, -8.0))}
    worst = 0.0
    for spec, vals in want.values():
        r = stratum_estimands(spec)["l0"]
        ex = oracle.estimands(spec)["l0"]
        got = (r.gamma, r.delta, r.c, r.wald, r.theorem1_stat)
        exact = tuple(float(ex[k]) for k in ("gamma", "delta", "c", "wald", "theorem1_stat"))
        for g, e, w in zip(got, exact, vals):
            worst = max(worst, abs(g - w), abs(e - w))
    return record(4, worst <= 1e-12, f"SPEC-A/SPEC-B (gamma, delta, C, Wald, stat) vs frozen values and exact oracle: max err {worst:.1e} (tol 1e-12)")


def criterion_5() -> bool:
    rep = check_all(spec_a())
    diag = rep["cui_a7"]["l0"].diagnostic
    local = rep["eq4_nec_suf"].satisfied and not rep["han_a"].satisfied and not rep["cui_a7"].satisfied
    res = find_witness(SearchConfig(seed=0, budget=100_000), "eq4_nec_suf AND NOT han_a AND NOT cui_a7")
    ok = local and abs(diag - 0.225) <= 1e-12 and res.found
    return record(5, ok, f"SPEC-A eq4 ok / han_a violated / cui_a7 violated (diag {diag!r}); "
                         f"witness found={res.found} at draw {res.draw_index}")


EDGES = (("cui_a8", "cui_a7"), ("cui_a7", "eq4_nec_suf"), ("han_a", "eq4_nec_suf"), ("eq6_pos_cov", "eq4_nec_suf"))


def criterion_6() -> bool:
    violations = 0
    fired = {e: 0 for e in EDGES}
    specs = random_specs() + equality_specs()
    for spec in specs:
        rep = check_all(spec)
        for a, b in EDGES:
            for s in spec.strata:
                if rep[a][s.label].satisfied:
                    fired[(a, b)] += 1
                    if not rep[b][s.label].satisfied:
                        violations += 1
    res = find_witness(SearchConfig(seed=0, budget=100_000), "cui_a7 AND NOT eq4_nec_suf")
    ok = violations == 0 and not res.found
    counts = ", ".join(f"{a}=>{b}:{n}" for (a, b), n in fired.items())
    return record(6, ok, f"{len(specs)} specs, edge violations {violations} (antecedent hits {counts}); "
                         f"impossible predicate found={res.found} in {res.evaluated} draws ({res.equality_mode})")


def criterion_7() -> bool:
    cfg = SearchConfig(seed=11, n_latent=(1, 4))
    f1_gap = wald_gap = 0.0
    n_a8 = n_a7 = 0
    for i in range(300):
        spec = random_spec(cfg, i, "constant_delta")
        if check_condition(spec, "cui_a8").satisfied:
            n_a8 += 1
            for reg in all_regimes(spec):
                f1_gap = max(f1_gap, abs(policy_objective(spec, reg, "f1") - value_function(spec, reg)))
        if check_condition(spec, "cui_a7").satisfied:
            n_a7 += 1
            wald_gap = max(wald_gap, max(abs(r.wald - r.gamma) for r in stratum_estimands(spec)))
    rep = classify_identification(spec_a())
    plus = next(g for g in rep.level("value_function").verification["regimes"] if g["regime"] == {"l0": 1})
    cate = rep.level("cate").verification["strata"]["l0"]
    spec_a_ok = (
        rep.strongest == "sign_of_cate"
        and abs(plus["f1"] - 2.0) <= 1e-12 and abs(plus["value"] - 0.5) <= 1e-12
        and abs(cate["wald"] - 2.5) <= 1e-12 and abs(cate["gamma"] - 0.25) <= 1e-12
    )
    ok = n_a8 == 300 and n_a7 == 300 and f1_gap <= 1e-10 and wald_gap <= 1e-10 and spec_a_ok
    return record(7, ok, f"cui_a8 specs {n_a8}: max |f1-V| {f1_gap:.1e}; cui_a7 specs {n_a7}: max |wald-gamma| {wald_gap:.1e}; "
                         f"SPEC-A sign-only (f1(+1)={plus['f1']:.12g} vs V={plus['value']:.12g}, wald={cate['wald']:.12g} vs gamma={cate['gamma']:.12g})")


def _perfect_compliance_spec(i: int) -> ScmSpec:
    base = random_spec(SearchConfig(seed=13, outcome_mode="bernoulli"), i)
    strata = tuple(
        Stratum(s.label, s.prob, s.p_z, tuple(
            LatentClass(c.label, c.prob, 1.0, 0.0, OutcomeModel.bernoulli(c.outcome.p1, c.outcome.pm1)) for c in s.latent
        ))
        for s in base.strata
    )
    return ScmSpec(strata)


def criterion_8() -> bool:
    cfg = SearchConfig(seed=8, outcome_mode="bernoulli")
    outside = wrong_sign = decisive = 0
    for i in range(1000):
        spec = random_spec(cfg, i)
        table = stratum_estimands(spec)
        for s in spec.strata:
            b = balke_pearl_bounds(spec, s.label)
            g = table[s.label].gamma
            if not (b.lower - 1e-12 <= g <= b.upper + 1e-12):
                outside += 1
            if b.sign_verdict != UNIDENTIFIED:
                decisive += 1
                if b.sign_verdict != _sign(g):
                    wrong_sign += 1
    collapse = 0.0
    for i in range(200):
        spec = _perfect_compliance_spec(i)
        table = stratum_estimands(spec)
        for s in spec.strata:
            b = balke_pearl_bounds(spec, s.label)
            collapse = max(collapse, abs(b.lower - table[s.label].gamma), abs(b.upper - table[s.label].gamma))
    bin_b = balke_pearl_bounds(spec_bin(), "l0")
    bin_ok = abs(bin_b.lower - 0.5) <= 1e-10 and abs(bin_b.upper - 0.5) <= 1e-10
    ok = outside == 0 and wrong_sign == 0 and collapse <= 1e-10 and bin_ok
    return record(8, ok, f"1000 bernoulli specs: gamma outside bounds {outside}, wrong decisive verdicts {wrong_sign}/{decisive}; "
                         f"perfect compliance max width-gap {collapse:.1e}; SPEC-BIN [{bin_b.lower:.12g}, {bin_b.upper:.12g}]")


def criterion_9() -> bool:
    spec = spec_a()
    est = empirical_estimands(sample(spec, 1_000_000, seed=3))["l0"]
    z_c = abs(est.c_hat - 0.25) / est.se_c
    z_d = abs(est.delta_hat - 0.1) / est.se_delta
    hits = {m: 0 for m in ("wald_sign", "f1_max", "f2_max")}
    for seed in range(100):
        data = sample(spec, 100_000, seed=seed)
        e = empirical_estimands(data)
        for m in hits:
            hits[m] += learn_regime(data, m, estimates=e) == {"l0": 1}
    b = spec_b()
    reg_b = learn_regime(sample(b, 100_000, seed=0), "wald_sign")
    regret = evaluate_regret(b, reg_b)
    ok = z_c <= 3 and z_d <= 3 and all(v >= 99 for v in hits.values()) and math.isclose(regret, 0.25, abs_tol=1e-12)
    return record(9, ok, f"n=1e6: |c_hat-0.25|={z_c:.2f} SE, |delta_hat-0.1|={z_d:.2f} SE; "
                         f"recoveries/100 {hits}; SPEC-B wald_sign regret {regret!r}")


CLI_CASES = [
    ["validate", "--spec", "spec_a.json"],
    ["estimands", "--spec", "spec_b.json", "--format", "csv"],
    ["check", "--spec", "spec_a.json"],
    ["classify", "--spec", "spec_t.json"],
    ["bounds", "--spec", "spec_bin.json"],
    ["report", "--spec", "spec_bin.json"],
    ["simulate", "--spec", "spec_a.json", "--n", "20000", "--seed", "7", "--keep-latent", "@workers"],
    ["estimate", "--spec", "spec_a.json", "--n", "20000", "--seed", "7", "--replications", "3", "@workers"],
    ["search", "--predicate", "NOT eq4_nec_suf AND sign_mismatch", "--budget", "500", "--seed", "1", "@workers"],
]


def _cli(argv: list[str]) -> tuple[int, str]:
    buf, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(buf), contextlib.redirect_stderr(err):
        code = cli_main(argv)
    return code, buf.getvalue()


def criterion_10() -> bool:
    mismatches = []
    for case in CLI_CASES:
        argv = [str(DATA / a) if a.endswith(".json") else a for a in case if a != "@workers"]
        variants = [argv, argv]
        if "@workers" in case:
            variants += [argv + ["--workers", "3"]]
        outs = [_cli(v) for v in variants]
        if len({o for o in outs}) != 1 or outs[0][0] != 0:
            mismatches.append(case[0])
    return record(10, not mismatches, f"{len(CLI_CASES)} subcommands byte-identical across repeat runs and worker counts; mismatches {mismatches}")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10]


@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"criterion_{i}" for i in range(1, 11)])
def test_acceptance(criterion):
    assert criterion(), LINES[-1]


if __name__ == "__main__":
    results = [c() for c in CRITERIA]
    print(json.dumps({"passed": sum(results), "total": len(results)}))
    sys.exit(0 if all(results) else 1)
