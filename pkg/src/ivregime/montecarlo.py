"""Seeded simulation, plug-in estimation and empirical regime learning.

Rows are generated in fixed chunks of :data:`CHUNK` rows.  Chunk ``k``
draws from its own Philox stream keyed by ``(seed, k)``, so a dataset is a
pure function of ``(spec, n, seed)`` however many workers produce it.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from . import _kernels
from .estimands import ZERO_TOL, UndefinedEstimandError, optimal_regime, stratum_estimands, value_function
from .scm import ScmSpec, SpecError, validate_spec

logger = logging.getLogger(__name__)

CHUNK = 4096
METHODS = ("wald_sign", "f1_max", "f2_max", "naive")


class IncompleteStratumError(ValueError):
    pass


@dataclass
class SampleDataset:
    y: np.ndarray
    l: np.ndarray
    a: np.ndarray
    z: np.ndarray
    labels: list[str]
    u: np.ndarray | None = None
    latent_labels: list[list[str]] | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        keep_u = self.u is not None
        w.writerow(["y", "l", "a", "z"] + (["u"] if keep_u else []))
        labels = self.labels
        for i in range(self.n):
            row = [repr(float(self.y[i])), labels[self.l[i]], int(self.a[i]), int(self.z[i])]
            if keep_u:
                row.append(self.latent_labels[self.l[i]][self.u[i]])
            w.writerow(row)
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())


def read_csv(path: str | Path, spec: ScmSpec | None = None) -> SampleDataset:
    """Load a ``y,l,a,z[,u]`` dataset; stratum codes follow ``spec`` order when given."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header not in (["y", "l", "a", "z"], ["y", "l", "a", "z", "u"]):
            raise SpecError(f"{path}: header must be y,l,a,z[,u], got {header}")
        rows = list(reader)
    labels = list(spec.labels) if spec is not None else []
    index = {lab: i for i, lab in enumerate(labels)}
    y = np.empty(len(rows))
    l = np.empty(len(rows), dtype=np.int64)
    a = np.empty(len(rows), dtype=np.int8)
    z = np.empty(len(rows), dtype=np.int8)
    for i, row in enumerate(rows):
        try:
            y[i] = float(row[0])
            a[i] = int(row[2])
            z[i] = int(row[3])
        except (ValueError, IndexError) as exc:
            raise SpecError(f"{path}: bad row {i + 2}: {row}") from exc
        if a[i] not in (1, -1) or z[i] not in (1, -1):
            raise SpecError(f"{path}: row {i + 2}: a and z must be -1 or 1")
        lab = row[1]
        if lab not in index:
            if spec is not None:
                raise SpecError(f"{path}: row {i + 2}: unknown stratum {lab!r}")
            index[lab] = len(labels)
            labels.append(lab)
        l[i] = index[lab]
    return SampleDataset(y, l, a, z, labels)


# --------------------------------------------------------------------------
# Sampling
# --------------------------------------------------------------------------


def _tables(spec: ScmSpec):
    k_max = max(len(s.latent) for s in spec.strata)
    n_s = len(spec.strata)
    strata_cum = np.cumsum([s.prob for s in spec.strata])
    strata_cum[-1] = 1.0
    latent_cum = np.full((n_s, k_max), 2.0)
    p_a_z1 = np.zeros((n_s, k_max))
    p_a_zm1 = np.zeros((n_s, k_max))
    is_bern = np.zeros((n_s, k_max), dtype=np.bool_)
    par1 = np.zeros((n_s, k_max))
    parm1 = np.zeros((n_s, k_max))
    noise = np.zeros((n_s, k_max))
    for i, s in enumerate(spec.strata):
        k = len(s.latent)
        cum = np.cumsum([c.prob for c in s.latent])
        cum[-1] = 1.0
        latent_cum[i, :k] = cum
        for j, c in enumerate(s.latent):
            p_a_z1[i, j] = c.p_a_z1
            p_a_zm1[i, j] = c.p_a_zm1
            is_bern[i, j] = c.outcome.mode == "bernoulli"
            par1[i, j] = c.outcome.mean1
            parm1[i, j] = c.outcome.mean_m1
            noise[i, j] = 0.0 if is_bern[i, j] else c.outcome.noise_sd
    p_z = np.array([s.p_z for s in spec.strata])
    return strata_cum, latent_cum, p_z, p_a_z1, p_a_zm1, is_bern, par1, parm1, noise


def chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(chunk,))))


def _draw_chunk(tables, seed: int, chunk: int, size: int):
    rng = chunk_rng(seed, chunk)
    unif = rng.random((size, 5))
    normals = rng.standard_normal(size)
    return _kernels.draw_rows(unif, normals, *tables)


def sample(spec: ScmSpec, n: int, seed: int, keep_latent: bool = False, workers: int = 1) -> SampleDataset:
    """Draw ``n`` iid observed rows (Y, L, A, Z) from ``spec``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if seed < 0:
        raise ValueError("seed must be non-negative")
    validate_spec(spec)
    tables = _tables(spec)
    n_chunks = -(-n // CHUNK)
    sizes = [min(CHUNK, n - k * CHUNK) for k in range(n_chunks)]
    if workers > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda k: _draw_chunk(tables, seed, k, sizes[k]), range(n_chunks)))
    else:
        parts = [_draw_chunk(tables, seed, k, sizes[k]) for k in range(n_chunks)]
    y, l, u, z, a = (np.concatenate([p[i] for p in parts]) for i in range(5))
    return SampleDataset(
        y=y,
        l=l,
        a=a,
        z=z,
        labels=spec.labels,
        u=u if keep_latent else None,
        latent_labels=[[c.label for c in s.latent] for s in spec.strata] if keep_latent else None,
        meta={"spec_digest": spec.digest(), "seed": seed, "n": n},
    )


# --------------------------------------------------------------------------
# Plug-in estimation
# --------------------------------------------------------------------------

# joint cell index: 2*(z == -1) + (a == -1)
_CELL = {(1, 1): 0, (1, -1): 1, (-1, 1): 2, (-1, -1): 3}


def _mean_var(count: float, s1: float, s2: float) -> tuple[float | None, float | None]:
    if count <= 0:
        return None, None
    mean = s1 / count
    if count < 2:
        return mean, None
    var = max(s2 - count * mean * mean, 0.0) / (count - 1)
    return mean, var


@dataclass(frozen=True)
class EmpiricalStratum:
    label: str
    counts: dict[str, int]
    c_hat: float | None
    delta_hat: float | None
    se_c: float | None
    se_delta: float | None
    wald_hat: float | None
    naive_contrast: float | None
    complete: bool
    # per joint (z, a) cell: count and sum of y; kept for the objective learners
    cell_count: tuple[float, ...] = field(repr=False, default=())
    cell_sum: tuple[float, ...] = field(repr=False, default=())

    def to_dict(self) -> dict[str, Any]:
        return {
            "counts": self.counts,
            "c_hat": self.c_hat,
            "delta_hat": self.delta_hat,
            "se_c": self.se_c,
            "se_delta": self.se_delta,
            "wald_hat": self.wald_hat,
            "naive_contrast": self.naive_contrast,
            "complete": self.complete,
        }


@dataclass(frozen=True)
class EmpiricalEstimands:
    strata: tuple[EmpiricalStratum, ...]

    def __getitem__(self, label: str) -> EmpiricalStratum:
        for s in self.strata:
            if s.label == label:
                return s
        raise KeyError(label)

    def to_dict(self) -> dict[str, Any]:
        return {s.label: s.to_dict() for s in self.strata}


def _stratum_estimates(label: str, mom: np.ndarray) -> EmpiricalStratum:
    cnt = mom[:, 0]
    s1 = mom[:, 1]
    s2 = mom[:, 2]
    n_z = {1: cnt[0] + cnt[1], -1: cnt[2] + cnt[3]}
    n_a = {1: cnt[0] + cnt[2], -1: cnt[1] + cnt[3]}
    counts = {
        "n": int(cnt.sum()),
        "z=1": int(n_z[1]),
        "z=-1": int(n_z[-1]),
        "a=1": int(n_a[1]),
        "a=-1": int(n_a[-1]),
    }
    for (z, a), k in _CELL.items():
        counts[f"z={z},a={a}"] = int(cnt[k])
    complete = n_z[1] > 0 and n_z[-1] > 0
    c_hat = delta_hat = se_c = se_delta = wald = None
    if complete:
        my1, vy1 = _mean_var(n_z[1], s1[0] + s1[1], s2[0] + s2[1])
        my0, vy0 = _mean_var(n_z[-1], s1[2] + s1[3], s2[2] + s2[3])
        c_hat = my1 - my0
        if vy1 is not None and vy0 is not None:
            se_c = math.sqrt(vy1 / n_z[1] + vy0 / n_z[-1])
        p1 = cnt[0] / n_z[1]
        p0 = cnt[2] / n_z[-1]
        delta_hat = float(p1 - p0)
        se_delta = math.sqrt(p1 * (1 - p1) / n_z[1] + p0 * (1 - p0) / n_z[-1])
        if abs(delta_hat) > 0:
            wald = c_hat / delta_hat
    naive = None
    if n_a[1] > 0 and n_a[-1] > 0:
        naive = (s1[0] + s1[2]) / n_a[1] - (s1[1] + s1[3]) / n_a[-1]
    return EmpiricalStratum(
        label,
        counts,
        None if c_hat is None else float(c_hat),
        delta_hat,
        se_c,
        se_delta,
        None if wald is None else float(wald),
        None if naive is None else float(naive),
        bool(complete),
        tuple(float(x) for x in cnt),
        tuple(float(x) for x in s1),
    )


def empirical_estimands(data: SampleDataset) -> EmpiricalEstimands:
    if data.n == 0:
        raise ValueError("dataset is empty")
    n_s = len(data.labels)
    mom = _kernels.moments(
        np.ascontiguousarray(data.y, dtype=np.float64),
        np.ascontiguousarray(data.l, dtype=np.int64),
        np.ascontiguousarray(data.z, dtype=np.int8),
        np.ascontiguousarray(data.a, dtype=np.int8),
        n_s,
    )
    present = np.bincount(data.l, minlength=n_s) > 0
    return EmpiricalEstimands(
        tuple(_stratum_estimates(lab, mom[i]) for i, lab in enumerate(data.labels) if present[i])
    )


# --------------------------------------------------------------------------
# Regime learning
# --------------------------------------------------------------------------


def _pick(label: str, plus: float, minus: float, what: str) -> int:
    if plus == minus:
        logger.warning("stratum %r: empirical tie in %s; choosing +1", label, what)
        return 1
    return 1 if plus > minus else -1


def _objective_scores(st: EmpiricalStratum, method: str, p_z: float | None) -> tuple[float, float]:
    cnt = st.cell_count
    sums = st.cell_sum
    n_l = sum(cnt)
    n_z1 = cnt[0] + cnt[1]
    f = {1: p_z if p_z is not None else n_z1 / n_l}
    f[-1] = 1.0 - f[1]
    scale = 1.0 / (n_l * st.delta_hat)
    scores = {}
    for d in (1, -1):
        if method == "f1_max":
            # sum over rows of Z A Y 1{A=d} / f(Z) = d * sum_z z * S(z, a=d) / f(z)
            tot = sum(z * sums[_CELL[(z, d)]] / f[z] for z in (1, -1))
            scores[d] = d * tot * scale
        else:
            tot = sums[_CELL[(d, 1)]] + sums[_CELL[(d, -1)]]
            scores[d] = tot / f[d] * scale
    return scores[1], scores[-1]


def learn_regime(
    data: SampleDataset,
    method: str,
    pz_known: Mapping[str, float] | None = None,
    estimates: EmpiricalEstimands | None = None,
) -> dict[str, int]:
    """Learn a regime from observed data.

    ``wald_sign`` takes the sign of the plug-in Wald ratio, ``f1_max`` and
    ``f2_max`` maximise the sample analogues of the two weighted objectives
    stratum by stratum, and ``naive`` takes the sign of the unadjusted
    treated-minus-untreated contrast.  Empirical ties resolve to +1.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    est = estimates if estimates is not None else empirical_estimands(data)
    present = {s.label for s in est.strata}
    missing = [lab for lab in data.labels if lab not in present]
    if missing:
        raise IncompleteStratumError(f"strata with no rows: {missing}")
    regime = {}
    for st in est.strata:
        if method == "naive":
            if st.naive_contrast is None:
                raise IncompleteStratumError(f"stratum {st.label!r}: an A-arm is empty")
            regime[st.label] = _pick(st.label, st.naive_contrast, 0.0, "naive contrast")
            continue
        if not st.complete:
            raise IncompleteStratumError(f"stratum {st.label!r}: a Z-arm is empty")
        if abs(st.delta_hat) < ZERO_TOL:
            raise UndefinedEstimandError(f"stratum {st.label!r}: |delta_hat| below {ZERO_TOL}", st.label)
        if method == "wald_sign":
            regime[st.label] = _pick(st.label, st.wald_hat, 0.0, "Wald ratio")
        else:
            p_z = None if pz_known is None else pz_known[st.label]
            plus, minus = _objective_scores(st, method, p_z)
            regime[st.label] = _pick(st.label, plus, minus, method)
    return regime


def evaluate_regret(spec: ScmSpec, regime: Mapping[str, int]) -> float:
    """V(D*) - V(regime) under the true model; never negative."""
    best = optimal_regime(spec, "true_gamma")
    return value_function(spec, best) - value_function(spec, regime)


# --------------------------------------------------------------------------
# Studies
# --------------------------------------------------------------------------


def run_study(
    spec: ScmSpec,
    n: int,
    seeds: Iterable[int],
    methods: Sequence[str] = METHODS,
    use_true_pz: bool = False,
    workers: int = 1,
) -> list[dict[str, Any]]:
    """One record per (seed, method): learned regime, its regret, plug-in estimates."""
    pz = {s.label: s.p_z for s in spec.strata} if use_true_pz else None
    records = []
    for seed in seeds:
        data = sample(spec, n, seed, workers=workers)
        est = empirical_estimands(data)
        for method in methods:
            rec: dict[str, Any] = {"seed": seed, "method": method, "n": n}
            try:
                regime = learn_regime(data, method, pz, est)
                rec["regime"] = regime
                rec["regret"] = evaluate_regret(spec, regime)
            except (IncompleteStratumError, UndefinedEstimandError) as exc:
                rec["regime"] = None
                rec["regret"] = None
                rec["error"] = str(exc)
            rec["estimands"] = est.to_dict()
            records.append(rec)
    return records


def population_naive_contrast(spec: ScmSpec) -> dict[str, float]:
    """E[Y|A=1,l] - E[Y|A=-1,l] under the exact observed law."""
    from .estimands import observed_law

    out = {}
    for s in spec.strata:
        law = observed_law(spec, s.label)
        means = {}
        for a in (1, -1):
            pa = s.p_z * law.p_a[(1, a)] + (1 - s.p_z) * law.p_a[(-1, a)]
            ey = s.p_z * law.ey_joint[(1, a)] + (1 - s.p_z) * law.ey_joint[(-1, a)]
            means[a] = ey / pa
        out[s.label] = means[1] - means[-1]
    return out


def exact_targets(spec: ScmSpec) -> dict[str, dict[str, float]]:
    """Population values that ``empirical_estimands`` converges to."""
    table = stratum_estimands(spec)
    naive = population_naive_contrast(spec)
    return {r.label: {"c": r.c, "delta": r.delta, "naive_contrast": naive[r.label]} for r in table}
