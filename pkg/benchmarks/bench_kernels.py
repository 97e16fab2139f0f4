"""Time the numba kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Compilation happens once before timing; reported figures are the best of
``--repeat`` runs.
"""

import argparse
import time

import numpy as np

from ivregime import _kernels
from ivregime.bounds import _basis_table, cate_coefficients, response_type_polytope
from ivregime.fixtures import spec_a
from ivregime.montecarlo import _tables, chunk_rng
from ivregime.search import SearchConfig, random_spec


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def cases():
    rows, inv, cols = _basis_table()
    c = cate_coefficients()
    cfg = SearchConfig(outcome_mode="bernoulli", seed=1)
    bs = []
    for i in range(50):
        spec = random_spec(cfg, i)
        for s in spec.strata:
            bs.append(np.ascontiguousarray(response_type_polytope(spec, s.label).b_eq[rows]))

    def vertex(impl):
        return lambda: [impl(inv, cols, b, c) for b in bs]

    tables = _tables(spec_a())
    rng = chunk_rng(0, 0)
    n = 1_000_000
    unif = rng.random((n, 5))
    normals = rng.standard_normal(n)

    def draw(impl):
        return lambda: impl(unif, normals, *tables)

    y, l, u, z, a = _kernels.draw_rows_numpy(unif, normals, *tables)

    def moments(impl):
        return lambda: impl(y, l, z, a, 1)

    return [
        (f"vertex_range x{len(bs)}", vertex(_kernels.vertex_range_numpy), vertex(_kernels.vertex_range_numba)),
        (f"draw_rows n={n}", draw(_kernels.draw_rows_numpy), draw(_kernels.draw_rows_numba)),
        (f"moments n={n}", moments(_kernels.moments_numpy), moments(_kernels.moments_numba)),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _kernels.HAS_NUMBA:
        raise SystemExit("numba is not installed")
    print(f"{'kernel':<24}{'numpy (s)':>12}{'numba (s)':>12}{'speedup':>10}")
    for name, np_fn, nb_fn in cases():
        nb_fn()  # compile
        t_np = best_of(np_fn, args.repeat)
        t_nb = best_of(nb_fn, args.repeat)
        print(f"{name:<24}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
