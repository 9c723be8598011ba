"""Benchmark the compiled graph-search kernels against the NumPy fallback.

Builds one HNSW graph per backend over the same random unit vectors, then
times layer-0 beam searches. Both backends implement identical tie-break
rules, so the recall column should match; the speed ratio is the point.

Usage: python3 benchmarks/bench_kernels.py [--n 10000] [--dim 64] [--queries 200]
"""

import argparse
import time

import numpy as np

import latefuse.retrieval.hnsw as hnsw_mod
from latefuse.retrieval import build_flat, build_hnsw, search_flat, search_hnsw
from latefuse.retrieval.backend import get_backend
from latefuse.store import EmbeddingStore


def run_backend(name, store, queries, exact, args):
    try:
        kernels = get_backend(name)
    except ImportError:
        print(f"{name:>9}: not available (extension not built)")
        return
    # route the module-level kernel hooks through the chosen backend
    hnsw_mod.search_layer = kernels.search_layer
    hnsw_mod.select_heuristic = kernels.select_heuristic

    t0 = time.perf_counter()
    index = build_hnsw(store, m_links=args.m_links,
                       ef_construction=args.ef_construction, seed=0)
    build_s = time.perf_counter() - t0

    t0 = time.perf_counter()
    results = [search_hnsw(index, q, 10, ef_search=args.ef_search)
               for q in queries]
    search_s = time.perf_counter() - t0

    hits = sum(len(exact[i] & {h[0] for h in r.hits})
               for i, r in enumerate(results))
    recall = hits / (len(queries) * 10)
    print(f"{name:>9}: build {build_s:7.2f} s   "
          f"search {search_s / len(queries) * 1e3:6.3f} ms/query   "
          f"recall@10 {recall:.3f}")
    return build_s, search_s


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=10_000)
    parser.add_argument("--dim", type=int, default=64)
    parser.add_argument("--queries", type=int, default=200)
    parser.add_argument("--m-links", type=int, default=16)
    parser.add_argument("--ef-construction", type=int, default=200)
    parser.add_argument("--ef-search", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    matrix = rng.normal(size=(args.n, args.dim)).astype(np.float32)
    store = EmbeddingStore(dim=args.dim, kind="text", normalized=False,
                           ids=[f"d{i:06d}" for i in range(args.n)],
                           matrix=matrix)
    queries = rng.normal(size=(args.queries, args.dim))
    flat = build_flat(store)
    exact = [{h[0] for h in search_flat(flat, q, 10).hits} for q in queries]

    print(f"n={args.n} dim={args.dim} M={args.m_links} "
          f"efc={args.ef_construction} efs={args.ef_search}")
    timings = {}
    for name in ("compiled", "python"):
        out = run_backend(name, store, queries, exact, args)
        if out:
            timings[name] = out
    if len(timings) == 2:
        b_ratio = timings["python"][0] / timings["compiled"][0]
        s_ratio = timings["python"][1] / timings["compiled"][1]
        print(f"  speedup: build {b_ratio:.1f}x, search {s_ratio:.1f}x")


if __name__ == "__main__":
    main()
