"""Pure-Python/NumPy graph-search kernels (fallback backend).

Mirrors the compiled kernels in latefuse.retrieval._kernels: same tie-break
rules (higher similarity first, lower node index on equal similarity), so the
two backends build identical graphs for a given seed whenever their float
arithmetic agrees.
"""

from __future__ import annotations

import heapq

import numpy as np

BACKEND_NAME = "python"


def search_layer(vecs, adj, deg, q, entries, ef, visited, epoch):
    """Beam search over one graph layer.

    vecs: (n, d) float32; adj: (n, cap) int32; deg: (n,) int32;
    q: (d,) float32; entries: int32 node indices; visited/epoch: scratch
    stamping array. Returns (idx, sim) arrays of up to ef nodes sorted by
    descending similarity, ties broken toward lower index.
    """
    q64 = q.astype(np.float64)
    cand: list[tuple[float, int]] = []    # max-heap via (-sim, idx)
    res: list[tuple[float, int]] = []     # min-heap via (sim, -idx); root = worst
    for e in entries:
        e = int(e)
        if visited[e] == epoch:
            continue
        visited[e] = epoch
        s = float(vecs[e].astype(np.float64) @ q64)
        heapq.heappush(cand, (-s, e))
        heapq.heappush(res, (s, -e))
        if len(res) > ef:
            heapq.heappop(res)
    while cand:
        neg_s, c = heapq.heappop(cand)
        c_sim = -neg_s
        if len(res) >= ef:
            w_sim, w_negidx = res[0]
            # stop when the best remaining candidate is strictly worse than
            # the worst kept result
            if c_sim < w_sim or (c_sim == w_sim and c > -w_negidx):
                break
        nbrs = adj[c, :deg[c]]
        fresh = nbrs[visited[nbrs] != epoch]
        if fresh.size == 0:
            continue
        visited[fresh] = epoch
        sims = vecs[fresh].astype(np.float64) @ q64
        for i in range(fresh.size):
            e = int(fresh[i])
            s = float(sims[i])
            if len(res) < ef or (s, -e) > res[0]:
                heapq.heappush(cand, (-s, e))
                heapq.heappush(res, (s, -e))
                if len(res) > ef:
                    heapq.heappop(res)
    out = sorted(((s, -negidx) for s, negidx in res), key=lambda t: (-t[0], t[1]))
    idx = np.fromiter((i for _, i in out), dtype=np.int32, count=len(out))
    sim = np.fromiter((s for s, _ in out), dtype=np.float64, count=len(out))
    return idx, sim


def select_heuristic(vecs, cand_idx, cand_sim, m):
    """Neighbor selection: keep a candidate only if it is closer to the query
    than to every already-selected neighbor; fill remaining slots with the
    best pruned candidates (keep-pruned-connections)."""
    selected: list[int] = []
    pruned: list[int] = []
    for i in range(len(cand_idx)):
        if len(selected) >= m:
            break
        e = int(cand_idx[i])
        s_q = float(cand_sim[i])
        ok = True
        ve = vecs[e].astype(np.float64)
        for s in selected:
            if float(ve @ vecs[s].astype(np.float64)) > s_q:
                ok = False
                break
        if ok:
            selected.append(e)
        else:
            pruned.append(e)
    for e in pruned:
        if len(selected) >= m:
            break
        selected.append(e)
    return np.asarray(selected, dtype=np.int32)
