# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled graph-search kernels (hot inner loops of HNSW build and query).

Semantics match latefuse.retrieval._kernels_py: descending similarity,
ties broken toward lower node index.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND_NAME = "compiled"


cdef inline bint _better(double s1, int i1, double s2, int i2) nogil:
    return s1 > s2 or (s1 == s2 and i1 < i2)


cdef inline bint _worse(double s1, int i1, double s2, int i2) nogil:
    return s1 < s2 or (s1 == s2 and i1 > i2)


cdef inline double _dot(const float* a, const float* b, int d) nogil:
    cdef double acc = 0.0
    cdef int i
    for i in range(d):
        acc += <double>a[i] * <double>b[i]
    return acc


# Binary heaps over parallel (sim, idx) arrays. flag=1: max-heap by _better
# (candidate set); flag=0: min-heap whose root is the _worse-most element
# (result set).

cdef inline bint _ahead(double s1, int i1, double s2, int i2, bint flag) nogil:
    if flag:
        return _better(s1, i1, s2, i2)
    return _worse(s1, i1, s2, i2)


cdef void _heap_push(double* hs, int* hi, int* n, double s, int idx, bint flag) nogil:
    cdef int i = n[0]
    cdef int p
    hs[i] = s
    hi[i] = idx
    n[0] += 1
    while i > 0:
        p = (i - 1) >> 1
        if _ahead(hs[i], hi[i], hs[p], hi[p], flag):
            hs[i], hs[p] = hs[p], hs[i]
            hi[i], hi[p] = hi[p], hi[i]
            i = p
        else:
            break


cdef void _heap_pop(double* hs, int* hi, int* n, bint flag) nogil:
    cdef int i = 0, c
    n[0] -= 1
    hs[0] = hs[n[0]]
    hi[0] = hi[n[0]]
    while True:
        c = 2 * i + 1
        if c >= n[0]:
            break
        if c + 1 < n[0] and _ahead(hs[c + 1], hi[c + 1], hs[c], hi[c], flag):
            c += 1
        if _ahead(hs[c], hi[c], hs[i], hi[i], flag):
            hs[i], hs[c] = hs[c], hs[i]
            hi[i], hi[c] = hi[c], hi[i]
            i = c
        else:
            break


def search_layer(const float[:, ::1] vecs, const int[:, ::1] adj,
                 const int[::1] deg, const float[::1] q,
                 const int[::1] entries, int ef,
                 int[::1] visited, int epoch):
    """Beam search over one layer; see the fallback backend for the contract."""
    cdef int n = vecs.shape[0]
    cdef int d = vecs.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] cs_a = np.empty(n + 1, dtype=np.float64)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] ci_a = np.empty(n + 1, dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] rs_a = np.empty(ef + 2, dtype=np.float64)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] ri_a = np.empty(ef + 2, dtype=np.int32)
    cdef double* cs = <double*>cnp.PyArray_DATA(cs_a)
    cdef int* ci = <int*>cnp.PyArray_DATA(ci_a)
    cdef double* rs = <double*>cnp.PyArray_DATA(rs_a)
    cdef int* ri = <int*>cnp.PyArray_DATA(ri_a)
    cdef int nc = 0, nr = 0
    cdef int i, j, e, c, k
    cdef double s, c_sim

    for i in range(entries.shape[0]):
        e = entries[i]
        if visited[e] == epoch:
            continue
        visited[e] = epoch
        s = _dot(&vecs[e, 0], &q[0], d)
        _heap_push(cs, ci, &nc, s, e, 1)
        _heap_push(rs, ri, &nr, s, e, 0)
        if nr > ef:
            _heap_pop(rs, ri, &nr, 0)

    while nc > 0:
        c_sim = cs[0]
        c = ci[0]
        _heap_pop(cs, ci, &nc, 1)
        if nr >= ef and _worse(c_sim, c, rs[0], ri[0]):
            break
        for j in range(deg[c]):
            e = adj[c, j]
            if visited[e] == epoch:
                continue
            visited[e] = epoch
            s = _dot(&vecs[e, 0], &q[0], d)
            if nr < ef or _better(s, e, rs[0], ri[0]):
                _heap_push(cs, ci, &nc, s, e, 1)
                _heap_push(rs, ri, &nr, s, e, 0)
                if nr > ef:
                    _heap_pop(rs, ri, &nr, 0)

    cdef cnp.ndarray[cnp.int32_t, ndim=1] out_idx = np.empty(nr, dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out_sim = np.empty(nr, dtype=np.float64)
    k = nr
    while nr > 0:
        k -= 1
        out_sim[k] = rs[0]
        out_idx[k] = ri[0]
        _heap_pop(rs, ri, &nr, 0)
    return out_idx, out_sim


def select_heuristic(const float[:, ::1] vecs, const int[::1] cand_idx,
                     const double[::1] cand_sim, int m):
    """Diversity-aware neighbor selection with keep-pruned fill."""
    cdef int d = vecs.shape[1]
    cdef int nc = cand_idx.shape[0]
    cdef cnp.ndarray[cnp.int32_t, ndim=1] sel_a = np.empty(m, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] pr_a = np.empty(nc, dtype=np.int32)
    cdef int[::1] sel = sel_a
    cdef int[::1] pr = pr_a
    cdef int nsel = 0, npr = 0
    cdef int i, j, e
    cdef double s_q
    cdef bint ok

    for i in range(nc):
        if nsel >= m:
            break
        e = cand_idx[i]
        s_q = cand_sim[i]
        ok = True
        for j in range(nsel):
            if _dot(&vecs[e, 0], &vecs[sel[j], 0], d) > s_q:
                ok = False
                break
        if ok:
            sel[nsel] = e
            nsel += 1
        else:
            pr[npr] = e
            npr += 1
    i = 0
    while nsel < m and i < npr:
        sel[nsel] = pr[i]
        nsel += 1
        i += 1
    return sel_a[:nsel].copy()
