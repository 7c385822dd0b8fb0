# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: edit distances, all-pairs biographical similarity,
and full-batch logistic-regression gradient descent.

Every function here has a behaviour-identical twin in ``_pykernels``.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, log1p
from libc.stdlib cimport malloc, free
from libc.stdint cimport uint64_t

cnp.import_array()


cdef inline Py_ssize_t _min3(Py_ssize_t a, Py_ssize_t b, Py_ssize_t c) nogil:
    if b < a:
        a = b
    if c < a:
        a = c
    return a


cdef Py_ssize_t _lev(const int[:] a, const int[:] b, Py_ssize_t* row) nogil:
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0]
    cdef Py_ssize_t i, j, diag, up, cost
    for j in range(m + 1):
        row[j] = j
    for i in range(1, n + 1):
        diag = row[0]
        row[0] = i
        for j in range(1, m + 1):
            up = row[j]
            cost = 0 if a[i - 1] == b[j - 1] else 1
            row[j] = _min3(up + 1, row[j - 1] + 1, diag + cost)
            diag = up
    return row[m]


cdef Py_ssize_t _osa(const int[:] a, const int[:] b, Py_ssize_t* buf) nogil:
    # three rolling rows: prev2, prev, cur
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0]
    cdef Py_ssize_t i, j, cost, v
    cdef Py_ssize_t* prev2 = buf
    cdef Py_ssize_t* prev = buf + (m + 1)
    cdef Py_ssize_t* cur = buf + 2 * (m + 1)
    cdef Py_ssize_t* tmp
    for j in range(m + 1):
        prev[j] = j
    for i in range(1, n + 1):
        cur[0] = i
        for j in range(1, m + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            v = _min3(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
            if i > 1 and j > 1 and a[i - 1] == b[j - 2] and a[i - 2] == b[j - 1]:
                if prev2[j - 2] + 1 < v:
                    v = prev2[j - 2] + 1
            cur[j] = v
        tmp = prev2
        prev2 = prev
        prev = cur
        cur = tmp
    return prev[m]


cdef Py_ssize_t _lcs(const int[:] a, const int[:] b, Py_ssize_t* row) nogil:
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0]
    cdef Py_ssize_t i, j, diag, up
    for j in range(m + 1):
        row[j] = 0
    for i in range(1, n + 1):
        diag = 0
        for j in range(1, m + 1):
            up = row[j]
            if a[i - 1] == b[j - 1]:
                row[j] = diag + 1
            elif row[j - 1] > up:
                row[j] = row[j - 1]
            diag = up
    return row[m]


cdef void _all3(const int[:] a, const int[:] b, Py_ssize_t* buf,
                Py_ssize_t* lev, Py_ssize_t* osa, Py_ssize_t* lcs) nogil:
    # one sweep for all three distances; buf holds 6 rows of len(b) + 1
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0], w = m + 1
    cdef Py_ssize_t i, j, cost, v, ai, bj
    cdef Py_ssize_t* lp = buf
    cdef Py_ssize_t* lc = buf + w
    cdef Py_ssize_t* op2 = buf + 2 * w
    cdef Py_ssize_t* op = buf + 3 * w
    cdef Py_ssize_t* oc = buf + 4 * w
    cdef Py_ssize_t* cp = buf + 5 * w
    cdef Py_ssize_t* cc = buf + 6 * w
    cdef Py_ssize_t* tmp
    for j in range(w):
        lp[j] = j
        op[j] = j
        cp[j] = 0
    for i in range(1, n + 1):
        ai = a[i - 1]
        lc[0] = i
        oc[0] = i
        cc[0] = 0
        for j in range(1, w):
            bj = b[j - 1]
            cost = 0 if ai == bj else 1
            lc[j] = _min3(lp[j] + 1, lc[j - 1] + 1, lp[j - 1] + cost)
            v = _min3(op[j] + 1, oc[j - 1] + 1, op[j - 1] + cost)
            if i > 1 and j > 1 and ai == b[j - 2] and a[i - 2] == bj:
                if op2[j - 2] + 1 < v:
                    v = op2[j - 2] + 1
            oc[j] = v
            if cost == 0:
                cc[j] = cp[j - 1] + 1
            elif cc[j - 1] > cp[j]:
                cc[j] = cc[j - 1]
            else:
                cc[j] = cp[j]
        tmp = lp
        lp = lc
        lc = tmp
        tmp = op2
        op2 = op
        op = oc
        oc = tmp
        tmp = cp
        cp = cc
        cc = tmp
    lev[0] = lp[m]
    osa[0] = op[m]
    lcs[0] = cp[m]


cdef inline int _popcount(uint64_t x) nogil:
    cdef int c = 0
    while x:
        x &= x - 1
        c += 1
    return c


cdef void _bitparallel3(const uint64_t* pm, Py_ssize_t la, const int* b, Py_ssize_t lb,
                        Py_ssize_t* lev, Py_ssize_t* osa, Py_ssize_t* lcs) nogil:
    # Myers/Hyyro Levenshtein, Hyyro OSA and Allison-Dix LCS for 1 <= la <= 64;
    # pm[c] has bit i set where a[i] == c
    cdef uint64_t mask = (<uint64_t> 1) << (la - 1)
    cdef uint64_t full = ~(<uint64_t> 0) if la == 64 else ((<uint64_t> 1) << la) - 1
    cdef uint64_t vp = ~(<uint64_t> 0), vn = 0, d0, hp, hn, x
    cdef uint64_t ovp = ~(<uint64_t> 0), ovn = 0, od0 = 0, tr, pm_old = 0
    cdef uint64_t ls = ~(<uint64_t> 0), u
    cdef Py_ssize_t dl = la, dd = la, j
    for j in range(lb):
        x = pm[b[j]]
        # Levenshtein
        d0 = (((x & vp) + vp) ^ vp) | x | vn
        hp = vn | ~(d0 | vp)
        hn = d0 & vp
        if hp & mask:
            dl += 1
        elif hn & mask:
            dl -= 1
        hp = (hp << 1) | 1
        hn = hn << 1
        vp = hn | ~(d0 | hp)
        vn = hp & d0
        # optimal string alignment
        tr = (((~od0) & x) << 1) & pm_old
        od0 = (((x & ovp) + ovp) ^ ovp) | x | ovn | tr
        hp = ovn | ~(od0 | ovp)
        hn = od0 & ovp
        if hp & mask:
            dd += 1
        elif hn & mask:
            dd -= 1
        hp = (hp << 1) | 1
        hn = hn << 1
        ovp = hn | ~(od0 | hp)
        ovn = hp & od0
        pm_old = x
        # LCS
        u = ls & x
        ls = (ls + u) | (ls - u)
    lev[0] = dl
    osa[0] = dd
    lcs[0] = _popcount((~ls) & full)


def _codes(s):
    return np.fromiter((ord(ch) for ch in s), dtype=np.intc, count=len(s))


def levenshtein(a, b):
    cdef const int[:] ca = _codes(a)
    cdef const int[:] cb = _codes(b)
    cdef Py_ssize_t* row = <Py_ssize_t*> malloc((cb.shape[0] + 1) * sizeof(Py_ssize_t))
    try:
        return _lev(ca, cb, row)
    finally:
        free(row)


def damerau_levenshtein(a, b):
    cdef const int[:] ca = _codes(a)
    cdef const int[:] cb = _codes(b)
    cdef Py_ssize_t* buf = <Py_ssize_t*> malloc(3 * (cb.shape[0] + 1) * sizeof(Py_ssize_t))
    try:
        return _osa(ca, cb, buf)
    finally:
        free(buf)


def editor_distance(a, b):
    cdef const int[:] ca = _codes(a)
    cdef const int[:] cb = _codes(b)
    cdef Py_ssize_t* row = <Py_ssize_t*> malloc((cb.shape[0] + 1) * sizeof(Py_ssize_t))
    try:
        return ca.shape[0] + cb.shape[0] - 2 * _lcs(ca, cb, row)
    finally:
        free(row)


def _alphabet_codes(strings, table):
    out = []
    for s in strings:
        out.append(np.fromiter((table.setdefault(ch, len(table)) for ch in s),
                               dtype=np.intc, count=len(s)))
    return out


def similarity_matrices(probes, gallery):
    """All-pairs (average-impact, Levenshtein-only) similarity matrices.

    Probes of up to 64 characters use 64-bit bit-parallel recurrences; longer
    ones fall back to the row DP.

    Args:
      probes: sequence of canonical strings (rows).
      gallery: sequence of canonical strings (columns).

    Returns:
      Two float64 arrays of shape (len(probes), len(gallery)).
    """
    cdef Py_ssize_t np_ = len(probes), ng = len(gallery)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] avg = np.empty((np_, ng), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] levsim = np.empty((np_, ng), dtype=np.float64)
    table = {}
    pcodes = _alphabet_codes(probes, table)
    gcodes = _alphabet_codes(gallery, table)
    cdef Py_ssize_t sigma = max(len(table), 1)
    lengths = np.array([len(c) for c in gcodes], dtype=np.intp)
    cdef const Py_ssize_t[:] glen = lengths
    cdef const Py_ssize_t[:] goff = np.concatenate([[0], np.cumsum(lengths)]).astype(np.intp)
    flat = np.concatenate(gcodes + [np.zeros(1, dtype=np.intc)]).astype(np.intc)
    cdef const int[:] gflat = flat
    cdef Py_ssize_t maxlen = max(1, int(lengths.max()) if len(lengths) else 1)
    cdef Py_ssize_t* buf = <Py_ssize_t*> malloc(7 * (maxlen + 1) * sizeof(Py_ssize_t))
    cdef uint64_t* pm = <uint64_t*> malloc(sigma * sizeof(uint64_t))
    cdef const int[:] ca
    cdef Py_ssize_t i, j, la, lb, dl, dd, lcs, mx, q
    cdef double s_lev, s_dl, s_ed
    try:
        for i in range(np_):
            ca = pcodes[i]
            la = ca.shape[0]
            if 0 < la <= 64:
                for q in range(sigma):
                    pm[q] = 0
                for q in range(la):
                    pm[ca[q]] |= (<uint64_t> 1) << q
            with nogil:
                for j in range(ng):
                    lb = glen[j]
                    mx = la if la > lb else lb
                    if mx == 0:
                        avg[i, j] = 1.0
                        levsim[i, j] = 1.0
                        continue
                    if la == 0:
                        dl = lb
                        dd = lb
                        lcs = 0
                    elif la <= 64:
                        _bitparallel3(pm, la, &gflat[goff[j]], lb, &dl, &dd, &lcs)
                    else:
                        _all3(ca, gflat[goff[j]:goff[j] + lb], buf, &dl, &dd, &lcs)
                    s_lev = 1.0 - (<double> dl) / mx
                    s_dl = 1.0 - (<double> dd) / mx
                    s_ed = 1.0 - (<double> (la + lb - 2 * lcs)) / (la + lb)
                    avg[i, j] = (s_lev + s_dl + s_ed) / 3.0
                    levsim[i, j] = s_lev
    finally:
        free(buf)
        free(pm)
    return avg, levsim


cdef double _cost(const double[:, :] X, const double[:] y, const double[:] w,
                  const double[:] theta, double l2, double* h) nogil:
    # w: per-row weights summing to 1 (bootstrap multiplicities / n)
    cdef Py_ssize_t n = X.shape[0], p = X.shape[1], i, j
    cdef double z, e, sp, total = 0.0
    for i in range(n):
        z = 0.0
        for j in range(p):
            z += theta[j] * X[i, j]
        # softplus(-z) = -log h, softplus(z) = -log(1-h), from one exp
        e = exp(-fabs(z))
        sp = log1p(e)
        if z >= 0:
            h[i] = 1.0 / (1.0 + e)
            total += w[i] * (y[i] * sp + (1.0 - y[i]) * (sp + z))
        else:
            h[i] = e / (1.0 + e)
            total += w[i] * (y[i] * (sp - z) + (1.0 - y[i]) * sp)
    if l2 > 0:
        z = 0.0
        for j in range(1, p):
            z += theta[j] * theta[j]
        total += 0.5 * l2 * z
    return total


def logistic_cost(X, y, w, theta, double l2=0.0):
    cdef const double[:, :] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[:] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const double[:] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef const double[:] tv = np.ascontiguousarray(theta, dtype=np.float64)
    cdef double* h = <double*> malloc(max(Xv.shape[0], 1) * sizeof(double))
    try:
        return _cost(Xv, yv, wv, tv, l2, h)
    finally:
        free(h)


def gradient_descent(X, y, w, theta0, double step, int max_iter, double tol,
                     double l2, int max_rejects, double grow=1.0, double armijo=0.0):
    """Full-batch gradient descent on the row-weighted logistic cost.

    A step that fails to lower the cost by ``armijo * step * |g|^2`` is
    rejected and the step size halved;
    ``max_rejects`` consecutive rejections end the run, as convergence when
    the last rise is below ``tol`` and as divergence (status 2) otherwise.
    Each accepted step multiplies the step size by ``grow``; the ``tol``
    stopping test only applies to steps taken without halving.

    Returns:
      (theta, cost, iterations, status) where status is 0 for convergence,
      1 for the iteration cap, 2 for divergence.
    """
    cdef const double[:, :] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[:] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const double[:] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t n = Xv.shape[0], p = Xv.shape[1], i, j
    theta_arr = np.array(theta0, dtype=np.float64, copy=True)
    trial_arr = np.empty(p, dtype=np.float64)
    cdef double[:] theta = theta_arr
    cdef double[:] trial = trial_arr
    cdef double* h = <double*> malloc(max(n, 1) * sizeof(double))
    cdef double* g = <double*> malloc(p * sizeof(double))
    cdef double cost, new_cost, r, gg
    cdef int it = 0, rejects = 0, status = 1
    cdef bint halved
    try:
        with nogil:
            cost = _cost(Xv, yv, wv, theta, l2, h)
            while it < max_iter:
                for j in range(p):
                    g[j] = 0.0
                for i in range(n):
                    r = wv[i] * (h[i] - yv[i])
                    for j in range(p):
                        g[j] += r * Xv[i, j]
                if l2 > 0:
                    for j in range(1, p):
                        g[j] += l2 * theta[j]
                gg = 0.0
                for j in range(p):
                    gg += g[j] * g[j]
                while True:
                    for j in range(p):
                        trial[j] = theta[j] - step * g[j]
                    new_cost = _cost(Xv, yv, wv, trial, l2, h)
                    if new_cost <= cost - armijo * step * gg:
                        break
                    rejects += 1
                    if rejects >= max_rejects:
                        # a rounding-level rise after repeated halving means we sit at the optimum
                        status = 0 if new_cost - cost <= tol else 2
                        break
                    step *= 0.5
                if rejects >= max_rejects:
                    break
                it += 1
                halved = rejects > 0
                rejects = 0
                step *= grow
                for j in range(p):
                    theta[j] = trial[j]
                if not halved and cost - new_cost < tol:
                    cost = new_cost
                    status = 0
                    break
                cost = new_cost
    finally:
        free(h)
        free(g)
    return theta_arr, cost, it, status
