"""Pure-Python/numpy fallbacks for the compiled kernels in ``_ckernels``."""

import numpy as np


def levenshtein(a, b):
    row = list(range(len(b) + 1))
    for i in range(1, len(a) + 1):
        diag, row[0] = row[0], i
        ai = a[i - 1]
        for j in range(1, len(b) + 1):
            up = row[j]
            row[j] = min(up + 1, row[j - 1] + 1, diag + (ai != b[j - 1]))
            diag = up
    return row[-1]


def damerau_levenshtein(a, b):
    """Restricted (optimal string alignment) variant."""
    m = len(b)
    prev2 = [0] * (m + 1)
    prev = list(range(m + 1))
    for i in range(1, len(a) + 1):
        cur = [i] + [0] * m
        for j in range(1, m + 1):
            v = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1]))
            if i > 1 and j > 1 and a[i - 1] == b[j - 2] and a[i - 2] == b[j - 1]:
                v = min(v, prev2[j - 2] + 1)
            cur[j] = v
        prev2, prev = prev, cur
    return prev[m]


def _lcs(a, b):
    row = [0] * (len(b) + 1)
    for i in range(1, len(a) + 1):
        diag = 0
        for j in range(1, len(b) + 1):
            up = row[j]
            if a[i - 1] == b[j - 1]:
                row[j] = diag + 1
            elif row[j - 1] > up:
                row[j] = row[j - 1]
            diag = up
    return row[-1]


def editor_distance(a, b):
    return len(a) + len(b) - 2 * _lcs(a, b)


def similarity_matrices(probes, gallery):
    avg = np.empty((len(probes), len(gallery)))
    levsim = np.empty_like(avg)
    for i, a in enumerate(probes):
        for j, b in enumerate(gallery):
            mx = max(len(a), len(b))
            if mx == 0:
                avg[i, j] = levsim[i, j] = 1.0
                continue
            s_lev = 1.0 - levenshtein(a, b) / mx
            s_dl = 1.0 - damerau_levenshtein(a, b) / mx
            s_ed = 1.0 - editor_distance(a, b) / (len(a) + len(b))
            avg[i, j] = (s_lev + s_dl + s_ed) / 3.0
            levsim[i, j] = s_lev
    return avg, levsim


def _cost_and_h(X, y, w, theta, l2):
    z = X @ theta
    # softplus(-z) = -log h, softplus(z) = -log(1-h)
    e = np.exp(-np.abs(z))
    sp = np.log1p(e)
    pos = z >= 0
    h = np.where(pos, 1.0 / (1.0 + e), e / (1.0 + e))
    loss = np.where(pos, y * sp + (1.0 - y) * (sp + z), y * (sp - z) + (1.0 - y) * sp)
    cost = float(w @ loss)
    if l2 > 0:
        cost += 0.5 * l2 * float(theta[1:] @ theta[1:])
    return cost, h


def logistic_cost(X, y, w, theta, l2=0.0):
    return _cost_and_h(
        np.asarray(X, float), np.asarray(y, float), np.asarray(w, float), np.asarray(theta, float), l2
    )[0]


def gradient_descent(X, y, w, theta0, step, max_iter, tol, l2, max_rejects, grow=1.0, armijo=0.0):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    theta = np.array(theta0, dtype=np.float64, copy=True)
    cost, h = _cost_and_h(X, y, w, theta, l2)
    it, rejects, status = 0, 0, 1
    while it < max_iter:
        g = X.T @ (w * (h - y))
        if l2 > 0:
            g[1:] += l2 * theta[1:]
        gg = float(g @ g)
        while True:
            trial = theta - step * g
            new_cost, new_h = _cost_and_h(X, y, w, trial, l2)
            if new_cost <= cost - armijo * step * gg:
                break
            rejects += 1
            if rejects >= max_rejects:
                status = 0 if new_cost - cost <= tol else 2
                break
            step *= 0.5
        if rejects >= max_rejects:
            break
        it += 1
        halved = rejects > 0
        rejects = 0
        step *= grow
        theta, h = trial, new_h
        if not halved and cost - new_cost < tol:
            cost = new_cost
            status = 0
            break
        cost = new_cost
    return theta, cost, it, status
