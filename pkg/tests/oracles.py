"""Independent reference computations used by the test-suite.

Nothing here calls into the package's probability or derivative code.
"""

from itertools import product

import numpy as np


def outcome_strings(n, k):
    """All 2**(n*k) success matrices, shape (2**(n*k), n, k)."""
    bits = np.array(list(product((0, 1), repeat=n * k)), dtype=np.int8)
    return bits.reshape(-1, n, k)


def enumerate_exact_at_k(p, k, strings=None):
    """Win probabilities by summing over every outcome string.

    Miner i wins when its single success falls on attempt k and no other
    miner succeeds at all.
    """
    p = np.asarray(p, dtype=float)
    n = p.size
    a = outcome_strings(n, k) if strings is None else strings
    pp = p[None, :, None]
    prob = np.prod(np.where(a == 1, pp, 1.0 - pp), axis=(1, 2))
    total = a.sum(axis=(1, 2))
    q = np.zeros(n)
    for i in range(n):
        win = (total == 1) & (a[:, i, k - 1] == 1)
        q[i] = prob[win].sum()
    return q


def enumerate_first_success(p, k):
    p = np.asarray(p, dtype=float)
    n = p.size
    a = outcome_strings(n, k)
    pp = p[None, :, None]
    prob = np.prod(np.where(a == 1, pp, 1.0 - pp), axis=(1, 2))
    q = np.zeros(n)
    for s in range(a.shape[0]):
        cols = np.flatnonzero(a[s].any(axis=0))
        if cols.size == 0:
            continue
        solvers = np.flatnonzero(a[s][:, cols[0]])
        q[solvers] += prob[s] / solvers.size
    return q


def closed_form_q(c, f, k, i):
    """q_i written out directly from p_j = f c_j / sum(c)."""
    c = np.asarray(c, dtype=float)
    p = f * c / c.sum()
    others = np.prod([(1 - p[j]) ** k for j in range(c.size) if j != i])
    return p[i] * (1 - p[i]) ** (k - 1) * others


def central_diff(fn, x, i, h=None):
    x = np.asarray(x, dtype=float)
    h = max(1e-6 * abs(x[i]), 1e-9) if h is None else h
    up, dn = x.copy(), x.copy()
    up[i] += h
    dn[i] -= h
    return (fn(up) - fn(dn)) / (2 * h)


def brute_force_nash(grid, f, prize, k):
    """Pure grid-Nash profiles of the two-miner game by full enumeration."""
    g = np.asarray(grid, dtype=float)
    m = g.size
    u1 = np.empty((m, m))
    for a in range(m):
        for b in range(m):
            if g[a] + g[b] == 0:
                q = 0.0
            else:
                q = closed_form_q([g[a], g[b]], f, k, 0) if g[a] > 0 else 0.0
            u1[a, b] = prize * q - k * g[a]
    u2 = u1.T  # symmetric game: U_2(c1, c2) = U_1(c2, c1)
    best1 = u1 >= u1.max(axis=0, keepdims=True) - 1e-12
    best2 = u2 >= u2.max(axis=1, keepdims=True) - 1e-12
    return {(g[a], g[b]) for a in range(m) for b in range(m) if best1[a, b] and best2[a, b]}
