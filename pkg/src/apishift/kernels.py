"""Hot loops over flat partition arrays.

Partition ``(i, k)`` lives at flat index ``i * K + k`` so that argmax order is
lexicographic order. State arrays:

    n       (P,)   int64    samples drawn per partition
    mu      (P, L) float64  running predicted-label frequencies
    sigma2  (P,)   float64  running unbiased uncertainty score
    H       (P, L) int64    predicted-label counts

Every function here compiles under numba when enabled and otherwise runs
as ordinary Python on the same arrays.
"""
import math

import numpy as np

from ._accel import jit


@jit
def new_state(P, L):
    n = np.zeros(P, dtype=np.int64)
    mu = np.zeros((P, L), dtype=np.float64)
    sigma2 = np.zeros(P, dtype=np.float64)
    H = np.zeros((P, L), dtype=np.int64)
    return n, mu, sigma2, H


@jit
def observe_update(n, mu, sigma2, H, f, label):
    n[f] += 1
    m = n[f]
    L = mu.shape[1]
    for j in range(L):
        hit = 1.0 if j == label else 0.0
        mu[f, j] += (hit - mu[f, j]) / m
    if m < 2:
        sigma2[f] = 0.0
    else:
        # H[f, label] is still the count before this observation
        s = sigma2[f] + (2.0 / m) * (1.0 - H[f, label] / (m - 1.0) - sigma2[f])
        if s < 0.0:
            s = 0.0
        elif s > 1.0:
            s = 1.0
        sigma2[f] = s
    H[f, label] += 1


@jit
def weighted_score(H, f, m, wsq):
    if m < 2:
        return 0.0
    acc = 0.0
    for j in range(H.shape[1]):
        acc += wsq[f, j] * H[f, j] * (m - H[f, j])
    return acc / (m * (m - 1.0))


@jit
def ucb_select(n, score2, p, a):
    P = n.shape[0]
    for f in range(P):
        if n[f] < 2:
            return f
    best = -1.0
    arg = 0
    for f in range(P):
        m = n[f]
        s = score2[f]
        s = math.sqrt(s) if s > 0.0 else 0.0
        v = p[f] / m * (s + (a / m) ** 0.25)
        if v > best:
            best = v
            arg = f
    return arg


@jit
def sample_label(cdf, f, u):
    L = cdf.shape[1]
    j = 0
    while j < L - 1 and u >= cdf[f, j]:
        j += 1
    return j


@jit
def sigma_width(t, log2d):
    return (log2d / (2.0 * t)) ** 0.25


@jit
def bound_term(p, s2, m, log2d):
    s = math.sqrt(s2) if s2 > 0.0 else 0.0
    u = s + sigma_width(m, log2d)
    if u > 1.0:
        u = 1.0
    return p * p * u * u / m


@jit
def masa_loop(p, cdf, u, a, wsq, weighted):
    """Adaptive allocation loop over ``u.shape[0]`` simulated queries."""
    P, L = cdf.shape
    N = u.shape[0]
    n, mu, sigma2, H = new_state(P, L)
    score2 = np.zeros(P, dtype=np.float64)
    parts = np.empty(N, dtype=np.int64)
    labels = np.empty(N, dtype=np.int64)
    snaps = np.empty(N, dtype=np.float64)
    for t in range(N):
        f = ucb_select(n, score2, p, a)
        lab = sample_label(cdf, f, u[t])
        observe_update(n, mu, sigma2, H, f, lab)
        if weighted:
            score2[f] = weighted_score(H, f, n[f], wsq)
        else:
            score2[f] = sigma2[f]
        parts[t] = f
        labels[t] = lab
        snaps[t] = score2[f]
    return n, mu, sigma2, H, parts, labels, snaps


@jit
def bound_path(parts, snaps, p, log2d):
    """Running loss bound after each query of a trace.

    NaN until every partition holds two samples.
    """
    P = p.shape[0]
    N = parts.shape[0]
    n = np.zeros(P, dtype=np.int64)
    terms = np.zeros(P, dtype=np.float64)
    out = np.full(N, np.nan)
    ready = 0
    for t in range(N):
        f = parts[t]
        n[f] += 1
        m = n[f]
        if m >= 2:
            if m == 2:
                ready += 1
            terms[f] = bound_term(p[f], snaps[t], m, log2d)
            if ready == P:
                out[t] = terms.sum()
    return out


@jit
def first_violation(parts, snaps, sigma_true, log2d):
    """Index of the first query whose score leaves its concentration band, or -1."""
    P = sigma_true.shape[0]
    n = np.zeros(P, dtype=np.int64)
    for t in range(parts.shape[0]):
        f = parts[t]
        n[f] += 1
        m = n[f]
        if m >= 2:
            s = math.sqrt(snaps[t]) if snaps[t] > 0.0 else 0.0
            if abs(s - sigma_true[f]) > sigma_width(m, log2d):
                return t
    return -1


@jit
def draw_labels(parts, cdf, u):
    N = parts.shape[0]
    labels = np.empty(N, dtype=np.int64)
    for t in range(N):
        labels[t] = sample_label(cdf, parts[t], u[t])
    return labels


@jit
def observe_sequence(parts, labels, P, L, wsq, weighted):
    """Fold ``observe_update`` over a given (partition, label) sequence."""
    N = parts.shape[0]
    n, mu, sigma2, H = new_state(P, L)
    snaps = np.empty(N, dtype=np.float64)
    for t in range(N):
        f = parts[t]
        observe_update(n, mu, sigma2, H, f, labels[t])
        if weighted:
            snaps[t] = weighted_score(H, f, n[f], wsq)
        else:
            snaps[t] = sigma2[f]
    return n, mu, sigma2, H, snaps


@jit
def fuse(mu, p, c_old, L, K):
    out = np.empty((L, L), dtype=np.float64)
    for i in range(L):
        for j in range(L):
            acc = 0.0
            for k in range(K):
                f = i * K + k
                acc += p[f] * mu[f, j]
            out[i, j] = acc - c_old[i, j]
    return out
