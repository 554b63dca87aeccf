"""Naive loop implementations of every loss, written against plain floats.

These deliberately share no code with :mod:`disploss.losses` or the tensor
engine; they exist to be compared against. The InfoNCE forms follow the
three-line ``log(mean(exp(-D / tau)))`` recipe literally, without a max shift.
"""

from __future__ import annotations

import math


def _rows(Z):
    return [[float(v) for v in row] for row in Z]


def sqdist(a, b):
    return sum((x - y) ** 2 for x, y in zip(a, b))


def dist(a, b):
    return math.sqrt(sqdist(a, b))


def neg_cosine(a, b):
    dot = sum(x * y for x, y in zip(a, b))
    return -dot / (math.sqrt(sum(x * x for x in a)) * math.sqrt(sum(y * y for y in b)))


DISSIM = {"squared_l2": sqdist, "l2": dist, "neg_cosine": neg_cosine}


def pairwise(Z, mode):
    rows = _rows(Z)
    f = DISSIM[mode]
    return [[f(a, b) for b in rows] for a in rows]


def _infonce_mode(variant):
    return "neg_cosine" if variant == "infonce_cosine" else "squared_l2"


def infonce_batch(Z, tau, variant="infonce_l2", include_diagonal=True):
    rows = _rows(Z)
    f = DISSIM[_infonce_mode(variant)]
    total, count = 0.0, 0
    for i, a in enumerate(rows):
        for j, b in enumerate(rows):
            if i == j and not include_diagonal:
                continue
            total += math.exp(-f(a, b) / tau)
            count += 1
    return math.log(total / count)


def infonce_per_sample(Z, i, tau, variant="infonce_l2", include_diagonal=True):
    rows = _rows(Z)
    f = DISSIM[_infonce_mode(variant)]
    terms = [math.exp(-f(rows[i], b) / tau) for j, b in enumerate(rows) if include_diagonal or j != i]
    return math.log(sum(terms) / len(terms))


def hinge(Z, epsilon):
    rows = _rows(Z)
    total, count = 0.0, 0
    for i, a in enumerate(rows):
        for j, b in enumerate(rows):
            if i != j:
                total += max(0.0, epsilon - dist(a, b)) ** 2
                count += 1
    return total / count


def _standardize(rows, eps=0.0):
    n, d = len(rows), len(rows[0])
    out = [[0.0] * d for _ in range(n)]
    for m in range(d):
        col = [r[m] for r in rows]
        mu = sum(col) / n
        var = sum((c - mu) ** 2 for c in col) / n
        sd = math.sqrt(var + eps)
        for k in range(n):
            out[k][m] = (col[k] - mu) / sd
    return out


def _cross_cov(A, B):
    n, d = len(A), len(A[0])
    return [[sum(A[k][m] * B[k][q] for k in range(n)) / n for q in range(d)] for m in range(d)]


def covariance(Z, eps=0.0):
    S = _standardize(_rows(Z), eps)
    C = _cross_cov(S, S)
    return sum(c * c for row in C for c in row)


def contrastive_infonce(Z, Zpos, tau, variant="infonce_l2", include_diagonal=True):
    rows, pos = _rows(Z), _rows(Zpos)
    f = DISSIM[_infonce_mode(variant)]
    total = 0.0
    for i, a in enumerate(rows):
        denom = sum(math.exp(-f(a, b) / tau) for j, b in enumerate(rows) if include_diagonal or j != i)
        total += f(a, pos[i]) / tau + math.log(denom)
    return total / len(rows)


def contrastive_hinge(Z, Zpos, epsilon):
    rows, pos = _rows(Z), _rows(Zpos)
    n = len(rows)
    total = 0.0
    for i, a in enumerate(rows):
        neg = sum(max(0.0, epsilon - dist(a, b)) ** 2 for j, b in enumerate(rows) if j != i)
        total += dist(a, pos[i]) ** 2 + neg / (n - 1)
    return total / n


def contrastive_covariance(Z, Zpos, w, eps=0.0):
    C = _cross_cov(_standardize(_rows(Z), eps), _standardize(_rows(Zpos), eps))
    d = len(C)
    on = sum((1.0 - C[m][m]) ** 2 for m in range(d))
    off = sum(C[m][q] ** 2 for m in range(d) for q in range(d) if m != q)
    return on + w * off


def mse(pred, target):
    p, t = _rows(pred), _rows(target)
    vals = [(a - b) ** 2 for pr, tr in zip(p, t) for a, b in zip(pr, tr)]
    return sum(vals) / len(vals)
