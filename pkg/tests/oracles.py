"""Straight-line reference implementations used as test oracles.

Each one follows the textbook definition loop by loop, with no numpy
tricks, so that it shares no code path with the package.
"""

from __future__ import annotations

import math
from fractions import Fraction


def dm_encode(bits, initial_level=1):
    level, out = initial_level, []
    for b in bits:
        if b == 0:
            level ^= 1          # transition at the start of a 0
        out.append(level)
        level ^= 1              # mandatory mid-bit transition
        out.append(level)
    return out


def dm_decode(slots, initial_level=1):
    prev, out = initial_level, []
    for i in range(0, len(slots), 2):
        first, second = slots[i], slots[i + 1]
        if first == second:
            raise ValueError("missing mid-bit transition")
        out.append(0 if first != prev else 1)
        prev = second
    return out


def otsu_bin(hist):
    """Exhaustive two-class split with exact rational arithmetic."""
    n = sum(hist)
    best_k, best = None, Fraction(-1)
    for k in range(1, len(hist)):
        n0 = sum(hist[:k])
        n1 = n - n0
        if n0 == 0 or n1 == 0:
            continue
        mu0 = Fraction(sum(i * h for i, h in enumerate(hist[:k])), n0)
        mu1 = Fraction(sum(i * h for i, h in enumerate(hist[k:], start=k)), n1)
        var = Fraction(n0 * n1, n * n) * (mu0 - mu1) ** 2
        if var > best:
            best_k, best = k, var
    return best_k


def overlap_process(labels):
    """Rebuild levels from short/long labels, one symbol at a time."""
    mu, out = 1, []
    for c in labels:
        if c == 1:
            out.append(mu)
            out.append(mu)
        else:
            out.append(mu)
        mu = 1 - mu
    return out


def pearson_distance(r1, r2):
    n = len(r1)
    m1, m2 = math.fsum(r1) / n, math.fsum(r2) / n
    top = math.fsum((a - m1) * (b - m2) for a, b in zip(r1, r2))
    s1 = math.sqrt(math.fsum((a - m1) ** 2 for a in r1))
    s2 = math.sqrt(math.fsum((b - m2) ** 2 for b in r2))
    return 1 - top / (s1 * s2)

