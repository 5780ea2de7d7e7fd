"""Independent reference implementations used to check the library.

Everything here is written for transparency over speed: exact rational
arithmetic, brute-force enumeration, and O(n^2) scans.  Nothing imports the
code under test.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np


# -- exact LP optimum by basic-solution enumeration ------------------------------


def _frac_solve(M, rhs):
    """Gaussian elimination over Fractions; returns None when singular."""
    n = len(rhs)
    A = [row[:] + [r] for row, r in zip(M, rhs)]
    for col in range(n):
        piv = next((r for r in range(col, n) if A[r][col] != 0), None)
        if piv is None:
            return None
        A[col], A[piv] = A[piv], A[col]
        inv = Fraction(1, 1) / A[col][col]
        A[col] = [v * inv for v in A[col]]
        for r in range(n):
            if r != col and A[r][col] != 0:
                f = A[r][col]
                A[r] = [a - f * b for a, b in zip(A[r], A[col])]
    return [A[r][n] for r in range(n)]


def lp_optimum_exact(c, A, senses, b, maximize=True):
    """Optimal value of max/min c'x s.t. A x (senses) b, x >= 0 by enumerating
    all basic solutions of the slack-augmented equality system.  Returns None
    when no feasible basic solution exists (infeasible LP).  The caller must
    guarantee boundedness (e.g. by including a box constraint)."""
    c = [Fraction(v).limit_denominator(10**9) for v in c]
    b = [Fraction(v).limit_denominator(10**9) for v in b]
    A = [[Fraction(v).limit_denominator(10**9) for v in row] for row in A]
    m, n = len(A), len(c)
    # equality form: append one slack/surplus column per inequality row
    cols = [list(col) for col in zip(*A)]
    for i, s in enumerate(senses):
        if s == "<=":
            cols.append([Fraction(int(r == i)) for r in range(m)])
        elif s == ">=":
            cols.append([Fraction(-int(r == i)) for r in range(m)])
    total = len(cols)
    best = None
    for picks in itertools.combinations(range(total), m):
        M = [[cols[j][r] for j in picks] for r in range(m)]
        sol = _frac_solve(M, b)
        if sol is None or any(v < 0 for v in sol):
            continue
        x = [Fraction(0)] * total
        for j, v in zip(picks, sol):
            x[j] = v
        val = sum(ci * xi for ci, xi in zip(c, x[:n]))
        if best is None or (val > best if maximize else val < best):
            best = val
    return best


# -- brute-force overlap count for fleet-size estimation -------------------------


def max_concurrent_quadratic(intervals):
    """Maximum number of pairwise-overlapping intervals, O(n^2): evaluated at
    every interval start."""
    best = 0
    for s, _ in intervals:
        active = sum(1 for s2, e2 in intervals if s2 <= s < e2)
        best = max(best, active)
    return best


# -- finite differences -----------------------------------------------------------


def central_difference(f, x, h=1e-6):
    """Dense central-difference gradient of scalar f at x."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy(); xp.flat[i] += h
        xm = x.copy(); xm.flat[i] -= h
        g.flat[i] = (f(xp) - f(xm)) / (2 * h)
    return g


# -- charging curve integration ----------------------------------------------------


def curve_band_seconds(curve, lo_pct, hi_pct):
    """Seconds to charge from lo% to hi% by direct per-percent integration."""
    total = 0.0
    prev = 0.0
    for bound, sec_per_pct in curve:
        band_lo = max(prev, lo_pct)
        band_hi = min(bound, hi_pct)
        if band_hi > band_lo:
            total += (band_hi - band_lo) * sec_per_pct
        prev = bound
    return total
