"""Dense two-phase simplex for the small capacity LPs.

Solves max c.x subject to A x = b, x >= 0.  Sized for problems with a
handful of rows and a few thousand columns, which is all the schedule
enumeration ever produces; Bland's rule keeps it cycle-free.
"""
from __future__ import annotations

import numpy as np

_TOL = 1e-10


class InfeasibleError(Exception):
    """The equality system has no nonnegative solution."""


class UnboundedError(Exception):
    """The objective is unbounded above on the feasible set."""


def _pivot(tab: np.ndarray, basis: list[int], row: int, col: int) -> None:
    tab[row] /= tab[row, col]
    for i in range(tab.shape[0]):
        if i != row and abs(tab[i, col]) > 0:
            tab[i] -= tab[i, col] * tab[row]
    basis[row] = col


def _ratio_row(tab: np.ndarray, basis: list[int], col: int, m: int) -> int:
    best, best_ratio = -1, np.inf
    for i in range(m):
        a = tab[i, col]
        if a > _TOL:
            r = tab[i, -1] / a
            # Bland tie-break: smallest basis index among minimal ratios.
            if r < best_ratio - _TOL or (r < best_ratio + _TOL and (best < 0 or basis[i] < basis[best])):
                best, best_ratio = i, r
    return best


def _run(tab: np.ndarray, basis: list[int], costs: np.ndarray, m: int, ncols: int) -> None:
    """Optimize in place; costs are the maximization objective."""
    while True:
        red = costs[basis] @ tab[:m, :ncols] - costs
        col = -1
        for j in range(ncols):
            if red[j] < -_TOL:
                col = j
                break
        if col < 0:
            return
        row = _ratio_row(tab, basis, col, m)
        if row < 0:
            raise UnboundedError(f"column {col} unbounded")
        _pivot(tab, basis, row, col)


def simplex_maximize(c, a_eq, b_eq) -> tuple[np.ndarray, float]:
    """Return (x, value) maximizing c.x over {A x = b, x >= 0}."""
    a = np.asarray(a_eq, dtype=float).copy()
    b = np.asarray(b_eq, dtype=float).copy()
    c = np.asarray(c, dtype=float)
    m, n = a.shape
    neg = b < 0
    a[neg] *= -1
    b[neg] *= -1

    # Phase 1: artificial basis, minimize artificial mass.
    tab = np.zeros((m, n + m + 1))
    tab[:, :n] = a
    tab[:, n:n + m] = np.eye(m)
    tab[:, -1] = b
    basis = list(range(n, n + m))
    phase1 = np.zeros(n + m)
    phase1[n:] = -1.0
    _run(tab, basis, phase1, m, n + m)
    if (phase1[basis] @ tab[:, -1]) < -1e-7:
        raise InfeasibleError("phase 1 left artificial mass")

    # Kick residual artificials out of the basis; a row with no real
    # pivot candidate is redundant and can be dropped.
    keep = []
    for i in range(m):
        if basis[i] < n:
            keep.append(i)
            continue
        piv = next((j for j in range(n) if abs(tab[i, j]) > _TOL), None)
        if piv is not None:
            _pivot(tab, basis, i, piv)
            keep.append(i)
    if len(keep) < m:
        tab = tab[keep]
        basis = [basis[i] for i in keep]
        m = len(keep)

    tab = np.hstack([tab[:, :n], tab[:, -1:]])
    phase2 = c.copy()
    _run(tab, basis, phase2, m, n)

    x = np.zeros(n)
    for i, j in enumerate(basis):
        x[j] = tab[i, -1]
    return x, float(c @ x)
