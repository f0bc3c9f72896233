"""Brute-force slackness oracle, independent of the package.

Works directly on the JSON instance schema (plain dicts) and recomputes
net service rates from scratch, so it shares no code with the simplex
path it is used to cross-check.

The LP max ε s.t. Σφ=1, φ≥0, g_n·φ ≥ λ_n + ε has an optimal vertex with
at most t nonzero φ entries where t is the number of tight rate
constraints (t ≥ 1 at the optimum, t ≤ N).  Enumerating all square
systems (support S, tight set T, |S| = |T|) and keeping the best
feasible solution therefore finds the optimum exactly.
"""
from __future__ import annotations

import itertools

import numpy as np


def net_rate_matrix(inst: dict) -> np.ndarray:
    """g[n, s] = net service rate of queue n under schedule s alone."""
    n_q = inst["n"]
    mu = inst["mu"]
    schedules = inst["schedules"]
    owner = inst["server_queue"]
    trans = inst.get("transitions")
    g = np.zeros((n_q, len(schedules)))
    for s, sigma in enumerate(schedules):
        for k, on in enumerate(sigma):
            if not on:
                continue
            g[owner[k], s] += mu[k]
            if trans is not None:
                for n in range(n_q):
                    g[n, s] -= mu[k] * trans[k][n]
    return g


def arrival_means(inst: dict) -> np.ndarray:
    lam = inst["lambda"]
    if isinstance(lam, dict):
        support = np.asarray(lam["support"], dtype=float)
        probs = np.asarray(lam["probs"], dtype=float)
        return probs @ support
    return np.asarray([float(lam)])


def slackness_by_enumeration(inst: dict) -> float:
    """Max ε with λ + ε1 dominated by some mixture of schedule rates."""
    g = net_rate_matrix(inst)
    lam = arrival_means(inst)
    n_q, n_s = g.shape
    best = -np.inf
    for t in range(1, n_q + 1):
        tights = list(itertools.combinations(range(n_q), t))
        supports = list(itertools.combinations(range(n_s), t))
        # Square systems: unknowns (phi_S, eps); rows: sum phi = 1 and
        # g_n · phi - eps = lam_n for n in T.  Batched for speed.
        mats = np.zeros((len(tights) * len(supports), t + 1, t + 1))
        rhss = np.zeros((len(tights) * len(supports), t + 1))
        idx = 0
        combos = []
        for T in tights:
            for S in supports:
                mats[idx, 0, :t] = 1.0
                for i, n in enumerate(T):
                    mats[idx, 1 + i, :t] = g[n, list(S)]
                    mats[idx, 1 + i, t] = -1.0
                rhss[idx, 0] = 1.0
                rhss[idx, 1:] = lam[list(T)]
                combos.append(S)
                idx += 1
        dets = np.abs(np.linalg.det(mats))
        ok = dets > 1e-10
        if not ok.any():
            continue
        sols = np.linalg.solve(mats[ok], rhss[ok][:, :, None])[:, :, 0]
        for sol, S in zip(sols, [c for c, o in zip(combos, ok) if o]):
            phi_s, eps = sol[:-1], sol[-1]
            if eps <= best:
                continue
            if (phi_s < -1e-9).any():
                continue
            rates = g[:, list(S)] @ phi_s
            if (rates >= lam + eps - 1e-9).all():
                best = eps
    # Point mass on every schedule is always feasible with
    # eps = min_n (g_n - lam_n); covers degenerate cases the square
    # systems might miss (e.g. duplicated columns).
    for s in range(n_s):
        best = max(best, float((g[:, s] - lam).min()))
    return float(best)
