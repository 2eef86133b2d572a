"""Reference implementations the fast projections are tested against.

The harmonic correction is characterized as the solution of a bound-
constrained least-squares problem, solved here numerically with scipy. The
per-column onset-count projections are characterized by exhaustive subset
enumeration with a quadratic movement cost. Both oracles share the engine's
clamp arithmetic (same expressions, same operation order) so agreement can be
required bitwise where the contract is exactness.
"""

from itertools import combinations

import numpy as np
from scipy.optimize import lsq_linear

from ftg.theory import R_AT_LEAST, R_EXACTLY, R_FREE, R_NONE


def harmonic_bound(x_t: np.ndarray, t: int, sched, kappa: float) -> np.ndarray:
    """Smallest admissible noise value at a cell that must binarize to 0:
    predicted clean value <= 1/2 - kappa."""
    ab = sched.alpha_bar[t]
    return (x_t - np.sqrt(ab) * (0.5 - kappa)) / np.sqrt(1.0 - ab)


def raise_target(x_t: np.ndarray, t: int, sched, kappa: float) -> np.ndarray:
    """Noise value that pins the predicted clean value to 1/2 + kappa."""
    ab = sched.alpha_bar[t]
    return (x_t - np.sqrt(ab) * (0.5 + kappa)) / np.sqrt(1.0 - ab)


def lsq_harmonic_oracle(eps_hat: np.ndarray, x_t: np.ndarray, t: int,
                        mask: np.ndarray, sched, kappa: float) -> np.ndarray:
    """Solve min ||eps - eps_hat||^2 s.t. eps >= bound on masked cells, as a
    scipy bound-constrained least-squares problem on the flattened grid."""
    flat_hat = eps_hat.reshape(-1)
    lb = np.full(flat_hat.size, -np.inf)
    bound = harmonic_bound(x_t, t, sched, kappa)
    lb[mask.reshape(-1)] = bound.reshape(-1)[mask.reshape(-1)]
    res = lsq_linear(np.eye(flat_hat.size), flat_hat,
                     bounds=(lb, np.full(flat_hat.size, np.inf)),
                     method="bvls")
    return res.x.reshape(eps_hat.shape)


def predicted_x0(eps: np.ndarray, x_t: np.ndarray, t: int, sched) -> np.ndarray:
    ab = sched.alpha_bar[t]
    return (x_t - np.sqrt(1.0 - ab) * eps) / np.sqrt(ab)


def enumerate_column(eps_col: np.ndarray, x_col: np.ndarray, t: int,
                     sched, kappa: float, candidates: np.ndarray,
                     kind: int, n: int) -> np.ndarray:
    """Brute-force onset-count projection for one column.

    Candidate cells may be raised (noise assigned so the predicted value is
    exactly 1/2 + kappa) or clamped low (noise floored at the 1/2 - kappa
    bound); every admissible assignment pattern is enumerated and the one
    with the least total squared movement wins, ties to the set with the
    lowest pitch indices.
    """
    cand = np.flatnonzero(candidates)
    p = predicted_x0(eps_col, x_col, t, sched)
    target = raise_target(x_col, t, sched, kappa)
    bound = harmonic_bound(x_col, t, sched, kappa)

    def apply(keep_up: set) -> np.ndarray:
        out = eps_col.copy()
        for h in cand:
            if h in keep_up:
                if p[h] < 0.5:
                    out[h] = target[h]
            else:
                out[h] = max(out[h], bound[h])
        return out

    if kind == R_FREE:
        return eps_col.copy()
    if kind == R_NONE:
        return apply(set())
    if kind == R_AT_LEAST:
        above = {int(h) for h in cand if p[h] >= 0.5}
        deficit = n - len(above)
        if deficit <= 0:
            return eps_col.copy()
        below = [int(h) for h in cand if p[h] < 0.5]
        best_sel, best_cost = None, None
        for sel in combinations(below, deficit):
            cost = sum((0.5 + kappa - p[h]) ** 2 for h in sel)
            key = (cost, tuple(sorted(sel)))
            if best_cost is None or key < best_cost:
                best_cost, best_sel = key, set(sel)
        out = eps_col.copy()
        for h in best_sel:
            out[h] = target[h]
        return out
    assert kind == R_EXACTLY
    best_sel, best_cost = None, None
    for sel in combinations([int(h) for h in cand], n):
        cost = 0.0
        chosen = set(sel)
        for h in cand:
            if h in chosen:
                if p[h] < 0.5:
                    cost += (0.5 + kappa - p[h]) ** 2
            elif p[h] > 0.5 - kappa:
                cost += (p[h] - (0.5 - kappa)) ** 2
        key = (cost, tuple(sorted(chosen)))
        if best_cost is None or key < best_cost:
            best_cost, best_sel = key, chosen
    return apply(best_sel)
