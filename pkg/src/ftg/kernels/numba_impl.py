"""Numba-compiled kernels; contracts documented in numpy_impl.

Loop nests are written so the accumulation dtype follows the inputs (float32
training, float64 checks). Selection ties break toward the lower pitch
index, matching the lexsort order of the numpy backend.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def conv3x3_forward(x, w, b):
    B, Cin, H, W = x.shape
    Cout = w.shape[0]
    y = np.empty((B, Cout, H, W), dtype=x.dtype)
    for n in range(B):
        for co in range(Cout):
            for i in range(H):
                for j in range(W):
                    acc = b[co]
                    for ci in range(Cin):
                        for di in range(-1, 2):
                            ii = i + di
                            if ii < 0 or ii >= H:
                                continue
                            for dj in range(-1, 2):
                                jj = j + dj
                                if jj < 0 or jj >= W:
                                    continue
                                acc += x[n, ci, ii, jj] * w[co, ci, di + 1, dj + 1]
                    y[n, co, i, j] = acc
    return y


@njit(cache=True)
def conv3x3_backward(x, w, gy):
    B, Cin, H, W = x.shape
    Cout = w.shape[0]
    gx = np.zeros(x.shape, dtype=x.dtype)
    gw = np.zeros(w.shape, dtype=w.dtype)
    gb = np.zeros(Cout, dtype=w.dtype)
    for n in range(B):
        for co in range(Cout):
            for i in range(H):
                for j in range(W):
                    g = gy[n, co, i, j]
                    gb[co] += g
                    for ci in range(Cin):
                        for di in range(-1, 2):
                            ii = i + di
                            if ii < 0 or ii >= H:
                                continue
                            for dj in range(-1, 2):
                                jj = j + dj
                                if jj < 0 or jj >= W:
                                    continue
                                gx[n, ci, ii, jj] += w[co, ci, di + 1, dj + 1] * g
                                gw[co, ci, di + 1, dj + 1] += x[n, ci, ii, jj] * g
    return gx, gw, gb


@njit(cache=True)
def rhythm_select(p, candidates, kinds, ns, kappa):
    B, L, P = p.shape
    raise_cells = np.zeros((B, L, P), dtype=np.bool_)
    lower_cells = np.zeros((B, L, P), dtype=np.bool_)
    taken = np.zeros(P, dtype=np.bool_)
    for l in range(L):
        kind = kinds[l]
        if kind == 0:
            continue
        if kind == 3:
            for bi in range(B):
                for h in range(P):
                    lower_cells[bi, l, h] = candidates[l, h]
            continue
        n = ns[l]
        for bi in range(B):
            if kind == 2:                                   # at_least
                deficit = n
                for h in range(P):
                    if candidates[l, h] and p[bi, l, h] >= 0.5:
                        deficit -= 1
                # raise the largest below-threshold candidates, lowest index on ties
                for _ in range(deficit):
                    best = -1
                    best_p = -np.inf
                    for h in range(P):
                        if (candidates[l, h] and p[bi, l, h] < 0.5
                                and not raise_cells[bi, l, h]
                                and p[bi, l, h] > best_p):
                            best = h
                            best_p = p[bi, l, h]
                    raise_cells[bi, l, best] = True
            else:                                           # exactly
                taken[:] = False
                for _ in range(n):
                    best = -1
                    best_cost = np.inf
                    for h in range(P):
                        if not candidates[l, h] or taken[h]:
                            continue
                        ph = p[bi, l, h]
                        if ph < 0.5:
                            cost = 0.5 + kappa - ph
                        else:
                            cost = -(ph - (0.5 - kappa))
                        if cost < best_cost:
                            best = h
                            best_cost = cost
                    taken[best] = True
                    if p[bi, l, best] < 0.5:
                        raise_cells[bi, l, best] = True
                for h in range(P):
                    if candidates[l, h] and not taken[h]:
                        lower_cells[bi, l, h] = True
    return raise_cells, lower_cells
