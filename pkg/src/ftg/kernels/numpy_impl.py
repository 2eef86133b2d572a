"""Pure-numpy reference kernels.

Same contracts as the numba backend; used as the fallback and as the
independent implementation for parity tests. Contracts:

conv3x3_forward(x, w, b)
    x (B, Cin, H, W), w (Cout, Cin, 3, 3), b (Cout,) -> y (B, Cout, H, W),
    zero same-padding, correlation orientation, accumulation in the input
    dtype.

conv3x3_backward(x, w, gy) -> (gx, gw, gb)

rhythm_select(p, candidates, kinds, ns, kappa) -> (raise_cells, lower_cells)
    Per-column onset selection on predicted note probabilities
    p (B, L, P). ``candidates`` (L, P) limits which pitches a rule may touch;
    kinds (L,) use the constraint codes 0 free / 1 exactly / 2 at_least /
    3 none; ns (L,) the count for kinds 1-2. Feasibility (n <= candidate
    count) is the caller's job. Returns boolean grids: cells to force toward
    "on" (target 1/2 + kappa) and cells to clamp toward "off"
    (target <= 1/2 - kappa). Ties break toward the lower pitch index.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv3x3_forward(x, w, b):
    B, Cin, H, W = x.shape
    Cout = w.shape[0]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = sliding_window_view(xp, (3, 3), axis=(2, 3))     # (B, Cin, H, W, 3, 3)
    cols = cols.transpose(0, 2, 3, 1, 4, 5).reshape(B, H * W, Cin * 9)
    y = cols @ w.reshape(Cout, -1).T + b
    return y.reshape(B, H, W, Cout).transpose(0, 3, 1, 2)


def conv3x3_backward(x, w, gy):
    B, Cin, H, W = x.shape
    Cout = w.shape[0]
    gb = gy.sum(axis=(0, 2, 3))
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = sliding_window_view(xp, (3, 3), axis=(2, 3))
    cols = cols.transpose(0, 2, 3, 1, 4, 5).reshape(B, H * W, Cin * 9)
    gym = gy.transpose(0, 2, 3, 1).reshape(B, H * W, Cout)
    gw = np.einsum("bxo,bxk->ok", gym, cols).reshape(w.shape)
    # input gradient = correlation of gy with the channel-swapped, flipped kernel
    w_back = np.ascontiguousarray(w.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
    gx = conv3x3_forward(gy, w_back, np.zeros(Cin, dtype=w.dtype))
    return gx, gw, gb


def rhythm_select(p, candidates, kinds, ns, kappa):
    B, L, P = p.shape
    raise_cells = np.zeros((B, L, P), dtype=bool)
    lower_cells = np.zeros((B, L, P), dtype=bool)
    for l in range(L):
        kind = int(kinds[l])
        if kind == 0:
            continue
        if kind == 3:
            lower_cells[:, l, :] = candidates[l]
            continue
        cand_idx = np.flatnonzero(candidates[l])
        n = int(ns[l])
        for bi in range(B):
            col = p[bi, l, cand_idx]
            if kind == 2:                                   # at_least
                deficit = n - int((col >= 0.5).sum())
                if deficit > 0:
                    below = cand_idx[col < 0.5]
                    order = np.lexsort((below, -p[bi, l, below]))
                    raise_cells[bi, l, below[order[:deficit]]] = True
            else:                                           # exactly
                on_cost = np.where(col < 0.5, 0.5 + kappa - col, 0.0)
                off_cost = np.where(col >= 0.5, col - (0.5 - kappa), 0.0)
                order = np.lexsort((cand_idx, on_cost - off_cost))
                sel = cand_idx[order[:n]]
                raise_cells[bi, l, sel[p[bi, l, sel] < 0.5]] = True
                lower_cells[bi, l, cand_idx[order[n:]]] = True
    return raise_cells, lower_cells
