"""Pure-Python sequence kernel, used when the compiled extension is unavailable.

Walks the compiled program one node and one timestep at a time, delegating each
cell step to :mod:`rnnevo.cells`.
"""

from __future__ import annotations

import numpy as np

from .cells import cell_backward, cell_forward
from .genome import CELL_PARAM_COUNT, CELL_TYPES

NAME = "python"

_CELL_NAME = {i + 1: name for i, name in enumerate(CELL_TYPES)}


def _run(prog, params, X):
    T = X.shape[0]
    N = len(prog.kinds)
    w = params.tolist()
    kinds = prog.kinds.tolist()
    poff = prog.poff.tolist()
    ptr = prog.in_ptr.tolist()
    src = prog.in_src.tolist()
    skip = prog.in_skip.tolist()
    widx = prog.in_widx.tolist()
    in_col = prog.in_col.tolist()
    xs = [[0.0] * N for _ in range(T)]
    hs = [[0.0] * N for _ in range(T)]
    cs = [[0.0] * N for _ in range(T)]
    rows = X.tolist()
    for t in range(T):
        xt, ht, ct = xs[t], hs[t], cs[t]
        for n in range(N):
            if kinds[n] == 0:
                ht[n] = rows[t][in_col[n]]
                continue
            a = 0.0
            for k in range(ptr[n], ptr[n + 1]):
                s = skip[k]
                if s == 0:
                    a += w[widx[k]] * ht[src[k]]
                elif t - s >= 0:
                    a += w[widx[k]] * hs[t - s][src[k]]
            xt[n] = a
            prev = (hs[t - 1][n], cs[t - 1][n]) if t > 0 else (0.0, 0.0)
            name = _CELL_NAME[kinds[n]]
            off = poff[n]
            _, (ht[n], ct[n]) = cell_forward(name, w[off:off + CELL_PARAM_COUNT[name]], a, prev)
    return xs, hs, cs


def forward(prog, params, X):
    X = np.asarray(X, dtype=np.float64)
    _, hs, _ = _run(prog, params, X)
    Y = np.zeros((X.shape[0], prog.n_out))
    for n, col in enumerate(prog.out_col.tolist()):
        if col >= 0:
            for t in range(X.shape[0]):
                Y[t, col] = hs[t][n]
    return Y


def loss_grad(prog, params, X, Yt):
    """Mean squared error over every timestep and output, and its full BPTT gradient."""
    X = np.asarray(X, dtype=np.float64)
    Yt = np.asarray(Yt, dtype=np.float64)
    T = X.shape[0]
    N = len(prog.kinds)
    xs, hs, cs = _run(prog, params, X)
    w = params.tolist()
    kinds = prog.kinds.tolist()
    poff = prog.poff.tolist()
    ptr = prog.in_ptr.tolist()
    src = prog.in_src.tolist()
    skip = prog.in_skip.tolist()
    widx = prog.in_widx.tolist()
    out_col = prog.out_col.tolist()
    targets = Yt.tolist()
    scale = 2.0 / (T * prog.n_out)

    loss = 0.0
    dy = [[0.0] * N for _ in range(T)]
    for t in range(T):
        for n in range(N):
            col = out_col[n]
            if col >= 0:
                err = hs[t][n] - targets[t][col]
                loss += err * err
                dy[t][n] = scale * err
    loss /= T * prog.n_out

    grad = [0.0] * len(w)
    carry_h = [0.0] * N
    carry_c = [0.0] * N
    for t in range(T - 1, -1, -1):
        for n in range(N - 1, -1, -1):
            if kinds[n] == 0:
                continue
            name = _CELL_NAME[kinds[n]]
            off = poff[n]
            count = CELL_PARAM_COUNT[name]
            prev = (hs[t - 1][n], cs[t - 1][n]) if t > 0 else (0.0, 0.0)
            g = cell_backward(name, w[off:off + count], xs[t][n], prev,
                              (dy[t][n] + carry_h[n], carry_c[n]))
            for j, v in enumerate(g.weights):
                grad[off + j] += v
            carry_h[n], carry_c[n] = g.prev_state
            da = g.x
            for k in range(ptr[n], ptr[n + 1]):
                s = skip[k]
                ts = t - s
                if ts < 0:
                    continue
                grad[widx[k]] += da * hs[ts][src[k]]
                dy[ts][src[k]] += da * w[widx[k]]
    return loss, np.asarray(grad, dtype=np.float64)
