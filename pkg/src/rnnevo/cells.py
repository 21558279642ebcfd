"""Scalar forward and backward passes for each node type.

Every node is a single unit. Its incoming edges are summed (weight times source
output) into one scalar ``x`` before the cell sees it. The cell also sees its
own previous state: ``(h, c)`` where ``c`` is only meaningful for LSTM cells.

Adopted formulations, per unit, with ``s`` the logistic sigmoid:

simple   y = tanh(x + b)                                        [b]
delta    Ororbia et al. 2017, "Learning simpler language models with the
         differential state framework", the gated Delta-RNN with scalar
         mixing coefficients:
           vh = v*h ; z = tanh(alpha*vh*x + beta1*vh + beta2*x + bz)
           r  = s(x + br) ; h' = tanh((1 - r)*z + r*h)
                                           [alpha, beta1, beta2, v, br, bz]
gru      Cho et al. 2014 / Chung et al. 2014:
           z = s(wz x + uz h + bz) ; r = s(wr x + ur h + br)
           n = tanh(wh x + uh (r h) + bh) ; h' = (1 - z) h + z n
                                      [wz, uz, bz, wr, ur, br, wh, uh, bh]
lstm     Hochreiter & Schmidhuber 1997 with the Gers et al. 2000 forget gate:
           i,f,o = s(w x + u h + b) ; g = tanh(wg x + ug h + bg)
           c' = f c + i g ; h' = o tanh(c')
                          [wi, ui, bi, wf, uf, bf, wo, uo, bo, wg, ug, bg]
mgu      Zhou et al. 2016:
           f = s(wf x + uf h + bf) ; n = tanh(wh x + uh (f h) + bh)
           h' = (1 - f) h + f n                   [wf, uf, bf, wh, uh, bh]
ugrnn    Collins et al. 2017:
           c = wc x + uc h + bc ; g = s(wg x + ug h + bg)
           h' = g h + (1 - g) tanh(c)             [wc, uc, bc, wg, ug, bg]

The same equations are compiled into the extension kernel; keep both in step.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

from .genome import CELL_PARAM_COUNT, CELL_TYPES

# index of the forget-gate bias for cells that have one
FORGET_BIAS_INDEX = {"lstm": 5, "mgu": 2}

ZERO_STATE = (0.0, 0.0)


class CellGradients(NamedTuple):
    weights: list[float]
    x: float
    prev_state: tuple[float, float]


def sigmoid(a: float) -> float:
    if a >= 0:
        return 1.0 / (1.0 + math.exp(-a))
    e = math.exp(a)
    return e / (1.0 + e)


def _check(cell_type: str, weights: Sequence[float]) -> None:
    if cell_type not in CELL_PARAM_COUNT:
        raise ValueError(f"unknown cell type {cell_type!r}")
    if len(weights) != CELL_PARAM_COUNT[cell_type]:
        raise ValueError(f"{cell_type} takes {CELL_PARAM_COUNT[cell_type]} weights, "
                         f"got {len(weights)}")


def cell_forward(cell_type: str, weights: Sequence[float], x: float,
                 prev_state: tuple[float, float] = ZERO_STATE) -> tuple[float, tuple[float, float]]:
    """Advance one cell by one step. Returns (output, new_state)."""
    _check(cell_type, weights)
    h, c = prev_state
    w = weights
    tanh = math.tanh
    if cell_type == "simple":
        y = tanh(x + w[0])
        return y, (y, 0.0)
    if cell_type == "delta_rnn":
        alpha, beta1, beta2, v, br, bz = w
        vh = v * h
        z = tanh(alpha * vh * x + beta1 * vh + beta2 * x + bz)
        r = sigmoid(x + br)
        y = tanh((1.0 - r) * z + r * h)
        return y, (y, 0.0)
    if cell_type == "gru":
        z = sigmoid(w[0] * x + w[1] * h + w[2])
        r = sigmoid(w[3] * x + w[4] * h + w[5])
        n = tanh(w[6] * x + w[7] * r * h + w[8])
        y = (1.0 - z) * h + z * n
        return y, (y, 0.0)
    if cell_type == "lstm":
        i = sigmoid(w[0] * x + w[1] * h + w[2])
        f = sigmoid(w[3] * x + w[4] * h + w[5])
        o = sigmoid(w[6] * x + w[7] * h + w[8])
        g = tanh(w[9] * x + w[10] * h + w[11])
        c2 = f * c + i * g
        y = o * tanh(c2)
        return y, (y, c2)
    if cell_type == "mgu":
        f = sigmoid(w[0] * x + w[1] * h + w[2])
        n = tanh(w[3] * x + w[4] * f * h + w[5])
        y = (1.0 - f) * h + f * n
        return y, (y, 0.0)
    # ugrnn
    tc = tanh(w[0] * x + w[1] * h + w[2])
    g = sigmoid(w[3] * x + w[4] * h + w[5])
    y = g * h + (1.0 - g) * tc
    return y, (y, 0.0)


def cell_backward(cell_type: str, weights: Sequence[float], x: float,
                  prev_state: tuple[float, float],
                  grad_state: tuple[float, float]) -> CellGradients:
    """Gradients of one cell step.

    ``grad_state`` is (dL/dh', dL/dc') for the state this step produced; dL/dh'
    must already include any gradient flowing into the cell's output. The step
    is recomputed from ``(x, prev_state)`` rather than cached.
    """
    _check(cell_type, weights)
    h, c = prev_state
    dh, dc = grad_state
    w = weights
    tanh = math.tanh
    if cell_type == "simple":
        y = tanh(x + w[0])
        da = dh * (1.0 - y * y)
        return CellGradients([da], da, (0.0, 0.0))

    if cell_type == "delta_rnn":
        alpha, beta1, beta2, v, br, bz = w
        vh = v * h
        z = tanh(alpha * vh * x + beta1 * vh + beta2 * x + bz)
        r = sigmoid(x + br)
        y = tanh((1.0 - r) * z + r * h)
        du = dh * (1.0 - y * y)
        dz = du * (1.0 - r)
        dr = du * (h - z)
        daz = dz * (1.0 - z * z)
        dvh = daz * (alpha * x + beta1)
        dar = dr * r * (1.0 - r)
        gw = [daz * vh * x, daz * vh, daz * x, dvh * h, dar, daz]
        dx = daz * (alpha * vh + beta2) + dar
        dh_prev = du * r + dvh * v
        return CellGradients(gw, dx, (dh_prev, 0.0))

    if cell_type == "gru":
        z = sigmoid(w[0] * x + w[1] * h + w[2])
        r = sigmoid(w[3] * x + w[4] * h + w[5])
        n = tanh(w[6] * x + w[7] * r * h + w[8])
        dz = dh * (n - h)
        dn = dh * z
        dh_prev = dh * (1.0 - z)
        dan = dn * (1.0 - n * n)
        drh = dan * w[7]
        daz = dz * z * (1.0 - z)
        dar = drh * h * r * (1.0 - r)
        gw = [daz * x, daz * h, daz,
              dar * x, dar * h, dar,
              dan * x, dan * r * h, dan]
        dx = daz * w[0] + dar * w[3] + dan * w[6]
        dh_prev += drh * r + daz * w[1] + dar * w[4]
        return CellGradients(gw, dx, (dh_prev, 0.0))

    if cell_type == "lstm":
        i = sigmoid(w[0] * x + w[1] * h + w[2])
        f = sigmoid(w[3] * x + w[4] * h + w[5])
        o = sigmoid(w[6] * x + w[7] * h + w[8])
        g = tanh(w[9] * x + w[10] * h + w[11])
        c2 = f * c + i * g
        tc = tanh(c2)
        dct = dc + dh * o * (1.0 - tc * tc)
        dai = dct * g * i * (1.0 - i)
        daf = dct * c * f * (1.0 - f)
        dao = dh * tc * o * (1.0 - o)
        dag = dct * i * (1.0 - g * g)
        gw = [dai * x, dai * h, dai,
              daf * x, daf * h, daf,
              dao * x, dao * h, dao,
              dag * x, dag * h, dag]
        dx = dai * w[0] + daf * w[3] + dao * w[6] + dag * w[9]
        dh_prev = dai * w[1] + daf * w[4] + dao * w[7] + dag * w[10]
        return CellGradients(gw, dx, (dh_prev, dct * f))

    if cell_type == "mgu":
        f = sigmoid(w[0] * x + w[1] * h + w[2])
        n = tanh(w[3] * x + w[4] * f * h + w[5])
        df = dh * (n - h)
        dn = dh * f
        dan = dn * (1.0 - n * n)
        dfh = dan * w[4]
        df += dfh * h
        daf = df * f * (1.0 - f)
        gw = [daf * x, daf * h, daf, dan * x, dan * f * h, dan]
        dx = daf * w[0] + dan * w[3]
        dh_prev = dh * (1.0 - f) + dfh * f + daf * w[1]
        return CellGradients(gw, dx, (dh_prev, 0.0))

    tc = tanh(w[0] * x + w[1] * h + w[2])
    g = sigmoid(w[3] * x + w[4] * h + w[5])
    dg = dh * (h - tc)
    dac = dh * (1.0 - g) * (1.0 - tc * tc)
    dag = dg * g * (1.0 - g)
    gw = [dac * x, dac * h, dac, dag * x, dag * h, dag]
    dx = dac * w[0] + dag * w[3]
    dh_prev = dh * g + dac * w[1] + dag * w[4]
    return CellGradients(gw, dx, (dh_prev, 0.0))


def init_cell_weights(cell_type: str, draw, forget_bias_boost: float = 1.0) -> list[float]:
    """Fresh parameters for a newly created cell.

    ``draw()`` supplies each value; cells with a forget gate get
    ``forget_bias_boost`` added to that bias once, here, at creation.
    """
    w = [float(draw()) for _ in range(CELL_PARAM_COUNT[cell_type])]
    if cell_type in FORGET_BIAS_INDEX:
        w[FORGET_BIAS_INDEX[cell_type]] += forget_bias_boost
    return w


__all__ = ["CELL_TYPES", "CellGradients", "FORGET_BIAS_INDEX", "cell_backward",
           "cell_forward", "init_cell_weights", "sigmoid"]
