# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled sequence kernel: forward evaluation and BPTT over a compiled program.

Cell equations mirror rnnevo/cells.py exactly; see that module for sources.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, tanh

cnp.import_array()

NAME = "cython"

cdef enum:
    K_INPUT = 0
    K_SIMPLE = 1
    K_DELTA = 2
    K_GRU = 3
    K_LSTM = 4
    K_MGU = 5
    K_UGRNN = 6


cdef inline double sig(double a) noexcept nogil:
    cdef double e
    if a >= 0:
        return 1.0 / (1.0 + exp(-a))
    e = exp(a)
    return e / (1.0 + e)


cdef inline void cell_fwd(int kind, const double* w, double x, double h, double c,
                          double* ho, double* co) noexcept nogil:
    cdef double vh, z, r, n, i, f, o, g, c2, tc
    co[0] = 0.0
    if kind == K_SIMPLE:
        ho[0] = tanh(x + w[0])
    elif kind == K_DELTA:
        vh = w[3] * h
        z = tanh(w[0] * vh * x + w[1] * vh + w[2] * x + w[5])
        r = sig(x + w[4])
        ho[0] = tanh((1.0 - r) * z + r * h)
    elif kind == K_GRU:
        z = sig(w[0] * x + w[1] * h + w[2])
        r = sig(w[3] * x + w[4] * h + w[5])
        n = tanh(w[6] * x + w[7] * r * h + w[8])
        ho[0] = (1.0 - z) * h + z * n
    elif kind == K_LSTM:
        i = sig(w[0] * x + w[1] * h + w[2])
        f = sig(w[3] * x + w[4] * h + w[5])
        o = sig(w[6] * x + w[7] * h + w[8])
        g = tanh(w[9] * x + w[10] * h + w[11])
        c2 = f * c + i * g
        co[0] = c2
        ho[0] = o * tanh(c2)
    elif kind == K_MGU:
        f = sig(w[0] * x + w[1] * h + w[2])
        n = tanh(w[3] * x + w[4] * f * h + w[5])
        ho[0] = (1.0 - f) * h + f * n
    else:
        tc = tanh(w[0] * x + w[1] * h + w[2])
        g = sig(w[3] * x + w[4] * h + w[5])
        ho[0] = g * h + (1.0 - g) * tc


cdef inline void cell_bwd(int kind, const double* w, double x, double h, double c,
                          double dh, double dc, double* gw,
                          double* dx, double* dhp, double* dcp) noexcept nogil:
    """Accumulates weight gradients into gw; writes dx and previous-state grads."""
    cdef double vh, z, r, y, du, dz, dr, daz, dvh, dar
    cdef double n, dn, dan, drh, i, f, o, g, c2, tc, dct, dai, daf, dao, dag
    cdef double df, dfh, dg, dac
    dcp[0] = 0.0
    if kind == K_SIMPLE:
        y = tanh(x + w[0])
        du = dh * (1.0 - y * y)
        gw[0] += du
        dx[0] = du
        dhp[0] = 0.0
    elif kind == K_DELTA:
        vh = w[3] * h
        z = tanh(w[0] * vh * x + w[1] * vh + w[2] * x + w[5])
        r = sig(x + w[4])
        y = tanh((1.0 - r) * z + r * h)
        du = dh * (1.0 - y * y)
        dz = du * (1.0 - r)
        dr = du * (h - z)
        daz = dz * (1.0 - z * z)
        dvh = daz * (w[0] * x + w[1])
        dar = dr * r * (1.0 - r)
        gw[0] += daz * vh * x
        gw[1] += daz * vh
        gw[2] += daz * x
        gw[3] += dvh * h
        gw[4] += dar
        gw[5] += daz
        dx[0] = daz * (w[0] * vh + w[2]) + dar
        dhp[0] = du * r + dvh * w[3]
    elif kind == K_GRU:
        z = sig(w[0] * x + w[1] * h + w[2])
        r = sig(w[3] * x + w[4] * h + w[5])
        n = tanh(w[6] * x + w[7] * r * h + w[8])
        dz = dh * (n - h)
        dn = dh * z
        dan = dn * (1.0 - n * n)
        drh = dan * w[7]
        daz = dz * z * (1.0 - z)
        dar = drh * h * r * (1.0 - r)
        gw[0] += daz * x
        gw[1] += daz * h
        gw[2] += daz
        gw[3] += dar * x
        gw[4] += dar * h
        gw[5] += dar
        gw[6] += dan * x
        gw[7] += dan * r * h
        gw[8] += dan
        dx[0] = daz * w[0] + dar * w[3] + dan * w[6]
        dhp[0] = dh * (1.0 - z) + drh * r + daz * w[1] + dar * w[4]
    elif kind == K_LSTM:
        i = sig(w[0] * x + w[1] * h + w[2])
        f = sig(w[3] * x + w[4] * h + w[5])
        o = sig(w[6] * x + w[7] * h + w[8])
        g = tanh(w[9] * x + w[10] * h + w[11])
        c2 = f * c + i * g
        tc = tanh(c2)
        dct = dc + dh * o * (1.0 - tc * tc)
        dai = dct * g * i * (1.0 - i)
        daf = dct * c * f * (1.0 - f)
        dao = dh * tc * o * (1.0 - o)
        dag = dct * i * (1.0 - g * g)
        gw[0] += dai * x
        gw[1] += dai * h
        gw[2] += dai
        gw[3] += daf * x
        gw[4] += daf * h
        gw[5] += daf
        gw[6] += dao * x
        gw[7] += dao * h
        gw[8] += dao
        gw[9] += dag * x
        gw[10] += dag * h
        gw[11] += dag
        dx[0] = dai * w[0] + daf * w[3] + dao * w[6] + dag * w[9]
        dhp[0] = dai * w[1] + daf * w[4] + dao * w[7] + dag * w[10]
        dcp[0] = dct * f
    elif kind == K_MGU:
        f = sig(w[0] * x + w[1] * h + w[2])
        n = tanh(w[3] * x + w[4] * f * h + w[5])
        df = dh * (n - h)
        dan = dh * f * (1.0 - n * n)
        dfh = dan * w[4]
        df = df + dfh * h
        daf = df * f * (1.0 - f)
        gw[0] += daf * x
        gw[1] += daf * h
        gw[2] += daf
        gw[3] += dan * x
        gw[4] += dan * f * h
        gw[5] += dan
        dx[0] = daf * w[0] + dan * w[3]
        dhp[0] = dh * (1.0 - f) + dfh * f + daf * w[1]
    else:
        tc = tanh(w[0] * x + w[1] * h + w[2])
        g = sig(w[3] * x + w[4] * h + w[5])
        dg = dh * (h - tc)
        dac = dh * (1.0 - g) * (1.0 - tc * tc)
        dag = dg * g * (1.0 - g)
        gw[0] += dac * x
        gw[1] += dac * h
        gw[2] += dac
        gw[3] += dag * x
        gw[4] += dag * h
        gw[5] += dag
        dx[0] = dac * w[0] + dag * w[3]
        dhp[0] = dh * g + dac * w[1] + dag * w[4]


cdef void run_forward(int T, int N, const int[::1] kinds, const int[::1] poff,
                      const int[::1] ptr, const int[::1] src, const int[::1] skip,
                      const int[::1] widx, const int[::1] in_col, const double[::1] w,
                      const double[:, ::1] X, double[:, ::1] xs, double[:, ::1] hs,
                      double[:, ::1] cs) noexcept nogil:
    cdef int t, n, k, s
    cdef double a, hp, cp
    for t in range(T):
        for n in range(N):
            if kinds[n] == K_INPUT:
                hs[t, n] = X[t, in_col[n]]
                continue
            a = 0.0
            for k in range(ptr[n], ptr[n + 1]):
                s = skip[k]
                if s == 0:
                    a += w[widx[k]] * hs[t, src[k]]
                elif t - s >= 0:
                    a += w[widx[k]] * hs[t - s, src[k]]
            xs[t, n] = a
            if t > 0:
                hp = hs[t - 1, n]
                cp = cs[t - 1, n]
            else:
                hp = 0.0
                cp = 0.0
            cell_fwd(kinds[n], &w[poff[n]], a, hp, cp, &hs[t, n], &cs[t, n])


def forward(prog, params, X):
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[::1] w = np.ascontiguousarray(params, dtype=np.float64)
    cdef int T = Xv.shape[0]
    cdef int N = len(prog.kinds)
    xs = np.zeros((T, N))
    hs = np.zeros((T, N))
    cs = np.zeros((T, N))
    cdef double[:, ::1] xsv = xs, hsv = hs, csv = cs
    cdef const int[::1] kinds = prog.kinds, poff = prog.poff, ptr = prog.in_ptr
    cdef const int[::1] src = prog.in_src, skip = prog.in_skip, widx = prog.in_widx
    cdef const int[::1] in_col = prog.in_col
    with nogil:
        run_forward(T, N, kinds, poff, ptr, src, skip, widx, in_col, w, Xv, xsv, hsv, csv)
    Y = np.zeros((T, prog.n_out))
    for n, col in enumerate(prog.out_col):
        if col >= 0:
            Y[:, col] = hs[:, n]
    return Y


def loss_grad(prog, params, X, Yt):
    """Mean squared error over every timestep and output, and its full BPTT gradient."""
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[:, ::1] Yv = np.ascontiguousarray(Yt, dtype=np.float64)
    cdef double[::1] w = np.ascontiguousarray(params, dtype=np.float64)
    cdef int T = Xv.shape[0]
    cdef int N = len(prog.kinds)
    cdef int n_out = prog.n_out
    grad = np.zeros(len(params))
    xs = np.zeros((T, N))
    hs = np.zeros((T, N))
    cs = np.zeros((T, N))
    dy = np.zeros((T, N))
    carry = np.zeros((2, N))
    cdef double[::1] gv = grad
    cdef double[:, ::1] xsv = xs, hsv = hs, csv = cs, dyv = dy, cv = carry
    cdef const int[::1] kinds = prog.kinds, poff = prog.poff, ptr = prog.in_ptr
    cdef const int[::1] src = prog.in_src, skip = prog.in_skip, widx = prog.in_widx
    cdef const int[::1] in_col = prog.in_col, out_col = prog.out_col
    cdef int t, n, k, s, ts, col
    cdef double loss = 0.0, err, scale = 2.0 / (T * n_out)
    cdef double hp, cp, dx, dhp, dcp
    with nogil:
        run_forward(T, N, kinds, poff, ptr, src, skip, widx, in_col, w, Xv, xsv, hsv, csv)
        for t in range(T):
            for n in range(N):
                col = out_col[n]
                if col >= 0:
                    err = hsv[t, n] - Yv[t, col]
                    loss += err * err
                    dyv[t, n] = scale * err
        loss /= T * n_out
        for t in range(T - 1, -1, -1):
            for n in range(N - 1, -1, -1):
                if kinds[n] == K_INPUT:
                    continue
                if t > 0:
                    hp = hsv[t - 1, n]
                    cp = csv[t - 1, n]
                else:
                    hp = 0.0
                    cp = 0.0
                cell_bwd(kinds[n], &w[poff[n]], xsv[t, n], hp, cp,
                         dyv[t, n] + cv[0, n], cv[1, n], &gv[poff[n]], &dx, &dhp, &dcp)
                cv[0, n] = dhp
                cv[1, n] = dcp
                for k in range(ptr[n], ptr[n + 1]):
                    s = skip[k]
                    ts = t - s
                    if ts < 0:
                        continue
                    gv[widx[k]] += dx * hsv[ts, src[k]]
                    dyv[ts, src[k]] += dx * w[widx[k]]
    return loss, grad
