"""Compiled shooting kernel for the minimum-time transcription.

The decision variables are the final time and piecewise-constant controls
on ``N`` equal intervals; each interval is crossed with ``sub`` RK4 steps.
``shoot`` returns the terminal state and its exact derivatives (discrete
adjoint of the RK4 recursion) with respect to t_f and every control, plus
the node states and the node sensitivities d x_N / d x_k used to recover
costates.
"""
import math

import numba
import numpy as np


@numba.njit(cache=True)
def _rhs(y, tau, f, m, g, b1, b2, out):
    th, r, w, v = y[0], y[1], y[2], y[3]
    out[0] = w
    out[1] = v
    out[2] = (tau - 2.0 * m * r * v * w - b1 * w - m * g * r * math.cos(th)) / (m * r * r)
    out[3] = (f + m * r * w * w - b2 * v - m * g * math.sin(th)) / m


@numba.njit(cache=True)
def _jac(y, tau, m, g, b1, b2, A):
    th, r, w, v = y[0], y[1], y[2], y[3]
    c = math.cos(th)
    s = math.sin(th)
    for i in range(4):
        for j in range(4):
            A[i, j] = 0.0
    A[0, 2] = 1.0
    A[1, 3] = 1.0
    A[2, 0] = g * s / r
    A[2, 1] = -2.0 * tau / (m * r**3) + 2.0 * v * w / r**2 + 2.0 * b1 * w / (m * r**3) + g * c / r**2
    A[2, 2] = -2.0 * v / r - b1 / (m * r * r)
    A[2, 3] = -2.0 * w / r
    A[3, 0] = -g * c
    A[3, 1] = w * w
    A[3, 2] = 2.0 * r * w
    A[3, 3] = -b2 / m


@numba.njit(cache=True)
def shoot(tf, U, x0, sub, m, g, b1, b2):
    N = U.shape[0]
    nsteps = N * sub
    h = tf / nsteps
    stage_y = np.empty((nsteps, 4, 4))
    stage_k = np.empty((nsteps, 4, 4))
    nodes = np.empty((N + 1, 4))
    x = x0.copy()
    k = np.empty(4)
    y = np.empty(4)
    for q in range(4):
        nodes[0, q] = x[q]
    for j in range(nsteps):
        i = j // sub
        tau = U[i, 0]
        f = U[i, 1]
        for q in range(4):
            y[q] = x[q]
        for st in range(4):
            for q in range(4):
                stage_y[j, st, q] = y[q]
            _rhs(y, tau, f, m, g, b1, b2, k)
            for q in range(4):
                stage_k[j, st, q] = k[q]
            c = 0.5 * h if st < 2 else h
            for q in range(4):
                y[q] = x[q] + c * k[q]
        for q in range(4):
            x[q] += h / 6.0 * (stage_k[j, 0, q] + 2.0 * stage_k[j, 1, q] + 2.0 * stage_k[j, 2, q] + stage_k[j, 3, q])
        if (j + 1) % sub == 0:
            for q in range(4):
                nodes[(j + 1) // sub, q] = x[q]

    # Reverse sweep; row rr carries d x_N[rr] / d(.)
    a = np.eye(4)
    sens = np.empty((N + 1, 4, 4))
    sens[N] = a
    gU = np.zeros((4, N, 2))
    gh = np.zeros(4)
    A = np.empty((4, 4))
    G = np.empty((4, 4, 4))
    W = np.empty((4, 4, 4))
    wts = (1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0)
    for j in range(nsteps - 1, -1, -1):
        i = j // sub
        tau = U[i, 0]
        for st in range(3, -1, -1):
            for rr in range(4):
                for q in range(4):
                    G[st, rr, q] = a[rr, q] * h * wts[st]
            if st < 3:
                c = h if st == 2 else 0.5 * h
                for rr in range(4):
                    for q in range(4):
                        G[st, rr, q] += c * W[st + 1, rr, q]
            ys = stage_y[j, st]
            _jac(ys, tau, m, g, b1, b2, A)
            for rr in range(4):
                for q in range(4):
                    acc = 0.0
                    for pp in range(4):
                        acc += G[st, rr, pp] * A[pp, q]
                    W[st, rr, q] = acc
            inv = 1.0 / (m * ys[1] * ys[1])
            for rr in range(4):
                gU[rr, i, 0] += G[st, rr, 2] * inv
                gU[rr, i, 1] += G[st, rr, 3] / m
        for rr in range(4):
            acc = 0.0
            for q in range(4):
                incr = stage_k[j, 0, q] + 2.0 * stage_k[j, 1, q] + 2.0 * stage_k[j, 2, q] + stage_k[j, 3, q]
                acc += a[rr, q] * incr / 6.0
                acc += W[3, rr, q] * stage_k[j, 2, q] + 0.5 * W[2, rr, q] * stage_k[j, 1, q] + 0.5 * W[1, rr, q] * stage_k[j, 0, q]
            gh[rr] += acc
        for rr in range(4):
            for q in range(4):
                a[rr, q] += W[0, rr, q] + W[1, rr, q] + W[2, rr, q] + W[3, rr, q]
        if j % sub == 0:
            sens[j // sub] = a
    # d h / d t_f = 1 / nsteps
    return x, gh / nsteps, gU, nodes, sens
