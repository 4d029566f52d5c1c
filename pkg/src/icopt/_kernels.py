"""Numba kernels for the hot loops.

Two loops dominate the experiment suites: the per-phase mirror-descent update
of the one-bit permutation scheme, and the scalar coordinate-descent update.
Both are law-exact specializations of the reference loops in
:mod:`icopt.optimizers`, restricted to the hard-instance oracles whose
coordinate laws are known in closed form.
"""

from __future__ import annotations

import math

import numba
import numpy as np


@numba.njit(cache=True, inline="always")
def _ipow(x: float, k: int) -> float:
    # x**k for integer k >= 0 by repeated squaring; avoids libm pow in loops
    r = 1.0
    b = x
    e = k
    while e > 0:
        if e & 1:
            r *= b
        b *= b
        e >>= 1
    return r


@numba.njit(cache=True)
def _dual_l1(theta: np.ndarray, lam: float, k: int) -> float:
    """l1 norm of the primal point whose mirror dual is soft(theta, lam).

    The mirror map ||x||_a^2/(a-1) with 1/(a-1) = k has the closed-form
    inverse x_i = sign * (|theta_i| / c)^k with c determined by the dual-norm
    magnitude, so the l1 norm needs one pass over the thresholded dual.
    """
    sk = 0.0
    sk1 = 0.0
    for i in range(theta.size):
        p = abs(theta[i]) - lam
        if p > 0.0:
            pk = _ipow(p, k)
            sk += pk
            sk1 += pk * p
    if sk1 == 0.0:
        return 0.0
    am1 = 1.0 / k
    nb = sk1 ** (1.0 / (k + 1))
    na = am1 * nb / 2.0
    c = (2.0 / am1) * na ** (1.0 - am1)
    return sk / _ipow(c, k)


@numba.njit(cache=True)
def _dual_project(theta: np.ndarray, radius: float, k: int) -> None:
    """Bregman-project onto the l1 ball, in place on the dual point.

    Soft thresholding by lam in the dual is the exact projection; lam is
    located by safeguarded bisection (secant proposals, midpoint fallback)
    until the primal l1 norm is within 1e-8 of the radius.
    """
    l1 = _dual_l1(theta, 0.0, k)
    if l1 <= radius + 1e-12:
        return
    lo = 0.0
    flo = l1
    hi = 0.0
    for i in range(theta.size):
        if abs(theta[i]) > hi:
            hi = abs(theta[i])
    fhi = 0.0
    lam = 0.5 * hi
    for it in range(200):
        if it % 2 == 0 and flo != fhi:
            lam = lo + (flo - radius) * (hi - lo) / (flo - fhi)
            if not (lo < lam < hi):
                lam = 0.5 * (lo + hi)
        else:
            lam = 0.5 * (lo + hi)
        f = _dual_l1(theta, lam, k)
        if abs(f - radius) <= 1e-8:
            break
        if f > radius:
            lo = lam
            flo = f
        else:
            hi = lam
            fhi = f
    for i in range(theta.size):
        p = abs(theta[i]) - lam
        if p > 0.0:
            theta[i] = p if theta[i] > 0.0 else -p
        else:
            theta[i] = 0.0


@numba.njit(cache=True)
def pistar_phases_gc_sign(v: np.ndarray, box_b: float, delta: float,
                          B: float, radius: float, k: int, sched: int,
                          step_c: float, phases: int, seed: int) -> np.ndarray:
    """All phases of the one-bit permutation scheme on the +-B sign oracle.

    Oracle coordinate i is +-B with mean a * sign(x(i) - v(i) b).  Since
    every coordinate is exactly +-B, the one-bit quantizer reproduces the
    sample verbatim and the public permutation does not change the law of
    the aggregated estimate, so one product draw per phase is law-exact.
    The mirror-descent iterate is kept in dual form: the update subtracts
    eta * Qbar and the l1 projection soft-thresholds the dual, which leaves
    the dual equal to the mirror gradient of the primal iterate.
    """
    np.random.seed(seed)
    d = v.size
    am1 = 1.0 / k
    theta = np.zeros(d)
    x = np.zeros(d)
    xbar = np.zeros(d)
    for t in range(1, phases + 1):
        # recover the queried point x_t (mirror inverse of the dual)
        sk1 = 0.0
        for i in range(d):
            ab = abs(theta[i])
            if ab > 0.0:
                sk1 += _ipow(ab, k) * ab
        if sk1 > 0.0:
            nb = sk1 ** (1.0 / (k + 1))
            na = am1 * nb / 2.0
            ck = _ipow((2.0 / am1) * na ** (1.0 - am1), k)
            for i in range(d):
                if theta[i] != 0.0:
                    mag = _ipow(abs(theta[i]), k) / ck
                    x[i] = mag if theta[i] > 0.0 else -mag
                else:
                    x[i] = 0.0
        else:
            for i in range(d):
                x[i] = 0.0
        for i in range(d):
            xbar[i] += x[i]
        eta = step_c if sched == 0 else step_c / math.sqrt(t)
        for i in range(d):
            sgn = 1.0 if x[i] >= v[i] * box_b else -1.0
            p_plus = 0.5 * (1.0 + 2.0 * delta * sgn)
            q = B if np.random.random() < p_plus else -B
            theta[i] -= eta * q
        _dual_project(theta, radius, k)
    for i in range(d):
        xbar[i] /= phases
    return xbar


# --- coordinate descent chunks ----------------------------------------------
#
# Shared convention: schedule kind 0 = constant eta, 1 = eta = c/sqrt(t),
# 2 = eta = 2/(alpha (t+1)); `last` and `acc` implement a lazy running sum of
# the queried iterates (only the touched coordinate needs bookkeeping).


@numba.njit(cache=True)
def rcd_chunk_p12(x: np.ndarray, acc: np.ndarray, last: np.ndarray,
                  idx: np.ndarray, us: np.ndarray, p_minus: np.ndarray,
                  mag: float, radius: float, t0: int,
                  sched: int, par: float) -> None:
    d = x.size
    for j in range(idx.size):
        t = t0 + j + 1
        i = idx[j]
        if sched == 0:
            eta = par
        elif sched == 1:
            eta = par / math.sqrt(t)
        else:
            eta = 2.0 / (par * (t + 1))
        gi = -mag if us[j] < p_minus[i] else mag
        xi = x[i]
        nx = xi - eta * d * gi
        if nx > radius:
            nx = radius
        elif nx < -radius:
            nx = -radius
        acc[i] += xi * (t - last[i] + 1)
        last[i] = t + 1
        x[i] = nx


@numba.njit(cache=True)
def rcd_chunk_gsc(x: np.ndarray, acc: np.ndarray, last: np.ndarray,
                  idx: np.ndarray, us: np.ndarray, p_plus: np.ndarray,
                  a: float, b: float, theta_mix: float, radius: float,
                  t0: int, sched: int, par: float) -> None:
    d = x.size
    for j in range(idx.size):
        t = t0 + j + 1
        i = idx[j]
        if sched == 0:
            eta = par
        elif sched == 1:
            eta = par / math.sqrt(t)
        else:
            eta = 2.0 / (par * (t + 1))
        xi = x[i]
        shifted = xi + b if us[j] < p_plus[i] else xi - b
        sgn = 1.0 if shifted >= 0.0 else -1.0
        gi = a * (theta_mix * b * sgn + 0.5 * (1.0 - theta_mix) * shifted)
        nx = xi - eta * d * gi
        if nx > radius:
            nx = radius
        elif nx < -radius:
            nx = -radius
        acc[i] += xi * (t - last[i] + 1)
        last[i] = t + 1
        x[i] = nx
