"""Exact small-instance information accounting and convergence-rate fitting.

The information computations enumerate the full joint law of the hidden sign
vector and the channel outputs (tiny d and T only) and are used to check the
per-coordinate information bound against its closed form.  All information
quantities are in nats.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .channels import Oblivious
from .oracles import gamma_p12

__all__ = [
    "RateFit",
    "fit_rate",
    "kl_divergence",
    "mutual_information_binary",
    "brute_force_avg_mi",
    "oblivious_mi_bound",
]


# --- rate fitting -------------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float
    points: tuple


def fit_rate(points) -> RateFit:
    """Least-squares fit of log(error) against log(scale).

    ``points`` is a sequence of (scale, mean_error) pairs, all strictly
    positive, at least three of them.
    """
    pts = tuple((float(s), float(e)) for s, e in points)
    if len(pts) < 3:
        raise ValueError("need at least 3 points to fit a rate")
    if any(s <= 0 or e <= 0 for s, e in pts):
        raise ValueError("scales and errors must be strictly positive")
    lx = np.log([s for s, _ in pts])
    ly = np.log([e for _, e in pts])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return RateFit(float(slope), float(intercept), r2, pts)


# --- exact information computations ---------------------------------------------


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p || q) in nats over a shared finite alphabet; 0 log 0 = 0."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    mask = p > 0
    if np.any(q[mask] == 0):
        return math.inf
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def mutual_information_binary(p_plus: np.ndarray, p_minus: np.ndarray) -> float:
    """I(S; Y) for S uniform on {+1,-1} and Y | S = s distributed p_s.

    Uses the KL-to-mixture identity I = (KL(p+ || m) + KL(p- || m)) / 2 with
    m the equal mixture.
    """
    m = 0.5 * (np.asarray(p_plus) + np.asarray(p_minus))
    return 0.5 * kl_divergence(p_plus, m) + 0.5 * kl_divergence(p_minus, m)


def _step_law(v: np.ndarray, delta: float, p: np.ndarray) -> np.ndarray:
    """Output law of one oblivious step on the product +-magnitude oracle.

    Symbols are (i, sign) flattened as 2i + (sign+1)/2; the released value is
    negative with probability (1 + 2 delta v(i))/2 given index i.
    """
    d = v.size
    law = np.empty(2 * d)
    for i in range(d):
        p_neg = (1.0 + 2.0 * delta * v[i]) / 2.0
        law[2 * i] = p[i] * p_neg
        law[2 * i + 1] = p[i] * (1.0 - p_neg)
    return law


def brute_force_avg_mi(d: int, delta: float, channels, T: int | None = None,
                       direct: bool = False) -> float:
    """Exact sum over coordinates of I(V(i); Y^T), V uniform on {-1,1}^d.

    ``channels`` is the nonadaptive sequence of oblivious specs (one per
    step); the oracle is the product hard oracle, whose output law does not
    depend on the query point, so the joint law of Y^T factorizes per step.
    ``direct=True`` evaluates the defining double sum instead of the
    KL-to-mixture identity; both must agree.
    """
    channels = tuple(channels)
    if T is not None and len(channels) != T:
        raise ValueError("need exactly one channel spec per step")
    T = len(channels)
    if d > 3 or T > 3:
        raise ValueError("exact enumeration is capped at d <= 3, T <= 3")
    if not all(isinstance(c, Oblivious) and c.dim == d for c in channels):
        raise ValueError("channels must be oblivious specs of dimension d")

    signs = [np.array(v, dtype=np.float64)
             for v in itertools.product((-1.0, 1.0), repeat=d)]
    joints = []
    for v in signs:
        law = np.ones(1)
        for spec in channels:
            law = np.kron(law, _step_law(v, delta, np.asarray(spec.p)))
        joints.append(law)
    joints = np.asarray(joints)  # rows: v assignments, columns: y^T tuples

    total = 0.0
    for i in range(d):
        plus = np.array([v[i] > 0 for v in signs])
        p_plus = joints[plus].mean(axis=0)
        p_minus = joints[~plus].mean(axis=0)
        if direct:
            p_y = 0.5 * (p_plus + p_minus)
            for s, p_s in ((0.5, p_plus), (0.5, p_minus)):
                mask = p_s > 0
                total += float(np.sum(
                    s * p_s[mask] * np.log(s * p_s[mask] / (0.5 * p_y[mask]))))
            continue
        total += mutual_information_binary(p_plus, p_minus)
    return total


def oblivious_mi_bound(delta: float, T: int) -> float:
    """Closed-form cap (C/2) T gamma^2 on the summed per-coordinate information.

    For the binary-alphabet product oracle, C = (|alphabet| - 1) times the
    worst likelihood ratio (1 + 2 delta)/(1 - 2 delta).
    """
    C = (1.0 + 2.0 * delta) / (1.0 - 2.0 * delta)
    return 0.5 * C * T * gamma_p12(delta) ** 2
