"""Optimization loops: projected SGD, mirror descent, coordinate descent,
the two-phase adaptive block scheme, its nonadaptive baseline, and the
one-bit permutation scheme.

Every run starts at x = 0, consumes exactly T oracle queries, and returns a
:class:`RunResult` with the output point, total bits sent through the
channel, and (optionally) a trace of intermediate gaps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channels import (Message, Oblivious, Strategy, adaptive, apply_channel,
                       decode, nonadaptive, one_bit_quantize, strategy_next)
from .core import BoxLinf, Domain, L1Ball, mirror_grad, mirror_grad_inverse, norm
from .oracles import (BlockSparseInstance, BlockSparseOracle, GcOracleP12,
                      GcSignOracle, GscOracle)

__all__ = [
    "Constant",
    "InvSqrt",
    "StronglyConvexStep",
    "OptConfig",
    "RunResult",
    "mirror_exponent",
    "sgd_run",
    "mirror_descent_step",
    "rcd_run",
    "acd_run",
    "acd_strategy",
    "nonadaptive_blocksparse_run",
    "pistar_run",
    "repeat_channel",
]


# --- step schedules ----------------------------------------------------------


@dataclass(frozen=True)
class Constant:
    """eta_t = eta."""

    eta: float

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("step size must be positive")

    def step(self, t: int) -> float:
        return self.eta


@dataclass(frozen=True)
class InvSqrt:
    """eta_t = c / sqrt(t)."""

    c: float

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("step constant must be positive")

    def step(self, t: int) -> float:
        return self.c / math.sqrt(t)


@dataclass(frozen=True)
class StronglyConvexStep:
    """eta_t = 2 / (alpha (t + 1)); output is the last iterate."""

    alpha: float

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("strong-convexity modulus must be positive")

    def step(self, t: int) -> float:
        return 2.0 / (self.alpha * (t + 1))


def mirror_exponent(d: int) -> float:
    """The mirror-map exponent 2 log2(d) / (2 log2(d) - 1) used over l1 balls."""
    if d < 2:
        return 2.0
    L = math.log2(d)
    return 2.0 * L / (2.0 * L - 1.0)


# --- run configuration and result --------------------------------------------


@dataclass(frozen=True)
class OptConfig:
    """Static description of one optimization run.

    ``r``/``bound`` configure the one-bit permutation scheme, ``s`` the block
    schemes; divisibility constraints are rejected at construction time.
    """

    algorithm: str
    T: int
    d: int
    schedule: object | None = None
    domain: Domain | None = None
    mirror_a: float | None = None
    r: int | None = None
    bound: float | None = None
    s: int | None = None
    trace_every: int | None = None

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("need T >= 1 oracle queries")
        if self.d < 1:
            raise ValueError("dimension must be >= 1")
        if self.algorithm == "pistar":
            if self.r is None or self.bound is None:
                raise ValueError("pistar needs r and bound")
            if not 1 <= self.r <= self.d or self.d % self.r != 0:
                raise ValueError("r must divide d")
            if self.T % (self.d // self.r) != 0:
                raise ValueError("T must be divisible by d/r (whole phases)")
            if not isinstance(self.domain, L1Ball):
                raise ValueError("pistar runs over an l1 ball")
        elif self.algorithm == "acd":
            if self.s is None or self.d % self.s != 0:
                raise ValueError("block size s must divide d")
            if self.T % 2 != 0 or (self.T * self.s) % (2 * self.d) != 0 \
                    or self.T % (2 * self.s) != 0:
                raise ValueError("need T/2, Ts/(2d) and T/(2s) all integral")
        elif self.algorithm == "nonadaptive_blocksparse":
            if self.s is None or self.d % self.s != 0:
                raise ValueError("block size s must divide d")
            if self.T % self.d != 0:
                raise ValueError("T must be divisible by d")
        elif self.algorithm in ("sgd", "rcd"):
            if self.schedule is None:
                raise ValueError(f"{self.algorithm} needs a step schedule")


@dataclass(frozen=True)
class RunResult:
    x_hat: np.ndarray
    trace: tuple | None
    total_bits: int
    queries_used: int


def repeat_channel(spec, T: int) -> Strategy:
    """Nonadaptive strategy using the same channel at every step."""
    return nonadaptive((spec,) * T)


def _finish(schedule, x_last, x_sum, T):
    if isinstance(schedule, StronglyConvexStep):
        return x_last
    return x_sum / T


def _maybe_trace(trace, trace_every, gap, t, x):
    if trace is not None and gap is not None and t % trace_every == 0:
        trace.append((t, gap(x)))


# --- projected SGD -----------------------------------------------------------


def sgd_run(oracle, strategy: Strategy, config: OptConfig,
            rng: np.random.Generator, gap=None) -> RunResult:
    """Projected stochastic (sub)gradient descent through a channel.

    Updates x_{t+1} = project(x_t - eta_t ghat_t) with ghat_t decoded from
    the channel output; outputs the average of the queried iterates, or the
    last iterate under the strongly convex schedule.
    """
    d, T, dom = config.d, config.T, config.domain
    x = np.zeros(d)
    x_sum = np.zeros(d)
    bits = 0
    history: list[Message] = []
    keep_history = strategy.is_adaptive
    trace = [] if config.trace_every else None
    for t in range(1, T + 1):
        sample = oracle.sample(x, rng)
        spec = strategy_next(strategy, history, t, rng)
        msg = apply_channel(spec, sample, rng)
        if not msg.decodable:
            raise RuntimeError(
                "channel output is not decodable; no unbiased update exists")
        ghat = decode(msg)
        bits += msg.bit_cost
        if keep_history:
            history.append(msg)
        x_sum += x
        x = x - config.schedule.step(t) * ghat
        if dom is not None:
            x = dom.project(x)
        _maybe_trace(trace, config.trace_every, gap, t, x)
    x_hat = _finish(config.schedule, x, x_sum, T)
    return RunResult(x_hat, tuple(trace) if trace is not None else None, bits, T)


# --- mirror descent step ------------------------------------------------------


def _soft(theta: np.ndarray, lam: float) -> np.ndarray:
    return np.sign(theta) * np.maximum(np.abs(theta) - lam, 0.0)


def mirror_descent_step(x_t: np.ndarray, g_t: np.ndarray, eta_t: float,
                        a: float, dom: L1Ball | None = None) -> np.ndarray:
    """One mirror-descent update under Phi_a, with l1-ball Bregman projection.

    The unconstrained argmin is the mirror inverse of grad Phi_a(x_t) -
    eta_t g_t; if infeasible, the projection soft-thresholds the dual point
    by a multiplier lambda found by bisection (the primal l1 norm is
    monotone decreasing in lambda), stopping when it is within 1e-8 of the
    radius.
    """
    theta = mirror_grad(x_t, a) - eta_t * np.asarray(g_t, dtype=np.float64)
    y = mirror_grad_inverse(theta, a)
    if dom is None:
        return y
    radius = dom.radius
    if math.isinf(radius) or norm(y, 1) <= radius + 1e-12:
        return y
    lo, hi = 0.0, float(np.max(np.abs(theta)))
    for _ in range(200):
        lam = 0.5 * (lo + hi)
        cand = mirror_grad_inverse(_soft(theta, lam), a)
        l1 = norm(cand, 1)
        if abs(l1 - radius) <= 1e-8:
            return cand
        if l1 > radius:
            lo = lam
        else:
            hi = lam
    raise RuntimeError("l1 Bregman projection: bisection failed in 200 steps")


# --- randomized coordinate descent --------------------------------------------


def _sched_code(schedule):
    if isinstance(schedule, Constant):
        return 0, schedule.eta
    if isinstance(schedule, InvSqrt):
        return 1, schedule.c
    if isinstance(schedule, StronglyConvexStep):
        return 2, schedule.alpha
    raise TypeError(f"unknown schedule {schedule!r}")


_RCD_CHUNK = 1 << 15


def _rcd_fast_box(oracle, config: OptConfig, rng: np.random.Generator) -> RunResult:
    # law-exact fast path: draw the released coordinate's value directly
    from . import _kernels

    inst = oracle.inst
    d, T = config.d, config.T
    radius = config.domain.radius
    sched, par = _sched_code(config.schedule)
    x = np.zeros(d)
    acc = np.zeros(d)
    last = np.ones(d, dtype=np.int64)
    is_p12 = isinstance(oracle, GcOracleP12)
    if is_p12:
        mag = inst.B / inst.d ** (1.0 / inst.q)
        p_minus = (1.0 + 2.0 * inst.delta * inst.v) / 2.0
    else:
        p_plus = (1.0 + 2.0 * inst.delta * inst.v) / 2.0
    t0 = 0
    while t0 < T:
        n = min(_RCD_CHUNK, T - t0)
        idx = rng.integers(d, size=n)
        us = rng.random(n)
        if is_p12:
            _kernels.rcd_chunk_p12(x, acc, last, idx, us, p_minus, mag,
                                   radius, t0, sched, par)
        else:
            _kernels.rcd_chunk_gsc(x, acc, last, idx, us, p_plus, inst.a,
                                   inst.b, inst.theta, radius, t0, sched, par)
        t0 += n
    acc += x * np.maximum(T - last + 1, 0)
    x_hat = _finish(config.schedule, x, acc, T)
    return RunResult(x_hat, None, 0, T)


def rcd_run(oracle, config: OptConfig, rng: np.random.Generator,
            gap=None) -> RunResult:
    """Randomized coordinate descent over a uniform oblivious channel.

    Each step releases one uniformly chosen coordinate of the oracle sample
    and applies the unbiased estimate d * g(i) e_i.  With d = 1 the
    trajectory coincides with plain SGD on the same stream.
    """
    d, T, dom = config.d, config.T, config.domain
    if (d > 1 and config.trace_every is None and isinstance(dom, BoxLinf)
            and isinstance(oracle, (GcOracleP12, GscOracle))):
        return _rcd_fast_box(oracle, config, rng)
    sample_coord = getattr(oracle, "sample_coord", None)
    x = np.zeros(d)
    x_sum = np.zeros(d)
    trace = [] if config.trace_every else None
    for t in range(1, T + 1):
        i = int(rng.integers(d)) if d > 1 else 0
        if sample_coord is not None:
            gi = sample_coord(x, i, rng)
        else:
            gi = float(oracle.sample(x, rng)[i])
        x_sum += x
        x = x.copy()
        x[i] -= config.schedule.step(t) * d * gi
        if dom is not None:
            x = dom.project(x)
        _maybe_trace(trace, config.trace_every, gap, t, x)
    x_hat = _finish(config.schedule, x, x_sum, T)
    return RunResult(x_hat, tuple(trace) if trace is not None else None, 0, T)


# --- two-phase adaptive block scheme -------------------------------------------


def acd_run(inst: BlockSparseInstance, T: int,
            rng: np.random.Generator) -> RunResult:
    """Explore block representatives, then exploit the winning block.

    Exploration spends T/2 queries sampling the first coordinate of each of
    the d/s blocks Ts/(2d) times (at x = 0, so the sample recovers -2X);
    the block with the largest |sum| wins, ties to the lowest index.
    Exploitation spends T/2 queries splitting evenly over the winner's s
    coordinates and outputs their sample means, zeros elsewhere.
    """
    config = OptConfig(algorithm="acd", T=T, d=inst.d, s=inst.s)
    d, s = inst.d, inst.s
    oracle = BlockSparseOracle(inst)
    n_explore = T * s // (2 * d)
    scores = np.empty(d // s)
    for blk in range(d // s):
        scores[blk] = oracle.sample_coord_batch(blk * s, n_explore, rng).sum()
    i_star = int(np.argmax(np.abs(scores)))
    n_exploit = T // (2 * s)
    y = np.zeros(d)
    for c in range(i_star * s, (i_star + 1) * s):
        y[c] = oracle.sample_coord_batch(c, n_exploit, rng).mean()
    return RunResult(y, None, 0, T)


def acd_strategy(d: int, s: int, T: int) -> Strategy:
    """The adaptive channel-selection rule underlying :func:`acd_run`.

    Exposed so the strategy interface can replay the scheme's channel
    choices from a message history: exploration steps point-mass on block
    representatives; exploitation steps point-mass on the coordinates of the
    block whose recovered |sum| is largest (queries made at x = 0).
    """
    n_explore = T * s // (2 * d)
    n_exploit = T // (2 * s)

    def rule(history, t, rng):
        if t <= T // 2:
            blk = (t - 1) // n_explore
            return Oblivious.point_mass(d, blk * s)
        sums = np.zeros(d // s)
        for msg in history[:T // 2]:
            i, val = msg.payload
            sums[i // s] += -val / 2.0  # sample at x=0 is -2X
        i_star = int(np.argmax(np.abs(sums)))
        k = t - T // 2 - 1
        return Oblivious.point_mass(d, i_star * s + k // n_exploit)

    return adaptive(rule, "obl")


def nonadaptive_blocksparse_run(inst: BlockSparseInstance, T: int,
                                rng: np.random.Generator) -> RunResult:
    """Nonadaptive baseline: fixed uniform coverage, T/d samples per coordinate.

    Outputs the per-coordinate means restricted to the block with the
    largest sum of squared means.
    """
    config = OptConfig(algorithm="nonadaptive_blocksparse", T=T, d=inst.d,
                       s=inst.s)
    d, s = inst.d, inst.s
    oracle = BlockSparseOracle(inst)
    n = T // d
    means = np.empty(d)
    for c in range(d):
        means[c] = oracle.sample_coord_batch(c, n, rng).mean()
    scores = (means.reshape(d // s, s) ** 2).sum(axis=1)
    blk = int(np.argmax(scores))
    y = np.zeros(d)
    y[blk * s:(blk + 1) * s] = means[blk * s:(blk + 1) * s]
    return RunResult(y, None, 0, T)


# --- one-bit permutation scheme -------------------------------------------------


def pistar_run(oracle, config: OptConfig, rng: np.random.Generator,
               gap=None) -> RunResult:
    """r-bit-per-query scheme: phased queries, permuted one-bit quantization,
    mirror descent over the l1 ball.

    The horizon is split into T r / d phases of d/r queries each, all at the
    same point.  A fresh public permutation assigns each query an r-slice of
    coordinates to quantize with the unbiased one-bit quantizer, so the
    aggregated estimate Qbar covers every coordinate exactly once and
    satisfies ||Qbar||_inf = bound.  The output is the average of the
    queried phase iterates.
    """
    d, T, r, B = config.d, config.T, config.r, config.bound
    dom = config.domain
    a = config.mirror_a if config.mirror_a is not None else mirror_exponent(d)
    per_phase = d // r
    phases = T // per_phase

    k = 1.0 / (a - 1.0)
    fast = (isinstance(oracle, GcSignOracle)
            and isinstance(config.schedule, (Constant, InvSqrt))
            and config.trace_every is None
            and abs(k - round(k)) < 1e-9
            and abs(oracle.inst.B / oracle.inst.d ** (1.0 / oracle.inst.q) - B)
            <= 1e-12 * B)
    if fast:
        from . import _kernels

        inst = oracle.inst
        sched, par = _sched_code(config.schedule)
        seed = int(rng.integers(1 << 31))
        x_hat = _kernels.pistar_phases_gc_sign(inst.v, inst.b, inst.delta, B,
                                               dom.radius, int(round(k)),
                                               sched, par, phases, seed)
        return RunResult(x_hat, None, T * r, T)

    x = np.zeros(d)
    x_sum = np.zeros(d)
    bits = 0
    trace = [] if config.trace_every else None
    for t in range(1, phases + 1):
        perm = rng.permutation(d)
        q_bar = np.zeros(d)
        for i in range(per_phase):
            sample = oracle.sample(x, rng)
            if np.max(np.abs(sample)) > B * (1.0 + 1e-12):
                raise RuntimeError("oracle sample exceeds the quantizer bound")
            coords = perm[i * r:(i + 1) * r]
            msg = one_bit_quantize(sample, B, coords, rng)
            q_bar += decode(msg)
            bits += msg.bit_cost
        x_sum += x
        x = mirror_descent_step(x, q_bar, config.schedule.step(t), a, dom)
        _maybe_trace(trace, config.trace_every, gap, t, x)
    x_hat = x_sum / phases
    return RunResult(x_hat, tuple(trace) if trace is not None else None,
                     bits, T)
