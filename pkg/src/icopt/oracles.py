"""Hard function/oracle families, the discrepancy metric, and assumption checks.

Four families are provided: two sign-vector hard instances (piecewise-linear
convex, and strongly convex), the block-sparse mean-estimation problem, and
the stochastic subgradient oracles attached to each.  All oracles return
estimates whose conditional mean is a subgradient and whose lq norm is
almost surely bounded by B.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import BoxLinf, as_vector, norm

__all__ = [
    "ConvexHardInstance",
    "StronglyConvexInstance",
    "BlockSparseInstance",
    "GcOracleP12",
    "GcSignOracle",
    "GcOraclePinf",
    "GscOracle",
    "BlockSparseOracle",
    "gc_eval",
    "gsc_eval",
    "psi_metric",
    "OracleReport",
    "check_oracle_assumptions",
    "check_b_alpha",
    "gamma_p12",
    "gamma_pinf",
    "p12_likelihood_ratio",
    "instance_to_json",
    "instance_from_json",
]


def _check_signs(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.abs(v) == 1.0):
        raise ValueError("sign vector entries must be +-1")
    return v


def _sgn(y: np.ndarray) -> np.ndarray:
    # fixed subgradient selection at kinks: sign(0) := +1
    return np.where(y >= 0.0, 1.0, -1.0)


# --- piecewise-linear convex family ----------------------------------------


@dataclass(frozen=True)
class ConvexHardInstance:
    """g_v(x) = a * sum_i |x(i) - v(i) b| on the box ||x||_inf <= b.

    Two parameterizations: regime "p12" (slope a = 2 B delta / d^{1/q}, used
    for p in [1, 2)) and regime "pinf" (a = 2 B delta / d, for p >= 2).
    """

    v: np.ndarray
    delta: float
    b: float
    B: float
    regime: str = "p12"
    q: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "v", _check_signs(self.v))
        # delta < 1/2 keeps the +-1 coordinate laws valid; the information
        # lower-bound arguments additionally want delta <= 1/6
        if not 0.0 < self.delta < 0.5:
            raise ValueError("bias delta must lie in (0, 1/2)")
        if self.b <= 0 or self.B <= 0:
            raise ValueError("b and B must be positive")
        if self.regime not in ("p12", "pinf"):
            raise ValueError("regime must be 'p12' or 'pinf'")
        if self.q < 1:
            raise ValueError("Holder conjugate q must be >= 1")

    @property
    def d(self) -> int:
        return self.v.size

    @property
    def a(self) -> float:
        if self.regime == "p12":
            return 2.0 * self.B * self.delta / self.d ** (1.0 / self.q)
        return 2.0 * self.B * self.delta / self.d

    @property
    def domain(self) -> BoxLinf:
        return BoxLinf(self.d, self.b)

    @property
    def minimizer(self) -> np.ndarray:
        return self.b * self.v

    @property
    def min_value(self) -> float:
        return 0.0

    def value(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=np.float64)
        return self.a * float(np.sum(np.abs(x - self.v * self.b)))

    def grad(self, x: np.ndarray) -> np.ndarray:
        # constant -a v on the open box; the fixed subgradient selection
        # extends it to the closed box
        return -self.a * self.v

    def gap(self, x: np.ndarray) -> float:
        return self.value(x) - self.min_value


def gc_eval(inst: ConvexHardInstance, x: np.ndarray):
    """(value, gradient, minimizer) of the convex hard instance at x."""
    x = as_vector(x, inst.d)
    if not inst.domain.contains(x):
        raise ValueError("query point outside the instance box")
    return inst.value(x), inst.grad(x), inst.minimizer


@dataclass(frozen=True)
class GcOracleP12:
    """Product oracle: coordinate i is -B/d^{1/q} w.p. (1 + 2 delta v(i))/2.

    The output law does not depend on the query point; every sample has lq
    norm exactly B.
    """

    inst: ConvexHardInstance

    @property
    def bound(self) -> float:
        return self.inst.B

    @property
    def q(self) -> float:
        return self.inst.q

    def mean(self, x) -> np.ndarray:
        return self.inst.grad(x)

    def sample_batch(self, x, n: int, rng: np.random.Generator) -> np.ndarray:
        inst = self.inst
        mag = inst.B / inst.d ** (1.0 / inst.q)
        p_minus = (1.0 + 2.0 * inst.delta * inst.v) / 2.0
        u = rng.random((n, inst.d))
        return np.where(u < p_minus, -mag, mag)

    def sample(self, x, rng: np.random.Generator) -> np.ndarray:
        return self.sample_batch(x, 1, rng)[0]

    def sample_coord(self, x, i: int, rng: np.random.Generator) -> float:
        inst = self.inst
        mag = inst.B / inst.d ** (1.0 / inst.q)
        p_minus = (1.0 + 2.0 * inst.delta * inst.v[i]) / 2.0
        return -mag if rng.random() < p_minus else mag


@dataclass(frozen=True)
class GcSignOracle:
    """Query-dependent subgradient oracle for the piecewise-linear instance.

    Coordinate i is +-B/d^{1/q} with mean a * sign(x(i) - v(i) b), a valid
    subgradient selection of g_v everywhere (sign(0) := +1).  On the open
    box this law coincides with the constant-law product oracle; off the
    box it keeps the unbiased-subgradient contract that domains larger than
    the box (the l1 ball) require.
    """

    inst: ConvexHardInstance

    @property
    def bound(self) -> float:
        return self.inst.B

    @property
    def q(self) -> float:
        return self.inst.q

    def mean(self, x) -> np.ndarray:
        inst = self.inst
        x = np.asarray(x, dtype=np.float64)
        return inst.a * _sgn(x - inst.v * inst.b)

    def sample_batch(self, x, n: int, rng: np.random.Generator) -> np.ndarray:
        inst = self.inst
        mag = inst.B / inst.d ** (1.0 / inst.q)
        x = np.asarray(x, dtype=np.float64)
        p_plus = (1.0 + 2.0 * inst.delta * _sgn(x - inst.v * inst.b)) / 2.0
        u = rng.random((n, inst.d))
        return np.where(u < p_plus, mag, -mag)

    def sample(self, x, rng: np.random.Generator) -> np.ndarray:
        return self.sample_batch(x, 1, rng)[0]


@dataclass(frozen=True)
class GcOraclePinf:
    """Sparse oracle: one uniformly chosen coordinate set to +-B, rest zero.

    Given the chosen coordinate i, the value is -B w.p. (1 + 2 delta v(i))/2;
    jointly, coordinate i equals -B with probability (1 + 2 delta v(i))/(2d).
    """

    inst: ConvexHardInstance

    @property
    def bound(self) -> float:
        return self.inst.B

    @property
    def q(self) -> float:
        return math.inf

    def mean(self, x) -> np.ndarray:
        return -2.0 * self.inst.B * self.inst.delta * self.inst.v / self.inst.d

    def sample_batch(self, x, n: int, rng: np.random.Generator) -> np.ndarray:
        inst = self.inst
        idx = rng.integers(inst.d, size=n)
        u = rng.random(n)
        vals = np.where(u < (1.0 + 2.0 * inst.delta * inst.v[idx]) / 2.0,
                        -inst.B, inst.B)
        out = np.zeros((n, inst.d))
        out[np.arange(n), idx] = vals
        return out

    def sample(self, x, rng: np.random.Generator) -> np.ndarray:
        return self.sample_batch(x, 1, rng)[0]


# --- strongly convex family -------------------------------------------------


@dataclass(frozen=True)
class StronglyConvexInstance:
    """Mixture of shifted huber-like pieces; alpha-strongly convex on the box.

    g_v(x) = a sum_i [ (1+2 delta v_i)/2 f+_i(x) + (1-2 delta v_i)/2 f-_i(x) ]
    with f+-_i(x) = theta b |x_i +- b| + (1-theta)/4 (x_i +- b)^2,
    a = B / (sqrt(d) b), and strong-convexity modulus alpha = a (1-theta)/4.
    """

    v: np.ndarray
    delta: float
    theta: float
    b: float
    B: float

    def __post_init__(self):
        object.__setattr__(self, "v", _check_signs(self.v))
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if self.b <= 0 or self.B <= 0:
            raise ValueError("b and B must be positive")
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if 2.0 * self.delta > (1.0 - self.theta) / (1.0 + self.theta) + 1e-12:
            raise ValueError("need 2 delta <= (1 - theta) / (1 + theta)")

    @property
    def d(self) -> int:
        return self.v.size

    @property
    def a(self) -> float:
        return self.B / (math.sqrt(self.d) * self.b)

    @property
    def alpha(self) -> float:
        return self.a * (1.0 - self.theta) / 4.0

    @property
    def domain(self) -> BoxLinf:
        return BoxLinf(self.d, self.b)

    @property
    def minimizer(self) -> np.ndarray:
        if self.theta == 1.0:
            # alpha = 0: flat quadratic part; minimizer formula degenerates
            # only when delta = 0, where every coordinate minimizes at 0
            return np.zeros(self.d)
        return (-2.0 * self.delta * self.v
                * (1.0 + self.theta) / (1.0 - self.theta) * self.b)

    def coord_value(self, nu: float, y: np.ndarray) -> np.ndarray:
        """g_{i,nu}(y) on [-b, b] via the quadratic closed form."""
        a, b, th = self.a, self.b, self.theta
        return a * ((1.0 - th) / 4.0 * y ** 2 + (1.0 + 3.0 * th) / 4.0 * b ** 2
                    + self.delta * nu * (1.0 + th) * b * y)

    @property
    def min_value(self) -> float:
        a, b, th = self.a, self.b, self.theta
        per_coord = a * b ** 2 * ((1.0 + 3.0 * th) / 4.0)
        if th < 1.0:
            per_coord -= a * b ** 2 * self.delta ** 2 * (1.0 + th) ** 2 / (1.0 - th)
        return self.d * per_coord

    def value(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=np.float64)
        return float(np.sum(self.coord_value(self.v, x)))

    def fprime(self, x: np.ndarray, sign: int) -> np.ndarray:
        """Derivative of f+_i (sign=+1) or f-_i (sign=-1) at each coordinate."""
        b, th = self.b, self.theta
        shifted = np.asarray(x, dtype=np.float64) + sign * b
        return th * b * _sgn(shifted) + (1.0 - th) / 2.0 * shifted

    def grad(self, x: np.ndarray) -> np.ndarray:
        dv = 2.0 * self.delta * self.v
        return self.a * ((1.0 + dv) / 2.0 * self.fprime(x, +1)
                         + (1.0 - dv) / 2.0 * self.fprime(x, -1))

    def gap(self, x: np.ndarray) -> float:
        return self.value(x) - self.min_value


def gsc_eval(inst: StronglyConvexInstance, x: np.ndarray):
    """(value, gradient, minimizer) of the strongly convex instance at x."""
    x = as_vector(x, inst.d)
    if not inst.domain.contains(x):
        raise ValueError("query point outside the instance box")
    return inst.value(x), inst.grad(x), inst.minimizer


@dataclass(frozen=True)
class GscOracle:
    """Per coordinate, emits a f'+_i(x) w.p. (1 + 2 delta v_i)/2, else a f'-_i(x).

    |f'+-_i| <= b on the box, so every sample has l2 norm at most
    a b sqrt(d) = B.
    """

    inst: StronglyConvexInstance

    @property
    def bound(self) -> float:
        return self.inst.B

    @property
    def q(self) -> float:
        return 2.0

    def mean(self, x) -> np.ndarray:
        return self.inst.grad(x)

    def sample_batch(self, x, n: int, rng: np.random.Generator) -> np.ndarray:
        inst = self.inst
        fp = inst.a * inst.fprime(x, +1)
        fm = inst.a * inst.fprime(x, -1)
        p_plus = (1.0 + 2.0 * inst.delta * inst.v) / 2.0
        u = rng.random((n, inst.d))
        return np.where(u < p_plus, fp, fm)

    def sample(self, x, rng: np.random.Generator) -> np.ndarray:
        return self.sample_batch(x, 1, rng)[0]

    def sample_coord(self, x, i: int, rng: np.random.Generator) -> float:
        inst = self.inst
        p_plus = (1.0 + 2.0 * inst.delta * inst.v[i]) / 2.0
        sign = 1 if rng.random() < p_plus else -1
        shifted = float(x[i]) + sign * inst.b
        return inst.a * (inst.theta * inst.b * (1.0 if shifted >= 0 else -1.0)
                         + (1.0 - inst.theta) / 2.0 * shifted)


# --- block-sparse mean estimation ------------------------------------------


@dataclass(frozen=True)
class BlockSparseInstance:
    """f_v(x) = ||x - v||_2^2 on [-1,1]^d with v supported on one s-block.

    Blocks are the d/s contiguous chunks {(i-1)s+1, ..., is}; the nonzero
    entries of v all have magnitude delta in [0, 1].
    """

    v: np.ndarray
    s: int

    def __post_init__(self):
        v = np.asarray(self.v, dtype=np.float64)
        object.__setattr__(self, "v", v)
        d = v.size
        if d % self.s != 0:
            raise ValueError("d must be divisible by the block size s")
        support = np.nonzero(v)[0]
        if support.size:
            blk = support[0] // self.s
            if np.any(support // self.s != blk):
                raise ValueError("support must lie in one contiguous block")
            mags = np.abs(v[support])
            if np.any(np.abs(mags - mags[0]) > 1e-12):
                raise ValueError("nonzero entries must share one magnitude")
            if mags[0] > 1.0:
                raise ValueError("entry magnitude must be <= 1")

    @staticmethod
    def make(d: int, s: int, block_index: int, delta: float,
             signs=None) -> "BlockSparseInstance":
        if not 0 <= block_index < d // s:
            raise ValueError("block index out of range")
        v = np.zeros(d)
        sl = slice(block_index * s, (block_index + 1) * s)
        v[sl] = delta * (np.ones(s) if signs is None else np.asarray(signs))
        return BlockSparseInstance(v, s)

    @property
    def d(self) -> int:
        return self.v.size

    @property
    def delta(self) -> float:
        support = np.nonzero(self.v)[0]
        return float(np.abs(self.v[support[0]])) if support.size else 0.0

    @property
    def block_index(self) -> int:
        support = np.nonzero(self.v)[0]
        return int(support[0] // self.s) if support.size else 0

    @property
    def minimizer(self) -> np.ndarray:
        return self.v

    @property
    def min_value(self) -> float:
        return 0.0

    def value(self, x: np.ndarray) -> float:
        return float(np.sum((np.asarray(x, dtype=np.float64) - self.v) ** 2))

    def grad(self, x: np.ndarray) -> np.ndarray:
        return 2.0 * (np.asarray(x, dtype=np.float64) - self.v)

    def gap(self, x: np.ndarray) -> float:
        return self.value(x)


@dataclass(frozen=True)
class BlockSparseOracle:
    """Returns 2(x - X) for X in {-1,1}^d with independent coordinates, E X = v."""

    inst: BlockSparseInstance

    @property
    def bound(self) -> float:
        # |2(x - X)(i)| <= 4 on [-1,1]^d
        return 4.0 * math.sqrt(self.inst.d)

    @property
    def q(self) -> float:
        return 2.0

    def mean(self, x) -> np.ndarray:
        return self.inst.grad(x)

    def sample_batch(self, x, n: int, rng: np.random.Generator) -> np.ndarray:
        inst = self.inst
        x = np.asarray(x, dtype=np.float64)
        u = rng.random((n, inst.d))
        X = np.where(u < (1.0 + inst.v) / 2.0, 1.0, -1.0)
        return 2.0 * (x - X)

    def sample(self, x, rng: np.random.Generator) -> np.ndarray:
        return self.sample_batch(x, 1, rng)[0]

    def sample_coord_batch(self, i: int, n: int,
                           rng: np.random.Generator) -> np.ndarray:
        """n independent draws of X(i) alone (the oblivious channel view)."""
        u = rng.random(n)
        return np.where(u < (1.0 + self.inst.v[i]) / 2.0, 1.0, -1.0)


# --- discrepancy metric -----------------------------------------------------


def psi_metric(inst, grid_step: float):
    """Grid evaluation of the per-coordinate discrepancy and its minimum.

    psi_i = min_y [g_{i,1}(y) + g_{i,-1}(y)] - min_y g_{i,1} - min_y g_{i,-1}
    over y in [-b, b]; requires grid_step <= b * 1e-3.
    """
    b = inst.b
    if grid_step > b * 1e-3:
        raise ValueError("grid_step must be at most b * 1e-3")
    y = np.arange(-b, b + grid_step / 2.0, grid_step)
    if isinstance(inst, ConvexHardInstance):
        g_plus = inst.a * np.abs(y - b)
        g_minus = inst.a * np.abs(y + b)
    elif isinstance(inst, StronglyConvexInstance):
        g_plus = inst.coord_value(+1.0, y)
        g_minus = inst.coord_value(-1.0, y)
    else:
        raise TypeError("psi_metric supports the G_c and G_sc families")
    psi_val = float(np.min(g_plus + g_minus) - np.min(g_plus) - np.min(g_minus))
    psi_i = np.full(inst.d, psi_val)
    return psi_i, psi_val


# --- oracle assumption checks ----------------------------------------------


@dataclass(frozen=True)
class OracleReport:
    bias: np.ndarray
    std_err: np.ndarray
    max_norm_q: float
    bound: float
    bias_ok: bool
    bound_ok: bool

    @property
    def passed(self) -> bool:
        return self.bias_ok and self.bound_ok


def check_oracle_assumptions(oracle, x: np.ndarray, n: int,
                             rng: np.random.Generator,
                             se_gate: float = 5.0) -> OracleReport:
    """Empirical check of the unbiasedness and almost-sure bound assumptions.

    Draws n samples at x, flags any coordinate whose bias exceeds ``se_gate``
    standard errors, and any sample whose lq norm exceeds B (1 + 1e-9).
    """
    if n < 10_000:
        raise ValueError("need at least 1e4 samples for the bias gate")
    samples = oracle.sample_batch(x, n, rng)
    mean = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / math.sqrt(n)
    bias = mean - oracle.mean(x)
    q = oracle.q
    if math.isinf(q):
        norms = np.max(np.abs(samples), axis=1)
    else:
        norms = np.sum(np.abs(samples) ** q, axis=1) ** (1.0 / q)
    max_norm = float(norms.max())
    bias_ok = bool(np.all(np.abs(bias) <= se_gate * np.maximum(se, 1e-300)))
    bound_ok = max_norm <= oracle.bound * (1.0 + 1e-9)
    return OracleReport(bias, se, max_norm, oracle.bound, bias_ok, bound_ok)


def check_b_alpha(inst: StronglyConvexInstance, D: float) -> bool:
    """Whether B / alpha >= D sqrt(d) / 4 for the realized (B, alpha)."""
    if inst.alpha == 0.0:
        return True
    return inst.B / inst.alpha >= D * math.sqrt(inst.d) / 4.0


# --- smoothness parameter gamma and likelihood ratios -----------------------


def gamma_p12(delta: float) -> float:
    """gamma = 4 delta / sqrt(1 - 4 delta^2) for the product hard oracle."""
    return 4.0 * delta / math.sqrt(1.0 - 4.0 * delta ** 2)


def gamma_pinf(delta: float, d: int) -> float:
    """The sparse-oracle gamma, carrying an extra 1/sqrt(d) factor."""
    return gamma_p12(delta) / math.sqrt(d)


def p12_likelihood_ratio(inst: ConvexHardInstance, i: int,
                         x: np.ndarray) -> float:
    """p_{v flipped at i}(x) / p_v(x) for a P12 oracle output x."""
    s = 1.0 if x[i] >= 0 else -1.0
    dv = 2.0 * inst.delta * inst.v[i] * s
    return (1.0 + dv) / (1.0 - dv)


# --- JSON serialization -----------------------------------------------------


def instance_to_json(inst) -> str:
    if isinstance(inst, ConvexHardInstance):
        payload = {"family": "gc", "d": inst.d, "v": inst.v.tolist(),
                   "delta": inst.delta, "b": inst.b, "B": inst.B,
                   "regime": inst.regime, "q": inst.q}
    elif isinstance(inst, StronglyConvexInstance):
        payload = {"family": "gsc", "d": inst.d, "v": inst.v.tolist(),
                   "delta": inst.delta, "theta": inst.theta,
                   "b": inst.b, "B": inst.B}
    elif isinstance(inst, BlockSparseInstance):
        payload = {"family": "blocksparse", "d": inst.d, "s": inst.s,
                   "v": inst.v.tolist()}
    else:
        raise TypeError(f"cannot serialize {type(inst).__name__}")
    return json.dumps(payload)


def instance_from_json(text: str):
    data = json.loads(text)
    family = data["family"]
    if family == "gc":
        if "v" in data:
            v = np.asarray(data["v"], dtype=np.float64)
        else:
            gen = np.random.Generator(np.random.Philox(
                np.random.SeedSequence(data["v_seed"])))
            v = np.where(gen.random(data["d"]) < 0.5, -1.0, 1.0)
        return ConvexHardInstance(v, data["delta"], data["b"], data["B"],
                                  data.get("regime", "p12"),
                                  data.get("q", 2.0))
    if family == "gsc":
        v = np.asarray(data["v"], dtype=np.float64)
        return StronglyConvexInstance(v, data["delta"], data["theta"],
                                      data["b"], data["B"])
    if family == "blocksparse":
        return BlockSparseInstance(np.asarray(data["v"], dtype=np.float64),
                                   data["s"])
    raise ValueError(f"unknown instance family {family!r}")
