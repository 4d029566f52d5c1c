"""Information-constraint channels and channel-selection strategies.

Three constraint families are implemented: local differential privacy
(coordinate sampling + randomized response), r-bit communication (unbiased
one-bit quantization of selected coordinates), and oblivious coordinate
sampling.  Each channel consumes an explicit numpy Generator and returns a
:class:`Message` whose payload is a discrete symbol, with enough decode
metadata to reconstruct an unbiased gradient estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Message",
    "ChannelSpec",
    "Identity",
    "LdpCoordRR",
    "OneBitPerm",
    "Oblivious",
    "Strategy",
    "nonadaptive",
    "adaptive",
    "strategy_next",
    "one_bit_quantize",
    "one_bit_quantize_batch",
    "ldp_rr_bit",
    "ldp_vector_mechanism",
    "oblivious_sample",
    "apply_channel",
    "decode",
    "verify_ldp",
    "ldp_mechanism_matrix",
    "load_channel_csv",
]


@dataclass(frozen=True)
class Message:
    """One channel output: discrete payload plus decode metadata.

    ``payload`` is the symbol actually transmitted (bits or an (index, value)
    pair); ``bit_cost`` counts transmitted bits; ``decode_info`` carries the
    side information (coordinates, scale factors, sampling probability) the
    receiver needs to form an unbiased estimate.  ``decodable`` is False when
    no finite-variance unbiased reconstruction exists (LDP with eps = 0).
    """

    payload: tuple
    bit_cost: int
    decode_info: dict
    decodable: bool = True


# --- channel specs ----------------------------------------------------------


@dataclass(frozen=True)
class ChannelSpec:
    dim: int

    family: str = field(init=False, default="none")


@dataclass(frozen=True)
class Identity(ChannelSpec):
    """Unconstrained pass-through; used for no-constraint baselines."""

    family = "none"


@dataclass(frozen=True)
class LdpCoordRR(ChannelSpec):
    """eps-LDP mechanism: uniform coordinate pick, sign rounding, binary RR."""

    eps: float = 1.0
    scale: float = 1.0  # almost-sure bound on |g(i)|

    family = "ldp"

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError("privacy budget eps must be >= 0")
        if self.scale <= 0:
            raise ValueError("scale bound must be positive")


@dataclass(frozen=True)
class OneBitPerm(ChannelSpec):
    """r-bit channel: one unbiased bit for each of r chosen coordinates."""

    r: int = 1
    bound: float = 1.0  # almost-sure bound on |g(i)|
    coords: tuple[int, ...] = (0,)

    family = "com"

    def __post_init__(self):
        if not 1 <= self.r <= self.dim:
            raise ValueError("need 1 <= r <= d")
        cs = tuple(self.coords)
        if len(cs) != self.r or len(set(cs)) != self.r:
            raise ValueError("coords must hold exactly r distinct indices")
        if any(not 0 <= c < self.dim for c in cs):
            raise ValueError("coordinate index out of range")
        if self.bound <= 0:
            raise ValueError("bound must be positive")


@dataclass(frozen=True)
class Oblivious(ChannelSpec):
    """Oblivious sampling channel specified by a probability vector over [d]."""

    p: tuple[float, ...] = (1.0,)

    family = "obl"

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        if p.size != self.dim:
            raise ValueError("probability vector length must equal d")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("p must be a probability vector (sum 1 to 1e-12)")

    @staticmethod
    def uniform(dim: int) -> "Oblivious":
        return Oblivious(dim, p=tuple([1.0 / dim] * dim))

    @staticmethod
    def point_mass(dim: int, i: int) -> "Oblivious":
        p = [0.0] * dim
        p[i] = 1.0
        return Oblivious(dim, p=tuple(p))


# --- elementary mechanisms --------------------------------------------------


def one_bit_quantize(g: np.ndarray, bound: float, coords: Sequence[int],
                     rng: np.random.Generator) -> Message:
    """Unbiased 1-bit quantizer per coordinate on [-bound, bound].

    Each listed coordinate is sent as a single bit decoding to +bound with
    probability (g(i) + bound) / (2 bound) and to -bound otherwise, so the
    decoded value has mean g(i).
    """
    g = np.asarray(g, dtype=np.float64)
    coords = np.asarray(coords, dtype=np.int64)
    vals = g[coords]
    if np.any(np.abs(vals) > bound):
        raise ValueError("coordinate magnitude exceeds quantizer bound")
    bits = rng.random(coords.size) < (vals + bound) / (2.0 * bound)
    return Message(
        payload=tuple(int(b) for b in bits),
        bit_cost=int(coords.size),
        decode_info={"kind": "onebit", "coords": tuple(int(c) for c in coords),
                     "bound": float(bound), "dim": g.size},
    )


def one_bit_quantize_batch(g: np.ndarray, bound: float, coords: Sequence[int],
                           n: int, rng: np.random.Generator) -> np.ndarray:
    """n independent quantizations of g over coords, returned already decoded.

    Same per-draw law as :func:`one_bit_quantize`; used where building n
    Message objects would dominate the runtime.
    """
    g = np.asarray(g, dtype=np.float64)
    coords = np.asarray(coords, dtype=np.int64)
    vals = g[coords]
    if np.any(np.abs(vals) > bound):
        raise ValueError("coordinate magnitude exceeds quantizer bound")
    u = rng.random((n, coords.size))
    return np.where(u < (vals + bound) / (2.0 * bound), bound, -bound)


def ldp_rr_bit(bit: int, eps: float, rng: np.random.Generator) -> int:
    """Binary randomized response: keep the bit w.p. e^eps / (1 + e^eps)."""
    if bit not in (-1, 1):
        raise ValueError("input bit must be +-1")
    if eps < 0:
        raise ValueError("eps must be >= 0")
    keep = math.exp(eps) / (1.0 + math.exp(eps))
    return bit if rng.random() < keep else -bit

def ldp_vector_mechanism(g: np.ndarray, eps: float, scale: float,
                         rng: np.random.Generator) -> Message:
    """eps-LDP gradient release: coordinate pick, sign rounding, RR, unbias.

    Samples j uniformly, stochastically rounds g(j)/scale to a sign bit,
    privatizes the bit with randomized response, and records the unbiasing
    factor d * scale * (e^eps + 1)/(e^eps - 1).  Only the RR-protected bit
    depends on the input, so the end-to-end channel is exactly eps-LDP.
    """
    g = np.asarray(g, dtype=np.float64)
    if np.max(np.abs(g)) > scale * (1 + 1e-12):
        raise ValueError("||g||_inf exceeds the mechanism scale bound")
    d = g.size
    j = int(rng.integers(d)) if d > 1 else 0
    b = 1 if rng.random() < (g[j] / scale + 1.0) / 2.0 else -1
    b_priv = ldp_rr_bit(b, eps, rng)
    decodable = eps > 0
    info = {"kind": "ldp", "index": j, "dim": d, "scale": float(scale),
            "eps": float(eps)}
    if decodable:
        info["unbias"] = d * scale * (math.exp(eps) + 1.0) / (math.exp(eps) - 1.0)
    return Message(payload=(j, b_priv), bit_cost=1 + max(1, d - 1).bit_length(),
                   decode_info=info, decodable=decodable)


def oblivious_sample(g: np.ndarray, p: Sequence[float],
                     rng: np.random.Generator) -> Message:
    """Release one coordinate (i, g(i)) with index i drawn from p.

    decode_info carries p_i so the consumer can form the unbiased estimate
    (g(i)/p_i) e_i; coordinates with p_i = 0 are excluded from the support.
    Point-mass channels consume no randomness.
    """
    g = np.asarray(g, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    support = np.nonzero(p > 0)[0]
    if support.size == 1:
        i = int(support[0])
    else:
        u = rng.random()
        i = int(support[np.searchsorted(np.cumsum(p[support]), u)])
    return Message(payload=(i, float(g[i])), bit_cost=0,
                   decode_info={"kind": "obl", "index": i, "p_i": float(p[i]),
                                "dim": g.size})


def apply_channel(spec: ChannelSpec, g: np.ndarray,
                  rng: np.random.Generator) -> Message:
    """Pass a gradient estimate through the channel described by ``spec``."""
    if isinstance(spec, Identity):
        return Message(payload=tuple(np.asarray(g, dtype=np.float64)),
                       bit_cost=0, decode_info={"kind": "id", "dim": spec.dim})
    if isinstance(spec, LdpCoordRR):
        return ldp_vector_mechanism(g, spec.eps, spec.scale, rng)
    if isinstance(spec, OneBitPerm):
        return one_bit_quantize(g, spec.bound, spec.coords, rng)
    if isinstance(spec, Oblivious):
        return oblivious_sample(g, spec.p, rng)
    raise TypeError(f"unknown channel spec {spec!r}")


def decode(msg: Message) -> np.ndarray:
    """Unbiased gradient estimate reconstructed from a message."""
    if not msg.decodable:
        raise ValueError("message is not decodable (eps = 0 mechanism)")
    info = msg.decode_info
    kind = info["kind"]
    if kind == "id":
        return np.asarray(msg.payload, dtype=np.float64)
    if kind == "onebit":
        out = np.zeros(info["dim"])
        bound = info["bound"]
        for c, bit in zip(info["coords"], msg.payload):
            out[c] = bound if bit else -bound
        return out
    if kind == "ldp":
        out = np.zeros(info["dim"])
        j, b = msg.payload
        out[j] = info["unbias"] * b
        return out
    if kind == "obl":
        out = np.zeros(info["dim"])
        i, val = msg.payload
        out[i] = val / info["p_i"]
        return out
    raise ValueError(f"unknown message kind {kind}")


# --- strategies -------------------------------------------------------------


@dataclass(frozen=True)
class Strategy:
    """Channel-selection rule: a precommitted sequence, or an adaptive rule.

    Adaptive rules are deterministic functions of (history, t, rng); the
    declared ``family`` is enforced on every returned spec.
    """

    family: str
    sequence: tuple[ChannelSpec, ...] | None = None
    rule: Callable[[list, int, np.random.Generator], ChannelSpec] | None = None

    def __post_init__(self):
        if (self.sequence is None) == (self.rule is None):
            raise ValueError("give exactly one of sequence or rule")

    @property
    def is_adaptive(self) -> bool:
        return self.rule is not None


def nonadaptive(specs: Sequence[ChannelSpec], family: str | None = None) -> Strategy:
    specs = tuple(specs)
    if not specs:
        raise ValueError("nonadaptive strategy needs at least one channel")
    fam = family if family is not None else specs[0].family
    return Strategy(family=fam, sequence=specs)


def adaptive(rule, family: str) -> Strategy:
    return Strategy(family=family, rule=rule)


def strategy_next(strategy: Strategy, history: list[Message], t: int,
                  rng: np.random.Generator) -> ChannelSpec:
    """Channel for step t (1-based); nonadaptive strategies ignore history."""
    if t < 1:
        raise ValueError("step index t is 1-based")
    if strategy.sequence is not None:
        if t > len(strategy.sequence):
            raise ValueError(f"step {t} beyond precommitted horizon "
                             f"{len(strategy.sequence)}")
        spec = strategy.sequence[t - 1]
    else:
        spec = strategy.rule(history, t, rng)
    if spec.family != strategy.family:
        raise ValueError(f"strategy of family {strategy.family!r} returned a "
                         f"{spec.family!r} channel")
    return spec


# --- exact LDP verification -------------------------------------------------


def verify_ldp(channel: np.ndarray, check_stochastic: bool = True) -> float:
    """Max log likelihood ratio of a finite channel matrix.

    Rows index inputs, columns outputs; rows must be stochastic.  Returns
    max over outputs y and input pairs (x, x') of ln(W(y|x) / W(y|x')),
    with 0/0 counted as ratio 1 and c/0 (c > 0) as +inf.  The channel is
    eps-LDP iff the returned value is <= eps.
    """
    W = np.asarray(channel, dtype=np.float64)
    if W.ndim != 2:
        raise ValueError("channel matrix must be 2-d")
    if check_stochastic:
        if np.any(W < -1e-15) or np.any(np.abs(W.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("rows must be probability distributions")
    worst = 0.0
    for y in range(W.shape[1]):
        col = W[:, y]
        hi, lo = col.max(), col.min()
        if hi == 0.0:
            continue  # 0/0 everywhere in this column
        if lo == 0.0:
            return math.inf
        worst = max(worst, math.log(hi / lo))
    return worst


def ldp_mechanism_matrix(inputs: np.ndarray, eps: float, scale: float) -> np.ndarray:
    """Exact channel matrix of :func:`ldp_vector_mechanism` on a finite grid.

    Output alphabet is {(j, b) : j in [d], b in {-1, +1}}, flattened as
    column 2*j + (b + 1)/2.
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    n, d = inputs.shape
    keep = math.exp(eps) / (1.0 + math.exp(eps))
    W = np.zeros((n, 2 * d))
    for k in range(n):
        g = inputs[k]
        for j in range(d):
            q = (g[j] / scale + 1.0) / 2.0  # P(pre-RR bit = +1)
            p_plus = q * keep + (1.0 - q) * (1.0 - keep)
            W[k, 2 * j + 1] = p_plus / d
            W[k, 2 * j + 0] = (1.0 - p_plus) / d
    return W


def load_channel_csv(path) -> np.ndarray:
    """Read a row-stochastic channel matrix from CSV (rows = inputs)."""
    W = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    return W
