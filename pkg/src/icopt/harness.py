"""Experiment harness: declarative configs, seeded parallel trials, CSV output.

A config describes one experiment kind (rate sweep, adaptive-vs-nonadaptive
separation, information check) with explicit grids; every trial draws its
randomness from the substream (base seed, grid index, trial index), so
results are identical regardless of execution order or parallelism degree.
"""

from __future__ import annotations

import itertools
import json
import math
import time

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .channels import Identity, LdpCoordRR, ldp_mechanism_matrix, verify_ldp
from .core import BoxLinf, L1Ball, RngStream, mirror_grad, mirror_grad_inverse
from .oracles import (BlockSparseInstance, ConvexHardInstance, GcOracleP12,
                      GcOraclePinf, GcSignOracle, GscOracle, BlockSparseOracle,
                      StronglyConvexInstance, check_b_alpha,
                      check_oracle_assumptions, psi_metric)
from .optimizers import (Constant, InvSqrt, OptConfig, StronglyConvexStep,
                         acd_run, nonadaptive_blocksparse_run, pistar_run,
                         rcd_run, repeat_channel, sgd_run)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "RunRecord",
    "CSV_HEADER",
    "load_config",
    "config_from_dict",
    "grid_points",
    "run_experiment",
    "records_to_csv",
    "write_csv",
    "verify_suite",
]

CSV_HEADER = ("experiment_id,trial,d,s,r,eps,T,algorithm,channel,"
              "final_error,bits_used,seed,wall_time_ms")


class ConfigError(ValueError):
    """Raised for malformed experiment configurations (CLI exit code 2)."""


_KINDS = ("rate_sweep", "separation", "mi_check")
_FAMILIES = ("gc", "gsc", "blocksparse")
_ALGORITHMS = ("sgd", "rcd", "pistar")
_CHANNELS = ("identity", "ldp", "onebit", "oblivious")
_SCHEDULES = ("constant", "horizon", "invsqrt", "strongly_convex")


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative experiment description; no implicit physics defaults.

    Grid-valued fields (d, T, eps, r) take the cartesian product; bias delta,
    schedules and channel parameters must be stated explicitly.
    """

    kind: str
    experiment_id: str
    seed: int
    trials: int
    d_grid: tuple[int, ...]
    T_grid: tuple[int, ...]
    family: str | None = None
    algorithm: str | None = None
    channel: str | None = None
    p_norm: float | None = None
    eps_grid: tuple[float, ...] = ()
    r_grid: tuple[int, ...] = ()
    s: int | None = None
    delta: float | None = None
    theta: float | None = None
    B: float | None = None
    D: float | None = None
    schedule_kind: str | None = None
    schedule_param: float | None = None
    record_timing: bool = False

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"kind: unknown experiment kind {self.kind!r}")
        if self.trials < 1:
            raise ConfigError("trials: must be >= 1")
        if not self.d_grid or not self.T_grid:
            raise ConfigError("d/T: grids must be nonempty")
        if any(d < 1 for d in self.d_grid) or any(T < 1 for T in self.T_grid):
            raise ConfigError("d/T: grid entries must be >= 1")
        if self.kind == "mi_check":
            if self.delta is None:
                raise ConfigError("delta: required for mi_check")
            return
        if self.kind == "separation":
            if self.s is None or self.delta is None:
                raise ConfigError("s/delta: required for separation")
            for d in self.d_grid:
                if d % self.s != 0:
                    raise ConfigError(f"s: block size {self.s} must divide d={d}")
            return
        # rate_sweep
        if self.family not in ("gc", "gsc"):
            raise ConfigError(f"family: rate sweeps need gc or gsc, got "
                              f"{self.family!r}")
        if self.algorithm not in _ALGORITHMS:
            raise ConfigError(f"algorithm: unknown {self.algorithm!r}")
        if self.delta is None or self.B is None or self.D is None:
            raise ConfigError("delta/B/D: required for rate sweeps")
        if self.schedule_kind not in _SCHEDULES:
            raise ConfigError(f"schedule: unknown kind {self.schedule_kind!r}")
        if self.schedule_kind != "strongly_convex" and self.schedule_param is None:
            raise ConfigError("schedule: constant/horizon/invsqrt need a "
                              "parameter")
        if self.family == "gc" and self.p_norm not in (1, 2):
            raise ConfigError("p_norm: gc sweeps need p_norm in {1, 2}")
        if self.family == "gsc" and self.theta is None:
            raise ConfigError("theta: required for gsc sweeps")
        if self.algorithm == "sgd":
            if self.channel not in ("identity", "ldp"):
                raise ConfigError("channel: sgd supports identity or ldp")
            if self.channel == "ldp" and not self.eps_grid:
                raise ConfigError("eps: ldp sweeps need an eps grid")
        if self.algorithm == "pistar" and not self.r_grid:
            raise ConfigError("r: pistar sweeps need an r grid")


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    for key in ("d", "T", "eps", "r"):
        if key in data:
            val = data.pop(key)
            data[f"{key}_grid"] = tuple(val) if isinstance(val, (list, tuple)) \
                else (val,)
    for key in ("d_grid", "T_grid", "eps_grid", "r_grid"):
        if key in data:
            data[key] = tuple(data[key])
    allowed = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        return ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    path = str(path)
    try:
        if path.endswith(".toml"):
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        else:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
    except (OSError, ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data)


@dataclass(frozen=True)
class RunRecord:
    experiment_id: str
    trial: int
    d: int
    s: int | None
    r: int | None
    eps: float | None
    T: int
    algorithm: str
    channel: str
    final_error: float | None
    bits_used: int | None
    seed: int
    wall_time_ms: float | None


def grid_points(config: ExperimentConfig) -> list[tuple]:
    """Cartesian (d, T, eps, r) grid; unused axes carried as None."""
    eps_axis = config.eps_grid or (None,)
    r_axis = config.r_grid or (None,)
    return list(itertools.product(config.d_grid, config.T_grid,
                                  eps_axis, r_axis))


def _draw_signs(gen: np.random.Generator, d: int) -> np.ndarray:
    return np.where(gen.random(d) < 0.5, -1.0, 1.0)


def _build_schedule(config: ExperimentConfig, inst, steps: int) -> object:
    if config.schedule_kind == "constant":
        return Constant(config.schedule_param)
    if config.schedule_kind == "horizon":
        # constant step tuned to the run length, param / sqrt(steps)
        return Constant(config.schedule_param / math.sqrt(steps))
    if config.schedule_kind == "invsqrt":
        return InvSqrt(config.schedule_param)
    return StronglyConvexStep(inst.alpha)


def _gc_instance(config: ExperimentConfig, d: int, v: np.ndarray):
    p = config.p_norm
    q = math.inf if p == 1 else p / (p - 1.0)
    b = config.D / (2.0 * d ** (1.0 / p))
    return ConvexHardInstance(v, config.delta, b, config.B, "p12", q)


def _run_rate_trial(config: ExperimentConfig, point, gidx: int,
                    trial: int) -> RunRecord:
    d, T, eps, r = point
    gen = RngStream(config.seed).child(gidx, trial).generator()
    t0 = time.perf_counter()
    if config.family == "gc":
        inst = _gc_instance(config, d, _draw_signs(gen, d))
        oracle = GcOracleP12(inst)
        min_value = inst.min_value
    else:
        b = config.D / (2.0 * math.sqrt(d))
        inst = StronglyConvexInstance(_draw_signs(gen, d), config.delta,
                                      config.theta, b, config.B)
        oracle = GscOracle(inst)
        min_value = inst.min_value
    steps = T * r // d if config.algorithm == "pistar" else T
    schedule = _build_schedule(config, inst, steps)
    bits = 0
    if config.algorithm == "rcd":
        opt = OptConfig("rcd", T, d, schedule=schedule, domain=inst.domain)
        result = rcd_run(oracle, opt, gen)
        chan = "oblivious"
    elif config.algorithm == "sgd":
        opt = OptConfig("sgd", T, d, schedule=schedule, domain=inst.domain)
        if config.channel == "ldp":
            scale = config.B / d ** (1.0 / (math.inf if config.p_norm == 1
                                            else config.p_norm / (config.p_norm - 1)))
            strategy = repeat_channel(LdpCoordRR(d, eps, scale), T)
        else:
            strategy = repeat_channel(Identity(d), T)
        result = sgd_run(oracle, strategy, opt, gen)
        bits = result.total_bits
        chan = config.channel
    else:  # pistar
        bound = inst.B / d ** (1.0 / inst.q)
        opt = OptConfig("pistar", T, d, schedule=schedule,
                        domain=L1Ball(d, config.D / 2.0), r=r, bound=bound)
        result = pistar_run(GcSignOracle(inst), opt, gen)
        bits = result.total_bits
        chan = "onebit"
    err = max(inst.value(result.x_hat) - min_value, 0.0)
    ms = (time.perf_counter() - t0) * 1000.0 if config.record_timing else None
    return RunRecord(config.experiment_id, trial, d, None,
                     r if config.algorithm == "pistar" else None,
                     eps if config.channel == "ldp" else None,
                     T, config.algorithm, chan, err, bits, config.seed, ms)


def _run_separation_trial(config: ExperimentConfig, point, gidx: int,
                          trial: int) -> list[RunRecord]:
    d, T, _, _ = point
    s = config.s
    stream = RngStream(config.seed).child(gidx, trial)
    vgen = stream.child(0).generator()
    blk = int(vgen.integers(d // s))
    signs = _draw_signs(vgen, s)
    inst = BlockSparseInstance.make(d, s, blk, config.delta, signs)
    out = []
    for alg_idx, (name, runner) in enumerate(
            (("acd", acd_run), ("nonadaptive", nonadaptive_blocksparse_run))):
        gen = stream.child(alg_idx + 1).generator()
        t0 = time.perf_counter()
        result = runner(inst, T, gen)
        ms = (time.perf_counter() - t0) * 1000.0 if config.record_timing else None
        err = max(inst.value(result.x_hat), 0.0)
        out.append(RunRecord(config.experiment_id, trial, d, s, None, None, T,
                             name, "oblivious", err, 0, config.seed, ms))
    return out


def _run_task(args) -> list[RunRecord]:
    config, point, gidx, trial = args
    try:
        if config.kind == "separation":
            return _run_separation_trial(config, point, gidx, trial)
        return [_run_rate_trial(config, point, gidx, trial)]
    except Exception:
        d, T, eps, r = point
        return [RunRecord(config.experiment_id, trial, d, config.s, r, eps, T,
                          config.algorithm or config.kind, config.channel or "",
                          None, None, config.seed, None)]


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> list[RunRecord]:
    """Run every (grid point, trial) and return records in deterministic order."""
    if config.kind == "mi_check":
        raise ConfigError("mi_check configs are reported, not run as trials")
    points = grid_points(config)
    tasks = [(config, points[g], g, t)
             for g in range(len(points)) for t in range(config.trials)]
    if jobs <= 1:
        batches = map(_run_task, tasks)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            batches = list(pool.map(_run_task, tasks, chunksize=8))
    return [rec for batch in batches for rec in batch]


# --- CSV ----------------------------------------------------------------------


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def records_to_csv(records) -> str:
    lines = [CSV_HEADER]
    for r in records:
        lines.append(",".join(_cell(v) for v in (
            r.experiment_id, r.trial, r.d, r.s, r.r, r.eps, r.T, r.algorithm,
            r.channel, r.final_error, r.bits_used, r.seed, r.wall_time_ms)))
    return "\n".join(lines) + "\n"


def write_csv(records, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(records_to_csv(records))


# --- verification suite ---------------------------------------------------------


def _rr_matrix(eps: float) -> np.ndarray:
    keep = math.exp(eps) / (1.0 + math.exp(eps))
    return np.array([[keep, 1.0 - keep], [1.0 - keep, keep]])


def _check_quantizer(gen) -> tuple[bool, str]:
    from .channels import one_bit_quantize_batch

    d, B, n = 8, 1.0, 100_000
    for _ in range(3):
        g = gen.uniform(-B, B, size=d)
        decoded = one_bit_quantize_batch(g, B, np.arange(d), n, gen)
        se = decoded.std(axis=0, ddof=1) / math.sqrt(n)
        if np.any(np.abs(decoded.mean(axis=0) - g) > 5.0 * se):
            return False, "decoded mean off by more than 5 SE"
    return True, ""


def _check_ldp(gen) -> tuple[bool, str]:
    for eps in (0.1, 0.5, 1.0):
        got = verify_ldp(_rr_matrix(eps))
        if abs(got - eps) > 1e-12:
            return False, f"rr channel at eps={eps} measured {got!r}"
    grid = np.array([[x, y] for x in (-1.0, 0.0, 1.0) for y in (-1.0, 0.0, 1.0)])
    for eps in (0.5, 1.0):
        got = verify_ldp(ldp_mechanism_matrix(grid, eps, 1.0))
        if got > eps + 1e-9:
            return False, f"vector mechanism exceeded eps={eps}: {got!r}"
    return True, ""


def _check_psi(gen) -> tuple[bool, str]:
    for _ in range(5):
        d = int(gen.integers(1, 5))
        v = _draw_signs(gen, d)
        a = float(gen.uniform(0.5, 2.0))
        b = float(gen.uniform(0.5, 2.0))
        delta = float(gen.uniform(0.01, 1.0 / 6.0))
        # pick B so the realized slope is the drawn a: B = a d^{1/q}/(2 delta)
        inst = ConvexHardInstance(v, delta, b, a * d / (2 * delta), "p12", 1.0)
        _, psi = psi_metric(inst, b * 1e-3)
        if abs(psi - 2.0 * inst.a * b) > 1e-3 * 2.0 * inst.a * b:
            return False, f"convex family psi {psi!r} vs {2.0 * inst.a * b!r}"
        theta = float(gen.uniform(0.0, 0.6))
        delta = float(gen.uniform(0.01, 0.5 * (1 - theta) / (1 + theta)))
        sc = StronglyConvexInstance(v, delta, theta, b,
                                    float(gen.uniform(0.5, 2.0)))
        _, psi = psi_metric(sc, b * 1e-3)
        want = 2 * sc.a * b ** 2 * delta ** 2 * (1 + theta) ** 2 / (1 - theta)
        if abs(psi - want) > 1e-3 * max(want, 1e-12):
            return False, f"strongly convex psi {psi!r} vs {want!r}"
    return True, ""


def _check_b_alpha_draws(gen) -> tuple[bool, str]:
    for _ in range(100):
        d = int(gen.integers(1, 33))
        theta = float(gen.uniform(0.0, 0.9))
        delta = float(gen.uniform(0.0, 0.5 * (1 - theta) / (1 + theta)))
        inst = StronglyConvexInstance(_draw_signs(gen, d), delta, theta,
                                      float(gen.uniform(0.5, 2.0)),
                                      float(gen.uniform(0.5, 2.0)))
        if not check_b_alpha(inst, inst.b):
            return False, f"violated at d={d} theta={theta!r}"
    return True, ""


def _check_oracles(gen) -> tuple[bool, str]:
    d = 6
    v = _draw_signs(gen, d)
    gc = ConvexHardInstance(v, 0.1, 1.0, 1.0, "p12", 2.0)
    sc = StronglyConvexInstance(v, 0.1, 0.25, 1.0, 2.0)
    bs = BlockSparseInstance.make(d, 3, 1, 0.5)
    for oracle, box in ((GcOracleP12(gc), gc.b), (GcOraclePinf(gc), gc.b),
                        (GscOracle(sc), sc.b), (BlockSparseOracle(bs), 1.0)):
        for _ in range(3):
            x = gen.uniform(-box, box, size=d)
            report = check_oracle_assumptions(oracle, x, 20_000, gen)
            if not report.passed:
                return False, f"{type(oracle).__name__} failed at a query point"
    return True, ""


def _check_gsc_grad(gen) -> tuple[bool, str]:
    inst = StronglyConvexInstance(_draw_signs(gen, 4), 0.1, 0.25, 1.0, 2.0)
    h = 1e-6 * inst.b
    for _ in range(20):
        x = gen.uniform(-0.9 * inst.b, 0.9 * inst.b, size=4)
        grad = inst.grad(x)
        for i in range(4):
            e = np.zeros(4)
            e[i] = h
            fd = (inst.value(x + e) - inst.value(x - e)) / (2 * h)
            if abs(fd - grad[i]) > 1e-4 * max(abs(grad[i]), 1e-8):
                return False, f"coordinate {i}: fd {fd!r} vs {grad[i]!r}"
    return True, ""


def _check_mirror(gen) -> tuple[bool, str]:
    for a in (8.0 / 7.0, 1.5, 2.0):
        for _ in range(10):
            x = gen.uniform(-1.0, 1.0, size=5)
            back = mirror_grad_inverse(mirror_grad(x, a), a)
            if np.max(np.abs(back - x)) > 1e-8 * max(1.0, np.max(np.abs(x))):
                return False, f"round trip failed at a={a!r}"
    return True, ""


_VERIFY_CHECKS = (
    ("quantizer-unbiasedness", _check_quantizer),
    ("ldp-exactness", _check_ldp),
    ("psi-closed-forms", _check_psi),
    ("b-over-alpha-bound", _check_b_alpha_draws),
    ("oracle-assumptions", _check_oracles),
    ("gsc-gradient-finite-diff", _check_gsc_grad),
    ("mirror-map-round-trip", _check_mirror),
)


def verify_suite(seed: int) -> tuple[list[str], bool]:
    """Run the property suite; returns (report lines, all passed)."""
    lines = []
    ok = True
    for index, (name, check) in enumerate(_VERIFY_CHECKS):
        gen = RngStream(seed).child(index).generator()
        passed, detail = check(gen)
        ok = ok and passed
        lines.append(f"PASS {name}" if passed
                     else f"FAIL {name}: {detail}")
    return lines, ok
