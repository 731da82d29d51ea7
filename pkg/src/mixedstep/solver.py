"""Adaptive embedded Runge-Kutta integration with per-stage precision.

The Bogacki-Shampine 3(2) pair drives the mixed-precision solvers; the
Dormand-Prince 5(4) pair, always in binary64, produces reference solutions.
Both share one stepper and one adaptive loop.
"""

from __future__ import annotations

import enum
import math
import time
from collections import Counter
from dataclasses import dataclass, field, replace
from fractions import Fraction as Fr

import numpy as np

from .precision import D, PrecisionPolicy, StagePrecision, Variant, policy_for
from .systems import ALL_DOUBLE, CoupledSystem, NonFiniteOutput, eval_rhs

__all__ = [
    "ButcherTableau",
    "BS32",
    "DP54",
    "SolverConfig",
    "Status",
    "StepOutcome",
    "StepLog",
    "SolveResult",
    "bs32_step",
    "rk_step",
    "estimate_error",
    "weighted_max_error",
    "adjust_step",
    "initial_step",
    "solve",
    "dp54_reference",
    "reference_policy",
    "scheme_flops",
]


@dataclass(frozen=True)
class ButcherTableau:
    name: str
    c: tuple
    a: tuple  # a[l] holds the l coefficients of stage l (a[0] is empty)
    b: tuple
    b_tilde: tuple
    order_high: int
    order_low: int
    error_weights: tuple  # b - b_tilde, formed exactly

    @property
    def stages(self) -> int:
        return len(self.c)

    @property
    def fsal(self) -> bool:
        last = self.a[-1]
        return tuple(last) == tuple(self.b[: len(last)]) and self.b[-1] == 0


def _tab(name, c, a, b, bt, p, q):
    f = lambda row: tuple(float(Fr(v)) for v in row)  # noqa: E731
    e = tuple(float(Fr(u) - Fr(v)) for u, v in zip(b, bt))
    return ButcherTableau(name, f(c), tuple(f(r) for r in a), f(b), f(bt), p, q, e)


BS32 = _tab(
    "bogacki-shampine-3(2)",
    ["0", "1/2", "3/4", "1"],
    [[], ["1/2"], ["0", "3/4"], ["2/9", "1/3", "4/9"]],
    ["2/9", "1/3", "4/9", "0"],
    ["7/24", "1/4", "1/3", "1/8"],
    3, 2,
)

DP54 = _tab(
    "dormand-prince-5(4)",
    ["0", "1/5", "3/10", "4/5", "8/9", "1", "1"],
    [
        [],
        ["1/5"],
        ["3/40", "9/40"],
        ["44/45", "-56/15", "32/9"],
        ["19372/6561", "-25360/2187", "64448/6561", "-212/729"],
        ["9017/3168", "-355/33", "46732/5247", "49/176", "-5103/18656"],
        ["35/384", "0", "500/1113", "125/192", "-2187/6784", "11/84"],
    ],
    ["35/384", "0", "500/1113", "125/192", "-2187/6784", "11/84", "0"],
    ["5179/57600", "0", "7571/16695", "393/640", "-92097/339200", "187/2100", "1/40"],
    5, 4,
)


class Status(str, enum.Enum):
    COMPLETED = "Completed"
    MAX_ITERATIONS = "MaxIterations"
    MAX_FAILED_STEPS = "MaxFailedSteps"
    WALL_CLOCK = "WallClock"
    SLOW_SOLVER = "SlowSolver"
    STEP_TOO_SMALL = "StepTooSmall"
    NON_FINITE = "NonFinite"

    def __str__(self):
        return self.value


@dataclass
class SolverConfig:
    """Tolerances, controller constants and stop conditions.

    Time limits are in seconds; ``None`` disables them. The minimum step is
    ``h_min_factor`` times the epsilon of the lowest format in the policy.
    """

    rel_tol: float = 1e-6
    abs_tol: float | None = None
    h_min_factor: float = 100.0
    max_iterations: int = 100_000
    max_failed_fraction: float = 0.85
    wall_clock_limit: float | None = 1.5 * 3600
    slow_solver_time: float | None = 45 * 60
    slow_solver_progress: float = 0.10
    safety: float = 0.9
    fac_min: float = 0.2
    fac_max: float = 5.0
    keep_snapshots: bool = False

    def __post_init__(self):
        if self.abs_tol is None:
            self.abs_tol = self.rel_tol
        if not (0 < self.abs_tol <= self.rel_tol < 1):
            raise ValueError(
                f"need 0 < abs_tol <= rel_tol < 1, got abs_tol={self.abs_tol}, rel_tol={self.rel_tol}"
            )
        if not (self.fac_min < 1 < self.fac_max):
            raise ValueError("need fac_min < 1 < fac_max")

    @property
    def max_failed_steps(self) -> float:
        return self.max_failed_fraction * self.max_iterations

    def without_time_limits(self) -> "SolverConfig":
        return replace(self, wall_clock_limit=None, slow_solver_time=None)


@dataclass
class StepOutcome:
    x_next: np.ndarray
    x_tilde: np.ndarray
    err: float
    accepted: bool
    k4: np.ndarray | None
    h_used: float
    h_next: float
    evaluations: list = field(default_factory=list)


@dataclass
class StepLog:
    t: np.ndarray
    h: np.ndarray
    err: np.ndarray
    accepted: np.ndarray

    def __len__(self):
        return len(self.t)

    def records(self):
        return list(zip(self.t.tolist(), self.h.tolist(), self.err.tolist(), self.accepted.tolist()))


@dataclass
class SolveResult:
    status: Status
    final_state: np.ndarray
    t_reached: float
    n_accepted: int
    n_failed: int
    step_log: StepLog
    evaluations: Counter
    t_final: float
    snapshots: list | None = None

    @property
    def completed(self) -> bool:
        return self.status is Status.COMPLETED

    @property
    def n_steps(self) -> int:
        return self.n_accepted + self.n_failed


def weighted_max_error(diff, x_n, x_next, floor: float) -> float:
    """max_k |diff_k| / max(|x_n,k|, |x_next,k|, floor), in binary64."""
    w = np.maximum(np.maximum(np.abs(x_n), np.abs(x_next)), floor)
    return float(np.max(np.abs(diff) / w))


def estimate_error(x_n, x_next, x_tilde, ab: float, rel: float) -> float:
    """Relative local error of the embedded pair (max norm, floored weights)."""
    x_n, x_next, x_tilde = (np.asarray(v, dtype=np.float64) for v in (x_n, x_next, x_tilde))
    return weighted_max_error(x_next - x_tilde, x_n, x_next, ab / rel)


def adjust_step(h: float, err: float, rel_tol: float, cfg: SolverConfig | None = None,
                exponent: float = 1.0 / 3.0) -> float:
    """Elementary controller: h * clip(safety * (tol/err)**exponent, fac_min, fac_max)."""
    cfg = cfg or SolverConfig(rel_tol=rel_tol)
    if err == 0.0:
        return h * cfg.fac_max
    factor = cfg.safety * (rel_tol / err) ** exponent
    return h * min(cfg.fac_max, max(cfg.fac_min, factor))


def _combine(x, h, coeffs, ks):
    acc = None
    for c, k in zip(coeffs, ks):
        if c == 0.0:
            continue
        term = c * k
        acc = term if acc is None else acc + term
    if acc is None:
        return x.copy()
    return x + h * acc


def _increment(h, coeffs, ks):
    acc = None
    for c, k in zip(coeffs, ks):
        if c == 0.0:
            continue
        term = c * k
        acc = term if acc is None else acc + term
    return h * acc


def scheme_flops(tableau: ButcherTableau = BS32) -> int:
    """Binary64 flops per scalar component per step spent outside evaluations.

    Counts the stage inputs, the propagated solution, the error increment,
    the embedded solution and the weighted division of the error estimate,
    exactly as carried out by :func:`rk_step`.
    """
    n = 0
    last = tableau.stages - 1
    for row in tableau.a[1:last] if tableau.fsal else tableau.a[1:]:
        nz = sum(1 for v in row if v != 0.0)
        n += 2 * nz + 1 if nz else 0
    n += 2 * sum(1 for v in tableau.b if v != 0.0) + 1
    n += 2 * sum(1 for v in tableau.error_weights if v != 0.0)
    return n + 2


def rk_step(sys: CoupledSystem, t: float, x_n, h: float, k1, tableau: ButcherTableau,
            stage_precisions, storage=D, ab: float = 1e-6, rel: float = 1e-6,
            cfg: SolverConfig | None = None) -> StepOutcome:
    """One attempt of an FSAL embedded pair.

    ``stage_precisions[l]`` is the :class:`StagePrecision` of stage ``l + 1``;
    entry 0 is unused since ``k1`` is supplied. All combinations run in
    binary64; the propagated solution is then rounded to ``storage``.
    """
    x_n = np.asarray(x_n, dtype=np.float64)
    ks = [k1]
    s = tableau.stages
    used = []
    exponent = 1.0 / (tableau.order_low + 1)
    cfg = cfg or SolverConfig(rel_tol=rel, abs_tol=ab)
    try:
        for l in range(1, s - 1):
            y = _combine(x_n, h, tableau.a[l], ks)
            ks.append(eval_rhs(sys, t + tableau.c[l] * h, y, stage_precisions[l]))
            used.append(stage_precisions[l])
        x_next = _combine(x_n, h, tableau.b, ks)
        if storage is not D:
            x_next = x_next.astype(storage.dtype).astype(np.float64)
        with np.errstate(over="ignore", invalid="ignore"):
            finite = np.isfinite(x_next).all()
        if not finite:
            raise NonFiniteOutput("non-finite propagated solution")
        k_last = eval_rhs(sys, t + h, x_next, stage_precisions[s - 1])
        used.append(stage_precisions[s - 1])
        ks.append(k_last)
    except NonFiniteOutput:
        nan = np.full_like(x_n, np.nan)
        return StepOutcome(nan, nan, math.inf, False, None, h, 0.5 * h, used)

    diff = _increment(h, tableau.error_weights, ks)
    x_tilde = x_next - diff
    err = weighted_max_error(diff, x_n, x_next, ab / rel)
    accepted = err <= rel
    h_next = adjust_step(h, err, rel, cfg, exponent)
    return StepOutcome(x_next, x_tilde, err, accepted, k_last, h, h_next, used)


def bs32_step(sys: CoupledSystem, t: float, x_n, h: float, k1, policy: PrecisionPolicy | str,
              cfg: SolverConfig) -> StepOutcome:
    """One Bogacki-Shampine 3(2) attempt from ``(t, x_n)`` with FSAL stage ``k1``."""
    if not isinstance(policy, PrecisionPolicy):
        policy = policy_for(policy)
    stages = [None, policy.stage(2), policy.stage(3), policy.stage(4)]
    return rk_step(sys, t, x_n, h, k1, BS32, stages, policy.storage,
                   cfg.abs_tol, cfg.rel_tol, cfg)


def _rms(v):
    return float(np.sqrt(np.mean(np.square(v))))


def initial_step(sys: CoupledSystem, t0: float, x0, cfg: SolverConfig,
                 policy: PrecisionPolicy | None = None, t_final: float | None = None,
                 order: int = 3) -> float:
    """Starting step from two binary64 evaluations.

    Scaled norms d0 = |x0|, d1 = |f(x0)| give a trial step h0 = 0.01 d0/d1;
    an explicit Euler step of size h0 estimates the second derivative d2 and
    h1 = (0.01 / max(d1, d2))**(1/order). The result is min(100 h0, h1),
    capped by a tenth of the interval. A vanishing derivative goes straight
    to the cap. ``policy`` is accepted for interface symmetry only; the
    estimate never depends on it.
    """
    if t_final is None:
        t_final = sys.t_final
    cap = (t_final - t0) / 10.0
    x0 = np.asarray(x0, dtype=np.float64)
    scale = cfg.abs_tol + np.abs(x0) * cfg.rel_tol
    f0 = eval_rhs(sys, t0, x0, ALL_DOUBLE)
    d0 = _rms(x0 / scale)
    d1 = _rms(f0 / scale)
    if d1 == 0.0:
        return cap
    h0 = min(cap, 0.01 * max(d0, 1e-5) / d1)
    f1 = eval_rhs(sys, t0 + h0, x0 + h0 * f0, ALL_DOUBLE)
    d2 = _rms((f1 - f0) / scale) / h0
    dmax = max(d1, d2)
    h1 = cap if dmax == 0.0 else (0.01 / dmax) ** (1.0 / order)
    return min(100.0 * h0, h1, cap)


def solve(sys: CoupledSystem, x0, t0: float, t_final: float,
          policy: PrecisionPolicy | str | Variant, cfg: SolverConfig, *,
          tableau: ButcherTableau = BS32, on_step=None, clock=time.monotonic) -> SolveResult:
    """Integrate ``sys`` from ``t0`` to ``t_final`` with an adaptive embedded pair.

    Stops with a non-``Completed`` status when the iteration or failed-step
    budget is exhausted, when the step falls to ``h_min`` or below, when a
    time limit is hit, or when the initial derivative is not finite. Nothing
    is raised for these conditions.

    Under a binary32 storage policy the time variable advances in binary32
    and the run ends at the binary32 value nearest ``t_final``
    (``SolveResult.t_final``).

    ``on_step(t, h, x_n, outcome)`` is called after every attempt.
    """
    if not t_final > t0:
        raise ValueError("t_final must exceed t0")
    if not isinstance(policy, PrecisionPolicy):
        policy = policy_for(policy)
    if tableau is BS32:
        stages = [None, policy.stage(2), policy.stage(3), policy.stage(4)]
    else:
        stages = [None] + [policy.stage(4)] * (tableau.stages - 1)
    first = policy.first_step_k1
    storage = policy.storage
    exponent_order = tableau.order_low + 1
    h_min = cfg.h_min_factor * policy.lowest.epsilon

    # state, time and step live in the storage format
    keep = storage.dtype.type
    x = np.asarray(x0, dtype=np.float64)
    if storage is not D:
        x = x.astype(storage.dtype).astype(np.float64)
    t_end = float(keep(t_final))
    # evaluations tallied per stage slot; converted to a Counter on exit
    n_first = 0
    per_slot = [0] * tableau.stages
    log_t, log_h, log_e, log_a = [], [], [], []
    snaps = [] if cfg.keep_snapshots else None
    n_acc = n_fail = 0
    t = float(keep(t0))
    started = clock()

    def finish(status):
        evals = Counter()
        if n_first:
            evals[first] += n_first
        for slot, count in enumerate(per_slot):
            if count:
                evals[stages[slot]] += count
        log = StepLog(np.array(log_t, dtype=np.float64), np.array(log_h, dtype=np.float64),
                      np.array(log_e, dtype=np.float64), np.array(log_a, dtype=bool))
        return SolveResult(Status(status), x, t, n_acc, n_fail, log, evals, t_end, snaps)

    try:
        n_first = 1
        k1 = eval_rhs(sys, t, x, first)
        h = initial_step(sys, t, x, cfg, policy, t_end, exponent_order)
    except NonFiniteOutput:
        return finish(Status.NON_FINITE)

    while t < t_end:
        if n_acc + n_fail >= cfg.max_iterations:
            return finish(Status.MAX_ITERATIONS)
        if n_fail > cfg.max_failed_steps:
            return finish(Status.MAX_FAILED_STEPS)
        elapsed = clock() - started
        if cfg.wall_clock_limit is not None and elapsed > cfg.wall_clock_limit:
            return finish(Status.WALL_CLOCK)
        if (cfg.slow_solver_time is not None and elapsed > cfg.slow_solver_time
                and (t - t0) / (t_end - t0) < cfg.slow_solver_progress):
            return finish(Status.SLOW_SOLVER)
        if h <= h_min:
            return finish(Status.STEP_TOO_SMALL)

        remaining = t_end - t
        last = h >= remaining or remaining - h < h_min
        h_step = float(keep(remaining if last else h))
        out = rk_step(sys, t, x, h_step, k1, tableau, stages, storage,
                      cfg.abs_tol, cfg.rel_tol, cfg)
        for slot in range(1, len(out.evaluations) + 1):
            per_slot[slot] += 1
        log_t.append(t)
        log_h.append(h_step)
        log_e.append(out.err)
        log_a.append(out.accepted)
        if on_step is not None:
            on_step(t, h_step, x, out)
        if out.accepted:
            if snaps is not None:
                snaps.append((t, h_step, x, out.x_next))
            t = t_end if last else float(keep(t + h_step))
            x = out.x_next
            k1 = out.k4
            n_acc += 1
        else:
            n_fail += 1
        h = out.h_next
    return finish(Status.COMPLETED)


def reference_policy() -> PrecisionPolicy:
    return PrecisionPolicy.from_rows("reference", ALL_DOUBLE, ALL_DOUBLE, ALL_DOUBLE)


def dp54_reference(sys: CoupledSystem, x0, t0: float, t_final: float,
                   cfg: SolverConfig | None = None, **kw) -> SolveResult:
    """Binary64 Dormand-Prince 5(4) solution at rel = abs = 1e-9."""
    cfg = cfg or SolverConfig(rel_tol=1e-9, abs_tol=1e-9)
    return solve(sys, x0, t0, t_final, reference_policy(), cfg, tableau=DP54, **kw)
