"""Accuracy metrics and the flop-based performance proxy."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .precision import PrecisionPolicy, S, Variant
from .solver import BS32, scheme_flops
from .systems import FlopProfile, lco_analytic

__all__ = [
    "LengthMismatch",
    "PerfProxy",
    "ErrorReport",
    "normalized_final_error",
    "real_local_error",
    "theta_counts",
    "rho_fraction",
    "rho_limit",
    "rho_from_counts",
    "gamma_of",
    "beta_of",
    "capital_gamma_of",
    "perf_proxy",
    "BS_STAGES",
]

# evaluations per accepted Bogacki-Shampine step once FSAL is in effect
BS_STAGES = 3


class LengthMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ErrorReport:
    normalized_final_error: float | None
    mean_E_BS: float | None
    mean_E_analytic: float | None = None


@dataclass(frozen=True)
class PerfProxy:
    r: float
    rho: float
    beta: float
    gamma: float
    capital_gamma: float
    theta_ev: int
    theta_sch: int
    theta_total: int
    s: int = BS_STAGES
    t_l: float | None = None
    t_h: float | None = None


def normalized_final_error(x_ref, x, N: int) -> float:
    """Euclidean distance between final states divided by sqrt(N)."""
    x_ref = np.asarray(x_ref, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x_ref.shape != x.shape:
        raise LengthMismatch(f"state lengths differ: {x_ref.shape} vs {x.shape}")
    if N < 1:
        raise ValueError("N must be >= 1")
    return float(np.linalg.norm(x_ref - x) / math.sqrt(N))


def real_local_error(x_n, x_next, h_n: float, ab: float, rel: float) -> float:
    """One-step error of the linear-oscillator benchmark against its exact flow.

    The exact solution restarts from ``x_n`` so earlier steps do not leak in;
    each slot is scaled by max(|exact|, ab/rel).
    """
    exact = lco_analytic(x_n, h_n)
    scale = np.maximum(np.abs(exact), ab / rel)
    return float(np.max(np.abs(np.asarray(x_next, dtype=np.float64) - exact) / scale))


def theta_counts(fp: FlopProfile, N: int, d: int | None = None, s: int = BS_STAGES,
                 theta_sch: int | None = None) -> tuple[int, int, int]:
    """Flops per solver step: (evaluation, scheme, total = s*evaluation + scheme)."""
    d = fp.d if d is None else d
    if theta_sch is None:
        theta_sch = scheme_flops(BS32)
    ev = fp.theta_F * N + fp.theta_G * N * N + fp.theta_w * N * N
    sch = theta_sch * d * N
    return ev, sch, s * ev + sch


def rho_fraction(variant, fp: FlopProfile, N: int, s: int = BS_STAGES,
                 theta_sch: int | None = None) -> float:
    """Share of a step's flops done in binary32 for the named variant."""
    v = Variant.parse(variant)
    if v is Variant.SINGLE:
        return 1.0
    if v is Variant.DOUBLE:
        return 0.0
    ev, _, total = theta_counts(fp, N, fp.d, s, theta_sch)
    if v is Variant.MIXED1:
        return (2 * ev + N * N * fp.theta_G) / total
    return 3 * N * N * fp.theta_G / total


def rho_limit(variant, fp: FlopProfile) -> float:
    """Large-N limit of :func:`rho_fraction`."""
    v = Variant.parse(variant)
    pair = fp.theta_G + fp.theta_w
    if v is Variant.SINGLE:
        return 1.0
    if v is Variant.DOUBLE:
        return 0.0
    if v is Variant.MIXED1:
        return 1.0 - fp.theta_w / (3 * pair)
    return 1.0 - fp.theta_w / pair


def rho_from_counts(fp: FlopProfile, N: int, evaluations, n_steps: int,
                    policy: PrecisionPolicy, theta_sch: int | None = None) -> float:
    """Low-precision flop share measured from a run's evaluation counters.

    ``evaluations`` maps each :class:`StagePrecision` to how many right-hand
    sides were evaluated with it; ``n_steps`` counts accepted and failed
    attempts, each of which pays the scheme combinations once. Scheme flops
    are charged to the policy's storage format.
    """
    if theta_sch is None:
        theta_sch = scheme_flops(BS32)
    low = total = 0
    per_f, per_g, per_w = fp.theta_F * N, fp.theta_G * N * N, fp.theta_w * N * N
    for sp, count in evaluations.items():
        total += count * (per_f + per_g + per_w)
        low += count * ((per_f if sp.f_prec is S else 0)
                        + (per_g if sp.g_prec is S else 0)
                        + (per_w if sp.sum_prec is S else 0))
    sch = n_steps * theta_sch * fp.d * N
    total += sch
    if policy.storage is S:
        low += sch
    return low / total if total else 0.0


def gamma_of(rho: float, r: float) -> float:
    """Per-step time ratio mixed/high: rho*r + (1 - rho)."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    if not 0.0 < r < 1.0:
        raise ValueError(f"r must lie in (0, 1), got {r}")
    return rho * r + (1.0 - rho)


def beta_of(n_steps_high: int, n_steps_mixed: int) -> float:
    """Step-count ratio high/mixed, failed attempts included."""
    if n_steps_high < 1 or n_steps_mixed < 1:
        raise ValueError("step counts must be >= 1")
    return n_steps_high / n_steps_mixed


def capital_gamma_of(gamma: float, beta: float) -> float:
    """Total time ratio mixed/high; below 1 means the mixed solver wins."""
    return gamma / beta


def perf_proxy(variant, fp: FlopProfile, N: int, r: float, n_steps_high: int,
               n_steps_mixed: int, s: int = BS_STAGES, t_l: float | None = None,
               t_h: float | None = None) -> PerfProxy:
    if t_l is not None and t_h is not None:
        r = t_l / t_h
    ev, sch, total = theta_counts(fp, N, fp.d, s)
    rho = rho_fraction(variant, fp, N, s)
    beta = beta_of(n_steps_high, n_steps_mixed)
    gamma = gamma_of(rho, r)
    return PerfProxy(r, rho, beta, gamma, capital_gamma_of(gamma, beta), ev, sch, total, s, t_l, t_h)
