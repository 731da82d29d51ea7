"""Fully coupled agent systems and their mixed-precision right-hand side.

Every system has the form

    dX_i/dt = F_i(t, X_i) + sum_j M_ij * G_ij(t, X_i, X_j),   i = 1..N

with agents of dimension ``d`` stored contiguously in a flat state vector of
length ``d*N``. Subclasses provide ``agent_term`` (all F_i at once) and
``interaction`` (the full table of G_ij for the weighted slots, laid out
source-major as ``[j, i, slot]``).
Both receive their input already rounded to the working format plus a
``cast`` callable that brings constants into that format, so the very same
code runs in binary32, binary64, or on instrumented scalars.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .precision import D, StagePrecision, wider

__all__ = [
    "InvalidParam",
    "NonFiniteOutput",
    "BenchmarkParams",
    "FlopProfile",
    "CoupledSystem",
    "LinearOscillators",
    "Kuramoto",
    "CircadianClock",
    "LinearDecay",
    "CounterRng",
    "eval_rhs",
    "make_lco",
    "make_kuramoto",
    "make_cc",
    "make_linear",
    "lco_analytic",
    "flop_profile",
    "kuramoto_final_time",
    "ALL_DOUBLE",
]

ALL_DOUBLE = StagePrecision(D, D, D)


class InvalidParam(ValueError):
    pass


class NonFiniteOutput(ArithmeticError):
    pass


class CounterRng:
    """Deterministic per-test random stream.

    Philox4x64-10 keyed by ``(test_id, stream)``; uniforms take the top 53 bits
    of each 64-bit word, normals come from the Box-Muller transform.
    """

    NAME = "philox4x64-10(key=[test_id,stream]); uniform=top53bits; normal=box-muller"

    def __init__(self, test_id: int, stream: int = 0):
        key = np.array([test_id, stream], dtype=np.uint64)
        self._bits = np.random.Philox(counter=0, key=key)

    def uniform(self, n: int) -> np.ndarray:
        raw = self._bits.random_raw(n)
        return (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normal(self, n: int) -> np.ndarray:
        m = (n + 1) // 2
        u = self.uniform(2 * m)
        radius = np.sqrt(-2.0 * np.log1p(-u[0::2]))
        angle = 2.0 * np.pi * u[1::2]
        z = np.empty(2 * m)
        z[0::2] = radius * np.cos(angle)
        z[1::2] = radius * np.sin(angle)
        return z[:n]


@dataclass(frozen=True)
class FlopProfile:
    """Flop counts per F_i call, per G_ij call and per weighted accumulation.

    Convention: +, -, *, / and each elementary-function call count one;
    integer powers count their multiplies; sign flips and copies are free.
    """

    theta_F: int
    theta_G: int
    theta_w: int
    d: int


@dataclass
class BenchmarkParams:
    benchmark: str
    t_final: float = 0.0
    omega: np.ndarray | None = None
    sigma: float = 0.0
    coupling_K: float = 0.0
    k1_vec: np.ndarray | None = None
    theta_h_vec: np.ndarray | None = None
    stimulus_I0: float = 0.0
    k0: float = 2.0
    k2: float = 0.144832
    k3: float = 2.0
    a: float = 2.0
    b: float = 0.7
    c: float = 0.8
    hill_h: int = 4
    eps_cc: float = 0.228249


class CoupledSystem:
    """Base class; see module docstring for the evaluation contract."""

    name = "generic"
    d = 1
    # weights are 1/N on the coupled slots and are formed as 1/N in the working format
    mean_field = False

    def __init__(self, n: int, weights, params: BenchmarkParams | None = None):
        if n < 1:
            raise InvalidParam(f"N must be >= 1, got {n}")
        self.n = int(n)
        self.weights = tuple(float(w) for w in weights)
        if len(self.weights) != self.d:
            raise InvalidParam("weight vector must have length d")
        self.coupled = tuple(k for k, w in enumerate(self.weights) if w != 0.0)
        self.params = params if params is not None else BenchmarkParams(self.name)
        self._wcache: dict = {}

    @property
    def size(self) -> int:
        return self.n * self.d

    @property
    def t_final(self) -> float:
        return self.params.t_final

    def agent_term(self, t, x, cast):
        raise NotImplementedError

    def interaction(self, t, x, cast):
        raise NotImplementedError

    def weight_values(self, cast):
        """Weights of the coupled slots, formed in the working format."""
        if self.mean_field:
            return [cast(1.0) / cast(self.n) for _ in self.coupled]
        return [cast(w) for w in (self.weights[k] for k in self.coupled)]

    def _weight_array(self, dtype):
        cached = self._wcache.get(dtype)
        if cached is None:
            cached = np.array(self.weight_values(_numpy_cast(dtype)), dtype=dtype)
            self._wcache[dtype] = cached
        return cached

    @property
    def flops(self) -> FlopProfile:
        return flop_profile(self)

    def __repr__(self):
        return f"{type(self).__name__}(n={self.n})"


def _numpy_cast(dtype):
    def cast(v):
        return np.asarray(v, dtype=dtype)

    return cast


def eval_rhs(sys: CoupledSystem, t: float, X, sp: StagePrecision = ALL_DOUBLE) -> np.ndarray:
    """Right-hand side of ``sys`` at ``(t, X)`` under stage precision ``sp``.

    The agent term runs in ``sp.f_prec`` and the interactions in
    ``sp.g_prec``; interactions are then cast to ``sp.sum_prec``, weighted and
    summed sequentially over ascending ``j`` (self-pair included). The agent
    term and the coupling sum are added in the wider of the two formats and
    the result is returned in binary64.

    Raises :class:`NonFiniteOutput` if any component is NaN or infinite.
    """
    X = np.asarray(X, dtype=np.float64)
    xs = X.reshape(sys.n, sys.d)
    out_fmt = wider(sp.f_prec, sp.sum_prec)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        fdt = sp.f_prec.dtype
        out = sys.agent_term(t, xs.astype(fdt), _numpy_cast(fdt))
        out = np.array(out, dtype=out_fmt.dtype)
        if sys.coupled:
            gdt, sdt = sp.g_prec.dtype, sp.sum_prec.dtype
            g = sys.interaction(t, xs.astype(gdt), _numpy_cast(gdt))
            terms = g.astype(sdt) * sys._weight_array(sdt)
            # reducing the outer axis adds whole rows in j order; pairwise
            # summation only kicks in along the contiguous axis
            acc = np.add.reduce(terms, axis=0, dtype=sdt)
            for m, k in enumerate(sys.coupled):
                out[:, k] += acc[:, m].astype(out_fmt.dtype)
        res = out.astype(np.float64).ravel()
    if not np.isfinite(res).all():
        raise NonFiniteOutput(f"non-finite right-hand side for {sys!r} under {sp.label()}")
    return res


class LinearOscillators(CoupledSystem):
    """Harmonic oscillators pulled towards the population mean position."""

    name = "lco"
    d = 2
    mean_field = True

    def __init__(self, n, params=None):
        super().__init__(n, (1.0 / n, 0.0), params or BenchmarkParams("lco"))

    def agent_term(self, t, x, cast):
        out = np.empty_like(x)
        out[:, 0] = x[:, 1]
        out[:, 1] = -x[:, 0]
        return out

    def interaction(self, t, x, cast):
        pos = x[:, 0]
        return (pos[:, None] - pos[None, :])[:, :, None]


class Kuramoto(CoupledSystem):
    name = "kuramoto"
    d = 1
    mean_field = True

    def __init__(self, n, params):
        super().__init__(n, (1.0 / n,), params)

    def agent_term(self, t, x, cast):
        return np.broadcast_to(cast(self.params.omega).reshape(-1, 1), x.shape)

    def interaction(self, t, x, cast):
        phase = x[:, 0]
        return (cast(self.params.coupling_K) * np.sin(phase[:, None] - phase[None, :]))[:, :, None]


class CircadianClock(CoupledSystem):
    """Goodwin-type clock (slots 1-2) driving a FitzHugh-Nagumo cycle (slots 3-4).

    Coupling acts on the first slot only, through the arctangent of position
    differences scaled by the agent's own repression factor.
    """

    name = "cc"
    d = 4
    mean_field = True

    def __init__(self, n, params):
        super().__init__(n, (1.0 / n, 0.0, 0.0, 0.0), params)

    def _hill_power(self, y):
        # y**4 as two multiplies
        sq = y * y
        return sq * sq

    def agent_term(self, t, x, cast):
        p = self.params
        th = cast(p.theta_h_vec)
        k1 = cast(p.k1_vec)
        x1, x2, x3, x4 = x[:, 0], x[:, 1], x[:, 2], x[:, 3]
        one = cast(1.0)
        hill = (cast(p.k0) * th) / (th + self._hill_power(x2))
        f1 = hill * (cast(p.a) * x1 * x1 + one) - k1 * x1
        f2 = cast(p.k2) * (x1 - x2)
        k3sq = cast(p.k3) * cast(p.k3)
        f3 = (x3 * (one - x3 * x3 / cast(3.0)) - x4
              + cast(p.stimulus_I0) * (one - k3sq / (k3sq + x1 * x1)))
        f4 = cast(p.eps_cc) * (x3 + cast(p.b) - cast(p.c) * x4)
        return np.stack([f1, f2, f3, f4], axis=1)

    def interaction(self, t, x, cast):
        p = self.params
        th = cast(p.theta_h_vec)
        x1 = x[:, 0]
        num = cast(p.k0) * th * cast(p.a) * cast(p.coupling_K)
        pref = num / (th + self._hill_power(x[:, 1]))
        return (pref[None, :] * np.arctan(x1[:, None] - x1[None, :]))[:, :, None]


class LinearDecay(CoupledSystem):
    """Uncoupled scalar test problem dx/dt = rate * x."""

    name = "linear"
    d = 1

    def __init__(self, n=1, rate=1.0, t_final=1.0):
        super().__init__(n, (0.0,), BenchmarkParams("linear", t_final=t_final))
        self.rate = float(rate)

    def agent_term(self, t, x, cast):
        return cast(self.rate) * x


def kuramoto_final_time(omega, K: float) -> float:
    """Four mean periods of the locked state, guarded against K*|omega| -> 0."""
    return 4.0 * math.pi / (float(np.median(np.abs(omega))) * K + 0.001)


def make_lco(N: int, seed: int = 0, t_final: float = 10 * math.pi) -> LinearOscillators:
    if N < 1:
        raise InvalidParam(f"N must be >= 1, got {N}")
    return LinearOscillators(N, BenchmarkParams("lco", t_final=t_final))


def make_kuramoto(N: int, sigma: float, K: float, seed: int = 0,
                  t_final: float | None = None) -> Kuramoto:
    """Kuramoto population with natural frequencies drawn from N(0, sigma^2)."""
    if N < 1:
        raise InvalidParam(f"N must be >= 1, got {N}")
    if sigma < 0:
        raise InvalidParam(f"sigma must be >= 0, got {sigma}")
    omega = sigma * CounterRng(seed, stream=1).normal(N)
    if t_final is None:
        t_final = kuramoto_final_time(omega, K)
    params = BenchmarkParams("kuramoto", t_final=t_final, omega=omega,
                             sigma=float(sigma), coupling_K=float(K))
    return Kuramoto(N, params)


K1_MEAN = 0.339278
K1_STD = 0.090909
K1_BOUNDS = (0.05, 1.95)


def _draw_k1(N: int, seed: int) -> np.ndarray:
    rng = CounterRng(seed, stream=1)
    k1 = K1_MEAN + K1_STD * rng.normal(N)
    lo, hi = K1_BOUNDS
    bad = (k1 <= lo) | (k1 >= hi)
    while bad.any():
        k1[bad] = K1_MEAN + K1_STD * rng.normal(int(bad.sum()))
        bad = (k1 <= lo) | (k1 >= hi)
    return k1


def make_cc(N: int, K: float, I0: float, seed: int = 0, t_final: float = 60.0) -> CircadianClock:
    if N < 1:
        raise InvalidParam(f"N must be >= 1, got {N}")
    k1 = _draw_k1(N, seed)
    params = BenchmarkParams("cc", t_final=t_final, coupling_K=float(K),
                             stimulus_I0=float(I0), k1_vec=k1)
    params.theta_h_vec = k1 / (params.k0 - k1)
    return CircadianClock(N, params)


def make_linear(rate: float = 1.0, N: int = 1, t_final: float = 1.0) -> LinearDecay:
    return LinearDecay(N, rate, t_final)


def lco_analytic(X0, t: float) -> np.ndarray:
    """Exact state of the linear-oscillator benchmark after time ``t``.

    The population mean rotates as a unit harmonic oscillator; deviations from
    it follow u' = w - u, w' = -u, whose propagator is
    exp(-t/2) [cos(wt) I + sin(wt)/w (A + I/2)] with w = sqrt(3)/2.
    """
    X0 = np.asarray(X0, dtype=np.float64)
    xs = X0.reshape(-1, 2)
    pos, vel = xs[:, 0], xs[:, 1]
    mx, mv = pos.mean(), vel.mean()
    u, w = pos - mx, vel - mv

    c, s = math.cos(t), math.sin(t)
    mx_t = mx * c + mv * s
    mv_t = -mx * s + mv * c

    om = math.sqrt(3.0) / 2.0
    decay = math.exp(-t / 2.0)
    co, sn = math.cos(om * t), math.sin(om * t) / om
    # A + I/2 = [[-1/2, 1], [-1, 1/2]]
    u_t = decay * (co * u + sn * (-0.5 * u + w))
    w_t = decay * (co * w + sn * (-u + 0.5 * w))

    out = np.empty_like(xs)
    out[:, 0] = mx_t + u_t
    out[:, 1] = mv_t + w_t
    return out.ravel()


_PROFILES = {
    # F = (v, -x) is a copy and a sign flip; G = x_j - x_i
    "lco": FlopProfile(theta_F=0, theta_G=1, theta_w=4, d=2),
    # F = omega_i; G = K sin(x_j - x_i)
    "kuramoto": FlopProfile(theta_F=0, theta_G=3, theta_w=2, d=1),
    # F: 11 + 2 + 12 + 4 over the four slots; G: x^4 (2), add, 3 muls, div, sub, atan, mul
    "cc": FlopProfile(theta_F=29, theta_G=10, theta_w=8, d=4),
    "linear": FlopProfile(theta_F=1, theta_G=0, theta_w=2, d=1),
}


def flop_profile(sys: CoupledSystem) -> FlopProfile:
    """Flop counts for ``sys`` under the convention in :class:`FlopProfile`.

    The weighting cost is one multiply and one accumulate per slot, ``2d``,
    for every benchmark.
    """
    try:
        return _PROFILES[sys.name]
    except KeyError:
        raise InvalidParam(f"no flop profile for system {sys.name!r}") from None
