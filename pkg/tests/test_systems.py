import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from mixedstep.precision import D, S, StagePrecision
from mixedstep.systems import (
    ALL_DOUBLE,
    CounterRng,
    InvalidParam,
    NonFiniteOutput,
    eval_rhs,
    flop_profile,
    kuramoto_final_time,
    lco_analytic,
    make_cc,
    make_kuramoto,
    make_lco,
    make_linear,
)

ALL_SINGLE = StagePrecision(S, S, S)
PRECISIONS = [
    StagePrecision(a, b, c) for a in (S, D) for b in (S, D) for c in (S, D)
]


# --- loop references: one scalar at a time, ascending j, same association ---

def _loop_rhs(sys, X, sp):
    f = sp.f_prec.dtype.type
    s = sp.sum_prec.dtype.type
    g = sp.g_prec.dtype.type
    o = (D if D in (sp.f_prec, sp.sum_prec) else S).dtype.type
    n, d = sys.n, sys.d
    xs = np.asarray(X, dtype=np.float64).reshape(n, d)
    out = np.zeros((n, d))
    w = s(1.0) / s(n)
    for i in range(n):
        fi = _agent(sys, i, [f(v) for v in xs[i]], f)
        acc = [None] * d
        for j in range(n):
            gij = _pair(sys, i, [g(v) for v in xs[i]], [g(v) for v in xs[j]], g)
            for k in sys.coupled:
                term = s(gij[k]) * w
                acc[k] = term if acc[k] is None else acc[k] + term
        for k in range(d):
            val = o(fi[k])
            if k in sys.coupled:
                val = val + o(acc[k])
            out[i, k] = float(val)
    return out.ravel()


def _agent(sys, i, x, T):
    p = sys.params
    if sys.name == "lco":
        return [x[1], -x[0]]
    if sys.name == "kuramoto":
        return [T(p.omega[i])]
    th, k1 = T(p.theta_h_vec[i]), T(p.k1_vec[i])
    x1, x2, x3, x4 = x
    one = T(1.0)
    sq = x2 * x2
    hill = (T(p.k0) * th) / (th + sq * sq)
    f1 = hill * (T(p.a) * x1 * x1 + one) - k1 * x1
    f2 = T(p.k2) * (x1 - x2)
    k3sq = T(p.k3) * T(p.k3)
    f3 = x3 * (one - x3 * x3 / T(3.0)) - x4 + T(p.stimulus_I0) * (one - k3sq / (k3sq + x1 * x1))
    f4 = T(p.eps_cc) * (x3 + T(p.b) - T(p.c) * x4)
    return [f1, f2, f3, f4]


def _pair(sys, i, xi, xj, T):
    p = sys.params
    if sys.name == "lco":
        return [xj[0] - xi[0], T(0.0)]
    if sys.name == "kuramoto":
        return [T(p.coupling_K) * np.sin(xj[0] - xi[0])]
    th = T(p.theta_h_vec[i])
    sq = xi[1] * xi[1]
    pref = T(p.k0) * th * T(p.a) * T(p.coupling_K) / (th + sq * sq)
    return [pref * np.arctan(xj[0] - xi[0]), T(0.0), T(0.0), T(0.0)]


def _systems(n=5, seed=3):
    cc = make_cc(n, K=1.0, I0=1.5, seed=seed)
    x_cc = np.tile([1.0, 1.0, -1.19, -0.62], n) + 0.2 * (CounterRng(seed).uniform(4 * n) - 0.5)
    return [
        (make_lco(n, seed), 2.0 * CounterRng(seed).uniform(2 * n)),
        (make_kuramoto(n, 0.7, 1.3, seed), 2 * np.pi * CounterRng(seed).uniform(n)),
        (cc, x_cc),
    ]


# --- worked examples ---

@pytest.mark.parametrize("sp", PRECISIONS, ids=lambda sp: sp.label())
def test_lco_identical_agents(sp):
    sys = make_lco(2)
    np.testing.assert_array_equal(eval_rhs(sys, 0.0, [1, 0, 1, 0], sp), [0, -1, 0, -1])


def test_kuramoto_antiphase_equilibrium():
    sys = make_kuramoto(2, 0.0, 1.0)
    out = eval_rhs(sys, 0.0, [0.0, np.pi])
    np.testing.assert_allclose(out, [0.0, 0.0], atol=1e-15)


def test_kuramoto_quarter_phase():
    sys = make_kuramoto(2, 0.0, 1.0)
    np.testing.assert_allclose(eval_rhs(sys, 0.0, [0.0, np.pi / 2]), [0.5, -0.5], rtol=0, atol=1e-16)


# --- bitwise equality with scalar loops ---

@pytest.mark.parametrize("sp", [ALL_DOUBLE, ALL_SINGLE, StagePrecision(D, D, S), StagePrecision(S, D, S)],
                         ids=lambda sp: sp.label())
@pytest.mark.parametrize("which", [0, 1, 2], ids=["lco", "kuramoto", "cc"])
def test_eval_rhs_matches_loop_reference(which, sp):
    sys, X = _systems()[which]
    np.testing.assert_array_equal(eval_rhs(sys, 0.0, X, sp), _loop_rhs(sys, X, sp))


def test_single_differs_from_double():
    sys, X = _systems()[2]
    a = eval_rhs(sys, 0.0, X, ALL_DOUBLE)
    b = eval_rhs(sys, 0.0, X, ALL_SINGLE)
    assert not np.array_equal(a, b)
    np.testing.assert_allclose(a, b, rtol=1e-5, atol=1e-6)


def test_non_finite_raises():
    sys = make_linear(1e30)
    with pytest.raises(NonFiniteOutput):
        eval_rhs(sys, 0.0, [1e30], ALL_SINGLE)
    assert np.isfinite(eval_rhs(sys, 0.0, [1e30], ALL_DOUBLE)).all()


# --- factories ---

def test_factory_errors():
    with pytest.raises(InvalidParam):
        make_lco(0)
    with pytest.raises(InvalidParam):
        make_kuramoto(3, -0.1, 1.0)
    with pytest.raises(InvalidParam):
        make_cc(0, 1.0, 1.0)


def test_zero_sigma_gives_zero_frequencies():
    assert np.all(make_kuramoto(50, 0.0, 1.0, seed=4).params.omega == 0.0)


def test_lco_weights():
    sys = make_lco(8)
    assert sys.weights == (1 / 8, 0.0)
    assert sys.coupled == (0,)


def test_cc_theta_positive_and_k1_bounded():
    sys = make_cc(2000, 1.0, 1.5, seed=11)
    k1 = sys.params.k1_vec
    assert np.all((k1 > 0.05) & (k1 < 1.95))
    np.testing.assert_array_equal(sys.params.theta_h_vec, k1 / (2.0 - k1))
    assert np.all(sys.params.theta_h_vec > 0)
    assert abs(k1.mean() - 0.339278) < 0.01
    assert abs(k1.std() - 0.090909) < 0.01


def test_prng_is_deterministic_and_stream_separated():
    a = CounterRng(7, 0).uniform(10)
    np.testing.assert_array_equal(a, CounterRng(7, 0).uniform(10))
    assert not np.array_equal(a, CounterRng(7, 1).uniform(10))
    assert not np.array_equal(a, CounterRng(8, 0).uniform(10))
    u = CounterRng(1).uniform(100_000)
    assert u.min() >= 0.0 and u.max() < 1.0
    z = CounterRng(2).normal(100_001)
    assert len(z) == 100_001
    assert abs(z.mean()) < 0.01 and abs(z.std() - 1.0) < 0.01


def test_kuramoto_final_time_formula():
    omega = np.array([-1.0, 0.5, 2.0])
    assert kuramoto_final_time(omega, 2.0) == 4 * math.pi / (1.0 * 2.0 + 0.001)
    sys = make_kuramoto(10, 0.5, 1.0, seed=2)
    assert sys.t_final == kuramoto_final_time(sys.params.omega, 1.0)


# --- analytic LCO solution ---

def _expm_oracle(X0, t):
    n = len(X0) // 2
    # full 2N x 2N generator of the linear system
    A = np.zeros((2 * n, 2 * n))
    for i in range(n):
        A[2 * i, 2 * i + 1] = 1.0
        A[2 * i + 1, 2 * i] = -1.0
    for i in range(n):
        for j in range(n):
            A[2 * i, 2 * j] += 1.0 / n
        A[2 * i, 2 * i] -= 1.0
    return expm(A * t) @ np.asarray(X0, dtype=np.float64)


def test_lco_identical_agents_rotate():
    t = 0.7
    np.testing.assert_allclose(lco_analytic([1, 0, 1, 0, 1, 0], t),
                               np.tile([math.cos(t), -math.sin(t)], 3), atol=1e-15)


def test_lco_analytic_against_matrix_exponential():
    got = lco_analytic([1.0, 0.0, -1.0, 0.0], 1.0)
    np.testing.assert_allclose(got, _expm_oracle([1.0, 0.0, -1.0, 0.0], 1.0), rtol=1e-13, atol=1e-15)
    X0 = 2.0 * CounterRng(5).uniform(12)
    np.testing.assert_allclose(lco_analytic(X0, 2.3), _expm_oracle(X0, 2.3), rtol=1e-12, atol=1e-14)


@given(st.integers(0, 10_000), st.integers(1, 8))
def test_lco_analytic_identity_at_zero(seed, n):
    X0 = 2.0 * CounterRng(seed).uniform(2 * n)
    np.testing.assert_allclose(lco_analytic(X0, 0.0), X0, rtol=0, atol=1e-15)


@given(st.integers(0, 10_000), st.integers(1, 8))
def test_lco_rhs_is_analytic_derivative(seed, n):
    X0 = 2.0 * CounterRng(seed).uniform(2 * n)
    h = 1e-5
    deriv = (lco_analytic(X0, h) - lco_analytic(X0, -h)) / (2 * h)
    rhs = eval_rhs(make_lco(n), 0.0, X0)
    # central difference error is O(h^2) on an O(1) solution
    np.testing.assert_allclose(rhs, deriv, rtol=0, atol=1e-9)


# --- invariants ---

@given(st.integers(0, 10_000), st.integers(2, 40), st.floats(0.0, 3.0),
       st.sampled_from([ALL_DOUBLE, ALL_SINGLE, StagePrecision(D, D, S)]))
def test_kuramoto_mean_phase_velocity(seed, n, K, sp):
    sys = make_kuramoto(n, 0.5, K, seed=seed)
    X = 2 * np.pi * CounterRng(seed).uniform(n)
    out = eval_rhs(sys, 0.0, X, sp)
    omega_mean = float(np.mean(sp.f_prec.dtype.type(sys.params.omega)))
    bound = 10 * n * sp.sum_prec.epsilon * max(K, 1e-300) + 10 * sp.f_prec.epsilon
    assert abs(out.mean() - omega_mean) <= bound


def test_cc_trajectory_stays_finite():
    from mixedstep.solver import SolverConfig, solve

    for seed, K, I0 in [(1, 10.0, 10.0), (2, 0.001, 0.228249), (3, 1.0, 1.5)]:
        sys = make_cc(10, K, I0, seed=seed, t_final=72.0)
        x0 = np.tile([1.0, 1.0, -1.19, -0.62], 10) + 0.2 * (CounterRng(seed).uniform(40) - 0.5)
        res = solve(sys, x0, 0.0, 72.0, "double", SolverConfig(rel_tol=1e-4))
        assert res.completed and np.isfinite(res.final_state).all()


# --- flop profiles ---

def test_flop_profiles():
    assert flop_profile(make_lco(3)).theta_w == 4
    assert flop_profile(make_kuramoto(3, 0.1, 1.0)).theta_G == 3
    for sys in (make_lco(3), make_kuramoto(3, 0.1, 1.0), make_cc(3, 1.0, 1.0)):
        fp = flop_profile(sys)
        assert fp.theta_w == 2 * sys.d and fp.d == sys.d


def _count(fn, counter):
    before = counter.n
    fn()
    return counter.n - before


@pytest.mark.parametrize("which", [0, 1, 2], ids=["lco", "kuramoto", "cc"])
def test_profile_matches_pairwise_oracle(which, counter, counting):
    """Evaluating F_i and G_ij one agent/pair at a time from the formulas."""
    sys, X = _systems(4)[which]
    fp = flop_profile(sys)
    xs = counting(np.asarray(X).reshape(sys.n, sys.d), counter)

    def T(v):
        # parameters are tracked too: k0*theta counts as a flop of F_i
        return counting(v, counter).item()

    n_f = _count(lambda: [_agent(sys, i, list(xs[i]), T) for i in range(sys.n)], counter)
    n_g = _count(lambda: [_pair(sys, i, list(xs[i]), list(xs[j]), T)
                          for i in range(sys.n) for j in range(sys.n)], counter)
    assert n_f == fp.theta_F * sys.n
    assert n_g == fp.theta_G * sys.n ** 2


def test_kuramoto_implementation_flops_n100(counter, counting):
    sys = make_kuramoto(100, 0.5, 1.0, seed=1)
    xs = counting(2 * np.pi * CounterRng(1).uniform(100).reshape(100, 1), counter)

    def cast(v):
        return counting(v, counter)

    fp = flop_profile(sys)
    assert _count(lambda: sys.agent_term(0.0, xs, cast), counter) == fp.theta_F * 100
    assert _count(lambda: sys.interaction(0.0, xs, cast), counter) == fp.theta_G * 100 ** 2


def test_cc_implementation_flops_do_not_exceed_profile(counter, counting):
    sys, X = _systems(6)[2]
    xs = counting(np.asarray(X).reshape(6, 4), counter)

    def cast(v):
        return counting(v, counter)

    fp = flop_profile(sys)
    # constants shared by all agents are formed once per call
    assert _count(lambda: sys.agent_term(0.0, xs, cast), counter) <= fp.theta_F * 6
    assert _count(lambda: sys.interaction(0.0, xs, cast), counter) <= fp.theta_G * 36
