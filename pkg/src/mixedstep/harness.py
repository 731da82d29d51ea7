"""Test campaigns: generation, execution, persistence and statistics.

A campaign is a list of :class:`TestCase`. Each case is solved once by the
Dormand-Prince reference and once per solver variant; one CSV row is written
per (test, solver). Discrete parameters (sizes, tolerances and the
benchmark-specific grids) are crossed; continuous ones are drawn from an
unscrambled Sobol sequence indexed by ``test_id``.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.stats import qmc

from .metrics import gamma_of, normalized_final_error, real_local_error, rho_from_counts
from .precision import Variant, policy_for
from .solver import SolverConfig, Status, dp54_reference, solve
from .systems import CounterRng, flop_profile, make_cc, make_kuramoto, make_lco

__all__ = [
    "UnsupportedDim",
    "InvalidDomain",
    "EmptyInput",
    "CampaignIOError",
    "SchemaError",
    "TestCase",
    "ResultSet",
    "DistributionSummary",
    "RESULT_COLUMNS",
    "STEPLOG_COLUMNS",
    "VARIANTS",
    "REFERENCE",
    "sobol_points",
    "generate_campaign",
    "build_system",
    "initial_conditions",
    "run_test",
    "run_campaign",
    "read_results",
    "write_results",
    "select_complete",
    "complete_rows",
    "summarize",
    "success_rates",
    "beta_values",
    "manifest_for",
]

RESULT_COLUMNS = (
    "test_id", "benchmark", "N", "rel_tol", "abs_tol", "variant", "status",
    "n_accepted", "n_failed", "final_error", "mean_ebs", "mean_eanalytic",
    "beta", "rho", "gamma", "capital_gamma", "t_final",
)
STEPLOG_COLUMNS = ("test_id", "variant", "t", "h", "e_bs", "accepted")

VARIANTS = tuple(v.value for v in Variant)
REFERENCE = "reference"
REFERENCE_TOL = 1e-9

BENCHMARKS = ("lco", "kuramoto", "cc")
LCO_FINAL_TIMES = (10 * math.pi, 20 * math.pi, 50 * math.pi)
CC_COUPLINGS = (0.001, 0.1, 1.0, 10.0)
CC_STIMULI = (0.228249, 1.5, 10.0)
CC_BASE_POINT = (1.0, 1.0, -1.19, -0.62)
CC_TF_RANGE = (48.0, 72.0)
TOL_RANGE = (1e-8, 1e-3)

# continuous parameters drawn from Sobol, one coordinate each
SOBOL_DIMS = {"lco": (), "kuramoto": ("sigma", "K_fraction"), "cc": ("t_final",)}
SOBOL_NAME = "scipy.stats.qmc.Sobol(scramble=False), Joe-Kuo new-joe-kuo-6.21201 direction numbers"
SOBOL_SKIP = 1
# scipy ships direction numbers for this many dimensions
SOBOL_MAX_DIM = 21201


class UnsupportedDim(ValueError):
    pass


class InvalidDomain(ValueError):
    pass


class EmptyInput(ValueError):
    pass


class CampaignIOError(OSError):
    pass


class SchemaError(ValueError):
    pass


def sobol_points(dim: int, n: int, skip: int = 0) -> np.ndarray:
    """Points ``skip .. skip+n-1`` of the unscrambled Sobol sequence, shape (n, dim).

    Point 0 is the origin; dimension 1 then runs 0.5, 0.75, 0.25, 0.375, ...
    """
    if dim < 1 or n < 1 or skip < 0:
        raise ValueError("need dim >= 1, n >= 1, skip >= 0")
    if dim > SOBOL_MAX_DIM:
        raise UnsupportedDim(f"no direction numbers beyond dimension {SOBOL_MAX_DIM}")
    eng = qmc.Sobol(d=dim, scramble=False)
    if skip:
        eng.fast_forward(skip)
    with warnings.catch_warnings():
        # balance warning for n not a power of two; the prefix is still the sequence
        warnings.simplefilter("ignore", UserWarning)
        return eng.random(n)


@dataclass(frozen=True)
class TestCase:
    __test__ = False  # not a pytest class

    test_id: int
    benchmark: str
    N: int
    rel_tol: float
    abs_tol: float
    t_final: float
    sampled_params: dict = field(default_factory=dict)
    ic_spec: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TestCase":
        return cls(**d)


_IC_RULES = {
    "lco": "uniform[0,1)*2 per slot, stream 0",
    "kuramoto": "uniform[0,1)*2pi per agent, stream 0",
    "cc": "(1, 1, -1.19, -0.62) + 0.2*(uniform[0,1)-0.5) per slot, stream 0",
}


def _check_domain(benchmark, n_tests, size_list, tol_list, abs_ratio):
    if benchmark not in BENCHMARKS:
        raise InvalidDomain(f"unknown benchmark {benchmark!r}; expected one of {', '.join(BENCHMARKS)}")
    if n_tests < 1:
        raise InvalidDomain("n_tests must be >= 1")
    if not size_list or not tol_list:
        raise InvalidDomain("size and tolerance lists must be nonempty")
    if any(int(n) != n or n < 1 for n in size_list):
        raise InvalidDomain(f"sizes must be positive integers, got {size_list}")
    lo, hi = TOL_RANGE
    for tol in tol_list:
        if not lo * (1 - 1e-12) <= tol <= hi * (1 + 1e-12):
            raise InvalidDomain(f"tolerance {tol} outside [{lo}, {hi}]")
    if not 0 < abs_ratio <= 1:
        raise InvalidDomain("abs_ratio must lie in (0, 1]")


def generate_campaign(benchmark: str, n_tests: int, size_list, tol_list, *,
                      final_times=LCO_FINAL_TIMES, couplings=CC_COUPLINGS,
                      stimuli=CC_STIMULI, abs_ratio: float = 1.0,
                      first_id: int = 0) -> list[TestCase]:
    """Deterministic list of ``n_tests`` cases for one benchmark.

    Test ``i`` takes grid cell ``i mod len(grid)`` of the crossed discrete
    parameters and Sobol point ``i + 1`` for the continuous ones. The grid
    is sizes x tolerances, extended by final times (LCO) or by coupling and
    stimulus (CC). ``abs_tol = abs_ratio * rel_tol``.
    """
    _check_domain(benchmark, n_tests, size_list, tol_list, abs_ratio)
    if benchmark == "lco":
        if not final_times or any(tf <= 0 for tf in final_times):
            raise InvalidDomain("final times must be positive")
        grid = list(itertools.product(size_list, tol_list, final_times))
    elif benchmark == "cc":
        if not couplings or not stimuli or any(k < 0 for k in couplings):
            raise InvalidDomain("CC couplings must be >= 0 and lists nonempty")
        grid = list(itertools.product(size_list, tol_list, couplings, stimuli))
    else:
        grid = list(itertools.product(size_list, tol_list))

    dims = SOBOL_DIMS[benchmark]
    pts = sobol_points(len(dims), n_tests, first_id + SOBOL_SKIP) if dims else None
    cases = []
    for k in range(n_tests):
        tid = first_id + k
        cell = grid[tid % len(grid)]
        N, tol = int(cell[0]), float(cell[1])
        params: dict = {}
        if benchmark == "lco":
            t_final = float(cell[2])
        elif benchmark == "kuramoto":
            sigma = float(pts[k, 0])
            K = 3.0 * sigma * float(pts[k, 1])
            params = {"sigma": sigma, "K": K}
            t_final = make_kuramoto(N, sigma, K, seed=tid).t_final
        else:
            lo, hi = CC_TF_RANGE
            t_final = lo + (hi - lo) * float(pts[k, 0])
            params = {"K": float(cell[2]), "I0": float(cell[3])}
        cases.append(TestCase(tid, benchmark, N, tol, abs_ratio * tol, t_final,
                              params, _IC_RULES[benchmark]))
    return cases


def build_system(tc: TestCase):
    p = tc.sampled_params
    if tc.benchmark == "lco":
        return make_lco(tc.N, seed=tc.test_id, t_final=tc.t_final)
    if tc.benchmark == "kuramoto":
        return make_kuramoto(tc.N, p["sigma"], p["K"], seed=tc.test_id, t_final=tc.t_final)
    if tc.benchmark == "cc":
        return make_cc(tc.N, p["K"], p["I0"], seed=tc.test_id, t_final=tc.t_final)
    raise InvalidDomain(f"unknown benchmark {tc.benchmark!r}")


def initial_conditions(tc: TestCase) -> np.ndarray:
    """Initial state for ``tc``, seeded by its test id (stream 0)."""
    rng = CounterRng(tc.test_id, stream=0)
    if tc.benchmark == "lco":
        return 2.0 * rng.uniform(2 * tc.N)
    if tc.benchmark == "kuramoto":
        return 2.0 * math.pi * rng.uniform(tc.N)
    if tc.benchmark == "cc":
        jitter = 0.2 * (rng.uniform(4 * tc.N) - 0.5)
        return (np.tile(CC_BASE_POINT, tc.N) + jitter).astype(np.float64)
    raise InvalidDomain(f"unknown benchmark {tc.benchmark!r}")


def _variant_config(tc: TestCase, base: SolverConfig) -> SolverConfig:
    return replace(base, rel_tol=tc.rel_tol, abs_tol=tc.abs_tol, keep_snapshots=False)


def _reference_config(base: SolverConfig) -> SolverConfig:
    return replace(base, rel_tol=REFERENCE_TOL, abs_tol=REFERENCE_TOL, keep_snapshots=False)


def run_test(tc: TestCase, variants=VARIANTS, cfg: SolverConfig | None = None,
             r: float = 0.5, step_log: bool = False):
    """Solve one case with the reference and every variant.

    Returns ``(rows, steps)``; ``rows`` holds one dict per solver in
    :data:`RESULT_COLUMNS` order, reference first, and ``steps`` the step-log
    records when ``step_log`` is set. Solver failures end up in the status
    column.
    """
    cfg = cfg or SolverConfig()
    sys = build_system(tc)
    x0 = initial_conditions(tc)
    fp = flop_profile(sys)
    steps: list = []

    def base_row(name, res):
        row = dict.fromkeys(RESULT_COLUMNS)
        row.update(test_id=tc.test_id, benchmark=tc.benchmark, N=tc.N,
                   rel_tol=tc.rel_tol, abs_tol=tc.abs_tol, variant=name,
                   status=str(res.status), n_accepted=res.n_accepted,
                   n_failed=res.n_failed, t_final=tc.t_final)
        return row

    def add_steps(name, res):
        if step_log:
            lg = res.step_log
            steps.extend((tc.test_id, name, t, h, e, int(a))
                         for t, h, e, a in lg.records())

    ref = dp54_reference(sys, x0, 0.0, tc.t_final, _reference_config(cfg))
    rows = [base_row(REFERENCE, ref)]
    add_steps(REFERENCE, ref)

    runs = {}
    for name in variants:
        v = Variant.parse(name)
        policy = policy_for(v)
        vcfg = _variant_config(tc, cfg)
        local: list = []
        hook = None
        if tc.benchmark == "lco":
            def hook(t, h, x_n, out, _acc=local, _c=vcfg):
                if out.accepted:
                    _acc.append(real_local_error(x_n, out.x_next, h, _c.abs_tol, _c.rel_tol))
        res = solve(sys, x0, 0.0, tc.t_final, policy, vcfg, on_step=hook)
        runs[v.value] = res
        row = base_row(v.value, res)
        acc = res.step_log.err[res.step_log.accepted]
        if acc.size:
            row["mean_ebs"] = float(np.mean(acc))
        if local:
            row["mean_eanalytic"] = float(np.mean(local))
        if res.completed and ref.completed:
            row["final_error"] = normalized_final_error(ref.final_state, res.final_state, tc.N)
        if res.n_steps:
            rho = rho_from_counts(fp, tc.N, res.evaluations, res.n_steps, policy)
            row["rho"] = rho
            row["gamma"] = gamma_of(rho, r)
        rows.append(row)
        add_steps(v.value, res)

    dbl = runs.get(Variant.DOUBLE.value)
    if dbl is not None and dbl.completed:
        for row in rows[1:]:
            res = runs[row["variant"]]
            if res.completed:
                row["beta"] = dbl.n_steps / res.n_steps
                if row["gamma"] is not None:
                    row["capital_gamma"] = row["gamma"] / row["beta"]
    return rows, steps


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


_INT_COLS = {"test_id", "N", "n_accepted", "n_failed"}
_STR_COLS = {"benchmark", "variant", "status"}


def _parse_row(raw: dict) -> dict:
    out = {}
    for k in RESULT_COLUMNS:
        v = raw[k]
        if v == "" and k not in _STR_COLS:
            out[k] = None
        elif k in _INT_COLS:
            out[k] = int(v)
        elif k in _STR_COLS:
            out[k] = v
        else:
            out[k] = float(v)
    return out


@dataclass
class ResultSet:
    """Rows of a campaign, one per (test, solver), in write order."""

    rows: list = field(default_factory=list)
    variants: tuple = VARIANTS

    def test_ids(self) -> list[int]:
        return sorted({r["test_id"] for r in self.rows})

    def by_test(self) -> dict:
        out: dict = {}
        for r in self.rows:
            out.setdefault(r["test_id"], []).append(r)
        return out

    def rows_for(self, variant: str) -> list:
        return [r for r in self.rows if r["variant"] == variant]

    def benchmarks(self) -> list[str]:
        return list(dict.fromkeys(r["benchmark"] for r in self.rows))

    def for_benchmark(self, benchmark: str) -> "ResultSet":
        return ResultSet([r for r in self.rows if r["benchmark"] == benchmark], self.variants)

    def to_csv(self) -> str:
        buf = io.StringIO()
        write_results(buf, self.rows)
        return buf.getvalue()


def write_results(fh, rows, header: bool = True):
    w = csv.writer(fh, lineterminator="\n")
    if header:
        w.writerow(RESULT_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[k]) for k in RESULT_COLUMNS])


def read_results(path) -> ResultSet:
    """Load a results CSV, checking the header against :data:`RESULT_COLUMNS`."""
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
                raise SchemaError(f"{path}: header does not match the results schema")
            rows = [_parse_row(r) for r in reader]
    except (KeyError, ValueError) as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(f"{path}: malformed row ({exc})") from None
    variants = tuple(dict.fromkeys(r["variant"] for r in rows if r["variant"] != REFERENCE))
    return ResultSet(rows, variants or VARIANTS)


def _package_version() -> str:
    try:
        from importlib.metadata import version
        return version("artifact")
    except Exception:
        return "0+unknown"


def manifest_for(cases, variants, cfg: SolverConfig, r: float) -> dict:
    benches = sorted({c.benchmark for c in cases})
    return {
        "generator": "mixedstep.harness.generate_campaign",
        "code_version": _package_version(),
        "prng": CounterRng.NAME,
        "sobol": SOBOL_NAME,
        "sobol_skip": SOBOL_SKIP,
        "sobol_dims": {b: list(SOBOL_DIMS[b]) for b in benches},
        "reference": f"Dormand-Prince 5(4), binary64, rel=abs={REFERENCE_TOL}",
        "variants": list(variants),
        "r": r,
        "solver_config": asdict(cfg),
        "grid": {
            "benchmarks": benches,
            "sizes": sorted({c.N for c in cases}),
            "tolerances": sorted({c.rel_tol for c in cases}),
        },
        "cases": [c.to_dict() for c in cases],
    }


def _open(path, mode):
    try:
        return open(path, mode, newline="")
    except OSError as exc:
        raise CampaignIOError(f"cannot open {path}: {exc.strerror or exc}") from exc


def _resume(results_path, steplog_path, per_test: int):
    """Keep only fully written tests from a previous run and rewrite the files."""
    rs = read_results(results_path)
    done = {tid for tid, rows in rs.by_test().items() if len(rows) == per_test}
    kept = [r for r in rs.rows if r["test_id"] in done]
    with _open(results_path, "w") as fh:
        write_results(fh, kept)
    if steplog_path and os.path.exists(steplog_path):
        with _open(steplog_path, "r") as fh:
            lines = list(csv.reader(fh))
        with _open(steplog_path, "w") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(STEPLOG_COLUMNS)
            w.writerows(ln for ln in lines[1:] if ln and int(ln[0]) in done)
    return kept, done


def _job(args):
    return run_test(*args)


def run_campaign(cases, variants=VARIANTS, cfg: SolverConfig | None = None, *,
                 results_path=None, steplog_path=None, manifest_path=None,
                 jobs: int = 1, r: float = 0.5, progress=None) -> ResultSet:
    """Run every case and collect one row per (test, solver).

    With ``results_path`` rows are appended as each test finishes, in case
    order regardless of ``jobs``. An existing results file is resumed: tests
    with all rows present are skipped and partially written ones are redone.
    ``progress(tc, rows)`` is called after each test.
    """
    cases = list(cases)
    if not cases:
        raise EmptyInput("campaign has no test cases")
    variants = tuple(Variant.parse(v).value for v in variants)
    cfg = cfg or SolverConfig()
    per_test = 1 + len(variants)

    rows: list = []
    done: set = set()
    if results_path and os.path.exists(results_path):
        rows, done = _resume(results_path, steplog_path, per_test)
    elif results_path:
        with _open(results_path, "w") as fh:
            write_results(fh, [])
    if steplog_path and not (os.path.exists(steplog_path) and done):
        with _open(steplog_path, "w") as fh:
            csv.writer(fh, lineterminator="\n").writerow(STEPLOG_COLUMNS)
    if manifest_path:
        with _open(manifest_path, "w") as fh:
            json.dump(manifest_for(cases, variants, cfg, r), fh, indent=2, sort_keys=True)
            fh.write("\n")

    todo = [tc for tc in cases if tc.test_id not in done]
    args = [(tc, variants, cfg, r, steplog_path is not None) for tc in todo]
    if jobs > 1 and len(todo) > 1:
        pool = ProcessPoolExecutor(max_workers=jobs)
        outputs = pool.map(_job, args)
    else:
        pool = None
        outputs = map(_job, args)
    try:
        for tc, (trows, tsteps) in zip(todo, outputs):
            if results_path:
                with _open(results_path, "a") as fh:
                    write_results(fh, trows, header=False)
            if steplog_path:
                with _open(steplog_path, "a") as fh:
                    csv.writer(fh, lineterminator="\n").writerows(
                        [tid, name, _fmt(t), _fmt(h), _fmt(e), a] for tid, name, t, h, e, a in tsteps)
            rows.extend(trows)
            if progress is not None:
                progress(tc, trows)
    finally:
        if pool is not None:
            pool.shutdown(cancel_futures=True)

    order = {tc.test_id: k for k, tc in enumerate(cases)}
    rows.sort(key=lambda r: order.get(r["test_id"], len(order)))
    return ResultSet(rows, variants)


def select_complete(rs: ResultSet) -> set:
    """Test ids whose every row, reference included, is Completed."""
    per_test = 1 + len(rs.variants)
    out = set()
    for tid, rows in rs.by_test().items():
        if len(rows) == per_test and all(r["status"] == Status.COMPLETED.value for r in rows):
            out.add(tid)
    return out


def complete_rows(rs: ResultSet) -> list:
    """Variant rows of complete tests; test ids are matched within each benchmark."""
    out = []
    for b in rs.benchmarks():
        sub = rs.for_benchmark(b)
        keep = select_complete(sub)
        out += [r for r in sub.rows if r["test_id"] in keep and r["variant"] != REFERENCE]
    return out


def success_rates(rs: ResultSet) -> dict:
    """``{solver: (completed, total)}`` over every row of ``rs``."""
    out: dict = {}
    for r in rs.rows:
        ok, n = out.get(r["variant"], (0, 0))
        out[r["variant"]] = (ok + (r["status"] == Status.COMPLETED.value), n + 1)
    return out


def beta_values(rs: ResultSet, variant: str) -> np.ndarray:
    return np.array([r["beta"] for r in complete_rows(rs)
                     if r["variant"] == variant and r["beta"] is not None], dtype=np.float64)


@dataclass(frozen=True)
class DistributionSummary:
    count: int
    min: float
    p1: float
    p5: float
    q1: float
    median: float
    q3: float
    p95: float
    p99: float
    max: float

    def five_number(self) -> tuple:
        """(min, q1, median, q3, max)."""
        return (self.min, self.q1, self.median, self.q3, self.max)

    def box(self) -> dict:
        """Box-plot parameters: box at the quartiles, whiskers at p1 and p99."""
        return {"whislo": self.p1, "q1": self.q1, "med": self.median,
                "q3": self.q3, "whishi": self.p99}


_QUANTILES = (0, 1, 5, 25, 50, 75, 95, 99, 100)


def summarize(values) -> DistributionSummary:
    """Order statistics with linear-interpolation percentiles."""
    v = np.asarray(list(values), dtype=np.float64).ravel()
    if v.size == 0:
        raise EmptyInput("cannot summarize an empty sample")
    q = np.percentile(v, _QUANTILES, method="linear")
    return DistributionSummary(int(v.size), *(float(x) for x in q))
