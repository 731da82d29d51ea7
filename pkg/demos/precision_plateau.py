"""Final error of each variant on one oscillator test as the tolerance tightens.

Single stops improving once rounding in binary32 dominates the truncation
error; the mixed variants keep tracking Double.

    python3 demos/precision_plateau.py [N]
"""
import math
import sys

from mixedstep.harness import TestCase, VARIANTS, run_test
from mixedstep.solver import SolverConfig

N = int(sys.argv[1]) if len(sys.argv) > 1 else 50
cfg = SolverConfig().without_time_limits()

print(f"{'tol':>8} " + " ".join(f"{v:>10}" for v in VARIANTS))
for k in range(3, 9):
    tol = 10.0**-k
    tc = TestCase(0, "lco", N, tol, tol, 10 * math.pi)
    rows, _ = run_test(tc, cfg=cfg)
    errs = {r["variant"]: r["final_error"] for r in rows[1:]}
    cells = [f"{errs[v]:10.2e}" if errs[v] is not None else f"{'failed':>10}" for v in VARIANTS]
    print(f"{tol:8.0e} " + " ".join(cells))
